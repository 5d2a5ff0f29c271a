import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // service-backed suites spawn the Python service and train small models
    testTimeout: 180_000,
    hookTimeout: 120_000,
    // a single worker keeps the wasm backend and spawned services predictable
    pool: "forks",
    poolOptions: { forks: { singleFork: true } },
  },
});
