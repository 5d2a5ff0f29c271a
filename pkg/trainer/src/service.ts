/** Spawns the segmentation service as a child process for tests and the
 * experiment runner. */

import { ChildProcess, spawn } from "node:child_process";
import { createServer } from "node:net";

import { ServiceClient } from "./client.js";

export interface RunningService {
  url: string;
  client: ServiceClient;
  stop(): Promise<void>;
}

async function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = createServer();
    srv.once("error", reject);
    srv.listen(0, "127.0.0.1", () => {
      const addr = srv.address();
      if (addr === null || typeof addr === "string") {
        reject(new Error("could not allocate a port"));
        return;
      }
      srv.close(() => resolve(addr.port));
    });
  });
}

export async function startService(timeoutMs = 30_000): Promise<RunningService> {
  const port = await freePort();
  const url = `http://127.0.0.1:${port}`;
  const proc: ChildProcess = spawn(
    "python3",
    ["-m", "toposeg", "serve", "--host", "127.0.0.1", "--port", String(port)],
    { stdio: ["ignore", "ignore", "pipe"] },
  );
  let stderr = "";
  proc.stderr?.on("data", (chunk) => {
    stderr += String(chunk);
  });
  const client = new ServiceClient(url);
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (proc.exitCode !== null) {
      throw new Error(`service exited with code ${proc.exitCode}: ${stderr.slice(0, 500)}`);
    }
    if (await client.healthy()) {
      return {
        url,
        client,
        stop: () =>
          new Promise<void>((resolve) => {
            proc.once("exit", () => resolve());
            proc.kill("SIGTERM");
            setTimeout(() => proc.kill("SIGKILL"), 3000).unref();
          }),
      };
    }
    await new Promise((r) => setTimeout(r, 100));
  }
  proc.kill("SIGKILL");
  throw new Error(`service did not become healthy within ${timeoutMs} ms: ${stderr.slice(0, 500)}`);
}
