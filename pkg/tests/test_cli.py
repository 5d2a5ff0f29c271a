import json
import os

import numpy as np
import pytest

from toposeg import BinaryMask, LikelihoodMap, save_raster, signed_f32r_array
from toposeg.cli import cli_main
from toposeg.synth import read_manifest


@pytest.fixture
def fixtures(tmp_path):
    """ring (0.75 on 0), block, and block-plus-spurious-blob rasters with a
    matching ground truth each."""
    paths = {}

    ring = np.zeros((16, 16))
    ring[4:9, 4:9] = 0.75
    ring[5:8, 5:8] = 0.0
    paths["ring"] = tmp_path / "ring.f32r"
    save_raster(LikelihoodMap(ring), paths["ring"])
    paths["ring_gt"] = tmp_path / "ring_gt.pgm"
    save_raster(BinaryMask((ring > 0).astype(np.uint8)).as_likelihood(), paths["ring_gt"])

    block = np.zeros((8, 8))
    block[2:5, 2:5] = 1.0
    paths["block"] = tmp_path / "block.f32r"
    save_raster(LikelihoodMap(block), paths["block"])
    paths["block_gt"] = tmp_path / "block_gt.pgm"
    save_raster(BinaryMask((block > 0).astype(np.uint8)).as_likelihood(), paths["block_gt"])

    blob = block.copy()
    blob[6, 6] = 0.25
    paths["blob"] = tmp_path / "blob.f32r"
    save_raster(LikelihoodMap(blob), paths["blob"])

    return {k: str(v) for k, v in paths.items()}


def run(capsys, *argv):
    code = cli_main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestBetti:
    def test_ring(self, capsys, fixtures):
        code, out, _ = run(capsys, "betti", "--mask", fixtures["ring"], "--threshold", "0.5")
        assert code == 0
        assert out == "b0=1 b1=1\n"

    def test_threshold_above_ring_level(self, capsys, fixtures):
        code, out, _ = run(capsys, "betti", "--mask", fixtures["ring"], "--threshold", "0.9")
        assert code == 0
        assert out == "b0=0 b1=0\n"


class TestDiagram:
    def test_stdout_output(self, capsys, fixtures):
        code, out, _ = run(capsys, "diagram", "--input", fixtures["ring"])
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "dim,birth,death,birth_row,birth_col,death_row,death_col"
        assert any(line.startswith("0,0.75,0,") for line in lines)
        assert any(line.startswith("1,0.75,0,") for line in lines)

    def test_file_output_and_dims_filter(self, capsys, fixtures, tmp_path):
        out_path = str(tmp_path / "d.csv")
        code, out, _ = run(
            capsys, "diagram", "--input", fixtures["ring"], "--out", out_path, "--dims", "1"
        )
        assert code == 0 and out == ""
        rows = open(out_path).read().strip().splitlines()[1:]
        assert rows and all(row.startswith("1,") for row in rows)


class TestLoss:
    def test_perfect_prediction(self, capsys, fixtures):
        code, out, _ = run(
            capsys, "loss", "--pred", fixtures["block_gt"], "--gt", fixtures["block_gt"]
        )
        assert code == 0
        assert out == '{"topo_loss": 0.0}\n'

    def test_ring_loss_and_gradient(self, capsys, fixtures, tmp_path):
        grad_path = str(tmp_path / "g.f32r")
        code, out, _ = run(
            capsys,
            "loss",
            "--pred",
            fixtures["ring"],
            "--gt",
            fixtures["ring_gt"],
            "--grad-out",
            grad_path,
        )
        assert code == 0
        assert json.loads(out)["topo_loss"] == pytest.approx(0.125, abs=1e-9)
        grad = signed_f32r_array(open(grad_path, "rb").read())
        assert grad.shape == (16, 16)
        assert np.count_nonzero(grad) == 2
        assert np.allclose(grad[grad != 0], -0.5)

    def test_lambda_scales(self, capsys, fixtures):
        _, out1, _ = run(capsys, "loss", "--pred", fixtures["ring"], "--gt", fixtures["ring_gt"])
        _, out2, _ = run(
            capsys,
            "loss",
            "--pred",
            fixtures["ring"],
            "--gt",
            fixtures["ring_gt"],
            "--lambda",
            "2",
        )
        assert json.loads(out2)["topo_loss"] == pytest.approx(
            2 * json.loads(out1)["topo_loss"], abs=1e-12
        )

    def test_multiple_pairs_with_jobs(self, capsys, fixtures, tmp_path):
        grad_dir = str(tmp_path / "grads")
        code, out, _ = run(
            capsys,
            "loss",
            "--pred",
            fixtures["ring"],
            fixtures["blob"],
            "--gt",
            fixtures["ring_gt"],
            fixtures["block_gt"],
            "--jobs",
            "2",
            "--grad-out",
            grad_dir,
        )
        assert code == 0
        lines = [json.loads(line) for line in out.strip().splitlines()]
        assert len(lines) == 2
        assert lines[0]["pred"] == fixtures["ring"]
        assert lines[1]["pred"] == fixtures["blob"]
        assert sorted(os.listdir(grad_dir)) == ["blob.grad.f32r", "ring.grad.f32r"]

    def test_mismatched_pair_counts_is_usage_error(self, capsys, fixtures):
        code, _, err = run(
            capsys, "loss", "--pred", fixtures["ring"], "--gt", fixtures["ring_gt"],
            fixtures["block_gt"],
        )
        assert code == 2
        assert "usage error" in err


class TestMetrics:
    def test_report_json(self, capsys, fixtures):
        code, out, _ = run(
            capsys, "metrics", "--pred", fixtures["block_gt"], "--gt", fixtures["block_gt"]
        )
        assert code == 0
        assert json.loads(out) == {
            "dsc": 1.0,
            "asd_mm": 0.0,
            "hd95_mm": 0.0,
            "betti0_error": 0.0,
        }

    def test_spacing_flag(self, capsys, fixtures):
        code, out, _ = run(
            capsys,
            "metrics",
            "--pred",
            fixtures["blob"],
            "--gt",
            fixtures["block_gt"],
            "--spacing",
            "2",
            "3",
        )
        assert code == 0
        report = json.loads(out)
        assert report["dsc"] == 1.0  # blob sits below the 0.5 threshold
        assert report["betti0_error"] == 0.0

    def test_multiple_pairs(self, capsys, fixtures):
        code, out, _ = run(
            capsys,
            "metrics",
            "--pred",
            fixtures["ring_gt"],
            fixtures["block_gt"],
            "--gt",
            fixtures["ring_gt"],
            fixtures["block_gt"],
        )
        assert code == 0
        lines = [json.loads(line) for line in out.strip().splitlines()]
        assert [line["dsc"] for line in lines] == [1.0, 1.0]


class TestSynth:
    def test_dataset_generation(self, capsys, tmp_path):
        out_dir = str(tmp_path / "data")
        code, out, _ = run(
            capsys,
            "synth",
            "--seed",
            "21",
            "--size",
            "96",
            "--components",
            "2",
            "--holes",
            "1",
            "--breaks",
            "1",
            "--out-dir",
            out_dir,
            "--count",
            "2",
        )
        assert code == 0
        records = read_manifest(os.path.join(out_dir, "manifest.jsonl"))
        assert [r["id"] for r in records] == ["case_0000", "case_0001"]
        for record in records:
            for key in ("image_path", "gt_path", "degraded_path"):
                assert os.path.exists(record[key])
        assert [json.loads(line)["id"] for line in out.strip().splitlines()] == [
            "case_0000",
            "case_0001",
        ]

    def test_infeasible_spec_is_data_error(self, capsys, tmp_path):
        code, _, err = run(
            capsys,
            "synth",
            "--seed",
            "1",
            "--size",
            "16",
            "--components",
            "3",
            "--out-dir",
            str(tmp_path / "x"),
        )
        assert code == 1
        assert err.startswith("ERROR INFEASIBLE_SPEC:")

    def test_invalid_spec_is_usage_error(self, capsys, tmp_path):
        code, _, err = run(
            capsys,
            "synth",
            "--seed",
            "1",
            "--components",
            "1",
            "--holes",
            "2",
            "--out-dir",
            str(tmp_path / "x"),
        )
        assert code == 2
        assert "usage error" in err


class TestErrorMapping:
    def test_missing_file(self, capsys):
        code, _, err = run(capsys, "betti", "--mask", "/nonexistent/path.f32r")
        assert code == 1
        assert err.startswith("ERROR IO_ERROR:")

    def test_malformed_raster(self, capsys, tmp_path):
        bad = tmp_path / "bad.pgm"
        bad.write_bytes(b"P5\n4 4\n999\n" + bytes(16))
        code, _, err = run(capsys, "betti", "--mask", str(bad))
        assert code == 1
        assert err.startswith("ERROR MALFORMED_HEADER:")

    def test_shape_mismatch(self, capsys, fixtures):
        code, _, err = run(
            capsys, "loss", "--pred", fixtures["ring"], "--gt", fixtures["block_gt"]
        )
        assert code == 1
        assert err.startswith("ERROR SHAPE_MISMATCH:")

    def test_unknown_subcommand_exits_2(self, capsys):
        assert run(capsys, "bogus")[0] == 2

    def test_missing_required_flag_exits_2(self, capsys):
        assert run(capsys, "betti")[0] == 2

    def test_bad_dims_exits_2(self, capsys, fixtures):
        code, _, _ = run(
            capsys, "diagram", "--input", fixtures["ring"], "--dims", "0,2"
        )
        assert code == 2


class TestDeterminism:
    def test_outputs_byte_identical_across_runs(self, capsys, fixtures, tmp_path):
        args_sets = [
            ("diagram", "--input", fixtures["ring"]),
            ("loss", "--pred", fixtures["ring"], "--gt", fixtures["ring_gt"]),
            ("metrics", "--pred", fixtures["ring"], "--gt", fixtures["ring_gt"]),
            ("betti", "--mask", fixtures["ring"]),
        ]
        for argv in args_sets:
            first = run(capsys, *argv)
            second = run(capsys, *argv)
            assert first == second

    def test_synth_rasters_byte_identical(self, capsys, tmp_path):
        dirs = [str(tmp_path / "a"), str(tmp_path / "b")]
        for d in dirs:
            code, _, _ = run(
                capsys, "synth", "--seed", "33", "--size", "64", "--components", "1",
                "--holes", "1", "--out-dir", d,
            )
            assert code == 0
        for name in ("case_0000_image.f32r", "case_0000_gt.pgm", "case_0000_degraded.f32r"):
            a = open(os.path.join(dirs[0], name), "rb").read()
            b = open(os.path.join(dirs[1], name), "rb").read()
            assert a == b
