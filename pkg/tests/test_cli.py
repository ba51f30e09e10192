import shutil
from pathlib import Path

import pytest

from scenecast import imageio
from scenecast.cli import EXIT_DATA, EXIT_DEGENERATE, EXIT_OK, EXIT_USAGE, main
from scenecast.metrics import parse_report

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(scope="module")
def box_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("box")
    assert main(["simgen", str(CONFIGS / "moving_box.cfg"), str(out)]) == EXIT_OK
    return out


def files(d):
    return {p.name: p.read_bytes() for p in sorted(Path(d).iterdir())}


class TestSimgen:
    def test_writes_dataset(self, box_dataset, capsys):
        assert len((box_dataset / "manifest.txt").read_text().splitlines()) == 6
        assert (box_dataset / "frame_0005.ppm").exists()

    def test_seed_twice_identical(self, tmp_path):
        for d in ("a", "b"):
            assert main(["simgen", str(CONFIGS / "moving_box.cfg"), str(tmp_path / d), "--seed", "7"]) == 0
        assert files(tmp_path / "a") == files(tmp_path / "b")
        assert "seed = 7" in (tmp_path / "a" / "scene.cfg").read_text()

    def test_invalid_key_names_line(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text((CONFIGS / "moving_box.cfg").read_text().replace("fog_distance", "fog_dist"))
        assert main(["simgen", str(cfg), str(tmp_path / "o")]) == EXIT_DATA
        err = capsys.readouterr().err
        assert "line 10" in err and "fog_dist" in err

    def test_missing_config(self, tmp_path):
        assert main(["simgen", str(tmp_path / "none.cfg"), str(tmp_path / "o")]) == EXIT_DATA


class TestForecast:
    def test_outputs_and_report(self, box_dataset, tmp_path, capsys):
        out = tmp_path / "f"
        assert main(["forecast", str(box_dataset), "--t", "2", "--horizon", "2", "--out", str(out),
                     "--dump-intermediate"]) == EXIT_OK
        names = set(files(out))
        for n in ("frame_0003.ppm", "frame_0004.ppm", "depth_0003.pfm", "ego_0004.txt", "report.txt",
                  "weight_curr_0003.pfm", "coverage_prev_0004.pfm", "flow_curr_0003.bin"):
            assert n in names
        rows = parse_report((out / "report.txt").read_text())
        assert [r["step"] for r in rows] == [1, 2]
        assert rows[0]["ssim"] > 0.95 and rows[0]["epe3d"] < 1e-3
        assert "pose_rot" in rows[0]
        assert capsys.readouterr().out == (out / "report.txt").read_text()
        flow = imageio.read_flow(out / "flow_curr_0003.bin")
        assert flow.shape[1] == 3 and len(flow) > 128 * 256

    def test_zero_horizon_identity_view_is_usage_error(self, box_dataset, tmp_path):
        assert main(["forecast", str(box_dataset), "--t", "2", "--horizon", "0",
                     "--out", str(tmp_path)]) == EXIT_USAGE

    def test_view_synthesis_only(self, box_dataset, tmp_path):
        out = tmp_path / "v"
        code = main(["forecast", str(box_dataset), "--t", "2", "--horizon", "0", "--out", str(out),
                     "--view-offset", "1 0 0 0 0.2 0 0"])
        assert code == EXIT_OK
        rows = parse_report((out / "report.txt").read_text())
        assert rows[0]["step"] == 0 and rows[0]["ssim"] > 0.8

    def test_bad_flags(self, box_dataset, tmp_path):
        base = ["forecast", str(box_dataset), "--out", str(tmp_path)]
        assert main(base) == EXIT_USAGE
        assert main(base + ["--t", "2", "--schedule", "1,2"]) == EXIT_USAGE
        assert main(base + ["--t", "2", "--view-offset", "1 0 0"]) == EXIT_USAGE
        assert main(base + ["--t", "2", "--corr", "magic"]) == EXIT_USAGE

    def test_missing_frames_are_data_errors(self, box_dataset, tmp_path):
        base = ["forecast", str(box_dataset), "--out", str(tmp_path)]
        assert main(base + ["--t", "0"]) == EXIT_DATA
        assert main(base + ["--t", "4", "--horizon", "3"]) == EXIT_DATA
        assert main(["forecast", str(tmp_path / "nope"), "--t", "1", "--out", str(tmp_path)]) == EXIT_DATA

    def test_degenerate_registration_exit_code(self, tmp_path):
        cfg = tmp_path / "sky.cfg"
        text = (CONFIGS / "moving_box.cfg").read_text().replace("ground_plane = true", "ground_plane = false")
        text = text.split("[box wall]")[0]
        cfg.write_text(text)
        assert main(["simgen", str(cfg), str(tmp_path / "d")]) == EXIT_OK
        assert main(["forecast", str(tmp_path / "d"), "--t", "1", "--out", str(tmp_path / "o")]) == EXIT_DEGENERATE

    def test_no_omf_scores_worse(self, box_dataset, tmp_path):
        scores = {}
        for tag, extra in (("full", []), ("no_omf", ["--no-omf"])):
            out = tmp_path / tag
            assert main(["forecast", str(box_dataset), "--t", "2", "--out", str(out)] + extra) == 0
            scores[tag] = parse_report((out / "report.txt").read_text())[0]["ssim"]
        assert scores["full"] > scores["no_omf"]


class TestEvaluate:
    def test_pred_equals_gt(self, box_dataset, tmp_path, capsys):
        pred = tmp_path / "pred"
        pred.mkdir()
        for i in range(6):
            shutil.copy(box_dataset / f"frame_{i:04d}.ppm", pred)
        assert main(["evaluate", str(pred), str(box_dataset), "--out", str(tmp_path / "r.txt")]) == 0
        rows = parse_report((tmp_path / "r.txt").read_text())
        assert len(rows) == 6
        assert all(r["ssim"] == 1.0 and r["l1"] == 0 for r in rows)

    def test_subset_against_dataset(self, box_dataset, tmp_path):
        pred = tmp_path / "pred"
        pred.mkdir()
        shutil.copy(box_dataset / "frame_0003.ppm", pred)
        assert main(["evaluate", str(pred), str(box_dataset)]) == 0

    def test_shifted_lists_rejected(self, box_dataset, tmp_path):
        pred, gt = tmp_path / "pred", tmp_path / "gt"
        pred.mkdir()
        gt.mkdir()
        for i in range(3):
            shutil.copy(box_dataset / f"frame_{i:04d}.ppm", gt / f"frame_{i:04d}.ppm")
            shutil.copy(box_dataset / f"frame_{i:04d}.ppm", pred / f"frame_{i + 1:04d}.ppm")
        assert main(["evaluate", str(pred), str(gt)]) == EXIT_DATA

    def test_missing_in_dataset_rejected(self, box_dataset, tmp_path):
        pred = tmp_path / "pred"
        pred.mkdir()
        shutil.copy(box_dataset / "frame_0001.ppm", pred / "frame_0042.ppm")
        assert main(["evaluate", str(pred), str(box_dataset)]) == EXIT_DATA

    def test_empty_pred(self, box_dataset, tmp_path):
        assert main(["evaluate", str(tmp_path), str(box_dataset)]) == EXIT_DATA


def test_help_documents_flags(capsys):
    assert main(["forecast", "--help"]) == 0
    text = capsys.readouterr().out
    for flag in ("--t", "--horizon", "--view-offset", "--no-emf", "--no-omf", "--fixed-depth", "--corr",
                 "--depth-noise", "--noise-seed", "--schedule", "--compositing", "--base-radius",
                 "--threads", "--dump-intermediate"):
        assert flag in text


def test_module_entry_point():
    import subprocess
    import sys
    out = subprocess.run([sys.executable, "-m", "scenecast.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "simgen" in out.stdout
