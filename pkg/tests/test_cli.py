import json

import pandas as pd
import pytest

from cli import plot_stats
from cli.pcbsample import EXIT_CHECK, EXIT_DATA, EXIT_OK, EXIT_USAGE, comparison_seeds, main
from core.kitti_io import RECORD_BYTES, read_labels, write_kitti_bin, write_labels
from core.synth import SynthConfig, generate_long_tail


@pytest.fixture
def scan(tmp_path):
    cloud = generate_long_tail(SynthConfig(n_points=3000, seed=13))
    bin_path = write_kitti_bin(tmp_path / "scan.bin", cloud)
    labels = (cloud.planar_distance() // 10).astype(int)
    label_path = write_labels(tmp_path / "scan.label", labels)
    return bin_path, label_path, len(cloud)


class TestSample:
    def test_ratio_on_synthetic_scan(self, tmp_path):
        out = tmp_path / "out.bin"
        code = main(["sample", "--synth", "n=100000", "--method", "pcb-rs", "--ratio", "0.25",
                     "--grid", "64x64x16", "--seed", "7", "--out", str(out)])
        assert code == EXIT_OK
        assert out.stat().st_size == 25000 * RECORD_BYTES
        sidecar = json.loads((tmp_path / "out.json").read_text())
        assert sidecar["method"] == "PCB-RS"
        assert sidecar["m"] == 25000 and sidecar["seed"] == 7 and sidecar["seed_source"] == "flag"
        assert sidecar["grid"]["n_radial"] == 64 and sidecar["grid"]["rho_max"] == "max"
        assert sidecar["input"]["synth"]["n_points"] == 100000

    def test_same_seed_same_bytes(self, scan, tmp_path):
        bin_path, _, _ = scan
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        for out in (a, b):
            assert main(["sample", "--in", str(bin_path), "--method", "rs", "--m", "1024",
                         "--seed", "1", "--out", str(out)]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()
        assert len(a.read_bytes()) == 1024 * RECORD_BYTES

    def test_labels_follow_points(self, scan, tmp_path):
        bin_path, label_path, _ = scan
        out = tmp_path / "lab.bin"
        assert main(["sample", "--in", str(bin_path), "--labels", str(label_path), "--method", "fps",
                     "--m", "100", "--seed", "0", "--out", str(out)]) == EXIT_OK
        labels = read_labels(tmp_path / "lab.label", n_points=100)
        assert labels.min() >= 0 and labels.max() <= 8

    def test_fps_needs_m_at_most_n(self, scan, tmp_path):
        bin_path, _, n = scan
        out = tmp_path / "fps.bin"
        code = main(["sample", "--in", str(bin_path), "--method", "fps", "--m", str(n + 1),
                     "--seed", "0", "--out", str(out)])
        assert code == EXIT_DATA
        assert not out.exists() and not (tmp_path / "fps.json").exists()

    def test_missing_input_is_a_data_error(self, tmp_path, capsys):
        code = main(["sample", "--in", str(tmp_path / "missing.bin"), "--m", "10", "--seed", "0",
                     "--out", str(tmp_path / "o.bin")])
        assert code == EXIT_DATA
        assert "missing.bin" in capsys.readouterr().err

    def test_truncated_input(self, tmp_path):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"\x00" * 17)
        assert main(["sample", "--in", str(bad), "--m", "1", "--seed", "0",
                     "--out", str(tmp_path / "o.bin")]) == EXIT_DATA

    @pytest.mark.parametrize("argv", [
        ["sample", "--synth", "n=1000", "--m", "10", "--ratio", "0.5", "--out", "x.bin"],
        ["sample", "--m", "10", "--out", "x.bin"],
        ["sample", "--synth", "n=1000", "--ratio", "1.5", "--out", "x.bin"],
        ["sample", "--synth", "n=1000", "--m", "10"],
    ])
    def test_usage_errors(self, argv, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert main(argv + ["--seed", "0"]) == EXIT_USAGE
        assert not (tmp_path / "x.bin").exists()

    def test_unknown_flag_exits_with_usage_code(self):
        with pytest.raises(SystemExit) as err:
            main(["sample", "--bogus"])
        assert err.value.code == EXIT_USAGE

    def test_random_seed_is_printed_and_recorded(self, tmp_path, capsys):
        out = tmp_path / "r.bin"
        assert main(["sample", "--synth", "n=2000", "--method", "rs", "--m", "10", "--out", str(out)]) == EXIT_OK
        sidecar = json.loads((tmp_path / "r.json").read_text())
        assert sidecar["seed_source"] == "random"
        assert f"seed: {sidecar['seed']}" in capsys.readouterr().err

    def test_replay_reproduces_output(self, scan, tmp_path):
        bin_path, _, _ = scan
        first = tmp_path / "first.bin"
        assert main(["sample", "--in", str(bin_path), "--method", "pcb-rs", "--ratio", "0.1",
                     "--grid", "8x8x4", "--seed", "5", "--out", str(first)]) == EXIT_OK
        again = tmp_path / "again.bin"
        assert main(["sample", "--replay", str(tmp_path / "first.json"), "--out", str(again)]) == EXIT_OK
        assert again.read_bytes() == first.read_bytes()

    def test_replay_rejects_changed_input(self, scan, tmp_path):
        bin_path, _, _ = scan
        first = tmp_path / "first.bin"
        assert main(["sample", "--in", str(bin_path), "--m", "50", "--seed", "5", "--out", str(first)]) == EXIT_OK
        bin_path.write_bytes(bin_path.read_bytes()[:-RECORD_BYTES])
        assert main(["sample", "--replay", str(tmp_path / "first.json"),
                     "--out", str(tmp_path / "again.bin")]) == EXIT_DATA

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"method": "rs", "m": 32, "seed": 3, "n_radial": 8, "synth": {"n": 500}}))
        out = tmp_path / "c.bin"
        assert main(["sample", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        sidecar = json.loads((tmp_path / "c.json").read_text())
        assert (sidecar["method"], sidecar["m"], sidecar["seed"]) == ("RS", 32, 3)
        assert sidecar["grid"]["n_radial"] == 8

    def test_config_file_with_unknown_key(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"methd": "rs"}))
        assert main(["sample", "--config", str(cfg), "--synth", "n=100", "--m", "5",
                     "--out", str(tmp_path / "o.bin")]) == EXIT_DATA


class TestStats:
    def test_default_bands(self, scan, tmp_path):
        bin_path, _, n = scan
        out = tmp_path / "h.csv"
        assert main(["stats", "--in", str(bin_path), "--out", str(out), "--seed", "0"]) == EXIT_OK
        df = pd.read_csv(out)
        assert list(df.columns) == ["band_lo_m", "band_hi_m", "count", "fraction"]
        assert df["band_lo_m"].tolist() == [0, 10, 20, 30, 40, 50]
        assert df["count"].sum() == n

    def test_custom_edges_to_stdout(self, scan, capsys):
        bin_path, _, _ = scan
        assert main(["stats", "--in", str(bin_path), "--edges", "0,5,10", "--seed", "0"]) == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 1 + 3

    def test_json_matches_csv(self, scan, tmp_path):
        bin_path, _, _ = scan
        assert main(["stats", "--in", str(bin_path), "--out", str(tmp_path / "h.csv"), "--seed", "0"]) == EXIT_OK
        assert main(["stats", "--in", str(bin_path), "--out", str(tmp_path / "h.json"),
                     "--format", "json", "--seed", "0"]) == EXIT_OK
        csv_rows = pd.read_csv(tmp_path / "h.csv")
        json_rows = json.loads((tmp_path / "h.json").read_text())
        assert [r["count"] for r in json_rows] == csv_rows["count"].tolist()
        assert [r["fraction"] for r in json_rows] == pytest.approx(csv_rows["fraction"].tolist(), rel=1e-12)
        assert json_rows[-1]["band_hi_m"] is None

    def test_compare(self, tmp_path, capsys):
        out = tmp_path / "h.csv"
        assert main(["stats", "--synth", "n=20000", "--compare", "--ratio", "0.0625", "--seeds", "3",
                     "--grid", "16x16x4", "--seed", "2", "--out", str(out), "--threads", "2"]) == EXIT_OK
        report = pd.read_csv(tmp_path / "h_uniformity.csv")
        assert set(report["method"]) == {"RS", "PCB-RS"}
        assert (report["n_seeds"] == 3).all() and (report["m"] == 1250).all()
        assert "cv_bins" in capsys.readouterr().err

    def test_bad_edges(self, scan):
        bin_path, _, _ = scan
        assert main(["stats", "--in", str(bin_path), "--edges", "0,20,10", "--seed", "0"]) == EXIT_DATA


class TestBenchAndLossCheck:
    def test_small_bench(self, tmp_path, capsys):
        out = tmp_path / "t.csv"
        assert main(["bench", "--synth", "n=3000", "--sizes", "512,128", "--repeats", "2",
                     "--seed", "0", "--out", str(out)]) == EXIT_OK
        assert "(512->128)x2" in capsys.readouterr().out
        assert set(pd.read_csv(out)["method"]) == {"RS", "PCB-RS", "FPS"}

    @pytest.mark.parametrize("preset", ["table4", "cascades"])
    def test_cascade_preset(self, preset, tmp_path, capsys):
        out = tmp_path / "t.csv"
        assert main(["bench", "--preset", preset, "--repeats", "1", "--methods", "rs",
                     "--synth", "n=5000", "--seed", "0", "--out", str(out)]) == EXIT_OK
        text = capsys.readouterr().out
        assert "(4096->1024)x1" in text and "(4096->1024->256->64->16)x1" in text
        frame = pd.read_csv(out)
        assert len(frame) == 4
        assert (frame["runs"] == 5).all()

    def test_bench_needs_a_cascade(self):
        assert main(["bench", "--seed", "0"]) == EXIT_USAGE

    def test_loss_check_passes(self, capsys):
        assert main(["loss-check", "--seed", "0", "--trials", "20"]) == EXIT_OK
        assert "weighted_ce" in capsys.readouterr().out

    def test_loss_check_is_deterministic(self, capsys):
        assert main(["loss-check", "--trials", "1000", "--seed", "3"]) == EXIT_OK
        first = capsys.readouterr().out
        assert main(["loss-check", "--trials", "1000", "--seed", "3"]) == EXIT_OK
        assert capsys.readouterr().out == first

    def test_loss_check_failure_exit_code(self, capsys):
        # an impossible tolerance turns every comparison into a failure
        assert main(["loss-check", "--seed", "0", "--trials", "2", "--rtol", "0"]) == EXIT_CHECK


def test_comparison_seeds_are_derived():
    assert comparison_seeds(4, 3) == comparison_seeds(4, 3)
    assert len(set(comparison_seeds(4, 50))) == 50


def test_plot_stats_writes_png(scan, tmp_path):
    bin_path, _, _ = scan
    table = tmp_path / "h.csv"
    assert main(["stats", "--in", str(bin_path), "--out", str(table), "--seed", "0"]) == EXIT_OK
    assert plot_stats.main([str(table)]) == 0
    png = tmp_path / "h.png"
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
