import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from isacsim.cli import main

TRACE = """# isac-trace v1; power_unit=linear; frame_rate_fps=480
"""


def make_trace(path: Path, n_frames=300, fd_hz=400.0):
    lam = 299792458.0 / 28e9
    lines = [TRACE.strip()]
    for i in range(n_frames):
        t = i / 480.0
        phase = 2 * math.pi * fd_hz * t
        lines.append(f"{t}, 1e-12, 1e-8, 90.0, 10.0, 85.0, -170.0, {phase}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_csv(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


class TestGenerate:
    def test_writes_cluster_and_cir_tables(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("[generation]\nseed = 3\n", encoding="utf-8")
        out = tmp_path / "out"
        rc = main(["generate", "--config", str(cfg), "--drops", "2",
                   "--out", str(out), "--dump-rays", "--cfr"])
        assert rc == 0
        clusters = read_csv(out / "clusters_drop0000.csv")
        assert set(clusters[0].keys()) == {
            "index", "delay_s", "power_lin", "power_db_rel_max", "kind",
        }
        assert any(row["kind"] == "target" for row in clusters)
        assert (out / "rays_drop0001.csv").exists()
        assert (out / "cir_drop0000.csv").exists()
        assert (out / "effective_config.ini").exists()
        sidecar = json.loads((out / "cfr_drop0000.json").read_text())
        raw = np.fromfile(out / "cfr_drop0000.bin", dtype="<f8")
        assert raw.size == sidecar["shape"][0] * sidecar["shape"][1] * 2

    def test_cluster_powers_normalized_prior_to_prune(self, tmp_path):
        out = tmp_path / "out"
        rc = main(["generate", "--out", str(out)])
        assert rc == 0
        rows = read_csv(out / "clusters_drop0000.csv")
        total = sum(float(r["power_lin"]) for r in rows)
        assert total <= 1.0 + 1e-9  # pruning removes, never renormalizes


class TestIngestRays:
    def test_valid_trace(self, tmp_path, capsys):
        trace = make_trace(tmp_path / "t.csv", n_frames=5)
        assert main(["ingest-rays", "--in", str(trace), "--validate"]) == 0
        assert "5 frames" in capsys.readouterr().out

    def test_malformed_trace_exit_2(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("not a trace\n", encoding="utf-8")
        assert main(["ingest-rays", "--in", str(bad), "--validate"]) == 2


class TestEvalComm:
    def test_small_run(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text(
            "[generation]\nseed = 4\n[evaluation]\nn_subcarriers = 96\n"
            "frame_symbols = 15\n",
            encoding="utf-8",
        )
        out = tmp_path / "out"
        rc = main(["eval-comm", "--config", str(cfg), "--snr", "6,10",
                   "--drops", "2", "--out", str(out)])
        assert rc == 0
        rows = read_csv(out / "ber_vs_snr.csv")
        assert {r["channel"] for r in rows} == {"isac", "comm"}
        assert {r["modulation"] for r in rows} == {"QPSK", "QAM16"}
        assert len(rows) == 2 * 2 * 2


class TestEvalSense:
    def test_small_run(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text(
            "[generation]\nseed = 123\ntarget_selection = random_k:2\n"
            "[evaluation]\n"
            "target_power_rel_los_db = -27.76, -39.41\n"
            "target_eff_velocity_mps = 31, 56\n"
            "target_delay_override_s = 4.2e-7, 2.1e-6\n",
            encoding="utf-8",
        )
        out = tmp_path / "out"
        rc = main(["eval-sense", "--config", str(cfg), "--snr", "12",
                   "--drops", "5", "--out", str(out)])
        assert rc == 0
        det = read_csv(out / "detection_prob.csv")
        assert len(det) == 2
        strongest = [r for r in det if r["target"] == "0"][0]
        assert float(strongest["detection_prob"]) == 1.0
        assert (out / "range_error.csv").exists()


class TestSpectrogram:
    def test_trace_spectrogram(self, tmp_path):
        trace = make_trace(tmp_path / "t.csv", n_frames=200, fd_hz=100.0)
        out = tmp_path / "out"
        rc = main(["spectrogram", "--trace", str(trace), "--out", str(out),
                   "--window", "64", "--hop", "16"])
        assert rc == 0
        with open(out / "spectrogram.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header, data = rows[0], rows[1:]
        assert header[0] == "time_s"
        assert len(data) >= 1
        # ridge at +100 Hz: find peak column in the first frame
        freqs = np.array([float(f) for f in header[1:]])
        powers = np.array([float(v) for v in data[0][1:]])
        assert abs(freqs[np.argmax(powers)] - 100.0) <= 480.0 / 64


class TestExitCodes:
    def test_unknown_subcommand_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_bad_config_exits_2(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("[scenario]\nfc_hz = 200e9\n", encoding="utf-8")
        assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_seed_env_override(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("ISAC_SEED", "555")
        out = tmp_path / "out"
        assert main(["generate", "--out", str(out)]) == 0
        meta = json.loads((out / "run_meta.json").read_text())
        assert meta["seed"] == 555
        assert "seed: 555" in capsys.readouterr().err
