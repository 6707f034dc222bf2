"""Command line entry points.

Subcommands: ``generate`` (per-drop cluster/ray/CIR tables), ``eval-comm``
(BER vs SNR on unified and comm-only channels), ``eval-sense`` (detection
probability and range error), ``spectrogram`` (Doppler spectrogram of a
deterministic trace), ``ingest-rays`` (trace validation).  Exit codes:
0 success, 2 configuration problem, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .channel import build_isac_channel, symbol_times
from .clusters import ClusterKind
from .coefficients import CirSnapshot
from .config import SimulationSetup, dump_effective_config, load_scenario
from .errors import ConfigError, ParseError, ValidationError
from .evaluate import (
    doppler_spectrogram,
    run_ber_experiment,
    run_sensing_experiment,
    target_tap_series,
)
from .targets import load_trace


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, ValidationError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isac",
        description="Bistatic sensing+communication channel simulator and evaluator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate channel drops and dump tables")
    _add_config(gen)
    gen.add_argument("--drops", type=int, default=1)
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--dump-rays", action="store_true", help="also write ray tables")
    gen.add_argument("--cfr", action="store_true", help="also write binary CFR frames")
    gen.set_defaults(handler=_cmd_generate)

    comm = sub.add_parser("eval-comm", help="BER vs SNR comparison")
    _add_config(comm)
    comm.add_argument("--snr", default="0:2:20", help="grid 'start:step:stop' or list")
    comm.add_argument("--drops", type=int, default=100)
    comm.add_argument("--out", required=True)
    comm.set_defaults(handler=_cmd_eval_comm)

    sense = sub.add_parser("eval-sense", help="detection and range estimation")
    _add_config(sense)
    sense.add_argument("--snr", default="0:2:30")
    sense.add_argument("--drops", type=int, default=1000, help="noise realizations per SNR")
    sense.add_argument("--out", required=True)
    sense.set_defaults(handler=_cmd_eval_sense)

    spec = sub.add_parser("spectrogram", help="Doppler spectrogram of a trace")
    _add_config(spec)
    spec.add_argument("--trace", required=True, help="deterministic ray trace CSV")
    spec.add_argument("--out", required=True)
    spec.add_argument("--window", type=int, default=None, help="window length in frames")
    spec.add_argument("--hop", type=int, default=None, help="hop in frames")
    spec.set_defaults(handler=_cmd_spectrogram)

    ingest = sub.add_parser("ingest-rays", help="parse and validate a ray trace")
    ingest.add_argument("--in", dest="trace_in", required=True)
    ingest.add_argument("--validate", action="store_true")
    ingest.set_defaults(handler=_cmd_ingest)

    return parser


def _add_config(sub: argparse.ArgumentParser):
    sub.add_argument("--config", default=None, help="config file (INI); defaults apply if omitted")


def _load_setup(args) -> SimulationSetup:
    if args.config is None:
        return load_scenario("")
    with open(args.config, "r", encoding="utf-8") as fh:
        return load_scenario(fh.read())


def _parse_snr_grid(text: str) -> list[float]:
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"--snr grid must be start:step:stop, got {text!r}")
        start, step, stop = (float(p) for p in parts)
        if step <= 0:
            raise ConfigError("--snr step must be positive")
        return list(np.arange(start, stop + step / 2, step))
    return [float(p) for p in text.split(",") if p.strip()]


def _prepare_out(args, setup: SimulationSetup) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.ini").write_text(dump_effective_config(setup), encoding="utf-8")
    meta = {
        "seed": setup.generation.seed,
        "command": args.command,
        "fc_hz": setup.scenario.fc_hz,
        "n_subcarriers": setup.ofdm.n_subcarriers,
        "delta_f_hz": setup.ofdm.delta_f_hz,
        "symbol_duration_s": setup.ofdm.symbol_duration_s,
    }
    (out / "run_meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    print(f"seed: {setup.generation.seed}", file=sys.stderr)
    return out


def _write_csv(path: Path, header: list[str], rows: list[list]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _cmd_generate(args) -> int:
    setup = _load_setup(args)
    out = _prepare_out(args, setup)
    ofdm = setup.ofdm
    for drop in range(args.drops):
        rng = np.random.default_rng(
            np.random.SeedSequence(setup.generation.seed, spawn_key=(drop,))
        )
        real = build_isac_channel(
            setup.scenario, setup.lsp, setup.antenna, setup.generation, rng
        )
        p_max = max(c.power for c in real.clusters)
        _write_csv(
            out / f"clusters_drop{drop:04d}.csv",
            ["index", "delay_s", "power_lin", "power_db_rel_max", "kind"],
            [
                [c.index, repr(c.delay_s), repr(c.power),
                 f"{10.0 * math.log10(c.power / p_max):.4f}", c.kind.value]
                for c in real.clusters
            ],
        )
        if args.dump_rays:
            rows = []
            for ray in real.env_rays:
                rows.append(
                    [ray.cluster_index, ray.ray_index,
                     f"{math.degrees(ray.zoa):.6f}", f"{math.degrees(ray.aoa):.6f}",
                     f"{math.degrees(ray.zod):.6f}", f"{math.degrees(ray.aod):.6f}",
                     f"{10.0 * math.log10(ray.xpr_linear):.4f}"]
                    + [f"{p:.6f}" for p in ray.phases]
                )
            for track in real.targets:
                for ray in track.rays:
                    rows.append(
                        [ray.cluster_index, ray.ray_index,
                         f"{math.degrees(ray.zoa):.6f}", f"{math.degrees(ray.aoa):.6f}",
                         f"{math.degrees(ray.zod):.6f}", f"{math.degrees(ray.aod):.6f}",
                         f"{10.0 * math.log10(ray.xpr_linear):.4f}"]
                        + [f"{p:.6f}" for p in ray.phases]
                    )
            _write_csv(
                out / f"rays_drop{drop:04d}.csv",
                ["cluster", "ray", "zoa_deg", "aoa_deg", "zod_deg", "aod_deg",
                 "xpr_db", "phase_tt_rad", "phase_tp_rad", "phase_pt_rad", "phase_pp_rad"],
                rows,
            )
        snapshot_rows = []
        for u in range(setup.antenna.num_rx_elements):
            for s in range(setup.antenna.num_tx_elements):
                snap = real.snapshot(0.0, u=u, s=s)
                snapshot_rows.extend(_cir_rows(snap))
        _write_csv(
            out / f"cir_drop{drop:04d}.csv",
            ["t_s", "u", "s", "delay_s", "re", "im", "origin", "n", "m"],
            snapshot_rows,
        )
        if args.cfr:
            times = symbol_times(setup.evaluation.frame_symbols, ofdm.symbol_duration_s)
            cfr = real.cfr_matrix(times, ofdm.n_subcarriers, ofdm.delta_f_hz)
            raw = np.empty((cfr.shape[0], cfr.shape[1], 2))
            raw[..., 0] = cfr.real
            raw[..., 1] = cfr.imag
            raw.astype("<f8").tofile(out / f"cfr_drop{drop:04d}.bin")
            sidecar = {
                "shape": [int(cfr.shape[0]), int(cfr.shape[1])],
                "layout": "row-major symbol x subcarrier, interleaved re/im float64 LE",
                "delta_f_hz": ofdm.delta_f_hz,
                "fc_hz": setup.scenario.fc_hz,
                "symbol_duration_s": ofdm.symbol_duration_s,
            }
            (out / f"cfr_drop{drop:04d}.json").write_text(
                json.dumps(sidecar, indent=2), encoding="utf-8"
            )
    print(f"wrote {args.drops} drop(s) to {out}")
    return 0


def _cir_rows(snap: CirSnapshot) -> list[list]:
    return [
        [repr(snap.t), snap.u, snap.s, repr(tap.delay_s),
         repr(tap.coeff.real), repr(tap.coeff.imag), tap.origin.value,
         tap.cluster, tap.ray]
        for tap in snap.taps
    ]


def _cmd_eval_comm(args) -> int:
    setup = _load_setup(args)
    out = _prepare_out(args, setup)
    grid = _parse_snr_grid(args.snr)
    points = run_ber_experiment(setup, grid, drops=args.drops)
    _write_csv(
        out / "ber_vs_snr.csv",
        ["snr_db", "modulation", "channel", "ber", "bits", "errors"],
        [[p.snr_db, p.modulation, p.channel, repr(p.ber), p.bits, p.errors] for p in points],
    )
    print(f"wrote {out / 'ber_vs_snr.csv'}")
    return 0


def _cmd_eval_sense(args) -> int:
    setup = _load_setup(args)
    out = _prepare_out(args, setup)
    grid = _parse_snr_grid(args.snr)
    points = run_sensing_experiment(setup, grid, n_realizations=args.drops)
    _write_csv(
        out / "detection_prob.csv",
        ["snr_db", "target", "detection_prob", "n_detections"],
        [[p.snr_db, p.target, repr(p.detection_prob), p.n_detections] for p in points],
    )
    _write_csv(
        out / "range_error.csv",
        ["snr_db", "target", "mean_abs_error_m", "p95_abs_error_m",
         "frac_within_one_bin", "n_detections"],
        [
            [p.snr_db, p.target, repr(p.mean_abs_range_error_m),
             repr(p.p95_abs_range_error_m), repr(p.frac_within_one_bin), p.n_detections]
            for p in points
        ],
    )
    print(f"wrote {out / 'detection_prob.csv'} and {out / 'range_error.csv'}")
    return 0


def _cmd_spectrogram(args) -> int:
    setup = _load_setup(args)
    out = _prepare_out(args, setup)
    trace = load_trace(args.trace)
    real = build_isac_channel(
        setup.scenario,
        setup.lsp,
        setup.antenna,
        setup.generation,
        np.random.default_rng(np.random.SeedSequence(setup.generation.seed)),
        det_target=trace,
    )
    frame_dt = 1.0 / trace.frame_rate_fps
    times = np.array([f[0] for f in trace.frames])
    series = target_tap_series(real, times)
    window = args.window or setup.evaluation.spectrogram_window_symbols
    hop = args.hop or setup.evaluation.spectrogram_hop_symbols
    spec = doppler_spectrogram(series, window, hop, symbol_duration_s=frame_dt)
    shifted = np.fft.fftshift(spec.frequencies_hz)
    header = ["time_s"] + [f"{f:.3f}" for f in shifted]
    shifted_power = np.fft.fftshift(spec.power_db, axes=1)
    rows = [
        [f"{t:.6f}"] + [f"{v:.2f}" for v in shifted_power[i]]
        for i, t in enumerate(spec.frame_times_s)
    ]
    _write_csv(out / "spectrogram.csv", header, rows)
    print(f"wrote {out / 'spectrogram.csv'}")
    return 0


def _cmd_ingest(args) -> int:
    trace = load_trace(args.trace_in)
    n_rays = sum(len(f[1]) for f in trace.frames)
    duration = trace.frames[-1][0] - trace.frames[0][0]
    print(
        f"trace ok: {len(trace.frames)} frames, {n_rays} rays, "
        f"{duration:.6f} s span, {trace.frame_rate_fps:g} fps, "
        f"{trace.delay_convention} delays"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
