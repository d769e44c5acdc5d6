# pcbsample.py
#!/usr/bin/env python3
"""
pcbsample.py

Subcommands:
- sample      downsample a scan (or a synthetic one) with RS, PCB-RS or FPS
- stats       distance-band histogram, optionally RS vs PCB-RS uniformity
- bench       cascade timing of the three methods
- loss-check  closed-form values and finite-difference gradient checks

Exit codes: 0 ok, 1 usage, 2 data/format error, 3 check failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import pandas as pd
from packaging.version import InvalidVersion, Version

from core import bench, losses, stats
from core.errors import CheckFailedError, RejectedInputError, SampleFormatError
from core.geometry import PointCloud
from core.grid import CROP_PRESETS, CylGridConfig, parse_resolution, parse_rho_max
from core.kitti_io import encode_kitti_bin, encode_labels, read_scan
from core.log import configure, get_logger
from core.sampling import FPS, make_rng, normalize_method, random_seed, sample
from core.settings_store import load_json, load_run_config, staged_outputs
from core.synth import SynthConfig, generate_long_tail, parse_synth
from core.version import __version__

log = get_logger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CHECK = 3

TOOL_NAME = "pcbsample"
# bench --preset names for the four-depth cascade set; "cascades" is an alias
CASCADE_PRESETS = ("table4", "cascades")


class UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; 2 is reserved for data errors here
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    subcommand: str
    input_path: Optional[Path] = None
    label_path: Optional[Path] = None
    synth: Optional[SynthConfig] = None
    method: str = "PCB-RS"
    m: Optional[int] = None
    ratio: Optional[float] = None
    grid: CylGridConfig = field(default_factory=CylGridConfig)
    seed: int = 0
    seed_was_random: bool = False
    start_index: int = 0
    out: Optional[Path] = None
    fmt: str = "csv"
    threads: int = 1

    def resolve_m(self, n_points: int) -> int:
        if self.m is not None:
            return int(self.m)
        if self.ratio is None:
            raise UsageError("give a sample size with --m or --ratio")
        return max(1, int(round(self.ratio * n_points)))


# ----------------- config assembly -----------------


def _grid_from_args(args: argparse.Namespace, file_cfg: dict[str, Any]) -> CylGridConfig:
    flag = getattr(args, "preset", None)
    preset = flag if flag in CROP_PRESETS else file_cfg.get("preset")
    if preset:
        key = str(preset).lower()
        if key not in CROP_PRESETS:
            raise UsageError(f"unknown grid preset {preset!r} (choose from {', '.join(CROP_PRESETS)})")
        grid = CROP_PRESETS[key]
    else:
        grid = CylGridConfig()
    grid = CylGridConfig.from_mapping(file_cfg, base=grid)

    overrides: dict[str, Any] = {}
    if getattr(args, "grid", None):
        overrides["n_radial"], overrides["n_angular"], overrides["n_height"] = parse_resolution(args.grid)
    for key in ("rho_min", "z_min", "z_max"):
        v = getattr(args, key, None)
        if v is not None:
            overrides[key] = v
    if getattr(args, "rho_max", None) is not None:
        overrides["rho_max"] = "max" if parse_rho_max(args.rho_max) is None else args.rho_max
    if getattr(args, "drop_out_of_range", False):
        overrides["drop_out_of_range"] = True
    return CylGridConfig.from_mapping(overrides, base=grid)


def build_run_config(args: argparse.Namespace) -> RunConfig:
    file_cfg = load_run_config(Path(args.config)) if getattr(args, "config", None) else {}

    cfg = RunConfig(subcommand=args.command)
    cfg.grid = _grid_from_args(args, file_cfg)

    in_path = getattr(args, "in_path", None)
    synth_text = getattr(args, "synth", None)
    synth_file = file_cfg.get("synth")
    if in_path and (synth_text is not None):
        raise UsageError("--in and --synth are mutually exclusive")
    if in_path:
        cfg.input_path = Path(in_path)
        cfg.label_path = Path(args.labels) if getattr(args, "labels", None) else None
    elif synth_text is not None or synth_file is not None:
        base = SynthConfig.from_mapping(synth_file) if isinstance(synth_file, dict) else SynthConfig()
        cfg.synth = parse_synth(synth_text or "", base=base)
    elif args.command in ("sample", "stats"):
        raise UsageError("give an input scan with --in or synthetic data with --synth")

    method = getattr(args, "method", None) or file_cfg.get("method")
    if method:
        cfg.method = normalize_method(method)

    m = getattr(args, "m", None)
    ratio = getattr(args, "ratio", None)
    if m is None and ratio is None:
        m, ratio = file_cfg.get("m"), file_cfg.get("ratio")
    if m is not None and ratio is not None:
        raise UsageError("--m and --ratio are mutually exclusive")
    if m is not None:
        if int(m) < 1:
            raise UsageError(f"--m must be >= 1, got {m}")
        cfg.m = int(m)
    if ratio is not None:
        if not 0 < float(ratio) <= 1:
            raise UsageError(f"--ratio must be in (0, 1], got {ratio}")
        cfg.ratio = float(ratio)

    seed = getattr(args, "seed", None)
    if seed is None:
        seed = file_cfg.get("seed")
    if seed is None:
        cfg.seed, cfg.seed_was_random = random_seed(), True
        print(f"seed: {cfg.seed}", file=sys.stderr)
    else:
        cfg.seed = int(seed)

    cfg.start_index = int(getattr(args, "start_index", 0) or 0)
    cfg.out = Path(args.out) if getattr(args, "out", None) else None
    cfg.fmt = getattr(args, "format", None) or "csv"
    cfg.threads = max(1, int(getattr(args, "threads", 1) or 1))
    return cfg


def _sha256(*chunks: bytes) -> str:
    h = hashlib.sha256()
    for c in chunks:
        h.update(c)
    return h.hexdigest()


def load_cloud(cfg: RunConfig) -> tuple[PointCloud, dict[str, Any]]:
    """Cloud plus an input description (path or synth parameters, and a digest)."""
    if cfg.input_path is not None:
        cloud = read_scan(cfg.input_path, cfg.label_path)
        parts = [cfg.input_path.read_bytes()]
        if cfg.label_path is not None:
            parts.append(cfg.label_path.read_bytes())
        desc = {
            "path": str(cfg.input_path),
            "labels": None if cfg.label_path is None else str(cfg.label_path),
            "sha256": _sha256(*parts),
        }
        return cloud, desc
    synth = cfg.synth or SynthConfig()
    params = synth.to_mapping()
    return generate_long_tail(synth), {"synth": params, "sha256": _sha256(json.dumps(params, sort_keys=True).encode())}


# ----------------- sample -----------------


def sidecar_path(out: Path) -> Path:
    return out.with_suffix(".json")


def cmd_sample(cfg: RunConfig) -> int:
    if cfg.out is None:
        raise UsageError("sample needs --out PATH.bin")
    cloud, input_desc = load_cloud(cfg)
    m = cfg.resolve_m(len(cloud))
    result = sample(cloud, cfg.method, m, cfg.seed, cfg.grid, start_index=cfg.start_index)
    picked = cloud.take(result.indices)

    bin_bytes = encode_kitti_bin(picked)
    provenance = {
        "tool": TOOL_NAME,
        "version": __version__,
        "method": result.method,
        "seed": cfg.seed,
        "seed_source": "random" if cfg.seed_was_random else "flag",
        "m": m,
        "ratio": cfg.ratio,
        "start_index": cfg.start_index if result.method == FPS else None,
        "grid": cfg.grid.to_mapping(),
        "input": input_desc,
        "n_input": len(cloud),
        "n_output": len(picked),
        "duplicated": result.duplicated,
        "output_sha256": _sha256(bin_bytes),
    }

    with staged_outputs() as staged:
        staged[cfg.out] = bin_bytes
        if picked.labels is not None:
            staged[cfg.out.with_suffix(".label")] = encode_labels(picked.labels)
        staged[sidecar_path(cfg.out)] = (json.dumps(provenance, indent=2) + "\n").encode("utf-8")

    print(f"{result.method}: {len(cloud)} -> {len(picked)} points, seed {cfg.seed}, wrote {cfg.out}")
    return EXIT_OK


def run_config_from_sidecar(path: Path, out: Optional[Path]) -> RunConfig:
    """Rebuild the sample run recorded in a provenance sidecar."""
    data = load_json(path)
    try:
        recorded = Version(str(data.get("version", "0")))
        if recorded > Version(__version__):
            log.warning("sidecar written by %s %s, running %s", TOOL_NAME, recorded, __version__)
    except InvalidVersion:
        log.warning("sidecar has an unreadable version %r", data.get("version"))

    try:
        inp = data["input"]
        cfg = RunConfig(
            subcommand="sample",
            method=normalize_method(data["method"]),
            m=int(data["m"]),
            grid=CylGridConfig.from_mapping(data["grid"]),
            seed=int(data["seed"]),
            start_index=int(data.get("start_index") or 0),
            out=out,
        )
    except (KeyError, TypeError) as e:
        raise RejectedInputError(f"{path}: incomplete provenance sidecar ({e})") from e
    if "synth" in inp:
        cfg.synth = SynthConfig.from_mapping(inp["synth"])
    else:
        cfg.input_path = Path(inp["path"])
        cfg.label_path = Path(inp["labels"]) if inp.get("labels") else None
    return cfg


def cmd_replay(args: argparse.Namespace) -> int:
    cfg = run_config_from_sidecar(Path(args.replay), Path(args.out) if args.out else None)
    recorded = load_json(Path(args.replay))["input"].get("sha256")
    _, desc = load_cloud(cfg)
    if recorded and desc["sha256"] != recorded:
        raise RejectedInputError(f"input changed since {args.replay} was written (sha256 mismatch)")
    return cmd_sample(cfg)


# ----------------- stats -----------------


def _emit(df: pd.DataFrame, out: Optional[Path], fmt: str) -> None:
    if out is None:
        sys.stdout.write(df.to_csv(index=False) if fmt == "csv" else stats.frame_to_json(df) + "\n")
    else:
        stats.write_table(df, out, fmt)


def comparison_seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in make_rng(seed, 500).integers(0, 2**63, size=int(n))]


def cmd_stats(cfg: RunConfig, edges_text: Optional[str], compare: bool, n_seeds: int,
              compare_out: Optional[Path]) -> int:
    cloud, _ = load_cloud(cfg)
    edges = stats.parse_edges(edges_text) if edges_text else stats.normalize_edges()
    hist = stats.distance_histogram(cloud, edges)
    _emit(stats.histogram_frame(hist), cfg.out, cfg.fmt)

    if compare:
        if n_seeds < 1:
            raise UsageError("--seeds must be >= 1")
        m = cfg.resolve_m(len(cloud))
        rs, pcb = stats.compare_methods(cloud, cfg.grid, m, comparison_seeds(cfg.seed, n_seeds), edges,
                                        threads=cfg.threads)
        if compare_out is None and cfg.out is not None:
            compare_out = cfg.out.with_name(f"{cfg.out.stem}_uniformity{cfg.out.suffix}")
        _emit(stats.uniformity_frame([rs, pcb]), compare_out, cfg.fmt)
        print(f"cv_bins RS={rs.cv_bins:.4f} PCB-RS={pcb.cv_bins:.4f} "
              f"flatness RS={rs.per_band_fraction.flatness():.2f} PCB-RS={pcb.per_band_fraction.flatness():.2f}",
              file=sys.stderr)
    return EXIT_OK


# ----------------- bench -----------------


def cmd_bench(cfg: RunConfig, args: argparse.Namespace) -> int:
    methods = tuple(args.methods.split(",")) if args.methods else bench.METHODS
    if args.preset in CASCADE_PRESETS:
        if args.sizes:
            raise UsageError("--preset and --sizes are mutually exclusive")
        specs = [replace(s, repeats=args.repeats, methods=methods, grid=cfg.grid,
                         pcb_first_only=not args.pcb_all_stages) for s in bench.DEFAULT_CASCADES]
    elif args.sizes:
        specs = [bench.CascadeSpec(bench.parse_sizes(args.sizes), args.repeats, methods,
                                   pcb_first_only=not args.pcb_all_stages, grid=cfg.grid)]
    else:
        raise UsageError("bench needs --preset table4 or --sizes")

    if cfg.input_path is not None:
        clouds = read_scan(cfg.input_path)
    else:
        clouds = generate_long_tail(cfg.synth or SynthConfig(seed=cfg.seed))
    frame = bench.run_cascades(specs, clouds, seed=cfg.seed, runs=args.runs)
    print(bench.format_table(frame))
    if cfg.out is not None:
        stats.write_table(frame, cfg.out, cfg.fmt)

    if args.check:
        problems = bench.check_timings(frame)
        if problems:
            raise CheckFailedError("; ".join(problems))
    return EXIT_OK


# ----------------- loss-check -----------------


def example_reports(seed: int) -> pd.DataFrame:
    rng = make_rng(seed, 600)
    c = 5
    p_pcb = rng.dirichlet(np.ones(c))
    p_rs = rng.dirichlet(np.ones(c))
    target = losses.ClassTarget.from_index(int(rng.integers(0, c)), c)
    weights = losses.class_weights_from_counts(rng.integers(1, 1000, size=c))
    rows = [
        losses.loss_report(p_pcb, p_rs, target, weights, alpha=10.0).as_row(),
        losses.loss_report(p_pcb, p_rs, target, weights, alpha=15.0).as_row(),
        losses.loss_report(p_pcb, p_rs, target, weights, params=losses.UncertaintyParams(1.0, 1.0)).as_row(),
    ]
    return pd.DataFrame(rows)


def cmd_loss_check(cfg: RunConfig, trials: int, step: float, rtol: float) -> int:
    if trials < 1:
        raise UsageError("--trials must be >= 1")
    checks = pd.DataFrame(losses.check_gradients(trials, cfg.seed, step, rtol))
    closed = pd.DataFrame(losses.closed_form_checks(), columns=["case", "expected", "got", "passed"])

    summary = checks.groupby("op", sort=False).agg(
        trials=("trial", "count"), max_rel_err=("max_rel_err", "max"), failed=("passed", lambda s: int((~s).sum()))
    )
    print(example_reports(cfg.seed).to_string(index=False, float_format=lambda v: f"{v:.6f}"))
    print()
    print(closed.to_string(index=False))
    print()
    print(summary.to_string(float_format=lambda v: f"{v:.3e}"))
    if cfg.out is not None:
        stats.write_table(checks, cfg.out, cfg.fmt)

    failed = int((~checks["passed"]).sum()) + int((~closed["passed"]).sum())
    if failed:
        raise CheckFailedError(f"{failed} loss check(s) failed")
    return EXIT_OK


# ----------------- main -----------------


def _add_input_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--in", dest="in_path", default=None, help="Scan file (.bin, 4 x float32 per point)")
    p.add_argument("--labels", default=None, help="Label file (.label) paired with --in")
    p.add_argument("--synth", nargs="?", const="", default=None,
                   help="Synthetic long-tail scan, e.g. n=100000,k=2,rho_max=80")


def _add_grid_flags(p: argparse.ArgumentParser, extra_presets: tuple[str, ...] = ()) -> None:
    p.add_argument("--grid", default=None, help="Resolution RxPxZ (radius x angle x height), e.g. 64x64x16")
    p.add_argument("--preset", choices=sorted(CROP_PRESETS) + list(extra_presets), default=None,
                   help="Crop range preset" + (" or " + ", ".join(extra_presets) if extra_presets else ""))
    p.add_argument("--rho-min", type=float, default=None)
    p.add_argument("--rho-max", default=None, help="Meters or 'max' (per-cloud maximum)")
    p.add_argument("--z-min", type=float, default=None)
    p.add_argument("--z-max", type=float, default=None)
    p.add_argument("--drop-out-of-range", action="store_true", help="Drop points outside the crop instead of clamping")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="JSON run config; flags override it")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--threads", type=int, default=1, help="Worker threads for unmeasured work")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = _ArgumentParser(prog=TOOL_NAME, description="Point-cloud downsampling: RS, PCB-RS, FPS")
    ap.add_argument("--version", action="version", version=f"{TOOL_NAME} {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    p = sub.add_parser("sample", help="Downsample a scan")
    _add_input_flags(p)
    _add_grid_flags(p)
    _add_common(p)
    p.add_argument("--method", default=None, help="rs, pcb-rs or fps")
    p.add_argument("--m", type=int, default=None, help="Number of output points")
    p.add_argument("--ratio", type=float, default=None, help="Keep ratio in (0, 1]")
    p.add_argument("--start-index", type=int, default=0, help="FPS start point")
    p.add_argument("--replay", default=None, help="Re-run from a provenance sidecar")

    p = sub.add_parser("stats", help="Distance-band histogram and uniformity report")
    _add_input_flags(p)
    _add_grid_flags(p)
    _add_common(p)
    p.add_argument("--edges", default=None, help="Comma-separated band edges in meters")
    p.add_argument("--compare", action="store_true", help="Add RS vs PCB-RS uniformity report")
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--ratio", type=float, default=None)
    p.add_argument("--seeds", type=int, default=20, help="Number of derived seeds for --compare")
    p.add_argument("--compare-out", default=None)

    p = sub.add_parser("bench", help="Cascade timing of RS, PCB-RS and FPS")
    _add_input_flags(p)
    _add_grid_flags(p, extra_presets=CASCADE_PRESETS)
    _add_common(p)
    p.add_argument("--sizes", default=None, help="Cascade sizes, e.g. 4096,1024,256")
    p.add_argument("--repeats", type=int, default=11)
    p.add_argument("--methods", default=None, help="Comma-separated subset of rs,pcb-rs,fps")
    p.add_argument("--runs", type=int, default=bench.HARNESS_RUNS, help="Harness runs; median and MAD are reported")
    p.add_argument("--pcb-all-stages", action="store_true", help="Use PCB-RS on every stage, not only the first")
    p.add_argument("--check", action="store_true", help="Exit 3 when ordering/ratio checks fail")

    p = sub.add_parser("loss-check", help="Loss values and gradient checks")
    _add_common(p)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--step", type=float, default=losses.FD_STEP)
    p.add_argument("--rtol", type=float, default=losses.FD_RTOL)
    return ap


def dispatch(args: argparse.Namespace) -> int:
    if args.command == "sample" and args.replay:
        return cmd_replay(args)
    cfg = build_run_config(args)
    if args.command == "sample":
        return cmd_sample(cfg)
    if args.command == "stats":
        return cmd_stats(cfg, args.edges, args.compare, args.seeds,
                         Path(args.compare_out) if args.compare_out else None)
    if args.command == "bench":
        return cmd_bench(cfg, args)
    return cmd_loss_check(cfg, args.trials, args.step, args.rtol)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure(verbose=getattr(args, "verbose", False))
    try:
        return dispatch(args)
    except UsageError as e:
        print(f"{TOOL_NAME}: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (RejectedInputError, SampleFormatError) as e:
        print(f"{TOOL_NAME}: error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        where = f" ({e.filename})" if getattr(e, "filename", None) else ""
        print(f"{TOOL_NAME}: error: {e.strerror or e}{where}", file=sys.stderr)
        return EXIT_DATA
    except CheckFailedError as e:
        print(f"{TOOL_NAME}: check failed: {e}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    raise SystemExit(main())
