"""Command line: compensation tables, plant trials and parameter sweeps.

    fgc table  [--config PATH] [--gait amble|trot] [--out DIR]
    fgc run    [--gait G] [--fgc on|off] [--cycles N] [--trials N] [--compare] [--out DIR]
    fgc compare  (same as run --compare)
    fgc sweep  [--dm LIST] [--s-scale LIST] [--stiffness-scale LIST] [--out DIR]

Exit status is 0 when every requested computation completed. A trial whose
touchdowns fail still completes; its failure is reported in the outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .compensation import SWEEP_COLUMNS, CompensationError, build_compensation_table, sweep_compensation
from .force_distribution import Weights
from .gait import GaitParams, phase_schedule
from .robot_model import ConfigError, default_config_document, parse_robot_config
from .sim import CHANNELS, run_trial, summary_json


class CliError(RuntimeError):
    pass


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("list must not be empty")
    return vals


def _thresholds(text: str) -> tuple[float, float]:
    vals = _float_list(text)
    if len(vals) != 2 or min(vals) < 0:
        raise argparse.ArgumentTypeError("thresholds must be POS_MM,ANG_DEG with non-negative values")
    return vals[0], vals[1]


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("value must be at least 1")
    return v


def load_setup(config: str | None, gait: str | None = None, stiffness_scale: float = 1.0):
    """(model, env, gait params, weights, raw document) from a config file or the packaged default."""
    if config is None:
        doc = default_config_document()
    else:
        try:
            doc = json.loads(Path(config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise CliError(f"cannot read config {config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise CliError(f"malformed config {config}: {exc}") from None
    model, env = parse_robot_config(doc)
    if stiffness_scale != 1.0:
        model = model.scaled_stiffness(stiffness_scale)
    params = GaitParams.from_dict(doc.get("gait"))
    if gait is not None:
        params = replace(params, kind=gait)
    weights = Weights.from_dict(doc.get("qp"))
    return model, env, params, weights, doc


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"output directory {path} is not writable: {exc.strerror}") from None
    return out


def cmd_table(args) -> int:
    model, env, params, weights, _ = load_setup(args.config, args.gait, args.stiffness_scale)
    schedule = phase_schedule(params.kind, params.cycle_s, params.order)
    table = build_compensation_table(model, env, schedule, params, weights, per_phase=args.table_per_phase)
    out = _out_dir(args.out)
    path = out / f"table_{params.kind}.json"
    path.write_text(table.to_json(), encoding="utf-8")
    if env.gravity_mps2 == 0.0 or table.max_abs_offset() == 0.0:
        print("warning: zero gravity load, compensation inactive", file=sys.stderr)
    print(f"{len(table.entries)} samples -> {path}")
    for e in table.entries:
        parts = [f"{leg}:" + ",".join(f"{np.degrees(v):+.3f}" for v in c.dq_st) for leg, c in e.legs.items()]
        print(f"  t={e.t:8.4f} s  dq_st[deg]  " + "  ".join(parts))
    return 0


def _ratio(off: float, on: float) -> float:
    return off / on if on > 0 else float("inf")


def _write_trial(out: Path, name: str, metrics) -> None:
    (out / f"{name}.csv").write_text(metrics.to_csv(), encoding="utf-8")


def cmd_run(args) -> int:
    model, env, params, weights, doc = load_setup(args.config, args.gait, args.stiffness_scale)
    out = _out_dir(args.out)
    modes = [True, False] if args.compare else [args.fgc == "on"]
    table = None
    if True in modes:
        schedule = phase_schedule(params.kind, params.cycle_s, params.order)
        table = build_compensation_table(model, env, schedule, params, weights, per_phase=args.table_per_phase)
        if table.max_abs_offset() == 0.0:
            print("warning: zero gravity load, compensation inactive", file=sys.stderr)

    results = {m: [] for m in modes}
    for fgc in modes:
        for k in range(args.trials):
            metrics = run_trial(model, env, params, fgc=fgc, cycles=args.cycles, thresholds=args.thresholds,
                                samples_per_phase=args.sample_per_phase, table=table if fgc else None,
                                weights=weights)
            tag = "fgc" if fgc else "nofgc"
            _write_trial(out, f"trial_{params.kind}_{tag}_{k + 1:02d}", metrics)
            results[fgc].append(metrics)
            if metrics.error is not None:
                (out / "summary.json").write_text(
                    summary_json([m for v in results.values() for m in v], doc), encoding="utf-8")
                raise CliError(f"trial {k + 1} ({tag}) aborted: {metrics.error}")
            status = "success" if metrics.success else f"failed ({metrics.touchdown_failures} touchdowns)"
            print(f"{params.kind} {tag} trial {k + 1}: {status}")

    all_metrics = [m for v in results.values() for m in v]
    (out / "summary.json").write_text(summary_json(all_metrics, doc), encoding="utf-8")

    if args.compare:
        on, off = results[True][0], results[False][0]
        print(f"{'channel':<10} {'FGC p2p':>10} {'no-FGC p2p':>11} {'ratio':>8}")
        for ch in CHANNELS:
            a, b = on.peak_to_peak(ch), off.peak_to_peak(ch)
            print(f"{ch:<10} {a:10.4f} {b:11.4f} {_ratio(b, a):8.2f}")
        print(f"touchdown failures: FGC {on.touchdown_failures}, no-FGC {off.touchdown_failures}")
        s = on.stats["pitch_deg"]
        print(f"FGC pitch max {s.max:.3f} deg, min {s.min:.3f} deg (hardware reference: max 2.11, min -1.14)")
    print(f"outputs in {out}")
    return 0


def cmd_sweep(args) -> int:
    model, env, _, weights, _ = load_setup(args.config)
    stance = tuple(s.strip() for s in args.stance.split(","))
    rows = sweep_compensation(model, env, args.dm, args.s_scale, args.stiffness_scale_list, stance, weights)
    out = _out_dir(args.out)
    path = out / "sweep.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    print(f"{len(rows)} rows -> {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fgc", description="Feedforward gravity compensation for a climbing quadruped")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, gait=True):
        sp.add_argument("--config", help="robot config JSON (default: packaged estimate)")
        if gait:
            sp.add_argument("--gait", choices=("amble", "trot"), help="override the config gait")
            sp.add_argument("--stiffness-scale", type=float, default=1.0,
                            help="multiply every joint and link stiffness")
            sp.add_argument("--table-per-phase", type=_positive_int, default=1,
                            help="compensation samples per gait phase")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="reserved; the pipeline is deterministic")

    t = sub.add_parser("table", help="build and write the compensation table")
    common(t)
    t.set_defaults(func=cmd_table)

    for name in ("run", "compare"):
        r = sub.add_parser(name, help="run plant trials" if name == "run" else "paired FGC on/off trials")
        common(r)
        r.add_argument("--fgc", choices=("on", "off"), default="on")
        r.add_argument("--cycles", type=_positive_int, default=2)
        r.add_argument("--trials", type=_positive_int, default=1)
        r.add_argument("--sample-per-phase", type=_positive_int, default=20,
                       help="plant samples per gait phase")
        r.add_argument("--thresholds", type=_thresholds, default=(5.0, 5.0), metavar="POS_MM,ANG_DEG")
        r.add_argument("--compare", action="store_true", default=name == "compare",
                       help="paired FGC on/off runs with a ratio table")
        r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="compensation versus body offset and equilibrium weight")
    common(s, gait=False)
    s.add_argument("--dm", type=_float_list, default=[-0.02, -0.01, 0.0, 0.01, 0.02],
                   help="body offsets D_m in metres")
    s.add_argument("--s-scale", type=_float_list, default=[1e-6, 1e-5, 1e-4, 1e-2, 1.0, 100.0],
                   help="equilibrium weights s")
    s.add_argument("--stiffness-scale", dest="stiffness_scale_list", type=_float_list, default=[1.0],
                   help="stiffness multipliers")
    s.add_argument("--stance", default="RF,LH", help="stance legs, comma separated")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError, CompensationError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
