"""Command line interface.

Subcommands: simulate, localize, evaluate, ablate, confusion, density.
Exit code 0 on success; failures print a one-line machine-readable error
JSON to stderr and exit nonzero. With a fixed --seed every command writes
byte-identical output across runs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from .evaluation import (
    ablation_suite,
    confusion_matrix,
    density_sweep,
    prepare_queries,
    run_queries,
)
from .matching import METHODS, MatcherConfig, PipelineToggles, localize
from .simulate import survey, walk

__all__ = ["main"]


def _load_config(args) -> MatcherConfig:
    config = fio.load_matcher_config(getattr(args, "config", None))
    seed = getattr(args, "seed", None)
    if seed is not None:
        config = dataclasses.replace(config, lms=dataclasses.replace(config.lms, rng_seed=seed))
    return config


def _cmd_simulate(args) -> None:
    spec = fio.load_environment(args.env, seed=args.seed)
    env = spec.env
    rng = np.random.default_rng((env.seed, 0))
    radio_map = survey(env, spec.grid_spacing, spec.samples_per_location, rng=rng)
    fio.save_radio_map(radio_map, args.out_map)
    queries = []
    for i, trajectory in enumerate(spec.trajectories):
        trace_rng = np.random.default_rng((env.seed, 1 + i))
        queries.extend(
            walk(
                env,
                trajectory,
                spec.scan_model,
                trace_rng,
                step_noise=spec.step_noise,
                trace_id=f"trace{i:03d}",
                body_blockage=spec.body_blockage,
            )
        )
    fio.save_queries(queries, args.out_queries)
    print(f"Wrote {len(radio_map)} map locations to {args.out_map} "
          f"and {len(queries)} queries to {args.out_queries}")


def _cmd_localize(args) -> None:
    radio_map = fio.load_radio_map(args.map)
    queries = fio.load_queries(args.queries)
    config = _load_config(args)
    prepared = prepare_queries(queries, config.window)
    estimates = [localize(q, radio_map, args.method, config) for q in prepared]
    if args.out == "-":
        fio.write_localization_csv(prepared, estimates, sys.stdout)
    else:
        fio.write_localization_csv(prepared, estimates, args.out)


def _summary_dict(summary) -> dict:
    return {
        "method": summary.method,
        "mean_m": summary.mean_m,
        "p50_m": summary.p50_m,
        "p95_m": summary.p95_m,
        "max_m": summary.max_m,
        "n": summary.n,
    }


def _write_summaries(rows: list, out_dir: Path, stem: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / f"{stem}.csv", "w", newline="") as f:
        f.write("method,mean_m,p50_m,p95_m,max_m,n\n")
        for s in rows:
            f.write(f"{s.method},{s.mean_m:.6f},{s.p50_m:.6f},{s.p95_m:.6f},{s.max_m:.6f},{s.n}\n")
    (out_dir / f"{stem}.json").write_text(json.dumps([_summary_dict(s) for s in rows], indent=1))


def _cmd_evaluate(args) -> None:
    radio_map = fio.load_radio_map(args.map)
    queries = fio.load_queries(args.queries)
    config = _load_config(args)
    estimates, summary = run_queries(radio_map, queries, args.method, config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fio.write_localization_csv(queries, estimates, out_dir / f"{args.method}_estimates.csv")
    _write_summaries([summary], out_dir, "summary")
    print(f"{summary.method}: mean {summary.mean_m:.2f} m, "
          f"p95 {summary.p95_m:.2f} m over {summary.n} queries")


def _cmd_ablate(args) -> None:
    radio_map = fio.load_radio_map(args.map)
    queries = fio.load_queries(args.queries)
    config = _load_config(args)
    rows = ablation_suite(radio_map, queries, config)
    _write_summaries(rows, Path(args.out_dir), "ablation")
    for s in rows:
        print(f"{s.method:10s} mean {s.mean_m:7.3f} m   p95 {s.p95_m:7.3f} m")


def _cmd_confusion(args) -> None:
    radio_map = fio.load_radio_map(args.map)
    queries = fio.load_queries(args.queries)
    config = _load_config(args)
    toggles = (
        PipelineToggles(True, True, True, True)
        if args.metric == "dorfin"
        else PipelineToggles(False, False, False, False)
    )
    rows, cols, matrix = confusion_matrix(radio_map, queries, toggles, config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "confusion.csv", "w", newline="") as f:
        f.write("truth," + ",".join(f"{c.x:g}:{c.y:g}" for c in cols) + "\n")
        for loc, row in zip(rows, matrix):
            cells = ",".join("inf" if math.isinf(v) else f"{v:.6f}" for v in row)
            f.write(f"{loc.x:g}:{loc.y:g},{cells}\n")
    print(f"Wrote {matrix.shape[0]}x{matrix.shape[1]} confusion matrix to {out_dir / 'confusion.csv'}")


def _cmd_density(args) -> None:
    radio_map = fio.load_radio_map(args.map)
    queries = fio.load_queries(args.queries)
    config = _load_config(args)
    spacings = [float(s) for s in args.spacings.split(",")]
    results = density_sweep(radio_map, queries, spacings, args.method, config)
    rows = [
        dataclasses.replace(summary, method=f"{summary.method}@{spacing:g}m")
        for spacing, summary in results
    ]
    _write_summaries(rows, Path(args.out_dir), "density")
    for s in rows:
        print(f"{s.method:14s} mean {s.mean_m:7.3f} m   p95 {s.p95_m:7.3f} m")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fingerloc",
                                     description="WiFi fingerprint localization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a radio map and query streams")
    p.add_argument("--env", required=True, help="environment JSON file")
    p.add_argument("--out-map", required=True)
    p.add_argument("--out-queries", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("localize", help="run one matcher over a query file")
    p.add_argument("--map", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--method", choices=METHODS, default="dorfin")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="-", help="output CSV path, '-' for stdout")
    p.set_defaults(func=_cmd_localize)

    for name, func in (
        ("evaluate", _cmd_evaluate),
        ("ablate", _cmd_ablate),
        ("confusion", _cmd_confusion),
        ("density", _cmd_density),
    ):
        p = sub.add_parser(name)
        p.add_argument("--map", required=True)
        p.add_argument("--queries", required=True)
        p.add_argument("--config", default=None)
        p.add_argument("--out-dir", required=True)
        p.add_argument("--seed", type=int, default=None)
        if name in ("evaluate", "density"):
            p.add_argument("--method", choices=METHODS, default="dorfin")
        if name == "confusion":
            p.add_argument("--metric", choices=["basic", "dorfin"], default="basic")
        if name == "density":
            p.add_argument("--spacings", default="2,3")
        p.set_defaults(func=func)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
