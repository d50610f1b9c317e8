"""Command-line entry point.

Exit codes: 0 success, 1 data/load error, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import evaluate as ev
from .datamodel import (LoadError, OptimConfig, ThetaMode, load_dataset, normalize_qualities,
                        read_qualities, write_qualities)
from .optimizer import optimize
from .pairing import compute_pair_similarities, repeat_seed, sample_mated_pairs, write_pair_table
from .synth import SynthSpec, generate, write_synthetic

log = logging.getLogger("fiqaopt")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    p.add_argument("--log-level", default="INFO",
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return p


def _dataset_args(p):
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--embeddings", required=True, type=Path)


def parse_grid(text: str) -> list[float]:
    """Either ``start:step:stop`` (inclusive) or a comma-separated list."""
    if ":" in text:
        start, step, stop = (float(x) for x in text.split(":"))
        if step <= 0:
            raise ValueError("grid step must be positive")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 10) for i in range(count)]
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="fiqaopt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--ids", type=int, default=200)
    p.add_argument("--per-id", type=int, default=10)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--noise-floor", type=float, default=0.05)
    p.add_argument("--noise-scale", type=float, default=0.8)
    p.add_argument("--label-noise", type=float, default=0.15)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("optimize", parents=[common], help="optimize quality labels")
    _dataset_args(p)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--lambda", dest="lam", type=float, default=0.05)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--theta-mode", default=ThetaMode.FORMULA_LITERAL.value,
                   choices=[m.value for m in ThetaMode])
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("evaluate", parents=[common], help="ERC curve and pAUC of a labeling")
    _dataset_args(p)
    p.add_argument("--protocol", required=True, type=Path)
    p.add_argument("--qualities", required=True, type=Path)
    p.add_argument("--fmr", type=float, default=ev.DEFAULT_FMR)
    p.add_argument("--grid", default=None,
                   help="start:step:stop or comma list; must contain 0.1,0.2,0.4,0.8 "
                        "(default 0.0:0.02:0.8)")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("pairs", parents=[common], help="dump the mated pairs of one repeat")
    _dataset_args(p)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--repeat", type=int, default=0, help="repeat index (default 0)")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("protocol", parents=[common], help="build a verification protocol CSV")
    _dataset_args(p)
    p.add_argument("--impostors", type=int, default=100_000)
    p.add_argument("--max-genuine", type=int, default=None)
    p.add_argument("--out", required=True, type=Path)
    return parser


def _resolved(args) -> str:
    items = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())}
    return json.dumps(items, sort_keys=True)


def cmd_synth(args) -> None:
    spec = SynthSpec(args.ids, args.per_id, args.dim, args.noise_floor, args.noise_scale,
                     args.label_noise, args.seed)
    dataset, true_q = generate(spec)
    paths = write_synthetic(args.out, dataset, true_q)
    log.info("wrote %d samples to %s", dataset.n, ", ".join(str(p) for p in paths.values()))


def cmd_optimize(args) -> None:
    dataset = load_dataset(args.manifest, args.embeddings)
    config = OptimConfig(k=args.k, lam=args.lam, epsilon=args.epsilon, iterations=args.iters,
                         repeats=args.repeats, seed=args.seed, theta_mode=args.theta_mode)
    base = normalize_qualities(dataset.base_qualities())
    q = optimize(dataset, base, config, threads=args.threads)
    write_qualities(args.out, dataset, q)
    log.info("wrote %d optimized qualities to %s", dataset.n, args.out)


def cmd_evaluate(args) -> None:
    dataset = load_dataset(args.manifest, args.embeddings)
    protocol = ev.read_protocol(args.protocol, dataset)
    q = read_qualities(args.qualities, dataset)
    curve = ev.erc_curve(dataset, protocol, q, fmr_target=args.fmr, grid=args.grid)
    ev.write_curve_json(args.out, curve)
    log.info("threshold %.6f, pAUC %s", curve.threshold,
             {c: round(ev.pauc(curve, c), 6) for c in ev.PAUC_CUTOFFS})


def cmd_pairs(args) -> None:
    dataset = load_dataset(args.manifest, args.embeddings)
    pairs = sample_mated_pairs(dataset, args.k, repeat_seed(args.seed, args.repeat))
    pairs = compute_pair_similarities(pairs, dataset.embeddings, threads=args.threads)
    write_pair_table(args.out, pairs, dataset)
    log.info("wrote %d pairs (%d singleton samples skipped) to %s",
             pairs.m, pairs.skipped.size, args.out)


def cmd_protocol(args) -> None:
    dataset = load_dataset(args.manifest, args.embeddings)
    proto = ev.build_protocol(dataset, args.impostors, args.max_genuine, seed=args.seed)
    ev.write_protocol(args.out, proto, dataset)
    log.info("wrote %d genuine and %d impostor pairs to %s",
             len(proto.genuine_pairs), len(proto.impostor_pairs), args.out)


COMMANDS = {
    "synth": cmd_synth,
    "optimize": cmd_optimize,
    "evaluate": cmd_evaluate,
    "pairs": cmd_pairs,
    "protocol": cmd_protocol,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    if args.command == "evaluate":
        try:
            args.grid = ev.DEFAULT_GRID if args.grid is None else parse_grid(args.grid)
            ev.check_grid(args.grid)
        except ValueError as exc:
            parser.error(f"--grid: {exc}")
        missing = [c for c in ev.PAUC_CUTOFFS if not np.isclose(args.grid, c, atol=1e-9).any()]
        if missing:
            parser.error(f"--grid must contain the points {ev.PAUC_CUTOFFS}; missing {missing}")
        if 0.0 not in args.grid:
            parser.error("--grid must start at 0")
    if args.command == "optimize":
        try:
            OptimConfig(k=args.k, lam=args.lam, epsilon=args.epsilon, iterations=args.iters,
                        repeats=args.repeats, seed=args.seed, theta_mode=args.theta_mode)
        except ValueError as exc:
            parser.error(str(exc))

    logging.basicConfig(level=args.log_level, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)
    log.info("%s config: %s", args.command, _resolved(args))
    try:
        COMMANDS[args.command](args)
    except (LoadError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
