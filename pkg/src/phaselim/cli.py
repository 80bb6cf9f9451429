"""Command-line entry point.

Subcommands: ``run`` executes a configured experiment and writes the trace,
summary, and event CSVs; ``design`` solves a G-optimal design for an action
CSV; ``net`` writes a unit-ball covering; ``hard`` writes a sampled
hard-instance vertex family.  Exit codes: 0 success, 1 configuration error,
2 runtime failure in every replication.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .design import ActionSet, solve_g_optimal
from .environment import hard_instance_hypercube
from .errors import ConfigurationError, ExperimentError, PhaselimError, ValidationError
from .harness import ExperimentConfig, run_experiment
from .policies import epsilon_net


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phaselim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configured experiment")
    p_run.add_argument("--config", required=True, help="JSON experiment config")
    p_run.add_argument("--out", default=".", help="output directory for the CSVs")
    p_run.add_argument("--workers", type=int, default=None, help="parallel replications")

    p_design = sub.add_parser("design", help="solve a G-optimal design for an action CSV")
    p_design.add_argument("--actions", required=True, help="CSV with one action per row")
    p_design.add_argument("--tol", type=float, default=0.01, help="relative g tolerance")
    p_design.add_argument("--out", default=None, help="weights CSV (default: stdout)")

    p_net = sub.add_parser("net", help="write a unit-ball covering as an action CSV")
    p_net.add_argument("--d", type=int, required=True)
    p_net.add_argument("--eps", type=float, required=True)
    p_net.add_argument("--out", required=True)

    p_hard = sub.add_parser("hard", help="sample a hard-instance vertex family")
    p_hard.add_argument("--d", type=int, required=True)
    p_hard.add_argument("--n", type=int, required=True)
    group = p_hard.add_mutually_exclusive_group(required=True)
    group.add_argument("--alpha", type=float, default=None)
    group.add_argument("--gamma", type=float, default=None)
    p_hard.add_argument("--m", type=int, default=None, help="required with --gamma")
    p_hard.add_argument("--c1", type=float, default=1.0)
    p_hard.add_argument("--seed", type=int, required=True)
    p_hard.add_argument("--out", required=True)
    return parser


def _cmd_run(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    result = run_experiment(cfg, out_dir=args.out, workers=args.workers)
    for alg in result.summary.algorithms():
        mean = result.summary.final_mean(alg)
        std = result.summary.final_std(alg)
        print(f"{alg}: final mean {mean:.4f} (std {std:.4f})")
    if result.failures:
        print(f"{len(result.failures)} replication runs failed", file=sys.stderr)
    return 0


def _cmd_design(args) -> int:
    design = solve_g_optimal(ActionSet.from_csv(args.actions), tol=args.tol)
    lines = ["id,weight"] + [f"{int(a)},{float(w)!r}" for a, w in zip(design.ids, design.weights)]
    text = "\n".join(lines) + "\n"
    if args.out is None:
        sys.stdout.write(text)
        print(f"g_value: {design.g!r}", file=sys.stderr)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"g_value: {design.g!r}")
    return 0


def _cmd_net(args) -> int:
    net = epsilon_net(args.d, args.eps)
    np.savetxt(args.out, net.matrix, delimiter=",")
    print(f"wrote {net.k} points to {args.out}")
    return 0


def _cmd_hard(args) -> int:
    rng = np.random.default_rng(args.seed)
    hard = hard_instance_hypercube(
        args.d, args.n, alpha=args.alpha, c1=args.c1, rng=rng, gamma=args.gamma, m=args.m
    )
    with open(args.out, "w") as fh:
        fh.write(f"# norm={hard.norm!r} eta={hard.eta!r} c3={hard.c3!r} c4={hard.c4!r}\n")
        for z, row_index in sorted(hard.z_index.items()):
            coords = ",".join(repr(float(v)) for v in hard.vertices[row_index])
            signs = ",".join(str(int(s)) for s in z)
            fh.write(f"{signs},{coords}\n")
    print(f"wrote {hard.vertices.shape[0]} vertices to {args.out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "design": _cmd_design, "net": _cmd_net, "hard": _cmd_hard}
    try:
        return handlers[args.command](args)
    except (ConfigurationError, ValidationError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except ExperimentError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except PhaselimError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
