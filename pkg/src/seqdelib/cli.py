"""Command-line front end.

Exit codes: 0 on success, 1 when an acceptance criterion fails, 2 on usage
or parse errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from seqdelib import deliberation as dl
from seqdelib import distortion_lab as lab
from seqdelib import median_graph as mg
from seqdelib import suites
from seqdelib.bargaining import lemma7_check
from seqdelib.instance_io import GENERATORS, Instance, InstanceError, generate_instance, load_instance
from seqdelib.metric_core import DomainError, distortion, social_costs

MECHANISMS = ("sequential", "random-dictatorship", "oneshot-triple", "simplex")
REPORT_COLUMNS = ("instance", "mechanism", "T", "replicas", "mean_SC", "SE", "OPT_SC",
                  "distortion", "squared_distortion", "seed")


class UsageError(Exception):
    pass


def _add_instance_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance", help="JSON instance file")
    src.add_argument("--generator", help="named generator, e.g. kstar:k=100 (see 'seqdelib generators')")


def _add_output_args(p: argparse.ArgumentParser, formats: bool = True) -> None:
    p.add_argument("--out", help="write the report here instead of stdout")
    if formats:
        p.add_argument("--format", choices=("csv", "json"), default="csv")


def _instance(args) -> Instance:
    return load_instance(args.instance) if args.instance else generate_instance(args.generator)


def _emit(args, text: str) -> None:
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _table(rows: list[dict], columns: Sequence[str], fmt: str) -> str:
    if fmt == "json":
        return json.dumps([{c: r[c] for c in columns} for r in rows], indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def _positive(name: str, value: int) -> None:
    if value < 1:
        raise UsageError(f"{name} must be >= 1")


# -- commands --------------------------------------------------------------------


def cmd_verify(args) -> int:
    inst = _instance(args)
    lines = []
    if inst.simplex is not None:
        lines.append(f"simplex: d={inst.simplex.d}")
    elif inst.graph is None:
        lines.append(f"metric: ok ({inst.space.n} points)")
        lines.append("median: n/a (not a unit-weight graph)")
    else:
        verdict = mg.verify_median_graph(inst.graph)
        if verdict:
            lines.append(f"median: yes, D={mg.hypercube_embed(inst.graph).dim}")
        else:
            u, v, w = verdict.counterexample
            lines.append(f"median: no, triple ({u}, {v}, {w}) has {verdict.median_count} medians")
    if inst.profile is not None:
        lines.append(f"agents: {len(inst.profile.points)} entries, total weight {inst.profile.total}")
    _emit(args, "\n".join(lines) + "\n")
    return 0


def _simplex_row(inst: Instance, args) -> dict:
    sim = lab.simplex_simulate(inst.simplex, args.rounds, args.replicas, args.seed, threads=args.threads)
    opt = inst.simplex.opt_cost()
    return {
        "instance": inst.name, "mechanism": "simplex", "T": args.rounds, "replicas": args.replicas,
        "mean_SC": sim.cost, "SE": sim.cost_se, "OPT_SC": opt,
        "distortion": sim.cost / opt, "squared_distortion": sim.sq_cost / opt**2, "seed": args.seed,
    }


def cmd_run(args) -> int:
    _positive("--replicas", args.replicas)
    _positive("--rounds", args.rounds)
    _positive("--threads", args.threads)
    inst = _instance(args)
    finals = None
    if args.mechanism == "simplex":
        if inst.simplex is None:
            raise UsageError("mechanism 'simplex' needs a simplex instance (--generator simplex:p=...)")
        row = _simplex_row(inst, args)
    else:
        if inst.simplex is not None:
            raise UsageError(f"mechanism {args.mechanism!r} does not run on simplex instances")
        prof = inst.require_profile()
        space = inst.space
        if args.mechanism == "sequential":
            finals = dl.simulate_finals(space, prof, args.rounds, args.replicas, args.seed, threads=args.threads)
        elif args.mechanism == "random-dictatorship":
            finals = dl.simulate_rd(prof, args.replicas, args.seed, threads=args.threads)
        else:
            if not inst.is_median:
                raise UsageError("mechanism 'oneshot-triple' needs a median-graph instance")
            finals = dl.simulate_oneshot(space, prof, args.replicas, args.seed, threads=args.threads)
        s = dl.summarize_finals(space, prof, finals)
        row = {
            "instance": inst.name, "mechanism": args.mechanism,
            "T": args.rounds if args.mechanism == "sequential" else 0, "replicas": args.replicas,
            "mean_SC": s.mean_sc, "SE": s.se, "OPT_SC": s.opt_sc,
            "distortion": s.distortion, "squared_distortion": s.squared_distortion, "seed": args.seed,
        }
    if args.finals_out:
        if finals is None:
            raise UsageError("--finals-out is not available for the simplex mechanism")
        rows = [{"replica": k, "final": int(v)} for k, v in enumerate(finals)]
        Path(args.finals_out).write_text(_table(rows, ("replica", "final"), args.format))
    _emit(args, _table([row], REPORT_COLUMNS, args.format))
    return 0


def _median_instance(inst: Instance):
    if not inst.is_median:
        raise UsageError(
            f"instance {inst.name!r} is not a median graph; exact chains need one "
            "(use 'seqdelib run', which simulates on any metric)"
        )
    return inst.space, inst.require_profile()


def cmd_stationary(args) -> int:
    inst = _instance(args)
    g, prof = _median_instance(inst)
    chain = dl.build_chain(g, prof)
    pi = dl.stationary_distribution(chain)
    costs = social_costs(g.metric(), prof)
    seq = float(pi.prob @ costs[pi.support])
    rd = dl.rd_distribution(prof)
    rd_cost = float(rd.prob @ costs[rd.support])
    report = {
        "instance": inst.name,
        "closure_size": chain.size,
        "stationary": {str(k): v for k, v in pi.as_dict().items()},
        "distortion": distortion(g.metric(), prof, pi),
        "expected_SC": seq,
        "rd_expected_SC": rd_cost,
        "dominates_rd": seq <= rd_cost + 1e-9 * max(1.0, rd_cost),
    }
    if args.format == "json":
        _emit(args, json.dumps(report, indent=2) + "\n")
        return 0
    lines = [f"instance: {inst.name}", f"closure size: {chain.size}", "stationary distribution:"]
    lines += [f"  {k} {_fmt(v)}" for k, v in pi.as_dict().items()]
    lines += [
        f"distortion: {_fmt(report['distortion'])}",
        f"expected SC: {_fmt(seq)}",
        f"random dictatorship expected SC: {_fmt(rd_cost)}",
        f"dominates random dictatorship: {'yes' if report['dominates_rd'] else 'no'}",
    ]
    _emit(args, "\n".join(lines) + "\n")
    return 0


def cmd_suite(args) -> int:
    if args.name not in suites.SUITES:
        raise UsageError(f"unknown suite {args.name!r}; choose from {', '.join(suites.SUITES)}")
    results = suites.run_suite(args.name, args.scale, args.threads)
    text = "\n".join(r.line() for r in results) + "\n"
    _emit(args, text)
    return 0 if all(r.passed for r in results) else 1


def cmd_trajectory(args) -> int:
    inst = _instance(args)
    prof = inst.require_profile()
    if inst.space is None:
        raise UsageError("trajectories need a finite instance")
    traj = dl.run_sequential(inst.space, prof, dl.DeliberationConfig(args.rounds, args.seed, args.initial))
    _emit(args, traj.to_csv())
    return 0


def cmd_chain(args) -> int:
    g, prof = _median_instance(_instance(args))
    _emit(args, dl.build_chain(g, prof).triplets_csv())
    return 0


def cmd_embed(args) -> int:
    inst = _instance(args)
    if not inst.is_median:
        raise UsageError("embedding needs a median-graph instance")
    _emit(args, json.dumps(inst.space.embedding.to_json(), indent=2) + "\n")
    return 0


def cmd_bargain_bound(args) -> int:
    _positive("--samples", args.samples)
    inst = _instance(args)
    prof = inst.require_profile()
    space = inst.metric()
    rng = np.random.default_rng(args.seed)
    rows = []
    for k in range(args.samples):
        i, j, u = (int(x) for x in rng.choice(prof.points, 3))
        a = int(rng.integers(space.n))
        rec = lemma7_check(space, prof, i, j, u, a)
        rows.append({"sample": k, "i": i, "j": j, "u": u, "a": a, "outcome": rec.outcome,
                     "Z_u": rec.z_u, "Z_i": rec.z_i, "Z_j": rec.z_j, "Z_a": rec.z_a,
                     "realized": rec.realized, "bound": rec.bound, "holds": rec.holds})
    cols = ("sample", "i", "j", "u", "a", "outcome", "Z_u", "Z_i", "Z_j", "Z_a", "realized", "bound", "holds")
    _emit(args, _table(rows, cols, args.format))
    return 0


def cmd_generators(args) -> int:
    sys.stdout.write("\n".join(GENERATORS) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqdelib", description="Sequential pairwise deliberation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="check metric axioms / median-graph property")
    _add_instance_args(p)
    _add_output_args(p, formats=False)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("run", help="Monte Carlo run of a mechanism")
    _add_instance_args(p)
    p.add_argument("--mechanism", choices=MECHANISMS, default="sequential")
    p.add_argument("--rounds", type=int, default=9)
    p.add_argument("--replicas", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--finals-out", help="also write per-replica final outcomes here")
    _add_output_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("stationary", help="exact stationary distribution on a median graph")
    _add_instance_args(p)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stationary)

    p = sub.add_parser("suite", help="run an acceptance suite")
    p.add_argument("name", help=f"one of: {', '.join(suites.SUITES)}")
    p.add_argument("--scale", choices=suites.SCALES, default="full")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("trajectory", help="export one run as CSV (round,u,v,a,o)")
    _add_instance_args(p)
    p.add_argument("--rounds", type=int, default=9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--initial", type=int, help="fixed first disagreement point")
    p.add_argument("--out")
    p.set_defaults(func=cmd_trajectory)

    p = sub.add_parser("chain", help="export the transition matrix as (from,to,prob) triplets")
    _add_instance_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_chain)

    p = sub.add_parser("embed", help="export the hypercube embedding as JSON")
    _add_instance_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("bargain-bound", help="export bargain distance-bound check records")
    _add_instance_args(p)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    _add_output_args(p)
    p.set_defaults(func=cmd_bargain_bound)

    p = sub.add_parser("generators", help="list named instance generators")
    p.set_defaults(func=cmd_generators)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, InstanceError, DomainError) as exc:
        print(f"seqdelib: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
