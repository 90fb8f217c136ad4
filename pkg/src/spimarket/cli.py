"""Command-line interface: scenario parsing, dispatch, CSV emission.

Commands: solve-lp, simulate, crs, verify, report.
Exit codes: 0 ok, 1 acceptance failure, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import constraints as cons
from . import crs as crsmod
from . import experiments as ex
from . import lp as lpmod
from . import sim
from .model import (BuyerSpec, CoverageValuation, GoodSpec, LinearValuation,
                    MarketInstance, validate)

FMT = "%.9g"


class ScenarioError(Exception):
    pass


def _fmt(x) -> str:
    return FMT % float(x)


# ---------------------------------------------------------------------------
# Scenario (de)serialization


def parse_scenario(text: str) -> dict:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a JSON object")
    return raw


def _valuation_from(obj) -> object:
    kind = obj.get("kind")
    if kind == "linear":
        return LinearValuation(tuple(float(w) for w in obj["weights"]))
    if kind == "coverage":
        return CoverageValuation(
            int(obj["universe"]),
            tuple(tuple(int(e) for e in c) for c in obj["covers"]),
            tuple(float(w) for w in obj["element_weights"]))
    raise ScenarioError(f"unknown valuation kind {kind!r}")


def _family_from(obj) -> object:
    kind = obj.get("kind")
    if kind == "uniform":
        return cons.UniformMatroid(int(obj["n"]), int(obj["rank"]))
    if kind == "partition":
        return cons.PartitionMatroid(
            tuple(int(p) for p in obj["parts"]),
            tuple(int(c) for c in obj["capacities"]))
    if kind == "explicit":
        return cons.ExplicitFamily(int(obj["n"]),
                                   tuple(int(m) for m in obj["maximal"]))
    raise ScenarioError(f"unknown family kind {kind!r}")


def instance_from_scenario(scn: dict) -> MarketInstance:
    try:
        goods = tuple(GoodSpec(float(g["lambda"]), float(g["mu"]))
                      for g in scn["goods"])
        buyers = tuple(BuyerSpec(float(b["gamma"]), _valuation_from(b["valuation"]),
                                 int(b.get("family", 0)))
                       for b in scn["buyers"])
        families = tuple(_family_from(f) for f in scn["families"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed scenario: {exc}")
    instance = MarketInstance(goods, buyers, families)
    problems = validate(instance)
    if problems:
        raise ScenarioError("invalid instance: " + "; ".join(problems))
    return instance


def _valuation_to(val) -> dict:
    if isinstance(val, LinearValuation):
        return {"kind": "linear", "weights": list(val.weights)}
    if isinstance(val, CoverageValuation):
        return {"kind": "coverage", "universe": val.universe,
                "covers": [list(c) for c in val.covers],
                "element_weights": list(val.element_weights)}
    raise ScenarioError(f"unserializable valuation {type(val).__name__}")


def _family_to(fam) -> dict:
    if isinstance(fam, cons.UniformMatroid):
        return {"kind": "uniform", "n": fam.n, "rank": fam.rank}
    if isinstance(fam, cons.PartitionMatroid):
        return {"kind": "partition", "parts": list(fam.parts),
                "capacities": list(fam.capacities)}
    if isinstance(fam, cons.ExplicitFamily):
        return {"kind": "explicit", "n": fam.n, "maximal": list(fam.maximal)}
    raise ScenarioError(f"unserializable family {type(fam).__name__}")


def emit_scenario(scn: dict) -> str:
    return json.dumps(scn, indent=2, sort_keys=True) + "\n"


def scenario_from_instance(instance: MarketInstance, **extra) -> dict:
    scn = {
        "goods": [{"lambda": g.lam, "mu": g.mu} for g in instance.goods],
        "buyers": [{"gamma": b.gamma, "valuation": _valuation_to(b.valuation),
                    "family": b.family} for b in instance.buyers],
        "families": [_family_to(f) for f in instance.families],
    }
    scn.update(extra)
    return scn


def policy_from_scenario(scn: dict, instance: MarketInstance) -> sim.Policy:
    name = scn.get("policy", "combinatorial")
    opts = scn.get("crs", {})
    monotone = bool(opts.get("monotone", False))
    c = float(opts.get("c", 1.14))
    seed = int(scn.get("seed", 0))
    if name == "combinatorial":
        return sim.combinatorial_policy(instance, monotone=monotone)
    if name == "multigood":
        return sim.multigood_policy(instance, seed=seed)
    if name == "matroid-online":
        return sim.matroid_online_policy(instance, c=c)
    if name == "submodular":
        return sim.submodular_policy(instance, monotone=True,
                                     prune=bool(scn.get("prune", False)))
    if name == "greedy":
        return sim.greedy_policy(instance)
    raise ScenarioError(f"unknown policy {name!r}")


# ---------------------------------------------------------------------------
# Commands


def _load(path: str) -> dict:
    try:
        with open(path) as fh:
            return parse_scenario(fh.read())
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}")


def _emit(text: str, output: str | None) -> None:
    if output:
        with open(output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_solve_lp(args) -> int:
    scn = _load(args.scenario)
    instance = instance_from_scenario(scn)
    build = lpmod.build_on if args.benchmark == "on" else lpmod.build_off
    sol = lpmod.solve(build(instance))
    if sol.status != "optimal":
        sys.stderr.write(f"LP {sol.status}\n")
        return 1
    x = lpmod.rates_from_solution(instance, sol)
    lines = [f"value,{_fmt(sol.value)}", "good,buyer,rate"]
    for i in range(instance.n):
        for j in range(instance.m):
            lines.append(f"{i},{j},{_fmt(x[i, j])}")
    _emit("\n".join(lines) + "\n", args.output)
    return 0


def cmd_simulate(args) -> int:
    scn = _load(args.scenario)
    instance = instance_from_scenario(scn)
    policy = policy_from_scenario(scn, instance)
    horizon = args.horizon if args.horizon is not None else float(scn.get("horizon", 1e5))
    warmup = args.warmup if args.warmup is not None else scn.get("warmup")
    seed = args.seed if args.seed is not None else int(scn.get("seed", 0))
    if warmup is not None:
        warmup = float(warmup)
        if horizon <= warmup:
            raise ScenarioError("horizon must exceed warmup")
    report = sim.run(instance, policy, horizon=horizon, warmup=warmup,
                     seed=seed, trace=args.trace)
    lines = [
        f"policy,{report.policy_kind}",
        f"horizon,{_fmt(report.horizon)}",
        f"warmup,{_fmt(report.warmup)}",
        f"seed,{report.seed}",
        f"reward_rate,{_fmt(report.reward_rate)},{_fmt(report.reward_rate_se)}",
        "good,buyer,sell_rate,sell_rate_se",
    ]
    for i in range(instance.n):
        for j in range(instance.m):
            lines.append(f"{i},{j},{_fmt(report.sell_rate[i, j])},"
                         f"{_fmt(report.sell_rate_se[i, j])}")
    lines.append("good,pr_present,pr_avail,pr_saved")
    for i in range(instance.n):
        lines.append(f"{i},{_fmt(report.pr_present[i])},"
                     f"{_fmt(report.pr_avail[i])},{_fmt(report.pr_saved[i])}")
    if args.trace and report.trace:
        lines.append("trace_time,kind,index,proposal_mask,sold_mask")
        tt, tk, ti, tr, ts = report.trace
        for r in range(len(tt)):
            lines.append(f"{_fmt(tt[r])},{tk[r]},{ti[r]},{tr[r]},{ts[r]}")
    _emit("\n".join(lines) + "\n", args.output)
    return 0


def cmd_crs(args) -> int:
    scn = _load(args.scenario)
    instance = instance_from_scenario(scn)
    j = args.buyer
    if not 0 <= j < instance.m:
        raise ScenarioError(f"buyer index {j} out of range")
    sol = lpmod.solve(lpmod.build_off(instance))
    if sol.status != "optimal":
        sys.stderr.write(f"LP {sol.status}\n")
        return 1
    x = lpmod.rates_from_solution(instance, sol)
    buyer = instance.buyers[j]
    marg = np.minimum(x[:, j] / buyer.gamma, 1.0)
    fam = instance.families[buyer.family]
    table = crsmod.optimal_crs(fam, marg, monotone=args.monotone)
    out = [f"balance,{_fmt(table.achieved_balance)}",
           "marginals," + ",".join(_fmt(v) for v in marg)]
    _emit("\n".join(out) + "\n" + crsmod.dump_table(table), args.output)
    return 0


def cmd_verify(args) -> int:
    specs = ex.default_suite(fast=args.suite == "fast",
                             negative_control=args.negative_control)
    report = ex.run_suite(specs, parallelism=args.parallelism)
    sys.stdout.write(ex.suite_summary(report))
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(ex.suite_csv(report))
    return 0 if report.all_passed else 1


def cmd_report(args) -> int:
    specs = ex.default_suite(fast=args.suite == "fast")
    report = ex.run_suite(specs, parallelism=args.parallelism)
    csv_text = ex.suite_csv(report)
    _emit(csv_text, args.output)
    sys.stderr.write(ex.suite_summary(report))
    return 0 if report.all_passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spimarket",
        description="Stationary market LPs, contention resolution, and simulation")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("solve-lp", help="solve a rate relaxation")
    p.add_argument("scenario")
    p.add_argument("--benchmark", choices=("off", "on"), default="off")
    p.add_argument("--output")
    p.set_defaults(func=cmd_solve_lp)

    p = subs.add_parser("simulate", help="run the market simulator")
    p.add_argument("scenario")
    p.add_argument("--horizon", type=float)
    p.add_argument("--warmup", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--trace", type=int, default=0,
                   help="record up to N events in the output")
    p.add_argument("--output")
    p.set_defaults(func=cmd_simulate)

    p = subs.add_parser("crs", help="build and print a CRS table")
    p.add_argument("scenario")
    p.add_argument("--buyer", type=int, default=0)
    p.add_argument("--monotone", action="store_true")
    p.add_argument("--output")
    p.set_defaults(func=cmd_crs)

    p = subs.add_parser("verify", help="run the acceptance suite")
    p.add_argument("--suite", choices=("default", "fast"), default="default")
    p.add_argument("--negative-control", action="store_true")
    p.add_argument("--parallelism", type=int, default=4)
    p.add_argument("--output")
    p.set_defaults(func=cmd_verify)

    p = subs.add_parser("report", help="run the suite and emit CSV")
    p.add_argument("--suite", choices=("default", "fast"), default="default")
    p.add_argument("--parallelism", type=int, default=4)
    p.add_argument("--output")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
