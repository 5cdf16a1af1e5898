"""Command line entry point: ``swsts run|sweep|reach|xsim|clock|survival``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict

from . import lab
from .config import ConfigurationError


def _params(items) -> dict:
    out = {}
    for it in items or ():
        if "=" not in it:
            raise ConfigurationError(f"parameter {it!r} is not key=value")
        k, v = it.split("=", 1)
        out[k] = v
    return out


def _sizes(text: str) -> list:
    sizes = []
    for part in text.split(","):
        if "-" in part:
            lo, hi = part.split("-")
            sizes.extend(range(int(lo), int(hi) + 1))
        elif part:
            sizes.append(int(part))
    return sizes


def _emit(record: dict, out_dir, name: str) -> None:
    text = json.dumps(record, sort_keys=True, indent=2, default=str)
    if out_dir:
        with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)


def _experiment(args, sizes) -> dict:
    raw = summary = None
    if args.out:
        raw = os.path.join(args.out, "trials.csv")
        summary = os.path.join(args.out, "summary.json")
    cfg = lab.ExperimentConfig(args.protocol, sizes, args.trials, args.cap, args.seed,
                               _params(args.param), args.oracle_budget, raw, summary,
                               args.workers)
    report, _ = lab.run_experiment(cfg)
    return asdict(report)


def cmd_run(args) -> dict:
    return _experiment(args, [args.n])


def cmd_sweep(args) -> dict:
    return _experiment(args, _sizes(args.sizes))


def cmd_reach(args) -> dict:
    from .wqo import (dump_oracle, encode_config, error_region, exact_hitting, pred_star,
                      build_reach)
    setup = lab.make_setup(args.protocol, _params(args.param), args.n)
    oracle = build_reach(setup.spec, setup.init, setup.symmetric, args.oracle_budget)
    rec = {"protocol": args.protocol, "n": args.n, "states": len(oracle)}
    if args.out:
        with open(os.path.join(args.out, "oracle.json"), "w", encoding="utf-8") as fh:
            fh.write(dump_oracle(oracle))
    target = setup.stop.target
    if args.query in ("pred_star", "all") and target is not None:
        rec["pred_star"] = len(pred_star(oracle, target))
        rec["init_in_pred_star"] = oracle.key(setup.init) in {oracle.key(c) for c in pred_star(oracle, target)}
    if args.query in ("hitting", "all") and target is not None:
        rep = exact_hitting(oracle, target)
        key = oracle.states[oracle.idx(setup.init)]
        rec["expected_steps"] = rep.steps(key)
        rec["target_prob"] = rep.target_prob[key]
    if args.query in ("error_region", "all"):
        spec = setup.spec
        if spec.v0 is None or spec.v1 is None:
            if args.query == "error_region":
                raise ConfigurationError(f"{spec.name} declares no output sets")
        else:
            region = error_region(oracle, spec.v0, spec.v1)
            rec["error_region"] = len(region)
            rec["init_in_error_region"] = oracle.key(setup.init) in {oracle.key(c) for c in region}
            if args.list:
                rec["error_configs"] = [encode_config(c) for c in sorted(region, key=repr)]
    return rec


def cmd_xsim(args) -> dict:
    from .models import ModelKind
    from .textfmt import dumps, load
    from .wqo import build_reach, distribution_after
    from . import xsim
    pop, _ = load(args.input)
    tgt = args.target.upper()
    if tgt == "GOSSIP":
        comp = xsim.compile_to_gossip(pop, args.c)
    elif tgt in ("PUSH", "SHUFFLE"):
        comp = xsim.compile_to_tokens(pop, ModelKind(tgt), args.k)
    elif tgt == "MATCHING":
        comp = xsim.compile_to_matching(pop)
    elif tgt == "BETWEEN":
        comp = xsim.compile_ordered_to_between(pop)
    else:
        raise ConfigurationError(f"unknown target model {args.target!r}")
    text = dumps(comp.spec, xsim.compiled_alphabet(comp), comp.active)
    rec = {"source": pop.name, "compiled": comp.spec.name, "rules": text.count("\n") - 4}
    if args.out:
        path = os.path.join(args.out, f"{comp.spec.name.replace('@', '_')}.proto")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        rec["file"] = path
    if pop.input_map is None:
        raise ConfigurationError(f"{pop.name} declares no input map")
    x = pop.input_map((sorted(pop.input_alphabet)[0],) * args.n)
    dists, token_ok, incomplete = xsim.faithfulness(comp, x, args.trials, args.steps, args.seed)
    oracle = build_reach(pop, x, budget=args.oracle_budget)
    tv = []
    for m in range(args.steps):
        ref: dict = {}
        for c, p in distribution_after(oracle, x, m + 1).items():
            key = xsim.multiset_key(c)
            ref[key] = ref.get(key, 0.0) + float(p)
        tv.append(xsim.total_variation(dists[m], ref))
    rec.update(n=args.n, trials=args.trials, total_variation=tv, incomplete=incomplete,
               token_ok=token_ok if comp.active is not None else None)
    return rec


def cmd_clock(args) -> dict:
    from .core import trial_seed
    from .protocols import clock_expected_firing, phase_clock_harness, simple_clock
    b = simple_clock(args.k, cyclic=True)
    rec = phase_clock_harness(b.spec, b.extra["tick"], b.extra["tock"], args.rounds,
                              b.init(args.n), trial_seed(args.seed, 0), args.cap)
    return {"k": args.k, "n": args.n, "rounds": len(rec.lengths), "capped": rec.capped,
            "failed": rec.failed, "min_length": rec.min_length,
            "mean_length": sum(rec.lengths) / len(rec.lengths) if rec.lengths else None,
            "firing_mean_exact": float(clock_expected_firing(args.n, args.k)),
            "histogram": rec.histogram()}


def cmd_survival(args) -> dict:
    from fractions import Fraction
    rep = lab.survival_experiment(args.trials, args.threshold, args.seed,
                                  Fraction(args.aa_rate), args.backend)
    return asdict(rep)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed")
    common.add_argument("--trials", type=int, default=1000)
    common.add_argument("--cap", type=int, default=10 ** 7, help="step cap per trial")
    common.add_argument("--out", help="output directory")
    common.add_argument("--oracle-budget", type=int, default=20000,
                        help="largest state space to enumerate")

    p = argparse.ArgumentParser(prog="swsts", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    def proto(sp):
        sp.add_argument("protocol", help="built-in name or protocol file")
        sp.add_argument("--param", action="append", help="key=value protocol parameter")
        sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("run", parents=[common], help="one experiment at one size")
    proto(sp)
    sp.add_argument("--n", type=int, required=True)
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("sweep", parents=[common], help="size sweep with power-law fit")
    proto(sp)
    sp.add_argument("--sizes", required=True, help="e.g. 3-8 or 16,32,64")
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("reach", parents=[common], help="build a reachability oracle and query it")
    proto(sp)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--query", choices=["none", "pred_star", "hitting", "error_region", "all"],
                    default="all")
    sp.add_argument("--list", action="store_true", help="list error-region configurations")
    sp.set_defaults(fn=cmd_reach)

    sp = sub.add_parser("xsim", parents=[common], help="compile to another model and check faithfulness")
    sp.add_argument("input", help="POP protocol file")
    sp.add_argument("--target", required=True, help="gossip, push, shuffle, matching or between")
    sp.add_argument("-c", type=int, default=2, help="GOSSIP exponent")
    sp.add_argument("-k", type=int, default=1, help="SHUFFLE tokens per agent")
    sp.add_argument("--n", type=int, default=3, help="simulated agents")
    sp.add_argument("--steps", type=int, default=3, help="effective steps compared")
    sp.set_defaults(fn=cmd_xsim)

    sp = sub.add_parser("clock", parents=[common], help="phase-clock round lengths")
    sp.add_argument("--k", type=int, default=2)
    sp.add_argument("--n", type=int, default=8)
    sp.add_argument("--rounds", type=int, default=100)
    sp.set_defaults(fn=cmd_clock)

    sp = sub.add_parser("survival", parents=[common], help="non-closed CRN survival estimate")
    sp.add_argument("--threshold", type=int, default=10 ** 4)
    sp.add_argument("--aa-rate", default="1/2")
    sp.add_argument("--backend", choices=["numba", "python"], default="numba")
    sp.set_defaults(fn=cmd_survival)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if getattr(args, "out", None):
            os.makedirs(args.out, exist_ok=True)
        rec = args.fn(args)
    except (ConfigurationError, ValueError, OSError, KeyError, RuntimeError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.cmd}
        print(json.dumps(err), file=sys.stderr)
        return 2
    _emit(rec, args.out, f"{args.cmd}.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
