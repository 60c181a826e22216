"""Command-line entry point: ``collapse-walk {run,predict,oracle,signal-scan,sequence-test}``."""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

from . import __version__, oracles
from .config import load_config
from .errors import CollapseWalkError, ConfigError, DomainError, InstanceTooLargeError, ValidationError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_CHECK = 2


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2)


def _write_or_print(text: str, out_dir: str | None, name: str) -> None:
    if out_dir:
        path = Path(out_dir)
        try:
            path.mkdir(parents=True, exist_ok=True)
            (path / name).write_text(text, encoding="utf-8", newline="\n")
        except OSError as exc:
            raise ConfigError(f"cannot write to output directory {path}: {exc}") from exc
        print(str(path / name))
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    from .runner import run

    cfg = load_config(args.config).with_overrides(seed=args.seed, trials=args.trials)
    result = run(cfg, out_dir=args.out, traces=True if args.traces else None, dump_state=args.dump_state)
    rep = result.report
    print(f"kind={rep.kind} trials={rep.trials} seed={rep.seed} wall_time={rep.wall_time:.2f}s")
    for cell, count in rep.counts.items():
        print(f"  {cell}: {count} ({rep.frequencies[cell]:.6f})")
    print(f"passed={rep.passed}")
    if args.dump_state:
        print(result.built.state.to_json())
    if args.check and not rep.passed:
        return EXIT_CHECK
    return EXIT_OK


def cmd_predict(args) -> int:
    from .scenarios import predict

    cfg = load_config(args.config)
    values = predict(cfg.scenario, cfg.scale)
    _write_or_print(_dump(values) + "\n", args.out, "predict.json")
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .sequencer import SpacetimeEvent, count_linear_extensions

    which = args.which
    if which == "markov":
        out = {"p0": args.p0, "d": args.d, "absorption_probability": oracles.markov_absorption(args.p0, args.d),
               "expected_steps": oracles.markov_expected_duration(args.p0, args.d)}
    elif which == "walk":
        dist = oracles.walk_distribution(args.p0, args.d, args.steps)
        out = {"p0": args.p0, "d": args.d, "steps": args.steps, "distribution": dist.tolist()}
    elif which == "extensions":
        if args.config:
            events = load_config(args.config).scenario.get("events", [])
        else:
            events = json.loads(args.events)
        evs = [SpacetimeEvent.from_dict(e) for e in events]
        table = {e.id: (e.t, e.x) for e in evs}
        exts = oracles.brute_force_extensions([e.id for e in evs], oracles.light_cone_precedes(table))
        out = {"count": len(exts), "extensions": [list(e) for e in exts],
               "count_dp": count_linear_extensions(evs)}
    elif which == "marginals":
        from .scenarios import build_scenario
        from .signaling import ProbabilityRule, sequential_joint, simultaneous_joint

        built = build_scenario(load_config(args.config).scenario)
        if built.state.n_subsystems != 2:
            raise ValidationError("marginals need a two-wing scenario")
        rule = ProbabilityRule.parse(args.rule)
        joint = simultaneous_joint(rule, built.state)
        out = {"rule": rule.name, "cells": built.cells, "joint": joint.reshape(-1).tolist(),
               "wing_A": joint.sum(axis=1).tolist(), "wing_B": joint.sum(axis=0).tolist(),
               "A_first": sequential_joint(rule, built.state, 0).reshape(-1).tolist(),
               "B_first": sequential_joint(rule, built.state, 1).reshape(-1).tolist()}
    elif which == "singlet":
        coeffs = oracles.singlet_expansion(args.alpha, args.beta, args.gamma, args.delta)
        out = {f"{a}{b}": [c.real, c.imag] for (a, b), c in coeffs.items()}
        out["densities"] = {f"{a}{b}": abs(c) ** 2 for (a, b), c in coeffs.items()}
    elif which == "eraser":
        out = {"N": args.n, "d": args.d, **oracles.eraser_deviant_expectation(args.n, args.d, args.p0)}
    else:  # amplified
        out = {"d": args.d, "case_absorbed": oracles.amplified_deviation(args.d, 0.0),
               "case_doubled": oracles.amplified_deviation(args.d, 2 * args.d)}
        out["average"] = 0.5 * (out["case_absorbed"] + out["case_doubled"])
    print(_dump(out))
    return EXIT_OK


def cmd_signal_scan(args) -> int:
    from .signaling import ProbabilityRule, born_uniqueness_scan, rows_to_csv, scan_rules

    ks = [float(k) for k in args.ks.split(",")]
    scan = born_uniqueness_scan(ks, args.samples, args.seed)
    rules = [ProbabilityRule.parse(r) for r in args.rules.split(",")] if args.rules else []
    rows = scan_rules(rules, args.samples, args.seed) + scan.rows
    _write_or_print(rows_to_csv(rows), args.out, "signal_scan.csv")
    print(_dump(scan.to_json_dict()), file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def cmd_sequence_test(args) -> int:
    from .scenarios import build_scenario
    from .sequencer import all_linear_extensions, order_invariance_test
    from .signaling import ProbabilityRule

    cfg = load_config(args.config).with_overrides(seed=args.seed, trials=args.trials)
    if cfg.master_seed is None:
        raise ConfigError("a master_seed is required (set it in the config or pass --seed)")
    built = build_scenario(cfg.scenario)
    orders = all_linear_extensions(built.events)
    rule = ProbabilityRule.parse(args.rule) if args.rule else None
    report = order_invariance_test(built, orders, cfg.trials, cfg.master_seed, rule)
    alpha = cfg.tolerances.chi2_alpha
    _write_or_print(_dump(report.to_json_dict()) + "\n", args.out, "sequence_test.json")
    if args.check and report.p_value <= alpha:
        return EXIT_CHECK
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="collapse-walk", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the trials of a config and write the report")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--trials", type=int)
    r.add_argument("--check", action="store_true", help="exit 2 when a statistical check fails")
    r.add_argument("--out", help="output directory (overrides the config)")
    r.add_argument("--traces", action="store_true", help="also write per-trial JSON-lines traces")
    r.add_argument("--dump-state", action="store_true", help="write the initial and a final state as JSON")
    r.set_defaults(func=cmd_run)

    pr = sub.add_parser("predict", help="closed-form predictions for a config")
    pr.add_argument("--config", required=True)
    pr.add_argument("--out")
    pr.set_defaults(func=cmd_predict)

    o = sub.add_parser("oracle", help="exact reference values for small instances")
    o.add_argument("which", choices=["markov", "walk", "extensions", "marginals", "singlet", "eraser", "amplified"])
    o.add_argument("--p0", type=float, default=0.5)
    o.add_argument("--d", type=float, default=0.01)
    o.add_argument("--steps", type=int, default=10)
    o.add_argument("--n", type=int, default=50)
    o.add_argument("--config")
    o.add_argument("--events", default="[]", help="JSON list of {id, t, x} events")
    o.add_argument("--rule", default="born")
    o.add_argument("--alpha", type=float, default=1 / math.sqrt(2))
    o.add_argument("--beta", type=float, default=-1 / math.sqrt(2))
    o.add_argument("--gamma", type=float, default=1 / math.sqrt(2))
    o.add_argument("--delta", type=float, default=1 / math.sqrt(2))
    o.set_defaults(func=cmd_oracle)

    s = sub.add_parser("signal-scan", help="signaling gaps of candidate probability rules")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--samples", type=int, default=100)
    s.add_argument("--ks", default="0.5,1,1.5,2,2.5,3")
    s.add_argument("--rules", default="abs-amplitude,equal-nonzero,max-deterministic,cosine-angle")
    s.add_argument("--out")
    s.set_defaults(func=cmd_signal_scan)

    q = sub.add_parser("sequence-test", help="outcome statistics across all admissible event orders")
    q.add_argument("--config", required=True)
    q.add_argument("--seed", type=int)
    q.add_argument("--trials", type=int)
    q.add_argument("--rule", help="sample from this probability rule instead of running the shift dynamics")
    q.add_argument("--check", action="store_true")
    q.add_argument("--out")
    q.set_defaults(func=cmd_sequence_test)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", message=".*TBB.*")
            return args.func(args)
    except (ConfigError, ValidationError, DomainError, InstanceTooLargeError, CollapseWalkError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
