"""Trial orchestration, statistics and artifact writing for ``collapse-walk run``."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__, oracles
from .config import ExperimentConfig
from .engine import (DEFAULT_MAX_STEPS, EnsembleResult, final_amplitudes, final_state, run_collapse,
                     simulate_ensemble)
from .errors import ConfigError, DomainError, InstanceTooLargeError
from .scenarios import (BuiltScenario, amplified_deviation_from_densities, build_scenario,
                        eraser_cross_terms, predict)
from .sequencer import all_linear_extensions, sequence_events
from .stats import binomial_check, chi_square_gof, mean_check
from . import rng as _rng

ENUMERATE_ORDERS_LIMIT = 8


@dataclass
class RunReport:
    config: dict
    kind: str
    trials: int
    seed: int
    counts: dict[str, int]
    frequencies: dict[str, float]
    predictions: dict[str, Any]
    tests: dict[str, Any]
    clamps: dict[str, int]
    steps: dict[str, float]
    passed: bool
    wall_time: float = 0.0
    estimator: dict[str, Any] = field(default_factory=dict)
    version: str = __version__

    def to_json_dict(self) -> dict:
        return {
            "version": self.version,
            "config": self.config,
            "kind": self.kind,
            "trials": self.trials,
            "seed": self.seed,
            "counts": self.counts,
            "frequencies": self.frequencies,
            "predictions": self.predictions,
            "tests": self.tests,
            "clamps": self.clamps,
            "steps": self.steps,
            "estimator": self.estimator,
            "passed": self.passed,
            "wall_time": self.wall_time,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"


@dataclass
class RunResult:
    report: RunReport
    built: BuiltScenario
    ensemble: EnsembleResult
    orders: np.ndarray | None


def trial_orders(built: BuiltScenario, trials: int, seed: int, policy: str) -> np.ndarray | None:
    """Per-trial block execution orders sampled from the events' linear extensions."""
    if len(built.stream.blocks) < 2:
        return None
    idx = {b.key: k for k, b in enumerate(built.stream.blocks)}
    if policy == "uniform-extension" and len(built.events) <= ENUMERATE_ORDERS_LIMIT:
        exts = np.array([[idx[e] for e in o] for o in all_linear_extensions(built.events)], dtype=np.int64)
        pick = _rng.trial_generator(seed, 0, "orders").integers(len(exts), size=trials)
        return exts[pick]
    out = np.empty((trials, len(built.stream.blocks)), dtype=np.int64)
    for t in range(trials):
        out[t] = [idx[e] for e in sequence_events(built.events, seed, t, policy)]
    return out


def _counts_and_tests(cfg: ExperimentConfig, built: BuiltScenario, ens: EnsembleResult):
    counts = ens.joint_counts()
    trials = ens.trials
    freqs = {k: v / trials for k, v in counts.items()}
    kind = built.scenario.kind
    tests: dict[str, Any] = {}
    predictions: dict[str, Any] = {}
    estimator: dict[str, Any] = {}
    passed = True
    sig = cfg.tolerances.sigma
    if kind in ("binary", "multi-outcome", "bell-epr"):
        born = {c: float(p) for c, p in zip(built.cells, built.born)}
        predictions["born"] = born
        checks = [binomial_check(c, counts.get(c, 0), trials, born[c], sig) for c in built.cells]
        tests["binomial"] = [c.to_json_dict() for c in checks]
        gof = chi_square_gof([counts.get(c, 0) for c in built.cells], [born[c] for c in built.cells])
        tests["chi_square"] = gof.to_json_dict()
        tests["incomplete"] = counts["incomplete"]
        passed = all(c.passed for c in checks) and counts["incomplete"] == 0
        if kind == "binary" and built.params.d > 0 and built.params.step_distribution == "fixed":
            p0 = float(built.born[0])
            try:
                predictions["absorption_oracle"] = oracles.markov_absorption(p0, built.params.d)
                predictions["mean_steps_oracle"] = oracles.markov_expected_duration(p0, built.params.d)
            except (DomainError, InstanceTooLargeError):
                pass
    elif kind == "eraser-chain":
        scn = built.scenario
        cross = eraser_cross_terms(final_amplitudes(built.state, ens.final_densities), scn)
        per_term = cross.mean(axis=1)
        pred = predict(cfg.scenario)["eraser"]
        predictions["eraser"] = pred
        estimator = {
            "method": "cross-term densities evaluated from each trial's final amplitudes",
            "representation": scn.representation,
            "mean_per_term": float(per_term.mean()),
            "mean_total": float(cross.sum(axis=1).mean()),
            "mean_by_term": cross.mean(axis=0).tolist(),
        }
        expected = pred.get("exact_mean", pred["deviant_prob"])
        mc = mean_check(per_term, expected, sig)
        tests["deviant_mean"] = mc.to_json_dict()
        lead = pred["deviant_prob"]
        rel = abs(mc.mean - lead) / lead if lead > 0 else (0.0 if mc.mean <= 1e-12 else math.inf)
        tests["leading_order_relative_error"] = rel
        passed = mc.passed and rel <= cfg.tolerances.relative
    else:  # amplified-alpha
        scn = built.scenario
        a2 = abs(scn.amplitudes[0]) ** 2
        shifted = ens.final_densities[:, built.stream.blocks[0].outcomes[0]].sum(axis=1)
        dev = amplified_deviation_from_densities(a2, shifted)
        pred = predict(cfg.scenario)["amplified"]
        predictions["amplified"] = pred
        d_eff = min(scn.d, a2, 1.0 - a2)
        exact = 0.5 * float(amplified_deviation_from_densities(a2, a2 + d_eff)
                            + amplified_deviation_from_densities(a2, a2 - d_eff))
        predictions["exact_average"] = exact
        estimator = {"method": "1 - (a a' + b b')^2 from each trial's final branch densities",
                     "mean_deviation": float(dev.mean())}
        if scn.step_distribution == "fixed":
            mc = mean_check(dev, exact, sig)
            tests["deviation_mean"] = mc.to_json_dict()
            passed = mc.passed
    return counts, freqs, predictions, tests, estimator, passed


def execute(cfg: ExperimentConfig) -> RunResult:
    """Run every trial of ``cfg`` and evaluate the report (no files written)."""
    if cfg.master_seed is None:
        raise ConfigError("a master_seed is required to run (set it in the config or pass --seed)")
    start = time.perf_counter()
    built = build_scenario(cfg.scenario)
    orders = trial_orders(built, cfg.trials, cfg.master_seed, cfg.sequencer_policy)
    ens = simulate_ensemble(built.state, built.stream, built.params, cfg.trials, cfg.master_seed,
                            orders=orders, max_steps=cfg.max_steps or DEFAULT_MAX_STEPS,
                            threads=cfg.parallelism)
    counts, freqs, predictions, tests, estimator, passed = _counts_and_tests(cfg, built, ens)
    report = RunReport(
        config=cfg.raw, kind=built.scenario.kind, trials=cfg.trials, seed=cfg.master_seed,
        counts=counts, frequencies=freqs, predictions=predictions, tests=tests,
        clamps={"total": int(ens.clamps.sum()), "trials_with_clamps": int((ens.clamps > 0).sum())},
        steps={"mean": float(ens.steps.mean()), "max": int(ens.steps.max())},
        passed=bool(passed), estimator=estimator)
    report.wall_time = time.perf_counter() - start
    return RunResult(report, built, ens, orders)


def summary_csv(result: RunResult) -> str:
    """One row per trial: trial, outcome, steps, clamps, final_p (first branch of the first block)."""
    ens = result.ensemble
    first = ens.blocks[0].outcomes[0]
    final_p = ens.final_densities[:, list(first)].sum(axis=1)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial", "outcome", "steps", "clamps", "final_p"])
    for i in range(ens.trials):
        label = ens.outcome_labels(i)
        w.writerow([ens.trial_offset + i, "incomplete" if label is None else label,
                    int(ens.steps[i]), int(ens.clamps[i]), repr(float(final_p[i]))])
    return buf.getvalue()


def trace_lines(result: RunResult, seed: int):
    """JSON-lines traces from the step-by-step reference path, one trial per line."""
    built = result.built
    for i in range(result.ensemble.trials):
        stream = built.stream
        if result.orders is not None:
            stream = stream.reordered([built.stream.blocks[k].key for k in result.orders[i]])
        _, trace = run_collapse(built.state, stream, built.params, seed, trial=i)
        yield json.dumps(trace.to_json_dict(), sort_keys=True) + "\n"


def write_artifacts(result: RunResult, out_dir: str | Path, traces: bool = False,
                    dump_state: bool = False) -> dict[str, str]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = {"report": out / "report.json", "summary": out / "summary.csv"}
        paths["report"].write_text(result.report.to_json(), encoding="utf-8", newline="\n")
        paths["summary"].write_text(summary_csv(result), encoding="utf-8", newline="\n")
        if traces:
            paths["traces"] = out / "traces.jsonl"
            with open(paths["traces"], "w", encoding="utf-8", newline="\n") as fh:
                fh.writelines(trace_lines(result, result.report.seed))
        if dump_state:
            paths["initial_state"] = out / "initial_state.json"
            paths["initial_state"].write_text(result.built.state.to_json() + "\n", encoding="utf-8", newline="\n")
            paths["final_state"] = out / "final_state_trial0.json"
            fs = final_state(result.built.state, result.ensemble.final_densities[0])
            paths["final_state"].write_text(fs.to_json() + "\n", encoding="utf-8", newline="\n")
    except OSError as exc:
        raise ConfigError(f"cannot write to output directory {out}: {exc}") from exc
    return {k: str(v) for k, v in paths.items()}


def run(cfg: ExperimentConfig, out_dir: str | Path | None = None, traces: bool | None = None,
        dump_state: bool = False) -> RunResult:
    result = execute(cfg)
    target = out_dir or cfg.output_dir
    if target:
        write_artifacts(result, target, cfg.traces if traces is None else traces, dump_state)
    return result
