"""Small statistical checks shared by the runner and the tests."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np
from scipy import stats as _st


@dataclass(frozen=True)
class BinomialCheck:
    cell: str
    count: int
    trials: int
    expected: float
    frequency: float
    sigma: float
    z: float
    passed: bool

    def to_json_dict(self) -> dict:
        return asdict(self)


def binomial_check(cell: str, count: int, trials: int, expected: float, n_sigma: float) -> BinomialCheck:
    """Is ``count/trials`` within ``n_sigma`` binomial standard errors of ``expected``?"""
    freq = count / trials
    sigma = math.sqrt(expected * (1.0 - expected) / trials)
    diff = freq - expected
    if sigma == 0.0:
        z = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    else:
        z = diff / sigma
    return BinomialCheck(cell, int(count), int(trials), float(expected), freq, sigma, z, abs(z) <= n_sigma)


@dataclass(frozen=True)
class ChiSquare:
    chi2: float
    dof: int
    p_value: float

    def to_json_dict(self) -> dict:
        return asdict(self)


def chi_square_gof(counts: Sequence[int], probs: Sequence[float]) -> ChiSquare:
    """Goodness of fit over the cells with positive expected probability."""
    c = np.asarray(counts, dtype=float)
    p = np.asarray(probs, dtype=float)
    keep = p > 0
    if keep.sum() < 2 or c[keep].sum() == 0:
        return ChiSquare(0.0, 0, 1.0)
    exp = p[keep] / p[keep].sum() * c[keep].sum()
    stat, pv = _st.chisquare(c[keep], exp)
    return ChiSquare(float(stat), int(keep.sum() - 1), float(pv))


def chi_square_homogeneity(table: np.ndarray) -> ChiSquare:
    t = np.asarray(table, dtype=float)
    t = t[:, t.sum(axis=0) > 0]
    if t.shape[0] < 2 or t.shape[1] < 2:
        return ChiSquare(0.0, 0, 1.0)
    stat, pv, dof, _ = _st.chi2_contingency(t, correction=False)
    return ChiSquare(float(stat), int(dof), float(pv))


@dataclass(frozen=True)
class MeanCheck:
    mean: float
    expected: float
    standard_error: float
    z: float
    passed: bool

    def to_json_dict(self) -> dict:
        return asdict(self)


def mean_check(samples: np.ndarray, expected: float, n_sigma: float, floor: float = 1e-12) -> MeanCheck:
    """Sample mean within ``n_sigma`` standard errors (or ``floor``) of ``expected``."""
    x = np.asarray(samples, dtype=float)
    mean = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    diff = mean - expected
    z = diff / se if se > 0 else (0.0 if abs(diff) <= floor else math.inf)
    return MeanCheck(mean, float(expected), se, z, abs(diff) <= max(n_sigma * se, floor))
