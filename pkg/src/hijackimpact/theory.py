"""Closed-form bias and RMSE of the naive estimator.

Integrated quantities are empirical means over a sample of impacts drawn from
the scenario population, never a fitted density.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from collections.abc import Iterable, Sequence
from typing import IO

import numpy as np


@dataclasses.dataclass(frozen=True, eq=False)
class ImpactSamples:
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if v.size == 0:
            raise ValueError("impact samples are empty")
        if np.any((v < 0) | (v > 1)) or np.any(np.isnan(v)):
            raise ValueError("impact samples must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def mean(self) -> float:
        return float(self.values.mean())


def _samples(s) -> np.ndarray:
    return s.values if isinstance(s, ImpactSamples) else ImpactSamples(s).values


def _check_m(m) -> None:
    if m < 1:
        raise ValueError(f"M must be >= 1, got {m}")


def _check_p(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")


def rmse_point(i: float, m: int) -> float:
    """RMSE of NIE with m independent monitors at a fixed impact i."""
    if not 0.0 <= i <= 1.0:
        raise ValueError(f"impact must lie in [0, 1], got {i}")
    _check_m(m)
    return math.sqrt(i * (1.0 - i) / m)


def c_i(samples) -> float:
    """E[sqrt(I(1-I))]."""
    v = _samples(samples)
    return float(np.mean(np.sqrt(v * (1.0 - v))))


def c_prime(samples) -> float:
    """1 - E[I]."""
    return 1.0 - float(np.mean(_samples(samples)))


def rmse_nie_random(m: int, samples) -> float:
    _check_m(m)
    return c_i(samples) / math.sqrt(m)


@dataclasses.dataclass(frozen=True)
class FailureRmseTerms:
    a: float
    b: float

    @classmethod
    def at(cls, i: float, p: float) -> FailureRmseTerms:
        if not 0.0 <= i <= 1.0:
            raise ValueError(f"impact must lie in [0, 1], got {i}")
        _check_p(p)
        return cls((i + (1 - i) * p) * (1 - i) * (1 - p), (1 - i) ** 2 * p**2)

    def rmse(self, m) -> float:
        return math.sqrt(self.a / m + self.b)


def bias_with_failures(p: float, samples) -> float:
    _check_p(p)
    return c_prime(samples) * p


def rmse_with_failures(m, p: float, samples) -> float:
    """E over I of sqrt(A/m + B); ``m`` may be ``math.inf``."""
    _check_m(m)
    _check_p(p)
    v = _samples(samples)
    a = (v + (1 - v) * p) * (1 - v) * (1 - p)
    b = (1 - v) ** 2 * p**2
    return float(np.mean(np.sqrt(a / m + b)))


def rmse_floor(p: float, samples) -> float:
    """Limit of rmse_with_failures as m grows without bound."""
    return bias_with_failures(p, samples)


def write_curves(
    fh: IO[str],
    samples,
    m_values: Iterable[int] = (),
    p_values: Sequence[float] = (0.0,),
) -> None:
    """CSV rows over the (M, p) grid with theoretical bias and RMSE."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["M", "p", "bias", "rmse", "rmse_floor", "c_i", "c_prime"])
    ci, cp = c_i(samples), c_prime(samples)
    for m in m_values:
        for p in p_values:
            w.writerow(
                [
                    m,
                    f"{p:.6g}",
                    f"{bias_with_failures(p, samples):.6g}",
                    f"{rmse_with_failures(m, p, samples):.6g}",
                    f"{rmse_floor(p, samples):.6g}",
                    f"{ci:.6g}",
                    f"{cp:.6g}",
                ]
            )
