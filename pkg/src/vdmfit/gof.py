"""Chi-square goodness-of-fit testing and the three-way classification.

The statistic is sum((O_i - E_i)^2 / E_i) over the monthly cumulative
observations, with expected values generated by the fitted curve. The
p-value (upper tail, dof = n_points - param_count) is read on three
bands: below 0.05 the model is rejected (NotFit), at or above 0.95 it
is accepted (GoodFit), anywhere between there is not enough evidence
either way (Inconclusive).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from . import models, stats
from .datasets import ObservationSeries
from .fitter import FitOutcome, InsufficientDataError
from .models import ParamVector

__all__ = [
    "FitClass",
    "FitResult",
    "InvalidExpectedError",
    "chi_square_statistic",
    "classify",
    "p_value",
    "test_fit",
]


class FitClass(Enum):
    GOOD_FIT = "GoodFit"
    INCONCLUSIVE = "Inconclusive"
    NOT_FIT = "NotFit"


class InvalidExpectedError(ValueError):
    """An expected count was non-positive, so the statistic is undefined."""


def chi_square_statistic(observed: Sequence[float], expected: Sequence[float]) -> float:
    o = np.asarray(observed, dtype=float)
    e = np.asarray(expected, dtype=float)
    if o.shape != e.shape or o.ndim != 1 or o.size == 0:
        raise ValueError("observed and expected must be equal-length non-empty vectors")
    if not np.all(np.isfinite(e)) or np.any(e <= 0.0):
        raise InvalidExpectedError("expected values must be finite and > 0")
    d = o - e
    return float(np.sum(d * d / e))


def p_value(chi_square: float, dof: int) -> float:
    """Upper-tail probability of chi-square with ``dof`` degrees of freedom."""
    return stats.chi_square_survival(chi_square, dof)


def classify(p: float) -> FitClass:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p-value must lie in [0, 1], got {p!r}")
    if p < 0.05:
        return FitClass.NOT_FIT
    if p < 0.95:
        return FitClass.INCONCLUSIVE
    return FitClass.GOOD_FIT


@dataclass(frozen=True)
class FitResult:
    model_id: str
    params: ParamVector
    chi_square: float
    dof: int
    p_value: float
    classification: FitClass
    valid: bool

    def to_json_dict(self) -> dict:
        return {
            "model": self.model_id,
            "params": list(self.params.values),
            "chi2": self.chi_square,
            "dof": self.dof,
            "p_value": self.p_value,
            "classification": self.classification.value,
            "valid": self.valid,
        }


def test_fit(series: ObservationSeries, outcome: FitOutcome) -> FitResult:
    """Chi-square test of a fit outcome against its series.

    Expected counts come from evaluating the fitted curve at every
    observation month (points are kept in month order, so the test does
    not depend on input ordering). Non-positive expected counts make
    the statistic undefined: the result is flagged valid=False and
    classified NotFit.
    """
    params = outcome.params
    n = len(series.points)
    dof = n - models.param_count(params.model_id)
    if dof < 1:
        raise InsufficientDataError(
            f"need more than {models.param_count(params.model_id)} points, got {n}"
        )
    t = np.array(series.months, dtype=float)
    observed = np.array(series.counts, dtype=float)
    try:
        expected = models.evaluate(params.model_id, params.values, t)
        chi2 = chi_square_statistic(observed, expected)
    except (InvalidExpectedError, models.DomainError):
        return FitResult(
            params.model_id, params, math.inf, dof, 0.0, FitClass.NOT_FIT, valid=False
        )
    p = p_value(chi2, dof)
    return FitResult(params.model_id, params, chi2, dof, p, classify(p), valid=True)
