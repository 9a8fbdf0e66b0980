"""Rolling goodness-of-fit experiment and the stability/quality metrics.

A fit's classification is a three-state automaton (Fit, Inconclusive,
NotFit). Moving one observation month forward, each curve either keeps
its state (unchanged), moves one band (small jump) or swings between
accept and reject (big jump). Pooled over a group of curves:

    entropy  E_beta(t) = (s + beta*b) / (u + s + beta*b)
    quality  Q_omega(t) = (F + I/omega) / (F + I + NF)

with u/s/b the transition counts at step t and F/I/NF the state counts
at time t. Both lie in [0, 1]; beta weights big jumps as beta small
jumps, omega discounts inconclusive fits as 1/omega of a good fit.
Series summaries carry the grand median plus first-half / second-half
medians (a stable group shows a second-half median at or below the
first).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .datasets import ObservationSeries
from .fitter import FitOptions, InsufficientDataError, fit
from .gof import FitClass, FitResult, test_fit

__all__ = [
    "DEFAULT_START_MSR",
    "EmptyStepError",
    "EntropySeries",
    "GofState",
    "MetricSeries",
    "QualitySeries",
    "TransitionKind",
    "aggregate_entropy",
    "aggregate_quality",
    "classify_transition",
    "entropy_at",
    "median",
    "quality_at",
    "rolling_gof",
    "states_from_results",
]

# observation starts at the sixth month after release
DEFAULT_START_MSR = 6

GofState = FitClass


class TransitionKind(Enum):
    UNCHANGED = "unchanged"
    SMALL_JUMP = "small_jump"
    BIG_JUMP = "big_jump"


class EmptyStepError(ValueError):
    """No transitions (or no states) available at an observation step."""


def classify_transition(prev: GofState, new: GofState) -> TransitionKind:
    if prev is new:
        return TransitionKind.UNCHANGED
    if {prev, new} == {FitClass.GOOD_FIT, FitClass.NOT_FIT}:
        return TransitionKind.BIG_JUMP
    return TransitionKind.SMALL_JUMP


def entropy_at(transitions: Iterable[TransitionKind], beta: float = 1.0) -> float:
    """Instability of one observation step from its pooled transitions."""
    if beta < 1.0:
        raise ValueError(f"beta must be >= 1, got {beta!r}")
    u = s = b = 0
    for tr in transitions:
        if tr is TransitionKind.UNCHANGED:
            u += 1
        elif tr is TransitionKind.SMALL_JUMP:
            s += 1
        else:
            b += 1
    total = u + s + b
    if total == 0:
        raise EmptyStepError("no transitions at this step")
    weighted = s + beta * b
    return weighted / (u + weighted)


def quality_at(counts: Sequence[int], omega: float = 1.0) -> float:
    """Fit-success ratio from (n_fit, n_inconclusive, n_notfit) counts."""
    if omega < 1.0:
        raise ValueError(f"omega must be >= 1, got {omega!r}")
    n_fit, n_inconclusive, n_notfit = counts
    if min(n_fit, n_inconclusive, n_notfit) < 0:
        raise ValueError("counts must be non-negative")
    total = n_fit + n_inconclusive + n_notfit
    if total == 0:
        raise EmptyStepError("no states at this step")
    return (n_fit + n_inconclusive / omega) / total


def median(values: Sequence[float]) -> float:
    """Median with the even-length convention (mean of the two central
    values)."""
    if not values:
        raise ValueError("median of empty sequence")
    ordered = sorted(values)
    mid = len(ordered) // 2
    if len(ordered) % 2:
        return float(ordered[mid])
    return (ordered[mid - 1] + ordered[mid]) / 2.0


@dataclass(frozen=True)
class MetricSeries:
    """One metric value per observation month plus median summaries.

    The half-period split is on the month axis: mid = (start+end)//2,
    first half covers [start, mid], second half (mid, end].
    """

    group: str
    points: tuple[tuple[int, float], ...]
    grand_median: float
    first_half_median: float
    second_half_median: float

    @property
    def months(self) -> tuple[int, ...]:
        return tuple(m for m, _ in self.points)

    @property
    def values(self) -> tuple[float, ...]:
        return tuple(v for _, v in self.points)


EntropySeries = MetricSeries
QualitySeries = MetricSeries


def _series_with_medians(group: str, points: list[tuple[int, float]]) -> MetricSeries:
    if not points:
        raise EmptyStepError(f"group {group!r} produced no metric points")
    start, end = points[0][0], points[-1][0]
    mid = (start + end) // 2
    first = [v for m, v in points if m <= mid]
    second = [v for m, v in points if m > mid]
    return MetricSeries(
        group,
        tuple(points),
        grand_median=median([v for _, v in points]),
        first_half_median=median(first) if first else float("nan"),
        second_half_median=median(second) if second else float("nan"),
    )


StateMatrix = Mapping[str, Mapping[int, GofState]]


def _columns(per_curve_states: StateMatrix) -> list[int]:
    cols = sorted({m for states in per_curve_states.values() for m in states})
    if len(cols) < 2:
        raise ValueError("need at least two observation columns")
    return cols


def aggregate_entropy(
    per_curve_states: StateMatrix, beta: float = 1.0, group: str = ""
) -> MetricSeries:
    """Entropy per step, pooling transitions across all curves of the
    group; curves missing either end of a step are skipped there."""
    cols = _columns(per_curve_states)
    points = []
    for prev_m, cur_m in zip(cols, cols[1:]):
        transitions = [
            classify_transition(states[prev_m], states[cur_m])
            for states in per_curve_states.values()
            if prev_m in states and cur_m in states
        ]
        if transitions:
            points.append((cur_m, entropy_at(transitions, beta)))
    return _series_with_medians(group, points)


def aggregate_quality(
    per_curve_states: StateMatrix, omega: float = 1.0, group: str = ""
) -> MetricSeries:
    """Quality per observation month, pooling state counts across all
    curves of the group."""
    cols = _columns(per_curve_states)
    points = []
    for m in cols:
        n = {FitClass.GOOD_FIT: 0, FitClass.INCONCLUSIVE: 0, FitClass.NOT_FIT: 0}
        for states in per_curve_states.values():
            if m in states:
                n[states[m]] += 1
        total = sum(n.values())
        if total:
            points.append(
                (m, quality_at((n[FitClass.GOOD_FIT], n[FitClass.INCONCLUSIVE], n[FitClass.NOT_FIT]), omega))
            )
    return _series_with_medians(group, points)


def rolling_gof(
    series: ObservationSeries,
    model_id: str,
    start_msr: int = DEFAULT_START_MSR,
    options: FitOptions | None = None,
) -> list[tuple[int, FitResult | None]]:
    """Fit and test the model on every growing prefix of the series.

    Month m uses only the points with msr <= m, exactly as if the fit
    had been run back then. Each prefix is fit independently (no state
    is carried between months). Months where the fit itself fails are
    reported as None; a too-short series yields an empty list.
    """
    out: list[tuple[int, FitResult | None]] = []
    for m in range(start_msr, series.last_msr + 1):
        prefix = series.truncated(m)
        try:
            outcome = fit(prefix, model_id, options)
            result: FitResult | None = test_fit(prefix, outcome)
        except InsufficientDataError:
            result = None
        out.append((m, result))
    return out


def states_from_results(
    results: Iterable[tuple[int, FitResult | None]]
) -> dict[int, GofState]:
    """State sequence for the transition model: invalid tests count as
    NotFit, months without a result are absent."""
    states: dict[int, GofState] = {}
    for m, res in results:
        if res is None:
            continue
        states[m] = FitClass.NOT_FIT if not res.valid else res.classification
    return states
