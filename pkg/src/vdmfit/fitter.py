"""Nonlinear least-squares estimation of VDM parameters.

Damped Gauss-Newton iteration (Levenberg-Marquardt damping schedule) on
the analytic gradients from :mod:`vdmfit.models`, launched from a
data-driven multistart grid. Out-of-domain steps are projected back
onto the parameter box, so log arguments and the AML denominator stay
valid throughout. The best (lowest-SSE) launch wins; exact ties break
to the lexicographically smallest parameter vector, which makes the
result independent of launch order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import models
from .datasets import ObservationSeries
from .models import DomainError, ParamVector

__all__ = [
    "DEFAULT_OPTIONS",
    "FitOptions",
    "FitOutcome",
    "InsufficientDataError",
    "fit",
    "initial_guesses",
    "sum_squared_error",
]


class InsufficientDataError(ValueError):
    """Fewer observation points than param_count + 1."""


@dataclass(frozen=True)
class FitOptions:
    max_iterations: int = 200
    relative_sse_tolerance: float = 1e-9
    damping_init: float = 1e-3
    damping_factor: float = 10.0
    multistart_grid_size: int = 3

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.relative_sse_tolerance <= 0:
            raise ValueError("relative_sse_tolerance must be positive")
        if self.damping_init <= 0 or self.damping_factor <= 1:
            raise ValueError("damping_init must be > 0 and damping_factor > 1")
        if self.multistart_grid_size < 1:
            raise ValueError("multistart_grid_size must be >= 1")


DEFAULT_OPTIONS = FitOptions()

_BOUND_EPS = 1e-12
_DAMPING_MAX = 1e14
_DAMPING_MIN = 1e-12
_TINY_SSE = 1e-300


@dataclass(frozen=True)
class FitOutcome:
    params: ParamVector
    sse: float
    converged: bool
    iterations_used: int


def _series_arrays(series: ObservationSeries) -> tuple[np.ndarray, np.ndarray]:
    t = np.array(series.months, dtype=float)
    y = np.array(series.counts, dtype=float)
    return t, y


def sum_squared_error(
    series: ObservationSeries, model_id: str, values: Sequence[float]
) -> float:
    """SSE of the model curve against the series, inf when the curve is
    not evaluable at these parameters."""
    t, y = _series_arrays(series)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            r = y - models.evaluate(model_id, values, t)
            return float(r @ r)
    except DomainError:
        return float("inf")


def _domain_arrays(model_id: str) -> tuple[np.ndarray, np.ndarray]:
    box = models.default_domain(model_id)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    # open bounds: keep strictly inside by a hair
    lo = np.where(np.isfinite(lo), lo + _BOUND_EPS, lo)
    hi = np.where(np.isfinite(hi), hi - _BOUND_EPS, hi)
    return lo, hi


def _closed_form_seed(model_id: str, t: np.ndarray, y: np.ndarray) -> np.ndarray:
    # linear least squares on the model's own basis functions
    if model_id == "LN":
        design = np.column_stack([t, np.ones_like(t)])
    elif model_id == "RQ":
        design = np.column_stack([t * t / 2.0, t])
    elif model_id == "AT":
        design = np.column_stack([np.log(t), np.ones_like(t)])
    else:
        raise ValueError(f"no closed-form seed for {model_id}")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return coef


def _spread(center: float, grid_size: int) -> list[float]:
    if grid_size == 1:
        return [float(center)]
    half_width = max(abs(center), 1.0)
    return [float(v) for v in np.linspace(center - half_width, center + half_width, grid_size)]


def initial_guesses(
    series: ObservationSeries, model_id: str, grid_size: int
) -> list[tuple[float, ...]]:
    """Multistart grid of grid_size**param_count launch points.

    Asymptote-like parameters (AML B, RE N, LP beta0) span
    [max_count, 3*max_count]; rate parameters (AML A, RE lambda,
    LP beta1) span [1e-3, 1] log-spaced; AML's level parameter C spans
    [1e-2, 10] log-spaced; LN, RQ and AT launch around their
    closed-form linear-regression seeds.
    """
    if grid_size < 1:
        raise ValueError("grid_size must be >= 1")
    t, y = _series_arrays(series)
    ymax = max(float(y.max()), 1.0)

    asym = [float(v) for v in np.linspace(ymax, 3.0 * ymax, grid_size)]
    rate = [float(v) for v in np.logspace(-3.0, 0.0, grid_size)]

    if model_id == "AML":
        level = [float(v) for v in np.logspace(-2.0, 1.0, grid_size)]
        axes = [rate, asym, level]
    elif model_id == "RE":
        axes = [asym, rate]
    elif model_id == "LP":
        axes = [asym, rate]
    else:
        seed = _closed_form_seed(model_id, t, y)
        axes = [_spread(c, grid_size) for c in seed]

    return [tuple(combo) for combo in itertools.product(*axes)]


def _levenberg_marquardt(
    model_id: str,
    t: np.ndarray,
    y: np.ndarray,
    x0: Sequence[float],
    lo: np.ndarray,
    hi: np.ndarray,
    options: FitOptions,
) -> tuple[np.ndarray, float, bool, int]:
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            r = y - models.evaluate(model_id, x, t)
            sse = float(r @ r)
    except DomainError:
        return x, float("inf"), False, 0
    damping = options.damping_init
    eye = np.eye(x.size)
    converged = sse == 0.0
    iterations = 0

    while not converged and iterations < options.max_iterations:
        iterations += 1
        jac = models.gradient(model_id, x, t)
        grad = jac.T @ r
        jtj = jac.T @ jac

        accepted = False
        while damping <= _DAMPING_MAX:
            try:
                step = np.linalg.solve(jtj + damping * eye, grad)
            except np.linalg.LinAlgError:
                damping *= options.damping_factor
                continue
            candidate = np.clip(x + step, lo, hi)
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    r_new = y - models.evaluate(model_id, candidate, t)
                    sse_new = float(r_new @ r_new)
            except DomainError:
                damping *= options.damping_factor
                continue
            if np.isfinite(sse_new) and sse_new <= sse:
                accepted = True
                break
            damping *= options.damping_factor
        if not accepted:
            break

        improvement = sse - sse_new
        x, r = candidate, r_new
        damping = max(damping / options.damping_factor, _DAMPING_MIN)
        if improvement <= options.relative_sse_tolerance * max(sse, _TINY_SSE):
            converged = True
        sse = sse_new

    return x, sse, converged, iterations


def fit(
    series: ObservationSeries,
    model_id: str,
    options: FitOptions | None = None,
    starts: Sequence[Sequence[float]] | None = None,
) -> FitOutcome:
    """Best multistart least-squares fit of ``model_id`` to the series.

    ``starts`` overrides the default multistart grid (useful for refits
    and tests). Raises InsufficientDataError when the series has fewer
    than param_count + 1 points; a fit that never reached the SSE
    tolerance is returned with converged=False rather than raised.
    """
    options = options or DEFAULT_OPTIONS
    mspec = models.spec(model_id)
    if len(series.points) < mspec.param_count + 1:
        raise InsufficientDataError(
            f"{model_id} needs at least {mspec.param_count + 1} points, "
            f"series has {len(series.points)}"
        )
    t, y = _series_arrays(series)
    lo, hi = _domain_arrays(model_id)
    if starts is None:
        starts = initial_guesses(series, model_id, options.multistart_grid_size)
    if not starts:
        raise ValueError("no starting points")

    best = None
    best_key = None
    for x0 in starts:
        x, sse, conv, iters = _levenberg_marquardt(model_id, t, y, x0, lo, hi, options)
        # NaN compares false against everything and would freeze the
        # running best; rank it like +inf instead
        key = (sse if sse == sse else float("inf"), tuple(x))
        if best_key is None or key < best_key:
            best_key = key
            best = (x, sse, conv, iters)

    x, sse, conv, iters = best
    return FitOutcome(ParamVector(model_id, tuple(x)), sse, conv, iters)
