import random

import numpy as np
import pytest

from vdmfit.datasets import DatasetKind, ObservationSeries
from vdmfit.fitter import (
    FitOptions,
    InsufficientDataError,
    fit,
    initial_guesses,
    sum_squared_error,
)
from vdmfit.models import evaluate
from vdmfit.simulate import exact_series

from oracles import grid_search_2d, grid_search_3d


def _series(points):
    return ObservationSeries("p", "v", DatasetKind.NVD, tuple(points))


def test_fit_options_validation():
    with pytest.raises(ValueError):
        FitOptions(max_iterations=0)
    with pytest.raises(ValueError):
        FitOptions(multistart_grid_size=0)
    with pytest.raises(ValueError):
        FitOptions(damping_factor=1.0)


def test_insufficient_data():
    series = _series([(1, 1.0), (2, 2.0), (3, 3.0)])
    with pytest.raises(InsufficientDataError):
        fit(series, "AML")  # needs 4 points


def test_exact_linear_fit():
    series = _series([(t, 2.0 * t + 3.0) for t in range(1, 11)])
    outcome = fit(series, "LN")
    a, b = outcome.params.values
    assert a == pytest.approx(2.0, abs=1e-9)
    assert b == pytest.approx(3.0, abs=1e-9)
    assert outcome.sse <= 1e-9
    assert outcome.converged


def test_re_recovery_against_grid_search_oracle():
    truth = (100.0, 0.05)
    series = exact_series("RE", truth, 60)
    outcome = fit(series, "RE")
    n_fit, lam_fit = outcome.params.values
    assert abs(n_fit - truth[0]) / truth[0] < 0.01
    assert abs(lam_fit - truth[1]) / truth[1] < 0.01

    t = np.array(series.months, dtype=float)
    y = np.array(series.counts, dtype=float)

    def sse(n, lam):
        r = y - n * -np.expm1(-lam * t)
        return float(r @ r)

    n_or, lam_or, sse_or = grid_search_2d(sse, lo=(50.0, 0.001), hi=(200.0, 0.2))
    assert abs(n_or - truth[0]) / truth[0] < 0.05
    assert abs(lam_or - truth[1]) / truth[1] < 0.05
    assert outcome.sse <= sse_or + 1e-12


def test_aml_recovery_against_grid_search_oracle():
    truth = (0.004, 120.0, 1.0)
    series = exact_series("AML", truth, 80)
    outcome = fit(series, "AML")
    for got, want in zip(outcome.params.values, truth):
        assert abs(got - want) / want < 0.02

    t = np.array(series.months, dtype=float)
    y = np.array(series.counts, dtype=float)

    def sse(a, b, c):
        r = y - b / (b * c * np.exp(-a * b * t) + 1.0)
        return float(r @ r)

    a_or, b_or, c_or, sse_or = grid_search_3d(
        sse, lo=(0.001, 80.0, 0.2), hi=(0.02, 200.0, 3.0)
    )
    assert abs(b_or - truth[1]) / truth[1] < 0.1
    assert outcome.sse <= sse_or + 1e-12


def test_initial_guesses_grid_shape_and_rule():
    series = _series([(t, min(40.0, 4.0 * t)) for t in range(1, 21)])
    guesses = initial_guesses(series, "RE", 3)
    assert len(guesses) == 9
    n_starts = sorted({g[0] for g in guesses})
    assert n_starts == [40.0, 80.0, 120.0]
    rates = sorted({g[1] for g in guesses})
    assert rates[0] == pytest.approx(1e-3)
    assert rates[-1] == pytest.approx(1.0)

    guesses_aml = initial_guesses(series, "AML", 2)
    assert len(guesses_aml) == 8


def test_initial_guesses_constant_series_linear_seed():
    series = _series([(t, 5.0) for t in range(1, 9)])
    guesses = initial_guesses(series, "LN", 3)
    assert len(guesses) == 9
    # the closed-form regression seed itself is on the grid
    assert any(a == pytest.approx(0.0, abs=1e-12) and b == pytest.approx(5.0) for a, b in guesses)


def test_final_fit_beats_every_raw_grid_point():
    series = exact_series("AML", (0.01, 60.0, 0.9), 50)
    outcome = fit(series, "AML")
    for guess in initial_guesses(series, "AML", 3):
        assert outcome.sse <= sum_squared_error(series, "AML", guess) + 1e-12


def test_fixed_point_refit():
    series = exact_series("LP", (150.0, 0.08), 40)
    outcome = fit(series, "LP")
    refit = fit(series, "LP", starts=[outcome.params.values])
    for a, b in zip(outcome.params.values, refit.params.values):
        assert b == pytest.approx(a, abs=1e-9, rel=1e-9)


def test_multistart_order_independence():
    series = exact_series("RE", (80.0, 0.07), 36)
    starts = initial_guesses(series, "RE", 3)
    shuffled = list(starts)
    random.Random(99).shuffle(shuffled)
    a = fit(series, "RE", starts=starts)
    b = fit(series, "RE", starts=shuffled)
    assert a.params == b.params
    assert a.sse == b.sse


def test_fit_params_stay_inside_domain():
    # decreasing-rate data pushes positive-domain parameters toward zero
    rng = random.Random(5)
    points = []
    total = 0.0
    for t in range(1, 31):
        total += rng.uniform(0.0, 1.5)
        points.append((t, round(total)))
    series = _series(points)
    for model in ("AML", "LP", "RE"):
        outcome = fit(series, model)
        assert all(v > 0.0 for v in outcome.params.values), model


def test_poisonous_start_cannot_freeze_best_selection():
    # an overflow-prone first start (NaN/inf SSE) must lose to any
    # finite-SSE start
    series = _series([(t, t * t / 2.0 + t) for t in range(1, 11)])
    outcome = fit(series, "RQ", starts=[(1e300, 1e300), (0.5, 0.5)])
    assert outcome.sse == pytest.approx(0.0, abs=1e-9)
    assert all(abs(v) < 10.0 for v in outcome.params.values)


def test_sum_squared_error_matches_definition():
    series = _series([(1, 3.0), (2, 5.0), (3, 7.0)])
    params = (2.0, 1.0)
    expected = sum((c - evaluate("LN", params, m)) ** 2 for m, c in series.points)
    assert sum_squared_error(series, "LN", params) == pytest.approx(expected)
