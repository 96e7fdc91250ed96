import csv
import hashlib
import math
import os
import subprocess
import sys

import numba
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import deterministic_model, se
from ouspot.errors import DriftDivergenceError, ParameterDomainError, StepSizeError
from ouspot.market import (
    ForwardCurve,
    KouJumps,
    LaplaceJumps,
    MarketModel,
    SeasonalIntensity,
    TimeGrid,
    TwoSidedJumps,
    drift_h_closed,
    drift_h_generic,
    drift_table,
    expected_jump_count,
    jump_counts,
    set_workers,
    simulate_paths,
)
from ouspot.ou_kernels import EXACT_KINDS, GaussianOuParams, StepwiseIntensity

DIFF = GaussianOuParams(67.0, 0.25)
CASE2 = MarketModel(DIFF, TwoSidedJumps(50.0, 40.0, 20.0, 20.0, 10.0, 20.0))
MONTHLY = TimeGrid.uniform(1.0, 12)


# --- curve and grid -----------------------------------------------------------

def test_flat_forward():
    f = ForwardCurve.flat(22.0)
    assert f.is_flat
    np.testing.assert_array_equal(f(np.array([0.0, 0.5, 3.0])), [22.0, 22.0, 22.0])


def test_tabulated_forward_is_a_step_function():
    f = ForwardCurve([0.0, 0.5], [20.0, 25.0])
    np.testing.assert_array_equal(f(np.array([0.0, 0.49, 0.5, 0.9])), [20.0, 20.0, 25.0, 25.0])
    assert f == ForwardCurve(np.array([0.0, 0.5]), np.array([20.0, 25.0]))


@pytest.mark.parametrize("times,values", [([0.0, 0.0], [1.0, 2.0]), ([0.0], [-1.0]),
                                          ([0.0, 1.0], [1.0])])
def test_forward_validation(times, values):
    with pytest.raises(ParameterDomainError):
        ForwardCurve(times, values)


def test_daily_grid():
    g = TimeGrid.daily()
    assert g.M == 365 and g.horizon == 1.0
    np.testing.assert_allclose(g.dts, 1 / 365)


@pytest.mark.parametrize("times", [[0.0], [0.1, 0.2], [0.0, 0.5, 0.5]])
def test_grid_validation(times):
    with pytest.raises(ParameterDomainError):
        TimeGrid(times)


def test_route_validation():
    kou = KouJumps(50.0, 20.0, 0.5, 10.0, 20.0)
    with pytest.raises(ParameterDomainError):
        MarketModel(DIFF, kou, sampler="polya", route="kou")
    with pytest.raises(ParameterDomainError):
        MarketModel(DIFF, CASE2.jumps, route="symmetric")
    assert MarketModel(DIFF, kou, sampler="jumptime", route="kou").case == 1
    assert MarketModel(DIFF, LaplaceJumps(50.0, 20.0, 40.0)).route == "symmetric"


def test_kou_probability_domain():
    with pytest.raises(ParameterDomainError):
        KouJumps(50.0, 20.0, 1.5, 10.0, 20.0)


# --- drift ----------------------------------------------------------------------

def _models():
    seasonal = SeasonalIntensity(32.0, 2.0, 0.25)
    return [
        MarketModel(DIFF, KouJumps(50.0, 20.0, 0.5, 10.0, 20.0)),
        MarketModel(GaussianOuParams(67.0, 0.25, 0.05), KouJumps(50.0, 20.0, 0.3, 10.0, 20.0, y0=0.1)),
        CASE2,
        MarketModel(DIFF, TwoSidedJumps(50.0, 40.0, 20.0, 5.0, 3.0, 1.5, 0.2, 0.1)),
        MarketModel(DIFF, LaplaceJumps(50.0, 20.0, 40.0)),
        MarketModel(DIFF, LaplaceJumps(50.0, 20.0, seasonal)),
        MarketModel(DIFF, LaplaceJumps(5.0, 4.0, StepwiseIntensity([0, 0.3, 0.8], [10.0, 60.0]))),
    ]


@pytest.mark.parametrize("model", _models(), ids=lambda m: f"case{m.case}")
def test_closed_drift_matches_generic(model):
    for t in (0.0, 0.01, 0.1, 0.25, 0.5, 0.77, 1.0, 1.5):
        assert drift_h_closed(model, t) == pytest.approx(drift_h_generic(model, t), abs=1e-12)


def test_drift_against_explicit_formula():
    # oracle written out independently for two constant-intensity legs
    def h(t):
        up = -(20.0 / 50.0) * math.log((10.0 - math.exp(-50 * t)) / 9.0)
        down = -(20.0 / 40.0) * math.log((20.0 + math.exp(-40 * t)) / 21.0)
        diff = -0.0625 / (4 * 67.0) * (1 - math.exp(-134 * t))
        return up + down + diff
    for t in (0.05, 0.3, 1.0):
        assert drift_h_closed(CASE2, t) == pytest.approx(h(t), abs=1e-14)


def test_drift_without_jumps_is_diffusion_only():
    model = MarketModel(DIFF, TwoSidedJumps(50.0, 40.0, 0.0, 0.0, 10.0, 20.0))
    t = np.array([0.1, 1.0])
    np.testing.assert_allclose(drift_h_closed(model, t), -0.0625 / (4 * 67) * (1 - np.exp(-134 * t)))


def test_drift_vanishes_at_zero():
    assert drift_h_closed(CASE2, 0.0) == 0.0
    assert drift_h_generic(CASE2, 0.0) == 0.0


def test_drift_table_on_grid():
    np.testing.assert_allclose(drift_table(CASE2, MONTHLY), drift_h_closed(CASE2, MONTHLY.times))


@pytest.mark.parametrize("jumps", [TwoSidedJumps(50.0, 40.0, 20.0, 20.0, 0.5, 20.0),
                                   KouJumps(50.0, 20.0, 0.5, 10.0, 1.0),
                                   LaplaceJumps(50.0, 0.9, 40.0)])
def test_drift_diverges_for_small_beta(jumps):
    model = MarketModel(DIFF, jumps, sampler="jumptime")
    with pytest.raises(DriftDivergenceError):
        drift_h_closed(model, 0.5)
    with pytest.raises(DriftDivergenceError):
        drift_h_generic(model, 0.5)
    with pytest.raises(DriftDivergenceError):
        simulate_paths(model, MONTHLY, 10, 0)


@settings(max_examples=30, deadline=None)
@given(k1=st.floats(0.5, 80), k2=st.floats(0.5, 80), lam1=st.floats(0, 50), lam2=st.floats(0, 50),
       b1=st.floats(1.1, 40), b2=st.floats(1.1, 40), t=st.floats(0, 3))
def test_drift_forms_agree_property(k1, k2, lam1, lam2, b1, b2, t):
    model = MarketModel(DIFF, TwoSidedJumps(k1, k2, lam1, lam2, b1, b2))
    assert drift_h_closed(model, t) == pytest.approx(drift_h_generic(model, t), abs=1e-10)


# --- simulation -------------------------------------------------------------------

def test_deterministic_model_reproduces_forward_curve():
    curve = ForwardCurve([0.0, 0.25, 0.5], [20.0, 24.0, 21.0])
    batch = simulate_paths(deterministic_model(forward=curve), TimeGrid.daily(), 5, 1)
    np.testing.assert_allclose(batch.spot, np.broadcast_to(curve(batch.times), batch.spot.shape),
                               rtol=1e-13)


def test_spot_starts_at_forward(presets):
    for model in presets.values():
        batch = simulate_paths(model, MONTHLY, 100, 3)
        np.testing.assert_allclose(batch.spot[:, 0], model.forward(0.0), rtol=1e-13)
        assert batch.spot.min() > 0


@pytest.mark.parametrize("name", ["case1", "case2", "case3"])
def test_martingale_quick(presets, name):
    n = 100_000
    batch = simulate_paths(presets[name], TimeGrid(np.array([0.0, 0.25, 0.5, 1.0])), n, 4,
                           record=[1, 2, 3])
    ratio = batch.spot / 22.0
    z = np.abs(ratio.mean(axis=0) - 1) / (ratio.std(axis=0, ddof=1) / math.sqrt(n))
    assert z.max() < 5


def test_same_seed_is_bit_identical():
    a = simulate_paths(CASE2, MONTHLY, 500, 7)
    b = simulate_paths(CASE2, MONTHLY, 500, 7)
    c = simulate_paths(CASE2, MONTHLY, 500, 8)
    assert a.spot.tobytes() == b.spot.tobytes()
    assert not np.array_equal(a.spot, c.spot)


def test_paths_are_keyed_by_stream():
    full = simulate_paths(CASE2, MONTHLY, 30, 7)
    part = simulate_paths(CASE2, MONTHLY, 10, 7, first_stream=12)
    np.testing.assert_array_equal(full.spot[12:22], part.spot)


_HASH_SCRIPT = """
import hashlib, numba
from ouspot.config import load_config
from ouspot.market import TimeGrid, simulate_paths, set_workers
set_workers(None)
m = load_config('case3').model
b = simulate_paths(m, TimeGrid.uniform(1.0, 24), 3000, 11)
print(numba.get_num_threads(), hashlib.sha256(b.spot.tobytes()).hexdigest())
"""


def test_output_independent_of_thread_count():
    digests = set()
    for threads in ("1", "3"):
        env = dict(os.environ, NUMBA_NUM_THREADS=threads)
        out = subprocess.run([sys.executable, "-c", _HASH_SCRIPT], env=env, capture_output=True,
                             text=True, check=True).stdout.split()
        assert out[0] == threads
        digests.add(out[1])
    assert len(digests) == 1


def test_record_modes_select_columns():
    full = simulate_paths(CASE2, MONTHLY, 50, 9)
    last = simulate_paths(CASE2, MONTHLY, 50, 9, record="last")
    some = simulate_paths(CASE2, MONTHLY, 50, 9, record=[0, 6, 12])
    np.testing.assert_array_equal(last.spot[:, 0], full.spot[:, -1])
    np.testing.assert_array_equal(some.spot, full.spot[:, [0, 6, 12]])
    np.testing.assert_array_equal(some.times, MONTHLY.times[[0, 6, 12]])
    with pytest.raises(ParameterDomainError):
        simulate_paths(CASE2, MONTHLY, 5, 9, record="odd")


def test_fixing_average():
    full = simulate_paths(CASE2, MONTHLY, 50, 9)
    avg = simulate_paths(CASE2, MONTHLY, 50, 9, record="none", fixings=np.arange(1, 13))
    np.testing.assert_allclose(avg.average, full.spot[:, 1:].mean(axis=1), rtol=1e-13)
    assert avg.spot.shape == (50, 0)


def test_factors_reconstruct_log_spot():
    batch = simulate_paths(CASE2, MONTHLY, 40, 10, retain_factors=True)
    f = batch.factors
    assert set(f) == {"X", "Y1", "Y2"}
    log_s = np.log(22.0) + drift_table(CASE2, MONTHLY) + f["X"] + f["Y1"] - f["Y2"]
    np.testing.assert_allclose(np.log(batch.spot), log_s, atol=1e-12)
    assert f["Y1"].min() >= 0 and f["Y2"].min() >= 0


def test_jump_factor_lag_one_autocorrelation():
    # exact stepping keeps corr(Y(t), Y(t + dt)) = e^{-k dt} once near stationarity
    batch = simulate_paths(CASE2, TimeGrid.daily(), 4000, 12, retain_factors=True)
    y = batch.factors["Y1"][:, 60:]
    a, b = y[:, :-1].ravel(), y[:, 1:].ravel()
    assert np.corrcoef(a, b)[0, 1] == pytest.approx(math.exp(-50 / 365), abs=0.02)
    x = batch.factors["X"][:, 60:]
    assert np.corrcoef(x[:, :-1].ravel(), x[:, 1:].ravel())[0, 1] == pytest.approx(
        math.exp(-67 / 365), abs=0.02)


def test_samplers_agree_in_law():
    n = 100_000
    finals = {k: simulate_paths(CASE2.with_sampler(k), MONTHLY, n, 20 + i, record="last").spot[:, 0]
              for i, k in enumerate(EXACT_KINDS)}
    kinds = list(finals)
    for i in range(3):
        for j in range(i + 1, 3):
            assert stats.ks_2samp(finals[kinds[i]], finals[kinds[j]]).pvalue > 0.01


def test_kou_route_matches_two_legs():
    kou = KouJumps(50.0, 20.0, 0.5, 10.0, 20.0)
    n = 100_000
    legs = simulate_paths(MarketModel(DIFF, kou, sampler="polya"), MONTHLY, n, 30, record="last")
    single = simulate_paths(MarketModel(DIFF, kou, sampler="jumptime", route="kou"), MONTHLY, n, 31,
                            record="last")
    assert stats.ks_2samp(legs.spot[:, 0], single.spot[:, 0]).pvalue > 0.01


def test_laplace_routes_agree():
    jumps = LaplaceJumps(50.0, 20.0, 40.0)
    n = 100_000
    a = simulate_paths(MarketModel(DIFF, jumps, sampler="randomrate"), MONTHLY, n, 32, record="last")
    b = simulate_paths(MarketModel(DIFF, jumps, sampler="polya", route="legs"), MONTHLY, n, 33,
                       record="last")
    assert stats.ks_2samp(a.spot[:, 0], b.spot[:, 0]).pvalue > 0.01


def test_euler_paths_need_small_steps():
    model = CASE2.with_sampler("euler")
    with pytest.raises(StepSizeError):
        simulate_paths(model, MONTHLY, 10, 0)
    batch = simulate_paths(model, TimeGrid.daily(), 10, 0)
    assert batch.sampler.value == "euler" and batch.spot.min() > 0


def test_stepwise_intensity_is_split_inside_coarse_steps():
    # daily intensity pieces on a monthly grid must give the same law as on a daily grid
    model = MarketModel(DIFF, LaplaceJumps(50.0, 20.0, SeasonalIntensity(32.0, 2.0, 0.25)))
    n = 100_000
    coarse = simulate_paths(model, TimeGrid.uniform(1.0, 4), n, 40, record="last").spot[:, 0]
    fine = simulate_paths(model, TimeGrid.daily(), n, 41, record="last").spot[:, 0]
    assert stats.ks_2samp(coarse, fine).pvalue > 0.01


def test_jump_counts_match_integrated_intensity():
    model = MarketModel(DIFF, LaplaceJumps(50.0, 20.0, SeasonalIntensity(32.0, 2.0, 0.25)))
    expected = expected_jump_count(model, 1.0)
    counts = jump_counts(model, MONTHLY, 100_000, 42)
    assert abs(counts.mean() - expected) < 5 * se(counts)
    assert expected_jump_count(CASE2, 1.0) == pytest.approx(40.0)


def test_csv_export(tmp_path):
    batch = simulate_paths(CASE2, MONTHLY, 4, 1, retain_factors=True)
    path = tmp_path / "paths.csv"
    batch.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert [float(t) for t in rows[0]] == list(MONTHLY.times)
    np.testing.assert_array_equal(np.array(rows[1:], float), batch.spot)
    batch.to_csv(path, factors=True)
    rows = list(csv.reader(open(path)))
    assert rows[0][:2] == ["series", "path"]
    assert [r[0] for r in rows[1:]] == ["S"] * 4 + ["X"] * 4 + ["Y1"] * 4 + ["Y2"] * 4


def test_set_workers_clips():
    assert set_workers(10_000) == numba.config.NUMBA_NUM_THREADS
    assert set_workers(0) == 1
    set_workers(None)


def test_invalid_path_count():
    with pytest.raises(ParameterDomainError):
        simulate_paths(CASE2, MONTHLY, 0, 1)


def test_csv_is_reproducible(tmp_path):
    digests = []
    for i in range(2):
        p = tmp_path / f"p{i}.csv"
        simulate_paths(CASE2, MONTHLY, 100, 5).to_csv(p)
        digests.append(hashlib.sha256(p.read_bytes()).hexdigest())
    assert digests[0] == digests[1]


def test_path_standard_error_helper():
    assert se([1.0, 1.0, 1.0]) == 0.0


@pytest.mark.parametrize("sampler", ["jumptime", "randomrate"])
def test_kou_route_martingale(sampler):
    model = MarketModel(DIFF, KouJumps(50.0, 20.0, 0.3, 10.0, 20.0), sampler=sampler, route="kou")
    n = 100_000
    batch = simulate_paths(model, TimeGrid(np.array([0.0, 0.25, 1.0])), n, 43, record=[1, 2])
    ratio = batch.spot / 22.0
    z = np.abs(ratio.mean(axis=0) - 1) / (ratio.std(axis=0, ddof=1) / math.sqrt(n))
    assert z.max() < 5


def test_kou_euler_route_runs():
    model = MarketModel(DIFF, KouJumps(50.0, 20.0, 0.5, 10.0, 20.0), sampler="euler", route="kou")
    batch = simulate_paths(model, TimeGrid.daily(), 1000, 44)
    assert np.all(np.isfinite(batch.spot)) and batch.spot.min() > 0
    assert abs(batch.spot[:, -1].mean() / 22.0 - 1) < 0.05
