import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infoflow import (
    CovarianceState,
    LinearSystem,
    TransferQuery,
    TransferSeries,
    average_transfer,
    average_transfer_series,
    cumulative_transfer,
    joint_entropy_difference,
    n_step_transfer,
    one_step_transfer,
    one_step_transfer_xy,
    propagate,
    steady_state_covariance,
)
from infoflow.errors import DegenerateCovarianceError, UnstableSystemError
from infoflow.transfer import DEGENERATE, SeriesKind, settle_index

from .conftest import EX1_A, chain, random_spd, random_stable
from .oracles import MC_SYSTEMS, monte_carlo_one_step

seeds = st.integers(0, 2**32 - 1)


def q(src, tgt, horizon=1, base_t=0):
    return TransferQuery(src, tgt, base_t, horizon)


# --- one-step closed forms ---------------------------------------------------

def test_one_step_xy_scalar_example():
    # y' = x + y + noise with independent unit x, y: 0.5 log 2
    sys = LinearSystem(np.array([[0.0, 0.0], [1.0, 1.0]]))
    assert one_step_transfer_xy(sys, CovarianceState(0, np.eye(2)), 0, 1) == pytest.approx(0.5 * np.log(2))


def test_one_step_xy_requires_partition():
    with pytest.raises(ValueError):
        one_step_transfer_xy(LinearSystem(np.eye(3)), CovarianceState(0, np.eye(3)), 0, 1)


def test_one_step_rejects_overlap():
    with pytest.raises(ValueError):
        one_step_transfer(LinearSystem(np.eye(3)), CovarianceState(0, np.eye(3)), [0, 1], [1])


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_one_step_xy_nonnegative(seed):
    rng = np.random.default_rng(seed)
    sys = LinearSystem(random_stable(rng, 4, density=0.6), sigma=rng.uniform(0.3, 2.0))
    S = CovarianceState(0, random_spd(rng, 4))
    assert one_step_transfer_xy(sys, S, [0, 1], [2, 3]) >= -1e-12


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_general_form_reduces_to_xy_without_bystanders(seed):
    rng = np.random.default_rng(seed)
    sys = LinearSystem(random_stable(rng, 3))
    S = CovarianceState(0, random_spd(rng, 3))
    assert one_step_transfer(sys, S, [0, 2], [1]) == pytest.approx(
        one_step_transfer_xy(sys, S, [0, 2], [1]), abs=1e-12
    )


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_one_step_equals_first_n_step(seed):
    rng = np.random.default_rng(seed)
    sys = LinearSystem(random_stable(rng, 4))
    S = CovarianceState(0, random_spd(rng, 4))
    series = n_step_transfer(sys, S, q([0], [2], 1))
    assert series.values[0] == pytest.approx(one_step_transfer(sys, S, 0, 2), abs=1e-10)


def test_one_step_can_be_negative_with_correlated_bystander():
    # y' = -x_src + x_by + noise, corr(x_src, x_by) = 0.9.  The two inputs
    # nearly cancel; freezing the source removes the cancellation.
    A = np.zeros((3, 3))
    A[2, :2] = [-1.0, 1.0]
    S = np.eye(3)
    S[0, 1] = S[1, 0] = 0.9
    value = one_step_transfer(LinearSystem(A), CovarianceState(0, S), 0, 2)
    assert value == pytest.approx(0.5 * np.log(1.2 / 2.0))


def test_one_step_zero_iff_no_edge_random():
    rng = np.random.default_rng(11)
    for _ in range(50):
        A = random_stable(rng, 4, density=0.5, low=0.2)
        sys = LinearSystem(A)
        S = steady_state_covariance(sys)
        for i in range(4):
            for j in range(4):
                if i == j:
                    continue
                v = one_step_transfer(sys, S, i, j)
                assert (abs(v) < 1e-10) == (A[j, i] == 0.0)


@pytest.mark.parametrize("idx", range(len(MC_SYSTEMS)))
def test_one_step_monte_carlo(idx):
    A, S = MC_SYSTEMS[idx]
    rng = np.random.default_rng(100 + idx)
    analytic = one_step_transfer(LinearSystem(A), CovarianceState(0, S), 0, 1)
    est, se = monte_carlo_one_step(A, S, 0, 1, 200_000, rng)
    assert abs(est - analytic) < 3 * se


# --- n-step -----------------------------------------------------------------

def test_example1_zero_transfer(ex1):
    sys, S0 = ex1
    for tgt in (1, 2):
        series = n_step_transfer(sys, S0, q(0, tgt, 20))
        assert np.max(np.abs(series.values)) < 1e-10
    back = n_step_transfer(sys, S0, q(1, 0, 5))
    assert np.all(back.values > 0.01)


def test_chain_delay_front():
    N = 12
    sys = LinearSystem(chain(N))
    S0 = CovarianceState(0, np.eye(N))
    v = n_step_transfer(sys, S0, q(0, 6, 10)).values
    assert np.all(np.abs(v[:5]) < 1e-10)
    assert v[5] > 0.01  # step 6 = graph distance


def test_n_step_base_t_propagates():
    rng = np.random.default_rng(5)
    sys = LinearSystem(random_stable(rng, 3))
    S0 = CovarianceState(0, np.eye(3))
    later = n_step_transfer(sys, S0, q(0, 1, 3, base_t=4))
    direct = n_step_transfer(sys, propagate(sys, S0, 4), q(0, 1, 3, base_t=4))
    np.testing.assert_allclose(later.values, direct.values, atol=1e-12)


def test_n_step_degenerate_target():
    # y(0) = 0 almost surely, so conditioning on the past needs a pseudoinverse
    sys = LinearSystem(np.array([[0.0, 0.0], [1.0, 0.0]]), noise_var=[1.0, 1.0])
    S0 = CovarianceState(0, np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(DegenerateCovarianceError):
        n_step_transfer(sys, S0, q(0, 1, 2))
    series = n_step_transfer(sys, S0, q(0, 1, 2), allow_degenerate=True)
    assert series.degenerate
    assert series.flags[0] == DEGENERATE
    # y(0) carries no information; both sides reduce to 0.5 log(var ratio)
    np.testing.assert_allclose(series.values, 0.5 * np.log(2.0))


def test_series_metadata(ex1):
    sys, S0 = ex1
    s = n_step_transfer(sys, S0, q([1, 2], 0, 3))
    assert s.kind is SeriesKind.N_STEP
    assert s.steps == (1, 2, 3)
    assert s.source_name == "1,2" and s.target_name == "0"
    assert len(s.items()) == 3


def test_series_validation():
    with pytest.raises(ValueError):
        TransferSeries((1, 2), [0.1], SeriesKind.N_STEP)
    with pytest.raises(ValueError):
        TransferSeries((2, 1), [0.1, 0.2], SeriesKind.N_STEP)
    with pytest.raises(ValueError):
        TransferSeries((1,), [np.nan], SeriesKind.N_STEP)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_cumulative_equals_joint_entropy_difference(seed):
    rng = np.random.default_rng(seed)
    sys = LinearSystem(random_stable(rng, 3, density=0.7))
    S0 = CovarianceState(0, random_spd(rng, 3))
    query = q(0, 2, 8)
    cum = cumulative_transfer(n_step_transfer(sys, S0, query)).values
    np.testing.assert_allclose(cum, joint_entropy_difference(sys, S0, query), atol=1e-8)


def test_cumulative_requires_n_step():
    s = TransferSeries((1,), [0.1], SeriesKind.AVERAGE)
    with pytest.raises(ValueError):
        cumulative_transfer(s)


@settings(max_examples=25, deadline=None)
@given(seeds, st.floats(0.1, 10.0))
def test_invariant_under_noise_scaling(seed, c):
    # scaling the noise and the initial covariance by c^2 scales every
    # trajectory covariance by c^2 and leaves log-ratios unchanged
    rng = np.random.default_rng(seed)
    A = random_stable(rng, 3)
    S = random_spd(rng, 3)
    base = n_step_transfer(LinearSystem(A), CovarianceState(0, S), q(1, 0, 5)).values
    scaled = n_step_transfer(LinearSystem(A, sigma=c), CovarianceState(0, c * c * S), q(1, 0, 5)).values
    np.testing.assert_allclose(scaled, base, atol=1e-9)


# --- averages ---------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(seeds)
def test_average_is_mean_of_n_step(seed):
    rng = np.random.default_rng(seed)
    sys = LinearSystem(random_stable(rng, 4))
    S0 = CovarianceState(0, random_spd(rng, 4))
    query = q([0, 1], [3], 15)
    nstep = n_step_transfer(sys, S0, query).values
    avg = average_transfer_series(sys, S0, query, 15).values
    np.testing.assert_allclose(avg, np.cumsum(nstep) / np.arange(1, 16), atol=1e-9)


def test_average_transfer_converges():
    sys = LinearSystem(EX1_A)
    S0 = CovarianceState(0, np.eye(3))
    res = average_transfer(sys, S0, q(1, 0), T_max=400, tol=1e-4)
    assert res.converged
    assert res.value > 0


def test_average_transfer_unstable_raises():
    sys = LinearSystem(np.array([[1.5, 0.0], [1.0, 0.5]]))
    with pytest.raises(UnstableSystemError):
        average_transfer_series(sys, CovarianceState(0, np.eye(2)), q(0, 1), 10)


def test_settle_index():
    assert settle_index(np.array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0]), 1e-6) == 4
    assert settle_index(np.array([1.0, 2.0, 3.0]), 1e-6) is None
    assert settle_index(np.array([5.0, 5.0]), 1e-6) == 1
