import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infoflow import (
    CovarianceState,
    LinearSystem,
    bode_integral,
    bode_report,
    close_loop,
    feedback_average_transfer,
    feedback_directed_information,
    feedback_output_input_transfer,
    input_to_output_transfer,
    input_to_state_transfer,
    state_to_output_transfer,
)
from infoflow.errors import DimensionError, UndefinedTransferError, UnstableSystemError
from infoflow.io_transfer import noise_entropy, unstable_eigenvalues

HALF_LOG2 = 0.5 * np.log(2.0)


# --- one-step input/output transfers -----------------------------------------

def test_input_to_state_scalar_example():
    sys = LinearSystem(np.array([[0.0, 1.0], [0.0, 0.0]]), B=[1.0, 0.0], Sigma_u=[[1.0]])
    assert input_to_state_transfer(sys, CovarianceState(0, np.eye(2)), [0]) == pytest.approx(HALF_LOG2)


def test_input_to_state_singular_denominator():
    # x0 receives nothing from x1, so the input-frozen covariance is zero
    sys = LinearSystem(np.zeros((2, 2)), B=[1.0, 0.0], Sigma_u=[[1.0]])
    S = CovarianceState(0, np.eye(2))
    with pytest.raises(UndefinedTransferError):
        input_to_state_transfer(sys, S, [0])
    assert input_to_state_transfer(sys, S, [0], eps=1e-6) == pytest.approx(0.5 * np.log(1e6 + 1))


def test_input_to_state_needs_input_model():
    with pytest.raises(ValueError):
        input_to_state_transfer(LinearSystem(np.eye(2)), CovarianceState(0, np.eye(2)), [0])


def test_state_to_output_scalar_example():
    sys = LinearSystem(np.zeros((1, 1)), C=[[1.0]], Sigma_omega=[[1.0]])
    assert state_to_output_transfer(sys, CovarianceState(0, np.eye(1))) == pytest.approx(HALF_LOG2)


def test_state_to_output_zero_c():
    sys = LinearSystem(np.eye(2) * 0.5, C=[[0.0, 0.0]], Sigma_omega=[[1.0]])
    assert state_to_output_transfer(sys, CovarianceState(0, np.eye(2))) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.05, 5.0))
def test_state_to_output_decreases_with_measurement_noise(w1, w2):
    lo, hi = sorted((w1, w2))
    A = np.array([[0.6, 0.2], [0.1, 0.5]])
    S = CovarianceState(0, np.eye(2))
    t_lo = state_to_output_transfer(LinearSystem(A, C=[[1.0, 0.5]], Sigma_omega=[[lo]]), S)
    t_hi = state_to_output_transfer(LinearSystem(A, C=[[1.0, 0.5]], Sigma_omega=[[hi]]), S)
    assert t_lo >= t_hi - 1e-12
    assert t_hi >= 0.0


def test_input_to_output_scalar_example():
    sys = LinearSystem(np.array([[0.5]]), B=[[1.0]], C=[[1.0]], Sigma_u=[[1.0]], Sigma_omega=[[1.0]])
    assert input_to_output_transfer(sys, CovarianceState(0, np.eye(1))) == pytest.approx(HALF_LOG2)


# --- feedback loop ------------------------------------------------------------

def test_close_loop_validation(feedback_plant):
    with pytest.raises(DimensionError):
        close_loop(LinearSystem(np.eye(2), B=np.eye(2), C=[1.0, 0.0]))
    with pytest.raises(ValueError):
        close_loop(feedback_plant, noise=0.0)
    loop = close_loop(feedback_plant)
    np.testing.assert_allclose(loop.closed_A, [[0.5, 2.0], [0.0, 0.7]])
    assert loop.is_stable()


def test_stationary_start_is_fixed_point(feedback_plant):
    loop = close_loop(feedback_plant, noise=2.0)
    Acl, B = loop.closed_A, loop.B
    np.testing.assert_allclose(Acl @ loop.Sigma0 @ Acl.T + 2.0 * B @ B.T, loop.Sigma0, atol=1e-12)


def test_bode_identity(feedback_plant):
    rep = bode_report(close_loop(feedback_plant), 300)
    assert rep.bode_integral == pytest.approx(np.log(4.0))
    assert rep.gap < 1e-3
    assert len(rep.unstable_eigenvalues) == 1
    assert rep.as_dict()["unstable_eigenvalues"] == [[4.0, 0.0]]


def test_bode_two_unstable_modes():
    # deadbeat gains place both closed-loop poles at 0
    plant = LinearSystem(np.diag([2.0, 3.0]), B=[1.0, 1.0], C=[4.0, -9.0])
    loop = close_loop(plant)
    assert loop.spectral_radius() < 1e-6
    rep = bode_report(loop, 300)
    assert rep.bode_integral == pytest.approx(np.log(6.0))
    assert rep.gap < 1e-3


def test_stable_plant_has_no_transfer_rate():
    plant = LinearSystem(np.diag([0.5, 0.3]), B=[1.0, 1.0], C=[0.2, 0.1])
    rep = bode_report(close_loop(plant), 300)
    assert rep.bode_integral == 0.0
    assert rep.average_transfer < 1e-3


def test_unstable_loop_raises():
    plant = LinearSystem(np.array([[2.0]]), B=[1.0], C=[0.5])
    loop = close_loop(plant)
    assert not loop.is_stable()
    with pytest.raises(UnstableSystemError):
        feedback_output_input_transfer(loop, 10)


def test_transfer_series_nonnegative(feedback_plant):
    s = feedback_output_input_transfer(close_loop(feedback_plant), 100)
    assert np.all(s.values >= -1e-12)
    assert s.source_name == "w" and s.target_name == "u"


@pytest.mark.parametrize("noise", [0.5, 2.0, 10.0])
def test_invariant_under_noise_scaling(feedback_plant, noise):
    ref = feedback_output_input_transfer(close_loop(feedback_plant, 1.0), 50).values
    got = feedback_output_input_transfer(close_loop(feedback_plant, noise), 50).values
    np.testing.assert_allclose(got, ref, atol=1e-10)


def test_transfer_matches_explicit_simulation_covariance(feedback_plant):
    # build Cov(u(0..T)) by propagating the joint (z, u) covariance directly
    loop = close_loop(feedback_plant)
    T = 6
    A, B, C, r = loop.closed_A, loop.B, loop.C, loop.noise
    # augmented state (z(t), xi(t)); u(t) = C z(t) + xi(t)
    N = A.shape[0]
    Aa = np.zeros((N + 1, N + 1))
    Aa[:N, :N] = A
    Aa[:N, N:] = B
    Qa = np.zeros((N + 1, N + 1))
    Qa[N, N] = r
    Sa = np.zeros((N + 1, N + 1))
    Sa[:N, :N] = loop.Sigma0
    Sa[N, N] = r
    h = np.hstack([C.ravel(), [1.0]])
    P = [np.eye(N + 1)]
    for _ in range(T):
        P.append(Aa @ P[-1])
    Ss = [Sa]
    for _ in range(T):
        Ss.append(Aa @ Ss[-1] @ Aa.T + Qa)
    K = np.empty((T + 1, T + 1))
    for a in range(T + 1):
        for b in range(a + 1):
            K[a, b] = K[b, a] = h @ P[a - b] @ Ss[b] @ h
    ref = []
    for k in range(1, T + 1):
        Kp = K[:k, :k]
        c = K[k, :k]
        ref.append(0.5 * np.log((K[k, k] - c @ np.linalg.solve(Kp, c)) / r))
    got = feedback_output_input_transfer(loop, T).values
    np.testing.assert_allclose(got, ref, atol=1e-10)


def test_average_and_directed_information(feedback_plant):
    loop = close_loop(feedback_plant)
    avg = feedback_average_transfer(loop, 200).values[-1]
    di = feedback_directed_information(loop, 200)
    assert abs(di.values[-1] / 200 - avg) < 0.02
    assert np.all(di.increments >= -1e-9)


def test_eigenvalue_helpers():
    A = np.array([[1.2, -0.5], [0.5, 1.2]])  # |lambda| = 1.3 twice
    unstable, marginal = unstable_eigenvalues(A)
    assert len(unstable) == 2 and not marginal
    assert bode_integral(A) == pytest.approx(2 * np.log(1.3))
    _, marginal = unstable_eigenvalues(np.diag([1.0, 0.5]))
    assert len(marginal) == 1


def test_noise_entropy(feedback_plant):
    loop = close_loop(feedback_plant, noise=3.0)
    assert noise_entropy(loop) == pytest.approx(0.5 * np.log(2 * np.pi * np.e * 3.0))
