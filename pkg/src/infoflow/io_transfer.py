"""Transfers involving inputs and outputs, and the feedback-loop Bode identity.

The one-step formulas follow the input/output model
``z' = A z + B u``, ``theta = C z + omega`` with i.i.d. input ``u``
(covariance ``Sigma_u``) uncorrelated with the state.  The feedback loop is
``z' = A z + B u``, ``w = C z``, ``u = w + xi`` with i.i.d. ``xi``; its
output-to-input average transfer equals the sum of ``log|lambda|`` over the
open-loop unstable eigenvalues.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import toeplitz

from .directed_info import DirectedInfoSeries, directed_information_increments_from_factor
from .errors import (
    DegenerateCovarianceError,
    DimensionError,
    UndefinedTransferError,
    UnstableSystemError,
)
from .gauss import (
    LOG_2PIE,
    CovarianceState,
    LinearSystem,
    SelectorLike,
    as_selector,
    chain_rule_logdets,
    check_psd,
    complement,
    logdet,
    schur_complement,
    symmetrize,
)
from .transfer import SeriesKind, TransferSeries

UNSTABLE_TOL = 1e-9


def _logdet_or_undefined(M: np.ndarray, what: str) -> float:
    try:
        return logdet(M)
    except DegenerateCovarianceError as exc:
        raise UndefinedTransferError(
            f"{what} is singular; the transfer is undefined without regularization"
        ) from exc


def _require(value, name: str):
    if value is None:
        raise ValueError(f"system has no {name}")
    return value


def input_to_state_transfer(
    sys: LinearSystem,
    Sigma: CovarianceState,
    x: SelectorLike,
    eps: float | None = None,
) -> float:
    """Transfer from the input to the state block `x` over one step.

    ``0.5 * log |A_xy S A_xy^T + B_x Sigma_u B_x^T| / |A_xy S A_xy^T|`` with
    ``y`` the complement of `x` and ``S`` the covariance of ``y`` given ``x``.
    The model has no process noise, so the denominator is often singular;
    that raises :class:`UndefinedTransferError` unless `eps` adds
    ``eps * I`` to both matrices.
    """
    B = _require(sys.B, "input matrix B")
    Sigma_u = _require(sys.Sigma_u, "input covariance Sigma_u")
    N = sys.n_states
    x = as_selector(x).check(N)
    y = complement(N, x)
    xs, ys = list(x), list(y)
    if Sigma.dim != N:
        raise DimensionError("covariance does not match the system")

    if ys:
        S = schur_complement(Sigma.Sigma, ys, xs)
        A_xy = sys.A[np.ix_(xs, ys)]
        base = A_xy @ S @ A_xy.T
    else:
        base = np.zeros((len(xs), len(xs)))
    B_x = B[xs, :]
    drive = B_x @ Sigma_u @ B_x.T
    if eps is not None:
        if eps <= 0:
            raise ValueError("eps must be positive")
        base = base + eps * np.eye(len(xs))
    num = _logdet_or_undefined(symmetrize(base + drive), "driven conditional covariance")
    den = _logdet_or_undefined(symmetrize(base), "input-frozen conditional covariance")
    return 0.5 * (num - den)


def _output_cross_term(sys: LinearSystem, Sigma_z: np.ndarray) -> np.ndarray:
    C, A = sys.C, sys.A
    CSC = C @ Sigma_z @ C.T
    CASC = C @ A @ Sigma_z @ C.T
    try:
        return CASC @ np.linalg.solve(CSC, CASC.T)
    except np.linalg.LinAlgError as exc:
        raise DegenerateCovarianceError("C Sigma_z C^T is singular") from exc


def _check_output_model(sys: LinearSystem, Sigma: CovarianceState):
    C = _require(sys.C, "output matrix C")
    Sw = _require(sys.Sigma_omega, "output noise covariance Sigma_omega")
    if Sigma.dim != sys.n_states:
        raise DimensionError("covariance does not match the system")
    return C, Sw


def state_to_output_transfer(sys: LinearSystem, Sigma: CovarianceState) -> float:
    """Transfer from the whole state to the output over one step.

    ``0.5 * log |Sigma_{theta'|theta}| / |Sigma_omega|`` where::

        Sigma_{theta'|theta} = C Sigma_z' C^T + Sigma_omega
                               - (C A S C^T)(C S C^T)^{-1}(C A S C^T)^T

    and ``Sigma_z' = A S A^T + Q + B Sigma_u B^T`` is the next-step state
    covariance (input term only when the system has ``B`` and ``Sigma_u``).
    Freezing the state leaves ``theta = omega``.
    """
    C, Sw = _check_output_model(sys, Sigma)
    S = Sigma.Sigma
    Sz_next = sys.A @ S @ sys.A.T + sys.noise_cov
    if sys.B is not None and sys.Sigma_u is not None:
        Sz_next = Sz_next + sys.B @ sys.Sigma_u @ sys.B.T
    if np.all(C == 0.0):
        return 0.0
    cond = symmetrize(C @ Sz_next @ C.T + Sw - _output_cross_term(sys, S))
    return 0.5 * (logdet(cond) - logdet(Sw))


def input_to_output_transfer(sys: LinearSystem, Sigma: CovarianceState) -> float:
    """Transfer from the input to the output over one step.

    Numerator and denominator are the output's conditional covariance with
    and without the input term ``C B Sigma_u B^T C^T``::

        C A S A^T C^T [+ C B Sigma_u B^T C^T] + Sigma_omega
            - (C A S C^T)(C S C^T)^{-1}(C A S C^T)^T

    No process-noise term enters, matching the noise-free plant.
    """
    C, Sw = _check_output_model(sys, Sigma)
    B = _require(sys.B, "input matrix B")
    Sigma_u = _require(sys.Sigma_u, "input covariance Sigma_u")
    S = Sigma.Sigma
    CA = C @ sys.A
    frozen = CA @ S @ CA.T + Sw - _output_cross_term(sys, S)
    driven = frozen + C @ B @ Sigma_u @ B.T @ C.T
    num = _logdet_or_undefined(symmetrize(driven), "output conditional covariance")
    den = _logdet_or_undefined(symmetrize(frozen), "input-frozen output conditional covariance")
    return 0.5 * (num - den)


@dataclass(frozen=True, eq=False)
class FeedbackLoop:
    """SISO loop ``z' = (A + B C) z + B xi``, ``w = C z``, ``u = w + xi``.

    `noise` is the variance of ``xi``.  `Sigma0` is the covariance of
    ``z(0)``; :func:`close_loop` defaults it to the closed loop's stationary
    covariance when the loop is stable.
    """

    plant: LinearSystem
    closed_A: np.ndarray
    noise: float
    Sigma0: np.ndarray | None = field(default=None, repr=False)

    @property
    def B(self) -> np.ndarray:
        return self.plant.B

    @property
    def C(self) -> np.ndarray:
        return self.plant.C

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.closed_A))))

    def is_stable(self) -> bool:
        return self.spectral_radius() < 1.0


def close_loop(
    plant: LinearSystem, noise: float = 1.0, Sigma0: np.ndarray | None = None
) -> FeedbackLoop:
    """Close the unity feedback loop around `plant`.

    If `Sigma0` is omitted and the closed loop is stable, the loop starts in
    its stationary distribution (solution of
    ``S = A_cl S A_cl^T + noise B B^T``).  An unstable closed loop is still
    returned; analyses that need stability raise later.
    """
    B = _require(plant.B, "input matrix B")
    C = _require(plant.C, "output matrix C")
    N = plant.n_states
    if B.shape != (N, 1) or C.shape != (1, N):
        raise DimensionError(f"feedback loop needs B {N}x1 and C 1x{N}, got {B.shape} and {C.shape}")
    noise = float(noise)
    if not noise > 0.0:
        raise ValueError("noise variance must be positive")
    closed = plant.A + B @ C
    closed.flags.writeable = False
    if Sigma0 is None:
        radius = float(np.max(np.abs(np.linalg.eigvals(closed))))
        if radius < 1.0:
            Sigma0 = _stationary(closed, noise * (B @ B.T))
        else:
            Sigma0 = np.eye(N)
    else:
        Sigma0 = np.array(Sigma0, dtype=float)
        if Sigma0.shape != (N, N):
            raise DimensionError(f"Sigma0 must be {N}x{N}")
        check_psd(Sigma0, "Sigma0")
    Sigma0.flags.writeable = False
    return FeedbackLoop(plant=plant, closed_A=closed, noise=noise, Sigma0=Sigma0)


def _stationary(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    S = Q.copy()
    M = A.copy()
    for _ in range(200):
        nxt = symmetrize(S + M @ S @ M.T)
        M = M @ M
        if np.max(np.abs(nxt - S)) <= 1e-15 * max(1.0, float(np.max(np.abs(nxt)))):
            return nxt
        S = nxt
    return S


def _loop_signal_maps(loop: FeedbackLoop, T: int):
    """Linear maps from ``(z(0), xi(0..T))`` to ``w(0..T)`` and ``u(0..T)``."""
    A, B, C = loop.closed_A, loop.B, loop.C
    N = A.shape[0]
    state_part = np.empty((T + 1, N))
    impulse = np.zeros(T + 1)  # impulse[k] = C A^(k-1) B for k >= 1
    row = C.copy()
    col = B.copy()
    for t in range(T + 1):
        state_part[t] = row.ravel()
        row = row @ A
        if t >= 1:
            impulse[t] = (C @ col).item()
            col = A @ col
    noise_part = toeplitz(impulse, np.zeros(T + 1))
    Lw = np.hstack([state_part, noise_part])
    Lu = Lw.copy()
    Lu[:, N:] += np.eye(T + 1)
    return Lw, Lu


def _loop_source_cov(loop: FeedbackLoop, T: int) -> np.ndarray:
    N = loop.closed_A.shape[0]
    W = np.zeros((N + T + 1, N + T + 1))
    W[:N, :N] = loop.Sigma0
    W[N:, N:] = loop.noise * np.eye(T + 1)
    return W


def _sqrt_psd(W: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(W)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def _require_stable(loop: FeedbackLoop) -> None:
    if not loop.is_stable():
        raise UnstableSystemError(
            f"closed loop is unstable (spectral radius {loop.spectral_radius():.6g})"
        )


def feedback_output_input_transfer(loop: FeedbackLoop, T: int) -> TransferSeries:
    """n-step transfer from the plant output ``w`` to the input ``u``, ``k = 1..T``.

    Step ``k`` is ``H(u(k) | u(0..k-1)) - H(xi)``: freezing ``w`` leaves
    ``u = xi``, whose entropy is ``0.5 log(2 pi e noise)`` per step.  The
    covariance of ``u(0..T)`` is the exact image of ``(z(0), xi(0..T))``, so
    all ``z``-``xi`` cross-correlations are included.
    """
    if T < 1:
        raise ValueError("T must be positive")
    _require_stable(loop)
    _, Lu = _loop_signal_maps(loop, T)
    K = symmetrize(Lu @ _loop_source_cov(loop, T) @ Lu.T)
    cond = chain_rule_logdets(K, 1)[1:]
    values = 0.5 * (cond - np.log(loop.noise))
    return TransferSeries(
        steps=tuple(range(1, T + 1)),
        values=values,
        kind=SeriesKind.N_STEP,
        source_name="w",
        target_name="u",
    )


def feedback_average_transfer(loop: FeedbackLoop, T: int) -> TransferSeries:
    """Running averages of :func:`feedback_output_input_transfer`."""
    series = feedback_output_input_transfer(loop, T)
    ks = np.asarray(series.steps, dtype=float)
    return TransferSeries(
        steps=series.steps,
        values=np.cumsum(series.values) / ks,
        kind=SeriesKind.AVERAGE,
        source_name="w",
        target_name="u",
    )


def feedback_directed_information(loop: FeedbackLoop, n: int) -> DirectedInfoSeries:
    """``I(w^k -> u^k)`` for ``k = 1..n`` over samples ``0..n-1``."""
    if n < 1:
        raise ValueError("n must be positive")
    _require_stable(loop)
    Lw, Lu = _loop_signal_maps(loop, n - 1)
    F = np.vstack([Lw, Lu]) @ _sqrt_psd(_loop_source_cov(loop, n - 1))
    inc = directed_information_increments_from_factor(F, 1, 1, n)
    return DirectedInfoSeries(
        source="w",
        target="u",
        steps=tuple(range(1, n + 1)),
        values=np.cumsum(inc),
        increments=inc,
    )


@dataclass(frozen=True)
class BodeReport:
    unstable_eigenvalues: tuple[complex, ...]
    marginal_eigenvalues: tuple[complex, ...]
    bode_integral: float
    average_transfer: float
    gap: float
    horizon: int

    def as_dict(self) -> dict:
        def enc(vals):
            return [[float(np.real(v)), float(np.imag(v))] for v in vals]

        return {
            "unstable_eigenvalues": enc(self.unstable_eigenvalues),
            "marginal_eigenvalues": enc(self.marginal_eigenvalues),
            "bode_integral": self.bode_integral,
            "average_transfer": self.average_transfer,
            "gap": self.gap,
            "horizon": self.horizon,
        }


def unstable_eigenvalues(A: np.ndarray) -> tuple[tuple[complex, ...], tuple[complex, ...]]:
    """Eigenvalues with ``|lambda| > 1 + 1e-9`` and those on the unit circle."""
    eig = np.linalg.eigvals(np.asarray(A, dtype=float))
    mag = np.abs(eig)
    unstable = tuple(complex(v) for v in eig[mag > 1.0 + UNSTABLE_TOL])
    marginal = tuple(complex(v) for v in eig[np.abs(mag - 1.0) <= UNSTABLE_TOL])
    return unstable, marginal


def bode_integral(A: np.ndarray) -> float:
    unstable, _ = unstable_eigenvalues(A)
    return float(sum(np.log(abs(v)) for v in unstable))


def bode_report(loop: FeedbackLoop, T: int = 300) -> BodeReport:
    """Compare ``sum log|lambda_unstable(A)|`` with the average ``w -> u`` transfer at horizon `T`."""
    unstable, marginal = unstable_eigenvalues(loop.plant.A)
    integral = float(sum(np.log(abs(v)) for v in unstable))
    avg = float(feedback_average_transfer(loop, T).values[-1])
    return BodeReport(
        unstable_eigenvalues=unstable,
        marginal_eigenvalues=marginal,
        bode_integral=integral,
        average_transfer=avg,
        gap=abs(avg - integral),
        horizon=T,
    )


def noise_entropy(loop: FeedbackLoop) -> float:
    return 0.5 * (LOG_2PIE + np.log(loop.noise))
