"""Linear-Gaussian machinery.

Covariance propagation for ``z(t+1) = A z(t) + noise``, joint covariances of
selected coordinates over several consecutive time steps, Schur complements
(conditional covariances), log-determinants and Gaussian entropies.  Every
other module in the package is built on these functions.

All entropies are in nats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence, Union

import numpy as np
from scipy import linalg

from .errors import ConvergenceError, DegenerateCovarianceError, DimensionError

LOG_2PIE = math.log(2.0 * math.pi * math.e)

SYMMETRY_RTOL = 1e-12
PSD_RTOL = 1e-10
PINV_RTOL = 1e-12
LOG_FLOOR = 1e-300


def _as_matrix(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    arr.flags.writeable = False
    return arr


def symmetrize(S: np.ndarray) -> np.ndarray:
    return 0.5 * (S + S.T)


def check_psd(S: np.ndarray, name: str = "matrix") -> None:
    """Raise ``ValueError`` unless `S` is square, symmetric and PSD within tolerance."""
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {S.shape}")
    if S.size == 0:
        return
    norm = float(np.max(np.abs(S)))
    if np.max(np.abs(S - S.T)) > SYMMETRY_RTOL * max(norm, 1.0):
        raise ValueError(f"{name} is not symmetric")
    if norm > 0.0 and np.linalg.eigvalsh(S)[0] < -PSD_RTOL * norm:
        raise ValueError(f"{name} is not positive semidefinite")


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """Discrete-time system ``z' = A z + B u + w``, ``theta = C z + omega``.

    Process noise ``w`` has covariance ``sigma**2 * I`` unless `noise_var`
    gives per-state variances (a diagonal covariance).  `B`, `C`,
    `Sigma_u` (input covariance) and `Sigma_omega` (output noise covariance)
    are optional and only needed by the input/output analyses.
    """

    A: np.ndarray
    B: np.ndarray | None = None
    C: np.ndarray | None = None
    sigma: float = 1.0
    Sigma_omega: np.ndarray | None = None
    Sigma_u: np.ndarray | None = None
    noise_var: np.ndarray | None = None

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        object.__setattr__(self, "A", A)

        if self.B is not None:
            B = np.array(self.B, dtype=float)
            if B.ndim == 1:
                B = B.reshape(-1, 1)
            B = _as_matrix(B, "B")
            if B.shape[0] != n:
                raise DimensionError(f"B must have {n} rows, got {B.shape[0]}")
            object.__setattr__(self, "B", B)
        if self.C is not None:
            C = np.array(self.C, dtype=float)
            if C.ndim == 1:
                C = C.reshape(1, -1)
            C = _as_matrix(C, "C")
            if C.shape[1] != n:
                raise DimensionError(f"C must have {n} columns, got {C.shape[1]}")
            object.__setattr__(self, "C", C)

        sigma = float(self.sigma)
        if not sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        object.__setattr__(self, "sigma", sigma)

        if self.noise_var is not None:
            nv = np.array(self.noise_var, dtype=float).reshape(-1)
            if nv.shape != (n,):
                raise DimensionError(f"noise_var must have length {n}")
            if np.any(nv <= 0.0) or not np.all(np.isfinite(nv)):
                raise ValueError("noise_var entries must be positive")
            nv.flags.writeable = False
            object.__setattr__(self, "noise_var", nv)

        for name, size in (("Sigma_omega", self.n_outputs), ("Sigma_u", self.n_inputs)):
            value = getattr(self, name)
            if value is None:
                continue
            M = _as_matrix(value, name)
            check_psd(M, name)
            if size is not None and M.shape[0] != size:
                raise DimensionError(f"{name} must be {size}x{size}, got {M.shape}")
            object.__setattr__(self, name, M)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int | None:
        return None if self.B is None else self.B.shape[1]

    @property
    def n_outputs(self) -> int | None:
        return None if self.C is None else self.C.shape[0]

    @property
    def noise_cov(self) -> np.ndarray:
        """Process-noise covariance (``sigma**2 I`` or ``diag(noise_var)``)."""
        if self.noise_var is not None:
            return np.diag(self.noise_var)
        return self.sigma**2 * np.eye(self.n_states)

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A)))) if self.n_states else 0.0

    def replace(self, **changes) -> "LinearSystem":
        return replace(self, **changes)


@dataclass(frozen=True)
class SubspaceSelector:
    """Ordered, duplicate-free tuple of state indices (0-based)."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx):
            raise ValueError(f"selector indices must be distinct: {idx}")
        if any(i < 0 for i in idx):
            raise ValueError(f"selector indices must be nonnegative: {idx}")
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def check(self, n: int) -> "SubspaceSelector":
        if any(i >= n for i in self.indices):
            raise DimensionError(f"selector {self.indices} out of range for {n} states")
        return self

    def disjoint(self, other: "SubspaceSelector") -> bool:
        return not set(self.indices) & set(other.indices)


SelectorLike = Union[SubspaceSelector, int, Iterable[int]]


def as_selector(value: SelectorLike) -> SubspaceSelector:
    if isinstance(value, SubspaceSelector):
        return value
    if isinstance(value, (int, np.integer)):
        return SubspaceSelector((int(value),))
    return SubspaceSelector(tuple(value))


def complement(n: int, *selectors: SelectorLike) -> SubspaceSelector:
    """Indices in ``range(n)`` not used by any of `selectors`, in ascending order."""
    used = set()
    for s in selectors:
        used.update(as_selector(s).indices)
    return SubspaceSelector(tuple(i for i in range(n) if i not in used))


@dataclass(frozen=True, eq=False)
class CovarianceState:
    """State covariance `Sigma` at integer time step `t`."""

    t: int
    Sigma: np.ndarray

    def __post_init__(self):
        if int(self.t) != self.t or self.t < 0:
            raise ValueError(f"time step must be a nonnegative integer, got {self.t}")
        S = _as_matrix(self.Sigma, "Sigma")
        check_psd(S, "Sigma")
        object.__setattr__(self, "t", int(self.t))
        object.__setattr__(self, "Sigma", S)

    @property
    def dim(self) -> int:
        return self.Sigma.shape[0]

    def marginal(self, indices: SelectorLike) -> "CovarianceState":
        idx = list(as_selector(indices).check(self.dim))
        return CovarianceState(self.t, self.Sigma[np.ix_(idx, idx)])


@dataclass(frozen=True, eq=False)
class TrajectoryCovariance:
    """Joint covariance of one coordinate block over ``n + 1`` consecutive steps.

    `Gamma` is ordered oldest first: rows ``k*d:(k+1)*d`` belong to time
    ``base_t + k``.
    """

    base_t: int
    n: int
    d: int
    Gamma: np.ndarray = field(repr=False)

    def __post_init__(self):
        G = _as_matrix(self.Gamma, "Gamma")
        if G.shape != ((self.n + 1) * self.d,) * 2:
            raise DimensionError(f"Gamma shape {G.shape} does not match n={self.n}, d={self.d}")
        check_psd(G, "Gamma")
        object.__setattr__(self, "Gamma", G)

    def block(self, a: int, b: int) -> np.ndarray:
        d = self.d
        return self.Gamma[a * d:(a + 1) * d, b * d:(b + 1) * d]

    def prefix(self, k: int) -> np.ndarray:
        """Joint covariance of the first ``k + 1`` time steps."""
        m = (k + 1) * self.d
        return self.Gamma[:m, :m]


def _check_state(sys: LinearSystem, state: CovarianceState) -> None:
    if state.dim != sys.n_states:
        raise DimensionError(
            f"covariance is {state.dim}x{state.dim} but system has {sys.n_states} states"
        )


def lyapunov_step(sys: LinearSystem, state: CovarianceState) -> CovarianceState:
    """One step of ``Sigma(t+1) = A Sigma(t) A^T + Q``."""
    _check_state(sys, state)
    A = sys.A
    S = A @ state.Sigma @ A.T + sys.noise_cov
    return CovarianceState(state.t + 1, symmetrize(S))


def propagate(sys: LinearSystem, state: CovarianceState, t: int) -> CovarianceState:
    """Advance `state` to time step `t` with repeated :func:`lyapunov_step`."""
    if t < state.t:
        raise ValueError(f"cannot propagate backwards from t={state.t} to t={t}")
    _check_state(sys, state)
    while state.t < t:
        state = lyapunov_step(sys, state)
    return state


def steady_state_covariance(
    sys: LinearSystem, tol: float = 1e-10, max_iter: int = 100
) -> CovarianceState:
    """Fixed point of the Lyapunov recursion.

    Uses the doubling iteration ``S <- S + M S M^T``, ``M <- M^2`` started at
    ``S = Q, M = A``; after ``k`` iterations ``S`` sums ``2**k`` terms of the
    series ``sum_j A^j Q (A^T)^j``.

    Raises
    ------
    ConvergenceError
        If the residual ``||A S A^T + Q - S||_inf`` is not below `tol` within
        `max_iter` doublings.  This is what happens for unstable `A`.
    """
    A = sys.A
    Q = sys.noise_cov
    rho = sys.spectral_radius()
    if rho >= 1.0:
        raise ConvergenceError(
            f"no steady state: spectral radius of A is {rho:.6g} >= 1; "
            "use finite-time propagation instead"
        )
    S = Q.copy()
    M = A.copy()
    for _ in range(max_iter):
        resid = A @ S @ A.T + Q - S
        if np.max(np.abs(resid), initial=0.0) <= tol:
            return CovarianceState(0, symmetrize(S))
        S = symmetrize(S + M @ S @ M.T)
        M = M @ M
        if not np.all(np.isfinite(S)):
            break
    raise ConvergenceError(f"steady-state covariance did not converge in {max_iter} iterations")


def _pinv_psd(S: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(symmetrize(S))
    cut = PINV_RTOL * max(float(w[-1]) if w.size else 0.0, 0.0)
    inv = np.where(w > cut, 1.0 / np.where(w > cut, w, 1.0), 0.0)
    return (V * inv) @ V.T


def schur_complement(
    Sigma: np.ndarray,
    keep: SelectorLike,
    condition_on: SelectorLike,
    pinv: bool = False,
) -> np.ndarray:
    """Covariance of the `keep` coordinates conditioned on `condition_on`.

    Returns ``S_kk - S_kc S_cc^{-1} S_kc^T``.  A singular conditioning block
    raises :class:`DegenerateCovarianceError` unless ``pinv=True``, in which
    case an eigenvalue-thresholded pseudoinverse is used.
    """
    Sigma = np.asarray(Sigma, dtype=float)
    n = Sigma.shape[0]
    keep = list(as_selector(keep).check(n))
    cond = list(as_selector(condition_on).check(n))
    if set(keep) & set(cond):
        raise ValueError("keep and condition_on must be disjoint")
    S_kk = Sigma[np.ix_(keep, keep)]
    if not cond:
        return symmetrize(S_kk)
    S_kc = Sigma[np.ix_(keep, cond)]
    S_cc = Sigma[np.ix_(cond, cond)]
    try:
        factor = linalg.cho_factor(S_cc, lower=True)
        if np.min(np.abs(np.diag(factor[0]))) ** 2 <= PINV_RTOL * np.max(np.diag(S_cc)):
            raise linalg.LinAlgError("conditioning block is numerically singular")
        solved = linalg.cho_solve(factor, S_kc.T)
    except linalg.LinAlgError as exc:
        if not pinv:
            raise DegenerateCovarianceError(
                "conditioning block is singular; enable the pseudoinverse fallback to proceed"
            ) from exc
        solved = _pinv_psd(S_cc) @ S_kc.T
    return symmetrize(S_kk - S_kc @ solved)


def logdet(S: np.ndarray, allow_degenerate: bool = False, atol: float = 0.0) -> float:
    """Log-determinant of a positive definite matrix from its Cholesky pivots.

    With ``allow_degenerate=True`` a singular (PSD) matrix does not raise;
    its eigenvalues are floored at ``LOG_FLOOR`` so the result is a large
    negative but finite number.  `atol` treats pivots with squared value
    at or below it as zero.
    """
    S = np.asarray(S, dtype=float)
    if S.size == 0:
        return 0.0
    try:
        L = linalg.cholesky(S, lower=True)
        piv = np.diag(L) ** 2
        if np.min(piv) <= atol:
            raise linalg.LinAlgError("matrix is numerically singular")
        return float(np.sum(np.log(piv)))
    except linalg.LinAlgError as exc:
        if not allow_degenerate:
            raise DegenerateCovarianceError("matrix is not positive definite") from exc
    w = np.linalg.eigvalsh(symmetrize(S))
    w = np.where(w > atol, w, 0.0)
    return float(np.sum(np.log(np.maximum(w, LOG_FLOOR))))


def gaussian_entropy(Sigma: np.ndarray, allow_degenerate: bool = False) -> float:
    """Differential entropy ``0.5 log((2 pi e)^d |Sigma|)`` in nats."""
    Sigma = np.asarray(Sigma, dtype=float)
    d = Sigma.shape[0]
    return 0.5 * (d * LOG_2PIE + logdet(Sigma, allow_degenerate=allow_degenerate))


def semidefinite_pivots(K: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Squared Cholesky pivots of a PSD matrix, with zero pivots allowed.

    Pivot ``j`` is the conditional variance of coordinate ``j`` given
    coordinates ``0..j-1``.  A pivot at or below ``rtol * max(diag(K))`` marks
    a coordinate that is a deterministic function of the earlier ones; it is
    reported as 0 and eliminated without dividing by it.
    """
    K = np.array(K, dtype=float)
    n = K.shape[0]
    scale = max(float(np.max(np.diag(K), initial=0.0)), np.finfo(float).tiny)
    piv = np.zeros(n)
    for j in range(n):
        p = K[j, j]
        if p <= rtol * scale:
            continue
        piv[j] = p
        col = K[j + 1:, j] / p
        K[j + 1:, j + 1:] -= np.outer(col, K[j, j + 1:])
    return piv


def factor_pivots(F: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Squared Cholesky pivots of ``K = F F^T`` without forming `K`.

    Rows of `F` are variables expressed in independent unit-variance
    sources.  Pivot ``j`` is the squared distance of row ``j`` from the span
    of rows ``0..j-1``.  Rows are orthogonalized twice against the basis built
    so far (classical Gram-Schmidt with reorthogonalization); a row whose
    residual is below ``rtol`` times its norm lies in the span, gets pivot 0
    and is not added to the basis.  Eliminating such rows from ``K`` instead
    would divide by rounding noise.
    """
    F = np.asarray(F, dtype=float)
    m, k = F.shape
    basis = np.zeros((min(m, k), k))
    r = 0
    piv = np.zeros(m)
    for j in range(m):
        v = F[j].copy()
        norm0 = np.linalg.norm(v)
        for _ in range(2):
            v -= basis[:r].T @ (basis[:r] @ v)
        nv = np.linalg.norm(v)
        if nv <= rtol * norm0 or nv == 0.0:
            continue
        piv[j] = nv * nv
        basis[r] = v / nv
        r += 1
    return piv


def chain_rule_logdets(K: np.ndarray, block_size: int, allow_degenerate: bool = False) -> np.ndarray:
    """Conditional log-determinants of consecutive blocks of `K`.

    Entry ``k`` is ``log|Cov(v_k | v_0, ..., v_{k-1})|`` where ``v_k`` are
    consecutive blocks of `block_size` coordinates.  All of them come out of
    a single Cholesky factorization, since the squared pivots of block ``k``
    multiply to that conditional determinant.  With `allow_degenerate`, a
    singular `K` falls back to :func:`semidefinite_pivots` and blocks
    containing a deterministic coordinate get ``-inf``.
    """
    K = np.asarray(K, dtype=float)
    if K.shape[0] % block_size:
        raise DimensionError("matrix size is not a multiple of block_size")
    try:
        L = linalg.cholesky(K, lower=True)
        logpiv = 2.0 * np.log(np.diag(L))
    except linalg.LinAlgError as exc:
        if not allow_degenerate:
            raise DegenerateCovarianceError("joint covariance is not positive definite") from exc
        piv = semidefinite_pivots(K)
        with np.errstate(divide="ignore"):
            logpiv = np.log(piv)
    return logpiv.reshape(-1, block_size).sum(axis=1)


def joint_trajectory_covariance(
    sys: LinearSystem,
    Sigma0: CovarianceState,
    blocks: Sequence[SelectorLike],
    n: int,
) -> np.ndarray:
    """Joint covariance of several coordinate blocks over steps ``0..n``.

    Time zero is ``Sigma0.t``.  The result is ordered block-major and oldest
    first within each block: ``(B1(0..n), B2(0..n), ...)``.  For ``a >= b``,
    ``Cov(z(a), z(b)) = A^(a-b) Sigma(b)``.
    """
    _check_state(sys, Sigma0)
    if n < 0:
        raise ValueError("n must be nonnegative")
    N = sys.n_states
    sels = [as_selector(b).check(N) for b in blocks]
    idx = [i for s in sels for i in s]
    m = len(idx)
    T = n + 1
    A = sys.A
    Q = sys.noise_cov

    # rows `idx` of A^k for k = 0..n
    powers = np.empty((T, m, N))
    P = np.eye(N)[idx, :]
    for k in range(T):
        powers[k] = P
        P = P @ A

    G = np.empty((T, m, T, m))
    S = Sigma0.Sigma
    for b in range(T):
        cols = S[:, idx]
        lagged = powers[: T - b] @ cols  # (T-b, m, m): Cov(z_idx(b+k), z_idx(b))
        G[b:, :, b, :] = lagged
        G[b, :, b:, :] = lagged.transpose(2, 0, 1)
        S = symmetrize(A @ S @ A.T + Q)
    G = G.reshape(T * m, T * m)

    # time-major -> block-major, keeping time order inside each block
    order = []
    start = 0
    for s in sels:
        pos = range(start, start + len(s))
        order.extend(t * m + p for t in range(T) for p in pos)
        start += len(s)
    return symmetrize(G[np.ix_(order, order)])


def trajectory_covariance(
    sys: LinearSystem, Sigma0: CovarianceState, block: SelectorLike, n: int
) -> TrajectoryCovariance:
    if n < 1:
        raise ValueError("horizon n must be positive")
    sel = as_selector(block).check(sys.n_states)
    G = joint_trajectory_covariance(sys, Sigma0, [sel], n)
    return TrajectoryCovariance(Sigma0.t, n, len(sel), G)


def kept_indices(n: int, frozen: SelectorLike) -> tuple[int, ...]:
    return complement(n, frozen).indices


def reindex(selector: SelectorLike, kept: Sequence[int]) -> SubspaceSelector:
    """Positions of `selector`'s indices inside the surviving index list `kept`."""
    pos = {k: i for i, k in enumerate(kept)}
    try:
        return SubspaceSelector(tuple(pos[i] for i in as_selector(selector)))
    except KeyError as exc:
        raise ValueError(f"index {exc.args[0]} was frozen") from None


def frozen_system(sys: LinearSystem, frozen: SelectorLike) -> LinearSystem:
    """System with the `frozen` coordinates deleted.

    Rows and columns of ``A``, rows of ``B``, columns of ``C`` and entries of
    ``noise_var`` belonging to `frozen` are removed; a frozen state
    contributes nothing to the remaining dynamics.
    """
    N = sys.n_states
    frozen = as_selector(frozen).check(N)
    if len(frozen) == 0:
        raise ValueError("nothing to freeze: frozen selector is empty")
    kept = list(kept_indices(N, frozen))
    if not kept:
        raise ValueError("cannot freeze every state")
    return LinearSystem(
        A=sys.A[np.ix_(kept, kept)],
        B=None if sys.B is None else sys.B[kept, :],
        C=None if sys.C is None else sys.C[:, kept],
        sigma=sys.sigma,
        Sigma_omega=sys.Sigma_omega,
        Sigma_u=sys.Sigma_u,
        noise_var=None if sys.noise_var is None else sys.noise_var[kept],
    )
