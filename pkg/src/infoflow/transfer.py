"""Freezing-based information transfer between state subspaces.

The transfer from a source block to a target block is the conditional
entropy of the target's next value given its own past, minus the same
conditional entropy in the system where the source has been frozen
(deleted from the dynamics).  One-step values have closed forms built from
Schur complements; n-step values come from joint trajectory covariances;
the average transfer is a difference of two entropy rates.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from .errors import DegenerateCovarianceError, UnstableSystemError
from .gauss import (
    PINV_RTOL,
    CovarianceState,
    LinearSystem,
    SelectorLike,
    SubspaceSelector,
    as_selector,
    chain_rule_logdets,
    complement,
    frozen_system,
    gaussian_entropy,
    kept_indices,
    logdet,
    propagate,
    reindex,
    schur_complement,
    trajectory_covariance,
)
from .parallel import map_ordered

UNSTABLE_TOL = 1e-9


class SeriesKind(str, Enum):
    ONE_STEP = "one_step"
    N_STEP = "n_step"
    CUMULATIVE = "cumulative_sum"
    AVERAGE = "average"


OK = "ok"
DEGENERATE = "degenerate"
NONCONVERGED = "nonconverged"


@dataclass(frozen=True)
class TransferQuery:
    """Source/target blocks, start step `base_t` and horizon `horizon`."""

    source: SubspaceSelector
    target: SubspaceSelector
    base_t: int = 0
    horizon: int = 1

    def __post_init__(self):
        src = as_selector(self.source)
        tgt = as_selector(self.target)
        if not len(src) or not len(tgt):
            raise ValueError("source and target must be nonempty")
        if not src.disjoint(tgt):
            raise ValueError("source and target must be disjoint")
        if self.base_t < 0:
            raise ValueError("base_t must be nonnegative")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "target", tgt)


@dataclass(frozen=True, eq=False)
class TransferSeries:
    """Transfer values (nats) indexed by step.

    `flags` holds one of ``"ok"``, ``"degenerate"``, ``"nonconverged"`` per
    value.  `source_name` / `target_name` label the signals; they default to
    the query's indices.
    """

    steps: tuple[int, ...]
    values: np.ndarray
    kind: SeriesKind
    query: TransferQuery | None = None
    flags: tuple[str, ...] = field(default=())
    source_name: str = ""
    target_name: str = ""

    def __post_init__(self):
        steps = tuple(int(s) for s in self.steps)
        values = np.array(self.values, dtype=float).reshape(-1)
        if len(steps) != len(values):
            raise ValueError("steps and values differ in length")
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("steps must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("transfer values must be finite")
        flags = tuple(self.flags) or (OK,) * len(steps)
        if len(flags) != len(steps):
            raise ValueError("flags and values differ in length")
        values.flags.writeable = False
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kind", SeriesKind(self.kind))
        object.__setattr__(self, "flags", flags)
        if self.query is not None:
            if not self.source_name:
                object.__setattr__(self, "source_name", _name(self.query.source))
            if not self.target_name:
                object.__setattr__(self, "target_name", _name(self.query.target))

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def degenerate(self) -> bool:
        return DEGENERATE in self.flags

    def items(self):
        return list(zip(self.steps, self.values.tolist()))


class AverageTransfer(NamedTuple):
    value: float
    horizon: int
    converged: bool


def _name(sel: SubspaceSelector) -> str:
    return ",".join(str(i) for i in sel)


def _check_pair(sys: LinearSystem, Sigma: CovarianceState, source, target):
    N = sys.n_states
    if Sigma.dim != N:
        raise ValueError(f"covariance is {Sigma.dim}x{Sigma.dim} but system has {N} states")
    src = as_selector(source).check(N)
    tgt = as_selector(target).check(N)
    if not len(src) or not len(tgt):
        raise ValueError("source and target must be nonempty")
    if not src.disjoint(tgt):
        raise ValueError("source and target must be disjoint")
    return src, tgt


def _sub(M: np.ndarray, rows, cols) -> np.ndarray:
    return M[np.ix_(list(rows), list(cols))]


def one_step_transfer_xy(
    sys: LinearSystem, Sigma: CovarianceState, x: SelectorLike, y: SelectorLike
) -> float:
    """One-step transfer from `x` to `y` when ``(x, y)`` split the whole state.

    ``0.5 * [log|A_yx S A_yx^T + Q_y| - log|Q_y|]`` with ``S`` the covariance
    of `x` conditioned on `y`.  Always nonnegative.
    """
    x, y = _check_pair(sys, Sigma, x, y)
    if len(x) + len(y) != sys.n_states:
        raise ValueError("x and y must partition the state; use one_step_transfer otherwise")
    Q = _sub(sys.noise_cov, y, y)
    S = schur_complement(Sigma.Sigma, x, y)
    A_yx = _sub(sys.A, y, x)
    return 0.5 * (logdet(A_yx @ S @ A_yx.T + Q) - logdet(Q))


def one_step_transfer(
    sys: LinearSystem, Sigma: CovarianceState, source: SelectorLike, target: SelectorLike
) -> float:
    """One-step transfer from `source` to `target` with the remaining states as bystanders.

    With ``x = (source, rest)`` stacked and ``rest`` the complement of
    ``source + target``::

        0.5 * log |A_yx  S_x|y    A_yx^T  + Q_y|
                  |A_yr  S_r|y    A_yr^T  + Q_y|

    where ``S_.|y`` are covariances conditioned on the target.  The
    numerator is the full system; the denominator is the system with the
    source deleted.  Unlike the two-block case the value can be negative when
    source and bystanders are correlated so that their contributions cancel.
    """
    src, tgt = _check_pair(sys, Sigma, source, target)
    rest = complement(sys.n_states, src, tgt)
    x = list(src) + list(rest)
    Q = _sub(sys.noise_cov, tgt, tgt)
    S_x = schur_complement(Sigma.Sigma, x, tgt)
    A_yx = _sub(sys.A, tgt, x)
    num = logdet(A_yx @ S_x @ A_yx.T + Q)
    if len(rest):
        S_r = schur_complement(Sigma.Sigma, rest, tgt)
        A_yr = _sub(sys.A, tgt, rest)
        den = logdet(A_yr @ S_r @ A_yr.T + Q)
    else:
        den = logdet(Q)
    return 0.5 * (num - den)


def _frozen_pair(sys: LinearSystem, state: CovarianceState, q: TransferQuery):
    """Source-frozen system, its starting covariance and the re-indexed target."""
    kept = kept_indices(sys.n_states, q.source)
    fsys = frozen_system(sys, q.source)
    return fsys, state.marginal(kept), reindex(q.target, kept)


def _conditional_logdet(G, d, k, allow_degenerate, atol):
    """``log|Cov(y_k | y_0..y_{k-1})|`` plus two flags.

    The flags mark a singular conditioning block (handled by the
    pseudoinverse) and a singular conditional covariance.
    """
    m = (k + 1) * d
    prefix = G[:m, :m]
    keep, past = range(k * d, m), range(k * d)
    try:
        S = schur_complement(prefix, keep, past)
        pinv_used = False
    except DegenerateCovarianceError:
        if not allow_degenerate:
            raise
        S = schur_complement(prefix, keep, past, pinv=True)
        pinv_used = True
    try:
        return logdet(S, atol=atol), pinv_used, False
    except DegenerateCovarianceError:
        if not allow_degenerate:
            raise
        return logdet(S, allow_degenerate=True, atol=atol), pinv_used, True


def _trajectory_pair(sys, Sigma0, q, n):
    _check_pair(sys, Sigma0, q.source, q.target)
    state = propagate(sys, Sigma0, max(q.base_t, Sigma0.t))
    fsys, fstate, ftarget = _frozen_pair(sys, state, q)
    G = trajectory_covariance(sys, state, q.target, n).Gamma
    F = trajectory_covariance(fsys, fstate, ftarget, n).Gamma
    return G, F


def _atol(G: np.ndarray) -> float:
    return PINV_RTOL * max(float(np.max(np.diag(G), initial=0.0)), 1.0)


def n_step_transfer(
    sys: LinearSystem,
    Sigma0: CovarianceState,
    q: TransferQuery,
    allow_degenerate: bool = False,
) -> TransferSeries:
    """Transfers ``(T_source->target)_t^{t+k}`` for ``k = 1..q.horizon``.

    Step ``k`` is ``H(y(t+k) | y(t..t+k-1))`` in the full system minus the
    same conditional entropy in the source-frozen system.  The frozen system
    starts from the full system's marginal covariance at ``t = q.base_t``
    (`Sigma0` is propagated forward if it is older).  Each conditional
    covariance is an explicit Schur complement of the trajectory covariance.

    A singular covariance (a past that is partly deterministic, e.g. a
    singular `Sigma0`, or a target that is deterministic given its past)
    raises :class:`DegenerateCovarianceError` unless `allow_degenerate` is
    set.  Then the step is flagged ``"degenerate"``: a singular past is
    handled by a pseudoinverse; a singular conditional covariance gives 0
    when both sides are singular and otherwise uses log-arguments floored at
    1e-300.
    """
    n = q.horizon
    G, F = _trajectory_pair(sys, Sigma0, q, n)
    d = len(q.target)
    atol_g, atol_f = _atol(G), _atol(F)

    def step(k):
        full, pinv_full, sing_full = _conditional_logdet(G, d, k, allow_degenerate, atol_g)
        froz, pinv_froz, sing_froz = _conditional_logdet(F, d, k, allow_degenerate, atol_f)
        if sing_full and sing_froz:
            return 0.0, DEGENERATE
        flagged = pinv_full or pinv_froz or sing_full or sing_froz
        return 0.5 * (full - froz), DEGENERATE if flagged else OK

    results = map_ordered(step, range(1, n + 1))
    return TransferSeries(
        steps=tuple(range(1, n + 1)),
        values=[v for v, _ in results],
        kind=SeriesKind.N_STEP,
        query=q,
        flags=tuple(f for _, f in results),
    )


def cumulative_transfer(series: TransferSeries) -> TransferSeries:
    """Running sums of an n-step series.

    The k-th partial sum equals the joint-entropy difference of the
    ``(k+1)``-step target trajectories (full minus frozen); see
    :func:`joint_entropy_difference` for the independent computation.
    """
    if series.kind is not SeriesKind.N_STEP:
        raise ValueError(f"expected an n_step series, got {series.kind.value}")
    total = 0.0
    sums = []
    for v in series.values:
        total += float(v)
        sums.append(total)
    return TransferSeries(
        steps=series.steps,
        values=sums,
        kind=SeriesKind.CUMULATIVE,
        query=series.query,
        flags=series.flags,
        source_name=series.source_name,
        target_name=series.target_name,
    )


def joint_entropy_difference(
    sys: LinearSystem, Sigma0: CovarianceState, q: TransferQuery
) -> np.ndarray:
    """``H(y(t..t+k)) - H_frozen(y(t..t+k))`` for ``k = 1..q.horizon``.

    Each entry is computed from the full joint entropy of the trajectory
    prefix, independently of the conditional entropies used by
    :func:`n_step_transfer`.
    """
    G, F = _trajectory_pair(sys, Sigma0, q, q.horizon)
    d = len(q.target)
    out = np.empty(q.horizon)
    for k in range(1, q.horizon + 1):
        m = (k + 1) * d
        out[k - 1] = gaussian_entropy(G[:m, :m]) - gaussian_entropy(F[:m, :m])
    return out


def _require_bounded(sys: LinearSystem) -> None:
    rho = sys.spectral_radius()
    if rho > 1.0 + UNSTABLE_TOL:
        raise UnstableSystemError(
            f"entropy rates diverge: spectral radius of A is {rho:.6g} > 1"
        )


def average_transfer_series(
    sys: LinearSystem, Sigma0: CovarianceState, q: TransferQuery, T: int
) -> TransferSeries:
    """Running averages ``(1/k) [H(y^k) - H_frozen(y^k)]`` for ``k = 1..T``.

    ``y^k`` is the target over steps ``base_t..base_t+k``.  Both entropies
    share the initial marginal, so this equals the mean of the first ``k``
    n-step transfers.  Conditional entropies are read off one Cholesky
    factorization per trajectory.
    """
    if T < 1:
        raise ValueError("T must be positive")
    _require_bounded(sys)
    G, F = _trajectory_pair(sys, Sigma0, q, T)
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(F))):
        raise UnstableSystemError("trajectory covariance overflowed")
    d = len(q.target)
    per_step = 0.5 * (chain_rule_logdets(G, d) - chain_rule_logdets(F, d))[1:]
    ks = np.arange(1, T + 1)
    return TransferSeries(
        steps=tuple(ks),
        values=np.cumsum(per_step) / ks,
        kind=SeriesKind.AVERAGE,
        query=q,
    )


def settle_index(values: np.ndarray, tol: float) -> int | None:
    """Smallest index ``i >= 1`` such that every successive difference from ``i`` on is below `tol`.

    Requiring the whole tail to be flat (rather than the first small
    difference) keeps an initial run of exact zeros, as in a delay chain,
    from being taken for convergence.
    """
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return None
    small = np.abs(np.diff(values)) < tol
    if not small[-1]:
        return None
    bad = np.flatnonzero(~small)
    return int(bad[-1]) + 2 if bad.size else 1


def average_transfer(
    sys: LinearSystem,
    Sigma0: CovarianceState,
    q: TransferQuery,
    T_max: int = 500,
    tol: float = 1e-6,
) -> AverageTransfer:
    """Average transfer as a difference of entropy rates.

    Evaluates running averages up to `T_max` and returns the value at the
    first horizon after which successive averages stay within `tol`.  If
    they never settle the value at `T_max` is returned with
    ``converged=False``.
    """
    series = average_transfer_series(sys, Sigma0, q, T_max)
    idx = settle_index(series.values, tol)
    if idx is None:
        return AverageTransfer(float(series.values[-1]), T_max, False)
    return AverageTransfer(float(series.values[idx]), series.steps[idx], True)
