"""Directed information for jointly Gaussian processes.

``I(X^n -> Y^n) = sum_i H(Y_i | Y^{i-1}) - H(Y_i | Y^{i-1}, X^i)``, with the
current sample ``X_i`` included in the causal conditioning.  Samples are
indexed ``0..n-1`` starting at the covariance's time step.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateCovarianceError, DimensionError
from .gauss import (
    CovarianceState,
    LinearSystem,
    SelectorLike,
    SubspaceSelector,
    as_selector,
    chain_rule_logdets,
    factor_pivots,
    joint_trajectory_covariance,
    logdet,
    schur_complement,
)


@dataclass(frozen=True, eq=False)
class DirectedInfoSeries:
    """Partial sums ``I(X^k -> Y^k)`` for ``k = steps`` (nats).

    `increments` are the per-sample conditional mutual informations.
    """

    source: SubspaceSelector | str
    target: SubspaceSelector | str
    steps: tuple[int, ...]
    values: np.ndarray
    increments: np.ndarray
    average: float | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        inc = np.array(self.increments, dtype=float).reshape(-1)
        if len(values) != len(self.steps) or len(inc) != len(self.steps):
            raise ValueError("steps, values and increments differ in length")
        values.flags.writeable = False
        inc.flags.writeable = False
        object.__setattr__(self, "steps", tuple(int(s) for s in self.steps))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "increments", inc)


class AverageDirectedInfo(NamedTuple):
    value: float
    n: int
    converged: bool


def _interleave(n: int, dx: int, dy: int) -> list[int]:
    """Permutation from ``(X(0..n-1), Y(0..n-1))`` to ``X0, Y0, X1, Y1, ...``."""
    order = []
    for i in range(n):
        order.extend(range(i * dx, (i + 1) * dx))
        order.extend(range(n * dx + i * dy, n * dx + (i + 1) * dy))
    return order


def _finish(marginal: np.ndarray, causal: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(causal)):
        raise DegenerateCovarianceError("target is deterministic given its causal past")
    return 0.5 * (marginal - causal)


def directed_information_increments(K: np.ndarray, dx: int, dy: int, n: int) -> np.ndarray:
    """Conditional mutual informations ``I(Y_i ; X^i | Y^{i-1})`` for ``i = 0..n-1``.

    `K` is the joint covariance ordered ``(X(0..n-1), Y(0..n-1))``, oldest
    first within each block.  ``H(Y_i | Y^{i-1})`` comes from the Cholesky
    pivots of the Y block; ``H(Y_i | Y^{i-1}, X^i)`` from the pivots of the
    interleaved ordering ``X0, Y0, X1, Y1, ...``, where everything before
    ``Y_i`` is exactly ``(X^i, Y^{i-1})``.
    """
    K = np.asarray(K, dtype=float)
    if K.shape != (n * (dx + dy),) * 2:
        raise DimensionError(f"joint covariance shape {K.shape} does not match n={n}")
    marginal = chain_rule_logdets(K[n * dx:, n * dx:], dy)

    # source samples may be deterministic given the past; their zero pivots
    # are legitimate and do not enter the sum
    order = _interleave(n, dx, dy)
    piv = chain_rule_logdets(K[np.ix_(order, order)], 1, allow_degenerate=True)
    causal = piv.reshape(n, dx + dy)[:, dx:].sum(axis=1)
    return _finish(marginal, causal)


def directed_information_increments_from_factor(
    F: np.ndarray, dx: int, dy: int, n: int
) -> np.ndarray:
    """As :func:`directed_information_increments` for ``K = F F^T``.

    Preferred when the source is an exact function of the joint past (a
    noise-free plant output in a feedback loop): eliminating such variables
    from the covariance amplifies rounding error, orthogonalizing the
    factor rows does not.
    """
    F = np.asarray(F, dtype=float)
    if F.shape[0] != n * (dx + dy):
        raise DimensionError(f"factor has {F.shape[0]} rows, expected {n * (dx + dy)}")
    with np.errstate(divide="ignore"):
        marginal = np.log(factor_pivots(F[n * dx:])).reshape(n, dy).sum(axis=1)
        order = _interleave(n, dx, dy)
        piv = np.log(factor_pivots(F[order]))
    causal = piv.reshape(n, dx + dy)[:, dx:].sum(axis=1)
    if not np.all(np.isfinite(marginal)):
        raise DegenerateCovarianceError("target is deterministic given its own past")
    return _finish(marginal, causal)


def directed_information_brute(K: np.ndarray, dx: int, dy: int, n: int) -> np.ndarray:
    """Same quantity as :func:`directed_information_increments`, one Schur complement per term.

    Slow; kept as an independent check of the factorization route.
    """
    K = np.asarray(K, dtype=float)
    out = np.empty(n)
    for i in range(n):
        yi = list(range(n * dx + i * dy, n * dx + (i + 1) * dy))
        ypast = list(range(n * dx, n * dx + i * dy))
        xupto = list(range(0, (i + 1) * dx))
        h_marg = logdet(schur_complement(K, yi, ypast))
        h_causal = logdet(schur_complement(K, yi, ypast + xupto))
        out[i] = 0.5 * (h_marg - h_causal)
    return out


def directed_information(
    sys: LinearSystem,
    Sigma0: CovarianceState,
    source: SelectorLike,
    target: SelectorLike,
    n: int,
) -> DirectedInfoSeries:
    """``I(X^k -> Y^k)`` for ``k = 1..n`` with ``X``/``Y`` the source/target states.

    The joint covariance of ``(X(0..n-1), Y(0..n-1))`` includes all
    cross-time and cross-block terms.  A singular joint covariance raises
    :class:`DegenerateCovarianceError`.
    """
    N = sys.n_states
    src = as_selector(source).check(N)
    tgt = as_selector(target).check(N)
    if not src.disjoint(tgt):
        raise ValueError("source and target must be disjoint")
    if n < 1:
        raise ValueError("n must be positive")
    K = joint_trajectory_covariance(sys, Sigma0, [src, tgt], n - 1)
    inc = directed_information_increments(K, len(src), len(tgt), n)
    return DirectedInfoSeries(
        source=src,
        target=tgt,
        steps=tuple(range(1, n + 1)),
        values=np.cumsum(inc),
        increments=inc,
    )


def average_directed_information(
    series: DirectedInfoSeries, tol: float = 1e-6
) -> AverageDirectedInfo:
    """``(1/n) I(X^n -> Y^n)`` at the largest `n`, with a successive-difference flag."""
    if not len(series.steps):
        raise ValueError("empty series")
    n = series.steps[-1]
    value = float(series.values[-1]) / n
    if len(series.steps) < 2:
        return AverageDirectedInfo(value, n, False)
    prev = float(series.values[-2]) / series.steps[-2]
    return AverageDirectedInfo(value, n, abs(value - prev) < tol)


def running_average(series: DirectedInfoSeries) -> np.ndarray:
    return series.values / np.asarray(series.steps, dtype=float)

