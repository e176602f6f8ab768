"""Graph view of a linear system and structural controllability/observability.

Edge ``i -> j`` exists iff ``A[j, i]`` is nonzero.  Inputs attach to the
states with nonzero rows in ``B``; outputs read the states with nonzero
columns in ``C``.  Verdicts come from reachability in this graph.  Transfer
values are reported next to them as evidence and never replace them: a
nonzero transfer implies a path, not the other way round.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .gauss import CovarianceState, LinearSystem
from .parallel import map_ordered
from .transfer import TransferQuery, n_step_transfer

ZERO_TRANSFER_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SystemGraph:
    n_nodes: int
    graph: nx.DiGraph = field(repr=False)
    input_nodes: frozenset[int] = frozenset()
    output_nodes: frozenset[int] = frozenset()

    @property
    def edges(self) -> set[tuple[int, int]]:
        return set(self.graph.edges())


@dataclass(frozen=True)
class StructuralVerdict:
    """Reachability verdict; `witness` lists the nodes that break it."""

    holds: bool
    witness: frozenset[int] = frozenset()

    def __bool__(self) -> bool:
        return self.holds


@dataclass
class ConsistencyReport:
    horizon: int
    pairs_checked: int = 0
    certified_zero: list[tuple[int, int]] = field(default_factory=list)
    violations: list[tuple[int, int, int, float]] = field(default_factory=list)
    max_no_path_transfer: float = 0.0

    @property
    def consistent(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "pairs_checked": self.pairs_checked,
            "certified_zero": [list(p) for p in self.certified_zero],
            "violations": [
                {"source": i, "target": j, "step": k, "value_nats": v}
                for i, j, k, v in self.violations
            ],
            "max_no_path_transfer": self.max_no_path_transfer,
            "consistent": self.consistent,
        }


def build_graph(sys: LinearSystem, zero_tol: float = 0.0) -> SystemGraph:
    """Directed graph of `sys`; entries with ``|a| <= zero_tol`` count as absent."""
    if zero_tol < 0:
        raise ValueError("zero_tol must be nonnegative")
    N = sys.n_states
    g = nx.DiGraph()
    g.add_nodes_from(range(N))
    rows, cols = np.nonzero(np.abs(sys.A) > zero_tol)
    g.add_edges_from((int(i), int(j)) for j, i in zip(rows, cols))
    inputs = frozenset()
    outputs = frozenset()
    if sys.B is not None:
        inputs = frozenset(int(i) for i in np.flatnonzero(np.any(np.abs(sys.B) > zero_tol, axis=1)))
    if sys.C is not None:
        outputs = frozenset(int(i) for i in np.flatnonzero(np.any(np.abs(sys.C) > zero_tol, axis=0)))
    return SystemGraph(N, g, inputs, outputs)


def reachable(graph: SystemGraph, start: int) -> set[int]:
    """Nodes reachable from `start`, including `start` itself."""
    if not 0 <= start < graph.n_nodes:
        raise ValueError(f"node {start} out of range")
    return nx.descendants(graph.graph, start) | {start}


def is_structurally_controllable(graph: SystemGraph) -> StructuralVerdict:
    """Every state reachable from some input node."""
    if not graph.input_nodes:
        raise ValueError("no input attached to the graph")
    seen: set[int] = set()
    for k in graph.input_nodes:
        seen |= reachable(graph, k)
    missing = frozenset(range(graph.n_nodes)) - seen
    return StructuralVerdict(not missing, missing)


def is_structurally_observable(graph: SystemGraph) -> StructuralVerdict:
    """Every state reaches some output node."""
    if not graph.output_nodes:
        raise ValueError("no output attached to the graph")
    rev = graph.graph.reverse(copy=False)
    seen: set[int] = set()
    for k in graph.output_nodes:
        seen |= nx.descendants(rev, k) | {k}
    missing = frozenset(range(graph.n_nodes)) - seen
    return StructuralVerdict(not missing, missing)


def check_transfer_path_consistency(
    sys: LinearSystem,
    Sigma0: CovarianceState,
    horizon: int,
    zero_tol: float = 0.0,
) -> ConsistencyReport:
    """Scan all ordered pairs: no path ``i -> j`` must mean zero k-step transfer for ``k <= horizon``.

    Pairs with a path are skipped.  Any no-path pair with a transfer above
    1e-10 is recorded as a violation, which would indicate an implementation
    error.
    """
    graph = build_graph(sys, zero_tol)
    N = sys.n_states
    pairs = [
        (i, j)
        for i in range(N)
        for j in range(N)
        if i != j and j not in reachable(graph, i)
    ]

    def scan(pair):
        i, j = pair
        series = n_step_transfer(sys, Sigma0, TransferQuery((i,), (j,), Sigma0.t, horizon))
        return series.values

    report = ConsistencyReport(horizon=horizon)
    for (i, j), values in zip(pairs, map_ordered(scan, pairs)):
        report.pairs_checked += 1
        worst = float(np.max(np.abs(values)))
        report.max_no_path_transfer = max(report.max_no_path_transfer, worst)
        bad = np.flatnonzero(np.abs(values) > ZERO_TRANSFER_TOL)
        if bad.size:
            report.violations.extend((i, j, int(k) + 1, float(values[k])) for k in bad)
        else:
            report.certified_zero.append((i, j))
    return report


def _with_extra_source(sys: LinearSystem, column: np.ndarray) -> LinearSystem:
    """Append a white-noise node that drives the states through `column`."""
    N = sys.n_states
    A = np.zeros((N + 1, N + 1))
    A[:N, :N] = sys.A
    A[:N, N] = column
    noise = np.append(np.diag(sys.noise_cov), sys.sigma**2)
    return LinearSystem(A, noise_var=noise)


def input_transfer_evidence(
    sys: LinearSystem, Sigma0: CovarianceState, horizon: int
) -> dict[int, float]:
    """Largest k-step transfer (``k <= horizon``) from the input to each state.

    The input is modelled as an extra white-noise node feeding the states
    through the first column of ``B``.
    """
    if sys.B is None:
        raise ValueError("system has no input matrix B")
    ext = _with_extra_source(sys, sys.B[:, 0])
    N = sys.n_states
    S = np.zeros((N + 1, N + 1))
    S[:N, :N] = Sigma0.Sigma
    S[N, N] = sys.sigma**2
    state = CovarianceState(Sigma0.t, S)
    out = {}
    for j in range(N):
        series = n_step_transfer(ext, state, TransferQuery((N,), (j,), Sigma0.t, horizon))
        out[j] = float(np.max(series.values))
    return out


def output_transfer_evidence(
    sys: LinearSystem, Sigma0: CovarianceState, horizon: int
) -> dict[int, float]:
    """Largest k-step transfer from each state to an output node ``theta' = C_0 z + noise``.

    The output is appended as a state updated from the first row of ``C``,
    so a state's influence shows up one step after it reaches a measured node.
    """
    if sys.C is None:
        raise ValueError("system has no output matrix C")
    N = sys.n_states
    A = np.zeros((N + 1, N + 1))
    A[:N, :N] = sys.A
    A[N, :N] = sys.C[0]
    noise = np.append(np.diag(sys.noise_cov), sys.sigma**2)
    ext = LinearSystem(A, noise_var=noise)
    S = np.zeros((N + 1, N + 1))
    S[:N, :N] = Sigma0.Sigma
    S[N, N] = sys.sigma**2
    state = CovarianceState(Sigma0.t, S)
    out = {}
    for i in range(N):
        series = n_step_transfer(ext, state, TransferQuery((i,), (N,), Sigma0.t, horizon))
        out[i] = float(np.max(series.values))
    return out
