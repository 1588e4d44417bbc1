"""Network topologies and stochastic mixing matrices.

Agents communicate along the edges of a directed (strongly connected) or
undirected (connected) graph. An edge ``(i, j)`` means agent ``i`` may use
agent ``j``'s value, so the mixing matrix entry ``a[i, j]`` is positive
exactly when ``(i, j)`` is an edge or ``i == j``. Every constructed matrix
is row-stochastic; matrices that additionally verify the symmetric
positive-semidefinite gossip contract are classified ``doubly_stochastic``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import TopologyError

ROW_SUM_TOL = 1e-12
COLUMN_SUM_TOL = 1e-12
SYMMETRY_TOL = 1e-12
EIGENVALUE_TOL = 1e-10

ER_RETRY_BUDGET = 100


class TopologyKind(str, Enum):
    DIRECTED_RING = "directed_ring"
    DIRECTED_EXPONENTIAL = "directed_exponential"
    UNDIRECTED_RING = "undirected_ring"
    ERDOS_RENYI = "erdos_renyi"
    CUSTOM = "custom"


class WeightScheme(str, Enum):
    UNIFORM_OUT = "uniform_out"
    WEIGHTED_SELF = "weighted_self"
    LAZY_METROPOLIS = "lazy_metropolis"


class StochasticityKind(str, Enum):
    ROW = "row_stochastic"
    DOUBLY = "doubly_stochastic"


@dataclass(frozen=True)
class Topology:
    """A communication graph over ``n`` agents.

    ``edges`` holds ordered pairs ``(i, j)`` excluding self-loops; for
    undirected graphs both orientations are stored. ``self_loops`` records
    the loops explicitly (constructors add one at every node).
    """

    n: int
    edges: frozenset[tuple[int, int]]
    directed: bool
    kind: TopologyKind
    self_loops: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n < 1:
            raise TopologyError(f"agent count must be >= 1, got {self.n}")
        for i, j in self.edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise TopologyError(f"edge ({i}, {j}) out of range for n={self.n}")
            if i == j:
                raise TopologyError("self-loops belong in self_loops, not edges")
        if not self.directed:
            for i, j in self.edges:
                if (j, i) not in self.edges:
                    raise TopologyError(f"undirected graph missing reverse of ({i}, {j})")
        if not self._is_connected():
            name = "strongly connected" if self.directed else "connected"
            raise TopologyError(f"graph is not {name}")

    def out_neighbors(self, i: int) -> list[int]:
        """Neighbors agent ``i`` can pull from, excluding itself."""
        return sorted(j for (a, j) in self.edges if a == i)

    def _is_connected(self) -> bool:
        if self.n == 1:
            return True
        forward = self._reachable(self.edges)
        if self.directed:
            reversed_edges = {(j, i) for (i, j) in self.edges}
            return forward and self._reachable(reversed_edges)
        return forward

    def _reachable(self, edges) -> bool:
        adjacency: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in edges:
            adjacency[i].append(j)
        seen = {0}
        stack = [0]
        while stack:
            node = stack.pop()
            for nxt in adjacency[node]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return len(seen) == self.n

    def adjacency(self) -> np.ndarray:
        """0/1 matrix with ones on edges and recorded self-loops."""
        out = np.zeros((self.n, self.n))
        for i, j in self.edges:
            out[i, j] = 1.0
        for i in self.self_loops:
            out[i, i] = 1.0
        return out


@dataclass(frozen=True)
class MixingMatrix:
    """A row-stochastic matrix aligned with a topology's sparsity pattern."""

    a: np.ndarray
    kind: StochasticityKind
    topology: Topology

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        object.__setattr__(self, "a", a)
        n = self.topology.n
        if a.shape != (n, n):
            raise TopologyError(f"matrix shape {a.shape} does not match n={n}")
        if np.any(a < 0):
            raise TopologyError("negative mixing weight")
        row_err = np.max(np.abs(a.sum(axis=1) - 1.0))
        if row_err > ROW_SUM_TOL:
            raise TopologyError(f"row sums deviate from 1 by {row_err:.3e}")
        support = self.topology.adjacency() > 0
        np.fill_diagonal(support, True)
        if np.any((a > 0) & ~support):
            raise TopologyError("positive weight off the edge set")
        if np.any((a <= 0) & support):
            raise TopologyError("zero weight on an edge or diagonal")
        if self.kind is StochasticityKind.DOUBLY:
            _check_doubly(a)
        a.setflags(write=False)

    @property
    def n(self) -> int:
        return self.topology.n

    def is_column_stochastic(self, tol: float = COLUMN_SUM_TOL) -> bool:
        """True when columns also sum to 1 (mean preservation under gossip)."""
        return bool(np.max(np.abs(self.a.sum(axis=0) - 1.0)) <= tol)


def _check_doubly(a: np.ndarray) -> None:
    n = a.shape[0]
    if np.max(np.abs(a - a.T)) > SYMMETRY_TOL:
        raise TopologyError("doubly-stochastic matrix must be symmetric")
    col_err = np.max(np.abs(a.sum(axis=0) - 1.0))
    if col_err > COLUMN_SUM_TOL:
        raise TopologyError(f"column sums deviate from 1 by {col_err:.3e}")
    eigenvalues = np.linalg.eigvalsh(a)
    if eigenvalues[0] < -EIGENVALUE_TOL or eigenvalues[-1] > 1.0 + EIGENVALUE_TOL:
        raise TopologyError("eigenvalues outside [0, 1]")
    # the eigenvalue 1 must be simple with eigenvector 1 (connected gossip)
    if n > 1 and eigenvalues[-2] > 1.0 - 1e-12:
        raise TopologyError("eigenvalue 1 is not simple; gossip cannot mix")


def _qualifies_doubly(a: np.ndarray) -> bool:
    try:
        _check_doubly(a)
    except TopologyError:
        return False
    return True


def build_topology(
    kind: TopologyKind | str,
    n: int,
    er_prob: float | None = None,
    seed: int | None = None,
) -> Topology:
    """Construct one of the supported graph families.

    Self-loops are added at every node for all kinds. The Erdős–Rényi
    sampler draws each undirected pair independently with probability
    ``er_prob`` using the sub-seeded stream ``SeedSequence(seed, spawn_key=
    (attempt,))`` and resamples (next attempt) until the graph is connected,
    giving reproducible fixtures; the retry budget is 100 draws.
    """
    kind = TopologyKind(kind)
    if n < 1:
        raise TopologyError(f"agent count must be >= 1, got {n}")
    if (er_prob is not None) != (kind is TopologyKind.ERDOS_RENYI):
        raise TopologyError("er_prob must be given exactly for erdos_renyi")

    loops = frozenset(range(n))
    if kind is TopologyKind.DIRECTED_RING:
        edges = {(i, (i + 1) % n) for i in range(n) if n > 1}
        return Topology(n, frozenset(edges), True, kind, loops)
    if kind is TopologyKind.DIRECTED_EXPONENTIAL:
        if n & (n - 1) != 0:
            raise TopologyError(f"exponential graph needs n a power of 2, got {n}")
        edges = set()
        offset = 1
        while offset < n:
            edges.update((i, (i + offset) % n) for i in range(n))
            offset *= 2
        return Topology(n, frozenset(edges), True, kind, loops)
    if kind is TopologyKind.UNDIRECTED_RING:
        edges = set()
        for i in range(n):
            j = (i + 1) % n
            if i != j:
                edges.add((i, j))
                edges.add((j, i))
        return Topology(n, frozenset(edges), False, kind, loops)
    if kind is TopologyKind.ERDOS_RENYI:
        if not (0.0 < er_prob <= 1.0):
            raise TopologyError(f"er_prob must lie in (0, 1], got {er_prob}")
        for attempt in range(ER_RETRY_BUDGET):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(attempt,)))
            edges = set()
            for i in range(n):
                for j in range(i + 1, n):
                    if rng.random() < er_prob:
                        edges.add((i, j))
                        edges.add((j, i))
            try:
                return Topology(n, frozenset(edges), False, kind, loops)
            except TopologyError:
                continue
        raise TopologyError(
            f"no connected draw in {ER_RETRY_BUDGET} attempts (er_prob={er_prob})"
        )
    raise TopologyError(f"build_topology cannot construct kind {kind.value!r}")


def assign_weights(
    topology: Topology,
    scheme: WeightScheme | str,
    self_weight: float | None = None,
) -> MixingMatrix:
    """Assign edge weights under one of the supported schemes.

    uniform_out
        Each row splits weight 1 uniformly over the out-neighborhood
        including the self-loop.
    weighted_self
        Self-loop gets ``self_weight``; the remainder is split equally
        among the out-neighbors.
    lazy_metropolis
        Undirected only: off-diagonal ``1 / (2 max(deg_i, deg_j))`` on
        edges, diagonal takes the remainder. Always symmetric PSD.

    The result is classified ``doubly_stochastic`` only when the full
    symmetric-PSD gossip contract verifies numerically, never by topology
    kind alone.
    """
    scheme = WeightScheme(scheme)
    n = topology.n
    a = np.zeros((n, n))

    if scheme is WeightScheme.UNIFORM_OUT:
        if self_weight is not None:
            raise TopologyError("self_weight is only used by weighted_self")
        for i in range(n):
            out = topology.out_neighbors(i) + [i]
            for j in out:
                a[i, j] = 1.0 / len(out)
    elif scheme is WeightScheme.WEIGHTED_SELF:
        if self_weight is None or not (0.0 < self_weight < 1.0):
            raise TopologyError(f"weighted_self needs self_weight in (0, 1), got {self_weight}")
        for i in range(n):
            out = topology.out_neighbors(i)
            if not out:
                a[i, i] = 1.0
                continue
            a[i, i] = self_weight
            for j in out:
                a[i, j] = (1.0 - self_weight) / len(out)
    elif scheme is WeightScheme.LAZY_METROPOLIS:
        if self_weight is not None:
            raise TopologyError("self_weight is only used by weighted_self")
        if topology.directed:
            raise TopologyError("lazy_metropolis requires an undirected topology")
        degrees = [len(topology.out_neighbors(i)) for i in range(n)]
        for i in range(n):
            for j in topology.out_neighbors(i):
                a[i, j] = 1.0 / (2.0 * max(degrees[i], degrees[j]))
            a[i, i] = 1.0 - a[i].sum()
    else:  # pragma: no cover - enum is exhaustive
        raise TopologyError(f"unknown scheme {scheme!r}")

    kind = StochasticityKind.DOUBLY if _qualifies_doubly(a) else StochasticityKind.ROW
    return MixingMatrix(a=a, kind=kind, topology=topology)


def custom_topology(
    n: int,
    directed_edges: set[tuple[int, int]],
    directed: bool = True,
) -> Topology:
    """Wrap an explicit edge set (self-loops added at every node)."""
    edges = set()
    for i, j in directed_edges:
        if i == j:
            continue
        edges.add((i, j))
        if not directed:
            edges.add((j, i))
    return Topology(n, frozenset(edges), directed, TopologyKind.CUSTOM, frozenset(range(n)))


def matrix_to_text(m: MixingMatrix) -> str:
    """Serialize to the plain-text fixture format: ``n kind`` then n rows."""
    lines = [f"{m.n} {m.kind.value}"]
    for row in m.a:
        lines.append(" ".join(format(v, ".17g") for v in row))
    return "\n".join(lines) + "\n"


def matrix_from_text(text: str) -> MixingMatrix:
    """Parse the fixture format back into a MixingMatrix.

    The topology is reconstructed from the sparsity pattern as a custom
    graph; ``doubly_stochastic`` headers imply an undirected edge set.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0].split()
    if len(header) != 2:
        raise TopologyError(f"malformed header {lines[0]!r}")
    n = int(header[0])
    kind = StochasticityKind(header[1])
    if len(lines) != n + 1:
        raise TopologyError(f"expected {n} rows, got {len(lines) - 1}")
    a = np.array([[float(v) for v in ln.split()] for ln in lines[1:]])
    if a.shape != (n, n):
        raise TopologyError(f"expected {n}x{n} values, got {a.shape}")
    directed = kind is StochasticityKind.ROW
    edges = {(i, j) for i in range(n) for j in range(n) if i != j and a[i, j] > 0}
    topo = Topology(n, frozenset(edges), directed, TopologyKind.CUSTOM, frozenset(range(n)))
    return MixingMatrix(a=a, kind=kind, topology=topo)


def topology_to_text(t: Topology) -> str:
    """Serialize a topology as its 0/1 adjacency in the same text format."""
    lines = [f"{t.n} {t.kind.value}"]
    for row in t.adjacency():
        lines.append(" ".join(format(v, ".17g") for v in row))
    return "\n".join(lines) + "\n"
