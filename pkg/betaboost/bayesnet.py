"""
Bayesian networks over binary variables.

DAG structures, conditional probability tables, ancestral sampling,
aggregated frequency counts and the conditional pair tables the sparsity
boost is computed from. Also the separating collections, edge strength,
exhaustive DAG enumeration and the network/data text formats.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from betaboost.errors import DomainError, TableFormatError
from betaboost.simplex import ContingencyTable, mutual_information, reference_t

logger = logging.getLogger(__name__)

MAX_EXHAUSTIVE_N = 5
CPT_TOLERANCE = 1e-12

ParentSets = tuple[tuple[int, ...], ...]


def _find_cycle_free_order(
    n: int, parent_sets: Sequence[Sequence[int]]
) -> Optional[list[int]]:
    """Kahn's algorithm; None if the parent sets contain a cycle."""
    indegree = [len(ps) for ps in parent_sets]
    children: list[list[int]] = [[] for _ in range(n)]
    for v, ps in enumerate(parent_sets):
        for p in ps:
            children[p].append(v)
    ready = [v for v in range(n) if indegree[v] == 0]
    order = []
    while ready:
        v = ready.pop(0)
        order.append(v)
        for c in children[v]:
            indegree[c] -= 1
            if indegree[c] == 0:
                ready.append(c)
    return order if len(order) == n else None


@dataclass(frozen=True)
class Dag:
    """A DAG on vertices 0..n-1 given by sorted parent tuples."""

    n: int
    parent_sets: ParentSets

    def __post_init__(self) -> None:
        if self.n < 0 or len(self.parent_sets) != self.n:
            raise DomainError(f"need {self.n} parent sets, got {len(self.parent_sets)}")
        normalized = []
        for v, ps in enumerate(self.parent_sets):
            ps = tuple(sorted({int(p) for p in ps}))
            if any(p < 0 or p >= self.n for p in ps):
                raise DomainError(f"vertex {v} has a parent outside 0..{self.n - 1}")
            if v in ps:
                raise DomainError(f"vertex {v} is its own parent")
            normalized.append(ps)
        object.__setattr__(self, "parent_sets", tuple(normalized))
        if _find_cycle_free_order(self.n, normalized) is None:
            raise DomainError(f"parent sets {tuple(normalized)} contain a cycle")

    @classmethod
    def empty(cls, n: int) -> Dag:
        return cls(n, tuple(() for _ in range(n)))

    @classmethod
    def from_edges(cls, n: int, edges: Sequence[tuple[int, int]]) -> Dag:
        """Build from (parent, child) pairs."""
        parents: list[list[int]] = [[] for _ in range(n)]
        for parent, child in edges:
            if not (0 <= child < n):
                raise DomainError(f"edge {parent}->{child} leaves the graph")
            parents[child].append(parent)
        return cls(n, tuple(tuple(ps) for ps in parents))

    def parents(self, v: int) -> tuple[int, ...]:
        return self.parent_sets[v]

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(p, v) for v, ps in enumerate(self.parent_sets) for p in ps]

    @property
    def num_edges(self) -> int:
        return sum(len(ps) for ps in self.parent_sets)

    @property
    def max_in_degree(self) -> int:
        return max((len(ps) for ps in self.parent_sets), default=0)

    def adjacent(self, a: int, b: int) -> bool:
        """Whether a and b are joined by an edge in either direction."""
        return a in self.parent_sets[b] or b in self.parent_sets[a]

    def skeleton(self) -> frozenset[frozenset[int]]:
        return frozenset(frozenset(e) for e in self.edges)

    def topological_order(self) -> list[int]:
        order = _find_cycle_free_order(self.n, self.parent_sets)
        assert order is not None
        return order

    def num_parameters(self) -> int:
        """Free parameters of binary CPTs: sum over vertices of 2^|Pa(v)|."""
        return sum(2 ** len(ps) for ps in self.parent_sets)

    def __str__(self) -> str:
        edges = ", ".join(f"{p}->{c}" for p, c in self.edges) or "no edges"
        return f"Dag(n={self.n}: {edges})"


def _parent_index(values: np.ndarray, parents: Sequence[int]) -> np.ndarray:
    """Row index of a CPT: parent values read as a big-endian binary number."""
    index = np.zeros(values.shape[:-1], dtype=np.int64)
    for p in parents:
        index = 2 * index + values[..., p]
    return index


@dataclass(frozen=True)
class BayesNet:
    """
    A DAG with one CPT per vertex.

    cpts[v][i] is P(X_v = 1 | parents = i), where i reads the parent values
    in increasing vertex order as a big-endian binary number.
    """

    dag: Dag
    cpts: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if len(self.cpts) != self.dag.n:
            raise DomainError(f"need {self.dag.n} CPTs, got {len(self.cpts)}")
        cpts = []
        for v, cpt in enumerate(self.cpts):
            arr = np.array(cpt, dtype=float).ravel()
            expected = 2 ** len(self.dag.parents(v))
            if arr.shape != (expected,):
                raise DomainError(f"CPT of vertex {v} needs {expected} rows")
            if np.any(arr < -CPT_TOLERANCE) or np.any(arr > 1 + CPT_TOLERANCE):
                raise DomainError(f"CPT of vertex {v} has entries outside [0, 1]")
            arr = np.clip(arr, 0.0, 1.0)
            arr.setflags(write=False)
            cpts.append(arr)
        object.__setattr__(self, "cpts", tuple(cpts))

    @property
    def n(self) -> int:
        return self.dag.n

    def joint(self) -> np.ndarray:
        """The full joint distribution as an array of shape (2,) * n."""
        rows = np.array(list(assignments(self.n)))
        probs = np.ones(len(rows))
        for v in range(self.n):
            p1 = self.cpts[v][_parent_index(rows, self.dag.parents(v))]
            probs *= np.where(rows[:, v] == 1, p1, 1.0 - p1)
        return probs.reshape((2,) * self.n)


@dataclass(frozen=True)
class EmpiricalCounts:
    """Aggregated frequency counts of binary n-tuples, shape (2,) * n."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.counts, dtype=np.int64)
        if any(s != 2 for s in arr.shape):
            raise DomainError(f"counts must have shape (2,)*n, got {arr.shape}")
        if np.any(arr < 0):
            raise DomainError("counts must be nonnegative")
        arr.setflags(write=False)
        object.__setattr__(self, "counts", arr)

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> EmpiricalCounts:
        """Count the rows of an (N, n) array of 0/1 values."""
        samples = np.asarray(samples, dtype=np.int64)
        n = samples.shape[1]
        flat = samples @ (2 ** np.arange(n - 1, -1, -1))
        return cls(np.bincount(flat, minlength=2**n).reshape((2,) * n))

    @property
    def n(self) -> int:
        return self.counts.ndim

    @property
    def N(self) -> int:
        return int(self.counts.sum())

    def distribution(self) -> np.ndarray:
        """The empirical joint p_{omega_N}."""
        if self.N == 0:
            raise DomainError("no records to normalize")
        return self.counts / self.N

    def __str__(self) -> str:
        return f"EmpiricalCounts(n={self.n}, N={self.N})"


def sample(bn: BayesNet, N: int, seed: Optional[int] = None) -> EmpiricalCounts:
    """
    Draw N records by ancestral sampling in topological order.

    Raises:
        DomainError: If N < 1
    """
    if N < 1:
        raise DomainError(f"N must be positive, got {N}")
    rng = np.random.default_rng(seed)
    values = np.zeros((N, bn.n), dtype=np.int64)
    for v in bn.dag.topological_order():
        p1 = bn.cpts[v][_parent_index(values, bn.dag.parents(v))]
        values[:, v] = rng.random(N) < p1
    return EmpiricalCounts.from_samples(values)


def marginal_array(arr: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Sum a (2,)*n array over every axis not in keep; kept axes stay sorted."""
    drop = tuple(i for i in range(arr.ndim) if i not in set(keep))
    return arr.sum(axis=drop)


def pair_array(
    arr: np.ndarray, A: int, B: int, S: Sequence[int], s: Sequence[int]
) -> np.ndarray:
    """The (A, B) slice of arr restricted to S = s, other variables summed out."""
    S = tuple(S)
    if A == B:
        raise DomainError("A and B must differ")
    if A in S or B in S:
        raise DomainError("the conditioning set must exclude A and B")
    if len(S) != len(tuple(s)):
        raise DomainError("assignment length does not match the conditioning set")
    moved = np.moveaxis(arr, (A, B) + S, tuple(range(2 + len(S))))
    restricted = moved[(slice(None), slice(None)) + tuple(int(x) for x in s)]
    return restricted.reshape(2, 2, -1).sum(axis=-1)


def conditional_pair_table(
    counts: EmpiricalCounts, A: int, B: int, S: Sequence[int], s: Sequence[int]
) -> Optional[ContingencyTable]:
    """
    The joint of X_A, X_B among records with X_S = s.

    Returns:
        The normalized table, or None when no record matches s
    """
    table = pair_array(counts.counts, A, B, S, s)
    if table.sum() == 0:
        return None
    return ContingencyTable.from_counts(table)


def fit_network(counts: EmpiricalCounts, dag: Dag) -> BayesNet:
    """
    Maximum-likelihood CPTs for dag from counts.

    Parent assignments that never occur get P(X_v = 1) = 1/2.
    """
    if counts.n != dag.n:
        raise DomainError(f"data has {counts.n} variables, DAG has {dag.n}")
    cpts = []
    for v in range(dag.n):
        family = tuple(sorted(dag.parents(v) + (v,)))
        joint = np.moveaxis(marginal_array(counts.counts, family), family.index(v), -1)
        rows = joint.reshape(-1, 2).astype(float)
        totals = rows.sum(axis=1)
        safe = np.where(totals > 0, totals, 1.0)
        cpts.append(np.where(totals > 0, rows[:, 1] / safe, 0.5))
    return BayesNet(dag, tuple(cpts))


class SeparatingKind(Enum):
    """How candidate separating sets are produced."""

    ALL_SUBSETS = "all-subsets"
    PARENT_BASED = "parent-based"


@dataclass(frozen=True)
class SeparatingCollection:
    """A rule producing the separating sets S_{A,B}(G), each of size <= d."""

    kind: SeparatingKind = SeparatingKind.ALL_SUBSETS
    d: int = 2

    def __post_init__(self) -> None:
        if self.d < 0:
            raise DomainError(f"d must be nonnegative, got {self.d}")

    @classmethod
    def from_config(cls, config) -> SeparatingCollection:
        return cls(SeparatingKind(config.collection), config.d)

    def __str__(self) -> str:
        return f"{self.kind.value} (d={self.d})"


def separating_sets(
    coll: SeparatingCollection, G: Dag, A: int, B: int
) -> list[tuple[int, ...]]:
    """Candidate separating sets for the pair (A, B), deduplicated, in order."""
    if A == B:
        raise DomainError("A and B must differ")
    if coll.kind is SeparatingKind.ALL_SUBSETS:
        others = [v for v in range(G.n) if v not in (A, B)]
        return [
            subset
            for size in range(min(coll.d, len(others)) + 1)
            for subset in itertools.combinations(others, size)
        ]
    candidates = [
        tuple(p for p in G.parents(A) if p != B),
        tuple(p for p in G.parents(B) if p != A),
    ]
    return list(dict.fromkeys(candidates))


def assignments(size: int) -> Iterator[tuple[int, ...]]:
    """All 0/1 assignments of the given length."""
    return itertools.product((0, 1), repeat=size)


def edge_strength(P: np.ndarray, G: Dag, coll: SeparatingCollection) -> float:
    """
    min over edges, min over separating sets, max over assignments of tau.

    Assignments with zero probability are skipped. An edgeless G gives +inf.

    Raises:
        DomainError: If some separating set has no possible assignment
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != G.n:
        raise DomainError(f"distribution has {P.ndim} variables, DAG has {G.n}")
    strength = math.inf
    for a, b in G.edges:
        for S in separating_sets(coll, G, a, b):
            taus = []
            for s in assignments(len(S)):
                table = pair_array(P, a, b, S, s)
                if table.sum() <= 0:
                    continue
                taus.append(mutual_information(ContingencyTable(table / table.sum())))
            if not taus:
                raise DomainError(f"no assignment of {S} has positive probability")
            strength = min(strength, max(taus))
    return strength


def _creates_cycle(parent_sets: list[tuple[int, ...]], n: int) -> bool:
    padded = parent_sets + [()] * (n - len(parent_sets))
    return _find_cycle_free_order(n, padded) is None


def enumerate_dags(n: int, d: Optional[int] = None) -> list[Dag]:
    """
    Every DAG on n labeled vertices with in-degree at most d, once each.

    Parent sets are chosen vertex by vertex, backtracking as soon as the
    partial choice has a cycle.

    Raises:
        DomainError: If n exceeds the exhaustive limit of 5
    """
    if n < 0:
        raise DomainError(f"n must be nonnegative, got {n}")
    if n > MAX_EXHAUSTIVE_N:
        raise DomainError(
            f"exhaustive enumeration is limited to n <= {MAX_EXHAUSTIVE_N}; "
            "use a greedy structure search for larger networks"
        )
    bound = n - 1 if d is None else min(d, n - 1)
    options = []
    for v in range(n):
        others = [u for u in range(n) if u != v]
        options.append(
            [
                subset
                for size in range(max(bound, 0) + 1)
                for subset in itertools.combinations(others, size)
            ]
        )

    result: list[Dag] = []

    def extend(chosen: list[tuple[int, ...]]) -> None:
        if len(chosen) == n:
            result.append(Dag(n, tuple(chosen)))
            return
        for ps in options[len(chosen)]:
            candidate = chosen + [ps]
            if not _creates_cycle(candidate, n):
                extend(candidate)

    extend([])
    logger.debug("enumerated %d DAGs for n=%d, d=%s", len(result), n, d)
    return result


def count_dags(n: int) -> int:
    """Number of labeled DAGs on n vertices by Robinson's recurrence."""
    if n < 0:
        raise DomainError(f"n must be nonnegative, got {n}")
    a = [1]
    for m in range(1, n + 1):
        a.append(
            sum(
                (-1) ** (k - 1) * math.comb(m, k) * 2 ** (k * (m - k)) * a[m - k]
                for k in range(1, m + 1)
            )
        )
    return a[n]


def two_node_network(tau: float) -> BayesNet:
    """
    Two nodes whose joint is the uniform-marginals table with tau = tau.

    tau = 0 gives the edgeless independent network; otherwise 0 -> 1.
    """
    if tau == 0:
        return BayesNet(Dag.empty(2), (np.array([0.5]), np.array([0.5])))
    t = reference_t(tau)
    return BayesNet(
        Dag(2, ((), (0,))),
        (np.array([0.5]), np.array([0.5 - 2 * t, 0.5 + 2 * t])),
    )


def _bits(values: Sequence[int]) -> str:
    return "".join(str(int(x)) for x in values) or "-"


def write_network(
    bn: BayesNet, path: Union[str, Path], d: Optional[int] = None
) -> None:
    """Write the network text format: 'n d', parent lines, then CPT rows."""
    d = bn.dag.max_in_degree if d is None else d
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{bn.n} {d}\n")
        for v in range(bn.n):
            parents = " ".join(str(p) for p in bn.dag.parents(v))
            f.write(f"{v}: {parents}".rstrip() + "\n")
        for v in range(bn.n):
            k = len(bn.dag.parents(v))
            for i, assignment in enumerate(assignments(k)):
                f.write(f"{v} {_bits(assignment)} {bn.cpts[v][i]:.17g}\n")


def _data_lines(path: Path) -> list[tuple[int, list[str]]]:
    if not path.exists():
        raise TableFormatError("file not found", path)
    lines = path.read_text(encoding="utf-8").splitlines()
    return [(i + 1, line.split()) for i, line in enumerate(lines) if line.strip()]


def _parse_int(text: str, path: Path, lineno: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise TableFormatError(f"bad integer {text!r}", path, lineno) from None


def _parse_bits(text: str, length: int, path: Path, lineno: int) -> tuple[int, ...]:
    if text == "-" and length == 0:
        return ()
    if len(text) != length or any(ch not in "01" for ch in text):
        raise TableFormatError(
            f"expected {length} binary digits, got {text!r}", path, lineno
        )
    return tuple(int(ch) for ch in text)


def read_network(path: Union[str, Path]) -> BayesNet:
    """
    Read the network text format.

    Raises:
        TableFormatError: If the file is missing or malformed
        DomainError: If the parent sets are cyclic or CPTs are invalid
    """
    path = Path(path)
    lines = _data_lines(path)
    if not lines or len(lines[0][1]) != 2:
        raise TableFormatError("expected header 'n d'", path, 1)
    n = _parse_int(lines[0][1][0], path, lines[0][0])
    d = _parse_int(lines[0][1][1], path, lines[0][0])

    parent_lines = lines[1 : n + 1]
    if len(parent_lines) != n:
        raise TableFormatError("missing parent lines", path, lines[-1][0])
    parent_sets = []
    for v, (lineno, fields) in enumerate(parent_lines):
        if not fields or fields[0] != f"{v}:":
            raise TableFormatError(f"expected parent line '{v}: ...'", path, lineno)
        parent_sets.append(tuple(_parse_int(p, path, lineno) for p in fields[1:]))
    dag = Dag(n, tuple(parent_sets))
    if dag.max_in_degree > d:
        raise DomainError(f"in-degree {dag.max_in_degree} exceeds the declared d={d}")

    cpts = [np.full(2 ** len(dag.parents(v)), np.nan) for v in range(n)]
    for lineno, fields in lines[n + 1 :]:
        if len(fields) != 3:
            raise TableFormatError("expected 'v assignment p1'", path, lineno)
        v = _parse_int(fields[0], path, lineno)
        if not (0 <= v < n):
            raise TableFormatError(f"unknown vertex {v}", path, lineno)
        bits = _parse_bits(fields[1], len(dag.parents(v)), path, lineno)
        try:
            p1 = float(fields[2])
        except ValueError:
            message = f"bad probability {fields[2]!r}"
            raise TableFormatError(message, path, lineno) from None
        index = int(_parent_index(np.array(bits, dtype=np.int64), range(len(bits))))
        cpts[v][index] = p1
    for v, cpt in enumerate(cpts):
        if np.any(np.isnan(cpt)):
            raise TableFormatError(f"CPT of vertex {v} is incomplete", path)
    return BayesNet(dag, tuple(cpts))


def write_counts(counts: EmpiricalCounts, path: Union[str, Path]) -> None:
    """Write the data format: 'n N', then 'assignment count' for nonzero cells."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{counts.n} {counts.N}\n")
        for assignment in assignments(counts.n):
            c = int(counts.counts[assignment])
            if c:
                f.write(f"{_bits(assignment)} {c}\n")


def read_counts(path: Union[str, Path]) -> EmpiricalCounts:
    """
    Read the data format.

    Raises:
        TableFormatError: If the file is malformed or the counts do not sum to N
    """
    path = Path(path)
    lines = _data_lines(path)
    if not lines or len(lines[0][1]) != 2:
        raise TableFormatError("expected header 'n N'", path, 1)
    n = _parse_int(lines[0][1][0], path, lines[0][0])
    N = _parse_int(lines[0][1][1], path, lines[0][0])
    arr = np.zeros((2,) * n, dtype=np.int64)
    for lineno, fields in lines[1:]:
        if len(fields) != 2:
            raise TableFormatError("expected 'assignment count'", path, lineno)
        bits = _parse_bits(fields[0], n, path, lineno)
        count = _parse_int(fields[1], path, lineno)
        if count < 0:
            raise TableFormatError("negative count", path, lineno)
        arr[bits] += count
    if int(arr.sum()) != N:
        raise TableFormatError(f"counts sum to {int(arr.sum())}, header says {N}", path)
    return EmpiricalCounts(arr)
