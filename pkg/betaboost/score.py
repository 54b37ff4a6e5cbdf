"""
The sparsity-boosted structure score.

S(omega_N, G) = LL(omega_N, G) - kappa log(N) |G| + sum over absent pairs of
the sparsity boost, where the boost of a pair is the largest, over candidate
separating sets S, of the smallest, over assignments s, of -log beta at the
conditional pair table's test statistic.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Optional

import numpy as np
from scipy.special import xlogy

from betaboost.bayesnet import (
    Dag,
    EmpiricalCounts,
    SeparatingCollection,
    assignments,
    enumerate_dags,
    marginal_array,
    pair_array,
    separating_sets,
)
from betaboost.betatable import BetaTable, interpolate_log_beta
from betaboost.errors import DomainError
from betaboost.simplex import kl_divergence, mutual_information_cells

logger = logging.getLogger(__name__)

UNOBSERVED = 0.5  # conditional for parent assignments with no mass


class StratumSize(Enum):
    """Which sample size indexes beta in the boost."""

    STRATUM = "stratum"  # records matching the conditioning assignment
    GLOBAL = "global"  # all N records


@dataclass(frozen=True)
class ScoreConfig:
    """Hyperparameters of the score; psi_2 is fixed at 1."""

    eta: float = 0.01
    kappa: float = 0.5
    table: Optional[BetaTable] = None
    collection: SeparatingCollection = field(default_factory=SeparatingCollection)
    stratum_size: StratumSize = StratumSize.STRATUM

    def __post_init__(self) -> None:
        if self.kappa <= 0:
            raise DomainError(f"kappa must be positive, got {self.kappa!r}")
        if not (0.0 < self.eta < math.log(2)):
            raise DomainError(f"eta={self.eta!r} not realizable")
        if self.table is not None and abs(self.table.eta - self.eta) > 1e-12:
            raise DomainError(
                f"table was built for eta={self.table.eta!r}, score uses {self.eta!r}"
            )

    @classmethod
    def from_config(cls, config, table: Optional[BetaTable]) -> ScoreConfig:
        return cls(
            eta=config.eta,
            kappa=config.kappa,
            table=table,
            collection=SeparatingCollection.from_config(config),
            stratum_size=StratumSize(config.stratum_size),
        )


@dataclass(frozen=True)
class ScoreBreakdown:
    """Components of a score; total = log_likelihood - penalty + boost."""

    log_likelihood: float
    complexity_penalty: float
    sparsity_boost: float
    total: float

    def __str__(self) -> str:
        return (
            f"score {self.total:.6f} (LL {self.log_likelihood:.6f}, "
            f"penalty {self.complexity_penalty:.6f}, boost {self.sparsity_boost:.6f})"
        )


def _entropy_of(arr: np.ndarray) -> float:
    return float(-xlogy(arr, arr).sum())


def conditional_entropy(P: np.ndarray, v: int, parents: tuple[int, ...]) -> float:
    """H_P(X_v | X_parents) = H_P(X_v, X_parents) - H_P(X_parents)."""
    family = marginal_array(P, tuple(parents) + (v,))
    if not parents:
        return _entropy_of(family)
    return _entropy_of(family) - _entropy_of(marginal_array(P, parents))


def log_likelihood(counts: EmpiricalCounts, G: Dag) -> float:
    """LL(omega_N, G) = -N sum_i H(X_i | Pa_G(X_i)) under the empirical joint."""
    if counts.N < 1:
        raise DomainError("log likelihood needs at least one record")
    return idealized_log_likelihood(counts.distribution(), G, counts.N)


def idealized_log_likelihood(P: np.ndarray, G: Dag, N: int) -> float:
    """-N sum_i H_P(X_i | Pa_G(X_i)) for a full joint P."""
    P = np.asarray(P, dtype=float)
    if P.ndim != G.n:
        raise DomainError(f"distribution has {P.ndim} variables, DAG has {G.n}")
    total = sum(conditional_entropy(P, v, G.parents(v)) for v in range(G.n))
    return -N * total


def project_onto_dag(P: np.ndarray, G: Dag) -> np.ndarray:
    """
    The product of P's conditionals along G.

    Parent assignments with zero probability get the uniform conditional.
    """
    P = np.asarray(P, dtype=float)
    result = np.ones_like(P)
    for v in range(G.n):
        family = tuple(sorted(G.parents(v) + (v,)))
        joint = marginal_array(P, family)
        parent_mass = joint.sum(axis=family.index(v), keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            conditional = np.where(parent_mass > 0, joint / parent_mass, UNOBSERVED)
        others = tuple(i for i in range(G.n) if i not in family)
        result = result * np.expand_dims(conditional, others)
    return result


def kl_to_dag_projection(P: np.ndarray, G: Dag) -> float:
    """H(P || p_{G,P})."""
    return kl_divergence(np.ravel(P), np.ravel(project_onto_dag(P, G)))


def within_tolerance(P: np.ndarray, G: Dag, zeta: float) -> bool:
    """Whether p_{G,P} lies within KL distance zeta of P."""
    return kl_to_dag_projection(P, G) <= zeta


def bic_score(counts: EmpiricalCounts, G: Dag) -> float:
    """The MDL/BIC score LL - (1/2) log(N) |G|."""
    return log_likelihood(counts, G) - 0.5 * math.log(counts.N) * G.num_parameters()


class Scorer:
    """
    Scores DAGs against one data set, caching per-family entropies and
    per-(pair, separating set) boost terms across candidates.
    """

    def __init__(self, counts: EmpiricalCounts, cfg: ScoreConfig) -> None:
        if counts.N < 1:
            raise DomainError("scoring needs at least one record")
        self.counts = counts
        self.cfg = cfg
        self._distribution = counts.distribution()
        self._family: dict[tuple[int, tuple[int, ...]], float] = {}
        self._stratum: dict[tuple[int, int, tuple[int, ...]], float] = {}

    def log_likelihood(self, G: Dag) -> float:
        total = 0.0
        for v in range(G.n):
            key = (v, G.parents(v))
            if key not in self._family:
                self._family[key] = conditional_entropy(self._distribution, v, key[1])
            total += self._family[key]
        return -self.counts.N * total

    def _min_over_assignments(self, a: int, b: int, S: tuple[int, ...]) -> float:
        key = (a, b, S)
        if key in self._stratum:
            return self._stratum[key]
        table = self.cfg.table
        if table is None:
            raise DomainError("the sparsity boost needs a beta table")
        best = math.inf
        for s in assignments(len(S)):
            pair = pair_array(self.counts.counts, a, b, S, s)
            n_s = int(pair.sum())
            if n_s == 0:
                term = 0.0
            else:
                gamma = float(mutual_information_cells(pair / n_s))
                stratum = self.cfg.stratum_size is StratumSize.STRATUM
                size = n_s if stratum else self.counts.N
                term = -interpolate_log_beta(table, size, gamma)
            best = min(best, term)
        self._stratum[key] = best
        return best

    def sparsity_boost(self, G: Dag) -> float:
        boost = 0.0
        for a, b in combinations(range(G.n), 2):
            if G.adjacent(a, b):
                continue
            boost += max(
                self._min_over_assignments(a, b, S)
                for S in separating_sets(self.cfg.collection, G, a, b)
            )
        return boost

    def score(self, G: Dag) -> ScoreBreakdown:
        if G.n != self.counts.n:
            raise DomainError(f"DAG has {G.n} vertices, data has {self.counts.n}")
        ll = self.log_likelihood(G)
        penalty = self.cfg.kappa * math.log(self.counts.N) * G.num_parameters()
        boost = self.sparsity_boost(G)
        return ScoreBreakdown(ll, penalty, boost, ll - penalty + boost)


def sparsity_boost(counts: EmpiricalCounts, G: Dag, cfg: ScoreConfig) -> float:
    """Sum over absent unordered pairs of max over S of min over s of -log beta."""
    return Scorer(counts, cfg).sparsity_boost(G)


def score(counts: EmpiricalCounts, G: Dag, cfg: ScoreConfig) -> ScoreBreakdown:
    """The full score of G with its components."""
    return Scorer(counts, cfg).score(G)


def score_difference_two_node(counts: EmpiricalCounts, cfg: ScoreConfig) -> float:
    """
    Closed form of score(empty) - score(0 -> 1) on two nodes:
    -N tau_hat + kappa log N - log beta_N(tau_hat).
    """
    if counts.n != 2:
        raise DomainError("the two-node decomposition needs n = 2")
    if cfg.table is None:
        raise DomainError("the two-node decomposition needs a beta table")
    N = counts.N
    tau_hat = float(mutual_information_cells(counts.counts / N))
    log_beta = interpolate_log_beta(cfg.table, N, tau_hat)
    return -N * tau_hat + cfg.kappa * math.log(N) - log_beta


def _rank_key(item: tuple[Dag, ScoreBreakdown]):
    dag, breakdown = item
    return (-breakdown.total, dag.num_edges, dag.parent_sets)


def _score_chunk(
    counts: EmpiricalCounts, cfg: ScoreConfig, dags: list[Dag]
) -> list[tuple[Dag, ScoreBreakdown]]:
    scorer = Scorer(counts, cfg)
    return [(G, scorer.score(G)) for G in dags]


def rank_dags(
    counts: EmpiricalCounts, n: int, d: int, cfg: ScoreConfig, workers: int = 1
) -> list[tuple[Dag, ScoreBreakdown]]:
    """
    Score every DAG with in-degree <= d, best first.

    Ties go to fewer edges, then to lexicographically smaller parent sets.

    Args:
        counts: Empirical counts over n binary variables
        n: Number of variables
        d: In-degree bound
        cfg: Score settings
        workers: Process count; each worker scores a strided share of the
            candidates with its own caches. 1 scores in-process.
    """
    if counts.n != n:
        raise DomainError(f"data has {counts.n} variables, expected {n}")
    dags = list(enumerate_dags(n, d))
    if workers <= 1:
        scored = _score_chunk(counts, cfg, dags)
    else:
        chunks = [dags[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_score_chunk, [counts] * workers, [cfg] * workers, chunks)
            scored = [item for part in parts for item in part]
    ranked = sorted(scored, key=_rank_key)
    logger.info("scored %d candidate DAGs; best %s", len(ranked), ranked[0][1])
    return ranked


def learn(
    counts: EmpiricalCounts, n: int, d: int, cfg: ScoreConfig, workers: int = 1
) -> Dag:
    """The highest-scoring DAG over all DAGs with in-degree <= d."""
    return rank_dags(counts, n, d, cfg, workers)[0][0]
