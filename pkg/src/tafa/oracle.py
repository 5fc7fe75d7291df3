"""Brute-force reference machinery for the theory checks.

Everything here trades efficiency for being obviously correct on small
problems: exhaustive collection optimisation, diminishing-returns
certification of the facility-location objective, and exact value-function
dynamic programming on enumerable toy distributions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

from tafa.dataset import CostModel
from tafa.predictor import task_loss
from tafa.search import SubsetLossEvaluator, empirical_objective

MAX_SUPPORT = 10**6
MAX_COLLECTIONS = 2 * 10**6


def all_templates(n_features: int, o_init: int) -> list[tuple[int, ...]]:
    """Every o_init-containing feature subset, in lexicographic order."""
    others = [d for d in range(n_features) if d != o_init]
    out = []
    for r in range(len(others) + 1):
        for extra in itertools.combinations(others, r):
            out.append(tuple(sorted((o_init, *extra))))
    return sorted(out)


def brute_force_collection(
    evaluator: SubsetLossEvaluator,
    costs: CostModel,
    lam: float,
    o_init: int,
    n_templates: int,
) -> tuple[tuple[tuple[int, ...], ...], float]:
    """Exact minimiser of the empirical objective over all collections of
    at most n_templates o_init-containing templates; ties resolve to the
    lexicographically smallest candidate-index combination."""
    n_features = evaluator.model.n_features
    candidates = all_templates(n_features, o_init)
    total = sum(comb(len(candidates), t) for t in range(1, n_templates + 1))
    if total > MAX_COLLECTIONS:
        raise ValueError(f"enumeration budget exceeded: {total} collections")
    e = evaluator.e_matrix(candidates, costs, lam)
    best_combo: tuple[int, ...] | None = None
    best_g = np.inf
    for t in range(1, n_templates + 1):
        for combo in itertools.combinations(range(len(candidates)), t):
            g = empirical_objective(e[:, combo])
            if g < best_g:
                best_g = g
                best_combo = combo
    assert best_combo is not None
    return tuple(candidates[j] for j in best_combo), float(best_g)


def facility_values(loss_matrix: np.ndarray, collection) -> float:
    """h(B) = sum over instances of max over templates of -e; h(empty) = 0."""
    collection = list(collection)
    if not collection:
        return 0.0
    return float((-loss_matrix[:, collection]).max(axis=1).sum())


def certify_submodularity(
    loss_matrix: np.ndarray, trials: int, seed: int, tol: float = 1e-9
) -> dict:
    """Sample nested nonempty collections B within B' and a candidate b and
    check the diminishing-returns inequality
    h(B + b) - h(B) >= h(B' + b) - h(B') within tol.

    Nonempty B is required: with negative entries the h(empty)=0 convention
    breaks the inequality for the empty base, while the facility-location
    form is submodular on nonempty collections for any entries.
    """
    n, s = loss_matrix.shape
    if s < 2:
        return {"trials": 0, "violations": 0, "max_violation": 0.0, "passed": True}
    r = -loss_matrix
    rng = np.random.default_rng(seed)
    violations = 0
    worst = 0.0
    for _ in range(trials):
        b = int(rng.integers(s))
        others = [j for j in range(s) if j != b]
        size_sup = int(rng.integers(1, min(len(others), 10) + 1))
        sup = rng.choice(others, size=size_sup, replace=False)
        size_sub = int(rng.integers(1, size_sup + 1))
        sub = rng.choice(sup, size=size_sub, replace=False)
        m_sub = r[:, sub].max(axis=1)
        m_sup = r[:, sup].max(axis=1)
        gain_sub = np.maximum(r[:, b], m_sub).sum() - m_sub.sum()
        gain_sup = np.maximum(r[:, b], m_sup).sum() - m_sup.sum()
        gap = gain_sub - gain_sup
        if gap < -tol:
            violations += 1
            worst = max(worst, -gap)
    return {
        "trials": trials,
        "violations": violations,
        "max_violation": worst,
        "passed": violations == 0,
    }


@dataclass(frozen=True)
class ToyDistribution:
    """An explicit joint pmf over a finite feature grid and class labels."""

    xs: np.ndarray  # (M, D) support points
    ys: np.ndarray  # (M,) class labels
    probs: np.ndarray  # (M,) probabilities

    def __post_init__(self):
        if self.xs.shape[0] > MAX_SUPPORT:
            raise ValueError("support too large to enumerate")
        if abs(self.probs.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1")
        if np.any(self.probs < 0):
            raise ValueError("negative probability")
        object.__setattr__(self, "_posterior_cache", {})

    @property
    def n_features(self) -> int:
        return self.xs.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.ys.max()) + 1

    def consistent_rows(self, assignment: dict[int, float]) -> np.ndarray:
        mask = np.ones(self.xs.shape[0], dtype=bool)
        for d, v in assignment.items():
            mask &= self.xs[:, d] == v
        return mask

    def posterior(self, assignment: dict[int, float]) -> np.ndarray:
        """Bayes posterior p(y | x_o) from the joint pmf; this is the
        predictor used inside all value computations, so the conditioning
        and the prediction share one distribution."""
        key = tuple(sorted(assignment.items()))
        cache = self._posterior_cache  # type: ignore[attr-defined]
        if key in cache:
            return cache[key]
        mask = self.consistent_rows(assignment)
        w = self.probs[mask]
        total = w.sum()
        if total <= 0:
            raise ValueError(f"assignment has zero probability: {assignment}")
        out = np.zeros(self.n_classes)
        np.add.at(out, self.ys[mask], w)
        out /= total
        cache[key] = out
        return out

    def marginal(self, assignment: dict[int, float]) -> float:
        return float(self.probs[self.consistent_rows(assignment)].sum())

    def states(self) -> list[dict[int, float]]:
        """Every positive-probability observed assignment, grouped by the
        observed index set, smaller sets first."""
        out: list[dict[int, float]] = []
        d = self.n_features
        for r in range(d + 1):
            for obs in itertools.combinations(range(d), r):
                seen = set()
                for row in self.xs:
                    key = tuple(float(row[j]) for j in obs)
                    if key not in seen:
                        seen.add(key)
                        out.append({j: v for j, v in zip(obs, key)})
        return out


def random_toy_distribution(
    n_features: int, n_classes: int, seed: int, concentration: float = 1.0
) -> ToyDistribution:
    """Dirichlet-weighted joint over binary features and class labels."""
    rng = np.random.default_rng(seed)
    grid = np.array(list(itertools.product([0.0, 1.0], repeat=n_features)))
    xs = np.repeat(grid, n_classes, axis=0)
    ys = np.tile(np.arange(n_classes), grid.shape[0])
    probs = rng.dirichlet(np.full(xs.shape[0], concentration))
    return ToyDistribution(xs=xs, ys=ys.astype(np.int64), probs=probs)


def expected_loss(dist: ToyDistribution, assignment: dict[int, float]) -> float:
    """E_{y | x_o} of the cross-entropy of the Bayes posterior at x_o."""
    probs = dist.posterior(assignment)
    mask = dist.consistent_rows(assignment)
    w = dist.probs[mask]
    total = w.sum()
    out = 0.0
    for row, weight in zip(np.flatnonzero(mask), w):
        out += (weight / total) * task_loss(probs, int(dist.ys[row]))
    return out


def value_functions(
    dist: ToyDistribution, costs: CostModel, lam: float, t_max: int
) -> dict[tuple[tuple[tuple[int, float], ...], int], float]:
    """Exact DP for the acquisition MDP value V^t at every reachable state.

    V^0 is the negative expected loss of predicting now; V^t may also
    acquire any unobserved feature, paying its weighted cost and taking the
    expectation of V^{t-1} over that feature's conditional.
    """
    table: dict[tuple[tuple[tuple[int, float], ...], int], float] = {}
    states = dist.states()
    for st in states:
        table[(_key(st), 0)] = -expected_loss(dist, st)
    for t in range(1, t_max + 1):
        for st in states:
            key = _key(st)
            best = table[(key, 0)]
            unobserved = [d for d in range(dist.n_features) if d not in st]
            for d in unobserved:
                mask = dist.consistent_rows(st)
                w = dist.probs[mask]
                total = w.sum()
                vals = np.unique(dist.xs[mask, d])
                acc = 0.0
                for v in vals:
                    nxt = dict(st)
                    nxt[d] = float(v)
                    p = dist.marginal(nxt) / total
                    acc += p * table[(_key(nxt), t - 1)]
                cand = -lam * float(costs.costs[d]) + acc
                best = max(best, cand)
            table[(key, t)] = best
    return table


def _key(assignment: dict[int, float]) -> tuple[tuple[int, float], ...]:
    return tuple(sorted(assignment.items()))


def aco_value(
    dist: ToyDistribution,
    assignment: dict[int, float],
    costs: CostModel,
    lam: float,
    t_max: int,
) -> float:
    """Exhaustive-subset acquisition value: the best negative expected loss
    over every unobserved subset of size at most t_max, net of costs."""
    unobserved = [d for d in range(dist.n_features) if d not in assignment]
    mask = dist.consistent_rows(assignment)
    weights = dist.probs[mask]
    total = weights.sum()
    rows = np.flatnonzero(mask)
    best = -np.inf
    for r in range(min(t_max, len(unobserved)) + 1):
        for u in itertools.combinations(unobserved, r):
            cost = lam * float(sum(costs.costs[j] for j in u))
            exp_loss = 0.0
            for row, w in zip(rows, weights):
                target = dict(assignment)
                for d in u:
                    target[d] = float(dist.xs[row, d])
                probs = dist.posterior(target)
                exp_loss += (w / total) * task_loss(probs, int(dist.ys[row]))
            best = max(best, -exp_loss - cost)
    return float(best)
