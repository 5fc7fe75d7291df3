"""Template library search: greedy selection over sampled candidates and
iterative mutation rounds.

A template is a sorted tuple of feature indices that always contains the
mandatory initial feature. The search objective for a collection is the
mean over training instances of the best (minimum) subset loss achievable
within the collection; greedy adds the candidate with the largest marginal
improvement of that objective.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from tafa import backend
from tafa.dataset import CostModel
from tafa.predictor import GaussianNB, LOSS_EPS, task_loss, zero_one_loss

LIBRARY_SCHEMA = "tafa.library/1"

CROSS_ENTROPY = "cross_entropy"
ZERO_ONE = "zero_one"


def validate_template(indices, n_features: int, o_init: int | None = None) -> tuple[int, ...]:
    tpl = tuple(sorted(int(i) for i in indices))
    if not tpl:
        raise ValueError("template must be nonempty")
    if len(set(tpl)) != len(tpl):
        raise ValueError(f"template has duplicate indices: {indices}")
    if tpl[0] < 0 or tpl[-1] >= n_features:
        raise ValueError(f"template indices out of range: {indices}")
    if o_init is not None and o_init not in tpl:
        raise ValueError(f"template {indices} is missing the initial feature {o_init}")
    return tpl


@dataclass
class SearchConfig:
    n_templates: int  # T
    n_candidates: int  # S, per candidate pool
    n_rounds: int  # R mutation rounds after the initial greedy round
    lam: float
    o_init: int
    seed: int
    drop_probability: float = 0.5

    def __post_init__(self):
        if self.n_templates < 1:
            raise ValueError("need at least one template")
        if self.n_candidates < self.n_templates:
            raise ValueError("candidate budget smaller than template count")
        if self.n_rounds < 0 or self.lam < 0:
            raise ValueError("rounds and lambda must be nonnegative")
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ValueError("drop probability must lie in [0, 1]")


@dataclass(frozen=True)
class TemplateLibrary:
    o_init: int
    lam: float
    templates: tuple[tuple[int, ...], ...]
    search_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.templates:
            raise ValueError("library must contain at least one template")

    def to_dict(self) -> dict:
        return {
            "schema": LIBRARY_SCHEMA,
            "o_init": self.o_init,
            "lambda": self.lam,
            "templates": [list(t) for t in self.templates],
            "search_meta": self.search_meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TemplateLibrary":
        if d.get("schema") != LIBRARY_SCHEMA:
            raise ValueError(f"unexpected library schema: {d.get('schema')!r}")
        return cls(
            o_init=int(d["o_init"]),
            lam=float(d["lambda"]),
            templates=tuple(tuple(t) for t in d["templates"]),
            search_meta=dict(d.get("search_meta", {})),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "TemplateLibrary":
        return cls.from_dict(json.loads(Path(path).read_text()))


def sample_candidates(n_features: int, o_init: int, s: int, seed: int) -> list[tuple[int, ...]]:
    """S distinct templates, each non-init feature included with prob 0.5.

    Duplicates are dropped and topped up with fresh draws; deterministic
    per seed. Fails if more distinct o_init-containing templates are asked
    for than exist.
    """
    if s < 1:
        raise ValueError("need at least one candidate")
    if n_features < 2:
        raise ValueError("need at least two features")
    if o_init < 0 or o_init >= n_features:
        raise ValueError("o_init out of range")
    limit = 2 ** (n_features - 1)
    if s > limit:
        raise ValueError(f"cannot draw {s} distinct candidates from {limit}")
    rng = np.random.default_rng(seed)
    others = np.array([d for d in range(n_features) if d != o_init])
    seen: set[tuple[int, ...]] = set()
    out: list[tuple[int, ...]] = []
    while len(out) < s:
        take = rng.random(size=(s, others.size)) < 0.5
        for row in take:
            tpl = tuple(sorted([o_init, *others[row]]))
            if tpl not in seen:
                seen.add(tpl)
                out.append(tpl)
                if len(out) == s:
                    break
    return out


def mutate(
    templates,
    o_init: int,
    s: int,
    drop_probability: float = 0.5,
    seed: int = 0,
) -> list[tuple[int, ...]]:
    """Children of the given templates: each non-init feature of the parent
    is independently dropped with drop_probability, the initial feature is
    always preserved. Parents are cycled until s distinct children exist or
    the variation pool is exhausted.
    """
    parents = [tuple(t) for t in templates]
    if not parents:
        raise ValueError("need at least one parent template")
    rng = np.random.default_rng(seed)
    seen: set[tuple[int, ...]] = set()
    out: list[tuple[int, ...]] = []
    stale_rounds = 0
    while len(out) < s and stale_rounds < 64:
        grew = False
        for parent in parents:
            rest = [d for d in parent if d != o_init]
            keep = rng.random(len(rest)) >= drop_probability
            child = tuple(sorted([o_init, *np.array(rest, dtype=int)[keep]]))
            if child not in seen:
                seen.add(child)
                out.append(child)
                grew = True
                if len(out) == s:
                    break
        stale_rounds = 0 if grew else stale_rounds + 1
    return out


class SubsetLossEvaluator:
    """Prediction-loss columns per template over a fixed instance set.

    Columns hold the prediction loss only; the lambda-weighted cost term is
    added when an e-matrix is requested, so cached columns are shared
    across lambda values. Entries reproduce pointwise subset_loss calls
    exactly.
    """

    def __init__(
        self,
        model: GaussianNB,
        features: np.ndarray,
        labels: np.ndarray,
        loss: str = CROSS_ENTROPY,
        zero_one_shift: float = 0.0,
        cache_limit: int | None = None,
    ):
        if loss not in (CROSS_ENTROPY, ZERO_ONE):
            raise ValueError(f"unknown loss kind: {loss}")
        self.model = model
        self.labels = np.asarray(labels, dtype=np.int64)
        self.loss = loss
        self.zero_one_shift = zero_one_shift
        self.cache_limit = cache_limit
        self._logdens = np.ascontiguousarray(model.feature_log_densities(features))
        self._cache: dict[tuple[int, ...], np.ndarray] = {}

    @property
    def n_instances(self) -> int:
        return self.labels.shape[0]

    def _compute(self, templates: list[tuple[int, ...]]) -> np.ndarray:
        if self.loss == CROSS_ENTROPY:
            flat = np.asarray([d for t in templates for d in t], dtype=np.int32)
            off = np.zeros(len(templates) + 1, dtype=np.int64)
            np.cumsum([len(t) for t in templates], out=off[1:])
            probs = backend.label_prob_columns(
                self._logdens, self.model.log_priors, self.labels, flat, off
            )
            return -np.log(probs + LOSS_EPS)
        # zero-one: argmax of the log posterior, ties to the lowest class
        n = self.n_instances
        out = np.empty((n, len(templates)))
        for j, tpl in enumerate(templates):
            logp = np.tile(self.model.log_priors, (n, 1))
            for d in tpl:
                logp += self._logdens[:, d, :]
            pred = np.argmax(logp, axis=1)
            out[:, j] = -(pred == self.labels).astype(float) - self.zero_one_shift
        return out

    def columns(self, templates) -> np.ndarray:
        """(n_instances, len(templates)) prediction-loss matrix."""
        templates = [tuple(t) for t in templates]
        missing = [t for t in templates if t not in self._cache]
        if missing:
            fresh = self._compute(missing)
            for j, t in enumerate(missing):
                if self.cache_limit is None or len(self._cache) < self.cache_limit:
                    self._cache[t] = fresh[:, j].copy()
            computed = dict(zip(missing, fresh.T))
        else:
            computed = {}
        cols = [
            self._cache[t] if t in self._cache else computed[t] for t in templates
        ]
        return np.column_stack(cols)

    def e_matrix(self, templates, costs: CostModel, lam: float) -> np.ndarray:
        """Subset losses e = prediction loss + lambda * template cost."""
        templates = [tuple(t) for t in templates]
        cols = self.columns(templates)
        tpl_costs = np.asarray([costs.costs[list(t)].sum() for t in templates])
        return cols + lam * tpl_costs[None, :]


def subset_loss(
    model: GaussianNB,
    values: np.ndarray,
    label: int,
    template,
    costs: CostModel,
    lam: float,
    loss: str = CROSS_ENTROPY,
    zero_one_shift: float = 0.0,
) -> float:
    """Pointwise subset loss for one instance: prediction loss plus
    lambda-weighted acquisition cost of the template."""
    tpl = validate_template(template, model.n_features)
    idx = list(tpl)
    probs = model.predict_proba(values[idx], idx)
    if loss == CROSS_ENTROPY:
        pred = task_loss(probs, label)
    else:
        pred = zero_one_loss(probs, label, zero_one_shift)
    return pred + lam * float(costs.costs[idx].sum())


def empirical_objective(e_rows: np.ndarray) -> float:
    """Empirical collection objective: mean over instances of the minimum
    subset loss across the collection's columns."""
    if e_rows.ndim != 2 or e_rows.shape[1] == 0:
        raise ValueError("need at least one template column")
    return float(e_rows.min(axis=1).mean())


def greedy_search(
    evaluator: SubsetLossEvaluator,
    config: SearchConfig,
    costs: CostModel,
    candidates: list[tuple[int, ...]] | None = None,
) -> tuple[list[tuple[int, ...]], list[float]]:
    """Greedy template selection over a candidate pool.

    Starts from the single candidate with the lowest mean subset loss and
    repeatedly adds the candidate with the best marginal improvement of
    the collection objective; ties go to the lowest candidate index.
    Returns the selected templates in order plus the objective after each
    addition.
    """
    n_features = evaluator.model.n_features
    if candidates is None:
        candidates = sample_candidates(
            n_features, config.o_init, config.n_candidates, config.seed
        )
    if not candidates:
        raise ValueError("empty candidate pool")
    candidates = [validate_template(t, n_features, config.o_init) for t in candidates]
    seen: set[tuple[int, ...]] = set()
    candidates = [t for t in candidates if not (t in seen or seen.add(t))]

    e = evaluator.e_matrix(candidates, costs, config.lam)
    n, s = e.shape
    t_goal = min(config.n_templates, s)

    means = e.mean(axis=0)
    first = int(np.argmin(means))
    chosen = [first]
    best = e[:, first].copy()
    trace = [float(means[first])]
    chunk = 512
    while len(chosen) < t_goal:
        gains = np.empty(s)
        for lo in range(0, s, chunk):
            hi = min(lo + chunk, s)
            gains[lo:hi] = np.minimum(e[:, lo:hi], best[:, None]).mean(axis=0)
        gains[chosen] = np.inf
        nxt = int(np.argmin(gains))
        chosen.append(nxt)
        best = np.minimum(best, e[:, nxt])
        trace.append(float(gains[nxt]))
    return [candidates[j] for j in chosen], trace


def iterative_mutate_search(
    evaluator: SubsetLossEvaluator,
    config: SearchConfig,
    costs: CostModel,
) -> tuple[list[tuple[int, ...]], list[float]]:
    """Greedy round on random candidates, then n_rounds of mutation rounds.

    Each mutation round greedily re-selects from the children of the
    previous round's collection (parents stay in the pool, so a round can
    never lose access to its predecessor). Returns the best collection
    across rounds by the empirical objective, ties to the earliest round.
    """
    rng = np.random.default_rng(config.seed)
    round_seeds = rng.integers(0, 2**63 - 1, size=config.n_rounds + 1)

    pool = sample_candidates(
        evaluator.model.n_features, config.o_init, config.n_candidates, int(round_seeds[0])
    )
    templates, trace = greedy_search(evaluator, config, costs, candidates=pool)
    rounds = [(templates, trace[-1])]
    for r in range(1, config.n_rounds + 1):
        children = mutate(
            templates,
            config.o_init,
            config.n_candidates,
            config.drop_probability,
            int(round_seeds[r]),
        )
        seen = set(children)
        pool = children + [t for t in templates if t not in seen]
        templates, trace = greedy_search(evaluator, config, costs, candidates=pool)
        rounds.append((templates, trace[-1]))
    per_round = [g for _, g in rounds]
    best = min(range(len(rounds)), key=lambda i: (rounds[i][1], i))
    return list(rounds[best][0]), per_round


def build_library(
    evaluator: SubsetLossEvaluator,
    config: SearchConfig,
    costs: CostModel,
    extra_meta: dict | None = None,
) -> TemplateLibrary:
    """Run the full search and wrap the result with its provenance."""
    templates, per_round = iterative_mutate_search(evaluator, config, costs)
    meta = {
        "T": config.n_templates,
        "S": config.n_candidates,
        "R": config.n_rounds,
        "seed": config.seed,
        "objective_trace": per_round,
    }
    if extra_meta:
        meta.update(extra_meta)
    return TemplateLibrary(
        o_init=config.o_init,
        lam=config.lam,
        templates=tuple(templates),
        search_meta=meta,
    )
