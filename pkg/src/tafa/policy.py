"""The deployable kNN template policy.

Per-template prediction losses are cached over the training set once; at
inference the loss of committing to a template is estimated as the mean
cached loss of the k training rows nearest in the observed coordinates
(standardised). Template selection adds the lambda-weighted remaining
acquisition cost, and the acquisition step takes the cheapest unobserved
feature of the selected template, terminating once it is fully observed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from tafa import backend
from tafa.dataset import CostModel, Dataset, FeatureScaler, Split
from tafa.predictor import GaussianNB, fit_gaussian_nb, task_loss
from tafa.search import SubsetLossEvaluator, TemplateLibrary

TERMINATE = -1


@dataclass(frozen=True)
class Action:
    """Either acquire a feature or terminate (feature is None)."""

    feature: int | None

    @property
    def is_terminate(self) -> bool:
        return self.feature is None


@dataclass
class PolicyState:
    """Observed indices in acquisition order with their values.

    values hold the model-space numbers used for prediction; std_values the
    standardised coordinates used for neighbour distances.
    """

    observed: list[int] = field(default_factory=list)
    values: dict[int, float] = field(default_factory=dict)
    std_values: dict[int, float] = field(default_factory=dict)
    step: int = 0

    def observe(self, feature: int, value: float, std_value: float) -> None:
        if feature in self.values:
            raise ValueError(f"feature {feature} observed twice")
        self.observed.append(feature)
        self.values[feature] = value
        self.std_values[feature] = std_value

    def sorted_observed(self) -> np.ndarray:
        return np.asarray(sorted(self.observed), dtype=np.int64)

    def query_vector(self) -> tuple[np.ndarray, np.ndarray]:
        obs = self.sorted_observed()
        return obs, np.asarray([self.std_values[int(d)] for d in obs])

    def model_inputs(self) -> tuple[np.ndarray, np.ndarray]:
        obs = self.sorted_observed()
        return np.asarray([self.values[int(d)] for d in obs]), obs


@dataclass(frozen=True)
class TemplateLossCache:
    """Cached prediction losses (no cost term) per (train row, template),
    alongside the standardised training matrix used for distances."""

    cached_losses: np.ndarray  # (n_train, n_templates)
    train_features: np.ndarray  # (n_train, D) standardised


@dataclass(frozen=True)
class StepRecord:
    selected_template: int
    action: Action
    scores: tuple[float, ...]


@dataclass
class RolloutTrace:
    steps: list[StepRecord]
    final_prediction: np.ndarray
    acquired: tuple[int, ...]
    total_cost: float
    capped: bool = False
    decision_seconds: float = 0.0

    @property
    def n_acquired(self) -> int:
        return len(self.acquired)

    def to_dict(self) -> dict:
        return {
            "steps": [
                {
                    "selected_template": s.selected_template,
                    "action": "terminate" if s.action.is_terminate else "acquire",
                    "feature": s.action.feature,
                    "scores": list(s.scores),
                }
                for s in self.steps
            ],
            "final_prediction": self.final_prediction.tolist(),
            "acquired": list(self.acquired),
            "total_cost": self.total_cost,
            "capped": self.capped,
        }


def knn_loss_estimate(
    state: PolicyState, template_index: int, cache: TemplateLossCache, k: int
) -> float:
    """Mean cached loss of the k nearest training rows for one template.

    Distances use the observed coordinates only; k larger than the training
    set falls back to all rows; distance ties break by training-row index.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if not state.observed:
        raise ValueError("need at least one observed feature")
    if cache.cached_losses.shape[0] == 0:
        raise ValueError("empty loss cache")
    obs, query = state.query_vector()
    kk = min(k, cache.train_features.shape[0])
    idx = backend.knn_select(cache.train_features, obs, query, kk)
    return float(cache.cached_losses[idx, template_index].mean())


@dataclass
class KnnPolicy:
    """Everything needed to run rollouts: library, predictor, loss cache,
    costs, the train-split scaler, and the kNN size."""

    library: TemplateLibrary
    model: GaussianNB
    cache: TemplateLossCache
    costs: CostModel
    scaler: FeatureScaler
    k: int

    def __post_init__(self):
        self._template_sets = [frozenset(t) for t in self.library.templates]

    @property
    def lam(self) -> float:
        return self.library.lam

    @property
    def n_features(self) -> int:
        return self.model.n_features

    def neighbor_losses(self, state: PolicyState, k: int | None = None) -> np.ndarray:
        """Mean cached loss over the k nearest rows, for every template."""
        obs, query = state.query_vector()
        kk = min(k or self.k, self.cache.train_features.shape[0])
        idx = backend.knn_select(self.cache.train_features, obs, query, kk)
        neigh = self.cache.cached_losses[idx]
        est = np.empty(neigh.shape[1])
        for t in range(neigh.shape[1]):
            est[t] = neigh[:, t].mean()
        return est

    def select_template(
        self,
        state: PolicyState,
        lam: float | None = None,
        k: int | None = None,
        est: np.ndarray | None = None,
    ) -> tuple[int, np.ndarray]:
        """Template minimising estimated loss + lambda * remaining cost;
        ties break to the lowest template index."""
        lam = self.lam if lam is None else lam
        if est is None:
            est = self.neighbor_losses(state, k)
        observed = set(state.observed)
        scores = np.empty(len(self.library.templates))
        for t, tpl in enumerate(self.library.templates):
            remaining = 0.0
            for j in tpl:
                if j not in observed:
                    remaining += self.costs.costs[j]
            scores[t] = est[t] + lam * remaining
        return int(np.argmin(scores)), scores

    def next_action(self, state: PolicyState, template_index: int) -> Action:
        """Cheapest unobserved feature of the template; terminate when the
        template is fully observed. Cost ties break to the lowest index."""
        observed = set(state.observed)
        best_feature = None
        best_cost = np.inf
        for j in self.library.templates[template_index]:
            if j in observed:
                continue
            c = self.costs.costs[j]
            if c < best_cost:
                best_cost = c
                best_feature = j
        return Action(feature=best_feature)

    def decide(
        self, state: PolicyState, lam: float | None = None, k: int | None = None
    ) -> tuple[int, np.ndarray, Action]:
        selected, scores = self.select_template(state, lam, k)
        return selected, scores, self.next_action(state, selected)

    def initial_state(self, instance: np.ndarray) -> PolicyState:
        state = PolicyState()
        o = self.library.o_init
        value = float(instance[o])
        state.observe(o, value, self.scaler.transform_value(o, value))
        return state

    def predict(self, state: PolicyState) -> np.ndarray:
        values, observed = state.model_inputs()
        return self.model.predict_proba(values, observed)


def rollout(
    policy: KnnPolicy,
    instance: np.ndarray,
    lam: float | None = None,
    k: int | None = None,
    max_steps: int | None = None,
) -> RolloutTrace:
    """Run the acquisition loop on one (model-space) instance.

    The initial feature is acquired and charged up front; afterwards the
    policy alternates template selection and cheapest-feature acquisition
    until the selected template is fully observed, every feature is
    observed, or the acquisition cap is hit.
    """
    max_steps = policy.n_features if max_steps is None else max_steps
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    state = policy.initial_state(instance)
    total_cost = float(policy.costs.costs[policy.library.o_init])
    steps: list[StepRecord] = []
    decision_ns = 0
    capped = True
    while len(state.observed) <= max_steps:
        t0 = time.perf_counter_ns()
        selected, scores, action = policy.decide(state, lam, k)
        decision_ns += time.perf_counter_ns() - t0
        steps.append(StepRecord(selected, action, tuple(scores)))
        if action.is_terminate:
            capped = False
            break
        if len(state.observed) == max_steps:
            break
        f = int(action.feature)
        value = float(instance[f])
        state.observe(f, value, policy.scaler.transform_value(f, value))
        state.step += 1
        total_cost += float(policy.costs.costs[f])
    return RolloutTrace(
        steps=steps,
        final_prediction=policy.predict(state),
        acquired=tuple(state.observed),
        total_cost=total_cost,
        capped=capped,
        decision_seconds=decision_ns / 1e9,
    )


def build_policy(
    dataset: Dataset,
    split: Split,
    library: TemplateLibrary,
    costs: CostModel | None = None,
    k: int = 10,
    model: GaussianNB | None = None,
    evaluator: SubsetLossEvaluator | None = None,
) -> KnnPolicy:
    """Assemble the deployable policy from a dataset split and a library."""
    costs = costs or CostModel.uniform(dataset.n_features)
    model = model or fit_gaussian_nb(dataset, split.train_indices)
    train_x = dataset.features[split.train_indices]
    if evaluator is None:
        evaluator = SubsetLossEvaluator(
            model, train_x, dataset.labels[split.train_indices]
        )
    losses = evaluator.columns(library.templates)
    scaler = FeatureScaler.fit(train_x)
    return KnnPolicy(
        library=library,
        model=model,
        cache=TemplateLossCache(
            cached_losses=np.ascontiguousarray(losses),
            train_features=np.ascontiguousarray(scaler.transform(train_x)),
        ),
        costs=costs,
        scaler=scaler,
        k=k,
    )


def reward(trace: RolloutTrace, label: int, lam: float) -> float:
    """Scalar policy quality: negative task loss minus weighted total cost."""
    return -task_loss(trace.final_prediction, label) - lam * trace.total_cost


def tafa_criterion(
    dist,
    observed: dict[int, float],
    templates,
    lam: float,
    costs: CostModel,
) -> float:
    """Template-restricted expected-value criterion on an enumerable joint
    distribution: max over templates of the negative expected loss after
    acquiring the template's unobserved part, minus its weighted cost.

    dist must expose support rows (xs, ys, probs) and a Bayes predictor via
    posterior(); intended for the bound checks on toy distributions.
    """
    best = -np.inf
    for tpl in templates:
        extra = tuple(sorted(set(tpl) - set(observed)))
        target = tuple(sorted(set(observed) | set(tpl)))
        cost = float(sum(costs.costs[j] for j in extra))
        mask = dist.consistent_rows(observed)
        weights = dist.probs[mask]
        total = weights.sum()
        if total <= 0:
            continue
        exp_loss = 0.0
        for row, w in zip(np.flatnonzero(mask), weights):
            assignment = {int(d): float(dist.xs[row, d]) for d in target}
            probs = dist.posterior(assignment)
            exp_loss += (w / total) * task_loss(probs, int(dist.ys[row]))
        value = -exp_loss - lam * cost
        best = max(best, value)
    return float(best)
