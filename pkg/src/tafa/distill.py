"""Behaviour cloning of the kNN policy into compact decision trees.

The student sees a 2D-length state vector (observed values, zero-filled
where unobserved, concatenated with the observation mask) and predicts an
action: a template index for the per-cardinality and global variants, a
feature index for the feature-act variant, or terminate. Training uses
DAgger: the first iteration collects states from teacher rollouts, later
iterations roll out the current student and query the teacher at every
visited state, aggregating everything before refitting.
"""

from __future__ import annotations

import heapq
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from tafa.policy import Action, KnnPolicy, PolicyState, RolloutTrace, StepRecord, TERMINATE

ENSEMBLE_SCHEMA = "tafa.ensemble/1"

PER_CARDINALITY = "per-cardinality"
GLOBAL = "global"
FEATURE_ACT = "feature-act"
VARIANTS = (PER_CARDINALITY, GLOBAL, FEATURE_ACT)


def encode_state(state: PolicyState, n_features: int) -> np.ndarray:
    """values (standardised, zeros where unobserved) ++ 0/1 mask."""
    vec = np.zeros(2 * n_features)
    for f in state.observed:
        vec[f] = state.std_values[f]
        vec[n_features + f] = 1.0
    return vec


def teacher_label(policy: KnnPolicy, state: PolicyState, variant: str) -> int:
    """The expert's action label at a state.

    Template variants: the selected template index, or terminate when that
    template is already fully observed. Feature-act: the feature the expert
    would acquire, or terminate.
    """
    selected, _, action = policy.decide(state)
    if action.is_terminate:
        return TERMINATE
    if variant == FEATURE_ACT:
        return int(action.feature)
    return selected


@dataclass
class _Node:
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None
    action: int = TERMINATE

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"action": self.action}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "_Node":
        if "action" in d:
            return cls(action=int(d["action"]))
        return cls(
            feature=int(d["feature"]),
            threshold=float(d["threshold"]),
            left=cls.from_dict(d["left"]),
            right=cls.from_dict(d["right"]),
        )


def _majority(labels: np.ndarray) -> int:
    values, counts = np.unique(labels, return_counts=True)
    return int(values[np.argmax(counts)])


def _gini_sum(counts: np.ndarray, n: int) -> float:
    # n * gini = n - sum(c^2)/n
    return n - float((counts.astype(float) ** 2).sum()) / n


def _best_split(x: np.ndarray, y: np.ndarray):
    """Best axis-aligned split by weighted Gini decrease.

    Thresholds are midpoints between consecutive distinct sorted values;
    ties break by (feature, threshold). Pure nodes and nodes with no valid
    boundary return None; zero-gain splits of impure nodes are allowed, so
    growth is bounded by the leaf budget or purity, not by gain.
    """
    n = x.shape[0]
    classes, y_enc = np.unique(y, return_inverse=True)
    k = classes.shape[0]
    if k == 1 or n < 2:
        return None
    parent_counts = np.bincount(y_enc, minlength=k)
    parent_impurity = _gini_sum(parent_counts, n)
    best = None  # (decrease, feature, threshold)
    for f in range(x.shape[1]):
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        one_hot = np.zeros((n, k))
        one_hot[np.arange(n), y_enc[order]] = 1.0
        cum = one_hot.cumsum(axis=0)
        boundary = np.flatnonzero(xs[:-1] < xs[1:])
        if boundary.size == 0:
            continue
        left_counts = cum[boundary]
        n_left = boundary + 1.0
        n_right = n - n_left
        left_imp = n_left - (left_counts**2).sum(axis=1) / n_left
        right_counts = parent_counts[None, :] - left_counts
        right_imp = n_right - (right_counts**2).sum(axis=1) / n_right
        decrease = parent_impurity - left_imp - right_imp
        j = int(np.argmax(decrease))
        lo, hi = xs[boundary[j]], xs[boundary[j] + 1]
        thr = 0.5 * (lo + hi)
        if not lo < thr < hi:
            thr = lo
        if best is None or decrease[j] > best[0] + 1e-15:
            best = (float(decrease[j]), f, float(thr))
    return best


@dataclass
class DecisionTree:
    """Binary axis-aligned CART tree grown best-first to a leaf budget."""

    root: _Node
    leaf_limit: int

    @property
    def n_leaves(self) -> int:
        def count(node):
            return 1 if node.is_leaf else count(node.left) + count(node.right)

        return count(self.root)

    @property
    def n_nodes(self) -> int:
        def count(node):
            return 1 if node.is_leaf else 1 + count(node.left) + count(node.right)

        return count(self.root)

    def predict(self, vec: np.ndarray) -> int:
        node = self.root
        while not node.is_leaf:
            node = node.left if vec[node.feature] <= node.threshold else node.right
        return node.action

    def to_dict(self) -> dict:
        return {"leaf_limit": self.leaf_limit, "root": self.root.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(root=_Node.from_dict(d["root"]), leaf_limit=int(d["leaf_limit"]))


def fit_tree(states: np.ndarray, labels: np.ndarray, leaf_limit: int) -> DecisionTree:
    """Greedy CART induction with Gini impurity, best-first growth until the
    leaf budget is reached or every leaf is pure."""
    if leaf_limit < 2:
        raise ValueError("leaf limit must be at least 2")
    states = np.asarray(states, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if states.ndim != 2 or states.shape[0] == 0:
        raise ValueError("need a nonempty 2-d state matrix")

    root = _Node(action=_majority(labels))
    heap: list = []
    counter = 0

    def consider(node: _Node, rows: np.ndarray):
        nonlocal counter
        found = _best_split(states[rows], labels[rows])
        if found is not None:
            decrease, f, thr = found
            heapq.heappush(heap, (-decrease, counter, node, f, thr, rows))
            counter += 1

    all_rows = np.arange(states.shape[0])
    consider(root, all_rows)
    leaves = 1
    while heap and leaves < leaf_limit:
        _, _, node, f, thr, rows = heapq.heappop(heap)
        mask = states[rows, f] <= thr
        left_rows, right_rows = rows[mask], rows[~mask]
        node.feature = f
        node.threshold = thr
        node.left = _Node(action=_majority(labels[left_rows]))
        node.right = _Node(action=_majority(labels[right_rows]))
        leaves += 1
        consider(node.left, left_rows)
        consider(node.right, right_rows)
    return DecisionTree(root=root, leaf_limit=leaf_limit)


@dataclass
class TreeEnsemble:
    """Student policy: one tree per acquisition cardinality (or one shared
    tree for the global variant). training_sizes records the aggregated
    sample count after each training iteration."""

    variant: str
    trees: dict[int, DecisionTree]
    leaf_limit: int
    n_features: int
    n_templates: int
    training_sizes: tuple[int, ...] = ()

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant: {self.variant}")

    def decide(self, vec: np.ndarray, cardinality: int) -> int:
        """Action label at a state; missing cardinalities terminate."""
        key = 0 if self.variant == GLOBAL else cardinality
        tree = self.trees.get(key)
        if tree is None:
            return TERMINATE
        return tree.predict(vec)

    @property
    def total_leaves(self) -> int:
        return sum(tree.n_leaves for tree in self.trees.values())

    def action_space(self) -> list[int]:
        size = self.n_features if self.variant == FEATURE_ACT else self.n_templates
        return [TERMINATE, *range(size)]

    def to_dict(self) -> dict:
        return {
            "schema": ENSEMBLE_SCHEMA,
            "variant": self.variant,
            "leaf_limit": self.leaf_limit,
            "n_features": self.n_features,
            "n_templates": self.n_templates,
            "action_space": self.action_space(),
            "trees": {str(m): t.to_dict() for m, t in sorted(self.trees.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsemble":
        if d.get("schema") != ENSEMBLE_SCHEMA:
            raise ValueError(f"unexpected ensemble schema: {d.get('schema')!r}")
        return cls(
            variant=d["variant"],
            trees={int(m): DecisionTree.from_dict(t) for m, t in d["trees"].items()},
            leaf_limit=int(d["leaf_limit"]),
            n_features=int(d["n_features"]),
            n_templates=int(d["n_templates"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "TreeEnsemble":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _collect_trace(
    policy: KnnPolicy,
    instance: np.ndarray,
    variant: str,
    ensemble: TreeEnsemble | None,
):
    """Roll out the teacher (ensemble None) or the student, recording the
    teacher label at every visited state."""
    n_features = policy.n_features
    state = policy.initial_state(instance)
    samples = []
    while True:
        vec = encode_state(state, n_features)
        m = len(state.observed)
        label = teacher_label(policy, state, variant)
        samples.append((vec, m, label))
        if ensemble is None:
            act_label = label
        else:
            act_label = ensemble.decide(vec, m)
        feature = _action_feature(policy, state, act_label, variant)
        if feature is None or m >= n_features:
            break
        value = float(instance[feature])
        state.observe(feature, value, policy.scaler.transform_value(feature, value))
        state.step += 1
    return samples


def _action_feature(policy: KnnPolicy, state: PolicyState, label: int, variant: str):
    """Feature to acquire for an action label, or None to stop."""
    if label == TERMINATE:
        return None
    if variant == FEATURE_ACT:
        if label in state.values:  # student picked something already observed
            return None
        return int(label)
    action = policy.next_action(state, int(label))
    return None if action.is_terminate else int(action.feature)


def dagger_train(
    policy: KnnPolicy,
    instances: np.ndarray,
    variant: str = PER_CARDINALITY,
    leaf_limit: int = 4,
    iterations: int = 5,
    seed: int = 0,
    sample_limit: int | None = None,
) -> TreeEnsemble:
    """DAgger distillation of the kNN teacher into a tree ensemble.

    instances are model-space rows (normally the training split). The
    aggregated (state, label) set only ever grows across iterations.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant: {variant}")
    if iterations < 1:
        raise ValueError("need at least one iteration")
    instances = np.asarray(instances, dtype=float)
    if sample_limit is not None and instances.shape[0] > sample_limit:
        rng = np.random.default_rng(seed)
        pick = rng.choice(instances.shape[0], size=sample_limit, replace=False)
        instances = instances[np.sort(pick)]

    n_features = policy.n_features
    states: list[np.ndarray] = []
    cardinalities: list[int] = []
    labels: list[int] = []
    sizes: list[int] = []
    ensemble: TreeEnsemble | None = None
    for it in range(iterations):
        for row in instances:
            for vec, m, label in _collect_trace(policy, row, variant, ensemble):
                states.append(vec)
                cardinalities.append(m)
                labels.append(label)
        sizes.append(len(states))
        ensemble = _fit_ensemble(
            np.asarray(states),
            np.asarray(cardinalities),
            np.asarray(labels),
            variant,
            leaf_limit,
            n_features,
            len(policy.library.templates),
        )
        ensemble.training_sizes = tuple(sizes)
    return ensemble


def _fit_ensemble(
    states: np.ndarray,
    cardinalities: np.ndarray,
    labels: np.ndarray,
    variant: str,
    leaf_limit: int,
    n_features: int,
    n_templates: int,
) -> TreeEnsemble:
    trees: dict[int, DecisionTree] = {}
    if variant == GLOBAL:
        trees[0] = fit_tree(states, labels, leaf_limit)
    else:
        for m in np.unique(cardinalities):
            rows = cardinalities == m
            trees[int(m)] = fit_tree(states[rows], labels[rows], leaf_limit)
    return TreeEnsemble(
        variant=variant,
        trees=trees,
        leaf_limit=leaf_limit,
        n_features=n_features,
        n_templates=n_templates,
    )


def student_rollout(
    policy: KnnPolicy,
    ensemble: TreeEnsemble,
    instance: np.ndarray,
    max_steps: int | None = None,
) -> RolloutTrace:
    """Run the distilled student on one instance.

    Template variants route the predicted template through the usual
    cheapest-unobserved-feature rule; the feature-act variant acquires the
    predicted feature directly and terminates (flagged) if it would revisit.
    """
    max_steps = policy.n_features if max_steps is None else max_steps
    state = policy.initial_state(instance)
    total_cost = float(policy.costs.costs[policy.library.o_init])
    steps: list[StepRecord] = []
    decision_ns = 0
    capped = True
    while len(state.observed) <= max_steps:
        t0 = time.perf_counter_ns()
        vec = encode_state(state, policy.n_features)
        label = ensemble.decide(vec, len(state.observed))
        feature = _action_feature(policy, state, label, ensemble.variant)
        decision_ns += time.perf_counter_ns() - t0
        action = Action(feature=feature)
        steps.append(StepRecord(int(label), action, ()))
        if action.is_terminate:
            capped = False
            break
        if len(state.observed) == max_steps:
            break
        value = float(instance[feature])
        state.observe(feature, value, policy.scaler.transform_value(feature, value))
        state.step += 1
        total_cost += float(policy.costs.costs[feature])
    return RolloutTrace(
        steps=steps,
        final_prediction=policy.predict(state),
        acquired=tuple(state.observed),
        total_cost=total_cost,
        capped=capped,
        decision_seconds=decision_ns / 1e9,
    )


def export_tree_dot(
    tree: DecisionTree,
    feature_names,
    action_labels: dict[int, str],
) -> str:
    """Graphviz DOT text: split conditions on internal nodes, action names
    on leaves. State positions D..2D-1 are the observation mask."""
    names = list(feature_names)
    lines = ["digraph tree {", "  node [shape=box];"]
    counter = 0

    def pos_name(pos: int) -> str:
        if pos < len(names):
            return names[pos]
        return f"mask({names[pos - len(names)]})"

    def walk(node) -> int:
        nonlocal counter
        nid = counter
        counter += 1
        if node.is_leaf:
            label = action_labels.get(node.action, str(node.action))
            lines.append(f'  n{nid} [label="{label}"];')
        else:
            lines.append(
                f'  n{nid} [label="{pos_name(node.feature)} <= {node.threshold:.4g}"];'
            )
            left = walk(node.left)
            right = walk(node.right)
            lines.append(f'  n{nid} -> n{left} [label="yes"];')
            lines.append(f'  n{nid} -> n{right} [label="no"];')
        return nid

    walk(tree.root)
    lines.append("}")
    return "\n".join(lines)


def template_action_labels(library, feature_names) -> dict[int, str]:
    """Human-readable leaf labels: the selected template's feature names."""
    labels = {TERMINATE: "terminate"}
    for j, tpl in enumerate(library.templates):
        names = ", ".join(feature_names[d] for d in tpl)
        labels[j] = f"template {j}: {names}"
    return labels


def feature_action_labels(feature_names) -> dict[int, str]:
    labels = {TERMINATE: "terminate"}
    for d, name in enumerate(feature_names):
        labels[d] = f"acquire {name}"
    return labels
