"""Benchmark protocol: lambda sweeps, the static-selection baseline, the
candidate-budget ablation, and metric/curve emission.

Timing covers decision-making only (template selection plus the action
rule, including the kNN search); data loading, model fitting, and library
search are excluded. Sweep cells are deterministic per seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from tafa.dataset import CostModel, Dataset, Split
from tafa.distill import PER_CARDINALITY, dagger_train, student_rollout
from tafa.policy import KnnPolicy, build_policy, rollout, reward
from tafa.predictor import fit_gaussian_nb, predict_class
from tafa.search import (
    SearchConfig,
    SubsetLossEvaluator,
    TemplateLibrary,
    iterative_mutate_search,
)

TAFA_GREEDY = "tafa-greedy"
TAFA_MUTATE = "tafa-mutate"
TAFA_INTERP = "tafa-interp"
STATIC = "static"
METHODS = (TAFA_GREEDY, TAFA_MUTATE, TAFA_INTERP, STATIC)


@dataclass
class SweepConfig:
    lambda_low: float
    lambda_high: float
    lambda_step: float
    k: int = 10
    seeds: tuple[int, ...] = (0,)
    methods: tuple[str, ...] = (TAFA_MUTATE, STATIC)
    n_templates: int = 16
    n_candidates: int = 2500
    n_rounds: int = 3
    leaf_limit: int = 4
    dagger_iterations: int = 5
    dagger_sample_limit: int | None = 600
    variance_floor: float = 1e-6

    def __post_init__(self):
        if self.lambda_step <= 0:
            raise ValueError("lambda step must be positive")
        if self.lambda_high <= self.lambda_low:
            raise ValueError("empty lambda grid")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")

    def lambda_values(self) -> list[float]:
        values = np.arange(self.lambda_low, self.lambda_high, self.lambda_step)
        return [float(round(v, 12)) for v in values]


@dataclass
class EvalRecord:
    method: str
    lam: float
    accuracy: float
    mean_acquisitions: float
    mean_decision_time: float
    mean_reward: float
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError("accuracy outside [0, 1]")
        if self.mean_acquisitions < 1.0:
            raise ValueError("every rollout acquires at least the initial feature")


def pick_o_init(evaluator: SubsetLossEvaluator, costs: CostModel, lam: float = 0.0) -> int:
    """Most informative single feature by mean subset loss on the training
    split (under uniform costs the choice is lambda-independent)."""
    d = evaluator.model.n_features
    singles = [(j,) for j in range(d)]
    e = evaluator.e_matrix(singles, costs, lam)
    return int(np.argmin(e.mean(axis=0)))


def evaluate_policy_rollouts(
    policy: KnnPolicy,
    dataset: Dataset,
    rows,
    lam: float,
    student=None,
) -> tuple[float, float, float, float]:
    """(accuracy, mean acquisitions, mean decision seconds, mean reward)
    over the given rows."""
    correct = 0
    acqs = []
    decision = []
    rewards = []
    for i in rows:
        x = dataset.features[i]
        y = int(dataset.labels[i])
        if student is None:
            trace = rollout(policy, x)
        else:
            trace = student_rollout(policy, student, x)
        correct += int(predict_class(trace.final_prediction) == y)
        acqs.append(trace.n_acquired)
        decision.append(trace.decision_seconds / max(len(trace.steps), 1))
        rewards.append(reward(trace, y, lam))
    n = len(acqs)
    return correct / n, float(np.mean(acqs)), float(np.mean(decision)), float(np.mean(rewards))


def static_baseline(
    evaluator: SubsetLossEvaluator,
    costs: CostModel,
    lam: float,
    o_init: int,
    budget: int | None = None,
) -> tuple[int, ...]:
    """Greedy forward selection of one feature set by mean subset loss.

    Stops early once no extension improves the lambda-weighted objective,
    or at the budget. Equivalent to running the template search with a
    single template over nested candidates.
    """
    d = evaluator.model.n_features
    budget = d if budget is None else budget
    if budget < 1:
        raise ValueError("budget must be at least 1")
    current = (o_init,)
    current_mean = float(evaluator.e_matrix([current], costs, lam).mean(axis=0)[0])
    while len(current) < budget:
        extensions = [
            tuple(sorted((*current, j))) for j in range(d) if j not in current
        ]
        means = evaluator.e_matrix(extensions, costs, lam).mean(axis=0)
        j = int(np.argmin(means))
        if means[j] >= current_mean:
            break
        current = extensions[j]
        current_mean = float(means[j])
    return current


def static_forward_path(
    evaluator: SubsetLossEvaluator, costs: CostModel, o_init: int
) -> list[tuple[int, ...]]:
    """Nested prefixes of cost-free greedy forward selection, sizes 1..D."""
    d = evaluator.model.n_features
    current = (o_init,)
    path = [current]
    while len(current) < d:
        extensions = [
            tuple(sorted((*current, j))) for j in range(d) if j not in current
        ]
        means = evaluator.e_matrix(extensions, costs, 0.0).mean(axis=0)
        current = extensions[int(np.argmin(means))]
        path.append(current)
    return path


def subset_accuracy(evaluator: SubsetLossEvaluator, template) -> float:
    """Accuracy of predicting from a fixed feature subset, over the
    evaluator's instance set."""
    logp = np.tile(evaluator.model.log_priors, (evaluator.n_instances, 1))
    for d in template:
        logp += evaluator._logdens[:, d, :]
    pred = np.argmax(logp, axis=1)
    return float(np.mean(pred == evaluator.labels))


def run_sweep(
    dataset: Dataset,
    split: Split,
    config: SweepConfig,
    costs: CostModel | None = None,
    o_init: int | None = None,
    jobs: int = 1,
) -> list[EvalRecord]:
    """Train and evaluate every requested (method, lambda, seed) cell.

    Per-method failures abort only their cell; surviving records are
    returned. With jobs=1 the cells run sequentially and share
    prediction-loss columns across lambda through one evaluator cache;
    jobs>1 runs cells in worker processes (each rebuilds its own state, so
    records are identical but per-cell work is not shared). Decision-time
    comparisons should use jobs=1 so cells never compete for cores.
    """
    costs = costs or CostModel.uniform(dataset.n_features)
    records: list[EvalRecord] = []
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        payloads = [
            (dataset, split, config, costs, o_init, method, lam, seed)
            for seed in config.seeds
            for lam in config.lambda_values()
            for method in config.methods
        ]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for outcome in pool.map(_cell_job, payloads):
                if isinstance(outcome, EvalRecord):
                    records.append(outcome)
                else:
                    print(outcome)
        return records
    for seed in config.seeds:
        model = fit_gaussian_nb(dataset, split.train_indices, config.variance_floor)
        evaluator = SubsetLossEvaluator(
            model,
            dataset.features[split.train_indices],
            dataset.labels[split.train_indices],
            cache_limit=20_000,
        )
        cell_o_init = pick_o_init(evaluator, costs) if o_init is None else o_init
        for lam in config.lambda_values():
            for method in config.methods:
                try:
                    records.append(
                        _run_cell(
                            dataset, split, config, costs, model, evaluator,
                            cell_o_init, method, lam, seed,
                        )
                    )
                except Exception as exc:  # cell failures don't kill the sweep
                    print(f"sweep cell failed ({method}, lam={lam}, seed={seed}): {exc}")
    return records


def _cell_job(payload):
    """Self-contained sweep cell for worker processes."""
    dataset, split, config, costs, o_init, method, lam, seed = payload
    try:
        model = fit_gaussian_nb(dataset, split.train_indices, config.variance_floor)
        evaluator = SubsetLossEvaluator(
            model,
            dataset.features[split.train_indices],
            dataset.labels[split.train_indices],
        )
        cell_o_init = pick_o_init(evaluator, costs) if o_init is None else o_init
        return _run_cell(
            dataset, split, config, costs, model, evaluator,
            cell_o_init, method, lam, seed,
        )
    except Exception as exc:
        return f"sweep cell failed ({method}, lam={lam}, seed={seed}): {exc}"


def _run_cell(
    dataset, split, config, costs, model, evaluator, o_init, method, lam, seed
) -> EvalRecord:
    test_rows = split.test_indices
    if method == STATIC:
        template = static_baseline(evaluator, costs, lam, o_init)
        library = TemplateLibrary(o_init=o_init, lam=lam, templates=(template,))
        policy = build_policy(
            dataset, split, library, costs, k=config.k, model=model, evaluator=evaluator
        )
        acc, acq, dt, rew = evaluate_policy_rollouts(policy, dataset, test_rows, lam)
    else:
        search_cfg = SearchConfig(
            n_templates=config.n_templates,
            n_candidates=config.n_candidates,
            n_rounds=0 if method == TAFA_GREEDY else config.n_rounds,
            lam=lam,
            o_init=o_init,
            seed=seed,
        )
        templates, _ = iterative_mutate_search(evaluator, search_cfg, costs)
        library = TemplateLibrary(o_init=o_init, lam=lam, templates=tuple(templates))
        policy = build_policy(
            dataset, split, library, costs, k=config.k, model=model, evaluator=evaluator
        )
        if method == TAFA_INTERP:
            student = dagger_train(
                policy,
                dataset.features[split.train_indices],
                PER_CARDINALITY,
                leaf_limit=config.leaf_limit,
                iterations=config.dagger_iterations,
                seed=seed,
                sample_limit=config.dagger_sample_limit,
            )
            acc, acq, dt, rew = evaluate_policy_rollouts(
                policy, dataset, test_rows, lam, student=student
            )
        else:
            acc, acq, dt, rew = evaluate_policy_rollouts(policy, dataset, test_rows, lam)
    return EvalRecord(
        method=method,
        lam=lam,
        accuracy=acc,
        mean_acquisitions=acq,
        mean_decision_time=dt,
        mean_reward=rew,
        seed=seed,
    )


def budget_ablation(
    dataset: Dataset,
    split: Split,
    budgets: list[int],
    n_rounds: int,
    seeds,
    lam: float,
    n_templates: int = 16,
    costs: CostModel | None = None,
    o_init: int | None = None,
) -> list[dict]:
    """Single-round search with the full budget versus the same budget
    split evenly across mutation rounds (round one random, the rest
    mutated)."""
    if any(b % n_rounds for b in budgets):
        raise ValueError("budgets must be divisible by the round count")
    costs = costs or CostModel.uniform(dataset.n_features)
    rows = []
    for seed in seeds:
        model = fit_gaussian_nb(dataset, split.train_indices)
        evaluator = SubsetLossEvaluator(
            model,
            dataset.features[split.train_indices],
            dataset.labels[split.train_indices],
            cache_limit=20_000,
        )
        cell_o_init = pick_o_init(evaluator, costs) if o_init is None else o_init
        for budget in budgets:
            arms = {
                "practical": SearchConfig(
                    n_templates=n_templates, n_candidates=budget, n_rounds=0,
                    lam=lam, o_init=cell_o_init, seed=seed,
                ),
                "iterative": SearchConfig(
                    n_templates=n_templates, n_candidates=budget // n_rounds,
                    n_rounds=n_rounds - 1, lam=lam, o_init=cell_o_init, seed=seed,
                ),
            }
            for arm, cfg in arms.items():
                templates, per_round = iterative_mutate_search(evaluator, cfg, costs)
                library = TemplateLibrary(
                    o_init=cell_o_init, lam=lam, templates=tuple(templates)
                )
                policy = build_policy(
                    dataset, split, library, costs, k=10, model=model, evaluator=evaluator
                )
                acc, acq, _, _ = evaluate_policy_rollouts(
                    policy, dataset, split.test_indices, lam
                )
                rows.append(
                    {
                        "arm": arm,
                        "budget": budget,
                        "seed": seed,
                        "empirical_g": min(per_round),
                        "accuracy": acc,
                        "mean_acquisitions": acq,
                    }
                )
    return rows


RECORD_FIELDS = [f.name for f in fields(EvalRecord)]


def emit_curves(records: list[EvalRecord], out_dir: str | Path) -> list[Path]:
    """records.csv plus accuracy-vs-acquisitions and decision-time data."""
    if not records:
        raise ValueError("no records to emit")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    records_path = out_dir / "records.csv"
    with records_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_FIELDS)
        for r in records:
            writer.writerow([_cell(getattr(r, name)) for name in RECORD_FIELDS])
    paths.append(records_path)

    acc_path = out_dir / "accuracy_vs_acquisitions.csv"
    with acc_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "seed", "mean_acquisitions", "accuracy"])
        ordered = sorted(records, key=lambda r: (r.method, r.seed, r.mean_acquisitions))
        for r in ordered:
            writer.writerow(
                [r.method, r.seed, repr(r.mean_acquisitions), repr(r.accuracy)]
            )
    paths.append(acc_path)

    time_path = out_dir / "decision_time.csv"
    with time_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "seed", "lam", "log10_decision_time"])
        for r in records:
            writer.writerow(
                [r.method, r.seed, repr(r.lam), repr(float(np.log10(r.mean_decision_time)))]
            )
    paths.append(time_path)
    return paths


def _cell(value):
    if isinstance(value, float):
        return repr(value)
    return value


def load_records(path: str | Path) -> list[EvalRecord]:
    """Inverse of the records.csv emitted by emit_curves."""
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RECORD_FIELDS:
            raise ValueError(f"unexpected columns: {reader.fieldnames}")
        for row in reader:
            out.append(
                EvalRecord(
                    method=row["method"],
                    lam=float(row["lam"]),
                    accuracy=float(row["accuracy"]),
                    mean_acquisitions=float(row["mean_acquisitions"]),
                    mean_decision_time=float(row["mean_decision_time"]),
                    mean_reward=float(row["mean_reward"]),
                    seed=int(row["seed"]),
                )
            )
    return out
