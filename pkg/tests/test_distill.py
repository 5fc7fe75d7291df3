import numpy as np
import pytest

from tafa.dataset import CostModel, generate_cube, split
from tafa.distill import (
    FEATURE_ACT,
    GLOBAL,
    PER_CARDINALITY,
    DecisionTree,
    TreeEnsemble,
    dagger_train,
    encode_state,
    export_tree_dot,
    feature_action_labels,
    fit_tree,
    student_rollout,
    teacher_label,
    template_action_labels,
)
from tafa.policy import TERMINATE, PolicyState, build_policy, rollout
from tafa.search import SearchConfig, SubsetLossEvaluator, TemplateLibrary, iterative_mutate_search
from tafa.predictor import fit_gaussian_nb


@pytest.fixture(scope="module")
def cube_policy():
    ds = generate_cube(1200, 0.1, seed=5)
    sp = split(ds, 0.25, seed=5)
    model = fit_gaussian_nb(ds, sp.train_indices)
    ev = SubsetLossEvaluator(model, ds.features[sp.train_indices], ds.labels[sp.train_indices])
    costs = CostModel.uniform(20)
    cfg = SearchConfig(n_templates=6, n_candidates=300, n_rounds=2, lam=0.1, o_init=7, seed=5)
    templates, _ = iterative_mutate_search(ev, cfg, costs)
    lib = TemplateLibrary(o_init=7, lam=0.1, templates=tuple(templates))
    policy = build_policy(ds, sp, lib, costs, k=10, model=model, evaluator=ev)
    return ds, sp, policy


class TestEncodeState:
    def test_mask_marks_observed(self):
        st = PolicyState()
        st.observe(2, 5.0, 1.5)
        st.observe(0, -3.0, -0.5)
        vec = encode_state(st, 4)
        assert vec.shape == (8,)
        assert vec[0] == -0.5 and vec[2] == 1.5
        assert vec[1] == 0.0 and vec[3] == 0.0
        np.testing.assert_array_equal(vec[4:], [1, 0, 1, 0])
        assert int(vec[4:].sum()) == len(st.observed)


class TestTeacherLabel:
    def test_covered_template_terminates(self, cube_policy):
        ds, sp, policy = cube_policy
        st = policy.initial_state(ds.features[sp.test_indices[0]])
        # observe everything: every template becomes covered
        for f in range(20):
            if f != 7:
                st.observe(f, float(ds.features[sp.test_indices[0], f]), 0.0)
        assert teacher_label(policy, st, PER_CARDINALITY) == TERMINATE
        assert teacher_label(policy, st, FEATURE_ACT) == TERMINATE

    def test_single_template_library_points_at_it(self, cube_policy):
        ds, sp, _ = cube_policy
        lib = TemplateLibrary(o_init=7, lam=0.0, templates=((3, 7, 11),))
        policy = build_policy(ds, sp, lib, k=5)
        st = policy.initial_state(ds.features[0])
        assert teacher_label(policy, st, PER_CARDINALITY) == 0
        assert teacher_label(policy, st, GLOBAL) == 0
        # cheapest unobserved of (3, 7, 11) under uniform costs is 3
        assert teacher_label(policy, st, FEATURE_ACT) == 3

    def test_labels_replay_teacher_trace(self, cube_policy):
        ds, sp, policy = cube_policy
        for row in sp.test_indices[:20]:
            trace = rollout(policy, ds.features[row])
            st = policy.initial_state(ds.features[row])
            for step in trace.steps:
                lab = teacher_label(policy, st, PER_CARDINALITY)
                if step.action.is_terminate:
                    assert lab == TERMINATE
                    break
                assert lab == step.selected_template
                f = int(step.action.feature)
                v = float(ds.features[row, f])
                st.observe(f, v, policy.scaler.transform_value(f, v))


class TestFitTree:
    def test_constant_labels_single_leaf(self):
        rng = np.random.default_rng(0)
        tree = fit_tree(rng.normal(size=(30, 4)), np.full(30, 2), leaf_limit=4)
        assert tree.n_leaves == 1
        assert tree.predict(np.zeros(4)) == 2

    def test_xor_with_four_leaves(self):
        # XOR corners: no single split helps, yet depth 2 separates fully
        corners = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
        x = np.repeat(corners, 25, axis=0)
        y = (x[:, 0].astype(int) ^ x[:, 1].astype(int)).astype(int)
        tree = fit_tree(x, y, leaf_limit=4)
        preds = np.array([tree.predict(row) for row in x])
        assert np.mean(preds == y) == 1.0
        assert tree.n_leaves == 4

    def test_leaf_budget_respected(self):
        rng = np.random.default_rng(2)
        for trial in range(100):
            n = int(rng.integers(5, 60))
            x = rng.normal(size=(n, 3))
            y = rng.integers(0, 4, size=n)
            limit = int(rng.integers(2, 7))
            tree = fit_tree(x, y, limit)
            assert tree.n_leaves <= limit

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(100, 5))
        y = rng.integers(0, 3, size=100)
        a = fit_tree(x, y, 6).to_dict()
        b = fit_tree(x, y, 6).to_dict()
        assert a == b

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            fit_tree(np.zeros((0, 2)), np.zeros(0), 4)
        with pytest.raises(ValueError):
            fit_tree(np.zeros((5, 2)), np.zeros(5), 1)

    def test_node_count_identity(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(200, 4))
        y = (x[:, 0] + x[:, 1] > 0).astype(int) + 2 * (x[:, 2] > 0.5).astype(int)
        tree = fit_tree(x, y, 8)
        assert tree.n_nodes == 2 * tree.n_leaves - 1


class TestDaggerTrain:
    def test_aggregate_grows_and_deterministic(self, cube_policy):
        ds, sp, policy = cube_policy
        rows = ds.features[sp.train_indices[:80]]
        a = dagger_train(policy, rows, PER_CARDINALITY, leaf_limit=4, iterations=2, seed=0)
        b = dagger_train(policy, rows, PER_CARDINALITY, leaf_limit=4, iterations=2, seed=0)
        assert a.to_dict() == b.to_dict()

    def test_aggregate_size_non_decreasing(self, cube_policy):
        ds, sp, policy = cube_policy
        rows = ds.features[sp.train_indices[:60]]
        ens = dagger_train(policy, rows, PER_CARDINALITY, leaf_limit=4, iterations=4, seed=0)
        sizes = ens.training_sizes
        assert len(sizes) == 4
        assert all(b >= a for a, b in zip(sizes, sizes[1:]))

    def test_stage_one_tree_splits_on_initial_feature(self, cube_policy):
        # at cardinality 1 only the initial feature's value varies, so the
        # first-stage tree must test it at the root
        ds, sp, policy = cube_policy
        rows = ds.features[sp.train_indices]
        ens = dagger_train(policy, rows, PER_CARDINALITY, leaf_limit=4, iterations=1, seed=0)
        stage1 = ens.trees[1]
        assert not stage1.root.is_leaf
        assert stage1.root.feature == policy.library.o_init
        dot = export_tree_dot(
            stage1,
            [f"x{i}" for i in range(20)],
            template_action_labels(policy.library, [f"x{i}" for i in range(20)]),
        )
        first_node = next(l for l in dot.splitlines() if "[label=" in l)
        assert f"x{policy.library.o_init}" in first_node

    def test_trees_keyed_by_cardinality(self, cube_policy):
        ds, sp, policy = cube_policy
        rows = ds.features[sp.train_indices[:60]]
        ens = dagger_train(policy, rows, PER_CARDINALITY, leaf_limit=4, iterations=1, seed=0)
        assert all(m >= 1 for m in ens.trees)
        assert max(ens.trees) <= 20
        assert ens.total_leaves == sum(t.n_leaves for t in ens.trees.values())

    def test_global_variant_single_tree(self, cube_policy):
        ds, sp, policy = cube_policy
        rows = ds.features[sp.train_indices[:60]]
        ens = dagger_train(policy, rows, GLOBAL, leaf_limit=8, iterations=1, seed=0)
        assert list(ens.trees) == [0]

    def test_labels_live_in_action_space(self, cube_policy):
        ds, sp, policy = cube_policy
        rows = ds.features[sp.train_indices[:60]]
        for variant in (PER_CARDINALITY, GLOBAL, FEATURE_ACT):
            ens = dagger_train(policy, rows, variant, leaf_limit=4, iterations=1, seed=0)
            space = set(ens.action_space())
            for tree in ens.trees.values():
                stack = [tree.root]
                while stack:
                    node = stack.pop()
                    if node.is_leaf:
                        assert node.action in space
                    else:
                        stack.extend([node.left, node.right])

    def test_agreement_improves_with_iterations(self, cube_policy):
        """DAgger's point: training on student-visited states improves
        agreement along student trajectories (majority over seeds)."""
        from tafa.distill import _action_feature

        ds, sp, policy = cube_policy
        rows = ds.features[sp.train_indices]
        test_rows = ds.features[sp.test_indices[:80]]

        def agreement(ens):
            agree = total = 0
            for row in test_rows:
                st = policy.initial_state(row)
                while True:
                    vec = encode_state(st, 20)
                    lab = teacher_label(policy, st, PER_CARDINALITY)
                    pred = ens.decide(vec, len(st.observed))
                    agree += int(pred == lab)
                    total += 1
                    feature = _action_feature(policy, st, pred, PER_CARDINALITY)
                    if feature is None or len(st.observed) >= 20:
                        break
                    v = float(row[feature])
                    st.observe(feature, v, policy.scaler.transform_value(feature, v))
            return agree / total

        wins = 0
        for seed in range(5):
            one = dagger_train(
                policy, rows, PER_CARDINALITY, leaf_limit=4, iterations=1,
                seed=seed, sample_limit=300,
            )
            five = dagger_train(
                policy, rows, PER_CARDINALITY, leaf_limit=4, iterations=5,
                seed=seed, sample_limit=300,
            )
            wins += agreement(five) >= agreement(one)
        assert wins >= 3


class TestStudentRollout:
    def test_terminate_everywhere_stops_after_init(self, cube_policy):
        ds, _, policy = cube_policy
        ens = TreeEnsemble(
            variant=PER_CARDINALITY,
            trees={},
            leaf_limit=4,
            n_features=20,
            n_templates=len(policy.library.templates),
        )
        tr = student_rollout(policy, ens, ds.features[0])
        assert tr.acquired == (7,)
        assert tr.steps[0].action.is_terminate

    def test_covered_template_prediction_terminates(self, cube_policy):
        ds, sp, _ = cube_policy
        lib = TemplateLibrary(o_init=7, lam=0.0, templates=((7,), (7, 9)))
        policy = build_policy(ds, sp, lib, k=5)
        from tafa.distill import _Node

        # a student that always picks template 0 = {7}, already covered
        tree = DecisionTree(root=_Node(action=0), leaf_limit=2)
        ens = TreeEnsemble(
            variant=PER_CARDINALITY,
            trees={m: tree for m in range(1, 21)},
            leaf_limit=2,
            n_features=20,
            n_templates=2,
        )
        tr = student_rollout(policy, ens, ds.features[0])
        assert tr.acquired == (7,)
        assert tr.steps[-1].action.is_terminate

    def test_feature_act_revisit_terminates(self, cube_policy):
        ds, sp, policy = cube_policy
        from tafa.distill import _Node

        tree = DecisionTree(root=_Node(action=7), leaf_limit=2)  # o_init, observed
        ens = TreeEnsemble(
            variant=FEATURE_ACT,
            trees={m: tree for m in range(1, 21)},
            leaf_limit=2,
            n_features=20,
            n_templates=len(policy.library.templates),
        )
        tr = student_rollout(policy, ens, ds.features[0])
        assert tr.acquired == (7,)
        assert tr.steps[-1].action.is_terminate

    def test_no_revisits_and_cost_identity(self, cube_policy):
        ds, sp, policy = cube_policy
        rows = ds.features[sp.train_indices[:60]]
        ens = dagger_train(policy, rows, PER_CARDINALITY, leaf_limit=4, iterations=2, seed=1)
        for row in ds.features[sp.test_indices[:40]]:
            tr = student_rollout(policy, ens, row)
            assert len(set(tr.acquired)) == len(tr.acquired)
            assert tr.total_cost == pytest.approx(len(tr.acquired))


class TestExport:
    def test_single_leaf_terminate(self):
        from tafa.distill import _Node

        tree = DecisionTree(root=_Node(action=TERMINATE), leaf_limit=2)
        dot = export_tree_dot(tree, [f"x{i}" for i in range(4)], {TERMINATE: "terminate"})
        assert "terminate" in dot
        assert dot.count("n0") >= 1
        assert "->" not in dot

    def test_node_count_matches_tree(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(120, 3))
        y = (x[:, 0] > 0).astype(int)
        tree = fit_tree(x, y, 4)
        labels = {TERMINATE: "terminate", 0: "a", 1: "b"}
        dot = export_tree_dot(tree, ["x0", "x1", "x2"], labels)
        n_nodes = sum(
            1 for line in dot.splitlines() if "[label=" in line and "->" not in line
        )
        assert n_nodes == tree.n_nodes

    def test_round_trip_serialisation(self, cube_policy, tmp_path):
        ds, sp, policy = cube_policy
        rows = ds.features[sp.train_indices[:40]]
        ens = dagger_train(policy, rows, PER_CARDINALITY, leaf_limit=4, iterations=1, seed=0)
        p = tmp_path / "ensemble.json"
        ens.save(p)
        loaded = TreeEnsemble.load(p)
        assert loaded.to_dict() == ens.to_dict()

    def test_action_label_helpers(self, cube_policy):
        _, _, policy = cube_policy
        t_labels = template_action_labels(policy.library, [f"x{i}" for i in range(20)])
        assert t_labels[TERMINATE] == "terminate"
        assert "x7" in t_labels[0]
        f_labels = feature_action_labels(["a", "b"])
        assert f_labels[1] == "acquire b"
