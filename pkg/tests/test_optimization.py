import numpy as np
import pytest

from slateval import (
    ExperimentConfig,
    GeneratorConfig,
    LoggedExample,
    SlateSpace,
    UniformPolicy,
    build_instance,
    decompose,
    draw_logs,
    evaluate_learned,
    fit_scorer,
    fit_sup_scorer,
    generate_synthetic,
    greedy_slate,
)
from slateval.moments import moment_matrix
from slateval.optimization import (
    DecomposedTargets,
    PointwiseScorer,
    _design_matrix,
    read_scorer,
    write_scorer,
)
from slateval.ridge import fold_moments_from_rows, cv_select_alpha


def unit_features(dim=4, seed=0):
    rng = np.random.default_rng(seed)
    cache = {}

    def features(context, slot, action):
        key = (context, action)
        if key not in cache:
            cache[key] = rng.normal(size=dim)
        return cache[key]

    return features


def test_decompose_uniform_ranking_worked_example():
    space = SlateSpace.ranking(2, 2)
    logging = UniformPolicy(space)
    logs = [LoggedExample("q", (0, 1), 1.0)]
    targets = decompose(logs, logging, features=unit_features())
    np.testing.assert_allclose(targets.phi_hats[0], [1.0, 0.0, 0.0, 1.0], atol=1e-12)


def test_decompose_zero_reward_zero_targets():
    space = SlateSpace.ranking(3, 2)
    logging = UniformPolicy(space)
    targets = decompose([LoggedExample("q", (1, 2), 0.0)], logging, features=unit_features())
    assert np.all(targets.phi_hats[0] == 0.0)


def test_decomposed_targets_recover_reward_through_logging_mean():
    """q_logging' phi_hat equals the logged reward, example by example."""
    from helpers import mixture_logging_policy, make_ada_instance, draw_ada_logs

    instance = make_ada_instance(seed=4)
    rng = np.random.default_rng(4)
    logging = mixture_logging_policy(instance, 0.5, rng)
    logs = draw_ada_logs(instance, logging, 60, rng)
    targets = decompose(logs, logging, features=unit_features())
    for ex, phi_hat in zip(logs, targets.phi_hats):
        q = logging.mean_indicator(ex.context)
        assert q @ phi_hat == pytest.approx(ex.reward, abs=1e-10)


def test_decompose_mean_converges_to_projected_values():
    """Averaged decompositions approach pinv times the marginal-value
    vector, which the enumeration oracle supplies."""
    space = SlateSpace.ranking(3, 2)
    rng = np.random.default_rng(9)
    from helpers import random_explicit_policy

    logging = random_explicit_policy(space, ["q"], rng)
    phi = rng.uniform(0, 0.5, size=space.dim)

    def reward(slate):
        return float(phi[space.coords(slate)].sum())

    n = 30_000
    logs = []
    for _ in range(n):
        slate = logging.sample("q", rng)
        logs.append(LoggedExample("q", slate, reward(slate)))
    targets = decompose(logs, logging, features=unit_features())
    mean_phi_hat = np.mean(np.stack(targets.phi_hats), axis=0)

    theta = np.zeros(space.dim)
    for slate, p in logging.support("q"):
        theta += p * reward(slate) * space.indicator(slate)
    from slateval import pinv_numeric

    expected = pinv_numeric(moment_matrix(logging, "q")).entries @ theta
    assert np.abs(mean_phi_hat - expected).max() < 0.08


def test_fit_scorer_constant_targets():
    space = SlateSpace.ranking(3, 2)
    features = unit_features()
    targets = DecomposedTargets(
        contexts=tuple(f"q{i}" for i in range(100)),
        phi_hats=tuple(np.full(space.dim, 0.7) for _ in range(100)),
        spaces={f"q{i}": space for i in range(100)},
        features=features,
        num_slots=2,
    )
    scorer = fit_scorer(targets)
    for context in ("q0", "q5"):
        table = scorer.score_matrix(context, space, features)
        np.testing.assert_allclose(table, 0.7, atol=1e-3)


def test_fit_scorer_recovers_noiseless_linear_targets():
    space = SlateSpace.ranking(4, 2)
    features = unit_features(dim=3, seed=5)
    true_w = np.array([0.8, -0.4, 0.2])
    slot_offsets = np.array([0.5, 0.1])
    contexts = tuple(f"q{i}" for i in range(40))
    phi_hats = []
    for context in contexts:
        design = _design_matrix(space, context, features, 3)
        phi_hats.append(design @ np.concatenate([slot_offsets, true_w]))
    targets = DecomposedTargets(
        contexts=contexts,
        phi_hats=tuple(phi_hats),
        spaces={c: space for c in contexts},
        features=features,
        num_slots=2,
    )
    scorer = fit_scorer(targets, alphas=(1e-6,))
    np.testing.assert_allclose(scorer.feature_weights(), true_w, atol=1e-6)
    np.testing.assert_allclose(scorer.slot_weights(), slot_offsets, atol=1e-6)


def test_fit_scorer_fold_moments_match_row_reference():
    """Streaming fold accumulation equals explicit row-indexed folds."""
    space = SlateSpace.ranking(3, 2)
    features = unit_features(dim=2, seed=6)
    rng = np.random.default_rng(6)
    contexts = tuple(f"q{i % 3}" for i in range(11))
    phi_hats = tuple(rng.normal(size=space.dim) for _ in contexts)
    targets = DecomposedTargets(
        contexts=contexts,
        phi_hats=phi_hats,
        spaces={c: space for c in contexts},
        features=features,
        num_slots=2,
    )
    scorer = fit_scorer(targets, alphas=(0.1,))

    rows = np.vstack([_design_matrix(space, c, features, 2) for c in contexts])
    values = np.concatenate(phi_hats)
    moments = fold_moments_from_rows(rows, values, folds=5)
    assert cv_select_alpha(moments, np.ones(rows.shape[1]), (0.1,)) == 0.1
    from slateval.ridge import solve_ridge

    expected = solve_ridge(
        moments.xtx.sum(axis=0), moments.xty.sum(axis=0), 0.1, np.ones(rows.shape[1])
    )
    np.testing.assert_allclose(scorer.weights, expected, atol=1e-10)


def test_fit_scorer_deterministic():
    space = SlateSpace.ranking(3, 2)
    features = unit_features(dim=2, seed=7)
    rng = np.random.default_rng(7)
    targets = DecomposedTargets(
        contexts=("a",) * 20,
        phi_hats=tuple(rng.normal(size=space.dim) for _ in range(20)),
        spaces={"a": space},
        features=features,
        num_slots=2,
    )
    first = fit_scorer(targets)
    second = fit_scorer(targets)
    np.testing.assert_array_equal(first.weights, second.weights)


class _TableScorer:
    """Score table handed in directly; used to drive greedy with known values."""

    def __init__(self, table):
        self.table = np.asarray(table, dtype=np.float64)

    def score_matrix(self, context, space, features):
        return self.table


def test_greedy_unique_maximizers():
    space = SlateSpace.ranking(3, 2)
    scorer = _TableScorer([[0.1, 0.9, 0.2], [0.8, 0.95, 0.3]])
    # (1, 1) wins round one; slot 1 and action 1 leave; then (0, 2) beats (0, 0)
    assert greedy_slate(scorer, "q", space, unit_features()) == (2, 1)


def test_greedy_ranking_never_repeats_actions():
    space = SlateSpace.ranking(4, 3)
    rng = np.random.default_rng(8)
    for _ in range(50):
        scorer = _TableScorer(rng.normal(size=(3, 4)))
        slate = greedy_slate(scorer, "q", space, unit_features())
        assert len(set(slate)) == 3


def test_greedy_cartesian_reuses_action_ids():
    space = SlateSpace.cartesian((2, 2))
    scorer = _TableScorer([[1.0, 0.0], [1.0, 0.0]])
    assert greedy_slate(scorer, "q", space, unit_features()) == (0, 0)


def test_greedy_cartesian_ragged_slot_counts():
    # slot 0 has two actions, slot 1 has three; padding cells never win
    space = SlateSpace.cartesian((2, 3))
    table = np.array([[0.4, 0.1, -np.inf], [0.3, 0.2, 0.9]])
    slate = greedy_slate(_TableScorer(table), "q", space, unit_features())
    assert slate == (0, 2)
    assert space.is_valid(slate)


def test_greedy_all_equal_scores_takes_lexicographic_slate():
    space = SlateSpace.ranking(5, 3)
    scorer = _TableScorer(np.zeros((3, 5)))
    assert greedy_slate(scorer, "q", space, unit_features()) == (0, 1, 2)


def test_true_intrinsic_scorer_reaches_perfect_ndcg():
    dataset = generate_synthetic(
        GeneratorConfig(num_queries=20, docs_per_query=8, feature_dim=12, title_dims=6, seed=9)
    )
    config = ExperimentConfig(m=6, slots=3, title_dims=6)
    instance = build_instance(dataset, config)

    class _IntrinsicScorer:
        def score_matrix(self, context, space, features):
            return instance.intrinsic(context).reshape(space.num_slots, -1)

    scored = [c for c in instance.contexts if instance.arms[c].dcg_star > 0]
    value = evaluate_learned(_IntrinsicScorer(), instance, scored)
    assert value == pytest.approx(1.0, abs=1e-12)


def test_random_scorer_matches_uniform_policy_value():
    dataset = generate_synthetic(
        GeneratorConfig(num_queries=25, docs_per_query=8, feature_dim=12, title_dims=6, seed=10)
    )
    config = ExperimentConfig(m=6, slots=2, title_dims=6)
    instance = build_instance(dataset, config)
    uniform_value = np.mean(
        [
            float(UniformPolicy(instance.space_of(c)).mean_indicator(c) @ instance.intrinsic(c))
            for c in instance.contexts
        ]
    )
    rng = np.random.default_rng(11)
    values = []
    for _ in range(300):
        scorer = _TableScorer(rng.normal(size=(2, 6)))
        values.append(
            np.mean([
                instance.ndcg(c, greedy_slate(scorer, c, instance.space_of(c), instance.features))
                for c in instance.contexts
            ])
        )
    se = np.std(values, ddof=1) / np.sqrt(len(values))
    assert abs(np.mean(values) - uniform_value) < 4 * se + 1e-9


def test_end_to_end_improves_on_logging():
    dataset = generate_synthetic(
        GeneratorConfig(num_queries=60, docs_per_query=12, feature_dim=16, title_dims=8, seed=12)
    )
    config = ExperimentConfig(m=8, slots=3, title_dims=8, seed=3)
    instance = build_instance(dataset, config)
    rng = np.random.default_rng(np.random.SeedSequence([3, 0]))
    logs = draw_logs(instance, 20_000, rng)
    targets = decompose(logs, instance.logging, features=instance.features)
    scorer = fit_scorer(targets)
    learned = evaluate_learned(scorer, instance)
    logged = instance.policy_value(instance.logging)
    assert learned > logged * 1.1


def test_sup_scorer_slates_sort_by_predicted_gain():
    dataset = generate_synthetic(
        GeneratorConfig(num_queries=30, docs_per_query=10, feature_dim=12, title_dims=6, seed=13)
    )
    config = ExperimentConfig(m=8, slots=3, title_dims=6)
    instance = build_instance(dataset, config)
    scorer = fit_sup_scorer(instance, target="gain")
    context = instance.contexts[0]
    space = instance.space_of(context)
    slate = greedy_slate(scorer, context, space, instance.features)
    scores = scorer.score_matrix(context, space, instance.features)[0]
    expected = tuple(np.argsort(-scores, kind="stable")[:3])
    assert slate == expected


def test_scorer_round_trip(tmp_path):
    scorer = PointwiseScorer(
        weights=np.array([0.5, -0.25, 1.5, 2.0]), num_slots=2, feature_dim=2, alpha=0.1
    )
    path = tmp_path / "scorer.txt"
    write_scorer(path, scorer)
    back = read_scorer(path)
    np.testing.assert_array_equal(back.weights, scorer.weights)
    assert back.num_slots == 2 and back.feature_dim == 2 and back.alpha == 0.1
