import itertools
import json
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modfanova import (
    Dataset,
    EffectDecomposition,
    FitParams,
    component_value,
    cumulative_summary,
    decompose,
    enumerate_variants,
    fit_forest,
    generate_synthetic,
    pair_table,
    parse_config_space,
    subset_keys,
    subset_variance,
    total_variance,
    tree_marginal,
    triplet_table,
)
from modfanova.fanova import marginal_table
from modfanova.forest import Forest, Leaf, Split, Tree
from modfanova.pipeline import random_truth


def make_space(shape):
    return parse_config_space(json.dumps(
        [{"name": f"m{j}", "options": [f"o{i}" for i in range(k)]} for j, k in enumerate(shape)]))


def random_tree(shape, seed, n_rows=None):
    space = make_space(shape)
    rng = np.random.default_rng(seed)
    variants = np.array(list(enumerate_variants(space)))
    if n_rows is not None:
        variants = variants[rng.choice(len(variants), size=min(n_rows, len(variants)), replace=False)]
    data = Dataset(space, variants, rng.normal(size=len(variants)))
    return fit_forest(data, FitParams(n_trees=1, seed=seed)).trees[0]


def brute_marginal(tree, U, theta):
    vals = [tree.predict(v) for v in enumerate_variants(tree.space)
            if all(v[j] == o for j, o in zip(U, theta))]
    return float(np.mean(vals))


def brute_variance(tree):
    vals = np.array([tree.predict(v) for v in enumerate_variants(tree.space)])
    return float(vals.var())


shapes = st.lists(st.integers(1, 4), min_size=1, max_size=4)


@settings(max_examples=40, deadline=None)
@given(shapes, st.integers(0, 10**6), st.data())
def test_marginal_matches_enumeration(shape, seed, data):
    tree = random_tree(shape, seed, n_rows=data.draw(st.integers(1, 40)))
    n = len(shape)
    U = tuple(sorted(data.draw(st.sets(st.integers(0, n - 1), max_size=n))))
    theta = tuple(data.draw(st.integers(0, shape[j] - 1)) for j in U)
    expected = brute_marginal(tree, U, theta)
    assert tree_marginal(tree, U, theta) == pytest.approx(expected, rel=1e-12, abs=1e-12)
    assert marginal_table(tree, U)[theta] == pytest.approx(expected, rel=1e-12, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(shapes, st.integers(0, 10**6))
def test_total_variance_matches_enumeration(shape, seed):
    tree = random_tree(shape, seed, n_rows=30)
    assert total_variance(tree) == pytest.approx(brute_variance(tree), rel=1e-10, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(2, 4), min_size=2, max_size=4), st.integers(0, 10**6))
def test_closure_and_zero_mean_components(shape, seed):
    tree = random_tree(shape, seed, n_rows=25)
    n = len(shape)
    memo = {}
    V = total_variance(tree)
    parts = [subset_variance(tree, U, memo) for U in subset_keys(n, n)]
    assert min(parts) >= 0
    assert sum(parts) == pytest.approx(V, rel=1e-9, abs=1e-14)
    for U in subset_keys(n, n):
        table = memo[U]
        for axis in range(len(U)):
            np.testing.assert_allclose(table.mean(axis=axis), 0, atol=1e-9 * max(1.0, np.abs(table).max()))


def test_constant_tree():
    space = make_space((3, 2))
    tree = Tree(space, Leaf(2.5, ((0, 1, 2), (0, 1))))
    assert tree_marginal(tree, (), ()) == 2.5
    assert tree_marginal(tree, (0, 1), (2, 1)) == 2.5
    assert total_variance(tree) == 0
    for U in subset_keys(2, 2):
        assert subset_variance(tree, U) == 0
        assert component_value(tree, U, (0,) * len(U)) == 0


def test_two_equal_volume_leaves():
    space = make_space((2, 3))
    tree = Tree(space, Split(0, (0,), Leaf(0.0, ((0,), (0, 1, 2))), Leaf(2.0, ((1,), (0, 1, 2)))))
    assert total_variance(tree) == 1.0
    assert subset_variance(tree, (0,)) == 1.0
    assert subset_variance(tree, (1,)) == 0.0
    assert subset_variance(tree, (0, 1)) == 0.0
    # one-variable case: component = marginal minus global mean
    assert component_value(tree, (0,), (1,)) == tree_marginal(tree, (0,), (1,)) - 1.0 == 1.0


def test_full_assignment_marginal_is_prediction():
    tree = random_tree((3, 2, 4), seed=5)
    for v in list(enumerate_variants(tree.space))[::5]:
        assert tree_marginal(tree, (0, 1, 2), v) == tree.predict(v)


def test_additive_exact_tree_has_no_interactions():
    space = make_space((3, 4, 2, 3))
    data, _ = generate_synthetic(space, random_truth(space, [(j,) for j in range(4)], seed=7), 0.0, 0)
    tree = fit_forest(data, FitParams.exact()).trees[0]
    memo = {}
    for U in subset_keys(4, 4):
        if len(U) >= 2:
            for theta in itertools.product(*(range(space.shape[j]) for j in U)):
                assert abs(component_value(tree, U, theta, memo)) <= 1e-9


def test_decompose_key_counts(modcma, modde):
    for space, expected in ((modcma, 41), (modde, 63)):
        data, _ = generate_synthetic(space, random_truth(space, [(0,), (1, 2)], seed=1), 0.1, 0)
        forest = fit_forest(data, FitParams(n_trees=2))
        d = decompose(forest, 3)
        assert len(d.keys) == expected == sum(comb(space.n, r) for r in (1, 2, 3))
        assert d.variances.shape == (2, expected)
        for m in (1, 2):
            assert len(decompose(forest, m).keys) == sum(comb(space.n, r) for r in range(1, m + 1))


def test_single_exact_tree_fractions_sum_to_one():
    space = make_space((2, 3, 4))
    rng = np.random.default_rng(3)
    data = Dataset(space, list(enumerate_variants(space)), rng.normal(size=24))
    d = decompose(fit_forest(data, FitParams.exact()), 3)
    assert sum(d.fractions.values()) == pytest.approx(1.0, abs=1e-9)


def test_scale_and_shift(modcma):
    data, _ = generate_synthetic(modcma, random_truth(modcma, [(0,), (1, 3), (2, 4, 5)], seed=2), 0.3, 1)
    params = FitParams(n_trees=8, seed=4)
    base = decompose(fit_forest(data, params), 3)
    scaled = decompose(fit_forest(Dataset(modcma, data.variants, 7.3 * data.responses), params), 3)
    shifted = decompose(fit_forest(Dataset(modcma, data.variants, data.responses + 100), params), 3)
    np.testing.assert_allclose(scaled.fraction_array, base.fraction_array, atol=1e-9)
    np.testing.assert_allclose(scaled.variances, 7.3 ** 2 * base.variances, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(shifted.variances, base.variances, rtol=1e-9, atol=1e-10)


def test_subset_argument_order(modcma):
    data, _ = generate_synthetic(modcma, random_truth(modcma, [(0, 2)], seed=2), 0.1, 1)
    d = decompose(fit_forest(data, FitParams(n_trees=2)), 3)
    assert d.fraction((2, 0)) == d.fraction((0, 2))
    assert d.fraction((4, 1, 3)) == d.fraction((1, 3, 4))


def test_zero_variance_trees_flagged():
    space = make_space((2, 2))
    flat = Tree(space, Leaf(1.0, ((0, 1), (0, 1))))
    split = Tree(space, Split(0, (0,), Leaf(0.0, ((0,), (0, 1))), Leaf(2.0, ((1,), (0, 1)))))
    with pytest.warns(UserWarning, match="zero variance"):
        d = decompose(Forest(space, [flat, split], FitParams()), 2)
    assert d.zero_variance_trees == [0]
    assert d.fraction((0,)) == 0.5  # (0 + 1) / 2
    assert d.with_mode("pooled").fraction((0,)) == 1.0
    with pytest.warns(UserWarning):
        d = decompose(Forest(space, [flat], FitParams()), 2)
    assert all(f == 0 for f in d.fractions.values())


def test_bad_max_order():
    from modfanova import DataError

    tree = random_tree((2, 2), seed=0)
    with pytest.raises(DataError):
        decompose(Forest(tree.space, [tree], FitParams()), 3)


# -- summaries ----------------------------------------------------------------

def decomposition_from(fractions: dict, n: int, names=None) -> EffectDecomposition:
    names = names or [f"m{j}" for j in range(n)]
    space = parse_config_space(json.dumps([{"name": nm, "options": ["a", "b"]} for nm in names]))
    keys = subset_keys(n, 3)
    values = np.array([[fractions.get(k, 0.0) for k in keys]])
    return EffectDecomposition(space, 3, keys, values, np.array([1.0]))


def test_cumulative_summary_table_row():
    d = decomposition_from({(0,): 0.4163, (0, 1): 0.3772, (0, 1, 2): 0.1616}, 6)
    row = cumulative_summary(d).as_row()
    assert row == pytest.approx((41.63, 37.72, 16.16, 95.51))
    single = decomposition_from({(2,): 1.0}, 4)
    assert cumulative_summary(single).as_row() == pytest.approx((100, 0, 0, 100))


def test_pair_table():
    d = decomposition_from({(0,): 0.15, (1,): 0.15, (0, 1): 0.153, (0, 2): 0.01, (1, 2): 0.03}, 3,
                           names=["mirrored", "weights_option", "elitist"])
    rows = pair_table(d)
    assert rows[0].modules == ("mirrored", "weights_option")
    assert rows[0].pair_total == pytest.approx(45.3)
    assert [round(r.pairwise, 6) for r in rows] == [15.3, 3.0, 1.0]
    additive = pair_table(decomposition_from({(0,): 0.5, (1,): 0.5}, 3))
    assert all(r.pairwise == 0 for r in additive)


def test_triplet_table():
    f = {(0,): 0.452, (1,): 0.137, (2,): 0.080, (0, 2): 0.056, (0, 1): 0.038, (1, 2): 0.029,
         (0, 1, 2): 0.015, (3,): 0.05}
    rows = triplet_table(decomposition_from(f, 5))
    assert len(rows) == comb(5, 3)
    assert rows[0].modules == ("m0", "m1", "m2")
    assert rows[0].triplet == pytest.approx(1.5)
    assert rows[0].triplet_total == pytest.approx(80.7)
    assert len(triplet_table(decomposition_from(f, 5), 3)) == 3
    assert len(triplet_table(decomposition_from(f, 5), 99)) == 10


def test_triplet_table_additive():
    f = {(j,): 0.1 * (j + 1) for j in range(4)}
    for r in triplet_table(decomposition_from(f, 4)):
        idx = [int(m[1:]) for m in r.modules]
        assert r.triplet_total == pytest.approx(sum(100 * f[(j,)] for j in idx))
