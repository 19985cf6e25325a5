import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modfanova import (
    DataError,
    Dataset,
    FactorialTable,
    FitParams,
    decompose,
    enumerate_variants,
    exact_decompose,
    fit_forest,
    generate_synthetic,
    parse_config_space,
    to_factorial,
)
from modfanova.pipeline import random_truth


def make_space(shape, prefix="m"):
    return parse_config_space(json.dumps(
        [{"name": f"{prefix}{j}", "options": [f"o{i}" for i in range(k)]} for j, k in enumerate(shape)]))


def test_to_factorial_full(modcma):
    data, _ = generate_synthetic(modcma, random_truth(modcma, [(0,)], seed=0), 0.1, 0)
    table = to_factorial(data)
    assert table.response.shape == modcma.shape and table.response.size == 324
    assert table.response[(1, 0, 2, 1, 0, 1)] == data.responses[modcma.index_of((1, 0, 2, 1, 0, 1))]


def test_to_factorial_missing_one(modcma):
    data, _ = generate_synthetic(modcma, {}, 0.0, 0)
    short = Dataset(modcma, data.variants[1:], data.responses[1:])
    with pytest.raises(DataError, match=r"1 missing variant\(s\): \(0, 0, 0, 0, 0, 0\)"):
        to_factorial(short)


def test_to_factorial_one_module():
    space = make_space((2,))
    table = to_factorial(Dataset(space, [[1], [0]], [5.0, 3.0]))
    assert table.response.tolist() == [3.0, 5.0]


def test_additive_has_zero_interactions():
    space = make_space((3, 2, 4, 2))
    data, _ = generate_synthetic(space, random_truth(space, [(j,) for j in range(4)], seed=1), 0.0, 0)
    d = exact_decompose(to_factorial(data), 4)
    for k, f in d.fractions.items():
        if len(k) > 1:
            assert f <= 1e-12


def test_recovers_generator_truth():
    space = make_space((3, 2, 4, 3))
    keys = [(0,), (1, 2), (0, 2, 3), (1,), (0, 1, 2, 3)]
    data, truth = generate_synthetic(space, random_truth(space, keys, seed=4), 0.0, 0, intercept=3.0)
    d = exact_decompose(to_factorial(data), 4)
    for k, f in truth.fractions().items():
        assert d.fraction(k) == pytest.approx(f, abs=1e-9)
    assert d.totals[0] == pytest.approx(truth.total_variance, rel=1e-12)


@pytest.mark.filterwarnings("ignore:response table has zero variance")
@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=4), st.integers(0, 10**6))
def test_full_order_closure(shape, seed):
    space = make_space(shape)
    y = np.random.default_rng(seed).normal(size=space.cardinality)
    d = exact_decompose(FactorialTable(space, y), space.n)
    if d.totals[0] > 0:
        assert d.fraction_array.sum() == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(2, 4), min_size=1, max_size=4), st.integers(0, 10**6))
def test_exact_tree_agrees_with_oracle(shape, seed):
    space = make_space(shape)
    y = np.random.default_rng(seed).normal(size=space.cardinality)
    data = Dataset(space, list(enumerate_variants(space)), y)
    m = min(3, space.n)
    oracle = exact_decompose(to_factorial(data), m)
    forest = decompose(fit_forest(data, FitParams.exact()), m)
    np.testing.assert_allclose(forest.fraction_array, oracle.fraction_array, atol=1e-9)


def test_relabeling_permutes_keys():
    space = make_space((2, 3, 4))
    rng = np.random.default_rng(8)
    y = rng.normal(size=space.shape)
    d = exact_decompose(FactorialTable(space, y), 3)
    # reverse module order and shuffle options of module 2
    perm_opts = rng.permutation(4)
    y2 = np.transpose(y[:, :, perm_opts], (2, 1, 0))
    space2 = make_space((4, 3, 2), prefix="p")
    d2 = exact_decompose(FactorialTable(space2, y2), 3)
    for k in d.keys:
        mapped = tuple(2 - j for j in k)
        assert d2.fraction(mapped) == pytest.approx(d.fraction(k), abs=1e-12)


def test_zero_variance_table():
    space = make_space((2, 2))
    with pytest.warns(UserWarning, match="zero variance"):
        d = exact_decompose(FactorialTable(space, np.ones(4)), 2)
    assert d.zero_variance_trees == [0]
    assert all(f == 0 for f in d.fractions.values())


def test_cardinality_guard():
    space = make_space((10,) * 7)
    data = Dataset(space, [[0] * 7], [1.0])
    with pytest.raises(DataError, match="limited"):
        to_factorial(data)
