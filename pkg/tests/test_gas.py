import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from memguard.errors import DomainError
from memguard.gas import GngParams, NeuralGas, gng_fit, nearest_two, quantization_error


def brute_nearest_two(nodes, s):
    d = [float(np.sum((n - s) ** 2)) for n in nodes]
    order = sorted(range(len(nodes)), key=lambda i: (d[i], i))
    return order[0], order[1]


def test_params_validation():
    with pytest.raises(DomainError):
        GngParams(eps_b=0.01, eps_n=0.05)
    with pytest.raises(DomainError):
        GngParams(max_nodes=1)
    with pytest.raises(DomainError):
        GngParams(max_age=0)
    with pytest.raises(DomainError):
        GngParams(n_iters=0)
    assert GngParams(max_nodes=10, insert_every=100).iterations == 2000


def test_two_clusters_get_one_node_each(rng):
    a = rng.normal([0, 0], 0.3, size=(300, 2))
    b = rng.normal([10, 10], 0.3, size=(300, 2))
    X = np.concatenate([a, b])
    gas = gng_fit(X, GngParams(max_nodes=2, seed=0, n_iters=3000))
    assert len(gas) == 2
    centres = np.array([[0, 0], [10, 10]])
    near = {int(np.argmin(np.linalg.norm(centres - n, axis=1))) for n in gas.nodes}
    assert near == {0, 1}
    # 1-node k-means oracle: the sample mean
    baseline = float(np.mean(np.sum((X - X.mean(axis=0)) ** 2, axis=1)))
    assert quantization_error(gas, X) < baseline


def test_deterministic(rng):
    X = rng.uniform(-1, 1, size=(500, 3))
    p = GngParams(max_nodes=15, seed=4)
    a, b = gng_fit(X, p), gng_fit(X, p)
    assert np.array_equal(a.nodes, b.nodes) and a.edges == b.edges
    assert np.array_equal(a.node_error, b.node_error)


def test_reaches_max_nodes_and_graph_invariants(rng):
    X = rng.uniform(-1, 1, size=(2000, 4))
    for k in (10, 60):
        gas = gng_fit(X, GngParams(max_nodes=k, seed=1))
        assert len(gas) == k
        for i, j in gas.edges:
            assert i < j < len(gas)
        assert all(age <= gas.params.max_age for age in gas.edges.values())


def test_too_few_samples():
    with pytest.raises(DomainError):
        gng_fit(np.zeros((1, 2)), GngParams())


def test_quantization_error_non_increasing_in_k():
    X = np.random.default_rng(0).uniform(-1, 1, size=(3000, 2))
    errs = [quantization_error(gng_fit(X, GngParams(max_nodes=k, seed=0)), X) for k in (10, 50, 100, 500)]
    assert all(b <= a for a, b in zip(errs, errs[1:])), errs


def test_memories_stay_in_inflated_bbox(rng):
    X = rng.uniform([0, 5], [1, 7], size=(800, 2))
    gas = gng_fit(X, GngParams(max_nodes=30, seed=2))
    lo, hi = X.min(axis=0), X.max(axis=0)
    pad = gas.params.eps_b * np.linalg.norm(hi - lo)
    assert np.all(gas.nodes >= lo - pad) and np.all(gas.nodes <= hi + pad)


def test_normalize_flag_returns_raw_coordinates(rng):
    X = rng.uniform([0, 0], [1, 1000], size=(800, 2))
    gas = gng_fit(X, GngParams(max_nodes=10, seed=0, normalize=True))
    assert gas.nodes[:, 1].max() > 10  # mapped back to the original scale


def test_nearest_two_examples():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [5.0, 5.0]])
    assert nearest_two(nodes, [0.2, 0.0]) == (0, 1)
    tie = np.array([[9.0, 9.0], [0.0, 1.0], [0.0, -1.0]])
    assert nearest_two(tie, [0.0, 0.0]) == (1, 2)
    with pytest.raises(DomainError):
        nearest_two(nodes[:1], [0, 0])


def test_nearest_two_matches_brute_force(rng):
    nodes = rng.uniform(-1, 1, size=(25, 3))
    for s in rng.uniform(-1.5, 1.5, size=(1000, 3)):
        assert nearest_two(nodes, s) == brute_nearest_two(nodes, s)


@given(st.lists(st.tuples(st.integers(-3, 3), st.integers(-3, 3)), min_size=2, max_size=8, unique=True),
       st.tuples(st.integers(-4, 4), st.integers(-4, 4)))
def test_nearest_two_ties_on_integer_lattice(nodes, s):
    nodes = np.asarray(nodes, dtype=float)
    assert nearest_two(nodes, np.asarray(s, dtype=float)) == brute_nearest_two(nodes, np.asarray(s, dtype=float))


def test_quantization_error_examples(rng):
    X = rng.normal(size=(50, 3))
    assert quantization_error(X, X) == 0.0
    mean = X.mean(axis=0, keepdims=True)
    oracle = sum(float(np.dot(x - mean[0], x - mean[0])) for x in X) / len(X)
    assert quantization_error(mean, X) == pytest.approx(oracle, rel=1e-12)
    with pytest.raises(DomainError):
        quantization_error(np.zeros((0, 3)), X)


def test_json_round_trip(rng):
    gas = gng_fit(rng.uniform(size=(300, 2)), GngParams(max_nodes=8, seed=0))
    doc = json.loads(json.dumps(gas.to_dict()))
    assert list(doc) == ["nodes", "edges", "node_error", "params", "seed", "steps"]
    back = NeuralGas.from_dict(doc)
    assert np.array_equal(back.nodes, gas.nodes) and back.edges == gas.edges
    assert back.params == gas.params and back.steps == gas.steps
