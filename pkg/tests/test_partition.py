import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from memguard.errors import DomainError
from memguard.partition import (
    Partition, build_partition, cell_diameter, cell_of, estimate_diameters, half_space, probe_points,
)

UNIT = (np.zeros(2), np.ones(2))


def grid(n=201):
    g = np.linspace(0, 1, n)
    return np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)


def test_cell_of_examples():
    part = Partition(np.array([[0.0, 0.0], [1.0, 0.0]]), UNIT)
    assert cell_of(part, [0.2, 0.0]) == 0
    assert cell_of(part, [0.5, 0.0]) == 0
    assert cell_of(part, [0.51, 0.0]) == 1
    assert list(cell_of(part, [[0.2, 0.0], [0.9, 0.0]])) == [0, 1]
    with pytest.raises(DomainError):
        cell_of(np.zeros((0, 2)), [0, 0])


def test_half_space_examples():
    H = half_space([0, 0], [2, 0])
    assert H([0, 0]) > 0 and H([1, 0]) == 0 and H([1, 5]) == 0 and H([3, 0]) < 0
    assert H([0, 0]) > 0
    with pytest.raises(DomainError):
        half_space([1, 1], [1, 1])


def test_half_space_antisymmetry_and_distance_oracle(rng):
    mi, mj = rng.normal(size=3), rng.normal(size=3)
    Hij, Hji = half_space(mi, mj), half_space(mj, mi)
    S = rng.normal(scale=2, size=(10_000, 3))
    np.testing.assert_allclose(Hij(S), -Hji(S), atol=1e-12)
    closer = np.linalg.norm(S - mi, axis=1) < np.linalg.norm(S - mj, axis=1)
    assert np.array_equal(Hij(S) > 0, closer)
    assert Hij(mi) > 0 and abs(Hij(0.5 * (mi + mj))) < 1e-12


def test_cell_of_matches_half_space_intersection(rng):
    mem = rng.uniform(-1, 1, size=(15, 3))
    part = Partition(mem, (-np.ones(3), np.ones(3)))
    S = rng.uniform(-1, 1, size=(10_000, 3))
    cells = cell_of(part, S)
    for q in range(15):
        inside = np.ones(len(S), dtype=bool)
        for j in range(15):
            if j != q:
                inside &= half_space(mem[q], mem[j])(S) >= 0
        assert np.array_equal(inside, cells == q)


@given(arrays(np.float64, (6, 2), elements=st.floats(-1, 1), unique=True),
       arrays(np.float64, (20, 2), elements=st.floats(-1, 1)))
def test_cell_of_is_nearest_and_pure(mem, S):
    if len({tuple(m) for m in mem}) < len(mem):
        return
    a = cell_of(mem, S)
    assert np.array_equal(a, cell_of(mem, S))
    d = np.linalg.norm(S[:, None, :] - mem[None], axis=2)
    assert np.all(d[np.arange(len(S)), a] <= d.min(axis=1))


def test_single_cell_diameter_is_box_diagonal():
    part = Partition(np.array([[0.3, 0.6]]), UNIT)
    assert cell_diameter(part, 0, grid()) == pytest.approx(np.sqrt(2), abs=1e-12)


def test_two_cell_diameters_dense_grid_oracle():
    part = Partition(np.array([[0.0, 0.0], [1.0, 0.0]]), UNIT)
    d = estimate_diameters(part, grid())
    # each cell is a 0.5 x 1 rectangle
    np.testing.assert_allclose(d, np.sqrt(0.25 + 1), atol=1e-2)
    assert np.all(d <= np.sqrt(0.25 + 1) + 1e-12)
    assert cell_diameter(part, 1, grid()) == d[1]


def test_diameter_fallback_and_clip():
    mem = np.array([[0.1, 0.1], [0.9, 0.9], [0.5, 0.5]])
    part = Partition(mem, UNIT, neighbor_lists=[[2], [2], [0, 1]])
    probes = np.array([[0.0, 0.0], [0.05, 0.0], [1.0, 1.0], [0.95, 1.0]])
    d = estimate_diameters(part, probes)
    # cell 2 holds no probe: twice the distance to its farthest neighbour midpoint
    assert d[2] == pytest.approx(2 * np.linalg.norm([0.2, 0.2]))
    assert np.all(d <= part.diagonal)


def test_build_partition_diameters(rng):
    mem = rng.uniform(0, 1, size=(10, 2))
    part = build_partition(mem, UNIT, seed=0)
    assert part.k == 10 and np.all(part.diameters > 0) and np.all(part.diameters <= np.sqrt(2))
    assert np.all(np.isfinite(part.diameters))


def test_probe_points_count_and_range():
    P = probe_points(UNIT, 1000, seed=0)
    assert len(P) == 20_000 and P.min() >= 0 and P.max() <= 1
    assert len(probe_points(UNIT, 3, seed=0, extra=np.zeros((5, 2)))) == 10_005


def test_max_diameter_shrinks_with_more_memories(rng):
    X = rng.uniform(0, 1, size=(4000, 2))
    from memguard.gas import GngParams, gng_fit
    diam = [build_partition(gng_fit(X, GngParams(max_nodes=k, seed=0)), UNIT, seed=0).max_diameter
            for k in (5, 20, 80)]
    assert diam[0] >= diam[1] >= diam[2]
