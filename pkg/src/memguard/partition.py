"""Voronoi cells around the memories, clipped to the sampling box."""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DomainError


@dataclass(frozen=True)
class LinearInequality:
    """``normal . s + offset > 0``."""

    normal: np.ndarray
    offset: float

    def __call__(self, s):
        return np.asarray(s, dtype=float) @ self.normal + self.offset


@dataclass
class Partition:
    memories: np.ndarray
    bbox: tuple
    neighbor_lists: list = field(default_factory=list)
    diameters: np.ndarray = None

    def __post_init__(self):
        self.memories = np.atleast_2d(np.asarray(self.memories, dtype=float))
        self.bbox = tuple(np.asarray(b, dtype=float) for b in self.bbox)
        if not self.neighbor_lists:
            self.neighbor_lists = [[] for _ in range(len(self.memories))]

    def __len__(self):
        return len(self.memories)

    @property
    def k(self):
        return len(self.memories)

    @property
    def diagonal(self):
        lo, hi = self.bbox
        return float(np.linalg.norm(hi - lo))

    @property
    def max_diameter(self):
        return float(np.max(self.diameters))


def half_space(m_i, m_j):
    """Perpendicular bisector of ``m_i m_j``, positive on ``m_i``'s side.

    ``H(s) = (m_i - m_j) . s + (|m_j|^2 - |m_i|^2) / 2`` which is half of
    ``d(s, m_j)^2 - d(s, m_i)^2``.
    """
    m_i = np.asarray(m_i, dtype=float)
    m_j = np.asarray(m_j, dtype=float)
    normal = m_i - m_j
    if not np.any(normal):
        raise DomainError("coincident memories have no bisector")
    return LinearInequality(normal, 0.5 * (m_j @ m_j - m_i @ m_i))


def cell_of(partition, s, backend=None):
    """Index of the nearest memory; ties go to the lower index.

    Returns an int for a single point, an int array for an (n, t) batch.
    """
    memories = getattr(partition, "memories", partition)
    if len(memories) == 0:
        raise DomainError("empty partition")
    s = np.asarray(s, dtype=float)
    idx = kernels.assign(np.atleast_2d(s), memories, backend=backend)
    return int(idx[0]) if s.ndim == 1 else idx


def probe_points(bbox, k, seed, extra=None, n_uniform=None):
    """Uniform draws over ``bbox`` (``max(1e4, 20 k)`` by default) plus ``extra`` points."""
    lo, hi = bbox
    n = n_uniform if n_uniform is not None else max(10_000, 20 * k)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x960BE]))
    pts = rng.uniform(lo, hi, size=(n, len(lo)))
    if extra is not None:
        pts = np.concatenate([np.asarray(getattr(extra, "s", extra), dtype=float), pts])
    return pts


def _fallback_diameter(partition, q):
    m = partition.memories
    nbrs = partition.neighbor_lists[q]
    if not nbrs:
        d = np.linalg.norm(m - m[q], axis=1)
        d[q] = np.inf
        nbrs = [int(np.argmin(d))] if len(m) > 1 else []
    if not nbrs:
        return partition.diagonal
    mids = 0.5 * (m[nbrs] + m[q])
    return min(2.0 * float(np.max(np.linalg.norm(mids - m[q], axis=1))), partition.diagonal)


def cell_diameter(partition, index, probe_samples, backend=None):
    """Diameter estimate of one cell from the probes it captures."""
    pts = np.asarray(getattr(probe_samples, "s", probe_samples), dtype=float)
    cells = cell_of(partition, pts, backend=backend)
    mine = pts[cells == index]
    if len(mine) < 2:
        return _fallback_diameter(partition, index)
    d = kernels.cell_diameters(np.zeros(len(mine), dtype=np.int64), mine, 1, backend=backend)[0]
    return min(float(d), partition.diagonal)


def estimate_diameters(partition, probe_samples, backend=None):
    """All cell diameters in one pass over the probes."""
    pts = np.asarray(getattr(probe_samples, "s", probe_samples), dtype=float)
    cells = cell_of(partition, pts, backend=backend)
    diam = kernels.cell_diameters(cells, pts, partition.k, backend=backend)
    counts = np.bincount(cells, minlength=partition.k)
    for q in np.flatnonzero(counts < 2):
        diam[q] = _fallback_diameter(partition, q)
    return np.minimum(diam, partition.diagonal)


def build_partition(gas, bbox, probe_samples=None, seed=0, n_uniform=None, backend=None):
    """Partition from a fitted gas; diameters come from uniform probes plus ``probe_samples``."""
    memories = getattr(gas, "nodes", gas)
    k = len(memories)
    nbrs = [gas.neighbors(i) for i in range(k)] if hasattr(gas, "neighbors") else []
    part = Partition(memories=memories, bbox=bbox, neighbor_lists=nbrs)
    probes = probe_points(part.bbox, k, seed, extra=probe_samples, n_uniform=n_uniform)
    part.diameters = estimate_diameters(part, probes, backend=backend)
    return part
