"""Growing neural gas over the unlabeled input samples.

The fitted node positions are the *memories* that seed the Voronoi partition.
"""
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .errors import DomainError


@dataclass(frozen=True)
class GngParams:
    max_nodes: int = 100
    eps_b: float = 0.05
    eps_n: float = 0.006
    max_age: int = 50
    insert_every: int = 100
    split_decay: float = 0.5
    error_decay: float = 0.995
    n_iters: int = None  # None -> 2 * max_nodes * insert_every
    seed: int = 0
    normalize: bool = False

    def __post_init__(self):
        if not 0 < self.eps_n < self.eps_b < 1:
            raise DomainError("need 0 < eps_n < eps_b < 1")
        if self.max_nodes < 2:
            raise DomainError("max_nodes must be >= 2")
        if self.max_age < 1 or self.insert_every < 1:
            raise DomainError("max_age and insert_every must be positive")
        if self.n_iters is not None and self.n_iters < 1:
            raise DomainError("n_iters must be positive")

    @property
    def iterations(self):
        if self.n_iters is not None:
            return self.n_iters
        return 2 * self.max_nodes * self.insert_every


@dataclass
class NeuralGas:
    nodes: np.ndarray
    edges: dict  # (i, j) with i < j -> age
    node_error: np.ndarray
    params: GngParams = None
    steps: int = 0

    def __len__(self):
        return len(self.nodes)

    def neighbors(self, i):
        return sorted({b if a == i else a for (a, b) in self.edges if i in (a, b)})

    def to_dict(self):
        return {
            "nodes": self.nodes.tolist(),
            "edges": [[int(i), int(j), int(a)] for (i, j), a in sorted(self.edges.items())],
            "node_error": self.node_error.tolist(),
            "params": None if self.params is None else asdict(self.params),
            "seed": None if self.params is None else self.params.seed,
            "steps": int(self.steps),
        }

    @classmethod
    def from_dict(cls, d):
        params = None if d.get("params") is None else GngParams(**d["params"])
        return cls(
            nodes=np.asarray(d["nodes"], dtype=float),
            edges={(int(i), int(j)): int(a) for i, j, a in d["edges"]},
            node_error=np.asarray(d["node_error"], dtype=float),
            params=params,
            steps=int(d.get("steps", 0)),
        )


def gng_fit(samples, params, backend=None):
    """Fit a growing neural gas to ``samples`` (a Dataset or an (n, t) array).

    One sample is presented per step in a seeded random order.  Once
    ``params.iterations`` steps are done the loop keeps going (for at most
    ``max_nodes * insert_every`` further steps) until ``max_nodes`` live nodes
    exist, so edge-age pruning late in the run cannot leave the gas short.
    """
    X = np.asarray(getattr(samples, "s", samples), dtype=np.float64)
    if X.ndim != 2 or len(X) < 2:
        raise DomainError("gng_fit needs at least 2 samples")
    lo, span = X.min(axis=0), np.ptp(X, axis=0)
    span = np.where(span > 0, span, 1.0)
    if params.normalize:
        X = (X - lo) / span
    X = np.ascontiguousarray(X)

    rng = np.random.default_rng(np.random.SeedSequence([params.seed, 0x6A5]))
    m, t = params.max_nodes, X.shape[1]
    W = np.zeros((m, t))
    alive = np.zeros(m, dtype=np.bool_)
    err = np.zeros(m)
    age = np.full((m, m), -1, dtype=np.int32)
    W[:2] = X[rng.choice(len(X), size=2, replace=False)]
    alive[:2] = True
    age[0, 1] = age[1, 0] = 0

    n_iters = params.iterations
    order = rng.integers(0, len(X), size=n_iters + m * params.insert_every)
    steps = kernels.gng_loop(
        X, order, W, alive, err, age, m, params.eps_b, params.eps_n, params.max_age,
        params.insert_every, params.split_decay, params.error_decay, n_iters, backend=backend,
    )

    live = np.flatnonzero(alive)
    remap = np.full(m, -1)
    remap[live] = np.arange(len(live))
    nodes = W[live]
    if params.normalize:
        nodes = nodes * span + lo
    edges = {}
    ii, jj = np.nonzero(np.triu(age >= 0, k=1))
    for i, j in zip(ii, jj):
        edges[(int(remap[i]), int(remap[j]))] = int(age[i, j])
    return NeuralGas(nodes=nodes, edges=edges, node_error=err[live].copy(), params=params, steps=int(steps))


def nearest_two(gas, s, backend=None):
    """Closest and second-closest memory to a single point ``s``."""
    nodes = getattr(gas, "nodes", gas)
    if len(nodes) < 2:
        raise DomainError("nearest_two needs at least 2 nodes")
    first, second, _, _ = kernels.nearest_two(np.asarray(s, dtype=float)[None, :], nodes, backend=backend)
    return int(first[0]), int(second[0])


def quantization_error(gas, samples, backend=None):
    """Mean squared distance from each sample to its nearest memory."""
    nodes = getattr(gas, "nodes", gas)
    if len(nodes) == 0:
        raise DomainError("empty gas")
    X = np.asarray(getattr(samples, "s", samples), dtype=float)
    _, _, d1, _ = kernels.nearest_two(X, nodes, backend=backend)
    return float(d1.mean())
