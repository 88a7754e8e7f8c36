"""Per-cell output intervals of the reference model (the constraint map)."""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DomainError
from .partition import Partition, cell_of, probe_points

DEFAULT_ETA = 1e-4
LIPSCHITZ_FLOOR = 1e-6


@dataclass(frozen=True)
class LipschitzEstimate:
    value: float
    n_pairs: int
    safety_factor: float


@dataclass
class ConstraintMap:
    partition: Partition
    lo: np.ndarray  # (k, d)
    hi: np.ndarray  # (k, d)
    delta: float
    lipschitz: float
    eta: float = DEFAULT_ETA
    empty_cells: list = field(default_factory=list)
    probe_counts: np.ndarray = None
    seed: int = None
    anchor: list = None  # input columns added back to the per-cell intervals

    @property
    def k(self):
        return self.lo.shape[0]

    @property
    def out_dim(self):
        return self.lo.shape[1]

    @property
    def widths(self):
        return self.hi - self.lo

    def base(self, s):
        """Anchor term of ``Lo``/``Up``: zeros, or the anchored input columns."""
        s = np.atleast_2d(s)
        if self.anchor is None:
            return np.zeros((len(s), self.out_dim))
        return s[:, self.anchor]

    def bounds_at(self, s, backend=None):
        """``(Lo(s), Up(s), cell)`` for an (n, t) batch."""
        s = np.atleast_2d(np.asarray(s, dtype=float))
        cells = cell_of(self.partition, s, backend=backend)
        if self.anchor is None:
            return self.lo[cells], self.hi[cells], cells
        b = s[:, self.anchor]
        return b + self.lo[cells], b + self.hi[cells], cells

    def to_dict(self):
        p = self.partition
        return {
            "memories": p.memories.tolist(),
            "bbox": [p.bbox[0].tolist(), p.bbox[1].tolist()],
            "neighbors": [list(map(int, n)) for n in p.neighbor_lists],
            "diameters": p.diameters.tolist(),
            "intervals": np.stack([self.lo, self.hi], axis=-1).tolist(),
            "delta": self.delta,
            "lipschitz": self.lipschitz,
            "eta": self.eta,
            "seed": self.seed,
            "empty_cells": [int(q) for q in self.empty_cells],
            "probe_counts": None if self.probe_counts is None else self.probe_counts.tolist(),
            "anchor": self.anchor,
        }

    @classmethod
    def from_dict(cls, d):
        part = Partition(
            memories=np.asarray(d["memories"], dtype=float),
            bbox=tuple(np.asarray(b, dtype=float) for b in d["bbox"]),
            neighbor_lists=[list(n) for n in d.get("neighbors", [])],
            diameters=np.asarray(d["diameters"], dtype=float),
        )
        iv = np.asarray(d["intervals"], dtype=float)
        pc = d.get("probe_counts")
        return cls(
            partition=part,
            lo=iv[..., 0],
            hi=iv[..., 1],
            delta=float(d["delta"]),
            lipschitz=float(d["lipschitz"]),
            eta=float(d["eta"]),
            empty_cells=list(d.get("empty_cells", [])),
            probe_counts=None if pc is None else np.asarray(pc, dtype=np.int64),
            seed=d.get("seed"),
            anchor=d.get("anchor"),
        )


def _eval(M, s):
    out = np.asarray(M(np.atleast_2d(s)), dtype=float)
    return out.reshape(len(np.atleast_2d(s)), -1)


def inflate(lo, hi, eta):
    """Widen intervals narrower than ``eta`` symmetrically to width ``eta``."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    narrow = (hi - lo) < eta
    mid = 0.5 * (lo + hi)
    lo[narrow] = mid[narrow] - 0.5 * eta
    hi[narrow] = mid[narrow] + 0.5 * eta
    return lo, hi


def estimate_interval(M, cell_samples, out_dim=None, eta=DEFAULT_ETA):
    """Sampled ``[min, max]`` of ``M`` over the samples of one cell.

    With ``out_dim`` set a scalar pair is returned, otherwise arrays over all
    output dimensions.
    """
    pts = np.atleast_2d(np.asarray(cell_samples, dtype=float))
    if len(pts) == 0:
        raise DomainError("cannot estimate an interval from an empty cell")
    vals = _eval(M, pts)
    lo, hi = inflate(vals.min(axis=0), vals.max(axis=0), eta)
    if out_dim is None:
        return lo, hi
    return float(lo[out_dim]), float(hi[out_dim])


def estimate_lipschitz(g, samples, n_pairs=10_000, safety_factor=1.5, seed=0,
                       fd_step=1e-6, max_fd_points=2000, floor=LIPSCHITZ_FLOOR):
    """Sampled Lipschitz constant, inf-norm on outputs and 2-norm on inputs.

    Takes the larger of random-pair slopes and finite-difference gradient
    norms (``max_j |grad g_j|_2``), multiplies by ``safety_factor`` and
    floors at ``floor``.
    """
    X = np.atleast_2d(np.asarray(getattr(samples, "s", samples), dtype=float))
    if len(X) < 2:
        raise DomainError("need at least 2 samples")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x11B]))
    a = rng.integers(0, len(X), n_pairs)
    b = rng.integers(0, len(X), n_pairs)
    keep = np.linalg.norm(X[a] - X[b], axis=1) > 0
    a, b = a[keep], b[keep]
    best = 0.0
    if len(a):
        num = np.abs(_eval(g, X[a]) - _eval(g, X[b])).max(axis=1)
        best = float(np.max(num / np.linalg.norm(X[a] - X[b], axis=1)))
    P = X[rng.permutation(len(X))[:max_fd_points]]
    g0 = _eval(g, P)
    sq = np.zeros_like(g0)
    for k in range(X.shape[1]):
        h = fd_step * max(1.0, float(np.abs(P[:, k]).max()))
        Pk = P.copy()
        Pk[:, k] += h
        sq += ((_eval(g, Pk) - g0) / h) ** 2
    best = max(best, float(np.sqrt(sq.max())))
    return LipschitzEstimate(max(safety_factor * best, floor), int(len(a)), safety_factor)


def _local_probes(partition, q, need, rng, backend=None, rounds=8):
    """Extra probes inside cell ``q``.

    Half come from a box inscribed in the ball of radius r/2 (r = distance to
    the nearest other memory), which lies wholly inside the cell; the rest
    are rejection-sampled from the wider box of half-width r.
    """
    m = partition.memories
    lo, hi = partition.bbox
    t = m.shape[1]
    if len(m) > 1:
        d = np.linalg.norm(m - m[q], axis=1)
        d[q] = np.inf
        r = float(d.min())
    else:
        r = partition.diagonal
    core = r / (2.0 * np.sqrt(t))
    out = [np.clip(rng.uniform(m[q] - core, m[q] + core, size=(need // 2, t)), lo, hi)]
    got = need // 2
    for _ in range(rounds):
        if got >= need:
            break
        cand = rng.uniform(np.maximum(m[q] - r, lo), np.minimum(m[q] + r, hi), size=(8 * need, t))
        cand = cand[cell_of(partition, cand, backend=backend) == q]
        out.append(cand[: need - got])
        got += len(out[-1])
    pts = np.concatenate(out)
    # clipping the core box can push points across a bisector near the bbox face
    return pts[cell_of(partition, pts, backend=backend) == q]


def residual_fn(M, anchor):
    """``s -> M(s) - s[:, anchor]``; ``M`` itself when ``anchor`` is None."""
    if anchor is None:
        return M
    return lambda s: _eval(M, s) - np.atleast_2d(s)[:, anchor]


def build_constraint_map(M, partition, probe_samples=None, eta=DEFAULT_ETA, lipschitz=None,
                         seed=0, min_probes=50, n_uniform=None, safety_factor=1.5,
                         anchor=None, backend=None):
    """Interval grid over all cells, plus ``delta = lipschitz * max diameter``.

    With ``anchor`` the intervals bound ``M(s) - s[anchor]`` and the map adds
    ``s[anchor]`` back at lookup; ``|M - f|_inf`` is unaffected, and
    ``lipschitz`` must then be a constant of the residual map.  ``lipschitz``
    may be a float (e.g. a closed-form bound); otherwise it is estimated from
    the probes.  Cells that still have no probe inherit the intervals of the
    nearest nonempty cell and are listed in ``empty_cells``.
    """
    anchor = None if anchor is None else [int(a) for a in anchor]
    M = residual_fn(M, anchor)
    if partition.diameters is None:
        raise DomainError("partition has no diameters; use build_partition")
    k = partition.k
    probes = probe_points(partition.bbox, k, seed, extra=probe_samples, n_uniform=n_uniform)
    cells = cell_of(partition, probes, backend=backend)
    counts = np.bincount(cells, minlength=k)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x10CA1]))
    extra_pts, extra_cells = [], []
    for q in np.flatnonzero(counts < min_probes):
        pts = _local_probes(partition, int(q), int(min_probes - counts[q]), rng, backend=backend)
        extra_pts.append(pts)
        extra_cells.append(np.full(len(pts), q, dtype=np.int64))
    if extra_pts:
        probes = np.concatenate([probes] + extra_pts)
        cells = np.concatenate([cells] + extra_cells)
    values = _eval(M, probes)
    lo, hi, counts = kernels.cell_minmax(cells, values, k, backend=backend)

    empty = [int(q) for q in np.flatnonzero(counts == 0)]
    if empty:
        full = np.flatnonzero(counts > 0)
        mem = partition.memories
        for q in empty:
            src = full[np.argmin(np.linalg.norm(mem[full] - mem[q], axis=1))]
            lo[q], hi[q] = lo[src], hi[src]
    lo, hi = inflate(lo, hi, eta)

    if lipschitz is None:
        lipschitz = estimate_lipschitz(M, probes, safety_factor=safety_factor, seed=seed).value
    lipschitz = float(lipschitz)
    return ConstraintMap(
        partition=partition,
        lo=lo,
        hi=hi,
        delta=lipschitz * partition.max_diameter,
        lipschitz=lipschitz,
        eta=eta,
        empty_cells=empty,
        probe_counts=counts,
        seed=seed,
        anchor=anchor,
    )


def psi(M, f_value, s, delta):
    """Model-constraint margin ``delta - |M(s) - f|_inf``; positive means satisfied."""
    s = np.asarray(s, dtype=float)
    m = _eval(M, s)
    f = np.asarray(f_value, dtype=float).reshape(m.shape)
    out = delta - np.abs(m - f).max(axis=1)
    return float(out[0]) if s.ndim == 1 else out
