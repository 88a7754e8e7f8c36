"""Hot numeric kernels, each in a numba and a numpy flavour.

The two flavours accumulate squared distances in the same (sequential, per
dimension) order so they agree bit-for-bit; ``tests/test_kernels.py`` checks
this.  Public wrappers at the bottom dispatch through :func:`_accel.pick`.
"""
import numpy as np

from ._accel import njit, pick

# --------------------------------------------------------------------------- nearest


@njit
def _nearest_two_nb(points, nodes, alive):
    n, t = points.shape
    m = nodes.shape[0]
    first = np.empty(n, dtype=np.int64)
    second = np.empty(n, dtype=np.int64)
    d_first = np.empty(n)
    d_second = np.empty(n)
    for p in range(n):
        b1 = -1
        b2 = -1
        d1 = np.inf
        d2 = np.inf
        for i in range(m):
            if not alive[i]:
                continue
            d = 0.0
            for k in range(t):
                diff = nodes[i, k] - points[p, k]
                d += diff * diff
            if d < d1:
                b2 = b1
                d2 = d1
                b1 = i
                d1 = d
            elif d < d2:
                b2 = i
                d2 = d
        first[p] = b1
        second[p] = b2
        d_first[p] = d1
        d_second[p] = d2
    return first, second, d_first, d_second


def _sqdist_np(points, nodes):
    d = np.zeros((len(points), len(nodes)))
    for k in range(points.shape[1]):
        diff = nodes[None, :, k] - points[:, None, k]
        d += diff * diff
    return d


def _nearest_two_np(points, nodes, alive, chunk=4096):
    n = len(points)
    first = np.empty(n, dtype=np.int64)
    second = np.full(n, -1, dtype=np.int64)
    d_first = np.empty(n)
    d_second = np.full(n, np.inf)
    for a in range(0, n, chunk):
        d = _sqdist_np(points[a:a + chunk], nodes)
        d[:, ~alive] = np.inf
        rows = np.arange(len(d))
        i1 = np.argmin(d, axis=1)
        first[a:a + chunk] = i1
        d_first[a:a + chunk] = d[rows, i1]
        if d.shape[1] > 1:
            d[rows, i1] = np.inf
            i2 = np.argmin(d, axis=1)
            ok = np.isfinite(d[rows, i2])
            second[a:a + chunk] = np.where(ok, i2, -1)
            d_second[a:a + chunk] = d[rows, i2]
    return first, second, d_first, d_second


# --------------------------------------------------------------------------- per-cell reductions


@njit
def _cell_minmax_nb(cells, values, k):
    n, d = values.shape
    lo = np.full((k, d), np.inf)
    hi = np.full((k, d), -np.inf)
    count = np.zeros(k, dtype=np.int64)
    for p in range(n):
        q = cells[p]
        count[q] += 1
        for j in range(d):
            v = values[p, j]
            if v < lo[q, j]:
                lo[q, j] = v
            if v > hi[q, j]:
                hi[q, j] = v
    return lo, hi, count


def _cell_minmax_np(cells, values, k):
    d = values.shape[1]
    lo = np.full((k, d), np.inf)
    hi = np.full((k, d), -np.inf)
    np.minimum.at(lo, cells, values)
    np.maximum.at(hi, cells, values)
    count = np.bincount(cells, minlength=k).astype(np.int64)
    return lo, hi, count


@njit
def _cell_diameters_nb(cells, points, k):
    # points must be sorted by cell; starts[q]..starts[q+1] is cell q
    n, t = points.shape
    starts = np.zeros(k + 1, dtype=np.int64)
    for p in range(n):
        starts[cells[p] + 1] += 1
    for q in range(k):
        starts[q + 1] += starts[q]
    diam = np.zeros(k)
    for q in range(k):
        best = 0.0
        for a in range(starts[q], starts[q + 1]):
            for b in range(a + 1, starts[q + 1]):
                d = 0.0
                for j in range(t):
                    diff = points[a, j] - points[b, j]
                    d += diff * diff
                if d > best:
                    best = d
        diam[q] = np.sqrt(best)
    return diam


def _cell_diameters_np(cells, points, k, chunk=2048):
    diam = np.zeros(k)
    bounds = np.searchsorted(cells, np.arange(k + 1))
    for q in range(k):
        pts = points[bounds[q]:bounds[q + 1]]
        best = 0.0
        for a in range(0, len(pts), chunk):
            d = _sqdist_np(pts[a:a + chunk], pts)
            if d.size:
                best = max(best, float(d.max()))
        diam[q] = np.sqrt(best)
    return diam


# --------------------------------------------------------------------------- growing neural gas


@njit
def _gng_loop_nb(X, order, W, alive, err, age, max_nodes, eps_b, eps_n, max_age,
                 insert_every, split_decay, error_decay, n_iters):
    m, t = W.shape
    n_alive = 0
    for i in range(m):
        if alive[i]:
            n_alive += 1
    step = 0
    total = order.shape[0]
    while step < total:
        if step >= n_iters and n_alive >= max_nodes:
            break
        x = X[order[step]]
        step += 1
        b1 = -1
        b2 = -1
        d1 = np.inf
        d2 = np.inf
        for i in range(m):
            if not alive[i]:
                continue
            d = 0.0
            for k in range(t):
                diff = W[i, k] - x[k]
                d += diff * diff
            if d < d1:
                b2 = b1
                d2 = d1
                b1 = i
                d1 = d
            elif d < d2:
                b2 = i
                d2 = d
        for j in range(m):
            if age[b1, j] >= 0:
                age[b1, j] += 1
                age[j, b1] += 1
        err[b1] += d1
        for k in range(t):
            W[b1, k] += eps_b * (x[k] - W[b1, k])
        for j in range(m):
            if age[b1, j] >= 0:
                for k in range(t):
                    W[j, k] += eps_n * (x[k] - W[j, k])
        age[b1, b2] = 0
        age[b2, b1] = 0
        for j in range(m):
            if age[b1, j] > max_age:
                age[b1, j] = -1
                age[j, b1] = -1
                orphan = True
                for i in range(m):
                    if age[j, i] >= 0:
                        orphan = False
                        break
                if orphan:
                    alive[j] = False
                    err[j] = 0.0
                    n_alive -= 1
        if step % insert_every == 0 and n_alive < max_nodes:
            q = -1
            eq = -1.0
            for i in range(m):
                if alive[i] and err[i] > eq:
                    q = i
                    eq = err[i]
            f = -1
            ef = -1.0
            for j in range(m):
                if age[q, j] >= 0 and err[j] > ef:
                    f = j
                    ef = err[j]
            if f >= 0:
                r = 0
                while alive[r]:
                    r += 1
                for k in range(t):
                    W[r, k] = 0.5 * (W[q, k] + W[f, k])
                alive[r] = True
                n_alive += 1
                age[q, f] = -1
                age[f, q] = -1
                age[q, r] = 0
                age[r, q] = 0
                age[r, f] = 0
                age[f, r] = 0
                err[q] *= split_decay
                err[f] *= split_decay
                err[r] = err[q]
        for i in range(m):
            if alive[i]:
                err[i] *= error_decay
    return step


def _gng_loop_np(X, order, W, alive, err, age, max_nodes, eps_b, eps_n, max_age,
                 insert_every, split_decay, error_decay, n_iters):
    n_alive = int(alive.sum())
    step = 0
    total = len(order)
    t = W.shape[1]
    while step < total:
        if step >= n_iters and n_alive >= max_nodes:
            break
        x = X[order[step]]
        step += 1
        d = np.zeros(len(W))
        for k in range(t):
            diff = W[:, k] - x[k]
            d += diff * diff
        d[~alive] = np.inf
        b1 = int(np.argmin(d))
        d1 = d[b1]
        d[b1] = np.inf
        b2 = int(np.argmin(d))
        row = age[b1]
        nbr = row >= 0
        row[nbr] += 1
        age[nbr, b1] += 1
        err[b1] += d1
        W[b1] += eps_b * (x - W[b1])
        W[nbr] += eps_n * (x - W[nbr])
        age[b1, b2] = age[b2, b1] = 0
        stale = np.flatnonzero(row > max_age)
        if stale.size:
            age[b1, stale] = -1
            age[stale, b1] = -1
            orphans = stale[~(age[stale] >= 0).any(axis=1)]
            alive[orphans] = False
            err[orphans] = 0.0
            n_alive -= len(orphans)
        if step % insert_every == 0 and n_alive < max_nodes:
            e = np.where(alive, err, -1.0)
            q = int(np.argmax(e))
            e = np.where(age[q] >= 0, err, -1.0)
            f = int(np.argmax(e))
            if age[q, f] >= 0:
                r = int(np.argmin(alive))
                W[r] = 0.5 * (W[q] + W[f])
                alive[r] = True
                n_alive += 1
                age[q, f] = age[f, q] = -1
                age[q, r] = age[r, q] = 0
                age[r, f] = age[f, r] = 0
                err[q] *= split_decay
                err[f] *= split_decay
                err[r] = err[q]
        err[alive] *= error_decay
    return step


# --------------------------------------------------------------------------- public dispatch


def nearest_two(points, nodes, alive=None, backend=None):
    """Indices and squared distances of the two closest live nodes (ties -> lower index)."""
    points = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
    nodes = np.ascontiguousarray(nodes, dtype=np.float64)
    if alive is None:
        alive = np.ones(len(nodes), dtype=np.bool_)
    return pick(_nearest_two_nb, _nearest_two_np, backend)(points, nodes, alive)


def assign(points, nodes, backend=None):
    """Nearest-node index per point (ties -> lower index)."""
    return nearest_two(points, nodes, backend=backend)[0]


def cell_minmax(cells, values, k, backend=None):
    cells = np.ascontiguousarray(cells, dtype=np.int64)
    values = np.ascontiguousarray(np.atleast_2d(values), dtype=np.float64)
    return pick(_cell_minmax_nb, _cell_minmax_np, backend)(cells, values, k)


def cell_diameters(cells, points, k, backend=None):
    """Max pairwise distance among the points of each cell (0 for < 2 points)."""
    order = np.argsort(cells, kind="stable")
    cells = np.ascontiguousarray(np.asarray(cells)[order], dtype=np.int64)
    points = np.ascontiguousarray(np.asarray(points, dtype=np.float64)[order])
    return pick(_cell_diameters_nb, _cell_diameters_np, backend)(cells, points, k)


def gng_loop(*args, backend=None):
    return pick(_gng_loop_nb, _gng_loop_np, backend)(*args)
