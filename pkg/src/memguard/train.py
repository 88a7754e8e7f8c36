"""Losses and training loops: vanilla, augmented Lagrangian, constrained.

The constraint term penalises the violation magnitude

    c(s) = max(0, |M(s) - f(s)|_inf - delta) = max(0, -psi(s))

so a satisfied constraint contributes nothing and its subgradient is zero.
"""
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .net import AdamState, ConstrainedModel, adam_step, init_mlp

TRAIN_MODES = ("vanilla", "aug-lagrangian", "constrained")
METRIC_COLUMNS = (
    "step", "approx_loss_D", "avg_cviol_Omega", "max_cviol_Omega", "avg_cviol_D",
    "lambda1", "lambda2", "mu1", "mu2",
)


@dataclass(frozen=True)
class Multipliers:
    lambda1: float = 0.0
    lambda2: float = 0.0
    mu1: float = 1.0
    mu2: float = 1.0
    beta: float = 2.0
    mu_cap: float = 1e4
    last_c1: float = float("inf")
    last_c2: float = float("inf")


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "vanilla"
    epochs: int = 20
    batch_size: int = 64
    lr: float = 0.01
    hidden: tuple = (64, 64)
    seed: int = 0
    delta: float = None  # None -> take delta from the constraint map
    holdout: float = 0.1
    skip: tuple = None  # residual columns for the raw network
    cell_inputs: bool = False  # feed the cell interval to the network (needs a constraint map)
    multipliers: Multipliers = field(default_factory=Multipliers)

    def __post_init__(self):
        if self.mode not in TRAIN_MODES:
            raise ConfigError(f"unknown training mode {self.mode!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if not 0 <= self.holdout < 1:
            raise ConfigError("holdout must lie in [0, 1)")

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["skip"] = None if self.skip is None else list(self.skip)
        return d


def _out(M, s):
    return np.asarray(M(s), dtype=float).reshape(len(s), -1)


# --------------------------------------------------------------------------- losses


def mse_loss(model, s, x):
    """Mean Euclidean error ``(1/N) sum |f(s_i) - x_i|_2`` and its parameter gradients."""
    s = np.atleast_2d(s)
    out, cache = model.forward(s)
    r = out - np.asarray(x, dtype=float).reshape(out.shape)
    norms = np.linalg.norm(r, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    g = np.where(norms[:, None] > 0, r / safe[:, None], 0.0) / len(s)
    return float(norms.mean()), model.backward(cache, g)


def violation_terms(out, m_out, delta):
    """Per-row violation ``c`` and ``dc/d out`` (nonzero only on the arg-max dimension)."""
    diff = out - m_out
    absd = np.abs(diff)
    j = np.argmax(absd, axis=1)
    rows = np.arange(len(out))
    c = np.maximum(0.0, absd[rows, j] - delta)
    dc = np.zeros_like(out)
    dc[rows, j] = np.sign(diff[rows, j]) * (c > 0)
    return c, dc


def violation(model, M, s, delta):
    """``max(0, -psi)``: how far ``model`` strays from ``M`` beyond ``delta``.

    ``model`` may be a callable or an array of already-computed outputs.
    """
    s = np.atleast_2d(np.asarray(s, dtype=float))
    out = np.asarray(model(s) if callable(model) else model, dtype=float).reshape(len(s), -1)
    c, _ = violation_terms(out, _out(M, s), delta)
    return c


def _add(a, b, scale=1.0):
    return [(Wa + scale * Wb, ba + scale * bb) for (Wa, ba), (Wb, bb) in zip(a, b)]


def aug_lagrangian_loss(model, batch_D, batch_Omega, M, delta, mult):
    """Label loss on D plus linear and quadratic violation penalties on D and Omega.

    Returns ``(loss, grads, mean_c_D, mean_c_Omega)``.
    """
    sD, xD = batch_D
    sO = np.atleast_2d(batch_Omega)
    out_D, cache_D = model.forward(sD)
    r = out_D - np.asarray(xD, dtype=float).reshape(out_D.shape)
    norms = np.linalg.norm(r, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    g_D = np.where(norms[:, None] > 0, r / safe[:, None], 0.0) / len(sD)
    cD, dcD = violation_terms(out_D, _out(M, sD), delta)
    g_D += (mult.lambda1 + 2.0 * mult.mu1 * cD)[:, None] * dcD / len(sD)
    loss = norms.mean() + mult.lambda1 * cD.mean() + mult.mu1 * np.mean(cD**2)
    grads = model.backward(cache_D, g_D)

    out_O, cache_O = model.forward(sO)
    cO, dcO = violation_terms(out_O, _out(M, sO), delta)
    loss += mult.lambda2 * cO.mean() + mult.mu2 * np.mean(cO**2)
    if np.any(cO > 0):
        g_O = (mult.lambda2 + 2.0 * mult.mu2 * cO)[:, None] * dcO / len(sO)
        grads = _add(grads, model.backward(cache_O, g_O))
    return float(loss), grads, float(cD.mean()), float(cO.mean())


def update_multipliers(mult, c_D, c_Omega, shrink=0.9):
    """Dual ascent ``lambda += 2 mu c``; ``mu *= beta`` (capped) when ``c`` did not shrink by ``shrink``."""
    if c_D < 0 or c_Omega < 0:
        raise ValueError("mean violations must be nonnegative")

    def one(lam, mu, c, last):
        if c == 0:
            return lam, mu, c
        lam = lam + 2.0 * mu * c
        if c > shrink * last:
            mu = min(mult.beta * mu, mult.mu_cap)
        return lam, mu, c

    l1, m1, c1 = one(mult.lambda1, mult.mu1, c_D, mult.last_c1)
    l2, m2, c2 = one(mult.lambda2, mult.mu2, c_Omega, mult.last_c2)
    return replace(mult, lambda1=l1, lambda2=l2, mu1=m1, mu2=m2, last_c1=c1, last_c2=c2)


# --------------------------------------------------------------------------- training loop


class MetricsHistory(dict):
    """Column name -> list of per-step values."""

    def __init__(self):
        super().__init__({c: [] for c in METRIC_COLUMNS})

    def append(self, **row):
        for c in METRIC_COLUMNS:
            self[c].append(row[c])

    def rows(self):
        return [dict(zip(METRIC_COLUMNS, vals)) for vals in zip(*(self[c] for c in METRIC_COLUMNS))]

    def last(self):
        return {c: self[c][-1] for c in METRIC_COLUMNS}


def split_holdout(n, frac, rng):
    perm = rng.permutation(n)
    n_hold = int(round(frac * n))
    return np.sort(perm[n_hold:]), np.sort(perm[:n_hold])


def _union_bbox(*arrays):
    return np.min([a.min(axis=0) for a in arrays], axis=0), np.max([a.max(axis=0) for a in arrays], axis=0)


def train(config, D, Omega, M=None, cmap=None):
    """Seeded mini-batch training; returns ``(model, MetricsHistory)``.

    Metrics are recorded before the first update (step 0) and after every
    update, on the held-out slices of D and Omega.
    """
    if (config.mode == "constrained" or config.cell_inputs) and cmap is None:
        raise ConfigError(f"{config.mode} training with these settings needs a constraint map")
    delta = config.delta if config.delta is not None else (cmap.delta if cmap is not None else None)
    if config.mode != "vanilla" and (M is None or delta is None):
        raise ConfigError(f"{config.mode} training needs the reference model and delta")

    ss = np.random.SeedSequence([config.seed, 0x7A1])
    split_ss, init_ss, batch_ss = ss.spawn(3)
    split_rng = np.random.default_rng(split_ss)
    tr_D, ho_D = split_holdout(len(D), config.holdout, split_rng)
    tr_O, ho_O = split_holdout(len(Omega), config.holdout, split_rng)
    sD, xD = D.s[tr_D], D.x[tr_D]
    sO = Omega.s[tr_O]
    hD_s, hD_x = D.s[ho_D], D.x[ho_D]
    hO_s = Omega.s[ho_O]
    track = M is not None and delta is not None
    if track:
        m_hD = _out(M, hD_s) if len(hD_s) else None
        m_hO = _out(M, hO_s) if len(hO_s) else None

    skip = None if config.skip is None else list(config.skip)
    resid = D.x if skip is None else D.x - D.s[:, skip]
    in_lo, in_hi = _union_bbox(D.s, Omega.s)
    n_in = D.s.shape[1]
    if config.cell_inputs:
        n_in += 2 * cmap.out_dim
        in_lo = np.concatenate([in_lo, cmap.lo.min(axis=0), cmap.hi.min(axis=0)])
        in_hi = np.concatenate([in_hi, cmap.lo.max(axis=0), cmap.hi.max(axis=0)])
    params = init_mlp(
        [n_in, *config.hidden, D.x.shape[1]],
        seed=int(init_ss.generate_state(1)[0]),
        in_bbox=(in_lo, in_hi),
        out_bbox=(resid.min(axis=0), resid.max(axis=0)),
        skip=skip,
        cell_inputs=config.cell_inputs,
    )
    mode = "wrapped" if config.mode == "constrained" else "raw"
    model = ConstrainedModel(params, cmap, mode)
    adam = AdamState.for_params(params, lr=config.lr)
    mult = config.multipliers
    hist = MetricsHistory()
    rng = np.random.default_rng(batch_ss)

    def record(step):
        row = {"step": step, "lambda1": mult.lambda1, "lambda2": mult.lambda2, "mu1": mult.mu1, "mu2": mult.mu2}
        if len(hD_s):
            out_hD = model(hD_s)
            row["approx_loss_D"] = float(np.linalg.norm(out_hD - hD_x, axis=1).mean())
        else:
            row["approx_loss_D"] = float("nan")
            out_hD = None
        if track and out_hD is not None:
            row["avg_cviol_D"] = float(violation_terms(out_hD, m_hD, delta)[0].mean())
        else:
            row["avg_cviol_D"] = float("nan")
        if track and len(hO_s):
            cO = violation_terms(model(hO_s), m_hO, delta)[0]
            row["avg_cviol_Omega"], row["max_cviol_Omega"] = float(cO.mean()), float(cO.max())
        else:
            row["avg_cviol_Omega"] = row["max_cviol_Omega"] = float("nan")
        hist.append(**row)

    record(0)
    step = 0
    bs = config.batch_size
    for _ in range(config.epochs):
        perm_D = rng.permutation(len(sD))
        perm_O = rng.permutation(len(sO))
        sum_cD = sum_cO = 0.0
        n_batches = 0
        for a in range(0, len(sD), bs):
            idx = perm_D[a:a + bs]
            if config.mode == "vanilla":
                _, grads = mse_loss(model, sD[idx], xD[idx])
            else:
                o_idx = perm_O[np.arange(n_batches * bs, (n_batches + 1) * bs) % len(sO)]
                _, grads, cD, cO = aug_lagrangian_loss(model, (sD[idx], xD[idx]), sO[o_idx], M, delta, mult)
                sum_cD += cD
                sum_cO += cO
            model.params = adam_step(model.params, grads, adam)
            n_batches += 1
            step += 1
            record(step)
        if config.mode != "vanilla":
            mult = update_multipliers(mult, sum_cD / n_batches, sum_cO / n_batches)
    return model, hist
