"""Synthetic ground-truth systems, reference models and dataset generation.

Two families are provided:

* unicycle -- state ``(x, y, heading, speed)``, control ``(accel, turn_rate)``.
  The reference model is explicit-Euler unicycle kinematics; the "truth" adds
  quadratic drag on speed and a constant heading bias.
* armax -- input is a 30-long history (10 glucose, 10 insulin, 10 meal values),
  output is a single glucose prediction.  The reference model has strictly
  negative insulin weights; the truth does not.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

UNICYCLE_STATE_DIM = 4
UNICYCLE_CONTROL_DIM = 2
ARMAX_LAGS = 10
ARMAX_DIM = 3 * ARMAX_LAGS
GLUCOSE = slice(0, ARMAX_LAGS)
INSULIN = slice(ARMAX_LAGS, 2 * ARMAX_LAGS)
MEAL = slice(2 * ARMAX_LAGS, 3 * ARMAX_LAGS)

SYSTEM_NAMES = ("unicycle-truth", "unicycle-model", "armax-truth", "armax-model")


@dataclass(frozen=True)
class SystemSpec:
    name: str
    dt: float = 0.1
    drag: float = 0.05
    heading_bias: float = 0.01
    armax_weights: np.ndarray = field(default=None, repr=False, compare=False)
    armax_bias: float = 0.0

    def __post_init__(self):
        if self.name not in SYSTEM_NAMES:
            raise DomainError(f"unknown system {self.name!r}")
        if not self.dt > 0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        if self.family == "armax":
            if self.armax_weights is None or np.shape(self.armax_weights) != (ARMAX_DIM,):
                raise DomainError(f"armax systems need {ARMAX_DIM} weights")
            if self.name == "armax-model" and not np.all(np.asarray(self.armax_weights)[INSULIN] < 0):
                raise DomainError("armax-model insulin weights must be strictly negative")

    @property
    def family(self):
        return self.name.split("-")[0]

    @property
    def is_truth(self):
        return self.name.endswith("truth")

    @property
    def input_dim(self):
        return UNICYCLE_STATE_DIM + UNICYCLE_CONTROL_DIM if self.family == "unicycle" else ARMAX_DIM

    @property
    def output_dim(self):
        return UNICYCLE_STATE_DIM if self.family == "unicycle" else 1

    def to_dict(self):
        d = {"name": self.name, "dt": self.dt, "drag": self.drag, "heading_bias": self.heading_bias}
        if self.armax_weights is not None:
            d["armax_weights"] = np.asarray(self.armax_weights).tolist()
            d["armax_bias"] = self.armax_bias
        return d

    @classmethod
    def from_dict(cls, d):
        w = d.get("armax_weights")
        return cls(
            name=d["name"],
            dt=d.get("dt", 0.1),
            drag=d.get("drag", 0.05),
            heading_bias=d.get("heading_bias", 0.01),
            armax_weights=None if w is None else np.asarray(w, dtype=float),
            armax_bias=d.get("armax_bias", 0.0),
        )


def unicycle_specs(dt=0.1, drag=0.05, heading_bias=0.01):
    """Return ``(truth, model)`` unicycle specs."""
    truth = SystemSpec("unicycle-truth", dt=dt, drag=drag, heading_bias=heading_bias)
    model = SystemSpec("unicycle-model", dt=dt, drag=0.0, heading_bias=0.0)
    return truth, model


def armax_specs(seed=0, confound=1.0):
    """Return ``(truth, model)`` ARMAX specs with weights fixed by ``seed``.

    Model insulin weights are uniform in [-1.0, -0.1].  The truth shares the
    glucose and meal weights but adds ``confound`` to every insulin lag, so
    its total insulin response is positive: in recorded data boluses coincide
    with meals and the fitted relation inherits that.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA12]))
    w = np.empty(ARMAX_DIM)
    # glucose weights: positive, sum 0.9 (< 1 keeps the recursion stable)
    w[GLUCOSE] = 0.9 * rng.dirichlet(np.full(ARMAX_LAGS, 2.0))
    w[INSULIN] = rng.uniform(-1.0, -0.1, ARMAX_LAGS)
    w[MEAL] = rng.uniform(0.0, 0.05, ARMAX_LAGS)
    bias = 14.0
    model = SystemSpec("armax-model", armax_weights=w, armax_bias=bias)
    wt = w.copy()
    wt[INSULIN] += confound
    truth = SystemSpec("armax-truth", armax_weights=wt, armax_bias=bias)
    return truth, model


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DomainError("non-finite input")


def unicycle_step(state, control, dt):
    """One explicit-Euler unicycle step; works on single vectors or row batches."""
    state = np.asarray(state, dtype=float)
    control = np.asarray(control, dtype=float)
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    _check_finite(state, control)
    x, y, th, v = (state[..., i] for i in range(4))
    a, om = control[..., 0], control[..., 1]
    return np.stack(
        [x + v * np.cos(th) * dt, y + v * np.sin(th) * dt, th + om * dt, v + a * dt], axis=-1
    )


def truth_step(state, control, spec):
    """Ground-truth unicycle: kinematics plus drag ``-c_d v|v| dt`` and heading bias ``b dt``."""
    if spec.family != "unicycle" or not spec.is_truth:
        raise DomainError(f"truth_step needs unicycle-truth, got {spec.name}")
    out = unicycle_step(state, control, spec.dt)
    v = np.asarray(state, dtype=float)[..., 3]
    out[..., 2] += spec.heading_bias * spec.dt
    out[..., 3] -= spec.drag * v * np.abs(v) * spec.dt
    return out


def truth_gap_bound(spec, v_max):
    """Sup-norm bound on ``truth_step - unicycle_step`` for ``|v| <= v_max``."""
    return (spec.drag * v_max**2 + abs(spec.heading_bias)) * spec.dt


def armax_predict(history, spec):
    """``w . history + bias``; accepts a 30-vector or an (n, 30) batch."""
    if spec.family != "armax":
        raise DomainError(f"armax_predict needs an armax system, got {spec.name}")
    h = np.asarray(history, dtype=float)
    if h.shape[-1] != ARMAX_DIM:
        raise DomainError(f"history must have {ARMAX_DIM} entries, got {h.shape[-1]}")
    _check_finite(h)
    return h @ np.asarray(spec.armax_weights) + spec.armax_bias


def system_fn(spec):
    """Map ``s -> x`` on (n, t) batches for any system spec."""
    if spec.family == "unicycle":
        nx = UNICYCLE_STATE_DIM
        if spec.is_truth:
            return lambda s: truth_step(np.asarray(s)[..., :nx], np.asarray(s)[..., nx:], spec)
        return lambda s: unicycle_step(np.asarray(s)[..., :nx], np.asarray(s)[..., nx:], spec.dt)
    return lambda s: armax_predict(s, spec)[..., None]


def unicycle_lipschitz(spec, bbox, residual=False):
    """Closed-form Lipschitz bound (inf-norm out, 2-norm in) of the unicycle model on ``bbox``.

    For the residual map ``M(s) - state`` the x/y rows have gradient norm
    ``dt sqrt(v^2 sin^2 + cos^2) <= dt max(|v|, 1)`` and the heading/speed
    rows ``dt``.  Adding the identity gives ``sqrt(1 + dt^2 max(v^2, 1))``.
    """
    lo, hi = bbox
    vmax = max(abs(lo[3]), abs(hi[3]), 1.0)
    if residual:
        return float(spec.dt * vmax)
    return float(np.sqrt(1.0 + (spec.dt * vmax) ** 2))


def default_anchor(spec):
    """Input columns whose value each output is measured relative to.

    Unicycle outputs are taken relative to the previous state, ARMAX glucose
    relative to the latest glucose reading.
    """
    if spec.family == "unicycle":
        return list(range(UNICYCLE_STATE_DIM))
    return [ARMAX_LAGS - 1]


# --------------------------------------------------------------------------- datasets


@dataclass
class Dataset:
    s: np.ndarray
    x: np.ndarray = None
    kind: str = "labeled"
    seed: int = None
    state_dim: int = None
    control_dim: int = 0

    def __post_init__(self):
        self.s = np.atleast_2d(np.asarray(self.s, dtype=float))
        if len(self.s) == 0:
            raise DomainError("dataset must be nonempty")
        if self.kind == "unlabeled":
            if self.x is not None:
                raise DomainError("unlabeled datasets carry no labels")
        elif self.kind == "labeled":
            if self.x is None:
                raise DomainError("labeled dataset needs x")
            self.x = np.asarray(self.x, dtype=float).reshape(len(self.s), -1)
        else:
            raise DomainError(f"unknown dataset kind {self.kind!r}")
        if self.state_dim is None:
            self.state_dim = self.s.shape[1] - self.control_dim

    def __len__(self):
        return len(self.s)

    @property
    def bbox(self):
        return self.s.min(axis=0), self.s.max(axis=0)

    def subset(self, idx):
        return Dataset(
            self.s[idx],
            None if self.x is None else self.x[idx],
            kind=self.kind,
            seed=self.seed,
            state_dim=self.state_dim,
            control_dim=self.control_dim,
        )


def _unicycle_trajectory(rng, truth, horizon):
    st = np.array(
        [rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-np.pi, np.pi), rng.uniform(0.0, 4.0)]
    )
    s_rows, x_rows = [], []
    for _ in range(horizon):
        u = np.array([rng.uniform(-1.0, 1.0), rng.uniform(-0.5, 0.5)])
        nxt = truth_step(st, u, truth)
        s_rows.append(np.concatenate([st, u]))
        x_rows.append(nxt)
        st = nxt
    return s_rows, x_rows


def _armax_trajectory(rng, truth, horizon):
    g = np.full(ARMAX_LAGS, rng.uniform(150, 190))
    ins = np.zeros(ARMAX_LAGS)
    meal = np.zeros(ARMAX_LAGS)
    meal[-1] = rng.uniform(50, 150)
    s_rows, x_rows = [], []
    for _ in range(horizon):
        h = np.concatenate([g, ins, meal])
        nxt = float(armax_predict(h, truth))
        s_rows.append(h)
        x_rows.append([nxt])
        new_meal = rng.uniform(20, 120) if rng.random() < 0.1 else 0.0
        # bolus with meals plus a glucose-proportional basal
        new_ins = 0.01 * new_meal + max(0.0, 0.01 * (nxt - 120.0)) + rng.uniform(0, 0.2)
        g = np.append(g[1:], nxt)
        ins = np.append(ins[1:], new_ins)
        meal = np.append(meal[1:], new_meal)
    return s_rows, x_rows


def generate_D(spec, n_trajectories, horizon, seed, size=None):
    """Roll out the truth system from seeded initial conditions.

    Trajectory ``i`` draws from its own stream ``SeedSequence([seed, i])`` so
    the result does not depend on how trajectories are scheduled.
    """
    if not spec.is_truth:
        raise DomainError("datasets are generated from a *-truth system")
    if n_trajectories < 1 or horizon < 1:
        raise DomainError("n_trajectories and horizon must be positive")
    total = n_trajectories * horizon
    size = total if size is None else int(size)
    if size > total or size < 1:
        raise DomainError(f"requested {size} transitions but rollouts give {total}")
    roll = _unicycle_trajectory if spec.family == "unicycle" else _armax_trajectory
    s_rows, x_rows = [], []
    for i in range(n_trajectories):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        s_i, x_i = roll(rng, spec, horizon)
        s_rows.extend(s_i)
        x_rows.extend(x_i)
    control_dim = UNICYCLE_CONTROL_DIM if spec.family == "unicycle" else 0
    return Dataset(
        np.asarray(s_rows[:size]),
        np.asarray(x_rows[:size]),
        kind="labeled",
        seed=seed,
        control_dim=control_dim,
    )


def generate_Omega(bbox, n, emphasis_region, emphasis_fraction, seed, control_dim=0):
    """Unlabeled inputs: a fraction uniform in ``emphasis_region``, the rest uniform in ``bbox``."""
    lo, hi = (np.asarray(b, dtype=float) for b in bbox)
    elo, ehi = (np.asarray(b, dtype=float) for b in emphasis_region)
    if n < 1:
        raise DomainError("n must be positive")
    if not 0.0 <= emphasis_fraction <= 1.0:
        raise DomainError("emphasis_fraction must lie in [0, 1]")
    if np.any(elo > ehi):
        raise DomainError("empty emphasis region")
    if np.any(elo < lo) or np.any(ehi > hi):
        raise DomainError("emphasis region must lie inside the bbox")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x0E6A]))
    n_emph = int(round(emphasis_fraction * n))
    pts = np.concatenate(
        [rng.uniform(elo, ehi, size=(n_emph, len(lo))), rng.uniform(lo, hi, size=(n - n_emph, len(lo)))]
    )
    pts = pts[rng.permutation(n)]
    return Dataset(pts, kind="unlabeled", seed=seed, control_dim=control_dim)


def at_rest_region(bbox, radius=0.5, tol=0.01):
    """At-rest emphasis box for the unicycle: near the origin, speed and controls within ``tol`` of 0."""
    lo, hi = (np.asarray(b, dtype=float) for b in bbox)
    elo = np.array([-radius, -radius, -radius, -tol, -tol, -tol])
    ehi = np.array([radius, radius, radius, tol, tol, tol])
    return np.maximum(elo, lo), np.minimum(ehi, hi)


def armax_bbox(bbox, glucose_floor=120.0):
    """Sampling box for ARMAX inputs: ``bbox`` widened down to ``glucose_floor`` and zero meals."""
    lo, hi = (np.asarray(b, dtype=float).copy() for b in bbox)
    lo[GLUCOSE] = np.minimum(lo[GLUCOSE], glucose_floor)
    lo[MEAL] = np.minimum(lo[MEAL], 0.0)
    return lo, hi


def low_glucose_region(bbox):
    """ARMAX emphasis box: glucose history in [120, 150], meals near zero."""
    lo, hi = (np.asarray(b, dtype=float).copy() for b in bbox)
    elo, ehi = lo.copy(), hi.copy()
    elo[GLUCOSE], ehi[GLUCOSE] = 120.0, 150.0
    ehi[MEAL] = lo[MEAL] + 0.05 * (hi[MEAL] - lo[MEAL])
    return np.maximum(elo, lo), np.minimum(ehi, hi)
