"""Evaluation protocol: constraint losses, open-loop rollouts, insulin-bump
monotonicity and a numeric check of the approximation-error bound."""
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .bounds import estimate_lipschitz
from .errors import DomainError
from .train import violation

TOL = 1e-9


def _out(f, s):
    s = np.atleast_2d(np.asarray(s, dtype=float))
    return np.asarray(f(s), dtype=float).reshape(len(s), -1)


def constraint_losses(model, M, dataset, delta):
    """Mean and max of ``max(0, |M - model|_inf - delta)`` over the dataset inputs."""
    s = np.asarray(getattr(dataset, "s", dataset), dtype=float)
    if len(s) == 0:
        raise DomainError("empty dataset")
    c = violation(model, M, s, delta)
    return float(c.mean()), float(c.max())


def interval_violation(model, cmap, s):
    """Per-row distance (inf-norm) of the model output outside its cell interval."""
    s = np.atleast_2d(np.asarray(s, dtype=float))
    out = _out(model, s)
    lo, hi, _ = cmap.bounds_at(s)
    return np.maximum(0.0, np.maximum(lo - out, out - hi)).max(axis=1)


def rollout(model, s0, controls, T=None):
    """Feed the model's own predictions back for ``T`` steps; returns ``T + 1`` states.

    ``controls`` is a ``(T, u)`` array (``u`` may be 0), appended to the state
    at each step.
    """
    state = np.asarray(s0, dtype=float).ravel()
    controls = np.asarray(controls, dtype=float)
    if controls.ndim == 1:
        controls = controls[:, None] if controls.size else controls.reshape(0, 0)
    T = len(controls) if T is None else int(T)
    if T < 1:
        raise DomainError("rollout needs T >= 1")
    if len(controls) < T:
        raise DomainError(f"need {T} control rows, got {len(controls)}")
    traj = [state]
    for t in range(T):
        inp = np.concatenate([state, controls[t]])[None]
        state = _out(model, inp)[0]
        traj.append(state)
    return np.asarray(traj)


def positional_drift(traj, dims=(0, 1)):
    """Euclidean displacement from the start, per step."""
    p = traj[:, list(dims)]
    return np.linalg.norm(p - p[0], axis=1)


def monotonicity_probe(model, inputs, dims, bump=(0.6, 1.0), expected_sign=-1, seed=0, out_dim=0):
    """Bump every coordinate in ``dims`` by one seeded draw from ``bump`` per input.

    A violation is a move of the output against ``expected_sign``; returns
    ``(max, mean)`` of its magnitude.
    """
    s = np.atleast_2d(np.asarray(getattr(inputs, "s", inputs), dtype=float))
    idx = np.arange(s.shape[1])[dims]
    if idx.size == 0:
        raise DomainError("no coordinates to bump")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB0B]))
    amount = rng.uniform(bump[0], bump[1], size=len(s))
    bumped = s.copy()
    bumped[:, idx] += amount[:, None]
    change = _out(model, bumped)[:, out_dim] - _out(model, s)[:, out_dim]
    v = np.maximum(0.0, -expected_sign * change)
    return float(v.max()), float(v.mean())


@dataclass
class TheoremCheck:
    epsilon: float
    alpha: float
    max_diameter: float
    bound: float
    observed: float
    passed: bool


def theorem_check(raw, constrained, truth, partition, probes, tol=TOL, seed=0):
    """Compare ``max |Gamma(f) - truth|_inf`` with ``2 eps + alpha * max diameter``.

    ``eps`` is the raw model's worst error against ``truth`` on the probes and
    ``alpha`` a sampled Lipschitz constant of the raw model.
    """
    P = np.atleast_2d(np.asarray(getattr(probes, "s", probes), dtype=float))
    f = _out(truth, P)
    eps = float(np.abs(_out(raw, P) - f).max())
    alpha = estimate_lipschitz(raw, P, seed=seed).value
    diam = float(np.max(partition.diameters))
    bound = 2.0 * eps + alpha * diam
    observed = float(np.abs(_out(constrained, P) - f).max())
    return TheoremCheck(eps, alpha, diam, bound, observed, bool(observed <= bound * (1.0 + tol)))


@dataclass
class EvalReport:
    mode: str
    memories: int
    seed: int
    approx_loss_D: float
    avg_cviol_D: float
    max_cviol_D: float
    avg_cviol_Omega: float
    max_cviol_Omega: float
    avg_ival_Omega: float = float("nan")
    max_ival_Omega: float = float("nan")
    drift: list = field(default_factory=list)
    monotonicity: tuple = None
    theorem: TheoremCheck = None

    def __post_init__(self):
        vals = [self.avg_cviol_D, self.max_cviol_D, self.avg_cviol_Omega, self.max_cviol_Omega]
        if any(v < 0 for v in vals):
            raise DomainError("violations must be nonnegative")

    def to_dict(self):
        d = asdict(self)
        d["drift"] = [float(x) for x in self.drift]
        d["monotonicity"] = None if self.monotonicity is None else list(self.monotonicity)
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        d = {k: v for k, v in d.items() if k in names}
        if d.get("theorem") is not None:
            d["theorem"] = TheoremCheck(**d["theorem"])
        if d.get("monotonicity") is not None:
            d["monotonicity"] = tuple(d["monotonicity"])
        return cls(**d)

    def row(self):
        """Flat summary row (one line of the summary CSV)."""
        r = {
            "mode": self.mode,
            "memories": self.memories,
            "seed": self.seed,
            "approx_loss_D": self.approx_loss_D,
            "avg_cviol_D": self.avg_cviol_D,
            "max_cviol_D": self.max_cviol_D,
            "avg_cviol_Omega": self.avg_cviol_Omega,
            "max_cviol_Omega": self.max_cviol_Omega,
            "avg_ival_Omega": self.avg_ival_Omega,
            "max_ival_Omega": self.max_ival_Omega,
            "final_drift": self.drift[-1] if self.drift else float("nan"),
            "max_violation": self.monotonicity[0] if self.monotonicity else float("nan"),
            "avg_violation": self.monotonicity[1] if self.monotonicity else float("nan"),
        }
        t = self.theorem
        r.update(
            theorem_epsilon=t.epsilon if t else float("nan"),
            theorem_bound=t.bound if t else float("nan"),
            theorem_observed=t.observed if t else float("nan"),
            theorem_pass=t.passed if t else "",
        )
        return r


SUMMARY_COLUMNS = tuple(EvalReport("", 0, 0, 0, 0, 0, 0, 0).row())


def evaluate(model, M, cmap, D_test, Omega_test, delta, mode, memories, seed,
             rest_state=None, control_dim=0, horizon=20, mono_dims=None, truth=None, probes=None):
    """Run every applicable check and collect an :class:`EvalReport`.

    ``model`` is the deployed predictor (wrapped for constrained runs).  The
    rollout runs when ``rest_state`` is given, the insulin probe when
    ``mono_dims`` is, the bound check when ``truth`` and ``probes`` are.
    """
    out_D = _out(model, D_test.s)
    approx = float(np.linalg.norm(out_D - D_test.x, axis=1).mean())
    aD, mD = constraint_losses(out_D, M, D_test, delta)
    aO, mO = constraint_losses(model, M, Omega_test, delta)
    iv = interval_violation(model, cmap, Omega_test.s)
    drift = []
    if rest_state is not None:
        traj = rollout(model, rest_state, np.zeros((horizon, control_dim)))
        drift = positional_drift(traj).tolist()
    mono = None
    if mono_dims is not None:
        mono = monotonicity_probe(model, D_test, mono_dims, seed=seed)
    thm = None
    if truth is not None and probes is not None:
        raw = model.with_mode("raw") if hasattr(model, "with_mode") else model
        gamma = raw.with_mode("projected") if hasattr(raw, "with_mode") and raw.cmap is not None else raw
        thm = theorem_check(raw, gamma, truth, cmap.partition, probes, seed=seed)
    return EvalReport(
        mode, int(memories), int(seed), approx, aD, mD, aO, mO,
        float(iv.mean()), float(iv.max()), drift, mono, thm,
    )
