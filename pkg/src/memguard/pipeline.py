"""Run configuration and the six pipeline stages behind the command line.

Output layout under ``RunConfig.out``::

    data/     system.json, D_train.csv, D_test.csv, Omega_train.csv, Omega_test.csv (+ .json sidecars)
    gas/      gas_k{k}.json
    bounds/   bounds_k{k}.json
    models/   {mode}_k{k}_seed{s}.json
    metrics/  {mode}_k{k}_seed{s}.csv
    eval/     {mode}_k{k}_seed{s}.json, rollout_*.csv, summary.csv
    report/   loss_panels.csv, bars.csv, monotonicity.csv, rollouts.csv
"""
import configparser
import logging
import math
import zlib
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import artifacts as io
from . import dynamics as dy
from .bounds import ConstraintMap, build_constraint_map
from .errors import ConfigError, InvariantError
from .evaluate import SUMMARY_COLUMNS, EvalReport, evaluate, positional_drift, rollout
from .gas import GngParams, NeuralGas, gng_fit, quantization_error
from .net import ConstrainedModel, MlpParams
from .partition import build_partition
from .train import METRIC_COLUMNS, TRAIN_MODES, TrainConfig, train

log = logging.getLogger(__name__)

SYSTEMS = ("unicycle", "armax")
PRESETS = ("full", "desk")
CONTAINMENT_TOL = 1e-12


def derive_seed(root, name, *extra):
    """Named substream of the root seed, as a 32-bit int."""
    ss = np.random.SeedSequence([int(root), zlib.crc32(name.encode()), *map(int, extra)])
    return int(ss.generate_state(1)[0])


# --------------------------------------------------------------------------- configuration


@dataclass
class RunConfig:
    system: str = "unicycle"
    seed: int = 0
    seeds: tuple = (0, 1, 2)
    modes: tuple = TRAIN_MODES
    out: str = "runs/default"
    # data
    n_train: int = 15_000
    n_test: int = 2000
    omega_train: int = 15_000
    omega_test: int = 2000
    horizon: int = 20
    emphasis_fraction: float = 0.5
    drag: float = 0.05
    heading_bias: float = 0.01
    dt: float = 0.1
    confound: float = 1.0
    # gas
    memories: tuple = (500, 1000, 2500)
    eps_b: float = 0.05
    eps_n: float = 0.006
    max_age: int = 50
    insert_every: int = 100
    n_iters: int = 0  # 0 -> gas default
    normalize: bool = False
    # bounds
    eta: float = 1e-4
    safety_factor: float = 1.5
    min_probes: int = 50
    anchor: bool = True
    # train
    epochs: int = 100
    batch_size: int = 64
    lr: float = 0.003
    lr_grid: tuple = ()
    hidden: tuple = (64, 64)
    cell_inputs: bool = True
    # eval
    rollout_steps: int = 20
    dense_probes: int = 100_000

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise ConfigError(f"unknown system {self.system!r}; expected one of {SYSTEMS}")
        bad = [m for m in self.modes if m not in TRAIN_MODES]
        if bad:
            raise ConfigError(f"unknown training modes {bad}")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if not self.memories or min(self.memories) < 2:
            raise ConfigError("memory counts must be >= 2")
        if min(self.n_train, self.n_test, self.omega_train, self.omega_test, self.horizon) < 1:
            raise ConfigError("dataset sizes must be positive")

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def hash(self):
        d = self.to_dict()
        d.pop("out")
        return io.config_hash(d)

    @property
    def root(self):
        return Path(self.out)

    def path(self, *parts):
        return self.root.joinpath(*parts)


def default_config(system="unicycle", preset="full"):
    """Per-system defaults; ``desk`` divides dataset sizes and memory counts by 10."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; expected one of {PRESETS}")
    if system == "armax":
        cfg = RunConfig(system="armax", n_train=18_750, n_test=2500, omega_train=18_750, omega_test=2500,
                        hidden=(20, 20, 20), lr=0.01)
    else:
        cfg = RunConfig(system=system)
    if preset == "desk":
        cfg = replace(
            cfg,
            n_train=cfg.n_train // 10, n_test=cfg.n_test // 10,
            omega_train=cfg.omega_train // 10, omega_test=cfg.omega_test // 10,
            memories=tuple(m // 10 for m in cfg.memories),
        )
    return cfg


def _coerce(name, raw, like):
    try:
        if isinstance(like, bool):
            v = str(raw).strip().lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(like, tuple):
            items = [x.strip() for x in str(raw).split(",") if x.strip()]
            kind = type(like[0]) if like else (float if name == "lr_grid" else str)
            return tuple(kind(x) for x in items)
        if isinstance(like, int):
            return int(raw)
        if isinstance(like, float):
            return float(raw)
        return str(raw)
    except ValueError as e:
        raise ConfigError(f"bad value for {name}: {raw!r}") from e


def apply_overrides(cfg, values):
    """Return ``cfg`` with string ``values`` ({field: text}) parsed into typed fields."""
    names = {f.name for f in fields(RunConfig)}
    upd = {}
    for k, raw in values.items():
        key = k.replace("-", "_")
        if key not in names:
            raise ConfigError(f"unknown config key {k!r}")
        upd[key] = _coerce(key, raw, getattr(cfg, key))
    return replace(cfg, **upd)


def load_config(path=None, preset=None, overrides=None):
    """Defaults <- preset <- config file <- overrides.

    The file is INI-style; section names are only for grouping, keys are
    the :class:`RunConfig` field names.
    """
    file_vals = {}
    if path is not None:
        parser = configparser.ConfigParser()
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror or e}") from e
        except configparser.Error as e:
            raise ConfigError(f"malformed config {path}: {e}") from e
        for sec in parser.sections():
            file_vals.update(parser[sec])
    overrides = dict(overrides or {})
    system = overrides.get("system", file_vals.get("system", "unicycle"))
    file_preset = file_vals.pop("preset", None)
    preset = preset or file_preset or "full"
    cfg = default_config(system, preset)
    cfg = apply_overrides(cfg, file_vals)
    return apply_overrides(cfg, overrides)


# --------------------------------------------------------------------------- system helpers


def system_specs(cfg):
    if cfg.system == "unicycle":
        return dy.unicycle_specs(cfg.dt, cfg.drag, cfg.heading_bias)
    return dy.armax_specs(seed=cfg.seed, confound=cfg.confound)


def load_system(cfg):
    doc = io.read_json(cfg.path("data", "system.json"), cfg.hash())
    return dy.SystemSpec.from_dict(doc["truth"]), dy.SystemSpec.from_dict(doc["model"])


def _tag(mode, k, seed):
    return f"{mode}_k{k}_seed{seed}"


def _anchor(cfg, model_spec):
    return dy.default_anchor(model_spec) if cfg.anchor else None


# --------------------------------------------------------------------------- stages


def gen_data(cfg):
    """Write the train/test splits of D and Omega plus the system specs."""
    h = cfg.hash()
    truth, model = system_specs(cfg)
    io.write_json(cfg.path("data", "system.json"), {"truth": truth.to_dict(), "model": model.to_dict()}, h, cfg.seed)
    out = {}
    for i, (name, n) in enumerate((("D_train", cfg.n_train), ("D_test", cfg.n_test))):
        n_traj = math.ceil(n / cfg.horizon)
        ds = dy.generate_D(truth, n_traj, cfg.horizon, derive_seed(cfg.seed, "data", i), size=n)
        out[name] = ds
    bbox = out["D_train"].bbox
    if cfg.system == "armax":
        bbox = dy.armax_bbox(bbox)
        region = dy.low_glucose_region(bbox)
        control_dim = 0
    else:
        region = dy.at_rest_region(bbox)
        control_dim = dy.UNICYCLE_CONTROL_DIM
    for i, (name, n) in enumerate((("Omega_train", cfg.omega_train), ("Omega_test", cfg.omega_test))):
        out[name] = dy.generate_Omega(bbox, n, region, cfg.emphasis_fraction,
                                      derive_seed(cfg.seed, "data", 2 + i), control_dim=control_dim)
    paths = {}
    for name, ds in out.items():
        paths[name] = io.write_dataset(cfg.path("data", f"{name}.csv"), ds, bbox, h)
    log.info("wrote %s", ", ".join(f"{k}={len(v)}" for k, v in out.items()))
    return paths


def _data(cfg, name):
    return io.read_dataset(cfg.path("data", f"{name}.csv"), cfg.hash())


def fit_gas(cfg):
    """One neural gas per configured memory count, fitted on Omega_train."""
    h = cfg.hash()
    omega, _ = _data(cfg, "Omega_train")
    paths = {}
    for k in cfg.memories:
        params = GngParams(
            max_nodes=k, eps_b=cfg.eps_b, eps_n=cfg.eps_n, max_age=cfg.max_age,
            insert_every=cfg.insert_every, n_iters=cfg.n_iters or None,
            seed=derive_seed(cfg.seed, "gas", k), normalize=cfg.normalize,
        )
        g = gng_fit(omega, params)
        qe = quantization_error(g, omega)
        log.info("gas k=%d: %d nodes, quantization error %.6g", k, len(g.nodes), qe)
        doc = g.to_dict()
        doc["quantization_error"] = qe
        paths[k] = io.write_json(cfg.path("gas", f"gas_k{k}.json"), doc, h, params.seed)
    return paths


def build_bounds(cfg):
    """Partition + interval map per memory count."""
    h = cfg.hash()
    omega, bbox = _data(cfg, "Omega_train")
    _, model = load_system(cfg)
    M = dy.system_fn(model)
    anchor = _anchor(cfg, model)
    paths = {}
    for k in cfg.memories:
        g = NeuralGas.from_dict(io.read_json(cfg.path("gas", f"gas_k{k}.json"), h))
        seed = derive_seed(cfg.seed, "probe", k)
        part = build_partition(g, bbox, omega, seed=seed)
        lip = dy.unicycle_lipschitz(model, bbox, residual=anchor is not None) if cfg.system == "unicycle" else None
        cmap = build_constraint_map(M, part, omega, eta=cfg.eta, lipschitz=lip, seed=seed,
                                    min_probes=cfg.min_probes, safety_factor=cfg.safety_factor, anchor=anchor)
        if not math.isclose(cmap.delta, cmap.lipschitz * part.max_diameter, rel_tol=1e-12):
            raise InvariantError("delta differs from L * max diameter")
        if cmap.empty_cells:
            log.warning("k=%d: %d cells without probes inherit neighbouring intervals", k, len(cmap.empty_cells))
        log.info("bounds k=%d: delta %.6g, max diameter %.6g", k, cmap.delta, part.max_diameter)
        paths[k] = io.write_json(cfg.path("bounds", f"bounds_k{k}.json"), cmap.to_dict(), h, seed)
    return paths


def load_cmap(cfg, k):
    return ConstraintMap.from_dict(io.read_json(cfg.path("bounds", f"bounds_k{k}.json"), cfg.hash()))


def _train_config(cfg, mode, seed, lr, anchor):
    constrained = mode == "constrained"
    return TrainConfig(
        mode=mode, epochs=cfg.epochs, batch_size=cfg.batch_size, lr=lr, hidden=tuple(cfg.hidden),
        seed=derive_seed(cfg.seed, "init", seed),
        skip=tuple(anchor) if constrained and anchor is not None else None,
        cell_inputs=constrained and cfg.cell_inputs,
    )


def train_models(cfg, modes=None):
    """Train every (mode, memories, seed) combination; returns the model paths."""
    h = cfg.hash()
    modes = tuple(modes or cfg.modes)
    D, _ = _data(cfg, "D_train")
    omega, _ = _data(cfg, "Omega_train")
    _, model = load_system(cfg)
    M = dy.system_fn(model)
    anchor = _anchor(cfg, model)
    paths = []
    for k in cfg.memories:
        path = cfg.path("bounds", f"bounds_k{k}.json")
        if path.exists():
            cmap = load_cmap(cfg, k)
        elif "constrained" in modes:
            raise ConfigError(f"constrained training needs {path}; run build-bounds first")
        else:
            cmap = None
        for mode in modes:
            for seed in cfg.seeds:
                best = None
                for lr in cfg.lr_grid or (cfg.lr,):
                    tc = _train_config(cfg, mode, seed, lr, anchor)
                    net, hist = train(tc, D, omega, M, cmap)
                    score = hist["approx_loss_D"][-1]
                    if best is None or score < best[0]:
                        best = (score, tc, net, hist)
                _, tc, net, hist = best
                tag = _tag(mode, k, seed)
                doc = {
                    "mode": mode,
                    "deploy": net.mode,
                    "memories": k,
                    "train": tc.to_dict(),
                    "params": net.params.to_dict(),
                }
                paths.append(io.write_json(cfg.path("models", f"{tag}.json"), doc, h, seed))
                io.write_rows(cfg.path("metrics", f"{tag}.csv"), hist.rows(), METRIC_COLUMNS)
                log.info("%s: approx %.5g, max cviol Omega %.3g", tag,
                         hist["approx_loss_D"][-1], hist["max_cviol_Omega"][-1])
    return paths


def load_model(cfg, mode, k, seed, cmap=None):
    doc = io.read_json(cfg.path("models", f"{_tag(mode, k, seed)}.json"), cfg.hash())
    cmap = cmap if cmap is not None else load_cmap(cfg, k)
    return ConstrainedModel(MlpParams.from_dict(doc["params"]), cmap, doc["deploy"]), doc


def eval_models(cfg, modes=None):
    """EvalReport per trained model, rollout CSVs and the summary table.

    Raises :class:`InvariantError` after writing everything if a constrained
    model left its intervals or the error bound failed.
    """
    h = cfg.hash()
    modes = tuple(modes or cfg.modes)
    D_test, _ = _data(cfg, "D_test")
    O_test, bbox = _data(cfg, "Omega_test")
    truth, model = load_system(cfg)
    M = dy.system_fn(model)
    f = dy.system_fn(truth)
    rng = np.random.default_rng(derive_seed(cfg.seed, "probe", 0))
    probes = rng.uniform(bbox[0], bbox[1], size=(cfg.dense_probes, len(bbox[0])))
    unicycle = cfg.system == "unicycle"
    reports, problems = [], []
    for k in cfg.memories:
        cmap = load_cmap(cfg, k)
        for mode in modes:
            for seed in cfg.seeds:
                net, _ = load_model(cfg, mode, k, seed, cmap)
                rep = evaluate(
                    net, M, cmap, D_test, O_test, cmap.delta, mode, k, seed,
                    rest_state=np.zeros(dy.UNICYCLE_STATE_DIM) if unicycle else None,
                    control_dim=dy.UNICYCLE_CONTROL_DIM if unicycle else 0,
                    horizon=cfg.rollout_steps,
                    mono_dims=None if unicycle else dy.INSULIN,
                    truth=f, probes=probes,
                )
                tag = _tag(mode, k, seed)
                io.write_json(cfg.path("eval", f"{tag}.json"), rep.to_dict(), h, seed)
                if unicycle:
                    _write_rollout(cfg, tag, net)
                reports.append(rep)
                if mode == "constrained" and rep.max_ival_Omega > CONTAINMENT_TOL:
                    problems.append(f"{tag} leaves its intervals by {rep.max_ival_Omega:.3g}")
                if rep.theorem is not None and not rep.theorem.passed:
                    problems.append(f"{tag} exceeds the approximation-error bound")
    io.write_rows(cfg.path("eval", "summary.csv"), [r.row() for r in reports], SUMMARY_COLUMNS)
    if problems:
        raise InvariantError("; ".join(problems))
    return reports


ROLLOUT_COLUMNS = ("step", "x", "y", "heading", "speed", "drift")


def _write_rollout(cfg, tag, net):
    traj = rollout(net, np.zeros(dy.UNICYCLE_STATE_DIM), np.zeros((cfg.rollout_steps, dy.UNICYCLE_CONTROL_DIM)))
    drift = positional_drift(traj)
    rows = [
        {"step": t, "x": s[0], "y": s[1], "heading": s[2], "speed": s[3], "drift": d}
        for t, (s, d) in enumerate(zip(traj, drift))
    ]
    io.write_rows(cfg.path("eval", f"rollout_{tag}.csv"), rows, ROLLOUT_COLUMNS)


# --------------------------------------------------------------------------- report


def _stats(vals):
    a = np.asarray(vals, dtype=float)
    return float(np.min(a)), float(np.mean(a)), float(np.max(a))


def report(cfg, modes=None):
    """Plot-ready CSVs aggregated over seeds (min / mean / max)."""
    modes = tuple(modes or cfg.modes)
    h = cfg.hash()
    panel_rows, bar_rows, table_rows, roll_rows = [], [], [], []
    metric_names = [c for c in METRIC_COLUMNS if c != "step"]
    for k in cfg.memories:
        for mode in modes:
            hists = [io.read_rows(cfg.path("metrics", f"{_tag(mode, k, s)}.csv")) for s in cfg.seeds]
            for step in range(min(len(x) for x in hists)):
                for name in metric_names:
                    lo, mean, hi = _stats([float(x[step][name]) for x in hists])
                    panel_rows.append({"mode": mode, "memories": k, "step": step, "metric": name,
                                       "min": lo, "mean": mean, "max": hi})
            reps = [EvalReport.from_dict(io.read_json(cfg.path("eval", f"{_tag(mode, k, s)}.json"), h))
                    for s in cfg.seeds]
            rows = [r.row() for r in reps]
            for name in ("approx_loss_D", "avg_cviol_Omega", "max_cviol_Omega", "avg_ival_Omega", "max_ival_Omega"):
                lo, mean, hi = _stats([r[name] for r in rows])
                bar_rows.append({"mode": mode, "memories": k, "metric": name, "min": lo, "mean": mean, "max": hi})
            if cfg.system == "armax":
                table_rows.append({
                    "Method": f"{mode} (k={k})",
                    "Max violation": max(r["max_violation"] for r in rows),
                    "Avg violation": float(np.mean([r["avg_violation"] for r in rows])),
                })
            else:
                for s in cfg.seeds:
                    for r in io.read_rows(cfg.path("eval", f"rollout_{_tag(mode, k, s)}.csv")):
                        roll_rows.append({"mode": mode, "memories": k, "seed": s, **r})
    stat_cols = ("min", "mean", "max")
    out = {
        "loss_panels": io.write_rows(cfg.path("report", "loss_panels.csv"), panel_rows,
                                     ("mode", "memories", "step", "metric", *stat_cols)),
        "bars": io.write_rows(cfg.path("report", "bars.csv"), bar_rows, ("mode", "memories", "metric", *stat_cols)),
    }
    if table_rows:
        out["monotonicity"] = io.write_rows(cfg.path("report", "monotonicity.csv"), table_rows,
                                      ("Method", "Max violation", "Avg violation"))
    if roll_rows:
        out["rollouts"] = io.write_rows(cfg.path("report", "rollouts.csv"), roll_rows,
                                        ("mode", "memories", "seed", *ROLLOUT_COLUMNS))
    return out
