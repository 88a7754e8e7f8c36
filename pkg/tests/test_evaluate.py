import json

import numpy as np
import pytest

from memguard import dynamics as dy
from memguard.bounds import ConstraintMap
from memguard.errors import DomainError
from memguard.evaluate import (
    SUMMARY_COLUMNS, EvalReport, TheoremCheck, constraint_losses, evaluate, interval_violation,
    monotonicity_probe, positional_drift, rollout, theorem_check,
)
from memguard.net import ConstrainedModel, init_mlp
from memguard.partition import Partition


def test_constraint_losses_identity_and_oracle(rng, unicycle):
    M = dy.system_fn(unicycle[1])
    S = rng.uniform(-2, 2, size=(5, 6))
    assert constraint_losses(M, M, S, 0.0) == (0.0, 0.0)
    f = lambda s: M(s) + np.array([0.3, -0.05, 0.0, 0.15])  # noqa: E731
    delta = 0.1
    per = [max(0.0, max(abs(a - b) for a, b in zip(M(s[None])[0], f(s[None])[0])) - delta) for s in S]
    avg, mx = constraint_losses(f, M, S, delta)
    assert avg == pytest.approx(sum(per) / 5) and mx == pytest.approx(max(per))
    with pytest.raises(DomainError):
        constraint_losses(f, M, np.zeros((0, 6)), delta)


def test_constrained_model_within_delta(small_cmap, small_data, unicycle):
    M = dy.system_fn(unicycle[1])
    _, omega, _ = small_data
    p = init_mlp([14, 8, 4], seed=3, skip=[0, 1, 2, 3], cell_inputs=True)
    for mode in ("wrapped", "projected"):
        model = ConstrainedModel(p, small_cmap, mode)
        assert constraint_losses(model, M, omega, small_cmap.delta) == (0.0, 0.0)
        assert interval_violation(model, small_cmap, omega.s).max() == 0.0


def test_rollout_reference_fixed_point(unicycle):
    M = dy.system_fn(unicycle[1])
    traj = rollout(M, np.zeros(4), np.zeros((20, 2)))
    assert traj.shape == (21, 4) and not traj.any()
    assert not positional_drift(traj).any()
    with pytest.raises(DomainError):
        rollout(M, np.zeros(4), np.zeros((0, 2)), T=0)
    with pytest.raises(DomainError):
        rollout(M, np.zeros(4), np.zeros((3, 2)), T=5)


def test_rollout_without_controls(rng):
    w = rng.normal(size=3) * 0.3
    traj = rollout(lambda s: s @ np.diag(w), np.ones(3), np.zeros((4, 0)))
    np.testing.assert_allclose(traj[-1], w**4)


def test_constrained_rollout_drift_bound(small_cmap):
    p = init_mlp([14, 8, 4], seed=0, skip=[0, 1, 2, 3], cell_inputs=True)
    p.weights[-1] = (p.weights[-1][0], np.full(4, 5.0))  # push toward the upper interval ends
    model = ConstrainedModel(p, small_cmap, "wrapped")
    traj = rollout(model, np.zeros(4), np.zeros((20, 2)))
    drift = positional_drift(traj)
    widths = []
    for s in traj[:-1]:
        lo, hi, _ = small_cmap.bounds_at(np.concatenate([s, [0, 0]])[None])
        # positional step is bounded by the larger |end| of the residual interval
        widths.append(np.abs(np.concatenate([lo - s, hi - s], axis=None)[[0, 1, 4, 5]]).max() * np.sqrt(2))
    assert drift[-1] <= sum(widths) + 1e-12
    assert drift[-1] <= 20 * (small_cmap.delta + small_cmap.widths.max())


def test_monotonicity_probe_examples(rng):
    _, model = dy.armax_specs(0)
    H = rng.uniform(0, 200, size=(300, 30))
    M = dy.system_fn(model)
    assert monotonicity_probe(M, H, dy.INSULIN) == (0.0, 0.0)
    assert monotonicity_probe(lambda s: np.ones((len(s), 1)), H, dy.INSULIN) == (0.0, 0.0)
    w = np.zeros(30)
    w[dy.INSULIN] = 0.5
    up = lambda s: (s @ w)[:, None]  # noqa: E731
    mx, avg = monotonicity_probe(up, H, dy.INSULIN, seed=3)
    # every bump of b in [0.6, 1] raises the output by 10 * 0.5 * b
    assert 3.0 <= avg <= mx <= 5.0
    assert monotonicity_probe(up, H, dy.INSULIN, seed=3) == (mx, avg)
    with pytest.raises(DomainError):
        monotonicity_probe(up, H, slice(0, 0))


def wide_cmap(t, d, lo=-1e6, hi=1e6):
    part = Partition(np.zeros((1, t)), (-np.ones(t), np.ones(t)), diameters=np.array([2 * np.sqrt(t)]))
    return ConstraintMap(part, np.full((1, d), lo), np.full((1, d), hi), delta=1.0, lipschitz=1.0)


def test_theorem_wide_intervals_observed_equals_eps(rng):
    cmap = wide_cmap(2, 2)
    raw = ConstrainedModel(init_mlp([2, 5, 2], seed=1), cmap, "raw")
    f = lambda s: np.sin(s)  # noqa: E731
    P = rng.uniform(-1, 1, size=(5000, 2))
    chk = theorem_check(raw, raw.with_mode("projected"), f, cmap.partition, P)
    assert chk.observed == chk.epsilon and chk.passed


def test_theorem_exact_model(small_cmap, unicycle):
    truth, model = unicycle
    f = dy.system_fn(truth)
    lo, hi = small_cmap.partition.bbox
    P = np.random.default_rng(0).uniform(lo, hi, size=(20_000, 6))
    gamma = lambda s: np.clip(f(s), *small_cmap.bounds_at(s)[:2])  # noqa: E731
    chk = theorem_check(f, gamma, f, small_cmap.partition, P)
    assert chk.epsilon == 0.0 and chk.observed <= chk.alpha * chk.max_diameter and chk.passed


def test_theorem_adversarial_params(small_cmap, unicycle):
    truth, _ = unicycle
    f = dy.system_fn(truth)
    lo, hi = small_cmap.partition.bbox
    P = np.random.default_rng(1).uniform(lo, hi, size=(5000, 6))
    for seed in range(3):
        p = init_mlp([14, 8, 4], seed=seed, skip=[0, 1, 2, 3], cell_inputs=True)
        p.weights = [(W * 5, b - 3) for W, b in p.weights]
        raw = ConstrainedModel(p, small_cmap, "raw")
        assert theorem_check(raw, raw.with_mode("projected"), f, small_cmap.partition, P, seed=seed).passed


def test_report_round_trip_and_validation():
    rep = EvalReport("constrained", 50, 1, 0.1, 0, 0, 0, 0, 0.0, 0.0, [0.0, 0.1], (0.2, 0.01),
                     TheoremCheck(0.1, 2.0, 1.0, 2.2, 0.5, True))
    doc = json.loads(json.dumps(rep.to_dict()))
    doc["config_hash"] = "abc"
    back = EvalReport.from_dict(doc)
    assert back == rep
    assert tuple(rep.row()) == SUMMARY_COLUMNS and rep.row()["final_drift"] == 0.1
    with pytest.raises(DomainError):
        EvalReport("vanilla", 1, 0, 0.1, -1.0, 0, 0, 0)


def test_evaluate_collects_everything(small_cmap, small_data, unicycle):
    truth, model = unicycle
    D, omega, _ = small_data
    p = init_mlp([14, 8, 4], seed=3, skip=[0, 1, 2, 3], cell_inputs=True)
    net = ConstrainedModel(p, small_cmap, "wrapped")
    rep = evaluate(net, dy.system_fn(model), small_cmap, D, omega, small_cmap.delta, "constrained", 20, 0,
                   rest_state=np.zeros(4), control_dim=2, horizon=20, truth=dy.system_fn(truth), probes=omega.s)
    assert rep.max_ival_Omega == 0.0 and rep.max_cviol_Omega == 0.0
    assert len(rep.drift) == 21 and rep.theorem.passed and rep.monotonicity is None
