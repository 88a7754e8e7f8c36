import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from memguard import dynamics as dy
from memguard.errors import ConfigError
from memguard.net import ConstrainedModel, flatten, init_mlp, unflatten
from memguard.train import (
    METRIC_COLUMNS, Multipliers, TrainConfig, aug_lagrangian_loss, mse_loss, train, update_multipliers, violation,
)


def zero_model(t=1, d=2):
    p = init_mlp([t, 3, d], seed=0)
    p.weights = [(np.zeros_like(W), np.zeros_like(b)) for W, b in p.weights]
    return ConstrainedModel(p)


def const(value):
    value = np.asarray(value, dtype=float)
    return lambda s: np.tile(value, (len(np.atleast_2d(s)), 1))


def test_mse_examples(rng):
    m = zero_model()
    loss, grads = mse_loss(m, np.zeros((1, 1)), np.array([[3.0, 4.0]]))
    assert loss == 5.0
    assert mse_loss(m, np.zeros((2, 1)), np.zeros((2, 2)))[0] == 0.0
    net = ConstrainedModel(init_mlp([2, 5, 3], seed=2))
    S, X = rng.normal(size=(3, 2)), rng.normal(size=(3, 3))
    out = net(S)
    oracle = sum(math.sqrt(sum((out[i, j] - X[i, j]) ** 2 for j in range(3))) for i in range(3)) / 3
    assert abs(mse_loss(net, S, X)[0] - oracle) < 1e-10


def test_violation_examples():
    M = const([1.0, 1.0])
    assert violation(const([1.05, 1.0]), M, np.zeros((1, 1)), 0.1)[0] == 0.0  # psi = 0.05
    assert violation(const([1.2, 1.0]), M, np.zeros((1, 1)), 0.1)[0] == pytest.approx(0.1)  # psi = -0.1


def test_aug_lagrangian_reduces_to_mse(rng):
    net = ConstrainedModel(init_mlp([2, 4, 2], seed=1))
    S, X = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
    loss, grads, cD, cO = aug_lagrangian_loss(net, (S, X), S, net, 0.1, Multipliers(mu1=0.0, mu2=0.0))
    ref, ref_grads = mse_loss(net, S, X)
    assert loss == pytest.approx(ref) and cD == 0 and cO == 0
    np.testing.assert_allclose(flatten(grads), flatten(ref_grads))


def test_aug_lagrangian_formula():
    m = zero_model()
    M = const([0.0, 0.3])  # |f - M|_inf = 0.3, delta 0.1 -> c = 0.2
    mult = Multipliers(lambda1=1.0, mu1=1.0, lambda2=0.0, mu2=0.0)
    loss, _, cD, _ = aug_lagrangian_loss(m, (np.zeros((1, 1)), np.zeros((1, 2))), np.zeros((1, 1)), M, 0.1, mult)
    assert cD == pytest.approx(0.2)
    assert loss == pytest.approx(0.2 + 0.04)


def test_aug_lagrangian_gradient_fd(rng):
    net = ConstrainedModel(init_mlp([2, 4, 2], seed=5))
    S, X, SO = rng.normal(size=(6, 2)), rng.normal(size=(6, 2)), rng.normal(size=(6, 2))
    M = lambda s: np.tanh(s) * 3  # noqa: E731
    mult = Multipliers(lambda1=0.7, lambda2=1.3, mu1=2.0, mu2=0.5)
    _, grads, cD, cO = aug_lagrangian_loss(net, (S, X), SO, M, 0.05, mult)
    assert cD > 0 and cO > 0
    g = flatten(grads)
    theta = flatten(net.params.weights)
    h = 1e-6
    for i in range(len(theta)):
        vals = []
        for sgn in (1, -1):
            th = theta.copy()
            th[i] += sgn * h
            p = net.params.copy()
            p.weights = unflatten(th, net.params.weights)
            vals.append(aug_lagrangian_loss(ConstrainedModel(p), (S, X), SO, M, 0.05, mult)[0])
        fd = (vals[0] - vals[1]) / (2 * h)
        assert abs(fd - g[i]) <= 1e-4 * max(1e-3, abs(fd))


@given(st.floats(0, 5), st.floats(0, 5), st.floats(0, 2), st.floats(0.01, 5), st.integers(0, 50))
def test_aug_lagrangian_at_least_mse(l1, l2, delta, mu, seed):
    rng = np.random.default_rng(seed)
    net = ConstrainedModel(init_mlp([2, 3, 2], seed=seed))
    S, X = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
    M = lambda s: 2 * s  # noqa: E731
    loss, _, cD, cO = aug_lagrangian_loss(net, (S, X), S, M, delta, Multipliers(l1, l2, mu, mu))
    ref = mse_loss(net, S, X)[0]
    assert loss >= ref - 1e-12
    if cD == 0 and cO == 0:
        assert loss == pytest.approx(ref)


def test_update_multipliers_examples():
    m = Multipliers(lambda1=0.3, mu1=1.0)
    assert update_multipliers(m, 0.0, 0.0).lambda1 == 0.3
    assert update_multipliers(m, 0.0, 0.0).mu1 == 1.0
    assert update_multipliers(Multipliers(), 0.5, 0.0).lambda1 == 1.0
    m = Multipliers(mu_cap=16.0)
    for _ in range(10):
        m = update_multipliers(m, 0.5, 0.5)
    assert m.mu1 == 16.0 and m.mu2 == 16.0
    # a shrinking violation keeps mu fixed
    m = update_multipliers(Multipliers(), 1.0, 0.0)
    assert update_multipliers(m, 0.5, 0.0).mu1 == m.mu1
    with pytest.raises(ValueError):
        update_multipliers(Multipliers(), -0.1, 0.0)


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(mode="sgd")
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(holdout=1.0)


def test_constrained_needs_cmap(small_data, unicycle):
    D, omega, _ = small_data
    with pytest.raises(ConfigError):
        train(TrainConfig(mode="constrained"), D, omega, dy.system_fn(unicycle[1]))
    with pytest.raises(ConfigError):
        train(TrainConfig(mode="aug-lagrangian"), D, omega)


def _constrained_cfg(**kw):
    return TrainConfig(mode="constrained", epochs=2, hidden=(16, 16), skip=(0, 1, 2, 3), cell_inputs=True, **kw)


def test_constrained_violation_zero_every_step(small_data, small_cmap, unicycle):
    D, omega, _ = small_data
    M = dy.system_fn(unicycle[1])
    model, hist = train(_constrained_cfg(), D, omega, M, small_cmap)
    assert len(hist["step"]) > 2 and hist["step"][0] == 0
    assert max(hist["max_cviol_Omega"]) == 0.0 and max(hist["avg_cviol_D"]) == 0.0
    assert model.mode == "wrapped"
    lo, hi, _ = small_cmap.bounds_at(omega.s)
    out = model(omega.s)
    assert np.all(out >= lo) and np.all(out <= hi)


def test_training_deterministic(small_data, small_cmap, unicycle):
    D, omega, _ = small_data
    M = dy.system_fn(unicycle[1])
    for cfg in (_constrained_cfg(seed=4), TrainConfig(mode="aug-lagrangian", epochs=2, hidden=(8,), seed=4)):
        a = train(cfg, D, omega, M, small_cmap)
        b = train(cfg, D, omega, M, small_cmap)
        assert a[1].rows() == b[1].rows()
        assert np.array_equal(flatten(a[0].params.weights), flatten(b[0].params.weights))
        assert list(a[1]) == list(METRIC_COLUMNS)


def test_vanilla_loss_drops_tenfold(unicycle):
    truth, _ = unicycle
    D = dy.generate_D(truth, 75, 20, seed=0)
    omega = dy.Dataset(D.s, kind="unlabeled")
    trained, _ = train(TrainConfig(mode="vanilla", epochs=30, lr=0.003), D, omega)
    # lr 0 leaves the network at its (identically seeded) initialisation
    untrained, _ = train(TrainConfig(mode="vanilla", epochs=1, lr=0.0), D, omega)
    assert mse_loss(untrained, D.s, D.x)[0] >= 10 * mse_loss(trained, D.s, D.x)[0]
