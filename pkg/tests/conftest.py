import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from memguard import dynamics as dy
from memguard.bounds import build_constraint_map
from memguard.gas import GngParams, gng_fit
from memguard.partition import build_partition

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def unicycle():
    return dy.unicycle_specs()


@pytest.fixture(scope="session")
def small_data(unicycle):
    truth, _ = unicycle
    D = dy.generate_D(truth, 30, 20, seed=3)
    lo, hi = D.bbox
    bbox = (np.minimum(lo, [-1, -1, -1, -0.1, -1, -0.5]), np.maximum(hi, [1, 1, 1, 0.1, 1, 0.5]))
    omega = dy.generate_Omega(bbox, 600, dy.at_rest_region(bbox), 0.5, seed=4, control_dim=2)
    return D, omega, bbox


@pytest.fixture(scope="session")
def small_cmap(unicycle, small_data):
    """20-memory residual constraint map for the unicycle model."""
    _, model = unicycle
    _, omega, bbox = small_data
    gas = gng_fit(omega, GngParams(max_nodes=20, seed=1))
    part = build_partition(gas, bbox, omega, seed=2, n_uniform=4000)
    lip = dy.unicycle_lipschitz(model, bbox, residual=True)
    return build_constraint_map(dy.system_fn(model), part, omega, lipschitz=lip, seed=2,
                                n_uniform=4000, anchor=dy.default_anchor(model))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed in the terminal summary
_CRITERIA = {}


@pytest.fixture
def criterion():
    def record(number, passed, detail):
        _CRITERIA[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
