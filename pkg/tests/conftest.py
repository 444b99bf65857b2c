import numpy as np
import pytest

from casida1d.groundstate import solve
from casida1d.model import default_model


@pytest.fixture(scope="session")
def small_model():
    return default_model(n=80, L=10.0)


@pytest.fixture(scope="session")
def small_gs(small_model):
    return solve(small_model, tol=1e-12)


@pytest.fixture(scope="session")
def default_system():
    model = default_model()
    return model, solve(model, tol=1e-10)


@pytest.fixture(scope="session")
def resonance_system():
    """Z=5 cation-like system with an isolated embedded transition 0 -> 2."""
    model = default_model(n=400, L=50.0, Z=5.0, a_ext=0.5)
    return model, solve(model, tol=1e-10)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_orthogonal(rng, N):
    q, r = np.linalg.qr(rng.standard_normal((N, N)))
    return q * np.sign(np.diag(r))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, passed, detail in sorted(mod.RESULTS):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} [{num:2d}] {title}: {detail}")
