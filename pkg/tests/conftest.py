import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "qmo",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("qmo")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def cgauss(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_unitary(rng, p):
    Q, R = np.linalg.qr(cgauss(rng, p, p))
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def central_difference(f, curve, h=1e-6):
    return (f(curve(h)) - f(curve(-h))) / (2 * h)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
