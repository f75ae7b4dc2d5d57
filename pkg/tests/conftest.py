import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_instance(rng, K, W, M, scale=0.5):
    """Random windows (X_i, n_i) with an intercept column and a moderate CIF."""
    X = rng.normal(0.0, scale, size=(K * W, M))
    X[:, 0] = 1.0
    w = rng.normal(0.0, 0.5, size=M)
    w[0] = -1.0
    p = 1.0 / (1.0 + np.exp(-(X @ w)))
    n = (rng.random(K * W) < p).astype(float)
    return X, n, w


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


#: Acceptance verdicts collected during the session, printed in the terminal summary.
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def report():
    """Record (and print) a one-line acceptance verdict."""

    def _report(name: str, passed: bool, detail: str) -> None:
        ACCEPTANCE[name] = (bool(passed), detail)
        print(f"{name} {'PASS' if passed else 'FAIL'}: {detail}")

    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda s: int(s[2:])):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{name} {'PASS' if ok else 'FAIL'}: {detail}")
