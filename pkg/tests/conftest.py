import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_stable(rng, n, radius=0.9):
    A = rng.standard_normal((n, n))
    rho = max(abs(np.linalg.eigvals(A)))
    return A * (radius * rng.uniform(0.3, 1.0) / rho)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        status, title, detail = results[number]
        terminalreporter.write_line(f"criterion {number:2d} {status}  {title}: {detail}")
