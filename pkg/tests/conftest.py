import numpy as np
import pytest

from reservoir_kernels import KernelParams, Sequence

# (lam, tau, M) triples spanning weak to strong memory.
PARAM_TRIPLES = [
    (0.5, 0.5, 1.0),
    (0.3, 0.9, 1.0),
    (0.9, 0.3, 1.0),
]

_criteria = []


def random_window(rng, d, max_len=50, bound=1.0, min_len=0):
    """Random window whose rows all have norm <= bound."""
    length = int(rng.integers(min_len, max_len + 1))
    data = rng.uniform(-1, 1, size=(length, d))
    norms = np.linalg.norm(data, axis=1, keepdims=True)
    data = bound * data / np.maximum(norms, 1.0)
    return Sequence(data.reshape(length, d)).as_window()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(params=PARAM_TRIPLES, ids=lambda p: f"lam{p[0]}-tau{p[1]}")
def params(request):
    return KernelParams(*request.param)


@pytest.fixture
def criterion():
    """Record a named acceptance verdict for the end-of-run summary."""

    def record(name, passed, detail=""):
        _criteria.append((name, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _criteria:
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{status}  {name}  {detail}".rstrip())
