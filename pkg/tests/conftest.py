import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from multiacc import pairing as pr

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def structures(sizes=(2, 4, 6, 8)):
    """Hypothesis strategy for random valid structures over 1..n."""
    return st.builds(
        lambda n, seed: pr.random_structure(range(1, n + 1), np.random.default_rng(seed)),
        st.sampled_from(sizes),
        st.integers(0, 2**32 - 1),
    )


def structure_pairs(sizes=(4, 6, 8)):
    """Two random structures over the same 1..n."""
    return st.builds(
        lambda n, seed: tuple(
            pr.random_structure(range(1, n + 1), g) for g in np.random.default_rng(seed).spawn(2)
        ),
        st.sampled_from(sizes),
        st.integers(0, 2**32 - 1),
    )


@pytest.fixture
def full4():
    return pr.full_structure([1, 2, 3, 4])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
