import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def correlated_pair(rng, shape=(16, 16), noise=0.1):
    """Two positively correlated images in [0, 1]-ish range (independent ones clamp MSSIM to 0)."""
    y = rng.random(shape)
    x = np.clip(y + noise * rng.standard_normal(shape), 0.0, 1.0)
    return x, y


_CRITERIA: dict[int, str] = {}


def record_criterion(n: int, ok: bool, detail: str) -> None:
    _CRITERIA[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
