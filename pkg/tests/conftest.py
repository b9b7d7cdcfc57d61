import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fbm_orthant.model import ModelSpec

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

_verdicts: list[str] = []


def record_verdict(label: str, ok: bool, detail: str = "") -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {label}" + (f"  ({detail})" if detail else "")
    _verdicts.append(line)
    print(line)


@pytest.fixture
def verdict():
    return record_verdict


def pytest_terminal_summary(terminalreporter):
    if _verdicts:
        terminalreporter.section("acceptance criteria")
        for line in _verdicts:
            terminalreporter.write_line(line)


def random_spd(rng, d, jitter=0.2):
    G = rng.standard_normal((d, d))
    S = G @ G.T / d + jitter * np.eye(d)
    return 0.5 * (S + S.T)


@pytest.fixture
def four_dim_scenario():
    from fbm_orthant.cli import example_model

    return example_model()[0]


@pytest.fixture
def scalar_model():
    return ModelSpec(H=0.25, Sigma=[[1.0]], mu=[1.0], nu=[1.0])
