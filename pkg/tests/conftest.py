import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kgnn.gradcheck import TOY_CONFIG, toy_examples, toy_store

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def store():
    return toy_store()


@pytest.fixture
def examples():
    return toy_examples()


@pytest.fixture
def tiny_config():
    return TOY_CONFIG


def check_golden(name: str, values, atol: float = 1e-12):
    """Compare against tests/golden/<name>.json; the file is written on first run."""
    import json

    path = GOLDEN / f"{name}.json"
    values = np.asarray(values, dtype=np.float64)
    if not path.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps({"shape": list(values.shape), "values": values.ravel().tolist()}, indent=1))
    stored = json.loads(path.read_text())
    expected = np.asarray(stored["values"], dtype=np.float64).reshape(stored["shape"])
    assert expected.shape == values.shape
    np.testing.assert_allclose(values, expected, rtol=0, atol=atol)
