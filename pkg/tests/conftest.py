import os

import pytest

from dualloop.models import LoopSpec, Point3, SpinParams

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
EXAMPLES_DIR = os.path.join(REPO_ROOT, "config", "examples")
REFERENCE_DIR = os.path.join(REPO_ROOT, "config", "reference")


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch):
    for key in list(os.environ):
        if key.startswith("DUALLOOP_"):
            monkeypatch.delenv(key, raising=False)


@pytest.fixture
def inner():
    return LoopSpec.circle(15.0)


@pytest.fixture
def outer():
    return LoopSpec.circle(38.0)


@pytest.fixture
def target():
    """First neighbour at s = 60 um, 1 um above the loop plane."""
    return Point3.um(60.0, 0.0, 1.0)


@pytest.fixture
def spin_params():
    return SpinParams()


@pytest.fixture
def quick_spin_params():
    return SpinParams(shots=300)


@pytest.fixture
def out_dir(tmp_path):
    path = tmp_path / "results"
    path.mkdir()
    return str(path)
