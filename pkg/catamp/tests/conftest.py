import pytest

from catamp.jc_model import DeviceParams
from catamp.lindblad import IntegratorConfig
from catamp.log_once import reset_log_once


@pytest.fixture(autouse=True)
def _fresh_log_once():
    reset_log_once()
    yield
    reset_log_once()


@pytest.fixture(autouse=True)
def _single_worker(monkeypatch):
    monkeypatch.setenv("CATAMP_WORKERS", "1")


@pytest.fixture
def tol():
    return 1e-10


@pytest.fixture
def small_device():
    """Reference coupling and cavity frequency on a small truncation, no decoherence."""
    return DeviceParams(cavity_dim=6)


@pytest.fixture
def quiet_integrator():
    return IntegratorConfig(progress=False)
