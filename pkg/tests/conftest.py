import sys
from pathlib import Path

import hypothesis
import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from src.lbsdc.core.log_manager import log_mgr  # noqa: E402

np.seterr(all="warn")

# the autouse log fixture is function scoped; @given tests share it
_shared = dict(deadline=None, suppress_health_check=[hypothesis.HealthCheck.function_scoped_fixture])
hypothesis.settings.register_profile("default", max_examples=25, **_shared)
hypothesis.settings.register_profile("fast", max_examples=5, **_shared)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False, **_shared)
hypothesis.settings.load_profile("default")


@pytest.fixture(autouse=True)
def quiet_logs(tmp_path, monkeypatch):
    """Keep JSONL logs and per-user state out of the home directory."""
    monkeypatch.setenv("LBSDC_HOME", str(tmp_path / "home"))
    log_mgr.set_logs_dir(tmp_path / "logs")
    log_mgr.enabled = False
    log_mgr.set_status_handler(None)
    yield
    log_mgr.set_logs_dir(None)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_zero_mean(rng, shape, scale=0.5, modes=None):
    """Smooth random zero-mean field: a few low Fourier modes with random phases."""
    values = rng.standard_normal(shape) * scale
    if modes is not None:
        coeffs = np.fft.fftn(values)
        for axis, n in enumerate(shape):
            k = np.abs(np.fft.fftfreq(n, 1.0 / n))
            mask_shape = [1] * len(shape)
            mask_shape[axis] = n
            coeffs = coeffs * (k <= modes).reshape(mask_shape)
        values = np.fft.ifftn(coeffs).real
    return values - values.mean()


@pytest.fixture
def smooth_field(rng):
    def make(shape, scale=0.5, modes=None):
        return random_zero_mean(rng, shape, scale, modes)

    return make
