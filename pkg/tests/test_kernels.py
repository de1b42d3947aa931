import os
import subprocess
import sys

import numpy as np
import pytest

from quadcal import _pykernels, kernels
from quadcal.calibration import LOG_VARIANCE_FLOOR

needs_ext = pytest.mark.skipif(not kernels.compiled_available(), reason="Cython extension not built")


@needs_ext
@pytest.mark.parametrize("theta", [[1.0, 2.0, -1.0, 0.3], [1.0, 2.0, -1.0, 0.3, 0.5], [0.0, 0.0, -40.0, -1.0]])
def test_backends_agree_on_nll(theta):
    from quadcal import _ckernels
    rng = np.random.default_rng(0)
    l, q = rng.normal(size=5000), rng.uniform(size=5000)
    v_c, g_c = _ckernels.nll_and_grad(l, q, theta, LOG_VARIANCE_FLOOR)
    v_p, g_p = _pykernels.nll_and_grad(l, q, theta, LOG_VARIANCE_FLOOR)
    assert v_c == pytest.approx(v_p, rel=1e-12)
    assert g_c == pytest.approx(g_p, rel=1e-10, abs=1e-6)


@needs_ext
def test_backends_agree_on_corrected_logits():
    from quadcal import _ckernels
    rng = np.random.default_rng(1)
    l, q = rng.normal(0, 3, 5000), rng.uniform(size=5000)
    t0, t1 = [-2, 0.4, -1, 0.2, 0.3], [3, -0.5, -2, 0.6, -0.1]
    a = _ckernels.corrected_logits(l, q, t0, t1, LOG_VARIANCE_FLOOR)
    b = _pykernels.corrected_logits(l, q, t0, t1, LOG_VARIANCE_FLOOR)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_floor_zeroes_variance_gradient():
    l, q = np.array([0.0, 1.0]), np.array([0.2, 0.9])
    _, g = _pykernels.nll_and_grad(l, q, [0.0, 0.5, 0.0, -100.0], LOG_VARIANCE_FLOOR)
    assert g[2] == 0.0 and g[3] == 0.0


def test_pure_python_switch():
    env = dict(os.environ, QUADCAL_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import quadcal; print(quadcal.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
