import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from semiadapt import kernels
from semiadapt._jit import HAVE_NUMBA

pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def _case(seed, D=4, h=7):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(D, h, h))
    psd = A @ A.transpose(0, 2, 1) / h
    return rng, psd


@given(st.integers(0, 100_000), st.floats(0.9, 1.0), st.floats(0.0, 2.0))
def test_rls_kernels_agree(seed, lam1, lam2):
    rng, F = _case(seed)
    F += 0.1 * np.eye(F.shape[1])
    theta = rng.normal(size=F.shape[:2])
    phi, y = rng.normal(size=F.shape[1]), rng.normal(size=F.shape[0])
    outs = []
    for impl in (kernels.rls_update_numba, kernels.rls_update_numpy):
        th, g, e = theta.copy(), F.copy(), np.empty(F.shape[0])
        md, mg = impl(th, g, phi, y, lam1, lam2, e)
        outs.append((th, g, e, md, mg))
    (a, b) = outs
    for x, z in zip(a[:3], b[:3]):
        np.testing.assert_allclose(x, z, rtol=1e-10, atol=1e-10)
    assert a[3] == pytest.approx(b[3], rel=1e-12)
    assert a[4] == pytest.approx(b[4], rel=1e-9, abs=1e-12)


@given(st.integers(0, 100_000))
def test_quad_form_kernels_agree(seed):
    rng, X = _case(seed)
    phi = rng.normal(size=X.shape[1])
    a, b = np.empty(X.shape[0]), np.empty(X.shape[0])
    kernels.quad_forms_numba(X, phi, a)
    kernels.quad_forms_numpy(X, phi, b)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@given(st.integers(0, 100_000), st.floats(0.0, 2.0))
def test_param_msee_kernels_agree(seed, drift):
    rng, X = _case(seed)
    D, h = X.shape[:2]
    _, F = _case(seed + 1)
    E = 0.1 * rng.normal(size=(D, h))
    phi = rng.normal(size=h)
    xd = rng.uniform(0.1, 1.0, D)
    dth = drift * rng.normal(size=(D, h))
    outs = []
    for impl in (kernels.param_msee_numba, kernels.param_msee_numpy):
        x, e = X.copy(), E.copy()
        clips = impl(x, e, F, phi, xd, dth, 1e-10)
        outs.append((x, e, clips))
    np.testing.assert_allclose(outs[0][1], outs[1][1], rtol=1e-10, atol=1e-12)
    assert outs[0][2] == outs[1][2]
    np.testing.assert_allclose(outs[0][0], outs[1][0], rtol=1e-8, atol=1e-9)


def test_backend_switch_via_environment():
    code = ("from semiadapt import kernels, _jit;"
            "print(_jit.backend_name(), kernels.rls_update_blocks is kernels.rls_update_numpy)")
    for backend, expected in (("numpy", "numpy True"), ("numba", "numba False")):
        out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                             env={"SEMIADAPT_BACKEND": backend, "PATH": "/usr/bin:/bin"},
                             check=True)
        assert out.stdout.strip() == expected
