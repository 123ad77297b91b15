"""Backend parity checks for the convolution kernels.

The numpy and native backends must agree bit-for-bit-close on forward and
both backward passes, and each must satisfy the adjoint identities that
define the backward maps independently of any autodiff machinery.
"""

import os
import subprocess
import sys

import numpy as np
import pytest

from sdanet.kernels import _numpy as knp

native = pytest.importorskip("sdanet.kernels._native")

from oracles import naive_conv2d

SHAPES = [
    # (n, cin, cout, groups, k, pad, h, w)
    (1, 3, 4, 1, 3, 1, 6, 6),
    (2, 4, 4, 4, 3, 1, 5, 7),
    (2, 6, 4, 2, 1, 0, 4, 4),
    (1, 2, 5, 1, 5, 2, 8, 6),
    (3, 8, 8, 8, 5, 2, 7, 5),
]


def make_case(n, cin, cout, groups, k, pad, h, w, seed):
    g = np.random.default_rng(seed)
    x = g.normal(size=(n, cin, h, w))
    wt = g.normal(size=(cout, cin // groups, k, k))
    bias = g.normal(size=(cout,))
    return x, wt, bias


@pytest.mark.parametrize("case", SHAPES)
def test_forward_matches_naive_both_backends(case):
    n, cin, cout, groups, k, pad, h, w = case
    x, wt, bias = make_case(*case, seed=sum(case))
    want = naive_conv2d(x, wt, bias, groups=groups, padding=pad)
    got_np = knp.conv2d_forward(x, wt, bias, groups, pad)
    got_nat = native.conv2d_forward(x, wt, bias, groups, pad)
    np.testing.assert_allclose(got_np, want, atol=1e-10)
    np.testing.assert_allclose(got_nat, want, atol=1e-10)


@pytest.mark.parametrize("case", SHAPES)
def test_backward_parity(case):
    n, cin, cout, groups, k, pad, h, w = case
    x, wt, _ = make_case(*case, seed=17 + sum(case))
    out = knp.conv2d_forward(x, wt, None, groups, pad)
    gout = np.random.default_rng(3).normal(size=out.shape)

    gi_np = knp.conv2d_backward_input(gout, wt, groups, pad, h, w)
    gi_nat = native.conv2d_backward_input(gout, wt, groups, pad, h, w)
    np.testing.assert_allclose(gi_np, gi_nat, atol=1e-12)

    gw_np = knp.conv2d_backward_weight(x, gout, groups, pad, k)
    gw_nat = native.conv2d_backward_weight(x, gout, groups, pad, k)
    np.testing.assert_allclose(gw_np, gw_nat, atol=1e-12)


@pytest.mark.parametrize("backend", [knp, None])
@pytest.mark.parametrize("case", SHAPES)
def test_adjoint_identities(backend, case):
    """<conv(x), g> == <x, input_backward(g)> and likewise for weights.

    These hold exactly for the true linear adjoint, so they pin down the
    backward kernels without reference to the forward implementation.
    """
    mod = backend if backend is not None else native
    n, cin, cout, groups, k, pad, h, w = case
    x, wt, _ = make_case(*case, seed=29 + sum(case))
    out = mod.conv2d_forward(x, wt, None, groups, pad)
    gout = np.random.default_rng(11).normal(size=out.shape)

    lhs = float(np.sum(out * gout))
    via_input = float(np.sum(x * mod.conv2d_backward_input(gout, wt, groups, pad, h, w)))
    via_weight = float(np.sum(wt * mod.conv2d_backward_weight(x, gout, groups, pad, k)))
    assert lhs == pytest.approx(via_input, rel=1e-10)
    assert lhs == pytest.approx(via_weight, rel=1e-10)


def test_none_bias_equals_zero_bias():
    case = SHAPES[0]
    x, wt, _ = make_case(*case, seed=41)
    groups, pad = case[3], case[5]
    a = native.conv2d_forward(x, wt, None, groups, pad)
    b = native.conv2d_forward(x, wt, np.zeros(case[2]), groups, pad)
    np.testing.assert_array_equal(a, b)


def _backend_in_subprocess(env_value):
    env = dict(os.environ)
    if env_value is None:
        env.pop("SDANET_KERNELS", None)
    else:
        env["SDANET_KERNELS"] = env_value
    code = "import sdanet.kernels as k; print(k.BACKEND)"
    proc = subprocess.run([sys.executable, "-c", code], env=env,
                          capture_output=True, text=True)
    return proc


def test_env_var_selects_numpy_backend():
    proc = _backend_in_subprocess("numpy")
    assert proc.returncode == 0
    assert proc.stdout.strip() == "numpy"


def test_env_var_selects_native_backend():
    proc = _backend_in_subprocess("native")
    assert proc.returncode == 0
    assert proc.stdout.strip() == "native"


def test_default_prefers_native_when_built():
    proc = _backend_in_subprocess(None)
    assert proc.returncode == 0
    assert proc.stdout.strip() == "native"


def test_unknown_backend_rejected():
    proc = _backend_in_subprocess("fortran")
    assert proc.returncode != 0
    assert "fortran" in proc.stderr
