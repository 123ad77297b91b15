import numpy as np
import pytest

from sdanet.errors import ConfigError, ShapeError
from sdanet.spectral import ComplexGrid, complex_depthwise_conv, fft2, ifft2
from sdanet.tensor import Tensor, tensor_sum

from oracles import naive_conv2d, naive_dft2, naive_inverse_from_reduced


def rng(seed=0):
    return np.random.default_rng(seed)


def spectrum_of(x):
    return fft2(Tensor(x))


# -- forward transform ---------------------------------------------------------

@pytest.mark.parametrize("h,w", [(4, 4), (3, 5), (5, 4), (2, 7), (6, 6)])
def test_fft2_matches_naive_dft(h, w):
    x = rng(h * 10 + w).normal(size=(1, 2, h, w))
    grid = spectrum_of(x)
    wf = w // 2 + 1
    assert grid.re.shape == (1, 2, h, wf)
    assert grid.original_width == w
    for c in range(2):
        full = naive_dft2(x[0, c])
        np.testing.assert_allclose(grid.re.data[0, c], full[:, :wf].real, atol=1e-9)
        np.testing.assert_allclose(grid.im.data[0, c], full[:, :wf].imag, atol=1e-9)


def test_reduced_width_drops_conjugate_columns():
    x = rng(1).normal(size=(1, 1, 4, 6))
    grid = spectrum_of(x)
    assert grid.re.shape[-1] == 4  # 6 // 2 + 1


# -- inverse transform -----------------------------------------------------------

@pytest.mark.parametrize("h,w", [(4, 4), (3, 5), (4, 6), (5, 3)])
def test_ifft2_matches_naive_hermitian_inverse(h, w):
    x = rng(h * 7 + w).normal(size=(1, 1, h, w))
    grid = spectrum_of(x)
    back = ifft2(grid).data[0, 0]
    want = naive_inverse_from_reduced(grid.re.data[0, 0], grid.im.data[0, 0], w)
    np.testing.assert_allclose(back, want, atol=1e-9)


@pytest.mark.parametrize("h,w", [(4, 4), (3, 5), (8, 6), (5, 7), (1, 4), (4, 1)])
def test_round_trip_identity(h, w):
    x = rng(h * 13 + w).normal(size=(2, 3, h, w))
    back = ifft2(spectrum_of(x)).data
    assert np.max(np.abs(back - x)) < 1e-10


def test_parseval_with_multiplicity():
    """Energy in the reduced spectrum, with shared-column weights, equals
    HW times the spatial energy."""
    h, w = 6, 8
    x = rng(2).normal(size=(1, 1, h, w))
    grid = spectrum_of(x)
    wf = w // 2 + 1
    mult = np.full(wf, 2.0)
    mult[0] = 1.0
    if w % 2 == 0:
        mult[-1] = 1.0
    energy = np.sum((grid.re.data ** 2 + grid.im.data ** 2) * mult)
    np.testing.assert_allclose(energy, h * w * np.sum(x ** 2), rtol=1e-10)


def test_self_conjugate_bins_ignore_imaginary_part():
    """For even H and W the four corner bins are their own conjugates, so
    the inverse must not respond to their imaginary components."""
    h, w = 4, 6
    x = rng(3).normal(size=(1, 1, h, w))
    grid = spectrum_of(x)
    base = ifft2(grid).data.copy()
    im = grid.im.data.copy()
    for (u, v) in [(0, 0), (h // 2, 0), (0, w // 2), (h // 2, w // 2)]:
        im[0, 0, u, v] += 0.7
    bumped = ifft2(ComplexGrid(grid.re.detach(), Tensor(im), w)).data
    np.testing.assert_allclose(bumped, base, atol=1e-12)


# -- gradients --------------------------------------------------------------------

@pytest.mark.parametrize("h,w", [(4, 4), (3, 5), (4, 6)])
def test_round_trip_gradient_is_identity(h, w):
    x = Tensor(rng(h + w).normal(size=(1, 2, h, w)), requires_grad=True)
    weights = rng(99).normal(size=(1, 2, h, w))
    out = ifft2(fft2(x))
    tensor_sum(out * Tensor(weights)).backward()
    np.testing.assert_allclose(x.grad, weights, atol=1e-10)


def test_fft2_numeric_gradient():
    h, w = 3, 4
    x0 = rng(5).normal(size=(1, 1, h, w))
    probe_re = rng(6).normal(size=(1, 1, h, w // 2 + 1))
    probe_im = rng(7).normal(size=(1, 1, h, w // 2 + 1))

    def loss_value(arr):
        grid = fft2(Tensor(arr))
        return float(np.sum(grid.re.data * probe_re) + np.sum(grid.im.data * probe_im))

    x = Tensor(x0.copy(), requires_grad=True)
    grid = fft2(x)
    (tensor_sum(grid.re * Tensor(probe_re))
     + tensor_sum(grid.im * Tensor(probe_im))).backward()

    eps = 1e-6
    for idx in [(0, 0, 0, 0), (0, 0, 1, 2), (0, 0, 2, 3)]:
        bumped = x0.copy()
        bumped[idx] += eps
        dipped = x0.copy()
        dipped[idx] -= eps
        numeric = (loss_value(bumped) - loss_value(dipped)) / (2 * eps)
        np.testing.assert_allclose(x.grad[idx], numeric, rtol=1e-5, atol=1e-7)


@pytest.mark.parametrize("w", [4, 5])
def test_ifft2_numeric_gradient_both_components(w):
    h = 4
    wf = w // 2 + 1
    re0 = rng(8).normal(size=(1, 1, h, wf))
    im0 = rng(9).normal(size=(1, 1, h, wf))
    probe = rng(10).normal(size=(1, 1, h, w))

    def loss_value(re, im):
        out = ifft2(ComplexGrid(Tensor(re), Tensor(im), w))
        return float(np.sum(out.data * probe))

    re = Tensor(re0.copy(), requires_grad=True)
    im = Tensor(im0.copy(), requires_grad=True)
    tensor_sum(ifft2(ComplexGrid(re, im, w)) * Tensor(probe)).backward()

    eps = 1e-6
    for idx in [(0, 0, 0, 0), (0, 0, 1, 1), (0, 0, 3, wf - 1)]:
        for which, base, grad in (("re", re0, re.grad), ("im", im0, im.grad)):
            up = base.copy(); up[idx] += eps
            dn = base.copy(); dn[idx] -= eps
            if which == "re":
                numeric = (loss_value(up, im0) - loss_value(dn, im0)) / (2 * eps)
            else:
                numeric = (loss_value(re0, up) - loss_value(re0, dn)) / (2 * eps)
            np.testing.assert_allclose(grad[idx], numeric, rtol=1e-5, atol=1e-8)


# -- grid validation ----------------------------------------------------------------

def test_complex_grid_shape_checks():
    re = Tensor(np.zeros((1, 1, 4, 3)))
    with pytest.raises(ShapeError):
        ComplexGrid(re, Tensor(np.zeros((1, 1, 4, 2))), 4)
    with pytest.raises(ShapeError):
        ComplexGrid(Tensor(np.zeros((4, 3))), Tensor(np.zeros((4, 3))), 4)
    with pytest.raises(ShapeError):
        ComplexGrid(re, re.detach(), 7)  # 7 // 2 + 1 == 4, not 3


def test_fft2_rejects_non_rank4():
    with pytest.raises(ShapeError):
        fft2(Tensor(np.zeros((4, 4))))


# -- complex depthwise convolution ----------------------------------------------------

def test_complex_conv_matches_separate_real_convs():
    """A real kernel applied to a complex grid convolves re and im planes
    independently with the same taps."""
    c, h, wf = 3, 4, 5
    g = rng(11)
    re = g.normal(size=(2, c, h, wf))
    im = g.normal(size=(2, c, h, wf))
    kern = g.normal(size=(c, 1, 3, 3))
    grid = ComplexGrid(Tensor(re), Tensor(im), 8)
    out = complex_depthwise_conv(grid, Tensor(kern))
    assert out.original_width == 8
    np.testing.assert_allclose(
        out.re.data, naive_conv2d(re, kern, groups=c, padding=1), atol=1e-10)
    np.testing.assert_allclose(
        out.im.data, naive_conv2d(im, kern, groups=c, padding=1), atol=1e-10)


def test_complex_conv_rejects_even_kernel():
    grid = ComplexGrid(Tensor(np.zeros((1, 2, 4, 3))), Tensor(np.zeros((1, 2, 4, 3))), 4)
    with pytest.raises(ConfigError):
        complex_depthwise_conv(grid, Tensor(np.zeros((2, 1, 4, 4))))


def test_impulse_kernel_is_identity_on_grid():
    c, h, w = 2, 4, 6
    x = rng(12).normal(size=(1, c, h, w))
    grid = spectrum_of(x)
    kern = np.zeros((c, 1, 3, 3))
    kern[:, 0, 1, 1] = 1.0
    out = complex_depthwise_conv(grid, Tensor(kern))
    np.testing.assert_allclose(out.re.data, grid.re.data, atol=1e-12)
    np.testing.assert_allclose(out.im.data, grid.im.data, atol=1e-12)
    np.testing.assert_allclose(ifft2(out).data, x, atol=1e-10)
