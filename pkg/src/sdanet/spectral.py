"""Differentiable 2-D Fourier transforms on feature maps.

Real inputs map to a Hermitian-reduced spectrum: only the first
floor(W/2)+1 frequency columns are stored, since the rest are conjugate
mirrors. The pair of real tensors (re, im) rides the same autodiff record
as everything else; the adjoints below account for the reduced storage.

Forward transform is unnormalized; the inverse carries the 1/(H*W) factor.
"""

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import Tensor, _op, conv2d

__all__ = ["ComplexGrid", "fft2", "ifft2", "complex_depthwise_conv"]


class ComplexGrid:
    """Hermitian-reduced spectrum: re/im tensors of shape
    (batch, channels, height, floor(width/2)+1) plus the original width
    needed to invert unambiguously."""

    __slots__ = ("re", "im", "original_width")

    def __init__(self, re, im, original_width):
        if re.shape != im.shape:
            raise ShapeError(f"re/im shapes differ: {re.shape} vs {im.shape}")
        if re.ndim != 4:
            raise ShapeError(f"spectrum must be rank 4; got rank {re.ndim}")
        if re.shape[3] != original_width // 2 + 1:
            raise ShapeError(
                f"reduced width {re.shape[3]} inconsistent with original "
                f"width {original_width} (expected {original_width // 2 + 1})")
        self.re = re
        self.im = im
        self.original_width = original_width

    @property
    def shape(self):
        return self.re.shape

    @property
    def channels(self):
        return self.re.shape[1]


def fft2(x):
    """Real (n, c, h, w) tensor -> ComplexGrid of its 2-D DFT."""
    if x.ndim != 4:
        raise ShapeError(f"fft2 input must be rank 4; got rank {x.ndim}")
    n, c, h, w = x.shape
    if h < 1 or w < 1:
        raise ShapeError("fft2 needs spatial extents of at least 1")
    spec = np.fft.rfft2(x.data, axes=(2, 3))
    wf = spec.shape[3]

    # Adjoint of (real input -> reduced bins), treating re and im as
    # independent real outputs: zero-extend the cotangent to full width,
    # inverse transform, keep the real part, undo the 1/(H*W) that the
    # library inverse applies. No mirror weighting enters because the
    # forward never materialized the mirrored columns.
    def extend_and_invert(cot):
        full = np.zeros((n, c, h, w), dtype=np.complex128)
        full[..., :wf] = cot
        return np.fft.ifft2(full, axes=(2, 3)).real * (h * w)

    def make_re():
        return lambda g: (extend_and_invert(g),)

    def make_im():
        return lambda g: (extend_and_invert(1j * g),)

    re = _op(np.ascontiguousarray(spec.real), (x,), make_re)
    im = _op(np.ascontiguousarray(spec.imag), (x,), make_im)
    return ComplexGrid(re, im, w)


def ifft2(grid):
    """ComplexGrid -> real (n, c, h, original_width) tensor, 1/(H*W) scaled."""
    re, im = grid.re, grid.im
    n, c, h, wf = re.shape
    w = grid.original_width
    out_data = np.fft.irfft2(re.data + 1j * im.data, s=(h, w), axes=(2, 3))

    # Adjoint: G = full forward DFT of the cotangent, truncated to the
    # reduced columns. Interior columns (0 < v < W/2) feed the real output
    # twice, once directly and once through the implicit conjugate mirror,
    # hence the factor-2 multiplicity; DC and (even W) Nyquist feed once.
    mult = np.full(wf, 2.0)
    mult[0] = 1.0
    if w % 2 == 0:
        mult[wf - 1] = 1.0
    scale = mult / (h * w)

    def make():
        def run(g):
            spec = np.fft.fft2(g, axes=(2, 3))[..., :wf]
            return (spec.real * scale, spec.imag * scale)
        return run

    return _op(out_data, (re, im), make)


def complex_depthwise_conv(grid, kernel):
    """Depthwise k x k conv applied to the spectrum; one real-valued
    kernel per channel is shared by the re and im planes."""
    if kernel.ndim != 4 or kernel.shape[1] != 1:
        raise ShapeError(f"kernel must have shape (channels, 1, k, k); got {kernel.shape}")
    k = kernel.shape[2]
    if k != kernel.shape[3]:
        raise ShapeError(f"kernel must be square; got {k}x{kernel.shape[3]}")
    if k % 2 == 0:
        raise ConfigError(f"kernel size must be odd to preserve extent; got {k}")
    c = grid.channels
    if kernel.shape[0] != c:
        raise ShapeError(f"kernel channel count {kernel.shape[0]} != spectrum channels {c}")
    pad = (k - 1) // 2
    re = conv2d(grid.re, kernel, bias=None, groups=c, padding=pad)
    im = conv2d(grid.im, kernel, bias=None, groups=c, padding=pad)
    return ComplexGrid(re, im, grid.original_width)
