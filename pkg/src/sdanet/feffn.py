"""Frequency-enhanced feed-forward module.

Features are expanded to 2C channels, passed through GELU, then filtered
in the Fourier domain by two depthwise branches with different receptive
fields (5x5 and 3x3). Each branch's channels split in half and the halves
are exchanged across branches before inversion, so every output channel
mixes both filter scales. Spatial depthwise convs refine the inverted
maps and a pointwise projection folds the concatenated 4C channels back
down to C.
"""

from dataclasses import dataclass

from .errors import ConfigError, ShapeError
from .spectral import ComplexGrid, complex_depthwise_conv, fft2, ifft2
from .tensor import Parameter, concat, conv2d, gelu, narrow

__all__ = ["FeffnParams", "frequency_branch", "cross_frequency_exchange",
           "feffn_forward"]


@dataclass
class FeffnParams:
    """Weights of one feed-forward module over C input channels."""

    expand_proj: Parameter     # (2C, C, 1, 1) pointwise
    freq_kernel_5: Parameter   # (2C, 1, 5, 5) depthwise, spectral domain
    freq_kernel_3: Parameter   # (2C, 1, 3, 3) depthwise, spectral domain
    spatial_dconv_5: Parameter  # (2C, 1, 5, 5) depthwise
    spatial_dconv_3: Parameter  # (2C, 1, 3, 3) depthwise
    out_proj: Parameter        # (C, 4C, 1, 1) pointwise

    @property
    def channels(self):
        return self.out_proj.shape[0]

    def all(self):
        return [self.expand_proj, self.freq_kernel_5, self.freq_kernel_3,
                self.spatial_dconv_5, self.spatial_dconv_3, self.out_proj]


def _split_grid(grid):
    """Channel-halve a spectrum."""
    c = grid.channels
    if c % 2 != 0:
        raise ConfigError(f"cannot halve {c} spectral channels")
    half = c // 2
    first = ComplexGrid(narrow(grid.re, 1, 0, half), narrow(grid.im, 1, 0, half),
                        grid.original_width)
    second = ComplexGrid(narrow(grid.re, 1, half, half), narrow(grid.im, 1, half, half),
                         grid.original_width)
    return first, second


def _concat_grids(a, b):
    if a.original_width != b.original_width:
        raise ShapeError(
            f"cannot concat spectra of widths {a.original_width} and {b.original_width}")
    return ComplexGrid(concat([a.re, b.re], axis=1), concat([a.im, b.im], axis=1),
                       a.original_width)


def frequency_branch(x, kernel):
    """Transform, filter depthwise in the spectral domain, halve channels.

    Returns (first_half, second_half) as ComplexGrids.
    """
    spec = fft2(x)
    filtered = complex_depthwise_conv(spec, kernel)
    return _split_grid(filtered)


def cross_frequency_exchange(branch5, branch3):
    """Swap first halves between the two branches:
    the 5x5 stream continues as [a3, b5], the 3x3 stream as [a5, b3]."""
    a5, b5 = branch5
    a3, b3 = branch3
    return _concat_grids(a3, b5), _concat_grids(a5, b3)


def feffn_forward(x, params):
    c = params.channels
    if x.ndim != 4:
        raise ShapeError(f"features must be rank 4; got rank {x.ndim}")
    if x.shape[1] != c:
        raise ShapeError(f"feature channels {x.shape[1]} != parameter channels {c}")
    wide = gelu(conv2d(x, params.expand_proj))
    branch5 = frequency_branch(wide, params.freq_kernel_5)
    branch3 = frequency_branch(wide, params.freq_kernel_3)
    mixed5, mixed3 = cross_frequency_exchange(branch5, branch3)
    z5 = ifft2(mixed5)
    z3 = ifft2(mixed3)
    wide_c = 2 * c
    u5 = conv2d(z5, params.spatial_dconv_5, groups=wide_c, padding=2)
    u3 = conv2d(z3, params.spatial_dconv_3, groups=wide_c, padding=1)
    u = concat([u5, u3], axis=1)
    return conv2d(u, params.out_proj)
