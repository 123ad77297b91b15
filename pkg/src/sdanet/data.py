"""Scene containers, binary cube I/O, bicubic resampling, patch extraction,
and the synthetic-scene generator used by the toy benchmark.

Cube files ("HSI1"): magic, u32 height/width/bands, u16 name length + utf-8
name, then float32 little-endian values in band-sequential order. Values
must lie in [0, 1].
"""

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, ShapeError

__all__ = ["HsiCube", "save_cube", "load_cube", "load_raw_cube",
           "bicubic_resize", "PatchPair", "extract_patches",
           "split_train_val", "synth_scene"]

_MAGIC = b"HSI1"


@dataclass
class HsiCube:
    """Reflectance cube, float32, laid out (bands, height, width)."""

    values: np.ndarray
    name: str = ""

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float32)
        if arr.ndim != 3:
            raise ShapeError(f"cube must be rank 3 (bands, h, w); got rank {arr.ndim}")
        self.values = arr

    @property
    def bands(self):
        return self.values.shape[0]

    @property
    def height(self):
        return self.values.shape[1]

    @property
    def width(self):
        return self.values.shape[2]


def _check_range(flat, path, header_bytes):
    """Reject NaN or out-of-range samples, reporting the byte offset."""
    bad = ~((flat >= 0.0) & (flat <= 1.0))  # catches NaN too
    if bad.any():
        idx = int(np.argmax(bad))
        offset = header_bytes + 4 * idx
        raise FormatError(
            f"{path}: sample at byte offset {offset} is {flat[idx]!r}; "
            f"cube values must lie in [0, 1]")


def save_cube(cube, path):
    arr = cube.values
    if not np.isfinite(arr).all() or arr.min() < 0.0 or arr.max() > 1.0:
        raise FormatError(f"refusing to write {path}: values outside [0, 1]")
    raw_name = cube.name.encode("utf-8")
    if len(raw_name) > 0xFFFF:
        raise FormatError(f"cube name too long ({len(raw_name)} bytes)")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<3I", cube.height, cube.width, cube.bands))
        fh.write(struct.pack("<H", len(raw_name)))
        fh.write(raw_name)
        fh.write(arr.astype("<f4").tobytes())


def load_cube(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise FormatError(f"{path}: bad magic; not a cube file")
    if len(blob) < 18:
        raise FormatError(f"{path}: truncated header ({len(blob)} bytes)")
    height, width, bands = struct.unpack_from("<3I", blob, 4)
    (name_len,) = struct.unpack_from("<H", blob, 16)
    header = 18 + name_len
    if len(blob) < header:
        raise FormatError(f"{path}: truncated name field")
    name = blob[18:header].decode("utf-8")
    count = height * width * bands
    expected = header + 4 * count
    if len(blob) != expected:
        raise FormatError(f"{path}: {len(blob)} bytes; expected {expected} "
                          f"for a {height}x{width}x{bands} cube")
    flat = np.frombuffer(blob, dtype="<f4", count=count, offset=header)
    _check_range(flat, path, header)
    values = flat.reshape(bands, height, width).copy()
    return HsiCube(values=values, name=name)


def load_raw_cube(path, height, width, bands, name=""):
    """Import a headerless float32 little-endian band-sequential file."""
    for label, v in (("height", height), ("width", width), ("bands", bands)):
        if not isinstance(v, int) or v < 1:
            raise ConfigError(f"{label} must be a positive integer; got {v!r}")
    with open(path, "rb") as fh:
        blob = fh.read()
    count = height * width * bands
    if len(blob) != 4 * count:
        raise FormatError(f"{path}: {len(blob)} bytes; expected {4 * count} "
                          f"for a {height}x{width}x{bands} cube")
    flat = np.frombuffer(blob, dtype="<f4")
    _check_range(flat, path, 0)
    return HsiCube(values=flat.reshape(bands, height, width).copy(), name=name)


# -- bicubic resampling ----------------------------------------------------

def _cubic_kernel(t):
    """Keys interpolation kernel, a = -0.5."""
    t = abs(t)
    if t <= 1.0:
        return (1.5 * t - 2.5) * t * t + 1.0
    if t < 2.0:
        return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0
    return 0.0


def _mirror(i, n):
    """Symmetric reflection: -1 -> 0, -2 -> 1, n -> n-1, n+1 -> n-2."""
    while i < 0 or i >= n:
        if i < 0:
            i = -1 - i
        else:
            i = 2 * n - 1 - i
    return i


def _resize_axis(arr, out_n, axis):
    """Separable cubic resample along one axis with half-pixel centering."""
    in_n = arr.shape[axis]
    scale = in_n / out_n
    moved = np.moveaxis(arr, axis, 0)
    out = np.zeros((out_n,) + moved.shape[1:], dtype=np.float64)
    for j in range(out_n):
        src = (j + 0.5) * scale - 0.5
        base = math.floor(src)
        frac = src - base
        acc = None
        for m in range(-1, 3):
            weight = _cubic_kernel(frac - m)
            if weight == 0.0:
                continue
            row = moved[_mirror(base + m, in_n)]
            acc = weight * row if acc is None else acc + weight * row
        out[j] = acc
    return np.moveaxis(out, 0, axis)


def bicubic_resize(cube, out_height, out_width):
    """Cubic-convolution resample of every band (Keys kernel, a = -0.5,
    half-pixel centers, mirrored borders)."""
    if out_height < 1 or out_width < 1:
        raise ConfigError(f"target extent must be positive; got "
                          f"{out_height}x{out_width}")
    vals = cube.values.astype(np.float64)
    vals = _resize_axis(vals, out_height, axis=1)
    vals = _resize_axis(vals, out_width, axis=2)
    return HsiCube(values=np.clip(vals, 0.0, 1.0, out=vals).astype(np.float32),
                   name=cube.name)


# -- patch extraction -------------------------------------------------------

@dataclass
class PatchPair:
    lr: HsiCube
    hr: HsiCube
    offset: tuple = (0, 0)   # (row, col) of the HR patch in scene coordinates

    def __post_init__(self):
        if self.lr.bands != self.hr.bands:
            raise ShapeError(f"band mismatch: lr {self.lr.bands} vs hr {self.hr.bands}")


def extract_patches(scene, lr_size, scale, stride):
    """Cut aligned (lr, hr) patch pairs from one high-resolution scene.

    The scene is bicubic-downsampled by `scale` once, then lr_size windows
    slide over the low-resolution grid row-major with the given stride.
    Each HR patch starts at exactly scale times the LR offset.
    """
    if not isinstance(scale, int) or scale < 1:
        raise ConfigError(f"scale must be a positive integer; got {scale!r}")
    if not isinstance(stride, int) or stride < 1:
        raise ConfigError(f"stride must be a positive integer; got {stride!r}")
    if not isinstance(lr_size, int) or lr_size < 1:
        raise ConfigError(f"lr_size must be a positive integer; got {lr_size!r}")
    h, w = scene.height, scene.width
    if h % scale or w % scale:
        raise ConfigError(f"scene extent {h}x{w} not divisible by scale {scale}")
    lr_h, lr_w = h // scale, w // scale
    if lr_size > lr_h or lr_size > lr_w:
        raise ConfigError(f"lr_size {lr_size} exceeds downsampled extent "
                          f"{lr_h}x{lr_w}")
    low = bicubic_resize(scene, lr_h, lr_w)
    hr_size = lr_size * scale
    pairs = []
    for r in range(0, lr_h - lr_size + 1, stride):
        for c in range(0, lr_w - lr_size + 1, stride):
            lr_patch = HsiCube(low.values[:, r:r + lr_size, c:c + lr_size],
                               name=f"{scene.name}[{r},{c}]")
            hr_r, hr_c = r * scale, c * scale
            hr_patch = HsiCube(
                scene.values[:, hr_r:hr_r + hr_size, hr_c:hr_c + hr_size],
                name=f"{scene.name}[{r},{c}]hr")
            pairs.append(PatchPair(lr=lr_patch, hr=hr_patch, offset=(hr_r, hr_c)))
    return pairs


def split_train_val(items, val_fraction, seed):
    """Seeded permutation split; the first ceil(n * fraction) go to val."""
    if not 0.0 <= val_fraction < 1.0:
        raise ConfigError(f"val_fraction must lie in [0, 1); got {val_fraction}")
    items = list(items)
    order = np.random.default_rng(seed).permutation(len(items))
    n_val = math.ceil(len(items) * val_fraction)
    val = [items[i] for i in order[:n_val]]
    train = [items[i] for i in order[n_val:]]
    return train, val


# -- synthetic scenes --------------------------------------------------------

def _smooth_signature(rng, bands):
    """Random smooth spectrum in [0, 1]: a random walk, box-filtered twice
    so neighboring bands stay close relative to the overall span."""
    walk = np.cumsum(rng.normal(0.0, 1.0, size=bands))
    width = min(5, bands) | 1
    if width >= 3:
        kernel = np.ones(width) / width
        for _ in range(2):
            ext = np.pad(walk, width // 2, mode="reflect")
            walk = np.convolve(ext, kernel, mode="valid")
    lo, hi = walk.min(), walk.max()
    return (walk - lo) / (hi - lo + 1e-9)


def synth_scene(seed, height, width, bands, n_endmembers=4, name=None):
    """Linear mixing scene: a few smooth spectral signatures spread over
    sharply bounded abundance regions, plus oriented step edges and a
    band-coherent grating texture.

    Regions come from a softmax over random smooth bump fields with a high
    sharpness, so material boundaries stay crisp; adjacent bands remain
    highly correlated because every spatial component modulates the bands
    through a smooth, all-positive spectral profile. The edges and the
    mid-frequency texture give the scene real high-frequency spatial
    content, which plain interpolation cannot restore after downsampling.
    """
    if n_endmembers < 2:
        raise ConfigError(f"need at least 2 endmembers; got {n_endmembers}")
    if height < 8 or width < 8:
        raise ConfigError(f"scene must be at least 8x8; got {height}x{width}")
    if bands < 2:
        raise ConfigError(f"need at least 2 bands; got {bands}")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)

    fields = np.zeros((n_endmembers, height, width))
    for e in range(n_endmembers):
        for _ in range(3):
            cy = rng.uniform(0, height)
            cx = rng.uniform(0, width)
            sig = rng.uniform(min(height, width) / 8.0, min(height, width) / 3.0)
            amp = rng.uniform(0.5, 1.5)
            d2 = (yy - cy) ** 2 + (xx - cx) ** 2
            fields[e] += amp * np.exp(-d2 / (2.0 * sig * sig))
    sharp = 40.0
    logits = sharp * fields
    logits -= logits.max(axis=0, keepdims=True)
    expf = np.exp(logits)
    abundances = expf / expf.sum(axis=0, keepdims=True)

    # Every material follows one shared smooth spectral shape with its own
    # positive gain and brightness offset plus a small private residual.
    # Positive gains keep neighboring bands positively aligned (real cubes
    # are strongly band-correlated); offsets keep materials separable.
    shared = _smooth_signature(rng, bands) - 0.5
    offsets = rng.permutation(np.linspace(0.3, 0.8, n_endmembers)) \
        + rng.uniform(-0.02, 0.02, size=n_endmembers)
    # few-band cubes cover the shared shape in big steps, so damp its gain
    # to keep neighboring bands tightly coupled there too
    gains = rng.uniform(0.1, 0.35, size=n_endmembers) * min(1.0, bands / 8.0)
    resid = 0.02 * np.stack([_smooth_signature(rng, bands) - 0.5
                             for _ in range(n_endmembers)])
    spectra = np.clip(offsets[:, None] + gains[:, None] * shared[None, :] + resid,
                      0.05, 1.0)
    cube = np.einsum("eb,ehw->bhw", spectra, abundances)

    # Shared multiplicative illumination: a smooth shading field modulates
    # every band the same way, the dominant source of inter-band coherence
    # in real reflectance data.
    shade = np.zeros((height, width))
    for _ in range(3):
        cy = rng.uniform(0, height)
        cx = rng.uniform(0, width)
        sig = rng.uniform(min(height, width) / 4.0, min(height, width) / 1.5)
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        shade += rng.uniform(0.5, 1.0) * np.exp(-d2 / (2.0 * sig * sig))
    shade -= shade.min()
    peak = shade.max()
    if peak > 0:
        shade /= peak
    cube *= (0.45 + 0.55 * shade)[None, :, :]

    # Oriented step edges with a smooth spectral profile. Few-band cubes get
    # flatter profiles for the same reason their gains are damped: steps
    # between bands are larger there, and strongly band-varying additions
    # would decouple neighbors.
    profile_scale = min(1.0, bands / 8.0)
    for _ in range(6):
        theta = rng.uniform(0.0, math.pi)
        c = rng.uniform(0.25, 0.75) * (height * math.sin(theta) + width * math.cos(theta))
        mask = (yy * math.sin(theta) + xx * math.cos(theta) > c).astype(np.float64)
        profile = 0.5 + 0.5 * profile_scale * _smooth_signature(rng, bands)
        cube += 0.12 * rng.choice([-1.0, 1.0]) * profile[:, None, None] * (mask - 0.5)

    # Mid-frequency grating texture under a smooth spatial envelope. The
    # orientation/wavelength basis is fixed across scenes (like the shared
    # texture statistics of one sensor's scenes); phases, strengths, and
    # envelopes vary per seed. Wavelengths sit near the sampling limit of a
    # 2x-downsampled grid, so the texture carries the spatial detail that
    # separates a learned upsampler from plain interpolation. One smooth
    # all-positive spectral profile modulates every grating, keeping the
    # bands coherent.
    tex = np.zeros((height, width))
    basis = ((0.44, 3.4), (2.01, 4.6), (1.17, 5.8))
    for theta, wavelength in basis:
        phase = rng.uniform(0.0, 2.0 * math.pi)
        amp = rng.uniform(0.6, 1.0)
        tex += amp * np.sin(2.0 * math.pi * (yy * math.sin(theta)
                                             + xx * math.cos(theta))
                            / wavelength + phase)
    tex_rms = tex.std()
    if tex_rms > 0:
        tex /= tex_rms
    envelope = np.zeros((height, width))
    for _ in range(3):
        cy = rng.uniform(0, height)
        cx = rng.uniform(0, width)
        sig = rng.uniform(min(height, width) / 4.0, min(height, width) / 2.0)
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        envelope += np.exp(-d2 / (2.0 * sig * sig))
    env_peak = envelope.max()
    if env_peak > 0:
        envelope /= env_peak
    tex_profile = 0.5 + 0.5 * profile_scale * _smooth_signature(rng, bands)
    cube += 0.2 * tex_profile[:, None, None] \
        * ((0.3 + 0.7 * envelope) * tex)[None, :, :]

    cube = 0.05 + 0.9 * np.clip(cube, 0.0, 1.0)
    return HsiCube(values=cube.astype(np.float32),
                   name=name or f"synth{seed}")
