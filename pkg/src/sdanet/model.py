"""Network assembly: config, parameter registry, forward pass, checkpoints.

The network is a shallow 3x3 conv, a cascade of residual blocks (channel
attention + frequency feed-forward, each behind its own layer norm), a
long skip back to the shallow features, two 3x3 reconstruction convs, a
single conv + pixel-shuffle upsampler, and a final 3x3 conv down to the
spectral band count.
"""

import math
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dcsa import DcsaParams, dcsa_forward
from .errors import ConfigError, FormatError, ShapeError
from .feffn import FeffnParams, feffn_forward
from .tensor import Parameter, Tensor, _as_tensor, conv2d, layer_norm, pixel_shuffle

__all__ = ["SdanetConfig", "SdabParams", "SdanetModel", "VARIANTS",
           "init_params", "sdab_forward", "sdanet_forward", "count_params",
           "save_checkpoint", "load_checkpoint"]

VARIANTS = ("full", "no_dcsa", "no_feffn", "fixed_k_full", "fixed_k_half")

_MAGIC = b"SDAN"
_VERSION = 1


@dataclass
class SdanetConfig:
    bands: int
    feat_channels: int = 64
    num_blocks: int = 6
    scale: int = 4
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.bands, int) or self.bands < 1:
            raise ConfigError(f"bands must be a positive integer; got {self.bands!r}")
        if not isinstance(self.feat_channels, int) or self.feat_channels < 2 \
                or self.feat_channels % 2 != 0:
            raise ConfigError(
                f"feat_channels must be an even integer >= 2; got {self.feat_channels!r}")
        if not isinstance(self.num_blocks, int) or self.num_blocks < 1:
            raise ConfigError(f"num_blocks must be >= 1; got {self.num_blocks!r}")
        if self.scale not in (2, 4, 8):
            raise ConfigError(f"scale must be one of 2, 4, 8; got {self.scale!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 32:
            raise ConfigError(f"seed must fit an unsigned 32-bit integer; got {self.seed!r}")


@dataclass
class SdabParams:
    """One residual block; either half may be absent in ablations."""

    norm1_gamma: Optional[Parameter] = None
    norm1_beta: Optional[Parameter] = None
    dcsa: Optional[DcsaParams] = None
    norm2_gamma: Optional[Parameter] = None
    norm2_beta: Optional[Parameter] = None
    feffn: Optional[FeffnParams] = None


@dataclass
class SdanetModel:
    config: SdanetConfig
    variant: str
    params: dict = field(default_factory=dict)   # name -> Parameter, registry order
    blocks: list = field(default_factory=list)   # SdabParams
    shallow_w: Parameter = None
    shallow_b: Parameter = None
    recon1_w: Parameter = None
    recon1_b: Parameter = None
    recon2_w: Parameter = None
    recon2_b: Parameter = None
    upsample_w: Parameter = None
    upsample_b: Parameter = None
    final_w: Parameter = None
    final_b: Parameter = None

    @property
    def use_dcsa(self):
        return self.variant != "no_dcsa"

    @property
    def use_feffn(self):
        return self.variant != "no_feffn"

    @property
    def k_override(self):
        c = self.config.feat_channels
        if self.variant == "fixed_k_full":
            return c
        if self.variant == "fixed_k_half":
            return c // 2
        return None

    def parameters(self):
        return list(self.params.values())

    def zero_grads(self):
        for p in self.params.values():
            p.grad = None


class _Builder:
    def __init__(self, seed):
        self.rng = np.random.default_rng(seed)
        self.registry = {}

    def conv(self, name, out_c, in_c_per_group, k, bias=True):
        limit = math.sqrt(1.0 / (in_c_per_group * k * k))
        w = Parameter(name + ".weight",
                      self.rng.uniform(-limit, limit, size=(out_c, in_c_per_group, k, k)))
        self.registry[w.name] = w
        if not bias:
            return w, None
        b = Parameter(name + ".bias", np.zeros(out_c))
        self.registry[b.name] = b
        return w, b

    def kernel(self, name, out_c, in_c_per_group, k):
        w, _ = self.conv(name, out_c, in_c_per_group, k, bias=False)
        return w

    def norm(self, name, c):
        gamma = Parameter(name + ".gamma", np.ones(c))
        beta = Parameter(name + ".beta", np.zeros(c))
        self.registry[gamma.name] = gamma
        self.registry[beta.name] = beta
        return gamma, beta


def _build_dcsa(b, prefix, c):
    hidden = -(-c // 4)  # ceil(C/4)
    q = b.kernel(prefix + ".q_dconv", c, 1, 3)
    k = b.kernel(prefix + ".k_dconv", c, 1, 3)
    v = b.kernel(prefix + ".v_dconv", c, 1, 3)
    gd = b.kernel(prefix + ".gate_dconv", c, 1, 3)
    w1, b1 = b.conv(prefix + ".gate_mlp.fc1", hidden, c, 1)
    w2, b2 = b.conv(prefix + ".gate_mlp.fc2", 1, hidden, 1)
    out = b.kernel(prefix + ".out_proj", c, c, 1)
    return DcsaParams(q_dconv=q, k_dconv=k, v_dconv=v, gate_dconv=gd,
                      gate_w1=w1, gate_b1=b1, gate_w2=w2, gate_b2=b2,
                      out_proj=out)


def _build_feffn(b, prefix, c):
    expand = b.kernel(prefix + ".expand_proj", 2 * c, c, 1)
    f5 = b.kernel(prefix + ".freq_kernel_5", 2 * c, 1, 5)
    f3 = b.kernel(prefix + ".freq_kernel_3", 2 * c, 1, 3)
    s5 = b.kernel(prefix + ".spatial_dconv_5", 2 * c, 1, 5)
    s3 = b.kernel(prefix + ".spatial_dconv_3", 2 * c, 1, 3)
    out = b.kernel(prefix + ".out_proj", c, 4 * c, 1)
    return FeffnParams(expand_proj=expand, freq_kernel_5=f5, freq_kernel_3=f3,
                       spatial_dconv_5=s5, spatial_dconv_3=s3, out_proj=out)


def init_params(config, variant="full"):
    """Freshly seeded model. Conv weights are uniform in +-sqrt(1/fan_in)
    (fan_in counts input channels per group times kernel area), biases and
    norm offsets start at zero, norm scales at one."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    c = config.feat_channels
    b = _Builder(config.seed)
    model = SdanetModel(config=config, variant=variant, params=b.registry)

    model.shallow_w, model.shallow_b = b.conv("shallow_conv", c, config.bands, 3)
    for i in range(config.num_blocks):
        blk = SdabParams()
        prefix = f"blocks.{i}"
        if model.use_dcsa:
            blk.norm1_gamma, blk.norm1_beta = b.norm(prefix + ".norm1", c)
            blk.dcsa = _build_dcsa(b, prefix + ".dcsa", c)
        if model.use_feffn:
            blk.norm2_gamma, blk.norm2_beta = b.norm(prefix + ".norm2", c)
            blk.feffn = _build_feffn(b, prefix + ".feffn", c)
        model.blocks.append(blk)
    model.recon1_w, model.recon1_b = b.conv("recon_conv1", c, c, 3)
    model.recon2_w, model.recon2_b = b.conv("recon_conv2", c, c, 3)
    model.upsample_w, model.upsample_b = b.conv("upsample_conv",
                                                c * config.scale ** 2, c, 3)
    model.final_w, model.final_b = b.conv("final_conv", config.bands, c, 3)
    return model


def sdab_forward(features, block, k_override=None):
    """One residual block: attention then feed-forward, each normed and
    added back onto its input."""
    if block.dcsa is not None:
        normed = layer_norm(features, block.norm1_gamma, block.norm1_beta)
        features = features + dcsa_forward(normed, block.dcsa, k_override)
    if block.feffn is not None:
        normed = layer_norm(features, block.norm2_gamma, block.norm2_beta)
        features = features + feffn_forward(normed, block.feffn)
    return features


def sdanet_forward(lr_input, model):
    """Low-resolution batch (n, bands, h, w) -> (n, bands, h*scale, w*scale).

    Output is unclamped; evaluation clamps to [0, 1] separately.
    """
    x = _as_tensor(lr_input)
    if x.ndim != 4:
        raise ConfigError(f"input must be rank 4 (batch, bands, h, w); got rank {x.ndim}")
    cfg = model.config
    if x.shape[1] != cfg.bands:
        raise ConfigError(f"input has {x.shape[1]} bands; model expects {cfg.bands}")

    shallow = conv2d(x, model.shallow_w, model.shallow_b, padding=1)
    feat = shallow
    for blk in model.blocks:
        feat = sdab_forward(feat, blk, model.k_override)
    feat = feat + shallow
    feat = conv2d(feat, model.recon1_w, model.recon1_b, padding=1)
    feat = conv2d(feat, model.recon2_w, model.recon2_b, padding=1)
    up = conv2d(feat, model.upsample_w, model.upsample_b, padding=1)
    up = pixel_shuffle(up, cfg.scale)
    return conv2d(up, model.final_w, model.final_b, padding=1)


def count_params(model):
    return sum(p.size for p in model.params.values())


# -- persistence ----------------------------------------------------------

def save_checkpoint(model, path):
    """Write config and every named parameter as little-endian binary."""
    cfg = model.config
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<6I", _VERSION, cfg.bands, cfg.feat_channels,
                             cfg.num_blocks, cfg.scale, cfg.seed))
        fh.write(struct.pack("<I", len(model.params)))
        for name, p in model.params.items():
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", p.data.ndim))
            fh.write(struct.pack(f"<{p.data.ndim}I", *p.data.shape))
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


class _Cursor:
    def __init__(self, blob, path):
        self.blob = blob
        self.path = path
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.blob):
            raise FormatError(
                f"{self.path}: truncated at byte {len(self.blob)} "
                f"(needed {self.pos + n})")
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path):
    """Rebuild a model from a checkpoint file.

    Structure (which blocks carry attention or feed-forward halves) is
    inferred from the stored parameter names. Budget overrides of the
    fixed-k variants are runtime flags, not stored; a reloaded model runs
    with the learned gate unless the caller reapplies the override.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    cur = _Cursor(blob, path)
    if cur.take(4) != _MAGIC:
        raise FormatError(f"{path}: bad magic; not a checkpoint file")
    version, bands, feat_channels, num_blocks, scale, seed = cur.unpack("<6I")
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    try:
        config = SdanetConfig(bands=bands, feat_channels=feat_channels,
                              num_blocks=num_blocks, scale=scale, seed=seed)
    except ConfigError as exc:
        raise FormatError(f"{path}: stored config is invalid: {exc}") from None

    (n_params,) = cur.unpack("<I")
    entries = []
    for _ in range(n_params):
        (name_len,) = cur.unpack("<H")
        name = cur.take(name_len).decode("utf-8")
        (rank,) = cur.unpack("<B")
        shape = cur.unpack(f"<{rank}I")
        count = int(np.prod(shape)) if rank else 1
        values = np.frombuffer(cur.take(8 * count), dtype="<f8").reshape(shape)
        entries.append((name, values))
    if cur.pos != len(blob):
        raise FormatError(f"{path}: {len(blob) - cur.pos} trailing bytes after "
                          f"the last parameter")

    names = {name for name, _ in entries}
    has_dcsa = any(".dcsa." in n for n in names)
    has_feffn = any(".feffn." in n for n in names)
    if has_dcsa and has_feffn:
        variant = "full"
    elif has_dcsa:
        variant = "no_feffn"
    elif has_feffn:
        variant = "no_dcsa"
    else:
        raise FormatError(f"{path}: no block parameters present")

    model = init_params(config, variant)
    expected = set(model.params)
    if names != expected:
        missing = sorted(expected - names)[:3]
        extra = sorted(names - expected)[:3]
        raise FormatError(f"{path}: parameter names do not match the stored "
                          f"config (missing {missing}, unexpected {extra})")
    for name, values in entries:
        p = model.params[name]
        if values.shape != p.data.shape:
            raise FormatError(f"{path}: parameter {name} has shape {values.shape}; "
                              f"expected {p.data.shape}")
        # frombuffer views are read-only; parameters need writable storage
        p.data = np.array(values, dtype=np.float64, order="C")
    return model
