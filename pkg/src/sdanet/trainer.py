"""Optimization loop, evaluation protocol, ablation and sweep harnesses.

History is line-oriented so runs can be diffed:
    step=<n> lr=<float> pix=<float> sam=<float> total=<float>
    step=<n> psnr=<float> ssim=<float> sam_deg=<float> cc=<float> ergas=<float>
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import HsiCube, bicubic_resize
from .errors import ConfigError, TrainingDivergedError
from .model import count_params, init_params, save_checkpoint, sdanet_forward
from .objective import MetricsReport, evaluate_all, total_loss
from .tensor import Tensor, backward, no_grad

__all__ = ["TrainConfig", "StepRecord", "TrainHistory", "AdamState",
           "cosine_lr", "adam_step", "predict", "evaluate_pairs",
           "bicubic_baseline", "train", "run_ablation", "lambda_sweep"]


@dataclass
class TrainConfig:
    total_steps: int
    batch_size: int = 16
    lr0: float = 1e-4
    lam: float = 0.2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    eval_every: int = 0          # 0 disables periodic evaluation
    checkpoint: str = ""         # empty disables saving

    def __post_init__(self):
        if not isinstance(self.total_steps, int) or self.total_steps < 1:
            raise ConfigError(f"total_steps must be >= 1; got {self.total_steps!r}")
        if not isinstance(self.batch_size, int) or self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1; got {self.batch_size!r}")
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be positive; got {self.lr0!r}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be non-negative; got {self.lam!r}")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ConfigError("betas must lie in [0, 1)")
        if self.eps <= 0:
            raise ConfigError(f"eps must be positive; got {self.eps!r}")
        if not isinstance(self.eval_every, int) or self.eval_every < 0:
            raise ConfigError(f"eval_every must be >= 0; got {self.eval_every!r}")


@dataclass
class StepRecord:
    step: int
    lr: float
    pix: float
    sam: float
    total: float

    def to_line(self):
        return (f"step={self.step} lr={self.lr:.8f} pix={self.pix:.6f} "
                f"sam={self.sam:.6f} total={self.total:.6f}")


@dataclass
class TrainHistory:
    steps: list = field(default_factory=list)     # StepRecord
    evals: list = field(default_factory=list)     # (step, MetricsReport)

    def to_lines(self):
        by_step = {}
        for rec in self.steps:
            by_step.setdefault(rec.step, []).append(rec.to_line())
        for step, report in self.evals:
            by_step.setdefault(step, []).append(
                f"step={step} psnr={report.psnr:.4f} ssim={report.ssim:.4f} "
                f"sam_deg={report.sam_deg:.4f} cc={report.cc:.4f} "
                f"ergas={report.ergas:.4f}")
        lines = []
        for step in sorted(by_step):
            lines.extend(by_step[step])
        return lines


def cosine_lr(step, total_steps, lr0):
    """Half-cosine decay from lr0 (step 0) to 0 (step = total_steps)."""
    if not 0 <= step <= total_steps:
        raise ConfigError(f"step {step} outside [0, {total_steps}]")
    value = lr0 * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))
    return max(value, 0.0)


class AdamState:
    """First/second moment buffers keyed by parameter name."""

    def __init__(self, params):
        self.t = 0
        self.m = {p.name: np.zeros_like(p.data) for p in params}
        self.v = {p.name: np.zeros_like(p.data) for p in params}


def adam_step(params, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place. Parameters whose grad is
    None are treated as having a zero gradient."""
    state.t += 1
    t = state.t
    correct1 = 1.0 - beta1 ** t
    correct2 = 1.0 - beta2 ** t
    for p in params:
        m = state.m[p.name]
        v = state.v[p.name]
        g = p.grad
        m *= beta1
        v *= beta2
        if g is not None:
            m += (1.0 - beta1) * g
            v += (1.0 - beta2) * (g * g)
        p.data -= lr * (m / correct1) / (np.sqrt(v / correct2) + eps)


def predict(model, lr_cube):
    """Upsample one cube through the network, clamped to [0, 1]."""
    batch = lr_cube.values.astype(np.float64)[None, ...]
    with no_grad():
        out = sdanet_forward(Tensor(batch), model)
    values = np.clip(out.data[0], 0.0, 1.0).astype(np.float32)
    return HsiCube(values=values, name=lr_cube.name)


def evaluate_pairs(model, pairs):
    """Mean metric report over (lr, hr) pairs."""
    if not pairs:
        raise ConfigError("evaluation needs at least one pair")
    scale = model.config.scale
    reports = [evaluate_all(predict(model, p.lr), p.hr, scale) for p in pairs]
    return _mean_report(reports, scale)


def bicubic_baseline(pairs, scale):
    """Metric report for plain bicubic upsampling of the same pairs."""
    if not pairs:
        raise ConfigError("evaluation needs at least one pair")
    reports = []
    for p in pairs:
        up = bicubic_resize(p.lr, p.hr.height, p.hr.width)
        reports.append(evaluate_all(up, p.hr, scale))
    return _mean_report(reports, scale)


def _mean_report(reports, scale):
    return MetricsReport(
        psnr=float(np.mean([r.psnr for r in reports])),
        ssim=float(np.mean([r.ssim for r in reports])),
        sam_deg=float(np.mean([r.sam_deg for r in reports])),
        cc=float(np.mean([r.cc for r in reports])),
        ergas=float(np.mean([r.ergas for r in reports])),
        scale=scale,
    )


def _batches(n_items, batch_size, total_steps, rng):
    """Yield index batches, reshuffling each pass over the data."""
    produced = 0
    while produced < total_steps:
        order = rng.permutation(n_items)
        for start in range(0, n_items, batch_size):
            if produced == total_steps:
                return
            yield order[start:start + batch_size]
            produced += 1


def train(model, train_pairs, cfg, val_pairs=(), history_path=""):
    """Optimize the model; returns the populated TrainHistory.

    Raises TrainingDivergedError the moment the loss leaves the finite
    range. The same seed, data, and config reproduce the run bitwise.
    """
    if not train_pairs:
        raise ConfigError("training needs at least one patch pair")
    for p in train_pairs:
        if p.lr.bands != model.config.bands:
            raise ConfigError(f"pair has {p.lr.bands} bands; model expects "
                              f"{model.config.bands}")

    rng = np.random.default_rng(cfg.seed)
    state = AdamState(model.parameters())
    history = TrainHistory()
    sink = open(history_path, "w") if history_path else None
    try:
        step = 0
        for batch_idx in _batches(len(train_pairs), cfg.batch_size,
                                  cfg.total_steps, rng):
            step += 1
            lr_now = cosine_lr(step - 1, cfg.total_steps, cfg.lr0)
            lr_in = np.stack([train_pairs[i].lr.values for i in batch_idx]) \
                .astype(np.float64)
            hr_gt = np.stack([train_pairs[i].hr.values for i in batch_idx]) \
                .astype(np.float64)
            pred = sdanet_forward(Tensor(lr_in), model)
            loss = total_loss(pred, Tensor(hr_gt), cfg.lam)
            total = loss.total.item()
            if not math.isfinite(total):
                raise TrainingDivergedError(
                    f"loss became non-finite at step {step}")
            model.zero_grads()
            backward(loss.total)
            adam_step(model.parameters(), state, lr_now,
                      cfg.beta1, cfg.beta2, cfg.eps)
            record = StepRecord(step=step, lr=lr_now, pix=loss.pix.item(),
                                sam=loss.sam.item(), total=total)
            history.steps.append(record)
            if sink:
                sink.write(record.to_line() + "\n")
            if cfg.eval_every > 0 and val_pairs and step % cfg.eval_every == 0:
                report = evaluate_pairs(model, val_pairs)
                history.evals.append((step, report))
                if sink:
                    sink.write(
                        f"step={step} psnr={report.psnr:.4f} "
                        f"ssim={report.ssim:.4f} sam_deg={report.sam_deg:.4f} "
                        f"cc={report.cc:.4f} ergas={report.ergas:.4f}\n")
    finally:
        if sink:
            sink.close()
    if cfg.checkpoint:
        save_checkpoint(model, cfg.checkpoint)
    return history


@dataclass
class AblationRow:
    variant: str
    param_count: int
    final_total: float
    report: MetricsReport


def run_ablation(model_cfg, train_cfg, train_pairs, val_pairs, variants=None):
    """Train each architecture variant from the same seed and data order,
    then evaluate on the held-out pairs."""
    from .model import VARIANTS
    rows = []
    for variant in variants or VARIANTS:
        model = init_params(model_cfg, variant)
        cfg = replace(train_cfg, checkpoint="")
        history = train(model, train_pairs, cfg, val_pairs=())
        report = evaluate_pairs(model, val_pairs)
        rows.append(AblationRow(variant=variant,
                                param_count=count_params(model),
                                final_total=history.steps[-1].total,
                                report=report))
    return rows


@dataclass
class SweepRow:
    lam: float
    final_pix: float
    final_sam: float
    final_total: float
    report: MetricsReport


def lambda_sweep(model_cfg, train_cfg, lambdas, train_pairs, val_pairs):
    """Train the full model once per lambda; report the loss mix and
    held-out metrics for each."""
    if not lambdas:
        raise ConfigError("sweep needs at least one lambda")
    rows = []
    for lam in lambdas:
        if lam < 0:
            raise ConfigError(f"lambda must be non-negative; got {lam}")
        model = init_params(model_cfg, "full")
        cfg = replace(train_cfg, lam=float(lam), checkpoint="")
        history = train(model, train_pairs, cfg, val_pairs=())
        last = history.steps[-1]
        report = evaluate_pairs(model, val_pairs)
        rows.append(SweepRow(lam=float(lam), final_pix=last.pix,
                             final_sam=last.sam, final_total=last.total,
                             report=report))
    return rows
