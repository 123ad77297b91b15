"""Hyperspectral image super-resolution with dynamic channel-sparse
attention and frequency-enhanced feed-forward blocks, on a small
numpy-based reverse-mode autodiff core."""

from .data import (HsiCube, PatchPair, bicubic_resize, extract_patches,
                   load_cube, load_raw_cube, save_cube, split_train_val,
                   synth_scene)
from .errors import (ConfigError, ContractError, DegenerateRowError,
                     DomainError, EvaluationError, FormatError,
                     LifecycleError, SdanetError, ShapeError,
                     TrainingDivergedError)
from .gradcheck import grad_check, gradient_suite
from .model import (SdanetConfig, SdanetModel, VARIANTS, count_params,
                    init_params, load_checkpoint, save_checkpoint,
                    sdab_forward, sdanet_forward)
from .objective import (LossBreakdown, MetricsReport, evaluate_all, l1_loss,
                        metric_cc, metric_ergas, metric_psnr, metric_sam,
                        metric_ssim, sam_loss, total_loss)
from .tensor import Parameter, Tensor, backward, no_grad
from .trainer import (AdamState, TrainConfig, TrainHistory, adam_step,
                      bicubic_baseline, cosine_lr, evaluate_pairs,
                      lambda_sweep, predict, run_ablation, train)

__version__ = "0.1.0"
