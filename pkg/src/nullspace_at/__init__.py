"""Adversarial training constrained to the null space of a reference model's
last linear layer: projector construction, the null-projected sample
generator, the projected last-layer trainer, and a desk-scale experiment
harness."""

from .attacks import AttackSpec, npda_generate, npda_penultimate_direction, pgd_attack
from .losses import (LossValue, cross_entropy, error_rate, kl_divergence,
                     lse_loss, madry_inner_objective, softmax, trades_loss)
from .model import (ForwardTrace, LayerParams, NetworkModel, backward_params,
                    backward_to_input, forward, init_model, load_model,
                    penultimate_grad_of_loss, save_model)
from .numerics import (Matrix, NullProjector, SvdResult, matmul,
                       null_projector_closed_form, null_projector_svd,
                       rank_from_singular_values, seeded_gaussian, svd)
from .trainers import (TrainReport, TrainSpec, freeze_backbone_option,
                       sgd_step, train, train_npda, train_npgd, train_pgd_at,
                       train_standard, train_trades)

__version__ = "0.1.0"
