"""The approximated-orthogonal-projection unit and its truncated-gradient update.

The unit keeps a single trackable weight matrix ``w`` of shape (d+h, o) over
augmented features. Training never differentiates through ``w`` directly:
the loss is expressed through the dual image ``D = x_tilde @ x_tilde.T @ w``,
the gradient is taken with respect to ``D``, and that gradient is applied to
``w``. On column-full-rank batches this equals the Fisher-preconditioned
(natural) gradient of the plain squared error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .augment import AugmentedBatch, Augmenter
from .errors import DivergenceError, InvalidInputError


def forward(x_tilde, w) -> np.ndarray:
    """Model output ``x_tilde.T @ w`` of shape (b, o)."""
    xt = linalg.as_matrix(x_tilde, "x_tilde")
    wm = linalg.as_matrix(w, "w")
    if xt.shape[0] != wm.shape[0]:
        raise InvalidInputError(
            f"x_tilde has {xt.shape[0]} feature rows but w has {wm.shape[0]}"
        )
    return xt.T @ wm


def dual(x_tilde, w) -> np.ndarray:
    """Dual image ``x_tilde @ (x_tilde.T @ w)`` of shape (d+h, o).

    Computed in that association order; the (d+h)-square Gram matrix is never
    materialized.
    """
    xt = linalg.as_matrix(x_tilde, "x_tilde")
    return xt @ forward(xt, w)


def reconstruct(x_tilde, dual_matrix) -> np.ndarray:
    """Recover batch outputs from a dual image: ``pinv(x.T x) @ (x.T @ D)``.

    On a column-full-rank, well-conditioned batch this reproduces
    :func:`forward` to working precision; near-singular batches amplify
    round-off through the reciprocal singular values.
    """
    xt = linalg.as_matrix(x_tilde, "x_tilde")
    dm = linalg.as_matrix(dual_matrix, "dual")
    if dm.shape[0] != xt.shape[0]:
        raise InvalidInputError(
            f"dual has {dm.shape[0]} rows, x_tilde has {xt.shape[0]} feature rows"
        )
    gram = linalg.column_gram(xt)
    return linalg.pinv(gram) @ (xt.T @ dm)


def loss_value(y, recon) -> float:
    """Mean over the batch of squared reconstruction error."""
    ym = linalg.as_matrix(y, "y")
    rm = np.asarray(recon, dtype=np.float64)
    if ym.shape != rm.shape:
        raise InvalidInputError(f"shape mismatch: y {ym.shape} vs recon {rm.shape}")
    b = ym.shape[0]
    # overflow to inf is meaningful here: it is what divergence detection sees
    with np.errstate(over="ignore"):
        return float(np.sum((ym - rm) ** 2) / b)


def truncated_gradient(x_tilde, y, dual_matrix) -> np.ndarray:
    """Gradient of the reconstruction loss with respect to the dual image.

    Equals ``-(2/b) * x_tilde @ pinv(x.T x) @ (y - reconstruct)``. This is the
    only gradient the unit ever computes; backpropagation stops at the dual.
    """
    xt = linalg.as_matrix(x_tilde, "x_tilde")
    ym = linalg.as_matrix(y, "y")
    dm = linalg.as_matrix(dual_matrix, "dual")
    b = xt.shape[1]
    gram_inv = linalg.pinv(linalg.column_gram(xt))
    resid = ym - gram_inv @ (xt.T @ dm)
    return -(2.0 / b) * xt @ (gram_inv @ resid)


def natural_gradient_reference(x_tilde, y, w) -> np.ndarray:
    """Fisher-preconditioned plain gradient, as an independent oracle.

    Preconditions ``-(2/b) x (y - x.T w)`` with the pseudo-inverse of the
    feature Gram ``x x.T`` (the Fisher information of the unit-covariance
    Gaussian output). Materializes the (d+h)-square Gram, so intended for
    small verification instances rather than training.
    """
    xt = linalg.as_matrix(x_tilde, "x_tilde")
    ym = linalg.as_matrix(y, "y")
    grad = -(2.0 / xt.shape[1]) * xt @ (ym - forward(xt, w))
    return linalg.pinv(linalg.row_gram(xt)) @ grad


@dataclass(frozen=True)
class DualState:
    """Dual image together with the batch it was computed from."""

    matrix: np.ndarray
    x_tilde: np.ndarray


@dataclass(frozen=True)
class StepReport:
    """Pre-step loss, batch rank ratio and gradient norm for one update."""

    loss: float
    rank_ratio: float
    grad_norm: float


class AopuModel:
    """Trackable parameter plus augmentation handle and update hyperparameters.

    ``step`` mutates the weights and must be externally serialized
    (single-writer); ``forward``/``dual`` on a fixed weight snapshot are safe
    to call concurrently.
    """

    kind = "aopu"

    def __init__(self, augmenter: Augmenter, out_dim: int = 1, lr: float = 1.0):
        if lr <= 0:
            raise InvalidInputError(f"learning rate must be positive, got {lr}")
        if out_dim < 1:
            raise InvalidInputError(f"output width must be >= 1, got {out_dim}")
        self.augmenter = augmenter
        self.lr = float(lr)
        # zero init: the first update is a pure data-driven projection and no
        # extra randomness source is introduced
        self.w_tilde = np.zeros((augmenter.output_dim, out_dim))

    @property
    def out_dim(self) -> int:
        return self.w_tilde.shape[1]

    def forward(self, x_tilde) -> np.ndarray:
        return forward(x_tilde, self.w_tilde)

    def dual(self, x_tilde) -> DualState:
        xt = linalg.as_matrix(x_tilde, "x_tilde")
        return DualState(matrix=dual(xt, self.w_tilde), x_tilde=xt)

    def step(self, batch: AugmentedBatch) -> StepReport:
        """Apply one truncated-gradient update ``w <- w - lr * grad``.

        Non-finite loss or gradient aborts the step before any weight change
        and surfaces a :class:`DivergenceError` carrying the batch rank ratio.
        """
        xt, y = batch.x_tilde, batch.y
        d = dual(xt, self.w_tilde)
        pre_loss = loss_value(y, reconstruct(xt, d))
        grad = truncated_gradient(xt, y, d)
        if not np.isfinite(pre_loss) or not np.all(np.isfinite(grad)):
            raise DivergenceError(
                f"non-finite update on batch with rank ratio {batch.rr:.4f}",
                rank_ratio=batch.rr,
            )
        self.w_tilde = self.w_tilde - self.lr * grad
        return StepReport(
            loss=pre_loss,
            rank_ratio=batch.rr,
            grad_norm=float(np.linalg.norm(grad)),
        )
