"""Training objectives with analytic gradients.

The alignment loss works on unit-norm projections: pairwise logits scaled by
exp(tau) and shifted by a learnable bias, a per-pair logistic objective over
all N^2 (image, table) combinations with positives on the diagonal, and a
weighted Gram-preservation penalty against the untouched input embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadLabel, NotNormalized, ShapeMismatch
from .numerics import log_sigmoid, log_softmax, row_norms, sigmoid, softmax, softplus

TAU_CLAMP = 10.0
UNIT_NORM_TOL = 1e-6


@dataclass
class ScalarsTauB:
    """Learnable temperature and bias of the pairwise logits."""
    tau: float = np.log(10.0)
    b: float = -10.0

    def temperature(self) -> float:
        return float(np.exp(np.clip(self.tau, -TAU_CLAMP, TAU_CLAMP)))


def pair_labels(n: int) -> np.ndarray:
    """+1 on the diagonal (matched pairs), -1 everywhere else."""
    return 2.0 * np.eye(n) - 1.0


def _check_unit_rows(m: np.ndarray, what: str) -> None:
    dev = np.abs(row_norms(m) - 1.0)
    if dev.size and dev.max() > UNIT_NORM_TOL:
        raise NotNormalized(f"{what} rows deviate from unit norm by {dev.max():.2e}")


def scl_logits(z_img: np.ndarray, z_tab: np.ndarray, s: ScalarsTauB) -> np.ndarray:
    if z_img.shape[1] != z_tab.shape[1]:
        raise ShapeMismatch("projection widths differ")
    return (z_img @ z_tab.T) * s.temperature() + s.b


def sigmoid_contrastive_loss(logits: np.ndarray,
                             labels: np.ndarray | None = None) -> float:
    """Mean over all N^2 pairs of -log sigmoid(label * logit)."""
    logits = np.asarray(logits, dtype=np.float64)
    n, m = logits.shape
    if n != m:
        raise ShapeMismatch("pairwise logits must be square")
    if labels is None:
        labels = pair_labels(n)
    return float(-np.sum(log_sigmoid(labels * logits)) / (n * n))


def scl_loss_and_grads(z_img: np.ndarray, z_tab: np.ndarray, s: ScalarsTauB):
    """Contrastive loss plus gradients wrt both projections, tau and b."""
    n = z_img.shape[0]
    labels = pair_labels(n)
    dots = z_img @ z_tab.T
    t = s.temperature()
    logits = dots * t + s.b
    loss = float(-np.sum(log_sigmoid(labels * logits)) / (n * n))
    # d/dl of -log sigmoid(w*l) is -w * sigmoid(-w*l)
    dlogits = -labels * sigmoid(-labels * logits) / (n * n)
    d_tau = float(np.sum(dlogits * dots) * t) if abs(s.tau) < TAU_CLAMP else 0.0
    d_b = float(np.sum(dlogits))
    d_zimg = (dlogits * t) @ z_tab
    d_ztab = (dlogits * t).T @ z_img
    return loss, d_zimg, d_ztab, d_tau, d_b


def similarity_weights(gram_orig: np.ndarray) -> np.ndarray:
    return ((1.0 + gram_orig) / 2.0) ** 2


def similarity_regularizer(img_orig: np.ndarray, z_img: np.ndarray) -> float:
    """Weighted squared drift of the Gram matrix from the original one.

    Pairs already similar in the original space carry the most weight;
    antipodal pairs carry none. Both inputs must be unit-norm row-wise.
    """
    loss, _ = regularizer_and_grad(img_orig, z_img)
    return loss


def regularizer_and_grad(img_orig: np.ndarray, z_img: np.ndarray):
    img_orig = np.asarray(img_orig, dtype=np.float64)
    z_img = np.asarray(z_img, dtype=np.float64)
    if img_orig.shape[0] != z_img.shape[0]:
        raise ShapeMismatch("row counts differ")
    _check_unit_rows(img_orig, "original embedding")
    _check_unit_rows(z_img, "projected embedding")
    n = z_img.shape[0]
    s_orig = img_orig @ img_orig.T
    s_new = z_img @ z_img.T
    w = similarity_weights(s_orig)
    diff = s_orig - s_new
    loss = float(np.sum(w * diff * diff) / (n * n))
    d_snew = -2.0 * w * diff / (n * n)
    d_z = (d_snew + d_snew.T) @ z_img
    return loss, d_z


def botaclip_loss(img_orig: np.ndarray, z_img: np.ndarray, z_tab: np.ndarray,
                  s: ScalarsTauB, lam: float) -> float:
    """Contrastive term plus lam times the Gram-preservation penalty."""
    if lam < 0:
        raise ValueError("lam must be >= 0")
    scl = sigmoid_contrastive_loss(scl_logits(z_img, z_tab, s))
    if lam == 0:
        return scl
    return scl + lam * similarity_regularizer(img_orig, z_img)


def cross_entropy(logits: np.ndarray, label: int) -> float:
    """Softmax cross-entropy of a single logit vector."""
    logits = np.asarray(logits, dtype=np.float64).reshape(-1)
    if not 0 <= label < logits.size:
        raise BadLabel(f"label {label} outside [0, {logits.size})")
    return float(-log_softmax(logits)[label])


def cross_entropy_batch(logits: np.ndarray, labels: np.ndarray):
    """Mean softmax cross-entropy over a batch; returns (loss, dlogits)."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise BadLabel("labels outside logit range")
    logp = log_softmax(logits, axis=1)
    loss = float(-np.mean(logp[np.arange(n), labels]))
    dlogits = softmax(logits, axis=1)
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n


def binary_cross_entropy_with_logits(logits: np.ndarray, targets: np.ndarray):
    """Element-mean stable BCE over a logit matrix; returns (loss, dlogits)."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if logits.shape != targets.shape:
        raise ShapeMismatch("logits and targets differ in shape")
    per = softplus(logits) - logits * targets
    loss = float(np.mean(per))
    dlogits = (sigmoid(logits) - targets) / logits.size
    return loss, dlogits


def botasp_loss(logits: np.ndarray, targets: np.ndarray, z_orig: np.ndarray,
                z_new: np.ndarray, lam: float = 100.0) -> float:
    """Multi-label BCE over species plus the weighted Gram drift of the
    projection, both rows unit-norm."""
    bce, _ = binary_cross_entropy_with_logits(logits, targets)
    if lam == 0:
        return bce
    reg, _ = regularizer_and_grad(z_orig, z_new)
    return bce + lam * reg


def botasp_loss_and_grads(logits, targets, z_orig, z_new, lam=100.0):
    """Returns (loss, dlogits, dz_new, bce, reg)."""
    bce, dlogits = binary_cross_entropy_with_logits(logits, targets)
    if lam == 0:
        # still report the drift term for logging
        reg, _ = regularizer_and_grad(z_orig, z_new)
        return bce, dlogits, np.zeros_like(np.asarray(z_new, float)), bce, reg
    reg, dz = regularizer_and_grad(z_orig, z_new)
    return bce + lam * reg, dlogits, lam * dz, bce, reg
