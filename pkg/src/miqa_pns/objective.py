"""Prediction, complement and monotonicity losses, and the PNS diagnostics."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError

MODES = ("baseline", "miqa-pns")


class QualityLabel(enum.IntEnum):
    GOOD = 0
    DEFICIENT = 1


def label_transform(label):
    """Map a label to the other class. Works on scalars and integer arrays."""
    if isinstance(label, (np.ndarray, list, tuple)):
        return 1 - np.asarray(label, dtype=np.int64)
    return QualityLabel(1 - int(label))


def indicator(label):
    """1.0 for Good, 0.0 for Deficient; elementwise on arrays."""
    if isinstance(label, (np.ndarray, list, tuple)):
        return (np.asarray(label) == QualityLabel.GOOD).astype(np.float64)
    return 1.0 if int(label) == QualityLabel.GOOD else 0.0


def _check_labels(logits: Tensor, labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size == 0:
        raise ShapeError("empty batch")
    if logits.data.ndim != 2 or logits.shape != (labels.size, 2):
        raise ShapeError(f"logits shape {logits.shape} does not match {labels.size} labels x 2 classes")
    if labels.min() < 0 or labels.max() > 1:
        raise ValueError("labels must be 0 (Good) or 1 (Deficient)")
    return labels


def per_sample_cross_entropy(logits: Tensor, labels) -> Tensor:
    labels = _check_labels(logits, labels)
    return ad.scalar_mul(ad.select_index(ad.log_softmax(logits), labels), -1.0)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Batch-mean negative log-likelihood of ``labels`` under softmax(logits)."""
    return ad.mean(per_sample_cross_entropy(logits, labels))


@dataclass
class LossBreakdown:
    pred: float
    compl: float
    mono: float
    total: float
    root: Tensor

    def as_dict(self) -> dict[str, float]:
        return {"pred": self.pred, "compl": self.compl, "mono": self.mono, "total": self.total}


def task_loss(logits_pred: Tensor, logits_compl: Tensor | None, labels, lam: float, mode: str) -> LossBreakdown:
    """L_task = L_pred + L_compl + L_mono, averaged over the batch.

    Per sample: pred_i = CE(y_i), compl_i = I(y_i) CE_c(T(y_i)),
    mono_i = lam * I(y_i) * pred_i * compl_i. In baseline mode the
    complement branch is not evaluated at all.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if lam < 0 or not np.isfinite(lam):
        raise ValueError(f"lambda must be a finite non-negative number, got {lam}")
    labels = _check_labels(logits_pred, labels)
    pred_i = per_sample_cross_entropy(logits_pred, labels)
    pred = ad.mean(pred_i)
    if mode == "baseline":
        value = pred.item()
        return LossBreakdown(value, 0.0, 0.0, value, pred)

    if logits_compl is None:
        raise ValueError("miqa-pns mode needs complement logits")
    _check_labels(logits_compl, labels)
    gate = Tensor(indicator(labels), requires_grad=False)
    compl_i = ad.mul(gate, per_sample_cross_entropy(logits_compl, label_transform(labels)))
    # compl_i already carries the indicator; I*I == I for 0/1 gates
    mono_i = ad.scalar_mul(ad.mul(pred_i, compl_i), lam)
    compl = ad.mean(compl_i)
    mono = ad.mean(mono_i)
    total = ad.add(ad.add(pred, compl), mono)
    return LossBreakdown(pred.item(), compl.item(), mono.item(), total.item(), total)


def softmax_good(logits: np.ndarray) -> np.ndarray:
    """Probability of the Good class under softmax over two logits."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e[:, QualityLabel.GOOD] / e.sum(axis=1)


def _check_probs(p_h, p_hbar) -> tuple[np.ndarray, np.ndarray]:
    p_h = np.asarray(p_h, dtype=np.float64).reshape(-1)
    p_hbar = np.asarray(p_hbar, dtype=np.float64).reshape(-1)
    if p_h.size == 0 or p_hbar.size == 0:
        raise ValueError("no Good samples to estimate PNS over")
    if p_h.shape != p_hbar.shape:
        raise ShapeError(f"probability arrays differ in length: {p_h.size} vs {p_hbar.size}")
    for p in (p_h, p_hbar):
        if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must lie in [0, 1]")
    return p_h, p_hbar


def pns_estimate(p_good_h, p_good_hbar) -> float:
    """Empirical PNS proxy: mean P(Good | h) minus mean P(Good | h-bar)."""
    p_h, p_hbar = _check_probs(p_good_h, p_good_hbar)
    return float(p_h.mean() - p_hbar.mean())


def monotonicity_violation(p_good_h, p_good_hbar) -> float:
    """Mean of (1 - P(Good | h)) * P(Good | h-bar); zero when monotonicity holds."""
    p_h, p_hbar = _check_probs(p_good_h, p_good_hbar)
    return float(np.mean((1.0 - p_h) * p_hbar))
