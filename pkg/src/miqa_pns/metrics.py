"""Evaluation metrics with Good as the positive class."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .nn import ModelTriple
from .objective import QualityLabel, monotonicity_violation, pns_estimate, softmax_good

REPORT_FORMAT_VERSION = 1


def predict_labels(logits: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, so exact ties go to Good (index 0)
    return np.argmax(np.asarray(logits), axis=1).astype(np.int64)


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int

    @classmethod
    def from_labels(cls, y_true, y_pred) -> Confusion:
        t = np.asarray(y_true) == QualityLabel.GOOD
        p = np.asarray(y_pred) == QualityLabel.GOOD
        if t.shape != p.shape:
            raise ValueError(f"label arrays differ in shape: {t.shape} vs {p.shape}")
        return cls(int(np.sum(t & p)), int(np.sum(~t & p)), int(np.sum(t & ~p)), int(np.sum(~t & ~p)))


def precision_recall_f1(c: Confusion) -> tuple[float, float, float]:
    """Zero wherever the denominator is zero."""
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    f1 = f1_score(precision, recall)
    return precision, recall, f1


def f1_score(precision: float, recall: float) -> float:
    return 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


def deficient_accuracy(c: Confusion) -> float | None:
    """Fraction of truly Deficient samples predicted Deficient; None if there are none."""
    n = c.tn + c.fp
    return c.tn / n if n else None


@dataclass
class MetricsReport:
    precision: float
    recall: float
    f1: float
    deficient_accuracy: float | None
    pns_proxy: float | None
    mono_violation: float | None
    pns_available: bool
    pns_note: str
    n_samples: int
    confusion: dict[str, int]
    seed: int | None = None
    mode: str | None = None
    scenario: str | None = None
    epochs_trained: int | None = None
    best_epoch: int | None = None
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_document(self, config: dict | None = None) -> str:
        doc = {"format_version": REPORT_FORMAT_VERSION, "metrics": self.to_dict()}
        if config is not None:
            doc["config"] = config
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def pns_diagnostics(model: ModelTriple, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """PNS proxy and monotonicity violation over the Good-labeled rows of ``x``."""
    good = np.asarray(y) == QualityLabel.GOOD
    xg = x[good]
    if xg.shape[0] == 0:
        raise ValueError("no Good samples to estimate PNS over")
    p_h = softmax_good(model.logits(xg))
    p_hbar = softmax_good(model.complement_logits(xg))
    return pns_estimate(p_h, p_hbar), monotonicity_violation(p_h, p_hbar)


def evaluate(model: ModelTriple, x: np.ndarray, y: np.ndarray) -> MetricsReport:
    """Score argmax predictions of F(E(x)); E^c is only used for the PNS fields."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.shape[0] == 0:
        raise ValueError("empty test set")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"{x.shape[0]} samples but {y.shape[0]} labels")
    pred = predict_labels(model.logits(x))
    c = Confusion.from_labels(y, pred)
    precision, recall, f1 = precision_recall_f1(c)

    pns = mono = None
    if model.complement_extractor is None:
        note = "inference-only model: complement extractor discarded"
    elif not np.any(y == QualityLabel.GOOD):
        note = "no Good samples in evaluation set"
    else:
        pns, mono = pns_diagnostics(model, x, y)
        note = "empirical PNS proxy over Good samples"
    return MetricsReport(
        precision=precision,
        recall=recall,
        f1=f1,
        deficient_accuracy=deficient_accuracy(c),
        pns_proxy=pns,
        mono_violation=mono,
        pns_available=pns is not None,
        pns_note=note,
        n_samples=int(x.shape[0]),
        confusion=asdict(c),
    )
