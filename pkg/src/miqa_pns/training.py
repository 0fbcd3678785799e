"""Mini-batch training of E, E^c and F with early stopping on validation L_pred."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, Tensor
from .errors import ConfigError, NonFiniteLossError
from .metrics import pns_diagnostics
from .nn import Adam, MlpSpec, ModelTriple, bind_parameters, forward_mlp, init_triple
from .objective import MODES, QualityLabel, task_loss

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    mode: str = "miqa-pns"
    lam: float = 1.0
    lr: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 15
    seed: int = 0
    extractor_hidden: tuple[int, ...] = (128,)
    feature_dim: int = 64
    predictor_hidden: tuple[int, ...] = (256, 64)

    def __post_init__(self):
        self.extractor_hidden = tuple(int(h) for h in self.extractor_hidden)
        self.predictor_hidden = tuple(int(h) for h in self.predictor_hidden)
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be >= 1")

    def specs(self, input_dim: int) -> tuple[MlpSpec, MlpSpec]:
        return (
            MlpSpec(input_dim, self.extractor_hidden, self.feature_dim),
            MlpSpec(self.feature_dim, self.predictor_hidden, 2),
        )


class EarlyStopping:
    """Stops once the monitored value has not strictly improved for ``patience`` epochs."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.last_epoch = 0

    def update(self, epoch: int, value: float) -> bool:
        """Record ``value`` for ``epoch``; return True if it is a new best."""
        self.last_epoch = epoch
        if value < self.best:
            self.best = value
            self.best_epoch = epoch
            return True
        return False

    @property
    def should_stop(self) -> bool:
        return self.last_epoch - self.best_epoch >= self.patience


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_pns: list[float | None] = field(default_factory=list)
    val_mono: list[float | None] = field(default_factory=list)
    init_val_loss: float = math.nan
    init_pns: float | None = None
    init_mono: float | None = None
    best_epoch: int = 0
    epochs_trained: int = 0

    @property
    def best_pns(self) -> float | None:
        return self.val_pns[self.best_epoch - 1] if self.best_epoch else None

    @property
    def best_mono(self) -> float | None:
        return self.val_mono[self.best_epoch - 1] if self.best_epoch else None


@dataclass
class TrainResult:
    model: ModelTriple
    history: TrainHistory
    initial_model: ModelTriple


def prediction_loss(model: ModelTriple, x: np.ndarray, y: np.ndarray) -> float:
    """Mean cross-entropy of F(E(x)), computed without a tape."""
    logits = model.logits(x)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(y)), y].mean())


def _val_diagnostics(model: ModelTriple, x, y) -> tuple[float | None, float | None]:
    if not np.any(y == QualityLabel.GOOD):
        return None, None
    return pns_diagnostics(model, x, y)


def train_step(model: ModelTriple, xb: np.ndarray, yb: np.ndarray, config: TrainConfig):
    """One forward/backward pass; returns the loss breakdown and one gradient per parameter."""
    with Tape() as tape:
        x = Tensor(xb, requires_grad=False)
        p_e = bind_parameters(model.extractor)
        p_f = bind_parameters(model.predictor)
        logits = forward_mlp(model.predictor, forward_mlp(model.extractor, x, p_e), p_f)
        p_c = []
        logits_c = None
        if config.mode == "miqa-pns":
            p_c = bind_parameters(model.complement_extractor)
            logits_c = forward_mlp(model.predictor, forward_mlp(model.complement_extractor, x, p_c), p_f)
        loss = task_loss(logits, logits_c, yb, config.lam, config.mode)
        if not math.isfinite(loss.total):
            return loss, None
        tape.backward(loss.root)

    def grads(leaves, net):
        if not leaves:  # E^c untouched in baseline mode
            return [np.zeros_like(p) for p in net.parameters()]
        return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in leaves]

    g = grads(p_e, model.extractor) + grads(p_c, model.complement_extractor) + grads(p_f, model.predictor)
    return loss, g


def train(config: TrainConfig, train_set, val_set, model: ModelTriple | None = None) -> TrainResult:
    """Train per ``config`` and return the weights of the best validation epoch.

    ``train_set`` and ``val_set`` are ``(x, y)`` pairs with x of shape
    (N, input_dim) and integer labels (0 Good, 1 Deficient).
    """
    x_tr, y_tr = np.asarray(train_set[0], dtype=np.float64), np.asarray(train_set[1], dtype=np.int64)
    x_va, y_va = np.asarray(val_set[0], dtype=np.float64), np.asarray(val_set[1], dtype=np.int64)
    if len(x_tr) == 0 or len(x_va) == 0:
        raise ValueError("train and validation sets must be non-empty")
    if len(x_tr) != len(y_tr) or len(x_va) != len(y_va):
        raise ValueError("features and labels differ in length")

    s_init, s_shuffle = np.random.SeedSequence(config.seed).spawn(2)
    if model is None:
        model = init_triple(*config.specs(x_tr.shape[1]), s_init)
    if model.complement_extractor is None:
        raise ValueError("training needs a complement extractor")
    initial = model.copy()
    rng = np.random.default_rng(s_shuffle)
    adam = Adam(lr=config.lr)
    params = model.parameters()

    history = TrainHistory()
    history.init_val_loss = prediction_loss(model, x_va, y_va)
    if not math.isfinite(history.init_val_loss):
        raise NonFiniteLossError(0, "validation", {"val_pred": history.init_val_loss})
    history.init_pns, history.init_mono = _val_diagnostics(model, x_va, y_va)
    stopper = EarlyStopping(config.patience)
    best = model.copy()

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(x_tr))
        total, seen = 0.0, 0
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            idx = order[start : start + config.batch_size]
            loss, grads = train_step(model, x_tr[idx], y_tr[idx], config)
            if grads is None:
                raise NonFiniteLossError(epoch, b, loss.as_dict())
            adam.step(params, grads)
            total += loss.total * len(idx)
            seen += len(idx)

        val = prediction_loss(model, x_va, y_va)
        if not math.isfinite(val):
            raise NonFiniteLossError(epoch, "validation", {"val_pred": val})
        pns, mono = _val_diagnostics(model, x_va, y_va)
        history.train_loss.append(total / seen)
        history.val_loss.append(val)
        history.val_pns.append(pns)
        history.val_mono.append(mono)
        history.epochs_trained = epoch
        if stopper.update(epoch, val):
            best = model.copy()
        log.debug("epoch %d train %.5f val %.5f", epoch, total / seen, val)
        if stopper.should_stop:
            break

    history.best_epoch = stopper.best_epoch
    return TrainResult(best, history, initial)
