"""MLP networks, the extractor/complement/predictor triple, and Adam."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths of a ReLU MLP with an identity output layer."""

    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        for d in self.dims:
            if int(d) != d or d < 1:
                raise ConfigError(f"MLP dimensions must be positive integers, got {self.dims}")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.output_dim)

    @property
    def n_layers(self) -> int:
        return len(self.hidden_dims) + 1


class MLP:
    """Weights are stored (fan_in, fan_out) so a forward layer is ``x @ W + b``."""

    def __init__(self, spec: MlpSpec, weights: list[np.ndarray], biases: list[np.ndarray]):
        if len(weights) != spec.n_layers or len(biases) != spec.n_layers:
            raise ShapeError(f"expected {spec.n_layers} layers, got {len(weights)} weights / {len(biases)} biases")
        for i, (w, b) in enumerate(zip(weights, biases)):
            want = (spec.dims[i], spec.dims[i + 1])
            if w.shape != want or b.shape != (want[1],):
                raise ShapeError(f"layer {i}: weight {w.shape} / bias {b.shape}, expected {want} / ({want[1]},)")
        self.spec = spec
        self.weights = [np.ascontiguousarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.ascontiguousarray(b, dtype=np.float64) for b in biases]

    def parameters(self) -> list[np.ndarray]:
        """Parameter arrays in layer order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> MLP:
        return MLP(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Tape-free forward pass for inference."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.spec.input_dim:
            raise ShapeError(f"MLP expects input width {self.spec.input_dim}, got shape {x.shape}")
        last = self.spec.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = x @ w + b
            if i < last:
                x = np.maximum(x, 0.0)
        return x


def init_model(spec: MlpSpec, seed) -> MLP:
    """Kaiming-uniform weights with bound sqrt(6 / fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.dims[:-1], spec.dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLP(spec, weights, biases)


def bind_parameters(model: MLP) -> list[Tensor]:
    """Leaf tensors sharing storage with the model's parameters."""
    return [Tensor(p) for p in model.parameters()]


def forward_mlp(model: MLP, batch: Tensor, params: list[Tensor] | None = None) -> Tensor:
    """Recorded forward pass. Pass ``params`` from :func:`bind_parameters` to read their grads later."""
    if batch.data.ndim != 2 or batch.shape[1] != model.spec.input_dim:
        raise ShapeError(f"forward_mlp: batch shape {batch.shape} does not match input_dim {model.spec.input_dim}")
    if params is None:
        params = [Tensor(p, requires_grad=False) for p in model.parameters()]
    h = batch
    last = model.spec.n_layers - 1
    for i in range(model.spec.n_layers):
        h = ad.add(ad.matmul(h, params[2 * i]), params[2 * i + 1])
        if i < last:
            h = ad.relu(h)
    return h


@dataclass
class ModelTriple:
    """Feature extractor E, complement extractor E^c and the shared predictor F.

    ``complement_extractor`` is None for inference-only models.
    """

    extractor: MLP
    complement_extractor: MLP | None
    predictor: MLP

    def __post_init__(self):
        if self.extractor.spec.output_dim != self.predictor.spec.input_dim:
            raise ShapeError(
                f"extractor output {self.extractor.spec.output_dim} != predictor input {self.predictor.spec.input_dim}"
            )
        if self.complement_extractor is not None:
            if self.complement_extractor.spec != self.extractor.spec:
                raise ShapeError("complement extractor must share the extractor architecture")
            if any(p is q for p, q in zip(self.extractor.parameters(), self.complement_extractor.parameters())):
                raise ShapeError("complement extractor must not share parameter storage with the extractor")

    @property
    def networks(self) -> list[MLP]:
        nets = [self.extractor]
        if self.complement_extractor is not None:
            nets.append(self.complement_extractor)
        nets.append(self.predictor)
        return nets

    def parameters(self) -> list[np.ndarray]:
        return [p for net in self.networks for p in net.parameters()]

    def copy(self) -> ModelTriple:
        return copy.deepcopy(self)

    def inference_only(self) -> ModelTriple:
        return ModelTriple(self.extractor.copy(), None, self.predictor.copy())

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.predictor(self.extractor(x))

    def complement_logits(self, x: np.ndarray) -> np.ndarray:
        if self.complement_extractor is None:
            raise ValueError("model has no complement extractor (inference-only)")
        return self.predictor(self.complement_extractor(x))


def init_triple(extractor_spec: MlpSpec, predictor_spec: MlpSpec, seed) -> ModelTriple:
    """E, E^c and F from three independent streams of ``seed``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_e, s_c, s_f = ss.spawn(3)
    return ModelTriple(
        init_model(extractor_spec, s_e),
        init_model(extractor_spec, s_c),
        init_model(predictor_spec, s_f),
    )


@dataclass
class Adam:
    """Bias-corrected Adam; updates parameter arrays in place."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    t: int = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray | None]) -> None:
        if len(grads) != len(params):
            raise ValueError(f"got {len(grads)} gradients for {len(params)} parameters")
        for i, (p, g) in enumerate(zip(params, grads)):
            if g is None:
                raise ValueError(f"missing gradient for parameter {i}")
            if g.shape != p.shape:
                raise ShapeError(f"gradient {i} has shape {g.shape}, parameter has {p.shape}")
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        elif len(self.m) != len(params):
            raise ValueError("parameter list changed between Adam steps")

        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.epsilon)
