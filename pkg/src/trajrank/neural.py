"""Layers, losses, optimizer, and gradient checking.

Exactly the pieces the package's networks need: linear layers, PReLU with one
learnable slope per layer, an LSTM cell, the reconstruction/adversarial/KL/
classification losses, and Adam. Initialization: uniform fan-in for weights,
PReLU slope 0.25, zero biases except the LSTM forget gate (1.0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DivergenceError

LOG_FLOOR = 1e-12  # clamp for log arguments


class Param(Tensor):
    """A named trainable tensor; its gradient buffer persists across steps."""

    __slots__ = ("name",)

    def __init__(self, values, name: str):
        super().__init__(values, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)


def zero_grads(params) -> None:
    for p in params:
        p.grad = np.zeros_like(p.data)


@dataclass(frozen=True)
class LayerSpec:
    """Shape record for (de)serializing a layer."""

    kind: str  # linear | prelu | lstm-cell
    in_dim: int
    out_dim: int
    init: str = "fan-in"

    def __post_init__(self):
        if self.kind not in ("linear", "prelu", "lstm-cell"):
            raise ValueError(f"unknown layer kind '{self.kind}'")
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError(f"dims must be >= 1, got ({self.in_dim}, {self.out_dim})")


def _fan_in_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    s = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-s, s, size=shape)


class Linear:
    """Affine map x @ W + b."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, name: str):
        self.spec = LayerSpec("linear", in_dim, out_dim)
        self.name = name
        self.w = Param(_fan_in_uniform(rng, (in_dim, out_dim), in_dim), f"{name}.w")
        self.b = Param(np.zeros(out_dim), f"{name}.b")

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.spec.in_dim:
            raise ValueError(
                f"layer {self.name}: input dim {x.shape[-1]} != expected {self.spec.in_dim}"
            )
        return ad.add(ad.matmul(x, self.w), self.b)

    def params(self) -> list[Param]:
        return [self.w, self.b]


class PReLU:
    """PReLU activation with a single learnable slope for the whole layer."""

    def __init__(self, name: str, init_slope: float = 0.25):
        self.spec = LayerSpec("prelu", 1, 1)
        self.name = name
        self.slope = Param(np.array([init_slope]), f"{name}.slope")

    def __call__(self, x: Tensor) -> Tensor:
        return ad.prelu(x, self.slope)

    def params(self) -> list[Param]:
        return [self.slope]


class LSTMCell:
    """Standard 4-gate LSTM cell; forget-gate bias starts at 1."""

    def __init__(self, in_dim: int, hidden_dim: int, rng: np.random.Generator, name: str):
        self.spec = LayerSpec("lstm-cell", in_dim, hidden_dim)
        self.name = name
        h = hidden_dim
        self.wx = Param(_fan_in_uniform(rng, (in_dim, 4 * h), in_dim), f"{name}.wx")
        self.wh = Param(_fan_in_uniform(rng, (h, 4 * h), h), f"{name}.wh")
        bias = np.zeros(4 * h)
        bias[h: 2 * h] = 1.0
        self.b = Param(bias, f"{name}.b")

    def initial_state(self, batch: int) -> tuple[Tensor, Tensor]:
        h = self.spec.out_dim
        return Tensor(np.zeros((batch, h))), Tensor(np.zeros((batch, h)))

    def __call__(self, x: Tensor, state: tuple[Tensor, Tensor]) -> tuple[Tensor, Tensor]:
        if x.shape[-1] != self.spec.in_dim:
            raise ValueError(
                f"layer {self.name}: input dim {x.shape[-1]} != expected {self.spec.in_dim}"
            )
        h_prev, c_prev = state
        hd = self.spec.out_dim
        z = ad.add(ad.add(ad.matmul(x, self.wx), ad.matmul(h_prev, self.wh)), self.b)
        i = ad.sigmoid(z[:, 0 * hd: 1 * hd])
        f = ad.sigmoid(z[:, 1 * hd: 2 * hd])
        g = ad.tanh(z[:, 2 * hd: 3 * hd])
        o = ad.sigmoid(z[:, 3 * hd: 4 * hd])
        c = ad.add(ad.mul(f, c_prev), ad.mul(i, g))
        h = ad.mul(o, ad.tanh(c))
        return h, c

    def params(self) -> list[Param]:
        return [self.wx, self.wh, self.b]


def build_layer(spec: LayerSpec, rng: np.random.Generator, name: str):
    if spec.kind == "linear":
        return Linear(spec.in_dim, spec.out_dim, rng, name)
    if spec.kind == "prelu":
        return PReLU(name)
    return LSTMCell(spec.in_dim, spec.out_dim, rng, name)


# ---------------------------------------------------------------------------
# losses


def loss_mse(pred: Tensor, target) -> Tensor:
    """Mean squared error over all elements."""
    return ad.tmean(ad.square(ad.sub(pred, target)))


def loss_bce(score: Tensor, label) -> Tensor:
    """Binary cross-entropy on sigmoid scores in (0, 1)."""
    label = np.asarray(label, dtype=np.float64)
    pos = ad.mul(ad.log(ad.clip_floor(score, LOG_FLOOR)), label)
    neg = ad.mul(ad.log(ad.clip_floor(ad.sub(1.0, score), LOG_FLOOR)), 1.0 - label)
    return ad.mul(ad.tmean(ad.add(pos, neg)), -1.0)


def loss_ls_real(score: Tensor) -> Tensor:
    """Least-squares real term: (1/2) E[(D(d) - 1)^2]."""
    return ad.mul(ad.tmean(ad.square(ad.sub(score, 1.0))), 0.5)


def loss_ls_fake(score: Tensor) -> Tensor:
    """Least-squares fake term: (1/2) E[D(d_hat)^2]."""
    return ad.mul(ad.tmean(ad.square(score)), 0.5)


def loss_kl_gaussian(mu: Tensor, logvar: Tensor) -> Tensor:
    """KL(N(mu, exp(logvar)) || N(0, I)); per-sample sum, batch mean."""
    term = ad.sub(ad.add(ad.square(mu), ad.exp(logvar)), ad.add(logvar, 1.0))
    per_sample = ad.tsum(term, axis=-1)
    return ad.mul(ad.tmean(per_sample), 0.5)


def loss_xent(logits: Tensor, classes) -> Tensor:
    """Softmax cross-entropy against integer class labels."""
    classes = np.asarray(classes, dtype=np.int64)
    lse = ad.logsumexp(logits, axis=-1)
    picked = ad.take_rows(logits, classes)
    return ad.tmean(ad.sub(lse, picked))


def loss_k_variety(pred_set, target) -> Tensor:
    """Minimum MSE over a set of sampled predictions.

    The gradient flows only through the argmin sample.
    """
    if not pred_set:
        raise ValueError("loss_k_variety needs at least one prediction")
    losses = [loss_mse(p, target) for p in pred_set]
    best = int(np.argmin([l.item() for l in losses]))
    return losses[best]


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Standard Adam; gradients are zeroed after every step."""

    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise DivergenceError(f"non-finite gradient in parameter '{p.name}'")
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
            mhat = self.m[i] / (1 - self.b1 ** self.t)
            vhat = self.v[i] / (1 - self.b2 ** self.t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)
            p.grad = np.zeros_like(p.data)


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(fn, params, h: float = 1e-5) -> float:
    """Max relative error between analytic and central finite-difference grads.

    ``fn()`` must rebuild the forward graph from the current parameter values
    and return a scalar Tensor.
    """
    zero_grads(params)
    fn().backward()
    analytic = [p.grad.copy() for p in params]
    zero_grads(params)

    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            up = fn().item()
            flat[idx] = orig - h
            dn = fn().item()
            flat[idx] = orig
            num = (up - dn) / (2 * h)
            ana = a.reshape(-1)[idx]
            err = abs(ana - num) / max(abs(ana), abs(num), 1e-6)
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# parameter (de)serialization


def layers_to_doc(layers: dict) -> dict:
    """Serialize a name -> layer mapping with specs and flat weights."""
    doc = {}
    for name, layer in layers.items():
        doc[name] = {
            "spec": vars(layer.spec),
            "weights": {p.name.split(".")[-1]: p.data.tolist() for p in layer.params()},
        }
    return doc


def layers_from_doc(doc: dict) -> dict:
    """Rebuild layers from a serialized document (weights restored exactly)."""
    rng = np.random.default_rng(0)  # shapes only; values are overwritten
    layers = {}
    for name, entry in doc.items():
        spec = LayerSpec(**entry["spec"])
        layer = build_layer(spec, rng, name)
        for p in layer.params():
            short = p.name.split(".")[-1]
            p.data = np.asarray(entry["weights"][short], dtype=np.float64)
        layers[name] = layer
    return layers
