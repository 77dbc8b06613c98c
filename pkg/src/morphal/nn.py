"""Minimal dense-network core: MLPs, losses, Adam, gradient checking.

Tensors are C-contiguous float64 numpy arrays throughout; the matrix
arithmetic itself runs in the selected kernel backend (compiled or pure
Python, see ``morphal.backend``), never through numpy's own matmul, so
results are identical on every install. Every public operation validates
that its outputs are finite.
"""

from __future__ import annotations

import math
from typing import Callable, Iterator, Optional

import numpy as np

from morphal.backend import kernels
from morphal.errors import InputError, NumericError, ShapeError, StateError

ACTIVATIONS = ("linear", "relu", "sigmoid")
_ACT_CODE = {"linear": 0, "relu": 1, "sigmoid": 2}

BCE_CLAMP_EPS = 1e-7


def as_tensor(values, shape=None) -> np.ndarray:
    """Coerce to a C-contiguous float64 array, optionally reshaped."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if shape is not None:
        arr = np.ascontiguousarray(arr.reshape(shape))
    return arr


def check_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NumericError(f"{what} contains non-finite values")
    return arr


class DenseLayer:
    """Fully connected layer: act(x @ weights.T + bias).

    weights has shape (fan_out, fan_in); bias has shape (fan_out,).
    """

    def __init__(self, weights, bias, activation: str):
        if activation not in ACTIVATIONS:
            raise InputError(f"unknown activation {activation!r}")
        self.weights = as_tensor(weights)
        self.bias = as_tensor(bias)
        if self.weights.ndim != 2:
            raise ShapeError("weights must be 2-D (fan_out x fan_in)")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match fan_out "
                f"{self.weights.shape[0]}"
            )
        self.activation = activation

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def initialized(cls, fan_in: int, fan_out: int, activation: str,
                    rng: np.random.Generator, zero: bool = False) -> "DenseLayer":
        """Glorot-uniform init (or all-zero, for probability heads that
        should output exactly 0.5 untrained)."""
        if fan_in < 1 or fan_out < 1:
            raise ShapeError("layer dimensions must be positive")
        if zero:
            w = np.zeros((fan_out, fan_in))
        else:
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        return cls(w, np.zeros(fan_out), activation)

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.bias.copy(), self.activation)


class Mlp:
    """Stack of dense layers with cached forward and manual backward."""

    def __init__(self, layers: list[DenseLayer]):
        if not layers:
            raise InputError("an MLP needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.fan_out != nxt.fan_in:
                raise ShapeError(
                    f"layer chain broken: fan_out {prev.fan_out} feeds "
                    f"fan_in {nxt.fan_in}"
                )
        self.layers = layers
        self._cache: Optional[list[np.ndarray]] = None

    @classmethod
    def build(cls, sizes: list[int], hidden_activation: str = "relu",
              output_activation: str = "linear",
              rng: Optional[np.random.Generator] = None,
              zero_final: bool = False) -> "Mlp":
        """Build from a size chain [in, h1, ..., out]."""
        if len(sizes) < 2:
            raise InputError("need at least input and output sizes")
        rng = rng if rng is not None else np.random.default_rng(0)
        layers = []
        for i in range(len(sizes) - 1):
            last = i == len(sizes) - 2
            layers.append(DenseLayer.initialized(
                sizes[i], sizes[i + 1],
                output_activation if last else hidden_activation,
                rng, zero=zero_final and last,
            ))
        return cls(layers)

    @property
    def fan_in(self) -> int:
        return self.layers[0].fan_in

    @property
    def fan_out(self) -> int:
        return self.layers[-1].fan_out

    def parameters(self) -> Iterator[np.ndarray]:
        for layer in self.layers:
            yield layer.weights
            yield layer.bias

    def copy(self) -> "Mlp":
        return Mlp([layer.copy() for layer in self.layers])

    def forward(self, batch, cache: bool = True) -> np.ndarray:
        """Run the batch through every layer; caches activations for
        backward when ``cache`` is true."""
        x = as_tensor(batch)
        if x.ndim != 2:
            raise ShapeError("batch must be 2-D (n x fan_in)")
        if x.shape[0] < 1:
            raise InputError("batch is empty")
        if x.shape[1] != self.fan_in:
            raise ShapeError(
                f"batch has {x.shape[1]} columns, expected {self.fan_in}"
            )
        acts = [x]
        for layer in self.layers:
            out = np.empty((x.shape[0], layer.fan_out))
            kernels.dense_forward(acts[-1], layer.weights, layer.bias,
                                  _ACT_CODE[layer.activation], out)
            acts.append(out)
        self._cache = acts if cache else None
        return check_finite(acts[-1], "forward output")

    def backward(self, loss_grad, input_grad: bool = False):
        """Backprop an upstream gradient through the cached forward.

        Returns (grads, gx): grads is a list of (grad_w, grad_b) per layer,
        gx the gradient w.r.t. the input batch (or None unless requested).
        """
        if self._cache is None:
            raise StateError("backward called without a cached forward")
        acts = self._cache
        grad = as_tensor(loss_grad)
        if grad.shape != acts[-1].shape:
            raise ShapeError(
                f"loss gradient shape {grad.shape} does not match output "
                f"shape {acts[-1].shape}"
            )
        grads: list = [None] * len(self.layers)
        gx = None
        for idx in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[idx]
            x = acts[idx]
            a = acts[idx + 1]
            gw = np.empty_like(layer.weights)
            gb = np.empty_like(layer.bias)
            need_gx = idx > 0 or input_grad
            gxbuf = np.empty_like(x) if need_gx else None
            kernels.dense_backward(grad, a, x, layer.weights,
                                   _ACT_CODE[layer.activation], gw, gb, gxbuf)
            grads[idx] = (check_finite(gw, "weight gradient"),
                          check_finite(gb, "bias gradient"))
            if need_gx:
                grad = gxbuf
            if idx == 0 and input_grad:
                gx = check_finite(gxbuf, "input gradient")
        return grads, gx


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    """Mean squared error over all elements and its gradient w.r.t. pred."""
    p = as_tensor(pred)
    t = as_tensor(target)
    if p.shape != t.shape:
        raise ShapeError(f"shape mismatch: {p.shape} vs {t.shape}")
    grad = np.empty_like(p)
    loss = kernels.mse_loss_grad(p.reshape(-1), t.reshape(-1), grad.reshape(-1))
    if not math.isfinite(loss):
        raise NumericError("mse loss is non-finite")
    return loss, check_finite(grad, "mse gradient")


def bce_loss(p, y, clamp_eps: float = BCE_CLAMP_EPS) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy (probabilities clamped away from 0/1)
    and its gradient w.r.t. p."""
    pa = as_tensor(p)
    ya = as_tensor(y)
    if pa.shape != ya.shape:
        raise ShapeError(f"shape mismatch: {pa.shape} vs {ya.shape}")
    grad = np.empty_like(pa)
    loss = kernels.bce_loss_grad(pa.reshape(-1), ya.reshape(-1),
                                 grad.reshape(-1), clamp_eps)
    if not math.isfinite(loss):
        raise NumericError("bce loss is non-finite")
    return loss, check_finite(grad, "bce gradient")


LOSSES: dict[str, Callable] = {"mse": mse_loss, "bce": bce_loss}


class AdamState:
    """Adam accumulators for one MLP's parameters.

    t counts applied steps; the moment buffers stay all-zero until the
    first step.
    """

    def __init__(self, net: Mlp, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.moments = [(np.zeros_like(p), np.zeros_like(p))
                        for p in net.parameters()]

    def step(self, net: Mlp, grads) -> None:
        """Apply one bias-corrected Adam update to every parameter."""
        params = list(net.parameters())
        flat_grads = [g for gw_gb in grads for g in gw_gb]
        if len(flat_grads) != len(params):
            raise ShapeError("gradient count does not match parameter count")
        self.t += 1
        for p, g, (m, v) in zip(params, flat_grads, self.moments):
            if p.shape != g.shape:
                raise ShapeError(
                    f"gradient shape {g.shape} does not match parameter "
                    f"shape {p.shape}"
                )
            kernels.adam_step(p.reshape(-1), as_tensor(g).reshape(-1),
                              m.reshape(-1), v.reshape(-1), self.t,
                              self.lr, self.beta1, self.beta2, self.eps)
            check_finite(p, "updated parameter")


def gradient_check(net: Mlp, loss: str, batch, targets, h: float = 1e-5,
                   perturb: Optional[Callable] = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``perturb`` (tests only) may tamper with the analytic gradients before
    comparison to prove the check catches faults.
    """
    if h <= 0:
        raise InputError("step h must be positive")
    loss_fn = LOSSES[loss]
    x = as_tensor(batch)
    t = as_tensor(targets)
    if x.shape[0] < 1:
        raise InputError("batch is empty")

    pred = net.forward(x, cache=True)
    _, lgrad = loss_fn(pred, t)
    grads, _ = net.backward(lgrad)
    if perturb is not None:
        grads = perturb(grads)

    def loss_at() -> float:
        value, _ = loss_fn(net.forward(x, cache=False), t)
        return value

    worst = 0.0
    for layer, (gw, gb) in zip(net.layers, grads):
        for param, grad in ((layer.weights, gw), (layer.bias, gb)):
            flat_p = param.reshape(-1)
            flat_g = grad.reshape(-1)
            for i in range(flat_p.size):
                saved = flat_p[i]
                flat_p[i] = saved + h
                hi = loss_at()
                flat_p[i] = saved - h
                lo = loss_at()
                flat_p[i] = saved
                numeric = (hi - lo) / (2.0 * h)
                analytic = flat_g[i]
                rel = abs(analytic - numeric) / max(1e-8,
                                                    abs(analytic) + abs(numeric))
                if rel > worst:
                    worst = rel
    return worst
