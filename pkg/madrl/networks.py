"""
Float64 multilayer perceptrons with manual backpropagation and Adam.

Parameters are kept as a flat list [W0, b0, W1, b1, ...] with W_l shaped
(fan_in, fan_out), so gradients, optimizer moments and checkpoints share one
layout.
"""

import logging
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

OutputActivation = Literal["tanh", "linear"]


class Mlp:
    """Fully connected network with Tanh hidden layers."""

    def __init__(self, sizes: Sequence[int], output: OutputActivation = "linear",
                 rng: Optional[np.random.Generator] = None):
        """
        Initialize the network.

        Args:
            sizes: Layer widths [in, hidden..., out].
            output: ``tanh`` for bounded actors, ``linear`` for critics.
            rng: Generator for the uniform +-1/sqrt(fan_in) initialization;
                weights start at zero when omitted.
        """
        if len(sizes) < 2:
            raise ValueError("An MLP needs at least input and output sizes")
        self.sizes = [int(s) for s in sizes]
        self.output = output
        self.params: List[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            if rng is None:
                self.params += [np.zeros((fan_in, fan_out)), np.zeros(fan_out)]
            else:
                bound = 1.0 / np.sqrt(fan_in)
                self.params += [rng.uniform(-bound, bound, (fan_in, fan_out)),
                                rng.uniform(-bound, bound, fan_out)]

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
        """Return (output, cache of layer activations) for a (batch, in) input."""
        activations = [np.asarray(x, dtype=np.float64)]
        h = activations[0]
        for layer in range(self.n_layers):
            W, b = self.params[2 * layer], self.params[2 * layer + 1]
            h = h @ W + b
            if layer < self.n_layers - 1 or self.output == "tanh":
                h = np.tanh(h)
            activations.append(h)
        return h, activations

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: List[np.ndarray], grad_out: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
        """Backpropagate dL/d(output).

        Returns:
            (parameter gradients in ``params`` order, dL/d(input))
        """
        grads: List[np.ndarray] = [np.empty(0)] * len(self.params)
        delta = np.asarray(grad_out, dtype=np.float64)
        for layer in reversed(range(self.n_layers)):
            out = cache[layer + 1]
            if layer < self.n_layers - 1 or self.output == "tanh":
                delta = delta * (1.0 - out ** 2)
            grads[2 * layer] = cache[layer].T @ delta
            grads[2 * layer + 1] = np.sum(delta, axis=0)
            delta = delta @ self.params[2 * layer].T
        return grads, delta

    def copy(self) -> "Mlp":
        clone = Mlp(self.sizes, self.output)
        clone.params = [p.copy() for p in self.params]
        return clone

    def soft_update_from(self, source: "Mlp", eps: float) -> None:
        """self <- eps * source + (1 - eps) * self."""
        for target, value in zip(self.params, source.params):
            target *= (1.0 - eps)
            target += eps * value

    def to_dict(self) -> Dict:
        return {"sizes": self.sizes, "output": self.output,
                "params": [p.tolist() for p in self.params]}

    @classmethod
    def from_dict(cls, data: Dict) -> "Mlp":
        net = cls(data["sizes"], data["output"])
        loaded = [np.asarray(p, dtype=np.float64) for p in data["params"]]
        if [p.shape for p in loaded] != [p.shape for p in net.params]:
            raise ValueError("Parameter shapes do not match the layer sizes")
        net.params = loaded
        return net


class AdamState:
    """Adam moments for one parameter list (beta1 0.9, beta2 0.999, eps 1e-8)."""

    def __init__(self, params: Sequence[np.ndarray], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: List[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        """In-place descent step on ``params``."""
        self.step_count += 1
        t = self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def to_dict(self) -> Dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
                "step_count": self.step_count,
                "m": [a.tolist() for a in self.m], "v": [a.tolist() for a in self.v]}

    @classmethod
    def from_dict(cls, data: Dict) -> "AdamState":
        m = [np.asarray(a, dtype=np.float64) for a in data["m"]]
        state = cls(m, data["lr"], data["beta1"], data["beta2"], data["eps"])
        state.m = m
        state.v = [np.asarray(a, dtype=np.float64) for a in data["v"]]
        state.step_count = int(data["step_count"])
        return state


def finite_difference_gradients(loss: Callable[[], float], params: List[np.ndarray],
                                step: float = 1e-6) -> List[np.ndarray]:
    """Central differences of ``loss`` with respect to every entry of ``params``.

    ``loss`` must read the parameters in place; each entry is restored after use.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + step
            upper = loss()
            flat[idx] = original - step
            lower = loss()
            flat[idx] = original
            gflat[idx] = (upper - lower) / (2.0 * step)
        grads.append(g)
    return grads


def gradient_relative_error(analytic: Sequence[np.ndarray], numeric: Sequence[np.ndarray]) -> float:
    """Largest per-tensor ||g - g_fd|| / max(||g|| + ||g_fd||, 1e-12)."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = max(np.linalg.norm(a) + np.linalg.norm(n), 1e-12)
        worst = max(worst, float(np.linalg.norm(a - n) / scale))
    return worst
