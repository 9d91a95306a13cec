"""Two-hidden-layer tanh policy/value network with inverted dropout.

All functions are pure: parameters are never modified in place. Forward
passes accept batched inputs ``(B, d)`` and optional per-row masks.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np

from safesep.errors import ConfigError, ContractViolation

N_ACTIONS = 3
PARAM_NAMES = ("W1", "b1", "W2", "b2", "Wpi", "bpi", "Wv", "bv")


@dataclass(frozen=True, eq=False)
class NetworkParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    Wpi: np.ndarray
    bpi: np.ndarray
    Wv: np.ndarray
    bv: np.ndarray

    @property
    def layer_sizes(self) -> tuple[int, int, int]:
        return (self.W1.shape[0], self.W1.shape[1], self.W2.shape[1])

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays().values())

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays().values()])

    def from_vector(self, vec: np.ndarray) -> "NetworkParams":
        out, k = {}, 0
        for name, a in self.arrays().items():
            out[name] = np.array(vec[k:k + a.size], dtype=float).reshape(a.shape)
            k += a.size
        return NetworkParams(**out)

    def map(self, fn) -> "NetworkParams":
        return NetworkParams(**{k: fn(v) for k, v in self.arrays().items()})

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays().values())


class DropoutMask(NamedTuple):
    h1: np.ndarray
    h2: np.ndarray


class ForwardOutput(NamedTuple):
    action_probs: np.ndarray
    value: np.ndarray
    logits: np.ndarray


class _Cache(NamedTuple):
    x: np.ndarray
    h1: np.ndarray
    a1: np.ndarray
    h2: np.ndarray
    a2: np.ndarray
    s1: np.ndarray | float
    s2: np.ndarray | float


def init_params(layer_sizes, rng: np.random.Generator) -> NetworkParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    d, n1, n2 = (int(s) for s in layer_sizes)
    if min(d, n1, n2) <= 0:
        raise ConfigError(f"layer sizes must be positive, got {layer_sizes}")

    def w(fan_in, fan_out):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    return NetworkParams(
        W1=w(d, n1), b1=np.zeros(n1),
        W2=w(n1, n2), b2=np.zeros(n2),
        Wpi=w(n2, N_ACTIONS), bpi=np.zeros(N_ACTIONS),
        Wv=w(n2, 1), bv=np.zeros(1),
    )


def sample_mask(p_drop: float, rng: np.random.Generator, sizes=(32, 32), batch: int | None = None) -> DropoutMask:
    """Keep each hidden unit with probability ``1 - p_drop``."""
    if not 0.0 <= p_drop < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p_drop}")
    lead = () if batch is None else (batch,)
    return DropoutMask(
        (rng.random(lead + (sizes[0],)) >= p_drop).astype(float),
        (rng.random(lead + (sizes[1],)) >= p_drop).astype(float),
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward(params: NetworkParams, x, mask: DropoutMask | None, p_drop: float):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.W1.shape[0]:
        raise ContractViolation(f"state length {x.shape[-1]} != input size {params.W1.shape[0]}")
    h1 = np.tanh(x @ params.W1 + params.b1)
    if mask is None:
        s1 = s2 = 1.0
    else:
        scale = 1.0 / (1.0 - p_drop)
        s1, s2 = mask.h1 * scale, mask.h2 * scale
    a1 = h1 * s1
    h2 = np.tanh(a1 @ params.W2 + params.b2)
    a2 = h2 * s2
    logits = a2 @ params.Wpi + params.bpi
    value = (a2 @ params.Wv + params.bv)[..., 0]
    return ForwardOutput(softmax(logits), value, logits), _Cache(x, h1, a1, h2, a2, s1, s2)


def forward(params: NetworkParams, state, mask: DropoutMask | None = None, p_drop: float = 0.0) -> ForwardOutput:
    """Action probabilities and value. With a mask, hidden outputs are
    multiplied by ``mask / (1 - p_drop)``; without one the pass is deterministic."""
    return _forward(params, state, mask, p_drop)[0]


def forward_with_cache(params, state, mask=None, p_drop=0.0):
    return _forward(params, state, mask, p_drop)


def backward(params: NetworkParams, cache: _Cache, dlogits: np.ndarray, dvalue: np.ndarray) -> NetworkParams:
    """Reverse-mode pass for a batch: given dL/dlogits ``(B, 3)`` and dL/dvalue ``(B,)``,
    return dL/dtheta summed over the batch."""
    x, h1, a1, h2, a2, s1, s2 = cache
    dvalue = np.asarray(dvalue)[:, None]
    dWpi = a2.T @ dlogits
    dbpi = dlogits.sum(axis=0)
    dWv = a2.T @ dvalue
    dbv = dvalue.sum(axis=0)
    da2 = dlogits @ params.Wpi.T + dvalue @ params.Wv.T
    dz2 = da2 * s2 * (1.0 - h2 ** 2)
    dW2 = a1.T @ dz2
    db2 = dz2.sum(axis=0)
    dz1 = (dz2 @ params.W2.T) * s1 * (1.0 - h1 ** 2)
    dW1 = x.T @ dz1
    db1 = dz1.sum(axis=0)
    return NetworkParams(dW1, db1, dW2, db2, dWpi, dbpi, dWv, dbv)
