"""Independent oracles shared by the unit and acceptance tests."""

from __future__ import annotations

import itertools

import numpy as np

from safesep import policy_net as pn
from safesep.ppo import Minibatch


def finite_difference(fn, theta: np.ndarray, h: float = 1e-5) -> np.ndarray:
    grad = np.empty_like(theta)
    for k in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[k] += h
        dn[k] -= h
        grad[k] = (fn(up) - fn(dn)) / (2 * h)
    return grad


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def gae_literal(rewards, values, bootstrap, gamma, lam):
    """Exponentially weighted k-step estimators, evaluated term by term.

    Beyond the end of the data every longer estimator equals the longest
    available one, so the tail weights (1-lam) lam^(k-1), k >= K, sum to lam^(K-1).
    """
    T = len(rewards)
    v = list(values) + [bootstrap]
    out = []
    for t in range(T):
        K = T - t

        def k_step(k):
            ret = sum(gamma ** (i - t) * rewards[i] for i in range(t, t + k))
            return -v[t] + ret + gamma ** k * v[t + k]

        total = 0.0
        for k in range(1, K):
            total += (1 - lam) * lam ** (k - 1) * k_step(k)
        total += lam ** (K - 1) * k_step(K)
        out.append(total)
    return np.array(out)


def random_minibatch(rng, d, batch, spread=0.5):
    states = rng.uniform(0, 1, size=(batch, d))
    actions = rng.integers(0, 3, size=batch)
    return Minibatch(
        states,
        actions,
        rng.uniform(0.2, 0.9, size=batch),
        rng.normal(size=batch),
        rng.normal(size=batch),
    )


def reference_forward(params: pn.NetworkParams, x, keep1=None, keep2=None, p_drop=0.0):
    """Scalar-loop forward pass used as an oracle for the vectorized one."""
    W1, b1, W2, b2, Wpi, bpi = (np.asarray(a) for a in
                                (params.W1, params.b1, params.W2, params.b2, params.Wpi, params.bpi))
    n1, n2 = W1.shape[1], W2.shape[1]
    scale = 1.0 / (1.0 - p_drop) if (keep1 is not None) else 1.0
    h1 = []
    for j in range(n1):
        z = b1[j] + sum(x[i] * W1[i, j] for i in range(len(x)))
        k = 1.0 if keep1 is None else keep1[j]
        h1.append(np.tanh(z) * k * scale)
    h2 = []
    for j in range(n2):
        z = b2[j] + sum(h1[i] * W2[i, j] for i in range(n1))
        k = 1.0 if keep2 is None else keep2[j]
        h2.append(np.tanh(z) * k * scale)
    logits = [bpi[a] + sum(h2[i] * Wpi[i, a] for i in range(n2)) for a in range(Wpi.shape[1])]
    return np.array(logits)


def enumerate_mask_argmax_distribution(params: pn.NetworkParams, x, p_drop: float) -> np.ndarray:
    """Exact distribution of the argmax action over all dropout masks (small nets only)."""
    n1, n2 = params.W1.shape[1], params.W2.shape[1]
    dist = np.zeros(params.Wpi.shape[1])
    keep = 1.0 - p_drop
    for bits in itertools.product((0.0, 1.0), repeat=n1 + n2):
        k1, k2 = np.array(bits[:n1]), np.array(bits[n1:])
        kept = sum(bits)
        weight = keep ** kept * p_drop ** (n1 + n2 - kept)
        if weight == 0.0:
            continue
        dist[int(np.argmax(reference_forward(params, x, k1, k2, p_drop)))] += weight
    return dist


def brute_force_conflicts(positions, sep):
    """All pairs (a < b) closer than ``sep``, by explicit double loop."""
    out = set()
    ids = list(positions)
    for a in ids:
        for b in ids:
            if a < b and np.hypot(*(np.asarray(positions[a]) - positions[b])) < sep:
                out.add((a, b))
    return out
