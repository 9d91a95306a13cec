"""Clipped-surrogate PPO with truncated GAE on top of :mod:`safesep.policy_net`."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, NamedTuple

import numpy as np

from safesep import policy_net as pn
from safesep.errors import ConfigError, ContractViolation, NumericError


@dataclass
class PPOConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    c1: float = 0.001  # entropy bonus
    c2: float = 0.5  # value loss
    epochs: int = 4
    minibatch_size: int = 64
    learning_rate: float = 3e-4
    # None -> (1 - train_dropout) / (2 N) with N the number of transitions in the update
    weight_decay: float | None = None
    train_dropout: float = 0.2
    max_grad_norm: float = 0.5
    normalize_advantages: bool = True

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0 or not 0.0 <= self.lam <= 1.0:
            raise ConfigError("gamma must be in (0, 1] and lambda in [0, 1]")
        coeffs = [self.clip_eps, self.c1, self.c2, self.learning_rate, self.max_grad_norm]
        if min(coeffs) < 0 or self.clip_eps == 0:
            raise ConfigError("PPO coefficients must be nonnegative and clip_eps > 0")
        if self.weight_decay is not None and self.weight_decay < 0:
            raise ConfigError("weight_decay must be nonnegative")
        if self.epochs < 0 or self.minibatch_size < 1:
            raise ConfigError("epochs >= 0 and minibatch_size >= 1 required")
        if not 0.0 <= self.train_dropout < 1.0:
            raise ConfigError("train_dropout must be in [0, 1)")

    def decay_for(self, n_samples: int) -> float:
        if self.weight_decay is not None:
            return self.weight_decay
        return (1.0 - self.train_dropout) / (2.0 * max(n_samples, 1))


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float
    value_estimate: float
    action_prob_old: float
    done: bool = False

    def __post_init__(self):
        if not 0.0 < self.action_prob_old <= 1.0:
            raise ContractViolation(f"action_prob_old must be in (0, 1], got {self.action_prob_old}")
        if not np.isfinite(self.value_estimate):
            raise NumericError("non-finite value estimate")


@dataclass
class RolloutBuffer:
    """Per-agent transition sequences plus the value used to bootstrap truncated ones."""

    trajectories: dict[Hashable, list[Transition]] = field(default_factory=dict)
    bootstrap: dict[Hashable, float] = field(default_factory=dict)

    def add(self, agent: Hashable, tr: Transition):
        seq = self.trajectories.setdefault(agent, [])
        if seq and seq[-1].done:
            raise ContractViolation(f"agent {agent!r} already finished")
        seq.append(tr)

    def truncate(self, agent: Hashable, value: float):
        self.bootstrap[agent] = float(value)

    def merge(self, other: "RolloutBuffer", prefix: Hashable) -> None:
        for k, seq in other.trajectories.items():
            self.trajectories[(prefix, k)] = list(seq)
        for k, v in other.bootstrap.items():
            self.bootstrap[(prefix, k)] = v

    def __len__(self):
        return sum(len(s) for s in self.trajectories.values())


class Minibatch(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    prob_old: np.ndarray
    advantages: np.ndarray
    targets: np.ndarray

    def take(self, idx) -> "Minibatch":
        return Minibatch(*(a[idx] for a in self))


def compute_gae(rewards, values, bootstrap_value: float, gamma: float, lam: float) -> np.ndarray:
    """Truncated GAE via the backward recursion A_t = delta_t + gamma*lam*A_{t+1}."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    if rewards.shape != values.shape or rewards.ndim != 1 or len(rewards) == 0:
        raise ContractViolation("rewards and values must be equal-length nonempty 1-D sequences")
    nxt = np.append(values[1:], bootstrap_value)
    deltas = rewards + gamma * nxt - values
    adv = np.empty_like(deltas)
    acc = 0.0
    for t in range(len(deltas) - 1, -1, -1):
        acc = deltas[t] + gamma * lam * acc
        adv[t] = acc
    return adv


def build_batch(buffer: RolloutBuffer, config: PPOConfig) -> Minibatch:
    if len(buffer) == 0:
        raise ContractViolation("empty rollout buffer")
    states, actions, probs, advs, targets = [], [], [], [], []
    for agent, seq in buffer.trajectories.items():
        for k, tr in enumerate(seq):
            if tr.done and k != len(seq) - 1:
                raise ContractViolation(f"agent {agent!r}: done before end of sequence")
        boot = 0.0 if seq[-1].done else buffer.bootstrap.get(agent, 0.0)
        vals = np.array([tr.value_estimate for tr in seq])
        adv = compute_gae([tr.reward for tr in seq], vals, boot, config.gamma, config.lam)
        states.extend(tr.state for tr in seq)
        actions.extend(tr.action for tr in seq)
        probs.extend(tr.action_prob_old for tr in seq)
        advs.append(adv)
        targets.append(adv + vals)
    return Minibatch(
        np.asarray(states, dtype=float),
        np.asarray(actions, dtype=int),
        np.asarray(probs, dtype=float),
        np.concatenate(advs),
        np.concatenate(targets),
    )


def _objective(mb: Minibatch, params: pn.NetworkParams, config: PPOConfig, decay: float,
               mask: pn.DropoutMask | None, p_drop: float, want_grad: bool):
    out, cache = pn.forward_with_cache(params, mb.states, mask, p_drop)
    B = len(mb.actions)
    rows = np.arange(B)
    probs = out.action_probs
    pa = probs[rows, mb.actions]
    ratio = pa / mb.prob_old
    A = mb.advantages
    eps = config.clip_eps
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps)
    surr = np.minimum(ratio * A, clipped * A)
    logp = np.log(probs)
    ent = -(probs * logp).sum(axis=1)
    verr = out.value - mb.targets
    wd_term = decay * float(sum(np.sum(a * a) for a in params.arrays().values()))
    per_sample = surr + config.c1 * ent - config.c2 * verr ** 2
    obj = float(per_sample.mean()) - wd_term
    diag = {
        "ratio_mean": float(ratio.mean()),
        "clip_frac": float(np.mean(np.abs(ratio - 1.0) > eps)),
        "entropy": float(ent.mean()),
        "value_loss": float(np.mean(verr ** 2)),
        "surrogate": float(surr.mean()),
    }
    if not np.isfinite(obj) or not np.all(np.isfinite(probs)):
        raise NumericError("non-finite PPO objective")
    if not want_grad:
        return obj, None, diag

    # surrogate: gradient flows only where the unclipped branch is the active minimum
    active = ratio * A <= clipped * A
    active |= (ratio >= 1.0 - eps) & (ratio <= 1.0 + eps)
    g_ratio = np.where(active, A, 0.0) / mb.prob_old  # d surr / d pa
    onehot = np.zeros_like(probs)
    onehot[rows, mb.actions] = 1.0
    dlogits = (g_ratio * pa)[:, None] * (onehot - probs)
    dlogits += config.c1 * (-probs * (logp + ent[:, None]))
    dvalue = -2.0 * config.c2 * verr
    grads = pn.backward(params, cache, dlogits / B, dvalue / B)
    grads = _add_scaled(grads, params, -2.0 * decay)
    return obj, grads, diag


def _add_scaled(a: pn.NetworkParams, b: pn.NetworkParams, scale: float) -> pn.NetworkParams:
    bb = b.arrays()
    return pn.NetworkParams(**{k: v + scale * bb[k] for k, v in a.arrays().items()})


def ppo_objective(minibatch: Minibatch, params: pn.NetworkParams, config: PPOConfig,
                  mask: pn.DropoutMask | None = None, p_drop: float = 0.0, decay: float | None = None):
    """Objective to maximize and diagnostics (ratio mean, clip fraction, entropy, ...)."""
    if len(minibatch.actions) == 0:
        raise ContractViolation("empty minibatch")
    if np.any(minibatch.prob_old <= 0):
        raise ContractViolation("old action probabilities must be positive")
    decay = config.decay_for(len(minibatch.actions)) if decay is None else decay
    obj, _, diag = _objective(minibatch, params, config, decay, mask, p_drop, want_grad=False)
    return obj, diag


def objective_and_grad(minibatch: Minibatch, params: pn.NetworkParams, config: PPOConfig,
                       mask: pn.DropoutMask | None = None, p_drop: float = 0.0, decay: float | None = None):
    """Objective, its exact gradient w.r.t. every parameter, and diagnostics."""
    if len(minibatch.actions) == 0:
        raise ContractViolation("empty minibatch")
    decay = config.decay_for(len(minibatch.actions)) if decay is None else decay
    return _objective(minibatch, params, config, decay, mask, p_drop, want_grad=True)


class Adam:
    """Adam applied as gradient *ascent* on flat parameter vectors."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad ** 2
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        return theta + self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def state_dict(self) -> dict:
        return {"t": self.t, "m": None if self.m is None else self.m.tolist(),
                "v": None if self.v is None else self.v.tolist()}


def update(params: pn.NetworkParams, buffer: RolloutBuffer | Minibatch, config: PPOConfig,
           rng: np.random.Generator, optimizer: Adam | None = None):
    """Multi-epoch minibatch ascent on the PPO objective.

    Returns ``(new_params, stats)``. On a non-finite objective or gradient the
    original parameters are returned and ``stats["numeric_error"]`` is True.
    """
    batch = buffer if isinstance(buffer, Minibatch) else build_batch(buffer, config)
    n = len(batch.actions)
    if n == 0:
        raise ContractViolation("empty rollout buffer")
    if config.normalize_advantages and n > 1:
        adv = batch.advantages
        batch = batch._replace(advantages=(adv - adv.mean()) / (adv.std() + 1e-8))
    if optimizer is None:
        optimizer = Adam(config.learning_rate)
    decay = config.decay_for(n)
    sizes = params.layer_sizes[1:]
    theta = params.to_vector()
    current = params
    diags = []
    saved = (optimizer.m, optimizer.v, optimizer.t)
    try:
        for _ in range(config.epochs):
            order = rng.permutation(n)
            for start in range(0, n, config.minibatch_size):
                mb = batch.take(order[start:start + config.minibatch_size])
                mask = None
                if config.train_dropout > 0:
                    mask = pn.sample_mask(config.train_dropout, rng, sizes, batch=len(mb.actions))
                _, grads, diag = objective_and_grad(mb, current, config, mask, config.train_dropout, decay)
                g = grads.to_vector()
                if not np.all(np.isfinite(g)):
                    raise NumericError("non-finite gradient")
                norm = float(np.linalg.norm(g))
                if config.max_grad_norm > 0 and norm > config.max_grad_norm:
                    g = g * (config.max_grad_norm / norm)
                theta = optimizer.step(theta, g)
                current = params.from_vector(theta)
                if not current.all_finite():
                    raise NumericError("non-finite parameters after step")
                diags.append(diag)
    except NumericError:
        optimizer.m, optimizer.v, optimizer.t = saved
        return params, {"numeric_error": True}
    stats = {k: float(np.mean([d[k] for d in diags])) for k in diags[0]} if diags else {}
    stats["numeric_error"] = False
    stats["samples"] = n
    return current, stats
