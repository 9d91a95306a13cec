"""Execution-time safety layer: state perturbation, MC-dropout and action aggregation.

Randomness is split into named streams so that modes stay comparable under a
shared seed:

``noise``  state perturbations
``mask``   dropout masks
``policy`` categorical draws from a single forward pass
``select`` draws from aggregated distributions and vote tie-breaks

With m=1, n=1, zero noise, zero dropout and per-pass sampling, every mode
consumes exactly one ``policy`` draw per decision and so reproduces the
plain policy's action sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from safesep import policy_net as pn
from safesep.errors import ConfigError

MODES = ("baseline", "do", "da1", "da2", "da1do", "da2do")
MODE_LABELS = {
    "baseline": "Baseline", "do": "DO", "da1": "DA1", "da2": "DA2",
    "da1do": "DA1+DO", "da2do": "DA2+DO",
}
STREAMS = ("noise", "mask", "policy", "select")


@dataclass
class DODAConfig:
    mode: str = "baseline"
    m: int = 5
    n: int = 5
    noise_low: float = -0.1
    noise_high: float = 0.1
    p_drop: float = 0.2
    # how a single dropout pass turns into an action: "argmax" or "sample"
    per_pass: str = "argmax"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.m < 1 or self.n < 1:
            raise ConfigError("m and n must be >= 1")
        if self.noise_low > self.noise_high:
            raise ConfigError("noise_low must not exceed noise_high")
        if not 0.0 <= self.p_drop < 1.0:
            raise ConfigError("p_drop must be in [0, 1)")
        if self.per_pass not in ("argmax", "sample"):
            raise ConfigError("per_pass must be 'argmax' or 'sample'")

    @property
    def uses_da(self) -> bool:
        return self.mode in ("da1", "da2", "da1do", "da2do")

    @property
    def uses_do(self) -> bool:
        return self.mode in ("do", "da1do", "da2do")


@dataclass
class DecisionRngs:
    noise: np.random.Generator
    mask: np.random.Generator
    policy: np.random.Generator
    select: np.random.Generator

    @classmethod
    def from_seed(cls, seed) -> "DecisionRngs":
        ss = np.random.SeedSequence(seed)
        return cls(*(np.random.default_rng(s) for s in ss.spawn(len(STREAMS))))

    @classmethod
    def coerce(cls, rng) -> "DecisionRngs":
        if isinstance(rng, DecisionRngs):
            return rng
        return cls(rng, rng, rng, rng)


def sample_categorical(p: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw; consumes exactly one uniform."""
    u = rng.random()
    k = int(np.searchsorted(np.cumsum(p), u, side="right"))
    return min(k, len(p) - 1)


def perturb_state(s: np.ndarray, config: DODAConfig, rng: np.random.Generator, m: int | None = None) -> np.ndarray:
    """clip(s + eps, 0, 1) with eps ~ U(noise_low, noise_high) per component.

    With ``m`` given, returns an ``(m, d)`` stack of independent perturbations.
    """
    s = np.asarray(s, dtype=float)
    shape = s.shape if m is None else (m,) + s.shape
    eps = rng.uniform(config.noise_low, config.noise_high, size=shape)
    return np.clip(s + eps, 0.0, 1.0)


def _mc_passes(params: pn.NetworkParams, states: np.ndarray, n: int, p_drop: float,
               mask_rng: np.random.Generator) -> np.ndarray:
    """Softmax outputs of ``n`` masked passes for each row of ``states``: shape (m, n, 3)."""
    m = states.shape[0]
    sizes = params.layer_sizes[1:]
    mask = pn.sample_mask(p_drop, mask_rng, sizes, batch=m * n)
    rep = np.repeat(states, n, axis=0)
    probs = pn.forward(params, rep, mask, p_drop).action_probs
    return probs.reshape(m, n, -1)


def action_frequencies(actions, n_actions: int = pn.N_ACTIONS) -> np.ndarray:
    """P(a) = (1/n) * #{i : action_i == a}."""
    actions = np.asarray(actions, dtype=int)
    return np.bincount(actions, minlength=n_actions)[:n_actions] / len(actions)


def _pass_actions(pass_probs: np.ndarray, per_pass: str, rng: np.random.Generator) -> np.ndarray:
    if per_pass == "argmax":
        return np.argmax(pass_probs, axis=-1)
    flat = pass_probs.reshape(-1, pass_probs.shape[-1])
    return np.array([sample_categorical(p, rng) for p in flat]).reshape(pass_probs.shape[:-1])


def mc_action_distribution(params: pn.NetworkParams, s: np.ndarray, n: int, p_drop: float, rng,
                           per_pass: str = "argmax") -> np.ndarray:
    """Empirical action frequencies over ``n`` dropout passes."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    rngs = DecisionRngs.coerce(rng)
    states = np.asarray(s, dtype=float)[None, :]
    acts = _pass_actions(_mc_passes(params, states, n, p_drop, rngs.mask), per_pass, rngs.policy)
    return action_frequencies(acts[0], pn.N_ACTIONS)


def entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def da1_select(actions, rng: np.random.Generator, n_actions: int = pn.N_ACTIONS) -> int:
    """Majority vote; ties broken uniformly at random."""
    actions = np.asarray(actions, dtype=int)
    if actions.size == 0:
        raise ConfigError("cannot vote over an empty action list")
    counts = np.bincount(actions, minlength=n_actions)
    winners = np.flatnonzero(counts == counts.max())
    if len(winners) == 1:
        return int(winners[0])
    return int(winners[rng.integers(len(winners))])


def da2_select(distributions, rng: np.random.Generator) -> int:
    """Sample from the minimum-entropy distribution (lowest index on ties)."""
    if len(distributions) == 0:
        raise ConfigError("no distributions to choose from")
    ents = [entropy(p) for p in distributions]
    best = int(np.argmin(ents))
    return sample_categorical(np.asarray(distributions[best], dtype=float), rng)


def doda_select(params: pn.NetworkParams, s: np.ndarray, config: DODAConfig, rng) -> int:
    """Pick an action for state ``s`` under ``config.mode``."""
    rngs = DecisionRngs.coerce(rng)
    mode = config.mode
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    k = pn.N_ACTIONS

    if mode == "baseline":
        return sample_categorical(pn.forward(params, s).action_probs, rngs.policy)

    if mode == "do":
        p = mc_action_distribution(params, s, config.n, config.p_drop, rngs, config.per_pass)
        return sample_categorical(p, rngs.select)

    states = perturb_state(s, config, rngs.noise, m=config.m)
    if mode in ("da1", "da2"):
        dists = pn.forward(params, states).action_probs
        if mode == "da1":
            acts = [sample_categorical(p, rngs.policy) for p in dists]
            return da1_select(acts, rngs.select, k)
        return da2_select(dists, rngs.policy)

    passes = _mc_passes(params, states, config.n, config.p_drop, rngs.mask)
    acts = _pass_actions(passes, config.per_pass, rngs.policy)
    dists = [action_frequencies(a, k) for a in acts]
    if mode == "da1do":
        votes = [sample_categorical(p, rngs.select) for p in dists]
        return da1_select(votes, rngs.select, k)
    return da2_select(dists, rngs.select)
