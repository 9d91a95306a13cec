"""Seeded training and evaluation loops."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from safesep import policy_net as pn
from safesep.doda import STREAMS, DecisionRngs, DODAConfig, doda_select, sample_categorical
from safesep.errors import ConfigError
from safesep.harness.config import ExperimentConfig
from safesep.harness.results import ResultRow
from safesep.ppo import Adam, RolloutBuffer, Transition, update
from safesep.sim import Status, World, build_case, compute_reward, load_geometry, observe
from safesep.sim.world import EpisodeResult, SimConfig

log = logging.getLogger(__name__)

_STREAM_IDS = {"init": 0, "spawn": 1, "noise": 2, "mask": 3, "policy": 4, "select": 5, "shuffle": 6}
TRAIN_KEY = 0


def substream(seed: int, name: str, *keys: int) -> np.random.Generator:
    """Independent generator for a named purpose; identical (seed, name, keys) give identical draws."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(_STREAM_IDS[name], *(int(k) for k in keys)))
    return np.random.default_rng(ss)


def case_key(case: str) -> int:
    return ord(case)


def decision_rngs(seed: int, *keys: int) -> DecisionRngs:
    return DecisionRngs(*(substream(seed, name, *keys) for name in STREAMS))


def _geometry(config: ExperimentConfig):
    return load_geometry(config.geometry)


# -- training ---------------------------------------------------------------

def run_training_episode(world: World, params: pn.NetworkParams, rng: np.random.Generator):
    """Roll out the shared stochastic policy on every aircraft; returns (result, buffer, mean reward)."""
    buf = RolloutBuffer()
    rewards = []
    while not world.done and world.steps < world.config.max_steps:
        ids = world.active_ids
        acts: dict[int, int] = {}
        if ids:
            obs = np.stack([observe(i, world) for i in ids])
            out = pn.forward(params, obs)
            acts = {i: sample_categorical(out.action_probs[k], rng) for k, i in enumerate(ids)}
        events = world.step(acts)
        for k, i in enumerate(ids):
            a = acts[i]
            r = compute_reward(i, events, a, world)
            rewards.append(r)
            done = world.aircraft[i].status is not Status.ACTIVE
            buf.add(i, Transition(obs[k], a, r, float(out.value[k]), float(out.action_probs[k, a]), done))
    for i in world.active_ids:
        buf.truncate(i, float(pn.forward(params, observe(i, world)).value))
    return world.result(), buf, float(np.mean(rewards)) if rewards else 0.0


@dataclass
class TrainResult:
    final: pn.NetworkParams
    best: pn.NetworkParams
    records: list[dict] = field(default_factory=list)
    best_rolling: float | None = None


def train(config: ExperimentConfig, seed: int, on_record=None) -> TrainResult:
    airspace = build_case(config.train_case, _geometry(config))
    sim = config.sim_for(config.train_density)
    params = pn.init_params(config.layer_sizes(), substream(seed, "init"))
    best, best_rolling = params, None
    opt = Adam(config.ppo.learning_rate)
    shuffle = substream(seed, "shuffle")
    buffer = RolloutBuffer()
    scores: list[int] = []
    stats: dict = {}
    records = []
    for ep in range(config.train_episodes):
        world = World.from_seed(airspace, sim, substream(seed, "spawn", TRAIN_KEY, ep))
        res, ep_buf, mean_r = run_training_episode(world, params, substream(seed, "policy", TRAIN_KEY, ep))
        buffer.merge(ep_buf, ep)
        scores.append(res.score)
        if (ep + 1) % config.episodes_per_update == 0 or ep + 1 == config.train_episodes:
            params, stats = update(params, buffer, config.ppo, shuffle, opt)
            if stats.get("numeric_error"):
                log.warning("episode %d: update skipped after numeric error", ep)
            buffer = RolloutBuffer()
        window = scores[-config.rolling_window:]
        rolling = float(np.mean(window))
        if len(scores) >= config.rolling_window and (best_rolling is None or rolling > best_rolling):
            best_rolling, best = rolling, params
        rec = {
            "episode": ep,
            "score": res.score,
            "spawned": res.spawned,
            "conflicts": len(res.conflicts),
            "steps": res.steps,
            "mean_reward": mean_r,
            "rolling_score": rolling,
            "surrogate": stats.get("surrogate"),
            "value_loss": stats.get("value_loss"),
            "entropy": stats.get("entropy"),
            "clip_frac": stats.get("clip_frac"),
        }
        records.append(rec)
        if on_record is not None:
            on_record(rec)
    if best_rolling is None:
        best = params
    return TrainResult(params, best, records, best_rolling)


# -- evaluation -------------------------------------------------------------

def run_eval_episode(world: World, params: pn.NetworkParams, doda: DODAConfig, rngs: DecisionRngs,
                     trace: list | None = None) -> EpisodeResult:
    while not world.done and world.steps < world.config.max_steps:
        acts = {i: doda_select(params, observe(i, world), doda, rngs) for i in world.active_ids}
        if trace is not None:
            trace.append(tuple(sorted(acts.items())))
        world.step(acts)
    return world.result()


def eval_episode(config: ExperimentConfig, params: pn.NetworkParams, case: str, mode: str, density: str,
                 seed: int, episode: int, airspace=None, doda: DODAConfig | None = None,
                 trace: list | None = None) -> EpisodeResult:
    """One paired-seed evaluation episode; the seeds depend only on (seed, case, episode)."""
    if airspace is None:
        airspace = build_case(case, _geometry(config))
    if doda is None:
        doda = DODAConfig(**{**_doda_base(config), "mode": mode})
    sim: SimConfig = config.sim_for(density)
    key = case_key(case)
    world = World.from_seed(airspace, sim, substream(seed, "spawn", key, episode))
    return run_eval_episode(world, params, doda, decision_rngs(seed, key, episode), trace)


def _doda_base(config: ExperimentConfig) -> dict:
    d = config.doda
    return dict(m=d.m, n=d.n, noise_low=d.noise_low, noise_high=d.noise_high, p_drop=d.p_drop, per_pass=d.per_pass)


def evaluate(config: ExperimentConfig, params: pn.NetworkParams, cases, modes, densities, episodes: int,
             seed: int, checkpoint_hash: str, progress=None):
    """Evaluate every (case, density, mode) cell; returns (rows, per-episode records)."""
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    geometry = _geometry(config)
    base = _doda_base(config)
    rows, details = [], []
    for case in cases:
        airspace = build_case(case, geometry)
        for density in densities:
            for mode in modes:
                doda = DODAConfig(**{**base, "mode": mode})
                scores = []
                for ep in range(episodes):
                    res = eval_episode(config, params, case, mode, density, seed, ep, airspace, doda)
                    scores.append(res.score)
                    details.append({"case": case, "density": density, "mode": mode, "episode": ep,
                                    "score": res.score, "spawned": res.spawned,
                                    "conflicts": len(res.conflicts), "steps": res.steps})
                row = ResultRow.from_scores(case, density, mode, scores, seed, checkpoint_hash)
                rows.append(row)
                if progress is not None:
                    progress(row)
    return rows, details
