"""Training loop: vectorized rollout workers, GAE, clipped-surrogate
updates, the two-stage wandering-suppression schedule, probe evaluation,
CSV curves, and resumable checkpoints."""
from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .. import hier as H
from ..env import ACTIONS, Episode, GridMap
from ..metrics import spl, sr
from ..reward import RewardConfig, wsp_schedule
from ..rollout import EpisodeSession, PolicyAgent, evaluate
from .net import NonFiniteActivation, PolicyNet, PolicyNetConfig, log_softmax, softmax
from .ppo import Adam, NonFiniteGradient, TrainConfig, gae_advantages, \
    normalize_advantages, ppo_update

CURVE_COLUMNS = ("iteration", "env_steps", "mean_reward", "probe_SR",
                 "probe_SPL", "wsp_enabled")


class DivergenceDetected(RuntimeError):
    """Two consecutive updates produced non-finite losses or activations."""


@dataclass
class TrainResult:
    checkpoint_path: Path
    curve_path: Path
    iterations: int
    env_steps: int
    final_probe_sr: float
    final_probe_spl: float


def save_checkpoint(path: str | Path, net: PolicyNet, iteration: int, seed: int,
                    config_hash: str, adam: Adam | None = None) -> None:
    obj = {
        "format_version": 1,
        "config_hash": config_hash,
        "seed": seed,
        "iteration": iteration,
        "net_config": net.cfg.to_json(),
        "dtype": "<f8",
        "params_b64": base64.b64encode(net.params.astype("<f8").tobytes()).decode(),
    }
    if adam is not None:
        obj["adam"] = {
            "t": adam.t,
            "m_b64": base64.b64encode(adam.m.astype("<f8").tobytes()).decode(),
            "v_b64": base64.b64encode(adam.v.astype("<f8").tobytes()).decode(),
        }
    Path(path).write_text(json.dumps(obj, sort_keys=True))


def load_checkpoint(path: str | Path) -> tuple[PolicyNet, dict]:
    obj = json.loads(Path(path).read_text())
    cfg = PolicyNetConfig.from_json(obj["net_config"])
    params = np.frombuffer(base64.b64decode(obj["params_b64"]), dtype="<f8").copy()
    return PolicyNet(cfg, params), obj


class _Worker:
    """One rollout stream: an EpisodeSession cycling through the pool."""

    def __init__(self, maps: dict[str, GridMap], pool: list[Episode],
                 reward_cfg: RewardConfig, hier_cfg: H.HierConfig,
                 rng: np.random.Generator):
        self.maps = maps
        self.pool = pool
        self.hier_cfg = hier_cfg
        self.rng = rng
        self.reward_cfg = reward_cfg
        self.episode_returns: list[float] = []
        self._ret = 0.0
        self.session = self._new_session()

    def _new_session(self) -> EpisodeSession:
        ep = self.pool[int(self.rng.integers(len(self.pool)))]
        controller = H.FastSlowController(self.hier_cfg)
        return EpisodeSession(self.maps[ep.map_ref], ep, self.reward_cfg,
                              self.hier_cfg, controller)

    def set_wsp(self, enabled: bool) -> None:
        self.reward_cfg = replace(self.reward_cfg, wsp_enabled=enabled)
        self.session.set_reward_config(self.reward_cfg)

    def obs(self) -> np.ndarray:
        return self.session.features().fused()

    def step(self, action_idx: int) -> tuple[float, bool]:
        r, done = self.session.step(ACTIONS[action_idx])
        self._ret += r
        if done:
            self.episode_returns.append(self._ret)
            self._ret = 0.0
            self.session = self._new_session()
        return r, done


def _sample_actions(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorized categorical draw, one per row."""
    u = rng.random(probs.shape[0])
    cum = np.cumsum(probs, axis=1)
    return (u[:, None] > cum).sum(axis=1).clip(0, probs.shape[1] - 1)


def _probe(net: PolicyNet, maps: dict[str, GridMap], episodes: list[Episode],
           reward_cfg: RewardConfig, hier_cfg: H.HierConfig) -> tuple[float, float]:
    agent = PolicyAgent(net, mode="argmax")
    results = evaluate(maps, episodes, reward_cfg, hier_cfg, agent)
    return sr(results), spl(results)


def train(maps: dict[str, GridMap], train_episodes: list[Episode],
          probe_episodes: list[Episode], reward_cfg: RewardConfig,
          hier_cfg: H.HierConfig, net_cfg: PolicyNetConfig, cfg: TrainConfig,
          out_dir: str | Path, config_hash: str = "",
          resume_from: str | Path | None = None) -> TrainResult:
    """Run the full training loop; deterministic for a fixed seed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    curve_path = out_dir / "curve.csv"
    checkpoint_path = out_dir / "checkpoint.json"

    steps_per_iter = cfg.rollout_len * cfg.n_workers
    iterations = max(1, math.ceil(cfg.total_env_steps / steps_per_iter))

    start_iteration = 0
    adam = None
    if resume_from is not None:
        net, meta = load_checkpoint(resume_from)
        start_iteration = int(meta["iteration"])
        rng = np.random.default_rng((cfg.seed, start_iteration))
        adam = Adam(net.num_params, cfg.learning_rate)
        if "adam" in meta:
            adam.t = int(meta["adam"]["t"])
            adam.m = np.frombuffer(base64.b64decode(meta["adam"]["m_b64"]), dtype="<f8").copy()
            adam.v = np.frombuffer(base64.b64decode(meta["adam"]["v_b64"]), dtype="<f8").copy()
        curve_mode = "a" if curve_path.exists() else "w"
    else:
        net = PolicyNet.init(net_cfg, cfg.seed)
        rng = np.random.default_rng(cfg.seed)
        adam = Adam(net.num_params, cfg.learning_rate)
        curve_mode = "w"

    wsp_on = wsp_schedule(start_iteration, iterations, cfg.wsp_warmup_fraction)
    workers = [_Worker(maps, train_episodes, replace(reward_cfg, wsp_enabled=wsp_on),
                       hier_cfg, rng) for _ in range(cfg.n_workers)]
    W = cfg.n_workers
    T = cfg.rollout_len
    hidden = net.zero_hidden(W)
    obs = np.stack([w.obs() for w in workers])

    curve = open(curve_path, curve_mode)
    if curve_mode == "w":
        curve.write(f"# config_hash={config_hash}\n")
        curve.write(",".join(CURVE_COLUMNS) + "\n")

    divergent_streak = 0
    env_steps = start_iteration * steps_per_iter
    probe_sr = probe_spl = float("nan")
    for it in range(start_iteration, iterations):
        # the warm-up schedule only ever switches WSP on when the base reward
        # config has it enabled at all; an ablation arm stays off throughout
        wsp_on = reward_cfg.wsp_enabled and wsp_schedule(
            it, iterations, cfg.wsp_warmup_fraction)
        for w in workers:
            w.set_wsp(wsp_on)
        X = np.empty((T, W, net.cfg.input_dim))
        actions = np.empty((T, W), dtype=np.int64)
        logp_old = np.empty((T, W))
        rewards = np.empty((T, W))
        dones = np.empty((T, W))
        resets = np.zeros((T, W))
        values = np.empty((T + 1, W))
        h0 = hidden.copy()
        for t in range(T):
            if t > 0:
                resets[t] = dones[t - 1]
            X[t] = obs
            logits, value, hidden = net.step(obs, hidden)
            values[t] = value
            probs = softmax(logits)
            act = _sample_actions(probs, rng)
            actions[t] = act
            logp_old[t] = log_softmax(logits)[np.arange(W), act]
            for i, w in enumerate(workers):
                r, done = w.step(int(act[i]))
                rewards[t, i] = r
                dones[t, i] = float(done)
                if done:
                    hidden[:, i, :] = 0.0
            obs = np.stack([w.obs() for w in workers])
        _, values[T], _ = net.step(obs, hidden)
        env_steps += T * W

        adv, returns = gae_advantages(rewards, values, dones, cfg.discount,
                                      cfg.gae_lambda)
        batch = {
            "X": X, "h0": h0, "resets": resets, "actions": actions,
            "logp_old": logp_old, "adv": normalize_advantages(adv),
            "returns": returns,
        }
        try:
            ppo_update(net, batch, cfg, adam, rng)
            divergent_streak = 0
        except (NonFiniteActivation, NonFiniteGradient) as e:
            divergent_streak += 1
            if divergent_streak >= 2:
                raise DivergenceDetected(f"consecutive non-finite updates: {e}") from e

        is_probe = (it % cfg.probe_every == 0) or (it == iterations - 1)
        if is_probe and probe_episodes:
            probe_sr, probe_spl = _probe(net, maps, probe_episodes, reward_cfg,
                                         hier_cfg)
            probe_cols = [repr(probe_sr), repr(probe_spl)]
        else:
            probe_cols = ["", ""]
        curve.write(",".join([
            str(it), str(env_steps), repr(float(rewards.mean())),
            probe_cols[0], probe_cols[1], "true" if wsp_on else "false",
        ]) + "\n")
    curve.close()
    save_checkpoint(checkpoint_path, net, iterations, cfg.seed, config_hash, adam)
    if math.isnan(probe_sr) and probe_episodes:
        probe_sr, probe_spl = _probe(net, maps, probe_episodes, reward_cfg, hier_cfg)
    return TrainResult(
        checkpoint_path=checkpoint_path,
        curve_path=curve_path,
        iterations=iterations,
        env_steps=env_steps,
        final_probe_sr=probe_sr,
        final_probe_spl=probe_spl,
    )
