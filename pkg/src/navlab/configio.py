"""Run configuration: one JSON document, canonicalized and hashed.

Every defaulted field is materialized before hashing, so the hash pins the
complete effective configuration. Only two values may come from the
environment: NAVLAB_SEED overrides the seed, NAVLAB_OUT the output
directory; both apply before hashing.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .env import Difficulty, Episode, GridMap, load_map_file, read_episode_file, \
    sample_episodes
from .hier import HierConfig
from .policy.net import PolicyNetConfig
from .policy.ppo import TrainConfig
from .reward import Formulation, RevisitMode, RewardConfig

ENV_SEED = "NAVLAB_SEED"
ENV_OUT = "NAVLAB_OUT"


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


def reward_to_json(cfg: RewardConfig) -> dict:
    return {
        "d_s": cfg.d_s, "alpha_s_deg": cfg.alpha_s_deg,
        "gamma_slack": cfg.gamma_slack, "lambda_w": cfg.lambda_w,
        "lambda_rv": cfg.lambda_rv, "revisit_radius": cfg.revisit_radius,
        "revisit_mode": cfg.revisit_mode.value, "wsp_enabled": cfg.wsp_enabled,
        "formulation": cfg.formulation.value,
    }


def reward_from_json(obj: dict) -> RewardConfig:
    defaults = RewardConfig()
    try:
        return RewardConfig(
            d_s=float(obj.get("d_s", defaults.d_s)),
            alpha_s_deg=float(obj.get("alpha_s_deg", defaults.alpha_s_deg)),
            gamma_slack=float(obj.get("gamma_slack", defaults.gamma_slack)),
            lambda_w=float(obj.get("lambda_w", defaults.lambda_w)),
            lambda_rv=float(obj.get("lambda_rv", defaults.lambda_rv)),
            revisit_radius=float(obj.get("revisit_radius", defaults.revisit_radius)),
            revisit_mode=RevisitMode(obj.get("revisit_mode", defaults.revisit_mode.value)),
            wsp_enabled=bool(obj.get("wsp_enabled", defaults.wsp_enabled)),
            formulation=Formulation(obj.get("formulation", defaults.formulation.value)),
        )
    except ValueError as e:
        raise ConfigError(f"bad reward section: {e}") from e


def hier_to_json(cfg: HierConfig) -> dict:
    return {
        "k": cfg.k, "planner": cfg.planner, "planner_arg": cfg.planner_arg,
        "lookahead_m": cfg.lookahead_m, "stop_distance_m": cfg.stop_distance_m,
        "bridge_timeout_s": cfg.bridge_timeout_s, "history_len": cfg.history_len,
    }


def hier_from_json(obj: dict) -> HierConfig:
    defaults = HierConfig()
    try:
        return HierConfig(
            k=int(obj.get("k", defaults.k)),
            planner=str(obj.get("planner", defaults.planner)),
            planner_arg=obj.get("planner_arg", defaults.planner_arg),
            lookahead_m=float(obj.get("lookahead_m", defaults.lookahead_m)),
            stop_distance_m=float(obj.get("stop_distance_m", defaults.stop_distance_m)),
            bridge_timeout_s=float(obj.get("bridge_timeout_s", defaults.bridge_timeout_s)),
            history_len=int(obj.get("history_len", defaults.history_len)),
        )
    except ValueError as e:
        raise ConfigError(f"bad hier section: {e}") from e


def net_from_json(obj: dict) -> PolicyNetConfig:
    defaults = PolicyNetConfig()
    return PolicyNetConfig(**{
        k: int(obj.get(k, getattr(defaults, k)))
        for k in ("input_dim", "encoder_dim", "hidden_dim", "num_layers", "num_actions")
    })


def train_from_json(obj: dict) -> TrainConfig:
    defaults = TrainConfig()
    kwargs = {}
    for name in TrainConfig.__dataclass_fields__:
        default = getattr(defaults, name)
        value = obj.get(name, default)
        kwargs[name] = type(default)(value)
    return TrainConfig(**kwargs)


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "runs/out"
    maps: tuple[str, ...] = ()
    episodes: dict = field(default_factory=dict)        # eval episodes spec
    agent: dict = field(default_factory=lambda: {"type": "greedy"})
    reward: RewardConfig = field(default_factory=RewardConfig)
    hier: HierConfig = field(default_factory=HierConfig)
    net: PolicyNetConfig = field(default_factory=PolicyNetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    train_episodes: dict = field(default_factory=dict)
    probe_episodes: dict = field(default_factory=dict)

    def canonical(self) -> dict:
        return {
            "seed": self.seed,
            "out_dir": self.out_dir,
            "maps": list(self.maps),
            "episodes": self.episodes,
            "agent": self.agent,
            "reward": reward_to_json(self.reward),
            "hier": hier_to_json(self.hier),
            "net": self.net.to_json(),
            "train": self.train.to_json(),
            "train_episodes": self.train_episodes,
            "probe_episodes": self.probe_episodes,
        }

    def config_hash(self) -> str:
        return canonical_hash(self.canonical())


def canonical_hash(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def parse_run_config(obj: dict, environ: dict | None = None) -> RunConfig:
    environ = os.environ if environ is None else environ
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a JSON object")
    seed = int(obj.get("seed", 0))
    out_dir = str(obj.get("out_dir", "runs/out"))
    if ENV_SEED in environ:
        seed = int(environ[ENV_SEED])
    if ENV_OUT in environ:
        out_dir = str(environ[ENV_OUT])
    maps = obj.get("maps", obj.get("map", ()))
    if isinstance(maps, str):
        maps = (maps,)
    train_obj = dict(obj.get("train", {}))
    train_obj["seed"] = seed
    return RunConfig(
        seed=seed,
        out_dir=out_dir,
        maps=tuple(str(m) for m in maps),
        episodes=dict(obj.get("episodes", {})),
        agent=dict(obj.get("agent", {"type": "greedy"})),
        reward=reward_from_json(obj.get("reward", {})),
        hier=hier_from_json(obj.get("hier", {})),
        net=net_from_json(obj.get("net", {})),
        train=train_from_json({k: v for k, v in train_obj.items()
                               if k not in ("episodes", "probe_episodes")}),
        train_episodes=dict(train_obj.get("episodes", {})),
        probe_episodes=dict(train_obj.get("probe_episodes", {})),
    )


def load_run_config(path: str | Path, environ: dict | None = None) -> RunConfig:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    return parse_run_config(obj, environ)


def load_maps(cfg: RunConfig, base: Path | None = None) -> dict[str, GridMap]:
    if not cfg.maps:
        raise ConfigError("config names no maps")
    out = {}
    for p in cfg.maps:
        path = Path(p) if base is None else base / p
        gmap = load_map_file(path)
        out[gmap.name] = gmap
    return out


def resolve_episodes(spec: dict, maps: dict[str, GridMap],
                     base: Path | None = None) -> list[Episode]:
    """Episode spec: {"file": path} or {"sampler": {...}} applied per map."""
    if "file" in spec:
        path = Path(spec["file"]) if base is None else base / spec["file"]
        episodes = read_episode_file(path)
        for ep in episodes:
            if ep.map_ref not in maps:
                raise ConfigError(f"episode {ep.episode_id} references unknown "
                                  f"map {ep.map_ref!r}")
        return episodes
    if "sampler" in spec:
        s = spec["sampler"]
        strata = tuple(Difficulty(d) for d in s.get("strata", [d.value for d in Difficulty]))
        episodes = []
        for idx, gmap in enumerate(maps.values()):
            episodes.extend(sample_episodes(
                gmap,
                n_per_stratum=int(s["n_per_stratum"]),
                seed=(int(s.get("seed", 0)), idx),
                max_steps=int(s.get("max_steps", 500)),
                strata=strata,
            ))
        return episodes
    raise ConfigError(f"episode spec needs 'file' or 'sampler', got {sorted(spec)}")
