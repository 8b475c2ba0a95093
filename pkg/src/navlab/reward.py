"""Step rewards: goal shaping, sparse success bonus, wandering suppression.

Dense shaping per step is

    r_t = (d_{t-1} - d_t) + 1[d_t <= d_s] * (alpha_{t-1} - alpha_t) - gamma

with d the geodesic goal distance in metres and alpha the view-angle gap;
alpha is tracked in degrees but enters the arithmetic in radians. On the
Stop step a sparse bonus R_s = 5 * (1[d <= d_s] + 1[d <= d_s and
alpha <= alpha_s]) is added. Wandering suppression charges realized path
length and voxel revisits:

    r^wsp_t = -dl_t - dc_t,   dl_t = |p_t - p_{t-1}|,
    dc_t = lambda_rv * 1[revisit of voxel floor(p / s)]

and the total is r~_t = r_t + R_s + lambda_w * r^wsp_t. The Potential
formulation instead telescopes Phi_t = lambda_w * (l_t + C_t) + d_t +
alpha_t, which drops the proximity gate on the view term; everything else
is identical term by term.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

DEFAULT_GOAL_RADIUS_M = 1.0
DEFAULT_VIEW_CONE_DEG = 25.0
DEFAULT_SLACK = 0.01
DEFAULT_LAMBDA_W = 0.2
DEFAULT_LAMBDA_RV = 0.02
DEFAULT_REVISIT_RADIUS_M = 0.25
SUCCESS_UNIT = 5.0


class Formulation(Enum):
    Additive = "additive"
    Potential = "potential"


class RevisitMode(Enum):
    ReentryOnly = "reentry_only"
    AnyRepeat = "any_repeat"


class NonPositiveResolution(ValueError):
    """Voxel resolution must be strictly positive."""


class FormulationMismatch(ValueError):
    """Reward components computed under different formulations."""


@dataclass(frozen=True)
class RewardConfig:
    d_s: float = DEFAULT_GOAL_RADIUS_M
    alpha_s_deg: float = DEFAULT_VIEW_CONE_DEG
    gamma_slack: float = DEFAULT_SLACK
    lambda_w: float = DEFAULT_LAMBDA_W
    lambda_rv: float = DEFAULT_LAMBDA_RV
    revisit_radius: float = DEFAULT_REVISIT_RADIUS_M
    revisit_mode: RevisitMode = RevisitMode.ReentryOnly
    wsp_enabled: bool = True
    formulation: Formulation = Formulation.Additive

    def __post_init__(self):
        if self.d_s <= 0 or self.alpha_s_deg <= 0:
            raise ValueError("d_s and alpha_s_deg must be > 0")
        if self.revisit_radius <= 0:
            raise NonPositiveResolution("revisit_radius must be > 0")
        if self.lambda_w < 0 or self.lambda_rv < 0 or self.gamma_slack < 0:
            raise ValueError("lambda_w, lambda_rv, gamma_slack must be >= 0")


def quantize_voxel(p: tuple[float, ...], s: float) -> tuple[int, ...]:
    """Componentwise floor(p / s); true floor, so negatives round down."""
    if s <= 0:
        raise NonPositiveResolution(f"voxel resolution {s} must be > 0")
    return tuple(int(math.floor(c / s)) for c in p)


@dataclass
class RewardState:
    """Per-episode mutable accumulator; confined to one episode at a time."""

    d_prev: float
    alpha_prev_deg: float
    path_len: float = 0.0
    revisit_counter: float = 0.0
    visited: set = field(default_factory=set)
    last_voxel: tuple[int, ...] | None = None

    @classmethod
    def initial(cls, cfg: RewardConfig, d0: float, alpha0_deg: float,
                p0: tuple[float, ...]) -> "RewardState":
        v0 = quantize_voxel(p0, cfg.revisit_radius)
        return cls(d_prev=d0, alpha_prev_deg=alpha0_deg,
                   visited={v0}, last_voxel=v0)


@dataclass(frozen=True)
class ZerStepResult:
    distance_term: float
    view_term: float          # gated by d_t <= d_s, radians
    slack_term: float
    view_delta_rad: float     # ungated (alpha_prev - alpha_t) in radians
    formulation: Formulation


@dataclass(frozen=True)
class WspStepResult:
    path_penalty: float       # -dl_t, unweighted
    revisit_penalty: float    # -dc_t, unweighted
    r_wsp: float              # path_penalty + revisit_penalty
    revisit: bool
    formulation: Formulation


@dataclass(frozen=True)
class RewardBreakdown:
    """Seven named components; total is the sum of the other six."""

    distance_term: float
    view_term: float
    slack_term: float
    success_term: float
    wsp_path_term: float      # lambda_w-weighted
    wsp_revisit_term: float   # lambda_w-weighted
    total: float


def zer_step_reward(cfg: RewardConfig, d_prev: float, d_t: float,
                    alpha_prev_deg: float, alpha_t_deg: float) -> ZerStepResult:
    distance_term = d_prev - d_t
    view_delta_rad = math.radians(alpha_prev_deg - alpha_t_deg)
    view_term = view_delta_rad if d_t <= cfg.d_s else 0.0
    return ZerStepResult(
        distance_term=distance_term,
        view_term=view_term,
        slack_term=-cfg.gamma_slack,
        view_delta_rad=view_delta_rad,
        formulation=cfg.formulation,
    )


def success_reward(cfg: RewardConfig, d_t: float, alpha_t_deg: float,
                   stopped: bool) -> float:
    """Sparse bonus, granted only on the Stop step: 0, 5, or 10."""
    if not stopped:
        return 0.0
    near = d_t <= cfg.d_s
    aligned = near and alpha_t_deg <= cfg.alpha_s_deg
    return SUCCESS_UNIT * (float(near) + float(aligned))


def wsp_step(cfg: RewardConfig, state: RewardState, p_prev: tuple[float, ...],
             p_t: tuple[float, ...]) -> tuple[WspStepResult, RewardState]:
    """Charge realized displacement and voxel revisit; update the state.

    With wsp_enabled False this is a complete no-op returning zero terms, so
    a disabled breakdown matches the pure shaping reward bit for bit.
    """
    if not cfg.wsp_enabled:
        return WspStepResult(0.0, 0.0, 0.0, False, cfg.formulation), state
    dl = math.dist(p_prev, p_t)
    voxel = quantize_voxel(p_t, cfg.revisit_radius)
    if cfg.revisit_mode is RevisitMode.ReentryOnly:
        revisit = voxel in state.visited and voxel != state.last_voxel
    else:
        revisit = voxel in state.visited
    dc = cfg.lambda_rv if revisit else 0.0
    state.path_len += dl
    state.revisit_counter += dc
    state.visited.add(voxel)
    state.last_voxel = voxel
    return WspStepResult(
        path_penalty=-dl,
        revisit_penalty=-dc,
        r_wsp=-dl - dc,
        revisit=revisit,
        formulation=cfg.formulation,
    ), state


def total_step_reward(cfg: RewardConfig, zer: ZerStepResult, success_term: float,
                      wsp: WspStepResult) -> RewardBreakdown:
    """Combine components under the configured formulation.

    Additive keeps the proximity-gated view term; Potential replaces it with
    the ungated view delta, which is the only point where the two accepted
    formulations disagree.
    """
    if zer.formulation is not cfg.formulation or wsp.formulation is not cfg.formulation:
        raise FormulationMismatch(
            f"components built for {zer.formulation}/{wsp.formulation}, "
            f"config wants {cfg.formulation}")
    view = zer.view_term if cfg.formulation is Formulation.Additive else zer.view_delta_rad
    wsp_path = cfg.lambda_w * wsp.path_penalty
    wsp_revisit = cfg.lambda_w * wsp.revisit_penalty
    total = (zer.distance_term + view + zer.slack_term + success_term
             + wsp_path + wsp_revisit)
    return RewardBreakdown(
        distance_term=zer.distance_term,
        view_term=view,
        slack_term=zer.slack_term,
        success_term=success_term,
        wsp_path_term=wsp_path,
        wsp_revisit_term=wsp_revisit,
        total=total,
    )


def episode_reward_step(cfg: RewardConfig, state: RewardState,
                        p_prev: tuple[float, ...], p_t: tuple[float, ...],
                        d_t: float, alpha_t_deg: float,
                        stopped: bool) -> tuple[RewardBreakdown, WspStepResult, RewardState]:
    """One full reward step given fresh d_t / alpha_t measurements."""
    zer = zer_step_reward(cfg, state.d_prev, d_t, state.alpha_prev_deg, alpha_t_deg)
    succ = success_reward(cfg, d_t, alpha_t_deg, stopped)
    wsp, state = wsp_step(cfg, state, p_prev, p_t)
    breakdown = total_step_reward(cfg, zer, succ, wsp)
    state.d_prev = d_t
    state.alpha_prev_deg = alpha_t_deg
    return breakdown, wsp, state


def potential(cfg: RewardConfig, path_len: float, revisit_counter: float,
              d: float, alpha_deg: float) -> float:
    """Phi = lambda_w * (l + C) + d + alpha, alpha in radians."""
    return cfg.lambda_w * (path_len + revisit_counter) + d + math.radians(alpha_deg)


def wsp_schedule(iteration: int, total_iterations: int,
                 warmup_fraction: float = 0.5) -> bool:
    """Two-stage switch: suppression off before warmup_fraction of training,
    on from the boundary iteration (inclusive) onward."""
    if not 0.0 <= warmup_fraction <= 1.0:
        raise ValueError(f"warmup_fraction {warmup_fraction} outside [0, 1]")
    if total_iterations <= 0:
        raise ValueError("total_iterations must be > 0")
    return iteration >= warmup_fraction * total_iterations
