"""Executor observation features.

Fused layout, width 138: egocentric 11x11 occupancy patch flattened (121) |
goal vector (bearing sin, bearing cos, clipped normalized geodesic
distance) (3) | plan feature (10) | previous-action one-hot (4).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..env import ACTIONS, Action, GridMap, Pose, local_patch
from ..hier import PLAN_FEATURE_WIDTH, Plan, plan_feature
from .net import ShapeMismatch

PATCH_WIDTH = 121
GOAL_WIDTH = 3
PREV_ACTION_WIDTH = 4
FUSED_WIDTH = PATCH_WIDTH + GOAL_WIDTH + PLAN_FEATURE_WIDTH + PREV_ACTION_WIDTH
DISTANCE_NORM_M = 10.0   # upper edge of the hardest stratum


@dataclass(frozen=True)
class ObservationFeatures:
    ego_patch: np.ndarray     # (11, 11) of 0/1
    goal_vec: np.ndarray      # (3,)
    plan_feat: np.ndarray     # (10,)
    prev_action: np.ndarray   # (4,)

    def fused(self) -> np.ndarray:
        return np.concatenate([
            self.ego_patch.reshape(-1).astype(float),
            self.goal_vec, self.plan_feat, self.prev_action,
        ])


def fuse(ego_patch: np.ndarray, goal_vec: np.ndarray, plan_feat: np.ndarray,
         prev_action: np.ndarray) -> ObservationFeatures:
    ego_patch = np.asarray(ego_patch)
    goal_vec = np.asarray(goal_vec, dtype=float)
    plan_feat = np.asarray(plan_feat, dtype=float)
    prev_action = np.asarray(prev_action, dtype=float)
    if ego_patch.shape != (11, 11):
        raise ShapeMismatch(f"ego_patch shape {ego_patch.shape}, want (11, 11)")
    if goal_vec.shape != (GOAL_WIDTH,):
        raise ShapeMismatch(f"goal_vec shape {goal_vec.shape}, want ({GOAL_WIDTH},)")
    if plan_feat.shape != (PLAN_FEATURE_WIDTH,):
        raise ShapeMismatch(f"plan_feat shape {plan_feat.shape}, want ({PLAN_FEATURE_WIDTH},)")
    if prev_action.shape != (PREV_ACTION_WIDTH,):
        raise ShapeMismatch(f"prev_action shape {prev_action.shape}, want ({PREV_ACTION_WIDTH},)")
    if not set(np.unique(ego_patch)).issubset({0, 1}):
        raise ValueError("ego_patch entries must be 0/1")
    for arr, name in ((goal_vec, "goal_vec"), (plan_feat, "plan_feat"),
                      (prev_action, "prev_action")):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} contains non-finite entries")
    return ObservationFeatures(ego_patch, goal_vec, plan_feat, prev_action)


def goal_vector(pose: Pose, goal: Pose, geodesic_d: float) -> np.ndarray:
    bearing = math.atan2(goal.y - pose.y, goal.x - pose.x) - math.radians(pose.heading)
    return np.array([
        math.sin(bearing),
        math.cos(bearing),
        min(geodesic_d / DISTANCE_NORM_M, 1.0),
    ])


def prev_action_onehot(action: Action | None) -> np.ndarray:
    onehot = np.zeros(PREV_ACTION_WIDTH)
    if action is not None:
        onehot[ACTIONS.index(action)] = 1.0
    return onehot


def build_features(gmap: GridMap, pose: Pose, goal: Pose, geodesic_d: float,
                   plan: Plan, step: int, k: int,
                   prev_action: Action | None) -> ObservationFeatures:
    return fuse(
        local_patch(gmap, pose),
        goal_vector(pose, goal, geodesic_d),
        plan_feature(plan, pose, step, k),
        prev_action_onehot(prev_action),
    )
