"""Episode execution: wires map, episode, reward accumulation, the
fast-slow controller, and an agent; optionally writes trajectory logs."""
from __future__ import annotations

import math
from collections import deque

import numpy as np

from . import env as E
from . import hier as H
from . import reward as R
from . import trajlog
from .env import Action, Episode, GridMap
from .metrics import EpisodeResult
from .policy.features import ObservationFeatures, build_features
from .policy.net import PolicyNet, policy_step


class EpisodeSession:
    """One episode in flight. Holds the per-episode distance field, reward
    state, plan, and pose history; confined to a single thread."""

    def __init__(self, gmap: GridMap, episode: Episode, reward_cfg: R.RewardConfig,
                 hier_cfg: H.HierConfig, controller: H.FastSlowController,
                 writer: trajlog.TrajectoryWriter | None = None):
        self.gmap = gmap
        self.ep = episode
        self.rcfg = reward_cfg
        self.hcfg = hier_cfg
        self.controller = controller
        self.writer = writer
        self.dist_field = gmap.distance_field(gmap.cell_of(episode.goal.x, episode.goal.y))
        self.reset()

    def reset(self) -> None:
        ep = self.ep
        self.pose = ep.start
        self.t = 0
        self.prev_action: Action | None = None
        self.done = False
        self.success = False
        self.path_len = 0.0
        self.revisit_steps = 0
        self.d = float(self.dist_field[self.gmap.cell_of(ep.start.x, ep.start.y)])
        self.alpha = E.view_angle_diff(ep.start, list(ep.goal_views))
        self.rstate = R.RewardState.initial(self.rcfg, self.d, self.alpha, ep.start.position)
        self.history: deque = deque(maxlen=self.hcfg.history_len)
        self.history.append((self.pose.x, self.pose.y, self.pose.heading))
        self.controller.reset()
        if self.writer:
            self.writer.write(trajlog.start_record(ep.episode_id, self.pose,
                                                   self.d, self.alpha, ep.goal))
        self.plan = self.controller.step(self._context())
        self._features: ObservationFeatures | None = None

    def _context(self) -> H.PlanningContext:
        patch = E.local_patch(self.gmap, self.pose)
        req = H.make_request(self.ep.episode_id, self.t, patch, self.pose,
                             self.ep.goal, self.d, list(self.history))
        return H.PlanningContext(request=req, pose=self.pose, goal=self.ep.goal,
                                 gmap=self.gmap, dist_field=self.dist_field)

    def features(self) -> ObservationFeatures:
        if self._features is None:
            self._features = build_features(
                self.gmap, self.pose, self.ep.goal, self.d, self.plan,
                self.t, self.hcfg.k, self.prev_action)
        return self._features

    def set_reward_config(self, cfg: R.RewardConfig) -> None:
        self.rcfg = cfg

    def step(self, action: Action) -> tuple[float, bool]:
        """Apply one action; returns (total reward, done)."""
        if self.done:
            raise RuntimeError("step on a finished episode")
        self.t += 1
        out = E.step(self.gmap, self.pose, action, self.t, self.ep.max_steps)
        p_prev = self.pose.position
        self.pose = out.pose
        self.d = float(self.dist_field[self.gmap.cell_of(self.pose.x, self.pose.y)])
        self.alpha = E.view_angle_diff(self.pose, list(self.ep.goal_views))
        stopped = action is Action.Stop
        breakdown, wsp_res, self.rstate = R.episode_reward_step(
            self.rcfg, self.rstate, p_prev, self.pose.position,
            self.d, self.alpha, stopped)
        self.path_len += math.dist(p_prev, self.pose.position)
        if wsp_res.revisit:
            self.revisit_steps += 1
        self.history.append((self.pose.x, self.pose.y, self.pose.heading))
        self.done = out.terminated
        self.success = stopped and self.d <= self.rcfg.d_s
        if self.writer:
            self.writer.write(trajlog.step_record(
                self.ep.episode_id, self.t, self.pose, action.value, self.d,
                self.alpha, breakdown, self.plan.token.value,
                self.plan.issued_at_step,
                R.quantize_voxel(self.pose.position, self.rcfg.revisit_radius),
                wsp_res.revisit, out.collided))
            if self.done:
                self.writer.write(trajlog.terminal_record(
                    self.ep.episode_id, self.success,
                    self.ep.shortest_path_length, self.path_len, self.t))
        self.prev_action = action
        self._features = None
        if not self.done and H.should_plan(self.t, self.hcfg.k):
            self.plan = self.controller.step(self._context())
        return breakdown.total, self.done

    def result(self) -> EpisodeResult:
        return EpisodeResult(
            episode_id=self.ep.episode_id,
            success=self.success,
            shortest_path_length=self.ep.shortest_path_length,
            path_length=self.path_len,
            steps=self.t,
            revisit_steps=self.revisit_steps,
            planner_calls=self.controller.planner_calls,
            difficulty=self.ep.difficulty,
        )


class GreedyAgent:
    """Plan-following baseline: turn toward the waypoint, move when clear,
    stop on StopNearGoal. No parameters, fully deterministic."""

    TURN_TOLERANCE_DEG = 15.0
    STOP_WITHIN_M = 0.9

    def reset(self) -> None:
        pass

    def act(self, session: EpisodeSession) -> Action:
        plan = session.plan
        pose = session.pose
        waypoint = plan.waypoint
        if plan.token is H.PlanToken.StopNearGoal and waypoint is not None:
            if math.dist(pose.position, waypoint) <= self.STOP_WITHIN_M:
                return Action.Stop
        if waypoint is None:
            return Action.MoveForward if self._forward_clear(session) else Action.TurnLeft
        bearing = math.degrees(math.atan2(waypoint[1] - pose.y, waypoint[0] - pose.x))
        rel = (bearing - pose.heading + 180.0) % 360.0 - 180.0
        if rel > self.TURN_TOLERANCE_DEG:
            return Action.TurnLeft
        if rel < -self.TURN_TOLERANCE_DEG:
            return Action.TurnRight
        if self._forward_clear(session):
            return Action.MoveForward
        return Action.TurnLeft

    @staticmethod
    def _forward_clear(session: EpisodeSession) -> bool:
        pose = session.pose
        h = math.radians(pose.heading)
        target = (pose.x + E.MOVE_STEP_M * math.cos(h),
                  pose.y + E.MOVE_STEP_M * math.sin(h))
        return session.gmap.segment_free(pose.position, target)


class PolicyAgent:
    """Wraps a PolicyNet; samples during training, argmax at evaluation."""

    def __init__(self, net: PolicyNet, mode: str = "argmax",
                 rng: np.random.Generator | None = None):
        if mode not in ("argmax", "sample"):
            raise ValueError(f"unknown mode {mode!r}")
        if mode == "sample" and rng is None:
            raise ValueError("sampling mode needs an rng")
        self.net = net
        self.mode = mode
        self.rng = rng
        self.hidden = net.zero_hidden(1)

    def reset(self) -> None:
        self.hidden = self.net.zero_hidden(1)

    def act(self, session: EpisodeSession) -> Action:
        probs, _, self.hidden = policy_step(self.net, session.features(), self.hidden)
        if self.mode == "argmax":
            idx = int(np.argmax(probs))
        else:
            idx = int(self.rng.choice(len(probs), p=probs))
        return E.ACTIONS[idx]


def run_episode(gmap: GridMap, episode: Episode, reward_cfg: R.RewardConfig,
                hier_cfg: H.HierConfig, agent, planner=None,
                writer: trajlog.TrajectoryWriter | None = None) -> EpisodeResult:
    controller = H.FastSlowController(hier_cfg, planner)
    session = EpisodeSession(gmap, episode, reward_cfg, hier_cfg, controller, writer)
    agent.reset()
    while not session.done:
        session.step(agent.act(session))
    return session.result()


def evaluate(maps: dict[str, GridMap], episodes: list[Episode],
             reward_cfg: R.RewardConfig, hier_cfg: H.HierConfig, agent,
             planner=None,
             writer: trajlog.TrajectoryWriter | None = None) -> list[EpisodeResult]:
    """Run the agent over an episode list; a shared planner instance may be
    passed so bridge subprocesses survive across episodes."""
    results = []
    for ep in episodes:
        results.append(run_episode(maps[ep.map_ref], ep, reward_cfg, hier_cfg,
                                   agent, planner, writer))
    return results


def replay_rewards(log: trajlog.EpisodeLog,
                   reward_cfg: R.RewardConfig) -> list[R.RewardBreakdown]:
    """Recompute every step's reward components from the logged poses and
    distances alone; must reproduce the logged values bit-exactly."""
    p_prev = (log.start["x"], log.start["y"])
    state = R.RewardState.initial(reward_cfg, log.start["d_t"],
                                  log.start["alpha_t_deg"], p_prev)
    out = []
    for rec in log.steps:
        p_t = (rec["x"], rec["y"])
        breakdown, _, state = R.episode_reward_step(
            reward_cfg, state, p_prev, p_t, rec["d_t"], rec["alpha_t_deg"],
            rec["action"] == Action.Stop.value)
        out.append(breakdown)
        p_prev = p_t
    return out
