"""Episode runtime: one agent exploring one scene.

Couples the simulator, the scene graphs, the reward shaping and the
observation featurizer into a step interface. Each environment owns its
mutable state (pose, global graph, stagnation tracker, counters); all
underlying queries are pure, so identical seeds reproduce identical
episodes bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .actions import ActionChoice, ActionSpec, Idle, Motion, Stop, decode
from .features import (Observation, ObsConfig, SlotIndex, StagnationConfig,
                       StagnationState, build_observation, graph_vector,
                       obs_layout, stagnation_step)
from .reward import RewardConfig, StepEvents, potential, step_reward
from .ssg import (GlobalGraph, VisibilityParams, graph_metrics, position_key,
                  sense, update_global)
from .world import Pose, SceneSpec, raycast_scan, sample_start_pose, step_kinematics

EPISODE_BUDGET = 40  # steps


@dataclass
class EnvConfig:
    vis: VisibilityParams = field(default_factory=VisibilityParams)
    reward: RewardConfig = field(default_factory=RewardConfig)
    stagnation: StagnationConfig = field(default_factory=StagnationConfig)
    obs: ObsConfig = field(default_factory=ObsConfig)
    budget: int = EPISODE_BUDGET


@dataclass
class StepResult:
    obs: Observation
    reward: float
    done: bool
    stopped: bool
    truncated: bool
    events: StepEvents
    metrics: object


class ExploreEnv:
    """Single-scene exploration episode with shaped rewards."""

    def __init__(self, scene: SceneSpec, action_spec: ActionSpec, cfg: EnvConfig,
                 rng: Optional[np.random.Generator] = None):
        self.scene = scene
        self.action_spec = action_spec
        self.cfg = cfg
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.slot_index = SlotIndex.for_scene(scene, cfg.obs)
        self.layout = obs_layout(cfg.obs, action_spec)
        if cfg.stagnation.d_sg != cfg.obs.slots:
            raise ValueError("stagnation dimension must equal the slot count")
        self.pose: Pose = None  # set by reset
        self.graph: GlobalGraph = None
        self.stag: StagnationState = None
        self.t = 0
        self.s_prev = 0.0
        self.steps_since_exploration = 0
        self.last_action: Optional[ActionChoice] = None
        self.path_length = 0.0
        self.translations = 0
        self.failed_translations = 0
        self.episode_return = 0.0
        self.ended_by_truncation = False
        self.poses: list[Pose] = []
        self._obs: Observation = None

    # -- episode control ----------------------------------------------------

    def reset(self, start: Optional[Pose] = None) -> Observation:
        self.pose = start if start is not None else sample_start_pose(self.scene, self.rng)
        self.graph = GlobalGraph()
        self.stag = StagnationState()
        self.t = 0
        self.steps_since_exploration = 0
        self.last_action = None
        self.path_length = 0.0
        self.translations = 0
        self.failed_translations = 0
        self.episode_return = 0.0
        self.ended_by_truncation = False
        self.poses = [self.pose]
        self._sensed = self._observe()
        m = graph_metrics(self.graph, self.scene, self.cfg.vis)
        self.s_prev = potential(m, 0, self.cfg.reward)
        self._obs = self._build_obs(m)
        return self._obs

    def _observe(self):
        vis, values, local = sense(self.scene, self.pose, self.cfg.obs.fov, self.cfg.vis)
        update_global(self.graph, local, position_key(self.pose.x, self.pose.y))
        return vis, values

    def _build_obs(self, metrics) -> Observation:
        vis, local_values = self._sensed
        gvec = graph_vector(self.graph, self.slot_index.ids, self.cfg.obs.slots)
        self.stag, stag_raw = stagnation_step(self.stag, gvec, self.cfg.stagnation)
        scan = None
        if self.cfg.obs.depth:
            scan = raycast_scan(self.scene, self.pose, self.cfg.obs.n_rays,
                                self.cfg.obs.max_range, self.cfg.obs.fov).distances
        return build_observation(
            self.layout, self.slot_index, gvec, local_values, vis, metrics.node_recall,
            self.last_action, stag_raw, scan, self.cfg.obs, self.action_spec,
        )

    def step(self, choice: ActionChoice) -> StepResult:
        if self.pose is None:
            raise RuntimeError("reset() must be called before step()")
        decoded = decode(choice, self.action_spec)
        self.t += 1
        stopped = isinstance(decoded, Stop)
        nodes_before = len(self.graph.nodes)

        target = actual = 0.0
        move_failed = False
        is_translation = False
        if isinstance(decoded, Motion):
            mr = step_kinematics(self.scene, self.pose, decoded.rotation, decoded.length)
            self.pose = mr.new_pose
            self.poses.append(self.pose)
            target, actual, move_failed = mr.target_dist, mr.actual_dist, mr.move_failed
            is_translation = decoded.length > 0
            if is_translation:
                self.translations += 1
                if move_failed:
                    self.failed_translations += 1
            self.path_length += actual
            self._sensed = self._observe()

        new_object = len(self.graph.nodes) > nodes_before
        self.steps_since_exploration = 0 if new_object else self.steps_since_exploration + 1

        events = StepEvents(
            target_dist=target,
            actual_dist=actual,
            move_failed=move_failed,
            new_object_discovered=new_object,
            action_was_stop=stopped,
            steps_since_exploration=self.steps_since_exploration,
            is_translation=is_translation,
        )
        m = graph_metrics(self.graph, self.scene, self.cfg.vis)
        s_now = potential(m, self.t, self.cfg.reward)
        r = step_reward(self.s_prev, s_now, events, self.cfg.reward)
        self.s_prev = s_now
        self.episode_return += r

        truncated = (not stopped) and self.t >= self.cfg.budget
        done = stopped or truncated
        if truncated:
            self.ended_by_truncation = True
        self.last_action = choice
        self._obs = self._build_obs(m)
        return StepResult(obs=self._obs, reward=r, done=done, stopped=stopped,
                          truncated=truncated, events=events, metrics=m)

    # -- bookkeeping ---------------------------------------------------------

    @property
    def observation(self) -> Observation:
        return self._obs

    def metrics(self):
        return graph_metrics(self.graph, self.scene, self.cfg.vis)

    def move_success_rate(self) -> Optional[float]:
        if self.translations == 0:
            return None
        return 1.0 - self.failed_translations / self.translations

    def episode_stats(self) -> dict:
        m = self.metrics()
        return {
            "node_recall": m.node_recall,
            "edge_recall": m.edge_recall,
            "return": self.episode_return,
            "length": self.t,
            "move_success_rate": self.move_success_rate(),
            "path_length": self.path_length,
            "translations": self.translations,
            "failed_translations": self.failed_translations,
            "truncated": self.ended_by_truncation,
        }
