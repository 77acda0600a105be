"""Potential-based reward shaping plus sparse event terms.

The dense signal is the temporal difference of a scalar progress potential
combining graph completeness, mean visibility, viewpoint diversity and a
time penalty. Event terms reward successful translation and first-time
discoveries, penalise blocked motion, and pay a stop bonus once exploration
has stagnated for a minimum number of steps.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ssg import MetricsSnapshot


@dataclass(frozen=True)
class RewardConfig:
    lambda_node: float = 0.1
    lambda_p: float = 0.5
    lambda_d: float = 0.001
    rho: float = 0.001
    collision_penalty: float = -0.02
    move_bonus: float = 0.005
    exploration_bonus: float = 0.01
    stop_bonus: float = 0.05
    stop_min_steps: int = 5
    node_threshold: float = 0.8


@dataclass(frozen=True)
class StepEvents:
    target_dist: float
    actual_dist: float
    move_failed: bool
    new_object_discovered: bool
    action_was_stop: bool
    steps_since_exploration: int
    is_translation: bool  # commanded length > 0


def potential(m: MetricsSnapshot, t: int, cfg: RewardConfig) -> float:
    """Progress potential at step t (edge precision is 1 by construction)."""
    return (
        cfg.lambda_node * (m.node_recall + cfg.lambda_p * m.node_precision)
        + m.edge_recall
        + cfg.lambda_p * m.edge_precision
        + cfg.lambda_d * m.diversity
        - cfg.rho * t
    )


def step_reward(s_prev: float, s_now: float, ev: StepEvents, cfg: RewardConfig) -> float:
    r = s_now - s_prev
    if ev.is_translation and (ev.move_failed or ev.actual_dist < ev.target_dist - 0.05):
        r += cfg.collision_penalty
    if ev.actual_dist > 0.05:
        r += cfg.move_bonus
    if ev.new_object_discovered:
        r += cfg.exploration_bonus
    if ev.action_was_stop and ev.steps_since_exploration >= cfg.stop_min_steps:
        r += cfg.stop_bonus
    return r
