"""Evaluation protocol, aggregate reporting and the composite objective.

Evaluation runs greedy (argmax) episodes on held-out scenes and never
mutates training state. Move Success Rate counts translation steps only;
episodes without any translation report it as absent.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .actions import StageMask, full_mask
from .env import EnvConfig, ExploreEnv
from .policynet import Policy, forward_step, greedy_choice
from .world import Pose, SceneSpec


@dataclass
class EpisodeRecord:
    scene_id: str
    node_recall: float
    edge_recall: float
    episodic_return: float
    episode_length: int
    move_success_rate: Optional[float]
    path_length: float
    trajectory: list  # [(x, y, heading), ...]


@dataclass
class EvalReport:
    episodes: list
    per_scene: dict
    aggregate: dict


def _aggregate(records: list) -> dict:
    def mean_std(key):
        vals = [getattr(r, key) for r in records]
        return float(np.mean(vals)), float(np.std(vals))

    msr = [r.move_success_rate for r in records if r.move_success_rate is not None]
    nr_mean, nr_std = mean_std("node_recall")
    return {
        "node_recall_mean": nr_mean,
        "node_recall_std": nr_std,
        "edge_recall_mean": mean_std("edge_recall")[0],
        "episodic_return_mean": mean_std("episodic_return")[0],
        "episode_length_mean": mean_std("episode_length")[0],
        "move_success_rate_mean": float(np.mean(msr)) if msr else None,
        "path_length_mean": mean_std("path_length")[0],
        "episodes": len(records),
    }


def evaluate(policy: Policy, scenes: list, env_cfg: EnvConfig,
             episodes_per_scene: int = 10, seed: int = 0,
             mask: Optional[StageMask] = None) -> EvalReport:
    """Greedy evaluation: episodes_per_scene episodes per held-out scene with
    seeded start poses; reports per-scene and pooled aggregates."""
    mask = mask if mask is not None else full_mask(policy.action_spec)
    records = []
    for s_i, scene in enumerate(scenes):
        rng = np.random.default_rng(np.random.SeedSequence((seed, s_i)))
        env = ExploreEnv(scene, policy.action_spec, env_cfg, rng=rng)
        for _ in range(episodes_per_scene):
            env.reset()
            h = policy.initial_state(1)
            done = False
            while not done:
                out, h = forward_step(policy.params, env.observation.pack()[None], h, policy.net)
                choice = greedy_choice(out, 0, mask, policy.net)
                res = env.step(choice)
                done = res.done
            stats = env.episode_stats()
            records.append(EpisodeRecord(
                scene_id=scene.scene_id,
                node_recall=stats["node_recall"],
                edge_recall=stats["edge_recall"],
                episodic_return=stats["return"],
                episode_length=stats["length"],
                move_success_rate=stats["move_success_rate"],
                path_length=stats["path_length"],
                trajectory=[(p.x, p.y, p.heading) for p in env.poses],
            ))
    per_scene = {}
    for scene in scenes:
        recs = [r for r in records if r.scene_id == scene.scene_id]
        per_scene[scene.scene_id] = _aggregate(recs)
    return EvalReport(episodes=records, per_scene=per_scene, aggregate=_aggregate(records))


def report_to_dict(report: EvalReport) -> dict:
    return {
        "aggregate": report.aggregate,
        "per_scene": report.per_scene,
        "episodes": [
            {
                "scene_id": r.scene_id,
                "node_recall": r.node_recall,
                "edge_recall": r.edge_recall,
                "episodic_return": r.episodic_return,
                "episode_length": r.episode_length,
                "move_success_rate": r.move_success_rate,
                "path_length": r.path_length,
                "trajectory": [{"x": x, "y": y, "heading": hd} for x, y, hd in r.trajectory],
            }
            for r in report.episodes
        ],
    }


def save_report(report: EvalReport, path) -> None:
    with open(path, "w") as f:
        json.dump(report_to_dict(report), f, indent=2)
        f.write("\n")


def load_report(path) -> dict:
    with open(path) as f:
        return json.load(f)


# ---------------------------------------------------------------------------
# Composite objective over a recent training window
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WindowStats:
    mean_node_recall: float
    mean_collision_rate: float
    truncation_rate: float
    mean_episode_length: float


def objective_J(stats: WindowStats) -> float:
    """Scalar training objective: completeness minus light penalties for
    collisions, truncations and overlong episodes; clipped below at -100."""
    j = (
        stats.mean_node_recall
        - 0.20 * stats.mean_collision_rate
        - 0.10 * stats.truncation_rate
        - 0.01 * max(0.0, stats.mean_episode_length - 25.0)
    )
    return max(j, -100.0)


def window_stats_from_log(csv_path, window: int = 50) -> WindowStats:
    """Window statistics from the trailing rows of a training CSV log."""
    with open(csv_path) as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise ValueError(f"empty training log: {csv_path}")
    tail = rows[-window:]

    def mean(key):
        vals = [float(r[key]) for r in tail if r.get(key) not in (None, "")]
        return float(np.mean(vals)) if vals else 0.0

    return WindowStats(
        mean_node_recall=mean("node_recall"),
        mean_collision_rate=mean("collision_rate"),
        truncation_rate=mean("truncation_rate"),
        mean_episode_length=mean("ep_len"),
    )
