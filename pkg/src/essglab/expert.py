"""Expert demonstration generation for imitation learning.

Pipeline per scene: map every reachable grid viewpoint to the objects it
sees, greedily pick viewpoints until the modeled coverage target is met,
order them into a short tour with ant-colony optimization, then roll out a
short-horizon planner in the compact 16-action space that scores one-step
lookaheads by visibility gain, discoveries, viewpoint novelty and progress
towards the current tour target. Every stored trajectory ends with Stop and
replays exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .actions import SH16, ActionSpec, make_action_spec
from .ssg import (GlobalGraph, VisibilityParams, observe_local, position_key,
                  update_global)
from .world import Pose, SceneSpec, step_kinematics, viewpoint_grid


@dataclass(frozen=True)
class ExpertConfig:
    grid_spacing: float = 0.5
    coverage_target: float = 0.95
    t_max: int = 80
    stall_window: int = 5
    w_gain: float = 1.0
    w_discovery: float = 0.5
    w_new_viewpoint: float = 0.1
    w_progress: float = 0.2
    target_reach_dist: float = 0.3
    fov: float = 90.0
    aco_ants: int = 20
    aco_iterations: int = 100
    aco_alpha: float = 1.0
    aco_beta: float = 2.0
    aco_evaporation: float = 0.5


@dataclass
class Demonstration:
    scene_id: str
    start: Pose
    actions: list          # SH16 atom indices; last entry is the Stop atom
    poses: Optional[list] = None  # pose before each action (filled on generation)


STOP_ATOM = 0  # (rotation 0, length 0) in the single-head space


def viewpoint_object_map(scene: SceneSpec, grid: list, vis: VisibilityParams,
                         fov: float = 90.0) -> dict:
    """Pose -> {object id: local soft visibility} for every grid viewpoint."""
    return {pose: dict(observe_local(scene, pose, fov, vis).nodes) for pose in grid}


def coverage(vg: np.ndarray, tau: float) -> float:
    return float(np.mean(vg >= tau)) if len(vg) else 1.0


def greedy_select(scene: SceneSpec, vp_map: dict, tau: float, target: float) -> list:
    """Viewpoints chosen greedily by aggregated visibility gain over objects
    still below the discovery threshold, honouring the one-update-per-cell
    redundancy rule. Ties break to the lowest viewpoint index."""
    ids = scene.geometry.ids
    idx = {oid: i for i, oid in enumerate(ids)}
    n = len(ids)
    poses = list(vp_map.keys())
    if not poses or n == 0:
        return []
    vmat = np.zeros((len(poses), n))
    for v, pose in enumerate(poses):
        for oid, val in vp_map[pose].items():
            vmat[v, idx[oid]] = val
    cells = [position_key(p.x, p.y) for p in poses]
    cell_ids = {}
    cell_of = np.array([cell_ids.setdefault(c, len(cell_ids)) for c in cells])
    used = np.zeros((len(cell_ids), n), dtype=bool)

    vg = np.zeros(n)
    chosen = []
    while coverage(vg, tau) < target:
        eff = vmat * ~used[cell_of]
        below = vg < tau
        gains = eff[:, below] @ (1.0 - vg[below])
        best = int(np.argmax(gains))
        if gains[best] < 1e-6:
            break
        pose = poses[best]
        row = eff[best]
        seen = row > 0
        vg[seen] = 1.0 - (1.0 - vg[seen]) * (1.0 - row[seen])
        used[cell_of[best], seen] = True
        chosen.append(pose)
    return chosen


# ---------------------------------------------------------------------------
# Ant-colony tour ordering
# ---------------------------------------------------------------------------


def tour_length(points: np.ndarray, order) -> float:
    order = list(order)
    total = 0.0
    for i in range(len(order)):
        a = points[order[i]]
        b = points[order[(i + 1) % len(order)]]
        total += math.dist(a, b)
    return total


def aco_tour(points, rng: np.random.Generator, start: Optional[tuple] = None,
             cfg: ExpertConfig = ExpertConfig()) -> list:
    """Heuristic short cyclic tour over points via ant-colony optimization;
    rotated to begin at the point nearest `start` when given."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        raise ValueError("aco_tour needs at least one point")
    if n == 1:
        return [0]
    dist = np.hypot(pts[:, None, 0] - pts[None, :, 0], pts[:, None, 1] - pts[None, :, 1])
    if n == 2:
        order = [0, 1]
    else:
        heuristic = 1.0 / (dist + 1e-10)
        np.fill_diagonal(heuristic, 0.0)
        pher = np.ones((n, n))
        best_order, best_len = None, math.inf
        for _ in range(cfg.aco_iterations):
            tours = []
            for _ in range(cfg.aco_ants):
                current = int(rng.integers(n))
                unvisited = np.ones(n, dtype=bool)
                unvisited[current] = False
                order = [current]
                while unvisited.any():
                    weights = (pher[current] ** cfg.aco_alpha) * (heuristic[current] ** cfg.aco_beta)
                    weights = weights * unvisited
                    total = weights.sum()
                    if total <= 0:
                        nxt = int(np.nonzero(unvisited)[0][0])
                    else:
                        cum = np.cumsum(weights / total)
                        nxt = int(np.searchsorted(cum, rng.random(), side="right"))
                        nxt = min(nxt, n - 1)
                        if not unvisited[nxt]:
                            nxt = int(np.nonzero(unvisited)[0][0])
                    order.append(nxt)
                    unvisited[nxt] = False
                    current = nxt
                length = tour_length(pts, order)
                tours.append((order, length))
                if length < best_len:
                    best_order, best_len = order, length
            pher *= 1.0 - cfg.aco_evaporation
            for order, length in tours:
                deposit = 1.0 / length if length > 0 else 1.0
                for i in range(n):
                    a, b = order[i], order[(i + 1) % n]
                    pher[a, b] += deposit
                    pher[b, a] += deposit
        order = best_order

    if start is not None:
        sx, sy = start
        d_start = np.hypot(pts[:, 0] - sx, pts[:, 1] - sy)
        anchor = int(np.argmin(d_start))
        k = order.index(anchor)
        order = order[k:] + order[:k]
        if n >= 3 and dist[order[0], order[-1]] < dist[order[0], order[1]]:
            order = [order[0]] + order[1:][::-1]
    return order


# ---------------------------------------------------------------------------
# Short-horizon expert rollout
# ---------------------------------------------------------------------------


def _candidate_atoms(spec: ActionSpec) -> list:
    return [a for a in range(spec.n_atoms) if a != STOP_ATOM]


def expert_rollout(scene: SceneSpec, start: Pose, tour_positions: list,
                   cfg: ExpertConfig, vis: VisibilityParams) -> Demonstration:
    """Greedy one-step-lookahead rollout along the viewpoint tour.

    Failed translations are discarded; rotations that would leave the agent
    without a valid forward translation are discarded too (two-step
    validation under move-first semantics). Stops early once coverage is
    reached and scoring has stagnated, trimming the stagnant tail.
    """
    spec = make_action_spec(SH16)
    forward_len = spec.lengths[1]
    tau = vis.tau
    geom = scene.geometry
    n = len(geom.ids)
    oid_index = {oid: i for i, oid in enumerate(geom.ids)}

    graph = GlobalGraph()
    pose = start
    local = observe_local(scene, pose, cfg.fov, vis)
    update_global(graph, local, position_key(pose.x, pose.y))
    visited = {position_key(pose.x, pose.y)}

    vg = np.zeros(n)
    for oid, v in graph.nodes.items():
        vg[oid_index[oid]] = v

    actions: list[int] = []
    poses: list[Pose] = []
    last_progress_len = 0
    trim_pose = None
    target_i = 0
    targets = list(tour_positions)

    for _ in range(cfg.t_max - 1):
        while target_i < len(targets) - 1 and math.dist((pose.x, pose.y), targets[target_i]) <= cfg.target_reach_dist:
            target_i += 1
        target = targets[target_i] if targets else (pose.x, pose.y)
        d_now = math.dist((pose.x, pose.y), target)

        best = None  # (score, atom, motion result, local graph, progress_event)
        for atom in _candidate_atoms(spec):
            rot_i, len_i = spec.atom_to_indices(atom)
            rot, ln = spec.rotations[rot_i], spec.lengths[len_i]
            mr = step_kinematics(scene, pose, rot, ln)
            if ln > 0 and mr.move_failed:
                continue
            if ln == 0:
                probe = step_kinematics(scene, mr.new_pose, 0, forward_len)
                if probe.move_failed:
                    continue
            new_pose = mr.new_pose
            cell = position_key(new_pose.x, new_pose.y)
            cand_local = observe_local(scene, new_pose, cfg.fov, vis)
            gain = 0.0
            discoveries = 0
            for oid, v_local in cand_local.nodes.items():
                i = oid_index[oid]
                if (oid, cell) in graph.seen_pairs:
                    continue
                new_v = 1.0 - (1.0 - vg[i]) * (1.0 - v_local)
                gain += new_v - vg[i]
                if vg[i] < tau <= new_v:
                    discoveries += 1
            progress = d_now - math.dist((new_pose.x, new_pose.y), target)
            score = (cfg.w_gain * gain + cfg.w_discovery * discoveries
                     + cfg.w_new_viewpoint * (cell not in visited)
                     + cfg.w_progress * progress)
            if best is None or score > best[0]:
                best = (score, atom, mr, cand_local, gain > 1e-9 or discoveries > 0)
        if best is None:
            break

        _, atom, mr, cand_local, progressed = best
        poses.append(pose)
        actions.append(atom)
        pose = mr.new_pose
        cell = position_key(pose.x, pose.y)
        update_global(graph, cand_local, cell)
        visited.add(cell)
        for oid, v in graph.nodes.items():
            vg[oid_index[oid]] = v
        if progressed:
            last_progress_len = len(actions)
        elif coverage(vg, tau) >= cfg.coverage_target and len(actions) - last_progress_len >= cfg.stall_window:
            # Trim the stagnant tail; the pose before Stop is the pose the
            # last kept action produced.
            trim_pose = poses[last_progress_len] if last_progress_len < len(poses) else pose
            actions = actions[:last_progress_len]
            poses = poses[:last_progress_len]
            break

    poses.append(pose if trim_pose is None else trim_pose)
    actions.append(STOP_ATOM)
    return Demonstration(scene_id=scene.scene_id, start=start, actions=actions, poses=poses)


def replay_demonstration(demo: Demonstration, scene: SceneSpec) -> list:
    """Pose before each recorded action, reconstructed by pure replay."""
    spec = make_action_spec(SH16)
    pose = demo.start
    out = [pose]
    for atom in demo.actions[:-1]:
        rot_i, len_i = spec.atom_to_indices(atom)
        pose = step_kinematics(scene, pose, spec.rotations[rot_i], spec.lengths[len_i]).new_pose
        out.append(pose)
    return out


def demo_coverage(demo: Demonstration, scene: SceneSpec, vis: VisibilityParams,
                  cfg: ExpertConfig = ExpertConfig()) -> float:
    """Fraction of objects discovered (global visibility >= tau) after replay."""
    spec = make_action_spec(SH16)
    graph = GlobalGraph()
    pose = demo.start
    update_global(graph, observe_local(scene, pose, cfg.fov, vis), position_key(pose.x, pose.y))
    for atom in demo.actions:
        if atom == STOP_ATOM:
            break
        rot_i, len_i = spec.atom_to_indices(atom)
        pose = step_kinematics(scene, pose, spec.rotations[rot_i], spec.lengths[len_i]).new_pose
        update_global(graph, observe_local(scene, pose, cfg.fov, vis), position_key(pose.x, pose.y))
    ids = scene.geometry.ids
    vg = np.array([graph.nodes.get(oid, 0.0) for oid in ids])
    return coverage(vg, vis.tau)


# ---------------------------------------------------------------------------
# Dataset generation and JSONL I/O
# ---------------------------------------------------------------------------


def movement_possible(scene: SceneSpec, pose: Pose, length: float = 0.3) -> bool:
    for heading in range(0, 360, 45):
        mr = step_kinematics(scene, Pose(pose.x, pose.y, heading), 0, length)
        if not mr.move_failed:
            return True
    return False


def generate_demonstrations(scene: SceneSpec, n_starts: int, rng: np.random.Generator,
                            cfg: ExpertConfig = ExpertConfig(),
                            vis: VisibilityParams = VisibilityParams()) -> list:
    grid = viewpoint_grid(scene, cfg.grid_spacing)
    if not grid:
        return []
    vp_map = viewpoint_object_map(scene, grid, vis, cfg.fov)
    selected = greedy_select(scene, vp_map, vis.tau, cfg.coverage_target)
    positions = []
    for p in selected:
        if (p.x, p.y) not in positions:
            positions.append((p.x, p.y))
    demos = []
    starts = 0
    attempts = 0
    while starts < n_starts and attempts < 50 * n_starts:
        attempts += 1
        pose = grid[int(rng.integers(len(grid)))]
        if not movement_possible(scene, pose):
            continue
        if positions:
            order = aco_tour(positions, rng, start=(pose.x, pose.y), cfg=cfg)
            tour = [positions[i] for i in order]
        else:
            tour = []
        demos.append(expert_rollout(scene, pose, tour, cfg, vis))
        starts += 1
    return demos


def demo_to_dict(demo: Demonstration) -> dict:
    return {
        "scene_id": demo.scene_id,
        "start": {"x": demo.start.x, "y": demo.start.y, "heading": demo.start.heading},
        "actions": list(demo.actions),
    }


def demo_from_dict(d: dict) -> Demonstration:
    return Demonstration(
        scene_id=d["scene_id"],
        start=Pose(x=float(d["start"]["x"]), y=float(d["start"]["y"]),
                   heading=int(d["start"]["heading"])),
        actions=[int(a) for a in d["actions"]],
    )


def save_demonstrations(demos: list, path) -> None:
    with open(path, "w") as f:
        for demo in demos:
            f.write(json.dumps(demo_to_dict(demo)) + "\n")


def load_demonstrations(path) -> list:
    demos = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                demos.append(demo_from_dict(json.loads(line)))
    return demos
