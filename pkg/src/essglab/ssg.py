"""Local and global semantic scene graphs.

Objects are scored with a continuous soft visibility: a sigmoid over the
agent-object distance whose centre shifts with object size, so large
furniture is visible from farther away than a cup. Local observations are
folded into a global graph with a monotone saturating update, skipping
re-observations of an object from an already-used agent cell so that
spinning in place does not inflate visibility.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .world import EPS, Pose, SceneSpec

POSITION_CELL = 0.25  # metres; granularity of viewpoint cells


@dataclass(frozen=True)
class VisibilityParams:
    omega: float = 1.0       # sigmoid steepness, 1/m
    c_base: float = 3.5      # centre distance for the reference size, m
    k_size: float = 1.5      # centre shift per metre of object size
    s_ref: float = 0.5       # reference size, m
    tau: float = 0.8         # discovery threshold


@dataclass
class LocalGraph:
    nodes: dict  # object id -> local soft visibility
    edges: list  # (src, relation, dst)


@dataclass
class GlobalGraph:
    nodes: dict = field(default_factory=dict)   # object id -> global visibility
    edges: set = field(default_factory=set)     # {(src, relation, dst)}
    seen_pairs: set = field(default_factory=set)  # {(object id, cell key)}


@dataclass(frozen=True)
class MetricsSnapshot:
    node_recall: float
    node_precision: float   # mean global visibility over ground-truth objects
    edge_recall: float
    edge_precision: float   # 1.0 by construction (noise-free extraction)
    diversity: int          # number of unique (object, cell) observations


def position_key(x: float, y: float, cell: float = POSITION_CELL) -> tuple[int, int]:
    return (math.floor(x / cell), math.floor(y / cell))


def soft_visibility(d, s_max, p: VisibilityParams):
    """Sigmoid visibility in (0,1); decreasing in distance, increasing in size."""
    c = p.c_base + p.k_size * (np.asarray(s_max, dtype=float) - p.s_ref)
    out = 1.0 / (1.0 + np.exp(p.omega * (np.asarray(d, dtype=float) - c)))
    if np.ndim(out) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# Relation extraction (deterministic, from scene metadata)
# ---------------------------------------------------------------------------

SUPPORT_TOL = 0.05      # vertical slack for geometric support, m
CLOSE_BY_DIST = 0.5     # same-receptacle proximity, m
VERTICAL_GAP = 0.05     # min gap for above/below, m
CONNECT_GAP = 0.05      # max footprint gap for connects_to, m
ATTACH_DIST = 0.15      # centre-to-box distance for attachments, m


def _footprint_overlap(a, b) -> bool:
    return a[0] < b[2] - EPS and b[0] < a[2] - EPS and a[1] < b[3] - EPS and b[1] < a[3] - EPS


def _footprint_gap(a, b) -> float:
    gx = max(b[0] - a[2], a[0] - b[2])
    gy = max(b[1] - a[3], a[1] - b[3])
    return max(gx, gy)


def _point_box_dist(pt, box3_center, box3_size) -> float:
    d = 0.0
    for p, c, s in zip(pt, box3_center, box3_size):
        lo, hi = c - s / 2, c + s / 2
        if p < lo:
            d += (lo - p) ** 2
        elif p > hi:
            d += (p - hi) ** 2
    return math.sqrt(d)


def extract_relations(scene: SceneSpec) -> list:
    """Rule-based edge set with inverse labels; pure function of the scene."""
    objs = scene.objects
    edges = []

    def add_pair(src, rel, dst, inv):
        edges.append((src, rel, dst))
        edges.append((dst, inv, src))

    walls = [o for o in objs if o.object_type == "wall"]

    for o in objs:
        # Support: declared parent, or footprint overlap with the child
        # bottom resting within tolerance of the parent top.
        for p in objs:
            if p is o:
                continue
            supported = o.parent_receptacle == p.id
            if not supported and p.is_obstacle and o.parent_receptacle is None and not o.wall_mounted and o.object_type != "wall":
                if _footprint_overlap(o.footprint, p.footprint):
                    child_bottom = o.z_interval[0]
                    parent_top = p.z_interval[1]
                    supported = abs(child_bottom - parent_top) <= SUPPORT_TOL
            if supported:
                add_pair(o.id, "supported_by", p.id, "supports")
                add_pair(o.id, "on", p.id, "has_on_top")

        if o.wall_mounted and walls:
            nearest = min(walls, key=lambda wseg: (_point_box_dist(o.center, wseg.center, wseg.size), wseg.id))
            edges.append((o.id, "hanging_on", nearest.id))

    n = len(objs)
    for i in range(n):
        for j in range(i + 1, n):
            a, b = objs[i], objs[j]
            # close_by: siblings on the same receptacle, near in 3-D.
            if a.parent_receptacle is not None and a.parent_receptacle == b.parent_receptacle:
                dist = math.dist(a.center, b.center)
                if dist < CLOSE_BY_DIST:
                    edges.append((a.id, "close_by", b.id))
                    edges.append((b.id, "close_by", a.id))
            # above/below: overlapping footprints, vertically separated.
            if _footprint_overlap(a.footprint, b.footprint):
                gap_ab = a.z_interval[0] - b.z_interval[1]
                gap_ba = b.z_interval[0] - a.z_interval[1]
                if gap_ab > VERTICAL_GAP:
                    add_pair(a.id, "above", b.id, "below")
                elif gap_ba > VERTICAL_GAP:
                    add_pair(b.id, "above", a.id, "below")
            # connects_to: adjacent same-type furniture.
            if a.is_obstacle and b.is_obstacle and a.object_type == b.object_type:
                if _footprint_gap(a.footprint, b.footprint) < CONNECT_GAP:
                    edges.append((a.id, "connects_to", b.id))
                    edges.append((b.id, "connects_to", a.id))
            # attachment: a small object right next to a non-receptacle main object.
            for small, main in ((a, b), (b, a)):
                if small.parent_receptacle is None:
                    continue
                if main.is_obstacle or main.object_type == "wall" or main.parent_receptacle is not None:
                    continue
                if _point_box_dist(small.center, main.center, main.size) <= ATTACH_DIST:
                    add_pair(small.id, "attach_on", main.id, "has_attachment")
    return edges


def ground_truth_edges(scene: SceneSpec) -> list:
    """extract_relations with per-scene caching (scenes are immutable)."""
    cached = getattr(scene, "_gt_edges", None)
    if cached is None:
        cached = extract_relations(scene)
        scene._gt_edges = cached
        geom = scene.geometry
        idx = geom.index
        scene._gt_edge_idx = np.array(
            [(idx[s], idx[d]) for s, _, d in cached], dtype=int
        ).reshape(len(cached), 2)
    return cached


# ---------------------------------------------------------------------------
# Local observation
# ---------------------------------------------------------------------------


def _visibility_pass(scene: SceneSpec, pose: Pose, fov: float):
    """(visible mask, horizontal distances) for all objects: fov cone test
    plus a centre-ray occlusion test against obstacle boxes, ignoring the
    object itself and its receptacle ancestors."""
    geom = scene.geometry
    n = len(geom.ids)
    if n == 0:
        return np.zeros(0, dtype=bool), np.zeros(0)
    pos = np.array([pose.x, pose.y])
    delta = geom.centers2 - pos
    dists = np.hypot(delta[:, 0], delta[:, 1])
    bearing = np.degrees(np.arctan2(delta[:, 1], delta[:, 0]))
    rel = (bearing - pose.heading + 180.0) % 360.0 - 180.0
    vis = np.abs(rel) <= fov / 2 + 1e-9

    if len(geom.obstacle_boxes) and vis.any():
        idx = np.nonzero(vis)[0]
        seg = delta[idx]  # segment pos -> centre, parameter t in [0, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / seg
            ta = (geom.obstacle_lo[None, :, :] - pos) * inv[:, None, :]
            tb = (geom.obstacle_hi[None, :, :] - pos) * inv[:, None, :]
            tmin = np.fmin(ta, tb)
            tmax = np.fmax(ta, tb)
        t0 = np.max(np.where(np.isnan(tmin), -np.inf, tmin), axis=2)
        t1 = np.min(np.where(np.isnan(tmax), np.inf, tmax), axis=2)
        blocked = (t1 > np.maximum(t0, EPS)) & (t0 < 1.0 - 1e-6) & (t1 > 0)
        blocked &= ~geom.occlusion_ignore[idx]
        vis[idx] &= ~blocked.any(axis=1)
    return vis, dists


def visible_mask(scene: SceneSpec, pose: Pose, fov: float) -> np.ndarray:
    """Boolean per object: centre inside the fov cone and centre ray not
    blocked by an obstacle box other than the object itself/its ancestors."""
    return _visibility_pass(scene, pose, fov)[0]


def sense(scene: SceneSpec, pose: Pose, fov: float, p: VisibilityParams):
    """One geometry pass: (visibility mask, soft values per object, LocalGraph)."""
    if not (0 < fov <= 360):
        raise ValueError("fov must be in (0, 360]")
    geom = scene.geometry
    vis, dists = _visibility_pass(scene, pose, fov)
    values = soft_visibility(dists, geom.s_max, p)

    nodes = {geom.ids[i]: float(values[i]) for i in np.nonzero(vis)[0]}
    gt = ground_truth_edges(scene)
    if gt:
        pair_idx = scene._gt_edge_idx
        keep = vis[pair_idx[:, 0]] & vis[pair_idx[:, 1]]
        edges = [gt[i] for i in np.nonzero(keep)[0]]
    else:
        edges = []
    return vis, values, LocalGraph(nodes=nodes, edges=edges)


def observe_local(scene: SceneSpec, pose: Pose, fov: float, p: VisibilityParams) -> LocalGraph:
    """Scene graph of the current view: visible nodes with soft visibility,
    plus the ground-truth relations between currently visible pairs."""
    return sense(scene, pose, fov, p)[2]


def update_global(g: GlobalGraph, local: LocalGraph, pos_key) -> GlobalGraph:
    """Fold a local observation into the global graph in place.

    Visibility update is monotone and saturating; an (object, cell) pair is
    applied at most once per episode. Edges are unioned and never removed.
    """
    for oid, v_local in local.nodes.items():
        pair = (oid, pos_key)
        if pair in g.seen_pairs:
            continue
        g.seen_pairs.add(pair)
        prev = g.nodes.get(oid)
        if prev is None:
            g.nodes[oid] = v_local
        else:
            g.nodes[oid] = 1.0 - (1.0 - prev) * (1.0 - v_local)
    g.edges.update(local.edges)
    return g


def graph_metrics(g: GlobalGraph, scene: SceneSpec, p: VisibilityParams) -> MetricsSnapshot:
    ids = scene.geometry.ids
    n = len(ids)
    values = [g.nodes.get(oid, 0.0) for oid in ids]
    recalled = sum(1 for v in values if v >= p.tau)
    gt_edges = ground_truth_edges(scene)
    return MetricsSnapshot(
        node_recall=recalled / n if n else 1.0,
        node_precision=sum(values) / n if n else 1.0,
        edge_recall=len(g.edges) / len(gt_edges) if gt_edges else 1.0,
        edge_precision=1.0,
        diversity=len(g.seen_pairs),
    )


def graph_to_dict(g: GlobalGraph) -> dict:
    return {
        "nodes": [{"id": oid, "visibility": g.nodes[oid]} for oid in sorted(g.nodes)],
        "edges": [list(e) for e in sorted(g.edges)],
    }


def dump_graph(g: GlobalGraph, path) -> None:
    with open(path, "w") as f:
        json.dump(graph_to_dict(g), f, indent=2)
        f.write("\n")
