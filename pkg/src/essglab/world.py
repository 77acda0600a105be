"""Deterministic 2.5-D indoor simulator.

The world is a rectangular room populated with axis-aligned boxes:
furniture (obstacles), small objects resting on furniture tops, thin wall
segments along the room perimeter, and wall-mounted decor. The agent is a
disc moving in the plane; motion follows a move-first scheme (translate
along the current heading, then rotate). Translation is partial: the agent
advances to the maximal free distance instead of failing outright.

All functions here are pure and deterministic; scenes are immutable after
construction and can be shared freely.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

EPS = 1e-9

RECEPTACLE_TYPES = ("table", "counter", "shelf", "sofa", "cabinet", "desk", "dresser")
SMALL_TYPES = ("cup", "book", "bowl", "plant", "lamp", "bottle", "box", "vase", "plate", "phone")
WALL_DECOR_TYPES = ("painting", "window", "mirror", "clock", "poster")
WALL_TYPE = "wall"

#: Canonical object-type vocabulary used by the observation featurizer.
TYPE_VOCAB = RECEPTACLE_TYPES + SMALL_TYPES + WALL_DECOR_TYPES + (WALL_TYPE, "other")


class SceneGenerationError(RuntimeError):
    """Raised when rejection sampling cannot place the requested objects."""


@dataclass(eq=False)
class ObjectSpec:
    id: str
    object_type: str
    center: tuple[float, float, float]
    size: tuple[float, float, float]
    parent_receptacle: Optional[str] = None
    wall_mounted: bool = False
    is_obstacle: bool = False

    @property
    def s_max(self) -> float:
        return max(self.size)

    @property
    def footprint(self) -> tuple[float, float, float, float]:
        """(x0, y0, x1, y1) of the horizontal bounding box."""
        cx, cy, _ = self.center
        sx, sy, _ = self.size
        return (cx - sx / 2, cy - sy / 2, cx + sx / 2, cy + sy / 2)

    @property
    def z_interval(self) -> tuple[float, float]:
        return (self.center[2] - self.size[2] / 2, self.center[2] + self.size[2] / 2)


@dataclass(eq=False)
class SceneSpec:
    scene_id: str
    bounds: tuple[float, float, float, float]  # (x0, y0, x1, y1) metres
    agent_radius: float
    objects: list[ObjectSpec]
    rng_seed: int
    _geom: "SceneGeometry | None" = field(default=None, repr=False, compare=False)

    def object_by_id(self, oid: str) -> ObjectSpec:
        return self.geometry.by_id[oid]

    @property
    def geometry(self) -> "SceneGeometry":
        if self._geom is None:
            self._geom = SceneGeometry(self)
        return self._geom


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: int  # degrees, multiple of 15 in [0, 345]

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    @property
    def direction(self) -> tuple[float, float]:
        rad = math.radians(self.heading)
        return (math.cos(rad), math.sin(rad))


@dataclass(frozen=True)
class MotionResult:
    new_pose: Pose
    target_dist: float
    actual_dist: float
    move_failed: bool


@dataclass(frozen=True)
class RangeScan:
    distances: np.ndarray  # (R,) metres, each in (0, max_range]


def wrap_heading(deg: float) -> int:
    h = int(round(deg)) % 360
    if h % 15 != 0:
        raise ValueError(f"heading {deg} is not a multiple of 15 degrees")
    return h


class SceneGeometry:
    """Precomputed numpy views of a scene used by the geometric queries.

    Built once per scene; never mutated afterwards.
    """

    def __init__(self, scene: SceneSpec):
        objs = scene.objects
        self.ids = [o.id for o in objs]
        self.index = {o.id: i for i, o in enumerate(objs)}
        self.by_id = {o.id: o for o in objs}
        self.centers3 = np.array([o.center for o in objs], dtype=float).reshape(len(objs), 3)
        self.centers2 = self.centers3[:, :2]
        self.s_max = np.array([o.s_max for o in objs], dtype=float)
        self.types = [o.object_type for o in objs]
        self.footprints = np.array([o.footprint for o in objs], dtype=float).reshape(len(objs), 4)

        obstacle_idx = [i for i, o in enumerate(objs) if o.is_obstacle]
        self.obstacle_idx = np.array(obstacle_idx, dtype=int)
        self.obstacle_boxes = self.footprints[obstacle_idx].reshape(len(obstacle_idx), 4)
        self.obstacle_lo = np.ascontiguousarray(self.obstacle_boxes[:, :2])
        self.obstacle_hi = np.ascontiguousarray(self.obstacle_boxes[:, 2:])
        # Swept-disc primitives (rounded rectangles) per agent radius.
        r = scene.agent_radius
        boxes = self.obstacle_boxes
        self.swept_rects = np.concatenate([
            boxes + np.array([-r, 0.0, r, 0.0]),
            boxes + np.array([0.0, -r, 0.0, r]),
        ]) if len(boxes) else np.zeros((0, 4))
        self.swept_corners = np.concatenate([
            boxes[:, (0, 1)], boxes[:, (0, 3)], boxes[:, (2, 1)], boxes[:, (2, 3)],
        ]) if len(boxes) else np.zeros((0, 2))

        # Obstacles ignored when testing occlusion of each object's centre
        # ray: the object itself plus its receptacle ancestors.
        n, k = len(objs), len(obstacle_idx)
        self.occlusion_ignore = np.zeros((n, k), dtype=bool)
        obstacle_pos = {oi: j for j, oi in enumerate(obstacle_idx)}
        for i, o in enumerate(objs):
            chain = {o.id}
            cur = o
            while cur.parent_receptacle is not None:
                cur = self.by_id[cur.parent_receptacle]
                chain.add(cur.id)
            for oid in chain:
                oi = self.index[oid]
                if oi in obstacle_pos:
                    self.occlusion_ignore[i, obstacle_pos[oi]] = True


# ---------------------------------------------------------------------------
# Collision / ray geometry
# ---------------------------------------------------------------------------


def point_free(scene: SceneSpec, x: float, y: float) -> bool:
    """True when a disc of agent_radius centred at (x, y) overlaps nothing."""
    x0, y0, x1, y1 = scene.bounds
    r = scene.agent_radius
    if not (x0 + r - EPS <= x <= x1 - r + EPS and y0 + r - EPS <= y <= y1 - r + EPS):
        return False
    boxes = scene.geometry.obstacle_boxes
    if len(boxes) == 0:
        return True
    dx = np.maximum(np.maximum(boxes[:, 0] - x, x - boxes[:, 2]), 0.0)
    dy = np.maximum(np.maximum(boxes[:, 1] - y, y - boxes[:, 3]), 0.0)
    return bool(np.all(dx * dx + dy * dy >= r * r - 1e-12))


def _rect_entries(px, py, dx, dy, rects: np.ndarray) -> np.ndarray:
    """First t >= 0 at which the ray enters each rectangle (+inf if never).

    Slabs are shrunk by a tiny epsilon so exact tangent contact (e.g.
    sliding along a face) does not count as a hit.
    """
    m = len(rects)
    t0 = np.full(m, -np.inf)
    t1 = np.full(m, np.inf)
    for p, d, lo, hi in ((px, dx, rects[:, 0], rects[:, 2]), (py, dy, rects[:, 1], rects[:, 3])):
        if abs(d) < 1e-15:
            outside = ~((lo + EPS < p) & (p < hi - EPS))
            t0 = np.where(outside, np.inf, t0)
            t1 = np.where(outside, -np.inf, t1)
        else:
            ta = (lo + EPS - p) / d
            tb = (hi - EPS - p) / d
            t0 = np.maximum(t0, np.minimum(ta, tb))
            t1 = np.minimum(t1, np.maximum(ta, tb))
    hit = t1 > np.maximum(t0, 0.0)
    return np.where(hit, np.maximum(t0, 0.0), np.inf)


def max_free_distance(scene: SceneSpec, pose: Pose, length: float) -> float:
    """Maximal translation along the pose heading that stays collision-free."""
    if length <= 0:
        return 0.0
    px, py = pose.x, pose.y
    dx, dy = pose.direction
    x0, y0, x1, y1 = scene.bounds
    r = scene.agent_radius

    free = length
    # Room bounds: exit parameter from the inner rectangle.
    for p, d, lo, hi in ((px, dx, x0 + r, x1 - r), (py, dy, y0 + r, y1 - r)):
        if d > 1e-15:
            free = min(free, (hi - p) / d)
        elif d < -1e-15:
            free = min(free, (lo - p) / d)

    geom = scene.geometry
    if len(geom.obstacle_boxes):
        # Swept disc vs box = ray vs rounded rectangle: two inflated slabs
        # plus quarter-circle corners (precomputed per scene).
        free = min(free, float(_rect_entries(px, py, dx, dy, geom.swept_rects).min()))
        corners = geom.swept_corners
        mx = corners[:, 0] - px
        my = corners[:, 1] - py
        b = mx * dx + my * dy
        c = mx * mx + my * my - r * r
        disc = b * b - c
        root = np.sqrt(np.maximum(disc, 0.0))
        t_in = b - root
        t_out = b + root
        hit = (disc > 0) & (t_out > EPS)
        entries = np.where(hit, np.maximum(t_in, 0.0), np.inf)
        free = min(free, float(entries.min()))
    return max(free, 0.0)


def step_kinematics(scene: SceneSpec, pose: Pose, rotation: float, length: float) -> MotionResult:
    """Move-first kinematics: translate along the heading, then rotate.

    Translation is partial: the agent advances to the maximal free distance
    (swept disc against obstacle boxes and room bounds). Blocked motion is a
    result, not an error.
    """
    if rotation % 15 != 0:
        raise ValueError(f"rotation {rotation} is not a multiple of 15 degrees")
    if not (0.0 <= length <= 2.0 + EPS):
        raise ValueError(f"length {length} outside [0, 2.0]")
    actual = max_free_distance(scene, pose, length)
    dx, dy = pose.direction
    new_pose = Pose(
        x=pose.x + actual * dx,
        y=pose.y + actual * dy,
        heading=wrap_heading(pose.heading + rotation),
    )
    return MotionResult(
        new_pose=new_pose,
        target_dist=length,
        actual_dist=actual,
        move_failed=actual < length - 0.05,
    )


def _ray_directions(heading: int, n_rays: int, fov: float) -> np.ndarray:
    """(R, 2) unit directions of the scan fan; cached per heading."""
    key = (heading, n_rays, fov)
    cached = _RAY_DIR_CACHE.get(key)
    if cached is None:
        if n_rays == 1:
            angles = np.array([float(heading)])
        else:
            angles = heading + fov * (np.arange(n_rays) / (n_rays - 1) - 0.5)
        rad = np.radians(angles)
        cached = np.stack([np.cos(rad), np.sin(rad)], axis=1)
        _RAY_DIR_CACHE[key] = cached
    return cached


_RAY_DIR_CACHE: dict = {}


def _ray_box_entries(p: np.ndarray, dirs: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """First entry t >= 0 per (ray, box), +inf when missed.

    dirs (R, 2); lo/hi (K, 2). NaNs from 0 * inf (ray origin exactly on a
    slab plane, parallel ray) resolve to a miss.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs  # (R, 2); +-inf where parallel
        ta = (lo[None, :, :] - p) * inv[:, None, :]
        tb = (hi[None, :, :] - p) * inv[:, None, :]
        tmin = np.fmin(ta, tb)
        tmax = np.fmax(ta, tb)
    t0 = np.nanmax(np.where(np.isnan(tmin), -np.inf, tmin), axis=2)
    t1 = np.nanmin(np.where(np.isnan(tmax), np.inf, tmax), axis=2)
    hit = (t1 >= np.maximum(t0, 0.0)) & (t1 > EPS)
    return np.where(hit, np.maximum(t0, 0.0), np.inf)


def raycast_scan(scene: SceneSpec, pose: Pose, n_rays: int, max_range: float, fov: float = 90.0) -> RangeScan:
    """Fan of thin rays across the field of view; first obstacle/bounds hit.

    Ray r points at heading + fov * (r / (n_rays - 1) - 1/2); a single ray
    points straight along the heading. Distances are clamped to max_range.
    """
    if n_rays < 1:
        raise ValueError("n_rays must be >= 1")
    px, py = pose.x, pose.y
    p = np.array([px, py])
    dirs = _ray_directions(pose.heading, n_rays, fov)
    dxs, dys = dirs[:, 0], dirs[:, 1]

    x0, y0, x1, y1 = scene.bounds
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = np.where(dxs > 0, (x1 - px) / dxs, np.where(dxs < 0, (x0 - px) / dxs, np.inf))
        ty = np.where(dys > 0, (y1 - py) / dys, np.where(dys < 0, (y0 - py) / dys, np.inf))
    hits = np.minimum(np.full(n_rays, max_range), np.minimum(tx, ty))

    geom = scene.geometry
    if len(geom.obstacle_boxes):
        entries = _ray_box_entries(p, dirs, geom.obstacle_lo, geom.obstacle_hi)
        hits = np.minimum(hits, entries.min(axis=1))
    return RangeScan(distances=np.clip(hits, EPS, max_range))


GRID_HEADINGS = (0, 45, 90, 135, 180, 225, 270, 315)


def viewpoint_grid(scene: SceneSpec, spacing: float) -> list[Pose]:
    """Collision-free grid positions (anchored at the room centre) crossed
    with the 8 diagonal-capable headings, in deterministic order."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    x0, y0, x1, y1 = scene.bounds
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2

    def axis_points(lo, hi, c):
        i = math.floor((lo - c) / spacing)
        pts = []
        while True:
            v = c + i * spacing
            if v > hi + EPS:
                break
            if v >= lo - EPS:
                pts.append(v)
            i += 1
        return pts

    poses = []
    for x in axis_points(x0, x1, cx):
        for y in axis_points(y0, y1, cy):
            if point_free(scene, x, y):
                for h in GRID_HEADINGS:
                    poses.append(Pose(x=x, y=y, heading=h))
    return poses


@dataclass(eq=False)
class PoseCache:
    """Exact lookup table (pose, rotation, length) -> MotionResult.

    Keys must be the exact float values used to build the cache (grid poses
    and canonical action lengths); anything else falls through to
    step_kinematics via get_or_compute.
    """

    entries: dict

    @staticmethod
    def key(pose: Pose, rotation: float, length: float):
        return (pose.x, pose.y, pose.heading, rotation, length)

    def lookup(self, pose: Pose, rotation: float, length: float) -> Optional[MotionResult]:
        return self.entries.get(self.key(pose, rotation, length))

    def get_or_compute(self, scene: SceneSpec, pose: Pose, rotation: float, length: float) -> MotionResult:
        hit = self.lookup(pose, rotation, length)
        if hit is not None:
            return hit
        return step_kinematics(scene, pose, rotation, length)


def build_pose_cache(scene: SceneSpec, grid: Iterable[Pose], rotations: Iterable[float], lengths: Iterable[float]) -> PoseCache:
    rotations = list(rotations)
    lengths = list(lengths)
    entries = {}
    for pose in grid:
        for rot in rotations:
            for ln in lengths:
                entries[PoseCache.key(pose, rot, ln)] = step_kinematics(scene, pose, rot, ln)
    return PoseCache(entries=entries)


# ---------------------------------------------------------------------------
# Procedural scene generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SceneGenConfig:
    room_min: float = 6.0
    room_max: float = 10.0
    receptacles: tuple[int, int] = (4, 8)
    small_objects: tuple[int, int] = (8, 20)
    wall_objects: tuple[int, int] = (2, 4)
    agent_radius: float = 0.2
    receptacle_size: tuple[float, float] = (0.5, 1.2)
    receptacle_height: tuple[float, float] = (0.4, 1.0)
    small_size: tuple[float, float] = (0.05, 0.3)
    clearance: float = 0.7  # min horizontal gap between furniture pieces
    wall_thickness: float = 0.05
    wall_height: float = 2.5
    max_place_tries: int = 200
    max_scene_tries: int = 20


def _boxes_gap_ok(box, others, clearance) -> bool:
    x0, y0, x1, y1 = box
    for ox0, oy0, ox1, oy1 in others:
        gx = max(ox0 - x1, x0 - ox1)
        gy = max(oy0 - y1, y0 - oy1)
        if max(gx, gy) < clearance:
            return False
    return True


def generate_scene(seed: int, config: SceneGenConfig = SceneGenConfig()) -> SceneSpec:
    """Procedurally generate a furnished room. Identical (seed, config)
    pairs produce bit-identical scenes."""
    rng = np.random.default_rng(seed)
    last_err = "exhausted scene attempts"
    for _ in range(config.max_scene_tries):
        scene = _try_generate(seed, rng, config)
        if scene is not None:
            return scene
        last_err = "could not place furniture with required clearance"
    raise SceneGenerationError(f"scene generation failed for seed {seed}: {last_err}")


def _try_generate(seed: int, rng: np.random.Generator, cfg: SceneGenConfig) -> Optional[SceneSpec]:
    w = float(rng.uniform(cfg.room_min, cfg.room_max))
    h = float(rng.uniform(cfg.room_min, cfg.room_max))
    bounds = (0.0, 0.0, w, h)
    th = cfg.wall_thickness
    objects: list[ObjectSpec] = []

    def wall(name, cx, cy, sx, sy):
        objects.append(ObjectSpec(
            id=name, object_type=WALL_TYPE,
            center=(cx, cy, cfg.wall_height / 2),
            size=(sx, sy, cfg.wall_height),
        ))

    wall("wall_s", w / 2, th / 2, w, th)
    wall("wall_n", w / 2, h - th / 2, w, th)
    wall("wall_w", th / 2, h / 2, th, h)
    wall("wall_e", w - th / 2, h / 2, th, h)

    # Furniture: obstacle boxes with pairwise clearance so the agent can
    # navigate between any two pieces.
    n_rec = int(rng.integers(cfg.receptacles[0], cfg.receptacles[1] + 1))
    rec_boxes = []
    receptacles = []
    for i in range(n_rec):
        placed = False
        for _ in range(cfg.max_place_tries):
            sx = float(rng.uniform(*cfg.receptacle_size))
            sy = float(rng.uniform(*cfg.receptacle_size))
            sz = float(rng.uniform(*cfg.receptacle_height))
            margin = 0.15
            cx = float(rng.uniform(margin + sx / 2, w - margin - sx / 2))
            cy = float(rng.uniform(margin + sy / 2, h - margin - sy / 2))
            box = (cx - sx / 2, cy - sy / 2, cx + sx / 2, cy + sy / 2)
            if _boxes_gap_ok(box, rec_boxes, cfg.clearance):
                otype = RECEPTACLE_TYPES[int(rng.integers(0, len(RECEPTACLE_TYPES)))]
                spec = ObjectSpec(
                    id=f"{otype}_{i}", object_type=otype,
                    center=(cx, cy, sz / 2), size=(sx, sy, sz),
                    is_obstacle=True,
                )
                receptacles.append(spec)
                objects.append(spec)
                rec_boxes.append(box)
                placed = True
                break
        if not placed:
            return None

    n_small = int(rng.integers(cfg.small_objects[0], cfg.small_objects[1] + 1))
    for i in range(n_small):
        parent = receptacles[int(rng.integers(0, len(receptacles)))]
        s = float(rng.uniform(*cfg.small_size))
        px, py, pz = parent.center
        psx, psy, psz = parent.size
        half = s / 2
        fx = max(psx / 2 - half, 0.0)
        fy = max(psy / 2 - half, 0.0)
        cx = px + float(rng.uniform(-fx, fx))
        cy = py + float(rng.uniform(-fy, fy))
        top = pz + psz / 2
        otype = SMALL_TYPES[int(rng.integers(0, len(SMALL_TYPES)))]
        objects.append(ObjectSpec(
            id=f"{otype}_{i}", object_type=otype,
            center=(cx, cy, top + half), size=(s, s, s),
            parent_receptacle=parent.id,
        ))

    n_wallobj = int(rng.integers(cfg.wall_objects[0], cfg.wall_objects[1] + 1))
    wall_names = ("wall_s", "wall_n", "wall_w", "wall_e")
    for i in range(n_wallobj):
        wname = wall_names[int(rng.integers(0, 4))]
        extent = float(rng.uniform(0.3, 1.0))
        depth = 0.04
        height = float(rng.uniform(0.3, 0.8))
        zc = float(rng.uniform(1.2, 1.8))
        otype = WALL_DECOR_TYPES[int(rng.integers(0, len(WALL_DECOR_TYPES)))]
        if wname in ("wall_s", "wall_n"):
            cx = float(rng.uniform(extent / 2 + 0.1, w - extent / 2 - 0.1))
            cy = th + depth / 2 if wname == "wall_s" else h - th - depth / 2
            size = (extent, depth, height)
        else:
            cy = float(rng.uniform(extent / 2 + 0.1, h - extent / 2 - 0.1))
            cx = th + depth / 2 if wname == "wall_w" else w - th - depth / 2
            size = (depth, extent, height)
        objects.append(ObjectSpec(
            id=f"{otype}_{i}", object_type=otype,
            center=(cx, cy, zc), size=size,
            wall_mounted=True,
        ))

    scene = SceneSpec(
        scene_id=f"scene_{seed:04d}",
        bounds=bounds,
        agent_radius=cfg.agent_radius,
        objects=objects,
        rng_seed=seed,
    )
    if not list(free_start_positions(scene, spacing=0.25, limit=1)):
        return None
    return scene


def free_start_positions(scene: SceneSpec, spacing: float = 0.25, limit: Optional[int] = None):
    """Yield collision-free positions on a coarse grid (existence check)."""
    x0, y0, x1, y1 = scene.bounds
    count = 0
    x = x0 + spacing
    while x < x1 - EPS:
        y = y0 + spacing
        while y < y1 - EPS:
            if point_free(scene, x, y):
                yield (x, y)
                count += 1
                if limit is not None and count >= limit:
                    return
            y += spacing
        x += spacing


def sample_start_pose(scene: SceneSpec, rng: np.random.Generator, heading_step: int = 15) -> Pose:
    """Rejection-sample a collision-free start pose."""
    x0, y0, x1, y1 = scene.bounds
    for _ in range(10_000):
        x = float(rng.uniform(x0, x1))
        y = float(rng.uniform(y0, y1))
        if point_free(scene, x, y):
            heading = int(rng.integers(0, 360 // heading_step)) * heading_step
            return Pose(x=x, y=y, heading=heading)
    raise SceneGenerationError(f"no collision-free start pose found in {scene.scene_id}")


# ---------------------------------------------------------------------------
# Scene JSON (stable key order)
# ---------------------------------------------------------------------------


def scene_to_dict(scene: SceneSpec) -> dict:
    return {
        "scene_id": scene.scene_id,
        "bounds": list(scene.bounds),
        "agent_radius": scene.agent_radius,
        "rng_seed": scene.rng_seed,
        "objects": [
            {
                "id": o.id,
                "object_type": o.object_type,
                "center": list(o.center),
                "size": list(o.size),
                "parent_receptacle": o.parent_receptacle,
                "wall_mounted": o.wall_mounted,
                "is_obstacle": o.is_obstacle,
            }
            for o in scene.objects
        ],
    }


def scene_from_dict(d: dict) -> SceneSpec:
    return SceneSpec(
        scene_id=d["scene_id"],
        bounds=tuple(float(v) for v in d["bounds"]),
        agent_radius=float(d["agent_radius"]),
        rng_seed=int(d["rng_seed"]),
        objects=[
            ObjectSpec(
                id=od["id"],
                object_type=od["object_type"],
                center=tuple(float(v) for v in od["center"]),
                size=tuple(float(v) for v in od["size"]),
                parent_receptacle=od.get("parent_receptacle"),
                wall_mounted=bool(od.get("wall_mounted", False)),
                is_obstacle=bool(od.get("is_obstacle", False)),
            )
            for od in d["objects"]
        ],
    )


def save_scene(scene: SceneSpec, path) -> None:
    with open(path, "w") as f:
        json.dump(scene_to_dict(scene), f, indent=2)
        f.write("\n")


def load_scene(path) -> SceneSpec:
    with open(path) as f:
        return scene_from_dict(json.load(f))
