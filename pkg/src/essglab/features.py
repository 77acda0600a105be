"""Observation channels and the stagnation signal.

The featurizer replaces learned visual/graph encoders with deterministic
simulator-derived channels: a normalized range scan (optional), per-slot
local and global visibilities with a visible-type histogram, the last
action as one-hots, and three raw stagnation scalars computed from the
change of the global-graph slot vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .actions import ActionChoice, ActionSpec
from .ssg import GlobalGraph, MetricsSnapshot
from .world import TYPE_VOCAB, SceneSpec


@dataclass(frozen=True)
class StagnationConfig:
    alpha: float = 0.7        # EMA weight on the previous average
    tau_disc: float = 0.1     # change threshold
    k: float = 10.0           # tanh divisor for the step counter
    d_sg: int = 64            # slot-vector dimension (= slot count)


@dataclass
class StagnationState:
    g_prev: Optional[np.ndarray] = None
    ema: float = 0.0
    steps_since_change: int = 0
    initialized: bool = False


def stagnation_step(st: StagnationState, g_t: np.ndarray, cfg: StagnationConfig) -> tuple[StagnationState, tuple[float, float, float]]:
    """Advance the stagnation tracker; returns (new state, (delta, ema, s)).

    delta is the normalized l2 change of the slot vector (1 at sequence
    start); the smoothed variant is an EMA; s squashes the steps-without-
    change counter with tanh(n / k).
    """
    g_t = np.asarray(g_t, dtype=float)
    if g_t.shape != (cfg.d_sg,):
        raise ValueError(f"slot vector has shape {g_t.shape}, expected ({cfg.d_sg},)")
    if not st.initialized:
        delta = 1.0
        ema = delta
        n = 1
    else:
        delta = float(np.linalg.norm(g_t - st.g_prev) / math.sqrt(cfg.d_sg))
        ema = cfg.alpha * st.ema + (1.0 - cfg.alpha) * delta
        changed = delta > cfg.tau_disc
        n = (0 if changed else st.steps_since_change) + 1
    new_state = StagnationState(g_prev=g_t.copy(), ema=ema, steps_since_change=n, initialized=True)
    s = math.tanh(n / cfg.k)
    return new_state, (delta, ema, s)


def graph_vector(g: GlobalGraph, slot_ids: list, slots: int) -> np.ndarray:
    """Global visibilities by slot index; objects beyond the slot budget are
    truncated, empty slots are zero."""
    out = np.zeros(slots, dtype=float)
    for i, oid in enumerate(slot_ids[:slots]):
        v = g.nodes.get(oid)
        if v is not None:
            out[i] = v
    return out


@dataclass(frozen=True)
class ObsConfig:
    slots: int = 64             # M object slots
    n_rays: int = 24
    max_range: float = 5.0
    fov: float = 90.0
    depth: bool = False         # include the range-scan channel
    type_vocab: tuple[str, ...] = TYPE_VOCAB


@dataclass(frozen=True)
class ObsLayout:
    """Column spans of each channel in the packed observation vector."""

    range_scan: Optional[tuple[int, int]]
    local_slots: tuple[int, int]
    global_slots: tuple[int, int]
    last_action: tuple[int, int]
    stagnation: tuple[int, int]
    dim: int


def obs_layout(cfg: ObsConfig, action_spec: ActionSpec) -> ObsLayout:
    pos = 0
    if cfg.depth:
        range_span = (0, cfg.n_rays)
        pos = cfg.n_rays
    else:
        range_span = None
    n_types = len(cfg.type_vocab)
    local_span = (pos, pos + cfg.slots + n_types)
    pos = local_span[1]
    global_span = (pos, pos + cfg.slots + 1)
    pos = global_span[1]
    action_span = (pos, pos + action_spec.n_rotations + action_spec.n_lengths + 1)
    pos = action_span[1]
    stag_span = (pos, pos + 3)
    pos = stag_span[1]
    return ObsLayout(
        range_scan=range_span,
        local_slots=local_span,
        global_slots=global_span,
        last_action=action_span,
        stagnation=stag_span,
        dim=pos,
    )


@dataclass
class Observation:
    """Packed observation vector; channels are views into it."""

    vec: np.ndarray
    layout: ObsLayout

    def _span(self, sl):
        return self.vec[sl[0]:sl[1]]

    @property
    def range_scan(self) -> Optional[np.ndarray]:
        if self.layout.range_scan is None:
            return None
        return self._span(self.layout.range_scan)

    @property
    def local_slots(self) -> np.ndarray:
        return self._span(self.layout.local_slots)

    @property
    def global_slots(self) -> np.ndarray:
        return self._span(self.layout.global_slots)

    @property
    def last_action(self) -> np.ndarray:
        return self._span(self.layout.last_action)

    @property
    def stagnation_raw(self) -> np.ndarray:
        return self._span(self.layout.stagnation)

    def pack(self) -> np.ndarray:
        return self.vec


def unpack(vec: np.ndarray, layout: ObsLayout) -> Observation:
    if len(vec) != layout.dim:
        raise ValueError(f"vector length {len(vec)} != layout dim {layout.dim}")
    return Observation(vec=np.asarray(vec, dtype=float), layout=layout)


@dataclass
class SlotIndex:
    """Stable per-episode assignment of objects to feature slots and types
    to histogram bins (scene order, truncated to the slot budget)."""

    ids: list
    type_bins: np.ndarray  # per object, index into the type vocabulary

    @staticmethod
    def for_scene(scene: SceneSpec, cfg: ObsConfig) -> "SlotIndex":
        vocab = {t: i for i, t in enumerate(cfg.type_vocab)}
        other = vocab.get("other", len(cfg.type_vocab) - 1)
        geom = scene.geometry
        bins = np.array([vocab.get(t, other) for t in geom.types], dtype=int)
        return SlotIndex(ids=list(geom.ids), type_bins=bins)


def build_observation(
    layout: ObsLayout,
    slot_index: SlotIndex,
    global_vec: np.ndarray,
    local_values: np.ndarray,
    visible: np.ndarray,
    node_recall: float,
    last_action: Optional[ActionChoice],
    stagnation_raw: tuple[float, float, float],
    range_distances: Optional[np.ndarray],
    cfg: ObsConfig,
    action_spec: ActionSpec,
) -> Observation:
    """Assemble the packed observation vector (deterministic)."""
    m = cfg.slots
    n = len(slot_index.ids)
    n_types = len(cfg.type_vocab)
    vec = np.zeros(layout.dim)

    if layout.range_scan is not None:
        a, b = layout.range_scan
        vec[a:b] = np.asarray(range_distances, dtype=float) / cfg.max_range

    a, _ = layout.local_slots
    upto = min(n, m)
    vec[a:a + upto] = np.where(visible[:upto], local_values[:upto], 0.0)
    if n and visible.any():
        hist = np.bincount(slot_index.type_bins[visible], minlength=n_types)
        vec[a + m:a + m + n_types] = hist / n

    a, _ = layout.global_slots
    vec[a:a + m] = global_vec
    vec[a + m] = node_recall

    a, _ = layout.last_action
    if last_action is not None:
        vec[a + last_action.rotation_index] = 1.0
        vec[a + action_spec.n_rotations + last_action.length_index] = 1.0
        if last_action.stop_flag:
            vec[a + action_spec.n_rotations + action_spec.n_lengths] = 1.0

    a, _ = layout.stagnation
    vec[a:a + 3] = stagnation_raw
    return Observation(vec=vec, layout=layout)
