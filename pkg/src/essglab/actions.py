"""Discrete motion vocabularies and curriculum stage masks.

Three policy parameterisations share the same motion primitives:

* SH16  - single head over 16 atoms: 8 rotations (45 deg) x 2 lengths {0, 0.3}
* SH504 - single head over 504 atoms: 24 rotations (15 deg) x 21 lengths {0..2.0}
* MH    - factorised heads (24 rotations, 21 lengths, binary stop) at the
          504-atom resolution

In SH the atom (rotation 0, length 0) is Stop. In MH a dedicated stop head
terminates; (0, 0) without stop is an idle step that does not terminate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

SH16 = "sh16"
SH504 = "sh504"
MH = "mh"
VARIANTS = (SH16, SH504, MH)


@dataclass(frozen=True)
class ActionSpec:
    variant: str
    rotations: tuple[float, ...]
    lengths: tuple[float, ...]

    @property
    def n_rotations(self) -> int:
        return len(self.rotations)

    @property
    def n_lengths(self) -> int:
        return len(self.lengths)

    @property
    def n_atoms(self) -> int:
        return self.n_rotations * self.n_lengths

    @property
    def multi_head(self) -> bool:
        return self.variant == MH

    def atom_index(self, rotation_index: int, length_index: int) -> int:
        return rotation_index * self.n_lengths + length_index

    def atom_to_indices(self, atom: int) -> tuple[int, int]:
        return divmod(atom, self.n_lengths)


def make_action_spec(variant: str) -> ActionSpec:
    if variant == SH16:
        rotations = tuple(float(r) for r in range(0, 360, 45))
        lengths = (0.0, 0.3)
    elif variant in (SH504, MH):
        rotations = tuple(float(r) for r in range(0, 360, 15))
        lengths = tuple(round(0.1 * i, 1) for i in range(21))
    else:
        raise ValueError(f"unknown action variant {variant!r}")
    return ActionSpec(variant=variant, rotations=rotations, lengths=lengths)


@dataclass(frozen=True)
class ActionChoice:
    rotation_index: int
    length_index: int
    stop_flag: bool = False  # meaningful for MH only


@dataclass(frozen=True)
class Stop:
    pass


@dataclass(frozen=True)
class Idle:
    pass


@dataclass(frozen=True)
class Motion:
    rotation: float  # degrees, positive counter-clockwise
    length: float    # metres


Decoded = Union[Stop, Idle, Motion]


def decode(choice: ActionChoice, spec: ActionSpec) -> Decoded:
    """Map a discrete choice to Stop / Idle / Motion."""
    if not (0 <= choice.rotation_index < spec.n_rotations):
        raise IndexError(f"rotation index {choice.rotation_index} out of range")
    if not (0 <= choice.length_index < spec.n_lengths):
        raise IndexError(f"length index {choice.length_index} out of range")
    rotation = spec.rotations[choice.rotation_index]
    length = spec.lengths[choice.length_index]
    if spec.multi_head:
        if choice.stop_flag:
            return Stop()
        if rotation == 0.0 and length == 0.0:
            return Idle()
        return Motion(rotation=rotation, length=length)
    if rotation == 0.0 and length == 0.0:
        return Stop()
    return Motion(rotation=rotation, length=length)


@dataclass(frozen=True)
class StageMask:
    """Admissibility masks per head; SH additionally uses the outer-product
    atom mask. Stop is admissible in every stage."""

    rotations: tuple[bool, ...]
    lengths: tuple[bool, ...]

    def rotation_array(self) -> np.ndarray:
        return np.array(self.rotations, dtype=bool)

    def length_array(self) -> np.ndarray:
        return np.array(self.lengths, dtype=bool)

    def atom_array(self) -> np.ndarray:
        return np.outer(self.rotation_array(), self.length_array()).reshape(-1)

    def admits(self, choice: ActionChoice) -> bool:
        if choice.stop_flag:
            return True
        return self.rotations[choice.rotation_index] and self.lengths[choice.length_index]


def full_mask(spec: ActionSpec) -> StageMask:
    return StageMask(
        rotations=(True,) * spec.n_rotations,
        lengths=(True,) * spec.n_lengths,
    )


STAGE_ANGLE_STEP = {1: 45.0, 2: 45.0, 3: 45.0, 4: 15.0}
STAGE_LENGTHS = {
    1: (0.0, 0.3),
    2: (0.0, 0.3, 0.7, 1.2, 1.6, 2.0),
    3: tuple(round(0.1 * i, 1) for i in range(21) if i != 19),
    4: tuple(round(0.1 * i, 1) for i in range(21)),
}


def stage_mask(stage: int, spec: ActionSpec) -> StageMask:
    """Curriculum mask for the large action spaces (four stages:
    16 -> 48 -> 160 -> 504 admissible motion atoms)."""
    if spec.variant not in (SH504, MH):
        raise ValueError("curriculum stages apply to the large action spaces only")
    if stage not in (1, 2, 3, 4):
        raise ValueError(f"stage {stage} out of range 1..4")
    step = STAGE_ANGLE_STEP[stage]
    allowed_lengths = set(STAGE_LENGTHS[stage])
    rotations = tuple(r % step == 0.0 for r in spec.rotations)
    lengths = tuple(l in allowed_lengths for l in spec.lengths)
    return StageMask(rotations=rotations, lengths=lengths)
