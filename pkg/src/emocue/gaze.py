"""Eye-region discretization and the joint two-eye gaze label codec.

Each eye's axis-aligned bounding box is cut into a 2 x 5 grid (rows along y,
columns along x). Zones are numbered ``row * 5 + col``; with the image-style
canonical frame (y grows downwards) row 0 is the upper half of the eye.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, GeometryError, StructuralError

ROWS = 2
COLS = 5
ZONES = ROWS * COLS  # S
JOINT_CLASSES = ZONES * ZONES

# The box centre sits on the row boundary and the tie-break sends it to row 0,
# so the upper-middle cell is the one a straight-ahead pupil lands in.
CENTER_ZONE = 2


@dataclass(frozen=True)
class EyeGrid:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise GeometryError(f"empty eye box {self}")

    @property
    def cell_width(self) -> float:
        return (self.x_max - self.x_min) / COLS

    @property
    def cell_height(self) -> float:
        return (self.y_max - self.y_min) / ROWS

    def shifted(self, dx: float, dy: float) -> "EyeGrid":
        return EyeGrid(self.x_min + dx, self.x_max + dx, self.y_min + dy, self.y_max + dy)


@dataclass(frozen=True)
class GazeLabel:
    u_left: int
    u_right: int
    v: int

    def __post_init__(self):
        for name in ("u_left", "u_right"):
            u = getattr(self, name)
            if not 0 <= u < ZONES:
                raise DomainError(f"{name}={u} outside [0, {ZONES - 1}]")
        if self.v != self.u_left + ZONES * self.u_right:
            raise DomainError(
                f"joint index {self.v} inconsistent with zones ({self.u_left}, {self.u_right})"
            )

    @classmethod
    def from_zones(cls, u_left: int, u_right: int) -> "GazeLabel":
        return cls(int(u_left), int(u_right), encode_joint(u_left, u_right))

    @classmethod
    def from_joint(cls, v: int) -> "GazeLabel":
        u_left, u_right = decode_joint(v)
        return cls(u_left, u_right, int(v))

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.u_left, self.u_right, self.v)


@dataclass(frozen=True)
class GazeDistribution:
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.counts) != ZONES or min(self.counts) < 0 or sum(self.counts) == 0:
            raise DomainError(f"bad zone counts {self.counts}")

    @property
    def frequencies(self) -> np.ndarray:
        c = np.asarray(self.counts, dtype=float)
        return c / c.sum()


def build_eye_grid(ring_points) -> EyeGrid:
    """Grid over the bounding box of an eye ring given as (n, 2) or (n, 3) points."""
    pts = np.asarray(ring_points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] < 2 or pts.shape[0] < 4:
        raise StructuralError(f"need >= 4 eye-ring points, got shape {pts.shape}")
    xy = pts[:, :2]
    if not np.all(np.isfinite(xy)):
        raise GeometryError("non-finite eye-ring coordinates")
    centered = xy - xy.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[0] == 0.0 or sv[1] <= 1e-12 * sv[0]:
        raise GeometryError("eye-ring points are collinear")
    lo = xy.min(axis=0)
    hi = xy.max(axis=0)
    return EyeGrid(float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]))


def _cell_index(t: float, n: int) -> int:
    # t is the coordinate in cell units; interior boundaries belong to the lower cell
    return int(min(max(np.ceil(t) - 1, 0), n - 1))


def assign_zone(pupil, grid: EyeGrid) -> int:
    x, y = float(pupil[0]), float(pupil[1])
    col = _cell_index((x - grid.x_min) / grid.cell_width, COLS)
    row = _cell_index((y - grid.y_min) / grid.cell_height, ROWS)
    return row * COLS + col


def place_pupil(zone: int, grid: EyeGrid) -> tuple[float, float]:
    """Centre of the zone's cell."""
    if not 0 <= zone < ZONES:
        raise DomainError(f"zone {zone} outside [0, {ZONES - 1}]")
    row, col = divmod(int(zone), COLS)
    return (
        grid.x_min + (col + 0.5) * grid.cell_width,
        grid.y_min + (row + 0.5) * grid.cell_height,
    )


def encode_joint(u_left: int, u_right: int) -> int:
    if not (0 <= u_left < ZONES and 0 <= u_right < ZONES):
        raise DomainError(f"zones ({u_left}, {u_right}) outside [0, {ZONES - 1}]")
    return int(u_left) + ZONES * int(u_right)


def decode_joint(v: int) -> tuple[int, int]:
    if not 0 <= v < JOINT_CLASSES:
        raise DomainError(f"joint gaze index {v} outside [0, {JOINT_CLASSES - 1}]")
    u_right, u_left = divmod(int(v), ZONES)
    return u_left, u_right


CENTER_GAZE = GazeLabel.from_zones(CENTER_ZONE, CENTER_ZONE)


def classify_gaze(probabilities, normalized: bool = True) -> GazeLabel:
    """Most probable joint class; ties resolve to the lowest index.

    With ``normalized=False`` any non-negative score vector with positive mass is
    accepted, which makes the argmax scale invariance directly usable.
    """
    p = np.asarray(probabilities, dtype=float)
    if p.shape != (JOINT_CLASSES,):
        raise DomainError(f"expected {JOINT_CLASSES} probabilities, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise DomainError("probabilities must be finite and non-negative")
    total = p.sum()
    if normalized and abs(total - 1.0) > 1e-6:
        raise DomainError(f"probabilities sum to {total}, not 1")
    if total <= 0:
        raise DomainError("probability vector has no mass")
    return GazeLabel.from_joint(int(np.argmax(p)))


def gaze_distribution(labels: Iterable[GazeLabel]) -> tuple[GazeDistribution, GazeDistribution]:
    """Zone histograms for the (left, right) eye."""
    labels = list(labels)
    if not labels:
        raise DomainError("gaze distribution of an empty sequence")
    left = Counter(lab.u_left for lab in labels)
    right = Counter(lab.u_right for lab in labels)
    return (
        GazeDistribution(tuple(left.get(z, 0) for z in range(ZONES))),
        GazeDistribution(tuple(right.get(z, 0) for z in range(ZONES))),
    )


def labels_from_joint(vs: Sequence[int]) -> list[GazeLabel]:
    return [GazeLabel.from_joint(int(v)) for v in vs]
