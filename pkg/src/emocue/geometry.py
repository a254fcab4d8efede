"""3D landmark geometry: index selection, Euler rotations, frontal
normalization and relocation back to image space.

Canonical axes follow the image: x to the right, y downwards, z towards the
camera. Rotations compose as ``Rz(roll) @ Ry(yaw) @ Rx(pitch)`` and act on
column vectors; point arrays are stored row-wise, so ``P @ R.T`` applies them.
With these axes a positive pitch lifts the nose tip, i.e. tilts the head up.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from . import gaze as gz
from .errors import GeometryError, NumericError, StructuralError

N_RAW = 478
N_POINTS = 147
DEFAULT_CANONICAL_WIDTH = 1.0
DEFAULT_SCALE_FACTOR = 128.0

INDEX_FILE = "landmarks_147.txt"

# MediaPipe indices of the reference points
NOSE_TIP = 1
RIGHT_CHEEK = 234
LEFT_CHEEK = 454
RIGHT_PUPIL = 468
LEFT_PUPIL = 473
RIGHT_EYE_TOP, RIGHT_EYE_BOTTOM = 159, 145
LEFT_EYE_TOP, LEFT_EYE_BOTTOM = 386, 374


def _read_index_table() -> tuple[list[int], dict[str, list[int]]]:
    text = resources.files("emocue.data").joinpath(INDEX_FILE).read_text()
    order: list[int] = []
    groups: dict[str, list[int]] = {}
    current = None
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("# group:"):
            current = line.split(":", 1)[1].strip()
            groups[current] = []
        elif line and not line.startswith("#"):
            idx = int(line)
            order.append(idx)
            groups[current].append(idx)
    return order, groups


@lru_cache(maxsize=None)
def _tables():
    order, groups = _read_index_table()
    if len(order) != N_POINTS or len(set(order)) != N_POINTS:
        raise StructuralError(f"index table must list {N_POINTS} distinct indices")
    position = {mp: i for i, mp in enumerate(order)}
    group_pos = {
        name: np.array([position[i] for i in idx], dtype=int) for name, idx in groups.items()
    }
    return np.array(order, dtype=int), position, group_pos


def index_table() -> np.ndarray:
    """The 147 retained MediaPipe indices, in storage order."""
    return _tables()[0].copy()


def index_table_sha256() -> str:
    return hashlib.sha256(" ".join(map(str, index_table())).encode()).hexdigest()


def pos(mediapipe_index: int) -> int:
    """Row of a MediaPipe landmark inside a 147-point frame."""
    return _tables()[1][mediapipe_index]


def group(name: str) -> np.ndarray:
    """Rows of a named landmark group (lips_outer, right_eye, left_iris, ...)."""
    return _tables()[2][name].copy()


def group_names() -> list[str]:
    return list(_tables()[2])


def mouth_indices() -> np.ndarray:
    return np.concatenate([group("lips_outer"), group("lips_inner")])


def pupil_indices() -> np.ndarray:
    return np.concatenate([group("left_iris"), group("right_iris")])


def non_pupil_mask() -> np.ndarray:
    mask = np.ones(N_POINTS, dtype=bool)
    mask[pupil_indices()] = False
    return mask


def _check_points(points, n: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.shape != (n, 3):
        raise StructuralError(f"expected ({n}, 3) landmark array, got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise NumericError("non-finite landmark coordinates")
    return pts


def select_147(raw) -> np.ndarray:
    """Keep the 147 tabulated landmarks of a 478-point MediaPipe frame."""
    pts = _check_points(raw, N_RAW)
    return pts[_tables()[0]].copy()


def wrap_angle(a: float) -> float:
    """Map an angle into (-pi, pi]."""
    return math.pi - (math.pi - a) % (2.0 * math.pi)


@dataclass(frozen=True)
class HeadPose:
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0
    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_array()):
            raise NumericError(f"non-finite head pose {self}")

    @classmethod
    def from_array(cls, values, wrap: bool = True) -> "HeadPose":
        v = [float(x) for x in values]
        if len(v) != 6:
            raise StructuralError(f"head pose needs 6 values, got {len(v)}")
        if wrap:
            v[:3] = [wrap_angle(a) for a in v[:3]]
        return cls(*v)

    def as_array(self) -> np.ndarray:
        return np.array([self.yaw, self.pitch, self.roll, self.tx, self.ty, self.tz])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty, self.tz])

    def rotation(self) -> np.ndarray:
        return euler_to_rotation(self.yaw, self.pitch, self.roll)


def euler_to_rotation(yaw: float, pitch: float, roll: float) -> np.ndarray:
    if not all(math.isfinite(a) for a in (yaw, pitch, roll)):
        raise NumericError("non-finite Euler angle")
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]])
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rz = np.array([[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]])
    return rz @ ry @ rx


def face_width(points) -> float:
    pts = np.asarray(points, dtype=float)
    return float(np.linalg.norm(pts[pos(LEFT_CHEEK)] - pts[pos(RIGHT_CHEEK)]))


def eye_opening(points) -> float:
    """Mean vertical lid gap of both eyes (canonical frames are upright)."""
    pts = np.asarray(points, dtype=float)
    right = pts[pos(RIGHT_EYE_BOTTOM), 1] - pts[pos(RIGHT_EYE_TOP), 1]
    left = pts[pos(LEFT_EYE_BOTTOM), 1] - pts[pos(LEFT_EYE_TOP), 1]
    return float(0.5 * (right + left))


def check_normalized(points, canonical_width: float = DEFAULT_CANONICAL_WIDTH) -> np.ndarray:
    """Validate the normalized-frame invariants (nose at origin, fixed width)."""
    pts = _check_points(points, N_POINTS)
    if np.max(np.abs(pts[pos(NOSE_TIP)])) > 1e-9:
        raise GeometryError("nose tip is not at the origin")
    if abs(face_width(pts) - canonical_width) > 1e-6:
        raise GeometryError(f"face width {face_width(pts)} != {canonical_width}")
    return pts


def renormalize(points, canonical_width: float = DEFAULT_CANONICAL_WIDTH) -> np.ndarray:
    """Translate the nose tip to the origin and rescale to the canonical width,
    without touching orientation."""
    pts = _check_points(points, N_POINTS)
    pts = pts - pts[pos(NOSE_TIP)]
    width = face_width(pts)
    if width <= 1e-12:
        raise GeometryError("degenerate face: zero inter-cheek width")
    return pts * (canonical_width / width)


def normalize_frame(frame, pose: HeadPose, canonical_width: float = DEFAULT_CANONICAL_WIDTH) -> np.ndarray:
    """Bring an image-space 147-point frame to the canonical frontal space."""
    pts = _check_points(frame, N_POINTS)
    centered = pts - pts[pos(NOSE_TIP)]
    frontal = centered @ pose.rotation()  # inverse rotation, row-vector form
    width = face_width(frontal)
    if width <= 1e-12:
        raise GeometryError("degenerate face: zero inter-cheek width")
    return frontal * (canonical_width / width)


def eye_grids(points) -> tuple[gz.EyeGrid, gz.EyeGrid]:
    """(left, right) eye grids from the eye rings of a canonical frame."""
    pts = np.asarray(points, dtype=float)
    return gz.build_eye_grid(pts[group("left_eye")]), gz.build_eye_grid(pts[group("right_eye")])


def gaze_from_landmarks(points) -> gz.GazeLabel:
    """Zone label of each pupil inside its own eye grid."""
    pts = np.asarray(points, dtype=float)
    left_grid, right_grid = eye_grids(pts)
    u_left = gz.assign_zone(pts[pos(LEFT_PUPIL)], left_grid)
    u_right = gz.assign_zone(pts[pos(RIGHT_PUPIL)], right_grid)
    return gz.GazeLabel.from_zones(u_left, u_right)


def place_pupils(points, label: gz.GazeLabel) -> np.ndarray:
    """Shift each iris rigidly in x/y so its centre sits at the zone centre."""
    pts = np.array(points, dtype=float)
    left_grid, right_grid = eye_grids(pts)
    for iris, centre, zone, grid in (
        ("left_iris", LEFT_PUPIL, label.u_left, left_grid),
        ("right_iris", RIGHT_PUPIL, label.u_right, right_grid),
    ):
        target = np.array(gz.place_pupil(zone, grid))
        shift = target - pts[pos(centre), :2]
        pts[group(iris), :2] += shift
    return pts


@dataclass(frozen=True)
class RelocatedLandmarkFrame:
    points: np.ndarray
    source_pose: HeadPose
    source_gaze: gz.GazeLabel


def relocate(
    norm,
    pose: HeadPose,
    gaze: gz.GazeLabel,
    scale_factor: float = DEFAULT_SCALE_FACTOR,
) -> RelocatedLandmarkFrame:
    """Pupils to their gaze cells, then rotate, scale and translate.

    The translation is added after scaling, i.e. in image units whose origin is
    the frame centre.
    """
    pts = place_pupils(_check_points(norm, N_POINTS), gaze)
    out = scale_factor * (pts @ pose.rotation().T) + pose.translation
    if not np.all(np.isfinite(out)):
        raise NumericError("relocation produced non-finite coordinates")
    return RelocatedLandmarkFrame(out, pose, gaze)
