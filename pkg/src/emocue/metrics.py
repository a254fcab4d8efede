"""Evaluation metrics: mouth/face landmark distances (MLD, FLD), dynamic time
warping over pose angles and pupil speeds, and gaze-zone histograms.

DTW is the classic unconstrained recursion with absolute-difference cost and
no length normalization, so values grow with sequence length.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import geometry as geo
from . import gaze as gz
from .errors import DataError, DomainError, StructuralError

# pose array layout is (yaw, pitch, roll, tx, ty, tz)
YAW, PITCH, ROLL = 0, 1, 2

SCALAR_FIELDS = ("n_frames", "mld", "fld", "dtw_pitch", "dtw_yaw", "dtw_roll", "dtw_gaze_left", "dtw_gaze_right")
HISTOGRAM_FIELDS = ("pred_gaze_left", "pred_gaze_right", "gt_gaze_left", "gt_gaze_right")
CSV_COLUMNS = SCALAR_FIELDS + tuple(f"{h}_z{z}" for h in HISTOGRAM_FIELDS for z in range(gz.ZONES))


def _frames(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise StructuralError(f"{name}: expected (frames, points, 3), got {arr.shape}")
    return arr


def _check_pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p, g = _frames(pred, "pred"), _frames(gt, "gt")
    if p.shape != g.shape:
        raise DataError(f"landmark sequences differ in length or arity: {p.shape} vs {g.shape}")
    if len(p) == 0:
        raise DataError("empty landmark sequence")
    return p, g


def mld(pred, gt, mouth=None) -> float:
    """Mean Euclidean distance over frames and mouth points."""
    p, g = _check_pair(pred, gt)
    idx = geo.mouth_indices() if mouth is None else np.asarray(mouth, dtype=int)
    return float(np.linalg.norm(p[:, idx] - g[:, idx], axis=-1).mean())


def fld(pred, gt) -> float:
    """Mean Euclidean distance over frames and all points."""
    p, g = _check_pair(pred, gt)
    return float(np.linalg.norm(p - g, axis=-1).mean())


def dtw_batch(a, b) -> np.ndarray:
    """DTW of P sequence pairs at once: a (P, n), b (P, m) -> (P,)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[0] != b.shape[0]:
        raise StructuralError(f"batch sizes differ: {a.shape[0]} vs {b.shape[0]}")
    n, m = a.shape[1], b.shape[1]
    if n == 0 or m == 0:
        raise DomainError("DTW needs non-empty sequences")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DomainError("DTW inputs must be finite")
    D = np.full((a.shape[0], n + 1, m + 1), np.inf)
    D[:, 0, 0] = 0.0
    for i in range(1, n + 1):
        cost = np.abs(a[:, i - 1, None] - b)  # (P, m)
        for j in range(1, m + 1):
            best = np.minimum(np.minimum(D[:, i - 1, j], D[:, i, j - 1]), D[:, i - 1, j - 1])
            D[:, i, j] = cost[:, j - 1] + best
    return D[:, n, m]


def dtw(a, b) -> float:
    """Minimal total |a_i - b_j| over monotone match/insert/delete alignments."""
    a, b = np.asarray(a, dtype=float).ravel(), np.asarray(b, dtype=float).ravel()
    return float(dtw_batch(a[None], b[None])[0])


def pose_dtw(pred_pose, gt_pose) -> tuple[float, float, float]:
    """(pitch, yaw, roll) DTW between two (T, 6) pose tracks."""
    p, g = np.asarray(pred_pose, dtype=float), np.asarray(gt_pose, dtype=float)
    if p.ndim != 2 or g.ndim != 2 or p.shape[1] < 3 or g.shape[1] < 3:
        raise StructuralError("pose tracks must be (T, 6)")
    if len(p) == 0 or len(g) == 0:
        raise DomainError("DTW needs non-empty pose tracks")
    return dtw(p[:, PITCH], g[:, PITCH]), dtw(p[:, YAW], g[:, YAW]), dtw(p[:, ROLL], g[:, ROLL])


def pupil_track(labels, grids) -> tuple[np.ndarray, np.ndarray]:
    """(left, right) (T, 2) pupil centres of a label sequence on fixed grids."""
    left_grid, right_grid = grids
    left = np.array([gz.place_pupil(lab.u_left, left_grid) for lab in labels])
    right = np.array([gz.place_pupil(lab.u_right, right_grid) for lab in labels])
    return left, right


def pupil_speed(track) -> np.ndarray:
    """Per-frame Euclidean displacement of a (T, 2) pupil track."""
    return np.linalg.norm(np.diff(np.asarray(track, dtype=float), axis=0), axis=-1)


def _as_labels(labels) -> list[gz.GazeLabel]:
    out = []
    for lab in labels:
        if isinstance(lab, gz.GazeLabel):
            out.append(lab)
        else:
            out.append(gz.GazeLabel(*map(int, lab)))
    return out


def gaze_speed_dtw(pred_labels, gt_labels, grids) -> tuple[float, float]:
    """(left, right) DTW between pupil-speed sequences."""
    pred, gt = _as_labels(pred_labels), _as_labels(gt_labels)
    if len(pred) < 2 or len(gt) < 2:
        raise DomainError("pupil speed needs at least two frames")
    pl, pr = pupil_track(pred, grids)
    gl, gr = pupil_track(gt, grids)
    return dtw(pupil_speed(pl), pupil_speed(gl)), dtw(pupil_speed(pr), pupil_speed(gr))


@dataclass
class MetricReport:
    n_frames: int
    mld: float
    fld: float
    dtw_pitch: float
    dtw_yaw: float
    dtw_roll: float
    dtw_gaze_left: float
    dtw_gaze_right: float
    pred_gaze_left: list[int] = field(default_factory=lambda: [0] * gz.ZONES)
    pred_gaze_right: list[int] = field(default_factory=lambda: [0] * gz.ZONES)
    gt_gaze_left: list[int] = field(default_factory=lambda: [0] * gz.ZONES)
    gt_gaze_right: list[int] = field(default_factory=lambda: [0] * gz.ZONES)

    def __post_init__(self):
        for name in SCALAR_FIELDS[1:]:
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise DomainError(f"metric {name} = {v} must be finite and non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    def row(self) -> list:
        values = [getattr(self, f) for f in SCALAR_FIELDS]
        for h in HISTOGRAM_FIELDS:
            values += list(getattr(self, h))
        return values


def report(pred, gt, grids=None) -> MetricReport:
    """All metrics between a predicted and a ground-truth bundle.

    Pupil speeds use one pair of eye grids for both sequences, by default the
    grids of the first ground-truth landmark frame.
    """
    if len(pred) != len(gt):
        raise DataError(f"bundles differ in length: {len(pred)} vs {len(gt)} frames")
    if len(gt) < 2:
        raise DataError("evaluation needs at least two frames")
    grids = geo.eye_grids(gt.landmarks[0]) if grids is None else grids
    pitch, yaw, roll = pose_dtw(pred.pose, gt.pose)
    left, right = gaze_speed_dtw(pred.gaze, gt.gaze, grids)
    pl, pr = gz.gaze_distribution(_as_labels(pred.gaze))
    gl, gr = gz.gaze_distribution(_as_labels(gt.gaze))
    return MetricReport(
        n_frames=len(gt),
        mld=mld(pred.landmarks, gt.landmarks),
        fld=fld(pred.landmarks, gt.landmarks),
        dtw_pitch=pitch,
        dtw_yaw=yaw,
        dtw_roll=roll,
        dtw_gaze_left=left,
        dtw_gaze_right=right,
        pred_gaze_left=[int(c) for c in pl.counts],
        pred_gaze_right=[int(c) for c in pr.counts],
        gt_gaze_left=[int(c) for c in gl.counts],
        gt_gaze_right=[int(c) for c in gr.counts],
    )


# ---------------------------------------------------------------------------
# emission


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rep in reports:
        writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in rep.row()])
    return buf.getvalue()


def reports_from_csv(text: str) -> list[MetricReport]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise DataError("metric CSV header does not match the report schema")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_COLUMNS):
            raise DataError(f"metric CSV line {lineno}: expected {len(CSV_COLUMNS)} fields, got {len(row)}")
        try:
            scalars = [int(row[0])] + [float(v) for v in row[1 : len(SCALAR_FIELDS)]]
            counts = [int(v) for v in row[len(SCALAR_FIELDS) :]]
        except ValueError as exc:
            raise DataError(f"metric CSV line {lineno}: {exc}") from None
        hists = [counts[k * gz.ZONES : (k + 1) * gz.ZONES] for k in range(len(HISTOGRAM_FIELDS))]
        out.append(MetricReport(*scalars, *hists))
    return out


def report_to_json(rep: MetricReport) -> str:
    return json.dumps(rep.to_dict(), indent=2) + "\n"


def report_from_json(text: str) -> MetricReport:
    try:
        data = json.loads(text)
        return MetricReport(**data)
    except (json.JSONDecodeError, TypeError) as exc:
        raise DataError(f"malformed metric report JSON ({exc})") from None
