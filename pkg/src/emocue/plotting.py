"""Plot-ready data files and simple static renders: pose tracks, gaze-zone
histograms and a schematic landmark preview."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import geometry as geo  # noqa: E402
from . import gaze as gz  # noqa: E402
from .errors import DataError  # noqa: E402

PREVIEW_SIZE = 256
# closed rings are drawn back to their first point
CLOSED_GROUPS = ("lips_outer", "lips_inner", "right_eye", "left_eye", "face_oval", "right_iris", "left_iris",
                 "right_brow", "left_brow")
OPEN_GROUPS = ("nose",)


def edge_list() -> list[tuple[int, int]]:
    """Fixed (row, row) segments of the preview wireframe."""
    edges = []
    for name in CLOSED_GROUPS + OPEN_GROUPS:
        rows = geo.group(name)
        if name in ("right_iris", "left_iris"):
            edges += [(int(rows[0]), int(r)) for r in rows[1:]]  # centre to ring
            continue
        pairs = list(zip(rows[:-1], rows[1:]))
        if name in CLOSED_GROUPS:
            pairs.append((rows[-1], rows[0]))
        edges += [(int(a), int(b)) for a, b in pairs]
    return edges


def pose_series(pose) -> dict[str, np.ndarray]:
    p = np.asarray(pose, dtype=float)
    if p.ndim != 2 or p.shape[1] != 6 or len(p) == 0:
        raise DataError("pose plot needs a non-empty (T, 6) track")
    return {"frame": np.arange(len(p)), "pitch": p[:, 1], "yaw": p[:, 0], "roll": p[:, 2]}


def gaze_histogram(labels) -> dict[str, np.ndarray]:
    labels = [lab if isinstance(lab, gz.GazeLabel) else gz.GazeLabel(*map(int, lab)) for lab in labels]
    if not labels:
        raise DataError("gaze histogram of an empty sequence")
    left, right = gz.gaze_distribution(labels)
    return {"zone": np.arange(gz.ZONES), "left": np.array(left.counts), "right": np.array(right.counts)}


def write_series_csv(path, series: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(series))
        for row in zip(*series.values()):
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else int(v) for v in row])
    return path


def plot_pose(pose, path, title: str = "head pose") -> Path:
    s = pose_series(pose)
    fig, ax = plt.subplots(figsize=(6, 3))
    for name in ("pitch", "yaw", "roll"):
        ax.plot(s["frame"], s[name], label=name)
    ax.set_xlabel("frame")
    ax.set_ylabel("radians")
    ax.set_title(title)
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def plot_gaze_histograms(hists: dict[str, np.ndarray], path, title: str = "gaze zones") -> Path:
    """Bar chart per named count column (everything except ``zone``)."""
    names = [k for k in hists if k != "zone"]
    fig, axes = plt.subplots(1, len(names), figsize=(3 * len(names), 3), squeeze=False)
    for ax, name in zip(axes[0], names):
        ax.bar(hists["zone"], hists[name])
        ax.set_title(name)
        ax.set_xlabel("zone")
        ax.set_xticks(range(gz.ZONES))
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def rasterize(relocated, size: int = PREVIEW_SIZE) -> np.ndarray:
    """Draw one relocated frame as a (size, size) uint8 image.

    Relocated coordinates are centred on the frame, so the canvas shifts them
    by size / 2; points outside the canvas are clipped away.
    """
    pts = np.asarray(relocated, dtype=float)
    if pts.shape != (geo.N_POINTS, 3):
        raise DataError(f"preview needs a ({geo.N_POINTS}, 3) frame, got {pts.shape}")
    img = np.zeros((size, size), dtype=np.uint8)
    xy = pts[:, :2] + size / 2.0

    def put(coords, value):
        ij = np.round(coords).astype(int)
        ok = (ij[:, 0] >= 0) & (ij[:, 0] < size) & (ij[:, 1] >= 0) & (ij[:, 1] < size)
        img[ij[ok, 1], ij[ok, 0]] = value

    for a, b in edge_list():
        steps = int(np.ceil(np.linalg.norm(xy[b] - xy[a]))) + 1
        t = np.linspace(0.0, 1.0, steps)[:, None]
        put(xy[a] + t * (xy[b] - xy[a]), 160)
    put(xy, 255)
    return img


def save_preview(relocated, path) -> Path:
    plt.imsave(path, rasterize(relocated), cmap="gray", vmin=0, vmax=255)
    return Path(path)
