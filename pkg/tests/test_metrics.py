import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emocue import geometry as geo
from emocue import gaze as gz
from emocue import metrics as mt
from emocue.errors import DataError, DomainError
from emocue.sequentializers import bundle_from_record

from conftest import random_frame
from oracles import brute_dtw, brute_dtw_all, cell_centre, delannoy, alignment_paths, loop_dtw

seqs = st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=12)


def frames(seed, T=4):
    rng = np.random.default_rng(seed)
    return np.stack([random_frame(rng) for _ in range(T)])


# --- landmark distances -------------------------------------------------------


def naive_mean_distance(p, g, idx):
    total, count = 0.0, 0
    for n in range(len(p)):
        for i in idx:
            total += np.sqrt(sum((p[n, i, c] - g[n, i, c]) ** 2 for c in range(3)))
            count += 1
    return total / count


def test_identical_is_zero():
    f = frames(0)
    assert mt.mld(f, f) == 0.0 and mt.fld(f, f) == 0.0


def test_uniform_unit_shift():
    f = frames(1)
    shifted = f + [0.0, 1.0, 0.0]
    assert mt.mld(shifted, f) == 1.0 and mt.fld(shifted, f) == 1.0


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 10.0), st.integers(0, 2**31))
def test_uniform_shift_recovers_distance(d, seed):
    direction = np.random.default_rng(seed).normal(size=3)
    direction /= np.linalg.norm(direction)
    f = frames(2, T=2)
    assert mt.fld(f + d * direction, f) == pytest.approx(d, abs=1e-12)
    assert mt.mld(f + d * direction, f) == pytest.approx(d, abs=1e-12)


def test_loop_oracle():
    p, g = frames(3), frames(4)
    assert abs(mt.mld(p, g) - naive_mean_distance(p, g, geo.mouth_indices())) < 1e-12
    assert abs(mt.fld(p, g) - naive_mean_distance(p, g, range(147))) < 1e-12


def test_mouth_set_is_lip_rings():
    assert set(mt.geo.mouth_indices()) == set(geo.group("lips_outer")) | set(geo.group("lips_inner"))
    assert len(geo.mouth_indices()) == 40


def test_length_mismatch():
    with pytest.raises(DataError):
        mt.mld(frames(5, 3), frames(5, 4))
    with pytest.raises(DataError):
        mt.fld(frames(5, 3), frames(5, 4))


# --- DTW ------------------------------------------------------------------------------


def test_dtw_examples():
    assert mt.dtw([1, 2, 3], [1, 2, 3]) == 0.0
    assert mt.dtw([0], [1]) == 1.0
    assert mt.dtw([0, 0, 1], [0, 1]) == 0.0
    with pytest.raises(DomainError):
        mt.dtw([], [1])
    with pytest.raises(DomainError):
        mt.dtw([np.nan], [1])


def test_enumeration_counts_all_alignments():
    for n in range(1, 7):
        for m in range(1, 7):
            assert len(alignment_paths(n, m)) == delannoy(n - 1, m - 1)


@pytest.mark.parametrize("n,m", [(1, 4), (3, 3), (4, 6), (6, 5)])
def test_dtw_exhaustive_small(n, m):
    A, B, d = brute_dtw_all(n, m)
    assert np.array_equal(mt.dtw_batch(A, B), d)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=6), st.lists(st.floats(-3, 3), min_size=1, max_size=6))
def test_dtw_real_valued_vs_enumeration(a, b):
    assert mt.dtw(a, b) == pytest.approx(brute_dtw(a, b), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(seqs, seqs)
def test_dtw_vs_recursion(a, b):
    assert mt.dtw(a, b) == pytest.approx(loop_dtw(a, b), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(seqs, seqs, st.floats(0.01, 100))
def test_dtw_laws(a, b, c):
    assert mt.dtw(a, a) == 0.0
    assert mt.dtw(a, b) == mt.dtw(b, a)
    assert mt.dtw(a, b) >= 0.0
    assert mt.dtw(np.multiply(c, a), np.multiply(c, b)) == pytest.approx(c * mt.dtw(a, b), rel=1e-9, abs=1e-9)


# --- pose and gaze -------------------------------------------------------------------


def test_pose_dtw_identity_and_offset():
    rng = np.random.default_rng(6)
    pose = rng.normal(0, 0.1, size=(20, 6))
    assert mt.pose_dtw(pose, pose) == (0.0, 0.0, 0.0)
    const = np.zeros((20, 6))
    shifted = const.copy()
    shifted[:, mt.YAW] += 0.05
    pitch, yaw, roll = mt.pose_dtw(shifted, const)
    assert (pitch, roll) == (0.0, 0.0) and yaw == pytest.approx(20 * 0.05, abs=1e-12)


def test_pose_dtw_channels_vs_enumeration():
    rng = np.random.default_rng(7)
    a, b = rng.normal(size=(5, 6)), rng.normal(size=(6, 6))
    got = mt.pose_dtw(a, b)
    for value, ch in zip(got, (mt.PITCH, mt.YAW, mt.ROLL)):
        assert value == pytest.approx(brute_dtw(a[:, ch], b[:, ch]), abs=1e-12)


def _grids():
    return geo.eye_grids(frames(8, 1)[0])


def _speed_oracle(zones, grid):
    centres = [cell_centre(z, grid) for z in zones]
    return [float(np.hypot(*(q - p))) for p, q in zip(centres, centres[1:])]


def test_gaze_speed_identical_and_constant():
    grids = _grids()
    labels = [gz.GazeLabel.from_joint(v) for v in (22, 23, 33, 45)]
    assert mt.gaze_speed_dtw(labels, labels, grids) == (0.0, 0.0)
    a = [gz.GazeLabel.from_zones(1, 4)] * 5
    b = [gz.GazeLabel.from_zones(7, 0)] * 8
    assert mt.gaze_speed_dtw(a, b, grids) == (0.0, 0.0)
    with pytest.raises(DomainError):
        mt.gaze_speed_dtw(a[:1], b, grids)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 99), min_size=2, max_size=8), st.lists(st.integers(0, 99), min_size=2, max_size=8))
def test_gaze_speed_composition_oracle(vp, vg):
    grids = _grids()
    pred = [gz.GazeLabel.from_joint(v) for v in vp]
    gt = [gz.GazeLabel.from_joint(v) for v in vg]
    left, right = mt.gaze_speed_dtw(pred, gt, grids)
    for got, eye, grid in ((left, 0, grids[0]), (right, 1, grids[1])):
        zp = [divmod(v, 10)[::-1][eye] for v in vp]
        zg = [divmod(v, 10)[::-1][eye] for v in vg]
        assert got == pytest.approx(loop_dtw(_speed_oracle(zp, grid), _speed_oracle(zg, grid)), abs=1e-12)


# --- report -------------------------------------------------------------------------------------


def test_report_self_is_zero(small_corpus):
    b = bundle_from_record(small_corpus.records[0])
    rep = mt.report(b, b)
    assert all(getattr(rep, f) == 0.0 for f in mt.SCALAR_FIELDS[1:])
    assert rep.pred_gaze_left == rep.gt_gaze_left and rep.pred_gaze_right == rep.gt_gaze_right
    assert sum(rep.gt_gaze_left) == rep.n_frames == len(b)


def test_report_aggregates_individual_metrics(small_corpus):
    p, g = bundle_from_record(small_corpus.records[0]), bundle_from_record(small_corpus.records[5])
    rep = mt.report(p, g)
    grids = geo.eye_grids(g.landmarks[0])
    assert rep.mld == mt.mld(p.landmarks, g.landmarks) and rep.fld == mt.fld(p.landmarks, g.landmarks)
    assert (rep.dtw_pitch, rep.dtw_yaw, rep.dtw_roll) == mt.pose_dtw(p.pose, g.pose)
    assert (rep.dtw_gaze_left, rep.dtw_gaze_right) == mt.gaze_speed_dtw(p.gaze, g.gaze, grids)
    assert rep.pred_gaze_left == np.bincount(p.gaze[:, 0], minlength=10).tolist()
    assert mt.report(p, g).to_dict() == rep.to_dict()


def test_report_length_mismatch(small_corpus):
    a = bundle_from_record(small_corpus.records[0])
    b = bundle_from_record(small_corpus.records[1])
    b.landmarks, b.pose, b.gaze = b.landmarks[:-1], b.pose[:-1], b.gaze[:-1]
    with pytest.raises(DataError):
        mt.report(a, b)


def test_report_rejects_negative():
    with pytest.raises(DomainError):
        mt.MetricReport(2, -1.0, 0, 0, 0, 0, 0, 0)


def test_csv_and_json_round_trip(small_corpus):
    reps = [mt.report(bundle_from_record(small_corpus.records[i]), bundle_from_record(small_corpus.records[j]))
            for i, j in ((0, 1), (2, 9), (4, 4))]
    text = mt.reports_to_csv(reps)
    assert text.splitlines()[0].split(",") == list(mt.CSV_COLUMNS)
    assert [r.to_dict() for r in mt.reports_from_csv(text)] == [r.to_dict() for r in reps]
    assert mt.report_from_json(mt.report_to_json(reps[1])).to_dict() == reps[1].to_dict()
    with pytest.raises(DataError):
        mt.reports_from_csv("a,b\n1,2\n")
    with pytest.raises(DataError):
        mt.reports_from_csv(text.splitlines()[0] + "\n1,2\n")
