import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emocue.errors import ChecksumError, DomainError, NumericError, StructuralError, UsageError
from emocue.neural import (
    MLP,
    Adam,
    BiLSTMEncoder,
    Embedding,
    EmotionEmbedding,
    Linear,
    LSTMCell,
    Tensor,
    checkpoint_hash,
    concat,
    cross_entropy,
    grad_check,
    l1,
    load_checkpoint,
    log_softmax,
    no_grad,
    save_checkpoint,
    softmax,
    softmax_cross_entropy,
    stack,
    weighted_l1,
)

TOL = 1e-4


def rng(seed=0):
    return np.random.default_rng(seed)


# --- tensor core ----------------------------------------------------------


def test_backward_of_polynomial():
    x = Tensor(3.0, requires_grad=True)
    y = x * x
    z = y * y
    t = z * z
    t.backward()
    assert x.grad == pytest.approx(8 * 3.0**7)


def test_shared_subexpression_accumulates():
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = x * 2.0
    (y * y + y).sum().backward()
    assert np.allclose(x.grad, 8 * x.data + 2)


def test_non_finite_forward_raises():
    with pytest.raises(NumericError):
        Tensor([0.0]).log()
    with pytest.raises(NumericError), np.errstate(over="ignore"):
        Tensor([1e308]) * 10.0


def test_no_grad_builds_no_graph():
    w = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        out = (w * 2.0).sum()
    assert not out.requires_grad


def test_value_count_matches_shape():
    t = Tensor(np.zeros((2, 3, 4)))
    assert t.size == 2 * 3 * 4 == t.data.size


def test_forward_is_bit_stable():
    layer = Linear(5, 4, rng(1))
    x = rng(2).normal(size=(3, 5))
    assert layer(x).data.tobytes() == layer(x).data.tobytes()


# --- softmax ---------------------------------------------------------------


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=2, max_size=100), st.floats(-100, 100))
def test_softmax_laws(logits, shift):
    z = np.array(logits)
    p = softmax(Tensor(z)).data
    assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-9
    assert np.max(np.abs(softmax(Tensor(z + shift)).data - p)) < 1e-9


def test_log_softmax_consistent():
    z = rng().normal(size=(4, 7))
    assert np.allclose(np.exp(log_softmax(Tensor(z)).data), softmax(Tensor(z)).data, atol=1e-12)


# --- emotion embedding ----------------------------------------------------


def test_embed_identity_matrix():
    emb = EmotionEmbedding(8, 8, rng())
    emb.matrix.data = np.eye(8)
    assert np.array_equal(emb(3).data, np.eye(8)[3])
    with pytest.raises(DomainError):
        emb(8)


def test_embed_gradient_is_column():
    emb = EmotionEmbedding(16, 8, rng())
    e = emb(5)
    (e * e).sum().backward()
    expected = np.zeros((16, 8))
    expected[:, 5] = 2 * emb.matrix.data[:, 5]
    assert np.allclose(emb.matrix.grad, expected, atol=1e-15)


def test_embed_batch():
    emb = EmotionEmbedding(4, 8, rng())
    assert np.array_equal(emb(np.array([1, 7])).data, emb.matrix.data[:, [1, 7]].T)


# --- losses -----------------------------------------------------------------


def naive_weighted_l1(pred, target, w):
    N, P, _ = pred.shape
    total = 0.0
    for n in range(N):
        for p in range(P):
            for c, weight in enumerate((1.0, w, 1.0)):
                total += weight * abs(pred[n, p, c] - target[n, p, c])
    return total / (N * P * 3)


def test_weighted_l1_examples():
    x = np.zeros((1, 1, 3))
    assert weighted_l1(x, x).item() == 0.0
    assert weighted_l1(x + [0, 1, 0], x, 2.0).item() == pytest.approx(2 / 3, abs=1e-15)
    with pytest.raises(StructuralError):
        weighted_l1(np.zeros((2, 147, 3)), np.zeros((3, 147, 3)))
    with pytest.raises(DomainError):
        weighted_l1(x, x, 0.5)


def test_weighted_l1_matches_loop_oracle():
    r = rng(3)
    a, b = r.normal(size=(4, 147, 3)), r.normal(size=(4, 147, 3))
    assert abs(weighted_l1(a, b, 2.0).item() - naive_weighted_l1(a, b, 2.0)) < 1e-12


def test_weighted_l1_unit_weight_is_mae():
    r = rng(4)
    a, b = r.normal(size=(2, 147, 3)), r.normal(size=(2, 147, 3))
    assert abs(weighted_l1(a, b, 1.0).item() - np.mean(np.abs(a - b))) < 1e-15


def test_cross_entropy_examples():
    onehot = np.zeros(100)
    onehot[42] = 1
    assert cross_entropy(onehot, 42).item() == 0.0
    assert cross_entropy(np.full(100, 0.01), 17).item() == pytest.approx(math.log(100), abs=1e-12)
    assert math.log(100) == pytest.approx(4.60517, abs=1e-5)
    with pytest.raises(DomainError):
        cross_entropy(np.full(100, 0.01), 100)


def test_cross_entropy_batch_is_mean():
    p = softmax(Tensor(rng(5).normal(size=(3, 10)))).data
    t = [1, 4, 9]
    batch = cross_entropy(p, t).item()
    singles = [cross_entropy(p[i], t[i]).item() for i in range(3)]
    assert abs(batch - np.mean(singles)) < 1e-12
    assert abs(softmax_cross_entropy(np.log(p), t).item() - batch) < 1e-12


def test_l1_shape_check():
    with pytest.raises(StructuralError):
        l1(np.zeros(3), np.zeros(4))


# --- gradient checks -------------------------------------------------------


def test_grad_check_rejects_non_scalar():
    w = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(UsageError):
        grad_check(lambda: w * 2.0, [w])


def test_grad_check_linear_weighted_l1():
    layer = Linear(6, 9, rng(6))
    x, y = rng(7).normal(size=(4, 6)), rng(8).normal(size=(4, 3, 3))
    err = grad_check(lambda: weighted_l1(layer(x).reshape(4, 3, 3), y, 2.0), layer.parameters())
    assert err < TOL


def test_grad_check_recurrent_cross_entropy():
    cell, head = LSTMCell(4, 5, rng(9)), Linear(5, 6, rng(10))
    xs = rng(11).normal(size=(3, 2, 4))

    def fn():
        state = cell.initial_state(2)
        for t in range(3):
            state = cell(xs[t], state)
        return cross_entropy(softmax(head(state[0])), [1, 5])

    assert grad_check(fn, cell.parameters() + head.parameters()) < TOL


def test_grad_check_embedding_linear_softmax():
    emb, head = Embedding(10, 4, rng(12)), Linear(4, 10, rng(13))
    idx = np.array([3, 3, 7])
    assert grad_check(lambda: cross_entropy(softmax(head(emb(idx))), [1, 2, 3]),
                      emb.parameters() + head.parameters()) < TOL


def test_grad_check_mlp_and_emotion_embedding():
    mlp, emb = MLP(8, 6, 3, rng(14)), EmotionEmbedding(8, 5, rng(15))
    labels = np.array([0, 4, 2])
    assert grad_check(lambda: softmax_cross_entropy(mlp(emb(labels)), [2, 0, 1]),
                      mlp.parameters() + emb.parameters()) < TOL


def test_grad_check_bilstm_encoder():
    enc = BiLSTMEncoder(3, 4, rng(16))
    window = rng(17).normal(size=(2, 5, 3))
    target = rng(18).normal(size=(2, 8))
    assert grad_check(lambda: l1(enc(window), target) + (enc(window) ** 2).mean()
                      if hasattr(Tensor, "__pow__") else l1(enc(window), target),
                      enc.parameters()) < TOL


def test_grad_check_concat_stack_index():
    a = Tensor(rng(19).normal(size=(3, 2)), requires_grad=True)
    b = Tensor(rng(20).normal(size=(3, 4)), requires_grad=True)

    def fn():
        c = concat([a, b], axis=1)
        s = stack([c, c.tanh()], axis=0)
        return (s[1, :, 2:] * s[0, :, :4]).sigmoid().sum() + s[:, [0, 2]].abs().mean()

    assert grad_check(fn, [a, b]) < TOL


# --- optimizer and checkpoints ------------------------------------------------


def test_adam_decreases_a_quadratic():
    w = Tensor(np.array([3.0, -2.0]), requires_grad=True)
    opt = Adam([("w", w)], lr=0.1)
    for _ in range(200):
        opt.zero_grad()
        (w * w).sum().backward()
        opt.step()
    assert np.all(np.abs(w.data) < 0.05)


def test_adam_state_round_trip():
    layer = Linear(3, 2, rng(21))
    opt = Adam(list(layer.named_parameters()))
    x = rng(22).normal(size=(4, 3))
    for _ in range(3):
        opt.zero_grad()
        layer(x).abs().mean().backward()
        opt.step()
    state = opt.state_dict()
    twin = Linear(3, 2, rng(99))
    twin.load_state_dict(layer.state_dict())
    opt2 = Adam(list(twin.named_parameters()))
    opt2.load_state_dict(state)
    for o, l in ((opt, layer), (opt2, twin)):
        o.zero_grad()
        l(x).abs().mean().backward()
        o.step()
    assert np.array_equal(layer.weight.data, twin.weight.data)


def test_state_dict_mismatch():
    with pytest.raises(StructuralError):
        Linear(3, 2, rng()).load_state_dict(Linear(3, 3, rng()).state_dict())


def test_checkpoint_round_trip(tmp_path):
    arrays = {"a": rng(23).normal(size=(3, 4)), "b": np.arange(5.0)}
    digest = save_checkpoint(tmp_path / "m.ckpt", arrays, {"note": "x"})
    back, meta = load_checkpoint(tmp_path / "m.ckpt")
    assert meta["note"] == "x"
    assert all(np.array_equal(back[k], arrays[k]) for k in arrays)
    assert checkpoint_hash(tmp_path / "m.ckpt") == digest


def test_checkpoint_corruption_detected(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {"a": np.ones(10)})
    raw = bytearray(path.read_bytes())
    raw[-3] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(ChecksumError):
        load_checkpoint(path)
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(ChecksumError):
        load_checkpoint(path)
