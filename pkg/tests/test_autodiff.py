import numpy as np
import pytest

from kigames.autodiff import ops
from kigames.autodiff.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from kigames.autodiff.gradcheck import check_gradients
from kigames.autodiff.gru import GruParams, gru_sequence, gru_step
from kigames.autodiff.nn import ParamStore, add_gru, add_linear, encode_batch
from kigames.autodiff.optim import Adam
from kigames.autodiff.tensor import ShapeError, Tape, Tensor
from kigames.autodiff.text import Vocab, tokenize


def t(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def test_tape_accumulates_shared_inputs():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    with Tape() as tape:
        y = ops.sum(ops.mul(x, x) + x)
    g = tape.backward(y, [x])
    assert np.allclose(g[x], 2 * x.data + 1)


@pytest.mark.parametrize("name", ["tanh", "sigmoid", "relu", "exp", "square"])
def test_unary_gradients(name, rng):
    x = t(rng, 3, 4)
    if name == "relu":
        x.data += np.sign(x.data) * 0.1
    f = getattr(ops, name)
    assert check_gradients(lambda: ops.sum(ops.mul(f(x), x)), [x]) < 1e-6


def test_leaky_relu_and_log_gradients(rng):
    x = t(rng, 5)
    x.data += np.sign(x.data) * 0.1
    assert check_gradients(lambda: ops.sum(ops.square(ops.leaky_relu(x, 0.2))), [x]) < 1e-6
    y = Tensor(rng.uniform(0.5, 2.0, size=4), requires_grad=True)
    assert check_gradients(lambda: ops.sum(ops.log(y)), [y]) < 1e-6


def test_linear_matmul_broadcast(rng):
    x, w, b = t(rng, 4, 3), t(rng, 3, 2), t(rng, 2)
    assert check_gradients(lambda: ops.sum(ops.square(ops.linear(x, w, b))), [x, w, b]) < 1e-6


def test_shape_ops_gradients(rng):
    a, b = t(rng, 2, 3), t(rng, 2, 2)
    fn = lambda: ops.sum(ops.square(ops.reshape(ops.concat([a, b], axis=1), (5, 2))))  # noqa: E731
    assert check_gradients(fn, [a, b]) < 1e-6
    fn = lambda: ops.sum(ops.mul(ops.stack([a, a], axis=0), 2.0))  # noqa: E731
    assert check_gradients(fn, [a]) < 1e-6


def test_take_accumulates_repeated_rows(rng):
    table = t(rng, 5, 3)
    ids = np.array([[0, 1], [1, 4]])
    with Tape() as tape:
        y = ops.sum(ops.take(table, ids))
    g = tape.backward(y, [table])[table]
    assert np.allclose(g[:, 0], [1, 2, 0, 0, 1])


def test_take_rejects_out_of_range(rng):
    with pytest.raises(IndexError):
        ops.take(t(rng, 3, 2), np.array([3]))


def test_scatter_and_getitem(rng):
    v = t(rng, 3)
    assert check_gradients(lambda: ops.sum(ops.square(ops.scatter(v, np.array([0, 2, 4]), 6))), [v]) < 1e-6
    m = t(rng, 4, 3)
    assert check_gradients(lambda: ops.sum(ops.square(ops.getitem(m, (slice(1, 3), 0)))), [m]) < 1e-6


def test_log_softmax_mask_and_fully_masked_rows(rng):
    x = t(rng, 3, 4)
    mask = np.array([[1, 1, 0, 1], [0, 0, 0, 0], [1, 0, 0, 0]], dtype=float)
    out = ops.log_softmax(x, mask=mask).data
    assert np.all(np.isfinite(out))
    assert np.allclose(np.exp(out[0][mask[0] > 0]).sum(), 1.0)
    assert np.allclose(out[1], 0.0)
    assert out[2, 0] == pytest.approx(0.0)
    fn = lambda: ops.sum(ops.mul(ops.log_softmax(x, mask=mask), mask))  # noqa: E731
    assert check_gradients(fn, [x]) < 1e-6


def test_cross_entropy_matches_closed_form(rng):
    z = t(rng, 5)
    loss = ops.cross_entropy(z, 2)
    p = np.exp(z.data) / np.exp(z.data).sum()
    assert float(loss.data) == pytest.approx(-np.log(p[2]))
    assert check_gradients(lambda: ops.cross_entropy(z, 2), [z]) < 1e-6
    with pytest.raises(IndexError):
        ops.cross_entropy(z, 5)


def test_binary_cross_entropy_weighted_and_mean(rng):
    logits = t(rng, 6)
    y = np.array([1, 0, 1, 1, 0, 0], dtype=float)
    w = np.array([0.5, 0.1, 0, 1, 2, 0.3])
    p = 1 / (1 + np.exp(-logits.data))
    ref = -(y * np.log(p) + (1 - y) * np.log(1 - p))
    assert float(ops.binary_cross_entropy(ops.sigmoid(logits), y).data) == pytest.approx(ref.mean())
    assert float(ops.binary_cross_entropy(ops.sigmoid(logits), y, weights=w).data) == pytest.approx((w * ref).sum())
    assert check_gradients(lambda: ops.binary_cross_entropy(ops.sigmoid(logits), y, weights=w), [logits]) < 1e-6


def test_negative_entropy(rng):
    z = t(rng, 2, 5)
    mask = np.array([[1, 1, 1, 0, 0], [1, 1, 1, 1, 1]], dtype=float)
    logp = ops.log_softmax(z, mask=mask)
    p = np.exp(logp.data) * mask
    ref = (p * np.where(mask > 0, logp.data, 0)).sum()
    assert float(ops.negative_entropy(logp, mask).data) == pytest.approx(ref)
    assert check_gradients(lambda: ops.negative_entropy(ops.log_softmax(z, mask=mask), mask), [z]) < 1e-6


def gru_params(rng, n_in, h):
    return GruParams(t(rng, n_in, 3 * h), t(rng, h, 3 * h), t(rng, 3 * h), t(rng, 3 * h))


def test_gru_step_matches_reference_equations(rng):
    p = gru_params(rng, 3, 4)
    x, h = rng.normal(size=(2, 3)), rng.normal(size=(2, 4))
    out = gru_step(Tensor(x), Tensor(h), p).data
    gx = x @ p.W_x.data + p.b_x.data
    gh = h @ p.W_h.data + p.b_h.data
    sig = lambda v: 1 / (1 + np.exp(-v))  # noqa: E731
    r = sig(gx[:, :4] + gh[:, :4])
    z = sig(gx[:, 4:8] + gh[:, 4:8])
    n = np.tanh(gx[:, 8:] + r * gh[:, 8:])
    assert np.allclose(out, (1 - z) * n + z * h)


def test_gru_step_gradients(rng):
    p = gru_params(rng, 3, 4)
    x, h = t(rng, 2, 3), t(rng, 2, 4)
    assert check_gradients(lambda: ops.sum(ops.square(gru_step(x, h, p))), [x, h, *p.tensors()]) < 1e-5


def test_gru_sequence_masking_holds_state(rng):
    p = gru_params(rng, 3, 4)
    X = rng.normal(size=(2, 5, 3))
    mask = np.array([[1, 1, 1, 0, 0], [1, 1, 1, 1, 1]], dtype=float)
    full = gru_sequence(Tensor(X), mask, p).data
    short = gru_sequence(Tensor(X[:1, :3]), np.ones((1, 3)), p).data
    assert np.allclose(full[0], short[0])


def test_gru_sequence_gradients_with_h0(rng):
    p = gru_params(rng, 3, 4)
    X = t(rng, 2, 4, 3)
    h0 = t(rng, 2, 4)
    mask = np.array([[1, 1, 0, 0], [1, 1, 1, 1]], dtype=float)
    fn = lambda: ops.sum(ops.square(gru_sequence(X, mask, p, h0=h0)))  # noqa: E731
    assert check_gradients(fn, [X, h0, *p.tensors()]) < 1e-5


def test_encode_batch_empty_sequence_is_zero(rng):
    store = ParamStore()
    add_gru(store, rng, "g", 3, 4)
    emb = t(rng, 6, 3)
    out = encode_batch(emb, store.gru("g"), [[], [1, 2]]).data
    assert np.allclose(out[0], 0.0)


def test_adam_matches_textbook_update(rng):
    store = ParamStore()
    add_linear(store, rng, "l", 2, 2)
    w = store["l.W"]
    before = w.data.copy()
    opt = Adam(store, lr=0.1)
    g = rng.normal(size=w.shape)
    for k in range(1, 4):
        opt.step({w: g})
    m = g * (1 - 0.9 ** 3)
    v = g * g * (1 - 0.999 ** 3)
    # constant gradient: bias-corrected moments equal g and g^2 at every step
    expected = before - 3 * 0.1 * (m / (1 - 0.9 ** 3)) / (np.sqrt(v / (1 - 0.999 ** 3)) + 1e-8)
    assert np.allclose(w.data, expected, atol=1e-9)


def test_adam_clip_norm_bounds_update(rng):
    store = ParamStore()
    add_linear(store, rng, "l", 3, 3)
    opt = Adam(store, lr=1.0, clip_norm=1e-3)
    w = store["l.W"]
    before = w.data.copy()
    opt.step({w: np.full(w.shape, 1e6)})
    assert np.all(np.abs(w.data - before) <= 1.0 + 1e-9)


def test_checkpoint_roundtrip_bit_exact(tmp_path, rng):
    store = ParamStore()
    add_linear(store, rng, "a", 3, 2)
    add_gru(store, rng, "g", 2, 3)
    path = save_checkpoint(tmp_path / "c.npz", store, {"k": 1})
    state, meta = load_checkpoint(path)
    assert meta == {"k": 1}
    for name, arr in store.state_dict().items():
        assert np.array_equal(state[name], arr)
    other = ParamStore()
    add_linear(other, rng, "a", 3, 5)
    add_gru(other, rng, "g", 2, 3)
    with pytest.raises(ShapeError, match="a.W"):
        other.load_state_dict(state)


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.npz"
    np.savez(path, a=np.zeros(2))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_tokenize_and_vocab():
    assert tokenize("Move the Box, 20.5 degrees!") == ["move", "the", "box", ",", "20.5", "degrees", "!"]
    v = Vocab.from_texts(["a red box"])
    assert v.decode(v.encode("red box")) == "red box"
    assert v.encode("zebra") == [v.unk_id]
