import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gazegraph import numerics as nx
from gazegraph.errors import ContractError, DimensionError, FormatError, NumericError


def finite(shape):
    return arrays(np.float64, shape, elements=st.floats(-1, 1, allow_nan=False, allow_infinity=False))


# ---------------------------------------------------------------- matmul

def test_matmul_identity_returns_vector(rng):
    v = rng.normal(size=(3, 1))
    assert np.array_equal(nx.matmul(np.eye(3), v).data, v)


def test_matmul_hand_product():
    out = nx.matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[1.0], [1.0]]))
    assert np.array_equal(out.data, [[3.0], [7.0]])


def test_matmul_zero_matrix(rng):
    assert not nx.matmul(np.zeros((2, 4)), rng.normal(size=(4, 5))).data.any()


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 1\)"):
        nx.matmul(np.zeros((2, 3)), np.zeros((4, 1)))


@given(finite((3, 4)), finite((4, 2)))
def test_matmul_matches_numpy(a, b):
    assert np.allclose(nx.matmul(a, b).data, a @ b)


# ---------------------------------------------------------------- elementwise

def test_relu_example():
    assert np.array_equal(nx.elementwise("relu", np.array([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])


def test_mean_of_identical_vectors(rng):
    v = rng.normal(size=5)
    assert np.allclose(nx.elementwise("mean", np.tile(v, (4, 1)), axis=0).data, v)


def test_l2norm_three_four():
    assert np.allclose(nx.elementwise("l2norm", np.array([3.0, 4.0])).data, [0.6, 0.8])


@given(finite((6,)))
def test_l2norm_unit_norm(v):
    if np.linalg.norm(v) < 1e-6:
        return
    assert abs(np.linalg.norm(nx.l2norm(v).data) - 1.0) < 1e-12


def test_l2norm_zero_vector_warns_and_returns_zero():
    with pytest.warns(RuntimeWarning):
        out = nx.l2norm(np.zeros(3))
    assert not out.data.any()


def test_unknown_elementwise_op():
    with pytest.raises(ContractError):
        nx.elementwise("softplus", np.zeros(2))


def test_add_incompatible_shapes():
    with pytest.raises(DimensionError):
        nx.add(np.zeros((2, 3)), np.zeros((3, 2)))


def test_concat_incompatible_shapes():
    with pytest.raises(DimensionError):
        nx.elementwise("concat", np.zeros((2, 3)), np.zeros((3, 3)), axis=1)


# ---------------------------------------------------------------- cross-entropy

def test_ce_uniform_logits():
    assert nx.softmax_cross_entropy(np.zeros(4), 2).item() == pytest.approx(math.log(4), abs=1e-12)


def test_ce_confident_logits():
    logits = np.full(5, -1000.0)
    logits[3] = 1000.0
    assert nx.softmax_cross_entropy(logits, 3).item() == pytest.approx(0.0, abs=1e-12)


def test_ce_hand_value():
    # -log(e^1 / (e^1 + e^2 + e^3))
    expected = -1.0 + math.log(math.exp(1) + math.exp(2) + math.exp(3))
    got = nx.softmax_cross_entropy(np.array([1.0, 2.0, 3.0]), 0).item()
    assert got == pytest.approx(expected, abs=1e-12)
    assert got == pytest.approx(2.4076, abs=1e-4)


def test_ce_gradient_is_softmax_minus_onehot():
    logits = nx.Param(np.array([0.5, -1.0, 2.0]), "z")
    nx.backward(nx.softmax_cross_entropy(logits, 1))
    p = np.exp(logits.data) / np.exp(logits.data).sum()
    assert np.allclose(logits.grad, p - np.eye(3)[1])


@pytest.mark.parametrize("target", [-1, 3])
def test_ce_out_of_range(target):
    with pytest.raises(IndexError):
        nx.softmax_cross_entropy(np.zeros(3), target)


# ---------------------------------------------------------------- backward

def test_backward_sum_of_product():
    w = nx.Param(np.array([1.0, -2.0, 0.5]), "w")
    x = np.array([3.0, 4.0, 5.0])
    nx.backward(nx.sum_all(nx.mul(w, x)))
    assert np.array_equal(w.grad, x)


def test_backward_constant_loss_gives_zero_grads():
    w = nx.Param(np.ones(3), "w")
    nx.backward(nx.sum_all(nx.as_tensor(np.ones(3))))
    assert not w.grad.any()


def test_backward_accumulates_without_reset():
    w = nx.Param(np.array([2.0]), "w")
    for _ in range(2):
        nx.backward(nx.sum_all(nx.mul(w, w)))
    assert np.allclose(w.grad, [8.0])
    w.zero_grad()
    assert not w.grad.any()


def test_backward_rejects_non_scalar():
    with pytest.raises(ContractError):
        nx.backward(nx.mul(nx.Param(np.ones(2), "w"), 2.0))


def _composed(params, x):
    w1, b1, w2 = params
    h = nx.tanh(nx.add(nx.matmul(x, w1), b1))
    h = nx.concat([nx.relu(h), nx.sigmoid(h)], axis=1)
    h = nx.l2norm(h)
    z = nx.matmul(h, w2)
    return nx.add(nx.cross_entropy(z, [0, 2, 1]), nx.mean(nx.mul(h, h)))


def test_gradcheck_composed_graph(rng):
    params = [nx.Param(rng.uniform(-1, 1, (4, 5)), "w1"), nx.Param(rng.uniform(-1, 1, (1, 5)), "b1"),
              nx.Param(rng.uniform(-1, 1, (10, 3)), "w2")]
    x = rng.uniform(-1, 1, (3, 4))
    errs = nx.gradcheck(lambda: _composed(params, x), params)
    assert max(errs.values()) < 1e-4


OP_CASES = {
    "add": lambda a, b: nx.add(a, b),
    "sub": lambda a, b: nx.sub(a, b),
    "mul": lambda a, b: nx.mul(a, b),
    "matmul": lambda a, b: nx.matmul(a, nx.reshape(b, (3, 2))),
    "relu": lambda a, b: nx.mul(nx.relu(a), b),
    "tanh": lambda a, b: nx.mul(nx.tanh(a), b),
    "sigmoid": lambda a, b: nx.mul(nx.sigmoid(a), b),
    "concat": lambda a, b: nx.concat([a, b], axis=0),
    "mean": lambda a, b: nx.mul(nx.mean(a, axis=0), nx.mean(b, axis=0)),
    "l2norm": lambda a, b: nx.mul(nx.l2norm(a), b),
    "slice": lambda a, b: nx.mul(nx.slice_last(a, 1, 3), nx.slice_last(b, 0, 2)),
    "transpose": lambda a, b: nx.mul(nx.transpose(nx.reshape(a, (1, 2, 3)), (2, 0, 1)), nx.reshape(b, (3, 1, 2))),
    "take_rows": lambda a, b: nx.mul(nx.take_rows(a, [1, 0, 1]), nx.take_rows(b, [0, 0, 1])),
    "segment_mean": lambda a, b: nx.mul(nx.segment_mean(a, [1, 0], 2), b),
    "batched_matvec": lambda a, b: nx.batched_matvec(nx.reshape(nx.concat([a, a], axis=1), (2, 3, 2)),
                                                     nx.slice_last(b, 0, 2)),
    "lstm_cell": lambda a, b: nx.lstm_cell(nx.concat([a, b, a, b], axis=1), nx.slice_last(a, 0, 3)),
}


@pytest.mark.parametrize("name", sorted(OP_CASES))
@settings(max_examples=10)
@given(a=finite((2, 3)), b=finite((2, 3)))
def test_gradcheck_every_op(name, a, b):
    pa, pb = nx.Param(a, "a"), nx.Param(b, "b")
    weights = np.linspace(-1.0, 1.0, 36)

    def loss():
        out = OP_CASES[name](pa, pb)
        w = weights[: out.size].reshape(out.shape)
        return nx.sum_all(nx.mul(out, w))

    if name == "l2norm" and np.min(np.linalg.norm(a, axis=-1)) < 0.05:
        return
    if name in ("relu",) and np.min(np.abs(a)) < 1e-4:
        return  # finite differences straddle the kink
    errs = nx.gradcheck(loss, [pa, pb])
    assert max(errs.values()) < 1e-4, errs


def test_cross_entropy_gradcheck(rng):
    z = nx.Param(rng.uniform(-1, 1, (4, 6)), "z")
    w = rng.uniform(0, 1, 4)
    errs = nx.gradcheck(lambda: nx.cross_entropy(z, [0, 5, 2, 2], w), [z])
    assert errs["z"] < 1e-4


def test_tape_replay_is_bit_identical(rng):
    params = [nx.Param(rng.uniform(-1, 1, (4, 5)), "w1"), nx.Param(rng.uniform(-1, 1, (1, 5)), "b1"),
              nx.Param(rng.uniform(-1, 1, (10, 3)), "w2")]
    x = rng.uniform(-1, 1, (3, 4))
    results = []
    for _ in range(2):
        nx.zero_grad(params)
        loss = _composed(params, x)
        nx.backward(loss)
        results.append((loss.item(), [p.grad.copy() for p in params]))
    assert results[0][0] == results[1][0]
    assert all(np.array_equal(a, b) for a, b in zip(results[0][1], results[1][1]))


# ---------------------------------------------------------------- Adam

def test_adam_zero_gradient_leaves_params():
    p = nx.Param(np.array([1.0, -2.0]), "p")
    state = nx.AdamState()
    nx.adam_step(state, [p])
    assert np.array_equal(p.data, [1.0, -2.0])
    assert state.step == 1
    assert not state.m["p"].any() and not state.v["p"].any()


def test_adam_single_step_on_square():
    w = nx.Param(np.array([1.0]), "w")
    nx.backward(nx.sum_all(nx.mul(w, w)))
    nx.adam_step(nx.AdamState(lr=0.1), [w])
    # bias-corrected first step moves by lr * g / (|g| + eps/...) = 0.1
    assert w.data[0] == pytest.approx(0.9, abs=1e-6)


def test_adam_drives_quadratic_down():
    target = np.array([0.3, -0.7, 1.5])
    w = nx.Param(np.zeros(3), "w")
    state = nx.AdamState(lr=0.05)
    losses = []
    for _ in range(200):
        w.zero_grad()
        d = nx.sub(w, target)
        loss = nx.sum_all(nx.mul(d, d))
        losses.append(loss.item())
        nx.backward(loss)
        nx.adam_step(state, [w])
    assert losses[-1] < 1e-3 * losses[0]
    assert all(b <= a + 1e-12 for a, b in zip(losses[:20], losses[1:21]))


def test_adam_nan_gradient_names_param():
    p = nx.Param(np.ones(2), "decoder.w")
    p.grad = np.array([np.nan, 0.0])
    with pytest.raises(NumericError, match="decoder.w"):
        nx.adam_step(nx.AdamState(), [p])


def test_adam_step_counter_increases():
    p = nx.Param(np.ones(2), "p")
    state = nx.AdamState()
    for k in range(1, 4):
        nx.adam_step(state, [p])
        assert state.step == k


# ---------------------------------------------------------------- checkpoints

def test_checkpoint_round_trip(tmp_path, rng):
    params = [nx.Param(rng.normal(size=(2, 3)), "a"), nx.Param(rng.normal(size=4), "b")]
    path = tmp_path / "m.ckpt"
    nx.save_checkpoint(path, params, {"note": "x"})
    arrays, meta = nx.load_checkpoint(path, params)
    assert meta["note"] == "x"
    assert all(np.array_equal(arrays[p.name], p.data) for p in params)


def test_checkpoint_bytes_are_reproducible(tmp_path):
    params = [nx.Param(np.arange(6.0).reshape(2, 3), "a")]
    nx.save_checkpoint(tmp_path / "1.ckpt", params)
    nx.save_checkpoint(tmp_path / "2.ckpt", params)
    assert (tmp_path / "1.ckpt").read_bytes() == (tmp_path / "2.ckpt").read_bytes()


def test_checkpoint_shape_mismatch(tmp_path):
    nx.save_checkpoint(tmp_path / "m.ckpt", [nx.Param(np.zeros((2, 3)), "a")])
    with pytest.raises(FormatError, match="a"):
        nx.load_checkpoint(tmp_path / "m.ckpt", [nx.Param(np.zeros((3, 2)), "a")])


def test_checkpoint_name_mismatch(tmp_path):
    nx.save_checkpoint(tmp_path / "m.ckpt", [nx.Param(np.zeros(2), "a")])
    with pytest.raises(FormatError):
        nx.load_checkpoint(tmp_path / "m.ckpt", [nx.Param(np.zeros(2), "b")])


def test_checkpoint_rejects_garbage(tmp_path):
    (tmp_path / "bad.ckpt").write_bytes(b"not a checkpoint")
    with pytest.raises(FormatError):
        nx.load_checkpoint(tmp_path / "bad.ckpt")


def test_forward_ops_stay_finite_on_finite_inputs(rng):
    x = rng.uniform(-50, 50, (4, 6))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        for op in ("relu", "tanh", "sigmoid", "l2norm"):
            assert np.all(np.isfinite(nx.elementwise(op, x).data))
