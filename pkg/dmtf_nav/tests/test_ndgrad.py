"""Tests for the ndgrad tensor library."""

import numpy as np
import pytest

from dmtf_nav.core.errors import CheckpointError, DimensionError, GradientError, NumericError, TrainingError
from dmtf_nav.ndgrad import (
    AdamState,
    GradTape,
    Parameter,
    Tensor,
    adam_step,
    backward,
    clip_grad_norm,
    gradcheck,
    load_checkpoint,
    ops,
    save_checkpoint,
)


def test_bias_gradient_sums_over_leading_axes():
    x = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor(np.zeros(3), requires_grad=True)
    with GradTape():
        loss = ops.sum(x + b)
    backward(loss)
    np.testing.assert_array_equal(b.grad, [2.0, 2.0, 2.0])
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_non_suffix_broadcast_is_rejected():
    with pytest.raises(DimensionError):
        Tensor(np.ones((2, 3))) + Tensor(np.ones(2))


def test_ops_outside_a_tape_are_not_recorded():
    x = Tensor(np.ones(3), requires_grad=True)
    y = ops.sum(x * 2.0)
    assert not y.requires_grad
    with pytest.raises(GradientError):
        backward(y)


def test_backward_twice_on_one_tape_fails():
    x = Tensor(np.ones(3), requires_grad=True)
    with GradTape():
        loss = ops.sum(ops.square(x))
    backward(loss)
    with pytest.raises(GradientError):
        backward(loss)


def test_advanced_index_gradient_accumulates_repeats():
    x = Tensor(np.arange(4.0), requires_grad=True)
    with GradTape():
        loss = ops.sum(x[np.array([0, 0, 2])])
    backward(loss)
    np.testing.assert_array_equal(x.grad, [2.0, 0.0, 1.0, 0.0])


def test_non_finite_output_raises():
    with pytest.raises(NumericError):
        ops.log(Tensor(np.array([1.0, 0.0])))


def test_softmax_rows_are_distributions(rng):
    x = Tensor(rng.normal(scale=10.0, size=(50, 7)))
    p = ops.softmax_lastdim(x).data
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)
    assert p.min() >= 0.0 and p.max() <= 1.0


def test_composite_gradients_match_finite_differences(rng):
    x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    w = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
    gain = Tensor(rng.uniform(0.5, 1.5, size=5), requires_grad=True)
    bias = Tensor(rng.normal(size=5), requires_grad=True)
    targets = np.array([0, 3, 1])

    def fn():
        h = ops.layer_norm(ops.gelu(ops.matmul(x, w)), gain, bias)
        logp = ops.log_softmax(ops.tanh(h))
        return -ops.mean(ops.take_along_last(logp, targets))

    result = gradcheck(fn, [x, w, gain, bias])
    assert result.ok, result.failures[:3]


def test_adam_first_step_moves_each_weight_by_lr():
    p = Parameter(np.array([1.0, -2.0]))
    p.grad = np.array([0.5, -3.0])
    state = AdamState.for_parameters([("p", p)], lr=0.1)
    adam_step([("p", p)], state)
    np.testing.assert_allclose(p.data, [0.9, -1.9], rtol=1e-6)
    assert state.step == 1


def test_adam_rejects_non_finite_gradients():
    p = Parameter(np.array([1.0, 2.0]))
    p.grad = np.array([np.nan, 0.0])
    state = AdamState.for_parameters([("p", p)], lr=0.1)
    with pytest.raises(TrainingError):
        adam_step([("p", p)], state)
    np.testing.assert_array_equal(p.data, [1.0, 2.0])
    assert state.step == 0


def test_clip_grad_norm_returns_pre_clip_norm():
    p = Parameter(np.zeros(2))
    p.grad = np.array([3.0, 4.0])
    assert clip_grad_norm([p], 1.0) == pytest.approx(5.0)
    np.testing.assert_allclose(p.grad, [0.6, 0.8], rtol=1e-9)


def test_checkpoint_round_trip_is_bitwise(tmp_path, rng):
    tensors = {
        "a": rng.normal(size=(3, 2)),
        "b": rng.normal(size=4).astype(np.float32),
    }
    path = tmp_path / "ckpt_000001.bin"
    save_checkpoint(path, tensors, {"update": 1})
    loaded, metadata = load_checkpoint(path)
    assert list(loaded) == ["a", "b"]
    for name, array in tensors.items():
        assert loaded[name].dtype == array.dtype
        assert loaded[name].tobytes() == array.tobytes()
    assert metadata == {"update": 1}


def test_truncated_checkpoint_names_the_tensor(tmp_path):
    path = tmp_path / "ckpt_000001.bin"
    save_checkpoint(path, {"weights": np.ones(8)}, {})
    path.write_bytes(path.read_bytes()[:20])
    with pytest.raises(CheckpointError, match="weights"):
        load_checkpoint(path)


def _normal(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def _away_from_zero(rng, *shape):
    signs = rng.choice([-1.0, 1.0], size=shape)
    return Tensor(signs * rng.uniform(0.2, 2.0, size=shape), requires_grad=True)


def _gather_case(rng):
    index = rng.integers(0, 4, size=6)

    def build(a):
        sliced = ops.reshape(a[1:3, ::2], (4,))
        gathered = ops.reshape(a[index], (18,))
        return ops.concat([sliced, gathered])

    return [_normal(rng, 4, 3)], build


def _take_case(rng):
    index = rng.integers(0, 5, size=3)
    return [_normal(rng, 3, 5)], lambda a: ops.take_along_last(a, index)


GRADIENT_CASES = {
    "add": lambda rng: ([_normal(rng, 3, 4), _normal(rng, 4)], ops.add),
    "sub": lambda rng: ([_normal(rng, 3, 4), _normal(rng, 3, 4)], ops.sub),
    "mul": lambda rng: ([_normal(rng, 2, 3, 4), _normal(rng, 4)], ops.mul),
    "matmul": lambda rng: ([_normal(rng, 2, 3, 4), _normal(rng, 2, 4, 2)], ops.matmul),
    "matmul_shared_weight": lambda rng: ([_normal(rng, 2, 3, 4), _normal(rng, 4, 2)], ops.matmul),
    "exp": lambda rng: ([_normal(rng, 3, 4)], ops.exp),
    "log": lambda rng: ([Tensor(rng.uniform(0.5, 2.0, size=(3, 4)), requires_grad=True)], ops.log),
    "tanh": lambda rng: ([_normal(rng, 3, 4)], ops.tanh),
    "sigmoid": lambda rng: ([_normal(rng, 3, 4)], ops.sigmoid),
    "gelu": lambda rng: ([_normal(rng, 3, 4)], ops.gelu),
    "relu": lambda rng: ([_away_from_zero(rng, 3, 4)], ops.relu),
    "abs": lambda rng: ([_away_from_zero(rng, 3, 4)], ops.abs),
    "sum": lambda rng: ([_normal(rng, 2, 3, 4)], lambda a: ops.sum(a, axis=1)),
    "mean": lambda rng: ([_normal(rng, 2, 3, 4)], lambda a: ops.mean(a, axis=-1, keepdims=True)),
    "softmax": lambda rng: ([_normal(rng, 3, 5)], ops.softmax_lastdim),
    "log_softmax": lambda rng: ([_normal(rng, 3, 5)], ops.log_softmax),
    "layer_norm": lambda rng: (
        [_normal(rng, 3, 5), Tensor(rng.uniform(0.5, 1.5, size=5), requires_grad=True), _normal(rng, 5)],
        ops.layer_norm,
    ),
    "unfold2d": lambda rng: ([_normal(rng, 1, 5, 5, 2)], lambda a: ops.unfold2d(a, kernel=3, stride=2)),
    "getitem": _gather_case,
    "concat": lambda rng: ([_normal(rng, 2, 3), _normal(rng, 4, 3)], lambda a, b: ops.concat([a, b], axis=0)),
    "stack": lambda rng: ([_normal(rng, 2, 3), _normal(rng, 2, 3)], lambda a, b: ops.stack([a, b], axis=1)),
    "permute": lambda rng: ([_normal(rng, 2, 3, 4)], lambda a: ops.reshape(ops.permute(a, (2, 0, 1)), (4, 6))),
    "take_along_last": _take_case,
}


@pytest.mark.parametrize("op", sorted(GRADIENT_CASES))
def test_op_gradients_match_finite_differences(op):
    rng = np.random.default_rng(sum(map(ord, op)))
    for trial in range(100):
        inputs, build = GRADIENT_CASES[op](rng)
        weights = Tensor(rng.normal(size=build(*[Tensor(t.data) for t in inputs]).shape))
        result = gradcheck(lambda: ops.sum(build(*inputs) * weights), inputs, h=1e-5, rtol=1e-4)
        assert result.ok, f"{op} trial {trial}: {result.failures[:3]}"


def test_adam_zero_gradient_keeps_params_and_decays_moments():
    p = Parameter(np.array([0.5, -1.5]))
    state = AdamState.for_parameters([("p", p)], lr=0.1)
    p.grad = np.zeros(2)
    adam_step([("p", p)], state)
    np.testing.assert_array_equal(p.data, [0.5, -1.5])

    p.grad = np.array([1.0, -2.0])
    adam_step([("p", p)], state)
    m, v = state.m["p"].copy(), state.v["p"].copy()
    p.grad = np.zeros(2)
    adam_step([("p", p)], state)
    np.testing.assert_allclose(state.m["p"], 0.9 * m, rtol=1e-12)
    np.testing.assert_allclose(state.v["p"], 0.999 * v, rtol=1e-12)
    assert state.step == 3


def test_adam_minimizes_a_quadratic():
    x = Parameter(np.array([1.0]))
    state = AdamState.for_parameters([("x", x)], lr=0.1)
    for _ in range(500):
        x.zero_grad()
        with GradTape():
            loss = ops.sum(ops.square(x))
        backward(loss)
        adam_step([("x", x)], state)
    assert abs(x.data[0]) < 1e-3
