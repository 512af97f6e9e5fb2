import numpy as np
import pytest

from tsnvae.autodiff import (
    Tape,
    Tensor,
    add,
    affine,
    avg_pool2d,
    backward,
    clamp,
    concat,
    constant,
    exp,
    gather_rows,
    leaky_relu,
    mean_all,
    mul,
    reshape,
    scale,
    sigmoid,
    sub,
    sum_elems,
)

from _oracles import finite_difference_grads, max_rel_error


def test_leaky_relu_definition():
    tape = Tape()
    out = leaky_relu(tape, constant([-1.0, 2.0, 0.0]), 0.2)
    assert np.allclose(out.data, [-0.2, 2.0, 0.0])


def test_affine_identity():
    tape = Tape()
    out = affine(tape, constant([1.0, 2.0]), constant(np.eye(2)), constant([0.0, 0.0]))
    assert np.allclose(out.data, [1.0, 2.0])


def test_sum_arithmetic():
    tape = Tape()
    assert sum_elems(tape, constant([1.5, 2.5, -4.0])).data == pytest.approx(0.0)


def test_square_gradient_analytic():
    tape = Tape()
    x = Tensor([3.0], requires_grad=True)
    backward(tape, sum_elems(tape, mul(tape, x, x)))
    assert np.allclose(x.grad, [6.0])


def test_gradient_of_constant_is_zero():
    # a loss with no path to the parameter leaves its gradient at zero
    w = Tensor([1.0, -2.0], requires_grad=True)
    tape = Tape()
    loss = sum_elems(tape, constant([5.0]))
    backward(tape, loss)
    assert w.grad is None
    # an explicit zero-weighted path produces an actual zero vector
    tape = Tape()
    loss = sum_elems(tape, mul(tape, w, constant([0.0, 0.0])))
    backward(tape, loss)
    assert np.allclose(w.grad, [0.0, 0.0])


def test_backward_rejects_non_scalar():
    tape = Tape()
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = mul(tape, x, x)
    with pytest.raises(ValueError, match="scalar"):
        backward(tape, y)


def test_two_layer_network_matches_finite_differences():
    rng = np.random.default_rng(1234)
    w1 = Tensor(rng.standard_normal((6, 5)) * 0.7, requires_grad=True)
    b1 = Tensor(rng.standard_normal(5) * 0.1, requires_grad=True)
    w2 = Tensor(rng.standard_normal((5, 3)) * 0.7, requires_grad=True)
    b2 = Tensor(rng.standard_normal(3) * 0.1, requires_grad=True)
    x = constant(rng.standard_normal((4, 6)))
    probe = constant(rng.standard_normal((4, 3)))

    def run():
        tape = Tape()
        h = leaky_relu(tape, affine(tape, x, w1, b1), 0.2)
        out = sigmoid(tape, affine(tape, h, w2, b2))
        return tape, sum_elems(tape, mul(tape, out, probe))

    tape, loss = run()
    backward(tape, loss)
    numeric = finite_difference_grads(lambda: float(run()[1].data), [w1, b1, w2, b2])
    for t, num in zip([w1, b1, w2, b2], numeric):
        assert max_rel_error(t.grad, num) < 1e-4


@pytest.mark.parametrize("name", [
    "affine", "leaky_relu", "sigmoid", "exp", "add", "sub", "mul",
    "sum", "sum_axis", "reshape", "avg_pool2d", "concat", "gather_rows", "clamp",
])
def test_primitive_gradients_match_finite_differences(name):
    rng = np.random.default_rng(hash(name) % 2**32)

    def make(shape, scale=1.0, off=0.0):
        return Tensor(rng.standard_normal(shape) * scale + off, requires_grad=True)

    if name == "affine":
        tensors = [make((3, 4)), make((4, 2)), make(2)]
        op = lambda tape: affine(tape, *tensors)
    elif name == "leaky_relu":
        # keep values away from the kink at 0
        t = make((3, 4))
        t.data[np.abs(t.data) < 0.1] += 0.5
        tensors = [t]
        op = lambda tape: leaky_relu(tape, t, 0.2)
    elif name == "sigmoid":
        tensors = [make((3, 4))]
        op = lambda tape: sigmoid(tape, tensors[0])
    elif name == "exp":
        tensors = [make((3, 4), 0.5)]
        op = lambda tape: exp(tape, tensors[0])
    elif name == "add":
        tensors = [make((3, 4)), make((1, 4))]
        op = lambda tape: add(tape, *tensors)
    elif name == "sub":
        tensors = [make((3, 4)), make((3, 1))]
        op = lambda tape: sub(tape, *tensors)
    elif name == "mul":
        tensors = [make((3, 4)), make((3, 4))]
        op = lambda tape: mul(tape, *tensors)
    elif name == "sum":
        tensors = [make((3, 4))]
        op = lambda tape: sum_elems(tape, tensors[0])
    elif name == "sum_axis":
        tensors = [make((3, 4))]
        op = lambda tape: sum_elems(tape, tensors[0], axis=-1)
    elif name == "reshape":
        tensors = [make((3, 4))]
        op = lambda tape: reshape(tape, tensors[0], (2, 6))
    elif name == "avg_pool2d":
        tensors = [make((2, 4, 4, 3))]
        op = lambda tape: avg_pool2d(tape, tensors[0], 2)
    elif name == "concat":
        tensors = [make((2, 3)), make((2, 3))]
        op = lambda tape: concat(tape, tensors, axis=1)
    elif name == "gather_rows":
        tensors = [make((5, 3))]
        op = lambda tape: gather_rows(tape, tensors[0], [0, 2, 2, 4])
    elif name == "clamp":
        t = make((3, 4), 2.0)
        t.data[np.abs(np.abs(t.data) - 1.0) < 0.1] *= 1.5  # stay off the clamp edges
        tensors = [t]
        op = lambda tape: clamp(tape, t, -1.0, 1.0)
    else:
        raise AssertionError(name)

    probe = None

    def run():
        nonlocal probe
        tape = Tape()
        out = op(tape)
        if probe is None:
            probe = constant(rng.standard_normal(out.data.shape))
        return tape, sum_elems(tape, mul(tape, out, probe))

    tape, loss = run()
    backward(tape, loss)
    numeric = finite_difference_grads(lambda: float(run()[1].data), tensors)
    for t, num in zip(tensors, numeric):
        assert max_rel_error(t.grad, num) < 1e-4, name


def test_forward_values_match_numpy_definitions():
    rng = np.random.default_rng(7)
    tape = Tape()
    x = constant(rng.standard_normal((2, 6)))
    assert np.allclose(exp(tape, x).data, np.exp(x.data))
    assert np.allclose(sigmoid(tape, x).data, 1 / (1 + np.exp(-x.data)))
    assert np.allclose(reshape(tape, x, (3, 4)).data, x.data.reshape(3, 4))
    img = constant(rng.random((1, 4, 6, 3)))
    pooled = avg_pool2d(tape, img, 2)
    assert pooled.data.shape == (1, 2, 3, 3)
    assert np.allclose(pooled.data[0, 0, 0], img.data[0, :2, :2].mean(axis=(0, 1)))
    assert np.allclose(clamp(tape, x, -0.5, 0.5).data, np.clip(x.data, -0.5, 0.5))
    assert np.allclose(
        gather_rows(tape, x, [1, 0, 1]).data, x.data[[1, 0, 1]]
    )


def test_shape_mismatches_rejected_with_diagnostics():
    tape = Tape()
    with pytest.raises(ValueError, match="affine"):
        affine(tape, constant([1.0, 2.0, 3.0]), constant(np.eye(2)), constant([0.0, 0.0]))
    with pytest.raises(ValueError, match="affine"):
        affine(tape, constant([1.0, 2.0]), constant(np.eye(2)), constant([0.0]))
    with pytest.raises(ValueError, match="add"):
        add(tape, constant(np.ones((2, 3))), constant(np.ones((4, 5))))
    with pytest.raises(ValueError, match="reshape"):
        reshape(tape, constant(np.ones(5)), (2, 3))
    with pytest.raises(ValueError, match="avg_pool2d"):
        avg_pool2d(tape, constant(np.ones((5, 5, 3))), 2)
    with pytest.raises(ValueError, match="gather_rows"):
        gather_rows(tape, constant(np.ones((3, 2))), [0, 3])


def test_finite_outputs_on_finite_inputs():
    rng = np.random.default_rng(99)
    w = Tensor(rng.standard_normal((8, 8)) * 3, requires_grad=True)
    x = constant(rng.standard_normal((4, 8)) * 5)
    tape = Tape()
    h = sigmoid(tape, affine(tape, x, w, constant(np.zeros(8))))
    h = leaky_relu(tape, h, 0.2)
    loss = mean_all(tape, mul(tape, h, h))
    backward(tape, loss)
    assert np.isfinite(loss.data).all()
    assert np.isfinite(w.grad).all()


def test_gradient_accumulates_for_shared_tensor():
    # the same tensor feeding two branches gets the sum of both adjoints
    x = Tensor([2.0], requires_grad=True)
    tape = Tape()
    y = add(tape, mul(tape, x, x), scale(tape, x, 3.0))  # x^2 + 3x
    backward(tape, sum_elems(tape, y))
    assert np.allclose(x.grad, [7.0])


def test_tape_topological_and_single_visit():
    # every node's inputs are created before it; backward visits each once
    rng = np.random.default_rng(3)
    w = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
    x = constant(rng.standard_normal((2, 3)))
    tape = Tape()
    h = affine(tape, x, w, constant(np.zeros(3)))
    h2 = mul(tape, h, h)
    loss = sum_elems(tape, h2)
    seen = set()
    for _, inputs, out, _ in tape.nodes:
        for t in inputs:
            assert id(t) not in (id(out),)
        assert id(out) not in seen, "output produced twice"
        seen.add(id(out))
    backward(tape, loss)
    assert w.grad is not None
