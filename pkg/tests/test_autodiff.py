import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from miqa_pns import autodiff as ad
from miqa_pns.autodiff import Tape, Tensor, forward_op
from miqa_pns.errors import ShapeError, TapeError

from conftest import central_difference, relative_error, tape_gradients, tape_value


def test_matmul_example():
    with Tape():
        out = forward_op("matmul", [Tensor([[1, 2], [3, 4]]), Tensor([[1], [1]])])
    np.testing.assert_array_equal(out.data, [[3], [7]])


def test_relu_example():
    with Tape():
        out = ad.relu(Tensor([-1.0, 0.0, 2.0]))
    np.testing.assert_array_equal(out.data, [0, 0, 2])


def test_log_softmax_uniform():
    with Tape():
        out = ad.log_softmax(Tensor([0.0, 0.0]))
    np.testing.assert_allclose(out.data, [-math.log(2)] * 2, rtol=0, atol=1e-15)


def test_log_softmax_large_logits_stay_finite():
    with Tape():
        out = ad.log_softmax(Tensor([[1000.0, 0.0], [-1000.0, 1000.0]]))
    assert np.all(np.isfinite(out.data))
    assert out.data[0, 0] == 0.0
    assert out.data[0, 1] == -1000.0


def test_square_gradient():
    with Tape() as tape:
        x = Tensor([3.0])
        y = ad.sum_(ad.mul(x, x))
        tape.backward(y)
    np.testing.assert_array_equal(x.grad, [6.0])
    assert y.grad[0] == 1.0


def test_fan_out_accumulates():
    with Tape() as tape:
        x = Tensor([1.0])
        tape.backward(ad.sum_(ad.add(x, x)))
    np.testing.assert_array_equal(x.grad, [2.0])


def test_shape_mismatch_names_op_and_shapes():
    with Tape():
        with pytest.raises(ShapeError, match=r"matmul.*\(2, 3\).*\(2, 3\)"):
            ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
        with pytest.raises(ShapeError, match="mul_elementwise"):
            ad.mul(Tensor(np.ones(3)), Tensor(np.ones(4)))


def test_empty_tensor_rejected():
    with pytest.raises(ShapeError):
        Tensor(np.zeros((0, 3)))


def test_backward_needs_scalar_root():
    with Tape() as tape:
        y = ad.relu(Tensor([1.0, 2.0]))
        with pytest.raises(ShapeError):
            tape.backward(y)


def test_backward_twice_without_reset():
    with Tape() as tape:
        x = Tensor([2.0])
        y = ad.sum_(ad.mul(x, x))
        tape.backward(y)
        with pytest.raises(TapeError):
            tape.backward(y)
        tape.reset()
        tape.backward(y)
    np.testing.assert_array_equal(x.grad, [4.0])


def test_no_active_tape():
    with pytest.raises(TapeError):
        ad.relu(Tensor([1.0]))


def test_tape_is_topological():
    with Tape() as tape:
        a, b = Tensor(np.ones((2, 2))), Tensor(np.ones((2, 2)))
        ad.sum_(ad.relu(ad.add(ad.matmul(a, b), a)))
    seen = set()
    for rec in tape.records:
        for inp in rec.inputs:
            assert inp.node_id < rec.output.node_id
        seen.add(rec.output.node_id)


def test_unreachable_tensor_has_no_grad():
    with Tape() as tape:
        x, z = Tensor([1.0]), Tensor([2.0])
        ad.relu(z)
        tape.backward(ad.sum_(ad.mul(x, x)))
    assert z.grad is None


def test_constant_inputs_get_no_grad():
    with Tape() as tape:
        x = Tensor([[1.0, 2.0]], requires_grad=False)
        w = Tensor([[1.0], [1.0]])
        tape.backward(ad.sum_(ad.matmul(x, w)))
    assert x.grad is None
    np.testing.assert_array_equal(w.grad, [[1.0], [2.0]])


# One builder per op kind; each reduces to a scalar with a fixed random
# weighting so every output element contributes to the checked gradient.
def _weighted(t, rng):
    w = Tensor(rng.normal(size=t.shape), requires_grad=False)
    return ad.sum_(ad.mul(t, w))


def _op_cases(rng):
    i = rng.integers(0, 3, size=4)
    return {
        "matmul": (lambda a, b: _weighted(ad.matmul(a, b), rng), [(4, 3), (3, 2)]),
        "add": (lambda a, b: _weighted(ad.add(a, b), rng), [(4, 3), (4, 3)]),
        "add_bias": (lambda a, b: _weighted(ad.add(a, b), rng), [(4, 3), (3,)]),
        "mul_elementwise": (lambda a, b: _weighted(ad.mul(a, b), rng), [(5,), (5,)]),
        "scalar_mul": (lambda a: _weighted(ad.scalar_mul(a, -2.5), rng), [(3, 2)]),
        "relu": (lambda a: _weighted(ad.relu(a), rng), [(6,)]),
        "log_softmax": (lambda a: _weighted(ad.log_softmax(a), rng), [(4, 3)]),
        "sum": (lambda a: ad.sum_(a), [(3, 4)]),
        "mean": (lambda a: ad.mean(ad.mul(a, a)), [(3, 4)]),
        "select_index": (lambda a: _weighted(ad.select_index(a, i), rng), [(4, 3)]),
    }


@pytest.mark.parametrize("kind", list(_op_cases(np.random.default_rng(0))))
def test_gradient_matches_finite_differences(kind):
    for point in range(10):
        rng = np.random.default_rng([7, point])
        build_rng_seed = int(rng.integers(1 << 30))
        shapes = _op_cases(np.random.default_rng(build_rng_seed))[kind][1]
        arrays = [rng.normal(size=s) for s in shapes]
        if kind == "relu":
            arrays = [a + np.sign(a) * 0.1 for a in arrays]  # keep away from the kink

        def build(*ts):
            return _op_cases(np.random.default_rng(build_rng_seed))[kind][0](*ts)

        _, grads = tape_gradients(build, arrays)
        numeric = central_difference(tape_value(build), [a.copy() for a in arrays])
        for g, n in zip(grads, numeric):
            assert relative_error(g, n) < 1e-4


def test_linearity_of_backward(rng):
    x0 = rng.normal(size=(3, 4))
    w = rng.normal(size=(4, 2))
    f = lambda x: ad.sum_(ad.log_softmax(ad.matmul(x, Tensor(w, requires_grad=False))))
    g = lambda x: ad.mean(ad.mul(x, x))
    a, b = 0.7, -1.3
    _, (gf,) = tape_gradients(f, [x0])
    _, (gg,) = tape_gradients(g, [x0])
    _, (gc,) = tape_gradients(lambda x: ad.add(ad.scalar_mul(f(x), a), ad.scalar_mul(g(x), b)), [x0])
    np.testing.assert_allclose(gc, a * gf + b * gg, rtol=0, atol=1e-12)


def test_determinism(rng):
    arrays = [rng.normal(size=(5, 4)), rng.normal(size=(4, 3))]
    build = lambda a, b: ad.mean(ad.select_index(ad.log_softmax(ad.relu(ad.matmul(a, b))), [0, 1, 2, 0, 1]))
    v1, g1 = tape_gradients(build, arrays)
    v2, g2 = tape_gradients(build, arrays)
    assert v1 == v2
    for a, b in zip(g1, g2):
        assert a.tobytes() == b.tobytes()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=6))
def test_log_softmax_normalizes(values):
    with Tape():
        out = ad.log_softmax(Tensor(values))
    assert math.isclose(np.exp(out.data).sum(), 1.0, rel_tol=1e-12)
    assert np.all(out.data <= 0)
