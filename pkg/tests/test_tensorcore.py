"""Gradient and optimiser checks for the autodiff core.

The oracle throughout is central finite differences on float64 copies of the
same computation, plus an independently written reference Adam.
"""

import numpy as np
import pytest

from lge.tensorcore import Adam, Mlp, Tensor, affine, concat, minimum


def fd_gradient(fn, arrays, index, coords, eps=1e-5):
    """Central finite differences of scalar fn w.r.t. arrays[index] entries."""
    grads = {}
    target = arrays[index]
    for coord in coords:
        orig = target[coord]
        target[coord] = orig + eps
        hi = fn(arrays)
        target[coord] = orig - eps
        lo = fn(arrays)
        target[coord] = orig
        grads[coord] = (hi - lo) / (2.0 * eps)
    return grads


def relative_error(a, b):
    return abs(a - b) / max(abs(b), 1.0)


def test_composite_expression_gradients_match_fd():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((5, 3))
    w = rng.standard_normal((3, 4))
    b = rng.standard_normal(4)
    c = rng.standard_normal((5, 4))

    def compute(arrays):
        tx = Tensor(arrays[0].copy(), requires_grad=True)
        tw = Tensor(arrays[1].copy(), requires_grad=True)
        tb = Tensor(arrays[2].copy(), requires_grad=True)
        tc = Tensor(arrays[3].copy(), requires_grad=True)
        h = affine(tx, tw, tb).tanh()
        h = h * tc + h.square() - 0.5 * h
        out = minimum(h, tc).relu().sum(axis=1).mean()
        return out, [tx, tw, tb, tc]

    arrays = [x, w, b, c]
    loss, tensors = compute(arrays)
    loss.backward()

    def value(arrs):
        out, _ = compute(arrs)
        return float(out.data)

    rng_coords = np.random.default_rng(11)
    for idx, tensor in enumerate(tensors):
        flat_count = arrays[idx].size
        picks = rng_coords.choice(flat_count, size=min(6, flat_count), replace=False)
        coords = [np.unravel_index(p, arrays[idx].shape) for p in picks]
        fd = fd_gradient(value, arrays, idx, coords)
        for coord, expected in fd.items():
            got = tensor.grad[coord]
            assert relative_error(got, expected) < 1e-6


def test_log_exp_clip_concat_gradients_match_fd():
    rng = np.random.default_rng(3)
    a = rng.uniform(0.5, 2.0, size=(4, 2))
    b = rng.standard_normal((4, 3))

    def compute(arrays):
        ta = Tensor(arrays[0].copy(), requires_grad=True)
        tb = Tensor(arrays[1].copy(), requires_grad=True)
        joined = concat([ta.log(), tb.clip(-0.5, 0.5)], axis=1)
        out = (joined.exp() + joined).sum(axis=1, keepdims=True).mean()
        return out, [ta, tb]

    arrays = [a, b]
    loss, tensors = compute(arrays)
    loss.backward()

    def value(arrs):
        out, _ = compute(arrs)
        return float(out.data)

    for idx, tensor in enumerate(tensors):
        coords = [np.unravel_index(p, arrays[idx].shape) for p in range(arrays[idx].size)]
        fd = fd_gradient(value, arrays, idx, coords)
        for coord, expected in fd.items():
            # clip boundary sits at +-0.5; sampled values stay clear of it
            assert relative_error(tensor.grad[coord], expected) < 1e-6


def test_broadcast_add_mul_gradients():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((6, 4))
    b = rng.standard_normal((1, 4))

    ta = Tensor(a.copy(), requires_grad=True)
    tb = Tensor(b.copy(), requires_grad=True)
    loss = (ta * tb + tb).mean()
    loss.backward()

    assert ta.grad.shape == a.shape
    assert tb.grad.shape == b.shape
    np.testing.assert_allclose(ta.grad, np.broadcast_to(b, a.shape) / a.size)
    np.testing.assert_allclose(tb.grad, (a.sum(axis=0, keepdims=True) + 6.0) / a.size)


def test_shared_node_accumulates_both_paths():
    x = Tensor(np.array([[2.0]]), requires_grad=True)
    y = x.square()  # used twice below
    loss = (y + y * 3.0).mean()
    loss.backward()
    # d/dx of 4*x^2 at x=2 is 16
    np.testing.assert_allclose(x.grad, [[16.0]])


def test_minimum_routes_gradient_to_smaller_branch():
    a = Tensor(np.array([1.0, 5.0]), requires_grad=True)
    b = Tensor(np.array([3.0, 2.0]), requires_grad=True)
    loss = minimum(a, b).sum()
    loss.backward()
    np.testing.assert_array_equal(a.grad, [1.0, 0.0])
    np.testing.assert_array_equal(b.grad, [0.0, 1.0])


def test_backward_requires_scalar_root():
    t = Tensor(np.zeros(3), requires_grad=True)
    with pytest.raises(ValueError):
        (t * 2.0).backward()


def test_mlp_tape_and_plain_forward_agree():
    rng = np.random.default_rng(0)
    net = Mlp([3, 16, 16, 2], rng, activation="relu")
    x = rng.standard_normal((7, 3))
    np.testing.assert_array_equal(net(x).data, net.forward_array(x))


def test_mlp_init_bounds_and_zero_last():
    rng = np.random.default_rng(1)
    net = Mlp([4, 8, 2], rng, activation="tanh", zero_last=True)
    bound0 = 1.0 / np.sqrt(4.0)
    assert np.all(np.abs(net.weights[0].data) <= bound0)
    assert np.all(np.abs(net.biases[0].data) <= bound0)
    assert np.all(net.weights[-1].data == 0.0)
    assert np.all(net.biases[-1].data == 0.0)
    x = rng.standard_normal((5, 4))
    np.testing.assert_array_equal(net.forward_array(x), np.zeros((5, 2)))


def test_mlp_params_vector_round_trip():
    rng = np.random.default_rng(2)
    net = Mlp([3, 5, 2], rng)
    other = Mlp([3, 5, 2], np.random.default_rng(9))
    vec = net.params_vector()
    other.load_params_vector(vec)
    np.testing.assert_array_equal(other.params_vector(), vec)
    with pytest.raises(ValueError):
        other.load_params_vector(vec[:-1])
    with pytest.raises(ValueError):
        other.load_params_vector(np.concatenate([vec, [0.0]]))


def test_mlp_float32_stays_float32():
    rng = np.random.default_rng(4)
    net = Mlp([3, 8, 2], rng, dtype=np.float32)
    x = rng.standard_normal((4, 3)).astype(np.float32)
    out = net(x)
    assert out.data.dtype == np.float32
    loss = out.square().mean()
    loss.backward()
    assert net.weights[0].grad.dtype == np.float32


def test_polyak_moves_fraction_toward_source():
    rng = np.random.default_rng(6)
    dst = Mlp([2, 4, 1], rng)
    src = Mlp([2, 4, 1], rng)
    before = dst.params_vector()
    target = src.params_vector()
    dst.polyak_from(src, tau=0.25)
    np.testing.assert_allclose(dst.params_vector(), 0.75 * before + 0.25 * target)


class ReferenceAdam:
    """Textbook Adam, written independently of the implementation under test."""

    def __init__(self, value, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.value = value.astype(np.float64).copy()
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)
        self.t = 0

    def step(self, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad ** 2
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        self.value = self.value - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def test_adam_matches_reference_trajectory():
    rng = np.random.default_rng(8)
    start = rng.standard_normal(10)
    param = Tensor(start.copy(), requires_grad=True)
    opt = Adam([param], lr=0.01)
    ref = ReferenceAdam(start, lr=0.01)
    for _ in range(25):
        grad = rng.standard_normal(10)
        param.grad = grad.copy()
        assert opt.step()
        ref.step(grad)
        np.testing.assert_allclose(param.data, ref.value, rtol=1e-12, atol=1e-12)


def test_adam_first_step_size_is_learning_rate():
    param = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = Adam([param], lr=0.05)
    param.grad = np.array([3.0, -0.001])
    opt.step()
    # for any constant nonzero gradient the first step has magnitude ~lr
    np.testing.assert_allclose(np.abs(param.data - [1.0, -2.0]), 0.05, rtol=1e-5)


def test_adam_rejects_non_finite_gradients_atomically():
    param = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    other = Tensor(np.array([3.0]), requires_grad=True)
    opt = Adam([param, other], lr=0.1)
    param.grad = np.array([0.5, 0.5])
    other.grad = np.array([1.0])
    assert opt.step()
    after_first = (param.data.copy(), other.data.copy(), opt.t,
                   [m.copy() for m in opt.m], [v.copy() for v in opt.v])
    param.grad = np.array([np.nan, 0.5])
    other.grad = np.array([1.0])
    assert not opt.step()
    np.testing.assert_array_equal(param.data, after_first[0])
    np.testing.assert_array_equal(other.data, after_first[1])
    assert opt.t == after_first[2]
    for m, expected in zip(opt.m, after_first[3]):
        np.testing.assert_array_equal(m, expected)
    for v, expected in zip(opt.v, after_first[4]):
        np.testing.assert_array_equal(v, expected)


def test_adam_skips_params_without_gradient():
    a = Tensor(np.array([1.0]), requires_grad=True)
    b = Tensor(np.array([2.0]), requires_grad=True)
    opt = Adam([a, b], lr=0.1)
    a.grad = np.array([1.0])
    b.grad = None
    assert opt.step()
    assert a.data[0] != 1.0
    np.testing.assert_array_equal(b.data, [2.0])
