import numpy as np
import pytest

from tinyalign import tensor as T
from tinyalign.optim import SGD

from gradcheck import check_gradients


def t(data, **kw):
    return T.Tensor(np.asarray(data, dtype=np.float64), **kw)


class TestElementwise:
    def test_sigmoid_zero(self):
        assert T.sigmoid(t(0.0)).item() == pytest.approx(0.5)

    def test_relu6_clamps(self):
        assert T.relu6(t(7.2)).item() == pytest.approx(6.0)
        assert T.relu6(t(-3.0)).item() == 0.0
        assert T.relu6(t(2.5)).item() == pytest.approx(2.5)

    def test_add(self):
        out = T.add(t([1.0, 2.0]), t([3.0, 4.0]))
        np.testing.assert_allclose(out.data, [4.0, 6.0])

    def test_dispatch(self):
        out = T.elementwise("mul", t([2.0]), t([3.0]))
        assert out.data[0] == 6.0
        out = T.elementwise("clamp", t([-1.0, 9.0]), lo=0.0, hi=6.0)
        np.testing.assert_allclose(out.data, [0.0, 6.0])
        with pytest.raises(ValueError):
            T.elementwise("nope", t([1.0]))

    def test_broadcast_shapes(self):
        out = T.add(t(np.ones((2, 3))), t(np.ones(3)))
        assert out.shape == (2, 3)
        with pytest.raises(ValueError):
            T.add(t(np.ones((2, 3))), t(np.ones(4)))

    def test_log_guard_is_finite(self):
        out = T.log(t([0.0]))
        assert np.isfinite(out.data).all()

    def test_div_guard_is_finite(self):
        out = T.div(t([1.0]), t([0.0]))
        assert np.isfinite(out.data).all()

    def test_nonfinite_forward_raises(self):
        with pytest.raises(T.NumericError):
            T.exp(t([1e4]))


class TestReduce:
    def test_sum_all(self):
        assert T.reduce_sum(t([[1.0, 2.0], [3.0, 4.0]])).item() == 10.0

    def test_mean_axis(self):
        out = T.reduce_mean(t([[1.0, 2.0], [3.0, 4.0]]), axes=0)
        np.testing.assert_allclose(out.data, [2.0, 3.0])

    def test_empty_extent_sum_is_zero(self):
        out = T.reduce_sum(t(np.zeros((0, 3))), axes=0)
        np.testing.assert_allclose(out.data, np.zeros(3))

    def test_invalid_axis(self):
        with pytest.raises(ValueError):
            T.reduce_sum(t([1.0]), axes=3)

    def test_max(self):
        out = T.reduce_max(t([[1.0, 5.0], [3.0, 4.0]]), axes=1)
        np.testing.assert_allclose(out.data, [5.0, 4.0])

    def test_dispatch(self):
        assert T.reduce("sum", t([1.0, 2.0])).item() == 3.0
        with pytest.raises(ValueError):
            T.reduce("median", t([1.0]))


class TestBackward:
    def test_square_analytic(self):
        x = t(3.0, requires_grad=True)
        loss = T.mul(x, x)
        T.backward(loss)
        assert x.grad == pytest.approx(6.0)

    def test_sigmoid_analytic(self):
        x = t(0.0, requires_grad=True)
        T.backward(T.sigmoid(x))
        assert x.grad == pytest.approx(0.25)

    def test_non_scalar_loss_rejected(self):
        x = t([1.0, 2.0], requires_grad=True)
        y = T.mul(x, x)
        with pytest.raises(ValueError):
            T.backward(y)

    def test_empty_tape_rejected(self):
        with pytest.raises(RuntimeError):
            T.backward(t(1.0, requires_grad=True))

    def test_reuse_accumulates(self):
        x = t(2.0, requires_grad=True)
        loss = T.add(T.mul(x, x), x)  # x^2 + x -> 2x + 1 = 5
        T.backward(loss)
        assert x.grad == pytest.approx(5.0)

    def test_unreached_gets_zero(self):
        x = t(2.0, requires_grad=True)
        y = t(3.0, requires_grad=True)
        _dead = T.mul(y, y)
        loss = T.mul(x, x)
        T.backward(loss)
        assert x.grad == pytest.approx(4.0)
        assert y.grad == pytest.approx(0.0)

    def test_broadcast_backward_sums(self, rng):
        # oracle: explicit tile then elementwise product
        a = rng.standard_normal((4, 3))
        b = rng.standard_normal((1, 3))
        xa, xb = t(a, requires_grad=True), t(b, requires_grad=True)
        T.backward(T.reduce_sum(T.mul(xa, xb)))
        tiled = np.broadcast_to(b, a.shape)
        np.testing.assert_allclose(xa.grad, tiled)
        np.testing.assert_allclose(xb.grad, a.sum(axis=0, keepdims=True))

    @pytest.mark.parametrize("seed", range(5))
    def test_composite_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((3, 4)) * 0.5
        b = rng.standard_normal((3, 4)) * 0.5 + 2.0

        def loss(ts):
            x, y = ts
            z = T.div(T.exp(T.mul(x, y)), y)
            return T.reduce_sum(T.mul(T.sigmoid(z), z))

        check_gradients(loss, [a, b])

    def test_determinism(self, rng):
        a = rng.standard_normal((8, 8))
        results = []
        for _ in range(2):
            T.clear_tape()
            x = t(a.copy(), requires_grad=True)
            loss = T.reduce_sum(T.mul(T.sigmoid(x), x))
            T.backward(loss)
            results.append((loss.data.copy(), x.grad.copy()))
        assert np.array_equal(results[0][0], results[1][0])
        assert np.array_equal(results[0][1], results[1][1])


class TestShapeOps:
    def test_reshape_roundtrip(self, rng):
        a = rng.standard_normal((2, 6))
        x = t(a, requires_grad=True)
        T.backward(T.reduce_sum(T.mul(T.reshape(x, (3, 4)), t(2.0))))
        np.testing.assert_allclose(x.grad, np.full((2, 6), 2.0))

    def test_concat_backward_slices(self, rng):
        a, b = rng.standard_normal((2, 2)), rng.standard_normal((2, 3))
        xa, xb = t(a, requires_grad=True), t(b, requires_grad=True)
        w = t(np.arange(10, dtype=np.float64).reshape(2, 5))
        T.backward(T.reduce_sum(T.mul(T.concat([xa, xb], axis=1), w)))
        np.testing.assert_allclose(xa.grad, w.data[:, :2])
        np.testing.assert_allclose(xb.grad, w.data[:, 2:])


class TestSGD:
    def test_plain_step(self):
        w = T.Tensor(np.array([1.0], dtype=np.float32), requires_grad=True)
        w.grad = np.array([0.5], dtype=np.float32)
        SGD([w], lr=0.1, momentum=0.0).step()
        assert w.data[0] == pytest.approx(0.95)

    def test_momentum_recurrence(self):
        w = T.Tensor(np.array([1.0], dtype=np.float32), requires_grad=True)
        opt = SGD([w], lr=0.1, momentum=0.9)
        for _ in range(2):
            w.grad = np.array([0.5], dtype=np.float32)
            opt.step()
        assert opt.velocity[0][0] == pytest.approx(0.9 * 0.5 + 0.5)

    def test_zero_lr_is_identity(self):
        w = T.Tensor(np.array([3.0], dtype=np.float32), requires_grad=True)
        w.grad = np.array([7.0], dtype=np.float32)
        SGD([w], lr=0.0, momentum=0.9).step()
        assert w.data[0] == 3.0

    def test_missing_grad_rejected(self):
        w = T.Tensor(np.array([1.0], dtype=np.float32), requires_grad=True)
        with pytest.raises(RuntimeError):
            SGD([w], lr=0.1).step()

    def test_grads_zeroed_after_step(self):
        w = T.Tensor(np.array([1.0], dtype=np.float32), requires_grad=True)
        w.grad = np.array([0.5], dtype=np.float32)
        opt = SGD([w], lr=0.1)
        opt.step()
        assert w.grad is None
