import numpy as np
import pytest

from prefetchlab import autodiff as ad
from prefetchlab.autodiff import Tensor


def numeric_grad(fn, arrays, h=1e-6):
    """Central finite differences of a scalar-valued fn over each input array."""
    grads = []
    for target in arrays:
        g = np.zeros_like(target)
        flat = target.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = fn()
            flat[i] = keep - h
            down = fn()
            flat[i] = keep
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def check_op(build, shapes, seed=0, h=1e-6, tol=1e-7):
    """build(tensors) -> output Tensor; compares backward grads with numeric."""
    rng = np.random.default_rng(seed)
    arrays = [rng.uniform(0.2, 1.0, size=s) for s in shapes]
    tensors = [Tensor(a, requires_grad=True) for a in arrays]

    out = build(*tensors)
    # reduce to a scalar with fixed weights so every output entry matters
    weights = rng.uniform(0.5, 1.5, size=out.shape)
    ad.sum_(ad.mul(out, Tensor(weights))).backward()
    analytic = [t.grad for t in tensors]

    def scalar():
        fresh = [Tensor(a) for a in arrays]
        return float((build(*fresh).data * weights).sum())

    numeric = numeric_grad(scalar, arrays, h=h)
    for a, n in zip(analytic, numeric):
        assert a is not None
        assert np.max(np.abs(a - n)) < tol, f"max abs err {np.max(np.abs(a - n))}"


class TestElementwise:
    def test_add(self):
        check_op(ad.add, [(3, 4), (3, 4)])

    def test_add_broadcast(self):
        check_op(ad.add, [(2, 3, 4), (4,)])
        check_op(ad.add, [(2, 3, 4), (1, 4)])
        check_op(ad.add, [(5, 1), (1, 6)])

    def test_mul(self):
        check_op(ad.mul, [(3, 4), (3, 4)])
        check_op(ad.mul, [(2, 3, 4), (3, 4)])

    def test_scale(self):
        check_op(lambda a: ad.scale(a, -2.5), [(4, 4)])

    def test_relu(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(-1, 1, size=(5, 5))
        a[np.abs(a) < 1e-3] = 0.5  # keep clear of the kink
        t = Tensor(a, requires_grad=True)
        ad.sum_(ad.relu(t)).backward()
        assert np.array_equal(t.grad, (a > 0).astype(float))

    def test_sigmoid(self):
        check_op(ad.sigmoid, [(4, 3)])

    def test_sigmoid_stable_at_extremes(self):
        out = ad.sigmoid(Tensor([-1000.0, 0.0, 1000.0]))
        assert np.allclose(out.data, [0.0, 0.5, 1.0])
        assert np.isfinite(out.data).all()

    def test_log(self):
        check_op(ad.log, [(4, 4)])

    def test_clip_gradient_masks_clamped_region(self):
        a = Tensor(np.array([0.1, 0.5, 0.9]), requires_grad=True)
        ad.sum_(ad.clip(a, 0.2, 0.8)).backward()
        assert np.array_equal(a.grad, [0.0, 1.0, 0.0])


class TestMatmul:
    def test_plain(self):
        check_op(ad.matmul, [(3, 4), (4, 5)])

    def test_batched_left(self):
        check_op(ad.matmul, [(2, 3, 4), (4, 5)])

    def test_both_batched(self):
        check_op(ad.matmul, [(2, 3, 4), (2, 4, 5)])

    def test_multi_batch_dims(self):
        check_op(ad.matmul, [(2, 2, 3, 4), (2, 2, 4, 3)])

    def test_vector_rejected(self):
        with pytest.raises(ValueError):
            ad.matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 2))))


class TestSoftmax:
    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        y = ad.softmax(Tensor(rng.normal(size=(3, 4)))).data
        assert np.allclose(y.sum(axis=-1), 1.0, atol=1e-6)

    def test_gradient(self):
        check_op(lambda a: ad.softmax(a, axis=-1), [(3, 5)])
        check_op(lambda a: ad.softmax(a, axis=-1), [(2, 3, 4)])

    def test_shift_invariance(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(2, 6))
        assert np.allclose(ad.softmax(Tensor(x)).data, ad.softmax(Tensor(x + 100.0)).data)


class TestLayerNorm:
    def test_normalizes(self):
        rng = np.random.default_rng(4)
        x = rng.normal(2.0, 3.0, size=(4, 8))
        y = ad.layer_norm(Tensor(x), Tensor(np.ones(8)), Tensor(np.zeros(8))).data
        assert np.allclose(y.mean(axis=-1), 0.0, atol=1e-9)
        assert np.allclose(y.var(axis=-1), 1.0, atol=1e-3)

    def test_gradient(self):
        check_op(ad.layer_norm, [(3, 6), (6,), (6,)], tol=1e-6)
        check_op(ad.layer_norm, [(2, 3, 6), (6,), (6,)], tol=1e-6)


class TestShapeOps:
    def test_concat(self):
        check_op(lambda a, b: ad.concat([a, b], axis=1), [(2, 3, 4), (2, 2, 4)])

    def test_reshape(self):
        check_op(lambda a: ad.reshape(a, (6, 2)), [(3, 4)])

    def test_transpose(self):
        check_op(lambda a: ad.transpose(a, (0, 2, 1, 3)), [(2, 3, 4, 5)])

    def test_broadcast_to(self):
        check_op(lambda a: ad.broadcast_to(a, (4, 3, 5)), [(1, 3, 5)])

    def test_getitem(self):
        check_op(lambda a: a[:, 0, :], [(3, 4, 5)])
        check_op(lambda a: a[1:, :2], [(4, 4)])

    def test_mean_and_sum(self):
        check_op(lambda a: ad.mean(a), [(3, 4)])
        check_op(lambda a: ad.mean(a, axis=1), [(3, 4)])
        check_op(lambda a: ad.sum_(a, axis=0), [(3, 4)])


class TestGraph:
    def test_gradient_accumulates_on_reuse(self):
        a = Tensor(np.array([[2.0]]), requires_grad=True)
        out = ad.add(ad.matmul(a, a), a)  # a*a + a -> d/da = 2a + 1
        out.backward()
        assert np.allclose(a.grad, [[5.0]])

    def test_constants_carry_no_grad(self):
        a = Tensor(np.ones((2, 2)), requires_grad=True)
        c = Tensor(np.ones((2, 2)))
        out = ad.sum_(ad.mul(a, c))
        out.backward()
        assert c.grad is None and a.grad is not None

    def test_no_graph_without_requires_grad(self):
        a = Tensor(np.ones((2, 2)))
        out = ad.mul(a, a)
        assert out._backward is None and out._parents == ()

    def test_operator_sugar(self):
        a = Tensor(np.full((2, 2), 3.0), requires_grad=True)
        out = ad.sum_((1.0 - a) * 2.0 + a)
        out.backward()
        assert np.allclose(a.grad, -1.0)
        assert out.item() == ((1 - 3) * 2 + 3) * 4
