"""Finite-difference verification of every autodiff primitive."""
import numpy as np
import pytest

from svla import autodiff as ad
from svla.autodiff import GraphError, Tensor


def numeric_grad(f, x, step=1e-6):
    """Central finite differences of scalar f at array x (float64)."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f()
        flat[i] = orig - step
        fm = f()
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * step)
    return g


def fd_vs_analytic(build_loss, arrays, tol=1e-7):
    """Analytic gradients vs central differences, one input at a time."""
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    loss = build_loss(*tensors)
    loss.backward()
    for t, a in zip(tensors, arrays):
        fd = numeric_grad(lambda: float(build_loss(*[Tensor(x) for x in arrays]).item()), a)
        scale = max(1.0, float(np.max(np.abs(fd))))
        assert t.grad is not None, "missing gradient"
        assert np.max(np.abs(t.grad - fd)) / scale < tol


@pytest.mark.parametrize("seed", range(5))
def test_add_mul_broadcast(seed):
    r = np.random.default_rng(seed)
    a = r.standard_normal((3, 4))
    b = r.standard_normal((4,))
    fd_vs_analytic(lambda x, y: ad.sum_(ad.mul(ad.add(x, y), ad.add(x, y))), [a, b])


@pytest.mark.parametrize("seed", range(5))
def test_matmul_batched(seed):
    r = np.random.default_rng(seed)
    a = r.standard_normal((2, 3, 4))
    b = r.standard_normal((4, 5))
    fd_vs_analytic(lambda x, y: ad.sum_(ad.mul(ad.matmul(x, y), 0.5)), [a, b])


def test_relu_grad():
    x = np.array([[-1.0, 0.5, 2.0, -0.2]])
    fd_vs_analytic(lambda t: ad.sum_(ad.mul(ad.relu(t), ad.relu(t))), [x])


@pytest.mark.parametrize("seed", range(3))
def test_conv2d_grad(seed):
    r = np.random.default_rng(seed)
    x = r.standard_normal((2, 6, 6, 3))
    w = r.standard_normal((3, 3, 3, 4)) * 0.5
    b = r.standard_normal(4)
    fd_vs_analytic(
        lambda xx, ww, bb: ad.sum_(
            ad.mul(ad.conv2d(xx, ww, bb, stride=2, pad=1),
                   ad.conv2d(xx, ww, bb, stride=2, pad=1))
        ),
        [x, w, b],
        tol=1e-6,
    )


def test_softmax_rows_sum_to_one(rng):
    x = rng.standard_normal((5, 7)) * 3
    s = ad.softmax(Tensor(x), axis=-1)
    assert np.allclose(s.data.sum(axis=-1), 1.0, atol=1e-6)


def test_softmax_shift_invariance(rng):
    x = rng.standard_normal((4, 6))
    a = ad.softmax(Tensor(x)).data
    b = ad.softmax(Tensor(x + 1000.0)).data
    assert np.allclose(a, b, atol=1e-12)


def test_softmax_grad(rng):
    x = rng.standard_normal((3, 5))
    w = rng.standard_normal((3, 5))
    fd_vs_analytic(
        lambda t: ad.sum_(ad.mul(ad.softmax(t, axis=-1), w)), [x]
    )


def test_layer_norm_grad(rng):
    x = rng.standard_normal((4, 8))
    g = rng.standard_normal(8)
    b = rng.standard_normal(8)
    fd_vs_analytic(
        lambda xx, gg, bb: ad.sum_(ad.mul(ad.layer_norm(xx, gg, bb),
                                          ad.layer_norm(xx, gg, bb))),
        [x, g, b],
        tol=1e-6,
    )


def test_layer_norm_output_stats(rng):
    x = rng.standard_normal((10, 32)) * 5 + 3
    out = ad.layer_norm(Tensor(x), Tensor(np.ones(32)), Tensor(np.zeros(32))).data
    assert np.allclose(out.mean(axis=-1), 0.0, atol=1e-6)
    assert np.allclose(out.std(axis=-1), 1.0, atol=1e-3)


def test_cross_entropy_uniform_logits():
    """Uniform logits give exactly ln(K)."""
    n, k = 4, 256
    loss = ad.cross_entropy(Tensor(np.zeros((n, k))), np.arange(4))
    assert abs(loss.item() - np.log(k)) < 1e-6


def test_cross_entropy_grad(rng):
    x = rng.standard_normal((6, 9))
    t = rng.integers(0, 9, size=6)
    fd_vs_analytic(lambda xx: ad.cross_entropy(xx, t), [x])


def test_cross_entropy_extreme_logits_stable():
    logits = np.array([[1000.0, -1000.0], [-1000.0, 1000.0]])
    loss = ad.cross_entropy(Tensor(logits), np.array([0, 1]))
    assert np.isfinite(loss.item()) and loss.item() < 1e-6


def test_reshape_transpose_index_concat_grads(rng):
    x = rng.standard_normal((2, 3, 4))
    fd_vs_analytic(
        lambda t: ad.sum_(ad.mul(ad.reshape(t, (6, 4)), ad.reshape(t, (6, 4)))), [x]
    )
    fd_vs_analytic(
        lambda t: ad.sum_(ad.mul(ad.transpose(t, (2, 0, 1)), 2.0)), [x]
    )
    fd_vs_analytic(lambda t: ad.sum_(ad.mul(t[:, 1, :], t[:, 1, :])), [x])
    y = rng.standard_normal((2, 2, 4))
    fd_vs_analytic(
        lambda a, b: ad.sum_(ad.mul(ad.concat([a, b], axis=1), ad.concat([a, b], axis=1))),
        [x, y],
    )


def test_embedding_grad(rng):
    table = rng.standard_normal((7, 5))
    idx = np.array([0, 3, 3, 6])
    fd_vs_analytic(
        lambda t: ad.sum_(ad.mul(ad.embedding(t, idx), ad.embedding(t, idx))), [table]
    )


def test_mean_and_sum_axes(rng):
    x = rng.standard_normal((3, 4, 5))
    fd_vs_analytic(lambda t: ad.sum_(ad.mul(ad.mean(t, axis=1), 3.0)), [x])
    fd_vs_analytic(lambda t: ad.sum_(ad.mul(ad.sum_(t, axis=2, keepdims=True), 0.5)), [x])


@pytest.mark.parametrize("seed", range(100))
def test_random_composite_graphs(seed):
    """Property test: random small op compositions all pass FD checking."""
    r = np.random.default_rng(seed)
    a = r.standard_normal((3, 4))
    b = r.standard_normal((4, 4))
    c = r.standard_normal(4)
    ops = [
        lambda x: ad.relu(x),
        lambda x: ad.softmax(x, axis=-1),
        lambda x: ad.layer_norm(x, Tensor(np.ones(4)), Tensor(np.zeros(4))),
        lambda x: ad.mul(x, 1.7),
        lambda x: ad.add(x, 0.3),
    ]
    picks = r.integers(0, len(ops), size=3)

    def loss_fn(aa, bb, cc):
        x = ad.add(ad.matmul(aa, bb), cc)
        for p in picks:
            x = ops[p](x)
        return ad.mean(ad.mul(x, x))

    fd_vs_analytic(loss_fn, [a, b, c], tol=5e-6)


def test_grad_accumulates_on_reuse(rng):
    x = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
    y = ad.add(ad.mul(x, 2.0), ad.mul(x, 3.0))
    ad.sum_(y).backward()
    assert np.allclose(x.grad, 5.0)


def test_no_grad_suppresses_tape(rng):
    x = Tensor(rng.standard_normal(4), requires_grad=True)
    with ad.no_grad():
        y = ad.mul(x, 2.0)
    assert y._backward is None and not y.requires_grad


def test_scalar_sub_preserves_dtype():
    x = Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
    y = x - 0.5
    assert y.dtype == np.float32


def test_shape_errors():
    with pytest.raises(GraphError):
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))
    with pytest.raises(GraphError):
        ad.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))
    with pytest.raises(GraphError):
        ad.cross_entropy(Tensor(np.zeros((2, 3))), np.array([0, 5]))
    with pytest.raises(GraphError):
        ad.layer_norm(Tensor(np.zeros((2, 3))), Tensor(np.zeros(4)), Tensor(np.zeros(3)))
    with pytest.raises(GraphError):
        ad.backward(Tensor(np.zeros(3), requires_grad=True))


def test_backward_float64_end_to_end(rng):
    x = Tensor(rng.standard_normal((2, 3)).astype(np.float64), requires_grad=True)
    loss = ad.mean(ad.mul(x, x))
    loss.backward()
    assert x.grad.dtype == np.float64
