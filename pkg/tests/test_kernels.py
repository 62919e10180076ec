"""Both kernel backends against each other and against direct definitions."""
import numpy as np
import pytest

from ts2img import kernels

BACKENDS = [kernels.numpy_impl] + ([kernels.numba_impl] if kernels.numba_impl else [])
ids = [m.__name__.rsplit(".", 1)[-1] for m in BACKENDS]


def direct_conv(x, w, b, stride):
    n, c, h, wd = x.shape
    f, _, k, _ = w.shape
    ho, wo = (h - k) // stride + 1, (wd - k) // stride + 1
    out = np.zeros((n, f, ho, wo))
    for s in range(n):
        for o in range(f):
            for i in range(ho):
                for j in range(wo):
                    patch = x[s, :, i * stride:i * stride + k, j * stride:j * stride + k]
                    out[s, o, i, j] = (patch * w[o]).sum() + b[o]
    return out


@pytest.mark.parametrize("impl", BACKENDS, ids=ids)
@pytest.mark.parametrize("stride", [1, 2])
def test_conv_forward_matches_definition(impl, stride):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 3, 9, 9))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    np.testing.assert_allclose(impl.conv2d_forward(x, w, b, stride), direct_conv(x, w, b, stride), atol=1e-12)


@pytest.mark.parametrize("impl", BACKENDS, ids=ids)
@pytest.mark.parametrize("stride", [1, 2])
def test_conv_backward_is_adjoint_of_forward(impl, stride):
    # <dout, conv(x)> is linear in x and w, so its gradients are exact adjoints
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 2, 8, 8))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    out = impl.conv2d_forward(x, w, b, stride)
    dout = rng.normal(size=out.shape)
    dx, dw, db = impl.conv2d_backward(dout, x, w, stride)
    zb = np.zeros(3)
    for _ in range(3):
        vx = rng.normal(size=x.shape)
        assert np.sum(dout * direct_conv(vx, w, zb, stride)) == pytest.approx(np.sum(dx * vx), rel=1e-10)
        vw = rng.normal(size=w.shape)
        assert np.sum(dout * direct_conv(x, vw, zb, stride)) == pytest.approx(np.sum(dw * vw), rel=1e-10)
    np.testing.assert_allclose(db, dout.sum(axis=(0, 2, 3)))


@pytest.mark.parametrize("impl", BACKENDS, ids=ids)
def test_conv_backward_skip_dx(impl):
    rng = np.random.default_rng(2)
    x = rng.normal(size=(1, 1, 6, 6))
    w = rng.normal(size=(2, 1, 3, 3))
    dout = rng.normal(size=(1, 2, 4, 4))
    full = impl.conv2d_backward(dout, x, w, 1, True)
    part = impl.conv2d_backward(dout, x, w, 1, False)
    np.testing.assert_array_equal(full[1], part[1])
    assert not part[0].any()


@pytest.mark.parametrize("impl", BACKENDS, ids=ids)
def test_maxpool_first_max_wins_and_routes_gradient(impl):
    x = np.array([[[[1.0, 3.0, 0.0, 0.0, 9.0],
                    [3.0, 2.0, 0.0, 0.0, 9.0],
                    [5.0, 5.0, 1.0, 7.0, 9.0],
                    [5.0, 5.0, 8.0, 7.0, 9.0],
                    [9.0, 9.0, 9.0, 9.0, 9.0]]]])
    out, arg = impl.maxpool_forward(x, 2)
    np.testing.assert_array_equal(out[0, 0], [[3, 0], [5, 8]])
    np.testing.assert_array_equal(arg[0, 0], [[1, 0], [0, 2]])
    dx = impl.maxpool_backward(np.ones((1, 1, 2, 2)), arg, x.shape, 2)
    expected = np.zeros((5, 5))
    expected[0, 1] = expected[0, 2] = expected[2, 0] = expected[3, 2] = 1
    np.testing.assert_array_equal(dx[0, 0], expected)


@pytest.mark.parametrize("impl", BACKENDS, ids=ids)
def test_render_windows_last_write_wins(impl):
    rows = np.array([1, 1, 2, 1, 0], dtype=np.int64)
    cols = np.array([1, 1, 2, 1, 0], dtype=np.int64)
    vals = np.array([10, 20, 30, 40, 50], dtype=np.uint8)
    out = impl.render_windows(rows, cols, vals, 3, 4)
    assert out.shape == (3, 4, 4)
    assert out[0, 1, 1] == 20 and out[0, 2, 2] == 30
    assert out[1, 1, 1] == 40
    assert out[2, 1, 1] == 40 and out[2, 0, 0] == 50 and out[2, 2, 2] == 30
    assert np.count_nonzero(out[0]) == 2


@pytest.mark.skipif(kernels.numba_impl is None, reason="numba not installed")
def test_backends_agree_on_random_inputs():
    rng = np.random.default_rng(3)
    x = rng.random((4, 8, 17, 17))
    w = rng.normal(size=(5, 8, 3, 3))
    b = rng.normal(size=5)
    a = kernels.numpy_impl.conv2d_forward(x, w, b, 1)
    np.testing.assert_allclose(kernels.numba_impl.conv2d_forward(x, w, b, 1), a, rtol=1e-12, atol=1e-12)
    dout = rng.normal(size=a.shape)
    for u, v in zip(kernels.numpy_impl.conv2d_backward(dout, x, w, 1),
                    kernels.numba_impl.conv2d_backward(dout, x, w, 1)):
        np.testing.assert_allclose(u, v, rtol=1e-10, atol=1e-10)
    rows = rng.integers(0, 16, 200)
    cols = rng.integers(0, 16, 200)
    vals = rng.integers(0, 256, 200).astype(np.uint8)
    np.testing.assert_array_equal(kernels.numpy_impl.render_windows(rows, cols, vals, 17, 16),
                                  kernels.numba_impl.render_windows(rows, cols, vals, 17, 16))
