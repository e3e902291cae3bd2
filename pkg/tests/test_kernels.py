import numpy as np
import pytest

from mmloop import kernels
from mmloop.kernels import _numpy as npk

nb = pytest.importorskip("mmloop.kernels._numba")

CONV_GEOMETRIES = [(4, 4, 0), (3, 1, 1), (3, 2, 1), (5, 1, 2), (2, 2, 0), (3, 3, 0)]


def naive_im2col(x, k, stride, pad):
    n, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    out = np.zeros((n, oh, ow, k * k * c))
    for b in range(n):
        for i in range(oh):
            for j in range(ow):
                out[b, i, j] = xp[b, i * stride:i * stride + k, j * stride:j * stride + k, :].ravel()
    return out


class TestConvKernels:
    @pytest.mark.parametrize("k,stride,pad", CONV_GEOMETRIES)
    def test_im2col_matches_naive(self, k, stride, pad):
        x = np.random.default_rng(k + stride + pad).standard_normal((2, 9, 11, 3))
        ref = naive_im2col(x, k, stride, pad)
        np.testing.assert_array_equal(npk.im2col(x, k, stride, pad), ref)
        np.testing.assert_array_equal(nb.im2col(x, k, stride, pad), ref)

    @pytest.mark.parametrize("k,stride,pad", CONV_GEOMETRIES)
    def test_col2im_is_adjoint(self, k, stride, pad):
        # <im2col(x), y> == <x, col2im(y)>
        rng = np.random.default_rng(7)
        x = rng.standard_normal((2, 9, 11, 3))
        cols = npk.im2col(x, k, stride, pad)
        y = rng.standard_normal(cols.shape)
        lhs = np.sum(cols * y)
        for impl in (npk, nb):
            rhs = np.sum(x * impl.col2im(y, x.shape, k, stride, pad))
            assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_col2im_backends_agree(self):
        rng = np.random.default_rng(3)
        cols = rng.standard_normal((2, 9, 11, 27))
        a = npk.col2im(cols, (2, 9, 11, 3), 3, 1, 1)
        b = nb.col2im(cols, (2, 9, 11, 3), 3, 1, 1)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)

    @pytest.mark.parametrize("p", [2, 3])
    def test_maxpool_backends_agree(self, p):
        rng = np.random.default_rng(p)
        x = rng.standard_normal((2, 7, 8, 4))
        o1, a1 = npk.maxpool_forward(x, p)
        o2, a2 = nb.maxpool_forward(x, p)
        np.testing.assert_array_equal(o1, o2)
        np.testing.assert_array_equal(a1, a2)
        d = rng.standard_normal(o1.shape)
        np.testing.assert_array_equal(npk.maxpool_backward(d, a1, x.shape, p),
                                      nb.maxpool_backward(d, a2, x.shape, p))

    def test_maxpool_first_max_wins(self):
        x = np.zeros((1, 2, 2, 1))
        _, arg = npk.maxpool_forward(x, 2)
        assert arg.ravel()[0] == 0
        _, arg = nb.maxpool_forward(x, 2)
        assert arg.ravel()[0] == 0


class TestImageKernels:
    def test_scatter_max(self):
        rows = np.array([0, 0, 1, 0])
        cols = np.array([1, 1, 2, 1])
        vals = np.array([0.2, 0.7, 0.4, 0.5])
        for impl in (npk, nb):
            out = impl.scatter_max(rows, cols, vals, np.zeros((2, 3)))
            assert out[0, 1] == 0.7 and out[1, 2] == 0.4 and out.sum() == pytest.approx(1.1)

    @pytest.mark.parametrize("shape,target", [((5, 7, 3), (11, 13)), ((16, 180, 1), (16, 224)),
                                              ((96, 128, 3), (224, 224)), ((4, 4, 2), (2, 2))])
    def test_bilinear_backends_agree(self, shape, target):
        img = np.random.default_rng(0).random(shape)
        np.testing.assert_allclose(npk.bilinear_resize(img, *target), nb.bilinear_resize(img, *target),
                                   rtol=0, atol=1e-14)

    def test_bilinear_identity_and_constant(self):
        img = np.random.default_rng(1).random((6, 9, 3))
        np.testing.assert_allclose(npk.bilinear_resize(img, 6, 9), img, atol=1e-15)
        const = np.full((3, 5, 1), 0.3)
        np.testing.assert_allclose(nb.bilinear_resize(const, 17, 4), 0.3, atol=1e-15)

    def test_bilinear_half_pixel_upsample(self):
        # 2 -> 4 with half-pixel centres: taps at -0.25 (clamped), 0.25, 0.75, 1.25 (clamped)
        img = np.array([[0.0, 1.0]])[:, :, None]
        out = npk.bilinear_resize(img, 1, 4)[0, :, 0]
        np.testing.assert_allclose(out, [0.0, 0.25, 0.75, 1.0])


class TestSearchKernels:
    def test_nearest_rows_agree_with_brute_force(self):
        rng = np.random.default_rng(5)
        db = rng.standard_normal((300, 16))
        q = rng.standard_normal((40, 16))
        d2 = ((q[:, None, :] - db[None]) ** 2).sum(-1)
        ref = d2.argmin(1)
        for impl in (npk, nb):
            idx, dist = impl.nearest_rows(db, q)
            np.testing.assert_array_equal(idx, ref)
            np.testing.assert_allclose(dist, d2[np.arange(40), ref], rtol=1e-12)

    def test_nearest_rows_ties_take_lowest_row(self):
        db = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        q = np.array([[0.5, 0.5], [1.0, 0.0]])
        for impl in (npk, nb):
            idx, _ = impl.nearest_rows(db, q)
            assert list(idx) == [0, 0]

    def test_greedy_places_backends_agree(self):
        rng = np.random.default_rng(9)
        e = np.cumsum(rng.normal(1.0, 0.5, 150))
        n = rng.normal(0.0, 3.0, 150)
        h = rng.uniform(-np.pi, np.pi, 150)
        np.testing.assert_array_equal(npk.greedy_places(e, n, h, 5.0, np.pi / 2),
                                      nb.greedy_places(e, n, h, 5.0, np.pi / 2))


def test_backend_selection_flags():
    assert kernels.BACKEND in ("numba", "numpy")
    assert kernels.USE_NUMBA == (kernels.BACKEND == "numba")
    if kernels.DISABLED_BY_ENV:
        assert kernels.BACKEND == "numpy"


def test_env_flag_forces_numpy(tmp_path):
    import os
    import subprocess
    import sys
    env = dict(os.environ, MMLOOP_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", "import mmloop.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
