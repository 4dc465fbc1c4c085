"""The compiled kernels and the numpy fallback must agree."""
import numpy as np
import pytest

from manifold_unlearn import _kernels, _kernels_py

try:
    from manifold_unlearn import _ckernels
except ImportError:  # extension not built
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")


def test_backend_name():
    assert _kernels.BACKEND in ("cython", "python")


@needs_ext
@pytest.mark.parametrize("shape", [(5, 3), (3, 5), (8, 8), (1, 4)])
def test_jacobi_parity(shape):
    a = np.random.default_rng(0).standard_normal(shape)
    wc, vc, sc = _ckernels.jacobi_svd(a, 1e-12, 200)
    wp, vp, sp = _kernels_py.jacobi_svd(a, 1e-12, 200)
    assert sc == sp
    np.testing.assert_allclose(wc, wp, atol=1e-12)
    np.testing.assert_allclose(vc, vp, atol=1e-12)


@needs_ext
def test_knn_parity_with_ties():
    rng = np.random.default_rng(1)
    base = rng.integers(0, 3, size=(400, 2)).astype(float)
    q = rng.integers(0, 3, size=(50, 2)).astype(float)
    np.testing.assert_array_equal(_ckernels.knn_select(q, base, 7), _kernels_py.knn_select(q, base, 7))


@needs_ext
def test_shard_parity():
    hits = np.random.default_rng(2).integers(0, 7, size=(300, 9))
    # summation order differs, so allow rounding on the fractional shard size
    np.testing.assert_allclose(
        _ckernels.shard_sequential_costs(hits, 100 / 7, 7), _kernels_py.shard_sequential_costs(hits, 100 / 7, 7),
        rtol=1e-14,
    )
    np.testing.assert_allclose(
        _ckernels.shard_batched_costs(hits, 100 / 7, 7), _kernels_py.shard_batched_costs(hits, 100 / 7, 7),
        rtol=1e-14,
    )
    hits_int = hits[:, :5]
    np.testing.assert_array_equal(
        _ckernels.shard_sequential_costs(hits_int, 20.0, 7), _kernels_py.shard_sequential_costs(hits_int, 20.0, 7)
    )


@needs_ext
def test_slice_parity():
    first = np.random.default_rng(3).integers(1, 21, size=500)
    np.testing.assert_allclose(
        _ckernels.slice_costs(first, 20, 1.0, 300.0), _kernels_py.slice_costs(first, 20, 1.0, 300.0), rtol=1e-14
    )


def test_knn_rejects_large_k():
    with pytest.raises(ValueError):
        _kernels.knn_select(np.zeros((1, 2)), np.zeros((3, 2)), 4)


def test_slice_index_range_checked():
    with pytest.raises(ValueError):
        _kernels.slice_costs([0, 1], 3, 1.0, 10.0)
    with pytest.raises(ValueError):
        _kernels.slice_costs([4], 3, 1.0, 10.0)
