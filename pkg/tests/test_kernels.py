import numpy as np
import pytest

from fdsdf import kernels

compiled = pytest.mark.skipif(kernels.BACKEND != "compiled", reason="extension not built")


def test_python_sincos_is_numpy(rng):
    z = rng.normal(size=(4, 5))
    s, c = kernels.sincos(z, backend="python")
    np.testing.assert_array_equal(s, np.sin(z))
    np.testing.assert_array_equal(c, np.cos(z))


@compiled
def test_compiled_trig_matches_libm(rng):
    z = rng.uniform(-200, 200, size=(300, 7))
    s, c = kernels.sincos(z, backend="compiled")
    np.testing.assert_allclose(s, np.sin(z), rtol=0, atol=1e-14)
    np.testing.assert_allclose(c, np.cos(z), rtol=0, atol=1e-14)
    np.testing.assert_allclose(kernels.sin(z, backend="compiled"), np.sin(z), rtol=0, atol=1e-14)
    assert s.shape == z.shape


@pytest.mark.parametrize("n_ref", [1, 7, 500, 3000])
def test_grid_index_matches_brute_force(rng, n_ref):
    ref = rng.normal(size=(n_ref, 3))
    q = rng.normal(size=(400, 3)) * 1.5
    d0, i0 = kernels.brute_force_nearest(q, ref)
    d1, i1 = kernels.GridIndex(ref).query(q, backend="python")
    np.testing.assert_array_equal(d1, d0)
    np.testing.assert_array_equal(i1, i0)


@compiled
def test_backends_bitwise_equal(rng):
    ref = rng.uniform(-1, 1, size=(2000, 3))
    q = rng.uniform(-1.5, 1.5, size=(2000, 3))
    g = kernels.GridIndex(ref)
    a = g.query(q, backend="python")
    b = g.query(q, backend="compiled")
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_far_queries_are_exact(rng):
    # queries many cells away from any reference point fall back to brute force
    ref = rng.uniform(0, 1, size=(1000, 3))
    q = rng.uniform(5, 6, size=(50, 3))
    np.testing.assert_array_equal(kernels.GridIndex(ref).query(q)[0],
                                  kernels.brute_force_nearest(q, ref)[0])


def test_duplicate_and_degenerate_refs(rng):
    ref = np.zeros((10, 3))
    d, _ = kernels.GridIndex(ref).query(np.ones((3, 3)))
    np.testing.assert_allclose(d, np.sqrt(3))


def test_empty_inputs():
    with pytest.raises(ValueError):
        kernels.GridIndex(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        kernels.brute_force_nearest(np.zeros((0, 3)), np.zeros((2, 3)))
