import numpy as np
import pytest

from fdsdf import oracles


def _fd_grad(f, x, d=1e-6):
    return np.stack([(f(x + e) - f(x - e)) / (2 * d) for e in np.eye(3) * d], axis=1)


SHAPES = [oracles.Sphere(0.5, (0.1, 0, -0.1)), oracles.Cylinder(0.5), oracles.Torus(1.0, 0.25),
          oracles.RoundedBox((0.5, 0.4, 0.3), 0.1), oracles.Plane((1, 2, 2), 0.3)]


@pytest.mark.parametrize("shape", SHAPES, ids=lambda s: s.kind)
def test_gradient_and_hessian_match_fd(shape, rng):
    x = oracles.near_surface_points(shape, 50, rng, 0.3 * min(shape.feature_radius, 1.0) * 0.5)
    np.testing.assert_allclose(shape.gradient(x), _fd_grad(shape.sdf, x), atol=1e-6)
    H = shape.hessian(x)
    num = np.stack([(shape.gradient(x + e) - shape.gradient(x - e)) / 2e-6
                    for e in np.eye(3) * 1e-6], axis=2)
    np.testing.assert_allclose(H, num, atol=1e-4)


@pytest.mark.parametrize("shape", SHAPES, ids=lambda s: s.kind)
def test_surface_samples_on_zero_set(shape, rng):
    if shape.kind == "plane":
        return
    p = shape.sample_surface(500, rng)
    assert p.shape == (500, 3)
    assert np.max(np.abs(shape.sdf(p))) < 1e-9
    np.testing.assert_allclose(np.linalg.norm(shape.normals(p), axis=1), 1.0)


def test_known_curvatures():
    assert oracles.Sphere(0.5).gaussian_curvature([[0.5, 0, 0]])[0] == pytest.approx(4.0)
    assert oracles.Cylinder(0.5).gaussian_curvature([[0.5, 0, 0]])[0] == 0.0
    t = oracles.Torus(1.0, 0.25)
    assert t.gaussian_curvature([[1.25, 0, 0]])[0] == pytest.approx(3.2)
    assert t.gaussian_curvature([[0.75, 0, 0]])[0] == pytest.approx(-1 / (0.25 * 0.75))


def test_rounded_box_corner_curvature():
    b = oracles.RoundedBox((0.5, 0.5, 0.5), 0.1)
    p = 0.4 + 0.1 / np.sqrt(3)
    assert b.gaussian_curvature([[p, p, p]])[0] == pytest.approx(100.0)
    assert b.gaussian_curvature([[0.5, 0.0, 0.0]])[0] == 0.0
    assert b.sdf([[0.5, 0.0, 0.0]])[0] == pytest.approx(0.0)


def test_rounded_box_area_weighted_sampling(rng):
    b = oracles.RoundedBox((0.5, 0.5, 0.5), 0.1)
    p = b.sample_surface(50_000, rng)
    flat = np.sum(np.abs(np.abs(p).max(axis=1) - 0.5) < 1e-12)
    area_flat = 6 * 0.8 ** 2
    area = area_flat + 12 * 0.8 * (np.pi / 2) * 0.1 + 4 * np.pi * 0.01
    assert flat / 50_000 == pytest.approx(area_flat / area, rel=0.03)


def test_medial_axis_guard():
    with pytest.raises(oracles.MedialAxisError):
        oracles.analytic_gaussian_curvature(oracles.Torus(1.0, 0.25), [[0.0, 0.0, 0.0]])


def test_quadratic_curvature_matches_bordered(rng):
    q = oracles.Quadratic(np.diag([1.0, 1.0, 1.0]), c=-0.25)  # sphere r=0.5 as a level set
    x = np.array([[0.5, 0.0, 0.0], [0.0, 0.3, 0.4]])
    np.testing.assert_allclose(q.gaussian_curvature(x), 4.0)
    np.testing.assert_allclose(oracles.bordered_hessian_curvature(q, x), 4.0)


def test_make_shape():
    assert oracles.make_shape("sphere").kind == "sphere"
    with pytest.raises(KeyError):
        oracles.make_shape("teapot")
