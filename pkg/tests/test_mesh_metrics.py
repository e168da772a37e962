import numpy as np
import pytest

from fdsdf import mesh_metrics as mm
from fdsdf import oracles


@pytest.fixture(scope="module")
def sphere_mesh():
    s = oracles.Sphere(0.5)
    return mm.marching_cubes(s.sdf, 128), s


def test_marching_cubes_sphere_area(sphere_mesh):
    mesh, _ = sphere_mesh
    assert mesh.area() == pytest.approx(np.pi, rel=0.02)
    r = np.linalg.norm(mesh.vertices, axis=1)
    assert np.all(np.abs(r - 0.5) < 2.0 / 127)


def test_marching_cubes_normals_point_outward(sphere_mesh):
    mesh, _ = sphere_mesh
    fn = mesh.face_normals()
    cen = mesh.vertices[mesh.triangles].mean(axis=1)
    assert np.all(np.einsum("ij,ij->i", fn, cen) > 0)
    vn = mesh.vertex_normals
    np.testing.assert_allclose(np.linalg.norm(vn, axis=1), 1.0)


def test_marching_cubes_plane():
    mesh = mm.marching_cubes(lambda x: x[:, 2] - 0.1, 32)
    assert np.all(np.abs(mesh.vertices[:, 2] - 0.1) < 1e-9)
    assert mesh.area() == pytest.approx(4.0, rel=1e-9)


def test_marching_cubes_errors():
    with pytest.raises(mm.EmptySurface):
        mm.marching_cubes(lambda x: np.ones(len(x)), 16)
    with pytest.raises(ValueError):
        mm.marching_cubes(lambda x: x[:, 0], 4)


def test_chamfer_and_hausdorff_examples():
    a = np.zeros((1, 3))
    b = np.array([[3.0, 4.0, 0.0]])
    assert mm.chamfer(a, b) == pytest.approx(5.0)
    assert mm.hausdorff(a, b) == pytest.approx(5.0)
    assert mm.chamfer(a, a) == 0.0
    with pytest.raises(ValueError):
        mm.chamfer(a, np.zeros((0, 3)))


def test_f1_examples():
    gt = np.array([[0.0, 0, 0], [1, 0, 0]])
    assert mm.f1_score(gt, gt) == 100.0
    # half the prediction is far away: P=0.5, R=1
    pred = np.array([[0.0, 0, 0], [1, 0, 0], [5, 0, 0], [6, 0, 0]])
    assert mm.f1_score(pred, gt, 0.1) == pytest.approx(200 / 3)
    assert mm.f1_score(gt + 10, gt, 0.1) == 0.0
    with pytest.raises(ValueError):
        mm.f1_score(gt, gt, 0.0)


def test_normal_consistency_examples():
    p = np.array([[0.0, 0, 0], [1, 0, 0]])
    n = np.array([[0.0, 0, 1], [0, 0, 1]])
    assert mm.normal_consistency(p, n, p, -n) == pytest.approx(100.0)
    assert mm.normal_consistency(p, n, p, np.array([[1.0, 0, 0]] * 2)) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        mm.normal_consistency(p, np.zeros((2, 3)), p, n)


def test_evaluate_agrees_with_single_metrics(rng):
    a = rng.normal(size=(300, 3))
    b = a + rng.normal(0, 0.01, a.shape)
    na, nb = rng.normal(size=(300, 3)), rng.normal(size=(300, 3))
    r = mm.evaluate(a, na, b, nb, threshold=0.02)
    assert r.cd_x1000 == pytest.approx(1000 * mm.chamfer(a, b))
    assert r.f1_x100 == pytest.approx(mm.f1_score(a, b, 0.02))
    assert r.nc_x100 == pytest.approx(mm.normal_consistency(a, na, b, nb))
    assert r.hausdorff == pytest.approx(mm.hausdorff(a, b))


def test_report_csv(tmp_path):
    r = mm.MetricsReport(1.0, 2.0, 3.0, 4.0)
    r.to_csv(tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "cd_x1000,f1_x100,nc_x100,hausdorff"
    assert "CD x1e3" in r.table()


def test_closest_point_regions():
    a, b, c = (np.array([[0.0, 0, 0]]), np.array([[1.0, 0, 0]]), np.array([[0.0, 1, 0]]))
    cases = {(0.2, 0.2, 1.0): (0.2, 0.2, 0), (-1, -1, 0): (0, 0, 0), (2, -1, 0): (1, 0, 0),
             (0.5, -1, 0): (0.5, 0, 0), (1, 1, 0): (0.5, 0.5, 0), (-1, 0.5, 0): (0, 0.5, 0)}
    for p, q in cases.items():
        got = mm.closest_point_on_triangles(np.array([p], float), a, b, c)
        np.testing.assert_allclose(got[0], q, atol=1e-12)


def test_point_mesh_distance_bounds(sphere_mesh, rng):
    mesh, s = sphere_mesh
    q = s.sample_surface(300, rng) + rng.normal(0, 0.01, (300, 3))
    d = mm.point_mesh_distance(q, mesh)
    tri = mesh.vertices[mesh.triangles]
    exact = np.array([np.min(np.linalg.norm(
        mm.closest_point_on_triangles(np.repeat(p[None], len(tri), 0), tri[:, 0], tri[:, 1], tri[:, 2]) - p,
        axis=1)) for p in q[:30]])
    np.testing.assert_allclose(d[:30], exact, atol=1e-12)
    # vertices lie on the mesh, so the nearest vertex bounds the distance from above
    assert np.all(d <= mm.GridIndex(mesh.vertices).query(q)[0] + 1e-12)


def test_evaluate_against_shape_exact_mesh(sphere_mesh):
    mesh, s = sphere_mesh
    r = mm.evaluate_against_shape(mesh, s, n_samples=20_000, n_reference=20_000, threshold=0.005)
    assert r.f1_x100 > 99.0 and r.nc_x100 > 99.9 and r.cd_x1000 < 0.5


def test_sample_area_weighted(rng):
    v = np.array([[0, 0, 0], [3, 0, 0], [0, 1, 0], [10, 0, 0], [11, 0, 0], [10, 1, 0]], float)
    mesh = mm.TriangleMesh(v, np.array([[0, 1, 2], [3, 4, 5]]), None)
    pts, nrm = mesh.sample(40_000, rng)
    frac = np.mean(pts[:, 0] < 5)
    assert frac == pytest.approx(0.75, abs=0.01)
    np.testing.assert_allclose(np.abs(nrm[:, 2]), 1.0)
