import numpy as np
import pytest

from fdsdf import sampling


def test_xyz_three_points(tmp_path):
    f = tmp_path / "a.xyz"
    f.write_text("0 0 0\n1 0 0\n0 1 0\n")
    pc = sampling.load(f)
    assert pc.points.shape == (3, 3) and pc.normals is None


def test_xyz_with_normals_and_comments(tmp_path):
    f = tmp_path / "a.xyz"
    f.write_text("# header\n0 0 0 0 0 1\n\n1 0 0 0 0 1\n")
    pc = sampling.load(f)
    assert pc.normals.shape == (2, 3)


def test_nan_names_the_line(tmp_path):
    f = tmp_path / "bad.xyz"
    f.write_text("0 0 0\n1 nan 0\n")
    with pytest.raises(sampling.CloudParseError, match=":2:"):
        sampling.load(f)


def test_garbage_and_wrong_arity(tmp_path):
    f = tmp_path / "bad.xyz"
    f.write_text("0 0\n")
    with pytest.raises(sampling.CloudParseError, match=":1:"):
        sampling.load(f)
    f.write_text("a b c\n")
    with pytest.raises(sampling.CloudParseError):
        sampling.load(f)


def test_empty_and_missing(tmp_path):
    f = tmp_path / "e.xyz"
    f.write_text("\n")
    with pytest.raises(sampling.CloudParseError):
        sampling.load(f)
    with pytest.raises(FileNotFoundError, match="input not found"):
        sampling.load(tmp_path / "nope.xyz")


def test_unknown_format(tmp_path):
    f = tmp_path / "a.stl"
    f.write_text("solid\n")
    with pytest.raises(sampling.CloudParseError):
        sampling.load(f)


def test_ply_binary_and_ascii_load_identically(tmp_path, rng):
    pts = rng.normal(size=(50, 3))
    nrm = rng.normal(size=(50, 3))
    faces = rng.integers(0, 50, (20, 3))
    sampling.save(tmp_path / "a.ply", pts, nrm, faces)
    sampling.save(tmp_path / "b.ply", pts, nrm, faces, binary=True)
    a, b = sampling.load(tmp_path / "a.ply"), sampling.load(tmp_path / "b.ply")
    np.testing.assert_array_equal(a.points, b.points)
    np.testing.assert_array_equal(a.normals, b.normals)
    np.testing.assert_array_equal(a.faces, b.faces)
    np.testing.assert_array_equal(a.points, pts)


def test_obj_roundtrip(tmp_path, rng):
    pts = rng.normal(size=(10, 3))
    faces = np.array([[0, 1, 2], [3, 4, 5]])
    sampling.save(tmp_path / "m.obj", pts, faces=faces)
    m = sampling.load(tmp_path / "m.obj")
    np.testing.assert_array_equal(m.points, pts)
    np.testing.assert_array_equal(m.faces, faces)


def test_obj_face_out_of_range(tmp_path):
    f = tmp_path / "m.obj"
    f.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises(sampling.CloudParseError):
        sampling.load(f)


def test_ply_vertex_scalar_written(tmp_path, rng):
    sampling.save(tmp_path / "s.ply", rng.normal(size=(4, 3)), faces=[[0, 1, 2]],
                  vertex_scalars={"hausdorff": np.arange(4.0)})
    text = (tmp_path / "s.ply").read_text()
    assert "property double hausdorff" in text
    assert sampling.load(tmp_path / "s.ply").points.shape == (4, 3)


def test_normalize_unit_cube():
    corners = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)], float)
    n = sampling.normalize(corners)
    np.testing.assert_allclose(n.points.min(axis=0), -0.9)
    np.testing.assert_allclose(n.points.max(axis=0), 0.9)


def test_normalize_roundtrip_and_idempotence(rng):
    pts = rng.normal(size=(100, 3)) * [3, 1, 0.2] + [5, -2, 1]
    n = sampling.normalize(pts)
    np.testing.assert_allclose(n.to_object(n.points), pts, rtol=1e-9, atol=1e-12)
    again = sampling.normalize(n.points)
    assert again.scale == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(again.translate, 0.0, atol=1e-9)
    ext = n.points.max(axis=0) - n.points.min(axis=0)
    assert ext.max() == pytest.approx(1.8)


def test_normalize_degenerate():
    with pytest.raises(ValueError):
        sampling.normalize(np.ones((5, 3)))


def test_batches_sizes_and_replacement(rng):
    big = sampling.normalize(rng.normal(size=(300, 3)))
    b = sampling.sample_batches(big, 200, 50, 0.01, rng)
    assert b.surface.shape == (200, 3) and b.offsurface.shape == (50, 3)
    # without replacement: all rows distinct
    assert len(np.unique(b.surface, axis=0)) == 200
    small = sampling.normalize(rng.normal(size=(20, 3)))
    assert sampling.sample_batches(small, 100, 10, 0.01, rng).surface.shape == (100, 3)


def test_offsurface_uniform(rng):
    n = sampling.normalize(rng.normal(size=(10, 3)))
    off = sampling.sample_batches(n, 5, 20_000, 0.0, rng).offsurface
    assert np.all(np.abs(off.mean(axis=0)) < 0.02)
    assert off.min() >= -1 and off.max() <= 1


def test_zero_sigma_shell_equals_surface(rng):
    n = sampling.normalize(rng.normal(size=(40, 3)))
    b = sampling.sample_batches(n, 30, 5, 0.0, rng)
    np.testing.assert_array_equal(b.shell, b.surface)


def test_batches_deterministic():
    n = sampling.normalize(np.random.default_rng(0).normal(size=(40, 3)))
    a = sampling.sample_batches(n, 30, 5, 0.1, np.random.default_rng(3))
    b = sampling.sample_batches(n, 30, 5, 0.1, np.random.default_rng(3))
    np.testing.assert_array_equal(a.shell, b.shell)


def test_resample_single_triangle_inside(rng):
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float)
    pc = sampling.resample_mesh_surface(v, [[0, 1, 2]], 1000, rng)
    p = pc.points
    assert np.all(p[:, 2] == 0) and np.all(p[:, :2] >= -1e-15) and np.all(p.sum(axis=1) <= 1 + 1e-12)


def test_resample_area_ratio(rng):
    v = np.array([[0, 0, 0], [3, 0, 0], [0, 1, 0], [10, 0, 0], [11, 0, 0], [10, 1, 0]], float)
    pc = sampling.resample_mesh_surface(v, [[0, 1, 2], [3, 4, 5]], 100_000, rng)
    big = np.sum(pc.points[:, 0] < 5)
    assert (big / (100_000 - big)) == pytest.approx(3.0, rel=0.05)


def test_resample_errors(rng):
    v = np.zeros((3, 3))
    with pytest.raises(ValueError):
        sampling.resample_mesh_surface(v, [[0, 1, 2]], 10, rng)
    with pytest.raises(ValueError):
        sampling.resample_mesh_surface(np.eye(3), [[0, 1, 2]], 0, rng)
