import numpy as np
import pytest

from fdsdf import siren
from fdsdf.ad_engine import Tape


def test_init_bounds_and_shapes():
    p = siren.init(0, width=32, depth=3, omega0=30.0)
    assert [w.shape for w in p.weights] == [(32, 3), (32, 32), (32, 32), (1, 32)]
    assert np.max(np.abs(p.weights[0])) <= 1 / 3
    bound = np.sqrt(6 / 32) / 30
    assert all(np.max(np.abs(w)) <= bound for w in p.weights[1:-1])
    assert np.max(np.abs(p.weights[-1])) <= np.sqrt(6 / 32)
    assert p.depth == 3 and p.width == 32


def test_init_is_deterministic():
    a, b = siren.init(5, 16, 2), siren.init(5, 16, 2)
    assert all(np.array_equal(x, y) for x, y in zip(a.arrays(), b.arrays()))
    c = siren.init(6, 16, 2)
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_init_rejects_bad_sizes():
    with pytest.raises(ValueError):
        siren.init(0, width=0)


def test_output_spread_at_init():
    x = np.random.default_rng(0).uniform(-1, 1, (10_000, 3))
    for shape in ((256, 4, 30.0), (64, 3, 4.0)):
        std = siren.forward(siren.init(0, *shape), x).std()
        assert 0.1 <= std <= 2.0


def test_forward_matches_taped(rng):
    p = siren.init(1, 16, 2, omega0=4.0)
    x = rng.uniform(-1, 1, (9, 3))
    t = siren.eval(p, x, Tape())
    np.testing.assert_allclose(siren.forward(p, x), t.value, rtol=1e-13, atol=1e-14)


def test_forward_mode_gradient_matches_fd(rng):
    p = siren.init(2, 16, 3, omega0=10.0)
    x = rng.uniform(-1, 1, (7, 3))
    tt = siren.eval_with_gradient(p, x, Tape())
    num = np.zeros((7, 3))
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1e-6
        num[:, k] = (siren.forward(p, x + e) - siren.forward(p, x - e)) / 2e-6
    np.testing.assert_allclose(tt.gradient_array(), num, atol=1e-7)
    _, g = siren.forward_with_gradient(p, x)
    np.testing.assert_allclose(g, tt.gradient_array(), atol=1e-13)


def test_fd_gradient_fallback_close_to_forward_mode(rng):
    p = siren.init(3, 16, 2, omega0=4.0)
    x = rng.uniform(-1, 1, (5, 3))
    tape = Tape()
    m = siren.TapedSiren(p, tape)
    np.testing.assert_allclose(m.eval_with_fd_gradient(x).gradient_array(),
                               m.eval_with_gradient(x).gradient_array(), atol=1e-7)


def test_chunked_forward_matches_single_chunk(rng):
    p = siren.init(4, 16, 2)
    x = rng.uniform(-1, 1, (1000, 3))
    # BLAS blocking may differ with the chunk size, so only round-off is allowed
    np.testing.assert_allclose(siren.forward(p, x, chunk=37), siren.forward(p, x, chunk=4096),
                               rtol=1e-12, atol=1e-15)


def test_zero_weights_give_bias_path_constant():
    p = siren.init(0, 8, 2)
    z = p.with_arrays([np.zeros_like(a) if i % 2 == 0 else a for i, a in enumerate(p.arrays())])
    out = siren.forward(z, np.random.default_rng(0).uniform(-1, 1, (10, 3)))
    np.testing.assert_allclose(out, out[0])


def test_rejects_bad_points():
    p = siren.init(0, 8, 1)
    with pytest.raises(ValueError):
        siren.forward(p, np.ones((3, 2)))
    with pytest.raises(ValueError):
        siren.forward(p, np.array([[np.nan, 0, 0]]))


def test_checkpoint_roundtrip(tmp_path):
    p = siren.init(9, 16, 2, omega0=4.0)
    siren.save_checkpoint(p, tmp_path / "a.ckpt")
    q = siren.load_checkpoint(tmp_path / "a.ckpt")
    assert q.omega0 == 4.0 and q.depth == 2
    assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), q.arrays()))


def test_checkpoint_rejects_garbage(tmp_path):
    (tmp_path / "bad.ckpt").write_bytes(b"nope\n1 2 3\n")
    with pytest.raises(ValueError):
        siren.load_checkpoint(tmp_path / "bad.ckpt")


def test_eval_counter(rng):
    m = siren.TapedSiren(siren.init(0, 8, 1), Tape())
    m.eval(rng.uniform(size=(4, 3)))
    m.eval_with_gradient(rng.uniform(size=(6, 3)))
    assert m.n_evals == 10
