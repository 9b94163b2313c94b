import numpy as np
import pytest

from randwave.rng import keyed_normal, keyed_uniform, lattice_ids, mix64


def test_mix64_is_injective_on_a_sample():
    z = np.arange(200_000, dtype=np.uint64)
    assert len(np.unique(mix64(z))) == z.size
    assert mix64(np.uint64(0)) == 0


def test_draws_are_order_and_batch_independent():
    ids = lattice_ids(np.arange(-5, 6)[:, None])
    full = keyed_uniform(3, 1, np.arange(100), ids)
    perm = np.random.default_rng(0).permutation(100)
    assert np.array_equal(keyed_uniform(3, 1, perm, ids), full[perm])
    assert np.array_equal(keyed_uniform(3, 1, [42], ids[4:7]), full[42:43, 4:7])


def test_streams_are_separated():
    ids = lattice_ids(np.arange(50)[:, None])
    a = keyed_uniform(0, 1, np.arange(10), ids)
    for other in (keyed_uniform(1, 1, np.arange(10), ids), keyed_uniform(0, 2, np.arange(10), ids),
                  keyed_uniform(0, 1, np.arange(10), ids, stream=1)):
        assert not np.any(a == other)


def test_lattice_ids_distinguish_axes():
    ids = lattice_ids([[0, 1], [1, 0], [0, -1], [-1, 0]])
    assert len(set(ids.tolist())) == 4


def test_uniform_range_and_moments():
    u = keyed_uniform(7, 9, np.arange(1000), np.arange(200, dtype=np.uint64)).ravel()
    assert np.all((u > 0) & (u < 1))
    assert abs(u.mean() - 0.5) <= 4 * np.sqrt(1 / 12 / u.size)


def test_normal_moments():
    g = keyed_normal(11, 1, np.arange(2000), np.arange(100, dtype=np.uint64)).ravel()
    n = g.size
    assert abs(g.mean()) <= 4 / np.sqrt(n)
    assert g.var() == pytest.approx(1.0, abs=4 * np.sqrt(2 / n))
    assert np.mean(g ** 4) == pytest.approx(3.0, abs=4 * np.sqrt(96 / n))
