import numpy as np

from processing.sweep import run_all, seeded_rng


def test_serial_map_preserves_order():
    assert run_all(abs, [-3, 2, -1]) == [3, 2, 1]


def test_worker_pool_preserves_order():
    assert run_all(abs, [-3, 2, -1, -7], workers=2) == [3, 2, 1, 7]


def test_empty_task_list():
    assert run_all(abs, [], workers=4) == []


def test_seeded_rng_is_pcg64():
    rng = seeded_rng(5)
    assert isinstance(rng.bit_generator, np.random.PCG64)
    np.testing.assert_array_equal(rng.random(3), np.random.Generator(np.random.PCG64(5)).random(3))
    assert not np.array_equal(seeded_rng(6).random(3), seeded_rng(5).random(3))
