import numpy as np
import pytest

from fbm_orthant.rng import StreamFactory, chunks, run_chunks, stream


def test_named_streams_are_stable_and_distinct():
    a = stream(3, "paths", 0).random(4)
    assert np.array_equal(a, stream(3, "paths", 0).random(4))
    assert not np.array_equal(a, stream(3, "paths", 1).random(4))
    assert not np.array_equal(a, stream(4, "paths", 0).random(4))


def test_factory_prefix():
    f = StreamFactory(7, "pickands")
    assert np.array_equal(f("x").random(3), stream(7, "pickands", "x").random(3))
    assert np.array_equal(f.child(2)("x").random(3), stream(7, "pickands", 2, "x").random(3))


def test_negative_key_rejected():
    with pytest.raises(ValueError):
        stream(1, -1)


def test_chunks_cover():
    jobs = chunks(10, 4)
    assert jobs == [(0, 4), (1, 4), (2, 2)]


def test_run_chunks_order_independent_of_threads():
    def work(k, n):
        return stream(0, k).random(n)

    jobs = chunks(1000, 64)
    one = np.concatenate(run_chunks(work, jobs, 1))
    many = np.concatenate(run_chunks(work, jobs, 4))
    assert np.array_equal(one, many)
