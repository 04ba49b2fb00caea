import numpy as np
import pytest

from niche.rng import CounterRNG, GeneratorBatch, as_batch, philox4x32


@pytest.mark.parametrize(
    "counter,key,expected",
    [
        ([0, 0, 0, 0], [0, 0], [0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8]),
        ([0xFFFFFFFF] * 4, [0xFFFFFFFF] * 2, [0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD]),
        (
            [0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344],
            [0xA4093822, 0x299F31D0],
            [0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1],
        ),
    ],
)
def test_philox_known_answers(counter, key, expected):
    out = [int(v) for v in philox4x32(counter, key)]
    assert out == expected


def test_stream_values_do_not_depend_on_partition():
    rng = CounterRNG(12345)
    streams = np.arange(1000)
    whole = rng.uniform_pair(streams, 7, 3)
    parts = np.concatenate([rng.uniform_pair(streams[:313], 7, 3), rng.uniform_pair(streams[313:], 7, 3)])
    assert np.array_equal(whole, parts)
    sub = rng.batch(streams, 7).subset(streams % 5 == 0).uniform(3)
    assert np.array_equal(sub, whole[::5])


def test_uniforms_in_unit_interval_and_distinct_slots():
    rng = CounterRNG(1)
    u = rng.uniform_pair(np.arange(200_000), 0, 0)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 3e-3
    v = rng.uniform_pair(np.arange(200_000), 0, 1)
    assert abs(np.corrcoef(u[:, 0], v[:, 0])[0, 1]) < 0.01


def test_seed_range():
    CounterRNG(2**64 - 1)
    with pytest.raises(ValueError):
        CounterRNG(2**64)
    with pytest.raises(ValueError):
        CounterRNG(-1)


def test_as_batch_accepts_generator_and_checks_size():
    b = as_batch(np.random.default_rng(0), 4)
    assert isinstance(b, GeneratorBatch) and b.uniform(0).shape == (4, 2)
    with pytest.raises(ValueError):
        as_batch(CounterRNG(0).batch(np.arange(3), 0), 4)
