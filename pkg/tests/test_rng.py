import numpy as np
import pytest

from invsde import rng

# first outputs of the reference SplitMix64 generator started from state 0
SPLITMIX_SEED0 = (0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F)


def test_mix64_matches_reference_stream():
    out = rng.mix64(np.arange(1, 4, dtype=np.uint64) * rng.GOLDEN)
    assert [int(v) for v in out] == list(SPLITMIX_SEED0)


def test_uniforms_use_top_53_bits():
    u = rng.uniforms(np.uint64(0), np.arange(3))
    assert list(u) == [(v >> 11) * 2.0 ** -53 for v in SPLITMIX_SEED0]


def test_uniform_range():
    u = rng.uniforms(rng.stream_key(4, [0]), np.arange(100000))
    assert u.min() >= 0.0 and u.max() < 1.0


def test_stream_keys_distinct():
    keys = rng.stream_key(123, np.arange(10000))
    assert len(set(int(k) for k in keys)) == 10000
    assert not np.array_equal(rng.stream_key(1, [0]), rng.stream_key(2, [0]))


def test_normals_deterministic():
    keys = rng.stream_key(9, [0, 1, 2])
    assert np.array_equal(rng.normals(keys, 0, 50), rng.normals(keys, 0, 50))


@pytest.mark.parametrize("start,count", [(0, 1), (1, 4), (3, 7), (10, 1), (5, 0)])
def test_normals_position_addressed(start, count):
    keys = rng.stream_key(9, [5, 6])
    full = rng.normals(keys, 0, 20)
    assert np.array_equal(rng.normals(keys, start, count), full[:, start:start + count])


def test_batch_split_invariance():
    together = rng.normals(rng.stream_key(3, np.arange(8)), 0, 30)
    apart = np.vstack([rng.normals(rng.stream_key(3, [i]), 0, 30) for i in range(8)])
    assert np.array_equal(together, apart)


def test_normal_moments():
    z = rng.normals(rng.stream_key(2024, [0]), 0, 400000)[0]
    assert abs(z.mean()) < 4 / np.sqrt(z.size)
    assert abs(z.var() - 1.0) < 0.01
    assert abs(np.mean(z ** 3)) < 0.02
    assert abs(np.mean(z ** 4) - 3.0) < 0.05


def test_substreams_uncorrelated():
    z = rng.normals(rng.stream_key(77, np.arange(200)), 0, 2000)
    c = np.corrcoef(z)
    off = c[~np.eye(200, dtype=bool)]
    # 200*199 pairs; each correlation has std about 1/sqrt(2000)
    assert np.max(np.abs(off)) < 6 / np.sqrt(2000)
