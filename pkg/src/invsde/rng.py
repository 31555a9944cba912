"""Counter-based normal variates for reproducible, independent substreams.

Uniforms come from SplitMix64 in counter mode: the ``c``-th output of the
stream with key ``k`` is ``mix64(k + (c + 1) * GOLDEN)`` where ``mix64`` is
the SplitMix64 finalizer (Steele, Lea and Flood, 2014).  A trajectory's key
is ``mix64(mix64(seed) ^ mix64(index * GOLDEN + STREAM_OFFSET))``.

Normals are produced in pairs by the Marsaglia polar method.  Pair ``p``
tries attempts ``a = 0, 1, ...`` using uniform counters ``2*(64*p + a)`` and
``2*(64*p + a) + 1`` and keeps the first attempt with ``0 < s < 1``.  Every
variate is therefore a pure function of ``(seed, index, position)``, no
matter how a batch is split across calls or workers.
"""

from __future__ import annotations

import numpy as np

__all__ = ["GOLDEN", "mix64", "stream_key", "uniforms", "normals"]

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
STREAM_OFFSET = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MAX_ATTEMPTS = 64
_TWO_M53 = 2.0 ** -53


def mix64(z):
    """SplitMix64 output finalizer on uint64 arrays (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def stream_key(seed: int, index) -> np.ndarray:
    """Key of the substream for trajectory ``index`` under master ``seed``."""
    seed_mixed = mix64(np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF))
    idx = np.asarray(index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(seed_mixed ^ mix64(idx * GOLDEN + STREAM_OFFSET))


def uniforms(keys, counters) -> np.ndarray:
    """Doubles in ``[0, 1)`` for every ``(key, counter)``, broadcast together."""
    keys = np.asarray(keys, dtype=np.uint64)
    counters = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        bits = mix64(keys + (counters + np.uint64(1)) * GOLDEN)
    return (bits >> np.uint64(11)).astype(np.float64) * _TWO_M53


def _normal_pairs(keys: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    """Shape ``(len(keys), len(pairs), 2)`` of polar-method normal pairs."""
    R, P = keys.shape[0], pairs.shape[0]
    out = np.empty((R, P, 2))
    k = keys[:, None]
    todo = np.ones((R, P), dtype=bool)
    base = pairs.astype(np.uint64)[None, :] * np.uint64(_MAX_ATTEMPTS)
    for attempt in range(_MAX_ATTEMPTS):
        rows, cols = np.nonzero(todo)
        if rows.size == 0:
            return out
        c = (base[0, cols] + np.uint64(attempt)) * np.uint64(2)
        kk = k[rows, 0]
        v1 = 2.0 * uniforms(kk, c) - 1.0
        v2 = 2.0 * uniforms(kk, c + np.uint64(1)) - 1.0
        s = v1 * v1 + v2 * v2
        ok = (s > 0.0) & (s < 1.0)
        r, cc, s, v1, v2 = rows[ok], cols[ok], s[ok], v1[ok], v2[ok]
        factor = np.sqrt(-2.0 * np.log(s) / s)
        out[r, cc, 0] = v1 * factor
        out[r, cc, 1] = v2 * factor
        todo[r, cc] = False
    if todo.any():
        raise RuntimeError("polar method exhausted its attempt budget")
    return out


def normals(keys, start: int, count: int) -> np.ndarray:
    """Standard normals at positions ``start .. start+count-1`` of each stream.

    Returns shape ``(len(keys), count)``.
    """
    keys = np.atleast_1d(np.asarray(keys, dtype=np.uint64))
    if count <= 0:
        return np.empty((keys.shape[0], 0))
    first, last = start // 2, (start + count - 1) // 2
    pairs = np.arange(first, last + 1, dtype=np.uint64)
    flat = _normal_pairs(keys, pairs).reshape(keys.shape[0], -1)
    offset = start - 2 * first
    return flat[:, offset:offset + count]
