"""Counter-based random streams.

Every draw is a pure function of ``(seed, purpose, customer_id, column)``, so a
customer's values do not depend on how many other customers are generated or
in which order.  The mixer is the SplitMix64 finalizer applied per key part.
"""
import zlib

import numpy as np
from scipy.special import ndtri

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z):
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _purpose_code(purpose):
    return np.uint64(zlib.crc32(purpose.encode("utf-8")))


def uniforms(seed, purpose, ids, n_cols=1):
    """Uniform draws in the open interval (0, 1), shape ``(len(ids), n_cols)``."""
    ids = np.asarray(ids, dtype=np.int64).astype(np.uint64)
    with np.errstate(over="ignore"):
        key = _mix(np.uint64(int(seed) & _MASK64) ^ _purpose_code(purpose))
        row = _mix(key ^ ids)[:, None]
        cols = np.arange(n_cols, dtype=np.uint64)[None, :]
        bits = _mix(row ^ _mix(cols))
    # 53 random bits, centred in their bucket so 0 and 1 are never produced
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def normals(seed, purpose, ids, n_cols=1):
    """Standard normal draws by inverse CDF of :func:`uniforms`."""
    return ndtri(uniforms(seed, purpose, ids, n_cols))
