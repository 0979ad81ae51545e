"""Counter-based RNG for reproducible, schedule-independent jitter.

Each variate is a pure function of (seed, pixel, sample, dim), so serial
and tiled render schedules produce bit-identical primary rays.
"""

import numpy as np

_U = np.uint64
_M1 = _U(0xBF58476D1CE4E5B9)
_M2 = _U(0x94D049BB133111EB)
_GOLDEN = _U(0x9E3779B97F4A7C15)


def _mix(x):
    x = x ^ (x >> _U(30))
    x = x * _M1
    x = x ^ (x >> _U(27))
    x = x * _M2
    return x ^ (x >> _U(31))


def unit_floats(seed: int, pixel, sample, dim: int):
    """Deterministic floats in [0, 1); ``pixel``/``sample`` may be arrays."""
    pixel = np.asarray(pixel, dtype=np.uint64)
    sample = np.asarray(sample, dtype=np.uint64)
    with np.errstate(over="ignore"):  # uint64 wraparound is the point
        h = _mix(_U(seed & 0xFFFFFFFFFFFFFFFF) + _GOLDEN)
        h = _mix(h ^ (pixel * _GOLDEN + _U(1)))
        h = _mix(h ^ (sample * _M1 + _U(dim) * _M2 + _U(1)))
    return (h >> _U(11)).astype(np.float64) * (2.0 ** -53)
