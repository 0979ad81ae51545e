"""Predictor key construction from IEEE-754 bit extraction.

Each of the six ray floats (origin xyz, direction xyz) is reduced to a
``1 + 2p`` bit value at precision ``p``: the sign bit, the top ``p``
exponent bits, and the top ``p`` mantissa bits, packed as

    sign << 2p | exponent_top_p << p | mantissa_top_p

Origin and direction hashes are then swizzled pairwise by xor
(o.x with d.z, o.y with d.y, o.z with d.x) into three lanes.  Lanes are
16 bits wide at shifts 0/16/32, so every supported precision fits the
48-bit key bound (the per-float width 1 + 2p is at most 15 bits).

Similar rays are *meant* to collide: two rays agreeing on sign and the
top ``p`` exponent/mantissa bits of all six floats share a key.  -0.0
hashes differently from +0.0 (sign bit), a known conflict-splitting
artifact; denormals follow the same rule with all-zero exponent bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteInput
from .geom import Ray

MIN_PRECISION = 1
MAX_PRECISION = 7

_EXP_BITS = 8
_MAN_BITS = 23

# Lane pairing is fixed, not tunable: lane k xors origin component
# _LANE_PAIRS[k][0] with direction component _LANE_PAIRS[k][1].
LANE_PAIRS = ((0, 2), (1, 1), (2, 0))

LANE_SHIFTS = (0, 16, 32)

KEY_BITS = 48


@dataclass(frozen=True)
class HashConfig:
    """Precision ``p``: bits taken from each of exponent and mantissa."""

    precision_bits: int = 6

    def __post_init__(self):
        p = self.precision_bits
        if not (MIN_PRECISION <= p <= MAX_PRECISION):
            raise ValueError(
                f"precision_bits must be in [{MIN_PRECISION}, {MAX_PRECISION}], got {p}")

    @property
    def bits_per_float(self) -> int:
        return 1 + 2 * self.precision_bits


def float_bits(f) -> int:
    """Raw binary32 bit pattern of ``f`` (converted to float32 first)."""
    f32 = np.float32(f)
    return int(np.frombuffer(f32.tobytes(), dtype=np.uint32)[0])


def map_float_to_hash(f, cfg: HashConfig) -> int:
    """Per-float bit extraction; raises NonFiniteInput on NaN/Inf."""
    with np.errstate(over="ignore"):  # out-of-range casts become inf, caught below
        f32 = np.float32(f)
    if not np.isfinite(f32):
        raise NonFiniteInput(f"cannot hash non-finite float {f!r}")
    bits = float_bits(f32)
    p = cfg.precision_bits
    sign = bits >> 31
    exp_top = ((bits >> _MAN_BITS) & 0xFF) >> (_EXP_BITS - p)
    man_top = (bits & 0x7FFFFF) >> (_MAN_BITS - p)
    return (sign << (2 * p)) | (exp_top << p) | man_top


def hash_ray_components(ox, oy, oz, dx, dy, dz, cfg: HashConfig) -> int:
    """48-bit key from six raw floats (no ray invariants enforced)."""
    ho = (map_float_to_hash(ox, cfg), map_float_to_hash(oy, cfg),
          map_float_to_hash(oz, cfg))
    hd = (map_float_to_hash(dx, cfg), map_float_to_hash(dy, cfg),
          map_float_to_hash(dz, cfg))
    key = 0
    for lane, (oi, di) in enumerate(LANE_PAIRS):
        key |= (ho[oi] ^ hd[di]) << LANE_SHIFTS[lane]
    return key


def hash_ray(ray: Ray, cfg: HashConfig) -> int:
    o = ray.origin
    d = ray.direction
    return hash_ray_components(o[0], o[1], o[2], d[0], d[1], d[2], cfg)


def hash_rays(origins: np.ndarray, directions: np.ndarray,
              cfg: HashConfig) -> np.ndarray:
    """Vectorized ``hash_ray`` over (n, 3) float32 arrays -> uint64 keys."""
    O = np.ascontiguousarray(origins, dtype=np.float32)
    D = np.ascontiguousarray(directions, dtype=np.float32)
    bo = O.view(np.uint32)
    bd = D.view(np.uint32)
    if (((bo >> np.uint32(23)) & np.uint32(0xFF)) == np.uint32(0xFF)).any() or \
       (((bd >> np.uint32(23)) & np.uint32(0xFF)) == np.uint32(0xFF)).any():
        raise NonFiniteInput("non-finite ray component in hash batch")
    p = cfg.precision_bits
    key = np.zeros(O.shape[0], dtype=np.uint64)
    for lane, (oi, di) in enumerate(LANE_PAIRS):
        lo = _lane_hash(bo[:, oi], p)
        ld = _lane_hash(bd[:, di], p)
        key |= (lo ^ ld).astype(np.uint64) << np.uint64(LANE_SHIFTS[lane])
    return key


def _lane_hash(bits: np.ndarray, p: int) -> np.ndarray:
    sign = bits >> np.uint32(31)
    exp_top = ((bits >> np.uint32(_MAN_BITS)) & np.uint32(0xFF)) >> np.uint32(_EXP_BITS - p)
    man_top = (bits & np.uint32(0x7FFFFF)) >> np.uint32(_MAN_BITS - p)
    return (sign << np.uint32(2 * p)) | (exp_top << np.uint32(p)) | man_top


def coarsen_key(key, from_precision: int):
    """Reduce a key computed at precision ``p`` to precision ``p - 1``.

    Works because bit selection commutes with xor: dropping the lowest
    extracted exponent and mantissa bit of each float drops the same bit
    positions of each xored lane.  Accepts ints or uint64 arrays.
    """
    p = int(from_precision)
    if p <= MIN_PRECISION:
        raise ValueError("cannot coarsen below the minimum precision")
    is_array = isinstance(key, np.ndarray)
    k = key.astype(np.uint64) if is_array else np.uint64(key)
    q = p - 1
    man_mask = np.uint64((1 << q) - 1)
    out = np.uint64(0)
    for shift in LANE_SHIFTS:
        lane = (k >> np.uint64(shift)) & np.uint64(0xFFFF)
        sign = (lane >> np.uint64(2 * p)) & np.uint64(1)
        exp_top = (lane >> np.uint64(p + 1)) & man_mask
        man_top = (lane >> np.uint64(1)) & man_mask
        new_lane = (sign << np.uint64(2 * q)) | (exp_top << np.uint64(q)) | man_top
        out = out | (new_lane << np.uint64(shift))
    return out if is_array else int(out)


def key_hex(key: int) -> str:
    """Canonical 12-hex-digit lowercase rendering used in reports."""
    return f"{int(key):012x}"
