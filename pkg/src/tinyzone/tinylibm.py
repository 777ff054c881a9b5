"""Self-contained math kernels for the secure side.

Nothing here may import ``math``/``cmath`` or call numpy transcendental
functions; ``tests/test_tinylibm.py`` audits the secure-side sources for it.
All kernels compute in double precision. The ``*_f32`` variants round the
result to single precision for the inference engine.
"""

import struct

from .errors import MathDomainError

LN2_HI = 6.93147180369123816490e-01
LN2_LO = 1.90821492927058770002e-10
INV_LN2 = 1.44269504088896338700e+00
PI = 3.14159265358979311600e+00
TWO_PI_HI = 6.28318530717958623200e+00
TWO_PI_LO = 2.44929359829470635445e-16
HALF_PI = 1.57079632679489655800e+00
SQRT_HALF = 0.70710678118654752440
EXP_LIMIT = 700.0
SIN_LIMIT = 1e4

_pack_d = struct.Struct("<d").pack
_unpack_d = struct.Struct("<d").unpack
_pack_q = struct.Struct("<Q").pack
_unpack_q = struct.Struct("<Q").unpack
_f32 = struct.Struct("<f")


def _bits(x):
    return _unpack_q(_pack_d(x))[0]


def _from_bits(b):
    return _unpack_d(_pack_q(b))[0]


def _pow2(k):
    # 2**k for normal exponents only
    return _from_bits((k + 1023) << 52)


def _isfinite(x):
    return (_bits(x) >> 52) & 0x7FF != 0x7FF


def round_f32(x):
    return _f32.unpack(_f32.pack(x))[0]


def t_floor(x):
    """Greatest integer <= x, returned as a float."""
    if not _isfinite(x):
        raise MathDomainError("t_floor", x)
    if x >= 4503599627370496.0 or x <= -4503599627370496.0:
        return x  # already integral at this magnitude
    i = int(x)
    if i > x:
        i -= 1
    return float(i)


def t_sqrt(x):
    if x < 0 or x != x:
        raise MathDomainError("t_sqrt", x)
    if x == 0 or not _isfinite(x):
        return x
    scale = 1.0
    if x < 2.2250738585072014e-308:
        # subnormal: lift into the normal range first
        x *= 18014398509481984.0  # 2**54
        scale = 1.0 / 134217728.0  # 2**-27
    # halve the biased exponent for a first estimate within a factor of ~1.06
    y = _from_bits((_bits(x) >> 1) + 0x1FF8000000000000)
    for _ in range(6):
        y = 0.5 * (y + x / y)
    return y * scale


def t_exp(x):
    if x != x or x > EXP_LIMIT or x < -EXP_LIMIT:
        raise MathDomainError("t_exp", x)
    k = int(t_floor(x * INV_LN2 + 0.5))
    r = (x - k * LN2_HI) - k * LN2_LO
    # Taylor series on |r| <= ln2/2; 13 terms leave truncation below 1e-17
    term = 1.0
    total = 1.0
    for n in range(1, 14):
        term *= r / n
        total += term
    return total * _pow2(k)


def t_log(x):
    if x != x or x <= 0 or not _isfinite(x):
        raise MathDomainError("t_log", x)
    bias = 0
    if x < 2.2250738585072014e-308:
        x *= 18014398509481984.0
        bias = -54
    b = _bits(x)
    e = ((b >> 52) & 0x7FF) - 1023
    m = _from_bits((b & 0x000FFFFFFFFFFFFF) | 0x3FF0000000000000)
    if m > 2 * SQRT_HALF:
        m *= 0.5
        e += 1
    e += bias
    # log(m) = 2 atanh(s), |s| <= 0.1716
    s = (m - 1.0) / (m + 1.0)
    s2 = s * s
    term = s
    total = 0.0
    for n in range(1, 40, 2):
        total += term / n
        term *= s2
    return 2.0 * total + e * LN2_HI + e * LN2_LO


def _sin_poly(r):
    r2 = r * r
    term = r
    total = r
    for n in range(2, 24, 2):
        term *= -r2 / (n * (n + 1))
        total += term
    return total


def t_sin(x):
    """Sine with odd-symmetric argument reduction modulo 2*pi."""
    if x != x or x > SIN_LIMIT or x < -SIN_LIMIT:
        raise MathDomainError("t_sin", x)
    sign = 1.0
    if x < 0:
        x = -x
        sign = -1.0
    k = t_floor(x / TWO_PI_HI + 0.5)
    r = (x - k * TWO_PI_HI) - k * TWO_PI_LO  # r in [-pi, pi]
    if r > HALF_PI:
        r = (PI - r) + 1.2246467991473532e-16
    elif r < -HALF_PI:
        r = (-PI - r) - 1.2246467991473532e-16
    return sign * _sin_poly(r)


def t_cos(x):
    return t_sin(x + HALF_PI) if x <= 0 else t_sin(HALF_PI - x)


def t_pow(x, y):
    """x**y for x > 0 as exp(y log x)."""
    if x == 1.0:
        return 1.0
    return t_exp(y * t_log(x))


def t_exp_f32(x):
    return round_f32(t_exp(x))


def t_sqrt_f32(x):
    return round_f32(t_sqrt(x))


def t_log_f32(x):
    return round_f32(t_log(x))


def t_sin_f32(x):
    return round_f32(t_sin(x))
