"""Exact rational scalars.

Every numeric quantity in this package is a gmpy2.mpq. mpq keeps fractions
in canonical form (positive denominator, gcd 1) after every operation and
does exact arithmetic at C speed, which matters for the large property
sweeps. Nothing in the core ever converts to float.

Text tokens are optional-sign "p/q" or integer strings; decimal notation is
rejected even though mpq would happily parse it.
"""

from __future__ import annotations

import re

from gmpy2 import mpq, mpz

Rat = type(mpq())

ZERO = mpq(0)
ONE = mpq(1)
HALF = mpq(1, 2)

_TOKEN_RE = re.compile(r"^[+-]?\d+(/\d+)?$")


def rat(num, den=None) -> Rat:
    """Build an exact rational from ints, strings, Fractions or mpq."""
    if den is not None:
        return mpq(num, den)
    if isinstance(num, float):
        raise TypeError("refusing to build a Rational from a float")
    return mpq(num)


def parse_rat(token: str) -> Rat:
    """Parse an optional-sign integer or p/q token."""
    token = token.strip()
    if not _TOKEN_RE.match(token):
        raise ValueError(f"not a rational token: {token!r}")
    q = mpq(token)
    return q


def format_rat(q) -> str:
    """Canonical decimal-free token: "p/q" or a bare integer."""
    q = mpq(q)
    return str(q)


def trunc01(v) -> Rat:
    """Projection onto [0, 1]."""
    if v < 0:
        return ZERO
    if v > 1:
        return ONE
    return mpq(v)


def trunc_interval(v, lo, hi) -> Rat:
    """Projection onto [lo, hi]."""
    if v < lo:
        return mpq(lo)
    if v > hi:
        return mpq(hi)
    return mpq(v)


def is_dyadic(q) -> bool:
    d = mpq(q).denominator
    return d & (d - 1) == 0


def dyadic_round(v, bits: int) -> Rat:
    """Round to the nearest multiple of 2^-bits, ties toward zero."""
    v = mpq(v)
    scaled = v * (mpz(1) << bits)
    n, d = scaled.numerator, scaled.denominator
    if d == 1:
        return v
    q, r = divmod(abs(n), d)
    if 2 * r > d:
        q += 1
    # exact ties (2r == d) round toward zero, i.e. keep q
    out = mpq(q, mpz(1) << bits)
    return -out if n < 0 else out


def ceil_log2(q) -> int:
    """Smallest integer e with 2^e >= q (q > 0)."""
    q = mpq(q)
    if q <= 0:
        raise ValueError("ceil_log2 needs q > 0")
    e = 0
    while mpq(2) ** e < q:
        e += 1
    while e > 0 and mpq(2) ** (e - 1) >= q:
        e -= 1
    return e
