"""Fixed-point sign-magnitude arithmetic over binary variables.

Expressions (+, -, multiply-by-dyadic-constant) compile to a NOT/AND
Boolean circuit built from ripple adders/subtractors and per-bit muxes,
which is then lowered into the linear circuit.  A static exact range pass
sizes the words and rejects overflow before any gate is emitted.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import KktboxError
from ..rational import ONE, ZERO, Rat, ceil_log2, rat
from .boolcirc import BoolBuilder
from .builder import BinaryVar, CircuitBuilder, lower_boolean


@dataclass
class BVar:
    var: BinaryVar


@dataclass
class BConst:
    value: Rat

    def __post_init__(self):
        self.value = rat(self.value)
        if self.value.denominator & (self.value.denominator - 1):
            raise KktboxError("binary arithmetic constants must be dyadic")


@dataclass
class BAdd:
    x: object
    y: object


@dataclass
class BSub:
    x: object
    y: object


@dataclass
class BScale:
    c: Rat
    x: object

    def __post_init__(self):
        self.c = rat(self.c)
        if self.c.denominator & (self.c.denominator - 1):
            raise KktboxError("binary arithmetic constants must be dyadic")


def _range(expr):
    if isinstance(expr, BVar):
        m = expr.var.max_magnitude()
        return -m, m
    if isinstance(expr, BConst):
        return expr.value, expr.value
    if isinstance(expr, BAdd):
        (a, b), (c, d) = _range(expr.x), _range(expr.y)
        return a + c, b + d
    if isinstance(expr, BSub):
        (a, b), (c, d) = _range(expr.x), _range(expr.y)
        return a - d, b - c
    if isinstance(expr, BScale):
        a, b = _range(expr.x)
        lo, hi = expr.c * a, expr.c * b
        return min(lo, hi), max(lo, hi)
    raise TypeError(expr)


def _frac_need(expr) -> int:
    if isinstance(expr, BVar):
        return max(expr.var.width - expr.var.int_bits, 0)
    if isinstance(expr, BConst):
        return max(int(expr.value.denominator).bit_length() - 1, 0)
    if isinstance(expr, (BAdd, BSub)):
        return max(_frac_need(expr.x), _frac_need(expr.y))
    if isinstance(expr, BScale):
        db = max(int(expr.c.denominator).bit_length() - 1, 0)
        return _frac_need(expr.x) + db
    raise TypeError(expr)


def _leaves(expr, acc):
    if isinstance(expr, BVar):
        if id(expr.var) not in {id(v) for v in acc}:
            acc.append(expr.var)
    elif isinstance(expr, (BAdd, BSub)):
        _leaves(expr.x, acc)
        _leaves(expr.y, acc)
    elif isinstance(expr, BScale):
        _leaves(expr.x, acc)
    return acc


class _Words:
    """Sign-magnitude words over a BoolBuilder; bits are const ints or vars."""

    def __init__(self, bb: BoolBuilder, int_bits: int, frac_bits: int):
        self.bb = bb
        self.int_bits = int_bits
        self.frac_bits = frac_bits
        self.width = int_bits + frac_bits
        if self.width < 1:
            raise KktboxError("empty word")

    def const_mag(self, value):
        scaled = rat(value) * rat(2) ** self.frac_bits
        if scaled.denominator != 1:
            raise KktboxError("constant does not fit the fractional grid")
        n = int(scaled)
        if n >= 2**self.width:
            raise KktboxError("constant overflows the word")
        return [(n >> (self.width - 1 - i)) & 1 for i in range(self.width)]

    def ripple_add(self, A, B):
        bb = self.bb
        out = [0] * self.width
        carry = 0
        for i in range(self.width - 1, -1, -1):
            a, b = A[i], B[i]
            axb = bb.bxor(a, b)
            out[i] = bb.bxor(axb, carry)
            carry = bb.bor(bb.band(a, b), bb.band(carry, axb))
        # no-overflow certified by the static range pass; carry dropped
        return out

    def ripple_sub(self, A, B):
        bb = self.bb
        out = [0] * self.width
        borrow = 0
        for i in range(self.width - 1, -1, -1):
            a, b = A[i], B[i]
            axb = bb.bxor(a, b)
            out[i] = bb.bxor(axb, borrow)
            borrow = bb.bor(bb.band(bb.bnot(a), b), bb.band(borrow, bb.bnot(axb)))
        return out, borrow

    def mux_word(self, sel, when1, when0):
        return [self.bb.mux(sel, a, b) for a, b in zip(when1, when0)]

    def sm_add(self, sx, X, sy, Y):
        bb = self.bb
        same = bb.bnot(bb.bxor(sx, sy))
        total = self.ripple_add(X, Y)
        d1, borrow = self.ripple_sub(X, Y)
        d2, _ = self.ripple_sub(Y, X)
        mag_diff = self.mux_word(borrow, d2, d1)
        sign_diff = bb.mux(borrow, sy, sx)
        mag = self.mux_word(same, total, mag_diff)
        sign = bb.mux(same, sx, sign_diff)
        return sign, mag

    def shift(self, X, k):
        """Multiply the magnitude by 2^k; dropped bits are provably zero by
        the range pass."""
        if k == 0:
            return list(X)
        if k > 0:
            return list(X[k:]) + [0] * k
        return [0] * (-k) + list(X[: self.width + k])


def _compile(expr, words: _Words, var_inputs):
    bb = words.bb
    if isinstance(expr, BConst):
        return (1 if expr.value < 0 else 0), words.const_mag(abs(expr.value))
    if isinstance(expr, BVar):
        v = expr.var
        if v.width - v.int_bits > words.frac_bits or v.int_bits > words.int_bits:
            raise KktboxError("operand does not fit the word layout")
        P = [0] * words.width
        M = [0] * words.width
        base = words.int_bits - v.int_bits
        pin, min_ = var_inputs[id(v)]
        for i in range(v.width):
            P[base + i] = pin[i]
            M[base + i] = min_[i]
        diff, borrow = words.ripple_sub(P, M)
        alt, _ = words.ripple_sub(M, P)
        mag = words.mux_word(borrow, alt, diff)
        return borrow, mag
    if isinstance(expr, BAdd):
        sx, X = _compile(expr.x, words, var_inputs)
        sy, Y = _compile(expr.y, words, var_inputs)
        return words.sm_add(sx, X, sy, Y)
    if isinstance(expr, BSub):
        sx, X = _compile(expr.x, words, var_inputs)
        sy, Y = _compile(expr.y, words, var_inputs)
        return words.sm_add(sx, X, words.bb.bnot(sy), Y)
    if isinstance(expr, BScale):
        sx, X = _compile(expr.x, words, var_inputs)
        c = expr.c
        if c == 0:
            return 0, [0] * words.width
        neg = c < 0
        q = abs(c)
        shift_base = -max(int(q.denominator).bit_length() - 1, 0)
        n = int(q * rat(2) ** (-shift_base))
        sign = words.bb.bxor(sx, 1) if neg else sx
        if neg:
            sign = words.bb.bnot(sx)
        total = None
        pos = 0
        while n:
            if n & 1:
                shifted = words.shift(X, shift_base + pos)
                if total is None:
                    total = shifted
                else:
                    total = words.ripple_add(total, shifted)
            n >>= 1
            pos += 1
        return sign, total if total is not None else [0] * words.width
    raise TypeError(expr)


def build_binary_arith(b: CircuitBuilder, expr, int_bits=None, frac_bits=None) -> BinaryVar:
    """Compile an expression over BinaryVars and dyadic constants.

    Word layout defaults to the exact static requirement (range for the
    integer part, denominator analysis for the fraction); explicit smaller
    budgets raise on overflow.
    """
    lo, hi = _range(expr)
    need_int = 0
    m = max(abs(lo), abs(hi))
    while rat(2) ** need_int <= m:
        need_int += 1
    need_frac = _frac_need(expr)
    if int_bits is None:
        int_bits = need_int
    if frac_bits is None:
        frac_bits = max(need_frac, 1)
    if need_int > int_bits or need_frac > frac_bits:
        raise KktboxError(
            f"width budget overflow: need {need_int}+{need_frac}, have {int_bits}+{frac_bits}"
        )

    leaves = _leaves(expr, [])
    n_inputs = sum(2 * v.width for v in leaves)
    wires = []
    var_inputs = {}
    pos = 1
    bb = BoolBuilder(max(n_inputs, 1))
    for v in leaves:
        pin = list(range(pos, pos + v.width))
        min_ = list(range(pos + v.width, pos + 2 * v.width))
        var_inputs[id(v)] = (pin, min_)
        wires.extend(v.plus_wires)
        wires.extend(v.minus_wires)
        pos += 2 * v.width

    words = _Words(bb, int_bits, frac_bits)
    sign, mag = _compile(expr, words, var_inputs)
    plus = [bb.band(mi, bb.bnot(sign)) for mi in mag]
    minus = [bb.band(mi, sign) for mi in mag]
    bc = bb.finalize(plus + minus)

    if not wires:
        # constant expression: emit constant wires directly
        value = rat(0)
        if isinstance(expr, BConst):
            value = expr.value
        else:
            # evaluate the constant expression exactly
            def ev(e):
                if isinstance(e, BConst):
                    return e.value
                if isinstance(e, BAdd):
                    return ev(e.x) + ev(e.y)
                if isinstance(e, BSub):
                    return ev(e.x) - ev(e.y)
                if isinstance(e, BScale):
                    return e.c * ev(e.x)
                raise TypeError(e)

            value = ev(expr)
        return BinaryVar.constant(b, value, int_bits + frac_bits, int_bits)

    outs = lower_boolean(b, bc, wires)
    w = int_bits + frac_bits
    return BinaryVar(w, tuple(outs[:w]), tuple(outs[w:]), int_bits)
