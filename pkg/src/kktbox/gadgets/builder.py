"""Linear-circuit builders for the binary/mesa gadgets.

BinaryVar is a sign-magnitude fixed-point encoding spread over circuit
wires: width w bits per bank, bit i carrying weight 2^(int_bits - i), most
significant first.  A correct encoding has all bank wires in {0, 1} with at
most one bank nonzero.

The perturbation accounting of the multiply gadgets relies on the decoded
magnitudes being at most one-ish: BitMultiply contributes its max-gate's
perturbation only when the bit is set, so ContTimesBin's offset is bounded
by the sum of set-bit weights.  Large exact constants (the boundary slope,
grid offsets) therefore never pass through ContTimesBin; they are folded
into affine gates, which keeps the per-piece offsets at the advertised
2 * max|pi|.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..circuit import Gate, LinearCircuit, lin_gate, max_gate, min_gate, tl_gate, truncab_gate
from ..errors import KktboxError
from ..rational import ONE, ZERO, Rat, is_dyadic, rat
from .boolcirc import AND, NOT, BooleanCircuit


class CircuitBuilder:
    def __init__(self, input_count: int):
        self.input_count = input_count
        self.gates = []
        self._consts = {}

    def _fresh(self, gate) -> int:
        self.gates.append(gate)
        return self.input_count + len(self.gates)

    def lin(self, terms, c=0) -> int:
        terms = [(rat(a), w) for a, w in terms if rat(a) != 0]
        if not terms:
            return self.const(c)
        return self._fresh(lin_gate(terms, c))

    def tl(self, terms, c=0) -> int:
        return self._fresh(tl_gate(terms, c))

    def truncab(self, lo, hi, j) -> int:
        return self._fresh(truncab_gate(lo, hi, j))

    def minw(self, j, k) -> int:
        return self._fresh(min_gate(j, k))

    def maxw(self, j, k) -> int:
        return self._fresh(max_gate(j, k))

    def const(self, value) -> int:
        """Constant wire: an affine gate with zero coefficient (unperturbable)."""
        value = rat(value)
        if value not in self._consts:
            self._consts[value] = self._fresh(lin_gate([(0, 1)], c=value))
        return self._consts[value]

    def finalize(self, output_wire: int) -> LinearCircuit:
        return LinearCircuit(self.input_count, self.gates, output_wire)


@dataclass
class BinaryVar:
    width: int
    plus_wires: tuple
    minus_wires: tuple
    int_bits: int = 0  # weight of bit i is 2^(int_bits - i), MSB first

    def __post_init__(self):
        if len(self.plus_wires) != self.width or len(self.minus_wires) != self.width:
            raise KktboxError("bank width mismatch")

    def weight(self, i) -> Rat:
        return rat(2) ** (self.int_bits - (i + 1))

    def max_magnitude(self) -> Rat:
        return sum((self.weight(i) for i in range(self.width)), ZERO)

    @staticmethod
    def constant(builder: CircuitBuilder, value, width: int, int_bits: int = 0) -> "BinaryVar":
        """Encode an exact dyadic constant as constant bit wires."""
        value = rat(value)
        mag = abs(value)
        scaled = mag * rat(2) ** (width - int_bits)
        if scaled.denominator != 1 or scaled > 2**width - 1:
            raise KktboxError(f"{value} not representable in {int_bits}+{width - int_bits} bits")
        bits = []
        n = int(scaled)
        for i in range(width):
            bits.append((n >> (width - 1 - i)) & 1)
        zero = builder.const(0)
        one = builder.const(1)
        plus = tuple(one if b and value > 0 else zero for b in bits)
        minus = tuple(one if b and value < 0 else zero for b in bits)
        return BinaryVar(width, plus, minus, int_bits)


def decoded_value(var: BinaryVar, trace) -> Rat:
    total = ZERO
    for i in range(var.width):
        w = var.weight(i)
        total += w * trace.value(var.plus_wires[i]) - w * trace.value(var.minus_wires[i])
    return total


def build_decode(b: CircuitBuilder, v: BinaryVar) -> int:
    """Weighted bank difference; affine only, so perturbations never touch it."""
    terms = []
    for i in range(v.width):
        w = v.weight(i)
        terms.append((w, v.plus_wires[i]))
        terms.append((-w, v.minus_wires[i]))
    return b.lin(terms)


def build_extract_bits(b: CircuitBuilder, x: int, n: int, L) -> BinaryVar:
    """Leading n bits of a continuous value in [0, 1).

    b_i = trunc01((x_{i-1} - 2^-i) / L), x_i = x_{i-1} - b_i / 2^i; decoding
    fails only inside the L-wide bad regions above multiples of 2^-n.
    """
    L = rat(L)
    if L <= 0:
        raise ValueError("L must be positive")
    zero = b.const(0)
    plus = []
    cur = x
    for i in range(1, n + 1):
        bit = b.tl([(1 / L, cur)], c=-rat(1, 2**i) / L)
        plus.append(bit)
        cur = b.lin([(1, cur), (-rat(1, 2**i), bit)])
    return BinaryVar(n, tuple(plus), tuple([zero] * n), 0)


def lower_boolean(b: CircuitBuilder, bc: BooleanCircuit, inputs) -> list:
    """NOT becomes affine 1 - v; AND becomes trunc01(4(v_j + v_k - 3/2))."""
    if len(inputs) != bc.n_inputs:
        raise KktboxError("boolean input width mismatch")
    wires = list(inputs)
    for g in bc.gates:
        if g[0] == NOT:
            wires.append(b.lin([(-1, wires[g[1] - 1])], c=1))
        else:
            wires.append(b.tl([(4, wires[g[1] - 1]), (4, wires[g[2] - 1])], c=-6))
    return [wires[o - 1] for o in bc.outputs]


def build_bit_multiply(b: CircuitBuilder, x: int, bit: int) -> int:
    """x * bit for x in [-2, 2], bit in {0, 1}: 4(1-b) + max(-4, x - 8(1-b)).

    The max gate's perturbation lands on its second argument, so the output
    is exactly 0 when the bit is 0 and x + pi when it is 1.
    """
    u = b.lin([(1, x), (8, bit)], c=-8)
    m = b.maxw(b.const(-4), u)
    return b.lin([(1, m), (-4, bit)], c=4)


def build_cont_times_bin(b: CircuitBuilder, x: int, y: BinaryVar,
                         skip_const_zero=True) -> int:
    """x * decode(y) as a weighted sum of per-bit multiplies."""
    zero = b._consts.get(ZERO)
    terms = []
    for i in range(y.width):
        w = y.weight(i)
        pw = y.plus_wires[i]
        mw = y.minus_wires[i]
        if not (skip_const_zero and pw == zero):
            terms.append((w, build_bit_multiply(b, x, pw)))
        if not (skip_const_zero and mw == zero):
            terms.append((-w, build_bit_multiply(b, x, mw)))
    if not terms:
        return b.const(0)
    return b.lin(terms)


def build_affine(b: CircuitBuilder, x1: int, x2: int, p1: BinaryVar, p2: BinaryVar,
                 a: BinaryVar, g1: BinaryVar, g2: BinaryVar) -> int:
    """(x1 - p1) g1 + (x2 - p2) g2 + a with binary-encoded parameters.

    The perturbation offset comes only from the two multiplies and is
    independent of x, so the gradient is exactly (g1, g2).
    """
    u1 = b.lin([(1, x1), (-1, build_decode(b, p1))])
    u2 = b.lin([(1, x2), (-1, build_decode(b, p2))])
    c1 = build_cont_times_bin(b, u1, g1)
    c2 = build_cont_times_bin(b, u2, g2)
    return b.lin([(1, c1), (1, c2), (1, build_decode(b, a))])
