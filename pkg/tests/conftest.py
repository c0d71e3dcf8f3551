import random
from fractions import Fraction

import pytest
from gmpy2 import mpq

from kktbox.circuit import Gate, LinearCircuit, lin_gate, max_gate, min_gate, tl_gate, truncab_gate


def rand_rat(rng, max_num=4, max_den=4, allow_zero=True):
    while True:
        q = mpq(rng.randint(-max_num, max_num), rng.randint(1, max_den))
        if allow_zero or q != 0:
            return q


def rand_tl_circuit(rng, inputs=2, gates=3, max_num=3, max_den=4):
    """Random trunc-linear circuit, two-term gates, outputs the last wire."""
    gate_list = []
    for t in range(gates):
        w = inputs + 1 + t
        j = rng.randint(1, w - 1)
        k = rng.randint(1, w - 1)
        gate_list.append(
            tl_gate([(rand_rat(rng, max_num, max_den), j), (rand_rat(rng, max_num, max_den), k)],
                    c=rand_rat(rng, max_num, max_den))
        )
    return LinearCircuit(inputs, gate_list, inputs + gates)


def rand_mixed_circuit(rng, inputs=2, gates=6, trunc01_output=True):
    """Random circuit over all gate kinds; optionally a trunc01-typed output."""
    gate_list = []
    n_body = gates - 1 if trunc01_output else gates
    for t in range(n_body):
        w = inputs + 1 + t
        kind = rng.choice(["tl", "lin", "truncab", "min", "max"])
        j = rng.randint(1, w - 1)
        k = rng.randint(1, w - 1)
        if kind in ("tl", "lin"):
            ctor = tl_gate if kind == "tl" else lin_gate
            gate_list.append(
                ctor([(rand_rat(rng, 3, 3), j), (rand_rat(rng, 3, 3), k)], c=rand_rat(rng, 2, 3))
            )
        elif kind == "truncab":
            lo = rand_rat(rng, 3, 2)
            hi = lo + mpq(rng.randint(1, 4), rng.randint(1, 2))
            gate_list.append(truncab_gate(lo, hi, j))
        elif kind == "min":
            gate_list.append(min_gate(j, k))
        else:
            gate_list.append(max_gate(j, k))
    if trunc01_output:
        w = inputs + 1 + n_body
        j = rng.randint(1, w - 1)
        gate_list.append(tl_gate([(mpq(1), j)]))
    return LinearCircuit(inputs, gate_list, inputs + gates)


def _frac(v):
    if isinstance(v, Fraction):
        return v
    if isinstance(v, int):
        return Fraction(v)
    return Fraction(int(v.numerator), int(v.denominator))


def brute_force_eval(circuit, pi_entries, xs):
    """Independent oracle: recursive evaluation with stdlib Fractions."""
    xs = [_frac(v) for v in xs]
    memo = {}

    def pi_of(w):
        return _frac(pi_entries.get(w, 0))

    def clamp(v, lo, hi):
        return lo if v < lo else (hi if v > hi else v)

    def wire(w):
        if w <= circuit.input_count:
            return xs[w - 1]
        if w in memo:
            return memo[w]
        g = circuit.gate_at_wire(w)
        if g.kind in ("tl", "lin"):
            s = _frac(g.c)
            for a, src in g.terms:
                s += _frac(a) * wire(src)
            if g.kind == "tl":
                s = clamp(s + pi_of(w), Fraction(0), Fraction(1))
        elif g.kind == "truncab":
            s = clamp(wire(g.j) + pi_of(w), _frac(g.lo), _frac(g.hi))
        elif g.kind == "min":
            s = min(wire(g.j), wire(g.k) + pi_of(w))
        else:
            s = max(wire(g.j), wire(g.k) + pi_of(w))
        memo[w] = s
        return s

    return wire(circuit.output_index)


@pytest.fixture
def rng():
    return random.Random(20240901)
