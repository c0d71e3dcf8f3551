"""NOT/AND Boolean circuits: interpreter, text format, table synthesis and
partial evaluation.

Variables are 1-based; inputs are 1..m and gate t defines variable m+1+t.
Each non-input variable is the output of exactly one gate, and gates only
read earlier variables.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import KktboxError, ParseError
from ..rational import ZERO, rat

NOT = "not"
AND = "and"


@dataclass(frozen=True)
class BooleanCircuit:
    n_inputs: int
    gates: tuple   # ("not", j) | ("and", j, k)
    outputs: tuple  # variable indices

    def __post_init__(self):
        if self.n_inputs < 1:
            raise KktboxError("boolean circuit needs at least one input")
        for t, g in enumerate(self.gates):
            w = self.n_inputs + 1 + t
            refs = g[1:]
            if g[0] not in (NOT, AND) or len(refs) != (1 if g[0] == NOT else 2):
                raise KktboxError(f"bad gate {g!r}")
            for r in refs:
                if not (1 <= r < w):
                    raise KktboxError(f"gate var {w} reads {r}")
        for o in self.outputs:
            if not (1 <= o <= self.var_count):
                raise KktboxError(f"output {o} out of range")

    @property
    def var_count(self) -> int:
        return self.n_inputs + len(self.gates)

    def interpret(self, bits):
        if len(bits) != self.n_inputs:
            raise KktboxError("input width mismatch")
        vals = [1 if b else 0 for b in bits]
        for g in self.gates:
            if g[0] == NOT:
                vals.append(1 - vals[g[1] - 1])
            else:
                vals.append(vals[g[1] - 1] & vals[g[2] - 1])
        return tuple(vals[o - 1] for o in self.outputs)


def serialize_boolean(bc: BooleanCircuit) -> str:
    lines = ["bool 1", f"inputs {bc.n_inputs}"]
    for t, g in enumerate(bc.gates):
        w = bc.n_inputs + 1 + t
        if g[0] == NOT:
            lines.append(f"not {w} {g[1]}")
        else:
            lines.append(f"and {w} {g[1]} {g[2]}")
    lines.append("outputs " + " ".join(str(o) for o in bc.outputs))
    return "\n".join(lines) + "\n"


def parse_boolean(text: str) -> BooleanCircuit:
    header = False
    n_inputs = None
    gates = []
    outputs = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if not header:
            if toks != ["bool", "1"]:
                raise ParseError("expected header 'bool 1'", lineno)
            header = True
        elif toks[0] == "inputs":
            n_inputs = int(toks[1])
        elif toks[0] in (NOT, AND):
            if n_inputs is None:
                raise ParseError("gate before inputs", lineno)
            idx = int(toks[1])
            if idx != n_inputs + 1 + len(gates):
                raise ParseError(f"gate index {idx} out of order", lineno)
            if toks[0] == NOT:
                gates.append((NOT, int(toks[2])))
            else:
                gates.append((AND, int(toks[2]), int(toks[3])))
        elif toks[0] == "outputs":
            outputs = tuple(int(t) for t in toks[1:])
        else:
            raise ParseError(f"unexpected directive {toks[0]!r}", lineno)
    if n_inputs is None or outputs is None:
        raise ParseError("incomplete boolean circuit")
    return BooleanCircuit(n_inputs, tuple(gates), outputs)


class BoolBuilder:
    """Grow a NOT/AND circuit; 'bits' are either 0/1 constants or var ids."""

    def __init__(self, n_inputs: int):
        self.n_inputs = n_inputs
        self.gates = []

    def _fresh(self, gate) -> int:
        self.gates.append(gate)
        return self.n_inputs + len(self.gates)

    def bnot(self, a):
        if a in (0, 1):
            return 1 - a
        return self._fresh((NOT, a))

    def band(self, a, b):
        if a == 0 or b == 0:
            return 0
        if a == 1:
            return b
        if b == 1:
            return a
        if a == b:
            return a
        return self._fresh((AND, a, b))

    def bor(self, a, b):
        return self.bnot(self.band(self.bnot(a), self.bnot(b)))

    def bxor(self, a, b):
        return self.bor(self.band(a, self.bnot(b)), self.band(self.bnot(a), b))

    def mux(self, sel, when1, when0):
        return self.bor(self.band(sel, when1), self.band(self.bnot(sel), when0))

    def or_tree(self, bits):
        bits = [b for b in bits if b != 0]
        if not bits:
            return 0
        while len(bits) > 1:
            nxt = [self.bor(bits[i], bits[i + 1]) for i in range(0, len(bits) - 1, 2)]
            if len(bits) % 2:
                nxt.append(bits[-1])
            bits = nxt
        return bits[0]

    def finalize(self, outputs) -> BooleanCircuit:
        # constant outputs must be materialized as real variables
        outs = []
        const_cache = {}
        for o in outputs:
            if o in (0, 1):
                if not const_cache:
                    nv = self._fresh((NOT, 1))
                    const_cache[0] = self._fresh((AND, 1, nv))
                    const_cache[1] = self._fresh((NOT, const_cache[0]))
                outs.append(const_cache[o])
            else:
                outs.append(o)
        return BooleanCircuit(self.n_inputs, tuple(self.gates), tuple(outs))


def table_circuit(n_inputs: int, rows) -> BooleanCircuit:
    """Sum-of-minterms circuit for a bit-vector function on {0,1}^n_inputs.

    rows: list of output bit tuples indexed by the input integer (MSB-first
    interpretation of the input bits).  Minterm ANDs are shared across output
    bits.
    """
    if len(rows) != 2**n_inputs:
        raise KktboxError("table must cover every input combination")
    width = len(rows[0])
    bb = BoolBuilder(n_inputs)
    neg = [bb.bnot(i + 1) for i in range(n_inputs)]
    minterms = []
    for idx in range(2**n_inputs):
        term = 1
        for pos in range(n_inputs):
            bit = (idx >> (n_inputs - 1 - pos)) & 1
            term = bb.band(term, (pos + 1) if bit else neg[pos])
        minterms.append(term)
    outs = []
    for b in range(width):
        outs.append(bb.or_tree([minterms[i] for i in range(len(rows)) if rows[i][b]]))
    return bb.finalize(outs)


def restrict_boolean(bc: BooleanCircuit, fixed: dict) -> tuple:
    """Partially evaluate with some inputs pinned to constants.

    Returns (circuit, input_map, out_desc): the new circuit reads the
    remaining inputs in their original order; out_desc entries are
    ("const", bit) or ("var", index into the new circuit).
    """
    remaining = [i for i in range(1, bc.n_inputs + 1) if i not in fixed]
    if not remaining:
        raise KktboxError("restriction must leave at least one input")
    bb = BoolBuilder(len(remaining))
    val = {}
    for new, old in enumerate(remaining, start=1):
        val[old] = new
    for old, bit in fixed.items():
        val[old] = 1 if bit else 0
    for t, g in enumerate(bc.gates):
        w = bc.n_inputs + 1 + t
        if g[0] == NOT:
            val[w] = bb.bnot(val[g[1]])
        else:
            val[w] = bb.band(val[g[1]], val[g[2]])
    desc = []
    for o in bc.outputs:
        v = val[o]
        if v in (0, 1):
            desc.append(("const", v))
        else:
            desc.append(("var", v))
    circ = BooleanCircuit(bb.n_inputs, tuple(bb.gates), tuple(v for k, v in desc if k == "var") or (1,))
    return circ, remaining, desc
