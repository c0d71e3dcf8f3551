"""Piecewise-linear arithmetic circuit IR.

Wires are 1-based: wires 1..m are the inputs, gate t (0-based position in
the gate list) computes wire m+1+t. Gate kinds:

    tl       x_i = trunc01(sum_j a_ij * x_j + c_i)     perturbable
    lin      x_i = sum_j a_ij * x_j + c_i
    truncab  x_i = trunc_[lo,hi](x_j)                  perturbable
    min      x_i = min(x_j, x_k)                       perturbable
    max      x_i = max(x_j, x_k)                       perturbable

tl/lin gates take any number of (coefficient, wire) terms; the two-term case
is the classic truncated linear gate.  A perturbation adds pi_i inside the
truncation argument, or onto the second argument of min/max:
min(x_j, x_k + pi_i), max(x_j, x_k + pi_i).
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DimensionError, ExtendedGateError, ParseError, TopologyError
from .rational import ONE, ZERO, Rat, format_rat, parse_rat, rat, trunc01, trunc_interval

TL = "tl"
LIN = "lin"
TRUNCAB = "truncab"
MIN = "min"
MAX = "max"

PERTURBABLE_KINDS = frozenset({TL, TRUNCAB, MIN, MAX})
GATE_KINDS = frozenset({TL, LIN, TRUNCAB, MIN, MAX})


@dataclass(frozen=True)
class Gate:
    kind: str
    terms: tuple = ()  # ((coeff, wire), ...) for tl/lin
    c: Rat = ZERO      # tl/lin constant
    j: int = 0         # truncab input, min/max first argument
    k: int = 0         # min/max second argument (the perturbed one)
    lo: Rat = ZERO     # truncab bounds
    hi: Rat = ONE

    def inputs(self):
        if self.kind in (TL, LIN):
            return tuple(w for _, w in self.terms)
        if self.kind == TRUNCAB:
            return (self.j,)
        return (self.j, self.k)


def tl_gate(terms, c=0) -> Gate:
    return Gate(TL, terms=tuple((rat(a), w) for a, w in terms), c=rat(c))


def lin_gate(terms, c=0) -> Gate:
    return Gate(LIN, terms=tuple((rat(a), w) for a, w in terms), c=rat(c))


def truncab_gate(lo, hi, j) -> Gate:
    return Gate(TRUNCAB, j=j, lo=rat(lo), hi=rat(hi))


def min_gate(j, k) -> Gate:
    return Gate(MIN, j=j, k=k)


def max_gate(j, k) -> Gate:
    return Gate(MAX, j=j, k=k)


class LinearCircuit:
    """Validated gate list with one output wire."""

    def __init__(self, input_count: int, gates, output_index: int):
        if input_count < 1:
            raise TopologyError("input_count must be positive")
        self.input_count = input_count
        self.gates = tuple(gates)
        self.output_index = output_index
        self._validate()

    @property
    def wire_count(self) -> int:
        return self.input_count + len(self.gates)

    def gate_wire(self, t: int) -> int:
        return self.input_count + 1 + t

    def gate_at_wire(self, w: int) -> Gate:
        return self.gates[w - self.input_count - 1]

    def perturbable_wires(self):
        m = self.input_count
        return tuple(m + 1 + t for t, g in enumerate(self.gates) if g.kind in PERTURBABLE_KINDS)

    def is_trunc_linear_only(self) -> bool:
        return all(g.kind == TL for g in self.gates)

    def _validate(self):
        m = self.input_count
        for t, g in enumerate(self.gates):
            w = m + 1 + t
            if g.kind not in GATE_KINDS:
                raise TopologyError(f"gate at wire {w}: unknown kind {g.kind!r}")
            if g.kind in (TL, LIN) and not g.terms:
                raise TopologyError(f"gate at wire {w}: needs at least one term")
            for ref in g.inputs():
                if not (1 <= ref < w):
                    raise TopologyError(f"gate at wire {w} reads wire {ref}")
            if g.kind == TRUNCAB and not g.lo < g.hi:
                raise TopologyError(f"gate at wire {w}: trunc interval needs lo < hi")
        if not (1 <= self.output_index <= self.wire_count):
            raise TopologyError(f"output wire {self.output_index} out of range")

    def structurally_equal(self, other) -> bool:
        return (
            self.input_count == other.input_count
            and self.output_index == other.output_index
            and self.gates == other.gates
        )

    def __repr__(self):
        return (
            f"LinearCircuit(inputs={self.input_count}, gates={len(self.gates)}, "
            f"output={self.output_index})"
        )


@dataclass
class PerturbationVector:
    """Perturbation entries keyed by perturbable gate wire index."""

    entries: dict
    bound: Rat

    def __post_init__(self):
        self.entries = {w: rat(v) for w, v in self.entries.items()}
        self.bound = rat(self.bound)
        for w, v in self.entries.items():
            if abs(v) > self.bound:
                raise ValueError(f"perturbation entry at wire {w} exceeds bound {self.bound}")

    @staticmethod
    def zero() -> "PerturbationVector":
        return PerturbationVector({}, ZERO)

    def check_against(self, circuit: LinearCircuit):
        ok = set(circuit.perturbable_wires())
        for w in self.entries:
            if w not in ok:
                raise ValueError(f"wire {w} is not a perturbable gate of this circuit")

    def get(self, wire: int) -> Rat:
        return self.entries.get(wire, ZERO)

    def max_abs(self) -> Rat:
        if not self.entries:
            return ZERO
        return max(abs(v) for v in self.entries.values())


@dataclass
class EvalTrace:
    """One exact value per wire, inputs first."""

    wire_values: tuple

    def value(self, wire: int) -> Rat:
        return self.wire_values[wire - 1]


@dataclass
class RegionGradient:
    differentiable: bool
    gradient: tuple | None = None
    region_radius: Rat | None = None  # None with differentiable=True: unbounded


# ---------------------------------------------------------------------------
# evaluation


def evaluate_perturbed(circuit: LinearCircuit, pi: PerturbationVector, xs) -> EvalTrace:
    """Gate-by-gate exact evaluation of the perturbed circuit."""
    if len(xs) != circuit.input_count:
        raise DimensionError(f"expected {circuit.input_count} inputs, got {len(xs)}")
    pi.check_against(circuit)
    values = [rat(x) for x in xs]
    m = circuit.input_count
    get = pi.entries.get
    append = values.append
    for t, g in enumerate(circuit.gates):
        kind = g.kind
        if kind == TL:
            s = g.c + get(m + 1 + t, ZERO)
            for a, w in g.terms:
                s += a * values[w - 1]
            append(ZERO if s < 0 else (ONE if s > 1 else s))
        elif kind == LIN:
            s = g.c
            for a, w in g.terms:
                s += a * values[w - 1]
            append(s)
        elif kind == MIN:
            append(min(values[g.j - 1], values[g.k - 1] + get(m + 1 + t, ZERO)))
        elif kind == MAX:
            append(max(values[g.j - 1], values[g.k - 1] + get(m + 1 + t, ZERO)))
        else:  # truncab
            append(trunc_interval(values[g.j - 1] + get(m + 1 + t, ZERO), g.lo, g.hi))
    return EvalTrace(tuple(values))


def evaluate(circuit: LinearCircuit, xs) -> Rat:
    return evaluate_perturbed(circuit, PerturbationVector.zero(), xs).value(circuit.output_index)


# ---------------------------------------------------------------------------
# regional gradient

S_LOW = "low"
S_INTERIOR = "interior"
S_HIGH = "high"
S_LEFT = "left"   # min/max: first argument selected
S_RIGHT = "right"


def gate_pre_value(g: Gate, values, eps) -> Rat:
    """Pre-truncation argument of a tl gate (exact)."""
    s = g.c + eps
    for a, w in g.terms:
        s += a * values[w - 1]
    return s


def _gate_status(g: Gate, values, eps):
    """(status, margin) at an exact point; margin 0 means a tie/breakpoint."""
    if g.kind == TL:
        s = gate_pre_value(g, values, eps)
        lo, hi = ZERO, ONE
    elif g.kind == TRUNCAB:
        s = values[g.j - 1] + eps
        lo, hi = g.lo, g.hi
    else:
        u = values[g.j - 1]
        v = values[g.k - 1] + eps
        if u < v:
            return (S_LEFT if g.kind == MIN else S_RIGHT), v - u
        if u > v:
            return (S_RIGHT if g.kind == MIN else S_LEFT), u - v
        return S_LEFT, ZERO
    if s < lo:
        return S_LOW, lo - s
    if s > hi:
        return S_HIGH, s - hi
    return S_INTERIOR, min(s - lo, hi - s)


def gate_statuses(circuit: LinearCircuit, pi: PerturbationVector, trace: EvalTrace):
    """Per-gate (status, margin) list; margin 0 marks a breakpoint tie."""
    values = trace.wire_values
    m = circuit.input_count
    out = []
    for t, g in enumerate(circuit.gates):
        if g.kind == LIN:
            out.append((None, None))
        else:
            out.append(_gate_status(g, values, pi.get(m + 1 + t)))
    return out


def region_gradient(circuit: LinearCircuit, pi: PerturbationVector, xs) -> RegionGradient:
    """Exact gradient of the perturbed circuit at xs, with a sup-norm radius
    within which the circuit stays affine.

    Any gate sitting exactly on a breakpoint (truncation boundary or min/max
    tie) marks the point non-differentiable, matching the generalized-gradient
    limit definition; the radius is a conservative bound from per-gate margins
    divided by exact path-Lipschitz constants.
    """
    trace = evaluate_perturbed(circuit, pi, xs)
    values = trace.wire_values
    m = circuit.input_count
    statuses = []
    margins = []
    for t, g in enumerate(circuit.gates):
        if g.kind == LIN:
            statuses.append(None)
            margins.append(None)
            continue
        st, margin = _gate_status(g, values, pi.get(m + 1 + t))
        if margin == 0:
            return RegionGradient(differentiable=False)
        statuses.append(st)
        margins.append(margin)

    # reverse-mode adjoint
    adjoint = [ZERO] * circuit.wire_count
    adjoint[circuit.output_index - 1] = ONE
    for t in range(len(circuit.gates) - 1, -1, -1):
        g = circuit.gates[t]
        ad = adjoint[m + t]
        if ad == 0:
            continue
        st = statuses[t]
        if g.kind == LIN or (g.kind == TL and st == S_INTERIOR):
            for a, w in g.terms:
                adjoint[w - 1] += ad * a
        elif g.kind == TRUNCAB:
            if st == S_INTERIOR:
                adjoint[g.j - 1] += ad
        elif g.kind in (MIN, MAX):
            adjoint[(g.j if st == S_LEFT else g.k) - 1] += ad
    gradient = tuple(adjoint[:m])

    # conservative radius: decision-value sensitivities wrt the inputs
    # (sup norm), computed with every truncation treated as 1-Lipschitz
    lip = [ONE] * m
    radius = None
    for t, g in enumerate(circuit.gates):
        if g.kind in (TL, LIN):
            lw = ZERO
            for a, w in g.terms:
                lw += abs(a) * lip[w - 1]
            pre = lw
        elif g.kind == TRUNCAB:
            lw = lip[g.j - 1]
            pre = lw
        else:
            lw = max(lip[g.j - 1], lip[g.k - 1])
            pre = lip[g.j - 1] + lip[g.k - 1]
        lip.append(lw)
        if g.kind in PERTURBABLE_KINDS and pre > 0:
            bound = margins[t] / pre
            if radius is None or bound < radius:
                radius = bound
    return RegionGradient(differentiable=True, gradient=gradient, region_radius=radius)


def coefficient_bound(circuit: LinearCircuit) -> Rat:
    """K = max(1, max_i sum_j |a_ij| + |c_i|) over truncated-linear gates."""
    best = ONE
    for t, g in enumerate(circuit.gates):
        if g.kind != TL:
            raise ExtendedGateError(
                f"gate at wire {circuit.gate_wire(t)} has kind {g.kind}; normalize first"
            )
        per_wire = {}
        for a, w in g.terms:
            per_wire[w] = per_wire.get(w, ZERO) + a
        s = sum((abs(v) for v in per_wire.values()), ZERO) + abs(g.c)
        if s > best:
            best = s
    return best


def combined_terms(g: Gate):
    """Terms with duplicate wires merged (the paper's a_ij view)."""
    per_wire = {}
    for a, w in g.terms:
        per_wire[w] = per_wire.get(w, ZERO) + a
    return tuple((a, w) for w, a in sorted(per_wire.items()))


# ---------------------------------------------------------------------------
# interval evaluation (neighborhood-differentiability certificates)


def interval_eval_crisp(circuit: LinearCircuit, pi: PerturbationVector, boxes):
    """Interval propagation over input boxes [(lo, hi), ...] at a fixed pi.

    Returns (crisp, statuses): crisp is True when every trunc/min/max gate
    keeps one status over the whole box, certifying the circuit is affine
    (hence differentiable with constant gradient) there.
    """
    if len(boxes) != circuit.input_count:
        raise DimensionError("box count mismatch")
    pi.check_against(circuit)
    lo = [rat(a) for a, _ in boxes]
    hi = [rat(b) for _, b in boxes]
    m = circuit.input_count
    statuses = []
    crisp = True
    for t, g in enumerate(circuit.gates):
        eps = pi.get(m + 1 + t)
        if g.kind in (TL, LIN):
            plo = g.c + (eps if g.kind == TL else ZERO)
            phi = plo
            for a, w in g.terms:
                if a >= 0:
                    plo += a * lo[w - 1]
                    phi += a * hi[w - 1]
                else:
                    plo += a * hi[w - 1]
                    phi += a * lo[w - 1]
            if g.kind == LIN:
                statuses.append(None)
                lo.append(plo)
                hi.append(phi)
                continue
            glo, ghi = ZERO, ONE
        elif g.kind == TRUNCAB:
            plo, phi = lo[g.j - 1] + eps, hi[g.j - 1] + eps
            glo, ghi = g.lo, g.hi
        else:
            ulo, uhi = lo[g.j - 1], hi[g.j - 1]
            vlo, vhi = lo[g.k - 1] + eps, hi[g.k - 1] + eps
            if uhi < vlo:
                st = S_LEFT if g.kind == MIN else S_RIGHT
            elif vhi < ulo:
                st = S_RIGHT if g.kind == MIN else S_LEFT
            else:
                st = None
                crisp = False
            statuses.append(st)
            if g.kind == MIN:
                lo.append(min(ulo, vlo))
                hi.append(min(uhi, vhi))
            else:
                lo.append(max(ulo, vlo))
                hi.append(max(uhi, vhi))
            continue
        if phi < glo:
            st, olo, ohi = S_LOW, glo, glo
        elif plo > ghi:
            st, olo, ohi = S_HIGH, ghi, ghi
        elif plo > glo and phi < ghi:
            st, olo, ohi = S_INTERIOR, plo, phi
        else:
            st = None
            crisp = False
            olo, ohi = max(plo, glo), min(phi, ghi)
        statuses.append(st)
        lo.append(olo)
        hi.append(ohi)
    return crisp, statuses


# ---------------------------------------------------------------------------
# .lac text format


def serialize_circuit(circuit: LinearCircuit) -> str:
    lines = ["lac 1", f"inputs {circuit.input_count}"]
    for t, g in enumerate(circuit.gates):
        w = circuit.gate_wire(t)
        if g.kind in (TL, LIN):
            pairs = " ".join(f"{format_rat(a)} {wi}" for a, wi in g.terms)
            lines.append(f"gate {w} {g.kind} {pairs} {format_rat(g.c)}")
        elif g.kind == TRUNCAB:
            lines.append(f"gate {w} truncab {format_rat(g.lo)} {format_rat(g.hi)} {g.j}")
        else:
            lines.append(f"gate {w} {g.kind} {g.j} {g.k}")
    lines.append(f"output {circuit.output_index}")
    return "\n".join(lines) + "\n"


def _int_token(tok, lineno):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"expected an integer, got {tok!r}", lineno)


def _rat_token(tok, lineno):
    try:
        return parse_rat(tok)
    except ValueError as e:
        raise ParseError(str(e), lineno)


def parse_circuit(text: str) -> LinearCircuit:
    """Parse the .lac format; '#' starts a comment.

    tl/lin gate lines carry one or more "<coeff> <wire>" pairs followed by
    the constant term (the spec's two-pair display is the common case).
    """
    header_seen = False
    input_count = None
    gates = []
    output_index = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if not header_seen:
            if toks != ["lac", "1"]:
                raise ParseError("expected header 'lac 1'", lineno)
            header_seen = True
            continue
        if toks[0] == "inputs":
            if input_count is not None or len(toks) != 2:
                raise ParseError("malformed inputs line", lineno)
            input_count = _int_token(toks[1], lineno)
            if input_count < 1:
                raise ParseError("inputs must be positive", lineno)
        elif toks[0] == "gate":
            if input_count is None:
                raise ParseError("gate before inputs line", lineno)
            if len(toks) < 5:
                raise ParseError("malformed gate line", lineno)
            idx = _int_token(toks[1], lineno)
            expected = input_count + 1 + len(gates)
            if idx != expected:
                raise ParseError(f"gate index {idx}, expected {expected}", lineno)
            kind = toks[2]
            rest = toks[3:]
            if kind in (TL, LIN):
                if len(rest) % 2 != 1 or len(rest) < 3:
                    raise ParseError("tl/lin gate needs coeff/wire pairs and a constant", lineno)
                terms = tuple(
                    (_rat_token(rest[i], lineno), _int_token(rest[i + 1], lineno))
                    for i in range(0, len(rest) - 1, 2)
                )
                g = Gate(kind, terms=terms, c=_rat_token(rest[-1], lineno))
            elif kind == TRUNCAB:
                if len(rest) != 3:
                    raise ParseError("truncab gate needs lo hi wire", lineno)
                g = Gate(TRUNCAB, j=_int_token(rest[2], lineno),
                         lo=_rat_token(rest[0], lineno), hi=_rat_token(rest[1], lineno))
            elif kind in (MIN, MAX):
                if len(rest) != 2:
                    raise ParseError("min/max gate needs two wires", lineno)
                g = Gate(kind, j=_int_token(rest[0], lineno), k=_int_token(rest[1], lineno))
            else:
                raise ParseError(f"unknown gate kind {kind!r}", lineno)
            for ref in g.inputs():
                if not (1 <= ref < idx):
                    raise ParseError(f"gate {idx} reads wire {ref}", lineno)
            if g.kind == TRUNCAB and not g.lo < g.hi:
                raise ParseError("trunc interval needs lo < hi", lineno)
            gates.append(g)
        elif toks[0] == "output":
            if len(toks) != 2 or output_index is not None:
                raise ParseError("malformed output line", lineno)
            output_index = _int_token(toks[1], lineno)
        else:
            raise ParseError(f"unexpected directive {toks[0]!r}", lineno)
    if not header_seen or input_count is None or output_index is None:
        raise ParseError("incomplete circuit (need header, inputs, output)")
    try:
        return LinearCircuit(input_count, gates, output_index)
    except (TopologyError, ValueError) as e:
        raise ParseError(str(e))


def example_3_2_circuit() -> LinearCircuit:
    """One-input fixture: x2 = trunc(2 x1), x3 = trunc(x1 - 1/2),
    x4 = trunc(x2/2 + x3 - x1/2).  Computes x1 -> x1/2 on [0,1]; its
    compiled QP has a spurious interior KKT point.
    """
    return LinearCircuit(
        1,
        [
            tl_gate([(2, 1)]),
            tl_gate([(1, 1)], c=rat(-1, 2)),
            tl_gate([(rat(1, 2), 2), (1, 3), (rat(-1, 2), 1)]),
        ],
        4,
    )
