"""Two-stage normalization of extended-gate circuits to trunc01-only gates.

Stage 1 (preprocess) rewrites every gate into affine-linear and single-input
interval-truncation gates; min/max lower through a [0, 3B] truncation window,
with B a bound on any wire value of the original circuit under perturbations
in [-1, 1] and inputs in [0, 1].

Stage 2 (lower) encodes every value x in [1/4, 3/4] via phi(x) = 1/2 + x/4B
and emits trunc01 gates only: affine gates become phi-conjugated truncated
sums, each interval truncation becomes a psi-gate (mapping [lo, hi] to
[0, 1]) followed by a re-encoding gate, and the output stays un-encoded.

The perturbation transfer replays the construction symbolically: every
trunc01 gate of the normalized circuit contributes a linear error term, and
the accumulated errors surface as perturbations sigma on the original
circuit's perturbable gates with |sigma_i| <= delta * K, K = 4 B^N.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .circuit import (
    LIN,
    MAX,
    MIN,
    TL,
    TRUNCAB,
    Gate,
    LinearCircuit,
    PerturbationVector,
    lin_gate,
    tl_gate,
    truncab_gate,
)
from .errors import KktboxError
from .rational import ONE, ZERO, Rat, rat


@dataclass
class ValueBound:
    B: Rat


def value_bound(circuit: LinearCircuit) -> ValueBound:
    """Integer B >= 2 bounding every wire value under [-1,1] perturbations,
    with B >= sum|a| + 1 per affine/trunc-linear gate and B >= hi - lo per
    interval truncation.
    """
    lo = [ZERO] * circuit.input_count
    hi = [ONE] * circuit.input_count
    worst = ONE
    clause = rat(2)
    for g in circuit.gates:
        if g.kind in (TL, LIN):
            plo = g.c
            phi_ = g.c
            coeff_sum = ZERO
            for a, w in g.terms:
                coeff_sum += abs(a)
                if a >= 0:
                    plo += a * lo[w - 1]
                    phi_ += a * hi[w - 1]
                else:
                    plo += a * hi[w - 1]
                    phi_ += a * lo[w - 1]
            clause = max(clause, coeff_sum + 1)
            if g.kind == TL:
                plo = min(max(plo - 1, ZERO), ONE)
                phi_ = min(max(phi_ + 1, ZERO), ONE)
        elif g.kind == TRUNCAB:
            clause = max(clause, g.hi - g.lo)
            plo = min(max(lo[g.j - 1] - 1, g.lo), g.hi)
            phi_ = min(max(hi[g.j - 1] + 1, g.lo), g.hi)
        elif g.kind == MIN:
            plo = min(lo[g.j - 1], lo[g.k - 1] - 1)
            phi_ = min(hi[g.j - 1], hi[g.k - 1] + 1)
        else:
            plo = max(lo[g.j - 1], lo[g.k - 1] - 1)
            phi_ = max(hi[g.j - 1], hi[g.k - 1] + 1)
        lo.append(plo)
        hi.append(phi_)
        worst = max(worst, abs(plo), abs(phi_))
    b = max(clause, worst)
    return ValueBound(rat(math.ceil(b)))


@dataclass
class PreprocessResult:
    circuit: LinearCircuit
    wire_map: dict      # original wire -> preprocessed wire
    pert_map: dict      # original perturbable wire -> (pre truncab wire, sign)
    window_bound: Rat   # the B used for the 3B min/max windows


def _preprocess(circuit: LinearCircuit) -> PreprocessResult:
    b0 = value_bound(circuit).B
    window = 3 * b0
    gates = []
    m = circuit.input_count

    def fresh(gate):
        gates.append(gate)
        return m + len(gates)

    wmap = {i: i for i in range(1, m + 1)}
    pmap = {}
    for t, g in enumerate(circuit.gates):
        w = m + 1 + t
        if g.kind == LIN:
            wmap[w] = fresh(lin_gate([(a, wmap[src]) for a, src in g.terms], g.c))
        elif g.kind == TL:
            u = fresh(lin_gate([(a, wmap[src]) for a, src in g.terms], g.c))
            tw = fresh(truncab_gate(0, 1, u))
            wmap[w] = tw
            pmap[w] = (tw, 1)
        elif g.kind == TRUNCAB:
            tw = fresh(truncab_gate(g.lo, g.hi, wmap[g.j]))
            wmap[w] = tw
            pmap[w] = (tw, 1)
        elif g.kind == MIN:
            d = fresh(lin_gate([(1, wmap[g.j]), (-1, wmap[g.k])]))
            tw = fresh(truncab_gate(0, window, d))
            wmap[w] = fresh(lin_gate([(1, wmap[g.j]), (-1, tw)]))
            pmap[w] = (tw, -1)
        else:  # MAX as -min(-x_j, -x_k); the inner min lowers through the window
            u1 = fresh(lin_gate([(-1, wmap[g.j])]))
            u2 = fresh(lin_gate([(-1, wmap[g.k])]))
            d = fresh(lin_gate([(1, u1), (-1, u2)]))
            tw = fresh(truncab_gate(0, window, d))
            v = fresh(lin_gate([(1, u1), (-1, tw)]))
            wmap[w] = fresh(lin_gate([(-1, v)]))
            pmap[w] = (tw, 1)
    out = LinearCircuit(m, gates, wmap[circuit.output_index])
    return PreprocessResult(out, wmap, pmap, b0)


def preprocess_extended(circuit: LinearCircuit) -> LinearCircuit:
    """Rewrite to affine-linear plus interval-truncation gates only."""
    return _preprocess(circuit).circuit


@dataclass
class NormalizationResult:
    output: LinearCircuit      # trunc01-only circuit (all gates kind tl)
    K: Rat                     # 4 * B^N
    B: Rat
    N: int                     # wire count of the preprocessed circuit
    wire_map: dict             # original wire -> encoded wire of the output circuit
    psi_map: dict              # pre truncab wire -> (zbar wire, lo, hi)
    enc_map: dict = field(default_factory=dict)   # pre wire -> encoded wire
    pre: PreprocessResult | None = None
    output_pre_wire: int | None = None            # pre wire of the output gate

    def sidecar_json(self) -> str:
        data = {
            "B": str(self.B),
            "N": self.N,
            "K": f"4*{self.B}^{self.N}",
            "phi": f"x -> 1/2 + x/(4*{self.B})",
            "wire_map": {str(k): v for k, v in sorted(self.wire_map.items())},
            "psi": {
                str(w): {"zbar": zw, "lo": str(lo), "hi": str(hi)}
                for w, (zw, lo, hi) in sorted(self.psi_map.items())
            },
        }
        return json.dumps(data, indent=1)


def lower_to_trunc01(pre_circuit: LinearCircuit, pre: PreprocessResult | None = None) -> NormalizationResult:
    """Encode a preprocessed circuit into trunc01 gates only.

    The output gate must be a [0,1] interval truncation; its result is left
    un-encoded so the normalized circuit computes the same function.
    """
    for g in pre_circuit.gates:
        if g.kind not in (LIN, TRUNCAB):
            raise KktboxError("lower_to_trunc01 expects a preprocessed circuit")
    if not pre_circuit.gates:
        raise KktboxError("cannot lower a gateless circuit (no trunc01 output gate)")
    out_gate = pre_circuit.gate_at_wire(pre_circuit.output_index)
    if pre_circuit.output_index != pre_circuit.wire_count or out_gate.kind != TRUNCAB \
            or out_gate.lo != 0 or out_gate.hi != 1:
        raise KktboxError("output gate is not a unit-interval truncation")

    b = value_bound(pre_circuit).B
    n_pre = pre_circuit.wire_count
    k_const = 4 * b ** n_pre
    m = pre_circuit.input_count
    gates = []

    def fresh(gate):
        gates.append(gate)
        return m + len(gates)

    enc = {}
    psi_map = {}
    half = rat(1, 2)
    inv4b = 1 / (4 * b)
    for i in range(1, m + 1):
        enc[i] = fresh(tl_gate([(inv4b, i)], c=half))
    for t, g in enumerate(pre_circuit.gates):
        w = m + 1 + t
        if g.kind == LIN:
            terms = [(a, enc[src]) for a, src in g.terms]
            csum = sum((a for a, _ in g.terms), ZERO)
            enc[w] = fresh(tl_gate(terms, c=half - csum * half + g.c * inv4b))
        else:
            if w == pre_circuit.output_index:
                # final gate: decode only
                enc[w] = fresh(tl_gate([(4 * b, enc[g.j])], c=-2 * b))
            else:
                span = g.hi - g.lo
                zbar = fresh(tl_gate([(4 * b / span, enc[g.j])], c=(-2 * b - g.lo) / span))
                enc[w] = fresh(tl_gate([(span * inv4b, zbar)], c=half + g.lo * inv4b))
                psi_map[w] = (zbar, g.lo, g.hi)
    out = LinearCircuit(m, gates, enc[pre_circuit.output_index])
    wire_map = dict(enc)
    if pre is not None:
        wire_map = {ow: enc[pw] for ow, pw in pre.wire_map.items()}
    return NormalizationResult(
        output=out, K=k_const, B=b, N=n_pre, wire_map=wire_map, psi_map=psi_map,
        enc_map=enc, pre=pre, output_pre_wire=pre_circuit.output_index,
    )


def normalize_circuit(circuit: LinearCircuit) -> NormalizationResult:
    """Full pipeline: preprocess, bound, lower; intermediates kept."""
    pre = _preprocess(circuit)
    return lower_to_trunc01(pre.circuit, pre)


def transfer_perturbation(circuit: LinearCircuit, norm: NormalizationResult,
                          pi: PerturbationVector) -> PerturbationVector:
    """Perturbation sigma on the original circuit with f^sigma = fbar^pi.

    pi lives on the normalized circuit (every gate there is a trunc01 gate);
    the epsilon bookkeeping of the encoding construction is replayed exactly,
    so sigma depends only on pi, never on the inputs.
    """
    if norm.pre is None:
        raise KktboxError("normalization result lacks preprocess maps; use normalize_circuit")
    pi.check_against(norm.output)
    if pi.max_abs() * norm.K > 1:
        raise KktboxError("perturbation exceeds the 1/K transfer budget")
    pre_circuit = norm.pre.circuit
    b = norm.B
    m = pre_circuit.input_count
    eps = {}
    sigma_pre = {}
    for i in range(1, m + 1):
        eps[i] = 4 * b * pi.get(norm.enc_map[i])
    for t, g in enumerate(pre_circuit.gates):
        w = m + 1 + t
        if g.kind == LIN:
            e = 4 * b * pi.get(norm.enc_map[w])
            for a, src in g.terms:
                e += a * eps[src]
            eps[w] = e
        else:
            if w == norm.output_pre_wire:
                sigma_pre[w] = eps[g.j] + pi.get(norm.enc_map[w])
            else:
                zbar, lo, hi = norm.psi_map[w]
                sigma_pre[w] = eps[g.j] + (hi - lo) * pi.get(zbar)
                eps[w] = 4 * b * pi.get(norm.enc_map[w])
    entries = {}
    for ow, (tw, sign) in norm.pre.pert_map.items():
        v = sign * sigma_pre[tw]
        if v != 0:
            entries[ow] = v
    bound = pi.bound * norm.K
    sigma = PerturbationVector(entries, bound)
    sigma.check_against(circuit)
    return sigma
