"""End-to-end robust mesa-field circuits.

The construction works on the rescaled grid Gt = {0, 1/2^n, ..., (2^n-1)/2^n}^2
(side 1/2^n, boundary slope scaled by 2^n/(2^n-1)), where grid points have
exact n-bit binary encodings; the circuit input is rescaled by 1 - 1/2^n
first.  Grid points split into four parity sub-grids.  Per sub-grid, k = 12
staggered bit extractions decode the nearby grid point; each decode drives
the five mesa pieces (clamped at 1), pieces are averaged across the k
decodes first and the five-way minimum is taken after, so at most two failed
decodes per coordinate are value-dominated and every surviving piece keeps
an exact gradient.  The field is the four-way maximum of the sub-grid
components behind a final trunc01 output gate.

Admissible perturbations (sup norm at most L^2/2, L = 1/(24 k 2^n)) move each
piece by at most 7 max|pi| inside a component and 11 max|pi| end to end.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..circuit import LinearCircuit
from ..errors import KktboxError
from ..mesa import GridSpec, MesaEnv, MesaParams, mesa_value
from ..rational import ONE, ZERO, Rat, format_rat, rat
from .boolcirc import BooleanCircuit, restrict_boolean, table_circuit
from .builder import (
    BinaryVar,
    CircuitBuilder,
    build_cont_times_bin,
    build_decode,
    build_extract_bits,
    lower_boolean,
)

K_SAMPLES = 12

# parity offsets of the four sub-grids, in units of 1/2^n
SUBGRID_OFFSETS = ((0, 0), (0, 1), (1, 0), (1, 1))


def _mesa_pieces_from_vars(b, x, p_vars, a_var, g_vars, env: MesaEnv):
    """Five piece wires; the boundary slope and anchor shifts are exact
    affine constants, so each piece's perturbation offset comes only from
    its two multiplies (x-independent, magnitude <= 2 max|pi|)."""
    x1, x2 = x
    gl2 = env.gamma * env.ell / 2
    p1d = build_decode(b, p_vars[0])
    p2d = build_decode(b, p_vars[1])
    ad = build_decode(b, a_var)
    u1 = b.lin([(1, x1), (-1, p1d)])
    u2 = b.lin([(1, x2), (-1, p2d)])
    c1 = build_cont_times_bin(b, u1, g_vars[0])
    c2 = build_cont_times_bin(b, u2, g_vars[1])
    core = [(ONE, c1), (ONE, c2), (ONE, ad)]
    gam = env.gamma
    p_c = b.lin(list(core))
    p_r = b.lin(core + [(gam, p1d), (-gam, x1)], c=gl2)
    p_t = b.lin(core + [(gam, p2d), (-gam, x2)], c=gl2)
    p_l = b.lin(core + [(-gam, p1d), (gam, x1)], c=gl2)
    p_b = b.lin(core + [(-gam, p2d), (gam, x2)], c=gl2)
    return p_c, p_r, p_t, p_l, p_b


def _split_outputs(outs, widths):
    res = []
    at = 0
    for w in widths:
        res.append(tuple(outs[at:at + w]))
        at += w
    return res


def _lowered_lookup(b, bc, wires, desc):
    outs = lower_boolean(b, bc, wires) if bc.n_inputs <= len(wires) else []
    it = iter(outs)
    res = []
    for kind, v in desc:
        res.append(b.const(v) if kind == "const" else next(it))
    return res


def build_mesa_pieces(b: CircuitBuilder, x, y_vars, a_circ: BooleanCircuit,
                      g_circ: BooleanCircuit, env: MesaEnv):
    """Five mesa pieces for the grid point encoded by y, with table lookups."""
    bits = list(y_vars[0].plus_wires) + list(y_vars[1].plus_wires)
    if a_circ.n_inputs != len(bits) or g_circ.n_inputs != len(bits):
        raise KktboxError("lookup circuit arity does not match the point encoding")
    a_bits = lower_boolean(b, a_circ, bits)
    g_bits = lower_boolean(b, g_circ, bits)
    if len(g_bits) % 4:
        raise KktboxError("g lookup output width must be 4 * gw")
    gw = len(g_bits) // 4
    zero = b.const(0)
    a_var = BinaryVar(len(a_bits), tuple(a_bits), (zero,) * len(a_bits), 0)
    banks = _split_outputs(g_bits, [gw] * 4)
    g1 = BinaryVar(gw, banks[0], banks[1], 0)
    g2 = BinaryVar(gw, banks[2], banks[3], 0)
    return _mesa_pieces_from_vars(b, x, y_vars, a_var, (g1, g2), env)


def extraction_offsets(n: int, k: int = K_SAMPLES):
    """t_j = (9/8 - j/(8k)) / 2^n for j = 1..k."""
    return [(rat(9, 8) - rat(j, 8 * k)) / 2**n for j in range(1, k + 1)]


def extraction_l(n: int, k: int = K_SAMPLES) -> Rat:
    return rat(1, 24 * k * 2**n)


def bad_regions(n: int, k: int = K_SAMPLES):
    """Per-sample bad intervals, modulo the 1/2^(n-1) lattice: the window
    where a staggered extraction can truncate fractionally under admissible
    perturbations (half-width L/2 below, 3L/2 above)."""
    L = extraction_l(n, k)
    return [(-t - L / 2, -t + 3 * L / 2) for t in extraction_offsets(n, k)]


def check_bad_region_disjointness(n: int, k: int = K_SAMPLES) -> bool:
    """Exact symbolic check that the k staggered bad regions are pairwise
    disjoint and fit inside one lattice period."""
    regions = sorted(bad_regions(n, k))
    for (alo, ahi), (blo, bhi) in zip(regions, regions[1:]):
        if ahi >= blo:
            return False
    span = regions[-1][1] - regions[0][0]
    return span < rat(1, 2 ** (n - 1)) if n > 1 else span < 1


def build_subgrid_component(b: CircuitBuilder, i: int, x, a_circ: BooleanCircuit,
                            g_circ: BooleanCircuit, grid: GridSpec, env_t: MesaEnv,
                            k: int = K_SAMPLES):
    """Component g_i: averaged-then-minimized mesa over sub-grid S_i.

    x must already live in the rescaled domain.  The parity offsets are
    subtracted from the extraction input (adding them, as the construction
    is usually written, overflows the (n-1)-bit decode at the boundary row)
    and restored on the decoded point, whose n-bit encoding is the n-1
    extracted bits with the constant parity bit appended.
    """
    if not 1 <= i <= 4:
        raise KktboxError("sub-grid index must be 1..4")
    n = grid.bits
    if env_t.ell != rat(1, 2**n):
        raise KktboxError("component builder expects the rescaled mesa side 1/2^n")
    alpha = SUBGRID_OFFSETS[i - 1]
    L = extraction_l(n, k)
    if not check_bad_region_disjointness(n, k):
        raise KktboxError("staggered bad regions overlap")
    if n >= 2:
        fixed = {n: alpha[0], 2 * n: alpha[1]}
        ra, _, desc_a = restrict_boolean(a_circ, fixed)
        rg, _, desc_g = restrict_boolean(g_circ, fixed)
    zero = b.const(0)
    one = b.const(1)
    clamped = [[] for _ in range(5)]
    for t_j in extraction_offsets(n, k):
        p_vars = []
        ext_bits = []
        for l in (0, 1):
            win = b.lin([(1, x[l])], c=t_j - rat(alpha[l], 2**n))
            yv = build_extract_bits(b, win, n - 1, L)
            ext_bits.extend(yv.plus_wires)
            p_vars.append(BinaryVar(
                n, tuple(yv.plus_wires) + (b.const(alpha[l]),), (zero,) * n, 0))
        if n >= 2:
            a_bits = _lowered_lookup(b, ra, ext_bits, desc_a)
            g_bits = _lowered_lookup(b, rg, ext_bits, desc_g)
        else:
            a_bits = [b.const(v) for v in a_circ.interpret(alpha)]
            g_bits = [b.const(v) for v in g_circ.interpret(alpha)]
        gw = len(g_bits) // 4
        a_var = BinaryVar(len(a_bits), tuple(a_bits), (zero,) * len(a_bits), 0)
        banks = _split_outputs(g_bits, [gw] * 4)
        g1 = BinaryVar(gw, banks[0], banks[1], 0)
        g2 = BinaryVar(gw, banks[2], banks[3], 0)
        pieces = _mesa_pieces_from_vars(b, x, p_vars, a_var, (g1, g2), env_t)
        for d, pw in enumerate(pieces):
            clamped[d].append(b.minw(one, pw))
    averaged = [b.lin([(rat(1, k), w) for w in bank]) for bank in clamped]
    # min(p_c, min(p_r, min(p_t, min(p_l, p_b)))), perturbations on the inner side
    inner = b.minw(averaged[3], averaged[4])
    inner = b.minw(averaged[2], inner)
    inner = b.minw(averaged[1], inner)
    return b.minw(averaged[0], inner)


def _decode_bits(bits, frac_weight_start=1):
    v = ZERO
    for i, bit in enumerate(bits, start=frac_weight_start):
        if bit:
            v += rat(1, 2**i)
    return v


def decode_tables(a_circ: BooleanCircuit, g_circ: BooleanCircuit, n: int):
    """Interpret the lookup circuits on every grid index: tables on Gt."""
    a_table = {}
    g_table = {}
    gw = len(g_circ.outputs) // 4
    for m1 in range(2**n):
        for m2 in range(2**n):
            bits = [(m1 >> (n - 1 - i)) & 1 for i in range(n)] + \
                   [(m2 >> (n - 1 - i)) & 1 for i in range(n)]
            p = (rat(m1, 2**n), rat(m2, 2**n))
            a_table[p] = _decode_bits(a_circ.interpret(bits))
            gb = g_circ.interpret(bits)
            g1 = _decode_bits(gb[:gw]) - _decode_bits(gb[gw:2 * gw])
            g2 = _decode_bits(gb[2 * gw:3 * gw]) - _decode_bits(gb[3 * gw:])
            g_table[p] = (g1, g2)
    return a_table, g_table


@dataclass
class MesaCircuit:
    circuit: LinearCircuit
    delta: Rat
    delta_prime: Rat
    grid: GridSpec
    env: MesaEnv          # unrescaled (side 1/(2^n - 1))
    env_rescaled: MesaEnv
    k: int
    L: Rat
    a_circ: BooleanCircuit
    g_circ: BooleanCircuit
    a_table: dict = field(repr=False, default_factory=dict)  # on Gt
    g_table: dict = field(repr=False, default_factory=dict)
    g_strict_range: bool = True

    def rescale(self, x):
        s = 1 - rat(1, 2**self.grid.bits)
        return (rat(x[0]) * s, rat(x[1]) * s)

    def tilde_points(self):
        n = self.grid.bits
        return [(rat(m1, 2**n), rat(m2, 2**n)) for m1 in range(2**n) for m2 in range(2**n)]

    def direct_field_value(self, x_tilde, shift=ZERO) -> Rat:
        """max over Gt mesas with every piece height shifted by `shift`."""
        best = None
        for p in self.tilde_points():
            a = self.a_table[p] + shift
            m = MesaParams(p, (a,) * 5, self.g_table[p])
            v = mesa_value(x_tilde, m, self.env_rescaled)
            if best is None or v > best:
                best = v
        return best

    def manifest_json(self) -> str:
        return json.dumps({
            "n": self.grid.bits,
            "ell": format_rat(self.env.ell),
            "gamma": format_rat(self.env.gamma),
            "ell_rescaled": format_rat(self.env_rescaled.ell),
            "gamma_rescaled": format_rat(self.env_rescaled.gamma),
            "k": self.k,
            "L": format_rat(self.L),
            "delta": format_rat(self.delta),
            "delta_prime": format_rat(self.delta_prime),
            "gates": len(self.circuit.gates),
            "g_strict_range": self.g_strict_range,
        }, indent=1)


def build_mesa_field(a_circ: BooleanCircuit, g_circ: BooleanCircuit, n: int,
                     env: MesaEnv, delta_prime, k: int = K_SAMPLES) -> MesaCircuit:
    """The full robust field circuit with a trunc01 output gate.

    delta = min(delta'/11, L^2/2) guarantees: for every perturbation of sup
    norm <= delta there are per-piece offsets tau with |tau| <= delta' such
    that the circuit equals the shifted mesa field pointwise on the rescaled
    domain.
    """
    delta_prime = rat(delta_prime)
    if delta_prime <= 0:
        raise KktboxError("delta' must be positive")
    grid = GridSpec(n)
    if env.ell != grid.ell:
        raise KktboxError("env side length must be 1/(2^n - 1)")
    if env.gamma < 12 / env.ell:
        raise KktboxError("boundary slope must be at least 12/ell")
    a_table, g_table = decode_tables(a_circ, g_circ, n)
    strict = True
    for p, a in a_table.items():
        if not rat(45, 100) <= a <= rat(55, 100):
            raise KktboxError(f"a table value {a} at {p} outside [0.45, 0.55]")
        g = g_table[p]
        if max(abs(g[0]), abs(g[1])) > rat(2, 100):
            raise KktboxError(f"g table value at {p} outside [-0.02, 0.02]^2")
        if max(abs(g[0]), abs(g[1])) > rat(1, 100):
            strict = False

    env_t = MesaEnv(rat(1, 2**n), env.gamma * rat(2**n, 2**n - 1))
    b = CircuitBuilder(2)
    s = 1 - rat(1, 2**n)
    xt = (b.lin([(s, 1)]), b.lin([(s, 2)]))
    comps = [build_subgrid_component(b, i, xt, a_circ, g_circ, grid, env_t, k)
             for i in (1, 2, 3, 4)]
    inner = b.maxw(comps[2], comps[3])
    mid = b.maxw(comps[1], inner)
    top = b.maxw(comps[0], mid)
    out = b.tl([(1, top)])
    L = extraction_l(n, k)
    delta = min(delta_prime / 11, L * L / 2)
    return MesaCircuit(
        circuit=b.finalize(out), delta=delta, delta_prime=delta_prime, grid=grid,
        env=env, env_rescaled=env_t, k=k, L=L, a_circ=a_circ, g_circ=g_circ,
        a_table=a_table, g_table=g_table, g_strict_range=strict,
    )


# ---------------------------------------------------------------------------
# table circuits from sampled fields


def _dyadic_bits(value, bits):
    scaled = rat(value) * 2**bits
    if scaled.denominator != 1:
        raise KktboxError("table value is not dyadic at this width")
    v = int(scaled)
    return [(v >> (bits - 1 - i)) & 1 for i in range(bits)]


def table_circuits(sampled, grid: GridSpec):
    """Boolean lookup circuits for a SampledField, indexed by grid integers.

    Index m on axis k corresponds to the unrescaled point m * ell and the
    rescaled point m / 2^n.  a outputs aw fraction bits; g outputs four
    gw-bit banks (plus/minus per coordinate).
    """
    n = grid.bits
    ell = grid.ell
    aw = 1
    gw = 1
    for p, a in sampled.a_table.items():
        aw = max(aw, int(a.denominator).bit_length() - 1)
        g = sampled.g_table[p]
        for c in g:
            gw = max(gw, int(c.denominator).bit_length() - 1)
    a_rows = []
    g_rows = []
    for m1 in range(2**n):
        for m2 in range(2**n):
            p = (m1 * ell, m2 * ell)
            a_rows_bits = _dyadic_bits(sampled.a_table[p], aw)
            g = sampled.g_table[p]
            row = []
            for c in g:
                row.extend(_dyadic_bits(max(c, ZERO), gw))
                row.extend(_dyadic_bits(max(-c, ZERO), gw))
            a_rows.append(tuple(a_rows_bits))
            g_rows.append(tuple(row))
    # input integer is (m1 << n) | m2, MSB-first bits
    return table_circuit(2 * n, a_rows), table_circuit(2 * n, g_rows)


def flat_tables(grid: GridSpec, a=rat(1, 2)):
    """Constant field tables (a everywhere, zero gradients)."""
    from ..mesa import SampledField

    pts = grid.points()
    return SampledField({p: rat(a) for p in pts}, {p: (ZERO, ZERO) for p in pts})
