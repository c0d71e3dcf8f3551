"""Generalized circuit gradient hulls and the 2D circuit KKT checker.

interval-outer mode enumerates feasible gate-status profiles by exact
interval reachability of the pre-truncation values under perturbations in
[-delta, delta]^m, collecting the chain-rule gradient of each profile -- a
certified superset of the delta-generalized circuit gradient.  When more
gates are ambiguous than the branching cap, it falls back to a certified
outer bounding box computed by a forward status pass plus an adjoint
interval pass (mode "interval-outer-box").

sampled-inner mode evaluates exact region gradients at explicit perturbation
vectors and keeps the differentiable ones, each with its witness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..circuit import (
    LIN,
    MAX,
    MIN,
    TL,
    TRUNCAB,
    LinearCircuit,
    PerturbationVector,
    evaluate_perturbed,
    gate_pre_value,
    region_gradient,
)
from ..errors import DimensionError, KktboxError
from ..rational import ONE, ZERO, Rat, rat
from ..simplex import OPTIMAL, solve_lp


class TooManyBranches(KktboxError):
    pass


@dataclass
class GradientHull:
    vertices: list            # gradient tuples
    mode: str                 # "sampled-inner" | "interval-outer" | "interval-outer-box"
    witnesses: list = field(default_factory=list)  # per-vertex PerturbationVector (inner)


# ---------------------------------------------------------------------------
# profile enumeration (outer, exact branching)


def _profile_gradient(circuit, statuses):
    m = circuit.input_count
    adjoint = [ZERO] * circuit.wire_count
    adjoint[circuit.output_index - 1] = ONE
    for t in range(len(circuit.gates) - 1, -1, -1):
        g = circuit.gates[t]
        ad = adjoint[m + t]
        if ad == 0:
            continue
        st = statuses[t]
        if g.kind == LIN or (g.kind == TL and st == "interior"):
            for a, w in g.terms:
                adjoint[w - 1] += ad * a
        elif g.kind == TRUNCAB and st == "interior":
            adjoint[g.j - 1] += ad
        elif g.kind in (MIN, MAX):
            adjoint[(g.j if st == "left" else g.k) - 1] += ad
    return tuple(adjoint[:m])


def _outer_profiles(circuit: LinearCircuit, y, delta, max_ambiguous, max_work=200000):
    m = circuit.input_count
    delta = rat(delta)
    gradients = []
    seen = set()
    ambiguous_budget = [max_ambiguous]
    work = [max_work]

    lo0 = [rat(v) for v in y]
    hi0 = [rat(v) for v in y]

    def rec(t, lo, hi, statuses):
        work[0] -= 1
        if work[0] < 0:
            raise TooManyBranches("branch expansion budget exhausted")
        if t == len(circuit.gates):
            grad = _profile_gradient(circuit, statuses)
            if grad not in seen:
                seen.add(grad)
                gradients.append(grad)
            return
        g = circuit.gates[t]
        options = []  # (status, out_lo, out_hi)
        if g.kind == LIN:
            plo = g.c
            phi = g.c
            for a, w in g.terms:
                if a >= 0:
                    plo += a * lo[w - 1]
                    phi += a * hi[w - 1]
                else:
                    plo += a * hi[w - 1]
                    phi += a * lo[w - 1]
            options.append((None, plo, phi))
        elif g.kind in (TL, TRUNCAB):
            if g.kind == TL:
                plo = g.c - delta
                phi = g.c + delta
                for a, w in g.terms:
                    if a >= 0:
                        plo += a * lo[w - 1]
                        phi += a * hi[w - 1]
                    else:
                        plo += a * hi[w - 1]
                        phi += a * lo[w - 1]
                glo, ghi = ZERO, ONE
            else:
                plo, phi = lo[g.j - 1] - delta, hi[g.j - 1] + delta
                glo, ghi = g.lo, g.hi
            if plo <= glo:
                options.append(("low", glo, glo))
            if phi >= ghi:
                options.append(("high", ghi, ghi))
            ilo, ihi = max(plo, glo), min(phi, ghi)
            if ilo <= ihi:
                options.append(("interior", ilo, ihi))
        else:
            ulo, uhi = lo[g.j - 1], hi[g.j - 1]
            vlo, vhi = lo[g.k - 1] - delta, hi[g.k - 1] + delta
            if g.kind == MIN:
                if ulo <= vhi:
                    options.append(("left", ulo, min(uhi, vhi)))
                if vlo <= uhi:
                    options.append(("right", vlo, min(vhi, uhi)))
            else:
                if uhi >= vlo:
                    options.append(("left", max(ulo, vlo), uhi))
                if vhi >= ulo:
                    options.append(("right", max(vlo, ulo), vhi))
        if len(options) > 1:
            if ambiguous_budget[0] <= 0:
                raise TooManyBranches("too many status-ambiguous gates")
            ambiguous_budget[0] -= 1
        for st, olo, ohi in options:
            lo.append(olo)
            hi.append(ohi)
            statuses.append(st)
            rec(t + 1, lo, hi, statuses)
            lo.pop()
            hi.pop()
            statuses.pop()
        if len(options) > 1:
            ambiguous_budget[0] += 1

    rec(0, lo0, hi0, [])
    return gradients


# ---------------------------------------------------------------------------
# adjoint box fallback (outer, no branching)


def _outer_box(circuit: LinearCircuit, y, delta):
    m = circuit.input_count
    delta = rat(delta)
    lo = [rat(v) for v in y]
    hi = [rat(v) for v in y]
    status_sets = []
    for g in circuit.gates:
        if g.kind == LIN:
            plo = g.c
            phi = g.c
            for a, w in g.terms:
                if a >= 0:
                    plo += a * lo[w - 1]
                    phi += a * hi[w - 1]
                else:
                    plo += a * hi[w - 1]
                    phi += a * lo[w - 1]
            status_sets.append((None,))
            lo.append(plo)
            hi.append(phi)
            continue
        if g.kind in (TL, TRUNCAB):
            if g.kind == TL:
                plo = g.c - delta
                phi = g.c + delta
                for a, w in g.terms:
                    if a >= 0:
                        plo += a * lo[w - 1]
                        phi += a * hi[w - 1]
                    else:
                        plo += a * hi[w - 1]
                        phi += a * lo[w - 1]
                glo, ghi = ZERO, ONE
            else:
                plo, phi = lo[g.j - 1] - delta, hi[g.j - 1] + delta
                glo, ghi = g.lo, g.hi
            sts = []
            if plo <= glo:
                sts.append("low")
            if phi >= ghi:
                sts.append("high")
            if max(plo, glo) <= min(phi, ghi):
                sts.append("interior")
            status_sets.append(tuple(sts))
            # the union over statuses is the clamp of the pre-interval
            lo.append(min(max(plo, glo), ghi))
            hi.append(max(min(phi, ghi), glo))
        else:
            ulo, uhi = lo[g.j - 1], hi[g.j - 1]
            vlo, vhi = lo[g.k - 1] - delta, hi[g.k - 1] + delta
            sts = []
            if g.kind == MIN:
                if ulo <= vhi:
                    sts.append("left")
                if vlo <= uhi:
                    sts.append("right")
                lo.append(min(ulo, vlo))
                hi.append(min(uhi, vhi))
            else:
                if uhi >= vlo:
                    sts.append("left")
                if vhi >= ulo:
                    sts.append("right")
                lo.append(max(ulo, vlo))
                hi.append(max(uhi, vhi))
            status_sets.append(tuple(sts))

    # adjoint interval pass
    alo = [ZERO] * circuit.wire_count
    ahi = [ZERO] * circuit.wire_count
    alo[circuit.output_index - 1] = ONE
    ahi[circuit.output_index - 1] = ONE

    def acc(widx, clo, chi, glo, ghi):
        # adjoint_w += coeff_interval * gate_adjoint_interval
        cands = (clo * glo, clo * ghi, chi * glo, chi * ghi)
        alo[widx - 1] += min(cands)
        ahi[widx - 1] += max(cands)

    for t in range(len(circuit.gates) - 1, -1, -1):
        g = circuit.gates[t]
        glo, ghi = alo[m + t], ahi[m + t]
        if glo == 0 and ghi == 0:
            continue
        sts = status_sets[t]
        if g.kind == LIN:
            for a, w in g.terms:
                acc(w, a, a, glo, ghi)
        elif g.kind in (TL, TRUNCAB):
            pass_lo = ONE if sts == ("interior",) else ZERO
            pass_hi = ONE if "interior" in sts else ZERO
            if g.kind == TL:
                for a, w in g.terms:
                    acc(w, min(pass_lo * a, pass_hi * a), max(pass_lo * a, pass_hi * a), glo, ghi)
            else:
                acc(g.j, pass_lo, pass_hi, glo, ghi)
        else:
            left_lo = ONE if sts == ("left",) else ZERO
            left_hi = ONE if "left" in sts else ZERO
            right_lo = ONE if sts == ("right",) else ZERO
            right_hi = ONE if "right" in sts else ZERO
            acc(g.j, left_lo, left_hi, glo, ghi)
            acc(g.k, right_lo, right_hi, glo, ghi)
    return [(alo[i], ahi[i]) for i in range(m)]


def _box_corners(box):
    corners = [()]
    for lo, hi in box:
        if lo == hi:
            corners = [c + (lo,) for c in corners]
        else:
            corners = [c + (lo,) for c in corners] + [c + (hi,) for c in corners]
    return corners


# ---------------------------------------------------------------------------
# heuristic perturbation vectors (inner)


def _heuristic_pis(circuit: LinearCircuit, y, delta):
    delta = rat(delta)
    wires = circuit.perturbable_wires()
    vecs = [PerturbationVector({}, delta)]
    if delta > 0 and wires:
        vecs.append(PerturbationVector({w: delta for w in wires}, delta))
        vecs.append(PerturbationVector({w: -delta for w in wires}, delta))
        for w in wires:
            vecs.append(PerturbationVector({w: delta}, delta))
            vecs.append(PerturbationVector({w: -delta}, delta))
        # push each gate away from its nearest breakpoint (the certificate
        # construction's shape): sign chosen from the unperturbed pre-value
        trace = evaluate_perturbed(circuit, PerturbationVector.zero(), y)
        entries = {}
        m = circuit.input_count
        for t, g in enumerate(circuit.gates):
            w = m + 1 + t
            if g.kind == TL:
                s = gate_pre_value(g, trace.wire_values, ZERO)
                if abs(s - 1) <= abs(s):
                    entries[w] = -delta
                else:
                    entries[w] = delta
        if entries:
            vecs.append(PerturbationVector(entries, delta))
            vecs.append(PerturbationVector({w: -v for w, v in entries.items()}, delta))
    return vecs


def circuit_gradient_hull(circuit: LinearCircuit, y, delta, mode="interval-outer",
                          pis=None, max_ambiguous=14) -> GradientHull:
    """Inner or outer approximation of the delta-generalized circuit gradient."""
    y = [rat(v) for v in y]
    if len(y) != circuit.input_count:
        raise DimensionError("point dimension mismatch")
    delta = rat(delta)
    if mode == "sampled-inner":
        vecs = list(pis) if pis is not None else []
        if pis is None:
            vecs = _heuristic_pis(circuit, y, delta)
        vertices = []
        witnesses = []
        seen = set()
        for pv in vecs:
            if pv.max_abs() > delta:
                raise ValueError("witness perturbation exceeds delta")
            rg = region_gradient(circuit, pv, y)
            if rg.differentiable and rg.gradient not in seen:
                seen.add(rg.gradient)
                vertices.append(rg.gradient)
                witnesses.append(pv)
        return GradientHull(vertices, "sampled-inner", witnesses)
    if mode == "interval-outer":
        try:
            vertices = _outer_profiles(circuit, y, delta, max_ambiguous)
            return GradientHull(vertices, "interval-outer")
        except TooManyBranches:
            box = _outer_box(circuit, y, delta)
            return GradientHull(_box_corners(box), "interval-outer-box")
    raise ValueError(f"unknown hull mode {mode!r}")


# ---------------------------------------------------------------------------
# 2D circuit KKT verdicts


@dataclass
class KKT2DVerdict:
    status: str  # "yes-witnessed" | "no-certified" | "inconclusive"
    witness: tuple | None = None          # a point of the hull meeting the conditions
    all_outer_violate: bool = False       # every outer vertex violates some condition
    inner: GradientHull | None = None
    outer: GradientHull | None = None


def _condition_bounds(y, eps):
    """Per-coordinate admissible interval for u: (lb, ub), None = unbounded."""
    out = []
    for v in y:
        ub = eps if v > 0 else None
        lb = -eps if v < 1 else None
        out.append((lb, ub))
    return out


def _u_in_conditions(u, bounds):
    for ui, (lb, ub) in zip(u, bounds):
        if ub is not None and ui > ub:
            return False
        if lb is not None and ui < lb:
            return False
    return True


def _hull_meets_rectangle(vertices, bounds):
    """Exact feasibility of conv(vertices) intersected with the rectangle."""
    if not vertices:
        return None
    k = len(vertices)
    A_ub, b_ub = [], []
    for i, (lb, ub) in enumerate(bounds):
        if ub is not None:
            A_ub.append([v[i] for v in vertices])
            b_ub.append(ub)
        if lb is not None:
            A_ub.append([-v[i] for v in vertices])
            b_ub.append(-lb)
    res = solve_lp([ZERO] * k, A_ub, b_ub, A_eq=[[ONE] * k], b_eq=[ONE])
    if res.status != OPTIMAL:
        return None
    lam = res.x
    u = tuple(sum((lam[t] * v[i] for t, v in enumerate(vertices)), ZERO)
              for i in range(len(bounds)))
    return u


def check_2dlinear_kkt(circuit: LinearCircuit, y, eps, delta,
                       pis=None, max_ambiguous=14) -> KKT2DVerdict:
    """Three-valued eps-KKT verdict wrt the delta-generalized circuit gradient.

    yes-witnessed: some convex combination of sampled-inner vertices meets the
    per-coordinate conditions.  no-certified: the interval-outer hull misses
    them entirely.  Otherwise inconclusive (exact verification is not known
    to be tractable in general).
    """
    y = [rat(v) for v in y]
    if len(y) != circuit.input_count:
        raise DimensionError("point dimension mismatch")
    eps = rat(eps)
    bounds = _condition_bounds(y, eps)
    outer = circuit_gradient_hull(circuit, y, delta, "interval-outer",
                                  max_ambiguous=max_ambiguous)
    all_violate = bool(outer.vertices) and all(
        not _u_in_conditions(v, bounds) for v in outer.vertices
    )
    hit = _hull_meets_rectangle(outer.vertices, bounds)
    if hit is None:
        return KKT2DVerdict("no-certified", all_outer_violate=all_violate, outer=outer)
    inner = circuit_gradient_hull(circuit, y, delta, "sampled-inner", pis=pis)
    witness = _hull_meets_rectangle(inner.vertices, bounds)
    if witness is not None:
        return KKT2DVerdict("yes-witnessed", witness=witness, inner=inner, outer=outer)
    return KKT2DVerdict("inconclusive", all_outer_violate=all_violate,
                        inner=inner, outer=outer)
