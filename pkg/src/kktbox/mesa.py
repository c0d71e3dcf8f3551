"""Mesa functions: piecewise-linear bumps whose grid maximum interpolates a
slowly-varying field.

A mesa at center p with per-piece heights A = (a_c, a_r, a_t, a_l, a_b) and
gradient g is the minimum of five affine pieces: a center piece with gradient
g and four boundary pieces whose slope toward the outside is -Gamma.  With
Gamma large the bump dies within 3/(Gamma) of the ell/2 box, so in a grid
field only the 3x3 neighborhood of a query point can matter.

The sampling half-gradient trick stores g(p) close to grad h(p) / 2 so that
small per-piece height offsets cannot surface a boundary piece with a
reversed gradient sign inside the bump.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .errors import DimensionError, KktboxError
from .rational import ONE, ZERO, Rat, ceil_log2, dyadic_round, format_rat, parse_rat, rat
from .targets import SmoothTarget

PIECES = ("c", "r", "t", "l", "b")


@dataclass(frozen=True)
class MesaEnv:
    ell: Rat
    gamma: Rat

    def __post_init__(self):
        object.__setattr__(self, "ell", rat(self.ell))
        object.__setattr__(self, "gamma", rat(self.gamma))
        if self.ell <= 0 or self.gamma <= 0:
            raise ValueError("need ell > 0 and gamma > 0")

    @staticmethod
    def standard(ell) -> "MesaEnv":
        ell = rat(ell)
        return MesaEnv(ell, 12 / ell)


@dataclass(frozen=True)
class MesaParams:
    p: tuple   # center (p1, p2)
    A: tuple   # (a_c, a_r, a_t, a_l, a_b)
    g: tuple   # gradient (g1, g2)

    @staticmethod
    def uniform(p, a, g) -> "MesaParams":
        a = rat(a)
        return MesaParams((rat(p[0]), rat(p[1])), (a,) * 5, (rat(g[0]), rat(g[1])))


def mesa_pieces(x, m: MesaParams, env: MesaEnv):
    """The five affine piece values at x, in PIECES order."""
    d1 = rat(x[0]) - m.p[0]
    d2 = rat(x[1]) - m.p[1]
    g1, g2 = m.g
    gl2 = env.gamma * env.ell / 2
    core = d1 * g1 + d2 * g2
    return (
        core + m.A[0],
        core - d1 * env.gamma + m.A[1] + gl2,
        core - d2 * env.gamma + m.A[2] + gl2,
        core + d1 * env.gamma + m.A[3] + gl2,
        core + d2 * env.gamma + m.A[4] + gl2,
    )


def piece_gradient(m: MesaParams, env: MesaEnv, piece: int):
    g1, g2 = m.g
    if piece == 0:
        return (g1, g2)
    if piece == 1:
        return (g1 - env.gamma, g2)
    if piece == 2:
        return (g1, g2 - env.gamma)
    if piece == 3:
        return (g1 + env.gamma, g2)
    return (g1, g2 + env.gamma)


def mesa_value(x, m: MesaParams, env: MesaEnv) -> Rat:
    return min(mesa_pieces(x, m, env))


@dataclass(frozen=True)
class GridSpec:
    bits: int

    def __post_init__(self):
        if self.bits < 1:
            raise ValueError("bits must be positive")

    @property
    def ell(self) -> Rat:
        return rat(1, 2**self.bits - 1)

    def axis(self):
        ell = self.ell
        return [k * ell for k in range(2**self.bits)]

    def points(self):
        ax = self.axis()
        return [(u, v) for u in ax for v in ax]

    def nearest(self, x):
        ell = self.ell
        top = 2**self.bits - 1

        def snap(v):
            k = int((rat(v) / ell) + rat(1, 2))
            return min(max(k, 0), top)

        return (snap(x[0]) * ell, snap(x[1]) * ell)


def field_max(x, grid: GridSpec, fields: dict, env: MesaEnv) -> Rat:
    """max_p M(x; p, A^p, g^p) over the grid.

    Full enumeration for bits <= 6; for larger grids only the 3x3
    neighborhood is scanned, justified because with Gamma >= 12/ell every
    mesa is nonpositive beyond 3ell/4 of its center while the max is >= 1/3.
    """
    x = (rat(x[0]), rat(x[1]))
    if grid.bits <= 6 or env.gamma < 12 / env.ell:
        pts = grid.points()
    else:
        ell = grid.ell
        px, py = grid.nearest(x)
        pts = []
        for du in (-1, 0, 1):
            for dv in (-1, 0, 1):
                q = (px + du * ell, py + dv * ell)
                if 0 <= q[0] <= 1 and 0 <= q[1] <= 1:
                    pts.append(q)
    best = None
    for p in pts:
        try:
            A, g = fields[p]
        except KeyError:
            raise KktboxError(f"field table missing grid point {p}")
        v = mesa_value(x, MesaParams(p, tuple(map(rat, A)), tuple(map(rat, g))), env)
        if best is None or v > best:
            best = v
    if best is None:
        raise KktboxError("empty grid")
    return best


def field_argmax_piece(x, grid: GridSpec, fields: dict, env: MesaEnv):
    """(p, piece index, value, strict) of the achieving mesa and piece.

    strict is True when both the argmax mesa and its argmin piece are
    unique -- the differentiability test used by the gradient-bound checks.
    """
    x = (rat(x[0]), rat(x[1]))
    per_mesa = []
    for p, (A, g) in fields.items():
        pieces = mesa_pieces(x, MesaParams(p, tuple(map(rat, A)), tuple(map(rat, g))), env)
        v = min(pieces)
        per_mesa.append((v, p, pieces))
    best = max(v for v, _, _ in per_mesa)
    winners = [(p, pieces) for v, p, pieces in per_mesa if v == best]
    strict = len(winners) == 1
    p, pieces = winners[0]
    arg = min(range(5), key=lambda i: pieces[i])
    strict = strict and sum(1 for v in pieces if v == pieces[arg]) == 1
    return p, arg, best, strict


# ---------------------------------------------------------------------------
# sampling from a smooth target


@dataclass
class SampledField:
    a_table: dict  # grid point -> Rat in [0.45, 0.55]
    g_table: dict  # grid point -> (Rat, Rat)
    g_strict_range: bool = True  # True: [-0.01, 0.01]^2; False: only [-0.02, 0.02]^2

    def as_field(self, tau=None):
        """fields map for field_max; tau optionally shifts piece heights."""
        out = {}
        for p, a in self.a_table.items():
            if tau is None:
                A = (a,) * 5
            else:
                A = tuple(a + tau[(p, d)] for d in PIECES)
            out[p] = (A, self.g_table[p])
        return out


def sample_field_from_target(target: SmoothTarget, grid: GridSpec,
                             a_bits=None, g_bits=None) -> SampledField:
    """Dyadic tables a ~ h and g ~ grad h / 2 on the grid.

    a is rounded to at least ceil(log2(100/ell^2)) fractional bits and clamped
    to [0.45, 0.55]; g to within ell/200 per coordinate, clamped to
    [-0.01, 0.01]^2.  Both paper tolerances are re-verified afterwards.
    """
    target.check_normalization()
    ell = grid.ell
    need_a = ceil_log2(100 / ell**2)
    need_g = ceil_log2(200 / ell)
    a_bits = max(a_bits or 0, need_a)
    g_bits = max(g_bits or 0, need_g)
    a_table = {}
    g_table = {}
    strict = True
    for p in grid.points():
        hv = target.h(p)
        av = dyadic_round(hv, a_bits)
        av = min(max(av, rat(45, 100)), rat(55, 100))
        d1, d2 = target.grad_h(p)
        gv = tuple(min(max(dyadic_round(d / 2, g_bits), rat(-1, 100)), rat(1, 100))
                   for d in (d1, d2))
        if abs(av - hv) > ell**2 / 100:
            raise KktboxError(f"a tolerance failed at {p}")
        if max(abs(2 * gv[0] - d1), abs(2 * gv[1] - d2)) > ell / 100:
            raise KktboxError(f"g tolerance failed at {p}")
        if max(abs(gv[0]), abs(gv[1])) > rat(1, 100):
            strict = False
        a_table[p] = av
        g_table[p] = gv
    return SampledField(a_table, g_table, g_strict_range=strict)


# ---------------------------------------------------------------------------
# adjacency / range checks


@dataclass
class FieldReport:
    passed: bool
    violations: list


def check_field_assumptions(f: SampledField, grid: GridSpec, tau_bound) -> FieldReport:
    """Adjacency and range conditions, worst-cased over per-piece offsets of
    magnitude <= tau_bound:

      1. |g(p) - g(p')|_inf <= ell for adjacent p, p'
      2. |(a(p') + tau_i) - (a(p) + tau_j) - <2 g(p), p' - p>| <= ell^2
      3. a(p) + tau in [0.4, 0.6]
    """
    tau = rat(tau_bound)
    ell = grid.ell
    if tau > ell**2 / 100:
        raise ValueError("tau_bound must be at most ell^2/100")
    violations = []
    pts = grid.points()
    idx = {p: k for k, p in enumerate(pts)}
    for p in pts:
        a_p = f.a_table[p]
        g_p = f.g_table[p]
        if not (rat(40, 100) + tau <= a_p <= rat(60, 100) - tau):
            violations.append(("range", p, a_p))
        for p2 in pts:
            if max(abs(p2[0] - p[0]), abs(p2[1] - p[1])) > ell:
                continue
            g_q = f.g_table[p2]
            if p2 != p and idx[p2] > idx[p]:
                gap = max(abs(g_p[0] - g_q[0]), abs(g_p[1] - g_q[1]))
                if gap > ell:
                    violations.append(("g-jump", p, p2, gap))
            inner = 2 * (g_p[0] * (p2[0] - p[0]) + g_p[1] * (p2[1] - p[1]))
            dev = abs(f.a_table[p2] - a_p - inner)
            if dev > ell**2 - 2 * tau:
                violations.append(("a-consistency", p, p2, dev))
    return FieldReport(passed=not violations, violations=violations)


def mesa_gap_bound(f: SampledField, grid: GridSpec, tau_bound) -> Rat:
    """Worst-case |a_i^p - a_j^p| over pieces at one point: 2 * tau_bound."""
    return 2 * rat(tau_bound)


# ---------------------------------------------------------------------------
# CSV formats


def field_to_csv(f: SampledField) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p1", "p2", "a", "g1", "g2"])
    for p in sorted(f.a_table):
        g = f.g_table[p]
        w.writerow([format_rat(p[0]), format_rat(p[1]), format_rat(f.a_table[p]),
                    format_rat(g[0]), format_rat(g[1])])
    return buf.getvalue()


def field_from_csv(text: str) -> SampledField:
    rd = csv.reader(io.StringIO(text))
    header = next(rd)
    if header != ["p1", "p2", "a", "g1", "g2"]:
        raise KktboxError("bad field CSV header")
    a_table = {}
    g_table = {}
    strict = True
    for row in rd:
        if not row:
            continue
        p = (parse_rat(row[0]), parse_rat(row[1]))
        a_table[p] = parse_rat(row[2])
        g = (parse_rat(row[3]), parse_rat(row[4]))
        g_table[p] = g
        if max(abs(g[0]), abs(g[1])) > rat(1, 100):
            strict = False
    return SampledField(a_table, g_table, g_strict_range=strict)


def heightmap_csv(sample_fn, xs) -> str:
    """x1,x2,value rows for external plotting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x1", "x2", "value"])
    for x in xs:
        w.writerow([format_rat(x[0]), format_rat(x[1]), format_rat(sample_fn(x))])
    return buf.getvalue()
