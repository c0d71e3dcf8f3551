"""KKT solving and certification for box QPs.

projected_gradient_solve is the inefficient-but-honest descent: fixed step
1/(2*Lambda) with Lambda an exact bound on the gradient's Lipschitz constant,
iterates rounded to a dyadic grid (toward the box center, so feasibility and
exact bound hits are preserved) to stop rational bit-growth.

enumerate_exact_kkt is the 3^n active-set oracle; round_to_exact implements
the approximate-to-exact LP rounding.  Both canonicalize degenerate patterns
by the lexicographically smallest vertex of the pattern's exact-KKT polytope,
which keeps their outputs aligned.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from math import factorial, gcd

from gmpy2 import mpz

from ..errors import DimensionError, KktboxError
from ..qp import BoxQP, KKTVerdict, check_kkt, qp_gradient
from ..rational import ONE, ZERO, Rat, rat
from ..simplex import INFEASIBLE, OPTIMAL, solve_lp


@dataclass
class SolverConfig:
    max_iters: int = 50000
    target_eps: Rat = rat(1, 2**20)
    dyadic_bits: int = 256  # rounding grid 2^-bits for iterates
    check_every: int = 1


@dataclass
class SolveResult:
    point: list
    verdict: KKTVerdict
    converged: bool
    iterations: int


def gradient_lipschitz_bound(qp: BoxQP) -> Rat:
    """Row-sum bound on the Hessian (2*diag coefficient, off-diagonals once)."""
    rows = {}
    for (i, j), c in qp.quad_terms.items():
        if i == j:
            rows[i] = rows.get(i, ZERO) + abs(2 * c)
        else:
            rows[i] = rows.get(i, ZERO) + abs(c)
            rows[j] = rows.get(j, ZERO) + abs(c)
    return max(rows.values()) if rows else ZERO


def _round_toward_center(v, bits):
    """Round to the 2^-bits grid, off-grid values moved toward 1/2."""
    scaled = v * (mpz(1) << bits)
    if scaled.denominator == 1:
        return v
    n, d = scaled.numerator, scaled.denominator
    q = n // d  # floor
    grid = q + 1 if v < rat(1, 2) else q
    return rat(grid, mpz(1) << bits)


def projected_gradient_solve(qp: BoxQP, eps, cfg: SolverConfig | None = None, start=None) -> SolveResult:
    """Fixed-step projected gradient descent to an eps-KKT point."""
    eps = rat(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    cfg = cfg or SolverConfig()
    lam = gradient_lipschitz_bound(qp)
    step = ONE / (2 * lam) if lam > 0 else rat(1, 2)
    n = qp.var_count
    if start is None:
        x = [rat(1, 2)] * n
    else:
        if len(start) != n:
            raise DimensionError("start point dimension mismatch")
        x = [rat(v) for v in start]

    best = None
    it = 0
    while it < cfg.max_iters:
        if it % cfg.check_every == 0:
            verdict = check_kkt(qp, x, eps)
            if verdict.satisfied:
                return SolveResult(x, verdict, True, it)
            if best is None or len(verdict.violations) < len(best[1].violations):
                best = (list(x), verdict)
        grad = qp_gradient(qp, x)
        new = []
        for v, g in zip(x, grad):
            w = v - step * g
            if w < 0:
                w = ZERO
            elif w > 1:
                w = ONE
            else:
                w = _round_toward_center(w, cfg.dyadic_bits)
            new.append(w)
        if new == x:
            # fixed point of the rounded dynamics; re-check and stop
            verdict = check_kkt(qp, x, eps)
            return SolveResult(x, verdict, verdict.satisfied, it)
        x = new
        it += 1
    verdict = check_kkt(qp, x, eps)
    if verdict.satisfied:
        return SolveResult(x, verdict, True, it)
    if best is None or len(verdict.violations) <= len(best[1].violations):
        best = (x, verdict)
    return SolveResult(best[0], best[1], False, it)


# ---------------------------------------------------------------------------
# exact active-set enumeration


def _solve_linear_system(A, b):
    """Gaussian elimination over rationals.

    Returns ("unique", x) | ("underdetermined", None) | ("inconsistent", None).
    """
    m = len(A)
    if m == 0:
        return "unique", []
    A = [row[:] + [b[i]] for i, row in enumerate(A)]
    n = len(A[0]) - 1
    piv_cols = []
    r = 0
    for c in range(n):
        piv = None
        for rr in range(r, m):
            if A[rr][c] != 0:
                piv = rr
                break
        if piv is None:
            continue
        A[r], A[piv] = A[piv], A[r]
        inv = ONE / A[r][c]
        A[r] = [v * inv for v in A[r]]
        for rr in range(m):
            if rr != r and A[rr][c] != 0:
                f = A[rr][c]
                A[rr] = [v - f * w for v, w in zip(A[rr], A[r])]
        piv_cols.append(c)
        r += 1
        if r == m:
            break
    for rr in range(r, m):
        if A[rr][n] != 0:
            return "inconsistent", None
    if len(piv_cols) < n:
        return "underdetermined", None
    x = [ZERO] * n
    for i, c in enumerate(piv_cols):
        x[c] = A[i][n]
    return "unique", x


def _pattern_polytope_rows(qp: BoxQP, pattern):
    """Constraint rows over the free variables for the exact-KKT polytope of
    an active-set pattern (0 = at lower bound, 1 = at upper, None = free).

    Free coordinates get stationarity equalities; fixed coordinates get the
    one-sided gradient sign conditions; box rows bound the free variables.
    Returns (free_idx, A_ub, b_ub, A_eq, b_eq) in the free variables.
    """
    rows = qp.gradient_rows()
    free = [i for i, p in enumerate(pattern) if p is None]
    pos = {i: t for t, i in enumerate(free)}
    A_ub, b_ub, A_eq, b_eq = [], [], [], []

    def grad_row(i):
        coeffs, const = rows[i]
        arow = [ZERO] * len(free)
        rhs_const = const
        for j, cf in coeffs.items():
            jj = j - 1
            if pattern[jj] is None:
                arow[pos[jj]] = cf
            else:
                rhs_const += cf * rat(pattern[jj])
        return arow, rhs_const

    for i, p in enumerate(pattern):
        arow, const = grad_row(i)
        if p is None:
            A_eq.append(arow)
            b_eq.append(-const)
        elif p == 0:
            # dp/dx_i >= 0  ->  -(arow.x) <= const
            A_ub.append([-v for v in arow])
            b_ub.append(const)
        else:
            # dp/dx_i <= 0
            A_ub.append(arow)
            b_ub.append(-const)
    for t in range(len(free)):
        row = [ZERO] * len(free)
        row[t] = ONE
        A_ub.append(row)
        b_ub.append(ONE)
    return free, A_ub, b_ub, A_eq, b_eq


def _lexmin_vertex(free, A_ub, b_ub, A_eq, b_eq):
    """Lexicographically smallest point of the polytope, or None if empty."""
    nf = len(free)
    A_ub = [row[:] for row in A_ub]
    b_ub = list(b_ub)
    A_eq = [row[:] for row in A_eq]
    b_eq = list(b_eq)
    for t in range(nf):
        c = [ZERO] * nf
        c[t] = ONE
        res = solve_lp(c, A_ub, b_ub, A_eq, b_eq)
        if res.status != OPTIMAL:
            return None
        pin = [ZERO] * nf
        pin[t] = ONE
        A_eq.append(pin)
        b_eq.append(res.value)
    # read the pinned values back
    vals = b_eq[-nf:] if nf else []
    return vals


def enumerate_exact_kkt(qp: BoxQP, max_vars: int = 12) -> list:
    """All exact KKT points found by the 3^n active-set pattern sweep.

    Unique-stationarity patterns use a direct linear solve; degenerate
    patterns take the lex-min vertex of the pattern's exact-KKT polytope.
    Every candidate is filtered through the exact KKT check and deduplicated.
    Non-empty for every QP (the global minimum's pattern always survives).
    """
    n = qp.var_count
    if n > max_vars:
        raise KktboxError(f"enumeration needs var_count <= {max_vars} (3^n patterns)")
    rows = qp.gradient_rows()
    found = []
    seen = set()
    for pattern in product((None, 0, 1), repeat=n):
        free = [i for i, p in enumerate(pattern) if p is None]
        pos = {i: t for t, i in enumerate(free)}
        A = []
        b = []
        for i in free:
            coeffs, const = rows[i]
            arow = [ZERO] * len(free)
            rhs = -const
            for j, cf in coeffs.items():
                jj = j - 1
                if pattern[jj] is None:
                    arow[pos[jj]] = cf
                else:
                    rhs -= cf * rat(pattern[jj])
            A.append(arow)
            b.append(rhs)
        kind, sol = _solve_linear_system(A, b)
        if kind == "inconsistent":
            continue
        if kind == "unique":
            x = [rat(p) if p is not None else None for p in pattern]
            ok = True
            for t, i in enumerate(free):
                if not (0 <= sol[t] <= 1):
                    ok = False
                    break
                x[i] = sol[t]
            if not ok:
                continue
        else:
            fr, A_ub, b_ub, A_eq, b_eq = _pattern_polytope_rows(qp, pattern)
            vertex = _lexmin_vertex(fr, A_ub, b_ub, A_eq, b_eq)
            if vertex is None:
                continue
            x = [rat(p) if p is not None else None for p in pattern]
            for t, i in enumerate(fr):
                x[i] = vertex[t]
        if not check_kkt(qp, x, ZERO).satisfied:
            continue
        key = tuple(x)
        if key not in seen:
            seen.add(key)
            found.append(x)
    return found


# ---------------------------------------------------------------------------
# Appendix-style approximate-to-exact rounding


def compute_epsilon_gap(qp: BoxQP) -> Rat:
    """eps such that every active-set LP's optimal value is 0 or > eps.

    Determinant bound: integerize all constraint entries by the lcm of their
    denominators, bound any (n+1)x(n+1) basis determinant by (n+1)! * A^(n+1)
    with A the largest integerized magnitude; any nonzero vertex value of z
    is then at least the reciprocal of that bound.
    """
    n = qp.var_count
    entries = [ONE]
    rows = qp.gradient_rows()
    for coeffs, const in rows:
        entries.extend(coeffs.values())
        entries.append(const)
    lcm = mpz(1)
    for e in entries:
        d = rat(e).denominator
        lcm = lcm * d // mpz(gcd(int(lcm), int(d)))
    a = max(max(abs(rat(e) * lcm) for e in entries), ONE)
    m = n + 1
    bound = rat(factorial(m)) * a**m
    return 1 / (2 * bound)


@dataclass
class RoundingResult:
    exact_point: list
    active_sets: tuple  # (I0, I1) as sorted tuples of 1-based indices
    lp_value: Rat


def _kkt_lp(qp: BoxQP, I0, I1, with_z=True):
    """LP(I0, I1) over (z, x_free) (or its z = 0 cross-section)."""
    n = qp.var_count
    rows = qp.gradient_rows()
    free = [i for i in range(n) if (i + 1) not in I0 and (i + 1) not in I1]
    pos = {i: t for t, i in enumerate(free)}
    off = 1 if with_z else 0
    nv = off + len(free)
    A_ub, b_ub = [], []

    def grad_row(i):
        coeffs, const = rows[i]
        arow = [ZERO] * nv
        rhs_const = const
        for j, cf in coeffs.items():
            jj = j - 1
            if (jj + 1) in I1:
                rhs_const += cf
            elif (jj + 1) in I0:
                pass
            else:
                arow[off + pos[jj]] = cf
        return arow, rhs_const

    for i in range(n):
        arow, const = grad_row(i)
        if (i + 1) not in I0:
            # z >= dp/dx_i  ->  dp/dx_i - z <= 0
            row = list(arow)
            if with_z:
                row[0] -= 1
            A_ub.append(row)
            b_ub.append(-const)
        if (i + 1) not in I1:
            row = [-v for v in arow]
            if with_z:
                row[0] -= 1
            A_ub.append(row)
            b_ub.append(const)
    for t in range(len(free)):
        row = [ZERO] * nv
        row[off + t] = ONE
        A_ub.append(row)
        b_ub.append(ONE)
    return free, nv, A_ub, b_ub


def round_to_exact(qp: BoxQP, approx, eps) -> RoundingResult:
    """Round an eps-KKT point to an exact KKT point via the active-set LP."""
    eps = rat(eps)
    approx = [rat(v) for v in approx]
    if not check_kkt(qp, approx, eps).satisfied:
        raise KktboxError("approx point is not eps-KKT")
    if eps > compute_epsilon_gap(qp):
        raise KktboxError("eps exceeds the certified LP gap")
    I0 = tuple(i + 1 for i, v in enumerate(approx) if v == 0)
    I1 = tuple(i + 1 for i, v in enumerate(approx) if v == 1)
    free, nv, A_ub, b_ub = _kkt_lp(qp, I0, I1, with_z=True)
    c = [ZERO] * nv
    c[0] = ONE
    res = solve_lp(c, A_ub, b_ub)
    if res.status != OPTIMAL:
        raise KktboxError(f"LP(I0,I1) did not solve: {res.status}")
    if res.value != 0:
        raise KktboxError("LP optimum nonzero; eps precondition violated")
    # canonicalize: lex-min vertex of the z = 0 cross-section
    free, nv, A_ub, b_ub = _kkt_lp(qp, I0, I1, with_z=False)
    vertex = _lexmin_vertex(free, A_ub, b_ub, [], [])
    if vertex is None:
        raise KktboxError("empty exact-KKT cross-section despite zero LP optimum")
    x = [ZERO] * qp.var_count
    for i in I1:
        x[i - 1] = ONE
    for t, i in enumerate(free):
        x[i] = vertex[t]
    verdict = check_kkt(qp, x, ZERO)
    if not verdict.satisfied:
        raise KktboxError("rounded point failed the exact KKT check")
    return RoundingResult(x, (I0, I1), ZERO)
