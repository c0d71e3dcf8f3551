"""Dense exact-rational two-phase simplex with Bland's anti-cycling rule.

Solves   min c.x   s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  x >= 0
entirely over gmpy2 rationals.  The LPs in this package are tiny (a handful
of variables), so there is no pricing or sparsity machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

from .rational import ONE, ZERO, rat

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class LPResult:
    status: str
    x: list | None = None
    value: object = None


def _pivot(tab, basis, row, col):
    piv = tab[row][col]
    inv = ONE / piv
    tab[row] = [v * inv for v in tab[row]]
    prow = tab[row]
    for r, line in enumerate(tab):
        if r != row and line[col] != 0:
            f = line[col]
            tab[r] = [a - f * b for a, b in zip(line, prow)]
    basis[row] = col


def _simplex_core(tab, basis, ncols):
    """Minimize the objective encoded in the last tableau row (Bland)."""
    obj = len(tab) - 1
    while True:
        col = -1
        for j in range(ncols):
            if tab[obj][j] < 0:
                col = j
                break
        if col < 0:
            return OPTIMAL
        row = -1
        best = None
        for r in range(obj):
            a = tab[r][col]
            if a > 0:
                ratio = tab[r][-1] / a
                if best is None or ratio < best or (ratio == best and basis[r] < basis[row]):
                    best = ratio
                    row = r
        if row < 0:
            return UNBOUNDED
        _pivot(tab, basis, row, col)


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, n=None) -> LPResult:
    """Exact LP solve in standard nonnegative-variable form."""
    A_ub = [list(map(rat, row)) for row in (A_ub or [])]
    b_ub = [rat(v) for v in (b_ub or [])]
    A_eq = [list(map(rat, row)) for row in (A_eq or [])]
    b_eq = [rat(v) for v in (b_eq or [])]
    c = [rat(v) for v in c]
    if n is None:
        n = len(c)

    rows = []
    # slack layout: one slack per ub row
    n_slack = len(A_ub)
    for i, (arow, b) in enumerate(zip(A_ub, b_ub)):
        row = arow + [ZERO] * n_slack + [b]
        row[n + i] = ONE
        rows.append(row)
    for arow, b in zip(A_eq, b_eq):
        rows.append(arow + [ZERO] * n_slack + [b])

    # normalize rhs >= 0
    for row in rows:
        if row[-1] < 0:
            for j in range(len(row)):
                row[j] = -row[j]

    width = n + n_slack
    # artificials where no natural basic column exists
    basis = [-1] * len(rows)
    for i, row in enumerate(rows):
        for j in range(n, width):
            if row[j] == 1 and all(rows[r][j] == 0 for r in range(len(rows)) if r != i):
                basis[i] = j
                break
    n_art = sum(1 for b in basis if b < 0)
    art_cols = {}
    if n_art:
        k = 0
        for i in range(len(rows)):
            ext = [ZERO] * n_art
            if basis[i] < 0:
                ext[k] = ONE
                art_cols[i] = width + k
                basis[i] = width + k
                k += 1
            rows[i] = rows[i][:-1] + ext + [rows[i][-1]]
    total = width + n_art

    if n_art:
        # phase 1: minimize sum of artificials
        obj = [ZERO] * (total + 1)
        for j in range(width, total):
            obj[j] = ONE
        tab = [list(r) for r in rows] + [obj]
        for i, b in enumerate(basis):
            if b >= width:
                tab[-1] = [a - bb for a, bb in zip(tab[-1], tab[i])]
        _simplex_core(tab, basis, total)  # bounded below by 0, cannot be unbounded
        if tab[-1][-1] != 0:  # objective row holds -(phase-1 value)
            return LPResult(INFEASIBLE)
        # drive remaining artificials out of the basis when possible
        for i, b in enumerate(basis):
            if b >= width:
                for j in range(width):
                    if tab[i][j] != 0:
                        _pivot(tab, basis, i, j)
                        break
        rows = [tab[i][:width] + [tab[i][-1]] for i in range(len(rows))]
    else:
        tab = [list(r) for r in rows]
        rows = tab

    # phase 2
    obj = [*(c + [ZERO] * n_slack), ZERO]
    tab = [list(r) for r in rows] + [obj]
    drop = [i for i, b in enumerate(basis) if b >= width]
    if drop:
        # redundant rows left with artificial basics (all-zero real part)
        keep = [i for i in range(len(basis)) if i not in drop]
        tab = [tab[i] for i in keep] + [tab[-1]]
        basis = [basis[i] for i in keep]
    for i, b in enumerate(basis):
        if tab[-1][b] != 0:
            f = tab[-1][b]
            tab[-1] = [a - f * bb for a, bb in zip(tab[-1], tab[i])]
    status = _simplex_core(tab, basis, width)
    if status != OPTIMAL:
        return LPResult(UNBOUNDED)
    x = [ZERO] * n
    for i, b in enumerate(basis):
        if b < n:
            x[b] = tab[i][-1]
    value = sum((ci * xi for ci, xi in zip(c, x)), ZERO)
    return LPResult(OPTIMAL, x, value)
