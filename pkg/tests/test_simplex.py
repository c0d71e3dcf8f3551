import random
from fractions import Fraction
from itertools import product

from gmpy2 import mpq

from kktbox.simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, solve_lp


def test_basic_min():
    # min -x - y st x + y <= 1, x,y >= 0  -> value -1 on the segment
    r = solve_lp([-1, -1], A_ub=[[1, 1]], b_ub=[1])
    assert r.status == OPTIMAL
    assert r.value == -1
    assert sum(r.x) == 1


def test_equality_and_bounds():
    # min x1 st x1 + x2 = 1, x1 <= 3/4 -> 1/4 at x2 = 3/4? no: min x1 -> x1 = 0
    r = solve_lp([1, 0], A_eq=[[1, 1]], b_eq=[1], A_ub=[[0, 1]], b_ub=[mpq(3, 4)])
    assert r.status == OPTIMAL
    assert r.value == mpq(1, 4)
    assert r.x == [mpq(1, 4), mpq(3, 4)]


def test_infeasible():
    r = solve_lp([1], A_ub=[[1], [-1]], b_ub=[1, -2])  # x <= 1 and x >= 2
    assert r.status == INFEASIBLE


def test_unbounded():
    r = solve_lp([-1], A_ub=[[0]], b_ub=[1])
    assert r.status == UNBOUNDED


def test_degenerate_cycling_guard():
    # classic Beale-style degeneracy; Bland must terminate
    c = [mpq(-3, 4), 150, mpq(-1, 50), 6]
    A = [
        [mpq(1, 4), -60, mpq(-1, 25), 9],
        [mpq(1, 2), -90, mpq(-1, 50), 3],
        [0, 0, 1, 0],
    ]
    b = [0, 0, 1]
    r = solve_lp(c, A_ub=A, b_ub=b)
    assert r.status == OPTIMAL
    assert r.value == mpq(-1, 20)


def _brute_force_box_lp(c, A_ub, b_ub):
    """Vertex enumeration oracle over 2-var LPs with box in the rows."""
    best = None
    rows = [(row, b) for row, b in zip(A_ub, b_ub)]
    rows += [([-1, 0], Fraction(0)), ([0, -1], Fraction(0))]
    n = 2
    for r1 in range(len(rows)):
        for r2 in range(r1 + 1, len(rows)):
            (a1, b1), (a2, b2) = rows[r1], rows[r2]
            det = a1[0] * a2[1] - a1[1] * a2[0]
            if det == 0:
                continue
            x = Fraction(b1 * a2[1] - a1[1] * b2, 1) / det
            y = Fraction(a1[0] * b2 - b1 * a2[0], 1) / det
            if x < 0 or y < 0:
                continue
            if all(ar[0] * x + ar[1] * y <= br + 0 for ar, br in rows):
                v = c[0] * x + c[1] * y
                if best is None or v < best:
                    best = v
    return best


def test_random_2d_against_vertex_enumeration():
    rng = random.Random(101)
    solved = 0
    while solved < 60:
        c = [Fraction(rng.randint(-4, 4)), Fraction(rng.randint(-4, 4))]
        A = [[Fraction(rng.randint(-3, 3)), Fraction(rng.randint(-3, 3))] for _ in range(4)]
        b = [Fraction(rng.randint(0, 5)) for _ in range(4)]
        # keep the region bounded so the oracle applies
        A += [[Fraction(1), Fraction(0)], [Fraction(0), Fraction(1)]]
        b += [Fraction(6), Fraction(6)]
        expect = _brute_force_box_lp(c, A, b)
        r = solve_lp([mpq(v) for v in c],
                     A_ub=[[mpq(v) for v in row] for row in A],
                     b_ub=[mpq(v) for v in b])
        assert r.status == OPTIMAL
        assert r.value == mpq(expect.numerator, expect.denominator)
        solved += 1
