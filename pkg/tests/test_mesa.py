import random

import pytest
from gmpy2 import mpq

from kktbox.errors import KktboxError
from kktbox.mesa import (
    GridSpec,
    MesaEnv,
    MesaParams,
    SampledField,
    check_field_assumptions,
    field_argmax_piece,
    field_from_csv,
    field_max,
    field_to_csv,
    mesa_value,
    piece_gradient,
    sample_field_from_target,
)
from kktbox.targets import SmoothTarget, constant_target, fixture_target


def test_mesa_center_value():
    env = MesaEnv.standard(mpq(1, 7))
    m = MesaParams.uniform((mpq(1, 2), mpq(1, 2)), mpq(1, 2), (0, 0))
    assert mesa_value(m.p, m, env) == mpq(1, 2)


def test_mesa_right_drop():
    ell = mpq(1, 7)
    env = MesaEnv.standard(ell)
    a = mpq(1, 2)
    m = MesaParams.uniform((mpq(1, 2), mpq(1, 2)), a, (0, 0))
    x = (m.p[0] + ell, m.p[1])
    assert mesa_value(x, m, env) == a - 6


def test_mesa_drop_lemma_random():
    rng = random.Random(61)
    for _ in range(1000):
        ell = mpq(rng.randint(1, 8), rng.randint(8, 64))
        gamma = 12 / ell * mpq(rng.randint(1, 3))
        env = MesaEnv(ell, gamma)
        p = (mpq(rng.randint(0, 16), 16), mpq(rng.randint(0, 16), 16))
        g = (mpq(rng.randint(-16, 16), 16), mpq(rng.randint(-16, 16), 16))
        A = tuple(mpq(rng.randint(0, 16), 16) for _ in range(5))
        m = MesaParams(p, A, g)
        # random box point at sup-distance >= ell/2 + 3/gamma
        r = ell / 2 + 3 / gamma
        for _ in range(3):
            x = (mpq(rng.randint(0, 16), 16), mpq(rng.randint(0, 16), 16))
            if max(abs(x[0] - p[0]), abs(x[1] - p[1])) >= r:
                assert mesa_value(x, m, env) <= 0


def _flat_field(grid, a=mpq(1, 2)):
    return {p: ((a,) * 5, (mpq(0), mpq(0))) for p in grid.points()}


def test_field_max_flat():
    grid = GridSpec(2)
    env = MesaEnv.standard(grid.ell)
    rng = random.Random(67)
    fields = _flat_field(grid)
    for _ in range(50):
        x = (mpq(rng.randint(0, 24), 24), mpq(rng.randint(0, 24), 24))
        assert field_max(x, grid, fields, env) == mpq(1, 2)


def test_field_max_range_lemma():
    rng = random.Random(71)
    grid = GridSpec(2)
    env = MesaEnv.standard(grid.ell)
    for _ in range(30):
        fields = {}
        for p in grid.points():
            A = tuple(mpq(40, 100) + mpq(rng.randint(0, 20), 100) for _ in range(5))
            g = (mpq(rng.randint(-1, 1), 100), mpq(rng.randint(-1, 1), 100))
            fields[p] = (A, g)
        for _ in range(30):
            x = (mpq(rng.randint(0, 48), 48), mpq(rng.randint(0, 48), 48))
            v = field_max(x, grid, fields, env)
            assert mpq(1, 3) <= v <= mpq(2, 3)


def test_field_max_neighborhood_matches_full():
    # bits = 7 uses the 3x3 fast path; compare against explicit enumeration
    rng = random.Random(73)
    grid = GridSpec(7)
    env = MesaEnv.standard(grid.ell)
    # lazy flat field with one bumped point
    fields = {p: ((mpq(1, 2),) * 5, (mpq(0), mpq(0))) for p in grid.points()}
    for _ in range(20):
        x = (mpq(rng.randint(0, 2**7 - 1), 2**7 - 1), mpq(rng.randint(0, 2**7 - 1), 2**7 - 1))
        fast = field_max(x, grid, fields, env)
        full = max(
            mesa_value(x, MesaParams(p, A, g), env) for p, (A, g) in fields.items()
        )
        assert fast == full == mpq(1, 2)


def test_field_max_single_point_grid():
    grid = GridSpec(1)
    assert grid.ell == 1
    env = MesaEnv.standard(mpq(1))
    fields = _flat_field(grid)
    assert field_max((mpq(1, 2), mpq(1, 2)), grid, fields, env) == mpq(1, 2)


def test_field_max_missing_point():
    grid = GridSpec(1)
    env = MesaEnv.standard(grid.ell)
    with pytest.raises(KktboxError):
        field_max((0, 0), grid, {}, env)


def test_sample_field_fixture():
    grid = GridSpec(3)
    f = sample_field_from_target(fixture_target(), grid)
    assert f.a_table[(mpq(0), mpq(0))] == mpq(1, 2)
    assert f.g_table[(mpq(0), mpq(0))] == (0, 0)
    one = (mpq(1), mpq(1))
    g = f.g_table[one]
    assert abs(g[0] - mpq(1, 2000)) <= grid.ell / 200
    assert abs(g[1] - mpq(1, 2000)) <= grid.ell / 200
    assert f.g_strict_range


def test_sample_field_constant_target():
    # 0.49 has no finite binary expansion; the table holds one constant
    # dyadic within the a-tolerance of it
    grid = GridSpec(2)
    f = sample_field_from_target(constant_target(mpq(49, 100)), grid)
    vals = set(f.a_table.values())
    assert len(vals) == 1
    assert abs(vals.pop() - mpq(49, 100)) <= grid.ell**2 / 100
    assert all(g == (0, 0) for g in f.g_table.values())


def test_check_field_assumptions_fixture():
    grid = GridSpec(3)
    f = sample_field_from_target(fixture_target(), grid)
    rep = check_field_assumptions(f, grid, grid.ell**2 / 100)
    assert rep.passed, rep.violations[:4]


def test_check_field_assumptions_flags_g_jump():
    grid = GridSpec(2)
    ell = grid.ell
    a_table = {p: mpq(1, 2) for p in grid.points()}
    g_table = {p: (mpq(0), mpq(0)) for p in grid.points()}
    g_table[(mpq(0), mpq(0))] = (2 * ell, mpq(0))
    bad = SampledField(a_table, g_table)
    rep = check_field_assumptions(bad, grid, 0)
    assert not rep.passed
    assert any(v[0] == "g-jump" for v in rep.violations)


def test_check_field_assumptions_constant_trivial():
    grid = GridSpec(2)
    f = SampledField({p: mpq(1, 2) for p in grid.points()},
                     {p: (mpq(0), mpq(0)) for p in grid.points()})
    assert check_field_assumptions(f, grid, 0).passed


def _linear_field(grid, g0, x0=(mpq(1, 2), mpq(1, 2))):
    """Exact half-gradient field for a linear target: conditions hold with
    equality slack, values stay in [0.46, 0.54]."""
    a_table = {}
    g_table = {}
    for p in grid.points():
        a_table[p] = mpq(1, 2) + 2 * (g0[0] * (p[0] - x0[0]) + g0[1] * (p[1] - x0[1]))
        g_table[p] = (g0[0], g0[1])
    return SampledField(a_table, g_table)


def test_linear_field_passes_checker():
    grid = GridSpec(4)
    g0 = (mpq(9, 1000), mpq(-7, 1000))
    f = _linear_field(grid, g0)
    rep = check_field_assumptions(f, grid, grid.ell**2 / 100)
    assert rep.passed, rep.violations[:4]


def test_bad_pieces_lemma_directed():
    """Lemma: inside a mesa's box with g1 >= 10 ell, the field gradient's
    first coordinate is at least g1 - ell at differentiable points."""
    rng = random.Random(79)
    grid = GridSpec(10)
    ell = grid.ell
    env = MesaEnv.standard(ell)
    checked = 0
    while checked < 60:
        sign = rng.choice([1, -1])
        coord = rng.choice([0, 1])
        mag = mpq(rng.randint(1, 5), 1000) + 10 * ell
        if mag > mpq(1, 100):
            mag = mpq(1, 100)
        g0 = [mpq(rng.randint(-9, 9), 1000), mpq(rng.randint(-9, 9), 1000)]
        g0[coord] = sign * mag
        # query near a random interior grid point
        k1 = rng.randint(2, 2**10 - 3)
        k2 = rng.randint(2, 2**10 - 3)
        p = (k1 * ell, k2 * ell)
        x = (p[0] + mpq(rng.randint(-8, 8), 17) * ell / 2,
             p[1] + mpq(rng.randint(-8, 8), 17) * ell / 2)
        # local 3x3 patch of the exact half-gradient linear field (mesas
        # further away are nonpositive by the drop lemma)
        x0 = (mpq(1, 2), mpq(1, 2))
        pts = [(p[0] + i * ell, p[1] + j * ell) for i in (-1, 0, 1) for j in (-1, 0, 1)]
        fields = {}
        for q in pts:
            a_q = mpq(1, 2) + 2 * (g0[0] * (q[0] - x0[0]) + g0[1] * (q[1] - x0[1]))
            fields[q] = ((a_q,) * 5, tuple(g0))
        win, piece, _, strict = field_argmax_piece(x, grid, fields, env)
        if not strict:
            continue
        grad = piece_gradient(MesaParams(win, fields[win][0], fields[win][1]), env, piece)
        if sign > 0:
            assert grad[coord] >= g0[coord] - ell
        else:
            assert grad[coord] <= g0[coord] + ell
        checked += 1


def test_field_csv_round_trip():
    grid = GridSpec(2)
    f = sample_field_from_target(fixture_target(), grid)
    again = field_from_csv(field_to_csv(f))
    assert again.a_table == f.a_table
    assert again.g_table == f.g_table


def test_target_normalization_errors():
    with pytest.raises(KktboxError):
        SmoothTarget({(0, 0): mpq(6, 10)}, L=0).check_normalization()
    with pytest.raises(KktboxError):
        SmoothTarget({(0, 0): mpq(1, 2), (1, 0): mpq(1, 100)}, L=0).check_normalization()
    assert fixture_target().check_normalization()
