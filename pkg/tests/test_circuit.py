import random

import pytest
from gmpy2 import mpq

from kktbox.circuit import (
    LinearCircuit,
    PerturbationVector,
    coefficient_bound,
    evaluate,
    evaluate_perturbed,
    example_3_2_circuit,
    parse_circuit,
    region_gradient,
    serialize_circuit,
    tl_gate,
)
from kktbox.errors import ExtendedGateError, ParseError
from kktbox.rational import rat, trunc01

from conftest import brute_force_eval, rand_mixed_circuit, rand_tl_circuit

EX32_TEXT = """\
lac 1
inputs 1
gate 2 tl 2 1 0        # x2 = trunc(2 x1)
gate 3 tl 1 1 -1/2     # x3 = trunc(x1 - 1/2)
gate 4 tl 1/2 2 1 3 -1/2 1 0
output 4
"""


def test_parse_example_3_2():
    c = parse_circuit(EX32_TEXT)
    assert c.input_count == 1
    assert len(c.gates) == 3
    assert c.output_index == 4
    assert c.structurally_equal(example_3_2_circuit())


def test_parse_identity_circuit():
    c = parse_circuit("lac 1\ninputs 1\noutput 1\n")
    assert c.input_count == 1
    assert c.gates == ()
    assert evaluate(c, [mpq(1, 3)]) == mpq(1, 3)


def test_parse_topology_error():
    bad = "lac 1\ninputs 1\ngate 2 tl 1 3 0\noutput 2\n"
    with pytest.raises(ParseError):
        parse_circuit(bad)


def test_parse_rejects_decimals():
    bad = "lac 1\ninputs 1\ngate 2 tl 0.5 1 0\noutput 2\n"
    with pytest.raises(ParseError):
        parse_circuit(bad)


def test_serialize_round_trip_example():
    c = example_3_2_circuit()
    text = serialize_circuit(c)
    again = parse_circuit(text)
    assert again.structurally_equal(c)
    assert serialize_circuit(again) == text


def test_rational_coefficient_token():
    c = LinearCircuit(1, [tl_gate([(mpq(1, 3), 1)])], 2)
    assert "1/3" in serialize_circuit(c)


def test_evaluate_example_values():
    c = example_3_2_circuit()
    zero = PerturbationVector.zero()
    tr = evaluate_perturbed(c, zero, [mpq(1, 2)])
    assert tr.wire_values == (mpq(1, 2), mpq(1), mpq(0), mpq(1, 4))
    assert evaluate(c, [0]) == 0
    pi = PerturbationVector({3: mpq(1, 8)}, mpq(1, 8))
    tr = evaluate_perturbed(c, pi, [mpq(1, 2)])
    assert tr.value(3) == mpq(1, 8)
    assert tr.value(4) == mpq(3, 8)


def test_region_gradient_example():
    c = example_3_2_circuit()
    zero = PerturbationVector.zero()
    rg = region_gradient(c, zero, [mpq(3, 10)])
    assert rg.differentiable
    assert rg.gradient == (mpq(1, 2),)
    assert rg.region_radius is not None and rg.region_radius > 0

    rg = region_gradient(c, zero, [mpq(1, 2)])
    assert not rg.differentiable

    ident = parse_circuit("lac 1\ninputs 1\noutput 1\n")
    rg = region_gradient(ident, zero, [mpq(2, 7)])
    assert rg.differentiable and rg.gradient == (mpq(1),)
    assert rg.region_radius is None  # unbounded sentinel


def test_coefficient_bound_examples():
    assert coefficient_bound(example_3_2_circuit()) == 2
    c = LinearCircuit(2, [tl_gate([(1, 1), (1, 2)])], 3)
    assert coefficient_bound(c) == 2
    c = LinearCircuit(1, [tl_gate([(mpq(1, 2), 1)])], 2)
    assert coefficient_bound(c) == 1
    mixed = rand_mixed_circuit(random.Random(5), inputs=2, gates=4, trunc01_output=False)
    if not mixed.is_trunc_linear_only():
        with pytest.raises(ExtendedGateError):
            coefficient_bound(mixed)


def test_trunc01_idempotent():
    rng = random.Random(7)
    for _ in range(200):
        v = mpq(rng.randint(-50, 50), rng.randint(1, 20))
        assert trunc01(trunc01(v)) == trunc01(v)


def test_zero_perturbation_matches_brute_force():
    rng = random.Random(11)
    for _ in range(40):
        c = rand_mixed_circuit(rng, inputs=2, gates=rng.randint(1, 10), trunc01_output=False)
        for _ in range(25):
            xs = [mpq(rng.randint(0, 12), 12), mpq(rng.randint(0, 12), 12)]
            got = evaluate(c, xs)
            assert got == brute_force_eval(c, {}, xs)


def test_perturbed_matches_brute_force():
    rng = random.Random(13)
    for _ in range(40):
        c = rand_mixed_circuit(rng, inputs=2, gates=rng.randint(1, 8), trunc01_output=False)
        wires = c.perturbable_wires()
        entries = {w: mpq(rng.randint(-8, 8), 16) for w in wires if rng.random() < 0.7}
        pi = PerturbationVector(entries, mpq(1, 2))
        for _ in range(10):
            xs = [mpq(rng.randint(0, 10), 10), mpq(rng.randint(0, 10), 10)]
            got = evaluate_perturbed(c, pi, xs).value(c.output_index)
            assert got == brute_force_eval(c, entries, xs)


def test_determinism():
    rng = random.Random(17)
    c = rand_mixed_circuit(rng, inputs=2, gates=6, trunc01_output=False)
    xs = [mpq(1, 3), mpq(5, 7)]
    t1 = evaluate_perturbed(c, PerturbationVector.zero(), xs)
    t2 = evaluate_perturbed(c, PerturbationVector.zero(), xs)
    assert t1.wire_values == t2.wire_values


def test_regional_affinity():
    rng = random.Random(19)
    checked = 0
    while checked < 30:
        c = rand_mixed_circuit(rng, inputs=2, gates=rng.randint(1, 6), trunc01_output=False)
        wires = c.perturbable_wires()
        entries = {w: mpq(rng.randint(-4, 4), 32) for w in wires}
        pi = PerturbationVector(entries, mpq(1, 8))
        xs = [mpq(rng.randint(0, 20), 20), mpq(rng.randint(0, 20), 20)]
        rg = region_gradient(c, pi, xs)
        if not rg.differentiable or rg.region_radius is None:
            continue
        base = evaluate_perturbed(c, pi, xs).value(c.output_index)
        e = [mpq(rng.randint(-2, 2)), mpq(rng.randint(-2, 2))]
        if e == [0, 0]:
            continue
        scale = max(abs(v) for v in e)
        h = rg.region_radius / (2 * scale) * mpq(rng.randint(1, 3), 3)
        for sgn in (1, -1):
            shifted = [x + sgn * h * ei for x, ei in zip(xs, e)]
            val = evaluate_perturbed(c, pi, shifted).value(c.output_index)
            dot = sum(g * ei for g, ei in zip(rg.gradient, e))
            assert val - base == sgn * h * dot
        checked += 1


def test_round_trip_random_circuits():
    rng = random.Random(23)
    for _ in range(30):
        c = rand_mixed_circuit(rng, inputs=rng.randint(1, 3), gates=rng.randint(0, 8) or 1,
                               trunc01_output=False)
        again = parse_circuit(serialize_circuit(c))
        assert again.structurally_equal(c)


def test_perturbation_vector_validation():
    c = example_3_2_circuit()
    with pytest.raises(ValueError):
        PerturbationVector({2: mpq(1, 2)}, mpq(1, 4))
    pi = PerturbationVector({2: mpq(1, 8)}, mpq(1, 4))
    pi.check_against(c)
    ident = parse_circuit("lac 1\ninputs 1\noutput 1\n")
    with pytest.raises(ValueError):
        pi.check_against(ident)


def test_dimension_mismatch():
    c = example_3_2_circuit()
    from kktbox.errors import DimensionError

    with pytest.raises(DimensionError):
        evaluate(c, [rat(1, 2), rat(1, 2)])
