import random

import pytest
from gmpy2 import mpq

from kktbox.circuit import (
    LinearCircuit,
    PerturbationVector,
    evaluate,
    evaluate_perturbed,
    example_3_2_circuit,
    lin_gate,
    max_gate,
    min_gate,
    tl_gate,
    truncab_gate,
)
from kktbox.errors import KktboxError
from kktbox.normalize import (
    NormalizationResult,
    normalize_circuit,
    preprocess_extended,
    transfer_perturbation,
    value_bound,
)

from conftest import rand_mixed_circuit


def test_value_bound_examples():
    c = LinearCircuit(1, [lin_gate([(3, 1)], c=1)], 2)
    assert value_bound(c).B == 4
    ident = LinearCircuit(1, [], 1)
    assert value_bound(ident).B == 2
    c = LinearCircuit(1, [truncab_gate(-5, 5, 1)], 2)
    assert value_bound(c).B >= 10


def test_preprocess_min_example():
    # min(3/10, 7/10) built from two constant wires
    c = LinearCircuit(
        1,
        [lin_gate([(0, 1)], c=mpq(3, 10)), lin_gate([(0, 1)], c=mpq(7, 10)), min_gate(2, 3)],
        4,
    )
    pre = preprocess_extended(c)
    assert all(g.kind in ("lin", "truncab") for g in pre.gates)
    assert evaluate(pre, [mpq(1, 2)]) == mpq(3, 10)
    # the truncation window is [0, 3B]
    windows = [g for g in pre.gates if g.kind == "truncab"]
    assert len(windows) == 1
    assert windows[0].lo == 0 and windows[0].hi >= 6


def test_preprocess_max_expansion_present():
    c = LinearCircuit(2, [max_gate(1, 2)], 3)
    pre = preprocess_extended(c)
    # negation affine gates from the -min(-x, -y) rewrite
    negs = [g for g in pre.gates if g.kind == "lin" and len(g.terms) == 1 and g.terms[0][0] == -1]
    assert len(negs) >= 3
    for a, b in [(mpq(1, 3), mpq(2, 3)), (mpq(1), mpq(0)), (mpq(1, 2), mpq(1, 2))]:
        assert evaluate(pre, [a, b]) == max(a, b)


def test_preprocess_affine_only_unchanged():
    c = LinearCircuit(2, [lin_gate([(1, 1), (2, 2)], c=mpq(-1, 3))], 3)
    pre = preprocess_extended(c)
    assert pre.structurally_equal(c)


def test_lower_rejects_bad_output():
    c = LinearCircuit(1, [lin_gate([(1, 1)])], 2)
    with pytest.raises(KktboxError):
        normalize_circuit(c)


def test_normalized_example_3_2_semantics():
    c = example_3_2_circuit()
    norm = normalize_circuit(c)
    assert norm.output.is_trunc_linear_only()
    assert norm.K == 4 * norm.B ** norm.N
    assert evaluate(norm.output, [mpq(1, 2)]) == mpq(1, 4)
    for x in [mpq(0), mpq(1, 3), mpq(7, 8), mpq(1)]:
        assert evaluate(norm.output, [x]) == evaluate(c, [x])


def test_input_encoding_value():
    c = example_3_2_circuit()
    norm = normalize_circuit(c)
    tr = evaluate_perturbed(norm.output, PerturbationVector.zero(), [mpq(0)])
    enc_wire = norm.enc_map[1]
    assert tr.value(enc_wire) == mpq(1, 2)  # phi(0)


def test_encoded_wires_in_quarter_band():
    rng = random.Random(41)
    for _ in range(10):
        c = rand_mixed_circuit(rng, inputs=2, gates=rng.randint(2, 8))
        norm = normalize_circuit(c)
        for _ in range(5):
            xs = [mpq(rng.randint(0, 8), 8), mpq(rng.randint(0, 8), 8)]
            tr = evaluate_perturbed(norm.output, PerturbationVector.zero(), xs)
            for pre_wire, enc_wire in norm.enc_map.items():
                if enc_wire == norm.output.output_index:
                    continue
                v = tr.value(enc_wire)
                assert mpq(1, 4) <= v <= mpq(3, 4)


def test_semantic_equivalence_random():
    rng = random.Random(43)
    for _ in range(25):
        c = rand_mixed_circuit(rng, inputs=2, gates=rng.randint(1, 12))
        norm = normalize_circuit(c)
        for _ in range(20):
            xs = [mpq(rng.randint(0, 16), 16), mpq(rng.randint(0, 16), 16)]
            assert evaluate(norm.output, xs) == evaluate(c, xs)


def _random_pi(rng, circuit, bound):
    wires = circuit.perturbable_wires()
    entries = {}
    for w in wires:
        if rng.random() < 0.8:
            entries[w] = bound * mpq(rng.randint(-16, 16), 16)
    return PerturbationVector(entries, bound)


def test_transfer_zero_is_zero():
    c = example_3_2_circuit()
    norm = normalize_circuit(c)
    sigma = transfer_perturbation(c, norm, PerturbationVector({}, mpq(1, norm.K)))
    assert sigma.entries == {}


def test_transfer_min_gate_sign():
    c = LinearCircuit(2, [min_gate(1, 2), tl_gate([(1, 3)])], 4)
    norm = normalize_circuit(c)
    # perturb only the zbar gate of the min's window truncation
    pre_tw, sign = norm.pre.pert_map[3]
    assert sign == -1
    zbar, lo, hi = norm.psi_map[pre_tw]
    d = mpq(1, norm.K)
    pi = PerturbationVector({zbar: d}, d)
    sigma = transfer_perturbation(c, norm, pi)
    assert sigma.entries.get(3) == -(hi - lo) * d


def test_transfer_exactness_random():
    rng = random.Random(47)
    for trial in range(20):
        c = rand_mixed_circuit(rng, inputs=2, gates=rng.randint(1, 8))
        norm = normalize_circuit(c)
        d = mpq(1, norm.K)
        pi = _random_pi(rng, norm.output, d)
        sigma = transfer_perturbation(c, norm, pi)
        assert all(abs(v) <= d * norm.K for v in sigma.entries.values())
        for _ in range(20):
            xs = [mpq(rng.randint(0, 12), 12), mpq(rng.randint(0, 12), 12)]
            lhs = evaluate_perturbed(c, sigma, xs).value(c.output_index)
            rhs = evaluate_perturbed(norm.output, pi, xs).value(norm.output.output_index)
            assert lhs == rhs


def test_encoded_range_safety_under_perturbation():
    rng = random.Random(53)
    for _ in range(8):
        c = rand_mixed_circuit(rng, inputs=2, gates=rng.randint(1, 6))
        norm = normalize_circuit(c)
        d = mpq(1, norm.K)
        pi = _random_pi(rng, norm.output, d)
        for _ in range(5):
            xs = [mpq(rng.randint(0, 8), 8), mpq(rng.randint(0, 8), 8)]
            tr = evaluate_perturbed(norm.output, pi, xs)
            for v in tr.wire_values:
                assert 0 <= v <= 1


def test_transfer_rejects_large_pi():
    c = example_3_2_circuit()
    norm = normalize_circuit(c)
    big = 2 / mpq(norm.K)
    pi = PerturbationVector({norm.output.wire_count: big}, big)
    with pytest.raises(KktboxError):
        transfer_perturbation(c, norm, pi)


def test_sidecar_json():
    norm = normalize_circuit(example_3_2_circuit())
    text = norm.sidecar_json()
    assert '"B"' in text and '"psi"' in text
