"""Backpropagation certificates for compiled QPs.

At an exact KKT point of the compiled QP, the scaled input-coordinate
gradients of p equal a convex combination, over sign flips of a constructed
perturbation vector, of gradients of perturbed circuits:

    dp/dy_k = d^(n+1) * sum_s (prod_j lambda_{s_j * j}) * df^{s*pi}/dx_k

with eps_i = (2Kd)^(n-i), |pi_i| <= 8 K^2 d and lambda_i in [0,1].  The
certificate builder follows the three-case pi rule and four-case lambda rule;
the verifier recomputes everything from scratch (region gradients of the
perturbed circuits, crispness of gate statuses over the eps_m input box) and
checks the identity with exact equality.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

from .circuit import (
    PerturbationVector,
    combined_terms,
    evaluate_perturbed,
    interval_eval_crisp,
    region_gradient,
)
from .errors import KktboxError
from .qp import CompiledQP, check_kkt, qp_gradient
from .rational import ONE, ZERO, Rat, rat, trunc01


class CertificateError(KktboxError):
    pass


@dataclass
class BackpropCertificate:
    pi: dict          # gate wire -> Rat
    lam: dict         # gate wire -> Rat in [0,1]
    eps_schedule: dict  # wire i -> (2Kd)^(n-i)
    K: Rat
    delta: Rat


def _gate_sums(cqp: CompiledQP, y):
    """sum_j a_ij y_j + c_i per gate wire."""
    sums = {}
    for w in cqp.gate_wires():
        g = cqp.source.gate_at_wire(w)
        s = g.c
        for a, src in combined_terms(g):
            s += a * y[src]
        sums[w] = s
    return sums


def _dpi_dyi(cqp: CompiledQP, y, zp, zm, w) -> Rat:
    """(1/(2 d^w)) * dp_w/dy_w at the point, where p_w keeps gates > w.

    dq_l/dy_w = -2 a_{l w} (y_l + K zp_l - K zm_l - sum_j a_{lj} y_j - c_l).
    """
    circuit = cqp.source
    n = circuit.wire_count
    delta, K = cqp.delta, cqp.K
    total = delta ** (n + 1) if w == n else ZERO
    for l in range(w + 1, n + 1):
        g = circuit.gate_at_wire(l)
        a_lw = ZERO
        for a, src in combined_terms(g):
            if src == w:
                a_lw = a
        if a_lw == 0:
            continue
        s = g.c
        for a, src in combined_terms(g):
            s += a * y[src]
        inner = y[l] + K * zp[l] - K * zm[l] - s
        total += delta ** l * (-2) * a_lw * inner
    return total / (2 * delta ** w)


def build_backprop_certificate(cqp: CompiledQP, x) -> BackpropCertificate:
    """Construct (pi, lambda, eps schedule) at an exact KKT point."""
    verdict = check_kkt(cqp.qp, x, ZERO)
    if not verdict.satisfied:
        raise CertificateError(f"point is not an exact KKT point: {verdict.violations[:3]}")
    circuit = cqp.source
    n = circuit.wire_count
    K, delta = cqp.K, cqp.delta
    if not delta < 1 / (16 * K * K):
        raise CertificateError("delta out of admissible range")
    y, zp, zm = cqp.split_point([rat(v) for v in x])
    sums = _gate_sums(cqp, y)

    eps = {i: (2 * K * delta) ** (n - i) for i in range(circuit.input_count, n + 1)}

    pi = {}
    lam = {}
    for w in cqp.gate_wires():
        s = sums[w]
        band = 2 * K * eps[w - 1]
        if abs(s - 1) <= band:
            pi[w] = -4 * K * eps[w - 1]
        elif abs(s) <= band:
            pi[w] = 4 * K * eps[w - 1]
        else:
            pi[w] = ZERO
        if s < -band or s > 1 + band:
            lam[w] = ZERO
        elif band < s < 1 - band:
            lam[w] = ONE
        else:
            d = _dpi_dyi(cqp, y, zp, zm, w)
            if d == 0:
                lam[w] = ONE
            else:
                lam[w] = (trunc01(s) - trunc01(s - d)) / d
            if not (0 <= lam[w] <= 1):
                raise CertificateError(f"lambda at gate {w} fell outside [0,1]: {lam[w]}")

    cert = BackpropCertificate(pi=pi, lam=lam, eps_schedule=eps, K=K, delta=delta)
    bound = 8 * K * K * delta
    for w, v in pi.items():
        if abs(v) > bound:
            raise CertificateError(f"|pi_{w}| exceeds 8 K^2 delta")
    return cert


def verify_backprop_identity(cqp: CompiledQP, x, cert: BackpropCertificate) -> bool:
    """Check the Lemma identity exactly for every input coordinate.

    Enumerates sign vectors only over gates with pi_i != 0 (a flipped sign on
    a zero entry leaves f^{s*pi} unchanged and the lambda pair sums to one),
    verifies each f^{s*pi} is differentiable on the eps_m box around the
    inputs via crisp interval statuses, and compares the weighted gradient sum
    against the exact QP gradient.
    """
    circuit = cqp.source
    n = circuit.wire_count
    m = circuit.input_count
    delta = cqp.delta
    x = [rat(v) for v in x]
    y, _, _ = cqp.split_point(x)
    inputs = [y[i] for i in range(1, m + 1)]
    eps_m = (2 * cqp.K * delta) ** (n - m)
    boxes = [(v - eps_m, v + eps_m) for v in inputs]

    flip_wires = [w for w in cqp.gate_wires() if cert.pi[w] != 0]
    rhs = [ZERO] * m
    pert_bound = 8 * cqp.K * cqp.K * delta
    for signs in product((1, -1), repeat=len(flip_wires)):
        entries = dict(cert.pi)
        for s, w in zip(signs, flip_wires):
            entries[w] = s * entries[w]
        pvec = PerturbationVector({w: v for w, v in entries.items() if v != 0}, pert_bound)
        weight = ONE
        for s, w in zip(signs, flip_wires):
            weight *= cert.lam[w] if s == 1 else ONE - cert.lam[w]
        # differentiability must hold even for zero-weight sign vectors
        rg = region_gradient(circuit, pvec, inputs)
        if not rg.differentiable:
            raise CertificateError(f"f^(s*pi) not differentiable at the point for signs {signs}")
        crisp, _ = interval_eval_crisp(circuit, pvec, boxes)
        if not crisp:
            raise CertificateError(
                f"f^(s*pi) status not constant over the eps_m box for signs {signs}"
            )
        for kk in range(m):
            rhs[kk] += weight * rg.gradient[kk]

    grad = qp_gradient(cqp.qp, x)
    scale = delta ** (n + 1)
    for kk in range(m):
        if grad[cqp.y_index[kk + 1] - 1] != scale * rhs[kk]:
            return False
    return True


def scaled_input_gradient(cqp: CompiledQP, x) -> tuple:
    """d^-(n+1) * (dp/dy_1 ... dp/dy_m) at the point."""
    circuit = cqp.source
    n = circuit.wire_count
    m = circuit.input_count
    grad = qp_gradient(cqp.qp, [rat(v) for v in x])
    scale = cqp.delta ** (n + 1)
    return tuple(grad[cqp.y_index[i] - 1] / scale for i in range(1, m + 1))
