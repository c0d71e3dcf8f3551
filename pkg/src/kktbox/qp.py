"""Box-constrained quadratic programs and the circuit-to-QP compiler.

A trunc-linear circuit with wires x_1..x_n (inputs x_1..x_m) compiles to

    p(y, z) = d^(n+1) * y_n + sum_{i=m+1..n} d^i * q_i(y, z)

with one q_i per gate,

    q_i = (y_i + K z_i^+ - K z_i^- - sum_j a_ij y_j - c_i)^2
          + 2 K^2 z_i^+ z_i^-  + 2 K z_i^+ (1 - y_i) + 2 K z_i^- y_i,

over [0,1]^(n + 2(n-m)).  At every KKT point the z pair of each gate encodes
the truncation residual exactly and the y values follow the circuit up to
(2Kd)^(n+1-i).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .circuit import LIN, TL, LinearCircuit, combined_terms
from .errors import DimensionError, ExtendedGateError, ParseError
from .rational import ONE, ZERO, Rat, format_rat, parse_rat, rat, trunc01


class BoxQP:
    """Sparse quadratic polynomial over [0,1]^var_count, 1-based variables.

    quad_terms maps (i, j) with i <= j to the coefficient of x_i * x_j
    (a single combined coefficient, also for i == j).
    """

    def __init__(self, var_count: int, quad_terms=None, lin_terms=None, constant=ZERO):
        if var_count < 1:
            raise ValueError("var_count must be positive")
        self.var_count = var_count
        self.quad_terms = {}
        self.lin_terms = {}
        self.constant = rat(constant)
        for (i, j), v in (quad_terms or {}).items():
            self.add_quad(i, j, v)
        for i, v in (lin_terms or {}).items():
            self.add_lin(i, v)

    def _check_index(self, i):
        if not (1 <= i <= self.var_count):
            raise ValueError(f"variable index {i} out of range")

    def add_quad(self, i, j, coeff):
        self._check_index(i)
        self._check_index(j)
        if i > j:
            i, j = j, i
        v = self.quad_terms.get((i, j), ZERO) + rat(coeff)
        if v == 0:
            self.quad_terms.pop((i, j), None)
        else:
            self.quad_terms[(i, j)] = v

    def add_lin(self, i, coeff):
        self._check_index(i)
        v = self.lin_terms.get(i, ZERO) + rat(coeff)
        if v == 0:
            self.lin_terms.pop(i, None)
        else:
            self.lin_terms[i] = v

    def value(self, x) -> Rat:
        if len(x) != self.var_count:
            raise DimensionError("point dimension mismatch")
        total = self.constant
        for (i, j), c in self.quad_terms.items():
            total += c * x[i - 1] * x[j - 1]
        for i, c in self.lin_terms.items():
            total += c * x[i - 1]
        return total

    def gradient_rows(self):
        """Per-variable affine gradient: list of ({var: coeff}, const)."""
        rows = [({}, self.lin_terms.get(i, ZERO)) for i in range(1, self.var_count + 1)]
        for (i, j), c in self.quad_terms.items():
            if i == j:
                rows[i - 1][0][i] = rows[i - 1][0].get(i, ZERO) + 2 * c
            else:
                rows[i - 1][0][j] = rows[i - 1][0].get(j, ZERO) + c
                rows[j - 1][0][i] = rows[j - 1][0].get(i, ZERO) + c
        return rows

    def __repr__(self):
        return f"BoxQP(vars={self.var_count}, quad={len(self.quad_terms)}, lin={len(self.lin_terms)})"


def qp_gradient(qp: BoxQP, x) -> tuple:
    """Exact partial derivatives of the quadratic at x."""
    if len(x) != qp.var_count:
        raise DimensionError("point dimension mismatch")
    grad = [qp.lin_terms.get(i, ZERO) for i in range(1, qp.var_count + 1)]
    for (i, j), c in qp.quad_terms.items():
        if i == j:
            grad[i - 1] += 2 * c * x[i - 1]
        else:
            grad[i - 1] += c * x[j - 1]
            grad[j - 1] += c * x[i - 1]
    return tuple(grad)


@dataclass
class KKTVerdict:
    satisfied: bool
    violations: list  # (variable index, "lower"|"upper", partial value)


def check_kkt(qp: BoxQP, x, eps=ZERO) -> KKTVerdict:
    """Exact (eps = 0) or eps-relaxed KKT check at a point of the box.

    For each i: x_i > 0 requires dp/dx_i <= eps, x_i < 1 requires
    dp/dx_i >= -eps.
    """
    eps = rat(eps)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    x = [rat(v) for v in x]
    for i, v in enumerate(x, start=1):
        if not (0 <= v <= 1):
            raise ValueError(f"coordinate {i} outside [0,1]")
    grad = qp_gradient(qp, x)
    violations = []
    for i, v in enumerate(x, start=1):
        d = grad[i - 1]
        if v > 0 and d > eps:
            violations.append((i, "lower", d))
        if v < 1 and d < -eps:
            violations.append((i, "upper", d))
    return KKTVerdict(satisfied=not violations, violations=violations)


@dataclass
class CompiledQP:
    qp: BoxQP
    source: LinearCircuit
    delta: Rat
    K: Rat
    var_map: dict  # qp index -> "y<i>" | "zp<i>" | "zm<i>"
    y_index: dict = field(default_factory=dict)   # wire -> qp var
    zp_index: dict = field(default_factory=dict)  # gate wire -> qp var
    zm_index: dict = field(default_factory=dict)

    def gate_wires(self):
        m = self.source.input_count
        return range(m + 1, self.source.wire_count + 1)

    def split_point(self, x):
        """Split a QP point into (y by wire, zp by gate wire, zm by gate wire)."""
        y = {w: x[self.y_index[w] - 1] for w in range(1, self.source.wire_count + 1)}
        zp = {w: x[self.zp_index[w] - 1] for w in self.gate_wires()}
        zm = {w: x[self.zm_index[w] - 1] for w in self.gate_wires()}
        return y, zp, zm


def choose_delta(delta_prime, K) -> Rat:
    """The reduction's weight base: min(delta'/8K^2, 1/32K^2)."""
    delta_prime = rat(delta_prime)
    K = rat(K)
    if delta_prime <= 0 or K < 1:
        raise ValueError("need delta' > 0 and K >= 1")
    return min(delta_prime / (8 * K * K), ONE / (32 * K * K))


def compile_qp(circuit: LinearCircuit, delta, K=None) -> CompiledQP:
    """Compile a trunc-linear circuit into the weighted per-gate QP."""
    from .circuit import coefficient_bound

    if not circuit.is_trunc_linear_only():
        raise ExtendedGateError("compile_qp requires truncated-linear gates only")
    delta = rat(delta)
    k_min = coefficient_bound(circuit)
    K = k_min if K is None else rat(K)
    if K < k_min:
        raise ValueError(f"K = {K} below the circuit's coefficient bound {k_min}")
    if not (0 < delta < 1 / (16 * K * K)):
        raise ValueError("delta must lie in (0, 1/(16 K^2))")

    n = circuit.wire_count
    m = circuit.input_count
    var_map = {}
    y_index = {}
    zp_index = {}
    zm_index = {}
    for w in range(1, n + 1):
        y_index[w] = w
        var_map[w] = f"y{w}"
    nxt = n + 1
    for w in range(m + 1, n + 1):
        zp_index[w] = nxt
        var_map[nxt] = f"zp{w}"
        zm_index[w] = nxt + 1
        var_map[nxt + 1] = f"zm{w}"
        nxt += 2
    qp = BoxQP(n + 2 * (n - m))

    qp.add_lin(y_index[n], delta ** (n + 1))
    for w in range(m + 1, n + 1):
        g = circuit.gate_at_wire(w)
        weight = delta ** w
        # affine form S = y_w + K zp - K zm - sum a_j y_j - c
        terms = [(ONE, y_index[w]), (K, zp_index[w]), (-K, zm_index[w])]
        for a, src in combined_terms(g):
            terms.append((-a, y_index[src]))
        const = -g.c
        # S^2 expanded
        for idx1 in range(len(terms)):
            a1, v1 = terms[idx1]
            qp.add_quad(v1, v1, weight * a1 * a1)
            for idx2 in range(idx1 + 1, len(terms)):
                a2, v2 = terms[idx2]
                qp.add_quad(v1, v2, weight * 2 * a1 * a2)
            qp.add_lin(v1, weight * 2 * const * a1)
        qp.constant += weight * const * const
        # 2 K^2 zp zm + 2 K zp (1 - y_w) + 2 K zm y_w
        qp.add_quad(zp_index[w], zm_index[w], weight * 2 * K * K)
        qp.add_lin(zp_index[w], weight * 2 * K)
        qp.add_quad(zp_index[w], y_index[w], -weight * 2 * K)
        qp.add_quad(zm_index[w], y_index[w], weight * 2 * K)

    return CompiledQP(qp=qp, source=circuit, delta=delta, K=K, var_map=var_map,
                      y_index=y_index, zp_index=zp_index, zm_index=zm_index)


@dataclass
class GateResidual:
    wire: int
    truncation_identity: bool   # Lemma on z-variables, exact
    eval_error: Rat             # |y_i - trunc(sum a y + c)|
    bound: Rat                  # (2 K d)^(n+1-i)
    within_bound: bool


def compiled_residuals(cqp: CompiledQP, x) -> list:
    """Per-gate truncation-identity and evaluation-error report at a point."""
    circuit = cqp.source
    K, delta = cqp.K, cqp.delta
    n = circuit.wire_count
    y, zp, zm = cqp.split_point([rat(v) for v in x])
    report = []
    for w in cqp.gate_wires():
        g = circuit.gate_at_wire(w)
        s = g.c
        for a, src in combined_terms(g):
            s += a * y[src]
        t = trunc01(s)
        identity = (t == s - K * zp[w] + K * zm[w])
        err = abs(y[w] - t)
        bound = (2 * K * delta) ** (n + 1 - w)
        report.append(GateResidual(w, identity, err, bound, err <= bound))
    return report


# ---------------------------------------------------------------------------
# .bqp text format


def serialize_boxqp(qp: BoxQP) -> str:
    lines = ["bqp 1", f"vars {qp.var_count}"]
    for (i, j) in sorted(qp.quad_terms):
        lines.append(f"q {i} {j} {format_rat(qp.quad_terms[(i, j)])}")
    for i in sorted(qp.lin_terms):
        lines.append(f"l {i} {format_rat(qp.lin_terms[i])}")
    if qp.constant != 0:
        lines.append(f"c0 {format_rat(qp.constant)}")
    return "\n".join(lines) + "\n"


def parse_boxqp(text: str) -> BoxQP:
    header_seen = False
    var_count = None
    quad = {}
    lin = {}
    const = ZERO
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if not header_seen:
            if toks != ["bqp", "1"]:
                raise ParseError("expected header 'bqp 1'", lineno)
            header_seen = True
            continue
        try:
            if toks[0] == "vars":
                var_count = int(toks[1])
            elif toks[0] == "q":
                i, j = int(toks[1]), int(toks[2])
                if i > j:
                    raise ParseError("expected i <= j in quad term", lineno)
                quad[(i, j)] = quad.get((i, j), ZERO) + parse_rat(toks[3])
            elif toks[0] == "l":
                lin[int(toks[1])] = lin.get(int(toks[1]), ZERO) + parse_rat(toks[2])
            elif toks[0] == "c0":
                const += parse_rat(toks[1])
            else:
                raise ParseError(f"unexpected directive {toks[0]!r}", lineno)
        except (ValueError, IndexError):
            raise ParseError("malformed line", lineno)
    if var_count is None:
        raise ParseError("missing vars line")
    return BoxQP(var_count, quad, lin, const)


def serialize_point(x) -> str:
    return json.dumps([format_rat(v) for v in x])


def parse_point(text: str):
    data = json.loads(text)
    return [parse_rat(tok) for tok in data]


def var_map_json(cqp: CompiledQP) -> str:
    return json.dumps({str(i): lbl for i, lbl in sorted(cqp.var_map.items())}, indent=0)
