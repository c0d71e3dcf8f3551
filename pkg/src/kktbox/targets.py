"""Smooth target functions, given as exactly-evaluable bivariate polynomials
with a user-declared gradient Lipschitz constant.

The normalization window (values near 1/2, tiny gradients, L <= 1/100) is
checked by exact interval arithmetic over [0,1]^2, which is crisp for the
polynomials used here.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import KktboxError
from .rational import ONE, ZERO, Rat, rat


def _monomial_range(c, degree):
    """Range of c * x1^i x2^j over [0,1]^2 (degree = i + j)."""
    if degree == 0:
        return c, c
    return min(c, ZERO), max(c, ZERO)


@dataclass
class SmoothTarget:
    coeffs: dict  # (i, j) -> coefficient of x1^i x2^j
    L: Rat        # declared Lipschitz constant of the gradient

    def __post_init__(self):
        self.coeffs = {k: rat(v) for k, v in self.coeffs.items() if rat(v) != 0}
        self.L = rat(self.L)

    def h(self, x) -> Rat:
        x1, x2 = rat(x[0]), rat(x[1])
        total = ZERO
        for (i, j), c in self.coeffs.items():
            total += c * x1**i * x2**j
        return total

    def grad_h(self, x):
        x1, x2 = rat(x[0]), rat(x[1])
        d1 = ZERO
        d2 = ZERO
        for (i, j), c in self.coeffs.items():
            if i > 0:
                d1 += c * i * x1 ** (i - 1) * x2**j
            if j > 0:
                d2 += c * j * x1**i * x2 ** (j - 1)
        return d1, d2

    def _range(self, coeffs):
        lo = ZERO
        hi = ZERO
        for (i, j), c in coeffs.items():
            a, b = _monomial_range(c, i + j)
            lo += a
            hi += b
        return lo, hi

    def grad_coeffs(self):
        d1 = {}
        d2 = {}
        for (i, j), c in self.coeffs.items():
            if i > 0:
                d1[(i - 1, j)] = d1.get((i - 1, j), ZERO) + c * i
            if j > 0:
                d2[(i, j - 1)] = d2.get((i, j - 1), ZERO) + c * j
        return d1, d2

    def check_normalization(self):
        """Enforce h in [0.49, 0.51], grad h in [-0.001, 0.001]^2, L <= 1/100."""
        lo, hi = self._range(self.coeffs)
        if not (rat(49, 100) <= lo and hi <= rat(51, 100)):
            raise KktboxError(f"target range [{lo}, {hi}] outside [0.49, 0.51]")
        for dc in self.grad_coeffs():
            lo, hi = self._range(dc)
            if not (rat(-1, 1000) <= lo and hi <= rat(1, 1000)):
                raise KktboxError("target gradient outside [-0.001, 0.001]^2")
        if self.L > rat(1, 100):
            raise KktboxError("declared Lipschitz constant exceeds 1/100")
        return True


def fixture_target() -> SmoothTarget:
    """h(x) = 1/2 + (x1^2 + x2^2)/2000, gradient Lipschitz constant 1/1000."""
    return SmoothTarget({(0, 0): rat(1, 2), (2, 0): rat(1, 2000), (0, 2): rat(1, 2000)},
                        L=rat(1, 1000))


def constant_target(value) -> SmoothTarget:
    return SmoothTarget({(0, 0): rat(value)}, L=ZERO)
