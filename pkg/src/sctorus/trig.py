"""Trigonometric polynomials on the 2-torus.

All smooth ingredients of the laboratory (map perturbations, interaction
kernels, observables) are finite trigonometric polynomials with explicit
real coefficients.  That keeps derivatives and sup/Lipschitz bounds exact:
every bound used in a construction-time admissibility check is computed
from the coefficients, never estimated.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

TWO_PI = 2.0 * np.pi

Mode = tuple[int, int]


@dataclass(frozen=True)
class TrigPolynomial:
    """Real-valued f(x) = sum_k  c_k cos(2*pi k.x) + s_k sin(2*pi k.x).

    Modes are integer wavevectors; the k = (0,0) cosine term is the constant
    part.  Instances are immutable and hashable so they can key caches.
    """

    modes: tuple[Mode, ...]
    cos_coeffs: tuple[float, ...]
    sin_coeffs: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.modes) == len(self.cos_coeffs) == len(self.sin_coeffs)):
            raise ValueError("modes and coefficient lists must have equal length")
        for k in self.modes:
            if len(k) != 2 or not all(isinstance(c, (int, np.integer)) for c in k):
                raise ValueError(f"modes must be integer pairs, got {k!r}")

    @staticmethod
    def zero() -> "TrigPolynomial":
        return TrigPolynomial((), (), ())

    @staticmethod
    def constant(value: float) -> "TrigPolynomial":
        return TrigPolynomial(((0, 0),), (float(value),), (0.0,))

    @staticmethod
    def from_terms(terms) -> "TrigPolynomial":
        """Build from [{"k": [k1, k2], "cos": c, "sin": s}, ...]."""
        modes, cc, sc = [], [], []
        for t in terms:
            k1, k2 = t["k"]
            modes.append((int(k1), int(k2)))
            cc.append(float(t.get("cos", 0.0)))
            sc.append(float(t.get("sin", 0.0)))
        return TrigPolynomial(tuple(modes), tuple(cc), tuple(sc))

    def to_terms(self) -> list[dict]:
        return [
            {"k": [k[0], k[1]], "cos": c, "sin": s}
            for k, c, s in zip(self.modes, self.cos_coeffs, self.sin_coeffs)
        ]

    @cached_property
    def _k(self) -> np.ndarray:
        return np.asarray(self.modes, dtype=float).reshape(-1, 2)

    @cached_property
    def _cc(self) -> np.ndarray:
        return np.asarray(self.cos_coeffs, dtype=float)

    @cached_property
    def _sc(self) -> np.ndarray:
        return np.asarray(self.sin_coeffs, dtype=float)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at points of shape (..., 2); returns shape (...,)."""
        p = np.asarray(points, dtype=float)
        if not self.modes:
            return np.zeros(p.shape[:-1])
        angles = TWO_PI * (p @ self._k.T)
        return np.cos(angles) @ self._cc + np.sin(angles) @ self._sc

    def partial(self, axis: int) -> "TrigPolynomial":
        """Exact partial derivative along axis 0 (u) or 1 (v)."""
        if axis not in (0, 1):
            raise ValueError("axis must be 0 or 1")
        new_cos, new_sin = [], []
        for k, c, s in zip(self.modes, self.cos_coeffs, self.sin_coeffs):
            w = TWO_PI * k[axis]
            new_cos.append(w * s)
            new_sin.append(-w * c)
        return TrigPolynomial(self.modes, tuple(new_cos), tuple(new_sin))

    def sup_bound(self) -> float:
        """sum_k sqrt(c_k^2 + s_k^2) >= sup |f|  (per-mode amplitude bound)."""
        return float(np.sum(np.hypot(self._cc, self._sc)))

    def deriv_sup_bound(self, alpha: Mode) -> float:
        """Coefficient bound on sup |d^alpha f| for a multi-index alpha."""
        amp = np.hypot(self._cc, self._sc)
        weight = np.abs(TWO_PI * self._k[:, 0]) ** alpha[0] * np.abs(TWO_PI * self._k[:, 1]) ** alpha[1]
        return float(np.sum(weight * amp)) if amp.size else 0.0

    def c_r_bound(self, r: int) -> float:
        """Bound on the plain C^r norm: sum over orders of the worst sup-derivative bound."""
        total = 0.0
        for m in range(r + 1):
            total += max(self.deriv_sup_bound((a, m - a)) for a in range(m + 1))
        return total

    def max_mode(self) -> int:
        return max((max(abs(k[0]), abs(k[1])) for k in self.modes), default=0)

    def scaled(self, factor: float) -> "TrigPolynomial":
        return TrigPolynomial(
            self.modes,
            tuple(factor * c for c in self.cos_coeffs),
            tuple(factor * s for s in self.sin_coeffs),
        )

    def is_zero(self) -> bool:
        return all(c == 0.0 and s == 0.0 for c, s in zip(self.cos_coeffs, self.sin_coeffs))


@dataclass(frozen=True)
class TrigField2:
    """Vector field T^2 -> R^2 with trig polynomial components."""

    u: TrigPolynomial
    v: TrigPolynomial

    @staticmethod
    def zero() -> "TrigField2":
        return TrigField2(TrigPolynomial.zero(), TrigPolynomial.zero())

    @staticmethod
    def from_terms(spec) -> "TrigField2":
        return TrigField2(
            TrigPolynomial.from_terms(spec.get("u", [])),
            TrigPolynomial.from_terms(spec.get("v", [])),
        )

    def to_terms(self) -> dict:
        return {"u": self.u.to_terms(), "v": self.v.to_terms()}

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.stack([self.u(points), self.v(points)], axis=-1)

    @cached_property
    def _partials(self) -> tuple[TrigPolynomial, ...]:
        return (self.u.partial(0), self.u.partial(1), self.v.partial(0), self.v.partial(1))

    def jacobian(self, points: np.ndarray) -> np.ndarray:
        """D(field) at points, shape (..., 2, 2) with rows = gradients of components."""
        du0, du1, dv0, dv1 = self._partials
        row_u = np.stack([du0(points), du1(points)], axis=-1)
        row_v = np.stack([dv0(points), dv1(points)], axis=-1)
        return np.stack([row_u, row_v], axis=-2)

    def sup_bound(self) -> float:
        return max(self.u.sup_bound(), self.v.sup_bound())

    def lip_inf_bound(self) -> float:
        """Bound on the max-norm Lipschitz constant: max_i sum_j sup|d_j F_i|."""
        du0, du1, dv0, dv1 = self._partials
        return max(du0.sup_bound() + du1.sup_bound(), dv0.sup_bound() + dv1.sup_bound())

    def c_r_bound(self, r: int) -> float:
        return max(self.u.c_r_bound(r), self.v.c_r_bound(r))

    def max_mode(self) -> int:
        return max(self.u.max_mode(), self.v.max_mode())

    def is_zero(self) -> bool:
        return self.u.is_zero() and self.v.is_zero()
