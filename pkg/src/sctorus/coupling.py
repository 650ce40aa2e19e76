"""Mean-field interaction on the torus: Phi(x) = x + eps * G_mu(x).

Three kernel families are supported.  "separable" pairs two vector kernels:
G_mu(x) has components K1_i(x) * mu(K2_i).  "convolution" integrates a single
kernel against the measure, G_mu(x) = integral kappa(x - y) dmu(y), evaluated
spectrally (modewise products with the measure's trigonometric moments).
"zero" disables the interaction.  In every case the per-measure reduction
produces an explicit trigonometric field, so the interaction, its derivatives,
and its inverse are exact given the measure moments.

Measures are duck-typed: anything with `.cells` is a grid density, anything
with `.positions` is a particle ensemble.  Ensemble reductions run over a
lexicographically sorted copy with a fixed pairwise-tree summation, making
the mean-field term bitwise independent of particle order.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import CouplingAdmissibilityError, NoConvergenceError
from .trig import TrigField2, TrigPolynomial
from .torus import cell_centers, wrap
from .util import tree_sum

PHI_STEP_TOL = 1e-13
PHI_MAX_ITER = 100
# |eps| * Lip(G) at or below this keeps Phi a diffeomorphism and makes the
# inverse fixed-point iteration a contraction.
ADMISSIBLE_EPS_LIP = 0.5

KINDS = ("zero", "separable", "convolution")


def _measure_points(mu):
    """Quadrature nodes and weights realizing mu(f) = sum w_i f(x_i)."""
    if hasattr(mu, "cells"):
        n = mu.n
        return cell_centers(n).reshape(-1, 2), mu.cells.ravel() / (n * n)
    if hasattr(mu, "positions"):
        pos = np.asarray(mu.positions, dtype=float)
        order = np.lexsort((pos[:, 1], pos[:, 0]))
        pos = pos[order]
        return pos, np.full(len(pos), 1.0 / len(pos))
    raise TypeError(f"not a measure view (need .cells or .positions): {type(mu)!r}")


def measure_mean(mu, poly: TrigPolynomial) -> float:
    """mu(poly) for a density or ensemble measure view."""
    pts, w = _measure_points(mu)
    return float(tree_sum(w * poly(pts)))


def _measure_mode_moments(mu, modes) -> tuple[np.ndarray, np.ndarray]:
    """(mu(cos 2pi k.y), mu(sin 2pi k.y)) for each wavevector k."""
    pts, w = _measure_points(mu)
    k = np.asarray(modes, dtype=float).reshape(-1, 2)
    angles = 2.0 * np.pi * (pts @ k.T)
    cos_m = tree_sum(w[:, None] * np.cos(angles))
    sin_m = tree_sum(w[:, None] * np.sin(angles))
    return cos_m, sin_m


def _convolved(poly: TrigPolynomial, mu) -> TrigPolynomial:
    """Trig polynomial of x -> integral poly(x - y) dmu(y)."""
    if not poly.modes:
        return poly
    cos_m, sin_m = _measure_mode_moments(mu, poly.modes)
    cc = np.asarray(poly.cos_coeffs)
    sc = np.asarray(poly.sin_coeffs)
    new_cos = cc * cos_m - sc * sin_m
    new_sin = cc * sin_m + sc * cos_m
    return TrigPolynomial(poly.modes, tuple(float(x) for x in new_cos), tuple(float(x) for x in new_sin))


@dataclass(frozen=True)
class CouplingSpec:
    """Interaction family plus strength; validated to stay a diffeomorphism.

    The admissibility check |eps| * sup_mu Lip(G_mu) <= 0.5 uses analytic
    coefficient bounds on the kernels (trigonometric moments of a probability
    measure are bounded by the kernel sup), so it holds for every mu.
    """

    kind: str
    eps: float
    k1: TrigField2 | None = None
    k2: TrigField2 | None = None
    kappa: TrigField2 | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "separable" and (self.k1 is None or self.k2 is None):
            raise ValueError("separable coupling requires k1 and k2 kernels")
        if self.kind == "convolution" and self.kappa is None:
            raise ValueError("convolution coupling requires a kappa kernel")
        bound = abs(self.eps) * self.lip_bound()
        if bound > ADMISSIBLE_EPS_LIP:
            raise CouplingAdmissibilityError(
                f"|eps|*Lip(G) bound {bound:.4f} exceeds {ADMISSIBLE_EPS_LIP}; "
                "interaction may not invert"
            )

    def lip_bound(self) -> float:
        """Analytic bound on sup over probability measures of Lip(G_mu)."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "separable":
            du0, du1, dv0, dv1 = self.k1._partials
            return max(
                self.k2.u.sup_bound() * (du0.sup_bound() + du1.sup_bound()),
                self.k2.v.sup_bound() * (dv0.sup_bound() + dv1.sup_bound()),
            )
        return self.kappa.lip_inf_bound()

    def field_sup_bound(self) -> float:
        """Analytic bound on sup_mu sup_x |G_mu(x)| per component."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "separable":
            return max(
                self.k1.u.sup_bound() * self.k2.u.sup_bound(),
                self.k1.v.sup_bound() * self.k2.v.sup_bound(),
            )
        return self.kappa.sup_bound()

    def with_eps(self, eps: float) -> "CouplingSpec":
        return dataclasses.replace(self, eps=eps)

    @cached_property
    def is_trivial(self) -> bool:
        return self.kind == "zero" or self.eps == 0.0

    def reduce(self, mu) -> TrigField2:
        """The interaction field G_mu as an explicit trigonometric field.

        This is the once-per-measure reduction; the result caches the measure
        moments in its coefficients and is value-semantic (recompute when mu
        changes).
        """
        if self.kind == "zero":
            return TrigField2.zero()
        if self.kind == "separable":
            cu = measure_mean(mu, self.k2.u)
            cv = measure_mean(mu, self.k2.v)
            return TrigField2(self.k1.u.scaled(cu), self.k1.v.scaled(cv))
        return TrigField2(_convolved(self.kappa.u, mu), _convolved(self.kappa.v, mu))

    def to_config(self) -> dict:
        cfg = {"kind": self.kind, "eps": self.eps}
        if self.k1 is not None:
            cfg["k1"] = self.k1.to_terms()
        if self.k2 is not None:
            cfg["k2"] = self.k2.to_terms()
        if self.kappa is not None:
            cfg["kappa"] = self.kappa.to_terms()
        return cfg

    @staticmethod
    def from_config(cfg: dict) -> "CouplingSpec":
        def field(key):
            return TrigField2.from_terms(cfg[key]) if key in cfg else None

        return CouplingSpec(
            kind=cfg["kind"],
            eps=float(cfg.get("eps", 0.0)),
            k1=field("k1"),
            k2=field("k2"),
            kappa=field("kappa"),
        )


def zero_coupling(eps: float = 0.0) -> CouplingSpec:
    return CouplingSpec(kind="zero", eps=eps)


def example_separable_coupling(eps: float) -> CouplingSpec:
    """Default separable pair with an active mean field.

    K1 = 0.8 (sin 2pi v, sin 2pi u); K2 = (0.5 + cos 2pi u, 0.5 + cos 2pi v).
    The constant part of K2 keeps the interaction strength O(eps) at
    equilibrium (a purely mean-zero K2 against this map's near-Lebesgue
    equilibrium produces a displacement below the grid quantization, which
    would make strength sweeps degenerate); the cosine part carries the
    self-consistent measure dependence.  Admissible through |eps| <= 0.066.
    """
    k1 = TrigField2.from_terms({"u": [{"k": [0, 1], "sin": 0.8}], "v": [{"k": [1, 0], "sin": 0.8}]})
    k2 = TrigField2.from_terms(
        {
            "u": [{"k": [0, 0], "cos": 0.5}, {"k": [1, 0], "cos": 1.0}],
            "v": [{"k": [0, 0], "cos": 0.5}, {"k": [0, 1], "cos": 1.0}],
        }
    )
    return CouplingSpec(kind="separable", eps=eps, k1=k1, k2=k2)


def meanzero_separable_coupling(eps: float) -> CouplingSpec:
    """Separable pair whose K2 integrates to zero against Lebesgue.

    K1 = (sin 2pi v, sin 2pi u), K2 = (cos 2pi u, cos 2pi v): the interaction
    vanishes identically when driven by the uniform density, giving the
    closed-form fixed-point checks.
    """
    k1 = TrigField2.from_terms({"u": [{"k": [0, 1], "sin": 1.0}], "v": [{"k": [1, 0], "sin": 1.0}]})
    k2 = TrigField2.from_terms({"u": [{"k": [1, 0], "cos": 1.0}], "v": [{"k": [0, 1], "cos": 1.0}]})
    return CouplingSpec(kind="separable", eps=eps, k1=k1, k2=k2)


def example_convolution_coupling(eps: float, scale: float = 0.5) -> CouplingSpec:
    """Diffusive-style kernel kappa = scale * (sin 2pi u, sin 2pi v)."""
    kappa = TrigField2.from_terms(
        {"u": [{"k": [1, 0], "sin": scale}], "v": [{"k": [0, 1], "sin": scale}]}
    )
    return CouplingSpec(kind="convolution", eps=eps, kappa=kappa)


def coupling_field(spec: CouplingSpec, mu, x) -> np.ndarray:
    """G_mu evaluated at x; Phi(x) = x + eps * G_mu(x) mod 1."""
    return spec.reduce(mu)(np.asarray(x, dtype=float))


def apply_phi(spec: CouplingSpec, mu, x) -> np.ndarray:
    p = np.asarray(x, dtype=float)
    if spec.is_trivial:
        return wrap(p)
    return wrap(p + spec.eps * spec.reduce(mu)(p))


def invert_phi(spec: CouplingSpec, mu, y) -> np.ndarray:
    if spec.is_trivial:
        return wrap(np.asarray(y, dtype=float))
    return invert_phi_field(spec.reduce(mu), spec.eps, y)


def invert_phi_field(g: TrigField2, eps: float, y) -> np.ndarray:
    """Solve x + eps*G(x) = y by the contraction x <- y - eps*G(x)."""
    target = wrap(np.asarray(y, dtype=float))
    x = np.array(target)
    for _ in range(PHI_MAX_ITER):
        nxt = target - eps * g(x)
        step = np.max(np.abs(nxt - x))
        x = nxt
        if step < PHI_STEP_TOL:
            return wrap(x)
    raise NoConvergenceError(
        "interaction inverse iteration stalled; admissibility invariant violated"
    )


@dataclass(frozen=True, eq=False)
class CoupledMap:
    """x -> T(Phi_mu(x)) for a frozen driving measure; satisfies the map protocol."""

    base: "object"  # MapSpec-like: apply / lift / jacobian_at / invert / eigenvector
    coupling: CouplingSpec
    mu: "object"

    @cached_property
    def field(self) -> TrigField2:
        return self.coupling.reduce(self.mu)

    def apply(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        if self.coupling.is_trivial:
            return self.base.apply(p)
        return self.base.apply(wrap(p + self.coupling.eps * self.field(p)))

    def jacobian_at(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        if self.coupling.is_trivial:
            return self.base.jacobian_at(p)
        phi = wrap(p + self.coupling.eps * self.field(p))
        eye = np.broadcast_to(np.eye(2), p.shape[:-1] + (2, 2))
        dphi = eye + self.coupling.eps * self.field.jacobian(p)
        return self.base.jacobian_at(phi) @ dphi

    def invert(self, points: np.ndarray) -> np.ndarray:
        mid = self.base.invert(points)
        if self.coupling.is_trivial:
            return mid
        return invert_phi_field(self.field, self.coupling.eps, mid)

    def eigenvector(self, stable: bool) -> np.ndarray:
        return self.base.eigenvector(stable)


@dataclass(frozen=True)
class AssumptionReport:
    """Empirical constants for the two coupling regularity assumptions."""

    a1_constant: float
    a2_constant: float
    pair_count: int
    max_ratio: float


def _c2_norm(field: TrigField2, pts: np.ndarray) -> float:
    """Sampled C^2-style size of a field: sup of values and first/second derivatives.

    Unit weights on every derivative order; derivatives are analytic in the
    trigonometric coefficients.  Second order uses the three distinct partials
    per component.
    """
    total = float(np.max(np.abs(field(pts)), initial=0.0))
    total += float(np.max(np.abs(field.jacobian(pts)), initial=0.0))
    worst2 = 0.0
    for comp in (field.u, field.v):
        for ax1 in (0, 1):
            d1 = comp.partial(ax1)
            for ax2 in range(ax1, 2):
                vals = d1.partial(ax2)(pts)
                worst2 = max(worst2, float(np.max(np.abs(vals), initial=0.0)))
    return total + worst2


def certify_assumptions(
    spec: CouplingSpec,
    pairs,
    eps_pairs,
    sample_grid: int = 48,
) -> AssumptionReport:
    """Estimate the measure- and strength-Lipschitz constants of the interaction.

    For each measure pair (mu1, mu2) the first ratio compares the sampled C^2
    distance of the two interactions against |eps| * L1(mu1 - mu2) (density
    pairs only; the L1 distance of raw ensembles is not defined here).  For
    each strength pair the second ratio divides by |eps - eps'| instead.
    """
    pairs = list(pairs)
    eps_pairs = list(eps_pairs)
    if not pairs or not eps_pairs:
        raise ValueError("pairs and eps_pairs must be nonempty")
    from .torus import l1_distance  # local import to avoid cycle at module load

    c = (np.arange(sample_grid) + 0.5) / sample_grid
    pts = np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1).reshape(-1, 2)

    a1 = 0.0
    for mu1, mu2 in pairs:
        g1 = spec.reduce(mu1)
        g2 = spec.reduce(mu2)
        diff = TrigField2(
            TrigPolynomial(
                g1.u.modes,
                tuple(a - b for a, b in zip(g1.u.cos_coeffs, g2.u.cos_coeffs)),
                tuple(a - b for a, b in zip(g1.u.sin_coeffs, g2.u.sin_coeffs)),
            ),
            TrigPolynomial(
                g1.v.modes,
                tuple(a - b for a, b in zip(g1.v.cos_coeffs, g2.v.cos_coeffs)),
                tuple(a - b for a, b in zip(g1.v.sin_coeffs, g2.v.sin_coeffs)),
            ),
        )
        numer = abs(spec.eps) * _c2_norm(diff, pts)
        if numer == 0.0:
            continue
        if hasattr(mu1, "cells") and hasattr(mu2, "cells"):
            denom = abs(spec.eps) * l1_distance(mu1, mu2)
            if denom > 0.0:
                a1 = max(a1, numer / denom)

    a2 = 0.0
    for e1, e2 in eps_pairs:
        if e1 == e2:
            continue
        for mu, _ in pairs:
            g = spec.reduce(mu)
            numer = abs(e1 - e2) * _c2_norm(g, pts)
            a2 = max(a2, numer / abs(e1 - e2))

    return AssumptionReport(
        a1_constant=a1,
        a2_constant=a2,
        pair_count=len(pairs) + len(eps_pairs),
        max_ratio=max(a1, a2),
    )
