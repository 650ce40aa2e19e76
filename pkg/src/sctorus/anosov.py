"""Hyperbolic torus maps: evaluation, derivatives, inversion, cone certification.

A map is a hyperbolic integer matrix plus a small trigonometric displacement,
T(x) = A x + delta * p(x) mod 1.  Hyperbolicity of concatenations (including
coupled perturbations supplied by other modules through the same protocol)
is certified empirically: sampled Jacobian products must keep a stable cone
strictly invariant, and the expansion/contraction rates are fitted from the
observed growth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Protocol

import numpy as np

from .errors import ConeViolationError, NoConvergenceError
from .trig import TrigField2
from .torus import wrap
from .util import fit_log_linear

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
# Lifts of torus maps shift fundamental domains; Newton retries the seed
# over the 9 neighboring integer translates before giving up.
_TRANSLATES = np.array([[i, j] for i in (0, -1, 1) for j in (0, -1, 1)], dtype=float)


class TorusMap(Protocol):
    """Anything the cone certifier can differentiate and invert."""

    def apply(self, points: np.ndarray) -> np.ndarray: ...

    def jacobian_at(self, points: np.ndarray) -> np.ndarray: ...

    def invert(self, points: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class MapSpec:
    """T(x) = A x + delta * p(x) mod 1 with |trace A| > 2, det A = +/-1."""

    matrix: tuple[tuple[int, int], tuple[int, int]] = ((2, 1), (1, 1))
    delta: float = 0.0
    perturbation: TrigField2 = field(default_factory=TrigField2.zero)

    def __post_init__(self):
        try:
            rows = list(self.matrix)
            if len(rows) != 2 or any(len(list(r)) != 2 for r in rows):
                raise ValueError
            ints = tuple(tuple(int(x) for x in row) for row in rows)
            if any(ints[i][j] != rows[i][j] for i in range(2) for j in range(2)):
                raise ValueError
        except (TypeError, ValueError):
            raise ValueError("matrix must be a 2x2 integer matrix") from None
        object.__setattr__(self, "matrix", ints)
        a = np.asarray(self.matrix, dtype=int)
        det = int(round(np.linalg.det(a)))
        if abs(det) != 1:
            raise ValueError(f"matrix determinant must be +/-1, got {det}")
        tr = abs(a[0, 0] + a[1, 1])
        if tr <= 2:
            raise ValueError(f"|trace| must exceed 2 for hyperbolicity, got {tr}")
        if self.delta < 0.0:
            raise ValueError("delta must be nonnegative")
        if self.delta > 0.0:
            # Sampled check that delta*Dp stays below half the spectral gap of A,
            # which keeps T a diffeomorphism with the same cone family.
            grid = np.stack(
                np.meshgrid(np.linspace(0, 1, 64, endpoint=False), np.linspace(0, 1, 64, endpoint=False), indexing="ij"),
                axis=-1,
            ).reshape(-1, 2)
            dp = self.perturbation.jacobian(grid)
            worst = float(np.max(np.linalg.norm(dp, ord=2, axis=(1, 2))))
            if self.delta * worst >= 0.5 * self.spectral_gap:
                raise ValueError(
                    f"delta*sup|Dp| = {self.delta * worst:.4f} reaches half the spectral gap "
                    f"{0.5 * self.spectral_gap:.4f}; map may fail to be a diffeomorphism"
                )

    @cached_property
    def _a(self) -> np.ndarray:
        return np.asarray(self.matrix, dtype=float)

    @cached_property
    def _a_inv(self) -> np.ndarray:
        return np.linalg.inv(self._a)

    @cached_property
    def eigenvalues(self) -> tuple[float, float]:
        """(expanding, contracting) eigenvalues of the linear part, by modulus."""
        w = np.linalg.eigvals(self._a)
        w = sorted((float(x.real) for x in w), key=abs, reverse=True)
        return w[0], w[1]

    @cached_property
    def spectral_gap(self) -> float:
        lam, nu = self.eigenvalues
        return abs(lam) - abs(nu)

    def eigenvector(self, stable: bool) -> np.ndarray:
        vals, vecs = np.linalg.eig(self._a)
        order = np.argsort(np.abs(vals))
        idx = order[0] if stable else order[1]
        v = np.real(vecs[:, idx])
        return v / np.linalg.norm(v)

    def apply(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        out = p @ self._a.T
        if self.delta != 0.0:
            out = out + self.delta * self.perturbation(p)
        return wrap(out)

    def lift(self, points: np.ndarray) -> np.ndarray:
        """The lift A x + delta p(x) without the final mod-1 reduction."""
        p = np.asarray(points, dtype=float)
        out = p @ self._a.T
        if self.delta != 0.0:
            out = out + self.delta * self.perturbation(p)
        return out

    def jacobian_at(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        base = np.broadcast_to(self._a, p.shape[:-1] + (2, 2))
        if self.delta == 0.0:
            return np.array(base)
        return base + self.delta * self.perturbation.jacobian(p)

    def invert(self, points: np.ndarray) -> np.ndarray:
        y = wrap(np.asarray(points, dtype=float))
        single = y.ndim == 1
        y2 = y.reshape(-1, 2)
        if self.delta == 0.0:
            x = wrap(y2 @ self._a_inv.T)
            return x[0] if single else x.reshape(np.asarray(points).shape)
        x = np.empty_like(y2)
        pending = np.arange(len(y2))
        for shift in _TRANSLATES:
            seed = (y2[pending] + shift) @ self._a_inv.T
            sol, ok = self._newton(seed, y2[pending])
            x[pending[ok]] = sol[ok]
            pending = pending[~ok]
            if pending.size == 0:
                break
        if pending.size:
            raise NoConvergenceError(
                f"Newton inversion failed for {pending.size} point(s); "
                "delta may be too large for this map"
            )
        out = wrap(x)
        return out[0] if single else out.reshape(np.asarray(points).shape)

    def _newton(self, seed: np.ndarray, target: np.ndarray):
        x = np.array(seed)
        for _ in range(NEWTON_MAX_ITER):
            r = self.lift(x) - target
            r -= np.round(r)  # wrap residual to the nearest integer translate
            if np.max(np.abs(r)) < NEWTON_TOL:
                break
            jac = self.jacobian_at(x)
            x = x - np.linalg.solve(jac, r[..., None])[..., 0]
        r = self.lift(x) - target
        r -= np.round(r)
        return x, np.max(np.abs(r), axis=-1) < NEWTON_TOL

    def to_config(self) -> dict:
        return {
            "matrix": [list(row) for row in self.matrix],
            "delta": self.delta,
            "perturbation": self.perturbation.to_terms(),
        }

    @staticmethod
    def from_config(cfg: dict) -> "MapSpec":
        return MapSpec(
            matrix=tuple(tuple(int(x) for x in row) for row in cfg.get("matrix", ((2, 1), (1, 1)))),
            delta=float(cfg.get("delta", 0.0)),
            perturbation=TrigField2.from_terms(cfg.get("perturbation", {})),
        )


def default_cat_map(delta: float = 0.01) -> MapSpec:
    """Arnold cat matrix with the standard analytic displacement (sin 2pi v, sin 2pi u)."""
    p = TrigField2.from_terms(
        {"u": [{"k": [0, 1], "sin": 1.0}], "v": [{"k": [1, 0], "sin": 1.0}]}
    )
    return MapSpec(matrix=((2, 1), (1, 1)), delta=delta, perturbation=p)


def apply_map(spec: MapSpec, x) -> np.ndarray:
    return spec.apply(np.asarray(x, dtype=float))


def jacobian(spec: MapSpec, x) -> np.ndarray:
    return spec.jacobian_at(np.asarray(x, dtype=float))


def invert_map(spec: MapSpec, y) -> np.ndarray:
    return spec.invert(np.asarray(y, dtype=float))


@dataclass(frozen=True)
class ConeSpec:
    """Closed cone of half-angle around the stable axis; must exclude the unstable axis."""

    stable_axis: tuple[float, float]
    half_angle: float

    def __post_init__(self):
        if not (0.0 < self.half_angle < np.pi / 4):
            raise ValueError("half_angle must lie in (0, pi/4)")
        v = np.asarray(self.stable_axis, dtype=float)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise ValueError("stable_axis must be nonzero")
        object.__setattr__(self, "stable_axis", (float(v[0] / norm), float(v[1] / norm)))

    @staticmethod
    def for_map(spec: MapSpec, half_angle_deg: float = 15.0) -> "ConeSpec":
        axis = spec.eigenvector(stable=True)
        cone = ConeSpec((float(axis[0]), float(axis[1])), np.deg2rad(half_angle_deg))
        unstable = spec.eigenvector(stable=False)
        if cone.contains(unstable):
            raise ValueError("cone contains the unstable eigendirection")
        return cone

    def contains(self, vectors: np.ndarray, strict: bool = False) -> np.ndarray:
        """Whether vectors lie in the cone (angle to the axis, up to sign)."""
        v = np.asarray(vectors, dtype=float)
        axis = np.asarray(self.stable_axis)
        dot = np.abs(v @ axis)
        cross = np.abs(v[..., 0] * axis[1] - v[..., 1] * axis[0])
        ang = np.arctan2(cross, dot)
        return ang < self.half_angle if strict else ang <= self.half_angle

    def boundary_rays(self) -> np.ndarray:
        """The two unit vectors at exactly the half-angle from the axis."""
        base = np.arctan2(self.stable_axis[1], self.stable_axis[0])
        angs = np.array([base - self.half_angle, base + self.half_angle])
        return np.stack([np.cos(angs), np.sin(angs)], axis=-1)


@dataclass(frozen=True)
class ConeReport:
    invariance_violations: int
    fitted_nu: float
    fitted_lambda: float
    fitted_c: float
    samples: int
    depth: int
    stable_norms: np.ndarray  # (samples, rays, depth+1) inverse-product growth
    unstable_norms: np.ndarray  # (samples, depth+1) forward-product growth

    def min_stable_expansion(self) -> np.ndarray:
        """Per-sample worst single-step growth of stable vectors under the inverse."""
        ratios = self.stable_norms[..., 1:] / self.stable_norms[..., :-1]
        return ratios.min(axis=(1, 2))

    def min_unstable_expansion(self) -> np.ndarray:
        ratios = self.unstable_norms[..., 1:] / self.unstable_norms[..., :-1]
        return ratios.min(axis=-1)


def certify_cones(
    maps,
    cone: ConeSpec,
    samples: int,
    depth: int,
    seed: int = 0,
    strict: bool = False,
) -> ConeReport:
    """Sample Jacobian products along orbits of the concatenation and fit growth rates.

    Stable probes are the cone boundary rays pushed through inverse Jacobians
    (one inverse orbit per sample); each step must land strictly inside the
    cone.  The expansion probe is the unstable axis of the linear part pushed
    forward.  Rates are least-squares fits of log-growth over the tail half of
    the orbit; c is the smallest observed ratio against the fitted rates.
    """
    maps = list(maps)
    if not maps:
        raise ValueError("map sequence must be nonempty")
    if samples < 1 or depth < 1:
        raise ValueError("samples and depth must be >= 1")
    seq = [maps[k % len(maps)] for k in range(depth)]

    rng = np.random.default_rng(seed)
    xs = rng.random((samples, 2))
    rays = cone.boundary_rays()  # (2, 2)

    # Backward pass: inverse-orbit base points and inverse-Jacobian products.
    w = np.broadcast_to(rays, (samples, 2, 2)).copy()
    stable_norms = np.empty((samples, 2, depth + 1))
    stable_norms[..., 0] = 1.0
    violations = 0
    witness = None
    pts = xs.copy()
    for step, mp in enumerate(reversed(seq), start=1):
        prev = mp.invert(pts)
        jac = mp.jacobian_at(prev)  # D T(prev); its inverse is D T^{-1} at pts
        w = np.linalg.solve(jac[:, None, :, :], w[..., None])[..., 0]
        inside = cone.contains(w, strict=True)
        if not np.all(inside):
            bad = np.argwhere(~inside)
            violations += len(bad)
            if witness is None:
                i, r = bad[0]
                witness = (pts[i].copy(), w[i, r].copy(), step)
        stable_norms[..., step] = np.linalg.norm(w, axis=-1)
        pts = prev
    if strict and witness is not None:
        raise ConeViolationError(witness[0], witness[1], witness[2])

    # Forward pass along the unstable axis of the linear part.
    anchor = seq[0]
    u_axis = anchor.eigenvector(stable=False) if hasattr(anchor, "eigenvector") else None
    if u_axis is None:
        base = np.arctan2(cone.stable_axis[1], cone.stable_axis[0]) + np.pi / 2
        u_axis = np.array([np.cos(base), np.sin(base)])
    u = np.broadcast_to(u_axis, (samples, 2)).copy()
    unstable_norms = np.empty((samples, depth + 1))
    unstable_norms[:, 0] = 1.0
    pts = xs.copy()
    for step, mp in enumerate(seq, start=1):
        jac = mp.jacobian_at(pts)
        u = (jac @ u[..., None])[..., 0]
        unstable_norms[:, step] = np.linalg.norm(u, axis=-1)
        pts = mp.apply(pts)

    window = max(3, depth // 2 + 1)
    nu_rates = []
    for i in range(samples):
        for r in range(2):
            rate, _ = fit_log_linear(stable_norms[i, r], window=window)
            if rate is not None:
                nu_rates.append(1.0 / rate)  # inverse growth nu^-n
    lam_rates = []
    for i in range(samples):
        rate, _ = fit_log_linear(unstable_norms[i], window=window)
        if rate is not None:
            lam_rates.append(rate)
    fitted_nu = float(np.median(nu_rates)) if nu_rates else float("nan")
    fitted_lambda = float(np.median(lam_rates)) if lam_rates else float("nan")

    steps = np.arange(depth + 1)
    c_stable = np.min(stable_norms * fitted_nu**steps)
    c_unstable = np.min(unstable_norms / np.maximum(fitted_lambda, 1.0) ** steps)
    fitted_c = float(min(1.0, c_stable, c_unstable))

    return ConeReport(
        invariance_violations=violations,
        fitted_nu=fitted_nu,
        fitted_lambda=fitted_lambda,
        fitted_c=fitted_c,
        samples=samples,
        depth=depth,
        stable_norms=stable_norms,
        unstable_norms=unstable_norms,
    )
