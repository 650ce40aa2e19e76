"""The nonlinear self-consistent density evolution and its headline experiments.

One step evolves a density by the coupled operator driven by the density
itself.  On top of that single step this module implements the experiments
the laboratory exists for: fixed-point solving with a fitted convergence
rate, uniqueness across initial conditions, Lipschitz dependence of the
fixed point on the coupling strength, memory loss under shared driving
sequences, and the bounded-variation absorption diagnostic.

For eps = 0 (or the zero interaction) every operation here degenerates to
plain linear transfer-operator iteration and produces bitwise identical
output to driving the transfer module directly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .anosov import MapSpec
from .coupling import CouplingSpec
from .torus import TorusDensity, l1_distance, proxy_strong_norm
from .transfer import CoupledOperatorPlan, UlamOperator, apply_coupled, build_ulam
from .trig import TrigPolynomial
from .util import fit_log_linear

RATE_R2_GATE = 0.9  # rates are withheld below this fit quality


@lru_cache(maxsize=4)
def base_operator(map_spec: MapSpec, n: int, s: int) -> UlamOperator:
    """Site-map Ulam matrix, built once per (map, resolution, quadrature)."""
    return build_ulam(map_spec, n, s)


@dataclass(frozen=True, eq=False)
class SelfConsistentConfig:
    map: MapSpec
    coupling: CouplingSpec
    resolution: int = 256
    quadrature: int = 4
    tol_fix: float = 1e-10
    max_iterations: int = 10_000
    rate_window: int = 30

    def __post_init__(self):
        if self.tol_fix <= 0.0:
            raise ValueError("tol_fix must be positive")
        if self.rate_window < 5:
            raise ValueError("rate window must be >= 5")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.resolution < 2 or (self.resolution & (self.resolution - 1)) != 0:
            raise ValueError("resolution must be a power of two")
        if self.quadrature < 2:
            raise ValueError("quadrature order must be >= 2")

    def base(self) -> UlamOperator:
        return base_operator(self.map, self.resolution, self.quadrature)

    def plan(self, g) -> CoupledOperatorPlan:
        return CoupledOperatorPlan(base=self.base(), coupling=self.coupling, g=g)

    def with_eps(self, eps: float) -> "SelfConsistentConfig":
        return dataclasses.replace(self, coupling=self.coupling.with_eps(eps))

    def with_resolution(self, n: int) -> "SelfConsistentConfig":
        return dataclasses.replace(self, resolution=n)


def sc_step(cfg: SelfConsistentConfig, h: TorusDensity) -> TorusDensity:
    """One application of the self-consistent operator (driving measure = h)."""
    return apply_coupled(cfg.plan(h), h)


@dataclass(frozen=True)
class ConvergenceReport:
    iterations: int
    final_residual: float
    converged: bool
    gamma: float | None  # withheld (None) when the tail fit has R^2 below the gate
    r_squared: float
    residuals: tuple[float, ...]
    proxy_bv: tuple[float, ...]  # proxy strong norm of every iterate, h0 first


def solve_fixed_point(cfg: SelfConsistentConfig, h0: TorusDensity):
    """Iterate sc_step until the L1 residual drops below tol_fix.

    Returns (density, report).  On hitting max_iterations the report carries
    converged=False and the last iterate is returned uncertified.
    """
    if h0.n != cfg.resolution:
        raise ValueError(f"initial density resolution {h0.n} != config {cfg.resolution}")
    h = h0
    residuals: list[float] = []
    proxies: list[float] = [proxy_strong_norm(h0)]
    converged = False
    for _ in range(cfg.max_iterations):
        nxt = sc_step(cfg, h)
        r = l1_distance(nxt, h)
        residuals.append(r)
        proxies.append(proxy_strong_norm(nxt))
        h = nxt
        if r < cfg.tol_fix:
            converged = True
            break
    gamma, r2 = fit_log_linear(residuals, window=cfg.rate_window)
    if gamma is not None and r2 < RATE_R2_GATE:
        gamma = None
    report = ConvergenceReport(
        iterations=len(residuals),
        final_residual=residuals[-1] if residuals else float("nan"),
        converged=converged,
        gamma=gamma,
        r_squared=r2,
        residuals=tuple(residuals),
        proxy_bv=tuple(proxies),
    )
    return h, report


@dataclass(frozen=True)
class UniquenessReport:
    distances: np.ndarray  # pairwise L1 distances between limits
    max_distance: float
    conclusive: bool  # False when any run failed to converge
    reports: tuple[ConvergenceReport, ...]
    limits: tuple[TorusDensity, ...]


def uniqueness_experiment(cfg: SelfConsistentConfig, inits) -> UniquenessReport:
    """Run the fixed-point solver from several initial densities and compare limits."""
    inits = list(inits)
    if len(inits) < 2:
        raise ValueError("need at least two initial densities")
    limits, reports = [], []
    for h0 in inits:
        h, rep = solve_fixed_point(cfg, h0)
        limits.append(h)
        reports.append(rep)
    k = len(limits)
    dist = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            dist[i, j] = dist[j, i] = l1_distance(limits[i], limits[j])
    return UniquenessReport(
        distances=dist,
        max_distance=float(dist.max()),
        conclusive=all(r.converged for r in reports),
        reports=tuple(reports),
        limits=tuple(limits),
    )


@dataclass(frozen=True)
class SweepReport:
    eps_grid: tuple[float, ...]
    l1_diffs: tuple[float, ...]  # adjacent-pair distances, nan where uncertified
    ratios: tuple[float, ...]  # l1_diff / eps spacing, nan where uncertified
    max_ratio: float
    failures: tuple[int, ...]  # grid indices whose solve did not converge
    reports: tuple[ConvergenceReport, ...]
    fixed_points: tuple[TorusDensity, ...]


def lipschitz_sweep(cfg: SelfConsistentConfig, eps_grid, h0: TorusDensity | None = None) -> SweepReport:
    """Solve the fixed point along a strictly increasing strength grid.

    Each solve warm-starts from the previous fixed point; adjacent difference
    ratios estimate the Lipschitz constant of eps -> h_eps.  Ratios are only
    formed over pairs whose both endpoints converged.
    """
    grid = [float(e) for e in eps_grid]
    if len(grid) < 2 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("eps grid must be strictly increasing with at least two points")
    h = h0 if h0 is not None else TorusDensity.uniform(cfg.resolution)
    points, reports, failures = [], [], []
    for i, eps in enumerate(grid):
        cfg_eps = cfg.with_eps(eps)
        h, rep = solve_fixed_point(cfg_eps, h)
        points.append(h)
        reports.append(rep)
        if not rep.converged:
            failures.append(i)
    diffs, ratios = [], []
    for i in range(len(grid) - 1):
        if i in failures or (i + 1) in failures:
            diffs.append(float("nan"))
            ratios.append(float("nan"))
            continue
        d = l1_distance(points[i], points[i + 1])
        diffs.append(d)
        ratios.append(d / (grid[i + 1] - grid[i]))
    finite = [r for r in ratios if np.isfinite(r)]
    return SweepReport(
        eps_grid=tuple(grid),
        l1_diffs=tuple(diffs),
        ratios=tuple(ratios),
        max_ratio=max(finite) if finite else float("nan"),
        failures=tuple(failures),
        reports=tuple(reports),
        fixed_points=tuple(points),
    )


@dataclass(frozen=True)
class MemoryLossReport:
    decay: tuple[float, ...]  # L1 difference per step, step 0 first
    theta: float | None
    r_squared: float


def memory_loss_experiment(
    cfg: SelfConsistentConfig,
    driving,
    h1: TorusDensity,
    h2: TorusDensity,
    fit_floor: float = 1e-13,
) -> MemoryLossReport:
    """Push two unit-mass densities through the same driving sequence.

    The difference has mean zero, so its L1 norm should decay exponentially;
    theta is fitted on the recorded curve above `fit_floor` (stops the fit from
    chasing the discretization noise floor).
    """
    a, b = h1, h2
    decay = [l1_distance(a, b)]
    for g in driving:
        plan = cfg.plan(g)
        a = apply_coupled(plan, a)
        b = apply_coupled(plan, b)
        decay.append(l1_distance(a, b))
    usable = [d for d in decay if d > fit_floor]
    theta, r2 = fit_log_linear(usable if len(usable) >= 3 else decay)
    if theta is not None and r2 < RATE_R2_GATE:
        theta = None
    return MemoryLossReport(decay=tuple(decay), theta=theta, r_squared=r2)


@dataclass(frozen=True)
class BkReport:
    proxy_trajectory: tuple[float, ...]
    plateau_level: float  # max over the tail window
    absorbed: bool


def absorption_verdict(values, tail: int = 20, blowup_factor: float = 10.0) -> tuple[bool, float]:
    """Whether a proxy-norm trajectory enters and stays below a plateau.

    Not absorbed when the trajectory ever grows past blowup_factor times its
    start, or when the tail has not flattened (tail max >= 1.1 * tail min).
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("trajectory must be nonempty")
    tail_vals = v[-min(tail, v.size):]
    plateau = float(tail_vals.max())
    if v.max() > blowup_factor * v[0]:
        return False, plateau
    flat = tail_vals.max() < 1.1 * tail_vals.min()
    return bool(flat), plateau


def bk_diagnostic(trajectory, tail: int = 20) -> BkReport:
    """Proxy strong norm along a density trajectory plus the absorption verdict."""
    trajectory = list(trajectory)
    if not trajectory:
        raise ValueError("trajectory must be nonempty")
    proxies = [proxy_strong_norm(h) for h in trajectory]
    absorbed, plateau = absorption_verdict(proxies, tail=tail)
    return BkReport(proxy_trajectory=tuple(proxies), plateau_level=plateau, absorbed=absorbed)


def smooth_init_family(n: int, count: int = 5) -> list[TorusDensity]:
    """Deterministic family of distinct smooth unit-mass initial densities."""
    recipes = [
        TorusDensity.from_trig(TrigPolynomial(((1, 0),), (0.9,), (0.0,)), n),
        TorusDensity.from_trig(TrigPolynomial(((0, 1),), (0.0,), (0.9,)), n),
        TorusDensity.from_trig(TrigPolynomial(((1, 1), (1, 0)), (0.5, 0.0), (0.0, 0.3)), n),
        TorusDensity.bump((0.3, 0.7), 0.15, n),
        TorusDensity.from_function(
            lambda p: (1.0 + 0.7 * np.cos(2 * np.pi * p[..., 0]))
            * (1.0 + 0.7 * np.cos(2 * np.pi * p[..., 1])),
            n,
        ),
    ]
    if count <= len(recipes):
        return recipes[:count]
    rng = np.random.default_rng(2024)
    while len(recipes) < count:
        recipes.append(random_smooth_density(n, rng))
    return recipes


def random_smooth_density(
    n: int, rng: np.random.Generator, max_mode: int = 2, amplitude: float = 0.6
) -> TorusDensity:
    """1 + random low modes with total amplitude <= amplitude (stays positive)."""
    modes = [
        (k1, k2)
        for k1 in range(-max_mode, max_mode + 1)
        for k2 in range(max_mode + 1)
        if (k2 > 0 or k1 > 0)
    ]
    raw_c = rng.normal(size=len(modes))
    raw_s = rng.normal(size=len(modes))
    norm = np.sum(np.hypot(raw_c, raw_s))
    scale = amplitude / norm if norm > 0 else 0.0
    poly = TrigPolynomial(
        tuple(modes), tuple(scale * raw_c), tuple(scale * raw_s)
    )
    return TorusDensity.from_trig(poly, n)
