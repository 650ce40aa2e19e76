"""Finite-N particle realization of the mean-field dynamics.

Each step moves every particle by the site map composed with the interaction
computed from the pre-step empirical measure (synchronous update: the
mean-field term is frozen once per step).  The dynamics itself is
deterministic; randomness enters only when an initial ensemble is drawn,
through a counter-based generator keyed by the seed, so identical
(seed, config) pairs reproduce trajectories bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .anosov import MapSpec
from .coupling import CouplingSpec
from .torus import Observable, TorusDensity, cell_index, integrate, wrap
from .util import fit_log_log_slope, tree_sum


@dataclass(frozen=True, eq=False)
class Ensemble:
    """N particle positions plus the seed and step counter that produced them."""

    positions: np.ndarray  # (N, 2) in [0,1)
    seed: int
    step: int = 0

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] < 1:
            raise ValueError("positions must be a (N, 2) array with N >= 1")
        pos = wrap(pos)
        pos.flags.writeable = False
        object.__setattr__(self, "positions", pos)

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]


def _generator(seed: int, stream: tuple[int, ...] = ()) -> np.random.Generator:
    """Counter-based stream: key = (seed, packed stream id), order independent."""
    packed = 0
    for part in stream:
        packed = (packed << 20) ^ (int(part) & 0xFFFFF)
    return np.random.Generator(np.random.Philox(key=[np.uint64(seed), np.uint64(packed)]))


def sample_from_density(h0: TorusDensity, n_particles: int, seed: int, stream: tuple[int, ...] = ()) -> Ensemble:
    """Draw an i.i.d. ensemble from a grid density by inverse CDF on the cells.

    The flattened cell masses give the categorical part exactly (no rejection
    variance); two more uniforms place each particle inside its cell.
    """
    rng = _generator(seed, stream)
    n = h0.n
    masses = h0.cells.ravel() / (n * n)
    cum = np.cumsum(masses)
    cum /= cum[-1]
    u = rng.random(n_particles)
    cells = np.searchsorted(cum, u, side="right")
    np.minimum(cells, n * n - 1, out=cells)
    iu, iv = np.divmod(cells, n)
    offsets = rng.random((n_particles, 2))
    pos = np.stack([(iu + offsets[:, 0]) / n, (iv + offsets[:, 1]) / n], axis=-1)
    return Ensemble(positions=pos, seed=seed, step=0)


def step_ensemble(map_spec: MapSpec, coupling: CouplingSpec, ens: Ensemble) -> Ensemble:
    """Synchronous update x_i -> T(Phi(x_i, empirical measure)).

    The interaction field is reduced once from the pre-step positions (sorted
    pairwise-tree reduction, so particle order cannot leak into the result),
    then every particle moves with that frozen field.
    """
    pos = ens.positions
    if coupling.is_trivial:
        moved = map_spec.apply(pos)
    else:
        g = coupling.reduce(ens)
        moved = map_spec.apply(wrap(pos + coupling.eps * g(pos)))
    return Ensemble(positions=moved, seed=ens.seed, step=ens.step + 1)


def empirical_observable(ens: Ensemble, phi: Observable) -> float:
    """(1/N) sum phi(x_i), reduced in sorted order for exchangeability."""
    pos = ens.positions
    order = np.lexsort((pos[:, 1], pos[:, 0]))
    return float(tree_sum(phi(pos[order]))) / ens.n_particles


def histogram_ensemble(ens: Ensemble, n: int) -> TorusDensity:
    """Cell-count density estimate of the empirical measure on the n x n grid."""
    counts = np.bincount(cell_index(ens.positions, n), minlength=n * n)
    cells = counts.astype(float).reshape(n, n) * (n * n / ens.n_particles)
    return TorusDensity.from_cells(cells, normalize=True)


@dataclass(frozen=True)
class GapReport:
    """Observable discrepancy between the particle system and the density run."""

    observable_names: tuple[str, ...]
    n_values: tuple[int, ...]
    gap_mean: np.ndarray  # (len(n_values), len(observables))
    gap_std: np.ndarray
    slopes: tuple[float, ...]  # fitted log-gap vs log-N slope per observable

    def __post_init__(self):
        ns = self.n_values
        if len(ns) < 3 or any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("need at least 3 strictly increasing N values")


def meanfield_gap(
    map_spec: MapSpec,
    coupling: CouplingSpec,
    h0: TorusDensity,
    n_values,
    steps: int,
    observables,
    trials: int,
    seed: int = 0,
    quadrature: int = 4,
) -> GapReport:
    """Compare finite-N empirical observables against the density evolution.

    For each ensemble size, `trials` independent ensembles are drawn from h0
    and evolved for `steps`; the density is evolved once by the
    self-consistent step at the resolution of h0.  Gaps are averaged over
    trials and the per-observable decay exponent in N is fitted on the means.
    """
    from .meanfield import SelfConsistentConfig, sc_step  # deferred: avoids module cycle

    n_values = [int(x) for x in n_values]
    observables = list(observables)
    cfg = SelfConsistentConfig(
        map=map_spec,
        coupling=coupling,
        resolution=h0.n,
        quadrature=quadrature,
        tol_fix=1e-300,  # fixed step count; the solver tolerance is unused here
        max_iterations=max(steps, 1),
    )
    h = h0
    for _ in range(steps):
        h = sc_step(cfg, h)
    targets = [integrate(h, phi) for phi in observables]

    gap_mean = np.empty((len(n_values), len(observables)))
    gap_std = np.empty_like(gap_mean)
    for i, n_part in enumerate(n_values):
        gaps = np.empty((trials, len(observables)))
        for t in range(trials):
            ens = sample_from_density(h0, n_part, seed, stream=(i, t))
            for _ in range(steps):
                ens = step_ensemble(map_spec, coupling, ens)
            for j, phi in enumerate(observables):
                gaps[t, j] = abs(empirical_observable(ens, phi) - targets[j])
        gap_mean[i] = gaps.mean(axis=0)
        gap_std[i] = gaps.std(axis=0)

    slopes = []
    for j in range(len(observables)):
        means = gap_mean[:, j]
        if np.all(means > 0.0):
            slopes.append(fit_log_log_slope(n_values, means))
        else:
            slopes.append(float("nan"))
    return GapReport(
        observable_names=tuple(phi.name for phi in observables),
        n_values=tuple(n_values),
        gap_mean=gap_mean,
        gap_std=gap_std,
        slopes=tuple(slopes),
    )
