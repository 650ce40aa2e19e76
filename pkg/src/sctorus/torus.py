"""Geometry of the unit 2-torus and cell-averaged probability densities.

The canonical state is piecewise constant on an n x n dyadic grid: cell
values are density values (cell measure 1/n^2), so the uniform density is
identically 1 and the mass constraint is mean(cells) == 1.  A piecewise
constant representation keeps push-forwards positivity preserving, which
every downstream experiment asserts.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .trig import TrigPolynomial

MASS_TOL = 1e-12


def wrap(points: np.ndarray) -> np.ndarray:
    """Reduce coordinates mod 1 into [0, 1)."""
    p = np.asarray(points, dtype=float)
    return p - np.floor(p)


def torus_distance(p, q) -> float:
    """Flat metric: min over integer shifts of the Euclidean distance (<= sqrt(2)/2)."""
    d = np.abs(wrap(p) - wrap(q))
    d = np.minimum(d, 1.0 - d)
    return float(np.hypot(d[..., 0], d[..., 1])) if d.ndim > 1 else float(np.hypot(d[0], d[1]))


@lru_cache(maxsize=32)
def cell_centers(n: int) -> np.ndarray:
    """Midpoints of the n x n grid, shape (n, n, 2), axis 0 is u. Read-only."""
    c = (np.arange(n) + 0.5) / n
    grid = np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1)
    grid.flags.writeable = False
    return grid


def cell_index(points: np.ndarray, n: int) -> np.ndarray:
    """Flat (row-major) cell index of each point; guards the p*n == n rounding edge."""
    idx = np.floor(wrap(points) * n).astype(np.int64)
    np.minimum(idx, n - 1, out=idx)
    return idx[..., 0] * n + idx[..., 1]


def _check_power_of_two(n: int) -> None:
    if n < 1 or (n & (n - 1)) != 0:
        raise ValueError(f"resolution must be a power of two, got {n}")


@dataclass(frozen=True)
class TorusDensity:
    """Nonnegative cell-averaged density with unit mass on the n x n grid."""

    cells: np.ndarray

    def __post_init__(self):
        arr = np.array(self.cells, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("cells must be a square 2-d array")
        _check_power_of_two(arr.shape[0])
        if np.any(arr < 0.0):
            raise ValueError("density cells must be nonnegative")
        mass = arr.mean()
        if abs(mass - 1.0) > MASS_TOL:
            raise ValueError(f"density mass {mass!r} deviates from 1 by more than {MASS_TOL}")
        arr.flags.writeable = False
        object.__setattr__(self, "cells", arr)

    @property
    def n(self) -> int:
        return self.cells.shape[0]

    def mass(self) -> float:
        return float(self.cells.mean())

    @staticmethod
    def uniform(n: int) -> "TorusDensity":
        return TorusDensity(np.ones((n, n)))

    @staticmethod
    def from_cells(cells, normalize: bool = False) -> "TorusDensity":
        arr = np.array(cells, dtype=float)
        if normalize:
            m = arr.mean()
            if m <= 0.0:
                raise ValueError("cannot normalize a density with nonpositive mass")
            arr = arr / m
        return TorusDensity(arr)

    @staticmethod
    def from_function(f, n: int) -> "TorusDensity":
        """Evaluate f at cell centers and normalize to unit mass."""
        return TorusDensity.from_cells(f(cell_centers(n)), normalize=True)

    @staticmethod
    def from_trig(poly: TrigPolynomial, n: int) -> "TorusDensity":
        """Density 1 + poly evaluated at cell centers (poly must keep it >= 0)."""
        return TorusDensity.from_cells(1.0 + poly(cell_centers(n)), normalize=True)

    @staticmethod
    def bump(center, width: float, n: int) -> "TorusDensity":
        """Periodic Gaussian-like bump; smaller width means sharper (larger BV proxy)."""
        c = cell_centers(n)
        d = np.abs(c - wrap(np.asarray(center, dtype=float)))
        d = np.minimum(d, 1.0 - d)
        r2 = d[..., 0] ** 2 + d[..., 1] ** 2
        return TorusDensity.from_cells(np.exp(-r2 / (2.0 * width**2)), normalize=True)

    def prolong(self) -> "TorusDensity":
        """Exact refinement to twice the resolution (each cell split in 2x2)."""
        return TorusDensity(np.kron(self.cells, np.ones((2, 2))))

    def restrict(self) -> "TorusDensity":
        """Mass-preserving coarsening by averaging 2x2 blocks."""
        n = self.n
        if n < 2:
            raise ValueError("cannot restrict a 1x1 density")
        c = self.cells.reshape(n // 2, 2, n // 2, 2)
        return TorusDensity(c.mean(axis=(1, 3)))

    def save(self, path) -> None:
        """Write the grid file: header line `n=<resolution>`, then n^2 row-major values."""
        with open(path, "w") as fh:
            fh.write(f"n={self.n}\n")
            for row in self.cells:
                fh.write(",".join(repr(float(x)) for x in row) + "\n")

    @staticmethod
    def load(path) -> "TorusDensity":
        with open(path) as fh:
            header = fh.readline().strip()
            if not header.startswith("n="):
                raise ValueError(f"expected header 'n=<resolution>', got {header!r}")
            n = int(header[2:])
            values = [float(tok) for line in fh for tok in line.strip().split(",") if tok]
        if len(values) != n * n:
            raise ValueError(f"expected {n * n} values, got {len(values)}")
        return TorusDensity(np.asarray(values).reshape(n, n))


def l1_distance(h1: TorusDensity, h2: TorusDensity) -> float:
    """Cellwise L1 distance (1/n^2) sum |h1 - h2|; matches TV on probability densities."""
    if h1.n != h2.n:
        raise ValueError(f"resolution mismatch: {h1.n} vs {h2.n}")
    return float(np.abs(h1.cells - h2.cells).mean())


def l1_norm(cells: np.ndarray) -> float:
    return float(np.abs(cells).mean())


def proxy_strong_norm(h: TorusDensity, a: float = 1.0) -> float:
    """Computable proxy for the strong norm: a*||h||_L1 + discrete total variation.

    The TV part sums periodic forward-difference magnitudes scaled by 1/n,
    approximating the integral of |grad h|.  This is a proxy diagnostic, not
    the anisotropic norm from the underlying theory; outputs label it as such.
    """
    c = h.cells
    n = h.n
    tv = (np.abs(np.roll(c, -1, axis=0) - c).sum() + np.abs(np.roll(c, -1, axis=1) - c).sum()) / n
    return a * l1_norm(c) + float(tv)


@dataclass(frozen=True)
class Observable:
    """Real trigonometric test function with a mode cutoff tied to the grid Nyquist limit."""

    poly: TrigPolynomial
    name: str = "observable"

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.poly(points)

    def max_mode(self) -> int:
        return self.poly.max_mode()

    @staticmethod
    def from_terms(terms, name: str = "observable") -> "Observable":
        return Observable(TrigPolynomial.from_terms(terms), name)


def integrate(h: TorusDensity, phi: Observable) -> float:
    """Midpoint quadrature of phi against h; exact for modes below the grid Nyquist limit."""
    if phi.max_mode() > h.n // 2:
        raise ValueError(
            f"observable cutoff {phi.max_mode()} exceeds resolution/2 = {h.n // 2}"
        )
    return float((h.cells * phi(cell_centers(h.n))).mean())
