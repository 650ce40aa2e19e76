"""Ulam discretization of transfer operators and the factorized coupled step.

An operator is a column-stochastic sparse matrix P with P[j, i] the fraction
of cell i mapped into cell j, estimated by an s x s midpoint quadrature per
cell and renormalized so every column sums to exactly 1.  Matrix action on
cell values preserves total mass and positivity, which is the point of the
piecewise-constant representation.

The coupled operator factorizes through the interaction: the interaction
stage depends on the driving measure and is re-derived on every application
(an implicit fresh Ulam matrix, applied as a scatter of quadrature weights),
while the site-map stage is built once and cached by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .coupling import CouplingSpec
from .torus import TorusDensity, cell_index, wrap


@lru_cache(maxsize=8)
def quadrature_points(n: int, s: int) -> np.ndarray:
    """Midpoint quadrature nodes grouped by cell: shape (n*n*s*s, 2), cell-major.

    Point ((i*n + j)*s + a)*s + b is node (a, b) of cell (i, j), matching
    np.repeat(cells.ravel(), s*s).
    """
    fine = lambda idx, sub: (idx[:, None] * s + sub[None, :] + 0.5) / (n * s)
    cells = np.arange(n)
    subs = np.arange(s)
    u = fine(cells, subs)  # (n, s)
    pts = np.empty((n, n, s, s, 2))
    pts[..., 0] = u[:, None, :, None]
    pts[..., 1] = u[None, :, None, :]
    out = pts.reshape(-1, 2)
    out.flags.writeable = False
    return out


def _as_point_map(map_like):
    if callable(map_like) and not hasattr(map_like, "apply"):
        return map_like
    return map_like.apply


@dataclass(frozen=True, eq=False)
class UlamOperator:
    n: int
    s: int
    matrix: sp.csr_matrix  # (n^2, n^2), column-stochastic

    def column_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=0)).ravel()

    def dump_coo(self, path) -> None:
        """Debug dump in coordinate format: one `row col value` line per entry."""
        coo = self.matrix.tocoo()
        with open(path, "w") as fh:
            for r, c, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{r} {c} {float(v)!r}\n")


def build_ulam(map_like, n: int, s: int = 4) -> UlamOperator:
    """Column-stochastic Ulam matrix for a torus map on the n x n grid."""
    if n < 1 or (n & (n - 1)) != 0:
        raise ValueError("resolution must be a power of two")
    if s < 2:
        raise ValueError("quadrature order must be >= 2")
    f = _as_point_map(map_like)
    qp = quadrature_points(n, s)
    dest = cell_index(f(qp), n)
    src = np.repeat(np.arange(n * n, dtype=np.int64), s * s)
    data = np.full(len(dest), 1.0 / (s * s))
    mat = sp.coo_matrix((data, (dest, src)), shape=(n * n, n * n)).tocsc()
    mat.sum_duplicates()
    _pin_column_sums(mat)
    return UlamOperator(n=n, s=s, matrix=mat.tocsr())


def _pin_column_sums(mat: sp.csc_matrix) -> None:
    """Renormalize columns and absorb the rounding residual into each column's
    largest entry so that column sums are bitwise exactly 1."""
    counts = np.diff(mat.indptr)
    if np.any(counts == 0):
        raise ValueError("some cell has no image cells; map is not total")
    sums = np.add.reduceat(mat.data, mat.indptr[:-1])
    mat.data /= np.repeat(sums, counts)
    sums = np.add.reduceat(mat.data, mat.indptr[:-1])
    for col in np.nonzero(sums != 1.0)[0]:
        lo, hi = mat.indptr[col], mat.indptr[col + 1]
        block = mat.data[lo:hi]
        for _ in range(8):  # residual absorption converges in one or two rounds
            resid = 1.0 - block.sum()
            if resid == 0.0:
                break
            block[np.argmax(block)] += resid


def push_density(op: UlamOperator, h: TorusDensity) -> TorusDensity:
    """Matrix action on the density; renormalized to unit mass."""
    if h.n != op.n:
        raise ValueError(f"resolution mismatch: operator {op.n}, density {h.n}")
    out = op.matrix @ h.cells.ravel()
    out /= out.mean()
    return TorusDensity(out.reshape(op.n, op.n))


def push_signed(op: UlamOperator, cells: np.ndarray) -> np.ndarray:
    """Raw matrix action on an arbitrary cell array (no density validation)."""
    return (op.matrix @ np.asarray(cells, dtype=float).ravel()).reshape(op.n, op.n)


@dataclass(frozen=True, eq=False)
class CoupledOperatorPlan:
    """One application of the coupled operator: interaction stage driven by g,
    then the cached site-map stage."""

    base: UlamOperator
    coupling: CouplingSpec
    g: object  # driving measure view (density or ensemble)

    def __post_init__(self):
        if hasattr(self.g, "n") and self.g.n != self.base.n:
            raise ValueError(
                f"resolution mismatch: base operator {self.base.n}, driving measure {self.g.n}"
            )


def _phi_push_cells(plan: CoupledOperatorPlan, cells: np.ndarray) -> np.ndarray:
    """Push cell values through the interaction stage by quadrature scatter.

    Equivalent to building the fresh Ulam matrix of Phi_g and applying it:
    each of the s^2 quadrature points of a source cell carries 1/s^2 of the
    cell value to the cell containing its image.
    """
    n, s = plan.base.n, plan.base.s
    qp = quadrature_points(n, s)
    g_field = plan.coupling.reduce(plan.g)
    images = wrap(qp + plan.coupling.eps * g_field(qp))
    dest = cell_index(images, n)
    weights = np.repeat(np.asarray(cells, dtype=float).ravel() / (s * s), s * s)
    out = np.bincount(dest, weights=weights, minlength=n * n)
    return out.reshape(n, n)


def apply_coupled(plan: CoupledOperatorPlan, h: TorusDensity) -> TorusDensity:
    """h -> L_T(L_Phi h): interaction stage first, then the site-map stage."""
    if h.n != plan.base.n:
        raise ValueError(f"resolution mismatch: operator {plan.base.n}, density {h.n}")
    if plan.coupling.is_trivial:
        return push_density(plan.base, h)
    mid = _phi_push_cells(plan, h.cells)
    out = plan.base.matrix @ mid.ravel()
    out /= out.mean()
    return TorusDensity(out.reshape(plan.base.n, plan.base.n))


def push_sequential(plans, h: TorusDensity) -> TorusDensity:
    """Apply a list of coupled plans left to right (first plan acts first)."""
    out = h
    for plan in plans:
        out = apply_coupled(plan, out)
    return out


def build_phi_ulam(plan: CoupledOperatorPlan) -> UlamOperator:
    """Explicit Ulam matrix of the interaction stage (for diagnostics/dumps)."""
    g_field = plan.coupling.reduce(plan.g)
    eps = plan.coupling.eps
    return build_ulam(lambda p: wrap(p + eps * g_field(p)), plan.base.n, plan.base.s)
