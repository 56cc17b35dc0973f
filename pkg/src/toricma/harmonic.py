"""Torus-invariant harmonic extension of boundary data.

A torus-invariant function u(z) = U(|z_1|, ..., |z_n|) is harmonic for the
flat Laplacian of R^{2n} exactly when

    sum_j ( d^2/dr_j^2 + (1/r_j) d/dr_j ) U = 0,

each complex factor contributing a two-dimensional radial Laplacian.  The
lift solves this degenerate-coefficient equation on the radius image of the
domain (a quarter/octant patch of the ball or the unit cube for the
polydisk) with the boundary data on the curved part and the smooth-axis
condition at r_j = 0, where the radial term has the classical polar limit
4 (U(h e_j) - U(0)) / h^2.

Harmonic lifts dominate every psh function with the same boundary bound, so
they give cheap upper envelopes and sanity ceilings for the Monge-Ampere
solvers.  Radius coordinates (not log coordinates) are the natural habitat
here because the axes r_j = 0 belong to the domain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .calculus import ToricGridFunction
from .geometry import CURVED, INTERIOR, KINDS, OUTSIDE

__all__ = ["RadialGrid", "harmonic_lift"]


@dataclass(frozen=True)
class _RadialSpec:
    kind: str
    n: int
    h: float


class RadialGrid:
    """Uniform lattice on the radius image [0, 1]^n of a Reinhardt domain.

    Mirrors the LogGrid interface that ToricGridFunction needs (shape,
    axis_coords, classification, node lookups) but lives in radius
    coordinates and has no artificial wall: the coordinate axes are genuine
    interior points of the domain.
    """

    def __init__(self, kind: str, n: int, subdivisions: int = 64):
        if kind not in KINDS:
            raise ValueError(f"unknown domain kind {kind!r}; expected one of {KINDS}")
        if n not in (2, 3):
            raise ValueError("only n=2 and n=3 are supported")
        if subdivisions < 4:
            raise ValueError("need at least 4 subdivisions")
        m = subdivisions + 1
        h = 1.0 / subdivisions
        self.spec = _RadialSpec(kind, n, h)
        self.shape = (m,) * n
        self.size = m**n
        self.axis_coords = np.linspace(0.0, 1.0, m)

        grids = np.meshgrid(*([self.axis_coords] * n), indexing="ij")
        r = np.stack([g.reshape(-1) for g in grids], axis=1)
        self._r_flat = r
        k_idx = np.stack(
            [g.reshape(-1) for g in np.meshgrid(*([np.arange(m)] * n), indexing="ij")],
            axis=1,
        )
        self._k_flat = k_idx

        inside = self._inside(r)
        cls = np.full(self.size, OUTSIDE, dtype=np.int8)
        cls[inside] = INTERIOR
        cand = np.flatnonzero(~inside)
        ring = np.zeros(len(cand), dtype=bool)
        for j in range(n):
            for sgn in (-1.0, 1.0):
                shifted = r[cand].copy()
                shifted[:, j] += sgn * h
                ring |= self._inside(shifted)
        cls[cand[ring]] = CURVED
        self.classification = cls.reshape(self.shape)
        self.interior_flat = np.flatnonzero(cls == INTERIOR)
        self.curved_flat = np.flatnonzero(cls == CURVED)
        self.strides = np.array(
            [int(np.prod(self.shape[j + 1 :], dtype=np.int64)) for j in range(n)],
            dtype=np.int64,
        )
        r_curved = r[self.curved_flat]
        if kind == "UnitBall":
            self.curved_snap_radii = r_curved / np.sqrt((r_curved**2).sum(axis=1))[:, None]
        else:
            self.curved_snap_radii = np.minimum(r_curved, 1.0)

    def _inside(self, r: np.ndarray) -> np.ndarray:
        ok = (r >= 0.0).all(axis=1)
        if self.spec.kind == "UnitBall":
            return ok & ((r**2).sum(axis=1) < 1.0)
        return ok & (r < 1.0).all(axis=1)

    def node_x(self, flat_idx) -> np.ndarray:
        return self._r_flat[flat_idx]

    def node_k(self, flat_idx) -> np.ndarray:
        return self._k_flat[flat_idx]

    def __eq__(self, other):
        return isinstance(other, RadialGrid) and self.spec == other.spec

    def __repr__(self):
        return f"RadialGrid({self.spec.kind}, n={self.spec.n}, h={self.spec.h:.4g})"


def harmonic_lift(
    kind: str,
    n: int,
    boundary,
    *,
    subdivisions: int = 64,
) -> ToricGridFunction:
    """Solve the torus-invariant Laplace problem with given boundary data.

    Parameters
    ----------
    kind, n :
        Domain selector, as in ReinhardtDomainSpec.
    boundary :
        Callable of the boundary radius vector, or a constant.
    subdivisions :
        Lattice resolution per axis on [0, 1].

    Returns
    -------
    ToricGridFunction
        The discrete harmonic extension, on a RadialGrid with
        ``coords="radius"``.
    """
    grid = RadialGrid(kind, n, subdivisions)
    h = grid.spec.h
    if np.isscalar(boundary):
        gvals = np.full(len(grid.curved_flat), float(boundary))
    else:
        gvals = np.array([boundary(r) for r in grid.curved_snap_radii], dtype=float)
    if not np.isfinite(gvals).all():
        raise ValueError("boundary data must be finite")

    Ni = len(grid.interior_flat)
    pos = np.full(grid.size, -1, dtype=np.int64)
    pos[grid.interior_flat] = np.arange(Ni)
    bval = np.full(grid.size, np.nan)
    bval[grid.curved_flat] = gvals

    r_int = grid.node_x(grid.interior_flat)
    rows, cols, vals = [], [], []
    rhs = np.zeros(Ni)
    diag = np.zeros(Ni)
    ar = np.arange(Ni)

    def couple(sel, nb_flat, coef):
        nb_pos = pos[nb_flat]
        fixed = nb_pos < 0
        live = ~fixed
        if live.any():
            rows.append(sel[live])
            cols.append(nb_pos[live])
            vals.append(-coef[live])
        if fixed.any():
            rhs[sel[fixed]] += coef[fixed] * bval[nb_flat[fixed]]

    k_int = grid.node_k(grid.interior_flat)
    for j in range(n):
        rj = r_int[:, j]
        kp = k_int.copy()
        kp[:, j] += 1
        km = k_int.copy()
        km[:, j] -= 1
        ip = (kp * grid.strides).sum(axis=1)
        axis0 = rj == 0.0
        # off-axis: centered second difference plus the 1/r drift
        off = ~axis0
        if off.any():
            im = (km[off] * grid.strides).sum(axis=1)
            cp = 1.0 / h**2 + 1.0 / (2.0 * h * rj[off])
            cm = 1.0 / h**2 - 1.0 / (2.0 * h * rj[off])
            couple(ar[off], ip[off], cp)
            couple(ar[off], im, cm)
            diag[off] += 2.0 / h**2
        # on the axis r_j = 0: polar-smoothness one-sided stencil
        if axis0.any():
            couple(ar[axis0], ip[axis0], np.full(axis0.sum(), 4.0 / h**2))
            diag[axis0] += 4.0 / h**2

    rows.append(ar)
    cols.append(ar)
    vals.append(diag)
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(Ni, Ni),
    )
    from .envelopes import _linear_solve

    x, _solver = _linear_solve(A, rhs)
    if x is None or not np.isfinite(x).all():
        raise RuntimeError("harmonic lift solve produced non-finite values")

    flat = np.full(grid.size, np.nan)
    flat[grid.interior_flat] = x
    flat[grid.curved_flat] = gvals
    return ToricGridFunction(grid, flat.reshape(grid.shape), coords="radius")
