"""Log-coordinate geometry of bounded Reinhardt domains.

A torus-invariant function on a Reinhardt domain only depends on the radii
|z_j|, so everything is computed on the logarithmic image

    x_j = log|z_j|,

where plurisubharmonicity becomes ordinary convexity.  The log image of the
unit ball is {x : sum_j exp(2 x_j) < 1}; the unit polydisk maps to the
negative orthant.  Both are unbounded toward x_j -> -infinity (the axes
z_j = 0), so the computational grid truncates them with an artificial wall
at x_j = -L on which a zero normal difference is imposed: bounded toric psh
functions are nondecreasing in each x_j, hence flat far down the axes, and
the truncation error decays like exp(-2L).

Node classification uses an outside-layer convention: lattice nodes strictly
inside the log image are Interior (or ArtificialWall when x_j = -L), and the
first ring of nodes at or beyond the curved surface carries Dirichlet data,
snapped to the nearest true boundary point (first-order accurate).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "INTERIOR",
    "CURVED",
    "WALL",
    "OUTSIDE",
    "CLASS_NAMES",
    "ReinhardtDomainSpec",
    "LogGrid",
    "BoundaryTrace",
    "build_log_grid",
    "log_map",
    "polydisk_witness",
]

# Node classes, stored as int8 in LogGrid.classification.
INTERIOR = 0
CURVED = 1
WALL = 2
OUTSIDE = 3

CLASS_NAMES = {
    INTERIOR: "Interior",
    CURVED: "CurvedBoundary",
    WALL: "ArtificialWall",
    OUTSIDE: "Outside",
}
CLASS_IDS = {name: cid for cid, name in CLASS_NAMES.items()}

KINDS = ("UnitBall", "UnitPolydisk")


@dataclass(frozen=True)
class ReinhardtDomainSpec:
    """Which bounded Reinhardt domain, in which dimension, and how it is cut.

    kind: "UnitBall" or "UnitPolydisk".
    n:    complex dimension, 2 or 3.
    L:    wall depth; the grid covers x_j in [-L, 0].
    h:    lattice spacing.
    """

    kind: str
    n: int
    L: float = 4.0
    h: float = 1.0 / 16.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}; expected one of {KINDS}")
        if self.n not in (2, 3):
            raise ValueError(f"dimension n={self.n} unsupported; only n=2 and n=3")
        if not (self.L > 0):
            raise ValueError("wall depth L must be positive")
        if not (self.h > 0):
            raise ValueError("grid spacing h must be positive")
        if self.h >= self.L:
            raise ValueError(
                f"grid spacing h={self.h} must be smaller than the wall depth L={self.L}"
            )


class LogGrid:
    """Truncated lattice on the log image of a Reinhardt domain.

    Nodes sit at x = -L*1 + h*k for integer multi-indices k >= 0, arranged in
    a box of shape `shape` (C order, axis j = coordinate x_j).  Every node is
    classified Interior / CurvedBoundary / ArtificialWall / Outside; values
    are stored by flat index into that box.
    """

    def __init__(self, spec: ReinhardtDomainSpec):
        self.spec = spec
        n, L, h = spec.n, spec.L, spec.h
        m = int(math.floor(L / h - 1e-12)) + 2
        self.shape = (m,) * n
        self.size = m**n

        axis = -L + h * np.arange(m)
        self.axis_coords = axis

        # Node coordinates as n arrays of shape `shape` (broadcasted views).
        grids = np.meshgrid(*([axis] * n), indexing="ij")
        x = np.stack([g.reshape(-1) for g in grids], axis=1)  # (size, n)
        self._x_flat = x

        inside = self._inside_mask(x)
        classification = np.full(self.size, OUTSIDE, dtype=np.int8)

        k_idx = np.stack(
            [g.reshape(-1) for g in np.meshgrid(*([np.arange(m)] * n), indexing="ij")],
            axis=1,
        )
        self._k_flat = k_idx

        on_wall = (k_idx == 0).any(axis=1)
        classification[inside & on_wall] = WALL
        classification[inside & ~on_wall] = INTERIOR

        # Outside-layer ring: not-inside nodes with an inside axis neighbor
        # (as points of R^n; the neighbor need not be a lattice node).
        ring = np.zeros(self.size, dtype=bool)
        cand = ~inside
        for j in range(n):
            for sgn in (-1.0, 1.0):
                shifted = x[cand].copy()
                shifted[:, j] += sgn * h
                hit = self._inside_mask(shifted)
                sub = np.flatnonzero(cand)
                ring[sub[hit]] = True
        classification[ring] = CURVED

        self.classification = classification.reshape(self.shape)
        flat = classification
        self.interior_flat = np.flatnonzero(flat == INTERIOR)
        self.curved_flat = np.flatnonzero(flat == CURVED)
        self.wall_flat = np.flatnonzero(flat == WALL)
        self.strides = np.array(
            [int(np.prod(self.shape[j + 1 :], dtype=np.int64)) for j in range(n)],
            dtype=np.int64,
        )

        self._build_wall_targets()
        self._build_snap_data()

    # -- geometry predicates ------------------------------------------------

    def _inside_mask(self, x: np.ndarray) -> np.ndarray:
        if self.spec.kind == "UnitBall":
            return np.exp(2.0 * x).sum(axis=1) < 1.0
        return (x < 0.0).all(axis=1)

    # -- wall handling ------------------------------------------------------

    def _build_wall_targets(self):
        """For each ArtificialWall node, the node whose value it copies.

        The copy target steps +h in every wall coordinate (zero normal
        difference, first order).  In the rare sliver where that diagonal
        lands Outside, step only in the first wall coordinate, which always
        lands on a valued node.
        """
        n = self.spec.n
        k = self._k_flat[self.wall_flat]
        flat_class = self.classification.reshape(-1)

        diag = k + (k == 0)
        tgt = (diag * self.strides).sum(axis=1)
        bad = flat_class[tgt] == OUTSIDE
        if bad.any():
            kb = k[bad].copy()
            first_wall = np.argmax(kb == 0, axis=1)
            kb[np.arange(len(kb)), first_wall] += 1
            tgt[bad] = (kb * self.strides).sum(axis=1)
        if (flat_class[tgt] == OUTSIDE).any():
            raise RuntimeError("wall copy target landed Outside; grid too coarse")
        self.wall_target_flat = tgt

    # -- boundary snapping --------------------------------------------------

    def _build_snap_data(self):
        """Snapped boundary radii and axiswise clipping fractions.

        Each CurvedBoundary node x is assigned the nearest point of the true
        boundary surface in radius coordinates r = exp(x): for the ball,
        r / |r|; for the polydisk, componentwise min(r, 1).  The clipping
        fraction along axis j is the theta in (0, 1] with the surface crossed
        at x - theta*h*e_j, NaN where the inward axis neighbor is not inside.
        """
        h = self.spec.h
        x = self._x_flat[self.curved_flat]
        r = np.exp(x)
        if self.spec.kind == "UnitBall":
            norms = np.sqrt((r**2).sum(axis=1))
            snapped = r / norms[:, None]
        else:
            snapped = np.minimum(r, 1.0)
        self.curved_snap_radii = snapped

        n = self.spec.n
        frac = np.full((len(x), n), np.nan)
        if self.spec.kind == "UnitBall":
            s = np.exp(2.0 * x).sum(axis=1)
            for j in range(n):
                xm = x.copy()
                xm[:, j] -= h
                inward_inside = self._inside_mask(xm)
                c = 1.0 - s + np.exp(2.0 * x[:, j])
                with np.errstate(divide="ignore", invalid="ignore"):
                    theta = (x[:, j] - 0.5 * np.log(c)) / h
                ok = inward_inside & (c > 0)
                frac[ok, j] = theta[ok]
        else:
            for j in range(n):
                xm = x.copy()
                xm[:, j] -= h
                ok = self._inside_mask(xm) & (x[:, j] >= 0)
                frac[ok, j] = x[ok, j] / h
        self.curved_clip_fractions = frac

    # -- conveniences ---------------------------------------------------------

    def node_x(self, flat_idx) -> np.ndarray:
        """Coordinates of nodes given by flat index (vectorized)."""
        return self._x_flat[flat_idx]

    def node_k(self, flat_idx) -> np.ndarray:
        return self._k_flat[flat_idx]

    def flat_index(self, k: np.ndarray) -> np.ndarray:
        k = np.asarray(k, dtype=np.int64)
        return (k * self.strides).sum(axis=-1)

    @property
    def n_interior(self) -> int:
        return len(self.interior_flat)

    def values_template(self) -> np.ndarray:
        """Full-box value array, NaN at Outside nodes, zero elsewhere."""
        v = np.full(self.size, np.nan)
        v[self.classification.reshape(-1) != OUTSIDE] = 0.0
        return v.reshape(self.shape)

    def __eq__(self, other):
        return isinstance(other, LogGrid) and self.spec == other.spec

    def __repr__(self):
        counts = {
            name: int((self.classification == cid).sum()) for cid, name in CLASS_NAMES.items()
        }
        return f"LogGrid({self.spec}, counts={counts})"


def build_log_grid(spec: ReinhardtDomainSpec) -> LogGrid:
    """Build the classified lattice for a domain spec.

    Rejects h >= L (the spec constructor already does); the returned grid
    guarantees that every Interior node has all 2n axis neighbors valued
    (non-Outside), so the axis stencil is always available.
    """
    return LogGrid(spec)


@dataclass
class BoundaryTrace:
    """Dirichlet data on the CurvedBoundary ring.

    values: one real per CurvedBoundary node, aligned with grid.curved_flat.
    continuity: boolean flags, True where the datum is a ContinuityPoint of
    the underlying boundary function (attainment is only asserted there).
    radii_fn: optional scalar function of the boundary radii that generated
    the values; solvers use it to resample the data on coarser grids.
    """

    grid: LogGrid
    values: np.ndarray
    continuity: np.ndarray = field(default=None)
    radii_fn: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.grid.curved_flat),):
            raise ValueError(
                f"boundary trace has {self.values.shape} values for "
                f"{len(self.grid.curved_flat)} CurvedBoundary nodes"
            )
        if self.continuity is None:
            self.continuity = np.ones(len(self.values), dtype=bool)
        else:
            self.continuity = np.asarray(self.continuity, dtype=bool)
            if self.continuity.shape != self.values.shape:
                raise ValueError("continuity flags must align with boundary values")
        if not np.isfinite(self.values).all():
            raise ValueError("boundary values must be finite")

    @classmethod
    def constant(cls, grid: LogGrid, value: float) -> "BoundaryTrace":
        value = float(value)
        return cls(
            grid, np.full(len(grid.curved_flat), value), radii_fn=lambda r: value
        )

    @classmethod
    def from_radii_function(cls, grid: LogGrid, fn, continuity=None) -> "BoundaryTrace":
        """Evaluate fn on the snapped boundary radii of every curved node."""
        vals = np.array([fn(r) for r in grid.curved_snap_radii], dtype=float)
        return cls(grid, vals, continuity=continuity, radii_fn=fn)

    def max_value(self) -> float:
        return float(self.values.max()) if len(self.values) else 0.0


def log_map(z) -> np.ndarray:
    """Log coordinates x_j = log|z_j| of a point with all z_j != 0."""
    z = np.asarray(z, dtype=complex)
    absz = np.abs(z)
    if (absz == 0).any():
        j = int(np.flatnonzero(absz == 0)[0])
        raise ValueError(f"z_{j+1} = 0 has no log coordinate (point lies on an axis)")
    return np.log(absz)


def polydisk_witness(
    zeta_r,
    t: float,
    region,
    *,
    delta_search: float,
    step: float | None = None,
) -> bool:
    """Scan for a polydisk certificate that t*zeta is forced below boundary data.

    Searches radius vectors r' near zeta_r with sum r'_j^2 = 1 whose torus
    orbit lies in the open boundary set `region` and whose polydisk
    D(0, r') contains t*zeta, i.e. |t*zeta_j| < r'_j for every j.  When such
    an r' exists, any psh function that is <= -1 on the orbits of `region`
    satisfies u(t*zeta) <= -1 by the maximum principle on the polydisk.

    Candidates perturb each coordinate of zeta_r by integer multiples of
    `step` (default delta_search / 40) up to delta_search, then renormalize
    to the sphere; candidates that moved any coordinate by delta_search or
    more are discarded.
    """
    r = np.asarray(zeta_r, dtype=float)
    n = len(r)
    if not (0.0 < t < 1.0):
        raise ValueError(f"t={t} must lie in (0, 1); the center t=0 is rejected")
    if (r <= 1e-12).any():
        raise ValueError("zeta_r has a coordinate within 1e-12 of the axis")
    if abs((r**2).sum() - 1.0) > 1e-9:
        raise ValueError("zeta_r must lie on the unit sphere (sum of squares = 1)")
    if not (delta_search > 0):
        raise ValueError("delta_search must be positive")
    if step is None:
        step = delta_search / 40.0

    m = int(math.floor(delta_search / step))
    offsets = step * np.arange(-m, m + 1)
    grids = np.meshgrid(*([offsets] * n), indexing="ij")
    cand = r[None, :] + np.stack([g.reshape(-1) for g in grids], axis=1)
    cand = cand[(cand > 1e-12).all(axis=1)]
    norms = np.sqrt((cand**2).sum(axis=1))
    cand = cand / norms[:, None]

    close = (np.abs(cand - r[None, :]) < delta_search).all(axis=1)
    dominates = (cand > t * r[None, :]).all(axis=1)
    cand = cand[close & dominates]
    if len(cand) == 0:
        return False
    member = region.contains_radii(cand)
    return bool(np.asarray(member).any())
