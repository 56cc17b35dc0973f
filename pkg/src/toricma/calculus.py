"""Discrete toric calculus: grid functions, Monge-Ampere stencils, averages.

The complex Monge-Ampere operator is normalized with dd^c = 2i d dbar, so
for smooth u

    (dd^c u)^n = 4^n n! det( d^2 u / dz_j dzbar_k ) dV_{2n}.

For a torus-invariant u(z) = U(log|z_1|, ..., log|z_n|) the mass of any
torus-invariant Borel set Log^{-1}(E) reduces to a real Monge-Ampere
integral,

    mass over Log^{-1}(E)  =  (2 pi)^n n! * integral_E det D^2 U dx,

and the equation (dd^c u)^n = f dV_{2n} becomes det D^2 U = ftilde with

    ftilde(x) = f(e^x) * exp(2 sum_j x_j) / n!.

The discrete operator below is the wide-stencil one: the determinant of a
positive semidefinite Hessian equals the minimum over orthogonal frames of
the product of pure second derivatives (Hadamard), so truncating to integer
frames errs on the high side and keeps the scheme degenerate elliptic.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import CURVED, INTERIOR, OUTSIDE, WALL, LogGrid, log_map

__all__ = [
    "ToricGridFunction",
    "DensityField",
    "HermitianDirection",
    "AveragingSchedule",
    "FrameStencil",
    "generate_frames",
    "second_difference",
    "ma_operator",
    "discrete_ma_mass",
    "delta_H_sample",
    "check_subsolution_deltaH",
    "toric_average_full",
    "toric_average_windowed",
    "volume_weights",
]


# ---------------------------------------------------------------------------
# grid functions
# ---------------------------------------------------------------------------


class ToricGridFunction:
    """Real values on the nodes of a LogGrid (or a radial grid).

    Parameters
    ----------
    grid :
        Grid object exposing ``shape``, ``axis_coords`` and ``classification``.
    values :
        Array of shape ``grid.shape``; NaN marks Outside nodes.
    coords :
        ``"log"`` when the axes are x_j = log|z_j| (the default), or
        ``"radius"`` when they are the radii r_j themselves (harmonic lifts
        live on radius grids).
    """

    def __init__(self, grid, values: np.ndarray, coords: str = "log"):
        if coords not in ("log", "radius"):
            raise ValueError(f"unknown coords tag {coords!r}")
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {grid.shape}")
        self.grid = grid
        self.values = values
        self.coords = coords

    @classmethod
    def from_x_function(cls, grid, fn, coords: str = "log") -> "ToricGridFunction":
        """Sample a function of the grid coordinates on all non-Outside nodes."""
        flat = np.full(grid.size, np.nan)
        mask = grid.classification.reshape(-1) != OUTSIDE
        pts = grid.node_x(np.flatnonzero(mask))
        flat[mask] = fn(pts)
        return cls(grid, flat.reshape(grid.shape), coords=coords)

    def copy(self) -> "ToricGridFunction":
        return ToricGridFunction(self.grid, self.values.copy(), coords=self.coords)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def interior_values(self) -> np.ndarray:
        return self.flat[self.grid.interior_flat]

    # -- pointwise evaluation ----------------------------------------------

    def eval_x(self, x) -> np.ndarray:
        """Multilinear interpolation at coordinate points x (shape (..., n)).

        Queries are clamped into the grid box (bounded toric psh functions
        are flat across the artificial wall, so clamping is the right
        extension).  Cells with some Outside corners renormalize the
        multilinear weights over the valued corners; all-Outside cells give
        NaN.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        axis = self.grid.axis_coords
        n = x.shape[1]
        m = len(axis)
        h = axis[1] - axis[0]

        t = (x - axis[0]) / h
        t = np.clip(t, 0.0, m - 1.0)
        i0 = np.minimum(t.astype(np.int64), m - 2)
        w = t - i0  # fractional position in the cell, in [0, 1]

        num = np.zeros(len(x))
        den = np.zeros(len(x))
        vflat = self.flat
        strides = np.array(
            [int(np.prod(self.grid.shape[j + 1 :], dtype=np.int64)) for j in range(n)]
        )
        for corner in itertools.product((0, 1), repeat=n):
            c = np.array(corner)
            idx = ((i0 + c) * strides).sum(axis=1)
            vals = vflat[idx]
            wt = np.prod(np.where(c == 1, w, 1.0 - w), axis=1)
            good = ~np.isnan(vals)
            num[good] += wt[good] * vals[good]
            den[good] += wt[good]
        out = np.full(len(x), np.nan)
        ok = den > 1e-14
        out[ok] = num[ok] / den[ok]
        return out if out.size > 1 else float(out[0])

    def eval_z(self, z):
        """Evaluate at points of the complex domain (all z_j != 0)."""
        z = np.atleast_2d(np.asarray(z, dtype=complex))
        if self.coords == "log":
            pts = np.log(np.abs(z))
            if not np.isfinite(pts).all():
                raise ValueError("eval_z requires all z_j != 0 on a log grid")
        else:
            pts = np.abs(z)
        return self.eval_x(pts)

    def __repr__(self):
        finite = self.values[np.isfinite(self.values)]
        return (
            f"ToricGridFunction(shape={self.grid.shape}, coords={self.coords!r}, "
            f"range=[{finite.min():.4g}, {finite.max():.4g}])"
        )


class DensityField:
    """Right-hand side density, kept in both complex and log normalizations.

    ``complex_side`` is the density f in (dd^c u)^n = f dV_{2n}, a function
    of the radii; ``log_values`` holds the transformed density
    ftilde(x) = f(e^x) exp(2 sum x) / n! sampled on the grid, which is what
    the real scheme consumes.
    """

    def __init__(self, grid: LogGrid, radii_fn):
        self.grid = grid
        self._radii_fn = radii_fn
        n = grid.spec.n
        flat = np.full(grid.size, np.nan)
        mask = grid.classification.reshape(-1) != OUTSIDE
        x = grid.node_x(np.flatnonzero(mask))
        f = np.asarray(radii_fn(np.exp(x)), dtype=float)
        if (f < 0).any():
            raise ValueError("density must be nonnegative")
        flat[mask] = f * np.exp(2.0 * x.sum(axis=1)) / math.factorial(n)
        self.log_values = flat.reshape(grid.shape)

    @classmethod
    def constant(cls, grid: LogGrid, value: float) -> "DensityField":
        value = float(value)
        if value < 0:
            raise ValueError("density must be nonnegative")
        return cls(grid, lambda r: np.full(r.shape[:-1], value))

    @classmethod
    def zero(cls, grid: LogGrid) -> "DensityField":
        return cls.constant(grid, 0.0)

    def complex_side(self, radii) -> np.ndarray:
        """Evaluate the complex-normalization density f at radius vectors."""
        return np.asarray(self._radii_fn(np.atleast_2d(np.asarray(radii, dtype=float))))

    def interior_log_values(self) -> np.ndarray:
        return self.log_values.reshape(-1)[self.grid.interior_flat]


# ---------------------------------------------------------------------------
# integer frames and second differences
# ---------------------------------------------------------------------------


def _primitive_directions(n: int, max_entry: int):
    out = []
    for vec in itertools.product(range(-max_entry, max_entry + 1), repeat=n):
        if all(v == 0 for v in vec):
            continue
        nz = next(v for v in vec if v != 0)
        if nz < 0:  # canonical sign: first nonzero entry positive
            continue
        if math.gcd(*[abs(v) for v in vec]) != 1:
            continue
        out.append(vec)
    return out


@lru_cache(maxsize=None)
def generate_frames(n: int, max_entry: int):
    """All orthogonal frames of primitive integer directions, axis frame first.

    Returns an int array of shape (F, n, n); frames[f, j] is the j-th
    direction of frame f.  For n=2 with max_entry=2 this yields the axis
    frame plus the diagonal and two knight-move frames (4 frames total).
    """
    dirs = _primitive_directions(n, max_entry)
    frames = []
    for combo in itertools.combinations(range(len(dirs)), n):
        vecs = [dirs[i] for i in combo]
        ok = all(
            sum(a * b for a, b in zip(vecs[i], vecs[j])) == 0
            for i in range(n)
            for j in range(i + 1, n)
        )
        if ok:
            frames.append(vecs)
    frames.sort(key=lambda vs: sum(sum(v * v for v in vec) for vec in vs))
    arr = np.array(frames, dtype=np.int64)
    # the minimal total norm frame is the axis frame; keep it in slot 0
    assert (np.abs(arr[0]).sum(axis=1) == 1).all()
    return arr


class FrameStencil:
    """Precomputed shift tables for second differences over integer frames.

    For every frame direction e and every Interior node, stores the flat
    indices of the stencil endpoints x +- h e and whether both are valued
    (inside the lattice box and not Outside).  The axis frame (frame 0) is
    valid at every Interior node by grid construction.
    """

    def __init__(self, grid: LogGrid, max_entry: int | None = None):
        n = grid.spec.n
        if max_entry is None:
            max_entry = 2 if n == 2 else 1
        self.grid = grid
        self.max_entry = max_entry
        self.frames = generate_frames(n, max_entry)
        F = len(self.frames)
        self.norms2 = (self.frames.astype(float) ** 2).sum(axis=2)  # (F, n)

        k_int = grid.node_k(grid.interior_flat)  # (N, n)
        N = len(k_int)
        m = grid.shape[0]
        cls = grid.classification.reshape(-1)

        self.plus_idx = np.empty((F, n, N), dtype=np.int64)
        self.minus_idx = np.empty((F, n, N), dtype=np.int64)
        self.valid = np.empty((F, n, N), dtype=bool)
        for f in range(F):
            for j in range(n):
                e = self.frames[f, j]
                kp = k_int + e
                km = k_int - e
                inbox = ((kp >= 0) & (kp < m) & (km >= 0) & (km < m)).all(axis=1)
                ip = (np.clip(kp, 0, m - 1) * grid.strides).sum(axis=1)
                im = (np.clip(km, 0, m - 1) * grid.strides).sum(axis=1)
                ok = inbox & (cls[ip] != OUTSIDE) & (cls[im] != OUTSIDE)
                self.plus_idx[f, j] = ip
                self.minus_idx[f, j] = im
                self.valid[f, j] = ok
        self.frame_valid = self.valid.all(axis=1)  # (F, N)
        if not self.frame_valid[0].all():
            raise RuntimeError("axis frame blocked at an Interior node")

    def second_differences(self, flat_values: np.ndarray) -> np.ndarray:
        """(F, n, N) array of centered second differences; NaN where invalid."""
        h2 = self.grid.spec.h**2
        u0 = flat_values[self.grid.interior_flat][None, None, :]
        up = flat_values[self.plus_idx]
        um = flat_values[self.minus_idx]
        d = (up + um - 2.0 * u0) / (h2 * self.norms2[:, :, None])
        d[~self.valid] = np.nan
        return d


def second_difference(fn: ToricGridFunction, direction) -> np.ndarray:
    """Centered second difference along one integer direction at Interior nodes.

    Returns Delta_e U = (U(x + h e) + U(x - h e) - 2 U(x)) / (h^2 |e|^2)
    as an array over grid.interior_flat, NaN where an endpoint is Outside or
    off the lattice.
    """
    grid = fn.grid
    e = np.asarray(direction, dtype=np.int64)
    if e.shape != (grid.spec.n,) or not e.any():
        raise ValueError("direction must be a nonzero integer vector of length n")
    m = grid.shape[0]
    cls = grid.classification.reshape(-1)
    k = grid.node_k(grid.interior_flat)
    kp, km = k + e, k - e
    inbox = ((kp >= 0) & (kp < m) & (km >= 0) & (km < m)).all(axis=1)
    ip = (np.clip(kp, 0, m - 1) * grid.strides).sum(axis=1)
    im = (np.clip(km, 0, m - 1) * grid.strides).sum(axis=1)
    ok = inbox & (cls[ip] != OUTSIDE) & (cls[im] != OUTSIDE)
    flat = fn.flat
    u0 = flat[grid.interior_flat]
    out = np.full(len(u0), np.nan)
    scale = grid.spec.h**2 * float((e * e).sum())
    out[ok] = (flat[ip[ok]] + flat[im[ok]] - 2.0 * u0[ok]) / scale
    return out


def ma_operator(
    fn: ToricGridFunction,
    stencil: FrameStencil | None = None,
    *,
    return_argmin: bool = False,
):
    """Wide-stencil discrete Monge-Ampere operator at Interior nodes.

    MA_h(U)(x) = max(0, min over frames of prod_j Delta_{e_j} U(x)), the
    minimum running over frames whose stencil is fully valued at x.  For
    convex U this underestimates det D^2 U restricted to the available
    frames (Hadamard's inequality), hence converges from above as the frame
    set grows.
    """
    if stencil is None:
        stencil = FrameStencil(fn.grid)
    d = stencil.second_differences(fn.flat)
    prod = d.prod(axis=1)  # (F, N); NaN where frame invalid
    prod[~stencil.frame_valid] = np.inf
    amin = np.argmin(prod, axis=0)
    vals = prod[amin, np.arange(prod.shape[1])]
    vals = np.maximum(vals, 0.0)
    if return_argmin:
        return vals, amin
    return vals


def discrete_ma_mass(
    fn: ToricGridFunction,
    stencil: FrameStencil | None = None,
    region_mask=None,
) -> float:
    """Total discrete Monge-Ampere mass, in the complex normalization.

    Sums (2 pi)^n n! MA_h(U) h^n over Interior nodes (optionally restricted
    by a boolean mask aligned with grid.interior_flat).  For u = |z|^2 on
    the unit ball this converges to 4^n n! Vol(B_n) as h -> 0.
    """
    grid = fn.grid
    n = grid.spec.n
    vals = ma_operator(fn, stencil)
    if region_mask is not None:
        vals = vals[np.asarray(region_mask, dtype=bool)]
    return float((2.0 * math.pi) ** n * math.factorial(n) * grid.spec.h**n * vals.sum())


def volume_weights(grid: LogGrid) -> np.ndarray:
    """Quadrature weights over Interior nodes for integrals against dV_{2n}.

    integral_D g dV_{2n} ~ sum over Interior of g(e^x) * w(x) with
    w = (2 pi)^n exp(2 sum x) h^n, for torus-invariant g.
    """
    n = grid.spec.n
    x = grid.node_x(grid.interior_flat)
    return (2.0 * math.pi) ** n * np.exp(2.0 * x.sum(axis=1)) * grid.spec.h**n


# ---------------------------------------------------------------------------
# Hermitian directional Laplacians
# ---------------------------------------------------------------------------


@dataclass
class HermitianDirection:
    """A Hermitian psd matrix H with its spectral decomposition cached.

    Delta_H u = sum_{jk} H_jk d^2 u / dz_j dzbar_k is sampled by averaging u
    over small circles in the eigendirections of H; see delta_H_sample.
    """

    matrix: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.matrix, dtype=complex)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError("H must be a square matrix")
        if not np.allclose(H, H.conj().T, atol=1e-12):
            raise ValueError("H must be Hermitian")
        w, v = np.linalg.eigh(H)
        if w.min() < -1e-12:
            raise ValueError("H must be positive semidefinite")
        self.matrix = H
        self.weights = np.maximum(w, 0.0)
        self.vectors = v  # columns are unit eigenvectors

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def det(self) -> float:
        return float(np.prod(self.weights))

    @classmethod
    def identity_scaled(cls, n: int) -> "HermitianDirection":
        """H = I/n, the unique det = n^{-n} multiple of the identity."""
        return cls(np.eye(n) / n)

    @classmethod
    def random_normalized(cls, n: int, rng: np.random.Generator) -> "HermitianDirection":
        """Random Hermitian psd H with det H = n^{-n} (Haar eigenframe)."""
        g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        q, r = np.linalg.qr(g)
        q = q * (np.diag(r) / np.abs(np.diag(r)))  # make the frame Haar
        lam = rng.normal(size=n)
        lam = np.exp(lam - lam.mean() - math.log(n))  # prod lam = n^{-n}
        return cls((q * lam) @ q.conj().T)


def delta_H_sample(u_fn, z0, H, *, delta: float = 1e-3, q: int = 16) -> float:
    """Sampled Hermitian Laplacian Delta_H u(z0) via small-circle means.

    For each eigenpair (w, v) of H, averages u over q equispaced points on
    the circle z0 + delta e^{i theta} v; the circle mean minus the center is
    delta^2 * (v-directional complex Hessian quadratic form) + O(delta^4),
    so the weighted sum over eigenpairs divided by delta^2 approximates
    Delta_H u.  ``u_fn`` must accept an (..., n) complex array.
    """
    if not isinstance(H, HermitianDirection):
        H = HermitianDirection(H)
    z0 = np.asarray(z0, dtype=complex)
    theta = 2.0 * math.pi * np.arange(q) / q
    phase = np.exp(1j * theta)
    total = 0.0
    u0 = float(np.asarray(u_fn(z0[None, :])).reshape(-1)[0])
    for w, v in zip(H.weights, H.vectors.T):
        if w == 0.0:
            continue
        pts = z0[None, :] + delta * phase[:, None] * v[None, :]
        ring = float(np.mean(np.asarray(u_fn(pts), dtype=float)))
        total += w * (ring - u0)
    return total / delta**2


def check_subsolution_deltaH(
    u_fn,
    z0,
    f_value: float,
    n: int,
    *,
    delta: float = 1e-3,
    q: int = 16,
    samples: int = 64,
    rng=None,
    tol: float = 1e-2,
):
    """Viscosity subsolution test for (dd^c u)^n >= f at a point.

    By the arithmetic-geometric mean inequality, u is a subsolution at z0
    iff for every Hermitian H >= 0 with det H = n^{-n}

        Delta_H u(z0) >= (f(z0) / (4^n n!))^{1/n},

    the right-hand side carrying the dd^c = 2i d dbar normalization.  The
    infimum is probed over `samples` random normalized H plus the scaled
    identity.  Returns (ok, margin): margin is the worst sampled slack, and
    ok requires margin >= -tol.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    threshold = (f_value / (4.0**n * math.factorial(n))) ** (1.0 / n)
    tried = [HermitianDirection.identity_scaled(n)]
    tried.extend(HermitianDirection.random_normalized(n, rng) for _ in range(samples))
    worst = math.inf
    for H in tried:
        worst = min(worst, delta_H_sample(u_fn, z0, H, delta=delta, q=q) - threshold)
    return bool(worst >= -tol), float(worst)


# ---------------------------------------------------------------------------
# torus averages
# ---------------------------------------------------------------------------


def toric_average_full(u_fn, z, q: int = 64) -> float:
    """Average of u over the full torus orbit through z (product rule, q per axis)."""
    z = np.asarray(z, dtype=complex)
    n = len(z)
    theta = 2.0 * math.pi * np.arange(q) / q
    grids = np.meshgrid(*([theta] * n), indexing="ij")
    phases = np.exp(1j * np.stack([g.reshape(-1) for g in grids], axis=1))
    pts = z[None, :] * phases
    return float(np.mean(np.asarray(u_fn(pts), dtype=float)))


@dataclass(frozen=True)
class AveragingSchedule:
    """Geometric schedule of window half-widths and offsets for u_k.

    Level k uses the angular window [-eps_k, eps_k]^n with eps_k =
    eps0 * ratio^k and the additive offset nu_k = nu0 * ratio^k.  At
    eps = pi the windowed average is the full torus average.
    """

    eps0: float = math.pi
    nu0: float = 1.0
    ratio: float = 0.5
    count: int = 12

    def __post_init__(self):
        if not (0 < self.ratio < 1):
            raise ValueError("ratio must lie in (0, 1)")
        if not (0 < self.eps0 <= math.pi):
            raise ValueError("eps0 must lie in (0, pi]")
        if self.count < 2:
            raise ValueError("schedule needs at least two levels")

    def eps(self, k: int) -> float:
        return self.eps0 * self.ratio**k

    def nu(self, k: int) -> float:
        return self.nu0 * self.ratio**k


def _window_average(u_fn, z, eps: float, samples_per_axis: int) -> float:
    """Composite midpoint average of u over the angular box [-eps, eps]^n at z."""
    z = np.asarray(z, dtype=complex)
    n = len(z)
    s = samples_per_axis
    theta = eps * (2.0 * np.arange(s) + 1.0 - s) / s
    grids = np.meshgrid(*([theta] * n), indexing="ij")
    phases = np.exp(1j * np.stack([g.reshape(-1) for g in grids], axis=1))
    pts = z[None, :] * phases
    return float(np.mean(np.asarray(u_fn(pts), dtype=float)))


def toric_average_windowed(
    u_fn,
    z,
    schedule: AveragingSchedule,
    k: int,
    *,
    window: int | None = 8,
    samples_per_axis: int = 64,
) -> float:
    """Level-k regularized average u_k(z) = nu_k + max over finer windows.

    The maximum runs over levels m = k+1 .. k+window (or to the end of the
    schedule when window is None, which makes k -> u_k(z) nonincreasing).
    For torus-invariant u every window average equals u(z), so
    u_k = nu_k + u(z) exactly.
    """
    if not (0 <= k < schedule.count):
        raise ValueError(f"level k={k} outside schedule range [0, {schedule.count})")
    last = schedule.count - 1 if window is None else min(k + window, schedule.count - 1)
    if last <= k:
        raise ValueError("schedule exhausted: no finer levels above k")
    best = -math.inf
    for m in range(k + 1, last + 1):
        best = max(best, _window_average(u_fn, z, schedule.eps(m), samples_per_axis))
    return schedule.nu(k) + best
