"""Envelope and Dirichlet solvers for the wide-stencil Monge-Ampere scheme.

The discrete problem at every Interior node is

    min( Phi(x) - U(x),  min over frames of prod_j Delta_{e_j} U(x) - C(x) ) = 0

with C = ftilde >= 0 the transformed density and Phi an optional upper
obstacle; CurvedBoundary nodes carry fixed Dirichlet data and ArtificialWall
nodes copy their diagonal-inward neighbor (zero normal difference).  The
scheme is degenerate elliptic: each node's update is the unique value t
making its own equation hold with all stencil second differences kept
nonnegative, so the fixpoint is the discrete envelope.

Without an obstacle the default route is ``ascend``: the exact
convex-monotone hull of the boundary data (the zero-density envelope,
computed by a lifted convex-hull construction) caps the solution from
above, a converged zero-boundary response to the same density starts it
from below, and the capped update u <- min(T(u), hull) climbs monotonically
between the two.  Both endpoints are canonical, so the limit is a
deterministic selection among the fixpoints of the degenerate operator --
plain policy iteration can stall on a fixpoint selected by arbitrary
features of its linearization path, which ruins comparisons between nearby
boundary data.  The ascent stops once the residual falls below the h^2
consistency level of the scheme, where further sweeps only polish a
discretization error that is already larger.

Three iteration modes reach the fixpoint directly and accept arbitrary
obstacles.  ``howard`` (the obstacle default) linearizes the min-type
equation around the current active policy -- obstacle row,
flattest-direction row, or AM-GM-weighted row -- and solves the resulting
sparse M-matrix system, which converges in a handful of outer passes;
``jacobi`` applies the nodewise update to all nodes simultaneously (the
parallel reference); ``sweep`` is a sequential Gauss-Seidel pass in
lexicographic order (the simple reference for small grids).  These modes
certify the residual

    sup_Interior |U - T(U)|  +  wall copy gap,

so accelerated and plain runs are interchangeable.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import ConvexHull, QhullError

from .calculus import DensityField, FrameStencil, ToricGridFunction
from .geometry import (
    OUTSIDE,
    BoundaryTrace,
    LogGrid,
    ReinhardtDomainSpec,
    build_log_grid,
)

__all__ = [
    "EnvelopeProblem",
    "SolveReport",
    "AttainmentReport",
    "p_envelope",
    "ma_dirichlet",
    "envelope_with_density",
    "monotone_boundary_approx",
    "boundary_attainment_scan",
]

TOL_RESIDUAL = 1e-8
_DIRECT_LIMIT = 60_000  # 3-d unknown count beyond which the sparse solve goes iterative
_DIRECT_LIMIT_2D = 300_000  # banded LU stays cheap much longer on planar lattices

# Strict-ellipticity floor applied to the density on the policy-iteration
# route.  With an exactly vanishing right-hand side every zero-density row
# degenerates to a single stencil direction, and the resulting chain systems
# are barely anchored; the floor keeps each interior row a weighted
# combination of all frame directions at a value shift of order
# sqrt(floor) * L^2, far below any tolerance used here.  The ascend route
# does not need it (its cap already fixes the selection) and runs on the
# raw density so that exact zeros stay exact.
_DENSITY_FLOOR = 1e-12

# The ascend route stops once the residual reaches this multiple of h^2,
# the consistency order of the wide-stencil scheme: iterating further only
# polishes the fixpoint of an operator whose own truncation error is larger.
_ASCEND_TRUNCATION = 0.1

# Recession depth for the hull construction: pushing shadow copies of the
# boundary cloud to x_j = -box forbids negative slope components in the
# lower facets.  Must be much deeper than any wall depth L in use.
_HULL_RECESSION_BOX = 64.0


@dataclass
class SolveReport:
    """What the solver did and how well it converged."""

    converged: bool
    residual: float
    wall_gap: float
    outer_iterations: int
    sweeps: int
    mode: str
    linear_solver: str
    elapsed: float
    grid_shape: tuple
    notes: str = ""

    def __str__(self):
        flag = "converged" if self.converged else "NOT CONVERGED"
        return (
            f"[{self.mode}] {flag}: residual={self.residual:.3e} "
            f"wall_gap={self.wall_gap:.3e} outer={self.outer_iterations} "
            f"sweeps={self.sweeps} in {self.elapsed:.2f}s"
        )


@dataclass
class EnvelopeProblem:
    """A fully discretized instance: grid, Dirichlet trace, density, obstacle.

    ``ftilde_int`` is the transformed density at Interior nodes (zeros for
    pure envelopes), ``obstacle_int`` an upper bound at Interior nodes or
    None.  Wrappers normalize user-facing inputs into this form.
    """

    grid: LogGrid
    trace: BoundaryTrace
    ftilde_int: np.ndarray
    obstacle_int: np.ndarray | None = None

    def __post_init__(self):
        ni = len(self.grid.interior_flat)
        self.ftilde_int = np.asarray(self.ftilde_int, dtype=float)
        if self.ftilde_int.shape != (ni,):
            raise ValueError("ftilde_int must align with grid.interior_flat")
        if (self.ftilde_int < 0).any() or not np.isfinite(self.ftilde_int).all():
            raise ValueError("density must be finite and nonnegative")
        if self.obstacle_int is not None:
            self.obstacle_int = np.asarray(self.obstacle_int, dtype=float)
            if self.obstacle_int.shape != (ni,):
                raise ValueError("obstacle_int must align with grid.interior_flat")


# ---------------------------------------------------------------------------
# nodewise Bellman update
# ---------------------------------------------------------------------------


def _frame_roots(flat: np.ndarray, st: FrameStencil, C: np.ndarray):
    """Per-frame update values t_F at every Interior node.

    For frame F, t_F is the unique t with prod_j (a_j - b_j t) = C and all
    factors nonnegative, where a_j = (U(x+he_j)+U(x-he_j)) / (h^2 |e_j|^2)
    and b_j = 2 / (h^2 |e_j|^2).  Monotonicity of the product in t on the
    all-nonnegative branch makes t_F well defined; invalid frames give +inf.
    Returns (t_frames (F,N), a (F,n,N), b (F,n,1)).
    """
    grid = st.grid
    h2 = grid.spec.h**2
    up = flat[st.plus_idx]
    um = flat[st.minus_idx]
    S = up + um  # (F, n, N)
    b = 2.0 / (h2 * st.norms2[:, :, None])  # (F, n, 1)
    a = S / (h2 * st.norms2[:, :, None])
    n = grid.spec.n

    if n == 2:
        a1, a2 = a[:, 0, :], a[:, 1, :]
        b1, b2 = b[:, 0, :], b[:, 1, :]
        p = a1 * b2 + a2 * b1
        disc = (a1 * b2 - a2 * b1) ** 2 + 4.0 * b1 * b2 * C[None, :]
        sq = np.sqrt(disc)
        with np.errstate(divide="ignore", invalid="ignore"):
            # Kahan's branch switch keeps the smaller root stable.
            t_pos = 2.0 * (a1 * a2 - C[None, :]) / (p + sq)
            t_neg = (p - sq) / (2.0 * b1 * b2)
        t = np.where(p > 0, t_pos, t_neg)
    else:
        t0 = (a / b).min(axis=1)  # (F, N): value with the flattest factor zero
        span = np.cbrt(np.maximum(C, 0.0))[None, :] / b.min(axis=1)
        lo = t0 - span - 1e-15
        hi = t0.copy()
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            g = (a - b * mid[:, None, :]).prod(axis=1)
            take_hi = g >= C[None, :]
            lo = np.where(take_hi, mid, lo)
            hi = np.where(take_hi, hi, mid)
        t = 0.5 * (lo + hi)

    t = np.where(st.frame_valid, t, np.inf)
    return t, a, b


def _targets(flat: np.ndarray, st: FrameStencil, prob: EnvelopeProblem):
    """Nodewise update values min(obstacle, min_F t_F) at Interior nodes."""
    t_frames, _, _ = _frame_roots(flat, st, prob.ftilde_int)
    t = t_frames.min(axis=0)
    if prob.obstacle_int is not None:
        t = np.minimum(t, prob.obstacle_int)
    return t


def _residual(flat: np.ndarray, st: FrameStencil, prob: EnvelopeProblem):
    grid = prob.grid
    t = _targets(flat, st, prob)
    r_int = float(np.abs(flat[grid.interior_flat] - t).max())
    if len(grid.wall_flat):
        r_wall = float(np.abs(flat[grid.wall_flat] - flat[grid.wall_target_flat]).max())
    else:
        r_wall = 0.0
    return max(r_int, r_wall), r_wall


def _jacobi_sweeps(flat, st, prob, count, omega=1.0):
    grid = prob.grid
    for _ in range(count):
        t = _targets(flat, st, prob)
        flat[grid.interior_flat] = (1 - omega) * flat[grid.interior_flat] + omega * t
        flat[grid.wall_flat] = flat[grid.wall_target_flat]
    return flat


# ---------------------------------------------------------------------------
# Howard (policy iteration) pass
# ---------------------------------------------------------------------------


def _linear_solve(A: sp.csr_matrix, rhs: np.ndarray, ndim: int = 2):
    """Sparse solve cascade: direct LU when affordable, iterative above it.

    Banded fill keeps splu cheap in 2-d well past the point where it blows
    up in 3-d, so the direct cutoff depends on the lattice dimension.  The
    iterative rungs (Ruge-Stuben AMG, then ILU-BiCGStab) are validated
    against the true residual and fall through on any failure; returning
    ``None`` sends the caller back to damped sweeps.
    """
    nun = A.shape[0]
    limit = _DIRECT_LIMIT_2D if ndim <= 2 else _DIRECT_LIMIT
    if nun <= limit:
        try:
            return spla.splu(A.tocsc()).solve(rhs), "splu"
        except (RuntimeError, MemoryError):
            return None, "singular"
    scale = np.linalg.norm(rhs) + 1e-30

    def good(x):
        if x is None or not np.isfinite(x).all():
            return False
        return np.linalg.norm(A @ x - rhs) <= 1e-9 * scale + 1e-12

    try:
        import pyamg

        ml = pyamg.ruge_stuben_solver(A)
        x = ml.solve(rhs, tol=1e-12, accel="bicgstab", maxiter=300)
        if good(x):
            return x, "pyamg"
    except Exception:
        pass
    try:
        ilu = spla.spilu(A.tocsc(), drop_tol=1e-5, fill_factor=12.0)
        pre = spla.LinearOperator(A.shape, ilu.solve)
        x, info = spla.bicgstab(A, rhs, rtol=1e-12, atol=1e-13, maxiter=400, M=pre)
        if info == 0 and good(x):
            return x, "ilu-bicgstab"
    except Exception:
        pass
    try:
        return spla.splu(A.tocsc()).solve(rhs), "splu"
    except Exception:
        return None, "singular"


def _howard_pass(flat, st, prob):
    """One policy-iteration step: freeze the active policy, solve linearly.

    Unknowns are Interior plus ArtificialWall values.  Row types:
      * obstacle active:    U_i = Phi_i
      * zero density:       2 U_i - U_+ - U_- = 0 along the flattest valid
                            direction of the minimizing frame
      * positive density:   sum_j w_j Delta_j U = C^{1/n} with the AM-GM
                            weights w_j of the current second differences
      * wall:               U_w - U_target = 0
    CurvedBoundary neighbors are folded into the right-hand side.
    """
    grid = prob.grid
    n = grid.spec.n
    Ni = len(grid.interior_flat)
    Nw = len(grid.wall_flat)
    Nu = Ni + Nw
    C = prob.ftilde_int

    pos = np.full(grid.size, -1, dtype=np.int64)
    pos[grid.interior_flat] = np.arange(Ni)
    pos[grid.wall_flat] = Ni + np.arange(Nw)
    bvals = np.full(grid.size, np.nan)
    bvals[grid.curved_flat] = prob.trace.values

    t_frames, a, b = _frame_roots(flat, st, C)
    fstar = np.argmin(t_frames, axis=0)  # (N,)
    t_bell = t_frames[fstar, np.arange(Ni)]

    if prob.obstacle_int is not None:
        on_obstacle = prob.obstacle_int <= t_bell
    else:
        on_obstacle = np.zeros(Ni, dtype=bool)

    rows, cols, vals = [], [], []
    rhs = np.zeros(Nu)

    def add_entries(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    # obstacle rows
    io = np.flatnonzero(on_obstacle)
    if len(io):
        add_entries(io, io, np.ones(len(io)))
        rhs[io] = prob.obstacle_int[io]

    ar = np.arange(Ni)
    gather = lambda arr: arr[fstar, :, ar].T  # (F,n,N) -> (n, N) at the active frame
    a_star = gather(a)
    b_star = np.broadcast_to(b, (b.shape[0], n, Ni))
    b_star = gather(b_star)
    plus_star = gather(st.plus_idx)
    minus_star = gather(st.minus_idx)

    u_int = flat[grid.interior_flat]

    def emit(node_sel, coef_by_dir, rhs_base):
        """Scatter rows for selected nodes: diag + 2n neighbor entries."""
        if not len(node_sel):
            return
        diag = np.zeros(len(node_sel))
        extra = np.zeros(len(node_sel))
        for j in range(n):
            w = coef_by_dir[j]
            diag += 2.0 * w
            for idx in (plus_star[j, node_sel], minus_star[j, node_sel]):
                nb_pos = pos[idx]
                fixed = nb_pos < 0  # CurvedBoundary neighbor: move to RHS
                live = ~fixed
                if live.any():
                    add_entries(node_sel[live], nb_pos[live], -w[live])
                if fixed.any():
                    extra[fixed] += w[fixed] * bvals[idx[fixed]]
        add_entries(node_sel, node_sel, diag)
        rhs[node_sel] = rhs_base + extra

    # zero-density rows: flattest direction of the active frame
    iz = np.flatnonzero(~on_obstacle & (C == 0.0))
    if len(iz):
        ratio = a_star[:, iz] / b_star[:, iz]
        jz = np.argmin(ratio, axis=0)
        # keep only the selected direction's entries
        pj = np.stack([plus_star[j, iz] for j in range(n)])
        mj = np.stack([minus_star[j, iz] for j in range(n)])
        sel_p = pj[jz, np.arange(len(iz))]
        sel_m = mj[jz, np.arange(len(iz))]
        diag = np.full(len(iz), 2.0)
        extra = np.zeros(len(iz))
        for idx in (sel_p, sel_m):
            nb_pos = pos[idx]
            fixed = nb_pos < 0
            live = ~fixed
            if live.any():
                add_entries(iz[live], nb_pos[live], -np.ones(live.sum()))
            if fixed.any():
                extra[fixed] += bvals[idx[fixed]]
        add_entries(iz, iz, diag)
        rhs[iz] = extra

    # positive-density rows: AM-GM weighted combination of the frame's axes
    ip = np.flatnonzero(~on_obstacle & (C > 0.0))
    if len(ip):
        d2 = a_star[:, ip] - b_star[:, ip] * u_int[ip][None, :]  # current Delta_j
        floor = 1e-14 + 1e-7 * np.power(C[ip], 1.0 / n)[None, :]
        d2 = np.maximum(d2, floor)
        geo = np.exp(np.log(d2).mean(axis=0))  # (prod Delta_j)^{1/n}
        w = geo[None, :] / (n * d2)  # AM-GM weights
        coef = [w[j] * b_star[j, ip] / 2.0 for j in range(n)]
        emit(ip, coef, -np.power(C[ip], 1.0 / n))
        # equation assembled as  sum_j w_j b_j U_i - sum_j (w_j b_j / 2)(U_+ + U_-)
        #                        = -C^{1/n}
        # which is -(sum_j w_j Delta_j U - C^{1/n}) = 0 with a positive diagonal.

    # wall rows
    if Nw:
        wr = Ni + np.arange(Nw)
        add_entries(wr, wr, np.ones(Nw))
        tgt = grid.wall_target_flat
        tgt_pos = pos[tgt]
        fixed = tgt_pos < 0
        live = ~fixed
        if live.any():
            add_entries(wr[live], tgt_pos[live], -np.ones(live.sum()))
        if fixed.any():
            rhs[wr[fixed]] = bvals[tgt[fixed]]

    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(Nu, Nu),
    )
    x, solver = _linear_solve(A, rhs, n)
    if x is None or not np.isfinite(x).all():
        return None, solver
    out = flat.copy()
    out[grid.interior_flat] = x[:Ni]
    out[grid.wall_flat] = x[Ni:]
    if prob.obstacle_int is not None:
        out[grid.interior_flat] = np.minimum(out[grid.interior_flat], prob.obstacle_int)
        out[grid.wall_flat] = out[grid.wall_target_flat]
    return out, solver


# ---------------------------------------------------------------------------
# sequential reference sweep
# ---------------------------------------------------------------------------


def _gauss_seidel_sweeps(flat, st, prob, count):
    """Plain lexicographic Gauss-Seidel on the nodewise update (small grids).

    Sequential scalar twin of the vectorized Bellman update: fresh neighbor
    values are used as soon as they are written.  The n = 2 root uses the
    same Kahan branch switch as _frame_roots; n = 3 bisects the bracketed
    product equation nodewise.
    """
    grid = prob.grid
    n = grid.spec.n
    h2 = grid.spec.h**2
    C = prob.ftilde_int
    obst = prob.obstacle_int
    F = len(st.frames)
    order = np.argsort(grid.interior_flat)  # lexicographic == flat order
    wall_order = np.argsort(grid.wall_flat)
    inv_norm = [
        [1.0 / (h2 * float(st.norms2[f, j])) for j in range(n)] for f in range(F)
    ]
    plus = st.plus_idx
    minus = st.minus_idx
    valid = st.frame_valid
    vals = flat  # plain 1-d ndarray; scalar indexing below

    for _ in range(count):
        for w in wall_order:
            vals[grid.wall_flat[w]] = vals[grid.wall_target_flat[w]]
        for ii in order:
            node = grid.interior_flat[ii]
            c = float(C[ii])
            best = math.inf
            for f in range(F):
                if not valid[f, ii]:
                    continue
                if n == 2:
                    iv0, iv1 = inv_norm[f]
                    a1 = (vals[plus[f, 0, ii]] + vals[minus[f, 0, ii]]) * iv0
                    a2 = (vals[plus[f, 1, ii]] + vals[minus[f, 1, ii]]) * iv1
                    b1 = 2.0 * iv0
                    b2 = 2.0 * iv1
                    p = a1 * b2 + a2 * b1
                    sq = math.sqrt((a1 * b2 - a2 * b1) ** 2 + 4.0 * b1 * b2 * c)
                    if p > 0:
                        t = 2.0 * (a1 * a2 - c) / (p + sq)
                    else:
                        t = (p - sq) / (2.0 * b1 * b2)
                else:
                    aa = [
                        (vals[plus[f, j, ii]] + vals[minus[f, j, ii]]) * inv_norm[f][j]
                        for j in range(n)
                    ]
                    bb = [2.0 * iv for iv in inv_norm[f]]
                    hi = min(a / b for a, b in zip(aa, bb))
                    if c == 0.0:
                        t = hi
                    else:
                        lo = hi - c ** (1.0 / n) / min(bb) - 1e-15
                        for _b in range(60):
                            mid = 0.5 * (lo + hi)
                            g = 1.0
                            for a, b in zip(aa, bb):
                                g *= a - b * mid
                            if g >= c:
                                lo = mid
                            else:
                                hi = mid
                        t = 0.5 * (lo + hi)
                if t < best:
                    best = t
            if obst is not None and obst[ii] < best:
                best = obst[ii]
            vals[node] = best
    return flat


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def _initial_state(prob: EnvelopeProblem) -> np.ndarray:
    grid = prob.grid
    top = prob.trace.max_value()
    flat = np.full(grid.size, np.nan)
    live = grid.classification.reshape(-1) != OUTSIDE
    flat[live] = top
    if prob.obstacle_int is not None:
        flat[grid.interior_flat] = np.minimum(top, prob.obstacle_int)
    flat[grid.curved_flat] = prob.trace.values
    flat[grid.wall_flat] = flat[grid.wall_target_flat]
    return flat


def _solve_single(prob, *, mode, tol, max_outer, max_sweeps, stencil, init=None):
    grid = prob.grid
    st = stencil
    t_start = time.perf_counter()
    flat = _initial_state(prob) if init is None else init
    sweeps = 0
    outer = 0
    solver_used = "none"
    best = math.inf
    worse_count = 0
    omega = 1.0

    if mode == "sweep":
        res, wall_gap = _residual(flat, st, prob)
        while res > tol and sweeps < max_sweeps:
            flat = _gauss_seidel_sweeps(flat, st, prob, 1)
            sweeps += 1
            res, wall_gap = _residual(flat, st, prob)
    elif mode == "jacobi":
        res, wall_gap = _residual(flat, st, prob)
        while res > tol and sweeps < max_sweeps:
            step = min(50, max_sweeps - sweeps)
            flat = _jacobi_sweeps(flat, st, prob, step, omega)
            sweeps += step
            res, wall_gap = _residual(flat, st, prob)
    elif mode == "howard":
        res, wall_gap = _residual(flat, st, prob)
        while res > tol and outer < max_outer:
            cand, solver = _howard_pass(flat, st, prob)
            outer += 1
            if cand is None:
                # singular linearization: smooth with damped sweeps, retry
                flat = _jacobi_sweeps(flat, st, prob, 30, 0.8)
                sweeps += 30
            else:
                solver_used = solver
                if omega < 1.0:
                    live = grid.classification.reshape(-1) != OUTSIDE
                    cand[live] = (1 - omega) * flat[live] + omega * cand[live]
                flat = cand
                flat = _jacobi_sweeps(flat, st, prob, 5, 1.0)
                sweeps += 5
            res, wall_gap = _residual(flat, st, prob)
            if res > best * 1.05:
                worse_count += 1
                if worse_count >= 2:
                    omega = 0.5
            best = min(best, res)
        if res > tol:
            cap = max(200, max_sweeps)
            while res > tol and sweeps < cap:
                flat = _jacobi_sweeps(flat, st, prob, 25, 1.0)
                sweeps += 25
                res, wall_gap = _residual(flat, st, prob)
    else:
        raise ValueError(f"unknown mode {mode!r}; expected howard, jacobi, or sweep")

    report = SolveReport(
        converged=bool(res <= tol),
        residual=float(res),
        wall_gap=float(wall_gap),
        outer_iterations=outer,
        sweeps=sweeps,
        mode=mode,
        linear_solver=solver_used,
        elapsed=time.perf_counter() - t_start,
        grid_shape=grid.shape,
    )
    return flat, report


def _normalize_boundary(grid, boundary) -> BoundaryTrace:
    if isinstance(boundary, BoundaryTrace):
        if boundary.grid is not grid and boundary.grid != grid:
            raise ValueError("boundary trace was built for a different grid")
        return boundary
    if np.isscalar(boundary):
        return BoundaryTrace.constant(grid, float(boundary))
    return BoundaryTrace.from_radii_function(grid, boundary)


def _normalize_obstacle(grid, obstacle):
    if obstacle is None:
        return None
    x = grid.node_x(grid.interior_flat)
    if isinstance(obstacle, ToricGridFunction):
        return obstacle.eval_x(x)
    if np.isscalar(obstacle):
        return np.full(len(x), float(obstacle))
    return np.asarray(obstacle(x), dtype=float)


def _normalize_density(grid, density):
    if density is None:
        return np.zeros(len(grid.interior_flat)), None
    if isinstance(density, DensityField):
        if density.grid != grid:
            density = DensityField(grid, density._radii_fn)
        return density.interior_log_values(), density._radii_fn
    if np.isscalar(density):
        field = DensityField.constant(grid, float(density))
    else:
        field = DensityField(grid, density)
    return field.interior_log_values(), field._radii_fn


def _coarse_chain(spec: ReinhardtDomainSpec):
    """Specs at h, 2h, 4h, ... (coarsest first), stopping near the wall depth."""
    chain = [spec]
    h = spec.h
    while True:
        h = h * 2.0
        if h >= spec.L / 4.0 or spec.L / h < 8:
            break
        chain.append(ReinhardtDomainSpec(spec.kind, spec.n, spec.L, h))
    return chain[::-1]


def _solve(
    grid_or_spec,
    boundary,
    density=None,
    obstacle=None,
    *,
    mode="auto",
    tol=TOL_RESIDUAL,
    max_outer=30,
    max_sweeps=4000,
    continuation=True,
    stencil_max_entry=None,
):
    grid = (
        build_log_grid(grid_or_spec)
        if isinstance(grid_or_spec, ReinhardtDomainSpec)
        else grid_or_spec
    )
    trace = _normalize_boundary(grid, boundary)
    ftilde, radii_fn = _normalize_density(grid, density)
    obst = _normalize_obstacle(grid, obstacle)
    if mode == "auto":
        mode = "howard" if obst is not None else "ascend"
    st = FrameStencil(grid, stencil_max_entry)
    if mode == "ascend":
        if obst is not None:
            raise ValueError("mode='ascend' does not support obstacle problems")
        return _solve_ascend(
            grid,
            trace,
            density,
            ftilde,
            st,
            tol=tol,
            max_outer=max_outer,
            max_sweeps=max_sweeps,
            continuation=continuation,
        )
    prob = EnvelopeProblem(grid, trace, np.maximum(ftilde, _DENSITY_FLOOR), obst)

    init = None
    can_continue = (
        continuation
        and mode == "howard"
        and trace.radii_fn is not None
        and grid.shape[0] >= 33
    )
    if can_continue:
        prev_fn = None
        for cspec in _coarse_chain(grid.spec)[:-1]:
            cgrid = build_log_grid(cspec)
            ctrace = BoundaryTrace.from_radii_function(cgrid, trace.radii_fn)
            cft, _ = _normalize_density(
                cgrid, radii_fn if radii_fn is not None else None
            )
            cobst = _normalize_obstacle(cgrid, obstacle)
            cprob = EnvelopeProblem(
                cgrid, ctrace, np.maximum(cft, _DENSITY_FLOOR), cobst
            )
            cst = FrameStencil(cgrid, stencil_max_entry)
            cinit = None
            if prev_fn is not None:
                cinit = _prolong(prev_fn, cprob)
            cflat, _ = _solve_single(
                cprob,
                mode="howard",
                tol=max(tol, 1e-7),
                max_outer=max_outer,
                max_sweeps=max_sweeps,
                stencil=cst,
                init=cinit,
            )
            prev_fn = ToricGridFunction(cgrid, cflat.reshape(cgrid.shape))
        if prev_fn is not None:
            init = _prolong(prev_fn, prob)

    flat, report = _solve_single(
        prob,
        mode=mode,
        tol=tol,
        max_outer=max_outer,
        max_sweeps=max_sweeps,
        stencil=st,
        init=init,
    )
    fn = ToricGridFunction(grid, flat.reshape(grid.shape))
    return fn, report


def _prolong(coarse_fn: ToricGridFunction, prob: EnvelopeProblem) -> np.ndarray:
    """Interpolate a coarse solution onto a fine problem's grid as an init."""
    grid = prob.grid
    flat = np.full(grid.size, np.nan)
    live = np.flatnonzero(grid.classification.reshape(-1) != OUTSIDE)
    vals = coarse_fn.eval_x(grid.node_x(live))
    vals = np.atleast_1d(vals)
    top = prob.trace.max_value()
    vals[~np.isfinite(vals)] = top
    flat[live] = vals
    if prob.obstacle_int is not None:
        flat[grid.interior_flat] = np.minimum(
            flat[grid.interior_flat], prob.obstacle_int
        )
    flat[grid.curved_flat] = prob.trace.values
    flat[grid.wall_flat] = flat[grid.wall_target_flat]
    return flat


# ---------------------------------------------------------------------------
# monotone hull and capped ascent
# ---------------------------------------------------------------------------


def _monotone_hull(grid: LogGrid, trace: BoundaryTrace) -> np.ndarray:
    """Exact convex-monotone hull of the boundary data in log coordinates.

    The zero-density envelope is the largest convex function, nondecreasing
    in every coordinate, that stays below the data on the curved boundary:
    the upper envelope of affine minorants s . x + c with s >= 0.  Candidate
    slopes come from the lower facets of the lifted cloud {(b_i, phi_i)}
    augmented with shadow copies pushed to x_j = -box, which penalizes
    negative slope components out of existence.  Shadow-supported facets
    carry a small spurious positive component in the recession direction, so
    every coordinate-zeroed variant of each facet slope is added as well;
    recomputing all intercepts exactly against the data then makes every
    candidate a true minorant, and the pointwise maximum is exact wherever
    the optimal plane is supported by data points or has zero components.

    Returns the hull at every live node (NaN outside the domain).
    """
    b = grid.node_x(grid.curved_flat)
    phi = np.asarray(trace.values, dtype=float)
    n = grid.spec.n
    if phi.max() - phi.min() < 1e-13:
        slopes = np.zeros((1, n))
        icepts = np.array([float(phi.min())])
    else:
        lifted = [np.column_stack([b, phi])]
        for j in range(n):
            shadow = b.copy()
            shadow[:, j] = -_HULL_RECESSION_BOX
            lifted.append(np.column_stack([shadow, phi]))
        cloud = np.vstack(lifted)
        try:
            hull = ConvexHull(cloud)
        except QhullError:
            hull = ConvexHull(cloud, qhull_options="QJ")
        normal = hull.equations[:, :n]
        vertical = hull.equations[:, n]
        lower = vertical < -1e-12
        slopes = np.maximum(-normal[lower] / vertical[lower, None], 0.0)
        pieces = [slopes]
        for mask in range(1, 2**n):
            sv = slopes.copy()
            for j in range(n):
                if mask >> j & 1:
                    sv[:, j] = 0.0
            pieces.append(sv)
        slopes = np.unique(np.round(np.vstack(pieces), 12), axis=0)
        icepts = np.empty(len(slopes))
        for i in range(0, len(slopes), 4096):
            icepts[i : i + 4096] = (phi[None, :] - slopes[i : i + 4096] @ b.T).min(
                axis=1
            )
    live = np.flatnonzero(grid.classification.reshape(-1) != OUTSIDE)
    out = np.full(grid.size, np.nan)
    for k in range(0, len(live), 20000):
        idx = live[k : k + 20000]
        X = grid.node_x(idx)
        vals = np.full(len(idx), -np.inf)
        for i in range(0, len(slopes), 4096):
            vals = np.maximum(
                vals, (X @ slopes[i : i + 4096].T + icepts[i : i + 4096]).max(axis=1)
            )
        out[idx] = vals
    return out


def _solve_ascend(
    grid, trace, density, ftilde, stencil, *, tol, max_outer, max_sweeps, continuation
):
    """Hull-capped monotone ascent; the obstacle-free default route.

    Sandwich construction: the convex-monotone hull of the data caps the
    solution from above (it is the zero-density solution, and adding mass
    only pushes down), while hull + w starts it from below, where w solves
    the same density with zero boundary data (superadditivity of the
    product operator makes the sum a discrete subsolution).  The capped
    update u <- min(T(u), hull) then increases monotonically, so the limit
    is the minimal fixpoint above a canonical subsolution -- the same
    selection for every nearby data set, which is what comparisons between
    perturbed boundary values need.  For zero density w vanishes, the first
    sweep verifies the hull is already the fixpoint, and the cost is one
    residual evaluation.
    """
    t_start = time.perf_counter()
    cap = _monotone_hull(grid, trace)
    prob = EnvelopeProblem(grid, trace, ftilde, None)
    h = grid.spec.h
    tol_eff = max(tol, _ASCEND_TRUNCATION * h * h)
    base = cap
    solver_used = "hull"
    if float(ftilde.max(initial=0.0)) > 0.0:
        w_fn, w_rep = _solve(
            grid,
            0.0,
            density,
            None,
            mode="howard",
            tol=tol,
            max_outer=max_outer,
            max_sweeps=max_sweeps,
            continuation=continuation,
        )
        w = w_fn.values.reshape(-1).copy()
        w[~np.isfinite(w)] = 0.0
        base = cap + w
        solver_used = f"hull+{w_rep.linear_solver}"
    u = base.copy()
    u[grid.curved_flat] = trace.values
    u[grid.wall_flat] = u[grid.wall_target_flat]
    ii = grid.interior_flat
    cap_int = cap[ii]
    budget = max(max_sweeps, int(round(8.0 * _ASCEND_TRUNCATION / (h * h))))
    sweeps = 0
    res = math.inf
    while sweeps < budget:
        t = np.minimum(_targets(u, stencil, prob), cap_int)
        res = float(np.abs(t - u[ii]).max())
        u[ii] = t
        u[grid.wall_flat] = u[grid.wall_target_flat]
        sweeps += 1
        if res <= tol_eff:
            break
    report = SolveReport(
        converged=bool(res <= tol_eff),
        residual=float(res),
        wall_gap=0.0,
        outer_iterations=0,
        sweeps=sweeps,
        mode="ascend",
        linear_solver=solver_used,
        elapsed=time.perf_counter() - t_start,
        grid_shape=grid.shape,
        notes=f"hull-capped ascent, stop level {tol_eff:.1e}",
    )
    return ToricGridFunction(grid, u.reshape(grid.shape)), report


# ---------------------------------------------------------------------------
# public wrappers
# ---------------------------------------------------------------------------


def p_envelope(grid_or_spec, boundary, obstacle=None, **kwargs):
    """Largest negative-of-nothing envelope: MA = 0 below an obstacle.

    Computes the discrete version of the supremum of toric psh functions
    bounded above by `obstacle` (when given) whose boundary values do not
    exceed `boundary`.  Returns (ToricGridFunction, SolveReport).

    Parameters
    ----------
    grid_or_spec :
        LogGrid or ReinhardtDomainSpec.
    boundary :
        BoundaryTrace, a callable of the boundary radii, or a constant.
    obstacle :
        None, a constant, a callable of the log coordinates, or a
        ToricGridFunction to be resampled.
    mode, tol, max_outer, max_sweeps, continuation, stencil_max_entry :
        Solver controls; see the module docstring.
    """
    return _solve(grid_or_spec, boundary, None, obstacle, **kwargs)


def ma_dirichlet(grid_or_spec, boundary, density, **kwargs):
    """Dirichlet problem (dd^c u)^n = f dV with toric data.

    `density` is a DensityField, a constant (the complex-side value of f),
    or a callable of the radii.  Returns (ToricGridFunction, SolveReport).
    """
    return _solve(grid_or_spec, boundary, density, None, **kwargs)


def envelope_with_density(grid_or_spec, boundary, density, obstacle, **kwargs):
    """Obstacle problem with a mass floor: largest U <= obstacle with MA >= ftilde."""
    return _solve(grid_or_spec, boundary, density, obstacle, **kwargs)


# ---------------------------------------------------------------------------
# boundary data helpers
# ---------------------------------------------------------------------------


def monotone_boundary_approx(grid, region, k: float) -> BoundaryTrace:
    """Continuous monotone approximation of the indicator data -1_A.

    phi_k(zeta) = min(0, -1 + k * dist(zeta, A)) with dist measured in the
    region's boundary parametrization: phi_k = -1 on A, increases to 0 away
    from it, and phi_k <= phi_{k+1} pointwise with limit -1 on the closure
    of A and 0 elsewhere.  Returns a BoundaryTrace (everywhere continuous)
    whose radii_fn is retained so coarse grids can be resampled.
    """
    if k <= 0:
        raise ValueError("approximation index k must be positive")

    def fn(r):
        d = region.distance_radii(np.atleast_2d(np.asarray(r, dtype=float)))
        return float(np.minimum(0.0, -1.0 + k * d)[0])

    return BoundaryTrace.from_radii_function(grid, fn)


@dataclass
class AttainmentReport:
    """Worst boundary gap per approach distance, over continuity nodes."""

    t_values: np.ndarray
    worst: np.ndarray
    nodes_checked: int

    def decay_ratio(self) -> float:
        """worst[first] / worst[last]; > 1 means the gap shrinks on approach."""
        if self.worst[-1] == 0:
            return math.inf
        return float(self.worst[0] / self.worst[-1])


def boundary_attainment_scan(
    fn: ToricGridFunction,
    trace: BoundaryTrace,
    *,
    t_values=(0.25, 0.125, 0.0625),
    only_continuity: bool = True,
    max_nodes: int = 4000,
) -> AttainmentReport:
    """Measure how the solution approaches its Dirichlet data radially.

    For each CurvedBoundary node (restricted to ContinuityPoint flags by
    default) the solution is evaluated at radii scaled inward by 1-t for
    each t in t_values, and compared against the node's datum; the report
    records sup-norm gaps per t.  Decreasing gaps as t -> 0 witness
    boundary attainment at continuity points.
    """
    grid = fn.grid
    sel = np.flatnonzero(trace.continuity) if only_continuity else np.arange(
        len(trace.values)
    )
    if len(sel) > max_nodes:
        sel = sel[np.linspace(0, len(sel) - 1, max_nodes).astype(int)]
    radii = grid.curved_snap_radii[sel]
    data = trace.values[sel]
    t_values = np.asarray(t_values, dtype=float)
    worst = np.empty(len(t_values))
    for i, t in enumerate(t_values):
        if grid.spec.kind == "UnitBall":
            r = radii * (1.0 - t)
        else:
            r = np.where(radii >= 1.0 - 1e-12, 1.0 - t, radii)
        vals = fn.eval_x(np.log(r))
        worst[i] = float(np.abs(np.atleast_1d(vals) - data).max())
    return AttainmentReport(t_values=t_values, worst=worst, nodes_checked=len(sel))
