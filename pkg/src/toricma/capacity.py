"""Relative extremal functions, capacities, and measure-class gauges.

The relative capacity of a torus-saturated compact K inside the domain is

    cap(K) = sup { mass of (dd^c u)^n on K : u psh, -1 <= u < 0 },

and the sup is attained by the relative extremal function, the envelope
with obstacle -1 on K (0 elsewhere) and zero boundary values; so capacity
reduces to one envelope solve plus the discrete mass functional.

The gauges h_fn and psi_h quantify admissible right-hand sides: densities f
with integral of psi_h(f) below a budget c_0 form an Orlicz-type ball that
embeds into the capacity-dominated class

    mu(K) <= A * cap(K) / h_fn(cap(K)^{-1/n})

for a constant A depending only on the budget.  The embedding constant is
not explicit, so class_F_check measures the worst ratio over a declared
family of compacts and calibration freezes it empirically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .calculus import ToricGridFunction, volume_weights
from .envelopes import SolveReport, p_envelope
from .geometry import LogGrid

__all__ = [
    "CapacityClassParams",
    "CompactRegion",
    "relative_extremal",
    "capacity",
    "h_fn",
    "psi_h",
    "lpsi_membership",
    "class_F_check",
    "calibrate_class_constant",
    "ClassCheckReport",
]


@dataclass(frozen=True)
class CapacityClassParams:
    """Constants of the capacity-dominated measure class."""

    A: float
    c_0: float
    n: int

    def __post_init__(self):
        if not (self.A > 0):
            raise ValueError("class constant A must be positive")
        if not (self.c_0 > 0):
            raise ValueError("budget c_0 must be positive")


class CompactRegion:
    """A torus-saturated compact region, realized as a set of Interior nodes.

    Built from a predicate on the log coordinates so the same region can be
    re-sampled on refined or coarsened grids.  The node mask is aligned with
    ``grid.interior_flat``.
    """

    def __init__(self, grid: LogGrid, predicate, label: str = "region"):
        self.grid = grid
        self.predicate = predicate
        self.label = label
        x = grid.node_x(grid.interior_flat)
        self.mask = np.asarray(predicate(x), dtype=bool)
        if self.mask.shape != (len(grid.interior_flat),):
            raise ValueError("predicate must return one flag per Interior node")

    # -- constructors --------------------------------------------------------

    @classmethod
    def empty(cls, grid: LogGrid) -> "CompactRegion":
        return cls(grid, lambda x: np.zeros(len(x), dtype=bool), "empty")

    @classmethod
    def subball(cls, grid: LogGrid, radius: float) -> "CompactRegion":
        """K = { |z| <= radius }, i.e. sum_j e^{2 x_j} <= radius^2."""
        if not (0 < radius < 1):
            raise ValueError("subball radius must lie in (0, 1)")
        r2 = radius * radius
        return cls(
            grid,
            lambda x: np.exp(2.0 * x).sum(axis=1) <= r2,
            f"ball(r={radius:g})",
        )

    @classmethod
    def annulus(cls, grid: LogGrid, r_in: float, r_out: float) -> "CompactRegion":
        """K = { r_in <= |z| <= r_out }."""
        if not (0 < r_in < r_out < 1):
            raise ValueError("need 0 < r_in < r_out < 1")
        lo, hi = r_in**2, r_out**2
        return cls(
            grid,
            lambda x: (np.exp(2.0 * x).sum(axis=1) >= lo)
            & (np.exp(2.0 * x).sum(axis=1) <= hi),
            f"annulus({r_in:g},{r_out:g})",
        )

    @classmethod
    def box(cls, grid: LogGrid, lo, hi) -> "CompactRegion":
        """Axis box in log coordinates: lo_j <= x_j <= hi_j."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        return cls(
            grid,
            lambda x: ((x >= lo) & (x <= hi)).all(axis=1),
            f"box({lo.tolist()},{hi.tolist()})",
        )

    def union(self, other: "CompactRegion") -> "CompactRegion":
        if other.grid != self.grid:
            raise ValueError("regions live on different grids")
        p1, p2 = self.predicate, other.predicate
        return CompactRegion(
            self.grid,
            lambda x: np.asarray(p1(x), dtype=bool) | np.asarray(p2(x), dtype=bool),
            f"{self.label}|{other.label}",
        )

    @property
    def is_empty(self) -> bool:
        return not self.mask.any()

    def node_count(self) -> int:
        return int(self.mask.sum())

    def obstacle_fn(self):
        """The indicator obstacle -1 on K, 0 off K, as a log-coordinate callable."""
        pred = self.predicate
        return lambda x: np.where(np.asarray(pred(x), dtype=bool), -1.0, 0.0)

    def __repr__(self):
        return f"CompactRegion({self.label}, nodes={self.node_count()})"


def relative_extremal(K: CompactRegion, **solver_kwargs):
    """Envelope with obstacle -1 on K and zero boundary values.

    Returns (ToricGridFunction, SolveReport).  The output lies in [-1, 0]
    and equals -1 on K up to the solver tolerance; for K = { |z| <= r } in
    the unit ball it converges to max(-1, log|z| / log(1/r)).
    """
    if K.is_empty:
        grid = K.grid
        fn = ToricGridFunction.from_x_function(grid, lambda x: np.zeros(len(x)))
        report = SolveReport(
            converged=True,
            residual=0.0,
            wall_gap=0.0,
            outer_iterations=0,
            sweeps=0,
            mode="closed-form",
            linear_solver="none",
            elapsed=0.0,
            grid_shape=grid.shape,
            notes="empty region: extremal is identically zero",
        )
        return fn, report
    return p_envelope(K.grid, 0.0, obstacle=K.obstacle_fn(), **solver_kwargs)


def capacity(K: CompactRegion, *, extremal=None, **solver_kwargs) -> float:
    """Total discrete MA mass of the relative extremal function of K.

    Pass a precomputed ``extremal`` to avoid re-solving.  Empty regions have
    capacity zero.
    """
    if K.is_empty:
        return 0.0
    if extremal is None:
        extremal, _ = relative_extremal(K, **solver_kwargs)
    from .calculus import discrete_ma_mass

    return discrete_ma_mass(extremal)


# ---------------------------------------------------------------------------
# measure-class gauges
# ---------------------------------------------------------------------------


def h_fn(t, n: int):
    """Gauge h(t) = (1 + log(t+1))^{n+1}, defined for t >= 0 (vectorized)."""
    t = np.asarray(t, dtype=float)
    if (t < 0).any():
        raise ValueError("h_fn requires t >= 0")
    out = (1.0 + np.log1p(t)) ** (n + 1)
    return float(out) if out.ndim == 0 else out


def psi_h(t, n: int):
    """Orlicz gauge psi_h(t) = t * log(1+t)^n * h_fn(log(1+t), n).

    psi_h(0) = 0 and psi_h(t)/t increases to infinity, so finite
    integral-of-psi_h budgets cut out genuinely smaller density classes than
    plain L^1 balls.
    """
    t = np.asarray(t, dtype=float)
    if (t < 0).any():
        raise ValueError("psi_h requires t >= 0")
    lg = np.log1p(t)
    out = t * lg**n * (1.0 + np.log1p(lg)) ** (n + 1)
    return float(out) if out.ndim == 0 else out


def lpsi_membership(f, c_0: float, grid: LogGrid | None = None):
    """Quadrature test for membership in the psi_h Orlicz ball of budget c_0.

    ``f`` is a DensityField (its complex-side values are used) or a callable
    of the radii together with an explicit grid.  Returns (member, integral)
    where integral approximates the domain integral of psi_h(f) against
    complex-side volume.
    """
    from .calculus import DensityField

    if isinstance(f, DensityField):
        grid = f.grid
        radii_fn = f.complex_side
    else:
        if grid is None:
            raise ValueError("a grid is required when f is a bare callable")
        radii_fn = lambda r: np.asarray(f(r), dtype=float)
    if not (c_0 > 0):
        raise ValueError("budget c_0 must be positive")
    x = grid.node_x(grid.interior_flat)
    vals = np.asarray(radii_fn(np.exp(x)), dtype=float).reshape(-1)
    if (vals < 0).any():
        raise ValueError("density must be nonnegative")
    integral = float((psi_h(vals, grid.spec.n) * volume_weights(grid)).sum())
    return integral <= c_0, integral


@dataclass
class ClassCheckReport:
    """Per-compact capacity-domination measurements."""

    rows: list = field(default_factory=list)  # (label, mu, cap, bound, ok)
    A: float = 0.0
    passed: bool = True

    def worst_ratio(self) -> float:
        """max mu / (cap / h(cap^{-1/n})) over rows with positive capacity."""
        worst = 0.0
        for _, mu, cap_val, bound, _ in self.rows:
            if bound > 0:
                worst = max(worst, mu * self.A / bound)
        return worst

    def __str__(self):
        lines = [f"class check (A={self.A:g}): {'PASS' if self.passed else 'FAIL'}"]
        for label, mu, cap_val, bound, ok in self.rows:
            lines.append(
                f"  {label:<28} mu={mu:.6g} cap={cap_val:.6g} "
                f"bound={bound:.6g} {'ok' if ok else 'VIOLATED'}"
            )
        return "\n".join(lines)


def _mu_of(f, K: CompactRegion) -> float:
    """mu(K) = integral of f over K against complex-side volume."""
    from .calculus import DensityField

    grid = K.grid
    x = grid.node_x(grid.interior_flat)
    if isinstance(f, DensityField):
        vals = np.asarray(f.complex_side(np.exp(x)), dtype=float).reshape(-1)
    else:
        vals = np.asarray(f(np.exp(x)), dtype=float).reshape(-1)
    w = volume_weights(grid)
    return float((vals * w)[K.mask].sum())


def class_F_check(f, A: float, compacts, *, capacities=None, tol: float = 1e-12):
    """Check mu(K) <= A cap(K) / h_fn(cap(K)^{-1/n}) over a compact family.

    ``capacities`` may carry precomputed cap(K) values (same order) to avoid
    re-solving envelopes.  Returns a ClassCheckReport; the check never
    raises on a violation, it reports it.
    """
    if not (A > 0):
        raise ValueError("class constant A must be positive")
    report = ClassCheckReport(A=A)
    for i, K in enumerate(compacts):
        n = K.grid.spec.n
        mu = _mu_of(f, K)
        cap_val = capacities[i] if capacities is not None else capacity(K)
        if cap_val <= 0:
            bound = 0.0
            ok = mu <= tol
        else:
            bound = A * cap_val / h_fn(cap_val ** (-1.0 / n), n)
            ok = mu <= bound + tol
        report.rows.append((K.label, mu, cap_val, bound, bool(ok)))
        report.passed = report.passed and bool(ok)
    return report


def calibrate_class_constant(f, compacts, *, capacities=None) -> float:
    """Smallest A making class_F_check pass on the given family.

    The embedding guarantees some finite A exists for each psi_h budget but
    gives no formula; this measures the worst ratio so a frozen, margined A
    can be asserted on held-out compacts.
    """
    worst = 0.0
    for i, K in enumerate(compacts):
        n = K.grid.spec.n
        mu = _mu_of(f, K)
        cap_val = capacities[i] if capacities is not None else capacity(K)
        if cap_val <= 0:
            continue
        denom = cap_val / h_fn(cap_val ** (-1.0 / n), n)
        if denom > 0:
            worst = max(worst, mu / denom)
    return worst
