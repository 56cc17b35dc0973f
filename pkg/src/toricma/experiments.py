"""Experiment harness: configs, verdict reports, and theorem checks.

Each experiment ties several modules together into a reproducible check
with explicit tolerances.  Reports have a deterministic body (identical
config + seed produce identical bytes) with timestamps segregated to a
header, a machine-readable JSON mirror, and a manifest of written
artifacts with SHA-256 checksums.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import json
import math
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import gridio
from .calculus import (
    AveragingSchedule,
    DensityField,
    ToricGridFunction,
    check_subsolution_deltaH,
    toric_average_full,
    toric_average_windowed,
)
from .cantor import (
    MultiCircularSet,
    build_phi_A,
    jordan_through_dust,
    region_to_multicircular,
    svc_dust_2d,
)
from .capacity import (
    CompactRegion,
    calibrate_class_constant,
    capacity,
    class_F_check,
    lpsi_membership,
    relative_extremal,
)
from .envelopes import (
    boundary_attainment_scan,
    envelope_with_density,
    ma_dirichlet,
    p_envelope,
)
from .gallery import discontinuity_scan, example_u, example_v
from .geometry import (
    OUTSIDE,
    BoundaryTrace,
    LogGrid,
    ReinhardtDomainSpec,
    build_log_grid,
)

__all__ = [
    "ExperimentConfig",
    "CheckRecord",
    "VerdictReport",
    "check_domination",
    "verify_uniqueness_phiA",
    "verify_continuity_ladder",
    "run_experiment",
    "EXPERIMENTS",
    "BOUNDARY_BUILDERS",
    "DENSITY_BUILDERS",
]

_G = "%.12g"


# ---------------------------------------------------------------------------
# check records and verdict reports
# ---------------------------------------------------------------------------


@dataclass
class CheckRecord:
    """A single named measurement compared against a threshold."""

    name: str
    measured: float
    threshold: float
    op: str = "<="  # "<=" or ">="
    note: str = ""

    def __post_init__(self):
        if self.op not in ("<=", ">="):
            raise ValueError(f"comparison op {self.op!r} must be '<=' or '>='")

    @property
    def passed(self) -> bool:
        if math.isnan(self.measured):
            return False
        if self.op == "<=":
            return self.measured <= self.threshold
        return self.measured >= self.threshold

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        txt = (
            f"CHECK {self.name}: measured={_G % self.measured} "
            f"{self.op} threshold={_G % self.threshold} -> {verdict}"
        )
        if self.note:
            txt += f"  [{self.note}]"
        return txt


@dataclass
class VerdictReport:
    """Result of one experiment: checks, environment echo, and notes.

    The report body is deterministic for a fixed config and seed; wall
    times and timestamps live in `header`, which is excluded from the body
    text, the JSON body object, and all checksums.
    """

    experiment_id: str
    checks: list
    environment: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    header: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def body_text(self) -> str:
        out = io.StringIO()
        out.write(f"EXPERIMENT {self.experiment_id}\n")
        out.write("ENVIRONMENT\n")
        for key in sorted(self.environment):
            out.write(f"  {key} = {self.environment[key]}\n")
        out.write("CHECKS\n")
        for c in self.checks:
            out.write(f"  {c.line()}\n")
        if self.notes:
            out.write("NOTES\n")
            for note in self.notes:
                out.write(f"  - {note}\n")
        out.write(f"OVERALL {'PASS' if self.passed else 'FAIL'}\n")
        return out.getvalue()

    def full_text(self) -> str:
        head = "".join(f"# {k}: {v}\n" for k, v in self.header.items())
        return head + self.body_text()

    def body_json(self) -> dict:
        return {
            "experiment": self.experiment_id,
            "environment": {k: self.environment[k] for k in sorted(self.environment)},
            "checks": [
                {
                    "name": c.name,
                    "measured": c.measured,
                    "threshold": c.threshold,
                    "op": c.op,
                    "passed": c.passed,
                    "note": c.note,
                }
                for c in self.checks
            ],
            "notes": list(self.notes),
            "overall": self.passed,
        }

    def __str__(self):
        return self.body_text()


# ---------------------------------------------------------------------------
# experiment configuration
# ---------------------------------------------------------------------------


def _parse_scalar(text: str):
    text = text.strip()
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


@dataclass
class ExperimentConfig:
    """Parsed experiment description (key = value text with sections).

    Sections: [experiment] (id, seed), [domain] (kind, n, L, h, ladder),
    [boundary] / [density] (builder plus its parameters), [tolerances]
    (floats), [output] (dir).  The ladder, when present, must be strictly
    decreasing, and any named builder must be registered.
    """

    experiment: str
    seed: int = 0
    domain: dict = field(default_factory=dict)
    boundary: dict = field(default_factory=dict)
    density: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    ladder: list = field(default_factory=list)
    out_dir: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(
                f"unknown experiment {self.experiment!r}; registered: "
                f"{', '.join(sorted(EXPERIMENTS))}"
            )
        self.ladder = [float(h) for h in self.ladder]
        if any(b >= a for a, b in zip(self.ladder, self.ladder[1:])):
            raise ValueError(f"refinement ladder {self.ladder} must be strictly decreasing")
        for section, registry in ((self.boundary, BOUNDARY_BUILDERS), (self.density, DENSITY_BUILDERS)):
            name = section.get("builder")
            if name is not None and name not in registry:
                raise ValueError(
                    f"builder {name!r} is not registered; known: {', '.join(sorted(registry))}"
                )

    @classmethod
    def from_text(cls, text: str, *, experiment: str | None = None) -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        cp.read_string(text)
        exp = dict(cp.items("experiment")) if cp.has_section("experiment") else {}
        domain = {k: _parse_scalar(v) for k, v in cp.items("domain")} if cp.has_section("domain") else {}
        ladder = []
        if "ladder" in domain:
            ladder = [float(t) for t in str(domain.pop("ladder")).split(",") if t.strip()]
        boundary = {k: _parse_scalar(v) for k, v in cp.items("boundary")} if cp.has_section("boundary") else {}
        density = {k: _parse_scalar(v) for k, v in cp.items("density")} if cp.has_section("density") else {}
        tols = {k: float(v) for k, v in cp.items("tolerances")} if cp.has_section("tolerances") else {}
        out = cp.get("output", "dir", fallback=None) if cp.has_section("output") else None
        return cls(
            experiment=experiment or exp.get("id", ""),
            seed=int(exp.get("seed", 0)),
            domain=domain,
            boundary=boundary,
            density=density,
            tolerances=tols,
            ladder=ladder,
            out_dir=out,
        )

    @classmethod
    def from_file(cls, path, **kw) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_text(fh.read(), **kw)

    def tol(self, name: str, default: float) -> float:
        return float(self.tolerances.get(name, default))

    def canonical_text(self) -> str:
        """Deterministic echo of the full configuration."""
        parts = [f"experiment.id = {self.experiment}", f"experiment.seed = {self.seed}"]
        for sec, data in (
            ("domain", dict(self.domain)),
            ("boundary", self.boundary),
            ("density", self.density),
            ("tolerances", self.tolerances),
        ):
            for k in sorted(data):
                parts.append(f"{sec}.{k} = {data[k]}")
        if self.ladder:
            parts.append("domain.ladder = " + ", ".join(_G % h for h in self.ladder))
        return "\n".join(parts)

    def spec(self, h: float | None = None) -> ReinhardtDomainSpec:
        return ReinhardtDomainSpec(
            kind=self.domain.get("kind", "UnitBall"),
            n=int(self.domain.get("n", 2)),
            L=float(self.domain.get("L", 4.0)),
            h=float(h if h is not None else self.domain.get("h", 1.0 / 16.0)),
        )

    def rungs(self) -> list:
        return list(self.ladder) if self.ladder else [float(self.domain.get("h", 1.0 / 16.0))]


# ---------------------------------------------------------------------------
# boundary / density builders (registered by name for configs and the CLI)
# ---------------------------------------------------------------------------


def _band_set(params) -> MultiCircularSet:
    a = float(params.get("a", 0.3))
    b = float(params.get("b", 0.6))
    return MultiCircularSet.from_intervals([(a, b)], delta_ax=float(params.get("delta_ax", 0.05)))


def _svc_set(params) -> MultiCircularSet:
    eps = params.get("eps", 0.1)
    depth = int(params.get("depth", 2))
    box = (
        (params.get("box_x0", 0.15), params.get("box_x1", 0.65)),
        (params.get("box_y0", 0.15), params.get("box_y1", 0.65)),
    )
    dust = svc_dust_2d(eps, depth, box)
    curve = jordan_through_dust(dust)
    return region_to_multicircular(curve, float(params.get("delta_ax", 0.05)), 3)


def _boundary_constant(params, grid):
    return BoundaryTrace.constant(grid, float(params.get("value", 0.0)))


def _boundary_band(params, grid):
    return build_phi_A(_band_set(params), grid)


def _boundary_svc(params, grid):
    return build_phi_A(_svc_set(params), grid)


BOUNDARY_BUILDERS = {
    "constant": _boundary_constant,
    "band": _boundary_band,
    "svc-region": _boundary_svc,
}


def _density_zero(params, grid):
    return None


def _density_constant(params, grid):
    return DensityField.constant(grid, float(params.get("value", 32.0)))


def _density_truncated_inverse(params, grid):
    cut = float(params.get("cut", 64.0))

    def f(r):
        r = np.asarray(r, dtype=float)
        norm = np.sqrt((r**2).sum(axis=-1))
        return np.minimum(cut, 1.0 / np.maximum(norm, 1e-300))

    return DensityField(grid, f)


DENSITY_BUILDERS = {
    "zero": _density_zero,
    "constant": _density_constant,
    "truncated-inverse": _density_truncated_inverse,
}


def build_boundary(config: ExperimentConfig, grid: LogGrid) -> BoundaryTrace:
    name = config.boundary.get("builder", "constant")
    return BOUNDARY_BUILDERS[name](config.boundary, grid)


def build_density(config: ExperimentConfig, grid: LogGrid):
    name = config.density.get("builder", "zero")
    return DENSITY_BUILDERS[name](config.density, grid)


# ---------------------------------------------------------------------------
# verification operations
# ---------------------------------------------------------------------------


def _off_boundary_mask(grid: LogGrid, curved_mask, radius: float):
    """Interior-node mask: True where the node sits at least ``radius`` away
    (log coordinates) from every curved node selected by ``curved_mask``.

    A data jump confined to an O(h)-wide patch of the curved boundary has
    O(1) influence on the neighbouring cells but only O(h/d) influence at
    fixed distance d, so comparisons that should scale like h must be taken
    outside a fixed standoff zone.
    """
    curved_mask = np.asarray(curved_mask, dtype=bool)
    inside = np.zeros(len(grid.interior_flat), dtype=bool)
    if curved_mask.any():
        from scipy.spatial import cKDTree

        tree = cKDTree(grid.node_x(grid.curved_flat[curved_mask]))
        dist, _ = tree.query(grid.node_x(grid.interior_flat))
        inside = dist < radius
    return ~inside


def check_domination(
    U: ToricGridFunction,
    V: ToricGridFunction,
    *,
    trace_U: BoundaryTrace,
    trace_V: BoundaryTrace,
    density_U=0.0,
    density_V=0.0,
    exception_mask=None,
    exclude_radius: float = 0.25,
    tol_cmp: float = 1e-6,
) -> CheckRecord:
    """Comparison-principle check: U <= V when f_V <= f_U and data ordered.

    Preconditions (density ordering f_V <= f_U pointwise, boundary of U at
    most boundary of V off the exception set) are *verified* and raise
    ValueError on violation — a misconfigured comparison is a config error,
    not a FAIL.  The check itself passes iff U <= V + tol_cmp at every
    Interior node; when an exception set is given, interior nodes within
    ``exclude_radius`` of an excepted boundary node are left out of that
    sup (the data jump legitimately leaks order-one values into its own
    standoff zone) and the sup over the omitted zone is recorded on the
    check's note instead.
    """
    if U.grid != V.grid:
        raise ValueError("domination check requires both solutions on one grid")
    grid = U.grid

    def _dvals(d):
        if isinstance(d, DensityField):
            return d.interior_log_values()
        arr = np.full(len(grid.interior_flat), float(d))
        x = grid.node_x(grid.interior_flat)
        return arr * np.exp(2.0 * x.sum(axis=1)) / math.factorial(grid.spec.n)

    fu, fv = _dvals(density_U), _dvals(density_V)
    if (fv > fu + 1e-12).any():
        raise ValueError("density precondition violated: f_V must be <= f_U pointwise")

    if exception_mask is None:
        exception_mask = np.zeros(len(trace_U.values), dtype=bool)
    exception_mask = np.asarray(exception_mask, dtype=bool)
    off = ~exception_mask
    gap = trace_U.values[off] - trace_V.values[off]
    if gap.size and gap.max() > 1e-12:
        raise ValueError(
            "boundary precondition violated: data of U exceeds data of V off "
            f"the exception set by {gap.max():.3g}"
        )

    diff = U.values.reshape(-1)[grid.interior_flat] - V.values.reshape(-1)[grid.interior_flat]
    note = ""
    if exception_mask.any():
        off = _off_boundary_mask(grid, exception_mask, exclude_radius)
        near = diff[~off]
        if near.size:
            note = (
                f"sup over the zone within {_G % exclude_radius} of the "
                f"excepted data: {_G % float(near.max())} (reported only)"
            )
        diff = diff[off]
    measured = float(diff.max()) if diff.size else 0.0
    return CheckRecord("domination", measured, tol_cmp, "<=", note=note)


def verify_uniqueness_phiA(
    A: MultiCircularSet,
    f,
    ladder,
    *,
    L: float = 4.0,
    exclude_radius: float = 0.25,
    solver_kwargs=None,
) -> VerdictReport:
    """Uniqueness of P(phi_A, f) off the boundary of A, on a refinement ladder.

    For each rung the indicator data is solved twice — with every flagged
    discontinuity node forced to -1 (the usc choice) and to 0 (the lsc
    choice) — and the sup difference over interior nodes at least
    ``exclude_radius`` away (log coordinates) from every flagged node must
    stay below tol_unique(h) = C*h, with one constant C fitted on the
    coarsest rung across all densities and frozen.  Uniqueness holds *off*
    the boundary of A: inside the standoff zone the flagged patch (itself
    O(h) wide) sways its immediate neighbours by an amount that does not
    vanish with h, so the near-zone sup is recorded on each check's note
    instead of being asserted.  A boundary attainment scan off the flagged
    set is run on the finest rung as a decay check.
    """
    ladder = [float(h) for h in ladder]
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("ladder must be strictly decreasing")
    fvals = list(np.atleast_1d(f).astype(float))
    solver_kwargs = dict(solver_kwargs or {})

    sup_diff = {}
    near_diff = {}
    finest = {}
    off_masks = {}
    for fv in fvals:
        for h in ladder:
            grid = build_log_grid(ReinhardtDomainSpec("UnitBall", A.n, L=L, h=h))
            base = build_phi_A(A, grid)
            flagged = ~base.continuity
            usc_vals = base.values.copy()
            usc_vals[flagged] = -1.0
            lsc_vals = base.values.copy()
            lsc_vals[flagged] = 0.0
            # Both variants share the base indicator as coarse-level data, so
            # continuation can warm-start the fine solve; the fine-grid trace
            # values stay exactly the usc/lsc choices made here.
            usc = BoundaryTrace(
                grid, usc_vals, continuity=base.continuity, radii_fn=base.radii_fn
            )
            lsc = BoundaryTrace(
                grid, lsc_vals, continuity=base.continuity, radii_fn=base.radii_fn
            )
            u1, _ = ma_dirichlet(grid, usc, fv, **solver_kwargs)
            u2, _ = ma_dirichlet(grid, lsc, fv, **solver_kwargs)
            d = np.abs(
                u1.values.reshape(-1)[grid.interior_flat]
                - u2.values.reshape(-1)[grid.interior_flat]
            )
            if h not in off_masks:
                off_masks[h] = _off_boundary_mask(grid, flagged, exclude_radius)
            off = off_masks[h]
            sup_diff[(fv, h)] = float(d[off].max()) if off.any() else 0.0
            near_diff[(fv, h)] = float(d[~off].max()) if (~off).any() else 0.0
            if h == ladder[-1]:
                finest[fv] = (u1, usc)

    C = max(sup_diff[(fv, ladder[0])] / ladder[0] for fv in fvals)
    checks = []
    for fv in fvals:
        for h in ladder:
            checks.append(
                CheckRecord(
                    f"usc-lsc-gap f={_G % fv} h={_G % h}",
                    sup_diff[(fv, h)],
                    C * h,
                    "<=",
                    note=(
                        f"sup within {_G % exclude_radius} of the flagged set: "
                        f"{_G % near_diff[(fv, h)]} (reported only)"
                    ),
                )
            )
        fn, usc = finest[fv]
        scan = boundary_attainment_scan(fn, usc, only_continuity=True)
        checks.append(
            CheckRecord(
                f"attainment-decay f={_G % fv}",
                float(scan.worst[-1]),
                float(scan.worst[0]) + 1e-9,
                "<=",
                note="gap at closest approach vs farthest",
            )
        )

    return VerdictReport(
        experiment_id="uniqueness-phiA",
        checks=checks,
        environment={
            "A": repr(A),
            "fitted_C": _G % C,
            "ladder": ", ".join(_G % h for h in ladder),
            "densities": ", ".join(_G % fv for fv in fvals),
            "L": _G % L,
            "exclude_radius": _G % exclude_radius,
        },
    )


def _adjacent_modulus(fn: ToricGridFunction, trace: BoundaryTrace | None) -> float:
    """Max axis-adjacent difference over valued nodes, skipping flagged pairs."""
    grid = fn.grid
    vals = fn.values.reshape(-1)
    ok = grid.classification.reshape(-1) != OUTSIDE
    bad = np.zeros(grid.size, dtype=bool)
    if trace is not None:
        bad[grid.curved_flat[~trace.continuity]] = True
    m = grid.shape[0]
    kflat = grid.node_k(np.arange(grid.size))
    best = 0.0
    idx = np.arange(grid.size)
    for j, stride in enumerate(grid.strides):
        sel = kflat[:, j] + 1 < m
        a = idx[sel]
        b = a + stride
        keep = ok[a] & ok[b] & ~bad[a] & ~bad[b]
        if keep.any():
            d = np.abs(vals[a[keep]] - vals[b[keep]])
            best = max(best, float(d.max()))
    return best


def verify_continuity_ladder(
    problem,
    ladder,
    *,
    tol_cauchy: float = 0.02,
    decay: float = 0.75,
    slack: float = 1e-6,
) -> VerdictReport:
    """Continuity certificate for an envelope family on a refinement ladder.

    ``problem(h)`` must return ``(solution, trace_or_None)``.  Two families
    of checks: the discrete modulus omega(h) (max adjacent-node difference,
    excluding pairs touching flagged CurvedBoundary nodes) must decay by
    the factor `decay` per rung (plus slack), and solutions evaluated on
    the coarsest rung's interior lattice must be Cauchy, with the last pair
    below tol_cauchy.
    """
    ladder = [float(h) for h in ladder]
    if len(ladder) < 2:
        raise ValueError("a continuity ladder needs at least two rungs")
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("ladder must be strictly decreasing")

    solves = []
    for h in ladder:
        fn, trace = problem(h)
        solves.append((h, fn, trace))

    omegas = [_adjacent_modulus(fn, trace) for _, fn, trace in solves]
    checks = []
    for (ha, _, _), (hb, _, _), wa, wb in zip(solves, solves[1:], omegas, omegas[1:]):
        checks.append(
            CheckRecord(
                f"omega-decay {_G % ha}->{_G % hb}",
                wb,
                decay * wa + slack,
                "<=",
            )
        )

    coarse_grid = solves[0][1].grid
    X = coarse_grid.node_x(coarse_grid.interior_flat)
    cauchy = []
    for (ha, fa, _), (hb, fb, _) in zip(solves, solves[1:]):
        va = fa.eval_x(X)
        vb = fb.eval_x(X)
        good = np.isfinite(va) & np.isfinite(vb)
        cauchy.append(float(np.abs(va[good] - vb[good]).max()))
    checks.append(
        CheckRecord(
            f"interior-cauchy {_G % ladder[-2]}->{_G % ladder[-1]}",
            cauchy[-1],
            tol_cauchy,
            "<=",
        )
    )

    return VerdictReport(
        experiment_id="continuity-ladder",
        checks=checks,
        environment={
            "ladder": ", ".join(_G % h for h in ladder),
            "omegas": ", ".join(_G % w for w in omegas),
            "cauchy": ", ".join(_G % c for c in cauchy),
            "tol_cauchy": _G % tol_cauchy,
            "decay": _G % decay,
        },
    )


# ---------------------------------------------------------------------------
# registered experiments
# ---------------------------------------------------------------------------


def _ball_exact_values(grid: LogGrid) -> np.ndarray:
    """Interior values of the closed-form solution sum_j e^{2 x_j} - 1."""
    x = grid.node_x(grid.interior_flat)
    return np.exp(2.0 * x).sum(axis=1) - 1.0


def _exp_exact_ball(config: ExperimentConfig, rng):
    fval = float(config.density.get("value", 32.0))
    rungs = config.rungs()
    tol_sup = config.tol("sup_error", 0.05)
    checks, artifacts = [], {}
    errors = []
    for h in rungs:
        grid = build_log_grid(config.spec(h))
        fn, rep = ma_dirichlet(grid, 0.0, fval)
        err = float(
            np.abs(fn.values.reshape(-1)[grid.interior_flat] - _ball_exact_values(grid)).max()
        )
        errors.append(err)
        checks.append(CheckRecord(f"sup-error h={_G % h}", err, tol_sup, "<="))
        artifacts[f"solution-h{_G % h}.grid"] = fn
    for (ha, ea), (hb, eb) in zip(zip(rungs, errors), zip(rungs[1:], errors[1:])):
        checks.append(
            CheckRecord(
                f"error-contraction {_G % ha}->{_G % hb}",
                ea / max(eb, 1e-300),
                config.tol("contraction", 1.5),
                ">=",
            )
        )
    env = {
        "kind": "UnitBall",
        "f": _G % fval,
        "rungs": ", ".join(_G % h for h in rungs),
        "errors": ", ".join(_G % e for e in errors),
    }
    return checks, env, [], artifacts


def _exp_relative_extremal(config: ExperimentConfig, rng):
    h = float(config.domain.get("h", 1.0 / 32.0))
    r0 = float(config.boundary.get("radius", math.exp(-1.0)))
    spec = config.spec(h)
    grid = build_log_grid(spec)
    K = CompactRegion.subball(grid, r0)
    u, rep = relative_extremal(K)
    x = grid.node_x(grid.interior_flat)
    exact = np.maximum(-1.0, 0.5 * np.log(np.exp(2.0 * x).sum(axis=1)) / (-math.log(r0)))
    err = float(np.abs(u.values.reshape(-1)[grid.interior_flat] - exact).max())
    checks = [CheckRecord("sup-error", err, config.tol("sup_error", 0.05), "<=")]
    artifacts = {"extremal.grid": u}
    env = {"h": _G % h, "radius": _G % r0, "solver": rep.mode}
    return checks, env, [], artifacts


def _exp_capacity_scaling(config: ExperimentConfig, rng):
    h = float(config.domain.get("h", 1.0 / 64.0))
    spec = config.spec(h)
    grid = build_log_grid(spec)
    cap1 = capacity(CompactRegion.subball(grid, math.exp(-1.0)))
    cap2 = capacity(CompactRegion.subball(grid, math.exp(-2.0)))
    n = spec.n
    ratio = cap2 / cap1
    target = 2.0 ** (-n)
    rel = abs(ratio / target - 1.0)
    checks = [
        CheckRecord("scaling-relative-error", rel, config.tol("scaling_rel", 0.05), "<=")
    ]
    env = {
        "h": _G % h,
        "cap(e^-1)": _G % cap1,
        "cap(e^-2)": _G % cap2,
        "ratio": _G % ratio,
        "target": _G % target,
    }
    return checks, env, [], {}


def _exp_uniqueness_band(config: ExperimentConfig, rng):
    A = _band_set(config.boundary)
    ladder = config.ladder or [1.0 / 16.0, 1.0 / 32.0]
    fvals = config.density.get("values", "0, 32")
    fvals = [float(t) for t in str(fvals).split(",")]
    rep = verify_uniqueness_phiA(
        A,
        fvals,
        ladder,
        L=float(config.domain.get("L", 4.0)),
        exclude_radius=config.tol("exclude_radius", 0.25),
    )
    return rep.checks, rep.environment, rep.notes, {}


def _exp_uniqueness_svc(config: ExperimentConfig, rng):
    A = _svc_set(config.boundary)
    ladder = config.ladder or [1.0 / 8.0, 1.0 / 12.0]
    fvals = config.density.get("values", "0, 32")
    fvals = [float(t) for t in str(fvals).split(",")]
    rep = verify_uniqueness_phiA(
        A,
        fvals,
        ladder,
        L=float(config.domain.get("L", 4.0)),
        exclude_radius=config.tol("exclude_radius", 0.25),
    )
    return rep.checks, rep.environment, rep.notes, {}


def _annulus_obstacle(x):
    s = np.exp(2.0 * np.asarray(x)).sum(axis=-1)
    inside = (s >= math.exp(-3.0)) & (s <= math.exp(-2.0))
    return np.where(inside, -1.0, 0.0)


def continuity_problem(name: str, config: ExperimentConfig):
    """Named solve families for the continuity ladder."""
    fval = float(config.density.get("value", 32.0))

    def obstacle(h):
        grid = build_log_grid(config.spec(h))
        fn, _ = p_envelope(grid, 0.0, obstacle=_annulus_obstacle)
        return fn, None

    def obstacle_density(h):
        grid = build_log_grid(config.spec(h))
        fn, _ = envelope_with_density(grid, 0.0, fval, _annulus_obstacle)
        return fn, None

    def boundary_density(h):
        grid = build_log_grid(config.spec(h))
        trace = build_phi_A(_band_set(config.boundary), grid)
        fn, _ = ma_dirichlet(grid, trace, fval)
        return fn, trace

    table = {
        "obstacle": obstacle,
        "obstacle-density": obstacle_density,
        "boundary-density": boundary_density,
    }
    if name not in table:
        raise ValueError(f"unknown continuity problem {name!r}; known: {sorted(table)}")
    return table[name]


def _exp_continuity_ladder(config: ExperimentConfig, rng):
    name = str(config.domain.get("problem", "obstacle"))
    ladder = config.ladder or [1.0 / 16.0, 1.0 / 32.0]
    rep = verify_continuity_ladder(
        continuity_problem(name, config),
        ladder,
        tol_cauchy=config.tol("cauchy", 0.02),
    )
    env = dict(rep.environment)
    env["problem"] = name
    return rep.checks, env, rep.notes, {}


def _exp_averaging(config: ExperimentConfig, rng):
    a = float(config.boundary.get("a", 0.5))
    q = int(config.domain.get("q", 2048))

    def u(z):
        z = np.asarray(z, dtype=complex)
        return np.log(np.abs(z[..., 0] - a))

    checks = []
    radii = [0.1, 0.3, 0.45, 0.55, 0.7, 0.9]
    worst = 0.0
    for r1 in radii:
        z = np.array([r1, 0.3], dtype=complex)
        got = toric_average_full(u, z, q=q)
        want = math.log(max(r1, a))
        worst = max(worst, abs(got - want))
    checks.append(
        CheckRecord("full-average-error", worst, config.tol("average_tol", 1e-6), "<=")
    )

    sched = AveragingSchedule()
    z = np.array([0.62, 0.31], dtype=complex)
    levels = list(range(sched.count - 1))
    uk = [
        toric_average_windowed(u, z, sched, k, window=None, samples_per_axis=64)
        for k in levels
    ]
    mono = max(
        (uk[i + 1] - uk[i] for i in range(len(uk) - 1)),
        default=0.0,
    )
    checks.append(CheckRecord("windowed-monotone", mono, 1e-9, "<="))

    # equicontinuity budget: each window average is at most the windowed sup
    worst_budget = -math.inf
    for k in levels[:4]:
        wa = toric_average_windowed(u, z, sched, k, window=None, samples_per_axis=64)
        eps = sched.eps(k + 1)
        th = np.linspace(-eps, eps, 257)
        zz = np.stack(
            [
                z[0] * np.exp(1j * th)[:, None] * np.ones(len(th))[None, :],
                z[1] * np.ones(len(th))[:, None] * np.exp(1j * th)[None, :],
            ],
            axis=-1,
        )
        F = float(np.max(u(zz)))
        worst_budget = max(worst_budget, wa - (F + sched.nu(k)))
    checks.append(CheckRecord("windowed-below-sup-budget", worst_budget, 1e-9, "<="))

    env = {"a": _G % a, "q": str(q), "schedule": repr(sched)}
    return checks, env, [], {}


def _exp_viscosity(config: ExperimentConfig, rng):
    n = int(config.domain.get("n", 2))
    h = float(config.domain.get("h", 1.0 / 64.0))
    fval = float(config.density.get("value", 32.0))
    samples = int(config.domain.get("samples", 100))

    def u_exact(z):
        z = np.asarray(z, dtype=complex)
        return (np.abs(z) ** 2).sum(axis=-1) - 1.0

    points = [
        np.array([0.35 + 0.1j, -0.2 + 0.40j]),
        np.array([0.05 - 0.5j, 0.55 + 0.1j]),
        np.array([-0.6 + 0.0j, 0.1 - 0.3j]),
    ]
    worst = math.inf
    for z0 in points:
        ok, margin = check_subsolution_deltaH(
            u_exact, z0[:n], fval, n, delta=h, samples=samples, rng=rng
        )
        worst = min(worst, margin)
    checks = [
        CheckRecord("subsolution-margin", worst, -config.tol("margin", 1e-2), ">=")
    ]

    # negative control: the f = 0 maximal function must fail against f = 1
    grid = build_log_grid(config.spec(max(h, 1.0 / 16.0)))
    fn, _ = p_envelope(grid, 0.0)
    ok, margin = check_subsolution_deltaH(
        lambda z: fn.eval_z(z), points[0][:n] * 0.5, 1.0, n, delta=0.05, samples=16, rng=rng
    )
    checks.append(
        CheckRecord(
            "negative-control-margin",
            margin,
            -0.05,
            "<=",
            note="f=0 output tested against f=1 must fail",
        )
    )
    env = {"h": _G % h, "f": _G % fval, "samples": str(samples)}
    return checks, env, [], {}


def _exp_class_inclusion(config: ExperimentConfig, rng):
    h = float(config.domain.get("h", 1.0 / 32.0))
    grid = build_log_grid(config.spec(h))
    fval = float(config.density.get("value", 32.0))
    density = DensityField.constant(grid, fval)

    member, integral = lpsi_membership(density, c_0=1.0)
    compacts = [
        CompactRegion.subball(grid, math.exp(-1.0)),
        CompactRegion.subball(grid, math.exp(-2.0)),
        CompactRegion.subball(grid, 0.5),
        CompactRegion.annulus(grid, math.exp(-2.0), math.exp(-1.0)),
    ]
    base = calibrate_class_constant(density, compacts)
    A = base * float(config.domain.get("headroom", 1.1))
    report = class_F_check(density, A, compacts)
    checks = [
        CheckRecord("lpsi-integral-finite", integral, 1e9, "<=",
                    note="membership requires a finite weighted integral"),
        CheckRecord("worst-mass-ratio", report.worst_ratio(), 1.0, "<="),
    ]
    env = {
        "h": _G % h,
        "f": _G % fval,
        "A": _G % A,
        "calibrated_A": _G % base,
        "member": str(member),
    }
    return checks, env, [], {}


def _exp_gallery(config: ExperimentConfig, rng):
    K = int(config.domain.get("K", 40))
    v0, tail0 = example_v(0.0, K)
    err0 = abs(v0 - (-2.0 * math.log(2.0)))
    checks = [CheckRecord("v(0)-vs-closed-form", err0, config.tol("v0_tol", 1e-8), "<=")]

    pts = np.array([0.5, 0.5 + 0.004, 0.9], dtype=complex)
    scan_v = discontinuity_scan(lambda z: example_v(z, K)[0], pts)
    checks.append(
        CheckRecord(
            "v-scan-flags-pole-neighborhood",
            float(scan_v.flagged[0] and scan_v.flagged[1]),
            1.0,
            ">=",
        )
    )
    checks.append(CheckRecord("v-scan-spares-0.9", float(scan_v.flagged[2]), 0.0, "<="))

    upts = np.array([0.0, 0.5, 0.9], dtype=complex)
    scan_u = discontinuity_scan(lambda z: example_u(z, 0.0, K), upts)
    checks.append(
        CheckRecord("u-scan-flag-count", float(scan_u.flagged.sum()), 0.0, "<=")
    )
    notes = [
        "clamped example u = max(v, -1): the scan flags no point, including "
        "z = 0 — v stays below -1 near the origin, so the clamp is locally "
        "constant there and the only candidate discontinuities (the poles) "
        "are erased; recorded as a finding, nothing asserted about {z = 0}.",
    ]
    env = {"K": str(K), "v(0)": _G % v0, "tail(0)": _G % tail0}
    return checks, env, notes, {}


def _exp_empty(config: ExperimentConfig, rng):
    return [], {"nothing": "checked"}, [], {}


EXPERIMENTS = {
    "exact-ball": _exp_exact_ball,
    "relative-extremal": _exp_relative_extremal,
    "uniqueness-band": _exp_uniqueness_band,
    "uniqueness-svc": _exp_uniqueness_svc,
    "continuity-ladder": _exp_continuity_ladder,
    "averaging": _exp_averaging,
    "viscosity": _exp_viscosity,
    "capacity-scaling": _exp_capacity_scaling,
    "class-inclusion": _exp_class_inclusion,
    "gallery": _exp_gallery,
    "empty": _exp_empty,
}


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_report(report: VerdictReport, artifacts: dict, out_dir: str) -> None:
    """Write report.txt / report.json, all artifacts, and a checksum manifest.

    Checksums cover deterministic bytes only: grid and text artifacts in
    full, the two reports by their body sections (headers carry wall-clock
    data and are excluded).
    """
    os.makedirs(out_dir, exist_ok=True)
    manifest = []

    body = report.body_text().encode()
    with open(os.path.join(out_dir, "report.txt"), "w") as fh:
        fh.write(report.full_text())
    manifest.append((_sha256(body), "report.txt#body"))

    jbody = json.dumps(report.body_json(), indent=2, sort_keys=True)
    jfull = json.dumps(
        {"header": report.header, "body": report.body_json()}, indent=2, sort_keys=True
    )
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        fh.write(jfull + "\n")
    manifest.append((_sha256(jbody.encode()), "report.json#body"))

    for name in sorted(artifacts):
        path = os.path.join(out_dir, name)
        obj = artifacts[name]
        if isinstance(obj, str):
            with open(path, "w") as fh:
                fh.write(obj)
        elif isinstance(obj, bytes):
            with open(path, "wb") as fh:
                fh.write(obj)
        else:
            gridio.save_grid_file(path, obj)
        with open(path, "rb") as fh:
            manifest.append((_sha256(fh.read()), name))

    with open(os.path.join(out_dir, "manifest.txt"), "w") as fh:
        for digest, name in manifest:
            fh.write(f"{digest}  {name}\n")


def run_experiment(config: ExperimentConfig, *, out_dir: str | None = None) -> VerdictReport:
    """Run one registered experiment; deterministic for fixed config + seed.

    Writes the report, artifacts, and manifest when an output directory is
    configured.  Module errors propagate to the caller (the CLI maps them
    to exit code 2); FAILing checks are an ordinary report with overall
    FAIL.
    """
    rng = np.random.default_rng(config.seed)
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    checks, env, notes, artifacts = EXPERIMENTS[config.experiment](config, rng)
    elapsed = time.perf_counter() - t0

    env = dict(env)
    env.setdefault("seed", str(config.seed))
    env["config"] = "; ".join(config.canonical_text().splitlines())
    report = VerdictReport(
        experiment_id=config.experiment,
        checks=list(checks),
        environment=env,
        notes=list(notes),
        header={"run_at": started, "elapsed_s": f"{elapsed:.3f}"},
    )
    dest = out_dir or config.out_dir
    if dest:
        write_report(report, artifacts, dest)
    return report
