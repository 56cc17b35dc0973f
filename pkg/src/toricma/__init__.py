"""Toric pluripotential toolbox: Monge-Ampere envelopes on Reinhardt domains.

Everything here works in logarithmic coordinates x_j = log|z_j|, where
torus-invariant plurisubharmonic functions become convex functions on the
log image of the domain.  The package provides the log-grid geometry, the
wide-stencil Monge-Ampere calculus, envelope solvers (obstacle, Dirichlet,
and mixed problems), relative capacities, fat-Cantor boundary sets, and a
small experiment harness with a CLI.
"""

from .geometry import (
    INTERIOR,
    CURVED,
    WALL,
    OUTSIDE,
    CLASS_NAMES,
    ReinhardtDomainSpec,
    LogGrid,
    BoundaryTrace,
    build_log_grid,
    log_map,
    polydisk_witness,
)
from .calculus import (
    ToricGridFunction,
    DensityField,
    HermitianDirection,
    AveragingSchedule,
    second_difference,
    discrete_ma_mass,
    ma_operator,
    delta_H_sample,
    check_subsolution_deltaH,
    toric_average_full,
    toric_average_windowed,
)
from .envelopes import (
    EnvelopeProblem,
    SolveReport,
    p_envelope,
    ma_dirichlet,
    envelope_with_density,
    monotone_boundary_approx,
    boundary_attainment_scan,
)
from .harmonic import RadialGrid, harmonic_lift
from .capacity import (
    CapacityClassParams,
    CompactRegion,
    relative_extremal,
    capacity,
    h_fn,
    psi_h,
    lpsi_membership,
    class_F_check,
)
from .cantor import (
    SVCSet1D,
    SVCDust2D,
    JordanCurve,
    MultiCircularSet,
    svc_1d,
    svc_dust_2d,
    jordan_through_dust,
    region_to_multicircular,
    build_phi_A,
    surface_measure,
)
from .gallery import example_v, example_u, discontinuity_scan
from .gridio import save_grid_file, load_grid_file
from .experiments import (
    CheckRecord,
    ExperimentConfig,
    VerdictReport,
    build_boundary,
    build_density,
    check_domination,
    verify_uniqueness_phiA,
    verify_continuity_ladder,
    run_experiment,
    EXPERIMENTS,
)

__version__ = "0.1.0"
