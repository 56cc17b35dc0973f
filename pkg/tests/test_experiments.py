import math
import re

import numpy as np
import pytest

from toricma import (
    BoundaryTrace,
    CheckRecord,
    ExperimentConfig,
    ReinhardtDomainSpec,
    ToricGridFunction,
    VerdictReport,
    build_boundary,
    build_density,
    build_log_grid,
    check_domination,
    run_experiment,
)
from toricma.experiments import EXPERIMENTS, write_report


def _ball_grid(h=0.25, n=2, L=2.0):
    return build_log_grid(ReinhardtDomainSpec(kind="UnitBall", n=n, L=L, h=h))


# ---------------------------------------------------------------------------
# check records and reports
# ---------------------------------------------------------------------------


def test_check_record_comparisons():
    assert CheckRecord("a", 0.5, 1.0).passed
    assert not CheckRecord("a", 2.0, 1.0).passed
    assert CheckRecord("b", 2.0, 1.0, ">=").passed
    assert not CheckRecord("b", 0.5, 1.0, ">=").passed
    # boundary value counts as a pass in both directions
    assert CheckRecord("c", 1.0, 1.0).passed
    assert CheckRecord("c", 1.0, 1.0, ">=").passed


def test_check_record_nan_always_fails():
    assert not CheckRecord("nan", math.nan, 1.0).passed
    assert not CheckRecord("nan", math.nan, 1.0, ">=").passed


def test_check_record_rejects_unknown_op():
    with pytest.raises(ValueError):
        CheckRecord("x", 0.0, 1.0, "<")


def test_check_record_line_states_verdict():
    assert "-> PASS" in CheckRecord("ok", 0.0, 1.0).line()
    assert "-> FAIL" in CheckRecord("bad", 2.0, 1.0).line()
    assert "[why]" in CheckRecord("bad", 2.0, 1.0, note="why").line()


def test_verdict_report_text_layout():
    rep = VerdictReport(
        experiment_id="empty",
        checks=[CheckRecord("one", 0.0, 1.0)],
        environment={"b": "2", "a": "1"},
        notes=["remark"],
        header={"run_at": "sometime"},
    )
    body = rep.body_text()
    assert body.startswith("EXPERIMENT empty\n")
    assert body.rstrip().endswith("OVERALL PASS")
    assert "a = 1" in body and "b = 2" in body
    assert body.index("a = 1") < body.index("b = 2")  # environment is sorted
    assert "sometime" not in body  # header excluded from the body
    assert rep.full_text().startswith("# run_at: sometime\n")
    assert rep.passed


def test_verdict_report_one_failure_fails_overall():
    rep = VerdictReport(
        experiment_id="empty",
        checks=[CheckRecord("one", 0.0, 1.0), CheckRecord("two", 5.0, 1.0)],
    )
    assert not rep.passed
    assert "OVERALL FAIL" in rep.body_text()
    j = rep.body_json()
    assert j["overall"] is False
    assert [c["passed"] for c in j["checks"]] == [True, False]


# ---------------------------------------------------------------------------
# configuration parsing
# ---------------------------------------------------------------------------

CONFIG_TEXT = """\
[experiment]
id = exact-ball
seed = 7

[domain]
kind = UnitBall
n = 2
L = 4
h = 0.125
ladder = 0.25, 0.125

[boundary]
builder = constant
value = 0.0

[density]
builder = constant
value = 32

[tolerances]
sup_error = 0.05
"""


def test_config_from_text_round_trip():
    cfg = ExperimentConfig.from_text(CONFIG_TEXT)
    assert cfg.experiment == "exact-ball"
    assert cfg.seed == 7
    assert cfg.domain["kind"] == "UnitBall"
    assert cfg.domain["n"] == 2
    assert cfg.ladder == [0.25, 0.125]
    assert cfg.density["value"] == 32
    assert cfg.tol("sup_error", 1.0) == 0.05
    assert cfg.tol("absent", 0.75) == 0.75
    assert cfg.rungs() == [0.25, 0.125]
    spec = cfg.spec()
    assert (spec.kind, spec.n, spec.L, spec.h) == ("UnitBall", 2, 4.0, 0.125)
    assert cfg.spec(h=0.5).h == 0.5
    # the canonical echo is deterministic and mentions every section
    echo = cfg.canonical_text()
    assert echo == ExperimentConfig.from_text(CONFIG_TEXT).canonical_text()
    assert "experiment.id = exact-ball" in echo
    assert "density.value = 32" in echo


def test_config_from_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(CONFIG_TEXT)
    cfg = ExperimentConfig.from_file(p)
    assert cfg.experiment == "exact-ball"
    override = ExperimentConfig.from_file(p, experiment="empty")
    assert override.experiment == "empty"


def test_config_rejects_unknown_experiment():
    with pytest.raises(ValueError, match="unknown experiment"):
        ExperimentConfig(experiment="no-such-thing")


def test_config_rejects_nondecreasing_ladder():
    with pytest.raises(ValueError, match="strictly decreasing"):
        ExperimentConfig(experiment="empty", ladder=[0.125, 0.25])
    with pytest.raises(ValueError, match="strictly decreasing"):
        ExperimentConfig(experiment="empty", ladder=[0.25, 0.25])


def test_config_rejects_unknown_builders():
    with pytest.raises(ValueError, match="not registered"):
        ExperimentConfig(experiment="empty", boundary={"builder": "mystery"})
    with pytest.raises(ValueError, match="not registered"):
        ExperimentConfig(experiment="empty", density={"builder": "mystery"})


def test_registry_covers_the_documented_experiments():
    expected = {
        "exact-ball",
        "relative-extremal",
        "uniqueness-band",
        "uniqueness-svc",
        "continuity-ladder",
        "averaging",
        "viscosity",
        "capacity-scaling",
        "class-inclusion",
        "gallery",
        "empty",
    }
    assert expected == set(EXPERIMENTS)


def test_builders_produce_expected_objects():
    grid = _ball_grid()
    cfg = ExperimentConfig(
        experiment="empty",
        boundary={"builder": "band", "a": 0.3, "b": 0.6},
        density={"builder": "constant", "value": 8.0},
    )
    trace = build_boundary(cfg, grid)
    assert set(np.unique(trace.values[np.isfinite(trace.values)])) <= {-1.0, 0.0}
    dens = build_density(cfg, grid)
    vals = dens.interior_log_values()
    x = grid.node_x(grid.interior_flat)
    expect = 8.0 * np.exp(2.0 * x.sum(axis=1)) / 2.0
    assert np.allclose(vals, expect)
    # zero builder means "no density": pure envelope problem
    assert build_density(ExperimentConfig(experiment="empty"), grid) is None


# ---------------------------------------------------------------------------
# domination check
# ---------------------------------------------------------------------------


def _exact_ball_fn(grid):
    return ToricGridFunction.from_x_function(
        grid, lambda x: np.exp(2.0 * x).sum(axis=1) - 1.0
    )


def test_domination_passes_at_equality_both_ways():
    grid = _ball_grid()
    U = _exact_ball_fn(grid)
    V = _exact_ball_fn(grid)
    tr = BoundaryTrace.constant(grid, 0.0)
    fwd = check_domination(U, V, trace_U=tr, trace_V=tr)
    bwd = check_domination(V, U, trace_U=tr, trace_V=tr)
    assert fwd.passed and bwd.passed
    assert abs(fwd.measured) <= 1e-12 and abs(bwd.measured) <= 1e-12


def test_domination_flags_interior_violation_without_raising():
    grid = _ball_grid()
    U = _exact_ball_fn(grid)
    V = ToricGridFunction(grid, U.values - 0.5)
    tr = BoundaryTrace.constant(grid, 0.0)
    trV = BoundaryTrace(grid, tr.values - 0.5)
    rec = check_domination(U, V, trace_U=tr, trace_V=trV, exception_mask=np.ones(len(tr.values), bool))
    assert not rec.passed
    assert rec.measured == pytest.approx(0.5, abs=1e-12)


def test_domination_precondition_grid_mismatch():
    g1, g2 = _ball_grid(0.25), _ball_grid(0.125)
    with pytest.raises(ValueError, match="one grid"):
        check_domination(
            _exact_ball_fn(g1),
            _exact_ball_fn(g2),
            trace_U=BoundaryTrace.constant(g1, 0.0),
            trace_V=BoundaryTrace.constant(g2, 0.0),
        )


def test_domination_precondition_density_order():
    grid = _ball_grid()
    U, V = _exact_ball_fn(grid), _exact_ball_fn(grid)
    tr = BoundaryTrace.constant(grid, 0.0)
    # f_V > f_U is a configuration error, not a FAIL
    with pytest.raises(ValueError, match="density precondition"):
        check_domination(U, V, trace_U=tr, trace_V=tr, density_U=0.0, density_V=32.0)
    # the legitimate order is accepted
    rec = check_domination(U, V, trace_U=tr, trace_V=tr, density_U=32.0, density_V=0.0)
    assert rec.passed


def test_domination_precondition_boundary_order_and_exceptions():
    grid = _ball_grid()
    U, V = _exact_ball_fn(grid), _exact_ball_fn(grid)
    hi = BoundaryTrace.constant(grid, 0.0)
    lo = BoundaryTrace.constant(grid, -1.0)
    with pytest.raises(ValueError, match="boundary precondition"):
        check_domination(U, V, trace_U=hi, trace_V=lo)
    # the same data is admissible once the offending nodes are excepted
    rec = check_domination(
        U, V, trace_U=hi, trace_V=lo, exception_mask=np.ones(len(hi.values), bool)
    )
    assert rec.passed


# ---------------------------------------------------------------------------
# orchestration: determinism, artifacts, manifest
# ---------------------------------------------------------------------------


def test_empty_experiment_body_is_reproducible():
    cfg = ExperimentConfig(experiment="empty", seed=3)
    r1 = run_experiment(cfg)
    r2 = run_experiment(cfg)
    assert r1.body_text() == r2.body_text()
    assert r1.body_json() == r2.body_json()
    assert r1.passed  # no checks -> nothing failed


def test_gallery_experiment_passes_and_records_origin_finding():
    rep = run_experiment(ExperimentConfig(experiment="gallery"))
    assert rep.passed
    names = [c.name for c in rep.checks]
    assert "v(0)-vs-closed-form" in names
    assert "v-scan-flags-pole-neighborhood" in names
    assert "v-scan-spares-0.9" in names
    assert "u-scan-flag-count" in names
    assert any("z = 0" in note for note in rep.notes)


def test_write_report_emits_manifest_with_checksums(tmp_path):
    d1, d2 = tmp_path / "a", tmp_path / "b"
    cfg = ExperimentConfig(experiment="gallery", seed=1)
    rep = run_experiment(cfg, out_dir=str(d1))
    write_report(rep, {"extra.txt": "payload\n"}, str(d2))

    for d in (d1, d2):
        assert (d / "report.txt").exists()
        assert (d / "report.json").exists()
        lines = (d / "manifest.txt").read_text().splitlines()
        assert lines, "manifest must not be empty"
        for line in lines:
            assert re.fullmatch(r"[0-9a-f]{64}  \S+", line)

    # body checksums are stable across runs; the full report.txt differs
    # only by its wall-clock header
    m1 = dict(
        line.split("  ", 1)[::-1] for line in (d1 / "manifest.txt").read_text().splitlines()
    )
    rep2 = run_experiment(cfg, out_dir=str(d2))
    m2 = dict(
        line.split("  ", 1)[::-1] for line in (d2 / "manifest.txt").read_text().splitlines()
    )
    assert m1["report.txt#body"] == m2["report.txt#body"]
    assert m1["report.json#body"] == m2["report.json#body"]
    # the rerun rewrites the reports but leaves unrelated files alone
    assert (d2 / "extra.txt").read_text() == "payload\n"


def test_run_experiment_report_text_has_one_line_per_check(tmp_path):
    rep = run_experiment(ExperimentConfig(experiment="gallery"))
    body = rep.body_text()
    check_lines = [ln for ln in body.splitlines() if ln.strip().startswith("CHECK ")]
    assert len(check_lines) == len(rep.checks)
    assert all(("-> PASS" in ln) or ("-> FAIL" in ln) for ln in check_lines)
