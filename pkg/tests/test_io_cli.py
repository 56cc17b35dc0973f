import math

import numpy as np
import pytest

from toricma import (
    DensityField,
    ReinhardtDomainSpec,
    ToricGridFunction,
    build_log_grid,
    harmonic_lift,
    load_grid_file,
    save_grid_file,
)
from toricma.cli import main


def _grid(h=0.25, kind="UnitBall", n=2, L=2.0):
    return build_log_grid(ReinhardtDomainSpec(kind=kind, n=n, L=L, h=h))


# ---------------------------------------------------------------------------
# grid file round-trips
# ---------------------------------------------------------------------------


def test_grid_round_trip(tmp_path):
    grid = _grid()
    path = tmp_path / "plain.grid"
    save_grid_file(path, grid)
    back = load_grid_file(path)
    assert back.spec == grid.spec
    assert np.array_equal(back.classification, grid.classification)
    head = path.read_text().splitlines()
    assert head[0].startswith("TORICMA v1 UnitBall ")
    assert head[1] == "PAYLOAD GRID coords=log"


def test_function_round_trip_preserves_nan_pattern(tmp_path):
    grid = _grid()
    fn = ToricGridFunction.from_x_function(
        grid, lambda x: np.exp(2.0 * x).sum(axis=1) - 1.0
    )
    path = tmp_path / "fn.grid"
    save_grid_file(path, fn)
    back = load_grid_file(path)
    assert isinstance(back, ToricGridFunction)
    assert back.coords == "log"
    same = np.isclose(back.values, fn.values, rtol=0, atol=0, equal_nan=True)
    assert same.all()


def test_density_round_trip(tmp_path):
    grid = _grid()
    dens = DensityField.constant(grid, 32.0)
    path = tmp_path / "dens.grid"
    save_grid_file(path, dens)
    back = load_grid_file(path)
    assert isinstance(back, DensityField)
    assert np.allclose(
        back.interior_log_values(), dens.interior_log_values(), rtol=0, atol=0
    )


def test_radial_function_round_trip(tmp_path):
    fn = harmonic_lift("UnitBall", 2, lambda r: r[..., 0] ** 2, subdivisions=8)
    path = tmp_path / "lift.grid"
    save_grid_file(path, fn)
    back = load_grid_file(path)
    assert back.coords == "radius"
    assert back.grid.shape == fn.grid.shape
    assert np.allclose(
        back.values, fn.values, rtol=0, atol=1e-16, equal_nan=True
    )
    assert "coords=radius" in path.read_text().splitlines()[1]


def test_save_rejects_unknown_objects(tmp_path):
    with pytest.raises(TypeError):
        save_grid_file(tmp_path / "x.grid", object())


def test_load_rejects_foreign_file(tmp_path):
    path = tmp_path / "alien.grid"
    path.write_text("GRIDFILE 2.0\n0 0 Interior\n")
    with pytest.raises(ValueError, match="not a TORICMA v1 file"):
        load_grid_file(path)


def test_load_rejects_wrong_record_count(tmp_path):
    grid = _grid()
    path = tmp_path / "short.grid"
    save_grid_file(path, grid)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-3]) + "\n")
    with pytest.raises(ValueError, match="node records"):
        load_grid_file(path)


def test_load_rejects_scrambled_records(tmp_path):
    grid = _grid()
    path = tmp_path / "swap.grid"
    save_grid_file(path, grid)
    lines = path.read_text().splitlines()
    lines[2], lines[3] = lines[3], lines[2]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError, match="expected"):
        load_grid_file(path)


def test_load_rejects_classification_mismatch(tmp_path):
    grid = _grid()
    path = tmp_path / "bad-class.grid"
    save_grid_file(path, grid)
    lines = path.read_text().splitlines()
    idx = next(i for i, ln in enumerate(lines) if ln.endswith(" Interior"))
    lines[idx] = lines[idx].replace(" Interior", " ArtificialWall")
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError, match="grid says"):
        load_grid_file(path)


def test_load_rejects_unknown_class_name(tmp_path):
    grid = _grid()
    path = tmp_path / "alien-class.grid"
    save_grid_file(path, grid)
    lines = path.read_text().splitlines()
    idx = next(i for i, ln in enumerate(lines) if ln.endswith(" Interior"))
    lines[idx] = lines[idx].replace(" Interior", " Core")
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError, match="unknown class"):
        load_grid_file(path)


def test_load_rejects_negative_density(tmp_path):
    grid = _grid()
    dens = DensityField.constant(grid, 1.0)
    path = tmp_path / "neg.grid"
    save_grid_file(path, dens)
    lines = path.read_text().splitlines()
    idx = next(i for i, ln in enumerate(lines) if " Interior " in ln)
    toks = lines[idx].split()
    toks[-1] = "-1.0"
    lines[idx] = " ".join(toks)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError, match="DENSITY payload"):
        load_grid_file(path)


# ---------------------------------------------------------------------------
# command-line interface
# ---------------------------------------------------------------------------

RUN_CFG = """\
[experiment]
id = gallery
seed = 0
"""

SOLVE_CFG = """\
[domain]
kind = UnitBall
n = 2
L = 2
h = 0.25

[boundary]
builder = constant
value = 0.0

[density]
builder = constant
value = 32
"""

CAPACITY_CFG = """\
[domain]
kind = UnitBall
n = 2
L = 4
h = 0.03125
"""


def test_cli_run_gallery_exits_zero(tmp_path, capsys):
    cfg = tmp_path / "gallery.cfg"
    cfg.write_text(RUN_CFG)
    out = tmp_path / "out"
    code = main(["run", "--config", str(cfg), "--out", str(out)])
    assert code == 0
    assert (out / "report.txt").exists()
    assert (out / "manifest.txt").exists()
    assert "OVERALL PASS" in capsys.readouterr().out


def test_cli_run_multiple_ids_get_subdirectories(tmp_path):
    cfg = tmp_path / "multi.cfg"
    cfg.write_text("[experiment]\nid = empty, gallery\n")
    out = tmp_path / "out"
    code = main(["run", "--config", str(cfg), "--out", str(out), "--parallel"])
    assert code == 0
    assert (out / "empty" / "report.txt").exists()
    assert (out / "gallery" / "report.txt").exists()


def test_cli_run_unknown_experiment_exits_two(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[experiment]\nid = not-a-thing\n")
    code = main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_cli_solve_ma_writes_solution(tmp_path):
    cfg = tmp_path / "ma.cfg"
    cfg.write_text(SOLVE_CFG)
    out = tmp_path / "out"
    code = main(["solve-ma", "--config", str(cfg), "--out", str(out)])
    assert code == 0
    sol = load_grid_file(out / "solution.grid")
    assert isinstance(sol, ToricGridFunction)
    report = (out / "solve-report.txt").read_text()
    assert "SOLVE solve-ma" in report
    assert "domain.h = 0.25" in report


def test_cli_solve_envelope_rejects_unknown_builder(tmp_path, capsys):
    cfg = tmp_path / "bad-builder.cfg"
    cfg.write_text("[boundary]\nbuilder = nope\n")
    code = main(["solve-envelope", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "unknown boundary builder" in capsys.readouterr().err


def test_cli_harmonic_lift(tmp_path):
    cfg = tmp_path / "lift.cfg"
    cfg.write_text("[domain]\nkind = UnitBall\nn = 2\nsubdivisions = 8\n")
    out = tmp_path / "out"
    code = main(["harmonic-lift", "--config", str(cfg), "--out", str(out)])
    assert code == 0
    fn = load_grid_file(out / "lift.grid")
    assert fn.coords == "radius"


def test_cli_capacity_scaling_test(tmp_path, capsys):
    cfg = tmp_path / "cap.cfg"
    cfg.write_text(CAPACITY_CFG)
    out = tmp_path / "out"
    code = main(
        [
            "capacity",
            "--config",
            str(cfg),
            "--out",
            str(out),
            "--scaling-test",
            "--compact",
            "ball 0.3679",
        ]
    )
    assert code == 0
    text = capsys.readouterr().out
    assert "scaling: cap(e^-2)/cap(e^-1)" in text and "PASS" in text
    rows = (out / "capacity.csv").read_text().splitlines()
    assert rows[0] == "descriptor,mass,capacity,bound,ratio"
    assert len(rows) == 2


def test_cli_capacity_without_compacts_exits_two(tmp_path, capsys):
    code = main(["capacity", "--out", str(tmp_path / "o")])
    assert code == 2
    assert "no compacts" in capsys.readouterr().err


def test_cli_make_boundary_band(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(
        ["make-boundary", "--band", "0.3,0.6", "--out", str(out), "--samples", "16384"]
    )
    assert code == 0
    assert (out / "band.txt").exists()
    report = (out / "measure-report.txt").read_text()
    assert "exact measure" in report and "qmc measure" in report
    # band measure is 2 pi^2 (b - a)
    assert f"{2.0 * math.pi ** 2 * 0.3:.6g}"[:6] in report


def test_cli_make_boundary_requires_a_shape(tmp_path, capsys):
    code = main(["make-boundary", "--out", str(tmp_path / "o")])
    assert code == 2
    assert "make-boundary needs" in capsys.readouterr().err


def test_cli_usage_error_exits_nonzero(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run"])  # --config is required
    assert exc.value.code == 2
