"""Text persistence for grids, grid functions, and densities.

Format: a header line

    TORICMA v1 <kind> n=<n> L=<L> h=<h>

followed by a payload line ``PAYLOAD <GRID|FUNCTION|DENSITY> coords=<log|radius>``
and one row-major node record per line:

    <k_1> ... <k_n> <ClassName> [value]

The value column is present for FUNCTION/DENSITY payloads at non-Outside
nodes and carries full float precision.  ``coords=radius`` marks functions
living on the radial lattice of `harmonic_lift` rather than the log lattice;
for those the L field records the radial extent (always 1).
"""

from __future__ import annotations

import numpy as np

from .calculus import DensityField, ToricGridFunction
from .geometry import CLASS_IDS, CLASS_NAMES, OUTSIDE, LogGrid, ReinhardtDomainSpec
from .harmonic import RadialGrid

__all__ = ["save_grid_file", "load_grid_file"]

_FMT = "%.17g"


def _header(spec_kind, n, L, h):
    return f"TORICMA v1 {spec_kind} n={n} L={_FMT % L} h={_FMT % h}"


def save_grid_file(path, obj) -> None:
    """Write a LogGrid, ToricGridFunction, or DensityField as TORICMA v1 text."""
    if isinstance(obj, LogGrid):
        grid, payload, values, coords = obj, "GRID", None, "log"
    elif isinstance(obj, DensityField):
        grid, payload, coords = obj.grid, "DENSITY", "log"
        values = obj.log_values.reshape(-1)
    elif isinstance(obj, ToricGridFunction):
        grid, payload = obj.grid, "FUNCTION"
        coords = obj.coords
        values = obj.values.reshape(-1)
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")

    if isinstance(grid, RadialGrid):
        kind, n, L, h = grid.spec.kind, grid.spec.n, 1.0, grid.spec.h
    else:
        kind, n, L, h = grid.spec.kind, grid.spec.n, grid.spec.L, grid.spec.h

    cls = grid.classification.reshape(-1)
    kflat = grid.node_k(np.arange(grid.size))
    lines = [_header(kind, n, L, h), f"PAYLOAD {payload} coords={coords}"]
    for i in range(grid.size):
        rec = " ".join(str(int(k)) for k in kflat[i]) + f" {CLASS_NAMES[int(cls[i])]}"
        if values is not None and cls[i] != OUTSIDE:
            rec += f" {_FMT % values[i]}"
        lines.append(rec)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_grid_file(path):
    """Read a TORICMA v1 file back into the object it was saved from."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("TORICMA v1 "):
        raise ValueError(f"{path}: not a TORICMA v1 file")
    head = lines[0].split()
    kind = head[2]
    fields = dict(tok.split("=", 1) for tok in head[3:])
    n = int(fields["n"])
    L = float(fields["L"])
    h = float(fields["h"])

    if not lines[1].startswith("PAYLOAD "):
        raise ValueError(f"{path}: missing PAYLOAD line")
    ptoks = lines[1].split()
    payload = ptoks[1]
    coords = dict(tok.split("=", 1) for tok in ptoks[2:]).get("coords", "log")

    if coords == "radius":
        grid = RadialGrid(kind, n, subdivisions=round(1.0 / h))
    else:
        grid = LogGrid(ReinhardtDomainSpec(kind, n, L=L, h=h))

    records = lines[2:]
    if len(records) != grid.size:
        raise ValueError(
            f"{path}: {len(records)} node records for a grid of {grid.size} nodes"
        )

    cls = grid.classification.reshape(-1)
    values = np.full(grid.size, np.nan)
    for i, rec in enumerate(records):
        toks = rec.split()
        k = tuple(int(t) for t in toks[:n])
        expect = tuple(int(v) for v in grid.node_k(np.array([i]))[0])
        if k != expect:
            raise ValueError(f"{path}: record {i} has indices {k}, expected {expect}")
        name = toks[n]
        if name not in CLASS_IDS:
            raise ValueError(f"{path}: record {i} has unknown class {name!r}")
        if CLASS_IDS[name] != int(cls[i]):
            raise ValueError(
                f"{path}: record {i} classified {name}, grid says "
                f"{CLASS_NAMES[int(cls[i])]} (header mismatch?)"
            )
        if len(toks) > n + 1:
            values[i] = float(toks[n + 1])

    if payload == "GRID":
        return grid
    box = values.reshape(grid.shape)
    if payload == "FUNCTION":
        fn = ToricGridFunction(grid, box, coords=coords)
        return fn
    if payload == "DENSITY":
        nonneg = box[cls.reshape(grid.shape) != OUTSIDE]
        if not np.isfinite(nonneg).all() or (nonneg < 0).any():
            raise ValueError(f"{path}: DENSITY payload has invalid entries")
        df = DensityField.__new__(DensityField)
        df.grid = grid
        df.radii_fn = None
        df.log_values = box
        return df
    raise ValueError(f"{path}: unknown payload {payload!r}")
