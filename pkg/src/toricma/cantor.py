"""Fat Cantor boundary geometry: dust, Jordan curves, multi-circular sets.

The goal is a concrete open multi-circular set A on the unit sphere whose
closure avoids the coordinate hyperplanes and whose complement has small
surface measure, together with the indicator boundary data phi_A = -1 on A,
0 elsewhere.  The route is entirely constructive:

  1. a Smith-Volterra-Cantor set on [0, 1] (fat Cantor set: remove central
     open intervals of length eps*4^{-k} at step k) in exact rational
     arithmetic;
  2. the product dust of two such sets, placed in a reference box of the
     sphere parametrization square;
  3. a simple closed rectilinear Jordan curve whose interior contains every
     dust cell: cells are inflated slightly, chained along a boustrophedon
     path with thin corridors (width one third of the minimal gap), and the
     outline of the resulting snake is traced exactly;
  4. the interior, mapped to the sphere, is the multi-circular set.

Sphere parametrizations with uniform density are used throughout, so
surface measure is plain area in parameter space:

  n = 2: m = r_2^2 in [0, 1], surface measure = 2 pi^2 dm (total 2 pi^2);
  n = 3: (a, b) in [0, 1]^2 with squared radii s = (a sqrt(b), (1-a) sqrt(b),
         1 - sqrt(b)); the map (a, b) -> (s_1, s_2) has constant Jacobian,
         giving surface measure = pi^3 da db (total pi^3).
"""

from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .geometry import CURVED, BoundaryTrace, LogGrid

__all__ = [
    "SVCSet1D",
    "SVCDust2D",
    "JordanCurve",
    "MultiCircularSet",
    "MeasureEstimate",
    "svc_1d",
    "svc_dust_2d",
    "jordan_through_dust",
    "region_to_multicircular",
    "build_phi_A",
    "surface_measure",
]


def _frac(x) -> Fraction:
    """Exact conversion; floats are dyadic rationals, so nothing is lost."""
    return x if isinstance(x, Fraction) else Fraction(x)


# ---------------------------------------------------------------------------
# Smith-Volterra-Cantor sets
# ---------------------------------------------------------------------------


@dataclass
class SVCSet1D:
    """Finite-depth fat Cantor set: 2^d disjoint closed intervals in [0, 1]."""

    eps: Fraction
    depth: int
    intervals: list  # [(Fraction a, Fraction b)], sorted, disjoint

    @property
    def total_length(self) -> Fraction:
        return sum((b - a for a, b in self.intervals), Fraction(0))

    @property
    def min_gap(self) -> Fraction:
        """Smallest gap between consecutive intervals: eps * 4^{-depth}."""
        if self.depth == 0:
            raise ValueError("depth-0 set has no gaps")
        return self.eps * Fraction(1, 4**self.depth)

    def contains(self, t) -> bool:
        t = _frac(t)
        i = bisect.bisect_right([a for a, _ in self.intervals], t) - 1
        return i >= 0 and self.intervals[i][0] <= t <= self.intervals[i][1]

    def as_float_array(self) -> np.ndarray:
        return np.array([[float(a), float(b)] for a, b in self.intervals])


def svc_1d(eps, d: int) -> SVCSet1D:
    """Build the depth-d Smith-Volterra-Cantor set with removal fraction eps.

    Step k removes the centered open interval of length eps * 4^{-k} from
    each of the 2^{k-1} surviving intervals, so the total remaining length
    is exactly 1 - (eps/2)(1 - 2^{-d}).  Depth d = 0 returns [0, 1] whole.
    """
    eps = _frac(eps)
    if not (0 < eps < 1):
        raise ValueError(f"removal fraction eps={eps} must lie in (0, 1)")
    if d < 0 or int(d) != d:
        raise ValueError("depth must be a nonnegative integer")
    d = int(d)
    intervals = [(Fraction(0), Fraction(1))]
    for k in range(1, d + 1):
        cut = eps * Fraction(1, 4**k)
        nxt = []
        for a, b in intervals:
            mid = (a + b) / 2
            half = cut / 2
            if b - a <= cut:
                raise ValueError(f"interval shorter than removal at step {k}")
            nxt.append((a, mid - half))
            nxt.append((mid + half, b))
        intervals = nxt
    out = SVCSet1D(eps, d, intervals)
    assert out.total_length == 1 - (eps / 2) * (1 - Fraction(1, 2**d))
    return out


@dataclass
class SVCDust2D:
    """Product dust of two SVC sets, placed in a reference box.

    ``cells_x``/``cells_y`` are the factor intervals mapped into the box;
    the 4^d product rectangles are the dust cells.  ``area_fraction`` is
    relative to the box.
    """

    fx: SVCSet1D
    fy: SVCSet1D
    box: tuple  # ((x0, x1), (y0, y1)) as Fractions
    cells_x: list
    cells_y: list

    @property
    def area_fraction(self) -> Fraction:
        return self.fx.total_length * self.fy.total_length

    @property
    def cell_count(self) -> int:
        return len(self.cells_x) * len(self.cells_y)

    @property
    def box_area(self) -> Fraction:
        (x0, x1), (y0, y1) = self.box
        return (x1 - x0) * (y1 - y0)

    def min_gaps(self):
        """Mapped gap widths (gx, gy) between adjacent cells."""
        (x0, x1), (y0, y1) = self.box
        return (
            self.fx.min_gap * (x1 - x0),
            self.fy.min_gap * (y1 - y0),
        )

    def cells(self):
        """Iterate the product rectangles ((a, b), (c, d))."""
        for J in self.cells_y:
            for I in self.cells_x:
                yield (I, J)


def svc_dust_2d(eps, d: int, box=((0, 1), (0, 1))) -> SVCDust2D:
    """Product SVC dust inside a rectangle of the parametrization square."""
    (bx0, bx1), (by0, by1) = box
    bx0, bx1, by0, by1 = _frac(bx0), _frac(bx1), _frac(by0), _frac(by1)
    if not (0 <= bx0 < bx1 <= 1 and 0 <= by0 < by1 <= 1):
        raise ValueError(f"box {box} must be a nondegenerate rectangle inside [0,1]^2")
    fx = svc_1d(eps, d)
    fy = svc_1d(eps, d)
    mapx = lambda t: bx0 + t * (bx1 - bx0)
    mapy = lambda t: by0 + t * (by1 - by0)
    cells_x = [(mapx(a), mapx(b)) for a, b in fx.intervals]
    cells_y = [(mapy(a), mapy(b)) for a, b in fy.intervals]
    return SVCDust2D(fx, fy, ((bx0, bx1), (by0, by1)), cells_x, cells_y)


# ---------------------------------------------------------------------------
# exact planar predicates
# ---------------------------------------------------------------------------


def _orient(p, q, r):
    """Sign of the cross product (q-p) x (r-p); exact on Fractions."""
    v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    return (v > 0) - (v < 0)


def _on_segment(p, q, r) -> bool:
    """Whether r lies on the closed segment pq (collinearity assumed checked)."""
    return (
        min(p[0], q[0]) <= r[0] <= max(p[0], q[0])
        and min(p[1], q[1]) <= r[1] <= max(p[1], q[1])
    )


def _segments_intersect(a, b, c, d) -> bool:
    """Closed-segment intersection test with exact arithmetic."""
    o1, o2 = _orient(a, b, c), _orient(a, b, d)
    o3, o4 = _orient(c, d, a), _orient(c, d, b)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and _on_segment(a, b, c):
        return True
    if o2 == 0 and _on_segment(a, b, d):
        return True
    if o3 == 0 and _on_segment(c, d, a):
        return True
    if o4 == 0 and _on_segment(c, d, b):
        return True
    return False


class JordanCurve:
    """Closed polygonal chain with exact-rational vertices.

    The constructor closes the chain if needed and rejects degenerate
    edges.  ``is_simple`` runs the exact pairwise segment test (spatially
    bucketed when the polygon is large; bucketing only prunes pairs whose
    bounding boxes cannot meet, so the test remains exhaustive).
    """

    def __init__(self, vertices):
        pts = [(_frac(x), _frac(y)) for x, y in vertices]
        if len(pts) >= 2 and pts[0] == pts[-1]:
            pts = pts[:-1]
        if len(pts) < 3:
            raise ValueError("a Jordan curve needs at least 3 distinct vertices")
        for i in range(len(pts)):
            if pts[i] == pts[(i + 1) % len(pts)]:
                raise ValueError(f"zero-length edge at vertex {i}")
        self._loop = pts
        self.vertices = pts + [pts[0]]  # closed: first vertex = last vertex
        self.boxes = None  # optional rectangle decomposition of the interior

    def __len__(self):
        return len(self._loop)

    def segments(self):
        L = self._loop
        return [(L[i], L[(i + 1) % len(L)]) for i in range(len(L))]

    # -- simplicity -----------------------------------------------------------

    def is_simple(self) -> bool:
        segs = self.segments()
        m = len(segs)
        pairs = (
            itertools.combinations(range(m), 2)
            if m <= 1200
            else self._bucket_pairs(segs)
        )
        for i, j in pairs:
            if i > j:
                i, j = j, i
            adjacent = (j == i + 1) or (i == 0 and j == m - 1)
            a, b = segs[i]
            c, d = segs[j]
            if adjacent:
                shared = b if j == i + 1 else a
                e1 = a if shared == b else b
                e2 = d if (c == shared) else c
                # adjacent edges may only meet at the shared vertex
                if _orient(shared, e1, e2) == 0:
                    dot = (e1[0] - shared[0]) * (e2[0] - shared[0]) + (
                        e1[1] - shared[1]
                    ) * (e2[1] - shared[1])
                    if dot > 0:
                        return False  # collinear overlap (spike)
                continue
            if _segments_intersect(a, b, c, d):
                return False
        return True

    def _bucket_pairs(self, segs):
        """Candidate index pairs whose bounding boxes can meet (conservative)."""
        pts = np.array(
            [[float(a[0]), float(a[1]), float(b[0]), float(b[1])] for a, b in segs]
        )
        lox = np.minimum(pts[:, 0], pts[:, 2])
        hix = np.maximum(pts[:, 0], pts[:, 2])
        loy = np.minimum(pts[:, 1], pts[:, 3])
        hiy = np.maximum(pts[:, 1], pts[:, 3])
        pad = 1e-12 + 1e-9 * max(hix.max() - lox.min(), hiy.max() - loy.min())
        K = max(8, int(math.sqrt(len(segs))))
        sx = (hix.max() - lox.min()) / K + 1e-300
        sy = (hiy.max() - loy.min()) / K + 1e-300
        buckets = {}
        for i in range(len(segs)):
            bx0 = int((lox[i] - pad - lox.min()) / sx)
            bx1 = int((hix[i] + pad - lox.min()) / sx)
            by0 = int((loy[i] - pad - loy.min()) / sy)
            by1 = int((hiy[i] + pad - loy.min()) / sy)
            for bx in range(bx0, bx1 + 1):
                for by in range(by0, by1 + 1):
                    buckets.setdefault((bx, by), []).append(i)
        seen = set()
        for members in buckets.values():
            for i, j in itertools.combinations(members, 2):
                key = (i, j) if i < j else (j, i)
                if key not in seen:
                    seen.add(key)
                    yield key

    # -- containment ----------------------------------------------------------

    def contains_point(self, p) -> bool:
        """Even-odd containment with exact arithmetic; on-edge counts inside."""
        p = (_frac(p[0]), _frac(p[1]))
        crossings = 0
        for a, b in self.segments():
            if _orient(a, b, p) == 0 and _on_segment(a, b, p):
                return True
            if (a[1] > p[1]) != (b[1] > p[1]):
                # exact x-coordinate of the edge at height p_y
                xin = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
                if xin > p[0]:
                    crossings += 1
        return crossings % 2 == 1

    def contains_points_float(self, pts: np.ndarray) -> np.ndarray:
        """Vectorized even-odd test in floats (adequate away from edges)."""
        pts = np.asarray(pts, dtype=float)
        V = np.array([[float(x), float(y)] for x, y in self.vertices])
        x, y = pts[:, 0], pts[:, 1]
        inside = np.zeros(len(pts), dtype=bool)
        for i in range(len(V) - 1):
            x1, y1 = V[i]
            x2, y2 = V[i + 1]
            if y2 == y1:
                continue
            cond = (y1 > y) != (y2 > y)
            xin = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            inside ^= cond & (xin > x)
        return inside

    @property
    def signed_area(self) -> Fraction:
        s = Fraction(0)
        L = self._loop
        for i in range(len(L)):
            x1, y1 = L[i]
            x2, y2 = L[(i + 1) % len(L)]
            s += x1 * y2 - x2 * y1
        return s / 2

    def vertices_float(self) -> np.ndarray:
        return np.array([[float(x), float(y)] for x, y in self.vertices])

    def __repr__(self):
        return f"JordanCurve({len(self)} vertices, area={float(self.signed_area):.6g})"


# ---------------------------------------------------------------------------
# outline tracing for a union of boxes
# ---------------------------------------------------------------------------


def _trace_outline(boxes):
    """Boundary polygon of a simply connected union of axis-aligned boxes.

    Boxes must have pairwise disjoint interiors (abutting faces allowed).
    Every box edge is split at all lattice events; a fragment lies on the
    union boundary iff a probe point just outside it misses every box.  The
    surviving fragments stitch into a single closed loop.
    """
    ex = sorted({v for b in boxes for v in (b[0], b[1])})
    ey = sorted({v for b in boxes for v in (b[2], b[3])})

    fx = np.array([float(v) for v in ex])
    fy = np.array([float(v) for v in ey])
    gaps = [g for g in np.diff(fx).tolist() + np.diff(fy).tolist() if g > 0]
    delta = min(gaps) / 64.0

    bf = np.array([[float(b[0]), float(b[1]), float(b[2]), float(b[3])] for b in boxes])

    def split(lo, hi, events):
        i = bisect.bisect_right(events, lo)
        cuts = [lo]
        while i < len(events) and events[i] < hi:
            cuts.append(events[i])
            i += 1
        cuts.append(hi)
        return list(zip(cuts[:-1], cuts[1:]))

    frags = []  # (p, q) with p, q exact vertex pairs
    probes = []
    for x0, x1, y0, y1 in boxes:
        for ya, yb in split(y0, y1, ey):  # vertical edges
            ymid = float(ya + yb) / 2.0
            frags.append(((x0, ya), (x0, yb)))
            probes.append((float(x0) - delta, ymid))
            frags.append(((x1, ya), (x1, yb)))
            probes.append((float(x1) + delta, ymid))
        for xa, xb in split(x0, x1, ex):  # horizontal edges
            xmid = float(xa + xb) / 2.0
            frags.append(((xa, y0), (xb, y0)))
            probes.append((xmid, float(y0) - delta))
            frags.append(((xa, y1), (xb, y1)))
            probes.append((xmid, float(y1) + delta))

    P = np.array(probes)
    covered = np.zeros(len(P), dtype=bool)
    step = max(1, 10**7 // max(len(bf), 1))
    for lo in range(0, len(P), step):
        chunk = P[lo : lo + step]
        inb = (
            (chunk[:, None, 0] >= bf[None, :, 0])
            & (chunk[:, None, 0] <= bf[None, :, 1])
            & (chunk[:, None, 1] >= bf[None, :, 2])
            & (chunk[:, None, 1] <= bf[None, :, 3])
        )
        covered[lo : lo + step] = inb.any(axis=1)

    boundary = [f for f, c in zip(frags, covered) if not c]
    if not boundary:
        raise RuntimeError("outline tracing found no boundary fragments")

    adj = {}
    for seg in boundary:
        p, q = seg
        adj.setdefault(p, []).append(q)
        adj.setdefault(q, []).append(p)
    for v, nbrs in adj.items():
        if len(nbrs) != 2:
            raise RuntimeError(f"outline stitching failed at vertex {v} (degree {len(nbrs)})")

    start = min(adj)
    loop = [start]
    prev, cur = None, start
    while True:
        n1, n2 = adj[cur]
        nxt = n2 if n1 == prev else n1
        if nxt == start:
            break
        loop.append(nxt)
        prev, cur = cur, nxt
    if len(loop) != len(boundary):
        raise RuntimeError(
            f"outline is not a single loop ({len(loop)} vertices vs "
            f"{len(boundary)} fragments); the union may be disconnected"
        )

    # merge collinear runs
    merged = []
    m = len(loop)
    for i in range(m):
        a, b, c = loop[i - 1], loop[i], loop[(i + 1) % m]
        if _orient(a, b, c) != 0:
            merged.append(b)
    if len(merged) < 4:
        raise RuntimeError("outline degenerated under collinear merging")
    if _shoelace(merged) < 0:
        merged.reverse()
    return merged


def _shoelace(pts) -> Fraction:
    s = Fraction(0)
    for i in range(len(pts)):
        x1, y1 = pts[i]
        x2, y2 = pts[(i + 1) % len(pts)]
        s += x1 * y2 - x2 * y1
    return s / 2


def jordan_through_dust(dust: SVCDust2D) -> JordanCurve:
    """Simple closed rectilinear curve whose interior contains the dust.

    Cells are inflated by one sixth of the minimal gap per axis, chained in
    boustrophedon order with corridors of width one third of the minimal
    gap, and the outline of the resulting snake is traced exactly.  The
    returned curve keeps the rectangle decomposition on ``curve.boxes`` and
    is verified simple.
    """
    nx, ny = len(dust.cells_x), len(dust.cells_y)
    if nx * ny == 1:
        (ix0, ix1), (iy0, iy1) = dust.cells_x[0], dust.cells_y[0]
        mx = (ix1 - ix0) / 8
        my = (iy1 - iy0) / 8
        box = (ix0 - mx, ix1 + mx, iy0 - my, iy1 + my)
        curve = JordanCurve(
            [(box[0], box[2]), (box[1], box[2]), (box[1], box[3]), (box[0], box[3])]
        )
        curve.boxes = [box]
        if not curve.is_simple():
            raise RuntimeError("degenerate single-cell outline is not simple")
        return curve

    gx, gy = dust.min_gaps()
    g = min(gx, gy)
    mx, my = gx / 6, gy / 6
    w = g / 3
    cell_h = min(b - a for a, b in dust.cells_y)
    cell_w = min(b - a for a, b in dust.cells_x)
    if not (w < cell_h and w < cell_w):
        raise RuntimeError(
            f"corridor width {float(w):.3g} does not fit the smallest cell "
            f"({float(cell_w):.3g} x {float(cell_h):.3g}); dust too deep for eps"
        )

    # expanded cells, indexed [iy][ix]
    ecell = {}
    for iy, (y0, y1) in enumerate(dust.cells_y):
        for ix, (x0, x1) in enumerate(dust.cells_x):
            ecell[(ix, iy)] = (x0 - mx, x1 + mx, y0 - my, y1 + my)

    boxes = []
    order = []
    for iy in range(ny):
        cols = range(nx) if iy % 2 == 0 else range(nx - 1, -1, -1)
        for ix in cols:
            order.append((ix, iy))
    boxes.extend(ecell[k] for k in order)

    for (ix1, iy1), (ix2, iy2) in zip(order[:-1], order[1:]):
        b1, b2 = ecell[(ix1, iy1)], ecell[(ix2, iy2)]
        if iy1 == iy2:  # horizontal corridor across an x-gap
            left, right = (b1, b2) if b1[1] < b2[0] else (b2, b1)
            cy = (dust.cells_y[iy1][0] + dust.cells_y[iy1][1]) / 2
            boxes.append((left[1], right[0], cy - w / 2, cy + w / 2))
        else:  # vertical corridor across a y-gap (same column)
            low, high = (b1, b2) if b1[3] < b2[2] else (b2, b1)
            cx = (dust.cells_x[ix1][0] + dust.cells_x[ix1][1]) / 2
            boxes.append((cx - w / 2, cx + w / 2, low[3], high[2]))

    outline = _trace_outline(boxes)
    curve = JordanCurve(outline)
    curve.boxes = boxes
    if not curve.is_simple():
        raise RuntimeError("traced outline failed the simplicity check")
    return curve


# ---------------------------------------------------------------------------
# multi-circular sets on the sphere
# ---------------------------------------------------------------------------


def _param_n2(r: np.ndarray) -> np.ndarray:
    """Quarter-circle parameter m = r_2^2 of radius vectors (N, 2)."""
    return r[:, 1] ** 2


def _param_n3(r: np.ndarray):
    """Square parameters (a, b) of radius vectors (N, 3); b = (s1+s2)^2."""
    s = r**2
    sm = s[:, 0] + s[:, 1]
    b = sm**2
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(sm > 0, s[:, 0] / np.where(sm > 0, sm, 1.0), 0.5)
    return a, b


class MultiCircularSet:
    """Open torus-saturated subset of the unit sphere, away from the axes.

    For n = 2 the set is a finite union of open intervals in the parameter
    m = r_2^2; for n = 3 it is the interior of a rectilinear Jordan curve in
    the measure-uniform (a, b) parametrization.  ``delta_ax`` is the axis
    margin: the closure keeps every radius >= delta_ax.
    """

    def __init__(self, n: int, delta_ax: float, *, intervals=None, curve=None):
        if n not in (2, 3):
            raise ValueError("only n=2 and n=3 are supported")
        if delta_ax < 0:
            raise ValueError("axis margin delta_ax must be nonnegative")
        self.n = n
        self.delta_ax = float(delta_ax)
        self.intervals = None
        self.curve = None
        self._boxes_f = None
        if n == 2:
            iv = sorted((float(a), float(b)) for a, b in (intervals or []))
            lo, hi = delta_ax**2, 1.0 - delta_ax**2
            for a, b in iv:
                if not (a < b):
                    raise ValueError(f"empty interval ({a}, {b})")
                if a < lo - 1e-15 or b > hi + 1e-15:
                    raise ValueError(
                        f"interval ({a}, {b}) violates the axis margin "
                        f"[{lo}, {hi}] for delta_ax={delta_ax}"
                    )
            for (a1, b1), (a2, b2) in zip(iv, iv[1:]):
                if b1 >= a2:
                    raise ValueError("intervals must be pairwise disjoint")
            self.intervals = iv
        else:
            if curve is None:
                raise ValueError("n=3 requires a JordanCurve")
            self.curve = curve
            if curve.boxes is not None:
                self._boxes_f = np.array(
                    [[float(v) for v in b] for b in curve.boxes]
                )

    # -- constructors ----------------------------------------------------------

    @classmethod
    def from_intervals(cls, intervals, delta_ax: float = 0.05) -> "MultiCircularSet":
        return cls(2, delta_ax, intervals=intervals)

    @classmethod
    def empty(cls, n: int, delta_ax: float = 0.05) -> "MultiCircularSet":
        if n != 2:
            raise ValueError("only the n=2 interval form supports an empty set")
        return cls(2, delta_ax, intervals=[])

    # -- membership and distances ----------------------------------------------

    def contains_radii(self, r) -> np.ndarray:
        """Strict membership of radius vectors (N, n) (open set semantics)."""
        r = np.atleast_2d(np.asarray(r, dtype=float))
        if r.shape[1] != self.n:
            raise ValueError(f"radius vectors must have {self.n} components")
        if self.n == 2:
            m = _param_n2(r)
            out = np.zeros(len(r), dtype=bool)
            for a, b in self.intervals:
                out |= (m > a) & (m < b)
            return out
        a, b = _param_n3(r)
        pts = np.column_stack([a, b])
        if self._boxes_f is not None:
            B = self._boxes_f
            out = np.zeros(len(pts), dtype=bool)
            for lo in range(0, len(B), 4096):
                sub = B[lo : lo + 4096]
                hit = (
                    (pts[:, None, 0] >= sub[None, :, 0])
                    & (pts[:, None, 0] <= sub[None, :, 1])
                    & (pts[:, None, 1] >= sub[None, :, 2])
                    & (pts[:, None, 1] <= sub[None, :, 3])
                )
                out |= hit.any(axis=1)
            return out
        return self.curve.contains_points_float(pts)

    def distance_radii(self, r) -> np.ndarray:
        """Parameter-space distance to the set (0 inside)."""
        r = np.atleast_2d(np.asarray(r, dtype=float))
        if self.n == 2:
            m = _param_n2(r)
            if not self.intervals:
                return np.full(len(m), np.inf)
            d = np.full(len(m), np.inf)
            for a, b in self.intervals:
                inside = (m > a) & (m < b)
                d = np.minimum(d, np.where(inside, 0.0, np.minimum(np.abs(m - a), np.abs(m - b))))
            return d
        a, b = _param_n3(r)
        pts = np.column_stack([a, b])
        inside = self.contains_radii(r)
        d = np.where(inside, 0.0, np.inf)
        out = ~inside
        if out.any():
            d[out] = self._distance_to_boxes(pts[out])
        return d

    def _distance_to_boxes(self, pts: np.ndarray) -> np.ndarray:
        if self._boxes_f is None:
            return self._distance_to_segments(pts)
        B = self._boxes_f
        best = np.full(len(pts), np.inf)
        for lo in range(0, len(B), 2048):
            sub = B[lo : lo + 2048]
            dx = np.maximum(
                np.maximum(sub[None, :, 0] - pts[:, None, 0], 0.0),
                np.maximum(pts[:, None, 0] - sub[None, :, 1], 0.0),
            )
            dy = np.maximum(
                np.maximum(sub[None, :, 2] - pts[:, None, 1], 0.0),
                np.maximum(pts[:, None, 1] - sub[None, :, 3], 0.0),
            )
            best = np.minimum(best, np.sqrt(dx**2 + dy**2).min(axis=1))
        return best

    def _distance_to_segments(self, pts: np.ndarray) -> np.ndarray:
        V = self.curve.vertices_float()
        A, Bv = V[:-1], V[1:]
        best = np.full(len(pts), np.inf)
        for lo in range(0, len(A), 1024):
            a = A[lo : lo + 1024]
            bseg = Bv[lo : lo + 1024]
            ab = bseg - a
            denom = (ab**2).sum(axis=1)
            denom[denom == 0] = 1.0
            ap = pts[:, None, :] - a[None, :, :]
            t = np.clip((ap * ab[None, :, :]).sum(axis=2) / denom[None, :], 0.0, 1.0)
            proj = a[None, :, :] + t[:, :, None] * ab[None, :, :]
            dd = np.sqrt(((pts[:, None, :] - proj) ** 2).sum(axis=2))
            best = np.minimum(best, dd.min(axis=1))
        return best

    def boundary_distance_radii(self, r) -> np.ndarray:
        """Parameter-space distance to the topological boundary of the set."""
        r = np.atleast_2d(np.asarray(r, dtype=float))
        if self.n == 2:
            m = _param_n2(r)
            if not self.intervals:
                return np.full(len(m), np.inf)
            ends = np.array([e for iv in self.intervals for e in iv])
            return np.abs(m[:, None] - ends[None, :]).min(axis=1)
        a, b = _param_n3(r)
        return self._distance_to_segments(np.column_stack([a, b]))

    # -- measure -----------------------------------------------------------------

    @property
    def total_sphere_measure(self) -> float:
        return 2.0 * math.pi**2 if self.n == 2 else math.pi**3

    @property
    def measure(self) -> float:
        """Surface measure of the set (exact area times the uniform density)."""
        if self.n == 2:
            return self.total_sphere_measure * sum(b - a for a, b in self.intervals)
        if self.curve.boxes is not None:
            area = sum(
                (b[1] - b[0]) * (b[3] - b[2]) for b in self.curve.boxes
            )
        else:
            area = abs(self.curve.signed_area)
        return self.total_sphere_measure * float(area)

    def __repr__(self):
        if self.n == 2:
            return f"MultiCircularSet(n=2, {len(self.intervals)} bands, delta_ax={self.delta_ax})"
        return f"MultiCircularSet(n=3, curve={len(self.curve)} vertices, delta_ax={self.delta_ax})"


def region_to_multicircular(curve: JordanCurve, delta_ax: float, n: int) -> MultiCircularSet:
    """Lift a planar Jordan-curve interior to a multi-circular set on S^5.

    The curve lives in the (a, b) parametrization square of the n = 3
    sphere.  Every vertex must respect the axis margins: the squared radii
    s_1 = a sqrt(b), s_2 = (1-a) sqrt(b), s_3 = 1 - sqrt(b) must all stay
    >= delta_ax^2, checked exactly as a^2 b >= delta_ax^4 etc.  For
    rectilinear curves the margin functions are monotone along every edge,
    so the vertex check covers the whole boundary (and hence the closure of
    the interior).
    """
    if n != 3:
        raise ValueError(
            "curve-based multi-circular sets are three-dimensional; "
            "use MultiCircularSet.from_intervals for n = 2"
        )
    d2 = _frac(delta_ax) ** 2
    d4 = d2**2
    top = (1 - d2) ** 2
    for i, (a, b) in enumerate(curve._loop):
        if not (0 <= a <= 1 and 0 <= b <= 1):
            raise ValueError(f"vertex {i} = ({float(a)}, {float(b)}) outside the unit square")
        if a * a * b < d4:
            raise ValueError(
                f"vertex {i}: first-axis margin violated (a^2 b = {float(a * a * b):.3g} "
                f"< delta_ax^4 = {float(d4):.3g})"
            )
        if (1 - a) * (1 - a) * b < d4:
            raise ValueError(f"vertex {i}: second-axis margin violated")
        if b > top:
            raise ValueError(
                f"vertex {i}: third-axis margin violated (b = {float(b):.6g} > {float(top):.6g})"
            )
    return MultiCircularSet(3, float(delta_ax), curve=curve)


# ---------------------------------------------------------------------------
# boundary data and surface measure
# ---------------------------------------------------------------------------


def build_phi_A(A: MultiCircularSet, grid: LogGrid) -> BoundaryTrace:
    """Indicator boundary data: -1 on A, 0 on the rest of the sphere.

    CurvedBoundary nodes take the value by strict membership of their
    snapped radii.  A node is flagged as a discontinuity point when its
    snapped radii lie within one grid-cell parameter diameter of the
    topological boundary of A, or when a neighboring curved node (within
    one lattice step in every axis) disagrees about membership; everything
    else is a continuity point.
    """
    if grid.spec.kind != "UnitBall":
        raise ValueError("indicator boundary data lives on the sphere; use a UnitBall grid")
    if grid.spec.n != A.n:
        raise ValueError(f"set dimension {A.n} != grid dimension {grid.spec.n}")
    radii = grid.curved_snap_radii
    member = A.contains_radii(radii)
    values = np.where(member, -1.0, 0.0)

    # parameter-space diameter of one grid cell at each node
    h = grid.spec.h
    x = grid.node_x(grid.curved_flat)
    if A.n == 2:
        base = _param_n2(radii)
    else:
        pa, pb = _param_n3(radii)
        base = np.column_stack([pa, pb])
    diam = np.zeros(len(radii))
    for j in range(grid.spec.n):
        for sgn in (-1.0, 1.0):
            xs = x.copy()
            xs[:, j] += sgn * h
            rs = np.exp(xs)
            rs = rs / np.sqrt((rs**2).sum(axis=1))[:, None]
            if A.n == 2:
                move = np.abs(_param_n2(rs) - base)
            else:
                qa, qb = _param_n3(rs)
                move = np.sqrt((qa - base[:, 0]) ** 2 + (qb - base[:, 1]) ** 2)
            diam = np.maximum(diam, move)

    near_edge = A.boundary_distance_radii(radii) <= diam

    # neighbor disagreement among curved nodes one lattice step apart
    mem_full = np.full(grid.size, -1, dtype=np.int8)
    mem_full[grid.curved_flat] = member.astype(np.int8)
    k = grid.node_k(grid.curved_flat)
    m = grid.shape[0]
    disagree = np.zeros(len(radii), dtype=bool)
    offsets = [
        np.array(o)
        for o in itertools.product((-1, 0, 1), repeat=grid.spec.n)
        if any(o)
    ]
    for off in offsets:
        kn = k + off
        ok = ((kn >= 0) & (kn < m)).all(axis=1)
        fn = (kn[ok] * grid.strides).sum(axis=1)
        nbr = mem_full[fn]
        idx = np.flatnonzero(ok)
        disagree[idx] |= (nbr >= 0) & (nbr != member[idx].astype(np.int8))

    continuity = ~(near_edge | disagree)

    def radii_fn(r):
        return -1.0 if bool(A.contains_radii(np.asarray(r)[None, :])[0]) else 0.0

    return BoundaryTrace(grid, values, continuity=continuity, radii_fn=radii_fn)


@dataclass
class MeasureEstimate:
    """Quasi-Monte Carlo surface measure with an iid-proxy standard error."""

    value: float
    stderr: float
    samples: int
    total: float

    @property
    def fraction(self) -> float:
        return self.value / self.total


def surface_measure(A: MultiCircularSet, samples: int = 1 << 20, *, seed: int = 0) -> MeasureEstimate:
    """Estimate the surface measure of the saturated set over A.

    Sobol quadrature in the measure-uniform parametrization (m for n = 2,
    (a, b) for n = 3), so the estimate is total * hit-fraction.  The
    reported standard error is the iid binomial proxy, conservative for
    scrambled Sobol points.
    """
    from scipy.stats import qmc

    dim = 1 if A.n == 2 else 2
    eng = qmc.Sobol(d=dim, scramble=True, seed=seed)
    mexp = max(4, int(math.ceil(math.log2(max(samples, 2)))))
    pts = eng.random_base2(m=mexp)[:samples]
    if A.n == 2:
        m = pts[:, 0]
        r2 = np.sqrt(m)
        r1 = np.sqrt(1.0 - m)
        radii = np.column_stack([r1, r2])
    else:
        a, b = pts[:, 0], pts[:, 1]
        sb = np.sqrt(b)
        s1 = a * sb
        s2 = (1.0 - a) * sb
        s3 = np.maximum(1.0 - sb, 0.0)
        radii = np.sqrt(np.column_stack([s1, s2, s3]))
    hits = A.contains_radii(radii)
    p = float(hits.mean())
    total = A.total_sphere_measure
    stderr = total * math.sqrt(max(p * (1.0 - p), 0.0) / len(radii))
    return MeasureEstimate(value=total * p, stderr=stderr, samples=len(radii), total=total)
