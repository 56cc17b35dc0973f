"""Worked boundary-data examples with certified tails.

The centerpiece is the one-variable subharmonic series

    v(z) = sum_{k>=1} 2^{-k} log|z - 2^{-k}|,

which is -infinity on the pole sequence 2^{-k} -> 0, finite and continuous
elsewhere, and upper semicontinuous everywhere.  Truncations v_K decrease
monotonically in K away from the poles, and the truncation error admits an
explicit bound, so pointwise statements about v can be certified from a
finite computation.  The clamped function u = max(v, -1) is continuous on
the whole disk: v < -1 uniformly near z = 0 (v(0) = -2 log 2) and near each
pole, so the clamp erases every singularity.

``discontinuity_scan`` is the generic detector used on such examples: it
samples a function on circles of shrinking radii around each query point
and flags the point only when the observed oscillation stays above the
threshold at *every* radius — a persistent oscillation, not a one-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "example_v",
    "example_u",
    "ScanResult",
    "discontinuity_scan",
]

_LOG2 = math.log(2.0)


def example_v(z, K: int = 40):
    """Partial sum v_K(z) and a bound on the discarded tail.

    Returns ``(value, tail_bound)`` with |v(z) - value| <= tail_bound.  The
    value is -inf exactly when z hits one of the first K poles 2^{-k}.  The
    tail bound sums the next 120 terms explicitly (their poles are isolated
    points; the bound is +inf only when z sits on one) and closes with a
    geometric estimate: beyond k' = K + 120 either |z| dominates 2^{-k'}
    and |z - 2^{-k}| stays within a factor 2 of |z|, or |z| <= 2^{-k'-1}
    and |z - 2^{-k}| stays within a factor 2 of 2^{-k}; both give a
    summable log bound.
    """
    if K < 1 or int(K) != K:
        raise ValueError("truncation order K must be a positive integer")
    K = int(K)
    z = complex(z)

    value = 0.0
    for k in range(1, K + 1):
        d = abs(z - 2.0**-k)
        if d == 0.0:
            value = -math.inf
            break
        value += 2.0**-k * math.log(d)

    extra = 120
    Kp = K + extra
    tail = 0.0
    for k in range(K + 1, Kp + 1):
        d = abs(z - 2.0**-k)
        if d == 0.0:
            return value, math.inf
        tail += 2.0**-k * abs(math.log(d))

    R = abs(z)
    t = 2.0**-Kp
    if R >= 2.0 * t:
        # |z - 2^{-k}| in [R/2, 3R/2] for k > Kp
        rem = t * (abs(math.log(R)) + _LOG2)
    elif R <= 0.5 * t:
        # |z - 2^{-k}| in [2^{-k}/2, 3*2^{-k}/2] for k > Kp
        rem = t * ((Kp + 3) * _LOG2)
    else:
        # R comparable to 2^{-Kp}; both factors stay within [t/4, 4t]
        rem = t * ((Kp + 4) * _LOG2)
    return value, tail + rem


def example_u(z, w, K: int = 40) -> float:
    """Clamped example u(z, w) = max(v(z), -1) on the unit ball of C^2.

    At a pole of the series the clamp is exact and the value is -1.  When
    the certified interval [v_K - tail, v_K + tail] lies below -1 the clamp
    is likewise exact; otherwise the clamp can only shrink the truncation
    error, so the returned value carries the same accuracy as example_v.
    """
    z, w = complex(z), complex(w)
    if abs(z) ** 2 + abs(w) ** 2 >= 1.0:
        raise ValueError(
            f"({z}, {w}) lies outside the open unit ball "
            f"(|z|^2 + |w|^2 = {abs(z)**2 + abs(w)**2:.6f})"
        )
    val, tail = example_v(z, K)
    if val + tail <= -1.0:
        return -1.0
    return max(val, -1.0)


@dataclass
class ScanResult:
    """Outcome of a discontinuity scan.

    flagged[i] is True when the oscillation around points[i] exceeded the
    threshold at every ladder radius; oscillations[i, j] is the observed
    sup-inf spread at radius radii[j] (inf when a sample hit a pole).
    """

    points: np.ndarray
    radii: tuple
    threshold: float
    oscillations: np.ndarray
    flagged: np.ndarray

    def flagged_points(self) -> np.ndarray:
        return self.points[self.flagged]


def discontinuity_scan(
    u_eval,
    points,
    *,
    radii=(0.04, 0.02, 0.01),
    threshold: float = 0.5,
    samples: int = 128,
) -> ScanResult:
    """Flag query points where a function oscillates persistently.

    For each point p and each radius r the function is evaluated at p and
    at `samples` equispaced points of the circle |z - p| = r (deterministic
    angles, no randomness), and the oscillation sup - inf is recorded.  A
    point is flagged only when the oscillation exceeds the threshold at
    every radius of the ladder: genuine discontinuities keep oscillating as
    r -> 0, while a large-but-smooth gradient drops off the ladder.
    Evaluations of -inf (poles) count as infinite oscillation.
    """
    points = np.asarray(points, dtype=complex).reshape(-1)
    radii = tuple(float(r) for r in radii)
    if len(radii) == 0 or any(r <= 0 for r in radii):
        raise ValueError("radii must be a nonempty ladder of positive numbers")
    if sorted(radii, reverse=True) != list(radii):
        raise ValueError("radii must be strictly decreasing")
    if samples < 8:
        raise ValueError("need at least 8 circle samples")

    angles = 2.0 * math.pi * np.arange(samples) / samples
    ring = np.exp(1j * angles)
    osc = np.zeros((len(points), len(radii)))
    for i, p in enumerate(points):
        base = float(u_eval(p))
        for j, r in enumerate(radii):
            vals = [base]
            for q in p + r * ring:
                vals.append(float(u_eval(q)))
            vals = np.array(vals)
            if np.isneginf(vals).any() or np.isposinf(vals).any():
                osc[i, j] = math.inf
            else:
                osc[i, j] = float(vals.max() - vals.min())
    flagged = (osc > threshold).all(axis=1)
    return ScanResult(
        points=points,
        radii=radii,
        threshold=float(threshold),
        oscillations=osc,
        flagged=flagged,
    )
