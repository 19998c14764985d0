"""Vehicle footprint geometry.

Half-width of a rectangular body as a function of lateral slope, a linear
over-approximation of it that keeps downstream constraints linear, the
segment-discretized body bounds used by the corridor containment rows, and
an exact oriented-rectangle overlap test for post-hoc collision checks.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GeometryModel",
    "Obb",
    "exact_half_width",
    "fit_linear_params",
    "approx_half_width",
    "max_approx_error",
    "segment_offsets",
    "footprint_bounds",
    "obb_corners",
    "obb_intersect",
]


def exact_half_width(l_prime: float, width: float):
    """Lateral half-extent of a body of the given width at lateral slope l_prime.

    Scalar or ndarray l_prime; the body is assumed aligned with its velocity,
    so the projection onto the lateral axis grows with sqrt(1 + l_prime^2).
    """
    return 0.5 * width * np.sqrt(1.0 + np.square(l_prime))


def fit_linear_params(width: float, phi_max: float) -> tuple[float, float]:
    """Fit a*|l'| + b so it over-approximates the exact half-width on [-tan(phi_max), tan(phi_max)].

    b is the zero-slope half-width; a is the secant slope that makes the two
    curves meet again at the slope limit, which keeps the linear model an upper
    bound everywhere in between (the exact curve is convex).
    """
    if width <= 0.0:
        raise ValueError(f"width must be positive, got {width}")
    if not 0.0 < phi_max < math.pi / 2:
        raise ValueError(f"phi_max must lie in (0, pi/2), got {phi_max}")
    t = math.tan(phi_max)
    b = 0.5 * width
    a = (exact_half_width(t, width) - b) / t
    return a, b


@dataclass(frozen=True)
class GeometryModel:
    """Body dimensions plus the fitted linear half-width coefficients."""

    width: float
    length: float
    a: float
    b: float
    lam: int = 6
    phi_max: float = math.pi / 3

    def __post_init__(self):
        if self.width <= 0.0 or self.length <= 0.0:
            raise ValueError("body dimensions must be positive")
        if self.lam < 1:
            raise ValueError(f"lam must be >= 1, got {self.lam}")
        if abs(self.b - 0.5 * self.width) > 1e-12:
            raise ValueError("b must equal width/2")
        if self.a <= 0.0:
            raise ValueError("a must be positive")

    @classmethod
    def from_dims(cls, width: float, length: float, lam: int = 6,
                  phi_max: float = math.pi / 3) -> "GeometryModel":
        a, b = fit_linear_params(width, phi_max)
        return cls(width=width, length=length, a=a, b=b, lam=lam, phi_max=phi_max)


def approx_half_width(l_prime, model: GeometryModel):
    """Linear over-approximation a*|l'| + b of the half-width.

    Slopes beyond tan(phi_max) are clamped into the fitted range with a warning;
    the fit is only an upper bound inside it.
    """
    limit = math.tan(model.phi_max)
    lp = np.asarray(l_prime, dtype=float)
    if np.any(np.abs(lp) > limit + 1e-12):
        warnings.warn("lateral slope outside fitted range; clamping", stacklevel=2)
        lp = np.clip(lp, -limit, limit)
    out = model.a * np.abs(lp) + model.b
    return float(out) if np.isscalar(l_prime) or out.ndim == 0 else out


def max_approx_error(model: GeometryModel, samples: int = 200_000) -> tuple[float, float]:
    """Largest gap (approx - exact) over the fitted slope range and its location.

    Dense symmetric sampling first, then golden-section refinement around the
    best sample; the gap is concave in |l'| so the refinement is safe.
    """
    limit = math.tan(model.phi_max)
    xs = np.linspace(0.0, limit, max(2, samples // 2))
    gap = model.a * xs + model.b - exact_half_width(xs, model.width)
    k = int(np.argmax(gap))
    lo = xs[max(k - 1, 0)]
    hi = xs[min(k + 1, xs.size - 1)]

    def g(x):
        return model.a * x + model.b - exact_half_width(x, model.width)

    # golden-section maximization on [lo, hi]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    for _ in range(80):
        if g(c) > g(d):
            hi = d
        else:
            lo = c
        c = hi - invphi * (hi - lo)
        d = lo + invphi * (hi - lo)
    x_star = 0.5 * (lo + hi)
    return float(g(x_star)), float(x_star)


def segment_offsets(lam: int) -> np.ndarray:
    """Symmetric per-segment longitudinal offsets j - (lam+1)/2 for j = 1..lam."""
    if lam < 1:
        raise ValueError(f"lam must be >= 1, got {lam}")
    return np.arange(1, lam + 1, dtype=float) - 0.5 * (lam + 1)


def footprint_bounds(l: float, l_prime: float, cell_len: float,
                     model: GeometryModel) -> tuple[np.ndarray, np.ndarray]:
    """Per-segment upper/lower lateral body edges inside one corridor cell.

    The cell is split into lam segments of length cell_len/lam; each segment
    center sits at a signed offset from the anchor point, and the body edge
    there is the anchor l shifted by offset*seg_len*l' plus/minus the
    slope-dependent half-width.
    """
    if cell_len <= 0.0:
        raise ValueError(f"cell_len must be positive, got {cell_len}")
    eps = approx_half_width(l_prime, model)
    seg_len = cell_len / model.lam
    drift = segment_offsets(model.lam) * seg_len * l_prime
    ub = l + eps + drift
    lb = l - eps + drift
    return ub, lb


@dataclass(frozen=True)
class Obb:
    """Oriented bounding box in the s-l plane."""

    center_s: float
    center_l: float
    heading: float
    half_length: float
    half_width: float

    def __post_init__(self):
        if self.half_length <= 0.0 or self.half_width <= 0.0:
            raise ValueError("half extents must be positive")


def obb_corners(box: Obb) -> np.ndarray:
    """Corner coordinates (4, 2), counter-clockwise."""
    c, s = math.cos(box.heading), math.sin(box.heading)
    rot = np.array([[c, -s], [s, c]])
    local = np.array([
        [box.half_length, box.half_width],
        [-box.half_length, box.half_width],
        [-box.half_length, -box.half_width],
        [box.half_length, -box.half_width],
    ])
    return local @ rot.T + np.array([box.center_s, box.center_l])


def obb_intersect(p: Obb, q: Obb) -> bool:
    """Strict-overlap test for two oriented rectangles (separating axes).

    Touching boundaries count as non-overlapping, so a zero-measure contact is
    not a collision.
    """
    pc = obb_corners(p)
    qc = obb_corners(q)
    for box in (p, q):
        c, s = math.cos(box.heading), math.sin(box.heading)
        for axis in (np.array([c, s]), np.array([-s, c])):
            pa = pc @ axis
            qa = qc @ axis
            # separated (or merely touching) along this axis -> no overlap
            if pa.max() <= qa.min() or qa.max() <= pa.min():
                return False
    return True
