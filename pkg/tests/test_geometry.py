import math

import numpy as np
import pytest

from highway_planner.geometry import (
    GeometryModel,
    Obb,
    approx_half_width,
    exact_half_width,
    fit_linear_params,
    footprint_bounds,
    max_approx_error,
    obb_corners,
    obb_intersect,
    segment_offsets,
)

PHI60 = math.pi / 3.0


def test_exact_half_width_basics():
    assert exact_half_width(0.0, 1.8) == pytest.approx(0.9)
    # at the slope limit the projection doubles: sqrt(1 + tan^2(60deg)) = 2
    assert exact_half_width(math.tan(PHI60), 1.8) == pytest.approx(1.8)
    arr = exact_half_width(np.array([0.0, 1.0]), 2.0)
    assert arr == pytest.approx([1.0, math.sqrt(2.0)])


def test_fit_linear_params_frozen_values():
    a, b = fit_linear_params(1.8, PHI60)
    assert b == 0.9
    assert a == pytest.approx(0.5196152422706631, abs=1e-12)
    a2, b2 = fit_linear_params(2.0, PHI60)
    assert b2 == 1.0
    assert a2 == pytest.approx(1.0 / math.sqrt(3.0), abs=1e-12)


def test_fit_linear_params_rejects_bad_inputs():
    with pytest.raises(ValueError):
        fit_linear_params(0.0, PHI60)
    with pytest.raises(ValueError):
        fit_linear_params(1.8, 0.0)
    with pytest.raises(ValueError):
        fit_linear_params(1.8, math.pi / 2.0)


def test_linear_model_over_approximates():
    """a|l'| + b >= exact half-width everywhere in the fitted slope range."""
    model = GeometryModel.from_dims(1.8, 4.8)
    rng = np.random.default_rng(7)
    lp = rng.uniform(-math.tan(PHI60), math.tan(PHI60), 20_000)
    f2 = approx_half_width(lp, model)
    f1 = exact_half_width(lp, model.width)
    assert np.all(f2 >= f1 - 1e-12)
    # endpoints are exact by construction
    assert approx_half_width(math.tan(PHI60), model) == pytest.approx(1.8, abs=1e-12)
    assert approx_half_width(0.0, model) == pytest.approx(0.9)


def test_approx_clamps_out_of_range_slope():
    model = GeometryModel.from_dims(1.8, 4.8)
    with pytest.warns(UserWarning):
        v = approx_half_width(5.0, model)
    assert v == pytest.approx(approx_half_width(math.tan(PHI60), model))


def test_max_approx_error_frozen_location():
    model = GeometryModel.from_dims(1.8, 4.8)
    err, at = max_approx_error(model)
    assert err == pytest.approx(0.1651529, abs=1e-6)
    assert at == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-6)
    # the gap is stationary there: a == d f1/d l'
    slope_exact = model.width * 0.5 * at / math.sqrt(1.0 + at * at)
    assert slope_exact == pytest.approx(model.a, abs=1e-7)


def test_max_approx_error_matches_dense_scan():
    model = GeometryModel.from_dims(2.4, 5.0, phi_max=0.9)
    err, at = max_approx_error(model, samples=5000)
    xs = np.linspace(0.0, math.tan(0.9), 400_001)
    gap = model.a * xs + model.b - exact_half_width(xs, model.width)
    assert err == pytest.approx(float(gap.max()), abs=1e-9)
    assert at == pytest.approx(float(xs[np.argmax(gap)]), abs=1e-4)


def test_segment_offsets():
    assert segment_offsets(6).tolist() == [-2.5, -1.5, -0.5, 0.5, 1.5, 2.5]
    assert segment_offsets(1).tolist() == [0.0]
    assert segment_offsets(2).tolist() == [-0.5, 0.5]
    with pytest.raises(ValueError):
        segment_offsets(0)


def test_footprint_bounds_hand_case():
    # anchor l=0.3, slope 0.5, cell 6 m, lam=6 -> seg_len 1, drift = offsets*0.5
    model = GeometryModel.from_dims(1.8, 4.8, lam=6)
    ub, lb = footprint_bounds(0.3, 0.5, 6.0, model)
    eps = model.a * 0.5 + 0.9
    drift = segment_offsets(6) * 0.5
    assert ub == pytest.approx(0.3 + eps + drift)
    assert lb == pytest.approx(0.3 - eps + drift)
    assert ub.max() == pytest.approx(2.7098076211353316, abs=1e-12)
    assert lb.min() == pytest.approx(-2.1098076211353316, abs=1e-12)


def test_footprint_bounds_zero_slope_symmetric():
    model = GeometryModel.from_dims(1.8, 4.8, lam=6)
    ub, lb = footprint_bounds(-1.2, 0.0, 12.0, model)
    assert np.allclose(ub, -1.2 + 0.9)
    assert np.allclose(lb, -1.2 - 0.9)
    with pytest.raises(ValueError):
        footprint_bounds(0.0, 0.0, 0.0, model)


def test_geometry_model_validation():
    with pytest.raises(ValueError):
        GeometryModel(width=1.8, length=4.8, a=0.5, b=0.8)  # b != width/2
    with pytest.raises(ValueError):
        GeometryModel(width=1.8, length=4.8, a=-0.1, b=0.9)
    with pytest.raises(ValueError):
        GeometryModel.from_dims(1.8, 4.8, lam=0)
    m = GeometryModel.from_dims(1.8, 4.8)
    assert (m.a, m.b) == fit_linear_params(1.8, PHI60)


def test_obb_corners_axis_aligned():
    box = Obb(center_s=10.0, center_l=-2.0, heading=0.0, half_length=2.4, half_width=0.9)
    c = obb_corners(box)
    assert c.shape == (4, 2)
    assert sorted(map(tuple, c.tolist())) == sorted([
        (12.4, -1.1), (7.6, -1.1), (7.6, -2.9), (12.4, -2.9)])


def test_obb_intersect_overlap_and_separation():
    a = Obb(0.0, 0.0, 0.0, 1.0, 1.0)
    assert obb_intersect(a, Obb(1.9, 0.0, 0.0, 1.0, 1.0))
    assert not obb_intersect(a, Obb(2.1, 0.0, 0.0, 1.0, 1.0))
    assert obb_intersect(a, a)


def test_obb_touching_is_not_overlap():
    a = Obb(0.0, 0.0, 0.0, 1.0, 1.0)
    b = Obb(2.0, 0.0, 0.0, 1.0, 1.0)  # shares the x=1 edge exactly
    assert not obb_intersect(a, b)
    assert not obb_intersect(b, a)


def test_obb_intersect_needs_both_axis_sets():
    # axis-aligned bounding boxes overlap, but the rotated box's own axis separates
    a = Obb(0.0, 0.0, 0.0, 1.0, 1.0)
    b = Obb(2.2, 2.2, math.pi / 4.0, 1.0, 1.0)
    assert not obb_intersect(a, b)
    assert not obb_intersect(b, a)
    # nudged inward along the diagonal it actually overlaps
    c = Obb(1.3, 1.3, math.pi / 4.0, 1.0, 1.0)
    assert obb_intersect(a, c)


def test_obb_rotated_symmetry():
    rng = np.random.default_rng(11)
    for _ in range(200):
        p = Obb(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-math.pi, math.pi),
                rng.uniform(0.3, 2.5), rng.uniform(0.3, 1.5))
        q = Obb(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-math.pi, math.pi),
                rng.uniform(0.3, 2.5), rng.uniform(0.3, 1.5))
        assert obb_intersect(p, q) == obb_intersect(q, p)
