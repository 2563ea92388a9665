import numpy as np
import pytest

from rieszlab.measure import (
    DiscreteMeasure,
    EmptySelectionError,
    ScaleGrid,
    ad_constants,
    ball_mass,
    ball_masses,
    density_profile,
    growth_constant,
    read_measure,
    restrict,
    support_diameter,
    total_mass,
    write_measure,
)


def point_mass(coords, w=1.0, n=1):
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    return DiscreteMeasure(coords, np.full(coords.shape[0], w), n, 1e-3)


def naive_ball_mass(mu, center, r):
    dist = np.linalg.norm(mu.points - np.asarray(center), axis=1)
    return float(mu.weights[dist <= r].sum())


# ---------------------------------------------------------------------- types


def test_measure_rejects_bad_inputs():
    with pytest.raises(ValueError):
        DiscreteMeasure(np.zeros((0, 2)), np.zeros(0), 1, 0.1)
    with pytest.raises(ValueError):
        DiscreteMeasure(np.zeros((2, 2)), np.array([1.0, 0.0]), 1, 0.1)
    with pytest.raises(ValueError):
        DiscreteMeasure(np.zeros((1, 2)), np.array([np.nan]), 1, 0.1)
    with pytest.raises(ValueError):
        DiscreteMeasure(np.zeros((1, 2)), np.array([1.0]), 2, 0.1)  # n >= d
    with pytest.raises(ValueError):  # resolution above the diameter
        DiscreteMeasure(np.array([[0.0, 0.0], [0.1, 0.0]]), np.ones(2), 1, 5.0)


def test_scale_grid_geometric():
    grid = ScaleGrid(0.01, 10.0, 50)
    radii = grid.radii()
    assert radii[0] == pytest.approx(0.01, rel=1e-15)
    assert radii[-1] == pytest.approx(10.0, rel=1e-15)
    ratios = radii[1:] / radii[:-1]
    assert np.allclose(ratios, ratios[0], rtol=1e-12)
    with pytest.raises(ValueError):
        ScaleGrid(1.0, 0.5, 10)
    with pytest.raises(ValueError):
        ScaleGrid(1.0, 2.0, 1)


# ----------------------------------------------------------------- total mass


def test_total_mass_examples(four_corners_3):
    assert total_mass(point_mass([[0.0, 0.0]])) == 1.0
    two = DiscreteMeasure([[0.0, 0.0], [1.0, 0.0]], [0.25, 0.75], 1, 0.5)
    assert total_mass(two) == pytest.approx(1.0, rel=1e-15)
    assert total_mass(four_corners_3) == pytest.approx(1.0, rel=1e-12)


# ------------------------------------------------------------------ ball mass


def test_ball_mass_point_cases():
    mu = point_mass([[0.0, 0.0]])
    assert ball_mass(mu, [0.0, 0.0], 1.0) == 1.0
    mu2 = point_mass([[2.0, 0.0]])
    assert ball_mass(mu2, [0.0, 0.0], 1.0) == 0.0


def test_ball_mass_segment_interval(segment_1024):
    h = segment_1024.resolution_h
    got = ball_mass(segment_1024, [0.5, 0.0], 0.25)
    assert abs(got - 0.5) <= 2 * h


def test_ball_mass_matches_naive_oracle(four_corners_3):
    rng = np.random.default_rng(3)
    for _ in range(25):
        center = rng.uniform(-0.2, 1.2, size=2)
        r = float(rng.uniform(0.01, 1.5))
        assert ball_mass(four_corners_3, center, r) == pytest.approx(
            naive_ball_mass(four_corners_3, center, r), rel=1e-12, abs=1e-15
        )


def test_ball_masses_grid_matches_single(four_corners_3):
    radii = np.geomspace(0.05, 1.0, 7)
    table = ball_masses(four_corners_3, four_corners_3.points[:10], radii)
    for i in range(10):
        for j, r in enumerate(radii):
            assert table[i, j] == pytest.approx(
                ball_mass(four_corners_3, four_corners_3.points[i], r), rel=1e-12, abs=1e-15
            )


def test_ball_mass_monotone_in_radius(four_corners_4):
    rng = np.random.default_rng(7)
    for _ in range(20):
        center = rng.uniform(0.0, 1.0, size=2)
        radii = np.sort(rng.uniform(0.01, 1.5, size=6))
        masses = [ball_mass(four_corners_4, center, r) for r in radii]
        assert all(a <= b + 1e-15 for a, b in zip(masses, masses[1:]))


# ------------------------------------------------------------ growth constant


def test_growth_constant_single_mass():
    mu = point_mass([[0.0, 0.0]])
    assert growth_constant(mu, ScaleGrid(1.0, 2.0, 9)) == pytest.approx(1.0, rel=1e-12)


def test_growth_constant_segment(segment_1024):
    h = segment_1024.resolution_h
    got = growth_constant(segment_1024, ScaleGrid(16 * h, 0.5, 12))
    assert got == pytest.approx(2.0, rel=0.10)


def test_growth_constant_four_corners_brute_force(four_corners_3):
    grid = ScaleGrid(4.0 ** (-2), 1.0, 10)
    got = growth_constant(four_corners_3, grid)
    best = 0.0
    for x in four_corners_3.points:
        for r in grid.radii():
            best = max(best, naive_ball_mass(four_corners_3, x, r) / r)
    assert got == pytest.approx(best, rel=1e-12)
    # the sup over the whole range [4^{-2}, 1] is ~1.021; a fine grid finds
    # the jump radii a 10-point grid misses
    dense = growth_constant(four_corners_3, ScaleGrid(4.0 ** (-2), 1.0, 512))
    assert 1.0 <= dense <= 4.0


def test_growth_constant_requires_resolved_grid(segment_1024):
    h = segment_1024.resolution_h
    with pytest.raises(ValueError):
        growth_constant(segment_1024, ScaleGrid(h / 10, 0.5, 8))


def test_growth_constant_restriction_monotone(four_corners_4):
    grid = ScaleGrid(4.0 ** (-3), 1.0, 8)
    rng = np.random.default_rng(5)
    full = growth_constant(four_corners_4, grid)
    for _ in range(5):
        keep = rng.random(len(four_corners_4)) < 0.6
        if not keep.any():
            continue
        sub = restrict(four_corners_4, keep)
        assert growth_constant(sub, grid) <= full + 1e-12


# ------------------------------------------------------------ density profile


def test_density_profile_single_mass():
    mu = point_mass([[0.0, 0.0]])
    prof = density_profile(mu, [0.0, 0.0], ScaleGrid(1.0, 2.0, 2))
    assert prof[0] == pytest.approx([1.0, 1.0])
    assert prof[1] == pytest.approx([2.0, 0.5])


def test_density_profile_segment_interior(segment_1024):
    h = segment_1024.resolution_h
    prof = density_profile(segment_1024, [0.5, 0.0], ScaleGrid(8 * h, 0.05, 10))
    assert np.all(np.abs(prof[:, 1] - 2.0) < 0.2)


def test_density_profile_outside_bbox_rejected(segment_1024):
    with pytest.raises(ValueError):
        density_profile(segment_1024, [50.0, 0.0], ScaleGrid(0.01, 0.1, 4))


def test_density_profile_sparse_cantor_decays():
    from conftest import sparse_cantor_depth

    mu = sparse_cantor_depth(6)
    diam = support_diameter(mu)
    grid = ScaleGrid(4 * mu.resolution_h, diam, 30)
    prof = density_profile(mu, mu.points[0], grid)
    finest, coarsest = prof[0, 1], prof[-1, 1]
    assert finest < 0.5 * coarsest


# --------------------------------------------------------------- ad constants


def test_ad_constants_segment(segment_1024):
    h = segment_1024.resolution_h
    c_lo, c_hi = ad_constants(segment_1024, ScaleGrid(16 * h, 0.25, 12))
    assert c_lo == pytest.approx(1.0, rel=0.15)  # endpoint balls are half covered
    assert c_hi == pytest.approx(2.0, rel=0.10)
    assert c_lo <= c_hi


def test_ad_constants_plane_patch(plane_23):
    h = plane_23.resolution_h
    c_lo, c_hi = ad_constants(plane_23, ScaleGrid(4 * h, 0.4, 10))
    assert np.pi / 4 <= c_lo <= c_hi <= 4 * np.pi


def test_ad_constants_single_point_shrinks_with_range():
    mu = point_mass([[0.0, 0.0]])
    lo2, _ = ad_constants(mu, ScaleGrid(1.0, 2.0, 8))
    lo4, _ = ad_constants(mu, ScaleGrid(1.0, 4.0, 8))
    assert lo2 > 0 and lo4 > 0
    assert lo2 / lo4 >= 1.0


def test_ad_constants_ordering_random(four_corners_4):
    c_lo, c_hi = ad_constants(four_corners_4, ScaleGrid(4.0 ** (-3), 1.0, 9))
    assert 0 <= c_lo <= c_hi


# ------------------------------------------------------------------- restrict


def test_restrict_identity(four_corners_3):
    same = restrict(four_corners_3, np.ones(len(four_corners_3), dtype=bool))
    assert np.array_equal(same.points, four_corners_3.points)
    assert np.array_equal(same.weights, four_corners_3.weights)


def test_restrict_empty_errors(four_corners_3):
    with pytest.raises(EmptySelectionError):
        restrict(four_corners_3, np.zeros(len(four_corners_3), dtype=bool))


def test_restrict_weight_threshold():
    mu = DiscreteMeasure([[0.0, 0.0], [1.0, 0.0]], [0.1, 0.9], 1, 0.5)
    kept = restrict(mu, mu.weights > 0.5)
    assert len(kept) == 1
    assert total_mass(kept) == pytest.approx(0.9)


def test_restrict_additivity(four_corners_4):
    rng = np.random.default_rng(11)
    mask = rng.random(len(four_corners_4)) < 0.5
    if not mask.any() or mask.all():
        mask[:3] = True
        mask[3:] = False
    a = total_mass(restrict(four_corners_4, mask))
    b = total_mass(restrict(four_corners_4, ~mask))
    assert a + b == pytest.approx(total_mass(four_corners_4), rel=1e-12)


def test_restrict_accepts_callable(four_corners_3):
    sub = restrict(four_corners_3, lambda i: i < 5)
    assert len(sub) == 5


# ----------------------------------------------------------- support diameter


def test_support_diameter_cases(segment_1024):
    assert support_diameter(point_mass([[3.0, 1.0]])) == 0.0
    two = DiscreteMeasure([[0.0, 0.0], [3.0, 4.0]], [1.0, 1.0], 1, 1.0)
    assert support_diameter(two) == pytest.approx(5.0, rel=1e-15)
    h = segment_1024.resolution_h
    assert abs(support_diameter(segment_1024) - 1.0) <= h


# -------------------------------------------------------------------- file io


def test_measure_file_roundtrip(tmp_path, lip_graph):
    path = tmp_path / "graph.measure"
    write_measure(lip_graph, path)
    back = read_measure(path)
    assert np.array_equal(back.points, lip_graph.points)
    assert np.array_equal(back.weights, lip_graph.weights)
    assert back.resolution_h == lip_graph.resolution_h
    assert back.hausdorff_dim == lip_graph.hausdorff_dim


def test_measure_file_tolerates_extra_comments(tmp_path, four_corners_3):
    path = tmp_path / "fc.measure"
    write_measure(four_corners_3, path, extra_comments=["origin=test", "note"])
    back = read_measure(path)
    assert np.array_equal(back.points, four_corners_3.points)


def test_measure_file_rejects_malformed(tmp_path):
    path = tmp_path / "bad.measure"
    path.write_text("not a header\n0 0 1\n")
    with pytest.raises(ValueError):
        read_measure(path)
