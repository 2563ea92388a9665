import numpy as np
import pytest

import rieszlab as rl
from rieszlab.analysis import (
    NonConvergenceError,
    adjoint_apply,
    curvature_c2,
    curvature_c2_naive,
    dense_operator_norm,
    joint_norm_experiment,
    menger_curvature,
    merge_measures,
    norm_sweep,
    operator_norm,
)
from rieszlab.kernels import TRUNCATED, KernelConfig, VectorField, riesz_apply
from rieszlab.measure import DiscreteMeasure


def wdot(values, other, weights):
    return float(np.sum(values * other * weights))


def field_dot(field_a, field_b, weights):
    return float(np.einsum("ij,ij->", field_a * weights[:, None], field_b))


# ------------------------------------------------------------- operator norm


def test_two_point_norm_hand_value():
    # two equal masses separated by 2 with eps = 1: the symmetrized matrix is
    # a single antisymmetric 2x2 block with entries +-w/2, hence norm w/2
    for w in (1.0, 0.3):
        mu = DiscreteMeasure([[0.0, 0.0], [2.0, 0.0]], [w, w], 1, 1.0)
        cfg = KernelConfig(1, 1.0, TRUNCATED)
        dense = dense_operator_norm(mu, cfg)
        assert dense.value == pytest.approx(w / 2.0, rel=1e-12)
        power = operator_norm(mu, cfg, tol=1e-10, max_iter=200)
        assert power.value == pytest.approx(w / 2.0, rel=1e-9)


def test_norm_linear_in_mass(four_corners_3):
    cfg = KernelConfig(1, 0.05, TRUNCATED)
    base = dense_operator_norm(four_corners_3, cfg).value
    scaled_mu = DiscreteMeasure(
        four_corners_3.points, 3.5 * four_corners_3.weights, 1, four_corners_3.resolution_h
    )
    scaled = dense_operator_norm(scaled_mu, cfg).value
    assert scaled == pytest.approx(3.5 * base, rel=1e-12)


def test_power_iteration_matches_dense(corpus):
    for name, mu in corpus.items():
        if len(mu) > 512:
            continue
        cfg = KernelConfig(mu.hausdorff_dim, 4 * mu.resolution_h, TRUNCATED)
        dense = dense_operator_norm(mu, cfg)
        power = operator_norm(mu, cfg, tol=1e-10, max_iter=4000)
        assert power.value == pytest.approx(dense.value, rel=1e-6), name


def test_norm_witness_is_certified_lower_bound(four_corners_3):
    cfg = KernelConfig(1, 0.05, TRUNCATED)
    est = operator_norm(four_corners_3, cfg, tol=1e-8, max_iter=1000)
    f = est.witness
    field = riesz_apply(four_corners_3, f, cfg, four_corners_3.points)
    num = np.sqrt(field_dot(field, field, four_corners_3.weights))
    den = np.sqrt(wdot(f, f, four_corners_3.weights))
    assert num / den <= est.value * (1 + 1e-12)
    assert est.value == pytest.approx(num / den, rel=1e-10)


def test_matrix_free_path_matches_dense(four_corners_3):
    # dense_cache_cap=0 forces the chunked matrix-free forward/adjoint pair
    cfg = KernelConfig(1, 0.05, TRUNCATED)
    dense = dense_operator_norm(four_corners_3, cfg).value
    power = operator_norm(four_corners_3, cfg, tol=1e-10, max_iter=2000, dense_cache_cap=0)
    assert power.value == pytest.approx(dense, rel=1e-8)


def test_norm_zero_operator():
    # both points inside the truncation radius: the transform vanishes
    mu = DiscreteMeasure([[0.0, 0.0], [0.5, 0.0]], [1.0, 1.0], 1, 0.25)
    est = operator_norm(mu, KernelConfig(1, 2.0, TRUNCATED), tol=1e-8)
    assert est.value == 0.0


def test_norm_requires_two_points():
    mu = DiscreteMeasure([[0.0, 0.0]], [1.0], 1, 1e-3)
    with pytest.raises(ValueError):
        operator_norm(mu, KernelConfig(1, 0.1, TRUNCATED))


def test_norm_nonconvergence_carries_estimate(four_corners_4):
    cfg = KernelConfig(1, 0.02, TRUNCATED)
    with pytest.raises(NonConvergenceError) as err:
        operator_norm(four_corners_4, cfg, tol=1e-12, max_iter=2)
    assert err.value.estimate.value > 0


def test_norm_rigid_motion_invariance(four_corners_3):
    cfg = KernelConfig(1, 0.05, TRUNCATED)
    base = dense_operator_norm(four_corners_3, cfg).value
    theta = 0.7343
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    moved = DiscreteMeasure(
        four_corners_3.points @ rot.T + np.array([3.0, -1.25]),
        four_corners_3.weights, 1, four_corners_3.resolution_h,
    )
    assert dense_operator_norm(moved, cfg).value == pytest.approx(base, rel=1e-9)


def test_norm_and_ballmass_scaling_law(four_corners_3):
    lam = 2.75
    n = four_corners_3.hausdorff_dim
    cfg = KernelConfig(n, 0.05, TRUNCATED)
    base = dense_operator_norm(four_corners_3, cfg).value
    scaled = DiscreteMeasure(
        lam * four_corners_3.points,
        lam**n * four_corners_3.weights,
        n,
        lam * four_corners_3.resolution_h,
    )
    got = dense_operator_norm(scaled, KernelConfig(n, lam * 0.05, TRUNCATED)).value
    assert got == pytest.approx(base, rel=1e-9)
    # ball-mass ratios are dilation invariant
    x = four_corners_3.points[7]
    r = 0.2
    ratio = rl.ball_mass(four_corners_3, x, r) / r**n
    ratio_scaled = rl.ball_mass(scaled, lam * x, lam * r) / (lam * r) ** n
    assert ratio_scaled == pytest.approx(ratio, rel=1e-12)


# -------------------------------------------------------------------- adjoint


def test_adjoint_identity_random(four_corners_3):
    mu = four_corners_3
    cfg = KernelConfig(1, 0.07, TRUNCATED)
    rng = np.random.default_rng(2)
    for _ in range(20):
        f = rng.standard_normal(len(mu))
        field = rng.standard_normal((len(mu), 2))
        lhs = field_dot(riesz_apply(mu, f, cfg, mu.points), field, mu.weights)
        rhs = wdot(f, adjoint_apply(mu, cfg, VectorField(field)), mu.weights)
        scale = np.linalg.norm(f) * np.linalg.norm(field)
        assert abs(lhs - rhs) <= 1e-10 * max(scale, 1.0)


def test_adjoint_two_point_matrix_transpose():
    mu = DiscreteMeasure([[0.0, 0.0], [2.0, 0.0]], [1.0, 1.0], 1, 1.0)
    cfg = KernelConfig(1, 1.0, TRUNCATED)
    forward = np.zeros((2, 2, 2))  # target, source, component
    for j in range(2):
        f = np.zeros(2)
        f[j] = 1.0
        forward[:, j, :] = riesz_apply(mu, f, cfg, mu.points)
    adj = np.zeros((2, 2, 2))  # target, source field index, component
    for i in range(2):
        for a in range(2):
            field = np.zeros((2, 2))
            field[i, a] = 1.0
            adj[:, i, a] = adjoint_apply(mu, cfg, VectorField(field))
    # <R e_j, E_{i,a}> = <e_j, R* E_{i,a}> with unit weights
    for i in range(2):
        for j in range(2):
            for a in range(2):
                assert forward[i, j, a] == pytest.approx(adj[j, i, a], abs=1e-14)


def test_adjoint_of_zero():
    mu = DiscreteMeasure([[0.0, 0.0], [1.0, 0.0]], [1.0, 1.0], 1, 0.5)
    out = adjoint_apply(mu, KernelConfig(1, 0.1, TRUNCATED), VectorField(np.zeros((2, 2))))
    assert np.allclose(out, 0.0)


# ------------------------------------------------------------------ curvature


def test_menger_collinear_zero():
    assert menger_curvature([0, 0], [1, 0], [2, 0]) == 0.0


def test_menger_right_triangle():
    assert menger_curvature([0, 0], [1, 0], [0, 1]) == pytest.approx(np.sqrt(2.0), rel=1e-12)


def test_menger_equilateral():
    pts = [[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]]
    assert menger_curvature(*pts) == pytest.approx(np.sqrt(3.0), rel=1e-12)


def test_menger_repeated_point_errors():
    with pytest.raises(ValueError):
        menger_curvature([0, 0], [0, 0], [1, 1])


def test_c2_collinear_zero(segment_1024):
    sub = rl.restrict(segment_1024, np.arange(0, 1024, 64))
    est = curvature_c2(sub, mode="exact")
    assert est.value == 0.0


def test_c2_equilateral_is_18():
    pts = np.array([[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]])
    mu = DiscreteMeasure(pts, np.ones(3), 1, 0.5)
    est = curvature_c2(mu, mode="exact")
    assert est.value == pytest.approx(18.0, rel=1e-12)
    assert est.triples_evaluated == 6


def test_c2_too_few_points_flagged():
    mu = DiscreteMeasure([[0, 0], [1, 1]], np.ones(2), 1, 0.5)
    est = curvature_c2(mu, mode="exact")
    assert est.value == 0.0
    assert est.insufficient_points


def test_c2_exact_matches_naive_oracle():
    rng = np.random.default_rng(13)
    pts = rng.standard_normal((48, 2))
    w = rng.uniform(0.5, 2.0, 48)
    mu = DiscreteMeasure(pts, w, 1, 1e-3)
    est = curvature_c2(mu, mode="exact")
    assert est.value == pytest.approx(curvature_c2_naive(mu), rel=1e-12)


def test_c2_permutation_invariance():
    rng = np.random.default_rng(17)
    pts = rng.standard_normal((30, 2))
    w = rng.uniform(0.5, 2.0, 30)
    mu = DiscreteMeasure(pts, w, 1, 1e-3)
    perm = rng.permutation(30)
    mu_p = DiscreteMeasure(pts[perm], w[perm], 1, 1e-3)
    a = curvature_c2(mu, mode="exact").value
    b = curvature_c2(mu_p, mode="exact").value
    assert a == pytest.approx(b, rel=1e-12)


def test_c2_rigid_motion_and_scaling(four_corners_3):
    sub = rl.restrict(four_corners_3, np.arange(0, 64, 2))
    base = curvature_c2(sub, mode="exact").value
    theta = 1.234
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    moved = DiscreteMeasure(sub.points @ rot.T + 5.0, sub.weights, 1, sub.resolution_h)
    assert curvature_c2(moved, mode="exact").value == pytest.approx(base, rel=1e-9)
    lam, n = 3.0, 1
    scaled = DiscreteMeasure(lam * sub.points, lam**n * sub.weights, 1, lam * sub.resolution_h)
    expect = lam ** (3 * n - 2) * base
    assert curvature_c2(scaled, mode="exact").value == pytest.approx(expect, rel=1e-9)


def test_c2_sampled_within_stderr(four_corners_3):
    exact = curvature_c2(four_corners_3, mode="exact")
    sampled = curvature_c2(four_corners_3, mode="sampled", sample_count=200_000, seed=5)
    stderr = sampled.rel_stderr * sampled.value
    assert abs(sampled.value - exact.value) <= 3.0 * stderr


def test_c2_exact_cap_enforced():
    rng = np.random.default_rng(23)
    pts = rng.standard_normal((40, 2))
    mu = DiscreteMeasure(pts, np.ones(40), 1, 1e-3)
    with pytest.raises(ValueError):
        curvature_c2(mu, mode="exact", exact_cap=10)


# -------------------------------------------------------------------- sweeps


def test_norm_sweep_single_matches_operator_norm(four_corners_3):
    eps = 4 * four_corners_3.resolution_h
    table = norm_sweep(four_corners_3, [eps], tol=1e-8)
    direct = operator_norm(four_corners_3, KernelConfig(1, eps, TRUNCATED), tol=1e-8)
    assert table[0][0] == eps
    assert table[0][1].value == pytest.approx(direct.value, rel=1e-12)


def test_norm_sweep_rejects_sub_resolution(four_corners_3):
    with pytest.raises(ValueError):
        norm_sweep(four_corners_3, [four_corners_3.resolution_h / 8])


def test_norm_sweep_segment_stability():
    # the spread shrinks with resolution: ~6% at N=1024, ~3% at N=2048
    mu = rl.gen_segment(1024)
    h = mu.resolution_h
    table = norm_sweep(mu, [4 * h, 8 * h, 16 * h], tol=1e-7)
    values = [est.value for _, est in table]
    assert max(values) / min(values) <= 1.10


# ----------------------------------------------------------- joint experiment


def test_joint_identical_measures_doubles(four_corners_3):
    cfg = KernelConfig(1, 0.05, TRUNCATED)
    res = joint_norm_experiment(four_corners_3, four_corners_3, cfg, tol=1e-10, max_iter=2000)
    assert len(res.merged) == len(four_corners_3)  # coincident points merged
    assert res.norm_sum.value == pytest.approx(2.0 * res.norm_first.value, rel=1e-9)


def test_joint_single_points():
    a = DiscreteMeasure([[0.0, 0.0]], [1.0], 1, 1e-3)
    b = DiscreteMeasure([[2.0, 0.0]], [1.0], 1, 1e-3)
    cfg = KernelConfig(1, 1.0, TRUNCATED)
    res = joint_norm_experiment(a, b, cfg)
    assert res.norm_first.value == 0.0
    assert res.norm_second.value == 0.0
    assert res.norm_sum.value == pytest.approx(0.5, rel=1e-9)  # two-point value


def test_joint_far_translate_close_to_max():
    # two identical far blocks make the top singular pair nearly degenerate;
    # the value is pinched between the pair, so a loose tolerance suffices
    mu = rl.gen_segment(256)
    cfg = KernelConfig(1, 4 * mu.resolution_h, TRUNCATED)
    for sep in (10.0, 100.0):
        shifted = DiscreteMeasure(
            mu.points + np.array([sep * 1.0, 0.0]), mu.weights, 1, mu.resolution_h
        )
        res = joint_norm_experiment(mu, shifted, cfg, tol=1e-4, max_iter=3000)
        top = max(res.norm_first.value, res.norm_second.value)
        assert abs(res.norm_sum.value - top) <= 0.15 * top


def test_merge_requires_matching_dims():
    a = DiscreteMeasure([[0.0, 0.0]], [1.0], 1, 1e-3)
    b = DiscreteMeasure([[0.0, 0.0, 0.0]], [1.0], 1, 1e-3)
    with pytest.raises(ValueError):
        merge_measures(a, b)
