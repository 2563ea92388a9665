"""Spectral and geometric functionals: L2 operator norms and Menger curvature.

The transform maps scalar densities f on the support to d-vector fields; its
operator norm on L2(mu) is the largest singular value under the weighted
inner products <f, g> = sum f g w (scalars) and <F, G> = sum (F . G) w
(fields, Euclidean per point).  Substituting u = sqrt(w) f turns the weighted
problem into a plain Euclidean one for the symmetrized matrix

    B[(i, a), j] = sqrt(w_i) K_a(x_i - x_j) sqrt(w_j),

so the norm is the top singular value of B.  Power iteration runs on B^T B;
a dense decomposition of B serves as the oracle for moderate N.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from rieszlab.measure import DiscreteMeasure, _safe_resolution
from rieszlab.kernels import TRUNCATED, KernelConfig, _kernel_block, kernel_sum


class NonConvergenceError(RuntimeError):
    """Power iteration ran out of iterations; carries the last estimate."""

    def __init__(self, message: str, estimate: "NormEstimate"):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class NormEstimate:
    """Operator-norm estimate together with the run that produced it.

    `witness` is the final scalar iterate f: the value equals |Rf| / |f| in
    the weighted norms, so every estimate is a certified lower bound for the
    true operator norm.
    """

    value: float
    iterations: int
    residual: float
    epsilon: float
    method: str
    witness: np.ndarray | None = None


@dataclass(frozen=True)
class CurvatureEstimate:
    """Triple-integral curvature c2 of a measure."""

    value: float
    triples_evaluated: int
    mode: str
    rel_stderr: float = 0.0
    insufficient_points: bool = False


# ---------------------------------------------------------------------------
# operator application in symmetrized coordinates
# ---------------------------------------------------------------------------


def _build_symmetrized_matrix(mu: DiscreteMeasure, cfg: KernelConfig, chunk: int = 256) -> np.ndarray:
    """Dense ((N * d), N) matrix B in u = sqrt(w) f coordinates."""
    n_pts, d = len(mu), mu.ambient_dim
    sw = np.sqrt(mu.weights)
    out = np.empty((n_pts * d, n_pts))
    for i0 in range(0, n_pts, chunk):
        tblk = mu.points[i0 : i0 + chunk]
        ker = _kernel_block(tblk, mu.points, cfg)  # (t, s, d)
        blk = ker * sw[i0 : i0 + tblk.shape[0], None, None] * sw[None, :, None]
        # row layout: component a of target i lives at row i*d + a
        out[i0 * d : (i0 + tblk.shape[0]) * d] = blk.transpose(0, 2, 1).reshape(
            tblk.shape[0] * d, n_pts
        )
    return out


def _make_applies(mu: DiscreteMeasure, cfg: KernelConfig, dense_cache_cap: int):
    """Forward/adjoint matvecs for B, dense-cached when affordable."""
    n_pts, d = len(mu), mu.ambient_dim
    sw = np.sqrt(mu.weights)
    if n_pts * n_pts * d <= dense_cache_cap:
        mat = _build_symmetrized_matrix(mu, cfg)
        return (lambda u: mat @ u), (lambda v: mat.T @ v)

    def forward(u: np.ndarray) -> np.ndarray:
        field = kernel_sum(mu.points, sw * u, cfg, mu.points)
        return (field * sw[:, None]).ravel()

    def adjoint(v: np.ndarray) -> np.ndarray:
        # (B^T v)_j = sqrt(w_j) sum_i K(x_i - x_j) . (sqrt(w_i) V_i)
        field = v.reshape(n_pts, d) * sw[:, None]
        out = np.zeros(n_pts)
        chunk = 128
        for t0 in range(0, n_pts, chunk):
            tblk = mu.points[t0 : t0 + chunk]
            acc = np.zeros(tblk.shape[0])
            for s0 in range(0, n_pts, 16384):
                sblk = mu.points[s0 : s0 + 16384]
                ker = _kernel_block(sblk, tblk, cfg)  # K(x_i - x_j), i source row
                acc += np.einsum("itd,id->t", ker, field[s0 : s0 + sblk.shape[0]])
            out[t0 : t0 + tblk.shape[0]] = acc
        return out * sw

    return forward, adjoint


def _power_iteration(forward, adjoint, u0: np.ndarray, tol: float, max_iter: int):
    """Top singular value of B via iteration on B^T B.

    Converged when the relative change of the estimate drops below tol on two
    consecutive iterations (a single small step can be pseudo-convergence).
    Returns (sigma, iterations, residual, final unit iterate u, converged).
    """
    nrm = float(np.linalg.norm(u0))
    if nrm == 0.0:
        raise ValueError("zero start vector")
    u = u0 / nrm
    sigma_prev = -1.0
    sigma = 0.0
    rel = np.inf
    hits = 0
    for it in range(1, max_iter + 1):
        v = forward(u)
        sigma = float(np.linalg.norm(v))
        rel = abs(sigma - sigma_prev) / max(sigma, 1e-300)
        if rel < tol:
            hits += 1
            if hits >= 2 or sigma == 0.0:
                return sigma, it, rel, u, True
        else:
            hits = 0
        sigma_prev = sigma
        w = adjoint(v)
        wn = float(np.linalg.norm(w))
        if wn == 0.0:
            return sigma, it, 0.0, u, True  # operator annihilates the iterate
        u = w / wn
    return sigma, max_iter, rel, u, False


def operator_norm(
    mu: DiscreteMeasure,
    cfg: KernelConfig,
    tol: float = 1e-6,
    max_iter: int = 500,
    second_start_seed: int = 20240817,
    dense_cache_cap: int = 60_000_000,
) -> NormEstimate:
    """Largest singular value of the transform on L2(mu) by power iteration.

    Runs twice, from the deterministic all-ones density and from a fixed-seed
    random start (guards against a start orthogonal to the top singular
    space), and reports the larger estimate.  Raises NonConvergenceError with
    the best estimate attached if either run fails to settle.
    """
    if len(mu) < 2:
        raise ValueError("operator_norm needs at least two support points")
    if not 0.0 < tol < 0.1:
        raise ValueError("tol must lie in (0, 0.1)")
    sw = np.sqrt(mu.weights)
    forward, adjoint = _make_applies(mu, cfg, dense_cache_cap)

    starts = [sw * np.ones(len(mu))]
    rng = np.random.default_rng(second_start_seed)
    starts.append(rng.standard_normal(len(mu)))

    best: tuple[float, int, float, np.ndarray] | None = None
    total_iters = 0
    for u0 in starts:
        sigma, iters, rel, u, ok = _power_iteration(forward, adjoint, u0, tol, max_iter)
        total_iters += iters
        if best is None or sigma > best[0]:
            best = (sigma, iters, rel, u)
        if not ok:
            est = NormEstimate(
                best[0], total_iters, best[2], cfg.epsilon, "power-iteration",
                witness=best[3] / sw,
            )
            raise NonConvergenceError(
                f"power iteration did not converge in {max_iter} iterations", est
            )
    sigma, _, rel, u = best
    return NormEstimate(sigma, total_iters, rel, cfg.epsilon, "power-iteration", witness=u / sw)


def dense_operator_norm(mu: DiscreteMeasure, cfg: KernelConfig) -> NormEstimate:
    """Oracle: largest singular value by dense decomposition of B."""
    if len(mu) < 2:
        raise ValueError("dense_operator_norm needs at least two support points")
    mat = _build_symmetrized_matrix(mu, cfg)
    svals = np.linalg.svd(mat, compute_uv=False)
    _, _, vt = np.linalg.svd(mat, full_matrices=False)
    witness = vt[0] / np.sqrt(mu.weights)
    return NormEstimate(float(svals[0]), 1, 0.0, cfg.epsilon, "dense-decomposition", witness)


def adjoint_apply(mu: DiscreteMeasure, cfg: KernelConfig, field, targets=None) -> np.ndarray:
    """Adjoint of the transform under the weighted inner products.

    (R* F)(x_j) = sum_i K(x_i - x_j) . F(x_i) w(x_i); satisfies the bilinear
    identity <R f, F>_mu = <f, R* F>_mu.
    """
    vals = np.asarray(field.values if hasattr(field, "values") else field, dtype=float)
    if vals.shape != (len(mu), mu.ambient_dim):
        raise ValueError("field must align with the measure's points")
    pts = np.atleast_2d(mu.points if targets is None else np.asarray(targets, dtype=float))
    fw = vals * mu.weights[:, None]
    out = np.zeros(pts.shape[0])
    for t0 in range(0, pts.shape[0], 128):
        tblk = pts[t0 : t0 + 128]
        acc = np.zeros(tblk.shape[0])
        for s0 in range(0, len(mu), 16384):
            sblk = mu.points[s0 : s0 + 16384]
            ker = _kernel_block(sblk, tblk, cfg)  # (source, target, d) = K(x_i - x_j)
            acc += np.einsum("std,sd->t", ker, fw[s0 : s0 + sblk.shape[0]])
        out[t0 : t0 + tblk.shape[0]] = acc
    return out


# ---------------------------------------------------------------------------
# Menger curvature
# ---------------------------------------------------------------------------


def menger_curvature(x, y, z) -> float:
    """Inverse circumradius 1/R of the triangle (x, y, z).

    Computed as 4 Area / (|x-y| |y-z| |z-x|); collinear triples return 0,
    repeated points raise ValueError (the circle through them is undefined).
    """
    x, y, z = (np.asarray(p, dtype=float) for p in (x, y, z))
    u, v, w = y - x, z - x, z - y
    uu, vv, ww = float(u @ u), float(v @ v), float(w @ w)
    if uu == 0.0 or vv == 0.0 or ww == 0.0:
        raise ValueError("degenerate triple: repeated points have no circumradius")
    gram = uu * vv - float(u @ v) ** 2
    area = 0.5 * np.sqrt(max(gram, 0.0))
    return float(4.0 * area / np.sqrt(uu * vv * ww))


def _pairwise_sq_dists(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _curvature_sq_from_sides(a2, b2, c2) -> np.ndarray:
    """(1/R)^2 from squared side lengths; 0 where a side vanishes."""
    num = 2.0 * (a2 * b2 + b2 * c2 + c2 * a2) - a2**2 - b2**2 - c2**2
    den = a2 * b2 * c2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0.0, np.maximum(num, 0.0) / np.where(den > 0.0, den, 1.0), 0.0)
    return out


def curvature_c2(
    mu: DiscreteMeasure,
    mode: str = "exact",
    sample_count: int = 200_000,
    seed: int = 0,
    exact_cap: int = 2000,
) -> CurvatureEstimate:
    """Triple sum of (1/R)^2 w_i w_j w_k over ordered distinct triples.

    Exact mode exploits the permutation symmetry: it sums over unordered
    triples i < j < k via a squared-distance matrix and multiplies by 6.
    Triples with repeated coordinates are excluded rather than counted as
    zero.  Sampled mode is an unbiased Monte Carlo estimate over ordered
    distinct index triples with a reported relative standard error.
    """
    n_pts = len(mu)
    if n_pts < 3:
        return CurvatureEstimate(0.0, 0, mode, insufficient_points=True)
    w = mu.weights
    if mode == "exact":
        if n_pts > exact_cap:
            raise ValueError(f"exact mode is O(N^3); N={n_pts} exceeds cap {exact_cap}")
        d2 = _pairwise_sq_dists(mu.points)
        total = 0.0
        # for each i, vectorize over pairs j < k with j, k != i; this visits
        # every unordered triple 3 times, so the ordered sum is 2 * total
        for i in range(n_pts):
            a2 = d2[i][:, None]  # |x_i - x_j|^2
            b2 = d2[i][None, :]  # |x_i - x_k|^2
            c2 = d2  # |x_j - x_k|^2
            kappa2 = _curvature_sq_from_sides(a2, b2, c2)
            kappa2 = np.triu(kappa2, k=1)
            kappa2[i, :] = 0.0
            kappa2[:, i] = 0.0
            total += w[i] * float(np.einsum("jk,j,k->", kappa2, w, w))
        n_ordered = n_pts * (n_pts - 1) * (n_pts - 2)
        return CurvatureEstimate(2.0 * total, n_ordered, "exact")
    if mode == "sampled":
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, n_pts, size=(int(sample_count * 1.2) + 16, 3))
        distinct = (idx[:, 0] != idx[:, 1]) & (idx[:, 1] != idx[:, 2]) & (idx[:, 0] != idx[:, 2])
        idx = idx[distinct][:sample_count]
        while idx.shape[0] < sample_count:  # top up after rejection
            extra = rng.integers(0, n_pts, size=(sample_count, 3))
            ok = (extra[:, 0] != extra[:, 1]) & (extra[:, 1] != extra[:, 2]) & (extra[:, 0] != extra[:, 2])
            idx = np.vstack([idx, extra[ok]])[:sample_count]
        p = mu.points
        pi, pj, pk = p[idx[:, 0]], p[idx[:, 1]], p[idx[:, 2]]
        a2 = np.einsum("ij,ij->i", pi - pj, pi - pj)
        b2 = np.einsum("ij,ij->i", pi - pk, pi - pk)
        c2 = np.einsum("ij,ij->i", pj - pk, pj - pk)
        kappa2 = _curvature_sq_from_sides(a2, b2, c2)
        vals = kappa2 * w[idx[:, 0]] * w[idx[:, 1]] * w[idx[:, 2]]
        n_ordered = n_pts * (n_pts - 1) * (n_pts - 2)
        value = n_ordered * float(vals.mean())
        stderr = n_ordered * float(vals.std(ddof=1)) / np.sqrt(vals.size)
        rel = stderr / value if value > 0.0 else 0.0
        return CurvatureEstimate(value, int(vals.size), "sampled", rel_stderr=rel)
    raise ValueError(f"unknown curvature mode {mode!r}")


def curvature_c2_naive(mu: DiscreteMeasure) -> float:
    """Brute-force oracle: loop over all ordered distinct triples."""
    n_pts = len(mu)
    total = 0.0
    for i, j, k in permutations(range(n_pts), 3):
        try:
            kappa = menger_curvature(mu.points[i], mu.points[j], mu.points[k])
        except ValueError:
            continue  # repeated coordinates are excluded
        total += kappa**2 * mu.weights[i] * mu.weights[j] * mu.weights[k]
    return total


# ---------------------------------------------------------------------------
# sweeps and the two-measure experiment
# ---------------------------------------------------------------------------


def norm_sweep(
    mu: DiscreteMeasure,
    epsilons,
    tol: float = 1e-6,
    mode: str = TRUNCATED,
    max_iter: int = 500,
) -> list[tuple[float, NormEstimate]]:
    """One operator-norm estimate per truncation radius, deterministically."""
    out = []
    for eps in epsilons:
        if eps < mu.resolution_h:
            raise ValueError(f"epsilon {eps} is below the resolution {mu.resolution_h}")
        cfg = KernelConfig(mu.hausdorff_dim, float(eps), mode)
        out.append((float(eps), operator_norm(mu, cfg, tol=tol, max_iter=max_iter)))
    return out


@dataclass(frozen=True)
class JointNormResult:
    norm_first: NormEstimate
    norm_second: NormEstimate
    norm_sum: NormEstimate
    merged: DiscreteMeasure


def merge_measures(mu: DiscreteMeasure, sigma: DiscreteMeasure) -> DiscreteMeasure:
    """Union measure: concatenated supports, coincident points merged by weight."""
    if mu.ambient_dim != sigma.ambient_dim or mu.hausdorff_dim != sigma.hausdorff_dim:
        raise ValueError("measures must share (n, d) to be merged")
    pts = np.vstack([mu.points, sigma.points])
    w = np.concatenate([mu.weights, sigma.weights])
    uniq, inverse = np.unique(pts, axis=0, return_inverse=True)
    wm = np.zeros(uniq.shape[0])
    np.add.at(wm, inverse, w)
    h = min(mu.resolution_h, sigma.resolution_h)
    return DiscreteMeasure(uniq, wm, mu.hausdorff_dim, _safe_resolution(uniq, h))


def _norm_or_zero(mu: DiscreteMeasure, cfg: KernelConfig, tol: float, max_iter: int) -> NormEstimate:
    # single-point measures carry no pairwise interaction: the transform is 0
    if len(mu) < 2:
        return NormEstimate(0.0, 0, 0.0, cfg.epsilon, "power-iteration")
    return operator_norm(mu, cfg, tol=tol, max_iter=max_iter)


def joint_norm_experiment(
    mu: DiscreteMeasure,
    sigma: DiscreteMeasure,
    cfg: KernelConfig,
    tol: float = 1e-6,
    max_iter: int = 500,
) -> JointNormResult:
    """Norms of the transform on mu, sigma, and their union measure."""
    merged = merge_measures(mu, sigma)
    return JointNormResult(
        _norm_or_zero(mu, cfg, tol, max_iter),
        _norm_or_zero(sigma, cfg, tol, max_iter),
        _norm_or_zero(merged, cfg, tol, max_iter),
        merged,
    )


def kernel_for(mu: DiscreteMeasure, epsilon: float | None = None, mode: str = TRUNCATED) -> KernelConfig:
    """KernelConfig matched to a measure: n from the measure, eps default 4h."""
    eps = 4.0 * mu.resolution_h if epsilon is None else float(epsilon)
    return KernelConfig(mu.hausdorff_dim, eps, mode)
