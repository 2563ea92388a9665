"""Vector Riesz-type kernels and their discrete transforms.

Two kernel modes share the homogeneity parameter n:

    truncated:    K(x) = x / |x|**(n+1)   if |x| > eps, else 0
    regularized:  K(x) = x / max(|x|, eps)**(n+1)

The truncation is strict (|x| = eps is excluded), the regularized kernel is
continuous with K(0) = 0.  A target coinciding with a source point therefore
contributes no self-term in either mode, which removes the principal-value
singularity from the discrete sums.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from rieszlab.measure import DiscreteMeasure, ScaleGrid, ball_masses

TRUNCATED = "truncated"
REGULARIZED = "regularized"


@dataclass(frozen=True)
class KernelConfig:
    """Kernel homogeneity n, truncation radius eps, and mode."""

    n: int
    epsilon: float
    mode: str = TRUNCATED

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError("kernel homogeneity n must be >= 1")
        if not (self.epsilon > 0.0 and np.isfinite(self.epsilon)):
            raise ValueError("epsilon must be positive and finite")
        if self.mode not in (TRUNCATED, REGULARIZED):
            raise ValueError(f"unknown kernel mode {self.mode!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "epsilon", float(self.epsilon))

    def with_epsilon(self, epsilon: float) -> "KernelConfig":
        return KernelConfig(self.n, epsilon, self.mode)


@dataclass(frozen=True)
class VectorField:
    """d-vector values attached index-for-index to a measure's points."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=float))
        if vals.ndim != 2:
            raise ValueError("values must be a (N, d) array")
        if not np.all(np.isfinite(vals)):
            raise ValueError("vector field entries must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.shape[0]

    def magnitudes(self) -> np.ndarray:
        return np.sqrt(np.einsum("ij,ij->i", self.values, self.values))


def _inv_power(r2: np.ndarray, n: int) -> np.ndarray:
    """|x|^{-(n+1)} from squared radii; integer-power fast paths."""
    if n == 1:
        return 1.0 / r2
    if n == 2:
        return 1.0 / (r2 * np.sqrt(r2))
    if n == 3:
        return 1.0 / (r2 * r2)
    return r2 ** (-0.5 * (n + 1))


def _coef_from_r2(r2: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    """1 / |x|^{n+1} from squared radii, with the mode's eps handling.

    Comparisons run in squared distances (r2 vs eps**2), matching the
    treecode leaf arithmetic bit for bit on the truncation boundary.
    """
    eps2 = cfg.epsilon * cfg.epsilon
    if cfg.mode == TRUNCATED:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(r2 > eps2, _inv_power(r2, cfg.n), 0.0)
    return _inv_power(np.maximum(r2, eps2), cfg.n)


def kernel_eval(x, cfg: KernelConfig) -> np.ndarray:
    """Evaluate the kernel at displacement(s) x, shape (..., d)."""
    x = np.asarray(x, dtype=float)
    r2 = np.einsum("...i,...i->...", x, x)
    return x * _coef_from_r2(r2, cfg)[..., None]


def _kernel_block(targets: np.ndarray, sources: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    """(T, S, d) kernel tensor K(t - s); zero rows handle self-terms."""
    diff = targets[:, None, :] - sources[None, :, :]
    r2 = np.einsum("tsd,tsd->ts", diff, diff)
    return diff * _coef_from_r2(r2, cfg)[:, :, None]


def kernel_sum(
    points: np.ndarray,
    fweights: np.ndarray,
    cfg: KernelConfig,
    targets: np.ndarray,
    target_chunk: int = 128,
    source_chunk: int = 16384,
) -> np.ndarray:
    """Sum_j K(t - y_j) * fweights_j at each target t.

    Low-level engine behind riesz_apply; fweights is the already-multiplied
    f * w array.  Chunked over targets and sources with a fixed accumulation
    order, so the output is deterministic.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    fweights = np.asarray(fweights, dtype=float)
    out = np.zeros((targets.shape[0], points.shape[1]))
    for t0 in range(0, targets.shape[0], target_chunk):
        tblk = targets[t0 : t0 + target_chunk]
        acc = np.zeros((tblk.shape[0], points.shape[1]))
        for s0 in range(0, points.shape[0], source_chunk):
            sblk = points[s0 : s0 + source_chunk]
            diff = tblk[:, None, :] - sblk[None, :, :]
            r2 = np.einsum("tsd,tsd->ts", diff, diff)
            cw = _coef_from_r2(r2, cfg)
            cw *= fweights[s0 : s0 + source_chunk][None, :]
            acc += np.einsum("tsd,ts->td", diff, cw)
        out[t0 : t0 + tblk.shape[0]] = acc
    return out


def riesz_apply(
    mu: DiscreteMeasure,
    f,
    cfg: KernelConfig,
    targets,
    **chunks,
) -> np.ndarray:
    """Transform of the weighted density f against mu at the given targets.

    Returns sum_y K(x - y) f(y) w(y) for each target x; a target sitting on
    a support point picks up no self-term in either kernel mode.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (len(mu),):
        raise ValueError("f must be a scalar array aligned with the measure")
    if not np.all(np.isfinite(f)):
        raise ValueError("f must be finite")
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if targets.shape[0] == 0:
        raise ValueError("targets must be nonempty")
    if targets.shape[1] != mu.ambient_dim:
        raise ValueError("target dimension mismatch")
    return kernel_sum(mu.points, f * mu.weights, cfg, targets, **chunks)


def maximal_function(mu: DiscreteMeasure, f, x, grid: ScaleGrid) -> float:
    """Centered maximal average of |f| against mu over the grid radii."""
    f = np.asarray(f, dtype=float)
    x = np.asarray(x, dtype=float)
    radii = grid.radii()
    masses = ball_masses(mu, x[None, :], radii)[0]
    sums = ball_masses(mu, x[None, :], radii, values=np.abs(f) * mu.weights)[0]
    occupied = masses > 0.0
    if not occupied.any():
        raise ValueError("all grid balls around x are empty")
    return float(np.max(sums[occupied] / masses[occupied]))


def _maximal_all(mu: DiscreteMeasure, f: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Maximal averages of |f| at every support point over the given radii."""
    masses = ball_masses(mu, mu.points, radii)
    sums = ball_masses(mu, mu.points, radii, values=np.abs(f) * mu.weights)
    ratios = np.where(masses > 0.0, sums / np.where(masses > 0.0, masses, 1.0), 0.0)
    return ratios.max(axis=1)


@dataclass(frozen=True)
class GapCheckResult:
    """Outcome of the regularized-vs-truncated comparison."""

    max_gap: float
    bound: float
    passed: bool
    max_ratio: float


def truncation_gap_check(
    mu: DiscreteMeasure, f, cfg: KernelConfig, grid: ScaleGrid
) -> GapCheckResult:
    """Check |regularized - truncated| <= G * M(f) at every support point.

    The two transforms differ only over the punctured ball 0 < |x-y| <= eps,
    where the regularized kernel is bounded by eps**(-n).  That makes the gap
    at x at most (mu(B(x, eps)) / eps**n) times the maximal average of |f|,
    hence at most G * Mf(x) with G the measured growth constant.  This is an
    exact inequality at the discrete level, so `passed` must come back True;
    only float rounding slack (1e-9 relative) is tolerated.

    The truncation radius is appended to the radius grid if missing, both for
    the growth constant and for the maximal averages, as the inequality needs
    the scale eps itself to be visible.
    """
    eps = cfg.epsilon
    if not (grid.r_min <= eps <= grid.r_max):
        raise ValueError("epsilon must lie within the grid range")
    f = np.asarray(f, dtype=float)
    radii = np.unique(np.append(grid.radii(), eps))

    trunc = riesz_apply(mu, f, KernelConfig(cfg.n, eps, TRUNCATED), mu.points)
    reg = riesz_apply(mu, f, KernelConfig(cfg.n, eps, REGULARIZED), mu.points)
    gaps = np.sqrt(np.einsum("ij,ij->i", reg - trunc, reg - trunc))

    masses = ball_masses(mu, mu.points, radii)
    ratios = masses / radii[None, :] ** mu.hausdorff_dim
    growth = float(ratios.max())
    maximal = _maximal_all(mu, f, radii)
    bounds = growth * maximal

    scale = max(float(bounds.max()), float(gaps.max()), 1.0)
    ok = np.all(gaps <= bounds * (1.0 + 1e-9) + 1e-13 * scale)
    worst = int(np.argmax(gaps - bounds))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bounds > 0.0, gaps / np.where(bounds > 0.0, bounds, 1.0), 0.0)
    return GapCheckResult(
        max_gap=float(gaps.max()),
        bound=float(bounds[worst]),
        passed=bool(ok),
        max_ratio=float(ratio.max()),
    )


# ---------------------------------------------------------------------------
# vector field file format: "# d=<d> count=<N>" then N rows of d components.
# Pairs with the measure file the field was computed against.
# ---------------------------------------------------------------------------

_FIELD_HEADER_RE = re.compile(r"^#\s*d=(\d+)\s+count=(\d+)\s*$")


def write_vector_field(field: VectorField, path) -> None:
    vals = field.values
    lines = [f"# d={vals.shape[1]} count={vals.shape[0]}"]
    for row in vals:
        lines.append(" ".join(f"{c:.17g}" for c in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vector_field(path) -> VectorField:
    with open(path) as fh:
        raw = fh.read().splitlines()
    if not raw:
        raise ValueError(f"{path}: empty vector field file")
    m = _FIELD_HEADER_RE.match(raw[0])
    if m is None:
        raise ValueError(f"{path}: malformed header line {raw[0]!r}")
    d, count = int(m.group(1)), int(m.group(2))
    rows = [ln for ln in raw[1:] if ln.strip() and not ln.lstrip().startswith("#")]
    if len(rows) != count:
        raise ValueError(f"{path}: header count {count} != {len(rows)} data rows")
    data = np.array([[float(tok) for tok in ln.split()] for ln in rows])
    if data.shape[1] != d:
        raise ValueError(f"{path}: rows must have {d} columns")
    return VectorField(data)
