"""Shared fixtures: the generator corpus and the mixed construction measure."""

from __future__ import annotations

import warnings

import numpy as np
import pytest

import rieszlab as rl
from rieszlab.measure import DiscreteMeasure


def build_mixed_measure(n_seg: int = 512) -> DiscreteMeasure:
    """Segment plus sparse heavy points with light haze, for the pipeline.

    The segment carries mass 12 (linear density 12), so the whole-range
    density test at threshold 1/2 passes along it.  Each heavy point (weight
    0.25) passes the absolute density test through its haze rings and the
    segment, but fails the relative test once the haze (weight 0.12 per
    point, pairwise separations >= 0.4) is excluded: haze balls of radius
    just under 0.4 hold only their own 0.12 < r/2.  The expected outcome at
    p = s = 2: core = segment, targets = the four heavy points, haze outside
    the dense set.  The heavy pair at x ~ 4 sits 0.42 apart so both are
    selected with intersecting cover balls, forcing two colors.
    """
    parts = []
    weights = []

    h = 1.0 / n_seg
    seg = np.zeros((n_seg, 2))
    seg[:, 0] = (np.arange(n_seg) + 0.5) * h
    parts.append(seg)
    weights.append(np.full(n_seg, 12.0 / n_seg))

    def ring(center, radius, count, phase):
        ang = phase + 2.0 * np.pi * np.arange(count) / count
        return center + radius * np.column_stack([np.cos(ang), np.sin(ang)])

    def cluster(center, phase):
        center = np.asarray(center, dtype=float)
        parts.append(center[None, :])
        weights.append(np.array([0.25]))
        for radius, count in ((0.5, 7), (0.9, 14), (1.3, 20)):
            pts = ring(center, radius, count, phase)
            parts.append(pts)
            weights.append(np.full(count, 0.12))
            phase += 0.37

    cluster((0.3, 3.0), phase=0.2)
    cluster((0.75, -2.6), phase=0.5)

    # heavy pair sharing haze rings around its midpoint
    pair_mid = np.array([4.21, 2.0])
    parts.append(np.array([[4.0, 2.0], [4.42, 2.0]]))
    weights.append(np.array([0.25, 0.25]))
    phase = 0.11
    for radius, count in ((0.7, 10), (1.1, 17)):
        parts.append(ring(pair_mid, radius, count, phase))
        weights.append(np.full(count, 0.12))
        phase += 0.53

    pts = np.vstack(parts)
    w = np.concatenate(weights)
    return DiscreteMeasure(pts, w, 1, h)


SPARSE_RATIOS = [0.49, 0.485, 0.48, 0.475, 0.47, 0.465]
SPARSE_EXPONENT = 1.5


def sparse_cantor_depth(depth: int) -> DiscreteMeasure:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", rl.DecayTrendWarning)
        return rl.gen_sparse_cantor(SPARSE_RATIOS[:depth], weight_exponent=SPARSE_EXPONENT)


@pytest.fixture(scope="session")
def segment_1024():
    return rl.gen_segment(1024)


@pytest.fixture(scope="session")
def four_corners_3():
    return rl.gen_four_corners(3)


@pytest.fixture(scope="session")
def four_corners_4():
    return rl.gen_four_corners(4)


@pytest.fixture(scope="session")
def plane_23():
    return rl.gen_plane(2, 3, extent=2.0, spacing=1.0 / 16.0)


@pytest.fixture(scope="session")
def lip_graph():
    return rl.gen_lipschitz_graph(1.0, extent=1.0, spacing=1.0 / 512.0, seed=11)


@pytest.fixture(scope="session")
def mixed_measure():
    return build_mixed_measure()


@pytest.fixture(scope="session")
def corpus(segment_1024, four_corners_3, four_corners_4, plane_23, lip_graph):
    return {
        "segment": segment_1024,
        "four_corners_3": four_corners_3,
        "four_corners_4": four_corners_4,
        "plane_23": plane_23,
        "lip_graph": lip_graph,
        "sparse_cantor_4": sparse_cantor_depth(4),
    }
