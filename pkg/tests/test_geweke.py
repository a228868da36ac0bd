"""Joint-distribution correctness gates for both samplers at toy size."""

import numpy as np

from _geweke import (
    DISTANCE_MOMENT_NAMES,
    PROJECTION_MOMENT_NAMES,
    geweke_distance,
    geweke_projection,
)


def test_distance_sampler_joint_distribution():
    z = geweke_distance(n=4, T=3, G=2, seed=5)
    report = ", ".join(
        f"{nm}={zz:+.2f}" for nm, zz in zip(DISTANCE_MOMENT_NAMES, z)
    )
    assert np.all(np.abs(z) < 4.0), f"z-scores out of range: {report}"


def test_projection_sampler_joint_distribution():
    z = geweke_projection(n=4, T=3, G=2, seed=5)
    report = ", ".join(
        f"{nm}={zz:+.2f}" for nm, zz in zip(PROJECTION_MOMENT_NAMES, z)
    )
    assert np.all(np.abs(z) < 4.0), f"z-scores out of range: {report}"
