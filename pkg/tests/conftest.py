from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from nhfield.model import builtin, build_distribution_model, build_linear_constraint_model, model_from_dict, unpack  # noqa: E402

settings.register_profile("nhfield", max_examples=60, deadline=None, derandomize=True)
settings.load_profile("nhfield")


def random_point(model, rng, scale=1.0):
    return unpack(rng.normal(scale=scale, size=model.dim), model.n)


def feasible_point(model, rng, scale=1.0):
    """Random point moved onto ``Phi = 0`` by minimum-norm Newton in the velocities."""
    from nhfield.geometry import constraint_jacobian

    w = random_point(model, rng, scale)
    n = model.n
    for _ in range(40):
        if model.m == 0:
            return w
        phi, dphi = constraint_jacobian(model, w)
        if np.max(np.abs(phi)) < 1e-14:
            return w
        dv = np.linalg.lstsq(dphi[:, n:], phi, rcond=None)[0]
        x = w.flat()
        x[n:] -= dv
        w = unpack(x, n)
    return w


def quartic_model():
    """A regular Lagrangian that is not quadratic in the velocities."""
    return model_from_dict(
        {
            "name": "quartic",
            "n": 2,
            "k": 1,
            "lagrangian": "0.5*(v1_1^2 + v2_1^2) + 0.25*v1_1^4 + 0.1*v1_1*v2_1*q2 - 0.5*q1^2 - cos(q2)",
        }
    )


def linear_constraint_model():
    """Potential plus a position-dependent linear constraint ``v1 + q1 v2 = 0``."""
    base = model_from_dict(
        {"name": "linear_fixture", "n": 3, "k": 1, "lagrangian": "0.5*(v1_1^2 + 2*v2_1^2 + v3_1^2) - 0.5*q1^2 - q3*q2"}
    )
    return build_linear_constraint_model(base, [[["1", "q1", "0"]]])


def plane_distribution_model(k=2):
    """``D = span{d/dq1}`` in the plane, k copies."""
    names = " + ".join(f"v{i}_{A}^2" for i in (1, 2) for A in range(1, k + 1))
    base = model_from_dict({"name": "plane_distribution", "n": 2, "k": k, "lagrangian": f"0.5*({names})"})
    return build_distribution_model(base, [[0.0, 1.0]])


def degenerate_distribution_model(k=2):
    """Same distribution with ``L = q1^2/2 * |v|^2``, whose Hessian vanishes at ``q1 = 0``."""
    names = " + ".join(f"v{i}_{A}^2" for i in (1, 2) for A in range(1, k + 1))
    base = model_from_dict({"name": "degenerate_distribution", "n": 2, "k": k, "lagrangian": f"0.5*q1^2*({names})"})
    return build_distribution_model(base, [[0.0, 1.0]])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def cosserat():
    return builtin("cosserat")
