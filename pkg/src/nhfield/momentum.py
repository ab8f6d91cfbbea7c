"""Nonholonomic momentum maps and the momentum balance law.

A section is given by its components ``xi^i(q, v)`` and acts by translation
along those components, so its generated field at a point is the vector of
component values and the derivative of the section along a solution is the
derivative of those values.  The momentum is ``J^A = dL/dv^i_A xi^i``.

Along a solution ``sum_A d/dt^A J^A = sum_A dL/dv^i_A d/dt^A xi^i``.  The
residual of that identity is measured with second-order central differences
on stored solutions; a section with constant components gives a
conservation law.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import ModelSchemaError
from .expr import compile_expr, variables
from .geometry import constraint_forms, constraint_jacobian, function_gradient, jet
from .model import FieldPoint, ModelSpec
from .symbolic import diff

__all__ = [
    "ANNIHILATION_TOL",
    "annihilation_check",
    "momentum_components",
    "residual_summary",
    "section_values",
    "is_horizontal",
    "annihilation_residual",
    "invariance_residual",
    "momentum",
    "momentum_series",
    "momentum_residual",
    "symmetry_report",
]


ANNIHILATION_TOL = 1e-10


def _section(model: ModelSpec, name: str):
    try:
        return model.section(name), model.section_fns[name]
    except KeyError:
        raise ModelSchemaError(f"model {model.name!r} has no symmetry section {name!r}") from None


def section_values(model: ModelSpec, name: str, w: FieldPoint) -> np.ndarray:
    _, fns = _section(model, name)
    x = w.flat()
    return np.array([float(f(x)) for f in fns])


def is_horizontal(model: ModelSpec, name: str) -> bool:
    """True when every component is a constant (after parameters are fixed)."""
    sec, _ = _section(model, name)
    params = set(model.parameters)
    return all(variables(c) <= params for c in sec.components)


def annihilation_residual(model: ModelSpec, w: FieldPoint, name: str) -> float:
    """``max |eta^A_a(xi)|``: zero when the section's field annihilates the reaction forms."""
    if model.m == 0:
        return 0.0
    xi = section_values(model, name, w)
    _, dphi = constraint_jacobian(model, w)
    eta = constraint_forms(model, w, dphi)  # (m, k, n)
    return float(np.max(np.abs(eta @ xi)))


def invariance_residual(model: ModelSpec, w: FieldPoint, name: str) -> float:
    """``|xi^C(L)|`` from the complete lift: zero for a Lagrangian symmetry.

    ``xi^C(L) = xi^i dL/dq^i + v^j_A dxi^i/dq^j dL/dv^i_A``.
    """
    _, fns = _section(model, name)
    x = w.flat()
    n = model.n
    grads = np.array([function_gradient(f, x)[1][:n] for f in fns])  # dxi^i/dq^j
    j = jet(model, w)
    xi = np.array([float(f(x)) for f in fns])
    lift = np.einsum("ja,ij,ia->", w.v, grads, j.dLdv)
    return float(abs(xi @ j.dLdq + lift))


def annihilation_check(model: ModelSpec, name: str, points, tol: float = ANNIHILATION_TOL) -> dict:
    worst = max((annihilation_residual(model, w, name) for w in points), default=0.0)
    return {"section": name, "max_residual": worst, "tolerance": tol, "pass": worst < tol}


def momentum(model: ModelSpec, w: FieldPoint, name: str) -> np.ndarray:
    """The ``k`` components ``J^A``."""
    xi = section_values(model, name, w)
    return xi @ jet(model, w).dLdv


momentum_components = momentum


def symmetry_report(model: ModelSpec, w: FieldPoint, name: str) -> dict:
    return {
        "section": name,
        "horizontal": is_horizontal(model, name),
        "annihilation_residual": annihilation_residual(model, w, name),
        "invariance_residual": invariance_residual(model, w, name),
        "momentum": momentum(model, w, name).tolist(),
    }


# -- along stored solutions ---------------------------------------------------------


@lru_cache(maxsize=32)
def _dLdv_fns(model: ModelSpec):
    b = model.binding
    return tuple(compile_expr(diff(model.lagrangian, s), b) for s in model.names[model.n :])


def _columns(q, v):
    """Column arrays in flattened order for points stacked along leading axes."""
    n, k = v.shape[-2], v.shape[-1]
    cols = [q[..., i] for i in range(n)]
    cols += [v[..., i, A] for A in range(k) for i in range(n)]
    return cols


def _evaluate(fns, cols, shape):
    return np.stack([np.broadcast_to(np.asarray(f(cols), dtype=float), shape) for f in fns], axis=-1)


def _fields(model: ModelSpec, sol, name: str):
    """``dL/dv`` with shape ``(..., n, k)`` and section values ``(..., n)`` on the stored grid."""
    _, fns = _section(model, name)
    cols = _columns(sol.q, sol.v)
    shape = sol.q.shape[:-1]
    p = _evaluate(_dLdv_fns(model), cols, shape)
    p = p.reshape(*shape, model.k, model.n).swapaxes(-1, -2)
    xi = _evaluate(fns, cols, shape)
    return p, xi


def momentum_series(model: ModelSpec, sol, name: str) -> np.ndarray:
    """``J^A`` at every stored point: ``(T, k)`` for k = 1 runs, ``(T, M, k)`` on grids."""
    p, xi = _fields(model, sol, name)
    return np.einsum("...ia,...i->...a", p, xi)


def _central_t(a, dt):
    return (a[2:] - a[:-2]) / (2.0 * dt)


# stored fields reach three nodes out (phi^6 = -K D2 D1 x, then d/ds), so on
# bounded grids the residual skips that many nodes at each end
EDGE = 3


def _central_s(a, ds, periodic):
    d = (np.roll(a, -1, axis=1) - np.roll(a, 1, axis=1)) / (2.0 * ds)
    return d if periodic else d[:, EDGE:-EDGE]


def momentum_residual(model: ModelSpec, sol, name: str) -> np.ndarray:
    """Residual of the balance law at interior stored times (and interior nodes).

    Returns ``(T - 2,)`` for k = 1 and ``(T - 2, M')`` for grids, where
    ``M' = M`` on periodic grids and ``M - 6`` otherwise.
    """
    if len(sol.t) < 3:
        raise ValueError("need at least three stored times for central differences")
    dt = sol.t[1] - sol.t[0]
    p, xi = _fields(model, sol, name)
    J = np.einsum("...ia,...i->...a", p, xi)
    if sol.k == 1:
        lhs = _central_t(J[:, 0], dt)
        rhs = np.einsum("ti,ti->t", p[1:-1, :, 0], _central_t(xi, dt))
        return lhs - rhs
    periodic = sol.bc == "periodic"
    ds = sol.s[1] - sol.s[0]
    inner = slice(None) if periodic else slice(EDGE, -EDGE)
    lhs = _central_t(J[:, inner, 0], dt) + _central_s(J[..., 1], ds, periodic)[1:-1]
    rhs = np.einsum("tmi,tmi->tm", p[1:-1, inner, :, 0], _central_t(xi[:, inner], dt))
    rhs += np.einsum("tmi,tmi->tm", p[1:-1, inner, :, 1], _central_s(xi, ds, periodic)[1:-1])
    return lhs - rhs


def residual_summary(res: np.ndarray) -> dict:
    """Max and root-mean-square of a residual series."""
    r = np.asarray(res, dtype=float)
    if r.size == 0:
        return {"max": 0.0, "l2": 0.0, "count": 0}
    return {"max": float(np.max(np.abs(r))), "l2": float(np.sqrt(np.mean(r * r))), "count": int(r.size)}
