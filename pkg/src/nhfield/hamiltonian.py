"""Legendre map, its Newton inverse and the Hamiltonian side of the equations.

``H`` is never built symbolically.  It is evaluated as ``E_L`` at the
inverse Legendre image, and its partial derivatives are central finite
differences (step ``1e-6``) through that inverse.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import LegendreInversionError, UnsupportedModelError
from .geometry import constraint_forms, constraint_jacobian, jet
from .model import FieldPoint, ModelSpec
from .symbolic import stage_tape

__all__ = [
    "CotangentPoint",
    "legendre",
    "legendre_inverse",
    "hamiltonian_value",
    "hamiltonian_forms",
    "hamiltonian_gradient",
    "transported_constraints",
    "hamilton_residual",
    "FD_STEP",
]

FD_STEP = 1e-6
MAX_NEWTON = 50


@dataclass(frozen=True)
class CotangentPoint:
    """``(q^i, p^A_i)``; ``p`` has shape ``(n, k)`` like the velocities."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(-1)
        p = np.asarray(self.p, dtype=float)
        if p.ndim == 1:
            p = p.reshape(q.size, -1)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    def flat_p(self) -> np.ndarray:
        return self.p.T.reshape(-1)


def legendre(model: ModelSpec, w: FieldPoint) -> CotangentPoint:
    return CotangentPoint(w.q.copy(), jet(model, w).dLdv)


@lru_cache(maxsize=32)
def _tape(model: ModelSpec):
    return stage_tape(model)


def _invert(model: ModelSpec, q, p_flat, v0, tol=1e-13):
    """Newton on ``dL/dv(q, v) = p`` in flattened velocity coordinates."""
    tape = _tape(model)
    n = model.n
    v = np.array(v0, dtype=float)
    scale = max(1.0, float(np.max(np.abs(p_flat))))
    for _ in range(MAX_NEWTON):
        vals = np.concatenate([q, v]).tolist()
        F = tape.dLdv(vals) - p_flat
        if float(np.max(np.abs(F))) <= tol * scale:
            return v
        H = tape.hess_vv(vals)
        try:
            dv = np.linalg.solve(H, F)
        except np.linalg.LinAlgError:
            raise LegendreInversionError("singular velocity Hessian during Legendre inversion", np.concatenate([q, v])) from None
        v = v - dv
        if not np.all(np.isfinite(v)):
            break
    raise LegendreInversionError(
        f"Legendre inversion did not converge in {MAX_NEWTON} iterations", np.concatenate([q, p_flat])
    )


def legendre_inverse(model: ModelSpec, cp: CotangentPoint, guess: FieldPoint | None = None) -> FieldPoint:
    """The point ``w`` with ``FL(w) = cp``, starting Newton from ``guess`` (default zero velocity)."""
    n, k = model.n, model.k
    v0 = guess.flat()[n:] if guess is not None else np.zeros(n * k)
    v = _invert(model, cp.q, cp.flat_p(), v0)
    return FieldPoint(cp.q.copy(), v.reshape(k, n).T)


def _energy(model, q, v_flat):
    tape = _tape(model)
    vals = np.concatenate([q, v_flat]).tolist()
    return float(v_flat @ tape.dLdv(vals)) - float(tape.L(vals)), float(tape.L(vals))


def hamiltonian_forms(model: ModelSpec, cp: CotangentPoint, guess: FieldPoint | None = None) -> tuple[float, float]:
    """``H`` as ``E_L(FL^-1)`` and as ``v p - L`` at ``FL^-1``; they agree when the inversion does."""
    w = legendre_inverse(model, cp, guess)
    v = w.flat()[model.n :]
    e, L = _energy(model, w.q, v)
    return e, float(v @ cp.flat_p()) - L


def hamiltonian_value(model: ModelSpec, cp: CotangentPoint, guess: FieldPoint | None = None) -> float:
    return hamiltonian_forms(model, cp, guess)[0]


def _H(model, q, p_flat, v0):
    v = _invert(model, q, p_flat, v0)
    return float(v @ p_flat) - float(_tape(model).L(np.concatenate([q, v]).tolist())), v


def hamiltonian_gradient(model: ModelSpec, cp: CotangentPoint, guess: FieldPoint | None = None, step: float = FD_STEP):
    """Central differences ``(dH/dq, dH/dp)``; ``dH/dp`` is flattened like ``v``."""
    n = model.n
    q, p = cp.q, cp.flat_p()
    v0 = _invert(model, q, p, guess.flat()[n:] if guess is not None else np.zeros(p.size))
    dq = np.empty(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        dq[i] = (_H(model, q + e, p, v0)[0] - _H(model, q - e, p, v0)[0]) / (2 * step)
    dp = np.empty(p.size)
    for i in range(p.size):
        e = np.zeros(p.size)
        e[i] = step
        dp[i] = (_H(model, q, p + e, v0)[0] - _H(model, q, p - e, v0)[0]) / (2 * step)
    return dq, dp


def transported_constraints(model: ModelSpec, cp: CotangentPoint, guess: FieldPoint | None = None) -> np.ndarray:
    """``Psi_a = Phi_a o FL^-1``."""
    w = legendre_inverse(model, cp, guess)
    x = w.flat()
    return np.array([float(f(x)) for f in model.Phi])


def _fd_derivative(a, dt):
    """Fourth-order time derivative on a uniform grid (one-sided 5-point stencils at the ends)."""
    T = len(a)
    out = np.empty_like(a)
    if T < 5:
        raise ValueError("need at least five stored times")
    out[2:-2] = (a[:-4] - 8 * a[1:-3] + 8 * a[3:-1] - a[4:]) / (12 * dt)
    c = np.array([-25, 48, -36, 16, -3]) / (12 * dt)
    out[0] = np.tensordot(c, a[:5], axes=1)
    out[1] = np.tensordot(np.array([-3, -10, 18, -6, 1]) / (12 * dt), a[:5], axes=1)
    out[-1] = -np.tensordot(c, a[::-1][:5], axes=1)
    out[-2] = -np.tensordot(np.array([-3, -10, 18, -6, 1]) / (12 * dt), a[::-1][:5], axes=1)
    return out


def hamilton_residual(model: ModelSpec, sol, stride: int = 1) -> dict:
    """Residuals of both Hamiltonian equations along a transported k = 1 solution.

    The first is ``dH/dp - dq/dt``.  The second is
    ``dH/dq + lambda_a eta_a + dp/dt`` with the Lagrangian-side multipliers
    and reaction forms.  Time derivatives use fourth-order differences of
    the stored samples.
    """
    if sol.k != 1:
        raise UnsupportedModelError("Hamiltonian transport is implemented for k = 1 solutions")
    n = model.n
    T = len(sol.t)
    dt = sol.t[1] - sol.t[0]
    tape = _tape(model)
    P = np.array([tape.dLdv(np.concatenate([sol.q[i], sol.v[i, :, 0]]).tolist()) for i in range(T)])
    qdot = _fd_derivative(sol.q, dt)
    pdot = _fd_derivative(P, dt)
    idx = np.arange(0, T, stride)
    r1 = np.empty((idx.size, n))
    r2 = np.empty((idx.size, n))
    for row, i in enumerate(idx):
        w = FieldPoint(sol.q[i], sol.v[i])
        cp = CotangentPoint(sol.q[i], P[i])
        dHq, dHp = hamiltonian_gradient(model, cp, w)
        r1[row] = dHp - qdot[i]
        react = np.zeros(n)
        if model.m:
            _, dphi = constraint_jacobian(model, w)
            eta = constraint_forms(model, w, dphi)[:, 0, :]
            react = sol.lam[i, :, 0] @ eta
        r2[row] = dHq + react + pdot[i]
    return {
        "t": sol.t[idx],
        "first": r1,
        "second": r2,
        "first_max": float(np.max(np.abs(r1))) if r1.size else 0.0,
        "second_max": float(np.max(np.abs(r2))) if r2.size else 0.0,
    }
