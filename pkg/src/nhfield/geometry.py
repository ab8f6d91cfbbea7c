"""Pointwise geometry of a constrained Lagrangian field theory.

Everything here is a function of a model and a single point ``w`` of the
k-velocity bundle.  Derivatives come from batched hyper-dual passes: one
seeding per ordered pair of flattened coordinates, evaluated together with
numpy-array components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .errors import ConstraintRankError, EvaluationDomainError, SingularHessianError
from .hyperdual import HyperDual
from .model import FieldPoint, ModelSpec

__all__ = [
    "TOL_REGULAR",
    "TOL_COMPAT",
    "LagrangianJet",
    "OmegaStack",
    "ConstraintPackage",
    "jet",
    "regularity",
    "omega_stack",
    "constraint_package",
    "energy_differential",
    "function_gradient",
    "function_hessian",
    "batch_gradient",
    "rcond",
    "local_derivatives",
    "constraint_values",
    "constraint_jacobian",
    "constraint_forms",
]

TOL_REGULAR = 1e-10
TOL_COMPAT = 1e-10


def rcond(a) -> float:
    """Reciprocal 2-norm condition number; 0 for singular or empty-rank input."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 1.0
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0 or not np.isfinite(s[0]):
        return 0.0
    return float(s[-1] / s[0])


def _broadcast(val, size):
    return np.broadcast_to(np.asarray(val, dtype=float), (size,))


@lru_cache(maxsize=64)
def _pair_seeds(N):
    rows, cols = np.divmod(np.arange(N * N), N)
    return tuple((rows == j).astype(float) for j in range(N)), tuple((cols == j).astype(float) for j in range(N))


@lru_cache(maxsize=64)
def _unit_seeds(N):
    return tuple(np.eye(N)[j] for j in range(N))


def _seeded(x):
    r1, r2 = _pair_seeds(x.size)
    return [HyperDual(float(xj), r1[j], r2[j], 0.0) for j, xj in enumerate(x)]


def _check_finite(val, what):
    if not np.all(np.isfinite(val)):
        raise EvaluationDomainError(f"non-finite {what}")


def _full(a, size):
    if isinstance(a, np.ndarray) and a.size == size:
        return a
    return _broadcast(a, size)


def _value_part(r):
    return float(r.real) if np.ndim(r.real) == 0 else float(np.asarray(r.real).reshape(-1)[0])


def _gradient_part(r, N):
    """Gradient from a pair-seeded result: ``d1`` is constant along each row block."""
    if not isinstance(r, HyperDual):
        return float(r), np.zeros(N)
    return _value_part(r), _full(r.d1, N * N)[::N].copy()


def _hessian_parts(r, N):
    if not isinstance(r, HyperDual):
        return float(r), np.zeros(N), np.zeros((N, N))
    val, grad = _gradient_part(r, N)
    d12 = _full(r.d12, N * N).reshape(N, N)
    return val, grad, 0.5 * (d12 + d12.T)


def function_hessian(fn, x):
    """Value, gradient and symmetrized Hessian of ``fn`` at flat point ``x``.

    Every ordered pair ``(i, j)`` is one hyper-dual seeding; the ``(i, j)``
    and ``(j, i)`` results are averaged.
    """
    x = np.asarray(x, dtype=float)
    val, grad, hess = _hessian_parts(fn(_seeded(x)), x.size)
    _check_finite(hess, "Hessian")
    _check_finite(grad, "gradient")
    _check_finite(val, "function value")
    return val, grad, hess


def function_gradient(fn, x):
    """Value and gradient of ``fn`` at ``x`` (first-order seeding only)."""
    x = np.asarray(x, dtype=float)
    N = x.size
    units = _unit_seeds(N)
    vals = [HyperDual(float(xj), units[j], 0.0, 0.0) for j, xj in enumerate(x)]
    r = fn(vals)
    if not isinstance(r, HyperDual):
        return float(r), np.zeros(N)
    val = float(np.asarray(r.real).reshape(-1)[0])
    grad = _broadcast(r.d1, N).copy()
    _check_finite(val, "function value")
    _check_finite(grad, "gradient")
    return val, grad


def batch_gradient(fn, X):
    """Values ``(P,)`` and gradients ``(P, N)`` of ``fn`` at the rows of ``X``.

    One seeding per coordinate, each vectorized over the ``P`` points.
    """
    X = np.asarray(X, dtype=float)
    P, N = X.shape
    cols = [X[:, j] for j in range(N)]
    vals = fn(cols)
    value = np.broadcast_to(np.asarray(vals, dtype=float), (P,)).copy()
    grad = np.zeros((P, N))
    one = np.ones(P)
    for j in range(N):
        seeded = [HyperDual(cols[i], one if i == j else 0.0, 0.0, 0.0) for i in range(N)]
        r = fn(seeded)
        if isinstance(r, HyperDual):
            grad[:, j] = np.broadcast_to(np.asarray(r.d1, dtype=float), (P,))
    return value, grad


# -- Lagrangian jet ------------------------------------------------------------


@dataclass(frozen=True)
class LagrangianJet:
    L: float
    dLdq: np.ndarray  # (n,)
    dLdv: np.ndarray  # (n, k); also the momenta p^A_i and the theta_L^A coefficients
    hess_vv: np.ndarray  # (nk, nk) in flattened velocity order
    hess_qv: np.ndarray  # (n, nk): d2L / dq^j dv^i_A
    energy: float
    hess_qq: np.ndarray  # (n, n)

    @property
    def n(self):
        return self.dLdq.size

    @property
    def k(self):
        return self.dLdv.shape[1]

    @property
    def dLdv_flat(self):
        return self.dLdv.T.reshape(-1)


def _make_jet(n, k, x, val, grad, hess) -> LagrangianJet:
    dLdv_flat = grad[n:]
    return LagrangianJet(
        L=val,
        dLdq=grad[:n],
        dLdv=dLdv_flat.reshape(k, n).T,
        hess_vv=hess[n:, n:],
        hess_qv=hess[:n, n:],
        energy=float(np.dot(x[n:], dLdv_flat) - val),
        hess_qq=hess[:n, :n],
    )


def jet(model: ModelSpec, w: FieldPoint) -> LagrangianJet:
    x = w.flat()
    return _make_jet(model.n, model.k, x, *function_hessian(model.L, x))


def local_derivatives(model: ModelSpec, x: np.ndarray):
    """Jet of ``L`` plus constraint values and rows ``dPhi`` from one seeded pass.

    ``x`` is a flattened point.  This is the hot path of the integrators.
    """
    N = x.size
    seeds = _seeded(x)
    val, grad, hess = _hessian_parts(model.L(seeds), N)
    m = model.m
    phi = np.empty(m)
    dphi = np.empty((m, N))
    for a, f in enumerate(model.Phi):
        phi[a], dphi[a] = _gradient_part(f(seeds), N)
    # a single reduction: any inf or nan poisons the sum
    if not math.isfinite(val + hess.sum() + grad.sum() + phi.sum() + dphi.sum()):
        raise EvaluationDomainError("non-finite derivatives of the Lagrangian or constraints")
    return _make_jet(model.n, model.k, x, val, grad, hess), phi, dphi


def energy_differential(model: ModelSpec, w: FieldPoint, j: LagrangianJet | None = None) -> np.ndarray:
    """``dE_L`` as a covector of length ``n + nk``."""
    j = j or jet(model, w)
    v = w.v.T.reshape(-1)
    dq = j.hess_qv @ v - j.dLdq
    dv = j.hess_vv @ v
    return np.concatenate([dq, dv])


def regularity(model: ModelSpec, w: FieldPoint, tol: float = TOL_REGULAR, j: LagrangianJet | None = None) -> dict:
    """Reciprocal condition of the velocity Hessian, with degenerate directions named."""
    j = j or jet(model, w)
    H = j.hess_vv
    c = rcond(H)
    report = {"regular": bool(c > tol), "condition": c, "tolerance": tol}
    if not report["regular"]:
        # name the velocity coordinates that span the numerical kernel
        u, s, vt = np.linalg.svd(H)
        smax = s[0] if s.size and s[0] > 0 else 1.0
        kernel = vt[s <= tol * smax]
        names = model.names[model.n :]
        involved = [names[i] for i in range(len(names)) if np.any(np.abs(kernel[:, i]) > 1e-8)]
        report["degenerate_velocities"] = involved
        report["note"] = (
            "velocity Hessian is singular; the generic regular-Lagrangian solves do not apply"
            " and the model must be treated through its explicit field equations"
        )
    return report


# -- k-symplectic forms ----------------------------------------------------------


@dataclass(frozen=True)
class OmegaStack:
    forms: np.ndarray  # (k, N, N), antisymmetric
    vertical: np.ndarray  # (N, nk) basis of the vertical subspace

    @property
    def k(self):
        return self.forms.shape[0]


def omega_stack(model: ModelSpec, w: FieldPoint, j: LagrangianJet | None = None) -> OmegaStack:
    n, k = model.n, model.k
    N = model.dim
    j = j or jet(model, w)
    forms = np.zeros((k, N, N))
    for A in range(k):
        cols = slice(A * n, (A + 1) * n)
        hqv_A = j.hess_qv[:, cols]  # [jq, i] = d2L/dq^j dv^i_A
        qq = hqv_A - hqv_A.T  # [i, jq] = d2L/dq^j dv^i_A - d2L/dq^i dv^j_A
        qq = 0.5 * (qq - qq.T)
        forms[A, :n, :n] = qq
        hv = j.hess_vv[cols, :]  # [i, (j,B)] = d2L/dv^i_A dv^j_B
        forms[A, :n, n:] = hv
        forms[A, n:, :n] = -hv.T
    vertical = np.zeros((N, n * k))
    vertical[n:, :] = np.eye(n * k)
    return OmegaStack(forms, vertical)


# -- constraints -----------------------------------------------------------------


@dataclass(frozen=True)
class ConstraintPackage:
    phi: np.ndarray  # (m,)
    dphi: np.ndarray  # (m, N)
    eta: np.ndarray  # (m, k, n)
    Z: np.ndarray  # (m, nk) vertical components (Z_a)^j_B
    C: np.ndarray  # (m, m), C[a, b] = Z_a(Phi_b)
    Cinv: np.ndarray | None  # inverse of C when compatible
    compatible: bool
    condition: float  # reciprocal condition of C
    eta_rank: int

    @property
    def m(self):
        return self.phi.size

    def Z_full(self) -> np.ndarray:
        """``Z_a`` as tangent vectors of length ``n + nk`` (zero q block)."""
        m, nk = self.Z.shape
        n = self.dphi.shape[1] - nk
        return np.concatenate([np.zeros((m, n)), self.Z], axis=1)

    def eta_covectors(self) -> np.ndarray:
        """Each ``eta^B_a`` as an ``(n + nk)`` covector, rows ordered ``(a, B)``."""
        m, k, n = self.eta.shape
        out = np.zeros((m * k, n + n * k))
        out[:, :n] = self.eta.reshape(m * k, n)
        return out


def constraint_values(model: ModelSpec, w: FieldPoint) -> np.ndarray:
    x = w.flat()
    return np.array([float(f(x)) for f in model.Phi])


def constraint_jacobian(model: ModelSpec, w: FieldPoint):
    x = w.flat()
    m, N = model.m, model.dim
    phi = np.zeros(m)
    dphi = np.zeros((m, N))
    for a, f in enumerate(model.Phi):
        phi[a], dphi[a] = function_gradient(f, x)
    return phi, dphi


def constraint_forms(model: ModelSpec, w: FieldPoint, dphi: np.ndarray | None = None) -> np.ndarray:
    """``eta^A_{a i}`` with shape ``(m, k, n)``."""
    n, k, m = model.n, model.k, model.m
    if model.form_mode == "explicit":
        x = w.flat()
        return np.array([[[float(f(x)) for f in blk] for blk in row] for row in model.eta_fns]).reshape(m, k, n)
    if dphi is None:
        _, dphi = constraint_jacobian(model, w)
    # Chetaev: eta^A_a = S^A*(dPhi_a), the A-th velocity block of dPhi_a
    return dphi[:, n:].reshape(m, k, n).copy()


def constraint_package(
    model: ModelSpec,
    w: FieldPoint,
    j: LagrangianJet | None = None,
    tol_compat: float = TOL_COMPAT,
    tol_regular: float = TOL_REGULAR,
    phi_dphi: tuple | None = None,
) -> ConstraintPackage:
    n, k, m = model.n, model.k, model.m
    nk = n * k
    phi, dphi = phi_dphi if phi_dphi is not None else constraint_jacobian(model, w)
    eta = constraint_forms(model, w, dphi)
    if m == 0:
        e = np.zeros((0, 0))
        return ConstraintPackage(phi, dphi, eta, np.zeros((0, nk)), e, e, True, 1.0, 0)
    flat_eta = eta.reshape(m, nk)
    s = np.linalg.svd(flat_eta, compute_uv=False)
    rank = int(np.sum(s > max(flat_eta.shape) * np.finfo(float).eps * s[0])) if s[0] > 0 else 0
    if rank < m:
        raise ConstraintRankError(f"constraint forms have rank {rank} < m={m}")
    j = j or jet(model, w)
    c = rcond(j.hess_vv)
    if c <= tol_regular:
        raise SingularHessianError("velocity Hessian is singular; constraint distribution undefined", c)
    lu = sla.lu_factor(j.hess_vv)
    Z = sla.lu_solve(lu, flat_eta.T).T  # one factorization reused for every form
    C = Z @ dphi[:, n:].T
    cc = rcond(C)
    compatible = bool(cc > tol_compat)
    Cinv = np.linalg.inv(C) if compatible else None
    return ConstraintPackage(phi, dphi, eta, Z, C, Cinv, compatible, cc, rank)
