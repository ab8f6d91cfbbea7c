"""Pointwise solves of the free and constrained field equations.

A candidate solution at ``w`` is a k-vector ``(xi_1, ..., xi_k)`` of second
order type: ``xi_A = v_A d/dq + (xi_A)^j_B d/dv^j_B``.  Only the coefficients
``(xi_A)^j_B`` are unknown; they are stored as ``accel[A, B*n + j]`` so that
the full tangent vector is ``concat(v[:, A], accel[A])``.

Sign conventions.  The constrained equations are

    sum_A d/dt^A (dL/dv^i_A) - dL/dq^i + lambda^a_B eta^B_{a i} = 0,

and the multipliers are an ``(m, k)`` array ``lam[a, B]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import FeasibilityError, IncompatibilityError, SingularHessianError, SingularSystemError
from .geometry import (
    TOL_COMPAT,
    TOL_REGULAR,
    ConstraintPackage,
    LagrangianJet,
    constraint_forms,
    constraint_package,
    energy_differential,
    jet,
    omega_stack,
    rcond,
)
from .ksla import distribution_subspaces
from .model import FieldPoint, ModelSpec

__all__ = [
    "TOL_FEAS",
    "ProjectorPair",
    "KVectorCoefficients",
    "projectors",
    "free_sopde",
    "constrained_sopde_multiplier",
    "project_free_solution",
    "recover_multipliers",
    "el_residual",
    "el_defect",
    "off_span_norm",
    "dalembert_residual",
    "restricted_residual",
    "PointData",
    "point_data",
]

TOL_FEAS = 1e-8


@dataclass(frozen=True)
class ProjectorPair:
    P: np.ndarray
    Q: np.ndarray

    def apply_k(self, vectors: np.ndarray) -> np.ndarray:
        """The k-fold extension: project each row of a ``(k, N)`` stack."""
        return vectors @ self.P.T


@dataclass(frozen=True)
class KVectorCoefficients:
    accel: np.ndarray  # (k, nk)

    @property
    def k(self):
        return self.accel.shape[0]

    def vectors(self, w: FieldPoint) -> np.ndarray:
        """The k assembled tangent vectors as rows of a ``(k, n + nk)`` array."""
        return np.concatenate([w.v.T, self.accel], axis=1)

    def tensor(self) -> np.ndarray:
        """``X[A, B, j] = (xi_A)^j_B``."""
        k, nk = self.accel.shape
        return self.accel.reshape(k, k, nk // k)

    def symmetry_defect(self) -> float:
        X = self.tensor()
        return float(np.max(np.abs(X - X.transpose(1, 0, 2)))) if X.size else 0.0


@dataclass(frozen=True)
class PointData:
    """Everything the pointwise solves need, evaluated once."""

    w: FieldPoint
    jet: LagrangianJet
    package: ConstraintPackage


def point_data(model: ModelSpec, w: FieldPoint, tol_compat: float = TOL_COMPAT) -> PointData:
    j = jet(model, w)
    return PointData(w, j, constraint_package(model, w, j, tol_compat=tol_compat))


def _data(model, w, data, tol_compat=TOL_COMPAT):
    return data if data is not None else point_data(model, w, tol_compat)


# -- projectors ------------------------------------------------------------------


def projectors(model: ModelSpec, w: FieldPoint, data: PointData | None = None) -> ProjectorPair:
    N = model.dim
    if model.m == 0:
        return ProjectorPair(np.eye(N), np.zeros((N, N)))
    d = _data(model, w, data)
    pk = d.package
    if not pk.compatible:
        raise IncompatibilityError("compatibility matrix is singular at this point", pk.condition)
    # Q = C^{ab} Z_a (x) dPhi_b with C^{ab} C_{gb} = delta: C^{..} is the inverse transpose of C
    Q = pk.Z_full().T @ pk.Cinv.T @ pk.dphi
    return ProjectorPair(np.eye(N) - Q, Q)


# -- the linear systems ------------------------------------------------------------


def _el_rhs(j: LagrangianJet, v: np.ndarray) -> np.ndarray:
    """``dL/dq^i - sum_A d2L/dq^j dv^i_A v^j_A``."""
    n, k = v.shape
    hqv = j.hess_qv.reshape(n, k, n)  # [j, A, i]
    return j.dLdq - np.einsum("jai,ja->i", hqv, v)


def _sym_basis(n: int, k: int) -> np.ndarray:
    """Columns map symmetric unknowns ``u`` to ``accel`` entries.

    Off-diagonal pairs enter as ``u / sqrt(2)`` in both ``(A, B)`` and
    ``(B, A)`` slots, so ``|accel|_F = |u|_2`` and least squares on ``u`` is
    the minimum Frobenius norm symmetric solution.
    """
    cols = []
    s = 1.0 / np.sqrt(2.0)
    for A in range(k):
        for B in range(A, k):
            for i in range(n):
                c = np.zeros((k, k, n))
                if A == B:
                    c[A, A, i] = 1.0
                else:
                    c[A, B, i] = s
                    c[B, A, i] = s
                cols.append(c.reshape(-1))
    return np.array(cols).T  # (k*k*n, n*k*(k+1)/2)


def _el_matrix(H: np.ndarray, n: int, k: int) -> np.ndarray:
    """Rows of the n equations in the flattened ``accel`` unknowns."""
    # row i: sum_A sum_c H[A*n + i, c] accel[A, c]
    out = np.zeros((n, k * n * k))
    for A in range(k):
        out[:, A * n * k : (A + 1) * n * k] = H[A * n : (A + 1) * n, :]
    return out


def _tangency(dphi: np.ndarray, v: np.ndarray, n: int, k: int):
    """Rows/rhs of ``v^i_A dPhi/dq^i + (xi_A)^j_B dPhi/dv^j_B = 0`` ordered ``(a, A)``."""
    m = dphi.shape[0]
    rows = np.zeros((m * k, k * n * k))
    rhs = np.zeros(m * k)
    dq, dv = dphi[:, :n], dphi[:, n:]
    for a in range(m):
        for A in range(k):
            rows[a * k + A, A * n * k : (A + 1) * n * k] = dv[a]
            rhs[a * k + A] = -dq[a] @ v[:, A]
    return rows, rhs


def free_sopde(model: ModelSpec, w: FieldPoint, j: LagrangianJet | None = None) -> KVectorCoefficients:
    n, k = model.n, model.k
    j = j or jet(model, w)
    c = rcond(j.hess_vv)
    if c <= TOL_REGULAR:
        raise SingularHessianError("velocity Hessian is singular", c)
    rhs = _el_rhs(j, w.v)
    if k == 1:
        return KVectorCoefficients(np.linalg.solve(j.hess_vv, rhs).reshape(1, n))
    S = _sym_basis(n, k)
    u = np.linalg.lstsq(_el_matrix(j.hess_vv, n, k) @ S, rhs, rcond=None)[0]
    return KVectorCoefficients((S @ u).reshape(k, n * k))


def _check_feasible(pk: ConstraintPackage, tol_feas: float):
    if pk.m and np.max(np.abs(pk.phi)) > tol_feas:
        raise FeasibilityError(f"point is off the constraint submanifold: max|Phi| = {np.max(np.abs(pk.phi)):.3e}")


def constrained_sopde_multiplier(
    model: ModelSpec,
    w: FieldPoint,
    data: PointData | None = None,
    tol_feas: float = TOL_FEAS,
    tol_compat: float = TOL_COMPAT,
):
    """Constrained coefficients and multipliers ``(KVectorCoefficients, lam)``."""
    n, k, m = model.n, model.k, model.m
    d = _data(model, w, data, tol_compat)
    j, pk = d.jet, d.package
    if m == 0:
        return free_sopde(model, w, j), np.zeros((0, k))
    _check_feasible(pk, tol_feas)
    if not pk.compatible:
        raise IncompatibilityError("compatibility matrix is singular at this point", pk.condition)
    rhs = _el_rhs(j, w.v)
    eta_cols = pk.eta.transpose(2, 0, 1).reshape(n, m * k)  # [i, (a, B)]
    T, t_rhs = _tangency(pk.dphi, w.v, n, k)
    if k == 1:
        A_ = np.block([[j.hess_vv, eta_cols], [T, np.zeros((m, m))]])
        b = np.concatenate([rhs, t_rhs])
        c = rcond(A_)
        if c <= TOL_REGULAR:
            raise SingularSystemError("augmented constrained system is singular", c)
        sol = np.linalg.solve(A_, b)
        return KVectorCoefficients(sol[:n].reshape(1, n)), sol[n:].reshape(m, 1)
    S = _sym_basis(n, k)
    E = _el_matrix(j.hess_vv, n, k) @ S
    A_ = np.block([[E, eta_cols], [T @ S, np.zeros((m * k, m * k))]])
    b = np.concatenate([rhs, t_rhs])
    sol, _, rank, sv = np.linalg.lstsq(A_, b, rcond=None)
    miss = np.linalg.norm(A_ @ sol - b)
    if miss > 1e-8 * max(1.0, np.linalg.norm(b)):
        # rank-deficient rows with an inconsistent right-hand side
        cond = float(sv[-1] / sv[0]) if sv.size and sv[0] > 0 else 0.0
        raise SingularSystemError(f"constrained system has no solution (residual {miss:.3e})", cond)
    u = sol[: S.shape[1]]
    lam = sol[S.shape[1] :].reshape(m, k)
    return KVectorCoefficients((S @ u).reshape(k, n * k)), lam


def project_free_solution(model: ModelSpec, w: FieldPoint, data: PointData | None = None) -> KVectorCoefficients:
    n = model.n
    d = _data(model, w, data)
    free = free_sopde(model, w, d.jet)
    if model.m == 0:
        return free
    pp = projectors(model, w, d)
    projected = pp.apply_k(free.vectors(w))
    return KVectorCoefficients(projected[:, n:].copy())


# -- residual checks --------------------------------------------------


def el_residual(model: ModelSpec, w: FieldPoint, coeffs: KVectorCoefficients, lam=None, data: PointData | None = None):
    """``sum_A d/dt^A(dL/dv^i_A) - dL/dq^i + lambda^a_B eta^B_{a i}`` (length n)."""
    n, k = model.n, model.k
    # only the jet and the forms enter, so degenerate Lagrangians are fine here
    j = data.jet if data is not None else jet(model, w)
    lhs = _el_matrix(j.hess_vv, n, k) @ coeffs.accel.reshape(-1) - _el_rhs(j, w.v)
    if lam is not None and model.m:
        eta = data.package.eta if data is not None else constraint_forms(model, w)
        lhs = lhs + np.einsum("abi,ab->i", eta, np.asarray(lam).reshape(model.m, k))
    return lhs


def el_defect(model: ModelSpec, w: FieldPoint, coeffs: KVectorCoefficients, data: PointData | None = None):
    """The covector ``sum_A iota(xi_A) omega^A - dE_L`` of length ``n + nk``."""
    d = _data(model, w, data)
    om = omega_stack(model, w, d.jet)
    X = coeffs.vectors(w)
    return np.einsum("an,anm->m", X, om.forms) - energy_differential(model, w, d.jet)


def off_span_norm(defect: np.ndarray, rows: np.ndarray) -> float:
    """Norm of the part of ``defect`` orthogonal to the row space of ``rows``."""
    if rows.size == 0:
        return float(np.linalg.norm(defect))
    coef = np.linalg.lstsq(rows.T, defect, rcond=None)[0]
    return float(np.linalg.norm(defect - rows.T @ coef))


def recover_multipliers(model: ModelSpec, w: FieldPoint, coeffs: KVectorCoefficients, data: PointData | None = None):
    """Least-squares multipliers explaining the defect: ``defect = lam^a_B eta^B_a``."""
    d = _data(model, w, data)
    if model.m == 0:
        return np.zeros((0, model.k))
    rows = d.package.eta_covectors()
    lam = np.linalg.lstsq(rows.T, el_defect(model, w, coeffs, d), rcond=None)[0]
    return lam.reshape(model.m, model.k)


def _null(a: np.ndarray, n: int) -> np.ndarray:
    if a.size == 0:
        return np.eye(n)
    return sla.null_space(a)


def dalembert_residual(model: ModelSpec, w: FieldPoint, coeffs: KVectorCoefficients, data: PointData | None = None, rng=None):
    """Contraction of the defect with complete lifts of virtual displacements.

    Virtual displacements span ``ker eta`` in ``T_q Q``; each is extended to a
    random linear vector field whose complete lift at ``w`` is
    ``(dq, J v)``.  Returns the largest absolute contraction.
    """
    n, k, m = model.n, model.k, model.m
    d = _data(model, w, data)
    defect = el_defect(model, w, coeffs, d)
    basis = _null(d.package.eta.reshape(m * k, n), n)
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    for col in basis.T:
        J = rng.normal(size=(n, n))
        lift = np.concatenate([col, (J @ w.v).T.reshape(-1)])
        worst = max(worst, abs(float(defect @ lift)))
    return worst


def restricted_residual(model: ModelSpec, w: FieldPoint, coeffs: KVectorCoefficients, data: PointData | None = None):
    """Largest contraction of the defect with an orthonormal basis of ``H = TM & D^v``."""
    d = _data(model, w, data)
    defect = el_defect(model, w, coeffs, d)
    H = distribution_subspaces(model, w, d.package)["H"]
    if H.d == 0:
        return 0.0
    return float(np.max(np.abs(defect @ H.basis)))
