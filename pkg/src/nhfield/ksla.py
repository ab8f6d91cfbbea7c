"""Linear algebra of k-symplectic vector spaces.

Subspaces are carried as orthonormal bases.  Every rank decision is made on
singular values with the threshold ``N * eps * sigma_max``; nothing is
inferred from dimension counts, since ``dim W + dim W^perp`` need not equal
``N`` for these structures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularHessianError
from .expr import compile_expr
from .geometry import constraint_forms, constraint_jacobian, constraint_package, jet, omega_stack

__all__ = [
    "INCLUSION_TOL",
    "Subspace",
    "KSymplecticSpace",
    "orthogonal",
    "intersection",
    "classify",
    "restrict",
    "structure_validity",
    "distribution_subspaces",
    "check_distribution_equivalence",
]

INCLUSION_TOL = 1e-10


def _threshold(s: np.ndarray, N: int) -> float:
    return N * np.finfo(float).eps * (s[0] if s.size else 0.0)


def _null_rows(rows: np.ndarray, N: int) -> np.ndarray:
    """Orthonormal basis of ``{x : rows @ x = 0}``."""
    if rows.size == 0:
        return np.eye(N)
    _, s, vt = np.linalg.svd(rows, full_matrices=True)
    if s.size == 0 or s[0] == 0:
        return np.eye(N)
    rank = int(np.sum(s > _threshold(s, N)))
    return vt[rank:].T.copy()


@dataclass(frozen=True)
class Subspace:
    basis: np.ndarray  # (N, d), orthonormal columns

    @classmethod
    def span(cls, vectors, N: int | None = None) -> "Subspace":
        """Orthonormal basis of the column span of ``vectors``."""
        a = np.asarray(vectors, dtype=float)
        if a.ndim == 1:
            a = a.reshape(-1, 1)
        N = a.shape[0] if N is None else N
        if a.size == 0:
            return cls(np.zeros((N, 0)))
        u, s, _ = np.linalg.svd(a, full_matrices=False)
        if s[0] == 0:
            return cls(np.zeros((N, 0)))
        rank = int(np.sum(s > _threshold(s, max(a.shape))))
        return cls(u[:, :rank].copy())

    @classmethod
    def zero(cls, N: int) -> "Subspace":
        return cls(np.zeros((N, 0)))

    @classmethod
    def full(cls, N: int) -> "Subspace":
        return cls(np.eye(N))

    @property
    def N(self) -> int:
        return self.basis.shape[0]

    @property
    def d(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def inclusion_residual(self, other: "Subspace") -> float:
        """How far ``self`` is from lying inside ``other`` (0 when it does)."""
        if self.d == 0:
            return 0.0
        r = self.basis - other.basis @ (other.basis.T @ self.basis)
        return float(np.max(np.linalg.norm(r, axis=0)))

    def within(self, other: "Subspace", tol: float = INCLUSION_TOL) -> bool:
        return self.inclusion_residual(other) < tol

    def distance(self, other: "Subspace") -> float:
        """Spectral norm of the difference of orthogonal projectors."""
        if self.d == 0 and other.d == 0:
            return 0.0
        return float(np.linalg.norm(self.projector() - other.projector(), 2))


@dataclass(frozen=True)
class KSymplecticSpace:
    forms: np.ndarray  # (k, N, N)
    V: Subspace

    def __post_init__(self):
        f = np.asarray(self.forms, dtype=float)
        if f.ndim == 2:
            f = f[None]
        object.__setattr__(self, "forms", f)
        if not isinstance(self.V, Subspace):
            object.__setattr__(self, "V", Subspace.span(self.V, f.shape[1]))

    @property
    def N(self) -> int:
        return self.forms.shape[1]

    @property
    def k(self) -> int:
        return self.forms.shape[0]


def orthogonal(space: KSymplecticSpace, W: Subspace) -> Subspace:
    """``{u : omega^A(u, w) = 0 for all w in W and all A}``."""
    if W.d == 0:
        return Subspace.full(space.N)
    rows = np.concatenate([(om @ W.basis).T for om in space.forms], axis=0)
    return Subspace(_null_rows(rows, space.N))


def intersection(a: Subspace, b: Subspace) -> Subspace:
    N = a.N
    rows = np.concatenate([np.eye(N) - a.projector(), np.eye(N) - b.projector()], axis=0)
    return Subspace(_null_rows(rows, N))


def classify(space: KSymplecticSpace, W: Subspace, tol: float = INCLUSION_TOL) -> dict:
    Wp = orthogonal(space, W)
    iso = W.within(Wp, tol)
    coiso = Wp.within(W, tol)
    return {
        "dim": W.d,
        "dim_orthogonal": Wp.d,
        "isotropic": iso,
        "coisotropic": coiso,
        "lagrangian": iso and coiso,
        "ksymplectic": intersection(W, Wp).d == 0,
    }


def restrict(space: KSymplecticSpace, W: Subspace) -> KSymplecticSpace:
    """The forms pulled back to ``W`` (in its basis), with ``V`` replaced by ``V & W``."""
    B = W.basis
    forms = np.array([B.T @ om @ B for om in space.forms])
    VW = intersection(space.V, W)
    return KSymplecticSpace(forms, Subspace.span(B.T @ VW.basis, W.d))


def structure_validity(space: KSymplecticSpace, tol: float = 1e-12) -> dict:
    """Antisymmetry, vanishing on ``V x V`` and trivial common kernel."""
    f = space.forms
    scale = max(1.0, float(np.max(np.abs(f)))) if f.size else 1.0
    antisym = float(np.max(np.abs(f + f.transpose(0, 2, 1)))) if f.size else 0.0
    Vb = space.V.basis
    on_v = float(max((np.max(np.abs(Vb.T @ om @ Vb)) for om in f), default=0.0)) if Vb.size else 0.0
    kernel = orthogonal(space, Subspace.full(space.N))
    return {
        "antisymmetry": antisym,
        "vanishes_on_V": on_v,
        "kernel_dim": kernel.d,
        "valid": antisym <= tol * scale and on_v <= tol * scale and kernel.d == 0,
    }


# -- constraint subspaces of distribution models ---------------------------------


def _annihilator_rows(model, w, eta):
    """Rows ``phi_a`` in ``T*Q`` defining the distribution ``D``."""
    n = model.n
    if model.distribution is not None:
        x = w.flat()
        return np.array([[float(compile_expr(e, model.binding)(x)) for e in row] for row in model.distribution]).reshape(-1, n)
    return eta.reshape(-1, n)


def distribution_subspaces(model, w, package=None) -> dict:
    """``D^v`` (pulled-back annihilator), ``TM`` and ``H = TM & D^v`` at ``w``."""
    n, N = model.n, model.dim
    if package is None:
        _, dphi = constraint_jacobian(model, w)
        eta = constraint_forms(model, w, dphi)
    else:
        eta, dphi = package.eta, package.dphi
    ann = _annihilator_rows(model, w, eta)
    rows = np.zeros((ann.shape[0], N))
    rows[:, :n] = ann
    Dv = Subspace(_null_rows(rows, N))
    TM = Subspace(_null_rows(dphi, N))
    return {"Dv": Dv, "TM": TM, "H": intersection(Dv, TM)}


def check_distribution_equivalence(model, w, tol_compat: float = 1e-10) -> dict:
    """Coisotropy of ``D^v`` and the compatibility / k-symplectic ``H`` equivalence."""
    j = jet(model, w)
    space = KSymplecticSpace(omega_stack(model, w, j).forms, Subspace(np.eye(model.dim)[:, model.n :]))
    try:
        pk = constraint_package(model, w, j, tol_compat=tol_compat)
        compatible, condition, regular = pk.compatible, pk.condition, True
    except SingularHessianError as exc:
        # without an invertible Hessian the distribution Z_a does not exist
        pk, compatible, condition, regular = None, False, exc.condition, False
    subs = distribution_subspaces(model, w, pk)
    Dv, H = subs["Dv"], subs["H"]
    Dv_perp = orthogonal(space, Dv)
    H_perp = orthogonal(space, H)
    h_ks = intersection(H, H_perp).d == 0
    return {
        "regular": regular,
        "dim_Dv": Dv.d,
        "dim_TM": subs["TM"].d,
        "dim_H": H.d,
        "coisotropy_residual": Dv_perp.inclusion_residual(Dv),
        "Dv_coisotropic": Dv_perp.within(Dv),
        "H_ksymplectic": h_ks,
        "compatible": compatible,
        "compat_condition": condition,
        "agree": h_ks == compatible,
    }
