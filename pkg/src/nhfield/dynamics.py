"""Time integration of the constrained field equations.

``integrate_k1`` treats k = 1 models (nonholonomic mechanics) as a
semi-explicit DAE: every RK4 stage solves the augmented system for the
acceleration and the multipliers, and velocities are projected back onto
``Phi = 0`` after each step.

``integrate_1plus1`` handles (1+1)-dimensional theories of the rod type with
direction 1 as time and direction 2 as arc length.  Space is discretized by
finite differences and the algebraic fields are eliminated, which leaves a
5 x 5 linear system per node for ``(x'', y'', theta'', lambda, mu)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import (
    ConfigError,
    EvaluationDomainError,
    FeasibilityError,
    GridTooCoarseError,
    IntegrationError,
    SingularHessianError,
    UnsupportedModelError,
)
from .expr import VariableBinding, compile_expr, parse
from .geometry import TOL_COMPAT, TOL_REGULAR, batch_gradient, rcond
from .model import ModelSpec, builtin
from .symbolic import stage_tape

__all__ = [
    "SimConfig",
    "FieldSolution",
    "integrate_k1",
    "integrate_1plus1",
    "simulate",
    "write_solution",
    "read_solution",
    "solution_header",
    "diff_matrices",
    "BOUNDARY_CONDITIONS",
]

BOUNDARY_CONDITIONS = ("free", "clamped", "periodic")


@dataclass(frozen=True)
class SimConfig:
    t_end: float
    h: float
    q0: tuple = ()
    v0: tuple = ()
    M: int = 64
    length: float = 1.0
    bc: str = "free"
    profiles: Mapping[str, object] = field(default_factory=dict)
    projection_every: int = 1
    drift_tol: float = 1e-8
    tol_feas: float = 1e-8
    tol_compat: float = TOL_COMPAT
    store_every: int = 1

    def __post_init__(self):
        def num(name, positive=True):
            val = getattr(self, name)
            if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
                raise ConfigError(name, "must be a finite number")
            if positive and val <= 0:
                raise ConfigError(name, f"must be positive, got {val}")

        for name in ("t_end", "h", "length", "drift_tol", "tol_feas", "tol_compat"):
            num(name)
        for name in ("M", "projection_every", "store_every"):
            val = getattr(self, name)
            if isinstance(val, bool) or not isinstance(val, int) or val < (0 if name == "projection_every" else 1):
                raise ConfigError(name, f"must be a {'non-negative' if name == 'projection_every' else 'positive'} integer")
        if self.M < 5:
            raise ConfigError("M", f"needs at least 5 nodes for the stencils, got {self.M}")
        if self.bc not in BOUNDARY_CONDITIONS:
            raise ConfigError("bc", f"must be one of {BOUNDARY_CONDITIONS}, got {self.bc!r}")
        if self.h > self.t_end:
            raise ConfigError("h", "step exceeds t_end")

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.h))

    @classmethod
    def from_dict(cls, d: Mapping) -> "SimConfig":
        if not isinstance(d, Mapping):
            raise ConfigError("config", "must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(sorted(extra)[0], "unknown field")
        for req in ("t_end", "h"):
            if req not in d:
                raise ConfigError(req, "missing")
        kw = dict(d)
        for name in ("q0", "v0"):
            if name in kw:
                try:
                    kw[name] = tuple(float(x) for x in kw[name])
                except (TypeError, ValueError):
                    raise ConfigError(name, "must be an array of numbers") from None
        for name in ("t_end", "h", "length", "drift_tol", "tol_feas", "tol_compat"):
            if name in kw and isinstance(kw[name], int) and not isinstance(kw[name], bool):
                kw[name] = float(kw[name])
        if "profiles" in kw and not isinstance(kw["profiles"], Mapping):
            raise ConfigError("profiles", "must be an object")
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "SimConfig":
        import json

        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from exc
        return cls.from_dict(data)


@dataclass
class FieldSolution:
    """A discretized field with velocities, multipliers and diagnostics.

    k = 1: ``q`` is ``(T, n)``, ``v`` is ``(T, n, 1)``, ``accel`` is
    ``(T, 1, n)`` and ``lam`` is ``(T, m, 1)``.
    k = 2: every array gains a node axis after time, ``s`` holds the nodes,
    ``accel`` stores the evolution accelerations only and ``energy`` is the
    integrated energy.
    """

    model_name: str
    k: int
    t: np.ndarray
    q: np.ndarray
    v: np.ndarray
    accel: np.ndarray
    lam: np.ndarray
    energy: np.ndarray
    phi_max: np.ndarray
    s: np.ndarray | None = None
    energy_density: np.ndarray | None = None
    time_energy: np.ndarray | None = None
    bc: str | None = None
    status: str = "ok"
    message: str = ""

    @property
    def steps(self) -> int:
        return max(len(self.t) - 1, 0)

    def truncated(self, count: int) -> "FieldSolution":
        cut = lambda a: None if a is None else a[:count]  # noqa: E731
        return replace(
            self,
            t=self.t[:count],
            q=self.q[:count],
            v=self.v[:count],
            accel=self.accel[:count],
            lam=self.lam[:count],
            energy=self.energy[:count],
            phi_max=self.phi_max[:count],
            energy_density=cut(self.energy_density),
            time_energy=cut(self.time_energy),
        )


# -- k = 1 ---------------------------------------------------------------------------


class _K1System:
    """Lean stage evaluation: compiled symbolic derivatives and one linear solve."""

    def __init__(self, model: ModelSpec, tol_compat: float):
        self.model = model
        self.n, self.m = model.n, model.m
        self.tol_compat = tol_compat
        self.explicit = model.form_mode == "explicit"
        self.tape = stage_tape(model)

    def forms(self, vals, dphi):
        if self.explicit:
            return np.array([[float(f(vals)) for f in row[0]] for row in self.model.eta_fns])
        return dphi[:, self.n :]

    def evaluate(self, q, v, check=False):
        """Acceleration, multipliers, energy and constraint values at ``(q, v)``."""
        n, m = self.n, self.m
        x = np.concatenate([q, v])
        L, dLdq, dLdv, hqv, H, phi, dphi = self.tape.evaluate(x)
        energy = float(v @ dLdv) - L
        rhs = dLdq - hqv @ v
        if check:
            if not math.isfinite(energy + rhs.sum() + H.sum() + dphi.sum()):
                raise EvaluationDomainError("non-finite derivatives", 0.0)
            c = rcond(H)
            if c <= TOL_REGULAR:
                raise SingularHessianError("velocity Hessian became singular", c)
        if m == 0:
            return np.linalg.solve(H, rhs), np.zeros(0), energy, phi
        eta = self.forms(x.tolist(), dphi)
        dv = dphi[:, n:]
        if check:
            Z = np.linalg.solve(H, eta.T)
            c = rcond(dv @ Z)
            if c <= self.tol_compat:
                raise SingularHessianError("compatibility matrix became singular", c)
        A = np.zeros((n + m, n + m))
        A[:n, :n] = H
        A[:n, n:] = eta.T
        A[n:, :n] = dv
        b = np.empty(n + m)
        b[:n] = rhs
        b[n:] = -dphi[:, :n] @ v
        sol = np.linalg.solve(A, b)
        return sol[:n], sol[n:], energy, phi

    def project_velocity(self, q, v, iters=8):
        """Minimum-norm Newton correction of ``v`` onto ``Phi(q, .) = 0``."""
        if self.m == 0:
            return v
        n = self.n
        for _ in range(iters):
            vals = np.concatenate([q, v]).tolist()
            phi = self.tape.phi(vals)
            if np.max(np.abs(phi)) <= 1e-15 * (1.0 + np.max(np.abs(v))):
                break
            J = self.tape.dphi(vals)[:, n:]
            v = v - J.T @ np.linalg.solve(J @ J.T, phi)
        return v


def integrate_k1(model: ModelSpec, config: SimConfig) -> FieldSolution:
    if model.k != 1:
        raise UnsupportedModelError(f"integrate_k1 needs k = 1, model {model.name!r} has k = {model.k}")
    n, m = model.n, model.m
    q = np.asarray(config.q0, dtype=float)
    v = np.asarray(config.v0, dtype=float)
    if q.shape != (n,) or v.shape != (n,):
        raise ConfigError("q0" if q.shape != (n,) else "v0", f"needs {n} entries")
    sys_ = _K1System(model, config.tol_compat)
    x0 = np.concatenate([q, v])
    phi0 = np.array([f(x0) for f in model.Phi], dtype=float)
    if m and np.max(np.abs(phi0)) > config.tol_feas:
        raise FeasibilityError(f"initial data violates the constraints: max|Phi| = {np.max(np.abs(phi0)):.3e}")

    steps, h = config.steps, config.h
    nstore = steps // config.store_every + 1
    T = np.zeros(nstore)
    Qs = np.zeros((nstore, n))
    Vs = np.zeros((nstore, n))
    As = np.zeros((nstore, n))
    Ls = np.zeros((nstore, m))
    Es = np.zeros(nstore)
    Ps = np.zeros(nstore)

    def partial(count, status, message):
        return FieldSolution(
            model.name, 1, T[:count], Qs[:count], Vs[:count, :, None], As[:count, None, :],
            Ls[:count, :, None], Es[:count], Ps[:count], time_energy=Es[:count], status=status, message=message,
        )

    stored = 0
    t = 0.0
    for i in range(steps + 1):
        t = i * h
        try:
            a1, lam, energy, phi = sys_.evaluate(q, v, check=True)
        except (SingularHessianError, EvaluationDomainError, np.linalg.LinAlgError) as exc:
            raise IntegrationError(f"aborted at t={t:.6g}: {exc}", t, partial(stored, "aborted", str(exc))) from exc
        pmax = float(np.max(np.abs(phi))) if m else 0.0
        if i % config.store_every == 0:
            T[stored], Qs[stored], Vs[stored], As[stored] = t, q, v, a1
            Ls[stored], Es[stored], Ps[stored] = lam, energy, pmax
            stored += 1
        if pmax > config.drift_tol:
            raise IntegrationError(
                f"constraint drift {pmax:.3e} exceeds {config.drift_tol:.1e} at t={t:.6g}", t, partial(stored, "drift", "drift")
            )
        if i == steps:
            break
        try:
            a2 = sys_.evaluate(q + 0.5 * h * v, v + 0.5 * h * a1)[0]
            v2 = v + 0.5 * h * a1
            v3 = v + 0.5 * h * a2
            a3 = sys_.evaluate(q + 0.5 * h * v2, v3)[0]
            v4 = v + h * a3
            a4 = sys_.evaluate(q + h * v3, v4)[0]
        except (EvaluationDomainError, np.linalg.LinAlgError) as exc:
            raise IntegrationError(f"aborted at t={t:.6g}: {exc}", t, partial(stored, "aborted", str(exc))) from exc
        q = q + h / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4)
        v = v + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        if config.projection_every and (i + 1) % config.projection_every == 0:
            v = sys_.project_velocity(q, v)
    return partial(stored, "ok", "")


# -- (1+1) rod ----------------------------------------------------------------------


def diff_matrices(M: int, ds: float, bc: str):
    """Second-order first and second derivative matrices on ``M`` nodes.

    Periodic grids wrap; otherwise the end rows use one-sided second-order
    stencils.
    """
    if M < 5:
        raise GridTooCoarseError(f"need at least 5 nodes, got {M}")
    D1 = np.zeros((M, M))
    D2 = np.zeros((M, M))
    for i in range(M):
        if bc == "periodic" or 0 < i < M - 1:
            D1[i, (i - 1) % M] -= 0.5
            D1[i, (i + 1) % M] += 0.5
            D2[i, (i - 1) % M] += 1.0
            D2[i, i] -= 2.0
            D2[i, (i + 1) % M] += 1.0
    if bc != "periodic":
        D1[0, :3] = [-1.5, 2.0, -0.5]
        D1[-1, -3:] = [0.5, -2.0, 1.5]
        D2[0, :4] = [2.0, -5.0, 4.0, -1.0]
        D2[-1, -4:] = [-1.0, 4.0, -5.0, 2.0]
    return D1 / ds, D2 / ds**2


_ROD_PARAMS = ("rho", "alpha", "beta", "K", "R")
# clamping the two outer nodes at each end fixes position and slope; holding
# only the end node leaves the fourth-order operator with growing modes
_CLAMPED = [0, 1, -2, -1]


def _check_rod_model(model: ModelSpec, samples: int = 6, seed: int = 7):
    """Accept only models that agree numerically with the rod template."""
    if model.k != 2 or model.n != 7 or model.m != 2:
        raise UnsupportedModelError(
            f"the (1+1) integrator handles rod-type models (n=7, k=2, m=2); {model.name!r} has "
            f"n={model.n}, k={model.k}, m={model.m}"
        )
    missing = [p for p in _ROD_PARAMS if p not in model.parameters]
    if missing:
        raise UnsupportedModelError(f"rod-type model needs parameters {missing}")
    if model.form_mode != "explicit":
        raise UnsupportedModelError("the rod integrator implements the explicit reaction forms, not Chetaev forms")
    ref = builtin("cosserat", **{p: model.parameters[p] for p in _ROD_PARAMS})
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        x = rng.normal(size=model.dim)
        same = abs(model.L(x) - ref.L(x)) <= 1e-10 * (1 + abs(ref.L(x)))
        same &= all(abs(f(x) - g(x)) <= 1e-10 for f, g in zip(model.Phi, ref.Phi))
        for ra, rb in zip(model.eta_fns, ref.eta_fns):
            for ba, bb in zip(ra, rb):
                same &= all(abs(f(x) - g(x)) <= 1e-10 for f, g in zip(ba, bb))
        if not same:
            raise UnsupportedModelError(
                f"model {model.name!r} is not of rod type: its Lagrangian, constraints or forms differ from the template"
            )


def _profile(source, s, length, params, name):
    M = s.size
    if source is None:
        return None
    if isinstance(source, str):
        binding = VariableBinding({"s": 0}, {"pi": math.pi, "ell": length, **params})
        try:
            f = compile_expr(parse(source), binding)
        except Exception as exc:
            raise ConfigError(f"profiles.{name}", str(exc)) from exc
        return np.broadcast_to(np.asarray(f([s]), dtype=float), (M,)).copy()
    if isinstance(source, (int, float)) and not isinstance(source, bool):
        return np.full(M, float(source))
    arr = np.asarray(source, dtype=float)
    if arr.shape != (M,):
        raise ConfigError(f"profiles.{name}", f"needs {M} values, got shape {arr.shape}")
    return arr


def _natural_operators(M, ds, weights):
    """Fourth- and second-derivative operators with natural (free) ends.

    Both come from discrete energies, ``K/2 sum ds (x'')^2`` over interior
    nodes and ``beta/2 sum ds (theta')^2`` over edges, divided by the nodal
    weights.  The resulting semi-discrete system conserves energy, whereas
    one-sided extrapolation at the ends feeds energy into the rod.
    """
    S = np.zeros((M - 2, M))
    for j in range(M - 2):
        S[j, j : j + 3] = [1.0, -2.0, 1.0]
    S /= ds**2
    F = (np.eye(M, k=1) - np.eye(M))[:-1] / ds
    winv = 1.0 / weights
    G = winv[:, None] * (ds * S.T @ S)
    lap = -winv[:, None] * (ds * F.T @ F)
    return G, lap


class _Rod:
    def __init__(self, model: ModelSpec, config: SimConfig):
        p = model.parameters
        self.rho, self.alpha, self.beta, self.K, self.R = (float(p[k]) for k in _ROD_PARAMS)
        self.M, self.bc = config.M, config.bc
        if config.bc == "periodic":
            self.ds = config.length / config.M
            self.s = np.arange(config.M) * self.ds
        else:
            self.ds = config.length / (config.M - 1)
            self.s = np.linspace(0.0, config.length, config.M)
        self.D1, self.D2 = diff_matrices(self.M, self.ds, self.bc)
        self.D3 = self.D2 @ self.D1  # phi^6 = -K D3 x
        if config.bc == "periodic":
            self.weights = np.full(self.M, self.ds)
            # d/ds phi^6 = -K G x, composed exactly as the fields are eliminated
            self.G = self.D1 @ self.D3
            self.lap = self.D2
        else:
            self.weights = np.full(self.M, self.ds)
            self.weights[[0, -1]] *= 0.5
            self.G, self.lap = _natural_operators(self.M, self.ds, self.weights)

    def accelerations(self, pos, vel):
        """Node-wise solve for ``(x'', y'', theta'', lambda, mu)``."""
        x, y, th = pos
        xd, yd, thd = vel
        R = self.R
        xs, ys = self.D1 @ x, self.D1 @ y
        M = self.M
        A = np.zeros((M, 5, 5))
        A[:, 0, 0] = self.rho
        A[:, 0, 3] = -1.0
        A[:, 1, 1] = self.rho
        A[:, 1, 4] = -1.0
        A[:, 2, 2] = self.alpha
        A[:, 2, 3] = -R * ys
        A[:, 2, 4] = R * xs
        A[:, 3, 0] = 1.0
        A[:, 3, 2] = R * ys
        A[:, 4, 1] = 1.0
        A[:, 4, 2] = -R * xs
        b = np.empty((M, 5))
        b[:, 0] = -self.K * (self.G @ x)
        b[:, 1] = -self.K * (self.G @ y)
        b[:, 2] = self.beta * (self.lap @ th)
        b[:, 3] = -R * thd * (self.D1 @ yd)
        b[:, 4] = R * thd * (self.D1 @ xd)
        sol = np.linalg.solve(A, b[..., None])[..., 0]
        acc = sol[:, :3].T.copy()
        mult = sol[:, 3:].T.copy()
        if self.bc == "clamped":
            acc[:, _CLAMPED] = 0.0
        return acc, mult

    def project(self, pos, vel):
        """Minimum-norm node-wise correction onto the velocity constraints."""
        R = self.R
        xs, ys = self.D1 @ pos[0], self.D1 @ pos[1]
        J = np.zeros((self.M, 2, 3))
        J[:, 0, 0] = 1.0
        J[:, 0, 2] = R * ys
        J[:, 1, 1] = 1.0
        J[:, 1, 2] = -R * xs
        u = vel.T[..., None]  # (M, 3, 1)
        r = J @ u
        JJt = J @ J.transpose(0, 2, 1)
        corr = J.transpose(0, 2, 1) @ np.linalg.solve(JJt, r)
        out = (u - corr)[..., 0].T.copy()
        if self.bc == "clamped":
            out[:, _CLAMPED] = 0.0
        return out

    def residual(self, pos, vel):
        R = self.R
        xs, ys = self.D1 @ pos[0], self.D1 @ pos[1]
        return np.stack([vel[0] + R * vel[2] * ys, vel[1] - R * vel[2] * xs])

    def fields(self, pos, vel):
        """All seven fields with their time (block 1) and space (block 2) derivatives."""
        x, y, th = pos
        K = self.K
        q = np.stack([x, y, th, self.D1 @ x, self.D1 @ y, -K * (self.D3 @ x), -K * (self.D3 @ y)], axis=-1)
        xd, yd, thd = vel
        qt = np.stack([xd, yd, thd, self.D1 @ xd, self.D1 @ yd, -K * (self.D3 @ xd), -K * (self.D3 @ yd)], axis=-1)
        qs = (self.D1 @ q)
        return q, np.stack([qt, qs], axis=-1)


def integrate_1plus1(model: ModelSpec, config: SimConfig) -> FieldSolution:
    _check_rod_model(model)
    rod = _Rod(model, config)
    s, M = rod.s, rod.M
    prof = dict(config.profiles)
    unknown = set(prof) - {"q1", "q2", "q3", "v1", "v2", "v3"}
    if unknown:
        raise ConfigError(f"profiles.{sorted(unknown)[0]}", "unknown profile")
    params = dict(model.parameters)
    x = _profile(prof.get("q1", "s"), s, config.length, params, "q1")
    y = _profile(prof.get("q2", 0.0), s, config.length, params, "q2")
    th = _profile(prof.get("q3", 0.0), s, config.length, params, "q3")
    thd = _profile(prof.get("v3", 0.0), s, config.length, params, "v3")
    pos = np.stack([x, y, th])
    if "v1" not in prof and "v2" not in prof:
        # the constraints fix the centreline velocity from the spin
        xd = -rod.R * thd * (rod.D1 @ y)
        yd = rod.R * thd * (rod.D1 @ x)
    else:
        xd = _profile(prof.get("v1", 0.0), s, config.length, params, "v1")
        yd = _profile(prof.get("v2", 0.0), s, config.length, params, "v2")
    vel = np.stack([xd, yd, thd])
    if config.bc == "clamped":
        vel[:, _CLAMPED] = 0.0
    res0 = np.max(np.abs(rod.residual(pos, vel)))
    if res0 > config.tol_feas:
        raise FeasibilityError(f"initial velocities violate the constraints: max|Phi| = {res0:.3e}")

    steps, h = config.steps, config.h
    nstore = steps // config.store_every + 1
    T = np.zeros(nstore)
    P = np.zeros((nstore, 3, M))
    V = np.zeros((nstore, 3, M))
    Acc = np.zeros((nstore, 3, M))
    Mult = np.zeros((nstore, 2, M))
    Pmax = np.zeros(nstore)
    stored = 0

    def finish(count, status, message):
        return _rod_solution(model, rod, T[:count], P[:count], V[:count], Acc[:count], Mult[:count], Pmax[:count], status, message)

    for i in range(steps + 1):
        t = i * h
        try:
            a1, mult = rod.accelerations(pos, vel)
        except np.linalg.LinAlgError as exc:
            raise IntegrationError(f"singular node system at t={t:.6g}", t, finish(stored, "aborted", str(exc))) from exc
        pmax = float(np.max(np.abs(rod.residual(pos, vel))))
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
            raise IntegrationError(f"non-finite state at t={t:.6g}", t, finish(stored, "aborted", "non-finite"))
        if i % config.store_every == 0:
            T[stored], P[stored], V[stored], Acc[stored], Mult[stored], Pmax[stored] = t, pos, vel, a1, mult, pmax
            stored += 1
        if pmax > config.drift_tol:
            raise IntegrationError(
                f"constraint drift {pmax:.3e} exceeds {config.drift_tol:.1e} at t={t:.6g}", t, finish(stored, "drift", "drift")
            )
        if i == steps:
            break
        v2 = vel + 0.5 * h * a1
        a2 = rod.accelerations(pos + 0.5 * h * vel, v2)[0]
        v3 = vel + 0.5 * h * a2
        a3 = rod.accelerations(pos + 0.5 * h * v2, v3)[0]
        v4 = vel + h * a3
        a4 = rod.accelerations(pos + h * v3, v4)[0]
        pos = pos + h / 6.0 * (vel + 2.0 * v2 + 2.0 * v3 + v4)
        vel = vel + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        if config.projection_every and (i + 1) % config.projection_every == 0:
            vel = rod.project(pos, vel)
    return finish(stored, "ok", "")


def _rod_solution(model, rod, T, P, V, Acc, Mult, Pmax, status, message):
    count = len(T)
    M = rod.M
    q = np.zeros((count, M, 7))
    v = np.zeros((count, M, 7, 2))
    dens = np.zeros((count, M))
    tdens = np.zeros((count, M))
    for i in range(count):
        q[i], v[i] = rod.fields(P[i], V[i])
    if count:
        X = np.concatenate([q.reshape(-1, 7), v.transpose(0, 1, 3, 2).reshape(-1, 14)], axis=1)
        Lval, grad = batch_gradient(model.L, X)
        dens = (np.einsum("pj,pj->p", X[:, 7:], grad[:, 7:]) - Lval).reshape(count, M)
        # the time-direction energy v_1 . dL/dv_1 - L is the conserved one
        tdens = (np.einsum("pj,pj->p", X[:, 7:14], grad[:, 7:14]) - Lval).reshape(count, M)
    lam = np.zeros((count, M, 2, 2))
    # generic multipliers: the reactions enter with the opposite sign, direction 1 only
    lam[:, :, 0, 0] = -Mult[:, 0, :]
    lam[:, :, 1, 0] = -Mult[:, 1, :]
    return FieldSolution(
        model.name,
        2,
        T,
        q,
        v,
        Acc.transpose(0, 2, 1).copy(),
        lam,
        dens @ rod.weights,
        Pmax,
        s=rod.s,
        energy_density=dens,
        time_energy=tdens @ rod.weights,
        bc=rod.bc,
        status=status,
        message=message,
    )


def simulate(model: ModelSpec, config: SimConfig) -> FieldSolution:
    if model.k == 1:
        return integrate_k1(model, config)
    if model.k == 2:
        return integrate_1plus1(model, config)
    raise UnsupportedModelError(f"integration for k={model.k} is not supported")


# -- CSV -----------------------------------------------------------------------------


def solution_header(n: int, k: int, m: int) -> list[str]:
    qs = [f"q{i + 1}" for i in range(n)]
    vs = [f"v{i + 1}_{A + 1}" for A in range(k) for i in range(n)]
    if k == 1:
        return ["t", *qs, *vs, *[f"lambda_{a + 1}" for a in range(m)], "E_L", "phi_max"]
    lams = [f"lambda_{a + 1}_{B + 1}" for B in range(k) for a in range(m)]
    return ["t", "s", *qs, *vs, *lams, "E_L", "phi_max"]


def _fmt(x) -> str:
    return "%.17g" % float(x)


def write_solution(sol: FieldSolution, path, m: int | None = None) -> None:
    """Write ``sol`` as CSV (LF line ends, %.17g numbers, fixed column order)."""
    n = sol.q.shape[-1]
    m = sol.lam.shape[-2] if m is None else m
    header = solution_header(n, sol.k, m)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        if sol.k == 1:
            for i in range(len(sol.t)):
                row = [sol.t[i], *sol.q[i], *sol.v[i].T.reshape(-1), *sol.lam[i, :, 0], sol.energy[i], sol.phi_max[i]]
                w.writerow([_fmt(x) for x in row])
        else:
            for i in range(len(sol.t)):
                for a in range(len(sol.s)):
                    vv = sol.v[i, a].T.reshape(-1)
                    ll = sol.lam[i, a].T.reshape(-1)
                    row = [sol.t[i], sol.s[a], *sol.q[i, a], *vv, *ll, sol.energy_density[i, a], sol.phi_max[i]]
                    w.writerow([_fmt(x) for x in row])


def read_solution(path, model: ModelSpec) -> FieldSolution:
    """Read a CSV written by :func:`write_solution` back into a solution."""
    n, k, m = model.n, model.k, model.m
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError("solution", f"{path} is empty")
    header = rows[0]
    expected = solution_header(n, k, m)
    if header != expected:
        raise ConfigError("solution", f"{path} header does not match model {model.name!r}")
    data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))
    if k == 1:
        t = data[:, 0]
        q = data[:, 1 : 1 + n]
        v = data[:, 1 + n : 1 + 2 * n][:, :, None]
        lam = data[:, 1 + 2 * n : 1 + 2 * n + m][:, :, None]
        return FieldSolution(model.name, 1, t, q, v, np.full((len(t), 1, n), np.nan), lam, data[:, -2], data[:, -1])
    s_vals = np.unique(data[:, 1])
    M = s_vals.size
    T = data.shape[0] // M if M else 0
    data = data.reshape(T, M, -1)
    t = data[:, 0, 0]
    q = data[:, :, 2 : 2 + n]
    v = data[:, :, 2 + n : 2 + n + n * k].reshape(T, M, k, n).transpose(0, 1, 3, 2)
    lam = data[:, :, 2 + n + n * k : 2 + n + n * k + m * k].reshape(T, M, k, m).transpose(0, 1, 3, 2)
    dens = data[:, :, -2]
    ds = s_vals[1] - s_vals[0] if M > 1 else 1.0
    return FieldSolution(
        model.name, k, t, q, v, np.full((T, M, 3), np.nan), lam, dens.sum(axis=1) * ds, data[:, 0, -1],
        s=data[0, :, 1], energy_density=dens,
    )
