"""Model definitions, model files, flattening conventions and builtin models.

Coordinates on the k-velocity bundle are ``(q^i, v^i_A)`` with 1-based names
``q<i>`` and ``v<i>_<A>``.  A point is flattened to a vector of length
``n + n*k``: the ``q`` block first, then the velocity blocks grouped by
direction, so ``v^i_A`` sits at 0-based slot ``n + A*n + i``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ExprSyntaxError, ModelSchemaError
from .expr import (
    FIELD_NAME,
    BinOp,
    Call,
    Const,
    Neg,
    Node,
    Var,
    VariableBinding,
    compile_expr,
    parse,
    to_source,
    variables,
)

__all__ = [
    "ModelSpec",
    "SymmetrySection",
    "FieldPoint",
    "pack",
    "unpack",
    "slot",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "build_linear_constraint_model",
    "build_distribution_model",
    "build_connection_constraint_model",
    "builtin",
    "BUILTINS",
]


def slot(n: int, i: int, A: int | None = None) -> int:
    """0-based slot of ``q^i`` (``A is None``) or ``v^i_A``; ``i``, ``A`` 0-based."""
    return i if A is None else n + A * n + i


def var_names(n: int, k: int) -> list[str]:
    names = [f"q{i + 1}" for i in range(n)]
    names += [f"v{i + 1}_{A + 1}" for A in range(k) for i in range(n)]
    return names


@dataclass(frozen=True)
class FieldPoint:
    """A point ``w_q = (q^i, v^i_A)``; ``v`` has shape ``(n, k)``."""

    q: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(-1)
        v = np.asarray(self.v, dtype=float)
        if v.ndim == 1:
            v = v.reshape(q.size, -1)
        if v.shape[0] != q.size:
            raise ValueError(f"velocity block has {v.shape[0]} rows, expected {q.size}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
            raise ValueError("field point has non-finite entries")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "v", v)

    @property
    def n(self):
        return self.q.size

    @property
    def k(self):
        return self.v.shape[1]

    def flat(self) -> np.ndarray:
        return pack(self.q, self.v)


def pack(q, v) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.concatenate([q, v.T.reshape(-1)])


def unpack(x, n: int) -> FieldPoint:
    x = np.asarray(x, dtype=float)
    k = (x.size - n) // n
    return FieldPoint(x[:n], x[n:].reshape(k, n).T)


@dataclass(frozen=True)
class SymmetrySection:
    """Components of a section ``xi~`` as functions of ``(q, v)``."""

    name: str
    components: tuple[Node, ...]


@dataclass(frozen=True, eq=False)
class ModelSpec:
    name: str
    n: int
    k: int
    lagrangian: Node
    constraints: tuple[Node, ...] = ()
    form_mode: str = "chetaev"
    forms: tuple | None = None  # m x k x n nested tuples of Node in explicit mode
    symmetries: tuple[SymmetrySection, ...] = ()
    parameters: Mapping[str, float] = field(default_factory=dict)
    # annihilator rows of D for models built as k copies of a distribution
    distribution: tuple | None = None

    @property
    def m(self) -> int:
        return len(self.constraints)

    @property
    def dim(self) -> int:
        return self.n + self.n * self.k

    @cached_property
    def names(self) -> list[str]:
        return var_names(self.n, self.k)

    @cached_property
    def binding(self) -> VariableBinding:
        return VariableBinding({s: j for j, s in enumerate(self.names)}, dict(self.parameters))

    @cached_property
    def L(self):
        return compile_expr(self.lagrangian, self.binding)

    @cached_property
    def Phi(self):
        return [compile_expr(c, self.binding) for c in self.constraints]

    @cached_property
    def eta_fns(self):
        if self.form_mode != "explicit":
            return None
        return [[[compile_expr(e, self.binding) for e in blk] for blk in row] for row in self.forms]

    @cached_property
    def section_fns(self) -> dict:
        return {s.name: [compile_expr(c, self.binding) for c in s.components] for s in self.symmetries}

    def section(self, name: str) -> SymmetrySection:
        for s in self.symmetries:
            if s.name == name:
                return s
        raise KeyError(f"model {self.name!r} has no symmetry section {name!r}")

    def point(self, q, v) -> FieldPoint:
        p = FieldPoint(q, v)
        if p.n != self.n or p.k != self.k:
            raise ValueError(f"point has shape (n={p.n}, k={p.k}), model needs (n={self.n}, k={self.k})")
        return p

    def with_parameters(self, **values) -> "ModelSpec":
        """A new model with some parameters replaced; models are never mutated."""
        unknown = set(values) - set(self.parameters)
        if unknown:
            raise ModelSchemaError(f"unknown parameters {sorted(unknown)}")
        d = model_to_dict(self)
        d["parameters"] = {**d["parameters"], **{k: float(v) for k, v in values.items()}}
        return model_from_dict(d)


# -- validation and file format -----------------------------------------------


def _check_names(node: Node, n: int, k: int, params, where: str):
    for name in sorted(variables(node)):
        if name in params:
            continue
        m = FIELD_NAME.match(name)
        if not m:
            raise ModelSchemaError(f"{where}: undeclared variable {name!r}")
        if m.group(1) is not None:
            i, A = int(m.group(1)), 1
        else:
            i, A = int(m.group(2)), int(m.group(3))
        if not (1 <= i <= n and 1 <= A <= k):
            raise ModelSchemaError(f"{where}: variable {name!r} out of range for n={n}, k={k}")


def _parse_at(source, where):
    if isinstance(source, (int, float)) and not isinstance(source, bool):
        source = repr(float(source))
    if not isinstance(source, str):
        raise ModelSchemaError(f"{where}: expected an expression string, got {type(source).__name__}")
    try:
        return parse(source)
    except ExprSyntaxError as exc:
        raise ModelSchemaError(f"{where}: {exc}") from exc


def _require(d, key, kind):
    if key not in d:
        raise ModelSchemaError(f"missing field {key!r}")
    val = d[key]
    if kind is int and (isinstance(val, bool) or not isinstance(val, int)):
        raise ModelSchemaError(f"field {key!r} must be an integer")
    if kind is not int and not isinstance(val, kind):
        raise ModelSchemaError(f"field {key!r} has wrong type {type(val).__name__}")
    return val


def model_from_dict(d: Mapping) -> ModelSpec:
    """Build and validate a model from the JSON object form of a model file."""
    if not isinstance(d, Mapping):
        raise ModelSchemaError("model must be a JSON object")
    name = _require(d, "name", str)
    n = _require(d, "n", int)
    k = _require(d, "k", int)
    if n < 1 or k < 1:
        raise ModelSchemaError("n and k must be positive")
    params = d.get("parameters", {}) or {}
    if not isinstance(params, Mapping):
        raise ModelSchemaError("field 'parameters' must be an object")
    for pname, pval in params.items():
        if FIELD_NAME.match(pname):
            raise ModelSchemaError(f"parameter {pname!r} shadows a field variable")
        if isinstance(pval, bool) or not isinstance(pval, (int, float)):
            raise ModelSchemaError(f"parameter {pname!r} must be a number")
    params = {p: float(v) for p, v in params.items()}

    lag = _parse_at(_require(d, "lagrangian", str), "lagrangian")
    _check_names(lag, n, k, params, "lagrangian")

    raw_cons = d.get("constraints", []) or []
    if not isinstance(raw_cons, list):
        raise ModelSchemaError("field 'constraints' must be an array")
    cons = []
    for a, src in enumerate(raw_cons):
        node = _parse_at(src, f"constraint {a + 1}")
        _check_names(node, n, k, params, f"constraint {a + 1}")
        cons.append(node)
    m = len(cons)
    if m >= n * k:
        raise ModelSchemaError(f"m={m} constraints must be fewer than n*k={n * k}")

    cf = d.get("constraint_forms", {"mode": "chetaev"}) or {"mode": "chetaev"}
    mode = cf.get("mode") if isinstance(cf, Mapping) else None
    forms = None
    if mode == "explicit":
        rows = cf.get("forms")
        if not isinstance(rows, list) or len(rows) != m:
            got = len(rows) if isinstance(rows, list) else "none"
            raise ModelSchemaError(f"explicit forms: expected {m} rows, got {got}")
        forms = []
        for a, row in enumerate(rows):
            where = f"constraint_forms row {a + 1}"
            if not isinstance(row, list) or len(row) != k:
                raise ModelSchemaError(f"{where}: expected {k} blocks")
            blocks = []
            for A, blk in enumerate(row):
                if not isinstance(blk, list) or len(blk) != n:
                    raise ModelSchemaError(f"{where}, block {A + 1}: expected {n} entries")
                entries = []
                for i, src in enumerate(blk):
                    node = _parse_at(src, f"{where}, block {A + 1}, entry {i + 1}")
                    _check_names(node, n, k, params, where)
                    entries.append(node)
                blocks.append(tuple(entries))
            forms.append(tuple(blocks))
        forms = tuple(forms)
    elif mode != "chetaev":
        raise ModelSchemaError(f"constraint_forms.mode must be 'chetaev' or 'explicit', got {mode!r}")

    syms = []
    for s in d.get("symmetries", []) or []:
        if not isinstance(s, Mapping) or "name" not in s or "components" not in s:
            raise ModelSchemaError("each symmetry needs 'name' and 'components'")
        comps = s["components"]
        if not isinstance(comps, list) or len(comps) != n:
            raise ModelSchemaError(f"symmetry {s['name']!r}: expected {n} components")
        nodes = []
        for i, src in enumerate(comps):
            node = _parse_at(src, f"symmetry {s['name']!r} component {i + 1}")
            _check_names(node, n, k, params, f"symmetry {s['name']!r}")
            nodes.append(node)
        syms.append(SymmetrySection(str(s["name"]), tuple(nodes)))

    dist = d.get("distribution")
    if dist is not None:
        if not isinstance(dist, list) or any(not isinstance(r, list) or len(r) != n for r in dist):
            raise ModelSchemaError(f"distribution rows must each have {n} entries")
        dist = tuple(tuple(_parse_at(e, "distribution") for e in row) for row in dist)
        for row in dist:
            for node in row:
                _check_names(node, n, 1, params, "distribution")

    return ModelSpec(
        name=name,
        n=n,
        k=k,
        lagrangian=lag,
        constraints=tuple(cons),
        form_mode=mode,
        forms=forms,
        symmetries=tuple(syms),
        parameters=params,
        distribution=dist,
    )


def model_to_dict(model: ModelSpec) -> dict:
    d = {
        "name": model.name,
        "n": model.n,
        "k": model.k,
        "parameters": dict(model.parameters),
        "lagrangian": to_source(model.lagrangian),
        "constraints": [to_source(c) for c in model.constraints],
        "constraint_forms": {"mode": model.form_mode},
        "symmetries": [
            {"name": s.name, "components": [to_source(c) for c in s.components]} for s in model.symmetries
        ],
    }
    if model.form_mode == "explicit":
        d["constraint_forms"]["forms"] = [[[to_source(e) for e in blk] for blk in row] for row in model.forms]
    if model.distribution is not None:
        d["distribution"] = [[to_source(e) for e in row] for row in model.distribution]
    return d


def load_model(path) -> ModelSpec:
    """Load a JSON model file, or a builtin when ``path`` names one."""
    p = Path(path)
    if not p.exists() and str(path) in BUILTINS:
        return builtin(str(path))
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelSchemaError(f"cannot read model file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelSchemaError(f"{path}: invalid JSON: {exc}") from exc
    return model_from_dict(data)


# -- builders ------------------------------------------------------------------


def _as_node(x) -> Node:
    if isinstance(x, (Const, Var, Neg, BinOp, Call)):
        return x
    if isinstance(x, str):
        return parse(x)
    return Const(float(x))


def _is_zero(node):
    return isinstance(node, Const) and node.value == 0.0


def _linear_combination(coeffs: Sequence[Node], names: Sequence[str]) -> Node:
    """Sum of ``coeff * var`` skipping zero coefficients; ``0`` when all vanish."""
    acc = None
    for c, name in zip(coeffs, names):
        if _is_zero(c):
            continue
        negative = isinstance(c, Neg) or (isinstance(c, Const) and c.value < 0)
        mag = c.operand if isinstance(c, Neg) else (Const(-c.value) if negative else c)
        term = Var(name) if (isinstance(mag, Const) and mag.value == 1.0) else BinOp("*", mag, Var(name))
        if acc is None:
            acc = Neg(term) if negative else term
        else:
            acc = BinOp("-" if negative else "+", acc, term)
    return Const(0.0) if acc is None else acc


def _base_dict(base: ModelSpec, name: str | None):
    d = model_to_dict(base)
    if d["constraints"]:
        raise ModelSchemaError("base model must be unconstrained")
    if name:
        d["name"] = name
    return d


def build_linear_constraint_model(base: ModelSpec, mu, name: str | None = None) -> ModelSpec:
    """Constraints ``Phi_a = sum_B (mu^B_a)_i(q) v^i_B`` in Chetaev mode.

    ``mu`` is an ``m x k x n`` nested sequence of numbers or expressions in ``q``.
    """
    n, k = base.n, base.k
    try:
        arr = [[list(blk) for blk in row] for row in mu]
    except TypeError as exc:
        raise ModelSchemaError("mu must be an m x k x n table") from exc
    for a, row in enumerate(arr):
        if len(row) != k or any(len(blk) != n for blk in row):
            raise ModelSchemaError(f"mu row {a + 1}: expected {k} blocks of {n} entries")
    d = _base_dict(base, name)
    cons = []
    for row in arr:
        coeffs = [_as_node(row[B][i]) for B in range(k) for i in range(n)]
        names = [f"v{i + 1}_{B + 1}" for B in range(k) for i in range(n)]
        cons.append(to_source(_linear_combination(coeffs, names)))
    d["constraints"] = cons
    d["constraint_forms"] = {"mode": "chetaev"}
    return model_from_dict(d)


def build_distribution_model(base: ModelSpec, phi, name: str | None = None) -> ModelSpec:
    """``M = D + ... + D`` (k copies) for ``D^0 = span{phi_a}``.

    Yields the ``m*k`` constraints ``Phi^A_a = (phi_a)_i v^i_A``, ordered with
    ``a`` outer and ``A`` inner, and records ``phi`` for the subspace checks.
    """
    n, k = base.n, base.k
    rows = [list(r) for r in phi]
    for a, r in enumerate(rows):
        if len(r) != n:
            raise ModelSchemaError(f"phi row {a + 1}: expected {n} entries")
    mu = []
    for r in rows:
        for A in range(k):
            mu.append([[r[i] if B == A else 0.0 for i in range(n)] for B in range(k)])
    built = build_linear_constraint_model(base, mu, name)
    d = model_to_dict(built)
    d["distribution"] = [[to_source(_as_node(e)) for e in r] for r in rows]
    return model_from_dict(d)


def build_connection_constraint_model(
    base: ModelSpec, christoffel, fibre: Sequence[int] | None = None, name: str | None = None
) -> ModelSpec:
    """Horizontal k-velocities of a connection: ``v^a_A + Gamma^a_b(q) v^b_A = 0``.

    ``fibre`` lists the 1-based fibre coordinates (default: the last ``m``);
    ``christoffel`` is ``m x (n-m)`` with columns ordered like the base coordinates.
    """
    n = base.n
    gam = [list(r) for r in christoffel]
    m = len(gam)
    if fibre is None:
        fibre = list(range(n - m + 1, n + 1))
    fibre = list(fibre)
    if len(fibre) != m or not all(1 <= f <= n for f in fibre):
        raise ModelSchemaError("fibre coordinates do not match the Christoffel table")
    basec = [i for i in range(1, n + 1) if i not in fibre]
    for a, r in enumerate(gam):
        if len(r) != len(basec):
            raise ModelSchemaError(f"Christoffel row {a + 1}: expected {len(basec)} entries")
    phi = []
    for a, r in enumerate(gam):
        row = [0.0] * n
        row[fibre[a] - 1] = 1.0
        for b, g in zip(basec, r):
            row[b - 1] = g
        phi.append(row)
    # fibre velocity first, then the connection terms
    k = base.k
    d = _base_dict(base, name)
    cons = []
    for a, r in enumerate(gam):
        for A in range(k):
            coeffs = [Const(1.0)] + [_as_node(g) for g in r]
            names = [f"v{fibre[a]}_{A + 1}"] + [f"v{b}_{A + 1}" for b in basec]
            cons.append(to_source(_linear_combination(coeffs, names)))
    d["constraints"] = cons
    d["constraint_forms"] = {"mode": "chetaev"}
    d["distribution"] = [[to_source(_as_node(e)) for e in row] for row in phi]
    return model_from_dict(d)


# -- builtins ------------------------------------------------------------------

COSSERAT_LAGRANGIAN = (
    "rho/2*(v1_1^2 + v2_1^2) + alpha/2*v3_1^2 - beta/2*v3_2^2"
    " - K/2*(v4_2^2 + v5_2^2) + q6*(q4 - v1_2) + q7*(q5 - v2_2)"
)
COSSERAT_CONSTRAINTS = ["v1_1 + R*v3_1*v2_2", "v2_1 - R*v3_1*v1_2"]
COSSERAT_PARAMETERS = {"rho": 1.0, "alpha": 1.0, "beta": 1.0, "K": 1.0, "R": 1.0}


def _cosserat_forms(n):
    z = ["0"] * n
    e1 = ["1", "0", "R*v2_2"] + ["0"] * (n - 3)
    e2 = ["0", "1", "-R*v1_2"] + ["0"] * (n - 3)
    return [[e1, z], [e2, z]]


def _cosserat():
    return {
        "name": "cosserat",
        "n": 7,
        "k": 2,
        "parameters": dict(COSSERAT_PARAMETERS),
        "lagrangian": COSSERAT_LAGRANGIAN,
        "constraints": list(COSSERAT_CONSTRAINTS),
        "constraint_forms": {"mode": "explicit", "forms": _cosserat_forms(7)},
        "symmetries": [{"name": "main", "components": ["-R*v2_2", "R*v1_2", "1", "0", "0", "0", "0"]}],
    }


def _cosserat_regular():
    # the (x, y, theta) part with a bending-like term that keeps the v-Hessian invertible
    return {
        "name": "cosserat_regular",
        "n": 3,
        "k": 2,
        "parameters": dict(COSSERAT_PARAMETERS),
        "lagrangian": "rho/2*(v1_1^2 + v2_1^2) + alpha/2*v3_1^2 - beta/2*v3_2^2 - K/2*(v1_2^2 + v2_2^2)",
        "constraints": list(COSSERAT_CONSTRAINTS),
        "constraint_forms": {"mode": "explicit", "forms": _cosserat_forms(3)},
        "symmetries": [{"name": "main", "components": ["-R*v2_2", "R*v1_2", "1"]}],
    }


def _free_particle():
    return {
        "name": "free_particle",
        "n": 2,
        "k": 1,
        "lagrangian": "0.5*(v1_1^2 + v2_1^2)",
        "constraints": [],
        "symmetries": [
            {"name": "translation_x", "components": ["1", "0"]},
            {"name": "translation_y", "components": ["0", "1"]},
        ],
    }


def _harmonic():
    return {"name": "harmonic", "n": 1, "k": 1, "lagrangian": "0.5*v1_1^2 - 0.5*q1^2"}


def _knife_edge():
    d = {
        "name": "knife_edge",
        "n": 3,
        "k": 1,
        "lagrangian": "0.5*(v1_1^2 + v2_1^2 + v3_1^2)",
        "symmetries": [
            {"name": "rotation", "components": ["0", "0", "1"]},
            {"name": "forward", "components": ["cos(q3)", "sin(q3)", "0"]},
        ],
    }
    base = model_from_dict(d)
    built = build_linear_constraint_model(base, [[["sin(q3)", "-cos(q3)", 0.0]]], name="knife_edge")
    return model_to_dict(built)


def _flat_connection():
    base = model_from_dict(
        {"name": "flat_connection", "n": 3, "k": 2, "lagrangian": "0.5*(v1_1^2 + v2_1^2 + v3_1^2 + v1_2^2 + v2_2^2 + v3_2^2)"}
    )
    return model_to_dict(build_connection_constraint_model(base, [[0.0, 0.0]]))


BUILTINS = {
    "cosserat": _cosserat,
    "cosserat_regular": _cosserat_regular,
    "free_particle": _free_particle,
    "harmonic": _harmonic,
    "knife_edge": _knife_edge,
    "flat_connection": _flat_connection,
}


def builtin(name: str, **parameters) -> ModelSpec:
    """Construct a builtin model, optionally overriding its parameters."""
    try:
        d = BUILTINS[name]()
    except KeyError:
        raise ModelSchemaError(f"unknown builtin model {name!r}; choose from {sorted(BUILTINS)}") from None
    model = model_from_dict(d)
    return model.with_parameters(**parameters) if parameters else model
