from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from nhfield.errors import ExprSyntaxError, ModelSchemaError, UnboundVariableError
from nhfield.expr import parse, to_source
from nhfield.geometry import constraint_forms
from nhfield.model import (
    BUILTINS,
    FieldPoint,
    build_connection_constraint_model,
    build_distribution_model,
    build_linear_constraint_model,
    builtin,
    load_model,
    model_from_dict,
    model_to_dict,
    pack,
    slot,
    unpack,
)

from conftest import random_point


def kinetic(n, k):
    terms = " + ".join(f"v{i}_{A}^2" for A in range(1, k + 1) for i in range(1, n + 1))
    return model_from_dict({"name": "kinetic", "n": n, "k": k, "lagrangian": f"0.5*({terms})"})


def same_expr(a, b):
    return to_source(a) == to_source(parse(b))


class TestFlattening:
    def test_slots(self):
        # q block first, then velocity blocks grouped by direction
        assert slot(3, 0) == 0
        assert slot(3, 1, 0) == 3 + 1
        assert slot(3, 0, 1) == 3 + 3

    @given(st.integers(1, 5), st.integers(1, 3), st.data())
    def test_pack_unpack_round_trip(self, n, k, data):
        x = data.draw(hnp.arrays(float, n + n * k, elements=st.floats(-1e6, 1e6)))
        w = unpack(x, n)
        assert w.v.shape == (n, k)
        assert np.array_equal(w.flat(), x)
        assert np.array_equal(pack(w.q, w.v), x)

    def test_velocity_layout(self):
        w = FieldPoint([1.0, 2.0], [[3.0, 5.0], [4.0, 6.0]])
        assert w.flat().tolist() == [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            FieldPoint([np.nan], [[0.0]])


class TestLoading:
    def test_cosserat_builtin(self, cosserat):
        assert (cosserat.n, cosserat.k, cosserat.m) == (7, 2, 2)
        assert cosserat.form_mode == "explicit"
        assert same_expr(cosserat.constraints[0], "v1_1 + R*v3_1*v2_2")
        assert same_expr(cosserat.constraints[1], "v2_1 - R*v3_1*v1_2")
        assert dict(cosserat.parameters) == {"rho": 1.0, "alpha": 1.0, "beta": 1.0, "K": 1.0, "R": 1.0}
        sec = cosserat.section("main")
        assert [to_source(c) for c in sec.components] == [to_source(parse(s)) for s in ["-R*v2_2", "R*v1_2", "1", "0", "0", "0", "0"]]

    def test_cosserat_lagrangian_values(self, cosserat, rng):
        for _ in range(10):
            x = rng.normal(size=21)
            q, v = x[:7], x[7:].reshape(2, 7).T
            expected = (
                0.5 * (v[0, 0] ** 2 + v[1, 0] ** 2)
                + 0.5 * v[2, 0] ** 2
                - 0.5 * v[2, 1] ** 2
                - 0.5 * (v[3, 1] ** 2 + v[4, 1] ** 2)
                + q[5] * (q[3] - v[0, 1])
                + q[6] * (q[4] - v[1, 1])
            )
            assert cosserat.L(x) == pytest.approx(expected, abs=1e-12)

    def test_free_particle_file(self, tmp_path):
        path = tmp_path / "fp.json"
        path.write_text(json.dumps({"name": "fp", "n": 2, "k": 1, "lagrangian": "0.5*(v1_1^2+v2_1^2)"}))
        m = load_model(path)
        assert (m.n, m.k, m.m) == (2, 1, 0)

    def test_builtin_names_fall_through(self):
        assert load_model("knife_edge").name == "knife_edge"

    def test_explicit_row_arity(self):
        d = BUILTINS["cosserat"]()
        d["constraint_forms"]["forms"][1] = d["constraint_forms"]["forms"][1][:1]
        with pytest.raises(ModelSchemaError, match="row 2"):
            model_from_dict(d)

    def test_explicit_row_count(self):
        d = BUILTINS["cosserat"]()
        d["constraint_forms"]["forms"].pop()
        with pytest.raises(ModelSchemaError):
            model_from_dict(d)

    def test_undeclared_variable(self):
        with pytest.raises((ModelSchemaError, UnboundVariableError)):
            model_from_dict({"name": "x", "n": 1, "k": 1, "lagrangian": "v1_1^2 + q2"})
        with pytest.raises((ModelSchemaError, UnboundVariableError)):
            model_from_dict({"name": "x", "n": 1, "k": 1, "lagrangian": "v1_1^2 + zeta"})

    def test_syntax_error_is_located(self):
        with pytest.raises(ModelSchemaError, match="lagrangian: error at offset 5") as info:
            model_from_dict({"name": "x", "n": 1, "k": 1, "lagrangian": "v1_1^^2"})
        assert isinstance(info.value.__cause__, ExprSyntaxError)

    def test_too_many_constraints(self):
        with pytest.raises(ModelSchemaError):
            model_from_dict({"name": "x", "n": 1, "k": 1, "lagrangian": "v1_1^2", "constraints": ["v1_1"]})

    def test_missing_field(self):
        with pytest.raises(ModelSchemaError):
            model_from_dict({"name": "x", "n": 1, "lagrangian": "v1_1^2"})

    def test_unknown_builtin(self):
        with pytest.raises(ModelSchemaError):
            builtin("pendulum")

    @pytest.mark.parametrize("name", sorted(BUILTINS))
    def test_dict_round_trip(self, name, rng):
        m = builtin(name)
        back = model_from_dict(json.loads(json.dumps(model_to_dict(m))))
        x = rng.normal(size=m.dim)
        assert back.L(x) == m.L(x)
        assert [f(x) for f in back.Phi] == [f(x) for f in m.Phi]

    def test_parameters_are_per_model(self):
        a = builtin("cosserat")
        b = a.with_parameters(R=0.1)
        assert a.parameters["R"] == 1.0 and b.parameters["R"] == 0.1


class TestBuilders:
    def test_single_velocity_constraint(self):
        m = build_linear_constraint_model(kinetic(2, 1), [[[1.0, 0.0]]])
        assert same_expr(m.constraints[0], "v1_1")

    def test_knife_edge(self):
        m = builtin("knife_edge")
        assert m.n == 3 and m.k == 1
        assert same_expr(m.constraints[0], "sin(q3)*v1_1 - cos(q3)*v2_1")

    def test_distribution_copies(self):
        m = build_distribution_model(kinetic(3, 2), [["1", "q1", "0"]])
        assert [to_source(c) for c in m.constraints] == [to_source(parse(s)) for s in ["v1_1 + q1*v2_1", "v1_2 + q1*v2_2"]]

    def test_connection_with_position_dependence(self):
        m = build_connection_constraint_model(kinetic(2, 1), [["q1"]])
        assert same_expr(m.constraints[0], "v2_1 + q1*v1_1")

    def test_connection_constant_two_directions(self):
        m = build_connection_constraint_model(kinetic(2, 2), [[0.7]])
        assert [to_source(c) for c in m.constraints] == [to_source(parse(s)) for s in ["v2_1 + 0.7*v1_1", "v2_2 + 0.7*v1_2"]]

    def test_flat_connection(self):
        m = builtin("flat_connection")
        assert [to_source(c) for c in m.constraints] == ["v3_1", "v3_2"]

    def test_dimension_mismatch(self):
        with pytest.raises(ModelSchemaError):
            build_linear_constraint_model(kinetic(2, 1), [[[1.0, 0.0, 0.0]]])
        with pytest.raises(ModelSchemaError):
            build_connection_constraint_model(kinetic(3, 1), [[1.0]])

    @given(st.data())
    def test_chetaev_forms_equal_mu(self, data):
        n, k = 3, 2
        mu = data.draw(hnp.arrays(float, (2, k, n), elements=st.floats(-3, 3)))
        base = kinetic(n, k)
        # a position-dependent coefficient alongside the constant ones
        table = mu.tolist()
        table[0][0][0] = "sin(q2)"
        m = build_linear_constraint_model(base, table)
        rng = np.random.default_rng(data.draw(st.integers(0, 2**16)))
        w = random_point(m, rng)
        expected = mu.copy()
        expected[0, 0, 0] = np.sin(w.q[1])
        assert np.allclose(constraint_forms(m, w), expected, atol=1e-14)
