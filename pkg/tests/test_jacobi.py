"""Jacobi fields, conjugate points, dimension counts and index forms."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pseudoherm_lab import geodesics as geo
from pseudoherm_lab import jacobi as jac
from pseudoherm_lab.errors import ConjugateIntervalError, DomainError, HypothesisViolation
from pseudoherm_lab.models import heisenberg, scaled_heisenberg, sphere

# Index of the negative-index field past the second conjugate point of the
# 5-sphere (a = 0, c = pi, b = 4.2, delta = 0.3).  Frozen after agreeing with
# the integrated-by-parts form and with finite differences of the length.
S5_NEGATIVE_INDEX = -0.154668124805


def sine(length: float):
    w = math.pi / length
    return lambda t: (np.sin(w * t), w * np.cos(w * t), -w * w * np.sin(w * t))


def test_heisenberg_jacobi_fields_closed_form(h1_geodesic):
    t = h1_geodesic.t_grid
    x = jac.integrate_jacobi(h1_geodesic, np.zeros(3), np.array([0.0, 1.0, 0.0]))
    assert np.max(np.abs(x.pieces[0].x - np.column_stack([0 * t, t, t * t]))) < 1e-10
    tangent = jac.integrate_jacobi(h1_geodesic, np.zeros(3), np.array([1.0, 0.0, 0.0]))
    assert np.max(np.abs(tangent.pieces[0].x - np.column_stack([t, 0 * t, 0 * t]))) < 1e-12
    assert x.residual() < 1e-6


def test_jacobi_field_matches_geodesic_variation(s3_geodesic):
    # finite-difference derivative of a one-parameter family of geodesics
    model = s3_geodesic.model
    x0 = model.origin()
    fr = model.frame(x0)
    eps = 1e-5
    t_max = 1.2

    def end(s):
        v = fr[:, 0] + s * fr[:, 1]
        return geo.integrate_tw_geodesic(model, x0, v / np.linalg.norm(v), t_max).coords

    fd = (end(eps) - end(-eps)) / (2 * eps)
    sol = geo.integrate_tw_geodesic(model, x0, fr[:, 0], t_max)
    field = jac.integrate_jacobi(sol, np.zeros(3), np.array([0.0, 1.0, 0.0]))
    coords = field.coordinate_values()
    assert np.max(np.abs(coords - fd)) < 1e-7


def test_solution_space_dimension(any_model):
    x0 = any_model.origin()
    v = any_model.frame(x0)[:, 0]
    if any_model.model_id == "sphere:2":
        any_model = any_model.adapted_to(x0, v)
    sol = geo.integrate_tw_geodesic(any_model, x0, v, 1.0, h=1e-2)
    assert jac.jacobi_solution_space_rank(sol) == 4 * any_model.n + 2


def test_horizontal_dimensions_measured():
    dims = {}
    for model in (heisenberg(1), heisenberg(2), sphere(1)):
        x0 = model.origin()
        sol = geo.integrate_tw_geodesic(model, x0, model.frame(x0)[:, 0], 2.0)
        dims[model.model_id] = jac.horizontal_dim(sol)
    # the free horizontal fields are gamma', t gamma', J gamma' and the pairs in J-invariant complements
    assert dims == {"heisenberg:1": 3, "heisenberg:2": 7, "sphere:1": 2}


def test_parallel_frame_stays_orthonormal(s3_geodesic):
    pf = jac.parallel_frame(s3_geodesic)
    assert pf.gram_drift() < 1e-10
    assert pf.j_drift() < 1e-10


def test_conserved_quantities(s3_geodesic):
    rng = np.random.default_rng(0)
    field = jac.integrate_jacobi(s3_geodesic, rng.normal(size=3), rng.normal(size=3))
    first, second = jac.jacobi_constants(s3_geodesic, field)
    assert first.drift < 1e-8 and second.drift < 1e-8


def test_decomposition(h1_geodesic):
    tangent = jac.integrate_jacobi(h1_geodesic, np.zeros(3), np.array([1.0, 0.0, 0.0]))
    d = jac.decompose(h1_geodesic, tangent)
    assert abs(d.a) < 1e-12 and abs(d.b - 1.0) < 1e-12
    a, b, rest = d
    assert rest.sup_norm() < 1e-10
    assert d.slant_residual < 1e-10


def test_s3_first_conjugate_point(s3_geodesic):
    conj = jac.conjugate_points(s3_geodesic)
    assert len(conj) >= 1
    t, mult = conj[0]
    assert abs(t - math.pi / 2) < 1e-6 and mult == 1


def test_heisenberg_has_no_conjugate_points():
    model = heisenberg(1)
    sol = geo.integrate_tw_geodesic(model, model.origin(), np.array([0.6, 0.8, 0.0]), 50.0, h=1e-2)
    assert jac.conjugate_points(sol) == []


def test_s5_conjugate_structure(s5_geodesic):
    conj = jac.conjugate_points(s5_geodesic)
    assert [m for _, m in conj] == [1, 3]
    assert abs(conj[0][0] - math.pi / 2) < 1e-6
    assert abs(conj[1][0] - math.pi) < 1e-6
    assert jac.horizontal_dim(s5_geodesic) == 6
    hconj = jac.horizontally_conjugate(s5_geodesic)
    assert len(hconj) == 1 and abs(hconj[0] - math.pi) < 1e-6


def test_index_form_heisenberg_closed_form(h1_geodesic):
    length = 2.0
    field = jac.scalar_field(h1_geodesic, sine(length), [0.0, 0.0, 1.0], 0.0, length)
    expected = math.pi**2 / (2 * length)
    assert abs(jac.index_form(h1_geodesic, field, field) - expected) < 1e-8
    assert abs(jac.index_form_by_parts(h1_geodesic, field, field) - expected) < 1e-8


def test_index_form_sphere_fixture():
    model = sphere(1)
    x0 = model.origin()
    sol = geo.integrate_tw_geodesic(model, x0, model.frame(x0)[:, 0], math.pi / 2)
    field = jac.integrate_jacobi(sol, np.zeros(3), np.array([0.0, 2.0, -4.0 / math.pi]))
    assert abs(jac.index_form(sol, field, field) - 8.0 / math.pi) < 1e-6


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_index_form_is_symmetric_bilinear(c1, c2):
    model = heisenberg(1)
    sol = geo.integrate_tw_geodesic(model, model.origin(), np.array([1.0, 0.0, 0.0]), 2.0, h=1e-2)
    f = jac.scalar_field(sol, sine(2.0), [0.0, c1, c2], 0.0, 2.0)
    g = jac.scalar_field(sol, sine(2.0), [0.0, c2, 1.0], 0.0, 2.0)
    assert abs(jac.index_form(sol, f, g) - jac.index_form(sol, g, f)) < 1e-9
    assert abs(jac.index_form_by_parts(sol, f, g) - jac.index_form(sol, f, g)) < 1e-6 * max(1.0, abs(jac.index_form(sol, f, g)))


def test_index_form_needs_sasakian():
    model = scaled_heisenberg(1, 0.3)
    sol = geo.integrate_tw_geodesic(model, model.origin(), model.frame(model.origin())[:, 0], 1.0, h=1e-2)
    field = jac.scalar_field(sol, sine(1.0), [0.0, 1.0, 0.0], 0.0, 1.0)
    with pytest.raises(DomainError):
        jac.index_form(sol, field, field)


def test_boundary_value_problem(h1_geodesic):
    target = np.array([0.0, 1.0, 0.5])
    field = jac.jacobi_bvp(h1_geodesic, 0.0, 2.0, np.zeros(3), target)
    assert np.max(np.abs(field.value_at(2.0) - target)) < 1e-9
    assert np.max(np.abs(field.value_at(0.0))) < 1e-12


def test_boundary_value_problem_rejects_conjugate_interval():
    model = sphere(1)
    x0 = model.origin()
    sol = geo.integrate_tw_geodesic(model, x0, model.frame(x0)[:, 0], 2.0, breakpoints=(math.pi / 2,))
    with pytest.raises(ConjugateIntervalError):
        jac.jacobi_bvp(sol, 0.0, math.pi / 2, np.zeros(3), np.array([0.0, 1.0, 0.0]))


def test_index_comparison():
    # a horizontal Jacobi field minimises the index among fields with its boundary values
    model = sphere(2)
    x0 = model.origin()
    v = model.frame(x0)[:, 0]
    b = 1.2
    sol = geo.integrate_tw_geodesic(model.adapted_to(x0, v), x0, v, b)
    y = jac.integrate_jacobi(sol, np.zeros(5), np.array([0.0, 0.0, 1.0, 0.0, 0.0]))
    end = y.value_at(b)

    def pieces(t):
        x = np.outer(t / b, end)
        return x, np.outer(np.ones_like(t) / b, end), np.zeros_like(x)

    x = jac.field_from_functions(sol, pieces, 0.0, b)
    ix, iy, verdict = jac.index_comparison(sol, x, y, 0.0, b)
    assert iy < ix
    assert verdict["inequality_holds"] and not verdict["equality"]
    same = jac.index_comparison(sol, y, y, 0.0, b)[2]
    assert same["equality"] and same["fields_equal"]


def test_negative_index_field(s5_geodesic):
    result = jac.negative_index_field(s5_geodesic, 0.0, math.pi, 4.2, 0.3)
    field, index = result
    assert abs(index - S5_NEGATIVE_INDEX) < 1e-6
    assert field.reeb_sup() < 1e-7
    assert result.window_horizontal_dim == 6


def test_negative_index_hypotheses(s5_geodesic, h1_geodesic):
    with pytest.raises(HypothesisViolation):
        jac.negative_index_field(s5_geodesic, 0.0, math.pi / 2 + 0.3, 4.2, 0.2)
    with pytest.raises(HypothesisViolation):
        jac.negative_index_field(s5_geodesic, 0.0, math.pi, 3.3, 0.3)
    with pytest.raises(HypothesisViolation):
        jac.negative_index_field(h1_geodesic, 0.0, 1.5, 3.0, 0.2)


def test_field_csv(tmp_path, h1_geodesic):
    field = jac.integrate_jacobi(h1_geodesic, np.zeros(3), np.array([0.0, 1.0, 0.0]))
    field.to_csv(tmp_path / "f.csv")
    header = (tmp_path / "f.csv").read_text().splitlines()[0]
    assert header.startswith("t,")
