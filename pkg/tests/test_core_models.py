"""Frames, contact forms and model construction."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pseudoherm_lab import dtheta, levi_form, metric_duality_residual, omega, webster_metric
from pseudoherm_lab.core import ChartPoint, Tangent, j_block
from pseudoherm_lab.errors import ContractViolation, InvalidDimensionError
from pseudoherm_lab.models import heisenberg, model_from_id, scaled_heisenberg, sphere

coords = st.floats(-1.5, 1.5, allow_nan=False)


def test_j_block_is_complex_structure():
    for n in (1, 2, 3):
        jm = j_block(n)
        r = 2 * n
        assert np.allclose(jm[:r, :r] @ jm[:r, :r], -np.eye(r))
        assert np.all(jm[r] == 0) and np.all(jm[:, r] == 0)
        assert jm[1, 0] == 1.0 and jm[0, 1] == -1.0


def test_frame_is_webster_orthonormal_and_adapted(any_model):
    pts = any_model.sample_points(20, seed=1, radius=1.0)
    fr = any_model.frame(pts)
    th = any_model.theta(pts)
    # theta kills the horizontal frame and equals 1 on the Reeb field
    vals = np.einsum("pi,pia->pa", th, fr)
    expect = np.zeros(any_model.frame_size)
    expect[-1] = 1.0
    assert np.allclose(vals, expect, atol=1e-12)
    for x in pts[:5]:
        af = any_model.adapted_frame(x)
        assert np.allclose(af.g_matrix, np.eye(2 * any_model.n), atol=1e-12)
        assert np.allclose(af.j_matrix, any_model.j_frame[:-1, :-1], atol=1e-12)


def test_reeb_field_is_characteristic(any_model):
    for x in any_model.sample_points(8, seed=2, radius=1.0):
        reeb = any_model.reeb(x)
        assert abs(any_model.theta(x) @ reeb - 1.0) < 1e-12
        fr = any_model.frame(x)
        for a in range(2 * any_model.n):
            assert abs(dtheta(any_model, x, reeb, fr[:, a])) < 1e-9


def test_levi_form_matches_metric_and_omega(any_model):
    x = any_model.sample_points(3, seed=4, radius=1.0)[1]
    fr = any_model.frame(x)
    r = 2 * any_model.n
    for a in range(r):
        for b in range(r):
            g = webster_metric(any_model, x, fr[:, a], fr[:, b])
            assert abs(levi_form(any_model, x, fr[:, a], fr[:, b]) - g) < 1e-8
            assert abs(omega(any_model, x, fr[:, a], fr[:, b]) - any_model.j_frame[a, b]) < 1e-12


def test_closed_form_derivatives_match_finite_differences(any_model):
    pts = any_model.sample_points(4, seed=3, radius=1.0)
    exact = any_model.frame_jacobian(pts)
    fd = any_model.frame_jacobian_fd(pts)
    assert np.max(np.abs(exact - fd)) < 1e-6


def test_metric_duality(any_model):
    for x in any_model.sample_points(4, seed=5, radius=1.0):
        assert metric_duality_residual(any_model, x) < 1e-8


def test_scaled_reeb_closed_form_against_linear_solve():
    model = scaled_heisenberg(2, 0.4)
    pts = model.sample_points(10, seed=0)
    assert np.max(np.abs(model.reeb(pts) - model.reeb_solve(pts))) < 1e-10


def test_scaled_model_with_zero_exponent_is_heisenberg():
    scaled = scaled_heisenberg(1, 0.0)
    flat = heisenberg(1)
    pts = flat.sample_points(5)
    assert np.allclose(scaled.frame(pts), flat.frame(pts))
    assert scaled.sasakian and scaled.flat


@given(coords, coords, coords)
def test_heisenberg_contact_form_closed_form(x, y, t):
    model = heisenberg(1)
    th = model.theta(np.array([x, y, t]))
    assert np.allclose(th, [-y, x, 1.0])


@given(st.lists(coords, min_size=6, max_size=6))
def test_sphere_frame_on_sphere(vals):
    model = sphere(2)
    raw = np.array(vals)
    if np.linalg.norm(raw) < 0.1:
        raw = raw + 1.0
    x = model.project(raw)
    assert abs(np.linalg.norm(x) - 1.0) < 1e-12
    fr = model.frame(x)
    if abs(np.linalg.det(np.column_stack([fr, x]))) < 1e-3:
        return  # near the singular set of the chosen frame
    assert np.all(np.isfinite(fr))
    assert np.allclose(x @ fr, 0.0, atol=1e-10)


def test_sphere_adapted_frame_keeps_curve_regular():
    model = sphere(2)
    x0 = model.origin()
    v = model.frame(x0)[:, 0]
    adapted = model.adapted_to(x0, v)
    t = np.linspace(0.0, 2 * np.pi, 200)
    circle = np.cos(t)[:, None] * x0 + np.sin(t)[:, None] * v
    sv = np.linalg.svd(adapted.frame(circle), compute_uv=False)
    assert np.min(sv[:, -1] / sv[:, 0]) > 0.1
    assert sphere(1).adapted_to(x0[:4], sphere(1).frame(x0[:4])[:, 0]).n == 1


def test_model_ids():
    assert model_from_id("heisenberg:2").model_id == "heisenberg:2"
    assert model_from_id("sphere:1").ambient_dim == 4
    assert model_from_id("scaled-heisenberg:1:0.25").kappa == 0.25
    assert model_from_id("scaled-heisenberg:1", kappa=0.5).kappa == 0.5
    for bad in ("torus:1", "heisenberg", "heisenberg:x", "sphere:1:2"):
        with pytest.raises(ContractViolation):
            model_from_id(bad)
    with pytest.raises(InvalidDimensionError):
        heisenberg(0)


def test_points_and_tangents_validate_shapes():
    model = heisenberg(1)
    p = model.point([0.0, 1.0, 2.0])
    assert isinstance(p, ChartPoint) and p.model_id == "heisenberg:1"
    with pytest.raises(ContractViolation):
        model.point([0.0, 1.0])
    with pytest.raises(ContractViolation):
        Tangent(p, np.zeros(2))
    with pytest.raises(ContractViolation):
        sphere(1).check_point(p)
