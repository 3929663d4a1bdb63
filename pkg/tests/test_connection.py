"""Connection coefficients, curvature and the identity suite."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pseudoherm_lab import kernels
from pseudoherm_lab.connection import (
    axiom_residuals,
    connection_at,
    connection_batch,
    curvature_batch,
    identity_suite,
    levi_civita,
    ricci,
    sectional,
    tw_connection,
    tw_oracle,
)
from pseudoherm_lab.errors import DegeneratePlaneError, DomainError
from pseudoherm_lab.models import heisenberg, scaled_heisenberg, sphere

from .conftest import ALL_MODELS, build


def test_axioms_hold(any_model):
    data = connection_batch(any_model, any_model.sample_points(30, seed=7))
    res = axiom_residuals(data, any_model.j_frame)
    for name, vals in res.items():
        assert np.max(vals) < 1e-8, name


def test_fast_path_matches_axiom_oracle(any_model):
    data = connection_batch(any_model, any_model.sample_points(10, seed=8))
    for p in range(10):
        gamma, resid, rank = tw_oracle(data["structure"][p], any_model.j_frame)
        assert rank == any_model.frame_size**3
        assert resid < 1e-10
        assert np.max(np.abs(gamma - data["tw"][p])) < 1e-7


@pytest.mark.parametrize("kind,n", ALL_MODELS)
@given(st.lists(st.floats(-1.0, 1.0, allow_nan=False), min_size=6, max_size=6))
def test_oracle_property(kind, n, vals):
    model = build(kind, n)
    x = model.project(np.array(vals[: model.ambient_dim]) + (0.3 if kind == "sphere" else 0.0))
    if kind == "sphere" and np.linalg.cond(model.frame(x)) > 1e3:
        return
    data = connection_batch(model, x[None])
    gamma, _, _ = tw_oracle(data["structure"][0], model.j_frame)
    assert np.max(np.abs(gamma - data["tw"][0])) < 1e-7


def test_heisenberg_coefficients_closed_form():
    # nabla X = nabla Y = 0 for the left-invariant frame; torsion [X, Y] = -2T
    model = heisenberg(1)
    tw, tau = connection_at(model, np.array([0.3, -0.2, 1.0]))
    assert np.max(np.abs(tw)) == 0.0
    assert np.max(np.abs(tau)) == 0.0


def test_levi_civita_is_torsion_free_and_metric(any_model):
    x = any_model.sample_points(2, seed=1, radius=1.0)[0]
    data = levi_civita(any_model, x)
    assert data.axiom_residuals["metric"] < 1e-12
    assert data.axiom_residuals["torsion"] < 1e-12
    tw = tw_connection(any_model, x)
    assert tw.gamma.shape == (any_model.frame_size,) * 3


def test_torsion_only_on_scaled_model():
    assert np.max(np.abs(connection_at(heisenberg(2), np.zeros(5))[1])) == 0.0
    tau = connection_at(scaled_heisenberg(1, 0.3), np.array([0.2, 0.1, 0.0]))[1]
    assert np.max(np.abs(tau)) > 1e-3


def test_heisenberg_is_flat():
    data = curvature_batch(heisenberg(2), heisenberg(2).sample_points(10))
    assert np.max(np.abs(data["curv"])) < 1e-8


@pytest.mark.parametrize("n", [1, 2])
def test_sphere_holomorphic_curvature_one(n):
    model = sphere(n)
    rng = np.random.default_rng(n)
    for x in model.sample_points(4, seed=2, radius=0.8):
        fr = model.frame(x)
        u = fr[:, :-1] @ rng.normal(size=2 * n)
        assert abs(sectional(model, x, u, model.apply_j(x, u)) - 1.0) < 1e-6


def test_sphere_ricci_constant():
    model = sphere(2)
    x = model.sample_points(1, seed=3, radius=0.5)[0]
    u = model.frame(x)[:, 0]
    # J-invariant plane contributes 4 and each totally real plane 1 (times the 1/4 normalisation)
    assert abs(ricci(model, x, u) - 6.0) < 1e-5


def test_sectional_rejects_degenerate_plane():
    model = sphere(1)
    x = model.origin()
    u = model.frame(x)[:, 0]
    with pytest.raises(DegeneratePlaneError):
        sectional(model, x, u, 2 * u)


def test_ricci_needs_horizontal_vector():
    model = heisenberg(1)
    with pytest.raises(DomainError):
        ricci(model, np.zeros(3), np.array([0.0, 0.0, 1.0]))


@pytest.mark.parametrize("kind,n", ALL_MODELS)
def test_identity_suite(kind, n):
    model = build(kind, n)
    report = identity_suite(model, model.sample_points(6, seed=11), trials=3)
    assert report.passed, report.worst()
    names = set(report.names())
    assert {"A2_first_bianchi", "A3_reeb_bianchi", "A8_pair_interchange"} <= names
    assert ("pair_symmetry" in names) == model.sasakian


def test_identity_suite_detects_wrong_curvature(monkeypatch):
    model = scaled_heisenberg(1, 0.3)
    real = kernels.curvature

    def broken(coeffs, dcoeffs, structure):
        out = real(coeffs, dcoeffs, structure)
        out[:, 0, 1, 0, 1] += 1e-3
        return out

    monkeypatch.setattr(kernels, "curvature", broken)
    report = identity_suite(model, model.sample_points(3), trials=2)
    assert not report.passed


@pytest.mark.parametrize("name", ["tw_from_structure", "curvature", "propagate_linear", "hermite"])
def test_backends_agree(name):
    if not kernels._HAVE_NUMBA:
        pytest.skip("numba not installed")
    from pseudoherm_lab.benchmark import _inputs, _max_gap

    args = _inputs(50)[name]
    a = kernels.implementation(name, "numpy")(*args)
    b = kernels.implementation(name, "numba")(*args)
    assert _max_gap(a, b) < 1e-10
