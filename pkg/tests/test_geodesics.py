"""Geodesic integrators against closed forms and against each other."""

from __future__ import annotations

import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pseudoherm_lab import geodesics as geo
from pseudoherm_lab.errors import DomainError
from pseudoherm_lab.models import heisenberg, scaled_heisenberg, sphere

from .conftest import unit_horizontal


@pytest.mark.parametrize("beta", [0.7, 1.3])
def test_heisenberg_sub_riemannian_circle(beta):
    # projection is a circle of radius 1/(2 beta); one turn encloses area pi/(4 beta^2)
    model = heisenberg(1)
    x0 = model.origin()
    period = np.pi / beta
    sol = geo.integrate_sr_geodesic(model, x0, model.frame(x0)[:, 0], beta, period)
    center = np.array([0.0, -0.5 / beta])
    radius = np.linalg.norm(sol.coords[:, :2] - center, axis=1)
    assert np.max(np.abs(radius - 0.5 / beta)) < 1e-9
    assert np.allclose(sol.coords[-1], [0.0, 0.0, np.pi / (2 * beta**2)], atol=1e-9)
    assert abs(geo.length(sol) - period) < 1e-10


def test_heisenberg_tw_geodesic_is_straight_line():
    model = heisenberg(2)
    x0 = np.array([0.1, 0.2, -0.3, 0.4, 0.5])
    v = model.frame(x0)[:, :-1] @ np.array([0.6, 0.0, 0.8, 0.0])
    sol = geo.integrate_tw_geodesic(model, x0, v, 2.0)
    # left-invariant frame components stay constant
    assert np.max(np.abs(sol.velocity - sol.velocity[0])) < 1e-13


def test_sphere_tw_geodesic_is_great_circle():
    model = sphere(1)
    x0 = model.origin()
    v = model.frame(x0)[:, 0]
    sol = geo.integrate_tw_geodesic(model, x0, v, 3.0)
    t = sol.t_grid
    expect = np.cos(t)[:, None] * x0 + np.sin(t)[:, None] * v
    assert np.max(np.abs(sol.coords - expect)) < 1e-10


def test_lengthy_and_speed_conserved(any_model):
    rng = np.random.default_rng(3)
    x0 = any_model.sample_points(1, seed=4, radius=0.5)[0]
    v = unit_horizontal(any_model, x0, rng)
    if any_model.model_id.startswith("sphere") and any_model.n > 1:
        any_model = any_model.adapted_to(x0, v)
    sol = geo.integrate_sr_geodesic(any_model, x0, v, 0.4, 1.5)
    assert sol.is_lengthy()
    assert sol.speed_drift() < 1e-9
    tw = geo.integrate_tw_geodesic(any_model, x0, v, 1.5)
    assert tw.is_lengthy() and tw.speed_drift() < 1e-9


def test_sasakian_keeps_b_constant_and_torsion_moves_it():
    model = heisenberg(1)
    sol = geo.integrate_sr_geodesic(model, model.origin(), model.frame(model.origin())[:, 0], 0.5, 2.0)
    assert np.ptp(sol.b) < 1e-14
    scaled = scaled_heisenberg(1, 0.3)
    x0 = scaled.origin()
    v = scaled.frame(x0) @ np.array([0.6, 0.8, 0.0])
    sol = geo.integrate_sr_geodesic(scaled, x0, v, 0.5, 2.0)
    assert np.ptp(sol.b) > 1e-4


@pytest.mark.parametrize("model", [heisenberg(1), scaled_heisenberg(2, 0.2), sphere(1)], ids=str)
def test_hamiltonian_matches_connection_form(model):
    rng = np.random.default_rng(0)
    x0 = model.sample_points(1, seed=9, radius=0.7)[0]
    v = unit_horizontal(model, x0, rng)
    cov = geo.hamiltonian_initial_covector(model, x0, v, 0.8)
    sr = geo.integrate_sr_geodesic(model, x0, v, 0.8, 1.0)
    ham = geo.integrate_hamiltonian(model, x0, cov, 1.0)
    assert np.max(np.abs(sr.coords - ham.coords)) < 1e-8
    energy = geo.hamiltonian(model, ham.coords, ham.covector)
    assert np.ptp(energy) < 1e-10
    lift = geo.canonical_lift(sr)
    assert lift.reconstruction_residual() < 1e-10
    assert np.allclose(lift.reeb_values(), 1.0)


def test_reeb_multiplier_relation():
    model = scaled_heisenberg(1, 0.2)
    x0 = model.origin()
    sol = geo.integrate_sr_geodesic(model, x0, model.frame(x0) @ np.array([0.0, 1.0, 0.0]), 0.9, 1.0)
    for t in (0.25, 0.5, 0.7):
        assert abs(geo.strichartz_a(sol, t) - (sol.b_at(t)[0] - 1.0)) < 1e-6
    with pytest.raises(DomainError):
        geo.strichartz_a(sol, 0.0)


def test_rk4_fourth_order():
    model = scaled_heisenberg(1, 0.3)
    x0 = model.origin()
    v = model.frame(x0) @ np.array([0.6, 0.8, 0.0])
    ref = geo.integrate_sr_geodesic(model, x0, v, 0.5, 1.0, h=1e-3).coords[-1]
    errs = [np.max(np.abs(geo.integrate_sr_geodesic(model, x0, v, 0.5, 1.0, h=h).coords[-1] - ref)) for h in (0.1, 0.05)]
    assert errs[0] / errs[1] > 12


def test_domain_errors():
    model = heisenberg(1)
    x0 = model.origin()
    with pytest.raises(DomainError):
        geo.integrate_sr_geodesic(model, x0, np.array([0.0, 0.0, 1.0]), 0.1, 1.0)
    with pytest.raises(DomainError):
        geo.integrate_sr_geodesic(model, x0, np.zeros(3), 0.1, 1.0)
    sol = geo.integrate_tw_geodesic(model, x0, np.array([1.0, 0.0, 0.0]), 1.0)
    with pytest.raises(DomainError):
        sol.point_at(2.0)
    with pytest.raises(DomainError):
        geo.length(sol, 0.8, 0.2)


def test_breakpoints_are_grid_nodes():
    grid = geo.make_grid(0.0, 1.0, 0.3, breakpoints=(0.45,))
    assert 0.45 in grid and grid[0] == 0.0 and grid[-1] == 1.0
    assert np.max(np.diff(grid)) <= 0.3 + 1e-15


@given(st.floats(-2, 2), st.floats(0.1, 3.0))
def test_length_is_speed_times_time(b0, t_max):
    model = heisenberg(1)
    x0 = model.origin()
    sol = geo.integrate_sr_geodesic(model, x0, np.array([0.6, 0.8, 0.0]), b0, t_max, h=1e-2)
    # Hermite dense output between nodes limits the accuracy at this coarse step
    assert abs(geo.length(sol) - t_max) < 1e-6


def test_trajectory_csv(tmp_path):
    model = heisenberg(1)
    sol = geo.integrate_sr_geodesic(model, model.origin(), np.array([1.0, 0.0, 0.0]), 0.3, 0.1, h=0.05)
    sol.to_csv(tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["t", "x0", "x1", "x2", "v0", "v1", "v2", "b"]
    assert len(rows) == 4 and float(rows[-1][0]) == pytest.approx(0.1)
