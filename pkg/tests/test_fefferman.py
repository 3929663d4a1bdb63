"""The Fefferman metric on the circle bundle over the Heisenberg group."""

from __future__ import annotations

import numpy as np
import pytest

from pseudoherm_lab import fefferman as fe
from pseudoherm_lab import geodesics as geo
from pseudoherm_lab.errors import DomainError, UnsupportedModelError
from pseudoherm_lab.models import heisenberg, scaled_heisenberg, sphere


@pytest.fixture(scope="module", params=[1, 2])
def data(request):
    return fe.FeffermanMetricData(heisenberg(request.param))


def test_metric_closed_form_at_origin():
    mat = fe.FeffermanMetricData(heisenberg(1)).matrix(np.zeros(4))
    expected = np.zeros((4, 4))
    expected[0, 0] = expected[1, 1] = 1.0
    expected[2, 3] = expected[3, 2] = 2.0 / 3.0
    assert np.allclose(mat, expected, atol=1e-15)


def test_metric_off_origin():
    data = fe.FeffermanMetricData(heisenberg(1))
    z = np.array([0.4, -0.3, 0.2, 1.0])
    # the Reeb field lifts to a null vector paired with d/dr
    reeb = np.append(data.model.reeb(z[:-1]), 0.0)
    fibre = np.array([0.0, 0.0, 0.0, 1.0])
    assert abs(data.metric(z, reeb, reeb)) < 1e-14
    assert abs(data.metric(z, fibre, fibre)) < 1e-14
    assert abs(data.metric(z, reeb, fibre) - 2.0 / 3.0) < 1e-14


def test_lorentzian_signature(data):
    z = np.append(data.model.sample_points(1, seed=1)[0], 0.5)
    assert data.signature(z) == (data.model.dim, 1)
    assert data.sigma_closure_residual(z) < 1e-12


def test_lemma_identities(data):
    report = fe.lemma_l3_check(data.model, data.model.sample_points(2, seed=3))
    assert report.passed, report.worst()


def test_lift_of_sub_riemannian_geodesic_is_fefferman_geodesic(data):
    model = data.model
    x0 = model.sample_points(1, seed=5, radius=0.5)[0]
    v = model.frame(x0)[:, 0]
    sr = geo.integrate_sr_geodesic(model, x0, v, 0.8, 2.0)
    lift = fe.lift_sr_geodesic(sr, 1.0)
    fg = fe.integrate_fefferman_geodesic(data, lift.coords[0], lift.velocity[0], 2.0)
    assert np.max(np.abs(fg.coords - lift.coords)) < 1e-5
    assert fg.energy_drift() < 1e-6
    # fibre speed is (n + 2) b / 2
    assert abs(lift.velocity[0, -1] - 0.5 * (model.n + 2) * 0.8) < 1e-14


def test_projection_of_fefferman_geodesic(data):
    model = data.model
    x0 = model.origin()
    v = model.frame(x0)[:, -2]
    fg = fe.integrate_fefferman_geodesic(data, np.append(x0, 0.0), np.append(v, 1.3), 1.5)
    proj = fe.projection_residual(fg)
    assert proj["geodesic_equation"] < 1e-5
    assert proj["lengthy"] < 1e-10
    assert proj["b_constant"] < 1e-5
    assert abs(proj["b0"] - 2.0 * 1.3 / (model.n + 2)) < 1e-14
    sr = geo.integrate_sr_geodesic(model, x0, v, proj["b0"], 1.5)
    assert np.max(np.abs(sr.coords - fg.base)) < 1e-5


def test_circle_point_wraps_angle():
    p = fe.CirclePoint(heisenberg(1).point(np.zeros(3)), 7.0)
    assert 0.0 <= p.fiber < 2 * np.pi
    assert p.coords.shape == (4,)


@pytest.mark.parametrize("model", [sphere(1), scaled_heisenberg(1, 0.3)], ids=lambda m: m.model_id)
def test_only_heisenberg_supported(model):
    with pytest.raises(UnsupportedModelError):
        fe.FeffermanMetricData(model)


def test_lift_needs_sub_riemannian_curve():
    model = heisenberg(1)
    tw = geo.integrate_tw_geodesic(model, model.origin(), np.array([1.0, 0.0, 0.0]), 1.0)
    with pytest.raises(DomainError):
        fe.lift_sr_geodesic(tw)
