"""Shared fixtures, hypothesis profile and the acceptance summary."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pseudoherm_lab import geodesics as geo
from pseudoherm_lab.models import heisenberg, scaled_heisenberg, sphere

settings.register_profile(
    "pkg", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("pkg")

ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])


ALL_MODELS = [
    ("heisenberg", 1),
    ("heisenberg", 2),
    ("sphere", 1),
    ("sphere", 2),
    ("scaled-heisenberg", 1),
    ("scaled-heisenberg", 2),
]


def build(kind: str, n: int):
    if kind == "heisenberg":
        return heisenberg(n)
    if kind == "sphere":
        return sphere(n)
    return scaled_heisenberg(n, 0.3)


@pytest.fixture(params=ALL_MODELS, ids=[f"{k}-{n}" for k, n in ALL_MODELS])
def any_model(request):
    return build(*request.param)


@pytest.fixture(scope="session")
def s5_geodesic():
    """Unit-speed geodesic of the 5-sphere past its second conjugate point."""
    model = sphere(2)
    x0 = model.origin()
    v = model.frame(x0)[:, 0]
    model = model.adapted_to(x0, v)
    return geo.integrate_tw_geodesic(model, x0, v, 4.2)


@pytest.fixture(scope="session")
def s3_geodesic():
    model = sphere(1)
    x0 = model.origin()
    return geo.integrate_tw_geodesic(model, x0, model.frame(x0)[:, 0], 3.5)


@pytest.fixture(scope="session")
def h1_geodesic():
    model = heisenberg(1)
    x0 = model.origin()
    return geo.integrate_tw_geodesic(model, x0, model.frame(x0)[:, 0], 3.0)


def unit_horizontal(model, x, rng):
    comps = np.append(rng.normal(size=2 * model.n), 0.0)
    return model.frame(x) @ (comps / np.linalg.norm(comps))
