"""The Fefferman metric on the circle bundle over the Heisenberg group.

On the flat model the connection form is ``sigma = dr / (n + 2)`` and

    F = G~ + 2 (theta (x) sigma + sigma (x) theta),

with ``G~`` the Levi form extended by ``G~(T, .) = 0``.  Points of the bundle
are stored as ``(x, r)`` with ``x`` the base chart coordinates and ``r`` the
fibre angle.  Christoffel symbols come from central differences of the
metric components.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .connection import ResidualReport, connection_at
from .core import ChartPoint
from .errors import DegenerateMetricError, DomainError, UnsupportedModelError
from .geodesics import CurveSolution, make_grid, rk4
from .models import HeisenbergModel

FD_STEP = 1e-4
TWO_PI = 2.0 * np.pi


def _require_flat(model) -> None:
    if not isinstance(model, HeisenbergModel):
        raise UnsupportedModelError(f"the Fefferman metric is only available on Heisenberg models, not {model.model_id}")


@dataclass(frozen=True)
class CirclePoint:
    """A point of the circle bundle: base point and fibre angle in ``[0, 2 pi)``."""

    base: ChartPoint
    fiber: float

    def __post_init__(self):
        object.__setattr__(self, "fiber", float(np.mod(self.fiber, TWO_PI)))

    @property
    def coords(self) -> np.ndarray:
        return np.append(self.base.coords, self.fiber)


def _bundle_coords(z) -> np.ndarray:
    if isinstance(z, CirclePoint):
        return z.coords
    return np.asarray(z, dtype=float)


class FeffermanMetricData:
    """Metric, connection form and Christoffel symbols on ``C(H^n)``."""

    def __init__(self, model: HeisenbergModel, fd_step: float = FD_STEP):
        _require_flat(model)
        self.model = model
        self.n = model.n
        self.fd_step = fd_step
        self.size = model.ambient_dim + 1
        # coefficient of theta (x) dr + dr (x) theta
        self.coupling = 2.0 / (self.n + 2)

    # one-forms -----------------------------------------------------------

    def sigma(self, z) -> np.ndarray:
        """Components of ``sigma = dr / (n + 2)``."""
        z = _bundle_coords(z)
        out = np.zeros(z.shape)
        out[..., -1] = 1.0 / (self.n + 2)
        return out

    def sigma_closure_residual(self, z) -> float:
        """Max of the central-difference exterior derivative of ``sigma``."""
        z = _bundle_coords(z)
        jac = np.stack(
            [(self.sigma(z + self.fd_step * e) - self.sigma(z - self.fd_step * e)) / (2 * self.fd_step) for e in np.eye(self.size)],
            axis=-1,
        )
        return float(np.max(np.abs(jac - np.swapaxes(jac, -1, -2))))

    # metric --------------------------------------------------------------

    def matrix(self, z) -> np.ndarray:
        """Components ``F_ij`` at ``z`` (batched over leading axes)."""
        z = _bundle_coords(z)
        x = z[..., :-1]
        co = self.model.coframe(x)
        hor = co[..., :-1, :]
        theta = self.model.theta(x)
        nb = self.size - 1
        out = np.zeros(z.shape[:-1] + (self.size, self.size))
        out[..., :nb, :nb] = np.swapaxes(hor, -1, -2) @ hor
        out[..., :nb, nb] = self.coupling * theta
        out[..., nb, :nb] = self.coupling * theta
        return out

    def metric(self, z, u, v) -> float:
        return float(np.asarray(u, dtype=float) @ self.matrix(z) @ np.asarray(v, dtype=float))

    def signature(self, z) -> tuple:
        """Counts of positive and negative eigenvalues."""
        ev = np.linalg.eigvalsh(self.matrix(z))
        scale = np.max(np.abs(ev))
        if np.min(np.abs(ev)) < 1e-12 * scale:
            raise DegenerateMetricError("Fefferman metric is degenerate here")
        return int(np.sum(ev > 0)), int(np.sum(ev < 0))

    def christoffel(self, z) -> np.ndarray:
        """``Gamma[..., k, i, j]`` from central differences of the metric."""
        z = _bundle_coords(z)
        h = self.fd_step
        dmat = np.stack(
            [(self.matrix(z + h * e) - self.matrix(z - h * e)) / (2 * h) for e in np.eye(self.size)],
            axis=-1,
        )  # [..., i, j, l] = d_l F_ij
        inv = np.linalg.inv(self.matrix(z))
        # lowered[..., i, j, l] = (d_i F_jl + d_j F_il - d_l F_ij) / 2
        lowered = 0.5 * (
            np.einsum("...jli->...ijl", dmat) + np.einsum("...ilj->...ijl", dmat) - np.einsum("...ijl->...ijl", dmat)
        )
        return np.einsum("...kl,...ijl->...kij", inv, lowered)

    # lifts ---------------------------------------------------------------

    def horizontal_lift(self, z, v) -> np.ndarray:
        """Lift of a base vector into ``Ker(sigma)``."""
        return np.append(np.asarray(v, dtype=float), 0.0)

    def fibre_generator(self) -> np.ndarray:
        out = np.zeros(self.size)
        out[-1] = 1.0
        return out


def fefferman_metric(model, z, u, v) -> float:
    """``F(u, v)`` at a bundle point ``z``."""
    return FeffermanMetricData(model).metric(z, u, v)


# --------------------------------------------------------------------------
# Curves in the bundle
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BundleCurve:
    """Nodes ``t``, bundle coordinates ``(x, r)`` and their velocities."""

    model: HeisenbergModel
    t_grid: np.ndarray
    coords: np.ndarray
    velocity: np.ndarray

    @property
    def base(self) -> np.ndarray:
        return self.coords[:, :-1]

    @property
    def fiber(self) -> np.ndarray:
        return self.coords[:, -1]

    def energy(self) -> np.ndarray:
        data = FeffermanMetricData(self.model)
        return np.einsum("ki,kij,kj->k", self.velocity, data.matrix(self.coords), self.velocity)

    def energy_drift(self) -> float:
        e = self.energy()
        return float(np.max(np.abs(e - e[0])) / max(1.0, abs(e[0])))

    def to_csv(self, path) -> None:
        nb = self.coords.shape[1] - 1
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i}" for i in range(nb)] + ["r"])
            for t, z in zip(self.t_grid, self.coords):
                w.writerow([repr(float(t))] + [repr(float(c)) for c in z])


def lift_sr_geodesic(sol: CurveSolution, r0: float = 0.0) -> BundleCurve:
    """Solve ``z' = dot gamma^up + ((n + 2) / 2) b Sigma`` over a sub-Riemannian geodesic."""
    _require_flat(sol.model)
    if sol.b is None:
        raise DomainError("the curve carries no b(t); integrate it as a sub-Riemannian geodesic")
    n = sol.model.n
    t = sol.t_grid
    h = np.diff(t)
    # Hermite-exact quadrature of b on each step
    steps = 0.5 * h * (sol.b[:-1] + sol.b[1:]) + h * h / 12.0 * (sol.b_dot[:-1] - sol.b_dot[1:])
    integral = np.concatenate([[0.0], np.cumsum(steps)])
    scale = 0.5 * (n + 2)
    r = r0 + scale * integral
    coords = np.column_stack([sol.coords, r])
    vel = np.column_stack([sol.coord_velocity, scale * sol.b])
    return BundleCurve(sol.model, t.copy(), coords, vel)


def integrate_fefferman_geodesic(data: FeffermanMetricData, z0, zdot0, t_max: float, h: float = 1e-3) -> BundleCurve:
    """RK4 on the coordinate geodesic equations of ``F``."""
    z0 = _bundle_coords(z0)
    zdot0 = np.asarray(zdot0, dtype=float)
    data.signature(z0)
    size = data.size

    def rhs(t, y):
        z, w = y[:size], y[size:]
        gam = data.christoffel(z)
        return np.concatenate([w, -np.einsum("kij,i,j->k", gam, w, w)])

    grid = make_grid(0.0, t_max, h)
    ys, _ = rk4(rhs, np.concatenate([z0, zdot0]), grid)
    return BundleCurve(data.model, grid, ys[:, :size], ys[:, size:])


def projection_residual(curve: BundleCurve) -> dict:
    """How well the projected curve satisfies the sub-Riemannian geodesic equations.

    With ``b = 2 r' / (n + 2)`` the residuals are the sup norms of
    ``nabla_v v + 2 b J v`` (frame components), ``theta(dot x)`` and ``b'``.
    """
    model = curve.model
    data = FeffermanMetricData(model)
    x = curve.base
    xd = curve.velocity[:, :-1]
    gam = data.christoffel(curve.coords)
    acc = -np.einsum("pkij,pi,pj->pk", gam, curve.velocity, curve.velocity)
    xdd = acc[:, :-1]
    rdd = acc[:, -1]
    co = model.coframe(x)
    dfr = model.frame_jacobian(x)
    v = np.einsum("pai,pi->pa", co, xd)
    dframe = np.einsum("piak,pk->pia", dfr, xd)
    vdot = np.einsum("pai,pi->pa", co, xdd - np.einsum("pia,pa->pi", dframe, v))
    tw, _ = connection_at(model, x)
    b = curve.velocity[:, -1] / (0.5 * (model.n + 2))
    eq = vdot + np.einsum("pabc,pa,pb->pc", tw, v, v) + 2.0 * b[:, None] * (v @ model.j_frame.T)
    return {
        "geodesic_equation": float(np.max(np.abs(eq))),
        "lengthy": float(np.max(np.abs(v[:, -1]))),
        "b_constant": float(np.max(np.abs(rdd))) / (0.5 * (model.n + 2)),
        "b0": float(b[0]),
    }


# --------------------------------------------------------------------------
# Levi-Civita connection of F versus Tanaka-Webster
# --------------------------------------------------------------------------


def _covariant(data: FeffermanMetricData, z, field_u, field_w) -> np.ndarray:
    """``nabla_U W`` for vector fields given as callables of bundle coordinates."""
    h = data.fd_step
    u = field_u(z)
    dw = sum(
        u[i] * (field_w(z + h * e) - field_w(z - h * e)) / (2 * h) for i, e in enumerate(np.eye(data.size))
    )
    return dw + np.einsum("kij,i,j->k", data.christoffel(z), u, field_w(z))


def lemma_l3_check(model, sample_points, tolerance: float = 1e-5) -> ResidualReport:
    """Residuals of the identities relating the Fefferman Levi-Civita connection to Tanaka-Webster."""
    _require_flat(model)
    data = FeffermanMetricData(model)
    n, m = model.n, model.frame_size
    jm = model.j_frame
    report = ResidualReport()
    sigma_hat = lambda z: 0.5 * (n + 2) * data.fibre_generator()  # noqa: E731

    def lift(a):
        return lambda z: data.horizontal_lift(z, model.frame(z[:-1])[:, a])

    def lift_comps(z, comps):
        return data.horizontal_lift(z, model.frame(z[:-1]) @ comps)

    reeb = lift(m - 1)
    for pt in np.atleast_2d(sample_points):
        z = np.append(pt, 0.3)
        tw, _ = connection_at(model, pt)
        worst = {k: 0.0 for k in ("XY", "XT", "TX", "X_sigma", "sigma_X", "TT", "sigma_sigma", "sigma_T", "T_sigma")}
        for a in range(m - 1):
            xa = lift(a)
            for b in range(m - 1):
                lhs = _covariant(data, z, xa, lift(b))
                # half of dtheta(e_a, e_b) in our normalization, i.e. g(J e_a, e_b)
                levi = jm[b, a]
                rhs = lift_comps(z, tw[a, b]) - levi * reeb(z)
                worst["XY"] = max(worst["XY"], float(np.max(np.abs(lhs - rhs))))
            worst["XT"] = max(worst["XT"], float(np.max(np.abs(_covariant(data, z, xa, reeb)))))
            rhs = lift_comps(z, tw[m - 1, a])
            worst["TX"] = max(worst["TX"], float(np.max(np.abs(_covariant(data, z, reeb, xa) - rhs))))
            jx = lift_comps(z, jm[:, a])
            worst["X_sigma"] = max(worst["X_sigma"], float(np.max(np.abs(_covariant(data, z, xa, sigma_hat) - jx))))
            worst["sigma_X"] = max(worst["sigma_X"], float(np.max(np.abs(_covariant(data, z, sigma_hat, xa) - jx))))
        worst["TT"] = float(np.max(np.abs(_covariant(data, z, reeb, reeb))))
        worst["sigma_sigma"] = float(np.max(np.abs(_covariant(data, z, sigma_hat, sigma_hat))))
        worst["sigma_T"] = float(np.max(np.abs(_covariant(data, z, sigma_hat, reeb))))
        worst["T_sigma"] = float(np.max(np.abs(_covariant(data, z, reeb, sigma_hat))))
        for name, val in worst.items():
            report.add(f"fefferman_{name}", z, val, tolerance)
    return report
