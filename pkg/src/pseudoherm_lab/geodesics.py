"""Tanaka-Webster geodesics, sub-Riemannian geodesics and the Hamiltonian flow.

Curves are integrated with fixed-step classical RK4 on a piecewise-uniform
grid (breakpoints are always grid nodes).  Velocities are carried as
components in the adapted orthonormal frame, so the connection equations
read ``v' = -Gamma(v, v) - 2 b J v`` and ``b' = A(v, v)``.  The Hamiltonian
flow works directly on coordinate covectors with
``H(x, xi) = 1/2 sum_a xi(e_a)^2`` over the horizontal frame.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from . import kernels
from .connection import connection_at
from .core import ChartPoint, ModelManifold, Tangent
from .errors import DomainError, IntegrationError

DEFAULT_STEP = 1e-3


# --------------------------------------------------------------------------
# Grids and the RK4 driver
# --------------------------------------------------------------------------


def make_grid(t0: float, t1: float, h: float, breakpoints=()) -> np.ndarray:
    """Piecewise-uniform grid on ``[t0, t1]`` with step ``<= h`` and the breakpoints as nodes."""
    if not (h > 0 and math.isfinite(h)):
        raise DomainError(f"step must be positive, got {h}")
    if not t1 > t0:
        raise DomainError(f"empty interval [{t0}, {t1}]")
    cuts = sorted({float(t0), float(t1)} | {float(b) for b in breakpoints if t0 < b < t1})
    pieces = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        k = max(1, int(math.ceil((b - a) / h - 1e-9)))
        pieces.append(np.linspace(a, b, k + 1)[:-1])
    pieces.append(np.array([cuts[-1]]))
    return np.concatenate(pieces)


def rk4(rhs, y0: np.ndarray, grid: np.ndarray, post=None):
    """Classical RK4 on ``grid``.

    Returns ``(states, derivatives)`` at every node.  ``post`` maps a state
    back onto the constraint set after each step (e.g. renormalisation).
    """
    y = np.array(y0, dtype=float)
    ys = np.empty((len(grid),) + y.shape)
    ds = np.empty_like(ys)
    ys[0] = y
    for k in range(len(grid) - 1):
        t, h = grid[k], grid[k + 1] - grid[k]
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        ds[k] = k1
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if post is not None:
            y = post(y)
        if not np.all(np.isfinite(y)):
            raise IntegrationError(f"non-finite state after t = {grid[k]:.6g}", float(grid[k]))
        ys[k + 1] = y
    ds[-1] = rhs(grid[-1], y)
    if not np.all(np.isfinite(ds)):
        raise IntegrationError("non-finite derivative at the final node", float(grid[-2]))
    return ys, ds


# --------------------------------------------------------------------------
# Solutions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CurveSolution:
    """Sampled curve with frame-component velocities and cubic Hermite dense output.

    Attributes:
        model: the manifold.
        t_grid: increasing node times.
        coords: ``(K+1, N)`` points.
        coord_velocity: ``(K+1, N)`` coordinate velocities.
        velocity: ``(K+1, m)`` frame components of the velocity.
        velocity_dot: ``(K+1, m)`` time derivatives of ``velocity``.
        b: ``(K+1,)`` Reeb multiplier, or ``None`` for plain curves.
        b_dot: derivative of ``b`` or ``None``.
        h: nominal step.
        kind: ``"tw"``, ``"sr"``, ``"hamiltonian"`` or ``"curve"``.
        covector: ``(K+1, N)`` Hamiltonian covector when ``kind == "hamiltonian"``.
        transport: ``(K+1, m, m)`` parallel-transported frame (columns) or ``None``.
        transport_dot: its time derivative or ``None``.
    """

    model: ModelManifold
    t_grid: np.ndarray
    coords: np.ndarray
    coord_velocity: np.ndarray
    velocity: np.ndarray
    velocity_dot: np.ndarray
    b: np.ndarray | None = None
    b_dot: np.ndarray | None = None
    h: float = DEFAULT_STEP
    kind: str = "curve"
    covector: np.ndarray | None = None
    covector_dot: np.ndarray | None = None
    transport: np.ndarray | None = None
    transport_dot: np.ndarray | None = None
    breakpoints: tuple = field(default_factory=tuple)
    initial: dict = field(default_factory=dict)

    @property
    def t0(self) -> float:
        return float(self.t_grid[0])

    @property
    def t1(self) -> float:
        return float(self.t_grid[-1])

    @property
    def states(self) -> list:
        """Per-node ``(ChartPoint, Tangent, b)`` triples."""
        out = []
        for k in range(len(self.t_grid)):
            p = ChartPoint(self.coords[k], self.model.model_id)
            b = None if self.b is None else float(self.b[k])
            out.append((p, Tangent(p, self.coord_velocity[k]), b))
        return out

    def _check_t(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        tol = 1e-12 * max(1.0, abs(self.t1))
        if np.any(t < self.t0 - tol) or np.any(t > self.t1 + tol):
            raise DomainError(f"time outside [{self.t0}, {self.t1}]")
        return np.clip(t, self.t0, self.t1)

    def point_at(self, t) -> np.ndarray:
        t = self._check_t(t)
        x = kernels.hermite(self.t_grid, self.coords, self.coord_velocity, t)
        return self.model.project(x)

    def velocity_at(self, t) -> np.ndarray:
        """Frame components of the velocity (Hermite in the frame components)."""
        t = self._check_t(t)
        return kernels.hermite(self.t_grid, self.velocity, self.velocity_dot, t)

    def velocity_dot_at(self, t) -> np.ndarray:
        """Derivative of the Hermite interpolant of the velocity components."""
        t = self._check_t(t)
        return _hermite_derivative(self.t_grid, self.velocity, self.velocity_dot, t)

    def b_at(self, t) -> np.ndarray:
        if self.b is None:
            raise DomainError("curve carries no Reeb multiplier")
        t = self._check_t(t)
        return kernels.hermite(self.t_grid, self.b[:, None], self.b_dot[:, None], t)[:, 0]

    def transport_at(self, t) -> np.ndarray:
        if self.transport is None:
            raise DomainError("curve was integrated without a parallel frame")
        t = self._check_t(t)
        return kernels.hermite(self.t_grid, self.transport, self.transport_dot, t)

    def theta_residual(self) -> float:
        """Largest ``|theta(velocity)|`` over the nodes."""
        return float(np.max(np.abs(self.velocity[:, -1])))

    def speed(self) -> np.ndarray:
        return np.linalg.norm(self.velocity, axis=1)

    def speed_drift(self) -> float:
        s = self.speed()
        ref = max(float(s[0]), 1e-300)
        return float(np.max(np.abs(s - s[0])) / ref)

    def is_lengthy(self, tol: float = 1e-7) -> bool:
        return self.theta_residual() < tol * max(1.0, float(np.max(self.speed())))

    def to_csv(self, path) -> None:
        write_trajectory_csv(self, path)


def _hermite_derivative(t_nodes, values, derivs, tq):
    values = np.asarray(values, dtype=float)
    shape = values.shape[1:]
    vals = values.reshape(len(t_nodes), -1)
    ders = np.asarray(derivs, dtype=float).reshape(len(t_nodes), -1)
    idx = np.clip(np.searchsorted(t_nodes, tq, side="right") - 1, 0, len(t_nodes) - 2)
    t0 = t_nodes[idx]
    h = (t_nodes[idx + 1] - t0)[:, None]
    s = ((tq - t0)[:, None]) / h
    d00 = 6 * s * s - 6 * s
    d10 = 3 * s * s - 4 * s + 1
    d01 = -d00
    d11 = 3 * s * s - 2 * s
    out = (d00 * vals[idx] + d01 * vals[idx + 1]) / h + d10 * ders[idx] + d11 * ders[idx + 1]
    return out.reshape((-1,) + shape)


# --------------------------------------------------------------------------
# Right-hand sides
# --------------------------------------------------------------------------


def _initial_components(model: ModelManifold, x0, v0) -> tuple[np.ndarray, np.ndarray]:
    x = model.check_point(x0).astype(float)
    if isinstance(v0, Tangent):
        v0 = v0.components
    v = np.asarray(v0, dtype=float)
    if v.shape != (model.ambient_dim,):
        raise DomainError(f"velocity must have {model.ambient_dim} coordinate components")
    x = model.project(x)
    v = model.tangent_project(x, v)
    return x, model.coframe(x) @ v


def _geodesic_rhs(model: ModelManifold, with_b: bool, transport: bool):
    nx = model.ambient_dim
    m = model.frame_size
    jm = model.j_frame

    def rhs(t, y):
        x = y[:nx]
        v = y[nx : nx + m]
        tw, tau, fr = connection_at(model, x, with_frame=True)
        out = np.empty_like(y)
        out[:nx] = fr @ v
        acc = -np.einsum("abc,a,b->c", tw, v, v)
        pos = nx + m
        if with_b:
            b = y[pos]
            acc -= 2.0 * b * (jm @ v)
            out[pos] = v @ tau @ v
            pos += 1
        out[nx : nx + m] = acc
        if transport:
            frame_t = y[pos:].reshape(m, m)
            out[pos:] = (-np.einsum("abc,a,bj->cj", tw, v, frame_t)).ravel()
        return out

    return rhs


def _post(model: ModelManifold):
    nx = model.ambient_dim
    if nx == model.dim:
        return None

    def post(y):
        y = y.copy()
        y[:nx] = model.project(y[:nx])
        return y

    return post


def _solution_from_states(model, grid, ys, ds, h, kind, with_b, transport, breakpoints, initial):
    nx, m = model.ambient_dim, model.frame_size
    coords = ys[:, :nx]
    vel = ys[:, nx : nx + m]
    pos = nx + m
    b = b_dot = None
    if with_b:
        b, b_dot = ys[:, pos].copy(), ds[:, pos].copy()
        pos += 1
    tr = tr_dot = None
    if transport:
        tr = ys[:, pos:].reshape(-1, m, m)
        tr_dot = ds[:, pos:].reshape(-1, m, m)
    return CurveSolution(
        model=model,
        t_grid=grid,
        coords=coords,
        coord_velocity=ds[:, :nx],
        velocity=vel,
        velocity_dot=ds[:, nx : nx + m],
        b=b,
        b_dot=b_dot,
        h=float(h),
        kind=kind,
        transport=tr,
        transport_dot=tr_dot,
        breakpoints=tuple(sorted(float(t) for t in breakpoints)),
        initial=initial,
    )


def _run_connection_ode(model, x0, v0, b0, t_max, h, transport, breakpoints, kind):
    x, v = _initial_components(model, x0, v0)
    with_b = b0 is not None
    m = model.frame_size
    parts = [x, v]
    if with_b:
        parts.append(np.array([float(b0)]))
    if transport is not False and transport is not None:
        start = np.eye(m) if transport is True else np.asarray(transport, dtype=float)
        if start.shape != (m, m):
            raise DomainError(f"initial transported frame must be {m}x{m}")
        parts.append(start.ravel())
        transport = True
    else:
        transport = False
    grid = make_grid(0.0, t_max, h, breakpoints)
    rhs = _geodesic_rhs(model, with_b, transport)
    ys, ds = rk4(rhs, np.concatenate(parts), grid, _post(model))
    initial = {
        "x0": x.tolist(),
        "v0": (model.frame(x) @ v).tolist(),
        "b0": None if b0 is None else float(b0),
        "t_max": float(t_max),
    }
    return _solution_from_states(
        model, grid, ys, ds, h, kind, with_b, transport, [b for b in breakpoints if 0 < b < t_max], initial
    )


def integrate_tw_geodesic(
    model: ModelManifold,
    x0,
    v0,
    t_max: float,
    h: float = DEFAULT_STEP,
    transport=False,
    breakpoints=(),
) -> CurveSolution:
    """Geodesic of the Tanaka-Webster connection, ``nabla_{dot gamma} dot gamma = 0``.

    ``transport`` may be ``True`` (transport the adapted frame) or an initial
    ``(m, m)`` matrix whose columns are frame components of the vectors to carry.
    """
    return _run_connection_ode(model, x0, v0, None, t_max, h, transport, breakpoints, "tw")


def integrate_sr_geodesic(
    model: ModelManifold,
    x0,
    v0,
    b0: float,
    t_max: float,
    h: float = DEFAULT_STEP,
    transport=False,
    breakpoints=(),
) -> CurveSolution:
    """Sub-Riemannian geodesic in connection form: ``v' = -2 b J v``, ``b' = A(v, v)``."""
    x, v = _initial_components(model, x0, v0)
    if abs(v[-1]) > 1e-10 * max(1.0, np.linalg.norm(v)):
        raise DomainError("initial velocity must be horizontal")
    if np.linalg.norm(v) == 0:
        raise DomainError("initial velocity must be nonzero")
    return _run_connection_ode(model, x0, v0, b0, t_max, h, transport, breakpoints, "sr")


def reintegrate(sol: CurveSolution, breakpoints=(), transport=None, h: float | None = None) -> CurveSolution:
    """Re-run a connection-form geodesic with extra breakpoints and/or a transported frame."""
    if sol.kind not in ("tw", "sr"):
        raise DomainError("only connection-form geodesics can be re-integrated")
    init = sol.initial
    bps = sorted(set(sol.breakpoints) | {float(b) for b in breakpoints})
    step = sol.h if h is None else h
    tr = False if transport is None else transport
    return _run_connection_ode(
        sol.model, np.array(init["x0"]), np.array(init["v0"]), init["b0"], init["t_max"], step, tr, bps, sol.kind
    )


def hamiltonian(model: ModelManifold, x, xi) -> np.ndarray:
    """``H(x, xi) = 1/2 sum_a xi(e_a)^2`` over the horizontal frame, batched."""
    fr = model.frame(x)[..., :, :-1]
    p = np.einsum("...i,...ia->...a", xi, fr)
    return 0.5 * np.sum(p * p, axis=-1)


def integrate_hamiltonian(
    model: ModelManifold, x0, xi0, t_max: float, h: float = DEFAULT_STEP, breakpoints=()
) -> CurveSolution:
    """Hamilton's equations for the sub-Riemannian Hamiltonian on coordinate covectors."""
    x = model.project(model.check_point(x0).astype(float))
    xi = np.asarray(xi0, dtype=float)
    if xi.shape != (model.ambient_dim,):
        raise DomainError(f"covector must have {model.ambient_dim} components")
    nx = model.ambient_dim

    def rhs(t, y):
        xx, cov = y[:nx], y[nx:]
        fr = model.frame(xx)[:, :-1]
        dfr = model.frame_jacobian(xx)[:, :-1, :]
        p = cov @ fr
        out = np.empty_like(y)
        out[:nx] = fr @ p
        out[nx:] = -np.einsum("a,i,iak->k", p, cov, dfr)
        return out

    grid = make_grid(0.0, t_max, h, breakpoints)
    ys, ds = rk4(rhs, np.concatenate([x, xi]), grid, _post(model))
    coords, cov = ys[:, :nx], ys[:, nx:]
    xdot, covdot = ds[:, :nx], ds[:, nx:]
    co = model.coframe(coords)
    vel = np.einsum("kai,ki->ka", co, xdot)
    # d/dt of xi(e_a) along the flow gives the frame-component acceleration.
    fr = model.frame(coords)
    dfr = model.frame_jacobian(coords)
    vdot = np.einsum("ki,kia->ka", covdot, fr) + np.einsum("ki,kiaj,kj->ka", cov, dfr, xdot)
    vdot[:, -1] = 0.0
    return CurveSolution(
        model=model,
        t_grid=grid,
        coords=coords,
        coord_velocity=xdot,
        velocity=vel,
        velocity_dot=vdot,
        h=float(h),
        kind="hamiltonian",
        covector=cov,
        covector_dot=covdot,
        breakpoints=tuple(float(t) for t in breakpoints),
        initial={"x0": x.tolist(), "xi0": xi.tolist()},
    )


# --------------------------------------------------------------------------
# Lifts and derived quantities
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CotangentLift:
    """Covectors along a lengthy curve.

    ``covector[k]`` is ``g(dot gamma, .) + theta`` (so ``xi(T) = 1``); ``a`` is
    the scalar with ``xi + a theta`` solving Hamilton's equations, when known.
    """

    curve: CurveSolution
    covector: np.ndarray
    a: np.ndarray | None = None

    def reconstruction_residual(self) -> float:
        """Largest gap between the cometric image of the covector and the velocity."""
        fr = self.curve.model.frame(self.curve.coords)
        p = np.einsum("ki,kia->ka", self.covector, fr[:, :, :-1])
        image = np.einsum("kia,ka->ki", fr[:, :, :-1], p)
        return float(np.max(np.abs(image - self.curve.coord_velocity)))

    def reeb_values(self) -> np.ndarray:
        fr = self.curve.model.frame(self.curve.coords)
        return np.einsum("ki,ki->k", self.covector, fr[:, :, -1])


def covector_from_components(model: ModelManifold, x, comps: np.ndarray, reeb_value: float) -> np.ndarray:
    """Coordinate covector with ``xi(e_a) = comps[a]`` on H and ``xi(T) = reeb_value``."""
    co = model.coframe(np.asarray(x, dtype=float))
    full = np.array(comps, dtype=float)
    full[-1] = reeb_value
    return full @ co


def hamiltonian_initial_covector(model: ModelManifold, x0, v0, b0: float) -> np.ndarray:
    """Covector whose Hamiltonian trajectory is the geodesic with data ``(v0, b0)``."""
    x, v = _initial_components(model, x0, v0)
    return covector_from_components(model, x, v, b0)


def canonical_lift(sol: CurveSolution) -> CotangentLift:
    """The lift ``xi_j = G_ij dot x^i + theta_j``; ``a = b - 1`` when ``b`` is known."""
    if not sol.is_lengthy():
        raise DomainError(f"curve is not lengthy (max |theta(v)| = {sol.theta_residual():.3g})")
    co = sol.model.coframe(sol.coords)
    comps = sol.velocity.copy()
    comps[:, -1] = 1.0
    cov = np.einsum("ka,kai->ki", comps, co)
    a = None if sol.b is None else sol.b - 1.0
    if sol.kind == "tw" and sol.model.sasakian:
        a = -np.ones(len(sol.t_grid))
    return CotangentLift(sol, cov, a)


def strichartz_a(sol: CurveSolution, t: float) -> float:
    """``a(t) = -|v|^{-2} g(D_v v, J v) / 2 - 1`` with ``D`` the Levi-Civita connection."""
    t = float(t)
    if not sol.t0 < t < sol.t1:
        raise DomainError(f"a(t) needs an interior time, got {t}")
    model = sol.model
    x = sol.point_at(t)[0]
    v = sol.velocity_at(t)[0]
    vdot = sol.velocity_dot_at(t)[0]
    on_node = np.isclose(sol.t_grid, t, rtol=0, atol=1e-14)
    if np.any(on_node):
        k = int(np.argmax(on_node))
        x, v, vdot = sol.coords[k], sol.velocity[k], sol.velocity_dot[k]
    norm2 = float(v @ v)
    if norm2 == 0:
        raise DomainError("a(t) is undefined where the velocity vanishes")
    _, _, lc = connection_at(model, x, levi_civita_too=True)
    acc = vdot + np.einsum("abc,a,b->c", lc, v, v)
    return float(-0.5 * (acc @ (model.j_frame @ v)) / norm2 - 1.0)


def length(sol: CurveSolution, a: float | None = None, b: float | None = None) -> float:
    """``int_a^b |dot gamma| dt`` by composite Simpson on the dense output."""
    a = sol.t0 if a is None else float(a)
    b = sol.t1 if b is None else float(b)
    if b < a:
        raise DomainError(f"reversed interval [{a}, {b}]")
    sol._check_t([a, b])
    if a == b:
        return 0.0
    inner = sol.t_grid[(sol.t_grid > a) & (sol.t_grid < b)]
    nodes = np.concatenate([[a], inner, [b]])
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    pts = np.empty(2 * len(nodes) - 1)
    pts[0::2] = nodes
    pts[1::2] = mids
    speed = np.linalg.norm(sol.velocity_at(pts), axis=1)
    return float(simpson(speed, x=pts))


def step_halving_error(integrator, *args, **kwargs) -> float:
    """Sup-norm difference between runs at ``h`` and ``h / 2`` on the common nodes."""
    h = kwargs.pop("h", DEFAULT_STEP)
    coarse = integrator(*args, h=h, **kwargs)
    fine = integrator(*args, h=0.5 * h, **kwargs)
    return float(np.max(np.abs(fine.point_at(coarse.t_grid) - coarse.coords)))


def write_trajectory_csv(sol: CurveSolution, path) -> None:
    nx = sol.model.ambient_dim
    header = ["t"] + [f"x{i}" for i in range(nx)] + [f"v{i}" for i in range(nx)] + ["b"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k, t in enumerate(sol.t_grid):
            b = "" if sol.b is None else repr(float(sol.b[k]))
            row = [repr(float(t))]
            row += [repr(float(c)) for c in sol.coords[k]]
            row += [repr(float(c)) for c in sol.coord_velocity[k]]
            writer.writerow(row + [b])
