"""Parallel frames, Jacobi fields, conjugate points and index forms.

Fields along a geodesic are stored by their components in a parallel
orthonormal frame ``E_1, ..., E_{2n}, T`` with ``E_1`` the unit tangent and
``E_2 = J E_1``.  In that frame covariant derivatives along the curve are
plain time derivatives and the Jacobi equation

    X'' - 2 Omega(X', v) T + theta(X') tau v + theta(X) (nabla_v tau) v + R(X, v) v = 0

becomes the linear system ``x'' = -K(t) x - B(t) x'``.  Its fundamental
matrix is propagated with RK4 on the geodesic's grid; coefficients at step
midpoints come from cubic Hermite interpolation of the transported state.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, simpson
from scipy.optimize import minimize_scalar

from . import kernels
from .connection import CHUNK, curvature_batch
from .errors import ConjugateIntervalError, DomainError, HypothesisViolation
from .geodesics import CurveSolution, reintegrate

RANK_CUTOFF = 1e-6
ABS_FLOOR = 1e-8
NODE_TOL = 1e-9


# --------------------------------------------------------------------------
# Parallel frame
# --------------------------------------------------------------------------


def adapted_start_frame(j_frame: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Orthonormal J-adapted basis (columns) with first vector ``v / |v|`` and the Reeb vector last."""
    m = len(v)
    r = m - 1
    unit = np.array(v, dtype=float)
    unit[r] = 0.0
    norm = np.linalg.norm(unit)
    cols = []
    if norm > 0:
        cols += [unit / norm, j_frame @ (unit / norm)]
    for k in range(r):
        if len(cols) == r:
            break
        cand = np.zeros(m)
        cand[k] = 1.0
        for c in cols:
            cand -= (c @ cand) * c
        if np.linalg.norm(cand) < 1e-8:
            continue
        cand /= np.linalg.norm(cand)
        jc = j_frame @ cand
        for c in cols:
            jc -= (c @ jc) * c
        if np.linalg.norm(jc) < 1e-8:
            continue
        cols += [cand, jc / np.linalg.norm(jc)]
    reeb = np.zeros(m)
    reeb[r] = 1.0
    return np.column_stack(cols + [reeb])


@dataclass(frozen=True)
class ParallelFrame:
    """Parallel orthonormal frame along a Tanaka-Webster geodesic.

    ``frames[k]`` holds adapted-frame components of ``E_1, ..., T`` as columns.
    """

    curve: CurveSolution
    frames: np.ndarray
    frames_dot: np.ndarray

    def gram_drift(self) -> float:
        gram = np.einsum("kai,kaj->kij", self.frames, self.frames)
        return float(np.max(np.abs(gram - np.eye(gram.shape[-1]))))

    def j_drift(self) -> float:
        jm = self.curve.model.j_frame
        mats = np.einsum("kai,ab,kbj->kij", self.frames, jm, self.frames)
        return float(np.max(np.abs(mats - jm)))

    def coordinate_vectors(self, k: int) -> np.ndarray:
        """Coordinate components (columns) of the frame at node ``k``."""
        return self.curve.model.frame(self.curve.coords[k]) @ self.frames[k]


def _require_geodesic(sol: CurveSolution) -> None:
    if sol.kind != "tw":
        raise DomainError("a Tanaka-Webster geodesic is required")
    if not sol.is_lengthy():
        raise DomainError("the geodesic must be lengthy")
    if np.linalg.norm(sol.velocity[0]) == 0:
        raise DomainError("the geodesic must have nonzero speed")


def parallel_frame(sol: CurveSolution) -> ParallelFrame:
    """Transport the J-adapted frame starting at ``dot gamma(0) / |dot gamma(0)|``."""
    cached = sol.__dict__.get("_parallel")
    if cached is not None:
        return cached
    _require_geodesic(sol)
    start = adapted_start_frame(sol.model.j_frame, sol.velocity[0])
    if sol.transport is not None and np.allclose(sol.transport[0], start, atol=1e-14, rtol=0):
        carrier = sol
    else:
        carrier = reintegrate(sol, transport=start)
    pf = ParallelFrame(carrier, carrier.transport, carrier.transport_dot)
    sol.__dict__["_parallel"] = pf
    carrier.__dict__["_parallel"] = pf
    return pf


# --------------------------------------------------------------------------
# Coefficients of the Jacobi system
# --------------------------------------------------------------------------


def _geometry_along(model, coords: np.ndarray, vel: np.ndarray) -> dict:
    """Curvature operator ``x -> R(x, v) v``, ``(nabla_v tau) v``, ``tau v`` and ``A(v, v)``."""
    npts, m = vel.shape
    if model.left_invariant:
        k = curvature_batch(model, model.origin()[None])
        curv, ntau, tau = k["curv"][0], k["nabla_tau"][0], k["tau"][0]
        return {
            "curv_op": np.einsum("abcf,pb,pc->pfa", curv, vel, vel),
            "ntau_v": np.einsum("pa,acb,pb->pc", vel, ntau, vel),
            "tau_v": np.einsum("cb,pb->pc", tau, vel),
        }
    out = {"curv_op": [], "ntau_v": [], "tau_v": []}
    per = max(1, CHUNK // (4 * m))
    for start in range(0, npts, per):
        sl = slice(start, start + per)
        k = curvature_batch(model, coords[sl])
        v = vel[sl]
        out["curv_op"].append(np.einsum("pabcf,pb,pc->pfa", k["curv"], v, v))
        out["ntau_v"].append(np.einsum("pa,pacb,pb->pc", v, k["nabla_tau"], v))
        out["tau_v"].append(np.einsum("pcb,pb->pc", k["tau"], v))
    return {key: np.concatenate(val) for key, val in out.items()}


@dataclass
class JacobiSystem:
    """Coefficients and fundamental matrix of the Jacobi system along one geodesic."""

    frame: ParallelFrame
    speed: float
    gamma_dot: np.ndarray  # parallel components of dot gamma (constant)
    k_nodes: np.ndarray
    b_nodes: np.ndarray
    a_nodes: np.ndarray
    a_mids: np.ndarray
    curv_nodes: np.ndarray  # parallel-frame matrix of x -> R(x, v) v
    avv_nodes: np.ndarray  # A(v, v)
    _fundamental: np.ndarray | None = field(default=None, repr=False)

    @property
    def curve(self) -> CurveSolution:
        return self.frame.curve

    @property
    def t(self) -> np.ndarray:
        return self.curve.t_grid

    @property
    def m(self) -> int:
        return self.curve.model.frame_size

    def fundamental(self) -> np.ndarray:
        """``(K+1, 2m, 2m)`` solution matrix with identity data at ``t_0``."""
        if self._fundamental is None:
            self._fundamental = self.propagator(0)
        return self._fundamental

    def propagator(self, i0: int, i1: int | None = None) -> np.ndarray:
        """Solution matrices on nodes ``i0..i1`` with identity data at node ``i0``."""
        i1 = len(self.t) - 1 if i1 is None else i1
        steps = np.diff(self.t[i0 : i1 + 1])
        eye = np.eye(2 * self.m)
        return kernels.propagate_linear(self.a_nodes[i0 : i1 + 1], self.a_mids[i0:i1], steps, eye)

    def second_derivative(self, k_index: np.ndarray, x: np.ndarray, dx: np.ndarray) -> np.ndarray:
        """``x'' = -K x - B x'`` at the given nodes."""
        return -np.einsum("kij,kj->ki", self.k_nodes[k_index], x) - np.einsum(
            "kij,kj->ki", self.b_nodes[k_index], dx
        )

    def omega_gamma(self, x: np.ndarray) -> np.ndarray:
        """``Omega(x, dot gamma)`` for parallel components ``x`` (last axis)."""
        jm = self.curve.model.j_frame
        return x @ (jm @ self.gamma_dot)


def _coefficients(model, coords, vel, frames):
    """Parallel-frame matrices ``K`` and ``B`` at the given states."""
    m = model.frame_size
    r = m - 1
    jm = model.j_frame
    geo = _geometry_along(model, coords, vel)
    npts = len(coords)
    k_e = geo["curv_op"].copy()
    k_e[:, :, r] += geo["ntau_v"]
    b_e = np.zeros((npts, m, m))
    b_e[:, r, :] = -2.0 * np.einsum("ab,pb->pa", jm, vel)
    b_e[:, :, r] += geo["tau_v"]
    to_par = np.swapaxes(frames, 1, 2)
    k_par = to_par @ k_e @ frames
    b_par = to_par @ b_e @ frames
    curv_par = to_par @ geo["curv_op"] @ frames
    avv = np.einsum("pc,pc->p", geo["tau_v"], vel)
    return k_par, b_par, curv_par, avv


def _block(k_mat: np.ndarray, b_mat: np.ndarray) -> np.ndarray:
    npts, m, _ = k_mat.shape
    out = np.zeros((npts, 2 * m, 2 * m))
    out[:, :m, m:] = np.eye(m)
    out[:, m:, :m] = -k_mat
    out[:, m:, m:] = -b_mat
    return out


def jacobi_system(sol: CurveSolution) -> JacobiSystem:
    """Build (and cache on the curve) the Jacobi system along a TW geodesic."""
    cached = sol.__dict__.get("_jacobi")
    if cached is not None:
        return cached
    pf = parallel_frame(sol)
    curve = pf.curve
    model = curve.model
    t = curve.t_grid
    mids = 0.5 * (t[:-1] + t[1:])
    x_mid = curve.point_at(mids)
    v_mid = curve.velocity_at(mids)
    p_mid = curve.transport_at(mids)
    k_n, b_n, c_n, avv = _coefficients(model, curve.coords, curve.velocity, curve.transport)
    k_m, b_m, _, _ = _coefficients(model, x_mid, v_mid, p_mid)
    speed = float(np.linalg.norm(curve.velocity[0]))
    gdot = np.zeros(model.frame_size)
    gdot[0] = speed
    system = JacobiSystem(pf, speed, gdot, k_n, b_n, _block(k_n, b_n), _block(k_m, b_m), c_n, avv)
    for s in (sol, curve):
        s.__dict__["_jacobi"] = system
    return system


# --------------------------------------------------------------------------
# Fields along a curve
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FieldPiece:
    """One smooth piece: node indices ``i0..i1`` and parallel components with derivatives."""

    i0: int
    i1: int
    x: np.ndarray
    dx: np.ndarray
    ddx: np.ndarray | None = None


@dataclass(frozen=True)
class FieldAlongCurve:
    """Piecewise-smooth vector field along a geodesic in parallel-frame components."""

    curve: CurveSolution
    pieces: tuple

    @property
    def a(self) -> float:
        return float(self.curve.t_grid[self.pieces[0].i0])

    @property
    def b(self) -> float:
        return float(self.curve.t_grid[self.pieces[-1].i1])

    @property
    def breakpoints(self) -> list:
        return [float(self.curve.t_grid[p.i0]) for p in self.pieces[1:]]

    def piece_times(self, piece: FieldPiece) -> np.ndarray:
        return self.curve.t_grid[piece.i0 : piece.i1 + 1]

    def _piece_for(self, t: float) -> FieldPiece:
        for p in self.pieces:
            if self.curve.t_grid[p.i0] - 1e-12 <= t <= self.curve.t_grid[p.i1] + 1e-12:
                return p
        raise DomainError(f"t = {t} outside the field's interval [{self.a}, {self.b}]")

    def value_at(self, t: float) -> np.ndarray:
        p = self._piece_for(float(t))
        return kernels.hermite(self.piece_times(p), p.x, p.dx, np.array([float(t)]))[0]

    def derivative_at(self, t: float) -> np.ndarray:
        p = self._piece_for(float(t))
        if p.ddx is None:
            raise DomainError("field has no second derivative data")
        return kernels.hermite(self.piece_times(p), p.dx, p.ddx, np.array([float(t)]))[0]

    def nodes(self):
        """Concatenated ``(t, x, dx)`` over all pieces (breakpoint nodes repeated)."""
        ts = np.concatenate([self.piece_times(p) for p in self.pieces])
        return ts, np.concatenate([p.x for p in self.pieces]), np.concatenate([p.dx for p in self.pieces])

    def sup_norm(self) -> float:
        return float(max(np.max(np.linalg.norm(p.x, axis=1)) for p in self.pieces))

    def reeb_sup(self) -> float:
        return float(max(np.max(np.abs(p.x[:, -1])) for p in self.pieces))

    def coordinate_values(self) -> np.ndarray:
        """Coordinate components of the field at every node (pieces concatenated)."""
        curve = self.curve
        out = []
        for p in self.pieces:
            idx = np.arange(p.i0, p.i1 + 1)
            fr = curve.model.frame(curve.coords[idx])
            out.append(np.einsum("kia,kab,kb->ki", fr, curve.transport[idx], p.x))
        return np.concatenate(out)

    def to_csv(self, path) -> None:
        m = self.curve.model.frame_size
        ts, xs, dxs = self.nodes()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"X{i}" for i in range(m)] + [f"dX{i}" for i in range(m)])
            for t, x, dx in zip(ts, xs, dxs):
                w.writerow([repr(float(t))] + [repr(float(c)) for c in x] + [repr(float(c)) for c in dx])


@dataclass(frozen=True)
class JacobiField(FieldAlongCurve):
    """A Jacobi field; ``seed`` holds ``(X, X')`` at the first node of its interval."""

    seed: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def residual(self) -> float:
        """Max Jacobi residual at interior nodes, with ``X''`` from a fourth-order stencil."""
        worst = 0.0
        for p in self.pieces:
            t = self.piece_times(p)
            steps = np.diff(t)
            if len(t) < 5:
                continue
            # uniform runs only
            h = steps[0]
            if np.max(np.abs(steps - h)) > 1e-12 * max(1.0, abs(t[-1])):
                raise DomainError("residual check needs a uniform piece")
            x = p.x
            d2 = (-x[4:] + 16 * x[3:-1] - 30 * x[2:-2] + 16 * x[1:-3] - x[:-4]) / (12 * h * h)
            system = jacobi_system(self.curve)
            idx = np.arange(p.i0 + 2, p.i1 - 1)
            rhs = system.second_derivative(idx, x[2:-2], p.dx[2:-2])
            scale = max(1.0, float(np.max(np.abs(x))))
            worst = max(worst, float(np.max(np.abs(d2 - rhs))) / scale)
        return worst


def _node_index(curve: CurveSolution, t: float) -> int:
    k = int(np.argmin(np.abs(curve.t_grid - t)))
    if abs(curve.t_grid[k] - t) > NODE_TOL * max(1.0, abs(t)):
        raise DomainError(f"t = {t} is not a grid node; re-integrate with it as a breakpoint")
    return k


def _field_from_states(system: JacobiSystem, i0: int, i1: int, states: np.ndarray, seed) -> JacobiField:
    m = system.m
    x, dx = states[:, :m], states[:, m:]
    idx = np.arange(i0, i1 + 1)
    ddx = system.second_derivative(idx, x, dx)
    piece = FieldPiece(i0, i1, x, dx, ddx)
    return JacobiField(system.curve, (piece,), seed=np.array(seed, dtype=float))


def integrate_jacobi(sol: CurveSolution, x0, x0p, t_start: float | None = None) -> JacobiField:
    """Jacobi field with ``X = x0``, ``X' = x0p`` (parallel components) at ``t_start``."""
    system = jacobi_system(sol)
    m = system.m
    x0 = np.asarray(x0, dtype=float)
    x0p = np.asarray(x0p, dtype=float)
    if x0.shape != (m,) or x0p.shape != (m,):
        raise DomainError(f"initial data must have {m} components each")
    seed = np.concatenate([x0, x0p])
    if t_start is None or _node_index(system.curve, t_start) == 0:
        states = system.fundamental() @ seed
        return _field_from_states(system, 0, len(system.t) - 1, states, seed)
    i0 = _node_index(system.curve, t_start)
    states = system.propagator(i0) @ seed
    return _field_from_states(system, i0, len(system.t) - 1, states, seed)


def jacobi_solution_space_rank(sol: CurveSolution) -> int:
    """Numerical rank of the map from initial data to Jacobi fields (sampled at all nodes)."""
    fund = jacobi_system(sol).fundamental()
    mat = fund[:, : jacobi_system(sol).m, :].reshape(-1, fund.shape[-1])
    sv = np.linalg.svd(mat, compute_uv=False)
    return int(np.sum(sv > RANK_CUTOFF * sv[0]))


# --------------------------------------------------------------------------
# Decomposition and conserved quantities
# --------------------------------------------------------------------------


def _single_piece(field_: FieldAlongCurve) -> FieldPiece:
    if len(field_.pieces) != 1:
        raise DomainError("a smooth (single-piece) field is required")
    return field_.pieces[0]


@dataclass(frozen=True)
class Decomposition:
    """``X = a dot gamma + b t dot gamma + Y``; unpacks as ``(a, b, Y)``."""

    a: float
    b: float
    Y: JacobiField
    slant_residual: float

    def __iter__(self):
        return iter((self.a, self.b, self.Y))


def decompose(sol: CurveSolution, X: FieldAlongCurve, gate: float = 1e-6) -> Decomposition:
    """Split ``X = a dot gamma + b t dot gamma + Y`` with ``Y`` slant relative to ``X``.

    ``slant_residual`` is the sup gap in
    ``g(Y, dot gamma)(t) + int_0^t theta(X) A(dot gamma, dot gamma) = 0``.  For speed ``r`` the constants are
    divided by ``r^2`` so that the split is exact for any constant speed.
    """
    system = jacobi_system(sol)
    piece = _single_piece(X)
    if piece.i0 != 0:
        raise DomainError("the field must start at the start of the geodesic")
    res = JacobiField(X.curve, X.pieces).residual() if not isinstance(X, JacobiField) else X.residual()
    if not res < gate:
        raise DomainError(f"field is not a Jacobi field (residual {res:.3g})")
    r2 = system.speed**2
    g0 = system.gamma_dot
    idx = np.arange(piece.i0, piece.i1 + 1)
    avv = system.avv_nodes[idx]
    a = float(piece.x[0] @ g0) / r2
    b = float(piece.dx[0] @ g0 + piece.x[0, -1] * avv[0]) / r2
    t = system.t[idx]
    y = piece.x - np.outer(a + b * t, g0)
    dy = piece.dx - b * g0[None, :]
    ddy = None if piece.ddx is None else piece.ddx.copy()
    Y = JacobiField(X.curve, (FieldPiece(piece.i0, piece.i1, y, dy, ddy),), seed=np.concatenate([y[0], dy[0]]))
    integral = cumulative_simpson(piece.x[:, -1] * avv, x=t, initial=0.0)
    j3 = float(np.max(np.abs(y @ g0 + integral)))
    return Decomposition(a, b, Y, j3)


@dataclass(frozen=True)
class ConservedQuantity:
    mean: float
    drift: float


def jacobi_constants(sol: CurveSolution, X: FieldAlongCurve):
    """The two first integrals of a Jacobi field along a geodesic.

    ``d/dt g(X, dot gamma) + theta(X) A(dot gamma, dot gamma)`` and
    ``d/dt theta(X) - 2 Omega(X, dot gamma)``.
    """
    system = jacobi_system(sol)
    piece = _single_piece(X)
    idx = np.arange(piece.i0, piece.i1 + 1)
    first = piece.dx @ system.gamma_dot + piece.x[:, -1] * system.avv_nodes[idx]
    second = piece.dx[:, -1] - 2.0 * system.omega_gamma(piece.x)
    return tuple(
        ConservedQuantity(float(np.mean(q)), float(np.max(np.abs(q - q[0])))) for q in (first, second)
    )


# --------------------------------------------------------------------------
# Singular-value scans
# --------------------------------------------------------------------------


def _ratio(mat: np.ndarray, reference: float | None) -> float:
    sv = np.linalg.svd(mat, compute_uv=False)
    denom = sv[0] if reference is None else reference
    return float(sv[-1] / denom) if denom > 0 else 0.0


def _scan(t: np.ndarray, mats: np.ndarray, dmats: np.ndarray, square: bool, skip: float):
    """Times in ``t`` where the value matrices lose rank, with multiplicities."""
    shape = mats.shape[1:]
    flat = mats.reshape(len(t), -1)
    dflat = dmats.reshape(len(t), -1)
    sv = np.linalg.svd(mats, compute_uv=False)
    reference = None if square else float(np.max(sv[:, 0]))
    denom = sv[:, 0] if square else np.full(len(t), max(reference, 1e-300))
    ratio = np.divide(sv[:, -1], denom, out=np.zeros(len(t)), where=denom > 0)

    def mat_at(s):
        return kernels.hermite(t, flat, dflat, np.array([s]))[0].reshape(shape)

    def ratio_at(s):
        return _ratio(mat_at(s), reference)

    brackets = []
    start = int(np.searchsorted(t, t[0] + skip))
    if square:
        det = np.linalg.det(mats)
        for k in range(max(start, 1), len(t) - 1):
            if det[k] == 0.0 or np.sign(det[k]) != np.sign(det[k + 1]):
                brackets.append(k)
    for k in range(max(start, 1), len(t) - 1):
        if ratio[k] < 1e-2 and ratio[k] <= ratio[k - 1] and ratio[k] <= ratio[k + 1]:
            brackets.append(k)
    found = []
    for k in sorted(set(brackets)):
        lo, hi = t[max(k - 1, 0)], t[min(k + 2, len(t) - 1)]
        res = minimize_scalar(ratio_at, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13, "maxiter": 500})
        if res.fun < RANK_CUTOFF:
            tstar = float(res.x)
            if all(abs(tstar - f[0]) > 1e-7 for f in found):
                s = np.linalg.svd(mat_at(tstar), compute_uv=False)
                denom = s[0] if square else reference
                mult = int(np.sum(s < RANK_CUTOFF * denom))
                found.append((tstar, max(mult, 1)))
    return sorted(found)


def _window(system: JacobiSystem, t_max: float | None) -> int:
    if t_max is None:
        return len(system.t) - 1
    if t_max > system.t[-1] + 1e-12:
        raise DomainError(f"t_max = {t_max} exceeds the geodesic's domain")
    return int(np.searchsorted(system.t, t_max + 1e-12) - 1)


def conjugate_points(sol: CurveSolution, t_max: float | None = None):
    """Points conjugate to ``gamma(t_0)``: zeros of Jacobi fields with ``X(t_0) = 0``."""
    system = jacobi_system(sol)
    kmax = _window(system, t_max)
    fund = system.fundamental()[: kmax + 1]
    m = system.m
    vals = fund[:, :m, m:]
    ders = fund[:, m:, m:]
    return _scan(system.t[: kmax + 1], vals, ders, True, skip=10 * sol.h)


def _horizontal_indices(m: int) -> np.ndarray:
    return np.arange(m - 1)


def _null_space(mat: np.ndarray):
    """Right null space with the relative cutoff and an absolute floor."""
    if mat.size == 0:
        return np.eye(mat.shape[1]), np.zeros(0)
    _, sv, vt = np.linalg.svd(mat, full_matrices=True)
    floor = ABS_FLOOR * np.sqrt(mat.shape[0])
    cut = max(RANK_CUTOFF * (sv[0] if len(sv) else 0.0), floor)
    rank = int(np.sum(sv > cut))
    return vt[rank:].T, sv


def horizontal_seed_space(
    sol: CurveSolution,
    i0: int = 0,
    i1: int | None = None,
    vanishing_start: bool = False,
    perpendicular: bool = False,
):
    """Initial data ``(X, X')`` at node ``i0`` of everywhere-horizontal Jacobi fields on ``[t_i0, t_i1]``.

    ``perpendicular`` drops the ``dot gamma`` direction from the seeds.
    Returns a ``(2m, d)`` orthonormal basis.
    """
    system = jacobi_system(sol)
    m = system.m
    hor = _horizontal_indices(m)
    if perpendicular:
        hor = hor[1:]
    cols = []
    if not vanishing_start:
        cols += [np.eye(2 * m)[:, i] for i in hor]
    cols += [np.eye(2 * m)[:, m + i] for i in hor]
    seeds = np.column_stack(cols)
    prop = system.fundamental() if i0 == 0 else system.propagator(i0, i1)
    if i0 == 0 and i1 is not None:
        prop = prop[: i1 + 1]
    reeb_traj = prop[:, m - 1, :] @ seeds  # T-component of X at every node
    null, _ = _null_space(reeb_traj)
    return seeds @ null


def horizontal_dim(sol: CurveSolution) -> int:
    """Dimension of the space of everywhere-horizontal Jacobi fields along the geodesic."""
    return int(horizontal_seed_space(sol).shape[1])


def horizontally_conjugate(sol: CurveSolution, t_max: float | None = None):
    """Times where a horizontal Jacobi field vanishing at ``t_0`` vanishes again."""
    system = jacobi_system(sol)
    kmax = _window(system, t_max)
    basis = horizontal_seed_space(sol, 0, kmax, vanishing_start=True)
    if basis.shape[1] == 0:
        return []
    fund = system.fundamental()[: kmax + 1]
    m = system.m
    vals = fund[:, :m, :] @ basis
    ders = fund[:, m:, :] @ basis
    return [t for t, _ in _scan(system.t[: kmax + 1], vals, ders, False, skip=10 * sol.h)]


# --------------------------------------------------------------------------
# Index forms
# --------------------------------------------------------------------------


def _check_vanishing(field_: FieldAlongCurve, name: str, tol: float = 1e-9) -> None:
    scale = max(1.0, field_.sup_norm())
    ends = (field_.pieces[0].x[0], field_.pieces[-1].x[-1])
    if max(np.max(np.abs(e)) for e in ends) > tol * scale:
        raise DomainError(f"{name} must vanish at both endpoints")


def _same_support(X: FieldAlongCurve, Y: FieldAlongCurve) -> None:
    if X.curve is not Y.curve and not np.array_equal(X.curve.t_grid, Y.curve.t_grid):
        raise DomainError("fields live on different curves")
    if abs(X.a - Y.a) > 1e-12 or abs(X.b - Y.b) > 1e-12:
        raise DomainError("fields have different intervals")


def _common_pieces(X: FieldAlongCurve, Y: FieldAlongCurve, a: float, b: float):
    """Yield ``(idx, xp, yp)`` slices over the common refinement of both partitions on ``[a, b]``."""
    curve = X.curve
    ia, ib = _node_index(curve, a), _node_index(curve, b)
    cuts = {ia, ib}
    for f in (X, Y):
        for p in f.pieces:
            cuts |= {p.i0, p.i1}
    cuts = sorted(c for c in cuts if ia <= c <= ib)

    def part(f, lo, hi):
        for p in f.pieces:
            if p.i0 <= lo and hi <= p.i1:
                sl = slice(lo - p.i0, hi - p.i0 + 1)
                return p.x[sl], p.dx[sl], None if p.ddx is None else p.ddx[sl]
        raise DomainError(f"field does not cover [{curve.t_grid[lo]}, {curve.t_grid[hi]}]")

    for lo, hi in zip(cuts[:-1], cuts[1:]):
        yield np.arange(lo, hi + 1), part(X, lo, hi), part(Y, lo, hi)


def _perp(x: np.ndarray) -> np.ndarray:
    out = x.copy()
    out[..., 0] = 0.0
    return out


def index_form(sol: CurveSolution, X: FieldAlongCurve, Y: FieldAlongCurve, a: float | None = None, b: float | None = None) -> float:
    """Second-variation index form of a lengthy geodesic on a Sasakian manifold."""
    system = jacobi_system(sol)
    if not system.curve.model.sasakian:
        raise DomainError("the index form is available on Sasakian manifolds only")
    a = X.a if a is None else a
    b = X.b if b is None else b
    _same_support(X, Y)
    _check_vanishing(X, "X")
    _check_vanishing(Y, "Y")
    total = 0.0
    for idx, (x, dx, _), (y, dy, _) in _common_pieces(X, Y, a, b):
        x, dx, y, dy = _perp(x), _perp(dx), _perp(y), _perp(dy)
        rx = np.einsum("kij,kj->ki", system.curv_nodes[idx], x)
        ox, oy = system.omega_gamma(x), system.omega_gamma(y)
        integrand = (
            np.einsum("ki,ki->k", dx, dy)
            - np.einsum("ki,ki->k", rx, y)
            - 2.0 * ox * dy[:, -1]
            - 2.0 * (dx[:, -1] - 2.0 * ox) * oy
        )
        total += simpson(integrand, x=system.t[idx])
    return float(total / system.speed)


def index_form_by_parts(
    sol: CurveSolution, X: FieldAlongCurve, Y: FieldAlongCurve, a: float | None = None, b: float | None = None
) -> float:
    """The index form after integration by parts (Jacobi operator plus corner jumps)."""
    system = jacobi_system(sol)
    if not system.curve.model.sasakian:
        raise DomainError("the index form is available on Sasakian manifolds only")
    a = X.a if a is None else a
    b = X.b if b is None else b
    _same_support(X, Y)
    _check_vanishing(X, "X")
    _check_vanishing(Y, "Y")
    total = 0.0
    left_derivs = []
    right_derivs = []
    for idx, (x, dx, ddx), (y, _, _) in _common_pieces(X, Y, a, b):
        if ddx is None:
            raise DomainError("X needs second-derivative data")
        x, dx, ddx, y = _perp(x), _perp(dx), _perp(ddx), _perp(y)
        jac = ddx + np.einsum("kij,kj->ki", system.curv_nodes[idx], x)
        jac[:, -1] -= 2.0 * system.omega_gamma(dx)
        ox, oy = system.omega_gamma(x), system.omega_gamma(y)
        integrand = np.einsum("ki,ki->k", jac, y) + 2.0 * (dx[:, -1] - 2.0 * ox) * oy
        total -= simpson(integrand, x=system.t[idx])
        left_derivs.append((dx[0], y[0]))
        right_derivs.append((dx[-1], y[-1]))
    corners = 0.0
    for (d_minus, y_c), (d_plus, _) in zip(right_derivs[:-1], left_derivs[1:]):
        corners += float((d_minus - d_plus) @ y_c)
    return float((total + corners) / system.speed)


def index_I_ab(sol: CurveSolution, X: FieldAlongCurve, a: float | None = None, b: float | None = None) -> float:
    """``int_a^b |X'|^2 - g(R(X, v) v, X) dt`` for a piecewise-smooth field."""
    system = jacobi_system(sol)
    a = X.a if a is None else a
    b = X.b if b is None else b
    total = 0.0
    for idx, (x, dx, _), _ in _common_pieces(X, X, a, b):
        rx = np.einsum("kij,kj->ki", system.curv_nodes[idx], x)
        integrand = np.einsum("ki,ki->k", dx, dx) - np.einsum("ki,ki->k", rx, x)
        total += simpson(integrand, x=system.t[idx])
    return float(total)


# --------------------------------------------------------------------------
# Field builders
# --------------------------------------------------------------------------


def field_from_functions(sol: CurveSolution, pieces, a: float, b: float, breakpoints=()) -> FieldAlongCurve:
    """Build a field from per-piece callables ``t -> (x, x', x'')`` (each ``(len(t), m)``).

    ``pieces`` is a single callable or one callable per smooth piece of
    ``[a, b]`` split at ``breakpoints`` (which must be grid nodes).
    """
    system = jacobi_system(sol)
    curve = system.curve
    cuts = [_node_index(curve, s) for s in [a, *breakpoints, b]]
    funcs = pieces if isinstance(pieces, (list, tuple)) else [pieces] * (len(cuts) - 1)
    if len(funcs) != len(cuts) - 1:
        raise DomainError("one callable per piece is required")
    out = []
    for f, lo, hi in zip(funcs, cuts[:-1], cuts[1:]):
        t = curve.t_grid[lo : hi + 1]
        x, dx, ddx = (np.asarray(q, dtype=float) for q in f(t))
        out.append(FieldPiece(lo, hi, x, dx, ddx))
    return FieldAlongCurve(curve, tuple(out))


def scalar_field(sol: CurveSolution, profile, direction, a: float, b: float, breakpoints=()) -> FieldAlongCurve:
    """``f(t) * direction`` with ``profile(t) -> (f, f', f'')`` and constant parallel components."""
    direction = np.asarray(direction, dtype=float)

    def build(t):
        f, df, ddf = profile(t)
        return np.outer(f, direction), np.outer(df, direction), np.outer(ddf, direction)

    return field_from_functions(sol, build, a, b, breakpoints)


def restrict(field_: FieldAlongCurve, a: float, b: float) -> FieldAlongCurve:
    """The field on ``[a, b]`` (both grid nodes)."""
    curve = field_.curve
    ia, ib = _node_index(curve, a), _node_index(curve, b)
    out = []
    for p in field_.pieces:
        lo, hi = max(p.i0, ia), min(p.i1, ib)
        if hi <= lo:
            continue
        sl = slice(lo - p.i0, hi - p.i0 + 1)
        out.append(FieldPiece(lo, hi, p.x[sl], p.dx[sl], None if p.ddx is None else p.ddx[sl]))
    if not out:
        raise DomainError(f"field does not cover [{a}, {b}]")
    cls = type(field_)
    if cls is JacobiField:
        return JacobiField(curve, tuple(out), seed=np.concatenate([out[0].x[0], out[0].dx[0]]))
    return FieldAlongCurve(curve, tuple(out))


def zero_field(sol: CurveSolution, a: float, b: float) -> FieldAlongCurve:
    m = jacobi_system(sol).m
    zero = lambda t: (np.zeros((len(t), m)),) * 3  # noqa: E731
    return field_from_functions(sol, zero, a, b)


def concatenate(fields) -> FieldAlongCurve:
    """Join fields on consecutive intervals into one piecewise field."""
    pieces = []
    for f in fields:
        if pieces and pieces[-1].i1 != f.pieces[0].i0:
            raise DomainError("fields must sit on consecutive intervals")
        pieces.extend(f.pieces)
    return FieldAlongCurve(fields[0].curve, tuple(pieces))


# --------------------------------------------------------------------------
# Boundary problems and the negative-index construction
# --------------------------------------------------------------------------


def jacobi_bvp(sol: CurveSolution, ta: float, tb: float, xa, xb) -> JacobiField:
    """Jacobi field on ``[ta, tb]`` with prescribed values at both ends (shooting)."""
    system = jacobi_system(sol)
    curve = system.curve
    ia, ib = _node_index(curve, ta), _node_index(curve, tb)
    if ib <= ia:
        raise DomainError("need ta < tb")
    m = system.m
    prop = system.propagator(ia, ib)
    end = prop[-1]
    shoot = end[:m, m:]
    sv = np.linalg.svd(shoot, compute_uv=False)
    if sv[-1] < RANK_CUTOFF * sv[0]:
        raise ConjugateIntervalError(
            f"gamma({ta:.6g}) and gamma({tb:.6g}) are conjugate (shooting ratio {sv[-1] / sv[0]:.3g})"
        )
    xa = np.asarray(xa, dtype=float)
    xb = np.asarray(xb, dtype=float)
    xpa = np.linalg.solve(shoot, xb - end[:m, :m] @ xa)
    seed = np.concatenate([xa, xpa])
    states = prop @ seed
    field_ = _field_from_states(system, ia, ib, states, seed)
    miss = float(np.max(np.abs(states[-1, :m] - xb)))
    if miss > 1e-7 * max(1.0, float(np.max(np.abs(xb))), float(np.max(np.abs(xa)))):
        raise ConjugateIntervalError(f"shooting residual {miss:.3g} too large; interval is nearly conjugate")
    return field_


@dataclass(frozen=True)
class NegativeIndexResult:
    field: FieldAlongCurve
    index: float
    conjugate_field: JacobiField
    bridge: JacobiField
    window_horizontal_dim: int
    curve: CurveSolution

    def __iter__(self):
        return iter((self.field, self.index))


def negative_index_field(sol: CurveSolution, a: float, c: float, b: float, delta: float) -> NegativeIndexResult:
    """Broken horizontal field with negative index past a horizontal conjugate point.

    ``Y`` is a horizontal Jacobi field vanishing at ``a`` and ``c``; ``Z`` solves
    the boundary problem ``Z(c - delta) = Y(c - delta)``, ``Z(c + delta) = 0``;
    the field is ``Y``, then ``Z``, then zero up to ``b``.
    """
    if not sol.model.sasakian:
        raise HypothesisViolation("the construction needs a Sasakian manifold")
    if not (a < c - delta and c + delta < b and delta > 0):
        raise HypothesisViolation("need a < c - delta < c + delta < b")
    start = adapted_start_frame(sol.model.j_frame, sol.velocity[0])
    curve = reintegrate(sol, breakpoints=[a, c - delta, c, c + delta, b], transport=start)
    system = jacobi_system(curve)
    carrier = system.curve
    m = system.m
    ia, ic = _node_index(carrier, a), _node_index(carrier, c)
    ib = _node_index(carrier, b)
    seeds = horizontal_seed_space(carrier, ia, ib, vanishing_start=True)
    if seeds.shape[1] == 0:
        raise HypothesisViolation("no horizontal Jacobi field vanishes at a")
    prop = system.propagator(ia, ib)
    at_c = prop[ic - ia, :m, :] @ seeds
    _, sv, vt = np.linalg.svd(at_c, full_matrices=True)
    scale = float(np.max(np.linalg.norm(prop[:, :m, :] @ seeds, axis=1)))
    small = [k for k in range(seeds.shape[1]) if (sv[k] if k < len(sv) else 0.0) < RANK_CUTOFF * scale]
    if not small:
        raise HypothesisViolation(f"gamma({a:.6g}) and gamma({c:.6g}) are not horizontally conjugate")
    seed = seeds @ vt[small[0]]
    seed /= np.linalg.norm(seed)
    y_states = prop @ seed
    y_full = _field_from_states(system, ia, ib, y_states, seed)
    y_field = restrict(y_full, a, c - delta)
    window_dim = int(horizontal_seed_space(carrier, _node_index(carrier, c - delta), _node_index(carrier, c + delta)).shape[1])
    z_field = jacobi_bvp(carrier, c - delta, c + delta, y_field.pieces[-1].x[-1], np.zeros(m))
    if z_field.reeb_sup() > 1e-7 * max(1.0, z_field.sup_norm()):
        raise HypothesisViolation(
            f"the bridging Jacobi field is not horizontal (T-component {z_field.reeb_sup():.3g}); "
            f"horizontal solution space on the window has dimension {window_dim}"
        )
    broken = concatenate([y_field, z_field, zero_field(carrier, c + delta, b)])
    index = index_I_ab(carrier, broken, a, b)
    return NegativeIndexResult(broken, index, y_full, z_field, window_dim, carrier)


def index_comparison(sol: CurveSolution, X: FieldAlongCurve, Y: JacobiField, a: float, b: float, tol: float = 1e-8):
    """Compare ``I_a^b(X)`` with ``I_a^b(Y)`` for a horizontal perpendicular Jacobi field ``Y``.

    Returns ``(IX, IY, verdict)`` where the verdict records the inequality and
    whether equality coincides with ``X = Y``.
    """
    system = jacobi_system(sol)
    if not system.curve.model.sasakian:
        raise DomainError("comparison requires a Sasakian manifold")
    curve = system.curve
    ia, ib = _node_index(curve, a), _node_index(curve, b)
    prop = system.propagator(ia, ib)
    m = system.m
    t = curve.t_grid[ia : ib + 1]
    if _scan(t, prop[:, :m, m:], prop[:, m:, m:], True, skip=10 * curve.h) or (
        np.linalg.svd(prop[-1, :m, m:], compute_uv=False)[-1]
        < RANK_CUTOFF * np.linalg.svd(prop[-1, :m, m:], compute_uv=False)[0]
    ):
        raise DomainError("gamma(a) has a conjugate point in (a, b]")
    Yr = restrict(Y, a, b)
    Xr = restrict(X, a, b)
    ypiece = Yr.pieces[0]
    xend = Xr.pieces[-1].x[-1]
    checks = {
        "Y horizontal": Yr.reeb_sup() < 1e-7 * max(1.0, Yr.sup_norm()),
        "Y(a) = 0": np.max(np.abs(ypiece.x[0])) < 1e-9,
        "Y perpendicular": np.max(np.abs(ypiece.x @ system.gamma_dot)) < 1e-7,
        "X(a) = 0": np.max(np.abs(Xr.pieces[0].x[0])) < 1e-9,
        "X perpendicular": max(np.max(np.abs(p.x @ system.gamma_dot)) for p in Xr.pieces) < 1e-7,
        "X(b) = Y(b)": np.max(np.abs(xend - Yr.pieces[-1].x[-1])) < 1e-9,
    }
    failed = [k for k, ok in checks.items() if not ok]
    if failed:
        raise DomainError("comparison preconditions fail: " + ", ".join(failed))
    ix = index_I_ab(curve, Xr, a, b)
    iy = index_I_ab(curve, Yr, a, b)
    diff = 0.0
    for p in Xr.pieces:
        diff = max(diff, float(np.max(np.abs(p.x - Yr.pieces[0].x[p.i0 - ypiece.i0 : p.i1 - ypiece.i0 + 1]))))
    equal_fields = diff < 1e-6
    equal_values = abs(ix - iy) < tol
    verdict = {
        "inequality_holds": bool(ix >= iy - tol),
        "equality": bool(equal_values),
        "fields_equal": bool(equal_fields),
        "consistent": bool(ix >= iy - tol and (equal_values == equal_fields or not equal_values)),
        "sup_difference": diff,
    }
    return ix, iy, verdict
