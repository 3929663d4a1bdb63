"""One-parameter families of curves and the variation formulas for length.

A curve is a :class:`Path`: consecutive :class:`CurveSolution` segments that
share endpoints, each with its own start time on a global parameter axis.
Variation fields are callables ``t -> (K, m)`` returning adapted-frame
components at ``gamma(t)``.  The family member ``gamma^s`` is obtained by
exponentiating ``s X`` with the Tanaka-Webster geodesic flow at every node.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from . import kernels
from .connection import connection_at, connection_batch
from .errors import DomainError, IntegrationError
from .geodesics import CurveSolution, integrate_tw_geodesic
from .jacobi import FieldAlongCurve, index_I_ab, negative_index_field

FIRST_STEP = 1e-4
SECOND_STEP = 1e-3
EXP_STEPS = 2


# --------------------------------------------------------------------------
# Paths and fields
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Path:
    """Consecutive curve segments; segment ``k`` covers ``starts[k] + its local times``."""

    segments: tuple
    starts: tuple

    @property
    def model(self):
        return self.segments[0].model

    @property
    def a(self) -> float:
        return float(self.starts[0] + self.segments[0].t0)

    @property
    def b(self) -> float:
        return float(self.starts[-1] + self.segments[-1].t1)

    @property
    def corners(self) -> list:
        return [float(s + seg.t0) for s, seg in zip(self.starts[1:], self.segments[1:])]

    def global_times(self, k: int) -> np.ndarray:
        return self.starts[k] + self.segments[k].t_grid

    def speed(self) -> float:
        """The common speed of all segments (domain error if not constant or zero)."""
        speeds = np.concatenate([seg.speed() for seg in self.segments])
        r = float(np.mean(speeds))
        if r == 0.0:
            raise DomainError("zero-speed curve")
        if np.max(np.abs(speeds - r)) > 1e-8 * r:
            raise DomainError("curve is not parametrized proportionally to arc length")
        return r


def as_path(curve) -> Path:
    if isinstance(curve, Path):
        return curve
    if isinstance(curve, CurveSolution):
        return Path((curve,), (0.0,))
    raise DomainError(f"expected a curve or a path, got {type(curve).__name__}")


def broken_geodesic(model, x0, velocities, durations, h: float = 1e-3) -> Path:
    """Tanaka-Webster geodesic segments joined end to start, with the given initial velocities."""
    segs, starts = [], []
    t = 0.0
    x = np.asarray(x0, dtype=float)
    for v, dur in zip(velocities, durations):
        seg = integrate_tw_geodesic(model, x, v, dur, h=h)
        segs.append(seg)
        starts.append(t)
        t += dur
        x = seg.coords[-1]
    return Path(tuple(segs), tuple(starts))


def parallel_field_vectors(field: FieldAlongCurve):
    """Adapted-frame components of a parallel-frame field, as a callable of global time."""
    curve = field.curve

    def vectors(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros((len(t), curve.model.frame_size))
        done = np.zeros(len(t), dtype=bool)
        for p in field.pieces:
            nodes = field.piece_times(p)
            mask = (~done) & (t >= nodes[0] - 1e-12) & (t <= nodes[-1] + 1e-12)
            if np.any(mask):
                out[mask] = kernels.hermite(nodes, p.x, p.dx, np.clip(t[mask], nodes[0], nodes[-1]))
                done |= mask
        mask = (t >= field.a - 1e-12) & (t <= field.b + 1e-12)
        trans = np.zeros((len(t),) + (curve.model.frame_size,) * 2)
        trans[mask] = curve.transport_at(t[mask])
        return np.einsum("kab,kb->ka", trans, out)

    return vectors


def polynomial_field(coeffs: np.ndarray):
    """``X(t) = sum_j coeffs[j] t^j`` in adapted-frame components."""
    coeffs = np.asarray(coeffs, dtype=float)

    def vectors(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        powers = t[:, None] ** np.arange(len(coeffs))[None, :]
        return powers @ coeffs

    return vectors


def bump_field(direction, center: float, radius: float):
    """``cos^4`` bump of the given adapted components, supported in ``|t - center| < radius``."""
    direction = np.asarray(direction, dtype=float)

    def vectors(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        u = np.clip((t - center) / radius, -1.0, 1.0)
        return np.outer(np.cos(0.5 * np.pi * u) ** 4, direction)

    return vectors


# --------------------------------------------------------------------------
# Exponential map and families
# --------------------------------------------------------------------------


def tw_exp(model, x: np.ndarray, comps: np.ndarray, steps: int = EXP_STEPS) -> np.ndarray:
    """Batched Tanaka-Webster exponential of frame components ``comps`` at points ``x``."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(comps, dtype=float)

    def rhs(x, v):
        tw, _, fr = connection_at(model, x, with_frame=True)
        return np.einsum("kia,ka->ki", fr, v), -np.einsum("kabc,ka,kb->kc", tw, v, v)

    h = 1.0 / steps
    for _ in range(steps):
        k1 = rhs(x, v)
        k2 = rhs(x + 0.5 * h * k1[0], v + 0.5 * h * k1[1])
        k3 = rhs(x + 0.5 * h * k2[0], v + 0.5 * h * k2[1])
        k4 = rhs(x + h * k3[0], v + h * k3[1])
        x = x + (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        v = v + (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        x = model.project(x)
    if not np.all(np.isfinite(x)):
        raise IntegrationError("exponential map produced non-finite points", 1.0)
    return x


def _uniform_runs(t: np.ndarray, cuts=()) -> list:
    """Index ranges ``(i0, i1)`` of maximal uniform runs, also split at ``cuts``."""
    steps = np.diff(t)
    runs, start = [], 0
    cut_idx = {int(np.argmin(np.abs(t - c))) for c in cuts if t[0] < c < t[-1]}
    for k in range(1, len(steps)):
        if abs(steps[k] - steps[k - 1]) > 1e-9 * max(1.0, abs(t[k])) or k in cut_idx:
            runs.append((start, k))
            start = k
    runs.append((start, len(t) - 1))
    return runs


def _derivative_4th(f: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order finite-difference derivative along axis 0 of a uniform sample."""
    n = len(f)
    if n < 5:
        raise DomainError("need at least five nodes per smooth piece")
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    d[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
    d[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
    return d


def polyline_length(model, t: np.ndarray, pts: np.ndarray, cuts=()) -> float:
    """Webster length of a sampled curve, smooth on each uniform run of ``t``."""
    total = 0.0
    for i0, i1 in _uniform_runs(t, cuts):
        tt = t[i0 : i1 + 1]
        xs = pts[i0 : i1 + 1]
        vel = _derivative_4th(xs, tt[1] - tt[0])
        speed = np.linalg.norm(np.einsum("kai,ki->ka", model.coframe(xs), vel), axis=1)
        total += simpson(speed, x=tt)
    return float(total)


@dataclass(frozen=True)
class CurveFamily:
    """``gamma^s(t) = exp_{gamma(t)}(s X(t))`` for ``|s| <= eps``."""

    path: Path
    field: object
    eps: float = 1e-2
    field_cuts: tuple = ()

    def _values(self, k: int) -> np.ndarray:
        return self.field(self.path.global_times(k))

    def curve_at(self, s: float) -> list:
        """Node coordinates of ``gamma^s`` on each segment."""
        if abs(s) > self.eps + 1e-15:
            raise DomainError(f"|s| = {abs(s)} exceeds the family's range {self.eps}")
        out = []
        for k, seg in enumerate(self.path.segments):
            if s == 0.0:
                out.append(seg.coords.copy())
            else:
                out.append(tw_exp(seg.model, seg.coords, s * self._values(k)))
        return out

    def point(self, t: float, s: float) -> np.ndarray:
        """``gamma^s(t)`` at any parameter of the path."""
        for k, seg in enumerate(self.path.segments):
            lo, hi = self.path.starts[k] + seg.t0, self.path.starts[k] + seg.t1
            if lo - 1e-12 <= t <= hi + 1e-12:
                x = seg.point_at(np.array([t - self.path.starts[k]]))
                return tw_exp(seg.model, x, s * self.field(np.array([t])))[0]
        raise DomainError(f"t = {t} outside the path")

    def length(self, s: float) -> float:
        total = 0.0
        for k, (seg, pts) in enumerate(zip(self.path.segments, self.curve_at(s))):
            t = self.path.global_times(k)
            total += polyline_length(seg.model, t, pts, self.field_cuts)
        return total

    def transversal_residual(self, s0: float = 1e-5) -> float:
        """Sup gap between ``d gamma^s / ds`` at ``s = 0`` and ``X`` (coordinates)."""
        worst = 0.0
        plus, minus = self.curve_at(s0), self.curve_at(-s0)
        for k, seg in enumerate(self.path.segments):
            fd = (plus[k] - minus[k]) / (2 * s0)
            exact = np.einsum("kia,ka->ki", seg.model.frame(seg.coords), self._values(k))
            worst = max(worst, float(np.max(np.abs(fd - exact))))
        return worst

    def endpoint_drift(self, s: float | None = None) -> float:
        s = self.eps if s is None else s
        first, last = self.path.segments[0].coords[0], self.path.segments[-1].coords[-1]
        pts = self.curve_at(s)
        return float(max(np.max(np.abs(pts[0][0] - first)), np.max(np.abs(pts[-1][-1] - last))))


def family_from_field(field: FieldAlongCurve, eps: float = 1e-2) -> CurveFamily:
    """Family generated by a parallel-frame field along its own curve."""
    curve = field.curve
    path = Path((curve,), (0.0,))
    return CurveFamily(path, parallel_field_vectors(field), eps, tuple(field.breakpoints))


# --------------------------------------------------------------------------
# Variation formulas
# --------------------------------------------------------------------------


def first_variation_formula(curve, field, a: float | None = None, b: float | None = None) -> float:
    """Boundary, corner and integral terms of the first variation of length."""
    path = as_path(curve)
    if a is not None and abs(a - path.a) > 1e-12 or b is not None and abs(b - path.b) > 1e-12:
        raise DomainError("the formula is evaluated over the whole path")
    r = path.speed()
    boundary = 0.0
    integral = 0.0
    ends = []
    for k, seg in enumerate(path.segments):
        t = path.global_times(k)
        xv = field(t)
        data = connection_batch(seg.model, seg.coords)
        tw, c = data["tw"], data["structure"]
        v = seg.velocity
        accel = seg.velocity_dot + np.einsum("kabc,ka,kb->kc", tw, v, v)
        torsion = tw - np.swapaxes(tw, 1, 2) - c
        tor_term = np.einsum("kabc,ka,kb,kc->k", torsion, xv, v, v)
        integral += simpson(np.einsum("ka,ka->k", xv, accel) - tor_term, x=t)
        ends.append((xv[0] @ v[0], xv[-1] @ v[-1], xv[0], v[0], v[-1]))
    boundary = ends[-1][1] - ends[0][0]
    corners = 0.0
    for prev, nxt in zip(ends[:-1], ends[1:]):
        corners += float(nxt[2] @ (prev[4] - nxt[3]))
    return float((boundary + corners - integral) / r)


def torsion_prediction(curve, field) -> float:
    """``(1/r) int theta(X) A(dot gamma, dot gamma) dt`` along a smooth curve."""
    path = as_path(curve)
    r = path.speed()
    total = 0.0
    for k, seg in enumerate(path.segments):
        t = path.global_times(k)
        xv = field(t)
        tau = connection_batch(seg.model, seg.coords)["tau"]
        avv = np.einsum("kcb,kb,kc->k", tau, seg.velocity, seg.velocity)
        total += simpson(xv[:, -1] * avv, x=t)
    return float(total / r)


def first_variation_fd(family: CurveFamily, s0: float = FIRST_STEP) -> float:
    """Central difference of ``L(gamma^s)`` with one Richardson level."""

    def central(s):
        return (family.length(s) - family.length(-s)) / (2 * s)

    return float((4 * central(0.5 * s0) - central(s0)) / 3)


def second_variation_fd(family: CurveFamily, s0: float = SECOND_STEP) -> float:
    """Second central difference of ``L(gamma^s)`` with one Richardson level."""
    base = family.length(0.0)

    def second(s):
        return (family.length(s) - 2 * base + family.length(-s)) / (s * s)

    return float((4 * second(0.5 * s0) - second(s0)) / 3)


@dataclass(frozen=True)
class VariationCase:
    case: str
    analytic: float
    finite_difference: float
    rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.rel_error < self.tolerance)

    def to_json(self) -> dict:
        return {
            "case": self.case,
            "analytic": self.analytic,
            "finite_difference": self.finite_difference,
            "rel_error": self.rel_error,
            "pass": self.passed,
        }


def compare(case: str, analytic: float, fd: float, tolerance: float, floor: float = 1e-8) -> VariationCase:
    """Relative error with an absolute floor for values near zero."""
    err = abs(analytic - fd) / max(abs(analytic), floor)
    return VariationCase(case, float(analytic), float(fd), float(err), tolerance)


# --------------------------------------------------------------------------
# Non-minimality
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class NonMinimalityReport:
    index: float
    first_variation: float
    second_variation: float
    second_rel_error: float
    s_star: float
    length_base: float
    length_shortened: float
    window_horizontal_dim: int

    @property
    def length_gain(self) -> float:
        return self.length_shortened - self.length_base

    @property
    def passed(self) -> bool:
        return bool(
            self.index < -1e-6
            and abs(self.first_variation) < 1e-6
            and self.second_rel_error < 1e-2
            and self.length_gain < -1e-8
        )

    def to_json(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["length_gain"] = self.length_gain
        out["pass"] = self.passed
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def nonminimality_demo(sol: CurveSolution, a: float, c: float, b: float, delta: float) -> NonMinimalityReport:
    """Shorten a geodesic arc past a horizontal conjugate point with an explicit family."""
    result = negative_index_field(sol, a, c, b, delta)
    field = result.field
    family = family_from_field(field, eps=0.2)
    r = float(np.linalg.norm(result.curve.velocity[0]))
    index = index_I_ab(result.curve, field, a, b) / r
    first = first_variation_fd(family)
    second = second_variation_fd(family)
    rel = abs(second - index) / max(abs(index), 1e-12)
    base = family.length(0.0)
    best_s, best_len = 0.0, base
    for s in (0.01, 0.02, 0.05, 0.1, 0.2):
        ell = family.length(s)
        if ell < best_len:
            best_s, best_len = s, ell
    return NonMinimalityReport(
        float(index), first, second, float(rel), best_s, float(base), float(best_len), result.window_horizontal_dim
    )
