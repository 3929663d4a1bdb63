"""Charts, tangent vectors and the pseudohermitian primitives.

A model manifold exposes batched evaluators on raw coordinate arrays
``x`` of shape ``(..., N)``, where ``N`` is the number of chart (or ambient)
coordinates.  Frames are returned as ``(..., N, m)`` arrays whose columns
are ``e_1, J e_1, e_2, J e_2, ..., e_n, J e_n, T`` with ``m = 2n + 1``.
Frames are orthonormal for the Webster metric, so the frame Gram matrix is
the identity and ``J`` has constant block form in frame components.

Exterior derivative convention: ``dtheta(u, v) = u(theta(v)) - v(theta(u))
- theta([u, v])`` with no factor 1/2.  The Levi form is then
``G(X, Y) = dtheta(X, J Y) / 2`` on the Levi distribution.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import ContractViolation, DegenerateMetricError


@dataclass(frozen=True)
class ChartPoint:
    """A point of a model manifold in its (chart or ambient) coordinates."""

    coords: np.ndarray
    model_id: str

    def __post_init__(self):
        arr = np.array(self.coords, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "coords", arr)


@dataclass(frozen=True)
class Tangent:
    """A tangent vector given by its coordinate components at ``base``."""

    base: ChartPoint
    components: np.ndarray

    def __post_init__(self):
        arr = np.array(self.components, dtype=float)
        if arr.shape != self.base.coords.shape:
            raise ContractViolation(
                f"tangent has {arr.shape} components, base has {self.base.coords.shape}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "components", arr)


@dataclass(frozen=True)
class AdaptedFrame:
    """Webster-orthonormal frame adapted to the Levi distribution."""

    base: ChartPoint
    vectors: np.ndarray  # (N, 2n+1): horizontal columns then the Reeb field
    j_matrix: np.ndarray  # (2n, 2n)
    g_matrix: np.ndarray  # (2n, 2n)

    @property
    def horizontal(self) -> list[Tangent]:
        return [Tangent(self.base, col) for col in self.vectors[:, :-1].T]

    @property
    def reeb(self) -> Tangent:
        return Tangent(self.base, self.vectors[:, -1])


def j_block(n: int) -> np.ndarray:
    """Matrix of J in an adapted frame, including the zero Reeb row and column."""
    m = 2 * n + 1
    jm = np.zeros((m, m))
    for alpha in range(n):
        jm[2 * alpha + 1, 2 * alpha] = 1.0
        jm[2 * alpha, 2 * alpha + 1] = -1.0
    return jm


def central_jacobian(func, x: np.ndarray, rel_step: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian of a batched evaluator.

    ``func`` maps ``(..., N)`` to ``(..., *S)``; the result has shape
    ``(..., *S, N)``.  The step is ``rel_step * max(1, |x_k|)`` per coordinate.
    """
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(x.shape[-1]):
        h = rel_step * np.maximum(1.0, np.abs(x[..., k]))
        shift = np.zeros_like(x)
        shift[..., k] = h
        diff = func(x + shift) - func(x - shift)
        denom = (2.0 * h).reshape(h.shape + (1,) * (diff.ndim - h.ndim))
        cols.append(diff / denom)
    return np.stack(cols, axis=-1)


class ModelManifold(ABC):
    """Interface of a chartable strictly pseudoconvex CR model.

    Subclasses provide ``theta``, ``frame`` and (optionally) closed-form
    derivatives.  All evaluators are batched over leading axes and pure.
    """

    n: int
    model_id: str
    sasakian: bool = False
    flat: bool = False
    closed_form_derivatives: bool = True
    left_invariant: bool = False  # frame has constant structure constants

    @property
    def dim(self) -> int:
        return 2 * self.n + 1

    @property
    def frame_size(self) -> int:
        return 2 * self.n + 1

    @property
    def ambient_dim(self) -> int:
        return 2 * self.n + 1

    @property
    def j_frame(self) -> np.ndarray:
        return j_block(self.n)

    # --- value evaluators -------------------------------------------------

    @abstractmethod
    def theta(self, x: np.ndarray) -> np.ndarray:
        """Components of the contact form, shape ``(..., N)``."""

    @abstractmethod
    def frame(self, x: np.ndarray) -> np.ndarray:
        """Adapted orthonormal frame, shape ``(..., N, m)``."""

    def reeb(self, x: np.ndarray) -> np.ndarray:
        return self.frame(x)[..., -1]

    def coframe(self, x: np.ndarray) -> np.ndarray:
        """Dual coframe ``(..., m, N)`` with ``coframe @ frame = I``."""
        return np.linalg.inv(self.frame(x))

    # --- derivative evaluators ---------------------------------------------

    def theta_jacobian(self, x: np.ndarray) -> np.ndarray:
        """``[..., i, k] = d theta_i / d x^k``."""
        return central_jacobian(self.theta, x)

    def frame_jacobian(self, x: np.ndarray) -> np.ndarray:
        """``[..., i, a, k] = d frame[i, a] / d x^k``."""
        return central_jacobian(self.frame, x)

    def frame_data(self, x: np.ndarray):
        """``(frame, frame_jacobian, coframe)`` in one call; models may share work."""
        return self.frame(x), self.frame_jacobian(x), self.coframe(x)

    def frame_jacobian_fd(self, x: np.ndarray, rel_step: float = 1e-5) -> np.ndarray:
        return central_jacobian(self.frame, x, rel_step)

    # --- chart geometry -----------------------------------------------------

    def project(self, x: np.ndarray) -> np.ndarray:
        """Map ambient coordinates back onto the manifold."""
        return np.asarray(x, dtype=float)

    def tangent_project(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return np.asarray(u, dtype=float)

    def move(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """A curve through ``x`` with initial velocity ``u``, evaluated at 1."""
        return self.project(np.asarray(x) + np.asarray(u))

    def origin(self) -> np.ndarray:
        return np.zeros(self.ambient_dim)

    def sample_points(self, count: int = 100, seed: int = 0, radius: float = 2.0) -> np.ndarray:
        """Deterministic Halton points in the box ``|coords| <= radius``."""
        sampler = qmc.Halton(d=self.ambient_dim, scramble=True, seed=seed)
        pts = radius * (2.0 * sampler.random(count) - 1.0)
        return self.project(pts)

    def check_point(self, x) -> np.ndarray:
        coords = x.coords if isinstance(x, ChartPoint) else np.asarray(x, dtype=float)
        if isinstance(x, ChartPoint) and x.model_id != self.model_id:
            raise ContractViolation(f"point belongs to {x.model_id}, not {self.model_id}")
        if coords.shape[-1] != self.ambient_dim:
            raise ContractViolation(
                f"expected {self.ambient_dim} coordinates, got {coords.shape[-1]}"
            )
        return coords

    def point(self, coords) -> ChartPoint:
        return ChartPoint(self.check_point(coords), self.model_id)

    def adapted_frame(self, x) -> AdaptedFrame:
        coords = self.check_point(x)
        vecs = self.frame(coords)
        co = self.coframe(coords)
        hvecs = vecs[:, :-1]
        gram = webster_gram(self, coords, hvecs)
        jm = co[:-1] @ self.apply_j(coords, hvecs)
        return AdaptedFrame(self.point(coords), vecs, jm, gram)

    def apply_j(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Apply J (extended by J T = 0) to coordinate vectors ``u`` (``(N,)`` or ``(N, k)``)."""
        f = self.frame(x)
        co = self.coframe(x)
        return f @ (self.j_frame @ (co @ u))

    def components(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Frame components of coordinate vectors, batched: ``(..., N) -> (..., m)``."""
        return np.einsum("...ai,...i->...a", self.coframe(x), u)

    def vectors(self, x: np.ndarray, comps: np.ndarray) -> np.ndarray:
        """Coordinate vectors from frame components, batched."""
        return np.einsum("...ia,...a->...i", self.frame(x), comps)


# --------------------------------------------------------------------------
# Pseudohermitian primitives on single points
# --------------------------------------------------------------------------


def _vec(model: ModelManifold, x: np.ndarray, u) -> np.ndarray:
    if isinstance(u, Tangent):
        if not np.array_equal(u.base.coords, x):
            raise ContractViolation("tangent vector is not based at the given point")
        u = u.components
    u = np.asarray(u, dtype=float)
    if u.shape[0] != model.ambient_dim:
        raise ContractViolation(f"expected {model.ambient_dim} components, got {u.shape[0]}")
    return u


def dtheta(model: ModelManifold, x, u, v) -> float:
    """Exterior derivative of the contact form on constant-coefficient extensions."""
    coords = model.check_point(x)
    u, v = _vec(model, coords, u), _vec(model, coords, v)
    jac = model.theta_jacobian(coords)  # [i, k] = d_k theta_i
    curl = jac.T - jac  # [k, i] = d_k theta_i - d_i theta_k
    return float(u @ curl @ v)


def omega(model: ModelManifold, x, u, v) -> float:
    """``Omega(u, v) = g(u, J v)``."""
    coords = model.check_point(x)
    u, v = _vec(model, coords, u), _vec(model, coords, v)
    return webster_metric(model, coords, u, model.apply_j(coords, v))


def webster_metric(model: ModelManifold, x, u, v) -> float:
    coords = model.check_point(x)
    u, v = _vec(model, coords, u), _vec(model, coords, v)
    co = model.coframe(coords)
    return float((co @ u) @ (co @ v))


def webster_gram(model: ModelManifold, x: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    co = model.coframe(x)
    comps = co @ vecs
    return comps.T @ comps


def levi_form(model: ModelManifold, x, u, v) -> float:
    """``G(u, v) = dtheta(u, J v) / 2`` for horizontal ``u, v``."""
    coords = model.check_point(x)
    return 0.5 * dtheta(model, coords, u, model.apply_j(coords, _vec(model, coords, v)))


def _chart_basis(model: ModelManifold, x: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the chart tangent space as ambient columns."""
    if model.ambient_dim == model.dim:
        return np.eye(model.dim)
    # Graph chart of the sphere: y -> normalize(x + B y) has differential B at 0.
    q, _ = np.linalg.qr(np.column_stack([x, np.eye(model.ambient_dim)]))
    return q[:, 1 : model.dim + 1]


def metric_duality_residual(model: ModelManifold, x) -> float:
    """Max-norm gap between the horizontal cometric and ``G^{ij} - T^i T^j``.

    The cometric is built from its defining property: ``g dx^i`` is the
    horizontal vector with ``G(X, g dx^i) = dx^i(X)`` for every horizontal
    ``X``.  Everything is expressed in chart coordinates at ``x``.
    """
    coords = model.check_point(x)
    basis = _chart_basis(model, coords)
    frame_c = basis.T @ model.frame(coords)  # chart components of the frame
    theta_c = basis.T @ model.theta(coords)
    reeb_c = frame_c[:, -1]
    if abs(np.linalg.det(frame_c)) < 1e-12:
        raise DegenerateMetricError("adapted frame is singular at this point")
    co = np.linalg.inv(frame_c)
    webster = co.T @ co
    dim = model.dim
    # Horizontal spanning set: projections of the chart coordinate vectors.
    horiz = np.eye(dim) - np.outer(reeb_c, theta_c)
    system = np.vstack([theta_c[None, :], horiz.T @ webster])
    rhs = np.vstack([np.zeros((1, dim)), horiz.T])
    cometric, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    gram_inv = np.linalg.inv(webster)
    expected = gram_inv - np.outer(reeb_c, reeb_c)
    return float(np.max(np.abs(cometric - expected)))
