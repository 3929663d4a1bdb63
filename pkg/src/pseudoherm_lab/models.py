"""Concrete CR models: Heisenberg groups, CR spheres, conformally scaled Heisenberg.

Coordinates on the Heisenberg group ``H^n`` are ordered
``(x^1..x^n, y^1..y^n, t)``.  Sphere points live in ``R^{2n+2} = C^{n+1}``
with interleaved real and imaginary parts ``(Re z_0, Im z_0, Re z_1, ...)``.
"""

from __future__ import annotations

import numpy as np

from .core import ModelManifold, central_jacobian
from .errors import ContractViolation, DegenerateMetricError, InvalidDimensionError


def _check_n(n) -> int:
    if isinstance(n, bool) or int(n) != n or int(n) < 1:
        raise InvalidDimensionError(f"CR dimension must be a positive integer, got {n!r}")
    return int(n)


class HeisenbergModel(ModelManifold):
    """``H^n`` with ``theta = dt + sum(x dy - y dx)``; Sasakian and TW-flat."""

    sasakian = True
    flat = True
    left_invariant = True

    def __init__(self, n: int):
        self.n = _check_n(n)
        self.model_id = f"heisenberg:{self.n}"
        n = self.n
        # Constant derivatives of the left-invariant frame.
        m = 2 * n + 1
        jac = np.zeros((m, m, m))
        for alpha in range(n):
            # X_alpha = d_x + y d_t,  Y_alpha = d_y - x d_t
            jac[2 * n, 2 * alpha, n + alpha] = 1.0
            jac[2 * n, 2 * alpha + 1, alpha] = -1.0
        self._frame_jac = jac
        tjac = np.zeros((m, m))
        for alpha in range(n):
            tjac[alpha, n + alpha] = -1.0  # theta_x = -y
            tjac[n + alpha, alpha] = 1.0  # theta_y = x
        self._theta_jac = tjac

    def theta(self, x):
        x = np.asarray(x, dtype=float)
        n = self.n
        out = np.zeros_like(x)
        out[..., :n] = -x[..., n : 2 * n]
        out[..., n : 2 * n] = x[..., :n]
        out[..., 2 * n] = 1.0
        return out

    def frame(self, x):
        x = np.asarray(x, dtype=float)
        n = self.n
        m = 2 * n + 1
        out = np.zeros(x.shape[:-1] + (m, m))
        for alpha in range(n):
            out[..., alpha, 2 * alpha] = 1.0
            out[..., 2 * n, 2 * alpha] = x[..., n + alpha]
            out[..., n + alpha, 2 * alpha + 1] = 1.0
            out[..., 2 * n, 2 * alpha + 1] = -x[..., alpha]
        out[..., 2 * n, 2 * n] = 1.0
        return out

    def coframe(self, x):
        x = np.asarray(x, dtype=float)
        n = self.n
        m = 2 * n + 1
        out = np.zeros(x.shape[:-1] + (m, m))
        for alpha in range(n):
            out[..., 2 * alpha, alpha] = 1.0
            out[..., 2 * alpha + 1, n + alpha] = 1.0
        out[..., 2 * n, :] = self.theta(x)
        return out

    def theta_jacobian(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self._theta_jac, x.shape[:-1] + self._theta_jac.shape).copy()

    def frame_jacobian(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self._frame_jac, x.shape[:-1] + self._frame_jac.shape).copy()


# --------------------------------------------------------------------------
# Spheres
# --------------------------------------------------------------------------


def _complex_unit(n_complex: int) -> np.ndarray:
    """Multiplication by i on interleaved real coordinates."""
    jm = np.zeros((2 * n_complex, 2 * n_complex))
    for k in range(n_complex):
        jm[2 * k + 1, 2 * k] = 1.0
        jm[2 * k, 2 * k + 1] = -1.0
    return jm


def _quaternion_left(unit: str) -> np.ndarray:
    """Left multiplication by a quaternion unit on ``(a, b, c, d) = a + bi + cj + dk``."""
    table = {
        "i": [[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]],
        "j": [[0, 0, -1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, -1, 0, 0]],
        "k": [[0, 0, 0, -1], [0, 0, -1, 0], [0, 1, 0, 0], [1, 0, 0, 0]],
    }
    return np.array(table[unit], dtype=float)


def _to_complex(x: np.ndarray) -> np.ndarray:
    return x[..., 0::2] + 1j * x[..., 1::2]


def _to_real(z: np.ndarray) -> np.ndarray:
    out = np.empty(z.shape[:-1] + (2 * z.shape[-1],))
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


def _phi_lower(a: np.ndarray) -> np.ndarray:
    """Strictly lower part plus half the diagonal (Cholesky differential)."""
    out = np.tril(a, -1)
    idx = np.arange(a.shape[-1])
    out[..., idx, idx] = 0.5 * a[..., idx, idx]
    return out


class SphereModel(ModelManifold):
    """The CR sphere ``S^{2n+1}`` with the standard contact form; Sasakian.

    For ``n = 1`` the frame is global (left quaternion multiplication).  For
    ``n >= 2`` the Levi distribution is framed by projecting a fixed complex
    basis of ``center^perp`` and orthonormalising; this frame is smooth away
    from the codimension-two set ``<z, center> = 0``.
    """

    sasakian = True

    def __init__(self, n: int, center=None):
        self.n = _check_n(n)
        self.model_id = f"sphere:{self.n}"
        n = self.n
        self._i = _complex_unit(n + 1)
        if n == 1:
            self._lj = _quaternion_left("j")
            self._lk = _quaternion_left("k")
            self.center = None
            self.left_invariant = True
        else:
            if center is None:
                rng = np.random.default_rng(20240611)
                center = rng.normal(size=2 * n + 2)
            center = np.asarray(center, dtype=float)
            if center.shape != (2 * n + 2,):
                raise ContractViolation("sphere frame center must be an ambient vector")
            self.center = center / np.linalg.norm(center)
            c = _to_complex(self.center)
            # Complex orthonormal basis of c^perp via QR of [c, I].
            q, _ = np.linalg.qr(np.column_stack([c, np.eye(n + 1, dtype=complex)]))
            self._basis = q[:, 1 : n + 1].T  # (n, n+1)

    @property
    def ambient_dim(self) -> int:
        return 2 * self.n + 2

    def origin(self) -> np.ndarray:
        x = np.zeros(self.ambient_dim)
        x[0] = 1.0
        return x

    def project(self, x):
        x = np.asarray(x, dtype=float)
        return x / np.linalg.norm(x, axis=-1, keepdims=True)

    def tangent_project(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return u - x * np.sum(x * u, axis=-1, keepdims=True)

    def theta(self, x):
        x = np.asarray(x, dtype=float)
        return x @ self._i.T

    def theta_jacobian(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self._i, x.shape[:-1] + self._i.shape).copy()

    def coframe(self, x):
        return np.swapaxes(self.frame(x), -1, -2)

    # frame construction ------------------------------------------------------

    def _raw_horizontal(self, x, want_jac: bool = True):
        """Raw projected fields and their ambient Jacobians (n >= 2)."""
        z = _to_complex(np.asarray(x, dtype=float))  # (..., n+1)
        f = self._basis  # (n, n+1)
        inner = np.einsum("...j,aj->...a", z.conj(), f)  # <z, f_a>
        vec = f - z[..., None, :] * inner[..., :, None]  # (..., n, n+1)
        mults = np.array([1.0, 1j])
        cvec = vec[..., :, None, :] * mults[:, None]  # (..., n, 2, n+1)
        raw = np.moveaxis(_to_real(cvec), -1, -3)  # (..., N, n, 2)
        raw = raw.reshape(raw.shape[:-2] + (2 * self.n,))
        if not want_jac:
            return raw, None
        n1 = self.n + 1
        dz = _to_complex(np.eye(2 * n1))  # (N, n+1): complex direction of d/dx^k
        dinner = dz.conj() @ f.T  # (N, n)
        # dv[..., a, k, :] = -dz_k <z, f_a> - z <dz_k, f_a>
        dv = -inner[..., :, None, None] * dz - dinner.T[:, :, None] * z[..., None, None, :]
        cdv = dv[..., :, None, :, :] * mults[:, None, None]  # (..., n, 2, N, n+1)
        jac = np.moveaxis(_to_real(cdv), -1, -4)  # (..., N_out, n, 2, N_in)
        jac = jac.reshape(jac.shape[:-4] + (jac.shape[-4], 2 * self.n, jac.shape[-1]))
        return raw, jac

    def _frame_and_jacobian(self, x, want_jac: bool):
        x = np.asarray(x, dtype=float)
        if self.n == 1:
            e1 = x @ self._lj.T
            e2 = x @ self._lk.T
            t = x @ self._i.T
            fr = np.stack([e1, e2, t], axis=-1)
            if not want_jac:
                return fr, None
            jac = np.stack([self._lj, self._lk, self._i], axis=1)  # (4, 3, 4)
            return fr, np.broadcast_to(jac, x.shape[:-1] + jac.shape).copy()
        raw, raw_jac = self._raw_horizontal(x, want_jac)  # (..., N, 2n), (..., N, 2n, N)
        gram = np.swapaxes(raw, -1, -2) @ raw
        low = np.linalg.cholesky(gram)
        low_inv = np.linalg.inv(low)
        hor = raw @ np.swapaxes(low_inv, -1, -2)
        t = x @ self._i.T
        fr = np.concatenate([hor, t[..., None]], axis=-1)
        if not want_jac:
            return fr, None
        # d gram / dx^k, then the Cholesky differential dL = L Phi(L^-1 dG L^-T)
        draw = np.moveaxis(raw_jac, -1, 0)  # (N, ..., N, 2n)
        dgram = np.swapaxes(draw, -1, -2) @ raw + np.swapaxes(raw, -1, -2) @ draw
        inner = low_inv @ dgram @ np.swapaxes(low_inv, -1, -2)
        dlow = low @ _phi_lower(inner)
        dhor = draw @ np.swapaxes(low_inv, -1, -2) - hor @ np.swapaxes(dlow, -1, -2) @ np.swapaxes(
            low_inv, -1, -2
        )
        dhor = np.moveaxis(dhor, 0, -1)  # (..., N, 2n, N)
        dt = np.broadcast_to(self._i, x.shape[:-1] + self._i.shape)[..., :, None, :]
        return fr, np.concatenate([dhor, dt], axis=-2)

    def frame(self, x):
        return self._frame_and_jacobian(x, False)[0]

    def frame_jacobian(self, x):
        return self._frame_and_jacobian(x, True)[1]

    def frame_data(self, x):
        fr, jac = self._frame_and_jacobian(x, True)
        return fr, jac, np.swapaxes(fr, -1, -2)

    def with_center(self, center) -> "SphereModel":
        """Same sphere, horizontal frame built around another center."""
        return SphereModel(self.n, center)

    def adapted_to(self, x0, v0) -> "SphereModel":
        """Copy whose frame stays regular along the geodesic through ``x0`` with velocity ``v0``.

        With ``c = z0 + i w`` (``w`` the unit horizontal part of ``v0``) the
        pairing ``<z(t), c>`` has modulus one on the great circle
        ``cos t z0 + sin t w``, so the frame never degenerates on it.
        """
        if self.n == 1:
            return self
        x0 = self.project(np.asarray(x0, dtype=float))
        v0 = self.tangent_project(x0, np.asarray(v0, dtype=float))
        v0 = v0 - (v0 @ self.reeb(x0)) * self.reeb(x0)
        if np.linalg.norm(v0) == 0:
            return self
        z0 = _to_complex(x0)
        w = _to_complex(v0 / np.linalg.norm(v0))
        return SphereModel(self.n, _to_real(z0 + 1j * w))


# --------------------------------------------------------------------------
# Conformally scaled Heisenberg
# --------------------------------------------------------------------------


class ScaledHeisenbergModel(ModelManifold):
    """``H^n`` with contact form ``exp(kappa x^1) theta``; nonzero torsion."""

    def __init__(self, n: int, kappa: float = 0.1):
        self.n = _check_n(n)
        self.kappa = float(kappa)
        self.base = HeisenbergModel(self.n)
        self.model_id = f"scaled-heisenberg:{self.n}:{self.kappa:g}"
        self.sasakian = self.kappa == 0.0
        self.flat = self.kappa == 0.0

    def _exponent(self, x):
        return self.kappa * np.asarray(x, dtype=float)[..., 0]

    def theta(self, x):
        return np.exp(self._exponent(x))[..., None] * self.base.theta(x)

    def theta_jacobian(self, x):
        x = np.asarray(x, dtype=float)
        scale = np.exp(self._exponent(x))[..., None, None]
        jac = scale * self.base.theta_jacobian(x)
        jac[..., :, 0] += self.kappa * scale[..., 0] * self.base.theta(x)
        return jac

    def reeb(self, x):
        """``exp(-u) (T - J grad_H u / 2)`` with ``u = kappa x^1``.

        This is the unique field with ``theta(T) = 1`` and ``T -| dtheta = 0``
        for the rescaled form; ``grad_H u = kappa e_1`` in the base frame.
        """
        x = np.asarray(x, dtype=float)
        base = self.base.frame(x)
        scale = np.exp(-self._exponent(x))[..., None]
        return scale * (base[..., :, -1] - 0.5 * self.kappa * base[..., :, 1])

    def reeb_solve(self, x):
        """Reeb field from the defining linear system (independent check)."""
        x = np.asarray(x, dtype=float)
        jac = self.theta_jacobian(x)
        curl = np.swapaxes(jac, -1, -2) - jac  # [k, i] = d_k theta_i - d_i theta_k
        system = np.concatenate([curl, self.theta(x)[..., None, :]], axis=-2)
        rhs = np.zeros(x.shape[:-1] + (self.dim + 1,))
        rhs[..., -1] = 1.0
        normal = np.swapaxes(system, -1, -2) @ system
        return np.linalg.solve(normal, np.swapaxes(system, -1, -2) @ rhs[..., None])[..., 0]

    def frame(self, x):
        x = np.asarray(x, dtype=float)
        base = self.base.frame(x)
        scale = np.exp(-0.5 * self._exponent(x))[..., None, None]
        out = base * scale
        out[..., :, -1] = self.reeb(x)
        return out

    def coframe(self, x):
        return np.linalg.inv(self.frame(x))

    def frame_jacobian(self, x):
        x = np.asarray(x, dtype=float)
        base = self.base.frame(x)
        dbase = self.base.frame_jacobian(x)
        u = self._exponent(x)
        half = np.exp(-0.5 * u)[..., None, None, None]
        jac = half * dbase
        jac[..., :, :, 0] -= 0.5 * self.kappa * half[..., 0] * base
        raw = base[..., :, -1] - 0.5 * self.kappa * base[..., :, 1]
        draw = dbase[..., :, -1, :] - 0.5 * self.kappa * dbase[..., :, 1, :]
        full = np.exp(-u)[..., None, None]
        jac[..., :, -1, :] = full * draw
        jac[..., :, -1, 0] -= self.kappa * full[..., 0] * raw
        return jac

    def check_contact(self, points: np.ndarray) -> float:
        """Minimum Levi-form eigenvalue over ``points`` (raises if not positive)."""
        worst = np.inf
        for x in np.atleast_2d(points):
            jac = self.theta_jacobian(x)
            curl = jac.T - jac
            hor = self.base.frame(x)[:, :-1]
            jh = self.base.frame(x) @ self.j_frame[:, :-1]
            levi = 0.5 * hor.T @ curl @ jh
            worst = min(worst, float(np.min(np.linalg.eigvalsh(0.5 * (levi + levi.T)))))
        if not worst > 0:
            raise DegenerateMetricError(f"Levi form not positive definite (min eig {worst:.3g})")
        return worst


def heisenberg(n: int) -> HeisenbergModel:
    return HeisenbergModel(n)


def sphere(n: int, center=None) -> SphereModel:
    return SphereModel(n, center)


def scaled_heisenberg(n: int, kappa: float = 0.1) -> ScaledHeisenbergModel:
    model = ScaledHeisenbergModel(n, kappa)
    model.check_contact(model.sample_points(100))
    return model


def model_from_id(spec: str, kappa: float | None = None) -> ModelManifold:
    """Build a model from ``heisenberg:n``, ``sphere:n`` or ``scaled-heisenberg:n[:kappa]``."""
    parts = spec.strip().split(":")
    try:
        if parts[0] == "heisenberg" and len(parts) == 2:
            return heisenberg(int(parts[1]))
        if parts[0] == "sphere" and len(parts) == 2:
            return sphere(int(parts[1]))
        if parts[0] == "scaled-heisenberg" and len(parts) in (2, 3):
            k = float(parts[2]) if len(parts) == 3 else 0.1
            if kappa is not None:
                k = float(kappa)
            return scaled_heisenberg(int(parts[1]), k)
    except ValueError as exc:
        raise ContractViolation(f"malformed model id {spec!r}: {exc}") from exc
    raise ContractViolation(f"unknown model id {spec!r}")
