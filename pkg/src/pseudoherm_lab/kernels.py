"""Hot numerical kernels with interchangeable numba and numpy backends.

Every kernel exists twice: an explicit-loop version compiled with
``numba.njit`` and a vectorised numpy version.  The backend is chosen once
at import time.  Setting the environment variable ``PSEUDOHERM_LAB_NO_NUMBA``
to a non-empty value other than ``0`` selects numpy; so does a missing numba
installation.  Both variants are always importable under explicit names so
that tests and the benchmark can compare them.

Index conventions (all arrays carry a leading batch axis ``p``):

* ``structure[p, a, b, c] = g([e_a, e_b], e_c)`` for an orthonormal frame.
* ``j_frame[c, b]`` is component ``c`` of ``J e_b``; the Reeb index is last.
* ``coeffs[p, a, b, c] = g(nabla_{e_a} e_b, e_c)``.
* ``curv[p, a, b, c, f]`` is component ``f`` of ``R(e_a, e_b) e_c``.
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - exercised implicitly
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    _HAVE_NUMBA = False


def _numba_disabled() -> bool:
    flag = os.environ.get("PSEUDOHERM_LAB_NO_NUMBA", "")
    return flag not in ("", "0")


BACKEND = "numba" if (_HAVE_NUMBA and not _numba_disabled()) else "numpy"


def _njit(func):
    if not _HAVE_NUMBA:
        return func
    return numba.njit(cache=True)(func)


# --------------------------------------------------------------------------
# Koszul formula followed by inversion of the D <-> nabla relation
# --------------------------------------------------------------------------


def tw_from_structure_numpy(structure: np.ndarray, j_frame: np.ndarray):
    """Levi-Civita and Tanaka-Webster coefficients from structure constants.

    Returns:
        ``(lc, tw, torsion_a)`` where ``torsion_a[p, a, b] = A(e_a, e_b)``
        (zero whenever an index is the Reeb index).
    """
    c = structure
    lc = 0.5 * (c - np.swapaxes(c, 2, 3) - np.transpose(c, (0, 3, 1, 2)))
    m = c.shape[-1]
    r = m - 1
    omega = j_frame  # g(e_a, J e_b) = j_frame[a, b] in an orthonormal frame
    torsion_a = np.zeros(c.shape[:3])
    torsion_a[:, :r, :r] = omega[None, :r, :r] - lc[:, :r, :r, r]
    tau = np.swapaxes(torsion_a, 1, 2)  # tau[p, c, a] = A(e_a, e_c)
    tw = lc.copy()
    tw[:, :, :, r] -= omega[None] - torsion_a
    tw[:, :, r, :] -= np.swapaxes(tau, 1, 2) + j_frame.T[None]
    tw[:, r, :, :] -= j_frame.T[None]
    return lc, tw, torsion_a


def _tw_from_structure_loops(structure, j_frame):
    npts, m = structure.shape[0], structure.shape[1]
    r = m - 1
    lc = np.empty_like(structure)
    tw = np.empty_like(structure)
    torsion_a = np.zeros((npts, m, m))
    for p in range(npts):
        for a in range(m):
            for b in range(m):
                for k in range(m):
                    lc[p, a, b, k] = 0.5 * (
                        structure[p, a, b, k]
                        - structure[p, a, k, b]
                        - structure[p, b, k, a]
                    )
        for a in range(r):
            for b in range(r):
                torsion_a[p, a, b] = j_frame[a, b] - lc[p, a, b, r]
        for a in range(m):
            for b in range(m):
                for k in range(m):
                    val = lc[p, a, b, k]
                    if k == r:
                        val -= j_frame[a, b] - torsion_a[p, a, b]
                    if b == r:
                        val -= torsion_a[p, a, k] + j_frame[k, a]
                    if a == r:
                        val -= j_frame[k, b]
                    tw[p, a, b, k] = val
    return lc, tw, torsion_a


tw_from_structure_numba = _njit(_tw_from_structure_loops)


# --------------------------------------------------------------------------
# Curvature from coefficients and their frame derivatives
# --------------------------------------------------------------------------


def curvature_numpy(
    coeffs: np.ndarray, dcoeffs: np.ndarray, structure: np.ndarray
) -> np.ndarray:
    """R(e_a, e_b) e_c from coefficients and ``dcoeffs[p, a, ...] = e_a(coeffs)``."""
    out = dcoeffs - np.swapaxes(dcoeffs, 1, 2)
    out += np.einsum("pbcd,padf->pabcf", coeffs, coeffs)
    out -= np.einsum("pacd,pbdf->pabcf", coeffs, coeffs)
    out -= np.einsum("pabd,pdcf->pabcf", structure, coeffs)
    return out


def _curvature_loops(coeffs, dcoeffs, structure):
    npts, m = coeffs.shape[0], coeffs.shape[1]
    out = np.empty((npts, m, m, m, m))
    for p in range(npts):
        for a in range(m):
            for b in range(m):
                for c in range(m):
                    for f in range(m):
                        val = dcoeffs[p, a, b, c, f] - dcoeffs[p, b, a, c, f]
                        for d in range(m):
                            val += coeffs[p, b, c, d] * coeffs[p, a, d, f]
                            val -= coeffs[p, a, c, d] * coeffs[p, b, d, f]
                            val -= structure[p, a, b, d] * coeffs[p, d, c, f]
                        out[p, a, b, c, f] = val
    return out


curvature_numba = _njit(_curvature_loops)


# --------------------------------------------------------------------------
# RK4 propagation of a linear system y' = A(t) y
# --------------------------------------------------------------------------


def propagate_linear_numpy(
    a_nodes: np.ndarray, a_mids: np.ndarray, steps: np.ndarray, y0: np.ndarray
) -> np.ndarray:
    """Classical RK4 for ``y' = A(t) y`` with ``A`` sampled at nodes and midpoints.

    Args:
        a_nodes: ``(K+1, d, d)`` coefficient matrices at the grid nodes.
        a_mids: ``(K, d, d)`` coefficient matrices at the step midpoints.
        steps: ``(K,)`` step sizes.
        y0: ``(d, q)`` initial block of solutions.

    Returns:
        ``(K+1, d, q)`` solution block at every node.
    """
    out = np.empty((a_nodes.shape[0],) + y0.shape)
    y = y0.astype(float).copy()
    out[0] = y
    for k in range(steps.shape[0]):
        h = steps[k]
        k1 = a_nodes[k] @ y
        k2 = a_mids[k] @ (y + 0.5 * h * k1)
        k3 = a_mids[k] @ (y + 0.5 * h * k2)
        k4 = a_nodes[k + 1] @ (y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = y
    return out


def _matmul_into(mat, vec, out):
    d, q = vec.shape
    for i in range(d):
        for j in range(q):
            acc = 0.0
            for k in range(d):
                acc += mat[i, k] * vec[k, j]
            out[i, j] = acc


def _propagate_linear_loops(a_nodes, a_mids, steps, y0):
    d, q = y0.shape
    out = np.empty((a_nodes.shape[0], d, q))
    y = y0.copy()
    out[0] = y
    k1 = np.empty((d, q))
    k2 = np.empty((d, q))
    k3 = np.empty((d, q))
    k4 = np.empty((d, q))
    tmp = np.empty((d, q))
    for k in range(steps.shape[0]):
        h = steps[k]
        _matmul_into(a_nodes[k], y, k1)
        for i in range(d):
            for j in range(q):
                tmp[i, j] = y[i, j] + 0.5 * h * k1[i, j]
        _matmul_into(a_mids[k], tmp, k2)
        for i in range(d):
            for j in range(q):
                tmp[i, j] = y[i, j] + 0.5 * h * k2[i, j]
        _matmul_into(a_mids[k], tmp, k3)
        for i in range(d):
            for j in range(q):
                tmp[i, j] = y[i, j] + h * k3[i, j]
        _matmul_into(a_nodes[k + 1], tmp, k4)
        for i in range(d):
            for j in range(q):
                y[i, j] += (h / 6.0) * (
                    k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j] + k4[i, j]
                )
        out[k + 1] = y
    return out


if _HAVE_NUMBA:
    _matmul_into = numba.njit(cache=True)(_matmul_into)
propagate_linear_numba = _njit(_propagate_linear_loops)


# --------------------------------------------------------------------------
# Cubic Hermite evaluation on a piecewise grid
# --------------------------------------------------------------------------


def hermite_numpy(
    t_nodes: np.ndarray, values: np.ndarray, derivs: np.ndarray, tq: np.ndarray
) -> np.ndarray:
    """Cubic Hermite interpolation of ``values`` (shape ``(K+1, q)``) at ``tq``."""
    idx = np.clip(np.searchsorted(t_nodes, tq, side="right") - 1, 0, len(t_nodes) - 2)
    t0 = t_nodes[idx]
    h = t_nodes[idx + 1] - t0
    s = ((tq - t0) / h)[:, None]
    h = h[:, None]
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return (
        h00 * values[idx]
        + h10 * h * derivs[idx]
        + h01 * values[idx + 1]
        + h11 * h * derivs[idx + 1]
    )


def _hermite_loops(t_nodes, values, derivs, tq):
    nq = tq.shape[0]
    q = values.shape[1]
    out = np.empty((nq, q))
    last = t_nodes.shape[0] - 2
    for i in range(nq):
        j = np.searchsorted(t_nodes, tq[i], side="right") - 1
        if j < 0:
            j = 0
        if j > last:
            j = last
        h = t_nodes[j + 1] - t_nodes[j]
        s = (tq[i] - t_nodes[j]) / h
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        for k in range(q):
            out[i, k] = (
                h00 * values[j, k]
                + h10 * h * derivs[j, k]
                + h01 * values[j + 1, k]
                + h11 * h * derivs[j + 1, k]
            )
    return out


hermite_numba = _njit(_hermite_loops)


# --------------------------------------------------------------------------
# Dispatch
# --------------------------------------------------------------------------

_IMPLS = {
    "numba": {
        "tw_from_structure": tw_from_structure_numba,
        "curvature": curvature_numba,
        "propagate_linear": propagate_linear_numba,
        "hermite": hermite_numba,
    },
    "numpy": {
        "tw_from_structure": tw_from_structure_numpy,
        "curvature": curvature_numpy,
        "propagate_linear": propagate_linear_numpy,
        "hermite": hermite_numpy,
    },
}


def implementation(name: str, backend: str | None = None):
    """Return kernel ``name`` for ``backend`` (default: the active backend)."""
    return _IMPLS[backend or BACKEND][name]


def tw_from_structure(structure, j_frame):
    return _IMPLS[BACKEND]["tw_from_structure"](
        np.ascontiguousarray(structure, dtype=float),
        np.ascontiguousarray(j_frame, dtype=float),
    )


def curvature(coeffs, dcoeffs, structure):
    return _IMPLS[BACKEND]["curvature"](
        np.ascontiguousarray(coeffs, dtype=float),
        np.ascontiguousarray(dcoeffs, dtype=float),
        np.ascontiguousarray(structure, dtype=float),
    )


def propagate_linear(a_nodes, a_mids, steps, y0):
    return _IMPLS[BACKEND]["propagate_linear"](
        np.ascontiguousarray(a_nodes, dtype=float),
        np.ascontiguousarray(a_mids, dtype=float),
        np.ascontiguousarray(steps, dtype=float),
        np.ascontiguousarray(y0, dtype=float),
    )


def hermite(t_nodes, values, derivs, tq):
    values = np.asarray(values, dtype=float)
    shape = values.shape[1:]
    out = _IMPLS[BACKEND]["hermite"](
        np.ascontiguousarray(t_nodes, dtype=float),
        np.ascontiguousarray(values.reshape(values.shape[0], -1)),
        np.ascontiguousarray(np.asarray(derivs, dtype=float).reshape(values.shape[0], -1)),
        np.ascontiguousarray(np.atleast_1d(np.asarray(tq, dtype=float))),
    )
    return out.reshape((-1,) + shape)
