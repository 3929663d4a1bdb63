"""Levi-Civita and Tanaka-Webster connections, curvature and the identity suite.

Everything is expressed in the model's adapted orthonormal frame
``(e_1, ..., e_{2n}, T)``.  Structure constants come from brackets of frame
fields, the Levi-Civita coefficients from the Koszul formula, and the
Tanaka-Webster coefficients by removing the correction terms that relate
the two connections.  Curvature needs first derivatives of the
coefficients; these are central differences along frame directions with
one Richardson level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import ChartPoint, ModelManifold, Tangent
from .errors import (
    DegenerateMetricError,
    DegeneratePlaneError,
    DomainError,
    InconsistentModelError,
)

FD_STEP = 1e-4
CHUNK = 4096


def tolerance_for(model: ModelManifold) -> float:
    return 1e-8 if model.closed_form_derivatives else 1e-6


# --------------------------------------------------------------------------
# Batched pointwise data
# --------------------------------------------------------------------------


def structure_constants(model: ModelManifold, pts: np.ndarray, frame_out: list | None = None) -> np.ndarray:
    """``C[p, a, b, c] = g([e_a, e_b], e_c)`` at every point of ``pts``."""
    fr, dfr, co = model.frame_data(pts)
    if frame_out is not None:
        frame_out.append(fr)
    # deriv[p, i, b, a] = (e_a applied to the components of e_b)^i
    deriv = np.einsum("pibk,pka->piba", dfr, fr)
    bracket = deriv - np.swapaxes(deriv, 2, 3)  # [p, i, b, a] = [e_a, e_b]^i
    return np.einsum("pci,piba->pabc", co, bracket)


def connection_batch(model: ModelManifold, pts: np.ndarray, keep_frame: bool = False) -> dict:
    """Structure constants, Levi-Civita and Tanaka-Webster data at many points."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    out = {"structure": [], "lc": [], "tw": [], "torsion_a": []}
    frames: list = []
    for start in range(0, len(pts), CHUNK):
        chunk = pts[start : start + CHUNK]
        c = structure_constants(model, chunk, frames)
        lc, tw, a = kernels.tw_from_structure(c, model.j_frame)
        out["structure"].append(c)
        out["lc"].append(lc)
        out["tw"].append(tw)
        out["torsion_a"].append(a)
    data = {k: np.concatenate(v) for k, v in out.items()}
    data["tau"] = np.swapaxes(data["torsion_a"], 1, 2)  # tau[p, c, a] = A(e_a, e_c)
    if keep_frame:
        data["frame"] = np.concatenate(frames)
    return data


def axiom_residuals(data: dict, j_frame: np.ndarray) -> dict:
    """Per-point residuals of the Tanaka-Webster and Levi-Civita axioms."""
    tw, lc, c, tau = data["tw"], data["lc"], data["structure"], data["tau"]
    m = tw.shape[-1]
    r = m - 1
    ax = (1, 2, 3)
    res = {}
    res["metric"] = np.max(np.abs(tw + np.swapaxes(tw, 2, 3)), axis=ax)
    gam = np.swapaxes(tw, 2, 3)  # [p, a, c, b] matrix of nabla_a
    res["complex_structure"] = np.max(np.abs(gam @ j_frame - j_frame @ gam), axis=ax)
    res["reeb_parallel"] = np.max(np.abs(tw[:, :, r, :]), axis=(1, 2))
    res["horizontal_parallel"] = np.max(np.abs(tw[:, :, :r, r]), axis=(1, 2))
    res["contact_form_parallel"] = np.max(np.abs(tw[:, :, :, r]), axis=(1, 2))
    tor = tw - np.swapaxes(tw, 1, 2) - c
    pure_h = tor[:, :r, :r, :].copy()
    pure_h[:, :, :, r] += 2.0 * j_frame[None, :r, :r]
    res["purity_horizontal"] = np.max(np.abs(pure_h), axis=ax)
    pure_t = tor[:, r, :r, :] - np.swapaxes(tau[:, :, :r], 1, 2)
    res["purity_reeb"] = np.max(np.abs(pure_t), axis=(1, 2))
    th = tau[:, :r, :r]
    jh = j_frame[:r, :r]
    res["torsion_symmetric"] = np.max(np.abs(th - np.swapaxes(th, 1, 2)), axis=(1, 2))
    res["torsion_anticommutes"] = np.max(np.abs(th @ jh + jh @ th), axis=(1, 2))
    res["lc_metric"] = np.max(np.abs(lc + np.swapaxes(lc, 2, 3)), axis=ax)
    res["lc_torsion"] = np.max(np.abs(lc - np.swapaxes(lc, 1, 2) - c), axis=ax)
    return res


def tw_oracle(structure: np.ndarray, j_frame: np.ndarray) -> tuple:
    """Tanaka-Webster coefficients as the least-squares solution of the defining axioms.

    Unknowns are ``Gamma[a, b, c] = g(nabla_{e_a} e_b, e_c)`` at one point.  The
    rows impose metric compatibility, ``nabla J = 0``, ``nabla T = 0``, a purely
    vertical torsion on horizontal pairs, and a symmetric ``tau`` that
    anticommutes with ``J``.  Returns ``(gamma, residual, rank)``.
    """
    c = np.asarray(structure, dtype=float)
    m = c.shape[-1]
    r = m - 1
    jm = np.asarray(j_frame, dtype=float)
    idx = np.arange(m**3).reshape(m, m, m)
    rows, rhs = [], []

    def row(entries, value=0.0):
        vec = np.zeros(m**3)
        for coef, (a, b, k) in entries:
            vec[idx[a, b, k]] += coef
        rows.append(vec)
        rhs.append(value)

    def tau_entries(k, a, sign=1.0):
        # component k of T(T, e_a) = Gamma[r, a, k] - Gamma[a, r, k] - C[r, a, k]
        return [(sign, (r, a, k)), (-sign, (a, r, k))], -sign * c[r, a, k]

    for a in range(m):
        for b in range(m):
            for k in range(m):
                row([(1.0, (a, b, k)), (1.0, (a, k, b))])
                ent = [(jm[d, b], (a, d, k)) for d in range(m) if jm[d, b]]
                ent += [(-jm[k, d], (a, b, d)) for d in range(m) if jm[k, d]]
                row(ent)
            row([(1.0, (a, r, b))])
    for a in range(r):
        for b in range(r):
            for k in range(r):
                row([(1.0, (a, b, k)), (-1.0, (b, a, k))], c[a, b, k])
            e1, v1 = tau_entries(b, a)
            e2, v2 = tau_entries(a, b, -1.0)
            row(e1 + e2, -(v1 + v2))
            ent, val = [], 0.0
            for d in range(r):
                if jm[d, a]:
                    e, v = tau_entries(b, d, jm[d, a])
                    ent += e
                    val += v
                if jm[b, d]:
                    e, v = tau_entries(d, a, jm[b, d])
                    ent += e
                    val += v
            row(ent, -val)
    mat = np.array(rows)
    sol, _, rank, _ = np.linalg.lstsq(mat, np.array(rhs), rcond=None)
    resid = float(np.max(np.abs(mat @ sol - np.array(rhs))))
    return sol.reshape(m, m, m), resid, int(rank)


_CONSTANT_CACHE: dict = {}


def connection_at(model: ModelManifold, x: np.ndarray, levi_civita_too: bool = False, with_frame: bool = False):
    """``(tw, tau)`` at one or many points, optionally followed by ``lc`` and the frame.

    Left-invariant frames have constant coefficients, which are computed once.
    """
    x = np.asarray(x, dtype=float)
    lead = x.shape[:-1]
    m = model.frame_size
    if model.left_invariant:
        key = (type(model).__name__, model.model_id)
        if key not in _CONSTANT_CACHE:
            _CONSTANT_CACHE[key] = connection_batch(model, model.origin()[None])
        const = _CONSTANT_CACHE[key]
        if not lead:
            out = [const["tw"][0], const["tau"][0]]
            if levi_civita_too:
                out.append(const["lc"][0])
            if with_frame:
                out.append(model.frame(x))
            return tuple(out)
        data = {k: np.broadcast_to(v[0], lead + v.shape[1:]) for k, v in const.items()}
        if with_frame:
            data["frame"] = model.frame(x)
    else:
        flat = x.reshape(-1, x.shape[-1])
        data = connection_batch(model, flat, keep_frame=with_frame)
        data = {k: v.reshape(lead + v.shape[1:]) for k, v in data.items()}
    out = [data["tw"], data["tau"]]
    if levi_civita_too:
        out.append(data["lc"])
    if with_frame:
        out.append(data["frame"])
    return tuple(out)


def _displaced(model: ModelManifold, pts: np.ndarray, step: float) -> np.ndarray:
    """Points moved by ``s e_a`` for ``s in (+h, -h, +h/2, -h/2)`` and every ``a``.

    Returns an array of shape ``(P, m, 4, N)``.
    """
    fr = model.frame(pts)  # (P, N, m)
    shifts = np.array([step, -step, 0.5 * step, -0.5 * step])
    disp = shifts[None, None, :, None] * np.swapaxes(fr, 1, 2)[:, :, None, :]
    return model.move(pts[:, None, None, :], disp)


def _richardson(vals: np.ndarray, step: float) -> np.ndarray:
    """Central differences from ``vals[:, :, k, ...]`` with shifts (+h, -h, +h/2, -h/2)."""
    coarse = (vals[:, :, 0] - vals[:, :, 1]) / (2 * step)
    fine = (vals[:, :, 2] - vals[:, :, 3]) / step
    return (4.0 * fine - coarse) / 3.0


def curvature_batch(model: ModelManifold, pts: np.ndarray, step: float = FD_STEP) -> dict:
    """Connection data plus curvature of both connections and the covariant derivative of tau.

    Keys added to :func:`connection_batch` output:
        ``curv``: TW curvature ``[p, a, b, c, f]`` = component f of R(e_a, e_b) e_c.
        ``curv_lc``: the same for the Levi-Civita connection.
        ``nabla_tau``: ``[p, a, c, b]`` = component c of (nabla_{e_a} tau) e_b.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    base = connection_batch(model, pts)
    npts, m = len(pts), model.frame_size
    per_chunk = max(1, CHUNK // (4 * m))
    dtw, dlc, dtau = [], [], []
    for start in range(0, npts, per_chunk):
        chunk = pts[start : start + per_chunk]
        moved = _displaced(model, chunk, step)
        flat = moved.reshape(-1, moved.shape[-1])
        shifted = connection_batch(model, flat)
        shape = (len(chunk), m, 4)
        dtw.append(_richardson(shifted["tw"].reshape(shape + (m, m, m)), step))
        dlc.append(_richardson(shifted["lc"].reshape(shape + (m, m, m)), step))
        dtau.append(_richardson(shifted["tau"].reshape(shape + (m, m)), step))
    dtw = np.concatenate(dtw)
    dlc = np.concatenate(dlc)
    dtau = np.concatenate(dtau)
    base["curv"] = kernels.curvature(base["tw"], dtw, base["structure"])
    base["curv_lc"] = kernels.curvature(base["lc"], dlc, base["structure"])
    tw, tau = base["tw"], base["tau"]
    base["nabla_tau"] = (
        dtau + np.einsum("padc,pdb->pacb", tw, tau) - np.einsum("pcd,pabd->pacb", tau, tw)
    )
    base["d_tw"] = dtw
    return base


# --------------------------------------------------------------------------
# Public pointwise operations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConnectionData:
    """Connection coefficients ``gamma[a, b, c] = g(nabla_{e_a} e_b, e_c)`` at one point."""

    base: ChartPoint
    gamma: np.ndarray
    tau_matrix: np.ndarray
    structure: np.ndarray
    axiom_residuals: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CurvatureSample:
    """Curvature ``components[a, b, c, f]`` (component f of R(e_a, e_b) e_c) at one point."""

    base: ChartPoint
    components: np.ndarray

    def tensor4(self, x, y, z, w) -> float:
        """``R(X, Y, Z, W) = g(R(Z, W) Y, X)`` on frame components."""
        return float(np.einsum("abcf,a,b,c,f->", self.components, z, w, y, x))


def _single(model: ModelManifold, x) -> np.ndarray:
    return model.check_point(x)


def levi_civita(model: ModelManifold, x) -> ConnectionData:
    coords = _single(model, x)
    sv = np.linalg.svd(model.frame(coords), compute_uv=False)
    if sv[-1] < 1e-12 * sv[0]:
        raise DegenerateMetricError("adapted frame is singular")
    data = connection_batch(model, coords[None])
    res = {k: float(v[0]) for k, v in axiom_residuals(data, model.j_frame).items()}
    lc_res = {"metric": res["lc_metric"], "torsion": res["lc_torsion"]}
    return ConnectionData(model.point(coords), data["lc"][0], np.zeros((2 * model.n,) * 2), data["structure"][0], lc_res)


def tw_connection(model: ModelManifold, x) -> ConnectionData:
    """Tanaka-Webster connection at ``x``; raises if the axioms fail grossly."""
    coords = _single(model, x)
    data = connection_batch(model, coords[None])
    res = {k: float(v[0]) for k, v in axiom_residuals(data, model.j_frame).items()}
    tol = tolerance_for(model)
    bad = {k: v for k, v in res.items() if not v < 10 * tol}
    if bad:
        raise InconsistentModelError(f"connection axioms violated at {coords}: {bad}")
    r = 2 * model.n
    return ConnectionData(
        model.point(coords), data["tw"][0], data["tau"][0, :r, :r], data["structure"][0], res
    )


def curvature_sample(model: ModelManifold, x, levi_civita_connection: bool = False) -> CurvatureSample:
    coords = _single(model, x)
    data = curvature_batch(model, coords[None])
    key = "curv_lc" if levi_civita_connection else "curv"
    comps = data[key][0]
    if not np.all(np.isfinite(comps)):
        raise DomainError(f"curvature evaluation failed at {coords}")
    return CurvatureSample(model.point(coords), comps)


def _frame_comps(model: ModelManifold, x: np.ndarray, u) -> np.ndarray:
    if isinstance(u, Tangent):
        u = u.components
    return model.coframe(x) @ np.asarray(u, dtype=float)


def curvature(model: ModelManifold, x, u, v, w) -> Tangent:
    """``R(u, v) w`` as a coordinate tangent vector."""
    coords = _single(model, x)
    sample = curvature_sample(model, coords)
    cu, cv, cw = (_frame_comps(model, coords, y) for y in (u, v, w))
    out = np.einsum("abcf,a,b,c->f", sample.components, cu, cv, cw)
    return Tangent(model.point(coords), model.frame(coords) @ out)


def sectional_from_components(curv: np.ndarray, cu: np.ndarray, cv: np.ndarray) -> float:
    """Pseudohermitian sectional curvature of span{cu, cv} from frame components."""
    nu = np.linalg.norm(cu)
    if nu == 0:
        raise DegeneratePlaneError("zero vector does not span a plane")
    e1 = cu / nu
    w = cv - (cv @ e1) * e1
    nw = np.linalg.norm(w)
    if nw < 1e-12 * max(1.0, np.linalg.norm(cv)):
        raise DegeneratePlaneError("vectors are linearly dependent")
    e2 = w / nw
    return 0.25 * float(np.einsum("abcf,a,b,c,f->", curv, e1, e2, e2, e1))


def sectional(model: ModelManifold, x, u, v) -> float:
    coords = _single(model, x)
    sample = curvature_sample(model, coords)
    return sectional_from_components(
        sample.components, _frame_comps(model, coords, u), _frame_comps(model, coords, v)
    )


def ricci_from_components(curv: np.ndarray, cu: np.ndarray) -> float:
    """``sum_i g(R(E_i, u) u, E_i)`` over the horizontal part of the frame."""
    r = curv.shape[0] - 1
    if abs(cu[r]) > 1e-10 * max(1.0, np.linalg.norm(cu)):
        raise DomainError("Ricci form is evaluated on horizontal vectors only")
    return float(sum(np.einsum("bcf,b,c->f", curv[i], cu, cu)[i] for i in range(r)))


def ricci(model: ModelManifold, x, u) -> float:
    coords = _single(model, x)
    sample = curvature_sample(model, coords)
    return ricci_from_components(sample.components, _frame_comps(model, coords, u))


# --------------------------------------------------------------------------
# Identity suite
# --------------------------------------------------------------------------


@dataclass
class ResidualEntry:
    identity_name: str
    point: list
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.residual < self.tolerance)

    def to_json(self) -> dict:
        return {
            "identity_name": self.identity_name,
            "point": [float(v) for v in self.point],
            "residual": float(self.residual),
            "tolerance": float(self.tolerance),
            "pass": self.passed,
        }


@dataclass
class ResidualReport:
    entries: list = field(default_factory=list)

    def add(self, name: str, point, residual: float, tolerance: float) -> None:
        self.entries.append(ResidualEntry(name, list(np.asarray(point, dtype=float)), float(residual), tolerance))

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def worst(self) -> dict:
        """Largest residual per identity name."""
        out: dict = {}
        for e in self.entries:
            if e.identity_name not in out or e.residual > out[e.identity_name][0]:
                out[e.identity_name] = (e.residual, e.tolerance)
        return out

    def names(self) -> list:
        return sorted({e.identity_name for e in self.entries})

    def to_json(self) -> list:
        return [e.to_json() for e in self.entries]


def _wedge_apply(x, y, z):
    """``(x wedge y) z = g(x, z) y - g(y, z) x``."""
    return (x @ z) * y - (y @ z) * x


def _identity_residuals(model: ModelManifold, k: dict, p: int, vecs: np.ndarray, hvecs: np.ndarray) -> dict:
    """Residuals of every identity at point ``p`` for each random tuple."""
    m = model.frame_size
    r = m - 1
    curv, curv_lc = k["curv"][p], k["curv_lc"][p]
    tau = k["tau"][p]
    ntau = k["nabla_tau"][p]
    jm = model.j_frame
    t_vec = np.zeros(m)
    t_vec[r] = 1.0

    def rmap(a, b, c, tensor=curv):
        return np.einsum("abcf,a,b,c->f", tensor, a, b, c)

    def r4(x, y, z, w):
        return float(rmap(z, w, y) @ x)

    def om(a, b):
        return float(a @ (jm @ b))

    def amap(a, b):
        return float(b @ (tau @ a))

    def s_op(a, b):
        return np.einsum("acb,a,b->c", ntau, a, b) - np.einsum("acb,a,b->c", ntau, b, a)

    def hor(a):
        out = a.copy()
        out[r] = 0.0
        return out

    lops = tau + jm
    ops = tau @ tau + 2.0 * jm @ tau - np.eye(m)

    res: dict = {}

    def push(name, value):
        res[name] = max(res.get(name, 0.0), float(value))

    for (x, y, z, w), (xh, yh, zh, _) in zip(vecs, hvecs):
        cyc = rmap(xh, yh, zh) + rmap(yh, zh, xh) + rmap(zh, xh, yh)
        cyc += 2.0 * (om(xh, yh) * tau @ zh + om(yh, zh) * tau @ xh + om(zh, xh) * tau @ yh)
        push("A2_first_bianchi", np.linalg.norm(cyc))
        a3 = rmap(xh, t_vec, yh) + rmap(t_vec, yh, xh) - s_op(xh, yh)
        push("A3_reeb_bianchi", np.linalg.norm(a3))
        push("A4_first_pair", abs(r4(x, y, z, w) + r4(y, x, z, w)))
        push("A5_second_pair", abs(r4(x, y, z, w) + r4(x, y, w, z)))
        th = lambda v: float(v[r])  # noqa: E731
        a8 = r4(x, y, z, w) - r4(z, w, x, y)
        a8 += 2 * om(y, z) * amap(x, w) - 2 * om(y, w) * amap(x, z)
        a8 += 2 * om(x, w) * amap(y, z) - 2 * om(x, z) * amap(y, w)
        a8 -= th(x) * float(s_op(hor(z), hor(w)) @ y) + th(y) * float(s_op(hor(w), hor(z)) @ x)
        a8 -= th(z) * float(s_op(hor(y), hor(x)) @ w) + th(w) * float(s_op(hor(x), hor(y)) @ z)
        push("A8_pair_interchange", abs(a8))
        if model.sasakian:
            push("pair_symmetry", abs(r4(x, y, z, w) - r4(z, w, x, y)))
        # Levi-Civita curvature in terms of the Tanaka-Webster data.
        lx, ly = lops @ x, lops @ y
        sxy = s_op(x, y)
        wedge_o = 0.5 * (th(x) * ops @ y - th(y) * ops @ x)
        rel = rmap(x, y, z) + _wedge_apply(lx, ly, z) - 2 * om(x, y) * (jm @ z)
        rel += -float(sxy @ z) * t_vec + th(z) * sxy
        rel += -2 * float(wedge_o @ z) * t_vec + 2 * th(z) * wedge_o
        push("levi_civita_relation", np.linalg.norm(rmap(x, y, z, curv_lc) - rel))
        if model.flat or model.model_id.startswith("sphere"):
            c_val = -3.0 if model.flat else 1.0
            # Structure (phi, xi, eta) = (J, -T, -theta) of the space form.
            eta = lambda v: -th(v)  # noqa: E731
            xi = -t_vec
            sf = (c_val + 3) / 4 * ((y @ z) * x - (x @ z) * y)
            sf += (c_val - 1) / 4 * (
                eta(z) * (eta(x) * y - eta(y) * x)
                + ((x @ z) * eta(y) - (y @ z) * eta(x)) * xi
                + om(z, y) * (jm @ x)
                - om(z, x) * (jm @ y)
                + 2 * om(x, y) * (jm @ z)
            )
            push("space_form_curvature", np.linalg.norm(rmap(x, y, z, curv_lc) - sf))
        if model.flat:
            j7 = om(z, y) * tau @ x - om(z, x) * tau @ y + amap(z, y) * jm @ x - amap(z, x) * jm @ y
            push("J7_constant_curvature", np.linalg.norm(rmap(x, y, z) - j7))
    return res


IDENTITY_TOLERANCES = {"J7_constant_curvature": 1e-8}


def identity_suite(
    model: ModelManifold, sample_points: np.ndarray, trials: int = 5, seed: int = 0
) -> ResidualReport:
    """Run the curvature identities at every sample point with random vector tuples."""
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    if len(pts) == 0 or trials < 1:
        raise DomainError("identity suite needs at least one point and one trial")
    k = curvature_batch(model, pts)
    rng = np.random.default_rng(seed)
    m = model.frame_size
    base_tol = 1e-6 if model.closed_form_derivatives else 1e-5
    report = ResidualReport()
    for p, x in enumerate(pts):
        vecs = rng.normal(size=(trials, 4, m))
        hvecs = vecs.copy()
        hvecs[..., -1] = 0.0
        res = _identity_residuals(model, k, p, vecs, hvecs)
        for name in sorted(res):
            report.add(name, x, res[name], IDENTITY_TOLERANCES.get(name, base_tol))
    return report
