"""Primal-dual interior-point solver for second-order cone programs.

Standard form:

    minimize    c'x
    subject to  A x = b
                G x + s = h,   s in K

with K a product of a nonnegative orthant and small second-order cones.
The solver embeds the primal-dual pair in the homogeneous self-dual model,
so infeasible problems terminate with a Farkas certificate instead of
diverging.  Search directions come from a Mehrotra predictor-corrector with
Nesterov-Todd scaling; the sparse KKT system is factored with SuperLU plus
static regularization and iterative refinement.

Convergence and infeasibility decisions are made on the original problem
data.  Ruiz equilibration (uniform across each cone block, so cone geometry
is preserved) is applied internally only.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

OPTIMAL = "Optimal"
PRIMAL_INFEASIBLE = "PrimalInfeasible"
DUAL_INFEASIBLE = "DualInfeasible"
MAX_ITERATIONS = "MaxIterations"
NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class ConeSpec:
    """Orthant dimension followed by second-order cone sizes, in order."""

    orthant: int
    socs: tuple

    @property
    def total(self) -> int:
        return self.orthant + sum(self.socs)

    @property
    def degree(self) -> int:
        return self.orthant + len(self.socs)

    def blocks(self):
        at = self.orthant
        for d in self.socs:
            yield at, d
            at += d


@dataclass
class StandardConicForm:
    """Problem data in standard conic form."""

    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    cones: ConeSpec
    row_labels: list = field(default_factory=list)


@dataclass(frozen=True)
class SolverSettings:
    max_iter: int = 200
    tol_feas: float = 1e-8
    tol_gap: float = 1e-8
    tol_infeas: float = 1e-8
    reg: float = 1e-11
    refine_steps: int = 8
    step_fraction: float = 0.98
    tau_kappa_guard: float = 1e-10
    equilibrate: bool = True
    equilibrate_iters: int = 10
    stall_alpha: float = 1e-7
    stall_limit: int = 3
    verbose: bool = False


@dataclass
class SolveReport:
    status: str
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    tau: float
    kappa: float
    objective: float
    iterations: int
    residuals: dict
    history: list
    wall_time: float
    certificate: dict | None = None


def canonicalize(program) -> StandardConicForm:
    """Flatten a transcription-level program into standard conic form.

    Equality rows map directly.  Each bound row contributes one orthant row
    per finite side; cone blocks map to second-order cone slices of (G, h).
    """
    n = program.num_vars
    if program.objective.size != n:
        raise ValueError(f"objective has {program.objective.size} entries for {n} variables")
    for blk in program.cones:
        if not blk.rows:
            raise ValueError(f"cone block {blk.label!r} has no rows")

    def checked(cols, label):
        for cc in cols:
            if not 0 <= cc < n:
                raise ValueError(f"row {label!r} references variable {cc}, have {n}")
        return cols

    eq_rows, eq_cols, eq_vals, eq_rhs = [], [], [], []
    for i, row in enumerate(program.equalities):
        for cc, v in zip(checked(row.cols, row.label), row.vals):
            eq_rows.append(i)
            eq_cols.append(cc)
            eq_vals.append(v)
        eq_rhs.append(-row.offset)
    A = sp.csr_matrix((eq_vals, (eq_rows, eq_cols)), shape=(len(program.equalities), n))
    b = np.asarray(eq_rhs, dtype=float)

    g_rows, g_cols, g_vals, h_vals, labels = [], [], [], [], []

    def push(cols, vals, rhs, label):
        i = len(h_vals)
        for cc, v in zip(checked(cols, label), vals):
            g_rows.append(i)
            g_cols.append(cc)
            g_vals.append(v)
        h_vals.append(rhs)
        labels.append(label)

    for row in program.bounds:
        if np.isfinite(row.upper):
            # expr <= upper  ->  +vals x <= upper - offset
            push(row.cols, row.vals, row.upper - row.offset, f"{row.label}:upper")
        if np.isfinite(row.lower):
            # expr >= lower  ->  -vals x <= offset - lower
            push(row.cols, tuple(-v for v in row.vals), row.offset - row.lower, f"{row.label}:lower")
    orthant = len(h_vals)

    socs = []
    for blk in program.cones:
        for r in blk.rows:
            # slack equals the affine expression: G row = -vals, h = offset
            push(r.cols, tuple(-v for v in r.vals), r.offset, r.label)
        socs.append(len(blk.rows))
    G = sp.csr_matrix((g_vals, (g_rows, g_cols)), shape=(len(h_vals), n))
    h = np.asarray(h_vals, dtype=float)

    return StandardConicForm(
        c=program.objective.astype(float).copy(),
        A=A,
        b=b,
        G=G,
        h=h,
        cones=ConeSpec(orthant=orthant, socs=tuple(socs)),
        row_labels=labels,
    )


# cone algebra on stacked slack vectors


def cone_identity(spec: ConeSpec) -> np.ndarray:
    e = np.zeros(spec.total)
    e[: spec.orthant] = 1.0
    for at, _ in spec.blocks():
        e[at] = 1.0
    return e


def cone_residual(spec: ConeSpec, v: np.ndarray) -> float:
    """How far v sits outside K (0 for members)."""
    worst = 0.0
    if spec.orthant:
        worst = max(worst, float(np.max(-v[: spec.orthant], initial=0.0)))
    for at, d in spec.blocks():
        worst = max(worst, float(np.linalg.norm(v[at + 1 : at + d]) - v[at]))
    return worst


def jordan_product(spec: ConeSpec, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = np.empty(spec.total)
    o = spec.orthant
    out[:o] = u[:o] * v[:o]
    for at, d in spec.blocks():
        u0, u1 = u[at], u[at + 1 : at + d]
        v0, v1 = v[at], v[at + 1 : at + d]
        out[at] = u0 * v0 + u1 @ v1
        out[at + 1 : at + d] = u0 * v1 + v0 * u1
    return out


def jordan_solve(spec: ConeSpec, lam: np.ndarray, v: np.ndarray) -> np.ndarray:
    """u with lam o u = v."""
    out = np.empty(spec.total)
    o = spec.orthant
    out[:o] = v[:o] / lam[:o]
    for at, d in spec.blocks():
        l0, l1 = lam[at], lam[at + 1 : at + d]
        v0, v1 = v[at], v[at + 1 : at + d]
        nl1 = float(np.linalg.norm(l1))
        det = (l0 - nl1) * (l0 + nl1)
        u0 = (l0 * v0 - l1 @ v1) / det
        out[at] = u0
        out[at + 1 : at + d] = (v1 - u0 * l1) / l0
    return out


def max_step(spec: ConeSpec, v: np.ndarray, dv: np.ndarray) -> float:
    """Largest t with v + t dv still in K (v strictly interior)."""
    t = np.inf
    o = spec.orthant
    neg = dv[:o] < 0.0
    if np.any(neg):
        t = min(t, float(np.min(-v[:o][neg] / dv[:o][neg])))
    for at, d in spec.blocks():
        v0, v1 = v[at], v[at + 1 : at + d]
        d0, d1 = dv[at], dv[at + 1 : at + d]
        a = d0 * d0 - d1 @ d1
        bq = v0 * d0 - v1 @ d1
        # factored form: v0^2 - |v1|^2 cancels catastrophically near the
        # boundary, which is exactly where this routine matters
        nv1 = float(np.linalg.norm(v1))
        cq = (v0 - nv1) * (v0 + nv1)
        # roots of a t^2 + 2 bq t + cq = 0; cq > 0 strictly inside
        if abs(a) < 1e-300:
            if bq < 0.0:
                t = min(t, -cq / (2.0 * bq))
            continue
        disc = bq * bq - a * cq
        if disc < 0.0:
            if a < 0.0:
                # quadratic opens downward, must cross eventually
                disc = 0.0
            else:
                continue
        root = math.sqrt(max(disc, 0.0))
        for cand in ((-bq - root) / a, (-bq + root) / a):
            if cand > 0.0 and v0 + cand * d0 >= 0.0:
                t = min(t, cand)
    return t


class Scaling:
    """Nesterov-Todd scaling for the product cone.

    Holds the diagonal orthant part, per-cone (eta, w_bar) pairs, and index
    templates so the block-diagonal W^2 can be refreshed without rebuilding
    sparsity structure.
    """

    def __init__(self, spec: ConeSpec, s: np.ndarray, z: np.ndarray):
        self.spec = spec
        o = spec.orthant
        self.w_orth = np.sqrt(s[:o] / z[:o])
        self.soc = []
        for at, d in spec.blocks():
            s0, s1 = s[at], s[at + 1 : at + d]
            z0, z1 = z[at], z[at + 1 : at + d]
            ns1 = float(np.linalg.norm(s1))
            nz1 = float(np.linalg.norm(z1))
            s_res = (s0 - ns1) * (s0 + ns1)
            z_res = (z0 - nz1) * (z0 + nz1)
            if s_res <= 0.0 or z_res <= 0.0:
                raise FloatingPointError("scaling point left the cone interior")
            sbar = np.concatenate(([s0], s1)) / math.sqrt(s_res)
            zbar = np.concatenate(([z0], z1)) / math.sqrt(z_res)
            gamma = math.sqrt((1.0 + sbar @ zbar) / 2.0)
            wbar = np.empty(d)
            wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gamma)
            wbar[1:] = (sbar[1:] - zbar[1:]) / (2.0 * gamma)
            eta = (s_res / z_res) ** 0.25
            self.soc.append((at, d, eta, wbar))

    def _soc_matrix(self, eta, wbar):
        d = wbar.size
        W = np.empty((d, d))
        W[0, 0] = wbar[0]
        W[0, 1:] = wbar[1:]
        W[1:, 0] = wbar[1:]
        W[1:, 1:] = np.eye(d - 1) + np.outer(wbar[1:], wbar[1:]) / (1.0 + wbar[0])
        return eta * W

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = np.empty(self.spec.total)
        o = self.spec.orthant
        out[:o] = self.w_orth * v[:o]
        for at, d, eta, wbar in self.soc:
            out[at : at + d] = self._soc_matrix(eta, wbar) @ v[at : at + d]
        return out

    def apply_inverse(self, v: np.ndarray) -> np.ndarray:
        out = np.empty(self.spec.total)
        o = self.spec.orthant
        out[:o] = v[:o] / self.w_orth
        for at, d, eta, wbar in self.soc:
            # W_bar^{-1} = J W_bar J with J = diag(1, -I)
            Wb = self._soc_matrix(1.0, wbar)
            block = v[at : at + d].copy()
            block[1:] *= -1.0
            block = Wb @ block
            block[1:] *= -1.0
            out[at : at + d] = block / eta
        return out

    def w_squared(self) -> sp.csc_matrix:
        o = self.spec.orthant
        rows = list(range(o))
        cols = list(range(o))
        data = list(self.w_orth**2)
        for at, d, eta, wbar in self.soc:
            # W^2 = eta^2 (2 wbar wbar' - J)
            J = np.diag(np.concatenate(([1.0], -np.ones(d - 1))))
            W2 = eta * eta * (2.0 * np.outer(wbar, wbar) - J)
            for i in range(d):
                for j in range(d):
                    rows.append(at + i)
                    cols.append(at + j)
                    data.append(W2[i, j])
        return sp.csc_matrix((data, (rows, cols)), shape=(self.spec.total, self.spec.total))

    def w_inv_matrix(self) -> sp.csc_matrix:
        """Sparse W^{-1}, used to fold the scaling into the KKT matrix.

        Factoring with W^{-1}G and an identity (3,3) block instead of G and
        W^2 halves the exponent range of the matrix, which is what keeps the
        factorization usable when the barrier parameter gets small.
        """
        o = self.spec.orthant
        rows = list(range(o))
        cols = list(range(o))
        data = list(1.0 / self.w_orth)
        for at, d, eta, wbar in self.soc:
            Wb = self._soc_matrix(1.0, wbar)
            sign = np.ones(d)
            sign[1:] = -1.0
            Winv = (sign[:, None] * Wb * sign[None, :]) / eta
            for i in range(d):
                for j in range(d):
                    rows.append(at + i)
                    cols.append(at + j)
                    data.append(Winv[i, j])
        return sp.csc_matrix((data, (rows, cols)), shape=(self.spec.total, self.spec.total))


def _ruiz_equilibrate(form: StandardConicForm, iters: int):
    """Row/column scaling of the stacked constraint matrix.

    Rows belonging to one second-order cone share a single scale so the
    scaled slack stays in the same cone.
    """
    A, G = form.A.tocsr(), form.G.tocsr()
    p, m, n = A.shape[0], G.shape[0], A.shape[1]
    d_col = np.ones(n)
    d_eq = np.ones(p)
    d_in = np.ones(m)
    spec = form.cones

    for _ in range(iters):
        Mabs = abs(sp.vstack([A, G], format="csc"))
        col_max = Mabs.max(axis=0).toarray().ravel()
        col_scale = 1.0 / np.sqrt(np.where(col_max > 0, col_max, 1.0))
        row_max = Mabs.tocsr().max(axis=1).toarray().ravel()
        eq_scale = 1.0 / np.sqrt(np.where(row_max[:p] > 0, row_max[:p], 1.0))
        in_scale = 1.0 / np.sqrt(np.where(row_max[p:] > 0, row_max[p:], 1.0))
        for at, d in spec.blocks():
            shared = np.max(row_max[p + at : p + at + d])
            in_scale[at : at + d] = 1.0 / math.sqrt(shared) if shared > 0 else 1.0
        A = sp.diags(eq_scale) @ A @ sp.diags(col_scale)
        G = sp.diags(in_scale) @ G @ sp.diags(col_scale)
        d_col *= col_scale
        d_eq *= eq_scale
        d_in *= in_scale
        if (
            np.all(np.abs(1.0 - col_scale) < 1e-4)
            and np.all(np.abs(1.0 - eq_scale) < 1e-4)
            and np.all(np.abs(1.0 - in_scale) < 1e-4)
        ):
            break
    return A.tocsr(), G.tocsr(), d_col, d_eq, d_in


def verify_kkt(form: StandardConicForm, x, y, z, s, tol: float = 1e-6) -> dict:
    """Recompute optimality residuals from scratch on the given data."""
    c, A, b, G, h = form.c, form.A, form.b, form.G, form.h
    pres_eq = float(np.linalg.norm(A @ x - b)) if A.shape[0] else 0.0
    pres_in = float(np.linalg.norm(G @ x + s - h)) if G.shape[0] else 0.0
    dres = float(np.linalg.norm(A.T @ y + G.T @ z + c))
    pcost = float(c @ x)
    dcost = float(-(b @ y) - (h @ z))
    gap = abs(pcost - dcost)
    return {
        "primal_eq": pres_eq / (1.0 + (float(np.linalg.norm(b)) if b.size else 0.0)),
        "primal_in": pres_in / (1.0 + (float(np.linalg.norm(h)) if h.size else 0.0)),
        "dual": dres / (1.0 + float(np.linalg.norm(c))),
        "gap": gap / max(1.0, abs(pcost)),
        "pcost": pcost,
        "dcost": dcost,
        "s_in_cone": cone_residual(form.cones, s) <= tol,
        "z_in_cone": cone_residual(form.cones, z) <= tol,
        "comp": float(s @ z),
    }


def _check_primal_infeasibility_certificate(form, y, z, tol) -> dict | None:
    pot = float(form.b @ y + form.h @ z)
    if pot >= 0.0:
        return None
    yc, zc = y / -pot, z / -pot
    res = float(np.linalg.norm(form.A.T @ yc + form.G.T @ zc, ord=np.inf))
    scale = max(1.0, float(abs(form.A).max() if form.A.nnz else 1.0), float(abs(form.G).max() if form.G.nnz else 1.0))
    cone_err = cone_residual(form.cones, zc)
    if res <= tol * scale and cone_err <= tol * scale:
        return {"kind": "primal", "y": yc, "z": zc, "residual": res, "cone_residual": cone_err}
    return None


def _check_dual_infeasibility_certificate(form, x, s, tol) -> dict | None:
    pot = float(form.c @ x)
    if pot >= 0.0:
        return None
    xc = x / -pot
    sc = s / -pot
    res_eq = float(np.linalg.norm(form.A @ xc, ord=np.inf)) if form.A.shape[0] else 0.0
    res_in = float(np.linalg.norm(form.G @ xc + sc, ord=np.inf)) if form.G.shape[0] else 0.0
    cone_err = cone_residual(form.cones, sc)
    scale = max(1.0, float(np.linalg.norm(form.c, ord=np.inf)))
    if max(res_eq, res_in) <= tol * scale and cone_err <= tol * scale:
        return {"kind": "dual", "x": xc, "s": sc, "residual": max(res_eq, res_in), "cone_residual": cone_err}
    return None


def solve(form: StandardConicForm, settings: SolverSettings = SolverSettings()) -> SolveReport:
    """Run the homogeneous self-dual predictor-corrector iteration."""
    t0 = time.perf_counter()
    n = form.c.size
    p = form.A.shape[0]
    m = form.G.shape[0]
    spec = form.cones
    if spec.total != m:
        raise ValueError("cone dimensions do not match G")

    if settings.equilibrate and (p + m) > 0:
        As, Gs, d_col, d_eq, d_in = _ruiz_equilibrate(form, settings.equilibrate_iters)
    else:
        As, Gs = form.A.tocsr(), form.G.tocsr()
        d_col, d_eq, d_in = np.ones(n), np.ones(p), np.ones(m)
    bs = d_eq * form.b
    hs = d_in * form.h
    # Scalar normalization of the right-hand sides and cost keeps the initial
    # homogeneous residuals O(1).  The divisor is clamped: every decade of
    # scaling spent here is a decade lost from the achievable unscaled duality
    # gap, so outlier data (say a 1e6 box limit on an O(1) problem) is tamed
    # only partially rather than at the expense of the 1e-8 gap target.
    rhs_norm = max(
        float(np.linalg.norm(bs, ord=np.inf)) if bs.size else 0.0,
        float(np.linalg.norm(hs, ord=np.inf)) if hs.size else 0.0,
    )
    rhs_scale = 1.0 / min(max(1.0, rhs_norm), 1e3)
    bs = rhs_scale * bs
    hs = rhs_scale * hs
    cost_norm = float(np.linalg.norm(d_col * form.c, ord=np.inf))
    cost_scale = 1.0 / min(max(1.0, cost_norm), 1e3)
    cs = cost_scale * d_col * form.c

    AsT = As.T.tocsr()
    GsT = Gs.T.tocsr()

    e = cone_identity(spec)
    x = np.zeros(n)
    y = np.zeros(p)
    z = e.copy()
    s = e.copy()
    tau, kappa = 1.0, 1.0
    nu = spec.degree + 1

    history: list[dict] = []
    stalls = 0
    status = MAX_ITERATIONS
    certificate = None
    last_residuals: dict = {}
    iteration = 0

    def unscaled_point():
        xs = d_col * x / rhs_scale
        ys = d_eq * y / cost_scale
        zs = d_in * z / cost_scale
        ss = s / d_in / rhs_scale
        return xs, ys, zs, ss

    def original_residuals():
        xs, ys, zs, ss = unscaled_point()
        xh, yh, zh, sh = xs / tau, ys / tau, zs / tau, ss / tau
        rep = verify_kkt(form, xh, yh, zh, sh)
        return rep, (xh, yh, zh, sh)

    I_n = sp.identity(n, format="csc") * settings.reg

    for iteration in range(1, settings.max_iter + 1):
        try:
            scal = Scaling(spec, s, z) if m else None
        except FloatingPointError:
            status = NUMERICAL_FAILURE
            break
        lam = scal.apply(z) if m else np.zeros(0)
        mu = (float(s @ z) + tau * kappa) / nu

        # The scaling is folded in as W^{-1}G with an identity third block
        # rather than G with a W^2 block: W^2 squares the boundary-induced
        # dynamic range and makes the factorization unusable at small mu.
        Winv = scal.w_inv_matrix() if m else sp.csc_matrix((0, 0))
        Gt = (Winv @ Gs).tocsr() if m else Gs
        GtT = Gt.T.tocsr()
        I_m = sp.identity(m, format="csc") * (1.0 + settings.reg)
        Mreg = sp.bmat(
            [
                [I_n, AsT, GtT],
                [As, -sp.identity(p, format="csc") * settings.reg, None],
                [Gt, None, -I_m],
            ],
            format="csc",
        )
        M0 = sp.bmat(
            [
                [sp.csc_matrix((n, n)), AsT, GtT],
                [As, sp.csc_matrix((p, p)), None],
                [Gt, None, -sp.identity(m, format="csc")],
            ],
            format="csc",
        )
        try:
            lu = splu(Mreg)
        except RuntimeError:
            status = NUMERICAL_FAILURE
            break
        M0_ld = M0.astype(np.longdouble)

        def solve3(vx, vy, vz):
            # Factor of the regularized matrix, refined against the exact one.
            # Near convergence mu falls toward the regularization level and the
            # raw solve is too inaccurate to step with.  Residuals are formed
            # in extended precision: the refinement plateau sits at the
            # residual roundoff times the KKT condition number, and the handful
            # of extra digits is what lets the gap reach tolerance on problems
            # whose cones are all active at the optimum.
            rhs = np.concatenate([vx, vy, vz])
            rhs_ld = rhs.astype(np.longdouble)
            sol = lu.solve(rhs).astype(np.longdouble)
            resid = rhs_ld - M0_ld @ sol
            best, best_res = sol, float(np.linalg.norm(resid.astype(np.float64)))
            floor = 1e-16 * (float(np.linalg.norm(rhs)) + 1.0)
            for _ in range(settings.refine_steps):
                if best_res <= floor:
                    break
                sol = sol + lu.solve(resid.astype(np.float64))
                resid = rhs_ld - M0_ld @ sol
                res = float(np.linalg.norm(resid.astype(np.float64)))
                if res < best_res:
                    best, best_res = sol, res
                else:
                    break
            out = best.astype(np.float64)
            return out[:n], out[n : n + p], out[n + p :]

        # residuals of the homogeneous model (scaled data)
        rx = AsT @ y + GsT @ z + cs * tau
        ry = As @ x - bs * tau
        rz = Gs @ x + s - hs * tau
        rtau = float(cs @ x + bs @ y + hs @ z) + kappa

        u1x, u1y, u1zt = solve3(-cs, bs, scal.apply_inverse(hs) if m else hs)
        u1z = scal.apply_inverse(u1zt) if m else u1zt
        denom_tau = float(cs @ u1x + bs @ u1y + hs @ u1z) - kappa / tau

        def direction(sigma, ds_extra, dkappa_extra):
            """Build (dx, dy, dz, ds, dtau, dkappa) for given centering."""
            d_s = sigma * mu * e - jordan_product(spec, lam, lam) + ds_extra if m else np.zeros(0)
            d_k = sigma * mu - tau * kappa + dkappa_extra
            fac = 1.0 - sigma
            # third row in scaled variables: W^{-1}G dx - (W dz) = W^{-1}vz
            rhs_zt = -fac * scal.apply_inverse(rz) - jordan_solve(spec, lam, d_s) if m else -fac * rz
            u2x, u2y, u2zt = solve3(-fac * rx, -fac * ry, rhs_zt)
            u2z = scal.apply_inverse(u2zt) if m else u2zt
            num = -fac * rtau - d_k / tau - float(cs @ u2x + bs @ u2y + hs @ u2z)
            dtau = num / denom_tau
            dx = u2x + dtau * u1x
            dy = u2y + dtau * u1y
            dz = u2z + dtau * u1z
            # ds via the slack feasibility row, not the complementarity row:
            # the latter multiplies dz's solve error by W^2, which is huge for
            # blocks pinched on the cone boundary
            ds = -fac * rz - Gs @ dx + hs * dtau if m else np.zeros(0)
            dkappa = (d_k - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa

        # predictor
        dxa, dya, dza, dsa, dtaua, dkappaa = direction(0.0, np.zeros(m), 0.0)
        alpha_a = min(1.0, max_step(spec, s, dsa) if m else np.inf, max_step(spec, z, dza) if m else np.inf)
        if dtaua < 0.0:
            alpha_a = min(alpha_a, -tau / dtaua)
        if dkappaa < 0.0:
            alpha_a = min(alpha_a, -kappa / dkappaa)
        mu_aff = (
            float((s + alpha_a * dsa) @ (z + alpha_a * dza)) + (tau + alpha_a * dtaua) * (kappa + alpha_a * dkappaa)
        ) / nu
        sigma = float(np.clip((mu_aff / mu) ** 3, 0.0, 1.0))

        # corrector
        if m:
            corr = -jordan_product(spec, scal.apply_inverse(dsa), scal.apply(dza))
        else:
            corr = np.zeros(0)
        dx, dy, dz, ds, dtau, dkappa = direction(sigma, corr, -dtaua * dkappaa)

        alpha = min(
            1.0,
            settings.step_fraction * max_step(spec, s, ds) if m else np.inf,
            settings.step_fraction * max_step(spec, z, dz) if m else np.inf,
        )
        if dtau < 0.0:
            alpha = min(alpha, settings.step_fraction * (-tau / dtau))
        if dkappa < 0.0:
            alpha = min(alpha, settings.step_fraction * (-kappa / dkappa))
        if not np.isfinite(alpha) or alpha <= 0.0:
            status = NUMERICAL_FAILURE
            break

        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau += alpha * dtau
        kappa += alpha * dkappa

        if not (np.all(np.isfinite(x)) and np.isfinite(tau) and tau > 0.0):
            status = NUMERICAL_FAILURE
            break

        rep, point = original_residuals()
        last_residuals = rep
        history.append(
            {
                "iteration": iteration,
                "mu": mu,
                "sigma": sigma,
                "alpha": float(alpha),
                "tau": tau,
                "kappa": kappa,
                "pcost": rep["pcost"],
                "dcost": rep["dcost"],
                "primal_eq": rep["primal_eq"],
                "primal_in": rep["primal_in"],
                "dual": rep["dual"],
                "gap": rep["gap"],
            }
        )
        if settings.verbose:
            print(
                f"it {iteration:3d}  mu {mu:9.2e}  pres {max(rep['primal_eq'], rep['primal_in']):9.2e}  "
                f"dres {rep['dual']:9.2e}  gap {rep['gap']:9.2e}  tau {tau:8.2e}  kappa {kappa:8.2e}"
            )

        if (
            max(rep["primal_eq"], rep["primal_in"]) <= settings.tol_feas
            and rep["dual"] <= settings.tol_feas
            and rep["gap"] <= settings.tol_gap
        ):
            status = OPTIMAL
            break

        # infeasibility: certificates are only accepted after an independent
        # check on the original data
        xs, ys, zs, ss = unscaled_point()
        if tau < settings.tau_kappa_guard * max(1.0, kappa):
            cert = _check_primal_infeasibility_certificate(form, ys, zs, settings.tol_infeas)
            if cert is not None:
                status = PRIMAL_INFEASIBLE
                certificate = cert
                break
            cert = _check_dual_infeasibility_certificate(form, xs, ss, settings.tol_infeas)
            if cert is not None:
                status = DUAL_INFEASIBLE
                certificate = cert
                break
            status = NUMERICAL_FAILURE
            break
        if mu < settings.tol_gap * 1e-2 and kappa > tau:
            cert = _check_primal_infeasibility_certificate(form, ys, zs, settings.tol_infeas)
            if cert is not None:
                status = PRIMAL_INFEASIBLE
                certificate = cert
                break
            cert = _check_dual_infeasibility_certificate(form, xs, ss, settings.tol_infeas)
            if cert is not None:
                status = DUAL_INFEASIBLE
                certificate = cert
                break

        stalls = stalls + 1 if alpha < settings.stall_alpha else 0
        if stalls >= settings.stall_limit:
            status = NUMERICAL_FAILURE
            break

    xs, ys, zs, ss = unscaled_point()
    if status in (OPTIMAL, MAX_ITERATIONS) and tau > 0.0:
        xh, yh, zh, sh = xs / tau, ys / tau, zs / tau, ss / tau
    else:
        xh, yh, zh, sh = xs, ys, zs, ss
    objective = float(form.c @ xh) if status in (OPTIMAL, MAX_ITERATIONS) else math.nan
    return SolveReport(
        status=status,
        x=xh,
        y=yh,
        z=zh,
        s=sh,
        tau=tau,
        kappa=kappa,
        objective=objective,
        iterations=iteration,
        residuals=last_residuals,
        history=history,
        wall_time=time.perf_counter() - t0,
        certificate=certificate,
    )


def solve_conic_program(program, settings: SolverSettings = SolverSettings()):
    """Canonicalize and solve a transcription-level program."""
    form = canonicalize(program)
    report = solve(form, settings)
    solution = program.extract(report.x) if report.status == OPTIMAL else None
    return report, solution
