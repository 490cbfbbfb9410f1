"""Pointwise predicate checks for gradient Kahler structures.

FieldContext packages, at one chart point of a catalog triple, the data the
checks consume: the metric 2-jet, the gradient field v and its rotation
u = Jv, the shape operator S = nabla v with its companion A = nabla u, the
squared length Q = g(v, v), the slope psi, and the g-orthogonal splitting
into Span(v, u) and its complement.  Both distinguished fields are linear
in the chart coordinates, so their coordinate Jacobians are exact and the
only numerics in S and A come from the Christoffel symbols.

check_kahler, check_holomorphic, check_killing and check_geodesic_gradient
grade the defining predicates sample by sample.  local_identity_suite
measures the pointwise identity system tying J, S, A, psi, Q and the
curvature together, plus transport laws along the flows of v and u, whose
time-h maps are plain matrix exponentials (linearity again).

eigen_structure diagonalizes S on the complement of Span(v, u), clusters
the spectrum, and labels each cluster by the constant c = tau - Q/(2 lam);
a cluster is "plus" or "minus" when it solves 2(tau - c)S = Q for c equal
to one of the two endpoint values of tau, "kernel" when lam = 0 (c
infinite), and "other" when the constant is a third value, as happens for
the horizontal directions of bundle models.  track_c_along_geodesic rides
a normal geodesic through both critical passages and confirms that the
constants do not drift and that the shape operator lands on its predicted
endpoint eigenvalue.
"""

import math

import numpy as np
from scipy.linalg import expm

from .charts import complex_structure_matrix
from .report import CheckReport
from .riemann import christoffel, christoffel_derivative, curvature, \
    hessian_endo, integrate_geodesic

EIGEN_GAP = 1e-7           # relative cluster merge threshold for spec(S)
KERNEL_TOL = 1e-7          # |lam| below this (times scale) counts as zero
LABEL_TOL = 1e-6           # kernel-membership residual for plus/minus labels
FLOW_STEP = 1e-4           # finite-difference step along field flows


def field_jacobians(diag):
    """Coordinate Jacobians (Dv, Du) of the linear fields v and u.

    diag holds one real coefficient per complex coordinate; v scales each
    pair by it and u additionally rotates the pair a quarter turn.
    """
    n = len(diag)
    Dv = np.zeros((2 * n, 2 * n))
    Du = np.zeros((2 * n, 2 * n))
    for a, c in enumerate(diag):
        Dv[2 * a, 2 * a] = Dv[2 * a + 1, 2 * a + 1] = c
        Du[2 * a, 2 * a + 1] = -c
        Du[2 * a + 1, 2 * a] = c
    return Dv, Du


def gram_schmidt_g(cols, g, tol=1e-10):
    """g-orthonormalize columns, dropping near-dependent ones."""
    out = []
    for c in np.asarray(cols, dtype=float).T:
        w = c.astype(float).copy()
        for b in out:
            w -= (b @ g @ w) * b
        # second pass for numerical orthogonality
        for b in out:
            w -= (b @ g @ w) * b
        nrm = float(w @ g @ w)
        if nrm > tol:
            out.append(w / math.sqrt(nrm))
    if not out:
        return np.zeros((g.shape[0], 0))
    return np.array(out).T


class FieldContext:
    """Field data for one sample point; heavier pieces computed on demand."""

    def __init__(self, triple, cid, x, order=4):
        self.triple = triple
        self.cid = int(cid)
        self.x = np.asarray(x, dtype=float)
        self.mj = triple.metric(self.cid, self.x, order=order)
        self.g = self.mj.g
        self.ginv = self.mj.ginv
        self.m = len(self.x) // 2
        self.J = complex_structure_matrix(self.m)
        self.Dv, self.Du = field_jacobians(triple.u_diag[self.cid])
        self.v = self.Dv @ self.x
        self.u = self.Du @ self.x
        self.Q = float(self.v @ self.g @ self.v)
        self.tau = float(triple.tau(self.cid, self.x))
        self.gamma = christoffel(self.mj)
        self.S = self.Dv + np.einsum("kij,i->kj", self.gamma, self.v)
        self.A = self.Du + np.einsum("kij,i->kj", self.gamma, self.u)
        self.psi = float((self.S @ self.v) @ self.g @ self.v) / self.Q
        self._lazy = {}

    def _get(self, key, build):
        if key not in self._lazy:
            self._lazy[key] = build()
        return self._lazy[key]

    def gnorm(self, w):
        return math.sqrt(max(float(w @ self.g @ w), 0.0))

    def curvature_tensor(self):
        return self._get("rt", lambda: curvature(self.mj))

    def dgamma(self):
        return self._get("dgamma",
                         lambda: christoffel_derivative(self.mj)[1])

    def _cov_field_derivative(self, w, Dw, W):
        # (nabla_c W)^k_j for the endomorphism field W = Dw + Gamma w
        dg = self.dgamma()
        dW = (np.einsum("ckij,i->ckj", dg, w)
              + np.einsum("kij,ic->ckj", self.gamma, Dw))
        dW += np.einsum("kci,ij->ckj", self.gamma, W)
        dW -= np.einsum("icj,ki->ckj", self.gamma, W)
        return dW

    def dS(self):
        """Covariant derivative of S, indexed [c, k, j]."""
        return self._get("dS", lambda: self._cov_field_derivative(
            self.v, self.Dv, self.S))

    def dA(self):
        """Covariant derivative of A, indexed [c, k, j]."""
        return self._get("dA", lambda: self._cov_field_derivative(
            self.u, self.Du, self.A))

    def dtau(self):
        return self.g @ self.v

    def dQ(self):
        def build():
            gv = self.g @ self.v
            return (np.einsum("cij,i,j->c", self.mj.dg, self.v, self.v)
                    + 2.0 * gv @ self.Dv)
        return self._get("dQ", build)

    def proj_v(self):
        """g-orthogonal projector onto Span(v, u)."""
        def build():
            gv = self.g @ self.v
            gu = self.g @ self.u
            return (np.outer(self.v, gv) + np.outer(self.u, gu)) / self.Q
        return self._get("PV", build)

    def proj_perp(self):
        return self._get("PP",
                         lambda: np.eye(len(self.x)) - self.proj_v())

    def dproj_v(self):
        """Partials of the projector onto Span(v, u), indexed [c, :, :]."""
        def build():
            g, dg = self.g, self.mj.dg
            gv, gu = g @ self.v, g @ self.u
            dgv = (np.einsum("cji,i->cj", dg, self.v)
                   + np.einsum("ji,ic->cj", g, self.Dv))
            dgu = (np.einsum("cji,i->cj", dg, self.u)
                   + np.einsum("ji,ic->cj", g, self.Du))
            dq = self.dQ()
            PV = self.proj_v()
            out = np.empty((len(self.x),) + PV.shape)
            for c in range(len(self.x)):
                out[c] = (np.outer(self.Dv[:, c], gv)
                          + np.outer(self.v, dgv[c])
                          + np.outer(self.Du[:, c], gu)
                          + np.outer(self.u, dgu[c])) / self.Q
                out[c] -= PV * (dq[c] / self.Q)
            return out
        return self._get("dPV", build)

    def perp_basis(self):
        """g-orthonormal basis of the complement of Span(v, u)."""
        def build():
            cand = self.proj_perp() @ np.eye(len(self.x))
            B = gram_schmidt_g(cand, self.g)
            return B[:, :len(self.x) - 2]
        return self._get("perpB", build)

    def validate(self):
        """Residuals of the defining relations of the context itself."""
        return {
            "equal-norms": abs(float(self.u @ self.g @ self.u) - self.Q)
            / self.Q,
            "orthogonal-pair": abs(float(self.v @ self.g @ self.u)) / self.Q,
            "u-is-jv": float(np.max(np.abs(self.u - self.J @ self.v))),
        }


def _points(triple, count, seed, points):
    if points is not None:
        return list(points)
    return triple.sample_points(count, seed=seed)


# ---------------------------------------------------------------------------
# predicate checks


def kahler_residuals(mj, J):
    """Residual family of the Kahler predicate at one point.

    Keys: symmetry, positivity (clipped eigenvalue deficit), compatibility
    of g with J, closedness of the fundamental two-form, and parallelism
    of J.  All are plain max-norms.
    """
    g, dg = mj.g, mj.dg
    out = {"symmetry": float(np.max(np.abs(g - g.T)))}
    lam = np.linalg.eigvalsh(0.5 * (g + g.T))
    out["positivity"] = float(max(0.0, -lam.min()))
    out["compatibility"] = float(np.max(np.abs(J.T @ g @ J - g)))
    dom = np.einsum("ij,cik->cjk", J, dg)
    dw = dom + dom.transpose(1, 2, 0) + dom.transpose(2, 0, 1)
    out["closed-form"] = float(np.max(np.abs(dw)))
    gamma = christoffel(mj)
    dj = (np.einsum("kci,ij->ckj", gamma, J)
          - np.einsum("icj,ki->ckj", gamma, J))
    out["parallel-j"] = float(np.max(np.abs(dj)))
    return out


def check_kahler(triple, count=40, seed=0, points=None, metric_fn=None,
                 tolerance=1e-8):
    """Grade symmetry, positivity, compatibility, dw = 0 and nabla J = 0.

    metric_fn overrides the triple's own metric jets, which is how
    deliberately broken metrics are fed through the same grader.
    """
    pts = _points(triple, count, seed, points)
    if metric_fn is None:
        metric_fn = lambda cid, x: triple.metric(cid, x, order=3)
    J = None
    res = []
    worst = {}
    for cid, x in pts:
        mj = metric_fn(cid, np.asarray(x, dtype=float))
        if J is None:
            J = complex_structure_matrix(len(x) // 2)
        fam = kahler_residuals(mj, J)
        res.append(max(fam.values()))
        for k, r in fam.items():
            worst[k] = max(worst.get(k, 0.0), r)
    return CheckReport.from_residuals(
        "kahler", triple.label, res, tolerance, seed=seed,
        details={"worst": worst})


def _resolve_field(triple, field, cid, x, fd_step):
    """(w, Dw) for a named catalog field or an arbitrary callable."""
    if field == "v":
        Dv, _ = field_jacobians(triple.u_diag[cid])
        return triple.v_field(cid, x), Dv
    if field == "u":
        _, Du = field_jacobians(triple.u_diag[cid])
        return triple.u_field(cid, x), Du
    if field == "zero":
        d = 2 * triple.meta["m"]
        return np.zeros(d), np.zeros((d, d))
    w = np.asarray(field(cid, x), dtype=float)
    Dw = np.empty((len(w), len(w)))
    for j in range(len(w)):
        e = np.zeros(len(w))
        e[j] = fd_step
        Dw[:, j] = (np.asarray(field(cid, x + e), dtype=float)
                    - np.asarray(field(cid, x - e), dtype=float)) \
            / (2.0 * fd_step)
    return w, Dw


def check_holomorphic(triple, field="v", count=40, seed=0, points=None,
                      tolerance=1e-8, fd_step=1e-6):
    """Grade the commutator of nabla w with J.

    field is "v", "u", "zero", or a callable (cid, x) -> vector whose
    Jacobian is taken by central differences.
    """
    pts = _points(triple, count, seed, points)
    res = []
    for cid, x in pts:
        mj = triple.metric(cid, np.asarray(x, dtype=float), order=3)
        gamma = christoffel(mj)
        J = complex_structure_matrix(len(x) // 2)
        w, Dw = _resolve_field(triple, field, cid, np.asarray(x, float),
                               fd_step)
        W = Dw + np.einsum("kij,i->kj", gamma, w)
        res.append(float(np.max(np.abs(W @ J - J @ W))))
    name = field if isinstance(field, str) else "custom"
    return CheckReport.from_residuals(
        "holomorphic", "%s:%s" % (triple.label, name), res, tolerance,
        seed=seed)


def check_killing(triple, field="u", count=40, seed=0, points=None,
                  tolerance=1e-8, fd_step=1e-6):
    """Grade the Killing criterion: the lowered nabla w has no symmetric part."""
    pts = _points(triple, count, seed, points)
    res = []
    for cid, x in pts:
        mj = triple.metric(cid, np.asarray(x, dtype=float), order=3)
        gamma = christoffel(mj)
        w, Dw = _resolve_field(triple, field, cid, np.asarray(x, float),
                               fd_step)
        W = Dw + np.einsum("kij,i->kj", gamma, w)
        K = mj.g @ W
        res.append(float(np.max(np.abs(K + K.T))))
    name = field if isinstance(field, str) else "custom"
    return CheckReport.from_residuals(
        "killing", "%s:%s" % (triple.label, name), res, tolerance, seed=seed)


def _rank_residual(dtau, dq):
    """Dimensionless defect of dQ being a multiple of dtau."""
    nt = float(np.linalg.norm(dtau))
    nq = float(np.linalg.norm(dq))
    if nq <= 1e-14 * max(1.0, nt) or nt <= 1e-14:
        return 0.0
    wedge = nt * nt * nq * nq - float(dtau @ dq) ** 2
    return math.sqrt(max(wedge, 0.0)) / (nt * nq)


def check_geodesic_gradient(triple, fn=None, count=40, seed=0, points=None,
                            tolerance=1e-7):
    """Grade whether the gradient lines of a scalar are unparametrized geodesics.

    With fn=None the triple's own tau and closed-form fields are used.
    Otherwise fn(cid, x) must return a 2-jet of a candidate scalar; its
    gradient and covariant Hessian then drive the same two residuals: the
    component of nabla_v v orthogonal to v (scaled by Q) and the rank
    defect of the pair (dtau, dQ).

    The report is flagged "noncompact profile" when the candidate passes
    but its gradient never comes close to vanishing, probed at the sample
    points and all chart origins: such a scalar generates no critical
    structure to speak of.
    """
    pts = _points(triple, count, seed, points)
    acc, rank, qvals = [], [], []
    for cid, x in pts:
        x = np.asarray(x, dtype=float)
        if fn is None:
            ctx = FieldContext(triple, cid, x, order=3)
            v, S, Q, psi = ctx.v, ctx.S, ctx.Q, ctx.psi
            g = ctx.g
            dtau, dq = ctx.dtau(), ctx.dQ()
        else:
            mj = triple.metric(cid, x, order=3)
            g, ginv = mj.g, mj.ginv
            fjet = fn(cid, x)
            df, hf = fjet.grad(), fjet.hess()
            v = ginv @ df
            S = hessian_endo(mj, (df, hf))
            Q = float(df @ ginv @ df)
            psi = float((S @ v) @ g @ v) / Q
            dginv = -np.einsum("ka,cab,bl->ckl", ginv, mj.dg, ginv)
            dtau = df
            dq = (2.0 * np.einsum("ci,ij,j->c", hf, ginv, df)
                  + np.einsum("i,cij,j->c", df, dginv, df))
        r = S @ v - psi * v
        acc.append(math.sqrt(max(float(r @ g @ r), 0.0)) / Q)
        rank.append(_rank_residual(dtau, dq))
        qvals.append(Q)
    # probe chart origins for critical points of the candidate
    for cid in range(triple.num_charts):
        x0 = np.zeros(triple.dim)
        mj = triple.metric(cid, x0, order=2)
        if fn is None:
            w = triple.v_field(cid, x0)
        else:
            w = mj.ginv @ fn(cid, x0).grad()
        qvals.append(float(w @ mj.g @ w))
    qvals = np.array(qvals)
    flags = []
    if qvals.min() > 1e-3 * max(qvals.max(), 1e-30):
        flags.append("noncompact profile")
    res = [max(a, b) for a, b in zip(acc, rank)]
    return CheckReport.from_residuals(
        "geodesic-gradient", triple.label, res, tolerance, seed=seed,
        details={"acceleration": max(acc), "level-rank": max(rank),
                 "min_q": float(qvals.min()), "flags": flags})


# ---------------------------------------------------------------------------
# the pointwise identity suite


def _perp_pairs(ctx, rng, pairs):
    """Unit-normalized seed pairs for sections of the complement.

    Empty when the complement itself is zero-dimensional (one complex
    dimension): every complement-valued check then degenerates to 0.
    """
    P = ctx.proj_perp()
    if float(np.trace(P)) < 0.5:
        return []
    out = []
    for _ in range(pairs):
        while True:
            c1 = P @ rng.standard_normal(len(ctx.x))
            c2 = P @ rng.standard_normal(len(ctx.x))
            n1, n2 = ctx.gnorm(c1), ctx.gnorm(c2)
            if n1 > 1e-8 and n2 > 1e-8:
                out.append((c1 / n1, c2 / n2))
                break
    return out


def _transport_residuals(ctx, pairs, h):
    """Finite-difference transport laws along the flows of v and u.

    The flows of the linear fields are matrix exponentials, so the flowed
    points and the pushed-forward section values are exact; only the chart
    jets at the flowed points are re-evaluated.
    """
    t, cid = ctx.triple, ctx.cid
    Ep, Em = expm(h * ctx.Dv), expm(-h * ctx.Dv)
    Fp, Fm = expm(h * ctx.Du), expm(-h * ctx.Du)
    xp, xm = Ep @ ctx.x, Em @ ctx.x
    yp, ym = Fp @ ctx.x, Fm @ ctx.x
    mjp = t.metric(cid, xp, order=3)
    mjm = t.metric(cid, xm, order=3)
    gp, gm = mjp.g, mjm.g
    gyp = t.atlas.metric_value(cid, yp)
    gym = t.atlas.metric_value(cid, ym)
    vp, vm = ctx.Dv @ xp, ctx.Dv @ xm
    Sp = ctx.Dv + np.einsum("kij,i->kj", christoffel(mjp), vp)
    Sm = ctx.Dv + np.einsum("kij,i->kj", christoffel(mjm), vm)
    Qp = float(vp @ gp @ vp)
    Qm = float(vm @ gm @ vm)
    r_metric, r_shape, r_ratio, r_iso = 0.0, 0.0, 0.0, 0.0
    for w, wp in pairs:
        a_p, a_m = Ep @ w, Em @ w
        b_p, b_m = Ep @ wp, Em @ wp
        fd1 = (float(a_p @ gp @ b_p) - float(a_m @ gm @ b_m)) / (2 * h)
        tgt1 = 2.0 * float((ctx.S @ w) @ ctx.g @ wp)
        r_metric = max(r_metric, abs(fd1 - tgt1))
        sp = float((Sp @ a_p) @ gp @ b_p)
        sm = float((Sm @ a_m) @ gm @ b_m)
        s0 = float((ctx.S @ w) @ ctx.g @ wp)
        r_shape = max(r_shape, abs((sp - sm) / (2 * h) - 2.0 * ctx.psi * s0))
        r_ratio = max(r_ratio, abs((sp / Qp - sm / Qm) / (2 * h)))
        c_p, c_m = Fp @ w, Fm @ w
        d_p, d_m = Fp @ wp, Fm @ wp
        fdu = (float(c_p @ gyp @ d_p) - float(c_m @ gym @ d_m)) / (2 * h)
        r_iso = max(r_iso, abs(fdu))
    r_iso = max(r_iso, abs(float(ctx.dQ() @ ctx.u)))
    return r_metric, r_shape, r_ratio, r_iso


def _perp_bracket_residual(ctx, pairs):
    """Defect of the bracket pairing g([w, w'], u) = -2 g(Aw, w').

    The sections are projector fields x -> P(x) c with constant seeds, so
    their Jacobians come from the analytic derivative of the projector.
    """
    dP = ctx.dproj_v()
    P = ctx.proj_perp()
    worst = 0.0
    for c1, c2 in pairs:
        w1, w2 = P @ c1, P @ c2
        Dw1 = -np.einsum("ckj,k->jc", dP.transpose(0, 2, 1), c1)
        Dw2 = -np.einsum("ckj,k->jc", dP.transpose(0, 2, 1), c2)
        br = Dw2 @ w1 - Dw1 @ w2
        lhs = float(br @ ctx.g @ ctx.u)
        rhs = -2.0 * float((ctx.A @ w1) @ ctx.g @ w2)
        worst = max(worst, abs(lhs - rhs))
    return worst


def _curvature_shape_residual(ctx):
    """Worst defect among the curvature expressions for (psi - S)S."""
    rt = ctx.curvature_tensor()
    P = ctx.proj_perp()
    T = (ctx.psi * np.eye(len(ctx.x)) - ctx.S) @ ctx.S
    M1 = np.einsum("ijkl,j,k->il", rt.rup, ctx.u, ctx.u).T
    M2 = np.einsum("ijkl,j,k->il", rt.rup, ctx.v, ctx.v).T
    M3 = 0.5 * rt.op(ctx.v, ctx.u) @ ctx.J
    return max(float(np.max(np.abs((M - T) @ P))) for M in (M1, M2, M3))


def _shape_bound_violation(ctx):
    """Violation of the two-sided eigenvalue bound on 2S over the complement."""
    B = ctx.perp_basis()
    if B.shape[1] == 0:
        return 0.0
    M = B.T @ ctx.g @ (ctx.S @ B)
    lam = np.linalg.eigvalsh(0.5 * (M + M.T))
    p = ctx.triple.profile
    lo = ctx.Q / (ctx.tau - p.tau_plus)
    hi = ctx.Q / (ctx.tau - p.tau_minus)
    return max(0.0, lo - 2.0 * lam.min(), 2.0 * lam.max() - hi)


def local_identity_suite(triple, count=100, seed=3, points=None,
                         bracket_pairs=2, flow_step=FLOW_STEP):
    """Measure the pointwise identity system of the triple.

    Returns one CheckReport per identity, each holding the per-sample
    residuals.  Curvature-level identities use the full metric 4-jet;
    transport laws difference chart data along the exact flows of v and u.
    """
    pts = _points(triple, count, seed, points)
    rng = np.random.default_rng(seed + 1)
    names = [
        ("gradient-holomorphic", 1e-7), ("rotation-holomorphic", 1e-7),
        ("equal-norms", 1e-7), ("orthogonal-pair", 1e-7),
        ("rotation-compose", 1e-9), ("rotation-killing", 1e-7),
        ("commuting-fields", 1e-8), ("self-adjoint-shape", 1e-7),
        ("skew-adjoint-j", 1e-7), ("derivative-of-rotation", 1e-7),
        ("derivative-of-shape", 1e-7), ("perp-bracket", 1e-7),
        ("radial-acceleration", 1e-7), ("speed-slope", 1e-7),
        ("invariant-splitting", 1e-7), ("shape-flow", 1e-7),
        ("curvature-from-shape", 1e-7), ("shape-bounds", 1e-8),
        ("transport-metric", 1e-4), ("transport-shape", 1e-4),
        ("transport-ratio", 1e-4), ("isometry-stationary", 1e-4),
    ]
    res = {n: [] for n, _ in names}
    for cid, x in pts:
        ctx = FieldContext(triple, cid, x, order=4)
        J, S, A, g = ctx.J, ctx.S, ctx.A, ctx.g
        val = ctx.validate()
        res["gradient-holomorphic"].append(np.max(np.abs(S @ J - J @ S)))
        res["rotation-holomorphic"].append(np.max(np.abs(A @ J - J @ A)))
        res["equal-norms"].append(val["equal-norms"])
        res["orthogonal-pair"].append(val["orthogonal-pair"])
        res["rotation-compose"].append(max(
            np.max(np.abs(A - J @ S)), np.max(np.abs(A - S @ J))))
        GA = g @ A
        res["rotation-killing"].append(np.max(np.abs(GA + GA.T)))
        res["commuting-fields"].append(np.max(np.abs(
            ctx.Dv @ ctx.u - ctx.Du @ ctx.v)))
        GS = g @ S
        res["self-adjoint-shape"].append(np.max(np.abs(GS - GS.T)))
        GJ = g @ J
        res["skew-adjoint-j"].append(np.max(np.abs(GJ + GJ.T)))
        rt = ctx.curvature_tensor()
        dA, dS = ctx.dA(), ctx.dS()
        r_a, r_s = 0.0, 0.0
        for c in range(len(ctx.x)):
            e = np.zeros(len(ctx.x))
            e[c] = 1.0
            Ruc = rt.op(ctx.u, e)
            r_a = max(r_a, float(np.max(np.abs(dA[c] - Ruc))))
            r_s = max(r_s, float(np.max(np.abs(dS[c] + J @ Ruc))))
        res["derivative-of-rotation"].append(r_a)
        res["derivative-of-shape"].append(r_s)
        pairs = _perp_pairs(ctx, rng, bracket_pairs)
        res["perp-bracket"].append(_perp_bracket_residual(ctx, pairs))
        res["radial-acceleration"].append(max(
            ctx.gnorm(S @ ctx.v - ctx.psi * ctx.v),
            ctx.gnorm(A @ ctx.u + ctx.psi * ctx.v),
            ctx.gnorm(S @ ctx.u - ctx.psi * ctx.u),
            ctx.gnorm(A @ ctx.v - ctx.psi * ctx.u)))
        res["speed-slope"].append(abs(
            2.0 * ctx.psi - float(ctx.dQ() @ ctx.v) / ctx.Q))
        PV, PP = ctx.proj_v(), ctx.proj_perp()
        res["invariant-splitting"].append(max(
            max(float(np.max(np.abs(PV @ M @ PP))),
                float(np.max(np.abs(PP @ M @ PV)))) for M in (S, A, J)))
        nvS = np.einsum("c,ckj->kj", ctx.v, dS)
        tgt = 2.0 * (ctx.psi * np.eye(len(ctx.x)) - S) @ S
        res["shape-flow"].append(np.max(np.abs((nvS - tgt) @ PP)))
        res["curvature-from-shape"].append(_curvature_shape_residual(ctx))
        res["shape-bounds"].append(_shape_bound_violation(ctx))
        t1, t2, t3, t4 = _transport_residuals(ctx, pairs, flow_step)
        res["transport-metric"].append(t1)
        res["transport-shape"].append(t2)
        res["transport-ratio"].append(t3)
        res["isometry-stationary"].append(t4)
    return [CheckReport.from_residuals("identity.%s" % n, triple.label,
                                       res[n], tol, seed=seed)
            for n, tol in names]


# ---------------------------------------------------------------------------
# eigenstructure of the shape operator


class EigenStructure:
    """Clustered spectrum of S on the complement of Span(v, u).

    values[i] is the cluster eigenvalue, spaces[i] a g-orthonormal real
    basis of the cluster eigenspace, c_values[i] the associated constant
    tau - Q/(2 lam) (infinite for the kernel), labels[i] one of "plus",
    "minus", "kernel", "other".
    """

    def __init__(self, values, spaces, c_values, labels, tau, q, psi, point):
        self.values = values
        self.spaces = spaces
        self.c_values = c_values
        self.labels = labels
        self.tau = tau
        self.q = q
        self.psi = psi
        self.point = point

    def __repr__(self):
        bits = ["%.4g:%s" % (v, l) for v, l in zip(self.values, self.labels)]
        return "EigenStructure(%s)" % ", ".join(bits)

    def dims(self):
        """Complex dimension per label."""
        out = {"plus": 0, "minus": 0, "kernel": 0, "other": 0}
        for lab, E in zip(self.labels, self.spaces):
            out[lab] += E.shape[1] // 2
        return out

    def total_dim(self):
        return sum(E.shape[1] for E in self.spaces) // 2


def _align_space(E, reference, g):
    """Re-express an eigenspace basis through a fixed reference frame.

    The reference columns are pushed through the g-orthogonal projector
    onto span(E) and orthonormalized in their given order, so the result
    depends on the subspace alone, never on the eigenvector branch; it
    varies continuously wherever the kept-column set is stable.
    """
    cand = (E @ E.T @ g) @ reference
    B = gram_schmidt_g(cand, g)
    if B.shape[1] >= E.shape[1]:
        return B[:, :E.shape[1]]
    return E


def eigen_structure(triple, cid, x, reference=None, order=4):
    """Cluster and label the spectrum of S on the complement of Span(v, u)."""
    ctx = FieldContext(triple, cid, x, order=order)
    return eigen_from_context(ctx, reference=reference)


def eigen_from_context(ctx, reference=None):
    B = ctx.perp_basis()
    point = (ctx.cid, ctx.x.copy())
    if B.shape[1] == 0:
        return EigenStructure([], [], [], [], ctx.tau, ctx.Q, ctx.psi, point)
    M = B.T @ ctx.g @ (ctx.S @ B)
    lam, W = np.linalg.eigh(0.5 * (M + M.T))
    scale = max(1.0, float(np.abs(lam).max()))
    splits = [0]
    for i in range(1, len(lam)):
        if lam[i] - lam[i - 1] > EIGEN_GAP * scale:
            splits.append(i)
    splits.append(len(lam))
    p = ctx.triple.profile
    a_scale = max(1.0, p.a)
    values, spaces, cs, labels = [], [], [], []
    for s, e in zip(splits[:-1], splits[1:]):
        val = float(lam[s:e].mean())
        E = B @ W[:, s:e]
        if reference is not None:
            E = _align_space(E, reference, ctx.g)
        if abs(val) <= KERNEL_TOL * a_scale:
            c, lab = math.inf, "kernel"
        else:
            c = ctx.tau - ctx.Q / (2.0 * val)
            ctol = LABEL_TOL * max(1.0, ctx.Q, 2.0 * abs(val) * p.span)
            if abs(2.0 * (ctx.tau - p.tau_minus) * val - ctx.Q) <= ctol:
                lab = "plus"
            elif abs(2.0 * (ctx.tau - p.tau_plus) * val - ctx.Q) <= ctol:
                lab = "minus"
            else:
                lab = "other"
        values.append(val)
        spaces.append(E)
        cs.append(c)
        labels.append(lab)
    return EigenStructure(values, spaces, cs, labels, ctx.tau, ctx.Q,
                          ctx.psi, point)


def eigen_matches_metadata(triple, es):
    """Whether the labeled dimensions equal the catalog bookkeeping."""
    d = es.dims()
    want = {"plus": triple.meta["k_plus"], "minus": triple.meta["k_minus"],
            "kernel": triple.meta["q"]}
    return all(d[k] == want[k] for k in want) and d["other"] == 0


# ---------------------------------------------------------------------------
# riding a normal geodesic


def normal_geodesic(triple, cid, x, sign, rtol=1e-10, atol=1e-12):
    """Unit-speed geodesic along the gradient line, stopped at the critical
    passage by the zero crossing of the rate of change of tau."""
    g = triple.atlas.metric_value(cid, x)
    v = triple.v_field(cid, x)
    qq = float(v @ g @ v)
    if qq < 1e-12:
        raise ValueError("start point is critical")
    v0 = sign * v / math.sqrt(qq)

    def stop_fn(c, xx, xdot, aux):
        gg = triple.atlas.metric_value(c, xx)
        return sign * float(triple.v_field(c, xx) @ gg @ xdot)

    t_max = triple.solution(sign).delta + 1.0
    return integrate_geodesic(triple.atlas, cid, x, v0, t_max,
                              stop=(stop_fn, -1), rtol=rtol, atol=atol)


def track_c_along_geodesic(triple, start=None, seed=0, samples=40,
                           q_floor=1e-6):
    """Ride the normal geodesic through a point both ways and watch c.

    Returns three reports: the drift of the finite constants c, the
    flatness of the kernel eigenvalue, and the endpoint eigenvalue of the
    shape operator at each critical passage reached.
    """
    if start is None:
        cid, x = triple.sample_points(1, seed=seed)[0]
    else:
        cid, x = start
        x = np.asarray(x, dtype=float)
    states, ends = [], []
    for sgn in (+1, -1):
        try:
            path = normal_geodesic(triple, cid, x, sgn)
        except RuntimeError:
            continue
        for tt in np.linspace(0.0, path.t1, samples // 2 + 1):
            c_t, x_t, _, _ = path.eval(tt)
            states.append((c_t, x_t))
        if path.stopped == "stop":
            c_e, x_e, _, _ = path.end_state()
            ends.append((sgn, c_e, x_e))
    finite_ref, drift, kernel_worst = None, 0.0, 0.0
    n_used = 0
    for c_t, x_t in states:
        if triple.q_value(c_t, x_t) < q_floor:
            continue
        es = eigen_structure(triple, c_t, x_t)
        finite = sorted(c for c, lab in zip(es.c_values, es.labels)
                        if lab != "kernel")
        for val, lab in zip(es.values, es.labels):
            if lab == "kernel":
                kernel_worst = max(kernel_worst, abs(val))
        if finite_ref is None:
            finite_ref = finite
        elif len(finite) == len(finite_ref):
            drift = max(drift, max(
                (abs(a - b) for a, b in zip(finite, finite_ref)),
                default=0.0))
        else:
            drift = math.inf
        n_used += 1
    end_res = []
    for sgn, c_e, x_e in ends:
        ctx = FieldContext(triple, c_e, x_e, order=3)
        lam = np.linalg.eigvals(ctx.S)
        a = triple.profile.a
        nz = [l for l in lam if abs(l) > 0.5 * a]
        end_res.append(max(abs(l - (-sgn * a)) for l in nz))
    checks = [
        CheckReport.from_residuals("track.c-drift", triple.label, [drift],
                                   1e-5, n_samples=n_used, seed=seed),
        CheckReport.from_residuals("track.kernel-flat", triple.label,
                                   [kernel_worst], 1e-6, n_samples=n_used,
                                   seed=seed),
        CheckReport.from_residuals("track.endpoint-eigen", triple.label,
                                   end_res, 1e-6, seed=seed,
                                   details={"sides": [s for s, _, _ in ends]}),
    ]
    return checks
