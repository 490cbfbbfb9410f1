"""Connection, curvature and geodesics from metric 2-jets.

Everything here consumes a ``MetricJet``: the metric together with its first
two derivative arrays at a point. The curvature sign convention is

    R(v, w) = nabla_w nabla_v - nabla_v nabla_w + nabla_{[v, w]},

so on the round two-sphere the lowered component R_{xyyx} at a point with
g = 2 I is negative while the sectional curvature, defined with a matching
minus sign, is positive. A unit test pins the convention by checking
nabla_v (nabla u) = R(u, v) on a Killing field u.

The geodesic integrator walks an atlas: charts are boxes, leaving a box
triggers a transition supplied by the atlas object, and the resulting path
is a chain of dense scipy solutions glued by recorded Jacobians.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

DEFAULT_ATOL = 1e-10
DEFAULT_RTOL = 1e-8


@dataclass
class MetricJet:
    """Metric with first and second derivatives at one point.

    dg[c, a, b] is the c-th partial of g_ab, ddg[c, d, a, b] the second
    partial. ddg may be None when only the connection is needed.
    """

    g: np.ndarray
    dg: np.ndarray
    ddg: np.ndarray = None
    point: np.ndarray = None
    chart: object = None

    def __post_init__(self):
        self._ginv = None

    @property
    def dim(self):
        return self.g.shape[0]

    @property
    def ginv(self):
        if self._ginv is None:
            self._ginv = np.linalg.inv(self.g)
        return self._ginv

    def inner(self, w, wp):
        return float(w @ self.g @ wp)

    def norm(self, w):
        return float(np.sqrt(max(w @ self.g @ w, 0.0)))


def christoffel(m):
    """Christoffel symbols Gamma[k, i, j] of the Levi-Civita connection."""
    T = m.dg + m.dg.transpose(1, 0, 2) - m.dg.transpose(1, 2, 0)
    return 0.5 * np.einsum("kl,ijl->kij", m.ginv, T)


def christoffel_derivative(m):
    """(Gamma, dGamma) with dGamma[c, k, i, j] the c-th partial of Gamma."""
    if m.ddg is None:
        raise ValueError("metric jet lacks second derivatives")
    T = m.dg + m.dg.transpose(1, 0, 2) - m.dg.transpose(1, 2, 0)
    dT = m.ddg + m.ddg.transpose(0, 2, 1, 3) - m.ddg.transpose(0, 2, 3, 1)
    dginv = -np.einsum("ka,cab,bl->ckl", m.ginv, m.dg, m.ginv)
    gamma = 0.5 * np.einsum("kl,ijl->kij", m.ginv, T)
    dgamma = 0.5 * (np.einsum("ckl,ijl->ckij", dginv, T)
                    + np.einsum("kl,cijl->ckij", m.ginv, dT))
    return gamma, dgamma


@dataclass
class CurvatureTensor:
    """Curvature at a point, both index positions.

    rup[i, j, k, l] is the coefficient of d_l in R(d_i, d_j) d_k and
    rlow[i, j, k, l] = g(R(d_i, d_j) d_k, d_l).
    """

    rup: np.ndarray
    rlow: np.ndarray
    g: np.ndarray

    def op(self, u, w):
        """Matrix of the endomorphism R(u, w)."""
        M = np.einsum("ijkl,i,j->kl", self.rup, u, w)
        return M.T

    def lowered(self, u, w, y, z):
        return float(np.einsum("ijkl,i,j,k,l->", self.rlow, u, w, y, z))

    def sectional(self, u, w):
        """Sectional curvature of span(u, w), positive on round spheres."""
        g = self.g
        gram = (u @ g @ u) * (w @ g @ w) - (u @ g @ w) ** 2
        return -self.lowered(u, w, w, u) / gram


def curvature(m):
    """Curvature tensor from a full metric 2-jet."""
    gamma, dgamma = christoffel_derivative(m)
    t1 = dgamma.transpose(2, 0, 3, 1)      # d_j Gamma^l_{ik}
    t2 = dgamma.transpose(0, 2, 3, 1)      # d_i Gamma^l_{jk}
    quad1 = np.einsum("mik,ljm->ijkl", gamma, gamma)
    quad2 = np.einsum("mjk,lim->ijkl", gamma, gamma)
    rup = t1 - t2 + quad1 - quad2
    rlow = np.einsum("ijkm,ml->ijkl", rup, m.g)
    return CurvatureTensor(rup=rup, rlow=rlow, g=m.g)


def gradient(m, df):
    """Gradient vector from the first partials of a function."""
    return m.ginv @ np.asarray(df, dtype=float)


def hessian_endo(m, fjet):
    """Covariant Hessian as an endomorphism, from a 2-jet of a function.

    Accepts a Jet or a (grad, hess) pair of arrays. The result is
    g-self-adjoint by construction.
    """
    if isinstance(fjet, tuple):
        df, hf = fjet
    else:
        df, hf = fjet.grad(), fjet.hess()
    gamma = christoffel(m)
    nabla_df = hf - np.einsum("dcb,d->cb", gamma, df)
    return m.ginv @ nabla_df


# ---------------------------------------------------------------------------
# atlas-walking geodesics


class FunctionAtlas:
    """Minimal atlas: one chart given by a metric-jet closure.

    metric_fn(point, order) must return a MetricJet. Leaving the box of
    radius ``radius`` ends the integration (there is nowhere to switch to).
    """

    def __init__(self, metric_fn, radius=np.inf):
        self.metric_fn = metric_fn
        self.radius = radius

    def metric(self, chart_id, x, order=3):
        return self.metric_fn(x, order)

    def escape(self, chart_id, x):
        if not np.isfinite(self.radius):
            return 1.0
        return self.radius - np.max(np.abs(x))

    def rehome(self, chart_id, x):
        return None


@dataclass
class Segment:
    chart_id: int
    t0: float
    t1: float
    sol: object


@dataclass
class Junction:
    t: float
    from_chart: int
    to_chart: int
    x_from: np.ndarray
    x_to: np.ndarray
    jac: np.ndarray


class GeodesicPath:
    """A geodesic as a chain of dense single-chart solutions."""

    def __init__(self, atlas, segments, junctions, aux_dim=0, stopped=None):
        self.atlas = atlas
        self.segments = segments
        self.junctions = junctions
        self.aux_dim = aux_dim
        self.stopped = stopped
        self.t0 = segments[0].t0
        self.t1 = segments[-1].t1

    def _segment_at(self, t):
        for seg in self.segments:
            if t <= seg.t1 or seg is self.segments[-1]:
                return seg
        return self.segments[-1]

    def eval(self, t):
        """(chart_id, x, xdot, aux) at time t."""
        seg = self._segment_at(t)
        s = seg.sol(np.clip(t, seg.t0, seg.t1))
        d = (len(s) - self.aux_dim) // 2
        return seg.chart_id, s[:d], s[d:2 * d], s[2 * d:]

    def end_state(self):
        return self.eval(self.t1)

    def start_state(self):
        return self.eval(self.t0)


def integrate_geodesic(atlas, chart_id, x0, v0, t_max,
                       aux0=None, aux_rhs=None, aux_transform=None,
                       stop=None, order=3, max_step=0.2,
                       atol=DEFAULT_ATOL, rtol=DEFAULT_RTOL,
                       max_segments=64):
    """Integrate the geodesic equation across charts.

    aux_rhs(chart_id, x, xdot, aux, metricjet) appends extra first-order
    state (carried metrics, transported frames, a potential value along the
    way); aux_transform(jac, aux) maps it through a chart switch.
    stop=(fn, direction) adds a terminal event on fn(chart_id, x, xdot, aux).
    """
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    d = len(x0)
    aux0 = np.zeros(0) if aux0 is None else np.asarray(aux0, dtype=float)
    na = len(aux0)

    segments = []
    junctions = []
    t = 0.0
    state = np.concatenate([x0, v0, aux0])
    cid = chart_id
    stopped = None

    for _ in range(max_segments):
        def rhs(tt, s, cid=cid):
            x, xd, aux = s[:d], s[d:2 * d], s[2 * d:]
            mj = atlas.metric(cid, x, order)
            gamma = christoffel(mj)
            acc = -np.einsum("kij,i,j->k", gamma, xd, xd)
            if na:
                daux = aux_rhs(cid, x, xd, aux, mj)
                return np.concatenate([xd, acc, daux])
            return np.concatenate([xd, acc])

        def escape_event(tt, s, cid=cid):
            return atlas.escape(cid, s[:d])
        escape_event.terminal = True
        escape_event.direction = -1

        events = [escape_event]
        if stop is not None:
            fn, direction = stop

            def stop_event(tt, s, cid=cid):
                return fn(cid, s[:d], s[d:2 * d], s[2 * d:])
            stop_event.terminal = True
            stop_event.direction = direction
            events.append(stop_event)

        sol = solve_ivp(rhs, (t, t_max), state, method="RK45",
                        dense_output=True, events=events,
                        atol=atol, rtol=rtol, max_step=max_step)
        if not sol.success:
            raise RuntimeError("geodesic integration failed: %s" % sol.message)
        t_end = sol.t[-1]
        segments.append(Segment(chart_id=cid, t0=t, t1=t_end, sol=sol.sol))
        state = sol.y[:, -1].copy()
        t = t_end

        if stop is not None and len(sol.t_events[1]):
            stopped = "stop"
            break
        if not len(sol.t_events[0]):
            stopped = "t_max"
            break

        # left the chart box: hand the state to a better chart
        x, xd, aux = state[:d], state[d:2 * d], state[2 * d:]
        moved = atlas.rehome(cid, x)
        if moved is None:
            stopped = "escaped"
            break
        new_cid, new_x, jac = moved
        new_xd = jac @ xd
        new_aux = aux_transform(jac, aux) if (na and aux_transform) else aux
        junctions.append(Junction(t=t, from_chart=cid, to_chart=new_cid,
                                  x_from=x.copy(), x_to=new_x.copy(), jac=jac))
        cid = new_cid
        state = np.concatenate([new_x, new_xd, new_aux])
    else:
        raise RuntimeError("too many chart switches in one geodesic")

    return GeodesicPath(atlas, segments, junctions, aux_dim=na, stopped=stopped)


def parallel_transport(path, w0, order=3,
                       atol=DEFAULT_ATOL, rtol=DEFAULT_RTOL):
    """Parallel transport a vector along a geodesic path.

    Returns a callable w(t); w0 lives in the starting chart at path.t0.
    """
    sols = _transport_chain(path, w0, order, atol, rtol, use_curvature=False)
    return _ChainEval(path, sols, split=None)


def jacobi(path, w0, z0, order=4, atol=DEFAULT_ATOL, rtol=DEFAULT_RTOL):
    """Solve the Jacobi equation along a path.

    The field satisfies nabla^2 w = R(w, xdot) xdot in the sign convention of
    this module, with initial value w0 and initial covariant derivative z0.
    Returns a callable giving (w, nabla w) at t.
    """
    y0 = np.concatenate([w0, z0])
    sols = _transport_chain(path, y0, order, atol, rtol, use_curvature=True)
    return _ChainEval(path, sols, split=len(w0))


class _ChainEval:
    def __init__(self, path, sols, split):
        self.path = path
        self.sols = sols
        self.split = split

    def __call__(self, t):
        for (t0, t1, sol) in self.sols:
            if t <= t1 or (t0, t1, sol) == self.sols[-1]:
                y = sol(np.clip(t, t0, t1))
                if self.split is None:
                    return y
                return y[:self.split], y[self.split:]
        raise ValueError("time outside path range")


def _transport_chain(path, y0, order, atol, rtol, use_curvature):
    d = len(path.segments[0].sol(path.t0)) - path.aux_dim
    d //= 2
    sols = []
    y = np.asarray(y0, dtype=float)
    junction_iter = iter(path.junctions)
    next_j = next(junction_iter, None)
    for seg in path.segments:
        def rhs(t, yy, seg=seg):
            s = seg.sol(np.clip(t, seg.t0, seg.t1))
            x, xd = s[:d], s[d:2 * d]
            mj = path.atlas.metric(seg.chart_id, x, order)
            gamma = christoffel(mj)
            if not use_curvature:
                return -np.einsum("kij,i,j->k", gamma, xd, yy)
            w, z = yy[:d], yy[d:]
            rt = curvature(mj)
            dw = z - np.einsum("kij,i,j->k", gamma, xd, w)
            dz = rt.op(w, xd) @ xd - np.einsum("kij,i,j->k", gamma, xd, z)
            return np.concatenate([dw, dz])

        sol = solve_ivp(rhs, (seg.t0, seg.t1), y, method="RK45",
                        dense_output=True, atol=atol, rtol=rtol,
                        max_step=max((seg.t1 - seg.t0) / 4.0, 1e-3))
        if not sol.success:
            raise RuntimeError("transport along path failed: %s" % sol.message)
        sols.append((seg.t0, seg.t1, sol.sol))
        y = sol.y[:, -1].copy()
        if next_j is not None and abs(next_j.t - seg.t1) < 1e-12:
            if use_curvature:
                y = np.concatenate([next_j.jac @ y[:d], next_j.jac @ y[d:]])
            else:
                y = next_j.jac @ y
            next_j = next(junction_iter, None)
    return sols


def exp_normal(atlas, chart_id, y, xi, order=3, **kw):
    """Exponential map: follow the geodesic with initial velocity xi for unit time."""
    path = integrate_geodesic(atlas, chart_id, y, xi, 1.0, order=order, **kw)
    cid, x, xd, _ = path.end_state()
    return path, cid, x, xd


def d_exp_normal(atlas, chart_id, y, xi, w, eta, order=4, **kw):
    """Differential of the exponential map via a Jacobi field.

    w is the initial value, eta the initial covariant derivative; the result
    is the Jacobi field at unit time together with the path used.
    """
    path = integrate_geodesic(atlas, chart_id, y, xi, 1.0, order=order, **kw)
    jf = jacobi(path, w, eta, order=order)
    wt, zt = jf(path.t1)
    return path, wt, zt
