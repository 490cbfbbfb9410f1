"""Profile functions and the one-variable ODE side of the geometry.

A profile is a smooth function Q > 0 on an open interval (tau_minus, tau_plus)
vanishing at both ends with slopes +2a and -2a. Everything that the radial
behavior of the metric determines is computed here:

* rho(tau): the exponentiated flow integral, vanishing at one chosen end
* sigma, delta: arc length to that end and the total diameter integral
* f(t): the fiber potential with t = rho^2, including its jets at t = 0
* matching maps between two profiles (the flow conjugacy fixing the ends)
* the modification potential phi produced by a matching map

Endpoint singularities are handled by splitting integrands into an exact
logarithmic part plus a regular remainder, and by power series in tau - tau_end
(or in t) within a small margin of each end. Interior integrations use scipy
with tight tolerances and dense output.
"""

import json
import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import make_interp_spline
from scipy.optimize import brentq

from .report import CheckReport

SERIES_ORDER = 6           # endpoint power series go through Delta^6
MARGIN_FRAC = 1e-3         # switch to series within this fraction of the span
_IVP_OPTS = dict(method="DOP853", rtol=1e-12, atol=1e-13, dense_output=True)


# ---------------------------------------------------------------------------
# univariate truncated series helpers (plain coefficient arrays)


def _ser_mul(a, b, order):
    return np.convolve(a, b)[:order + 1]


def _ser_div(a, b, order):
    if b[0] == 0:
        raise ZeroDivisionError("series division by a series without constant term")
    out = np.zeros(order + 1)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    for k in range(order + 1):
        acc = a[k] if k < len(a) else 0.0
        for j in range(1, k + 1):
            if j < len(b):
                acc -= b[j] * out[k - j]
        out[k] = acc / b[0]
    return out


def _ser_compose(outer, inner, order):
    """outer(inner(x)) for series; inner must have zero constant term."""
    if abs(inner[0]) > 0:
        raise ValueError("inner series must vanish at 0")
    out = np.zeros(order + 1)
    # Horner from the top coefficient down
    for c in reversed(outer[:order + 1]):
        out = _ser_mul(out, inner, order)
        out[0] += c
    return out


def _ser_revert(c, order):
    """Compositional inverse of a series with c[0] = 0, c[1] != 0."""
    if c[0] != 0.0 or c[1] == 0.0:
        raise ValueError("series reversion needs c[0] = 0 and c[1] != 0")
    y = np.zeros(order + 1)
    y[1] = 1.0
    x = y / c[1]
    tail = np.array(c[:order + 1], dtype=float)
    tail[:2] = 0.0
    for _ in range(order):
        x = (y - _ser_compose(tail, x, order)) / c[1]
        x[0] = 0.0
    return x


def _poly_eval_derivs(coeffs, x, order):
    """Raw derivatives 0..order of a polynomial sum c_k x^k at x."""
    c = np.asarray(coeffs, dtype=float)
    out = []
    for r in range(order + 1):
        acc = 0.0
        for k in range(r, len(c)):
            acc += c[k] * math.perm(k, r) * x ** (k - r)
        out.append(acc)
    return np.array(out)


# ---------------------------------------------------------------------------
# profiles


class Profile:
    """Q on [tau_minus, tau_plus] with boundary slopes +-2a.

    Kinds: "fubini-study" (the parabola), "expr" (a sympy formula in tau),
    "table" (quintic spline through samples with clamped end slopes), and
    "derived" (wrapped callables produced by a modification).
    """

    def __init__(self, kind, tau_minus, tau_plus, a, q_derivs_fn, label=None,
                 max_order=6):
        if not tau_minus < tau_plus:
            raise ValueError("need tau_minus < tau_plus")
        if not a > 0:
            raise ValueError("boundary slope a must be positive")
        self.kind = kind
        self.tau_minus = float(tau_minus)
        self.tau_plus = float(tau_plus)
        self.a = float(a)
        self._q_derivs = q_derivs_fn
        self.label = label or kind
        self.max_order = max_order
        self._solutions = {}
        self._mach = None

    # -- construction ------------------------------------------------------

    @staticmethod
    def fubini_study(tau_minus=0.0, tau_plus=1.0, a=1.0):
        span = tau_plus - tau_minus
        c = 2.0 * a / span

        def q_derivs(tau, order):
            out = np.zeros(order + 1)
            out[0] = c * (tau - tau_minus) * (tau_plus - tau)
            if order >= 1:
                out[1] = c * (tau_plus + tau_minus - 2.0 * tau)
            if order >= 2:
                out[2] = -2.0 * c
            return out

        return Profile("fubini-study", tau_minus, tau_plus, a, q_derivs,
                       label="fubini-study[%g,%g]a=%g" % (tau_minus, tau_plus, a))

    @staticmethod
    def from_expr(formula, tau_minus, tau_plus, params=None, label=None):
        import sympy as sp
        tau = sp.Symbol("tau")
        expr = sp.sympify(formula)
        if params:
            expr = expr.subs({sp.Symbol(k): v for k, v in params.items()})
        free = expr.free_symbols - {tau}
        if free:
            raise ValueError("formula has unbound symbols: %s" % sorted(map(str, free)))
        fns = []
        d = expr
        for _ in range(7):
            fns.append(sp.lambdify(tau, d, "math"))
            d = sp.diff(d, tau)
        a = -float(fns[1](tau_plus)) / 2.0

        def q_derivs(t, order):
            return np.array([fns[k](t) for k in range(order + 1)], dtype=float)

        return Profile("expr", tau_minus, tau_plus, a, q_derivs,
                       label=label or ("expr:" + formula))

    @staticmethod
    def from_table(taus, qs, a, d2_minus=None, d2_plus=None, label=None):
        taus = np.asarray(taus, dtype=float)
        qs = np.asarray(qs, dtype=float)
        if len(taus) < 8:
            raise ValueError("need at least 8 table points")
        if d2_minus is None:
            d2_minus = 2.0 * np.polyfit(taus[:5] - taus[0], qs[:5], 2)[0]
        if d2_plus is None:
            d2_plus = 2.0 * np.polyfit(taus[-5:] - taus[-1], qs[-5:], 2)[0]
        spl = make_interp_spline(
            taus, qs, k=5,
            bc_type=([(1, 2.0 * a), (2, float(d2_minus))],
                     [(1, -2.0 * a), (2, float(d2_plus))]))

        def q_derivs(t, order):
            return np.array([float(spl(t, nu=k)) if k <= 5 else 0.0
                             for k in range(order + 1)])

        return Profile("table", taus[0], taus[-1], a, q_derivs,
                       label=label or "table[%d pts]" % len(taus), max_order=5)

    @staticmethod
    def from_config(cfg):
        kind = cfg.get("kind", "fubini-study")
        if kind == "fubini-study":
            return Profile.fubini_study(cfg.get("tau_minus", 0.0),
                                        cfg.get("tau_plus", 1.0),
                                        cfg.get("a", 1.0))
        if kind == "expr":
            return Profile.from_expr(cfg["formula"], cfg["tau_minus"],
                                     cfg["tau_plus"], cfg.get("params"),
                                     label=cfg.get("label"))
        if kind == "table":
            return Profile.from_table(cfg["taus"], cfg["qs"], cfg["a"],
                                      cfg.get("d2_minus"), cfg.get("d2_plus"),
                                      label=cfg.get("label"))
        raise ValueError("unknown profile kind %r" % (kind,))

    # -- basic queries -----------------------------------------------------

    @property
    def span(self):
        return self.tau_plus - self.tau_minus

    @property
    def midpoint(self):
        return 0.5 * (self.tau_minus + self.tau_plus)

    def q(self, tau):
        if np.ndim(tau):
            return np.array([self._q_derivs(t, 0)[0] for t in np.ravel(tau)]).reshape(np.shape(tau))
        return float(self._q_derivs(float(tau), 0)[0])

    def q_derivs(self, tau, order):
        if order > self.max_order:
            raise ValueError("profile kind %r supports derivatives up to %d"
                             % (self.kind, self.max_order))
        return np.asarray(self._q_derivs(float(tau), order), dtype=float)

    def q_taylor(self, tau, order):
        d = self.q_derivs(tau, order)
        return d / np.array([math.factorial(k) for k in range(order + 1)])

    def end_taylor(self, end, order=SERIES_ORDER):
        """Taylor coefficients of Q at an endpoint, end in {-1, +1}."""
        tau_e = self.tau_plus if end > 0 else self.tau_minus
        order = min(order, self.max_order)
        return tau_e, self.q_taylor(tau_e, order)

    def validate(self, n_grid=257, tol=1e-8):
        """Endpoint and positivity conditions, as a report."""
        scale = max(abs(self.q(self.midpoint)), 2.0 * self.a * self.span)
        res = []
        details = {}
        qm = self.q_derivs(self.tau_minus, 1)
        qp = self.q_derivs(self.tau_plus, 1)
        res.append(abs(qm[0]) / scale)
        res.append(abs(qp[0]) / scale)
        res.append(abs(qm[1] - 2.0 * self.a) / (2.0 * self.a))
        res.append(abs(qp[1] + 2.0 * self.a) / (2.0 * self.a))
        taus = self.tau_minus + self.span * (np.arange(1, n_grid + 1) / (n_grid + 1))
        qvals = np.array([self.q(t) for t in taus])
        worst = float(np.min(qvals / (2.0 * self.a * self.span)))
        res.append(max(0.0, -worst))
        details["min_interior_q"] = float(np.min(qvals))
        details["boundary"] = {"q_minus": float(qm[0]), "q_plus": float(qp[0]),
                               "slope_minus": float(qm[1]), "slope_plus": float(qp[1])}
        return CheckReport.from_residuals("profile-valid", self.label, res, tol,
                                          n_samples=n_grid, details=details)

    def require_valid(self, tol=1e-6):
        rep = self.validate(tol=tol)
        if not rep.passed:
            raise ValueError("profile %s fails validity checks: max residual %.3e "
                             "(half profiles and mismatched slopes are rejected)"
                             % (self.label, rep.max_residual))
        return rep

    # -- solutions ---------------------------------------------------------

    def machinery(self):
        if self._mach is None:
            self._mach = _FlowMachinery(self)
        return self._mach

    def solve(self, sign=+1, anchor=None):
        key = (int(sign), None if anchor is None else (float(anchor[0]), float(anchor[1])))
        if key not in self._solutions:
            self._solutions[key] = ProfileSolution(self, sign, anchor)
        return self._solutions[key]


def validate_profile(profile, n_grid=257, tol=1e-8):
    return profile.validate(n_grid=n_grid, tol=tol)


def solve_rho(profile, sign=+1, anchor=None):
    """The radius function rho(tau) for the chosen vanishing end."""
    return profile.solve(sign, anchor).rho


def solve_sigma_delta(profile, sign=+1):
    sol = profile.solve(sign)
    return sol.sigma_of_tau, sol.delta


def solve_f(profile, sign=+1, anchor=None):
    """The fiber potential f as a function of t = rho^2."""
    sol = profile.solve(sign, anchor)
    return sol.f_of_t


# ---------------------------------------------------------------------------
# shared flow machinery per profile


class _FlowMachinery:
    """Endpoint-regularized integrals shared by solutions and matching."""

    def __init__(self, p):
        p.require_valid()
        self.p = p
        self.span = p.span
        self.mid = p.midpoint
        self.margin = MARGIN_FRAC * p.span
        self.ends = {}
        for end in (-1, +1):
            tau_e, qt = p.end_taylor(end)
            if abs(qt[1] - (2.0 * p.a if end < 0 else -2.0 * p.a)) > 1e-6 * p.a:
                raise ValueError("endpoint slope does not match the stated a")
            # regular part of 1/Q - 1/(q1 Delta): series and its integral
            order = len(qt) - 2
            num = -qt[2:]
            den = qt[1] * qt[1] * np.concatenate([[1.0], qt[2:] / qt[1]])
            rser = _ser_div(num, den[:order + 1], order)
            self.ends[end] = {"tau": tau_e, "q": qt, "r_series": rser}
        self._build_reg_integrals()
        self._build_arcs()
        self._delta()

    # 1/Q - 1/(q1 (tau - tau_e)), regular through the endpoint
    def reg_inv_q(self, end, tau):
        e = self.ends[end]
        d = tau - e["tau"]
        if abs(d) < 1e-5 * self.span:
            r = e["r_series"]
            return float(np.polyval(r[::-1], d))
        q = self.p.q(tau)
        q1 = e["q"][1]
        return (q1 * d - q) / (q1 * d * q)

    def _build_reg_integrals(self):
        p = self.p

        def make(end):
            e = self.ends[end]

            def rhs(t, y):
                return [self.reg_inv_q(end, t)]

            sol = solve_ivp(rhs, (self.mid, e["tau"]), [0.0], **_IVP_OPTS)
            if not sol.success:
                raise RuntimeError("regular flow integral failed")
            return sol.sol
        self._reg = {-1: make(-1), +1: make(+1)}

    def reg_integral(self, end, tau):
        """Integral of the regular part from the midpoint to tau."""
        e = self.ends[end]
        lo, hi = sorted((self.mid, e["tau"]))
        return float(self._reg[end](np.clip(tau, lo, hi))[0])

    def s(self, tau):
        """The flow time integral of 1/Q, anchored at the midpoint."""
        tau = float(tau)
        if tau <= self.mid:
            e = self.ends[-1]
            if tau <= e["tau"]:
                return -np.inf
            d0 = self.mid - e["tau"]
            return math.log((tau - e["tau"]) / d0) / e["q"][1] + self.reg_integral(-1, tau)
        e = self.ends[+1]
        if tau >= e["tau"]:
            return np.inf
        d0 = self.mid - e["tau"]
        return math.log((tau - e["tau"]) / d0) / e["q"][1] + self.reg_integral(+1, tau)

    def tau_from_s(self, starget):
        """Invert the monotone flow time s."""
        h = 1e-9 * self.span
        lo = self.ends[-1]["tau"] + h
        hi = self.ends[+1]["tau"] - h
        slo, shi = self.s(lo), self.s(hi)
        if starget <= slo:
            e = self.ends[-1]
            d = math.exp(e["q"][1] * (starget - self.reg_integral(-1, e["tau"])))
            d *= (self.mid - e["tau"])
            return e["tau"] + d
        if starget >= shi:
            e = self.ends[+1]
            d = -(e["tau"] - self.mid) * math.exp(
                e["q"][1] * (starget - self.reg_integral(+1, e["tau"])))
            return e["tau"] + d
        return brentq(lambda t: self.s(t) - starget, lo, hi,
                      xtol=1e-15 * self.span, rtol=8.9e-16)

    # arc length from each end, via the square root substitution
    def _build_arcs(self):
        p = self.p

        def make(end):
            e = self.ends[end]
            wmax = math.sqrt(0.6 * self.span)
            wswitch = 1e-4 * math.sqrt(self.span)

            def rhs(w, y):
                if w < wswitch:
                    # series in Delta = -end w^2 dodges the cancellation
                    # of tau_e - w^2 against tau_e for tiny w
                    d = -end * w * w
                    qq = d * float(np.polyval(e["q"][:0:-1], d))
                    if w == 0.0:
                        return [2.0 / math.sqrt(abs(e["q"][1]))]
                    return [2.0 * w / math.sqrt(qq)]
                tau = e["tau"] - end * w * w
                return [2.0 * w / math.sqrt(max(p.q(tau), 1e-300))]

            sol = solve_ivp(rhs, (0.0, wmax), [0.0], **_IVP_OPTS)
            if not sol.success:
                raise RuntimeError("arc length integral failed")
            return sol.sol
        self._arc = {-1: make(-1), +1: make(+1)}

    def arc_from_end(self, end, tau):
        """Arc length (integral of 1/sqrt(Q)) between tau and the endpoint."""
        e = self.ends[end]
        w = math.sqrt(max(end * (e["tau"] - tau), 0.0))
        return float(self._arc[end](min(w, math.sqrt(0.6 * self.span)))[0])

    def _delta(self):
        p = self.p
        N = 96
        i = np.arange(1, N + 1)
        x = np.cos((2 * i - 1) * np.pi / (2 * N))
        half = 0.5 * self.span
        taus = self.mid + half * x
        vals = np.array([half * math.sqrt((1.0 - xi * xi) / p.q(t))
                         for xi, t in zip(x, taus)])
        self.delta = float(np.pi / N * np.sum(vals))
        stitched = self.arc_from_end(-1, self.mid) + self.arc_from_end(+1, self.mid)
        self.delta_residual = abs(self.delta - stitched) / self.delta


# ---------------------------------------------------------------------------
# a solution anchored at one end


class ProfileSolution:
    """rho, sigma, f and their endpoint series for one choice of sign.

    sign +1 means rho vanishes at tau_plus, sign -1 at tau_minus.
    The anchor fixes the scale of rho: rho(anchor_tau) = anchor_rho,
    defaulting to rho = 1 at the interval midpoint.
    """

    def __init__(self, profile, sign=+1, anchor=None):
        if sign not in (-1, +1):
            raise ValueError("sign must be -1 or +1")
        self.profile = profile
        self.sign = int(sign)
        self.mach = profile.machinery()
        self.tau_end = profile.tau_plus if sign > 0 else profile.tau_minus
        self.tau_far = profile.tau_minus if sign > 0 else profile.tau_plus
        if anchor is None:
            anchor = (profile.midpoint, 1.0)
        self.anchor = (float(anchor[0]), float(anchor[1]))
        if not profile.tau_minus < self.anchor[0] < profile.tau_plus:
            raise ValueError("anchor tau must be interior")
        if not self.anchor[1] > 0:
            raise ValueError("anchor rho must be positive")
        self._s0 = self.mach.s(self.anchor[0])
        self._log_rho0 = math.log(self.anchor[1])
        self._t_series = None
        self._f_dense = None

    @property
    def delta(self):
        return self.mach.delta

    # -- rho ---------------------------------------------------------------

    def log_rho(self, tau):
        s = self.mach.s(tau)
        return self._log_rho0 - self.sign * self.profile.a * (s - self._s0)

    def rho(self, tau):
        if np.ndim(tau):
            return np.array([self.rho(t) for t in np.ravel(tau)]).reshape(np.shape(tau))
        tau = float(tau)
        if tau == self.tau_end:
            return 0.0
        return math.exp(self.log_rho(tau))

    def drho_dtau(self, tau):
        return -self.sign * self.profile.a * self.rho(tau) / self.profile.q(tau)

    def tau_of_rho(self, rho):
        if np.ndim(rho):
            return np.array([self.tau_of_rho(r) for r in np.ravel(rho)]).reshape(np.shape(rho))
        rho = float(rho)
        if rho == 0.0:
            return self.tau_end
        if rho < 0:
            raise ValueError("rho must be nonnegative")
        starget = self._s0 - self.sign * (math.log(rho) - self._log_rho0) / self.profile.a
        return self.mach.tau_from_s(starget)

    def tau_of_t(self, t):
        return self.tau_of_rho(math.sqrt(t))

    # -- the squared radius series at the vanishing end --------------------

    def t_series(self):
        """Taylor coefficients of t = rho^2 in Delta = tau - tau_end."""
        if self._t_series is not None:
            return self._t_series
        p = self.profile
        tau_e, q = p.end_taylor(self.sign)
        ns = len(q) - 1
        c = np.zeros(ns + 1)
        c[1] = 1.0
        for el in range(2, ns + 1):
            acc = 0.0
            for k in range(1, el):
                j = el + 1 - k
                if j <= ns:
                    acc += k * c[k] * q[j]
            c[el] = acc / (2.0 * p.a * self.sign * (el - 1))
        # scale from the anchored rho at the margin point
        d_m = -self.sign * self.mach.margin
        t_m = self.rho(tau_e + d_m) ** 2
        t1 = t_m / float(np.polyval(c[::-1], d_m))
        self._t_series = t1 * c
        self._t_series[0] = 0.0
        return self._t_series

    def T_series(self):
        """Inverse series: Delta = tau - tau_end as a series in t."""
        ts = self.t_series()
        return _ser_revert(ts, len(ts) - 1)

    # -- f and its jets ----------------------------------------------------

    def _ensure_f(self):
        if self._f_dense is not None:
            return
        p, mach = self.profile, self.mach
        e = mach.ends[self.sign]
        qt = e["q"]
        ser = _ser_div(np.array([2.0, 0.0, 0.0, 0.0]), qt[1:5], 3)

        def rhs(tau, y):
            d = tau - self.tau_end
            if abs(d) < 1e-5 * mach.span:
                return [float(np.polyval(ser[::-1], d))]
            return [2.0 * d / p.q(tau)]

        stop = self.tau_far + self.sign * 0.5 * mach.margin
        sol = solve_ivp(rhs, (self.tau_end, stop), [0.0], **_IVP_OPTS)
        if not sol.success:
            raise RuntimeError("fiber potential integral failed")
        self._f_dense = sol.sol
        # f Taylor coefficients in t at 0, from the inverse series
        Ts = self.T_series()
        self._f_series = np.zeros(len(Ts))
        for k in range(1, len(Ts)):
            self._f_series[k] = -self.sign * Ts[k] / (p.a * k)
        self._t_switch = self.rho(self.tau_end - self.sign * mach.margin) ** 2

    def f_of_tau(self, tau):
        self._ensure_f()
        lo, hi = sorted((self.tau_end, self.tau_far + self.sign * 0.5 * self.mach.margin))
        if not lo <= tau <= hi:
            raise ValueError("tau outside the solved range for f")
        return float(self._f_dense(tau)[0])

    def f_of_t(self, t):
        if np.ndim(t):
            return np.array([self.f_of_t(x) for x in np.ravel(t)]).reshape(np.shape(t))
        self._ensure_f()
        t = float(t)
        if t < 0:
            raise ValueError("t = rho^2 must be nonnegative")
        if t <= self._t_switch:
            return float(np.polyval(self._f_series[::-1], t))
        return self.f_of_tau(self.tau_of_t(t))

    def f_derivs(self, t, order=4):
        """Raw derivatives of f at t, valid down to and including t = 0."""
        self._ensure_f()
        if order > 4:
            raise ValueError("f jets are available up to order 4")
        t = float(t)
        if t <= self._t_switch:
            return _poly_eval_derivs(self._f_series, t, order)
        p = self.profile
        tau = self.tau_of_t(t)
        T = self._tau_taylor_in_t(t, tau, order)
        tser = np.zeros(order + 1)
        tser[0] = t
        if order >= 1:
            tser[1] = 1.0
        num = T.copy()
        num[0] -= self.tau_end
        fp = -self.sign / p.a * _ser_div(num, tser, order)
        F = np.zeros(order + 1)
        F[0] = self.f_of_tau(tau)
        for k in range(order):
            F[k + 1] = fp[k] / (k + 1)
        return F * np.array([math.factorial(k) for k in range(order + 1)])

    def _tau_taylor_in_t(self, t, tau, order):
        p = self.profile
        T = np.zeros(order + 1)
        T[0] = tau
        tser = np.zeros(order + 1)
        tser[0] = t
        if order >= 1:
            tser[1] = 1.0
        for k in range(order):
            qout = p.q_taylor(T[0], order)
            inner = T.copy()
            inner[0] = 0.0
            qser = _ser_compose(qout, inner, order)
            rhs = -self.sign / (2.0 * p.a) * _ser_div(qser, tser, order)
            T[k + 1] = rhs[k] / (k + 1)
        return T

    def tau_taylor_in_t(self, t, order=4):
        """Taylor coefficients of tau as a function of t = rho^2.

        Valid down to and including t = 0, where the inverse endpoint series
        takes over from the interior recursion.
        """
        t = float(t)
        if t <= self._t_switch:
            Tser = self.T_series()
            derivs = _poly_eval_derivs(Tser, t, order)
            fact = np.array([math.factorial(k) for k in range(order + 1)])
            out = derivs / fact
            out[0] += self.tau_end
            return out
        return self._tau_taylor_in_t(t, self.tau_of_t(t), order)

    def f_prime_at_zero(self):
        self._ensure_f()
        return float(self._f_series[1])

    # -- arc length --------------------------------------------------------

    def sigma_of_tau(self, tau):
        if np.ndim(tau):
            return np.array([self.sigma_of_tau(t) for t in np.ravel(tau)]).reshape(np.shape(tau))
        mach = self.mach
        tau = float(tau)
        if self.sign * (tau - mach.mid) >= 0:
            return mach.arc_from_end(self.sign, tau)
        return mach.delta - mach.arc_from_end(-self.sign, tau)

    def sigma_of_rho(self, rho):
        if np.ndim(rho):
            return np.array([self.sigma_of_rho(r) for r in np.ravel(rho)]).reshape(np.shape(rho))
        if rho == 0.0:
            return 0.0
        return self.sigma_of_tau(self.tau_of_rho(rho))


# ---------------------------------------------------------------------------
# matching maps and modifications


class TauMap:
    """A flow conjugacy tau -> tauhat between two profiles.

    Satisfies d tauhat / d tau = Qhat(tauhat) / Q(tau) with tauhat(tau_pm)
    equal to the target endpoints. Built canonically (the free scale constant
    is fixed by matching the exponentiated flow times of the two minus ends),
    so the inverse map is the canonical map of the swapped pair.
    """

    def __init__(self, p, phat):
        if abs(p.a - phat.a) > 1e-8 * p.a:
            raise ValueError("profiles must share the boundary slope a")
        self.p = p
        self.phat = phat
        self.mach = p.machinery()
        self.mhat = phat.machinery()
        self._inverse = None
        self._build()

    def _build(self):
        p, phat = self.p, self.phat
        mach, mhat = self.mach, self.mhat
        a = p.a
        # canonical anchor: equal exponentiated flow times from the minus ends
        log_theta = math.log(mach.mid - p.tau_minus) + 2.0 * a * mach.s(mach.mid)
        shat0 = (log_theta - math.log(mhat.mid - phat.tau_minus)) / (2.0 * a)
        tauhat0 = mhat.tau_from_s(shat0)

        lo = p.tau_minus + 0.5 * mach.margin
        hi = p.tau_plus - 0.5 * mach.margin

        def rhs(tau, y):
            th = float(np.clip(y[0], phat.tau_minus, phat.tau_plus))
            return [max(phat.q(th), 0.0) / p.q(tau)]

        up = solve_ivp(rhs, (mach.mid, hi), [tauhat0], **_IVP_OPTS)
        dn = solve_ivp(rhs, (mach.mid, lo), [tauhat0], **_IVP_OPTS)
        if not (up.success and dn.success):
            raise RuntimeError("matching integration failed")
        self._up, self._dn = up.sol, dn.sol
        self._lo, self._hi = lo, hi
        self._series = {}
        for end in (-1, +1):
            self._series[end] = self._end_series(end)

    def _dense(self, tau):
        if tau >= self.mach.mid:
            return float(self._up(min(tau, self._hi))[0])
        return float(self._dn(max(tau, self._lo))[0])

    def _end_series(self, end):
        p, phat = self.p, self.phat
        tau_e, q = p.end_taylor(end)
        tauhat_e, qh = phat.end_taylor(end)
        ns = min(len(q), len(qh)) - 1
        q = q[:ns + 1]
        qh = qh[:ns + 1]
        d_m = -end * self.mach.margin
        target = self._dense(tau_e + d_m)
        u = np.zeros(ns + 1)
        u[1] = (target - tauhat_e) / d_m
        for _ in range(12):
            # triangular solve for u_2..u_ns given u_1
            for el in range(2, ns + 1):
                utrial = u.copy()
                utrial[el] = 0.0
                comp = _ser_compose(qh, utrial, ns)
                acc = comp[el]
                for k in range(1, el):
                    j = el + 1 - k
                    if j <= ns:
                        acc -= k * u[k] * q[j]
                u[el] = acc / ((el - 1) * q[1])
            u1_new = (target - tauhat_e - float(np.polyval(
                np.concatenate([[0.0, 0.0], u[2:]])[::-1], d_m))) / d_m
            if abs(u1_new - u[1]) < 1e-15 * max(1.0, abs(u[1])):
                u[1] = u1_new
                break
            u[1] = u1_new
        return {"tau": tau_e, "tauhat": tauhat_e, "u": u}

    def _near_end(self, tau):
        for end in (-1, +1):
            if end * (tau - self._series[end]["tau"]) > -self.mach.margin:
                return end
        return None

    def __call__(self, tau):
        if np.ndim(tau):
            return np.array([self(t) for t in np.ravel(tau)]).reshape(np.shape(tau))
        tau = float(tau)
        if tau <= self.p.tau_minus:
            return self.phat.tau_minus
        if tau >= self.p.tau_plus:
            return self.phat.tau_plus
        end = self._near_end(tau)
        if end is None:
            return self._dense(tau)
        e = self._series[end]
        d = tau - e["tau"]
        return e["tauhat"] + float(np.polyval(e["u"][::-1], d))

    def prime(self, tau):
        tau = float(tau)
        end = self._near_end(tau)
        if end is not None:
            e = self._series[end]
            d = tau - e["tau"]
            u = e["u"]
            dp = np.array([k * u[k] for k in range(1, len(u))])
            return float(np.polyval(dp[::-1], d))
        return self.phat.q(self(tau)) / self.p.q(tau)

    def taylor(self, tau, order=4):
        """Taylor coefficients of the map at an interior point or endpoint."""
        tau = float(tau)
        end = self._near_end(tau)
        if end is not None:
            # shift the endpoint polynomial to tau
            e = self._series[end]
            d = tau - e["tau"]
            poly = np.concatenate([[0.0], e["u"][1:]])
            derivs = _poly_eval_derivs(poly, d, order)
            derivs[0] += e["tauhat"]
            fact = np.array([math.factorial(k) for k in range(order + 1)])
            return derivs / fact
        th = np.zeros(order + 1)
        th[0] = self._dense(tau)
        tser = np.zeros(order + 1)
        tser[0] = tau
        if order >= 1:
            tser[1] = 1.0
        for k in range(order):
            qhat_out = self.phat.q_taylor(th[0], order)
            inner = th.copy()
            inner[0] = 0.0
            num = _ser_compose(qhat_out, inner, order)
            q_out = self.p.q_taylor(tau, order)
            inner2 = tser.copy()
            inner2[0] = 0.0
            den = _ser_compose(q_out, inner2, order)
            rhs = _ser_div(num, den, order)
            th[k + 1] = rhs[k] / (k + 1)
        return th

    def inverse(self):
        if self._inverse is None:
            self._inverse = TauMap(self.phat, self.p)
        return self._inverse

    def conjugacy_report(self, n=101, tol=1e-8):
        """Residual of d tauhat Q = Qhat(tauhat) on an interior grid."""
        p = self.p
        taus = p.tau_minus + p.span * (np.arange(1, n + 1) / (n + 1))
        scale = self.phat.q(self.phat.midpoint)
        res = [abs(self.prime(t) * p.q(t) - self.phat.q(self(t))) / scale
               for t in taus]
        ends = [abs(self(p.tau_minus) - self.phat.tau_minus),
                abs(self(p.tau_plus) - self.phat.tau_plus)]
        return CheckReport.from_residuals(
            "profile-match", "%s->%s" % (p.label, self.phat.label),
            list(res) + ends, tol, n_samples=n,
            details={"endpoint_images": [self(p.tau_minus), self(p.tau_plus)]})


def match_profiles(p, phat):
    """The canonical conjugacy map between two profiles with equal a."""
    p.require_valid()
    phat.require_valid()
    return TauMap(p, phat)


class Modification:
    """The potential correction phi turning one profile into another.

    phi satisfies phi'(tau) = (tauhat(tau) - tau) / Q(tau), smooth up to the
    endpoints when both profiles share their interval and slope. Guards:
    the new coordinate must stay monotone (tauhat' > 0) and the endpoint
    values of phi' must respect the fixed-point inequality, both reported.
    """

    def __init__(self, taumap):
        p, phat = taumap.p, taumap.phat
        if (abs(p.tau_minus - phat.tau_minus) > 1e-10 * p.span
                or abs(p.tau_plus - phat.tau_plus) > 1e-10 * p.span):
            raise ValueError("modification needs profiles on the same interval")
        self.taumap = taumap
        self.p = p
        self.phat = phat
        self.mach = p.machinery()
        self._series = {}
        for end in (-1, +1):
            tau_e, q = p.end_taylor(end)
            u = taumap._series[end]["u"].copy()
            num = u.copy()
            num[0] = 0.0
            num[1] -= 1.0
            ns = len(q) - 1
            phip = _ser_div(num[1:ns + 1], q[1:ns + 1], ns - 1)
            self._series[end] = {"tau": tau_e, "phip": phip}
        self._build_dense()

    def _build_dense(self):
        p = self.p

        def rhs(tau, y):
            return [self.phi_prime(tau)]

        lo = p.tau_minus
        hi = p.tau_plus
        up = solve_ivp(rhs, (p.midpoint, hi), [0.0], **_IVP_OPTS)
        dn = solve_ivp(rhs, (p.midpoint, lo), [0.0], **_IVP_OPTS)
        if not (up.success and dn.success):
            raise RuntimeError("modification potential integral failed")
        self._up, self._dn = up.sol, dn.sol

    def phi_prime(self, tau):
        if np.ndim(tau):
            return np.array([self.phi_prime(t) for t in np.ravel(tau)]).reshape(np.shape(tau))
        tau = float(tau)
        for end in (-1, +1):
            e = self._series[end]
            d = tau - e["tau"]
            if abs(d) < self.mach.margin:
                return float(np.polyval(e["phip"][::-1], d))
        return (self.taumap(tau) - tau) / self.p.q(tau)

    def phi(self, tau):
        if np.ndim(tau):
            return np.array([self.phi(t) for t in np.ravel(tau)]).reshape(np.shape(tau))
        tau = float(tau)
        p = self.p
        tau = min(max(tau, p.tau_minus), p.tau_plus)
        if tau >= p.midpoint:
            return float(self._up(tau)[0])
        return float(self._dn(tau)[0])

    def phi_taylor(self, tau, order=4):
        """Taylor coefficients of phi at tau, series-backed near the ends."""
        tau = float(tau)
        for end in (-1, +1):
            e = self._series[end]
            d = tau - e["tau"]
            if abs(d) < self.mach.margin:
                phip = e["phip"]
                raw = _poly_eval_derivs(phip, d, max(order - 1, 0))
                out = np.zeros(order + 1)
                out[0] = self.phi(tau)
                for k in range(1, order + 1):
                    out[k] = raw[k - 1] / math.factorial(k)
                return out
        th = self.taumap.taylor(tau, order)
        tser = np.zeros(order + 1)
        tser[0] = tau
        if order >= 1:
            tser[1] = 1.0
        num = th - tser
        q_out = self.p.q_taylor(tau, order)
        inner = tser.copy()
        inner[0] = 0.0
        den = _ser_compose(q_out, inner, order)
        phip = _ser_div(num, den, order)
        out = np.zeros(order + 1)
        out[0] = self.phi(tau)
        for k in range(order):
            out[k + 1] = phip[k] / (k + 1)
        return out

    def qhat_of_tau(self, tau):
        """The modified profile read along the original coordinate."""
        return self.taumap.prime(tau) * self.p.q(tau)

    def guards(self, n=201):
        """Monotonicity and endpoint inequalities for the new coordinate."""
        p = self.p
        taus = np.linspace(p.tau_minus, p.tau_plus, n)
        primes = np.array([self.taumap.prime(t) for t in taus])
        phip_minus = self.phi_prime(p.tau_minus)
        phip_plus = self.phi_prime(p.tau_plus)
        return {
            "monotone_min": float(primes.min()),
            "monotone_ok": bool(primes.min() > 0.0),
            "endpoint_phi_prime": [float(phip_minus), float(phip_plus)],
            "fixed_end_margin": [float(1.0 + 2.0 * p.a * phip_minus),
                                 float(1.0 - 2.0 * p.a * phip_plus)],
            "fixed_end_ok": bool(1.0 + 2.0 * p.a * phip_minus > 0.0
                                 and 1.0 - 2.0 * p.a * phip_plus > 0.0),
        }

    def report(self, n=101, tol=1e-8):
        g = self.guards()
        taus = self.p.tau_minus + self.p.span * (np.arange(1, n + 1) / (n + 1))
        scale = self.phat.q(self.phat.midpoint)
        res = [abs(self.qhat_of_tau(t) - self.phat.q(self.taumap(t))) / scale
               for t in taus]
        return CheckReport.from_residuals(
            "profile-modification", "%s->%s" % (self.p.label, self.phat.label),
            res, tol, n_samples=n, details=g)


def modification(p, target):
    """Build the modification potential from a profile or a matching map."""
    taumap = target if isinstance(target, TauMap) else match_profiles(p, target)
    return Modification(taumap)


# ---------------------------------------------------------------------------
# the flow normal form helper


def theta_fn(gamma, t_max, t_min=0.0, gamma_d2=None):
    """Normal form coordinate for a one dimensional flow vanishing at 0.

    gamma must satisfy gamma(0) = 0, gamma'(0) = 1. Returns the function
    theta with gamma * theta' = theta, theta(0) = 0, theta'(0) = 1; any other
    solution is a constant multiple.
    """
    scale = max(abs(t_max), abs(t_min), 1e-6)
    if gamma_d2 is None:
        h = 1e-3 * scale
        c2h = (gamma(h) - h) / (h * h)
        c2h2 = (gamma(h / 2) - h / 2) / (h * h / 4)
        g2 = 2.0 * c2h2 - c2h
    else:
        g2 = 0.5 * gamma_d2

    def integrand(s):
        if abs(s) < 1e-6 * scale:
            return -g2
        return (s - gamma(s)) / (s * gamma(s))

    sols = {}
    for (sgn, stop) in ((+1, t_max), (-1, t_min)):
        if sgn * stop <= 0:
            continue
        sol = solve_ivp(lambda t, y: [integrand(t)], (0.0, stop), [0.0], **_IVP_OPTS)
        if not sol.success:
            raise RuntimeError("normal form integral failed")
        sols[sgn] = sol.sol

    def theta(t):
        if np.ndim(t):
            return np.array([theta(x) for x in np.ravel(t)]).reshape(np.shape(t))
        t = float(t)
        if t == 0.0:
            return 0.0
        sgn = 1 if t > 0 else -1
        if sgn not in sols:
            raise ValueError("t outside the requested range")
        return t * math.exp(float(sols[sgn](t)[0]))

    return theta


# ---------------------------------------------------------------------------
# config and CSV plumbing


def load_profile_config(path):
    """Read a profile description from a JSON or TOML file."""
    text = open(path, "rb").read()
    name = str(path)
    if name.endswith(".toml"):
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib
        cfg = tomllib.loads(text.decode())
    else:
        cfg = json.loads(text.decode())
    return Profile.from_config(cfg)


def write_solution_csv(sol, path, n=401):
    """Solution curves on an interior grid, one row per tau."""
    p = sol.profile
    h = p.span * MARGIN_FRAC
    taus = np.linspace(p.tau_minus + h, p.tau_plus - h, n)
    rows = np.array([
        [t, p.q(t), sol.rho(t), sol.sigma_of_tau(t), sol.f_of_tau(t)]
        for t in taus])
    header = ("profile=%s sign=%+d delta=%.17g a=%.17g interval=[%.17g,%.17g]\n"
              % (p.label, sol.sign, sol.delta, p.a, p.tau_minus, p.tau_plus))
    header += "tau,q,rho,sigma,f"
    np.savetxt(path, rows, delimiter=",", header=header)
    return rows
