"""Built-in triple constructions: projective families, Grassmannians, bundles.

Each catalog entry packages a multi-chart potential atlas with the scalar
field tau, the circle generator u and its gradient partner v in closed form,
critical-set models, and the integer invariants (m, d_pm, k_pm, q). Entries
are addressed by short spec strings such as ``cp:n=3,l=1``, ``gr:n=4,k=2``
or ``bundle:base=cp1,kind=taut``.

A structural fact this module leans on everywhere: in every chart of every
entry the fields are linear and diagonal, v = U z and u = i U z for a fixed
real diagonal U. Shape operators therefore come from Christoffel symbols
alone and never need derivatives of tau. tau itself has a closed form on the
projective and bundle entries; on Grassmannians it is recovered by radial
quadrature of g(v, .) from the chart origin, which sits on a critical set.
"""

import itertools
import math

import numpy as np

from .charts import (ComplexChart, PotentialChart, complex_gradient,
                     complex_mixed_hessian, complex_to_real_vector,
                     hermitian_form, metric_from_potential,
                     real_to_complex_vector)
from .jets import (CJet, Jet, jet_log, jet_mat_det, jet_mat_inverse,
                   jet_reciprocal)
from .profiles import Profile, ProfileSolution, modification
from .riemann import integrate_geodesic

DOMAIN_RADIUS = 2.5       # sup-norm chart box, in interleaved real coordinates
SAMPLE_BOX = 1.2          # sampling box; every point has a chart rep inside it
QUAD_NODES = 64           # Gauss-Legendre nodes for radial tau quadrature
Q_FLOOR = 1e-6            # samples this close to the critical sets are rejected
Q_STOP = 1e-7             # gradient flows hand over to straight continuation here

CATALOG_SPECS = (
    "cp:n=2,l=1",
    "cp:n=3,l=1",
    "cp:n=3,l=2",
    "cp:n=4,l=2",
    "gr:n=4,k=2",
    "bundle:base=point,kind=trivial",
    "bundle:base=cp1,kind=trivial",
    "bundle:base=cp1,kind=taut",
)


def _compose_coeffs(jet, coeffs):
    """Apply a univariate function given by Taylor coefficients at jet.value."""
    raw = [c * math.factorial(i) for i, c in enumerate(coeffs)]
    return jet.compose(raw)


def _interleave(values):
    return complex_to_real_vector(np.asarray(values, dtype=complex))


def _cjet_values(outs):
    return np.array([o.value for o in outs])


def _cjet_real_jacobian(outs):
    rows = []
    for o in outs:
        rows.append(o.re.grad())
        rows.append(o.im.grad())
    return np.array(rows)


# ---------------------------------------------------------------------------
# atlases


class TripleAtlas:
    """Multi-chart potential atlas with holomorphic overlap maps.

    Implements the protocol the geodesic integrator consumes: metric jets,
    a signed escape margin, and rehome (transition plus real Jacobian).
    Subclasses provide pick_chart and transition.
    """

    def __init__(self, pcharts):
        self.pcharts = list(pcharts)
        self._cache = {}

    @property
    def num_charts(self):
        return len(self.pcharts)

    def metric(self, cid, x, order=4):
        x = np.asarray(x, dtype=float)
        if order >= 4:
            key = (cid, x.tobytes())
            hit = self._cache.get(key)
            if hit is not None:
                return hit
            mj = metric_from_potential(self.pcharts[cid], x, order=4)
            if len(self._cache) >= 512:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = mj
            return mj
        return metric_from_potential(self.pcharts[cid], x, order=order)

    def metric_value(self, cid, x):
        """Just the metric matrix, from an order-2 potential jet."""
        return metric_from_potential(self.pcharts[cid], x, order=2).g

    def escape(self, cid, x):
        return self.pcharts[cid].chart.domain_radius - np.max(np.abs(x))

    def rehome(self, cid, x):
        to = self.pick_chart(cid, x)
        if to is None or to == cid:
            return None
        zs = self.pcharts[cid].chart.seed_complex(np.asarray(x, dtype=float), 1)
        outs = self.transition(cid, to, zs)
        new_x = _interleave(_cjet_values(outs))
        jac = _cjet_real_jacobian(outs)
        return to, new_x, jac

    def move_point(self, cid, x, to):
        """Value-level chart transition of a single point."""
        if to == cid:
            return np.asarray(x, dtype=float)
        zs = self.pcharts[cid].chart.seed_complex(np.asarray(x, dtype=float), 1)
        return _interleave(_cjet_values(self.transition(cid, to, zs)))

    def pick_chart(self, cid, x):
        raise NotImplementedError

    def transition(self, cid, to, zs):
        raise NotImplementedError


class _CPAtlas(TripleAtlas):
    """One affine chart per homogeneous coordinate of PV."""

    def __init__(self, pcharts, n):
        super().__init__(pcharts)
        self.n = n

    def _hom(self, cid, z):
        return np.insert(np.asarray(z, dtype=complex), cid, 1.0)

    def pick_chart(self, cid, x):
        z = self.pcharts[cid].chart.to_complex(x)
        j = int(np.argmax(np.abs(self._hom(cid, z))))
        return None if j == cid else j

    def transition(self, cid, to, zs):
        hom = list(zs)
        hom.insert(cid, CJet.constant(zs[0].re.space, 1.0))
        pivot = hom[to]
        return [hom[t] / pivot for t in range(self.n) if t != to]


class _GrAtlas(TripleAtlas):
    """One affine chart per coordinate k-subset of the ambient frame rows."""

    def __init__(self, pcharts, n, k, subsets):
        super().__init__(pcharts)
        self.n = n
        self.k = k
        self.subsets = list(subsets)

    def frame_value(self, cid, z):
        """Numeric n x k frame with identity on the chart's subset rows."""
        I = self.subsets[cid]
        comp = [r for r in range(self.n) if r not in I]
        M = np.zeros((self.n, self.k), dtype=complex)
        M[list(I), :] = np.eye(self.k)
        M[comp, :] = np.asarray(z, dtype=complex).reshape(self.n - self.k, self.k)
        return M

    def pick_chart(self, cid, x):
        z = self.pcharts[cid].chart.to_complex(x)
        M = self.frame_value(cid, z)
        vols = [abs(np.linalg.det(M[list(I), :])) for I in self.subsets]
        j = int(np.argmax(vols))
        return None if j == cid else j

    def transition(self, cid, to, zs):
        I = self.subsets[cid]
        comp = [r for r in range(self.n) if r not in I]
        sp = zs[0].re.space
        one = CJet.constant(sp, 1.0)
        zero = CJet.constant(sp, 0.0)
        M = np.empty((self.n, self.k), dtype=object)
        for s, row in enumerate(I):
            for c in range(self.k):
                M[row, c] = one if s == c else zero
        for p, row in enumerate(comp):
            for c in range(self.k):
                M[row, c] = zs[p * self.k + c]
        B = M[list(self.subsets[to]), :]
        Binv = jet_mat_inverse(B)
        comp_to = [r for r in range(self.n) if r not in self.subsets[to]]
        outs = []
        for row in comp_to:
            for c in range(self.k):
                acc = zero
                for t in range(self.k):
                    acc = acc + M[row, t] * Binv[t, c]
                outs.append(acc)
        return outs


class _BundleAtlas(TripleAtlas):
    """Product charts (base coordinates, fiber coordinates) of a disk bundle.

    Base transitions follow the underlying CP^1 atlas; the fiber transforms
    by the holomorphic frame change. Points past the fiber cap escape with
    nowhere to go, which is the honest picture for a one-ended total space.
    """

    def __init__(self, pcharts, base_n, rank, rho2_value, s_transition, t_cap):
        super().__init__(pcharts)
        self.base_n = base_n
        self.rank = rank
        self.rho2_value = rho2_value       # (cid, x) -> |xi|^2 in the fiber metric
        self.s_transition = s_transition   # (z, s) CJets -> fiber CJets in the other chart
        self.t_cap = t_cap

    def escape(self, cid, x):
        box = self.pcharts[cid].chart.domain_radius - np.max(np.abs(x[:2 * self.base_n])) \
            if self.base_n else 1.0
        return min(box, self.t_cap - self.rho2_value(cid, x))

    def pick_chart(self, cid, x):
        if self.base_n == 0 or self.num_charts == 1:
            return None
        z = x[0] + 1j * x[1]
        if abs(z) <= 1.0:
            return None
        return 1 - cid

    def transition(self, cid, to, zs):
        z = zs[0]
        out = [CJet.constant(z.re.space, 1.0) / z]
        out.extend(self.s_transition(z, zs[1:]))
        return out


# ---------------------------------------------------------------------------
# instances and critical sets


class TripleInstance:
    """A constructed geometry, immutable by convention.

    Fields mirror what downstream verification consumes: the atlas, the
    profile, per-chart diagonal generators of v and u, a tau evaluator and
    (where closed forms exist) its jet, critical-set models, and integer
    metadata.
    """

    def __init__(self, kind, spec, atlas, profile, u_diag, tau_fn, meta,
                 tau_jet_fn=None, sigma_plus=None, sigma_minus=None,
                 extras=None, label=None):
        self.kind = kind
        self.spec = spec
        self.atlas = atlas
        self.profile = profile
        self.u_diag = [np.asarray(d, dtype=float) for d in u_diag]
        self._tau_fn = tau_fn
        self._tau_jet_fn = tau_jet_fn
        self.meta = dict(meta)
        self.sigma_plus = sigma_plus
        self.sigma_minus = sigma_minus
        self.extras = dict(extras or {})
        self.label = label or spec
        self._solutions = {}

    def __repr__(self):
        return "TripleInstance(%r, m=%d)" % (self.spec, self.meta["m"])

    @property
    def n(self):
        return self.meta["m"]

    @property
    def dim(self):
        return 2 * self.meta["m"]

    @property
    def num_charts(self):
        return self.atlas.num_charts

    def metric(self, cid, x, order=4):
        return self.atlas.metric(cid, x, order=order)

    def v_field(self, cid, x):
        z = self.atlas.pcharts[cid].chart.to_complex(x)
        return _interleave(self.u_diag[cid] * z)

    def u_field(self, cid, x):
        z = self.atlas.pcharts[cid].chart.to_complex(x)
        return _interleave(1j * self.u_diag[cid] * z)

    def tau(self, cid, x):
        return self._tau_fn(cid, np.asarray(x, dtype=float))

    def tau_jet(self, cid, x, order=4):
        if self._tau_jet_fn is None:
            raise NotImplementedError("no closed-form tau jet for %s" % self.kind)
        return self._tau_jet_fn(cid, np.asarray(x, dtype=float), order)

    @property
    def has_tau_jet(self):
        return self._tau_jet_fn is not None

    def q_value(self, cid, x, g=None):
        if g is None:
            g = self.atlas.metric_value(cid, x)
        v = self.v_field(cid, x)
        return float(v @ g @ v)

    def solution(self, sign=+1):
        if sign not in self._solutions:
            self._solutions[sign] = ProfileSolution(self.profile, sign=sign)
        return self._solutions[sign]

    def critical(self, sign):
        return self.sigma_plus if sign > 0 else self.sigma_minus

    def sample_points(self, count, seed=0, q_min=Q_FLOOR, box=SAMPLE_BOX):
        """Seeded chart points, uniform in boxes, away from the critical sets."""
        rng = np.random.default_rng(seed)
        fiber_box = self.extras.get("fiber_box")
        t_hi = self.extras.get("t_box")
        base_n = self.extras.get("base_n")
        pts = []
        guard = 0
        while len(pts) < count:
            guard += 1
            if guard > 400 * count:
                raise RuntimeError("sampling rejected too many points")
            cid = int(rng.integers(self.num_charts))
            x = rng.uniform(-box, box, self.dim)
            if fiber_box is not None:
                x[2 * base_n:] = rng.uniform(-fiber_box, fiber_box, self.dim - 2 * base_n)
                if self.extras["rho2_value"](cid, x) > t_hi:
                    continue
            if self.q_value(cid, x) < q_min:
                continue
            pts.append((cid, x))
        return pts


class CriticalSetModel:
    """One critical manifold, described per chart by vanishing coordinates.

    ``charts`` maps chart ids to the sorted complex coordinate indices that
    vanish on the set there; charts where the set does not appear are simply
    missing. ``sub_potentials`` (same keys) give the restricted potential for
    the induced metric. A model with no charts stands for a boundary at
    infinity that the atlas does not reach.
    """

    def __init__(self, sign, dim, tau_value, charts, ambient_n,
                 sub_potentials=None, label=""):
        self.sign = sign
        self.dim = dim
        self.tau_value = tau_value
        self.charts = {cid: tuple(sorted(idx)) for cid, idx in charts.items()}
        self.ambient_n = ambient_n
        self.sub_potentials = sub_potentials or {}
        self.label = label

    def __repr__(self):
        return "CriticalSetModel(sign=%+d, dim=%d)" % (self.sign, self.dim)

    @property
    def reachable(self):
        return bool(self.charts)

    def normal_indices(self, cid):
        return self.charts[cid]

    def tangent_indices(self, cid):
        normal = set(self.charts[cid])
        return tuple(a for a in range(self.ambient_n) if a not in normal)

    def contains(self, cid, x, tol=1e-8):
        if cid not in self.charts:
            return False
        z = real_to_complex_vector(x)
        return bool(max((abs(z[a]) for a in self.charts[cid]), default=0.0) < tol)

    def chart_project(self, cid, x):
        """Zero the vanishing coordinates; the nearest-point projection here."""
        y = np.array(x, dtype=float)
        for a in self.charts[cid]:
            y[2 * a] = 0.0
            y[2 * a + 1] = 0.0
        return y

    def embed(self, cid, zsub):
        """Ambient chart point from complex coordinates along the set."""
        z = np.zeros(self.ambient_n, dtype=complex)
        for a, val in zip(self.tangent_indices(cid), np.atleast_1d(zsub)):
            z[a] = val
        return _interleave(z)

    def tangent_vector(self, cid, zeta):
        z = np.zeros(self.ambient_n, dtype=complex)
        for a, val in zip(self.tangent_indices(cid), np.atleast_1d(zeta)):
            z[a] = val
        return _interleave(z)

    def normal_vector(self, cid, zeta):
        z = np.zeros(self.ambient_n, dtype=complex)
        for a, val in zip(self.charts[cid], np.atleast_1d(zeta)):
            z[a] = val
        return _interleave(z)

    def random_point(self, rng, box=0.9):
        cid = sorted(self.charts)[int(rng.integers(len(self.charts)))]
        zsub = rng.uniform(-box, box, self.dim) + 1j * rng.uniform(-box, box, self.dim)
        return cid, self.embed(cid, zsub)

    def sub_chart(self, cid):
        return PotentialChart(ComplexChart(self.dim, label="%s|%d" % (self.label, cid),
                                           domain_radius=DOMAIN_RADIUS),
                              self.sub_potentials[cid])

    def induced_metric(self, cid, ysub, order=4):
        """Metric jet of the set as a manifold, in its tangent coordinates."""
        if self.dim == 0:
            raise ValueError("a point has no induced metric")
        return metric_from_potential(self.sub_chart(cid), ysub, order=order)

    def normal_hermitian(self, cid, x, metricjet=None):
        """Ambient Hermitian form restricted to the normal coordinates."""
        if metricjet is None:
            raise ValueError("pass the ambient metric jet at the point")
        H = hermitian_form(metricjet)
        idx = list(self.charts[cid])
        return H[np.ix_(idx, idx)]


def critical_sets(t):
    """The two critical-set models of an instance."""
    return t.sigma_plus, t.sigma_minus


# ---------------------------------------------------------------------------
# projective family


def _is_fs_law(profile, tol=1e-10):
    taus = np.linspace(profile.tau_minus, profile.tau_plus, 41)[1:-1]
    law = 2.0 * profile.a * (taus - profile.tau_minus) * (profile.tau_plus - taus) \
        / profile.span
    dev = max(abs(profile.q(t) - l) for t, l in zip(taus, law))
    return dev < tol * 2.0 * profile.a * profile.span


def make_cp_triple(dim_v, dim_l, profile=None):
    """Projective space PV with the critical pair PL, PL-perp.

    dim_v is the ambient dimension n, dim_l the dimension of the distinguished
    subspace L spanned by the first coordinates. With no profile (or the
    product-law profile) the metric is the scaled Fubini-Study one; any other
    valid profile on the same interval is realized by the potential
    modification, and the result carries kind "modified".
    """
    n, l = int(dim_v), int(dim_l)
    if n < 2:
        raise ValueError("need dim V >= 2, got %d" % n)
    if not 1 <= l <= n - 1:
        raise ValueError("need 1 <= dim L <= %d, got %d" % (n - 1, l))
    if profile is None:
        profile = Profile.fubini_study(0.0, 1.0, 1.0)
    profile.require_valid()
    a = profile.a
    tau_minus, tau_plus = profile.tau_minus, profile.tau_plus
    span = profile.span
    kappa = span / a
    mod = None
    if not _is_fs_law(profile):
        base = Profile.fubini_study(tau_minus, tau_plus, a)
        mod = modification(base, profile)
    taumap = mod.taumap if mod is not None else None

    m = n - 1
    l_set = frozenset(range(l))
    coords = [tuple(j for j in range(n) if j != i) for i in range(n)]
    l_masks = [np.array([j in l_set for j in coords[i]]) for i in range(n)]
    l_consts = [1.0 if i in l_set else 0.0 for i in range(n)]

    def fs_fraction_jet(cid, zs):
        S = Jet.constant(zs[0].re.space, 1.0)
        SL = Jet.constant(zs[0].re.space, l_consts[cid])
        for j, cz in enumerate(zs):
            t2 = cz.abs2()
            S = S + t2
            if l_masks[cid][j]:
                SL = SL + t2
        return S, SL

    charts = [ComplexChart(m, label="cp%d" % i, domain_radius=DOMAIN_RADIUS)
              for i in range(n)]

    def make_potential(cid):
        chart = charts[cid]

        def potential(point, order):
            zs = chart.seed_complex(point, order)
            S, SL = fs_fraction_jet(cid, zs)
            K = kappa * jet_log(S)
            if mod is not None:
                tau_fs = tau_minus + span * (SL * jet_reciprocal(S))
                K = K + 2.0 * _compose_coeffs(tau_fs, mod.phi_taylor(tau_fs.value, order))
            return K
        return potential

    pcharts = [PotentialChart(charts[i], make_potential(i), label="cp%d" % i)
               for i in range(n)]
    atlas = _CPAtlas(pcharts, n)

    u_diag = []
    for i in range(n):
        if i in l_set:
            u_diag.append(np.where(l_masks[i], 0.0, -a))
        else:
            u_diag.append(np.where(l_masks[i], a, 0.0))

    def tau_fs_value(cid, x):
        z = real_to_complex_vector(x)
        t2 = np.abs(z) ** 2
        S = 1.0 + t2.sum()
        SL = l_consts[cid] + t2[l_masks[cid]].sum()
        return tau_minus + span * SL / S

    if mod is None:
        tau_fn = tau_fs_value
    else:
        def tau_fn(cid, x):
            return float(taumap(tau_fs_value(cid, x)))

    def tau_jet_fn(cid, x, order):
        zs = charts[cid].seed_complex(x, order)
        S, SL = fs_fraction_jet(cid, zs)
        tj = tau_minus + span * (SL * jet_reciprocal(S))
        if mod is not None:
            tj = _compose_coeffs(tj, taumap.taylor(tj.value, order))
        return tj

    def sub_fs_potential(keep_mask):
        def potential(point, order):
            seeds = ComplexChart(int(keep_mask.sum())).seed_complex(point, order)
            S = Jet.constant(seeds[0].re.space, 1.0)
            for cz in seeds:
                S = S + cz.abs2()
            return kappa * jet_log(S)
        return potential

    plus_charts, plus_subs = {}, {}
    minus_charts, minus_subs = {}, {}
    for i in range(n):
        normal_plus = tuple(j for j, keep in enumerate(l_masks[i]) if not keep)
        if i in l_set:
            plus_charts[i] = normal_plus
            plus_subs[i] = sub_fs_potential(l_masks[i])
        else:
            minus_charts[i] = tuple(j for j, keep in enumerate(l_masks[i]) if keep)
            minus_subs[i] = sub_fs_potential(~l_masks[i])

    sigma_plus = CriticalSetModel(+1, l - 1, tau_plus, plus_charts, m,
                                  plus_subs, label="PL")
    sigma_minus = CriticalSetModel(-1, n - 1 - l, tau_minus, minus_charts, m,
                                   minus_subs, label="PLperp")

    # k+ counts complement directions that stay nonzero at the low end,
    # so it is tied to the dimension of the opposite critical manifold
    meta = dict(m=m, d_plus=l - 1, d_minus=n - 1 - l,
                k_plus=l - 1, k_minus=n - 1 - l, q=0,
                a=a, tau_minus=tau_minus, tau_plus=tau_plus)
    extras = dict(dim_v=n, dim_l=l, l_masks=l_masks, l_consts=l_consts,
                  modification=mod, taumap=taumap, base_tau=tau_fs_value)
    kind = "cp" if mod is None else "modified"
    spec = "cp:n=%d,l=%d" % (n, l)
    return TripleInstance(kind, spec, atlas, profile, u_diag, tau_fn, meta,
                          tau_jet_fn=tau_jet_fn, sigma_plus=sigma_plus,
                          sigma_minus=sigma_minus, extras=extras)


# ---------------------------------------------------------------------------
# Grassmannian family


def _gr_block_potential(rows, cols):
    """log det(Id + Z*Z) for a rows x cols block of complex coordinates."""
    def potential(point, order):
        chart = ComplexChart(rows * cols)
        zs = chart.seed_complex(point, order)
        sp = zs[0].re.space
        A = np.empty((cols, cols), dtype=object)
        for b in range(cols):
            for c in range(cols):
                acc = CJet.constant(sp, 1.0 if b == c else 0.0)
                for p in range(rows):
                    acc = acc + zs[p * cols + b].conj() * zs[p * cols + c]
                A[b, c] = acc
        return jet_log(jet_mat_det(A).re)
    return potential


def _leggauss01(nodes):
    x, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * (x + 1.0), 0.5 * w


def make_grassmannian_triple(n, k):
    """k-planes in C^n with the critical pair through and orthogonal to e_0.

    The circle generator u is exact (the central circle action on the first
    coordinate); v = -Ju. tau comes from radial quadrature of g(v, .) per
    chart, anchored at the chart origin, which lies on a critical set. The
    boundary slope a is measured, not assumed.
    """
    n, k = int(n), int(k)
    if not 0 < k < n:
        raise ValueError("need 0 < k < n")
    if n > 6:
        raise ValueError("Grassmannian charts are capped at n <= 6")
    m = k * (n - k)
    subsets = list(itertools.combinations(range(n), k))
    block = _gr_block_potential(n - k, k)

    pcharts = []
    for I in subsets:
        label = "gr" + "".join(str(r) for r in I)
        chart = ComplexChart(m, label=label, domain_radius=DOMAIN_RADIUS)
        pcharts.append(PotentialChart(chart, block, label=label))
    atlas = _GrAtlas(pcharts, n, k, subsets)

    # 0 in I: column 0 of Z carries the action; 0 not in I: row 0 does
    u_diag = []
    anchors = []
    for I in subsets:
        d = np.zeros(m)
        if 0 in I:
            d[0::k] = -1.0
            anchors.append(1.0)
        else:
            d[:k] = 1.0
            anchors.append(0.0)
        u_diag.append(d)

    nodes, weights = _leggauss01(QUAD_NODES)

    def tau_fn(cid, x):
        x = np.asarray(x, dtype=float)
        acc = 0.0
        for s, w in zip(nodes, weights):
            xs = s * x
            g = atlas.metric_value(cid, xs)
            z = real_to_complex_vector(xs)
            v = _interleave(u_diag[cid] * z)
            acc += w * float(v @ g @ x)
        return anchors[cid] + acc

    plus_charts, plus_subs = {}, {}
    minus_charts, minus_subs = {}, {}
    for cid, I in enumerate(subsets):
        if 0 in I:
            plus_charts[cid] = tuple(range(0, m, k))
            plus_subs[cid] = _gr_block_potential(n - k, k - 1)
        else:
            minus_charts[cid] = tuple(range(k))
            minus_subs[cid] = _gr_block_potential(n - k - 1, k)

    sigma_plus = CriticalSetModel(+1, (k - 1) * (n - k), 1.0, plus_charts, m,
                                  plus_subs, label="through-e0")
    sigma_minus = CriticalSetModel(-1, k * (n - 1 - k), 0.0, minus_charts, m,
                                   minus_subs, label="perp-e0")

    # measure a from Q against the product law along a transversal line
    cid0 = next(i for i, I in enumerate(subsets) if 0 in I)

    def slope(s):
        x = np.zeros(2 * m)
        x[0] = s
        tau = tau_fn(cid0, x)
        z = real_to_complex_vector(x)
        v = _interleave(u_diag[cid0] * z)
        q = float(v @ atlas.metric_value(cid0, x) @ v)
        return q / (2.0 * tau * (1.0 - tau))

    a_quarter, a_half = slope(0.25), slope(0.5)
    if abs(a_quarter - a_half) > 1e-6:
        raise RuntimeError("Grassmannian slope calibration is inconsistent")
    a = a_quarter

    meta = dict(m=m, d_plus=(k - 1) * (n - k), d_minus=k * (n - 1 - k),
                k_plus=m - 1 - k * (n - 1 - k), k_minus=m - 1 - (k - 1) * (n - k),
                q=(k - 1) * (n - 1 - k), a=a, tau_minus=0.0, tau_plus=1.0)
    profile = Profile.fubini_study(0.0, 1.0, a)
    extras = dict(gr_n=n, gr_k=k, subsets=subsets)
    t = TripleInstance("grassmannian", "gr:n=%d,k=%d" % (n, k), atlas, profile,
                       u_diag, tau_fn, meta, sigma_plus=sigma_plus,
                       sigma_minus=sigma_minus, extras=extras)
    _audit_gr_tau_range(t)
    return t


def _audit_gr_tau_range(t, tol=1e-4):
    """tau stays inside [tau-, tau+] and comes within tol of both ends."""
    rng = np.random.default_rng(7)
    lo, hi = 1.0, 0.0
    for cid, x in t.sample_points(40, seed=7, q_min=1e-8):
        val = t.tau(cid, x)
        lo, hi = min(lo, val), max(hi, val)
        if not -tol <= val <= 1.0 + tol:
            raise RuntimeError("Grassmannian tau left its interval: %g" % val)
    for sigma in (t.sigma_plus, t.sigma_minus):
        for _ in range(4):
            cid, x = sigma.random_point(rng, box=0.8)
            x += 1e-3 * rng.standard_normal(x.shape)
            val = t.tau(cid, x)
            lo, hi = min(lo, val), max(hi, val)
    if lo > tol or hi < 1.0 - tol:
        raise RuntimeError("Grassmannian tau misses its endpoints: [%g, %g]" % (lo, hi))


# ---------------------------------------------------------------------------
# Hermitian bundle charts and the Chern connection


class HermitianBundleChart:
    """Fiber metric in a holomorphic frame over one base chart.

    ``entries`` maps a list of base coordinates (numbers or complex jets,
    used polymorphically) to the rank x rank Gram matrix of the frame.
    """

    def __init__(self, base_chart, rank, entries, label="bundle"):
        self.base_chart = base_chart
        self.rank = rank
        self.entries = entries
        self.label = label

    def gamma(self, point, order):
        if self.base_chart.n == 0:
            return np.asarray(self.entries([]), dtype=complex)
        zs = self.base_chart.seed_complex(np.asarray(point, dtype=float), order)
        sp = zs[0].re.space
        out = np.empty((self.rank, self.rank), dtype=object)
        vals = self.entries(zs)
        for b in range(self.rank):
            for c in range(self.rank):
                val = vals[b][c]
                out[b, c] = val if isinstance(val, CJet) else CJet.constant(sp, val)
        return out

    def gamma_value(self, point):
        if self.base_chart.n == 0:
            return np.asarray(self.entries([]), dtype=complex)
        z = self.base_chart.to_complex(np.asarray(point, dtype=float))
        vals = self.entries([np.complex128(w) for w in z])
        return np.array([[complex(vals[b][c]) for c in range(self.rank)]
                         for b in range(self.rank)])

    def __repr__(self):
        return "HermitianBundleChart(%r, rank=%d)" % (self.label, self.rank)


def chern_connection(b, point):
    """Connection and curvature components of the metric connection.

    Returns (Omega, RD): Omega[lam][b, d] with Omega_lam = (d_lam gamma)
    inverse(gamma), so Omega contracted with gamma reproduces d_lam gamma;
    RD[lam, mu][b, c] are the lowered mixed curvature components. The
    unmixed components vanish identically for this connection, so only the
    mixed block is materialized.
    """
    p = b.base_chart.n
    r = b.rank
    if p == 0:
        return np.zeros((0, r, r), dtype=complex), np.zeros((0, 0, r, r), dtype=complex)
    G = b.gamma(point, 2)
    gval = np.array([[G[i, j].value for j in range(r)] for i in range(r)])
    dg = np.zeros((p, r, r), dtype=complex)
    dgbar = np.zeros((p, r, r), dtype=complex)
    ddg = np.zeros((p, p, r, r), dtype=complex)
    for i in range(r):
        for j in range(r):
            dz, dzbar = complex_gradient(G[i, j])
            dg[:, i, j] = dz
            dgbar[:, i, j] = dzbar
            ddg[:, :, i, j] = complex_mixed_hessian(G[i, j])
    ginv = np.linalg.inv(gval)
    omega = np.einsum("lbd,dc->lbc", dg, ginv)
    rd = ddg - np.einsum("lbd,mdc->lmbc", omega, dgbar)
    return omega, rd


def curvature_pairing(rd, v, u, xi):
    """<R(v,u) xi, i xi> for complex base vectors v, u and a fiber vector xi."""
    core = np.einsum("lmbc,l,m,b,c->", rd, v, np.conj(u), xi, np.conj(xi))
    return 2.0 * float(core.imag)


# ---------------------------------------------------------------------------
# bundle family


def make_bundle_triple(base, bundle, profile=None, sign=+1, rank=None):
    """Disk-bundle total space with the zero section as a critical set.

    base is "point" or "cp1"; bundle is "trivial" (rank r, flat fiber
    metric) or "taut" (the degree -1 line over CP^1, Gram 1+|z|^2). The
    fiber potential is f(rho^2) with f solved from the profile for the
    requested sign, stacked on a scaled Fubini-Study base potential; the
    horizontal block formulas are available separately for cross-checks.
    The far end of the profile is a boundary at infinity, not in the atlas.
    """
    if base not in ("point", "cp1"):
        raise ValueError("base must be 'point' or 'cp1'")
    if bundle not in ("trivial", "taut"):
        raise ValueError("bundle must be 'trivial' or 'taut'")
    if bundle == "taut" and base != "cp1":
        raise ValueError("the tautological bundle lives over cp1")
    sign = int(sign)
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    if rank is None:
        rank = 1 if base == "cp1" else 2
    rank = int(rank)
    if rank < 1 or (bundle == "taut" and rank != 1):
        raise ValueError("bad fiber rank %d" % rank)
    if profile is None:
        profile = Profile.fubini_study(0.0, 1.0, 1.0)
    profile.require_valid()
    a = profile.a
    span = profile.span
    tau_minus, tau_plus = profile.tau_minus, profile.tau_plus
    sol = ProfileSolution(profile, sign=sign)
    tau_near = tau_plus if sign > 0 else tau_minus
    tau_far = tau_minus if sign > 0 else tau_plus
    t_cap = float(sol.rho(tau_far + sign * 0.02 * span) ** 2)
    t_box = float(sol.rho(tau_far + sign * 0.2 * span) ** 2)

    base_n = 0 if base == "point" else 1
    c_base = span / a
    m = base_n + rank
    num_charts = 1 if base == "point" else 2

    def make_entries(cid):
        if bundle == "trivial":
            def entries(zl):
                return [[1.0 if bb == cc else 0.0 for cc in range(rank)]
                        for bb in range(rank)]
        else:
            def entries(zl):
                z = zl[0]
                return [[z * z.conj() + 1.0]]
        return entries

    bcharts = []
    for cid in range(num_charts):
        bchart = ComplexChart(base_n, label="base%d" % cid,
                              domain_radius=DOMAIN_RADIUS)
        bcharts.append(HermitianBundleChart(bchart, rank, make_entries(cid),
                                            label="%s%d" % (bundle, cid)))

    def rho2_jet(cid, zs):
        zbase, s = zs[:base_n], zs[base_n:]
        gam = bcharts[cid].entries(zbase)
        acc = None
        for bb in range(rank):
            for cc in range(rank):
                term = gam[bb][cc] * s[bb] * s[cc].conj()
                acc = term if acc is None else acc + term
        if isinstance(acc, CJet):
            return acc.re
        return acc

    def rho2_value(cid, x):
        z = real_to_complex_vector(np.asarray(x, dtype=float))
        gam = bcharts[cid].gamma_value(x[:2 * base_n])
        s = z[base_n:]
        return float(np.real(s @ gam @ np.conj(s)))

    charts = [ComplexChart(m, label="bd%d" % cid, domain_radius=DOMAIN_RADIUS)
              for cid in range(num_charts)]

    def make_potential(cid):
        chart = charts[cid]

        def potential(point, order):
            zs = chart.seed_complex(point, order)
            r2 = rho2_jet(cid, zs)
            K = r2.compose(list(sol.f_derivs(r2.value, order)))
            if base_n:
                K = K + c_base * jet_log(1.0 + zs[0].abs2())
            return K
        return potential

    pcharts = [PotentialChart(charts[cid], make_potential(cid), label="bd%d" % cid)
               for cid in range(num_charts)]

    def s_transition(z, s):
        if bundle == "trivial":
            return list(s)
        return [z * s[0]]

    atlas = _BundleAtlas(pcharts, base_n, rank, rho2_value, s_transition, t_cap)

    u_val = -sign * a
    u_diag = []
    for cid in range(num_charts):
        d = np.zeros(m)
        d[base_n:] = u_val
        u_diag.append(d)

    def tau_fn(cid, x):
        return float(sol.tau_of_t(rho2_value(cid, x)))

    def tau_jet_fn(cid, x, order):
        zs = charts[cid].seed_complex(x, order)
        r2 = rho2_jet(cid, zs)
        return _compose_coeffs(r2, sol.tau_taylor_in_t(r2.value, order))

    def base_sub_potential(point, order):
        seeds = ComplexChart(base_n).seed_complex(point, order)
        S = Jet.constant(seeds[0].re.space, 1.0)
        for cz in seeds:
            S = S + cz.abs2()
        return c_base * jet_log(S)

    zero_charts = {cid: tuple(range(base_n, m)) for cid in range(num_charts)}
    zero_subs = {cid: base_sub_potential for cid in range(num_charts)} if base_n else {}
    zero_section = CriticalSetModel(sign, base_n, tau_near, zero_charts, m,
                                    zero_subs, label="zero-section")
    boundary = CriticalSetModel(-sign, base_n + rank - 1, tau_far, {}, m,
                                label="projective-boundary")

    d_near, d_far = base_n, base_n + rank - 1
    meta = dict(m=m, a=a, q=base_n, tau_minus=tau_minus, tau_plus=tau_plus)
    if sign > 0:
        meta.update(d_plus=d_near, d_minus=d_far)
    else:
        meta.update(d_plus=d_far, d_minus=d_near)
    meta.update(k_plus=m - 1 - meta["d_minus"], k_minus=m - 1 - meta["d_plus"])
    extras = dict(base=base, bundle=bundle, rank=rank, base_n=base_n,
                  sign=sign, c_base=c_base, bundle_charts=bcharts,
                  rho2_value=rho2_value, t_cap=t_cap, t_box=t_box,
                  fiber_box=math.sqrt(t_box), solution=sol)
    spec = "bundle:base=%s,kind=%s" % (base, "taut" if bundle == "taut" else "trivial")
    t = TripleInstance("bundle", spec, atlas, profile, u_diag, tau_fn, meta,
                       tau_jet_fn=tau_jet_fn,
                       sigma_plus=zero_section if sign > 0 else boundary,
                       sigma_minus=boundary if sign > 0 else zero_section,
                       extras=extras)
    t._solutions[sign] = sol
    _audit_bundle_positivity(t)
    return t


def _audit_bundle_positivity(t, samples=40):
    """The stacked potential must stay a metric out to the sampling cap."""
    for cid, x in t.sample_points(samples, seed=11, q_min=0.0):
        t.atlas.metric_value(cid, x)   # raises if not positive definite


def bundle_pairing(t, cid, x, za, zb):
    """Fiber Hermitian product <za, zb> at the base point under x."""
    gam = t.extras["bundle_charts"][cid].gamma_value(x[:2 * t.extras["base_n"]])
    return complex(np.asarray(za) @ gam @ np.conj(np.asarray(zb)))


def bundle_frame(t, cid, x):
    """Radial, fiber-complement and horizontal-lift frames at a bundle point.

    Returns a dict of real coordinate vectors: "radial" is the pair
    (xi, J xi) spanning the fiber radial plane, "fiber" the Hermitian
    complement of xi inside the fiber, "horizontal" the connection lifts of
    the base coordinate directions (base vector minus Omega contracted with
    the fiber point).
    """
    base_n = t.extras["base_n"]
    rank = t.extras["rank"]
    bchart = t.extras["bundle_charts"][cid]
    z = real_to_complex_vector(np.asarray(x, dtype=float))
    s = z[base_n:]

    def full(base_part, fiber_part):
        vec = np.zeros(t.n, dtype=complex)
        vec[:base_n] = base_part
        vec[base_n:] = fiber_part
        return _interleave(vec)

    out = {"radial": [full(0, s), full(0, 1j * s)], "fiber": [], "horizontal": []}
    gam = bchart.gamma_value(x[:2 * base_n])
    ss = complex(s @ gam @ np.conj(s))
    basis = [np.eye(rank, dtype=complex)[j] for j in range(rank)]
    overlaps = [abs(e @ gam @ np.conj(s)) for e in basis]
    drop = int(np.argmax(overlaps))
    for j in range(rank):
        if j == drop:
            continue
        e = basis[j]
        proj = (e @ gam @ np.conj(s)) / ss
        eta = e - proj * s
        out["fiber"].extend([full(0, eta), full(0, 1j * eta)])
    if base_n:
        omega, _ = chern_connection(bchart, x[:2 * base_n])
        for lam in range(base_n):
            ebase = np.eye(base_n, dtype=complex)[lam]
            fib = -(s @ omega[lam])
            out["horizontal"].extend([full(ebase, fib), full(1j * ebase, 1j * fib)])
    return out


# ---------------------------------------------------------------------------
# projections and the normal-bundle chart


def _flow_to_end(t, cid, x, sign, q_stop=Q_STOP):
    """Ride the gradient line into a critical set.

    Returns (chart, endpoint, unit direction of travel at the endpoint).
    The stop functional is the rate of change of tau along the path. It
    crosses zero transversally exactly at the critical passage (any
    positional functional only dips below a threshold inside a window far
    narrower than an integrator step), so the event root-finder lands on
    the set itself.
    """
    g = t.atlas.metric_value(cid, x)
    v = t.v_field(cid, x)
    qq = float(v @ g @ v)
    if qq < q_stop:
        raise ValueError("point is already on a critical set")
    v0 = sign * v / math.sqrt(qq)

    def stop_fn(c, xx, xdot, aux):
        gg = t.atlas.metric_value(c, xx)
        return sign * float(t.v_field(c, xx) @ gg @ xdot)

    t_max = t.solution(sign).delta + 1.0
    path = integrate_geodesic(t.atlas, cid, x, v0, t_max, stop=(stop_fn, -1))
    if path.stopped != "stop":
        raise RuntimeError("gradient flow missed the critical set (%s)" % path.stopped)
    cid_e, x_e, xdot_e, _ = path.end_state()
    return cid_e, x_e, xdot_e


def project_pm(t, x, sign, method="closed"):
    """Nearest point on the critical set of the given sign.

    x is a (chart, point) pair. method "closed" uses the per-family closed
    form (orthogonal projection in homogeneous data); "flow" integrates the
    gradient line. The two agree to well under 1e-6 away from the far set.
    """
    cid, xr = x
    xr = np.asarray(xr, dtype=float)
    sigma = t.critical(sign)
    if not sigma.reachable:
        raise ValueError("the sign=%+d set is a boundary at infinity" % sign)
    if sigma.contains(cid, xr):
        return cid, xr.copy()
    if method == "flow":
        cid_y, y, _ = _flow_to_end(t, cid, xr, sign)
        return cid_y, y
    if method != "closed":
        raise ValueError("method must be 'closed' or 'flow'")
    if cid in sigma.charts:
        return cid, sigma.chart_project(cid, xr)
    # move to a chart that carries the set, with the best-conditioned pivot
    z = real_to_complex_vector(xr)
    if t.kind in ("cp", "modified"):
        hom = t.atlas._hom(cid, z)
        candidates = [(abs(hom[j]), j) for j in sigma.charts]
        best = max(candidates)[1]
        if max(candidates)[0] < 1e-12:
            raise ValueError("projection undefined on the opposite critical set")
        moved = t.atlas.move_point(cid, xr, best)
        return best, sigma.chart_project(best, moved)
    if t.kind == "grassmannian":
        M = t.atlas.frame_value(cid, z)
        best, vol = None, 0.0
        for j in sigma.charts:
            d = abs(np.linalg.det(M[list(t.extras["subsets"][j]), :]))
            if d > vol:
                best, vol = j, d
        if best is None or vol < 1e-12:
            raise ValueError("projection undefined on the opposite critical set")
        moved = t.atlas.move_point(cid, xr, best)
        return best, sigma.chart_project(best, moved)
    raise ValueError("no closed-form projection for kind %r" % t.kind)


def phi_map(t, y, xi, sign):
    """Geodesic chart of the normal bundle: shoot from y along xi.

    y is a (chart, point) pair on the critical set, xi a real chart vector
    normal to it. The arc length is the profile's sigma at rho = |xi|.
    """
    cid, yr = y
    yr = np.asarray(yr, dtype=float)
    xi = np.asarray(xi, dtype=float)
    g = t.atlas.metric_value(cid, yr)
    rho = math.sqrt(float(xi @ g @ xi))
    if rho == 0.0:
        return cid, yr.copy()
    sigma = t.solution(sign).sigma_of_rho(rho)
    path = integrate_geodesic(t.atlas, cid, yr, xi / rho, sigma)
    if path.stopped not in ("t_max",):
        raise RuntimeError("normal geodesic left the atlas (%s)" % path.stopped)
    cid_x, x, _, _ = path.end_state()
    return cid_x, x


def phi_inverse(t, x, sign):
    """Invert phi_map: ride the gradient line home and rescale the direction."""
    cid, xr = x
    xr = np.asarray(xr, dtype=float)
    sigma = t.critical(sign)
    if not sigma.reachable:
        raise ValueError("the sign=%+d set is a boundary at infinity" % sign)
    if sigma.contains(cid, xr):
        return (cid, xr.copy()), np.zeros_like(xr)
    rho = float(t.solution(sign).rho(t.tau(cid, xr)))
    cid_y, y, direction = _flow_to_end(t, cid, xr, sign)
    return (cid_y, y), -rho * direction


def point_projector(t, cid, x):
    """Chart-independent fingerprint of a point, for cross-chart comparison.

    Projective and Grassmannian points become the orthogonal projector onto
    their span; bundle points become (base projector or base value, fiber
    vector moved to chart 0).
    """
    x = np.asarray(x, dtype=float)
    z = real_to_complex_vector(x)
    if t.kind in ("cp", "modified"):
        hom = t.atlas._hom(cid, z)
        hom = hom / np.linalg.norm(hom)
        return np.outer(hom, np.conj(hom))
    if t.kind == "grassmannian":
        M = t.atlas.frame_value(cid, z)
        qm, _ = np.linalg.qr(M)
        return qm @ qm.conj().T
    x0 = t.atlas.move_point(cid, x, 0)
    return x0


def chart_distance(t, p, q):
    """Distance between two (chart, point) pairs through the fingerprint."""
    if t.kind == "bundle":
        moved = t.atlas.move_point(q[0], np.asarray(q[1], dtype=float), p[0])
        return float(np.max(np.abs(np.asarray(p[1], dtype=float) - moved)))
    fp = point_projector(t, p[0], p[1])
    fq = point_projector(t, q[0], q[1])
    return float(np.max(np.abs(fp - fq)))


# ---------------------------------------------------------------------------
# flag chains


def _orth(cols, tol=1e-12):
    cols = np.asarray(cols, dtype=complex)
    if cols.ndim == 1:
        cols = cols[:, None]
    q, r = np.linalg.qr(cols)
    keep = np.abs(np.diag(r)) > tol * max(1.0, float(np.abs(r).max()))
    return q[:, keep]

def _subspace_eq(A, B, tol=1e-9):
    A, B = _orth(A), _orth(B)
    if A.shape[1] != B.shape[1]:
        return False
    if A.shape[1] == 0:
        return True
    s = np.linalg.svd(A.conj().T @ B, compute_uv=False)
    return bool(s.min() > 1.0 - tol)


def _intersection(A, B, tol=1e-10):
    if A.shape[1] == 0 or B.shape[1] == 0:
        return A[:, :0]
    u, s, vh = np.linalg.svd(A.conj().T @ B)
    cols = [A @ u[:, i] for i in range(len(s)) if s[i] > 1.0 - tol]
    if not cols:
        return A[:, :0]
    return _orth(np.stack(cols, axis=1))


def _complement_within(D, A):
    """Orthocomplement of D inside span(A)."""
    if D.shape[1] == 0:
        return A
    resid = A - D @ (D.conj().T @ A)
    return _orth(resid)


def _flag_eq(f, g, tol=1e-9):
    return _subspace_eq(f[0], g[0], tol) and _subspace_eq(f[1], g[1], tol)


def _check_flag(W, Wp, what):
    if W.shape[0] != Wp.shape[0]:
        raise ValueError("%s: ambient dimensions differ" % what)
    if Wp.shape[1] != W.shape[1] - 1:
        raise ValueError("%s: expected dims (k, k-1), got (%d, %d)"
                         % (what, W.shape[1], Wp.shape[1]))
    if Wp.shape[1] == 0:
        return
    resid = Wp - W @ (W.conj().T @ Wp)
    if np.abs(resid).max() > 1e-8:
        raise ValueError("%s: the smaller space is not contained in the larger" % what)


def flag_chain(start, end):
    """Connect two flags by steps that fix either the large or small space.

    Flags are pairs (W, W') of orthonormal-column arrays with W' a
    hyperplane of W. Consecutive chain entries share W or share W'; each
    macro step strictly increases dim(W_j intersect W_end). Endpoints are
    returned as given.
    """
    W0, W0p = (_orth(start[0]), _orth(start[1]))
    W, Wp = (_orth(end[0]), _orth(end[1]))
    _check_flag(W0, W0p, "start")
    _check_flag(W, Wp, "end")
    k = W.shape[1]
    chain = [(start[0], start[1])]
    A, Ap = W0, W0p
    guard = 0
    while not _subspace_eq(A, W):
        guard += 1
        if guard > k + 1:
            raise RuntimeError("flag chain failed to make progress")
        D = _intersection(A, W)
        C = _complement_within(D, A)
        App = _orth(np.concatenate([D, C[:, :k - 1 - D.shape[1]]], axis=1))
        if not _subspace_eq(App, Ap):
            chain.append((A, App))
        resid = W - App @ (App.conj().T @ W)
        norms = np.linalg.norm(resid, axis=0)
        xcol = resid[:, int(np.argmax(norms))]
        Anew = _orth(np.concatenate([App, (xcol / np.linalg.norm(xcol))[:, None]], axis=1))
        chain.append((Anew, App))
        A, Ap = Anew, App
    # the large spaces agree now; at most one share-W step reaches the target
    if not _flag_eq(chain[-1], (W, Wp)):
        chain.append((end[0], end[1]))
    return chain


# ---------------------------------------------------------------------------
# registry


def parse_triple_spec(spec):
    """Split "family:key=val,..." into a family name and parameter dict."""
    family, _, rest = spec.partition(":")
    family = family.strip()
    if family not in ("cp", "gr", "bundle"):
        raise ValueError("unknown triple family %r" % family)
    params = {}
    for kv in rest.split(","):
        kv = kv.strip()
        if not kv:
            continue
        if "=" not in kv:
            raise ValueError("malformed parameter %r in %r" % (kv, spec))
        key, val = kv.split("=", 1)
        params[key.strip()] = val.strip()
    return family, params


def _int_param(params, key, spec):
    try:
        return int(params[key])
    except KeyError:
        raise ValueError("spec %r is missing %r" % (spec, key)) from None
    except ValueError:
        raise ValueError("spec %r has a non-integer %r" % (spec, key)) from None


def make_triple(spec, profile=None):
    """Build a catalog entry from its spec string."""
    family, params = parse_triple_spec(spec)
    if family == "cp":
        return make_cp_triple(_int_param(params, "n", spec),
                              _int_param(params, "l", spec), profile)
    if family == "gr":
        if profile is not None:
            raise ValueError("the Grassmannian profile is fixed by the geometry")
        return make_grassmannian_triple(_int_param(params, "n", spec),
                                        _int_param(params, "k", spec))
    base = params.get("base")
    kind = params.get("kind")
    if base is None or kind is None:
        raise ValueError("bundle specs need base= and kind=: %r" % spec)
    rank = int(params["r"]) if "r" in params else None
    sign = int(params.get("sign", "+1"))
    return make_bundle_triple(base, "taut" if kind == "taut" else kind,
                              profile, sign=sign, rank=rank)


def catalog_entries():
    """Spec strings and integer metadata for every built-in entry."""
    out = []
    for spec in CATALOG_SPECS:
        t = make_triple(spec)
        out.append((spec, t.kind, dict(t.meta)))
    return out
