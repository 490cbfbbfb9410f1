"""Complex charts and Kahler potentials.

Real coordinates are interleaved as (x1, y1, ..., xn, yn) with z_a = x_a + i y_a.
The complex structure acts blockwise per coordinate pair, sending d/dx_a to
d/dy_a. The metric normalization is g(d/dx_a, d/dx_a) = 2 K_{x_a x_a-bar}
style: for K = |z|^2 the metric is twice the identity.

``metric_from_potential`` turns a degree-4 jet of a potential at a point into
the metric together with its first and second coordinate derivatives, which is
exactly the data the curvature assembly consumes.
"""

import numpy as np

from .jets import CJet, Jet, JetSpace, jet_seed
from .riemann import MetricJet


class ComplexChart:
    """Coordinate bookkeeping for one chart of complex dimension n."""

    def __init__(self, n, label="chart", domain_radius=np.inf):
        self.n = int(n)
        self.dim = 2 * self.n
        self.label = label
        self.domain_radius = float(domain_radius)
        self.J = complex_structure_matrix(self.n)

    def in_domain(self, point):
        return bool(np.max(np.abs(point)) < self.domain_radius)

    def to_complex(self, point):
        point = np.asarray(point, dtype=float)
        return point[0::2] + 1j * point[1::2]

    def to_real(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.empty(2 * len(z))
        out[0::2] = z.real
        out[1::2] = z.imag
        return out

    def seed_complex(self, point, order):
        """Coordinate jets for z_1..z_n at a real coordinate point."""
        seeds = jet_seed(point, order)
        return [CJet(seeds[2 * a], seeds[2 * a + 1]) for a in range(self.n)]

    def __repr__(self):
        return "ComplexChart(n=%d, %r)" % (self.n, self.label)


def complex_structure_matrix(n):
    """Block matrix of the standard complex structure in interleaved coords."""
    J = np.zeros((2 * n, 2 * n))
    for a in range(n):
        J[2 * a + 1, 2 * a] = 1.0
        J[2 * a, 2 * a + 1] = -1.0
    return J


def real_to_complex_vector(w):
    w = np.asarray(w, dtype=float)
    return w[0::2] + 1j * w[1::2]


def complex_to_real_vector(zeta):
    zeta = np.asarray(zeta, dtype=complex)
    out = np.empty(2 * len(zeta))
    out[0::2] = zeta.real
    out[1::2] = zeta.imag
    return out


class PotentialChart:
    """A chart together with a Kahler potential on it.

    ``potential`` maps a real coordinate point and a jet order to the jet of
    the potential there. Optional ``domain`` refines the chart box.
    """

    def __init__(self, chart, potential, domain=None, label=None):
        self.chart = chart
        self.potential = potential
        self._domain = domain
        self.label = label if label is not None else chart.label

    def in_domain(self, point):
        if not self.chart.in_domain(point):
            return False
        if self._domain is not None:
            return bool(self._domain(point))
        return True

    def potential_jet(self, point, order):
        return self.potential(point, order)

    def __repr__(self):
        return "PotentialChart(%r)" % (self.label,)


def _tensor_tables(kjet, n):
    """Second, third and fourth partial arrays of a degree-4 potential jet."""
    dim = 2 * n
    sp = kjet.space
    t2 = np.zeros((dim, dim))
    t3 = np.zeros((dim, dim, dim))
    t4 = np.zeros((dim, dim, dim, dim))
    coeffs = kjet.coeffs
    fact = sp.factorial
    for r, alpha in enumerate(sp.indices):
        deg = int(sp.degree[r])
        if deg < 2:
            continue
        d = coeffs[r] * fact[r]
        if d == 0.0:
            continue
        vars_ = []
        for a, k in enumerate(alpha):
            vars_.extend([a] * k)
        if deg == 2:
            a, b = vars_
            t2[a, b] = d
            t2[b, a] = d
        elif deg == 3:
            from itertools import permutations
            for p in set(permutations(vars_)):
                t3[p] = d
        elif deg == 4:
            from itertools import permutations
            for p in set(permutations(vars_)):
                t4[p] = d
    return t2, t3, t4


def metric_from_potential(pchart, point, require_positive=True, order=4):
    """Metric 2-jet at a point from the chart potential.

    The raw Hessian of the potential is symmetrized against the complex
    structure, which extracts exactly the mixed-derivative part; adding any
    pluriharmonic function to the potential therefore leaves the result
    unchanged. Raises if the candidate metric is not positive definite,
    unless ``require_positive`` is False.

    ``order`` is the potential jet order: 4 gives the full curvature data,
    3 is enough for Christoffel symbols, 2 for metric values only.
    """
    chart = pchart.chart
    point = np.asarray(point, dtype=float)
    kjet = pchart.potential_jet(point, min(max(int(order), 2), 4))
    if kjet.num_vars != chart.dim:
        raise ValueError("potential jet has wrong number of variables")
    t2, t3, t4 = _tensor_tables(kjet, chart.n)
    J = chart.J
    # dg[c] and ddg[c,d] get the same J-symmetrization as g itself; below
    # the jet order they are None, never silently zero
    g = 0.5 * (t2 + J.T @ t2 @ J)
    dg = None
    ddg = None
    if kjet.order >= 3:
        dg = 0.5 * (t3 + np.einsum("ia,cij,jb->cab", J, t3, J))
    if kjet.order >= 4:
        ddg = 0.5 * (t4 + np.einsum("ia,cdij,jb->cdab", J, t4, J))
    if require_positive:
        w = np.linalg.eigvalsh(g)
        if w[0] <= 0.0:
            raise ValueError(
                "potential is not a Kahler potential at this point: "
                "smallest metric eigenvalue %.3e" % w[0])
    return MetricJet(g=g, dg=dg, ddg=ddg, point=point, chart=pchart)


def complex_gradient(cj):
    """Holomorphic partials (d/dz_1 .. d/dz_n) of a complex jet.

    Returns the pair (dz, dzbar) of length-n complex arrays with
    d/dz = (d/dx - i d/dy)/2 on interleaved real variables.
    """
    re = cj.re if isinstance(cj, CJet) else cj
    im = cj.im if isinstance(cj, CJet) else Jet.constant(cj.space, 0.0)
    gre = re.grad() + 1j * im.grad()
    dx, dy = gre[0::2], gre[1::2]
    return 0.5 * (dx - 1j * dy), 0.5 * (dx + 1j * dy)


def complex_mixed_hessian(cj):
    """Mixed second partials d^2/dz_a dzbar_b of a complex jet, as an n x n array."""
    re = cj.re if isinstance(cj, CJet) else cj
    im = cj.im if isinstance(cj, CJet) else Jet.constant(cj.space, 0.0)
    h = re.hess() + 1j * im.hess()
    hxx = h[0::2, 0::2]
    hxy = h[0::2, 1::2]
    hyx = h[1::2, 0::2]
    hyy = h[1::2, 1::2]
    return 0.25 * (hxx + hyy + 1j * (hxy - hyx))


def hermitian_form(metricjet):
    """Complex Hessian H with g(w, w') = 2 Re(zeta^T H conj(zeta')).

    Returns an n x n complex matrix built from the real metric blocks.
    """
    g = metricjet.g
    n = g.shape[0] // 2
    H = np.empty((n, n), dtype=complex)
    for a in range(n):
        for b in range(n):
            H[a, b] = 0.5 * (g[2 * a, 2 * b] + 1j * g[2 * a, 2 * b + 1])
    return H
