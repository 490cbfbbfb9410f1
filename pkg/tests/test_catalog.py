"""Catalog constructions: metrics, tau, critical sets, projections, flags."""

import math

import numpy as np
import pytest

from conftest import get_sine_cp3, get_triple

from kahlerlab.catalog import (CATALOG_SPECS, catalog_entries, chart_distance,
                               chern_connection, curvature_pairing, flag_chain,
                               make_bundle_triple, make_cp_triple,
                               make_triple, parse_triple_spec, phi_inverse,
                               phi_map, project_pm)
from kahlerlab.charts import hermitian_form, real_to_complex_vector
from kahlerlab.riemann import gradient


def fd_gradient(fn, x, h=1e-6):
    return np.array([(fn(x + h * e) - fn(x - h * e)) / (2 * h)
                     for e in np.eye(len(x))])


# ---------------------------------------------------------------------------
# projective family


class TestCpTriple:
    def test_fs_metric_values(self):
        t = get_triple("cp:n=2,l=1")
        g0 = t.atlas.metric_value(0, np.zeros(2))
        assert np.allclose(g0, 2.0 * np.eye(2), atol=1e-13)
        x = np.array([0.5, -0.1])
        S = 1.0 + 0.5 ** 2 + 0.1 ** 2
        assert np.allclose(t.atlas.metric_value(0, x), 2.0 / S ** 2 * np.eye(2),
                           atol=1e-12)

    def test_metadata(self):
        t = get_triple("cp:n=3,l=1")
        assert (t.meta["m"], t.meta["d_plus"], t.meta["d_minus"], t.meta["q"]) \
            == (2, 0, 1, 0)
        # plus-family directions stay nonzero at the low end and span the
        # non-radial normals there, so k+ = m - 1 - d- (and crosswise)
        assert (t.meta["k_plus"], t.meta["k_minus"]) == (0, 1)
        t2 = get_triple("cp:n=4,l=2")
        assert (t2.meta["m"], t2.meta["d_plus"], t2.meta["d_minus"]) == (3, 1, 1)
        assert t2.meta["d_plus"] + t2.meta["d_minus"] == t2.meta["m"] - 1

    def test_tau_closed_form(self):
        t = get_triple("cp:n=3,l=1")
        # chart 1 (outside L): tau = |w_0|^2 / (1 + |w|^2), coordinate 0 is the L slot
        x = np.array([0.3, 0.4, -0.2, 0.1])
        z = real_to_complex_vector(x)
        expect = abs(z[0]) ** 2 / (1.0 + np.sum(np.abs(z) ** 2))
        assert abs(t.tau(1, x) - expect) < 1e-14

    def test_tau_cross_chart(self):
        t = get_triple("cp:n=3,l=2")
        x = np.array([1.3, 0.4, -0.9, 0.6])
        for to in range(1, 3):
            moved = t.atlas.move_point(0, x, to)
            assert abs(t.tau(0, x) - t.tau(to, moved)) < 1e-13

    def test_gradient_is_v(self):
        t = get_triple("cp:n=3,l=1")
        for cid, x in t.sample_points(8, seed=1):
            mj = t.metric(cid, x)
            got = gradient(mj, t.tau_jet(cid, x).grad())
            assert np.max(np.abs(got - t.v_field(cid, x))) < 1e-12

    def test_q_product_law(self):
        t = get_triple("cp:n=4,l=2")
        for cid, x in t.sample_points(6, seed=2):
            tau = t.tau(cid, x)
            assert abs(t.q_value(cid, x) - 2.0 * tau * (1.0 - tau)) < 1e-12

    def test_rehome_jacobian(self):
        t = get_triple("cp:n=3,l=1")
        x = np.array([2.6, 0.1, 0.2, -0.4])
        moved = t.atlas.rehome(0, x)
        assert moved is not None
        to, new_x, jac = moved
        fd = np.zeros_like(jac)
        h = 1e-6
        for j in range(len(x)):
            e = np.zeros(len(x))
            e[j] = h
            fd[:, j] = (t.atlas.move_point(0, x + e, to)
                        - t.atlas.move_point(0, x - e, to)) / (2 * h)
        assert np.max(np.abs(jac - fd)) < 1e-6
        back = t.atlas.move_point(to, new_x, 0)
        assert np.max(np.abs(back - x)) < 1e-12

    def test_critical_sets(self):
        t = get_triple("cp:n=3,l=1")
        sp, sm = t.sigma_plus, t.sigma_minus
        assert (sp.dim, sm.dim) == (0, 1)
        assert set(sp.charts) == {0} and set(sm.charts) == {1, 2}
        assert sp.contains(0, np.zeros(4))
        assert abs(t.tau(0, np.zeros(4)) - 1.0) < 1e-14
        rng = np.random.default_rng(0)
        cid, y = sm.random_point(rng)
        assert sm.contains(cid, y)
        assert abs(t.tau(cid, y) - 0.0) < 1e-14
        sub = sm.induced_metric(cid, np.array([0.2, -0.3]))
        assert np.all(np.linalg.eigvalsh(sub.g) > 0)
        H = sm.normal_hermitian(cid, y, t.metric(cid, y))
        assert np.all(np.linalg.eigvalsh(H) > 0)


class TestModifiedCp:
    def test_kind_and_a(self):
        t = get_sine_cp3()
        assert t.kind == "modified"
        assert abs(t.meta["a"] - math.pi / 2.0) < 1e-12

    def test_q_matches_target(self):
        t = get_sine_cp3()
        for cid, x in t.sample_points(10, seed=3):
            tau = t.tau(cid, x)
            assert abs(t.q_value(cid, x) - math.sin(math.pi * tau)) < 1e-10

    def test_gradient_is_v(self):
        t = get_sine_cp3()
        for cid, x in t.sample_points(5, seed=4):
            mj = t.metric(cid, x)
            got = gradient(mj, t.tau_jet(cid, x).grad())
            assert np.max(np.abs(got - t.v_field(cid, x))) < 1e-10

    def test_tau_jet_fd(self):
        t = get_sine_cp3()
        cid, x = t.sample_points(1, seed=5)[0]
        fd = fd_gradient(lambda xx: t.tau(cid, xx), x)
        assert np.max(np.abs(t.tau_jet(cid, x).grad() - fd)) < 1e-6

    def test_guards(self):
        t = get_sine_cp3()
        rep = t.extras["modification"].guards()
        assert rep["monotone_ok"] and rep["fixed_end_ok"]


# ---------------------------------------------------------------------------
# Grassmannian family


def plucker_tau(t, cid, x):
    """Independent tau: top-left entry of the orthogonal projector."""
    z = real_to_complex_vector(np.asarray(x, dtype=float))
    M = t.atlas.frame_value(cid, z)
    P = M @ np.linalg.inv(M.conj().T @ M) @ M.conj().T
    return float(P[0, 0].real)


class TestGrassmannian:
    def test_metadata(self):
        t = get_triple("gr:n=4,k=2")
        m = t.meta
        assert (m["m"], m["d_plus"], m["d_minus"], m["q"]) == (4, 2, 2, 1)
        assert (m["k_plus"], m["k_minus"]) == (1, 1)
        assert m["d_plus"] + m["d_minus"] == m["m"] - 1 + m["q"]

    def test_calibrated_slope(self):
        t = get_triple("gr:n=4,k=2")
        assert abs(t.meta["a"] - 1.0) < 1e-8

    def test_tau_against_projector(self):
        t = get_triple("gr:n=4,k=2")
        for cid, x in t.sample_points(10, seed=6):
            assert abs(t.tau(cid, x) - plucker_tau(t, cid, x)) < 1e-9

    def test_tau_cross_chart(self):
        t = get_triple("gr:n=4,k=2")
        cid, x = t.sample_points(1, seed=7)[0]
        for to in range(t.num_charts):
            if to == cid:
                continue
            try:
                moved = t.atlas.move_point(cid, x, to)
            except ZeroDivisionError:
                continue
            if np.max(np.abs(moved)) > 50:
                continue
            assert abs(t.tau(cid, x) - t.tau(to, moved)) < 1e-8

    def test_gradient_is_v(self):
        t = get_triple("gr:n=4,k=2")
        cid, x = t.sample_points(1, seed=8)[0]
        g = t.atlas.metric_value(cid, x)
        fd = fd_gradient(lambda xx: t.tau(cid, xx), x, h=1e-5)
        got = np.linalg.solve(g, fd)
        assert np.max(np.abs(got - t.v_field(cid, x))) < 1e-7

    def test_critical_sets(self):
        t = get_triple("gr:n=4,k=2")
        assert t.sigma_plus.dim == 2 and t.sigma_minus.dim == 2
        rng = np.random.default_rng(1)
        for sigma, val in ((t.sigma_plus, 1.0), (t.sigma_minus, 0.0)):
            cid, y = sigma.random_point(rng)
            assert abs(t.tau(cid, y) - val) < 1e-9
            sub = sigma.induced_metric(cid, np.array([0.1, -0.2, 0.3, 0.05]))
            assert np.all(np.linalg.eigvalsh(sub.g) > 0)

    def test_q_product_law(self):
        t = get_triple("gr:n=4,k=2")
        for cid, x in t.sample_points(5, seed=9):
            tau = t.tau(cid, x)
            q = t.q_value(cid, x)
            assert abs(q - 2.0 * t.meta["a"] * tau * (1.0 - tau)) < 1e-8

    def test_caps(self):
        with pytest.raises(ValueError):
            make_triple("gr:n=7,k=2")
        with pytest.raises(ValueError):
            make_triple("gr:n=4,k=0")


# ---------------------------------------------------------------------------
# bundle family


class TestBundles:
    def test_point_base_round_metric(self):
        # rank-r trivial bundle over a point with the product-law profile is
        # the round potential log(1 + |s|^2)
        t = get_triple("bundle:base=point,kind=trivial")
        for cid, x in t.sample_points(6, seed=10):
            r2 = t.extras["rho2_value"](cid, x)
            K = t.atlas.pcharts[cid].potential_jet(x, 2)
            assert abs(K.value - math.log1p(r2)) < 1e-10
            assert abs(t.tau(cid, x) - 1.0 / (1.0 + r2)) < 1e-10

    def test_q_profile_law(self):
        for spec in ("bundle:base=cp1,kind=trivial", "bundle:base=cp1,kind=taut"):
            t = get_triple(spec)
            for cid, x in t.sample_points(5, seed=11):
                tau = t.tau(cid, x)
                assert abs(t.q_value(cid, x) - t.profile.q(tau)) < 1e-9

    def test_trivial_horizontal_is_pullback(self):
        # flat fiber metric: the base block of g is exactly the scaled base metric
        t = get_triple("bundle:base=cp1,kind=trivial")
        c = t.extras["c_base"]
        for cid, x in t.sample_points(5, seed=12):
            g = t.atlas.metric_value(cid, x)
            S = 1.0 + x[0] ** 2 + x[1] ** 2
            assert np.allclose(g[:2, :2], 2.0 * c / S ** 2 * np.eye(2), atol=1e-12)
            assert np.max(np.abs(g[:2, 2:])) < 1e-12

    def test_rho2_chart_invariant(self):
        t = get_triple("bundle:base=cp1,kind=taut")
        x = np.array([1.4, -0.5, 0.3, 0.2])
        moved = t.atlas.move_point(0, x, 1)
        r0 = t.extras["rho2_value"](0, x)
        r1 = t.extras["rho2_value"](1, moved)
        assert abs(r0 - r1) < 1e-12
        assert abs(t.tau(0, x) - t.tau(1, moved)) < 1e-12

    def test_gradient_is_v(self):
        t = get_triple("bundle:base=cp1,kind=taut")
        for cid, x in t.sample_points(4, seed=13):
            mj = t.metric(cid, x)
            got = gradient(mj, t.tau_jet(cid, x).grad())
            assert np.max(np.abs(got - t.v_field(cid, x))) < 1e-9

    def test_zero_section_model(self):
        t = get_triple("bundle:base=cp1,kind=taut")
        sign = t.extras["sign"]
        near = t.critical(sign)
        far = t.critical(-sign)
        assert near.reachable and not far.reachable
        assert near.dim == 1 and far.dim == 1
        y = np.array([0.4, 0.1, 0.0, 0.0])
        assert near.contains(0, y)
        assert abs(t.tau(0, y) - (1.0 if sign > 0 else 0.0)) < 1e-12

    def test_invalid_profile_rejected(self):
        # any profile that validates gives a positive bundle metric (the
        # fiber blocks are f' and (t f')' = q/(2at), both positive), so the
        # constructor's positivity audit is a safety net; the reachable
        # rejection is of a profile with an interior sign change
        from kahlerlab.profiles import Profile
        bad = Profile.from_expr("2*tau*(1-tau)*(1-4.8*tau*(1-tau))", 0.0, 1.0)
        with pytest.raises(ValueError):
            make_bundle_triple("cp1", "taut", bad, sign=-1)

    def test_fiber_rank_override(self):
        t = make_triple("bundle:base=point,kind=trivial,r=3")
        assert t.extras["rank"] == 3 and t.meta["m"] == 3


class TestChernConnection:
    def test_flat(self):
        t = get_triple("bundle:base=cp1,kind=trivial")
        b = t.extras["bundle_charts"][0]
        om, rd = chern_connection(b, np.array([0.3, 0.7]))
        assert np.max(np.abs(om)) < 1e-14
        assert np.max(np.abs(rd)) < 1e-14

    def test_taut_closed_forms(self):
        t = get_triple("bundle:base=cp1,kind=taut")
        b = t.extras["bundle_charts"][0]
        for z in (0.4 - 0.3j, -0.2 + 0.9j):
            pt = np.array([z.real, z.imag])
            om, rd = chern_connection(b, pt)
            s2 = 1.0 + abs(z) ** 2
            assert abs(om[0, 0, 0] - np.conj(z) / s2) < 1e-13
            assert abs(rd[0, 0, 0, 0] - 1.0 / s2) < 1e-13

    def test_connection_identity(self):
        # Omega contracted with gamma reproduces d gamma (finite differences)
        t = get_triple("bundle:base=cp1,kind=taut")
        b = t.extras["bundle_charts"][0]
        pt = np.array([0.5, -0.2])
        om, _ = chern_connection(b, pt)
        h = 1e-6
        dx = (b.gamma_value(pt + [h, 0]) - b.gamma_value(pt - [h, 0])) / (2 * h)
        dy = (b.gamma_value(pt + [0, h]) - b.gamma_value(pt - [0, h])) / (2 * h)
        dgamma = 0.5 * (dx - 1j * dy)
        assert np.max(np.abs(om[0] @ b.gamma_value(pt) - dgamma)) < 1e-9

    def test_curvature_hermitian_symmetry(self):
        t = get_triple("bundle:base=cp1,kind=taut")
        b = t.extras["bundle_charts"][0]
        _, rd = chern_connection(b, np.array([0.3, 0.6]))
        p, r = rd.shape[0], rd.shape[2]
        for lam in range(p):
            for mu in range(p):
                assert np.max(np.abs(rd[lam, mu] - rd[mu, lam].conj().T)) < 1e-13

    def test_pairing_anchor(self):
        t = get_triple("bundle:base=cp1,kind=taut")
        b = t.extras["bundle_charts"][0]
        z = 0.4 - 0.3j
        _, rd = chern_connection(b, np.array([z.real, z.imag]))
        xi = np.array([1.0 + 0j])
        got = curvature_pairing(rd, np.array([1.0 + 0j]), np.array([1j]), xi)
        assert abs(got + 2.0 / (1.0 + abs(z) ** 2)) < 1e-13


# ---------------------------------------------------------------------------
# projections and the normal-bundle chart


PROJ_SPECS = ("cp:n=3,l=1", "cp:n=3,l=2", "gr:n=4,k=2")


class TestProjectPm:
    @pytest.mark.parametrize("spec", PROJ_SPECS)
    def test_dual_route(self, spec):
        t = get_triple(spec)
        for sign in (+1, -1):
            for cid, x in t.sample_points(3, seed=14):
                pc = project_pm(t, (cid, x), sign, method="closed")
                pf = project_pm(t, (cid, x), sign, method="flow")
                assert chart_distance(t, pc, pf) < 1e-6
                sigma = t.critical(sign)
                assert sigma.contains(pc[0], pc[1], tol=1e-10)
                tau_val = 1.0 if sign > 0 else 0.0
                assert abs(t.tau(*pc) - tau_val) < 1e-8

    def test_fixed_points(self):
        t = get_triple("cp:n=3,l=1")
        rng = np.random.default_rng(2)
        cid, y = t.sigma_minus.random_point(rng)
        out = project_pm(t, (cid, y), -1)
        assert out[0] == cid and np.max(np.abs(out[1] - y)) < 1e-14

    def test_bundle_projection(self):
        t = get_triple("bundle:base=cp1,kind=taut")
        sign = t.extras["sign"]
        for cid, x in t.sample_points(3, seed=15):
            pc = project_pm(t, (cid, x), sign, method="closed")
            pf = project_pm(t, (cid, x), sign, method="flow")
            assert chart_distance(t, pc, pf) < 1e-6
        with pytest.raises(ValueError):
            project_pm(t, (0, x), -sign)


class TestPhiMap:
    @pytest.mark.parametrize("spec", PROJ_SPECS)
    def test_round_trip(self, spec):
        t = get_triple(spec)
        for sign in (+1, -1):
            for cid, x in t.sample_points(2, seed=16):
                y, xi = phi_inverse(t, (cid, x), sign)
                x2 = phi_map(t, y, xi, sign)
                assert chart_distance(t, (cid, x), x2) < 1e-8

    def test_tau_of_phi(self):
        t = get_triple("cp:n=3,l=1")
        rng = np.random.default_rng(3)
        sol = t.solution(+1)
        sigma = t.sigma_plus
        cid, y = sigma.random_point(rng)
        for scale in (0.1, 0.4, 0.9):
            xi = sigma.normal_vector(cid, scale * np.array([0.6 + 0.3j, -0.2 + 0.1j]))
            g = t.atlas.metric_value(cid, y)
            rho = math.sqrt(float(xi @ g @ xi))
            out = phi_map(t, (cid, y), xi, +1)
            assert abs(t.tau(*out) - sol.tau_of_rho(rho)) < 1e-6

    def test_projection_of_phi_returns_foot(self):
        t = get_triple("gr:n=4,k=2")
        rng = np.random.default_rng(4)
        sigma = t.sigma_plus
        cid, y = sigma.random_point(rng, box=0.5)
        xi = sigma.normal_vector(cid, np.array([0.5 - 0.1j, 0.3 + 0.2j]))
        out = phi_map(t, (cid, y), xi, +1)
        back = project_pm(t, out, +1, method="flow")
        assert chart_distance(t, (cid, y), back) < 1e-6

    def test_zero_vector(self):
        t = get_triple("cp:n=3,l=1")
        rng = np.random.default_rng(5)
        cid, y = t.sigma_minus.random_point(rng)
        out = phi_map(t, (cid, y), np.zeros(4), -1)
        assert out[0] == cid and np.max(np.abs(out[1] - y)) < 1e-14


# ---------------------------------------------------------------------------
# flag chains


def rand_flag(rng, n, k):
    W = np.linalg.qr(rng.standard_normal((n, k))
                     + 1j * rng.standard_normal((n, k)))[0]
    C = np.linalg.qr(rng.standard_normal((k, k - 1))
                     + 1j * rng.standard_normal((k, k - 1)))[0]
    return W, W @ C


def principal_gap(A, B):
    qa = np.linalg.qr(A)[0]
    qb = np.linalg.qr(B)[0]
    s = np.linalg.svd(qa.conj().T @ qb, compute_uv=False)
    return 1.0 - float(s.min())


def subspaces_equal(A, B, tol=1e-9):
    return A.shape[1] == B.shape[1] and (A.shape[1] == 0 or principal_gap(A, B) < tol)


def intersection_dim(A, B, tol=1e-7):
    if A.shape[1] == 0 or B.shape[1] == 0:
        return 0
    qa = np.linalg.qr(A)[0]
    qb = np.linalg.qr(B)[0]
    s = np.linalg.svd(qa.conj().T @ qb, compute_uv=False)
    return int(np.sum(s > 1.0 - tol))


class TestFlagChain:
    def test_identical_endpoints(self):
        rng = np.random.default_rng(6)
        f = rand_flag(rng, 4, 2)
        assert len(flag_chain(f, f)) == 1

    def test_shared_large_space(self):
        rng = np.random.default_rng(7)
        W = np.linalg.qr(rng.standard_normal((4, 2))
                         + 1j * rng.standard_normal((4, 2)))[0]
        f0 = (W, W @ np.array([[1.0], [0.0]]))
        f1 = (W, W @ np.array([[0.0], [1.0]]))
        ch = flag_chain(f0, f1)
        assert len(ch) == 2
        assert subspaces_equal(ch[0][0], ch[1][0])

    def test_bulk_random_pairs(self):
        rng = np.random.default_rng(8)
        max_len = 0
        for _ in range(1000):
            f0 = rand_flag(rng, 4, 2)
            f1 = rand_flag(rng, 4, 2)
            ch = flag_chain(f0, f1)
            max_len = max(max_len, len(ch))
            assert len(ch) <= 2 * 2 * 4
            # endpoints exactly as given
            assert ch[0][0] is f0[0] and ch[-1][1] is f1[1]
            prev_dim = None
            for (W, Wp) in ch:
                assert Wp.shape[1] == W.shape[1] - 1
                resid = Wp - W @ (W.conj().T @ Wp)
                assert np.abs(resid).max() < 1e-9
            for a, b in zip(ch, ch[1:]):
                share_w = subspaces_equal(a[0], b[0])
                share_wp = subspaces_equal(a[1], b[1])
                assert share_w or share_wp
            # macro steps strictly increase the overlap with the target
            dims = [intersection_dim(W, f1[0]) for W, _ in ch]
            assert dims[-1] == 2
            assert all(b >= a for a, b in zip(dims, dims[1:]))
        assert max_len <= 2 * 2 + 2

    def test_bad_flag_rejected(self):
        rng = np.random.default_rng(9)
        W = np.linalg.qr(rng.standard_normal((4, 2))
                         + 1j * rng.standard_normal((4, 2)))[0]
        other = np.linalg.qr(rng.standard_normal((4, 1))
                             + 1j * rng.standard_normal((4, 1)))[0]
        with pytest.raises(ValueError):
            flag_chain((W, other), (W, W[:, :1]))


# ---------------------------------------------------------------------------
# registry


class TestRegistry:
    def test_parse(self):
        fam, params = parse_triple_spec("cp:n=3,l=2")
        assert fam == "cp" and params == {"n": "3", "l": "2"}
        with pytest.raises(ValueError):
            parse_triple_spec("nope:n=1")
        with pytest.raises(ValueError):
            parse_triple_spec("cp:n")

    def test_all_specs_build(self):
        for spec in CATALOG_SPECS:
            t = get_triple(spec)
            assert t.spec == spec

    def test_metadata_identities(self):
        for spec in CATALOG_SPECS:
            m = get_triple(spec).meta
            assert m["d_plus"] + m["d_minus"] == m["m"] - 1 + m["q"]
            assert m["d_plus"] + m["d_minus"] >= m["m"] - 1
            assert m["m"] - 1 >= max(m["d_plus"], m["d_minus"]) >= 0
            assert min(m["d_plus"], m["d_minus"]) >= 0
            assert m["k_plus"] == m["m"] - 1 - m["d_minus"]
            assert m["k_minus"] == m["m"] - 1 - m["d_plus"]

    def test_bad_specs(self):
        for bad in ("cp:n=1,l=1", "cp:n=3,l=3", "zz:n=2", "cp:n=x,l=1",
                    "bundle:base=tor,kind=trivial", "bundle:base=cp1,kind=x"):
            with pytest.raises(ValueError):
                make_triple(bad)

    def test_gr_profile_fixed(self):
        from kahlerlab.profiles import Profile
        with pytest.raises(ValueError):
            make_triple("gr:n=4,k=2", Profile.fubini_study(0, 1, 2.0))
