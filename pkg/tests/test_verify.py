"""Predicate layer: graders, the pointwise identity suite, eigenstructure."""

import math

import numpy as np
import pytest

from conftest import get_sine_cp3, get_triple

from kahlerlab import verify as V
from kahlerlab.catalog import CATALOG_SPECS, TripleAtlas, TripleInstance
from kahlerlab.charts import (ComplexChart, PotentialChart,
                              complex_structure_matrix)
from kahlerlab.jets import jet_seed
from kahlerlab.riemann import MetricJet

HALF_POINT = np.array([0.0, 0.0, 1.0, 0.0])   # |w2| = 1 in the first chart


def flat_line_triple():
    """One flat chart of complex dimension 1 with a zero gradient field.

    Only the pieces the scalar-candidate grader touches are populated; the
    gradient machinery runs entirely off the candidate jets.
    """
    def potential(point, order):
        jx, jy = jet_seed(point, order)
        return jx * jx + jy * jy

    class OneChart(TripleAtlas):
        def pick_chart(self, cid, x):
            return None

    atlas = OneChart([PotentialChart(ComplexChart(1, label="flat"), potential)])
    meta = dict(m=1, d_plus=0, d_minus=0, k_plus=0, k_minus=0, q=0,
                a=0.0, tau_minus=0.0, tau_plus=0.0)
    return TripleInstance("flat", "flat:c=1", atlas, None, [np.zeros(1)],
                          lambda cid, x: float(x[0]), meta)


def tau_power_candidate(triple, k):
    """Jet of tau^k as a scalar candidate, through the closed-form tau jet."""
    def fn(cid, x):
        tj = triple.tau_jet(cid, x, order=3)
        out = tj
        for _ in range(k - 1):
            out = out * tj
        return out
    return fn


# ---------------------------------------------------------------------------
# field context


class TestFieldContext:
    def test_defining_relations(self):
        t = get_triple("cp:n=3,l=1")
        for cid, x in t.sample_points(8, seed=1):
            ctx = V.FieldContext(t, cid, x, order=3)
            val = ctx.validate()
            assert max(val.values()) < 1e-12
            assert ctx.Q > 0

    def test_field_jacobians_reproduce_fields(self):
        t = get_triple("gr:n=4,k=2")
        for cid, x in t.sample_points(5, seed=2):
            Dv, Du = V.field_jacobians(t.u_diag[cid])
            assert np.allclose(Dv @ x, t.v_field(cid, x), atol=1e-14)
            assert np.allclose(Du @ x, t.u_field(cid, x), atol=1e-14)

    def test_perp_basis_orthonormal_and_transverse(self):
        t = get_triple("gr:n=4,k=2")
        cid, x = t.sample_points(1, seed=3)[0]
        ctx = V.FieldContext(t, cid, x, order=3)
        B = ctx.perp_basis()
        assert B.shape == (t.dim, t.dim - 2)
        assert np.allclose(B.T @ ctx.g @ B, np.eye(t.dim - 2), atol=1e-10)
        assert np.max(np.abs(B.T @ ctx.g @ ctx.v)) < 1e-10
        assert np.max(np.abs(B.T @ ctx.g @ ctx.u)) < 1e-10

    def test_gram_schmidt_drops_dependent_columns(self):
        g = np.diag([2.0, 3.0, 1.0])
        cols = np.array([[1.0, 2.0, 0.5], [0.0, 0.0, 1.0], [1.0, 2.0, 0.0]]).T
        B = V.gram_schmidt_g(cols.T, g)
        assert B.shape[1] == 2
        assert np.allclose(B.T @ g @ B, np.eye(2), atol=1e-12)


# ---------------------------------------------------------------------------
# predicate graders


class TestKahlerGrader:
    def test_accepts_potential_charts(self):
        for spec in ("cp:n=3,l=1", "gr:n=4,k=2"):
            rep = V.check_kahler(get_triple(spec), count=20, seed=1)
            assert rep.passed
            assert rep.details["worst"]["closed-form"] < 1e-10

    def test_flags_bumped_metric(self):
        # constant symmetric bump: derivatives untouched, so the two-form
        # stays closed while compatibility and parallelism both break
        t = get_triple("cp:n=3,l=1")

        def bump(cid, x):
            mj = t.metric(cid, x, order=3)
            g = mj.g.copy()
            g[0, 0] += 1e-3
            return MetricJet(g=g, dg=mj.dg, ddg=mj.ddg)

        rep = V.check_kahler(t, count=20, seed=1, metric_fn=bump)
        assert not rep.passed
        assert rep.details["worst"]["parallel-j"] > 1e-4
        assert rep.details["worst"]["compatibility"] > 1e-4
        assert rep.details["worst"]["closed-form"] < 1e-12

    def test_flat_chart_exact_zeros(self):
        mj = MetricJet(g=2.0 * np.eye(2), dg=np.zeros((2, 2, 2)),
                       ddg=np.zeros((2, 2, 2, 2)))
        fam = V.kahler_residuals(mj, complex_structure_matrix(1))
        assert all(r == 0.0 for r in fam.values())


class TestFieldGraders:
    def test_gradient_and_rotation_are_holomorphic(self):
        for spec in ("cp:n=3,l=1", "gr:n=4,k=2"):
            t = get_triple(spec)
            for f in ("v", "u"):
                rep = V.check_holomorphic(t, field=f, count=15, seed=2)
                assert rep.passed, rep.summary_line()

    def test_conjugate_linear_perturbation_fails(self):
        t = get_triple("cp:n=3,l=1")
        C = np.zeros((4, 4))
        for a in range(2):
            C[2 * a, 2 * a] = 1.0
            C[2 * a + 1, 2 * a + 1] = -1.0

        def w(cid, x):
            return t.v_field(cid, x) + 0.05 * (C @ np.asarray(x, float))

        rep = V.check_holomorphic(t, field=w, count=15, seed=2)
        assert not rep.passed
        assert rep.max_residual > 1e-3

    def test_rotation_is_killing_gradient_is_not(self):
        t = get_triple("cp:n=3,l=1")
        assert V.check_killing(t, field="u", count=15, seed=2).passed
        rep = V.check_killing(t, field="v", count=15, seed=2)
        assert not rep.passed
        assert rep.max_residual > 1e-2
        zero = V.check_killing(t, field="zero", count=15, seed=2)
        assert zero.passed and zero.max_residual == 0.0


class TestGeodesicGradient:
    def test_accepts_catalog_tau(self):
        rep = V.check_geodesic_gradient(get_triple("cp:n=2,l=1"),
                                        count=25, seed=4)
        assert rep.passed
        assert rep.details["acceleration"] < 1e-12
        assert rep.details["flags"] == []

    def test_critical_free_scalar_is_flagged(self):
        t = flat_line_triple()
        fn = lambda cid, x: jet_seed(np.asarray(x, float), 2)[0]
        pts = [(0, np.array([0.3, -0.2])), (0, np.array([-1.0, 0.7])),
               (0, np.array([0.5, 1.1]))]
        rep = V.check_geodesic_gradient(t, fn=fn, points=pts)
        assert rep.passed and rep.max_residual == 0.0
        assert "noncompact profile" in rep.details["flags"]
        assert rep.details["min_q"] == pytest.approx(0.5)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_monotone_reparametrization_still_passes(self, k):
        # any function of tau keeps the gradient lines and the level-set
        # alignment of dQ with dtau; k = 1 doubles as a jet-route crosscheck
        t = get_triple("cp:n=2,l=1")
        rep = V.check_geodesic_gradient(t, fn=tau_power_candidate(t, k),
                                        count=25, seed=4)
        assert rep.passed, rep.summary_line()
        assert rep.details["level-rank"] < 1e-7
        assert "noncompact profile" not in rep.details["flags"]

    def test_skewed_scalar_fails_rank_oracle(self):
        t = get_triple("cp:n=2,l=1")

        def fn(cid, x):
            tj = t.tau_jet(cid, x, order=3)
            return tj + 0.05 * jet_seed(np.asarray(x, float), 3)[0]

        rep = V.check_geodesic_gradient(t, fn=fn, count=25, seed=4)
        assert not rep.passed
        assert rep.details["level-rank"] > 0.1
        assert rep.details["acceleration"] > 0.01


# ---------------------------------------------------------------------------
# identity suite


SUITE_NAMES = {
    "gradient-holomorphic", "rotation-holomorphic", "equal-norms",
    "orthogonal-pair", "rotation-compose", "rotation-killing",
    "commuting-fields", "self-adjoint-shape", "skew-adjoint-j",
    "derivative-of-rotation", "derivative-of-shape", "perp-bracket",
    "radial-acceleration", "speed-slope", "invariant-splitting",
    "shape-flow", "curvature-from-shape", "shape-bounds",
    "transport-metric", "transport-shape", "transport-ratio",
    "isometry-stationary",
}


class TestIdentitySuite:
    @pytest.mark.parametrize("spec", CATALOG_SPECS)
    def test_green_on_catalog(self, spec):
        reps = V.local_identity_suite(get_triple(spec), count=12, seed=3)
        assert {r.check_id.split(".", 1)[1] for r in reps} == SUITE_NAMES
        bad = [r.summary_line() for r in reps if not r.passed]
        assert not bad, "\n".join(bad)

    def test_green_on_modified_profile(self):
        reps = V.local_identity_suite(get_sine_cp3(), count=12, seed=3)
        bad = [r.summary_line() for r in reps if not r.passed]
        assert not bad, "\n".join(bad)

    def test_compose_and_commute_are_tight(self):
        reps = {r.check_id: r for r in
                V.local_identity_suite(get_triple("cp:n=3,l=1"),
                                       count=15, seed=3)}
        assert reps["identity.rotation-compose"].max_residual < 1e-9
        assert reps["identity.commuting-fields"].max_residual < 1e-8

    def test_shape_bounds_margin_many_samples(self):
        t = get_triple("gr:n=4,k=2")
        worst = 0.0
        for cid, x in t.sample_points(200, seed=9):
            ctx = V.FieldContext(t, cid, x, order=3)
            worst = max(worst, V._shape_bound_violation(ctx))
        assert worst <= 1e-8

    def test_degenerate_complement_yields_no_pairs(self):
        t = get_triple("cp:n=2,l=1")
        cid, x = t.sample_points(1, seed=1)[0]
        ctx = V.FieldContext(t, cid, x, order=3)
        rng = np.random.default_rng(0)
        assert V._perp_pairs(ctx, rng, 2) == []


# ---------------------------------------------------------------------------
# eigenstructure


class TestEigenStructure:
    def test_half_tau_point_single_positive_cluster(self):
        es = V.eigen_structure(get_triple("cp:n=3,l=2"), 0, HALF_POINT)
        assert abs(es.tau - 0.5) < 1e-12
        assert len(es.values) == 1
        assert abs(es.values[0] - 0.5) < 1e-9
        assert abs(es.c_values[0]) < 1e-8
        assert es.labels == ["plus"]
        assert es.dims() == {"plus": 1, "minus": 0, "kernel": 0, "other": 0}

    def test_half_tau_point_opposite_polarization(self):
        # swapping the weight block flips which endpoint the cluster solves
        es = V.eigen_structure(get_triple("cp:n=3,l=1"), 0, HALF_POINT)
        assert abs(es.values[0] + 0.5) < 1e-9
        assert abs(es.c_values[0] - 1.0) < 1e-8
        assert es.labels == ["minus"]

    @pytest.mark.parametrize("spec", [
        "cp:n=2,l=1", "cp:n=3,l=1", "cp:n=3,l=2", "cp:n=4,l=2",
        "gr:n=4,k=2", "bundle:base=point,kind=trivial",
        "bundle:base=cp1,kind=trivial"])
    def test_labels_match_catalog_bookkeeping(self, spec):
        t = get_triple(spec)
        for cid, x in t.sample_points(6, seed=7):
            es = V.eigen_structure(t, cid, x)
            assert V.eigen_matches_metadata(t, es), (spec, es)
            assert es.total_dim() == t.meta["m"] - 1

    def test_modified_profile_keeps_bookkeeping(self):
        t = get_sine_cp3()
        for cid, x in t.sample_points(6, seed=7):
            assert V.eigen_matches_metadata(t, V.eigen_structure(t, cid, x))

    def test_taut_bundle_horizontal_has_third_constant(self):
        # the horizontal direction solves the eigenvalue relation for a
        # constant beyond both endpoint values, so no endpoint label fits
        t = get_triple("bundle:base=cp1,kind=taut")
        for cid, x in t.sample_points(6, seed=7):
            es = V.eigen_structure(t, cid, x)
            assert es.labels == ["other"]
            assert abs(es.c_values[0] - 2.0) < 1e-6
            assert es.total_dim() == t.meta["m"] - 1
            assert not V.eigen_matches_metadata(t, es)

    def test_reference_alignment_is_continuous(self):
        t = get_triple("cp:n=4,l=2")
        cid, x = t.sample_points(1, seed=11)[0]
        ref = np.eye(t.dim)
        d = np.array([1.0, -0.5, 0.25, 0.7, -0.3, 0.15])
        d /= np.linalg.norm(d)
        prev = None
        for k in range(5):
            xs = x + 2e-3 * k * d
            raw = V.eigen_structure(t, cid, xs)
            es = V.eigen_structure(t, cid, xs, reference=ref)
            assert np.allclose(es.values, raw.values, atol=1e-12)
            g = t.atlas.metric_value(cid, xs)
            for Ea, Er in zip(es.spaces, raw.spaces):
                # same span as the raw eigenspaces
                assert np.max(np.abs(Ea @ Ea.T @ g - Er @ Er.T @ g)) < 1e-10
            if prev is not None:
                for Ea, Eb in zip(es.spaces, prev):
                    assert np.max(np.abs(Ea - Eb)) < 0.05
            prev = es.spaces


# ---------------------------------------------------------------------------
# riding normal geodesics


class TestTrackC:
    def test_normal_geodesic_lands_on_critical_passage(self):
        t = get_triple("cp:n=3,l=1")
        cid, x = t.sample_points(1, seed=5)[0]
        for sgn, tgt in ((+1, t.profile.tau_plus), (-1, t.profile.tau_minus)):
            path = V.normal_geodesic(t, cid, x, sgn)
            assert path.stopped == "stop"
            ce, xe, _, _ = path.end_state()
            assert t.q_value(ce, xe) < 1e-12
            assert abs(t.tau(ce, xe) - tgt) < 1e-10
            assert path.t1 < t.solution(sgn).delta + 1e-6

    def test_starting_on_critical_set_is_rejected(self):
        t = get_triple("cp:n=3,l=1")
        with pytest.raises(ValueError):
            V.normal_geodesic(t, 0, np.zeros(4), +1)

    def test_constants_do_not_drift(self):
        reps = {r.check_id: r for r in
                V.track_c_along_geodesic(get_triple("cp:n=3,l=1"),
                                         seed=0, samples=30)}
        assert reps["track.c-drift"].max_residual < 1e-8
        assert reps["track.kernel-flat"].max_residual < 1e-8
        end = reps["track.endpoint-eigen"]
        assert end.passed
        assert sorted(end.details["sides"]) == [-1, 1]

    def test_grassmannian_track(self):
        reps = V.track_c_along_geodesic(get_triple("gr:n=4,k=2"),
                                        seed=1, samples=24)
        bad = [r.summary_line() for r in reps if not r.passed]
        assert not bad, "\n".join(bad)
