"""Triples: domains, regularity, metric density, curvature and its FD oracle."""

import numpy as np
import pytest

from mtriples.expr import Const, Mul, parse_mero
from mtriples.mtriple import (
    Annulus,
    Disk,
    NonHolomorphic,
    Rectangle,
    RegularityViolation,
    TruncatedPlane,
    check_regularity,
    curvature,
    curvature_array,
    curvature_fd,
    make_triple,
    metric_density,
    metric_density_array,
)

from _helpers import random_regular_triple, sample_points_away


class TestDomains:
    def test_puncture_must_be_interior(self):
        with pytest.raises(ValueError):
            Disk(0, 1.0, punctures=(2.0 + 0j,))
        with pytest.raises(ValueError):
            Annulus(0, 0.5, 2.0, punctures=(0j,))

    def test_punctures_distinct(self):
        with pytest.raises(ValueError):
            TruncatedPlane(3.0, punctures=(1.0 + 0j, 1.0 + 0j))

    def test_degenerate_regions_rejected(self):
        with pytest.raises(ValueError):
            Disk(0, -1.0)
        with pytest.raises(ValueError):
            Annulus(0, 2.0, 1.0)
        with pytest.raises(ValueError):
            Rectangle(1 + 1j, 1 + 2j)

    def test_containment(self):
        ann = Annulus(0, 0.5, 2.0)
        assert ann.contains(1.0)
        assert not ann.contains(0.1)
        assert not ann.contains(2.5)
        rect = Rectangle(0, 2 + 1j)
        assert rect.contains(1 + 0.5j)
        assert not rect.contains(-0.1 + 0.5j)


class TestRegularity:
    def test_polynomial_g_vacuous(self):
        t = make_triple(Disk(0, 1.0), "1", "z", 2)
        assert t.regularity.overall and t.regularity.checked

    def test_catenoid_pole_outside_annulus(self):
        t = make_triple(Annulus(0, 0.5, 2.0), "1/z^2", "z", 2)
        assert t.regularity.overall

    def test_missing_zero_of_f(self):
        with pytest.raises(RegularityViolation) as err:
            make_triple(Disk(0, 2.0), "1", "1/z", 1)
        assert abs(err.value.point) < 1e-6

    def test_pole_of_f_rejected(self):
        with pytest.raises(NonHolomorphic):
            make_triple(Disk(0, 2.0), "1/(z-1)", "z", 1)

    def test_matched_orders_accepted(self):
        for m in (1, 2, 3):
            t = make_triple(Disk(0, 2.0), f"z^{m}", "1/z", m)
            assert t.regularity.overall

    def test_wrong_order_rejected(self):
        with pytest.raises(RegularityViolation):
            make_triple(Disk(0, 2.0), "z", "1/z", 2)  # needs order 2, has 1

    def test_stray_zero_rejected(self):
        with pytest.raises(RegularityViolation):
            make_triple(Disk(0, 2.0), "z-1", "z", 2)

    def test_exp_data_unchecked(self):
        t = make_triple(Disk(0, 1.0), "exp(z)", "z", 1)
        assert not t.regularity.checked

    def test_double_pole(self):
        t = make_triple(Disk(0, 2.0), "(z-1)^2", "1/(z-1)^2 + 1", 1)
        assert t.regularity.overall

    def test_report_serializes(self):
        rep = check_regularity(Disk(0, 2.0), parse_mero("z^2"), parse_mero("1/z^2"), 1)
        d = rep.to_json_dict()
        assert d["overall"] and d["checked"]
        assert d["entries"][0]["f_order"] == 2
        assert d["entries"][0]["g_order"] == -2

    def test_m_must_be_positive_integer(self):
        with pytest.raises(ValueError):
            make_triple(Disk(0, 1.0), "1", "z", 0)


class TestMetricDensity:
    def test_unit_at_origin(self):
        t = make_triple(Disk(0, 1.0), "1", "z", 2)
        assert abs(metric_density(t, 0) - 1.0) < 1e-14

    def test_value_at_rim(self):
        t = make_triple(Disk(0, 1.5), "1", "z", 2)
        assert abs(metric_density(t, 1.0) - 2.0) < 1e-14

    def test_constant_gary(self):
        for m in (1, 2, 5):
            t = make_triple(Disk(0, 1.0), "1", "0.5+0.5*i", m)
            want = (1 + 0.5) ** (m / 2)
            for z in (0, 0.3 + 0.4j):
                assert abs(metric_density(t, z) - want) < 1e-14

    def test_puncture_guarded(self):
        t = make_triple(TruncatedPlane(3.0, punctures=(1 + 0j,)), "1/(z-1)", "z", 1)
        with pytest.raises(Exception):
            metric_density(t, 1.0)

    def test_continuity_across_pole_of_g(self):
        # reciprocal-route values agree with radial limits of the direct
        # formula; at radius r the direct value differs from the limit by
        # O(r^2), so small radii stand in for the limit
        for m in (1, 2, 3):
            t = make_triple(Disk(0, 2.0), f"z^{m}", "1/z", m)
            at_pole_lam = metric_density(t, 0)
            at_pole_k = curvature(t, 0)
            for r in (1e-4, 3e-4):
                lam = metric_density(t, r)
                k = curvature(t, r)
                assert abs(lam - at_pole_lam) < 1e-6
                assert abs(k - at_pole_k) < 1e-6 * abs(at_pole_k)

    def test_vectorized_matches_scalar(self):
        t = make_triple(Disk(0, 2.0), "z", "1/z", 1)
        zs = np.array([0.0, 0.5, 1j, 0.3 + 0.3j])
        lam = metric_density_array(t, zs)
        for z, v in zip(zs, lam):
            assert abs(metric_density(t, complex(z)) - v) < 1e-12


class TestCurvature:
    def test_flat_for_constant_g(self):
        t = make_triple(Disk(0, 1.0), "1", "0.7", 3)
        assert curvature(t, 0.2 + 0.1j) == 0.0

    def test_explicit_values(self):
        assert abs(curvature(make_triple(Disk(0, 1.0), "1", "z", 2), 0) + 4.0) < 1e-10
        assert abs(curvature(make_triple(Disk(0, 1.0), "1", "z", 1), 0) + 2.0) < 1e-10

    def test_catenoid_point(self):
        t = make_triple(Annulus(0, 0.5, 2.0), "1/z^2", "z", 2)
        assert abs(curvature(t, 1.0) + 0.25) < 1e-12

    def test_nonpositive_everywhere(self):
        rng = np.random.default_rng(40)
        for _ in range(20):
            t = random_regular_triple(rng, int(rng.integers(1, 4)))
            pts = sample_points_away(rng, t, 5)
            for z in pts:
                assert curvature(t, z) <= 0.0

    def test_scaling_law(self):
        # f -> c f multiplies the density by |c| and K by 1/|c|^2, exactly
        rng = np.random.default_rng(41)
        t = random_regular_triple(rng, 2)
        c = 1.7 - 0.9j
        t2 = make_triple(t.domain, Mul(Const(c), t.f), t.g, t.m)
        for z in sample_points_away(rng, t, 5):
            lam1, lam2 = metric_density(t, z), metric_density(t2, z)
            k1, k2 = curvature(t, z), curvature(t2, z)
            assert abs(lam2 - abs(c) * lam1) <= 1e-12 * max(1.0, lam2)
            assert abs(k2 * abs(c) ** 2 - k1) <= 1e-12 * max(1.0, abs(k1))


class TestCurvatureFD:
    def test_explicit_value_with_richardson(self):
        t = make_triple(Disk(0, 1.0), "1", "z", 2)
        assert abs(curvature_fd(t, 0, 1e-3) + 4.0) < 1e-5
        assert abs(curvature_fd(t, 0, 1e-3, richardson=True) + 4.0) < 1e-9

    def test_harmonic_for_constant_g(self):
        t = make_triple(Disk(0, 1.0), "1", "0.4", 2)
        assert abs(curvature_fd(t, 0.2 + 0.1j, 1e-3)) < 1e-8

    def test_exp_triple_cross_check(self):
        t = make_triple(Disk(0, 1.0), "exp(z)", "z", 1)
        z = 0.3 + 0.1j
        kc = curvature(t, z)
        kf = curvature_fd(t, z, 1e-3)
        assert abs(kc - kf) / abs(kc) < 1e-4

    def test_stencil_must_stay_inside(self):
        t = make_triple(Disk(0, 1.0), "1", "z", 2)
        with pytest.raises(Exception):
            curvature_fd(t, 0.9999, 1e-3)

    def test_oracle_agreement_random(self):
        # closed form vs -(laplacian log density)/density^2 on random triples
        rng = np.random.default_rng(42)
        for k in range(25):
            t = random_regular_triple(rng, k % 3 + 1)
            for z in sample_points_away(rng, t, 3):
                kc = curvature(t, z)
                kf = curvature_fd(t, z, 1e-3)
                assert abs(kc - kf) / max(abs(kc), 1e-8) < 1e-4

    def test_vectorized_curvature_matches(self):
        rng = np.random.default_rng(43)
        t = random_regular_triple(rng, 2)
        pts = np.asarray(sample_points_away(rng, t, 8))
        kv = curvature_array(t, pts)
        for z, v in zip(pts, kv):
            assert abs(curvature(t, complex(z)) - v) < 1e-10
