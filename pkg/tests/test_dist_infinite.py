import math
from dataclasses import replace

import numpy as np
import pytest
import scipy.special as sps
import scipy.stats as ss
from hypothesis import given, settings, strategies as st

from ehbuffer import dist_infinite as di
from ehbuffer.eh_model import GammaEHModel, Policy, harvest_pdf
from ehbuffer.special_fn import RegimeError, integrate


def solve(policy, m, delta, mean=1.0):
    eh = GammaEHModel(m, mean)
    return eh, di.solve_infinite(policy, eh, delta * mean)


class TestRoots:
    def test_boundary_root_is_zero(self):
        for m in (1, 2, 3):
            rs = di.lambda_roots(m, m / 1.0, 1.0, allow_boundary=True)
            assert abs(rs.roots[0]) < 1e-12

    def test_single_shape_root(self):
        w = sps.lambertw(-2 * math.exp(-2)).real
        assert abs(w + 0.40637573) < 1e-8
        lam = 1.0
        rs = di.lambda_roots(1, lam, 2.0 / lam)
        assert abs(rs.roots[0] - lam * (1 + w / 2)) < 1e-14
        assert abs(rs.roots[0].real / lam - 0.7968) < 1e-4

    def test_regime_rejected(self):
        with pytest.raises(RegimeError):
            di.lambda_roots(2, 2.0, 0.8)
        with pytest.raises(RegimeError):
            di.lambda_roots(2, 2.0, 1.0)
        with pytest.raises(RegimeError):
            solve("oo", 2, 0.9)

    @pytest.mark.parametrize("m", range(1, 7))
    @pytest.mark.parametrize("delta", [1.04, 1.5, 2.0, 5.0])
    def test_structure(self, m, delta):
        rs = di.lambda_roots(m, m, delta)
        assert np.max(rs.residuals()) <= 1e-10
        assert rs.pairing_error() <= 1e-14
        assert rs.roots[0].imag == 0.0
        if m % 2 == 0:
            assert abs(rs.roots[m // 2].imag) <= 1e-14 * rs.lam
        assert np.all(rs.roots.real > 0)


class TestBestEffort:
    def test_single_shape_closed_form(self):
        eh, dist = solve("be", 1, 2.0)
        assert dist.coeffs[0] == pytest.approx(1.0)
        x = np.linspace(0, 10, 50)
        ln = dist.roots.roots[0].real
        assert np.allclose(dist.cdf(x), 1 - np.exp(-ln * x), atol=1e-14)
        assert abs(dist.cdf(0.0)[0]) < 1e-15

    def test_near_boundary_system_and_monotone_cdf(self):
        eh, dist = solve("be", 2, 1.04, 1.2e-5)
        assert dist.system_residual() <= 1e-10
        G = dist.cdf(np.linspace(0, dist.support_max(1e-10), 10 ** 4))
        assert np.all(np.diff(G) >= -1e-15)
        assert G[0] >= -1e-9

    def test_routes_agree_when_well_conditioned(self):
        for m, delta in ((2, 1.5), (3, 2.0), (4, 1.2)):
            eh, dist = solve("be", m, delta)
            x = np.linspace(0, dist.support_max(1e-9), 200)
            stable = dist.pdf(x)
            literal = dist.pdf_complex(x)
            assert np.max(np.abs(stable - literal.real)) <= 1e-11 * np.max(stable)
            assert np.allclose(dist.moments_from_coeffs(), dist.moments, atol=1e-12)

    def test_lindley_residual_examples(self):
        for m, delta in ((1, 2.0), (3, 1.2)):
            eh, dist = solve("be", m, delta)
            assert di.lindley_cdf_residual(dist, eh) <= 1e-6
        eh, dist = solve("be", 2, 1.5)
        assert di.lindley_cdf_residual(dist, eh, [0.0]) <= 1e-9

    def test_bufferless_limit(self):
        # as delta grows with lam fixed the stored energy approaches one slot's harvest
        for m in (1, 2, 3):
            eh, dist = solve("be", m, 50.0)
            assert abs(dist.roots.roots[0] - eh.rate) < 1e-12 * eh.rate
            x = np.linspace(0.05, 4, 40) * eh.mean_x
            assert np.allclose(dist.pdf(x), harvest_pdf(eh, x), rtol=0.01)


class TestOnOff:
    def test_low_segment_parameters(self):
        rs = di.lambda_roots(3, 3.0, 1.5)
        seg = di.low_segment_params(rs)
        assert seg.theta[0] == 0
        k, n = 1, 2
        omega = np.exp(1j * seg.eta[k])
        assert abs(seg.a[n, k] - 1 / (2 * (rs.roots[n] * np.conj(omega) + np.conj(seg.theta[k])))) < 1e-14
        assert abs(seg.b[n, k] - 1 / (2 * (rs.roots[n] * omega + seg.theta[k]))) < 1e-14

    def test_printed_gamma_form_matches_low_segment(self):
        for m, delta in ((1, 1.5), (2, 1.5), (3, 1.3)):
            eh, dist = solve("oo", m, delta)
            for x in np.linspace(0.05, 0.95, 7) * dist.M:
                ref = di.low_density_gamma_form(dist, x)
                assert abs(ref.imag) <= 1e-10 * abs(ref.real)
                assert abs(ref.real - dist.pdf(x)) <= 1e-9 * dist.pdf(x)

    def test_routes_agree_when_well_conditioned(self):
        for m, delta in ((1, 2.0), (2, 1.5), (3, 1.2)):
            eh, dist = solve("oo", m, delta)
            x = np.linspace(0, dist.support_max(1e-9), 200)
            assert np.max(np.abs(dist.pdf(x) - dist.pdf_complex(x).real)) <= 1e-10 * np.max(dist.pdf(x))
            assert dist.system_residual() <= 1e-10

    def test_single_shape_transmit_probability(self):
        eh, dist = solve("oo", 1, 2.0)
        c0, l0 = dist.coeffs[0].real, dist.roots.roots[0].real
        assert abs(dist.p_transmit() - c0 * math.exp(-l0 * dist.M)) < 1e-13

    def test_seam_gap_reported_not_asserted(self):
        eh, dist = solve("oo", 2, 1.5)
        M = dist.M
        gap = abs(dist.pdf(np.nextafter(M, 0)) - dist.pdf(M))
        assert math.isfinite(gap)


@pytest.mark.parametrize("policy", ["be", "oo"])
@pytest.mark.parametrize("m", [1, 2, 3])
@pytest.mark.parametrize("delta", [1.1, 1.5, 3.0])
def test_unit_area_moment_and_residual(policy, m, delta):
    eh, dist = solve(policy, m, delta)
    assert abs(di.total_mass(dist) - 1.0) <= 1e-8
    assert abs(di.mean_drain(dist) / eh.mean_x - 1.0) <= 1e-6
    g = dist.pdf(di.default_grid(dist))
    assert di.integral_residual_infinite(dist, eh) <= 1e-6 * np.max(g)
    dense = dist.pdf(np.linspace(0, dist.support_max(1e-10), 3000))
    assert np.min(dense) >= -1e-9


def test_moment_identity_by_quadrature():
    eh, dist = solve("be", 2, 1.5)
    top = dist.support_max(1e-16)
    val = integrate(lambda x: np.minimum(x, dist.M) * dist.pdf(x), 0, top, points=[dist.M])[0]
    assert abs(val - eh.mean_x) <= 1e-6 * eh.mean_x
    eh, dist = solve("oo", 2, 1.5)
    tail = integrate(dist.pdf, dist.M, dist.support_max(1e-16))[0]
    assert abs(dist.M * tail - eh.mean_x) <= 1e-6 * eh.mean_x


def test_perturbed_coefficient_is_detected():
    eh, dist = solve("be", 2, 1.5)
    c = dist.coeffs.copy()
    c[0] *= 1.01
    bad = replace(dist, coeffs=c)
    bad = replace(bad, moments=bad.moments_from_coeffs().real)
    peak = np.max(dist.pdf(di.default_grid(dist)))
    assert di.integral_residual_infinite(bad, eh) > 1e-3 * peak


def test_simulated_histogram_matches():
    from ehbuffer.simulator import SimConfig, run
    from ehbuffer.eh_model import PolicySpec
    eh = GammaEHModel(2, 1.0)
    for kind in ("be", "oo"):
        dist = di.solve_infinite(kind, eh, 1.3)
        s = run(SimConfig(PolicySpec(kind, 1.3), eh, 2 * 10 ** 6, seed=9, histogram_bins=100))
        cdf = dist.cdf(s.bin_edges)
        l1 = np.abs(np.diff(cdf) - s.bin_masses).sum() + abs(1 - cdf[-1] - s.overflow_mass)
        assert l1 < 0.02


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(["be", "oo"]), st.integers(1, 4), st.floats(1.05, 4.0))
def test_distribution_properties(policy, m, delta):
    eh, dist = solve(policy, m, delta)
    assert abs(float(dist.tail_mass(0.0)[0]) - 1.0) < 1e-10
    assert abs(di.mean_drain(dist) / eh.mean_x - 1.0) < 1e-8
    x = np.linspace(0, dist.support_max(1e-10), 400)
    G = dist.cdf(x)
    assert np.all(np.diff(G) >= -1e-12)
    assert np.min(dist.pdf(x)) >= -1e-9


def test_gamma_oracle_for_tail():
    # m = 1 best effort: the stationary level is exponential with rate lam_0
    eh, dist = solve("be", 1, 1.7)
    l0 = dist.roots.roots[0].real
    x = np.linspace(0, 6, 30)
    assert np.allclose(dist.tail_mass(x), ss.expon(scale=1 / l0).sf(x), rtol=1e-12)
    assert dist.policy is Policy.BEST_EFFORT
