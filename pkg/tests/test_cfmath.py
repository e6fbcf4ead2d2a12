import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from cellharq.bessel import bessel_k
from cellharq.cfmath import (
    Approx,
    CfSpec,
    QuadratureConfig,
    QuadratureError,
    cf_effective,
    cf_single_attempt,
    gil_pelaez_cdf,
    inversion_error_estimate,
    normalized_cdf_family,
    normalized_cdf_steps,
    spherical_jn_orders,
)
from cellharq.channel import SinrModel
from oracles import bessel_k_integral, inv_gamma_cdf, inv_gamma_cf_quad, inv_gamma_sample

ORACLE = Path(__file__).parent / "data" / "bessel_oracle.json"

complex_z = st.builds(lambda m, a: m * complex(math.cos(a), math.sin(a)),
                      st.floats(1e-3, 300), st.floats(-1.5, 1.5))


# --- Bessel kernel ------------------------------------------------------------

def test_bessel_real_reference_values():
    assert bessel_k(0, 1.0).real == pytest.approx(0.421024438240708, rel=1e-14)
    assert bessel_k(1, 1.0).real == pytest.approx(0.601907230197235, rel=1e-14)


@given(complex_z, st.integers(1, 11))
def test_bessel_recurrence(z, nu):
    lhs = bessel_k(nu + 1, z, scaled=True)
    rhs = bessel_k(nu - 1, z, scaled=True) + 2 * nu / z * bessel_k(nu, z, scaled=True)
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


@given(st.builds(lambda m, a: m * complex(math.cos(a), math.sin(a)),
                 st.floats(1e-2, 50), st.floats(-1.5, 1.5)), st.integers(0, 6))
def test_bessel_wronskian(z, nu):
    # I_nu K_{nu+1} + I_{nu+1} K_nu = 1/z, with I from scipy as the partner function
    w = (special.iv(nu, z) * bessel_k(nu + 1, z) + special.iv(nu + 1, z) * bessel_k(nu, z))
    assert abs(w * z - 1) <= 1e-10


def test_bessel_against_frozen_integral_oracle():
    rows = json.loads(ORACLE.read_text())["rows"]
    worst = 0.0
    for row in rows:
        z = complex(*row["z"])
        ref = complex(*row["scaled"])
        worst = max(worst, abs(bessel_k(row["nu"], z, scaled=True) - ref) / abs(ref))
    assert worst <= 1e-8


@pytest.mark.parametrize("nu,z", [(0, 0.37), (3, 4.2 - 4.2j), (8, 0.05 * (1 - 1j)), (5, 60 - 60j)])
def test_frozen_oracle_spot_check_live(nu, z):
    ref = bessel_k_integral(nu, z)
    assert abs(bessel_k(nu, z, scaled=True) - ref) <= 1e-12 * abs(ref)


def test_high_orders_against_scipy():
    z = np.logspace(-6, 3, 60) * np.exp(-0.25j * np.pi)
    for nu in range(9, 13):
        ref = special.kve(nu, z)
        ok = np.isfinite(ref)
        got = bessel_k(nu, z[ok], scaled=True)
        assert np.max(np.abs(got - ref[ok]) / np.abs(ref[ok])) <= 1e-8


@pytest.mark.parametrize("z", [0.0, -1.0, 1j, -2 + 1j, complex("nan")])
def test_bessel_domain_errors(z):
    with pytest.raises(ValueError):
        bessel_k(1, z)


def test_bessel_order_and_overflow_errors():
    with pytest.raises(ValueError):
        bessel_k(1.5, 1.0)
    with pytest.raises(ValueError):
        bessel_k(-1, 1.0)
    with pytest.raises(OverflowError):
        bessel_k(0, 800.0)
    assert np.isfinite(bessel_k(0, 800.0, scaled=True))


def test_bessel_vector_shape():
    z = np.array([[1.0, 2.0], [3.0, 4.0 - 1j]])
    out = bessel_k(2, z)
    assert out.shape == (2, 2)
    assert out[1, 1] == bessel_k(2, 4.0 - 1j)


# --- characteristic functions -------------------------------------------------

def test_cf_near_origin():
    spec = CfSpec(Approx.GA, s=3.0, scale=0.7)
    assert abs(cf_single_attempt(spec, 1e-12) - 1) < 1e-4


def test_ipla_k1_equals_ga_without_noise():
    m = SinrModel(2.5, np.array([0.4]), np.inf)
    ga = CfSpec.from_model(m, Approx.GA)
    ipla = CfSpec.from_model(m, Approx.IPLA)
    t = np.logspace(-4, 3, 50)
    np.testing.assert_array_equal(cf_single_attempt(ga, t), cf_single_attempt(ipla, t))


def test_ipla_cf_against_density_quadrature():
    spec = CfSpec(Approx.IPLA, s=1.0, scale=0.2, K=6)
    ref = inv_gamma_cf_quad(3.7, 6, 1.0 / 0.2)
    assert abs(cf_single_attempt(spec, 3.7) - ref) <= 1e-6


@given(st.floats(1e-6, 1e4), st.integers(1, 12), st.floats(0.01, 100))
def test_cf_modulus_bound(t, K, beta):
    spec = CfSpec(Approx.IPLA, s=beta, scale=1.0, K=K)
    assert abs(cf_single_attempt(spec, t)) <= 1 + 1e-12


def test_cf_effective_product_form():
    spec = CfSpec(Approx.IPLA, s=2.0, scale=0.3, K=6, n=1)
    t = np.logspace(-3, 2, 40)
    one = cf_effective(spec, t)
    np.testing.assert_array_equal(cf_effective(spec.with_n(0), t), np.ones_like(one))
    assert cf_effective(spec.with_n(0), 0.5) == 1
    np.testing.assert_allclose(cf_effective(spec.with_n(2), t), one**2, rtol=1e-14)
    mods = np.array([np.abs(cf_effective(spec.with_n(n), t)) for n in range(5)])
    assert np.all(np.diff(mods, axis=0) <= 1e-15)


def test_cf_principal_branch_continuity():
    spec = CfSpec(Approx.IPLA, s=1.0, scale=0.5, K=6)
    t = np.linspace(1e-4, 40, 20_001)
    phi = cf_single_attempt(spec, t)
    # a branch jump would show up as an O(1) step between neighbours
    assert np.max(np.abs(np.diff(phi))) < 1e-2


def test_cf_rejects_nonpositive_t():
    with pytest.raises(ValueError):
        cf_single_attempt(CfSpec(Approx.GA, 1.0, 1.0), 0.0)


# --- inversion ----------------------------------------------------------------

def _x_grid(beta, n=50):
    return beta * np.logspace(-2, 2.5, n)


@pytest.mark.parametrize("K", [1, 3, 6])
def test_ipla_n1_matches_inverse_gamma(K):
    spec = CfSpec(Approx.IPLA, s=0.02, scale=3.6e-4, K=K)
    x = _x_grid(spec.beta)
    err = np.abs(gil_pelaez_cdf(spec, x) - inv_gamma_cdf(x, K, spec.beta))
    assert err.max() <= 1e-6


def test_ga_n1_matches_exponential_of_reciprocal():
    spec = CfSpec(Approx.GA, s=0.02, scale=2.2e-3)
    x = _x_grid(spec.beta)
    assert np.max(np.abs(gil_pelaez_cdf(spec, x) - np.exp(-spec.beta / x))) <= 1e-6


def test_cdf_limits():
    spec = CfSpec(Approx.IPLA, s=1.0, scale=0.1, K=6, n=3)
    assert gil_pelaez_cdf(spec, 1e-6 * spec.beta) < 1e-8
    assert gil_pelaez_cdf(spec, 1e8 * spec.beta) > 1 - 1e-8


@given(st.integers(1, 12), st.integers(1, 4))
def test_cdf_unclamped_range_and_monotonicity(order, n):
    tol = QuadratureConfig().abs_tol
    y = np.logspace(-3, 5, 300)
    F = normalized_cdf_family(order, y, n)
    assert F.min() >= -tol and F.max() <= 1 + tol
    assert np.all(np.diff(F, axis=1) >= -2 * tol)
    # more attempts, less outage
    assert np.all(np.diff(F, axis=0) <= 2 * tol)


def test_steps_form_matches_telescoping():
    y = np.logspace(-2, 4, 200)
    for order in (1, 6):
        F = normalized_cdf_family(order, y, 4)
        P = np.vstack([np.ones_like(y), F])
        np.testing.assert_allclose(normalized_cdf_steps(order, y, 4), P[:-1] - P[1:], atol=1e-11)


def test_error_estimate_reported():
    assert 0 <= inversion_error_estimate(6, 4) < 1e-8


@pytest.mark.parametrize("kind,K", [(Approx.IPLA, 6), (Approx.GA, 1)])
@pytest.mark.parametrize("n", [2, 4])
def test_sum_of_inverse_gamma_matches_monte_carlo(kind, K, n):
    beta = 55.0
    spec = CfSpec(kind, s=beta, scale=1.0, K=K, n=n)
    rng = np.random.default_rng(100 + n + K)
    x = inv_gamma_sample(rng, K, beta, (1_000_000, n)).sum(axis=1)
    x.sort()
    m = 4000
    idx = np.linspace(0, x.size - 1, m).astype(int)
    F = gil_pelaez_cdf(spec, x[idx])
    ecdf_hi = (idx + 1) / x.size
    ecdf_lo = idx / x.size
    ks_on_grid = max(np.max(np.abs(ecdf_hi - F)), np.max(np.abs(F - ecdf_lo)))
    # between grid points both CDFs move by at most the grid spacing
    assert ks_on_grid + 1.0 / m <= 0.005


def test_quadrature_failure_is_reported():
    q = QuadratureConfig(max_subdivisions=3)
    with pytest.raises(QuadratureError) as info:
        normalized_cdf_family(6, [1.0], 2, q)
    assert info.value.estimate > 0


@pytest.mark.parametrize("kw", [dict(t_min=0.0), dict(t_min=2e6), dict(abs_tol=0.0),
                                dict(max_subdivisions=0), dict(nodes_per_panel=2)])
def test_quadrature_config_validation(kw):
    with pytest.raises(ValueError):
        QuadratureConfig(**kw)


def test_gil_pelaez_preconditions():
    spec = CfSpec(Approx.GA, 1.0, 1.0, n=0)
    with pytest.raises(ValueError):
        gil_pelaez_cdf(spec, 1.0)
    with pytest.raises(ValueError):
        gil_pelaez_cdf(spec.with_n(1), 0.0)
    with pytest.raises(ValueError):
        CfSpec(Approx.IPLA, 1.0, 0.0)


def test_spherical_bessel_orders_against_scipy():
    rng = np.random.default_rng(12)
    w = np.concatenate([10 ** rng.uniform(-14, 6, 20_000), np.arange(0.5, 40, 0.01),
                        np.pi * np.arange(1, 12), [0.0, 1.0, 16.0]])
    ref = special.spherical_jn(np.arange(16)[None, :], w[:, None])
    assert np.max(np.abs(spherical_jn_orders(16, w) - ref)) <= 1e-14
