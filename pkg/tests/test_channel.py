import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from cellharq.channel import (
    FadingDraw,
    RbfVector,
    SinrModel,
    TrialStreams,
    draw_effective_coefficient,
    draw_harq_fading,
    effective_sinr,
    instantaneous_sinr,
    rbf_effective_coefficient,
)
from cellharq.geometry import CellTopology, build_user


def test_effective_coefficient_moments():
    w = draw_effective_coefficient(np.random.default_rng(1), 1_000_000)
    p = np.abs(w) ** 2
    assert abs(p.mean() - 1.0) < 0.01
    assert abs(w.real.mean()) < 0.005 and abs(w.imag.mean()) < 0.005
    assert abs(np.mean(p <= 1.0) - (1 - math.exp(-1))) < 0.005


def test_scalar_draw_is_complex():
    assert isinstance(draw_effective_coefficient(np.random.default_rng(0)), complex)


def test_harq_fading_shape_and_independence():
    d = draw_harq_fading(6, 4, np.random.default_rng(2))
    assert d.w_ici.shape == (6, 4) and d.n_attempts == 4
    assert 1 + d.w_ici.size == 25
    w = draw_effective_coefficient(np.random.default_rng(3), (100_000, 2))
    a, b = w[:, 0], w[:, 1]
    assert abs(np.mean(a * np.conj(b))) < 0.01


def test_w0_fixed_across_attempts():
    d = draw_harq_fading(2, 3, np.random.default_rng(4))
    m = SinrModel(s=abs(d.w0) ** 2, pathloss_ici=np.array([0.1, 0.2]), rho=100.0)
    gammas = [instantaneous_sinr(m, d, i) for i in (1, 2, 3)]
    for i, g in enumerate(gammas, 1):
        x = sum(0.1 * (k + 1) * abs(d.w_ici[k, i - 1]) ** 2 for k in range(2))
        assert g == pytest.approx(abs(d.w0) ** 2 / (x + 0.01), rel=1e-14)


def test_noise_only_and_unit_interferer():
    zero = FadingDraw(1.0 + 0j, np.zeros((3, 1), complex))
    assert instantaneous_sinr(SinrModel(1.0, np.ones(3), 10.0), zero, 1) == pytest.approx(10.0)
    one = FadingDraw(1.0 + 0j, np.ones((1, 1), complex))
    assert instantaneous_sinr(SinrModel(1.0, np.ones(1), np.inf), one, 1) == 1.0


def test_seeded_default_user_reevaluation():
    user = build_user(CellTopology.hexagonal(), 250, math.pi / 2)
    rho = 10 ** 4.3
    d = draw_harq_fading(6, 4, np.random.default_rng(11))
    m = SinrModel.for_user(user, abs(d.w0) ** 2, rho)
    for i in range(1, 5):
        x = 0.0
        for k in range(6):
            x += user.pathloss[k + 1] * (d.w_ici[k, i - 1].real ** 2 + d.w_ici[k, i - 1].imag ** 2)
        ref = user.pathloss[0] * abs(d.w0) ** 2 / (x + 1 / rho)
        assert instantaneous_sinr(m, d, i) == pytest.approx(ref, rel=1e-13)
    with pytest.raises(IndexError):
        instantaneous_sinr(m, d, 5)


@given(st.integers(0, 10_000), st.integers(1, 6), st.integers(1, 8))
def test_effective_sinr_additivity(seed, K, n):
    rng = np.random.default_rng(seed)
    d = draw_harq_fading(K, n, rng)
    m = SinrModel(1.0, rng.uniform(0.01, 1.0, K), 50.0)
    total = effective_sinr(m, d, n)
    assert total == pytest.approx(sum(instantaneous_sinr(m, d, i) for i in range(1, n + 1)),
                                  rel=1e-14)


def test_aggregate_interference_mean():
    L = np.array([0.3, 0.1, 0.05])
    g = np.abs(draw_effective_coefficient(np.random.default_rng(5), (200_000, 3))) ** 2
    X = g @ L
    se = X.std() / math.sqrt(X.size)
    assert abs(X.mean() - L.sum()) < 3 * se


def test_single_interferer_is_exponential():
    L = 0.7
    X = L * np.abs(draw_effective_coefficient(np.random.default_rng(6), 100_000)) ** 2
    assert stats.kstest(X / L, "expon").statistic <= 0.01


def test_rbf_reduction_gives_unit_exponential_gain():
    rng = np.random.default_rng(7)
    g = np.array([abs(rbf_effective_coefficient(4, rng)) ** 2 for _ in range(20_000)])
    assert stats.kstest(g, "expon").statistic <= 0.015
    uneven = np.array([abs(rbf_effective_coefficient(3, rng, [0.7, 0.2, 0.1])) ** 2
                       for _ in range(20_000)])
    assert stats.kstest(uneven, "expon").statistic <= 0.015


@pytest.mark.parametrize("amps", [[0.5, 0.6], [-0.1, 1.1], [0.2, 0.2]])
def test_rbf_vector_validation(amps):
    with pytest.raises(ValueError):
        RbfVector(np.array(amps), np.zeros(len(amps)))


def test_sinr_model_validation_and_scaling():
    with pytest.raises(ValueError):
        SinrModel(0.0, np.ones(2), 1.0)
    with pytest.raises(ValueError):
        SinrModel(1.0, np.array([1.0, 0.0]), 1.0)
    m = SinrModel(2.0, np.array([0.3, 0.5]), 40.0)
    g = np.array([0.7, 1.9])
    assert m.scaled(3.7).sinr(g) == pytest.approx(m.sinr(g), rel=1e-14)


def test_trial_streams_blocks_equal_sequential_draws():
    a = TrialStreams(9, 2)
    big = a.block(5, 3, 6, 4, current=True, stale=True)
    b = TrialStreams(9, 2)
    parts = [b.block(1, 3, 6, 4, current=True, stale=True) for _ in range(5)]
    for name in ("w0", "current", "stale", "attempts"):
        np.testing.assert_array_equal(getattr(big, name),
                                      np.concatenate([getattr(p, name) for p in parts]))
    c = TrialStreams(9, 3).block(5, 3, 6, 4)
    assert not np.array_equal(c.w0, big.w0)
    # streams are separated by purpose: skipping one array does not shift the others
    d = TrialStreams(9, 2).block(5, 3, 6, 4)
    np.testing.assert_array_equal(d.w0, big.w0)
    np.testing.assert_array_equal(d.attempts, big.attempts)
