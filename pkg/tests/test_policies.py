import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cellharq.cfmath import Approx, CfSpec
from cellharq.channel import SinrModel
from cellharq.dlt import dlt, dlt_table
from cellharq.geometry import CellTopology, build_user
from cellharq.policies import (
    PolicyDecision,
    PolicyKind,
    decide,
    rs_avg_x,
    rs_ga,
    rs_genie,
    rs_inst_sinr,
    rs_ipla,
)
from cellharq.sim import SingleLinkConfig, delivered_rates, effective_sinr_paths

LINK = SingleLinkConfig()
MODEL = LINK.model()


def test_policy_ids_are_stable():
    assert [p.value for p in PolicyKind] == ["genie", "isinr", "avgx", "ga", "ipla"]
    assert PolicyKind.parse(" IPLA ") is PolicyKind.IPLA
    with pytest.raises(ValueError, match="expected one of"):
        PolicyKind.parse("maxci")
    assert {p for p in PolicyKind if p.expected_throughput} == {PolicyKind.GA, PolicyKind.IPLA}


def test_genie_examples():
    noise_only = SinrModel(1.0, np.ones(3), 10.0)
    assert rs_genie(noise_only, np.zeros(3)).r_source == pytest.approx(math.log2(11))
    unit = SinrModel(1.0, np.ones(1), np.inf)
    d = rs_genie(unit, np.ones(1))
    assert d.r_source == 1.0 and d.r_eff == d.r_source


def test_genie_seeded_reevaluation():
    g = np.random.default_rng(3).standard_exponential(6)
    x = sum(MODEL.pathloss_ici[k] * g[k] for k in range(6))
    expect = math.log2(1 + MODEL.s / (x + 1 / MODEL.rho))
    assert rs_genie(MODEL, g).r_source == pytest.approx(expect, rel=1e-14)


def test_inst_sinr_examples():
    g = np.random.default_rng(4).standard_exponential(6)
    assert rs_inst_sinr(MODEL, g, delta=0) == rs_genie(MODEL, g)
    m = SinrModel(1.0, np.ones(2), 10.0)
    assert rs_inst_sinr(m, np.zeros(2)).r_source == pytest.approx(math.log2(11))
    cold = rs_inst_sinr(MODEL, None, user=3)
    assert cold.flags == ("cold_start",) and cold.user == 3
    assert cold.r_source == rs_avg_x(MODEL).r_source
    with pytest.raises(ValueError):
        rs_inst_sinr(MODEL, g, delta=-1)


def test_avg_x_examples():
    m = SinrModel(1.0, np.array([0.1]), np.inf)
    assert rs_avg_x(m).r_source == pytest.approx(math.log2(11))
    assert rs_avg_x(SinrModel(2.0, np.array([0.1]), 5.0)).r_source > rs_avg_x(
        SinrModel(1.0, np.array([0.1]), 5.0)).r_source
    user = build_user(CellTopology.hexagonal(), 250, math.pi / 2)
    m = SinrModel.for_user(user, 1.0, 10**4.3)
    assert m.mean_interference == pytest.approx(float(np.sum(user.pathloss[1:])), rel=1e-15)
    expect = math.log2(1 + user.pathloss[0] / (np.sum(user.pathloss[1:]) + 10**-4.3))
    assert rs_avg_x(m).r_source == pytest.approx(expect, rel=1e-14)


@pytest.mark.parametrize("fn,kind", [(rs_ga, Approx.GA), (rs_ipla, Approx.IPLA)])
def test_expected_throughput_erm(fn, kind):
    d = fn(MODEL, 4)
    assert 0 <= d.r_eff <= d.r_source
    independent = dlt(CfSpec.from_model(MODEL, kind), d.r_source, 4)
    assert abs(d.r_eff - independent) <= 1e-9


def test_ga_equals_ipla_single_interferer_without_noise():
    m = SinrModel(3e-3, np.array([2e-4]), np.inf)
    assert rs_ga(m, 4) == rs_ipla(m, 4)


@given(st.lists(st.floats(1e-6, 1e-2), min_size=1, max_size=8))
def test_ipla_mean_preservation(L):
    m = SinrModel(1.0, np.array(L), 100.0)
    assert m.mean_pathloss * m.K == pytest.approx(sum(L), rel=1e-12)


@given(st.floats(1e-3, 1e3))
def test_scale_coherence(c):
    g = np.random.default_rng(5).standard_exponential(6)
    m2 = MODEL.scaled(c)
    assert rs_genie(m2, g).r_source == pytest.approx(rs_genie(MODEL, g).r_source, rel=1e-12)
    assert rs_inst_sinr(m2, g).r_source == pytest.approx(rs_inst_sinr(MODEL, g).r_source, rel=1e-12)
    assert rs_avg_x(m2).r_source == pytest.approx(rs_avg_x(MODEL).r_source, rel=1e-12)
    for fn in (rs_ga, rs_ipla):
        assert fn(m2, 4, memo=True).r_source == pytest.approx(fn(MODEL, 4, memo=True).r_source,
                                                              abs=1e-6)


def test_genie_dominates_at_link_level():
    rng = np.random.default_rng(6)
    gamma = effective_sinr_paths(MODEL, 4, 100_000, rng)
    genie = np.log2(1 + gamma[:, 0])  # one attempt, always decoded
    for d in (rs_avg_x(MODEL), rs_ga(MODEL, 4), rs_ipla(MODEL, 4)):
        other = delivered_rates(gamma, [d.r_source])[0]
        diff = genie - other
        assert diff.mean() >= -3 * diff.std() / math.sqrt(diff.size)


def test_memo_and_engine_paths():
    direct = rs_ipla(MODEL, 4)
    memo = rs_ipla(MODEL, 4, memo=True)
    assert memo.r_source == pytest.approx(direct.r_source, abs=1e-4)
    eng = rs_ipla(MODEL, 4, engine=dlt_table(6, 4))
    assert eng.r_source == pytest.approx(direct.r_source, abs=2e-3)
    assert eng.r_eff == pytest.approx(direct.r_eff, abs=1e-4)
    with pytest.raises(ValueError, match="does not match"):
        rs_ga(MODEL, 4, engine=dlt_table(6, 4))


def test_decide_dispatch():
    g = np.ones(6)
    assert decide(PolicyKind.GENIE, MODEL, ici_now=g) == rs_genie(MODEL, g)
    assert decide(PolicyKind.ISINR, MODEL, ici_delayed=g) == rs_inst_sinr(MODEL, g)
    assert decide(PolicyKind.AVGX, MODEL) == rs_avg_x(MODEL)
    assert decide(PolicyKind.GA, MODEL) == rs_ga(MODEL, 4)
    with pytest.raises(ValueError):
        decide(PolicyKind.GENIE, MODEL)
    with pytest.raises(ValueError):
        PolicyDecision(0, -1.0, 0.0)
