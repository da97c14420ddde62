import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wfsd.errors import (
    DomainError,
    InvalidParameter,
    NotApplicable,
    PreconditionFailed,
    SingularSystem,
)
from wfsd.model import (
    SET_I,
    SET_II,
    SET_III,
    ChannelRates,
    MultiWFParams,
    SchemeId,
    WFParams,
    alpha_beta,
    classify_boundaries,
    diffusion,
    divergence_probe,
    drift,
    from_channel_rates,
    log_scale_density,
    max_stable_step,
    multi_drift,
    multi_steady_state,
    preset,
    scale_density,
)

from . import oracles

pos = st.floats(0.01, 20, allow_nan=False)


# --- parameter mapping -----------------------------------------------------

def test_channel_mapping_set_i():
    p, x0 = from_channel_rates(SET_I)
    assert (p.k1, p.k2) == (1.0, 3.0)
    assert p.k3 == pytest.approx(0.246183, abs=5e-7)
    assert x0 == pytest.approx(1 / 3, rel=1e-15)


def test_channel_mapping_set_ii():
    p, x0 = from_channel_rates(SET_II)
    assert p.k1 == 7.0064
    assert p.k2 == pytest.approx(7.0268, rel=1e-15)
    assert p.k3 == pytest.approx(0.376769, abs=1e-6)
    assert x0 == pytest.approx(0.997097, abs=5e-7)


def test_channel_mapping_two_channels():
    p, x0 = from_channel_rates(ChannelRates(1, 1, 2))
    assert p.k3 == 2.0 and x0 == 0.5


@pytest.mark.parametrize("bad", [(0, 1, 10), (1, -1, 10), (1, 1, 1), (1, 1, 2.5)])
def test_channel_rates_rejects(bad):
    with pytest.raises(InvalidParameter):
        ChannelRates(*bad)


@pytest.mark.parametrize("bad", [(0, 1, 1), (1, 0, 1), (1, 1, -1), (math.nan, 1, 1), (math.inf, 1, 1)])
def test_wfparams_rejects(bad):
    with pytest.raises(InvalidParameter):
        WFParams(*bad)


def test_alpha_beta_values():
    p, _ = from_channel_rates(SET_I)
    a, b = alpha_beta(p)
    assert a == pytest.approx(0.9848485, abs=1e-7)
    assert b == pytest.approx(-2.9696970, abs=1e-7)
    p2, _ = from_channel_rates(SET_II)
    a, b = alpha_beta(p2)
    assert a == pytest.approx(6.970911, abs=1e-6)
    assert b == pytest.approx(-6.955822, abs=1e-6)
    ea, eb = oracles.ab(p2.k1, p2.k2, p2.k3)
    assert a == pytest.approx(float(ea), rel=1e-14)
    assert b == pytest.approx(float(eb), rel=1e-14)
    assert alpha_beta(WFParams(0.25, 1, 1))[0] == 0.0


@given(pos, pos, pos)
def test_alpha_beta_round_trip(k1, k2, k3):
    p = WFParams(k1, k2, k3)
    a, b = alpha_beta(p)
    # exact up to one rounding of the largest term involved
    ulp = 4 * np.finfo(float).eps
    assert abs(a + k3**2 / 4 - k1) <= ulp * max(k1, k3**2)
    assert abs(b + k2 - k3**2 / 2) <= ulp * max(k2, k3**2)


def test_alpha_plus_beta_identity_set_i():
    p, _ = from_channel_rates(SET_I)
    assert p.alpha + p.beta == pytest.approx(p.k1 - p.k2 + p.k3**2 / 4, abs=4e-16)


# --- coefficients ----------------------------------------------------------

def test_drift_and_diffusion():
    p, x0 = from_channel_rates(SET_I)
    assert drift(x0, p) == pytest.approx(0, abs=1e-15)
    assert diffusion(0.0, p) == 0.0 and diffusion(1.0, p) == 0.0
    assert diffusion(0.5, p) == pytest.approx(0.123091, abs=5e-7)
    np.testing.assert_allclose(diffusion(np.array([0.25, 0.75]), p), p.k3 * math.sqrt(0.1875))


@pytest.mark.parametrize("x", [-1e-12, 1.0000001, math.nan])
def test_diffusion_domain(x):
    p, _ = from_channel_rates(SET_I)
    with pytest.raises(DomainError):
        diffusion(x, p)


# --- scale function --------------------------------------------------------

def test_scale_density_midpoint_set_i():
    p, _ = from_channel_rates(SET_I)
    # exponents -33 and -66 at y = 1/2 give 2^99
    assert log_scale_density(0.5, p) == pytest.approx(99 * math.log(2), rel=1e-14)
    assert scale_density(0.5, p) == pytest.approx(2.0**99, rel=1e-13)


def test_scale_density_matches_mpmath():
    p = WFParams(0.3, 0.5, 0.7)
    for y in (0.01, 0.3, 0.77, 0.999):
        e1 = -2 * mp.mpf(p.k1) / mp.mpf(p.k3) ** 2
        e2 = 2 * (mp.mpf(p.k1) - p.k2) / mp.mpf(p.k3) ** 2
        ref = mp.mpf(y) ** e1 * (1 - mp.mpf(y)) ** e2
        assert scale_density(y, p) == pytest.approx(float(ref), rel=1e-12)


def test_scale_density_equal_rates_drops_right_factor():
    p = WFParams(0.4, 0.4, 1.0)
    for y in (0.1, 0.9):
        assert scale_density(y, p) == pytest.approx(y ** (-0.8), rel=1e-14)


@pytest.mark.parametrize("y", [0.0, 1.0, -0.5, 2.0])
def test_scale_density_domain(y):
    with pytest.raises(DomainError):
        scale_density(y, WFParams(1, 2, 1))


def test_scale_density_blows_up_like_power_set_i():
    p, _ = from_channel_rates(SET_I)
    # log density slope in log y near 0 is -33 up to the (1-y) factor
    y1, y2 = 1e-6, 2e-6
    slope = (log_scale_density(y2, p) - log_scale_density(y1, p)) / math.log(2)
    assert slope == pytest.approx(-33, abs=1e-3)


# --- classification --------------------------------------------------------

def test_classify_set_i():
    p, _ = from_channel_rates(SET_I)
    rep = classify_boundaries(p)
    assert rep.left_exponent == pytest.approx(33) and rep.right_exponent == pytest.approx(66)
    assert rep.both_unattainable and rep.probe_agrees


def test_classify_counterexample():
    rep = classify_boundaries(WFParams(0.1, 0.2, 1))
    assert rep.left_exponent == pytest.approx(0.2) and rep.right_exponent == pytest.approx(0.2)
    assert not rep.left_unattainable and not rep.right_unattainable
    assert rep.probe_agrees


def test_classify_borderline_harmonic():
    rep = classify_boundaries(WFParams(0.5, 1, 1))
    assert rep.left_exponent == 1.0 and rep.left_unattainable
    assert rep.left_probe.divergent


def test_probe_partial_integrals_grow_for_divergent_end():
    pr = divergence_probe(WFParams(2, 4, 1), "left")
    assert pr.divergent
    assert np.all(np.diff(pr.log_partial) > 0)
    assert pr.growth_last_three > 10


def test_probe_converges_for_attainable_end():
    pr = divergence_probe(WFParams(0.1, 0.2, 1), "right")
    assert not pr.divergent
    assert pr.growth_last_three < 1.01


def test_probe_rejects_bad_side():
    with pytest.raises(ValueError):
        divergence_probe(WFParams(1, 2, 1), "middle")


@settings(max_examples=100)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.2, 2))
def test_probe_agrees_with_exponents(le, re, k3):
    # exponents e = 2^le, bounded away from 1 by at least 0.05
    el, er = 2.0**le, 2.0**re
    if abs(el - 1) < 0.05 or abs(er - 1) < 0.05:
        el, er = el + 0.2, er + 0.2
    k1 = el * k3**2 / 2
    k2 = k1 + er * k3**2 / 2
    rep = classify_boundaries(WFParams(k1, k2, k3))
    assert rep.probe_agrees


# --- step bounds -----------------------------------------------------------

def test_max_stable_step_set_i():
    p, _ = from_channel_rates(SET_I)
    h = max_stable_step(p, SchemeId.SD)
    assert h >= 0.125
    assert h == pytest.approx(-1 / (p.alpha + p.beta), rel=1e-14)
    assert h == pytest.approx(0.5038, abs=1e-4)


def test_max_stable_step_set_ii_alt():
    p, _ = from_channel_rates(SET_II)
    h = max_stable_step(p, SchemeId.SD_ALT)
    assert 0.1437 <= h <= 0.1438
    assert h == pytest.approx(0.143765, abs=1e-6)


def test_max_stable_step_vanishing_sum():
    # alpha + beta = 0: only alpha dt < 1 binds
    p = WFParams(1.25, 1.5, 1.0)
    assert p.alpha + p.beta == 0
    assert max_stable_step(p, SchemeId.SD) == pytest.approx(1 / p.alpha)


@given(pos, pos, st.floats(0.01, 3))
def test_max_stable_step_is_sharp(k1, k2, k3):
    p = WFParams(k1, k2, k3)
    h = max_stable_step(p, SchemeId.SD)
    if h == 0 or not math.isfinite(h):
        return
    ys = np.linspace(0, 1, 101)
    inside = 0.999 * h
    yt = ys * (1 + p.beta * inside) + p.alpha * inside
    assert np.all((yt > 0) & (yt < 1))


def test_max_stable_step_errors():
    with pytest.raises(NotApplicable):
        max_stable_step(WFParams(1, 2, 1), SchemeId.EM)
    with pytest.raises(PreconditionFailed):
        max_stable_step(WFParams(1, 1, 2), SchemeId.SD_ALT)


# --- 3-state ---------------------------------------------------------------

def test_multi_mapping_set_iii():
    m = SET_III
    assert (m.k1_11, m.k1_12, m.k2_1) == (3, -1, 7.6)
    assert (m.k1_21, m.k1_22, m.k2_2) == pytest.approx((1, 0.2, 5.3), abs=1e-15)
    assert (m.k3_11, m.k3_12, m.k3_21, m.k3_23) == (-0.1271, 0.1798, 0.1271, -0.1291)
    np.testing.assert_allclose(multi_drift([0.0, 0.0], m), [3, 1])
    np.testing.assert_allclose(multi_drift([1.0, 0.0], m), [3 - 7.6, 1.2])
    np.testing.assert_allclose(multi_drift([0.0, 1.0], m), [2, 1 - 5.3])


def test_multi_steady_state():
    x = multi_steady_state(SET_III)
    ref = oracles.steady3(SET_III)
    assert x[0] == pytest.approx(0.368083, abs=5e-7) and x[1] == pytest.approx(0.202569, abs=5e-7)
    assert x[0] == pytest.approx(float(ref[0]), rel=1e-14)
    assert 1 - x.sum() == pytest.approx(0.429348, abs=1e-6)
    assert np.max(np.abs(multi_drift(x, SET_III))) < 1e-12


def test_multi_rejects_nonpositive():
    with pytest.raises(InvalidParameter):
        MultiWFParams(1, 2, 3, 1.2, 2.3, 0, 0.1, 0.1, 0.1)


def test_multi_singular(monkeypatch):
    m = MultiWFParams(1, 1, 1, 1, 1, 1, 0.1, 0.1, 0.1)
    # det = k2_1 k2_2 - k1_12 k1_22; force it to vanish through the mapping
    monkeypatch.setattr(MultiWFParams, "k1_12", property(lambda s: s.k2_1))
    monkeypatch.setattr(MultiWFParams, "k1_22", property(lambda s: s.k2_2))
    with pytest.raises(SingularSystem):
        multi_steady_state(m)


def test_presets_lookup():
    assert preset("SET-I") is SET_I
    assert preset("set_iii") is SET_III
    with pytest.raises(InvalidParameter):
        preset("set-iv")
