import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mortpca.errors import DomainError
from mortpca.ingest import RatePanel, SeriesKey, week_range
from mortpca.transform import inverse_logit, logit, logit_panel, rate_panel

# ln(0.001 / 0.999) evaluated with 40-digit arithmetic
LOGIT_0001 = -6.906754778648553518553831381799
# 1 / (1 + e^700) evaluated with 40-digit arithmetic
EXPIT_M700 = 9.859676543759770856705372947849e-305

rates_open = st.floats(1e-8, 1 - 1e-8)


def test_logit_symmetry_point():
    assert logit(0.5) == 0.0
    assert inverse_logit(0.0) == 0.5


def test_logit_antisymmetric():
    assert logit(0.2) == pytest.approx(-logit(0.8), abs=1e-15)


def test_logit_small_rate_oracle():
    assert logit(0.001) == pytest.approx(LOGIT_0001, rel=1e-15)
    assert round(logit(0.001), 9) == -6.906754779


@pytest.mark.parametrize("r", [1e-6, 0.3, 0.999])
def test_round_trip_examples(r):
    assert abs(inverse_logit(logit(r)) - r) <= 1e-12


def test_far_negative_logit_stays_positive():
    v = inverse_logit(-700.0)
    assert 0 < v < 1e-300
    assert v == pytest.approx(EXPIT_M700, rel=1e-12)


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.2, 1.3, math.nan])
def test_logit_domain(bad):
    with pytest.raises(DomainError):
        logit(bad)


def test_inverse_logit_rejects_non_finite():
    with pytest.raises(DomainError):
        inverse_logit(np.array([0.0, np.inf]))


@given(rates_open, rates_open)
def test_logit_monotone(a, b):
    if a < b:
        assert logit(a) < logit(b)


@given(rates_open)
def test_round_trip_property(r):
    assert abs(inverse_logit(logit(r)) - r) <= 1e-12


def _panel(rates):
    n, m = rates.shape
    series = [SeriesKey("AUT", "M" if j < 4 else "F", ("0-64", "65-74", "75-84", "85+")[j % 4])
              for j in range(m)]
    return RatePanel(week_range(0, n), series, rates, np.full(rates.shape, 1e4))


def test_half_panel_gives_zero_logits():
    lp = logit_panel(_panel(np.full((5, 8), 0.5)))
    assert not lp.values.any()


def test_panel_matches_scalar_loop(rng):
    rates = rng.uniform(1e-6, 0.2, (30, 8))
    lp = logit_panel(_panel(rates))
    oracle = np.array([[math.log(r / (1 - r)) for r in row] for row in rates])
    np.testing.assert_allclose(lp.values, oracle, rtol=1e-13, atol=1e-13)


def test_panel_round_trip(rng):
    panel = _panel(rng.uniform(1e-8, 1 - 1e-8, (20, 8)))
    back = rate_panel(logit_panel(panel), panel.exposures)
    assert np.max(np.abs(back.rates - panel.rates)) <= 1e-12
    assert back.weeks == panel.weeks and back.series == panel.series
