import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vehfog.geometry import ObstacleMap, Obstruction, Rect
from vehfog.radio import (AttenuationParams, LinkBudget, classify_receiver, distance_from_loss,
                          fspl_db, obstacle_attenuation, received_power)

DEFAULT = LinkBudget()
ATT = AttenuationParams()


def test_defaults():
    assert (DEFAULT.P_t, DEFAULT.G_t, DEFAULT.G_r) == (20, 0, 0)
    assert (DEFAULT.f_mhz, DEFAULT.sensitivity, DEFAULT.margin) == (5900, -85, 3)
    assert (ATT.alpha, ATT.beta) == (9.0, 0.4)


# independent arithmetic: 20*log10(5900) = 75.41704..., log10(2)*20 = 6.0206
LOG_5900 = 20 * math.log10(5900)
# 32.44 + 20*log10(0.2) + 20*log10(5900), evaluated term by term
FSPL_200 = 32.44 - 13.979400086720376 + 75.417040232842880


def test_fspl_examples():
    assert fspl_db(1000, 5900) == pytest.approx(107.857, abs=5e-4)
    assert fspl_db(1000, 5900) == pytest.approx(32.44 + LOG_5900, abs=1e-12)
    assert fspl_db(1000, 1) == pytest.approx(32.44, abs=1e-12)
    assert fspl_db(2000, 5900) == pytest.approx(113.878, abs=5e-4)
    assert fspl_db(200, 5900) == pytest.approx(FSPL_200, abs=1e-9)
    assert fspl_db(200, 5900) == pytest.approx(93.879, abs=2e-3)


@pytest.mark.parametrize("d, f", [(0, 5900), (-1, 5900), (100, 0), (100, -5)])
def test_fspl_domain(d, f):
    with pytest.raises(ValueError):
        fspl_db(d, f)


def test_distance_from_loss_examples():
    assert distance_from_loss(107.857, 5900) == pytest.approx(1000, rel=1e-4)
    assert distance_from_loss(32.44, 1) == pytest.approx(1000, rel=1e-12)
    with pytest.raises(ValueError):
        distance_from_loss(50, 0)


@given(st.floats(1, 1e5))
def test_fspl_inverse(d):
    assert distance_from_loss(fspl_db(d, 5900), 5900) == pytest.approx(d, rel=1e-6)


def test_attenuation_examples():
    assert obstacle_attenuation(Obstruction(0, 0), ATT) == 0
    assert obstacle_attenuation(Obstruction(2, 20), ATT) == pytest.approx(26.0)
    assert obstacle_attenuation(Obstruction(1, 10), ATT) == pytest.approx(13.0)


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 500), st.integers(0, 500))
def test_attenuation_linear(n1, n2, l1, l2):
    # integer lengths and dyadic-free coefficients keep the sums exact
    p = AttenuationParams(9.0, 0.5)
    whole = obstacle_attenuation(Obstruction(n1 + n2, l1 + l2), p)
    parts = obstacle_attenuation(Obstruction(n1, l1), p) + obstacle_attenuation(Obstruction(n2, l2), p)
    assert whole == parts


def test_received_power_examples():
    assert received_power(DEFAULT, 0, 0) == 20
    assert received_power(DEFAULT, 107.857, 0) == pytest.approx(-87.857)
    assert received_power(DEFAULT, 107.857, 26) == pytest.approx(-113.857)


@given(st.floats(0, 200), st.floats(0, 200), st.floats(0.001, 50))
def test_received_power_monotone_in_shadow(pl, o, extra):
    assert received_power(DEFAULT, pl, o + extra) < received_power(DEFAULT, pl, o)


def test_validation():
    with pytest.raises(ValueError):
        LinkBudget(f_mhz=0)
    with pytest.raises(ValueError):
        LinkBudget(margin=-1)
    with pytest.raises(ValueError):
        AttenuationParams(alpha=-1)


# one 20 m deep building on the 200 m path gives n=2, l_obs=20
WALLS = ObstacleMap((Rect(90, -20, 110, 20),), Rect(-10, -50, 300, 50))


def test_classify_shadowed():
    rc = classify_receiver(WALLS, DEFAULT, ATT, (0, 0), (200, 0))
    assert rc.obstruction == (2, pytest.approx(20))
    assert rc.O_shadow == pytest.approx(26.0)
    assert rc.P_r == pytest.approx(20 - FSPL_200 - 26, abs=1e-9)
    assert rc.P_r == pytest.approx(-99.88, abs=5e-3)
    assert rc.loc == 1


def test_classify_zero_attenuation_is_clear():
    rc = classify_receiver(WALLS, DEFAULT, AttenuationParams(0, 0), (0, 0), (200, 0))
    assert rc.P_r == pytest.approx(20 - FSPL_200, abs=1e-9)
    assert rc.loc == 0


def test_clear_los_never_shadowed_even_below_sensitivity():
    rc = classify_receiver(WALLS, LinkBudget(P_t=-40), ATT, (0, 30), (200, 30))
    assert rc.P_r < -85 and rc.loc == 0
    assert not rc.decodable(DEFAULT)


def test_margin_band():
    # one thin wall: loss just above the margin band is still shadowed
    thin = ObstacleMap((Rect(50, -20, 50.5, 20),), Rect(-10, -50, 300, 50))
    rc = classify_receiver(thin, LinkBudget(P_t=20), AttenuationParams(0.1, 0), (0, 0), (200, 0))
    assert rc.P_r > -85 + 3 and rc.loc == 0
    rc = classify_receiver(thin, LinkBudget(P_t=11), AttenuationParams(0.1, 0), (0, 0), (200, 0))
    assert -85 < rc.P_r < -82 and rc.loc == 1


def test_classify_errors():
    with pytest.raises(ValueError):
        classify_receiver(WALLS, DEFAULT, ATT, (0, 0), (0, 0))
    with pytest.raises(ValueError):
        classify_receiver(WALLS, DEFAULT, ATT, (0, 0), (250, 0), trans_range=200)


coord = st.floats(-1000, 1000)


@given(st.tuples(coord, coord), st.tuples(coord, coord))
def test_empty_map_always_clear(a, b):
    if a == b:
        return
    empty = ObstacleMap.empty((-1000, -1000, 1000, 1000))
    assert classify_receiver(empty, DEFAULT, ATT, a, b).loc == 0
