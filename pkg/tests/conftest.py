import pytest

from ctdhedge import CorrelationMatrix, HullWhiteSpec, MarketModel, SpreadCurve


@pytest.fixture(scope="session")
def flat_pair_model():
    """Two flat spreads (140 / 133 bps), zero domestic rate, rho = 0.5."""
    horizon = 25.0
    dom = HullWhiteSpec(0.01, 0.0, SpreadCurve.constant(0.0, 0.0, horizon))
    s1 = HullWhiteSpec(0.0078, 0.0018, SpreadCurve.constant(0.014, 0.0, horizon))
    s2 = HullWhiteSpec(0.0076, 0.0023, SpreadCurve.constant(0.0133, 0.0, horizon))
    return MarketModel(dom, [s1, s2], CorrelationMatrix.from_single(0.5))


@pytest.fixture(scope="session")
def small_spread_model():
    """Market-scale spreads with a stochastic domestic rate."""
    horizon = 15.0
    dom = HullWhiteSpec(0.04, 0.007, SpreadCurve.linear(0.0, horizon, 0.02, 0.025))
    s1 = HullWhiteSpec(0.0078, 0.0018, SpreadCurve.constant(0.003, 0.0, horizon))
    s2 = HullWhiteSpec(0.0076, 0.0023, SpreadCurve.linear(0.0, horizon, 0.001, 0.004))
    return MarketModel(dom, [s1, s2], CorrelationMatrix.from_single(0.3))


@pytest.fixture(scope="session")
def crossing_model():
    """Spread forecasts engineered to cross at exactly t = 3.6."""
    horizon = 12.0
    dom = HullWhiteSpec(0.01, 0.0, SpreadCurve.constant(0.0, 0.0, horizon))
    # q1 falls through q2 at t = 3.6
    s1 = HullWhiteSpec(0.0078, 0.0018, SpreadCurve.linear(0.0, horizon, 0.004, 0.004 - 12 * 0.0005))
    s2 = HullWhiteSpec(0.0076, 0.0023, SpreadCurve.constant(0.004 - 3.6 * 0.0005, 0.0, horizon))
    return MarketModel(dom, [s1, s2], CorrelationMatrix.from_single(0.3))
