import numpy as np
import numpy.testing as npt
import pytest
from scipy import stats

from oracles import batch_conjugate
from seqbps.agents import (
    AgentBank,
    AgentForecast,
    AgentSpec,
    MacroSeries,
    build_regressors,
    draw_agents,
    format_quarter,
    default_agents,
    parse_quarter,
    run_agents,
    sample_agent_draw,
)
from seqbps.dlm import DiscountConfig, DLMMoments


def _series(T=20, seed=0, start="1961Q1"):
    rng = np.random.default_rng(seed)
    q0 = parse_quarter(start)
    dates = [format_quarter(q0 + i) for i in range(T)]
    return MacroSeries(dates, rng.normal(3, 1, T), rng.normal(6, 1, T), rng.normal(5, 1, T))


def test_quarter_labels_round_trip():
    assert parse_quarter("1961Q1") + 247 == parse_quarter("2022Q4")
    assert format_quarter(parse_quarter("1990-Q1")) == "1990Q1"
    with pytest.raises(ValueError):
        parse_quarter("1990Q5")


def test_macro_series_rejects_gaps_and_disorder():
    with pytest.raises(ValueError, match="1961Q2"):
        MacroSeries(["1961Q1", "1961Q3"], [1, 2], [1, 2], [1, 2])
    with pytest.raises(ValueError):
        MacroSeries(["1961Q2", "1961Q1"], [1, 2], [1, 2], [1, 2])
    with pytest.raises(ValueError):
        MacroSeries(["1961Q1", "1961Q2"], [1, 2], [1], [1, 2])


def test_m1_regressor():
    data = _series()
    m1 = default_agents()[0]
    F = build_regressors(m1, data, 5)
    npt.assert_array_equal(F, [1.0, data.y[4]])


def test_m2_regressor_order_and_length():
    data = _series()
    m2 = default_agents()[1]
    F = build_regressors(m2, data, 10)
    assert F.size == 10
    expected = [1.0, *data.y[[9, 8, 7]], *data.u[[9, 8, 7]], *data.r[[9, 8, 7]]]
    npt.assert_array_equal(F, expected)


def test_insufficient_history():
    data = _series()
    m4 = default_agents()[3]
    with pytest.raises(ValueError):
        build_regressors(m4, data, 0)


def test_default_agent_hyperparameters():
    for spec in default_agents():
        npt.assert_array_equal(spec.init.m, np.zeros(spec.dim))
        npt.assert_array_equal(spec.init.C, np.eye(spec.dim))
        assert (spec.init.n, spec.init.s) == (2.0, 0.01)
        assert (spec.config.beta, spec.config.delta) == (0.99, 0.95)
    assert [s.dim for s in default_agents()] == [2, 10, 4, 4]


def test_identical_agents_identical_forecasts():
    data = _series(30)
    spec = default_agents()[2]
    twin = AgentSpec("twin", spec.lags, spec.init, spec.config)
    path = run_agents([spec, twin], data)
    npt.assert_array_equal(path.mu[:, 0], path.mu[:, 1])
    npt.assert_array_equal(path.H[:, 0], path.H[:, 1])


def test_unit_discount_agent_matches_batch_predictive():
    rng = np.random.default_rng(3)
    T = 60
    data = MacroSeries([format_quarter(7844 + i) for i in range(T)], rng.normal(2, 0.5, T),
                       rng.normal(6, 1, T), rng.normal(5, 1, T))
    spec = AgentSpec("iid", (("u", 1),), DLMMoments.default(2), DiscountConfig(1.0, 1.0))
    path = run_agents([spec], data)
    X = np.column_stack([np.ones(T - 1), data.u[:-1]])
    y = data.y[1:]
    for t in (10, 30, T - 1):
        m, C, n, s, _ = batch_conjugate(X[:t - 1], y[:t - 1], np.zeros(2), np.eye(2), 2.0, 0.01)
        F = np.array([1.0, data.u[t - 1]])
        npt.assert_allclose(path.mu[t, 0], F @ m, rtol=1e-9)
        npt.assert_allclose(path.H[t, 0], s + F @ C @ F, rtol=1e-9)
        npt.assert_allclose(path.e[t, 0], n, rtol=1e-12)


def test_forecast_ignores_current_period():
    data = _series(25, seed=4)
    bank = AgentBank(default_agents())
    for t in range(3, 11):
        bank.update(data, t)
    fc = bank.forecast(data, 11)
    y = np.array(data.y)
    y[11] += 100.0
    u = np.array(data.u)
    u[11] -= 50.0
    bumped = MacroSeries(data.dates, y, u, data.r)
    fc2 = bank.forecast(bumped, 11)
    npt.assert_array_equal(fc.mu, fc2.mu)
    npt.assert_array_equal(fc.H, fc2.H)


def test_agent_step_forecasts_before_updating():
    data = _series(12, seed=5)
    a, b = AgentBank(default_agents()), AgentBank(default_agents())
    for t in range(3, 8):
        fc = a.agent_step(data, t)
        npt.assert_array_equal(fc.mu, b.forecast(data, t).mu)
        b.update(data, t)


def test_run_agents_nan_before_start_and_bank_agreement():
    data = _series(15, seed=6)
    specs = default_agents()
    path = run_agents(specs, data)
    assert np.isnan(path.mu[0]).all()
    npt.assert_array_equal(np.isnan(path.mu[2]), [False, True, True, False])
    bank = AgentBank([specs[1]])
    for t in range(3, 15):
        fc = bank.agent_step(data, t)
        npt.assert_allclose(fc.mu[0], path.mu[t, 1], rtol=1e-14)


def test_point_mass_draws_equal_mean(rng):
    x = sample_agent_draw(AgentForecast([5.0, 3.0], [1.5, -2.0], [0.0, 0.0]), rng, size=1000)
    npt.assert_array_equal(x, np.tile([1.5, -2.0], (1000, 1)))


def test_draw_moments():
    rng = np.random.default_rng(7)
    n = 10**6
    x = draw_agents(np.array([5.0]), np.array([2.0]), np.array([1.0]), n, rng)[:, 0]
    var = 5.0 / 3.0
    assert abs(x.mean() - 2.0) < 3 * np.sqrt(var / n)
    # fourth central moment of t_5 is 9 var^2 (excess kurtosis 6)
    assert abs(x.var() - var) < 3 * np.sqrt(8 * var**2 / n)


def test_scale_mixture_matches_t_cdf():
    rng = np.random.default_rng(8)
    x = draw_agents(np.array([4.0]), np.array([0.5]), np.array([2.0]), 10**5, rng)[:, 0]
    ks = stats.kstest(x, stats.t(df=4.0, loc=0.5, scale=np.sqrt(2.0)).cdf).statistic
    assert ks < 0.01


def test_draws_reproducible():
    fc = AgentForecast([5.0, 6.0], [0.0, 1.0], [1.0, 2.0])
    a = sample_agent_draw(fc, np.random.default_rng(9), size=5)
    b = sample_agent_draw(fc, np.random.default_rng(9), size=5)
    npt.assert_array_equal(a, b)


def test_forecast_validation():
    with pytest.raises(ValueError):
        AgentForecast([0.0], [1.0], [1.0])
    with pytest.raises(ValueError):
        AgentForecast([1.0], [1.0], [-1.0])
    with pytest.raises(ValueError):
        AgentForecast([1.0, 2.0], [1.0], [1.0])


def test_spec_validation():
    with pytest.raises(ValueError):
        AgentSpec("bad", (("y", 0),))
    with pytest.raises(ValueError):
        AgentSpec("bad", (("z", 1),))
    assert AgentSpec("intercept").dim == 1
