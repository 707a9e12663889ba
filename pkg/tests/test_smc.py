import numpy as np
import numpy.testing as npt
import pytest
from scipy import integrate

from oracles import importance_evidence
from seqbps import kernels, smc
from seqbps.agents import AgentForecast, ForecastPath
from seqbps.dlm import DiscountConfig, DLMMoments, forward_filter
from seqbps.pipeline import DBPSPipeline
from seqbps.synthesis import SynthesisConfig, default_synthesis
from seqbps.synthetic import simulate_synthesis


def _path(e, mu, H):
    T, K = mu.shape
    return ForecastPath(tuple(f"a{k}" for k in range(K)), tuple(str(t) for t in range(T)), e, mu, H, np.zeros((T, K)))


def _point_mass_problem(T=25, K=2, seed=0):
    rng = np.random.default_rng(seed)
    mu = rng.normal(2, 0.5, (T, K))
    y = 0.3 + mu @ np.full(K, 1 / K) + 0.2 * rng.standard_normal(T)
    return y, np.full((T, K), 6.0), mu, np.zeros((T, K))


# ------------------------------------------------------------------ ess
def test_ess_examples():
    assert smc.ess(np.full(10000, 1e-4)) == pytest.approx(10000)
    assert smc.ess(np.array([1.0, 0.0, 0.0])) == 1.0
    assert smc.ess(np.array([0.5, 0.5, 0.0, 0.0])) == 2.0


def test_ess_bounds(rng):
    for _ in range(20):
        w = rng.dirichlet(np.full(50, 0.3))
        assert 1.0 - 1e-12 <= smc.ess(w) <= 50 + 1e-9


# ------------------------------------------------------------------ init
def test_init_point_mass_equal_weights(rng):
    cfg = default_synthesis(K=2)
    fc = AgentForecast([5.0, 5.0], [1.0, 2.0], [0.0, 0.0])
    cloud = smc.init(50, cfg, fc, 1.7, rng)
    npt.assert_allclose(cloud.weights, 1 / 50, rtol=1e-13)
    npt.assert_array_equal(cloud.m, np.broadcast_to(cloud.m[0], cloud.m.shape))


def test_init_forced_minus_infinity(monkeypatch, rng):
    real = kernels.rb_update

    def fake(*args):
        out = list(real(*args))
        out[-1] = np.array([0.0, -np.inf])
        return tuple(out)

    monkeypatch.setattr(kernels, "rb_update", fake)
    cloud = smc.init(2, default_synthesis(K=1), AgentForecast([5.0], [1.0], [1.0]), 0.5, rng)
    npt.assert_array_equal(cloud.weights, [1.0, 0.0])


def test_init_all_zero_raises(monkeypatch, rng):
    real = kernels.rb_update
    monkeypatch.setattr(kernels, "rb_update", lambda *a: (*real(*a)[:-1], np.full(3, -np.inf)))
    with pytest.raises(smc.DegenerateWeightsError):
        smc.init(3, default_synthesis(K=1), AgentForecast([5.0], [1.0], [1.0]), 0.5, rng)


def test_init_rejects_single_particle(rng):
    with pytest.raises(ValueError):
        smc.init(1, default_synthesis(K=1), AgentForecast([5.0], [1.0], [1.0]), 0.5, rng)


def test_weights_normalised_random_inputs():
    rng = np.random.default_rng(1)
    cfg = default_synthesis(K=3)
    for _ in range(5):
        fc = AgentForecast(rng.uniform(3, 10, 3), rng.normal(0, 2, 3), rng.uniform(0.1, 3, 3))
        cloud = smc.init(200, cfg, fc, rng.normal(), rng)
        assert abs(cloud.weights.sum() - 1) < 1e-12
        cloud = smc.step(cloud, cfg, fc, rng.normal(), rng)
        assert abs(cloud.weights.sum() - 1) < 1e-12 and np.all(cloud.weights >= 0)


# ------------------------------------------------------------------ step
def test_point_mass_matches_analytic_filter(backend):
    y, e, mu, H = _point_mass_problem()
    cfg = default_synthesis(K=2)
    pipe = DBPSPipeline(y, _path(e, mu, H), cfg, 0, 64, seed=3)
    recs = pipe.run(len(y))
    ref = forward_filter(zip(np.column_stack([np.ones(len(y)), mu]), y), cfg.init, cfg.discounts)
    npt.assert_allclose([r.logscore for r in recs], ref.logscores, atol=1e-10)
    npt.assert_allclose([r.ess for r in recs], 64, rtol=1e-12)
    npt.assert_allclose(pipe.cloud.m, np.broadcast_to(ref.final.m, pipe.cloud.m.shape), atol=1e-10)
    npt.assert_allclose(pipe.cloud.C, np.broadcast_to(ref.final.C, pipe.cloud.C.shape), atol=1e-10)


def test_resampling_reproducible():
    w = np.full(1000, 1e-3)
    a = smc.resample(w, smc.stream(7, 0, 3, 0))
    b = smc.resample(w, smc.stream(7, 0, 3, 0))
    npt.assert_array_equal(a, b)
    assert a.min() >= 0 and a.max() < 1000


def test_systematic_resampling_counts(rng):
    w = rng.dirichlet(np.ones(20))
    idx = smc.resample(w, rng, "systematic")
    counts = np.bincount(idx, minlength=20)
    assert np.all(np.abs(counts - 20 * w) < 1 + 1e-9)
    with pytest.raises(ValueError):
        smc.resample(w, rng, "stratified-ish")


def test_multinomial_resampling_frequencies(rng):
    w = np.array([0.1, 0.6, 0.3])
    idx = smc.resample(w, rng, size=200_000)
    freq = np.bincount(idx, minlength=3) / idx.size
    npt.assert_allclose(freq, w, atol=4 * np.sqrt(0.25 / idx.size))


def test_substreams_independent_of_pipeline_count():
    a = smc.stream(11, 3, 70, 0).random(4)
    _ = smc.stream(11, 2, 70, 0).random(4)
    b = smc.stream(11, 3, 70, 0).random(4)
    npt.assert_array_equal(a, b)
    assert not np.array_equal(a, smc.stream(11, 3, 70, 1).random(4))


def test_adaptive_flag_skips_resampling_when_healthy(rng):
    cfg = default_synthesis(K=1)
    fc = AgentForecast([8.0], [1.0], [0.001])
    cloud = smc.init(100, cfg, fc, 1.0, rng)
    nxt = smc.step(cloud, cfg, fc, 1.0, np.random.default_rng(0), adaptive=True)
    # no resampling: the moments keep particle order
    ref = kernels.rb_update(cloud.m, cloud.C, cloud.n, cloud.s,
                            smc.draw_agents(fc.e, fc.mu, fc.H, 100, np.random.default_rng(0)), 1.0,
                            cfg.beta, cfg.delta)
    npt.assert_allclose(nxt.m, ref[0], rtol=1e-12)


def test_log_evidence_against_importance_oracle():
    rng = np.random.default_rng(2024)
    T = 60
    cfg = SynthesisConfig(DLMMoments([0.0, 1.0], np.eye(2), 10.0, 0.05), DiscountConfig(0.99, 0.95))
    e = np.full((T, 1), 10.0)
    mu = np.cumsum(0.2 * rng.standard_normal((T, 1)), axis=0)
    H = np.full((T, 1), 0.002)
    sim = simulate_synthesis(T, 1, cfg.init.m, cfg.init.C, cfg.init.n, cfg.init.s, rng, e, mu, H)
    oracle, lw = importance_evidence(sim.y, e, mu, H, cfg.init.m, cfg.init.C, cfg.init.n, cfg.init.s,
                                    0.99, 0.95, 200_000, np.random.default_rng(5))
    w = np.exp(lw - lw.max())
    assert w.sum() ** 2 / (w * w).sum() > 100, "oracle degenerate"
    pipe = DBPSPipeline(sim.y, _path(e, mu, H), cfg, 0, 20_000, seed=9, record_predictive=False)
    pipe.run(T)
    assert abs(pipe.cloud.log_evidence - oracle) < 0.05


def test_rao_blackwell_variance_gain():
    rng = np.random.default_rng(77)
    T, K, M = 60, 2, 300
    cfg = SynthesisConfig(DLMMoments(np.zeros(3), np.eye(3), 10.0, 0.05), DiscountConfig(1.0, 1.0))
    e = np.full((T, K), 8.0)
    mu = rng.normal(1, 0.5, (T, K))
    H = np.full((T, K), 0.1)
    y = simulate_synthesis(T, K, cfg.init.m, cfg.init.C, cfg.init.n, cfg.init.s, rng, e, mu, H).y
    rb, plain = [], []
    for r in range(50):
        g1, g2 = np.random.default_rng(1000 + r), np.random.default_rng(5000 + r)
        c1 = smc.init(M, cfg, AgentForecast(e[0], mu[0], H[0]), y[0], g1)
        c2 = smc.init(M, cfg, AgentForecast(e[0], mu[0], H[0]), y[0], g2)
        for t in range(1, T):
            fc = AgentForecast(e[t], mu[t], H[t])
            c1 = smc.step(c1, cfg, fc, y[t], g1)
            c2 = smc.step_sampled_phi(c2, cfg, fc, y[t], g2)
        rb.append(c1.log_evidence)
        plain.append(c2.log_evidence)
    assert np.var(rb) <= np.var(plain)


# ------------------------------------------------------------------ intervention
def _cloud(weights, M=None):
    M = weights.size
    cfg = default_synthesis(K=1)
    return smc.ParticleCloud(np.zeros((M, 2)), np.broadcast_to(np.eye(2), (M, 2, 2)).copy(), np.full(M, 10.0),
                             np.full(M, 0.002), weights, 4), cfg


def _window(L=5):
    rng = np.random.default_rng(3)
    return rng.normal(size=L), np.full((L, 1), 5.0), rng.normal(size=(L, 1)), np.full((L, 1), 0.5)


def test_intervention_trigger_exact(rng):
    y, e, mu, H = _window()
    for w in (np.array([0.7, 0.1, 0.1, 0.1]), np.full(4, 0.25), np.array([1.0, 0, 0, 0])):
        cloud, cfg = _cloud(w)
        value = smc.ess(cloud)
        for C in (1.0, 1.5, value, 2.5, 4.0):
            new, entry = smc.maybe_intervene(cloud, C, y, e, mu, H, cfg, rng, chain_size=8)
            assert (entry is not None) == (value < C)
            if entry is None:
                assert new is cloud
            else:
                assert entry.ess == pytest.approx(value) and entry.ess < C and entry.chain_size == 8
                assert new.M == 8 and np.allclose(new.weights, 1 / 8)


def test_intervention_threshold_range(rng):
    cloud, cfg = _cloud(np.full(4, 0.25))
    y, e, mu, H = _window()
    with pytest.raises(ValueError):
        smc.maybe_intervene(cloud, 0.5, y, e, mu, H, cfg, rng)
    with pytest.raises(ValueError):
        smc.maybe_intervene(cloud, 5.0, y, e, mu, H, cfg, rng)


def _noisy_problem(T=20, K=2):
    rng = np.random.default_rng(21)
    mu = rng.normal(2, 0.5, (T, K))
    y = mu.mean(axis=1) + 0.3 * rng.standard_normal(T)
    return y, _path(np.full((T, K), 6.0), mu, np.full((T, K), 0.3))


def test_threshold_one_never_intervenes():
    y, fp = _noisy_problem()
    pipe = DBPSPipeline(y, fp, default_synthesis(K=2), 0, 100, threshold=1.0, seed=1)
    pipe.run(len(y))
    assert pipe.interventions == []


def test_threshold_m_intervenes_every_step():
    y, fp = _noisy_problem(T=8)
    pipe = DBPSPipeline(y, fp, default_synthesis(K=2), 0, 50, threshold=50.0, seed=1, burn_in=5)
    pipe.run(len(y))
    assert [i.t for i in pipe.interventions] == list(range(1, 8))
    assert all(r.intervened for r in pipe.records[1:])


def test_intervention_keeps_score_and_resets_weights():
    y, fp = _noisy_problem(T=10)
    a = DBPSPipeline(y, fp, default_synthesis(K=2), 0, 60, threshold=60.0, seed=4, burn_in=5)
    b = DBPSPipeline(y, fp, default_synthesis(K=2), 0, 60, seed=4)
    ra, rb = a.advance(), b.advance()
    ra, rb = a.advance(), b.advance()
    # the score at t comes from the pre-intervention weights
    assert ra.logscore == rb.logscore
    npt.assert_allclose(a.cloud.weights, 1 / 60)


# ------------------------------------------------------------------ predictive
def test_predictive_point_mass_collapses(rng):
    y, e, mu, H = _point_mass_problem(T=10)
    cfg = default_synthesis(K=2)
    pipe = DBPSPipeline(y[:9], _path(e, mu, H), cfg, 0, 20, seed=2)
    pipe.run(9)
    mix = smc.synthesized_predictive(pipe.cloud, cfg, AgentForecast(e[9], mu[9], H[9]), rng)
    ref = forward_filter(zip(np.column_stack([np.ones(10), mu]), y), cfg.init, cfg.discounts)
    d = list(ref)[9].predictive
    npt.assert_allclose(mix.dof, d.dof, rtol=1e-12)
    npt.assert_allclose(mix.loc, d.loc, rtol=1e-10)
    npt.assert_allclose(mix.scale2, d.scale2, rtol=1e-10)
    npt.assert_allclose(mix.logpdf(y[9]), ref.logscores[9], atol=1e-10)


def _predictive_example():
    y, fp = _noisy_problem()
    cfg = default_synthesis(K=2)
    pipe = DBPSPipeline(y, fp, cfg, 0, 400, seed=6)
    pipe.run(15)
    return smc.synthesized_predictive(pipe.cloud, cfg, fp.at(15), np.random.default_rng(8))


def test_predictive_integrates_to_one():
    mix = _predictive_example()
    sd = np.sqrt(np.max(mix.scale2 * mix.dof / np.maximum(mix.dof - 2, 1e-9)))
    grid = np.linspace(mix.loc.min() - 20 * sd, mix.loc.max() + 20 * sd, 40_001)
    area = integrate.trapezoid(np.exp(mix.logpdf(grid)), grid)
    assert abs(area - 1) < 1e-3


def test_predictive_sample_quantiles_match_cdf_inversion():
    mix = _predictive_example()
    draws = mix.sample(100_000, np.random.default_rng(9))
    sd = np.sqrt(np.max(mix.scale2))
    grid = np.linspace(mix.loc.min() - 40 * sd, mix.loc.max() + 40 * sd, 200_001)
    cdf = mix.cdf(grid)
    for p in (0.05, 0.5, 0.95):
        inv = np.interp(p, cdf, grid)
        assert abs(np.quantile(draws, p) - inv) < 0.02
