import numpy as np
import numpy.testing as npt
import pytest

from oracles import batch_conjugate, scalar_filter, t_logpdf_closed
from seqbps.dlm import DiscountConfig, DLMMoments
from seqbps.synthesis import (
    SynthesisConfig,
    conditional_predictive_logpdf,
    default_synthesis,
    synthesis_regressor,
)


def test_regressor_examples():
    npt.assert_array_equal(synthesis_regressor([0, 0, 0, 0]), [1, 0, 0, 0, 0])
    assert synthesis_regressor(np.arange(4.0)).size == 5
    x = np.array([0.3, -1.0, 2.0, 5.0])
    perm = np.array([2, 0, 3, 1])
    F, Fp = synthesis_regressor(x), synthesis_regressor(x[perm])
    assert Fp[0] == 1.0
    npt.assert_array_equal(Fp[1:], F[1:][perm])


def test_default_synthesis_hyperparameters():
    cfg = default_synthesis()
    npt.assert_array_equal(cfg.init.m, [0.0, 0.25, 0.25, 0.25, 0.25])
    npt.assert_array_equal(cfg.init.C, np.eye(5))
    assert (cfg.init.n, cfg.init.s, cfg.beta, cfg.delta, cfg.K) == (10.0, 0.002, 0.99, 0.95, 4)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        conditional_predictive_logpdf(default_synthesis().init, default_synthesis(), [1.0, 2.0], 0.0)


def test_purity():
    cfg = default_synthesis(K=2)
    a = conditional_predictive_logpdf(cfg.init, cfg, [1.0, 2.0], 1.7)
    b = conditional_predictive_logpdf(cfg.init, cfg, [1.0, 2.0], 1.7)
    assert a[0] == b[0]
    npt.assert_array_equal(a[1].m, b[1].m)
    npt.assert_array_equal(a[1].C, b[1].C)


def test_three_step_scalar_filter_k1():
    cfg = SynthesisConfig(DLMMoments([0.1, 0.9], [[1.0, 0.1], [0.1, 0.5]], 5.0, 0.02), DiscountConfig(0.97, 0.9))
    xs = [1.2, 0.4, -0.3]
    ys = [1.0, 0.7, 0.1]
    ref = scalar_filter([[1.0, x] for x in xs], ys, [0.1, 0.9], [[1.0, 0.1], [0.1, 0.5]], 5.0, 0.02, 0.97, 0.9)
    mom = cfg.init
    for (x, y), r in zip(zip(xs, ys), ref):
        score, mom = conditional_predictive_logpdf(mom, cfg, [x], y)
        assert score == pytest.approx(r[0], abs=1e-12)
        npt.assert_allclose(mom.m, r[1], atol=1e-13)


def test_intercept_only_is_conjugate_location_model():
    rng = np.random.default_rng(0)
    y = rng.normal(1.5, 0.7, 12)
    cfg = SynthesisConfig(DLMMoments([0.0], [[2.0]], 3.0, 0.4), DiscountConfig(1.0, 1.0))
    mom = cfg.init
    for t in range(y.size):
        m, C, n, s, _ = batch_conjugate(np.ones((t, 1)), y[:t], [0.0], [[2.0]], 3.0, 0.4)
        expected = t_logpdf_closed(y[t], n, m[0], s + C[0, 0])
        score, mom = conditional_predictive_logpdf(mom, cfg, [], y[t])
        assert score == pytest.approx(expected, abs=1e-10)
