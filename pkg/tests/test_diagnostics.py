import warnings

import numpy as np
import pytest

from dtacopula.diagnostics import DegenerateChainWarning, ess, mcse, split_rhat, trace


def _ar1(phi, m, n, seed):
    rng = np.random.default_rng(seed)
    x = np.empty((m, n))
    x[:, 0] = rng.normal(size=m) / np.sqrt(1 - phi**2)
    e = rng.normal(size=(m, n))
    for t in range(1, n):
        x[:, t] = phi * x[:, t - 1] + e[:, t]
    return x


def test_rhat_hand_example():
    r = split_rhat([[1, 2, 3, 4], [3, 4, 5, 6]])
    assert r == pytest.approx(np.sqrt(2.9166666666666665 / 0.5), rel=1e-12)
    assert r == pytest.approx(2.4152, abs=1e-4)


def test_rhat_constant_chains():
    with pytest.warns(DegenerateChainWarning):
        assert split_rhat(np.full((2, 10), 3.0)) == 1.0
    # flat within each half but different between chains
    assert split_rhat([[1.0] * 6, [2.0] * 6]) == np.inf


def test_rhat_same_stream():
    x = np.random.default_rng(0).normal(size=(2, 20000))
    assert 0.99 <= split_rhat(x) <= 1.01


def test_rhat_detects_shift():
    x = np.random.default_rng(1).normal(size=(4, 500))
    x[0] += 2.0
    assert split_rhat(x) > 1.1


def test_rhat_affine_and_permutation_invariant():
    x = np.random.default_rng(2).normal(size=(3, 200)) + np.arange(3)[:, None] * 0.3
    r = split_rhat(x)
    assert split_rhat(-2.5 * x + 7.0) == pytest.approx(r, rel=1e-12)
    assert split_rhat(x[[2, 0, 1]]) == pytest.approx(r, rel=1e-12)


def test_ess_white_noise():
    x = np.random.default_rng(3).normal(size=(3, 1000))
    assert ess(x) == pytest.approx(3000, rel=0.10)


def test_ess_ar1():
    phi = 0.9
    x = _ar1(phi, 3, 5000, seed=4)
    assert ess(x) == pytest.approx(15000 * (1 - phi) / (1 + phi), rel=0.20)


def test_ess_bounds_and_invariance():
    for seed in range(5):
        x = _ar1(0.5, 2, 400, seed)
        e = ess(x)
        assert 0 < e <= 800 * 1.5
        assert ess(x[::-1]) == pytest.approx(e, rel=1e-12)
        assert ess(3 * x - 1) == pytest.approx(e, rel=1e-9)
    # antithetic chains can exceed mN but stay bounded
    anti = np.tile([1.0, -1.0], (2, 200)) + np.random.default_rng(0).normal(scale=0.1, size=(2, 400))
    assert ess(anti) <= 800 * np.log10(800)


def test_ess_needs_eight_draws():
    with pytest.raises(ValueError):
        ess(np.zeros((2, 7)))
    with pytest.raises(ValueError):
        split_rhat(np.zeros((2, 3)))


def test_ess_constant():
    with pytest.warns(DegenerateChainWarning):
        assert ess(np.ones((3, 50))) == 150


def test_mcse():
    x = np.random.default_rng(5).normal(size=(4, 2500))
    assert mcse(x) == pytest.approx(0.01, rel=0.1)
    assert mcse(x) == pytest.approx(x.std(ddof=1) / np.sqrt(ess(x)), rel=1e-12)
    with pytest.warns(DegenerateChainWarning):
        assert mcse(np.full((2, 20), 0.4)) == 0.0


def test_nonfinite_rejected():
    x = np.zeros((2, 10))
    x[0, 3] = np.nan
    with pytest.raises(ValueError):
        split_rhat(x)


def test_trace_extracts_columns():
    class CD:
        def __init__(self, a):
            self.generated = {"MUse": a}

    chains = [CD(np.arange(6.0).reshape(3, 2)), CD(np.arange(6.0, 12.0).reshape(3, 2))]
    np.testing.assert_array_equal(trace(chains, "MUse", 1), [[1, 3, 5], [7, 9, 11]])


def test_no_warning_on_regular_input():
    x = np.random.default_rng(6).normal(size=(2, 100))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        split_rhat(x)
        ess(x)
