import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from dtacopula import _dual as dm
from dtacopula import copulas as cp
from dtacopula import models as mdl
from dtacopula.data import Dataset, StudyRecord, builtin_dataset
from dtacopula.models import BRMAParams, CopulaParams, ModelSpec, build_model

KINDS = ["gauss", "frank", "fgm", "c90", "c270", "brma"]
PARAMS = ["noncentered", "centered"]


@pytest.fixture(scope="module")
def telo():
    return builtin_dataset("telomerase")


def _two_studies(tp=25, nd=33, tn=2, nh=2):
    return Dataset.from_records([StudyRecord("a", tp, nd, tn, nh), StudyRecord("b", 1, 2, 1, 2)])


def _copula_params(theta_t, n, pi, a=(0.0, 0.0), c=(0.0, 0.0)):
    return CopulaParams(np.array([a[0]]), np.array([a[1]]), np.array([c[0]]), np.array([c[1]]),
                        np.array([theta_t]), np.asarray(pi, float).reshape(n, 2))


@pytest.mark.parametrize("par", PARAMS)
def test_loglik_examples(par):
    d = _two_studies()
    spec = ModelSpec.build("fgm", d, parameterization=par)
    model = build_model(spec, d)
    pi = [[25 / 33, 1.0], [0.5, 0.5]]
    ll = model.loglik_pointwise(model.pack(_copula_params(0.0, 2, pi)))
    want = math.log(math.comb(33, 25)) + 25 * math.log(25 / 33) + 8 * math.log(8 / 33)
    assert ll[0] == pytest.approx(want, rel=1e-9)
    # tn = n = 2 at pi = 1
    assert ll[2] == pytest.approx(0.0, abs=1e-9)
    # pi = 0.5: log C(n, k) - n log 2
    assert ll[1] == pytest.approx(math.log(2) - 2 * math.log(2), rel=1e-9)
    assert ll[3] == pytest.approx(math.log(2) - 2 * math.log(2), rel=1e-9)
    assert mdl.log_likelihood(spec, _copula_params(0.0, 2, pi), d) == pytest.approx(ll.sum(), rel=1e-12)


@pytest.mark.parametrize("par", PARAMS)
def test_random_effects_examples(par):
    d = _two_studies()
    pi = [[0.3, 0.8], [0.9, 0.9]]
    # fgm, theta = 0, alpha = beta = 1 (mu = 0.5, psi = 2)
    spec = ModelSpec.build("fgm", d, parameterization=par)
    p = _copula_params(0.0, 2, pi, c=(math.log(2), math.log(2)))
    assert mdl.log_random_effects_density(spec, p, d) == pytest.approx(0.0, abs=1e-9)
    # gauss rho = 0 with Beta(2, 2) margins at 0.5
    spec = ModelSpec.build("gauss", d, parameterization=par)
    p = _copula_params(0.0, 2, [[0.5, 0.5], [0.5, 0.5]], c=(math.log(4), math.log(4)))
    assert mdl.log_random_effects_density(spec, p, d) == pytest.approx(4 * math.log(1.5), abs=1e-9)
    # fgm theta = 0.5 with uniform margins at (0.9, 0.9): two studies at the same point
    spec = ModelSpec.build("fgm", d, parameterization=par)
    p = _copula_params(math.atanh(0.5), 2, [[0.9, 0.9], [0.9, 0.9]], c=(math.log(2), math.log(2)))
    assert mdl.log_random_effects_density(spec, p, d) == pytest.approx(2 * math.log(1.32), abs=1e-9)


@pytest.mark.parametrize("kind", ["gauss", "fgm"])
def test_independence_factorises(kind, telo):
    spec = ModelSpec.build(kind, telo, fixed_association=0.0, parameterization="centered")
    model = build_model(spec, telo)
    rng = np.random.default_rng(3)
    x = rng.normal(size=model.dim)
    a, b = model._margins(x)
    pi = model.latent_probabilities(x)
    want = stats.beta.logpdf(pi[:, 0], *a).sum() + stats.beta.logpdf(pi[:, 1], *b).sum()
    assert model.log_random_effects_density(x) == pytest.approx(want, rel=1e-10)


@pytest.mark.parametrize("kind", KINDS)
def test_component_sum(kind, telo):
    """Centered posterior rebuilt from scipy densities."""
    model = build_model(ModelSpec.build(kind, telo, parameterization="centered"), telo)
    x = np.random.default_rng(11).normal(scale=0.8, size=model.dim)
    b = model.blocks
    k, n = telo.counts()
    l1, l2 = x[b["latent"][0::2]], x[b["latent"][1::2]]
    lik = (stats.binom.logpmf(k[:, 0], n[:, 0], special.expit(l1)).sum()
           + stats.binom.logpmf(k[:, 1], n[:, 1], special.expit(l2)).sum())
    if kind == "brma":
        mu = np.array([x[b["mul_se"]][0], x[b["mul_sp"]][0]])
        sig = np.exp(x[b["log_sigma"]])
        r = math.tanh(x[b["etarho"]][0])
        cov = np.array([[sig[0] ** 2, r * sig[0] * sig[1]], [r * sig[0] * sig[1], sig[1] ** 2]])
        assert np.all(np.linalg.eigvalsh(cov) > 0)
        re = stats.multivariate_normal(mu, cov).logpdf(np.column_stack([l1, l2])).sum()
        prior = (stats.norm(0, 10).logpdf(mu).sum() + stats.norm(0, 10).logpdf(x[b["etarho"]][0])
                 + (stats.halfcauchy(scale=2.5).logpdf(sig) + np.log(sig)).sum())
        jac = 0.0
    else:
        mu = special.expit([x[b["B_se"]][0], x[b["B_sp"]][0]])
        psi = np.exp([x[b["C_se"]][0], x[b["C_sp"]][0]])
        theta, _ = cp.from_unconstrained(kind, x[b["D"]][0])
        p1, p2 = special.expit(l1), special.expit(l2)
        re = (stats.beta.logpdf(p1, mu[0] * psi[0], (1 - mu[0]) * psi[0]).sum()
              + stats.beta.logpdf(p2, mu[1] * psi[1], (1 - mu[1]) * psi[1]).sum())
        u = stats.beta.cdf(p1, mu[0] * psi[0], (1 - mu[0]) * psi[0])
        v = stats.beta.cdf(p2, mu[1] * psi[1], (1 - mu[1]) * psi[1])
        re += cp.log_density(kind, u, v, theta).sum()
        prior = stats.norm(0, 10).logpdf(np.concatenate([b_ for kk, b_ in ((kk, x[ix]) for kk, ix in b.items()) if kk != "latent"])).sum()
        jac = (np.log(p1) + np.log1p(-p1) + np.log(p2) + np.log1p(-p2)).sum()
    assert model.log_posterior(x) == pytest.approx(lik + re + prior + jac, rel=1e-9)
    assert model.log_likelihood(x) == pytest.approx(lik, rel=1e-10)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("par", PARAMS)
def test_gradient_matches_finite_differences(kind, par, telo):
    model = build_model(ModelSpec.build(kind, telo, parameterization=par), telo)
    rng = np.random.default_rng(2024)
    h = 1e-5
    for _ in range(20):
        x = rng.normal(size=model.dim)
        val, g = model.value_and_grad(x)
        assert np.isfinite(val)
        assert val == pytest.approx(model.log_posterior(x), rel=1e-12)
        fd = np.empty_like(x)
        for i in range(model.dim):
            e = np.zeros_like(x)
            e[i] = h
            fd[i] = (model.log_posterior(x + e) - model.log_posterior(x - e)) / (2 * h)
        rel = np.abs(g - fd) / np.maximum(np.abs(fd), 1.0)
        assert rel.max() < 1e-5


def test_gradient_of_quadratic_and_unused_coordinate():
    x = np.array([0.3, -1.2, 2.0])
    val, g = dm.value_and_grad(lambda y: -0.5 * (y[0] * y[0] + y[1] * y[1]), x)
    assert val == pytest.approx(-0.5 * (0.09 + 1.44))
    np.testing.assert_allclose(g, [-0.3, 1.2, 0.0], atol=1e-15)


@pytest.mark.parametrize("kind", KINDS)
def test_finite_at_random_points(kind, telo):
    for par in PARAMS:
        model = build_model(ModelSpec.build(kind, telo, parameterization=par), telo)
        rng = np.random.default_rng(5)
        for _ in range(10):
            assert np.isfinite(model.log_posterior(rng.normal(size=model.dim)))
        assert model.log_posterior(np.full(model.dim, np.nan)) == -np.inf


def test_jacobian_integrates_to_one():
    # Uniform(0, 1) prior on p = expit(t): the density of t is the Jacobian alone
    f = lambda t: math.exp(float(mdl.logit_log_jacobian(t)))
    val, _ = integrate.quad(f, -np.inf, np.inf, epsabs=1e-12)
    assert abs(val - 1.0) < 1e-6


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("par", PARAMS)
@pytest.mark.parametrize("seed", [1, 3])
def test_permutation_invariance(kind, par, seed):
    d = builtin_dataset("ascus")
    perm = np.random.default_rng(seed).permutation(len(d))
    dp = Dataset.from_records([d.records[i] for i in perm])
    m = build_model(ModelSpec.build(kind, d, "cellmeans:Test", parameterization=par), d)
    mp = build_model(ModelSpec.build(kind, dp, "cellmeans:Test", parameterization=par), dp)
    flip = mp.spec.design.column_names != m.spec.design.column_names
    x = np.random.default_rng(2).normal(size=m.dim)
    xp = x.copy()
    lat = m.blocks["latent"]
    xp[lat] = x[lat].reshape(-1, 2)[perm].ravel()
    # levels are ordered by first appearance, so the cell columns may swap
    for name, ix in m.blocks.items():
        if flip and name not in ("latent", "log_sigma", "etarho"):
            xp[ix] = x[ix][::-1]
    assert mp.log_posterior(xp) == pytest.approx(m.log_posterior(x), rel=1e-10)


def test_brma_density_grows_as_sigma_shrinks(telo):
    model = build_model(ModelSpec.build("brma", telo, parameterization="centered"), telo)
    prev = -np.inf
    for s in [1.0, 0.3, 0.1, 0.01, 1e-4]:
        p = BRMAParams(np.array([[0.8, 1.2]]), np.array([s, s]), -0.5, np.tile([0.8, 1.2], (10, 1)))
        val = model.log_random_effects_density(model.pack(p))
        assert val > prev
        prev = val
    assert prev > 100


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("par", PARAMS)
def test_pack_round_trip(kind, par, telo):
    model = build_model(ModelSpec.build(kind, telo, parameterization=par), telo)
    x = np.random.default_rng(9).normal(scale=0.7, size=model.dim)
    np.testing.assert_allclose(model.pack(model.unpack(x)), x, atol=1e-8)


def test_meta_analytic_mean():
    assert mdl.brma_meta_analytic_mean(1.3, 0.0) == pytest.approx(special.expit(1.3), abs=1e-15)
    assert mdl.brma_meta_analytic_mean(0.0, 2.7) == pytest.approx(0.5, abs=1e-14)
    oracle, _ = integrate.quad(lambda z: special.expit(1 + z) * stats.norm.pdf(z), -np.inf, np.inf, epsabs=1e-13)
    got = mdl.brma_meta_analytic_mean(1.0, 1.0)
    assert got == pytest.approx(oracle, abs=1e-10)
    assert round(float(got), 2) == 0.70
    np.testing.assert_allclose(mdl.brma_meta_analytic_mean([0.0, 1.0], [1.0, 1.0]), [0.5, oracle], atol=1e-10)


@pytest.mark.parametrize("kind,theta_t", [("gauss", -1.2), ("frank", -6.0), ("fgm", 0.8), ("c90", 0.7), ("c270", 0.7)])
def test_noncentered_map_has_model_distribution(kind, theta_t, telo):
    """Standard-normal scores pushed through the map give Beta margins and the copula's tau."""
    model = build_model(ModelSpec.build(kind, telo), telo)
    rng = np.random.default_rng(0)
    b = model.blocks
    x = np.zeros(model.dim)
    x[b["B_se"]], x[b["B_sp"]], x[b["C_se"]], x[b["C_sp"]], x[b["D"]] = 1.0, 1.5, 2.0, 1.0, theta_t
    (a1, b1), (a2, b2) = model._margins(x)
    pis = []
    for _ in range(300):
        x[b["latent"]] = rng.normal(size=len(b["latent"]))
        pis.append(model.latent_probabilities(x))
    pis = np.concatenate(pis)
    assert stats.kstest(pis[:, 0], stats.beta(a1[0], b1[0]).cdf).pvalue > 1e-3
    assert stats.kstest(pis[:, 1], stats.beta(a2[0], b2[0]).cdf).pvalue > 1e-3
    theta = cp.from_unconstrained(kind, theta_t)[0]
    tau = stats.kendalltau(pis[:, 0], pis[:, 1]).statistic
    assert tau == pytest.approx(cp.kendall_tau(kind, theta), abs=0.04)


def test_spec_validation(telo):
    with pytest.raises(ValueError):
        ModelSpec.build("brma", telo, fixed_association=0.0)
    with pytest.raises(ValueError):
        ModelSpec.build("gauss", telo, parameterization="sideways")
    with pytest.raises(ValueError):
        ModelSpec.build("clayton", telo)
    assert ModelSpec.build("270", telo).kind == "c270"


def test_layout_names(telo):
    m = build_model(ModelSpec.build("gauss", telo), telo)
    assert m.param_names[:5] == ["B_se[(Intercept)]", "B_sp[(Intercept)]", "C_se[(Intercept)]",
                                 "C_sp[(Intercept)]", "D[(Intercept)]"]
    assert m.param_names[5] == "z[1|1]" and m.dim == 25
    fixed = build_model(ModelSpec.build("fgm", telo, fixed_association=0.0), telo)
    assert fixed.dim == 24 and "D" not in fixed.blocks
