"""Log-posteriors for the copula bivariate beta-binomial models and the BRMA.

Every model exposes a flat unconstrained parameter vector. The density code
is written once against :mod:`._dual`, so :meth:`Model.value_and_grad`
returns an exact gradient from the same path as :meth:`Model.log_posterior`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import special

from . import _dual as dm
from .copulas import CopulaFamily, _conditional_cdf, _conditional_quantile, _kendall_tau, _log_density, clamp, link
from .data import Dataset, DesignMatrix, design_matrix

LOG_2PI = math.log(2.0 * math.pi)
_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite.hermgauss(61)

BRMA = "brma"
# (1 - U, 1 - V) follows the reflected family; c90 and c270 swap, the rest are symmetric
_REFLECTED = {f: f for f in CopulaFamily} | {CopulaFamily.C90: CopulaFamily.C270, CopulaFamily.C270: CopulaFamily.C90}
MODEL_KINDS = tuple(f.value for f in CopulaFamily) + (BRMA,)
PARAMETERIZATIONS = ("noncentered", "centered")


@dataclass(frozen=True)
class PriorConfig:
    """Prior scales: Normal(0, coef_sd) on regression coefficients, half-Cauchy(0, sigma_scale) on BRMA SDs."""

    coef_sd: float = 10.0
    sigma_scale: float = 2.5

    def __post_init__(self):
        if not (self.coef_sd > 0 and self.sigma_scale > 0):
            raise ValueError("prior scales must be positive")


@dataclass(frozen=True)
class ModelSpec:
    """Model family plus the shared design matrix.

    The mean, certainty and association predictors all use the same design
    matrix. ``fixed_association`` pins the copula parameter (for example to
    0 for independence) and drops it from the sampled vector.

    ``parameterization`` chooses how the study-level latent pairs are
    sampled. "centered" samples logit(pi) directly. "noncentered" samples
    independent standard-normal scores and maps them onto pi through the
    copula's conditional quantile and the beta (or normal) margins; the
    induced distribution of pi is identical but the sampler avoids the
    funnel that appears when the association approaches its boundary.
    """

    kind: str
    design: DesignMatrix
    priors: PriorConfig = field(default_factory=PriorConfig)
    formula: str = "intercept"
    fixed_association: float | None = None
    parameterization: str = "noncentered"

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind != BRMA:
            kind = CopulaFamily.parse(kind).value
        object.__setattr__(self, "kind", kind)
        if self.fixed_association is not None and kind == BRMA:
            raise ValueError("fixed_association applies to copula models only")
        if self.parameterization not in PARAMETERIZATIONS:
            raise ValueError(f"parameterization must be one of {PARAMETERIZATIONS}")

    @classmethod
    def build(cls, kind, dataset: Dataset, formula="intercept", priors=None, fixed_association=None,
              parameterization="noncentered"):
        return cls(kind, design_matrix(dataset, formula), priors or PriorConfig(), formula,
                   fixed_association, parameterization)

    @property
    def family(self) -> CopulaFamily | None:
        return None if self.kind == BRMA else CopulaFamily(self.kind)

    @property
    def is_brma(self) -> bool:
        return self.kind == BRMA

    design_mu = design_psi = design_assoc = property(lambda self: self.design)


# ---------------------------------------------------------------------------
# parameter containers (constrained scale)


@dataclass
class CopulaParams:
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D: np.ndarray
    pi: np.ndarray  # n x 2

    def to_unconstrained(self) -> np.ndarray:
        lat = special.logit(np.asarray(self.pi, float))
        return np.concatenate([self.B1, self.B2, self.C1, self.C2, self.D, lat.ravel()])


@dataclass
class BRMAParams:
    mul: np.ndarray  # p x 2
    sigma: np.ndarray
    etarho: float
    logitp: np.ndarray  # n x 2

    @property
    def rho(self) -> float:
        return math.tanh(self.etarho)

    def to_unconstrained(self) -> np.ndarray:
        mul = np.asarray(self.mul, float).reshape(-1, 2)
        return np.concatenate(
            [mul[:, 0], mul[:, 1], np.log(self.sigma), [self.etarho], np.asarray(self.logitp, float).ravel()]
        )


# ---------------------------------------------------------------------------
# shared pieces


def _normal_lpdf(x, sd):
    return -0.5 * (x / sd) * (x / sd) - math.log(sd) - 0.5 * LOG_2PI


def _log_binom_coef(k, n):
    return special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1)


def _log_one_minus_tanh2(eta):
    """log(1 - tanh(eta)^2), stable for large |eta|."""
    a = dm.absolute(eta)
    return 2.0 * (math.log(2.0) - a - dm.log1p(dm.exp(-2.0 * a)))


def brma_meta_analytic_mean(mul, sigma):
    """E[expit(mul + eps)], eps ~ N(0, sigma^2), by 61-node Gauss-Hermite quadrature.

    Broadcasts over ``mul`` and ``sigma``.
    """
    mul = np.asarray(mul, float)[..., None]
    sigma = np.asarray(sigma, float)[..., None]
    vals = special.expit(mul + math.sqrt(2.0) * sigma * _GH_NODES)
    return (vals * _GH_WEIGHTS).sum(axis=-1) / math.sqrt(math.pi)


def logit_log_jacobian(t):
    """log |d expit(t) / dt| = log p + log(1 - p)."""
    return dm.log_expit(t) + dm.log_expit(-t)


def _xlog(count, logp):
    """count * log p with 0 * log 0 = 0."""
    return dm.where(count == 0.0, 0.0, count * logp)


class Model:
    """A model bound to a dataset; subclasses define the density."""

    def __init__(self, spec: ModelSpec, data: Dataset):
        if spec.design.rows.shape[0] != len(data):
            raise ValueError("design matrix rows do not match the number of studies")
        self.spec = spec
        self.data = data
        self.noncentered = spec.parameterization == "noncentered"
        self.X = np.asarray(spec.design.rows, float)
        self.n, self.p = self.X.shape
        self.k, self.trials = data.counts()
        self.k = self.k.astype(float)
        self.trials = self.trials.astype(float)
        self._binom_const = _log_binom_coef(self.k, self.trials)
        cells = []
        for j in range(self.p):
            rows = np.flatnonzero(self.X[:, j] == 1.0) if spec.design.coding != "intercept" else [0]
            cells.append(self.X[rows[0]])
        self.cell_rows = np.array(cells)
        self.cell_names = list(spec.design.column_names) if spec.design.coding != "intercept" else ["1"]

    # layout ---------------------------------------------------------------
    @cached_property
    def blocks(self) -> dict:
        out, start = {}, 0
        for name, size in self._block_sizes():
            out[name] = np.arange(start, start + size)
            start += size
        return out

    @property
    def dim(self) -> int:
        return sum(len(ix) for ix in self.blocks.values())

    @cached_property
    def param_names(self) -> list:
        names = []
        for block, ix in self.blocks.items():
            names.extend(self._names_for(block, len(ix)))
        return names

    def _names_for(self, block, size):
        if block == "latent":
            tag = "z" if self.noncentered else "logit_pi"
            return [f"{tag}[{self.data.study_ids[i]}|{j + 1}]" for i in range(self.n) for j in range(2)]
        cols = self.spec.design.column_names
        if size == len(cols):
            return [f"{block}[{c}]" for c in cols]
        return [f"{block}[{i + 1}]" for i in range(size)]

    def _latent(self, x):
        ix = self.blocks["latent"]
        return x[ix[0::2]], x[ix[1::2]]

    # densities ------------------------------------------------------------
    def log_posterior(self, x) -> float:
        x = np.asarray(x, float)
        with np.errstate(all="ignore"):
            val = self._log_posterior(x)
        return float(val) if np.isfinite(val) else -np.inf

    def value_and_grad(self, x):
        with np.errstate(all="ignore"):
            val, grad = dm.value_and_grad(self._log_posterior, np.asarray(x, float))
        if not np.isfinite(val) or not np.all(np.isfinite(grad)):
            return -np.inf, grad
        return val, grad

    def gradient(self, x) -> np.ndarray:
        return self.value_and_grad(x)[1]

    def _binomial(self, logs, pointwise=False):
        """Binomial terms from ((log p1, log q1), (log p2, log q2))."""
        terms = []
        for j, (lp, lq) in enumerate(logs):
            k, n = self.k[:, j], self.trials[:, j]
            terms.append(_xlog(k, lp) + _xlog(n - k, lq) + self._binom_const[:, j])
        if pointwise:
            return np.concatenate([dm.value(t) for t in terms])
        return terms[0].sum() + terms[1].sum()

    @staticmethod
    def _logit_logs(l1, l2):
        return ((dm.log_expit(l1), dm.log_expit(-l1)), (dm.log_expit(l2), dm.log_expit(-l2)))

    def loglik_pointwise(self, x) -> np.ndarray:
        """Per-observation binomial log-likelihoods: n sensitivity terms then n specificity terms."""
        with np.errstate(all="ignore"):
            return self._binomial(self._latent_logs(np.asarray(x, float)), pointwise=True)

    def log_likelihood(self, x) -> float:
        return float(self.loglik_pointwise(x).sum())

    def latent_probabilities(self, x) -> np.ndarray:
        """Study-level (sensitivity, specificity) pairs as an n x 2 array."""
        with np.errstate(all="ignore"):
            (lp1, _), (lp2, _) = self._latent_logs(np.asarray(x, float))
        return np.exp(np.column_stack([lp1, lp2]))

    def initial_point(self, rng) -> np.ndarray:
        return rng.uniform(-2.0, 2.0, size=self.dim)

    def _std_normal(self, z1, z2):
        return -0.5 * ((z1 * z1).sum() + (z2 * z2).sum()) - self.n * LOG_2PI


class CopulaModel(Model):
    """Copula-based bivariate beta distribution for the latent (sens, spec) pairs."""

    def _block_sizes(self):
        p = self.p
        sizes = [("B_se", p), ("B_sp", p), ("C_se", p), ("C_sp", p)]
        if self.spec.fixed_association is None:
            sizes.append(("D", p))
        sizes.append(("latent", 2 * self.n))
        return sizes

    @property
    def family(self) -> CopulaFamily:
        return self.spec.family

    def _margins(self, x):
        b = self.blocks
        X = self.X
        out = []
        for bk, ck in (("B_se", "C_se"), ("B_sp", "C_sp")):
            mu = dm.expit(X @ x[b[bk]])
            psi = dm.exp(X @ x[b[ck]])
            out.append((mu * psi, (1.0 - mu) * psi))
        return out

    def _theta(self, x, rows=None):
        rows = self.X if rows is None else rows
        if self.spec.fixed_association is not None:
            return np.full(rows.shape[0], float(self.spec.fixed_association))
        return link(self.family, rows @ x[self.blocks["D"]])

    def _random_effects(self, x, l1, l2):
        (a1, b1), (a2, b2) = self._margins(x)
        lp1, lq1 = dm.log_expit(l1), dm.log_expit(-l1)
        lp2, lq2 = dm.log_expit(l2), dm.log_expit(-l2)
        marg = (
            (a1 - 1.0) * lp1 + (b1 - 1.0) * lq1 - dm.betaln(a1, b1)
            + (a2 - 1.0) * lp2 + (b2 - 1.0) * lq2 - dm.betaln(a2, b2)
        )
        u = clamp(dm.betainc(a1, b1, dm.expit(l1)))
        v = clamp(dm.betainc(a2, b2, dm.expit(l2)))
        cop = _log_density(self.family, u, v, self._theta(x))
        return marg.sum() + cop.sum()

    def _copula_scores(self, x, z1, z2):
        """Map independent normal scores to copula-distributed (u, v) and (1 - u, 1 - v).

        The upper tails are computed directly (Phi(-z) and the radially
        reflected copula) so that probabilities near 1 keep full precision.
        """
        if self.family is CopulaFamily.GAUSS:
            if self.spec.fixed_association is None:
                eta = self.X @ x[self.blocks["D"]]
                r, s = dm.tanh(eta), dm.exp(0.5 * _log_one_minus_tanh2(eta))
            else:
                r = float(self.spec.fixed_association)
                s = math.sqrt(1.0 - r * r)
            t = r * z1 + s * z2
            return (dm.ndtr(z1), dm.ndtr(t)), (dm.ndtr(-z1), dm.ndtr(-t))
        theta = self._theta(x)
        u, ubar = clamp(dm.ndtr(z1)), clamp(dm.ndtr(-z1))
        w, wbar = clamp(dm.ndtr(z2)), clamp(dm.ndtr(-z2))
        v = clamp(_conditional_quantile(self.family, w, u, theta))
        vbar = clamp(_conditional_quantile(_REFLECTED[self.family], wbar, ubar, theta))
        return (u, v), (ubar, vbar)

    def _noncentered_logs(self, x):
        (a1, b1), (a2, b2) = self._margins(x)
        (u, v), (ubar, vbar) = self._copula_scores(x, *self._latent(x))
        out = []
        for a, b, y, ybar in ((a1, b1, u, ubar), (a2, b2, v, vbar)):
            p = dm.betaincinv(a, b, y)
            q = dm.betaincinv(b, a, ybar)
            lp = dm.where(dm.value(p) < 0.5, dm.log(p), dm.log1p(-q))
            lq = dm.where(dm.value(q) < 0.5, dm.log(q), dm.log1p(-p))
            out.append((lp, lq))
        return tuple(out)

    def _latent_logs(self, x):
        if self.noncentered:
            return self._noncentered_logs(x)
        return self._logit_logs(*self._latent(x))

    def _log_prior(self, x):
        sd = self.spec.priors.coef_sd
        ix = np.concatenate([ix for k, ix in self.blocks.items() if k != "latent"])
        return _normal_lpdf(x[ix], sd).sum()

    def _log_posterior(self, x):
        if self.noncentered:
            return self._log_prior(x) + self._std_normal(*self._latent(x)) + self._binomial(self._latent_logs(x))
        l1, l2 = self._latent(x)
        jac = logit_log_jacobian(l1).sum() + logit_log_jacobian(l2).sum()
        return self._log_prior(x) + self._random_effects(x, l1, l2) + self._binomial(self._logit_logs(l1, l2)) + jac

    def log_random_effects_density(self, x) -> float:
        """Joint density of the latent pairs under the copula model (probability scale)."""
        x = np.asarray(x, float)
        with np.errstate(all="ignore"):
            logits = special.logit(self.latent_probabilities(x))
            return float(self._random_effects(x, logits[:, 0], logits[:, 1]))

    def pack(self, params: CopulaParams) -> np.ndarray:
        """Unconstrained vector for constrained parameters, in this model's layout."""
        x = params.to_unconstrained()
        if self.spec.fixed_association is not None:
            x = np.delete(x, slice(4 * self.p, 5 * self.p))
        if not self.noncentered:
            return x
        pi = np.asarray(params.pi, float)
        (a1, b1), (a2, b2) = self._margins(x)
        u = clamp(special.betainc(a1, b1, pi[:, 0]))
        v = clamp(special.betainc(a2, b2, pi[:, 1]))
        theta = np.asarray(self._theta(x), float)
        z1 = special.ndtri(u)
        if self.family is CopulaFamily.GAUSS:
            z2 = (special.ndtri(v) - theta * z1) / np.sqrt(1.0 - theta * theta)
        else:
            z2 = special.ndtri(clamp(_conditional_cdf(self.family, v, u, theta)))
        x[self.blocks["latent"]] = np.column_stack([z1, z2]).ravel()
        return x

    def unpack(self, x) -> CopulaParams:
        x = np.asarray(x, float)
        b = self.blocks
        D = x[b["D"]] if "D" in b else np.full(self.p, np.nan)
        return CopulaParams(x[b["B_se"]], x[b["B_sp"]], x[b["C_se"]], x[b["C_sp"]], D, self.latent_probabilities(x))

    def generated(self, x) -> dict:
        """Constrained quantities of interest for one unconstrained draw."""
        x = np.asarray(x, float)
        b = self.blocks
        R = self.cell_rows
        theta = np.asarray(self._theta(x, R), float)
        pi = self.latent_probabilities(x)
        psi = np.column_stack([np.exp(R @ x[b["C_se"]]), np.exp(R @ x[b["C_sp"]])])
        return {
            "MUse": special.expit(R @ x[b["B_se"]]),
            "MUsp": special.expit(R @ x[b["B_sp"]]),
            "theta": theta,
            "ktau": np.asarray(_kendall_tau(self.family, theta), float).reshape(-1),
            "psi": psi,
            "phi": 1.0 / (1.0 + psi),
            "pi_se": pi[:, 0],
            "pi_sp": pi[:, 1],
        }


class BRMAModel(Model):
    """Bivariate normal random effects on logit sensitivity and specificity."""

    def _block_sizes(self):
        return [("mul_se", self.p), ("mul_sp", self.p), ("log_sigma", 2), ("etarho", 1), ("latent", 2 * self.n)]

    def _hyper(self, x):
        b = self.blocks
        log_sigma = x[b["log_sigma"]]
        eta = x[b["etarho"]][0]
        return self.X @ x[b["mul_se"]], self.X @ x[b["mul_sp"]], log_sigma, dm.exp(log_sigma), eta

    def _logits(self, x):
        if not self.noncentered:
            return self._latent(x)
        m1, m2, _, sigma, eta = self._hyper(x)
        z1, z2 = self._latent(x)
        s = dm.exp(0.5 * _log_one_minus_tanh2(eta))
        return m1 + sigma[0] * z1, m2 + sigma[1] * (dm.tanh(eta) * z1 + s * z2)

    def _latent_logs(self, x):
        return self._logit_logs(*self._logits(x))

    def _log_posterior(self, x):
        b = self.blocks
        pr = self.spec.priors
        _, _, log_sigma, sigma, eta = self._hyper(x)
        s = pr.sigma_scale
        lp = (
            _normal_lpdf(x[b["mul_se"]], pr.coef_sd).sum()
            + _normal_lpdf(x[b["mul_sp"]], pr.coef_sd).sum()
            + _normal_lpdf(eta, pr.coef_sd)
        )
        # half-Cauchy on sigma, sampled on the log scale
        lp = lp + (math.log(2.0 / (math.pi * s)) - dm.log1p((sigma / s) * (sigma / s)) + log_sigma).sum()
        if self.noncentered:
            lp = lp + self._std_normal(*self._latent(x))
        else:
            lp = lp + self._mvn(x, *self._latent(x))
        return lp + self._binomial(self._latent_logs(x))

    def _mvn(self, x, l1, l2):
        m1, m2, log_sigma, sigma, eta = self._hyper(x)
        z1 = (l1 - m1) / sigma[0]
        z2 = (l2 - m2) / sigma[1]
        log1mr2 = _log_one_minus_tanh2(eta)
        rho = dm.tanh(eta)
        quad = (z1 * z1 - 2.0 * rho * z1 * z2 + z2 * z2).sum()
        return self.n * (-LOG_2PI - log_sigma[0] - log_sigma[1] - 0.5 * log1mr2) - 0.5 * quad / dm.exp(log1mr2)

    def log_random_effects_density(self, x) -> float:
        """Bivariate normal density of the latent logit pairs."""
        x = np.asarray(x, float)
        return float(self._mvn(x, *self._logits(x)))

    def pack(self, params: BRMAParams) -> np.ndarray:
        x = params.to_unconstrained()
        if not self.noncentered:
            return x
        m1, m2, _, sigma, eta = self._hyper(x)
        l1, l2 = self._latent(x)
        z1 = (l1 - m1) / sigma[0]
        z2 = ((l2 - m2) / sigma[1] - math.tanh(eta) * z1) / math.exp(0.5 * _log_one_minus_tanh2(eta))
        x[self.blocks["latent"]] = np.column_stack([z1, z2]).ravel()
        return x

    def unpack(self, x) -> BRMAParams:
        x = np.asarray(x, float)
        b = self.blocks
        l1, l2 = self._logits(x)
        return BRMAParams(
            np.column_stack([x[b["mul_se"]], x[b["mul_sp"]]]),
            np.exp(x[b["log_sigma"]]),
            float(x[b["etarho"]][0]),
            np.column_stack([l1, l2]),
        )

    def generated(self, x) -> dict:
        x = np.asarray(x, float)
        b = self.blocks
        R = self.cell_rows
        sigma = np.exp(x[b["log_sigma"]])
        m1, m2 = R @ x[b["mul_se"]], R @ x[b["mul_sp"]]
        rho = math.tanh(x[b["etarho"]][0])
        l1, l2 = self._logits(x)
        return {
            "MUse": brma_meta_analytic_mean(m1, sigma[0]),
            "MUsp": brma_meta_analytic_mean(m2, sigma[1]),
            "mu_se": special.expit(m1),
            "mu_sp": special.expit(m2),
            "sigma": sigma,
            "rho": np.array([rho]),
            "ktau": np.array([2.0 / math.pi * math.asin(rho)]),
            "pi_se": special.expit(l1),
            "pi_sp": special.expit(l2),
        }


def build_model(spec: ModelSpec, data: Dataset) -> Model:
    return BRMAModel(spec, data) if spec.is_brma else CopulaModel(spec, data)


# ---------------------------------------------------------------------------
# functional surface


def log_likelihood(spec: ModelSpec, params, data: Dataset) -> float:
    """Binomial log-likelihood (with binomial coefficients) of the latent pairs."""
    model = build_model(spec, data)
    return model.log_likelihood(model.pack(params))


def log_random_effects_density(spec: ModelSpec, params, data: Dataset) -> float:
    model = build_model(spec, data)
    return model.log_random_effects_density(model.pack(params))


def log_posterior(spec: ModelSpec, x, data: Dataset) -> float:
    return build_model(spec, data).log_posterior(x)


def gradient(spec: ModelSpec, x, data: Dataset) -> np.ndarray:
    return build_model(spec, data).gradient(x)
