"""Scikit-learn style front end for fitting one model to one dataset."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import check_choice, check_dataset, check_int, check_positive
from .data import design_matrix
from .models import MODEL_KINDS, PARAMETERIZATIONS, ModelSpec, PriorConfig, build_model
from .sampler import ChainConfig, run_chains
from .summaries import summarize


class DTAMetaAnalysis(BaseEstimator):
    """Bayesian bivariate meta-analysis of sensitivity and specificity.

    Parameters
    ----------
    copula : {"gauss", "frank", "fgm", "c90", "c270", "brma"}
        Copula family for the bivariate beta model, or "brma" for the
        bivariate normal model on the logit scale.
    formula : str
        "intercept" or "cellmeans:<covariate>".
    chains, iter, warmup, thin, seed, max_tree_depth, target_accept
        Sampler settings (see :class:`~dtacopula.sampler.ChainConfig`).
    coef_sd, sigma_scale : float
        Prior scales.
    parameterization : {"noncentered", "centered"}
        How the latent study-level pairs are sampled.
    fixed_association : float or None
        Pin the copula parameter instead of estimating it.
    n_jobs : int
        Worker processes for chains; results do not depend on it.
    """

    def __init__(
        self,
        copula="gauss",
        formula="intercept",
        chains=3,
        iter=2000,
        warmup=1000,
        thin=1,
        seed=0,
        max_tree_depth=10,
        target_accept=0.8,
        coef_sd=10.0,
        sigma_scale=2.5,
        parameterization="noncentered",
        fixed_association=None,
        n_jobs=1,
    ):
        self.copula = copula
        self.formula = formula
        self.chains = chains
        self.iter = iter
        self.warmup = warmup
        self.thin = thin
        self.seed = seed
        self.max_tree_depth = max_tree_depth
        self.target_accept = target_accept
        self.coef_sd = coef_sd
        self.sigma_scale = sigma_scale
        self.parameterization = parameterization
        self.fixed_association = fixed_association
        self.n_jobs = n_jobs

    def _config(self) -> ChainConfig:
        return ChainConfig(
            chains=check_int(self.chains, "chains", 1),
            iter=check_int(self.iter, "iter", 1),
            warmup=check_int(self.warmup, "warmup", 0),
            thin=check_int(self.thin, "thin", 1),
            seed=check_int(self.seed, "seed", 0),
            max_tree_depth=check_int(self.max_tree_depth, "max_tree_depth", 1),
            target_accept=float(self.target_accept),
        )

    def fit(self, X, y=None):
        """Sample the posterior for the studies in ``X``; ``y`` is ignored."""
        kind = check_choice(self.copula, MODEL_KINDS + ("270",), "copula")
        parameterization = check_choice(self.parameterization, PARAMETERIZATIONS, "parameterization")
        priors = PriorConfig(check_positive(self.coef_sd, "coef_sd"), check_positive(self.sigma_scale, "sigma_scale"))
        config = self._config()
        data = check_dataset(X)
        spec = ModelSpec(kind, design_matrix(data, self.formula), priors, self.formula,
                         self.fixed_association, parameterization)
        model = build_model(spec, data)
        draws = run_chains(model, config, n_jobs=check_int(self.n_jobs, "n_jobs", 1))

        self.dataset_ = data
        self.spec_ = spec
        self.model_ = model
        self.config_ = config
        self.draws_ = draws
        self.summary_ = summarize(draws, model) if config.chains >= 2 else None
        self.waic_ = self.summary_.waic if self.summary_ is not None else None
        return self

    def _check_fitted(self):
        if not hasattr(self, "draws_"):
            raise NotFittedError("call fit() before using this estimator")

    def posterior(self, name: str) -> np.ndarray:
        """Pooled kept draws of a generated quantity, shape (draws, k)."""
        self._check_fitted()
        return np.concatenate([cd.generated[name] for cd in self.draws_], axis=0)

    def predict(self, X=None) -> np.ndarray:
        """Posterior mean pooled (sensitivity, specificity) for each study's covariate cell."""
        self._check_fitted()
        data = self.dataset_ if X is None else check_dataset(X)
        design = self.spec_.design
        if design.coding == "intercept":
            cells = np.zeros(len(data), dtype=int)
        else:
            index = {lvl: j for j, lvl in enumerate(design.column_names)}
            try:
                cells = np.array([index[r.covariates[design.covariate]] for r in data.records])
            except KeyError as exc:
                raise ValueError(f"unknown level {exc.args[0]!r} for covariate {design.covariate!r}") from None
        se = self.posterior("MUse").mean(axis=0)
        sp = self.posterior("MUsp").mean(axis=0)
        return np.column_stack([se[cells], sp[cells]])

    def score(self, X=None, y=None) -> float:
        """Expected log pointwise predictive density, -WAIC / 2 (larger is better)."""
        self._check_fitted()
        if X is not None and check_dataset(X).fingerprint() != self.dataset_.fingerprint():
            raise ValueError("score is only defined on the data the model was fitted to")
        return -0.5 * self.waic_.waic
