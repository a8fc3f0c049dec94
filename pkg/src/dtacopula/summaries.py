"""Posterior summaries, WAIC, exact binomial intervals and model comparison."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from .diagnostics import DegenerateChainWarning, ess, mcse, split_rhat

SCHEMA_VERSION = "v1"
QUANTILES = (0.025, 0.975)


class LayoutError(ValueError):
    """Draws do not match the model's parameter layout."""


class ComparabilityError(ValueError):
    """Fits were computed on different data."""


# ---------------------------------------------------------------------------
# WAIC


@dataclass(frozen=True)
class WaicResult:
    lppd: float
    p_waic: float
    waic: float

    @classmethod
    def from_components(cls, lppd: float, p_waic: float) -> "WaicResult":
        return cls(float(lppd), float(p_waic), -2.0 * (float(lppd) - float(p_waic)))


def waic(loglik) -> WaicResult:
    """WAIC from a (draws x observations) pointwise log-likelihood matrix.

    p_waic is the summed per-observation sample variance of the log-likelihood.
    """
    ll = np.asarray(loglik, dtype=float)
    if ll.ndim != 2:
        raise ValueError("loglik must be a (draws x observations) matrix")
    if ll.shape[0] < 2:
        raise ValueError("WAIC needs at least two draws (p_waic is a variance)")
    if not np.all(np.isfinite(ll)):
        raise ValueError("loglik contains non-finite entries")
    s = ll.shape[0]
    lppd = float(np.sum(special.logsumexp(ll, axis=0) - math.log(s)))
    p_waic = float(np.sum(np.var(ll, axis=0, ddof=1)))
    return WaicResult.from_components(lppd, p_waic)


# ---------------------------------------------------------------------------
# Clopper-Pearson


def _beta_quantile(p: float, a: float, b: float, tol: float = 1e-10) -> float:
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if special.betainc(a, b, mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def exact_ci(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Clopper-Pearson interval for k successes out of n."""
    if isinstance(k, bool) or isinstance(n, bool) or int(k) != k or int(n) != n:
        raise ValueError("k and n must be integers")
    k, n = int(k), int(n)
    if n < 1 or not 0 <= k <= n:
        raise ValueError(f"need n >= 1 and 0 <= k <= n, got k={k}, n={n}")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    alpha = 1.0 - level
    low = 0.0 if k == 0 else _beta_quantile(alpha / 2.0, k, n - k + 1)
    high = 1.0 if k == n else _beta_quantile(1.0 - alpha / 2.0, k + 1, n - k)
    return low, high


# ---------------------------------------------------------------------------
# parameter summaries


@dataclass(frozen=True)
class ParamSummary:
    name: str
    label: str
    mean: float
    sd: float
    se_mean: float
    lower: float
    upper: float
    n_eff: float
    rhat: float


@dataclass(frozen=True)
class StudySummary:
    study_id: str
    tp: int
    n_diseased: int
    tn: int
    n_healthy: int
    sens_mean: float
    sens_lower: float
    sens_upper: float
    spec_mean: float
    spec_lower: float
    spec_upper: float


@dataclass
class FitSummary:
    model: str
    formula: str
    dataset: str
    fingerprint: str
    config: dict
    params: list
    waic: WaicResult
    studies: list = field(default_factory=list)
    sampler: dict = field(default_factory=dict)
    schema_version: str = SCHEMA_VERSION

    def param(self, name: str) -> ParamSummary:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "model": self.model,
            "formula": self.formula,
            "dataset": self.dataset,
            "fingerprint": self.fingerprint,
            "config": dict(self.config),
            "params": [asdict(p) for p in self.params],
            "waic": asdict(self.waic),
            "studies": [asdict(s) for s in self.studies],
            "sampler": dict(self.sampler),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitSummary":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported summary schema {d.get('schema_version')!r}")
        return cls(
            model=d["model"],
            formula=d["formula"],
            dataset=d["dataset"],
            fingerprint=d["fingerprint"],
            config=d["config"],
            params=[ParamSummary(**_unjson(p)) for p in d["params"]],
            waic=WaicResult(**_unjson(d["waic"])),
            studies=[StudySummary(**s) for s in d.get("studies", [])],
            sampler=d.get("sampler", {}),
        )

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def format(self) -> str:
        """Human-readable block of the reported parameters and WAIC."""
        width = max(len(p.name) for p in self.params)
        lines = [
            f"Model: {self.model}  formula: {self.formula}  data: {self.dataset}",
            f"{'':{width}}  {'Parameter':<12}{'Mean':>9}{'Lower':>9}{'Upper':>9}{'n_eff':>9}{'Rhat':>9}",
        ]
        for p in self.params:
            lines.append(
                f"{p.name:<{width}}  {p.label:<12}{p.mean:9.4f}{p.lower:9.4f}{p.upper:9.4f}"
                f"{p.n_eff:9.1f}{p.rhat:9.4f}"
            )
        w = self.waic
        lines += [
            f"WAIC: {w.waic:.4f}",
            f"LPPD: {w.lppd:.4f}",
            f"p_waic: {w.p_waic:.4f}",
        ]
        div = self.sampler.get("divergences")
        if div is not None:
            lines.append(f"Divergent transitions after warmup: {sum(div)}")
        return "\n".join(lines)


def _jsonable(obj):
    """Replace non-finite floats (e.g. R-hat = inf) by strings JSON can carry."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _unjson(d: dict) -> dict:
    return {k: float(v) if v in ("nan", "inf", "-inf") else v for k, v in d.items()}


def summarize_series(name: str, label: str, series) -> ParamSummary:
    """Summaries of one scalar quantity given as (chains x draws)."""
    x = np.asarray(series, dtype=float)
    flat = x.ravel()
    lo, hi = np.quantile(flat, QUANTILES)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateChainWarning)
        n_eff = ess(x) if x.shape[1] >= 8 else float("nan")
        se = mcse(x) if x.shape[1] >= 8 else float("nan")
        rhat = split_rhat(x) if x.shape[1] >= 4 else float("nan")
    return ParamSummary(
        name=name,
        label=label,
        mean=float(flat.mean()),
        sd=float(flat.std(ddof=1)) if flat.size > 1 else 0.0,
        se_mean=float(se),
        lower=float(lo),
        upper=float(hi),
        n_eff=float(n_eff),
        rhat=float(rhat),
    )


def _stack(draws, key):
    return np.stack([np.asarray(cd.generated[key], float) for cd in draws])  # chains x kept x k


def reported_quantities(model) -> list[tuple[str, str, str, int]]:
    """(display name, label, generated key, column) for each reported parameter."""
    cells = model.cell_names
    out = []
    for key, label in (("MUse", "Sensitivity"), ("MUsp", "Specificity")):
        out += [(f"{key}[{c}]", label, key, j) for j, c in enumerate(cells)]
    if model.spec.is_brma:
        for key, label in (("mu_se", "Sensitivity"), ("mu_sp", "Specificity")):
            out += [(f"{key}[{c}]", label, key, j) for j, c in enumerate(cells)]
        out.append(("rho", "Correlation", "rho", 0))
        out.append(("ktau", "Correlation", "ktau", 0))
    else:
        n_theta = 1 if model.spec.fixed_association is not None else len(cells)
        out += [(f"ktau[{c}]", "Correlation", "ktau", j) for j, c in enumerate(cells[:n_theta])]
    return out


def summarize(draws, model) -> FitSummary:
    """Summarize multi-chain output for a bound :class:`~dtacopula.models.Model`."""
    draws = list(draws)
    if len(draws) < 2:
        raise ValueError("summaries need at least two chains")
    for cd in draws:
        if list(cd.param_names) != list(model.param_names) or cd.draws.shape[1] != model.dim:
            raise LayoutError("draws do not match the model's parameter layout")
        if not cd.generated:
            rows = [model.generated(q) for q in cd.draws]
            cd.generated = {k: np.array([np.atleast_1d(r[k]) for r in rows]) for k in rows[0]}
        if cd.loglik is None:
            cd.loglik = np.array([model.loglik_pointwise(q) for q in cd.draws])
    if len({cd.n_kept for cd in draws}) != 1:
        raise LayoutError("chains have different numbers of kept draws")

    params = []
    for name, label, key, col in reported_quantities(model):
        params.append(summarize_series(name, label, _stack(draws, key)[:, :, col]))

    studies = []
    pse = _stack(draws, "pi_se").reshape(-1, model.n)
    psp = _stack(draws, "pi_sp").reshape(-1, model.n)
    for i, rec in enumerate(model.data.records):
        (sl, sh), (pl, ph) = np.quantile(pse[:, i], QUANTILES), np.quantile(psp[:, i], QUANTILES)
        studies.append(
            StudySummary(
                study_id=str(rec.study_id),
                tp=int(rec.tp),
                n_diseased=int(rec.n_diseased),
                tn=int(rec.tn),
                n_healthy=int(rec.n_healthy),
                sens_mean=float(pse[:, i].mean()),
                sens_lower=float(sl),
                sens_upper=float(sh),
                spec_mean=float(psp[:, i].mean()),
                spec_lower=float(pl),
                spec_upper=float(ph),
            )
        )

    loglik = np.concatenate([cd.loglik for cd in draws], axis=0)
    w = waic(loglik) if loglik.shape[0] >= 2 else WaicResult(float("nan"), float("nan"), float("nan"))
    spec = model.spec
    first = draws[0]
    return FitSummary(
        model=spec.kind,
        formula=spec.formula,
        dataset=model.data.name,
        fingerprint=model.data.fingerprint(),
        config={
            "chains": len(draws),
            "kept_per_chain": int(first.n_kept),
            "parameterization": spec.parameterization,
            "coef_sd": spec.priors.coef_sd,
            "sigma_scale": spec.priors.sigma_scale,
            "fixed_association": spec.fixed_association,
        },
        params=params,
        waic=w,
        studies=studies,
        sampler={
            "divergences": [cd.divergence_count for cd in draws],
            "step_size": [float(cd.step_size) for cd in draws],
            "mean_accept_stat": [float(np.mean(cd.accept_stat[cd.warmup:])) for cd in draws],
        },
    )


# ---------------------------------------------------------------------------
# comparison


_COMPARE_COLUMNS = ("model", "formula", "parameter", "label", "mean", "lower", "upper", "n_eff", "rhat", "waic")


@dataclass
class ComparisonTable:
    """Long-format rows (one per model and reported parameter), models ordered by WAIC."""

    rows: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_COMPARE_COLUMNS)
        for r in self.rows:
            writer.writerow([_fmt(r[c]) for c in _COMPARE_COLUMNS])
        return buf.getvalue()

    def to_text(self) -> str:
        cells = [list(_COMPARE_COLUMNS)] + [[_fmt(r[c], 4) for c in _COMPARE_COLUMNS] for r in self.rows]
        widths = [max(len(row[j]) for row in cells) for j in range(len(_COMPARE_COLUMNS))]
        lines = []
        for row in cells:
            lines.append("  ".join(v.ljust(w) if j < 4 else v.rjust(w) for j, (v, w) in enumerate(zip(row, widths))))
        return "\n".join(lines) + "\n"

    @property
    def models(self) -> list:
        seen = []
        for r in self.rows:
            if r["model"] not in seen:
                seen.append(r["model"])
        return seen


def _fmt(v, digits=None) -> str:
    if isinstance(v, float):
        if digits is not None and math.isfinite(v):
            return f"{v:.{digits}f}"
        return repr(v)
    return str(v)


def compare(fits) -> ComparisonTable:
    """Comparison table sorted by ascending WAIC; ties keep input order."""
    fits = list(fits)
    if len(fits) < 2:
        raise ValueError("comparison needs at least two fits")
    prints = {f.fingerprint for f in fits}
    if len(prints) != 1:
        raise ComparabilityError("fits were computed on different datasets")
    order = sorted(range(len(fits)), key=lambda i: fits[i].waic.waic)  # sorted() is stable
    rows = []
    for i in order:
        f = fits[i]
        for p in f.params:
            rows.append(
                {
                    "model": f.model,
                    "formula": f.formula,
                    "parameter": p.name,
                    "label": p.label,
                    "mean": p.mean,
                    "lower": p.lower,
                    "upper": p.upper,
                    "n_eff": p.n_eff,
                    "rhat": p.rhat,
                    "waic": f.waic.waic,
                }
            )
    return ComparisonTable(rows)
