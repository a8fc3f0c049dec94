"""End-to-end acceptance checks against published reference values.

Each criterion records its parts in ``RESULTS``; ``conftest.py`` prints one
PASS/FAIL line per criterion at the end of the session. Run this file
directly (``python tests/test_acceptance.py``) to get the same report.

A few parts are marked xfail: they are not reachable with the documented
priors and summaries, and the reasons are recorded in the project's
decisions ledger rather than hidden by a looser tolerance.
"""

from __future__ import annotations

import subprocess
import sys
import time
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from dtacopula import DTAMetaAnalysis, builtin_dataset
from dtacopula.summaries import WaicResult

pytestmark = pytest.mark.slow

RESULTS: dict[int, list] = {}
TITLES = {
    1: "telomerase gauss",
    2: "telomerase BRMA",
    3: "telomerase, five copula families",
    4: "ascus FGM by test",
    5: "WAIC identity",
    6: "property suites under 60 s",
    7: "ascus Clayton rotations complete",
}
KNOWN = {
    "tau": "posterior tau mean under Normal(0, 10) priors is about -0.96",
    "MU[2] lower": "printed interval averages 10 predictive draws; quadrature mean is narrower",
    "rho upper": "printed interval averages 10 predictive draws; quadrature mean is narrower",
}
HERE = Path(__file__).resolve().parent


def record(crit, part, value, target, ok):
    RESULTS.setdefault(crit, []).append((part, bool(ok), f"{value} (target {target})"))
    return bool(ok)


def near(crit, part, value, ref, tol):
    return record(crit, part, f"{value:.4f}", f"{ref} +/- {tol}", abs(value - ref) <= tol)


@lru_cache(maxsize=None)
def fit(copula, data="telomerase", formula="intercept", chains=3, iter=1500, warmup=500, seed=1):
    start = time.perf_counter()
    est = DTAMetaAnalysis(copula=copula, formula=formula, chains=chains, iter=iter, warmup=warmup, seed=seed)
    est.fit(builtin_dataset(data))
    est.elapsed_ = time.perf_counter() - start
    return est


def draws(est, key, col=0):
    return est.posterior(key)[:, col]


# ---------------------------------------------------------------------------
# 1. gauss copula on telomerase


def test_telomerase_gauss():
    est = fit("gauss")
    ok = near(1, "sensitivity", draws(est, "MUse").mean(), 0.7540, 0.03)
    ok &= near(1, "specificity", draws(est, "MUsp").mean(), 0.8006, 0.04)
    ok &= near(1, "WAIC", est.waic_.waic, 89.894, 3.0)
    ok &= record(1, "runtime", f"{est.elapsed_:.0f} s", "< 300 s", est.elapsed_ < 300)
    assert ok


@pytest.mark.xfail(reason="unattainable under the documented priors; see decisions ledger", strict=False)
def test_telomerase_gauss_tau():
    assert near(1, "tau", draws(fit("gauss"), "ktau").mean(), -0.8436, 0.10)


# ---------------------------------------------------------------------------
# 2. BRMA on telomerase


def brma():
    return fit("brma", iter=4000, warmup=1000)


def _interval(x):
    return np.quantile(x, [0.025, 0.975])


def test_telomerase_brma():
    est = brma()
    mu1, mu2, rho = draws(est, "MUse"), draws(est, "MUsp"), draws(est, "rho")
    ok = near(2, "MU[1]", mu1.mean(), 0.7549, 0.03)
    ok &= near(2, "MU[2]", mu2.mean(), 0.7901, 0.06)
    ok &= near(2, "rho", rho.mean(), -0.9338, 0.10)
    ok &= near(2, "WAIC", est.waic_.waic, 86.636, 3.0)
    lo, hi = _interval(mu1)
    ok &= near(2, "MU[1] lower", lo, 0.6438, 0.05)
    ok &= near(2, "MU[1] upper", hi, 0.8408, 0.05)
    ok &= near(2, "MU[2] upper", _interval(mu2)[1], 0.9554, 0.05)
    ok &= near(2, "rho lower", _interval(rho)[0], -0.9993, 0.05)
    assert ok


@pytest.mark.xfail(reason="printed bound comes from a wider predictive summary; see decisions ledger", strict=False)
def test_telomerase_brma_mu2_lower():
    assert near(2, "MU[2] lower", _interval(draws(brma(), "MUsp"))[0], 0.5252, 0.05)


@pytest.mark.xfail(reason="printed bound comes from a wider predictive summary; see decisions ledger", strict=False)
def test_telomerase_brma_rho_upper():
    assert near(2, "rho upper", _interval(draws(brma(), "rho"))[1], -0.5711, 0.05)


# ---------------------------------------------------------------------------
# 3. every copula family on telomerase


@pytest.mark.parametrize("copula", ["gauss", "frank", "fgm", "c90", "c270"])
def test_telomerase_families(copula):
    est = fit(copula)
    se, sp = draws(est, "MUse").mean(), draws(est, "MUsp").mean()
    ok = record(3, f"{copula} sensitivity", f"{se:.4f}", "[0.74, 0.77]", 0.74 <= se <= 0.77)
    ok &= record(3, f"{copula} specificity", f"{sp:.4f}", "[0.79, 0.82]", 0.79 <= sp <= 0.82)
    if copula == "fgm":
        tau = draws(est, "ktau")
        inside = np.all(np.abs(tau) <= 2.0 / 9.0 + 1e-12)
        ok &= record(3, "fgm tau bound", f"[{tau.min():.4f}, {tau.max():.4f}]", "within +/- 2/9", inside)
    assert ok


# ---------------------------------------------------------------------------
# 4. FGM with cell means on ascus


def test_ascus_fgm_by_test():
    est = fit("fgm", data="ascus", formula="cellmeans:Test", iter=1000, warmup=500)
    cells = list(est.model_.cell_names)
    repc, hc2 = cells.index("RepC"), cells.index("HC2")
    ok = near(4, "RepC tau", draws(est, "ktau", repc).mean(), -0.1999, 0.10)
    ok &= near(4, "HC2 tau", draws(est, "ktau", hc2).mean(), -0.0836, 0.12)
    frac = float(np.mean(draws(est, "MUse", repc) < draws(est, "MUse", hc2)))
    ok &= record(4, "P(RepC sens < HC2 sens)", f"{frac:.3f}", ">= 0.95", frac >= 0.95)
    assert ok


# ---------------------------------------------------------------------------
# 5. WAIC from printed components


def test_waic_identity():
    w = WaicResult.from_components(-37.8529, 7.0941)
    assert record(5, "WAIC", f"{w.waic:.4f}", "89.8940", abs(w.waic - 89.8940) < 1e-9)


# ---------------------------------------------------------------------------
# 6. property suites, each timed in a fresh interpreter

SUITES = {
    "copula normalization and tau identity": [
        "tests/test_copulas.py::test_density_normalises",
        "tests/test_copulas.py::test_tau_quadrature_identity",
    ],
    "gradient vs finite differences": ["tests/test_models.py::test_gradient_matches_finite_differences"],
    "sampler calibration": [
        "tests/test_sampler.py::test_ten_dim_normal",
        "tests/test_sampler.py::test_correlated_normal_ks",
    ],
    "split R-hat and ESS": ["tests/test_diagnostics.py"],
    "Clopper-Pearson coverage": ["tests/test_summaries.py::test_exact_ci_coverage"],
    "independence oracle": ["tests/test_oracle.py"],
}


@pytest.mark.parametrize("suite", list(SUITES))
def test_property_suite(suite):
    start = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *SUITES[suite]],
        cwd=HERE.parent, capture_output=True, text=True,
    )
    elapsed = time.perf_counter() - start
    passed = proc.returncode == 0
    status = "passed" if passed else proc.stdout.strip().splitlines()[-1]
    assert record(6, suite, f"{status} in {elapsed:.0f} s", "passes in < 60 s", passed and elapsed < 60), proc.stdout


# ---------------------------------------------------------------------------
# 7. unstable rotations: completion and divergence reporting only


@pytest.mark.parametrize("copula", ["c90", "c270"])
def test_ascus_clayton_completes(copula):
    est = fit(copula, data="ascus", formula="cellmeans:Test", chains=2, iter=300, warmup=150)
    div = est.summary_.sampler["divergences"]
    ok = record(7, f"{copula} divergences reported", sum(div), "an integer per chain",
                len(div) == 2 and all(isinstance(d, int) and d >= 0 for d in div))
    ok &= record(7, f"{copula} reported block", "present" if "Divergent transitions" in est.summary_.format() else "missing",
                 "divergence line", "Divergent transitions" in est.summary_.format())
    ok &= record(7, f"{copula} draws finite", bool(np.all(np.isfinite(est.posterior("MUse")))), True,
                 np.all(np.isfinite(est.posterior("MUse"))))
    assert ok


# ---------------------------------------------------------------------------


def report_lines():
    lines = []
    for crit in sorted(TITLES):
        parts = RESULTS.get(crit)
        if not parts:
            continue
        failed = [p for p in parts if not p[1]]
        head = f"{'PASS' if not failed else 'FAIL'} criterion {crit} ({TITLES[crit]})"
        if failed:
            detail = "; ".join(
                f"{name}: {val}" + (f" [known: {KNOWN[name]}]" if name in KNOWN else "") for name, _, val in failed
            )
            head += f": {detail}"
        lines.append(head)
    return lines


if __name__ == "__main__":
    # the criterion lines come from the terminal-summary hook in conftest.py
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
