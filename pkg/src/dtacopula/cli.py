"""Command-line interface: ``dtacopula fit | plot | compare``.

Errors are reported on stderr as one line ``dtacopula-error:<kind>: <message>``
with exit codes 2 (usage), 3 (data or bundle), 4 (sampling) and 5 (internal).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import DataError, Dataset, builtin_dataset, design_matrix, parse_csv
from .diagnostics import DegenerateChainWarning
from .models import MODEL_KINDS, PARAMETERIZATIONS, ModelSpec, build_model
from .plots import forest_svg, trace_svg
from .sampler import ChainConfig, SamplingError, run_chains
from .summaries import ComparabilityError, FitSummary, compare, reported_quantities, summarize

OUT_ENV = "DTACOPULA_OUT"
DEFAULT_OUT = "dtacopula-runs"
MANIFEST_VERSION = "v1"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SAMPLING, EXIT_INTERNAL = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


class BundleError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dtacopula", description="Bayesian copula models for diagnostic accuracy meta-analysis.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log warmup progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    fit = sub.add_parser("fit", help="sample a model and write an output bundle")
    fit.add_argument("--copula", required=True, choices=MODEL_KINDS + ("270",))
    src = fit.add_mutually_exclusive_group()
    src.add_argument("--data", help="CSV file with one row per study")
    src.add_argument("--builtin", help="bundled dataset: telomerase or ascus")
    fit.add_argument("--sid", default="ID", help="study id column (default: ID)")
    fit.add_argument("--format", default="dis_nondis", choices=("dis_nondis", "tp_fp_tn_fn"))
    fit.add_argument("--covariates", default="", help="comma-separated covariate columns of --data")
    fit.add_argument("--formula", default="intercept", help="intercept or cellmeans:COV")
    fit.add_argument("--iter", type=int, default=2000)
    fit.add_argument("--warmup", type=int, default=1000)
    fit.add_argument("--thin", type=int, default=1)
    fit.add_argument("--chains", type=int, default=3)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--max-tree-depth", type=int, default=10)
    fit.add_argument("--target-accept", type=float, default=0.8)
    fit.add_argument("--parameterization", default="noncentered", choices=PARAMETERIZATIONS)
    fit.add_argument("--jobs", type=int, default=1, help="worker processes for chains")
    fit.add_argument("--out", help=f"bundle directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")

    plot = sub.add_parser("plot", help="draw a forest or trace plot from a bundle")
    plot.add_argument("bundle")
    plot.add_argument("--kind", choices=("forest", "trace"), default="forest")
    plot.add_argument("--out", help="SVG path (default: <bundle>/<kind>.svg)")

    cmp_ = sub.add_parser("compare", help="tabulate several bundles ordered by WAIC")
    cmp_.add_argument("bundles", nargs="+")
    cmp_.add_argument("--out", help="directory for comparison.csv and comparison.txt")
    return parser


# ---------------------------------------------------------------------------
# bundle I/O


def _load_data(args) -> tuple[Dataset, str]:
    if args.builtin:
        try:
            return builtin_dataset(args.builtin), f"builtin:{args.builtin.lower()}"
        except KeyError as exc:
            raise DataError(exc.args[0]) from None
    if not args.data:
        raise UsageError("one of --data or --builtin is required")
    covs = tuple(c.strip() for c in args.covariates.split(",") if c.strip())
    if args.formula.startswith("cellmeans:"):
        cov = args.formula.split(":", 1)[1].strip()
        if cov not in covs:
            covs += (cov,)
    path = Path(args.data)
    if not path.is_file():
        raise DataError(f"data file not found: {args.data}")
    return parse_csv(str(path), args.format, args.sid, covs), str(args.data)


def _default_out(data: Dataset, args) -> Path:
    base = Path(os.environ.get(OUT_ENV) or DEFAULT_OUT)
    name = data.name or "data"
    return base / f"{name}-{args.copula}-seed{args.seed}"


def _write_draws(path: Path, draws, model) -> None:
    reported = reported_quantities(model)
    header = ["chain", "draw"] + list(model.param_names) + [r[0] for r in reported] + [
        f"loglik[{i + 1}]" for i in range(2 * model.n)
    ]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for cd in draws:
            gen = np.column_stack([cd.generated[key][:, col] for _, _, key, col in reported])
            for i in range(cd.n_kept):
                row = [cd.chain + 1, i + 1] + [repr(float(v)) for v in cd.draws[i]]
                row += [repr(float(v)) for v in gen[i]] + [repr(float(v)) for v in cd.loglik[i]]
                w.writerow(row)


def _write_diagnostics(path: Path, draws, model, summary: FitSummary) -> None:
    from .summaries import summarize_series

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["parameter", "scale", "mean", "sd", "se_mean", "n_eff", "rhat"])
        for p in summary.params:
            w.writerow([p.name, "reported", repr(p.mean), repr(p.sd), repr(p.se_mean), repr(p.n_eff), repr(p.rhat)])
        stacked = np.stack([cd.draws for cd in draws])
        for j, name in enumerate(model.param_names):
            s = summarize_series(name, "", stacked[:, :, j])
            w.writerow([name, "unconstrained", repr(s.mean), repr(s.sd), repr(s.se_mean), repr(s.n_eff), repr(s.rhat)])


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_bundle(path) -> tuple[FitSummary, dict]:
    path = Path(path)
    try:
        summary = FitSummary.from_dict(json.loads((path / "summary.json").read_text()))
        manifest = json.loads((path / "manifest.json").read_text())
    except FileNotFoundError as exc:
        raise BundleError(f"not a fit bundle ({exc.filename} missing)") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise BundleError(f"corrupt bundle {path}: {exc}") from None
    return summary, manifest


def read_trace_series(path) -> dict:
    """Reported-parameter draws from ``draws.csv`` as name -> (chains x draws)."""
    path = Path(path)
    summary, _ = read_bundle(path)
    names = [p.name for p in summary.params]
    try:
        with open(path / "draws.csv", newline="") as fh:
            reader = csv.DictReader(fh)
            by_chain: dict = {}
            for row in reader:
                by_chain.setdefault(int(row["chain"]), []).append([float(row[n]) for n in names])
    except FileNotFoundError:
        raise BundleError(f"not a fit bundle ({path / 'draws.csv'} missing)") from None
    except (KeyError, ValueError) as exc:
        raise BundleError(f"corrupt draws.csv in {path}: {exc}") from None
    if not by_chain:
        raise BundleError(f"draws.csv in {path} has no rows")
    arr = np.array([by_chain[c] for c in sorted(by_chain)])  # chains x draws x params
    return {n: arr[:, :, j] for j, n in enumerate(names)}


# ---------------------------------------------------------------------------
# commands


def cmd_fit(args) -> int:
    data, source = _load_data(args)
    config = ChainConfig(
        chains=args.chains,
        iter=args.iter,
        warmup=args.warmup,
        thin=args.thin,
        seed=args.seed,
        max_tree_depth=args.max_tree_depth,
        target_accept=args.target_accept,
    )
    if config.chains < 2:
        raise UsageError("--chains must be at least 2 for convergence diagnostics")
    spec = ModelSpec(args.copula, design_matrix(data, args.formula), formula=args.formula,
                     parameterization=args.parameterization)
    model = build_model(spec, data)
    draws = run_chains(model, config, n_jobs=max(1, args.jobs))
    summary = summarize(draws, model)
    summary.config.update(iter=config.iter, warmup=config.warmup, thin=config.thin, seed=config.seed,
                          max_tree_depth=config.max_tree_depth, target_accept=config.target_accept)

    out = Path(args.out) if args.out else _default_out(data, args)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(summary.to_json())
    _write_draws(out / "draws.csv", draws, model)
    _write_diagnostics(out / "diagnostics.csv", draws, model, summary)
    _dump_json(
        out / "manifest.json",
        {
            "manifest_version": MANIFEST_VERSION,
            "summary_schema": summary.schema_version,
            "package_version": __version__,
            "subcommand": "fit",
            "data_source": source,
            "dataset": data.to_dict(),
            "model": spec.kind,
            "formula": spec.formula,
            "parameterization": spec.parameterization,
            "priors": {"coef_sd": spec.priors.coef_sd, "sigma_scale": spec.priors.sigma_scale},
            "config": {k: getattr(config, k) for k in ("chains", "iter", "warmup", "thin", "seed",
                                                       "max_tree_depth", "target_accept")},
            "output_dir": str(out),
            "files": ["summary.json", "draws.csv", "diagnostics.csv", "manifest.json"],
        },
    )
    print(summary.format())
    print(f"total post-warmup draws={sum(cd.n_kept for cd in draws)}")
    print(f"bundle: {out}")
    return EXIT_OK


def cmd_plot(args) -> int:
    bundle = Path(args.bundle)
    summary, _ = read_bundle(bundle)
    if args.kind == "forest":
        svg = forest_svg(summary)
    else:
        svg = trace_svg(read_trace_series(bundle), title=f"Trace plot: {summary.model} ({summary.dataset})")
    out = Path(args.out) if args.out else bundle / f"{args.kind}.svg"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg)
    print(out)
    return EXIT_OK


def cmd_compare(args) -> int:
    fits = [read_bundle(b)[0] for b in args.bundles]
    table = compare(fits)
    text = table.to_text()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.csv").write_text(table.to_csv())
        (out / "comparison.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


_COMMANDS = {"fit": cmd_fit, "plot": cmd_plot, "compare": cmd_compare}


def _fail(kind: str, code: int, message) -> int:
    msg = " ".join(str(message).split())
    print(f"dtacopula-error:{kind}: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: fit, plot or compare")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(name)s: %(message)s", stream=sys.stderr)
        logging.captureWarnings(True)
        import warnings

        warnings.simplefilter("ignore", DegenerateChainWarning)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail("usage", EXIT_USAGE, exc)
    except (DataError, ComparabilityError) as exc:
        return _fail("data", EXIT_DATA, exc)
    except (BundleError, OSError) as exc:
        return _fail("io", EXIT_DATA, exc)
    except SamplingError as exc:
        return _fail("sampling", EXIT_SAMPLING, exc)
    except ValueError as exc:
        # configuration problems detected below argparse (e.g. warmup >= iter)
        return _fail("usage", EXIT_USAGE, exc)
    except Exception as exc:  # noqa: BLE001
        return _fail("internal", EXIT_INTERNAL, f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
