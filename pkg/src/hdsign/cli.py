"""Command-line interface.

Subcommands::

    hdsign test --data FILE [--methods TR] [--alpha 0.05] [--bootstrap 500] [--seed S]
    hdsign experiment --n 40 --p 100 --rho 0.1 --model normal [--reps ...]
    hdsign suite [--config grid.toml] --out DIR
    hdsign limits (--eigenvalues FILE | --p P --rho R) [--law tinf|qp] --draws M
    hdsign kappa4 --p P --rho R [--pairs N]

The subcommand may also be given as ``--command NAME``.  Settings can come
from a TOML file (``--config``); flags override file keys.  Exit codes: 0 on
success, 2 for usage or domain errors, 3 for numerical failures.
"""

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import DomainError
from .limits import (
    kappa4_compound_symmetric,
    kappa4_mc,
    kappa4_spherical,
    sample_Qp,
    sample_T_infinity,
    spectral_weights,
    weights_from_eigenvalues,
)
from .location_tests import wild_bootstrap_test, wpl_test, zgcz_test
from .montecarlo import (
    METHODS,
    MODELS,
    ExperimentConfig,
    default_grid,
    markdown_tables,
    run_experiment,
    run_suite,
    write_csv,
)
from .rng import entropy_seed, make_stream, text_key
from .scatter import build_equicorrelated, sample
from .signs import spatial_signs

COMMANDS = ("test", "experiment", "suite", "limits", "kappa4")
FORMATS = ("csv", "markdown", "json-lines")

# keys accepted in config files; flags use the same names
_KEYS = {
    "n": int, "p": int, "rho": float, "model": str, "hypothesis": str,
    "reps": int, "bootstrap": int, "alpha": float, "methods": str, "seed": int,
    "workers": int, "format": str, "out": str, "data": str, "eigenvalues": str,
    "law": str, "draws": int, "pairs": int, "sign_samples": int, "timings": bool,
}


class UsageError(Exception):
    pass


class DataFileError(UsageError):
    pass


# --------------------------------------------------------------------------- parsing

def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with settings; flags override it")
    common.add_argument("--n", help="sample size (comma list for suite)")
    common.add_argument("--p", help="dimension (comma list for suite)")
    common.add_argument("--rho", help="equicorrelation (comma list for suite)")
    common.add_argument("--model", help="normal, t or mixture (comma list for suite)")
    common.add_argument("--hypothesis", help="null or power (comma list for suite)")
    common.add_argument("--reps", type=int)
    common.add_argument("--bootstrap", type=int, help="bootstrap replicates per test")
    common.add_argument("--alpha", type=float)
    common.add_argument("--methods", help="comma list from WPL,ZGCZ,TR,TN")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--format", choices=FORMATS)
    common.add_argument("--out", help="output file (directory for suite)")
    common.add_argument("--timings", action="store_true", default=None,
                        help="fill the seconds column (output is then not reproducible)")

    parser = argparse.ArgumentParser(prog="hdsign", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_test = sub.add_parser("test", parents=[common], help="test H0: mu = 0 on a data file")
    p_test.add_argument("--data", help="delimiter-separated numeric matrix, one row per observation")
    sub.add_parser("experiment", parents=[common], help="one Monte Carlo cell")
    sub.add_parser("suite", parents=[common], help="a grid of cells with tables")
    p_lim = sub.add_parser("limits", parents=[common], help="sample the limit laws")
    p_lim.add_argument("--eigenvalues", help="file of sign-scatter eigenvalues")
    p_lim.add_argument("--law", choices=("tinf", "qp"))
    p_lim.add_argument("--draws", type=int)
    p_lim.add_argument("--sign-samples", dest="sign_samples", type=int,
                       help="signs used to estimate a generated sign scatter")
    p_k = sub.add_parser("kappa4", parents=[common], help="closed-form and Monte Carlo kappa4")
    p_k.add_argument("--pairs", type=int, help="Monte Carlo sign pairs (0 to skip)")
    return parser


def _normalize_argv(argv):
    argv = list(argv)
    for i, tok in enumerate(argv):
        if tok == "--command" and i + 1 < len(argv):
            name = argv[i + 1]
            return [name] + argv[:i] + argv[i + 2:]
        if tok.startswith("--command="):
            return [tok.split("=", 1)[1]] + argv[:i] + argv[i + 1:]
    return argv


def _load_config(path):
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"invalid config {path}: {exc}") from exc
    for key in data:
        if key not in _KEYS:
            raise UsageError(f"unknown config key {key!r}")
    return data


def _settings(args):
    """Merge config-file values with flags (flags win)."""
    merged = _load_config(args.config) if args.config else {}
    for key in _KEYS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return merged


def _as_list(value, cast, key):
    if value is None:
        return None
    items = value if isinstance(value, list) else str(value).split(",")
    try:
        return [cast(v.strip() if isinstance(v, str) else v) for v in items if str(v).strip() != ""]
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid value for {key!r}: {value!r}") from exc


def _scalar(settings, key, cast, default=None):
    vals = _as_list(settings.get(key), cast, key)
    if not vals:
        return default
    if len(vals) != 1:
        raise UsageError(f"{key!r} takes a single value here, got {vals}")
    return vals[0]


def _methods(settings, default=METHODS):
    vals = _as_list(settings.get("methods"), lambda s: str(s).upper(), "methods")
    if not vals:
        return tuple(default)
    bad = [m for m in vals if m not in METHODS]
    if bad:
        raise UsageError(f"unknown method(s) {bad}; choose from {','.join(METHODS)}")
    return tuple(vals)


def _seed(settings):
    seed = settings.get("seed")
    return int(seed) if seed is not None else entropy_seed()


# --------------------------------------------------------------------------- data files

def read_matrix(path):
    """Read a delimiter-separated numeric matrix.

    Commas, semicolons, tabs or runs of spaces separate fields. Blank lines and
    lines starting with ``#`` are skipped. Errors name the 1-based line and
    column of the offending cell.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataFileError(f"cannot read {path}: {exc}") from exc
    rows, width = [], None
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        for sep in (",", ";", "\t"):
            if sep in s:
                cells = [c.strip() for c in s.split(sep)]
                break
        else:
            cells = s.split()
        vals = []
        for col, cell in enumerate(cells, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise DataFileError(f"row {lineno}, column {col}: non-numeric value {cell!r}") from None
            if not math.isfinite(v):
                raise DataFileError(f"row {lineno}, column {col}: non-finite value {cell!r}")
            vals.append(v)
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise DataFileError(f"row {lineno}: expected {width} columns, found {len(vals)}")
        rows.append(vals)
    if not rows:
        raise DataFileError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


# --------------------------------------------------------------------------- output

def _open_out(settings):
    out = settings.get("out")
    if out in (None, "-"):
        return sys.stdout, False
    return open(out, "w", newline=""), True


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


# --------------------------------------------------------------------------- commands

def cmd_test(settings):
    if not settings.get("data"):
        raise UsageError("test needs --data FILE")
    X = read_matrix(settings["data"])
    if X.shape[0] < 4:
        raise DataFileError(f"{settings['data']}: need at least 4 rows, found {X.shape[0]}")
    alpha = _scalar(settings, "alpha", float, 0.05)
    M = _scalar(settings, "bootstrap", int, 500)
    seed = _seed(settings)
    methods = _methods(settings, default=("TR",))
    outcomes = []
    for m in methods:
        if m == "WPL":
            outcomes.append(wpl_test(X, alpha))
        elif m == "ZGCZ":
            outcomes.append(zgcz_test(X, alpha))
        else:
            mult = "rademacher" if m == "TR" else "gaussian"
            rng = make_stream(seed, text_key("test"), 0, text_key(m))
            outcomes.append(wild_bootstrap_test(X, alpha, M, mult, rng))
    fmt = settings.get("format") or "csv"
    sink, close = _open_out(settings)
    try:
        if fmt == "json-lines":
            sink.write(json.dumps({"seed": seed, "n": X.shape[0], "p": X.shape[1]}) + "\n")
            for o in outcomes:
                rec = {"method": o.method, "statistic": o.statistic,
                       "critical_value": o.critical_value, "reject": o.reject, "alpha": o.alpha,
                       "extras": {k: _jsonable(v) for k, v in o.extras.items()}}
                sink.write(json.dumps(rec) + "\n")
        elif fmt == "markdown":
            sink.write(f"<!-- seed: {seed} -->\n")
            sink.write("| method | statistic | critical value | decision |\n|---|---|---|---|\n")
            for o in outcomes:
                sink.write(f"| {o.method} | {o.statistic!r} | {o.critical_value!r} | "
                           f"{'reject' if o.reject else 'retain'} |\n")
        else:
            sink.write(f"# seed: {seed}\n")
            sink.write("method,statistic,critical_value,decision,alpha,n,p\n")
            for o in outcomes:
                sink.write(f"{o.method},{o.statistic!r},{o.critical_value!r},"
                           f"{'reject' if o.reject else 'retain'},{o.alpha!r},{X.shape[0]},{X.shape[1]}\n")
    finally:
        if close:
            sink.close()
    return 0


def _experiment_config(settings, seed):
    for key in ("n", "p", "rho"):
        if settings.get(key) is None:
            raise UsageError(f"experiment needs --{key}")
    return ExperimentConfig(
        n=_scalar(settings, "n", int),
        p=_scalar(settings, "p", int),
        rho=_scalar(settings, "rho", float),
        model=_scalar(settings, "model", str, "normal"),
        hypothesis=_scalar(settings, "hypothesis", str, "null"),
        reps=_scalar(settings, "reps", int, 2000),
        bootstrap_M=_scalar(settings, "bootstrap", int, 200),
        alpha=_scalar(settings, "alpha", float, 0.05),
        methods=_methods(settings),
        seed=seed,
    )


def _emit_reports(reports, settings, seed):
    fmt = settings.get("format") or "csv"
    sink, close = _open_out(settings)
    try:
        if fmt == "csv":
            write_csv(reports, sink, bool(settings.get("timings")), header=[f"seed: {seed}"])
        elif fmt == "markdown":
            sink.write(f"<!-- seed: {seed} -->\n")
            for text in markdown_tables(reports).values():
                sink.write(text + "\n")
        else:
            sink.write(json.dumps({"seed": seed}) + "\n")
            for rep in reports:
                for row in rep.rows(bool(settings.get("timings"))):
                    sink.write(json.dumps(row) + "\n")
    finally:
        if close:
            sink.close()


def cmd_experiment(settings):
    seed = _seed(settings)
    cfg = _experiment_config(settings, seed)
    rep = run_experiment(cfg, workers=_scalar(settings, "workers", int, 1))
    _emit_reports([rep], settings, seed)
    return 0


def cmd_suite(settings):
    seed = _seed(settings)
    kw = dict(
        reps=_scalar(settings, "reps", int, 2000),
        bootstrap_M=_scalar(settings, "bootstrap", int, 200),
        alpha=_scalar(settings, "alpha", float, 0.05),
        methods=_methods(settings),
        seed=seed,
    )
    for key, name, cast in (("model", "models", str), ("hypothesis", "hypotheses", str),
                            ("rho", "rhos", float), ("n", "ns", int), ("p", "ps", int)):
        vals = _as_list(settings.get(key), cast, key)
        if vals:
            kw[name] = tuple(vals)
    grid = default_grid(**kw)
    out = settings.get("out")
    if not out or out == "-":
        raise UsageError("suite needs --out DIR")
    workers = _scalar(settings, "workers", int, 1)

    def progress(i, cfg):
        print(f"[{i + 1}/{len(grid)}] {cfg.model} {cfg.hypothesis} rho={cfg.rho} "
              f"n={cfg.n} p={cfg.p}", file=sys.stderr)

    suite = run_suite(grid, out, workers=workers, timings=bool(settings.get("timings")),
                      progress=progress)
    print(f"seed: {seed}")
    print(f"wrote {len(suite.reports)} cells to {out}")
    for i, msg in sorted(suite.failures.items()):
        print(f"cell {i} failed: {msg}", file=sys.stderr)
    return 0


def _moments(x):
    m = float(np.mean(x))
    c = x - m
    var = float(np.mean(c * c))
    m3 = float(np.mean(c**3))
    return {"mean": m, "variance": var, "third_central_moment": m3,
            "skewness": m3 / var**1.5 if var > 0 else float("nan")}


def cmd_limits(settings):
    seed = _seed(settings)
    draws = _scalar(settings, "draws", int, 10_000)
    law = _scalar(settings, "law", str, "tinf")
    if settings.get("eigenvalues"):
        lam = read_matrix(settings["eigenvalues"]).ravel()
        if not np.any(lam != 0):
            raise DomainError("eigenvalue spectrum is identically zero")
        # both laws are invariant to the scale of the spectrum
        w = weights_from_eigenvalues(lam / np.abs(lam).sum())
        source = settings["eigenvalues"]
    else:
        p = _scalar(settings, "p", int)
        rho = _scalar(settings, "rho", float, 0.0)
        if p is None:
            raise UsageError("limits needs --eigenvalues FILE or --p (and --rho)")
        model = MODELS[_scalar(settings, "model", str, "normal")]
        count = _scalar(settings, "sign_samples", int, 20_000)
        U, _ = spatial_signs(sample(model, build_equicorrelated(p, rho), count,
                                    make_stream(seed, text_key("limits-signs"))).X)
        w = spectral_weights(U.T @ U / count)
        source = f"generated p={p} rho={rho} signs={count}"
    rng = make_stream(seed, text_key("limits-draws"))
    if law == "tinf":
        x = sample_T_infinity(w, draws, rng)
    elif law == "qp":
        x = sample_Qp(w, draws, rng)
    else:
        raise UsageError(f"law must be 'tinf' or 'qp', got {law!r}")
    out = settings.get("out")
    if out and out != "-":
        Path(out).write_text("".join(f"{v!r}\n" for v in x))
    summary = {"seed": seed, "law": law, "source": source, "draws": draws,
               "tau": w.tau, "max_alpha": float(w.alpha[0]), **_moments(x)}
    print(json.dumps(summary))
    return 0


def cmd_kappa4(settings):
    p = _scalar(settings, "p", int)
    if p is None:
        raise UsageError("kappa4 needs --p")
    rho = _scalar(settings, "rho", float, 0.0)
    result = {"p": p, "rho": rho}
    if rho == 0.0:
        result["closed_form"] = kappa4_spherical(p)
    else:
        rep = kappa4_compound_symmetric(p, rho)
        result["closed_form"] = rep.value
    result["upper_bound_p"] = p
    pairs = _scalar(settings, "pairs", int, 0)
    if pairs:
        seed = _seed(settings)
        model = MODELS[_scalar(settings, "model", str, "normal")]
        mc = kappa4_mc(model, build_equicorrelated(p, rho), pairs,
                       make_stream(seed, text_key("kappa4")))
        result.update(seed=seed, mc_value=mc.value, mc_stderr=mc.stderr, mc_tau=mc.tau)
    print(json.dumps(result))
    return 0


_DISPATCH = {"test": cmd_test, "experiment": cmd_experiment, "suite": cmd_suite,
             "limits": cmd_limits, "kappa4": cmd_kappa4}


def main(argv=None):
    argv = _normalize_argv(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        settings = _settings(args)
        return _DISPATCH[args.command](settings)
    except (UsageError, DomainError) as exc:
        print(f"hdsign {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"hdsign {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
