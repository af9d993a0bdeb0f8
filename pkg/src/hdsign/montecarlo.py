"""Monte Carlo size and power experiments for the four sign tests.

Every replication draws one dataset and hands it to all selected methods, so
columns of a report are paired comparisons.  Random streams are keyed by
``(seed, cell, replication, purpose)``; the outcome of a run therefore does not
depend on how replications are split across worker processes.
"""

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._validation import DomainError, check_alpha
from .location_tests import _n_pairs, _wild_outcome, _wpl_outcome, _zgcz_outcome
from .rng import DATA, METHOD_CODES, make_stream, text_key
from .scatter import DistributionModel, build_equicorrelated, power_shift_delta, sample
from .signs import spatial_median, spatial_signs, trace2_from_gram

__all__ = [
    "METHODS",
    "ExperimentConfig",
    "ExperimentReport",
    "ReplicationError",
    "run_experiment",
    "are_summary",
    "SuiteReport",
    "run_suite",
    "default_grid",
    "CSV_FIELDS",
    "write_csv",
    "read_csv",
    "markdown_tables",
]

METHODS = ("WPL", "ZGCZ", "TR", "TN")
MODELS = {
    "normal": DistributionModel("normal"),
    "t": DistributionModel("t", nu=3.0),
    "mixture": DistributionModel("mixture", weight=0.2, scale2=9.0),
}
HYPOTHESES = ("null", "power")
CSV_FIELDS = ("n", "p", "rho", "model", "hypothesis", "method", "reps", "bootstrap_M",
              "alpha", "rejection_rate", "stderr", "seconds")


class ReplicationError(RuntimeError):
    """A replication failed; carries the replication index."""

    def __init__(self, rep, message):
        super().__init__(rep, message)
        self.rep = rep
        self.message = message

    def __str__(self):
        return f"replication {self.rep}: {self.message}"


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    p: int
    rho: float
    model: str = "normal"
    hypothesis: str = "null"
    reps: int = 2000
    bootstrap_M: int = 200
    alpha: float = 0.05
    methods: tuple = METHODS
    seed: int = 0

    def __post_init__(self):
        if self.n < 4:
            raise DomainError(f"n must be at least 4, got {self.n}")
        if self.p < 1:
            raise DomainError(f"p must be positive, got {self.p}")
        if self.model not in MODELS:
            raise DomainError(f"model must be one of {sorted(MODELS)}, got {self.model!r}")
        if self.hypothesis not in HYPOTHESES:
            raise DomainError(f"hypothesis must be one of {HYPOTHESES}, got {self.hypothesis!r}")
        if self.reps < 1 or self.bootstrap_M < 1:
            raise DomainError("reps and bootstrap_M must be at least 1")
        check_alpha(self.alpha)
        methods = tuple(self.methods)
        bad = [m for m in methods if m not in METHODS]
        if bad or not methods:
            raise DomainError(f"methods must be a nonempty subset of {METHODS}, got {methods!r}")
        object.__setattr__(self, "methods", methods)
        build_equicorrelated(self.p, self.rho)

    @property
    def cell_key(self):
        # hypotheses share the cell key: null and shifted data use common noise
        return text_key(f"{self.model}|{self.n}|{self.p}|{self.rho!r}")

    def scatter(self):
        return build_equicorrelated(self.p, self.rho)

    def distribution(self):
        model = MODELS[self.model]
        if self.hypothesis == "null":
            return model
        delta = power_shift_delta(self.n, self.p, self.scatter(), model)
        return model.with_location(np.full(self.p, delta))


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rejections: dict
    seconds: dict = field(default_factory=dict)

    def rejection_rate(self, method):
        return self.rejections[method] / self.config.reps

    def stderr(self, method):
        r = self.rejection_rate(method)
        return math.sqrt(r * (1.0 - r) / self.config.reps)

    @property
    def rejection_rates(self):
        return {m: self.rejection_rate(m) for m in self.config.methods}

    def rows(self, timings=False):
        c = self.config
        for m in c.methods:
            yield {
                "n": c.n, "p": c.p, "rho": c.rho, "model": c.model,
                "hypothesis": c.hypothesis, "method": m, "reps": c.reps,
                "bootstrap_M": c.bootstrap_M, "alpha": c.alpha,
                "rejection_rate": self.rejection_rate(m), "stderr": self.stderr(m),
                "seconds": self.seconds.get(m) if timings else None,
            }


def _replicate(config, scatter, model, rep):
    """Rejection flags and per-method seconds for one replication."""
    methods = config.methods
    n, alpha = config.n, config.alpha
    key = config.cell_key
    X = sample(model, scatter, n, make_stream(config.seed, key, rep, DATA)).X
    flags = np.zeros(len(methods), dtype=np.int64)
    secs = np.zeros(len(methods))

    t0 = time.perf_counter()
    U, _ = spatial_signs(X)
    G = U @ U.T
    diag = np.trace(G)
    Sn = 0.5 * (G.sum() - diag)
    t_signs = time.perf_counter() - t0

    t_trace = t_center = 0.0
    if "WPL" in methods or "ZGCZ" in methods:
        t0 = time.perf_counter()
        tr2 = trace2_from_gram(G)
        t_trace = time.perf_counter() - t0
    if "TR" in methods or "TN" in methods:
        t0 = time.perf_counter()
        med = spatial_median(X)
        U_hat, _ = spatial_signs(X - med.mu_hat)
        G0 = U_hat @ U_hat.T
        np.fill_diagonal(G0, 0.0)
        observed = Sn / math.sqrt(_n_pairs(n))
        t_center = time.perf_counter() - t0

    for j, m in enumerate(methods):
        t0 = time.perf_counter()
        if m == "WPL":
            out = _wpl_outcome(Sn, tr2, n, alpha)
            shared = t_signs + t_trace
        elif m == "ZGCZ":
            out = _zgcz_outcome(Sn, diag, tr2, n, alpha)
            shared = t_signs + t_trace
        else:
            mult = "rademacher" if m == "TR" else "gaussian"
            rng = make_stream(config.seed, key, rep, METHOD_CODES[m])
            out = _wild_outcome(observed, G0, alpha, config.bootstrap_M, mult, rng, {})
            shared = t_signs + t_center
        flags[j] = out.reject
        secs[j] = time.perf_counter() - t0 + shared
    return flags, secs


def _run_block(config, reps):
    scatter = config.scatter()
    model = config.distribution()
    counts = np.zeros(len(config.methods), dtype=np.int64)
    secs = np.zeros(len(config.methods))
    for rep in reps:
        try:
            f, s = _replicate(config, scatter, model, rep)
        except Exception as exc:
            raise ReplicationError(rep, f"{type(exc).__name__}: {exc}") from exc
        counts += f
        secs += s
    return counts, secs


def _blocks(reps, workers):
    size = max(1, math.ceil(reps / (4 * workers)))
    return [range(lo, min(reps, lo + size)) for lo in range(0, reps, size)]


def run_experiment(config, workers=1, executor=None):
    """Empirical rejection rates of ``config.methods`` over ``config.reps`` datasets.

    ``workers > 1`` spreads replication blocks over a process pool; the counts
    are identical for any ``workers``.
    """
    if executor is None and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return run_experiment(config, workers, pool)
    counts = np.zeros(len(config.methods), dtype=np.int64)
    secs = np.zeros(len(config.methods))
    if executor is None:
        counts, secs = _run_block(config, range(config.reps))
    else:
        futures = [executor.submit(_run_block, config, b)
                   for b in _blocks(config.reps, max(workers, 1))]
        for fut in futures:
            c, s = fut.result()
            counts += c
            secs += s
    return ExperimentReport(
        config,
        {m: int(c) for m, c in zip(config.methods, counts)},
        {m: float(s) for m, s in zip(config.methods, secs)},
    )


def are_summary(sizes, alpha):
    """Average relative error ``100 * mean(|size - alpha|) / alpha``."""
    sizes = np.asarray(list(sizes), dtype=float)
    if sizes.size == 0:
        raise DomainError("are_summary needs at least one size")
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha!r}")
    return float(100.0 * np.mean(np.abs(sizes - alpha)) / alpha)


def default_grid(reps=2000, bootstrap_M=200, seed=0, alpha=0.05,
                 models=("normal", "t", "mixture"), rhos=(0.1, 0.5, 0.9),
                 ns=(40, 80, 120), ps=(100, 200, 400), hypotheses=HYPOTHESES,
                 methods=METHODS):
    """The full simulation grid, ordered model, hypothesis, rho, p, n."""
    return [
        ExperimentConfig(n, p, rho, model, hyp, reps, bootstrap_M, alpha, tuple(methods), seed)
        for model in models
        for hyp in hypotheses
        for rho in rhos
        for p in ps
        for n in ns
    ]


# --------------------------------------------------------------------------- output

def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(reports, sink, timings=False, header=None):
    """Write report rows in the ``CSV_FIELDS`` layout.

    Floats use their shortest round-trip representation. ``header`` lines are
    written first as ``# `` comments. Timing columns stay empty unless
    ``timings`` is set, so that reruns produce identical bytes.
    """
    for line in header or ():
        sink.write(f"# {line}\n")
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for rep in reports:
        for row in rep.rows(timings):
            w.writerow([_fmt(row[k]) for k in CSV_FIELDS])


_INT_FIELDS = {"n", "p", "reps", "bootstrap_M"}
_FLOAT_FIELDS = {"rho", "alpha", "rejection_rate", "stderr", "seconds"}


def read_csv(source):
    """Parse CSV produced by :func:`write_csv` back into typed row dicts."""
    lines = [ln for ln in source if not ln.startswith("#")]
    rows = []
    for raw in csv.DictReader(lines):
        row = {}
        for k, v in raw.items():
            if k in _INT_FIELDS:
                row[k] = int(v)
            elif k in _FLOAT_FIELDS:
                row[k] = float(v) if v != "" else None
            else:
                row[k] = v
        rows.append(row)
    return rows


def _rho_label(rho):
    return f"{rho:g}"


def markdown_tables(reports, alpha=None):
    """Markdown size and power tables, one per (model, hypothesis).

    Returns ``{(model, hypothesis): text}``. Rows are ``(n, p)`` cells grouped by
    ``p``; column blocks are correlation levels; entries are percentages.
    Size tables get an ``ARE (%)`` row per method column.
    """
    groups = {}
    for rep in reports:
        c = rep.config
        groups.setdefault((c.model, c.hypothesis), []).append(rep)
    out = {}
    for (model, hyp), reps in groups.items():
        rhos = sorted({r.config.rho for r in reps})
        methods = [m for m in METHODS if any(m in r.config.methods for r in reps)]
        cells = sorted({(r.config.p, r.config.n) for r in reps})
        lookup = {(r.config.n, r.config.p, r.config.rho): r for r in reps}
        kind = "Empirical sizes" if hyp == "null" else "Empirical power"
        lines = [f"### {kind} (%), {model} model", ""]
        head = ["n", "p"] + [f"{m} (rho={_rho_label(rho)})" for rho in rhos for m in methods]
        lines.append("| " + " | ".join(head) + " |")
        lines.append("|" + "---|" * len(head))
        for p, n in cells:
            vals = [str(n), str(p)]
            for rho in rhos:
                rep = lookup.get((n, p, rho))
                for m in methods:
                    if rep is None or m not in rep.rejections:
                        vals.append("")
                    else:
                        vals.append(f"{100 * rep.rejection_rate(m):.2f}")
            lines.append("| " + " | ".join(vals) + " |")
        if hyp == "null":
            vals = ["ARE (%)", ""]
            for rho in rhos:
                for m in methods:
                    sizes = [r.rejection_rate(m) for r in reps
                             if r.config.rho == rho and m in r.rejections]
                    a = alpha if alpha is not None else reps[0].config.alpha
                    vals.append(f"{are_summary(sizes, a):.2f}" if sizes else "")
            lines.append("| " + " | ".join(vals) + " |")
        out[(model, hyp)] = "\n".join(lines) + "\n"
    return out


@dataclass
class SuiteReport:
    reports: list
    failures: dict
    csv_text: str
    tables: dict

    def report_for(self, **match):
        for rep in self.reports:
            cfg = asdict(rep.config)
            if all(cfg[k] == v for k, v in match.items()):
                return rep
        raise KeyError(match)


def run_suite(grid, out_dir=None, workers=1, timings=False, progress=None):
    """Run every config of ``grid``; failures are recorded per cell.

    With ``out_dir`` set, writes ``results.csv`` and one markdown file per
    (model, hypothesis) table, e.g. ``normal_size.md``.
    """
    if not grid:
        raise DomainError("grid must contain at least one config")
    reports, failures = [], {}
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for i, cfg in enumerate(grid):
            try:
                reports.append(run_experiment(cfg, workers, pool))
            except (ReplicationError, DomainError) as exc:
                failures[i] = str(exc)
            if progress is not None:
                progress(i, cfg)
    finally:
        if pool is not None:
            pool.shutdown()
    seeds = sorted({c.seed for c in grid})
    buf = io.StringIO()
    write_csv(reports, buf, timings, header=[f"seed: {','.join(map(str, seeds))}"])
    tables = markdown_tables(reports) if reports else {}
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "results.csv").write_text(buf.getvalue())
        for (model, hyp), text in tables.items():
            name = f"{model}_{'size' if hyp == 'null' else 'power'}.md"
            (out_dir / name).write_text(text)
        if failures:
            (out_dir / "failures.txt").write_text(
                "".join(f"{grid[i]}: {msg}\n" for i, msg in sorted(failures.items())))
    return SuiteReport(reports, failures, buf.getvalue(), tables)
