"""The two simulation studies and their summary tables.

Every replication derives its own seed from the run seed, so replications
can be spread over worker processes and still reproduce a serial run
record for record.
"""
import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .distributions import exponential_product, moment_matched, truncnorm_product
from .em import fince_fit, fiscore_fit
from .exceptions import EmptyInput, FIMissingError
from .imputation import LogisticPropensity
from .inference import normal_quantile, select_graph
from .missing import (GGMRandomLogistic, IncompleteDataset, LogisticMAR, LogisticMNAR,
                      apply_missingness)
from .models import TruncatedGGM
from .nce import NoiseSample, fit_nce_complete
from .report import ExtendedParams
from .sampling import sample_truncated_mvn
from .score import fit_score_complete
from .solver import SolverOpts

MASK64 = (1 << 64) - 1
SETTING1_METHODS = ("comp", "fince", "fiscore")
GGM_METHODS = ("fince", "fiscore")
TRACKED = ("sigma12", "lambda12")


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def replication_seed(seed, rep):
    """``seed XOR splitmix64(rep)``."""
    return (int(seed) ^ splitmix64(int(rep))) & MASK64


def _streams(seed, k):
    return np.random.SeedSequence(seed).spawn(k)


# -- configurations -----------------------------------------------------------
@dataclass
class Setting1Config:
    """Two-dimensional truncated normal with one coordinate subject to missingness.

    ``tracked`` selects the scalar summarized by bias, MSE and coverage:
    ``"sigma12"`` is the off-diagonal of ``Sigma = Lambda^-1`` (interval by the
    delta method), ``"lambda12"`` the off-diagonal precision entry.
    """

    n: int = 500
    mechanism: str = "mar"
    m: int = 100
    replications: int = 100
    methods: tuple = SETTING1_METHODS
    seed: int = 0
    level: float = 0.95
    tracked: str = "sigma12"
    kind: str = "nce"
    sigma: tuple = ((2.0, 1.3), (1.3, 2.0))
    opts: SolverOpts = field(default_factory=SolverOpts)

    def __post_init__(self):
        self.methods = tuple(self.methods)
        for name in ("n", "m", "replications"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.mechanism not in ("mar", "mnar"):
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if not set(self.methods) <= set(SETTING1_METHODS) or not self.methods:
            raise ValueError(f"methods must be a nonempty subset of {SETTING1_METHODS}")
        if self.tracked not in TRACKED:
            raise ValueError(f"tracked must be one of {TRACKED}")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        S = np.asarray(self.sigma, dtype=float)
        if S.shape != (2, 2) or not np.allclose(S, S.T) or np.linalg.eigvalsh(S).min() <= 0:
            raise ValueError("sigma must be a symmetric positive definite 2x2 matrix")

    @property
    def precision(self):
        return np.linalg.inv(np.asarray(self.sigma, dtype=float))

    def mechanism_object(self):
        if self.mechanism == "mar":
            return LogisticMAR(target=1, drivers=(0,), offset=0.9, scale=0.3)
        return LogisticMNAR(target=1, offset=0.9, scale=0.2)


@dataclass
class GGMConfig:
    """Truncated GGM on ``d`` nodes: 3-cliques on the first nine nodes."""

    d: int = 10
    n: int = 1000
    m: int = 100
    replications: int = 30
    methods: tuple = GGM_METHODS
    seed: int = 0
    level: float = 0.95
    diag: float = 1.0
    offdiag: float = 0.5
    cliques: tuple = ((0, 1, 2), (3, 4, 5), (6, 7, 8))
    targets: tuple = (2, 5, 8)
    base: float = 3.0
    missing: bool = True
    proposal_sd: float = float(np.sqrt(2.0))
    opts: SolverOpts = field(default_factory=SolverOpts)

    def __post_init__(self):
        self.methods = tuple(self.methods)
        for name in ("d", "n", "m", "replications"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not set(self.methods) <= set(GGM_METHODS) or not self.methods:
            raise ValueError(f"methods must be a nonempty subset of {GGM_METHODS}")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        if np.linalg.eigvalsh(self.precision).min() <= 0:
            raise ValueError("configured precision matrix is not positive definite")

    @property
    def precision(self):
        P = self.diag * np.eye(self.d)
        for clique in self.cliques:
            for i in clique:
                for j in clique:
                    if i != j:
                        P[i, j] = self.offdiag
        return P


# -- helpers -------------------------------------------------------------------
def complete_case_init(model, X_complete):
    """Start value: nonneg score matching on the complete records, else the identity."""
    fallback = model.theta_from_precision(np.eye(model.dim))
    if X_complete.shape[0] > model.param_dim:
        try:
            return fit_score_complete(X_complete, model, "nonneg", init=fallback,
                                      covariance=False).params
        except (FIMissingError, np.linalg.LinAlgError):
            pass
    return fallback


def covariance_entry(model, theta, cov, i, j):
    """``(Lambda^-1)_ij`` and its delta-method standard error."""
    S = np.linalg.inv(model.precision(theta))
    grad = np.empty(model.param_dim)
    for k, (a, b) in enumerate(zip(model.rows, model.cols)):
        E = np.zeros_like(S)
        E[a, b] = E[b, a] = 1.0
        grad[k] = -(S @ E @ S)[i, j]
    se = float(np.sqrt(max(grad @ cov @ grad, 0.0))) if cov is not None else float("nan")
    return float(S[i, j]), se


def _tracked_values(model, report):
    sl = report.theta_slice
    cov = None if report.covariance is None else report.covariance[sl, sl]
    theta = report.theta
    k = model.pair_index(0, 1)
    lam_se = float(np.sqrt(cov[k, k])) if cov is not None else float("nan")
    sig, sig_se = covariance_entry(model, theta, cov, 0, 1)
    return {"lambda12": float(theta[k]), "lambda12_se": lam_se,
            "sigma12": sig, "sigma12_se": sig_se}


def _method_record(fit, model):
    try:
        report = fit()
    except FIMissingError as exc:
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
    if report.covariance is None:
        return {"ok": False, "error": report.extras.get("covariance_error", "no covariance")}
    rec = {"ok": True, "iterations": int(report.iterations),
           "residual": float(report.residual)}
    rec.update(_tracked_values(model, report))
    return rec


# -- setting 1 -------------------------------------------------------------------
def setting1_replication(config, rep):
    """One replication of the two-dimensional study; returns a plain dict."""
    seed = replication_seed(config.seed, rep)
    s_data, s_mask, s_comp, s_noise, s_fince, s_fiscore = _streams(seed, 6)
    model = TruncatedGGM(2)
    with threadpool_limits(limits=1):
        X = sample_truncated_mvn(config.precision, config.n, s_data)
        ds = apply_missingness(X, config.mechanism_object(), s_mask)
        Xc = ds.complete_rows()
        theta0 = complete_case_init(model, Xc)
        record = {"setting": "setting1", "rep": int(rep), "seed": seed, "n": config.n,
                  "mechanism": config.mechanism, "missing_rate": ds.missing_rate,
                  "methods": {}}
        propensity = LogisticPropensity(target=1) if config.mechanism == "mnar" else None
        for method in config.methods:
            if method == "comp":
                def fit():
                    noise = NoiseSample.draw(moment_matched(Xc), Xc.shape[0], s_comp)
                    return fit_nce_complete(Xc, noise, config.kind, model,
                                            ExtendedParams(theta0), config.opts)
            elif method == "fince":
                def fit():
                    noise = NoiseSample.draw(moment_matched(ds.values), config.n, s_noise)
                    return fince_fit(ds, noise, moment_matched(ds.values), config.kind, model,
                                     config.m, ExtendedParams(theta0), config.opts, s_fince,
                                     mnar=propensity)
            else:
                def fit():
                    return fiscore_fit(ds, moment_matched(ds.values), model, "nonneg",
                                       config.m, theta0, config.opts, s_fiscore,
                                       mnar=propensity)
            record["methods"][method] = _method_record(fit, model)
    return record


def _truth_setting1(config, tracked):
    if tracked == "sigma12":
        return float(np.asarray(config.sigma)[0, 1])
    return float(config.precision[0, 1])


# -- GGM study ---------------------------------------------------------------------
def ggm_replication(config, rep):
    seed = replication_seed(config.seed, rep)
    s_data, s_mask, s_noise, s_fince, s_fiscore = _streams(seed, 5)
    model = TruncatedGGM(config.d, admissibility="copositive")
    truth_edges = model.edges(model.theta_from_precision(config.precision))
    n_absent = config.d * (config.d - 1) // 2 - len(truth_edges)
    with threadpool_limits(limits=1):
        X = sample_truncated_mvn(config.precision, config.n, s_data)
        if config.missing:
            ds = apply_missingness(X, GGMRandomLogistic(config.targets, config.base), s_mask)
        else:
            ds = IncompleteDataset.from_complete(X)
        theta0 = complete_case_init(model, ds.complete_rows())
        proposal = truncnorm_product(np.zeros(config.d), config.proposal_sd)
        record = {"setting": "ggm", "rep": int(rep), "seed": seed, "n": config.n,
                  "complete_fraction": ds.complete_fraction, "n_true": len(truth_edges),
                  "n_absent": n_absent, "methods": {}}
        for method in config.methods:
            try:
                if method == "fince":
                    noise = NoiseSample.draw(
                        exponential_product(np.nanmean(ds.values, axis=0)), config.n, s_noise)
                    report = fince_fit(ds, noise, proposal, "nce", model, config.m,
                                       ExtendedParams(theta0), config.opts, s_fince)
                else:
                    report = fiscore_fit(ds, proposal, model, "nonneg", config.m, theta0,
                                         config.opts, s_fiscore)
                edges = select_graph(report, model, config.level)
            except FIMissingError as exc:
                record["methods"][method] = {"ok": False,
                                             "error": f"{type(exc).__name__}: {exc}"}
                continue
            record["methods"][method] = {
                "ok": True, "edges": sorted([list(e) for e in edges]),
                "fp": len(edges - truth_edges) / n_absent,
                "fn": len(truth_edges - edges) / len(truth_edges),
                "iterations": int(report.iterations)}
    return record


# -- running -------------------------------------------------------------------------
def _run(fn, config, workers):
    reps = range(config.replications)
    if workers <= 1:
        return [fn(config, r) for r in reps]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, [config] * config.replications, reps))


def run_setting1(config, workers=1):
    """Run the study; returns ``(MetricsTable, per-replication records)``."""
    records = _run(setting1_replication, config, workers)
    return summarize(records, config=config), records


def run_ggm(config, workers=1):
    records = _run(ggm_replication, config, workers)
    return summarize(records, config=config), records


# -- summaries -------------------------------------------------------------------------
@dataclass
class MetricRow:
    setting: str
    n: int
    method: str
    metric: str
    value: float
    mc_se: float
    n_reps: int
    n_failures: int


class MetricsTable:
    COLUMNS = ("setting", "n", "method", "metric", "value", "mc_se", "n_reps", "n_failures")

    def __init__(self, rows, meta=None):
        self.rows = list(rows)
        self.meta = dict(meta or {})

    def get(self, method, metric):
        for row in self.rows:
            if row.method == method and row.metric == metric:
                return row
        raise KeyError((method, metric))

    def value(self, method, metric):
        return self.get(method, metric).value

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.COLUMNS)
        for r in self.rows:
            writer.writerow([r.setting, r.n, r.method, r.metric, f"{r.value:.10g}",
                             f"{r.mc_se:.10g}", r.n_reps, r.n_failures])
        return buf.getvalue()

    def to_json(self):
        return json.dumps({"config": self.meta, "rows": [asdict(r) for r in self.rows]},
                          indent=2, sort_keys=True)

    def format_table(self):
        """Fixed-width layout: one line per metric, one column per method."""
        methods = list(dict.fromkeys(r.method for r in self.rows))
        metrics = list(dict.fromkeys(r.metric for r in self.rows))
        lines = [f"{'n':>6} {'metric':<18}" + "".join(f"{m:>16}" for m in methods)]
        for n in sorted({r.n for r in self.rows}):
            for metric in metrics:
                cells = []
                for m in methods:
                    match = [r for r in self.rows if r.n == n and r.method == m
                             and r.metric == metric]
                    cells.append(f"{match[0].value:>9.4f}({match[0].mc_se:.3f})"
                                 if match else " " * 16)
                if any(c.strip() for c in cells):
                    lines.append(f"{n:>6} {metric:<18}" + "".join(f"{c:>16}" for c in cells))
        return "\n".join(lines)


def bootstrap_median_se(values, n_boot=1000, seed=0, stat=np.median):
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, values.size, size=(n_boot, values.size))
    return float(np.std(stat(values[idx], axis=1), ddof=1))


def binomial_se(p, count):
    return float(np.sqrt(p * (1.0 - p) / count)) if count > 0 else 0.0


def _config_meta(config):
    if config is None:
        return {}
    meta = asdict(config)
    meta["opts"] = asdict(config.opts)
    return meta


def summarize(per_rep_records, config=None, tracked=None, level=None):
    """Aggregate per-replication records into a :class:`MetricsTable`.

    Setting 1 reports ``bias`` (absolute value of the median error),
    ``mse`` (median squared error), ``median_abs_error`` and ``coverage``;
    the GGM study reports ``fp``, ``fn`` and the complete-data fraction.
    Medians carry bootstrap standard errors (1000 resamples), proportions
    binomial ones.
    """
    records = list(per_rep_records)
    if not records:
        raise EmptyInput("no replications to summarize")
    setting = records[0]["setting"]
    if setting == "setting1":
        return _summarize_setting1(records, config, tracked, level)
    return _summarize_ggm(records, config)


def _summarize_setting1(records, config, tracked, level):
    tracked = tracked or (config.tracked if config is not None else "sigma12")
    level = level or (config.level if config is not None else 0.95)
    if config is not None:
        truth = _truth_setting1(config, tracked)
    else:
        truth = 1.3 if tracked == "sigma12" else float(np.linalg.inv([[2, 1.3], [1.3, 2]])[0, 1])
    z = normal_quantile(0.5 * (1.0 + level))
    n = records[0]["n"]
    rows = []
    methods = list(dict.fromkeys(m for r in records for m in r["methods"]))
    boot_seed = 0 if config is None else int(config.seed) & 0xFFFFFFFF
    for method in methods:
        ok = [r["methods"][method] for r in records
              if method in r["methods"] and r["methods"][method]["ok"]]
        fails = sum(1 for r in records if method in r["methods"]
                    and not r["methods"][method]["ok"])
        if not ok:
            continue
        est = np.array([o[tracked] for o in ok])
        se = np.array([o[f"{tracked}_se"] for o in ok])
        err = est - truth
        covered = np.abs(err) <= z * se
        R = len(ok)
        rows += [
            MetricRow("setting1", n, method, "bias", float(abs(np.median(err))),
                      bootstrap_median_se(err, seed=boot_seed), R, fails),
            MetricRow("setting1", n, method, "mse", float(np.median(err ** 2)),
                      bootstrap_median_se(err ** 2, seed=boot_seed), R, fails),
            MetricRow("setting1", n, method, "median_abs_error", float(np.median(np.abs(err))),
                      bootstrap_median_se(np.abs(err), seed=boot_seed), R, fails),
        ]
        p = float(covered.mean())
        rows.append(MetricRow("setting1", n, method, "coverage", p, binomial_se(p, R),
                              R, fails))
    rate = np.array([r["missing_rate"] for r in records])
    rows.append(MetricRow("setting1", n, "data", "missing_rate", float(rate.mean()),
                          float(rate.std(ddof=1) / np.sqrt(rate.size)) if rate.size > 1 else 0.0,
                          len(records), 0))
    meta = _config_meta(config)
    meta["tracked"] = tracked
    return MetricsTable(rows, meta)


def _summarize_ggm(records, config):
    n = records[0]["n"]
    rows = []
    methods = list(dict.fromkeys(m for r in records for m in r["methods"]))
    for method in methods:
        ok = [r["methods"][method] for r in records if r["methods"].get(method, {}).get("ok")]
        fails = sum(1 for r in records if method in r["methods"]
                    and not r["methods"][method]["ok"])
        if not ok:
            continue
        R = len(ok)
        for metric, count in (("fp", records[0]["n_absent"]), ("fn", records[0]["n_true"])):
            p = float(np.mean([o[metric] for o in ok]))
            rows.append(MetricRow("ggm", n, method, metric, p, binomial_se(p, R * count),
                                  R, fails))
    frac = np.array([r["complete_fraction"] for r in records])
    rows.append(MetricRow("ggm", n, "data", "complete_fraction", float(frac.mean()),
                          float(frac.std(ddof=1) / np.sqrt(frac.size)) if frac.size > 1 else 0.0,
                          len(records), 0))
    return MetricsTable(rows, _config_meta(config))


def edge_sets_json(records):
    """Per-replication adjacency lists ``{rep: {method: {node: [neighbours]}}}``."""
    out = {}
    for r in records:
        per = {}
        for method, rec in r["methods"].items():
            if not rec.get("ok"):
                per[method] = None
                continue
            adj = {}
            for i, j in rec["edges"]:
                adj.setdefault(str(i), []).append(j)
                adj.setdefault(str(j), []).append(i)
            per[method] = {k: sorted(v) for k, v in sorted(adj.items(), key=lambda kv: int(kv[0]))}
        out[str(r["rep"])] = per
    return json.dumps(out, indent=2, sort_keys=True)
