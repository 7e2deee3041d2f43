"""Command-line front end.

    fimissing fit --config run.ini --out results/
    fimissing simulate-setting1 --n 1000 --replications 200 --threads 4
    fimissing simulate-ggm --seed 7
    fimissing check-invariants

Configuration files are INI with one section per subcommand. Command-line
options override file values. Exit codes: 0 success, 1 I/O error,
2 non-convergence, 3 invariant failure, 4 configuration error.
"""
import argparse
import configparser
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field

from threadpoolctl import threadpool_limits

from .diagnostics import ESTIMATORS, run_invariant_suite
from .exceptions import (ConfigError, EmptyInput, FIMissingError, NonConvergence, ParseError,
                         ValidationError)
from .inference import confidence_intervals
from .missing import read_csv
from .simulation import (GGM_METHODS, SETTING1_METHODS, GGMConfig, Setting1Config,
                         edge_sets_json, run_ggm, run_setting1)
from .solver import SolverOpts

EXIT_OK, EXIT_IO, EXIT_NONCONV, EXIT_INVARIANT, EXIT_CONFIG = 0, 1, 2, 3, 4
SUBCOMMANDS = ("fit", "simulate-setting1", "simulate-ggm", "check-invariants")


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _methods(text):
    return tuple(t.strip() for t in str(text).split(",") if t.strip())


def _opt_int(text):
    return None if str(text).strip().lower() in ("", "none") else int(text)


# key -> (parser, default)
_COMMON = {"seed": (int, 0), "level": (float, 0.95), "out": (str, "."), "threads": (int, 1),
           "em_tol": (float, 1e-6), "max_em_iter": (int, 500)}
SCHEMA = {
    "fit": {**_COMMON, "data": (str, ""), "model": (str, "ggm"), "method": (str, "fince"),
            "divergence": (str, "nce"), "variant": (str, ""), "m": (int, 100),
            "n_noise": (_opt_int, None), "mnar_target": (_opt_int, None)},
    "simulate-setting1": {**_COMMON, "n": (int, 500), "mechanism": (str, "mar"),
                          "m": (int, 100), "replications": (int, 100),
                          "methods": (_methods, SETTING1_METHODS),
                          "tracked": (str, "sigma12"), "kind": (str, "nce")},
    "simulate-ggm": {**_COMMON, "d": (int, 10), "n": (int, 1000), "m": (int, 100),
                     "replications": (int, 30), "methods": (_methods, GGM_METHODS),
                     "missing": (_bool, True)},
    "check-invariants": {**_COMMON, "n_mc": (int, 4000), "estimators": (_methods, ESTIMATORS),
                         "inject_fault": (_bool, False)},
}
POSITIVE = ("n", "m", "replications", "threads", "d", "n_mc", "max_em_iter", "n_noise")


@dataclass
class RunConfig:
    subcommand: str
    values: dict
    path: str = None
    sources: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def to_ini(self):
        cp = configparser.ConfigParser()
        cp[self.subcommand] = {k: _render(v) for k, v in self.values.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _render(v):
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    return "none" if v is None else str(v)


def _convert(section, key, raw):
    parse, _ = SCHEMA[section][key]
    try:
        return parse(raw)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"[{section}] {key}: cannot parse {raw!r} ({exc})") from None


def _validate(section, values):
    for key in POSITIVE:
        if key in values and values[key] is not None and values[key] < 1:
            raise ValidationError(f"[{section}] {key} must be positive, got {values[key]}")
    if not 0 < values["level"] < 1:
        raise ValidationError(f"[{section}] level must lie in (0, 1), got {values['level']}")
    if not 0 <= values["seed"] < 2 ** 64:
        raise ValidationError(f"[{section}] seed must be an unsigned 64-bit integer")
    if not values["em_tol"] > 0:
        raise ValidationError(f"[{section}] em_tol must be positive")
    allowed = {"simulate-setting1": SETTING1_METHODS, "simulate-ggm": GGM_METHODS,
               "check-invariants": ESTIMATORS}
    if section == "fit":
        if values["method"] not in ("fince", "fiscore"):
            raise ValidationError(f"[fit] method must be fince or fiscore, "
                                  f"got {values['method']!r}")
        if not values["data"]:
            raise ValidationError("[fit] data: no input CSV given")
    else:
        key = "estimators" if section == "check-invariants" else "methods"
        bad = [v for v in values[key] if v not in allowed[section]]
        if bad or not values[key]:
            raise ValidationError(f"[{section}] {key}: {bad or 'empty'} not in {allowed[section]}")


def parse_config(path, overrides=None, subcommand="simulate-setting1"):
    """Read ``path`` (may be None), apply ``overrides`` and validate.

    Raises
    ------
    ParseError
        Malformed file, with line context.
    ValidationError
        Unknown section or key (named in the message), or a bad value.
    """
    if subcommand not in SCHEMA:
        raise ValidationError(f"unknown subcommand {subcommand!r}")
    schema = SCHEMA[subcommand]
    values = {k: d for k, (_, d) in schema.items()}
    sources = {k: "default" for k in values}
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
        try:
            with open(path) as fh:
                cp.read_file(fh, source=str(path))
        except configparser.Error as exc:
            raise ParseError(f"{path}: {exc}") from None
        for section in cp.sections():
            if section not in SCHEMA:
                raise ValidationError(f"{path}: unknown section [{section}]")
            for key in cp[section]:
                if key not in SCHEMA[section]:
                    raise ValidationError(f"{path}: unknown key {key!r} in [{section}]")
        if cp.has_section(subcommand):
            for key, raw in cp[subcommand].items():
                values[key] = _convert(subcommand, key, raw)
                sources[key] = "file"
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        if key == "method" and "methods" in schema:
            key, raw = "methods", (raw,)
        if key not in schema:
            raise ValidationError(f"option --{key} does not apply to {subcommand}")
        values[key] = raw if not isinstance(raw, str) else _convert(subcommand, key, raw)
        sources[key] = "command line"
    _validate(subcommand, values)
    return RunConfig(subcommand, values, None if path is None else str(path), sources)


class InputError(Exception):
    """Unreadable or malformed input data (exit code 1)."""


# -- output -------------------------------------------------------------------------
def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _out(config, name):
    return os.path.join(config["out"], name)


def _echo(config):
    text = config.to_ini()
    atomic_write(_out(config, "config.ini"), text)
    print(text.rstrip())


def _solver_opts(config):
    return SolverOpts(em_tol=config["em_tol"], max_em_iter=config["max_em_iter"])


# -- subcommands ------------------------------------------------------------------------
def cmd_fit(config):
    from .estimators import FINCE, FISCORE
    v = config.values
    try:
        dataset = read_csv(v["data"])
    except (EmptyInput, ValueError) as exc:
        raise InputError(str(exc)) from None
    if v["method"] == "fince":
        est = FINCE(model=v["model"], divergence=v["divergence"], m=v["m"],
                    n_noise=v["n_noise"], mnar_target=v["mnar_target"], level=v["level"],
                    em_tol=v["em_tol"], max_em_iter=v["max_em_iter"], random_state=v["seed"])
    else:
        est = FISCORE(model=v["model"], variant=v["variant"] or None, m=v["m"],
                      mnar_target=v["mnar_target"], level=v["level"], em_tol=v["em_tol"],
                      max_em_iter=v["max_em_iter"], random_state=v["seed"])
    code = EXIT_OK
    with threadpool_limits(limits=v["threads"]):
        try:
            est.fit(dataset.values)
            report, model = est.report_, est.model_
        except NonConvergence as exc:
            if exc.report is None:
                raise
            print(f"warning: {exc}", file=sys.stderr)
            from .estimators import build_model
            report, model = exc.report, build_model(v["model"], dataset.d)
            code = EXIT_NONCONV
    payload = report.to_dict()
    payload["config"] = {k: _render(x) for k, x in v.items()}
    if report.covariance is None:
        payload["covariance_error"] = report.extras.get("covariance_error")
    atomic_write(_out(config, "report.json"), json.dumps(payload, indent=2, sort_keys=True))
    if report.covariance is not None:
        ci = confidence_intervals(report, v["level"])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["param", "estimate", "se", "lower", "upper"])
        for name, p, se, lo, up in zip(ci.names, ci.point, ci.se, ci.lower, ci.upper):
            w.writerow([name, f"{p:.10g}", f"{se:.10g}", f"{lo:.10g}", f"{up:.10g}"])
        atomic_write(_out(config, "ci.csv"), buf.getvalue())
        if v["model"] == "ggm":
            from .inference import select_graph
            edges = sorted(select_graph(report, model, v["level"]))
            atomic_write(_out(config, "edges.json"),
                         json.dumps({"level": v["level"], "edges": [list(e) for e in edges]},
                                    indent=2))
    else:
        print(f"warning: no covariance ({payload['covariance_error']})", file=sys.stderr)
    for name, p in zip(report.param_names, report.params):
        print(f"{name:<12} {p: .6f}")
    return code


def cmd_simulate(config):
    v = config.values
    opts = _solver_opts(config)
    if config.subcommand == "simulate-setting1":
        sim = Setting1Config(n=v["n"], mechanism=v["mechanism"], m=v["m"],
                             replications=v["replications"], methods=v["methods"],
                             seed=v["seed"], level=v["level"], tracked=v["tracked"],
                             kind=v["kind"], opts=opts)
        table, records = run_setting1(sim, workers=v["threads"])
    else:
        sim = GGMConfig(d=v["d"], n=v["n"], m=v["m"], replications=v["replications"],
                        methods=v["methods"], seed=v["seed"], level=v["level"],
                        missing=v["missing"], opts=opts)
        table, records = run_ggm(sim, workers=v["threads"])
        atomic_write(_out(config, "edges.json"), edge_sets_json(records))
    for r in records:
        for method, rec in r["methods"].items():
            if not rec.get("ok"):
                print(f"replication {r['rep']} {method}: {rec['error']}", file=sys.stderr)
    atomic_write(_out(config, "metrics.csv"), table.to_csv())
    atomic_write(_out(config, "metrics.json"), table.to_json())
    text = table.format_table()
    atomic_write(_out(config, "table.txt"), text + "\n")
    print(text)
    return EXIT_OK


def cmd_check_invariants(config):
    v = config.values
    with threadpool_limits(limits=v["threads"]):
        results = run_invariant_suite(seed=v["seed"], n_mc=v["n_mc"],
                                      estimators=v["estimators"],
                                      inject_fault=v["inject_fault"])
    lines = []
    for r in results:
        lines.append(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<28} {r.value:.3e}"
                     f"  (tolerance {r.tolerance:.3e})")
    text = "\n".join(lines)
    print(text)
    atomic_write(_out(config, "invariants.txt"), text + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_INVARIANT


COMMANDS = {"fit": cmd_fit, "simulate-setting1": cmd_simulate, "simulate-ggm": cmd_simulate,
            "check-invariants": cmd_check_invariants}


def build_parser():
    parser = argparse.ArgumentParser(prog="fimissing", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file with a [%s] section" % name)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help="worker processes / BLAS threads")
        p.add_argument("--level", type=float)
        p.add_argument("--method")
        if name != "check-invariants":
            p.add_argument("--m", type=int)
        if name.startswith("simulate"):
            p.add_argument("--n", type=int)
            p.add_argument("--replications", type=int)
        if name == "fit":
            p.add_argument("--data", help="input CSV, empty cells or NA for missing")
            p.add_argument("--model")
        if name == "check-invariants":
            p.add_argument("--n-mc", dest="n_mc", type=int)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("subcommand", "config")}
    if args.subcommand == "check-invariants" and args.method is not None:
        overrides["estimators"] = (overrides.pop("method"),)
    try:
        if args.config is not None and not os.path.isfile(args.config):
            raise FileNotFoundError(f"config file not found: {args.config}")
        config = parse_config(args.config, overrides, args.subcommand)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        _echo(config)
        return COMMANDS[config.subcommand](config)
    except (OSError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FIMissingError, ValueError) as exc:
        # numerical failures of the fit share the non-convergence code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NONCONV

if __name__ == "__main__":
    sys.exit(main())
