"""Command-line front end.

Configuration is a flat text file of ``key=value`` lines (``#`` starts a
comment) plus ``--set key=value`` overrides; explicit flags win over both.
Exit status is 0 on success, 2 for configuration errors and 3 for runtime
failures.
"""
import argparse
import csv
import json
import math
import os
import sys
import warnings

import numpy as np

from . import __version__
from . import distributions as dist
from . import experiments as ex
from . import hermite
from . import limit_processes as lp
from . import lrd_gauss
from .bk_vervaat import Model, r_star, vervaat, vervaat_error
from .errors import ConfigError, EmptyInterval, InvalidSpec, LRDError
from .seq_processes import SampleBatch, d_norm, process_field

__all__ = ["main", "RunConfig", "parse_config_text", "format_number", "write_csv"]

DEFAULTS = {
    "tau": "1",
    "D": "0.4",
    "L": "const:1",
    "family": "pure-power",
    "G": "quantile-compose:normal(0,1)",
    "F": "",
    "n": "1024",
    "grid": "",
    "n_grid": "256,1024,4096,16384",
    "replications": "100",
    "seed": "20240601",
    "metrics": "cor21,prop22,thm22,prop42,gc_rate",
    "trimming": "true",
    "p_override": "",
    "limit_m": "16384",
    "limit_mt": "256",
    "limit_replications": "",
    "probe": "0.8,1",
    "ks_threshold": "0.15",
    "ks_threshold_q": "0.2",
    "q_convention": "stated",
    "precision": "12",
    "workers": "1",
    "out": "out",
}


def parse_config_text(text):
    """``key=value`` lines into a dict; blank lines and ``#`` comments skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key=value, got {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _int(raw, key, lo=None):
    try:
        v = int(raw)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {raw!r}") from None
    if lo is not None and v < lo:
        raise ConfigError(key, f"must be >= {lo}, got {v}")
    return v


def _float(raw, key):
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {raw!r}") from None


def _bool(raw, key):
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"expected true/false, got {raw!r}")


def _L(raw):
    try:
        if raw.startswith("log:"):
            return lrd_gauss.LogL(float(raw[4:]))
        return lrd_gauss.ConstantL(float(raw[6:] if raw.startswith("const:") else raw))
    except (ValueError, LRDError) as exc:
        raise ConfigError("L", f"expected const:<c> or log:<a>, got {raw!r} ({exc})") from None


def _G(raw):
    name, _, arg = raw.partition(":")
    try:
        if name == "quantile-compose":
            return hermite.SubordinationSpec(name, target=dist.from_name(arg or "normal(0,1)"))
        if arg:
            raise ConfigError("G", f"{name} takes no argument")
        return hermite.SubordinationSpec(name)
    except LRDError as exc:
        raise ConfigError("G", str(exc)) from None


class RunConfig:
    """Validated configuration; construction fails before any computation."""

    def __init__(self, values):
        unknown = sorted(set(values) - set(DEFAULTS))
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration key")
        v = dict(DEFAULTS)
        v.update(values)
        self.raw = v
        self.tau = _int(v["tau"], "tau", 1)
        self.D = _float(v["D"], "D")
        if not (0 < self.D < 1.0 / self.tau):
            raise ConfigError("D", f"need 0 < D < 1/tau, got tau={self.tau}, D={self.D}")
        self.L = _L(v["L"])
        if v["family"] not in ("pure-power", "fgn-matched"):
            raise ConfigError("family", f"unknown family {v['family']!r}")
        self.family = v["family"]
        self.G = _G(v["G"])
        try:
            self.F = dist.from_name(v["F"]) if v["F"] else None
        except LRDError as exc:
            raise ConfigError("F", str(exc)) from None
        if self.F is None:
            try:
                self.F = self.G.marginal()
            except LRDError as exc:
                raise ConfigError("G", str(exc)) from None
        self.n = _int(v["n"], "n", 1)
        self.grid = _int(v["grid"], "grid", 2) if v["grid"] else min(33, self.n + 1)
        try:
            self.n_grid = tuple(int(x) for x in v["n_grid"].split(","))
        except ValueError:
            raise ConfigError("n_grid", f"expected comma-separated integers, got {v['n_grid']!r}") from None
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])) or min(self.n_grid) < 1:
            raise ConfigError("n_grid", "must be strictly increasing positive integers")
        self.replications = _int(v["replications"], "replications", 1)
        self.seed = _int(v["seed"], "seed", 0)
        if self.seed >= 2 ** 64:
            raise ConfigError("seed", "must fit in 64 bits")
        self.metrics = tuple(m.strip() for m in v["metrics"].split(",") if m.strip())
        bad = [m for m in self.metrics if m not in ex.ALL_METRICS]
        if bad:
            raise ConfigError("metrics", f"unknown metric {bad[0]!r}")
        self.trimming = _bool(v["trimming"], "trimming")
        self.p_override = _int(v["p_override"], "p_override", 1) if v["p_override"] else None
        self.limit_m = _int(v["limit_m"], "limit_m", 2 ** 12)
        self.limit_mt = _int(v["limit_mt"], "limit_mt", 1)
        self.limit_replications = (_int(v["limit_replications"], "limit_replications", 1)
                                   if v["limit_replications"] else None)
        try:
            y0, t0 = (float(x) for x in v["probe"].split(","))
        except ValueError:
            raise ConfigError("probe", f"expected y,t, got {v['probe']!r}") from None
        if not (0 <= y0 <= 1 and 0 < t0 <= 1):
            raise ConfigError("probe", "need y in [0,1] and t in (0,1]")
        self.probe = (y0, t0)
        self.ks_threshold = _float(v["ks_threshold"], "ks_threshold")
        self.ks_threshold_q = _float(v["ks_threshold_q"], "ks_threshold_q")
        if v["q_convention"] not in lp.Q_CONVENTIONS:
            raise ConfigError("q_convention", f"expected one of {lp.Q_CONVENTIONS}")
        self.q_convention = v["q_convention"]
        self.precision = _int(v["precision"], "precision", 1)
        self.workers = _int(v["workers"], "workers", 1)
        self.out = v["out"]

    @property
    def cov(self):
        return lrd_gauss.CovarianceSpec(self.D, self.L, self.family)

    def plan(self, metrics=None):
        try:
            return ex.ExperimentPlan(
                tau=self.tau, D=self.D, L=self.L, family=self.family, G=self.G, F=self.F,
                n_grid=self.n_grid, replications=self.replications, master_seed=self.seed,
                metrics=metrics if metrics is not None else self.metrics,
                trimming=self.trimming, p_override=self.p_override, limit_m=self.limit_m,
                limit_mt=self.limit_mt, limit_replications=self.limit_replications,
                probe=self.probe, ks_threshold=self.ks_threshold,
                ks_threshold_q=self.ks_threshold_q, workers=self.workers)
        except LRDError as exc:
            raise ConfigError("metrics" if "replications" in str(exc) else "plan", str(exc)) from None

    def as_dict(self):
        return {k: self.raw[k] for k in sorted(self.raw)}


# ----------------------------------------------------------------- output


def format_number(x, precision=12):
    """Locale-independent rendering with ``precision`` significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, str):
        return x
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == 0:
        return "0"
    return format(x, f".{precision}g")


def write_csv(path, header, rows, precision=12):
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_number(v, precision) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(float(obj)) else float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_manifest(path, manifest):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")


# --------------------------------------------------------------- commands


def reporting_grid(n, size):
    """y and t axes: ``size`` uniform points, plus every k/n on t when n <= 64."""
    y = np.linspace(0.0, 1.0, size)
    t = np.linspace(0.0, 1.0, size)
    if n <= 64:
        t = np.union1d(t, np.arange(n + 1) / n)
        t = t[np.concatenate([[True], np.diff(t) > 1e-12])]
    return y, t


def cmd_simulate(cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        path = lrd_gauss.generate_path(cfg.cov, cfg.n,
                                       ex.replication_seed(cfg.seed, ex.STREAM_DRIVER, 0))
    batch = SampleBatch.from_path(path.values, cfg.G)
    model = Model(cfg.n, cfg.tau, cfg.D, cfg.cov.slowly_varying)
    fields = [process_field(batch, "alpha", model), process_field(batch, "u", model),
              r_star(batch, model), vervaat(batch, model), vervaat_error(batch, model)]
    y, t = reporting_grid(cfg.n, cfg.grid)
    rows = []
    for tv in t:
        vals = [np.asarray([f(yv, tv) for yv in y], dtype=float) for f in fields]
        for i, yv in enumerate(y):
            rows.append([yv, tv] + [v[i] for v in vals])
    os.makedirs(cfg.out, exist_ok=True)
    write_csv(os.path.join(cfg.out, "simulate.csv"),
              ["y", "t", "alpha", "u", "rstar", "vervaat", "qerr"], rows, cfg.precision)
    write_manifest(os.path.join(cfg.out, "manifest.json"), {
        "command": "simulate", "version": __version__, "config": cfg.as_dict(),
        "path_seed": ex.replication_seed(cfg.seed, ex.STREAM_DRIVER, 0),
        "driver_method": path.method, "d_n": model.d,
    })
    return os.path.join(cfg.out, "simulate.csv")


def _write_report(cfg, report, command):
    os.makedirs(cfg.out, exist_ok=True)
    p = cfg.precision
    write_csv(os.path.join(cfg.out, "rates.csv"), ["metric", "n", "median", "q1", "q3"],
              report.rates, p)
    write_csv(os.path.join(cfg.out, "slopes.csv"),
              ["metric", "slope", "stderr", "expected", "pass"], report.slopes, p)
    write_csv(os.path.join(cfg.out, "dist.csv"), ["metric", "ks", "threshold", "pass"],
              report.dist, p)
    man = dict(report.manifest)
    man.update({"command": command, "config": cfg.as_dict()})
    man.pop("python", None)
    write_manifest(os.path.join(cfg.out, "manifest.json"), man)


def cmd_experiment(cfg):
    plan = cfg.plan()
    analysis = hermite.analyze(plan.G, plan.F)
    report = ex.ExperimentReport()
    if any(m in ex.COUPLING_METRICS for m in plan.metrics):
        report.merge(ex.run_coupling(plan, analysis))
    if any(m in ex.DIST_METRICS for m in plan.metrics):
        report.merge(ex.run_distribution(plan, analysis, q_convention=cfg.q_convention))
    if "iid_baseline" in plan.metrics:
        report.merge(ex.iid_baseline(plan))
    _write_report(cfg, report, "experiment")
    return report


def cmd_baseline(cfg):
    report = ex.iid_baseline(cfg.plan(metrics=("iid_baseline",)))
    _write_report(cfg, report, "baseline")
    return report


def constants_table(cfg):
    """(name, value) pairs: d_n on a few n, kappas, limit constants, p and nu."""
    rows = []
    L = cfg.cov.slowly_varying
    for n in (2 ** 8, 2 ** 10, 2 ** 12, 2 ** 14):
        rows.append((f"d_n[{n}]", d_norm(n, cfg.tau, cfg.D, L)))
    an = hermite.analyze(cfg.G, cfg.F)
    if an.tau != cfg.tau:
        raise ConfigError("tau", f"G has Hermite rank {an.tau}")
    kappas = an.kappas
    rows += [("kappa1", kappas[0]), ("kappa2", kappas[1]), ("kappa3", kappas[2])]
    c = lp.limit_constants(cfg.tau, cfg.D, kappas)
    for name in ("c_weak", "c_Q", "lil_partial", "lil_bk", "lil_Q"):
        rows.append((name, getattr(c, name)))
    for which in ("prop21", "prop22"):
        try:
            rows.append((f"p_{which}", ex.choose_p(cfg.tau, cfg.D, which)))
        except EmptyInterval:
            rows.append((f"p_{which}", "empty"))
    rows.append(("nu", min(cfg.D, 1 - cfg.tau * cfg.D) / 2))
    return rows


def cmd_constants(cfg, stream=None):
    stream = stream or sys.stdout
    for name, val in constants_table(cfg):
        stream.write(f"{name},{format_number(val, cfg.precision)}\n")


COMMANDS = {"simulate": cmd_simulate, "experiment": cmd_experiment,
            "constants": cmd_constants, "baseline": cmd_baseline}


def build_parser():
    p = argparse.ArgumentParser(prog="lrdvervaat",
                                description="Sequential empirical, Bahadur-Kiefer and "
                                            "Vervaat processes of LRD subordinated data.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", metavar="PATH")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--seed", metavar="U64")
    p.add_argument("--workers", metavar="N")
    p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], dest="overrides")
    return p


def load_config(args):
    values = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                values.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError("--config", str(exc)) from None
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError("--set", f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    for key in ("out", "seed", "workers"):
        if getattr(args, key) is not None:
            values[key] = getattr(args, key)
    return RunConfig(values)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        COMMANDS[args.command](cfg)
    except (ConfigError, InvalidSpec) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to exit 3
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
