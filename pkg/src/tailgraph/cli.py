"""Command-line interface: ``tailgraph <command> [options]``.

Commands: simulate, transform, select-graph, fit, density, check-rv, report.
JSON artifacts are pretty-printed with sorted keys and embed the run
configuration and library version.  CSV files always carry a header row.
All writes go through a temporary file and a rename.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from . import decay as dec
from . import fixtures, infer, models, rvcheck
from .censor import censor, transform_to_pareto
from .graph import FactorizedTailModel, factorized_censored_density

STOCHASTIC = {"simulate", "fit", "select-graph"}
COMMANDS = ("simulate", "transform", "select-graph", "fit", "density", "check-rv", "report")


@dataclass
class RunConfig:
    command: str
    input_path: str | None = None
    output_path: str | None = None
    tail_fraction: float = 0.05
    family: str = "hr"
    level: float = 0.05
    seed: int | None = None
    t_grid: list | None = None
    format: str = "json"
    extra: dict = field(default_factory=dict)

    def validate(self) -> list:
        """Every problem with the configuration, collected before any work is done."""
        errs = []
        if self.command not in COMMANDS:
            errs.append(f"unknown command {self.command!r}")
        if not 0 < self.tail_fraction <= 0.5:
            errs.append(f"tail_fraction must lie in (0, 0.5], got {self.tail_fraction}")
        if not 0 < self.level < 1:
            errs.append(f"level must lie in (0, 1), got {self.level}")
        if self.command in STOCHASTIC and self.seed is None:
            errs.append(f"{self.command} is stochastic and requires --seed")
        if self.format not in ("csv", "json"):
            errs.append(f"format must be csv or json, got {self.format!r}")
        if self.command in ("transform", "select-graph", "fit", "report") and not self.input_path:
            errs.append(f"{self.command} requires --input")
        if self.input_path and not os.path.isfile(self.input_path):
            errs.append(f"input file not found: {self.input_path}")
        ex = self.extra
        if self.command == "simulate":
            fam = ex.get("family_sim", self.family)
            if fam not in ("hr", "student", "bivariate-sum", "pareto"):
                errs.append(f"unknown simulation family {fam!r}")
            if fam == "hr" and not ex.get("gamma"):
                errs.append("simulate --family hr requires --gamma")
            if fam == "student" and (not ex.get("Q") or ex.get("nu") is None):
                errs.append("simulate --family student requires --Q and --nu")
            if (ex.get("n") or 0) <= 0:
                errs.append("simulate requires --n > 0")
            for key in ("gamma", "Q"):
                if ex.get(key) and not os.path.isfile(ex[key]):
                    errs.append(f"{key} file not found: {ex[key]}")
        if self.command == "fit" and self.family not in infer.FAMILIES:
            errs.append(f"unknown family {self.family!r}")
        if self.command == "density":
            for key in ("model", "points"):
                if not ex.get(key):
                    errs.append(f"density requires --{key}")
                elif not os.path.isfile(ex[key]):
                    errs.append(f"{key} file not found: {ex[key]}")
        if self.command == "check-rv":
            if ex.get("fixture") not in fixtures.FIXTURES:
                errs.append(f"unknown fixture {ex.get('fixture')!r}; choose from {sorted(fixtures.FIXTURES)}")
            if ex.get("decay"):
                try:
                    dec.from_string(ex["decay"])
                except Exception as exc:  # noqa: BLE001
                    errs.append(f"bad decay {ex['decay']!r}: {exc}")
        return errs


class StageFailure(RuntimeError):
    def __init__(self, stage: str, msg: str):
        super().__init__(f"[{stage}] {msg}")
        self.stage = stage


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

def _atomic_write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(w) for k, w in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(w) for w in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def dumps(obj: dict, cfg: RunConfig) -> str:
    art = dict(obj)
    art["config"] = _clean(asdict(cfg))
    art["version"] = __version__
    return json.dumps(_clean(art), indent=2, sort_keys=True) + "\n"


def read_csv(path: str) -> tuple[list, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = rows[0]
    try:
        [float(h) for h in header]
    except ValueError:
        pass
    else:
        raise ValueError(f"{path}: header row is mandatory")
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    return header, data.reshape(-1, len(header))


def write_csv(header: list, rows, extra_cols: dict | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    extra_cols = extra_cols or {}
    w.writerow(list(header) + list(extra_cols))
    for i, r in enumerate(rows):
        w.writerow([repr(float(v)) for v in r] + [extra_cols[k][i] for k in extra_cols])
    return buf.getvalue()


def read_matrix(path: str) -> np.ndarray:
    if path.endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        if isinstance(obj, dict):
            obj = next(v for k, v in obj.items() if k in ("Gamma", "gamma", "Q", "matrix"))
        return np.asarray(obj, dtype=float)
    return read_csv(path)[1]


def _load_json(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig) -> None:
    ex = cfg.extra
    fam = ex.get("family_sim", cfg.family)
    if fam == "hr":
        model = models.HuslerReissPareto(read_matrix(ex["gamma"]))
    elif fam == "student":
        model = models.StudentLimit(read_matrix(ex["Q"]), float(ex["nu"]))
    elif fam == "bivariate-sum":
        model = models.BivariateSumModel()
    else:
        model = models.ParetoTail(float(ex.get("alpha") or 1.0))
    X = model.sample(int(ex["n"]), seed=cfg.seed)
    _atomic_write(cfg.output_path, write_csv([f"x{i}" for i in range(X.shape[1])], X))


def cmd_transform(cfg: RunConfig) -> None:
    header, X = read_csv(cfg.input_path)
    tr = transform_to_pareto(X, cfg.tail_fraction, tails=cfg.extra.get("tails", "both"))
    Y = censor(tr.Z)
    pattern = ["".join("1" if v != 0 else "0" for v in r) for r in Y]
    out = np.hstack([tr.Z, Y])
    cols = [f"z_{h}" for h in header] + [f"y_{h}" for h in header]
    _atomic_write(cfg.output_path, write_csv(cols, out, {"pattern": pattern}))
    if cfg.extra.get("summary"):
        _atomic_write(cfg.extra["summary"], dumps({"transform": tr.to_dict(), "columns": header}, cfg))


def cmd_select_graph(cfg: RunConfig) -> None:
    header, X = read_csv(cfg.input_path)
    tr = transform_to_pareto(X, cfg.tail_fraction, tails=cfg.extra.get("tails", "both"))
    g, tests = infer.select_graph(tr.Z, 1.0, cfg.level, cfg.extra.get("max_cond", 2),
                                  cfg.extra.get("min_cell", 5), return_tests=True)
    _atomic_write(cfg.output_path, dumps({"graph": g.to_dict(), "columns": header,
                                          "ci_tests": [t.to_dict() for t in tests]}, cfg))
    if cfg.extra.get("tests_csv"):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "conditioning", "statistic", "p_value", "inconclusive"])
        for t in tests:
            w.writerow([t.pair[0], t.pair[1], " ".join(map(str, t.conditioning)),
                        "" if t.statistic is None else repr(t.statistic),
                        "" if t.p_value is None else repr(t.p_value), int(t.inconclusive)])
        _atomic_write(cfg.extra["tests_csv"], buf.getvalue())


def cmd_fit(cfg: RunConfig) -> None:
    header, X = read_csv(cfg.input_path)
    conf = {"tail_fraction": cfg.tail_fraction, "family": cfg.family, "level": cfg.level,
            "seed": cfg.seed, "max_cond": cfg.extra.get("max_cond", 2),
            "min_cell": cfg.extra.get("min_cell", 5), "tails": cfg.extra.get("tails", "upper")}
    try:
        model, report = infer.fit_pipeline(X, conf)
    except infer.StageError as exc:
        raise StageFailure(exc.stage, str(exc.cause)) from exc
    report.pop("config", None)
    _atomic_write(cfg.output_path, dumps({"model": model.to_dict(), "report": report, "columns": header}, cfg))


def cmd_density(cfg: RunConfig) -> None:
    ex = cfg.extra
    art = _load_json(ex["model"])
    model = FactorizedTailModel.from_dict(art.get("model", art))
    header, Y = read_csv(ex["points"])
    v = factorized_censored_density(model, np.atleast_2d(Y))
    _atomic_write(cfg.output_path, write_csv(header, Y, {"density": [repr(float(a)) for a in np.atleast_1d(v)]}))


def cmd_check_rv(cfg: RunConfig) -> None:
    fx = fixtures.get(cfg.extra["fixture"])
    T = dec.from_string(cfg.extra["decay"]) if cfg.extra.get("decay") else fx.decay
    # deep default grid: the Gaussian needs T(t) far beyond 1e5 before the index settles
    t_grid = (rvcheck.default_t_grid(T, hi=1e100) if cfg.t_grid is None
              else np.asarray(cfg.t_grid, dtype=float))
    out: dict = {"fixture": fx.name, "decay": T.name, "reference_index": fx.index}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if fx.dim == 1:
            est = rvcheck.index_estimate(np.vectorize(lambda x: float(fx.F_bar(x))), T, t_grid)
            out["survival_index"] = est.to_dict()
            kr = rvcheck.karamata_residual(fx.f, fx.F_bar, T, t_grid, alpha=-est.alpha)
            out["karamata"] = {"alpha": kr.alpha, "path": kr.path}
        else:
            ys = np.linspace(0.05, 1.0, 20)
            al = rvcheck.angular_limit(fx.f, T, t_grid, ys)
            out["angular_limit"] = {"h": al.h, "converged": al.converged, "diagnostics": al.diagnostics}
    out["warnings"] = [str(w.message) for w in caught]
    _atomic_write(cfg.output_path, dumps(out, cfg))


def cmd_report(cfg: RunConfig) -> None:
    art = _load_json(cfg.input_path)
    lines = [f"artifact version {art.get('version', '?')}, command {art.get('config', {}).get('command', '?')}"]
    if "graph" in art or "model" in art:
        g = art.get("graph") or art["model"]["graph"]
        lines.append(f"graph: n={g['n']} cliques={g['cliques']} separators={g['separators']}")
    rep = art.get("report", {})
    for f in rep.get("fits", []):
        pars = ", ".join(f"{lab}={v:.4g}({se:.2g})" for lab, v, se in
                         zip(f["labels"], f["parameters"], f["standard_errors"]))
        lines.append(f"clique {f['clique']} {f['family']}: n={f['n_used']} loglik={f['log_likelihood']:.4f} "
                     f"converged={f['converged']} {pars}")
    for t in art.get("ci_tests", rep.get("ci_tests", [])):
        pv = "inconclusive" if t["p_value"] is None else f"p={t['p_value']:.4g}"
        lines.append(f"CI {tuple(t['pair'])} | {tuple(t['conditioning'])}: {pv}")
    if "log_likelihood" in rep:
        lines.append(f"total log-likelihood {rep['log_likelihood']:.4f} with {rep['n_params']} parameters")
    if "survival_index" in art:
        lines.append(f"survival index {art['survival_index']['alpha']:.6g} "
                     f"(converged={art['survival_index']['converged']})")
    if "transform" in art:
        lines.append(f"p_hat {art['transform']['p_hat']:.6g}")
    _atomic_write(cfg.output_path, "\n".join(lines) + "\n")


DISPATCH = {
    "simulate": cmd_simulate,
    "transform": cmd_transform,
    "select-graph": cmd_select_graph,
    "fit": cmd_fit,
    "density": cmd_density,
    "check-rv": cmd_check_rv,
    "report": cmd_report,
}


def run(cfg: RunConfig) -> int:
    errs = cfg.validate()
    if errs:
        for e in errs:
            print(f"[config] {e}", file=sys.stderr)
        return 2
    try:
        DISPATCH[cfg.command](cfg)
    except StageFailure as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"[{cfg.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tailgraph", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, inp=True):
        if inp:
            sp.add_argument("--input", "-i", dest="input_path")
        sp.add_argument("--output", "-o", dest="output_path", default=None)
        sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("simulate", help="draw from a limit model")
    common(sp, inp=False)
    sp.add_argument("--family", dest="family_sim", default="hr")
    sp.add_argument("--gamma", help="variogram matrix (JSON or CSV with header)")
    sp.add_argument("--Q", help="Student precision-type matrix")
    sp.add_argument("--nu", type=float)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--n", type=int, default=0)

    sp = sub.add_parser("transform", help="rank-transform margins to unit Pareto and censor")
    common(sp)
    sp.add_argument("--tail", dest="tail_fraction", type=float, default=0.05)
    sp.add_argument("--tails", choices=("both", "upper"), default="both")
    sp.add_argument("--summary", help="JSON summary path")

    for name, hlp in (("select-graph", "select a decomposable graph"), ("fit", "fit the factorized model")):
        sp = sub.add_parser(name, help=hlp)
        common(sp)
        sp.add_argument("--tail", dest="tail_fraction", type=float, default=0.05)
        sp.add_argument("--level", type=float, default=0.05)
        sp.add_argument("--max-cond", type=int, default=2)
        sp.add_argument("--min-cell", type=int, default=5)
        sp.add_argument("--tails", choices=("both", "upper"), default="upper" if name == "fit" else "both")
        if name == "fit":
            sp.add_argument("--family", default="hr")
        else:
            sp.add_argument("--tests-csv")

    sp = sub.add_parser("density", help="evaluate a fitted model at censored points")
    common(sp, inp=False)
    sp.add_argument("--model", required=False)
    sp.add_argument("--points", required=False)

    sp = sub.add_parser("check-rv", help="regular-variation diagnostics for a built-in fixture")
    common(sp, inp=False)
    sp.add_argument("--fixture")
    sp.add_argument("--decay", help="decay transform, e.g. id, exp, log, exp-sq, power-exp:2")
    sp.add_argument("--t-grid", type=float, nargs="+")

    sp = sub.add_parser("report", help="summarize a JSON artifact as text")
    common(sp)
    return p


_BASE = {"command", "input_path", "output_path", "tail_fraction", "family", "level", "seed", "t_grid", "format"}


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    d = vars(ns).copy()
    base = {k: d.pop(k) for k in list(d) if k in _BASE}
    extra = {k: v for k, v in d.items() if v is not None}
    for k in ("max_cond", "min_cell"):
        if k in extra:
            extra[k] = int(extra[k])
    out = base.get("output_path") or ""
    fmt = "csv" if out.endswith(".csv") or ns.command in ("simulate", "transform", "density") else "json"
    return RunConfig(format=fmt, extra=extra, **{k: v for k, v in base.items() if v is not None})


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    return run(config_from_args(ns))


if __name__ == "__main__":
    sys.exit(main())
