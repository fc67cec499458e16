"""Run configurations, reports and output files."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .basic import SearchSettings, kappa
from .examples import REGISTRY, Example, builtin_example
from .expr import ExprSyntaxError, UnknownIdentifierError, parse_expr
from .measures import DiffusionProblem, dualize
from .oracle import estimate_eigenvalue, rayleigh_quotient
from .refined import fxy_test_function, improve_iteratively, kappa_bar, kappa_underline

__all__ = [
    "ConfigError",
    "RunConfig",
    "Row",
    "Report",
    "run_bounds",
    "check_example",
    "add_checks",
    "example_config",
    "emit_outputs",
    "CSV_HEADER",
    "METHODS",
]

METHODS = ("basic", "bar", "underline", "iterate", "oracle", "rayleigh")
CASES = ("NN", "DD", "DN", "ND")
CSV_HEADER = "case,method,lower,upper,x,y,theta,evals,seconds"
#: relative slack of the sandwich verdicts
VERDICT_SLACK = 1e-3


class ConfigError(ValueError):
    """Invalid run configuration."""


def _endpoint(v) -> float:
    if isinstance(v, str):
        t = v.strip().lower()
        if t in ("inf", "+inf", "infinity"):
            return math.inf
        if t in ("-inf", "-infinity"):
            return -math.inf
        try:
            return float(t)
        except ValueError:
            raise ConfigError(f"bad endpoint {v!r}") from None
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    raise ConfigError(f"bad endpoint {v!r}")


def _check_expr(text, what: str) -> str:
    if not isinstance(text, (str, int, float)) or isinstance(text, bool):
        raise ConfigError(f"{what} must be an expression string")
    text = str(text)
    try:
        parse_expr(text)
    except (ExprSyntaxError, UnknownIdentifierError) as exc:
        raise ConfigError(f"{what}: {exc}") from None
    return text


@dataclass
class RunConfig:
    """What to compute and with which tolerances.

    ``problem`` holds ``left``, ``right``, ``theta`` and either ``a``/``b``
    or ``mu_density``/``nu_density`` as expression strings; alternatively
    ``example`` names a built-in problem.
    """

    problem: dict = field(default_factory=dict)
    example: Optional[str] = None
    cases: list = field(default_factory=list)
    methods: list = field(default_factory=list)
    quadrature_tol: float = 1e-10
    optimizer_tol: float = 1e-8
    n_grid: int = 1024
    tail_eps: float = 1e-10
    iterations: int = 2
    refresh_theta: bool = False
    iterate_theta: Optional[float] = None
    test_functions: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)
    label: str = ""

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        tol = data.get("tolerances", {})
        flat = {k: v for k, v in data.items() if k != "tolerances"}
        flat.update(tol)
        unknown = set(flat) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = cls(**flat)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    def validate(self) -> None:
        if not self.cases:
            raise ConfigError("at least one case is required")
        if not self.methods:
            raise ConfigError("at least one method is required")
        self.cases = [str(c).upper() for c in self.cases]
        for c in self.cases:
            if c not in CASES:
                raise ConfigError(f"unknown case {c!r}")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
        if (self.example is None) == (not self.problem):
            raise ConfigError("give exactly one of 'problem' and 'example'")
        if self.example is not None and self.example not in REGISTRY:
            raise ConfigError(f"unknown example {self.example!r}")
        if self.problem:
            p = self.problem
            for key in ("left", "right", "theta"):
                if key not in p:
                    raise ConfigError(f"problem.{key} is required")
            coeff = "a" in p
            dens = "mu_density" in p or "nu_density" in p
            if coeff == dens:
                raise ConfigError("problem needs either a (and b) or mu_density and nu_density")
            for key in ("a", "b", "mu_density", "nu_density"):
                if key in p:
                    _check_expr(p[key], f"problem.{key}")
            extra = set(p) - {"left", "right", "theta", "a", "b", "mu_density", "nu_density", "label", "scale"}
            if extra:
                raise ConfigError(f"unknown problem keys: {', '.join(sorted(extra))}")
        for f in self.test_functions:
            _check_expr(f, "test function")
        if not self.tail_eps > 0 or not self.optimizer_tol > 0 or int(self.n_grid) < 64:
            raise ConfigError("tail_eps and optimizer_tol must be positive and n_grid at least 64")
        if int(self.iterations) < 1:
            raise ConfigError("iterations must be at least 1")

    def build_problem(self) -> DiffusionProblem:
        if self.example is not None:
            return builtin_example(self.example)[0]
        p = self.problem
        kw = {k: p[k] for k in ("a", "b", "mu_density", "nu_density") if k in p}
        kw = {k: str(v) for k, v in kw.items()}
        try:
            return DiffusionProblem(_endpoint(p["left"]), _endpoint(p["right"]), float(p["theta"]),
                                    label=p.get("label", self.label or "problem"), scale=float(p.get("scale", 1.0)),
                                    **kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


@dataclass
class Row:
    case: str
    method: str
    lower: Optional[float] = None
    upper: Optional[float] = None
    x: Optional[float] = None
    y: Optional[float] = None
    theta: Optional[float] = None
    evals: int = 0
    seconds: Optional[float] = None
    flags: list = field(default_factory=list)
    error: Optional[str] = None
    stage: Optional[str] = None
    note: str = ""

    @property
    def value(self) -> Optional[float]:
        return self.upper if self.upper is not None else self.lower


@dataclass
class Report:
    label: str
    rows: list = field(default_factory=list)
    verdicts: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    # serialization -----------------------------------------------------

    def to_dict(self, timing: bool = False) -> dict:
        rows = []
        for r in self.rows:
            d = asdict(r)
            if not timing:
                d.pop("seconds")
            rows.append(d)
        out = {"label": self.label, "rows": rows, "verdicts": self.verdicts, "checks": self.checks,
               "settings": self.settings}
        return _encode(out)

    def to_json(self, timing: bool = False) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=True, allow_nan=False)

    @classmethod
    def from_dict(cls, data: dict) -> "Report":
        data = _decode(data)
        rows = [Row(**r) for r in data["rows"]]
        return cls(data["label"], rows, data.get("verdicts", []), data.get("checks", []), data.get("settings", {}))

    @classmethod
    def from_json(cls, text: str) -> "Report":
        return cls.from_dict(json.loads(text))

    # views -------------------------------------------------------------

    def row(self, case: str, method: str) -> Optional[Row]:
        for r in self.rows:
            if r.case == case and r.method == method:
                return r
        return None

    @property
    def failed(self) -> bool:
        return any(v["verdict"] == "FAIL" for v in self.verdicts) or any(c["verdict"] == "FAIL" for c in self.checks)

    @property
    def errored(self) -> bool:
        return any(r.error is not None for r in self.rows)

    def table(self, timing: bool = True) -> str:
        head = ["case", "method", "lower", "upper", "x", "y", "theta", "evals"] + (["seconds"] if timing else [])
        lines = [head]
        for r in self.rows:
            cells = [r.case, r.method, _fmt(r.lower), _fmt(r.upper), _fmt(r.x), _fmt(r.y), _fmt(r.theta),
                     str(r.evals)]
            if timing:
                cells.append("" if r.seconds is None else f"{r.seconds:.2f}")
            if r.error:
                cells[2] = f"error in {r.stage}: {r.error}"
                cells[3:] = [""] * (len(cells) - 3)
            lines.append(cells)
        widths = [max(len(row[i]) for row in lines if i < len(row)) for i in range(len(head))]
        text = "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in lines)
        extra = []
        for v in self.verdicts:
            extra.append(f"{v['verdict']}  {v['case']} {v['method']}: [{_fmt(v['lower'])}, {_fmt(v['upper'])}] "
                         f"vs oracle {_fmt(v['oracle'])}")
        for c in self.checks:
            extra.append(f"{c['verdict']}  {c['case']} {c['quantity']}: got {_fmt(c['got'])}, "
                         f"expected {_fmt(c['expected'])} (tol {_fmt(c['tolerance'])})")
        return text + ("\n\n" + "\n".join(extra) if extra else "")

    def csv(self, timing: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER.split(","))
        for r in self.rows:
            w.writerow([r.case, r.method, _csv(r.lower), _csv(r.upper), _csv(r.x), _csv(r.y), _csv(r.theta), r.evals,
                        _csv(r.seconds) if timing else ""])
        return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _csv(v) -> str:
    return "" if v is None else repr(float(v))


def _encode(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, np.generic):
        return _encode(obj.item())
    return obj


_SPECIAL = {"nan": math.nan, "inf": math.inf, "-inf": -math.inf}
_FLOAT_KEYS = {"lower", "upper", "x", "y", "theta", "seconds", "oracle", "got", "expected", "tolerance", "error_estimate"}


def _decode(obj, key=None):
    if isinstance(obj, dict):
        return {k: _decode(v, k) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v, key) for v in obj]
    if isinstance(obj, str) and key in _FLOAT_KEYS and obj in _SPECIAL:
        return _SPECIAL[obj]
    return obj


# -- running -----------------------------------------------------------------


def _applicable(method: str, case: str) -> bool:
    if method in ("bar", "underline", "iterate"):
        return case in ("DD", "NN")
    return True


def _finite(v) -> Optional[float]:
    return None if v is None else float(v)


class _Context:
    """Per-run caches shared between methods of one case."""

    def __init__(self, problem: DiffusionProblem, cfg: RunConfig):
        self.problem = problem
        self.cfg = cfg
        self.settings = SearchSettings(tol=cfg.optimizer_tol)
        self.underline = {}
        self.oracle = {}
        self.plot = {}


def _run_method(ctx: _Context, case: str, method: str) -> list:
    p, cfg = ctx.problem, ctx.cfg
    keep = bool(cfg.outputs.get("plot_dir"))
    settings = SearchSettings(tol=cfg.optimizer_tol, keep_scan=keep)
    if method == "basic":
        r = kappa(p, case, settings)
        if r.scan is not None:
            ctx.plot[(case, "basic")] = r.scan
        return [Row(case, "basic", r.inverse / 4.0, r.inverse, r.x, r.y, None, r.evaluations, flags=list(r.flags))]
    if method == "bar":
        r = kappa_bar(p, case, settings)
        if r.scan is not None:
            ctx.plot[(case, "bar")] = r.scan
        return [Row(case, "bar", None, r.inverse, r.x, r.y, None, r.evaluations, flags=list(r.flags))]
    if method == "underline":
        r = _underline(ctx, case)
        return [Row(case, "underline", r.inverse, None, r.x, r.y, r.theta, r.evaluations, flags=list(r.flags))]
    if method == "iterate":
        u = _underline(ctx, case)
        target = p if case == "DD" else dualize(p)
        f0 = fxy_test_function(target, u.x, u.y)
        theta = cfg.iterate_theta
        if theta is None and cfg.example is not None:
            theta = REGISTRY[cfg.example].iterate_theta
        if theta is None:
            theta = u.theta
        it = improve_iteratively(p, case, f0, int(cfg.iterations), refresh_theta=cfg.refresh_theta, theta=theta,
                                 settings=settings)
        ctx.plot[(case, "iterate")] = (target, [f0] + list(it.iterates))
        return [Row(case, f"iterate{k + 1}", b, None, None, None, it.theta, 0) for k, b in enumerate(it.bounds)]
    if method == "oracle":
        est = _oracle(ctx, case)
        return [Row(case, "oracle", est.eigenvalue, est.eigenvalue, None, None, None, 2 * int(cfg.n_grid),
                    flags=list(est.flags), note=f"error_estimate={est.error_estimate!r}")]
    if method == "rayleigh":
        rows = []
        for text in cfg.test_functions:
            q = rayleigh_quotient(p, case, text)
            rows.append(Row(case, "rayleigh", None, q, None, None, None, 0, note=text))
        return rows
    raise ConfigError(f"unknown method {method!r}")


def _underline(ctx: _Context, case: str):
    if case not in ctx.underline:
        ctx.underline[case] = kappa_underline(ctx.problem, case, SearchSettings(tol=ctx.cfg.optimizer_tol))
    return ctx.underline[case]


def _oracle(ctx: _Context, case: str):
    if case not in ctx.oracle:
        est = estimate_eigenvalue(ctx.problem, case, int(ctx.cfg.n_grid), ctx.cfg.tail_eps)
        ctx.oracle[case] = est
        ctx.plot[(case, "oracle")] = est
    return ctx.oracle[case]


def _verdicts(report: Report) -> None:
    for case in sorted({r.case for r in report.rows}):
        orc = report.row(case, "oracle")
        if orc is None or orc.error is not None:
            continue
        lam = orc.lower
        for r in report.rows:
            if r.case != case or r.method == "oracle" or r.error is not None:
                continue
            ok = True
            if r.lower is not None:
                ok &= r.lower <= lam * (1 + VERDICT_SLACK)
            if r.upper is not None:
                ok &= r.upper >= lam * (1 - VERDICT_SLACK)
            report.verdicts.append({"case": case, "method": r.method, "lower": r.lower, "upper": r.upper,
                                    "oracle": lam, "verdict": "PASS" if ok else "FAIL"})


def run_bounds(cfg: RunConfig, *, context: Optional[dict] = None) -> Report:
    """Execute every requested (case, method) pair; errors become rows naming the stage."""
    cfg.validate()
    problem = cfg.build_problem()
    ctx = _Context(problem, cfg)
    label = cfg.label or cfg.example or problem.label or "problem"
    settings = {k: getattr(cfg, k) for k in ("quadrature_tol", "optimizer_tol", "n_grid", "tail_eps", "iterations",
                                              "refresh_theta")}
    report = Report(label, settings=settings)
    order = {m: i for i, m in enumerate(METHODS)}
    jobs = sorted(((c, m) for c in cfg.cases for m in cfg.methods), key=lambda j: (CASES.index(j[0]), order[j[1]]))
    for case, method in jobs:
        if not _applicable(method, case):
            continue
        t0 = time.perf_counter()
        try:
            rows = _run_method(ctx, case, method)
        except ConfigError:
            raise
        except Exception as exc:  # surfaced as a row so the rest of the run is still reported
            rows = [Row(case, method, error=f"{type(exc).__name__}: {exc}", stage=method)]
        dt = time.perf_counter() - t0
        for r in rows:
            r.seconds = dt
            r.lower, r.upper = _finite(r.lower), _finite(r.upper)
            r.x, r.y, r.theta = _finite(r.x), _finite(r.y), _finite(r.theta)
        report.rows.extend(rows)
    _verdicts(report)
    if context is not None:
        context["plot"] = ctx.plot
        context["problem"] = problem
    return report


def _quantity(report: Report, quantity: str, case: str) -> Optional[float]:
    if quantity == "ratio":
        bar, und = report.row(case, "bar"), report.row(case, "underline")
        if bar is None or und is None or bar.upper is None or und.lower in (None, 0.0):
            return None
        return bar.upper / und.lower
    method, _, coord = quantity.partition(".")
    if method == "kappa":
        method = "basic"
    r = report.row(case, method)
    if r is None or r.error is not None:
        return None
    if coord:
        return getattr(r, coord)
    return r.upper if method in ("basic", "bar", "oracle") else r.lower


def example_config(name: str, **overrides) -> RunConfig:
    ex: Example = REGISTRY[name]
    methods = ["basic", "oracle"]
    quantities = {e.quantity.partition(".")[0] for e in ex.expectations}
    if quantities & {"bar", "ratio"}:
        methods.append("bar")
    if quantities & {"underline", "ratio"}:
        methods.append("underline")
    if quantities & {"iterate1", "iterate2"}:
        methods.append("iterate")
    cfg = RunConfig(example=name, cases=list(ex.cases), methods=methods, **overrides)
    cfg.validate()
    return cfg


def check_example(name: str, **overrides) -> Report:
    """Run a built-in example and compare with its reference values."""
    report = run_bounds(example_config(name, **overrides))
    add_checks(report, name)
    return report


def add_checks(report: Report, name: str) -> None:
    """Append the comparisons with the reference values of example ``name``."""
    for e in REGISTRY[name].expectations:
        got = _quantity(report, e.quantity, e.case)
        tol = e.abs_tol + e.rel_tol * abs(e.value)
        report.checks.append({"case": e.case, "quantity": e.quantity, "got": got, "expected": e.value,
                              "tolerance": tol, "verdict": "PASS" if e.passes(got) else "FAIL"})


# -- output files ------------------------------------------------------------


def _write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _columns(names, cols) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in zip(*cols):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def plot_files(report: Report, plot: dict, problem: DiffusionProblem) -> dict:
    """Plot data as ``{file name: csv text}``."""
    out = {}
    label = report.label
    for key in sorted(plot, key=lambda k: (k[0], k[1])):
        case, what = key
        obj = plot[key]
        if what == "oracle":
            out[f"{label}_{case}_eigenfunction.csv"] = _columns(["x", "g"], [obj.grid, obj.eigenfunction])
        elif what == "iterate":
            target, funcs = obj
            lo, hi = target.tables.search
            s = np.linspace(lo, hi, 401)
            x = target.smap.x(s)
            cols = [x] + [np.asarray(f(x), dtype=float) for f in funcs]
            out[f"{label}_{case}_iterates.csv"] = _columns(["x"] + [f"f{k}" for k in range(len(funcs))], cols)
        else:
            scan = obj
            if scan.y is None:
                out[f"{label}_{case}_{what}_scan.csv"] = _columns(["x", "objective"],
                                                                  [np.ravel(scan.x), np.ravel(scan.values)])
            else:
                out[f"{label}_{case}_{what}_scan.csv"] = _columns(
                    ["x", "y", "objective"], [np.ravel(scan.x), np.ravel(scan.y), np.ravel(scan.values)])
    return out


def emit_outputs(report: Report, targets: dict, *, plot: Optional[dict] = None, problem=None, timing: bool = False,
                 stream=None) -> list:
    """Write the table, the JSON report, the CSV and plot data; returns written paths."""
    written = []
    if stream is not None:
        stream.write(report.table(timing=True) + "\n")
    if targets.get("report"):
        _write(targets["report"], report.to_json(timing) + "\n")
        written.append(targets["report"])
    if targets.get("csv"):
        _write(targets["csv"], report.csv(timing))
        written.append(targets["csv"])
    if targets.get("plot_dir") and plot:
        for name, text in plot_files(report, plot, problem).items():
            path = os.path.join(targets["plot_dir"], name)
            _write(path, text)
            written.append(path)
    return written
