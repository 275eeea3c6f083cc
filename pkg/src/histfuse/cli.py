"""Command-line interface: ``histfuse <subcommand> [options]``.

Every subcommand prints JSON (tagged ``"schema": "histfuse/1"``) unless
``--format csv`` is given. Domain errors exit with status 1 and print
``{"code", "message", "context"}`` on stderr; usage errors exit with 2.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import anova, bliss, fusion, montecarlo
from . import linalg as la
from .asymvar import ProblemSpec, compare_hierarchy, variance_A, variance_B, variance_C
from .errors import ConfigError, HistfuseError
from .linalg import VarianceBlocks

SCHEMA = "histfuse/1"

TABLE1_COLUMNS = ("n", "m", "A_thetatheta", "B_thetatheta")
TABLE2_COLUMNS = ("rho", "B_min", "xi00", "xi10", "xi01", "xi11")
TABLE3_COLUMNS = ("m1", "m2", "eta1", "eta2", "n_min", "n12", "n1", "n2")


class UsageError(Exception):
    pass


# --- JSON encoding -------------------------------------------------------------

def matrix_to_json(m) -> dict:
    a = np.atleast_2d(np.asarray(m, dtype=float))
    rows = [[float(x) for x in row] for row in a]
    if a.shape[0] == a.shape[1]:
        return {"dim": int(a.shape[0]), "rows": rows}
    return {"shape": [int(a.shape[0]), int(a.shape[1])], "rows": rows}


def matrix_from_json(obj, name: str = "matrix") -> np.ndarray:
    """Accept ``{"dim", "rows"}``, ``{"shape", "rows"}``, nested lists or a scalar."""
    try:
        if isinstance(obj, dict):
            rows = np.array(obj["rows"], dtype=float)
            if rows.ndim != 2:
                raise ValueError("rows must be a list of lists")
            if "dim" in obj and rows.shape != (int(obj["dim"]), int(obj["dim"])):
                raise ValueError(f"rows do not match dim {obj['dim']}")
            if "shape" in obj and list(rows.shape) != [int(s) for s in obj["shape"]]:
                raise ValueError(f"rows do not match shape {obj['shape']}")
            return rows
        return la.as_matrix(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot read {name}: {exc}", field=name) from exc


def vector_from_json(obj, name: str) -> np.ndarray:
    try:
        return np.atleast_1d(np.asarray(obj, dtype=float)).ravel()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cannot read {name}: {exc}", field=name) from exc


def blocks_to_json(v: VarianceBlocks) -> dict:
    return {"tt": matrix_to_json(v.tt), "te": matrix_to_json(v.te), "ee": matrix_to_json(v.ee)}


def blocks_from_json(obj, p=None, name: str = "upsilon") -> VarianceBlocks:
    if isinstance(obj, dict) and {"tt", "te", "ee"} <= obj.keys():
        return VarianceBlocks(matrix_from_json(obj["tt"], f"{name}.tt"),
                              matrix_from_json(obj["te"], f"{name}.te"),
                              matrix_from_json(obj["ee"], f"{name}.ee"))
    if p is None:
        raise ConfigError(f"{name} given as a full matrix needs 'p'", field=name)
    return VarianceBlocks.from_full(matrix_from_json(obj, name), int(p))


def _scalar_or_matrix(m: np.ndarray):
    return float(m[0, 0]) if m.shape == (1, 1) else matrix_to_json(m)


def _require(doc: dict, key: str, where: str = "input"):
    if not isinstance(doc, dict) or key not in doc:
        raise ConfigError(f"{where} is missing '{key}'", field=key)
    return doc[key]


def read_json(path: str) -> dict:
    try:
        if path == "-":
            text = sys.stdin.read()
        else:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno, column=exc.colno) from exc
    if not isinstance(doc, dict):
        raise ConfigError("top-level JSON value must be an object")
    schema = doc.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ConfigError("unsupported schema", schema=schema, expected=SCHEMA)
    return doc


# --- estimates ---------------------------------------------------------------

def estimate_from_json(doc, name: str) -> fusion.Estimate:
    return fusion.Estimate(vector_from_json(_require(doc, "value", name), f"{name}.value"),
                           matrix_from_json(_require(doc, "scaled_var", name), f"{name}.scaled_var"),
                           int(_require(doc, "n", name)))


def estimate_to_json(e: fusion.Estimate) -> dict:
    return {"value": [float(x) for x in e.value], "scaled_var": matrix_to_json(e.scaled_var), "n": e.n}


def joint_from_json(doc, name: str) -> fusion.JointEstimate:
    theta = vector_from_json(_require(doc, "theta", name), f"{name}.theta")
    ups = blocks_from_json(_require(doc, "upsilon", name), doc.get("p", theta.shape[0]), f"{name}.upsilon")
    return fusion.JointEstimate(theta, vector_from_json(_require(doc, "eta", name), f"{name}.eta"),
                                ups, int(_require(doc, "n", name)))


def joint_to_json(j: fusion.JointEstimate) -> dict:
    return {"theta": [float(x) for x in j.theta], "eta": [float(x) for x in j.eta],
            "upsilon": blocks_to_json(j.upsilon), "n": j.n}


def _historical(doc) -> list[fusion.Estimate]:
    hist = _require(doc, "historical")
    if isinstance(hist, dict):
        hist = [hist]
    if not isinstance(hist, list) or not hist:
        raise ConfigError("'historical' must be a non-empty list of estimates")
    return [estimate_from_json(h, f"historical[{i}]") for i, h in enumerate(hist)]


# --- subcommands -------------------------------------------------------------

def cmd_combine(args) -> dict:
    doc = read_json(args.input)
    hist = _historical(doc)
    current = doc.get("current", doc.get("estimate"))
    if current is None:
        raise ConfigError("input needs 'current' (or 'estimate')")
    out = {"schema": SCHEMA}
    if "theta" in current:
        fused = fusion.combine_theta_C(joint_from_json(current, "current"), fusion.HistoricalSet(tuple(hist)))
        out.update(operation="combine_theta_C", estimate=joint_to_json(fused))
    else:
        fused = fusion.combine_eta(estimate_from_json(current, "current"), fusion.HistoricalSet(tuple(hist)))
        out.update(operation="combine_eta", estimate=estimate_to_json(fused))
    out["historical"] = [estimate_to_json(h) for h in hist]
    return out


def _anova_inputs(doc: dict, plug_in: bool = False):
    # The plug-in study runs only the combination cell, so xi is dropped for A.
    a = doc["anova"]
    rho = float(_require(a, "rho", "anova"))
    sigma2 = float(a.get("sigma2", 1.0))
    xi = anova.DesignXi(*a["xi"]) if a.get("xi") is not None else None
    spec = anova.problem_spec(rho, sigma2, None if plug_in else xi)
    ups = anova.upsilon_of_design(xi, sigma2) if xi is not None else None
    return spec, ups


def spec_from_json(doc: dict, plug_in: bool = False) -> tuple[ProblemSpec, VarianceBlocks | None]:
    if "anova" in doc:
        return _anova_inputs(doc, plug_in)
    ups = None
    d_theta = matrix_from_json(_require(doc, "d_theta", "spec"), "d_theta")
    p = d_theta.shape[0]
    if "upsilon" in doc:
        ups = blocks_from_json(doc["upsilon"], doc.get("p", p))
    ups_ee = doc.get("upsilon_ee")
    ups_ee = matrix_from_json(ups_ee, "upsilon_ee") if ups_ee is not None else (None if ups is None else ups.ee)
    spec = ProblemSpec(
        d_theta=d_theta,
        d_eta=matrix_from_json(_require(doc, "d_eta", "spec"), "d_eta"),
        sigma_psi=matrix_from_json(_require(doc, "sigma_psi", "spec"), "sigma_psi"),
        sigma=matrix_from_json(_require(doc, "sigma", "spec"), "sigma"),
        rho=float(_require(doc, "rho", "spec")),
        upsilon_ee=ups_ee,
    )
    return spec, ups


def _variance_c(doc: dict, spec: ProblemSpec | None, ups: VarianceBlocks | None) -> VarianceBlocks:
    if ups is None:
        raise ConfigError("variance C needs 'upsilon' (or an anova design 'xi')")
    sigma = spec.sigma if spec is not None else matrix_from_json(_require(doc, "sigma", "spec"), "sigma")
    rho = spec.rho if spec is not None else float(_require(doc, "rho", "spec"))
    return variance_C(ups, sigma, rho)


def cmd_variance(args) -> dict:
    doc = read_json(args.spec)
    if args.kind == "C" and "historical" in doc:
        # a combine document: Sigma and rho come from the estimates themselves
        joint = joint_from_json(doc.get("current", doc.get("estimate")) or {}, "current")
        hist = fusion.HistoricalSet(tuple(_historical(doc))).pooled()
        v = variance_C(joint.upsilon, hist.scaled_var, joint.n / hist.n)
    elif args.kind == "C" and "d_theta" not in doc and "anova" not in doc:
        # summary fusion only needs Upsilon, Sigma and rho
        v = _variance_c(doc, None, blocks_from_json(_require(doc, "upsilon", "spec"), doc.get("p")))
    else:
        spec, ups = spec_from_json(doc, plug_in=args.kind == "A")
        if args.kind == "A":
            v = variance_A(spec)
        elif args.kind == "B":
            v = variance_B(spec)
        else:
            v = _variance_c(doc, spec, ups)
    return {
        "schema": SCHEMA,
        "kind": args.kind,
        "p": v.p,
        "q": v.q,
        f"{args.kind}_thetatheta": _scalar_or_matrix(v.tt),
        "variance": blocks_to_json(v),
        "full": matrix_to_json(v.full()),
    }


def cmd_compare(args) -> dict:
    doc = read_json(args.input)
    if {"A", "B", "C", "upsilon"} <= doc.keys():
        mats = [matrix_from_json(doc[k], k) for k in ("A", "B", "C", "upsilon")]
    else:
        spec, ups = spec_from_json(doc)
        if ups is None:
            raise ConfigError("compare needs 'upsilon' (or an anova design 'xi')")
        mats = [variance_A(spec).full(), variance_B(spec).full(),
                variance_C(ups, spec.sigma, spec.rho).full(), ups.full()]
    report = compare_hierarchy(*mats, tol=args.tol)
    return {
        "schema": SCHEMA,
        **report.to_dict(),
        "A": matrix_to_json(mats[0]),
        "B": matrix_to_json(mats[1]),
        "C": matrix_to_json(mats[2]),
        "upsilon": matrix_to_json(mats[3]),
    }


def cmd_anova_table1(args) -> dict:
    rows = anova.emit_table1(args.n_list, args.m_list, args.sigma2)
    return {"schema": SCHEMA, "table": "anova-table1", "columns": list(TABLE1_COLUMNS), "rows": rows}


def cmd_anova_table2(args) -> dict:
    rows = anova.emit_table2(args.rhos, args.step, args.xi00_floor, _threads(args))
    return {"schema": SCHEMA, "table": "anova-table2", "columns": list(TABLE2_COLUMNS), "rows": rows}


def cmd_anova_design(args) -> dict:
    out = {"schema": SCHEMA, "rho": args.rho, "sigma2": args.sigma2}
    if args.xi is None:
        xi, value = anova.optimal_design(args.rho, args.step, args.xi00_floor, _threads(args))
        out.update(B_min=value * args.sigma2, xi00=xi.xi00, xi10=xi.xi10, xi01=xi.xi01, xi11=xi.xi11,
                   **anova.boundary_flags(xi, args.step, args.xi00_floor))
        out["columns"] = list(TABLE2_COLUMNS)
        return out
    xi = anova.DesignXi(*args.xi)
    out.update(xi00=xi.xi00, xi10=xi.xi10, xi01=xi.xi01, xi11=xi.xi11,
               A_thetatheta=anova.var_theta_A(args.rho, args.sigma2))
    if xi.interior:
        out["B_thetatheta"] = anova.var_theta_B(xi, args.rho, args.sigma2)
    elif xi.xi00 == 0.0:
        out["D_thetatheta"] = anova.var_theta_D(xi.xi01, xi.xi10, xi.xi11, args.rho, args.sigma2)
    else:
        raise anova.BoundaryDesign("design must be interior or have xi00 = 0", xi=list(xi.as_tuple()))
    return out


def cmd_bliss_design(args) -> dict:
    inst = bliss.BlissInstance(args.m1, args.m2, args.eta1, args.eta2)
    out = {"schema": SCHEMA, "m1": args.m1, "m2": args.m2, "eta1": args.eta1, "eta2": args.eta2}
    if args.n is not None:
        alloc = bliss.greedy_allocate(inst.with_budget(args.n), args.theta)
    else:
        n_min, alloc = bliss.find_nmin(inst, args.theta)
        out["n_min"] = n_min
    out.update(n=alloc.n, n12=alloc.n12, n1=alloc.n1, n2=alloc.n2, criterion=alloc.criterion)
    return out


def cmd_bliss_table3(args) -> dict:
    return {"schema": SCHEMA, "table": "bliss-table3", "columns": list(TABLE3_COLUMNS),
            "rows": bliss.emit_table3()}


def _kv_pairs(items, what: str) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"{what} must look like key=value, got {item!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            raise UsageError(f"{what} value for {key!r} is not a number or JSON value") from None
    return out


def cmd_simulate(args) -> dict:
    base = {}
    if args.config is not None:
        base = read_json(args.config)
        base.pop("schema", None)
        base = base.get("config", base)
    scenario = args.scenario or base.get("scenario")
    if scenario is None:
        raise UsageError("simulate needs --scenario or a config file with 'scenario'")
    sizes = dict(base.get("sizes") or {})
    sizes.update(_kv_pairs(args.size, "--size"))
    if args.n is not None:
        sizes["n"] = args.n
    if args.m is not None:
        sizes["m"] = args.m
    params = dict(base.get("true_params") or {})
    params.update(_kv_pairs(args.param, "--param"))
    design = args.design if args.design is not None else base.get("design")
    reps = args.reps if args.reps is not None else base.get("reps", 100_000)
    seed = args.seed if args.seed is not None else base.get("seed", 0)
    cfg = montecarlo.SimConfig(scenario, params, sizes, design, reps, seed,
                               float(base.get("sigma2", 1.0)) if args.sigma2 is None else args.sigma2)
    threads = _threads(args)
    if args.coincidence:
        return {"schema": SCHEMA, "scenario": cfg.scenario, "config": cfg.to_dict(),
                "max_abs_theta_B_minus_C": montecarlo.verify_coincidence(cfg, threads)}
    report = montecarlo.simulate(cfg, threads)
    return {"schema": SCHEMA, **report.to_dict(timing=args.timing)}


# --- output ------------------------------------------------------------------

def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_csv_cell(r[c]) for c in columns])
    return buf.getvalue()


def _csv_cell(x):
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, float):
        return repr(x)
    return x


def render(args, result: dict) -> str:
    if args.format == "json":
        return json.dumps(result, indent=2) + "\n"
    if "rows" in result and "columns" in result:
        return _csv_text(result["columns"], result["rows"])
    if args.command == "anova-design":
        cols = list(result.pop("columns", None) or
                    ["rho", "xi00", "xi10", "xi01", "xi11", "A_thetatheta"]
                    + [k for k in ("B_thetatheta", "D_thetatheta") if k in result])
        return _csv_text(cols, [result])
    if args.command == "bliss-design":
        cols = ["m1", "m2", "eta1", "eta2"] + (["n_min"] if "n_min" in result else []) + \
               ["n", "n12", "n1", "n2", "criterion"]
        return _csv_text(cols, [result])
    raise UsageError(f"--format csv is not available for {args.command}")


# --- parser ------------------------------------------------------------------

def _threads(args) -> int:
    if getattr(args, "threads", None) is not None:
        return args.threads
    return montecarlo.default_threads()


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _rho(text: str) -> float:
    # accept fractions such as 1/8
    num, sep, den = text.partition("/")
    try:
        return float(num) / float(den) if sep else float(num)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    threaded = argparse.ArgumentParser(add_help=False)
    threaded.add_argument("--threads", type=_positive_int, default=None,
                          help="worker threads (default: HISTFUSE_THREADS or CPU count)")

    parser = _Parser(prog="histfuse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("combine", parents=[common], help="fuse current and historical estimates")
    p.add_argument("input", help="JSON input file, or - for stdin")
    p.set_defaults(func=cmd_combine)

    p = sub.add_parser("variance", parents=[common], help="asymptotic variance A, B or C")
    p.add_argument("--kind", choices=("A", "B", "C"), required=True)
    p.add_argument("--spec", required=True, help="JSON problem spec, or - for stdin")
    p.set_defaults(func=cmd_variance)

    p = sub.add_parser("compare", parents=[common], help="Loewner hierarchy of A, B, C and Upsilon")
    p.add_argument("input", help="JSON input file, or - for stdin")
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("anova-table1", parents=[common], help="A and B variances over an (n, m) grid")
    p.add_argument("--n-list", type=_positive_int, nargs="+", default=list(anova.TABLE1_SIZES))
    p.add_argument("--m-list", type=_positive_int, nargs="+", default=list(anova.TABLE1_SIZES))
    p.add_argument("--sigma2", type=float, default=1.0)
    p.set_defaults(func=cmd_anova_table1)

    p = sub.add_parser("anova-table2", parents=[common, threaded], help="optimal designs over rho")
    p.add_argument("--rhos", type=_rho, nargs="+", default=list(anova.TABLE2_RHOS))
    p.add_argument("--step", type=float, default=0.001)
    p.add_argument("--xi00-floor", type=float, default=0.02)
    p.set_defaults(func=cmd_anova_table2)

    p = sub.add_parser("anova-design", parents=[common, threaded],
                       help="optimal design at one rho, or variances of a given design")
    p.add_argument("--rho", type=_rho, required=True)
    p.add_argument("--xi", type=float, nargs=4, metavar=("XI00", "XI10", "XI01", "XI11"))
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--step", type=float, default=0.001)
    p.add_argument("--xi00-floor", type=float, default=0.02)
    p.set_defaults(func=cmd_anova_design)

    p = sub.add_parser("bliss-design", parents=[common], help="greedy Bliss allocation")
    p.add_argument("--m1", type=_positive_int, required=True)
    p.add_argument("--m2", type=_positive_int, required=True)
    p.add_argument("--eta1", type=float, required=True)
    p.add_argument("--eta2", type=float, required=True)
    p.add_argument("--theta", type=float, default=None, help="default: eta1 * eta2")
    budget = p.add_mutually_exclusive_group(required=True)
    budget.add_argument("--n", type=_positive_int)
    budget.add_argument("--nmin", action="store_true", help="find the smallest budget that replicates")
    p.set_defaults(func=cmd_bliss_design)

    p = sub.add_parser("bliss-table3", parents=[common], help="n_min over the published parameter grid")
    p.set_defaults(func=cmd_bliss_table3)

    p = sub.add_parser("simulate", parents=[common, threaded], help="Monte Carlo variance check")
    p.add_argument("--scenario", choices=montecarlo.SCENARIOS)
    p.add_argument("--config", help="JSON SimConfig (or a previous report), or - for stdin")
    p.add_argument("--reps", type=_positive_int)
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=_positive_int)
    p.add_argument("--m", type=_positive_int)
    p.add_argument("--size", action="append", metavar="KEY=VALUE", help="e.g. n12=55, m1=30")
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="e.g. theta=0.5, eta1=0.7")
    p.add_argument("--design", type=float, nargs=4, metavar=("XI00", "XI10", "XI01", "XI11"))
    p.add_argument("--sigma2", type=float)
    p.add_argument("--coincidence", action="store_true", help="report max |theta_B - theta_C|")
    p.add_argument("--timing", action="store_true", help="include elapsed seconds")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        result = args.func(args)
        text = render(args, result)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return 2
    except HistfuseError as exc:
        sys.stderr.write(json.dumps(exc.to_dict(), default=str) + "\n")
        return 1
    sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
