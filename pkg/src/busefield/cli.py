"""Command-line front end: config-driven experiments with file outputs.

One config file describes a chart, the geometric objects on it, solver
settings, and output destinations; command-line flags only select objects
and override output paths.  Exit codes: 0 success, 1 failed verdict,
2 usage or config error, 3 solver breakdown.
"""

import argparse
import math
import os
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from .barrier import (build_line_fields, classify_lines, equivalent,
                      precedes, zero_set)
from .busemann import (TruncationSchedule, busemann_field, dl_field,
                       horofunction_field, singular_set)
from .eikonal import (SourceSet, load_field_csv, save_field_csv,
                      save_field_pgm, solve_distance)
from .errors import (BusefieldError, ConfigError, ConvergenceError,
                     InconsistencyError)
from .geodesic import line_spec, ray_spec
from .metric import (custom_chart, cylinder_chart, euclidean_chart,
                     half_plane_chart, paraboloid_chart)
from .verify import default_config, run_suite, write_report

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3

_CHART_KEYS = {"kind", "bounds", "resolution", "period", "g11", "g12", "g22"}
_SOLVER_KEYS = {"schedule", "cauchy_tol", "dt", "jump_threshold", "zero_tol",
                "eps_sweep", "seed", "suites"}
_OUTPUT_KEYS = {"out_dir", "format", "report"}
_OBJECT_KINDS = {"ray", "line", "point", "circle"}


@dataclass
class ExperimentConfig:
    """Parsed and validated experiment description."""

    chart_kind: str
    bounds: tuple
    resolution: tuple
    tensor_exprs: tuple = None          # (g11, g12, g22) for custom charts
    rays: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)
    points: dict = field(default_factory=dict)
    circles: dict = field(default_factory=dict)
    schedule: tuple = (8.0, 12.0, 16.0)
    cauchy_tol: float = 0.5
    dt: float = 0.02
    jump_threshold: float = 0.2
    zero_tol: float = None
    eps_sweep: float = None
    seed: int = 0
    suites: tuple = None
    out_dir: str = "."
    out_format: str = "csv"
    report_base: str = "report"

    def make_chart(self):
        kw = {}
        if self.bounds is not None:
            kw["bounds"] = self.bounds
        if self.resolution is not None:
            kw["resolution"] = self.resolution
        if self.chart_kind == "euclidean":
            return euclidean_chart(**kw)
        if self.chart_kind == "half_plane":
            return half_plane_chart(**kw)
        if self.chart_kind == "cylinder":
            return cylinder_chart(**kw)
        if self.chart_kind == "paraboloid":
            return paraboloid_chart(**kw)
        if self.chart_kind == "custom":
            if self.tensor_exprs is None:
                raise ConfigError("custom charts need g11, g12, g22")
            if self.bounds is None or self.resolution is None:
                raise ConfigError("custom charts need bounds and resolution")
            return custom_chart(self.bounds, self.resolution,
                                *self.tensor_exprs)
        raise ConfigError(f"unknown chart kind {self.chart_kind!r}")

    def truncation_schedule(self):
        return TruncationSchedule(self.schedule, self.cauchy_tol)


def _floats(text):
    return tuple(float(t.strip()) for t in text.split(",") if t.strip())


def parse_config(path):
    """Parse the sectioned key=value config format; unknown keys are errors."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    section = None
    raw = {"chart": {}, "objects": [], "solver": {}, "outputs": {}}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip()
                if section not in raw:
                    raise ConfigError(f"unknown section [{section}] "
                                      f"(line {lineno})")
                continue
            if section is None:
                raise ConfigError(f"key outside any section (line {lineno})")
            if "=" not in line:
                raise ConfigError(f"expected key = value (line {lineno})")
            key, value = (s.strip() for s in line.split("=", 1))
            if section == "objects":
                raw["objects"].append((key, value, lineno))
            else:
                known = {"chart": _CHART_KEYS, "solver": _SOLVER_KEYS,
                         "outputs": _OUTPUT_KEYS}[section]
                if key not in known:
                    raise ConfigError(f"unknown key {key!r} in [{section}] "
                                      f"(line {lineno})")
                raw[section][key] = value
    return _build_config(raw)


def _build_config(raw):
    chart = raw["chart"]
    if "kind" not in chart:
        raise ConfigError("missing chart kind")
    cfg = ExperimentConfig(
        chart_kind=chart["kind"],
        bounds=_floats(chart["bounds"]) if "bounds" in chart else None,
        resolution=tuple(int(v) for v in _floats(chart["resolution"]))
        if "resolution" in chart else None,
        tensor_exprs=(chart["g11"], chart["g12"], chart["g22"])
        if "g11" in chart else None,
    )
    if cfg.bounds is not None and len(cfg.bounds) != 4:
        raise ConfigError("bounds needs four numbers")
    if "period" in chart:
        if cfg.chart_kind != "cylinder":
            raise ConfigError("period only applies to cylinder charts")
        period = float(chart["period"])
        if period <= 0:
            raise ConfigError("period must be > 0")
        y_lo, y_hi = (cfg.bounds[2:] if cfg.bounds is not None
                      else (-2.0, 2.0))
        cfg.bounds = (0.0, period, y_lo, y_hi)
    if cfg.resolution is not None and len(cfg.resolution) != 2:
        raise ConfigError("resolution needs two integers")

    for key, value, lineno in raw["objects"]:
        parts = key.split()
        if len(parts) != 2 or parts[0] not in _OBJECT_KINDS:
            raise ConfigError(f"object keys look like 'ray r0' (line {lineno})")
        kind, name = parts
        vals = _floats(value)
        if kind in ("ray", "line"):
            if len(vals) != 5:
                raise ConfigError(f"{kind} {name} needs base_x, base_y, "
                                  f"dir_x, dir_y, horizon (line {lineno})")
            target = cfg.rays if kind == "ray" else cfg.lines
            target[name] = (vals[0:2], vals[2:4], vals[4])
        elif kind == "point":
            if len(vals) != 2:
                raise ConfigError(f"point {name} needs x, y (line {lineno})")
            cfg.points[name] = vals
        else:
            if len(vals) != 3:
                raise ConfigError(f"circle {name} needs cx, cy, radius "
                                  f"(line {lineno})")
            cfg.circles[name] = vals

    solver = raw["solver"]
    if "schedule" in solver:
        cfg.schedule = _floats(solver["schedule"])
    for key, conv in (("cauchy_tol", float), ("dt", float),
                      ("jump_threshold", float), ("zero_tol", float),
                      ("eps_sweep", float), ("seed", int)):
        if key in solver:
            setattr(cfg, key, conv(solver[key]))
    if "suites" in solver:
        cfg.suites = tuple(s.strip() for s in solver["suites"].split(",")
                           if s.strip())
    for key, bound in (("cauchy_tol", 0.0), ("dt", 0.0),
                       ("jump_threshold", 0.0)):
        if getattr(cfg, key) <= bound:
            raise ConfigError(f"{key} must be > {bound}")
    if cfg.zero_tol is not None and cfg.zero_tol <= 0:
        raise ConfigError("zero_tol must be > 0")
    if list(cfg.schedule) != sorted(set(cfg.schedule)) or not cfg.schedule:
        raise ConfigError("schedule must be strictly increasing")

    outputs = raw["outputs"]
    cfg.out_dir = outputs.get("out_dir", ".")
    cfg.out_format = outputs.get("format", "csv")
    if cfg.out_format not in ("csv", "pgm"):
        raise ConfigError("format must be csv or pgm")
    cfg.report_base = outputs.get("report", "report")
    return cfg


# ---------------------------------------------------------------------------
# helpers

def _need(mapping, name, what):
    if name is None:
        raise ConfigError(f"select a {what} with --{what}")
    if name not in mapping:
        raise ConfigError(f"no {what} named {name!r} in the config")
    return mapping[name]


def _save(fld, out, out_format):
    if out is None:
        return None
    if out.endswith(".pgm") or (out_format == "pgm" and
                                not out.endswith(".csv")):
        save_field_pgm(fld, out)
    else:
        save_field_csv(fld, out)
    return out


def _conv_summary(rep):
    defect = np.asarray(rep["final_cell_defect"], float)
    worst = float(np.nanmax(defect)) if np.isfinite(defect).any() else math.nan
    return (f"Final truncation defect {worst:.3g}, worst monotonicity "
            f"increase {float(rep['monotonicity_worst']):.3g}.")


def _field_summary(fld):
    vals = fld.values[fld.valid_mask & np.isfinite(fld.values)]
    masked = 1.0 - float(np.mean(fld.valid_mask))
    if vals.size == 0:
        return f"{fld.tag}: all cells masked"
    return (f"{fld.tag}: range [{vals.min():.4f}, {vals.max():.4f}], "
            f"masked fraction {masked:.3f}")


# ---------------------------------------------------------------------------
# subcommands

def _cmd_distance(cfg, args):
    chart = cfg.make_chart()
    pts = [cfg.points[args.source]] if args.source else list(
        cfg.points.values())
    if not pts:
        raise ConfigError("no point objects to use as distance sources")
    src = SourceSet.from_points(pts)
    fld = solve_distance(chart, src, eps_sweep=cfg.eps_sweep)
    out = _save(fld, args.out, cfg.out_format)
    print(f"distance from {len(pts)} source point(s) on {cfg.chart_kind}. "
          + _field_summary(fld) + (f" Written to {out}." if out else ""))
    return EXIT_OK


def _cmd_busemann(cfg, args):
    chart = cfg.make_chart()
    base, v, horizon = _need(cfg.rays, args.ray, "ray")
    ray = ray_spec(chart, base, v, horizon=horizon)
    fld, rep = busemann_field(chart, ray, cfg.truncation_schedule(),
                              dt=cfg.dt)
    out = _save(fld, args.out, cfg.out_format)
    print(f"busemann field of ray {args.ray} on {cfg.chart_kind}. "
          + _field_summary(fld) + " " + _conv_summary(rep)
          + (f" Written to {out}." if out else ""))
    return EXIT_OK


def _cmd_horo(cfg, args):
    chart = cfg.make_chart()
    base, v, horizon = _need(cfg.rays, args.ray, "ray")
    ray = ray_spec(chart, base, v, horizon=horizon)
    from .geodesic import integrate_geodesic
    probe = integrate_geodesic(chart, ray.base, ray.direction,
                               cfg.schedule[-1], dt=cfg.dt,
                               clip_domain=False)
    pts = [tuple(probe.point_at(t)) for t in cfg.schedule]
    fld, rep = horofunction_field(chart, pts, tuple(ray.base),
                                  cauchy_tol=cfg.cauchy_tol)
    out = _save(fld, args.out, cfg.out_format)
    print(f"horofunction along {len(pts)} escaping points on "
          f"{cfg.chart_kind}. " + _field_summary(fld) + " "
          + _conv_summary(rep)
          + (f" Written to {out}." if out else ""))
    return EXIT_OK


def _cmd_dl(cfg, args):
    chart = cfg.make_chart()
    if not cfg.circles:
        raise ConfigError("dl needs circle objects as the escaping sets")
    if "base" not in cfg.points:
        raise ConfigError("dl needs a point named 'base'")
    sets = [SourceSet.from_circle(c[:2], c[2])
            for c in cfg.circles.values()]
    fld, rep = dl_field(chart, sets, cfg.points["base"],
                        cauchy_tol=cfg.cauchy_tol)
    out = _save(fld, args.out, cfg.out_format)
    print(f"dl field of {len(sets)} escaping circles on {cfg.chart_kind}. "
          + _field_summary(fld) + " " + _conv_summary(rep)
          + (f" Written to {out}." if out else ""))
    return EXIT_OK


def _build_bundle(cfg, chart, name):
    base, v, horizon = _need(cfg.lines, name, "line")
    line = line_spec(chart, base, v, horizon=horizon)
    return build_line_fields(chart, line, cfg.truncation_schedule(),
                             dt=cfg.dt)


def _cmd_barrier(cfg, args):
    chart = cfg.make_chart()
    lf = _build_bundle(cfg, chart, args.line)
    bf = lf.barrier
    mask, rep = zero_set(chart, bf, zero_tol=cfg.zero_tol,
                         seed=cfg.seed)
    out = _save(bf.field, args.out, cfg.out_format)
    print(f"barrier of line {args.line} on {cfg.chart_kind}. "
          + _field_summary(bf.field)
          + f" Zero set: {mask.count} cells at tol {mask.tol:.4f}; "
          + rep.summary() + (f" Written to {out}." if out else ""))
    return EXIT_OK if rep.passed else EXIT_FAIL


def _cmd_singular(cfg, args):
    chart = cfg.make_chart()
    base, v, horizon = _need(cfg.rays, args.ray, "ray")
    ray = ray_spec(chart, base, v, horizon=horizon)
    fld, _ = busemann_field(chart, ray, cfg.truncation_schedule(), dt=cfg.dt)
    sing = singular_set(chart, fld, jump_threshold=cfg.jump_threshold)
    out = None
    if args.out:
        mask_fld = fld.with_values(sing.marked.astype(float), tag="singular")
        out = _save(mask_fld, args.out, cfg.out_format)
    print(f"singular mask of busemann field of ray {args.ray} on "
          f"{cfg.chart_kind}: {sing.count} marked cells "
          f"(jump threshold {cfg.jump_threshold})."
          + (f" Written to {out}." if out else ""))
    return EXIT_OK


def _cmd_relate(cfg, args):
    chart = cfg.make_chart()
    cand = _build_bundle(cfg, chart, args.candidate)
    ref = _build_bundle(cfg, chart, args.reference)
    if args.relation == "precedes":
        verdict = precedes(chart, cand.line, ref, zero_tol=cfg.zero_tol)
    else:
        verdict = equivalent(chart, cand, ref)
    holds = "true" if verdict.holds else "false"
    print(f"relation {args.relation}({args.candidate}, {args.reference}) "
          f"on {cfg.chart_kind}: holds: {holds}; evidence: "
          + "; ".join(f"{k}={v}" for k, v in sorted(verdict.evidence.items())
                      if np.isscalar(v)))
    if args.relation == "equivalent" and not verdict.evidence.get(
            "routes_agree", True):
        print("warning: decision routes disagree")
        return EXIT_FAIL
    return EXIT_OK


def _cmd_classify(cfg, args):
    chart = cfg.make_chart()
    names = sorted(cfg.lines)
    if not names:
        raise ConfigError("no line objects to classify")
    bundles = [_build_bundle(cfg, chart, n) for n in names]
    groups, _ = classify_lines(chart, bundles)
    parts = [" ".join(names[i] for i in sorted(g)) for g in groups]
    print(f"{len(names)} lines on {cfg.chart_kind} fall into "
          f"{len(groups)} equivalence classes: " + " | ".join(parts))
    return EXIT_OK


def _cmd_verify(cfg, args):
    vcfg = default_config(cfg.chart_kind, suites=cfg.suites)
    vcfg = replace(vcfg, seed=cfg.seed)
    report = run_suite(vcfg)
    text_path = os.path.join(cfg.out_dir, cfg.report_base + ".txt")
    csv_path = os.path.join(cfg.out_dir, cfg.report_base + ".csv")
    write_report(report, text_path, csv_path)
    n_pass = sum(r.status == "PASS" for r in report.records)
    n_fail = sum(r.status == "FAIL" for r in report.records)
    n_err = sum(r.status == "ERROR" for r in report.records)
    print(f"verification of {cfg.chart_kind}: {n_pass} passed, {n_fail} "
          f"failed, {n_err} errors over {len(report.records)} checks; "
          f"report in {text_path} and {csv_path}.")
    if n_err:
        return EXIT_SOLVER
    return EXIT_OK if report.overall_pass else EXIT_FAIL


def _cmd_export(cfg, args):
    if not args.infile or not args.out:
        raise ConfigError("export needs --in and --out")
    fld = load_field_csv(args.infile)
    if args.out.endswith(".pgm"):
        save_field_pgm(fld, args.out)
    else:
        save_field_csv(fld, args.out)
    print(f"re-exported {args.infile} to {args.out}. " + _field_summary(fld))
    return EXIT_OK


_COMMANDS = {
    "distance": _cmd_distance,
    "busemann": _cmd_busemann,
    "horo": _cmd_horo,
    "dl": _cmd_dl,
    "barrier": _cmd_barrier,
    "singular": _cmd_singular,
    "relate": _cmd_relate,
    "classify": _cmd_classify,
    "verify": _cmd_verify,
    "export": _cmd_export,
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="busefield",
        description="distance, Busemann, and barrier fields on metric charts")
    sub = parser.add_subparsers(dest="command")
    for name in _COMMANDS:
        p = sub.add_parser(name)
        if name != "export":
            p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        if name in ("busemann", "horo", "singular"):
            p.add_argument("--ray", default=None)
        if name == "distance":
            p.add_argument("--source", default=None)
        if name == "barrier":
            p.add_argument("--line", default=None)
        if name == "relate":
            p.add_argument("--candidate", required=True)
            p.add_argument("--reference", required=True)
            p.add_argument("--relation", required=True,
                           choices=("precedes", "equivalent"))
        if name == "export":
            p.add_argument("--in", dest="infile", required=True)
            p.add_argument("--config", default=None)
    return parser


def dispatch(argv=None):
    """Run one subcommand; returns the process exit status."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        if getattr(args, "config", None):
            cfg = parse_config(args.config)
        elif args.command == "export":
            cfg = ExperimentConfig(chart_kind="euclidean", bounds=None,
                                   resolution=None)
        else:
            raise ConfigError("a --config file is required")
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, InconsistencyError) as exc:
        print(f"solver error in {args.command}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except BusefieldError as exc:
        print(f"error in {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
