"""Property-suite orchestration: runs named claim checks across charts.

Each claim in the registry is a quantitative statement about the fields the
package produces (unit-gradient residuals, barrier invariants, relation
consistency, closed-form agreement).  ``run_suite`` executes the enabled
suites deterministically and emits one record per claim per chart per
resolution; records carry PASS / FAIL / ERROR status so that a property
violation is distinguishable from a solver breakdown.
"""

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .barrier import (build_line_fields, barrier_match_check, classify_lines,
                      coray_bound_check, equivalent, line_sum_test, precedes,
                      pseudo_distance, quad_bound_constant, zero_set)
from .busemann import (TruncationSchedule, busemann_field, dl_field,
                       horofunction_field, semiconcavity_constant,
                       singular_set, superdifferential)
from .eikonal import SourceSet, eikonal_residual, solve_distance
from .errors import BusefieldError, ValidationError
from .geodesic import line_spec, ray_spec, trace_coray
from .metric import (cylinder_chart, euclidean_chart, half_plane_chart,
                     paraboloid_chart)

# ---------------------------------------------------------------------------
# claim registry (data, not code)

@dataclass(frozen=True)
class ClaimSpec:
    """One verifiable claim: stable id, statement, owning suite, chart kinds."""

    claim_id: str
    statement: str
    suite: str
    charts: tuple


REGISTRY = (
    ClaimSpec("distance_accuracy",
              "max distance-field error against the closed form is O(h)",
              "distance", ("euclidean", "half_plane", "cylinder")),
    ClaimSpec("distance_convergence",
              "fitted convergence slope lies in [0.7, 1.3]",
              "distance", ("euclidean", "half_plane", "cylinder")),
    ClaimSpec("distance_spot_value",
              "spot distance matches the arccosh closed form within 3h",
              "distance", ("half_plane",)),
    ClaimSpec("busemann_closed_form",
              "Busemann field matches its closed form within tolerance",
              "busemann", ("euclidean", "half_plane", "cylinder")),
    ClaimSpec("eikonal_unit_gradient",
              "median unit-gradient residual off the singular mask <= 5h",
              "busemann", ("euclidean", "half_plane", "cylinder")),
    ClaimSpec("truncation_monotone",
              "truncation iterates never increase by more than 3h",
              "busemann", ("euclidean", "half_plane", "cylinder")),
    ClaimSpec("busemann_lipschitz",
              "|b(p) - b(q)| <= d(p, q) + 3h on sampled pairs",
              "busemann", ("euclidean", "half_plane", "cylinder")),
    ClaimSpec("busemann_lower_bound",
              "b(x) >= -d(x, base) - 3h pointwise",
              "busemann", ("euclidean", "half_plane", "cylinder")),
    ClaimSpec("semiconcavity_bounded",
              "second-difference constant is finite and stable across "
              "the two finest resolutions",
              "busemann", ("euclidean",)),
    ClaimSpec("singular_empty_smooth",
              "a smooth Busemann field has an empty singular mask",
              "singular", ("euclidean",)),
    ClaimSpec("singular_collar",
              "singular mask confined to a 2-cell collar of the opposite "
              "meridian",
              "singular", ("paraboloid",)),
    ClaimSpec("singular_dual_backtrace",
              ">= 95% of marked cells yield two validated coray backtraces",
              "singular", ("paraboloid",)),
    ClaimSpec("barrier_nonneg",
              "B >= -3h on valid cells",
              "barrier", ("euclidean", "half_plane", "cylinder")),
    ClaimSpec("barrier_on_line",
              "|B| <= 3h along the line itself",
              "barrier", ("euclidean", "half_plane", "cylinder")),
    ClaimSpec("barrier_translation",
              "reparameterizing the line leaves the barrier unchanged to 6h",
              "barrier", ("euclidean", "half_plane", "cylinder")),
    ClaimSpec("barrier_reversal",
              "reversing orientation leaves the barrier unchanged to 6h",
              "barrier", ("euclidean", "half_plane", "cylinder")),
    ClaimSpec("barrier_quad_bound",
              "B <= C d(x, line)^2 with a bounded fitted constant",
              "barrier", ("euclidean", "half_plane", "cylinder")),
    ClaimSpec("zero_set_foliation",
              "a line glues through >= 95% of traced zero-set cells",
              "barrier", ("euclidean", "cylinder")),
    ClaimSpec("zero_collar",
              "zero set confined to the closed-form collar of the line",
              "barrier", ("half_plane",)),
    ClaimSpec("semiconcavity_sum",
              "barrier constant bounded by the sum of its two parts + 6h",
              "barrier", ("euclidean", "half_plane", "cylinder")),
    ClaimSpec("relation_transitivity",
              "precedes is transitive over the generated line family",
              "relations", ("euclidean", "half_plane", "cylinder")),
    ClaimSpec("equivalence_routes",
              "oscillation and mutual-precedes equivalence tests agree on "
              "every pair",
              "relations", ("euclidean", "half_plane", "cylinder")),
    ClaimSpec("equivalence_classes",
              "equivalence classes of the line family match the expected "
              "partition",
              "relations", ("euclidean", "half_plane", "cylinder")),
    ClaimSpec("precedes_monotonicity",
              "when a precedes b, B_b <= B_a + 6h pointwise",
              "relations", ("euclidean", "half_plane", "cylinder")),
    ClaimSpec("line_sum_consistency",
              "field-sum and gluing tests agree on whether two rays form a "
              "line",
              "relations", ("euclidean", "half_plane", "cylinder",
                            "paraboloid")),
    ClaimSpec("pseudo_distance_consistency",
              "line pseudo-distance <= 6h exactly for equivalent pairs",
              "relations", ("half_plane", "cylinder")),
    ClaimSpec("coray_slope",
              "traced corays decrease the Busemann field with unit slope",
              "coray", ("euclidean", "half_plane", "paraboloid")),
    ClaimSpec("coray_busemann_bound",
              "base-shifted Busemann field dominated by the coray's field "
              "up to 6h",
              "coray", ("euclidean", "half_plane", "paraboloid")),
    ClaimSpec("horo_matches_busemann",
              "horofunction along escaping ray points matches the Busemann "
              "field to 4h",
              "horo_dl", ("euclidean",)),
    ClaimSpec("dl_closed_form",
              "distance-like field of escaping circles reproduces -|x| to "
              "3h outside the origin collar",
              "horo_dl", ("euclidean",)),
    ClaimSpec("horo_dl_unit_gradient",
              "horofunction and dl fields satisfy the unit-gradient "
              "residual bound",
              "horo_dl", ("euclidean",)),
)

ALL_SUITES = ("distance", "busemann", "singular", "barrier", "relations",
              "coray", "horo_dl")


def claims_for(chart_kind, suites):
    return tuple(c for c in REGISTRY
                 if chart_kind in c.charts and c.suite in suites)


# ---------------------------------------------------------------------------
# configuration and report types

@dataclass
class SuiteConfig:
    """Deterministic description of one verification run."""

    chart_kind: str
    suites: tuple = ALL_SUITES
    distance_resolutions: tuple = (65, 97, 129)
    field_resolutions: tuple = (65, 97)
    line_resolution: tuple = (65, 65)
    schedule: TruncationSchedule = None
    seed: int = 0
    corrupt_fields: bool = False

    def __post_init__(self):
        if self.chart_kind not in ("euclidean", "half_plane", "cylinder",
                                   "paraboloid"):
            raise ValidationError(f"unknown chart kind {self.chart_kind!r}")
        bad = [s for s in self.suites if s not in ALL_SUITES]
        if bad:
            raise ValidationError(f"unknown suites {bad}")
        if list(self.distance_resolutions) != sorted(
                set(self.distance_resolutions)):
            raise ValidationError("resolutions must be strictly increasing")


def default_config(chart_kind, suites=None):
    """Tuned per-chart configuration: schedules and grids known to converge."""
    if chart_kind == "euclidean":
        cfg = SuiteConfig(chart_kind, distance_resolutions=(129, 257, 513),
                          field_resolutions=(65, 97),
                          line_resolution=(65, 65),
                          schedule=TruncationSchedule((12.0, 18.0, 24.0), 0.5))
    elif chart_kind == "half_plane":
        cfg = SuiteConfig(chart_kind, distance_resolutions=(129, 257, 513),
                          field_resolutions=(65, 97),
                          line_resolution=(97, 97),
                          schedule=TruncationSchedule((2.0, 3.0, 4.0), 0.5))
    elif chart_kind == "cylinder":
        cfg = SuiteConfig(chart_kind, distance_resolutions=(128, 256, 512),
                          field_resolutions=(64, 96),
                          line_resolution=(96, 96),
                          schedule=TruncationSchedule((24.0, 36.0, 48.0), 0.5))
    else:
        cfg = SuiteConfig(chart_kind, suites=("singular", "relations",
                                              "coray"),
                          distance_resolutions=(65,),
                          field_resolutions=(65,),
                          line_resolution=(65, 65),
                          schedule=TruncationSchedule((12.0, 18.0, 24.0), 0.5))
    if suites is not None:
        cfg = replace(cfg, suites=tuple(suites))
    return cfg


@dataclass
class CheckRecord:
    claim_id: str
    chart: str
    resolution: str
    status: str            # PASS | FAIL | ERROR | INFO
    measured: float
    tolerance: float
    runtime: float
    note: str = ""


@dataclass
class SuiteReport:
    config: SuiteConfig
    records: list = field(default_factory=list)

    @property
    def missing_claims(self):
        seen = {r.claim_id for r in self.records}
        want = claims_for(self.config.chart_kind, self.config.suites)
        return [c.claim_id for c in want if c.claim_id not in seen]

    @property
    def overall_pass(self):
        if self.missing_claims:
            return False
        return all(r.status in ("PASS", "INFO") for r in self.records)

    def canonical_text(self):
        """Deterministic report body: no timestamps, no runtimes."""
        lines = [f"chart: {self.config.chart_kind}",
                 f"suites: {','.join(self.config.suites)}",
                 f"seed: {self.config.seed}"]
        for r in self.records:
            lines.append(f"{r.claim_id} [{r.chart} {r.resolution}] "
                         f"{r.status} measured={r.measured:.6e} "
                         f"tolerance={r.tolerance:.6e} {r.note}".rstrip())
        for m in self.missing_claims:
            lines.append(f"{m} MISSING")
        lines.append(f"overall: {'PASS' if self.overall_pass else 'FAIL'}")
        return "\n".join(lines) + "\n"

    def to_text(self):
        stamp = time.strftime("%Y-%m-%dT%H:%M:%S")
        head = f"# generated: {stamp}\n"
        timing = "".join(f"# runtime {r.claim_id}: {r.runtime:.3f}s\n"
                         for r in self.records)
        return head + self.canonical_text() + timing

    def csv_rows(self):
        rows = ["claim_id,chart,resolution,status,measured,tolerance,"
                "runtime,note"]
        for r in self.records:
            note = r.note.replace(",", ";")
            rows.append(f"{r.claim_id},{r.chart},{r.resolution},{r.status},"
                        f"{r.measured:.17g},{r.tolerance:.17g},"
                        f"{r.runtime:.3f},{note}")
        return rows


def write_report(report, text_path=None, csv_path=None):
    if text_path:
        with open(text_path, "w") as f:
            f.write(report.to_text())
    if csv_path:
        with open(csv_path, "w") as f:
            f.write("\n".join(report.csv_rows()) + "\n")


# ---------------------------------------------------------------------------
# chart construction and closed-form oracles

def make_chart(kind, resolution):
    if isinstance(resolution, int):
        resolution = (resolution, resolution)
    if kind == "euclidean":
        return euclidean_chart(resolution=resolution)
    if kind == "half_plane":
        return half_plane_chart(resolution=resolution)
    if kind == "cylinder":
        return cylinder_chart(resolution=resolution)
    if kind == "paraboloid":
        return paraboloid_chart(bounds=(-2.0, 2.0, -2.0, 2.0),
                                resolution=resolution)
    raise ValidationError(f"unknown chart kind {kind!r}")


def distance_oracle(kind, source):
    """Closed-form distance-from-point evaluator on grid meshes."""
    sx, sy = source

    def euclid(X, Y):
        return np.hypot(X - sx, Y - sy)

    def half_plane(X, Y):
        q = ((X - sx) ** 2 + (Y - sy) ** 2) / (2.0 * Y * sy)
        return np.arccosh(1.0 + q)

    def cylinder(X, Y):
        dx = np.abs(X - sx)
        dx = np.minimum(dx, 2.0 * math.pi - dx)
        return np.hypot(dx, Y - sy)

    return {"euclidean": euclid, "half_plane": half_plane,
            "cylinder": cylinder}[kind]


# ---------------------------------------------------------------------------
# runner

class _Ctx:
    """Per-run mutable state: config, deterministic rng, shared caches."""

    def __init__(self, config):
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.cache = {}
        self.records = []

    def check(self, claim_id, chart_label, res_label, fn):
        """Run one check; fn returns (passed, measured, tolerance, note)."""
        t0 = time.time()
        try:
            passed, measured, tol, note = fn()
            status = "PASS" if passed else "FAIL"
        except BusefieldError as exc:
            status, measured, tol = "ERROR", math.nan, math.nan
            note = f"{type(exc).__name__}: {exc}"
        self.records.append(CheckRecord(claim_id, chart_label, res_label,
                                        status, float(measured), float(tol),
                                        time.time() - t0, note))


def _res_label(chart):
    return f"{chart.resolution[0]}x{chart.resolution[1]}"


def _corrupt(field_obj, rng):
    """Additive off-grid bump: breaks the unit-gradient and Lipschitz bounds."""
    xs, ys = field_obj.grid_axes()
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    cx = float(xs[len(xs) // 3])
    cy = float(ys[len(ys) // 2])
    width = 4.0 * max(field_obj.spacing)
    bump = 0.8 * np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / width ** 2)
    # global wiggle: pushes the gradient residual up on most cells
    wx = 8.0 * math.pi / max(xs[-1] - xs[0], 1e-12)
    wy = 8.0 * math.pi / max(ys[-1] - ys[0], 1e-12)
    bump += 0.15 * np.sin(wx * X) * np.cos(wy * Y)
    return field_obj.with_values(field_obj.values + bump)


# -- distance suite ---------------------------------------------------------

def _suite_distance(ctx):
    kind = ctx.config.chart_kind
    if kind == "paraboloid":
        return
    source = {"euclidean": (0.0, 0.0), "half_plane": (0.0, 1.0),
              "cylinder": (math.pi, 0.0)}[kind]
    oracle = distance_oracle(kind, source)
    errs, hs = [], []
    for n in ctx.config.distance_resolutions:
        chart = make_chart(kind, n)
        fld = solve_distance(chart, SourceSet.from_points([source]))
        xs, ys = chart.grid_axes()
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        err = np.abs(fld.values - oracle(X, Y))
        errs.append(float(np.max(err[fld.valid_mask])))
        hs.append(chart.h_max)
        ctx.check("distance_accuracy", kind, f"{n}x{n}",
                  lambda e=errs[-1], h=hs[-1]:
                  (e <= 3.0 * h, e / h, 3.0, f"err={e:.2e}"))
    slope = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    ctx.check("distance_convergence", kind, "fit",
              lambda: (0.7 <= slope <= 1.3, slope, 1.3,
                       f"errors={['%.2e' % e for e in errs]}"))
    if kind == "half_plane":
        n = ctx.config.distance_resolutions[-1]
        # endpoint (1, 1) must sit clear of the masked boundary margin
        chart = half_plane_chart(bounds=(-1.5, 1.5, 0.5, 3.0),
                                 resolution=(n, n))
        fld = solve_distance(chart, SourceSet.from_points([(0.0, 1.0)]))
        got = fld.value_at((1.0, 1.0))
        want = math.acosh(1.5)
        ctx.check("distance_spot_value", kind, f"{n}x{n}",
                  lambda: (abs(got - want) <= 3.0 * chart.h_max,
                           abs(got - want), 3.0 * chart.h_max,
                           f"d((0,1),(1,1))={got:.4f} vs {want:.4f}"))


# -- busemann suite ---------------------------------------------------------

def _ray_setup(kind):
    """Reference ray and its closed-form Busemann oracle per chart kind."""
    if kind == "euclidean":
        ang = math.radians(35.8)
        v = (math.cos(ang), math.sin(ang))
        sched = TruncationSchedule((32.0, 48.0, 64.0), 0.5)
        oracle = lambda X, Y: -(X * v[0] + Y * v[1])
        return (0.0, 0.0), v, sched, oracle, 2.0
    if kind == "half_plane":
        sched = TruncationSchedule((2.0, 3.0, 4.0), 0.5)
        oracle = lambda X, Y: -np.log(Y)
        return (0.0, 1.0), (0.0, 1.0), sched, oracle, 3.0
    if kind == "cylinder":
        sched = TruncationSchedule((24.0, 36.0, 48.0), 0.5)
        oracle = lambda X, Y: -Y
        return (math.pi, 0.0), (0.0, 1.0), sched, oracle, 4.0
    raise ValidationError(f"no reference ray for chart kind {kind!r}")


def _busemann_for(ctx, kind, n):
    key = ("busemann", kind, n)
    if key not in ctx.cache:
        base, v, sched, oracle, tol_h = _ray_setup(kind)
        chart = make_chart(kind, n)
        ray = ray_spec(chart, base, v, horizon=sched.t_values[-1] + 1.0)
        fld, rep = busemann_field(chart, ray, sched, dt=0.02)
        if ctx.config.corrupt_fields:
            fld = _corrupt(fld, ctx.rng)
        ctx.cache[key] = (chart, ray, fld, rep, oracle, tol_h)
    return ctx.cache[key]


def _suite_busemann(ctx):
    kind = ctx.config.chart_kind
    if kind == "paraboloid":
        return
    sc_values = []
    for n in ctx.config.field_resolutions:
        chart, ray, fld, rep, oracle, tol_h = _busemann_for(ctx, kind, n)
        h = chart.h_max
        label = _res_label(chart)
        xs, ys = chart.grid_axes()
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        want = oracle(X, Y)
        # normalize: closed forms are fixed up to the additive constant
        shift = float(np.median((fld.values - want)[fld.valid_mask]))
        err = np.abs(fld.values - want - shift)
        worst = float(np.max(err[fld.valid_mask]))
        ctx.check("busemann_closed_form", kind, label,
                  lambda w=worst, t=tol_h * h: (w <= t, w, t, ""))
        sing = singular_set(chart, fld)
        stats = eikonal_residual(chart, fld, exclude=sing.marked)
        ctx.check("eikonal_unit_gradient", kind, label,
                  lambda m=stats["median"], t=5.0 * h: (m <= t, m, t, ""))
        mono = rep["monotonicity_worst"]
        ctx.check("truncation_monotone", kind, label,
                  lambda m=mono, t=3.0 * h: (m <= t, m, t, ""))
        ctx.check("busemann_lipschitz", kind, label,
                  lambda c=chart, f=fld, t=3.0 * h:
                  _lipschitz_check(ctx, c, f, t))
        ctx.check("busemann_lower_bound", kind, label,
                  lambda c=chart, f=fld, r=ray, t=3.0 * h:
                  _lower_bound_check(c, f, r, t))
        if kind == "euclidean":
            x0, x1, y0, y1 = chart.bounds
            m = 6 * h
            region = (x0 + m, x1 - m, y0 + m, y1 - m)
            sc_values.append(semiconcavity_constant(fld, region))
    if kind == "euclidean" and len(sc_values) >= 2:
        a, b = sc_values[-2], sc_values[-1]
        ratio = max(a, b) / max(min(a, b), 1e-12)
        ctx.check("semiconcavity_bounded", kind, "pair",
                  lambda: (np.isfinite(a) and np.isfinite(b) and ratio <= 2.0,
                           ratio, 2.0, f"constants={a:.3f},{b:.3f}"))


def _lipschitz_check(ctx, chart, fld, tol):
    nx, ny = fld.shape
    rng = np.random.default_rng(ctx.config.seed + 17)
    worst = 0.0
    for _ in range(3):
        i = int(rng.integers(nx // 4, 3 * nx // 4))
        j = int(rng.integers(ny // 4, 3 * ny // 4))
        p = fld.cell_center(i, j)
        if not fld.valid_mask[i, j]:
            continue
        dist = solve_distance(chart, SourceSet.from_points([p]))
        both = fld.valid_mask & dist.valid_mask
        gap = np.abs(fld.values - fld.values[i, j]) - dist.values
        worst = max(worst, float(np.max(gap[both])))
    return worst <= tol, worst, tol, ""


def _lower_bound_check(chart, fld, ray, tol):
    dist = solve_distance(chart, SourceSet.from_points([tuple(ray.base)]))
    both = fld.valid_mask & dist.valid_mask
    gap = float(np.max((-dist.values - fld.values)[both]))
    return gap <= tol, gap, tol, ""


# -- singular suite ---------------------------------------------------------

def _suite_singular(ctx):
    kind = ctx.config.chart_kind
    if kind == "euclidean":
        n = ctx.config.field_resolutions[-1]
        chart, _, fld, _, _, _ = _busemann_for(ctx, kind, n)
        sing = singular_set(chart, fld)
        ctx.check("singular_empty_smooth", kind, _res_label(chart),
                  lambda: (sing.count == 0, float(sing.count), 0.0, ""))
        return
    if kind != "paraboloid":
        return
    n = ctx.config.field_resolutions[-1]
    chart = make_chart(kind, n)
    h = chart.h_max
    sched = ctx.config.schedule
    ray = ray_spec(chart, (0.0, 0.0), (1.0, 0.0),
                   horizon=sched.t_values[-1] + 1.0)
    fld, _ = busemann_field(chart, ray, sched, dt=0.02)
    sing = singular_set(chart, fld)
    cells = np.argwhere(sing.marked)
    xs, ys = chart.grid_axes()
    hx, hy = chart.spacing
    off = 0.0
    for i, j in cells:
        # opposite meridian: the negative x axis in this chart
        off = max(off, abs(ys[j]) if xs[i] <= 0 else math.hypot(xs[i], ys[j]))
    ctx.check("singular_collar", kind, _res_label(chart),
              lambda: (len(cells) > 0 and off <= 2.0 * max(hx, hy) + 1e-12,
                       off, 2.0 * max(hx, hy), f"marked={len(cells)}"))

    def dual_traces():
        good = total = 0
        for i, j in cells:
            p = (float(xs[i]), float(ys[j]))
            if abs(p[0]) < 4 * hx and abs(p[1]) < 4 * hy:
                continue       # the ray's own base region
            total += 1
            sup = superdifferential(chart, fld, p, radius=5.2 * h)
            grads = sup.representatives
            if len(grads) < 2:
                continue
            try:
                trace_coray(chart, fld, p, horizon=1.2, gradient=grads[0])
                trace_coray(chart, fld, p, horizon=1.2, gradient=grads[1])
                good += 1
            except BusefieldError:
                continue
        frac = good / total if total else 0.0
        return frac >= 0.95, frac, 0.95, f"{good}/{total}"

    ctx.check("singular_dual_backtrace", kind, _res_label(chart), dual_traces)


# -- line families ----------------------------------------------------------

def _line_family(ctx):
    """Chart, bundles, and expected class labels for the relation suites."""
    kind = ctx.config.chart_kind
    key = ("family", kind)
    if key in ctx.cache:
        return ctx.cache[key]
    sched = ctx.config.schedule
    chart = make_chart(kind, ctx.config.line_resolution)
    horizon = sched.t_values[-1] + 2.0
    if kind == "euclidean":
        specs = [((0.0, 0.0), (1.0, 0.0)), ((0.0, 0.5), (1.0, 0.0)),
                 ((0.0, -0.5), (1.0, 0.0)), ((0.0, 0.0), (-1.0, 0.0)),
                 ((0.0, 0.0), (0.0, 1.0)), ((0.5, 0.0), (0.0, 1.0))]
        labels = [0, 0, 0, 1, 2, 2]
    elif kind == "half_plane":
        specs = [((x0, 1.0), (0.0, 1.0))
                 for x0 in (-0.6, -0.3, 0.0, 0.3, 0.6)]
        specs.append(((0.0, 1.0), (0.0, -1.0)))
        labels = [0, 1, 2, 3, 4, 5]
        horizon = 8.0
    elif kind == "cylinder":
        specs = [((k * math.pi / 3.0, 0.0), (0.0, 1.0)) for k in range(6)]
        labels = [0] * 6
    else:
        raise ValidationError("no line family on this chart")
    bundles = []
    for base, v in specs:
        line = line_spec(chart, base, v, horizon=horizon)
        bundles.append(build_line_fields(chart, line, sched, dt=0.02))
    ctx.cache[key] = (chart, bundles, labels)
    return ctx.cache[key]


# -- barrier suite ----------------------------------------------------------

def _suite_barrier(ctx):
    kind = ctx.config.chart_kind
    if kind == "paraboloid":
        return
    chart, bundles, _ = _line_family(ctx)
    h = chart.h_max
    label = _res_label(chart)
    ref = bundles[2 if kind == "half_plane" else 0]
    bf = ref.barrier

    vals = bf.field.values[bf.field.valid_mask]
    ctx.check("barrier_nonneg", kind, label,
              lambda: (float(vals.min()) >= -3.0 * h, float(-vals.min()),
                       3.0 * h, ""))
    on_line = [abs(bf.field.value_at(p))
               for p in bf.line_path.points[::40]
               if bf.field.is_valid_at(p)]
    worst_line = max(on_line)
    ctx.check("barrier_on_line", kind, label,
              lambda: (worst_line <= 3.0 * h, worst_line, 3.0 * h, ""))

    # shifts stay strictly inside the window so the shifted ray can integrate
    taus = {"euclidean": (1.0, -1.0, 1.5, -1.5),
            "cylinder": (1.0, -1.0, 1.5, -1.5),
            "half_plane": (0.5, -0.5, 1.0)}[kind]

    def translation():
        worst = 0.0
        for tau in taus:
            p = _point_along(ref, tau)
            line_tau = line_spec(chart, p, tuple(ref.line.plus.direction),
                                 horizon=ref.line.plus.horizon)
            lf_tau = build_line_fields(chart, line_tau, ctx.config.schedule,
                                       dt=0.02)
            chk = barrier_match_check(bf, lf_tau.barrier, tol=6.0 * h)
            worst = max(worst, chk.worst_violation)
            if not chk.passed:
                return False, worst, 6.0 * h, f"tau={tau}"
        return True, worst, 6.0 * h, f"taus={taus}"

    ctx.check("barrier_translation", kind, label, translation)

    def reversal():
        line_rev = ref.line.reversed()
        lf_rev = build_line_fields(chart, line_rev, ctx.config.schedule,
                                   dt=0.02)
        chk = barrier_match_check(bf, lf_rev.barrier, tol=6.0 * h)
        return chk.passed, chk.worst_violation, 6.0 * h, ""

    ctx.check("barrier_reversal", kind, label, reversal)

    def quad_bound():
        if kind == "half_plane":
            region = (-0.5, 0.5, 1.0, 2.0)
            C, info = quad_bound_constant(chart, bf, region)
            return abs(C - 1.0) <= 0.15, C, 0.15, str(info.get("cell"))
        x0, x1, y0, y1 = chart.bounds
        pad = 8 * h
        region = (x0 + pad, x1 - pad, y0 + pad, y1 - pad)
        C, info = quad_bound_constant(chart, bf, region, d_min_cells=12)
        return C <= 1.0, C, 1.0, "flat chart: constant is solver noise"

    ctx.check("barrier_quad_bound", kind, label, quad_bound)

    if kind in ("euclidean", "cylinder"):
        def foliation():
            _, rep = zero_set(chart, bf, seed=ctx.config.seed)
            frac = rep.details.get("fraction", 0.0)
            return rep.passed, frac, 0.95, (
                f"glued {rep.details.get('glued')}/"
                f"{rep.details.get('checked')}")
        ctx.check("zero_set_foliation", kind, label, foliation)
    else:
        def collar():
            mask, _ = zero_set(chart, bf, check_foliation=False)
            xs, ys = chart.grid_axes()
            X, Y = np.meshgrid(xs, ys, indexing="ij")
            exact = np.log(1.0 + (X / Y) ** 2)
            worst = float(np.max(exact[mask.marked]))
            tol = mask.tol + 3.0 * h
            return worst <= tol, worst, tol, f"marked={mask.count}"
        ctx.check("zero_collar", kind, label, collar)

    def sum_closure():
        x0, x1, y0, y1 = chart.bounds
        pad = 6 * h
        region = (x0 + pad, x1 - pad, y0 + pad, y1 - pad)
        c_plus = semiconcavity_constant(ref.b_plus, region)
        c_minus = semiconcavity_constant(ref.b_minus, region)
        c_sum = semiconcavity_constant(bf.field, region)
        gap = c_sum - (c_plus + c_minus)
        return gap <= 6.0 * h, gap, 6.0 * h, (
            f"B={c_sum:.3f} parts={c_plus:.3f}+{c_minus:.3f}")

    ctx.check("semiconcavity_sum", kind, label, sum_closure)


def _point_along(bundle, tau):
    """Chart point at parameter tau along the bundle's oriented line."""
    path = bundle.barrier.line_path
    return tuple(path.point_at(tau))


# -- relations suite --------------------------------------------------------

def _suite_relations(ctx):
    kind = ctx.config.chart_kind
    if kind == "paraboloid":
        _paraboloid_line_sum(ctx)
        return
    chart, bundles, labels = _line_family(ctx)
    h = chart.h_max
    label = _res_label(chart)
    n = len(bundles)

    verdicts = {}
    agree = True
    worst_pair = ""
    for i in range(n):
        for j in range(i + 1, n):
            v = equivalent(chart, bundles[i], bundles[j])
            verdicts[i, j] = v
            if not v.evidence.get("routes_agree", True):
                agree = False
                worst_pair = f"({i},{j})"
    ctx.check("equivalence_routes", kind, label,
              lambda: (agree, 0.0 if agree else 1.0, 0.0, worst_pair))

    groups, _ = classify_lines(chart, bundles)
    want_groups = sorted(sorted(g) for g in _partition(labels))
    got_groups = sorted(sorted(g) for g in groups)
    ctx.check("equivalence_classes", kind, label,
              lambda: (got_groups == want_groups, float(len(got_groups)),
                       float(len(want_groups)), f"classes={got_groups}"))

    P = {}
    for i in range(n):
        for j in range(n):
            if i != j:
                P[i, j] = precedes(chart, bundles[i].line, bundles[j]).holds
    bad = [(i, j, k) for i in range(n) for j in range(n) for k in range(n)
           if len({i, j, k}) == 3 and P[i, j] and P[j, k] and not P[i, k]]
    ctx.check("relation_transitivity", kind, label,
              lambda: (not bad, float(len(bad)), 0.0, f"violations={bad}"))

    def monotonicity():
        worst = 0.0
        pairs = [(i, j) for (i, j), holds in P.items() if holds]
        if not pairs:
            pairs = [(0, 0)]
        for i, j in pairs:
            Ba = bundles[i].barrier.field
            Bb = bundles[j].barrier.field
            both = Ba.valid_mask & Bb.valid_mask
            worst = max(worst, float(np.max((Bb.values - Ba.values)[both])))
        return worst <= 6.0 * h, worst, 6.0 * h, f"pairs={len(pairs)}"

    ctx.check("precedes_monotonicity", kind, label, monotonicity)

    def sum_cases():
        ref = bundles[2 if kind == "half_plane" else 0]
        pos = line_sum_test(chart, ref.line.plus, ref.line.minus,
                            ref.b_plus, ref.b_minus)
        if kind == "half_plane":
            sched = ctx.config.schedule
            r2 = ray_spec(chart, tuple(ref.line.base), (1.0, 0.0),
                          horizon=sched.t_values[-1] + 1.0)
            b2, _ = busemann_field(chart, r2, sched, dt=0.02)
            neg = line_sum_test(chart, ref.line.plus, r2, ref.b_plus, b2)
        else:
            same_dir = ray_spec(chart, tuple(ref.line.base),
                                tuple(ref.line.plus.direction),
                                horizon=ref.line.plus.horizon)
            neg = line_sum_test(chart, ref.line.plus, same_dir,
                                ref.b_plus, ref.b_plus)
        ok = (pos.passed and pos.details["field_says_line"]
              and neg.passed and not neg.details["field_says_line"])
        return ok, pos.details["min_sum"], 6.0 * h, (
            f"pos={pos.details['field_says_line']} "
            f"neg={neg.details['field_says_line']}")

    ctx.check("line_sum_consistency", kind, label, sum_cases)

    if kind in ("half_plane", "cylinder"):
        def pseudo():
            if kind == "half_plane":
                cases = [((2, 2), True), ((2, 4), False)]
            else:
                cases = [((0, 1), True), ((0, 0), True)]
            worst, note = 0.0, []
            for (i, j), is_eq in cases:
                d = pseudo_distance(bundles[i].line, bundles[j].line,
                                    bundles[i].barrier, bundles[j].barrier)
                small = d <= 6.0 * h
                note.append(f"d({i},{j})={d:.3f}")
                if small != is_eq:
                    return False, d, 6.0 * h, " ".join(note)
                worst = max(worst, d if is_eq else 0.0)
            return True, worst, 6.0 * h, " ".join(note)
        ctx.check("pseudo_distance_consistency", kind, label, pseudo)


def _partition(labels):
    groups = {}
    for idx, lab in enumerate(labels):
        groups.setdefault(lab, []).append(idx)
    return list(groups.values())


def _paraboloid_line_sum(ctx):
    chart = paraboloid_chart(bounds=(-3.5, 3.5, -3.5, 3.5),
                             resolution=(81, 81))
    h = chart.h_max
    sched = ctx.config.schedule
    r1 = ray_spec(chart, (0.0, 0.0), (1.0, 0.0), horizon=5.2)
    r2 = ray_spec(chart, (0.0, 0.0), (-1.0, 0.0), horizon=5.2)
    b1, _ = busemann_field(chart, r1, sched, dt=0.02)
    b2, _ = busemann_field(chart, r2, sched, dt=0.02)
    rep = line_sum_test(chart, r1, r2, b1, b2)
    ctx.check("line_sum_consistency", "paraboloid", _res_label(chart),
              lambda: (rep.passed and not rep.details["field_says_line"],
                       rep.details["min_sum"], 6.0 * h,
                       f"glue={rep.details['glue_says_line']}"))


# -- coray suite ------------------------------------------------------------

def _suite_coray(ctx):
    kind = ctx.config.chart_kind
    if kind == "cylinder":
        return
    if kind == "paraboloid":
        chart = make_chart(kind, ctx.config.field_resolutions[-1])
        sched = ctx.config.schedule
        base, v = (0.0, 0.0), (1.0, 0.0)
        starts = [(0.5, 0.8), (-0.2, 1.0)]
    else:
        base, v, sched, _, _ = _ray_setup(kind)
        chart = make_chart(kind, ctx.config.field_resolutions[-1])
        starts = {"euclidean": [(-0.8, 0.6), (0.5, -0.9)],
                  "half_plane": [(0.5, 1.0), (-0.5, 1.5), (0.3, 2.0)]}[kind]
    h = chart.h_max
    label = _res_label(chart)
    ray = ray_spec(chart, base, v, horizon=sched.t_values[-1] + 1.0)
    key = ("busemann", kind, chart.resolution[0])
    if key in ctx.cache:
        b_ray = ctx.cache[key][2]
    else:
        b_ray, _ = busemann_field(chart, ray, sched, dt=0.02)

    slope_defects, bound_worst = [], 0.0
    notes = []
    try:
        for p in starts:
            tr = trace_coray(chart, b_ray, p, horizon=1.5, dt=0.02)
            slope_defects.append(tr.slope_defect)
            d = np.asarray(tr.path.velocities[0], float)
            coray = ray_spec(chart, p, tuple(d),
                             horizon=sched.t_values[-1] + 1.0)
            b_coray, _ = busemann_field(chart, coray, sched, dt=0.02)
            chk = coray_bound_check(ray, coray, b_ray, b_coray, tol=6.0 * h)
            bound_worst = max(bound_worst, chk.worst_violation)
            notes.append(f"{p}:{chk.worst_violation:.3f}")
            if not chk.passed:
                ctx.check("coray_busemann_bound", kind, label,
                          lambda w=chk.worst_violation:
                          (False, w, 6.0 * h, f"start={p}"))
                break
        else:
            ctx.check("coray_busemann_bound", kind, label,
                      lambda: (True, bound_worst, 6.0 * h, " ".join(notes)))
        worst_slope = max(slope_defects)
        ctx.check("coray_slope", kind, label,
                  lambda: (worst_slope <= 0.05, worst_slope, 0.05,
                           f"{len(slope_defects)} corays"))
    except BusefieldError as exc:
        ctx.check("coray_slope", kind, label,
                  lambda: (_raise(exc)))


def _raise(exc):
    raise exc


# -- horofunction / dl suite ------------------------------------------------

def _suite_horo_dl(ctx):
    kind = ctx.config.chart_kind
    if kind != "euclidean":
        return
    n = ctx.config.field_resolutions[-1]
    chart, ray, b_fld, _, _, _ = _busemann_for(ctx, kind, n)
    h = chart.h_max
    label = _res_label(chart)
    base, v, sched, _, _ = _ray_setup(kind)
    pts = [(base[0] + t * v[0], base[1] + t * v[1])
           for t in sched.t_values]
    horo, _ = horofunction_field(chart, pts, base, cauchy_tol=0.5)

    def horo_match():
        both = horo.valid_mask & b_fld.valid_mask
        diff = horo.values - b_fld.values
        shift = float(np.median(diff[both]))
        worst = float(np.max(np.abs(diff - shift)[both]))
        return worst <= 4.0 * h, worst, 4.0 * h, ""

    ctx.check("horo_matches_busemann", kind, label, horo_match)

    circles = [SourceSet.from_circle((0.0, 0.0), r) for r in (8.0, 12.0, 16.0)]
    dl, _ = dl_field(chart, circles, (0.0, 0.0), cauchy_tol=0.5)

    def dl_match():
        xs, ys = chart.grid_axes()
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        want = -np.hypot(X, Y)
        keep = dl.valid_mask & (np.hypot(X, Y) > 2.0 * h)
        worst = float(np.max(np.abs(dl.values - want)[keep]))
        return worst <= 3.0 * h, worst, 3.0 * h, ""

    ctx.check("dl_closed_form", kind, label, dl_match)

    def residuals():
        worst = 0.0
        for f in (horo, dl):
            sing = singular_set(chart, f)
            stats = eikonal_residual(chart, f, exclude=sing.marked)
            worst = max(worst, stats["median"])
        return worst <= 5.0 * h, worst, 5.0 * h, ""

    ctx.check("horo_dl_unit_gradient", kind, label, residuals)


# ---------------------------------------------------------------------------

_SUITE_FNS = {
    "distance": _suite_distance,
    "busemann": _suite_busemann,
    "singular": _suite_singular,
    "barrier": _suite_barrier,
    "relations": _suite_relations,
    "coray": _suite_coray,
    "horo_dl": _suite_horo_dl,
}


def run_suite(config):
    """Execute the enabled suites for one chart kind; deterministic."""
    ctx = _Ctx(config)
    for name in config.suites:
        try:
            _SUITE_FNS[name](ctx)
        except BusefieldError as exc:
            for claim in claims_for(config.chart_kind, (name,)):
                if claim.claim_id not in {r.claim_id for r in ctx.records}:
                    ctx.records.append(CheckRecord(
                        claim.claim_id, config.chart_kind, "-", "ERROR",
                        math.nan, math.nan, 0.0,
                        f"{type(exc).__name__}: {exc}"))
    return SuiteReport(config=config, records=ctx.records)


def run_all(chart_kinds=("euclidean", "half_plane", "cylinder",
                         "paraboloid"), seed=0):
    """Full matrix: one report per chart kind, plus a combined pass flag."""
    reports = [run_suite(replace(default_config(k), seed=seed))
               for k in chart_kinds]
    return reports, all(r.overall_pass for r in reports)
