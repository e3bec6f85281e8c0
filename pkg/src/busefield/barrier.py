"""Barrier fields of lines, their zero sets and foliation, the quadratic
bound, and the order/equivalence relations between lines.

The barrier of an oriented line is the pointwise sum of the Busemann fields
of its two rays.  It vanishes on the line, is nonnegative up to solver
error, and its zero set is foliated by parallel lines recovered here by
backtracing corays of both component fields and gluing them.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (CoverageError, CorayValidationError, DataError,
                     InconsistencyError, PreconditionError, ValidationError)
from .eikonal import ScalarField, SourceSet, solve_distance
from .geodesic import (GeodesicPath, GridDistanceOracle, LineSpec, RaySpec,
                       glue_line, integrate_ray, trace_coray)
from .busemann import busemann_field
from .report import VerdictReport


# ---------------------------------------------------------------------------
# types

@dataclass
class BarrierField:
    """Sum of the two Busemann fields of an oriented line."""

    field: ScalarField
    line: LineSpec
    b_plus: ScalarField
    b_minus: ScalarField
    line_path: GeodesicPath

    @property
    def h_max(self):
        return self.field.h_max


@dataclass
class ZeroSetMask:
    """Cells where the barrier vanishes up to the collar tolerance."""

    marked: np.ndarray
    tol: float

    @property
    def count(self):
        return int(self.marked.sum())


@dataclass
class RelationVerdict:
    """Decision for one ordered line relation with its measured evidence."""

    relation: str
    holds: bool
    evidence: dict = field(default_factory=dict)

    def __bool__(self):
        return self.holds


@dataclass
class LineFields:
    """A line together with its computed Busemann and barrier fields."""

    line: LineSpec
    b_plus: ScalarField
    b_minus: ScalarField
    barrier: BarrierField
    reports: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# construction

def glued_line_path(chart, line, dt=0.02):
    """Concatenate the integrated rays of a line into one parameterized path."""
    plus = integrate_ray(chart, line.plus, dt=dt)
    minus = integrate_ray(chart, line.minus, dt=dt)
    rev = minus.reversed()
    states = np.vstack([rev.states[:-1], plus.states])
    return GeodesicPath(states=states, dt=dt, t0=rev.t0,
                        truncated=plus.truncated or minus.truncated)


def barrier_field(chart, b_plus, b_minus, line, dt=0.02, tol_factor=3.0):
    """Sum the two Busemann fields of a line into its barrier field.

    Asserts the two defining properties on the grid: the barrier is bounded
    below by -tol and vanishes along the line's path up to tol, with
    tol = tol_factor * h.  Violations raise an inconsistency error.
    """
    if b_plus.shape != b_minus.shape:
        raise ValidationError("component fields live on different grids")
    values = b_plus.values + b_minus.values
    mask = b_plus.valid_mask & b_minus.valid_mask
    fld = ScalarField(values=values, origin=b_plus.origin,
                      spacing=b_plus.spacing, valid_mask=mask, tag="barrier",
                      source_info=f"barrier of line at {line.base}",
                      periodic_x=b_plus.periodic_x, period=b_plus.period)
    h = fld.h_max
    tol = tol_factor * h
    if mask.any():
        low = float(values[mask].min())
        if low < -tol:
            raise InconsistencyError(
                f"barrier nonnegativity violated: min B = {low:.4f} < {-tol:.4f}")
    path = glued_line_path(chart, line, dt=dt)
    worst_on_line = 0.0
    step = max(1, int(round(h / dt)))
    for p in path.points[::step]:
        if fld.is_valid_at(p):
            worst_on_line = max(worst_on_line, abs(fld.value_at(p)))
    if worst_on_line > tol:
        raise InconsistencyError(
            f"barrier does not vanish on its line: |B| = {worst_on_line:.4f} "
            f"> {tol:.4f} on the path")
    return BarrierField(field=fld, line=line, b_plus=b_plus, b_minus=b_minus,
                        line_path=path)


def build_line_fields(chart, line, schedule, dt=0.01, **busemann_kwargs):
    """Compute both Busemann fields of a line and assemble its barrier."""
    bp, rep_p = busemann_field(chart, line.plus, schedule, dt=dt,
                               **busemann_kwargs)
    bm, rep_m = busemann_field(chart, line.minus, schedule, dt=dt,
                               **busemann_kwargs)
    bf = barrier_field(chart, bp, bm, line)
    return LineFields(line=line, b_plus=bp, b_minus=bm, barrier=bf,
                      reports={"plus": rep_p, "minus": rep_m})


# ---------------------------------------------------------------------------
# zero set and foliation

def _line_collar_cells(fld, path, collar_cells=1):
    """Boolean grid of cells within collar_cells of the path's points."""
    near = np.zeros(fld.shape, dtype=bool)
    nx, ny = fld.shape
    step = max(1, int(round(min(fld.spacing) / path.dt / 2.0)))
    for p in path.points[::step]:
        if not fld.contains(p):
            continue
        i, j = fld.nearest_cell(p)
        for di in range(-collar_cells, collar_cells + 1):
            ii = (i + di) % nx if fld.periodic_x else i + di
            if not 0 <= ii < nx:
                continue
            lo = max(j - collar_cells, 0)
            hi = min(j + collar_cells, ny - 1)
            near[ii, lo:hi + 1] = True
    return near


def zero_set(chart, bf, zero_tol=None, check_foliation=True, max_checks=40,
             seed=0, tol_dir=0.15, tol_slope=0.05, dt=0.02,
             trace_horizon=None, min_fraction=0.95, edge_margin_cells=10):
    """Threshold the barrier and verify the marked cells carry glued lines.

    Marked cells off the line are subsampled deterministically; from each,
    corays of both component fields are backtraced, required to leave in
    opposite directions, and glued into a line candidate checked for the
    two-sided minimizing property.  Cells within edge_margin_cells of a
    non-periodic boundary are not sampled: a slope fit needs room to trace.
    """
    h = bf.h_max
    if zero_tol is None:
        zero_tol = 4.0 * h
    fld = bf.field
    marked = (fld.values <= zero_tol) & fld.valid_mask
    mask = ZeroSetMask(marked=marked, tol=zero_tol)
    if not check_foliation:
        return mask, VerdictReport(name="zero_set_foliation", passed=True,
                                   worst_violation=0.0, tolerance=1.0 - min_fraction,
                                   details={"checked": 0})

    on_line = _line_collar_cells(fld, bf.line_path)
    traceable = marked & ~on_line
    m = edge_margin_cells
    if m > 0:
        interior = np.zeros_like(traceable)
        if fld.periodic_x:
            interior[:, m:-m] = True
        else:
            interior[m:-m, m:-m] = True
        traceable &= interior
    # a slope fit needs metric room: drop cells whose g-scaled distance to a
    # non-periodic boundary is shorter than the fitted trace segment
    room_needed = 12.0 * dt + 4.0 * h
    xs, ys = fld.grid_axes()
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    g11, _, g22 = chart.tensor_grids()
    x0c, x1c, y0c, y1c = chart.bounds
    room_y = np.minimum(Y - y0c, y1c - Y) * np.sqrt(g22)
    room = room_y
    if not fld.periodic_x:
        room = np.minimum(room, np.minimum(X - x0c, x1c - X) * np.sqrt(g11))
    traceable &= room >= room_needed
    off_cells = np.argwhere(traceable)
    rng = np.random.default_rng(seed)
    if len(off_cells) > max_checks:
        sel = rng.choice(len(off_cells), size=max_checks, replace=False)
        off_cells = off_cells[np.sort(sel)]
    if trace_horizon is None:
        x0, x1, y0, y1 = chart.bounds
        trace_horizon = 0.5 * math.hypot(x1 - x0, y1 - y0)

    oracle = GridDistanceOracle(chart)
    glued = 0
    failures = []
    for (i, j) in off_cells:
        p = fld.cell_center(i, j)
        try:
            tr_p = trace_coray(chart, bf.b_plus, p, horizon=trace_horizon,
                               dt=dt, tol_slope=tol_slope)
            v_p = tr_p.path.states[0, 2:]
            tr_m = trace_coray(chart, bf.b_minus, p, horizon=trace_horizon,
                               dt=dt, prev_direction=-v_p,
                               tol_slope=tol_slope)
            _, rep = glue_line(chart, tr_p.path, tr_m.path, dist=oracle,
                               samples=6, tol_dir=tol_dir)
            if rep.passed:
                glued += 1
            else:
                failures.append((tuple(np.round(p, 4)),
                                 f"glue violation {rep.worst_violation:.4f}"))
        except (CorayValidationError, PreconditionError, DataError) as exc:
            failures.append((tuple(np.round(p, 4)), str(exc)[:80]))
    checked = len(off_cells)
    frac = glued / checked if checked else 1.0
    report = VerdictReport(
        name="zero_set_foliation", passed=frac >= min_fraction,
        worst_violation=1.0 - frac, tolerance=1.0 - min_fraction,
        details={"checked": checked, "glued": glued, "fraction": frac,
                 "failures": failures[:8]})
    return mask, report


# ---------------------------------------------------------------------------
# quadratic bound

def quad_bound_constant(chart, bf, region, d_min_cells=8, solver_kwargs=None):
    """Fit the constant in B <= C d^2(x, line) over a region.

    The foot distance is solved with the line's in-domain path as a polyline
    source.  Cells closer to the line than d_min_cells * h are excluded:
    there the O(h) field error dominates the quadratic.  Returns (C, info).
    """
    fld = bf.field
    h = bf.h_max
    pts = [p for p in bf.line_path.points[::5] if chart.contains(p)]
    if len(pts) < 2:
        raise PreconditionError("line path has no in-domain extent")
    dist = solve_distance(chart, SourceSet.from_polyline(np.asarray(pts)),
                          **(solver_kwargs or {}))
    x0, x1, y0, y1 = region
    xs, ys = fld.grid_axes()
    I = np.where((xs >= x0 - 1e-12) & (xs <= x1 + 1e-12))[0]
    J = np.where((ys >= y0 - 1e-12) & (ys <= y1 + 1e-12))[0]
    if len(I) == 0 or len(J) == 0:
        raise PreconditionError("region contains no grid cells")
    sub = np.ix_(I, J)
    d_min = max(2.0 * h, d_min_cells * h)
    ok = (fld.valid_mask[sub] & dist.valid_mask[sub]
          & (dist.values[sub] >= d_min))
    if not ok.any():
        raise PreconditionError("all region cells excluded: degenerate region")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(ok, bf.field.values[sub] / dist.values[sub] ** 2, -np.inf)
    k = np.unravel_index(np.argmax(ratio), ratio.shape)
    C = float(ratio[k])
    info = {"cell": (float(xs[I[k[0]]]), float(ys[J[k[1]]])),
            "d_min": d_min, "cells_used": int(ok.sum()),
            "distance_at_max": float(dist.values[sub][k])}
    return max(C, 0.0), info


# ---------------------------------------------------------------------------
# relations

def _sampled_path_values(chart, fields, path, n_samples):
    """Common parameters along the path where every field is valid."""
    s_vals = np.linspace(path.t0, path.t_end, 4 * n_samples)
    rows = []
    for s in s_vals:
        p = path.point_at(s)
        if all(f.is_valid_at(p) for f in fields):
            rows.append((s, tuple(p)))
    if len(rows) < n_samples:
        raise CoverageError(
            f"only {len(rows)} valid samples along the candidate path "
            f"(need {n_samples})")
    idx = np.linspace(0, len(rows) - 1, n_samples).round().astype(int)
    return [rows[k] for k in idx]


def _window_slopes(samples, values, window):
    slopes = []
    for k in range(len(samples) - window + 1):
        ss = np.array([samples[m][0] for m in range(k, k + window)])
        vv = values[k:k + window]
        slopes.append(float(np.polyfit(ss, vv, 1)[0]))
    return slopes


def precedes(chart, candidate, ref, zero_tol=None, tol_slope=0.05,
             n_samples=16, window=8, dt=0.02):
    """Decide whether the candidate line precedes the reference line.

    Requires the reference barrier to vanish along the candidate and both
    reference Busemann fields to decrease at unit rate along the matching
    orientation of the candidate, measured by windowed least squares.
    """
    h = ref.barrier.h_max
    if zero_tol is None:
        zero_tol = 4.0 * h
    path = glued_line_path(chart, candidate, dt=dt)
    fields = [ref.barrier.field, ref.b_plus, ref.b_minus]
    samples = _sampled_path_values(chart, fields, path, n_samples)
    barrier_vals = np.array([ref.barrier.field.value_at(p) for _, p in samples])
    plus_vals = np.array([ref.b_plus.value_at(p) for _, p in samples])
    minus_vals = np.array([ref.b_minus.value_at(p) for _, p in samples])

    worst_barrier = float(barrier_vals.max())
    slopes_p = _window_slopes(samples, plus_vals, window)
    slopes_m = _window_slopes(samples, minus_vals, window)
    # forward orientation is a coray to the plus ray, backward to the minus
    defect_p = max(abs(s + 1.0) for s in slopes_p)
    defect_m = max(abs(s - 1.0) for s in slopes_m)
    holds = (worst_barrier <= zero_tol and defect_p <= tol_slope
             and defect_m <= tol_slope)
    return RelationVerdict(
        relation="precedes", holds=holds,
        evidence={"barrier_worst": worst_barrier, "zero_tol": zero_tol,
                  "slope_plus_defect": defect_p,
                  "slope_minus_defect": defect_m, "tol_slope": tol_slope,
                  "samples": len(samples)})


def equivalent(chart, a, b, osc_tol=None, cross_check=True, **precedes_kwargs):
    """Decide equivalence of two oriented lines.

    Primary route: both Busemann differences have oscillation at most
    osc_tol over the common valid region.  Cross-checked against mutual
    precedes; a route disagreement is flagged in the evidence.
    """
    h = max(a.barrier.h_max, b.barrier.h_max)
    if osc_tol is None:
        osc_tol = 6.0 * h
    common = (a.b_plus.valid_mask & a.b_minus.valid_mask
              & b.b_plus.valid_mask & b.b_minus.valid_mask)
    if common.sum() < 0.25 * common.size:
        raise CoverageError(
            f"common valid region covers only {common.mean():.0%} of the grid")
    diff_p = a.b_plus.values - b.b_plus.values
    diff_m = a.b_minus.values - b.b_minus.values
    osc_p = float(diff_p[common].max() - diff_p[common].min())
    osc_m = float(diff_m[common].max() - diff_m[common].min())
    holds = osc_p <= osc_tol and osc_m <= osc_tol
    evidence = {"osc_plus": osc_p, "osc_minus": osc_m, "osc_tol": osc_tol}
    if cross_check:
        try:
            ab = precedes(chart, a.line, b, **precedes_kwargs)
            ba = precedes(chart, b.line, a, **precedes_kwargs)
            mutual = ab.holds and ba.holds
            evidence["mutual_precedes"] = mutual
            evidence["routes_agree"] = (mutual == holds)
        except CoverageError as exc:
            evidence["mutual_precedes"] = None
            evidence["routes_agree"] = None
            evidence["cross_check_error"] = str(exc)[:80]
    return RelationVerdict(relation="equivalent", holds=holds,
                           evidence=evidence)


def line_sum_test(chart, r1, r2, b1, b2, tol=None, dt=0.02, oracle=None):
    """Two independent tests that opposite rays extend to a line.

    Field route: min of the Busemann sum over common cells is >= -tol.
    Metric route: the integrated rays glue into a two-sided minimizer.  The
    verdict passes when the two routes agree.
    """
    if (abs(r1.base[0] - r2.base[0]) > 1e-9
            or abs(r1.base[1] - r2.base[1]) > 1e-9):
        raise PreconditionError("rays must share a basepoint")
    h = max(b1.h_max, b2.h_max)
    if tol is None:
        tol = 6.0 * h
    common = b1.valid_mask & b2.valid_mask
    if not common.any():
        raise CoverageError("fields share no valid cells")
    min_sum = float((b1.values + b2.values)[common].min())
    field_says_line = min_sum >= -tol

    p1 = integrate_ray(chart, r1, dt=dt)
    p2 = integrate_ray(chart, r2, dt=dt)
    try:
        _, rep = glue_line(chart, p1, p2, dist=oracle, samples=8, tol_dir=0.05)
        glue_says_line = rep.passed
        glue_violation = rep.worst_violation
    except PreconditionError:
        glue_says_line = False
        glue_violation = float("nan")
    agree = field_says_line == glue_says_line
    return VerdictReport(
        name="line_sum_test", passed=agree,
        worst_violation=0.0 if agree else 1.0, tolerance=0.5,
        details={"min_sum": min_sum, "field_says_line": field_says_line,
                 "glue_says_line": glue_says_line,
                 "glue_violation": glue_violation, "tol": tol})


def pseudo_distance(a, b, barrier_a, barrier_b):
    """Symmetrized barrier evaluation between two lines' basepoints."""
    try:
        v1 = barrier_a.field.value_at(b.base)
        v2 = barrier_b.field.value_at(a.base)
    except DataError as exc:
        raise CoverageError(f"basepoint outside valid cells: {exc}") from exc
    return max(v1 + v2, 0.0)


def coray_bound_check(ray, coray, b_ray, b_coray, tol=None):
    """Check that the ray's Busemann drop is dominated by the coray's field.

    Asserts b_ray(x) - b_ray(coray.base) <= b_coray(x) + tol on all common
    valid cells and reports the worst margin.
    """
    h = max(b_ray.h_max, b_coray.h_max)
    if tol is None:
        tol = 6.0 * h
    try:
        base_val = b_ray.value_at(coray.base)
    except DataError as exc:
        raise CoverageError(f"coray basepoint is masked: {exc}") from exc
    common = b_ray.valid_mask & b_coray.valid_mask
    if not common.any():
        raise CoverageError("fields share no valid cells")
    margin = (b_ray.values - base_val - b_coray.values)[common]
    worst = float(margin.max())
    return VerdictReport(name="coray_bound", passed=worst <= tol,
                         worst_violation=max(worst, 0.0), tolerance=tol,
                         details={"mean_margin": float(margin.mean()),
                                  "base_value": base_val})


def barrier_match_check(bf_a, bf_b, tol=None, name="barrier_invariance"):
    """Compare two barrier fields cell by cell (parameter-shift/reversal)."""
    h = max(bf_a.h_max, bf_b.h_max)
    if tol is None:
        tol = 6.0 * h
    common = bf_a.field.valid_mask & bf_b.field.valid_mask
    if not common.any():
        raise CoverageError("barrier fields share no valid cells")
    worst = float(np.abs(bf_a.field.values - bf_b.field.values)[common].max())
    return VerdictReport(name=name, passed=worst <= tol,
                         worst_violation=worst, tolerance=tol,
                         details={"common_cells": int(common.sum())})


def classify_lines(chart, bundles, **equivalent_kwargs):
    """Partition a family of lines into equivalence classes.

    Returns (groups, verdicts): groups as lists of indices into ``bundles``,
    verdicts as a dict keyed by index pairs.
    """
    n = len(bundles)
    parent = list(range(n))

    def find(k):
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    verdicts = {}
    for i in range(n):
        for j in range(i + 1, n):
            v = equivalent(chart, bundles[i], bundles[j], **equivalent_kwargs)
            verdicts[(i, j)] = v
            if v.holds:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[rj] = ri
    groups = {}
    for k in range(n):
        groups.setdefault(find(k), []).append(k)
    return sorted(groups.values()), verdicts
