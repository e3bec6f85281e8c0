"""Busemann, horo-, and dl-fields as monotone truncated limits, plus
superdifferentials, singular-set detection, and semi-concavity estimates.

The limit over escaping sources is replaced by a Cauchy-stopped truncation
schedule; cells whose last increment exceeds the Cauchy tolerance are masked
as not-converged rather than extrapolated.  Source points outside the chart
window are handled by solving on an enlarged chart at the same spacing and
cropping back, so every window cell stays interior to the solve.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import (DataError, InconsistencyError, PreconditionError,
                     ValidationError)
from .eikonal import ScalarField, SourceSet, cell_gradients, solve_distance
from .geodesic import integrate_geodesic
from .metric import MetricChart


@dataclass
class TruncationSchedule:
    """Increasing truncation parameters and the Cauchy stopping tolerance."""

    t_values: tuple
    cauchy_tol: float

    def __post_init__(self):
        self.t_values = tuple(float(t) for t in self.t_values)
        if not self.t_values:
            raise ValidationError("empty truncation schedule")
        if any(b <= a for a, b in zip(self.t_values, self.t_values[1:])):
            raise ValidationError("truncation parameters must be strictly increasing")
        if self.cauchy_tol <= 0:
            raise ValidationError("cauchy_tol must be positive")


@dataclass
class GradientSample:
    point: tuple
    du: np.ndarray
    radius: float


@dataclass
class SuperdifferentialResult:
    """Reachable-gradient clusters and their convex hull at one point."""

    samples: list
    representatives: list       # one mean covector per cluster
    hull_points: list           # extreme points of the convex hull
    diameter: float             # max pairwise g-distance between representatives


@dataclass
class SingularMask:
    marked: np.ndarray          # bool per cell
    diameter: np.ndarray        # gradient-set diameter per cell
    jump_threshold: float

    @property
    def count(self):
        return int(np.count_nonzero(self.marked))


# ---------------------------------------------------------------------------
# chart extension

def extend_chart(chart, include_points=(), margin_cells=6):
    """Enlarge the chart (same spacing, grid-aligned) to cover extra points.

    Returns (extended_chart, i_offset, j_offset) mapping window node (i, j)
    to extended node (i + i_offset, j + j_offset).  Periodic charts extend in
    y only; half-plane charts clamp the lower bound multiplicatively to keep
    y > 0.
    """
    x_min, x_max, y_min, y_max = chart.bounds
    hx, hy = chart.spacing
    xs_lo, xs_hi = x_min, x_max
    ys_lo, ys_hi = y_min, y_max
    for p in include_points:
        if not chart.periodic_x:
            xs_lo = min(xs_lo, p[0])
            xs_hi = max(xs_hi, p[0])
        ys_lo = min(ys_lo, p[1])
        ys_hi = max(ys_hi, p[1])

    if chart.periodic_x:
        ki_lo = 0
        new_x = (x_min, x_max)
        new_nx = chart.resolution[0]
    else:
        ki_lo = int(math.ceil((x_min - xs_lo) / hx)) + margin_cells
        ki_hi = int(math.ceil((xs_hi - x_max) / hx)) + margin_cells
        new_x = (x_min - ki_lo * hx, x_max + ki_hi * hx)
        new_nx = chart.resolution[0] + ki_lo + ki_hi

    kj_lo = int(math.ceil((y_min - ys_lo) / hy)) + margin_cells
    if chart.kind == "half_plane":
        # keep y > 0: back off to the lowest grid line that stays positive
        while kj_lo > 0 and y_min - kj_lo * hy <= 0.0:
            kj_lo -= 1
    kj_hi = int(math.ceil((ys_hi - y_max) / hy)) + margin_cells
    new_y = (y_min - kj_lo * hy, y_max + kj_hi * hy)
    new_ny = chart.resolution[1] + kj_lo + kj_hi

    ext = MetricChart((new_x[0], new_x[1], new_y[0], new_y[1]),
                      (new_nx, new_ny), chart.kind, chart.tensor,
                      periodic_x=chart.periodic_x)
    return ext, ki_lo, kj_lo


def _crop(chart, ext_field, oi, oj, tag, source_info):
    nx, ny = chart.resolution
    values = np.ascontiguousarray(ext_field.values[oi:oi + nx, oj:oj + ny])
    mask = np.ascontiguousarray(ext_field.valid_mask[oi:oi + nx, oj:oj + ny])
    xs, ys = chart.grid_axes()
    return ScalarField(values=values, origin=(xs[0], ys[0]),
                       spacing=chart.spacing, valid_mask=mask, tag=tag,
                       source_info=source_info, periodic_x=chart.periodic_x,
                       period=chart.period if chart.periodic_x else 0.0)


# ---------------------------------------------------------------------------
# truncated-limit fields

def _limit_field(chart, iterates, tag, cauchy_tol, source_info, mono_tol=None):
    """Fold a monotonicity-checked iterate sequence into the stopped limit."""
    h = chart.h_max
    if mono_tol is None:
        mono_tol = 3.0 * h
    per_step_defect = []
    worst_mono = 0.0
    prev = None
    for fld in iterates:
        if prev is not None:
            both = prev.valid_mask & fld.valid_mask
            inc = fld.values - prev.values
            worst_mono = max(worst_mono, float(np.max(inc[both], initial=0.0)))
            per_step_defect.append(float(np.max(np.abs(inc[both]), initial=0.0)))
        prev = fld
    if worst_mono > mono_tol:
        raise InconsistencyError(
            f"truncation iterates increased by {worst_mono:.3e} > {mono_tol:.3e}: "
            "ray/solver inconsistency")
    last = iterates[-1]
    mask = last.valid_mask.copy()
    if len(iterates) >= 2:
        defect = np.abs(iterates[-1].values - iterates[-2].values)
        mask &= iterates[-2].valid_mask
        mask &= defect <= cauchy_tol
        cell_defect = defect
    else:
        cell_defect = np.zeros_like(last.values)
    out = ScalarField(values=last.values.copy(), origin=last.origin,
                      spacing=last.spacing, valid_mask=mask, tag=tag,
                      source_info=source_info, periodic_x=last.periodic_x,
                      period=last.period)
    report = {
        "per_step_max_defect": per_step_defect,
        "final_cell_defect": cell_defect,
        "monotonicity_worst": worst_mono,
        "masked_fraction": 1.0 - float(np.mean(mask)),
    }
    return out, report


def busemann_field(chart, ray, schedule, dt=0.01, margin_cells=6, **solver_kwargs):
    """Busemann field of a ray: stopped limit of d(x, gamma(t_i)) - t_i.

    Returns (ScalarField tagged ``busemann``, convergence report).  The
    distance solves run on an extended chart so the truncation points need
    not lie in the window.
    """
    t_max = schedule.t_values[-1]
    probe = integrate_geodesic(chart, ray.base, ray.direction, t_max,
                               dt=dt, clip_domain=False)
    if probe.t_end < t_max - 1e-9:
        raise PreconditionError("ray integration stopped before the last schedule point")
    pts = [tuple(probe.point_at(t)) for t in schedule.t_values]
    ext, oi, oj = extend_chart(chart, include_points=pts + [tuple(p) for p in probe.points],
                               margin_cells=margin_cells)
    iterates = []
    for t, p in zip(schedule.t_values, pts):
        u = solve_distance(ext, SourceSet.from_points([p]), **solver_kwargs)
        b = u.with_values(u.values - t)
        iterates.append(_crop_field_like(chart, b, oi, oj))
    info = f"busemann ray base={ray.base} dir={ray.direction}"
    fld, rep = _limit_field(chart, iterates, "busemann", schedule.cauchy_tol, info)
    rep["ray_points"] = pts
    return fld, rep


def _crop_field_like(chart, ext_field, oi, oj):
    return _crop(chart, ext_field, oi, oj, ext_field.tag, ext_field.source_info)


def horofunction_field(chart, points, base, cauchy_tol, margin_cells=6,
                       **solver_kwargs):
    """Horofunction: stopped limit of d(x, x_n) - d(base, x_n)."""
    chart.require_inside(base)
    pts = [tuple(map(float, p)) for p in points]
    ext, oi, oj = extend_chart(chart, include_points=pts, margin_cells=margin_cells)
    iterates = []
    prev_escape = -math.inf
    for p in pts:
        u = solve_distance(ext, SourceSet.from_points([p]), **solver_kwargs)
        d_base = u.value_at(base)
        if d_base <= prev_escape:
            raise PreconditionError(
                "horofunction points must escape: d(base, x_n) not increasing")
        prev_escape = d_base
        iterates.append(_crop_field_like(chart, u.with_values(u.values - d_base,
                                                              tag="horo"), oi, oj))
    info = f"horofunction base={tuple(base)} n={len(pts)}"
    return _limit_field(chart, iterates, "horo", cauchy_tol, info)


def dl_field(chart, source_sets, base, cauchy_tol, margin_cells=6,
             **solver_kwargs):
    """Distance-like field: stopped limit of d(x, K_n) - d(base, K_n)."""
    chart.require_inside(base)
    include = []
    for s in source_sets:
        include.extend(s.points)
        for pl in s.polylines:
            include.extend([tuple(p) for p in pl])
    ext, oi, oj = extend_chart(chart, include_points=include,
                               margin_cells=margin_cells)
    iterates = []
    prev_escape = -math.inf
    for s in source_sets:
        u = solve_distance(ext, s, **solver_kwargs)
        d_base = u.value_at(base)
        if d_base <= prev_escape:
            raise PreconditionError(
                "dl source sets must escape: d(base, K_n) not increasing")
        prev_escape = d_base
        iterates.append(_crop_field_like(chart, u.with_values(u.values - d_base,
                                                              tag="dl"), oi, oj))
    info = f"dl-function base={tuple(base)} n={len(source_sets)}"
    return _limit_field(chart, iterates, "dl", cauchy_tol, info)


def format_convergence_report(report):
    lines = ["truncation convergence:"]
    for k, d in enumerate(report["per_step_max_defect"]):
        lines.append(f"  step {k + 1}: max Cauchy defect {d:.6g}")
    lines.append(f"  monotonicity worst increase: {report['monotonicity_worst']:.6g}")
    lines.append(f"  masked cell fraction: {report['masked_fraction']:.4f}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# gradients and singular sets

def _inverse_metric_grids(chart, fld):
    xs, ys = fld.grid_axes()
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    if fld.periodic_x and fld.period > 0:
        gx = fld.origin[0] + (gx - fld.origin[0]) % fld.period
    g11, g12, g22 = (np.broadcast_to(np.asarray(c, float), gx.shape)
                     for c in chart.tensor(gx, gy))
    det = g11 * g22 - g12 * g12
    return g22 / det, -g12 / det, g11 / det


def _pair_dist(dgx, dgy, q11, q12, q22):
    return np.sqrt(np.maximum(q11 * dgx ** 2 + 2 * q12 * dgx * dgy + q22 * dgy ** 2,
                              0.0))


def superdifferential(chart, fld, p, radius, jump_threshold=0.2):
    """Reachable-gradient clusters near p and their convex hull.

    Gathers central-difference gradients of jump-free cells within ``radius``
    (chart units), clusters them by single linkage in the local g-norm with
    cut jump_threshold / 2 scaled by cell separation, and returns cluster
    means plus hull extreme points.
    """
    if not fld.is_valid_at(p):
        raise DataError(f"point {tuple(p)} is masked; no superdifferential")
    hx, hy = fld.spacing
    if radius < 2.0 * max(hx, hy):
        raise PreconditionError("superdifferential radius must be at least 2 cells")
    gx, gy = cell_gradients(fld)
    ci, cj = fld.nearest_cell(p)
    inv_grids = _inverse_metric_grids(chart, fld)
    iv11, iv12, iv22 = (float(c[ci, cj]) for c in inv_grids)
    ri = int(math.ceil(radius / hx))
    rj = int(math.ceil(radius / hy))
    nx, ny = fld.shape
    cut = jump_threshold / 2.0

    def grad(i, j):
        return gx[i, j], gy[i, j]

    samples = []
    for di in range(-ri, ri + 1):
        for dj in range(-rj, rj + 1):
            if (di * hx) ** 2 + (dj * hy) ** 2 > radius ** 2 + 1e-15:
                continue
            i = (ci + di) % nx if fld.periodic_x else ci + di
            j = cj + dj
            if not (0 <= i < nx and 0 <= j < ny) or not fld.valid_mask[i, j]:
                continue
            # jump-free test: neighbors' gradients close to this cell's own
            g0x, g0y = grad(i, j)
            smooth = True
            for ei in (-1, 0, 1):
                for ej in (-1, 0, 1):
                    ii = (i + ei) % nx if fld.periodic_x else i + ei
                    jstep = j + ej
                    if not (0 <= ii < nx and 0 <= jstep < ny):
                        continue
                    if not fld.valid_mask[ii, jstep]:
                        continue
                    d = _pair_dist(gx[ii, jstep] - g0x, gy[ii, jstep] - g0y,
                                   iv11, iv12, iv22)
                    if d > cut:
                        smooth = False
                        break
                if not smooth:
                    break
            if smooth:
                samples.append(GradientSample(point=fld.cell_center(i, j),
                                              du=np.array([g0x, g0y]),
                                              radius=radius))
    if not samples:
        return SuperdifferentialResult([], [], [], 0.0)

    # single-linkage clustering with cut jump_threshold / 2
    n = len(samples)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a in range(n):
        for b in range(a + 1, n):
            d = _pair_dist(samples[a].du[0] - samples[b].du[0],
                           samples[a].du[1] - samples[b].du[1],
                           iv11, iv12, iv22)
            pa, pb = samples[a].point, samples[b].point
            sep = max(abs(pa[0] - pb[0]) / hx, abs(pa[1] - pb[1]) / hy, 1.0)
            if d <= cut * sep:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[rb] = ra
    clusters = {}
    for a in range(n):
        clusters.setdefault(find(a), []).append(a)
    reps = []
    for root in sorted(clusters, key=lambda r: (samples[r].du[0], samples[r].du[1])):
        member_dus = np.array([samples[a].du for a in clusters[root]])
        reps.append(member_dus.mean(axis=0))

    diameter = 0.0
    for a in range(len(reps)):
        for b in range(a + 1, len(reps)):
            diameter = max(diameter, float(_pair_dist(
                reps[a][0] - reps[b][0], reps[a][1] - reps[b][1],
                iv11, iv12, iv22)))

    hull_pts = _hull_extreme_points([s.du for s in samples])
    return SuperdifferentialResult(samples=samples, representatives=reps,
                                   hull_points=hull_pts, diameter=diameter)


def _hull_extreme_points(dus):
    pts = np.unique(np.round(np.array(dus), 12), axis=0)
    if len(pts) <= 2:
        return [p for p in pts]
    try:
        from scipy.spatial import ConvexHull
        hull = ConvexHull(pts, qhull_options="QJ")
        return [pts[v] for v in hull.vertices]
    except Exception:
        lo = pts[np.argmin(pts[:, 0] + 1e-9 * pts[:, 1])]
        hi = pts[np.argmax(pts[:, 0] + 1e-9 * pts[:, 1])]
        return [lo, hi]


def singular_set(chart, fld, jump_threshold=0.2, radius_cells=2):
    """Mark cells near gradient discontinuities of an eikonal-type field.

    Two complementary detectors, both recorded as a per-cell gradient-set
    diameter: (a) the clustered gradients of jump-free cells over a
    ``radius_cells`` window split into groups separated by more than
    jump_threshold, and (b) the cell's own centered gradient has g-norm
    deficit of at least jump_threshold, which on a unit-gradient field
    happens only where opposite-side branches average across a kink.  The
    jump-free filter uses a quarter-threshold cut so that the continuum of
    gradients around a cone vertex is excluded whole instead of being split
    into spurious arcs.
    """
    gx, gy = cell_gradients(fld)
    iv11, iv12, iv22 = _inverse_metric_grids(chart, fld)
    nx, ny = fld.shape
    cut = jump_threshold / 2.0
    smooth_cut = jump_threshold / 4.0

    def shifted(a, di, dj):
        """Value at cell (i + di, j + dj), nan outside (x wraps if periodic)."""
        out = np.full_like(a, np.nan)
        j_lo, j_hi = max(-dj, 0), ny - max(dj, 0)
        if fld.periodic_x:
            rolled = np.roll(a, -di, axis=0)
            out[:, j_lo:j_hi] = rolled[:, max(dj, 0):ny - max(-dj, 0)]
        else:
            i_lo, i_hi = max(-di, 0), nx - max(di, 0)
            out[i_lo:i_hi, j_lo:j_hi] = a[max(di, 0):nx - max(-di, 0),
                                          max(dj, 0):ny - max(-dj, 0)]
        return out

    # smooth cells: every 8-neighbor gradient close to the cell's own
    invalid = ~fld.valid_mask
    gx_m = np.where(invalid, np.nan, gx)
    gy_m = np.where(invalid, np.nan, gy)
    smooth = fld.valid_mask.copy()
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            sx = shifted(gx_m, di, dj)
            sy = shifted(gy_m, di, dj)
            d = _pair_dist(sx - gx, sy - gy, iv11, iv12, iv22)
            with np.errstate(invalid="ignore"):
                smooth &= ~(d > smooth_cut)

    diameter = _cluster_diameters(gx, gy, smooth, iv11, iv12, iv22,
                                  radius_cells, cut, fld.periodic_x)
    # norm-deficit detector: centered gradients across a kink average the
    # branches, so their g-norm drops below 1 by 1 - cos(half angle)
    norm = _pair_dist(gx, gy, iv11, iv12, iv22)
    deficit = (norm <= 1.0 - jump_threshold) & fld.valid_mask
    implied = 2.0 * np.sqrt(np.maximum(1.0 - norm ** 2, 0.0))
    diameter = np.where(deficit, np.maximum(diameter, implied), diameter)
    marked = ((diameter >= jump_threshold) | deficit) & fld.valid_mask
    return SingularMask(marked=marked, diameter=diameter,
                        jump_threshold=jump_threshold)


@njit(cache=True)
def _cluster_diameters(gx, gy, smooth, iv11, iv12, iv22, r, cut, periodic):
    """Per-cell diameter of the clustered gradient set over a (2r+1)^2 window.

    Gradients of smooth cells are grouped by single linkage in the local
    inverse-metric norm with a cut that grows linearly with cell separation;
    the diameter is the largest distance between cluster means, so a smoothly
    rotating gradient field collapses into one cluster while a genuine jump
    yields separated clusters.
    """
    nx, ny = gx.shape
    diam = np.zeros((nx, ny))
    cap = (2 * r + 1) * (2 * r + 1)
    wx = np.empty(cap)
    wy = np.empty(cap)
    wi = np.empty(cap, dtype=np.int64)
    wj = np.empty(cap, dtype=np.int64)
    parent = np.empty(cap, dtype=np.int64)
    sx = np.empty(cap)
    sy = np.empty(cap)
    cnt = np.empty(cap, dtype=np.int64)
    for i in range(nx):
        for j in range(ny):
            q11 = iv11[i, j]
            q12 = iv12[i, j]
            q22 = iv22[i, j]
            n = 0
            for di in range(-r, r + 1):
                ii = i + di
                if periodic:
                    ii = ii % nx
                elif ii < 0 or ii >= nx:
                    continue
                for dj in range(-r, r + 1):
                    jj = j + dj
                    if jj < 0 or jj >= ny:
                        continue
                    if not smooth[ii, jj]:
                        continue
                    wx[n] = gx[ii, jj]
                    wy[n] = gy[ii, jj]
                    wi[n] = di
                    wj[n] = dj
                    n += 1
            if n < 2:
                continue
            for a in range(n):
                parent[a] = a
            for a in range(n):
                for b in range(a + 1, n):
                    dxv = wx[a] - wx[b]
                    dyv = wy[a] - wy[b]
                    d2 = q11 * dxv * dxv + 2.0 * q12 * dxv * dyv + q22 * dyv * dyv
                    # scale the cut with cell separation: smooth rotation
                    # links, a jump across any separation does not
                    sep = max(abs(wi[a] - wi[b]), abs(wj[a] - wj[b]))
                    if sep < 1:
                        sep = 1
                    link = cut * sep
                    if d2 <= link * link:
                        ra = a
                        while parent[ra] != ra:
                            ra = parent[ra]
                        rb = b
                        while parent[rb] != rb:
                            rb = parent[rb]
                        if ra != rb:
                            parent[rb] = ra
            for a in range(n):
                sx[a] = 0.0
                sy[a] = 0.0
                cnt[a] = 0
            for a in range(n):
                ra = a
                while parent[ra] != ra:
                    ra = parent[ra]
                sx[ra] += wx[a]
                sy[ra] += wy[a]
                cnt[ra] += 1
            best = 0.0
            for a in range(n):
                if cnt[a] == 0:
                    continue
                for b in range(a + 1, n):
                    if cnt[b] == 0:
                        continue
                    mx = sx[a] / cnt[a] - sx[b] / cnt[b]
                    my = sy[a] / cnt[a] - sy[b] / cnt[b]
                    d2 = q11 * mx * mx + 2.0 * q12 * mx * my + q22 * my * my
                    if d2 > best:
                        best = d2
            if best > 0.0:
                diam[i, j] = math.sqrt(best)
    return diam


# ---------------------------------------------------------------------------
# semi-concavity

def semiconcavity_constant(fld, region, offsets_cells=(1, 2)):
    """Empirical linear-modulus semi-concavity constant on a subregion.

    Max over interior cells and axis/diagonal offsets e of the centered
    second difference quotient [u(p+e) + u(p-e) - 2 u(p)] / |e|^2, clamped
    below at zero.  The constant is chart-coordinate dependent.
    """
    x0, x1, y0, y1 = region
    hx, hy = fld.spacing
    xs, ys = fld.grid_axes()
    i_sel = np.where((xs >= x0 - 1e-12) & (xs <= x1 + 1e-12))[0]
    j_sel = np.where((ys >= y0 - 1e-12) & (ys <= y1 + 1e-12))[0]
    if len(i_sel) < 3 or len(j_sel) < 3:
        raise PreconditionError("semi-concavity region smaller than 3x3 cells")
    i_lo, i_hi = int(i_sel[0]), int(i_sel[-1])
    j_lo, j_hi = int(j_sel[0]), int(j_sel[-1])
    v = fld.values
    ok = fld.valid_mask & np.isfinite(v)
    best = 0.0
    for m in offsets_cells:
        for (di, dj) in ((m, 0), (0, m), (m, m), (m, -m)):
            e2 = (di * hx) ** 2 + (dj * hy) ** 2
            ii = np.arange(max(i_lo, abs(di)), min(i_hi, v.shape[0] - 1 - abs(di)) + 1)
            jj = np.arange(max(j_lo, abs(dj)), min(j_hi, v.shape[1] - 1 - abs(dj)) + 1)
            if len(ii) == 0 or len(jj) == 0:
                continue
            I, J = np.meshgrid(ii, jj, indexing="ij")
            valid = ok[I, J] & ok[I + di, J + dj] & ok[I - di, J - dj]
            if not np.any(valid):
                continue
            second = v[I + di, J + dj] + v[I - di, J - dj] - 2.0 * v[I, J]
            q = second[valid] / e2
            best = max(best, float(np.max(q)))
    return max(best, 0.0)
