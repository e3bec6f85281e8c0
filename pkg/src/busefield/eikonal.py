"""Viscosity-solution distance fields on metric charts.

The solver is a fast-sweeping iteration with Hopf-Lax simplex updates over
a 16-direction stencil (axis, diagonal, and knight moves).  Each node is
updated by minimizing ``u(q) + len_g(q -> p)`` over the boundary of its
neighbor polygon, which stays causal for anisotropic SPD tensors.  Segment
lengths use a trapezoidal metric quadrature, so grid-aligned characteristics
are resolved to second order.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .errors import (ConvergenceError, DataError, DomainError,
                     PreconditionError, ValidationError)

FIELD_TAGS = ("distance", "busemann", "horo", "dl", "barrier", "singular")


# ---------------------------------------------------------------------------
# ScalarField

@dataclass
class ScalarField:
    """Grid of real values over a chart window plus validity metadata."""

    values: np.ndarray          # (nx, ny)
    origin: tuple               # (x0, y0) of node (0, 0)
    spacing: tuple              # (hx, hy)
    valid_mask: np.ndarray      # bool (nx, ny)
    tag: str
    source_info: str = ""
    periodic_x: bool = False
    period: float = 0.0

    def __post_init__(self):
        if self.tag not in FIELD_TAGS:
            raise ValidationError(f"unknown field tag {self.tag!r}")
        if self.values.shape != self.valid_mask.shape:
            raise ValidationError("values and valid_mask shapes differ")

    @property
    def shape(self):
        return self.values.shape

    @property
    def h_max(self):
        return max(self.spacing)

    def grid_axes(self):
        nx, ny = self.shape
        xs = self.origin[0] + self.spacing[0] * np.arange(nx)
        ys = self.origin[1] + self.spacing[1] * np.arange(ny)
        return xs, ys

    def frac_index(self, p):
        x, y = float(p[0]), float(p[1])
        fx = (x - self.origin[0]) / self.spacing[0]
        fy = (y - self.origin[1]) / self.spacing[1]
        nx, ny = self.shape
        if self.periodic_x:
            fx = fx % nx
        elif not -1e-9 <= fx <= nx - 1 + 1e-9:
            raise DomainError(f"point {p} outside field window (x)")
        if not -1e-9 <= fy <= ny - 1 + 1e-9:
            raise DomainError(f"point {p} outside field window (y)")
        return fx, fy

    def nearest_cell(self, p):
        fx, fy = self.frac_index(p)
        nx, ny = self.shape
        i = int(round(fx)) % nx if self.periodic_x else min(int(round(fx)), nx - 1)
        return i, min(int(round(fy)), ny - 1)

    def contains(self, p):
        try:
            self.frac_index(p)
        except DomainError:
            return False
        return True

    def _corners(self, p):
        fx, fy = self.frac_index(p)
        nx, ny = self.shape
        i0 = int(math.floor(fx))
        j0 = int(math.floor(fy))
        j0 = min(max(j0, 0), ny - 2)
        tx = fx - i0
        ty = fy - j0
        if self.periodic_x:
            i0 %= nx
            i1 = (i0 + 1) % nx
        else:
            i0 = min(max(i0, 0), nx - 2)
            tx = min(max(fx - i0, 0.0), 1.0)
            i1 = i0 + 1
        return i0, i1, j0, j0 + 1, tx, ty

    def value_at(self, p):
        """Bilinear interpolation; DataError when any stencil corner is masked."""
        i0, i1, j0, j1, tx, ty = self._corners(p)
        m = self.valid_mask
        if not (m[i0, j0] and m[i1, j0] and m[i0, j1] and m[i1, j1]):
            raise DataError(f"point {tuple(p)} touches masked cells")
        v = self.values
        return float((1 - tx) * ((1 - ty) * v[i0, j0] + ty * v[i0, j1])
                     + tx * ((1 - ty) * v[i1, j0] + ty * v[i1, j1]))

    def is_valid_at(self, p):
        if not self.contains(p):
            return False
        i0, i1, j0, j1, _, _ = self._corners(p)
        m = self.valid_mask
        return bool(m[i0, j0] and m[i1, j0] and m[i0, j1] and m[i1, j1])

    def gradient_at(self, p):
        """Covector du at p from centered differences of the interpolant."""
        hx, hy = self.spacing
        dux = (self.value_at((p[0] + 0.5 * hx, p[1]))
               - self.value_at((p[0] - 0.5 * hx, p[1]))) / hx
        duy = (self.value_at((p[0], p[1] + 0.5 * hy))
               - self.value_at((p[0], p[1] - 0.5 * hy))) / hy
        return np.array([dux, duy])

    def cell_center(self, i, j):
        return (self.origin[0] + i * self.spacing[0],
                self.origin[1] + j * self.spacing[1])

    def with_values(self, values, tag=None, source_info=None):
        return replace(self, values=values,
                       tag=self.tag if tag is None else tag,
                       source_info=self.source_info if source_info is None else source_info)


def cell_gradients(fld):
    """Central-difference covector components per cell (one-sided at edges)."""
    v = fld.values
    hx, hy = fld.spacing
    gx = np.empty_like(v)
    gy = np.empty_like(v)
    if fld.periodic_x:
        gx[:] = (np.roll(v, -1, axis=0) - np.roll(v, 1, axis=0)) / (2 * hx)
    else:
        gx[1:-1, :] = (v[2:, :] - v[:-2, :]) / (2 * hx)
        gx[0, :] = (v[1, :] - v[0, :]) / hx
        gx[-1, :] = (v[-1, :] - v[-2, :]) / hx
    gy[:, 1:-1] = (v[:, 2:] - v[:, :-2]) / (2 * hy)
    gy[:, 0] = (v[:, 1] - v[:, 0]) / hy
    gy[:, -1] = (v[:, -1] - v[:, -2]) / hy
    return gx, gy


# ---------------------------------------------------------------------------
# SourceSet

@dataclass
class SourceSet:
    """Closed source set K: isolated points and/or polylines in chart coords."""

    points: list = field(default_factory=list)
    polylines: list = field(default_factory=list)
    label: str = ""

    def __post_init__(self):
        self.points = [(float(p[0]), float(p[1])) for p in self.points]
        self.polylines = [np.asarray(pl, dtype=float).reshape(-1, 2)
                          for pl in self.polylines]
        if not self.points and not all(len(pl) >= 2 for pl in self.polylines):
            pass
        if not self.points and not self.polylines:
            raise PreconditionError("source set must be non-empty")

    @classmethod
    def from_points(cls, pts, label=""):
        return cls(points=list(pts), label=label)

    @classmethod
    def from_polyline(cls, pts, label=""):
        return cls(polylines=[np.asarray(pts, float)], label=label)

    @classmethod
    def from_circle(cls, center, radius, n=256, label=""):
        ang = np.linspace(0.0, 2.0 * math.pi, n + 1)
        pts = np.stack([center[0] + radius * np.cos(ang),
                        center[1] + radius * np.sin(ang)], axis=1)
        return cls(polylines=[pts], label=label or f"circle r={radius}")

    def validate_inside(self, chart):
        # half a cell of slack: seeding handles sources between grid lines
        slack = 0.5 * max(chart.spacing)
        for p in self.points:
            if not chart.contains(p, slack=slack):
                raise DomainError(f"source point {p} outside chart domain")
        for pl in self.polylines:
            for p in pl:
                if not chart.contains(p, slack=slack):
                    raise DomainError(f"source polyline vertex {tuple(p)} outside domain")


# ---------------------------------------------------------------------------
# numba sweep kernel

# 16-direction stencil in angular order; knight moves refine the angular
# quantization so directional error stays small along oblique characteristics.
_DI = np.array([1, 2, 1, 1, 0, -1, -1, -2,
                -1, -2, -1, -1, 0, 1, 1, 2], dtype=np.int64)
_DJ = np.array([0, 1, 1, 2, 1, 2, 1, 1,
                0, -1, -1, -2, -1, -2, -1, -1], dtype=np.int64)
_NDIR = 16


@njit(cache=True, fastmath=True)
def _g_interp(g11, g12, g22, fi, fj, periodic):
    nx, ny = g11.shape
    if periodic:
        fi = fi % nx
        i0 = int(math.floor(fi))
        i1 = (i0 + 1) % nx
        tx = fi - math.floor(fi)
    else:
        if fi < 0.0:
            fi = 0.0
        if fi > nx - 1:
            fi = float(nx - 1)
        i0 = int(math.floor(fi))
        if i0 > nx - 2:
            i0 = nx - 2
        i1 = i0 + 1
        tx = fi - i0
    if fj < 0.0:
        fj = 0.0
    if fj > ny - 1:
        fj = float(ny - 1)
    j0 = int(math.floor(fj))
    if j0 > ny - 2:
        j0 = ny - 2
    j1 = j0 + 1
    ty = fj - j0
    w00 = (1.0 - tx) * (1.0 - ty)
    w01 = (1.0 - tx) * ty
    w10 = tx * (1.0 - ty)
    w11 = tx * ty
    a = w00 * g11[i0, j0] + w01 * g11[i0, j1] + w10 * g11[i1, j0] + w11 * g11[i1, j1]
    b = w00 * g12[i0, j0] + w01 * g12[i0, j1] + w10 * g12[i1, j0] + w11 * g12[i1, j1]
    c = w00 * g22[i0, j0] + w01 * g22[i0, j1] + w10 * g22[i1, j0] + w11 * g22[i1, j1]
    return a, b, c


@njit(cache=True, fastmath=True)
def _sweep_cycle(u, frozen, g11, g12, g22, hx, hy, periodic):
    """One cycle of 4 alternating sweep orderings; returns max value change."""
    nx, ny = u.shape
    max_delta = 0.0
    ndx = np.empty(_NDIR, dtype=np.float64)
    ndy = np.empty(_NDIR, dtype=np.float64)
    nval = np.empty(_NDIR, dtype=np.float64)
    nok = np.empty(_NDIR, dtype=np.bool_)
    nfi = np.empty(_NDIR, dtype=np.float64)
    nfj = np.empty(_NDIR, dtype=np.float64)
    for ordering in range(4):
        xup = ordering == 0 or ordering == 2
        yup = ordering == 0 or ordering == 1
        for ii in range(nx):
            i = ii if xup else nx - 1 - ii
            for jj in range(ny):
                j = jj if yup else ny - 1 - jj
                if frozen[i, j]:
                    continue
                pa = g11[i, j]
                pb = g12[i, j]
                pc = g22[i, j]
                # gather neighbors
                for m in range(_NDIR):
                    di = _DI[m]
                    dj = _DJ[m]
                    ni = i + di
                    nj = j + dj
                    ok = True
                    if periodic:
                        ni = ni % nx
                    elif ni < 0 or ni >= nx:
                        ok = False
                    if nj < 0 or nj >= ny:
                        ok = False
                    nok[m] = ok
                    if ok:
                        nval[m] = u[ni, nj]
                        ndx[m] = di * hx
                        ndy[m] = dj * hy
                        nfi[m] = i + di
                        nfj[m] = j + dj
                    else:
                        nval[m] = np.inf
                best = u[i, j]
                # single-neighbor candidates (trapezoid metric quadrature)
                for m in range(_NDIR):
                    if not nok[m] or not np.isfinite(nval[m]):
                        continue
                    dx = ndx[m]
                    dy = ndy[m]
                    qa, qb, qc = _g_interp(g11, g12, g22, nfi[m], nfj[m], periodic)
                    ea = 0.5 * (pa + qa)
                    eb = 0.5 * (pb + qb)
                    ec = 0.5 * (pc + qc)
                    seg = math.sqrt(ea * dx * dx + 2.0 * eb * dx * dy + ec * dy * dy)
                    cand = nval[m] + seg
                    if cand < best:
                        best = cand
                # two-neighbor simplex edges, closed-form interior minimizer
                for m in range(_NDIR):
                    mb = m + 1 if m < _NDIR - 1 else 0
                    ua = nval[m]
                    ub = nval[mb]
                    if not (nok[m] and nok[mb]):
                        continue
                    if not (np.isfinite(ua) and np.isfinite(ub)):
                        continue
                    ax = ndx[m]
                    ay = ndy[m]
                    ex = ndx[mb] - ax
                    ey = ndy[mb] - ay
                    c2 = pa * ex * ex + 2.0 * pb * ex * ey + pc * ey * ey
                    c1 = pa * ax * ex + pb * (ax * ey + ay * ex) + pc * ay * ey
                    c0 = pa * ax * ax + 2.0 * pb * ax * ay + pc * ay * ay
                    du = ub - ua
                    disc = c2 - du * du
                    if disc <= 1e-300:
                        continue
                    gram = c2 * c0 - c1 * c1
                    if gram < 0.0:
                        gram = 0.0
                    s = (-c1 - du * math.sqrt(gram / disc)) / c2
                    if s <= 0.0 or s >= 1.0:
                        continue
                    qx = ax + s * ex
                    qy = ay + s * ey
                    fi = (1.0 - s) * nfi[m] + s * nfi[mb]
                    fj = (1.0 - s) * nfj[m] + s * nfj[mb]
                    qa, qb, qc = _g_interp(g11, g12, g22, fi, fj, periodic)
                    ea = 0.5 * (pa + qa)
                    eb = 0.5 * (pb + qb)
                    ec = 0.5 * (pc + qc)
                    seg = math.sqrt(ea * qx * qx + 2.0 * eb * qx * qy + ec * qy * qy)
                    cand = ua + s * du + seg
                    if cand < best:
                        best = cand
                old = u[i, j]
                if best < old:
                    u[i, j] = best
                    delta = old - best if np.isfinite(old) else np.inf
                    if delta > max_delta:
                        max_delta = delta
    return max_delta


# ---------------------------------------------------------------------------
# initialization and driver

def _segment_metric_length(chart, p, q):
    """Trapezoid-quadrature metric length of the straight chart segment p->q."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    d = q - p
    g11p, g12p, g22p = (float(c) for c in chart.tensor(p[0], p[1]))
    g11q, g12q, g22q = (float(c) for c in chart.tensor(q[0], q[1]))
    a = 0.5 * (g11p + g11q)
    b = 0.5 * (g12p + g12q)
    c = 0.5 * (g22p + g22q)
    return math.sqrt(max(a * d[0] ** 2 + 2 * b * d[0] * d[1] + c * d[1] ** 2, 0.0))


# a half-plane source below this many cells sits where the conformal factor
# changes by order one per cell, so the collar is seeded from the closed form
_RESOLVED_CELLS = 40.0


def _init_point(chart, u, frozen, xs, ys, p, collar_cells=2):
    hx = xs[1] - xs[0]
    hy = ys[1] - ys[0]
    nx, ny = u.shape
    if chart.kind == "half_plane":
        y_resolved = _RESOLVED_CELLS * max(hx, hy)
        if p[1] < y_resolved:
            # exact metric ball around the deep source: propagation starts
            # only where the grid resolves the metric
            r0 = math.log(y_resolved / p[1]) + 0.5
            X, Y = np.meshgrid(xs, ys, indexing="ij")
            exact = np.arccosh(
                1.0 + ((X - p[0]) ** 2 + (Y - p[1]) ** 2) / (2.0 * Y * p[1]))
            ball = exact <= r0
            np.minimum(u, np.where(ball, exact, np.inf), out=u)
            frozen |= ball
            return
    fx = (p[0] - xs[0]) / hx
    fy = (p[1] - ys[0]) / hy
    for di in range(-collar_cells, collar_cells + 1):
        for dj in range(-collar_cells, collar_cells + 1):
            i = int(round(fx)) + di
            j = int(round(fy)) + dj
            if chart.periodic_x:
                i %= nx
            elif not 0 <= i < nx:
                continue
            if not 0 <= j < ny:
                continue
            node = (xs[i], ys[j])
            dxw = node[0] - p[0]
            if chart.periodic_x:
                L = chart.period
                dxw = (dxw + 0.5 * L) % L - 0.5 * L
            val = _segment_metric_length(chart, p, (p[0] + dxw, node[1]))
            if val < u[i, j]:
                u[i, j] = val
            if val < 1e-14:
                u[i, j] = 0.0
                frozen[i, j] = True


def _init_polyline(chart, u, frozen, xs, ys, pl, collar_cells=2):
    hx = xs[1] - xs[0]
    hy = ys[1] - ys[0]
    nx, ny = u.shape
    for k in range(len(pl) - 1):
        a = pl[k]
        b = pl[k + 1]
        lo_x = min(a[0], b[0]) - collar_cells * hx
        hi_x = max(a[0], b[0]) + collar_cells * hx
        lo_y = min(a[1], b[1]) - collar_cells * hy
        hi_y = max(a[1], b[1]) + collar_cells * hy
        i0 = int(math.floor((lo_x - xs[0]) / hx))
        i1 = int(math.ceil((hi_x - xs[0]) / hx))
        j0 = max(int(math.floor((lo_y - ys[0]) / hy)), 0)
        j1 = min(int(math.ceil((hi_y - ys[0]) / hy)), ny - 1)
        seg = b - a
        seg2 = float(seg @ seg)
        for i_raw in range(i0, i1 + 1):
            i = i_raw % nx if chart.periodic_x else i_raw
            if not 0 <= i < nx:
                continue
            for j in range(j0, j1 + 1):
                node = np.array([xs[i_raw] if not chart.periodic_x else xs[0] + i_raw * hx,
                                 ys[j]])
                t = 0.0 if seg2 == 0.0 else float((node - a) @ seg) / seg2
                t = min(max(t, 0.0), 1.0)
                foot = a + t * seg
                val = _segment_metric_length(chart, foot, node)
                if val < u[i, j]:
                    u[i, j] = val
                if val < 1e-14:
                    u[i, j] = 0.0
                    frozen[i, j] = True


def solve_distance(chart, source, eps_sweep=None, max_sweeps=1000,
                   margin_cells=5, source_info=None):
    """Distance field d_K as a monotone-causal fast-sweeping solution.

    Returns a ScalarField tagged ``distance``: nonnegative, zero exactly on
    source nodes, with a low-confidence margin masked near non-periodic
    boundaries.
    """
    source.validate_inside(chart)
    xs, ys = chart.grid_axes()
    nx, ny = chart.resolution
    g11, g12, g22 = chart.tensor_grids()
    hx, hy = chart.spacing

    u = np.full((nx, ny), np.inf)
    frozen = np.zeros((nx, ny), dtype=bool)
    for p in source.points:
        _init_point(chart, u, frozen, xs, ys, chart.wrap_point(p))
    for pl in source.polylines:
        _init_polyline(chart, u, frozen, xs, ys, pl)
    if not np.any(np.isfinite(u)):
        raise PreconditionError("source rasterization produced no seed nodes")

    if eps_sweep is None:
        scale = math.hypot(chart.bounds[1] - chart.bounds[0],
                           chart.bounds[3] - chart.bounds[2])
        scale *= math.sqrt(float(np.median(g11 + g22)) / 2.0)
        eps_sweep = 1e-9 * scale

    sweeps_done = 0
    delta = np.inf
    while sweeps_done < max_sweeps:
        delta = _sweep_cycle(u, frozen, g11, g12, g22, hx, hy, chart.periodic_x)
        sweeps_done += 4
        if delta < eps_sweep:
            break
    else:
        pass
    if delta >= eps_sweep and sweeps_done >= max_sweeps:
        raise ConvergenceError(
            f"fast sweeping did not converge in {max_sweeps} sweeps", residual=delta)

    mask = np.isfinite(u)
    if margin_cells > 0:
        m = margin_cells
        if not chart.periodic_x:
            mask[:m, :] = False
            mask[-m:, :] = False
        mask[:, :m] = False
        mask[:, -m:] = False
    # keep source nodes valid: they anchor the "vanishes on K" contract
    mask |= frozen

    return ScalarField(values=u, origin=(xs[0], ys[0]), spacing=(hx, hy),
                       valid_mask=mask, tag="distance",
                       source_info=source_info or source.label or "distance solve",
                       periodic_x=chart.periodic_x,
                       period=chart.period if chart.periodic_x else 0.0)


# ---------------------------------------------------------------------------
# residual statistics

def eikonal_residual(chart, fld, exclude=None):
    """Per-cell | |Du|_g - 1 | with upwind differences; summary statistics.

    ``exclude``: optional boolean array of cells to drop (e.g. a singular
    mask).  Returns a dict with max/mean/median and the excluded fraction.
    """
    v = fld.values
    nx, ny = v.shape
    hx, hy = fld.spacing
    if fld.periodic_x:
        left = np.roll(v, 1, axis=0)
        right = np.roll(v, -1, axis=0)
    else:
        left = np.empty_like(v)
        right = np.empty_like(v)
        left[1:, :] = v[:-1, :]
        left[0, :] = np.inf
        right[:-1, :] = v[1:, :]
        right[-1, :] = np.inf
    down = np.empty_like(v)
    up = np.empty_like(v)
    down[:, 1:] = v[:, :-1]
    down[:, 0] = np.inf
    up[:, :-1] = v[:, 1:]
    up[:, -1] = np.inf

    # gradient from the smaller-valued (upwind) neighbor per axis
    use_left = left <= right
    px = np.where(use_left, (v - left) / hx, (right - v) / hx)
    use_down = down <= up
    py = np.where(use_down, (v - down) / hy, (up - v) / hy)

    xs, ys = fld.grid_axes()
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    g11, g12, g22 = (np.broadcast_to(np.asarray(c, float), v.shape)
                     for c in chart.tensor(gx, gy))
    det = g11 * g22 - g12 * g12
    q = (g22 * px * px - 2.0 * g12 * px * py + g11 * py * py) / det
    res = np.abs(np.sqrt(np.maximum(q, 0.0)) - 1.0)

    keep = fld.valid_mask & np.isfinite(res)
    if exclude is not None:
        keep &= ~exclude
    total = int(np.count_nonzero(fld.valid_mask))
    if not np.any(keep):
        raise DataError("all cells masked; no residual statistics")
    vals = res[keep]
    return {
        "max": float(np.max(vals)),
        "mean": float(np.mean(vals)),
        "median": float(np.median(vals)),
        "excluded_fraction": 1.0 - (len(vals) / total if total else 0.0),
        "per_cell": res,
    }


# ---------------------------------------------------------------------------
# CSV / PGM export

def save_field_csv(fld, path):
    """Canonical grid CSV: header, row-major values (17 sig digits), mask."""
    nx, ny = fld.shape
    with open(path, "w") as fh:
        fh.write(f"{nx},{ny},{fld.origin[0]:.17g},{fld.origin[1]:.17g},"
                 f"{fld.spacing[0]:.17g},{fld.spacing[1]:.17g},{fld.tag}\n")
        for i in range(nx):
            fh.write(",".join(f"{v:.17g}" for v in fld.values[i]) + "\n")
        for i in range(nx):
            fh.write(",".join("1" if m else "0" for m in fld.valid_mask[i]) + "\n")


def load_field_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if len(header) != 7:
            raise ValidationError(f"bad field CSV header in {path}")
        nx, ny = int(header[0]), int(header[1])
        origin = (float(header[2]), float(header[3]))
        spacing = (float(header[4]), float(header[5]))
        tag = header[6]
        values = np.empty((nx, ny))
        for i in range(nx):
            row = fh.readline().strip().split(",")
            if len(row) != ny:
                raise ValidationError(f"short value row {i} in {path}")
            values[i] = [float(t) for t in row]
        mask = np.empty((nx, ny), dtype=bool)
        for i in range(nx):
            row = fh.readline().strip().split(",")
            if len(row) != ny:
                raise ValidationError(f"short mask row {i} in {path}")
            mask[i] = [t == "1" for t in row]
    return ScalarField(values=values, origin=origin, spacing=spacing,
                       valid_mask=mask, tag=tag, source_info=f"loaded from {path}")


def save_field_pgm(fld, path):
    """Lossy 8-bit preview (min-max normalized over valid cells)."""
    vals = fld.values
    finite = vals[fld.valid_mask & np.isfinite(vals)]
    lo = float(np.min(finite)) if finite.size else 0.0
    hi = float(np.max(finite)) if finite.size else 1.0
    span = hi - lo if hi > lo else 1.0
    img = np.clip((vals - lo) / span, 0.0, 1.0)
    img = np.where(fld.valid_mask & np.isfinite(vals), img, 0.0)
    pix = np.round(img.T[::-1] * 255).astype(int)  # y up, x right
    ny, nx = pix.shape
    with open(path, "w") as fh:
        fh.write(f"P2\n{nx} {ny}\n255\n")
        for row in pix:
            fh.write(" ".join(str(v) for v in row) + "\n")
