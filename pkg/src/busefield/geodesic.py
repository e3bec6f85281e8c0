"""Geodesic integration and metric verification of rays, lines, and corays.

Geodesics solve x''^k + Gamma^k_ij x'^i x'^j = 0 with a classical 4th-order
one-step method.  Ray and line properties are verified metrically against
distance fields, and corays are obtained by characteristic backtracing from
Busemann-type fields.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import (CorayValidationError, DomainError, PreconditionError)
from .metric import christoffel_at, gnorm_vector, inverse_metric_at, unit_vector
from .report import VerdictReport


@dataclass
class GeodesicPath:
    """Discretized unit-speed curve: states (x, y, vx, vy) at uniform steps."""

    states: np.ndarray      # (N, 4)
    dt: float
    t0: float = 0.0
    truncated: bool = False

    def __len__(self):
        return len(self.states)

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(len(self.states))

    @property
    def t_end(self):
        return self.t0 + self.dt * (len(self.states) - 1)

    @property
    def points(self):
        return self.states[:, :2]

    @property
    def velocities(self):
        return self.states[:, 2:]

    def state_at(self, t):
        """Linear interpolation between stored states."""
        f = (t - self.t0) / self.dt
        n = len(self.states)
        if not -1e-9 <= f <= n - 1 + 1e-9:
            raise PreconditionError(f"parameter {t} outside path range")
        i = min(max(int(math.floor(f)), 0), n - 2)
        w = min(max(f - i, 0.0), 1.0)
        return (1 - w) * self.states[i] + w * self.states[i + 1]

    def point_at(self, t):
        return self.state_at(t)[:2]

    def speed_profile(self, chart):
        return np.array([gnorm_vector(chart, s[:2], s[2:]) for s in self.states])

    def reversed(self):
        st = self.states[::-1].copy()
        st[:, 2:] *= -1.0
        return GeodesicPath(states=st, dt=self.dt, t0=-self.t_end,
                            truncated=self.truncated)


@dataclass
class RaySpec:
    """Candidate ray: basepoint, unit initial velocity, integration horizon."""

    base: tuple
    direction: tuple
    horizon: float

    def __post_init__(self):
        self.base = (float(self.base[0]), float(self.base[1]))
        self.direction = (float(self.direction[0]), float(self.direction[1]))
        if self.horizon <= 0.0:
            raise PreconditionError("ray horizon must be positive")

    def reversed(self):
        return RaySpec(self.base, (-self.direction[0], -self.direction[1]),
                       self.horizon)


@dataclass
class LineSpec:
    """Oriented candidate line: a pair of opposite rays from one basepoint."""

    plus: RaySpec
    minus: RaySpec

    def __post_init__(self):
        if self.plus.base != self.minus.base:
            raise PreconditionError("line rays must share a basepoint")
        if (self.plus.direction[0] != -self.minus.direction[0]
                or self.plus.direction[1] != -self.minus.direction[1]):
            raise PreconditionError("line rays must have exactly opposite directions")

    @property
    def base(self):
        return self.plus.base

    def reversed(self):
        return LineSpec(plus=self.minus, minus=self.plus)


def ray_spec(chart, base, direction, horizon, normalize=True):
    """Build a RaySpec with a unit direction at the basepoint."""
    chart.require_inside(base)
    d = np.asarray(direction, float)
    if normalize:
        d = unit_vector(chart, base, d)
    else:
        n = gnorm_vector(chart, base, d)
        if abs(n - 1.0) > 1e-9:
            raise PreconditionError(f"direction not unit-speed (|v|_g = {n})")
    return RaySpec(tuple(base), tuple(d), horizon)


def line_spec(chart, base, direction, horizon, normalize=True):
    plus = ray_spec(chart, base, direction, horizon, normalize=normalize)
    return LineSpec(plus=plus, minus=plus.reversed())


# ---------------------------------------------------------------------------
# integration

def _geodesic_rhs(chart, state):
    x, y, vx, vy = state
    gam = christoffel_at(chart, (x, y))
    ax = -(gam[0, 0, 0] * vx * vx + 2 * gam[0, 0, 1] * vx * vy + gam[0, 1, 1] * vy * vy)
    ay = -(gam[1, 0, 0] * vx * vx + 2 * gam[1, 0, 1] * vx * vy + gam[1, 1, 1] * vy * vy)
    return np.array([vx, vy, ax, ay])


def integrate_geodesic(chart, base, v0, horizon, dt=0.01, t0=0.0,
                       clip_domain=True):
    """Integrate the geodesic ODE with RK4; terminate early on domain exit.

    Positions are stored unwrapped (continuous x even on periodic charts).
    With ``clip_domain=False`` the path may leave the chart rectangle; this
    is only meaningful for kinds whose tensor extends analytically (all
    built-ins) and is used to reach truncation points of escaping rays.
    """
    if clip_domain:
        chart.require_inside(base)
    speed = gnorm_vector(chart, base, v0)
    if abs(speed - 1.0) > 1e-9:
        raise PreconditionError(f"initial velocity not unit (|v0|_g = {speed:.3e})")
    if dt > horizon:
        raise PreconditionError("dt exceeds the integration horizon")

    n_steps = int(round(horizon / dt))
    dt = horizon / n_steps
    state = np.array([base[0], base[1], v0[0], v0[1]], float)
    states = [state.copy()]
    truncated = False
    for _ in range(n_steps):
        k1 = _geodesic_rhs(chart, state)
        k2 = _geodesic_rhs(chart, state + 0.5 * dt * k1)
        k3 = _geodesic_rhs(chart, state + 0.5 * dt * k2)
        k4 = _geodesic_rhs(chart, state + dt * k3)
        nxt = state + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if clip_domain and not chart.contains(nxt[:2], slack=1e-12):
            truncated = True
            break
        if chart.kind == "half_plane" and nxt[1] <= 0.0:
            truncated = True
            break
        state = nxt
        states.append(state.copy())
    if len(states) < 2:
        raise DomainError("geodesic exits the domain immediately")
    return GeodesicPath(states=np.array(states), dt=dt, t0=t0, truncated=truncated)


def integrate_ray(chart, ray, dt=0.01):
    return integrate_geodesic(chart, ray.base, ray.direction, ray.horizon, dt=dt)


# ---------------------------------------------------------------------------
# distance oracles

class GridDistanceOracle:
    """Pairwise distance via cached point-source solves on the chart grid."""

    def __init__(self, chart, **solver_kwargs):
        self.chart = chart
        self.solver_kwargs = solver_kwargs
        self._cache = {}

    def field_from(self, p):
        key = (round(p[0], 12), round(p[1], 12))
        if key not in self._cache:
            from .eikonal import SourceSet, solve_distance
            self._cache[key] = solve_distance(
                self.chart, SourceSet.from_points([p]), **self.solver_kwargs)
        return self._cache[key]

    def __call__(self, p, q):
        return self.field_from(p).value_at(q)


# ---------------------------------------------------------------------------
# metric verification

def _sample_pairs(t_max, samples, anchors):
    """Pairs (t_anchor, t) log-spaced in separation, deterministic."""
    pairs = []
    per_anchor = max(samples // max(len(anchors), 1), 1)
    for ta in anchors:
        room = t_max - ta
        if room <= 0:
            continue
        seps = np.geomspace(room / 2 ** (per_anchor - 1), room, per_anchor)
        for s in seps:
            pairs.append((ta, min(ta + s, t_max)))
    return pairs


def is_ray(chart, path, dist=None, samples=32, tol=None):
    """Check d(gamma(t_i), gamma(t_j)) >= |t_j - t_i| - tol on sampled pairs."""
    if abs(path.t0) > 1e-12:
        raise PreconditionError("is_ray expects a forward path with t0 = 0")
    if dist is None:
        dist = GridDistanceOracle(chart)
    t_max = path.t_end
    anchors = [0.0, t_max / 2.0]
    pairs = _sample_pairs(t_max, samples, anchors)
    if not pairs:
        raise PreconditionError("path horizon too short for the requested samples")
    if tol is None:
        tol = 2.0 * max(chart.h_max, path.dt)
    worst = 0.0
    worst_pair = None
    used = 0
    for ta, tb in pairs:
        pa = path.point_at(ta)
        pb = path.point_at(tb)
        fld = dist.field_from(tuple(pa))
        if not fld.is_valid_at(pb):
            continue
        used += 1
        violation = (tb - ta) - fld.value_at(pb)
        if violation > worst:
            worst = violation
            worst_pair = (ta, tb)
    if used == 0:
        raise PreconditionError("no sample pair lies inside the valid region")
    return VerdictReport(name="is_ray", passed=worst <= tol,
                         worst_violation=worst, tolerance=tol,
                         details={"pairs": used, "worst_pair": worst_pair})


def glue_line(chart, plus_path, minus_path, dist=None, samples=16,
              tol=None, tol_dir=1e-6):
    """Concatenate opposite rays through a common basepoint and verify the
    two-sided minimizing property on sampled pairs s < 0 < s'.

    Returns (glued_path, VerdictReport).  A velocity mismatch at the joint is
    a precondition failure (not a geodesic), distinct from the metric line
    test failing.
    """
    b1 = plus_path.states[0]
    b2 = minus_path.states[0]
    if np.max(np.abs(b1[:2] - b2[:2])) > 1e-9:
        raise PreconditionError("rays do not share a basepoint")
    vsum = b1[2:] + b2[2:]
    if gnorm_vector(chart, b1[:2], vsum) > tol_dir:
        raise PreconditionError(
            "initial velocities are not opposite at the joint: not a geodesic")

    rev = minus_path.reversed()
    states = np.vstack([rev.states[:-1], plus_path.states])
    glued = GeodesicPath(states=states, dt=plus_path.dt, t0=rev.t0,
                         truncated=plus_path.truncated or minus_path.truncated)

    if dist is None:
        dist = GridDistanceOracle(chart)
    if tol is None:
        tol = 2.0 * max(chart.h_max, plus_path.dt)
    s_max = plus_path.t_end
    s_min = minus_path.t_end
    anchor_ts = [-s_min, -s_min / 2.0, -s_min / 4.0]
    plus_ts = np.linspace(s_max / samples, s_max, samples // 2 + 1)
    worst = 0.0
    worst_pair = None
    used = 0
    for s in anchor_ts:
        pa = glued.point_at(s)
        if not chart.contains(pa):
            continue
        fld = dist.field_from(tuple(pa))
        for sp in plus_ts:
            pb = glued.point_at(sp)
            if not fld.is_valid_at(pb):
                continue
            used += 1
            violation = (sp - s) - fld.value_at(pb)
            if violation > worst:
                worst = violation
                worst_pair = (s, sp)
    if used == 0:
        raise PreconditionError("no glue sample pair lies inside the valid region")
    report = VerdictReport(name="glue_line", passed=worst <= tol,
                           worst_violation=worst, tolerance=tol,
                           details={"worst_pair": worst_pair, "pairs": used})
    return glued, report


# ---------------------------------------------------------------------------
# coray backtracing

@dataclass
class CorayTrace:
    """A backtraced coray with its measured descent-slope defect."""

    path: GeodesicPath
    slope: float
    slope_defect: float
    gradient: np.ndarray
    gradient_set: list


def descent_direction(chart, p, covector):
    """Unit tangent -g^{-1} du of steepest metric descent."""
    ginv = inverse_metric_at(chart, p)
    v = -(ginv @ np.asarray(covector, float))
    return unit_vector(chart, p, v)


def coray_slope(fld, path, skip=0.0):
    """Least-squares slope of the field along the path (valid samples only)."""
    ts, bs = [], []
    for t, p in zip(path.times, path.points):
        if t - path.t0 < skip:
            continue
        if fld.is_valid_at(p):
            ts.append(t)
            bs.append(fld.value_at(p))
    if len(ts) < 8:
        raise PreconditionError("too few valid samples along the path for a slope fit")
    ts = np.asarray(ts)
    bs = np.asarray(bs)
    slope = float(np.polyfit(ts, bs, 1)[0])
    return slope, len(ts)


def trace_coray(chart, busemann, start, horizon, dt=0.01, gradient=None,
                prev_direction=None, tol_slope=0.05, strict=True):
    """Backtrace a coray from a Busemann-type field by following -g^{-1} du.

    A reachable gradient is selected at ``start`` (tie-break: smallest angle
    to ``prev_direction``, else lexicographic), the geodesic is integrated
    from its unit descent direction, and the field is required to decrease
    with slope -1 +/- tol_slope along the result.
    """
    from .busemann import superdifferential

    if not busemann.is_valid_at(start):
        raise DataError(f"start point {tuple(start)} is masked in the field")
    h = busemann.h_max
    if gradient is not None:
        grads = [np.asarray(gradient, float)]
    else:
        sd = superdifferential(chart, busemann, start, radius=2.5 * h)
        grads = sd.representatives
        if not grads:
            raise DataError(f"no reachable gradient at {tuple(start)}")
    if prev_direction is not None and len(grads) > 1:
        prev = np.asarray(prev_direction, float)
        scored = []
        for gr in grads:
            v = descent_direction(chart, start, gr)
            cosang = float(v @ prev) / max(np.linalg.norm(v) * np.linalg.norm(prev), 1e-300)
            scored.append((-cosang, tuple(gr)))
        chosen = grads[int(np.argmin([s[0] for s in scored]))]
    else:
        chosen = sorted(grads, key=lambda g: (g[0], g[1]))[0]

    v0 = descent_direction(chart, start, chosen)
    path = integrate_geodesic(chart, start, v0, horizon, dt=dt)
    slope, _ = coray_slope(busemann, path, skip=2.0 * h)
    defect = abs(slope + 1.0)
    if strict and defect > tol_slope:
        raise CorayValidationError(
            f"coray slope {slope:.4f} deviates from -1 beyond {tol_slope}",
            slope_defect=defect)
    return CorayTrace(path=path, slope=slope, slope_defect=defect,
                      gradient=np.asarray(chosen, float),
                      gradient_set=[np.asarray(g, float) for g in grads])


# ---------------------------------------------------------------------------
# path CSV export

def save_path_csv(path_obj, file_path, chart=None):
    meta = ""
    if chart is not None:
        meta = (f" # kind={chart.kind} bounds={chart.bounds}"
                f" resolution={chart.resolution} periodic_x={chart.periodic_x}")
    with open(file_path, "w") as fh:
        fh.write(f"t,x,y,vx,vy{meta}\n")
        for t, s in zip(path_obj.times, path_obj.states):
            fh.write(f"{t:.17g},{s[0]:.17g},{s[1]:.17g},{s[2]:.17g},{s[3]:.17g}\n")
