"""Rectangular 2-D metric charts: tensor evaluation, Christoffel symbols, norms.

A chart carries a smooth SPD metric tensor field over a rectangle in chart
coordinates, with optional periodicity in x (cylinder-type charts).  Built-in
kinds have closed-form tensors and Christoffel symbols; custom kinds are
defined by expression strings for g11, g12, g22 and fall back to central
finite differences for the Christoffel symbols.
"""

import ast
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ValidationError

KINDS = ("euclidean", "half_plane", "cylinder", "paraboloid", "custom")

_ALLOWED_FUNCS = {
    "exp": np.exp,
    "ln": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "sqrt": np.sqrt,
}

_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Add, ast.Sub, ast.Mult,
    ast.Div, ast.Pow, ast.USub, ast.UAdd, ast.Constant, ast.Name,
    ast.Call, ast.Load,
)


def compile_expression(text):
    """Compile an arithmetic expression in x, y into a numpy-aware function.

    Supported: + - * / ^, functions exp, ln, sin, cos, sqrt, variables x, y
    and numeric literals.  Anything else raises ValidationError.
    """
    source = text.replace("^", "**")
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ValidationError(f"cannot parse expression {text!r}: {exc}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ValidationError(
                f"expression {text!r}: construct {type(node).__name__} not allowed")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _ALLOWED_FUNCS:
                raise ValidationError(f"expression {text!r}: unknown function call")
            if node.keywords or len(node.args) != 1:
                raise ValidationError(f"expression {text!r}: functions take one argument")
        if isinstance(node, ast.Name) and node.id not in ("x", "y") \
                and node.id not in _ALLOWED_FUNCS:
            raise ValidationError(f"expression {text!r}: unknown name {node.id!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ValidationError(f"expression {text!r}: non-numeric literal")
    code = compile(tree, "<metric expression>", "eval")

    def evaluate(x, y):
        return eval(code, {"__builtins__": {}}, {"x": x, "y": y, **_ALLOWED_FUNCS})

    return evaluate


@dataclass(frozen=True)
class MetricChart:
    """Rectangular coordinate chart with an SPD metric tensor field.

    ``tensor(x, y)`` returns the three independent components
    ``(g11, g12, g22)`` and accepts scalars or numpy arrays.
    """

    bounds: tuple          # (x_min, x_max, y_min, y_max)
    resolution: tuple      # (n_x, n_y)
    kind: str
    tensor: object = field(repr=False)
    periodic_x: bool = False

    def __post_init__(self):
        x_min, x_max, y_min, y_max = self.bounds
        nx, ny = self.resolution
        if self.kind not in KINDS:
            raise ValidationError(f"unknown chart kind {self.kind!r}")
        if not (x_max > x_min and y_max > y_min):
            raise ValidationError("degenerate chart bounds")
        if nx < 4 or ny < 4:
            raise ValidationError("resolution must be at least 4x4")
        if self.kind == "half_plane" and y_min <= 0.0:
            raise ValidationError("half_plane charts require y_min > 0")
        self._validate_spd_on_grid()

    # -- geometry -----------------------------------------------------------

    @property
    def period(self):
        return self.bounds[1] - self.bounds[0]

    @property
    def spacing(self):
        x_min, x_max, y_min, y_max = self.bounds
        nx, ny = self.resolution
        hx = (x_max - x_min) / nx if self.periodic_x else (x_max - x_min) / (nx - 1)
        hy = (y_max - y_min) / (ny - 1)
        return hx, hy

    @property
    def h_max(self):
        return max(self.spacing)

    @property
    def h_fd(self):
        return min(self.spacing) / 4.0

    def grid_axes(self):
        x_min, x_max, y_min, y_max = self.bounds
        nx, ny = self.resolution
        hx, hy = self.spacing
        xs = x_min + hx * np.arange(nx)
        ys = y_min + hy * np.arange(ny)
        return xs, ys

    def wrap_point(self, p):
        """Wrap the x coordinate into the fundamental domain if periodic."""
        x, y = float(p[0]), float(p[1])
        if self.periodic_x:
            x_min = self.bounds[0]
            x = x_min + (x - x_min) % self.period
        return x, y

    def contains(self, p, slack=0.0):
        x, y = self.wrap_point(p)
        x_min, x_max, y_min, y_max = self.bounds
        ok_y = y_min - slack <= y <= y_max + slack
        ok_x = True if self.periodic_x else x_min - slack <= x <= x_max + slack
        return ok_x and ok_y

    def require_inside(self, p):
        if not self.contains(p, slack=1e-12):
            raise DomainError(f"point {tuple(p)} outside chart domain {self.bounds}")

    # -- validation ---------------------------------------------------------

    def _validate_spd_on_grid(self):
        xs, ys = self.grid_axes()
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        g11, g12, g22 = (np.broadcast_to(np.asarray(c, dtype=float), gx.shape)
                         for c in self.tensor(gx, gy))
        tr = g11 + g22
        det = g11 * g22 - g12 * g12
        lam_min = 0.5 * (tr - np.sqrt(np.maximum(tr * tr - 4.0 * det, 0.0)))
        worst = float(np.min(lam_min))
        if not np.isfinite(worst) or worst <= 1e-12:
            raise ValidationError(
                f"metric tensor not SPD on grid (min eigenvalue {worst:.3e})")

    # -- node arrays for solvers -------------------------------------------

    def tensor_grids(self):
        """Metric components sampled on the grid nodes, shape (nx, ny) each."""
        xs, ys = self.grid_axes()
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        g11, g12, g22 = self.tensor(gx, gy)
        shape = gx.shape
        return (np.ascontiguousarray(np.broadcast_to(np.asarray(g11, float), shape)),
                np.ascontiguousarray(np.broadcast_to(np.asarray(g12, float), shape)),
                np.ascontiguousarray(np.broadcast_to(np.asarray(g22, float), shape)))


# -- chart constructors -----------------------------------------------------

def euclidean_chart(bounds=(-2.0, 2.0, -2.0, 2.0), resolution=(128, 128)):
    return MetricChart(bounds, resolution, "euclidean",
                       lambda x, y: (np.ones_like(np.asarray(x, float)),
                                     np.zeros_like(np.asarray(x, float)),
                                     np.ones_like(np.asarray(x, float))))


def half_plane_chart(bounds=(-1.0, 1.0, 0.5, 3.0), resolution=(128, 128)):
    """Hyperbolic upper half-plane: g = diag(1/y^2, 1/y^2)."""
    def tensor(x, y):
        inv = 1.0 / (np.asarray(y, float) ** 2)
        return inv, np.zeros_like(inv), inv
    return MetricChart(bounds, resolution, "half_plane", tensor)


def cylinder_chart(bounds=(0.0, 2.0 * math.pi, -2.0, 2.0), resolution=(128, 128)):
    """Flat cylinder: euclidean tensor, x periodic with period x_max - x_min."""
    return MetricChart(bounds, resolution, "cylinder",
                       lambda x, y: (np.ones_like(np.asarray(x, float)),
                                     np.zeros_like(np.asarray(x, float)),
                                     np.ones_like(np.asarray(x, float))),
                       periodic_x=True)


def paraboloid_chart(bounds=(-3.0, 3.0, -3.0, 3.0), resolution=(128, 128)):
    """Graph chart of the surface z = (x^2 + y^2)/2: g = I + grad f grad f^T."""
    def tensor(x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        return 1.0 + x * x, x * y, 1.0 + y * y
    return MetricChart(bounds, resolution, "paraboloid", tensor)


def custom_chart(bounds, resolution, g11, g12, g22, periodic_x=False):
    """Chart whose tensor components are arithmetic expressions in x and y."""
    f11, f12, f22 = (compile_expression(s) for s in (g11, g12, g22))

    def tensor(x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        one = np.ones_like(x)
        return f11(x, y) * one, f12(x, y) * one, f22(x, y) * one

    chart = MetricChart(bounds, resolution, "custom", tensor, periodic_x=periodic_x)
    if periodic_x:
        xs, ys = chart.grid_axes()
        left = np.array([tensor(xs[0], y) for y in ys])
        right = np.array([tensor(xs[0] + chart.period, y) for y in ys])
        if not np.allclose(left, right, rtol=1e-9, atol=1e-12):
            raise ValidationError("custom tensor is not x-periodic with the chart period")
    return chart


def make_chart(kind, bounds, resolution, periodic_x=False, expressions=None):
    if kind == "euclidean":
        return euclidean_chart(bounds, resolution)
    if kind == "half_plane":
        return half_plane_chart(bounds, resolution)
    if kind == "cylinder":
        return cylinder_chart(bounds, resolution)
    if kind == "paraboloid":
        return paraboloid_chart(bounds, resolution)
    if kind == "custom":
        if expressions is None:
            raise ValidationError("custom charts need g11/g12/g22 expressions")
        return custom_chart(bounds, resolution, *expressions, periodic_x=periodic_x)
    raise ValidationError(f"unknown chart kind {kind!r}")


# -- pointwise evaluation ---------------------------------------------------

def metric_at(chart, p):
    """Metric tensor at a point as a 2x2 SPD matrix."""
    chart.require_inside(p)
    x, y = chart.wrap_point(p)
    g11, g12, g22 = (float(c) for c in chart.tensor(x, y))
    g = np.array([[g11, g12], [g12, g22]])
    if g11 <= 0.0 or g11 * g22 - g12 * g12 <= 0.0:
        raise ValidationError(f"tensor not SPD at {tuple(p)}")
    return g


def inverse_metric_at(chart, p):
    g = metric_at(chart, p)
    det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
    return np.array([[g[1, 1], -g[0, 1]], [-g[1, 0], g[0, 0]]]) / det


def gnorm_covector(chart, p, cov):
    """Norm sqrt(g^{ij} cov_i cov_j) of a covector at p."""
    ginv = inverse_metric_at(chart, p)
    cov = np.asarray(cov, float)
    return float(np.sqrt(max(cov @ ginv @ cov, 0.0)))


def gnorm_vector(chart, p, vec):
    """Norm sqrt(g_{ij} v^i v^j) of a tangent vector at p."""
    g = metric_at(chart, p)
    vec = np.asarray(vec, float)
    return float(np.sqrt(max(vec @ g @ vec, 0.0)))


def unit_vector(chart, p, vec):
    """Rescale a tangent vector to unit g-norm."""
    n = gnorm_vector(chart, p, vec)
    if n == 0.0:
        raise ValidationError("cannot normalize the zero vector")
    return np.asarray(vec, float) / n


def christoffel_fd(chart, p, h=None):
    """Christoffel symbols from central differences of the tensor.

    Returns Gamma[k, i, j], symmetric in (i, j).  The stencil must fit in the
    domain (x wraps if periodic).
    """
    x, y = chart.wrap_point(p)
    if h is None:
        h = chart.h_fd
    x_min, x_max, y_min, y_max = chart.bounds
    if not chart.periodic_x and not (x_min + h <= x <= x_max - h):
        raise DomainError("finite-difference stencil exits domain in x")
    if not (y_min + h <= y <= y_max - h):
        raise DomainError("finite-difference stencil exits domain in y")

    def g_mat(px, py):
        g11, g12, g22 = (float(c) for c in chart.tensor(px, py))
        return np.array([[g11, g12], [g12, g22]])

    dg = np.empty((2, 2, 2))  # dg[l, i, j] = d_l g_ij
    dg[0] = (g_mat(x + h, y) - g_mat(x - h, y)) / (2.0 * h)
    dg[1] = (g_mat(x, y + h) - g_mat(x, y - h)) / (2.0 * h)
    ginv = inverse_metric_at(chart, (x, y))
    gamma = np.empty((2, 2, 2))
    for k in range(2):
        for i in range(2):
            for j in range(2):
                s = 0.0
                for l in range(2):
                    s += ginv[k, l] * (dg[i, l, j] + dg[j, i, l] - dg[l, i, j])
                gamma[k, i, j] = 0.5 * s
    return gamma


def christoffel_at(chart, p):
    """Christoffel symbols Gamma[k, i, j] at p (closed form for built-ins).

    Built-in kinds evaluate their closed form anywhere the tensor extends
    analytically; custom kinds need the finite-difference stencil inside the
    domain.
    """
    x, y = chart.wrap_point(p)
    gamma = np.zeros((2, 2, 2))
    if chart.kind in ("euclidean", "cylinder"):
        return gamma
    if chart.kind == "half_plane":
        inv_y = 1.0 / y
        gamma[0, 0, 1] = gamma[0, 1, 0] = -inv_y
        gamma[1, 0, 0] = inv_y
        gamma[1, 1, 1] = -inv_y
        return gamma
    if chart.kind == "paraboloid":
        w = 1.0 / (1.0 + x * x + y * y)
        gamma[0, 0, 0] = gamma[0, 1, 1] = x * w
        gamma[1, 0, 0] = gamma[1, 1, 1] = y * w
        return gamma
    return christoffel_fd(chart, p)
