"""Planar systems x' = y, y' = -g(x) - y*phi(x, y) and their scalar fields.

Two system forms are supported: a linear restoring force g(x) = k*x with
k > 0, and a nonlinear restoring force that is admissible in the working
window (x*g(x) > 0 off the origin and g'(0) > 0).  The nonlinear form is
reduced to the linear one by the Conti-Filippov change of coordinates
(u, v) = (energy_coordinate(x), y), which this module implements together
with the scalar fields used downstream:

* angular_speed:  y^2 + x^2 + x*y*phi(x, y); its sign is opposite to the
  angular velocity of solutions, and its zero set is the curve where orbits
  reverse their angular direction.
* star_scalar:    s = x*phi_x + y*phi_y, the radial derivative of the
  damping; strict sign-constancy of s off the origin is the uniqueness
  hypothesis checked by the certifier.  The companion value -y^2*s is
  recorded alongside.
* lyapunov/energy pairs V, Vdot and E, Edot used by the trapping-region
  checks.

Systems are immutable; every operation here is pure, and the lazily built
quadrature grid behind the restoring integral is guarded by a lock so that
concurrent readers are safe.
"""

from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Union

import numpy as np
from scipy import integrate, optimize

from .common import StarcycleError, Window
from .expressions import BinOp, Call, Const, Dual2, ExprAst, Neg, Param, Pow, Var, parse


class SystemFormError(StarcycleError):
    """Operation called on the wrong system form."""


class AdmissibilityError(StarcycleError):
    """Nonlinear restoring force fails x*g(x) > 0 or g'(0) > 0 sampling."""


class WindowExceededError(StarcycleError):
    """Energy-coordinate inversion requested outside the working window."""


class QuadratureError(StarcycleError):
    """Adaptive quadrature of the restoring force failed to converge."""


@dataclass(frozen=True)
class LinearG:
    """Restoring force g(x) = k*x, k > 0."""

    k: float = 1.0


@dataclass(frozen=True)
class NonlinearG:
    """Marker for an admissible nonlinear restoring force."""


Form = Union[LinearG, NonlinearG]

# Abscissas used to detect/validate linearity of g by sampling g(x)/x.
_LINEARITY_XS = (1e-3, 1e-2, 1e-1, 0.5, 1.0, 2.0, 5.0, 10.0)

_GRID_NODES = 512  # quadrature grid resolution across the window


@dataclass(frozen=True)
class PlanarSystem:
    """Immutable pair (phi, g) with its form tag and working window."""

    phi: ExprAst
    g: ExprAst
    form: Form
    window: Window = Window()

    def __post_init__(self):
        object.__setattr__(self, "_quad_lock", threading.Lock())

    @property
    def is_linear(self) -> bool:
        return isinstance(self.form, LinearG)

    @cached_property
    def phi_fn(self) -> Callable[[float, float], float]:
        return self.phi.compiled()

    @cached_property
    def g_fn(self) -> Callable[[float, float], float]:
        return self.g.compiled()

    @cached_property
    def gprime0(self) -> float:
        return self.g.eval_dual(0.0, 0.0).dx

    def normalized(self) -> "PlanarSystem":
        """Equivalent system with k = 1 (time axis rescaled by sqrt(k)).

        The damping becomes phi(x, sqrt(k)*y)/sqrt(k) by the substitution
        tau = sqrt(k)*t; orbits map by y -> y/sqrt(k) and periods by
        T -> T/sqrt(k).  Identity for k = 1 and for nonlinear systems.
        """
        if not self.is_linear or self.form.k == 1.0:
            return self
        c = math.sqrt(self.form.k)
        root = BinOp("/", _substitute_scaled_y(self.phi.root, c), Const(c))
        phi_hat = ExprAst(root, dict(self.phi.params))
        return PlanarSystem(phi_hat, parse("x"), LinearG(1.0), self.window)

    # -- restoring integral machinery (nonlinear form) --

    @cached_property
    def _quad_grid(self):
        """Cumulative integral of g on a fixed symmetric grid (build once)."""
        xs = np.linspace(-self.window.x_max, self.window.x_max, _GRID_NODES + 1)
        g1 = self.g_fn
        vals = np.empty_like(xs)
        mid = _GRID_NODES // 2  # xs[mid] == 0.0 for the symmetric grid
        vals[mid] = 0.0
        for i in range(mid, _GRID_NODES):
            vals[i + 1] = vals[i] + _quad_segment(g1, xs[i], xs[i + 1])
        for i in range(mid, 0, -1):
            vals[i - 1] = vals[i] + _quad_segment(g1, xs[i], xs[i - 1])
        return xs, vals


def _quad_segment(g1: Callable[[float, float], float], a: float, b: float) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(lambda s: g1(s, 0.0), a, b,
                                    epsabs=1e-13, epsrel=1e-12, limit=200)
        except integrate.IntegrationWarning as w:
            raise QuadratureError(
                f"quadrature of g did not converge on [{a}, {b}]: {w}") from None
    return val


def _substitute_scaled_y(node, c: float):
    """Rebuild a tree with y replaced by (c * y)."""
    if isinstance(node, Var):
        return BinOp("*", Const(c), Var("y")) if node.name == "y" else node
    if isinstance(node, (Const, Param)):
        return node
    if isinstance(node, Neg):
        return Neg(_substitute_scaled_y(node.arg, c))
    if isinstance(node, BinOp):
        return BinOp(node.op, _substitute_scaled_y(node.left, c),
                     _substitute_scaled_y(node.right, c))
    if isinstance(node, Pow):
        return Pow(_substitute_scaled_y(node.base, c), node.exponent)
    if isinstance(node, Call):
        return Call(node.func, _substitute_scaled_y(node.arg, c))
    raise TypeError(f"unknown node {node!r}")


def make_system(phi: str | ExprAst, g: str | ExprAst = "x",
                params: dict[str, float] | None = None,
                window: Window = Window(),
                form: Form | None = None) -> PlanarSystem:
    """Build and validate a system from damping and restoring expressions.

    The restoring force must be a function of x alone.  Its form is
    auto-detected by sampling g(x)/x unless given explicitly: a constant
    ratio (to 1e-9 relative) means LinearG with that slope, which must be
    positive; anything else is NonlinearG and must pass the admissibility
    sampling (x*g(x) > 0 for x != 0 in the window, g'(0) > 0).
    """
    if isinstance(phi, str):
        phi = parse(phi, params)
    if isinstance(g, str):
        g = parse(g, params)
    if "y" in g.variables():
        raise AdmissibilityError("the restoring force g must depend on x only")

    detected = _detect_linear(g, window)
    if form is None:
        form = LinearG(detected) if detected is not None else NonlinearG()
    if isinstance(form, LinearG):
        if detected is None:
            raise SystemFormError("g is not linear; cannot use the LinearG form")
        form = LinearG(detected)
        if form.k <= 0:
            raise AdmissibilityError(f"linear restoring slope must be positive, got {form.k}")
    else:
        _check_admissible(g, window)
    return PlanarSystem(phi, g, form, window)


def _detect_linear(g: ExprAst, window: Window) -> float | None:
    """Slope k if g(x)/x is constant on the probe set, else None."""
    ratios = []
    for ax in _LINEARITY_XS:
        if ax > window.x_max:
            continue
        for x in (ax, -ax):
            try:
                ratios.append(g.eval(x, 0.0) / x)
            except StarcycleError:
                return None
    k = ratios[0]
    spread = max(ratios) - min(ratios)
    if spread <= 1e-9 * (1.0 + abs(k)):
        return k
    return None


def _check_admissible(g: ExprAst, window: Window) -> None:
    xs = np.geomspace(1e-3, window.x_max, 48)
    for ax in xs:
        for x in (ax, -ax):
            if x * g.eval(x, 0.0) <= 0.0:
                raise AdmissibilityError(
                    f"x*g(x) must be positive for x != 0; violated at x = {x}")
    gp0 = g.eval_dual(0.0, 0.0).dx
    if not gp0 > 0.0:
        raise AdmissibilityError(f"g'(0) must be positive, got {gp0}")


# ---------------------------------------------------------------------------
# Vector field and scalar fields
# ---------------------------------------------------------------------------

def vector_field(sys: PlanarSystem, p) -> tuple[float, float]:
    """Velocity (y, -g(x) - y*phi(x, y)) at the point p = (x, y)."""
    x, y = float(p[0]), float(p[1])
    return y, -sys.g_fn(x, 0.0) - y * sys.phi_fn(x, y)


def _require_linear(sys: PlanarSystem, what: str) -> PlanarSystem:
    if not sys.is_linear:
        raise SystemFormError(
            f"{what} is defined for the linear form; apply transform() first")
    return sys.normalized()


def angular_speed(sys: PlanarSystem, x: float, y: float) -> float:
    """y^2 + x^2 + x*y*phi(x, y), with sign opposite to the angular velocity.

    Requires the linear form (k is normalized to 1 internally).
    """
    nsys = _require_linear(sys, "angular_speed")
    return y * y + x * x + x * y * nsys.phi_fn(x, y)


def star_scalar(sys: PlanarSystem, x: float, y: float) -> tuple[float, float]:
    """Radial derivative s = x*phi_x + y*phi_y and the value -y^2*s.

    Strict sign-constancy of s off the origin is the limit-cycle uniqueness
    hypothesis for the linear form.
    """
    nsys = _require_linear(sys, "star_scalar")
    d = nsys.phi.eval_dual(x, y)
    s = x * d.dx + y * d.dy
    return s, -(y * y) * s


def lyapunov_value(x: float, y: float) -> float:
    """V = (x^2 + y^2)/2."""
    return 0.5 * (x * x + y * y)


def lyapunov_rate(sys: PlanarSystem, x: float, y: float) -> float:
    """Vdot = -y^2 * phi(x, y) along solutions of the k=1 linear form."""
    nsys = _require_linear(sys, "lyapunov_rate")
    return -(y * y) * nsys.phi_fn(x, y)


def restoring_integral(sys: PlanarSystem, x: float) -> float:
    """G(x), the integral of g from 0 to x (closed form for the linear case).

    Nonlinear systems use adaptive quadrature against a memoized grid;
    absolute accuracy 1e-10 inside the window.
    """
    if sys.is_linear:
        return 0.5 * sys.form.k * x * x
    if x == 0.0:
        return 0.0
    with sys._quad_lock:
        xs, vals = sys._quad_grid
    if x >= xs[-1]:
        base_i = len(xs) - 1
    elif x <= xs[0]:
        base_i = 0
    else:
        base_i = int(np.searchsorted(xs, x))
        # pick nearest node to keep the residual quadrature short
        if base_i > 0 and x - xs[base_i - 1] < xs[base_i] - x:
            base_i -= 1
    return vals[base_i] + _quad_segment(sys.g_fn, xs[base_i], x)


def energy_value(sys: PlanarSystem, x: float, y: float) -> float:
    """E = G(x) + y^2/2, the conserved energy of the undamped core."""
    return restoring_integral(sys, x) + 0.5 * y * y


def energy_rate(sys: PlanarSystem, x: float, y: float) -> float:
    """Edot = -y^2 * phi(x, y) along solutions (any form)."""
    return -(y * y) * sys.phi_fn(x, y)


@dataclass(frozen=True)
class ScalarField:
    """Named scalar field over the plane, evaluated pointwise."""

    kind: str
    fn: Callable[[float, float], float]

    def __call__(self, x: float, y: float) -> float:
        return self.fn(x, y)


def scalar_field(sys: PlanarSystem, kind: str) -> ScalarField:
    """Field factory; kinds: angular_speed, star, lyapunov, lyapunov_rate,
    energy, energy_rate, transformed_star."""
    if kind == "angular_speed":
        return ScalarField(kind, lambda x, y: angular_speed(sys, x, y))
    if kind == "star":
        return ScalarField(kind, lambda x, y: star_scalar(sys, x, y)[0])
    if kind == "lyapunov":
        return ScalarField(kind, lyapunov_value)
    if kind == "lyapunov_rate":
        return ScalarField(kind, lambda x, y: lyapunov_rate(sys, x, y))
    if kind == "energy":
        return ScalarField(kind, lambda x, y: energy_value(sys, x, y))
    if kind == "energy_rate":
        return ScalarField(kind, lambda x, y: energy_rate(sys, x, y))
    if kind == "transformed_star":
        tsys = transform(sys)
        return ScalarField(kind, lambda x, y: transformed_star_scalar(tsys, x, y))
    raise ValueError(f"unknown field kind {kind!r}")


# ---------------------------------------------------------------------------
# Conti-Filippov transformation
# ---------------------------------------------------------------------------

def energy_coordinate(sys: PlanarSystem, x: float) -> float:
    """u = sign(x) * sqrt(2 G(x)); strictly increasing, u(0) = 0."""
    if sys.is_linear:
        return math.sqrt(sys.form.k) * x
    if x == 0.0:
        return 0.0
    return math.copysign(math.sqrt(2.0 * restoring_integral(sys, x)), x)


def energy_coordinate_inverse(sys: PlanarSystem, u: float) -> float:
    """x with energy_coordinate(x) = u, solved inside the working window.

    Bracketing plus a Newton polish; |u(x) - u| <= 1e-10 * (1 + |u|).
    """
    if sys.is_linear:
        return u / math.sqrt(sys.form.k)
    if u == 0.0:
        return 0.0
    x_max = sys.window.x_max
    lo, hi = (0.0, x_max) if u > 0.0 else (-x_max, 0.0)
    edge = energy_coordinate(sys, x_max if u > 0.0 else -x_max)
    if abs(u) > abs(edge):
        raise WindowExceededError(
            f"u = {u} outside the attainable range [{-abs(edge)}, {abs(edge)}] "
            f"of the window (|x| <= {x_max})")
    x = optimize.brentq(lambda t: energy_coordinate(sys, t) - u, lo, hi,
                        xtol=1e-14, rtol=8.9e-16, maxiter=200)
    # one Newton step: u'(x) = g(x)/u(x) for x != 0
    gx = sys.g_fn(x, 0.0)
    if x != 0.0 and gx != 0.0:
        ux = energy_coordinate(sys, x)
        x -= (ux - u) * ux / gx
    return x


@dataclass(frozen=True)
class TransformedSystem:
    """Image of a system under (u, v) = (energy_coordinate(x), y).

    The transformed orbits obey u' = v, v' = -u - v*damping(u, v) with
    damping(u, v) = u * phi(x(u), v) / g(x(u)), extended by continuity at
    u = 0 to phi(0, v)/sqrt(g'(0)).  Orbits (not time parametrizations)
    coincide with those of the original system.
    """

    base: PlanarSystem

    @property
    def gprime0(self) -> float:
        return self.base.gprime0

    def alpha(self, x: float) -> float:
        return energy_coordinate(self.base, x)

    def beta(self, u: float) -> float:
        return energy_coordinate_inverse(self.base, u)

    def damping(self, u: float, v: float) -> float:
        if u == 0.0:
            return self.base.phi_fn(0.0, v) / math.sqrt(self.gprime0)
        x = self.beta(u)
        return u * self.base.phi_fn(x, v) / self.base.g_fn(x, 0.0)

    def damping_lifted(self, u: Dual2, v: Dual2) -> Dual2:
        """Forward-mode damping in (u, v); requires u != 0."""
        if u.value == 0.0:
            raise ValueError("lifted damping needs u != 0 (use the continuity value)")
        x = self.beta(u.value)
        gx = self.base.g_fn(x, 0.0)
        bprime = u.value / gx  # beta'(u) = u/g(beta(u))
        x_dual = Dual2(x, bprime * u.dx, bprime * u.dy)
        phi_d = self.base.phi.eval_lifted(x_dual, v)
        g_d = self.base.g.eval_lifted(x_dual, Dual2(0.0))
        return u * phi_d / g_d

    def star_scalar_uv(self, u: float, v: float) -> float:
        """s~ = u*damping_u + v*damping_v computed directly in (u, v)."""
        d = self.damping_lifted(Dual2(u, 1.0, 0.0), Dual2(v, 0.0, 1.0))
        return u * d.dx + v * d.dy

    def vector_field(self, p) -> tuple[float, float]:
        u, v = float(p[0]), float(p[1])
        return v, -u - v * self.damping(u, v)

    def map_point(self, x: float, y: float) -> tuple[float, float]:
        return self.alpha(x), y

    def unmap_point(self, u: float, v: float) -> tuple[float, float]:
        return self.beta(u), v


def transform(sys: PlanarSystem) -> TransformedSystem:
    """Conti-Filippov reduction.  Identity (up to the k-rescale) for the
    linear form; admissibility of nonlinear systems was enforced at
    construction."""
    return TransformedSystem(sys)


def transformed_star_scalar(tsys: TransformedSystem, x: float, y: float) -> float:
    """Sign-constancy scalar of the transformed damping, at an (x, y) point.

    Equals u*damping_u + v*damping_v expressed in original coordinates:

        sign(x)*sqrt(2G)/g * [ 2G*(phi_x*g - phi*g')/g^2 + phi ] + y*phi_y

    with the x = 0 value taken by continuity (the first term vanishes).
    """
    base = tsys.base
    phi_d = base.phi.eval_dual(x, y)
    if x == 0.0:
        return y * phi_d.dy
    g_d = base.g.eval_dual(x, y)
    g = g_d.value
    two_g = 2.0 * restoring_integral(base, x)
    a = math.copysign(math.sqrt(two_g), x)
    bracket = two_g * (phi_d.dx * g - phi_d.value * g_d.dx) / (g * g) + phi_d.value
    return (a / g) * bracket + y * phi_d.dy
