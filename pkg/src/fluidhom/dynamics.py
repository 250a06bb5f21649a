"""Balance-law residual evaluators over manufactured and analytic states.

Every operation here evaluates the residual of a stated identity on a
grid or chain; nothing integrates the Euler equations forward.  Scalar
state fields (density, pressure, potential) are callables f(t, X) that
may optionally expose `.gradient(t, X)` and `.time_partial(t, X)` for
analytic derivatives; finite differences are the fallback.

Thresholds follow atol + rtol * |field scale| pointwise with
atol = 1e-8, rtol = 1e-6 unless overridden.

The momentum term -(div v) v mixes the spatial divergence with the full
covelocity, as written in the source identity; the purely spatial
reading (drop the dt slot) differs only in the temporal component.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .forms import (EvaluationError, FormField, add_forms,
                    exterior_derivative, fd_partials, interior_product,
                    wedge)
from .integrate import GeometricChain, integrate, rk4_transport
from .kinematics import (VectorFieldSpec, compressibility,
                         convected_derivative, spatial_covelocity,
                         spatial_vorticity_form)

DEFAULT_ATOL = 1e-8
DEFAULT_RTOL = 1e-6


@dataclass(frozen=True)
class FluidState:
    """A velocity spec together with its thermodynamic companions."""

    spec: VectorFieldSpec
    rho: Callable                     # (t, X) -> (...,) positive
    pressure: Optional[Callable] = None
    force: Optional[Callable] = None  # (t, X) -> (..., n) covector components
    potential: Optional[Callable] = None  # U with F = -dU when force is None
    barotropic_law: Optional[Callable] = None  # pressure -> density

    @property
    def n(self) -> int:
        return self.spec.spatial_dim


@dataclass
class BalanceReport:
    """Residual statistics of one balance identity."""

    name: str
    max_residual: float
    mean_residual: float
    threshold: float
    passed: bool
    not_applicable: bool = False
    reasons: list = dc_field(default_factory=list)
    details: dict = dc_field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "max_residual": self.max_residual,
            "mean_residual": self.mean_residual,
            "threshold": self.threshold,
            "passed": self.passed,
            "not_applicable": self.not_applicable,
            "reasons": list(self.reasons),
            "details": dict(self.details),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Scalar-field helpers
# ---------------------------------------------------------------------------

def _scalar(fn, t, X):
    return np.asarray(fn(t, np.asarray(X, dtype=float)), dtype=float)


def scalar_gradient(fn, t, X, h=1e-4, exclusions=()):
    """Spatial gradient of a scalar state field, analytic when offered."""
    X = np.asarray(X, dtype=float)
    grad = getattr(fn, "gradient", None)
    if grad is not None:
        return np.asarray(grad(t, X), dtype=float)
    P = fd_partials(lambda Y: _scalar(fn, t, Y)[..., None], X, h, exclusions)
    return P[..., 0]


def scalar_time_partial(fn, t, X, h=1e-4):
    X = np.asarray(X, dtype=float)
    tp = getattr(fn, "time_partial", None)
    if tp is not None:
        return np.asarray(tp(t, X), dtype=float)
    return (_scalar(fn, t + h, X) - _scalar(fn, t - h, X)) / (2 * h)


def scalar_form(fn, t, n, exclusions=(), name="") -> FormField:
    """Freeze a scalar state field at time t as a spatial 0-form."""
    grad = getattr(fn, "gradient", None)
    partials = None
    if grad is not None:
        def partials(X):
            return np.asarray(grad(t, X), dtype=float)[..., :, None]
    return FormField(0, n, lambda X: _scalar(fn, t, X)[..., None],
                     partials=partials, exclusions=tuple(exclusions), name=name)


def force_components(state: FluidState, t, X):
    """The external force covector: given directly or as -dU."""
    X = np.asarray(X, dtype=float)
    if state.force is not None:
        return np.asarray(state.force(t, X), dtype=float)
    if state.potential is not None:
        return -scalar_gradient(state.potential, t, X,
                                exclusions=state.spec.exclusions)
    return np.zeros(X.shape[:-1] + (state.n,))


def force_form(state: FluidState, t=0.0) -> FormField:
    return FormField(1, state.n,
                     lambda X: force_components(state, t, X),
                     exclusions=state.spec.exclusions, name="F")


def _threshold(scale, atol, rtol):
    return atol + rtol * scale


def _report(name, residuals, scales, atol, rtol, details=None,
            reasons=None) -> BalanceReport:
    residuals = np.asarray(residuals, dtype=float)
    scales = np.asarray(scales, dtype=float)
    limits = _threshold(scales, atol, rtol)
    ok = bool(np.all(residuals <= limits)) if residuals.size else True
    return BalanceReport(
        name=name,
        max_residual=float(np.max(residuals)) if residuals.size else 0.0,
        mean_residual=float(np.mean(residuals)) if residuals.size else 0.0,
        threshold=float(np.max(limits)) if residuals.size else atol,
        passed=ok,
        reasons=list(reasons or []),
        details=dict(details or {}),
    )


# ---------------------------------------------------------------------------
# Continuity and mass balance
# ---------------------------------------------------------------------------

def continuity_residual(state: FluidState, grid, t=0.0,
                        atol=DEFAULT_ATOL, rtol=DEFAULT_RTOL) -> BalanceReport:
    """Pointwise residual of d(rho)/dt + div(rho v) = 0.

    Two independent groupings are evaluated: the direct divergence of the
    mass current by finite differences, and the expanded material form
    (material derivative of rho) + rho div v from analytic pieces.
    """
    X = np.asarray(grid, dtype=float)
    spec = state.spec
    rho = _scalar(state.rho, t, X)
    rho_t = scalar_time_partial(state.rho, t, X)
    rho_grad = scalar_gradient(state.rho, t, X, exclusions=spec.exclusions)
    V = spec.velocity(t, X)
    div_v = compressibility(spec, t, X)

    expanded = rho_t + np.einsum("...i,...i->...", V, rho_grad) + rho * div_v

    def current(Y):
        r = _scalar(state.rho, t, Y)
        return r[..., None] * np.asarray(spec.v(t, Y), dtype=float)

    P = fd_partials(current, X, spec.h, spec.exclusions)
    div_current = np.einsum("...ii->...", P)
    direct = rho_t + div_current

    scale = np.abs(rho_t) + np.abs(rho) * np.abs(div_v) \
        + np.abs(np.einsum("...i,...i->...", V, rho_grad))
    details = {
        "max_direct": float(np.max(np.abs(direct))),
        "max_expanded": float(np.max(np.abs(expanded))),
        "lie_form_residual": float(np.max(np.abs(expanded))),
    }
    worst = np.maximum(np.abs(direct), np.abs(expanded))
    return _report("continuity", worst, scale, atol, rtol, details)


def mass_balance_cochain(state: FluidState, c3: GeometricChain, t=0.0,
                         dt=1e-3, order=8, atol=DEFAULT_ATOL,
                         rtol=DEFAULT_RTOL) -> BalanceReport:
    """|mass flow rate in c3 + mass flux through its boundary|."""
    n = state.n
    if n != 3 or c3.degree != 3:
        raise EvaluationError("the mass balance cochain check is 3D")

    def mass_form(tt):
        return FormField(3, 3, lambda X: _scalar(state.rho, tt, X)[..., None],
                         exclusions=state.spec.exclusions, name="#rho")

    def flux_form(tt):
        vec = state.spec.spatial_vector(tt)
        from .forms import sharp

        def comp(X):
            r = _scalar(state.rho, tt, X)
            return r[..., None] * sharp(vec).components(X)

        return FormField(2, 3, comp, exclusions=state.spec.exclusions,
                         name="#(rho v)")

    m_plus = integrate(mass_form(t + dt), c3, order)
    m_minus = integrate(mass_form(t - dt), c3, order)
    m_dot = (m_plus - m_minus) / (2 * dt)
    phi = integrate(flux_form(t), c3.boundary(), order)
    residual = abs(m_dot + phi)
    scale = abs(m_dot) + abs(phi)
    return _report("mass_balance", [residual], [scale], atol, rtol,
                   {"mass_flow_rate": m_dot, "boundary_flux": phi})


# ---------------------------------------------------------------------------
# Euler momentum and power
# ---------------------------------------------------------------------------

def euler_residual(state: FluidState, grid, t=0.0,
                   atol=DEFAULT_ATOL, rtol=DEFAULT_RTOL) -> BalanceReport:
    """Residual of rho dv/dt = F - grad(pressure), reported per component."""
    X = np.asarray(grid, dtype=float)
    if state.pressure is None:
        return BalanceReport("euler", 0.0, 0.0, atol, False,
                             not_applicable=True,
                             reasons=["state has no pressure field"])
    rho = _scalar(state.rho, t, X)
    if np.any(rho <= 0):
        raise EvaluationError("density must stay positive on the grid")
    accel = convected_derivative(state.spec, t).components(X)
    F = force_components(state, t, X)
    dpi = scalar_gradient(state.pressure, t, X,
                          exclusions=state.spec.exclusions)
    resid = rho[..., None] * accel - F + dpi
    per_mass = accel - F / rho[..., None] + dpi / rho[..., None]
    scale = (np.abs(rho[..., None] * accel) + np.abs(F)
             + np.abs(dpi)).max(axis=-1)
    details = {
        "max_per_mass": float(np.max(np.abs(per_mass))),
        "temporal_component": temporal_euler_residual(state, X, t),
    }
    return _report("euler", np.max(np.abs(resid), axis=-1), scale,
                   atol, rtol, details)


def temporal_euler_residual(state: FluidState, grid, t=0.0) -> float:
    """Max |F_0 + (rho/2) d(v^2)/dt - d(pressure)/dt| on the grid."""
    X = np.asarray(grid, dtype=float)
    rho = _scalar(state.rho, t, X)
    h = state.spec.h
    v2 = state.spec.speed_squared
    dv2_dt = (v2(t + h, X) - v2(t - h, X)) / (2 * h)
    dpi_dt = scalar_time_partial(state.pressure, t, X) \
        if state.pressure is not None else 0.0
    # External force fields here are spatial; their temporal slot is zero.
    return float(np.max(np.abs(0.0 + 0.5 * rho * dv2_dt - dpi_dt)))


def momentum_lie_residual(state: FluidState, grid, t=0.0) -> float:
    """Residual of the Lie form of momentum balance on steady states.

    L_v p = F + d(rho v^2 / 2 - pressure) - (v^2 / 2) d(rho)
            - rho (div v) v, with the full covelocity in the last term.
    """
    X = np.asarray(grid, dtype=float)
    spec = state.spec
    if not spec.steady:
        raise EvaluationError("the Lie-form residual helper assumes steady v")
    n = spec.spatial_dim
    rho_form = scalar_form(state.rho, t, n, spec.exclusions)

    def p_comp(Y):
        return _scalar(state.rho, t, Y)[..., None] \
            * spatial_covelocity(spec, t).components(Y)

    p_form = FormField(1, n, p_comp, exclusions=spec.exclusions, name="p")
    from .kinematics import speed_squared_form
    from .forms import lie_derivative
    lhs = lie_derivative(spec.spatial_vector(t), p_form).components(X)

    v2 = spec.speed_squared(t, X)
    rho = _scalar(state.rho, t, X)
    drho = exterior_derivative(rho_form).components(X)

    def energy(Y):
        return (0.5 * _scalar(state.rho, t, Y) * spec.speed_squared(t, Y)
                - _scalar(state.pressure, t, Y))[..., None]

    denergy = exterior_derivative(
        FormField(0, n, energy, exclusions=spec.exclusions)).components(X)
    div_v = compressibility(spec, t, X)
    vlow = spatial_covelocity(spec, t).components(X)
    rhs = force_components(state, t, X) + denergy \
        - 0.5 * v2[..., None] * drho \
        - (rho * div_v)[..., None] * vlow
    return float(np.max(np.abs(lhs - rhs)))


def power_balance_residual(state: FluidState, grid, t=0.0,
                           atol=DEFAULT_ATOL, rtol=DEFAULT_RTOL,
                           check_euler_first=True) -> BalanceReport:
    """Residual of i_v F = L_v(rho v^2/2 + pressure) + (rho/2)(div v) v^2."""
    X = np.asarray(grid, dtype=float)
    if state.pressure is None:
        return BalanceReport("power", 0.0, 0.0, atol, False,
                             not_applicable=True,
                             reasons=["state has no pressure field"])
    reasons = []
    if check_euler_first:
        euler = euler_residual(state, grid, t, atol, rtol)
        if not euler.passed:
            reasons.append(
                f"warning: euler residual {euler.max_residual:.3e} above "
                f"threshold; power balance may be meaningless")
    spec = state.spec
    rho = _scalar(state.rho, t, X)
    V = spec.velocity(t, X)
    v2 = spec.speed_squared(t, X)
    div_v = compressibility(spec, t, X)
    F = force_components(state, t, X)
    power_in = np.einsum("...i,...i->...", F, V)

    def s_field(tt, Y):
        return 0.5 * _scalar(state.rho, tt, Y) * spec.speed_squared(tt, Y) \
            + _scalar(state.pressure, tt, Y)

    h = spec.h
    s_t = (s_field(t + h, X) - s_field(t - h, X)) / (2 * h)
    s_grad = fd_partials(lambda Y: s_field(t, Y)[..., None], X, h,
                         spec.exclusions)[..., 0]
    material_s = s_t + np.einsum("...i,...i->...", V, s_grad)
    resid = power_in - material_s - 0.5 * rho * div_v * v2
    scale = np.abs(power_in) + np.abs(material_s) \
        + np.abs(0.5 * rho * div_v * v2)

    details = {}
    if state.force is None and state.potential is not None:
        def head(tt, Y):
            return (_scalar(state.potential, tt, Y)
                    + 0.5 * _scalar(state.rho, tt, Y)
                    * spec.speed_squared(tt, Y)
                    + _scalar(state.pressure, tt, Y))
        h_t = (head(t + h, X) - head(t - h, X)) / (2 * h)
        h_grad = fd_partials(lambda Y: head(t, Y)[..., None], X, h,
                             spec.exclusions)[..., 0]
        dH_dt = h_t + np.einsum("...i,...i->...", V, h_grad)
        head_resid = dH_dt + 0.5 * rho * div_v * v2
        details["max_head_rate_residual"] = float(np.max(np.abs(head_resid)))
    return _report("power", np.abs(resid), scale, atol, rtol, details,
                   reasons)


# ---------------------------------------------------------------------------
# Bernoulli
# ---------------------------------------------------------------------------

def total_head(state: FluidState, t, X):
    """H = U + rho v^2 / 2 + pressure."""
    X = np.asarray(X, dtype=float)
    U = _scalar(state.potential, t, X) if state.potential is not None else 0.0
    rho = _scalar(state.rho, t, X)
    pi = _scalar(state.pressure, t, X)
    return U + 0.5 * rho * state.spec.speed_squared(t, X) + pi


def bernoulli_check(state: FluidState, seeds, t_span=1.0, samples=64,
                    steps=256, grid=None, rtol=1e-6,
                    atol=DEFAULT_ATOL) -> BalanceReport:
    """Constancy of the total head along integrated streamlines.

    Preconditions (steady, incompressible, conservative force, pressure
    present) are verified first; violations mark the report
    not-applicable rather than failed.
    """
    spec = state.spec
    reasons = []
    if state.pressure is None:
        reasons.append("no pressure field")
    if not spec.steady:
        reasons.append("flow is not steady")
    if state.force is not None and state.potential is None:
        probe = np.asarray(seeds, dtype=float)
        curl_probe = exterior_derivative(force_form(state, 0.0))
        if float(np.max(np.abs(curl_probe.components(probe)))) > 1e-6:
            reasons.append("external force is not closed")
    if grid is not None:
        div = compressibility(spec, 0.0, np.asarray(grid, dtype=float))
        if float(np.max(np.abs(div))) > 1e-6:
            reasons.append("flow is not incompressible on the sample grid")
    if reasons:
        return BalanceReport("bernoulli", 0.0, 0.0, atol, False,
                             not_applicable=True, reasons=reasons)

    worst = []
    scales = []
    per_streamline = []
    for seed in np.asarray(seeds, dtype=float):
        ts = np.linspace(0.0, t_span, samples)
        points = [np.asarray(seed, dtype=float)]
        for a, b in zip(ts[:-1], ts[1:]):
            points.append(rk4_transport(spec, points[-1], float(a), float(b),
                                        steps=max(1, steps // samples)))
        pts = np.stack(points, axis=0)
        H = total_head(state, 0.0, pts)
        dev = float(np.max(np.abs(H - H[0])))
        worst.append(dev)
        scales.append(abs(float(H[0])))
        per_streamline.append({"seed": [float(c) for c in seed],
                               "head": float(H[0]), "max_deviation": dev})
    return _report("bernoulli", worst, scales, atol, rtol,
                   {"streamlines": per_streamline})


# ---------------------------------------------------------------------------
# Magnus force and equation of state
# ---------------------------------------------------------------------------

def magnus_force(state: FluidState, grid, t=0.0, atol=DEFAULT_ATOL,
                 rtol=DEFAULT_RTOL):
    """The vortex force i_p Omega and the residual of its balance identity.

    i_p Omega = F - d(rho v^2 / 2 + pressure) + (v^2 / 2) d(rho); for a
    conservative force the right side is -dH + (v^2 / 2) d(rho).
    """
    X = np.asarray(grid, dtype=float)
    spec = state.spec
    n = spec.spatial_dim

    def p_vec_comp(Y):
        return _scalar(state.rho, t, Y)[..., None] \
            * np.asarray(spec.v(t, Y), dtype=float)

    from .forms import MultiVectorField
    p_vec = MultiVectorField(1, n, p_vec_comp, exclusions=spec.exclusions,
                             name="momentum")
    omega = spatial_vorticity_form(spec, t)
    magnus = interior_product(p_vec, omega)

    if state.pressure is None:
        report = BalanceReport("magnus", 0.0, 0.0, atol, False,
                               not_applicable=True,
                               reasons=["state has no pressure field"])
        return magnus, report

    rho_form = scalar_form(state.rho, t, n, spec.exclusions)
    drho = exterior_derivative(rho_form).components(X)
    v2 = spec.speed_squared(t, X)

    def energy(Y):
        return (0.5 * _scalar(state.rho, t, Y) * spec.speed_squared(t, Y)
                + _scalar(state.pressure, t, Y))[..., None]

    denergy = exterior_derivative(
        FormField(0, n, energy, exclusions=spec.exclusions)).components(X)
    F = force_components(state, t, X)
    rhs = F - denergy + 0.5 * v2[..., None] * drho
    lhs = magnus.components(X)
    resid = np.max(np.abs(lhs - rhs), axis=-1)
    scale = (np.abs(lhs) + np.abs(rhs)).max(axis=-1)

    details = {}
    if state.force is None and state.potential is not None:
        def head(Y):
            return total_head(state, t, Y)[..., None]
        dH = exterior_derivative(
            FormField(0, n, head, exclusions=spec.exclusions)).components(X)
        alt = -dH + 0.5 * v2[..., None] * drho
        details["max_conservative_form_residual"] = float(
            np.max(np.abs(lhs - alt)))
    report = _report("magnus", resid, scale, atol, rtol, details)
    return magnus, report


def barotropic_check(state: FluidState, grid, t=0.0, tol=1e-8) -> BalanceReport:
    """Max norm of d(rho) ^ d(pressure) on the grid; pass below tol."""
    X = np.asarray(grid, dtype=float)
    if state.pressure is None:
        return BalanceReport("barotropic", 0.0, 0.0, tol, False,
                             not_applicable=True,
                             reasons=["state has no pressure field"])
    n = state.n
    rho_form = scalar_form(state.rho, t, n, state.spec.exclusions, "rho")
    pi_form = scalar_form(state.pressure, t, n, state.spec.exclusions, "pi")
    wedge_form = wedge(exterior_derivative(rho_form),
                       exterior_derivative(pi_form))
    vals = wedge_form.components(X)
    worst = float(np.max(np.abs(vals))) if vals.size else 0.0

    details = {}
    # Barotropic states make (1/rho) d(pressure) a closed form.
    def scaled_dpi(Y):
        r = _scalar(state.rho, t, Y)
        g = scalar_gradient(state.pressure, t, Y,
                            exclusions=state.spec.exclusions)
        return g / r[..., None]

    closed = exterior_derivative(
        FormField(1, n, scaled_dpi, exclusions=state.spec.exclusions))
    cvals = closed.components(X)
    details["max_d_dpi_over_rho"] = float(np.max(np.abs(cvals))) \
        if cvals.size else 0.0
    if state.barotropic_law is not None:
        law_rho = np.asarray(
            state.barotropic_law(_scalar(state.pressure, t, X)), dtype=float)
        details["max_law_mismatch"] = float(
            np.max(np.abs(law_rho - _scalar(state.rho, t, X))))
    passed = worst < tol
    return BalanceReport("barotropic", worst, worst, tol, passed,
                         details=details)


def density_transport_residual(state: FluidState, grid, t=0.0) -> float:
    """Max |L_v rho + rho div v|: density constant along incompressible flow."""
    X = np.asarray(grid, dtype=float)
    spec = state.spec
    rho = _scalar(state.rho, t, X)
    rho_t = scalar_time_partial(state.rho, t, X)
    rho_grad = scalar_gradient(state.rho, t, X, exclusions=spec.exclusions)
    V = spec.velocity(t, X)
    div_v = compressibility(spec, t, X)
    resid = rho_t + np.einsum("...i,...i->...", V, rho_grad) + rho * div_v
    return float(np.max(np.abs(resid)))
