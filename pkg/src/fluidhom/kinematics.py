"""Kinematic fields derived from a velocity field.

A VectorFieldSpec wraps a (possibly time-varying) velocity callable with
its metric and exclusion zones and exposes the derived objects: the
covelocity 1-form (metric-lowered, with a dt slot of 1 when unsteady),
the velocity-gradient decomposition, the vorticity 2-form and its
Poincare duals, the convective acceleration, and the Pfaff-problem
integrability classifier.

Vorticity vector convention: `vorticity_vector` returns half the
conventional curl in three dimensions (the flat-space dual of the spin
tensor), while `vorticity_dual` returns the Poincare dual of the spatial
vorticity 2-form, which equals the full curl.  Multiply the former by
CURL_CONVERSION to recover the conventional curl.  The two-dimensional
scalar dual carries no half.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil
from typing import Callable, Optional

import numpy as np

from .forms import (DEFAULT_FD_STEP, EvaluationError, FormField, Metric,
                    MultiVectorField, VolumeElement, exterior_derivative,
                    fd_partials, interior_product, lie_derivative, lower_index,
                    scale_form, sharp, sharp_inverse, wedge)

CURL_CONVERSION = 2.0  # vorticity_vector * CURL_CONVERSION = conventional curl
GLOBAL_VANISH_TOL = 1e-7


@dataclass(frozen=True)
class VectorFieldSpec:
    """A velocity field with metric, exclusions, and optional analytics.

    `v(t, X)` must be vectorized over X of shape (..., n) and broadcast
    over array-valued t.  `v_jacobian(t, X)`, when given, returns the
    matrix dv^i/dx^j as (..., n, n); `v_time(t, X)` returns dv^i/dt.
    """

    spatial_dim: int
    v: Callable
    steady: bool = True
    metric: Metric = None
    exclusions: tuple = ()
    v_jacobian: Optional[Callable] = None
    v_time: Optional[Callable] = None
    name: str = ""
    h: float = DEFAULT_FD_STEP

    def __post_init__(self):
        if self.metric is None:
            object.__setattr__(self, "metric", Metric(self.spatial_dim))

    # -- flow interface used by the advection machinery ----------------------

    def velocity(self, t, X):
        X = np.asarray(X, dtype=float)
        if self.exclusions:
            for zone in self.exclusions:
                if np.any(zone.contains(X)):
                    bad = np.asarray(X)[np.argwhere(zone.contains(X))[0][0]] \
                        if X.ndim > 1 else X
                    raise EvaluationError(
                        f"velocity sampled inside an exclusion zone near {bad}")
        return np.asarray(self.v(t, X), dtype=float)

    def gradient_matrix(self, t, X):
        """dv^i/dx^j as (..., n, n), analytic when available."""
        X = np.asarray(X, dtype=float)
        if self.v_jacobian is not None:
            return np.asarray(self.v_jacobian(t, X), dtype=float)
        P = fd_partials(lambda Y: np.asarray(self.v(t, Y), dtype=float),
                        X, self.h, self.exclusions)
        return np.swapaxes(P, -1, -2)

    def time_partial(self, t, X):
        X = np.asarray(X, dtype=float)
        if self.steady:
            return np.zeros(X.shape[:-1] + (self.spatial_dim,))
        if self.v_time is not None:
            return np.asarray(self.v_time(t, X), dtype=float)
        dt = self.h
        return (np.asarray(self.v(t + dt, X), dtype=float)
                - np.asarray(self.v(t - dt, X), dtype=float)) / (2 * dt)

    def spatial_vector(self, t=0.0) -> MultiVectorField:
        """The velocity as a degree-1 multivector at frozen time."""
        spec = self

        def comp(X):
            return np.asarray(spec.v(t, X), dtype=float)

        partials = None
        if spec.v_jacobian is not None:
            def partials(X):
                return np.swapaxes(spec.gradient_matrix(t, X), -1, -2)

        return MultiVectorField(1, spec.spatial_dim, comp, partials=partials,
                                h=spec.h, exclusions=spec.exclusions,
                                name=f"{spec.name} velocity")

    def spacetime_vector(self) -> MultiVectorField:
        """d/dt + v on the (t, x) slot set; the time component is 1."""
        spec = self
        n = spec.spatial_dim

        def comp(P):
            P = np.asarray(P, dtype=float)
            out = np.empty(P.shape[:-1] + (n + 1,))
            out[..., 0] = 1.0
            out[..., 1:] = spec.v(P[..., 0], P[..., 1:])
            return out

        partials = None
        if spec.v_jacobian is not None and (spec.steady or spec.v_time is not None):
            def partials(P):
                P = np.asarray(P, dtype=float)
                t, X = P[..., 0], P[..., 1:]
                out = np.zeros(P.shape[:-1] + (n + 1, n + 1))
                out[..., 0, 1:] = spec.time_partial(t, X)
                out[..., 1:, 1:] = np.swapaxes(
                    spec.gradient_matrix(t, X), -1, -2)
                return out

        excl = tuple(z.padded(1) for z in spec.exclusions)
        return MultiVectorField(1, n + 1, comp, partials=partials, h=spec.h,
                                exclusions=excl, name=f"{spec.name} spacetime")

    def speed_squared(self, t, X):
        """g(v, v) at the given time and points."""
        X = np.asarray(X, dtype=float)
        V = np.asarray(self.v(t, X), dtype=float)
        G = self.metric.matrix(X)
        return np.einsum("...i,...ij,...j->...", V, G, V)


# ---------------------------------------------------------------------------
# Covelocity
# ---------------------------------------------------------------------------

def spatial_covelocity(spec: VectorFieldSpec, t=0.0) -> FormField:
    """Metric-lowered velocity 1-form on the spatial slots, time frozen."""
    return lower_index(spec.spatial_vector(t), spec.metric)


def covelocity(spec: VectorFieldSpec) -> FormField:
    """The covelocity 1-form: dt + v_i dx^i when unsteady, v_i dx^i else."""
    if spec.steady:
        return spatial_covelocity(spec)
    n = spec.spatial_dim

    def comp(P):
        P = np.asarray(P, dtype=float)
        t, X = P[..., 0], P[..., 1:]
        V = np.asarray(spec.v(t, X), dtype=float)
        G = spec.metric.matrix(X)
        out = np.empty(P.shape[:-1] + (n + 1,))
        out[..., 0] = 1.0
        out[..., 1:] = np.einsum("...ij,...j->...i", G, V)
        return out

    partials = None
    if spec.v_jacobian is not None and spec.metric.is_euclidean \
            and spec.v_time is not None:
        def partials(P):
            P = np.asarray(P, dtype=float)
            t, X = P[..., 0], P[..., 1:]
            out = np.zeros(P.shape[:-1] + (n + 1, n + 1))
            out[..., 0, 1:] = spec.time_partial(t, X)
            out[..., 1:, 1:] = np.swapaxes(spec.gradient_matrix(t, X), -1, -2)
            return out

    excl = tuple(z.padded(1) for z in spec.exclusions)
    return FormField(1, n + 1, comp, partials=partials, h=spec.h,
                     exclusions=excl, name=f"{spec.name} covelocity")


# ---------------------------------------------------------------------------
# Velocity gradient decomposition
# ---------------------------------------------------------------------------

@dataclass
class VelocityGradient:
    """Pointwise decomposition of dv at (t, x).

    Follows the doubled-tensor convention: strain_rate = G + G^T and
    spin = G - G^T, so G = (strain_rate + spin) / 2.  The deviatoric part
    subtracts 2 * trace_rate * I from strain_rate, which makes it
    trace-free; trace_rate itself is tr(G) / n.
    """

    matrix: np.ndarray
    strain_rate: np.ndarray
    spin: np.ndarray
    trace_rate: float
    deviatoric: np.ndarray
    time_part: np.ndarray


def velocity_gradient(spec: VectorFieldSpec, t, x) -> VelocityGradient:
    x = np.asarray(x, dtype=float)
    for zone in spec.exclusions:
        if np.any(zone.contains(x)):
            raise EvaluationError(f"velocity gradient requested inside an "
                                  f"exclusion zone at {x}")
    G = spec.gradient_matrix(t, x)
    n = spec.spatial_dim
    GT = np.swapaxes(G, -1, -2)
    strain = G + GT
    spin = G - GT
    trace_rate = np.trace(G, axis1=-2, axis2=-1) / n
    eye = np.eye(n)
    deviatoric = strain - 2.0 * np.asarray(trace_rate)[..., None, None] * eye
    return VelocityGradient(G, strain, spin,
                            float(trace_rate) if np.ndim(trace_rate) == 0
                            else trace_rate,
                            deviatoric, spec.time_partial(t, x))


def compressibility(spec: VectorFieldSpec, t, X):
    """div v = trace of the spatial velocity gradient."""
    G = spec.gradient_matrix(t, X)
    return np.trace(G, axis1=-2, axis2=-1)


def is_incompressible(spec: VectorFieldSpec, points, t=0.0,
                      tol: float = 1e-8) -> bool:
    div = compressibility(spec, t, points)
    return bool(np.max(np.abs(div)) < tol)


# ---------------------------------------------------------------------------
# Vorticity
# ---------------------------------------------------------------------------

def vorticity_form(spec: VectorFieldSpec) -> FormField:
    """The vorticity 2-form: exterior derivative of the covelocity.

    For unsteady specs this lives on the (t, x) slots and splits as
    dt ^ (time derivative of the spatial covelocity) + spatial part.
    """
    return exterior_derivative(covelocity(spec))


def spatial_vorticity_form(spec: VectorFieldSpec, t=0.0) -> FormField:
    """The spatial vorticity 2-form at frozen time."""
    return exterior_derivative(spatial_covelocity(spec, t))


def vorticity_dual(spec: VectorFieldSpec, t=0.0) -> MultiVectorField:
    """Poincare dual of the spatial vorticity 2-form.

    In 2D this is the scalar d1 v2 - d2 v1; in 3D the conventional curl.
    """
    if spec.spatial_dim == 1:
        raise EvaluationError("vorticity needs at least two spatial slots")
    return sharp_inverse(spatial_vorticity_form(spec, t))


def vorticity_vector(spec: VectorFieldSpec, t=0.0) -> MultiVectorField:
    """The vorticity dual in the half-curl convention (3D); scalar in 2D."""
    dual = vorticity_dual(spec, t)
    if spec.spatial_dim == 2:
        return dual
    return MultiVectorField(dual.degree, dual.dim,
                            lambda X: 0.5 * dual.components(X),
                            partials=(None if dual.partials is None else
                                      (lambda X: 0.5 * dual.partial_derivatives(X))),
                            h=dual.h, exclusions=dual.exclusions,
                            name=f"{spec.name} vorticity(half-curl)")


# ---------------------------------------------------------------------------
# Convective acceleration
# ---------------------------------------------------------------------------

def convective_acceleration(spec: VectorFieldSpec) -> FormField:
    """a = L_v v on the covelocity (spacetime slots when unsteady)."""
    if spec.steady:
        return lie_derivative(spec.spatial_vector(0.0), spatial_covelocity(spec))
    return lie_derivative(spec.spacetime_vector(), covelocity(spec))


def convected_derivative(spec: VectorFieldSpec, t=0.0) -> FormField:
    """(d v_i / d t) dx^i with d/dt = partial_t + v^j partial_j (Euclidean)."""
    if not spec.metric.is_euclidean:
        raise EvaluationError(
            "the convected-derivative component formula assumes orthonormal "
            "coordinates; use convective_acceleration for general metrics")

    def comp(X):
        X = np.asarray(X, dtype=float)
        G = spec.gradient_matrix(t, X)
        V = np.asarray(spec.v(t, X), dtype=float)
        adv = np.einsum("...ij,...j->...i", G, V)
        return spec.time_partial(t, X) + adv

    return FormField(1, spec.spatial_dim, comp, h=spec.h,
                     exclusions=spec.exclusions,
                     name=f"{spec.name} convected derivative")


def speed_squared_form(spec: VectorFieldSpec, t=0.0) -> FormField:
    """g(v, v) as a spatial 0-form at frozen time."""
    return FormField(0, spec.spatial_dim,
                     lambda X: spec.speed_squared(t, X)[..., None],
                     h=spec.h, exclusions=spec.exclusions, name="v^2")


# ---------------------------------------------------------------------------
# Frobenius / Pfaff integrability
# ---------------------------------------------------------------------------

@dataclass
class FrobeniusReport:
    """What the canonical form sequence v, dv, v^dv, ... vanishes first.

    `first_vanishing_index` is the position j in the sequence; the degree
    of integrability is m - ceil(j/2) on the m-slot manifold the covelocity
    lives on (spatial for steady flow, spacetime otherwise).
    """

    slots: int
    spatial_dim: int
    first_vanishing_index: Optional[int]
    degree_of_integrability: Optional[int]
    max_norms: list
    surface_orthogonal: bool
    tolerance: float
    sample_count: int
    monotone_tail: bool = True

    @property
    def completely_integrable(self) -> bool:
        return self.degree_of_integrability == self.slots - 1

    def to_dict(self):
        return {
            "slots": self.slots,
            "spatial_dim": self.spatial_dim,
            "first_vanishing_index": self.first_vanishing_index,
            "degree_of_integrability": self.degree_of_integrability,
            "max_norms": self.max_norms,
            "surface_orthogonal": self.surface_orthogonal,
            "completely_integrable": self.completely_integrable,
            "tolerance": self.tolerance,
            "sample_count": self.sample_count,
            "monotone_tail": self.monotone_tail,
        }


def frobenius_sequence(spec: VectorFieldSpec):
    """The forms I0 = v, I1 = dv, I2 = v^dv, I3 = dv^dv, I4 = v^dv^dv."""
    v = spatial_covelocity(spec) if spec.steady else covelocity(spec)
    dv = exterior_derivative(v)
    seq = [v, dv]
    m = v.dim
    if m >= 3:
        seq.append(wedge(v, dv))
    if m >= 4:
        seq.append(wedge(dv, dv))
        if m >= 5:
            seq.append(wedge(v, wedge(dv, dv)))
    return seq


def frobenius_classify(spec: VectorFieldSpec, grid, times=0.0,
                       tol: float = GLOBAL_VANISH_TOL) -> FrobeniusReport:
    """Evaluate the integrability sequence on a sample grid.

    `grid` holds spatial points (N, n); for unsteady specs each point is
    paired with every entry of `times` on the spacetime slot set.  Grids
    must avoid the scenario's singular sets.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("frobenius_classify needs a non-empty sample grid")
    seq = frobenius_sequence(spec)
    m = seq[0].dim
    if spec.steady:
        points = grid
    else:
        tvals = np.atleast_1d(np.asarray(times, dtype=float))
        points = np.concatenate([
            np.concatenate([np.full((grid.shape[0], 1), tv), grid], axis=1)
            for tv in tvals], axis=0)

    norms = []
    for form in seq:
        vals = form.components(points)
        norms.append(float(np.max(np.abs(vals))) if vals.size else 0.0)
    # Degrees above the slot count vanish identically.
    while len(norms) < 5:
        norms.append(0.0)

    first = None
    for j, norm in enumerate(norms):
        if norm < tol:
            first = j
            break
    degree = None if first is None else m - ceil(first / 2)
    surface_orthogonal = norms[2] < tol if len(norms) > 2 else True

    # Once an even-index form vanishes, everything after it must too.
    monotone = True
    if first is not None and first % 2 == 0:
        monotone = all(n < tol for n in norms[first:])

    return FrobeniusReport(
        slots=m,
        spatial_dim=spec.spatial_dim,
        first_vanishing_index=first,
        degree_of_integrability=degree,
        max_norms=norms,
        surface_orthogonal=surface_orthogonal,
        tolerance=tol,
        sample_count=int(points.shape[0]),
        monotone_tail=monotone,
    )


# ---------------------------------------------------------------------------
# Identity helpers used by verification suites
# ---------------------------------------------------------------------------

def volume_lie_identity_residual(spec: VectorFieldSpec, points, t=0.0):
    """Max residual of L_v V = (div v) V on the sample points."""
    n = spec.spatial_dim
    V = VolumeElement(n).as_form()
    lhs = lie_derivative(spec.spatial_vector(t), V)
    div = compressibility(spec, t, points)
    vals = lhs.components(points)[..., 0] - div
    return float(np.max(np.abs(vals)))


def bivector_potential_residual(spec: VectorFieldSpec, points, t=0.0):
    """Max residual of (dual vorticity) = div(#^-1 v_s) on 3D samples."""
    if spec.spatial_dim != 3:
        raise EvaluationError("the bivector potential identity is 3D")
    from .forms import divergence
    B = sharp_inverse(spatial_covelocity(spec, t))
    lhs = vorticity_dual(spec, t).components(points)
    rhs = divergence(B).components(points)
    return float(np.max(np.abs(lhs - rhs)))


def orthogonality_identity_residual(spec: VectorFieldSpec, points, t=0.0):
    """Max residual of g(v, omega) = (v ^ dv)(V) on 3D samples (steady)."""
    if spec.spatial_dim != 3:
        raise EvaluationError("the orthogonality identity is 3D")
    vform = spatial_covelocity(spec, t)
    omega = vorticity_dual(spec, t)
    from .forms import pairing
    lhs = pairing(vform, omega, points)
    frob = wedge(vform, exterior_derivative(vform))
    rhs = frob.components(points)[..., 0]
    return float(np.max(np.abs(lhs - rhs)))
