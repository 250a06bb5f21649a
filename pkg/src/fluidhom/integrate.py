"""Quadrature of forms over geometric chains, advection, and invariants.

Chains are formal sums of singular cubes: smooth maps from the reference
cube [0,1]^k into flow space, evaluated vectorized.  Integration pulls a
degree-k form back through the map's jacobian minors and applies a
tensor-product Gauss-Legendre rule (default order 8 per axis).

Advection transports cube points along the flow ODE dx/dt = u(t, x) with
classical fixed-step RK4; chain geometry is never re-sampled, only node
images are moved.  The swept chain of an advected family realizes the
moving chain as a (k+1)-cube whose first reference slot is time.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .forms import (DegreeError, EvaluationError, FormField, MultiVectorField,
                    add_forms, lex_indices, lie_derivative)

DEFAULT_QUAD_ORDER = 8
DEFAULT_ADVECTION_STEPS = 256
JACOBIAN_FD_STEP = 1e-5


class AdvectionError(RuntimeError):
    """A transported node entered an exclusion zone."""


# ---------------------------------------------------------------------------
# Quadrature rules
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def gauss_nodes(order: int):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    x, w = np.polynomial.legendre.leggauss(order)
    return (x + 1.0) / 2.0, w / 2.0


@lru_cache(maxsize=None)
def tensor_nodes(order: int, degree: int):
    """Tensor-product nodes (Q, k) and weights (Q,) on the reference cube."""
    if degree == 0:
        return np.zeros((1, 0)), np.ones(1)
    x, w = gauss_nodes(order)
    grids = np.meshgrid(*([x] * degree), indexing="ij")
    nodes = np.stack([g.reshape(-1) for g in grids], axis=-1)
    wgrids = np.meshgrid(*([w] * degree), indexing="ij")
    weights = np.ones(nodes.shape[0])
    for g in wgrids:
        weights = weights * g.reshape(-1)
    return nodes, weights


# ---------------------------------------------------------------------------
# Singular cubes and geometric chains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SingularCube:
    """Smooth map from [0,1]^degree into dim-dimensional flow space.

    `map` must accept reference points of shape (..., degree) (and a small
    neighborhood outside the cube, for finite-difference jacobians) and
    return (..., dim).  An analytic `jacobian` callable of shape
    (..., dim, degree) is used when present.
    """

    degree: int
    dim: int
    map: Callable
    jacobian: Optional[Callable] = None
    name: str = ""

    def points(self, U):
        U = np.asarray(U, dtype=float)
        return np.asarray(self.map(U), dtype=float)

    def jacobian_at(self, U):
        U = np.asarray(U, dtype=float)
        if self.degree == 0:
            return np.zeros(U.shape[:-1] + (self.dim, 0))
        if self.jacobian is not None:
            return np.asarray(self.jacobian(U), dtype=float)
        return _fd_jacobian(self.map, U, self.dim)


def _fd_jacobian(fn, U, dim, h=JACOBIAN_FD_STEP):
    # 4th-order central differences in the reference coordinates; all
    # stencil nodes are evaluated in one batched map call.
    U = np.asarray(U, dtype=float)
    k = U.shape[-1]
    offsets = np.array([-2.0, -1.0, 1.0, 2.0]) * h
    weights = np.array([1.0, -8.0, 8.0, -1.0]) / (12.0 * h)
    stencil = []
    for a in range(k):
        for off in offsets:
            shifted = U.copy()
            shifted[..., a] = shifted[..., a] + off
            stencil.append(shifted)
    batch = np.stack(stencil, axis=0)  # (4k, ..., k)
    vals = np.asarray(fn(batch), dtype=float)  # (4k, ..., dim)
    jac = np.empty(U.shape[:-1] + (dim, k))
    for a in range(k):
        block = vals[4 * a:4 * a + 4]
        jac[..., :, a] = np.einsum("s,s...d->...d", weights, block)
    return jac


@dataclass
class GeometricChain:
    """Formal real combination of singular cubes of one degree."""

    degree: int
    terms: list  # list of (coefficient, SingularCube)

    def __post_init__(self):
        for _, cube in self.terms:
            if cube.degree != self.degree:
                raise DegreeError("chain contains a cube of the wrong degree")

    @property
    def dim(self) -> int:
        return self.terms[0][1].dim if self.terms else 0

    def scaled(self, factor: float) -> "GeometricChain":
        return GeometricChain(self.degree,
                              [(factor * c, cube) for c, cube in self.terms])

    def __add__(self, other: "GeometricChain") -> "GeometricChain":
        if other.degree != self.degree:
            raise DegreeError("cannot add chains of different degree")
        return GeometricChain(self.degree, list(self.terms) + list(other.terms))

    def boundary(self) -> "GeometricChain":
        """Signed geometric faces; slot-major, 0-face before 1-face."""
        if self.degree < 1:
            raise DegreeError("boundary of a 0-chain underflows")
        out = []
        for coeff, cube in self.terms:
            for a in range(cube.degree):
                for e in (0, 1):
                    sign = -1.0 if (a + 1 + e) % 2 else 1.0
                    out.append((coeff * sign, cube_face(cube, a, e)))
        return GeometricChain(self.degree - 1, out)


def cube_face(cube: SingularCube, slot: int, end: int) -> SingularCube:
    """The (k-1)-face of a cube frozen at `end` in reference slot `slot`."""

    def fmap(U):
        U = np.asarray(U, dtype=float)
        full = np.insert(U, slot, float(end), axis=-1)
        return cube.map(full)

    fjac = None
    if cube.jacobian is not None:
        def fjac(U):
            U = np.asarray(U, dtype=float)
            full = np.insert(U, slot, float(end), axis=-1)
            J = np.asarray(cube.jacobian(full), dtype=float)
            return np.delete(J, slot, axis=-1)

    return SingularCube(cube.degree - 1, cube.dim, fmap, fjac,
                        name=f"{cube.name}|s{slot}={end}")


def restricted_cube(cube: SingularCube, slot: int, lo: float, hi: float) -> SingularCube:
    """Reparameterize one reference slot onto [lo, hi]."""

    def rmap(U):
        U = np.asarray(U, dtype=float).copy()
        U[..., slot] = lo + (hi - lo) * U[..., slot]
        return cube.map(U)

    rjac = None
    if cube.jacobian is not None:
        def rjac(U):
            U = np.asarray(U, dtype=float).copy()
            U[..., slot] = lo + (hi - lo) * U[..., slot]
            J = np.asarray(cube.jacobian(U), dtype=float).copy()
            J[..., :, slot] *= (hi - lo)
            return J

    return SingularCube(cube.degree, cube.dim, rmap, rjac,
                        name=f"{cube.name}|restricted")


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------

def integrate(alpha: FormField, chain: GeometricChain,
              order: int = DEFAULT_QUAD_ORDER) -> float:
    """Gauss-Legendre quadrature of a k-form over a geometric k-chain."""
    if alpha.degree != chain.degree:
        raise DegreeError(
            f"cannot integrate a {alpha.degree}-form over a "
            f"{chain.degree}-chain")
    if order < 2 and chain.degree > 0:
        raise ValueError("quadrature order must be >= 2")
    total = 0.0
    for coeff, cube in chain.terms:
        total += coeff * _integrate_cube(alpha, cube, order)
    return float(total)


def _integrate_cube(alpha, cube, order):
    if alpha.dim != cube.dim:
        raise DegreeError("form and cube live in different dimensions")
    k = cube.degree
    U, W = tensor_nodes(order, k)
    X = cube.points(U)
    if not np.all(np.isfinite(X)):
        raise EvaluationError(
            f"cube map {cube.name!r} undefined at a quadrature node")
    A = alpha.components(X)
    if k == 0:
        return float(np.sum(W * A[..., 0]))
    J = cube.jacobian_at(U)
    pulled = np.zeros(U.shape[0])
    for p, I in enumerate(lex_indices(alpha.dim, k)):
        minors = np.linalg.det(J[:, list(I), :])
        pulled += A[:, p] * minors
    return float(np.sum(W * pulled))


def stokes_residual(alpha: FormField, chain: GeometricChain,
                    order: int = DEFAULT_QUAD_ORDER) -> float:
    """|integral of alpha over the boundary - integral of d(alpha)|."""
    lhs, rhs = stokes_sides(alpha, chain, order)
    return abs(lhs - rhs)


def stokes_sides(alpha, chain, order=DEFAULT_QUAD_ORDER):
    from .forms import exterior_derivative
    if alpha.degree != chain.degree - 1:
        raise DegreeError("Stokes check needs a (k-1)-form on a k-chain")
    lhs = integrate(alpha, chain.boundary(), order)
    rhs = integrate(exterior_derivative(alpha), chain, order)
    return lhs, rhs


@dataclass
class DeRhamClassification:
    closed: bool
    exact: bool
    inconclusive: bool
    boundary_integrals: list
    cycle_integrals: list
    tolerance: float

    def to_dict(self):
        return {
            "closed": self.closed,
            "exact": self.exact,
            "inconclusive": self.inconclusive,
            "boundary_integrals": self.boundary_integrals,
            "cycle_integrals": self.cycle_integrals,
            "tolerance": self.tolerance,
        }


def derham_classify(alpha: FormField, cycles=(), boundaries=(),
                    order: int = DEFAULT_QUAD_ORDER,
                    tol: float = 1e-7) -> DeRhamClassification:
    """Closed/exact classification by probe integrals.

    `boundaries` are k-chains known to bound, `cycles` are k-cycles; the
    form is closed when it kills all boundary probes and exact when it
    additionally kills all cycle probes.
    """
    if not cycles and not boundaries:
        return DeRhamClassification(False, False, True, [], [], tol)
    bvals = [integrate(alpha, c, order) for c in boundaries]
    zvals = [integrate(alpha, c, order) for c in cycles]
    closed = all(abs(v) < tol for v in bvals)
    exact = closed and all(abs(v) < tol for v in zvals) and bool(zvals)
    if closed and not zvals:
        exact = False  # cannot certify exactness without cycle probes
    return DeRhamClassification(closed, exact, not (cycles or boundaries),
                                bvals, zvals, tol)


# ---------------------------------------------------------------------------
# Advection along a flow
# ---------------------------------------------------------------------------

def rk4_transport(flow, X0, t0: float, t1: float,
                  steps: int = DEFAULT_ADVECTION_STEPS, check=True):
    """Classical fixed-step RK4 transport of points along dx/dt = u(t, x)."""
    X = np.asarray(X0, dtype=float).copy()
    if steps < 1 or t1 == t0:
        return X
    h = (t1 - t0) / steps
    exclusions = getattr(flow, "exclusions", ()) if check else ()
    for j in range(steps):
        t = t0 + j * h
        k1 = flow.velocity(t, X)
        k2 = flow.velocity(t + 0.5 * h, X + 0.5 * h * k1)
        k3 = flow.velocity(t + 0.5 * h, X + 0.5 * h * k2)
        k4 = flow.velocity(t + h, X + h * k3)
        X = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if exclusions:
            _check_exclusions(X, exclusions, t + h)
    return X


def _check_exclusions(X, exclusions, t):
    for zone in exclusions:
        mask = zone.contains(X)
        if np.any(mask):
            idx = tuple(np.argwhere(mask)[0])
            raise AdvectionError(
                f"trajectory of node {idx} entered an exclusion zone at "
                f"t = {t:.6g} (position {np.asarray(X)[idx]})")


def rk4_transport_to(flow, X0, t0: float, t_end, steps: int, check=True):
    """RK4 with a per-node end time; t_end broadcasts over the nodes."""
    X = np.asarray(X0, dtype=float).copy()
    t_end = np.broadcast_to(np.asarray(t_end, dtype=float),
                            X.shape[:-1]).copy()
    if steps < 1:
        return X
    h = (t_end - t0) / steps
    exclusions = getattr(flow, "exclusions", ()) if check else ()
    for j in range(steps):
        t = t0 + j * h
        k1 = flow.velocity(t, X)
        k2 = flow.velocity(t + 0.5 * h, X + 0.5 * h[..., None] * k1)
        k3 = flow.velocity(t + 0.5 * h, X + 0.5 * h[..., None] * k2)
        k4 = flow.velocity(t + h, X + h[..., None] * k3)
        X = X + (h[..., None] / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if exclusions:
            _check_exclusions(X, exclusions, float(np.max(t + h)))
    return X


def transported_cube(base: SingularCube, flow, t0: float, t: float,
                     h_step: float, name: str = "") -> SingularCube:
    """The cube whose points are the flow images of `base` at time t.

    `h_step` is the global advection step size; the number of steps is
    chosen so the same step size reaches every snapshot exactly.
    """
    if t == t0:
        return base
    k_steps = max(1, int(round((t - t0) / h_step)))

    def tmap(U):
        X0 = base.points(U)
        return rk4_transport(flow, X0, t0, t, steps=k_steps)

    return SingularCube(base.degree, base.dim, tmap,
                        name=name or f"{base.name}@t={t:.6g}")


@dataclass
class AdvectedChainFamily:
    """Snapshots of a chain advected along a flow on a fixed time grid."""

    base: GeometricChain
    flow: object
    times: np.ndarray
    steps: int
    snapshots: list = field(default_factory=list)

    @classmethod
    def build(cls, base, flow, t0, t1, steps=DEFAULT_ADVECTION_STEPS,
              snapshots=17):
        if snapshots < 2:
            raise ValueError("need at least two snapshots")
        times = np.linspace(t0, t1, snapshots)
        h_step = (t1 - t0) / steps if t1 != t0 else 1.0
        chains = []
        for t in times:
            cubes = [(c, transported_cube(cube, flow, t0, float(t), h_step))
                     for c, cube in base.terms]
            chains.append(GeometricChain(base.degree, cubes))
        return cls(base, flow, times, steps, chains)

    def snapshot(self, i: int) -> GeometricChain:
        return self.snapshots[i]


def advect_chain(chain: GeometricChain, flow, t0: float, t1: float,
                 steps: int = DEFAULT_ADVECTION_STEPS,
                 snapshots: int = 17) -> AdvectedChainFamily:
    """Advect every cube node along dx/dt = u(t, x); nodes only move."""
    return AdvectedChainFamily.build(chain, flow, t0, t1, steps, snapshots)


def swept_chain(family: AdvectedChainFamily) -> GeometricChain:
    """The (k+1)-chain swept by the advected chain.

    The first reference slot is the time fraction, so the geometric
    boundary carries (final) - (initial) plus lateral trajectory faces
    that cancel when the base chain is a cycle.
    """
    if len(family.times) < 2:
        raise ValueError("swept chain needs a family with >= 2 snapshots")
    t0, t1 = float(family.times[0]), float(family.times[-1])
    flow, steps = family.flow, family.steps
    out = []
    for coeff, cube in family.base.terms:
        out.append((coeff, _swept_cube(cube, flow, t0, t1, steps)))
    return GeometricChain(family.base.degree + 1, out)


def _swept_cube(base, flow, t0, t1, steps):
    def smap(U):
        U = np.asarray(U, dtype=float)
        s = np.clip(U[..., 0], 0.0, 1.0)
        X0 = base.points(U[..., 1:])
        t_end = t0 + s * (t1 - t0)
        return rk4_transport_to(flow, X0, t0, t_end, steps=steps)

    return SingularCube(base.degree + 1, base.dim, smap,
                        name=f"swept({base.name})")


def chain_is_cycle(chain: GeometricChain, tol: float = 1e-9) -> bool:
    """Geometric cycle test: signed boundary faces cancel pointwise.

    Faces are matched by their images at a fixed probe set; gluings that
    reverse parameterization are not recognized (shipped probes do not
    need them).
    """
    if chain.degree == 0:
        return sum(c for c, _ in chain.terms) == 0.0
    bnd = chain.boundary()
    probes = np.linspace(0.13, 0.87, 4)
    if bnd.degree == 0:
        U = np.zeros((1, 0))
    else:
        U = np.stack(np.meshgrid(*([probes] * bnd.degree), indexing="ij"),
                     axis=-1).reshape(-1, bnd.degree)
    groups: list[tuple[np.ndarray, float]] = []
    for coeff, cube in bnd.terms:
        sig = cube.points(U)
        for g, (gsig, _) in enumerate(groups):
            if gsig.shape == sig.shape and np.max(np.abs(gsig - sig)) < tol:
                groups[g] = (gsig, groups[g][1] + coeff)
                break
        else:
            groups.append((sig, coeff))
    return all(abs(total) <= 1e-9 for _, total in groups)


# ---------------------------------------------------------------------------
# Integral invariants
# ---------------------------------------------------------------------------

ABSOLUTE_POINTWISE_TOL = 1e-7
RELATIVE_DRIFT_RTOL = 1e-6
POINTWISE_SAMPLE_BUDGET = 1000


@dataclass
class InvariantReport:
    """Time series of C(t) with drift statistics and a classification."""

    times: list
    series: list
    lie_integrals: list
    dCdt: list
    lhs_drift: float
    agreement_max: float
    pointwise_max: float
    classification: str
    cycle_drift: Optional[float] = None
    open_probe_drift: Optional[float] = None
    chain_was_cycle: Optional[bool] = None
    beta_witness_residual: Optional[float] = None
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "series": [[t, c] for t, c in zip(self.times, self.series)],
            "lie_integrals": list(self.lie_integrals),
            "dCdt_interior": list(self.dCdt),
            "lhs_drift": self.lhs_drift,
            "agreement_max": self.agreement_max,
            "pointwise_max_lie": self.pointwise_max,
            "classification": self.classification,
            "cycle_drift": self.cycle_drift,
            "open_probe_drift": self.open_probe_drift,
            "chain_was_cycle": self.chain_was_cycle,
            "beta_witness_residual": self.beta_witness_residual,
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "C"])
        for t, c in zip(self.times, self.series):
            writer.writerow([repr(float(t)), repr(float(c))])
        return buf.getvalue()


def _central_derivatives(times, values):
    """Interior time derivatives: 4th order where possible, else 2nd."""
    n = len(times)
    dt = times[1] - times[0]
    out = []
    for i in range(1, n - 1):
        if 2 <= i <= n - 3:
            d = (values[i - 2] - 8 * values[i - 1]
                 + 8 * values[i + 1] - values[i + 2]) / (12 * dt)
        else:
            d = (values[i + 1] - values[i - 1]) / (2 * dt)
        out.append(d)
    return out


def invariant_report(alpha, flow, chain, t0, t1, *,
                     steps=DEFAULT_ADVECTION_STEPS, snapshots=17,
                     order=DEFAULT_QUAD_ORDER, alpha_at=None,
                     open_probe=None, cycle_probe=None, beta=None,
                     abs_tol=ABSOLUTE_POINTWISE_TOL,
                     rel_tol=RELATIVE_DRIFT_RTOL) -> InvariantReport:
    """Classify the integral of a form over an advected chain.

    `alpha` is the spatial form; pass `alpha_at` (a map t -> FormField)
    instead when the form is time dependent.  The derivative check
    compares interior finite differences of C(t) against the integral of
    the (slice-restricted) Lie derivative along the flow.
    """
    form_at = alpha_at if alpha_at is not None else (lambda t: alpha)
    family = advect_chain(chain, flow, t0, t1, steps, snapshots)
    times = family.times

    def lie_form(t):
        base_form = form_at(t)
        lie = lie_derivative(flow.spatial_vector(t), base_form)
        if alpha_at is not None:
            dt_form = _time_partial_form(form_at, t)
            lie = add_forms(lie, dt_form)
        return lie

    series = [integrate(form_at(float(t)), family.snapshot(i), order)
              for i, t in enumerate(times)]
    lie_series = [integrate(lie_form(float(t)), family.snapshot(i), order)
                  for i, t in enumerate(times)]
    dCdt = _central_derivatives(times, series)
    agreement = max(
        (abs(d - l) for d, l in zip(dCdt, lie_series[1:-1])), default=0.0)
    drift = max(abs(c - series[0]) for c in series)

    # Pointwise Lie-derivative norm on a deterministic sample of node images.
    samples = _node_samples(family, order)
    pointwise = 0.0
    for t, X in samples:
        vals = lie_form(float(t)).components(X)
        if vals.size:
            pointwise = max(pointwise, float(np.max(np.abs(vals))))

    notes = []
    was_cycle = chain_is_cycle(chain)
    classification = "none"
    cycle_drift = None
    open_drift = None
    if pointwise < abs_tol:
        classification = "absolute"
    else:
        cchain = chain if was_cycle else cycle_probe
        if cchain is None:
            notes.append("chain is not a cycle and no cycle probe was given; "
                         "relative classification unavailable")
        else:
            cfam = (family if cchain is chain else
                    advect_chain(cchain, flow, t0, t1, steps, snapshots))
            cseries = [integrate(form_at(float(t)), cfam.snapshot(i), order)
                       for i, t in enumerate(cfam.times)]
            cycle_drift = max(abs(c - cseries[0]) for c in cseries)
            probe = open_probe if open_probe is not None \
                else _default_open_probe(chain)
            ofam = advect_chain(probe, flow, t0, t1, steps, snapshots)
            oseries = [integrate(form_at(float(t)), ofam.snapshot(i), order)
                       for i, t in enumerate(ofam.times)]
            open_drift = max(abs(c - oseries[0]) for c in oseries)
            cycle_ok = cycle_drift < rel_tol * (1.0 + abs(cseries[0]))
            open_moves = open_drift >= rel_tol * (1.0 + abs(oseries[0]))
            if cycle_ok and open_moves:
                classification = "relative"

    beta_residual = None
    if beta is not None:
        from .forms import exterior_derivative
        worst = 0.0
        for t, X in samples:
            bform = beta(float(t)) if callable(beta) and not isinstance(
                beta, FormField) else beta
            diff = add_forms(lie_form(float(t)),
                             exterior_derivative(bform), 1.0, -1.0)
            vals = diff.components(X)
            if vals.size:
                worst = max(worst, float(np.max(np.abs(vals))))
        beta_residual = worst

    return InvariantReport(
        times=[float(t) for t in times],
        series=series,
        lie_integrals=lie_series,
        dCdt=dCdt,
        lhs_drift=drift,
        agreement_max=agreement,
        pointwise_max=pointwise,
        classification=classification,
        cycle_drift=cycle_drift,
        open_probe_drift=open_drift,
        chain_was_cycle=was_cycle,
        beta_witness_residual=beta_residual,
        notes=notes,
    )


def _time_partial_form(form_at, t, dt=1e-5):
    plus, minus = form_at(t + dt), form_at(t - dt)

    def comp(X):
        return (plus.components(X) - minus.components(X)) / (2 * dt)

    sample = plus
    return FormField(sample.degree, sample.dim, comp, h=sample.h,
                     exclusions=sample.exclusions)


def _node_samples(family, order, budget=POINTWISE_SAMPLE_BUDGET):
    samples = []
    per_snapshot = max(1, budget // max(1, len(family.times)))
    for i, t in enumerate(family.times):
        pts = []
        for _, cube in family.snapshot(i).terms:
            U, _ = tensor_nodes(order, cube.degree)
            pts.append(cube.points(U))
        X = np.concatenate(pts, axis=0) if pts else np.zeros((0, 0))
        samples.append((float(t), X[:per_snapshot]))
    return samples


def _default_open_probe(chain: GeometricChain) -> GeometricChain:
    coeff, cube = chain.terms[0]
    return GeometricChain(chain.degree,
                          [(coeff, restricted_cube(cube, 0, 0.0, 0.5))])
