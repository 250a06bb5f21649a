"""Differential forms and multivector fields on flat coordinate patches.

Fields live on n-dimensional Euclidean space (n <= 3), optionally with an
explicit leading time slot, so the total slot count is at most 4.  A
degree-k field stores its antisymmetric components as a flat array over
the lexicographically sorted multi-indices of the slots; that ordering is
the contract for every component array in the package.

Component callables are vectorized: they accept points of shape
(..., dim) and return (..., ncomp).  Partial derivatives are either
supplied analytically or fall back to 4th-order central differences that
never sample inside a declared exclusion zone (the stencil flips to a
one-sided formula near a zone).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from functools import lru_cache
from math import comb
from typing import Callable, Optional

import numpy as np

DEFAULT_FD_STEP = 1e-4


class DegreeError(ValueError):
    """Degree over/underflow or mismatch between field degrees."""


class EvaluationError(RuntimeError):
    """A field was sampled where it is not defined."""


# ---------------------------------------------------------------------------
# Exclusion zones (deleted points and lines with a safety radius)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExclusionZone:
    """A deleted point, or a deleted line through `center` along `axis`."""

    center: tuple
    radius: float
    axis: tuple | None = None  # unit direction of a deleted line; None = point
    time_slots: int = 0        # leading point slots to ignore (time)

    def distance(self, X):
        X = np.asarray(X, dtype=float)[..., self.time_slots:]
        c = np.asarray(self.center, dtype=float)
        d = X - c
        if self.axis is not None:
            a = np.asarray(self.axis, dtype=float)
            a = a / np.linalg.norm(a)
            d = d - np.einsum("...i,i->...", d, a)[..., None] * a
        return np.linalg.norm(d, axis=-1)

    def contains(self, X):
        return self.distance(X) < self.radius

    def padded(self, time_slots: int) -> "ExclusionZone":
        return replace(self, time_slots=self.time_slots + time_slots)


def _any_excluded(X, exclusions):
    if not exclusions:
        return np.zeros(np.asarray(X).shape[:-1], dtype=bool)
    mask = np.zeros(np.asarray(X).shape[:-1], dtype=bool)
    for zone in exclusions:
        mask |= zone.contains(X)
    return mask


# ---------------------------------------------------------------------------
# Multi-index combinatorics, cached per (dim, degree)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def lex_indices(dim: int, degree: int) -> tuple:
    """Sorted multi-index tuples of the given degree, lexicographic order."""
    return tuple(itertools.combinations(range(dim), degree))


@lru_cache(maxsize=None)
def _lex_pos(dim: int, degree: int) -> dict:
    return {idx: p for p, idx in enumerate(lex_indices(dim, degree))}


def _merge_sign(left: tuple, right: tuple) -> int:
    # Sign of the shuffle sorting the concatenation of two disjoint
    # sorted tuples: (-1)^inversions.
    inv = sum(1 for a in left for b in right if a > b)
    return -1 if inv % 2 else 1


def _perm_sign(seq) -> int:
    inv = 0
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                inv += 1
    return -1 if inv % 2 else 1


@lru_cache(maxsize=None)
def _wedge_table(dim: int, ka: int, kb: int):
    """Gather indices and scatter matrix for the wedge of degrees ka, kb."""
    out_deg = ka + kb
    ia, ib, scatter = [], [], []
    pos_out = _lex_pos(dim, out_deg)
    n_out = comb(dim, out_deg)
    for pa, I in enumerate(lex_indices(dim, ka)):
        for pb, J in enumerate(lex_indices(dim, kb)):
            if set(I) & set(J):
                continue
            ia.append(pa)
            ib.append(pb)
            row = np.zeros(n_out)
            row[pos_out[tuple(sorted(I + J))]] = _merge_sign(I, J)
            scatter.append(row)
    if not ia:
        return (np.zeros(0, dtype=int), np.zeros(0, dtype=int),
                np.zeros((0, n_out)))
    return np.array(ia), np.array(ib), np.array(scatter)


@lru_cache(maxsize=None)
def _interior_table(dim: int, degree: int):
    """Entries (slot j, component position, sign matrix) for i_X."""
    pos_out = _lex_pos(dim, degree - 1)
    n_out = comb(dim, degree - 1)
    jj, pp, scatter = [], [], []
    for p, J in enumerate(lex_indices(dim, degree)):
        for slot, j in enumerate(J):
            rest = J[:slot] + J[slot + 1:]
            jj.append(j)
            pp.append(p)
            row = np.zeros(n_out)
            row[pos_out[rest]] = -1.0 if slot % 2 else 1.0
            scatter.append(row)
    return np.array(jj), np.array(pp), np.array(scatter)


@lru_cache(maxsize=None)
def _d_table(dim: int, degree: int, axes: tuple):
    """Entries (axis j, input position, sign matrix) for d restricted to axes."""
    pos_in = _lex_pos(dim, degree)
    n_out = comb(dim, degree + 1)
    jj, pp, scatter = [], [], []
    for po, K in enumerate(lex_indices(dim, degree + 1)):
        for slot, j in enumerate(K):
            if j not in axes:
                continue
            rest = K[:slot] + K[slot + 1:]
            jj.append(j)
            pp.append(pos_in[rest])
            row = np.zeros(n_out)
            row[po] = -1.0 if slot % 2 else 1.0
            scatter.append(row)
    if not jj:
        return (np.zeros(0, dtype=int), np.zeros(0, dtype=int),
                np.zeros((0, n_out)))
    return np.array(jj), np.array(pp), np.array(scatter)


@lru_cache(maxsize=None)
def _hodge_table(dim: int, degree: int):
    """For each input index J, the complement I and the sign eps(J, I)."""
    pos_out = _lex_pos(dim, dim - degree)
    order, signs = [], []
    for J in lex_indices(dim, degree):
        I = tuple(j for j in range(dim) if j not in J)
        order.append(pos_out[I])
        signs.append(_perm_sign(J + I))
    return np.array(order), np.array(signs, dtype=float)


# ---------------------------------------------------------------------------
# Field containers
# ---------------------------------------------------------------------------

def _as_points(X, dim):
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != dim:
        raise EvaluationError(f"expected points with {dim} slots, got {X.shape}")
    return X


@dataclass(frozen=True)
class FormField:
    """Degree-k exterior form with lexicographically stored components."""

    degree: int
    dim: int
    comp: Callable               # (..., dim) -> (..., ncomp)
    partials: Optional[Callable] = None  # (..., dim) -> (..., dim, ncomp)
    h: float = DEFAULT_FD_STEP
    exclusions: tuple = ()
    identically_zero: bool = False
    name: str = ""

    @property
    def ncomp(self) -> int:
        return comb(self.dim, self.degree)

    def components(self, X):
        X = _as_points(X, self.dim)
        out = np.asarray(self.comp(X), dtype=float)
        return np.broadcast_to(out, X.shape[:-1] + (self.ncomp,)).copy()

    def partial_derivatives(self, X):
        X = _as_points(X, self.dim)
        if self.partials is not None:
            return np.asarray(self.partials(X), dtype=float)
        return fd_partials(self.components, X, self.h, self.exclusions)


@dataclass(frozen=True)
class MultiVectorField:
    """Degree-k multivector field, stored like a form (contravariant)."""

    degree: int
    dim: int
    comp: Callable
    partials: Optional[Callable] = None
    h: float = DEFAULT_FD_STEP
    exclusions: tuple = ()
    name: str = ""

    @property
    def ncomp(self) -> int:
        return comb(self.dim, self.degree)

    def components(self, X):
        X = _as_points(X, self.dim)
        out = np.asarray(self.comp(X), dtype=float)
        return np.broadcast_to(out, X.shape[:-1] + (self.ncomp,)).copy()

    def partial_derivatives(self, X):
        X = _as_points(X, self.dim)
        if self.partials is not None:
            return np.asarray(self.partials(X), dtype=float)
        return fd_partials(self.components, X, self.h, self.exclusions)


@dataclass(frozen=True)
class Metric:
    """Pointwise symmetric positive-definite metric; None means Euclidean."""

    dim: int
    g: Optional[Callable] = None  # (..., n) -> (..., n, n)

    def matrix(self, X):
        X = np.asarray(X, dtype=float)
        if self.g is None:
            eye = np.eye(self.dim)
            return np.broadcast_to(eye, X.shape[:-1] + (self.dim, self.dim))
        return np.asarray(self.g(X), dtype=float)

    @property
    def is_euclidean(self) -> bool:
        return self.g is None


@dataclass(frozen=True)
class VolumeElement:
    """Globally non-zero top form: density(x) dx^1 ^ ... ^ dx^n."""

    dim: int
    density: Optional[Callable] = None  # (..., n) -> (...,); None = 1

    def density_at(self, X):
        X = np.asarray(X, dtype=float)
        if self.density is None:
            return np.ones(X.shape[:-1])
        rho = np.asarray(self.density(X), dtype=float)
        return np.broadcast_to(rho, X.shape[:-1]).copy()

    def as_form(self) -> FormField:
        n = self.dim
        if self.density is None:
            return constant_form(n, n, [1.0])
        return FormField(n, n, lambda X: self.density_at(X)[..., None],
                         name="V")


def constant_form(degree, dim, values, name="") -> FormField:
    vals = np.asarray(values, dtype=float)

    def comp(X):
        return np.broadcast_to(vals, np.asarray(X).shape[:-1] + vals.shape).copy()

    def partials(X):
        shape = np.asarray(X).shape[:-1] + (dim, vals.shape[-1])
        return np.zeros(shape)

    return FormField(degree, dim, comp, partials=partials, name=name)


def constant_vector(dim, values, name="") -> MultiVectorField:
    vals = np.asarray(values, dtype=float)

    def comp(X):
        return np.broadcast_to(vals, np.asarray(X).shape[:-1] + vals.shape).copy()

    def partials(X):
        shape = np.asarray(X).shape[:-1] + (dim, vals.shape[-1])
        return np.zeros(shape)

    return MultiVectorField(1, dim, comp, partials=partials, name=name)


def zero_form(degree, dim) -> FormField:
    ncomp = comb(dim, degree) if 0 <= degree <= dim else 0

    def comp(X):
        return np.zeros(np.asarray(X).shape[:-1] + (max(ncomp, 0),))

    def partials(X):
        return np.zeros(np.asarray(X).shape[:-1] + (dim, max(ncomp, 0)))

    return FormField(degree, dim, comp, partials=partials,
                     identically_zero=True, name="0")


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------

_CENTRAL_OFFSETS = np.array([-2.0, -1.0, 1.0, 2.0])
_CENTRAL_WEIGHTS = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
_ONESIDED_OFFSETS = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
_ONESIDED_WEIGHTS = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0


def fd_partials(fn, X, h=DEFAULT_FD_STEP, exclusions=()):
    """4th-order finite-difference jacobian of a component callable.

    Returns an array of shape (..., dim, ncomp).  Stencil nodes that would
    fall in an exclusion zone flip the whole stencil to the one-sided
    5-point formula on the safe side.
    """
    X = np.asarray(X, dtype=float)
    dim = X.shape[-1]
    base = np.asarray(fn(X), dtype=float)
    ncomp = base.shape[-1]
    out = np.empty(X.shape[:-1] + (dim, ncomp))
    for j in range(dim):
        step = np.zeros(dim)
        step[j] = h
        nodes = X[..., None, :] + _CENTRAL_OFFSETS[:, None] * step
        vals = np.asarray(fn(nodes), dtype=float)
        deriv = np.einsum("s,...sc->...c", _CENTRAL_WEIGHTS, vals) / h
        if exclusions:
            bad = _any_excluded(nodes, exclusions).any(axis=-1)
            if np.any(bad):
                deriv = deriv.copy()
                flat = np.argwhere(bad)
                for idx in flat:
                    p = X[tuple(idx)]
                    deriv[tuple(idx)] = _onesided(fn, p, j, h, exclusions)
        out[..., j, :] = deriv
    return out


def _onesided(fn, p, axis, h, exclusions):
    for sign in (1.0, -1.0):
        step = np.zeros(p.shape[-1])
        step[axis] = sign * h
        nodes = p[None, :] + _ONESIDED_OFFSETS[:, None] * step
        if not _any_excluded(nodes, exclusions).any():
            vals = np.asarray(fn(nodes), dtype=float)
            return sign * np.einsum("s,sc->c", _ONESIDED_WEIGHTS, vals) / h
    raise EvaluationError(
        f"cannot differentiate at {p}: exclusion zone blocks both stencil sides")


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

def exterior_derivative(alpha: FormField, axes=None) -> FormField:
    """d on forms; `axes` restricts to a subset of slots (spatial d)."""
    k, dim = alpha.degree, alpha.dim
    if k >= dim:
        return zero_form(k + 1, dim)
    if axes is None:
        axes = tuple(range(dim))
    jj, pp, scatter = _d_table(dim, k, tuple(axes))

    def comp(X):
        P = alpha.partial_derivatives(X)
        if jj.size == 0:
            return np.zeros(np.asarray(X).shape[:-1] + (comb(dim, k + 1),))
        contrib = P[..., jj, pp]
        return contrib @ scatter

    return FormField(k + 1, dim, comp, h=alpha.h, exclusions=alpha.exclusions,
                     name=f"d({alpha.name})" if alpha.name else "")


def wedge(a, b):
    """Exterior product; works for two forms or two multivectors."""
    if a.dim != b.dim:
        raise DegreeError("wedge of fields on different slot counts")
    out_deg = a.degree + b.degree
    if out_deg > a.dim:
        raise DegreeError(f"wedge degree {out_deg} exceeds dimension {a.dim}")
    ia, ib, scatter = _wedge_table(a.dim, a.degree, b.degree)
    both_analytic = a.partials is not None and b.partials is not None

    def comp(X):
        av, bv = a.components(X), b.components(X)
        return (av[..., ia] * bv[..., ib]) @ scatter

    partials = None
    if both_analytic:
        def partials(X):
            av, bv = a.components(X), b.components(X)
            pa = a.partial_derivatives(X)
            pb = b.partial_derivatives(X)
            term = pa[..., :, ia] * bv[..., None, ib] \
                + av[..., None, ia] * pb[..., :, ib]
            return term @ scatter

    cls = FormField if isinstance(a, FormField) else MultiVectorField
    excl = tuple(a.exclusions) + tuple(b.exclusions)
    return cls(out_deg, a.dim, comp, partials=partials, h=a.h, exclusions=excl)


def interior_product(X_field: MultiVectorField, alpha: FormField) -> FormField:
    """i_X for a degree-1 multivector; a degree -1 antiderivation."""
    if X_field.degree != 1:
        raise DegreeError("interior product is defined here for vector fields")
    if alpha.degree < 1:
        raise DegreeError("interior product needs a form of degree >= 1")
    if X_field.dim != alpha.dim:
        raise DegreeError("slot count mismatch")
    jj, pp, scatter = _interior_table(alpha.dim, alpha.degree)
    both_analytic = X_field.partials is not None and alpha.partials is not None

    def comp(P):
        xv = X_field.components(P)
        av = alpha.components(P)
        return (xv[..., jj] * av[..., pp]) @ scatter

    partials = None
    if both_analytic:
        def partials(P):
            xv = X_field.components(P)
            av = alpha.components(P)
            px = X_field.partial_derivatives(P)
            pa = alpha.partial_derivatives(P)
            term = px[..., :, jj] * av[..., None, pp] \
                + xv[..., None, jj] * pa[..., :, pp]
            return term @ scatter

    excl = tuple(X_field.exclusions) + tuple(alpha.exclusions)
    return FormField(alpha.degree - 1, alpha.dim, comp, partials=partials,
                     h=alpha.h, exclusions=excl)


def lie_derivative(u: MultiVectorField, alpha: FormField) -> FormField:
    """Cartan's formula: L_u = d i_u + i_u d."""
    terms = []
    if alpha.degree >= 1:
        terms.append(exterior_derivative(interior_product(u, alpha)))
    if alpha.degree < alpha.dim:
        terms.append(interior_product(u, exterior_derivative(alpha)))
    if not terms:
        return zero_form(alpha.degree, alpha.dim)
    if len(terms) == 1:
        return terms[0]
    return add_forms(terms[0], terms[1])


def add_forms(a, b, coeff_a=1.0, coeff_b=1.0):
    """Pointwise linear combination of two same-type, same-degree fields."""
    if a.degree != b.degree or a.dim != b.dim:
        raise DegreeError("cannot add fields of different degree or dimension")

    def comp(X):
        return coeff_a * a.components(X) + coeff_b * b.components(X)

    partials = None
    if a.partials is not None and b.partials is not None:
        def partials(X):
            return coeff_a * a.partial_derivatives(X) \
                + coeff_b * b.partial_derivatives(X)

    cls = FormField if isinstance(a, FormField) else MultiVectorField
    excl = tuple(a.exclusions) + tuple(b.exclusions)
    return cls(a.degree, a.dim, comp, partials=partials, h=a.h, exclusions=excl)


def scale_form(a, factor: float):
    return add_forms(a, a, coeff_a=factor, coeff_b=0.0)


def sharp(A: MultiVectorField, volume: VolumeElement | None = None) -> FormField:
    """Poincare isomorphism #A = i_A V, a (n-k)-form from a k-vector."""
    n = A.dim
    vol = volume or VolumeElement(n)
    order, signs = _hodge_table(n, A.degree)
    unit = vol.density is None

    def comp(X):
        av = A.components(X)
        out = np.zeros(av.shape[:-1] + (comb(n, n - A.degree),))
        out[..., order] = signs * av
        if not unit:
            out = out * vol.density_at(X)[..., None]
        return out

    partials = None
    if A.partials is not None and unit:
        def partials(X):
            pa = A.partial_derivatives(X)
            out = np.zeros(pa.shape[:-1] + (comb(n, n - A.degree),))
            out[..., order] = signs * pa
            return out

    return FormField(n - A.degree, n, comp, partials=partials, h=A.h,
                     exclusions=A.exclusions)


def sharp_inverse(alpha: FormField, volume: VolumeElement | None = None) -> MultiVectorField:
    """Exact inverse of `sharp`: a (n-k)-vector from a k-form."""
    n = alpha.dim
    vol = volume or VolumeElement(n)
    # Invert the bijective table of sharp for the target vector degree.
    order, signs = _hodge_table(n, n - alpha.degree)
    unit = vol.density is None

    def comp(X):
        av = alpha.components(X)
        out = signs * av[..., order]
        if not unit:
            out = out / vol.density_at(X)[..., None]
        return out

    partials = None
    if alpha.partials is not None and unit:
        def partials(X):
            pa = alpha.partial_derivatives(X)
            return signs * pa[..., :, order]

    return MultiVectorField(n - alpha.degree, n, comp, partials=partials,
                            h=alpha.h, exclusions=alpha.exclusions)


def divergence(A: MultiVectorField, volume: VolumeElement | None = None) -> MultiVectorField:
    """div = #^-1 d #, lowering multivector degree by one."""
    if A.degree < 1:
        raise DegreeError("divergence needs a multivector of degree >= 1")
    return sharp_inverse(exterior_derivative(sharp(A, volume)), volume)


def lower_index(v: MultiVectorField, metric: Metric | None = None) -> FormField:
    """Metric lowering of a vector field to a 1-form: v_i = g_ij v^j."""
    if v.degree != 1:
        raise DegreeError("lowering is defined for degree-1 fields")
    m = metric or Metric(v.dim)

    def comp(X):
        G = m.matrix(X)
        return np.einsum("...ij,...j->...i", G, v.components(X))

    partials = None
    if v.partials is not None and m.is_euclidean:
        partials = v.partials

    return FormField(1, v.dim, comp, partials=partials, h=v.h,
                     exclusions=v.exclusions)


def raise_index(alpha: FormField, metric: Metric | None = None) -> MultiVectorField:
    """Metric raising of a 1-form to a vector field (inverse of lowering)."""
    if alpha.degree != 1:
        raise DegreeError("raising is defined for degree-1 fields")
    m = metric or Metric(alpha.dim)

    def comp(X):
        G = m.matrix(X)
        a = alpha.components(X)
        try:
            return np.linalg.solve(G, a[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise EvaluationError(f"metric not invertible: {exc}") from exc

    partials = None
    if alpha.partials is not None and m.is_euclidean:
        partials = alpha.partials

    return MultiVectorField(1, alpha.dim, comp, partials=partials, h=alpha.h,
                            exclusions=alpha.exclusions)


def pairing(alpha: FormField, A: MultiVectorField, X):
    """Complete contraction <alpha, A> of equal-degree form and multivector."""
    if alpha.degree != A.degree or alpha.dim != A.dim:
        raise DegreeError("pairing needs matching degree and dimension")
    return np.einsum("...c,...c->...", alpha.components(X), A.components(X))


def full_tensor(field, X):
    """Expand lexicographic components to the full antisymmetric array."""
    k, dim = field.degree, field.dim
    vals = field.components(X)
    shape = vals.shape[:-1] + (dim,) * k
    out = np.zeros(shape)
    for p, idx in enumerate(lex_indices(dim, k)):
        for perm in itertools.permutations(range(k)):
            target = tuple(idx[q] for q in perm)
            sign = _perm_sign(perm)
            out[(...,) + target] = sign * vals[..., p]
    return out
