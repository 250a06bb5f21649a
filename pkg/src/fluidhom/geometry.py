"""Ready-made singular cubes and chains: loops, discs, boxes, balls.

All maps carry analytic jacobians and positive orientation (the pullback
of the coordinate volume form is non-negative), so Stokes checks hold
with the package's face sign convention.
"""

from __future__ import annotations

import numpy as np

from .integrate import GeometricChain, SingularCube

TWO_PI = 2.0 * np.pi


def point_cube(p) -> SingularCube:
    p = np.asarray(p, dtype=float)

    def pmap(U):
        U = np.asarray(U, dtype=float)
        return np.broadcast_to(p, U.shape[:-1] + p.shape).copy()

    return SingularCube(0, p.shape[-1], pmap, name="point")


def segment_cube(p0, p1) -> SingularCube:
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)

    def smap(U):
        s = np.asarray(U, dtype=float)[..., 0]
        return p0 + s[..., None] * (p1 - p0)

    def sjac(U):
        U = np.asarray(U, dtype=float)
        J = np.broadcast_to((p1 - p0)[:, None],
                            U.shape[:-1] + (p0.shape[-1], 1))
        return J.copy()

    return SingularCube(1, p0.shape[-1], smap, sjac, name="segment")


def circle_cube(center=(0.0, 0.0), radius=1.0, winding=1, dim=2,
                plane=(0, 1), phase=0.0) -> SingularCube:
    """A loop winding `winding` times in the given coordinate plane."""
    center = np.asarray(center, dtype=float)
    i, j = plane
    w = float(winding)

    def cmap(U):
        s = np.asarray(U, dtype=float)[..., 0]
        ang = TWO_PI * w * s + phase
        out = np.broadcast_to(center, s.shape + (dim,)).copy()
        out[..., i] += radius * np.cos(ang)
        out[..., j] += radius * np.sin(ang)
        return out

    def cjac(U):
        s = np.asarray(U, dtype=float)[..., 0]
        ang = TWO_PI * w * s + phase
        J = np.zeros(s.shape + (dim, 1))
        J[..., i, 0] = -radius * TWO_PI * w * np.sin(ang)
        J[..., j, 0] = radius * TWO_PI * w * np.cos(ang)
        return J

    return SingularCube(1, dim, cmap, cjac, name=f"circle(r={radius},w={winding})")


def arc_cube(center, radius, angle0, angle1, dim=2, plane=(0, 1)) -> SingularCube:
    center = np.asarray(center, dtype=float)
    i, j = plane

    def amap(U):
        s = np.asarray(U, dtype=float)[..., 0]
        ang = angle0 + (angle1 - angle0) * s
        out = np.broadcast_to(center, s.shape + (dim,)).copy()
        out[..., i] += radius * np.cos(ang)
        out[..., j] += radius * np.sin(ang)
        return out

    def ajac(U):
        s = np.asarray(U, dtype=float)[..., 0]
        ang = angle0 + (angle1 - angle0) * s
        J = np.zeros(s.shape + (dim, 1))
        J[..., i, 0] = -radius * (angle1 - angle0) * np.sin(ang)
        J[..., j, 0] = radius * (angle1 - angle0) * np.cos(ang)
        return J

    return SingularCube(1, dim, amap, ajac, name="arc")


def radial_segment_cube(center, r0, r1, angle, dim=2, plane=(0, 1)) -> SingularCube:
    center = np.asarray(center, dtype=float)
    i, j = plane
    d = np.zeros(dim)
    d[i], d[j] = np.cos(angle), np.sin(angle)
    return segment_cube(center + r0 * d, center + r1 * d)


def square_cube(origin=(0.0, 0.0), size=1.0, dim=2, plane=(0, 1)) -> SingularCube:
    """Axis-aligned 2-cube: origin + size * (u, v) in the given plane."""
    origin = np.asarray(origin, dtype=float)
    i, j = plane

    def qmap(U):
        U = np.asarray(U, dtype=float)
        out = np.broadcast_to(origin, U.shape[:-1] + (dim,)).copy()
        out[..., i] += size * U[..., 0]
        out[..., j] += size * U[..., 1]
        return out

    def qjac(U):
        U = np.asarray(U, dtype=float)
        J = np.zeros(U.shape[:-1] + (dim, 2))
        J[..., i, 0] = size
        J[..., j, 1] = size
        return J

    return SingularCube(2, dim, qmap, qjac, name="square")


def rect_cube(lo, hi) -> SingularCube:
    """Axis-aligned k-cube spanning the box [lo, hi] in all coordinates."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    k = lo.shape[-1]

    def rmap(U):
        U = np.asarray(U, dtype=float)
        return lo + U * (hi - lo)

    def rjac(U):
        U = np.asarray(U, dtype=float)
        J = np.zeros(U.shape[:-1] + (k, k))
        for a in range(k):
            J[..., a, a] = hi[a] - lo[a]
        return J

    return SingularCube(k, k, rmap, rjac, name="box")


def disc_cube(center=(0.0, 0.0), radius=1.0, dim=2, plane=(0, 1),
              inner_radius=0.0) -> SingularCube:
    """Polar-parameterized disc (or annulus when inner_radius > 0).

    Reference slots are (radial, angular); the outer radial face is the
    positively oriented boundary circle and the angular seam faces cancel
    in the geometric boundary.
    """
    center = np.asarray(center, dtype=float)
    i, j = plane
    r0 = float(inner_radius)

    def dmap(U):
        U = np.asarray(U, dtype=float)
        r = r0 + (radius - r0) * U[..., 0]
        ang = TWO_PI * U[..., 1]
        out = np.broadcast_to(center, U.shape[:-1] + (dim,)).copy()
        out[..., i] += r * np.cos(ang)
        out[..., j] += r * np.sin(ang)
        return out

    def djac(U):
        U = np.asarray(U, dtype=float)
        r = r0 + (radius - r0) * U[..., 0]
        ang = TWO_PI * U[..., 1]
        J = np.zeros(U.shape[:-1] + (dim, 2))
        J[..., i, 0] = (radius - r0) * np.cos(ang)
        J[..., j, 0] = (radius - r0) * np.sin(ang)
        J[..., i, 1] = -r * TWO_PI * np.sin(ang)
        J[..., j, 1] = r * TWO_PI * np.cos(ang)
        return J

    name = "annulus" if r0 > 0 else "disc"
    return SingularCube(2, dim, dmap, djac, name=f"{name}(r={radius})")


def annulus_cube(center, r_inner, r_outer, dim=2, plane=(0, 1)) -> SingularCube:
    """Homology witness between the two boundary circles."""
    return disc_cube(center, r_outer, dim, plane, inner_radius=r_inner)


def ball_cube(center=(0.0, 0.0, 0.0), radius=1.0) -> SingularCube:
    """Spherically parameterized solid ball, positively oriented."""
    center = np.asarray(center, dtype=float)

    def bmap(U):
        U = np.asarray(U, dtype=float)
        r = radius * U[..., 0]
        th = np.pi * U[..., 1]
        ph = TWO_PI * U[..., 2]
        out = np.broadcast_to(center, U.shape[:-1] + (3,)).copy()
        out[..., 0] += r * np.sin(th) * np.cos(ph)
        out[..., 1] += r * np.sin(th) * np.sin(ph)
        out[..., 2] += r * np.cos(th)
        return out

    def bjac(U):
        U = np.asarray(U, dtype=float)
        r = radius * U[..., 0]
        th = np.pi * U[..., 1]
        ph = TWO_PI * U[..., 2]
        st, ct = np.sin(th), np.cos(th)
        cp, sp = np.cos(ph), np.sin(ph)
        J = np.zeros(U.shape[:-1] + (3, 3))
        J[..., 0, 0] = radius * st * cp
        J[..., 1, 0] = radius * st * sp
        J[..., 2, 0] = radius * ct
        J[..., 0, 1] = r * np.pi * ct * cp
        J[..., 1, 1] = r * np.pi * ct * sp
        J[..., 2, 1] = -r * np.pi * st
        J[..., 0, 2] = -r * TWO_PI * st * sp
        J[..., 1, 2] = r * TWO_PI * st * cp
        J[..., 2, 2] = 0.0
        return J

    return SingularCube(3, 3, bmap, bjac, name=f"ball(r={radius})")


def chain_of(*cubes, coefficients=None) -> GeometricChain:
    coeffs = coefficients or [1.0] * len(cubes)
    degree = cubes[0].degree
    return GeometricChain(degree, list(zip(coeffs, cubes)))


def loop_chain(center=(0.0, 0.0), radius=1.0, winding=1, dim=2,
               plane=(0, 1), arcs=1) -> GeometricChain:
    """A circle as one cube or split into several arc cubes."""
    if arcs == 1:
        return chain_of(circle_cube(center, radius, winding, dim, plane))
    total = TWO_PI * winding
    cubes = [arc_cube(center, radius, total * a / arcs, total * (a + 1) / arcs,
                      dim, plane) for a in range(arcs)]
    return chain_of(*cubes)


def polyline_chain(points, dim=None) -> GeometricChain:
    """Chain of straight segments through consecutive points."""
    pts = [np.asarray(p, dtype=float) for p in points]
    cubes = [segment_cube(a, b) for a, b in zip(pts[:-1], pts[1:])]
    return chain_of(*cubes)


def square_loop(origin=(0.0, 0.0), size=1.0) -> GeometricChain:
    """Counterclockwise boundary of a square as four segments."""
    x0, y0 = float(origin[0]), float(origin[1])
    s = float(size)
    return polyline_chain([
        (x0, y0), (x0 + s, y0), (x0 + s, y0 + s), (x0, y0 + s), (x0, y0)])
