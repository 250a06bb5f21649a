"""Finite cubical chain complexes over the reals.

A complex is purely incidence data: per degree a list of cube ids, and per
cube a signed face list in degree k-1.  Glued faces (identifications) are
expressed by repeating face ids with signs; no geometry is required.

Boundary sign convention: the face of a k-cube obtained by freezing
coordinate slot a (1-based) at value e in {0, 1} carries the sign
(-1)^(a+e), with faces enumerated slot-major, 0-face before 1-face.  This
makes the 1-cube boundary equal (endpoint) - (start) and squares to zero
exactly in integer arithmetic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

PIVOT_TOL = 1e-10


class ComplexError(ValueError):
    """Structural problem: unknown cube id, degree mismatch, bad file."""


def face_sign(slot: int, end: int) -> int:
    """Sign of the face at 1-based coordinate `slot`, end in {0, 1}."""
    return -1 if (slot + end) % 2 else 1


@dataclass(frozen=True)
class BasisCube:
    """One generator of the complex; geometry is optional and external."""

    id: str
    degree: int
    geometry: Optional[object] = None  # a SingularCube realization, if any


@dataclass
class Chain:
    """Sparse real-coefficient formal sum of basis cubes of one degree."""

    degree: int
    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        self.terms = {k: float(v) for k, v in self.terms.items() if v != 0.0}

    def copy(self) -> "Chain":
        return Chain(self.degree, dict(self.terms))

    def scaled(self, factor: float) -> "Chain":
        return Chain(self.degree, {k: factor * v for k, v in self.terms.items()})

    def __add__(self, other: "Chain") -> "Chain":
        if other.degree != self.degree:
            raise ComplexError("cannot add chains of different degree")
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, 0.0) + v
        return Chain(self.degree, out)

    def __sub__(self, other: "Chain") -> "Chain":
        return self + other.scaled(-1.0)

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(abs(v) <= tol for v in self.terms.values())

    def norm(self) -> float:
        return float(np.sqrt(sum(v * v for v in self.terms.values())))


class Cochain(Chain):
    """Linear functional on chains; same sparse storage as a chain."""


@dataclass
class HomologySummary:
    degree: int
    rank_cycles: int
    rank_boundaries: int
    betti: int
    representative_cycles: list


class CubicalComplex:
    """Basis cubes per degree plus signed face lists (the incidence data)."""

    def __init__(self, name: str = ""):
        self.name = name
        self.cubes: dict[int, list[BasisCube]] = {}
        self.faces: dict[str, list[tuple[int, str]]] = {}
        self._positions: dict[int, dict[str, int]] = {}
        self._incidence: dict[int, np.ndarray] = {}

    # -- construction -------------------------------------------------------

    def add_cube(self, cube_id: str, degree: int, faces=None, geometry=None):
        """Register a cube with its signed face list [(sign, face_id), ...]."""
        if degree < 0:
            raise ComplexError("degree must be non-negative")
        for bucket in self.cubes.values():
            if any(c.id == cube_id for c in bucket):
                raise ComplexError(f"duplicate cube id {cube_id!r}")
        self.cubes.setdefault(degree, []).append(
            BasisCube(cube_id, degree, geometry))
        if degree == 0:
            if faces:
                raise ComplexError("0-cubes have no faces")
            faces = []
        elif faces is None:
            raise ComplexError(f"{degree}-cube {cube_id!r} needs a face list")
        self.faces[cube_id] = [(int(s), f) for s, f in (faces or [])]
        self._positions.clear()
        self._incidence.clear()
        return self

    @property
    def dimension(self) -> int:
        return max(self.cubes) if self.cubes else 0

    def ids(self, degree: int) -> list[str]:
        return [c.id for c in self.cubes.get(degree, [])]

    def positions(self, degree: int) -> dict[str, int]:
        if degree not in self._positions:
            self._positions[degree] = {cid: i for i, cid in
                                       enumerate(self.ids(degree))}
        return self._positions[degree]

    def incidence_matrix(self, degree: int) -> np.ndarray:
        """Matrix of the boundary map from degree k to k-1 (k >= 1)."""
        if degree in self._incidence:
            return self._incidence[degree]
        rows = self.positions(degree - 1)
        cols = self.ids(degree)
        D = np.zeros((len(rows), len(cols)))
        for j, cid in enumerate(cols):
            for sign, fid in self.faces[cid]:
                if fid not in rows:
                    raise ComplexError(
                        f"cube {cid!r} references unknown face {fid!r}")
                D[rows[fid], j] += sign
        self._incidence[degree] = D
        return D

    def validate(self):
        """Check that the incidence data composes to zero in every degree."""
        for k in range(2, self.dimension + 1):
            prod = self.incidence_matrix(k - 1) @ self.incidence_matrix(k)
            if prod.size and np.max(np.abs(prod)) != 0:
                raise ComplexError(
                    f"boundary does not square to zero between degrees "
                    f"{k} and {k - 2} in complex {self.name!r}")
        return self

    # -- vector conversion ---------------------------------------------------

    def chain_vector(self, c: Chain) -> np.ndarray:
        pos = self.positions(c.degree)
        vec = np.zeros(len(pos))
        for cid, coeff in c.terms.items():
            if cid not in pos:
                raise ComplexError(
                    f"unknown {c.degree}-cube {cid!r} in complex {self.name!r}")
            vec[pos[cid]] = coeff
        return vec

    def chain_from_vector(self, degree: int, vec, tol: float = 0.0) -> Chain:
        ids = self.ids(degree)
        return Chain(degree, {cid: float(v) for cid, v in zip(ids, vec)
                              if abs(v) > tol})


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def boundary(c: Chain, complex_: CubicalComplex) -> Chain:
    """Signed face sum, extended linearly over the chain."""
    if c.degree < 1:
        raise ComplexError("boundary of a 0-chain underflows the complex")
    out: dict[str, float] = {}
    for cid, coeff in c.terms.items():
        if cid not in complex_.faces:
            raise ComplexError(f"unknown cube id {cid!r}")
        for sign, fid in complex_.faces[cid]:
            out[fid] = out.get(fid, 0.0) + sign * coeff
    return Chain(c.degree - 1, out)


def coboundary(c: Cochain, complex_: CubicalComplex) -> Cochain:
    """Adjoint of the boundary: the transpose of the incidence matrix."""
    if c.degree >= complex_.dimension:
        raise ComplexError(
            f"coboundary overflows the complex (degree {c.degree} of "
            f"dimension {complex_.dimension})")
    D = complex_.incidence_matrix(c.degree + 1)
    vec = D.T @ complex_.chain_vector(c)
    out = complex_.chain_from_vector(c.degree + 1, vec)
    return Cochain(out.degree, out.terms)


def evaluate(c: Cochain, z: Chain) -> float:
    """Bilinear pairing <cochain, chain> = sum of coefficient products."""
    if c.degree != z.degree:
        raise ComplexError(
            f"pairing degree mismatch: {c.degree} vs {z.degree}")
    return float(sum(coeff * z.terms.get(cid, 0.0)
                     for cid, coeff in c.terms.items()))


def is_cycle(z: Chain, complex_: CubicalComplex, tol: float = 1e-12) -> bool:
    if z.degree == 0:
        return True
    return boundary(z, complex_).norm() <= tol * (1.0 + z.norm())


def is_boundary(z: Chain, complex_: CubicalComplex, tol: float = 1e-8) -> bool:
    """Least-squares solvability of d c_{k+1} = z, relative residual test."""
    zvec = complex_.chain_vector(z)
    if z.degree >= complex_.dimension:
        return float(np.linalg.norm(zvec)) <= tol
    D = complex_.incidence_matrix(z.degree + 1)
    if D.shape[1] == 0:
        return float(np.linalg.norm(zvec)) <= tol
    sol, *_ = np.linalg.lstsq(D, zvec, rcond=None)
    resid = float(np.linalg.norm(D @ sol - zvec))
    return resid <= tol * (1.0 + float(np.linalg.norm(zvec)))


def rank_gauss(matrix: np.ndarray, tol: float = PIVOT_TOL) -> int:
    """Rank by Gaussian elimination with partial pivoting."""
    A = np.array(matrix, dtype=float)
    if A.size == 0:
        return 0
    rows, cols = A.shape
    rank = 0
    for j in range(cols):
        if rank == rows:
            break
        pivot = rank + int(np.argmax(np.abs(A[rank:, j])))
        if abs(A[pivot, j]) <= tol:
            continue
        A[[rank, pivot]] = A[[pivot, rank]]
        A[rank] = A[rank] / A[rank, j]
        mask = np.arange(rows) != rank
        A[mask] -= np.outer(A[mask, j], A[rank])
        rank += 1
    return rank


def _nullspace(matrix: np.ndarray, tol: float = PIVOT_TOL) -> np.ndarray:
    if matrix.shape[0] == 0:
        return np.eye(matrix.shape[1])
    _, s, vt = np.linalg.svd(matrix)
    ns = int(np.sum(s > tol * max(matrix.shape) * (s[0] if s.size else 1.0)))
    return vt[ns:].T


def homology(complex_: CubicalComplex, k: int) -> HomologySummary:
    """Betti number and representative cycles in degree k by rank-nullity."""
    if k < 0 or k > complex_.dimension:
        raise ComplexError(f"degree {k} outside complex of dimension "
                           f"{complex_.dimension}")
    n_k = len(complex_.ids(k))
    if k == 0:
        rank_cycles = n_k
        cycle_basis = np.eye(n_k)
    else:
        D_k = complex_.incidence_matrix(k)
        rank_cycles = n_k - rank_gauss(D_k)
        cycle_basis = _nullspace(D_k)
    if k >= complex_.dimension or len(complex_.ids(k + 1)) == 0:
        rank_boundaries = 0
        B = np.zeros((n_k, 0))
    else:
        D_next = complex_.incidence_matrix(k + 1)
        rank_boundaries = rank_gauss(D_next)
        B = D_next
    betti = rank_cycles - rank_boundaries

    # Representatives: project the boundary space out of the cycle space
    # and keep an orthonormal basis of what survives.
    reps = []
    if betti > 0 and cycle_basis.shape[1] > 0:
        if B.shape[1] > 0:
            Qb, _ = np.linalg.qr(B)
            rb = rank_gauss(B)
            Qb = Qb[:, :rb]
            residual = cycle_basis - Qb @ (Qb.T @ cycle_basis)
        else:
            residual = cycle_basis
        u, s, _ = np.linalg.svd(residual, full_matrices=False)
        for i in range(betti):
            reps.append(complex_.chain_from_vector(k, u[:, i], tol=1e-12))
    return HomologySummary(k, rank_cycles, rank_boundaries, betti, reps)


def betti_numbers(complex_: CubicalComplex) -> list[int]:
    return [homology(complex_, k).betti
            for k in range(complex_.dimension + 1)]


# ---------------------------------------------------------------------------
# File format and the shipped complex library
# ---------------------------------------------------------------------------

FILE_HEADER = "#cubicalcomplex 1"


def complex_to_text(complex_: CubicalComplex) -> str:
    body = {
        "name": complex_.name,
        "cubes": {
            str(k): [
                {"id": c.id,
                 "faces": [[s, f] for s, f in complex_.faces[c.id]]}
                for c in complex_.cubes[k]
            ]
            for k in sorted(complex_.cubes)
        },
    }
    return FILE_HEADER + "\n" + json.dumps(body, indent=2, sort_keys=True) + "\n"


def complex_from_text(text: str) -> CubicalComplex:
    lines = text.strip().splitlines()
    if not lines or lines[0].strip() != FILE_HEADER:
        raise ComplexError(
            f"missing or unsupported header line (expected {FILE_HEADER!r})")
    try:
        body = json.loads("\n".join(lines[1:]))
    except json.JSONDecodeError as exc:
        raise ComplexError(f"bad complex file: {exc}") from exc
    out = CubicalComplex(body.get("name", ""))
    for k in sorted(body.get("cubes", {}), key=int):
        for entry in body["cubes"][k]:
            faces = [(int(s), f) for s, f in entry.get("faces", [])]
            out.add_cube(entry["id"], int(k), faces if int(k) > 0 else None)
    return out.validate()


def load_complex(path) -> CubicalComplex:
    with open(path, "r", encoding="utf-8") as fh:
        return complex_from_text(fh.read())


def save_complex(complex_: CubicalComplex, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(complex_to_text(complex_))


def _circle() -> CubicalComplex:
    # Two arcs glued head to tail.
    return (CubicalComplex("circle")
            .add_cube("p", 0).add_cube("q", 0)
            .add_cube("a", 1, [(1, "q"), (-1, "p")])
            .add_cube("b", 1, [(1, "p"), (-1, "q")]))


def _punctured_plane() -> CubicalComplex:
    # Deformation retract of the punctured plane: one loop on one vertex.
    return (CubicalComplex("punctured_plane")
            .add_cube("p", 0)
            .add_cube("loop", 1, [(1, "p"), (-1, "p")]))


def _doubly_punctured_plane() -> CubicalComplex:
    # Retract of the doubly punctured plane: two loops wedged at a point.
    return (CubicalComplex("doubly_punctured_plane")
            .add_cube("p", 0)
            .add_cube("loop1", 1, [(1, "p"), (-1, "p")])
            .add_cube("loop2", 1, [(1, "p"), (-1, "p")]))


def _cylinder() -> CubicalComplex:
    # Two squares glued along both vertical seams (e5, e6); e1/e3 are the
    # bottom arcs, e2/e4 the top arcs.
    return (CubicalComplex("cylinder")
            .add_cube("Ta", 0).add_cube("Tb", 0)
            .add_cube("Ba", 0).add_cube("Bb", 0)
            .add_cube("e1", 1, [(1, "Bb"), (-1, "Ba")])
            .add_cube("e2", 1, [(1, "Ta"), (-1, "Tb")])
            .add_cube("e3", 1, [(1, "Bb"), (-1, "Ba")])
            .add_cube("e4", 1, [(1, "Tb"), (-1, "Ta")])
            .add_cube("e5", 1, [(1, "Tb"), (-1, "Bb")])
            .add_cube("e6", 1, [(1, "Ta"), (-1, "Ba")])
            .add_cube("s1", 2, [(1, "e1"), (1, "e5"), (-1, "e4"), (-1, "e6")])
            .add_cube("s2", 2, [(-1, "e2"), (1, "e6"), (-1, "e3"), (-1, "e5")]))


def _sphere() -> CubicalComplex:
    # Two hemispheres glued along a two-arc equator.
    return (CubicalComplex("sphere")
            .add_cube("p", 0).add_cube("q", 0)
            .add_cube("a", 1, [(1, "q"), (-1, "p")])
            .add_cube("b", 1, [(1, "p"), (-1, "q")])
            .add_cube("north", 2, [(1, "a"), (1, "b")])
            .add_cube("south", 2, [(-1, "a"), (-1, "b")]))


def _ball() -> CubicalComplex:
    out = _sphere()
    out.name = "ball"
    return out.add_cube("interior", 3, [(1, "north"), (1, "south")])


_BUILTIN_COMPLEXES = {
    "circle": _circle,
    "cylinder": _cylinder,
    "punctured_plane": _punctured_plane,
    "doubly_punctured_plane": _doubly_punctured_plane,
    "sphere": _sphere,
    "ball": _ball,
}

# Golden betti tables for the shipped complexes.
GOLDEN_BETTI = {
    "circle": [1, 1],
    "cylinder": [1, 1, 0],
    "punctured_plane": [1, 1],
    "doubly_punctured_plane": [1, 2],
    "sphere": [1, 0, 1],
    "ball": [1, 0, 0, 0],
}


def builtin_complex(name: str) -> CubicalComplex:
    if name not in _BUILTIN_COMPLEXES:
        raise ComplexError(
            f"unknown complex {name!r}; available: "
            f"{', '.join(sorted(_BUILTIN_COMPLEXES))}")
    return _BUILTIN_COMPLEXES[name]().validate()


def builtin_complex_names() -> list[str]:
    return sorted(_BUILTIN_COMPLEXES)
