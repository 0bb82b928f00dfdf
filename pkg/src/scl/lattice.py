"""Exact integer and rational linear algebra for primitive submodules.

Submodules of the dual lattice (and of the primal lattice) are carried by
`PrimitiveModule`: a canonical row-style Hermite-normal-form basis of a
saturated sublattice.  Everything here is exact; floats never enter except
in `fractional_part`, whose input is a real vector by contract.

Vectors are plain tuples of ints (`IntVec`) or Fractions (`RatVec`).
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import ExactnessError, SpanError

IntVec = tuple[int, ...]
RatVec = tuple[Fraction, ...]

DUAL = "dual"
PRIMAL = "primal"


def _xgcd(a: int, b: int) -> tuple[int, int, int]:
    """Return (g, s, t) with s*a + t*b = g = gcd(a, b), g >= 0."""
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r != 0:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
        old_t, t = t, old_t - q * t
    if old_r < 0:
        old_r, old_s, old_t = -old_r, -old_s, -old_t
    return old_r, old_s, old_t


def hnf_with_transform(rows: Sequence[Sequence[int]], width: int) -> tuple[list[list[int]], list[list[int]], list[int]]:
    """Row-style Hermite normal form with unimodular transform.

    Returns (H, U, pivots) where U is m x m unimodular, U @ A has the
    nonzero rows H on top (positive pivots, entries above each pivot
    reduced into [0, pivot)) and zero rows below; pivots lists the pivot
    column of each row of H.
    """
    A = [list(map(int, r)) for r in rows]
    m = len(A)
    for r in A:
        if len(r) != width:
            raise ValueError("ragged generator matrix")
    U = [[int(i == j) for j in range(m)] for i in range(m)]
    piv = 0
    pivots: list[int] = []
    for col in range(width):
        sel = next((r for r in range(piv, m) if A[r][col] != 0), None)
        if sel is None:
            continue
        if sel != piv:
            A[piv], A[sel] = A[sel], A[piv]
            U[piv], U[sel] = U[sel], U[piv]
        for r in range(piv + 1, m):
            if A[r][col] == 0:
                continue
            g, s, t = _xgcd(A[piv][col], A[r][col])
            p, q = A[piv][col] // g, A[r][col] // g
            # det [[s, t], [-q, p]] = (s*a + t*b)/g = 1: the 2-row op is unimodular
            for c in range(width):
                A[piv][c], A[r][c] = s * A[piv][c] + t * A[r][c], -q * A[piv][c] + p * A[r][c]
            for c in range(m):
                U[piv][c], U[r][c] = s * U[piv][c] + t * U[r][c], -q * U[piv][c] + p * U[r][c]
        if A[piv][col] < 0:
            A[piv] = [-x for x in A[piv]]
            U[piv] = [-x for x in U[piv]]
        for r in range(piv):
            q = A[r][col] // A[piv][col]
            if q:
                A[r] = [x - q * y for x, y in zip(A[r], A[piv])]
                U[r] = [x - q * y for x, y in zip(U[r], U[piv])]
        pivots.append(col)
        piv += 1
        if piv == m:
            break
    return [A[i] for i in range(piv)], U, pivots


def smith_normal_form(rows: Sequence[Sequence[int]], width: int) -> tuple[list[list[int]], list[list[int]], list[list[int]], list[list[int]]]:
    """Smith normal form with transforms: returns (D, S, T, Tinv).

    S @ A @ T = D with S, T unimodular and D diagonal, divisors positive and
    each dividing the next.  Tinv = T^{-1} is tracked exactly alongside T.
    """
    A = [list(map(int, r)) for r in rows]
    m = len(A)
    n = width
    S = [[int(i == j) for j in range(m)] for i in range(m)]
    T = [[int(i == j) for j in range(n)] for i in range(n)]
    Tinv = [[int(i == j) for j in range(n)] for i in range(n)]

    def row_op(i, j, s, t, q, p):
        for c in range(n):
            A[i][c], A[j][c] = s * A[i][c] + t * A[j][c], -q * A[i][c] + p * A[j][c]
        for c in range(m):
            S[i][c], S[j][c] = s * S[i][c] + t * S[j][c], -q * S[i][c] + p * S[j][c]

    def col_op(i, j, s, t, q, p):
        # columns i, j of A and T combine; Tinv gets the inverse op on rows
        for r in range(m):
            A[r][i], A[r][j] = s * A[r][i] + t * A[r][j], -q * A[r][i] + p * A[r][j]
        for r in range(n):
            T[r][i], T[r][j] = s * T[r][i] + t * T[r][j], -q * T[r][i] + p * T[r][j]
        # inverse of [[s, -q], [t, p]] (column action) is [[p, q], [-t, s]]
        for c in range(n):
            Tinv[i][c], Tinv[j][c] = p * Tinv[i][c] + q * Tinv[j][c], -t * Tinv[i][c] + s * Tinv[j][c]

    k = 0
    while k < min(m, n):
        # find a nonzero entry at or beyond (k, k)
        found = next(((i, j) for i in range(k, m) for j in range(k, n) if A[i][j] != 0), None)
        if found is None:
            break
        i0, j0 = found
        if i0 != k:
            A[k], A[i0] = A[i0], A[k]
            S[k], S[i0] = S[i0], S[k]
        if j0 != k:
            for r in range(m):
                A[r][k], A[r][j0] = A[r][j0], A[r][k]
            for r in range(n):
                T[r][k], T[r][j0] = T[r][j0], T[r][k]
            Tinv[k], Tinv[j0] = Tinv[j0], Tinv[k]
        while True:
            # shears when divisible keep the pivot fixed; the xgcd op strictly
            # shrinks |pivot| otherwise, so the row/col alternation terminates
            for i in range(k + 1, m):
                if A[i][k] != 0:
                    if A[i][k] % A[k][k] == 0:
                        q = A[i][k] // A[k][k]
                        for c in range(n):
                            A[i][c] -= q * A[k][c]
                        for c in range(m):
                            S[i][c] -= q * S[k][c]
                    else:
                        g, s, t = _xgcd(A[k][k], A[i][k])
                        row_op(k, i, s, t, A[i][k] // g, A[k][k] // g)
            for j in range(k + 1, n):
                if A[k][j] != 0:
                    if A[k][j] % A[k][k] == 0:
                        q = A[k][j] // A[k][k]
                        for r in range(m):
                            A[r][j] -= q * A[r][k]
                        for r in range(n):
                            T[r][j] -= q * T[r][k]
                        for c in range(n):
                            Tinv[k][c] += q * Tinv[j][c]
                    else:
                        g, s, t = _xgcd(A[k][k], A[k][j])
                        col_op(k, j, s, t, A[k][j] // g, A[k][k] // g)
            if all(A[i][k] == 0 for i in range(k + 1, m)) and all(A[k][j] == 0 for j in range(k + 1, n)):
                break
        # divisibility fix-up: fold any entry not divisible by the pivot
        bad = next(((i, j) for i in range(k + 1, m) for j in range(k + 1, n) if A[i][j] % A[k][k] != 0), None) if A[k][k] != 0 else None
        if bad is not None:
            i, j = bad
            # add row i to row k (unimodular shear), then continue clearing
            for c in range(n):
                A[k][c] += A[i][c]
            for c in range(m):
                S[k][c] += S[i][c]
            continue
        if A[k][k] < 0:
            for c in range(n):
                A[k][c] = -A[k][c]
            for c in range(m):
                S[k][c] = -S[k][c]
        k += 1
    return A, S, T, Tinv


@dataclass(frozen=True)
class PrimitiveModule:
    """A saturated sublattice with canonical HNF basis rows."""

    dim: int
    rank: int
    basis: tuple[IntVec, ...]
    space: str = DUAL

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")
        if not 0 <= self.rank <= self.dim:
            raise ValueError("rank out of range")

    def contains(self, vector: Sequence[int]) -> bool:
        return self.coordinates(vector) is not None

    def coordinates(self, vector: Sequence[int]) -> IntVec | None:
        """Integer coordinates of `vector` in the basis, or None."""
        v = [int(x) for x in vector]
        coords = []
        for row in self.basis:
            p = next(i for i, x in enumerate(row) if x != 0)
            q, rem = divmod(v[p], row[p])
            if rem:
                return None
            coords.append(q)
            v = [a - q * b for a, b in zip(v, row)]
        return tuple(coords) if all(x == 0 for x in v) else None

    def in_rational_span(self, vector: Sequence[Fraction | int]) -> bool:
        v = [Fraction(x) for x in vector]
        for row in self.basis:
            p = next(i for i, x in enumerate(row) if x != 0)
            q = v[p] / row[p]
            v = [a - q * b for a, b in zip(v, row)]
        return all(x == 0 for x in v)

    def member(self, coefficients: Sequence[int]) -> IntVec:
        """The lattice vector with the given basis coefficients."""
        v = [0] * self.dim
        for c, row in zip(coefficients, self.basis):
            for i, x in enumerate(row):
                v[i] += c * x
        return tuple(v)


def _canonical(rows: Iterable[Sequence[int]], dim: int, space: str) -> PrimitiveModule:
    H, _, _ = hnf_with_transform(list(rows), dim)
    return PrimitiveModule(dim, len(H), tuple(tuple(r) for r in H), space)


def full_module(dim: int, space: str = DUAL) -> PrimitiveModule:
    eye = [[int(i == j) for j in range(dim)] for i in range(dim)]
    return PrimitiveModule(dim, dim, tuple(tuple(r) for r in eye), space)


def zero_module(dim: int, space: str = DUAL) -> PrimitiveModule:
    return PrimitiveModule(dim, 0, (), space)


def integer_kernel(rows: Sequence[Sequence[int]], dim: int, space: str) -> PrimitiveModule:
    """{v in Z^dim : row . v = 0 for every row}; automatically saturated."""
    mat = [list(r) for r in rows if any(x != 0 for x in r)]
    if not mat:
        return full_module(dim, space)
    # rows of the transform beyond the rank of A^T kill every column of A^T
    transpose = [[row[i] for row in mat] for i in range(dim)]
    H, U, _ = hnf_with_transform(transpose, len(mat))
    kernel_rows = U[len(H):]
    return _canonical(kernel_rows, dim, space)


def saturate(generators: Sequence[Sequence[int]], dim: int | None = None, space: str = DUAL) -> PrimitiveModule:
    """Smallest primitive module whose rational span contains the generators.

    Computed from the Smith normal form of the generator matrix: the
    saturation basis is the top block of T^{-1} with divisors scaled out.
    """
    gens = [list(map(int, g)) for g in generators]
    if dim is None:
        if not gens:
            raise ValueError("dimension required for an empty generator set")
        dim = len(gens[0])
    gens = [g for g in gens if any(x != 0 for x in g)]
    if not gens:
        return zero_module(dim, space)
    D, _, _, Tinv = smith_normal_form(gens, dim)
    rank = sum(1 for i in range(min(len(gens), dim)) if i < len(D) and D[i][i] != 0)
    return _canonical(Tinv[:rank], dim, space)


def resonance_module(gradient: Sequence[Fraction | int], dim: int | None = None) -> PrimitiveModule:
    """Integer covectors k with k . gradient = 0, as a dual module."""
    grad = [Fraction(x) for x in gradient]
    if dim is None:
        dim = len(grad)
    from math import lcm

    mult = lcm(*(f.denominator for f in grad)) if grad else 1
    int_row = [int(f * mult) for f in grad]
    return integer_kernel([int_row], dim, DUAL)


def orthogonal_lattice(module: PrimitiveModule) -> PrimitiveModule:
    """Primal vectors annihilated by every element of a dual module (or vice versa)."""
    other = PRIMAL if module.space == DUAL else DUAL
    if module.rank == 0:
        return full_module(module.dim, other)
    return integer_kernel(module.basis, module.dim, other)


def complement_lattice(module: PrimitiveModule) -> PrimitiveModule:
    """A direct-sum complement: module (+) complement = Z^dim, stacked det +-1.

    Deterministic: row-reduce the transposed basis to [I; 0] by a unimodular
    U; the complement is the trailing block of U^{-T}, re-canonicalized.
    """
    d, r = module.dim, module.rank
    if r == 0:
        return full_module(d, module.space)
    if r == d:
        return zero_module(d, module.space)
    transpose = [[row[i] for row in module.basis] for i in range(d)]
    H, U, _ = hnf_with_transform(transpose, r)
    if len(H) != r or any(H[i][i] != 1 or any(H[i][j] != 0 for j in range(r) if j != i) for i in range(r)):
        raise ValueError("basis is not primitive")  # cannot happen for PrimitiveModule inputs
    Uinv = invert_unimodular(U)
    complement_rows = [[Uinv[row][col] for row in range(d)] for col in range(r, d)]
    return _canonical(complement_rows, d, module.space)


def invert_unimodular(mat: Sequence[Sequence[int]]) -> list[list[int]]:
    """Exact inverse of an integer matrix with det +-1."""
    n = len(mat)
    M = [[Fraction(x) for x in row] + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(mat)]
    for col in range(n):
        piv = next(r for r in range(col, n) if M[r][col] != 0)
        M[col], M[piv] = M[piv], M[col]
        inv = 1 / M[col][col]
        M[col] = [x * inv for x in M[col]]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col]
                M[r] = [x - f * y for x, y in zip(M[r], M[col])]
    out = [[M[i][n + j] for j in range(n)] for i in range(n)]
    for row in out:
        for x in row:
            if x.denominator != 1:
                raise ValueError("matrix is not unimodular")
    return [[int(x) for x in row] for row in out]


def stacked_determinant(a: PrimitiveModule, b: PrimitiveModule) -> int:
    """Determinant of the (rank(a)+rank(b)) x dim stack of both bases (must be square)."""
    rows = [list(r) for r in a.basis] + [list(r) for r in b.basis]
    n = len(rows)
    if n != a.dim:
        raise ValueError("stack is not square")
    M = [[Fraction(x) for x in row] for row in rows]
    det = Fraction(1)
    for col in range(n):
        piv = next((r for r in range(col, n) if M[r][col] != 0), None)
        if piv is None:
            return 0
        if piv != col:
            M[col], M[piv] = M[piv], M[col]
            det = -det
        det *= M[col][col]
        inv = 1 / M[col][col]
        for r in range(col + 1, n):
            if M[r][col] != 0:
                f = M[r][col] * inv
                M[r] = [x - f * y for x, y in zip(M[r], M[col])]
    assert det.denominator == 1
    return int(det)


def fractional_part(eta: Sequence[float], module: PrimitiveModule) -> tuple[tuple[float, ...], IntVec]:
    """Split a real vector of the module's span as frac + integer member.

    The fractional representative has basis coordinates in [0, 1) (a fixed
    half-open fundamental box).  SpanError if eta is not in the span to 1e-9.
    """
    import numpy as np

    if module.rank == 0:
        v = np.asarray(eta, dtype=float)
        if np.max(np.abs(v)) > 1e-9 if v.size else False:
            raise SpanError("vector is not in the span of the rank-0 module")
        return tuple(0.0 for _ in range(module.dim)), tuple(0 for _ in range(module.dim))
    B = np.array(module.basis, dtype=float)
    v = np.asarray(eta, dtype=float)
    coords, *_ = np.linalg.lstsq(B.T, v, rcond=None)
    residual = v - B.T @ coords
    if np.max(np.abs(residual)) > 1e-9:
        raise SpanError(f"vector deviates from the module span by {np.max(np.abs(residual)):.3e}")
    snapped = np.where(np.abs(coords - np.round(coords)) <= 1e-12, np.round(coords), coords)
    int_coords = np.floor(snapped).astype(int)
    frac_coords = snapped - int_coords
    frac = tuple(float(x) for x in frac_coords @ B)
    int_part = module.member(tuple(int(c) for c in int_coords))
    return frac, int_part


@dataclass(frozen=True)
class MomentumClass:
    """The resonance module of a momentum plus its resonance order."""

    module: PrimitiveModule
    order: int

    def __post_init__(self):
        assert self.module.rank == self.module.dim - self.order


def classify_momentum(hamiltonian, xi: Sequence[Fraction | int]) -> MomentumClass:
    """Resonance classification of a rational momentum under an exact model."""
    if not getattr(hamiltonian, "exact_rational", False):
        raise ExactnessError("classification needs exact rational gradients; declare the module explicitly instead")
    grad = hamiltonian.gradient_exact(tuple(Fraction(x) for x in xi))
    module = resonance_module(grad, hamiltonian.dim if hasattr(hamiltonian, "dim") else len(grad))
    return MomentumClass(module, module.dim - module.rank)


def module_to_json(module: PrimitiveModule) -> dict:
    return {
        "dim": module.dim,
        "rank": module.rank,
        "basis": [[str(x) for x in row] for row in module.basis],
    }


def module_from_json(data: dict, space: str = DUAL) -> PrimitiveModule:
    rows = [tuple(int(x) for x in row) for row in data["basis"]]
    mod = PrimitiveModule(int(data["dim"]), int(data["rank"]), tuple(rows), space)
    # round-trip safety: the stored basis must already be canonical
    recanon = _canonical(rows, mod.dim, space) if rows else zero_module(mod.dim, space)
    if recanon.basis != mod.basis or recanon.rank != mod.rank:
        raise ValueError("stored basis is not in canonical form")
    return mod
