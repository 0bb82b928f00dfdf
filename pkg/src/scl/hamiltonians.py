"""Classical symbols H(xi) with vectorized jets and exact rational gradients.

Five kinds are supported: quadratic forms xi . A xi, radial even powers
|xi|^p, linear flows omega . xi, signed diagonal quadratics, and custom
callables.  The first four carry exact rational jets, which the resonance
classification and the frame construction rely on; custom symbols fall back
to finite differences unless exact callables are supplied.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Callable, Sequence

import numpy as np

from .errors import ConvergenceError, DomainError
from .lattice import DUAL, PrimitiveModule, RatVec
from .profiles import RadialCutoff

KINDS = ("quadratic", "even_power", "linear", "difference_quadratic", "custom")


def _as_fraction_matrix(matrix) -> tuple[RatVec, ...]:
    return tuple(tuple(Fraction(x) for x in row) for row in matrix)


@dataclass(frozen=True)
class Hamiltonian:
    kind: str
    dim: int
    exact_rational: bool
    matrix: tuple[RatVec, ...] | None = None
    power: int | None = None
    omega: RatVec | None = None
    signs: tuple[int, ...] | None = None
    coefficients: RatVec | None = None
    value_fn: Callable | None = field(default=None, compare=False)
    gradient_fn: Callable | None = field(default=None, compare=False)
    hessian_fn: Callable | None = field(default=None, compare=False)
    exact_gradient_fn: Callable | None = field(default=None, compare=False)

    # -- floating-point jets, vectorized over leading axes ------------------

    def value(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.kind == "quadratic":
            A = np.array(self.matrix, dtype=float)
            return np.einsum("...i,ij,...j->...", xi, A, xi)
        if self.kind == "even_power":
            s = np.sum(xi * xi, axis=-1)
            return s ** (self.power // 2)
        if self.kind == "linear":
            return xi @ np.array(self.omega, dtype=float)
        if self.kind == "difference_quadratic":
            w = np.array([float(s * c) for s, c in zip(self.signs, self.coefficients)])
            return np.sum(w * xi * xi, axis=-1)
        return np.asarray(self.value_fn(xi), dtype=float)

    def gradient(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.kind == "quadratic":
            A = np.array(self.matrix, dtype=float)
            return 2.0 * xi @ A
        if self.kind == "even_power":
            k = self.power // 2
            if k == 1:
                return 2.0 * xi
            s = np.sum(xi * xi, axis=-1)
            factor = self.power * np.where(s > 0, s, 1.0) ** (k - 1) * (s > 0)
            return factor[..., None] * xi
        if self.kind == "linear":
            return np.broadcast_to(np.array(self.omega, dtype=float), xi.shape).copy()
        if self.kind == "difference_quadratic":
            w = np.array([float(s * c) for s, c in zip(self.signs, self.coefficients)])
            return 2.0 * w * xi
        if self.gradient_fn is not None:
            return np.asarray(self.gradient_fn(xi), dtype=float)
        return self._fd_gradient(xi)

    def hessian(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        d = self.dim
        eye = np.eye(d)
        if self.kind == "quadratic":
            A = np.array(self.matrix, dtype=float)
            return np.broadcast_to(A + A.T, xi.shape + (d,)).copy()
        if self.kind == "even_power":
            p, k = self.power, self.power // 2
            s = np.sum(xi * xi, axis=-1)
            if k == 1:
                return np.broadcast_to(2.0 * eye, xi.shape + (d,)).copy()
            s1 = np.where(s > 0, s, 1.0) ** (k - 1) * (s > 0)
            s2 = (np.where(s > 0, s, 1.0) ** (k - 2) * (s > 0)) if k >= 2 else np.zeros_like(s)
            outer = xi[..., :, None] * xi[..., None, :]
            return p * s1[..., None, None] * eye + p * (p - 2) * s2[..., None, None] * outer
        if self.kind == "linear":
            return np.zeros(xi.shape + (d,))
        if self.kind == "difference_quadratic":
            w = np.array([float(s * c) for s, c in zip(self.signs, self.coefficients)])
            return np.broadcast_to(2.0 * np.diag(w), xi.shape + (d,)).copy()
        if self.hessian_fn is not None:
            return np.asarray(self.hessian_fn(xi), dtype=float)
        return self._fd_hessian(xi)

    def evaluate_jet(self, xi) -> tuple[float, np.ndarray, np.ndarray]:
        xi = np.asarray(xi, dtype=float)
        return float(self.value(xi)), self.gradient(xi), self.hessian(xi)

    def _fd_gradient(self, xi, step: float = 1e-6) -> np.ndarray:
        grad = np.empty_like(xi)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = step
            grad[..., i] = (self.value(xi + e) - self.value(xi - e)) / (2.0 * step)
        return grad

    def _fd_hessian(self, xi, step: float = 1e-4) -> np.ndarray:
        hess = np.empty(xi.shape + (self.dim,))
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = step
            hess[..., i, :] = (self.gradient(xi + e) - self.gradient(xi - e)) / (2.0 * step)
        return 0.5 * (hess + np.swapaxes(hess, -1, -2))

    # -- exact rational jets -------------------------------------------------

    def value_exact(self, xi: Sequence[Fraction | int]) -> Fraction:
        xi = tuple(Fraction(x) for x in xi)
        if self.kind == "quadratic":
            return sum(xi[i] * self.matrix[i][j] * xi[j] for i in range(self.dim) for j in range(self.dim))
        if self.kind == "even_power":
            return sum(x * x for x in xi) ** (self.power // 2)
        if self.kind == "linear":
            return sum(w * x for w, x in zip(self.omega, xi))
        if self.kind == "difference_quadratic":
            return sum(s * c * x * x for s, c, x in zip(self.signs, self.coefficients, xi))
        raise ValueError("custom symbols have no exact evaluation")

    def gradient_exact(self, xi: Sequence[Fraction | int]) -> RatVec:
        xi = tuple(Fraction(x) for x in xi)
        if self.kind == "quadratic":
            sym = [[self.matrix[i][j] + self.matrix[j][i] for j in range(self.dim)] for i in range(self.dim)]
            return tuple(sum(sym[i][j] * xi[j] for j in range(self.dim)) for i in range(self.dim))
        if self.kind == "even_power":
            s = sum(x * x for x in xi)
            return tuple(self.power * s ** (self.power // 2 - 1) * x for x in xi)
        if self.kind == "linear":
            return self.omega
        if self.kind == "difference_quadratic":
            return tuple(2 * s * c * x for s, c, x in zip(self.signs, self.coefficients, xi))
        if self.exact_gradient_fn is not None:
            return tuple(Fraction(x) for x in self.exact_gradient_fn(xi))
        raise ValueError("custom symbols need an exact gradient callable")


def quadratic(matrix) -> Hamiltonian:
    """H(xi) = xi . A xi for a symmetric rational matrix A."""
    A = _as_fraction_matrix(matrix)
    d = len(A)
    if any(len(row) != d for row in A):
        raise ValueError("matrix must be square")
    if any(A[i][j] != A[j][i] for i in range(d) for j in range(d)):
        raise ValueError("matrix must be symmetric")
    return Hamiltonian("quadratic", d, True, matrix=A)


def free_flow(dim: int) -> Hamiltonian:
    """H(xi) = |xi|^2."""
    eye = [[Fraction(int(i == j)) for j in range(dim)] for i in range(dim)]
    return Hamiltonian("quadratic", dim, True, matrix=tuple(tuple(r) for r in eye))


def even_power(power: int, dim: int) -> Hamiltonian:
    """H(xi) = |xi|^power for an even exponent >= 2."""
    if power < 2 or power % 2:
        raise ValueError("power must be an even integer >= 2")
    return Hamiltonian("even_power", dim, True, power=power)


def linear(omega) -> Hamiltonian:
    """H(xi) = omega . xi."""
    w = tuple(Fraction(x) for x in omega)
    return Hamiltonian("linear", len(w), True, omega=w)


def difference_quadratic(signs, coefficients=None) -> Hamiltonian:
    """H(xi) = sum_i signs_i coefficients_i xi_i^2 with signs in {+1, -1}."""
    sg = tuple(int(s) for s in signs)
    if any(s not in (-1, 1) for s in sg):
        raise ValueError("signs must be +-1")
    if coefficients is None:
        coefficients = [1] * len(sg)
    co = tuple(Fraction(c) for c in coefficients)
    if len(co) != len(sg):
        raise ValueError("signs and coefficients must have equal length")
    if any(c <= 0 for c in co):
        raise ValueError("coefficients must be positive")
    return Hamiltonian("difference_quadratic", len(sg), True, signs=sg, coefficients=co)


def custom(dim: int, value: Callable, gradient: Callable | None = None,
           hessian: Callable | None = None, exact_gradient: Callable | None = None) -> Hamiltonian:
    """Wrap callables acting on (..., dim) arrays; jets fall back to central differences."""
    return Hamiltonian("custom", dim, exact_gradient is not None, value_fn=value,
                       gradient_fn=gradient, hessian_fn=hessian, exact_gradient_fn=exact_gradient)


def is_definite(hamiltonian: Hamiltonian, xi, tol: float = 1e-9) -> bool:
    """True when the Hessian at xi is positive or negative definite."""
    eigs = np.linalg.eigvalsh(hamiltonian.hessian(np.asarray(xi, dtype=float)))
    return bool(np.all(eigs > tol) or np.all(eigs < -tol))


# -- frame for second-microlocal splitting -----------------------------------


@dataclass(frozen=True)
class TwoMicrolocalFrame:
    """A resonant point, its module, and the window where xi = sigma + eta splits.

    sigma lives on the critical manifold {dH . k = 0 for k in the module} and
    eta in the real span of the module; the splitting is found by Newton on
    the module coordinates and is unique on B(xi0, epsilon/2) because the
    Hessian is definite there.
    """

    hamiltonian: Hamiltonian
    lattice: PrimitiveModule
    xi0: RatVec
    epsilon: float
    bump: RadialCutoff

    @property
    def dim(self) -> int:
        return self.lattice.dim

    @property
    def rank(self) -> int:
        return self.lattice.rank

    def basis_array(self) -> np.ndarray:
        return np.array(self.lattice.basis, dtype=float)

    def xi0_array(self) -> np.ndarray:
        return np.array([float(x) for x in self.xi0])

    def window(self, xi) -> np.ndarray:
        """The localization bump b(xi), centered at xi0 with radius epsilon."""
        pts = np.asarray(xi, dtype=float) - self.xi0_array()
        return self.bump.of_vector(pts) if pts.shape[-1] == self.dim else self.bump(pts)

    def split(self, xi) -> tuple[np.ndarray, np.ndarray]:
        """F(xi) = (sigma, eta) for a single point; see split_many."""
        sigma, eta, _ = self.split_many(np.asarray(xi, dtype=float)[None, :])
        return sigma[0], eta[0]

    def split_many(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
        """Split each row of points; returns (sigma, eta, newton_iterations).

        Raises DomainError when any point leaves the open ball of radius
        epsilon/2 around xi0, ConvergenceError when Newton stalls.
        """
        pts = np.asarray(points, dtype=float)
        center = self.xi0_array()
        dist = np.sqrt(np.sum((pts - center) ** 2, axis=-1))
        if np.any(dist >= self.epsilon / 2):
            worst = float(np.max(dist))
            raise DomainError(f"point at distance {worst:.6g} from the frame center exceeds epsilon/2 = {self.epsilon / 2:.6g}")
        B = self.basis_array()
        H = self.hamiltonian
        c = np.zeros(pts.shape[:-1] + (self.rank,))
        for it in range(50):
            sigma = pts - c @ B
            residual = H.gradient(sigma) @ B.T
            if np.max(np.abs(residual)) <= 1e-12:
                eta = pts - sigma
                return sigma, eta, it
            jac = -np.einsum("ik,...kl,jl->...ij", B, H.hessian(sigma), B)
            c = c - np.linalg.solve(jac, residual[..., None])[..., 0]
        raise ConvergenceError("Newton iteration for the frame splitting did not reach 1e-12 in 50 steps")


def two_microlocal_frame(hamiltonian: Hamiltonian, lattice: PrimitiveModule, xi0,
                         epsilon: float, bump: RadialCutoff | None = None) -> TwoMicrolocalFrame:
    """Validated frame: xi0 resonant for the module, Hessian definite on the window."""
    if lattice.space != DUAL:
        raise ValueError("frame module must live in the dual space")
    if not 1 <= lattice.rank <= lattice.dim:
        raise ValueError("frame module must have positive rank")
    if lattice.dim != hamiltonian.dim:
        raise ValueError("module and symbol dimensions differ")
    xi0 = tuple(Fraction(x) for x in xi0)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if hamiltonian.exact_rational:
        grad = hamiltonian.gradient_exact(xi0)
        for row in lattice.basis:
            pairing = sum(g * k for g, k in zip(grad, row))
            if pairing != 0:
                raise ValueError(f"center is not resonant: dH . {row} = {pairing}")
    else:
        grad = hamiltonian.gradient(np.array([float(x) for x in xi0]))
        for row in lattice.basis:
            if abs(float(np.dot(grad, np.array(row, dtype=float)))) > 1e-10:
                raise ValueError("center is not resonant for the module")
    # definiteness sampled on a 5-per-axis grid of the epsilon box
    center = np.array([float(x) for x in xi0])
    axes = [np.linspace(-epsilon, epsilon, 5)] * lattice.dim
    for offset in product(*axes):
        point = center + np.array(offset)
        if not is_definite(hamiltonian, point):
            raise ValueError(f"Hessian is not definite at offset {offset} inside the frame window")
    if bump is None:
        bump = RadialCutoff(plateau=epsilon / 2, support=epsilon)
    else:
        if not (bump.plateau >= epsilon / 2 - 1e-12 and bump.support <= epsilon + 1e-12):
            raise ValueError("bump must equal 1 on the half window and vanish outside the window")
    return TwoMicrolocalFrame(hamiltonian, lattice, xi0, float(epsilon), bump)


def F_coordinates(frame: TwoMicrolocalFrame, xi) -> tuple[np.ndarray, np.ndarray]:
    """Split xi = sigma + eta in the frame window; see TwoMicrolocalFrame.split."""
    return frame.split(xi)


# -- serialization ------------------------------------------------------------


def _frac_str(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def hamiltonian_to_json(h: Hamiltonian) -> dict:
    if h.kind == "quadratic":
        return {"kind": "quadratic", "A": [[_frac_str(x) for x in row] for row in h.matrix]}
    if h.kind == "even_power":
        return {"kind": "even_power", "power": h.power, "dim": h.dim}
    if h.kind == "linear":
        return {"kind": "linear", "omega": [_frac_str(x) for x in h.omega]}
    if h.kind == "difference_quadratic":
        return {"kind": "difference_quadratic", "signs": list(h.signs),
                "coefficients": [_frac_str(x) for x in h.coefficients]}
    raise ValueError("custom symbols are not serializable")


def hamiltonian_from_json(data: dict | str) -> Hamiltonian:
    if isinstance(data, str):
        data = json.loads(data)
    kind = data["kind"]
    if kind == "quadratic":
        return quadratic([[Fraction(x) for x in row] for row in data["A"]])
    if kind == "even_power":
        return even_power(int(data["power"]), int(data["dim"]))
    if kind == "linear":
        return linear([Fraction(x) for x in data["omega"]])
    if kind == "difference_quadratic":
        coeffs = data.get("coefficients")
        return difference_quadratic([int(s) for s in data["signs"]],
                                    [Fraction(c) for c in coeffs] if coeffs is not None else None)
    raise ValueError(f"unknown symbol kind {kind!r}")
