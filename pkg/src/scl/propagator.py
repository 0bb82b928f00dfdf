"""Exact Fourier propagation e^{-i t H(h D)/h} and spectral bookkeeping.

Everything diagonalizes over the mode lattice, so evolution is a phase per
mode and never loses mass.  Spacing and eigenspace grouping run in exact
rational arithmetic whenever the symbol supports it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import ExactnessError, ToleranceAmbiguity
from .hamiltonians import Hamiltonian
from .states import AxisPotential, FourierState

MAX_SPACING_MODES = 1 << 25


@dataclass(frozen=True)
class TimeScale:
    """tau(h) = coefficient * h^{-exponent}."""

    coefficient: float = 1.0
    exponent: float = 1.0

    def __post_init__(self):
        if self.coefficient <= 0 or self.exponent <= 0:
            raise ValueError("time scale needs positive coefficient and exponent")

    def __call__(self, h: float) -> float:
        return self.coefficient * h ** (-self.exponent)

    @property
    def regime(self) -> str:
        if self.exponent < 1.0:
            return "subcritical"
        if self.exponent == 1.0:
            return "critical"
        return "supercritical"


def evolve(hamiltonian: Hamiltonian, state: FourierState, t: float) -> FourierState:
    """Apply e^{-i t H(h k)/h} mode by mode; t is unscaled time."""
    h = state.h
    return state.map_coefficients(
        lambda K, C: C * np.exp(-1j * (t / h) * hamiltonian.value(h * K.astype(float))))


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigen-groups (energy, weight, unit state) with weights summing to the input mass."""

    h: float
    dim: int
    groups: tuple[tuple[object, float, FourierState], ...]

    def weights(self) -> list[float]:
        return [w for _, w, _ in self.groups]

    def energies(self) -> list[object]:
        return [e for e, _, _ in self.groups]

    def reconstruct(self) -> FourierState:
        total: dict[tuple[int, ...], complex] = {}
        for _, w, s in self.groups:
            a = math.sqrt(w)
            for k, v in s.coefficients.items():
                total[k] = total.get(k, 0.0) + a * v
        return FourierState(self.h, self.dim, total)


def eigenspace_decompose(hamiltonian: Hamiltonian, state: FourierState,
                         tol: float | None = None) -> SpectralDecomposition:
    """Group modes by the value of H(h k).

    Without a tolerance the grouping is exact (rational h and symbol); with
    one, energies closer than tol merge, and a gap below 10*tol between
    distinct groups raises ToleranceAmbiguity.
    """
    K, C = state.as_arrays()
    if tol is None:
        if not hamiltonian.exact_rational:
            raise ExactnessError("exact grouping needs a rational symbol; pass a tolerance instead")
        h = Fraction(state.h)
        buckets: dict[Fraction, list[int]] = {}
        for i, k in enumerate(K):
            e = hamiltonian.value_exact(tuple(h * int(x) for x in k))
            buckets.setdefault(e, []).append(i)
        items = sorted(buckets.items())
    else:
        energies = hamiltonian.value(state.h * K.astype(float))
        order = np.argsort(energies, kind="stable")
        clusters: list[list[int]] = [[int(order[0])]]
        for idx in order[1:]:
            idx = int(idx)
            prev = clusters[-1][-1]
            gap = float(energies[idx] - energies[prev])
            if gap <= tol:
                clusters[-1].append(idx)
            else:
                if gap < 10.0 * tol:
                    raise ToleranceAmbiguity(
                        f"energy gap {gap:.3e} sits between tol and 10*tol; grouping is not stable")
                clusters.append([idx])
        items = [(float(np.mean(energies[c])), c) for c in clusters]
    groups = []
    for energy, idxs in items:
        weight = float(sum(abs(C[i]) ** 2 for i in idxs))
        scale = 1.0 / math.sqrt(weight)
        part = {tuple(int(x) for x in K[i]): complex(C[i]) * scale for i in idxs}
        groups.append((energy, weight, FourierState(state.h, state.dim, part)))
    return SpectralDecomposition(state.h, state.dim, tuple(groups))


# -- exact spacing of the spectrum over a window -------------------------------


def _integer_energy_data(hamiltonian: Hamiltonian) -> tuple[int, int]:
    """(degree, denominator) with H(h k) = h^degree * q(k) / denominator, q integer."""
    if hamiltonian.kind == "quadratic":
        denom = math.lcm(*(x.denominator for row in hamiltonian.matrix for x in row))
        return 2, denom
    if hamiltonian.kind == "even_power":
        return hamiltonian.power, 1
    if hamiltonian.kind == "linear":
        return 1, math.lcm(*(x.denominator for x in hamiltonian.omega))
    if hamiltonian.kind == "difference_quadratic":
        return 2, math.lcm(*(x.denominator for x in hamiltonian.coefficients))
    raise ExactnessError("spacing needs one of the exact symbol kinds")


def _integer_energies(hamiltonian: Hamiltonian, K: np.ndarray, denom: int) -> list[int]:
    cols = [K[:, i].astype(object) for i in range(K.shape[1])]
    if hamiltonian.kind == "quadratic":
        total = None
        for i in range(len(cols)):
            for j in range(len(cols)):
                w = hamiltonian.matrix[i][j] * denom
                if w:
                    term = cols[i] * cols[j] * int(w)
                    total = term if total is None else total + term
        return list(total) if total is not None else [0] * len(K)
    if hamiltonian.kind == "even_power":
        s = sum(c * c for c in cols)
        return list(s ** (hamiltonian.power // 2))
    if hamiltonian.kind == "linear":
        total = sum(c * int(w * denom) for c, w in zip(cols, hamiltonian.omega))
        return list(total)
    if hamiltonian.kind == "difference_quadratic":
        total = sum(c * c * int(s * w * denom) for c, s, w in zip(cols, hamiltonian.signs, hamiltonian.coefficients))
        return list(total)
    raise ExactnessError("spacing needs one of the exact symbol kinds")


def spacing_scale(hamiltonian: Hamiltonian, h: Fraction | float, box: Sequence[tuple]) -> Fraction | float:
    """h / (minimal nonzero gap of {H(h k) : h k in the box}), exactly.

    The box is a product of closed intervals with rational endpoints.  With
    fewer than two distinct energies the spacing degenerates and +inf is
    returned.
    """
    h = Fraction(h)
    if h <= 0:
        raise ValueError("h must be positive")
    d = hamiltonian.dim
    if len(box) != d:
        raise ValueError("box dimension does not match the symbol")
    ranges = []
    count = 1
    for a, b in box:
        lo = math.ceil(Fraction(a) / h)
        hi = math.floor(Fraction(b) / h)
        if hi < lo:
            return math.inf
        ranges.append(np.arange(lo, hi + 1, dtype=np.int64))
        count *= hi - lo + 1
        if count > MAX_SPACING_MODES:
            raise ValueError(f"box holds more than {MAX_SPACING_MODES} modes at h = {h}")
    degree, denom = _integer_energy_data(hamiltonian)
    grids = np.meshgrid(*ranges, indexing="ij")
    K = np.stack([g.ravel() for g in grids], axis=-1)
    values = _integer_energies(hamiltonian, K, denom)
    distinct = sorted(set(values))
    if len(distinct) < 2:
        return math.inf
    gap = min(b - a for a, b in zip(distinct, distinct[1:]))
    # gap_energy = h^degree * gap / denom; spacing time = h / gap_energy
    return h ** (1 - degree) * denom / gap


# -- quasimode quality ----------------------------------------------------------


def quasimode_residual(hamiltonian: Hamiltonian, state: FourierState, energy: float,
                       potential: AxisPotential | None = None) -> float:
    """L^2 norm of (H(h D) + potential - energy) applied to the state."""
    K, C = state.as_arrays()
    base = (hamiltonian.value(state.h * K.astype(float)) - energy) * C
    if potential is None:
        return float(np.sqrt(np.sum(np.abs(base) ** 2)))
    out: dict[tuple[int, ...], complex] = {}
    for k, v in zip(K, base):
        out[tuple(int(x) for x in k)] = out.get(tuple(int(x) for x in k), 0.0) + complex(v)
    q_modes, q_vals = potential.mode_arrays()
    axis = potential.axis
    for q, pv in zip(q_modes, q_vals):
        shift = potential.strength * pv
        for k, v in zip(K, C):
            key = tuple(int(x) + (int(q) if i == axis else 0) for i, x in enumerate(k))
            out[key] = out.get(key, 0.0) + shift * complex(v)
    return float(np.sqrt(sum(abs(v) ** 2 for v in out.values())))


def stability_horizon(hamiltonian: Hamiltonian, state: FourierState, energy: float,
                      target: float, potential: AxisPotential | None = None) -> float:
    """Largest T with T * residual / h <= target: phase coherence survives to T."""
    if target <= 0:
        raise ValueError("target must be positive")
    residual = quasimode_residual(hamiltonian, state, energy, potential)
    if residual == 0.0:
        return math.inf
    return target * state.h / residual
