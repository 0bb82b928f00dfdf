"""Wigner pairings, position densities, and exact time-averaged densities.

The time average is evaluated in closed form: every mode pair (j, j+m)
contributes its coefficient product times the window transform Phi at the
Bohr frequency tau (H(h(j+m)) - H(hj)) / h.  No time quadrature happens
anywhere in this module.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, IO, Iterable, Sequence

import numpy as np

from .errors import SclError
from .hamiltonians import Hamiltonian
from .lattice import IntVec, PrimitiveModule
from .propagator import evolve
from .states import FourierState

TWO_PI = 2.0 * math.pi


# -- symbols --------------------------------------------------------------------


@dataclass(frozen=True)
class Symbol:
    """Finitely many x-modes k, each with a frequency profile a_hat_k(xi).

    The function is a(x, xi) = (2pi)^{-d/2} sum_k a_hat_k(xi) e^{ik.x}; a
    component is either a complex constant or a vectorized callable on
    points of shape (..., d).  `support_radius`, when set, promises the
    profiles vanish for |xi| beyond it.
    """

    dim: int
    components: tuple[tuple[IntVec, object], ...]
    support_radius: float | None = None
    hermitian: bool = False

    @staticmethod
    def from_dict(dim: int, components: dict, support_radius: float | None = None,
                  hermitian: bool = False) -> "Symbol":
        items = tuple(sorted(((tuple(int(x) for x in k), v) for k, v in components.items()),
                             key=lambda kv: kv[0]))
        for k, _ in items:
            if len(k) != dim:
                raise ValueError(f"mode {k} does not have dimension {dim}")
        return Symbol(dim, items, support_radius, hermitian)

    def modes(self) -> list[IntVec]:
        return [k for k, _ in self.components]

    def component_values(self, k: IntVec, points: np.ndarray) -> np.ndarray:
        for mode, v in self.components:
            if mode == k:
                if callable(v):
                    return np.asarray(v(points), dtype=np.complex128)
                return np.full(points.shape[:-1], complex(v), dtype=np.complex128)
        return np.zeros(points.shape[:-1], dtype=np.complex128)

    def map_components(self, wrap: Callable[[IntVec, object], object]) -> "Symbol":
        return Symbol(self.dim, tuple((k, wrap(k, v)) for k, v in self.components),
                      self.support_radius, self.hermitian)


def constant_symbol(dim: int, components: dict, hermitian: bool = False) -> Symbol:
    return Symbol.from_dict(dim, {k: complex(v) for k, v in components.items()}, hermitian=hermitian)


def averaged_symbol(symbol: Symbol, module: PrimitiveModule) -> Symbol:
    """Keep only the x-modes lying in the module (the resonant average)."""
    kept = tuple((k, v) for k, v in symbol.components if module.contains(k))
    return Symbol(symbol.dim, kept, symbol.support_radius, symbol.hermitian)


# -- time windows -----------------------------------------------------------------


@dataclass(frozen=True)
class TimeWindow:
    """Normalized averaging window on [a, b]: flat ("indicator") or tent ("hat")."""

    kind: str = "indicator"
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if self.kind not in ("indicator", "hat"):
            raise ValueError("window kind must be 'indicator' or 'hat'")
        if not self.b > self.a:
            raise ValueError("window needs a < b")

    def phi(self, omega) -> np.ndarray:
        """Transform int w(t) e^{-i omega t} dt, exactly; phi(0) = 1."""
        omega = np.asarray(omega, dtype=float)
        width = self.b - self.a
        center = 0.5 * (self.a + self.b)
        carrier = np.exp(-1j * omega * center)
        if self.kind == "indicator":
            return carrier * np.sinc(omega * width / (2.0 * math.pi))
        return carrier * np.sinc(omega * width / (4.0 * math.pi)) ** 2

    def sample(self, t) -> np.ndarray:
        """The window itself, for quadrature cross-checks."""
        t = np.asarray(t, dtype=float)
        width = self.b - self.a
        if self.kind == "indicator":
            return np.where((t >= self.a) & (t <= self.b), 1.0 / width, 0.0)
        peak = 0.5 * (self.a + self.b)
        tent = np.maximum(0.0, 1.0 - np.abs(t - peak) / (0.5 * width))
        return tent * 2.0 / width


# -- mode-pair machinery ------------------------------------------------------------

DENSE_BOX_LIMIT = 1 << 22


class _PairEngine:
    """Enumerates coefficient pairs (j, j+m) for a state, one shift m at a time.

    Small bounding boxes get a dense embedding with slice arithmetic; sparse
    states with huge spreads fall back to hash lookups per mode.
    """

    def __init__(self, state: FourierState):
        self.h = state.h
        self.dim = state.dim
        K, C = state.as_arrays()
        if len(K) == 0:
            raise ValueError("empty state")
        self.K = K
        self.C = C
        mins = K.min(axis=0)
        shape = tuple(int(x) for x in (K.max(axis=0) - mins + 1))
        cells = 1
        for s in shape:
            cells *= s
        self.dense = cells <= DENSE_BOX_LIMIT
        if self.dense:
            self.mins = mins
            self.shape = shape
            self.values = np.zeros(shape, dtype=np.complex128)
            self.values[tuple((K - mins).T)] = C
            axes = [np.arange(mins[i], mins[i] + shape[i], dtype=np.int64) for i in range(self.dim)]
            grids = np.meshgrid(*axes, indexing="ij")
            self.grid = np.stack(grids, axis=-1).astype(float)
        else:
            self.index = {tuple(int(x) for x in k): i for i, k in enumerate(K)}

    def pairs(self, m: Sequence[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray] | None:
        """(v_src, v_dst, k_src float array) over pairs dst = src + m, or None."""
        m = tuple(int(x) for x in m)
        if self.dense:
            src, dst = [], []
            for i, mi in enumerate(m):
                n = self.shape[i]
                if abs(mi) >= n:
                    return None
                src.append(slice(max(0, -mi), n - max(0, mi)))
                dst.append(slice(max(0, mi), n - max(0, -mi)))
            src, dst = tuple(src), tuple(dst)
            return (self.values[src].ravel(), self.values[dst].ravel(),
                    self.grid[src].reshape(-1, self.dim))
        src_idx, dst_idx = [], []
        for i, k in enumerate(self.K):
            j = self.index.get(tuple(int(x) + mm for x, mm in zip(k, m)))
            if j is not None:
                src_idx.append(i)
                dst_idx.append(j)
        if not src_idx:
            return None
        src_idx = np.array(src_idx, dtype=np.int64)
        dst_idx = np.array(dst_idx, dtype=np.int64)
        return self.C[src_idx], self.C[dst_idx], self.K[src_idx].astype(float)


def _box_modes(radius_per_axis: Sequence[int]) -> list[IntVec]:
    axes = [np.arange(-r, r + 1, dtype=np.int64) for r in radius_per_axis]
    grids = np.meshgrid(*axes, indexing="ij")
    K = np.stack([g.ravel() for g in grids], axis=-1)
    return [tuple(int(x) for x in row) for row in K]


# -- pairings -------------------------------------------------------------------------


def weyl_pair(state: FourierState, symbol: Symbol) -> complex:
    """(2pi)^{-d/2} sum over pairs u_hat(k) conj(u_hat(j)) a_hat_{j-k}(h (k+j)/2)."""
    if symbol.dim != state.dim:
        raise ValueError("symbol and state dimensions differ")
    engine = _PairEngine(state)
    total = 0.0 + 0.0j
    for m, value in symbol.components:
        got = engine.pairs(m)
        if got is None:
            continue
        v_src, v_dst, k_src = got
        mid = engine.h * (k_src + 0.5 * np.array(m, dtype=float))
        if callable(value):
            a_vals = np.asarray(value(mid), dtype=np.complex128)
        else:
            a_vals = complex(value)
        total += np.sum(v_src * np.conj(v_dst) * a_vals)
    return complex(total / TWO_PI ** (state.dim / 2.0))


def egorov_defect(hamiltonian: Hamiltonian, state: FourierState, symbol: Symbol,
                  s: float, t: float, tau: float) -> float:
    """|<W(u(tau t)), a o phi_s - a>| with the transport phase e^{i s k . dH(xi)}."""

    def transported_minus_id(k: IntVec, value):
        kvec = np.array(k, dtype=float)

        def evaluator(points: np.ndarray) -> np.ndarray:
            base = (np.asarray(value(points), dtype=np.complex128) if callable(value)
                    else np.full(points.shape[:-1], complex(value), dtype=np.complex128))
            phase = np.exp(1j * s * (hamiltonian.gradient(points) @ kvec))
            return base * (phase - 1.0)

        return evaluator

    moved = evolve(hamiltonian, state, tau * t)
    return abs(weyl_pair(moved, symbol.map_components(transported_minus_id)))


# -- densities ---------------------------------------------------------------------


@dataclass(frozen=True)
class DensityReport:
    """Fourier data of a position density, optionally sampled on a dyadic grid."""

    dim: int
    modes: tuple[tuple[IntVec, complex], ...]
    grid_points: int | None = None
    grid: np.ndarray | None = field(default=None, compare=False)
    sup_norm: float | None = None
    l2_norm: float | None = None

    def mode_map(self) -> dict[IntVec, complex]:
        return dict(self.modes)

    def coefficient(self, m: Sequence[int]) -> complex:
        key = tuple(int(x) for x in m)
        for k, v in self.modes:
            if k == key:
                return v
        return 0.0 + 0.0j

    def mass(self) -> float:
        return float(self.coefficient((0,) * self.dim).real * TWO_PI ** self.dim)

    def l2_from_modes(self) -> float:
        return math.sqrt(TWO_PI ** self.dim * sum(abs(v) ** 2 for _, v in self.modes))

    def to_csv(self, stream: IO[str]) -> None:
        stream.write(",".join(f"m_{i + 1}" for i in range(self.dim)) + ",re,im\n")
        for k, v in self.modes:
            stream.write(",".join(str(int(x)) for x in k) + f",{v.real:.17g},{v.imag:.17g}\n")

    def grid_to_csv(self, stream: IO[str]) -> None:
        if self.grid is None:
            raise ValueError("report carries no grid")
        n = self.grid_points
        stream.write(",".join(f"x_{i + 1}" for i in range(self.dim)) + ",value\n")
        for idx in np.ndindex(*self.grid.shape):
            coords = ",".join(f"{TWO_PI * i / n:.17g}" for i in idx)
            stream.write(coords + f",{self.grid[idx]:.17g}\n")


def _build_report(dim: int, modes: dict[IntVec, complex], grid_points: int | None) -> DensityReport:
    # densities are real, so -m carries the conjugate; fill gaps, then verify
    for m in list(modes):
        neg = tuple(-x for x in m)
        if neg not in modes:
            modes[neg] = complex(np.conj(modes[m]))
    for m, v in modes.items():
        neg = tuple(-x for x in m)
        if abs(np.conj(modes[neg]) - v) > 1e-12:
            raise SclError(f"density mode {m} breaks the reality symmetry")
    zero = modes.get((0,) * dim, 0.0)
    if abs(complex(zero).imag) > 1e-12:
        raise SclError("density zero mode must be real")
    items = tuple(sorted(modes.items()))
    if grid_points is None:
        return DensityReport(dim, items)
    n = int(grid_points)
    max_mode = max((max(abs(x) for x in m) for m, _ in items), default=0)
    if n < 2 * max_mode + 1:
        raise ValueError(f"{n} points per axis alias modes up to {max_mode}")
    spectrum = np.zeros((n,) * dim, dtype=np.complex128)
    for m, v in items:
        spectrum[tuple(int(x) % n for x in m)] = v
    values = np.fft.ifftn(spectrum) * n ** dim
    if float(np.max(np.abs(values.imag))) > 1e-10 * max(1.0, float(np.max(np.abs(values.real)))):
        raise SclError("synthesized density has a non-negligible imaginary part")
    grid = values.real
    l2 = math.sqrt(float(np.sum(grid ** 2)) * (TWO_PI / n) ** dim)
    return DensityReport(dim, items, n, grid, float(np.max(np.abs(grid))), l2)


def _correlate(state: FourierState, mode_list: Iterable[IntVec],
               weight: Callable[[np.ndarray, np.ndarray], np.ndarray] | None) -> dict[IntVec, complex]:
    """c_m = (2pi)^{-d} sum_j u_hat(j+m) conj(u_hat(j)), optionally weighted.

    The weight callable receives (k_src float array, m) and multiplies the
    coefficient products.
    """
    engine = _PairEngine(state)
    out: dict[IntVec, complex] = {}
    scale = 1.0 / TWO_PI ** state.dim
    for m in mode_list:
        m = tuple(int(x) for x in m)
        got = engine.pairs(m)
        if got is None:
            out[m] = 0.0 + 0.0j
            continue
        v_src, v_dst, k_src = got
        prod = v_dst * np.conj(v_src)
        if weight is not None:
            prod = prod * weight(k_src, np.array(m, dtype=float))
        out[m] = complex(np.sum(prod) * scale)
    return out


def density_modes(state: FourierState, max_mode: int | None = None,
                  modes: Sequence[IntVec] | None = None,
                  grid_points: int | None = None) -> DensityReport:
    """Instantaneous density modes c_m = (2pi)^{-d} sum_j u_hat(j+m) conj(u_hat(j))."""
    if modes is None:
        if max_mode is None:
            raise ValueError("give max_mode or an explicit mode list")
        modes = _box_modes([max_mode] * state.dim)
    return _build_report(state.dim, _correlate(state, modes, None), grid_points)


def time_averaged_density(hamiltonian: Hamiltonian, state: FourierState, window: TimeWindow,
                          tau: float, max_mode: int | None = None,
                          modes: Sequence[IntVec] | None = None,
                          grid_points: int | None = None) -> DensityReport:
    """Density of the window-averaged evolution at time scale tau, in closed form.

    Each pair picks up Phi(tau (H(h(j+m)) - H(h j)) / h); the zero mode is
    untouched, so mass is conserved exactly.
    """
    if modes is None:
        if max_mode is None:
            raise ValueError("give max_mode or an explicit mode list")
        modes = _box_modes([max_mode] * state.dim)
    h = state.h

    def weight(k_src: np.ndarray, m: np.ndarray) -> np.ndarray:
        omega = tau * (hamiltonian.value(h * (k_src + m)) - hamiltonian.value(h * k_src)) / h
        return window.phi(omega)

    return _build_report(state.dim, _correlate(state, modes, weight), grid_points)


def full_mode_box(state: FourierState) -> list[IntVec]:
    """Every m that can pair two support modes: the box of support diameters."""
    K, _ = state.as_arrays()
    spread = K.max(axis=0) - K.min(axis=0)
    return _box_modes([int(x) for x in spread])
