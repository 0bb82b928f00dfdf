"""Finite Fourier states on the d-torus and the standard state constructors.

A state is a finite map k -> u_hat(k) with u = (2pi)^{-d/2} sum u_hat(k) e^{ik.x},
so the squared L^2 norm is sum |u_hat(k)|^2.  Constructors normalize and
report the raw squared norm they saw before scaling.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, IO, Iterable, Sequence

import numpy as np

from .errors import ParameterError, ScaleError
from .lattice import IntVec, RatVec
from .profiles import RadialCutoff, smoothstep

MAX_PACKET_MODES = 1 << 22


@dataclass
class FourierState:
    h: float
    dim: int
    coefficients: dict[IntVec, complex]
    _arrays: tuple[np.ndarray, np.ndarray] | None = field(default=None, init=False, repr=False, compare=False)

    def norm_squared(self) -> float:
        _, c = self.as_arrays()
        return float(np.sum(np.abs(c) ** 2))

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Modes as (n, dim) int array and (n,) complex array, lexicographically sorted."""
        if self._arrays is None:
            keys = sorted(self.coefficients)
            K = np.array(keys, dtype=np.int64).reshape(len(keys), self.dim)
            C = np.array([self.coefficients[k] for k in keys], dtype=np.complex128)
            self._arrays = (K, C)
        return self._arrays

    def normalized(self) -> tuple["FourierState", float]:
        raw = self.norm_squared()
        if raw == 0.0:
            raise ValueError("cannot normalize the zero state")
        scale = 1.0 / math.sqrt(raw)
        return FourierState(self.h, self.dim, {k: v * scale for k, v in self.coefficients.items()}), raw

    def map_coefficients(self, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "FourierState":
        """New state with coefficients fn(K, C); fn acts on the sorted arrays."""
        K, C = self.as_arrays()
        new = fn(K, C)
        return FourierState(self.h, self.dim, {tuple(int(x) for x in k): complex(v) for k, v in zip(K, new)})


def state_from_arrays(h: float, modes: np.ndarray, values: np.ndarray, dim: int | None = None) -> FourierState:
    dim = int(modes.shape[1]) if dim is None else dim
    return FourierState(h, dim, {tuple(int(x) for x in k): complex(v) for k, v in zip(modes, values)})


# -- serialization: JSON lines, one mode per line, byte-stable ----------------


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def dump_state(state: FourierState, stream: IO[str]) -> None:
    stream.write('{"h":%s,"dim":%d}\n' % (_fmt(state.h), state.dim))
    for k in sorted(state.coefficients):
        v = state.coefficients[k]
        stream.write('{"k":[%s],"re":%s,"im":%s}\n' % (",".join(str(int(x)) for x in k), _fmt(v.real), _fmt(v.imag)))


def load_state(stream: IO[str]) -> FourierState:
    header = json.loads(stream.readline())
    coeffs: dict[IntVec, complex] = {}
    for line in stream:
        if not line.strip():
            continue
        rec = json.loads(line)
        coeffs[tuple(int(x) for x in rec["k"])] = complex(rec["re"], rec["im"])
    return FourierState(float(header["h"]), int(header["dim"]), coeffs)


# -- profiles ------------------------------------------------------------------


@dataclass(frozen=True)
class BumpProfile:
    """Radial frequency profile: quintic bump, 1 inside radius/2, 0 outside radius.

    `amplitude(dim)` rescales so the profile has unit L^2 norm over R^dim,
    which is what drives packet norms to 1 as h -> 0.
    """

    radius: float = 1.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def raw(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        t = 2.0 * (self.radius - r) / self.radius
        return smoothstep(t)

    def amplitude(self, dim: int) -> float:
        return _bump_amplitude(self.radius, dim)

    def __call__(self, r, dim: int):
        return self.amplitude(dim) * self.raw(r)


def _sphere_area(dim: int) -> float:
    return 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)


_AMPLITUDE_CACHE: dict[tuple[float, int], float] = {}


def _bump_amplitude(radius: float, dim: int) -> float:
    key = (radius, dim)
    if key not in _AMPLITUDE_CACHE:
        r = np.linspace(0.0, radius, (1 << 17) + 1)
        t = 2.0 * (radius - r) / radius
        integrand = smoothstep(t) ** 2 * r ** (dim - 1)
        mass = _sphere_area(dim) * float(np.trapezoid(integrand, r))
        _AMPLITUDE_CACHE[key] = math.sqrt((2.0 * math.pi) ** dim / mass)
    return _AMPLITUDE_CACHE[key]


# -- wave packets ---------------------------------------------------------------


@dataclass(frozen=True)
class WavePacketSpec:
    """Packet parameters: center (x0, xi0), width law epsilon(h) = c h^gamma.

    xi0 is rational so resonance arithmetic downstream stays exact.  An
    optional frequency modulation eta0 shifts the center by eta0 / tau(h),
    with tau supplied by `modulation_scale`.
    """

    x0: tuple[float, ...]
    xi0: RatVec
    epsilon_exponent: float
    epsilon_coefficient: float = 1.0
    profile: BumpProfile = BumpProfile()
    eta0: tuple[float, ...] | None = None
    modulation_scale: Callable[[float], float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "xi0", tuple(Fraction(x) for x in self.xi0))
        object.__setattr__(self, "x0", tuple(float(x) for x in self.x0))
        if not 0.0 < self.epsilon_exponent < 1.0:
            raise ValueError("width exponent must lie strictly between 0 and 1")
        if self.epsilon_coefficient <= 0:
            raise ValueError("width coefficient must be positive")
        if len(self.x0) != len(self.xi0):
            raise ValueError("x0 and xi0 dimensions differ")

    @property
    def dim(self) -> int:
        return len(self.x0)

    def epsilon(self, h: float) -> float:
        return self.epsilon_coefficient * h ** self.epsilon_exponent


def _packet(spec: WavePacketSpec, h: float, center_shift: np.ndarray | None) -> tuple[FourierState, float]:
    d = spec.dim
    eps = spec.epsilon(h)
    if eps / h < 2.0:
        raise ScaleError(f"epsilon/h = {eps / h:.3g} < 2: not enough modes per axis to resolve the profile")
    center = np.array([float(x) for x in spec.xi0]) / h
    if center_shift is not None:
        center = center + center_shift
    radius = spec.profile.radius / eps
    count = 1.0
    for _ in range(d):
        count *= 2 * radius + 1
    if count > MAX_PACKET_MODES:
        raise ScaleError(f"packet support would hold ~{count:.3g} modes, over the {MAX_PACKET_MODES} budget")
    axes = [np.arange(math.ceil(center[i] - radius), math.floor(center[i] + radius) + 1, dtype=np.int64) for i in range(d)]
    grids = np.meshgrid(*axes, indexing="ij")
    K = np.stack([g.ravel() for g in grids], axis=-1)
    rel = eps * (K - center)
    rad = np.sqrt(np.sum(rel * rel, axis=-1))
    inside = rad < spec.profile.radius
    K = K[inside]
    rad = rad[inside]
    amp = (eps ** (d / 2.0) / (2.0 * math.pi) ** (d / 2.0)) * spec.profile(rad, d)
    phase = np.exp(-1j * ((K - center) @ np.array(spec.x0)))
    values = amp * phase
    state = state_from_arrays(h, K, values, d)
    state, raw = state.normalized()
    return state, raw


def wave_packet(spec: WavePacketSpec, h: float) -> tuple[FourierState, float]:
    """Normalized packet at scale epsilon(h); returns (state, raw squared norm)."""
    return _packet(spec, h, None)


def modulated_wave_packet(spec: WavePacketSpec, h: float) -> tuple[FourierState, float]:
    """Packet with frequency center xi0 + eta0 / tau(h)."""
    if spec.eta0 is None or spec.modulation_scale is None:
        raise ValueError("spec carries no modulation data")
    tau = float(spec.modulation_scale(h))
    shift = np.array([float(x) for x in spec.eta0]) / (tau * h)
    return _packet(spec, h, shift)


def spectral_superposition(states: Sequence[FourierState], weights: Sequence[complex] | None = None) -> tuple[FourierState, float]:
    """Normalized weighted sum of states sharing one h."""
    if not states:
        raise ValueError("need at least one state")
    h, d = states[0].h, states[0].dim
    if any(s.h != h or s.dim != d for s in states):
        raise ValueError("states disagree on h or dimension")
    if weights is None:
        weights = [1.0] * len(states)
    if len(weights) != len(states):
        raise ValueError("one weight per state required")
    total: dict[IntVec, complex] = {}
    for w, s in zip(weights, states):
        for k, v in s.coefficients.items():
            total[k] = total.get(k, 0.0) + complex(w) * v
    return FourierState(h, d, total).normalized()


def translate_state(state: FourierState, delta: Sequence[float]) -> FourierState:
    """u(. - delta): multiplies each coefficient by e^{-i k . delta}."""
    dvec = np.array([float(x) for x in delta])
    return state.map_coefficients(lambda K, C: C * np.exp(-1j * (K @ dvec)))


def oscillation_tail(state: FourierState, radius: float) -> float:
    """Mass carried by modes with |h k|^2 > radius."""
    K, C = state.as_arrays()
    energy = np.sum((state.h * K.astype(float)) ** 2, axis=-1)
    return float(np.sum(np.abs(C[energy > radius]) ** 2))


def synthesize_grid(state: FourierState, points_per_axis: int) -> np.ndarray:
    """Values of u on the uniform grid of [0, 2pi)^d; modes must fit without collision."""
    n = points_per_axis
    K, C = state.as_arrays()
    spectrum = np.zeros((n,) * state.dim, dtype=np.complex128)
    placed: set[tuple[int, ...]] = set()
    for k, c in zip(K, C):
        slot = tuple(int(x) % n for x in k)
        if slot in placed:
            raise ValueError(f"grid of {n} points per axis aliases mode {tuple(int(x) for x in k)}")
        placed.add(slot)
        spectrum[slot] = c
    # u(x_l) = (2pi)^{-d/2} sum u_hat(k) e^{ik.x_l}: inverse FFT times n^d
    return np.fft.ifftn(spectrum) * (n ** state.dim) / (2.0 * math.pi) ** (state.dim / 2.0)


# -- localized quasimode for the weakly bound direction ------------------------


@dataclass(frozen=True)
class AxisPotential:
    """Multiplication by a 1-d potential in one coordinate, given by its modes."""

    axis: int
    modes: tuple[tuple[int, complex], ...]
    strength: float
    truncated_mass: float = 0.0

    def mode_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        m = np.array([q for q, _ in self.modes], dtype=np.int64)
        v = np.array([v for _, v in self.modes], dtype=np.complex128)
        return m, v


@dataclass(frozen=True)
class WunschQuasimode:
    state: FourierState
    energy: float
    potential: AxisPotential
    exponent: float
    second_moment: float
    dropped_mass: float


def wunsch_quasimode(h: float, exponent: float, plateau: float = math.pi / 2,
                     support: float = math.pi, grid: int = 4096) -> WunschQuasimode:
    """Single transverse Gaussian of width h^{exponent/2} riding the first axis.

    The state oscillates as e^{i x_1 / h} (so 1/h must be an integer), is cut
    off smoothly in x_2, and comes paired with the potential x_2^2 (windowed
    the same way, scaled by h^{2-2 exponent}) and the energy 1 + h^{2-exponent}.
    """
    if h <= 0:
        raise ParameterError("h must be positive")
    big_n = 1.0 / h
    if not float(big_n).is_integer():
        raise ParameterError(f"1/h = {big_n!r} is not an integer")
    if not 0.0 < exponent < 1.0:
        raise ParameterError("exponent must lie strictly between 0 and 1")
    if not 0.0 < plateau < support <= math.pi:
        raise ParameterError("need 0 < plateau < support <= pi")
    big_n = int(big_n)
    m = int(grid)
    x = -math.pi + 2.0 * math.pi * np.arange(m) / m
    window = RadialCutoff(plateau=plateau, support=support)
    gauss = np.exp(-x * x / (2.0 * h ** exponent))
    profile = gauss * window(x)
    weight = profile * profile
    second_moment = float(np.sum(x * x * weight) / np.sum(weight))
    # series coefficients on x in [-pi, pi): f_hat_m = (-1)^m FFT(f)_m / M
    prof_modes = np.fft.fft(profile) / m
    freqs = np.fft.fftfreq(m, d=1.0 / m).astype(np.int64)
    prof_modes = prof_modes * np.where(freqs % 2 == 0, 1.0, -1.0)
    mags = np.abs(prof_modes)
    keep = mags > 1e-18 * float(np.max(mags))
    dropped = float(np.sum(mags[~keep] ** 2) / np.sum(mags ** 2))
    coeffs = {(big_n, int(q)): complex(v) for q, v, good in zip(freqs, prof_modes, keep) if good}
    state, _ = FourierState(h, 2, coeffs).normalized()

    pot_grid = x * x * window(x)
    pot_modes = np.fft.fft(pot_grid) / m
    pot_modes = pot_modes * np.where(freqs % 2 == 0, 1.0, -1.0)
    pmags = np.abs(pot_modes)
    pkeep = pmags > 1e-16 * float(np.max(pmags))
    ptrunc = float(np.sum(pmags[~pkeep] ** 2))
    order = np.argsort(freqs[pkeep], kind="stable")
    pairs = tuple((int(q), complex(v)) for q, v in zip(freqs[pkeep][order], pot_modes[pkeep][order]))
    potential = AxisPotential(axis=1, modes=pairs, strength=h ** (2.0 - 2.0 * exponent), truncated_mass=ptrunc)
    energy = 1.0 + h ** (2.0 - exponent)
    return WunschQuasimode(state, energy, potential, exponent, second_moment, dropped)
