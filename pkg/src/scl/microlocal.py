"""Second-microlocal functionals at finite h: concentration scales along a module.

A two-scale symbol sees the frequency through the pair (xi, eta): the point
near the critical manifold and the rescaled offset along the module span.
Pairings evaluate the symbol at mode-pair midpoints xi_bar with offset
tau * eta(xi_bar), where (sigma, eta) is the frame splitting.  The fiber
transform regroups a state into sigma-fibers carrying exact integer module
modes, which is what makes the conjugated (reduced) evolution computable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FlowDomainError, IntegralityError, ParameterError
from .hamiltonians import TwoMicrolocalFrame
from .lattice import IntVec, PrimitiveModule, fractional_part, hnf_with_transform
from .profiles import RadialCutoff
from .propagator import evolve
from .states import FourierState
from .wigner import Symbol, _PairEngine

CutoffProfile = RadialCutoff

TWO_PI = 2.0 * math.pi

PAIR_PARTS = ("full", "concentrating", "spreading", "far")


# -- symbols on the two-scale phase space ---------------------------------------


@dataclass(frozen=True)
class TwoMicrolocalSymbol:
    """x-modes k in the module, each with an evaluator a_hat_k(xi, eta).

    Evaluators take (xi (..., d), eta (..., d)) and return (...,) complex
    values; plain constants are allowed.  Beyond |eta| = radius the symbol
    must agree with its homogeneous form evaluated at (xi, eta/|eta|);
    pieces that die for large |eta| carry an empty homogeneous part.
    """

    lattice: PrimitiveModule
    components: tuple[tuple[IntVec, object], ...]
    hom_components: tuple[tuple[IntVec, object], ...]
    radius: float

    def modes(self) -> list[IntVec]:
        return [k for k, _ in self.components]

    def component_values(self, k: IntVec, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
        for mode, v in self.components:
            if mode == k:
                return _eval2(v, xi, eta)
        return np.zeros(xi.shape[:-1], dtype=np.complex128)

    def hom_values(self, k: IntVec, xi: np.ndarray, omega: np.ndarray) -> np.ndarray:
        for mode, v in self.hom_components:
            if mode == k:
                return _eval2(v, xi, omega)
        return np.zeros(xi.shape[:-1], dtype=np.complex128)


def _eval2(v, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
    if callable(v):
        return np.asarray(v(xi, eta), dtype=np.complex128)
    return np.full(xi.shape[:-1], complex(v), dtype=np.complex128)


def two_microlocal_symbol(lattice: PrimitiveModule, components: dict,
                          hom_components: dict | None = None,
                          radius: float = 1.0) -> TwoMicrolocalSymbol:
    items = []
    for k, v in components.items():
        k = tuple(int(x) for x in k)
        if not lattice.contains(k):
            raise ParameterError(f"x-mode {k} lies outside the module")
        items.append((k, v))
    hom_items = []
    if hom_components is not None:
        for k, v in hom_components.items():
            k = tuple(int(x) for x in k)
            if not lattice.contains(k):
                raise ParameterError(f"x-mode {k} lies outside the module")
            hom_items.append((k, v))
    return TwoMicrolocalSymbol(lattice, tuple(sorted(items, key=lambda kv: kv[0])),
                               tuple(sorted(hom_items, key=lambda kv: kv[0])), float(radius))


def lift_symbol(symbol: Symbol, lattice: PrimitiveModule, radius: float = 1.0) -> TwoMicrolocalSymbol:
    """View an eta-independent symbol as a two-scale one (its own homogeneous form)."""

    def freeze(v):
        if callable(v):
            return lambda xi, eta, fn=v: np.asarray(fn(xi), dtype=np.complex128)
        return v

    comp = {k: freeze(v) for k, v in symbol.components}
    hom = {k: freeze(v) for k, v in symbol.components}
    return two_microlocal_symbol(lattice, comp, hom, radius)


def constant_tm_symbol(lattice: PrimitiveModule, dim: int) -> TwoMicrolocalSymbol:
    """The symbol a = 1: single zero mode with the flat-average coefficient."""
    zero = tuple(0 for _ in range(dim))
    value = TWO_PI ** (dim / 2.0)
    return two_microlocal_symbol(lattice, {zero: value}, {zero: value}, radius=1.0)


def homogeneity_defect(symbol: TwoMicrolocalSymbol, xi: np.ndarray, eta: np.ndarray) -> float:
    """max |a_hat_k(xi, eta) - a_hat_k^hom(xi, eta/|eta|)| over points with |eta| > radius."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    norm = np.sqrt(np.sum(eta ** 2, axis=-1))
    outside = norm > symbol.radius
    if not np.any(outside):
        return 0.0
    xi, eta, norm = xi[outside], eta[outside], norm[outside]
    omega = eta / norm[..., None]
    worst = 0.0
    for k in symbol.modes():
        d = np.abs(symbol.component_values(k, xi, eta) - symbol.hom_values(k, xi, omega))
        worst = max(worst, float(np.max(d)) if d.size else 0.0)
    return worst


# -- the three-way cutoff split ---------------------------------------------------


def split_symbol(symbol: TwoMicrolocalSymbol, frame: TwoMicrolocalFrame, R: float,
                 delta: float, chi: RadialCutoff | None = None
                 ) -> tuple[TwoMicrolocalSymbol, TwoMicrolocalSymbol, TwoMicrolocalSymbol]:
    """(far, spreading, concentrating) pieces; they sum to the input pointwise.

    concentrating = a chi(eta/R); the remainder is divided by whether the
    unscaled frame offset eta(xi) of the evaluation point clears delta.
    """
    if chi is None:
        chi = RadialCutoff()
    if not R > 1:
        raise ParameterError("split radius R must exceed 1")
    if not 0 < delta < 1:
        raise ParameterError("delta must lie in (0, 1)")

    def offset_norm(xi: np.ndarray) -> np.ndarray:
        flat = xi.reshape(-1, xi.shape[-1])
        _, eta_unscaled, _ = frame.split_many(flat)
        return np.sqrt(np.sum(eta_unscaled ** 2, axis=-1)).reshape(xi.shape[:-1])

    def eta_norm(eta: np.ndarray) -> np.ndarray:
        return np.sqrt(np.sum(eta ** 2, axis=-1))

    def concentrating_eval(v):
        def f(xi, eta, v=v):
            return _eval2(v, xi, eta) * chi(eta_norm(eta) / R)
        return f

    def spreading_eval(v):
        def f(xi, eta, v=v):
            cut = 1.0 - chi(eta_norm(eta) / R)
            return _eval2(v, xi, eta) * cut * chi(offset_norm(xi) / delta)
        return f

    def far_eval(v):
        def f(xi, eta, v=v):
            cut = 1.0 - chi(eta_norm(eta) / R)
            return _eval2(v, xi, eta) * cut * (1.0 - chi(offset_norm(xi) / delta))
        return f

    def spreading_hom(v):
        def f(xi, omega, v=v):
            return _eval2(v, xi, omega) * chi(offset_norm(xi) / delta)
        return f

    def far_hom(v):
        def f(xi, omega, v=v):
            return _eval2(v, xi, omega) * (1.0 - chi(offset_norm(xi) / delta))
        return f

    lattice = symbol.lattice
    comp = dict(symbol.components)
    hom = dict(symbol.hom_components)
    radius = max(symbol.radius, R * chi.support)
    concentrating = TwoMicrolocalSymbol(
        lattice, tuple(sorted((k, concentrating_eval(v)) for k, v in comp.items())), (), radius)
    spreading = TwoMicrolocalSymbol(
        lattice, tuple(sorted((k, spreading_eval(v)) for k, v in comp.items())),
        tuple(sorted((k, spreading_hom(v)) for k, v in hom.items())), radius)
    far = TwoMicrolocalSymbol(
        lattice, tuple(sorted((k, far_eval(v)) for k, v in comp.items())),
        tuple(sorted((k, far_hom(v)) for k, v in hom.items())), radius)
    return far, spreading, concentrating


# -- pairing ------------------------------------------------------------------------


def two_scale_pair(state: FourierState, symbol: TwoMicrolocalSymbol,
                   frame: TwoMicrolocalFrame, tau: float, t: float = 0.0,
                   part: str = "full", R: float | None = None,
                   delta: float | None = None, chi: RadialCutoff | None = None) -> complex:
    """Two-scale Weyl pairing of the state evolved to time tau*t.

    (2pi)^{-d/2} sum over pairs of u_hat(k) conj(u_hat(j)) a_hat_{j-k} at
    (xi_bar, tau eta(xi_bar)), xi_bar = h(k+j)/2.  `part` selects a cutoff
    piece of the symbol; midpoints outside the frame half-window raise
    DomainError.
    """
    if part not in PAIR_PARTS:
        raise ParameterError(f"unknown pairing part {part!r}")
    if part != "full":
        if R is None:
            raise ParameterError("cutoff parts need the radius R")
        if part == "concentrating":
            # only the eta-cutoff matters for a3; delta enters a1/a2
            far, spreading, concentrating = split_symbol(symbol, frame, R, delta or 0.5, chi)
            symbol = concentrating
        else:
            if delta is None:
                raise ParameterError("spreading/far parts need delta")
            far, spreading, _ = split_symbol(symbol, frame, R, delta, chi)
            symbol = spreading if part == "spreading" else far
    if t != 0.0:
        state = evolve(frame.hamiltonian, state, tau * t)
    engine = _PairEngine(state)
    h = state.h
    total = 0.0 + 0.0j
    for m in symbol.modes():
        got = engine.pairs(m)
        if got is None:
            continue
        v_src, v_dst, k_src = got
        mid = h * (k_src + 0.5 * np.array(m, dtype=float))
        _, eta_mid, _ = frame.split_many(mid)
        vals = symbol.component_values(m, mid, tau * eta_mid)
        total += np.sum(v_src * np.conj(v_dst) * vals)
    return complex(total / TWO_PI ** (state.dim / 2.0))


# -- flows on two-scale symbols -------------------------------------------------------

FLOW_KINDS = ("gradient", "hessian_unit", "hessian")


def symbol_flow(symbol: TwoMicrolocalSymbol, frame: TwoMicrolocalFrame,
                kind: str, s: float) -> TwoMicrolocalSymbol:
    """Multiply each component by the transport phase of the named flow.

    gradient:      e^{i s k . dH(xi)}                 (position transport)
    hessian_unit:  e^{i s k . d2H(sigma) eta/|eta|}   (unit-speed concentration)
    hessian:       e^{i s k . d2H(sigma) eta}         (linearized concentration)

    hessian_unit refuses eta = 0 wherever the symbol is alive, and the
    hessian flow has no homogeneous form; both raise FlowDomainError when
    evaluated there.
    """
    if kind not in FLOW_KINDS:
        raise ParameterError(f"unknown flow kind {kind!r}")
    H = frame.hamiltonian

    def sigma_of(xi: np.ndarray) -> np.ndarray:
        flat = xi.reshape(-1, xi.shape[-1])
        sig, _, _ = frame.split_many(flat)
        return sig.reshape(xi.shape)

    def wrap(k: IntVec, v, hom: bool):
        kvec = np.array(k, dtype=float)

        def f(xi, eta, v=v, kvec=kvec, hom=hom):
            vals = _eval2(v, xi, eta)
            if kind == "gradient":
                return vals * np.exp(1j * s * (H.gradient(xi) @ kvec))
            hk = np.einsum("...ij,j->...i", H.hessian(sigma_of(xi)), kvec)
            if kind == "hessian_unit":
                if hom:
                    # eta is already a unit direction on the homogeneous side
                    return vals * np.exp(1j * s * np.sum(hk * eta, axis=-1))
                norm = np.sqrt(np.sum(eta ** 2, axis=-1))
                dead = norm == 0.0
                if np.any(dead & (np.abs(vals) > 0)):
                    raise FlowDomainError("unit-speed flow evaluated at eta = 0 where the symbol is alive")
                safe = np.where(dead, 1.0, norm)
                return vals * np.exp(1j * s * np.sum(hk * eta, axis=-1) / safe)
            if hom:
                if np.any(np.abs(vals) > 0):
                    raise FlowDomainError("linearized flow has no homogeneous form; symbol must vanish at infinity")
                return vals
            return vals * np.exp(1j * s * np.sum(hk * eta, axis=-1))

        return f

    comp = tuple((k, wrap(k, v, hom=False)) for k, v in symbol.components)
    hom = tuple((k, wrap(k, v, hom=True)) for k, v in symbol.hom_components)
    return TwoMicrolocalSymbol(symbol.lattice, comp, hom, symbol.radius)


def propagation_defect(state: FourierState, symbol: TwoMicrolocalSymbol,
                       frame: TwoMicrolocalFrame, tau: float, t: float, R: float,
                       chi: RadialCutoff | None = None) -> float:
    """|concentrating pair at time t of a  -  concentrating pair at 0 of the moved a|.

    The symbol is moved by the linearized concentration flow for time t.
    Exactly zero (to rounding) when the Hamiltonian is quadratic; order 1/tau
    otherwise.
    """
    direct = two_scale_pair(state, symbol, frame, tau, t=t, part="concentrating", R=R, chi=chi)
    moved = symbol_flow(symbol, frame, "hessian", t)
    transported = two_scale_pair(state, moved, frame, tau, t=0.0, part="concentrating", R=R, chi=chi)
    return abs(direct - transported)


# -- fiber transform -----------------------------------------------------------------


def module_projector(lattice: PrimitiveModule) -> np.ndarray:
    """Integer matrix alpha (rank x dim) with alpha . basis_row_i = e_i.

    alpha is a left inverse of the transposed basis, so B^T(alpha v)
    recovers any v in the real span; it exists because the basis rows are
    primitive.
    """
    B = lattice.basis
    r, d = lattice.rank, lattice.dim
    transpose = [[row[i] for row in B] for i in range(d)]
    Hn, U, _ = hnf_with_transform(transpose, r)
    ok = len(Hn) == r and all(
        Hn[i][i] == 1 and all(Hn[i][j] == 0 for j in range(r) if j != i) for i in range(r))
    if not ok:
        raise ParameterError("module basis is not primitive")
    alpha = np.array(U[:r], dtype=np.int64)
    check = alpha @ np.array(B, dtype=np.int64).T
    if not np.array_equal(check, np.eye(r, dtype=np.int64)):
        raise AssertionError("projector construction failed")
    return alpha


@dataclass(frozen=True)
class Fiber:
    """One sigma-fiber: shared base point, exact module modes, coefficients."""

    sigma: tuple[float, ...]
    residue: IntVec
    modes: tuple[tuple[IntVec, complex], ...]

    def mass(self) -> float:
        return float(sum(abs(v) ** 2 for _, v in self.modes))


@dataclass(frozen=True)
class UhFamily:
    frame: TwoMicrolocalFrame
    h: float
    fibers: tuple[Fiber, ...]
    integrality_deviation: float

    def total_mass(self) -> float:
        return float(sum(f.mass() for f in self.fibers))


def uh_transform(state: FourierState, frame: TwoMicrolocalFrame) -> UhFamily:
    """Regroup window modes into sigma-fibers with exact integer module modes.

    Covers the half-window |hk - xi0| < epsilon/2 where the splitting is
    defined (the window factor is 1 there and is still applied).  Two modes
    share a fiber exactly when they differ by a module vector; the output
    mode of k is its projected lift minus the integer part of the fiber
    shift, an exact integer vector in the module.
    """
    K, C = state.as_arrays()
    h = state.h
    lattice = frame.lattice
    center = frame.xi0_array()
    dist = np.sqrt(np.sum((h * K.astype(float) - center) ** 2, axis=-1))
    inside = dist < frame.epsilon / 2.0
    K, C = K[inside], C[inside]
    if len(K) == 0:
        return UhFamily(frame, h, (), 0.0)
    weights = frame.window(h * K.astype(float))
    sigma, eta, _ = frame.split_many(h * K.astype(float))
    alpha = module_projector(lattice)
    Bmat = np.array(lattice.basis, dtype=np.int64)
    coords = K @ alpha.T
    lifted = coords @ Bmat
    residues = K - lifted
    buckets: dict[IntVec, list[int]] = {}
    for i, r in enumerate(residues):
        buckets.setdefault(tuple(int(x) for x in r), []).append(i)
    fibers = []
    worst = 0.0
    for residue in sorted(buckets):
        idxs = buckets[residue]
        rep = min(idxs, key=lambda i: tuple(int(x) for x in K[i]))
        sig = sigma[rep]
        spread = float(np.max(np.abs(sigma[idxs] - sig))) if len(idxs) > 1 else 0.0
        if spread > 1e-9:
            raise IntegralityError(f"fiber base points disagree by {spread:.3e}")
        shift = Bmat.T.astype(float) @ (alpha @ sig) / h
        frac, int_part = fractional_part(shift, lattice)
        entries: dict[IntVec, complex] = {}
        for i in idxs:
            out_mode = tuple(int(a - b) for a, b in zip(lifted[i], int_part))
            float_mode = eta[i] / h + np.array(frac)
            dev = float(np.max(np.abs(float_mode - np.array(out_mode, dtype=float))))
            worst = max(worst, dev)
            if dev > 1e-6:
                raise IntegralityError(f"fiber mode deviates from an integer by {dev:.3e}")
            if out_mode in entries:
                raise IntegralityError(f"two window modes collide at fiber mode {out_mode}")
            entries[out_mode] = complex(C[i]) * float(weights[i])
        fibers.append(Fiber(tuple(float(x) for x in sig), residue, tuple(sorted(entries.items()))))
    return UhFamily(frame, h, tuple(fibers), worst)


def uh_family_to_json(family: UhFamily) -> list[dict]:
    out = []
    for f in family.fibers:
        out.append({
            "sigma": [float(x) for x in f.sigma],
            "modes": [{"eta": [int(x) for x in m], "re": v.real, "im": v.imag}
                      for m, v in f.modes],
        })
    return out


# -- conjugated (reduced) evolution ----------------------------------------------------


@dataclass(frozen=True)
class ConjugatedCheck:
    direct: complex
    conjugated: complex

    @property
    def defect(self) -> float:
        return abs(self.direct - self.conjugated)


def conjugated_evolution_check(state: FourierState, symbol: Symbol,
                               frame: TwoMicrolocalFrame, tau: float, t: float,
                               R: float, chi: RadialCutoff | None = None) -> ConjugatedCheck:
    """Concentrating pairing of the evolved state vs the reduced fiber evolution.

    Requires the critical scale tau = 1/h and an eta-independent symbol with
    x-modes in the frame module.  The reduced side evolves each sigma-fiber
    with the quadratic model A(sigma, zeta) = d2H(sigma) zeta . zeta / 2 and
    pairs against the symbol frozen at sigma; the difference is the finite-h
    defect of the conjugation.
    """
    if chi is None:
        chi = RadialCutoff()
    h = state.h
    if abs(tau * h - 1.0) > 1e-12:
        raise ParameterError("the conjugated check runs at the critical scale tau = 1/h only")
    lattice = frame.lattice
    for k, _ in symbol.components:
        if not lattice.contains(k):
            raise ParameterError(f"symbol mode {k} lies outside the frame module")

    lifted = lift_symbol(symbol, lattice, radius=R * chi.support)
    direct = two_scale_pair(state, lifted, frame, tau, t=t, part="concentrating", R=R, chi=chi)

    family = uh_transform(state, frame)
    H = frame.hamiltonian
    total = 0.0 + 0.0j
    alpha = module_projector(lattice)
    Bmat = np.array(lattice.basis, dtype=np.int64)
    for fiber in family.fibers:
        sig = np.array(fiber.sigma)
        hess = H.hessian(sig)
        shift = Bmat.T.astype(float) @ (alpha @ sig) / h
        frac, _ = fractional_part(shift, lattice)
        frac = np.array(frac)
        mode_map = dict(fiber.modes)
        sig_pt = sig[None, :]
        for mu, _ in symbol.components:
            a_sig = complex(symbol.component_values(mu, sig_pt)[0])
            if a_sig == 0.0:
                continue
            for ups, phi in mode_map.items():
                ups2 = tuple(u + m for u, m in zip(ups, mu))
                phi2 = mode_map.get(ups2)
                if phi2 is None:
                    continue
                zeta1 = np.array(ups, dtype=float) - frac
                zeta2 = np.array(ups2, dtype=float) - frac
                mid = 0.5 * (zeta1 + zeta2)
                window = float(chi(math.sqrt(float(mid @ mid)) / R))
                if window == 0.0:
                    continue
                act1 = 0.5 * float(zeta1 @ hess @ zeta1)
                act2 = 0.5 * float(zeta2 @ hess @ zeta2)
                total += (phi * np.conj(phi2) * a_sig * window
                          * np.exp(-1j * t * (act1 - act2)))
    conjugated = complex(total / TWO_PI ** (state.dim / 2.0))
    return ConjugatedCheck(direct, conjugated)
