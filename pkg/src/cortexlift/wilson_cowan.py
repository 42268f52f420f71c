"""
Orientation-dependent Wilson-Cowan evolution on lifted fields.

The energy of a lifted field ``F`` (shape ``(N, N, K)``, periodic on all axes) is

    E(F) = 1/2 |F - G0|^2 + lam/2 |F - F0|^2
           - 1/(4M) sum_p sum_q W(p - q) Sigma_alpha(F(p) - F(q))

and explicit Euler steps follow its negative gradient

    F <- F + dt * (-(1 + lam) F + G0 + lam F0 + R_F / (2M)),
    R_F(p) = sum_q W(p - q) sigma_alpha(F(p) - F(q)).

``R_F`` is computed either by the literal sum over kernel offsets
(``interaction_direct``) or by an odd polynomial surrogate of the sigmoid that
turns the sum into a handful of FFT convolutions (``interaction_fast``).
"""

import dataclasses
from dataclasses import dataclass, field
from math import ceil, comb, pi
from typing import Iterator, List, Optional, Tuple

import numpy as np
import scipy.fft as sfft
from threadpoolctl import threadpool_limits

from ._threads import fft_workers
from .imagegrid import gaussian_blur
from .lifting import CakeWaveletStack, identity_stack, lift, project

__all__ = [
    "WCParams",
    "WeightKernel",
    "EvolutionState",
    "PolynomialInteraction",
    "RangeExceeded",
    "sigmoid",
    "sigmoid_primitive",
    "build_weight",
    "fit_odd_sigmoid",
    "interaction_direct",
    "interaction_fast",
    "pair_sum_direct",
    "energy",
    "descent_direction",
    "init_state",
    "evolve_step",
    "evolve",
    "run_evolution",
    "run_evolution_2d",
    "run_bound",
]


@dataclass(frozen=True)
class WCParams:
    """Model and solver parameters.

    ``lam`` is the fidelity weight (``lambda`` in configs).  ``degree`` and
    ``trunc`` only affect the numerics: the order of the fast-path polynomial
    and the Gaussian truncation radius in standard deviations.
    """

    alpha: float = 2.8
    lam: float = 0.5
    M: float = 1.0
    sigma_mu: float = 10.0
    sigma_omega: float = 5.0
    sigma_theta: float = pi / 12
    dt: float = 0.15
    tau: float = 1e-2
    max_iters: int = 500
    degree: int = 11
    trunc: float = 3.0

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError(f"alpha must exceed 1, got {self.alpha}")
        if self.lam < 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if not 0 < self.M <= 1:
            raise ValueError(f"M must lie in (0, 1], got {self.M}")
        if self.sigma_mu <= 0 or self.sigma_omega <= 0 or self.sigma_theta <= 0:
            raise ValueError("Gaussian standard deviations must be positive")
        if self.dt < 0:
            raise ValueError(f"dt must be non-negative, got {self.dt}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be non-negative, got {self.max_iters}")
        if self.degree < 1 or self.degree % 2 == 0:
            raise ValueError(f"degree must be a positive odd integer, got {self.degree}")
        if self.trunc <= 0:
            raise ValueError(f"trunc must be positive, got {self.trunc}")

    def replace(self, **changes) -> "WCParams":
        return dataclasses.replace(self, **changes)

    @property
    def monotone_dt(self) -> float:
        """Step size below which the energy trace is guaranteed non-increasing."""
        return 0.9 / (1.0 + self.lam + self.alpha / (2.0 * self.M))


def sigmoid(rho, alpha: float):
    return np.clip(alpha * np.asarray(rho, dtype=np.float64), -1.0, 1.0)


def sigmoid_primitive(rho, alpha: float):
    """Even convex primitive of ``sigmoid`` vanishing at 0."""
    rho = np.abs(np.asarray(rho, dtype=np.float64))
    return np.where(rho <= 1.0 / alpha, 0.5 * alpha * rho**2, rho - 0.5 / alpha)


# --------------------------------------------------------------------------
# interaction weight


@dataclass(frozen=True, eq=False)
class WeightKernel:
    """Truncated unit-mass Gaussian; ``weights[i + rs, j + rs, l + ra]`` is W(i, j, l)."""

    weights: np.ndarray
    sigma_omega: float
    sigma_theta: float
    K: int

    @property
    def rs(self) -> int:
        return (self.weights.shape[0] - 1) // 2

    @property
    def ra(self) -> int:
        return (self.weights.shape[2] - 1) // 2

    def offsets(self) -> Iterator[Tuple[Tuple[int, int, int], float]]:
        """Non-zero ``((di, dj, dl), weight)`` pairs in a fixed order."""
        rs, ra = self.rs, self.ra
        for i in range(-rs, rs + 1):
            for j in range(-rs, rs + 1):
                for l in range(-ra, ra + 1):
                    w = float(self.weights[i + rs, j + rs, l + ra])
                    if w != 0.0:
                        yield (i, j, l), w

    def periodic(self, shape) -> np.ndarray:
        """The kernel wrapped onto a periodic grid of ``shape``, origin at index 0."""
        out = np.zeros(shape)
        ii = np.arange(-self.rs, self.rs + 1) % shape[0]
        jj = np.arange(-self.rs, self.rs + 1) % shape[1]
        ll = np.arange(-self.ra, self.ra + 1) % shape[2]
        np.add.at(out, np.ix_(ii, jj, ll), self.weights)
        return out


def build_weight(sigma_omega: float, sigma_theta: float, K: int, trunc: float = 3.0) -> WeightKernel:
    """Separable 3D Gaussian: spatial std in pixels, angular std in radians.

    With ``K == 1`` there is a single orientation and the angular factor is a delta.
    """
    if sigma_omega <= 0 or sigma_theta <= 0:
        raise ValueError("standard deviations must be positive")
    if K < 1:
        raise ValueError(f"K must be positive, got {K}")
    rs = int(ceil(trunc * sigma_omega - 1e-9))
    xs = np.arange(-rs, rs + 1, dtype=np.float64)
    gs = np.exp(-(xs**2) / (2.0 * sigma_omega**2))
    if K == 1:
        ga = np.ones(1)
    else:
        sigma_ch = sigma_theta / (np.pi / K)
        ra = int(ceil(trunc * sigma_ch - 1e-9))
        ls = np.arange(-ra, ra + 1, dtype=np.float64)
        ga = np.exp(-(ls**2) / (2.0 * sigma_ch**2))
    w = gs[:, None, None] * gs[None, :, None] * ga[None, None, :]
    w /= w.sum()
    w.setflags(write=False)
    return WeightKernel(weights=w, sigma_omega=sigma_omega, sigma_theta=sigma_theta, K=K)


# --------------------------------------------------------------------------
# interaction term


def _check_field(F: np.ndarray) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 3:
        raise ValueError(f"lifted field must be 3D, got shape {F.shape}")
    return F


def pair_sum_direct(F, W: WeightKernel, alpha: float, with_energy: bool = False):
    """Literal offset-by-offset evaluation of the interaction.

    Returns ``R_F`` and, if requested, ``sum_p sum_q W(p-q) Sigma_alpha(F(p)-F(q))``.
    """
    F = _check_field(F)
    R = np.zeros_like(F)
    pair = 0.0
    for shift, w in W.offsets():
        d = F - np.roll(F, shift, axis=(0, 1, 2))
        R += w * sigmoid(d, alpha)
        if with_energy:
            pair += w * float(sigmoid_primitive(d, alpha).sum())
    return (R, pair) if with_energy else R


def interaction_direct(F, W: WeightKernel, alpha: float) -> np.ndarray:
    return pair_sum_direct(F, W, alpha)


def fit_odd_sigmoid(alpha: float, bound: float, degree: int, samples: int = 2001) -> np.ndarray:
    """Least-squares odd polynomial for ``sigmoid(bound * s)`` on ``s in [-1, 1]``.

    Returns ``c`` with ``sigmoid(bound * s) ~ sum_j c[j] * s**(2j + 1)``.
    """
    if degree < 1 or degree % 2 == 0:
        raise ValueError(f"degree must be a positive odd integer, got {degree}")
    s = np.linspace(0.0, 1.0, samples)
    powers = np.arange(1, degree + 1, 2)
    V = s[:, None] ** powers[None, :]
    # single-threaded LAPACK keeps the coefficients bit-identical across runs
    with threadpool_limits(limits=1):
        c, *_ = np.linalg.lstsq(V, sigmoid(bound * s, alpha), rcond=None)
    return c


class RangeExceeded(RuntimeError):
    """The field spread beyond the interval the polynomial was fitted on."""


class PolynomialInteraction:
    """FFT evaluation of ``R_F`` (and the matching pair energy) via a fixed polynomial.

    With ``u = (F - c) / bound`` and ``sigma(bound * s) ~ sum_n a_n s**n`` (odd n),

        R_F(p) = sum_n a_n sum_i C(n, i) (-1)**i u(p)**(n-i) (W * u**i)(p),

    so only ``W * u**i`` for ``i <= degree`` need convolutions.  The pair energy
    uses the antiderivative of the same polynomial and one more power, so the
    fast path is the exact gradient flow of its own surrogate energy.
    """

    def __init__(self, W: WeightKernel, shape, alpha: float, degree: int, bound: float):
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        self.shape = tuple(shape)
        self.alpha = alpha
        self.degree = degree
        self.bound = float(bound)
        self.coeffs = fit_odd_sigmoid(alpha, self.bound, degree)
        self.mass = float(W.weights.sum())
        self._transfer = sfft.rfftn(W.periodic(self.shape), workers=fft_workers())
        odd = {2 * j + 1: c for j, c in enumerate(self.coeffs)}
        even = {2 * j + 2: c * self.bound / (2 * j + 2) for j, c in enumerate(self.coeffs)}
        self._odd = odd
        self._even = even

    def sup_error(self, samples: int = 20001) -> float:
        """Max deviation between the polynomial and the sigmoid over the fit interval."""
        s = np.linspace(-1.0, 1.0, samples)
        return float(np.abs(self.poly(s) - sigmoid(self.bound * s, self.alpha)).max())

    def poly(self, s):
        s = np.asarray(s, dtype=np.float64)
        return sum(c * s**n for n, c in self._odd.items())

    def sup_abs(self, samples: int = 20001) -> float:
        return float(np.abs(self.poly(np.linspace(-1.0, 1.0, samples))).max())

    def _convolve(self, a: np.ndarray) -> np.ndarray:
        w = fft_workers()
        return sfft.irfftn(self._transfer * sfft.rfftn(a, workers=w), s=self.shape, workers=w)

    def evaluate(self, F, with_energy: bool = False):
        """Return ``R_F`` and, if asked, the surrogate pair sum ``sum W P(F(p)-F(q))``."""
        F = _check_field(F)
        if F.shape != self.shape:
            raise ValueError(f"field shape {F.shape} does not match {self.shape}")
        hi, lo = float(F.max()), float(F.min())
        if hi - lo > self.bound * (1.0 + 1e-12):
            raise RangeExceeded(f"field spread {hi - lo:.4g} exceeds fitted bound {self.bound:.4g}")
        u = (F - 0.5 * (hi + lo)) / self.bound
        top = self.degree + 1 if with_energy else self.degree
        powers = [np.ones_like(u), u]
        for _ in range(2, top + 1):
            powers.append(powers[-1] * u)

        R = np.zeros_like(F)
        pair = np.zeros_like(F) if with_energy else None
        for i in range(top + 1):
            conv = np.full_like(F, self.mass) if i == 0 else self._convolve(powers[i])
            sign = -1.0 if i % 2 else 1.0
            q = np.zeros_like(F)
            for n, a in self._odd.items():
                if n >= i:
                    q += (sign * a * comb(n, i)) * powers[n - i]
            R += q * conv
            if with_energy:
                q = np.zeros_like(F)
                for n, a in self._even.items():
                    if n >= i:
                        q += (sign * a * comb(n, i)) * powers[n - i]
                pair += q * conv
        if with_energy:
            return R, float(pair.sum())
        return R


def interaction_fast(F, W: WeightKernel, alpha: float, degree: int = 11, bound: Optional[float] = None):
    """Polynomial/FFT approximation of ``interaction_direct``.

    ``bound`` defaults to the field's largest pairwise difference (max - min).
    """
    F = _check_field(F)
    if degree < 1 or degree % 2 == 0:
        raise ValueError(f"degree must be a positive odd integer, got {degree}")
    if bound is None:
        bound = float(F.max() - F.min())
    if bound == 0.0:
        return np.zeros_like(F)
    return PolynomialInteraction(W, F.shape, alpha, degree, bound).evaluate(F)


# --------------------------------------------------------------------------
# energy and gradient flow


@dataclass
class EvolutionState:
    F: np.ndarray
    F0: np.ndarray
    G0: np.ndarray
    iter: int = 0
    last_rel_change: float = float("inf")
    energy_trace: List[float] = field(default_factory=list)
    rel_change_trace: List[float] = field(default_factory=list)
    converged: bool = False
    fast: bool = True
    refits: int = 0
    # interaction at the current F, carried over so each step costs one evaluation
    interaction: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if not (self.F.shape == self.F0.shape == self.G0.shape):
            raise ValueError("F, F0 and G0 must share dimensions")


def _fidelity(F, F0, G0, lam: float) -> float:
    return 0.5 * float(np.sum((F - G0) ** 2)) + 0.5 * lam * float(np.sum((F - F0) ** 2))


def energy(state: EvolutionState, W: WeightKernel, p: WCParams) -> float:
    """Exact lifted energy of ``state.F`` (literal pair sum)."""
    _, pair = pair_sum_direct(state.F, W, p.alpha, with_energy=True)
    return _fidelity(state.F, state.F0, state.G0, p.lam) - pair / (4.0 * p.M)


def descent_direction(F, F0, G0, R, p: WCParams) -> np.ndarray:
    """Right-hand side of the gradient flow, i.e. ``-dE/dF`` given ``R_F``."""
    return -(1.0 + p.lam) * F + G0 + p.lam * F0 + R / (2.0 * p.M)


def _evaluate(F, W, p: WCParams, engine: Optional[PolynomialInteraction]):
    if engine is None:
        return pair_sum_direct(F, W, p.alpha, with_energy=True)
    return engine.evaluate(F, with_energy=True)


def run_bound(F0, G0, p: WCParams, overshoot: float = 1.25) -> float:
    """Fit interval that the explicit scheme provably never leaves.

    If ``dt * (1 + lam) <= 1`` and the polynomial stays below ``overshoot`` in
    magnitude, every iterate obeys ``|F| <= A`` with ``A`` below, so pairwise
    differences stay within ``2A``.
    """
    f0 = float(np.abs(F0).max())
    g0 = float(np.abs(G0).max())
    A = max(f0, (g0 + p.lam * f0 + overshoot / (2.0 * p.M)) / (1.0 + p.lam))
    return 2.0 * A


def _make_engine(F0, G0, W, p: WCParams) -> PolynomialInteraction:
    overshoot = 1.25
    for _ in range(5):
        engine = PolynomialInteraction(W, F0.shape, p.alpha, p.degree, run_bound(F0, G0, p, overshoot))
        sup = engine.sup_abs()
        if sup <= overshoot:
            return engine
        overshoot = 1.05 * sup
    return engine


def init_state(F0, G0, W: WeightKernel, p: WCParams, fast: bool = True,
               engine: Optional[PolynomialInteraction] = None) -> EvolutionState:
    F0 = _check_field(F0)
    G0 = _check_field(G0)
    R, pair = _evaluate(F0, W, p, engine if fast else None)
    E = _fidelity(F0, F0, G0, p.lam) - pair / (4.0 * p.M)
    return EvolutionState(F=F0.copy(), F0=F0, G0=G0, energy_trace=[E], fast=fast, interaction=R)


def evolve_step(state: EvolutionState, W: WeightKernel, p: WCParams, fast: bool = True,
                engine: Optional[PolynomialInteraction] = None) -> EvolutionState:
    """One explicit Euler step; returns a new state.

    In fast mode ``engine`` fixes the polynomial (one is fitted to the current
    field if omitted) and the recorded energy is that surrogate's; otherwise
    both the step and the energy use the literal pair sum.
    """
    F = state.F
    if fast and engine is None:
        spread = float(F.max() - F.min())
        engine = PolynomialInteraction(W, F.shape, p.alpha, p.degree, spread) if spread > 0 else None
    active = engine if fast else None

    R = state.interaction
    if R is None or state.fast != fast:
        R = _evaluate(F, W, p, active)[0]
    F_new = F + p.dt * descent_direction(F, state.F0, state.G0, R, p)

    step = float(np.linalg.norm(F_new - F))
    norm = float(np.linalg.norm(F))
    rel = step / norm if norm > 0 else step

    R_new, pair = _evaluate(F_new, W, p, active)
    E_new = _fidelity(F_new, state.F0, state.G0, p.lam) - pair / (4.0 * p.M)
    return dataclasses.replace(
        state,
        F=F_new,
        iter=state.iter + 1,
        last_rel_change=rel,
        energy_trace=state.energy_trace + [E_new],
        rel_change_trace=state.rel_change_trace + [rel],
        fast=fast,
        interaction=R_new,
    )


def evolve(F0, G0, W: WeightKernel, p: WCParams, fast: bool = True) -> EvolutionState:
    """Iterate from ``F = F0`` until the relative change drops to ``tau``."""
    engine = _make_engine(F0, G0, W, p) if fast else None
    state = init_state(F0, G0, W, p, fast=fast, engine=engine)
    refits = 0
    while state.iter < p.max_iters:
        try:
            state = evolve_step(state, W, p, fast=fast, engine=engine)
        except RangeExceeded:
            # only reachable when dt * (1 + lam) > 1 voids the a priori bound
            spread = float(state.F.max() - state.F.min())
            engine = PolynomialInteraction(W, state.F.shape, p.alpha, p.degree, 2.0 * spread)
            state = dataclasses.replace(state, interaction=None)
            refits += 1
            continue
        if state.last_rel_change <= p.tau:
            state.converged = True
            break
    state.refits = refits
    return state


def run_evolution(f0, stack: CakeWaveletStack, p: WCParams, fast: bool = True):
    """Lift, evolve, project.  Returns ``(image, state)``; check ``state.converged``."""
    f0 = np.asarray(f0, dtype=np.float64)
    mu = gaussian_blur(f0, p.sigma_mu)
    F0 = lift(f0, stack)
    G0 = lift(mu, stack)
    W = build_weight(p.sigma_omega, p.sigma_theta, stack.K, p.trunc)
    state = evolve(F0, G0, W, p, fast=fast)
    return project(state.F), state


def run_evolution_2d(f0, p: WCParams, fast: bool = True):
    """Orientation-independent model: same scheme on a single all-pass channel."""
    f0 = np.asarray(f0, dtype=np.float64)
    return run_evolution(f0, identity_stack(f0.shape[0]), p, fast=fast)
