"""Closed-form triple products on the elliptic curve C / (Z + Z tau).

m3 : H^1(L(-k, 0)) x H^0(L(k, u)) x H^0(L(l, v)) -> H^0(L(l, u + v))

computed two ways: the holomorphic side G from the Dolbeault model and the
Fukaya side F from counting triangles, together with the theta-function
combinatorics relating their difference to a homotopy n2.
"""

import cmath
import itertools
import logging
import math
from typing import Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from ainfell.config import RunConfig, TruncationPolicy
from ainfell.errors import (
    IllConditionedFitError,
    PoleProximityError,
    PreconditionError,
    TransversalityError,
)
from ainfell.theta import Characteristic, Modulus, _fsum_complex, gaussian_cutoff, theta_char

logger = logging.getLogger(__name__)

GammaConvention = Literal["plus", "minus"]

_DEFAULTS = RunConfig()
DEFAULT_POLE_MARGIN = _DEFAULTS.pole_margin
DEFAULT_TRANSVERSALITY_MARGIN = _DEFAULTS.transversality_margin
MAX_CONDITION = 1e10


class LatticeCoordinates(BaseModel):
    """z = z1 + tau * z2 with the real coordinates kept exact."""

    model_config = ConfigDict(frozen=True)

    z1: float
    z2: float
    tau: Modulus

    @classmethod
    def from_value(cls, z: complex, tau: Modulus) -> "LatticeCoordinates":
        z = complex(z)
        z2 = z.imag / tau.t
        return cls(z1=z.real - tau.tau.real * z2, z2=z2, tau=tau)

    @property
    def value(self) -> complex:
        return self.z1 + self.tau.tau * self.z2

    def shifted(self, n1: float = 0.0, n2: float = 0.0) -> "LatticeCoordinates":
        return LatticeCoordinates(z1=self.z1 + n1, z2=self.z2 + n2, tau=self.tau)

    def __add__(self, other: "LatticeCoordinates") -> "LatticeCoordinates":
        return self.shifted(other.z1, other.z2)

    def __sub__(self, other: "LatticeCoordinates") -> "LatticeCoordinates":
        return self.shifted(-other.z1, -other.z2)

    def __neg__(self) -> "LatticeCoordinates":
        return LatticeCoordinates(z1=-self.z1, z2=-self.z2, tau=self.tau)

    def reduced(self) -> tuple["LatticeCoordinates", tuple[int, int]]:
        """Representative with coordinates in [-1/2, 1/2) and the lattice vector removed."""
        n1, n2 = math.floor(self.z1 + 0.5), math.floor(self.z2 + 0.5)
        return self.shifted(-n1, -n2), (n1, n2)

    def lattice_distance(self) -> float:
        base, _ = self.reduced()
        return min(
            abs(base.value - (p + self.tau.tau * q)) for p, q in itertools.product((-1, 0, 1), repeat=2)
        )


class LineBundleSlot(BaseModel):
    """L(k, u) with metric weight exp(-2 pi t (k x2^2 + 2 x2 u2))."""

    model_config = ConfigDict(frozen=True)

    k: int
    u: LatticeCoordinates

    @property
    def tau(self) -> Modulus:
        return self.u.tau

    def dual(self) -> "LineBundleSlot":
        return LineBundleSlot(k=-self.k, u=-self.u)

    def tensor(self, other: "LineBundleSlot") -> "LineBundleSlot":
        return LineBundleSlot(k=self.k + other.k, u=self.u + other.u)

    def is_dual_to(self, other: "LineBundleSlot", tol: float = 1e-12) -> bool:
        total = self.u + other.u
        return self.k + other.k == 0 and abs(total.z1 - round(total.z1)) < tol and abs(total.z2 - round(total.z2)) < tol


class TripleProductQuery(BaseModel):
    """Indices of m3(alpha_a, theta_{b/k}(kx+u), theta_{c/l}(lx+v)) read off on theta_{d/l}(lx+w)."""

    model_config = ConfigDict(frozen=True)

    k: int
    l: int
    a: int = 0
    b: int = 0
    c: int = 0
    d: int = 0
    u: LatticeCoordinates
    v: LatticeCoordinates

    @model_validator(mode="after")
    def _positive_degrees(self):
        if self.k <= 0 or self.l <= 0:
            raise PreconditionError(f"k and l must be positive, got k={self.k}, l={self.l}", anchor="degrees")
        return self

    @classmethod
    def build(cls, k: int, l: int, a: int, b: int, c: int, d: int, u: complex, v: complex, tau: Modulus):
        if k <= 0 or l <= 0:
            raise PreconditionError(f"k and l must be positive, got k={k}, l={l}", anchor="degrees")
        return cls(
            k=k, l=l, a=a % k, b=b % k, c=c % l, d=d % l,
            u=LatticeCoordinates.from_value(u, tau), v=LatticeCoordinates.from_value(v, tau),
        )

    @property
    def tau(self) -> Modulus:
        return self.u.tau

    @property
    def w(self) -> LatticeCoordinates:
        return self.u + self.v

    def with_u(self, u: LatticeCoordinates) -> "TripleProductQuery":
        """Same query at a new u with w held fixed."""
        return self.model_copy(update={"u": u, "v": self.w - u})

    def with_indices(self, **indices: int) -> "TripleProductQuery":
        return self.model_copy(update=indices)


def check_pole(u: LatticeCoordinates, pole_margin: float) -> None:
    distance = u.lattice_distance()
    if distance < pole_margin:
        raise PoleProximityError(
            f"u = {u.value} lies within {distance:.3g} of the lattice (margin {pole_margin:g})", anchor="pole"
        )


def congruence_progression(r1: int, k: int, r2: int, l: int) -> Optional[tuple[int, int]]:
    """Solutions of m = r1 (mod k), m = r2 (mod l) as (m0, step), or None when there are none."""
    g = math.gcd(k, l)
    if (r1 - r2) % g:
        return None
    step = k * l // g
    for m in range(step):
        if (m - r1) % k == 0 and (m - r2) % l == 0:
            return m, step
    return None


# ---------------------------------------------------------------------------
# Norms and Fourier coefficients of products of theta sections
# ---------------------------------------------------------------------------


def h0_basis_norm_sq(k: int, u: LatticeCoordinates) -> float:
    """||theta_{a/k}(kx + u, k tau)||^2, independent of a."""
    if k <= 0:
        raise PreconditionError(f"k must be positive, got {k}", anchor="norm")
    t = u.tau.t
    return math.exp(2 * math.pi * t * u.z2**2 / k) / math.sqrt(2 * t * k)


def _gaussian_coefficient(m, n, k, a, z, zbar, tau: Modulus):
    t = tau.t
    gamma = m * tau.tau - n
    exponent = -(math.pi / (2 * t * k)) * (abs(gamma) ** 2 + 2 * gamma.conjugate() * z - 2 * gamma * zbar + (z - zbar) ** 2)
    exponent += (1j * math.pi * n / k) * (m + 2 * a)
    return cmath.exp(exponent) / math.sqrt(2 * t * k)


def fourier_c(m: int, n: int, k: int, a: int, b: int, u: LatticeCoordinates, v: LatticeCoordinates) -> complex:
    """Mode (m, n) of theta_{b/k}(kx+u) conj(theta_{a/k}(kx+v)) exp(-2 pi t (k x2^2 + 2 x2 v2)) on L(0, u - v)."""
    if (m - (b - a)) % k:
        return 0j
    return _gaussian_coefficient(m, n, k, a, u.value, v.value.conjugate(), u.tau)


def fourier_a(m: int, n: int, k: int, a: int, b: int, u: LatticeCoordinates) -> complex:
    """Mode (m, n) of the solution F of dbar F = conj(theta_{a/k}(kx)) exp(-2 pi t k x2^2) theta_{b/k}(kx+u)."""
    if (m - (b - a)) % k:
        return 0j
    tau = u.tau
    eigenvalue = (math.pi / tau.t) * (m * tau.tau - n + u.value)
    return _gaussian_coefficient(m, n, k, a, u.value, 0j, tau) / eigenvalue


def fourier_b(m: int, n: int, l: int, c: int, d: int, u: LatticeCoordinates, v: LatticeCoordinates) -> complex:
    """Mode (m, n) of theta_{d/l}(lx+u+v) conj(theta_{c/l}(lx+v)) exp(-2 pi t (l x2^2 + 2 x2 v2))."""
    return fourier_c(m, n, l, c, d, u + v, v)


# ---------------------------------------------------------------------------
# Holomorphic side
# ---------------------------------------------------------------------------


def m3_holomorphic(
    query: TripleProductQuery,
    pol: TruncationPolicy,
    *,
    convention: GammaConvention = "plus",
    pole_margin: float = DEFAULT_POLE_MARGIN,
) -> complex:
    """G^d_{a,b,c}(u, w): coefficient of theta_{d/l}(lx+w, l tau) in m3(alpha, beta1, beta2).

    Lattice sum over gamma = m tau + n (``convention="minus"`` uses m tau - n) with
    m = b - a (mod k), m = d - c (mod l):

        exp(-decay Q(gamma, u) + (2 pi i / l)((u + n) w2 - m w1)
            + pi i n ((m + 2c) / l - (m + 2a) / k)) / (gamma + u)

    where Q(gamma, u) = |gamma|^2 + 2 conj(gamma) u + u^2 and decay = pi (k+l) / (2 t k l).
    """
    check_pole(query.u, pole_margin)
    k, l, a, b, c, d = query.k, query.l, query.a, query.b, query.c, query.d
    progression = congruence_progression(b - a, k, d - c, l)
    if progression is None:
        return 0j
    m0, step = progression
    tau, t = query.tau.tau, query.tau.t
    u, u1, u2 = query.u.value, query.u.z1, query.u.z2
    w1, w2 = query.w.z1, query.w.z2
    sign = 1 if convention == "plus" else -1
    decay = math.pi * (k + l) / (2 * t * k * l)

    # |term| = exp(-decay |gamma + u|^2 + 2 decay (t u2)^2 - 2 pi t u2 w2 / l) / |gamma + u|
    log_scale = 2 * decay * (t * u2) ** 2 - 2 * math.pi * t * u2 * w2 / l + math.log(10.0)
    n_radius = gaussian_cutoff(decay, 0.0, pol.eps, pol.max_terms, log_scale)
    s_radius = gaussian_cutoff(
        decay * t * t, 0.0, pol.eps, pol.max_terms, log_scale + math.log1p(math.sqrt(math.pi / decay))
    )

    first = m0 + step * math.ceil((-u2 - s_radius - 1 - m0) / step)
    partial = []
    for m in range(first, math.floor(-u2 + s_radius + 1) + 1, step):
        centre = -sign * (u1 + tau.real * (m + u2))
        n = np.arange(math.floor(centre) - n_radius - 1, math.floor(centre) + n_radius + 3)
        gamma = m * tau + sign * n
        quad = np.abs(gamma) ** 2 + 2 * np.conj(gamma) * u + u * u
        exponent = (
            -decay * quad
            + (2j * math.pi / l) * ((u + n) * w2 - m * w1)
            + 1j * math.pi * n * ((m + 2 * c) / l - (m + 2 * a) / k)
        )
        partial.extend(np.exp(exponent) / (gamma + u))
    return _fsum_complex(partial)


def m3_holomorphic_fourier(query: TripleProductQuery, modes: int) -> complex:
    """G through its Dolbeault derivation: (pi sqrt(2k) / sqrt t) sqrt(2tl) exp(-2 pi t w2^2 / l) sum a_mn conj(b_mn)."""
    check_pole(query.u, DEFAULT_POLE_MARGIN)
    k, l, t = query.k, query.l, query.tau.t
    total = []
    for m in range(-modes, modes + 1):
        if (m - (query.b - query.a)) % k or (m - (query.d - query.c)) % l:
            continue
        for n in range(-modes, modes + 1):
            a_mn = fourier_a(m, n, k, query.a, query.b, query.u)
            b_mn = fourier_b(m, n, l, query.c, query.d, query.u, query.v)
            total.append(a_mn * b_mn.conjugate())
    prefactor = (math.pi * math.sqrt(2 * k) / math.sqrt(t)) * math.sqrt(2 * t * l)
    return prefactor * math.exp(-2 * math.pi * t * query.w.z2**2 / l) * _fsum_complex(total)


# ---------------------------------------------------------------------------
# Fukaya side
# ---------------------------------------------------------------------------


def fukaya_n0(w2: float, d: int, l: int, a: int, k: int, transversality_margin: float = DEFAULT_TRANSVERSALITY_MARGIN) -> int:
    """Least integer n with n >= (w2 + d) / l - a / k.

    Exact integers are accepted; values within the margin of an integer are not transversal.
    """
    value = (w2 + d) / l - a / k
    nearest = round(value)
    gap = abs(value - nearest)
    if gap <= 4 * np.finfo(float).eps * max(1.0, abs(value)):
        return int(nearest)
    if gap < transversality_margin:
        raise TransversalityError(
            f"(w2 + d)/l - a/k = {value!r} is within {gap:.3g} of an integer", anchor="transversality"
        )
    return math.ceil(value)


def m3_fukaya(
    query: TripleProductQuery,
    pol: TruncationPolicy,
    *,
    pole_margin: float = DEFAULT_POLE_MARGIN,
    transversality_margin: float = DEFAULT_TRANSVERSALITY_MARGIN,
) -> complex:
    """F^d_{a,b,c}(u, w), the triangle-counting product with the functor's normalizing factors set to 1.

    -2 pi i sum_m exp((pi i (k+l) / kl)(tau m^2 + 2 m u) - 2 pi i m w / l + 2 pi i (m tau + u) E)
                 / (1 - exp(2 pi i (m tau + u)))

    over m = b - a (mod k), m = d - c (mod l), with E = n0 - d / l + a / k.
    """
    check_pole(query.u, pole_margin)
    k, l, a, b, c, d = query.k, query.l, query.a, query.b, query.c, query.d
    progression = congruence_progression(b - a, k, d - c, l)
    if progression is None:
        return 0j
    m0, step = progression
    tau, t = query.tau.tau, query.tau.t
    u, u2 = query.u.value, query.u.z2
    w, w2 = query.w.value, query.w.z2
    shift = fukaya_n0(w2, d, l, a, k, transversality_margin) - d / l + a / k
    rate = math.pi * (k + l) * t / (k * l)

    # with s = m + u2: |term| <= 2 pi exp(-rate s^2 + 2 pi t |s| + rate u2^2 - 2 pi t u2 w2 / l) / (1 - exp(-2 pi t |s|))
    log_scale = rate * u2 * u2 - 2 * math.pi * t * u2 * w2 / l + math.log(2 * math.pi) + math.log(20.0)
    radius = gaussian_cutoff(rate, 2 * math.pi * t, pol.eps, pol.max_terms, log_scale)
    first = m0 + step * math.ceil((-u2 - radius - 1 - m0) / step)
    m = np.arange(first, math.floor(-u2 + radius + 1) + 1, step)
    z = m * tau + u
    numerator = np.exp(
        (1j * math.pi * (k + l) / (k * l)) * (tau * m * m + 2 * m * u) - 2j * math.pi * m * w / l + 2j * math.pi * z * shift
    )
    terms = numerator / (1 - np.exp(2j * math.pi * z))
    return -2j * math.pi * _fsum_complex(terms)


def m3_difference(
    query: TripleProductQuery,
    pol: TruncationPolicy,
    *,
    convention: GammaConvention = "plus",
    pole_margin: float = DEFAULT_POLE_MARGIN,
    transversality_margin: float = DEFAULT_TRANSVERSALITY_MARGIN,
) -> complex:
    """H_{b,c}(u) = G - F, holomorphic in u."""
    g = m3_holomorphic(query, pol, convention=convention, pole_margin=pole_margin)
    f = m3_fukaya(query, pol, pole_margin=pole_margin, transversality_margin=transversality_margin)
    return g - f


# ---------------------------------------------------------------------------
# T-set combinatorics
# ---------------------------------------------------------------------------


class TSetElement(BaseModel):
    """A triple (b, c, p) up to (b, c, p) ~ (b + k, c, p - 1) ~ (b, c + l, p + 1) ~ (b, c, p + (k+l)/r)."""

    model_config = ConfigDict(frozen=True)

    b: int
    c: int
    p: int


def canonicalize(sigma: TSetElement, k: int, l: int) -> TSetElement:
    qb, b = divmod(sigma.b, k)
    qc, c = divmod(sigma.c, l)
    period = (k + l) // math.gcd(k, l)
    return TSetElement(b=b, c=c, p=(sigma.p + qb - qc) % period)


def t_set_enumerate(k: int, l: int, b: int, c: int) -> list[TSetElement]:
    """The fiber over (b, c) of the projection forgetting p."""
    period = (k + l) // math.gcd(k, l)
    return [TSetElement(b=b % k, c=c % l, p=p) for p in range(period)]


def phi2(sigma: TSetElement, k: int, l: int) -> int:
    """(b/k - c/l + p) kl/r modulo N = (k+l) kl / r^2."""
    r = math.gcd(k, l)
    numerator = sigma.b * l - sigma.c * k + sigma.p * k * l
    if numerator % r:
        raise PreconditionError(f"{sigma} does not map to an integer class", anchor="phi2")
    return (numerator // r) % ((k + l) * k * l // (r * r))


def phi3(sigma: TSetElement, k: int, l: int) -> int:
    return (sigma.b + sigma.c + k * sigma.p) % (k + l)


def basis_e(s: int, u: complex, k: int, l: int, w: complex, tau: Modulus, pol: TruncationPolicy) -> complex:
    """e(s) = theta_{s/N}(((k+l)u - kw) / r, N tau)."""
    r = math.gcd(k, l)
    big_n = (k + l) * k * l // (r * r)
    return theta_char(Characteristic.of(s, big_n), ((k + l) * u - k * w) / r, tau.scaled(big_n), pol)


def product_expansion(k: int, l: int, b: int, c: int, u: complex, w: complex, tau: Modulus, pol: TruncationPolicy) -> dict[int, complex]:
    """Coefficients of theta_{q/(k+l)}((k+l)x + w) in theta_{b/k}(kx+u) theta_{c/l}(lx+v), keyed by q."""
    coefficients: dict[int, complex] = {}
    for sigma in t_set_enumerate(k, l, b, c):
        q = phi3(sigma, k, l)
        coefficients[q] = coefficients.get(q, 0j) + basis_e(phi2(sigma, k, l), u, k, l, w, tau, pol)
    return coefficients


# ---------------------------------------------------------------------------
# Quasi-periodicity in u
# ---------------------------------------------------------------------------


def _relative(lhs: complex, rhs: complex) -> float:
    return abs(lhs - rhs) / max(1.0, abs(rhs))


def quasi_period_residuals(series, query: TripleProductQuery) -> tuple[float, float]:
    """Residuals of the u -> u + 1 and u -> u + tau laws, w fixed, for G, F or H = G - F."""
    k, l = query.k, query.l
    tau = query.tau.tau
    u, w = query.u.value, query.w.value
    base = series(query)
    one = series(query.with_u(query.u.shifted(n1=1)))
    first = _relative(one, cmath.exp(2j * math.pi * (query.b / k - query.c / l)) * base)
    moved = series(query.with_u(query.u.shifted(n2=1)))
    factor = cmath.exp(-(1j * math.pi * (k + l) / (k * l)) * (2 * u + tau) + 2j * math.pi * w / l)
    neighbour = series(query.with_indices(b=(query.b + 1) % k, c=(query.c - 1) % l))
    second = _relative(moved, factor * neighbour)
    return first, second


def long_period_residuals(series, query: TripleProductQuery) -> tuple[float, float]:
    """Residuals of H(u + kl/r) = H(u) and the kl/r tau law, evaluated directly."""
    k, l = query.k, query.l
    r = math.gcd(k, l)
    period = k * l // r
    tau = query.tau.tau
    u, w = query.u.value, query.w.value
    base = series(query)
    along_one = _relative(series(query.with_u(query.u.shifted(n1=period))), base)
    factor = cmath.exp(-1j * math.pi * ((k + l) * k * l / (r * r)) * tau - 2j * math.pi * ((k + l) * u - k * w) / r)
    along_tau = _relative(series(query.with_u(query.u.shifted(n2=period))), factor * base)
    return along_one, along_tau


def symmetric_residue(series, query: TripleProductQuery, radius: float = 1e-4) -> float:
    """Residue of ``series`` at u = 0 estimated as (u G(u) + (-u) G(-u)) / 2 at |u| = radius."""
    tau = query.tau
    step = LatticeCoordinates.from_value(radius * (1 + 1j) / math.sqrt(2), tau)
    plus = series(query.with_u(step))
    minus = series(query.with_u(-step))
    return (step.value * plus - step.value * minus) / 2


# ---------------------------------------------------------------------------
# Homotopy coefficients
# ---------------------------------------------------------------------------


class HomotopyCoefficients(BaseModel):
    """f^d_{a,q}(w) for q in Z/(k+l), one row per fitted d."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    k: int
    l: int
    a: int
    w: LatticeCoordinates
    coefficients: dict[int, dict[int, complex]]
    fit_residual: float = 0.0
    fiber_spread: float = 0.0
    condition: float = 1.0
    samples: int = 0

    @property
    def tau(self) -> Modulus:
        return self.w.tau


def sample_u(rng: np.random.Generator, tau: Modulus, count: int, keep_away: float = 0.2) -> list[LatticeCoordinates]:
    """Points s1 + tau s2 with s1, s2 in [-1/2, 1/2), rejecting those near the lattice."""
    points: list[LatticeCoordinates] = []
    while len(points) < count:
        candidate = LatticeCoordinates(z1=rng.uniform(-0.5, 0.5), z2=rng.uniform(-0.5, 0.5), tau=tau)
        if candidate.lattice_distance() >= keep_away:
            points.append(candidate)
    return points


def _solve(matrix: np.ndarray, rhs: np.ndarray, what: str) -> tuple[np.ndarray, float, float]:
    rows, unknowns = matrix.shape
    if rows < unknowns:
        raise IllConditionedFitError(f"{what}: {rows} equations for {unknowns} unknowns", anchor="fit")
    scale = np.linalg.norm(matrix, axis=1)
    scale[scale == 0] = 1.0
    matrix, rhs = matrix / scale[:, None], rhs / scale
    condition = float(np.linalg.cond(matrix))
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise IllConditionedFitError(f"{what}: sample matrix condition number {condition:.3g}", anchor="fit")
    solution, *_ = np.linalg.lstsq(matrix, rhs, rcond=None)
    residual = np.linalg.norm(matrix @ solution - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if not np.linalg.norm(rhs):
        residual = float(np.linalg.norm(matrix @ solution))
    return solution, float(residual), condition


def homotopy_fit(
    k: int,
    l: int,
    a: int,
    w: LatticeCoordinates,
    u_samples: Sequence[LatticeCoordinates],
    pol: TruncationPolicy,
    *,
    d: Optional[int] = None,
    convention: GammaConvention = "plus",
    pole_margin: float = DEFAULT_POLE_MARGIN,
    transversality_margin: float = DEFAULT_TRANSVERSALITY_MARGIN,
) -> HomotopyCoefficients:
    """Least-squares fit of G - F = sum_sigma f_{phi3(sigma)} e(phi2(sigma)) over all (b, c) at once.

    Each (b, c) is also fitted on its own; the largest disagreement with the joint
    coefficients is reported as ``fiber_spread``.
    """
    tau = w.tau
    targets = range(l) if d is None else [d % l]
    coefficients: dict[int, dict[int, complex]] = {}
    worst_residual, worst_spread, worst_condition = 0.0, 0.0, 1.0
    for target in targets:
        rows, rhs, blocks = [], [], []
        for b, c in itertools.product(range(k), range(l)):
            sigmas = t_set_enumerate(k, l, b, c)
            block_rows, block_rhs = [], []
            for u in u_samples:
                query = TripleProductQuery(k=k, l=l, a=a % k, b=b, c=c, d=target, u=u, v=w - u)
                h = m3_difference(
                    query, pol, convention=convention, pole_margin=pole_margin, transversality_margin=transversality_margin
                )
                values = [basis_e(phi2(s, k, l), u.value, k, l, w.value, tau, pol) for s in sigmas]
                row = np.zeros(k + l, dtype=complex)
                for s, value in zip(sigmas, values):
                    row[phi3(s, k, l)] += value
                rows.append(row)
                rhs.append(h)
                block_rows.append(values)
                block_rhs.append(h)
            blocks.append((sigmas, np.array(block_rows, dtype=complex), np.array(block_rhs, dtype=complex)))

        joint, residual, condition = _solve(np.array(rows), np.array(rhs), f"joint fit for d={target}")
        scale = max(1.0, float(np.max(np.abs(joint))))
        spread = 0.0
        for sigmas, matrix, values in blocks:
            local, _, _ = _solve(matrix, values, f"fiber fit for d={target}")
            for s, value in zip(sigmas, local):
                spread = max(spread, abs(value - joint[phi3(s, k, l)]) / scale)
        logger.debug("d=%d: fit residual %.3g, fiber spread %.3g, condition %.3g", target, residual, spread, condition)
        coefficients[target] = {q: complex(joint[q]) for q in range(k + l)}
        worst_residual = max(worst_residual, residual)
        worst_spread = max(worst_spread, spread)
        worst_condition = max(worst_condition, condition)

    return HomotopyCoefficients(
        k=k, l=l, a=a % k, w=w, coefficients=coefficients,
        fit_residual=worst_residual, fiber_spread=worst_spread, condition=worst_condition,
        samples=len(u_samples),
    )


def n2_apply(coeffs: HomotopyCoefficients, q: int) -> dict[int, complex]:
    """n2(alpha_a, theta_{q/(k+l)}((k+l)x + w)) in the theta_{d/l}(lx + w) basis."""
    missing = sorted(set(range(coeffs.l)) - set(coeffs.coefficients))
    if missing:
        raise PreconditionError(f"no homotopy coefficients for d in {missing}", anchor="n2")
    return {d: coeffs.coefficients[d][q % (coeffs.k + coeffs.l)] for d in range(coeffs.l)}


def n2_on_product(coeffs: HomotopyCoefficients, b: int, c: int, u: LatticeCoordinates, pol: TruncationPolicy) -> dict[int, complex]:
    """n2(alpha_a, beta1 beta2), expanding beta1 beta2 with the theta addition formula."""
    k, l = coeffs.k, coeffs.l
    expansion = product_expansion(k, l, b, c, u.value, coeffs.w.value, coeffs.tau, pol)
    result = {d: 0j for d in range(l)}
    for q, weight in expansion.items():
        for d, value in n2_apply(coeffs, q).items():
            result[d] += weight * value
    return result


def end_to_end_residual(
    coeffs: HomotopyCoefficients,
    b: int,
    c: int,
    u: LatticeCoordinates,
    pol: TruncationPolicy,
    *,
    convention: GammaConvention = "plus",
    transversality_margin: float = DEFAULT_TRANSVERSALITY_MARGIN,
) -> float:
    """max_d |(m3 - m3')_d - n2(alpha, beta1 beta2)_d|, relative to the size of m3 - m3'."""
    predicted = n2_on_product(coeffs, b, c, u, pol)
    worst, size = 0.0, 1.0
    for d in range(coeffs.l):
        query = TripleProductQuery(k=coeffs.k, l=coeffs.l, a=coeffs.a, b=b % coeffs.k, c=c % coeffs.l, d=d, u=u, v=coeffs.w - u)
        actual = m3_difference(query, pol, convention=convention, transversality_margin=transversality_margin)
        worst = max(worst, abs(actual - predicted[d]))
        size = max(size, abs(actual))
    return worst / size
