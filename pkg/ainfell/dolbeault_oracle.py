"""Brute-force Dolbeault model on the elliptic curve.

Sections of L(k, u) are stored as their values on the fundamental domain
x = x1 + tau x2, (x1, x2) in [0, 1)^2, so products of sections multiply
pointwise. (0,1)-forms store the coefficient of dx-bar. dbar is inverted
spectrally on L(0, u) through the orthonormal modes

    phi_{u,m,n}(x) = exp(2 pi i (m x1 + (n - u) x2)),   dbar phi = (pi / t)(m tau - n + u) phi.
"""

import functools
import logging
import math
from typing import Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from ainfell.config import TruncationPolicy
from ainfell.elliptic_products import LatticeCoordinates, LineBundleSlot, TripleProductQuery
from ainfell.errors import PoleProximityError, PreconditionError, SlotMismatchError, TruncationError
from ainfell.theta import Characteristic, Modulus, theta_char_grid

logger = logging.getLogger(__name__)

TAIL_TOLERANCE = 1e-10


class GridSection(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    bundle: LineBundleSlot
    samples: np.ndarray
    form_type: Literal[0, 1] = 0

    @model_validator(mode="after")
    def _square_power_of_two(self):
        n = self.samples.shape[0]
        if self.samples.shape != (n, n) or n < 4 or n & (n - 1):
            raise PreconditionError(f"grid must be N x N with N a power of two, got {self.samples.shape}", anchor="grid")
        if not np.all(np.isfinite(self.samples)):
            raise PreconditionError("grid samples must be finite", anchor="grid")
        return self

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def tau(self) -> Modulus:
        return self.bundle.tau

    def __mul__(self, other: "GridSection") -> "GridSection":
        form_type = self.form_type + other.form_type
        bundle = self.bundle.tensor(other.bundle)
        if form_type > 1:
            return GridSection(bundle=bundle, samples=np.zeros_like(self.samples), form_type=1)
        return GridSection(bundle=bundle, samples=self.samples * other.samples, form_type=form_type)

    def scaled(self, factor: complex) -> "GridSection":
        return self.model_copy(update={"samples": factor * self.samples})

    def zero(self) -> "GridSection":
        return self.scaled(0.0)


class FourierModeL0u(BaseModel):
    """Coefficients on phi_{u,m,n}, |m|, |n| <= cutoff, stored at [m + cutoff, n + cutoff]."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    u: LatticeCoordinates
    coeffs: np.ndarray

    @property
    def cutoff(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    def coefficient(self, m: int, n: int) -> complex:
        if max(abs(m), abs(n)) > self.cutoff:
            raise PreconditionError(f"mode ({m}, {n}) beyond cutoff {self.cutoff}", anchor="modes")
        return complex(self.coeffs[m + self.cutoff, n + self.cutoff])


@functools.lru_cache(maxsize=32)
def _grid(tau: complex, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x1, x2 = np.meshgrid(np.arange(n) / n, np.arange(n) / n, indexing="ij")
    return x1, x2, x1 + tau * x2


def grid_points(tau: Modulus, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return _grid(tau.tau, n)


def metric_weight(slot: LineBundleSlot, n: int) -> np.ndarray:
    """exp(-2 pi t (k x2^2 + 2 x2 u2)) on the grid."""
    _, x2, _ = grid_points(slot.tau, n)
    return np.exp(-2 * math.pi * slot.tau.t * (slot.k * x2**2 + 2 * x2 * slot.u.z2))


def sample_theta_section(
    k: int,
    a: int | Characteristic,
    u: LatticeCoordinates,
    n: int,
    pol: TruncationPolicy,
    *,
    form_type: Literal[0, 1] = 0,
    normalized: bool = False,
) -> GridSection:
    """theta_{a/k}(kx + u, k tau) in H^0(L(k, u)), or its dual form in H^1(L(-k, -u)).

    The H^1 representative is conj(theta_{a/k}(kx + u, k tau)) exp(-2 pi t (k x2^2 + 2 x2 u2)) dx-bar,
    multiplied by pi sqrt(2k) / sqrt(t) when ``normalized``.
    """
    if k <= 0:
        raise PreconditionError(f"theta bases need k > 0, got {k}", anchor="basis")
    tau = u.tau
    char = a if isinstance(a, Characteristic) else Characteristic.of(a, k)
    _, _, x = grid_points(tau, n)
    values = theta_char_grid(char.value, k * x + u.value, tau.scaled(k), pol)
    slot = LineBundleSlot(k=k, u=u)
    if form_type == 0:
        return GridSection(bundle=slot, samples=values)
    values = np.conj(values) * metric_weight(slot, n)
    if normalized:
        values = values * (math.pi * math.sqrt(2 * k) / math.sqrt(tau.t))
    return GridSection(bundle=slot.dual(), samples=values, form_type=1)


def quad_inner_product(f: GridSection, g: GridSection) -> complex:
    """Trapezoidal rule for the hermitian product of two sections (or two forms) of the same slot."""
    if f.form_type != g.form_type or f.n != g.n:
        raise SlotMismatchError("inner product needs equal form types and grids", anchor="inner-product")
    if f.bundle.k != g.bundle.k or abs(f.bundle.u.z1 - g.bundle.u.z1) > 1e-12 or abs(f.bundle.u.z2 - g.bundle.u.z2) > 1e-12:
        raise SlotMismatchError(f"sections live on L({f.bundle.k}, .) and L({g.bundle.k}, .)", anchor="inner-product")
    return complex(np.mean(f.samples * np.conj(g.samples) * metric_weight(f.bundle, f.n)))


def mode_section(u: LatticeCoordinates, m: int, n: int, grid_n: int, form_type: Literal[0, 1] = 0) -> GridSection:
    """phi_{u,m,n} sampled on the grid."""
    x1, x2, _ = grid_points(u.tau, grid_n)
    values = np.exp(2j * math.pi * (m * x1 + (n - u.value) * x2))
    return GridSection(bundle=LineBundleSlot(k=0, u=u), samples=values, form_type=form_type)


def _eigenvalues(u: LatticeCoordinates, cutoff: int) -> np.ndarray:
    tau = u.tau
    m, n = np.meshgrid(np.arange(-cutoff, cutoff + 1), np.arange(-cutoff, cutoff + 1), indexing="ij")
    return (math.pi / tau.t) * (m * tau.tau - n + u.value)


def mode_coefficients(section: GridSection, cutoff: int) -> FourierModeL0u:
    """Expand a section of L(0, u) on phi_{u,m,n}; modes beyond the cutoff must be negligible."""
    if section.bundle.k != 0:
        raise SlotMismatchError(f"mode expansion needs degree 0, got {section.bundle.k}", anchor="modes")
    if 2 * cutoff + 1 > section.n:
        raise PreconditionError(f"cutoff {cutoff} needs a grid larger than {section.n}", anchor="modes")
    u = section.bundle.u
    _, x2, _ = grid_points(u.tau, section.n)
    spectrum = np.fft.fft2(section.samples * np.exp(2j * math.pi * u.value * x2)) / section.n**2
    index = np.arange(-cutoff, cutoff + 1) % section.n
    kept = spectrum[np.ix_(index, index)]
    total = np.max(np.abs(spectrum))
    dropped = spectrum.copy()
    dropped[np.ix_(index, index)] = 0
    if total and np.max(np.abs(dropped)) > TAIL_TOLERANCE * max(total, 1.0):
        raise TruncationError(
            f"modes beyond {cutoff} carry {np.max(np.abs(dropped)):.3g}; raise the cutoff or the grid", anchor="modes"
        )
    return FourierModeL0u(u=u, coeffs=kept)


def synthesize(modes: FourierModeL0u, grid_n: int, form_type: Literal[0, 1] = 0) -> GridSection:
    """Grid values of sum c_{m,n} phi_{u,m,n}."""
    u, cutoff = modes.u, modes.cutoff
    spectrum = np.zeros((grid_n, grid_n), dtype=complex)
    index = np.arange(-cutoff, cutoff + 1) % grid_n
    spectrum[np.ix_(index, index)] = modes.coeffs
    _, x2, _ = grid_points(u.tau, grid_n)
    values = np.fft.ifft2(spectrum) * grid_n**2 * np.exp(-2j * math.pi * u.value * x2)
    return GridSection(bundle=LineBundleSlot(k=0, u=u), samples=values, form_type=form_type)


def dbar_apply(section: GridSection, cutoff: int) -> GridSection:
    modes = mode_coefficients(section, cutoff)
    image = modes.model_copy(update={"coeffs": modes.coeffs * _eigenvalues(modes.u, cutoff)})
    return synthesize(image, section.n, form_type=1)


def dbar_inverse_L0u(rhs: GridSection, cutoff: int, pole_margin: float = 1e-3) -> GridSection:
    """The unique section F of L(0, u) with dbar F = rhs, for u off the lattice."""
    if rhs.form_type != 1:
        raise SlotMismatchError("dbar^-1 acts on (0,1)-forms", anchor="dbar")
    u = rhs.bundle.u
    if u.lattice_distance() < pole_margin:
        raise PoleProximityError(f"L(0, {u.value}) has harmonic forms; dbar is not invertible", anchor="dbar")
    modes = mode_coefficients(rhs, cutoff)
    preimage = modes.model_copy(update={"coeffs": modes.coeffs / _eigenvalues(u, cutoff)})
    return synthesize(preimage, rhs.n, form_type=0)


# ---------------------------------------------------------------------------
# Harmonic projection and the transferred products
# ---------------------------------------------------------------------------


def harmonic_basis(slot: LineBundleSlot, form_type: Literal[0, 1], n: int, pol: TruncationPolicy) -> list[GridSection]:
    """Theta bases of H^0(L(k, u)) for k > 0 and H^1(L(-k, -u)) for k > 0; empty otherwise."""
    if form_type == 0 and slot.k > 0:
        return [sample_theta_section(slot.k, e, slot.u, n, pol) for e in range(slot.k)]
    if form_type == 1 and slot.k < 0:
        return [sample_theta_section(-slot.k, e, -slot.u, n, pol, form_type=1) for e in range(-slot.k)]
    return []


def harmonic_coefficients(section: GridSection, pol: TruncationPolicy) -> list[complex]:
    basis = harmonic_basis(section.bundle, section.form_type, section.n, pol)
    return [quad_inner_product(section, b) / quad_inner_product(b, b) for b in basis]


def harmonic_projection(section: GridSection, pol: TruncationPolicy) -> GridSection:
    basis = harmonic_basis(section.bundle, section.form_type, section.n, pol)
    result = section.zero()
    for b in basis:
        result = result.model_copy(
            update={"samples": result.samples + (quad_inner_product(section, b) / quad_inner_product(b, b)) * b.samples}
        )
    return result


def m2_sections(x1: GridSection, x2: GridSection, pol: TruncationPolicy) -> GridSection:
    return harmonic_projection(x1 * x2, pol)


def _q_of_product(first: GridSection, second: GridSection, cutoff: int) -> Optional[GridSection]:
    """Q(first * second) for harmonic arguments; None where it vanishes."""
    if first.form_type + second.form_type != 1:
        return None
    section = first * second
    if section.bundle.k != 0:
        raise SlotMismatchError(f"Q is only realized on degree-0 slots, got L({section.bundle.k}, .)", anchor="Q")
    return dbar_inverse_L0u(section, cutoff)


def m3_sections(x1: GridSection, x2: GridSection, x3: GridSection, cutoff: int, pol: TruncationPolicy) -> GridSection:
    """pr(Q(x1 x2) x3 - (-1)^{|x1|} x1 Q(x2 x3)) for harmonic arguments."""
    bundle = x1.bundle.tensor(x2.bundle).tensor(x3.bundle)
    form_type = x1.form_type + x2.form_type + x3.form_type - 1
    if form_type not in (0, 1):
        return GridSection(bundle=bundle, samples=np.zeros_like(x1.samples), form_type=0)
    total = np.zeros_like(x1.samples, dtype=complex)
    left = _q_of_product(x1, x2, cutoff)
    if left is not None:
        total += (left * x3).samples
    right = _q_of_product(x2, x3, cutoff)
    if right is not None:
        total -= (-1) ** x1.form_type * (x1 * right).samples
    return harmonic_projection(GridSection(bundle=bundle, samples=total, form_type=form_type), pol)


def query_sections(query: TripleProductQuery, n: int, pol: TruncationPolicy) -> tuple[GridSection, GridSection, GridSection]:
    """alpha (normalized, in H^1(L(-k, 0))), beta1 in H^0(L(k, u)), beta2 in H^0(L(l, v))."""
    origin = LatticeCoordinates(z1=0.0, z2=0.0, tau=query.tau)
    alpha = sample_theta_section(query.k, query.a, origin, n, pol, form_type=1, normalized=True)
    beta1 = sample_theta_section(query.k, query.b, query.u, n, pol)
    beta2 = sample_theta_section(query.l, query.c, query.v, n, pol)
    return alpha, beta1, beta2


def m3_oracle(query: TripleProductQuery, n: int, cutoff: int, pol: TruncationPolicy, *, reversed_order: bool = False) -> complex:
    """Coefficient of theta_{d/l}(lx + w) in m3(alpha, beta1, beta2), or in m3(beta2, beta1, alpha)."""
    if query.u.lattice_distance() < 1e-3:
        raise PoleProximityError(f"u = {query.u.value} is on the lattice", anchor="pole")
    alpha, beta1, beta2 = query_sections(query, n, pol)
    args = (beta2, beta1, alpha) if reversed_order else (alpha, beta1, beta2)
    product = m3_sections(*args, cutoff, pol)
    return harmonic_coefficients(product, pol)[query.d]


# ---------------------------------------------------------------------------
# Serre duality
# ---------------------------------------------------------------------------


def area_form_factor(tau: Modulus) -> complex:
    """dx ^ dx-bar = c dx1 ^ dx2 with c = det [[1, tau], [1, conj(tau)]]."""
    return complex(np.linalg.det(np.array([[1, tau.tau], [1, np.conj(tau.tau)]])))


def serre_pair(first: GridSection, second: GridSection) -> complex:
    """Integral of dx ^ first ^ second for one (0,1)-form and one section of the dual slot."""
    if first.form_type + second.form_type != 1 or not first.bundle.is_dual_to(second.bundle):
        raise SlotMismatchError("Serre pairing needs a (0,1)-form and a section of the dual bundle", anchor="serre")
    return area_form_factor(first.tau) * complex(np.mean(first.samples * second.samples))


class SerreConfiguration(BaseModel):
    """Theta-basis arguments for the cyclic identity at n = 2 or n = 3."""

    model_config = ConfigDict(frozen=True)

    n: Literal[2, 3]
    k: int
    l: int
    a: int = 0
    b: int = 0
    c: int = 0
    e: int = 0
    u: LatticeCoordinates
    v: LatticeCoordinates


def serre_cyclic_sides(args: Sequence[GridSection], cutoff: int, pol: TruncationPolicy) -> tuple[complex, complex]:
    """<m_n(a1..an), a_{n+1}> and (-1)^{n(|a1| + 1)} <a1, m_n(a2..a_{n+1})>."""
    n = len(args) - 1
    if n == 2:
        left, right = m2_sections(args[0], args[1], pol), m2_sections(args[1], args[2], pol)
    elif n == 3:
        left, right = m3_sections(*args[:3], cutoff, pol), m3_sections(*args[1:], cutoff, pol)
    else:
        raise PreconditionError(f"cyclic check implemented for n = 2, 3, got {n}", anchor="serre")
    sign = (-1) ** (n * (args[0].form_type + 1))
    return serre_pair(left, args[-1]), sign * serre_pair(args[0], right)


def configuration_sections(config: SerreConfiguration, grid_n: int, pol: TruncationPolicy) -> list[GridSection]:
    tau = config.u.tau
    w = config.u + config.v
    if config.n == 2:
        return [
            sample_theta_section(config.k, config.b, config.u, grid_n, pol),
            sample_theta_section(config.l, config.c, config.v, grid_n, pol),
            sample_theta_section(config.k + config.l, config.e, w, grid_n, pol, form_type=1),
        ]
    origin = LatticeCoordinates(z1=0.0, z2=0.0, tau=tau)
    return [
        sample_theta_section(config.k, config.a, origin, grid_n, pol, form_type=1, normalized=True),
        sample_theta_section(config.k, config.b, config.u, grid_n, pol),
        sample_theta_section(config.l, config.c, config.v, grid_n, pol),
        sample_theta_section(config.l, config.e, w, grid_n, pol, form_type=1),
    ]


def serre_cyclic_check(config: SerreConfiguration, grid_n: int, cutoff: int, pol: TruncationPolicy) -> float:
    lhs, rhs = serre_cyclic_sides(configuration_sections(config, grid_n, pol), cutoff, pol)
    return abs(lhs - rhs)


def random_band_limited(
    rng: np.random.Generator, u: LatticeCoordinates, grid_n: int, bandwidth: int = 3, form_type: Literal[0, 1] = 1
) -> GridSection:
    coeffs = rng.normal(size=(2 * bandwidth + 1,) * 2) + 1j * rng.normal(size=(2 * bandwidth + 1,) * 2)
    return synthesize(FourierModeL0u(u=u, coeffs=coeffs), grid_n, form_type=form_type)


def q_adjointness_residual(
    rng: np.random.Generator, u: LatticeCoordinates, grid_n: int, cutoff: int, bandwidth: int = 3
) -> float:
    """|int Q(alpha) ^ beta + int alpha ^ Q(beta)| for random (0,1)-forms on L(0, u) and L(0, -u)."""
    alpha = random_band_limited(rng, u, grid_n, bandwidth)
    beta = random_band_limited(rng, -u, grid_n, bandwidth)
    lhs = serre_pair(dbar_inverse_L0u(alpha, cutoff), beta)
    rhs = serre_pair(alpha, dbar_inverse_L0u(beta, cutoff))
    return abs(lhs + rhs) / max(1.0, abs(lhs))
