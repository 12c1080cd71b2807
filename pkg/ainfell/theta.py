"""Theta functions with rational characteristics.

theta_r(x, tau) = sum_n exp(pi i tau (n + r)^2 + 2 pi i (n + r) x)

Series are truncated symmetrically with a certified tail bound: for a term
magnitude exp(-a m^2 + b |m|), the tail beyond |m| > M with M >= b / 2a is
dominated by a geometric series of ratio exp(-a(2M + 3) + b), giving

    tail <= 2 exp(-a (M+1)^2 + b (M+1)) / (1 - exp(-a (2M + 3) + b)).

For theta, a = pi t and b = 2 pi |Im x|.
"""

import logging
import math
from fractions import Fraction
from typing import Literal, NamedTuple

import mpmath
import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from ainfell.config import TruncationPolicy
from ainfell.errors import InvalidModulusError, TruncationError

logger = logging.getLogger(__name__)

Precision = Literal["double", "extended"]

EXTENDED_DPS = 30


class Modulus(BaseModel):
    model_config = ConfigDict(frozen=True)

    tau: complex

    @model_validator(mode="after")
    def _upper_half_plane(self):
        if not self.tau.imag > 0:
            raise InvalidModulusError(f"Im(tau) must be positive, got tau = {self.tau}", anchor="modulus")
        return self

    @property
    def t(self) -> float:
        return self.tau.imag

    def scaled(self, factor: float) -> "Modulus":
        return Modulus(tau=self.tau * factor)


class Characteristic(BaseModel):
    """A rational number in Q/Z, stored as a reduced fraction in [0, 1)."""

    model_config = ConfigDict(frozen=True)

    numerator: int = 0
    denominator: int = 1

    @model_validator(mode="before")
    @classmethod
    def _reduce(cls, data):
        if isinstance(data, dict):
            den = int(data.get("denominator", 1))
            if den <= 0:
                raise ValueError("denominator must be positive")
            frac = Fraction(int(data.get("numerator", 0)), den) % 1
            return {"numerator": frac.numerator, "denominator": frac.denominator}
        return data

    @classmethod
    def of(cls, numerator: int, denominator: int = 1) -> "Characteristic":
        return cls(numerator=numerator, denominator=denominator)

    @classmethod
    def parse(cls, text: str) -> "Characteristic":
        """Parse ``"P/Q"`` or ``"P"``."""
        num, _, den = text.partition("/")
        return cls.of(int(num), int(den) if den else 1)

    @property
    def value(self) -> float:
        return self.numerator / self.denominator

    def __str__(self) -> str:
        return f"{self.numerator}/{self.denominator}"


class ThetaEvaluation(NamedTuple):
    value: complex
    terms_used: int | None


def gaussian_cutoff(a: float, b: float, eps: float, max_terms: int, log_scale: float = 0.0) -> int:
    """Least M >= b / 2a whose two-sided tail bound for exp(-a m^2 + b|m|), times exp(log_scale), is below eps."""
    log_eps = math.log(eps) - log_scale
    m = max(0, math.ceil(b / (2 * a)))
    while m <= max_terms:
        ratio_log = -a * (2 * m + 3) + b
        if ratio_log < 0:
            log_tail = math.log(2.0) - a * (m + 1) ** 2 + b * (m + 1) - math.log1p(-math.exp(ratio_log))
            if log_tail < log_eps:
                return m
        m += 1
    raise TruncationError(
        f"tail bound {eps:g} not reached within {max_terms} terms (a={a:g}, b={b:g})",
        anchor="truncation",
    )


def _fsum_complex(values) -> complex:
    values = list(values)
    return complex(math.fsum(v.real for v in values), math.fsum(v.imag for v in values))


def _series(shift: float, x: complex, tau: Modulus, pol: TruncationPolicy) -> ThetaEvaluation:
    radius = gaussian_cutoff(math.pi * tau.t, 2 * math.pi * abs(x.imag), pol.eps, pol.max_terms)
    # one extra index on each side so every |n + shift| <= radius is covered
    indices = [0]
    for n in range(1, radius + 2):
        indices.extend((n, -n))
    terms = []
    for n in indices:
        m = n + shift
        terms.append(np.exp(1j * math.pi * tau.tau * m * m + 2j * math.pi * m * x))
    return ThetaEvaluation(_fsum_complex(terms), len(indices))


def _extended(shift: float, x: complex, tau: Modulus) -> complex:
    with mpmath.workdps(EXTENDED_DPS):
        shift_mp = mpmath.mpf(shift)
        tau_mp = mpmath.mpc(tau.tau)
        x_mp = mpmath.mpc(x)
        nome = mpmath.exp(1j * mpmath.pi * tau_mp)
        prefactor = mpmath.exp(1j * mpmath.pi * tau_mp * shift_mp**2 + 2j * mpmath.pi * shift_mp * x_mp)
        value = prefactor * mpmath.jtheta(3, mpmath.pi * (x_mp + shift_mp * tau_mp), nome)
        return complex(value)


def theta_char_eval(
    r: Characteristic, x: complex, tau: Modulus, pol: TruncationPolicy, precision: Precision = "double"
) -> ThetaEvaluation:
    x = complex(x)
    if precision == "extended":
        return ThetaEvaluation(_extended(r.value, x, tau), None)
    return _series(r.value, x, tau, pol)


def theta_char(
    r: Characteristic, x: complex, tau: Modulus, pol: TruncationPolicy, precision: Precision = "double"
) -> complex:
    return theta_char_eval(r, x, tau, pol, precision).value


def theta(x: complex, tau: Modulus, pol: TruncationPolicy, precision: Precision = "double") -> complex:
    return theta_char_eval(Characteristic(), x, tau, pol, precision).value


def _neumaier(rows: np.ndarray) -> np.ndarray:
    """Compensated column sums of a real 2-d array, accumulated row by row."""
    total = np.zeros(rows.shape[1])
    carry = np.zeros(rows.shape[1])
    for row in rows:
        step = total + row
        carry += np.where(np.abs(total) >= np.abs(row), (total - step) + row, (row - step) + total)
        total = step
    return total + carry


def theta_char_grid(shift: float, x: np.ndarray, tau: Modulus, pol: TruncationPolicy) -> np.ndarray:
    """Vectorized theta_shift(x, tau) over an array of arguments.

    Same tail bound, term order (0, 1, -1, 2, -2, ...) and compensated accumulation as the scalar path.
    """
    x = np.asarray(x, dtype=complex)
    radius = gaussian_cutoff(math.pi * tau.t, 2 * math.pi * float(np.max(np.abs(x.imag), initial=0.0)), pol.eps, pol.max_terms)
    n = np.zeros(2 * radius + 3, dtype=int)
    n[1::2] = np.arange(1, radius + 2)
    n[2::2] = -np.arange(1, radius + 2)
    m = n + shift
    phases = 1j * math.pi * tau.tau * m**2
    terms = np.exp(phases[:, None] + 2j * math.pi * m[:, None] * x.reshape(1, -1))
    return (_neumaier(terms.real) + 1j * _neumaier(terms.imag)).reshape(x.shape)


def shifted_form_residual(r: Characteristic, x: complex, tau: Modulus, pol: TruncationPolicy) -> float:
    """|theta_r(x) - exp(pi i tau r^2 + 2 pi i r x) theta(x + r tau)|."""
    lhs = theta_char(r, x, tau, pol)
    rhs = np.exp(1j * math.pi * tau.tau * r.value**2 + 2j * math.pi * r.value * x) * theta(x + r.value * tau.tau, tau, pol)
    return abs(lhs - rhs)


def quasi_periodicity_residual(x: complex, tau: Modulus, pol: TruncationPolicy) -> float:
    """|theta(x + tau) - exp(-pi i tau - 2 pi i x) theta(x)|."""
    lhs = theta(x + tau.tau, tau, pol)
    rhs = np.exp(-1j * math.pi * tau.tau - 2j * math.pi * x) * theta(x, tau, pol)
    return abs(lhs - rhs)


def addition_formula_terms(
    k: int, l: int, b: int, c: int, u: complex, v: complex, x: complex, tau: Modulus, pol: TruncationPolicy,
    precision: Precision = "double",
) -> tuple[complex, complex]:
    """Both sides of the product formula for theta_{b/k}(kx+u, k tau) theta_{c/l}(lx+v, l tau)."""
    from ainfell.elliptic_products import phi2, phi3, t_set_enumerate

    r = math.gcd(k, l)
    big_n = (k + l) * k * l // (r * r)
    w = u + v
    lhs = theta_char(Characteristic.of(b, k), k * x + u, tau.scaled(k), pol, precision) * theta_char(
        Characteristic.of(c, l), l * x + v, tau.scaled(l), pol, precision
    )
    terms = []
    for sigma in t_set_enumerate(k, l, b, c):
        left = theta_char(
            Characteristic.of(phi2(sigma, k, l), big_n), ((k + l) * u - k * w) / r, tau.scaled(big_n), pol, precision
        )
        right = theta_char(Characteristic.of(phi3(sigma, k, l), k + l), (k + l) * x + w, tau.scaled(k + l), pol, precision)
        terms.append(left * right)
    return lhs, _fsum_complex(terms)


def addition_formula_residual(
    k: int, l: int, b: int, c: int, u: complex, v: complex, x: complex, tau: Modulus, pol: TruncationPolicy,
    precision: Precision = "double",
) -> float:
    lhs, rhs = addition_formula_terms(k, l, b, c, u, v, x, tau, pol, precision)
    return abs(lhs - rhs)
