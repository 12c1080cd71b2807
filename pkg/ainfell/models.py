"""JSON documents read and written by the library and the command line."""

import json
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field

from ainfell.ainf_core import DgAlgebra, GradedBasis
from ainfell.elliptic_products import HomotopyCoefficients, TripleProductQuery

Pair = tuple[float, float]


def pair(z: complex) -> Pair:
    z = complex(z)
    return (z.real, z.imag)


def unpair(p: Pair) -> complex:
    return complex(p[0], p[1])


class BasisEntry(BaseModel):
    name: str
    degree: int


class AlgebraDocument(BaseModel):
    """Sparse structure constants: mult entries [i, j, k, re, im] mean e_i e_j contains (re + i im) e_k."""

    basis: list[BasisEntry]
    mult: list[tuple[int, int, int, float, float]] = Field(default_factory=list)
    d: list[tuple[int, int, float, float]] = Field(default_factory=list)
    inner: Optional[list[list[Pair]]] = None

    @classmethod
    def from_algebra(cls, algebra: DgAlgebra, tol: float = 0.0) -> "AlgebraDocument":
        mult = [
            (int(i), int(j), int(k), *pair(algebra.mult[i, j, k]))
            for i, j, k in zip(*np.nonzero(np.abs(algebra.mult) > tol))
        ]
        d = [(int(i), int(j), *pair(algebra.d[i, j])) for i, j in zip(*np.nonzero(np.abs(algebra.d) > tol))]
        inner = None
        if algebra.inner is not None:
            inner = [[pair(z) for z in row] for row in algebra.inner]
        return cls(
            basis=[BasisEntry(name=name, degree=deg) for name, deg in algebra.basis.labels],
            mult=mult,
            d=d,
            inner=inner,
        )

    def to_algebra(self) -> DgAlgebra:
        n = len(self.basis)
        mult = np.zeros((n, n, n), dtype=complex)
        for i, j, k, re, im in self.mult:
            mult[i, j, k] = complex(re, im)
        d = np.zeros((n, n), dtype=complex)
        for i, j, re, im in self.d:
            d[i, j] = complex(re, im)
        inner = None
        if self.inner is not None:
            inner = np.array([[unpair(p) for p in row] for row in self.inner], dtype=complex)
        basis = GradedBasis(labels=tuple((entry.name, entry.degree) for entry in self.basis))
        return DgAlgebra(basis=basis, mult=mult, d=d, inner=inner)

    @classmethod
    def load(cls, path: Path) -> "AlgebraDocument":
        with open(path, "r") as f:
            return cls.model_validate(json.load(f))


class QueryRecord(BaseModel):
    k: int
    l: int
    a: int
    b: int
    c: int
    d: int
    u: Pair
    v: Pair
    tau: Pair

    @classmethod
    def from_query(cls, query: TripleProductQuery) -> "QueryRecord":
        return cls(
            k=query.k, l=query.l, a=query.a, b=query.b, c=query.c, d=query.d,
            u=pair(query.u.value), v=pair(query.v.value), tau=pair(query.tau.tau),
        )


class FitRecord(BaseModel):
    """Fitted homotopy coefficients f^d_q for the d of one query."""

    residual: float
    coeffs: list[tuple[int, float, float]]

    @classmethod
    def from_coefficients(cls, coeffs: HomotopyCoefficients, d: int) -> "FitRecord":
        row = coeffs.coefficients[d]
        return cls(residual=coeffs.fit_residual, coeffs=[(q, *pair(f)) for q, f in sorted(row.items())])


class ProductRecord(BaseModel):
    query: QueryRecord
    G: Optional[Pair] = None
    F: Optional[Pair] = None
    oracle: Optional[Pair] = None
    fit: Optional[FitRecord] = None


class HomotopyRecord(BaseModel):
    k: int
    l: int
    a: int
    w: Pair
    tau: Pair
    coefficients: dict[int, list[tuple[int, float, float]]]
    fit_residual: float
    fiber_spread: float
    condition: float
    samples: int
    end_to_end_residual: Optional[float] = None

    @classmethod
    def from_coefficients(cls, coeffs: HomotopyCoefficients, end_to_end: Optional[float] = None) -> "HomotopyRecord":
        return cls(
            k=coeffs.k, l=coeffs.l, a=coeffs.a,
            w=pair(coeffs.w.value), tau=pair(coeffs.tau.tau),
            coefficients={d: [(q, *pair(f)) for q, f in sorted(row.items())] for d, row in sorted(coeffs.coefficients.items())},
            fit_residual=coeffs.fit_residual,
            fiber_spread=coeffs.fiber_spread,
            condition=coeffs.condition,
            samples=coeffs.samples,
            end_to_end_residual=end_to_end,
        )


class CheckResult(BaseModel):
    name: str
    anchor: str
    residual: float
    tolerance: float
    passed: bool
    detail: Optional[str] = None


class SuiteReport(BaseModel):
    suite: str
    seed: int
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failures(self) -> list[CheckResult]:
        return [check for check in self.checks if not check.passed]
