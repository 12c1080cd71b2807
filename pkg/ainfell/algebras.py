"""Factories for concrete dg-algebras used by the verification suites and tests."""

import itertools
from typing import Mapping, Optional

import numpy as np

from ainfell.ainf_core import DgAlgebra, GradedBasis
from ainfell.errors import DgAlgebraError


def _merge_sign(left: tuple[int, ...], right: tuple[int, ...]) -> int:
    """Sign of the shuffle sorting left + right, for degree-one generators."""
    inversions = sum(1 for a in left for b in right if a > b)
    return -1 if inversions % 2 else 1


def exterior_algebra(n_generators: int, d_generators: Optional[Mapping[int, Mapping[tuple[int, ...], complex]]] = None) -> DgAlgebra:
    """Exterior algebra on degree-one generators x0..x{n-1}.

    ``d_generators[g]`` maps monomials (sorted index tuples) to coefficients of d(x_g);
    the differential is extended to all monomials by the Leibniz rule.
    """
    monomials = [m for k in range(n_generators + 1) for m in itertools.combinations(range(n_generators), k)]
    index = {m: i for i, m in enumerate(monomials)}
    labels = tuple(("".join(f"x{g}" for g in m) or "1", len(m)) for m in monomials)
    n = len(monomials)
    mult = np.zeros((n, n, n), dtype=complex)
    for a, b in itertools.product(monomials, repeat=2):
        if set(a) & set(b):
            continue
        mult[index[a], index[b], index[tuple(sorted(a + b))]] = _merge_sign(a, b)

    d = np.zeros((n, n), dtype=complex)
    images = {}
    for g in range(n_generators):
        vec = np.zeros(n, dtype=complex)
        for mono, coeff in (d_generators or {}).get(g, {}).items():
            vec[index[tuple(mono)]] += coeff
        images[g] = vec

    def unit(m):
        vec = np.zeros(n, dtype=complex)
        vec[index[m]] = 1.0
        return vec

    def product(x, y):
        return np.einsum("i,j,ijk->k", x, y, mult)

    for m in monomials:
        total = np.zeros(n, dtype=complex)
        for pos, g in enumerate(m):
            left = unit(m[:pos])
            right = unit(m[pos + 1 :])
            total += (-1) ** pos * product(product(left, images[g]), right)
        d[:, index[m]] = total
    return DgAlgebra(basis=GradedBasis(labels=labels), mult=mult, d=d, inner=np.eye(n, dtype=complex))


def heisenberg_algebra(c: complex = 1.0) -> DgAlgebra:
    """Lambda(x, y, z) with dz = c xy; cohomology has a non-trivial Massey product <x, x, y>."""
    return exterior_algebra(3, {2: {(0, 1): c}})


def two_term_complex() -> DgAlgebra:
    """C --1--> C in degrees 0, 1 with zero multiplication."""
    mult = np.zeros((2, 2, 2), dtype=complex)
    d = np.array([[0, 0], [1, 0]], dtype=complex)
    return DgAlgebra(basis=GradedBasis(labels=(("e0", 0), ("e1", 1))), mult=mult, d=d, inner=np.eye(2, dtype=complex))


def upper_triangular_algebra(line_degrees: tuple[int, ...], x: np.ndarray) -> DgAlgebra:
    """Upper-triangular endomorphisms of a graded vector space with d = [x, -].

    ``x`` must be strictly upper-triangular, of degree one, and square to zero.
    """
    size = len(line_degrees)
    pairs = [(i, j) for i in range(size) for j in range(i, size)]
    index = {p: k for k, p in enumerate(pairs)}
    labels = tuple((f"E{i}{j}", line_degrees[i] - line_degrees[j]) for i, j in pairs)
    n = len(pairs)
    mult = np.zeros((n, n, n), dtype=complex)
    for (i, j), (k, l) in itertools.product(pairs, repeat=2):
        if j == k:
            mult[index[(i, j)], index[(k, l)], index[(i, l)]] = 1.0

    def as_vector(matrix):
        return np.array([matrix[i, j] for i, j in pairs], dtype=complex)

    d = np.zeros((n, n), dtype=complex)
    for (i, j), (_, deg) in zip(pairs, labels):
        e = np.zeros((size, size), dtype=complex)
        e[i, j] = 1.0
        d[:, index[(i, j)]] = as_vector(x @ e - (-1) ** deg * e @ x)
    return DgAlgebra(basis=GradedBasis(labels=labels), mult=mult, d=d, inner=np.eye(n, dtype=complex))


def random_graded_change(rng: np.random.Generator, basis: GradedBasis) -> np.ndarray:
    """Random invertible degree-preserving matrix close to the identity."""
    n = basis.dim
    deg = basis.degrees
    noise = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    change = np.eye(n) + 0.3 * noise * (deg[:, None] == deg[None, :])
    return change.astype(complex)


def random_inner_product(rng: np.random.Generator, basis: GradedBasis) -> np.ndarray:
    """Random positive definite Hermitian form making distinct degrees orthogonal."""
    a = random_graded_change(rng, basis)
    return a.conj().T @ a


def transport_algebra(algebra: DgAlgebra, change: np.ndarray) -> DgAlgebra:
    """The isomorphic dg-algebra obtained by the change of basis x -> change @ x."""
    inverse = np.linalg.inv(change)
    mult = np.einsum("ai,bj,abc,kc->ijk", inverse, inverse, algebra.mult, change)
    d = change @ algebra.d @ inverse
    inner = None
    if algebra.inner is not None:
        inner = inverse.conj().T @ algebra.inner @ inverse
    return DgAlgebra(basis=algebra.basis, mult=mult, d=d, inner=inner)


def top_form_pairing(algebra: DgAlgebra) -> np.ndarray:
    """Bilinear form <a, b> = coefficient of the top-degree basis element in ab."""
    top = int(np.argmax(algebra.basis.degrees))
    return algebra.mult[:, :, top].copy()


def truncate_top(algebra: DgAlgebra) -> DgAlgebra:
    """Quotient by the top-degree part, an ideal whenever d does not reach into it."""
    deg = algebra.basis.degrees
    keep = np.flatnonzero(deg < deg.max())
    dropped = np.flatnonzero(deg == deg.max())
    if np.any(algebra.d[np.ix_(dropped, keep)]):
        raise DgAlgebraError("the top-degree part is not a dg-ideal")
    labels = tuple(algebra.basis.labels[i] for i in keep)
    inner = None if algebra.inner is None else algebra.inner[np.ix_(keep, keep)]
    return DgAlgebra(
        basis=GradedBasis(labels=labels),
        mult=algebra.mult[np.ix_(keep, keep, keep)],
        d=algebra.d[np.ix_(keep, keep)],
        inner=inner,
    )


def truncated_heisenberg_algebra(c: complex = 1.0) -> DgAlgebra:
    """Heisenberg algebra modulo x0x1x2; <x0, x0, x1> = x0x2 / c survives the quotient."""
    return truncate_top(heisenberg_algebra(c))


NON_FORMAL_FAMILIES = (heisenberg_algebra, truncated_heisenberg_algebra)


def random_dg_algebra(rng: np.random.Generator) -> DgAlgebra:
    """A random non-formal algebra of dimension at most 8, in a random basis with a random metric.

    Every family carries a non-zero triple Massey product, so the transferred m3 never vanishes.
    """
    family = NON_FORMAL_FAMILIES[int(rng.integers(len(NON_FORMAL_FAMILIES)))]
    base = family(complex(rng.uniform(0.5, 2.0) * np.exp(2j * np.pi * rng.uniform())))
    moved = transport_algebra(base, random_graded_change(rng, base.basis))
    return moved.with_inner(random_inner_product(rng, base.basis))


def cyclic_instance(rng: np.random.Generator) -> tuple[DgAlgebra, np.ndarray]:
    """Heisenberg algebra with its Poincare pairing, transported along a random graded change of basis.

    The standard metric makes the pairing Q-adjoint; transporting metric and pairing together keeps it so.
    """
    base = heisenberg_algebra(complex(rng.uniform(0.5, 2.0)))
    pairing = top_form_pairing(base)
    change = random_graded_change(rng, base.basis)
    inverse = np.linalg.inv(change)
    return transport_algebra(base, change), inverse.T @ pairing @ inverse
