"""Finite-dimensional dg-algebras, Hodge data and homotopy transfer of A-infinity structures.

Tensor layout used throughout: an operation with ``k`` inputs on a space of
dimension ``h`` with values in a space of dimension ``D`` is an array of shape
``(h,) * k + (D,)``; entry ``[i1, ..., ik, o]`` is the ``o``-th coordinate of
the operation applied to basis vectors ``i1, ..., ik``.  The differential is
kept as an operator matrix (``d @ x``); its tensor form is ``d.T``.
"""

import itertools
import logging
import string
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from ainfell.errors import DgAlgebraError, HodgeError, PreconditionError, SlotMismatchError

logger = logging.getLogger(__name__)

_LETTERS = string.ascii_letters
_STRUCTURE_TOL = 1e-12


class GradedBasis(BaseModel):
    model_config = ConfigDict(frozen=True)

    labels: tuple[tuple[str, int], ...]

    @model_validator(mode="after")
    def _distinct(self):
        names = [name for name, _ in self.labels]
        if len(set(names)) != len(names):
            raise DgAlgebraError("basis labels must be distinct")
        return self

    @property
    def dim(self) -> int:
        return len(self.labels)

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.labels]

    @property
    def degrees(self) -> np.ndarray:
        return np.array([deg for _, deg in self.labels], dtype=int)

    @property
    def parities(self) -> np.ndarray:
        return self.degrees % 2

    def index(self, name: str) -> int:
        return self.names.index(name)


class GradedElement(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    basis: GradedBasis
    coefficients: np.ndarray

    @model_validator(mode="after")
    def _shape(self):
        if self.coefficients.shape != (self.basis.dim,):
            raise SlotMismatchError("coefficient vector does not match the basis")
        return self

    @classmethod
    def basis_vector(cls, basis: GradedBasis, name: str, scale: complex = 1.0) -> "GradedElement":
        coeffs = np.zeros(basis.dim, dtype=complex)
        coeffs[basis.index(name)] = scale
        return cls(basis=basis, coefficients=coeffs)

    @property
    def homogeneous_degree(self) -> Optional[int]:
        support = np.flatnonzero(self.coefficients)
        degrees = set(self.basis.degrees[support].tolist())
        if len(degrees) == 1:
            return degrees.pop()
        return None

    @property
    def parity(self) -> int:
        degree = self.homogeneous_degree
        if degree is None:
            if not np.any(self.coefficients):
                return 0
            raise PreconditionError("parity of a non-homogeneous element is undefined")
        return degree % 2


class DgAlgebra(BaseModel):
    """Graded algebra given by structure constants ``mult[i, j, k]`` (e_i e_j = sum_k mult[i,j,k] e_k),
    a degree +1 differential ``d`` acting on column vectors, and an optional Hermitian inner
    product ``inner`` with <x, y> = y^H inner x.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    basis: GradedBasis
    mult: np.ndarray
    d: np.ndarray
    inner: Optional[np.ndarray] = None

    @model_validator(mode="after")
    def _validate(self):
        n = self.basis.dim
        if self.mult.shape != (n, n, n):
            raise DgAlgebraError(f"mult must have shape {(n, n, n)}, got {self.mult.shape}")
        if self.d.shape != (n, n):
            raise DgAlgebraError(f"d must be square of size {n}, got {self.d.shape}")
        deg = self.basis.degrees
        scale = max(1.0, float(np.max(np.abs(self.mult), initial=0.0)), float(np.max(np.abs(self.d), initial=0.0)))
        tol = _STRUCTURE_TOL * scale**2

        additive = deg[:, None, None] + deg[None, :, None] == deg[None, None, :]
        if np.any(np.abs(self.mult[~additive]) > tol):
            raise DgAlgebraError("multiplication is not degree-additive")
        raising = deg[:, None] == deg[None, :] + 1
        if np.any(np.abs(self.d[~raising]) > tol):
            raise DgAlgebraError("differential does not have degree +1")
        if np.max(np.abs(self.d @ self.d), initial=0.0) > tol:
            raise DgAlgebraError("differential does not square to zero")

        left = np.einsum("ijm,mkn->ijkn", self.mult, self.mult)
        right = np.einsum("jkm,imn->ijkn", self.mult, self.mult)
        if np.max(np.abs(left - right), initial=0.0) > tol * scale:
            raise DgAlgebraError("multiplication is not associative")

        sign = (-1.0) ** self.basis.parities
        d_of_product = np.einsum("ijm,nm->ijn", self.mult, self.d)
        d_left = np.einsum("pi,pjn->ijn", self.d, self.mult)
        d_right = np.einsum("pj,ipn->ijn", self.d, self.mult) * sign[:, None, None]
        if np.max(np.abs(d_of_product - d_left - d_right), initial=0.0) > tol * scale:
            raise DgAlgebraError("differential is not a derivation of the product")

        if self.inner is not None:
            self._validate_inner(tol)
        return self

    def _validate_inner(self, tol: float) -> None:
        h = self.inner
        if h.shape != self.d.shape:
            raise DgAlgebraError("inner product has the wrong shape")
        if np.max(np.abs(h - h.conj().T)) > tol:
            raise DgAlgebraError("inner product is not Hermitian")
        deg = self.basis.degrees
        if np.any(np.abs(h[deg[:, None] != deg[None, :]]) > tol):
            raise DgAlgebraError("inner product must make distinct degrees orthogonal")
        smallest = float(np.min(np.linalg.eigvalsh(h)))
        if smallest <= 1e-10:
            raise DgAlgebraError(f"inner product is not positive definite (smallest eigenvalue {smallest:.3e})")

    @property
    def dim(self) -> int:
        return self.basis.dim

    def product(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.einsum("i,j,ijk->k", x, y, self.mult)

    def element(self, coefficients) -> GradedElement:
        return GradedElement(basis=self.basis, coefficients=np.asarray(coefficients, dtype=complex))

    def with_inner(self, inner: np.ndarray) -> "DgAlgebra":
        return DgAlgebra(basis=self.basis, mult=self.mult, d=self.d, inner=inner)


class HodgeData(BaseModel):
    """Green operator, homotopy Q = d*G and harmonic projector pr = 1 - Qd - dQ.

    ``embedding`` (D x h) holds an orthonormal harmonic basis as columns and
    ``coordinates`` (h x D) maps a vector to the coordinates of its harmonic part.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    G: np.ndarray
    Q: np.ndarray
    pr: np.ndarray
    embedding: np.ndarray
    coordinates: np.ndarray
    harmonic_degrees: tuple[int, ...]

    @property
    def harmonic_basis(self) -> GradedBasis:
        return GradedBasis(labels=tuple((f"h{i}", deg) for i, deg in enumerate(self.harmonic_degrees)))


def hodge_data(algebra: DgAlgebra, rank_tol: float = 1e-10) -> HodgeData:
    if algebra.inner is None:
        raise HodgeError("hodge_data needs an inner product on the algebra")
    n = algebra.dim
    chol = np.linalg.cholesky(algebra.inner)
    r = chol.conj().T
    r_inv = np.linalg.inv(r)
    d_adj = np.linalg.solve(algebra.inner, algebra.d.conj().T @ algebra.inner)
    laplacian = algebra.d @ d_adj + d_adj @ algebra.d

    # Hermitian in the coordinates where the inner product is standard.
    lap_h = r @ laplacian @ r_inv
    lap_h = (lap_h + lap_h.conj().T) / 2
    evals, evecs = np.linalg.eigh(lap_h)
    scale = max(1.0, float(np.max(np.abs(evals))))
    positive = evals > rank_tol * scale
    green_h = (evecs[:, positive] / evals[positive]) @ evecs[:, positive].conj().T
    green = r_inv @ green_h @ r
    q = d_adj @ green
    pr = np.eye(n) - q @ algebra.d - algebra.d @ q

    deg = algebra.basis.degrees
    columns, rows, degrees = [], [], []
    harm_h = evecs[:, ~positive]
    proj_h = harm_h @ harm_h.conj().T
    for degree in sorted(set(deg.tolist())):
        block = np.flatnonzero(deg == degree)
        sub = proj_h[np.ix_(block, block)]
        w, v = np.linalg.eigh((sub + sub.conj().T) / 2)
        for vec in v[:, w > 0.5].T:
            full = np.zeros(n, dtype=complex)
            full[block] = vec
            columns.append(r_inv @ full)
            rows.append(full.conj() @ r)
            degrees.append(degree)
    embedding = np.array(columns, dtype=complex).T.reshape(n, len(columns))
    coordinates = np.array(rows, dtype=complex).reshape(len(rows), n)
    logger.debug("hodge data: dim %d, harmonic degrees %s", n, degrees)
    return HodgeData(
        G=green, Q=q, pr=pr, embedding=embedding, coordinates=coordinates, harmonic_degrees=tuple(degrees)
    )


def hodge_residuals(algebra: DgAlgebra, hodge: HodgeData) -> dict[str, float]:
    """Norms of the defects of the Hodge identities; all vanish for exact Hodge data."""
    n = algebra.dim
    d, q, pr, g = algebra.d, hodge.Q, hodge.pr, hodge.G
    d_adj = np.linalg.solve(algebra.inner, d.conj().T @ algebra.inner)
    laplacian = d @ d_adj + d_adj @ d
    return {
        "decomposition": float(np.max(np.abs(pr - (np.eye(n) - q @ d - d @ q)))),
        "idempotent": float(np.max(np.abs(pr @ pr - pr))),
        "pr_Q": float(np.max(np.abs(pr @ q))),
        "Q_squared": float(np.max(np.abs(q @ q))),
        "green": float(np.max(np.abs(g @ laplacian - (np.eye(n) - pr)))),
        "harmonic_closed": float(np.max(np.abs(pr @ d @ pr))),
    }


# ---------------------------------------------------------------------------
# Sign helpers
# ---------------------------------------------------------------------------


def _parity_sums(parities: np.ndarray, k: int) -> np.ndarray:
    """Array of shape (h,)*k holding the parity sum of each index tuple."""
    h = len(parities)
    total = np.zeros((h,) * k, dtype=int)
    for axis in range(k):
        shape = [1] * k
        shape[axis] = h
        total = total + parities.reshape(shape)
    return total


def _koszul(parities: np.ndarray, n: int, start: int, stop: int, power: int) -> np.ndarray:
    """(-1)^(power * (p_start + ... + p_{stop-1})) broadcastable over an n-input tensor."""
    h = len(parities)
    shape = [1] * (n + 1)
    if stop <= start or power % 2 == 0:
        return np.ones(shape)
    sums = _parity_sums(parities, stop - start)
    shape[start:stop] = [h] * (stop - start)
    return ((-1.0) ** (power * sums)).reshape(shape)


def _insert(outer: np.ndarray, inner: np.ndarray, position: int) -> np.ndarray:
    """outer(1^position, inner, 1^rest) without Koszul signs."""
    k, l = outer.ndim - 1, inner.ndim - 1
    n = k + l - 1
    inputs = _LETTERS[:n]
    mid, out = _LETTERS[n], _LETTERS[n + 1]
    inner_sub = inputs[position : position + l] + mid
    outer_sub = inputs[:position] + mid + inputs[position + l :] + out
    return np.einsum(f"{inner_sub},{outer_sub}->{inputs}{out}", inner, outer)


def _compose_blocks(outer: np.ndarray, blocks: Sequence[np.ndarray]) -> np.ndarray:
    """outer(blocks[0], ..., blocks[q-1]) without Koszul signs."""
    subs, offset = [], 0
    mids = _LETTERS[26:]
    for v, block in enumerate(blocks):
        arity = block.ndim - 1
        subs.append(_LETTERS[offset : offset + arity] + mids[v])
        offset += arity
    out = mids[len(blocks)]
    outer_sub = mids[: len(blocks)] + out
    return np.einsum(",".join(subs + [outer_sub]) + f"->{_LETTERS[:offset]}{out}", *blocks, outer)


# ---------------------------------------------------------------------------
# The lambda recursion and transferred products
# ---------------------------------------------------------------------------


def lambda_n(algebra: DgAlgebra, Q: np.ndarray, args: Sequence[GradedElement]) -> GradedElement:
    """lambda_n(a_1, ..., a_n) for homogeneous arguments.

    Uses the form lambda_n = sum_{k+l=n} (-1)^(k+1+(l-1)(a_1+...+a_k)) Q lambda_k . Q lambda_l
    over k, l >= 1 with the convention Q lambda_1(x) = -x, so lambda_2 is the product.
    """
    if len(args) < 2:
        raise PreconditionError("lambda_n needs at least two arguments")
    parities = [a.parity for a in args]
    vectors = [np.asarray(a.coefficients, dtype=complex) for a in args]
    cache: dict[tuple[int, int], np.ndarray] = {}

    def q_lambda(i: int, j: int) -> np.ndarray:
        if j - i == 1:
            return -vectors[i]
        return Q @ lam(i, j)

    def lam(i: int, j: int) -> np.ndarray:
        if (i, j) in cache:
            return cache[(i, j)]
        total = np.zeros(algebra.dim, dtype=complex)
        for k in range(1, j - i):
            l = j - i - k
            sign = (-1) ** (k + 1 + (l - 1) * sum(parities[i : i + k]))
            total += sign * algebra.product(q_lambda(i, i + k), q_lambda(i + k, j))
        cache[(i, j)] = total
        return total

    return algebra.element(lam(0, len(args)))


def lambda_tensors(algebra: DgAlgebra, Q: np.ndarray, embedding: np.ndarray, parities: np.ndarray, K: int) -> dict[int, np.ndarray]:
    """lambda_k on all tuples of the columns of ``embedding``, k = 2..K, values in the algebra."""
    h = embedding.shape[1]
    q_lam = {1: -embedding.T}
    lams: dict[int, np.ndarray] = {}
    for n in range(2, K + 1):
        total = np.zeros((h,) * n + (algebra.dim,), dtype=complex)
        for k in range(1, n):
            l = n - k
            x = q_lam[k].reshape(h**k, algebra.dim)
            y = q_lam[l].reshape(h**l, algebra.dim)
            z = np.einsum("ia,jb,abc->ijc", x, y, algebra.mult)
            sign = (-1.0) ** (k + 1 + (l - 1) * _parity_sums(parities, k).reshape(-1))
            total += (z * sign[:, None, None]).reshape(total.shape)
        lams[n] = total
        q_lam[n] = total @ Q.T
    return lams


class AinfStructure(BaseModel):
    """Products m_1..m_K on a graded space; m_k of degree 2 - k."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    space: GradedBasis
    products: tuple[np.ndarray, ...]

    @model_validator(mode="after")
    def _shapes(self):
        h = self.space.dim
        for k, m in enumerate(self.products, start=1):
            if m.shape != (h,) * (k + 1):
                raise SlotMismatchError(f"m_{k} has shape {m.shape}, expected {(h,) * (k + 1)}")
        return self

    @property
    def max_arity(self) -> int:
        return len(self.products)

    def m(self, k: int) -> np.ndarray:
        return self.products[k - 1]


class AinfMorphism(BaseModel):
    """Components f_1..f_K; f_k has degree 1 - k."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    components: tuple[np.ndarray, ...]

    def f(self, k: int) -> np.ndarray:
        return self.components[k - 1]


def dg_structure(algebra: DgAlgebra, K: int = 2) -> AinfStructure:
    """The dg-algebra itself as an A-infinity structure, with m_k = 0 for 3 <= k <= K."""
    n = algebra.dim
    products = [algebra.d.T.astype(complex), algebra.mult.astype(complex)]
    products += [np.zeros((n,) * (k + 1), dtype=complex) for k in range(3, K + 1)]
    return AinfStructure(space=algebra.basis, products=tuple(products[: max(K, 2)]))


def transfer(algebra: DgAlgebra, hodge: HodgeData, K: int) -> AinfStructure:
    if K < 2:
        raise PreconditionError("transfer needs K >= 2")
    space = hodge.harmonic_basis
    to_b = hodge.coordinates @ hodge.pr
    m1 = (hodge.coordinates @ algebra.d @ hodge.embedding).T
    if np.max(np.abs(m1), initial=0.0) > 1e-9:
        logger.warning("m_1 does not vanish on the harmonic subspace: %.3e", np.max(np.abs(m1)))
    lams = lambda_tensors(algebra, hodge.Q, hodge.embedding, space.parities, K)
    products = [m1] + [lams[k] @ to_b.T for k in range(2, K + 1)]
    return AinfStructure(space=space, products=tuple(products))


def inclusion_morphism(algebra: DgAlgebra, hodge: HodgeData, K: int) -> AinfMorphism:
    """f_1 = embedding of harmonic elements, f_n = -Q lambda_n for n >= 2."""
    lams = lambda_tensors(algebra, hodge.Q, hodge.embedding, np.array(hodge.harmonic_degrees) % 2, K)
    components = [hodge.embedding.T.astype(complex)] + [-(lams[k] @ hodge.Q.T) for k in range(2, K + 1)]
    return AinfMorphism(components=tuple(components))


def identity_morphism(structure: AinfStructure) -> AinfMorphism:
    h = structure.space.dim
    components = [np.eye(h, dtype=complex)] + [
        np.zeros((h,) * (k + 1), dtype=complex) for k in range(2, structure.max_arity + 1)
    ]
    return AinfMorphism(components=tuple(components))


def transport(structure: AinfStructure, change: np.ndarray, space: Optional[GradedBasis] = None) -> AinfStructure:
    """Push a structure forward along an invertible degree-preserving map (``change @ x``)."""
    inverse = np.linalg.inv(change)
    products = []
    for k, m in enumerate(structure.products, start=1):
        out = m
        for axis in range(k):
            out = np.moveaxis(np.tensordot(inverse, out, axes=([0], [axis])), 0, axis)
        products.append(out @ change.T)
    return AinfStructure(space=space or structure.space, products=tuple(products))


# ---------------------------------------------------------------------------
# Residual checkers
# ---------------------------------------------------------------------------


def ainf_residual(S: AinfStructure, max_arity: Optional[int] = None) -> float:
    """Max-norm of the A-infinity constraint over basis tuples of arity 1..max_arity.

    Sign of the term m_k(a_1..a_j, m_l(...), ...) is
    (-1)^(l(a_1+...+a_j) + j(l-1) + (k-1)l).
    """
    K = S.max_arity
    top = max_arity or K
    parities = S.space.parities
    worst = 0.0
    for n in range(1, top + 1):
        total = np.zeros((S.space.dim,) * (n + 1), dtype=complex)
        for k in range(1, n + 1):
            l = n + 1 - k
            if k > K or l > K:
                continue
            for j in range(k):
                sign = (-1) ** (j * (l - 1) + (k - 1) * l)
                koszul = _koszul(parities, n, 0, j, l)
                total += sign * koszul * _insert(S.m(k), S.m(l), j)
        worst = max(worst, float(np.max(np.abs(total), initial=0.0)))
    return worst


def _compositions(n: int, q: int, cap: int):
    for parts in itertools.product(range(1, cap + 1), repeat=q):
        if sum(parts) == n:
            yield parts


def ainf_morphism_residual(f: AinfMorphism, A: AinfStructure, B: AinfStructure, max_arity: Optional[int] = None) -> float:
    """Max-norm defect of the A-infinity morphism equations for f: A -> B.

    sum (-1)^(r+st) f_u(1^r, m_s, 1^t) = sum (-1)^e m_q(f_i1, ..., f_iq),
    e = sum_u (q-u)(i_u - 1), with Koszul signs for evaluation on elements.
    """
    top = max_arity or len(f.components)
    worst = 0.0
    for n in range(1, top + 1):
        worst = max(worst, float(np.max(np.abs(_morphism_defect(f, A, B, n)), initial=0.0)))
    return worst


def _morphism_defect(f: AinfMorphism, A: AinfStructure, B: AinfStructure, n: int) -> np.ndarray:
    """lhs - rhs of the morphism equations at arity n, as a tensor."""
    Kf = len(f.components)
    parities = A.space.parities
    lhs = np.zeros((A.space.dim,) * n + (B.space.dim,), dtype=complex)
    for s in range(1, min(n, A.max_arity) + 1):
        for r in range(n - s + 1):
            t = n - s - r
            u = r + 1 + t
            if u > Kf:
                continue
            koszul = _koszul(parities, n, 0, r, s)
            lhs += (-1) ** (r + s * t) * koszul * _insert(f.f(u), A.m(s), r)
    rhs = np.zeros_like(lhs)
    for q in range(1, min(n, B.max_arity) + 1):
        for parts in _compositions(n, q, Kf):
            sign = (-1) ** sum((q - u) * (i - 1) for u, i in enumerate(parts[:-1], start=1))
            koszul = np.ones([1] * (n + 1))
            offset = 0
            for i in parts:
                koszul = koszul * _koszul(parities, n, 0, offset, i - 1)
                offset += i
            rhs += sign * koszul * _compose_blocks(B.m(q), [f.f(i) for i in parts])
    return lhs - rhs


def _apply_to_slot(tensor: np.ndarray, operator: np.ndarray, slot: int) -> np.ndarray:
    """Precompose input ``slot`` of an operation tensor with the matrix ``operator``."""
    return np.moveaxis(np.tensordot(tensor, operator, axes=([slot], [0])), -1, slot)


def _through_tensor_homotopy(tensor: np.ndarray, Q: np.ndarray, pr: np.ndarray, parities: np.ndarray) -> np.ndarray:
    """tensor . sum_k (-1)^(a_1+...+a_k) (1^k, Q, pr^(n-k-1)).

    The sum is a contracting homotopy for the differential induced by d on n-fold tensors,
    with kernel-side defect 1 - pr^n.
    """
    n = tensor.ndim - 1
    total = np.zeros_like(tensor)
    for k in range(n):
        term = _apply_to_slot(tensor, Q, k)
        for slot in range(k + 1, n):
            term = _apply_to_slot(term, pr, slot)
        total += _koszul(parities, n, 0, k, 1) * term
    return total


def projection_morphism(algebra: DgAlgebra, hodge: HodgeData, K: int) -> AinfMorphism:
    """A-infinity morphism from the algebra onto its transferred structure, with f_1 = pr.

    Each higher component solves the morphism equations at its arity: the defect of the
    lower components is pushed through the tensor-power homotopy built from Q and pr.
    Components vanish on harmonic tuples, so composing with the inclusion gives the identity.
    """
    source = dg_structure(algebra, K)
    target = transfer(algebra, hodge, K)
    parities = algebra.basis.parities
    components = [(hodge.coordinates @ hodge.pr).T.astype(complex)]
    for n in range(2, K + 1):
        blank = np.zeros((algebra.dim,) * n + (target.space.dim,), dtype=complex)
        defect = _morphism_defect(AinfMorphism(components=(*components, blank)), source, target, n)
        components.append((-1) ** n * _through_tensor_homotopy(defect, hodge.Q, hodge.pr, parities))
    logger.debug("projection morphism built up to arity %d", K)
    return AinfMorphism(components=tuple(components))


def homotopy_difference(f2: np.ndarray, product: np.ndarray, basis: GradedBasis) -> np.ndarray:
    """(-1)^a1 a1 f2(a2,a3) - f2(a1,a2) a3 - f2(a1 a2, a3) + f2(a1, a2 a3) as a tensor."""
    sign = (-1.0) ** basis.parities
    term1 = np.einsum("jks,iso->ijko", f2, product) * sign[:, None, None, None]
    term2 = np.einsum("ijs,sko->ijko", f2, product)
    term3 = np.einsum("ijs,sko->ijko", product, f2)
    term4 = np.einsum("jks,iso->ijko", product, f2)
    return term1 - term2 - term3 + term4


def homotopy_m3_residual(m3: np.ndarray, m3p: np.ndarray, f2: np.ndarray, product: np.ndarray, basis: GradedBasis) -> float:
    """Defect of m3' - m3 = (-1)^a1 a1 f2(a2,a3) - f2(a1,a2)a3 - f2(a1a2,a3) + f2(a1,a2a3)."""
    h = basis.dim
    for name, tensor, arity in (("m3", m3, 3), ("m3'", m3p, 3), ("f2", f2, 2), ("product", product, 2)):
        if tensor.shape != (h,) * (arity + 1):
            raise SlotMismatchError(f"{name} does not live on the given basis")
    defect = m3p - m3 - homotopy_difference(f2, product, basis)
    return float(np.max(np.abs(defect), initial=0.0))


def solve_homotopy_f2(m3: np.ndarray, m3p: np.ndarray, product: np.ndarray, basis: GradedBasis) -> np.ndarray:
    """Least-squares degree -1 map f2 relating two m3's with a common product."""
    h = basis.dim
    deg = basis.degrees
    slots = [(i, j, s) for i, j, s in itertools.product(range(h), repeat=3) if deg[s] == deg[i] + deg[j] - 1]
    target = (m3p - m3).reshape(-1)
    if not slots:
        return np.zeros((h, h, h), dtype=complex)
    columns = []
    for i, j, s in slots:
        unit = np.zeros((h, h, h), dtype=complex)
        unit[i, j, s] = 1.0
        columns.append(homotopy_difference(unit, product, basis).reshape(-1))
    matrix = np.array(columns).T
    solution, *_ = np.linalg.lstsq(matrix, target, rcond=None)
    f2 = np.zeros((h, h, h), dtype=complex)
    for (i, j, s), value in zip(slots, solution):
        f2[i, j, s] = value
    return f2


def q_adjointness_residual(hodge: HodgeData, pairing: np.ndarray, basis: GradedBasis) -> float:
    """max |<Q e_i, e_j> - (-1)^deg(i) <e_i, Q e_j>| for the bilinear form x^T P y."""
    sign = (-1.0) ** basis.parities
    defect = hodge.Q.T @ pairing - sign[:, None] * (pairing @ hodge.Q)
    return float(np.max(np.abs(defect), initial=0.0))


def pairing_cyclic_residual(
    algebra: DgAlgebra, hodge: HodgeData, pairing: np.ndarray, n: int, adjoint_tol: float = 1e-12
) -> float:
    """Defect of <m_n(a_1..a_n), a_{n+1}> = (-1)^(n(a_1+1)) <a_1, m_n(a_2..a_{n+1})> on harmonic tuples."""
    scale = max(1.0, float(np.max(np.abs(pairing))))
    adjoint = q_adjointness_residual(hodge, pairing, algebra.basis)
    if adjoint > adjoint_tol * scale:
        raise PreconditionError(f"pairing is not Q-adjoint (defect {adjoint:.3e})", anchor="Q-adjointness")
    emb = hodge.embedding
    parities = np.array(hodge.harmonic_degrees) % 2
    if n < 2:
        raise PreconditionError("cyclic check needs n >= 2")
    m_n = lambda_tensors(algebra, hodge.Q, emb, parities, n)[n] @ hodge.pr.T
    lhs = np.einsum("...a,ab,bz->...z", m_n, pairing, emb)
    rhs = np.einsum("ax,ab,...b->x...", emb, pairing, m_n)
    sign = (-1.0) ** (n * (parities + 1))
    rhs = rhs * sign.reshape((-1,) + (1,) * n)
    return float(np.max(np.abs(lhs - rhs), initial=0.0))


class MasseyProduct(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    representative: GradedElement
    indeterminacy: np.ndarray


def massey_triple(algebra: DgAlgebra, hodge: HodgeData, a: GradedElement, b: GradedElement, c: GradedElement, tol: float = 1e-10) -> MasseyProduct:
    """Harmonic representative of <a, b, c> and a basis (columns) of its indeterminacy aH + Hc.

    Defined when the harmonic parts of ab and bc vanish; the representative is
    pr(Q(ab)c - (-1)^a aQ(bc)), the transferred m_3 of the triple.
    """
    pr = hodge.pr
    for name, x, y in (("ab", a, b), ("bc", b, c)):
        cls = pr @ algebra.product(x.coefficients, y.coefficients)
        if np.max(np.abs(cls), initial=0.0) > tol:
            raise PreconditionError(f"Massey product undefined: {name} is not zero in cohomology")
    value = pr @ lambda_n(algebra, hodge.Q, [a, b, c]).coefficients
    deg_a, deg_b, deg_c = a.homogeneous_degree, b.homogeneous_degree, c.homogeneous_degree
    spans = []
    for col, deg in zip(hodge.embedding.T, hodge.harmonic_degrees):
        if deg == deg_b + deg_c - 1:
            spans.append(pr @ algebra.product(a.coefficients, col))
        if deg == deg_a + deg_b - 1:
            spans.append(pr @ algebra.product(col, c.coefficients))
    if spans:
        u, s, _ = np.linalg.svd(np.array(spans).T, full_matrices=False)
        indeterminacy = u[:, s > tol]
    else:
        indeterminacy = np.zeros((algebra.dim, 0), dtype=complex)
    return MasseyProduct(representative=algebra.element(value), indeterminacy=indeterminacy)
