import math

import numpy as np
import pytest

from ainfell import elliptic_products as ep
from ainfell.errors import IllConditionedFitError, PoleProximityError, PreconditionError, TransversalityError
from ainfell.theta import Modulus

U = 0.37 + 0.21j
V = 0.11 - 0.05j
W = 0.3 + 0.2j
RESIDUE_RADIUS = 1e-4


@pytest.fixture(scope="function")
def query(tau_i):
    return ep.TripleProductQuery.build(1, 1, 0, 0, 0, 0, U, V, tau_i)


def _relative(lhs, rhs):
    return abs(lhs - rhs) / max(1.0, abs(rhs))


def test_lattice_coordinates_round_trip():
    tau = Modulus(tau=0.3 + 1.1j)
    z = ep.LatticeCoordinates.from_value(0.2 - 0.4j, tau)
    assert abs(z.value - (0.2 - 0.4j)) < 1e-15
    base, (n1, n2) = z.shifted(3, -2).reduced()
    assert (n1, n2) == (3, -2)
    assert abs(base.value - z.value) < 1e-12


def test_dual_slots(tau_i):
    slot = ep.LineBundleSlot(k=2, u=ep.LatticeCoordinates.from_value(U, tau_i))
    assert slot.is_dual_to(slot.dual())
    assert slot.tensor(slot.dual()).k == 0
    assert not slot.is_dual_to(slot)


def test_query_rejects_non_positive_degrees(tau_i):
    with pytest.raises(PreconditionError):
        ep.TripleProductQuery.build(0, 1, 0, 0, 0, 0, U, V, tau_i)


def test_query_reduces_indices(tau_i):
    query = ep.TripleProductQuery.build(2, 3, 5, -1, 7, 3, U, V, tau_i)
    assert (query.a, query.b, query.c, query.d) == (1, 1, 1, 0)


def test_norm_of_theta_section(tau_i):
    u = ep.LatticeCoordinates.from_value(0.4, tau_i)
    assert abs(ep.h0_basis_norm_sq(1, u) - 1 / math.sqrt(2)) < 1e-15
    assert abs(ep.h0_basis_norm_sq(2, u) - 0.5) < 1e-15


def test_fourier_coefficient_at_the_origin(tau_i):
    zero = ep.LatticeCoordinates.from_value(0, tau_i)
    for k in (1, 2, 3):
        assert abs(ep.fourier_c(0, 0, k, 0, 0, zero, zero) - 1 / math.sqrt(2 * k)) < 1e-15
    assert ep.fourier_c(1, 0, 2, 0, 0, zero, zero) == 0


def test_congruence_progression():
    assert ep.congruence_progression(1, 2, 0, 3) == (3, 6)
    assert ep.congruence_progression(1, 2, 0, 2) is None
    assert ep.congruence_progression(2, 4, 0, 2) == (2, 4)


def test_t_set_sizes():
    assert len(ep.t_set_enumerate(1, 1, 0, 0)) == 2
    assert len(ep.t_set_enumerate(2, 1, 1, 0)) == 3
    assert len(ep.t_set_enumerate(2, 2, 1, 1)) == 2


def test_phi_maps():
    sigma = ep.TSetElement(b=1, c=0, p=1)
    assert ep.phi2(sigma, 2, 1) == 3
    assert ep.phi3(sigma, 2, 1) == 0


def test_canonicalize_respects_the_equivalence():
    k, l = 2, 1
    shifted = ep.TSetElement(b=3, c=0, p=0)
    canonical = ep.canonicalize(shifted, k, l)
    assert canonical == ep.TSetElement(b=1, c=0, p=1)
    assert ep.phi2(shifted, k, l) == ep.phi2(canonical, k, l)
    assert ep.phi3(shifted, k, l) == ep.phi3(canonical, k, l)
    assert ep.canonicalize(ep.TSetElement(b=0, c=2, p=0), 1, 1) == ep.TSetElement(b=0, c=0, p=0)


def test_unsolvable_congruences_give_zero(tau_i, pol):
    query = ep.TripleProductQuery.build(2, 2, 0, 1, 0, 0, U, V, tau_i)
    assert ep.m3_holomorphic(query, pol) == 0
    assert ep.m3_fukaya(query, pol) == 0


def test_pole_is_refused(tau_i, pol):
    query = ep.TripleProductQuery.build(1, 1, 0, 0, 0, 0, 1 + 1j, V, tau_i)
    with pytest.raises(PoleProximityError):
        ep.m3_holomorphic(query, pol)
    with pytest.raises(PoleProximityError):
        ep.m3_fukaya(query, pol)


def test_fukaya_n0():
    assert ep.fukaya_n0(0.0, 0, 1, 0, 1) == 0
    assert ep.fukaya_n0(0.5, 0, 1, 0, 1) == 1
    assert ep.fukaya_n0(-0.2, 1, 2, 1, 2) == 0
    with pytest.raises(TransversalityError):
        ep.fukaya_n0(1e-8, 0, 1, 0, 1)


def test_holomorphic_series_matches_its_fourier_form(query, pol):
    assert _relative(ep.m3_holomorphic_fourier(query, 24), ep.m3_holomorphic(query, pol)) < 1e-6


@pytest.mark.parametrize("k,l", [(1, 1), (2, 1), (2, 3)])
def test_quasi_periodicity_of_both_sides(tau_i, pol, k, l):
    query = ep.TripleProductQuery.build(k, l, 0, 1 % k, 0, 1 % l, U, V, tau_i)

    def holomorphic(q):
        return ep.m3_holomorphic(q, pol)

    def fukaya(q):
        return ep.m3_fukaya(q, pol)

    for series in (holomorphic, fukaya):
        one, other = ep.quasi_period_residuals(series, query)
        assert one < 1e-8
        assert other < 1e-8


def test_difference_is_doubly_periodic_over_long_periods(tau_i, pol):
    query = ep.TripleProductQuery.build(2, 1, 1, 0, 0, 0, U, V, tau_i)
    along_one, along_tau = ep.long_period_residuals(lambda q: ep.m3_difference(q, pol), query)
    assert along_one < 1e-8
    assert along_tau < 1e-8


def test_residues_at_the_origin(tau_i, pol):
    query = ep.TripleProductQuery.build(1, 1, 0, 0, 0, 0, U, W - U, tau_i)
    margin = RESIDUE_RADIUS / 10
    g = ep.symmetric_residue(lambda q: ep.m3_holomorphic(q, pol, pole_margin=margin), query, RESIDUE_RADIUS)
    f = ep.symmetric_residue(lambda q: ep.m3_fukaya(q, pol, pole_margin=margin), query, RESIDUE_RADIUS)
    assert abs(g - 1) < 1e-4
    assert abs(f - 1) < 1e-4
    assert abs(g - f) < 1e-4


def test_no_residue_off_the_diagonal(tau_i, pol):
    query = ep.TripleProductQuery.build(2, 1, 0, 1, 0, 0, U, W - U, tau_i)
    margin = RESIDUE_RADIUS / 10
    g = ep.symmetric_residue(lambda q: ep.m3_holomorphic(q, pol, pole_margin=margin), query, RESIDUE_RADIUS)
    assert abs(g) < 1e-4


def test_product_expansion_reproduces_the_product(tau_i, pol):
    from ainfell.theta import Characteristic, theta_char

    k, l, b, c = 2, 1, 1, 0
    x, u, v = 0.23 - 0.1j, 0.15 + 0.3j, 0.05 - 0.2j
    w = u + v
    expansion = ep.product_expansion(k, l, b, c, u, w, tau_i, pol)
    product = theta_char(Characteristic.of(b, k), k * x + u, tau_i.scaled(k), pol) * theta_char(
        Characteristic.of(c, l), l * x + v, tau_i.scaled(l), pol
    )
    rebuilt = sum(
        coef * theta_char(Characteristic.of(q, k + l), (k + l) * x + w, tau_i.scaled(k + l), pol)
        for q, coef in expansion.items()
    )
    assert _relative(rebuilt, product) < 1e-10


def test_homotopy_fit_equal_degrees(rng, tau_i, pol):
    w = ep.LatticeCoordinates.from_value(W, tau_i)
    coeffs = ep.homotopy_fit(1, 1, 0, w, ep.sample_u(rng, tau_i, 8), pol)
    assert set(coeffs.coefficients) == {0}
    assert coeffs.samples == 8
    assert coeffs.fit_residual < 1e-8
    assert coeffs.fiber_spread < 1e-6
    fresh = ep.sample_u(rng, tau_i, 1)[0]
    assert ep.end_to_end_residual(coeffs, 0, 0, fresh, pol) < 1e-8


def test_homotopy_fit_unequal_degrees(rng, tau_i, pol):
    w = ep.LatticeCoordinates.from_value(W, tau_i)
    coeffs = ep.homotopy_fit(2, 1, 0, w, ep.sample_u(rng, tau_i, 8), pol)
    assert coeffs.fit_residual < 1e-8
    assert coeffs.fiber_spread < 1e-7
    fresh = ep.sample_u(rng, tau_i, 1)[0]
    for b in range(2):
        assert ep.end_to_end_residual(coeffs, b, 0, fresh, pol) < 1e-7


def test_homotopy_fit_needs_enough_samples(rng, tau_i, pol):
    w = ep.LatticeCoordinates.from_value(W, tau_i)
    with pytest.raises(IllConditionedFitError):
        ep.homotopy_fit(2, 1, 0, w, ep.sample_u(rng, tau_i, 1), pol)


def test_n2_of_zero_coefficients(tau_i, pol):
    w = ep.LatticeCoordinates.from_value(W, tau_i)
    coeffs = ep.HomotopyCoefficients(k=1, l=1, a=0, w=w, coefficients={0: {0: 0j, 1: 0j}})
    u = ep.LatticeCoordinates.from_value(U, tau_i)
    assert ep.n2_on_product(coeffs, 0, 0, u, pol) == {0: 0j}


def test_n2_needs_every_d(tau_i):
    w = ep.LatticeCoordinates.from_value(W, tau_i)
    coeffs = ep.HomotopyCoefficients(k=1, l=2, a=0, w=w, coefficients={0: {q: 1 + 0j for q in range(3)}})
    with pytest.raises(PreconditionError):
        ep.n2_apply(coeffs, 0)


def test_sampled_points_avoid_the_lattice(rng, tau_i):
    points = ep.sample_u(rng, tau_i, 20)
    assert len(points) == 20
    assert min(p.lattice_distance() for p in points) >= 0.2
    assert np.all([abs(p.z1) <= 0.5 and abs(p.z2) <= 0.5 for p in points])
