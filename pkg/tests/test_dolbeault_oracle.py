import itertools

import numpy as np
import pytest

from ainfell import dolbeault_oracle as oracle
from ainfell import elliptic_products as ep
from ainfell import theta
from ainfell.errors import PoleProximityError, PreconditionError, SlotMismatchError, TruncationError
from ainfell.theta import Characteristic, Modulus

GRID = 64
CUTOFF = 24
U = 0.37 + 0.21j
V = 0.11 - 0.05j


@pytest.fixture(scope="function")
def u(tau_i):
    return ep.LatticeCoordinates.from_value(U, tau_i)


@pytest.fixture(scope="function")
def v(tau_i):
    return ep.LatticeCoordinates.from_value(V, tau_i)


def test_grid_must_be_a_power_of_two(u):
    slot = ep.LineBundleSlot(k=0, u=u)
    with pytest.raises(PreconditionError):
        oracle.GridSection(bundle=slot, samples=np.zeros((48, 48), dtype=complex))
    with pytest.raises(PreconditionError):
        oracle.GridSection(bundle=slot, samples=np.full((8, 8), np.nan, dtype=complex))


def test_theta_basis_is_orthogonal_with_known_norms(u, pol):
    slot = ep.LineBundleSlot(k=3, u=u)
    basis = oracle.harmonic_basis(slot, 0, GRID, pol)
    expected = ep.h0_basis_norm_sq(3, u)
    for i, j in itertools.product(range(3), repeat=2):
        product = oracle.quad_inner_product(basis[i], basis[j])
        assert abs(product - (expected if i == j else 0)) < 1e-10 * expected


def test_norm_with_tilted_modulus(pol):
    tau = Modulus(tau=0.2 + 1.3j)
    u = ep.LatticeCoordinates.from_value(0.1 - 0.3j, tau)
    section = oracle.sample_theta_section(2, 1, u, GRID, pol)
    expected = ep.h0_basis_norm_sq(2, u)
    assert abs(oracle.quad_inner_product(section, section) - expected) < 1e-9 * expected


def test_inner_product_needs_matching_slots(u, v, pol):
    first = oracle.sample_theta_section(1, 0, u, GRID, pol)
    second = oracle.sample_theta_section(1, 0, v, GRID, pol)
    with pytest.raises(SlotMismatchError):
        oracle.quad_inner_product(first, second)


def test_no_harmonic_forms_on_positive_degree(u, pol):
    assert oracle.harmonic_basis(ep.LineBundleSlot(k=2, u=u), 1, GRID, pol) == []
    assert oracle.harmonic_basis(ep.LineBundleSlot(k=-2, u=u), 0, GRID, pol) == []


def test_dbar_round_trip(rng, u):
    form = oracle.random_band_limited(rng, u, GRID)
    section = oracle.dbar_inverse_L0u(form, CUTOFF)
    assert section.form_type == 0
    assert np.allclose(oracle.dbar_apply(section, CUTOFF).samples, form.samples, atol=1e-10)


def test_mode_expansion_round_trip(rng, u):
    form = oracle.random_band_limited(rng, u, GRID, bandwidth=4, form_type=0)
    modes = oracle.mode_coefficients(form, CUTOFF)
    assert np.allclose(oracle.synthesize(modes, GRID).samples, form.samples, atol=1e-10)
    with pytest.raises(PreconditionError):
        modes.coefficient(CUTOFF + 1, 0)


def test_truncated_expansion_is_refused(rng, u):
    form = oracle.random_band_limited(rng, u, GRID, bandwidth=6)
    with pytest.raises(TruncationError):
        oracle.mode_coefficients(form, 2)


def test_dbar_inverse_preconditions(rng, tau_i, u):
    with pytest.raises(SlotMismatchError):
        oracle.dbar_inverse_L0u(oracle.random_band_limited(rng, u, GRID, form_type=0), CUTOFF)
    on_lattice = ep.LatticeCoordinates.from_value(1e-5, tau_i)
    with pytest.raises(PoleProximityError):
        oracle.dbar_inverse_L0u(oracle.random_band_limited(rng, on_lattice, GRID), CUTOFF)


def test_dbar_inverse_matches_closed_form_modes(tau_i, u, pol):
    k, a, b = 2, 0, 1
    origin = ep.LatticeCoordinates(z1=0.0, z2=0.0, tau=tau_i)
    rhs = oracle.sample_theta_section(k, a, origin, GRID, pol, form_type=1) * oracle.sample_theta_section(k, b, u, GRID, pol)
    solution = oracle.mode_coefficients(oracle.dbar_inverse_L0u(rhs, CUTOFF), CUTOFF)
    for m, n in itertools.product(range(-3, 4), repeat=2):
        assert abs(solution.coefficient(m, n) - ep.fourier_a(m, n, k, a, b, u)) < 1e-9


@pytest.mark.parametrize("k,l", [(1, 1), (2, 1)])
def test_oracle_agrees_with_lattice_sum(tau_i, pol, k, l):
    query = ep.TripleProductQuery.build(k, l, 0, k - 1, 0, 0, U, V, tau_i)
    g = ep.m3_holomorphic(query, pol)
    assert abs(oracle.m3_oracle(query, GRID, CUTOFF, pol) - g) < 1e-6 * max(1.0, abs(g))


def test_reversed_order_is_antisymmetric(tau_i, pol):
    query = ep.TripleProductQuery.build(1, 1, 0, 0, 0, 0, U, V, tau_i)
    forward = oracle.m3_oracle(query, GRID, CUTOFF, pol)
    backward = oracle.m3_oracle(query, GRID, CUTOFF, pol, reversed_order=True)
    assert abs(forward + backward) < 1e-6 * max(1.0, abs(forward))


def test_area_form_factor():
    assert abs(oracle.area_form_factor(Modulus(tau=1j)) + 2j) < 1e-15
    assert abs(oracle.area_form_factor(Modulus(tau=0.4 + 1.5j)) + 3j) < 1e-15


def test_serre_pairing_needs_dual_slots(u, v, pol):
    section = oracle.sample_theta_section(1, 0, u, GRID, pol)
    form = oracle.sample_theta_section(1, 0, v, GRID, pol, form_type=1)
    with pytest.raises(SlotMismatchError):
        oracle.serre_pair(form, section)
    with pytest.raises(SlotMismatchError):
        oracle.serre_pair(section, section)


@pytest.mark.parametrize("n", [2, 3])
def test_cyclic_symmetry_under_serre_pairing(u, v, pol, n):
    config = oracle.SerreConfiguration(n=n, k=2, l=1, b=1, u=u, v=v)
    assert oracle.serre_cyclic_check(config, GRID, CUTOFF, pol) < 1e-6


def test_q_is_adjoint_under_serre_pairing(rng, u):
    assert oracle.q_adjointness_residual(rng, u, GRID, CUTOFF) < 1e-10


def test_products_of_two_forms_vanish(u, v, pol):
    first = oracle.sample_theta_section(1, 0, u, GRID, pol, form_type=1)
    second = oracle.sample_theta_section(1, 0, v, GRID, pol, form_type=1)
    product = first * second
    assert product.form_type == 1
    assert not np.any(product.samples)


def test_modes_are_orthonormal(u):
    modes = [oracle.mode_section(u, m, n, GRID) for m, n in itertools.product(range(-2, 3), repeat=2)]
    gram = np.array([[oracle.quad_inner_product(f, g) for g in modes] for f in modes])
    assert np.allclose(gram, np.eye(len(modes)), atol=1e-9)


def test_oracle_is_stable_under_grid_refinement(tau_i, pol):
    query = ep.TripleProductQuery.build(1, 1, 0, 0, 0, 0, U, V, tau_i)
    coarse = oracle.m3_oracle(query, GRID, CUTOFF, pol)
    fine = oracle.m3_oracle(query, 2 * GRID, 2 * CUTOFF, pol)
    assert abs(coarse - fine) < 1e-8 * max(1.0, abs(fine))


FINE_GRID = 128
FINE_CUTOFF = 48


@pytest.mark.parametrize("tau", [1j, 2j, 0.3 + 1.1j])
@pytest.mark.parametrize("k,l", [(1, 1), (2, 1), (2, 3)])
def test_oracle_agrees_across_moduli(pol, tau, k, l):
    query = ep.TripleProductQuery.build(k, l, 0, k - 1, 0, 0, U, V, Modulus(tau=tau))
    g = ep.m3_holomorphic(query, pol)
    assert abs(oracle.m3_oracle(query, FINE_GRID, FINE_CUTOFF, pol) - g) < 1e-6 * abs(g)


def test_oracle_is_stable_under_doubling_the_cutoff(pol):
    query = ep.TripleProductQuery.build(2, 3, 0, 1, 0, 0, U, V, Modulus(tau=0.3 + 1.1j))
    coarse = oracle.m3_oracle(query, 2 * FINE_GRID, FINE_CUTOFF, pol)
    fine = oracle.m3_oracle(query, 2 * FINE_GRID, 2 * FINE_CUTOFF, pol)
    assert abs(coarse - fine) < 1e-8 * max(1.0, abs(fine))


def test_samples_wrap_around_by_the_automorphy_factor(u, pol):
    k, a = 2, 1
    char = Characteristic.of(a, k)
    scaled = u.tau.scaled(k)
    section = oracle.sample_theta_section(k, a, u, GRID, pol)
    tau = u.tau.tau
    for j in range(0, GRID, 8):
        x = j / GRID
        # x1 -> x1 + 1 leaves the section unchanged
        across = theta.theta_char(char, k * (1 + tau * x) + u.value, scaled, pol)
        assert abs(across - section.samples[0, j]) < 1e-12 * max(1.0, abs(across))
        # x2 -> x2 + 1 multiplies by exp(-pi i k tau - 2 pi i (k x + u))
        up = theta.theta_char(char, k * (x + tau) + u.value, scaled, pol)
        factor = np.exp(-1j * np.pi * k * tau - 2j * np.pi * (k * x + u.value))
        assert abs(up - factor * section.samples[j, 0]) < 1e-12 * max(1.0, abs(up))


@pytest.mark.parametrize("k", [1, 2, 3])
def test_normalized_form_pairs_with_its_dual_section(u, pol, k):
    # -2 pi i exp(2 pi t u2^2 / k): area factor, normalization and basis norm combined
    expected = -2j * np.pi * np.exp(2 * np.pi * u.tau.t * u.z2**2 / k)
    form = oracle.sample_theta_section(k, 0, u, GRID, pol, form_type=1, normalized=True)
    section = oracle.sample_theta_section(k, 0, u, GRID, pol)
    assert abs(oracle.serre_pair(form, section) - expected) < 1e-9 * abs(expected)


@pytest.mark.parametrize("n,position", [(2, 0), (2, 2), (3, 1), (3, 3)])
def test_zero_argument_gives_zero_on_both_sides(u, v, pol, n, position):
    config = oracle.SerreConfiguration(n=n, k=2, l=1, b=1, u=u, v=v)
    args = oracle.configuration_sections(config, GRID, pol)
    args[position] = args[position].zero()
    lhs, rhs = oracle.serre_cyclic_sides(args, CUTOFF, pol)
    assert abs(lhs) < 1e-15
    assert abs(rhs) < 1e-15
