"""Named verification suites run by ``ainfell verify``."""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ainfell import ainf_core, algebras, dolbeault_oracle as oracle, elliptic_products as ep, theta
from ainfell.config import RunConfig
from ainfell.errors import AinfellError, PreconditionError, UnknownSuiteError
from ainfell.models import CheckResult, SuiteReport

logger = logging.getLogger(__name__)

TRANSFER_ARITY = 4
RESIDUE_RADIUS = 1e-4
# transferred m3 and f2 below this are treated as vanishing
NON_FORMAL_FLOOR = 1e-6
EXTENDED_DETAIL = "re-run at extended precision"

QUASI_PERIODS = (("shift-1", "quasi-periodicity under u -> u + 1"), ("shift-tau", "quasi-periodicity under u -> u + tau"))
LONG_PERIODS = (("long-1", "G - F periodic under u -> u + kl/r"), ("long-tau", "G - F quasi-periodic under u -> u + (kl/r) tau"))


@dataclass(frozen=True)
class Check:
    name: str
    anchor: str
    tolerance: float
    compute: Callable[[], float]


def _run(check: Check) -> CheckResult:
    try:
        residual = float(check.compute())
    except AinfellError as e:
        logger.warning("%s raised %s: %s", check.name, type(e).__name__, e)
        return CheckResult(name=check.name, anchor=check.anchor, residual=math.inf, tolerance=check.tolerance, passed=False, detail=str(e))
    passed = bool(np.isfinite(residual) and residual < check.tolerance)
    if not passed:
        logger.info("%s failed (%s): %.3e >= %.1e", check.name, check.anchor, residual, check.tolerance)
    return CheckResult(name=check.name, anchor=check.anchor, residual=residual, tolerance=check.tolerance, passed=passed)


def run_checks(checks: list[Check], workers: int) -> list[CheckResult]:
    if workers <= 1:
        return [_run(check) for check in checks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run, checks))


def _random_tau(rng: np.random.Generator) -> theta.Modulus:
    return theta.Modulus(tau=complex(rng.uniform(-0.5, 0.5), rng.uniform(0.8, 1.5)))


def _random_point(rng: np.random.Generator, tau: theta.Modulus) -> ep.LatticeCoordinates:
    return ep.sample_u(rng, tau, 1)[0]


# ---------------------------------------------------------------------------
# Finite-dimensional algebra suites
# ---------------------------------------------------------------------------


def _require_non_formal(tensor: np.ndarray, name: str) -> None:
    size = float(np.max(np.abs(tensor), initial=0.0))
    if size <= NON_FORMAL_FLOOR:
        raise PreconditionError(f"{name} vanishes (max {size:.1e}); the draw is formal", anchor="non-formal draw")


def _scaled(residual: float, structure: ainf_core.AinfStructure) -> float:
    scale = max(1.0, max(float(np.max(np.abs(m), initial=0.0)) for m in structure.products))
    return residual / scale**2


def ainf_checks(config: RunConfig, rng: np.random.Generator) -> list[Check]:
    checks = []
    for trial in range(5):
        algebra = algebras.random_dg_algebra(rng)

        def transferred(algebra=algebra):
            hodge = ainf_core.hodge_data(algebra)
            structure = ainf_core.transfer(algebra, hodge, TRANSFER_ARITY)
            _require_non_formal(structure.m(3), "m3")
            return _scaled(ainf_core.ainf_residual(structure), structure)

        def hodge(algebra=algebra):
            return max(ainf_core.hodge_residuals(algebra, ainf_core.hodge_data(algebra)).values())

        checks.append(Check(f"transfer[{trial}]", "A-infinity constraint", config.tolerances.algebra, transferred))
        checks.append(Check(f"hodge[{trial}]", "Hodge decomposition", config.tolerances.algebra, hodge))
    return checks


def morphism_checks(config: RunConfig, rng: np.random.Generator) -> list[Check]:
    checks = []
    for trial in range(3):
        algebra = algebras.random_dg_algebra(rng)
        other_metric = algebras.random_inner_product(rng, algebra.basis)

        def inclusion(algebra=algebra):
            hodge = ainf_core.hodge_data(algebra)
            structure = ainf_core.transfer(algebra, hodge, TRANSFER_ARITY)
            f = ainf_core.inclusion_morphism(algebra, hodge, TRANSFER_ARITY)
            _require_non_formal(f.f(2), "f2")
            dg = ainf_core.dg_structure(algebra, TRANSFER_ARITY)
            return ainf_core.ainf_morphism_residual(f, structure, dg)

        def projection(algebra=algebra):
            hodge = ainf_core.hodge_data(algebra)
            structure = ainf_core.transfer(algebra, hodge, TRANSFER_ARITY)
            p = ainf_core.projection_morphism(algebra, hodge, TRANSFER_ARITY)
            _require_non_formal(p.f(2), "projection f2")
            return ainf_core.ainf_morphism_residual(p, ainf_core.dg_structure(algebra, TRANSFER_ARITY), structure)

        def homotopy(algebra=algebra, other_metric=other_metric):
            first = ainf_core.hodge_data(algebra)
            second_algebra = algebra.with_inner(other_metric)
            second = ainf_core.hodge_data(second_algebra)
            s1 = ainf_core.transfer(algebra, first, 3)
            s2 = ainf_core.transfer(second_algebra, second, 3)
            change = first.coordinates @ second.embedding
            moved = ainf_core.transport(s2, change, s1.space)
            f2 = ainf_core.solve_homotopy_f2(s1.m(3), moved.m(3), s1.m(2), s1.space)
            product_gap = float(np.max(np.abs(moved.m(2) - s1.m(2)), initial=0.0))
            return max(product_gap, ainf_core.homotopy_m3_residual(s1.m(3), moved.m(3), f2, s1.m(2), s1.space))

        checks.append(Check(f"inclusion[{trial}]", "A-infinity morphism equations", config.tolerances.morphism, inclusion))
        checks.append(Check(f"projection[{trial}]", "A-infinity morphism equations", config.tolerances.morphism, projection))
        checks.append(Check(f"metric-change[{trial}]", "f2 homotopy formula for m3", config.tolerances.homotopy, homotopy))
    return checks


def cyclic_checks(config: RunConfig, rng: np.random.Generator) -> list[Check]:
    pol = config.truncation
    checks = []
    for trial in range(3):
        algebra, pairing = algebras.cyclic_instance(rng)

        def adjoint(algebra=algebra, pairing=pairing):
            hodge = ainf_core.hodge_data(algebra)
            return ainf_core.q_adjointness_residual(hodge, pairing, algebra.basis)

        checks.append(Check(f"q-adjoint[{trial}]", "Q-adjointness", config.tolerances.cyclic, adjoint))
        for n in (2, 3):

            def cyclic(algebra=algebra, pairing=pairing, n=n):
                hodge = ainf_core.hodge_data(algebra)
                return ainf_core.pairing_cyclic_residual(algebra, hodge, pairing, n)

            checks.append(Check(f"cyclic-m{n}[{trial}]", "cyclic symmetry", config.tolerances.cyclic, cyclic))

    tau = theta.Modulus(tau=1j)
    u, v = _random_point(rng, tau), _random_point(rng, tau)
    grid_n, cutoff = config.grid_n, min(config.modes_m, config.grid_n // 2 - 1)
    for n, (k, l) in itertools.product((2, 3), ((1, 1), (2, 1))):
        configuration = oracle.SerreConfiguration(n=n, k=k, l=l, b=k - 1, c=0, e=0, u=u, v=v)
        checks.append(
            Check(
                f"serre-m{n}-k{k}l{l}", "cyclic symmetry under the Serre pairing", config.tolerances.oracle,
                lambda configuration=configuration: oracle.serre_cyclic_check(configuration, grid_n, cutoff, pol),
            )
        )
    lemma_rng = np.random.default_rng(rng.integers(2**32))
    checks.append(
        Check(
            "serre-lemma", "Q-adjointness under the Serre pairing", config.tolerances.oracle,
            lambda: oracle.q_adjointness_residual(lemma_rng, u, grid_n, cutoff),
        )
    )
    return checks


# ---------------------------------------------------------------------------
# Theta-function and elliptic-curve suites
# ---------------------------------------------------------------------------


def theta_checks(config: RunConfig, rng: np.random.Generator) -> list[Check]:
    pol, tol = config.truncation, config.tolerances.theta
    checks = []
    for trial in range(20):
        tau = _random_tau(rng)
        k, l = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        b, c = int(rng.integers(k)), int(rng.integers(l))
        u, v, x = (_random_point(rng, tau).value for _ in range(3))

        def addition(k=k, l=l, b=b, c=c, u=u, v=v, x=x, tau=tau):
            lhs, rhs = theta.addition_formula_terms(k, l, b, c, u, v, x, tau, pol, config.precision)
            return abs(lhs - rhs) / max(1.0, abs(lhs))

        checks.append(Check(f"addition[{trial}]", "theta addition formula", tol, addition))
    for trial in range(5):
        tau = _random_tau(rng)
        x = _random_point(rng, tau).value
        r = theta.Characteristic.of(int(rng.integers(1, 6)), int(rng.integers(2, 7)))
        checks.append(Check(f"quasi-period[{trial}]", "theta quasi-periodicity", tol, lambda x=x, tau=tau: theta.quasi_periodicity_residual(x, tau, pol)))
        checks.append(Check(f"shifted[{trial}]", "characteristic shift", tol, lambda r=r, x=x, tau=tau: theta.shifted_form_residual(r, x, tau, pol)))
    return checks


def _random_query(rng: np.random.Generator, k: int, l: int) -> ep.TripleProductQuery:
    tau = _random_tau(rng)
    a, b = int(rng.integers(k)), int(rng.integers(k))
    c = int(rng.integers(l))
    r = math.gcd(k, l)
    # keep the congruences for m solvable
    d = next(d for d in range(l) if (d - c - (b - a)) % r == 0)
    u, v = _random_point(rng, tau), _random_point(rng, tau)
    return ep.TripleProductQuery(k=k, l=l, a=a, b=b, c=c, d=d, u=u, v=v)


def periodicity_checks(config: RunConfig, rng: np.random.Generator) -> list[Check]:
    pol, tol = config.truncation, config.tolerances.periodicity
    kwargs = dict(pole_margin=config.pole_margin)

    def holomorphic(q):
        return ep.m3_holomorphic(q, pol, convention=config.gamma_convention, **kwargs)

    def fukaya(q):
        return ep.m3_fukaya(q, pol, transversality_margin=config.transversality_margin, **kwargs)

    def difference(q):
        return holomorphic(q) - fukaya(q)

    checks = []
    for trial, (k, l) in enumerate([(1, 1), (2, 1), (1, 2), (2, 3), (3, 2), (2, 2)]):
        query = _random_query(rng, k, l)
        for label, series in (("G", holomorphic), ("F", fukaya), ("H", difference)):
            for index, (short, anchor) in enumerate(QUASI_PERIODS):
                checks.append(
                    Check(
                        f"{short}-{label}[{trial}]", anchor, tol,
                        lambda series=series, query=query, index=index: ep.quasi_period_residuals(series, query)[index],
                    )
                )
        for index, (short, anchor) in enumerate(LONG_PERIODS):
            checks.append(
                Check(
                    f"{short}-H[{trial}]", anchor, tol,
                    lambda query=query, index=index: ep.long_period_residuals(difference, query)[index],
                )
            )
    return checks


def residue_checks(config: RunConfig, rng: np.random.Generator) -> list[Check]:
    pol, tol = config.truncation, config.tolerances.residue
    margin = RESIDUE_RADIUS / 10

    def holomorphic(q):
        return ep.m3_holomorphic(q, pol, convention=config.gamma_convention, pole_margin=margin)

    def fukaya(q):
        return ep.m3_fukaya(q, pol, pole_margin=margin, transversality_margin=config.transversality_margin)

    checks = []
    for trial, (k, l) in enumerate([(1, 1), (2, 1), (1, 2), (2, 3)]):
        query = _random_query(rng, k, l).with_indices(b=0, a=0, c=0, d=0)
        for label, series in (("G", holomorphic), ("F", fukaya)):
            checks.append(
                Check(
                    f"residue-{label}[{trial}]", "residue 1 at u = 0", tol,
                    lambda series=series, query=query: abs(ep.symmetric_residue(series, query, RESIDUE_RADIUS) - 1),
                )
            )
        checks.append(
            Check(
                f"residue-H[{trial}]", "G - F holomorphic", tol,
                lambda query=query: abs(
                    ep.symmetric_residue(lambda q: holomorphic(q) - fukaya(q), query, RESIDUE_RADIUS)
                ),
            )
        )
    return checks


def homotopy_checks(config: RunConfig, rng: np.random.Generator) -> list[Check]:
    pol = config.truncation
    tau = theta.Modulus(tau=1j)
    w = ep.LatticeCoordinates.from_value(0.3 + 0.2j, tau)
    grid_n, cutoff = config.grid_n, min(config.modes_m, config.grid_n // 2 - 1)
    checks = []
    for k, l in ((1, 1), (2, 1)):
        samples = ep.sample_u(rng, tau, 8)
        fresh = _random_point(rng, tau)
        fitted: dict = {}

        def fit(k=k, l=l, samples=samples):
            if (k, l) not in fitted:
                fitted[(k, l)] = ep.homotopy_fit(
                    k, l, 0, w, samples, pol,
                    convention=config.gamma_convention,
                    pole_margin=config.pole_margin,
                    transversality_margin=config.transversality_margin,
                )
            return fitted[(k, l)]

        def end_to_end(k=k, l=l, fresh=fresh):
            coeffs = fit(k, l)
            return max(
                ep.end_to_end_residual(coeffs, b, c, fresh, pol, convention=config.gamma_convention)
                for b, c in itertools.product(range(k), range(l))
            )

        def reversed_order(k=k, l=l, fresh=fresh):
            coeffs = fit(k, l)
            predicted = ep.n2_on_product(coeffs, 0, 0, fresh, pol)
            worst = 0.0
            for d in range(l):
                query = ep.TripleProductQuery(k=k, l=l, a=0, b=0, c=0, d=d, u=fresh, v=w - fresh)
                m3_rev = oracle.m3_oracle(query, grid_n, cutoff, pol, reversed_order=True)
                m3p_rev = -ep.m3_fukaya(query, pol, transversality_margin=config.transversality_margin)
                worst = max(worst, abs((m3p_rev - m3_rev) - predicted[d]) / max(1.0, abs(predicted[d])))
            return worst

        checks += [
            Check(f"fit-k{k}l{l}", "homotopy expansion in e(s)", config.tolerances.fit, lambda k=k, l=l: fit(k, l).fit_residual),
            Check(f"fiber-k{k}l{l}", "coefficients constant on phi3 fibers", config.tolerances.homotopy, lambda k=k, l=l: fit(k, l).fiber_spread),
            Check(f"n2-k{k}l{l}", "m3 - m3' = n2(alpha, beta1 beta2)", config.tolerances.homotopy, end_to_end),
            Check(f"n2-reversed-k{k}l{l}", "m3'(b2,b1,a) - m3(b2,b1,a) = n2(b1 b2, a)", config.tolerances.oracle, reversed_order),
        ]
    return checks


def oracle_checks(config: RunConfig, rng: np.random.Generator) -> list[Check]:
    pol, tol = config.truncation, config.tolerances.oracle
    grid_n, cutoff = config.grid_n, min(config.modes_m, config.grid_n // 2 - 1)
    tau = theta.Modulus(tau=1j)
    fixed = ep.TripleProductQuery.build(1, 1, 0, 0, 0, 0, 0.37 + 0.21j, 0.11 - 0.05j, tau)
    queries = [fixed] + [_random_query(rng, k, l) for k, l in ((2, 1), (2, 3))]
    checks = []
    for index, query in enumerate(queries):
        label = f"k{query.k}l{query.l}[{index}]"

        def closed_form(query=query):
            g = ep.m3_holomorphic(query, pol, convention=config.gamma_convention, pole_margin=config.pole_margin)
            return abs(oracle.m3_oracle(query, grid_n, cutoff, pol) - g) / max(abs(g), 1e-300)

        def antisymmetry(query=query):
            forward = oracle.m3_oracle(query, grid_n, cutoff, pol)
            backward = oracle.m3_oracle(query, grid_n, cutoff, pol, reversed_order=True)
            return abs(forward + backward) / max(1.0, abs(forward))

        def fourier_sum(query=query):
            g = ep.m3_holomorphic(query, pol, convention=config.gamma_convention, pole_margin=config.pole_margin)
            return abs(ep.m3_holomorphic_fourier(query, 24) - g) / max(abs(g), 1e-300)

        checks += [
            Check(f"oracle-{label}", "G series against quadrature", tol, closed_form),
            Check(f"antisymmetry-{label}", "m3(b2, b1, a) = -m3(a, b1, b2)", tol, antisymmetry),
            Check(f"fourier-{label}", "G series against its Fourier derivation", tol, fourier_sum),
        ]

    def norm():
        k, u = 2, ep.LatticeCoordinates.from_value(0.3 + 0.4 * 2j, theta.Modulus(tau=2j))
        section = oracle.sample_theta_section(k, 1, u, grid_n, pol)
        expected = ep.h0_basis_norm_sq(k, u)
        return abs(oracle.quad_inner_product(section, section) - expected) / expected

    def modes():
        k, a, b = 2, 0, 1
        u = fixed.u
        origin = ep.LatticeCoordinates(z1=0.0, z2=0.0, tau=tau)
        rhs = oracle.sample_theta_section(k, a, origin, grid_n, pol, form_type=1) * oracle.sample_theta_section(k, b, u, grid_n, pol)
        solution = oracle.mode_coefficients(oracle.dbar_inverse_L0u(rhs, cutoff), cutoff)
        return max(
            abs(solution.coefficient(m, n) - ep.fourier_a(m, n, k, a, b, u)) for m, n in itertools.product(range(-3, 4), repeat=2)
        )

    checks += [
        Check("norm-k2", "theta basis norm", tol, norm),
        Check("dbar-modes", "Fourier modes of dbar^-1", tol, modes),
    ]
    return checks


SUITES: dict[str, Callable[[RunConfig, np.random.Generator], list[Check]]] = {
    "ainf": ainf_checks,
    "morphism": morphism_checks,
    "cyclic": cyclic_checks,
    "theta-addition": theta_checks,
    "periodicity": periodicity_checks,
    "residue": residue_checks,
    "homotopy": homotopy_checks,
    "oracle": oracle_checks,
}


def run_suite(name: str, config: RunConfig) -> SuiteReport:
    if name not in SUITES:
        raise UnknownSuiteError(f"unknown suite '{name}'; choose from {', '.join(SUITES)}", anchor="suite")
    # first pass in double precision; extended mode only re-runs what it flags
    first = config.model_copy(update={"precision": "double"})
    checks = SUITES[name](first, np.random.default_rng(config.seed))
    # homotopy checks share one fit per (k, l)
    workers = 1 if name == "homotopy" else config.workers
    logger.info("running %d checks of suite %s", len(checks), name)
    results = run_checks(checks, workers)
    if config.precision == "extended":
        results = _rerun_flagged(name, config, results, workers)
    return SuiteReport(suite=name, seed=config.seed, checks=results)


def _rerun_flagged(name: str, config: RunConfig, results: list[CheckResult], workers: int) -> list[CheckResult]:
    """Rebuild the suite from the same seed at extended precision and re-run the failed checks."""
    flagged = {result.name for result in results if not result.passed}
    if not flagged:
        return results
    retry = [check for check in SUITES[name](config, np.random.default_rng(config.seed)) if check.name in flagged]
    logger.info("re-running %d flagged checks at extended precision", len(retry))
    redone = {}
    for result in run_checks(retry, workers):
        redone[result.name] = result if result.detail else result.model_copy(update={"detail": EXTENDED_DETAIL})
    return [redone.get(result.name, result) for result in results]
