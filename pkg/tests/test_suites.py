import math

import pytest

from ainfell.config import Tolerances
from ainfell.errors import PoleProximityError, UnknownSuiteError
from ainfell.suites import EXTENDED_DETAIL, SUITES, Check, run_checks, run_suite


def test_every_suite_is_registered():
    assert set(SUITES) == {"ainf", "morphism", "cyclic", "theta-addition", "periodicity", "residue", "homotopy", "oracle"}


def test_unknown_suite(small_config):
    with pytest.raises(UnknownSuiteError):
        run_suite("nosuch", small_config)


def test_raising_check_is_recorded_as_failed():
    def explode():
        raise PoleProximityError("u on the lattice")

    results = run_checks([Check("boom", "pole", 1e-6, explode), Check("fine", "none", 1e-6, lambda: 0.0)], workers=2)
    assert [r.name for r in results] == ["boom", "fine"]
    assert not results[0].passed
    assert math.isinf(results[0].residual)
    assert results[0].detail == "u on the lattice"
    assert results[1].passed


def test_nan_residual_fails():
    (result,) = run_checks([Check("nan", "none", 1.0, lambda: math.nan)], workers=1)
    assert not result.passed


@pytest.mark.parametrize("name", ["ainf", "morphism", "cyclic", "theta-addition", "periodicity", "residue", "homotopy"])
def test_suite_passes(small_config, name):
    report = run_suite(name, small_config)
    assert report.checks
    assert report.passed, [f"{c.name}: {c.residual:.3e}" for c in report.failures()]


def test_oracle_suite_on_a_small_grid(small_config):
    report = run_suite("oracle", small_config)
    assert report.passed, [f"{c.name}: {c.residual:.3e}" for c in report.failures()]


def test_seed_makes_runs_repeatable(small_config):
    first = run_suite("theta-addition", small_config)
    second = run_suite("theta-addition", small_config)
    assert [c.residual for c in first.checks] == [c.residual for c in second.checks]


def test_formal_draw_is_reported(monkeypatch, small_config):
    from ainfell import algebras

    def formal(rng):
        base = algebras.exterior_algebra(2)
        return base.with_inner(algebras.random_inner_product(rng, base.basis))

    monkeypatch.setattr(algebras, "random_dg_algebra", formal)
    report = run_suite("ainf", small_config)
    transfers = [c for c in report.checks if c.name.startswith("transfer")]
    assert transfers and not any(c.passed for c in transfers)
    assert all("formal" in c.detail for c in transfers)


def test_morphism_suite_checks_the_projection(small_config):
    report = run_suite("morphism", small_config)
    assert any(c.name.startswith("projection") for c in report.checks)


def test_extended_precision_reruns_flagged_checks(small_config):
    strict = small_config.model_copy(update={"tolerances": Tolerances(theta=1e-300)})
    double = run_suite("theta-addition", strict)
    assert all(c.detail is None for c in double.failures())

    extended = run_suite("theta-addition", strict.model_copy(update={"precision": "extended"}))
    assert extended.failures()
    assert all(c.detail == EXTENDED_DETAIL for c in extended.failures())
    assert [c.name for c in extended.checks] == [c.name for c in double.checks]
