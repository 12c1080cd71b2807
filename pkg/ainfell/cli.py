"""ainfell command line.

Exit codes: 0 success, 1 failed checks or internal error, 2 invalid input
(bad modulus, unknown suite, bad config), 3 pole-margin violation,
4 transversality-margin violation, 5 ill-conditioned homotopy fit.
"""

import logging
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
import typer
from pydantic import BaseModel, ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from ainfell import dolbeault_oracle, elliptic_products as ep
from ainfell.config import RunConfig, Tolerances, TruncationPolicy, load_run_config
from ainfell.errors import AinfellError
from ainfell.models import FitRecord, HomotopyRecord, ProductRecord, QueryRecord, SuiteReport, pair
from ainfell.suites import SUITES, run_suite
from ainfell.theta import Characteristic, Modulus, theta_char_eval

logger = logging.getLogger("ainfell")

app = typer.Typer(help=__doc__, add_completion=False, no_args_is_help=True)
stderr = Console(stderr=True)


class Side(str, Enum):
    holomorphic = "holomorphic"
    fukaya = "fukaya"
    oracle = "oracle"


def configure_logging(verbose: bool) -> None:
    handler = RichHandler(console=stderr, show_path=False, rich_tracebacks=True)
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING, format="%(message)s", handlers=[handler], force=True)


def parse_complex(text: str) -> complex:
    """``"RE,IM"`` -> complex."""
    try:
        re_part, im_part = text.split(",")
        return complex(float(re_part), float(im_part))
    except ValueError as e:
        raise typer.BadParameter(f"expected RE,IM, got '{text}'") from e


def _config(ctx: typer.Context, **overrides) -> RunConfig:
    options = dict(ctx.obj or {})
    path = options.pop("config_path", None)
    options.update({k: v for k, v in overrides.items() if v is not None})
    return load_run_config(path, options)


def _emit(record: BaseModel, config: RunConfig) -> None:
    text = record.model_dump_json(indent=2)
    typer.echo(text)
    if config.output is not None:
        config.output.write_text(text + "\n")


def _fail(e: Exception) -> typer.Exit:
    if isinstance(e, AinfellError):
        logger.error("%s%s", e, f" [{e.anchor}]" if e.anchor else "")
        return typer.Exit(code=e.exit_code)
    logger.error("invalid input: %s", e)
    return typer.Exit(code=2)


@app.callback()
def main(
    ctx: typer.Context,
    config: Optional[Path] = typer.Option(None, "--config", envvar="AINFELL_CONFIG", help="JSON run configuration."),
    output: Optional[Path] = typer.Option(None, "--output", help="Also write the JSON record here."),
    precision: Optional[str] = typer.Option(None, "--precision", help="double or extended."),
    workers: Optional[int] = typer.Option(None, "--workers"),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
):
    configure_logging(verbose)
    ctx.obj = {"config_path": config, "output": output, "precision": precision, "workers": workers}


class ThetaRecord(BaseModel):
    value: tuple[float, float]
    terms_used: Optional[int]


@app.command("theta")
def cmd_theta(
    ctx: typer.Context,
    x: str = typer.Option(..., "--x", help="RE,IM"),
    tau: str = typer.Option(..., "--tau", help="RE,IM"),
    char: str = typer.Option("0/1", "--char", help="Characteristic P/Q."),
    eps: Optional[float] = typer.Option(None, "--eps", help="Tail bound."),
):
    """Evaluate theta_{P/Q}(x, tau)."""
    try:
        config = _config(ctx)
        pol = config.truncation if eps is None else TruncationPolicy(eps=eps, max_terms=config.truncation.max_terms)
        result = theta_char_eval(Characteristic.parse(char), parse_complex(x), Modulus(tau=parse_complex(tau)), pol, config.precision)
    except (AinfellError, ValidationError, ValueError) as e:
        raise _fail(e)
    _emit(ThetaRecord(value=pair(result.value), terms_used=result.terms_used), config)


@app.command("m3")
def cmd_m3(
    ctx: typer.Context,
    side: Side = typer.Option(Side.holomorphic, "--side"),
    k: int = typer.Option(..., "--k"),
    l: int = typer.Option(..., "--l"),
    a: int = typer.Option(0, "--a"),
    b: int = typer.Option(0, "--b"),
    c: int = typer.Option(0, "--c"),
    d: int = typer.Option(0, "--d"),
    u: str = typer.Option(..., "--u", help="RE,IM"),
    v: str = typer.Option(..., "--v", help="RE,IM"),
    tau: str = typer.Option("0,1", "--tau", help="RE,IM"),
    fit: bool = typer.Option(False, "--fit", help="Also fit the homotopy n2 at w = u + v and record f^d_q."),
    samples: int = typer.Option(8, "--samples"),
):
    """Triple product coefficient on theta_{d/l}(lx + u + v) from one of three pipelines."""
    try:
        config = _config(ctx)
        modulus = Modulus(tau=parse_complex(tau))
        query = ep.TripleProductQuery.build(k, l, a, b, c, d, parse_complex(u), parse_complex(v), modulus)
        record = ProductRecord(query=QueryRecord.from_query(query))
        if side is Side.holomorphic:
            value = ep.m3_holomorphic(query, config.truncation, convention=config.gamma_convention, pole_margin=config.pole_margin)
            record.G = pair(value)
        elif side is Side.fukaya:
            value = ep.m3_fukaya(
                query, config.truncation,
                pole_margin=config.pole_margin, transversality_margin=config.transversality_margin,
            )
            record.F = pair(value)
        else:
            ep.check_pole(query.u, config.pole_margin)
            value = dolbeault_oracle.m3_oracle(query, config.grid_n, min(config.modes_m, config.grid_n // 2 - 1), config.truncation)
            record.oracle = pair(value)
        if fit:
            rng = np.random.default_rng(config.seed)
            coeffs = ep.homotopy_fit(
                query.k, query.l, query.a, query.w, ep.sample_u(rng, modulus, samples), config.truncation,
                d=query.d,
                convention=config.gamma_convention,
                pole_margin=config.pole_margin,
                transversality_margin=config.transversality_margin,
            )
            record.fit = FitRecord.from_coefficients(coeffs, query.d)
    except (AinfellError, ValidationError, ValueError) as e:
        raise _fail(e)
    _emit(record, config)


@app.command("verify")
def cmd_verify(
    ctx: typer.Context,
    suite: str = typer.Option(..., "--suite", help=f"One of: {', '.join(SUITES)}."),
    seed: Optional[int] = typer.Option(None, "--seed"),
    tol: Optional[float] = typer.Option(None, "--tol", help="Override every tolerance."),
):
    """Run a named verification suite; exit 0 iff every check passes."""
    try:
        config = _config(ctx, seed=seed)
        if tol is not None:
            config = config.model_copy(update={"tolerances": Tolerances(**{name: tol for name in Tolerances.model_fields})})
        report = run_suite(suite, config)
    except (AinfellError, ValidationError, ValueError) as e:
        raise _fail(e)
    _render(report)
    _emit(report, config)
    if not report.passed:
        raise typer.Exit(code=1)


def _render(report: SuiteReport) -> None:
    table = Table(title=f"suite {report.suite} (seed {report.seed})")
    for column in ("check", "identity", "residual", "tolerance", "status"):
        table.add_column(column)
    for check in report.checks:
        status = "[green]pass[/green]" if check.passed else "[red]FAIL[/red]"
        table.add_row(check.name, check.anchor, f"{check.residual:.2e}", f"{check.tolerance:.0e}", status)
    stderr.print(table)


@app.command("fit-homotopy")
def cmd_fit_homotopy(
    ctx: typer.Context,
    k: int = typer.Option(..., "--k"),
    l: int = typer.Option(..., "--l"),
    a: int = typer.Option(0, "--a"),
    d: Optional[int] = typer.Option(None, "--d", help="Fit a single d; all d by default."),
    w: str = typer.Option(..., "--w", help="RE,IM"),
    tau: str = typer.Option("0,1", "--tau", help="RE,IM"),
    samples: int = typer.Option(8, "--samples"),
    seed: Optional[int] = typer.Option(None, "--seed"),
):
    """Fit the homotopy coefficients f^d_{a,q}(w) and check m3 - m3' = n2(alpha, beta1 beta2)."""
    try:
        config = _config(ctx, seed=seed)
        modulus = Modulus(tau=parse_complex(tau))
        rng = np.random.default_rng(config.seed)
        w_coords = ep.LatticeCoordinates.from_value(parse_complex(w), modulus)
        u_samples = ep.sample_u(rng, modulus, samples)
        coeffs = ep.homotopy_fit(
            k, l, a, w_coords, u_samples, config.truncation,
            d=d,
            convention=config.gamma_convention,
            pole_margin=config.pole_margin,
            transversality_margin=config.transversality_margin,
        )
        end_to_end = None
        if d is None:
            fresh = ep.sample_u(rng, modulus, 1)[0]
            end_to_end = max(
                ep.end_to_end_residual(coeffs, b, c, fresh, config.truncation, convention=config.gamma_convention)
                for b in range(k)
                for c in range(l)
            )
    except (AinfellError, ValidationError, ValueError) as e:
        raise _fail(e)
    _emit(HomotopyRecord.from_coefficients(coeffs, end_to_end), config)
