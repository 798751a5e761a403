import click
import logging
import sys
from pathlib import Path

from qwork_pipeline.config import VALID_BASE_CONFIGS, RunConfigManager
from qwork_pipeline.pipeline import run_experiment, run_oracle
from qwork_pipeline.selftest import run_selftest
from qwork_pipeline.utils.errors import ConfigError, PipelineStageError, QworkError

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_FAILURE = 3


def load_config(config: str) -> RunConfigManager:
    """A bundled base config by name (e.g. repeated.toml) or a TOML/JSON file path."""
    name = config if config.endswith(".toml") else f"{config}.toml"
    if not Path(config).exists() and name in VALID_BASE_CONFIGS:
        return RunConfigManager(base_config=name)
    return RunConfigManager(config_path=config)


def _fail(error: Exception) -> None:
    cause = error.__cause__ if isinstance(error, PipelineStageError) else error
    if isinstance(cause, ConfigError):
        logger.error(f"configuration error : {error}")
        sys.exit(EXIT_CONFIG_ERROR)
    logger.error(f"failed : {error}")
    sys.exit(EXIT_NUMERICAL_FAILURE)


@click.group()
def cli():
    """Ramsey-interferometric work statistics of a driven harmonic oscillator."""


@cli.command()
@click.argument("config", type=str)
@click.option(
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    required=True,
    help="Directory where all run artifacts are written",
)
@click.option("--seed", type=int, default=None, help="Override measurement.seed")
@click.option(
    "--dim", type=int, default=None, help="Override numerics.dim (Fock truncation)"
)
@click.option(
    "--noise",
    type=float,
    default=None,
    help="Override measurement.noise_sigma (per quadrature)",
)
@click.option("--no-plots", is_flag=True, default=False, help="Skip the SVG figures")
def run(config, out, seed, dim, noise, no_plots):
    """Run the forward and backward measurement for CONFIG and fit the Crooks relation.

    CONFIG is a TOML file or one of the bundled configurations
    (default, repeated, repeated_noisy, null).
    """
    try:
        manager = load_config(config)
        for key, value in (
            ("measurement.seed", seed),
            ("numerics.dim", dim),
            ("measurement.noise_sigma", noise),
        ):
            if value is not None:
                logger.warning(f"overriding {key} : {manager.get(key)} -> {value}")
                manager.set(key, value)
        run_config = manager.to_run_config()
        report = run_experiment(run_config, out, make_plots=False if no_plots else None)
    except (QworkError, ArithmeticError, OSError) as e:
        _fail(e)

    click.echo(f"status      : {report.status}")
    click.echo(f"beta exact  : {report.exact['beta']:.6g}")
    click.echo(f"dF exact    : {report.exact['delta_f']:.6g}")
    if report.fit is not None:
        click.echo(f"beta fitted : {report.beta_hat:.6g}")
        click.echo(f"dF fitted   : {report.delta_f_hat:.6g}")
    else:
        click.echo(f"fit         : {report.message}")
    click.echo(f"report      : {Path(out) / 'report.json'}")


@cli.command()
@click.argument("config", type=str)
def oracle(config):
    """Print the exact line spectra and Crooks ratios for CONFIG, no measurement."""
    try:
        table = run_oracle(load_config(config).to_run_config())
    except (QworkError, ArithmeticError, OSError) as e:
        _fail(e)

    click.echo(f"beta = {table.beta:.12g}   delta_f = {table.delta_f:.12g}")
    click.echo("forward lines (W, weight)")
    for W, weight in table.lines_forward:
        click.echo(f"  {W: .12f}  {weight:.6e}")
    click.echo("backward lines (W, weight)")
    for W, weight in table.lines_backward:
        click.echo(f"  {W: .12f}  {weight:.6e}")
    click.echo("order  W              P_F(W)/P_B(-W)   exp(beta (W - dF))")
    for row in table.rows:
        click.echo(
            f"{row.order:5d}  {row.W: .10f}  {row.ratio:.10e}  {row.exact_ratio:.10e}"
        )


@cli.command()
def selftest():
    """Run the invariant checks; exits non-zero if any fails."""
    try:
        results = run_selftest()
    except (QworkError, ArithmeticError) as e:
        _fail(e)
    for result in results:
        click.echo(str(result))
    failed = [r for r in results if not r.passed]
    if failed:
        click.echo(f"{len(failed)} of {len(results)} checks failed")
        sys.exit(EXIT_NUMERICAL_FAILURE)
    click.echo(f"all {len(results)} checks passed")
