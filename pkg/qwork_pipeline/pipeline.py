"""End-to-end forward/backward experiment and the exact-line oracle."""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import matplotlib
import numpy as np
import scipy

from qwork_pipeline import __version__
from qwork_pipeline.analysis.fluctuation import (
    CrooksFit,
    CrooksPoints,
    crooks_points,
    exact_delta_f,
    fit_crooks,
    jarzynski_check,
    write_fit,
)
from qwork_pipeline.analysis.workdist import (
    PeakSet,
    WorkSpectrum,
    brute_force_lines,
    extract_peaks,
    invert_to_distribution,
    peaks_from_lines,
    write_peaks,
    write_spectrum,
)
from qwork_pipeline.config import RunConfig, ScheduleConfig, write_resolved_config
from qwork_pipeline.dynamics.fockspace import (
    DensityMatrix,
    HermitianOperator,
    Tolerances,
    UnitaryOperator,
    build_hamiltonian,
    edge_population,
    gibbs_state,
    unitarity_residual,
)
from qwork_pipeline.dynamics.iontrap import IonParams, build_ion_protocol
from qwork_pipeline.dynamics.propagator import (
    check_edge_population,
    default_steps,
    propagate,
)
from qwork_pipeline.dynamics.protocol import (
    QuenchSchedule,
    format_schedule,
    parse_schedule,
    repeated_tanh,
    reverse_schedule,
    scale_schedule,
    single_tanh,
)
from qwork_pipeline.measurement.interferometry import Sweep, measured_signal
from qwork_pipeline.measurement.signals import CharSignal, write_char_signal
from qwork_pipeline.utils.errors import ConfigError, DegenerateFitError
from qwork_pipeline.utils.general import log_timing, stage
from qwork_pipeline.utils.plotting import emit_plots
from qwork_pipeline.utils.units import UnitSystem

logger = logging.getLogger(__name__)

ORACLE_MIN_WEIGHT = 1e-6
NOISE_MODEL = (
    "additive complex Gaussian, independent per quadrature and sample, "
    "sigma relative to |chi| <= 1"
)


@dataclass(frozen=True, eq=False)
class Experiment:
    """Hamiltonians, states and schedules of a forward/backward pair, internal units."""

    units: UnitSystem
    ion: IonParams
    beta: float
    lambda_schedule: QuenchSchedule
    epsilon_schedule: QuenchSchedule
    backward_lambda: QuenchSchedule
    backward_epsilon: QuenchSchedule
    backward_is_reverse: bool
    H_i: HermitianOperator
    H_f: HermitianOperator
    rho_i: DensityMatrix
    rho_f: DensityMatrix
    tolerances: Tolerances

    @property
    def omega(self) -> float:
        return self.ion.trap_frequency

    @property
    def delta_f_closed_form(self) -> float:
        """epsilon - g^2 / omega between the end points of a displacement quench."""
        lam, eps = self.lambda_schedule, self.epsilon_schedule
        final = eps.lambda_f - lam.lambda_f**2 / self.omega
        initial = eps.lambda_i - lam.lambda_i**2 / self.omega
        return final - initial


def intensity_schedule(
    cfg: ScheduleConfig, units: UnitSystem, rabi_max: float
) -> QuenchSchedule:
    """Rabi-frequency schedule Omega(t) in internal units from its configuration."""
    if cfg.kind == "tanh":
        duration = cfg.duration_us if cfg.duration_us > 0 else None
        schedule = single_tanh(cfg.start, cfg.end, cfg.T_us, duration)
    elif cfg.kind == "repeated_tanh":
        schedule = repeated_tanh(
            cfg.start, cfg.end, cfg.t_slow_us, cfg.t_fast_us, cfg.cycles
        )
    else:
        schedule = parse_schedule(cfg.text)
    return scale_schedule(
        schedule, value_scale=rabi_max, time_scale=units.omega0_per_us
    )


def prepare_experiment(config: RunConfig) -> Experiment:
    """Build schedules, Hamiltonians and thermal states from a run configuration."""
    trap = config.trap
    units = UnitSystem(trap.frequency_khz)
    ion = IonParams.from_physical(
        trap.frequency_khz, trap.eta, trap.rabi_max_khz, trap.phi_over_pi
    )
    beta = units.beta_from_mean_phonon(trap.mean_phonon_number)
    tolerances = config.numerics.tolerances
    dim = config.numerics.dim

    omega_schedule = intensity_schedule(config.schedule_forward, units, ion.rabi_max)
    lambda_schedule, epsilon_schedule = build_ion_protocol(omega_schedule, ion)
    if config.backward_text.strip():
        backward = scale_schedule(
            parse_schedule(config.backward_text),
            value_scale=ion.rabi_max,
            time_scale=units.omega0_per_us,
        )
        backward_lambda, backward_epsilon = build_ion_protocol(backward, ion)
        if not (
            math.isclose(
                backward_lambda.lambda_i, lambda_schedule.lambda_f, abs_tol=1e-12
            )
            and math.isclose(
                backward_lambda.lambda_f, lambda_schedule.lambda_i, abs_tol=1e-12
            )
        ):
            raise ConfigError(
                "schedule_backward.text must run from the final to the initial "
                "value of the forward schedule"
            )
        backward_is_reverse = False
    else:
        backward_lambda = reverse_schedule(lambda_schedule)
        backward_epsilon = reverse_schedule(epsilon_schedule)
        backward_is_reverse = True

    omega = ion.trap_frequency
    H_i = build_hamiltonian(
        omega, lambda_schedule.lambda_i, epsilon_schedule.lambda_i, dim
    )
    H_f = build_hamiltonian(
        omega, lambda_schedule.lambda_f, epsilon_schedule.lambda_f, dim
    )
    rho_i = gibbs_state(H_i, beta, tolerances)
    rho_f = gibbs_state(H_f, beta, tolerances)
    logger.info(
        f"prepare_experiment : beta={beta:.6g} : "
        f"lambda_f={lambda_schedule.lambda_f:.6g} : "
        f"epsilon_f={epsilon_schedule.lambda_f:.6g} : "
        f"t_Q={lambda_schedule.total_quench_time:.6g}"
    )
    return Experiment(
        units=units,
        ion=ion,
        beta=beta,
        lambda_schedule=lambda_schedule,
        epsilon_schedule=epsilon_schedule,
        backward_lambda=backward_lambda,
        backward_epsilon=backward_epsilon,
        backward_is_reverse=backward_is_reverse,
        H_i=H_i,
        H_f=H_f,
        rho_i=rho_i,
        rho_f=rho_f,
        tolerances=tolerances,
    )


def propagate_pair(
    experiment: Experiment, config: RunConfig
) -> tuple[UnitaryOperator, UnitaryOperator, int]:
    """Forward and backward evolutions; the backward one is U^dagger by default."""
    steps = config.numerics.steps or default_steps(
        experiment.lambda_schedule, experiment.omega
    )
    U = propagate(
        experiment.lambda_schedule,
        experiment.omega,
        experiment.epsilon_schedule,
        config.numerics.dim,
        steps,
        experiment.tolerances,
        reference_state=experiment.rho_i,
    )
    if experiment.backward_is_reverse:
        U_b = U.dagger
    else:
        U_b = propagate(
            experiment.backward_lambda,
            experiment.omega,
            experiment.backward_epsilon,
            config.numerics.dim,
            config.numerics.steps or None,
            experiment.tolerances,
        )
    check_edge_population(U_b, experiment.rho_f, experiment.tolerances)
    return U, U_b, steps


def exact_lines(
    experiment: Experiment, U: UnitaryOperator, U_b: UnitaryOperator
) -> tuple[list[tuple[float, float]], list[tuple[float, float]]]:
    """Brute-force line spectra of the forward and backward processes."""
    lines_forward = brute_force_lines(
        U, experiment.H_i, experiment.H_f, experiment.rho_i
    )
    lines_backward = brute_force_lines(
        U_b, experiment.H_f, experiment.H_i, experiment.rho_f
    )
    return lines_forward, lines_backward


def oracle_peak_sets(
    lines_forward, lines_backward, omega: float = 1.0
) -> tuple[PeakSet, PeakSet]:
    """Exact lines as peak sets, backward orders anchored at -W of the forward ones."""
    fwd = peaks_from_lines(lines_forward, "forward", omega, ORACLE_MIN_WEIGHT)
    bwd = peaks_from_lines(
        lines_backward, "backward", omega, ORACLE_MIN_WEIGHT, reference=-fwd.reference
    )
    return fwd, bwd


def oracle_crooks_deviation(
    lines_forward, lines_backward, beta: float, delta_f: float, omega: float = 1.0
) -> float:
    """Largest relative deviation of exact line ratios from exp(beta (W - Delta F))."""
    points = crooks_points(
        *oracle_peak_sets(lines_forward, lines_backward, omega),
        position_tolerance=1e-6,
    )
    return max(abs(p.ratio / math.exp(beta * (p.W - delta_f)) - 1.0) for p in points)


@dataclass
class Measurement:
    """Signals, spectra and peaks of both directions, with the Crooks fit they give."""

    signals: tuple[CharSignal, CharSignal]
    spectra: tuple[WorkSpectrum, WorkSpectrum]
    peak_sets: tuple[PeakSet, PeakSet]
    points: CrooksPoints
    fit: CrooksFit | None
    status: str = "ok"
    message: str = ""


def measure_and_fit(
    experiment: Experiment,
    U: UnitaryOperator,
    U_b: UnitaryOperator,
    config: RunConfig,
    seed: int | None = None,
) -> Measurement:
    """
    Sample both characteristic functions, invert them and fit the Crooks line.

    The evolutions are inputs so that repeated noise realisations of one
    configuration share a single propagation.

    Parameters
    ----------
    experiment : Experiment
    U, U_b : UnitaryOperator
        Forward and backward evolutions from `propagate_pair`.
    config : RunConfig
    seed : int, optional
        Replaces ``measurement.seed``.

    Returns
    -------
    Measurement
        ``status`` is "degenerate" when fewer than two distinct work values pair up.
    """
    measurement = config.measurement
    units = experiment.units
    seed = measurement.seed if seed is None else seed
    du = units.time_from_us(measurement.du_us)
    if math.isinf(measurement.tau_us):
        tau = math.inf
    else:
        tau = units.time_from_us(measurement.tau_us)

    with stage("sweep"):
        forward_sweep = Sweep.forward(
            U,
            experiment.H_i,
            experiment.H_f,
            experiment.rho_i,
            format_schedule(experiment.lambda_schedule),
        )
        backward_sweep = Sweep.backward(
            U,
            experiment.H_i,
            experiment.H_f,
            experiment.rho_f,
            format_schedule(experiment.backward_lambda),
            U_backward=U_b,
        )
        signals = tuple(
            measured_signal(
                sweep, du, measurement.samples, tau, measurement.noise_sigma, seed
            )
            for sweep in (forward_sweep, backward_sweep)
        )

    with stage("invert"):
        spectra = tuple(
            invert_to_distribution(sig, config.numerics.zero_padding)
            for sig in signals
        )

    with stage("peaks"):
        peak_options = dict(
            omega=experiment.omega,
            rel_threshold=config.fit.rel_threshold,
            snr=config.fit.snr,
            line_tolerance=config.fit.line_tolerance,
            crosstalk_correction=config.fit.crosstalk_correction,
        )
        forward_peaks = extract_peaks(spectra[0], **peak_options)
        # backward order k sits at -W of forward order -k
        backward_peaks = extract_peaks(
            spectra[1], reference=-forward_peaks.reference, **peak_options
        )
        peak_sets = (forward_peaks, backward_peaks)

    fit: CrooksFit | None = None
    status, message = "ok", ""
    with stage("crooks"):
        points = crooks_points(*peak_sets)
        try:
            fit = fit_crooks(points, weighted=config.fit.weighted)
        except DegenerateFitError as e:
            status, message = "degenerate", str(e)
            logger.warning(f"measure_and_fit : Crooks fit degenerate : {e}")

    return Measurement(signals, spectra, peak_sets, points, fit, status, message)


@dataclass
class RunReport:
    name: str
    seed: int
    status: str
    fit: dict | None
    exact: dict
    jarzynski: dict
    oracle: dict
    diagnostics: dict
    peaks: dict
    assumptions: dict
    versions: dict
    message: str = ""
    artifacts: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def beta_hat(self) -> float | None:
        return None if self.fit is None else self.fit["beta_hat"]

    @property
    def delta_f_hat(self) -> float | None:
        return None if self.fit is None else self.fit["delta_f_hat"]


def _versions() -> dict:
    return {
        "qwork_pipeline": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "matplotlib": matplotlib.__version__,
    }


@log_timing
def run_experiment(
    config: RunConfig, out_dir: Path, make_plots: bool | None = None
) -> RunReport:
    """
    Forward and backward Ramsey measurements, inversion, peaks, fit and cross-checks.

    Every artifact is written to `out_dir`: the resolved configuration, the
    sampled signals, spectra, peak sets, the fit and ``report.json``.

    Parameters
    ----------
    config : RunConfig
    out_dir : Path
        Created if missing.
    make_plots : bool, optional
        Overrides ``output.plots``.

    Returns
    -------
    RunReport

    Raises
    ------
    ConfigError
        If the configuration cannot describe a supported experiment.
    PipelineStageError
        Wrapping any module error, labelled with the failing stage.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    make_plots = config.output.plots if make_plots is None else make_plots
    measurement = config.measurement
    numerics = config.numerics
    written: list[Path] = []

    with stage("prepare"):
        experiment = prepare_experiment(config)
    units = experiment.units
    tolerances = experiment.tolerances

    with stage("propagate"):
        U, U_b, steps = propagate_pair(experiment, config)

    measured = measure_and_fit(experiment, U, U_b, config)
    signals, spectra, peak_sets = measured.signals, measured.spectra, measured.peak_sets
    fit, points = measured.fit, measured.points

    with stage("checks"):
        delta_f = exact_delta_f(
            experiment.H_i, experiment.H_f, experiment.beta, tolerances
        )
        lhs, rhs = jarzynski_check(
            U,
            experiment.H_i,
            experiment.H_f,
            experiment.rho_i,
            experiment.beta,
            tolerances,
        )
        lines_forward, lines_backward = exact_lines(experiment, U, U_b)
        oracle_deviation = oracle_crooks_deviation(
            lines_forward, lines_backward, experiment.beta, delta_f, experiment.omega
        )

    with stage("write"):
        time_scale, w_scale = 1.0, 1.0
        if config.output.time_units == "us":
            time_scale = 1.0 / units.omega0_per_us
            w_scale = units.trap_frequency_khz
        written.append(write_resolved_config(config.data, out_dir / "config.json"))
        for sig, spec, peaks in zip(signals, spectra, peak_sets):
            csv = out_dir / f"chi_{sig.direction}.csv"
            write_char_signal(sig, csv, time_scale, config.output.time_units)
            written += [csv, csv.with_suffix(".json")]
            write_spectrum(spec, out_dir / f"spectrum_{sig.direction}.csv", w_scale)
            write_peaks(peaks, out_dir / f"peaks_{sig.direction}.json")
            written += [
                out_dir / f"spectrum_{sig.direction}.csv",
                out_dir / f"peaks_{sig.direction}.json",
            ]
        if fit is not None:
            write_fit(
                fit,
                out_dir / "crooks_fit.json",
                extra={
                    "delta_f_hat_khz": units.freq_to_khz(fit.delta_f_hat),
                    "dropped_peaks": points.dropped,
                },
            )
            written.append(out_dir / "crooks_fit.json")
        if make_plots:
            written += emit_plots(
                spectra, peak_sets, fit, out_dir, experiment.beta, delta_f
            )

    n_pad = tolerances.n_pad
    report = RunReport(
        name=config.name,
        seed=measurement.seed,
        status=measured.status,
        fit=(
            None
            if fit is None
            else {k: v for k, v in fit.to_dict().items() if k != "points"}
        ),
        exact={
            "beta": experiment.beta,
            "delta_f": delta_f,
            "delta_f_khz": units.freq_to_khz(delta_f),
            "delta_f_closed_form": experiment.delta_f_closed_form,
            "lambda_f": experiment.lambda_schedule.lambda_f,
            "epsilon_f": experiment.epsilon_schedule.lambda_f,
        },
        jarzynski={"lhs": lhs, "rhs": rhs, "relative_error": abs(lhs / rhs - 1.0)},
        oracle={
            "crooks_max_relative_deviation": oracle_deviation,
            "min_weight": ORACLE_MIN_WEIGHT,
        },
        diagnostics={
            "dim": numerics.dim,
            "n_pad": n_pad,
            "steps": steps,
            "t_q": experiment.lambda_schedule.total_quench_time,
            "unitarity_residual": unitarity_residual(U.entries, numerics.dim - n_pad),
            "thermal_tail_initial": edge_population(experiment.rho_i.entries, n_pad),
            "thermal_tail_final": edge_population(experiment.rho_f.entries, n_pad),
            "edge_population_forward": check_edge_population(
                U, experiment.rho_i, tolerances
            ),
            "edge_population_backward": check_edge_population(
                U_b, experiment.rho_f, tolerances
            ),
            "normalization": {spec.direction: spec.normalization for spec in spectra},
            "imag_residue": {spec.direction: spec.imag_residue for spec in spectra},
            "noise_floor": spectra[0].noise_floor,
            "dW": spectra[0].dW,
            "dropped_peaks": points.dropped,
        },
        peaks={ps.direction: [p.order for p in ps.peaks] for ps in peak_sets},
        assumptions={
            "noise_model": NOISE_MODEL,
            "envelope": "exp(-u / tau) applied to the exact signal before noise",
            "t_fast_us": config.schedule_forward.t_fast_us,
            "t_slow_us": config.schedule_forward.t_slow_us,
            "schedule_forward": format_schedule(experiment.lambda_schedule),
            "schedule_backward": format_schedule(experiment.backward_lambda),
            "units": "internal: omega_0 = 1, time in 1/omega_0",
        },
        versions=_versions(),
        message=measured.message,
        artifacts=sorted(p.name for p in written) + ["report.json"],
    )
    with open(out_dir / "report.json", "w") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
    logger.info(f"Written : {out_dir / 'report.json'}")
    return report


@dataclass(frozen=True)
class OracleRow:
    order: int
    W: float
    weight_forward: float
    weight_backward: float
    ratio: float
    exact_ratio: float


@dataclass(frozen=True)
class OracleTable:
    beta: float
    delta_f: float
    rows: tuple[OracleRow, ...]
    lines_forward: tuple[tuple[float, float], ...]
    lines_backward: tuple[tuple[float, float], ...]


@log_timing
def run_oracle(config: RunConfig) -> OracleTable:
    """Exact line spectra of both directions and their Crooks ratios, no measurement."""
    with stage("prepare"):
        experiment = prepare_experiment(config)
    with stage("propagate"):
        U, U_b, _ = propagate_pair(experiment, config)
    with stage("checks"):
        delta_f = exact_delta_f(
            experiment.H_i, experiment.H_f, experiment.beta, experiment.tolerances
        )
        lines_forward, lines_backward = exact_lines(experiment, U, U_b)
        points = crooks_points(
            *oracle_peak_sets(lines_forward, lines_backward, experiment.omega),
            position_tolerance=1e-6,
        )
    rows = tuple(
        OracleRow(
            order=p.order,
            W=p.W,
            weight_forward=p.amplitude_forward,
            weight_backward=p.amplitude_backward,
            ratio=p.ratio,
            exact_ratio=math.exp(experiment.beta * (p.W - delta_f)),
        )
        for p in points
    )
    return OracleTable(
        beta=experiment.beta,
        delta_f=delta_f,
        rows=rows,
        lines_forward=tuple(lines_forward),
        lines_backward=tuple(lines_backward),
    )
