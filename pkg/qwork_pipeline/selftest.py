"""Fast in-process invariant checks run by ``qwork selftest``."""

import logging
import math
from dataclasses import dataclass

import numpy as np

from qwork_pipeline.analysis.fluctuation import exact_delta_f, jarzynski_check
from qwork_pipeline.analysis.workdist import brute_force_lines, invert_to_distribution
from qwork_pipeline.dynamics.fockspace import (
    build_hamiltonian,
    gibbs_state,
    unitarity_residual,
)
from qwork_pipeline.dynamics.propagator import conditional_pair, propagate
from qwork_pipeline.dynamics.protocol import (
    QuenchSchedule,
    repeated_tanh,
    scale_schedule,
    single_tanh,
)
from qwork_pipeline.measurement.interferometry import (
    Sweep,
    char_forward,
    decoherence_factor,
    measured_signal,
    qubit_expectations,
    ramsey_output,
)
from qwork_pipeline.pipeline import oracle_crooks_deviation

logger = logging.getLogger(__name__)

SELFTEST_SEED = 20120101
RANDOM_INSTANCES = 10
DIM_RANDOM = 40
DIM_QUENCH = 64

# Displacement quench in internal units: g = eta Omega, eps = Omega / 2
G_FINAL = 0.165
EPS_FINAL = 0.25
T_SWITCH = 1.885
T_SUDDEN = 0.01
STRONG_COUPLINGS = (0.8, 1.2)
BETA = math.log(2.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    threshold: float

    @property
    def passed(self) -> bool:
        return bool(self.value < self.threshold)

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} : {self.name} : {self.value:.3e} < {self.threshold:.0e}"


def _displacement_quench(
    shape: QuenchSchedule, g: float = G_FINAL
) -> tuple[QuenchSchedule, QuenchSchedule]:
    return (
        scale_schedule(shape, value_scale=g),
        scale_schedule(shape, value_scale=EPS_FINAL),
    )


def check_three_routes(
    instances: int = RANDOM_INSTANCES, seed: int = SELFTEST_SEED
) -> list[CheckResult]:
    """Trace formula, decoherence factor and joint Ramsey readout on random quenches."""
    rng = np.random.default_rng(seed)
    trace_vs_l, ramsey_vs_l = 0.0, 0.0
    for _ in range(instances):
        lam_f = rng.uniform(0.05, 0.3)
        T = rng.uniform(0.5, 3.0)
        beta = rng.uniform(1.0, 2.0)
        u = rng.uniform(0.0, 10.0)
        schedule = single_tanh(0.0, lam_f, T)
        U = propagate(schedule, dim=DIM_RANDOM)
        H_i = build_hamiltonian(1.0, 0.0, 0.0, DIM_RANDOM)
        H_f = build_hamiltonian(1.0, lam_f, 0.0, DIM_RANDOM)
        rho = gibbs_state(H_i, beta)
        chi = char_forward(U, H_i, H_f, rho, u)
        T_down, T_up = conditional_pair(schedule, u, dim=DIM_RANDOM, U=U)
        L = decoherence_factor(T_down, T_up, rho)
        sz, sy = qubit_expectations(ramsey_output(T_down, T_up, rho))
        trace_vs_l = max(trace_vs_l, abs(chi - L))
        ramsey_vs_l = max(ramsey_vs_l, abs(sz - L.real), abs(sy - L.imag))
    return [
        CheckResult("char_forward vs decoherence_factor", trace_vs_l, 1e-10),
        CheckResult("ramsey readout vs decoherence_factor", ramsey_vs_l, 1e-10),
    ]


def check_fluctuation_theorems() -> list[CheckResult]:
    """Discrete Crooks ratios and Jarzynski equality, slow switches to sudden kicks."""
    results = []
    H_i = build_hamiltonian(1.0, 0.0, 0.0, DIM_QUENCH)
    rho_i = gibbs_state(H_i, BETA)
    quenches = [
        ("single tanh", single_tanh(0.0, 1.0, T_SWITCH), G_FINAL),
        (
            "repeated tanh",
            repeated_tanh(0.0, 1.0, 4 * T_SWITCH, 0.05, cycles=1),
            G_FINAL,
        ),
    ] + [
        (f"sudden g={g}", single_tanh(0.0, 1.0, T_SUDDEN), g) for g in STRONG_COUPLINGS
    ]
    for label, shape, g in quenches:
        H_f = build_hamiltonian(1.0, g, EPS_FINAL, DIM_QUENCH)
        rho_f = gibbs_state(H_f, BETA)
        lam, eps = _displacement_quench(shape, g)
        U = propagate(lam, epsilon_schedule=eps, dim=DIM_QUENCH, reference_state=rho_i)
        delta_f = exact_delta_f(H_i, H_f, BETA)
        deviation = oracle_crooks_deviation(
            brute_force_lines(U, H_i, H_f, rho_i),
            brute_force_lines(U.dagger, H_f, H_i, rho_f),
            BETA,
            delta_f,
        )
        lhs, rhs = jarzynski_check(U, H_i, H_f, rho_i, BETA)
        residual = unitarity_residual(U.entries, DIM_QUENCH - 8)
        results += [
            CheckResult(f"discrete Crooks ({label})", deviation, 1e-9),
            CheckResult(f"Jarzynski ({label})", abs(lhs / rhs - 1.0), 1e-8),
            CheckResult(f"unitarity ({label})", residual, 1e-10),
        ]
    return results


def check_normalization() -> list[CheckResult]:
    """A noiseless spectrum integrates to Re chi(0) = 1."""
    H_i = build_hamiltonian(1.0, 0.0, 0.0, DIM_QUENCH)
    H_f = build_hamiltonian(1.0, G_FINAL, EPS_FINAL, DIM_QUENCH)
    rho_i = gibbs_state(H_i, BETA)
    lam, eps = _displacement_quench(single_tanh(0.0, 1.0, T_SWITCH))
    U = propagate(lam, epsilon_schedule=eps, dim=DIM_QUENCH)
    sweep = Sweep.forward(U, H_i, H_f, rho_i)
    sig = measured_signal(sweep, du=0.9425, M=200, tau=94.25)
    spec = invert_to_distribution(sig)
    return [CheckResult("spectrum normalization", abs(spec.normalization - 1.0), 1e-6)]


def run_selftest() -> list[CheckResult]:
    results = (
        check_three_routes() + check_fluctuation_theorems() + check_normalization()
    )
    for result in results:
        if result.passed:
            logger.info(str(result))
        else:
            logger.error(str(result))
    return results
