"""Time-ordered evolution of the driven oscillator.

H(t) = omega (n + 1/2) + lambda(t) (a + a^dagger) + epsilon(t)
"""

import logging
import math

import numpy as np
from scipy.linalg import eigh_tridiagonal

from qwork_pipeline.dynamics.fockspace import (
    DEFAULT_TOLERANCES,
    DensityMatrix,
    Tolerances,
    UnitaryOperator,
    build_hamiltonian,
    edge_population,
    hermitian_function,
    unitarity_residual,
)
from qwork_pipeline.dynamics.protocol import QuenchSchedule, eval_schedule
from qwork_pipeline.utils.errors import (
    NumericalFailureError,
    ScheduleDomainError,
    TruncationError,
)
from qwork_pipeline.utils.general import log_timing

logger = logging.getLogger(__name__)

UNITARITY_CHECK_INTERVAL = 64


def default_steps(s: QuenchSchedule, omega: float = 1.0) -> int:
    """Number of midpoint steps so that dt <= min(T_min / 10, 0.01 * 2 pi / omega)."""
    dt_max = min(s.shortest_switching_time / 10.0, 0.01 * 2 * math.pi / omega)
    return max(1, math.ceil(s.total_quench_time / dt_max))


def _step_exponential(
    diagonal: np.ndarray, offdiagonal: np.ndarray, dt: float
) -> np.ndarray:
    values, vectors = eigh_tridiagonal(diagonal, offdiagonal)
    return (vectors * np.exp(-1j * dt * values)[np.newaxis, :]) @ vectors.T


@log_timing
def propagate(
    s: QuenchSchedule,
    omega: float = 1.0,
    epsilon_schedule: QuenchSchedule | None = None,
    dim: int = 64,
    steps: int | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    reference_state: DensityMatrix | None = None,
) -> UnitaryOperator:
    """
    Midpoint-rule product U = prod_k exp(-i H(t_k + dt/2) dt), later times leftmost.

    Parameters
    ----------
    s : QuenchSchedule
        Coupling lambda(t), already including the oscillator length.
    omega : float
        Oscillator angular frequency.
    epsilon_schedule : QuenchSchedule, optional
        Energy shift epsilon(t); must span the same t_Q as `s`.
    dim : int
        Fock truncation.
    steps : int, optional
        Number of time steps; `default_steps` when omitted.
    tolerances : Tolerances
        Unitarity tolerance, guard levels and edge-population bound.
    reference_state : DensityMatrix, optional
        When given, the population that U carries into the guard levels is
        checked against ``tolerances.edge``.

    Returns
    -------
    UnitaryOperator

    Raises
    ------
    NumericalFailureError
        If unitarity is lost at a spot check or at the end.
    TruncationError
        If the evolved reference state populates the guard levels.
    """
    t_q = s.total_quench_time
    if epsilon_schedule is not None and not math.isclose(
        epsilon_schedule.total_quench_time, t_q, rel_tol=1e-12
    ):
        raise ScheduleDomainError(
            f"epsilon schedule spans {epsilon_schedule.total_quench_time!r}, "
            f"coupling schedule spans {t_q!r}"
        )
    if steps is None or steps == 0:
        steps = default_steps(s, omega)
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")

    dt = t_q / steps
    midpoints = (np.arange(steps) + 0.5) * dt
    lambdas = eval_schedule(s, midpoints)
    if epsilon_schedule is not None:
        epsilons = eval_schedule(epsilon_schedule, midpoints)
    else:
        epsilons = np.zeros(steps)
    logger.info(f"propagate : dim={dim} : steps={steps} : dt={dt:.4g}")

    levels = omega * (np.arange(dim) + 0.5)
    ladder = np.sqrt(np.arange(1, dim, dtype=float))
    U = np.eye(dim, dtype=complex)
    previous = None
    step_exponential = None
    for k in range(steps):
        current = (lambdas[k], epsilons[k])
        if current != previous:
            step_exponential = _step_exponential(
                levels + epsilons[k], lambdas[k] * ladder, dt
            )
            previous = current
        U = step_exponential @ U
        if (k + 1) % UNITARITY_CHECK_INTERVAL == 0:
            residual = unitarity_residual(U)
            if not residual < tolerances.unitarity:
                raise NumericalFailureError(
                    f"unitarity lost after step {k + 1} of {steps}", residual=residual
                )

    unitary = UnitaryOperator(U, tolerances.unitarity, tolerances.n_pad)
    if reference_state is not None:
        check_edge_population(unitary, reference_state, tolerances)
    return unitary


def check_edge_population(
    U: UnitaryOperator, rho: DensityMatrix, tolerances: Tolerances = DEFAULT_TOLERANCES
) -> float:
    """Guard-level population of U rho U^dagger; raises TruncationError above it."""
    evolved = U.entries @ rho.entries @ U.entries.conj().T
    population = edge_population(evolved, tolerances.n_pad)
    if population > tolerances.edge:
        raise TruncationError(
            f"evolved state reaches the truncation edge at dim={U.dim}; increase dim",
            population=population,
        )
    return population


def conditional_pair(
    s: QuenchSchedule,
    u: float,
    omega: float = 1.0,
    dim: int = 64,
    steps: int | None = None,
    epsilon_schedule: QuenchSchedule | None = None,
    U: UnitaryOperator | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[UnitaryOperator, UnitaryOperator]:
    """
    Conditional evolutions of the Ramsey scheme after a delay u = t_R - t_Q.

    T_up = exp(-i u H(lambda_f)) U(t_Q) and T_down = U(t_Q) exp(-i u H(lambda_i)).
    A precomputed `U` is reused instead of propagating again.

    Returns
    -------
    tuple[UnitaryOperator, UnitaryOperator]
        (T_down, T_up)
    """
    if not u >= 0:
        raise ValueError(f"u must be >= 0, got {u}")
    if U is None:
        U = propagate(s, omega, epsilon_schedule, dim, steps, tolerances)
    eps_i = epsilon_schedule.lambda_i if epsilon_schedule is not None else 0.0
    eps_f = epsilon_schedule.lambda_f if epsilon_schedule is not None else 0.0
    H_i = build_hamiltonian(omega, s.lambda_i, eps_i, U.dim)
    H_f = build_hamiltonian(omega, s.lambda_f, eps_f, U.dim)
    free_i = hermitian_function(H_i, lambda x: np.exp(-1j * u * x))
    free_f = hermitian_function(H_f, lambda x: np.exp(-1j * u * x))
    T_down = UnitaryOperator(U.entries @ free_i, tolerances.unitarity, tolerances.n_pad)
    T_up = UnitaryOperator(free_f @ U.entries, tolerances.unitarity, tolerances.n_pad)
    return T_down, T_up
