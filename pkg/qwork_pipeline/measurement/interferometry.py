"""Characteristic functions of work and the Ramsey scheme that measures them.

Three routes lead to chi_F(u):

* the trace tr[U^dagger e^{iuH_f} U e^{-iuH_i} rho]  (`char_forward`),
* the decoherence factor tr[T_up^dagger T_down rho]  (`decoherence_factor`),
* a joint probe-qubit and oscillator simulation      (`ramsey_output`).

Qubit basis order is (down, up) with sigma_z = diag(1, -1), so the probe ends
in <sigma_z> = Re L and <sigma_y> = Im L. In this order the [down, up]
coherence of the output is -i Im L / 2.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from qwork_pipeline.dynamics.fockspace import (
    DEFAULT_TOLERANCES,
    DensityMatrix,
    HermitianOperator,
    Tolerances,
    UnitaryOperator,
    hermitian_function,
)
from qwork_pipeline.measurement.signals import CharSignal, Direction, sample_noise
from qwork_pipeline.utils.errors import DimensionMismatchError
from qwork_pipeline.utils.general import log_timing

logger = logging.getLogger(__name__)

SIGMA_Y = np.array([[0, -1j], [1j, 0]])
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
SWEEP_CHUNK = 128


def _check_dims(*operators) -> int:
    dims = {op.dim for op in operators}
    if len(dims) != 1:
        raise DimensionMismatchError(f"operator dimensions disagree : {sorted(dims)}")
    return dims.pop()


def char_forward(
    U: UnitaryOperator,
    H_i: HermitianOperator,
    H_f: HermitianOperator,
    rho: DensityMatrix,
    u: float,
) -> complex:
    """tr[U^dagger e^{iuH_f} U e^{-iuH_i} rho] from the cached eigendecompositions."""
    _check_dims(U, H_i, H_f, rho)
    forward_f = hermitian_function(H_f, lambda x: np.exp(1j * u * x))
    backward_i = hermitian_function(H_i, lambda x: np.exp(-1j * u * x))
    Ud = U.entries.conj().T
    return complex(np.trace(Ud @ forward_f @ U.entries @ backward_i @ rho.entries))


def char_backward(
    U: UnitaryOperator,
    H_i: HermitianOperator,
    H_f: HermitianOperator,
    rho_f: DensityMatrix,
    u: float,
) -> complex:
    """tr[U e^{iuH_i} U^dagger e^{-iuH_f} rho_f], the time-reversed process."""
    return char_forward(U.dagger, H_f, H_i, rho_f, u)


def transition_amplitudes(
    U: UnitaryOperator, H_i: HermitianOperator, H_f: HermitianOperator
) -> np.ndarray:
    """<m_bar|U|n>, m over eigenstates of H_f (rows) and n over those of H_i."""
    _check_dims(U, H_i, H_f)
    Q_i = H_i.eigensystem[1]
    Q_f = H_f.eigensystem[1]
    return Q_f.conj().T @ U.entries @ Q_i


def char_sweep(
    U: UnitaryOperator,
    H_i: HermitianOperator,
    H_f: HermitianOperator,
    rho: DensityMatrix,
    u: np.ndarray,
) -> np.ndarray:
    """
    chi_F on a grid of real u, sharing one pair of eigendecompositions.

    In the eigenbases, chi(u) = sum_m f_m (V G rho' V^dagger)_mm with
    f = e^{iu eps_bar}, G = diag(e^{-iu eps}), V = Q_f^dagger U Q_i and
    rho' = Q_i^dagger rho Q_i.
    """
    _check_dims(U, H_i, H_f, rho)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    energies_i, Q_i = H_i.eigensystem
    energies_f = H_f.eigenvalues
    V = transition_amplitudes(U, H_i, H_f)
    rho_eigen = Q_i.conj().T @ rho.entries @ Q_i
    values = np.empty(len(u), dtype=complex)
    for start in range(0, len(u), SWEEP_CHUNK):
        chunk = u[start : start + SWEEP_CHUNK]
        g = np.exp(-1j * np.outer(chunk, energies_i))
        f = np.exp(1j * np.outer(chunk, energies_f))
        X = (V[np.newaxis, :, :] * g[:, np.newaxis, :]) @ rho_eigen
        diagonal = np.einsum("kmn,mn->km", X, V.conj())
        values[start : start + SWEEP_CHUNK] = np.sum(f * diagonal, axis=1)
    return values


def _folded_char(
    V: np.ndarray, log_weights: np.ndarray, energies_from, energies_to, u
) -> complex:
    # sum_{m,n} |V_mn|^2 exp(log_w_n + i u (E_to_m - E_from_n)) with the Gibbs
    # weight kept inside the exponent so complex u never multiplies exp(+beta H).
    exponent = log_weights[np.newaxis, :] + 1j * u * (
        energies_to[:, np.newaxis] - energies_from[np.newaxis, :]
    )
    return complex(np.sum(np.abs(V) ** 2 * np.exp(exponent)))


def log_partition_function(H: HermitianOperator, beta: float) -> float:
    return float(logsumexp(-beta * H.eigenvalues))


def thermal_char_forward(
    U: UnitaryOperator,
    H_i: HermitianOperator,
    H_f: HermitianOperator,
    beta: float,
    u: complex,
) -> complex:
    """
    chi_F(u) for the Gibbs state of H_i, valid for complex u.

    Evaluating at u = i beta gives <exp(-beta W)>.
    """
    V = transition_amplitudes(U, H_i, H_f)
    energies_i = H_i.eigenvalues
    log_weights = -beta * energies_i - log_partition_function(H_i, beta)
    return _folded_char(V, log_weights, energies_i, H_f.eigenvalues, u)


def thermal_char_backward(
    U: UnitaryOperator,
    H_i: HermitianOperator,
    H_f: HermitianOperator,
    beta: float,
    u: complex,
) -> complex:
    """chi_B(u) for the Gibbs state of H_f under U^dagger, valid for complex u."""
    return thermal_char_forward(U.dagger, H_f, H_i, beta, u)


def decoherence_factor(
    T_down: UnitaryOperator, T_up: UnitaryOperator, rho: DensityMatrix
) -> complex:
    """L = tr[T_up^dagger T_down rho]."""
    _check_dims(T_down, T_up, rho)
    return complex(np.trace(T_up.entries.conj().T @ T_down.entries @ rho.entries))


def ramsey_output(
    T_down: UnitaryOperator,
    T_up: UnitaryOperator,
    rho: DensityMatrix,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> DensityMatrix:
    """
    Probe-qubit state after Hadamard, conditional evolution and Hadamard.

    The qubit starts in |down>. The joint evolution is block-diagonal,
    diag(T_down, T_up), on the 2N-dimensional space; the oscillator is traced
    out at the end.

    Returns
    -------
    DensityMatrix
        2x2 state with populations (1 +- Re L)/2.
    """
    n = _check_dims(T_down, T_up, rho)
    identity = np.eye(n)
    hadamard = np.kron(HADAMARD, identity)
    conditional = np.zeros((2 * n, 2 * n), dtype=complex)
    conditional[:n, :n] = T_down.entries
    conditional[n:, n:] = T_up.entries
    probe = np.zeros((2, 2), dtype=complex)
    probe[0, 0] = 1.0
    joint = np.kron(probe, rho.entries)
    sequence = hadamard @ conditional @ hadamard
    joint = sequence @ joint @ sequence.conj().T
    qubit = np.einsum("anbn->ab", joint.reshape(2, n, 2, n))
    qubit = 0.5 * (qubit + qubit.conj().T)
    return DensityMatrix(qubit, tolerances)


def qubit_expectations(rho_q: DensityMatrix) -> tuple[float, float]:
    """(<sigma_z>, <sigma_y>) of a probe-qubit state."""
    sz = np.trace(SIGMA_Z @ rho_q.entries).real
    sy = np.trace(SIGMA_Y @ rho_q.entries).real
    return float(sz), float(sy)


@dataclass(frozen=True, eq=False)
class Sweep:
    """Everything needed to sample one characteristic function.

    For the backward direction the roles are already swapped: `U` is the
    reversed evolution, `H_initial` is H(lambda_f) and `rho` its Gibbs state.
    """

    direction: Direction
    U: UnitaryOperator
    H_initial: HermitianOperator
    H_final: HermitianOperator
    rho: DensityMatrix
    schedule_text: str = ""

    @classmethod
    def forward(cls, U, H_i, H_f, rho_i, schedule_text: str = "") -> "Sweep":
        return cls("forward", U, H_i, H_f, rho_i, schedule_text)

    @classmethod
    def backward(
        cls, U, H_i, H_f, rho_f, schedule_text: str = "", U_backward=None
    ) -> "Sweep":
        """Reverse of the forward process; `U_backward` defaults to U^dagger."""
        U_b = U.dagger if U_backward is None else U_backward
        return cls("backward", U_b, H_f, H_i, rho_f, schedule_text)


@log_timing
def measured_signal(
    sweep: Sweep,
    du: float,
    M: int,
    tau: float = math.inf,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> CharSignal:
    """
    Sampled chi(k du) exp(-k du / tau) plus complex Gaussian noise.

    Parameters
    ----------
    sweep : Sweep
        Direction, evolution and states.
    du : float
        Sample spacing (> 0).
    M : int
        Number of samples (>= 2).
    tau : float
        Envelope decay time, ``math.inf`` for none.
    noise_sigma : float
        Per-quadrature noise standard deviation, in units of |chi| <= 1.
    seed : int
        Non-negative seed; each sample gets its own stream.

    Returns
    -------
    CharSignal
    """
    if not du > 0:
        raise ValueError(f"du must be positive, got {du}")
    if M < 2:
        raise ValueError(f"at least 2 samples are needed, got {M}")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    u = du * np.arange(M)
    values = char_sweep(sweep.U, sweep.H_initial, sweep.H_final, sweep.rho, u)
    if not math.isinf(tau):
        values = values * np.exp(-u / tau)
    values = values + sample_noise(noise_sigma, seed, sweep.direction, M)
    logger.info(
        f"measured_signal : {sweep.direction} : M={M} : du={du:.4g} : "
        f"tau={tau:.4g} : sigma={noise_sigma}"
    )
    return CharSignal(
        du=du,
        values=values,
        tau=tau,
        noise_sigma=noise_sigma,
        seed=seed,
        direction=sweep.direction,
        schedule_text=sweep.schedule_text,
    )
