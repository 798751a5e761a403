"""Dense linear algebra on the truncated oscillator Fock space.

All operators are plain complex (or real) numpy arrays wrapped in small
immutable containers that check their defining property on construction.
Units: hbar = 1 and omega_0 = 1 unless the caller passes another omega.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from qwork_pipeline.utils.errors import (
    InvalidDimensionError,
    InvalidStateError,
    NotHermitianError,
    NumericalFailureError,
    TruncationError,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances shared by the dynamics and analysis modules."""

    hermiticity: float = 1e-12
    unitarity: float = 1e-10
    trace: float = 1e-10
    positivity: float = 1e-10
    tail: float = 1e-10
    edge: float = 1e-8
    jarzynski_tail: float = 1e-12
    eigen_residual: float = 1e-8
    n_pad: int = 8


DEFAULT_TOLERANCES = Tolerances()


def _check_square(entries: np.ndarray, name: str) -> None:
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise InvalidDimensionError(
            f"{name} must be a square matrix, got shape {entries.shape}"
        )
    if entries.shape[0] < 2:
        raise InvalidDimensionError(
            f"{name} dimension must be >= 2, got {entries.shape[0]}"
        )


def hermiticity_residual(entries: np.ndarray) -> float:
    return float(np.max(np.abs(entries - entries.conj().T)))


def unitarity_residual(entries: np.ndarray, n_phys: int | None = None) -> float:
    """max |(U^dagger U - I)_ij| restricted to the first `n_phys` levels."""
    n = entries.shape[0] if n_phys is None else n_phys
    gram = entries.conj().T @ entries
    return float(np.max(np.abs(gram[:n, :n] - np.eye(n))))


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """Hermitian matrix on the truncated Fock space (angular-frequency units)."""

    entries: np.ndarray
    tolerance: float = field(default=DEFAULT_TOLERANCES.hermiticity, repr=False)

    def __post_init__(self):
        entries = np.asarray(self.entries)
        _check_square(entries, "HermitianOperator")
        residual = hermiticity_residual(entries)
        if residual > self.tolerance:
            raise NotHermitianError(
                f"operator is not Hermitian : max |H - H^dagger| = {residual:.3e}"
            )
        entries = entries.copy()
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def eigensystem(self) -> tuple[np.ndarray, np.ndarray]:
        """Ascending eigenvalues and the matching orthonormal eigenvectors (columns)."""
        try:
            values, vectors = np.linalg.eigh(self.entries)
        except np.linalg.LinAlgError as e:
            raise NumericalFailureError(
                f"eigendecomposition failed : {e}", residual=float("inf")
            ) from e
        scale = max(1.0, float(np.max(np.abs(values))))
        residual = float(
            np.max(np.abs(self.entries @ vectors - vectors * values[np.newaxis, :]))
        )
        bound = DEFAULT_TOLERANCES.eigen_residual * scale
        if not np.isfinite(residual) or residual > bound:
            raise NumericalFailureError(
                "eigendecomposition inaccurate", residual=residual
            )
        return values, vectors

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.eigensystem[0]


@dataclass(frozen=True, eq=False)
class UnitaryOperator:
    """Unitary matrix on the truncated Fock space.

    Unitarity is checked on the lowest ``dim - n_pad`` levels, which is where
    a truncated propagator is expected to be accurate.
    """

    entries: np.ndarray
    tolerance: float = field(default=DEFAULT_TOLERANCES.unitarity, repr=False)
    n_pad: int = field(default=0, repr=False)

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=complex)
        _check_square(entries, "UnitaryOperator")
        n_phys = max(1, entries.shape[0] - self.n_pad)
        residual = unitarity_residual(entries, n_phys)
        if not residual < self.tolerance:
            raise NumericalFailureError("operator is not unitary", residual=residual)
        entries = entries.copy()
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def dagger(self) -> "UnitaryOperator":
        return UnitaryOperator(self.entries.conj().T, self.tolerance, self.n_pad)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, positive semi-definite, unit-trace matrix."""

    entries: np.ndarray
    tolerances: Tolerances = field(default=DEFAULT_TOLERANCES, repr=False)

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=complex)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise InvalidDimensionError(
                f"DensityMatrix must be square, got shape {entries.shape}"
            )
        residual = hermiticity_residual(entries)
        if residual > self.tolerances.hermiticity:
            raise NotHermitianError(
                f"density matrix is not Hermitian : residual {residual:.3e}"
            )
        trace = np.trace(entries).real
        if abs(trace - 1.0) > self.tolerances.trace:
            raise InvalidStateError(f"density matrix trace is {trace!r}, expected 1")
        smallest = float(np.linalg.eigvalsh(entries).min())
        if smallest < -self.tolerances.positivity:
            raise InvalidStateError(
                f"density matrix is not positive : smallest eigenvalue {smallest:.3e}"
            )
        entries = entries.copy()
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def populations(self) -> np.ndarray:
        return self.entries.diagonal().real


def ladder_operators(dim: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Truncated lowering and raising operators.

    Parameters
    ----------
    dim : int
        Fock truncation N (levels 0..N-1).

    Returns
    -------
    tuple[np.ndarray, np.ndarray]
        (lower, raise) with lower[n-1, n] = sqrt(n).

    Raises
    ------
    InvalidDimensionError
        If dim < 2.
    """
    if int(dim) != dim or dim < 2:
        raise InvalidDimensionError(f"dim must be an integer >= 2, got {dim}")
    lower = np.diag(np.sqrt(np.arange(1, int(dim), dtype=float)), k=1)
    return lower, lower.conj().T


def build_hamiltonian(
    omega: float, lam: float, epsilon: float, dim: int
) -> HermitianOperator:
    """
    omega (a^dagger a + 1/2) + lam (a + a^dagger) + epsilon I on the truncated space.

    `lam` already contains the oscillator length x_0 of the potential.
    """
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    lower, upper = ladder_operators(dim)
    n = np.arange(dim, dtype=float)
    entries = np.diag(omega * (n + 0.5) + epsilon) + lam * (lower + upper)
    return HermitianOperator(entries)


def hermitian_function(
    H: HermitianOperator, f: Callable[[np.ndarray], np.ndarray]
) -> np.ndarray:
    """
    Q f(Lambda) Q^dagger for H = Q Lambda Q^dagger.

    Parameters
    ----------
    H : HermitianOperator
        Operator whose cached eigendecomposition is used.
    f : callable
        Scalar function applied to the real eigenvalues. May return complex
        values (e.g. ``lambda x: np.exp(1j * u * x)``). Vectorised callables are
        applied to the whole eigenvalue array at once.

    Returns
    -------
    np.ndarray
        The matrix function.

    Raises
    ------
    NumericalFailureError
        If the eigendecomposition fails or is inaccurate.
    """
    values, vectors = H.eigensystem
    try:
        fvalues = np.asarray(f(values))
        if fvalues.shape != values.shape:
            raise ValueError
    except (TypeError, ValueError):
        fvalues = np.array([f(x) for x in values])
    return (vectors * fvalues[np.newaxis, :]) @ vectors.conj().T


def edge_population(entries: np.ndarray, n_pad: int) -> float:
    """Total population of the top `n_pad` Fock levels of a density matrix."""
    if n_pad <= 0:
        return 0.0
    return float(np.sum(np.asarray(entries).diagonal().real[-n_pad:]))


def boltzmann_weights(H: HermitianOperator, beta: float) -> np.ndarray:
    """Normalised Boltzmann weights over the ascending eigenvalues of H."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    exponent = -beta * H.eigenvalues
    return np.exp(exponent - logsumexp(exponent))


def gibbs_state(
    H: HermitianOperator, beta: float, tolerances: Tolerances = DEFAULT_TOLERANCES
) -> DensityMatrix:
    """
    Thermal state exp(-beta H) / Z.

    Parameters
    ----------
    H : HermitianOperator
    beta : float
        Inverse temperature in units of 1/omega.
    tolerances : Tolerances
        ``tail`` bounds the population left in the ``n_pad`` guard levels.

    Returns
    -------
    DensityMatrix

    Raises
    ------
    TruncationError
        If the thermal population of the guard levels exceeds the tail tolerance.
    """
    weights = boltzmann_weights(H, beta)
    vectors = H.eigensystem[1]
    entries = (vectors * weights[np.newaxis, :]) @ vectors.conj().T
    entries = 0.5 * (entries + entries.conj().T)
    tail = edge_population(entries, tolerances.n_pad)
    if tail > tolerances.tail:
        raise TruncationError(
            f"thermal tail exceeds {tolerances.tail:.1e} at dim={H.dim}, "
            f"n_pad={tolerances.n_pad}; increase dim",
            population=tail,
        )
    return DensityMatrix(entries, tolerances)


def mean_phonon_number(rho: DensityMatrix) -> float:
    """tr[rho a^dagger a]."""
    n = np.arange(rho.dim, dtype=float)
    return float(np.dot(rho.populations, n))
