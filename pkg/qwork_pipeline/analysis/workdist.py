"""Work distributions from sampled characteristic functions, peaks and exact lines."""

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import maximum_filter

from qwork_pipeline.dynamics.fockspace import (
    DensityMatrix,
    HermitianOperator,
    UnitaryOperator,
)
from qwork_pipeline.measurement.interferometry import transition_amplitudes
from qwork_pipeline.measurement.signals import CharSignal, Direction
from qwork_pipeline.utils.errors import EmptyPeakSetError

logger = logging.getLogger(__name__)

LINE_MERGE_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class WorkSpectrum:
    """
    Real work density P(W) on a symmetric grid.

    `noise_floor` is the standard deviation the additive signal noise leaves
    in `density`; `imag_residue` is the largest imaginary part discarded by
    the inversion.
    """

    direction: Direction
    dW: float
    w_grid: np.ndarray
    density: np.ndarray
    du: float
    samples: int
    tau: float
    noise_floor: float = 0.0
    imag_residue: float = 0.0

    @property
    def normalization(self) -> float:
        return float(np.sum(self.density) * self.dW)

    def mirrored(self) -> tuple[np.ndarray, np.ndarray]:
        """(W, P(-W)) on the same symmetric grid."""
        return self.w_grid, self.density[::-1]


@dataclass(frozen=True)
class Peak:
    W: float
    amplitude: float
    order: int


@dataclass(frozen=True)
class PeakSet:
    """Spectral peaks sorted by W, at most one per order k (W ~ reference + k omega)."""

    peaks: tuple[Peak, ...]
    direction: Direction
    reference: float
    dW: float = 0.0

    def __post_init__(self):
        W = [p.W for p in self.peaks]
        if any(b <= a for a, b in zip(W, W[1:])):
            raise ValueError("peak positions must be strictly increasing")
        if any(not p.amplitude > 0 for p in self.peaks):
            raise ValueError("peak amplitudes must be positive")

    def __len__(self) -> int:
        return len(self.peaks)

    def by_order(self) -> dict[int, Peak]:
        return {p.order: p for p in self.peaks}

    def to_dict(self) -> dict:
        return {
            "direction": self.direction,
            "reference": self.reference,
            "dW": self.dW,
            "peaks": [asdict(p) for p in self.peaks],
        }


def _odd_length(samples: int, zero_padding: int) -> int:
    n = zero_padding * (2 * samples - 1)
    return n if n % 2 == 1 else n + 1


def invert_to_distribution(sig: CharSignal, zero_padding: int = 4) -> WorkSpectrum:
    """
    Inverse Fourier transform of a one-sided characteristic signal.

    The samples are extended to negative u with chi(-u) = conj(chi(u)), zero
    padded in the middle of the circular buffer, and transformed so that
    sum(P) dW = Re chi(0).

    Parameters
    ----------
    sig : CharSignal
        At least two samples.
    zero_padding : int
        Multiplier on the 2M - 1 extended samples; refines the W grid.

    Returns
    -------
    WorkSpectrum
        On W = 2 pi j / (n du), j = -(n-1)/2 .. (n-1)/2 with n odd.
    """
    M = sig.samples
    if M < 2:
        raise ValueError(f"at least 2 samples are needed, got {M}")
    if zero_padding < 1:
        raise ValueError(f"zero_padding must be >= 1, got {zero_padding}")
    n = _odd_length(M, zero_padding)
    buffer = np.zeros(n, dtype=complex)
    buffer[0] = sig.values[0].real
    buffer[1:M] = sig.values[1:]
    buffer[n - M + 1 :] = np.conj(sig.values[1:][::-1])
    transform = (sig.du / (2 * math.pi)) * np.fft.fft(buffer)
    imag_residue = float(np.max(np.abs(transform.imag)))
    density = np.fft.fftshift(transform.real)
    w_grid = 2 * math.pi * np.fft.fftshift(np.fft.fftfreq(n, sig.du))
    noise_floor = (sig.du / (2 * math.pi)) * sig.noise_sigma * math.sqrt(4 * M - 3)
    return WorkSpectrum(
        direction=sig.direction,
        dW=2 * math.pi / (n * sig.du),
        w_grid=w_grid,
        density=density,
        du=sig.du,
        samples=M,
        tau=sig.tau,
        noise_floor=noise_floor,
        imag_residue=imag_residue,
    )


def line_kernel(spec: WorkSpectrum, offset: np.ndarray) -> np.ndarray:
    """Density at distance `offset` from a unit-weight line, sampled and enveloped."""
    k = np.arange(1, spec.samples)
    if math.isinf(spec.tau):
        decay = np.ones_like(k, dtype=float)
    else:
        decay = np.exp(-k * spec.du / spec.tau)
    offset = np.atleast_1d(np.asarray(offset, dtype=float))
    phases = np.cos(np.outer(offset, k) * spec.du)
    return (spec.du / (2 * math.pi)) * (1.0 + 2.0 * phases @ decay)


def brute_force_lines(
    U: UnitaryOperator,
    H_i: HermitianOperator,
    H_f: HermitianOperator,
    rho: DensityMatrix,
) -> list[tuple[float, float]]:
    """
    Exact line spectrum sum_{n,m} p_n p_{m|n} delta(W - (eps_bar_m - eps_n)).

    p_n are the populations of `rho` in the eigenbasis of H_i (rho is assumed
    diagonal there) and p_{m|n} = |<m_bar|U|n>|^2. Lines closer than 1e-9 are
    merged by adding their weights.

    Returns
    -------
    list[tuple[float, float]]
        (W, weight) sorted by W.
    """
    energies_i, Q_i = H_i.eigensystem
    energies_f = H_f.eigenvalues
    populations = np.einsum("in,ij,jn->n", Q_i.conj(), rho.entries, Q_i).real
    transitions = np.abs(transition_amplitudes(U, H_i, H_f)) ** 2
    W = (energies_f[:, np.newaxis] - energies_i[np.newaxis, :]).ravel()
    weights = (transitions * populations[np.newaxis, :]).ravel()
    order = np.argsort(W, kind="stable")
    W, weights = W[order], weights[order]

    lines: list[tuple[float, float]] = []
    group_start = 0
    for i in range(1, len(W) + 1):
        if i == len(W) or W[i] - W[i - 1] > LINE_MERGE_TOLERANCE:
            group = slice(group_start, i)
            total = float(np.sum(weights[group]))
            position = float(np.mean(W[group]))
            lines.append((position, total))
            group_start = i
    return lines


def _assign_orders(
    candidates: list[tuple[float, float]],
    reference: float,
    omega: float,
    line_tolerance: float,
    direction: Direction,
    dW: float,
) -> PeakSet:
    best: dict[int, Peak] = {}
    for W, amplitude in candidates:
        order = int(round((W - reference) / omega))
        if abs(W - reference - order * omega) > line_tolerance:
            continue
        if order not in best or amplitude > best[order].amplitude:
            best[order] = Peak(W=float(W), amplitude=float(amplitude), order=order)
    peaks = tuple(sorted(best.values(), key=lambda p: p.W))
    return PeakSet(peaks=peaks, direction=direction, reference=float(reference), dW=dW)


def peaks_from_lines(
    lines: list[tuple[float, float]],
    direction: Direction,
    omega: float = 1.0,
    min_weight: float = 0.0,
    reference: float | None = None,
) -> PeakSet:
    """PeakSet view of an exact line spectrum, keeping lines above `min_weight`."""
    kept = [(W, w) for W, w in lines if w > min_weight]
    if not kept:
        raise EmptyPeakSetError(f"no {direction} line heavier than {min_weight:.1e}")
    if reference is None:
        reference = max(kept, key=lambda line: line[1])[0]
    return _assign_orders(kept, reference, omega, 0.5 * omega, direction, 0.0)


def _parabolic_vertex(y0: float, y1: float, y2: float) -> tuple[float, float]:
    curvature = y0 - 2 * y1 + y2
    if curvature == 0:
        return 0.0, y1
    p = 0.5 * (y0 - y2) / curvature
    return p, y1 - 0.25 * (y0 - y2) * p


def correct_crosstalk(peaks: PeakSet, spec: WorkSpectrum) -> PeakSet:
    """
    Remove the overlap of neighbouring lines from the peak heights.

    Each measured height is the sum of the line's own kernel maximum and the
    tails of the other detected lines; the line weights follow from one small
    linear solve with the known sampling/envelope kernel.
    """
    if len(peaks) < 2:
        return peaks
    W = np.array([p.W for p in peaks.peaks])
    heights = np.array([p.amplitude for p in peaks.peaks])
    offsets = W[:, np.newaxis] - W[np.newaxis, :]
    kernel = line_kernel(spec, offsets.ravel()).reshape(offsets.shape)
    coupling = kernel / line_kernel(spec, np.zeros(1))[0]
    corrected = np.linalg.solve(coupling, heights)
    kept = tuple(
        Peak(p.W, float(a), p.order) for p, a in zip(peaks.peaks, corrected) if a > 0
    )
    return PeakSet(kept, peaks.direction, peaks.reference, peaks.dW)


def extract_peaks(
    spec: WorkSpectrum,
    omega: float = 1.0,
    rel_threshold: float = 1e-3,
    snr: float = 5.0,
    line_tolerance: float = 0.1,
    reference: float | None = None,
    crosstalk_correction: bool = False,
) -> PeakSet:
    """
    Spectral lines of a work density.

    A peak is a sample that exceeds max(rel_threshold * max(P), snr * noise_floor)
    and is the largest value within +-line_tolerance. Its position and height
    come from a 3-point parabolic fit. Peaks are assigned the order
    k = round((W - reference) / omega) and kept only within `line_tolerance`
    of reference + k omega, tallest first, one per k.

    Parameters
    ----------
    spec : WorkSpectrum
    omega : float
        Line spacing.
    rel_threshold : float
        Fraction of the spectrum maximum, in (0, 1).
    snr : float
        Multiple of the spectral noise floor a peak must exceed.
    line_tolerance : float
        Half-width of the dominance window and of the line-assignment window.
    reference : float, optional
        W of the k = 0 line; defaults to the tallest peak.
    crosstalk_correction : bool
        Subtract the tails of neighbouring detected lines from each height.

    Returns
    -------
    PeakSet

    Raises
    ------
    EmptyPeakSetError
        If nothing passes the threshold.
    """
    if not 0 < rel_threshold < 1:
        raise ValueError(f"rel_threshold must lie in (0, 1), got {rel_threshold}")
    density = spec.density
    if not np.max(density) > 0:
        raise EmptyPeakSetError(f"{spec.direction} spectrum has no positive density")
    threshold = max(rel_threshold * float(np.max(density)), snr * spec.noise_floor)
    half_window = max(1, int(math.ceil(line_tolerance / spec.dW)))
    local_max = maximum_filter(density, size=2 * half_window + 1, mode="nearest")
    is_peak = (density >= threshold) & (density == local_max)
    is_peak[0] = is_peak[-1] = False

    candidates = []
    for i in np.flatnonzero(is_peak):
        p, height = _parabolic_vertex(density[i - 1], density[i], density[i + 1])
        candidates.append((spec.w_grid[i] + p * spec.dW, height))
    if not candidates:
        raise EmptyPeakSetError(
            f"no {spec.direction} peak above threshold {threshold:.3e} "
            f"(max {np.max(density):.3e}, noise floor {spec.noise_floor:.3e})"
        )
    if reference is None:
        reference = max(candidates, key=lambda c: c[1])[0]
    peaks = _assign_orders(
        candidates, reference, omega, line_tolerance, spec.direction, spec.dW
    )
    if crosstalk_correction:
        peaks = correct_crosstalk(peaks, spec)
    logger.info(
        f"extract_peaks : {spec.direction} : {len(peaks)} peaks : orders "
        f"{[p.order for p in peaks.peaks]}"
    )
    return peaks


def write_spectrum(
    spec: WorkSpectrum, csv_path: Path, w_scale: float = 1.0
) -> None:
    """Write `W,P` rows; W is multiplied by `w_scale` and P divided by it."""
    table = np.column_stack([spec.w_grid * w_scale, spec.density / w_scale])
    np.savetxt(csv_path, table, delimiter=",", header="W,P", comments="", fmt="%.17g")
    logger.info(f"Written : {csv_path}")


def write_peaks(peaks: PeakSet, json_path: Path) -> None:
    with open(json_path, "w") as f:
        json.dump(peaks.to_dict(), f, indent=2, sort_keys=True)
    logger.info(f"Written : {json_path}")
