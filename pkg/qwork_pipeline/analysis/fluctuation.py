"""Crooks ratios and fit, the Jarzynski equality and exact free energies."""

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from qwork_pipeline.analysis.workdist import PeakSet
from qwork_pipeline.dynamics.fockspace import (
    DEFAULT_TOLERANCES,
    DensityMatrix,
    HermitianOperator,
    Tolerances,
    UnitaryOperator,
    gibbs_state,
)
from qwork_pipeline.measurement.interferometry import (
    log_partition_function,
    thermal_char_forward,
)
from qwork_pipeline.utils.errors import (
    DegenerateFitError,
    FitDomainError,
    InvalidStateError,
    NoOverlapError,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CrooksPoint:
    W: float
    ratio: float
    log_ratio: float
    order: int = 0
    amplitude_forward: float = 1.0
    amplitude_backward: float = 1.0


@dataclass(frozen=True)
class CrooksFit:
    """ln(P_F(W) / P_B(-W)) = A W - B, so beta_hat = A and delta_f_hat = B / A."""

    points: tuple[CrooksPoint, ...]
    A: float
    B: float
    residual: float
    weighted: bool = False
    units: str = "omega0"

    @property
    def beta_hat(self) -> float:
        return self.A

    @property
    def delta_f_hat(self) -> float:
        return self.B / self.A if self.A != 0 else math.nan

    def to_dict(self) -> dict:
        return {
            "A": self.A,
            "B": self.B,
            "beta_hat": self.beta_hat,
            "delta_f_hat": self.delta_f_hat,
            "residual": self.residual,
            "weighted": self.weighted,
            "units": self.units,
            "points": [asdict(p) for p in self.points],
        }


@dataclass(frozen=True)
class CrooksPoints:
    """Matched ratios plus the number of peaks that found no partner."""

    points: tuple[CrooksPoint, ...]
    dropped: int = 0

    def __iter__(self):
        return iter(self.points)

    def __len__(self) -> int:
        return len(self.points)


def exact_delta_f(
    H_i: HermitianOperator,
    H_f: HermitianOperator,
    beta: float,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> float:
    """
    (1 / beta) ln(Z_i / Z_f) from the eigenvalues of both Hamiltonians.

    Raises
    ------
    TruncationError
        If either thermal state reaches the guard levels.
    """
    gibbs_state(H_i, beta, tolerances)
    gibbs_state(H_f, beta, tolerances)
    log_z_i = log_partition_function(H_i, beta)
    return (log_z_i - log_partition_function(H_f, beta)) / beta


def crooks_points(
    fwd: PeakSet, bwd: PeakSet, position_tolerance: float | None = None
) -> CrooksPoints:
    """
    Pair each forward peak at W with the backward peak at -W.

    Pairing is by position: the partner is the backward peak nearest to -W,
    kept when |W_f + W_b| <= position_tolerance (default twice the coarser
    grid spacing). Each backward peak is used at most once. The point carries
    the forward order. Unmatched peaks are dropped and counted.

    Raises
    ------
    NoOverlapError
        If no pair survives.
    """
    if len(fwd) == 0 or len(bwd) == 0:
        raise NoOverlapError("both peak sets must be non-empty")
    if position_tolerance is None:
        coarser = max(fwd.dW, bwd.dW)
        position_tolerance = 2 * coarser if coarser > 0 else 1e-9
    mirrored = -np.array([p.W for p in bwd.peaks])
    points = []
    used = set()
    for peak in fwd.peaks:
        distance = np.abs(mirrored - peak.W)
        index = int(np.argmin(distance))
        if distance[index] > position_tolerance or index in used:
            continue
        used.add(index)
        partner = bwd.peaks[index]
        ratio = peak.amplitude / partner.amplitude
        points.append(
            CrooksPoint(
                W=peak.W,
                ratio=ratio,
                log_ratio=math.log(ratio),
                order=peak.order,
                amplitude_forward=peak.amplitude,
                amplitude_backward=partner.amplitude,
            )
        )
    dropped = (len(fwd) - len(points)) + (len(bwd) - len(used))
    if not points:
        raise NoOverlapError(
            f"no forward peak has a backward partner at -W "
            f"(forward orders {[p.order for p in fwd.peaks]}, "
            f"backward orders {[p.order for p in bwd.peaks]})"
        )
    if dropped:
        logger.warning(f"crooks_points : {dropped} unmatched peaks dropped")
    return CrooksPoints(tuple(points), dropped)


def fit_crooks(points, weighted: bool = False) -> CrooksFit:
    """
    Least-squares line ln(ratio) = A W - B.

    Parameters
    ----------
    points : iterable of CrooksPoint
    weighted : bool
        Weight each point by the inverse of its relative amplitude error,
        1 / sqrt(1/a_F^2 + 1/a_B^2), instead of uniformly.

    Returns
    -------
    CrooksFit

    Raises
    ------
    FitDomainError
        If a ratio is not positive.
    DegenerateFitError
        With fewer than two points or when all W coincide.
    """
    points = tuple(points)
    if any(not p.ratio > 0 for p in points):
        raise FitDomainError("all Crooks ratios must be positive")
    if len(points) < 2:
        raise DegenerateFitError(
            f"a Crooks fit needs at least 2 points, got {len(points)}"
        )
    W = np.array([p.W for p in points])
    if np.ptp(W) == 0:
        raise DegenerateFitError("all Crooks points share the same W")
    log_ratio = np.log([p.ratio for p in points])
    weights = None
    if weighted:
        weights = np.array(
            [
                1.0 / math.sqrt(p.amplitude_forward**-2 + p.amplitude_backward**-2)
                for p in points
            ]
        )
    slope, intercept = np.polyfit(W, log_ratio, 1, w=weights)
    residual = float(np.sqrt(np.mean((log_ratio - (slope * W + intercept)) ** 2)))
    fit = CrooksFit(
        points=points,
        A=float(slope),
        B=float(-intercept),
        residual=residual,
        weighted=weighted,
    )
    logger.info(
        f"fit_crooks : beta_hat={fit.beta_hat:.5g} : "
        f"delta_f_hat={fit.delta_f_hat:.5g} : "
        f"residual={residual:.3g} : points={len(points)}"
    )
    return fit


def jarzynski_check(
    U: UnitaryOperator,
    H_i: HermitianOperator,
    H_f: HermitianOperator,
    rho: DensityMatrix,
    beta: float,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[float, float]:
    """
    <exp(-beta W)> against exp(-beta Delta F).

    The left side is chi_F continued to u = i beta, i.e.
    tr[U^dagger e^{-beta H_f} U e^{beta H_i} rho], with the Gibbs weight of
    `rho` folded into the exponent. The guard-level bound is the stricter
    ``tolerances.jarzynski_tail``.

    Raises
    ------
    InvalidStateError
        If `rho` is not the Gibbs state of H_i at `beta`.
    TruncationError
        If a thermal state populates the guard levels above the stricter bound.
    """
    strict = Tolerances(
        **{
            **asdict(tolerances),
            "tail": min(tolerances.tail, tolerances.jarzynski_tail),
        }
    )
    expected = gibbs_state(H_i, beta, strict)
    gibbs_state(H_f, beta, strict)
    mismatch = float(np.max(np.abs(expected.entries - rho.entries)))
    if mismatch > tolerances.trace:
        raise InvalidStateError(
            f"rho is not the Gibbs state of H_i at beta={beta} "
            f"(max deviation {mismatch:.2e})"
        )
    lhs = thermal_char_forward(U, H_i, H_f, beta, 1j * beta).real
    rhs = math.exp(-beta * exact_delta_f(H_i, H_f, beta, strict))
    logger.info(f"jarzynski_check : lhs={lhs:.12g} : rhs={rhs:.12g}")
    return lhs, rhs


def write_fit(fit: CrooksFit, json_path: Path, extra: dict | None = None) -> None:
    data = fit.to_dict()
    if extra:
        data.update(extra)
    with open(json_path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
    logger.info(f"Written : {json_path}")
