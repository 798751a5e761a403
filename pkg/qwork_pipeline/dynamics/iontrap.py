"""Trapped-ion parameters mapped onto the displaced-oscillator quench.

Expanding the standing-wave potential Omega sin^2(k x + phi) to third order in
the Lamb-Dicke parameter gives an energy shift, a linear force and a trap
frequency change. Only the displacement regime phi = pi/4, where the frequency
change vanishes, is supported.
"""

import logging
import math
from dataclasses import dataclass

from qwork_pipeline.dynamics.protocol import QuenchSchedule, scale_schedule
from qwork_pipeline.utils.errors import UnsupportedQuenchError
from qwork_pipeline.utils.units import UnitSystem

logger = logging.getLogger(__name__)

LAMB_DICKE_WARNING = 0.5
FREQUENCY_CHANGE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class IonParams:
    """
    Ion and laser parameters in internal angular-frequency units.

    Parameters
    ----------
    trap_frequency : float
        omega_0; 1.0 in internal units.
    eta : float
        Lamb-Dicke parameter k x_0.
    rabi_max : float
        Maximum Rabi frequency Omega of the dipole potential.
    phi : float
        Standing-wave phase in radians.
    """

    trap_frequency: float
    eta: float
    rabi_max: float
    phi: float

    def __post_init__(self):
        if not self.trap_frequency > 0:
            raise ValueError(
                f"trap_frequency must be positive, got {self.trap_frequency}"
            )
        if not self.rabi_max > 0:
            raise ValueError(f"rabi_max must be positive, got {self.rabi_max}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.eta > LAMB_DICKE_WARNING:
            logger.warning(
                f"eta = {self.eta} is outside the Lamb-Dicke regime; "
                "the third-order expansion may be inaccurate"
            )

    @classmethod
    def from_physical(
        cls,
        trap_frequency_khz: float,
        eta: float,
        rabi_max_khz: float,
        phi_over_pi: float = 0.25,
    ) -> "IonParams":
        """Build from ordinary frequencies in kHz, with omega_0 = 1 internally."""
        units = UnitSystem(trap_frequency_khz)
        return cls(
            trap_frequency=1.0,
            eta=eta,
            rabi_max=units.freq_from_khz(rabi_max_khz),
            phi=phi_over_pi * math.pi,
        )


def lamb_dicke_coefficients(
    Omega: float, p: IonParams, strict: bool = True
) -> tuple[float, float, float]:
    """
    Energy shift, linear coupling and effective trap frequency at Rabi frequency Omega.

    epsilon = Omega sin^2(phi), g = eta Omega sin(2 phi),
    omega_tilde = omega_0 + 4 eta^2 Omega cos(2 phi).

    Raises
    ------
    UnsupportedQuenchError
        If `strict` and omega_tilde differs from omega_0 by more than 1e-9 omega_0.
    """
    epsilon = Omega * math.sin(p.phi) ** 2
    g = p.eta * Omega * math.sin(2 * p.phi)
    omega_tilde = p.trap_frequency + 4 * p.eta**2 * Omega * math.cos(2 * p.phi)
    shift = abs(omega_tilde - p.trap_frequency)
    if strict and shift > FREQUENCY_CHANGE_TOLERANCE * p.trap_frequency:
        raise UnsupportedQuenchError(
            f"phi = {p.phi / math.pi:.4f} pi changes the trap frequency to "
            f"{omega_tilde:.6g}; only displacement quenches (phi = pi/4) are supported"
        )
    return epsilon, g, omega_tilde


def build_ion_protocol(
    intensity_schedule: QuenchSchedule, p: IonParams
) -> tuple[QuenchSchedule, QuenchSchedule]:
    """
    Coupling and energy-shift schedules produced by a Rabi-frequency schedule Omega(t).

    Both coefficients are linear in Omega, so each schedule is the intensity
    schedule with its values rescaled.

    Returns
    -------
    tuple[QuenchSchedule, QuenchSchedule]
        (lambda_schedule, epsilon_schedule)
    """
    extremes = [
        v
        for seg in intensity_schedule.segments
        for v in (seg.start_value, seg.end_value)
    ]
    for Omega in (min(extremes), max(extremes)):
        lamb_dicke_coefficients(Omega, p)
    epsilon_per_rabi, g_per_rabi, _ = lamb_dicke_coefficients(1.0, p, strict=False)
    lambda_schedule = scale_schedule(intensity_schedule, value_scale=g_per_rabi)
    epsilon_schedule = scale_schedule(intensity_schedule, value_scale=epsilon_per_rabi)
    return lambda_schedule, epsilon_schedule
