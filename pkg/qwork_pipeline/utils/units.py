"""Conversion between laboratory units and the internal units (omega_0 = 1, hbar = 1).

Frequencies are quoted in the lab as ordinary frequencies (kHz) and become
angular frequencies through a factor 2*pi. Times in microseconds become
multiples of 1/omega_0.
"""

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class UnitSystem:
    """Internal unit system anchored on the trap frequency.

    Parameters
    ----------
    trap_frequency_khz : float
        Ordinary trap frequency nu_0 in kHz; omega_0 = 2*pi*nu_0.
    """

    trap_frequency_khz: float

    def __post_init__(self):
        if not self.trap_frequency_khz > 0:
            raise ValueError(
                f"trap frequency must be positive, got {self.trap_frequency_khz}"
            )

    @property
    def omega0_per_us(self) -> float:
        """omega_0 in rad/us."""
        return 2 * math.pi * self.trap_frequency_khz * 1e-3

    def time_from_us(self, t_us: float) -> float:
        return t_us * self.omega0_per_us

    def time_to_us(self, t: float) -> float:
        return t / self.omega0_per_us

    def freq_from_khz(self, f_khz: float) -> float:
        """Ordinary frequency in kHz to angular frequency in units of omega_0."""
        return f_khz / self.trap_frequency_khz

    def freq_to_khz(self, w: float) -> float:
        return w * self.trap_frequency_khz

    def beta_from_mean_phonon(self, n_bar: float) -> float:
        """Inverse temperature (units of 1/omega_0) giving mean phonon number n_bar."""
        if not n_bar > 0:
            raise ValueError(f"mean phonon number must be positive, got {n_bar}")
        return math.log1p(1.0 / n_bar)
