"""Sampled characteristic-function signals and their on-disk form."""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

logger = logging.getLogger(__name__)

Direction = Literal["forward", "backward"]
DIRECTION_INDEX: dict[str, int] = {"forward": 0, "backward": 1}


@dataclass(frozen=True, eq=False)
class CharSignal:
    """
    Uniformly sampled chi(u_k), u_k = k du for k = 0..M-1.

    Parameters
    ----------
    du : float
        Sample spacing in 1/omega_0.
    values : np.ndarray
        Complex samples including envelope and noise.
    tau : float
        Envelope decay time; ``math.inf`` for no envelope.
    noise_sigma : float
        Per-quadrature standard deviation of the additive noise.
    seed : int
        Seed the noise was drawn from.
    direction : {"forward", "backward"}
    schedule_text : str
        Text form of the schedule that produced the signal.
    """

    du: float
    values: np.ndarray
    tau: float
    noise_sigma: float
    seed: int
    direction: Direction
    schedule_text: str = ""

    @property
    def samples(self) -> int:
        return len(self.values)

    @property
    def u_grid(self) -> np.ndarray:
        return self.du * np.arange(self.samples)

    def metadata(self) -> dict:
        return {
            "direction": self.direction,
            "du": self.du,
            "samples": self.samples,
            "tau": "inf" if math.isinf(self.tau) else self.tau,
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
            "schedule": self.schedule_text,
        }


def sample_noise(
    sigma: float, seed: int, direction: Direction, samples: int
) -> np.ndarray:
    """
    Complex Gaussian noise, one independent stream per sample.

    Sample k of a given direction always receives the same draw for a given
    seed, whatever order or worker the samples are produced in.
    """
    noise = np.zeros(samples, dtype=complex)
    if sigma == 0:
        return noise
    for k in range(samples):
        sequence = np.random.SeedSequence(
            entropy=seed, spawn_key=(DIRECTION_INDEX[direction], k)
        )
        xi, zeta = np.random.default_rng(sequence).normal(0.0, sigma, size=2)
        noise[k] = complex(xi, zeta)
    return noise


def write_char_signal(
    sig: CharSignal,
    csv_path: Path,
    time_scale: float = 1.0,
    time_units: str = "internal",
) -> Path:
    """
    Write `u,re,im` rows to `csv_path` and the metadata to a JSON sidecar.

    `time_scale` converts internal time to the output unit (u_out = u * time_scale).

    Returns
    -------
    Path
        Location of the JSON sidecar.
    """
    csv_path = Path(csv_path)
    table = np.column_stack([sig.u_grid * time_scale, sig.values.real, sig.values.imag])
    np.savetxt(
        csv_path, table, delimiter=",", header="u,re,im", comments="", fmt="%.17g"
    )
    metadata = sig.metadata()
    metadata["time_units"] = time_units
    metadata["du_out"] = sig.du * time_scale
    sidecar = csv_path.with_suffix(".json")
    with open(sidecar, "w") as f:
        json.dump(metadata, f, indent=2, sort_keys=True)
    logger.info(f"Written : {csv_path}")
    return sidecar


def read_char_signal(csv_path: Path) -> CharSignal:
    """Read a signal written by `write_char_signal` back into internal units."""
    csv_path = Path(csv_path)
    with open(csv_path.with_suffix(".json"), "r") as f:
        metadata = json.load(f)
    table = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    tau = metadata["tau"]
    return CharSignal(
        du=metadata["du"],
        values=table[:, 1] + 1j * table[:, 2],
        tau=math.inf if tau == "inf" else tau,
        noise_sigma=metadata["noise_sigma"],
        seed=metadata["seed"],
        direction=metadata["direction"],
        schedule_text=metadata["schedule"],
    )
