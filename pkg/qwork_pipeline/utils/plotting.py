"""Static SVG figures of the work spectra and the Crooks ratio."""

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from qwork_pipeline.analysis.fluctuation import CrooksFit  # noqa: E402
from qwork_pipeline.analysis.workdist import PeakSet, WorkSpectrum  # noqa: E402

logger = logging.getLogger(__name__)

# fixed ids and no date so identical inputs give identical files
SVG_METADATA = {"Date": None, "Creator": None}
matplotlib.rcParams["svg.hashsalt"] = "qwork-pipeline"


def _positive(values: np.ndarray) -> np.ndarray:
    return np.where(values > 0, values, np.nan)


def plot_spectra(
    forward: WorkSpectrum,
    backward: WorkSpectrum,
    forward_peaks: PeakSet | None,
    backward_peaks: PeakSet | None,
    out_path: Path,
    delta_f: float | None = None,
) -> Path:
    """Log-scale overlay of P_F(W) and P_B(-W) with the detected peak heights."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.semilogy(forward.w_grid, _positive(forward.density), "-", lw=1.0, label="P_F(W)")
    W_b, P_b = backward.mirrored()
    ax.semilogy(W_b, _positive(P_b), "--", lw=1.0, label="P_B(-W)")
    if forward_peaks is not None and len(forward_peaks):
        ax.plot(
            [p.W for p in forward_peaks.peaks],
            [p.amplitude for p in forward_peaks.peaks],
            "o",
            ms=4,
            label="forward peaks",
        )
    if backward_peaks is not None and len(backward_peaks):
        ax.plot(
            [-p.W for p in backward_peaks.peaks],
            [p.amplitude for p in backward_peaks.peaks],
            "x",
            ms=5,
            label="backward peaks",
        )
    if delta_f is not None:
        ax.axvline(delta_f, color="grey", ls=":", lw=1.0, label="exact Delta F")
    peak = np.nanmax(_positive(forward.density))
    ax.set_ylim(peak * 1e-6, peak * 2)
    ax.set_xlabel("W / omega_0")
    ax.set_ylabel("P(W)")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    logger.info(f"Written : {out_path}")
    return out_path


def plot_crooks(fit: CrooksFit, beta: float, delta_f: float, out_path: Path) -> Path:
    """Ratio against W with the exact exp(beta (W - dF)) and fitted exp(A W - B)."""
    W = np.array([p.W for p in fit.points])
    ratio = np.array([p.ratio for p in fit.points])
    span = np.linspace(W.min() - 0.5, W.max() + 0.5, 200)
    fig, ax = plt.subplots(figsize=(5, 4))
    exact = np.exp(beta * (span - delta_f))
    ax.semilogy(span, exact, "-", color="black", lw=1.0, label="exact")
    ax.semilogy(span, np.exp(fit.A * span - fit.B), "--", lw=1.0, label="fit")
    ax.semilogy(W, ratio, "o", ms=5, label="P_F(W) / P_B(-W)")
    ax.set_xlabel("W / omega_0")
    ax.set_ylabel("ratio")
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    logger.info(f"Written : {out_path}")
    return out_path


def emit_plots(
    spectra: tuple[WorkSpectrum, WorkSpectrum],
    peaks: tuple[PeakSet | None, PeakSet | None],
    fit: CrooksFit | None,
    out_dir: Path,
    beta: float,
    delta_f: float,
) -> list[Path]:
    """
    Spectrum overlay and, when a fit exists, the Crooks ratio plot.

    Returns
    -------
    list[Path]
        Files written.
    """
    out_dir = Path(out_dir)
    written = [
        plot_spectra(*spectra, *peaks, out_dir / "spectra.svg", delta_f=delta_f)
    ]
    if fit is None or len(fit.points) == 0:
        logger.info("emit_plots : no Crooks fit available, ratio plot omitted")
        return written
    written.append(plot_crooks(fit, beta, delta_f, out_dir / "crooks_ratio.svg"))
    return written
