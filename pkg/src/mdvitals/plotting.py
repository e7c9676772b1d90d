"""PNG figures for a processing run (range-Doppler map, tracks, vital-sign signals)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .config import RadarConfig, derive_quantities  # noqa: E402
from .dsp import welch_psd  # noqa: E402


def plot_range_doppler(power: np.ndarray, config: RadarConfig, path: str | Path) -> Path:
    dq = derive_quantities(config)
    nd, nr = power.shape
    extent = [0, nr * dq.range_bin_spacing_m, -nd / 2 * dq.doppler_bin_spacing_hz, nd / 2 * dq.doppler_bin_spacing_hz]
    fig, ax = plt.subplots(figsize=(7, 4))
    im = ax.imshow(10 * np.log10(power + 1e-30), aspect="auto", origin="lower", extent=extent, cmap="viridis")
    fig.colorbar(im, ax=ax, label="power (dB)")
    ax.set_xlabel("range (m)")
    ax.set_ylabel("Doppler (Hz)")
    ax.set_title("Range-Doppler map, frame 0")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def plot_trajectories(trajectories, frame_time_s: float, path: str | Path) -> Path:
    fig, (ax_r, ax_a) = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
    for t in trajectories:
        f = np.array([p.frame for p in t.points]) * frame_time_s
        ax_r.plot(f, [p.range_m for p in t.points], ".", ms=2, label=f"id {t.id}")
        ax_a.plot(f, [p.angle_deg for p in t.points], ".", ms=2)
    ax_r.set_ylabel("range (m)")
    ax_a.set_ylabel("angle (deg)")
    ax_a.set_xlabel("time (s)")
    if trajectories:
        ax_r.legend(loc="upper right", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def plot_vitals(report, path: str | Path) -> Path:
    """Respiration and heart branch waveforms with their spectra."""
    fig, axes = plt.subplots(2, 2, figsize=(9, 5))
    for row, (name, sig, est) in enumerate(
        (
            ("respiration", report.respiration_signal, report.respiration),
            ("heart", report.heart_signal, report.heart),
        )
    ):
        axes[row, 0].plot(sig.times, sig.values, lw=0.8)
        axes[row, 0].set_ylabel(name)
        psd = welch_psd(sig, min(len(sig), int(30 * sig.sample_rate_hz)))
        sel = psd.freqs_hz <= 3.5
        axes[row, 1].plot(psd.freqs_hz[sel], psd.power[sel], lw=0.8)
        if est.valid:
            axes[row, 1].axvline(est.frequency_hz, color="r", ls="--", lw=0.8)
            axes[row, 1].set_title(f"{est.rate_bpm:.1f} per min ({est.method})", fontsize="small")
    axes[1, 0].set_xlabel("time (s)")
    axes[1, 1].set_xlabel("frequency (Hz)")
    fig.suptitle(f"trajectory {report.trajectory_id} ({report.source})")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)
