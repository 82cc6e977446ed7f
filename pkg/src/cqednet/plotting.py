"""Figures and plot scripts for spectra and saturation curves.

Figures are rendered with matplotlib's Agg backend straight to files.  The
plot scripts are gnuplot scripts that read the CSV written next to them.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

DETUNING_LABEL = "probe detuning (MHz)"

SPECTRUM_COLUMNS = ("delta_mhz", "flux_A", "flux_B", "flux_C")
SATURATION_COLUMNS = ("power_w", "y_b", "norm_transmission", "flux0", "bright_avg", "converged")

_RC = {
    "figure.figsize": (6.0, 3.7),
    "font.size": 10,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "savefig.dpi": 150,
}


class PlotScriptError(ValueError):
    pass


def plot_spectrum(delta, flux: dict, path, ports: Sequence[str] = ("B", "C"),
                  scale: float = 1.0, title: Optional[str] = None) -> Path:
    """Fluxes versus probe detuning (the negative of the oscillator detuning)."""
    path = Path(path)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for port in ports:
            if port in flux:
                ax.plot(-np.asarray(delta), scale * np.asarray(flux[port]), lw=1.2, label=f"port {port}")
        ax.set_xlabel(DETUNING_LABEL)
        ax.set_ylabel("output flux (arb.)")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_saturation(powers, norm_transmission, path, spectra=None, delta=None) -> Path:
    """Normalized on-resonance transmission versus power, optionally with the spectra stack."""
    path = Path(path)
    powers_nw = np.asarray(powers) * 1e9
    with plt.rc_context(_RC):
        if spectra is not None:
            fig, (ax_s, ax) = plt.subplots(1, 2, figsize=(9.0, 3.7))
            spectra = np.asarray(spectra)
            offset = 1.1 * float(np.max(spectra / spectra.max(axis=1, keepdims=True)))
            for k, row in enumerate(spectra):
                ax_s.plot(-np.asarray(delta), row / row.max() + k * offset, lw=0.8, color="k")
            ax_s.set_xlabel(DETUNING_LABEL)
            ax_s.set_ylabel("C->C flux (offset)")
        else:
            fig, ax = plt.subplots()
        ax.semilogx(powers_nw, norm_transmission, "o-", color="tab:red", ms=3)
        ax.set_xlabel("input power at C (nW)")
        ax.set_ylabel("normalized transmission")
        ax.set_ylim(bottom=0)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def _read_header(csv_path) -> list[str]:
    try:
        with open(csv_path, newline="") as fh:
            header = next(csv.reader(fh), None)
    except OSError as exc:
        raise PlotScriptError(f"cannot read {csv_path}: {exc}") from exc
    if not header:
        raise PlotScriptError(f"{csv_path} is empty")
    return header


def emit_plot_script(csv_path, style: Optional[str] = None, scale: float = 1.0) -> str:
    """Gnuplot script plotting a spectrum or saturation CSV.

    ``style`` is ``"spectrum"`` or ``"saturation"``; inferred from the header
    when omitted.
    """
    header = _read_header(csv_path)
    if style is None:
        if header[: len(SPECTRUM_COLUMNS)] == list(SPECTRUM_COLUMNS):
            style = "spectrum"
        elif header[: len(SATURATION_COLUMNS)] == list(SATURATION_COLUMNS):
            style = "saturation"
        else:
            raise PlotScriptError(f"unrecognized CSV header in {csv_path}: {header[:4]}")
    expected = {"spectrum": SPECTRUM_COLUMNS, "saturation": SATURATION_COLUMNS}.get(style)
    if expected is None:
        raise PlotScriptError(f"unknown plot style {style!r}")
    if header[: len(expected)] != list(expected):
        raise PlotScriptError(f"{csv_path} does not have the {style} header")

    name = Path(csv_path).name
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 900,560",
        f"set output '{Path(name).stem}.png'",
    ]
    if style == "spectrum":
        lines += [
            f"set xlabel '{DETUNING_LABEL}'",
            "set ylabel 'output flux'",
            f"plot '{name}' using (-column('delta_mhz')):({scale:g}*column('flux_B')) with lines title 'port B', \\",
            f"     '{name}' using (-column('delta_mhz')):({scale:g}*column('flux_C')) with lines title 'port C'",
        ]
    else:
        lines += [
            "set logscale x",
            "set xlabel 'input power (W)'",
            "set ylabel 'normalized transmission'",
            f"plot '{name}' using (column('power_w')):(column('norm_transmission')) with linespoints title 'dark mode'",
        ]
    return "\n".join(lines) + "\n"
