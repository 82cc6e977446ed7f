"""Weak-drive steady state and output photon fluxes.

The mean amplitudes obey the linearized equations of motion

    d<x>/dt = -(Gamma + i D + i K) <x> - i E

with ``Gamma`` the total damping rates, ``D`` the detunings, ``K`` the
(Hermitian) coupling matrix and ``E`` the drive vector.  Detunings follow
``Delta = omega_oscillator - omega_probe``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.signal import find_peaks

from .normal_modes import A1, A2, B, SIGMA1, SIGMA2, coupling_matrix
from .rates import AtomEnsembleParams, ModelRates

INPUT_PORTS = ("A", "C")
OUTPUT_PORTS = ("A", "B", "C")

# driven oscillator and its external coupling rate for each port
_PORT_MODE = {"A": A1, "B": A2, "C": B}


class SingularSystemError(ArithmeticError):
    """The linear system has no unique steady state."""

    def __init__(self, message: str, delta: Optional[float] = None):
        if delta is not None:
            message = f"{message} (at detuning {delta:g})"
        super().__init__(message)
        self.delta = delta


@dataclass(frozen=True)
class DriveSpec:
    """A single coherent probe.

    ``detunings`` optionally overrides the common detuning per oscillator as
    ``(Delta_1, Delta_2, Delta_b, Delta_a)``.
    """

    port: str
    amplitude: float = 1.0
    delta: float = 0.0
    detunings: Optional[tuple[float, float, float, float]] = None

    def __post_init__(self):
        if self.port not in INPUT_PORTS:
            raise ValueError(f"drive port must be one of {INPUT_PORTS}, got {self.port!r}")
        dets = self.oscillator_detunings()
        if not np.all(np.isfinite(dets)) or not np.isfinite(self.amplitude):
            raise ValueError("drive amplitude and detunings must be finite")

    def oscillator_detunings(self) -> tuple[float, float, float, float]:
        if self.detunings is not None:
            return tuple(float(d) for d in self.detunings)
        return (self.delta,) * 4

    def drive_vector(self) -> np.ndarray:
        E = np.zeros(5, dtype=complex)
        E[_PORT_MODE[self.port]] = self.amplitude
        return E


@dataclass(frozen=True)
class SteadyStateAmplitudes:
    a1: complex
    a2: complex
    b: complex
    sigma1: complex
    sigma2: complex

    @classmethod
    def from_vector(cls, x) -> "SteadyStateAmplitudes":
        x = np.asarray(x, dtype=complex)
        return cls(a1=x[A1], a2=x[A2], b=x[B], sigma1=x[SIGMA1], sigma2=x[SIGMA2])

    def as_vector(self) -> np.ndarray:
        out = np.empty(5, dtype=complex)
        out[[SIGMA1, SIGMA2, A1, A2, B]] = [self.sigma1, self.sigma2, self.a1, self.a2, self.b]
        return out


@dataclass
class Spectrum:
    """Output fluxes on a uniform detuning grid.

    ``amplitudes`` has shape ``(n_points, 5)`` in ``(sigma1, sigma2, a1, a2, b)`` order.
    """

    delta: np.ndarray
    flux: dict
    amplitudes: np.ndarray
    port_in: str
    metadata: dict = field(default_factory=dict)


def external_rate(rates: ModelRates, port: str) -> float:
    return {"A": rates.kappa_1l, "B": rates.kappa_2r, "C": rates.kappa_b_bs}[port]


def _system_matrices(rates: ModelRates, atoms: AtomEnsembleParams, detunings) -> np.ndarray:
    d1, d2, db, da = (np.asarray(d, dtype=float) for d in detunings)
    K = coupling_matrix(atoms.g_eff_1, atoms.g_eff_2, rates.v1, rates.v2).astype(complex)
    shape = np.broadcast(d1, d2, db, da).shape
    diag = np.empty(shape + (5,), dtype=complex)
    diag[..., SIGMA1] = rates.gamma_perp + 1j * da
    diag[..., SIGMA2] = rates.gamma_perp + 1j * da
    diag[..., A1] = rates.kappa_1 + 1j * d1
    diag[..., A2] = rates.kappa_2 + 1j * d2
    diag[..., B] = rates.kappa_b + 1j * db
    # an uncoupled ensemble is undriven and stays at zero; pin its row so that
    # vanishing atomic damping does not make the system singular
    for slot, g in ((SIGMA1, atoms.g_eff_1), (SIGMA2, atoms.g_eff_2)):
        if g == 0:
            diag[..., slot] = 1.0
    mats = np.broadcast_to(1j * K, shape + (5, 5)).copy()
    idx = np.arange(5)
    mats[..., idx, idx] += diag
    return mats


def solve_amplitudes(rates: ModelRates, atoms: AtomEnsembleParams, E: np.ndarray,
                     detunings) -> np.ndarray:
    """Direct solve of ``(Gamma + iD + iK) x = -iE``; broadcasts over detuning arrays."""
    mats = _system_matrices(rates, atoms, detunings)
    rhs = np.broadcast_to(-1j * np.asarray(E, dtype=complex), mats.shape[:-1])
    with np.errstate(all="raise"):
        try:
            x = np.linalg.solve(mats, rhs[..., None])[..., 0]
        except (np.linalg.LinAlgError, FloatingPointError) as exc:
            raise SingularSystemError(f"singular linear system: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("non-finite steady state")
    cond = np.linalg.cond(mats)
    if np.any(cond > 1e14):
        bad = np.argmax(cond)
        d = np.broadcast_to(np.asarray(detunings[0], dtype=float), cond.shape).ravel()
        raise SingularSystemError("ill-conditioned linear system", delta=float(d[bad]) if d.size else None)
    return x


def steady_state(rates: ModelRates, atoms: AtomEnsembleParams, drive: DriveSpec) -> SteadyStateAmplitudes:
    x = solve_amplitudes(rates, atoms, drive.drive_vector(), drive.oscillator_detunings())
    return SteadyStateAmplitudes.from_vector(x)


def _nonzero(value: complex, name: str) -> complex:
    if value == 0:
        raise SingularSystemError(f"vanishing denominator: {name}")
    return value


def steady_state_analytic(rates: ModelRates, atoms: AtomEnsembleParams, drive: DriveSpec) -> SteadyStateAmplitudes:
    """Closed-form steady state by successive elimination of b, a1 and the atoms."""
    d1, d2, db, da = drive.oscillator_detunings()
    E1 = drive.amplitude if drive.port == "A" else 0.0
    E2 = 0.0
    Eb = drive.amplitude if drive.port == "C" else 0.0
    g1, g2 = atoms.g_eff_1, atoms.g_eff_2
    v1, v2 = rates.v1, rates.v2

    atom = _nonzero(rates.gamma_perp + 1j * da, "gamma_perp + i*Delta_a")
    kb = _nonzero(rates.kappa_b + 1j * db, "kappa_b + i*Delta_b")
    k1 = rates.kappa_1 + 1j * d1 + abs(g1) ** 2 / atom
    k2 = rates.kappa_2 + 1j * d2 + abs(g2) ** 2 / atom
    D1 = _nonzero(k1 + abs(v1) ** 2 / kb, "cavity-1 dressed denominator")

    A = (1j * E2
         + Eb * (v2 / kb) * k1 / D1
         - 1j * E1 * (v2 / kb) * np.conj(v1) / D1)
    Bden = _nonzero(-k2 - abs(v2) ** 2 / kb + abs(v1 * v2) ** 2 / kb ** 2 / D1,
                    "cavity-2 denominator B")
    a2 = A / Bden
    a1 = -(1j * E1 + Eb * v1 / kb + v1 * np.conj(v2) / kb * a2) / D1
    b = -1j * Eb / kb - 1j * np.conj(v1) / kb * a1 - 1j * np.conj(v2) / kb * a2
    s1 = -1j * np.conj(g1) * a1 / atom
    s2 = -1j * np.conj(g2) * a2 / atom
    return SteadyStateAmplitudes(a1=complex(a1), a2=complex(a2), b=complex(b),
                                 sigma1=complex(s1), sigma2=complex(s2))


def output_field(state: SteadyStateAmplitudes, drive: DriveSpec, rates: ModelRates, port: str,
                 c_detection: str = "tap") -> complex:
    """``x_out = x_in + sqrt(2 kappa_ext) x`` with ``x_in = iE/sqrt(2 kappa_ext)`` at the driven port.

    Port A is a mirror, so light driven there always interferes with the cavity
    emission.  At the fiber coupler the counter-propagating output leaves
    through a different tap than the input (``c_detection="tap"``, no
    interference); ``"reflection"`` treats port C as a single
    input/output channel.
    """
    if port not in OUTPUT_PORTS:
        raise ValueError(f"output port must be one of {OUTPUT_PORTS}, got {port!r}")
    _check_detection(c_detection)
    kappa = external_rate(rates, port)
    x = {"A": state.a1, "B": state.a2, "C": state.b}[port]
    out = np.sqrt(2 * kappa) * x
    if port == drive.port and (port == "A" or c_detection == "reflection"):
        out = out + 1j * drive.amplitude / np.sqrt(2 * kappa)
    return complex(out)


def output_flux(state: SteadyStateAmplitudes, drive: DriveSpec, rates: ModelRates, port: str,
                c_detection: str = "tap") -> float:
    return abs(output_field(state, drive, rates, port, c_detection)) ** 2


def _check_detection(c_detection: str) -> None:
    if c_detection not in ("tap", "reflection"):
        raise ValueError(f"c_detection must be 'tap' or 'reflection', got {c_detection!r}")


def input_flux(drive: DriveSpec, rates: ModelRates) -> float:
    return drive.amplitude ** 2 / (2 * external_rate(rates, drive.port))


def _fluxes(x: np.ndarray, rates: ModelRates, port_in: str, amplitude: float,
            ports_out: Iterable[str], c_detection: str) -> dict:
    out = {}
    for port in ports_out:
        kappa = external_rate(rates, port)
        field_ = np.sqrt(2 * kappa) * x[..., _PORT_MODE[port]]
        if port == port_in and (port == "A" or c_detection == "reflection"):
            field_ = field_ + 1j * amplitude / np.sqrt(2 * kappa)
        out[port] = np.abs(field_) ** 2
    return out


def sweep_spectrum(rates: ModelRates, atoms: AtomEnsembleParams, port_in: str,
                   ports_out: Sequence[str] = OUTPUT_PORTS, delta_min: float = -30.0,
                   delta_max: float = 30.0, n_points: int = 601, amplitude: float = 1.0,
                   normalize: Optional[str] = None, c_detection: str = "tap") -> Spectrum:
    """Output fluxes over a uniform grid of the common detuning.

    ``normalize="empty_peak"`` divides each flux column by the maximum of the
    same column computed with both ensembles removed.
    """
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    if not delta_min < delta_max:
        raise ValueError("delta_min must be < delta_max")
    if normalize not in (None, "none", "empty_peak"):
        raise ValueError(f"unknown normalization {normalize!r}")
    DriveSpec(port_in, amplitude)  # validates port
    _check_detection(c_detection)
    delta = np.linspace(delta_min, delta_max, n_points)
    E = np.zeros(5, dtype=complex)
    E[_PORT_MODE[port_in]] = amplitude
    x = solve_amplitudes(rates, atoms, E, (delta,) * 4)
    flux = _fluxes(x, rates, port_in, amplitude, ports_out, c_detection)
    meta = {"normalize": normalize or "none", "c_detection": c_detection}
    if normalize == "empty_peak":
        empty = AtomEnsembleParams()
        x0 = solve_amplitudes(rates, empty, E, (delta,) * 4)
        ref = _fluxes(x0, rates, port_in, amplitude, ports_out, c_detection)
        for port in flux:
            flux[port] = flux[port] / ref[port].max()
            meta[f"empty_peak_{port}"] = float(ref[port].max())
    return Spectrum(delta=delta, flux=flux, amplitudes=x, port_in=port_in, metadata=meta)


def local_maxima(y, rel_prominence: float = 1e-3) -> np.ndarray:
    """Indices of interior local maxima with prominence above ``rel_prominence * max(y)``."""
    y = np.asarray(y, dtype=float)
    peaks, _ = find_peaks(y, prominence=rel_prominence * np.max(np.abs(y)))
    return peaks


def local_minima(y, rel_prominence: float = 1e-3) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    dips, _ = find_peaks(-y, prominence=rel_prominence * np.max(np.abs(y)))
    return dips
