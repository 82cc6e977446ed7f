"""Normal modes of the resonant five-oscillator network.

Basis ordering throughout is ``(sigma1, sigma2, a1, a2, b)``: the two atomic
polarizations, the two atom-coupled cavities and the link fiber.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .rates import AtomEnsembleParams, ModelRates

COMPONENTS = ("sigma1", "sigma2", "a1", "a2", "b")
SIGMA1, SIGMA2, A1, A2, B = range(5)

_ZERO = 1e-8  # component-magnitude fingerprint threshold


class ModeLabel(str, enum.Enum):
    BRIGHT_MINUS = "BrightMinus"
    FIBER_DARK_MINUS = "FiberDarkMinus"
    CAVITY_DARK = "CavityDark"
    FIBER_DARK_PLUS = "FiberDarkPlus"
    BRIGHT_PLUS = "BrightPlus"


# ascending-frequency order of the labels: -Z, -G, 0, +G, +Z
LABEL_ORDER = tuple(ModeLabel)


@dataclass(frozen=True)
class ModeAlgebra:
    """Auxiliary combinations used by the closed-form diagonalization.

    ``N2`` can be negative (N imaginary) when the cavities are asymmetric;
    ``N`` then holds ``sqrt(|N2|)`` and the mode vectors use the signed square.
    """

    g_bar2: float
    g_tilde2: float
    v_bar2: float
    v_tilde2: float
    delta2: float
    G: float
    Z: float
    N: float
    W: float
    V_plus: float
    V_minus: float
    N2: float
    W2: float


@dataclass(frozen=True)
class NormalMode:
    frequency: float
    vector: np.ndarray
    label: Optional[ModeLabel]

    @property
    def name(self) -> str:
        return self.label.value if self.label is not None else "generic"

    def weight(self, component: int) -> float:
        return float(abs(self.vector[component]) ** 2)


@dataclass(frozen=True)
class NormalModeSet:
    """Five modes in ascending frequency order.

    ``prefactor_mismatch`` maps each label to the relative difference between
    the numerically computed norm of the component vector and the normalization
    prefactor quoted alongside the closed-form operators (analytic path only).
    """

    modes: tuple[NormalMode, ...]
    prefactor_mismatch: dict = field(default_factory=dict)

    def __iter__(self):
        return iter(self.modes)

    def __len__(self):
        return len(self.modes)

    def __getitem__(self, key):
        if isinstance(key, (ModeLabel, str)) and not isinstance(key, int):
            label = ModeLabel(key)
            for mode in self.modes:
                if mode.label is label:
                    return mode
            raise KeyError(key)
        return self.modes[key]

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([m.frequency for m in self.modes])

    @property
    def vectors(self) -> np.ndarray:
        """Matrix whose columns are the mode vectors."""
        return np.column_stack([m.vector for m in self.modes])


def coupling_matrix(g1: float, g2: float, v1: float, v2: float) -> np.ndarray:
    """Single-excitation coupling matrix of the resonant system Hamiltonian."""
    M = np.zeros((5, 5))
    M[SIGMA1, A1] = M[A1, SIGMA1] = g1
    M[SIGMA2, A2] = M[A2, SIGMA2] = g2
    M[A1, B] = M[B, A1] = v1
    M[A2, B] = M[B, A2] = v2
    return M


def fix_sign(vector: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Rotate the global phase so the first non-negligible component is real and positive."""
    vector = np.asarray(vector, dtype=complex)
    for comp in vector:
        if abs(comp) > tol:
            vector = vector * (abs(comp) / comp)
            break
    if np.all(np.abs(vector.imag) <= tol * max(1.0, np.abs(vector).max())):
        return vector.real.copy()
    return vector


def mode_algebra(g1: float, g2: float, v1: float, v2: float) -> ModeAlgebra:
    if min(g1, g2, v1, v2) < 0:
        raise ValueError("coupling rates must be non-negative")
    g_tilde2 = (g1 ** 2 - g2 ** 2) / 2
    g_bar2 = (g1 ** 2 + g2 ** 2) / 2
    v_tilde2 = (v1 ** 2 - v2 ** 2) / 2
    v_bar2 = (v1 ** 2 + v2 ** 2) / 2
    s = g_tilde2 + v_tilde2
    delta2 = math.hypot(s, v1 * v2)
    vv = (v1 * v2) ** 2
    # each difference below is rewritten as a ratio when it would cancel
    V_plus2 = delta2 + s if s >= 0 else (vv / (delta2 - s) if vv else 0.0)
    V_minus2 = delta2 - s if s <= 0 else (vv / (delta2 + s) if vv else 0.0)
    Z = math.sqrt(g_bar2 + v_bar2 + delta2)
    G = math.sqrt((g1 ** 2 * g2 ** 2 + g1 ** 2 * v2 ** 2 + g2 ** 2 * v1 ** 2)) / Z if Z else 0.0
    a = v_bar2 - g_tilde2
    cross = 2 * g_tilde2 * v1 ** 2
    if a >= 0:
        W2 = delta2 + a
        N2 = cross / W2 if W2 else 0.0
    else:
        N2 = delta2 - a
        W2 = cross / N2
    N = math.sqrt(abs(N2))
    W = math.sqrt(max(W2, 0.0))
    V_plus = math.sqrt(V_plus2)
    V_minus = math.sqrt(V_minus2)
    return ModeAlgebra(g_bar2, g_tilde2, v_bar2, v_tilde2, delta2, G, Z, N, W, V_plus, V_minus, N2, W2)


def analytic_modes(g1: float, g2: float, v1: float, v2: float) -> NormalModeSet:
    """Closed-form normal modes; requires both ensembles and both links coupled."""
    if g1 <= 0 or g2 <= 0:
        raise ValueError("analytic_modes needs g1, g2 > 0; use numeric_modes for uncoupled ensembles")
    if v1 <= 0 or v2 <= 0:
        raise ValueError("analytic_modes needs v1, v2 > 0")
    alg = mode_algebra(g1, g2, v1, v2)
    G, Z, Vp, Vm = alg.G, alg.Z, alg.V_plus, alg.V_minus
    delta = math.sqrt(alg.delta2)

    raw = {
        ModeLabel.CAVITY_DARK: (0.0, np.array([g2 * v1, g1 * v2, 0.0, 0.0, -g1 * g2]), G * Z),
    }
    for sign, label in ((1, ModeLabel.FIBER_DARK_PLUS), (-1, ModeLabel.FIBER_DARK_MINUS)):
        vec = np.array([g1 * Vm, -g2 * Vp, sign * G * Vm, -sign * G * Vp, -alg.N2 / Vp * v2])
        raw[label] = (sign * G, vec, 2 * delta * G)
    for sign, label in ((1, ModeLabel.BRIGHT_PLUS), (-1, ModeLabel.BRIGHT_MINUS)):
        vec = np.array([g1 * Vp, g2 * Vm, sign * Z * Vp, sign * Z * Vm, alg.W2 / Vm * v2])
        raw[label] = (sign * Z, vec, 2 * delta * Z)

    modes = []
    mismatch = {}
    for label in LABEL_ORDER:
        freq, vec, prefactor = raw[label]
        norm = np.linalg.norm(vec)
        mismatch[label] = abs(norm - prefactor) / norm
        modes.append(NormalMode(freq, fix_sign(vec / norm), label))
    return NormalModeSet(tuple(modes), mismatch)


def _label_numeric(freqs: np.ndarray, vecs: np.ndarray) -> list[Optional[ModeLabel]]:
    """Assign labels from component fingerprints, falling back to frequency order."""
    labels: list[Optional[ModeLabel]] = [None] * 5
    for k in range(5):
        v = vecs[:, k]
        if abs(v[A1]) < _ZERO and abs(v[A2]) < _ZERO and labels.count(ModeLabel.CAVITY_DARK) == 0:
            labels[k] = ModeLabel.CAVITY_DARK
        elif abs(v[B]) < _ZERO and abs(freqs[k]) > _ZERO:
            candidate = ModeLabel.FIBER_DARK_PLUS if freqs[k] > 0 else ModeLabel.FIBER_DARK_MINUS
            if candidate not in labels:
                labels[k] = candidate
    remaining = [lab for lab in LABEL_ORDER if lab not in labels]
    for k in np.argsort(freqs):
        if labels[k] is None:
            labels[k] = remaining.pop(0)
    # fingerprints that contradict the frequency ordering lose to it
    order = np.argsort(freqs)
    if [labels[k] for k in order] != list(LABEL_ORDER):
        labels = [None] * 5
        for rank, k in enumerate(order):
            labels[k] = LABEL_ORDER[rank]
    return labels


def numeric_modes(g1: float, g2: float, v1: float, v2: float) -> NormalModeSet:
    """Normal modes from a numerical eigendecomposition of the coupling matrix.

    Labels are assigned only when both ensembles are coupled; otherwise the
    modes are returned unlabeled in ascending frequency order.
    """
    if min(g1, g2, v1, v2) < 0:
        raise ValueError("coupling rates must be non-negative")
    freqs, vecs = np.linalg.eigh(coupling_matrix(g1, g2, v1, v2))
    if g1 > 0 and g2 > 0 and v1 > 0 and v2 > 0:
        labels = _label_numeric(freqs, vecs)
    else:
        labels = [None] * 5
    modes = tuple(NormalMode(float(freqs[k]), fix_sign(vecs[:, k]), labels[k]) for k in range(5))
    return NormalModeSet(modes)


def fiber_weight_fraction(mode: NormalMode) -> float:
    """Fiber excitation relative to the weakest atomic or cavity component.

    Dividing by the smallest of the four non-fiber weights is the strictest
    reading of "fiber excitation relative to the atoms or cavity".
    """
    others = np.abs(mode.vector[:B]) ** 2
    return float(abs(mode.vector[B]) ** 2 / others.min())


def damping_matrix(rates: ModelRates) -> np.ndarray:
    return np.diag([rates.gamma_perp, rates.gamma_perp, rates.kappa_1, rates.kappa_2, rates.kappa_b])


def complex_mode_frequencies(rates: ModelRates, atoms: AtomEnsembleParams) -> np.ndarray:
    """Eigenvalues ``omega + i*gamma`` of the damped linear drift, sorted by real part.

    The imaginary parts are the mode amplitude decay rates (half-linewidths).
    """
    M = coupling_matrix(atoms.g_eff_1, atoms.g_eff_2, rates.v1, rates.v2)
    eig = np.linalg.eigvals(M + 1j * damping_matrix(rates))
    return eig[np.argsort(eig.real)]
