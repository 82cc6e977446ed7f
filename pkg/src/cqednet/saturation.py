"""Semiclassical saturation of the atomic ensembles under drive through the link fiber.

Amplitudes are normalized to the saturation photon numbers,

    X1 = <a1>/sqrt(n1),  X2 = <a2>/sqrt(n2),  Xb = <b>/(n1 n2)^(1/4),
    y_b = (E_b/kappa_b)/(n1 n2)^(1/4),

and the ensemble average over the standing-wave coupling profile is carried
out in closed form (:func:`bracket_term`).  The three complex steady-state
equations are solved as a six-dimensional real system by damped Newton
iteration with continuation in the drive strength.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.constants import c as C_VACUUM, hbar

from .linear_response import AtomEnsembleParams, solve_amplitudes
from .normal_modes import B
from .rates import DEFAULT_WAVELENGTH, RAD_PER_S, ModelRates, single_atom_coupling

log = logging.getLogger(__name__)

A_GEOM_DEFAULT = 0.17


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float = math.nan, power: Optional[float] = None):
        if power is not None:
            message = f"{message} (at input power {power:.4g} W)"
        super().__init__(message)
        self.residual = residual
        self.power = power


@dataclass(frozen=True)
class SaturationParams:
    C1: float
    C2: float
    n_sat_1: float
    n_sat_2: float
    A_geom: float = A_GEOM_DEFAULT

    def __post_init__(self):
        if self.C1 < 0 or self.C2 < 0:
            raise ValueError("cooperativities must be >= 0")
        if not 0 < self.A_geom < 1:
            raise ValueError("geometric factor must lie in (0, 1)")
        if not (self.n_sat_1 > 0 and self.n_sat_2 > 0):
            raise ValueError("saturation photon numbers must be > 0")

    @classmethod
    def from_atoms(cls, rates: ModelRates, atoms: AtomEnsembleParams,
                   A_geom: float = A_GEOM_DEFAULT) -> "SaturationParams":
        """Cooperativities C = N_eff g0^2 / (kappa gamma_perp), g0 taken from n_sat."""
        if None in (atoms.n_sat_1, atoms.n_sat_2, atoms.n_eff_1, atoms.n_eff_2):
            raise ValueError("ensemble needs n_sat and n_eff for both cavities")
        g01 = single_atom_coupling(rates, atoms.n_sat_1)
        g02 = single_atom_coupling(rates, atoms.n_sat_2)
        return cls(
            C1=atoms.n_eff_1 * g01 ** 2 / (rates.kappa_1 * rates.gamma_perp),
            C2=atoms.n_eff_2 * g02 ** 2 / (rates.kappa_2 * rates.gamma_perp),
            n_sat_1=atoms.n_sat_1, n_sat_2=atoms.n_sat_2, A_geom=A_geom,
        )

    def linear_couplings(self, rates: ModelRates) -> AtomEnsembleParams:
        """Collective couplings with the same weak-drive response: g_eff^2 = C kappa gamma_perp."""
        return AtomEnsembleParams(
            g_eff_1=math.sqrt(self.C1 * rates.kappa_1 * rates.gamma_perp),
            g_eff_2=math.sqrt(self.C2 * rates.kappa_2 * rates.gamma_perp),
        )


@dataclass(frozen=True)
class SaturationState:
    X1: complex
    X2: complex
    Xb: complex
    y_b: float
    delta: float
    converged: bool
    iterations: int
    residual: float
    bistable: bool = False

    def amplitudes(self, sat: SaturationParams) -> tuple[complex, complex, complex]:
        """Unnormalized <a1>, <a2>, <b>."""
        n1, n2 = sat.n_sat_1, sat.n_sat_2
        return (self.X1 * math.sqrt(n1), self.X2 * math.sqrt(n2), self.Xb * (n1 * n2) ** 0.25)


# -- ensemble-averaged atomic response ---------------------------------------

def _profile_average(x, s, A):
    """(1/x)[1 - s/sqrt((s+Ax)(s+x))] rewritten without the 0/0 at x = 0."""
    r = np.sqrt((s + A * x) * (s + x))
    return (s * (1 + A) + A * x) / (r * (r + s))


def _profile_average_derivative(x, s, A):
    P, Q = s + A * x, s + x
    r = np.sqrt(P * Q)
    num = s * (1 + A) + A * x
    den = r * (r + s)
    dr = (A * Q + P) / (2 * r)
    return (A * den - num * dr * (2 * r + s)) / den ** 2


def bracket_term(X, delta_a_norm, C, A_geom=A_GEOM_DEFAULT):
    """Saturable ensemble response per unit cavity amplitude.

    Evaluates ``(1 - i d) (2C/(1+A)) |X|^-2 [1 - (1+d^2)/sqrt((1+d^2+A|X|^2)(1+d^2+|X|^2))]``
    with ``d = Delta_a/gamma_perp``.  At ``X = 0`` this equals its limit
    ``C (1 - i d)/(1 + d^2)``.  Broadcasts over array arguments.
    """
    x = np.abs(X) ** 2
    s = 1.0 + np.asarray(delta_a_norm, dtype=float) ** 2
    out = (1 - 1j * np.asarray(delta_a_norm)) * (2 * np.asarray(C) / (1 + A_geom)) * _profile_average(x, s, A_geom)
    return out if np.ndim(out) else complex(out)


# -- normalized steady-state equations ----------------------------------------

@dataclass(frozen=True)
class _Coefficients:
    """Detuning-dependent coefficients of the three normalized equations (arrays over the batch)."""

    lin1: np.ndarray   # 1 + i Delta1/kappa1
    lin2: np.ndarray
    linb: np.ndarray
    da: np.ndarray     # Delta_a / gamma_perp
    k1b: complex       # i v1/kappa1 (n2/n1)^(1/4)
    k2b: complex
    kb1: complex       # i v1/kappa_b (n1/n2)^(1/4)
    kb2: complex
    pref1: float       # 2 C1/(1+A)
    pref2: float
    A: float


def _coefficients(rates: ModelRates, sat: SaturationParams, delta) -> _Coefficients:
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    q = (sat.n_sat_2 / sat.n_sat_1) ** 0.25
    return _Coefficients(
        lin1=1 + 1j * delta / rates.kappa_1,
        lin2=1 + 1j * delta / rates.kappa_2,
        linb=1 + 1j * delta / rates.kappa_b,
        da=delta / rates.gamma_perp,
        k1b=1j * rates.v1 / rates.kappa_1 * q,
        k2b=1j * rates.v2 / rates.kappa_2 / q,
        kb1=1j * rates.v1 / rates.kappa_b / q,
        kb2=1j * rates.v2 / rates.kappa_b * q,
        pref1=2 * sat.C1 / (1 + sat.A_geom),
        pref2=2 * sat.C2 / (1 + sat.A_geom),
        A=sat.A_geom,
    )


def _residual(Z: np.ndarray, y: np.ndarray, co: _Coefficients) -> np.ndarray:
    X1, X2, Xb = Z[:, 0], Z[:, 1], Z[:, 2]
    s = 1 + co.da ** 2
    atom = 1 - 1j * co.da
    phi1 = co.lin1 + atom * co.pref1 * _profile_average(np.abs(X1) ** 2, s, co.A)
    phi2 = co.lin2 + atom * co.pref2 * _profile_average(np.abs(X2) ** 2, s, co.A)
    F = np.empty_like(Z)
    F[:, 0] = X1 * phi1 + co.k1b * Xb
    F[:, 1] = X2 * phi2 + co.k2b * Xb
    F[:, 2] = co.linb * Xb + co.kb1 * X1 + co.kb2 * X2 + 1j * y
    return F


def _jacobian(Z: np.ndarray, co: _Coefficients) -> np.ndarray:
    """Real 6x6 Jacobian per batch element, unknowns ordered (Re Z, Im Z)."""
    n = Z.shape[0]
    P = np.zeros((n, 3, 3), dtype=complex)   # dF/dZ
    Q = np.zeros((n, 3, 3), dtype=complex)   # dF/dZ*
    s = 1 + co.da ** 2
    atom = 1 - 1j * co.da
    for k, (pref, lin) in enumerate(((co.pref1, co.lin1), (co.pref2, co.lin2))):
        Xk = Z[:, k]
        x = np.abs(Xk) ** 2
        phi = lin + atom * pref * _profile_average(x, s, co.A)
        dphi = atom * pref * _profile_average_derivative(x, s, co.A)
        P[:, k, k] = phi + x * dphi
        Q[:, k, k] = Xk ** 2 * dphi
    P[:, 0, 2] = co.k1b
    P[:, 1, 2] = co.k2b
    P[:, 2, 0] = co.kb1
    P[:, 2, 1] = co.kb2
    P[:, 2, 2] = co.linb
    du = P + Q
    dv = 1j * (P - Q)
    J = np.empty((n, 6, 6))
    J[:, :3, :3] = du.real
    J[:, :3, 3:] = dv.real
    J[:, 3:, :3] = du.imag
    J[:, 3:, 3:] = dv.imag
    return J


def _linear_guess(y: np.ndarray, co: _Coefficients, C_scale: float = 1.0) -> np.ndarray:
    """Solution of the equations with the atomic response frozen at its weak-field value."""
    n = y.shape[0]
    s = 1 + co.da ** 2
    atom = (1 - 1j * co.da) / s
    M = np.zeros((n, 3, 3), dtype=complex)
    M[:, 0, 0] = co.lin1 + C_scale * atom * co.pref1 * (1 + co.A) / 2
    M[:, 1, 1] = co.lin2 + C_scale * atom * co.pref2 * (1 + co.A) / 2
    M[:, 0, 2] = co.k1b
    M[:, 1, 2] = co.k2b
    M[:, 2, 0] = co.kb1
    M[:, 2, 1] = co.kb2
    M[:, 2, 2] = co.linb
    rhs = np.zeros((n, 3), dtype=complex)
    rhs[:, 2] = -1j * y
    return np.linalg.solve(M, rhs[..., None])[..., 0]


def _newton(Z0: np.ndarray, y: np.ndarray, co: _Coefficients, tol: float, max_iter: int):
    """Damped Newton, batched.  Returns (Z, residual, iterations, converged mask)."""
    Z = Z0.copy()
    F = _residual(Z, y, co)
    res = np.abs(F).max(axis=1)
    iters = np.zeros(Z.shape[0], dtype=int)
    for _ in range(max_iter):
        active = res >= tol
        if not active.any():
            break
        idx = np.flatnonzero(active)
        co_a = _subset(co, idx)
        J = _jacobian(Z[idx], co_a)
        Fa = F[idx]
        rhs = -np.concatenate([Fa.real, Fa.imag], axis=1)
        try:
            step = np.linalg.solve(J, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J[0], rhs[0], rcond=None)[0][None] if len(idx) == 1 else \
                np.stack([np.linalg.lstsq(Jk, rk, rcond=None)[0] for Jk, rk in zip(J, rhs)])
        dZ = step[:, :3] + 1j * step[:, 3:]
        lam = np.ones(len(idx))
        accepted = np.zeros(len(idx), dtype=bool)
        Znew = Z[idx].copy()
        Fnew = Fa.copy()
        for _halving in range(30):
            todo = ~accepted
            if not todo.any():
                break
            trial = Z[idx][todo] + lam[todo, None] * dZ[todo]
            Ft = _residual(trial, y[idx][todo], _subset(co_a, np.flatnonzero(todo)))
            rt = np.abs(Ft).max(axis=1)
            ok = rt < res[idx][todo]
            sub = np.flatnonzero(todo)
            Znew[sub[ok]] = trial[ok]
            Fnew[sub[ok]] = Ft[ok]
            accepted[sub[ok]] = True
            lam[sub[~ok]] *= 0.5
        Z[idx] = Znew
        F[idx] = Fnew
        iters[idx] += 1
        new_res = np.abs(Fnew).max(axis=1)
        stalled = ~accepted
        res[idx] = new_res
        if stalled.all():
            break
    return Z, res, iters, res < tol


def _subset(co: _Coefficients, idx) -> _Coefficients:
    return _Coefficients(co.lin1[idx], co.lin2[idx], co.linb[idx], co.da[idx],
                         co.k1b, co.k2b, co.kb1, co.kb2, co.pref1, co.pref2, co.A)


def _continuation(y_target: float, co: _Coefficients, tol: float, max_iter: int,
                  Z_start: Optional[np.ndarray] = None, y_start: Optional[float] = None,
                  growth: float = 1.5, max_steps: int = 2000):
    """Continue every batch element from ``y_start`` (or the weak-drive limit) up to ``y_target``."""
    n = co.lin1.shape[0]
    y_lin = min(y_target, 1e-6)
    if Z_start is None:
        y_cur = np.full(n, y_lin)
        Z = _linear_guess(y_cur, co)
        Z, res, it, ok = _newton(Z, y_cur, co, tol, max_iter)
    else:
        y_cur = np.full(n, y_start)
        Z = Z_start.copy()
        res = np.abs(_residual(Z, y_cur, co)).max(axis=1)
        it = np.zeros(n, dtype=int)
        ok = res < tol
    total_iter = it.copy()
    factor = np.full(n, growth)
    steps = 0
    while np.any(y_cur < y_target) and steps < max_steps:
        steps += 1
        idx = np.flatnonzero(y_cur < y_target)
        y_try = np.minimum(y_cur[idx] * factor[idx], y_target)
        # first-order predictor: amplitudes scale with the drive to leading order
        Z_guess = Z[idx] * (y_try / y_cur[idx])[:, None]
        Zt, rt, itt, okt = _newton(Z_guess, y_try, _subset(co, idx), tol, max_iter)
        total_iter[idx] += itt
        good = idx[okt]
        Z[good], res[good], y_cur[good] = Zt[okt], rt[okt], y_try[okt]
        factor[good] = np.minimum(factor[good] * 1.2, growth * 2)
        bad = idx[~okt]
        factor[bad] = 1 + (factor[bad] - 1) / 2
        if np.any(factor[bad] < 1 + 1e-6):
            worst = float(rt[~okt].max())
            raise ConvergenceError(f"continuation stalled at y_b={float(y_cur[bad].min()):.6g}", worst)
    if np.any(y_cur < y_target):
        raise ConvergenceError("continuation step budget exhausted", float(res.max()))
    return Z, res, total_iter


def _check_bistability(Z: np.ndarray, y: np.ndarray, co: _Coefficients, tol: float, max_iter: int):
    """Look for a second (high-amplitude) solution started from the saturated-atom guess."""
    Z_hi = _linear_guess(y, co, C_scale=0.0)
    Z_hi, res_hi, _, ok_hi = _newton(Z_hi, y, co, tol, max_iter)
    scale = np.maximum(np.abs(Z).max(axis=1), 1e-300)
    distinct = ok_hi & (np.abs(Z_hi - Z).max(axis=1) > 1e-6 * scale)
    # keep the lower-amplitude branch
    lower = np.where((np.linalg.norm(Z_hi, axis=1) < np.linalg.norm(Z, axis=1))[:, None] & distinct[:, None],
                     Z_hi, Z)
    return lower, distinct


def solve_saturated_spectrum(y_b: float, rates: ModelRates, sat: SaturationParams, deltas,
                             tol: float = 1e-10, max_iter: int = 50,
                             detect_bistability: bool = True) -> list[SaturationState]:
    """Steady states at one drive strength for every detuning in ``deltas``."""
    if y_b < 0:
        raise ValueError("y_b must be >= 0")
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    co = _coefficients(rates, sat, deltas)
    if y_b == 0:
        zero = [SaturationState(0j, 0j, 0j, 0.0, float(d), True, 0, 0.0) for d in deltas]
        return zero
    Z, res, iters = _continuation(y_b, co, tol, max_iter)
    y = np.full(len(deltas), y_b)
    bistable = np.zeros(len(deltas), dtype=bool)
    if detect_bistability:
        Z, bistable = _check_bistability(Z, y, co, tol, max_iter)
        if bistable.any():
            log.warning("multiple steady states at y_b=%g for %d detunings; lower branch kept",
                        y_b, int(bistable.sum()))
        res = np.abs(_residual(Z, y, co)).max(axis=1)
    return [SaturationState(complex(Z[k, 0]), complex(Z[k, 1]), complex(Z[k, 2]), float(y_b),
                            float(deltas[k]), bool(res[k] < tol), int(iters[k]), float(res[k]),
                            bool(bistable[k]))
            for k in range(len(deltas))]


def solve_saturated_state(y_b: float, rates: ModelRates, sat: SaturationParams, delta: float = 0.0,
                          tol: float = 1e-10, max_iter: int = 50,
                          detect_bistability: bool = True) -> SaturationState:
    """Steady state at drive strength ``y_b`` reached by continuation from the weak-drive limit."""
    return solve_saturated_spectrum(y_b, rates, sat, [delta], tol, max_iter, detect_bistability)[0]


def residual(state: SaturationState, rates: ModelRates, sat: SaturationParams) -> np.ndarray:
    """Complex defects of the three normalized equations at ``state``."""
    co = _coefficients(rates, sat, [state.delta])
    Z = np.array([[state.X1, state.X2, state.Xb]])
    return _residual(Z, np.array([state.y_b]), co)[0]


# -- drive power -----------------------------------------------------------------

def _power_per_yb2(rates: ModelRates, sat: SaturationParams, wavelength: float) -> float:
    kappa_b = rates.kappa_b * RAD_PER_S
    kappa_bs = rates.kappa_b_bs * RAD_PER_S
    photon = 2 * math.pi * hbar * C_VACUUM / wavelength
    return kappa_b ** 2 / (2 * kappa_bs) * photon * math.sqrt(sat.n_sat_1 * sat.n_sat_2)


def power_to_yb(power: float, rates: ModelRates, sat: SaturationParams,
                wavelength: float = DEFAULT_WAVELENGTH) -> float:
    """Normalized drive y_b for an input power (W) at the beamsplitter port."""
    if power < 0:
        raise ValueError("power must be >= 0")
    return math.sqrt(power / _power_per_yb2(rates, sat, wavelength))


def yb_to_power(y_b: float, rates: ModelRates, sat: SaturationParams,
                wavelength: float = DEFAULT_WAVELENGTH) -> float:
    return _power_per_yb2(rates, sat, wavelength) * y_b ** 2


# -- spectra and saturation curve ---------------------------------------------

def normalized_flux_c(states: Sequence[SaturationState], rates: ModelRates, sat: SaturationParams) -> np.ndarray:
    """Fiber emission at the beamsplitter tap per unit input flux, for each state."""
    Xb = np.array([s.Xb for s in states])
    y = np.array([s.y_b for s in states])
    # |b|^2 2 kappa_bs / (E_b^2 / 2 kappa_bs) = 4 kappa_bs^2 |Xb|^2 / (kappa_b^2 y^2)
    return 4 * rates.kappa_b_bs ** 2 / rates.kappa_b ** 2 * np.abs(Xb) ** 2 / y ** 2


def linear_flux_c(rates: ModelRates, atoms: AtomEnsembleParams, deltas) -> np.ndarray:
    """Weak-drive counterpart of :func:`normalized_flux_c` from the linear solver."""
    deltas = np.asarray(deltas, dtype=float)
    E = np.zeros(5, dtype=complex)
    E[B] = 1.0
    x = solve_amplitudes(rates, atoms, E, (deltas,) * 4)
    return 4 * rates.kappa_b_bs ** 2 * np.abs(x[..., B]) ** 2


def _peak(delta: np.ndarray, y: np.ndarray) -> float:
    """Grid maximum refined by a parabola through its neighbours."""
    k = int(np.argmax(y))
    if 0 < k < len(y) - 1:
        y0, y1, y2 = y[k - 1], y[k], y[k + 1]
        denom = y0 - 2 * y1 + y2
        if denom < 0:
            return float(y1 - (y0 - y2) ** 2 / (8 * denom))
    return float(y[k])


def transmission_ratio(delta: np.ndarray, flux: np.ndarray) -> tuple[float, float, float]:
    """(on-resonance flux, mean bright-peak flux, ratio) for a spectrum containing Delta = 0."""
    delta = np.asarray(delta)
    flux = np.asarray(flux)
    k0 = int(np.argmin(np.abs(delta)))
    if delta[k0] != 0:
        raise ValueError("detuning grid must contain 0")
    left = _peak(delta[:k0], flux[:k0])
    right = _peak(delta[k0 + 1:], flux[k0 + 1:])
    bright = 0.5 * (left + right)
    return float(flux[k0]), bright, float(flux[k0] / bright)


@dataclass(frozen=True)
class SaturationPoint:
    power: float
    y_b: float
    norm_transmission: float
    flux0: float
    bright_avg: float
    converged: bool
    bistable: bool


def default_grid(span: float = 30.0, n_points: int = 601) -> np.ndarray:
    if n_points % 2 == 0:
        n_points += 1  # keep Delta = 0 on the grid
    return np.linspace(-span, span, n_points)


def saturation_curve(powers: Sequence[float], rates: ModelRates, sat: SaturationParams,
                     deltas=None, wavelength: float = DEFAULT_WAVELENGTH,
                     tol: float = 1e-10, max_iter: int = 50,
                     return_spectra: bool = False):
    """Normalized on-resonance C->C transmission versus input power.

    Powers are processed in ascending order and each one continues from the
    previous power's solution at every detuning (sequential by construction).
    """
    powers = [float(p) for p in powers]
    if any(p <= 0 for p in powers):
        raise ValueError("powers must be positive")
    if sorted(powers) != powers:
        raise ValueError("powers must be sorted ascending")
    deltas = default_grid() if deltas is None else np.asarray(deltas, dtype=float)
    co = _coefficients(rates, sat, deltas)
    points, spectra = [], []
    Z_prev, y_prev = None, None
    for power in powers:
        y_b = power_to_yb(power, rates, sat, wavelength)
        try:
            if Z_prev is None:
                Z, res, _ = _continuation(y_b, co, tol, max_iter)
            else:
                Z, res, _ = _continuation(y_b, co, tol, max_iter, Z_start=Z_prev, y_start=y_prev)
        except ConvergenceError as exc:
            raise ConvergenceError(str(exc), exc.residual, power=power) from exc
        y = np.full(len(deltas), y_b)
        Z_out, bistable = _check_bistability(Z, y, co, tol, max_iter)
        res = np.abs(_residual(Z_out, y, co)).max(axis=1)
        states = [SaturationState(complex(Z_out[k, 0]), complex(Z_out[k, 1]), complex(Z_out[k, 2]), y_b,
                                  float(deltas[k]), bool(res[k] < tol), 0, float(res[k]), bool(bistable[k]))
                  for k in range(len(deltas))]
        flux = normalized_flux_c(states, rates, sat)
        f0, bright, ratio = transmission_ratio(deltas, flux)
        points.append(SaturationPoint(power, y_b, ratio, f0, bright,
                                      bool(np.all(res < tol)), bool(bistable.any())))
        spectra.append(flux)
        Z_prev, y_prev = Z, y_b
    if return_spectra:
        return points, np.asarray(spectra)
    return points
