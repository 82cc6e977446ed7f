"""Independent checks of the linear and saturation models.

* A master-equation steady state on a truncated Fock space (one two-level
  atom per cavity) for the weak-drive linear model.
* Discrete ensemble sums and angular quadrature for the closed-form
  ensemble-averaged atomic response.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.integrate import quad
from scipy.sparse.linalg import expm_multiply, spsolve

from .linear_response import DriveSpec
from .rates import ModelRates

log = logging.getLogger(__name__)

MAX_DIMENSION = 4096
NULL_SPACE_MAX_DIMENSION = 1024  # of the vectorized Liouvillian; sparse LU fill-in grows fast beyond


class TruncationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TruncatedHilbertSpec:
    n1_max: int = 1
    n2_max: int = 1
    nb_max: int = 1

    def __post_init__(self):
        for name in ("n1_max", "n2_max", "nb_max"):
            value = getattr(self, name)
            if not (isinstance(value, (int, np.integer)) and value >= 0):
                raise ValueError(f"{name} must be a non-negative integer, got {value!r}")
        if self.dimension > MAX_DIMENSION:
            raise ValueError(f"Hilbert-space dimension {self.dimension} exceeds {MAX_DIMENSION}")

    @property
    def dimension(self) -> int:
        return 4 * (self.n1_max + 1) * (self.n2_max + 1) * (self.nb_max + 1)


@dataclass
class MasterEquationResult:
    a1: complex
    a2: complex
    b: complex
    sigma1: complex
    sigma2: complex
    n1: float
    n2: float
    nb: float
    rho: np.ndarray
    method: str

    @property
    def trace_error(self) -> float:
        return abs(np.trace(self.rho) - 1)

    @property
    def hermiticity_error(self) -> float:
        return float(np.abs(self.rho - self.rho.conj().T).max())

    @property
    def min_population(self) -> float:
        return float(np.real(np.diag(self.rho)).min())

    def amplitudes(self) -> np.ndarray:
        """(sigma1, sigma2, a1, a2, b) order, matching the linear solver."""
        return np.array([self.sigma1, self.sigma2, self.a1, self.a2, self.b])


def _destroy(n_max: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, n_max + 1)), 1, format="csr", dtype=complex)


def _embed(ops: list, slot: int, op) -> sp.csr_matrix:
    factors = [sp.identity(o, format="csr", dtype=complex) for o in ops]
    factors[slot] = sp.csr_matrix(op, dtype=complex)
    out = factors[0]
    for f in factors[1:]:
        out = sp.kron(out, f, format="csr")
    return out


def _operators(spec: TruncatedHilbertSpec) -> dict:
    dims = [2, 2, spec.n1_max + 1, spec.n2_max + 1, spec.nb_max + 1]
    sm = np.array([[0, 1], [0, 0]], dtype=complex)  # |g><e| with basis (g, e)
    ops = {
        "sigma1": _embed(dims, 0, sm),
        "sigma2": _embed(dims, 1, sm),
        "a1": _embed(dims, 2, _destroy(spec.n1_max)),
        "a2": _embed(dims, 3, _destroy(spec.n2_max)),
        "b": _embed(dims, 4, _destroy(spec.nb_max)),
    }
    return ops


def _sigma_z(sm: sp.csr_matrix) -> sp.csr_matrix:
    # spin-1/2 normalization: D[sigma_z] then dephases the coherence at rate 1
    return 0.5 * (sm.getH() @ sm - sm @ sm.getH())


def _dissipator(O: sp.csr_matrix, eye: sp.csr_matrix) -> sp.csr_matrix:
    """Superoperator of 2 O rho O^+ - O^+O rho - rho O^+O for row-major vec(rho)."""
    OdO = (O.getH() @ O).tocsr()
    return 2 * sp.kron(O, O.conj()) - sp.kron(OdO, eye) - sp.kron(eye, OdO.T)


def liouvillian(spec: TruncatedHilbertSpec, rates: ModelRates, g1: float, g2: float,
                drive: DriveSpec) -> tuple[sp.csr_matrix, dict]:
    ops = _operators(spec)
    a1, a2, b, s1, s2 = ops["a1"], ops["a2"], ops["b"], ops["sigma1"], ops["sigma2"]
    d1, d2, db, da = drive.oscillator_detunings()
    dag = lambda O: O.getH()  # noqa: E731
    H = (d1 * dag(a1) @ a1 + d2 * dag(a2) @ a2 + db * dag(b) @ b
         + rates.v1 * (dag(a1) @ b + dag(b) @ a1)
         + rates.v2 * (dag(a2) @ b + dag(b) @ a2)
         + da * (dag(s1) @ s1 + dag(s2) @ s2)
         + g1 * (dag(a1) @ s1 + dag(s1) @ a1)
         + g2 * (dag(a2) @ s2 + dag(s2) @ a2))
    driven = {"A": a1, "C": b}[drive.port]
    E = drive.amplitude
    H = H + np.conj(E) * driven + E * dag(driven)

    eye = sp.identity(spec.dimension, format="csr", dtype=complex)
    L = -1j * (sp.kron(H, eye) - sp.kron(eye, H.T))
    channels = [
        (rates.kappa_1l + rates.kappa_1loss, a1),
        (rates.kappa_2r + rates.kappa_2loss, a2),
        (rates.kappa_b_bs + rates.kappa_b_loss, b),
        (rates.gamma_par / 2, s1),
        (rates.gamma_par / 2, s2),
        (rates.gamma_las, dag(a1) @ a1),
        (rates.gamma_las, dag(a2) @ a2),
        (rates.gamma_las, dag(b) @ b),
        (rates.gamma_las, _sigma_z(s1)),
        (rates.gamma_las, _sigma_z(s2)),
    ]
    for rate, O in channels:
        if rate:
            L = L + rate * _dissipator(sp.csr_matrix(O), eye)
    return L.tocsr(), ops


def _null_space_state(L: sp.csr_matrix, d: int) -> np.ndarray:
    """Solve L vec(rho) = 0 with the first equation replaced by Tr(rho) = 1."""
    trace_row = sp.csr_matrix((np.ones(d), (np.zeros(d, dtype=int), np.arange(d) * (d + 1))),
                              shape=(1, d * d))
    A = sp.vstack([trace_row, L[1:]]).tocsc()
    rhs = np.zeros(d * d, dtype=complex)
    rhs[0] = 1.0
    return spsolve(A, rhs).reshape(d, d)


def _propagated_state(L: sp.csr_matrix, d: int, probe: sp.csr_matrix, timescale: float,
                      tol: float = 1e-10, max_chunks: int = 10_000) -> np.ndarray:
    """Evolve from the vacuum until d<probe>/dt falls below ``tol``."""
    rho = np.zeros(d * d, dtype=complex)
    rho[0] = 1.0  # ground state: both atoms in g, all modes in vacuum
    probe_row = probe.T.reshape(1, d * d).tocsr()  # Tr(probe rho) for row-major vec
    for _ in range(max_chunks):
        rho = expm_multiply(L * timescale, rho)
        rate = abs((probe_row @ (L @ rho))[0])
        if rate < tol:
            return rho.reshape(d, d)
    raise RuntimeError("time propagation did not reach a steady state")


def lindblad_steady_state(spec: TruncatedHilbertSpec, rates: ModelRates, g1: float, g2: float,
                          drive: DriveSpec, method: Optional[str] = None) -> MasterEquationResult:
    """Steady state of the full master equation on a truncated Fock space.

    ``method`` is ``"null_space"`` or ``"propagate"``; by default the null
    space is used while the vectorized Liouvillian has dimension <= 1024
    (cutoffs (1, 1, 1)).
    """
    d = spec.dimension
    if method is None:
        method = "null_space" if d * d <= NULL_SPACE_MAX_DIMENSION else "propagate"
    L, ops = liouvillian(spec, rates, g1, g2, drive)
    if method == "null_space":
        rho = _null_space_state(L, d)
    elif method == "propagate":
        slowest = min(r for r in (rates.kappa_1, rates.kappa_2, rates.kappa_b, rates.gamma_perp) if r > 0)
        rho = _propagated_state(L, d, ops["a1" if drive.port == "A" else "b"], 1.0 / slowest)
    else:
        raise ValueError(f"unknown method {method!r}")

    def expect(O):
        return complex(np.sum(O.multiply(rho.T)))

    res = MasterEquationResult(
        a1=expect(ops["a1"]), a2=expect(ops["a2"]), b=expect(ops["b"]),
        sigma1=expect(ops["sigma1"]), sigma2=expect(ops["sigma2"]),
        n1=expect(ops["a1"].getH() @ ops["a1"]).real,
        n2=expect(ops["a2"].getH() @ ops["a2"]).real,
        nb=expect(ops["b"].getH() @ ops["b"]).real,
        rho=rho, method=method,
    )
    for n, cutoff, name in ((res.n1, spec.n1_max, "a1"), (res.n2, spec.n2_max, "a2"), (res.nb, spec.nb_max, "b")):
        if n >= 0.1 * max(cutoff, 1):
            warnings.warn(f"mean photon number {n:.3g} in {name} too large for cutoff {cutoff}",
                          TruncationWarning, stacklevel=2)
    return res


# -- ensemble sums ----------------------------------------------------------------

@dataclass(frozen=True)
class EnsembleSample:
    """Atoms at standing-wave phases ``thetas`` with peak single-atom coupling ``g0``.

    Atom j couples with ``g0^2 (A + (1 - A) cos^2 theta_j)``.
    """

    thetas: np.ndarray
    g0: float
    A_geom: float = 0.17

    def __post_init__(self):
        if len(self.thetas) < 1:
            raise ValueError("sample needs at least one atom")

    @property
    def M(self) -> int:
        return len(self.thetas)

    @classmethod
    def uniform(cls, M: int, g0: float, A_geom: float = 0.17, seed: Optional[int] = None) -> "EnsembleSample":
        rng = np.random.default_rng(seed)
        return cls(rng.uniform(0.0, np.pi, M), g0, A_geom)

    def couplings_squared(self) -> np.ndarray:
        return self.g0 ** 2 * (self.A_geom + (1 - self.A_geom) * np.cos(self.thetas) ** 2)

    def cooperativity(self, kappa: float, gamma_perp: float) -> float:
        """C of the equivalent continuous ensemble: N_eff = M (1 + A)/2."""
        return self.M * (1 + self.A_geom) / 2 * self.g0 ** 2 / (kappa * gamma_perp)


def discrete_susceptibility_terms(sample: EnsembleSample, X: complex, delta_a_norm: float,
                                  rates: ModelRates, kappa: float) -> np.ndarray:
    """Per-atom contributions, in the units of :func:`~cqednet.saturation.bracket_term`."""
    gp, gpar = rates.gamma_perp, rates.gamma_par
    delta_a = delta_a_norm * gp
    n_sat = gp * gpar / (4 * sample.g0 ** 2)
    a2 = abs(X) ** 2 * n_sat
    gj2 = sample.couplings_squared()
    terms = gj2 / (gp ** 2 + delta_a ** 2 + 4 * (gp / gpar) * gj2 * a2)
    return (gp - 1j * delta_a) / kappa * terms


def discrete_susceptibility_sum(sample: EnsembleSample, X: complex, delta_a_norm: float,
                                rates: ModelRates, kappa: float) -> complex:
    return complex(discrete_susceptibility_terms(sample, X, delta_a_norm, rates, kappa).sum())


def bracket_quadrature(X: complex, delta_a_norm: float, C: float, A_geom: float = 0.17) -> complex:
    """Angular average of the saturable response, evaluated by adaptive quadrature."""
    x = abs(X) ** 2
    s = 1 + delta_a_norm ** 2

    def integrand(theta):
        w = A_geom + (1 - A_geom) * math.cos(theta) ** 2
        return w / (s + w * x)

    avg = quad(integrand, 0.0, math.pi, epsabs=0.0, epsrel=1e-13, limit=200)[0] / math.pi
    return complex((1 - 1j * delta_a_norm) * 2 * C / (1 + A_geom) * avg)


def average_identity_check(a: float, b: float) -> float:
    """|(1/pi) int_0^pi dtheta/(a + b cos^2 theta) - 1/sqrt(a (a + b))|."""
    if not (a > 0 and a + b > 0):
        raise ValueError("need a > 0 and a + b > 0")
    numeric = quad(lambda t: 1.0 / (a + b * math.cos(t) ** 2), 0.0, math.pi,
                   epsabs=0.0, epsrel=1e-13, limit=200)[0] / math.pi
    return abs(numeric - 1.0 / math.sqrt(a * (a + b)))
