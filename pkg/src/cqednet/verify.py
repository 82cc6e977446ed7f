"""Cross-checks of the solvers against independent oracles.

Each check returns a :class:`CheckResult`; :func:`verification_suite` runs
them all and :func:`format_report` / :func:`summary` render the outcome.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import asdict, dataclass, replace
from typing import Callable, Optional

import numpy as np

from .linear_response import DriveSpec, solve_amplitudes, steady_state, steady_state_analytic, sweep_spectrum
from .normal_modes import A1, A2, analytic_modes, numeric_modes
from .oracles import (
    EnsembleSample,
    TruncatedHilbertSpec,
    TruncationWarning,
    average_identity_check,
    bracket_quadrature,
    discrete_susceptibility_terms,
    lindblad_steady_state,
)
from .rates import AtomEnsembleParams, ModelRates, apply_v_scaling, preset, V_SCALING
from .saturation import (
    SaturationParams,
    bracket_term,
    linear_flux_c,
    normalized_flux_c,
    solve_saturated_spectrum,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    seconds: float = 0.0
    detail: str = ""


def _rel(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    scale = np.maximum(np.abs(b), 1e-300)
    return float(np.max(np.abs(a - b) / scale))


def random_rates(rng: np.random.Generator) -> ModelRates:
    """Rates drawn from a broad box around the experimental values."""
    u = lambda lo, hi: float(rng.uniform(lo, hi))  # noqa: E731
    return ModelRates(
        kappa_1l=u(0.2, 5), kappa_1r=u(0.2, 5), kappa_2l=u(0.2, 5), kappa_2r=u(0.2, 5),
        kappa_1loss=u(0, 1), kappa_2loss=u(0, 1), kappa_b_bs=u(0.01, 1), kappa_b_loss=u(0, 1),
        v1=u(0.5, 20), v2=u(0.5, 20), gamma_par=u(1, 10), gamma_las=u(0, 1),
    )


def check_closed_form(seed: int = 0, n_draws: int = 1000, tol: float = 1e-10) -> CheckResult:
    """Successive-elimination formula against the direct 5x5 solve."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_draws):
        rates = random_rates(rng)
        atoms = AtomEnsembleParams(*rng.uniform(0.5, 20, 2))
        drive = DriveSpec(rng.choice(["A", "C"]), float(rng.uniform(0.1, 10)), float(rng.uniform(-30, 30)))
        a = steady_state_analytic(rates, atoms, drive).as_vector()
        d = steady_state(rates, atoms, drive).as_vector()
        worst = max(worst, float(np.max(np.abs(a - d)) / np.max(np.abs(d))))
    return CheckResult("closed_form_vs_direct", worst < tol, worst, tol)


def check_mode_algebra(seed: int = 0, n_draws: int = 1000, tol: float = 1e-9) -> CheckResult:
    """Analytic eigenpairs against numeric diagonalization."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_draws):
        g1, g2, v1, v2 = rng.uniform(0.5, 20, 4)
        an, nu = analytic_modes(g1, g2, v1, v2), numeric_modes(g1, g2, v1, v2)
        worst = max(worst, float(np.max(np.abs(an.frequencies - nu.frequencies))) / max(v1, v2, g1, g2))
        for m_an, m_nu in zip(an, nu):
            worst = max(worst, 1.0 - abs(np.vdot(m_an.vector, m_nu.vector)))
    return CheckResult("analytic_vs_numeric_modes", worst < tol, worst, tol)


def check_cavity_dark(seed: int = 0, n_draws: int = 1000, tol: float = 1e-10) -> CheckResult:
    """The zero-frequency numeric eigenvector carries no cavity photons."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_draws):
        modes = numeric_modes(*rng.uniform(0.5, 20, 4))
        zero = modes[int(np.argmin(np.abs(modes.frequencies)))]
        worst = max(worst, float(np.abs(zero.vector[[A1, A2]]).max()))
    return CheckResult("cavity_dark_purity", worst < tol, worst, tol)


def check_bracket(n_grid: int = 21, tol: float = 1e-8, C: float = 1.0, A_geom: float = 0.17) -> CheckResult:
    """Closed-form angular average against adaptive quadrature."""
    worst = 0.0
    for x in np.linspace(0, 10, n_grid):
        for d in np.linspace(-5, 5, n_grid):
            worst = max(worst, _rel(bracket_term(x, d, C, A_geom), bracket_quadrature(x, d, C, A_geom)))
    return CheckResult("bracket_vs_quadrature", worst < tol, worst, tol)


def check_identity(tol: float = 1e-12) -> CheckResult:
    pairs = [(1.0, 0.0), (1.0, 3.0), (2.5, 0.7), (0.3, 12.0), (5.0, -2.0)]
    worst = max(average_identity_check(a, b) for a, b in pairs)
    return CheckResult("angular_average_identity", worst < tol, worst, tol)


def check_monte_carlo(seed: int = 0, M: int = 1_000_000, n_sigma: float = 3.0) -> CheckResult:
    """Discrete ensemble sum against the continuum bracket, in standard errors."""
    _, rates, _ = preset("fig3")
    sample = EnsembleSample.uniform(M, g0=0.05, A_geom=0.17, seed=seed)
    kappa = rates.kappa_1
    X, dn = 1.0, 0.0
    terms = discrete_susceptibility_terms(sample, X, dn, rates, kappa)
    total = terms.sum()
    sem = math.sqrt(M) * float(np.std(terms.real, ddof=1))
    C = sample.cooperativity(kappa, rates.gamma_perp)
    expected = bracket_term(X, dn, C, sample.A_geom)
    z = abs(total - expected) / sem
    return CheckResult("monte_carlo_ensemble", z < n_sigma, z, n_sigma,
                       detail=f"sum={total.real:.6g} bracket={complex(expected).real:.6g}")


def master_equation_rates() -> ModelRates:
    _, rates, _ = preset("fig2")
    return rates


def check_master_equation(tol: float = 0.01, invariant_tol: float = 1e-10) -> CheckResult:
    """Truncated-Fock-space master equation at weak drive against the linear solve."""
    rates = master_equation_rates()
    atoms = AtomEnsembleParams(5.0, 5.0)
    spec = TruncatedHilbertSpec(1, 1, 1)
    worst, inv = 0.0, 0.0
    for port in ("A", "C"):
        for delta in (0.0, 3.0, -7.0):
            drive = DriveSpec(port, 1e-3 * rates.kappa_1, delta)
            with warnings.catch_warnings():
                warnings.simplefilter("error", TruncationWarning)
                me = lindblad_steady_state(spec, rates, 5.0, 5.0, drive)
            lin = steady_state(rates, atoms, drive).as_vector()
            worst = max(worst, _rel(me.amplitudes(), lin))
            inv = max(inv, me.trace_error, me.hermiticity_error, -me.min_population)
    ok = worst < tol and inv < invariant_tol
    return CheckResult("master_equation_weak_drive", ok, worst, tol, detail=f"invariants={inv:.2e}")


def lossless_rates(rates: ModelRates) -> ModelRates:
    return replace(rates, kappa_1loss=0.0, kappa_2loss=0.0, kappa_b_loss=0.0, gamma_par=0.0, gamma_las=0.0)


def check_energy_conservation(tol: float = 1e-8) -> CheckResult:
    """With every loss channel removed, output flux equals input flux."""
    _, rates, _ = preset("fig2")
    rates = lossless_rates(apply_v_scaling(rates, V_SCALING["fig2"]))
    worst = 0.0
    for port in ("A", "C"):
        for atoms in (AtomEnsembleParams(), AtomEnsembleParams(5.0, 5.0), AtomEnsembleParams(6.0, 7.0)):
            spec = sweep_spectrum(rates, atoms, port, n_points=601, c_detection="reflection")
            total = spec.flux["A"] + spec.flux["B"] + spec.flux["C"]
            incoming = 1.0 / (2 * (rates.kappa_1l if port == "A" else rates.kappa_b_bs))
            worst = max(worst, float(np.max(np.abs(total - incoming))) / incoming)
    return CheckResult("energy_conservation", worst < tol, worst, tol)


def check_weak_saturation(tol: float = 1e-6) -> CheckResult:
    """The saturable model reduces to the linear one at vanishing drive."""
    _, rates, atoms = preset("fig3")
    rates = apply_v_scaling(rates, V_SCALING["fig3"])
    sat = SaturationParams.from_atoms(rates, atoms)
    deltas = np.linspace(-30, 30, 121)
    states = solve_saturated_spectrum(1e-4, rates, sat, deltas)
    lin = linear_flux_c(rates, sat.linear_couplings(rates), deltas)
    worst = _rel(normalized_flux_c(states, rates, sat), lin)
    return CheckResult("saturation_weak_limit", worst < tol, worst, tol)


CHECKS: dict[str, Callable[..., CheckResult]] = {
    "closed_form_vs_direct": check_closed_form,
    "analytic_vs_numeric_modes": check_mode_algebra,
    "cavity_dark_purity": check_cavity_dark,
    "bracket_vs_quadrature": check_bracket,
    "angular_average_identity": check_identity,
    "monte_carlo_ensemble": check_monte_carlo,
    "master_equation_weak_drive": check_master_equation,
    "energy_conservation": check_energy_conservation,
    "saturation_weak_limit": check_weak_saturation,
}

_SEEDED = {"closed_form_vs_direct", "analytic_vs_numeric_modes", "cavity_dark_purity", "monte_carlo_ensemble"}


def verification_suite(seed: int = 0, only: Optional[list[str]] = None) -> list[CheckResult]:
    names = list(CHECKS) if only is None else only
    results = []
    for name in names:
        if name not in CHECKS:
            raise ValueError(f"unknown check {name!r}")
        t0 = time.perf_counter()
        res = CHECKS[name](seed=seed) if name in _SEEDED else CHECKS[name]()
        results.append(replace(res, seconds=time.perf_counter() - t0))
    return results


def format_report(results: list[CheckResult]) -> str:
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        extra = f"  {r.detail}" if r.detail else ""
        lines.append(f"{status}  {r.name:<28s} measured={r.measured:.3e}  tol={r.tolerance:.1e}"
                     f"  ({r.seconds:.2f} s){extra}")
    n_pass = sum(r.passed for r in results)
    lines.append(f"{n_pass}/{len(results)} checks passed")
    return "\n".join(lines) + "\n"


def summary(results: list[CheckResult], seed: int) -> dict:
    return {
        "seed": seed,
        "passed": all(r.passed for r in results),
        "checks": [asdict(r) for r in results],
    }
