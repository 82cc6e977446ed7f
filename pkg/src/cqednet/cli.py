"""Command-line interface.

Subcommands: ``derive-rates``, ``modes``, ``spectrum``, ``saturate`` and
``verify``.  Exit codes: 0 success, 1 configuration error, 2 solver error,
3 oracle failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import config as cfg
from .linear_response import SingularSystemError, sweep_spectrum
from .normal_modes import COMPONENTS, analytic_modes, numeric_modes
from .plotting import (
    SATURATION_COLUMNS,
    SPECTRUM_COLUMNS,
    PlotScriptError,
    emit_plot_script,
    plot_saturation,
    plot_spectrum,
)
from .rates import V_SCALING, InvalidGeometryError, apply_v_scaling, derive_rates, preset, preset_geometry
from .saturation import A_GEOM_DEFAULT, ConvergenceError, SaturationParams, default_grid, saturation_curve
from .verify import format_report, summary, verification_suite

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_ORACLE = 0, 1, 2, 3
OUTPUT_DIR_ENV = "CQEDNET_OUTPUT_DIR"

DEFAULT_POWER_RANGE = (0.5e-9, 27e-9, 12)


def _fmt(x: float) -> str:
    return f"{x:.16e}"


def write_atomic(path, text: str) -> Path:
    """Write ``text`` to a temporary file in the target directory, then rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _render_atomic(path, render) -> Path:
    """Render a figure through ``render(tmp_path)`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.stem}.", suffix=path.suffix or ".png")
    os.close(fd)
    try:
        render(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    return buf.getvalue()


def _output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, "."))


def _resolve_out(value: Optional[str], default_name: str) -> Path:
    if value is None:
        return _output_dir() / default_name
    path = Path(value)
    return path if path.is_absolute() or path.parent != Path(".") else _output_dir() / path


def _sibling(value: Optional[str], csv_path: Path, suffix: str) -> Optional[Path]:
    if value is None:
        return None
    if value == "":
        return csv_path.with_suffix(suffix)
    return _resolve_out(value, csv_path.with_suffix(suffix).name)


def _v_scaling(text: str):
    if text == "preset":
        return text
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a positive number or 'preset', got {text!r}") from exc
    if not value > 0:
        raise argparse.ArgumentTypeError("v-scaling must be > 0")
    return value


# -- configuration -------------------------------------------------------------

def _document(args) -> dict:
    """Merge the config file (if any) with command-line overrides."""
    doc = cfg.load(args.config) if getattr(args, "config", None) else {}
    doc = copy.deepcopy(doc)
    if getattr(args, "preset", None):
        doc["preset"] = args.preset
    if "preset" not in doc and not any(k in doc for k in ("geometry", "rates_override")):
        raise cfg.ConfigError("need --preset or --config with geometry or rates_override")
    if getattr(args, "v_scaling", None) is not None:
        doc["v_scaling"] = args.v_scaling
    atoms = doc.setdefault("atoms", {})
    if getattr(args, "empty", False):
        atoms["empty"] = True
    elif getattr(args, "g", None) is not None:
        atoms["g_eff"] = list(args.g)
        atoms.pop("g0", None)
    if not atoms:
        doc.pop("atoms")
    cfg.validate(doc)
    return doc


def _add_model_args(p: argparse.ArgumentParser, atoms: bool = True) -> None:
    src = p.add_argument_group("model")
    src.add_argument("--preset", choices=["fig2", "fig3"], help="tabulated parameter set")
    src.add_argument("--config", help="JSON run configuration")
    src.add_argument("--v-scaling", type=_v_scaling, default=None,
                     help="factor applied to v1, v2 ('preset' selects the preset's value)")
    if atoms:
        group = src.add_mutually_exclusive_group()
        group.add_argument("--g", nargs=2, type=float, metavar=("G1", "G2"), help="collective couplings")
        group.add_argument("--empty", action="store_true", help="remove both ensembles")


# -- subcommands -----------------------------------------------------------------

def cmd_derive_rates(args) -> int:
    if args.from_geometry:
        if not args.preset:
            raise cfg.ConfigError("--from-geometry needs --preset")
        _, table, _ = preset(args.preset)
        geometry = preset_geometry(args.preset, n_fiber=args.n_fiber) if args.n_fiber else preset_geometry(args.preset)
        rates = derive_rates(geometry, table.gamma_par, table.gamma_las)
        scale = args.v_scaling if args.v_scaling is not None else 1.0
        if scale == "preset":
            scale = V_SCALING[args.preset]
        rates = apply_v_scaling(rates, scale)
    else:
        rates = cfg.resolve(_document(args)).rates
    text = json.dumps(rates.to_dict(derived=True), indent=2, sort_keys=True) + "\n"
    if args.out:
        write_atomic(_resolve_out(args.out, "rates.json"), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_modes(args) -> int:
    if args.g is not None and args.v is not None:
        g1, g2 = args.g
        v1, v2 = args.v
    else:
        model = cfg.resolve(_document(args))
        g1, g2 = args.g if args.g is not None else model.atoms.g_eff
        v1, v2 = args.v if args.v is not None else (model.rates.v1, model.rates.v2)
    use_numeric = args.numeric or min(g1, g2) <= 0
    modes = numeric_modes(g1, g2, v1, v2) if use_numeric else analytic_modes(g1, g2, v1, v2)
    header = ["label", "frequency"] + [f"{c}_{part}" for c in COMPONENTS for part in ("re", "im")]
    rows = []
    for k, mode in enumerate(modes):
        comps = [x for z in mode.vector for x in (float(z.real), float(z.imag))]
        rows.append([mode.label.value if mode.label else f"mode{k}", float(mode.frequency)] + comps)
    text = csv_text(header, rows)
    if args.out:
        write_atomic(_resolve_out(args.out, "modes.csv"), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_spectrum(args) -> int:
    doc = _document(args)
    model = cfg.resolve(doc)
    sweep, drive, output = doc.get("sweep", {}), doc.get("drive", {}), doc.get("output", {})
    port = args.port or drive.get("port", "A")
    delta_min = args.delta_min if args.delta_min is not None else sweep.get("delta_min", -30.0)
    delta_max = args.delta_max if args.delta_max is not None else sweep.get("delta_max", 30.0)
    n_points = args.points if args.points is not None else sweep.get("n_points", 601)
    normalize = args.normalize or output.get("normalize", "none")
    detection = args.c_detection or output.get("c_detection", "tap")
    spec = sweep_spectrum(model.rates, model.atoms, port, delta_min=delta_min, delta_max=delta_max,
                          n_points=n_points, amplitude=drive.get("amplitude", 1.0),
                          normalize=normalize, c_detection=detection)
    header = list(SPECTRUM_COLUMNS) + [f"{c}_{part}" for c in COMPONENTS for part in ("re", "im")]
    amps = spec.amplitudes
    rows = []
    for k, d in enumerate(spec.delta):
        comps = [x for z in amps[k] for x in (float(z.real), float(z.imag))]
        rows.append([float(d)] + [float(spec.flux[p][k]) for p in ("A", "B", "C")] + comps)
    name = f"spectrum_{model.preset or 'custom'}_{port}.csv"
    csv_path = write_atomic(_resolve_out(args.out or output.get("csv"), name), csv_text(header, rows))
    print(f"wrote {csv_path}")

    scale = args.plot_scale if args.plot_scale is not None else output.get("plot_scale", 1.0)
    script = _sibling(args.plot_script if args.plot_script is not None else output.get("plot_script"),
                      csv_path, ".gp")
    if script is not None:
        print(f"wrote {write_atomic(script, emit_plot_script(csv_path, 'spectrum', scale=scale))}")
    figure = _sibling(args.figure if args.figure is not None else output.get("figure"), csv_path, ".png")
    if figure is not None:
        title = f"{model.preset or 'custom'}: drive {port}, g = {model.atoms.g_eff_1:g}, {model.atoms.g_eff_2:g}"
        _render_atomic(figure, lambda p: plot_spectrum(spec.delta, spec.flux, p, scale=scale, title=title))
        print(f"wrote {figure}")
    return EXIT_OK


def _powers(args, section: dict) -> list[float]:
    if args.powers:
        powers = list(args.powers)
    elif args.power_range:
        lo, hi, n = args.power_range
        powers = list(np.geomspace(lo, hi, int(n)))
    elif "powers_w" in section:
        powers = list(section["powers_w"])
    elif "power_range" in section:
        r = section["power_range"]
        powers = list(np.geomspace(r["min"], r["max"], r["n"]))
    else:
        lo, hi, n = DEFAULT_POWER_RANGE
        powers = list(np.geomspace(lo, hi, n))
    if any(p <= 0 for p in powers):
        raise cfg.ConfigError("powers must be > 0")
    return sorted(float(p) for p in powers)


def cmd_saturate(args) -> int:
    doc = _document(args)
    model = cfg.resolve(doc)
    section = doc.get("saturation", {})
    solver = doc.get("solver", {})
    A_geom = args.a_geom if args.a_geom is not None else section.get("A_geom", A_GEOM_DEFAULT)
    try:
        sat = SaturationParams.from_atoms(model.rates, model.atoms, A_geom)
    except ValueError as exc:
        raise cfg.ConfigError(f"atoms: {exc}") from exc
    span = args.delta_span if args.delta_span is not None else section.get("delta_span", 30.0)
    n_points = args.points if args.points is not None else section.get("n_points", 601)
    deltas = default_grid(span, n_points)
    powers = _powers(args, section)
    kwargs = {}
    if "wavelength" in section:
        kwargs["wavelength"] = section["wavelength"]
    points, spectra = saturation_curve(
        powers, model.rates, sat, deltas,
        tol=args.tol if args.tol is not None else solver.get("tol", 1e-10),
        max_iter=args.max_iter if args.max_iter is not None else solver.get("max_iter", 50),
        return_spectra=True, **kwargs,
    )
    rows = [[p.power, p.y_b, p.norm_transmission, p.flux0, p.bright_avg, str(int(p.converged))] for p in points]
    name = f"saturation_{model.preset or 'custom'}.csv"
    output = doc.get("output", {})
    csv_path = write_atomic(_resolve_out(args.out or output.get("csv"), name),
                            csv_text(SATURATION_COLUMNS, rows))
    print(f"wrote {csv_path}")
    script = _sibling(args.plot_script if args.plot_script is not None else output.get("plot_script"),
                      csv_path, ".gp")
    if script is not None:
        print(f"wrote {write_atomic(script, emit_plot_script(csv_path, 'saturation'))}")
    figure = _sibling(args.figure if args.figure is not None else output.get("figure"), csv_path, ".png")
    if figure is not None:
        _render_atomic(figure, lambda p: plot_saturation([q.power for q in points],
                                                         [q.norm_transmission for q in points],
                                                         p, spectra=spectra, delta=deltas))
        print(f"wrote {figure}")
    if not all(p.converged for p in points):
        print("warning: some detunings did not reach the residual tolerance", file=sys.stderr)
    return EXIT_OK


def cmd_verify(args) -> int:
    results = verification_suite(seed=args.seed, only=args.only)
    report = format_report(results)
    sys.stdout.write(report)
    if args.report:
        write_atomic(_resolve_out(args.report, "verify.txt"), report)
    if args.json:
        write_atomic(_resolve_out(args.json, "verify.json"),
                     json.dumps(summary(results, args.seed), indent=2) + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_ORACLE


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cqednet", description="Spectra, normal modes and saturation of two atom-cavity systems joined by a fiber.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("derive-rates", help="print model rates as flat JSON")
    _add_model_args(p, atoms=False)
    p.add_argument("--from-geometry", action="store_true",
                   help="derive from the preset's lengths and reflectances instead of the table")
    p.add_argument("--n-fiber", type=float, default=None, help="fiber group index")
    p.add_argument("--out", help="JSON output path (default: stdout)")
    p.set_defaults(func=cmd_derive_rates)

    p = sub.add_parser("modes", help="normal modes of the lossless network")
    _add_model_args(p, atoms=False)
    p.add_argument("--g", nargs=2, type=float, metavar=("G1", "G2"))
    p.add_argument("--v", nargs=2, type=float, metavar=("V1", "V2"))
    kind = p.add_mutually_exclusive_group()
    kind.add_argument("--numeric", action="store_true", help="numeric diagonalization")
    kind.add_argument("--analytic", action="store_true", help="closed-form modes (default)")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("spectrum", help="linear transmission spectra")
    _add_model_args(p)
    p.add_argument("--in", dest="port", choices=["A", "C"], help="driven port (default A)")
    p.add_argument("--delta-min", type=float)
    p.add_argument("--delta-max", type=float)
    p.add_argument("--points", type=int)
    p.add_argument("--normalize", choices=["none", "empty_peak"])
    p.add_argument("--c-detection", choices=["tap", "reflection"],
                   help="port C output: emission only (tap) or interfering with the input")
    p.add_argument("--out", help="CSV path")
    p.add_argument("--plot-script", nargs="?", const="", default=None,
                   help="also write a gnuplot script (default name: CSV stem + .gp)")
    p.add_argument("--figure", nargs="?", const="", default=None,
                   help="also render a PNG figure (default name: CSV stem + .png)")
    p.add_argument("--plot-scale", type=float, help="display-only factor applied in plots")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("saturate", help="saturation of the dark-mode transmission")
    _add_model_args(p)
    powers = p.add_mutually_exclusive_group()
    powers.add_argument("--powers", nargs="+", type=float, metavar="W")
    powers.add_argument("--power-range", nargs=3, type=float, metavar=("MIN", "MAX", "N"),
                        help="logarithmically spaced powers in W")
    p.add_argument("--delta-span", type=float, help="detuning grid half-width")
    p.add_argument("--points", type=int, help="detuning grid points (odd)")
    p.add_argument("--a-geom", type=float, help="geometric factor of the coupling profile")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--out", help="CSV path")
    p.add_argument("--plot-script", nargs="?", const="", default=None)
    p.add_argument("--figure", nargs="?", const="", default=None)
    p.set_defaults(func=cmd_saturate)

    p = sub.add_parser("verify", help="run the oracle cross-checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--only", nargs="+", metavar="CHECK")
    p.add_argument("--report", help="text report path")
    p.add_argument("--json", help="machine-readable summary path")
    p.set_defaults(func=cmd_verify)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        return args.func(args)
    except (SingularSystemError, ConvergenceError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (cfg.ConfigError, InvalidGeometryError, PlotScriptError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(run())
