"""Command-line front end: ``ionlab modes | run | fit | gatespeed | replay``.

Exit codes: 0 success, 1 usage or parse error, 2 physics or solver error,
3 fit failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import json
import math
import os
import sys
from importlib import resources

import numpy as np

from . import __version__
from .analysis import (extract_fock_populations, fit_lorentzian_peaks, fit_ramsey,
                       heating_from_scans, thermometry_from_scans, write_report)
from .constants import TWO_PI
from .crystal import crystal_modes, identify_sidebands, length_scale
from .dsl import LabConfig, PulseStep, Scan, Wait, parse_config, parse_sequence, parse_time
from .dynamics import DEFAULT_RABI, gate_speed_scan
from .errors import (DomainError, FitError, IntegratorError, IonLabError, ParseError, SchemaError,
                     SolverError)
from .experiment import ScanResult, resolve_mode, scan, simulated_mode, workers_from_env

EXIT_OK, EXIT_USAGE, EXIT_PHYSICS, EXIT_FIT = 0, 1, 2, 3
MANIFEST_SUFFIX = ".manifest.json"


class UsageError(IonLabError):
    pass


# --- helpers ---------------------------------------------------------------------

def _read(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def data_path(name):
    """Path of a file from the bundled example corpus."""
    return os.fspath(resources.files("ionlab") / "data" / name)


def _resolve_input(path):
    if os.path.exists(path):
        return path
    bundled = data_path(path)
    if os.path.exists(bundled):
        return bundled
    raise UsageError(f"no such file: {path}")


def _load_config(args):
    if getattr(args, "config", None):
        return parse_config(_read(_resolve_input(args.config)))
    return None


def _emit(text, out):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _config_dict(config):
    d = dataclasses.asdict(config)
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}


def _gnuplot(csv_path, xcol, ycol, ecol=None, xlabel="x", ylabel="y", logy=False):
    lines = ["set datafile separator ','", f"set xlabel '{xlabel}'", f"set ylabel '{ylabel}'"]
    if logy:
        lines.append("set logscale y")
    using = f"{xcol}:{ycol}:{ecol} with yerrorbars" if ecol else f"{xcol}:{ycol} with linespoints"
    lines.append(f"plot '{csv_path}' every ::1 using {using} notitle")
    return "\n".join(lines) + "\n"


# --- modes ----------------------------------------------------------------------------

def cmd_modes(args):
    config = LabConfig(trap_hz=(2.16e6, 2.07e6, 4.51e6), species="ca40").merged(_load_config(args))
    if args.ions is not None:
        config = dataclasses.replace(config, n_ions=args.ions)
    trap, species, n = config.trap(), config.ion(), config.ions
    spectrum = crystal_modes(n, trap)
    axis = trap.weakest_axis
    ell = length_scale(trap.frequency(axis), species)
    positions = spectrum.equilibrium.u * ell
    rows = []
    print(f"{n} ion(s), crystal axis {axis}")
    print("equilibrium positions (um): " + ", ".join(f"{x * 1e6:.3f}" for x in positions))
    for i, x in enumerate(positions):
        rows.append(("position", f"ion{i + 1}", x, "m"))
    for i, d in enumerate(np.diff(positions)):
        rows.append(("spacing", f"ion{i + 1}-ion{i + 2}", d, "m"))
    if n > 1:
        print("spacings (um): " + ", ".join(f"{d * 1e6:.3f}" for d in np.diff(positions)))
    print(f"{'mode':<16}{'frequency (MHz)':>18}  stable")
    for m in spectrum.modes:
        f = m.frequency / TWO_PI
        print(f"{m.name:<16}{f / 1e6:>18.6f}  {'yes' if m.stable else 'NO'}")
        rows.append(("mode", m.name, f if m.stable else -f, "Hz"))
    if not spectrum.stable:
        names = ", ".join(m.name for m in spectrum.unstable_modes)
        _write_rows(rows, args.out)
        raise SolverError(f"crystal is unstable: imaginary mode(s) {names}")
    print("sideband lines up to second order:")
    for line in identify_sidebands(spectrum, max_order=2):
        f = line.detuning_magnitude / TWO_PI
        print(f"  {f / 1e6:>12.6f} MHz  order {line.order}  {line.label}")
        rows.append(("sideband", line.label, f, "Hz"))
    if args.out:
        _write_rows(rows, args.out)
    return EXIT_OK


def _write_rows(rows, out):
    if not out:
        return
    buf = io.StringIO()
    buf.write("kind,label,value,unit\n")
    for kind, label, value, unit in rows:
        buf.write(f"{kind},{label},{format(float(value), '.17g')},{unit}\n")
    _emit(buf.getvalue(), out)


# --- run / replay --------------------------------------------------------------------

def _run_text(seq_text, config_text, seed, shots, oracle):
    sequence = parse_sequence(seq_text)
    override = parse_config(config_text) if config_text else None
    if oracle:
        shots = 0
    result = scan(sequence, override, shots=shots, seed=seed, workers=workers_from_env())
    buf = io.StringIO()
    result.write_csv(buf)
    return buf.getvalue(), result, sequence.config.merged(override)


def cmd_run(args):
    seq_path = _resolve_input(args.sequence)
    seq_text = _read(seq_path)
    config_path = _resolve_input(args.config) if args.config else None
    config_text = _read(config_path) if config_path else None
    text, result, resolved = _run_text(seq_text, config_text, args.seed, args.shots, args.oracle)
    _emit(text, args.out)
    if result.truncation_warnings:
        print(f"warning: population reached the Fock cutoff at {len(result.truncation_warnings)} "
              "point(s)", file=sys.stderr)
    if args.out:
        manifest = {
            "subcommand": "run",
            "version": __version__,
            "inputs": {"sequence": os.path.abspath(seq_path),
                       "config": os.path.abspath(config_path) if config_path else None},
            "sequence_text": seq_text,
            "config_text": config_text,
            "resolved_config": _config_dict(resolved),
            "seed": args.seed,
            "shots": args.shots,
            "oracle": args.oracle,
            "output": os.path.abspath(args.out),
        }
        with open(args.out + MANIFEST_SUFFIX, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if args.gnuplot_script:
        _emit(_gnuplot(args.out or "run.csv", 2, 4, 5, result.parameter, "P_D"), args.gnuplot_script)
    return EXIT_OK


def cmd_replay(args):
    manifest = json.loads(_read(args.manifest))
    if manifest.get("subcommand") != "run":
        raise UsageError("only run manifests can be replayed")
    text, _, _ = _run_text(manifest["sequence_text"], manifest["config_text"], manifest["seed"],
                           manifest["shots"], manifest["oracle"])
    _emit(text, args.out or manifest["output"])
    return EXIT_OK


# --- fit -----------------------------------------------------------------------------

def _flop_parameters(sequence, config):
    merged = sequence.config.merged(config)
    mode = resolve_mode(simulated_mode(sequence), merged)
    for step in sequence.steps:
        if isinstance(step, PulseStep) and isinstance(step.duration, Scan):
            rabi = DEFAULT_RABI if step.omega is None else TWO_PI * step.omega
            return mode.eta, rabi
    raise UsageError("sequence has no scanned pulse duration")


def _ramsey_parameters(sequence, config):
    merged = sequence.config.merged(config)
    mode = resolve_mode(simulated_mode(sequence), merged)
    pulses = [(i, s) for i, s in enumerate(sequence.steps) if isinstance(s, PulseStep)]
    if len(pulses) != 2:
        raise UsageError("a Ramsey sequence needs exactly two pulses")
    (i0, p0), (i1, _) = pulses
    gap = sum(s.duration for s in sequence.steps[i0 + 1:i1]
              if isinstance(s, Wait) and not isinstance(s.duration, Scan))
    bound = p0 if not isinstance(p0.detune, Scan) else dataclasses.replace(p0, detune=0.0)
    duration = bound.to_pulse().pulse_duration(mode.eta)
    detuning = 0.0 if isinstance(p0.detune, Scan) else TWO_PI * p0.detune
    return duration, gap, detuning


def cmd_fit(args):
    paths = [_resolve_input(p) for p in args.csv]
    scans = [ScanResult.from_csv(p) for p in paths]
    config = _load_config(args)
    sequence = parse_sequence(_read(_resolve_input(args.sequence))) if args.sequence else None
    kind = args.kind
    if kind in ("thermometry", "heating") and len(scans) != 2:
        raise UsageError(f"{kind} needs two CSV files: red then blue")
    if kind in ("flop", "ramsey", "lorentzian") and len(scans) != 1:
        raise UsageError(f"{kind} takes one CSV file")
    if kind == "thermometry":
        result, _, _ = thermometry_from_scans(*scans)
        rows = result.report_rows()
        lo, hi = result.p0_interval
        summary = (f"R={result.ratio:.6g} nbar={result.nbar:.6g} p0={result.p0:.6g} "
                   f"(95% CI {lo:.6g}..{hi:.6g})")
        if not result.thermal_consistent:
            summary += " NOT thermal-consistent (ratio >= 1)"
    elif kind == "lorentzian":
        result = fit_lorentzian_peaks(scans[0], args.peaks)
        rows = result.report_rows()
        summary = "; ".join(f"center={p.center:.6g} height={p.height:.6g} width={p.width:.6g}"
                            for p in result.peaks)
    elif kind == "flop":
        if args.eta is not None and args.rabi_hz is not None:
            eta, rabi = args.eta, TWO_PI * args.rabi_hz
        elif sequence is not None:
            eta, rabi = _flop_parameters(sequence, config)
        else:
            raise UsageError("flop fits need --sequence or both --eta and --rabi-hz")
        result = extract_fock_populations(scans[0], eta, rabi, args.n_cut)
        rows = result.report_rows()
        summary = ("p = " + ", ".join(f"{p:.4f}" for p in result.populations)
                   + f"; dominant n = {result.dominant}")
    elif kind == "ramsey":
        if sequence is None:
            raise UsageError("ramsey fits need --sequence for the pulse timing")
        duration, gap, detuning = _ramsey_parameters(sequence, config)
        result = fit_ramsey(scans[0], duration, gap, detuning)
        rows = result.report_rows(args.convention)
        summary = (f"area error={result.area_error:+.4f} decay constant="
                   f"{result.decay_constant(args.convention):.6g} Hz ({args.convention}) "
                   f"contrast={result.contrast:.4f}")
    else:
        result, _ = heating_from_scans(*scans)
        rows = result.report_rows()
        summary = f"heating rate={result.rate:.6g} +/- {result.rate_stderr:.2g} quanta/s"
        if result.negative_flag:
            summary += " (negative slope flagged)"
    buf = io.StringIO()
    write_report(rows, buf)
    if args.out:
        _emit(buf.getvalue(), args.out)
        print(summary)
    else:
        sys.stdout.write(buf.getvalue())
        print(summary, file=sys.stderr)
    return EXIT_OK


# --- gate speed ----------------------------------------------------------------------

def _parse_grid(text):
    try:
        start, stop, points = text.split(",")
        return np.geomspace(float(start) * 1e-6, float(stop) * 1e-6, int(points))
    except ValueError:
        raise UsageError("--grid expects START_US,STOP_US,POINTS") from None


def cmd_gatespeed(args):
    config = LabConfig(trap_hz=(2.16e6, 2.07e6, 4.51e6), species="ca40").merged(_load_config(args))
    mode = resolve_mode(args.mode, config)
    eta = mode.eta * args.eta_scale
    grid = _parse_grid(args.grid)
    result = gate_speed_scan(eta, mode.frequency, args.fidelity, grid)
    buf = io.StringIO()
    buf.write("t_s,infidelity,envelope,detuning_hz\n")
    for t, inf, env, det in zip(result.times, result.infidelity, result.envelope, result.detunings):
        buf.write(",".join(format(float(v), ".17g") for v in (t, inf, env, det / TWO_PI)) + "\n")
    _emit(buf.getvalue(), args.out)
    if args.gnuplot_script:
        _emit(_gnuplot(args.out or "gatespeed.csv", 1, 2, None, "t (s)", "infidelity", logy=True),
              args.gnuplot_script)
    t_coh = _coherence_time(args, config.noise_model)
    if not math.isfinite(result.t_min):
        print(f"t_min=inf, ops_within_coherence=0 (fidelity {args.fidelity} not reached on grid)")
        return EXIT_PHYSICS
    ops = math.floor(t_coh / result.t_min)
    print(f"t_min={result.t_min:.6g}, ops_within_coherence={ops}")
    return EXIT_OK


def _coherence_time(args, noise):
    if args.coherence_time is not None:
        return args.coherence_time
    if noise.dephasing_rate > 0:
        return 1.0 / noise.dephasing_rate
    return 1e-3


def _time_arg(text):
    try:
        return parse_time(text)
    except ParseError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


# --- entry point -----------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="ionlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ionlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=False):
        p.add_argument("--config", help="config file with trap/ion/noise header lines")
        p.add_argument("--out", help="output path (default: stdout)")
        if seed:
            p.add_argument("--seed", type=int, default=0, help="master seed (U64)")
            p.add_argument("--shots", type=int, default=None, help="override shots per point")
            p.add_argument("--oracle", action="store_true", help="no shot noise (shots = 0)")

    p = sub.add_parser("modes", help="equilibrium positions, normal modes and sideband lines")
    common(p)
    p.add_argument("--ions", type=int, default=None)
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("run", help="execute a sequence file and write a scan CSV")
    p.add_argument("sequence")
    common(p, seed=True)
    p.add_argument("--gnuplot-script", help="also write a gnuplot script for the CSV")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replay", help="re-run a scan from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("fit", help="analyse scan CSVs")
    p.add_argument("kind", choices=("thermometry", "flop", "ramsey", "lorentzian", "heating"))
    p.add_argument("csv", nargs="+")
    common(p)
    p.add_argument("--sequence", help="sequence that produced the data (timings, eta, Rabi)")
    p.add_argument("--eta", type=float)
    p.add_argument("--rabi-hz", type=float, help="carrier Rabi frequency (cycle Hz)")
    p.add_argument("--n-cut", type=int, default=5)
    p.add_argument("--peaks", type=int, default=1)
    p.add_argument("--convention", choices=("rate", "angular"), default="rate")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("gatespeed", help="blue-sideband pi-pulse infidelity versus pulse time")
    common(p)
    p.add_argument("--mode", default="z")
    p.add_argument("--fidelity", type=float, default=0.99)
    p.add_argument("--grid", default="2,100,40", help="START_US,STOP_US,POINTS (log spaced)")
    p.add_argument("--eta-scale", type=float, default=1.0, help="multiply the mode's eta")
    p.add_argument("--coherence-time", type=_time_arg, default=None,
                   help="coherence time (e.g. 1ms); default 1/dephasing rate or 1 ms")
    p.add_argument("--gnuplot-script")
    p.set_defaults(func=cmd_gatespeed)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (ParseError, SchemaError, UsageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FitError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (SolverError, IntegratorError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
