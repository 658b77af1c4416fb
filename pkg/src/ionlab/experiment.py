"""Execute pulse sequences: the prepare / manipulate / detect cycle with shot sampling."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .constants import TWO_PI
from .core import (AXES, PhononDistribution, QuantumState, default_n_max, doppler_limit_nbar,
                   lamb_dicke, thermal_distribution)
from .crystal import crystal_modes
from .dsl import (Cool, InitGround, InitThermal, Measure, OpticalPump, PulseStep, Repump,
                  Sequence, Wait)
from .dynamics import (DEFAULT_RABI, DEFAULT_SIDEBAND_ORDER, Pulse, apply_dissipation, build_drive,
                       evolve_lindblad, evolve_unitary, light_shifted_resonance,
                       sideband_cool)
from .errors import DomainError, SchemaError

CSV_COLUMNS = ("param", "value", "p_true", "p_est", "stderr", "shots", "seed")
TRUNCATION_THRESHOLD = 1e-4


@dataclass(frozen=True)
class ModeInfo:
    name: str
    frequency: float  # rad/s
    eta: float


def resolve_mode(spec, config):
    """Map a DSL mode (``z`` or ``z:rocking``) to its frequency and the addressed ion's eta.

    A bare axis means that axis' centre-of-mass mode.  For strings the
    addressed ion is the first one.
    """
    trap = config.trap()
    species = config.ion()
    axis, _, label = spec.partition(":")
    if axis not in AXES:
        raise DomainError(f"unknown axis {axis!r}")
    if config.ions == 1:
        if label and label not in ("com", "radial-com"):
            raise DomainError(f"a single ion has no {label!r} mode")
        omega = trap.frequency(axis)
        return ModeInfo(axis, omega, lamb_dicke(species, omega, trap.projection(axis)))
    spectrum = crystal_modes(config.ions, trap)
    if not spectrum.stable:
        names = ", ".join(m.name for m in spectrum.unstable_modes)
        raise DomainError(f"crystal is unstable (imaginary modes: {names})")
    wanted = label or "com"
    candidates = [m for m in spectrum.by_axis(axis)
                  if m.label == wanted or (wanted == "com" and m.label == "radial-com")]
    if not candidates:
        raise DomainError(f"no mode {wanted!r} along {axis}")
    mode = candidates[0]
    etas = spectrum.lamb_dicke_factors(species, trap.laser_direction_cosines)
    row = next(i for i, m in enumerate(spectrum.modes) if m is mode)
    return ModeInfo(mode.name, mode.frequency, float(etas[row, 0]))


def simulated_mode(sequence):
    """The single motional mode a sequence addresses (``z`` if it names none)."""
    modes = set()
    for step in sequence.steps:
        if isinstance(step, PulseStep) and step.mode is not None:
            modes.add(_canonical(step.mode))
        elif isinstance(step, Cool):
            modes.add(_canonical(step.mode))
    if len(modes) > 1:
        raise DomainError("a sequence may address only one motional mode, got "
                          + ", ".join(sorted(modes)))
    return modes.pop() if modes else "z"


def _canonical(mode):
    axis, _, label = mode.partition(":")
    return axis if label in ("", "com") else mode


def _initial_nbar(sequence, species, mode):
    init = sequence.steps[0]
    if isinstance(init, InitGround):
        return 0.0
    if init.nbar is None:
        return doppler_limit_nbar(species, mode.frequency)
    return init.nbar


def choose_n_max(sequence, config, mode, scan_values=()):
    """Fock truncation covering the initial occupation, heating during waits and sideband pulses."""
    nbar = _initial_nbar(sequence, config.ion(), mode)
    waits = 0.0
    for step in sequence.steps:
        if isinstance(step, Wait):
            d = step.duration
            waits += max(scan_values) if not isinstance(d, float) else d
    kicks = sum(1 for s in sequence.steps if isinstance(s, PulseStep) and s.target != "carrier")
    heating = config.noise_model.heating_rate * waits
    return default_n_max(nbar + heating + kicks)


@dataclass(frozen=True)
class PointResult:
    p_true: float
    shots: int
    counts: int
    seed: int
    truncation_warning: bool = False

    @property
    def p_est(self):
        return self.p_true if self.shots == 0 else self.counts / self.shots

    @property
    def stderr(self):
        if self.shots == 0:
            return 0.0
        p = self.p_est
        return math.sqrt(p * (1.0 - p) / self.shots)


def point_seed(master_seed, index):
    """Order-independent per-point seed derived from (master seed, point index)."""
    ss = np.random.SeedSequence([int(master_seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def run_point(sequence, config=None, seed=0, shots=None, n_max=None, s_max=DEFAULT_SIDEBAND_ORDER,
              detection_efficiency=1.0):
    """Run a fully bound sequence once and sample ``shots`` projective measurements.

    Returns the exact D-state population at measure time together with a
    Bernoulli shot record drawn from ``numpy.random.default_rng(seed)``.
    """
    if sequence.scan_placeholder() is not None:
        raise DomainError("sequence still contains a scan placeholder; bind it first")
    state = final_state(sequence, config, n_max, s_max)
    measure = sequence.steps[-1]
    shots = measure.shots if shots is None else shots
    p_true = min(1.0, max(0.0, state.p_d))
    p_obs = detection_efficiency * p_true
    counts = 0
    if shots > 0:
        counts = int(np.random.default_rng(seed).binomial(shots, p_obs))
    warn = state.top_level_population() > TRUNCATION_THRESHOLD
    return PointResult(p_true, shots, counts, seed, warn)


def final_state(sequence, config=None, n_max=None, s_max=DEFAULT_SIDEBAND_ORDER):
    """The state just before the measure step (for inspection and tests)."""
    config = sequence.config.merged(config)
    mode = resolve_mode(simulated_mode(sequence), config)
    if n_max is None:
        n_max = choose_n_max(sequence, config, mode)
    state = _prepare(sequence.steps[0], config.ion(), mode, n_max)
    clock = 0.0
    for step in sequence.steps[1:-1]:
        state, clock = _apply(step, state, clock, mode, config.noise_model, n_max, s_max)
    return state


def _prepare(init, species, mode, n_max):
    if isinstance(init, InitGround):
        return QuantumState.ground(n_max)
    nbar = doppler_limit_nbar(species, mode.frequency) if init.nbar is None else init.nbar
    return QuantumState.from_distribution(thermal_distribution(nbar, n_max))


def _apply(step, state, clock, mode, noise, n_max, s_max):
    if isinstance(step, OpticalPump):
        return QuantumState.product(np.diag([1.0, 0.0]), state.motional_rho()), clock
    if isinstance(step, Cool):
        dist = sideband_cool(state.phonon_distribution(), step.params())
        return QuantumState.from_distribution(dist), clock + step.duration
    if isinstance(step, Repump):
        return _repump(state, step.fidelity), clock
    if isinstance(step, Wait):
        if noise.is_zero or step.duration == 0:
            return state, clock + step.duration
        rho = apply_dissipation(state.rho, noise, n_max, step.duration)
        return QuantumState(rho, n_max, validate=False), clock + step.duration
    if isinstance(step, PulseStep):
        pulse = step.to_pulse()
        terms = build_drive(pulse, mode.eta, mode.frequency, s_max, n_max)
        duration = pulse.pulse_duration(mode.eta)
        if noise.is_zero:
            state = evolve_unitary(state, terms, duration, t0=clock)
        else:
            state = evolve_lindblad(state, terms, noise, duration, t0=clock)
        return state, clock + duration
    raise DomainError(f"step {step!r} cannot appear inside a sequence")


def _repump(state, fidelity):
    """|D,n> -> |S,n> with probability ``fidelity``; phonon number is conserved."""
    f = state.fock_dim
    eye = np.eye(f)
    k1 = math.sqrt(fidelity) * np.kron(np.array([[0.0, 1.0], [0.0, 0.0]]), eye)
    k0 = np.kron(np.diag([1.0, math.sqrt(1.0 - fidelity)]), eye)
    rho = k1 @ state.rho @ k1.T + k0 @ state.rho @ k0.T
    return QuantumState(rho, state.n_max, validate=False)


@dataclass
class ScanResult:
    """Sampled excitation probabilities over one swept parameter.

    ``values`` are in seconds for time parameters and Hz (cycle) for
    frequency parameters; a bound (scan-free) run has parameter ``"none"``.
    """

    parameter: str
    values: np.ndarray
    p_true: np.ndarray
    p_est: np.ndarray
    stderr: np.ndarray
    shots: np.ndarray
    seeds: np.ndarray
    master_seed: int = 0
    truncation_warnings: list = field(default_factory=list)

    def __len__(self):
        return len(self.values)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            self.write_csv(fh)

    def write_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for i in range(len(self.values)):
            w.writerow([self.parameter, _g17(self.values[i]), _g17(self.p_true[i]),
                        _g17(self.p_est[i]), _g17(self.stderr[i]), int(self.shots[i]),
                        int(self.seeds[i])])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = [c for c in CSV_COLUMNS if c not in (reader.fieldnames or [])]
            if missing:
                raise SchemaError(f"{os.fspath(path)}: missing column(s) {', '.join(missing)}")
            rows = list(reader)
        if not rows:
            raise SchemaError(f"{os.fspath(path)}: no data rows")
        arr = lambda key, typ=float: np.array([typ(r[key]) for r in rows])
        return cls(rows[0]["param"], arr("value"), arr("p_true"), arr("p_est"), arr("stderr"),
                   arr("shots", int), arr("seed", int))


def _g17(x):
    return format(float(x), ".17g")


def workers_from_env(default=1):
    value = os.environ.get("IONLAB_THREADS")
    if not value:
        return default
    try:
        return max(1, int(value))
    except ValueError:
        return default


def scan(sequence, config=None, shots=None, seed=0, workers=None, grid=None, **run_kwargs):
    """Run one point per scan value; per-point seeds make the result order independent."""
    placeholder = sequence.scan_placeholder()
    if placeholder is None:
        name, values = "none", [math.nan]
    else:
        name, spec = placeholder
        values = spec.values() if grid is None else list(grid)
    if len(values) == 0:
        raise DomainError("scan grid is empty")
    merged = sequence.config.merged(config)
    if "n_max" not in run_kwargs:
        mode = resolve_mode(simulated_mode(sequence), merged)
        scan_times = values if placeholder is not None and placeholder[1].kind == "time" else (0.0,)
        run_kwargs["n_max"] = choose_n_max(sequence, merged, mode, scan_times)

    def job(i):
        bound = sequence if placeholder is None else sequence.bind(values[i])
        return run_point(bound, config, point_seed(seed, i), shots, **run_kwargs)

    workers = workers or workers_from_env()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(len(values))))
    else:
        results = [job(i) for i in range(len(values))]
    return ScanResult(
        name, np.array(values, dtype=float),
        np.array([r.p_true for r in results]), np.array([r.p_est for r in results]),
        np.array([r.stderr for r in results]), np.array([r.shots for r in results]),
        np.array([r.seed for r in results], dtype=np.int64), seed,
        [i for i, r in enumerate(results) if r.truncation_warning])


def flop_scan(populations, eta, omega_trap, times, rabi_frequency=DEFAULT_RABI, shots=100, seed=0,
              noise=None, s_max=DEFAULT_SIDEBAND_ORDER, extra_levels=8, recenter=True):
    """Blue-sideband flop from |S> x sum_n p_n |n><n|, sampled like a duration scan.

    Every point evolves the full multi-sideband drive from t = 0; ``noise``
    (a NoiseModel) adds decoherence during the pulse.  With ``recenter`` the
    laser sits on the light-shifted |S,0> <-> |D,1> resonance rather than
    the bare sideband.
    """
    p = np.asarray(populations, float)
    n_max = len(p) - 1 + extra_levels
    start = QuantumState.from_distribution(PhononDistribution(np.concatenate([p, np.zeros(extra_levels)])))
    def terms_at(delta):
        pulse = Pulse("bsb", duration=0.0, rabi_frequency=rabi_frequency,
                      extra_detuning=delta - omega_trap)
        return build_drive(pulse, eta, omega_trap, s_max, n_max)

    delta = light_shifted_resonance(terms_at, omega_trap, n_max) if recenter else omega_trap
    terms = terms_at(delta)
    times = np.asarray(times, float)
    p_true = np.empty(len(times))
    for i, t in enumerate(times):
        if noise is None or noise.is_zero:
            p_true[i] = evolve_unitary(start, terms, t).p_d
        else:
            p_true[i] = evolve_lindblad(start, terms, noise, t).p_d
    p_true = np.clip(p_true, 0.0, 1.0)
    seeds = np.array([point_seed(seed, i) for i in range(len(times))], dtype=np.int64)
    if shots > 0:
        counts = np.array([np.random.default_rng(int(s)).binomial(shots, p)
                           for s, p in zip(seeds, p_true)])
        p_est = counts / shots
        stderr = np.sqrt(p_est * (1.0 - p_est) / shots)
    else:
        p_est, stderr = p_true.copy(), np.zeros(len(times))
    return ScanResult("duration", times, p_true, p_est, stderr, np.full(len(times), shots),
                      seeds, seed)
