"""Line-oriented pulse-sequence language.

A program is an optional configuration header followed by steps::

    trap x=2.16MHz, y=2.07MHz, z=4.51MHz
    ion ca40
    init ground
    pulse bsb(z) pi
    repump854
    pulse bsb(z) t=scan(0us, 400us, 81)
    measure shots=100

Values keep the units they are written in after conversion to the base
unit of their kind (s, Hz, 1/s, rad); cycle frequencies become angular only
when a sequence is executed.  That keeps parse -> format -> parse exact.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace

from .core import AXES, TrapConfig, species_by_name
from .constants import TWO_PI
from .dynamics import CoolingParams, NoiseModel, Pulse, RAMSEY_DECAY_CONVENTIONS
from .errors import DomainError, ParseError

TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9}
FREQ_UNITS = {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6}
RATE_UNITS = {"/s": 1.0, "s^-1": 1.0, "/ms": 1e3, "/us": 1e6, "Hz": 1.0, "kHz": 1e3}

_NUMBER = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_QUANTITY = re.compile(rf"^({_NUMBER})\s*(.*)$")
_TOKEN = re.compile(
    r"\s*(?:(?P<kv>(?P<key>[A-Za-z_][\w+\-]*)\s*=\s*(?P<val>scan\([^)]*\)|[^\s,=]+))"
    r"|(?P<word>scan\([^)]*\)|[^\s,=]+)|(?P<comma>,))")


# --- values ---------------------------------------------------------------------

@dataclass(frozen=True)
class Scan:
    """Placeholder swept by a scan: ``points`` values from ``start`` to ``stop``."""

    start: float
    stop: float
    points: int
    kind: str  # "time" or "freq"

    def values(self):
        if self.points == 1:
            return [self.start]
        step = (self.stop - self.start) / (self.points - 1)
        return [self.start + i * step for i in range(self.points)]


def _split_quantity(text):
    m = _QUANTITY.match(text.strip())
    if not m:
        raise ValueError(f"expected a number with unit, got {text!r}")
    return float(m.group(1)), m.group(2).strip()


def parse_time(text):
    value, unit = _split_quantity(text)
    if unit not in TIME_UNITS:
        raise ValueError(f"unknown time unit {unit!r} (use s, ms, us, ns)")
    return value * TIME_UNITS[unit]


def parse_freq(text):
    value, unit = _split_quantity(text)
    if unit not in FREQ_UNITS:
        raise ValueError(f"unknown frequency unit {unit!r} (use Hz, kHz, MHz)")
    return value * FREQ_UNITS[unit]


def parse_rate(text):
    value, unit = _split_quantity(text)
    if unit not in RATE_UNITS:
        raise ValueError(f"unknown rate unit {unit!r} (use /s, /ms, /us, Hz, kHz)")
    return value * RATE_UNITS[unit]


def parse_angle(text):
    """``pi``, ``pi/2``, ``1.1*pi/2``, ``0.3rad``, ``90deg`` or a bare number of radians."""
    t = text.strip()
    m = re.fullmatch(rf"(?:({_NUMBER})\*)?pi(?:/({_NUMBER}))?", t)
    if m:
        value = math.pi
        if m.group(1):
            value *= float(m.group(1))
        if m.group(2):
            value /= float(m.group(2))
        return value
    value, unit = _split_quantity(t)
    if unit in ("", "rad"):
        return value
    if unit == "deg":
        return math.radians(value)
    raise ValueError(f"unknown angle unit {unit!r}")


def parse_scan(text, kind):
    m = re.fullmatch(r"scan\(([^,]*),([^,]*),([^,)]*)\)", text.strip())
    if not m:
        raise ValueError("scan needs the form scan(start, stop, points)")
    conv = parse_time if kind == "time" else parse_freq
    start, stop = conv(m.group(1)), conv(m.group(2))
    try:
        points = int(m.group(3).strip())
    except ValueError:
        raise ValueError("scan point count must be an integer") from None
    if points < 1:
        raise ValueError("scan needs at least one point")
    return Scan(start, stop, points, kind)


def _time_or_scan(text):
    if text.startswith("scan("):
        return parse_scan(text, "time")
    return parse_time(text)


def _freq_or_scan(text):
    if text.startswith("scan("):
        return parse_scan(text, "freq")
    return parse_freq(text)


def _fmt(x):
    return repr(float(x))


def format_time(x):
    return f"scan({_fmt(x.start)}s, {_fmt(x.stop)}s, {x.points})" if isinstance(x, Scan) else f"{_fmt(x)}s"


def format_freq(x):
    return f"scan({_fmt(x.start)}Hz, {_fmt(x.stop)}Hz, {x.points})" if isinstance(x, Scan) else f"{_fmt(x)}Hz"


# --- configuration ----------------------------------------------------------------

@dataclass(frozen=True)
class LabConfig:
    """Trap, species, noise and crystal size.  ``None`` fields are unset (for merging)."""

    trap_hz: tuple | None = None  # secular frequencies as cycle frequencies
    laser_direction: tuple | None = None
    species: str | None = None
    n_ions: int | None = None
    noise: NoiseModel | None = None

    def merged(self, override):
        """Fields set in ``override`` win."""
        if override is None:
            return self
        kw = {f.name: getattr(override, f.name) if getattr(override, f.name) is not None
              else getattr(self, f.name) for f in fields(self)}
        return LabConfig(**kw)

    def trap(self):
        if self.trap_hz is None:
            raise DomainError("no trap frequencies configured")
        freqs = tuple(TWO_PI * f for f in self.trap_hz)
        if self.laser_direction is None:
            return TrapConfig(freqs)
        return TrapConfig(freqs, self.laser_direction)

    def ion(self):
        return species_by_name(self.species or "ca40")

    @property
    def ions(self):
        return self.n_ions or 1

    @property
    def noise_model(self):
        return self.noise or NoiseModel()

    def header_lines(self):
        lines = []
        if self.trap_hz is not None:
            lines.append("trap " + ", ".join(f"{a}={_fmt(f)}Hz" for a, f in zip(AXES, self.trap_hz)))
        if self.laser_direction is not None:
            lines.append("laser " + " ".join(f"{a}={_fmt(c)}" for a, c in zip(AXES, self.laser_direction)))
        if self.species is not None:
            lines.append(f"ion {self.species}")
        if self.n_ions is not None:
            lines.append(f"ions {self.n_ions}")
        if self.noise is not None:
            n = self.noise
            lines.append(f"noise dephasing={_fmt(n.dephasing_rate)}/s decay={_fmt(n.d_decay_rate)}/s "
                         f"heating={_fmt(n.heating_rate)}/s")
        return lines


# --- steps ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InitGround:
    def format(self):
        return "init ground"


@dataclass(frozen=True)
class InitThermal:
    nbar: float | None = None  # None means the Doppler limit of the simulated mode

    def format(self):
        return "init thermal doppler" if self.nbar is None else f"init thermal nbar={_fmt(self.nbar)}"


@dataclass(frozen=True)
class OpticalPump:
    def format(self):
        return "pump"


@dataclass(frozen=True)
class Cool:
    mode: str
    A_minus: float
    A_plus: float
    duration: float

    def params(self):
        return CoolingParams(self.A_minus, self.A_plus, self.duration)

    def format(self):
        return (f"cool mode={self.mode} A-={_fmt(self.A_minus)}/s A+={_fmt(self.A_plus)}/s "
                f"t={format_time(self.duration)}")


@dataclass(frozen=True)
class PulseStep:
    """A pulse whose numeric fields may hold a :class:`Scan` placeholder.

    ``area`` is in rad, ``duration`` in s, ``omega`` and ``detune`` are cycle
    frequencies in Hz (``omega=None`` selects the default Rabi frequency).
    """

    target: str
    mode: str | None = None
    area: float | None = None
    duration: float | Scan | None = None
    phase: float = 0.0
    omega: float | Scan | None = None
    detune: float | Scan = 0.0

    def to_pulse(self):
        kw = {}
        if self.omega is not None:
            kw["rabi_frequency"] = TWO_PI * self.omega
        return Pulse(self.target, area=self.area, duration=self.duration, phase=self.phase,
                     extra_detuning=TWO_PI * self.detune, mode=self.mode, **kw)

    def format(self):
        tgt = self.target if self.mode is None else f"{self.target}({self.mode})"
        parts = ["pulse", tgt]
        parts.append(f"t={format_time(self.duration)}" if self.area is None else _fmt(self.area))
        if self.phase != 0.0:
            parts.append(f"phase={_fmt(self.phase)}")
        if self.omega is not None:
            parts.append(f"omega={format_freq(self.omega)}")
        if isinstance(self.detune, Scan) or self.detune != 0.0:
            parts.append(f"detune={format_freq(self.detune)}")
        return " ".join(parts)


@dataclass(frozen=True)
class Repump:
    fidelity: float = 1.0

    def format(self):
        return "repump854" if self.fidelity == 1.0 else f"repump854 fidelity={_fmt(self.fidelity)}"


@dataclass(frozen=True)
class Wait:
    duration: float | Scan

    def format(self):
        return f"wait {format_time(self.duration)}"


@dataclass(frozen=True)
class Measure:
    shots: int

    def format(self):
        return f"measure shots={self.shots}"


SCANNABLE = {Wait: ("duration",), PulseStep: ("duration", "omega", "detune")}
PARAMETER_NAMES = {(Wait, "duration"): "wait", (PulseStep, "duration"): "duration",
                   (PulseStep, "omega"): "rabi_frequency", (PulseStep, "detune"): "detuning"}


@dataclass(frozen=True)
class Sequence:
    steps: tuple
    config: LabConfig = field(default_factory=LabConfig)

    @property
    def measure(self):
        return self.steps[-1]

    def scan_placeholder(self):
        """(parameter name, Scan) or None.  Identical placeholders count as one parameter."""
        found = None
        for step in self.steps:
            for attr in SCANNABLE.get(type(step), ()):
                value = getattr(step, attr)
                if isinstance(value, Scan):
                    name = PARAMETER_NAMES[(type(step), attr)]
                    if found is not None and found != (name, value):
                        raise DomainError("a program may contain only one scan parameter")
                    found = (name, value)
        return found

    def bind(self, value):
        """Copy with every scan placeholder replaced by ``value`` (s or Hz)."""
        steps = []
        for step in self.steps:
            changes = {attr: value for attr in SCANNABLE.get(type(step), ())
                       if isinstance(getattr(step, attr), Scan)}
            steps.append(replace(step, **changes) if changes else step)
        return Sequence(tuple(steps), self.config)

    def with_shots(self, shots):
        return Sequence(self.steps[:-1] + (Measure(shots),), self.config)


def format_sequence(seq):
    lines = seq.config.header_lines()
    lines.extend(step.format() for step in seq.steps)
    return "\n".join(lines) + "\n"


# --- parser ----------------------------------------------------------------------------

@dataclass
class _Tok:
    text: str
    col: int
    key: str | None = None
    value: str | None = None
    value_col: int = 0


def _tokenize(line, lineno):
    toks = []
    pos = 0
    while pos < len(line):
        if line[pos:].strip() == "":
            break
        m = _TOKEN.match(line, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {line[pos]!r}", lineno, pos + 1)
        if m.group("kv"):
            start = m.start("kv")
            toks.append(_Tok(m.group("kv"), start + 1, m.group("key"), m.group("val"),
                             m.start("val") + 1))
        elif m.group("word"):
            toks.append(_Tok(m.group("word"), m.start("word") + 1))
        pos = m.end()
    return toks


class _LineParser:
    def __init__(self, toks, lineno):
        self.toks = toks
        self.lineno = lineno
        self.i = 1

    def error(self, message, tok=None):
        col = tok.col if tok is not None else None
        return ParseError(message, self.lineno, col)

    def convert(self, tok, func, text=None, col=None):
        try:
            return func(tok.value if text is None else text)
        except (ValueError, DomainError) as exc:
            raise ParseError(str(exc), self.lineno, col or tok.value_col or tok.col) from None

    def word(self, what):
        if self.i >= len(self.toks) or self.toks[self.i].key is not None:
            tok = self.toks[self.i] if self.i < len(self.toks) else None
            raise self.error(f"expected {what}", tok)
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def options(self, allowed, required=()):
        out = {}
        for tok in self.toks[self.i:]:
            if tok.key is None:
                raise self.error(f"unexpected {tok.text!r}", tok)
            if tok.key not in allowed:
                raise self.error(f"unknown option {tok.key!r}", tok)
            if tok.key in out:
                raise self.error(f"option {tok.key!r} given twice", tok)
            out[tok.key] = tok
        for key in required:
            if key not in out:
                raise self.error(f"missing option {key}=")
        self.i = len(self.toks)
        return out


_TARGET = re.compile(r"^(carrier|rsb|bsb)(?:\(([^)]*)\))?$")
_MODE = re.compile(r"^[xyz](?::[\w-]+)?$")


def _parse_mode(text, p, tok):
    if not _MODE.match(text):
        raise p.error(f"bad mode {text!r}; use an axis x|y|z optionally followed by :label", tok)
    return text


def _header(keyword, p, config):
    if keyword == "trap":
        opts = p.options(AXES, AXES)
        freqs = tuple(p.convert(opts[a], parse_freq) for a in AXES)
        if any(f <= 0 for f in freqs):
            raise p.error("trap frequencies must be positive")
        return replace(config, trap_hz=freqs)
    if keyword == "ion":
        tok = p.word("species name")
        p.options(())
        try:
            species_by_name(tok.text)
        except DomainError as exc:
            raise p.error(str(exc), tok) from None
        return replace(config, species=tok.text.lower())
    if keyword == "ions":
        tok = p.word("ion count")
        p.options(())
        try:
            n = int(tok.text)
        except ValueError:
            raise p.error("ion count must be an integer", tok) from None
        if n < 1:
            raise p.error("ion count must be positive", tok)
        return replace(config, n_ions=n)
    if keyword == "laser":
        opts = p.options(AXES, AXES)
        c = [p.convert(opts[a], float) for a in AXES]
        norm = math.sqrt(sum(x * x for x in c))
        if norm == 0:
            raise p.error("laser direction must be non-zero")
        return replace(config, laser_direction=tuple(x / norm for x in c))
    if keyword == "noise":
        opts = p.options(("dephasing", "decay", "heating", "convention"))
        conv = opts["convention"].value if "convention" in opts else "rate"
        if conv not in RAMSEY_DECAY_CONVENTIONS:
            raise p.error(f"unknown convention {conv!r}", opts["convention"])
        rates = {k: p.convert(opts[k], parse_rate) if k in opts else 0.0
                 for k in ("dephasing", "decay", "heating")}
        noise = NoiseModel(RAMSEY_DECAY_CONVENTIONS[conv] * rates["dephasing"], rates["decay"],
                           rates["heating"])
        return replace(config, noise=noise)
    raise AssertionError(keyword)


HEADER_KEYWORDS = ("trap", "ion", "ions", "laser", "noise")


def _step(keyword, p, first_tok):
    if keyword == "init":
        kind = p.word("'ground' or 'thermal'")
        if kind.text == "ground":
            p.options(())
            return InitGround()
        if kind.text == "thermal":
            if p.i < len(p.toks) and p.toks[p.i].key is None and p.toks[p.i].text == "doppler":
                p.i += 1
                p.options(())
                return InitThermal(None)
            opts = p.options(("nbar",), ("nbar",))
            nbar = p.convert(opts["nbar"], float)
            if nbar < 0:
                raise p.error("nbar must be non-negative", opts["nbar"])
            return InitThermal(nbar)
        raise p.error(f"unknown init kind {kind.text!r}", kind)
    if keyword in ("pump", "optical_pump"):
        p.options(())
        return OpticalPump()
    if keyword == "cool":
        opts = p.options(("mode", "A-", "A+", "t"), ("mode", "A-", "A+", "t"))
        mode = _parse_mode(opts["mode"].value, p, opts["mode"])
        a_minus = p.convert(opts["A-"], parse_rate)
        a_plus = p.convert(opts["A+"], parse_rate)
        dur = p.convert(opts["t"], parse_time)
        try:
            CoolingParams(a_minus, a_plus, dur)
        except DomainError as exc:
            raise p.error(str(exc), opts["A-"]) from None
        return Cool(mode, a_minus, a_plus, dur)
    if keyword == "pulse":
        tok = p.word("pulse target")
        m = _TARGET.match(tok.text)
        if not m:
            raise p.error(f"unknown pulse target {tok.text!r}", tok)
        target, mode = m.group(1), m.group(2)
        if target != "carrier" and not mode:
            raise p.error(f"{target} needs a mode, e.g. {target}(z)", tok)
        if mode:
            mode = _parse_mode(mode, p, tok)
        area = duration = None
        if p.i < len(p.toks) and p.toks[p.i].key is None:
            atok = p.word("pulse area")
            area = p.convert(atok, parse_angle, atok.text, atok.col)
            if area < 0:
                raise p.error("pulse area must be non-negative", atok)
        opts = p.options(("t", "phase", "omega", "detune"))
        if "t" in opts:
            if area is not None:
                raise p.error("give either a pulse area or t=, not both", opts["t"])
            duration = p.convert(opts["t"], _time_or_scan)
        elif area is None:
            raise p.error("pulse needs an area (pi, pi/2, ...) or t=")
        phase = p.convert(opts["phase"], parse_angle) if "phase" in opts else 0.0
        omega = p.convert(opts["omega"], _freq_or_scan) if "omega" in opts else None
        if isinstance(omega, float) and omega <= 0:
            raise p.error("omega must be positive", opts["omega"])
        detune = p.convert(opts["detune"], _freq_or_scan) if "detune" in opts else 0.0
        return PulseStep(target, mode, area, duration, phase, omega, detune)
    if keyword in ("repump854", "repump"):
        opts = p.options(("fidelity",))
        fid = p.convert(opts["fidelity"], float) if "fidelity" in opts else 1.0
        if not 0.0 <= fid <= 1.0:
            raise p.error("repump fidelity must lie in [0, 1]", opts["fidelity"])
        return Repump(fid)
    if keyword == "wait":
        tok = p.word("wait time")
        p.options(())
        value = p.convert(tok, _time_or_scan, tok.text, tok.col)
        if not isinstance(value, Scan) and value < 0:
            raise p.error("wait time must be non-negative", tok)
        return Wait(value)
    if keyword == "measure":
        opts = p.options(("shots",), ("shots",))
        try:
            shots = int(opts["shots"].value)
        except ValueError:
            raise p.error("shots must be an integer", opts["shots"]) from None
        if shots < 0:
            raise p.error("shots must be non-negative", opts["shots"])
        return Measure(shots)
    raise p.error(f"unknown keyword {keyword!r}", first_tok)


def parse_config(text):
    """Parse header-only text (a config file)."""
    config = LabConfig()
    for lineno, toks in _lines(text):
        keyword = toks[0].text
        if toks[0].key is not None or keyword not in HEADER_KEYWORDS:
            raise ParseError(f"unknown config keyword {toks[0].text!r}", lineno, toks[0].col)
        config = _header(keyword, _LineParser(toks, lineno), config)
    return config


def _lines(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        yield lineno, _tokenize(line, lineno)


def parse_sequence(text):
    """Parse a program into a :class:`Sequence`; raises :class:`ParseError` with positions."""
    config = LabConfig()
    steps, step_lines = [], []
    for lineno, toks in _lines(text):
        first = toks[0]
        if first.key is not None:
            raise ParseError(f"expected a keyword, got {first.text!r}", lineno, first.col)
        p = _LineParser(toks, lineno)
        if first.text in HEADER_KEYWORDS:
            if steps:
                raise ParseError(f"'{first.text}' must appear before the first step", lineno, first.col)
            config = _header(first.text, p, config)
            continue
        step = _step(first.text, p, first)
        if isinstance(step, (InitGround, InitThermal)) and any(
                isinstance(s, (InitGround, InitThermal)) for s in steps):
            raise ParseError("duplicate init step", lineno, first.col)
        if steps and isinstance(steps[-1], Measure):
            raise ParseError("measure must be the last step", step_lines[-1], 1)
        steps.append(step)
        step_lines.append(lineno)

    has_init = steps and isinstance(steps[0], (InitGround, InitThermal))
    has_measure = steps and isinstance(steps[-1], Measure)
    if not has_init and not has_measure:
        raise ParseError("missing init/measure")
    if not has_init:
        if any(isinstance(s, (InitGround, InitThermal)) for s in steps):
            idx = next(i for i, s in enumerate(steps) if isinstance(s, (InitGround, InitThermal)))
            raise ParseError("init must be the first step", step_lines[idx], 1)
        raise ParseError("missing init step")
    if not has_measure:
        raise ParseError("missing measure step")
    seq = Sequence(tuple(steps), config)
    try:
        seq.scan_placeholder()
    except DomainError as exc:
        raise ParseError(str(exc)) from None
    return seq
