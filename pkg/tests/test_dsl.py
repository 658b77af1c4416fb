import math

import pytest
from hypothesis import given, settings, strategies as st

from ionlab.cli import data_path
from ionlab.dsl import (Cool, InitGround, InitThermal, LabConfig, Measure, OpticalPump, PulseStep,
                        Repump, Scan, Sequence, Wait, format_sequence, parse_angle, parse_config,
                        parse_freq, parse_sequence, parse_time)
from ionlab.dynamics import NoiseModel
from ionlab.errors import ParseError

FOCK_PREP = """\
init ground
pulse bsb(z) pi
repump854
pulse bsb(z) t=scan(0us, 400us, 81)
measure shots=100
"""


def test_fock_prep_program():
    seq = parse_sequence(FOCK_PREP)
    assert len(seq.steps) == 5
    assert isinstance(seq.steps[0], InitGround)
    assert seq.steps[1] == PulseStep("bsb", "z", area=math.pi)
    assert isinstance(seq.steps[2], Repump)
    sweep = Scan(0.0, 400 * 1e-6, 81, "time")
    assert seq.steps[3].duration == sweep
    assert sweep.values()[-1] == pytest.approx(400e-6) and len(sweep.values()) == 81
    assert seq.measure == Measure(100)
    assert seq.scan_placeholder() == ("duration", sweep)


def test_wait_units():
    seq = parse_sequence("init ground\nwait 0.2ms\nmeasure shots=1\n")
    assert seq.steps[1] == Wait(pytest.approx(2e-4, rel=1e-15))
    assert parse_time("22us") == pytest.approx(22e-6)
    assert parse_freq("4.51MHz") == pytest.approx(4.51e6)
    assert parse_angle("pi/2") == pytest.approx(math.pi / 2)
    assert parse_angle("1.1*pi/2") == pytest.approx(1.1 * math.pi / 2)
    assert parse_angle("90deg") == pytest.approx(math.pi / 2)


def test_header_and_comments():
    text = """\
# two ions in the linear trap
trap x=1.4MHz, y=1.4MHz, z=0.7MHz
ion ca40
ions 2
noise dephasing=2kHz convention=angular heating=33.3/s
init thermal doppler   # Doppler limit of the cooled mode
cool mode=y:rocking A-=10000/s A+=500/s t=10ms
pulse rsb(y:rocking) pi omega=50kHz detune=scan(-5kHz, 5kHz, 41)
measure shots=100
"""
    seq = parse_sequence(text)
    cfg = seq.config
    assert cfg.trap_hz == pytest.approx((1.4e6, 1.4e6, 0.7e6))
    assert cfg.n_ions == 2
    assert cfg.noise.dephasing_rate == pytest.approx(2 * math.pi * 2e3)
    assert cfg.noise.heating_rate == pytest.approx(33.3)
    assert seq.steps[0] == InitThermal(None)
    assert seq.steps[1] == Cool("y:rocking", 1e4, 500.0, pytest.approx(0.01))
    assert seq.scan_placeholder()[0] == "detuning"


@pytest.mark.parametrize("text, line, column, fragment", [
    ("", None, None, "missing init/measure"),
    ("# only a comment\n", None, None, "missing init/measure"),
    ("init ground\n", None, None, "missing measure"),
    ("measure shots=10\n", None, None, "missing init"),
    ("init ground\nfrobnicate\nmeasure shots=1\n", 2, 1, "unknown keyword"),
    ("init ground\ninit ground\nmeasure shots=1\n", 2, 1, "duplicate init"),
    ("init ground\nwait 3parsecs\nmeasure shots=1\n", 2, 6, "unknown time unit"),
    ("init ground\nwait 3 parsecs\nmeasure shots=1\n", 2, 8, "unexpected"),
    ("init ground\npulse bsb(z) t=5 furlongs\nmeasure shots=1\n", 2, None, "unexpected"),
    ("init ground\npulse bsb(z) t=5kHz\nmeasure shots=1\n", 2, 16, "unknown time unit"),
    ("init ground\npulse bsb pi\nmeasure shots=1\n", 2, 7, "needs a mode"),
    ("init ground\npulse bsb(z) pi t=1us\nmeasure shots=1\n", 2, 17, "either"),
    ("init ground\nmeasure shots=1\nwait 1us\n", 2, 1, "last step"),
    ("init ground\nmeasure shots=ten\n", 2, 9, "integer"),
    ("init ground\nwait scan(0s, 1ms, 3)\npulse carrier t=scan(0s, 2ms, 3)\nmeasure shots=1\n",
     None, None, "only one scan"),
    ("init ground\ntrap x=1MHz, y=1MHz, z=1MHz\nmeasure shots=1\n", 2, 1, "before the first step"),
    ("trap x=1MHz, y=1MHz\ninit ground\nmeasure shots=1\n", 1, None, "missing option z="),
    ("ion yb171\ninit ground\nmeasure shots=1\n", 1, 5, "species"),
    ("init ground\ncool mode=z A-=10/s A+=20/s t=1ms\nmeasure shots=1\n", 2, None, "A_minus"),
])
def test_parse_errors_have_positions(text, line, column, fragment):
    with pytest.raises(ParseError) as info:
        parse_sequence(text)
    err = info.value
    assert fragment.lower() in err.message.lower()
    assert err.line == line
    if column is not None:
        assert err.column == column


def test_config_file():
    cfg = parse_config(open(data_path("linear.cfg")).read())
    assert cfg.trap_hz == pytest.approx((1.4e6, 1.4e6, 0.7e6))
    assert cfg.ions == 2
    with pytest.raises(ParseError):
        parse_config("init ground\n")
    merged = cfg.merged(LabConfig(n_ions=3))
    assert merged.ions == 3 and merged.trap_hz == cfg.trap_hz


@pytest.mark.parametrize("name", ["ramsey.seq", "cooling_red.seq", "cooling_blue.seq",
                                  "rocking_red.seq", "rocking_blue.seq", "heating_red.seq",
                                  "heating_blue.seq", "fock0_flop.seq", "fock1_flop.seq"])
def test_bundled_corpus_round_trips(name):
    seq = parse_sequence(open(data_path(name)).read())
    assert parse_sequence(format_sequence(seq)) == seq


# --- property-based round trip -----------------------------------------------------------

finite = st.floats(1e-9, 1e3, allow_nan=False)
times = st.floats(0.0, 1.0)
freqs = st.floats(-1e7, 1e7, allow_nan=False)


def scans(kind):
    lo, hi = (0.0, 1e-2) if kind == "time" else (-1e6, 1e6)
    return st.builds(Scan, st.floats(lo, hi), st.floats(lo, hi), st.integers(1, 50), st.just(kind))


modes = st.sampled_from(["x", "y", "z", "y:rocking", "z:com"])
pulses = st.one_of(
    st.builds(PulseStep, st.just("carrier"), st.none(), st.floats(0.0, 10.0), st.none(),
              st.floats(0.0, 6.0), st.none() | st.floats(1.0, 1e6), freqs),
    st.builds(PulseStep, st.sampled_from(["rsb", "bsb"]), modes, st.none(), times,
              st.floats(0.0, 6.0), st.none() | st.floats(1.0, 1e6), freqs),
)
middle = st.one_of(
    pulses,
    st.builds(Wait, times),
    st.builds(Repump, st.floats(0.0, 1.0)),
    st.just(OpticalPump()),
    st.builds(Cool, modes, st.floats(2e3, 1e5), st.floats(0.0, 1e3), times),
)
inits = st.one_of(st.just(InitGround()), st.builds(InitThermal, st.none() | st.floats(0.0, 50.0)))
configs = st.builds(
    LabConfig,
    st.none() | st.tuples(finite, finite, finite),
    st.none(),
    st.none() | st.just("ca40"),
    st.none() | st.integers(1, 5),
    st.none() | st.builds(NoiseModel, st.floats(0, 1e4), st.floats(0, 10), st.floats(0, 100)),
)


@st.composite
def sequences(draw):
    steps = [draw(inits)] + draw(st.lists(middle, max_size=6))
    if draw(st.booleans()):
        kind = draw(st.sampled_from(["wait", "duration", "detune"]))
        if kind == "wait":
            steps.append(Wait(draw(scans("time"))))
        elif kind == "duration":
            steps.append(PulseStep("bsb", "z", duration=draw(scans("time"))))
        else:
            steps.append(PulseStep("rsb", "z", area=math.pi, detune=draw(scans("freq"))))
    steps.append(Measure(draw(st.integers(0, 10_000))))
    return Sequence(tuple(steps), draw(configs))


@settings(max_examples=300, deadline=None)
@given(sequences())
def test_parse_format_parse_identity(seq):
    text = format_sequence(seq)
    once = parse_sequence(text)
    assert once == seq
    assert parse_sequence(format_sequence(once)) == once
