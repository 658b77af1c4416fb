import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from ionlab.analysis import (REPORT_COLUMNS, ReportRow, blue_sideband_frequencies,
                             deviance_residuals, extract_fock_populations, fit_lorentzian_peaks,
                             fit_ramsey, flop_periodogram, flop_signal, heating_from_scans,
                             heating_rate, lorentzian,
                             nbar_to_ratio, ramsey_gap_signal, ramsey_signal, ratio_to_nbar,
                             shot_sigma, sideband_thermometry, write_report)
from ionlab.constants import TWO_PI
from ionlab.dsl import parse_sequence
from ionlab.errors import ConditioningError, DomainError
from ionlab.experiment import scan

ETA = 0.0323
RABI = TWO_PI * 250e3


# --- thermometry ---------------------------------------------------------------------

def test_thermometry_reference_values():
    th = sideband_thermometry(0.001, 0.0, 1.0, 0.0)
    assert th.p0 == pytest.approx(0.999)
    assert th.nbar == pytest.approx(0.001 / 0.999)
    zero = sideband_thermometry(0.0, 0.0, 0.8, 0.0)
    assert zero.nbar == 0.0 and zero.p0 == 1.0
    half = sideband_thermometry(0.25, 0.0, 0.5, 0.0)
    assert half.nbar == pytest.approx(1.0) and half.p0 == pytest.approx(0.5)


def test_thermometry_inconsistent_and_domain():
    th = sideband_thermometry(0.6, 0.01, 0.5, 0.01)
    assert not th.thermal_consistent and math.isinf(th.nbar)
    assert not sideband_thermometry(0.5, 0.01, 0.5, 0.01).thermal_consistent
    for bad in (0.0, -0.1):
        with pytest.raises(DomainError):
            sideband_thermometry(0.1, 0.01, bad, 0.01)


def test_thermometry_error_propagation():
    pr, sr, pb, sb = 0.2, 0.01, 0.6, 0.02
    th = sideband_thermometry(pr, sr, pb, sb)
    # first-order propagation checked by finite differences
    h = 1e-7
    dr = (ratio_to_nbar((pr + h) / pb) - ratio_to_nbar((pr - h) / pb)) / (2 * h)
    db = (ratio_to_nbar(pr / (pb + h)) - ratio_to_nbar(pr / (pb - h))) / (2 * h)
    assert th.nbar_stderr == pytest.approx(math.hypot(dr * sr, db * sb), rel=1e-6)
    lo, hi = th.p0_interval
    assert lo < th.p0 < hi
    assert hi - lo == pytest.approx(2 * 1.96 * th.p0_stderr)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 100.0))
def test_nbar_ratio_round_trip(nbar):
    assert ratio_to_nbar(nbar_to_ratio(nbar)) == pytest.approx(nbar, rel=1e-9, abs=1e-12)
    assert 0.0 <= nbar_to_ratio(nbar) < 1.0


# --- binomial helpers --------------------------------------------------------------------

def test_shot_sigma_and_deviance():
    assert shot_sigma([0.5, 0.5], [0, 0]) is None
    s = shot_sigma([0.0, 1.0, 0.5], [100, 100, 100])
    assert np.all(s > 0)
    assert s[2] == pytest.approx(math.sqrt(0.25 / 100))
    model = np.array([0.2, 0.5, 0.9])
    shots = np.array([100.0, 100.0, 100.0])
    counts = np.array([25.0, 50.0, 80.0])
    dev = 2 * np.sum(counts * np.log(counts / (shots * model))
                     + (shots - counts) * np.log((shots - counts) / (shots * (1 - model))))
    r = deviance_residuals(model, counts, shots)
    assert np.sum(r ** 2) == pytest.approx(dev)
    assert np.sign(r).tolist() == [1.0, 0.0, -1.0]


def test_write_report_format():
    fh = io.StringIO()
    write_report([ReportRow("nbar", 0.1, 0.01), ReportRow("flag", 1.0)], fh)
    lines = fh.getvalue().splitlines()
    assert lines[0] == ",".join(REPORT_COLUMNS)
    assert lines[1] == "nbar,0.10000000000000001,0.01"
    assert lines[2] == "flag,1,0"


# --- Lorentzian peaks ----------------------------------------------------------------------

def test_single_lorentzian_noiseless():
    x = np.linspace(-20e3, 20e3, 81)
    y = lorentzian(x, 1234.0, 0.8, 5e3)
    fit = fit_lorentzian_peaks(x, 1, y=y)
    p = fit.peaks[0]
    assert p.center == pytest.approx(1234.0, abs=1e-6 * 5e3)
    assert p.height == pytest.approx(0.8, rel=1e-6)
    assert p.width == pytest.approx(5e3, rel=1e-6)
    assert fit.residual < 1e-12 and fit.dof == 78


def test_two_separated_peaks():
    x = np.linspace(-30e3, 30e3, 241)
    y = lorentzian(x, -12.5e3, 0.6, 5e3) + lorentzian(x, 12.5e3, 0.3, 5e3)
    fit = fit_lorentzian_peaks(x, 2, y=y)
    c = [p.center for p in fit.peaks]
    assert c[0] == pytest.approx(-12.5e3, rel=0.01)
    assert c[1] == pytest.approx(12.5e3, rel=0.01)
    rng = np.random.default_rng(4)
    noisy = np.clip(y + rng.normal(0, 0.01, y.size), 0, 1)
    fit = fit_lorentzian_peaks(x, 2, y=noisy, sigma=np.full(y.size, 0.01))
    assert [p.center for p in fit.peaks] == pytest.approx([-12.5e3, 12.5e3], rel=0.01)
    assert all(p.height >= 0 for p in fit.peaks)


def test_fixed_center_and_width():
    x = np.linspace(-10e3, 10e3, 41)
    y = lorentzian(x, 500.0, 0.002, 3e3)
    fit = fit_lorentzian_peaks(x, 1, y=y, guesses=[(500.0, 1e-3, 3e3)], fixed_center=500.0,
                               fixed_width=3e3)
    p = fit.peaks[0]
    assert p.center == 500.0 and p.width == 3e3 and p.center_err == 0.0
    assert p.height == pytest.approx(0.002, rel=1e-6)


def test_lorentzian_errors_scale_with_shots():
    x = np.linspace(-20e3, 20e3, 41)
    truth = lorentzian(x, 0.0, 0.7, 6e3)
    rng = np.random.default_rng(9)
    errs = {}
    for shots in (100, 10_000):
        y = rng.binomial(shots, truth) / shots
        errs[shots] = fit_lorentzian_peaks(x, 1, y=y, shots=shots).peaks[0].height_err
    assert errs[100] / errs[10_000] == pytest.approx(10.0, rel=0.15)


def test_lorentzian_error_bars_are_calibrated():
    x = np.linspace(-20e3, 20e3, 31)
    truth = lorentzian(x, 0.0, 0.7, 6e3)
    rng = np.random.default_rng(21)
    pulls = []
    for _ in range(60):
        y = rng.binomial(200, truth) / 200
        p = fit_lorentzian_peaks(x, 1, y=y, shots=200).peaks[0]
        pulls.append((p.center - 0.0) / p.center_err)
    assert np.std(pulls) == pytest.approx(1.0, abs=0.3)


# --- Fock populations ----------------------------------------------------------------------

TIMES = np.linspace(0, 400e-6, 81)


def test_flop_signal_pure_states():
    freqs = blue_sideband_frequencies(ETA, RABI, 3)
    assert freqs[1] / freqs[0] == pytest.approx(math.sqrt(2), rel=0.01)
    y = flop_signal(TIMES, [0, 1, 0, 0], freqs)
    np.testing.assert_allclose(y, np.sin(0.5 * freqs[1] * TIMES) ** 2, atol=1e-14)


@pytest.mark.parametrize("pops", [(1.0, 0, 0, 0), (0, 1.0, 0, 0), (0.89, 0.09, 0.02, 0),
                                  (0.03, 0.87, 0.08, 0.02)])
def test_fock_extraction_noiseless(pops):
    freqs = blue_sideband_frequencies(ETA, RABI, 3)
    y = flop_signal(TIMES, pops, freqs)
    res = extract_fock_populations(None, ETA, RABI, 3, gamma=0.0, times=TIMES, y=y)
    np.testing.assert_allclose(res.populations, pops, atol=1e-6)
    assert res.total == pytest.approx(1.0, abs=1e-6)
    assert res.dominant == int(np.argmax(pops))


def test_fock_extraction_recovers_decay():
    freqs = blue_sideband_frequencies(ETA, RABI, 3)
    y = flop_signal(TIMES, [0.03, 0.87, 0.08, 0.02], freqs, gamma=3000.0)
    res = extract_fock_populations(None, ETA, RABI, 3, times=TIMES, y=y)
    assert res.decay_rates[0] == pytest.approx(3000.0, rel=1e-3)
    np.testing.assert_allclose(res.populations, [0.03, 0.87, 0.08, 0.02], atol=1e-4)


def test_fock_extraction_with_shot_noise():
    freqs = blue_sideband_frequencies(ETA, RABI, 5)
    pops = np.array([0.03, 0.87, 0.08, 0.02, 0, 0])
    rng = np.random.default_rng(0)
    y = rng.binomial(100, flop_signal(TIMES, pops, freqs)) / 100
    res = extract_fock_populations(None, ETA, RABI, 5, times=TIMES, y=y, shots=100)
    assert res.dominant == 1
    assert np.max(np.abs(res.populations - pops)) < 0.04
    assert np.all(res.stderr[res.populations > 0] > 0)


def test_fock_extraction_conditioning():
    short = np.linspace(0, 40e-6, 41)
    with pytest.raises(ConditioningError):
        extract_fock_populations(None, ETA, RABI, 3, times=short, y=np.zeros_like(short))
    with pytest.raises(ConditioningError):
        extract_fock_populations(None, ETA, RABI, 3, times=TIMES, y=np.zeros_like(TIMES),
                                 max_condition=1.0)
    with pytest.raises(DomainError):
        extract_fock_populations(None, ETA, RABI, -1, times=TIMES, y=np.zeros_like(TIMES))


def test_flop_periodogram_peak():
    freqs = blue_sideband_frequencies(ETA, RABI, 1)
    y = flop_signal(TIMES, [0, 1], freqs)
    f, power = flop_periodogram(None, times=TIMES, y=y)
    assert f[np.argmax(power)] == pytest.approx(freqs[1] / TWO_PI, rel=0.05)


# --- Ramsey ----------------------------------------------------------------------------

def bloch_oracle(detuning, area, tau, gap, gamma):
    """Bloch equations integrated by direct matrix exponentials, pulse-gap-pulse."""
    out = []
    for d in np.atleast_1d(detuning):
        rabi = area / tau
        pulse = np.array([[-gamma, d, 0], [-d, -gamma, -rabi], [0, rabi, 0]])
        free = np.array([[-gamma, d, 0], [-d, -gamma, 0], [0, 0, 0]])
        r = expm(pulse * tau) @ expm(free * gap) @ expm(pulse * tau) @ np.array([0, 0, -1.0])
        out.append(0.5 * (1 + r[2]))
    return np.array(out)


def test_ramsey_signal_matches_bloch_oracle():
    det = TWO_PI * np.linspace(-15e3, 15e3, 13)
    np.testing.assert_allclose(ramsey_signal(det, 1.1 * math.pi / 2, 2e-6, 2e-4, 900.0),
                               bloch_oracle(det, 1.1 * math.pi / 2, 2e-6, 2e-4, 900.0), atol=1e-12)
    assert ramsey_signal([0.0], math.pi / 2, 2e-6, 2e-4)[0] == pytest.approx(1.0, abs=1e-12)
    gaps = np.linspace(0, 1e-4, 5)
    np.testing.assert_allclose(ramsey_gap_signal(gaps, TWO_PI * 1e4, math.pi / 2, 2e-6),
                               [bloch_oracle(TWO_PI * 1e4, math.pi / 2, 2e-6, g, 0.0)[0] for g in gaps],
                               atol=1e-12)


def test_ramsey_fit_noiseless():
    x = np.linspace(-15e3, 15e3, 61)
    y = ramsey_signal(TWO_PI * (x - 300.0), 1.1 * math.pi / 2, 2e-6, 2e-4, 1500.0)
    fit = fit_ramsey(None, 2e-6, 2e-4, x=x, y=y)
    assert fit.area_error == pytest.approx(0.1, abs=1e-6)
    assert fit.decay_rate == pytest.approx(1500.0, rel=1e-6)
    assert fit.center == pytest.approx(TWO_PI * 300.0, abs=1e-3)
    assert fit.fringe_period == pytest.approx(1 / (2e-4 + 4 * 2e-6 / math.pi), rel=0.01)
    assert fit.decay_constant("angular") == pytest.approx(1500.0 / TWO_PI)
    with pytest.raises(DomainError):
        fit.decay_constant("bogus")


def test_ramsey_ideal_contrast():
    x = np.linspace(-15e3, 15e3, 61)
    y = ramsey_signal(TWO_PI * x, math.pi / 2, 2e-6, 2e-4, 0.0)
    fit = fit_ramsey(None, 2e-6, 2e-4, x=x, y=y)
    assert fit.contrast == pytest.approx(1.0, abs=1e-3)
    assert fit.decay_rate == pytest.approx(0.0, abs=1e-3)


def test_ramsey_fit_with_shots():
    # long pulses: the off-resonant envelope separates the area from its complement
    x = np.linspace(-40e3, 40e3, 161)
    area = 1.1 * math.pi / 2
    truth = ramsey_signal(TWO_PI * x, area, 22e-6, 2e-4, 2000.0)
    rng = np.random.default_rng(5)
    y = rng.binomial(400, truth) / 400
    fit = fit_ramsey(None, 22e-6, 2e-4, x=x, y=y, shots=400)
    assert abs(fit.area_error - 0.1) < 4 * fit.errors["area_error"]
    assert abs(fit.decay_rate - 2000.0) < 4 * fit.errors["gamma"]


# --- heating -----------------------------------------------------------------------------

def test_heating_rate_exact_line():
    t = np.linspace(0, 0.2, 6)
    fit = heating_rate(t, 0.05 + 5.26 * t)
    assert fit.rate == pytest.approx(5.26, rel=1e-12)
    assert fit.intercept == pytest.approx(0.05, abs=1e-12)
    assert not fit.negative_flag


def test_heating_rate_zero_and_negative():
    t = np.linspace(0, 0.2, 8)
    rng = np.random.default_rng(2)
    flat = heating_rate(t, 0.1 + rng.normal(0, 0.02, t.size), np.full(t.size, 0.02))
    assert abs(flat.rate) < 2.5 * flat.rate_stderr
    down = heating_rate(t, 1.0 - 3.0 * t, np.full(t.size, 0.01))
    assert down.negative_flag
    with pytest.raises(DomainError):
        heating_rate([0.0, 0.1], [0.1, 0.2])
    with pytest.raises(DomainError):
        heating_rate([0.0, 0.1, 0.1, 0.0], [0.1, 0.2, 0.2, 0.1])


def test_heating_weighted_errors_match_covariance():
    t = np.array([0.0, 0.05, 0.1, 0.2])
    sig = np.array([0.01, 0.02, 0.03, 0.05])
    fit = heating_rate(t, 0.02 + 5 * t, sig)
    a = np.column_stack([t, np.ones_like(t)]) / sig[:, None]
    cov = np.linalg.inv(a.T @ a)
    assert fit.rate_stderr == pytest.approx(math.sqrt(cov[0, 0]), rel=1e-10)
    assert fit.intercept_stderr == pytest.approx(math.sqrt(cov[1, 1]), rel=1e-10)


LINEAR_HEATING = """\
trap x=1.4MHz, y=1.4MHz, z=0.7MHz
ion ca40
ions 2
noise heating=33.333333333333336/s
init thermal doppler
cool mode=y:rocking A-=10000/s A+=9.99000999000999/s t=5ms
wait scan(0s, 60ms, 31)
pulse {side}(y:rocking) pi omega=50kHz
measure shots=400
"""


def test_two_ion_rocking_heating_pipeline():
    # cooling erases the Doppler start, so a cutoff of 24 holds the state (no truncation warnings)
    red = scan(parse_sequence(LINEAR_HEATING.format(side="rsb")), seed=0, n_max=24)
    blue = scan(parse_sequence(LINEAR_HEATING.format(side="bsb")), seed=100, n_max=24)
    assert not red.truncation_warnings and not blue.truncation_warnings
    fit, therm = heating_from_scans(red, blue)
    assert fit.rate == pytest.approx(1 / 0.030, rel=0.1)
    assert 20e-3 <= 1 / fit.rate <= 50e-3
    assert therm[0].p0 > 0.99
