"""Turn simulated shot records back into physical numbers.

Fitters take ``ScanResult`` objects or plain arrays.  Shot data are fitted
by binomial maximum likelihood (deviance residuals); parameter errors come
from the Fisher information.  With explicit ``sigma`` a weighted least
squares is used instead, and in oracle mode (no shots, no sigma) every point
has unit weight and errors are scaled by the residual.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.signal

from .constants import TWO_PI
from .core import coupling_strength
from .dynamics import RAMSEY_DECAY_CONVENTIONS
from .errors import ConditioningError, DomainError, FitError

REPORT_COLUMNS = ("quantity", "value", "stderr")
CONFIDENCE_Z = 1.96  # two-sided 95 % normal interval


@dataclass(frozen=True)
class ReportRow:
    quantity: str
    value: float
    stderr: float = 0.0


def write_report(rows, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in rows:
        w.writerow([r.quantity, format(float(r.value), ".17g"), format(float(r.stderr), ".17g")])


def shot_sigma(p_est, shots):
    """Per-point binomial standard errors, finite at p = 0 and p = 1; None in oracle mode."""
    p_est = np.asarray(p_est, dtype=float)
    shots = np.asarray(shots, dtype=float)
    if np.all(shots == 0):
        return None
    n = np.where(shots > 0, shots, 1.0)
    p = (p_est * n + 0.5) / (n + 1.0)
    return np.sqrt(p * (1.0 - p) / n)


def deviance_residuals(model, counts, shots):
    """Signed binomial deviance residuals; their squares sum to the deviance.

    Minimising these is maximum likelihood for shot data, which avoids the
    bias of weighting by noisy per-point estimates.
    """
    p = np.clip(model, 1e-12, 1.0 - 1e-12)
    k = counts
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(k > 0, k * np.log(k / (shots * p)), 0.0)
        t2 = np.where(shots - k > 0, (shots - k) * np.log((shots - k) / (shots * (1.0 - p))), 0.0)
    dev = np.clip(2.0 * (t1 + t2), 0.0, None)
    return np.sign(k - shots * p) * np.sqrt(dev)


@dataclass(frozen=True)
class _Data:
    x: np.ndarray
    y: np.ndarray
    shots: np.ndarray | None = None
    sigma: np.ndarray | None = None

    @property
    def counts(self):
        return np.rint(self.y * self.shots)


def _data(scan_or_x, y=None, sigma=None, shots=None):
    if y is None:
        scan = scan_or_x
        x, y, shots = scan.values, scan.p_est, np.asarray(scan.shots, float)
        if np.any(shots == 0):
            shots = None
    else:
        x = scan_or_x
    return _Data(np.asarray(x, float), np.asarray(y, float),
                 None if shots is None else np.broadcast_to(np.asarray(shots, float), np.shape(y)),
                 None if sigma is None else np.asarray(sigma, float))


def _fit(model, data, starts, lo, hi, simplex_iter=400):
    """Minimise over ``starts`` (simplex then trust-region polish); best (q, chi2, errors).

    ``chi2`` is the deviance for shot data and the (weighted) residual sum of
    squares otherwise.
    """
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    if data.shots is not None:
        counts = data.counts

        def resid(q):
            return deviance_residuals(model(q), counts, data.shots)
    else:
        w = 1.0 if data.sigma is None else 1.0 / data.sigma

        def resid(q):
            return (model(q) - data.y) * w

    best = None
    for q0 in starts:
        q0 = np.clip(np.asarray(q0, float), lo, hi)
        nm = scipy.optimize.minimize(lambda q: float(np.sum(resid(np.clip(q, lo, hi)) ** 2)), q0,
                                     method="Nelder-Mead",
                                     options={"maxiter": simplex_iter * len(q0), "xatol": 1e-12,
                                              "fatol": 1e-14})
        res = scipy.optimize.least_squares(resid, np.clip(nm.x, lo, hi), bounds=(lo, hi),
                                           x_scale="jac", xtol=1e-14, ftol=1e-14, gtol=1e-14,
                                           max_nfev=2000)
        if best is None or res.cost < best.cost:
            best = res
    chi2 = float(np.sum(best.fun ** 2))
    if not best.success:
        raise FitError(f"fit did not converge ({best.message})", residual=chi2)
    q = best.x
    jac = _model_jacobian(model, q, lo, hi)
    if data.shots is not None:
        n = data.shots
        p = np.clip(model(q), 0.5 / n, 1.0 - 0.5 / n)
        jac = jac / np.sqrt(p * (1.0 - p) / n)[:, None]
        errs = _parameter_errors(jac, chi2, 0, scale=False)
    elif data.sigma is not None:
        errs = _parameter_errors(jac / data.sigma[:, None], chi2, 0, scale=False)
    else:
        errs = _parameter_errors(jac, chi2, len(data.y) - len(q), scale=True)
    return q, chi2, errs


def _model_jacobian(model, q, lo, hi):
    cols = []
    for i in range(len(q)):
        h = 1e-6 * max(abs(q[i]), 1e-6 * (hi[i] - lo[i]) if np.isfinite(hi[i] - lo[i]) else 1e-6)
        qp, qm = q.copy(), q.copy()
        qp[i] = min(q[i] + h, hi[i])
        qm[i] = max(q[i] - h, lo[i])
        cols.append((model(qp) - model(qm)) / (qp[i] - qm[i]))
    return np.column_stack(cols)


# --- thermometry ---------------------------------------------------------------

@dataclass(frozen=True)
class ThermometryResult:
    ratio: float
    ratio_stderr: float
    nbar: float
    nbar_stderr: float
    p0: float
    p0_stderr: float
    thermal_consistent: bool = True

    @property
    def p0_interval(self):
        lo = max(0.0, self.p0 - CONFIDENCE_Z * self.p0_stderr)
        hi = min(1.0, self.p0 + CONFIDENCE_Z * self.p0_stderr)
        return lo, hi

    def report_rows(self):
        return [ReportRow("ratio", self.ratio, self.ratio_stderr),
                ReportRow("nbar", self.nbar, self.nbar_stderr),
                ReportRow("p0", self.p0, self.p0_stderr),
                ReportRow("p0_ci_low", self.p0_interval[0]),
                ReportRow("p0_ci_high", self.p0_interval[1]),
                ReportRow("thermal_consistent", float(self.thermal_consistent))]


def nbar_to_ratio(nbar):
    return nbar / (1.0 + nbar)


def ratio_to_nbar(ratio):
    return ratio / (1.0 - ratio)


def sideband_thermometry(p_red, sigma_red, p_blue, sigma_blue):
    """Mean phonon number from red/blue sideband heights of a thermal state.

    ``P_red / P_blue = nbar / (1 + nbar)``, so ``nbar = R / (1 - R)`` and the
    ground-state population is ``1 - R``.  A ratio at or above one cannot
    come from a thermal state; it is flagged instead of yielding a negative
    occupation.
    """
    if not p_blue > 0:
        raise DomainError("blue sideband height must be positive")
    ratio = p_red / p_blue
    ratio_err = abs(ratio) * math.hypot(sigma_red / p_red if p_red else 0.0, sigma_blue / p_blue)
    if p_red == 0:
        ratio_err = sigma_red / p_blue
    if ratio >= 1.0:
        return ThermometryResult(ratio, ratio_err, math.inf, math.inf, 0.0, ratio_err, False)
    ratio_c = max(ratio, 0.0)
    nbar = ratio_to_nbar(ratio_c)
    nbar_err = ratio_err / (1.0 - ratio_c) ** 2
    return ThermometryResult(ratio, ratio_err, nbar, nbar_err, 1.0 - ratio_c, ratio_err, True)


# --- Lorentzian peaks ------------------------------------------------------------

def lorentzian(x, center, height, width):
    """Peak of full width at half maximum ``width``."""
    return height / (1.0 + (2.0 * (x - center) / width) ** 2)


@dataclass(frozen=True)
class Peak:
    center: float
    height: float
    width: float
    center_err: float = 0.0
    height_err: float = 0.0
    width_err: float = 0.0


@dataclass(frozen=True)
class LorentzianFit:
    peaks: list
    residual: float  # weighted sum of squared residuals
    dof: int

    def report_rows(self):
        rows = []
        for i, p in enumerate(self.peaks):
            rows += [ReportRow(f"center_{i}", p.center, p.center_err),
                     ReportRow(f"height_{i}", p.height, p.height_err),
                     ReportRow(f"width_{i}", p.width, p.width_err)]
        rows.append(ReportRow("chi2", self.residual))
        return rows


def _guess_peaks(x, y, n_peaks):
    order = np.argsort(x)
    xs, ys = x[order], y[order]
    idx, _ = scipy.signal.find_peaks(np.concatenate(([-np.inf], ys, [-np.inf])))
    idx = idx - 1
    if len(idx) < n_peaks:
        idx = np.argsort(ys)[::-1][:n_peaks]
    idx = sorted(idx, key=lambda i: ys[i], reverse=True)[:n_peaks]
    widths = scipy.signal.peak_widths(ys, idx, rel_height=0.5)[0]
    step = np.median(np.diff(xs)) if len(xs) > 1 else 1.0
    return [(xs[i], max(ys[i], 1e-6), max(w * step, 2.0 * step)) for i, w in zip(idx, widths)]


def _parameter_errors(jac, residual, dof, scale):
    try:
        cov = np.linalg.pinv(jac.T @ jac)
    except np.linalg.LinAlgError:
        return np.full(jac.shape[1], np.nan)
    if scale:
        cov = cov * (residual / max(dof, 1))
    return np.sqrt(np.clip(np.diag(cov), 0.0, None))


def fit_lorentzian_peaks(scan_or_x, n_peaks=1, y=None, sigma=None, shots=None, guesses=None,
                         fixed_center=None, fixed_width=None):
    """Fit ``n_peaks`` Lorentzians with non-negative heights.

    ``fixed_center`` / ``fixed_width`` pin those parameters for every peak,
    which is how a barely visible red sideband is measured against the blue
    one.  Raises ``FitError`` carrying the best residual on failure.
    """
    data = _data(scan_or_x, y, sigma, shots)
    x = data.x
    if len(x) < 3 * n_peaks:
        raise FitError("not enough points for the requested number of peaks", residual=math.nan)
    if guesses is None:
        guesses = _guess_peaks(x, data.y, n_peaks)
    if fixed_center is not None:
        guesses = [(fixed_center, g[1], g[2]) for g in guesses]
    if fixed_width is not None:
        guesses = [(g[0], g[1], fixed_width) for g in guesses]
    free = [fixed_center is None, True, fixed_width is None]
    span = np.ptp(x) if len(x) > 1 else 1.0

    def unpack(q):
        out, it = [], iter(q)
        for g in guesses:
            out.append(tuple(next(it) if f else g[k] for k, f in enumerate(free)))
        return out

    def model(q):
        return sum(lorentzian(x, *p) for p in unpack(q))

    q0, lo, hi = [], [], []
    for c, h, wd in guesses:
        for k, (val, lb, ub) in enumerate(((c, x.min() - span, x.max() + span), (h, 0.0, 1.0),
                                           (wd, 1e-9 * span, 10 * span))):
            if free[k]:
                q0.append(val), lo.append(lb), hi.append(ub)
    q, chi2, errs = _fit(model, data, [q0], lo, hi)
    errs = iter(errs)
    peaks = []
    for c, h, wd in unpack(q):
        e = [next(errs) if f else 0.0 for f in free]
        peaks.append(Peak(c, h, abs(wd), *e))
    peaks.sort(key=lambda p: p.center)
    return LorentzianFit(peaks, chi2, len(x) - len(q0))


def thermometry_from_scans(red, blue, mirror=True):
    """Thermometry from red and blue sideband detuning scans.

    The blue peak is fitted freely; the red peak is then fitted with the same
    width and a centre fixed to the blue one (mirrored through zero when the
    scan axes are offsets from the nominal sideband and the light shift
    pushes the two sidebands apart symmetrically).
    """
    fb = fit_lorentzian_peaks(blue, 1)
    pb = fb.peaks[0]
    center = -pb.center if mirror else pb.center
    fr = fit_lorentzian_peaks(red, 1, guesses=[(center, 1e-3, pb.width)], fixed_center=center,
                              fixed_width=pb.width)
    pr = fr.peaks[0]
    return sideband_thermometry(pr.height, pr.height_err, pb.height, pb.height_err), fr, fb


# --- Fock populations from Rabi flopping -------------------------------------------

@dataclass(frozen=True)
class FlopAnalysis:
    populations: np.ndarray
    stderr: np.ndarray
    decay_rates: np.ndarray  # per component, 1/s
    residual: float
    frequencies: np.ndarray  # blue-sideband Rabi frequencies, rad/s
    condition_number: float = math.nan

    @property
    def dominant(self):
        return int(np.argmax(self.populations))

    @property
    def total(self):
        return float(np.sum(self.populations))

    def report_rows(self):
        rows = [ReportRow(f"p{n}", p, e)
                for n, (p, e) in enumerate(zip(self.populations, self.stderr))]
        rows += [ReportRow("gamma", self.decay_rates[0]), ReportRow("dominant_n", self.dominant),
                 ReportRow("residual", self.residual)]
        return rows


def blue_sideband_frequencies(eta, rabi_frequency, n_cut):
    """Omega_{n,n+1} = Omega |<n+1|exp(i eta (a + a^dag))|n>| for n = 0..n_cut."""
    return np.array([rabi_frequency * coupling_strength(n, 1, eta) for n in range(n_cut + 1)])


def flop_signal(times, populations, frequencies, gamma=0.0):
    """P_D(t) = 1/2 sum_n p_n [1 - cos(Omega_n t) exp(-gamma t)] for |S> x sum_n p_n |n><n|."""
    times = np.asarray(times, float)
    basis = _flop_basis(times, frequencies, np.broadcast_to(gamma, len(frequencies)))
    return basis @ np.asarray(populations, float)


def _flop_basis(times, frequencies, gammas):
    return 0.5 * (1.0 - np.cos(np.outer(times, frequencies)) * np.exp(-np.outer(times, gammas)))


def _nnls_sum_to_one(a, y, weight):
    """Non-negative least squares with sum(p) = 1 appended as a weighted soft row."""
    a_aug = np.vstack([a, weight * np.ones(a.shape[1])])
    y_aug = np.concatenate([y, [weight]])
    p, rnorm = scipy.optimize.nnls(a_aug, y_aug)
    return p, rnorm ** 2


def extract_fock_populations(flop, eta, rabi_frequency, n_cut, gamma=None, per_component=False,
                             max_condition=1e6, times=None, y=None, sigma=None, shots=None):
    """Fock populations from a blue-sideband Rabi flop.

    Fits ``flop_signal`` on the known frequency basis ``Omega_{n,n+1}``.  For
    a given decay rate the populations follow from non-negative least squares
    with a soft sum-to-one row; the shared decay rate (or, with
    ``per_component``, rates scaling as ``Omega_n / Omega_0``) is found by a
    bounded scalar search.  Shot data are weighted by the binomial variance
    of the current model, refreshed a few times (iteratively reweighted).
    ``flop.values`` are pulse durations in seconds.
    """
    data = _data(flop, y, sigma, shots) if flop is not None else _data(times, y, sigma, shots)
    times, y = data.x, data.y
    if n_cut < 0:
        raise DomainError("n_cut must be non-negative")
    freqs = blue_sideband_frequencies(eta, rabi_frequency, n_cut)
    span = float(np.ptp(times))
    slow_periods = span * freqs.min() / TWO_PI
    if slow_periods < 3.0:
        raise ConditioningError(f"time grid spans {slow_periods:.2f} periods of the slowest "
                                "component; at least 3 are needed", residual=math.nan)
    cond = float(np.linalg.cond(_flop_basis(times, freqs, np.zeros_like(freqs))))
    if cond > max_condition:
        raise ConditioningError(f"Fock basis is ill conditioned (condition number {cond:.3g})",
                                residual=math.nan)
    shape = freqs / freqs[0] if per_component else np.ones_like(freqs)
    fixed_gamma = gamma

    def solve(g, w):
        a = _flop_basis(times, freqs, g * shape) * w[:, None]
        soft = 10.0 * float(np.sqrt(np.mean(w ** 2)))
        return _nnls_sum_to_one(a, y * w, soft)

    def best_gamma(w):
        if fixed_gamma is not None:
            return fixed_gamma
        g_max = 20.0 / span
        res = scipy.optimize.minimize_scalar(lambda g: solve(g, w)[1], bounds=(0.0, g_max),
                                             method="bounded", options={"xatol": 1e-6 * g_max})
        return float(res.x) if res.fun <= solve(0.0, w)[1] else 0.0

    if data.sigma is not None:
        w = 1.0 / data.sigma
    else:
        w = np.ones_like(y)
    gamma = best_gamma(w)
    p, chi2 = solve(gamma, w)
    if data.shots is not None and data.sigma is None:
        n = data.shots
        for _ in range(3):
            m = np.clip(_flop_basis(times, freqs, gamma * shape) @ p, 0.5 / n, 1.0 - 0.5 / n)
            w = 1.0 / np.sqrt(m * (1.0 - m) / n)
            gamma = best_gamma(w)
            p, chi2 = solve(gamma, w)
    a = _flop_basis(times, freqs, gamma * shape) * w[:, None]
    active = p > 0
    err = np.zeros_like(p)
    if np.any(active):
        aa = a[:, active]
        cov = np.linalg.pinv(aa.T @ aa)
        if data.shots is None and data.sigma is None:
            dof = max(len(y) - int(active.sum()) - 1, 1)
            cov = cov * (float(np.sum((aa @ p[active] - y * w) ** 2)) / dof)
        err[active] = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return FlopAnalysis(p, err, gamma * shape, chi2, freqs, cond)


def flop_periodogram(flop, frequencies_hz=None, times=None, y=None):
    """Lomb-Scargle power of a flop signal at cycle frequencies ``frequencies_hz``."""
    if flop is not None:
        times, y = np.asarray(flop.values, float), np.asarray(flop.p_est, float)
    if frequencies_hz is None:
        span = np.ptp(times)
        nyquist = 0.5 / np.median(np.diff(np.sort(times)))
        frequencies_hz = np.linspace(0.25 / span, nyquist, 512)
    frequencies_hz = np.asarray(frequencies_hz, float)
    power = scipy.signal.lombscargle(times, y - np.mean(y), TWO_PI * frequencies_hz,
                                     normalize=True)
    return frequencies_hz, power


# --- Ramsey fringes ---------------------------------------------------------------

def _pulse_propagators(rabi, detuning, gamma, duration):
    """Bloch-vector (u, v, w) propagators of a driven, dephased pulse; shape (k, 3, 3)."""
    m = np.zeros(detuning.shape + (3, 3))
    m[:, 0, 0] = m[:, 1, 1] = -gamma
    m[:, 0, 1] = detuning
    m[:, 1, 0] = -detuning
    m[:, 1, 2] = -rabi
    m[:, 2, 1] = rabi
    return scipy.linalg.expm(m * duration)


def ramsey_signal(detuning, area, pulse_duration, gap, gamma=0.0):
    """Excitation after two equal pulses separated by a free-precession ``gap``.

    ``detuning`` in rad/s (array), ``area`` is the resonant pulse area of each
    pulse, and dephasing (coherence decay rate ``gamma``) acts during pulses
    and gap alike.  This is the exact two-level propagator, not the ideal
    pi/2 approximation.
    """
    detuning = np.atleast_1d(np.asarray(detuning, float))
    pulse = _pulse_propagators(area / pulse_duration, detuning, gamma, pulse_duration)
    r = pulse[:, :, 2] * -1.0  # start in |S>: (u, v, w) = (0, 0, -1)
    # free precession: rotation about z by detuning*gap with coherence decay
    c, s = np.cos(detuning * gap), np.sin(detuning * gap)
    damp = math.exp(-gamma * gap)
    u = damp * (c * r[:, 0] + s * r[:, 1])
    v = damp * (-s * r[:, 0] + c * r[:, 1])
    r = np.column_stack([u, v, r[:, 2]])
    w = np.einsum("kj,kj->k", pulse[:, 2, :], r)
    return 0.5 * (1.0 + w)


def ramsey_gap_signal(gaps, detuning, area, pulse_duration, gamma=0.0):
    return np.array([ramsey_signal([detuning], area, pulse_duration, g, gamma)[0]
                     for g in np.atleast_1d(gaps)])


@dataclass(frozen=True)
class RamseyFit:
    fringe_period: float  # Hz of detuning (detuning scans) or s of gap (wait scans)
    contrast: float
    decay_rate: float  # coherence decay rate, 1/s
    area_error: float  # fractional excess over a pi/2 pulse
    center: float  # rad/s
    area: float
    errors: dict = field(default_factory=dict)
    residual: float = math.nan

    def decay_constant(self, convention="rate"):
        """The decay rate expressed as a quoted "X Hz" number under ``convention``."""
        try:
            return self.decay_rate / RAMSEY_DECAY_CONVENTIONS[convention]
        except KeyError:
            raise DomainError(f"unknown ramsey_decay_convention {convention!r}") from None

    def report_rows(self, convention="rate"):
        factor = RAMSEY_DECAY_CONVENTIONS[convention]
        return [ReportRow("fringe_period", self.fringe_period),
                ReportRow("contrast", self.contrast),
                ReportRow("decay_rate", self.decay_rate, self.errors.get("gamma", 0.0)),
                ReportRow(f"decay_constant_{convention}", self.decay_rate / factor,
                          self.errors.get("gamma", 0.0) / factor),
                ReportRow("area_error", self.area_error, self.errors.get("area_error", 0.0)),
                ReportRow("center_hz", self.center / TWO_PI, self.errors.get("center", 0.0) / TWO_PI),
                ReportRow("deviance", self.residual)]


def _fringe_period(x, curve):
    peaks, _ = scipy.signal.find_peaks(curve)
    if len(peaks) < 2:
        return math.nan
    return float(np.median(np.diff(x[peaks])))


def fit_ramsey(scan, pulse_duration, gap, detuning=0.0, x=None, y=None, sigma=None, shots=None):
    """Fit a Ramsey scan with the exact two-pulse model.

    A detuning scan (values in Hz, the same detuning on both pulses) fits
    pulse area, decay rate and line centre.  A wait scan (values in s) fits
    pulse area, decay rate and a detuning offset around the known
    ``detuning`` (rad/s).  ``pulse_duration`` and ``gap`` are the known
    timings in seconds (``gap`` is ignored for wait scans).
    """
    if scan is not None:
        data = _data(scan)
        kind = "wait" if scan.parameter == "wait" else "detuning"
    else:
        data = _data(x, y, sigma, shots)
        kind = "detuning"
    x = data.x
    t_eff = gap + pulse_duration if kind == "detuning" else float(np.ptp(x))
    if kind == "detuning":
        xs = TWO_PI * x

        def model(q):
            return ramsey_signal(xs - q[2], q[0], pulse_duration, gap, q[1])
    else:
        def model(q):
            return ramsey_gap_signal(x, detuning - q[2], q[0], pulse_duration, q[1])

    # seed the decay from the visible fringe amplitude
    amp = float(np.percentile(data.y, 95) - np.percentile(data.y, 5))
    g0 = -math.log(min(max(amp, 0.05), 0.95)) / (gap + pulse_duration)
    lim = math.pi / t_eff
    lo = [1e-3, 0.0, -lim]
    hi = [math.pi - 1e-3, 50.0 / t_eff + 10.0 * g0, lim]
    # the pulse envelope off resonance separates theta from pi - theta: start on both sides
    starts = [(a0, g0, 0.0) for a0 in (0.4 * math.pi, 0.6 * math.pi)]
    q, chi2, errs = _fit(model, data, starts, lo, hi, simplex_iter=100)
    area, gamma, center = (float(v) for v in q)
    if kind == "detuning":
        axis = np.linspace(-3.0 * lim, 3.0 * lim, 601)
        curve = ramsey_signal(axis, area, pulse_duration, gap, gamma)
        period = _fringe_period(axis / TWO_PI, curve)
    else:
        axis = np.linspace(0.0, 6.0 * math.pi / max(abs(detuning - center), 1e-9), 601)
        curve = ramsey_gap_signal(axis, detuning - center, area, pulse_duration, gamma)
        period = _fringe_period(axis, curve)
    contrast = float(np.clip(curve.max() - curve.min(), 0.0, 1.0))
    errors = {"area_error": errs[0] / (math.pi / 2), "gamma": errs[1], "center": errs[2]}
    return RamseyFit(period, contrast, gamma, area / (math.pi / 2) - 1.0, center, area, errors, chi2)


# --- heating -------------------------------------------------------------------------

@dataclass(frozen=True)
class HeatingFit:
    rate: float  # quanta / s
    rate_stderr: float
    intercept: float
    intercept_stderr: float
    negative_flag: bool

    def report_rows(self):
        return [ReportRow("heating_rate", self.rate, self.rate_stderr),
                ReportRow("nbar_at_zero", self.intercept, self.intercept_stderr),
                ReportRow("negative_slope_flag", float(self.negative_flag))]


def heating_rate(waits, nbar, nbar_err=None):
    """Weighted linear regression of mean phonon number against wait time.

    A slope more than two standard errors below zero is flagged.
    """
    t = np.asarray(waits, float)
    n = np.asarray(nbar, float)
    if len(t) < 3 or len(np.unique(t)) < 3:
        raise DomainError("heating-rate fit needs at least three distinct wait times")
    weighted = nbar_err is not None and np.all(np.asarray(nbar_err) > 0)
    wts = 1.0 / np.asarray(nbar_err, float) ** 2 if weighted else np.ones_like(t)
    s, sx, sy = wts.sum(), (wts * t).sum(), (wts * n).sum()
    sxx, sxy = (wts * t * t).sum(), (wts * t * n).sum()
    det = s * sxx - sx ** 2
    slope = (s * sxy - sx * sy) / det
    intercept = (sxx * sy - sx * sxy) / det
    var_slope, var_int = s / det, sxx / det
    if not weighted:
        chi2 = float(np.sum((n - slope * t - intercept) ** 2))
        var_slope *= chi2 / (len(t) - 2)
        var_int *= chi2 / (len(t) - 2)
    err = math.sqrt(var_slope)
    return HeatingFit(float(slope), err, float(intercept), math.sqrt(var_int),
                      bool(slope < -2.0 * err))


def nbar_from_point_pairs(red, blue):
    """Per-point thermometry for paired red/blue scans sharing one grid (e.g. wait scans)."""
    if len(red) != len(blue) or not np.allclose(red.values, blue.values):
        raise DomainError("red and blue scans must share the same grid")
    sr = shot_sigma(red.p_est, red.shots)
    sb = shot_sigma(blue.p_est, blue.shots)
    out = []
    for i in range(len(red)):
        out.append(sideband_thermometry(red.p_est[i], 0.0 if sr is None else sr[i],
                                        blue.p_est[i], 0.0 if sb is None else sb[i]))
    return out


def heating_from_scans(red, blue, iterations=3):
    """Heating rate from red/blue wait scans (thermometry at every wait time).

    Per-point errors estimated from the noisy ratios themselves favour points
    whose ratio fluctuated low, which biases the slope down.  The weights are
    therefore refreshed from the fitted line (and a quadratic smooth of the
    blue heights) a few times before the final regression.
    """
    therm = nbar_from_point_pairs(red, blue)
    t = np.asarray(red.values, float)
    nbar = np.array([th.nbar for th in therm])
    err = np.array([th.nbar_stderr for th in therm])
    ok = np.isfinite(nbar)
    if np.any(err[ok] <= 0):
        return heating_rate(t[ok], nbar[ok]), therm
    fit = heating_rate(t[ok], nbar[ok], err[ok])
    n_r = np.asarray(red.shots, float)
    n_b = np.asarray(blue.shots, float)
    blue_curve = np.polyval(np.polyfit(t, blue.p_est, min(2, len(t) - 1)), t)
    for _ in range(iterations):
        pred = np.clip(fit.intercept + fit.rate * t, 0.0, None)
        ratio = pred / (1.0 + pred)
        b = np.clip(blue_curve, 0.5 / n_b, 1.0)
        a = ratio * b
        s_r = np.sqrt(np.clip(a * (1.0 - a), 0.25 / n_r, None) / n_r)
        s_b = np.sqrt(np.clip(b * (1.0 - b), 0.25 / n_b, None) / n_b)
        s_ratio = np.sqrt(s_r ** 2 + ratio ** 2 * s_b ** 2) / b
        err = s_ratio / (1.0 - ratio) ** 2
        fit = heating_rate(t[ok], nbar[ok], err[ok])
    return fit, therm
