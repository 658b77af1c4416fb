"""Laser-driven and dissipative time evolution of the spin x Fock state.

States are stored in the interaction picture with respect to both the
atomic transition and the motional mode.  A drive with laser detuning
``delta`` (from the carrier) couples |S,n> to |D,n+s> with strength
``(Omega/2) <n+s|exp(i eta (a + a^dag))|n>`` and oscillation phase
``exp(i((s*omega_trap - delta) t + phase))``, where ``t`` is the absolute
sequence clock.  This keeps the laser phase coherent across waits, which is
what produces Ramsey fringes.

Two propagation routes are provided:

* ``method="exact"`` moves to a diagonal co-rotating frame in which the
  sideband-expanded Hamiltonian is time independent and exponentiates it.
  Dissipation during a pulse is added by symmetric (Strang) splitting; the
  dissipators are invariant under the frame change.
* ``method="rk4"`` integrates the time-dependent interaction-picture
  equation with a classical fixed-step Runge-Kutta scheme.

The two routes share no propagation code and are used to check each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse

from .constants import TWO_PI
from .core import (FockSpace, PhononDistribution, QuantumState, coupling_band,
                   coupling_strength)
from .errors import DomainError, IntegratorError

DEFAULT_RABI = TWO_PI * 250e3
DEFAULT_SIDEBAND_ORDER = 2
MAX_RK4_STEPS = 5_000_000
MAX_SPLIT_STEPS = 200_000

TARGET_ORDERS = {"carrier": 0, "bsb": 1, "rsb": -1}

# how a quoted "decay constant of X kHz" becomes a rate in 1/s
RAMSEY_DECAY_CONVENTIONS = {"rate": 1.0, "angular": TWO_PI}


@dataclass(frozen=True)
class Pulse:
    """One 729 nm pulse.  Exactly one of ``area`` (rad) or ``duration`` (s) is set.

    ``mode`` names the motional mode the sideband refers to (``None`` for a
    carrier pulse means "the simulated mode").  ``extra_detuning`` is added
    on top of the target's nominal detuning.
    """

    target: str
    area: float | None = None
    duration: float | None = None
    phase: float = 0.0
    rabi_frequency: float = DEFAULT_RABI
    extra_detuning: float = 0.0
    mode: str | None = None

    def __post_init__(self):
        if self.target not in TARGET_ORDERS:
            raise DomainError(f"unknown pulse target {self.target!r}")
        if (self.area is None) == (self.duration is None):
            raise DomainError("a pulse needs exactly one of area or duration")
        if self.rabi_frequency <= 0:
            raise DomainError("Rabi frequency must be positive")
        if self.duration is not None and self.duration < 0:
            raise DomainError("pulse duration must be non-negative")

    @property
    def order(self):
        return TARGET_ORDERS[self.target]

    def laser_detuning(self, omega_trap):
        return self.order * omega_trap + self.extra_detuning

    def reference_coupling(self, eta):
        """|M| of the transition the area refers to: n=0 for carrier/blue, n=1 -> 0 for red."""
        if self.order >= 0:
            return coupling_strength(0, self.order, eta)
        return coupling_strength(1, -1, eta)

    def pulse_duration(self, eta):
        if self.duration is not None:
            return self.duration
        return self.area / (self.rabi_frequency * self.reference_coupling(eta))


@dataclass(frozen=True)
class DriveTerm:
    """Sideband-order-``order`` component of a drive.

    ``coupling[n]`` is (Omega/2) <n+order|D(i eta)|n>, zero where n+order
    falls outside the truncated space; ``detuning`` is order*omega_trap - delta.
    """

    order: int
    coupling: np.ndarray
    detuning: float
    phase: float = 0.0

    @property
    def max_coupling(self):
        return float(np.max(np.abs(self.coupling))) if self.coupling.size else 0.0


@dataclass(frozen=True)
class NoiseModel:
    dephasing_rate: float = 0.0  # coherence decays as exp(-rate t)
    d_decay_rate: float = 0.0
    heating_rate: float = 0.0  # quanta / s

    def __post_init__(self):
        if min(self.dephasing_rate, self.d_decay_rate, self.heating_rate) < 0:
            raise DomainError("noise rates must be non-negative")

    @property
    def is_zero(self):
        return self.dephasing_rate == 0 and self.d_decay_rate == 0 and self.heating_rate == 0

    @classmethod
    def from_decay_constant(cls, value_hz, convention="rate", **kwargs):
        """Dephasing from a quoted decay constant (e.g. "2 kHz") under a named convention."""
        try:
            factor = RAMSEY_DECAY_CONVENTIONS[convention]
        except KeyError:
            raise DomainError(f"unknown ramsey_decay_convention {convention!r}") from None
        return cls(dephasing_rate=factor * value_hz, **kwargs)


@dataclass(frozen=True)
class CoolingParams:
    A_minus: float
    A_plus: float
    duration: float

    def __post_init__(self):
        if not self.A_minus > self.A_plus >= 0:
            raise DomainError("cooling needs A_minus > A_plus >= 0")
        if self.duration < 0:
            raise DomainError("cooling duration must be non-negative")

    @property
    def steady_state_nbar(self):
        return self.A_plus / (self.A_minus - self.A_plus)

    @classmethod
    def for_steady_state(cls, nbar, A_minus=1e4, duration=5e-3):
        """Rates whose steady state has mean occupation ``nbar``."""
        return cls(A_minus, A_minus * nbar / (1.0 + nbar), duration)

    @classmethod
    def from_laser(cls, rabi_frequency, eta, linewidth, omega_trap, duration, emission_eta=None):
        """Weak-drive resolved-sideband rates for a laser on the red sideband.

        ``linewidth`` is the effective (854 nm broadened) width of the D level.
        Cooling comes from resonant red-sideband absorption; heating from
        off-resonant blue-sideband absorption and from carrier absorption
        followed by emission on a sideband.
        """
        if emission_eta is None:
            emission_eta = eta

        def lorentz(detuning):
            return (rabi_frequency ** 2 / 4.0) * linewidth / (detuning ** 2 + linewidth ** 2 / 4.0)

        a_minus = eta ** 2 * lorentz(0.0)
        a_plus = eta ** 2 * lorentz(2.0 * omega_trap) + emission_eta ** 2 * lorentz(omega_trap)
        return cls(a_minus, a_plus, duration)


DEFAULT_COOLING = CoolingParams.for_steady_state(1e-3)


def build_drive(pulse, eta, omega_trap, s_max=DEFAULT_SIDEBAND_ORDER, n_max=20):
    """Sideband expansion of ``pulse``: terms for s = -s_max..s_max (carrier included)."""
    if eta < 0:
        raise DomainError("Lamb-Dicke factor must be non-negative")
    if s_max < 1:
        raise DomainError("s_max must be at least 1")
    delta = pulse.laser_detuning(omega_trap)
    half = 0.5 * pulse.rabi_frequency
    return [DriveTerm(s, half * coupling_band(s, eta, n_max), s * omega_trap - delta, pulse.phase)
            for s in range(-s_max, s_max + 1)]


def resonant_term(terms):
    """The single term with the smallest oscillation detuning."""
    return min(terms, key=lambda t: abs(t.detuning))


def _frame(terms, n_max):
    """Diagonal generator G with G(D,n+s) - G(S,n) = detuning_s for every active term."""
    active = [t for t in terms if t.max_coupling > 0]
    orders = sorted({t.order for t in active})
    if not active:
        return np.zeros(2 * (n_max + 1))
    if len(orders) == 1:
        nu, offset = 0.0, active[0].detuning
    else:
        a = np.array([[t.order, 1.0] for t in active])
        b = np.array([t.detuning for t in active])
        (nu, offset), *_ = np.linalg.lstsq(a, b, rcond=None)
        scale = max(1.0, np.max(np.abs(b)))
        if np.max(np.abs(a @ np.array([nu, offset]) - b)) > 1e-9 * scale:
            raise DomainError("drive terms do not share one trap frequency and laser detuning")
    n = np.arange(n_max + 1)
    return np.concatenate([nu * n, nu * n + offset])


def _coupling_matrix(terms, n_max):
    """Sum over terms of e^{i phase} sigma_+ (x) K_s as a full matrix (no h.c.)."""
    f = n_max + 1
    a = np.zeros((2 * f, 2 * f), dtype=complex)
    for t in terms:
        s = t.order
        for n in range(f):
            m = n + s
            if 0 <= m < f and t.coupling[n] != 0:
                a[f + m, n] += t.coupling[n] * np.exp(1j * t.phase)
    return a


def rotating_frame_hamiltonian(terms, n_max):
    """(H_R, G): time-independent Hamiltonian and the diagonal frame generator."""
    g = _frame(terms, n_max)
    a = _coupling_matrix(terms, n_max)
    return np.diag(g).astype(complex) + a + a.conj().T, g


def propagator(terms, n_max, duration, t0=0.0):
    """Interaction-picture unitary V with rho(t0+T) = V rho(t0) V^dag."""
    h, g = rotating_frame_hamiltonian(terms, n_max)
    vals, vecs = np.linalg.eigh(h)
    u = (vecs * np.exp(-1j * vals * duration)) @ vecs.conj().T
    return np.exp(1j * g * (t0 + duration))[:, None] * u * np.exp(-1j * g * t0)[None, :]


def interaction_hamiltonian(terms, n_max, t):
    f = n_max + 1
    a = np.zeros((2 * f, 2 * f), dtype=complex)
    for term in terms:
        s = term.order
        phase = np.exp(1j * (term.detuning * t + term.phase))
        lo, hi = max(0, -s), min(f, f - s)
        idx = np.arange(lo, hi)
        a[f + idx + s, idx] += term.coupling[idx] * phase
    return a + a.conj().T


def rk4_step_size(terms):
    """min(2 pi / (20 max|detuning|), 2 pi / (40 Omega)) with Omega = 2 max coupling."""
    det = max((abs(t.detuning) for t in terms if t.max_coupling > 0), default=0.0)
    rabi = 2.0 * max((t.max_coupling for t in terms), default=0.0)
    candidates = [TWO_PI / (20.0 * det)] if det > 0 else []
    if rabi > 0:
        candidates.append(TWO_PI / (40.0 * rabi))
    return min(candidates) if candidates else math.inf


def _rk4(rhs, rho, t0, duration, step):
    if duration == 0:
        return rho
    n_steps = max(1, math.ceil(duration / step)) if math.isfinite(step) else 1
    if n_steps > MAX_RK4_STEPS:
        raise IntegratorError(f"step-size underflow: {n_steps} RK4 steps required")
    h = duration / n_steps
    t = t0
    for _ in range(n_steps):
        k1 = rhs(t, rho)
        k2 = rhs(t + 0.5 * h, rho + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, rho + 0.5 * h * k2)
        k4 = rhs(t + h, rho + h * k3)
        rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return rho


def evolve_unitary(state, terms, duration, t0=0.0, method="exact", step=None, tol=1e-8):
    """Closed-system evolution of ``state`` under ``terms`` for ``duration`` seconds."""
    if duration < 0:
        raise DomainError("duration must be non-negative")
    n_max = state.n_max
    if method == "exact":
        v = propagator(terms, n_max, duration, t0)
        rho = v @ state.rho @ v.conj().T
    elif method == "rk4":
        def rhs(t, r):
            h = interaction_hamiltonian(terms, n_max, t)
            return -1j * (h @ r - r @ h)
        rho = _rk4(rhs, state.rho, t0, duration, step or rk4_step_size(terms))
    else:
        raise DomainError(f"unknown method {method!r}")
    return _checked(rho, n_max, tol)


def evolve_ket(psi, terms, n_max, duration, t0=0.0):
    return propagator(terms, n_max, duration, t0) @ psi


# --- dissipation -------------------------------------------------------------

@lru_cache(maxsize=64)
def _heating_propagator(rate, n_max, dt):
    """Sparse superoperator propagating one Fock block under rate*(D[a] + D[a^dag]).

    The generator couples rho[n, m] only to rho[n +/- 1, m +/- 1], so every
    diagonal offset k = m - n evolves independently under a tridiagonal
    matrix; the blocks are exponentiated separately and assembled over the
    row-major flattened block.
    """
    a = FockSpace(n_max).annihilation()
    a_dag_a = np.diag(a.T @ a)
    a_a_dag = np.diag(a @ a.T)
    f = n_max + 1
    rows_out, cols_out, vals_out = [], [], []
    for k in range(-(f - 1), f):
        rows = np.arange(f - abs(k)) + max(-k, 0)
        cols = rows + k
        size = rows.size
        gen = np.zeros((size, size))
        for j in range(size):
            n, m = rows[j], cols[j]
            gen[j, j] = -0.5 * (a_dag_a[n] + a_dag_a[m] + a_a_dag[n] + a_a_dag[m])
            if j + 1 < size:
                gen[j, j + 1] = math.sqrt((n + 1) * (m + 1))
            if j > 0:
                gen[j, j - 1] = math.sqrt(n * m)
        prop = scipy.linalg.expm(rate * dt * gen)
        flat = rows * f + cols
        rows_out.append(np.repeat(flat, size))
        cols_out.append(np.tile(flat, size))
        vals_out.append(prop.ravel())
    return scipy.sparse.csr_matrix(
        (np.concatenate(vals_out), (np.concatenate(rows_out), np.concatenate(cols_out))),
        shape=(f * f, f * f))


def _apply_heating(blocks, rate, n_max, dt):
    prop = _heating_propagator(float(rate), int(n_max), float(dt))
    f = n_max + 1
    stacked = np.stack([b.reshape(f * f) for b in blocks], axis=1)
    out = prop @ stacked
    return [out[:, i].reshape(f, f) for i in range(len(blocks))]


def apply_dissipation(rho, noise, n_max, dt):
    """Exact propagation for ``dt`` under the dissipators alone.

    Dephasing, D-state decay (phonon conserving) and heating commute with
    each other, so they are applied one after the other.
    """
    f = n_max + 1
    ss, sd, ds, dd = rho[:f, :f], rho[:f, f:], rho[f:, :f], rho[f:, f:]
    coh = math.exp(-(noise.dephasing_rate + 0.5 * noise.d_decay_rate) * dt)
    keep = math.exp(-noise.d_decay_rate * dt)
    ss = ss + (1.0 - keep) * dd
    dd = keep * dd
    sd, ds = coh * sd, coh * ds
    if noise.heating_rate > 0:
        ss, sd, ds, dd = _apply_heating([ss, sd, ds, dd], noise.heating_rate, n_max, dt)
    return np.block([[ss, sd], [ds, dd]])


def _jump_operators(noise, n_max):
    f = n_max + 1
    eye_f = np.eye(f)
    sz = np.diag([1.0, -1.0])
    sm = np.array([[0.0, 1.0], [0.0, 0.0]])  # |S><D|
    a = FockSpace(n_max).annihilation()
    ops = []
    if noise.dephasing_rate:
        ops.append((0.5 * noise.dephasing_rate, np.kron(sz, eye_f)))
    if noise.d_decay_rate:
        ops.append((noise.d_decay_rate, np.kron(sm, eye_f)))
    if noise.heating_rate:
        ops.append((noise.heating_rate, np.kron(np.eye(2), a)))
        ops.append((noise.heating_rate, np.kron(np.eye(2), a.T)))
    return ops


def lindblad_rhs(rho, hamiltonian, jumps):
    out = -1j * (hamiltonian @ rho - rho @ hamiltonian)
    for rate, c in jumps:
        cd = c.conj().T
        cdc = cd @ c
        out += rate * (c @ rho @ cd - 0.5 * (cdc @ rho + rho @ cdc))
    return out


def _effective_coupling(term):
    """Coupling scale of a term for the splitting error; far-detuned terms act only at c^2/detuning."""
    c = term.max_coupling
    if c == 0:
        return 0.0
    return c * min(1.0, c / abs(term.detuning)) if term.detuning else c


def _splitting_steps(terms, noise, state, duration, tol):
    g = max((_effective_coupling(t) for t in terms), default=0.0)
    n_occ = state.mean_phonon + 1.0
    gamma = noise.dephasing_rate + noise.d_decay_rate + noise.heating_rate * (2 * n_occ + 1)
    if g == 0 or gamma == 0 or duration == 0:
        return 1
    # Strang splitting error ~ gamma * duration * (g dt)^2 / 12
    dt = min(duration, 0.2 / g, math.sqrt(12.0 * tol / (gamma * duration)) / g)
    return min(MAX_SPLIT_STEPS, max(1, math.ceil(duration / dt)))


def evolve_lindblad(state, terms, noise, duration, t0=0.0, method="exact", step=None, tol=1e-8,
                    split_tol=1e-6):
    """Open-system evolution with dephasing, phonon-conserving D decay and heating."""
    if duration < 0:
        raise DomainError("duration must be non-negative")
    n_max = state.n_max
    if method == "exact":
        if not terms or all(t.max_coupling == 0 for t in terms):
            rho = apply_dissipation(state.rho, noise, n_max, duration)
        elif noise.is_zero:
            return evolve_unitary(state, terms, duration, t0, tol=tol)
        else:
            n_steps = _splitting_steps(terms, noise, state, duration, split_tol)
            dt = duration / n_steps
            h, g = rotating_frame_hamiltonian(terms, n_max)
            vals, vecs = np.linalg.eigh(h)
            u = (vecs * np.exp(-1j * vals * dt)) @ vecs.conj().T
            ud = u.conj().T
            w0 = np.exp(-1j * g * t0)
            rho = w0[:, None] * state.rho * w0.conj()[None, :]
            rho = apply_dissipation(rho, noise, n_max, 0.5 * dt)
            for i in range(n_steps):
                rho = u @ rho @ ud
                rho = apply_dissipation(rho, noise, n_max, dt if i < n_steps - 1 else 0.5 * dt)
            w1 = np.exp(1j * g * (t0 + duration))
            rho = w1[:, None] * rho * w1.conj()[None, :]
    elif method == "rk4":
        jumps = _jump_operators(noise, n_max)

        def rhs(t, r):
            return lindblad_rhs(r, interaction_hamiltonian(terms, n_max, t), jumps)

        if step is None:
            step = rk4_step_size(terms)
            rates = sum(r * np.linalg.norm(c, 2) ** 2 for r, c in jumps)
            if rates > 0:
                step = min(step, TWO_PI / (40.0 * rates))
        rho = _rk4(rhs, state.rho, t0, duration, step)
    else:
        raise DomainError(f"unknown method {method!r}")
    return _checked(rho, n_max, tol)


def _checked(rho, n_max, tol):
    herm_err = np.max(np.abs(rho - rho.conj().T))
    if herm_err > 1e-8:
        raise IntegratorError(f"Hermiticity lost (error {herm_err:.2e})")
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if abs(tr - 1.0) > 1e-8:
        raise IntegratorError(f"trace drifted to {tr:.12g}")
    min_eig = np.linalg.eigvalsh(rho).min()
    if min_eig < -1e-6:
        raise IntegratorError(f"positivity violated (min eigenvalue {min_eig:.2e}); "
                              "tighten the integrator tolerance")
    return QuantumState(rho, n_max, validate=False)


# --- sideband cooling --------------------------------------------------------

def cooling_rate_matrix(params, n_max):
    """Q with dp/dt = Q p; columns sum to zero so total probability is conserved."""
    am, ap = params.A_minus, params.A_plus
    n = np.arange(n_max + 1, dtype=float)
    q = np.zeros((n_max + 1, n_max + 1))
    q[np.arange(n_max), np.arange(1, n_max + 1)] = am * n[1:]
    q[np.arange(1, n_max + 1), np.arange(n_max)] = ap * n[1:]
    diag = -am * n - ap * (n + 1)
    diag[-1] = -am * n[-1]  # no heating out of the truncated space
    q[np.diag_indices(n_max + 1)] = diag
    return q


def sideband_cool(distribution, params):
    """Evolve a phonon distribution under the red-sideband cooling rate equations."""
    p = distribution.p
    q = cooling_rate_matrix(params, distribution.n_max)
    out = scipy.linalg.expm(q * params.duration) @ p
    out = np.clip(out, 0.0, None)
    return PhononDistribution(out / out.sum())


def cooling_steady_state(params, n_max):
    """Null vector of the rate matrix, normalized."""
    q = cooling_rate_matrix(params, n_max)
    _, _, vh = np.linalg.svd(q)
    p = np.abs(vh[-1])
    return PhononDistribution(p / p.sum())


# --- gate speed ----------------------------------------------------------------

@dataclass(frozen=True)
class GateSpeedResult:
    times: np.ndarray
    infidelity: np.ndarray
    envelope: np.ndarray
    detunings: np.ndarray  # calibrated laser detunings, rad/s
    t_min: float  # math.inf when the target is not reached on the grid
    fidelity_target: float


def monotone_envelope(values):
    """Smallest non-increasing curve lying on or above ``values`` (running max from the right)."""
    return np.maximum.accumulate(np.asarray(values)[::-1])[::-1]


def first_crossing(times, envelope, threshold):
    """First time the (non-increasing) envelope reaches ``threshold``, linearly interpolated."""
    below = np.nonzero(envelope <= threshold)[0]
    if below.size == 0:
        return math.inf
    i = below[0]
    if i == 0:
        return float(times[0])
    t0, t1, e0, e1 = times[i - 1], times[i], envelope[i - 1], envelope[i]
    if e0 == e1:
        return float(t1)
    return float(t0 + (e0 - threshold) * (t1 - t0) / (e0 - e1))


def light_shifted_resonance(terms_at, omega_trap, n_max):
    """Laser detuning restoring |S,0> <-> |D,1> resonance, from 2nd-order level shifts."""
    terms = terms_at(omega_trap)
    h, _ = rotating_frame_hamiltonian(terms, n_max)
    f = n_max + 1
    s0, d1 = 0, f + 1
    energies = np.diag(h).real
    shifts = []
    for i in (s0, d1):
        others = [j for j in range(2 * f) if j not in (s0, d1) and h[i, j] != 0]
        shifts.append(sum(abs(h[i, j]) ** 2 / (energies[i] - energies[j]) for j in others))
    return omega_trap + shifts[1] - shifts[0]


def blue_pi_infidelity(eta, omega_trap, rabi, duration, delta, s_max, n_max):
    pulse = Pulse("bsb", duration=duration, rabi_frequency=rabi,
                  extra_detuning=delta - omega_trap)
    terms = build_drive(pulse, eta, omega_trap, s_max, n_max)
    psi = np.zeros(2 * (n_max + 1), dtype=complex)
    psi[0] = 1.0
    psi = evolve_ket(psi, terms, n_max, duration)
    return 1.0 - abs(psi[n_max + 2]) ** 2


def gate_speed_scan(eta, omega_trap, fidelity_target, t_grid, s_max=DEFAULT_SIDEBAND_ORDER,
                    n_max=None, calibrate=True):
    """Infidelity of a blue-sideband pi pulse |S,0> -> |D,1> versus pulse time.

    For each time t the Rabi frequency is set so that the resonant
    blue-sideband pi time equals t; carrier and the other sidebands up to
    ``s_max`` stay in the Hamiltonian.  With ``calibrate`` the laser
    detuning is re-centred on the light-shifted sideband (as one would in the
    lab) before the infidelity is read off.
    """
    import scipy.optimize

    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0 or np.any(t_grid <= 0) or np.any(np.diff(t_grid) <= 0):
        raise DomainError("time grid must be positive and strictly ascending")
    if not 0 < fidelity_target < 1:
        raise DomainError("fidelity target must lie in (0, 1)")
    if n_max is None:
        n_max = 2 * s_max + 6
    m01 = coupling_strength(0, 1, eta)
    infid, dets = [], []
    for t in t_grid:
        rabi = math.pi / (t * m01)

        def cost(delta, t=t, rabi=rabi):
            return blue_pi_infidelity(eta, omega_trap, rabi, t, delta, s_max, n_max)

        delta = omega_trap
        if calibrate:
            def terms_at(d, t=t, rabi=rabi):
                p = Pulse("bsb", duration=t, rabi_frequency=rabi, extra_detuning=d - omega_trap)
                return build_drive(p, eta, omega_trap, s_max, n_max)
            delta0 = light_shifted_resonance(terms_at, omega_trap, n_max)
            width = 0.5 * math.pi / t
            res = scipy.optimize.minimize_scalar(cost, bounds=(delta0 - width, delta0 + width),
                                                 method="bounded",
                                                 options={"xatol": 1e-6 * width})
            delta = res.x if res.fun < cost(delta0) else delta0
        infid.append(cost(delta))
        dets.append(delta)
    infid = np.clip(np.array(infid), 0.0, 1.0)
    env = monotone_envelope(infid)
    t_min = first_crossing(t_grid, env, 1.0 - fidelity_target)
    return GateSpeedResult(t_grid, infid, env, np.array(dets), t_min, fidelity_target)
