"""Truncated Hilbert-space primitives for one ion coupled to one motional mode.

The joint space is (electronic two-level) x (Fock space truncated at
``n_max``); basis index ``e * (n_max + 1) + n`` with ``e = 0`` for |S> and
``e = 1`` for |D>.  All frequencies are angular (rad/s).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .constants import ATOMIC_MASS_UNIT, HBAR, TWO_PI
from .errors import DomainError

AXES = ("x", "y", "z")


class DopplerClampWarning(UserWarning):
    """Raised when the Doppler-limit formula would give a negative occupation."""


@dataclass(frozen=True)
class IonSpecies:
    """Ion constants; ``mass`` in kg, wavelength in m, linewidth in rad/s, lifetime in s."""

    name: str
    mass: float
    qubit_wavelength: float
    dipole_linewidth: float
    d_state_lifetime: float

    def __post_init__(self):
        if self.mass <= 0:
            raise DomainError("ion mass must be positive")
        if self.qubit_wavelength <= 0:
            raise DomainError("qubit wavelength must be positive")
        if self.dipole_linewidth <= 0:
            raise DomainError("dipole linewidth must be positive")
        if self.d_state_lifetime <= 0:
            raise DomainError("D-state lifetime must be positive")

    @classmethod
    def from_amu(cls, name, mass_amu, qubit_wavelength, linewidth_hz, d_state_lifetime):
        """Build from a mass in atomic mass units and a cycle-frequency linewidth."""
        return cls(name, mass_amu * ATOMIC_MASS_UNIT, qubit_wavelength,
                   TWO_PI * linewidth_hz, d_state_lifetime)

    @property
    def wavenumber(self):
        return TWO_PI / self.qubit_wavelength

    @property
    def recoil_frequency(self):
        """hbar k^2 / 2m in rad/s."""
        return HBAR * self.wavenumber ** 2 / (2.0 * self.mass)


CA40 = IonSpecies.from_amu("ca40", 39.962591, 729.147e-9, 20e6, 1.0)

SPECIES = {"ca40": CA40, "40ca+": CA40, "ca+": CA40}


def species_by_name(name):
    try:
        return SPECIES[name.lower()]
    except KeyError:
        raise DomainError(f"unknown ion species {name!r}") from None


@dataclass(frozen=True)
class TrapConfig:
    """Secular frequencies (rad/s) and the 729 nm beam's direction cosines."""

    secular_frequencies: tuple
    laser_direction_cosines: tuple = (0.0, math.sqrt(0.5), math.sqrt(0.5))

    def __post_init__(self):
        freqs = tuple(float(w) for w in self.secular_frequencies)
        cosines = tuple(float(c) for c in self.laser_direction_cosines)
        if len(freqs) != 3 or len(cosines) != 3:
            raise DomainError("trap needs three secular frequencies and three direction cosines")
        if any(w <= 0 for w in freqs):
            raise DomainError("secular frequencies must be positive")
        if abs(sum(c * c for c in cosines) - 1.0) > 1e-12:
            raise DomainError("laser direction cosines must form a unit vector")
        object.__setattr__(self, "secular_frequencies", freqs)
        object.__setattr__(self, "laser_direction_cosines", cosines)

    @classmethod
    def from_mhz(cls, fx, fy, fz, direction=None):
        freqs = tuple(TWO_PI * f * 1e6 for f in (fx, fy, fz))
        if direction is None:
            return cls(freqs)
        return cls(freqs, tuple(direction))

    def frequency(self, axis):
        return self.secular_frequencies[AXES.index(axis)]

    def projection(self, axis):
        return self.laser_direction_cosines[AXES.index(axis)]

    @property
    def weakest_axis(self):
        return AXES[int(np.argmin(self.secular_frequencies))]


@dataclass(frozen=True)
class FockSpace:
    n_max: int

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise DomainError("Fock truncation n_max must be an integer >= 1")

    @property
    def dim(self):
        return self.n_max + 1

    def annihilation(self):
        return np.diag(np.sqrt(np.arange(1, self.dim, dtype=float)), 1)

    def creation(self):
        return self.annihilation().T.copy()

    def number(self):
        return np.diag(np.arange(self.dim, dtype=float))


def default_n_max(nbar):
    """Truncation leaving < 1e-6 thermal weight above n_max for nbar <= 20."""
    return max(20, math.ceil(4.0 * nbar + 20))


@dataclass(frozen=True)
class PhononDistribution:
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise DomainError("phonon distribution needs at least two levels")
        if np.any(p < -1e-12):
            raise DomainError("phonon probabilities must be non-negative")
        if abs(p.sum() - 1.0) > 1e-8:
            raise DomainError(f"phonon distribution not normalized (sum={p.sum():.12g})")
        p = np.clip(p, 0.0, None)
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def n_max(self):
        return self.p.size - 1

    @property
    def mean(self):
        return float(np.dot(np.arange(self.p.size), self.p))

    @property
    def p0(self):
        return float(self.p[0])


def thermal_distribution(nbar, n_max=None):
    """Thermal occupation nbar^n / (1+nbar)^(n+1) on 0..n_max.

    When truncation removes noticeable weight the geometric ratio is refitted
    so the returned distribution keeps the requested mean.
    """
    if nbar < 0:
        raise DomainError("mean phonon number must be non-negative")
    if n_max is None:
        n_max = default_n_max(nbar)
    n = np.arange(n_max + 1)
    if nbar == 0:
        p = np.zeros(n_max + 1)
        p[0] = 1.0
    else:
        p = _geometric(nbar / (1.0 + nbar), n)
        # Truncation biases the mean low; a slightly hotter geometric law restores it
        # while keeping the distribution monotone (possible while nbar < n_max/2).
        if np.dot(n, p) < nbar - 1e-13 and nbar < 0.5 * n_max:
            q = brentq(lambda q: np.dot(n, _geometric(q, n)) - nbar, nbar / (1.0 + nbar),
                       1.0 - 1e-15, xtol=1e-16, rtol=4 * np.finfo(float).eps)
            p = _geometric(q, n)
    return PhononDistribution(p)


def _geometric(q, n):
    p = q ** n
    return p / p.sum()


def lamb_dicke(species, mode_frequency, projection=1.0):
    """eta = k * projection * sqrt(hbar / (2 m omega))."""
    if mode_frequency <= 0:
        raise DomainError("mode frequency must be positive")
    if abs(projection) > 1.0 + 1e-12:
        raise DomainError("projection must satisfy |projection| <= 1")
    x0 = math.sqrt(HBAR / (2.0 * species.mass * mode_frequency))
    return abs(species.wavenumber * projection) * x0


def doppler_limit_nbar(species, mode_frequency):
    """Mean occupation at the Doppler limit, from hbar*Gamma/2 = hbar*omega*(nbar + 1/2)."""
    if mode_frequency <= 0:
        raise DomainError("mode frequency must be positive")
    nbar = species.dipole_linewidth / (2.0 * mode_frequency) - 0.5
    if nbar < 0:
        warnings.warn("Doppler limit below zero-point energy; clamped to nbar = 0",
                      DopplerClampWarning, stacklevel=2)
        return 0.0
    return nbar


def laguerre(n, alpha, x):
    """Generalized Laguerre polynomial L_n^alpha(x) by the three-term recurrence."""
    if n == 0:
        return 1.0
    prev, cur = 1.0, 1.0 + alpha - x
    for k in range(1, n):
        prev, cur = cur, ((2 * k + 1 + alpha - x) * cur - (k + alpha) * prev) / (k + 1)
    return cur


def coupling_element(n, s, eta):
    """<n+s| exp(i eta (a + a^dag)) |n>, including its phase i^|s| and sign."""
    if n < 0 or n + s < 0:
        raise DomainError(f"motional level n={n + s} does not exist")
    lo, order = min(n, n + s), abs(s)
    eta2 = eta * eta
    # sqrt(lo! / hi!) via log-gamma to stay finite for large n
    ratio = math.exp(0.5 * (math.lgamma(lo + 1) - math.lgamma(lo + order + 1)))
    value = math.exp(-0.5 * eta2) * eta ** order * ratio * laguerre(lo, order, eta2)
    return (1j ** order) * value


def coupling_strength(n, s, eta):
    """|<n+s| exp(i eta (a + a^dag)) |n>|; symmetric under (n, s) -> (n+s, -s)."""
    return abs(coupling_element(n, s, eta))


def coupling_band(s, eta, n_max):
    """Elements <n+s|D|n> for n = 0..n_max; zero where n+s leaves the truncated space."""
    out = np.zeros(n_max + 1, dtype=complex)
    for n in range(n_max + 1):
        if 0 <= n + s <= n_max:
            out[n] = coupling_element(n, s, eta)
    return out


class QuantumState:
    """Density matrix on (electronic) x (Fock, truncated at n_max).

    Instances are treated as values: the evolution functions return new
    states rather than mutating ``rho`` in place.
    """

    def __init__(self, rho, n_max, validate=True):
        self.n_max = int(n_max)
        self.rho = np.asarray(rho, dtype=complex)
        if self.rho.shape != (self.dim, self.dim):
            raise DomainError(f"rho must be {self.dim}x{self.dim} for n_max={self.n_max}")
        if validate:
            self.validate()

    @property
    def dim(self):
        return 2 * (self.n_max + 1)

    @property
    def fock_dim(self):
        return self.n_max + 1

    def validate(self, herm_tol=1e-10, trace_tol=1e-8, pos_tol=1e-8):
        rho = self.rho
        if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
            raise DomainError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > trace_tol:
            raise DomainError(f"density matrix trace {np.trace(rho).real:.12g} != 1")
        if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -pos_tol:
            raise DomainError("density matrix is not positive semidefinite")
        return self

    @classmethod
    def fock(cls, n, n_max, electronic="S"):
        if not 0 <= n <= n_max:
            raise DomainError(f"Fock level {n} outside 0..{n_max}")
        e = _electronic_index(electronic)
        rho = np.zeros((2 * (n_max + 1),) * 2, dtype=complex)
        idx = e * (n_max + 1) + n
        rho[idx, idx] = 1.0
        return cls(rho, n_max)

    @classmethod
    def ground(cls, n_max):
        return cls.fock(0, n_max, "S")

    @classmethod
    def from_distribution(cls, dist, electronic="S"):
        """Diagonal motional mixture with the ion in one electronic level."""
        e = _electronic_index(electronic)
        n_max = dist.n_max
        diag = np.zeros(2 * (n_max + 1))
        diag[e * (n_max + 1):(e + 1) * (n_max + 1)] = dist.p
        return cls(np.diag(diag).astype(complex), n_max)

    @classmethod
    def thermal(cls, nbar, n_max=None, electronic="S"):
        return cls.from_distribution(thermal_distribution(nbar, n_max), electronic)

    @classmethod
    def from_ket(cls, psi, n_max):
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()), n_max)

    @classmethod
    def product(cls, electronic_rho, motional_rho):
        motional_rho = np.asarray(motional_rho, dtype=complex)
        n_max = motional_rho.shape[0] - 1
        return cls(np.kron(np.asarray(electronic_rho, dtype=complex), motional_rho), n_max)

    def copy(self):
        return QuantumState(self.rho.copy(), self.n_max, validate=False)

    @property
    def p_d(self):
        """Population of the D electronic subspace."""
        f = self.fock_dim
        return float(np.trace(self.rho[f:, f:]).real)

    def electronic_rho(self):
        f = self.fock_dim
        r = self.rho
        return np.array([[np.trace(r[:f, :f]), np.trace(r[:f, f:])],
                         [np.trace(r[f:, :f]), np.trace(r[f:, f:])]])

    def motional_rho(self):
        f = self.fock_dim
        return self.rho[:f, :f] + self.rho[f:, f:]

    def phonon_probabilities(self):
        return np.clip(np.diag(self.motional_rho()).real, 0.0, None)

    def phonon_distribution(self):
        p = self.phonon_probabilities()
        return PhononDistribution(p / p.sum())

    @property
    def mean_phonon(self):
        return float(np.dot(np.arange(self.fock_dim), self.phonon_probabilities()))

    def population(self, electronic, n):
        idx = _electronic_index(electronic) * self.fock_dim + n
        return float(self.rho[idx, idx].real)

    def top_level_population(self):
        return float(self.phonon_probabilities()[-1])


def _electronic_index(label):
    if label in ("S", "s", 0):
        return 0
    if label in ("D", "d", 1):
        return 1
    raise DomainError(f"electronic level must be 'S' or 'D', got {label!r}")
