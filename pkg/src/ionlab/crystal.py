"""Equilibrium positions and normal modes of linear Coulomb crystals.

Positions are dimensionless, in units of the length scale
``l = (e^2 / (4 pi eps0 M omega_z^2))^(1/3)``; in those units the axial
force on ion m is ``u_m - sum_{n<m} (u_m-u_n)^-2 + sum_{n>m} (u_m-u_n)^-2``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .constants import ELEMENTARY_CHARGE, EPSILON_0, HBAR
from .core import AXES
from .errors import DomainError, SolverError

MAX_IONS = 32


@dataclass(frozen=True)
class CrystalEquilibrium:
    n_ions: int
    u: np.ndarray
    length_scale: float = float("nan")

    def positions(self):
        """Axial positions in metres (requires a physical length scale)."""
        return self.u * self.length_scale


def length_scale(omega_axial, species):
    return (ELEMENTARY_CHARGE ** 2
            / (4.0 * math.pi * EPSILON_0 * species.mass * omega_axial ** 2)) ** (1.0 / 3.0)


def _axial_force(u):
    d = u[:, None] - u[None, :]
    np.fill_diagonal(d, np.inf)
    return u - np.sum(np.sign(d) / d ** 2, axis=1)


def _inverse_cubed_distances(u):
    d = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(d, np.inf)
    return 1.0 / d ** 3


def axial_hessian(u):
    inv3 = _inverse_cubed_distances(u)
    h = -2.0 * inv3
    np.fill_diagonal(h, 1.0 + 2.0 * inv3.sum(axis=1))
    return h


def radial_hessian(u, ratio_squared):
    """Transverse Hessian; ``ratio_squared = (omega_radial / omega_axial)^2``."""
    inv3 = _inverse_cubed_distances(u)
    h = inv3.copy()
    np.fill_diagonal(h, ratio_squared - inv3.sum(axis=1))
    return h


def equilibrium_positions(n_ions, omega_axial=None, species=None, tol=1e-12, max_iter=200):
    """Solve the axial force balance by damped Newton iteration.

    When ``omega_axial`` and ``species`` are given the result also carries the
    physical length scale.
    """
    if int(n_ions) != n_ions or not 1 <= n_ions <= MAX_IONS:
        raise DomainError(f"n_ions must be an integer in 1..{MAX_IONS}")
    n_ions = int(n_ions)
    ell = length_scale(omega_axial, species) if species is not None else float("nan")
    if n_ions == 1:
        return CrystalEquilibrium(1, np.zeros(1), ell)

    spacing = 2.0 * n_ions ** 0.56 / n_ions
    u = spacing * (np.arange(n_ions) - 0.5 * (n_ions - 1))
    residual = np.max(np.abs(_axial_force(u)))
    for _ in range(max_iter):
        if residual < tol:
            break
        step = np.linalg.solve(axial_hessian(u), -_axial_force(u))
        damping = 1.0
        while damping > 1e-8:
            trial = u + damping * step
            if np.all(np.diff(trial) > 0):
                trial_residual = np.max(np.abs(_axial_force(trial)))
                if trial_residual < residual:
                    break
            damping *= 0.5
        else:
            break
        u, residual = trial, trial_residual
        # the exact solution is antisymmetric; enforcing it removes round-off drift
        u = 0.5 * (u - u[::-1])
        residual = np.max(np.abs(_axial_force(u)))
    if residual >= tol:
        raise SolverError(f"equilibrium solver did not converge for N={n_ions} "
                          f"(residual {residual:.3e})", residual=residual)
    return CrystalEquilibrium(n_ions, u, ell)


@dataclass(frozen=True)
class Mode:
    frequency: float
    eigenvector: np.ndarray
    label: str
    axis: str
    curvature: float = float("nan")  # omega^2 in (rad/s)^2; negative when unstable

    @property
    def stable(self):
        return self.curvature > 0

    @property
    def name(self):
        return f"{self.label}({self.axis})"


@dataclass(frozen=True)
class ModeSpectrum:
    modes: tuple
    equilibrium: CrystalEquilibrium | None = None

    @property
    def stable(self):
        return all(m.stable for m in self.modes)

    @property
    def unstable_modes(self):
        return [m for m in self.modes if not m.stable]

    def by_axis(self, axis):
        return [m for m in self.modes if m.axis == axis]

    def mode(self, name):
        for m in self.modes:
            if m.name == name or (m.label == "com" and name == m.axis):
                return m
        raise KeyError(name)

    def __add__(self, other):
        return ModeSpectrum(self.modes + other.modes, self.equilibrium or other.equilibrium)

    def lamb_dicke_factors(self, species, direction_cosines):
        """Per-mode, per-ion Lamb-Dicke factors eta_{k,i} = k c_axis b_{k,i} x0(omega_k)."""
        out = np.zeros((len(self.modes), len(self.modes[0].eigenvector)))
        for row, m in enumerate(self.modes):
            if not m.stable:
                continue
            c = direction_cosines[AXES.index(m.axis)]
            x0 = math.sqrt(HBAR / (2.0 * species.mass * m.frequency))
            out[row] = np.abs(species.wavenumber * c * x0 * m.eigenvector)
        return out


def _fix_sign(vec):
    k = int(np.argmax(np.abs(vec) > np.abs(vec).max() - 1e-12))
    return vec if vec[k] > 0 else -vec


def axial_modes(n_ions, omega_axial, axis="z", equilibrium=None):
    if omega_axial <= 0:
        raise DomainError("axial frequency must be positive")
    eq = equilibrium or equilibrium_positions(n_ions)
    vals, vecs = np.linalg.eigh(axial_hessian(eq.u))
    modes = []
    for k in range(len(vals)):
        label = "com" if k == 0 else "breathing" if k == 1 else f"axial-{k + 1}"
        modes.append(Mode(math.sqrt(vals[k]) * omega_axial, _fix_sign(vecs[:, k]), label, axis,
                          vals[k] * omega_axial ** 2))
    return ModeSpectrum(tuple(modes), eq)


def radial_modes(n_ions, omega_radial, omega_axial, axis="x", equilibrium=None):
    """Transverse modes along ``axis``; unstable (imaginary) modes are kept and flagged.

    An unstable mode has ``curvature <= 0`` and ``frequency`` equal to the
    magnitude sqrt(|curvature|).
    """
    if omega_radial <= 0:
        raise DomainError("radial frequency must be positive")
    eq = equilibrium or equilibrium_positions(n_ions)
    if omega_axial == 0:
        # decoupled ions: every transverse mode sits at omega_radial
        vals = np.full(n_ions, omega_radial ** 2)
        vecs = np.eye(n_ions)
    else:
        vals, vecs = np.linalg.eigh(radial_hessian(eq.u, (omega_radial / omega_axial) ** 2))
        vals = vals * omega_axial ** 2
    modes = []
    for k in range(n_ions):
        from_top = n_ions - 1 - k
        label = "radial-com" if from_top == 0 else "rocking" if from_top == 1 else f"radial-{from_top + 1}"
        modes.append(Mode(math.sqrt(abs(vals[k])), _fix_sign(vecs[:, k]), label, axis, vals[k]))
    return ModeSpectrum(tuple(modes), eq)


def crystal_modes(n_ions, trap):
    """All modes of an N-ion string aligned with the trap's weakest axis."""
    crystal_axis = trap.weakest_axis
    omega_ax = trap.frequency(crystal_axis)
    eq = equilibrium_positions(n_ions)
    spectrum = axial_modes(n_ions, omega_ax, crystal_axis, eq)
    for axis in AXES:
        if axis != crystal_axis:
            spectrum = spectrum + radial_modes(n_ions, trap.frequency(axis), omega_ax, axis, eq)
    return spectrum


def physical_spacing(n_ions, omega_axial, species):
    """Axial ion positions in metres."""
    if omega_axial <= 0:
        raise DomainError("axial frequency must be positive")
    eq = equilibrium_positions(n_ions)
    return eq.u * length_scale(omega_axial, species)


@dataclass(frozen=True)
class SidebandLine:
    detuning_magnitude: float
    composition: tuple  # ((mode name, signed integer coefficient), ...)
    order: int
    alternatives: tuple = field(default=())

    @property
    def label(self):
        parts = []
        for name, c in self.composition:
            sign = "-" if c < 0 else "+"
            mag = "" if abs(c) == 1 else f"{abs(c)}*"
            parts.append(f"{sign} {mag}{name}")
        return " ".join(parts)[2:]

    def matches(self, composition):
        """True if ``composition`` (a dict or pairs) equals this line's, up to overall sign."""
        target = dict(composition)
        for comp in (self.composition,) + self.alternatives:
            d = dict(comp)
            if d == target or d == {k: -v for k, v in target.items()}:
                return True
        return False


def identify_sidebands(spectrum, max_order=2, rel_tol=1e-6):
    """All lines |sum_k c_k omega_k| with 1 <= sum |c_k| <= max_order, deduplicated."""
    modes = [m for m in spectrum.modes if m.stable]
    if not modes:
        raise DomainError("spectrum has no stable modes")
    scale = max(m.frequency for m in modes)
    candidates = []
    for order in range(1, max_order + 1):
        for combo in itertools.combinations_with_replacement(range(len(modes)), order):
            for signs in itertools.product((1, -1), repeat=order):
                if signs[0] < 0:
                    continue  # overall sign is irrelevant
                coeffs = {}
                for idx, sg in zip(combo, signs):
                    coeffs[idx] = coeffs.get(idx, 0) + sg
                coeffs = {k: v for k, v in coeffs.items() if v != 0}
                if sum(abs(v) for v in coeffs.values()) != order:
                    continue  # a +/- pair on the same mode is a lower-order line
                value = sum(c * modes[k].frequency for k, c in coeffs.items())
                if abs(value) <= rel_tol * scale:
                    continue
                if value < 0:
                    coeffs = {k: -v for k, v in coeffs.items()}
                comp = tuple((modes[k].name, c)
                             for k, c in sorted(coeffs.items(), key=lambda kv: (kv[1] < 0, kv[0])))
                candidates.append((abs(value), order, comp))
    candidates.sort(key=lambda c: (c[0], c[1]))
    lines = []
    for value, order, comp in candidates:
        if lines and abs(value - lines[-1].detuning_magnitude) <= rel_tol * max(value, 1.0):
            prev = lines[-1]
            if comp != prev.composition and comp not in prev.alternatives:
                best = min(prev.order, order)
                lines[-1] = SidebandLine(prev.detuning_magnitude, prev.composition, best,
                                         prev.alternatives + (comp,))
            continue
        lines.append(SidebandLine(value, comp, order))
    return lines


def nearest_line(lines, detuning, rel_tol=1e-3):
    """The identified line closest to ``detuning`` if within ``rel_tol``, else None."""
    best = min(lines, key=lambda ln: abs(ln.detuning_magnitude - abs(detuning)))
    if abs(best.detuning_magnitude - abs(detuning)) <= rel_tol * abs(detuning):
        return best
    return None
