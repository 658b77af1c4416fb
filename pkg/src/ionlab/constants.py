"""Physical constants (CODATA 2018), kept in one place so derived numbers are reproducible."""

import math

HBAR = 1.054571817e-34  # J s
ELEMENTARY_CHARGE = 1.602176634e-19  # C
EPSILON_0 = 8.8541878128e-12  # F / m
ATOMIC_MASS_UNIT = 1.66053906660e-27  # kg

TWO_PI = 2.0 * math.pi
