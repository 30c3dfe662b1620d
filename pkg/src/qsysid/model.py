"""Driven two-level atom coupled to a single lossy cavity mode.

Unit convention: every user-facing rate (g0, gamma_perp, kappa, epsilon, g)
is a frequency divided by 2*pi, in MHz. Internally each one is multiplied by
2*pi so generators are in rad/us and time is in us. kappa and gamma_perp are
field (amplitude) decay rates; the corresponding photon-flux rates are
2*kappa and 2*gamma_perp.

Basis convention: index i = 2*n + s with n the photon number (0..n_trunc)
and s = 0 (atom ground) / 1 (atom excited). Ground atom in the vacuum is
index 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParametersError

TWO_PI = 2.0 * math.pi

ATOM_GROUND = 0
ATOM_EXCITED = 1


@dataclass(frozen=True)
class ModelParams:
    """Physical rates (frequency/2pi, MHz) plus the Fock-space cutoff."""

    g0: float
    gamma_perp: float
    kappa: float
    epsilon: float
    n_trunc: int = 30

    def __post_init__(self):
        for name in ("g0", "gamma_perp", "kappa", "epsilon"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise InvalidParametersError(
                    f"{name} must be finite and >= 0, got {value}"
                )
        if self.kappa + self.gamma_perp <= 0:
            raise InvalidParametersError(
                "kappa + gamma_perp must be > 0: the model needs at least one "
                "decay channel"
            )
        if self.n_trunc < 1:
            raise InvalidParametersError(f"n_trunc must be >= 1, got {self.n_trunc}")


@dataclass(frozen=True)
class ModeGeometry:
    """Standing-wave TEM00 cavity mode geometry; lengths in um."""

    wavelength: float
    waist: float
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (math.isfinite(self.wavelength) and self.wavelength > 0):
            raise InvalidParametersError(
                f"wavelength must be finite and > 0, got {self.wavelength}"
            )
        if not (math.isfinite(self.waist) and self.waist > 0):
            raise InvalidParametersError(
                f"waist must be finite and > 0, got {self.waist}"
            )
        if len(self.position) != 3:
            raise InvalidParametersError(
                f"position must have 3 components, got {len(self.position)}"
            )
        if not all(math.isfinite(v) for v in self.position):
            raise InvalidParametersError(f"position must be finite, got {self.position}")


@dataclass(frozen=True)
class Model:
    """Operator matrices on the truncated atom (x) cavity product space.

    c0 (atomic fluorescence, channel 0) and c1 (cavity emission, channel 1)
    are the collapse operators in angular units, normalized so that
    ||c_j psi||^2 is the detection rate out of the normalized state psi.
    """

    params: ModelParams
    dim: int
    op_a: np.ndarray
    op_sigma_minus: np.ndarray
    c0: np.ndarray
    c1: np.ndarray


def basis_index(n: int, s: int) -> int:
    """Flatten (photon number, atomic level) into a basis index."""
    return 2 * n + s


def basis_labels(i: int) -> tuple[int, int]:
    """Invert basis_index: index -> (photon number, atomic level)."""
    return i // 2, i % 2


def build_model(params: ModelParams) -> Model:
    """Assemble annihilation, atomic lowering, and collapse operators."""
    n_levels = params.n_trunc + 1
    dim = 2 * n_levels
    a_cavity = np.diag(np.sqrt(np.arange(1, n_levels, dtype=float)), k=1).astype(complex)
    sm_atom = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
    op_a = np.kron(a_cavity, np.eye(2, dtype=complex))
    op_sm = np.kron(np.eye(n_levels, dtype=complex), sm_atom)
    c0 = math.sqrt(2.0 * TWO_PI * params.gamma_perp) * op_sm
    c1 = math.sqrt(2.0 * TWO_PI * params.kappa) * op_a
    for op in (op_a, op_sm, c0, c1):
        op.flags.writeable = False
    return Model(params=params, dim=dim, op_a=op_a, op_sigma_minus=op_sm, c0=c0, c1=c1)


def ground_vacuum(model: Model) -> np.ndarray:
    """Amplitudes of the ground atom in the cavity vacuum (basis index 0)."""
    psi = np.zeros(model.dim, dtype=complex)
    psi[basis_index(0, ATOM_GROUND)] = 1.0
    return psi


@dataclass(frozen=True)
class EffectiveHamiltonian:
    """Non-Hermitian generator of the between-detections evolution (rad/us)."""

    matrix: np.ndarray
    g: float


def effective_hamiltonian(model: Model, g: float) -> EffectiveHamiltonian:
    """Build H(g) = i*g*(a sig+ - a^dag sig-) + i*eps*(a - a^dag)
    - i*kappa*a^dag a - i*gamma_perp*sig+ sig-, all rates angular.

    The anti-Hermitian part satisfies H - H^dag = -i*(c0^dag c0 + c1^dag c1),
    so the norm of a no-detection state decays at the total detection rate.
    """
    if not math.isfinite(g) or g < 0:
        raise InvalidParametersError(f"coupling g must be finite and >= 0, got {g}")
    p = model.params
    g_w = TWO_PI * g
    eps_w = TWO_PI * p.epsilon
    a = model.op_a
    sm = model.op_sigma_minus
    ad = a.conj().T
    sp = sm.conj().T
    h = (1j * g_w) * (a @ sp - ad @ sm)
    h += (1j * eps_w) * (a - ad)
    # damping assembled from the collapse operators (not kappa*a^dag a etc.)
    # so the decay identity in the docstring holds to the last bit
    h -= 0.5j * (model.c0.conj().T @ model.c0 + model.c1.conj().T @ model.c1)
    h.flags.writeable = False
    return EffectiveHamiltonian(matrix=h, g=g)


def coupling_at_position(geometry: ModeGeometry, g0: float) -> float:
    """Coupling at a point in the mode: g0*cos(2*pi*x/lambda)*exp(-(y^2+z^2)/w^2).

    The returned value is signed (the standing wave changes sign between
    antinodes); detection records only determine |g|, so estimation code
    should take abs() before comparing against a g >= 0 grid.
    """
    if not math.isfinite(g0) or g0 < 0:
        raise InvalidParametersError(f"g0 must be finite and >= 0, got {g0}")
    x, y, z = geometry.position
    axial = math.cos(TWO_PI * x / geometry.wavelength)
    radial = math.exp(-(y * y + z * z) / (geometry.waist * geometry.waist))
    return g0 * axial * radial
