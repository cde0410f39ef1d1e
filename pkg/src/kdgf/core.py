"""Phase-space data model for all-to-all sinusoidally coupled oscillators.

Phases live on the unwrapped real line (not reduced mod 2*pi) so that
winding information survives long runs; equilibrium matching depends on it.
All container types are immutable after construction and all operations are
pure, so everything here is safe to share across threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Row-chunk size for the pairwise coupling matrix.  Chunking along rows does
# not change any row's summation order, so results are bit-identical for any
# chunk size; it only caps memory at large N.
_ROW_CHUNK = 1024


def _phase_array(values, name="phases"):
    arr = np.array(values, dtype=float, copy=True)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-d sequence")
    if arr.size < 2:
        raise ValueError(f"{name} needs at least two entries")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PhaseConfig:
    """Snapshot of N oscillator phases at iteration step ``n_step``."""

    phases: np.ndarray
    n_step: int = 0

    def __post_init__(self):
        object.__setattr__(self, "phases", _phase_array(self.phases))
        if self.n_step < 0:
            raise ValueError("n_step must be nonnegative")

    @property
    def n(self) -> int:
        return self.phases.size


@dataclass(frozen=True)
class NaturalFrequencies:
    """Intrinsic drift rates; required to have (numerically) zero mean."""

    omega: np.ndarray

    def __post_init__(self):
        arr = np.array(self.omega, dtype=float, copy=True)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("omega must be a nonempty 1-d sequence")
        if not np.all(np.isfinite(arr)):
            raise ValueError("omega contains non-finite entries")
        scale = max(1.0, float(np.abs(arr).max()))
        if abs(float(arr.mean())) > 1e-12 * scale:
            raise ValueError("omega must have zero mean")
        arr.setflags(write=False)
        object.__setattr__(self, "omega", arr)

    @classmethod
    def zero(cls, n: int) -> "NaturalFrequencies":
        return cls(np.zeros(n))

    @property
    def d_omega(self) -> float:
        """Spread max(omega) - min(omega)."""
        return float(self.omega.max() - self.omega.min())

    @property
    def is_identical(self) -> bool:
        return bool(np.all(self.omega == 0.0))


@dataclass(frozen=True)
class SimParams:
    """Fixed-step iteration parameters."""

    coupling: float
    step_size: float
    max_steps: int = 1_000_000
    conv_tol: float = 1e-10

    def __post_init__(self):
        if not self.coupling > 0:
            raise ValueError("coupling must be positive")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.max_steps < 0:
            raise ValueError("max_steps must be nonnegative")
        if not self.conv_tol > 0:
            raise ValueError("conv_tol must be positive")


@dataclass(frozen=True)
class OrderParameter:
    """Magnitude and argument of the mean of exp(i*theta_k)."""

    r: float
    phi: float
    degenerate: bool = False


# ---------------------------------------------------------------------------
# array-level primitives (single canonical code path; see euler_step contract)
# ---------------------------------------------------------------------------

def coupling_sums(theta: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """sum_j sin(theta_j - theta_i) for every i.

    Each row is summed by numpy's pairwise reduction, which keeps the
    antisymmetric cancellation tight enough to track phase-sum conservation
    up to N ~ 1e4.
    """
    n = theta.shape[0]
    if out is None:
        out = np.empty(n)
    for lo in range(0, n, _ROW_CHUNK):
        hi = min(lo + _ROW_CHUNK, n)
        diff = np.subtract(theta[None, :], theta[lo:hi, None])
        np.sin(diff, out=diff)
        diff.sum(axis=1, out=out[lo:hi])
    return out


def velocity_arrays(theta, omega, coupling, out=None):
    """Right-hand side omega_i + (K/N) sum_j sin(theta_j - theta_i).

    This equals minus the potential gradient; every stepper and gradient
    evaluation funnels through this function so the identities between them
    hold bit-exactly.
    """
    v = coupling_sums(theta, out)
    v *= coupling / theta.shape[0]
    v += omega
    return v


def gradient_arrays(theta, omega, coupling):
    v = velocity_arrays(theta, omega, coupling)
    np.negative(v, out=v)
    return v


def potential_arrays(theta, omega, coupling) -> float:
    """-sum_i omega_i theta_i + (K/2N) sum_ij (1 - cos(theta_j - theta_i))."""
    n = theta.shape[0]
    acc = 0.0
    for lo in range(0, n, _ROW_CHUNK):
        hi = min(lo + _ROW_CHUNK, n)
        diff = np.subtract(theta[None, :], theta[lo:hi, None])
        np.cos(diff, out=diff)
        np.subtract(1.0, diff, out=diff)
        acc += float(diff.sum())
    return float(-(omega @ theta) + (coupling / (2.0 * n)) * acc)


def _check_lengths(config: PhaseConfig, freqs: NaturalFrequencies):
    if config.n != freqs.omega.size:
        raise ValueError(
            f"length mismatch: {config.n} phases vs {freqs.omega.size} frequencies"
        )


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def order_parameter(config: PhaseConfig) -> OrderParameter:
    """Coherence r in [0, 1] and mean angle phi in (-pi, pi].

    When r falls below 1e-14 the angle is meaningless; it is reported as 0
    with the degenerate flag set.
    """
    z = complex(np.exp(1j * config.phases).mean())
    r = min(abs(z), 1.0)
    if r < 1e-14:
        return OrderParameter(r=r, phi=0.0, degenerate=True)
    phi = math.atan2(z.imag, z.real)
    if phi <= -math.pi:
        phi = math.pi
    return OrderParameter(r=r, phi=phi)


def diameter(config: PhaseConfig, subset=None) -> float:
    """max - min of the phases over ``subset`` (all indices by default)."""
    if subset is None:
        sel = config.phases
    else:
        idx = np.asarray(sorted(subset), dtype=int)
        if idx.size == 0:
            raise ValueError("empty index set")
        if idx.min() < 0 or idx.max() >= config.n:
            raise ValueError("subset index out of range")
        sel = config.phases[idx]
    return float(sel.max() - sel.min())


def kuramoto_potential(config: PhaseConfig, freqs: NaturalFrequencies,
                       coupling: float) -> float:
    """Potential whose negative gradient generates the oscillator dynamics.

    Normalised so the value is 0 exactly when all phases coincide and the
    frequencies vanish, making it a clean Lyapunov value for that case.
    """
    _check_lengths(config, freqs)
    return potential_arrays(config.phases, freqs.omega, coupling)


def kuramoto_gradient(config: PhaseConfig, freqs: NaturalFrequencies,
                      coupling: float) -> np.ndarray:
    """Gradient of :func:`kuramoto_potential`; component i is
    -(omega_i + (K/N) sum_j sin(theta_j - theta_i))."""
    _check_lengths(config, freqs)
    return gradient_arrays(config.phases, freqs.omega, coupling)
