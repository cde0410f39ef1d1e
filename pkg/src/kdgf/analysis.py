"""Asymptotic-state analysis and certification for the identical and
non-identical oscillator systems.

Covers: classification of initial data by the continuous-flow limit they
approach (full sync vs one opposed oscillator), construction and matching of
locked equilibrium states on the unwrapped line, order-preservation and
exponential-envelope certificates for effective phases, the containment band
and residual bounds for the opposed-oscillator configuration, invariance of a
majority cluster under a coupling threshold, the uniform diameter cap, and
least-squares decay-rate fitting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import PhaseConfig, velocity_arrays
from .integrate import Trajectory, rk4_step

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# equilibrium states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EquilibriumState:
    """A locked state on the unwrapped line.

    kind "sync": theta_j = 2 k_j pi + phi_star for every oscillator.
    kind "bipolar": one oscillator (bipolar_index) sits at
    (2 k_b + 1) pi + phi_star, half a turn from the rest.
    phi_star is pinned by the zero-mean constraint, so the state is fully
    determined by the windings (and the opposed index).
    """

    kind: str
    windings: np.ndarray
    bipolar_index: int | None
    phi_star: float

    def __post_init__(self):
        w = np.array(self.windings, dtype=int)
        w.setflags(write=False)
        object.__setattr__(self, "windings", w)
        if self.kind not in ("sync", "bipolar"):
            raise ValueError(f"unknown equilibrium kind {self.kind!r}")
        if (self.kind == "bipolar") != (self.bipolar_index is not None):
            raise ValueError("bipolar_index must be set exactly for bipolar states")
        if self.bipolar_index is not None and not (0 <= self.bipolar_index < w.size):
            raise ValueError("bipolar_index out of range")
        expected = -math.pi * float(self._half_turn_counts().sum()) / w.size
        if abs(self.phi_star - expected) > 1e-9:
            raise ValueError("phi_star inconsistent with the windings")

    @classmethod
    def sync(cls, windings) -> "EquilibriumState":
        w = np.asarray(windings, dtype=int)
        phi = -math.pi * float(2 * int(w.sum())) / w.size
        return cls("sync", w, None, phi)

    @classmethod
    def bipolar(cls, windings, index: int) -> "EquilibriumState":
        w = np.asarray(windings, dtype=int)
        phi = -math.pi * float(2 * int(w.sum()) + 1) / w.size
        return cls("bipolar", w, int(index), phi)

    @property
    def n(self) -> int:
        return self.windings.size

    def _half_turn_counts(self) -> np.ndarray:
        a = 2 * self.windings.astype(np.int64)
        if self.bipolar_index is not None:
            a = a.copy()
            a[self.bipolar_index] += 1
        return a

    def reconstruct(self) -> np.ndarray:
        """Phases of the state; the integer combination N*a_j - sum(a) makes
        the zero-mean property exact at the integer level."""
        a = self._half_turn_counts()
        m = a * self.n - int(a.sum())
        phases = (math.pi / self.n) * m.astype(float)
        phases.setflags(write=False)
        return phases

    def target_pattern(self) -> np.ndarray:
        """Limiting effective phases: zero for sync; -pi/N on the locked
        group and (N-1)pi/N on the opposed oscillator for bipolar."""
        if self.kind == "sync":
            return np.zeros(self.n)
        pat = np.full(self.n, -math.pi / self.n)
        pat[self.bipolar_index] = (self.n - 1) * math.pi / self.n
        return pat


def effective_phases(config: PhaseConfig, eq: EquilibriumState) -> np.ndarray:
    """Phases re-based so the limit state maps to its canonical pattern.

    Sync: theta_hat = theta - 2 k pi - phi_star (zero at the limit).
    Bipolar: an extra -pi/N shift; at the limit the locked group sits at
    -pi/N and the opposed oscillator at (N-1)pi/N.  The vector sum is
    preserved: sum(theta_hat) == sum(theta) up to rounding.
    """
    if config.n != eq.n:
        raise ValueError("equilibrium size does not match configuration")
    out = config.phases - eq.reconstruct() + eq.target_pattern()
    if abs(float(out.sum()) - float(config.phases.sum())) > 1e-9 * config.n * (
        1.0 + float(np.abs(config.phases).max())
    ):
        raise AssertionError("effective phases lost the phase sum")
    return out


def effective_series(traj: Trajectory, eq: EquilibriumState) -> np.ndarray:
    """Effective phases for every step of a trajectory, shape (M+1, N)."""
    if traj.n != eq.n:
        raise ValueError("equilibrium size does not match trajectory")
    return traj.phases - eq.reconstruct() + eq.target_pattern()


# ---------------------------------------------------------------------------
# classification of initial data via the continuous flow
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassificationWitness:
    t_end: float
    grad_norm: float
    residual: float
    r0: float
    sync_diameter: float = math.nan  # locked-group spread at capture


@dataclass(frozen=True)
class InitialClassification:
    """Which locked state the continuous flow from this data approaches.

    kind is "sync" (every oscillator reaches the common phase), "bipolar"
    (exactly one locks half a turn away), or "degenerate" (duplicate initial
    phases or vanishing initial coherence; excluded from the theory).
    """

    kind: str
    bipolar_index: int | None
    equilibrium: EquilibriumState | None
    witness: ClassificationWitness


def _match_half_turn_grid(y: np.ndarray, tol: float):
    """Try to read (windings, opposed index) off a near-critical state.

    Returns (EquilibriumState, residual) or (None, residual) when the state
    is not within tol of a single-opposed-oscillator pattern (e.g. a
    higher-order saddle with several opposed members)."""
    z = np.exp(1j * y).mean()
    if abs(z) < 1e-14:
        return None, math.inf
    phi_hat = math.atan2(z.imag, z.real)
    a = np.round((y - phi_hat) / math.pi).astype(np.int64)
    odd = np.nonzero(a % 2 != 0)[0]
    if odd.size == 0:
        eq = EquilibriumState.sync(a // 2)
    elif odd.size == 1:
        w = a // 2
        w[odd[0]] = (a[odd[0]] - 1) // 2
        eq = EquilibriumState.bipolar(w, int(odd[0]))
    else:
        return None, math.inf
    residual = float(np.abs(y - eq.reconstruct()).max())
    if residual > tol:
        return None, residual
    return eq, residual


def classify_initial(init: PhaseConfig, coupling: float, *,
                     dt: float | None = None, t_max: float | None = None,
                     grad_tol: float = 1e-10, capture_tol: float | None = None,
                     residual_tol: float = 0.02) -> InitialClassification:
    """Classify zero-mean identical-frequency initial data.

    Runs the RK4 continuous-flow reference; whenever the gradient norm dips
    below the capture threshold the state is matched against the
    single-opposed-oscillator grid and classified by parity of the half-turn
    counts.  Capturing at the threshold (rather than insisting on
    grad_norm < 1e-10) matters because opposed-oscillator states are saddle
    points: rounding noise grows at rate K and ejects any double-precision
    trajectory long before a 1e-10 gradient could be observed there.
    Reaching t_max without a match raises an unresolved-classification error.
    """
    if not coupling > 0:
        raise ValueError("coupling must be positive")
    phases = init.phases
    n = phases.size
    scale = 1.0 + float(np.abs(phases).max())
    if abs(float(phases.sum())) > 1e-9 * n * scale:
        raise ValueError("classification requires zero-mean initial data")

    z0 = np.exp(1j * phases).mean()
    r0 = float(abs(z0))
    if np.unique(phases).size < n or r0 < 1e-12:
        return InitialClassification(
            "degenerate", None, None,
            ClassificationWitness(0.0, math.nan, math.nan, r0))

    dt = dt if dt is not None else 0.1 / coupling
    t_max = t_max if t_max is not None else 1e3 / coupling
    # The capture threshold must be loose enough that an opposed-oscillator
    # saddle is matched before rounding noise (growing at rate K) ejects the
    # reference trajectory; 1e-4 * K wins that race with a 1.5x time margin
    # while still pinning the state to ~1e-4 of the critical point.
    cap = capture_tol if capture_tol is not None else 1e-4 * coupling

    omega = np.zeros(n)
    y = phases.astype(float).copy()
    t = 0.0
    window = 16
    gn = math.inf
    while True:
        v = velocity_arrays(y, omega, coupling)
        gn = float(np.linalg.norm(v))
        if gn < max(cap, grad_tol):
            eq, residual = _match_half_turn_grid(y, residual_tol)
            if eq is not None:
                sync = y if eq.kind == "sync" else np.delete(y, eq.bipolar_index)
                return InitialClassification(
                    kind=eq.kind,
                    bipolar_index=eq.bipolar_index,
                    equilibrium=eq,
                    witness=ClassificationWitness(
                        t, gn, residual, r0,
                        sync_diameter=float(sync.max() - sync.min())),
                )
        if t >= t_max:
            raise ValueError(
                f"unresolved classification (grad_norm={gn:.3e} at t={t:.3g})")
        for _ in range(window):
            y = rk4_step(y, omega, coupling, dt)
            t += dt


# ---------------------------------------------------------------------------
# equilibrium matching of a converged configuration
# ---------------------------------------------------------------------------

def match_equilibrium(final: PhaseConfig, tol: float = 1e-6) -> EquilibriumState | None:
    """Find the locked state closest to a converged configuration.

    Tries the all-sync pattern first, then each single-opposed-oscillator
    candidate; accepts when the worst phase residual is below tol.  Returns
    None ("unconverged") when nothing matches, e.g. half-integer residuals
    from a multi-opposed saddle.
    """
    y = final.phases
    n = y.size
    z = np.exp(1j * y).mean()
    if abs(z) < 1e-14:
        return None
    phi_hat = math.atan2(z.imag, z.real)

    k_sync = np.round((y - phi_hat) / TWO_PI).astype(np.int64)
    eq = EquilibriumState.sync(k_sync)
    if float(np.abs(y - eq.reconstruct()).max()) < tol:
        return eq

    best = None
    best_res = tol
    for b in range(n):
        k = np.round((y - phi_hat) / TWO_PI).astype(np.int64)
        k[b] = int(round((y[b] - phi_hat - math.pi) / TWO_PI))
        cand = EquilibriumState.bipolar(k, b)
        res = float(np.abs(y - cand.reconstruct()).max())
        if res < best_res:
            best, best_res = cand, res
    return best


# ---------------------------------------------------------------------------
# scan certificates over trajectories
# ---------------------------------------------------------------------------

def _subset_indices(subset, n):
    idx = np.asarray(sorted(subset), dtype=int)
    if idx.size == 0:
        raise ValueError("empty index set")
    if idx.min() < 0 or idx.max() >= n:
        raise ValueError("subset index out of range")
    return idx


def _subset_diameters(phases: np.ndarray, idx: np.ndarray) -> np.ndarray:
    sel = phases[:, idx]
    return sel.max(axis=1) - sel.min(axis=1)


@dataclass(frozen=True)
class OrderCheck:
    passed: bool
    first_violation: int | None = None
    pair: tuple[int, int] | None = None


def check_order_preservation(traj: Trajectory, subset) -> OrderCheck:
    """Scan for the first step where the strict phase order of ``subset``
    (sorted by its step-0 phases) breaks."""
    idx = _subset_indices(subset, traj.n)
    order = idx[np.argsort(traj.phases[0, idx], kind="stable")]
    if idx.size > 1 and np.any(np.diff(traj.phases[0, order]) <= 0):
        raise ValueError("subset phases are not strictly ordered at step 0")
    gaps = np.diff(traj.phases[:, order], axis=1)
    bad_rows = np.nonzero((gaps <= 0).any(axis=1))[0]
    if bad_rows.size == 0:
        return OrderCheck(True)
    row = int(bad_rows[0])
    col = int(np.nonzero(gaps[row] <= 0)[0][0])
    return OrderCheck(False, row, (int(order[col]), int(order[col + 1])))


@dataclass(frozen=True)
class DecayCertificate:
    passed: bool
    first_violation: int | None
    margin: np.ndarray  # observed / bound per step (clipped for report use)


def _exp_envelope_check(values: np.ndarray, base: float, rate: float, h: float,
                        floor: float = 0.0):
    """Strict values[n] < base*exp(-rate*n*h) for n >= 1 (non-strict at 0),
    compared in log space to stay meaningful past exp underflow.  Exact zeros
    pass (fully collapsed); steps with values < floor are treated as
    converged-to-noise and skipped."""
    m = values.size
    steps = np.arange(m)
    ok = values <= 0.0
    margin = np.zeros(m)
    pos = ~ok
    if base > 0 and pos.any():
        log_bound = math.log(base) - rate * steps[pos] * h
        log_vals = np.log(values[pos])
        ok[pos] = log_vals < log_bound
        margin[pos] = np.exp(np.clip(log_vals - log_bound, -700, 700))
    elif pos.any():
        margin[pos] = math.inf
    ok[0] = values[0] <= base
    if floor > 0:
        ok |= values < floor
    bad = np.nonzero(~ok)[0]
    return (bad.size == 0, int(bad[0]) if bad.size else None, margin)


def certify_diameter_decay(traj: Trajectory, subset, eps: float,
                           rate: float, floor: float = 0.0) -> DecayCertificate:
    """Certify subset diameter D(n) < D(0) * exp(-rate * n * h) at every step.

    Requires the initial subset diameter to be below eps (the envelope's
    validity region); violated preconditions raise.
    """
    idx = _subset_indices(subset, traj.n)
    d = _subset_diameters(traj.phases, idx)
    if not d[0] < eps:
        raise ValueError("initial diameter exceeds eps")
    passed, first_bad, margin = _exp_envelope_check(
        d, float(d[0]), rate, traj.params.step_size, floor)
    return DecayCertificate(passed, first_bad, margin)


@dataclass(frozen=True)
class TwoSidedCertificate:
    passed: bool
    first_violation: int | None
    failed_side: str | None  # "lower" | "upper"
    checked_steps: int


def certify_two_sided_decay(traj: Trajectory, subset, coupling: float,
                            alpha: float, floor: float = 1e-13) -> TwoSidedCertificate:
    """Two-sided envelope for the locked-group diameter:

        D(0) exp(-2 K n h)  <  D(n)  <  D(0) exp(-alpha n h)

    strict for n >= 1, non-strict at n = 0.  Checking stops once D(n) drops
    below ``floor`` (the comparison is vacuous at rounding noise).  A rate
    alpha >= 2K would make the two sides contradict and is rejected.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if alpha >= 2.0 * coupling:
        raise ValueError("alpha >= 2K: upper envelope would cross the lower one")
    idx = _subset_indices(subset, traj.n)
    d = _subset_diameters(traj.phases, idx)
    d0 = float(d[0])
    if not d0 > 0:
        raise ValueError("initial subset diameter must be positive")
    h = traj.params.step_size
    active = d >= floor
    active[0] = False  # boundary step is an equality by construction
    steps = np.arange(d.size)
    log_d0 = math.log(d0)
    with np.errstate(divide="ignore"):
        log_d = np.where(d > 0, np.log(np.maximum(d, 1e-320)), -math.inf)
    low_ok = ~active | (log_d0 - 2.0 * coupling * steps * h < log_d)
    up_ok = ~active | (log_d < log_d0 - alpha * steps * h)
    bad_low = np.nonzero(~low_ok)[0]
    bad_up = np.nonzero(~up_ok)[0]
    candidates = []
    if bad_low.size:
        candidates.append((int(bad_low[0]), "lower"))
    if bad_up.size:
        candidates.append((int(bad_up[0]), "upper"))
    if not candidates:
        return TwoSidedCertificate(True, None, None, int(active.sum()))
    step, side = min(candidates)
    return TwoSidedCertificate(False, step, side, int(active.sum()))


@dataclass(frozen=True)
class ContainmentReport:
    """Per-step containment of the opposed oscillator inside the band
    [min locked + pi, max locked + pi] (in effective phases)."""

    all_contained: bool
    first_exit: int | None
    exit_side: str | None  # "below" | "above"
    contained: np.ndarray


def check_bipolar_containment(traj: Trajectory, eq: EquilibriumState,
                              atol: float = 1e-12) -> ContainmentReport:
    """Detect the first step (if any) where the opposed oscillator leaves the
    half-turn band over the locked group.  Boundary contact counts as
    contained (the next step resolves it); ``atol`` absorbs the rounding of
    the band edges."""
    if eq.kind != "bipolar":
        raise ValueError("containment check needs a bipolar equilibrium")
    ef = effective_series(traj, eq)
    b = eq.bipolar_index
    mask = np.ones(traj.n, dtype=bool)
    mask[b] = False
    sync = ef[:, mask]
    lo = sync.min(axis=1) + math.pi
    hi = sync.max(axis=1) + math.pi
    below = ef[:, b] < lo - atol
    above = ef[:, b] > hi + atol
    contained = ~(below | above)
    if contained.all():
        return ContainmentReport(True, None, None, contained)
    first = int(np.nonzero(~contained)[0][0])
    side = "below" if below[first] else "above"
    return ContainmentReport(False, first, side, contained)


@dataclass(frozen=True)
class BipolarBoundsCertificate:
    passed: bool
    first_violation: int | None
    which: str | None  # "opposed" | "locked"


def certify_bipolar_bounds(traj: Trajectory, eq: EquilibriumState, alpha: float,
                           eps: float) -> BipolarBoundsCertificate:
    """Residual envelopes for a contained opposed-oscillator run:

        |theta_hat_b(n) - (N-1)pi/N|  <  (N-1)/N * D(0) exp(-alpha n h)
        |theta_hat_j(n) +      pi/N|  < (2N-1)/N * D(0) exp(-alpha n h)

    with D(0) the initial locked-group diameter.  The hypotheses (strict
    initial order of the locked group, D(0) < eps, opposed oscillator within
    eps/4 of its target, containment at every step) are validated first and
    reported by name when unmet.
    """
    if eq.kind != "bipolar":
        raise ValueError("bipolar bounds need a bipolar equilibrium")
    n = traj.n
    b = eq.bipolar_index
    ef = effective_series(traj, eq)
    mask = np.ones(n, dtype=bool)
    mask[b] = False
    sync0 = ef[0, mask]
    d0 = float(sync0.max() - sync0.min())

    failures = []
    if np.any(np.diff(np.sort(sync0)) <= 0):
        failures.append("locked-group initial phases not strictly ordered")
    if not d0 < eps:
        failures.append("initial locked-group diameter not below eps")
    if not abs(ef[0, b] - (n - 1) * math.pi / n) < eps / 4.0:
        failures.append("opposed oscillator not within eps/4 of its target")
    containment = check_bipolar_containment(traj, eq)
    if not containment.all_contained:
        failures.append(
            f"containment broken at step {containment.first_exit} ({containment.exit_side})")
    if failures:
        raise ValueError("hypotheses unmet: " + "; ".join(failures))

    h = traj.params.step_size
    steps = np.arange(traj.n_steps + 1)
    envelope = d0 * np.exp(-alpha * steps * h)
    opp_res = np.abs(ef[:, b] - (n - 1) * math.pi / n)
    locked_res = np.abs(ef[:, mask] + math.pi / n).max(axis=1)

    opp_ok = opp_res < (n - 1) / n * envelope
    locked_ok = locked_res < (2 * n - 1) / n * envelope
    opp_ok[0] = opp_res[0] <= (n - 1) / n * d0
    locked_ok[0] = locked_res[0] <= (2 * n - 1) / n * d0
    bad_opp = np.nonzero(~opp_ok)[0]
    bad_locked = np.nonzero(~locked_ok)[0]
    candidates = []
    if bad_opp.size:
        candidates.append((int(bad_opp[0]), "opposed"))
    if bad_locked.size:
        candidates.append((int(bad_locked[0]), "locked"))
    if not candidates:
        return BipolarBoundsCertificate(True, None, None)
    step, which = min(candidates)
    return BipolarBoundsCertificate(False, step, which)


# ---------------------------------------------------------------------------
# coupling thresholds and cluster invariance (non-identical system)
# ---------------------------------------------------------------------------

def coupling_threshold(d_omega: float, d_theta0: float) -> float:
    """Coupling above which a sub-pi initial diameter contracts:
    D(Omega) / sin D(Theta_0)."""
    if not d_omega > 0:
        raise ValueError("d_omega must be positive")
    if not (0.0 < d_theta0 < math.pi - 1e-9):
        raise ValueError("d_theta0 must lie in (0, pi)")
    return d_omega / math.sin(d_theta0)


@dataclass(frozen=True)
class ClusterSpec:
    """Majority-cluster invariance parameters.

    A cluster of the first n0 > N/2 oscillators with diameter below l stays
    below l for all steps provided coupling > k_min and the step size is
    below step_max (conservative, from the invariance proof constants).
    """

    n: int
    n0: int
    l: float
    d_omega: float
    coupling: float
    k_min: float
    step_max: float
    coupling_ok: bool


def cluster_spec(n: int, n0: int, l: float, d_omega: float,
                 coupling: float) -> ClusterSpec:
    """Evaluate the cluster-invariance thresholds for given parameters."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if not (n / 2.0 < n0 <= n):
        raise ValueError("n0 must lie in (N/2, N]")
    if d_omega < 0:
        raise ValueError("d_omega must be nonnegative")
    l_cap = 2.0 * math.acos((n - n0) / n0)
    if not (0.0 < l < l_cap):
        raise ValueError(f"l must lie in (0, {l_cap:.6g}) for n0={n0}, n={n}")
    if not coupling > 0:
        raise ValueError("coupling must be positive")

    denom = (n0 / n) * math.sin(l) - (2.0 * (n - n0) / n) * math.sin(l / 2.0)
    if not denom > 0:
        raise ValueError("coupling threshold denominator not positive")
    k_min = d_omega / denom

    d2k = d_omega + 2.0 * coupling
    margin = n0 * math.cos(l / 2.0) - (n - n0)
    a = n0 * (math.cos(l / 2.0) * d2k * d2k / 8.0 + d2k / 2.0)
    b = math.sin(l / 2.0) * d_omega * d_omega / 8.0 + d_omega / 2.0
    c = 2.0 * coupling * b / n * margin
    e = 2.0 * coupling * a / n * math.sin(l / 2.0)
    f = 2.0 * coupling / n * math.sin(l / 2.0) * margin - d_omega

    if f > 0:
        terms = [(math.pi - l) / d2k, margin / a, f / (c + e)]
        if d_omega > 0:
            terms.append(l / d_omega)
        step_max = min(terms)
    else:
        step_max = 0.0  # coupling at or below threshold: no admissible step
    return ClusterSpec(
        n=n, n0=n0, l=l, d_omega=d_omega, coupling=coupling,
        k_min=k_min, step_max=step_max, coupling_ok=bool(coupling > k_min),
    )


@dataclass(frozen=True)
class ScanCertificate:
    passed: bool
    first_violation: int | None
    curve: np.ndarray


def certify_cluster_invariance(traj: Trajectory, spec: ClusterSpec) -> ScanCertificate:
    """Check the first-n0 diameter stays strictly below l at every step."""
    if traj.n != spec.n:
        raise ValueError("trajectory size does not match cluster spec")
    idx = np.arange(spec.n0)
    d = _subset_diameters(traj.phases, idx)
    problems = []
    if not d[0] < spec.l:
        problems.append("initial cluster diameter not below l")
    if not traj.params.coupling > spec.k_min:
        problems.append("coupling not above k_min")
    if not traj.params.step_size < spec.step_max:
        problems.append("step size not below step_max")
    if problems:
        raise ValueError("preconditions unmet: " + "; ".join(problems))
    bad = np.nonzero(d >= spec.l)[0]
    return ScanCertificate(bad.size == 0, int(bad[0]) if bad.size else None, d)


def certify_uniform_bound(traj: Trajectory, l: float) -> ScanCertificate:
    """Check the full phase diameter never exceeds 4*pi + 2*l."""
    d = traj.phases.max(axis=1) - traj.phases.min(axis=1)
    cap = 4.0 * math.pi + 2.0 * l
    bad = np.nonzero(d > cap)[0]
    return ScanCertificate(bad.size == 0, int(bad[0]) if bad.size else None, d)


# ---------------------------------------------------------------------------
# decay-rate fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    """Least-squares exponential rate of a diameter series over a window."""

    alpha_fit: float
    r_squared: float
    degenerate: bool = False
    bound_lower: float | None = None
    bound_upper_rate: float | None = None


def fit_decay_rate(diam_series, h: float, window: tuple[int, int],
                   bound_lower: float | None = None,
                   bound_upper_rate: float | None = None) -> DecayFit:
    """Fit log D(n) = log D(0) - alpha * n * h by least squares on
    ``window`` (half-open step range).  All diameters in the window must be
    positive; a constant series fits rate 0 with the degenerate flag set."""
    d = np.asarray(diam_series, dtype=float)
    lo, hi = window
    if not (0 <= lo < hi <= d.size):
        raise ValueError("window out of range")
    seg = d[lo:hi]
    if np.any(seg <= 0):
        raise ValueError("log undefined; shrink window")
    if hi - lo < 2:
        raise ValueError("window must contain at least two steps")
    t = np.arange(lo, hi) * h
    y = np.log(seg)
    if float(y.max() - y.min()) == 0.0:
        return DecayFit(0.0, 0.0, degenerate=True,
                        bound_lower=bound_lower, bound_upper_rate=bound_upper_rate)
    slope, intercept = np.polyfit(t, y, 1)
    fitted = slope * t + intercept
    ss_res = float(((y - fitted) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return DecayFit(float(-slope), float(r2), degenerate=False,
                    bound_lower=bound_lower, bound_upper_rate=bound_upper_rate)
