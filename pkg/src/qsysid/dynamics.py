"""Conditional no-detection evolution and Monte Carlo quantum-jump records.

The between-detections propagator exp(-i*H*tau) is evaluated exactly from an
eigendecomposition of the (non-Hermitian) effective Hamiltonian, with a
scaling-and-squaring fallback when the eigenbasis is ill-conditioned. Jump
times are located by inverting the squared-norm survival curve with a
bracketing pass plus bisection, so records carry no time-step discretization
error beyond the bisection width.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import FormatError, InvalidParametersError, NumericError
from .model import (
    TWO_PI,
    EffectiveHamiltonian,
    Model,
    effective_hamiltonian,
    ground_vacuum,
)

EIG_CONDITION_LIMIT = 1e8     # above this, diagonalization is not trusted
EIG_RECON_RTOL = 1e-6         # sanity bound on the V L V^-1 reconstruction
JUMP_TIME_TOL = 1e-9          # bisection window for jump times, us
_BRACKET_BATCH = 32           # survival samples evaluated per vectorized batch
_MAX_BISECT = 200

# Fallback evolution quantizes tau as q*delta + residual with delta an exact
# power of two: U(q*delta) is a product of precomputed squared step matrices
# (that is the squaring part of scaling-and-squaring) and the sub-delta
# residual is a cubic Taylor step with ||H*residual|| <~ 1e-4.
LADDER_DELTA = 2.0 ** -26     # us
_LADDER_REBUILD = 8           # levels between fresh expm evaluations

METHOD_EIG = "eigendecomposition"
METHOD_FALLBACK = "scaling-squaring-fallback"

CHANNEL_ATOM = 0
CHANNEL_CAVITY = 1


@dataclass(frozen=True)
class QuantumState:
    """Unnormalized conditional state plus the log-norm already factored out.

    log_norm accumulates ln of every squared-norm factor removed by
    renormalization, so ln ||psi_full||^2 = log_norm + ln ||amplitudes||^2.
    """

    amplitudes: np.ndarray
    log_norm: float = 0.0

    def norm_sq(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def normalized(self) -> "QuantumState":
        n2 = self.norm_sq()
        if not math.isfinite(n2) or n2 <= 0.0:
            raise NumericError(f"cannot renormalize state with squared norm {n2}")
        return QuantumState(self.amplitudes / math.sqrt(n2), self.log_norm + math.log(n2))


def _split_tau(tau: float) -> tuple[int, float]:
    """tau = q * LADDER_DELTA + residual with 0 <= residual < LADDER_DELTA."""
    q = int(math.floor(tau / LADDER_DELTA))
    return q, tau - q * LADDER_DELTA


@dataclass(frozen=True)
class Propagator:
    """exp(-i*H*tau) in a form cheap to evaluate at arbitrary tau >= 0."""

    g: float
    dim: int
    method: str
    eigvals: np.ndarray | None = None
    eigvecs: np.ndarray | None = None
    eigvecs_inv: np.ndarray | None = None
    h_matrix: np.ndarray | None = None
    _ladder: list = field(default_factory=list, repr=False)

    def ladder_level(self, level: int) -> np.ndarray:
        """exp(-i*H*LADDER_DELTA*2^level), by squaring with periodic rebuilds.

        Squaring doubles accumulated rounding error per level, so every
        _LADDER_REBUILD levels the matrix is recomputed from a fresh expm,
        capping the amplification at 2**_LADDER_REBUILD.
        """
        while len(self._ladder) <= level:
            j = len(self._ladder)
            if j % _LADDER_REBUILD == 0:
                self._ladder.append(expm((-1j * LADDER_DELTA * 2.0**j) * self.h_matrix))
            else:
                last = self._ladder[-1]
                self._ladder.append(last @ last)
        return self._ladder[level]

    def _taylor_residual(self, amplitudes: np.ndarray, residual: float) -> np.ndarray:
        # ||H*residual|| is <~ 1e-4 for any sane model, so cubic order suffices
        hv = self.h_matrix @ amplitudes
        hhv = self.h_matrix @ hv
        hhhv = self.h_matrix @ hhv
        r2 = residual * residual
        return (
            amplitudes
            - (1j * residual) * hv
            - (0.5 * r2) * hhv
            + (1j * r2 * residual / 6.0) * hhhv
        )

    def apply(self, amplitudes: np.ndarray, tau: float) -> np.ndarray:
        """Evolve an amplitude vector through a no-detection interval."""
        if tau == 0.0:
            return amplitudes.copy()
        if self.method == METHOD_EIG:
            phi = self.eigvecs_inv @ amplitudes
            return self.eigvecs @ (np.exp(-1j * self.eigvals * tau) * phi)
        q, residual = _split_tau(tau)
        out = amplitudes
        level = 0
        while q:
            if q & 1:
                out = self.ladder_level(level) @ out
            q >>= 1
            level += 1
        return self._taylor_residual(out, residual)

    def apply_many(self, amplitudes: np.ndarray, taus: np.ndarray) -> np.ndarray:
        """Evolve one start vector to several interval lengths; rows index taus."""
        taus = np.asarray(taus, dtype=float)
        if self.method == METHOD_EIG:
            phi = self.eigvecs_inv @ amplitudes
            phases = np.exp(-1j * np.outer(taus, self.eigvals))
            return (phases * phi) @ self.eigvecs.T
        return np.stack([self.apply(amplitudes, float(t)) for t in taus])


def prepare_propagator(hamiltonian: EffectiveHamiltonian, method: str | None = None) -> Propagator:
    """Diagonalize H for exact interval evolution.

    Falls back to scaling-and-squaring (matrix exponential per call) when the
    eigenvector matrix has condition number > 1e8 or fails a reconstruction
    check; near eigenbasis degeneracies the spectral form loses accuracy.
    `method` forces one path (mainly for cross-checking the two against each
    other in tests).
    """
    h = np.asarray(hamiltonian.matrix)
    if not np.all(np.isfinite(h)):
        raise NumericError("effective Hamiltonian contains non-finite entries")
    if method not in (None, METHOD_EIG, METHOD_FALLBACK):
        raise InvalidParametersError(f"unknown propagator method: {method!r}")
    dim = h.shape[0]
    if method != METHOD_FALLBACK:
        w, v = np.linalg.eig(h)
        cond = np.linalg.cond(v)
        usable = math.isfinite(cond) and cond <= EIG_CONDITION_LIMIT
        if usable:
            v_inv = np.linalg.inv(v)
            recon_err = np.abs((v * w) @ v_inv - h).max()
            scale = np.abs(h).max()
            usable = recon_err <= EIG_RECON_RTOL * max(scale, 1e-300)
        if usable:
            return Propagator(
                g=hamiltonian.g, dim=dim, method=METHOD_EIG,
                eigvals=w, eigvecs=v, eigvecs_inv=v_inv,
            )
        if method == METHOD_EIG:
            raise NumericError(
                f"eigendecomposition requested but unusable (cond(V) = {cond:.3g})"
            )
    return Propagator(g=hamiltonian.g, dim=dim, method=METHOD_FALLBACK, h_matrix=h.copy())


def evolve(propagator: Propagator, state: QuantumState, tau: float) -> QuantumState:
    """Propagate an unnormalized state through a no-detection interval tau."""
    if not math.isfinite(tau) or tau < 0:
        raise InvalidParametersError(f"tau must be finite and >= 0, got {tau}")
    if tau == 0.0:
        return QuantumState(state.amplitudes.copy(), state.log_norm)
    amps = propagator.apply(state.amplitudes, tau)
    if not np.all(np.isfinite(amps)):
        raise NumericError(f"no-detection evolution produced non-finite amplitudes (tau={tau})")
    if float(np.vdot(amps, amps).real) <= 0.0:
        raise NumericError(
            f"no-detection evolution underflowed to zero norm (tau={tau}); "
            "split the interval and renormalize"
        )
    return QuantumState(amps, state.log_norm)


def max_total_decay_rate(model: Model) -> float:
    """Largest eigenvalue of c0^dag c0 + c1^dag c1 on the truncated space (rad/us).

    The operator is diagonal: 2*kappa*n + 2*gamma_perp*s, maximized at the
    top Fock level with the atom excited.
    """
    p = model.params
    return 2.0 * TWO_PI * p.kappa * p.n_trunc + 2.0 * TWO_PI * p.gamma_perp


class _Segment:
    """Survival-curve evaluations from one fixed (normalized) start state."""

    def __init__(self, propagator: Propagator, psi: np.ndarray):
        self.propagator = propagator
        self.psi = psi
        if propagator.method == METHOD_EIG:
            self.phi = propagator.eigvecs_inv @ psi

    def at(self, tau: float) -> np.ndarray:
        if tau == 0.0:
            return self.psi.copy()
        if self.propagator.method == METHOD_EIG:
            return self.propagator.eigvecs @ (np.exp(-1j * self.propagator.eigvals * tau) * self.phi)
        return self.propagator.apply(self.psi, tau)

    def at_many(self, taus: np.ndarray) -> np.ndarray:
        if self.propagator.method == METHOD_EIG:
            phases = np.exp(-1j * np.outer(taus, self.propagator.eigvals))
            return (phases * self.phi) @ self.propagator.eigvecs.T
        return self.propagator.apply_many(self.psi, taus)

    def survival(self, tau: float) -> float:
        amps = self.at(tau)
        s = float(np.vdot(amps, amps).real)
        if not math.isfinite(s):
            raise NumericError(f"survival evaluation non-finite at tau={tau}")
        return s

    def survival_many(self, taus: np.ndarray) -> np.ndarray:
        amps = self.at_many(taus)
        s = np.einsum("kd,kd->k", amps.conj(), amps).real
        if not np.all(np.isfinite(s)):
            raise NumericError("survival evaluation non-finite in bracketing batch")
        return s


def _locate_jump_time(segment: _Segment, target: float, remaining: float, step: float) -> float:
    """First time where the squared-norm survival drops below target.

    Caller guarantees survival(remaining) < target <= 1. Brackets on a step
    grid (vectorized in batches), then bisects to JUMP_TIME_TOL.
    """
    lo = 0.0
    hi = None
    while hi is None:
        grid = lo + step * np.arange(1, _BRACKET_BATCH + 1)
        last_batch = grid[-1] >= remaining
        if last_batch:
            grid = np.concatenate([grid[grid < remaining], [remaining]])
        s = segment.survival_many(grid)
        below = s < target
        idx = int(np.argmax(below))
        if below[idx]:
            hi = float(grid[idx])
            if idx > 0:
                lo = float(grid[idx - 1])
        elif last_batch:
            raise NumericError(
                "survival bracketing failed: no crossing found although the "
                f"window endpoint is below target (target={target:.6g}, "
                f"remaining={remaining:.6g}, survival floor={s[-1]:.6g})"
            )
        else:
            lo = float(grid[-1])
    for _ in range(_MAX_BISECT):
        if hi - lo <= JUMP_TIME_TOL:
            break
        mid = 0.5 * (lo + hi)
        if segment.survival(mid) >= target:
            lo = mid
        else:
            hi = mid
    else:
        raise NumericError(
            f"jump-time bisection did not converge (bracket [{lo}, {hi}])"
        )
    return 0.5 * (lo + hi)


@dataclass(frozen=True, eq=False)
class ClassicalRecord:
    """One photodetection record: observation window plus (time, channel) events.

    channels: 0 = atomic fluorescence side channel, 1 = cavity output channel.
    """

    t0: float
    tf: float
    times: np.ndarray
    channels: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).copy()
        channels = np.asarray(self.channels, dtype=np.int64).copy()
        times.flags.writeable = False
        channels.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "channels", channels)

    @property
    def n_events(self) -> int:
        return int(self.times.size)

    def validate(self) -> None:
        """Raise FormatError if the record violates its structural contract."""
        if not (math.isfinite(self.t0) and math.isfinite(self.tf)):
            raise FormatError(f"record window must be finite, got [{self.t0}, {self.tf}]")
        if self.tf < self.t0:
            raise FormatError(f"record window is reversed: tf={self.tf} < t0={self.t0}")
        if self.times.ndim != 1 or self.channels.shape != self.times.shape:
            raise FormatError("event times and channels must be 1-d arrays of equal length")
        if self.n_events:
            if not np.all(np.isfinite(self.times)):
                raise FormatError("event times must be finite")
            if self.times[0] < self.t0 or self.times[-1] > self.tf:
                raise FormatError("event times must lie within [t0, tf]")
            if np.any(np.diff(self.times) <= 0):
                bad = int(np.argmax(np.diff(self.times) <= 0)) + 1
                raise FormatError(f"event times must be strictly increasing (event {bad})")
        if self.n_events and not np.all((self.channels == 0) | (self.channels == 1)):
            raise FormatError("event channels must be 0 or 1")

    def digest(self) -> str:
        """Short content hash identifying this record."""
        h = hashlib.sha256()
        h.update(np.float64(self.t0).tobytes())
        h.update(np.float64(self.tf).tobytes())
        h.update(self.times.tobytes())
        h.update(self.channels.tobytes())
        return h.hexdigest()[:12]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ClassicalRecord):
            return NotImplemented
        return (
            self.t0 == other.t0
            and self.tf == other.tf
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.channels, other.channels)
            and self.metadata == other.metadata
        )


def _normalized_initial(model: Model, initial_state: np.ndarray | None) -> np.ndarray:
    if initial_state is None:
        return ground_vacuum(model)
    psi = np.asarray(initial_state, dtype=complex).copy()
    if psi.shape != (model.dim,):
        raise InvalidParametersError(
            f"initial state must have shape ({model.dim},), got {psi.shape}"
        )
    n2 = float(np.vdot(psi, psi).real)
    if not math.isfinite(n2) or n2 <= 0.0:
        raise InvalidParametersError("initial state must be normalizable")
    return psi / math.sqrt(n2)


def simulate_record(
    model: Model,
    g_true: float,
    t0: float,
    tf: float,
    seed: int,
    initial_state: np.ndarray | None = None,
) -> ClassicalRecord:
    """Generate one quantum-jump photodetection record.

    Standard quantum-jump sampling with exact interval evolution: draw a
    survival target r ~ U(0,1), find the time where the no-detection squared
    norm crosses r (bracket + bisection), pick the emission channel with
    probability proportional to ||c_j psi||^2, collapse, renormalize, repeat
    until the survival target outlives the window. Deterministic given
    (model params, g_true, window, seed).
    """
    if not (math.isfinite(t0) and math.isfinite(tf)) or not tf > t0:
        raise InvalidParametersError(f"need tf > t0, got [{t0}, {tf}]")
    psi = _normalized_initial(model, initial_state)
    propagator = prepare_propagator(effective_hamiltonian(model, g_true))
    rng = np.random.default_rng(seed)
    step = min(0.25 / max_total_decay_rate(model), (tf - t0) / 10.0)
    times: list[float] = []
    channels: list[int] = []
    t = t0
    while True:
        remaining = tf - t
        if remaining <= 0.0:
            break
        r = rng.random()
        while r == 0.0:  # open interval: a zero survival target is never reached
            r = rng.random()
        segment = _Segment(propagator, psi)
        if segment.survival(remaining) >= r:
            break
        tau_star = _locate_jump_time(segment, r, remaining, step)
        psi_star = segment.at(tau_star)
        w0 = float(np.vdot(model.c0 @ psi_star, model.c0 @ psi_star).real)
        w1 = float(np.vdot(model.c1 @ psi_star, model.c1 @ psi_star).real)
        w_sum = w0 + w1
        if not math.isfinite(w_sum) or w_sum <= 0.0:
            raise NumericError(
                f"degenerate jump at t={t + tau_star:.9f}: channel weights "
                f"({w0:.3g}, {w1:.3g})"
            )
        u = rng.random()
        channel = CHANNEL_ATOM if u * w_sum < w0 else CHANNEL_CAVITY
        collapse = model.c0 if channel == CHANNEL_ATOM else model.c1
        psi = collapse @ psi_star
        psi = psi / math.sqrt(float(np.vdot(psi, psi).real))
        t_star = min(t + tau_star, tf)
        if times and t_star <= times[-1]:
            t_star = np.nextafter(times[-1], np.inf)  # keep strict ordering
        t = t_star
        times.append(t_star)
        channels.append(channel)
    p = model.params
    metadata = {
        "seed": int(seed),
        "g_true_mhz": float(g_true),
        "params": {
            "g0_mhz": p.g0,
            "gamma_perp_mhz": p.gamma_perp,
            "kappa_mhz": p.kappa,
            "epsilon_mhz": p.epsilon,
            "n_trunc": p.n_trunc,
        },
        "initial_state": "ground-vacuum" if initial_state is None else "custom",
    }
    record = ClassicalRecord(
        t0=float(t0), tf=float(tf),
        times=np.asarray(times, dtype=float),
        channels=np.asarray(channels, dtype=np.int64),
        metadata=metadata,
    )
    record.validate()
    return record


def conditional_states(
    model: Model,
    g: float,
    record: ClassicalRecord,
    times: np.ndarray,
    initial_state: np.ndarray | None = None,
) -> list[QuantumState]:
    """Reconstruct the normalized conditional state at the given times.

    Replays the record (events with t <= T applied) under the coupling g.
    `times` must be ascending and inside [t0, tf].
    """
    times = np.asarray(times, dtype=float)
    if times.size and (np.any(np.diff(times) < 0) or times[0] < record.t0 or times[-1] > record.tf):
        raise InvalidParametersError("query times must be ascending within the record window")
    propagator = prepare_propagator(effective_hamiltonian(model, g))
    psi = _normalized_initial(model, initial_state)
    out: list[QuantumState] = []
    t_prev = record.t0
    i = 0
    for t_query in times:
        while i < record.n_events and record.times[i] <= t_query:
            psi = propagator.apply(psi, float(record.times[i]) - t_prev)
            collapse = model.c0 if record.channels[i] == CHANNEL_ATOM else model.c1
            psi = collapse @ psi
            n2 = float(np.vdot(psi, psi).real)
            if n2 <= 0.0 or not math.isfinite(n2):
                raise NumericError(
                    f"record event {i} has zero weight under g={g}; "
                    "state reconstruction impossible"
                )
            psi = psi / math.sqrt(n2)
            t_prev = float(record.times[i])
            i += 1
        amps = propagator.apply(psi, float(t_query) - t_prev)
        n2 = float(np.vdot(amps, amps).real)
        if n2 <= 0.0 or not math.isfinite(n2):
            raise NumericError(f"conditional state underflowed at t={t_query}")
        out.append(QuantumState(amps / math.sqrt(n2), 0.0))
    return out
