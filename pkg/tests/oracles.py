"""Independent brute-force references used by the tests.

Everything here deliberately avoids the library's fast paths: evolution goes
through scipy's expm on dense matrices and the record density is a plain
operator-product trace, so agreement with the streaming implementation is
meaningful.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm

from qsysid import ClassicalRecord, Model, effective_hamiltonian, ground_vacuum

TWO_PI = 2.0 * np.pi


def direct_log_density(model: Model, record: ClassicalRecord, g: float) -> float:
    """Record density as a dense operator-product trace, then log."""
    h = effective_hamiltonian(model, g).matrix
    psi = ground_vacuum(model)
    rho = np.outer(psi, psi.conj())
    t_prev = record.t0
    for t, c in zip(record.times, record.channels):
        u = expm(-1j * h * (float(t) - t_prev))
        rho = u @ rho @ u.conj().T
        cop = model.c0 if c == 0 else model.c1
        rho = cop @ rho @ cop.conj().T
        t_prev = float(t)
    u = expm(-1j * h * (record.tf - t_prev))
    rho = u @ rho @ u.conj().T
    trace = float(np.trace(rho).real)
    if trace <= 0.0:
        return -np.inf
    return float(np.log(trace))


def random_toy_instance(rng: np.random.Generator):
    """Small random model, coupling, and record for oracle comparisons."""
    from qsysid import ModelParams, build_model

    params = ModelParams(
        g0=6.0,
        gamma_perp=float(rng.uniform(0.2, 1.5)),
        kappa=float(rng.uniform(0.3, 2.0)),
        epsilon=float(rng.uniform(0.3, 1.5)),
        n_trunc=int(rng.integers(1, 4)),
    )
    model = build_model(params)
    g = float(rng.uniform(0.5, 5.0))
    n_events = int(rng.integers(0, 6))
    times = np.sort(rng.uniform(0.05, 0.95, size=n_events))
    channels = rng.integers(0, 2, size=n_events)
    record = ClassicalRecord(t0=0.0, tf=1.0, times=times, channels=channels)
    return model, record, g


def empty_cavity_expected_counts(epsilon: float, kappa: float, duration: float) -> float:
    """Exact mean photocount for a resonantly driven empty cavity from vacuum.

    The field is the coherent state alpha(t) = (eps/kappa)*(1 - e^{-kappa t})
    (angular rates), emitting at 2*kappa*|alpha(t)|^2, so the mean count is
    the time integral of that rate.
    """
    k = TWO_PI * kappa
    e = TWO_PI * epsilon
    alpha_sq = (e / k) ** 2
    integral = (
        duration
        - 2.0 * (1.0 - np.exp(-k * duration)) / k
        + (1.0 - np.exp(-2.0 * k * duration)) / (2.0 * k)
    )
    return 2.0 * k * alpha_sq * integral
