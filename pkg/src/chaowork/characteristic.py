"""Semiclassical characteristic function of the quench work.

The estimator averages unit-modulus phases exp(i * dS(x0, u*hbar) / hbar)
over Boltzmann-drawn initial conditions, where dS is the time integral of
the energy jump along the unperturbed trajectory.  Each sample is propagated
once to the largest checkpoint time with the running integral recorded at
every u-grid time, so the cost is one trajectory per sample rather than one
per (sample, u) pair.

Reduction runs over fixed-size chunks in a fixed order, so results are
bit-identical for any worker count.
"""

from __future__ import annotations

import math
import multiprocessing
from dataclasses import dataclass, field

import numpy as np

from . import sampler, trajectory
from .geometry import BilliardGeometry
from .potential import QuenchPotential, evaluate
from .sampler import ThermalEnsemble
from .trajectory import MAX_BOUNCES_DEFAULT

CHUNK_SIZE = 8192
PILOT_SAMPLES = 4096
FAILURE_BUDGET = 1e-3


class ExcessiveFailures(RuntimeError):
    """More than the failure budget of samples errored; the average is biased."""


@dataclass(frozen=True)
class UGridPlan:
    """Uniform one-sided u grid plus the center of the dual work window."""

    u_values: np.ndarray
    w_center: float

    @property
    def du(self) -> float:
        return float(self.u_values[1] - self.u_values[0])

    @property
    def n_onesided(self) -> int:
        return self.u_values.size


@dataclass
class CharacteristicGrid:
    """Sampled complex G(u) with per-point statistical error.

    stderr_re / stderr_im are standard errors of the real and imaginary
    quadratures; deterministic producers (the quantum oracle) store zeros.
    """

    u_values: np.ndarray
    g_values: np.ndarray
    stderr_re: np.ndarray
    stderr_im: np.ndarray
    n_samples: int
    hbar: float
    beta: float
    w_center: float = 0.0
    n_failed: int = 0
    metadata: dict = field(default_factory=dict)
    # Optional raw second-moment matrix of the per-sample [cos; sin] phase
    # vector over the distinct |u| times, for exact error propagation through
    # any linear functional of G (see quadrature_covariance).
    second_moment: np.ndarray | None = None

    @property
    def stderr(self) -> np.ndarray:
        return np.hypot(self.stderr_re, self.stderr_im)

    def quadrature_covariance(self) -> np.ndarray | None:
        """Covariance of the stacked estimator mean [Re G; Im G].

        Available only when the estimator collected second moments on a
        one-sided grid; lets callers propagate errors exactly through any
        linear functional of G instead of assuming independent points.
        """
        if self.second_moment is None:
            return None
        n = self.n_samples
        m = self.second_moment
        k = m.shape[0] // 2
        mu = np.concatenate([self.g_values.real[:k], self.g_values.imag[:k]])
        cov = (m / n - np.outer(mu, mu)) * (n / max(n - 1, 1))
        return cov / n


def plan_u_grid(
    geom: BilliardGeometry,
    pot: QuenchPotential,
    seed: int,
    n_u: int = 512,
    pilot_n: int = PILOT_SAMPLES,
    pad_frac: float = 0.2,
) -> UGridPlan:
    """u grid from Fourier duality against a pilot sample of the work values.

    A pilot of uniform positions gives the support of W = (xi_f - xi_0) V(q);
    the window is padded by ``pad_frac`` of the raw span on each side and
    du = 2 pi / span.  n_u one-sided points (a power of two by convention).
    """
    rng = sampler.block_generator(seed, sampler.STREAM_PILOT, 0)
    qs = sampler.sample_positions(geom, rng, pilot_n)
    w = pot.delta_xi * evaluate(pot, qs)
    lo = float(w.min())
    hi = float(w.max())
    if hi - lo <= 0.0:
        lo, hi = lo - 1.0, hi + 1.0
    return plan_from_window(lo, hi, n_u, pad_frac=pad_frac)


def plan_from_window(
    w_lo: float, w_hi: float, n_u: int = 512, pad_frac: float = 0.0
) -> UGridPlan:
    """u grid dual to an explicit work window [w_lo, w_hi]."""
    if not w_hi > w_lo:
        raise ValueError("need w_hi > w_lo")
    pad = pad_frac * (w_hi - w_lo)
    lo, hi = w_lo - pad, w_hi + pad
    du = 2.0 * math.pi / (hi - lo)
    u = np.arange(n_u) * du
    return UGridPlan(u_values=u, w_center=0.5 * (lo + hi))


def _resolve_grid(u_grid) -> tuple[np.ndarray, float]:
    if isinstance(u_grid, UGridPlan):
        return np.asarray(u_grid.u_values, dtype=float), u_grid.w_center
    return np.asarray(u_grid, dtype=float), 0.0


def _phase_times(u: np.ndarray, hbar: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Checkpoint times for |u| plus the map from grid entries to them."""
    if u.ndim != 1 or u.size == 0:
        raise ValueError("u grid must be a nonempty 1D array")
    du = np.diff(u)
    if u.size > 1 and not np.allclose(du, du[0], rtol=0.0, atol=1e-12 * abs(du[0])):
        raise ValueError("u grid must be uniform")
    if not np.any(u == 0.0):
        raise ValueError("u grid must contain u = 0")
    mags = np.abs(u)
    uniq, inverse = np.unique(mags, return_inverse=True)
    return uniq * hbar, inverse, np.sign(u)


def _chunk_phase_sums(args):
    """Per-chunk phase accumulation; module-level so worker pools can pickle it."""
    (qs, ps, times, geom, pot, hbar, max_bounces, want_cov) = args
    integrals, failed = trajectory.checkpoint_action_integrals(
        qs, ps, times, geom, pot, max_bounces
    )
    good = ~failed
    phases = (pot.delta_xi / hbar) * integrals[good]
    c = np.cos(phases)
    s = np.sin(phases)
    if want_cov:
        v = np.concatenate([c, s], axis=1)
        moment = v.T @ v
    else:
        moment = None
    return (
        c.sum(axis=0),
        s.sum(axis=0),
        (c * c).sum(axis=0),
        (s * s).sum(axis=0),
        int(good.sum()),
        int(failed.sum()),
        moment,
    )


def semiclassical_characteristic(
    ensemble: ThermalEnsemble,
    u_grid,
    hbar: float,
    geom: BilliardGeometry,
    pot: QuenchPotential,
    workers: int = 1,
    chunk_size: int = CHUNK_SIZE,
    max_bounces: int = MAX_BOUNCES_DEFAULT,
    collect_covariance: bool = False,
) -> CharacteristicGrid:
    """Monte Carlo G(u) over an ensemble: sample mean of the dephasing phases.

    Errored samples are dropped and counted; the run aborts if more than
    FAILURE_BUDGET of them fail, since silent rejection would bias the
    Boltzmann weighting.  ``collect_covariance`` additionally accumulates the
    second-moment matrix of the per-sample phase vector (quadratic in the
    grid size; needs a one-sided grid) for exact downstream error bars.
    """
    if not hbar > 0.0:
        raise ValueError(f"hbar must be positive, got {hbar}")
    u, w_center = _resolve_grid(u_grid)
    times, inverse, signs = _phase_times(u, hbar)
    if collect_covariance and (u.size != times.size or np.any(u < 0.0)):
        raise ValueError("covariance collection needs a one-sided ascending grid")

    n = len(ensemble)
    tasks = [
        (
            ensemble.qs[lo : min(lo + chunk_size, n)],
            ensemble.ps[lo : min(lo + chunk_size, n)],
            times,
            geom,
            pot,
            hbar,
            max_bounces,
            collect_covariance,
        )
        for lo in range(0, n, chunk_size)
    ]
    if workers > 1 and len(tasks) > 1:
        with multiprocessing.Pool(workers) as pool:
            results = pool.map(_chunk_phase_sums, tasks)
    else:
        results = [_chunk_phase_sums(t) for t in tasks]

    k = times.size
    sum_c = np.zeros(k)
    sum_s = np.zeros(k)
    sum_c2 = np.zeros(k)
    sum_s2 = np.zeros(k)
    moment = np.zeros((2 * k, 2 * k)) if collect_covariance else None
    n_ok = 0
    n_failed = 0
    # Fixed-order reduction: chunk index order, independent of worker count.
    for c, s, c2, s2, ok, fail, mom in results:
        sum_c += c
        sum_s += s
        sum_c2 += c2
        sum_s2 += s2
        if moment is not None:
            moment += mom
        n_ok += ok
        n_failed += fail

    if n_failed > FAILURE_BUDGET * n:
        raise ExcessiveFailures(f"{n_failed} of {n} samples failed")
    if n_ok == 0:
        raise ExcessiveFailures("no valid samples")

    mean_c = sum_c / n_ok
    mean_s = sum_s / n_ok
    if n_ok > 1:
        var_c = np.maximum(sum_c2 - n_ok * mean_c * mean_c, 0.0) / (n_ok - 1)
        var_s = np.maximum(sum_s2 - n_ok * mean_s * mean_s, 0.0) / (n_ok - 1)
    else:
        var_c = np.zeros(k)
        var_s = np.zeros(k)
    se_c = np.sqrt(var_c / n_ok)
    se_s = np.sqrt(var_s / n_ok)

    # Map |u| results onto the requested grid; negative u conjugates exactly.
    g = mean_c[inverse] + 1j * (signs * mean_s[inverse])
    return CharacteristicGrid(
        u_values=u,
        g_values=g,
        stderr_re=se_c[inverse],
        stderr_im=se_s[inverse],
        n_samples=n_ok,
        hbar=float(hbar),
        beta=float(ensemble.beta),
        w_center=w_center,
        n_failed=n_failed,
        metadata={"seed": ensemble.seed, "estimator": "boltzmann"},
        second_moment=moment,
    )


def shell_characteristic(
    beta: float,
    u_grid,
    hbar: float,
    geom: BilliardGeometry,
    pot: QuenchPotential,
    energies,
    samples_per_shell: int,
    seed: int,
    workers: int = 1,
    chunk_size: int = CHUNK_SIZE,
    max_bounces: int = MAX_BOUNCES_DEFAULT,
) -> CharacteristicGrid:
    """Shell-resolved estimator: Boltzmann-weighted microcanonical averages.

    Each listed energy is sampled uniformly on its shell (uniform position,
    uniform momentum direction, |p| = sqrt(E)) and the per-shell phase
    averages are combined with weights proportional to exp(-beta E).  The
    flat weighting in E is valid here because the density of states of the
    free billiard is constant.
    """
    energies = np.asarray(energies, dtype=float)
    if energies.size == 0:
        raise ValueError("need at least one shell energy")
    if np.any(np.diff(energies) <= 0.0):
        raise ValueError("shell energies must be strictly increasing")
    if not hbar > 0.0:
        raise ValueError(f"hbar must be positive, got {hbar}")
    u, w_center = _resolve_grid(u_grid)
    times, inverse, signs = _phase_times(u, hbar)

    log_w = -beta * (energies - energies.min())
    weights = np.exp(log_w)
    wsum = weights.sum()

    k = times.size
    g_shell = np.zeros((energies.size, k), dtype=complex)
    var_c = np.zeros((energies.size, k))
    var_s = np.zeros((energies.size, k))
    total_failed = 0
    for m, energy in enumerate(energies):
        qs, ps = sampler.sample_shell(geom, float(energy), samples_per_shell, seed, m)
        c, s, c2, s2, ok, fail, _ = _chunk_phase_sums(
            (qs, ps, times, geom, pot, hbar, max_bounces, False)
        )
        total_failed += fail
        if fail > FAILURE_BUDGET * samples_per_shell:
            raise ExcessiveFailures(f"shell {m}: {fail} of {samples_per_shell} failed")
        mc = c / ok
        ms = s / ok
        g_shell[m] = mc + 1j * ms
        if ok > 1:
            var_c[m] = np.maximum(c2 - ok * mc * mc, 0.0) / (ok - 1) / ok
            var_s[m] = np.maximum(s2 - ok * ms * ms, 0.0) / (ok - 1) / ok

    g_mag = (weights @ g_shell) / wsum
    se_c = np.sqrt((weights * weights) @ var_c) / wsum
    se_s = np.sqrt((weights * weights) @ var_s) / wsum

    g = g_mag.real[inverse] + 1j * (signs * g_mag.imag[inverse])
    # Every phase is exactly 1 at zero time, so the weighted mean there is
    # exactly 1; enforce it against summation-order rounding.
    g[np.asarray(u) == 0.0] = 1.0 + 0.0j
    return CharacteristicGrid(
        u_values=u,
        g_values=g,
        stderr_re=se_c[inverse],
        stderr_im=se_s[inverse],
        n_samples=int(energies.size * samples_per_shell),
        hbar=float(hbar),
        beta=float(beta),
        w_center=w_center,
        n_failed=total_failed,
        metadata={"seed": int(seed), "estimator": "shell", "n_shells": int(energies.size)},
    )
