"""Fourier inversion: characteristic grids to work histograms.

The W grid is the exact discrete dual of the u grid: a one-sided grid of M
points u_k = k du maps to N = 2M - 1 bins of width dw = 2 pi / (N du)
centered on the planner's window center.  With that pairing the discrete
transforms invert each other exactly, the total mass equals G(0), and
Gaussian broadening (multiplying G by exp(-eps^2 u^2 / 2), i.e. convolving
P with a Gaussian of width eps) preserves the mass bin for bin.

Statistical errors are propagated from the per-u standard errors through the
linear transform, treating grid points as independent.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .characteristic import CharacteristicGrid

logger = logging.getLogger(__name__)

DEFAULT_BROADENING_BINS = 2.0
ALIAS_TOLERANCE = 0.01


class AsymmetricGrid(ValueError):
    """Two-sided u grid that cannot be conjugate-symmetrized."""


class AliasingSuspect(RuntimeError):
    """Significant weight survives at u_max: the work window is too narrow."""


class GridMismatch(ValueError):
    """Histograms on different W grids or broadenings cannot be compared."""


@dataclass
class WorkHistogram:
    """Binned work density (probability per unit W) on a uniform grid."""

    w_values: np.ndarray
    density: np.ndarray
    error: np.ndarray
    bin_width: float
    broadening: float
    total_mass: float
    imag_residue: float = 0.0
    metadata: dict = field(default_factory=dict)

    @property
    def w_min(self) -> float:
        return float(self.w_values[0] - 0.5 * self.bin_width)

    @property
    def w_max(self) -> float:
        return float(self.w_values[-1] + 0.5 * self.bin_width)

    def mean(self) -> float:
        return float((self.w_values * self.density).sum() * self.bin_width)

    def same_grid(self, other: "WorkHistogram") -> bool:
        return (
            self.w_values.shape == other.w_values.shape
            and np.array_equal(self.w_values, other.w_values)
            and self.broadening == other.broadening
        )


def dual_w_grid(u_values: np.ndarray, w_center: float) -> tuple[np.ndarray, float]:
    """Work grid dual to a one-sided uniform u grid."""
    m = u_values.size
    du = float(u_values[1] - u_values[0]) if m > 1 else 1.0
    n = 2 * m - 1
    dw = 2.0 * math.pi / (n * du)
    w = w_center + (np.arange(n) - (m - 1)) * dw
    return w, dw


def _fold_one_sided(g: CharacteristicGrid):
    """Return (u >= 0, G, se_re, se_im) with negative u folded by conjugation."""
    u = np.asarray(g.u_values, dtype=float)
    vals = np.asarray(g.g_values, dtype=complex)
    if not (u < 0.0).any():
        order = np.argsort(u)
        return u[order], vals[order], g.stderr_re[order], g.stderr_im[order]
    order = np.argsort(u)
    u_sorted = u[order]
    if not np.allclose(u_sorted + u_sorted[::-1], 0.0, atol=1e-12):
        raise AsymmetricGrid("u grid is not symmetric about zero")
    pos = u_sorted >= 0.0
    u_pos = u_sorted[pos]
    v_sorted = vals[order]
    v_pos = v_sorted[pos]
    v_neg_conj = np.conj(v_sorted[~pos][::-1])
    mismatch = np.abs(v_pos[1:] - v_neg_conj).max(initial=0.0)
    if mismatch > 1e-9:
        raise AsymmetricGrid(f"G(-u) != conj(G(u)) by {mismatch:.3e}")
    folded = v_pos.copy()
    folded[1:] = 0.5 * (v_pos[1:] + v_neg_conj)
    return u_pos, folded, g.stderr_re[order][pos], g.stderr_im[order][pos]


def invert(
    g: CharacteristicGrid,
    broadening: float | None = None,
    check_aliasing: bool = True,
) -> WorkHistogram:
    """Discrete inverse transform of G(u) onto the dual W grid.

    ``broadening`` is the Gaussian smoothing width eps (None picks the
    default 2 * bin_width); eps = 0 disables smoothing.  Raises
    AliasingSuspect when the integrand still carries weight above
    ALIAS_TOLERANCE at u_max.
    """
    u, vals, se_re, se_im = _fold_one_sided(g)
    m = u.size
    if m < 2:
        raise ValueError("need at least two u points to invert")
    du = float(u[1] - u[0])
    w, dw = dual_w_grid(u, g.w_center)

    eps = DEFAULT_BROADENING_BINS * dw if broadening is None else float(broadening)
    if eps < 0.0:
        raise ValueError("broadening must be nonnegative")
    b = np.exp(-0.5 * (eps * u) ** 2)
    gb = vals * b

    tail_raw = abs(vals[-1])
    tail = abs(gb[-1])
    if tail_raw > ALIAS_TOLERANCE:
        logger.debug(
            "raw |G(u_max)| = %.3f (a work atom keeps it finite; the broadened "
            "tail is what matters for aliasing)",
            tail_raw,
        )
    if check_aliasing and tail > ALIAS_TOLERANCE:
        raise AliasingSuspect(
            f"|G(u_max)| = {tail:.3g} after broadening; widen the work window"
        )

    phase = np.outer(u[1:], w)
    cosm = np.cos(phase)
    sinm = np.sin(phase)
    scale = du / (2.0 * math.pi)
    density = scale * (gb[0].real + 2.0 * (gb[1:].real @ cosm + gb[1:].imag @ sinm))

    var = (scale**2) * (
        (se_re[0] * b[0]) ** 2
        + 4.0 * (((se_re[1:] * b[1:]) ** 2) @ (cosm**2) + ((se_im[1:] * b[1:]) ** 2) @ (sinm**2))
    )
    error = np.sqrt(var)

    total_mass = float(density.sum() * dw)
    scale_ref = max(abs(gb[0].real), 1e-300)
    residue = abs(gb[0].imag) / scale_ref
    return WorkHistogram(
        w_values=w,
        density=density,
        error=error,
        bin_width=dw,
        broadening=eps,
        total_mass=total_mass,
        imag_residue=residue,
        metadata={
            "n_samples": g.n_samples,
            "hbar": g.hbar,
            "beta": g.beta,
            "tail_raw": tail_raw,
            "tail_broadened": tail,
        },
    )


def histogram_to_characteristic(hist: WorkHistogram, u_values: np.ndarray) -> np.ndarray:
    """Forward transform G(u) = sum_j density_j exp(i u w_j) dw."""
    u_values = np.asarray(u_values, dtype=float)
    phase = np.outer(u_values, hist.w_values)
    return hist.bin_width * ((np.cos(phase) + 1j * np.sin(phase)) @ hist.density)


def bin_spikes(
    spike_w: np.ndarray,
    masses: np.ndarray,
    w_values: np.ndarray,
    broadening: float,
    sample_count: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian-broadened binning of point masses onto an existing W grid.

    Each spike contributes mass * N(w; spike, eps) evaluated at the bin
    centers, truncated beyond 8 eps.  When ``sample_count`` is given the
    masses are treated as 1/n Monte Carlo weights and a per-bin standard
    error is returned; otherwise the error is zero (deterministic spikes).
    """
    spike_w = np.asarray(spike_w, dtype=float).ravel()
    masses = np.asarray(masses, dtype=float).ravel()
    n_bins = w_values.size
    dw = float(w_values[1] - w_values[0])
    eps = float(broadening)
    density = np.zeros(n_bins)
    sumsq = np.zeros(n_bins)
    if eps <= 0.0:
        # Plain histogram: nearest-bin assignment.
        j = np.rint((spike_w - w_values[0]) / dw).astype(np.intp)
        ok = (j >= 0) & (j < n_bins)
        density = np.bincount(j[ok], weights=masses[ok] / dw, minlength=n_bins)
        if sample_count:
            sumsq = np.bincount(j[ok], weights=(masses[ok] / dw) ** 2, minlength=n_bins)
    else:
        halfwidth = int(math.ceil(8.0 * eps / dw))
        base = np.floor((spike_w - w_values[0]) / dw).astype(np.intp)
        norm = 1.0 / (eps * math.sqrt(2.0 * math.pi))
        for off in range(-halfwidth, halfwidth + 2):
            j = base + off
            ok = (j >= 0) & (j < n_bins)
            if not ok.any():
                continue
            z = (w_values[j[ok]] - spike_w[ok]) / eps
            contrib = masses[ok] * norm * np.exp(-0.5 * z * z)
            density += np.bincount(j[ok], weights=contrib, minlength=n_bins)
            if sample_count:
                sumsq += np.bincount(j[ok], weights=contrib * contrib, minlength=n_bins)
    if sample_count:
        # density is the sample mean of per-sample kernels phi_s (masses 1/n),
        # so se^2 = (n * sum(contrib^2) - density^2) / (n - 1).
        n = sample_count
        var = np.maximum(sumsq * n - density * density, 0.0) / max(n - 1, 1)
        error = np.sqrt(var)
    else:
        error = np.zeros(n_bins)
    return density, error


def spikes_to_histogram(
    spike_w,
    masses,
    w_values: np.ndarray,
    broadening: float,
    sample_count: int | None = None,
    metadata: dict | None = None,
) -> WorkHistogram:
    density, error = bin_spikes(spike_w, masses, w_values, broadening, sample_count)
    dw = float(w_values[1] - w_values[0])
    return WorkHistogram(
        w_values=np.asarray(w_values, dtype=float),
        density=density,
        error=error,
        bin_width=dw,
        broadening=float(broadening),
        total_mass=float(density.sum() * dw),
        metadata=metadata or {},
    )


def rebin(hist: WorkHistogram, factor: int) -> WorkHistogram:
    """Coarsen a histogram by an integer factor (presentation only)."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    n = (hist.w_values.size // factor) * factor
    w = hist.w_values[:n].reshape(-1, factor).mean(axis=1)
    d = hist.density[:n].reshape(-1, factor).mean(axis=1)
    e = np.sqrt((hist.error[:n].reshape(-1, factor) ** 2).sum(axis=1)) / factor
    return WorkHistogram(
        w_values=w,
        density=d,
        error=e,
        bin_width=hist.bin_width * factor,
        broadening=hist.broadening,
        total_mass=float(d.sum() * hist.bin_width * factor),
        imag_residue=hist.imag_residue,
        metadata=dict(hist.metadata),
    )
