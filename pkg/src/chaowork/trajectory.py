"""Free flight plus specular bounces under the unperturbed Hamiltonian.

H = |p|^2 with mass 1/2, so dq/dt = 2p: the speed along a ray is twice the
momentum magnitude, and |p| is conserved exactly across bounces.

``propagate``/``action_difference`` are the scalar reference implementations.
``checkpoint_action_integrals`` is the production engine: it advances a whole
batch of trajectories bounce by bounce (vectorized across particles) and
records the running integral of V at a shared grid of checkpoint times in a
single pass, which is what the characteristic-function estimator consumes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import geometry, potential
from .geometry import BilliardGeometry, WALL_NUDGE
from .potential import QuenchPotential
from .sampler import PhasePoint

logger = logging.getLogger(__name__)

MAX_BOUNCES_DEFAULT = 10_000_000


class BounceLimitExceeded(RuntimeError):
    """More reflections than max_bounces: near-zero momentum or broken geometry."""


@dataclass(frozen=True)
class FlightSegment:
    start: np.ndarray
    direction: np.ndarray
    speed: float
    duration: float


def propagate(
    x0: PhasePoint,
    t: float,
    geom: BilliardGeometry,
    max_bounces: int = MAX_BOUNCES_DEFAULT,
) -> tuple[PhasePoint, list[FlightSegment]]:
    """Evolve a phase point for time t; returns the endpoint and its segments.

    Velocity is 2p; straight flight between boundary hits with specular
    reflection of p at each one.  Total segment duration equals t.
    """
    if t < 0.0:
        raise ValueError("propagation time must be nonnegative")
    q = np.asarray(x0.q, dtype=float).copy()
    p = np.asarray(x0.p, dtype=float).copy()
    if not geometry.contains_with_tol(geom, q):
        raise geometry.NoHit(f"initial position {q} outside the billiard")
    pmag = float(np.hypot(p[0], p[1]))
    speed = 2.0 * pmag
    if speed == 0.0:
        seg = FlightSegment(start=q.copy(), direction=np.array([1.0, 0.0]), speed=0.0, duration=t)
        return PhasePoint(q=q, p=p), [seg]
    d = p / pmag
    segments: list[FlightSegment] = []
    remaining = t
    bounces = 0
    while True:
        hit = geometry.first_hit(geom, q, d)
        t_wall = hit.path_length / speed
        if t_wall >= remaining:
            segments.append(
                FlightSegment(start=q.copy(), direction=d.copy(), speed=speed, duration=remaining)
            )
            q = q + d * (speed * remaining)
            break
        segments.append(
            FlightSegment(start=q.copy(), direction=d.copy(), speed=speed, duration=t_wall)
        )
        remaining -= t_wall
        d = geometry.reflect(d, hit.inward_normal)
        d = d / np.hypot(d[0], d[1])
        q = hit.point + WALL_NUDGE * hit.inward_normal
        bounces += 1
        if bounces > max_bounces:
            raise BounceLimitExceeded(f"exceeded {max_bounces} reflections")
    return PhasePoint(q=q, p=d * pmag), segments


def action_difference(
    x0: PhasePoint,
    t: float,
    geom: BilliardGeometry,
    pot: QuenchPotential,
    max_bounces: int = MAX_BOUNCES_DEFAULT,
) -> float:
    """Time integral of the energy jump along the unperturbed trajectory.

    Returns (xi_f - xi_0) * integral of V over the piecewise-straight path,
    each segment integrated in closed form.
    """
    _, segments = propagate(x0, t, geom, max_bounces)
    total = 0.0
    for seg in segments:
        total += potential.segment_integral(pot, seg.start, seg.direction, seg.speed, seg.duration)
    return pot.delta_xi * total


def checkpoint_action_integrals(
    qs: np.ndarray,
    ps: np.ndarray,
    times: np.ndarray,
    geom: BilliardGeometry,
    pot: QuenchPotential,
    max_bounces: int = MAX_BOUNCES_DEFAULT,
) -> tuple[np.ndarray, np.ndarray]:
    """Integral of V from 0 to each checkpoint time, for a batch of particles.

    ``times`` must be ascending and nonnegative.  Returns (integrals, failed)
    where integrals has shape (n, len(times)) and failed flags particles that
    lost geometric containment or exceeded the bounce cap; their rows are
    invalid and should be dropped by the caller.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a nonempty 1D array")
    if np.any(np.diff(times) < 0.0) or times[0] < 0.0:
        raise ValueError("times must be ascending and nonnegative")
    n = qs.shape[0]
    n_times = times.size
    t_end = float(times[-1])

    out = np.zeros((n, n_times))
    failed = np.zeros(n, dtype=bool)

    pmag = np.hypot(ps[:, 0], ps[:, 1])
    speed = 2.0 * pmag
    moving = speed > 0.0
    dirs = np.where(moving[:, None], ps / np.where(moving, pmag, 1.0)[:, None], [1.0, 0.0])

    # Live working arrays; idx maps rows back to the output.
    idx = np.arange(n)
    pos = qs.astype(float).copy()
    d = dirs.astype(float)
    s = speed.copy()
    elapsed = np.zeros(n)
    acc = np.zeros(n)  # running integral of V up to `elapsed`
    k_next = np.searchsorted(times, 0.0, side="right") * np.ones(n, dtype=np.intp)
    bounces = np.zeros(n, dtype=np.int64)
    n_grazing = 0

    if t_end == 0.0:
        return out, failed

    while idx.size:
        t_hit, normals, _, ok, _ = geometry.first_hit_arrays(geom, pos, d)
        with np.errstate(divide="ignore", invalid="ignore"):
            t_wall = np.where(s > 0.0, t_hit / np.where(s > 0.0, s, 1.0), np.inf)
        bad = ~ok & (s > 0.0)

        remaining = t_end - elapsed
        finishing = t_wall >= remaining
        dur = np.where(finishing, remaining, t_wall)
        # A particle that lost the boundary would fly straight out; fail it.
        dur = np.where(bad, 0.0, dur)

        cst = potential.segment_constants(pot, pos, d, s)
        mask = cst.cutoff_mask(dur)

        t_new = np.where(finishing, t_end, elapsed + dur)
        k_hi = np.searchsorted(times, t_new, side="right")
        k_hi = np.where(bad, k_next, k_hi)
        counts = k_hi - k_next
        total = int(counts.sum())
        if total > 0:
            rows = np.repeat(np.arange(idx.size), counts)
            # Checkpoint indices per expanded row: start + within-group offset.
            offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
            kk = np.repeat(k_next, counts) + offsets
            rel = times[kk] - elapsed[rows]
            part = cst.select(rows).integral(rel, mask[rows])
            out[idx[rows], kk] = acc[rows] + part

        acc = acc + cst.integral(dur, mask)
        pos = pos + d * (s * dur)[:, None]
        elapsed = t_new
        k_next = k_hi

        bounce = ~finishing & ~bad
        if bounce.any():
            nn = normals[bounce]
            dd = d[bounce]
            dn = (dd * nn).sum(axis=1)
            grz = int((np.abs(dn) < geometry.TOL_GRAZING).sum())
            n_grazing += grz
            dd = dd - 2.0 * dn[:, None] * nn
            norm = np.hypot(dd[:, 0], dd[:, 1])
            dd /= norm[:, None]
            d[bounce] = dd
            pos[bounce] += WALL_NUDGE * nn
            bounces[bounce] += 1

        over = bounces > max_bounces
        newly_failed = bad | over
        if newly_failed.any():
            failed[idx[newly_failed]] = True

        done = finishing | newly_failed
        if done.any():
            keep = ~done
            idx = idx[keep]
            pos = pos[keep]
            d = d[keep]
            s = s[keep]
            elapsed = elapsed[keep]
            acc = acc[keep]
            k_next = k_next[keep]
            bounces = bounces[keep]

    if n_grazing:
        logger.warning("%d grazing reflections encountered; reflected anyway", n_grazing)
    return out, failed
