"""Monte Carlo simulation of the full spatial model.

One trial samples BSs and users as PPPs on a disk around a tagged user at
the origin, associates everyone with the nearest BS, draws Rayleigh fading
and evaluates the tagged user's SINR when it is scheduled. Nothing here
uses the analytical approximations; the module is the reference the
analysis is checked against.

Two shortcuts keep trials cheap without changing the law of the SINR:

* Scenario 1 only needs the users of the serving cell. If every 60-degree
  sector around the serving BS holds another BS within distance delta, the
  serving cell lies inside the disk of radius delta around it, so users are
  only sampled there (the PPP restricted to disjoint regions is independent).
* The tagged user's gain given that it is scheduled is the maximum of N+1
  exponentials, so one draw per trial replaces simulating many slots.

Interference from BSs beyond the window is replaced by its mean (the far
field is a sum of many small independent terms).
"""

from __future__ import annotations

import csv
import enum
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from nsnr.errors import ConfigError
from nsnr.model import NetworkConfig, Scenario

DEFAULT_EXPECTED_BS = 300
MIN_EXPECTED_BS = 20
DEFAULT_BATCH = 1000
Z95 = 1.959963984540054

# nearest neighbours of the serving BS examined before falling back to all BSs
_SECTOR_CANDIDATES = 32


class Scheduler(enum.Enum):
    NORMALIZED_SNR = "normalized_snr"
    ROUND_ROBIN = "round_robin"

    @classmethod
    def parse(cls, value) -> "Scheduler":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower().replace("-", "_")
        for member in cls:
            if text in (member.value, member.name.lower()):
                return member
        if text in ("nsnr", "ns", "normalized"):
            return cls.NORMALIZED_SNR
        if text in ("rr", "roundrobin"):
            return cls.ROUND_ROBIN
        raise ConfigError(f"unknown scheduler {value!r}")


@dataclass
class Realization:
    bs_points: np.ndarray
    user_points: np.ndarray
    serving_bs: int
    cell_user_count: int
    window_radius: float
    # nearest-BS index per user, -1 where the association was not resolved
    user_bs: np.ndarray
    # True when every user in the window was sampled and associated
    complete: bool
    resamples: int = 0

    tagged_user = (0.0, 0.0)

    @property
    def serving_distance(self) -> float:
        return float(np.hypot(*self.bs_points[self.serving_bs]))

    def active_mask(self) -> np.ndarray:
        """BSs with at least one associated user; the tagged user counts."""
        if not self.complete:
            raise ValueError("activity needs a realization with every user associated")
        mask = np.bincount(self.user_bs, minlength=len(self.bs_points)) > 0
        mask[self.serving_bs] = True
        return mask


@dataclass
class LinkDraw:
    fading: np.ndarray
    distances: np.ndarray
    user_fading: np.ndarray
    tail_interference: float = 0.0

    @property
    def serving_fading(self) -> float:
        """Gain of the scheduled tagged user, the largest in its cell."""
        return float(self.user_fading.max())

    @property
    def roundrobin_fading(self) -> float:
        return float(self.user_fading[0])

    def gain(self, scheduler: Scheduler) -> float:
        if scheduler is Scheduler.NORMALIZED_SNR:
            return self.serving_fading
        return self.roundrobin_fading


def default_window_radius(cfg: NetworkConfig, expected_bs: int = DEFAULT_EXPECTED_BS) -> float:
    return math.sqrt(expected_bs / (math.pi * cfg.lambda_b))


def _uniform_disk(rng, count, radius, center=(0.0, 0.0)):
    r = radius * np.sqrt(rng.random(count))
    phi = 2.0 * np.pi * rng.random(count)
    return np.column_stack((center[0] + r * np.cos(phi), center[1] + r * np.sin(phi)))


def _cell_radius_bound(offsets, dist, serving):
    """Radius around the serving BS that provably contains its Voronoi cell.

    If each 60-degree sector around a BS has a neighbour within delta, no
    point farther than delta is closer to it than to that neighbour.
    """
    others = len(dist) - 1
    if others < 6:
        return math.inf
    k = min(others, _SECTOR_CANDIDATES)
    for idx in (np.argpartition(dist, k)[: k + 1], None):
        if idx is None:
            idx = np.arange(len(dist))
        idx = idx[idx != serving]
        v = offsets[idx]
        sector = (np.floor(np.arctan2(v[:, 1], v[:, 0]) / (np.pi / 3.0)).astype(int)) % 6
        best = np.full(6, np.inf)
        np.minimum.at(best, sector, dist[idx])
        if np.all(np.isfinite(best)):
            return float(best.max())
    return math.inf


def sample_realization(
    cfg: NetworkConfig,
    window_radius: float | None = None,
    rng: np.random.Generator | None = None,
    *,
    full_users: bool = True,
    far_rng: np.random.Generator | None = None,
) -> Realization:
    """Sample BSs and users on a disk with the tagged user at the origin.

    With ``full_users=False`` only users that can fall in the serving cell
    are sampled; the serving-cell count is still exact. ``far_rng`` (default
    ``rng``) supplies the remaining users, so runs that differ only in
    ``full_users`` share BS positions and serving-cell users.
    """
    if rng is None:
        rng = np.random.default_rng()
    if far_rng is None:
        far_rng = rng
    if window_radius is None:
        window_radius = default_window_radius(cfg)
    area = math.pi * window_radius**2
    if not window_radius > 0 or cfg.lambda_b * area < MIN_EXPECTED_BS:
        raise ConfigError(
            f"window radius {window_radius} holds {cfg.lambda_b * area:.1f} BSs on average; "
            f"need at least {MIN_EXPECTED_BS}"
        )

    resamples = 0
    while True:
        nb = rng.poisson(cfg.lambda_b * area)
        if nb > 0:
            break
        resamples += 1
    bs = _uniform_disk(rng, nb, window_radius)
    serving = int(np.argmin(np.einsum("ij,ij->i", bs, bs)))
    b0 = bs[serving]
    offsets = bs - b0
    dist = np.hypot(offsets[:, 0], offsets[:, 1])
    delta = _cell_radius_bound(offsets, dist, serving)

    if math.isfinite(delta) and delta < window_radius:
        near = _uniform_disk(rng, rng.poisson(cfg.lambda_u * math.pi * delta**2), delta, b0)
        near = near[np.einsum("ij,ij->i", near, near) <= window_radius**2]
    else:
        delta = math.inf
        near = _uniform_disk(rng, rng.poisson(cfg.lambda_u * area), window_radius)

    if full_users:
        if math.isfinite(delta):
            far = _uniform_disk(far_rng, far_rng.poisson(cfg.lambda_u * area), window_radius)
            rel = far - b0
            far = far[np.einsum("ij,ij->i", rel, rel) > delta**2]
            users = np.vstack((near, far))
        else:
            users = near
        _, assoc = cKDTree(bs).query(users) if len(users) else (None, np.zeros(0, dtype=int))
        assoc = np.asarray(assoc, dtype=int)
        count = int(np.count_nonzero(assoc == serving))
        return Realization(bs, users, serving, count, window_radius, assoc, True, resamples)

    # any BS closer to a near user than b0 lies within 2*delta of b0
    if math.isfinite(delta):
        cand = np.flatnonzero(dist <= 2.0 * delta)
    else:
        cand = np.arange(nb)
    assoc = np.full(len(near), -1, dtype=int)
    if len(near):
        diff = near[:, None, :] - bs[cand][None, :, :]
        nearest = cand[np.argmin(np.einsum("ijk,ijk->ij", diff, diff), axis=1)]
        assoc[nearest == serving] = serving
    count = int(np.count_nonzero(assoc == serving))
    return Realization(bs, near, serving, count, window_radius, assoc, False, resamples)


def window_tail_interference(cfg: NetworkConfig, window_radius: float, active_fraction: float = 1.0) -> float:
    """Mean interference from a PPP of BSs beyond the window radius."""
    a = cfg.alpha
    return (
        cfg.power * active_fraction * 2.0 * math.pi * cfg.lambda_b * window_radius ** (2.0 - a) / (a - 2.0)
    )


def interferer_mask(real: Realization, scenario: Scenario) -> np.ndarray:
    if Scenario.parse(scenario) is Scenario.ONLY_LOADED_BS_ACTIVE:
        mask = real.active_mask()
    else:
        mask = np.ones(len(real.bs_points), dtype=bool)
    mask[real.serving_bs] = False
    return mask


def _active_fraction(real: Realization, scenario: Scenario) -> float:
    if Scenario.parse(scenario) is not Scenario.ONLY_LOADED_BS_ACTIVE:
        return 1.0
    # inner half of the window: cells there are not clipped by its edge
    inner = np.einsum("ij,ij->i", real.bs_points, real.bs_points) <= (real.window_radius / 2.0) ** 2
    inner[real.serving_bs] = False
    if not inner.any():
        return 1.0
    return float(real.active_mask()[inner].mean())


def draw_links(
    real: Realization, cfg: NetworkConfig, rng: np.random.Generator, tail_correction: bool = True
) -> LinkDraw:
    """Draw fading for every BS and for the N+1 users of the serving cell."""
    gains = rng.exponential(size=len(real.bs_points))
    user_fading = rng.exponential(size=real.cell_user_count + 1)
    mask = interferer_mask(real, cfg.scenario)
    pts = real.bs_points[mask]
    tail = 0.0
    if tail_correction:
        tail = window_tail_interference(cfg, real.window_radius, _active_fraction(real, cfg.scenario))
    return LinkDraw(gains[mask], np.hypot(pts[:, 0], pts[:, 1]), user_fading, tail)


def link_sinr(real: Realization, links: LinkDraw, cfg: NetworkConfig, scheduler: Scheduler) -> float:
    a = cfg.alpha
    signal = cfg.power * links.gain(Scheduler.parse(scheduler)) * real.serving_distance ** (-a)
    interference = cfg.power * float(np.sum(links.fading * links.distances ** (-a))) + links.tail_interference
    return signal / (cfg.noise + interference)


def simulate_sinr(
    real: Realization,
    cfg: NetworkConfig,
    scheduler: Scheduler,
    rng: np.random.Generator,
    tail_correction: bool = True,
) -> float:
    """Linear SINR of the tagged user in one slot in which it is scheduled."""
    return link_sinr(real, draw_links(real, cfg, rng, tail_correction), cfg, scheduler)


@dataclass
class TrialStatistics:
    thetas: tuple
    trials: int
    coverage_hits: np.ndarray
    rate_sum: float
    rate_sq_sum: float
    seed: int
    scheduler: Scheduler
    scenario: Scenario
    resamples: int = 0

    def coverage(self) -> np.ndarray:
        return self.coverage_hits / self.trials

    def coverage_halfwidth(self) -> np.ndarray:
        """95% half-widths; Wilson where hits or misses are fewer than 30."""
        n = self.trials
        out = np.empty(len(self.thetas))
        for i, hits in enumerate(self.coverage_hits):
            p = hits / n
            if min(hits, n - hits) < 30:
                z2 = Z95 * Z95
                denom = 1.0 + z2 / n
                out[i] = Z95 * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
            else:
                out[i] = Z95 * math.sqrt(p * (1 - p) / n)
        return out

    def rate_mean(self) -> float:
        return self.rate_sum / self.trials

    def rate_std(self) -> float:
        n = self.trials
        if n < 2:
            return 0.0
        mean = self.rate_mean()
        return math.sqrt(max(0.0, (self.rate_sq_sum - n * mean * mean) / (n - 1)))

    def rate_halfwidth(self) -> float:
        return Z95 * self.rate_std() / math.sqrt(self.trials)

    def merge(self, other: "TrialStatistics") -> "TrialStatistics":
        if tuple(self.thetas) != tuple(other.thetas):
            raise ValueError("cannot merge statistics over different thresholds")
        return TrialStatistics(
            self.thetas,
            self.trials + other.trials,
            self.coverage_hits + other.coverage_hits,
            self.rate_sum + other.rate_sum,
            self.rate_sq_sum + other.rate_sq_sum,
            self.seed,
            self.scheduler,
            self.scenario,
            self.resamples + other.resamples,
        )


def batch_streams(seed: int, batch: int):
    """Independent generators for (geometry, far users, fading) of one batch."""
    return [np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(batch, k))) for k in range(3)]


@dataclass(frozen=True)
class _BatchJob:
    cfg: NetworkConfig
    thetas: tuple
    count: int
    seed: int
    batch: int
    window_radius: float
    tail_correction: bool


def _run_batch(job: _BatchJob):
    geo, far, fade = batch_streams(job.seed, job.batch)
    full = job.cfg.scenario is Scenario.ONLY_LOADED_BS_ACTIVE
    sinr = np.empty((2, job.count))
    resamples = 0
    for i in range(job.count):
        real = sample_realization(job.cfg, job.window_radius, geo, full_users=full, far_rng=far)
        resamples += real.resamples
        links = draw_links(real, job.cfg, fade, job.tail_correction)
        sinr[0, i] = link_sinr(real, links, job.cfg, Scheduler.NORMALIZED_SNR)
        sinr[1, i] = link_sinr(real, links, job.cfg, Scheduler.ROUND_ROBIN)
    thetas = np.asarray(job.thetas, dtype=float)
    hits = (sinr[:, :, None] > thetas[None, None, :]).sum(axis=1)
    rates = np.log1p(sinr)
    return hits, rates.sum(axis=1), (rates * rates).sum(axis=1), resamples


def run_paired_trials(
    cfg: NetworkConfig,
    thetas,
    trials: int,
    seed: int,
    *,
    window_radius: float | None = None,
    tail_correction: bool = True,
    batch_size: int = DEFAULT_BATCH,
    workers: int = 1,
) -> dict:
    """Both schedulers on the same realizations and fading draws.

    The round-robin user is the first of the N+1 users whose maximum the
    normalized-SNR scheduler picks, so the two SINRs are coupled pathwise.
    Batches get their own seed streams, which makes the result independent
    of ``workers``.
    """
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    thetas = tuple(float(t) for t in thetas)
    if window_radius is None:
        window_radius = default_window_radius(cfg)
    sizes = [batch_size] * (trials // batch_size)
    if trials % batch_size:
        sizes.append(trials % batch_size)
    jobs = [
        _BatchJob(cfg, thetas, size, seed, b, window_radius, tail_correction) for b, size in enumerate(sizes)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_batch, jobs))
    else:
        results = [_run_batch(job) for job in jobs]

    out = {}
    for j, scheduler in enumerate((Scheduler.NORMALIZED_SNR, Scheduler.ROUND_ROBIN)):
        hits = np.zeros(len(thetas), dtype=np.int64)
        rate_sum = rate_sq = 0.0
        resamples = 0
        for h, s, sq, rs in results:
            hits += h[j]
            rate_sum += float(s[j])
            rate_sq += float(sq[j])
            resamples += rs
        out[scheduler] = TrialStatistics(
            thetas, trials, hits, rate_sum, rate_sq, seed, scheduler, cfg.scenario, resamples
        )
    return out


def run_trials(
    cfg: NetworkConfig,
    scheduler: Scheduler,
    thetas,
    trials: int,
    seed: int,
    **kwargs,
) -> TrialStatistics:
    """Empirical coverage at each threshold and mean ln(1 + SINR)."""
    return run_paired_trials(cfg, thetas, trials, seed, **kwargs)[Scheduler.parse(scheduler)]


def sample_serving_stats(cfg: NetworkConfig, count: int, seed: int, window_radius: float | None = None):
    """Serving distance R and in-cell user count N over independent realizations."""
    rng = np.random.default_rng(seed)
    if window_radius is None:
        window_radius = default_window_radius(cfg)
    r = np.empty(count)
    n = np.empty(count, dtype=np.int64)
    for i in range(count):
        real = sample_realization(cfg, window_radius, rng, full_users=False)
        r[i] = real.serving_distance
        n[i] = real.cell_user_count
    return r, n


def write_realization_csv(real: Realization, path) -> None:
    """Dump BSs, users and the tagged user as ``kind,x,y,serving_bs_index``.

    BS rows carry their own index; user rows the index of their nearest BS.
    """
    if not real.complete:
        raise ValueError("deployment dumps need a realization with every user associated")
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["kind", "x", "y", "serving_bs_index"])
    for i, (x, y) in enumerate(real.bs_points):
        writer.writerow(["bs", repr(float(x)), repr(float(y)), i])
    for (x, y), b in zip(real.user_points, real.user_bs):
        writer.writerow(["user", repr(float(x)), repr(float(y)), int(b)])
    writer.writerow(["tagged", "0.0", "0.0", real.serving_bs])
    if hasattr(path, "write"):
        path.write(buf.getvalue())
    else:
        with open(os.fspath(path), "w", newline="") as fh:
            fh.write(buf.getvalue())
