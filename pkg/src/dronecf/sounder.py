"""
Drone virtual-array sounding.

The transmitter flies a waypoint polyline at constant speed and altitude
while the ground receiver captures one transfer function per capture
interval, so the AP positions are laid out by arc length at a fixed spacing
of speed * interval. Re-flights of the same plan land at slightly different
positions; that positioning error is modelled as i.i.d. Gaussian jitter per
axis and per capture.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .channel import DatasetMetadata, SoundingDataset, records_from_array
from .errors import DuplicateKeyError, InvalidPlanError, OutOfBoundsError
from .field import EnvironmentModel, _seed_words, link_channels

_JITTER_STREAM = 0x717E


@dataclass(frozen=True)
class FlightPlan:
    waypoints: np.ndarray
    altitude_m: float = 35.0
    speed_mps: float = 4.0
    capture_interval_s: float = 0.05
    jitter_sigma_m: float = 0.1

    def __post_init__(self):
        wp = np.array(self.waypoints, dtype=float)
        if wp.ndim != 2 or wp.shape[1] != 2:
            raise InvalidPlanError(f"waypoints must be an (N, 2) array, got shape {wp.shape}")
        if wp.shape[0] < 2:
            raise InvalidPlanError("a flight plan needs at least two waypoints")
        if not np.all(np.isfinite(wp)):
            raise InvalidPlanError("waypoints must be finite")
        if not self.speed_mps > 0 or not self.capture_interval_s > 0:
            raise InvalidPlanError("speed and capture interval must be positive")
        if self.jitter_sigma_m < 0:
            raise InvalidPlanError("jitter_sigma_m must be >= 0")
        wp.setflags(write=False)
        object.__setattr__(self, "waypoints", wp)

    @property
    def spacing_m(self) -> float:
        return self.speed_mps * self.capture_interval_s

    @property
    def is_closed(self) -> bool:
        return bool(np.array_equal(self.waypoints[0], self.waypoints[-1]))

    @property
    def path_length_m(self) -> float:
        return float(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1).sum())

    def to_dict(self) -> dict:
        return {
            "waypoints": self.waypoints.tolist(),
            "altitude_m": self.altitude_m,
            "speed_mps": self.speed_mps,
            "capture_interval_s": self.capture_interval_s,
            "jitter_sigma_m": self.jitter_sigma_m,
        }


@dataclass(frozen=True)
class CaptureSchedule:
    positions: np.ndarray    # (N, 3)
    timestamps: np.ndarray   # (N,), seconds from take-off
    arc_length: np.ndarray   # (N,), meters along the polyline

    def __len__(self):
        return self.positions.shape[0]

    @property
    def duration_s(self) -> float:
        return float(self.timestamps[-1])


def rectangle_loop(x0: float, y0: float, x1: float, y1: float) -> np.ndarray:
    """Closed counter-clockwise rectangular loop starting at (x0, y0)."""
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]], dtype=float)


def plan_captures(plan: FlightPlan) -> CaptureSchedule:
    """Capture positions every speed*interval meters of arc length along the plan."""
    wp = plan.waypoints
    seg = np.diff(wp, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    keep = seg_len > 0
    starts, seg, seg_len = wp[:-1][keep], seg[keep], seg_len[keep]
    total = float(seg_len.sum())
    if total == 0.0:
        raise InvalidPlanError("flight path has zero length")
    spacing = plan.spacing_m
    # the epsilon absorbs rounding in total/spacing for paths that are exact multiples
    count = int(math.floor(total / spacing + 1e-9)) + 1
    s = np.arange(count) * spacing
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, seg_len.size - 1)
    frac = np.clip((s - cum[idx]) / seg_len[idx], 0.0, 1.0)
    xy = starts[idx] + frac[:, None] * seg[idx]
    positions = np.column_stack([xy, np.full(count, float(plan.altitude_m))])
    return CaptureSchedule(positions=positions, timestamps=np.arange(count) * plan.capture_interval_s,
                           arc_length=s)


def campaign_metadata(plan: FlightPlan, env: EnvironmentModel) -> DatasetMetadata:
    return DatasetMetadata(
        carrier_hz=env.carrier_hz,
        bandwidth_hz=env.bandwidth_hz,
        n_freq=int(env.n_freq),
        speed_mps=plan.speed_mps,
        capture_interval_s=plan.capture_interval_s,
        altitude_m=plan.altitude_m,
        environment_seed=int(env.seed),
    )


def jitter_offsets(plan: FlightPlan, env: EnvironmentModel, n: int, ue_id: int, trial: int) -> np.ndarray:
    rng = np.random.default_rng(_seed_words(env.seed, _JITTER_STREAM, ue_id, trial))
    return rng.normal(0.0, plan.jitter_sigma_m, size=(n, 3))


def fly(plan: FlightPlan, env: EnvironmentModel, ue_position, ue_id: int, trial: int = 1,
        jitter_enabled: bool = True, schedule: Optional[CaptureSchedule] = None) -> SoundingDataset:
    """
    Fly one plan for one UE and return the sounded channels.

    Records carry the nominal capture positions; the channels are sampled at
    the jittered positions when `jitter_enabled` is set.
    """
    ue = np.asarray(ue_position, dtype=float)
    if ue.shape != (3,):
        raise OutOfBoundsError(f"UE position must be a 3-vector, got {ue_position!r}")
    if not env.contains(ue):
        raise OutOfBoundsError(f"UE {ue_id} at {ue.tolist()} lies outside the {env.area} area")
    if schedule is None:
        schedule = plan_captures(plan)
    nominal = schedule.positions
    actual = nominal
    if jitter_enabled and plan.jitter_sigma_m > 0:
        actual = nominal + jitter_offsets(plan, env, len(schedule), ue_id, trial)
    channels = link_channels(actual, ue, env, ue_id)
    return SoundingDataset(campaign_metadata(plan, env), records_from_array(channels, nominal, ue_id, trial))


def multi_ue_campaign(plan: FlightPlan, env: EnvironmentModel, ue_specs: Sequence, trials_per_ue: int = 1,
                      jitter_enabled: bool = True, workers: int = 1) -> SoundingDataset:
    """
    Re-fly the same plan for every UE and trial.

    Args:
        ue_specs: sequence of (ue_id, position) pairs.
        trials_per_ue: flights per UE, numbered 1..trials_per_ue.
        workers: thread count; the output does not depend on it.

    Returns:
        One dataset ordered by (ue_id, trial, ap_index).
    """
    specs = [(int(uid), np.asarray(pos, dtype=float)) for uid, pos in ue_specs]
    if not specs:
        raise InvalidPlanError("campaign needs at least one UE")
    ids = [uid for uid, _ in specs]
    dupes = sorted({u for u in ids if ids.count(u) > 1})
    if dupes:
        raise DuplicateKeyError(f"duplicate (ue_id, trial) keys for UEs {dupes}")
    for uid, pos in specs:
        if pos.shape != (3,) or not env.contains(pos):
            raise OutOfBoundsError(f"UE {uid} at {pos.tolist()} lies outside the {env.area} area")

    schedule = plan_captures(plan)
    jobs = [(uid, t, pos) for uid, pos in sorted(specs, key=lambda s: s[0])
            for t in range(1, int(trials_per_ue) + 1)]

    def run(job):
        uid, t, pos = job
        return fly(plan, env, pos, uid, t, jitter_enabled=jitter_enabled, schedule=schedule)

    if workers and workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            flights = list(pool.map(run, jobs))
    else:
        flights = [run(job) for job in jobs]

    records = [rec for flight in flights for rec in flight.records]
    return SoundingDataset(campaign_metadata(plan, env), records)
