"""
Synthetic ground-truth channel field.

The field stands in for a measured environment. A link between an AP
position and a UE position gets

* a log-distance mean gain referenced to the free-space gain at 1 m, with
  separate exponents for line-of-sight and blocked links and a fixed
  penetration loss for blocked links,
* log-normal shadowing drawn from a Gaussian field over the AP position with
  exponential correlation exp(-r / d_c), smoothed below a 1 m inner scale;
  the field is a random Fourier feature expansion seeded from
  (seed, UE position), so it is evaluated on demand and re-flights see the
  same shadowing,
* small-scale fading from a tapped delay line with evenly spaced taps. On a
  LOS link the zero-delay tap carries the deterministic specular component
  (Rician K-factor split) and the later taps the diffuse power; on a blocked
  link every tap is diffuse. Diffuse taps are sums of sub-rays with fixed
  random directions, so the fading pattern is a smooth function of AP
  position that decorrelates over roughly half a wavelength.

Everything is a pure function of the environment, the positions and the UE
id. Buildings are axis-aligned boxes standing on the ground (z = 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import ChannelRecord
from .errors import GeometryError, InvalidInputError

SPEED_OF_LIGHT = 299_792_458.0

# size of the random Fourier feature expansion of the shadowing field
SHADOWING_FEATURES = 256
# below this scale the shadowing field is smoothed out; sub-meter variation is
# the job of the small-scale fading
SHADOWING_INNER_SCALE_M = 1.0
# sub-rays summed inside each diffuse tap
SUBRAYS_PER_TAP = 16

_SHADOW_STREAM = 0x5AD0
_FADING_STREAM = 0xFAD1


@dataclass(frozen=True)
class Building:
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    height: float

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min and self.height > 0):
            raise InvalidInputError(f"degenerate building footprint {self}")

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, 0.0])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.x_max, self.y_max, self.height])

    def as_list(self) -> list:
        return [self.x_min, self.y_min, self.x_max, self.y_max, self.height]


@dataclass(frozen=True)
class EnvironmentModel:
    """Parameters of the synthetic field. Immutable once built."""

    area: tuple = (400.0, 200.0)
    buildings: tuple = ()
    carrier_hz: float = 3.5e9
    bandwidth_hz: float = 46e6
    n_freq: int = 64
    pathloss_exponent_los: float = 2.0
    pathloss_exponent_nlos: float = 3.5
    building_penetration_db: float = 20.0
    shadowing_sigma_db: float = 6.0
    shadowing_decorrelation_m: float = 25.0
    rician_k_los_db: float = 10.0
    rician_k_nlos_db: float = float("-inf")
    n_multipath_taps: int = 8
    max_excess_delay_s: float = 500e-9
    seed: int = 0

    def __post_init__(self):
        area = tuple(float(a) for a in self.area)
        if len(area) != 2 or min(area) <= 0:
            raise InvalidInputError(f"area extents must be two positive numbers, got {self.area}")
        object.__setattr__(self, "area", area)
        blds = tuple(b if isinstance(b, Building) else Building(*b) for b in self.buildings)
        object.__setattr__(self, "buildings", blds)
        if int(self.n_freq) < 1:
            raise InvalidInputError("n_freq must be >= 1")
        if self.shadowing_sigma_db < 0:
            raise InvalidInputError("shadowing_sigma_db must be >= 0")
        if self.shadowing_decorrelation_m <= 0:
            raise InvalidInputError("shadowing_decorrelation_m must be > 0")
        if int(self.n_multipath_taps) < 1:
            raise InvalidInputError("n_multipath_taps must be >= 1")
        if self.max_excess_delay_s < 0:
            raise InvalidInputError("max_excess_delay_s must be >= 0")
        if self.carrier_hz <= 0 or self.bandwidth_hz < 0:
            raise InvalidInputError("carrier must be > 0 and bandwidth >= 0")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    def contains(self, position) -> bool:
        x, y = float(position[0]), float(position[1])
        return 0.0 <= x <= self.area[0] and 0.0 <= y <= self.area[1]

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["area"] = list(self.area)
        d["buildings"] = [b.as_list() for b in self.buildings]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "EnvironmentModel":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidInputError(f"unknown environment fields: {sorted(unknown)}")
        kwargs = dict(data)
        if "rician_k_nlos_db" in kwargs and kwargs["rician_k_nlos_db"] is None:
            kwargs["rician_k_nlos_db"] = float("-inf")
        return cls(**kwargs)


@dataclass(frozen=True)
class LinkGeometry:
    ap_position: np.ndarray
    ue_position: np.ndarray
    distance_m: float
    is_los: bool

    @classmethod
    def between(cls, ap_position, ue_position, buildings=()) -> "LinkGeometry":
        ap = np.asarray(ap_position, dtype=float)
        ue = np.asarray(ue_position, dtype=float)
        blocked = los_blocked(ap, ue, buildings)
        return cls(ap, ue, float(np.linalg.norm(ap - ue)), not blocked)


def _as_boxes(buildings) -> tuple:
    blds = [b if isinstance(b, Building) else Building(*b) for b in buildings]
    if not blds:
        return np.zeros((0, 3)), np.zeros((0, 3))
    return np.stack([b.lower for b in blds]), np.stack([b.upper for b in blds])


def blocked_many(ap_positions: np.ndarray, ue_position, buildings) -> np.ndarray:
    """Vectorized slab test: True where the segment UE->AP meets any box."""
    ap = np.atleast_2d(np.asarray(ap_positions, dtype=float))
    ue = np.asarray(ue_position, dtype=float)
    lo, hi = _as_boxes(buildings)
    if lo.shape[0] == 0:
        return np.zeros(ap.shape[0], dtype=bool)
    d = (ap - ue)[:, None, :]                      # (N, 1, 3)
    lo_rel = (lo - ue)[None, :, :]                 # (1, B, 3)
    hi_rel = (hi - ue)[None, :, :]
    parallel = d == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = lo_rel / d
        t2 = hi_rel / d
    t_near = np.where(parallel, -np.inf, np.minimum(t1, t2))
    t_far = np.where(parallel, np.inf, np.maximum(t1, t2))
    # a segment parallel to a slab misses unless it lies inside it
    outside = parallel & ((lo_rel > 0.0) | (hi_rel < 0.0))
    t_enter = t_near.max(axis=2)
    t_exit = t_far.min(axis=2)
    hit = (t_enter <= t_exit) & (t_exit >= 0.0) & (t_enter <= 1.0) & ~outside.any(axis=2)
    return hit.any(axis=1)


def los_blocked(ap_position, ue_position, buildings) -> bool:
    """True iff the straight segment between the two positions crosses a building."""
    ap = np.asarray(ap_position, dtype=float)
    ue = np.asarray(ue_position, dtype=float)
    if np.array_equal(ap, ue):
        raise GeometryError("AP and UE positions coincide")
    return bool(blocked_many(ap[None, :], ue, buildings)[0])


def friis_reference_db(carrier_hz: float) -> float:
    """Free-space power gain at 1 m."""
    return 20.0 * math.log10(SPEED_OF_LIGHT / (4.0 * math.pi * carrier_hz))


def _seed_words(*parts) -> list:
    words = []
    for p in parts:
        if isinstance(p, np.ndarray):
            # + 0.0 folds -0.0 onto 0.0 so equal positions hash equally
            bits = np.ascontiguousarray(p + 0.0, dtype=np.float64).view(np.uint64)
            words.extend(int(w) for w in bits)
        else:
            words.append(int(p) % (1 << 64))
    return words


def _shadowing_features(env: EnvironmentModel, ue_position) -> tuple:
    rng = np.random.default_rng(_seed_words(env.seed, _SHADOW_STREAM, np.asarray(ue_position, float)))
    # the spectral density of exp(-|r|/d_c) in 3-D is a multivariate Cauchy
    z = rng.standard_normal((SHADOWING_FEATURES, 3))
    chi = np.abs(rng.standard_normal(SHADOWING_FEATURES))
    omega = z / (chi[:, None] * env.shadowing_decorrelation_m)
    phase = rng.uniform(0.0, 2.0 * np.pi, SHADOWING_FEATURES)
    taper = np.exp(-0.5 * (SHADOWING_INNER_SCALE_M * np.linalg.norm(omega, axis=1)) ** 2)
    return omega, phase, taper


def shadowing_db(ap_positions, ue_position, env: EnvironmentModel) -> np.ndarray:
    """Shadowing (dB) seen from `ue_position` at each AP position."""
    ap = np.atleast_2d(np.asarray(ap_positions, dtype=float))
    if env.shadowing_sigma_db == 0.0:
        return np.zeros(ap.shape[0])
    omega, phase, taper = _shadowing_features(env, ue_position)
    arg = ap[:, 0:1] * omega[:, 0] + ap[:, 1:2] * omega[:, 1] + ap[:, 2:3] * omega[:, 2] + phase
    return env.shadowing_sigma_db * math.sqrt(2.0 / SHADOWING_FEATURES) * (np.cos(arg) @ taper)


def _mean_gain_db_many(ap, ue, env: EnvironmentModel, los: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(ap - ue, axis=1)
    n = np.where(los, env.pathloss_exponent_los, env.pathloss_exponent_nlos)
    g = friis_reference_db(env.carrier_hz) - 10.0 * n * np.log10(d)
    g = g - np.where(los, 0.0, env.building_penetration_db)
    return g + shadowing_db(ap, ue, env)


def mean_gain_db(geometry: LinkGeometry, env: EnvironmentModel) -> float:
    """Large-scale gain (path loss, penetration, shadowing) of a link in dB."""
    ap = np.asarray(geometry.ap_position, dtype=float)[None, :]
    los = np.array([geometry.is_los])
    return float(_mean_gain_db_many(ap, np.asarray(geometry.ue_position, float), env, los)[0])


def frequency_offsets(env: EnvironmentModel) -> np.ndarray:
    """Baseband offsets of the F points: spacing B/F, centred on the carrier."""
    F = int(env.n_freq)
    return (np.arange(F) - (F - 1) / 2.0) * (env.bandwidth_hz / F)


def transfer_function(tap_gains, tap_delays, freq_offsets) -> np.ndarray:
    """H(f) = sum_j a_j exp(-2j pi f tau_j); tap_gains may carry leading batch axes."""
    tap_gains = np.asarray(tap_gains, dtype=complex)
    phasor = np.exp(-2j * np.pi * np.outer(np.asarray(tap_delays, float), np.asarray(freq_offsets, float)))
    return tap_gains @ phasor


def _rician_split(k_db: float) -> tuple:
    """(LOS fraction, diffuse fraction) of the link power."""
    if k_db == float("inf"):
        return 1.0, 0.0
    if k_db == float("-inf"):
        return 0.0, 1.0
    k = 10.0 ** (k_db / 10.0)
    return k / (k + 1.0), 1.0 / (k + 1.0)


@dataclass(frozen=True)
class _ScatterSet:
    delays: np.ndarray       # (n_taps,)
    directions: np.ndarray   # (n_taps, S, 3)
    phases: np.ndarray       # (n_taps, S)


def _scatter_set(env: EnvironmentModel, ue_position, ue_id: int) -> _ScatterSet:
    rng = np.random.default_rng(
        _seed_words(env.seed, _FADING_STREAM, ue_id, np.asarray(ue_position, float)))
    n = int(env.n_multipath_taps)
    # evenly spaced taps over [0, max excess delay]
    delays = np.linspace(0.0, env.max_excess_delay_s, n) if n > 1 else np.zeros(1)
    dirs = rng.standard_normal((n, SUBRAYS_PER_TAP, 3))
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    phases = rng.uniform(0.0, 2.0 * np.pi, (n, SUBRAYS_PER_TAP))
    return _ScatterSet(delays, dirs, phases)


def link_channels(ap_positions, ue_position, env: EnvironmentModel, ue_id: int,
                  los: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Transfer functions from many AP positions to one UE.

    Args:
        ap_positions: (N, 3) AP positions in meters.
        ue_position: UE position in meters.
        env: the environment.
        ue_id: receiver port id; seeds the multipath structure.
        los: optional LOS flags per AP; computed from the buildings when omitted.

    Returns:
        (N, F) complex array of channel samples.
    """
    ap = np.atleast_2d(np.asarray(ap_positions, dtype=float))
    ue = np.asarray(ue_position, dtype=float)
    d = np.linalg.norm(ap - ue, axis=1)
    if np.any(d == 0.0):
        raise GeometryError("AP and UE positions coincide")
    if los is None:
        los = ~blocked_many(ap, ue, env.buildings)
    los = np.asarray(los, dtype=bool).reshape(-1)
    power = 10.0 ** (_mean_gain_db_many(ap, ue, env, los) / 10.0)

    los_frac = np.empty_like(power)
    diff_frac = np.empty_like(power)
    los_frac[los], diff_frac[los] = _rician_split(env.rician_k_los_db)
    los_frac[~los], diff_frac[~los] = _rician_split(env.rician_k_nlos_db)

    sc = _scatter_set(env, ue, ue_id)
    n_taps = sc.delays.size
    k = 2.0 * np.pi / env.wavelength_m
    proj = (ap[:, None, None, 0] * sc.directions[None, :, :, 0]
            + ap[:, None, None, 1] * sc.directions[None, :, :, 1]
            + ap[:, None, None, 2] * sc.directions[None, :, :, 2])
    diffuse = np.exp(1j * (k * proj + sc.phases[None])).sum(axis=2)        # (N, n_taps)
    # on LOS links the zero-delay tap is the specular path alone; the diffuse
    # energy arrives on the later taps
    weight = np.ones((ap.shape[0], n_taps))
    if n_taps > 1:
        weight[los, 0] = 0.0
    weight /= weight.sum(axis=1, keepdims=True)
    diffuse *= np.sqrt(power * diff_frac / SUBRAYS_PER_TAP)[:, None] * np.sqrt(weight)
    taps = diffuse
    taps[:, 0] += np.sqrt(power * los_frac)

    offsets = frequency_offsets(env)
    h = transfer_function(taps, sc.delays, offsets)
    # bulk propagation delay; its carrier term is the LOS phase
    freqs = env.carrier_hz + offsets
    h *= np.exp(-2j * np.pi * np.outer(d / SPEED_OF_LIGHT, freqs))
    return h


def sample_channel(geometry: LinkGeometry, env: EnvironmentModel, ue_id: int, trial: int = 1,
                   ap_index: int = 0) -> ChannelRecord:
    """Channel record of one link. The fading depends on positions and ue_id, not on trial."""
    h = link_channels(np.asarray(geometry.ap_position, float)[None, :], geometry.ue_position, env, ue_id,
                      los=np.array([geometry.is_los]))
    return ChannelRecord(ap_index=ap_index, ap_position=geometry.ap_position, ue_id=ue_id,
                         trial=trial, samples=h[0])
