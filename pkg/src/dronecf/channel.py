"""
Channel records, sounding datasets and the scalar gain analyses.

A ChannelRecord holds the F complex transfer-function samples measured
between one drone (AP) position and one ground receiver port (UE). Each
frequency point is treated as an independent channel realization, so the
average channel gain of a link is the mean of |h|^2 over the F samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    IncompatiblePortsError,
    InvalidDatasetError,
    InvalidRecordError,
    TrajectoryMismatchError,
)

# dB value reported for links whose average gain is exactly zero
NO_SIGNAL_DB = float("-inf")


def db_to_linear(db):
    """Power dB to linear scale. Works on scalars and arrays."""
    if np.ndim(db):
        return 10.0 ** (np.asarray(db, dtype=float) / 10.0)
    return 10.0 ** (float(db) / 10.0)


def linear_to_db(linear):
    """Linear power to dB; zero maps to NO_SIGNAL_DB instead of raising."""
    if np.ndim(linear):
        arr = np.asarray(linear, dtype=float)
        out = np.full(arr.shape, NO_SIGNAL_DB)
        pos = arr > 0
        out[pos] = 10.0 * np.log10(arr[pos])
        return out
    linear = float(linear)
    if linear <= 0.0:
        return NO_SIGNAL_DB
    return float(10.0 * np.log10(linear))


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((float(dbm) - 30.0) / 10.0)


@dataclass(frozen=True, eq=False)
class ChannelRecord:
    """Complex channel samples between one AP position and one UE port."""

    ap_index: int
    ap_position: np.ndarray
    ue_id: int
    trial: int
    samples: np.ndarray

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.complex128).reshape(-1)
        pos = np.array(self.ap_position, dtype=float).reshape(-1)
        if pos.shape != (3,):
            raise InvalidRecordError(f"ap_position must be a 3-vector, got shape {pos.shape}")
        if samples.size == 0:
            raise InvalidRecordError("record has no samples")
        if not np.all(np.isfinite(samples)):
            raise InvalidRecordError("record samples must be finite")
        if not np.all(np.isfinite(pos)):
            raise InvalidRecordError("ap_position must be finite")
        if int(self.ap_index) < 0 or int(self.ue_id) < 0:
            raise InvalidRecordError("ap_index and ue_id must be >= 0")
        if int(self.trial) < 1:
            raise InvalidRecordError("trial must be >= 1")
        samples.setflags(write=False)
        pos.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "ap_position", pos)
        object.__setattr__(self, "ap_index", int(self.ap_index))
        object.__setattr__(self, "ue_id", int(self.ue_id))
        object.__setattr__(self, "trial", int(self.trial))

    def __eq__(self, other):
        if not isinstance(other, ChannelRecord):
            return NotImplemented
        return ((self.ap_index, self.ue_id, self.trial) == (other.ap_index, other.ue_id, other.trial)
                and np.array_equal(self.ap_position, other.ap_position)
                and np.array_equal(self.samples, other.samples))

    __hash__ = None

    @property
    def n_freq(self) -> int:
        return self.samples.size

    def scaled(self, factor: complex) -> "ChannelRecord":
        return replace(self, samples=self.samples * factor)


@dataclass(frozen=True)
class DatasetMetadata:
    carrier_hz: float
    bandwidth_hz: float
    n_freq: int
    speed_mps: float
    capture_interval_s: float
    altitude_m: float
    environment_seed: Optional[int] = None

    def __post_init__(self):
        if int(self.n_freq) < 1:
            raise InvalidDatasetError("F must be >= 1")
        for name in ("carrier_hz", "bandwidth_hz", "speed_mps", "capture_interval_s", "altitude_m"):
            if not np.isfinite(float(getattr(self, name))):
                raise InvalidDatasetError(f"metadata field {name} must be finite")


@dataclass
class SoundingDataset:
    """
    Channel records of one campaign, grouped by (ue_id, trial).

    Within a group records are ordered by ap_index, which runs 0..L-1.
    """

    metadata: DatasetMetadata
    records: list = field(default_factory=list)

    def __post_init__(self):
        self.records = list(self.records)
        self.validate()

    def validate(self):
        F = self.metadata.n_freq
        expected = {}
        for rec in self.records:
            if rec.n_freq != F:
                raise InvalidDatasetError(
                    f"record (ue {rec.ue_id}, trial {rec.trial}, ap {rec.ap_index}) has "
                    f"{rec.n_freq} samples, dataset F is {F}")
            key = (rec.ue_id, rec.trial)
            nxt = expected.get(key, 0)
            if rec.ap_index != nxt:
                raise InvalidDatasetError(
                    f"group (ue {rec.ue_id}, trial {rec.trial}): expected ap_index {nxt}, got {rec.ap_index}")
            expected[key] = nxt + 1

    def __len__(self):
        return len(self.records)

    def groups(self) -> list:
        """Distinct (ue_id, trial) keys in order of first appearance."""
        seen = {}
        for rec in self.records:
            seen.setdefault((rec.ue_id, rec.trial), None)
        return list(seen)

    def ue_ids(self) -> list:
        return sorted({rec.ue_id for rec in self.records})

    def trials(self, ue_id: int) -> list:
        return sorted({rec.trial for rec in self.records if rec.ue_id == ue_id})

    def select(self, ue_id: int, trial: Optional[int] = None) -> list:
        """Records of one flight. trial=None picks the lowest trial present for the UE."""
        if trial is None:
            trials = self.trials(ue_id)
            if not trials:
                raise KeyError(f"dataset has no records for UE {ue_id}")
            trial = trials[0]
        recs = [r for r in self.records if r.ue_id == ue_id and r.trial == trial]
        if not recs:
            raise KeyError(f"dataset has no records for UE {ue_id}, trial {trial}")
        return recs

    def channel_matrix(self, ue_id: int, trial: Optional[int] = None) -> np.ndarray:
        """(L, F) complex array of one flight."""
        return np.stack([r.samples for r in self.select(ue_id, trial)])

    def positions(self, ue_id: int, trial: Optional[int] = None) -> np.ndarray:
        return np.stack([r.ap_position for r in self.select(ue_id, trial)])

    def extend(self, other: "SoundingDataset"):
        if other.metadata != self.metadata:
            raise InvalidDatasetError("cannot merge datasets with different metadata")
        self.records.extend(other.records)
        self.validate()


@dataclass(frozen=True, eq=False)
class GainProfile:
    """Per-AP channel gain (dB) of one flight for one UE."""

    ue_id: int
    trial: int
    gains_db: np.ndarray

    def __post_init__(self):
        g = np.array(self.gains_db, dtype=float).reshape(-1)
        g.setflags(write=False)
        object.__setattr__(self, "gains_db", g)

    def __len__(self):
        return self.gains_db.size

    def __eq__(self, other):
        if not isinstance(other, GainProfile):
            return NotImplemented
        return (self.ue_id, self.trial) == (other.ue_id, other.trial) and np.array_equal(
            self.gains_db, other.gains_db)

    __hash__ = None


def _samples_of(record) -> np.ndarray:
    samples = record.samples if isinstance(record, ChannelRecord) else np.asarray(record)
    if samples.size == 0:
        raise InvalidRecordError("record has no samples")
    return samples


def average_gain(record) -> float:
    """Mean of |h_i|^2 over the F frequency realizations of a record."""
    h = _samples_of(record)
    return float(np.mean(h.real ** 2 + h.imag ** 2))


def gain_db(record) -> float:
    return linear_to_db(average_gain(record))


def average_gains(channels: np.ndarray) -> np.ndarray:
    """Row-wise average gain of an (L, F) channel array."""
    channels = np.asarray(channels)
    return np.mean(channels.real ** 2 + channels.imag ** 2, axis=-1)


def synthesize_omni(port_records: Sequence[ChannelRecord]) -> ChannelRecord:
    """
    Combine the ports of one AP-UE link into a single omnidirectional record.

    Combining is incoherent: per realization the output power is the mean
    power across ports, and the phase is taken from the first port.
    """
    ports = list(port_records)
    if not ports:
        raise IncompatiblePortsError("need at least one port record")
    first = ports[0]
    for rec in ports[1:]:
        if (rec.ap_index, rec.ue_id, rec.trial) != (first.ap_index, first.ue_id, first.trial):
            raise IncompatiblePortsError("port records must share ap_index, ue_id and trial")
        if rec.n_freq != first.n_freq:
            raise IncompatiblePortsError(f"port F mismatch: {rec.n_freq} vs {first.n_freq}")
    stacked = np.stack([r.samples for r in ports])
    power = np.mean(stacked.real ** 2 + stacked.imag ** 2, axis=0)
    samples = np.sqrt(power) * np.exp(1j * np.angle(first.samples))
    return replace(first, samples=samples)


def gain_profile(dataset: SoundingDataset, ue_id: int, trial: Optional[int] = None) -> GainProfile:
    recs = dataset.select(ue_id, trial)
    gains = linear_to_db(average_gains(np.stack([r.samples for r in recs])))
    return GainProfile(ue_id=ue_id, trial=recs[0].trial, gains_db=gains)


def rms_gain_error(profile_a: GainProfile, profile_b: GainProfile) -> float:
    """RMS difference (dB) between two gain profiles of the same trajectory."""
    if profile_a.ue_id != profile_b.ue_id:
        raise TrajectoryMismatchError(
            f"profiles belong to different UEs ({profile_a.ue_id} vs {profile_b.ue_id})")
    a, b = profile_a.gains_db, profile_b.gains_db
    if a.size != b.size:
        raise TrajectoryMismatchError(f"trajectory lengths differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise TrajectoryMismatchError("empty trajectory")
    # matching no-signal points contribute nothing instead of inf - inf
    with np.errstate(invalid="ignore"):
        diff = np.abs(np.where(a == b, 0.0, a - b))
    peak = diff.max()
    if peak == 0.0 or not np.isfinite(peak):
        return float(peak)
    # scale by the peak so tiny differences do not underflow to an exact zero
    return float(peak * np.sqrt(np.mean((diff / peak) ** 2)))


def records_from_array(channels: np.ndarray, positions: np.ndarray, ue_id: int, trial: int) -> list:
    """Wrap an (L, F) channel array into ChannelRecords with ap_index 0..L-1."""
    return [
        ChannelRecord(ap_index=i, ap_position=positions[i], ue_id=ue_id, trial=trial, samples=channels[i])
        for i in range(channels.shape[0])
    ]


def sorted_dataset(dataset: SoundingDataset) -> SoundingDataset:
    """Copy with records ordered by (ue_id, trial, ap_index)."""
    recs = sorted(dataset.records, key=lambda r: (r.ue_id, r.trial, r.ap_index))
    return SoundingDataset(dataset.metadata, recs)


def iter_flights(dataset: SoundingDataset) -> Iterable:
    for ue_id, trial in dataset.groups():
        yield ue_id, trial, dataset.select(ue_id, trial)
