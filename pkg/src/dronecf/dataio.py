"""
Dataset file format and the adapter for externally produced channel tables.

A dataset file is plain text. Line 1 is a JSON object with the campaign
metadata; every following line is one channel record::

    {"format_version": 1, "carrier_hz": 3500000000.0, ..., "environment_seed": 7}
    ue_id,trial,ap_index,x_m,y_m,z_m,re_0,im_0,re_1,im_1,...

Floats are written with 17 significant digits so 64-bit values survive a
round trip unchanged.
"""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from contextlib import contextmanager
from typing import Optional, Union

import numpy as np

from .channel import ChannelRecord, DatasetMetadata, SoundingDataset
from .errors import DatasetFormatError, InvalidDatasetError, InvalidRecordError, MappingError

FORMAT_VERSION = 1
SUPPORTED_VERSIONS = (1,)

HEADER_KEYS = ("format_version", "carrier_hz", "bandwidth_hz", "F", "speed_mps",
               "capture_interval_s", "altitude_m", "environment_seed")
RECORD_FIELDS = ("ue_id", "trial", "ap_index", "x_m", "y_m", "z_m")

PathLike = Union[str, os.PathLike]


class MappingWarning(UserWarning):
    pass


def _fmt(x: float) -> str:
    return format(x, ".17g")


@contextmanager
def _open(target, mode):
    if hasattr(target, "read") or hasattr(target, "write"):
        yield target
    else:
        with open(target, mode, newline="", encoding="utf-8") as fh:
            yield fh


def header_dict(metadata: DatasetMetadata, format_version: int = FORMAT_VERSION) -> dict:
    return {
        "format_version": format_version,
        "carrier_hz": float(metadata.carrier_hz),
        "bandwidth_hz": float(metadata.bandwidth_hz),
        "F": int(metadata.n_freq),
        "speed_mps": float(metadata.speed_mps),
        "capture_interval_s": float(metadata.capture_interval_s),
        "altitude_m": float(metadata.altitude_m),
        "environment_seed": None if metadata.environment_seed is None else int(metadata.environment_seed),
    }


def format_record(rec: ChannelRecord) -> str:
    iq = np.empty(2 * rec.n_freq)
    iq[0::2] = rec.samples.real
    iq[1::2] = rec.samples.imag
    head = f"{rec.ue_id},{rec.trial},{rec.ap_index},"
    return head + ",".join(map(_fmt, rec.ap_position.tolist() + iq.tolist()))


def write_dataset(dataset: SoundingDataset, destination, format_version: int = FORMAT_VERSION):
    if format_version not in SUPPORTED_VERSIONS:
        raise DatasetFormatError(1, "format_version", f"unsupported format version {format_version!r}")
    with _open(destination, "w") as fh:
        fh.write(json.dumps(header_dict(dataset.metadata, format_version)) + "\n")
        for rec in dataset.records:
            fh.write(format_record(rec) + "\n")


def _parse_header(line: str, expected_version: Optional[int] = None) -> DatasetMetadata:
    try:
        head = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(1, None, f"header is not a JSON object: {exc.msg}") from None
    if not isinstance(head, dict):
        raise DatasetFormatError(1, None, "header is not a JSON object")
    version = head.get("format_version")
    if version not in SUPPORTED_VERSIONS:
        raise DatasetFormatError(1, "format_version", f"unknown format version {version!r}")
    if expected_version is not None and version != expected_version:
        raise DatasetFormatError(1, "format_version",
                                 f"file is version {version}, expected {expected_version}")
    missing = [k for k in HEADER_KEYS if k not in head]
    if missing:
        raise DatasetFormatError(1, missing[0], "missing header field")
    unknown = sorted(set(head) - set(HEADER_KEYS))
    if unknown:
        raise DatasetFormatError(1, unknown[0], "unknown header field")
    F = head["F"]
    if isinstance(F, bool) or not isinstance(F, int) or F < 1:
        raise DatasetFormatError(1, "F", f"F must be a positive integer, got {F!r}")
    for key in ("carrier_hz", "bandwidth_hz", "speed_mps", "capture_interval_s", "altitude_m"):
        v = head[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise DatasetFormatError(1, key, f"expected a finite number, got {v!r}")
    seed = head["environment_seed"]
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise DatasetFormatError(1, "environment_seed", f"expected an integer or null, got {seed!r}")
    return DatasetMetadata(carrier_hz=float(head["carrier_hz"]), bandwidth_hz=float(head["bandwidth_hz"]),
                           n_freq=F, speed_mps=float(head["speed_mps"]),
                           capture_interval_s=float(head["capture_interval_s"]),
                           altitude_m=float(head["altitude_m"]), environment_seed=seed)


def _field_name(i: int) -> str:
    if i < len(RECORD_FIELDS):
        return RECORD_FIELDS[i]
    j = i - len(RECORD_FIELDS)
    return f"{'re' if j % 2 == 0 else 'im'}_{j // 2}"


def _complex(re: np.ndarray, im: np.ndarray) -> np.ndarray:
    out = np.empty(re.shape, dtype=np.complex128)
    out.real = re
    out.imag = im
    return out


def _parse_int(text: str, lineno: int, i: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise DatasetFormatError(lineno, _field_name(i), f"expected an integer, got {text!r}") from None


def _parse_floats(parts: list, offset: int, lineno: int) -> np.ndarray:
    try:
        vals = np.array([float(p) for p in parts])
    except ValueError:
        for i, p in enumerate(parts):
            try:
                float(p)
            except ValueError:
                raise DatasetFormatError(lineno, _field_name(offset + i), f"not a number: {p!r}") from None
        raise
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        i = int(bad[0])
        raise DatasetFormatError(lineno, _field_name(offset + i), f"non-finite value {parts[i]!r}")
    return vals


def parse_record(line: str, lineno: int, n_freq: int) -> ChannelRecord:
    parts = line.rstrip("\r\n").split(",")
    expected = len(RECORD_FIELDS) + 2 * n_freq
    if len(parts) != expected:
        raise DatasetFormatError(lineno, None, f"expected {expected} fields, found {len(parts)}")
    ue_id, trial, ap_index = (_parse_int(parts[i], lineno, i) for i in range(3))
    vals = _parse_floats(parts[3:], 3, lineno)
    try:
        return ChannelRecord(ap_index=ap_index, ap_position=vals[:3], ue_id=ue_id, trial=trial,
                             samples=_complex(vals[3::2], vals[4::2]))
    except InvalidRecordError as exc:
        raise DatasetFormatError(lineno, None, str(exc)) from None


def read_dataset(source, format_version: Optional[int] = None) -> SoundingDataset:
    """
    Parse a dataset file, validating every record as it is read.

    Raises DatasetFormatError naming the offending line (1-based) and field.
    """
    with _open(source, "r") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetFormatError(1, None, "file is empty, expected a header line")
    metadata = _parse_header(lines[0], format_version)
    records = []
    expected_next = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            raise DatasetFormatError(lineno, None, "blank line inside the record body")
        rec = parse_record(line, lineno, metadata.n_freq)
        key = (rec.ue_id, rec.trial)
        nxt = expected_next.get(key, 0)
        if rec.ap_index != nxt:
            raise DatasetFormatError(lineno, "ap_index",
                                     f"UE {rec.ue_id} trial {rec.trial}: expected ap_index {nxt}, got {rec.ap_index}")
        expected_next[key] = nxt + 1
        records.append(rec)
    return SoundingDataset(metadata, records)


# --- external tables ----------------------------------------------------------

# Position unit -> (operation, factor) turning values into meters. Division
# keeps decimal conversions such as cm -> m correctly rounded.
_LENGTH_UNITS = {"m": ("mul", 1.0), "cm": ("div", 100.0), "mm": ("div", 1000.0), "km": ("mul", 1000.0)}
_FREQ_UNITS = {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9}
_METADATA_KEYS = ("carrier_hz", "bandwidth_hz", "speed_mps", "capture_interval_s", "altitude_m",
                  "environment_seed")
_REQUIRED_COLUMNS = ("ue_id", "ap_index", "x", "y", "z")

# mapping that reads this package's own dataset files
NATIVE_MAPPING = {
    "metadata_line": 0,
    "skip_lines": 1,
    "header_row": False,
    "columns": {"ue_id": 0, "trial": 1, "ap_index": 2, "x": 3, "y": 4, "z": 5},
    "samples": {"layout": "interleaved", "start": 6},
    "units": {"position": "m"},
}


def _to_meters(values: np.ndarray, unit: str) -> np.ndarray:
    op, factor = _LENGTH_UNITS[unit]
    return values / factor if op == "div" else values * factor


def _load_mapping(mapping_spec) -> dict:
    if isinstance(mapping_spec, dict):
        return mapping_spec
    if mapping_spec is None:
        raise MappingError("a mapping spec is required")
    with open(mapping_spec, encoding="utf-8") as fh:
        return json.load(fh)


def _validate_units(units: dict) -> tuple:
    unknown = sorted(set(units) - {"position", "frequency"})
    if unknown:
        raise MappingError(f"unit declared for unsupported quantity {unknown[0]!r}")
    pos_unit = units.get("position", "m")
    if pos_unit not in _LENGTH_UNITS:
        raise MappingError(f"position unit {pos_unit!r} is not a length unit ({sorted(_LENGTH_UNITS)})")
    freq_unit = units.get("frequency", "Hz")
    if freq_unit not in _FREQ_UNITS:
        raise MappingError(f"frequency unit {freq_unit!r} is not a frequency unit ({sorted(_FREQ_UNITS)})")
    return pos_unit, freq_unit


def import_external(source, mapping_spec) -> SoundingDataset:
    """
    Read a delimited table of channel samples into a SoundingDataset.

    The mapping spec (a dict or a JSON file) names where each field lives::

        {
          "delimiter": ",",             # optional
          "skip_lines": 0,              # lines dropped before the table
          "header_row": true,           # first table line holds column names
          "metadata_line": 0,           # optional: line holding a JSON metadata object
          "metadata": {"carrier_hz": ..., "bandwidth_hz": ..., "speed_mps": ...,
                       "capture_interval_s": ..., "altitude_m": ...},
          "columns": {"ue_id": "UE", "trial": "run", "ap_index": "idx",
                      "x": "X", "y": "Y", "z": "Z"},
          "samples": {"layout": "interleaved", "start": "re0", "count": 64}
                  or {"layout": "split", "re": [...], "im": [...]},
          "units": {"position": "cm", "frequency": "MHz"}
        }

    Column references are header names or 0-based indices. A missing trial
    column defaults every record to trial 1 with a MappingWarning. Records
    are sorted by (ue_id, trial, ap_index).
    """
    spec = _load_mapping(mapping_spec)
    pos_unit, freq_unit = _validate_units(spec.get("units", {}))
    columns = dict(spec.get("columns", {}))
    missing = [c for c in _REQUIRED_COLUMNS if c not in columns]
    if missing:
        raise MappingError(f"mapping does not map required field(s) {missing}")
    if "samples" not in spec:
        raise MappingError("mapping does not describe the sample columns")

    with _open(source, "r") as fh:
        text = fh.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    meta = {}
    if "metadata_line" in spec:
        try:
            head = json.loads(lines[int(spec["metadata_line"])])
        except (IndexError, json.JSONDecodeError) as exc:
            raise MappingError(f"cannot read metadata line: {exc}") from None
        meta.update({k: head[k] for k in _METADATA_KEYS if k in head})
        if "F" in head:
            meta["F"] = head["F"]
    # declared frequency units apply to the mapping's own metadata, not to a native header line
    declared = dict(spec.get("metadata", {}))
    for key in ("carrier_hz", "bandwidth_hz"):
        if key in declared:
            declared[key] = float(declared[key]) * _FREQ_UNITS[freq_unit]
    meta.update(declared)
    absent = [k for k in _METADATA_KEYS[:-1] if k not in meta]
    if absent:
        raise MappingError(f"metadata field(s) {absent} neither mapped nor given")

    body = lines[int(spec.get("skip_lines", 0)):]
    reader = csv.reader(body, delimiter=spec.get("delimiter", ","))
    rows = [r for r in reader]
    names = None
    first_line = int(spec.get("skip_lines", 0)) + 1
    if spec.get("header_row", True):
        if not rows:
            raise MappingError("table has no header row")
        names = [n.strip() for n in rows[0]]
        rows = rows[1:]
        first_line += 1

    def col(ref):
        if isinstance(ref, bool):
            raise MappingError(f"invalid column reference {ref!r}")
        if isinstance(ref, int):
            return ref
        if names is None:
            raise MappingError(f"column {ref!r} referenced by name but the table has no header row")
        try:
            return names.index(ref)
        except ValueError:
            raise MappingError(f"column {ref!r} not found in header") from None

    idx = {k: col(v) for k, v in columns.items() if k in ("ue_id", "trial", "ap_index", "x", "y", "z")}
    unknown = sorted(set(columns) - {"ue_id", "trial", "ap_index", "x", "y", "z"})
    if unknown:
        raise MappingError(f"unknown mapped field(s) {unknown}")
    if "trial" not in idx:
        warnings.warn("mapping has no trial column; all records default to trial 1", MappingWarning,
                      stacklevel=2)

    samp = spec["samples"]
    layout = samp.get("layout", "interleaved")
    if layout == "interleaved":
        start = col(samp.get("start"))
        count = samp.get("count", meta.get("F"))
        width = len(rows[0]) if rows else 0
        if count is None:
            count = (width - start) // 2
        re_idx = [start + 2 * i for i in range(int(count))]
        im_idx = [start + 2 * i + 1 for i in range(int(count))]
    elif layout == "split":
        re_idx = [col(c) for c in samp.get("re", [])]
        im_idx = [col(c) for c in samp.get("im", [])]
        if len(re_idx) != len(im_idx):
            raise MappingError("split layout needs as many imaginary as real columns")
    else:
        raise MappingError(f"unknown sample layout {layout!r}")
    n_freq = len(re_idx)
    if n_freq < 1:
        raise MappingError("mapping selects no sample columns")
    if "F" in meta and int(meta["F"]) != n_freq:
        raise MappingError(f"metadata says F={meta['F']} but the mapping selects {n_freq} samples")

    records = []
    for lineno, row in enumerate(rows, start=first_line):
        if not row:
            continue
        try:
            ue_id = int(row[idx["ue_id"]])
            trial = int(row[idx["trial"]]) if "trial" in idx else 1
            ap_index = int(row[idx["ap_index"]])
            pos = _to_meters(np.array([float(row[idx[a]]) for a in ("x", "y", "z")]), pos_unit)
            re = np.array([float(row[i]) for i in re_idx])
            im = np.array([float(row[i]) for i in im_idx])
            records.append(ChannelRecord(ap_index=ap_index, ap_position=pos, ue_id=ue_id, trial=trial,
                                         samples=_complex(re, im)))
        except (ValueError, IndexError, InvalidRecordError) as exc:
            raise DatasetFormatError(lineno, None, f"cannot import row: {exc}") from None

    metadata = DatasetMetadata(
        carrier_hz=float(meta["carrier_hz"]), bandwidth_hz=float(meta["bandwidth_hz"]), n_freq=n_freq,
        speed_mps=float(meta["speed_mps"]), capture_interval_s=float(meta["capture_interval_s"]),
        altitude_m=float(meta["altitude_m"]), environment_seed=meta.get("environment_seed"))
    records.sort(key=lambda r: (r.ue_id, r.trial, r.ap_index))
    try:
        return SoundingDataset(metadata, records)
    except InvalidDatasetError as exc:
        raise MappingError(f"imported records do not form a valid dataset: {exc}") from None
