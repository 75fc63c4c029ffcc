"""
CSV report writers. Column order is fixed per report type; floats are
written with repr() so the text is a pure function of the values.
"""

from __future__ import annotations

import csv
import os

from .analysis import PERCENTILES, SinrReport
from .channel import GainProfile, SoundingDataset, gain_profile

PERCENTILE_COLUMNS = tuple(f"p{p}_db" for p in PERCENTILES)

GAIN_MAP_COLUMNS = ("ap_index", "x_m", "y_m", "z_m", "ue_id", "gain_db")
SNR_SWEEP_COLUMNS = ("ue_id", "ap_count", "median_db", "std_db") + PERCENTILE_COLUMNS
SINR_EVAL_COLUMNS = ("ue_id", "L", "method", "median_db", "std_db") + PERCENTILE_COLUMNS
REPRO_COLUMNS = ("ue_id", "trial_a", "trial_b", "rms_error_db")


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, columns, rows):
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row has {len(row)} cells, expected {len(columns)}")
            w.writerow([_cell(v) for v in row])
    os.replace(tmp, path)


def read_csv(path) -> list:
    """Rows as dicts of strings; mostly for tests and quick inspection."""
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def gain_map_rows(dataset: SoundingDataset, ue_id: int, trial=None) -> list:
    profile: GainProfile = gain_profile(dataset, ue_id, trial)
    pos = dataset.positions(ue_id, profile.trial)
    return [(l, float(pos[l, 0]), float(pos[l, 1]), float(pos[l, 2]), ue_id, float(g))
            for l, g in enumerate(profile.gains_db)]


def _stats_cells(stats):
    return [stats.median_db, stats.std_db] + [stats.percentiles[p] for p in PERCENTILES]


def snr_sweep_rows(report: SinrReport) -> list:
    return [[uid, count] + _stats_cells(report[(uid, count, m)]) for uid, count, m in report.keys()]


def sinr_eval_rows(report: SinrReport) -> list:
    # method order follows the report keys, i.e. alphabetical ("mr" before "optimum")
    return [[uid, count, m] + _stats_cells(report[(uid, count, m)]) for uid, count, m in report.keys()]


def write_gain_map(path, dataset: SoundingDataset, ue_id: int, trial=None):
    write_csv(path, GAIN_MAP_COLUMNS, gain_map_rows(dataset, ue_id, trial))


def write_snr_sweep(path, report: SinrReport):
    write_csv(path, SNR_SWEEP_COLUMNS, snr_sweep_rows(report))


def write_sinr_eval(path, report: SinrReport):
    write_csv(path, SINR_EVAL_COLUMNS, sinr_eval_rows(report))


def write_repro(path, results):
    """results: iterable of (ue_id, trial_a, trial_b, rms_error_db)."""
    write_csv(path, REPRO_COLUMNS, [(int(u), int(a), int(b), float(e)) for u, a, b, e in results])
