"""
End-to-end campaign: generate -> sound -> write dataset -> analyses -> CSV.

Every output is a pure function of the RunConfig (master seed included);
the worker count only changes wall time.
"""

from __future__ import annotations

import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass, field

from . import dataio, reports
from .analysis import ap_subset_sweep, multi_user_sinr_eval
from .channel import SoundingDataset, gain_profile, rms_gain_error, sorted_dataset
from .config import RunConfig
from .errors import DroneCFError, PipelineError
from .sounder import fly, multi_ue_campaign, plan_captures

log = logging.getLogger(__name__)


@contextmanager
def stage(name: str):
    """Re-raise anything thrown inside the block as a PipelineError tagged with `name`."""
    try:
        yield
    except PipelineError:
        raise
    except (DroneCFError, OSError, ValueError, KeyError, ArithmeticError) as exc:
        raise PipelineError(name, exc) from exc


@dataclass
class PipelineResult:
    datasets: dict = field(default_factory=dict)     # plan name -> SoundingDataset
    files: list = field(default_factory=list)        # written paths, in write order


def _plans(cfg: RunConfig, selected):
    return [p for p in cfg.flight_plans if selected is None or p in selected]


def sound_plan(cfg: RunConfig, plan_name: str, workers: int = 1) -> SoundingDataset:
    """
    Fly one plan for every configured UE. Extra flights needed by the
    reproducibility experiment are added so one dataset serves all analyses.
    """
    plan = cfg.flight_plans[plan_name]
    env = cfg.environment
    ds = multi_ue_campaign(plan, env, cfg.ues, cfg.trials_per_ue, jitter_enabled=cfg.jitter, workers=workers)
    repro = cfg.repro
    if repro is not None and (repro.plans is None or plan_name in repro.plans):
        positions = dict(cfg.ues)
        schedule = plan_captures(plan)
        extra = []
        for uid in repro.ue_ids:
            for t in repro.trials:
                if t > cfg.trials_per_ue:
                    extra.append(fly(plan, env, positions[uid], uid, t, jitter_enabled=cfg.jitter,
                                     schedule=schedule))
        if extra:
            for flight in extra:
                ds.extend(flight)
            ds = sorted_dataset(ds)
    return ds


def run_pipeline(cfg: RunConfig, out_dir, workers: int = 1,
                 format_version: int = dataio.FORMAT_VERSION) -> PipelineResult:
    """Run every configured stage and write the CSV reports into out_dir."""
    result = PipelineResult()
    with stage("generate"):
        os.makedirs(out_dir, exist_ok=True)
        for name in cfg.flight_plans:
            plan_captures(cfg.flight_plans[name])

    for name in cfg.flight_plans:
        with stage(f"sound:{name}"):
            ds = sound_plan(cfg, name, workers)
        result.datasets[name] = ds
        log.info("plan %s: %d records", name, len(ds))
        if cfg.write_datasets:
            with stage(f"write:{name}"):
                path = os.path.join(out_dir, f"dataset_{name}.txt")
                dataio.write_dataset(ds, path, format_version=format_version)
                result.files.append(path)

        with stage(f"gain-map:{name}"):
            for uid in cfg.ue_ids:
                path = os.path.join(out_dir, f"gain_map_{name}_ue{uid}.csv")
                reports.write_gain_map(path, ds, uid)
                result.files.append(path)

    sweep = cfg.snr_sweep
    if sweep is not None:
        for name in _plans(cfg, sweep.plans):
            with stage(f"snr-sweep:{name}"):
                path = os.path.join(out_dir, f"snr_sweep_{name}.csv")
                reports.write_snr_sweep(path, snr_sweep(cfg, result.datasets[name], workers))
                result.files.append(path)

    ev = cfg.sinr_eval
    if ev is not None:
        for name in _plans(cfg, ev.plans):
            with stage(f"sinr-eval:{name}"):
                path = os.path.join(out_dir, f"sinr_eval_{name}.csv")
                reports.write_sinr_eval(path, sinr_eval(cfg, result.datasets[name]))
                result.files.append(path)

    rp = cfg.repro
    if rp is not None:
        for name in _plans(cfg, rp.plans):
            with stage(f"repro:{name}"):
                path = os.path.join(out_dir, f"repro_{name}.csv")
                reports.write_repro(path, repro(cfg, result.datasets[name]))
                result.files.append(path)
    return result


def snr_sweep(cfg: RunConfig, ds: SoundingDataset, workers: int = 1):
    s = cfg.snr_sweep
    ue_ids = s.ue_ids or cfg.ue_ids
    report = None
    for uid in ue_ids:
        r = ap_subset_sweep(ds, uid, s.counts, s.n_subsets, seed=cfg.seed, budget=cfg.link_budget,
                            workers=workers)
        if report is None:
            report = r
        else:
            report.merge(r)
    return report


def sinr_eval(cfg: RunConfig, ds: SoundingDataset):
    s = cfg.sinr_eval
    ue_ids = list(s.ue_ids or cfg.ue_ids)
    report = None
    for L in s.ap_counts:
        for method in s.methods:
            r = multi_user_sinr_eval(ds, ue_ids, L, method, s.n_subsets, seed=cfg.seed,
                                     budget=cfg.link_budget, frequency_mode=s.frequency_mode)
            if report is None:
                report = r
            else:
                report.merge(r)
    return report


def repro(cfg: RunConfig, ds: SoundingDataset) -> list:
    ta, tb = cfg.repro.trials
    out = []
    for uid in cfg.repro.ue_ids:
        err = rms_gain_error(gain_profile(ds, uid, ta), gain_profile(ds, uid, tb))
        out.append((uid, ta, tb, err))
    return out
