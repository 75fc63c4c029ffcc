"""Run configuration: JSON file <-> RunConfig."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import scenarios
from .analysis import DEFAULT_COUNTS, FREQUENCY_MODES, METHODS, LinkBudget
from .errors import ConfigError, DroneCFError
from .field import EnvironmentModel
from .sounder import FlightPlan


@dataclass(frozen=True)
class SweepSettings:
    counts: tuple = DEFAULT_COUNTS
    n_subsets: int = 10000
    ue_ids: Optional[tuple] = None      # None: every UE
    plans: Optional[tuple] = None       # None: every plan


@dataclass(frozen=True)
class SinrSettings:
    ap_counts: tuple = (64, 256)
    n_subsets: int = 200
    methods: tuple = METHODS
    ue_ids: Optional[tuple] = None
    plans: Optional[tuple] = ("ap35",)
    frequency_mode: str = "per_realization"


@dataclass(frozen=True)
class ReproSettings:
    ue_ids: tuple = (2,)
    trials: tuple = (1, 2)
    plans: Optional[tuple] = None


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    environment: EnvironmentModel = field(default_factory=scenarios.default_environment)
    flight_plans: dict = field(default_factory=dict)     # name -> FlightPlan, insertion ordered
    ues: tuple = ()                                       # ((ue_id, (x, y, z)), ...)
    link_budget: LinkBudget = LinkBudget()
    trials_per_ue: int = 1
    jitter: bool = True
    snr_sweep: Optional[SweepSettings] = SweepSettings()
    sinr_eval: Optional[SinrSettings] = SinrSettings()
    repro: Optional[ReproSettings] = ReproSettings()
    write_datasets: bool = True

    def __post_init__(self):
        validate(self)

    @property
    def ue_ids(self) -> list:
        return [uid for uid, _ in self.ues]

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=int(seed), environment=replace(self.environment, seed=int(seed)))


def validate(cfg: RunConfig):
    ids = [uid for uid, _ in cfg.ues]
    if not ids:
        raise ConfigError("config defines no UEs")
    if len(set(ids)) != len(ids):
        raise ConfigError(f"UE ids defined more than once: {sorted({u for u in ids if ids.count(u) > 1})}")
    if not cfg.flight_plans:
        raise ConfigError("config defines no flight plans")
    if cfg.trials_per_ue < 1:
        raise ConfigError("trials_per_ue must be >= 1")
    for name, settings in (("snr_sweep", cfg.snr_sweep), ("sinr_eval", cfg.sinr_eval), ("repro", cfg.repro)):
        if settings is None:
            continue
        for uid in settings.ue_ids or ():
            if uid not in ids:
                raise ConfigError(f"{name} references undefined UE {uid}")
        for plan in settings.plans or ():
            if plan not in cfg.flight_plans:
                raise ConfigError(f"{name} references undefined flight plan {plan!r}")
    if cfg.sinr_eval is not None:
        for m in cfg.sinr_eval.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown combining method {m!r}")
        if cfg.sinr_eval.frequency_mode not in FREQUENCY_MODES:
            raise ConfigError(f"unknown frequency mode {cfg.sinr_eval.frequency_mode!r}")
        k = len(cfg.sinr_eval.ue_ids or ids)
        if k < 2:
            raise ConfigError("sinr_eval needs at least two UEs")
    if cfg.repro is not None and len(cfg.repro.trials) != 2:
        raise ConfigError("repro compares exactly two trials")


def default_config(seed: int = 0) -> RunConfig:
    """Four UEs, loops at 35 m and 70 m, full-size sweep settings."""
    return RunConfig(
        seed=seed,
        environment=scenarios.default_environment(seed=seed),
        flight_plans={f"ap{int(alt)}": scenarios.default_flight_plan(alt) for alt in scenarios.ALTITUDES_M},
        ues=tuple((uid, tuple(pos)) for uid, pos in scenarios.default_ue_specs()),
    )


def _tuple_or_none(v):
    return None if v is None else tuple(v)


def _settings(cls, data):
    if data is None:
        return None
    unknown = set(data) - set(cls.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    kwargs = {}
    for k, v in data.items():
        kwargs[k] = _tuple_or_none(v) if isinstance(v, list) or v is None else v
    return cls(**kwargs)


_TOP_LEVEL = {"seed", "environment", "flight_plans", "ues", "link_budget", "trials_per_ue", "jitter",
              "snr_sweep", "sinr_eval", "repro", "write_datasets"}


def config_from_dict(data: dict) -> RunConfig:
    """
    Build a RunConfig. Omitted sections fall back to the default campaign;
    the environment seed always follows the master seed.
    """
    unknown = set(data) - _TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    seed = int(data.get("seed", 0))
    base = default_config(seed)
    try:
        env = base.environment
        if "environment" in data:
            env_data = dict(base.environment.to_dict())
            env_data.update(data["environment"])
            env_data["seed"] = seed
            env = EnvironmentModel.from_dict(env_data)

        plans = base.flight_plans
        if "flight_plans" in data:
            plans = {}
            for entry in data["flight_plans"]:
                entry = dict(entry)
                name = entry.pop("name", None)
                if not name:
                    raise ConfigError("every flight plan needs a name")
                if name in plans:
                    raise ConfigError(f"flight plan {name!r} defined more than once")
                plans[name] = FlightPlan(**entry)

        ues = base.ues
        if "ues" in data:
            ues = tuple((int(u["ue_id"]), tuple(float(c) for c in u["position"])) for u in data["ues"])

        budget = LinkBudget(**data["link_budget"]) if "link_budget" in data else base.link_budget
        return RunConfig(
            seed=seed,
            environment=env,
            flight_plans=plans,
            ues=ues,
            link_budget=budget,
            trials_per_ue=int(data.get("trials_per_ue", base.trials_per_ue)),
            jitter=bool(data.get("jitter", base.jitter)),
            snr_sweep=_settings(SweepSettings, data["snr_sweep"]) if "snr_sweep" in data else base.snr_sweep,
            sinr_eval=_settings(SinrSettings, data["sinr_eval"]) if "sinr_eval" in data else base.sinr_eval,
            repro=_settings(ReproSettings, data["repro"]) if "repro" in data else base.repro,
            write_datasets=bool(data.get("write_datasets", base.write_datasets)),
        )
    except DroneCFError:
        raise
    except (TypeError, KeyError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, float) and not np.isfinite(v):
        return None if v < 0 else v
    return v


def config_to_dict(cfg: RunConfig) -> dict:
    def settings(s):
        return None if s is None else {k: _plain(getattr(s, k)) for k in s.__dataclass_fields__}

    env = {k: _plain(v) for k, v in cfg.environment.to_dict().items()}
    return {
        "seed": cfg.seed,
        "environment": env,
        "flight_plans": [dict(name=name, **plan.to_dict()) for name, plan in cfg.flight_plans.items()],
        "ues": [{"ue_id": uid, "position": list(pos)} for uid, pos in cfg.ues],
        "link_budget": {"p_dbm": cfg.link_budget.p_dbm, "noise_dbm": cfg.link_budget.noise_dbm},
        "trials_per_ue": cfg.trials_per_ue,
        "jitter": cfg.jitter,
        "snr_sweep": settings(cfg.snr_sweep),
        "sinr_eval": settings(cfg.sinr_eval),
        "repro": settings(cfg.repro),
        "write_datasets": cfg.write_datasets,
    }


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return config_from_dict(data)


def save_config(cfg: RunConfig, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2)
        fh.write("\n")
