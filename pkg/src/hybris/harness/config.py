"""Experiment configuration: YAML file <-> nested dataclasses.

Powers are stored in the units people write them in (dBm) and converted to
watts once, in :func:`env_config`. Unknown keys are rejected at every level.
See ``configs/default.yaml`` for the full schema with defaults.
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field

import numpy as np
import yaml

from ..agent import PPOConfig
from ..channel import Geometry, LinkParams, LinkSet, users_on_circle
from ..env import SCHEMES, EnvConfig
from ..sysmodel import SystemParams

SWEEP_AXES = ("es_power", "n_elements", "ris_distance", "q_min")
DEFAULT_AXIS_VALUES = {
    "es_power": [30.0, 35.0, 40.0, 45.0, 50.0],
    "n_elements": [4.0, 8.0, 12.0, 16.0, 20.0],
    "ris_distance": [0.0, 2.5, 5.0, 7.5, 10.0],
    "q_min": [2.0, 3.0, 4.0, 5.0, 6.0],
}


class ConfigError(ValueError):
    pass


def dbm_to_w(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


@dataclass
class SystemSection:
    n_users: int = 2
    n_elements: int = 20
    ehs_elements: int = 20
    es_power_dbm: float = 38.0
    q_min: float = 5.0
    noise_bs_dbm: float = -80.0
    noise_ris_dbm: float = -70.0
    p_circuit_dbm: float = -10.0
    p_amp_dc_dbm: float = -5.0
    p_rfdc_w: float = 2.1e-6
    xi: float = 1.1
    eta_eh: float = 0.8
    frame_s: float = 1.0
    p_max_dbm: float = 20.0
    rho_max: float = 100.0


@dataclass
class GeometrySection:
    bs: list = field(default_factory=lambda: [20.0, 0.0, 0.0])
    ris: list = field(default_factory=lambda: [5.0, 3.0, 0.0])
    ehs: list = field(default_factory=lambda: [5.0, 3.0, 5.0])
    es: list = field(default_factory=lambda: [5.0, -2.0, 5.0])
    user_center: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    user_radius: float = 0.5
    ris_axis: list = field(default_factory=lambda: [0.0, 1.0, 0.0])
    ehs_axis: list = field(default_factory=lambda: [0.0, 1.0, 0.0])


@dataclass
class LinkSection:
    ref_loss_db: float
    exponent: float
    rician_k: float = 2.0
    spacing_ratio: float = 0.5


@dataclass
class LinksSection:
    ub: LinkSection = field(default_factory=lambda: LinkSection(-30.0, 3.2, 0.0))
    ur: LinkSection = field(default_factory=lambda: LinkSection(-20.0, 2.2))
    rb: LinkSection = field(default_factory=lambda: LinkSection(-20.0, 2.2))
    es: LinkSection = field(default_factory=lambda: LinkSection(-20.0, 2.2))


@dataclass
class EnvSection:
    scheme: str = "hybrid"
    e_ref_j: float = 1e-3
    kappa: float = 10.0
    state_layout: str = "per_element"
    no_ris_without_ehs: bool = False
    shared_rho: bool = False


@dataclass
class PPOSection:
    lr_actor: float = 1e-4
    lr_critic: float = 1e-4
    clip_eps: float = 0.2
    entropy_coef: float = 1e-4
    gamma: float = 0.0
    gae_lambda: float = 0.95
    buffer_size: int = 512
    minibatch: int = 128
    epochs: int = 4
    hidden: int = 1024
    optimizer: str = "sgd"
    normalize_advantages: bool = True


@dataclass
class TrainSection:
    iterations: int = 200
    checkpoint_every: int = 50
    eval_draws: int = 100
    eval_seed: int = 20240601


@dataclass
class SweepSection:
    axis: str = "es_power"
    values: list = field(default_factory=lambda: list(DEFAULT_AXIS_VALUES["es_power"]))
    schemes: list = field(default_factory=lambda: ["hybrid", "no-RIS"])
    retrain: bool = True


@dataclass
class OracleSection:
    uniform_rho: bool = True
    schemes: list = field(default_factory=lambda: ["hybrid", "active-passive", "active",
                                                   "passive", "no-RIS"])


@dataclass
class ExperimentConfig:
    system: SystemSection = field(default_factory=SystemSection)
    geometry: GeometrySection = field(default_factory=GeometrySection)
    links: LinksSection = field(default_factory=LinksSection)
    env: EnvSection = field(default_factory=EnvSection)
    ppo: PPOSection = field(default_factory=PPOSection)
    train: TrainSection = field(default_factory=TrainSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    oracle: OracleSection = field(default_factory=OracleSection)
    seeds: list = field(default_factory=lambda: [0])
    output_dir: str = "runs"

    def validate(self) -> "ExperimentConfig":
        s = self.system
        if s.n_users < 1 or s.n_elements < 1 or s.ehs_elements < 1:
            raise ConfigError("n_users, n_elements and ehs_elements must be >= 1")
        if s.frame_s <= 0 or s.q_min < 0 or s.rho_max < 1:
            raise ConfigError("need frame_s > 0, q_min >= 0, rho_max >= 1")
        if self.env.scheme not in SCHEMES:
            raise ConfigError(f"env.scheme must be one of {SCHEMES}")
        for sch in self.sweep.schemes + self.oracle.schemes:
            if sch not in SCHEMES:
                raise ConfigError(f"unknown scheme {sch!r}")
        if self.sweep.axis not in SWEEP_AXES:
            raise ConfigError(f"sweep.axis must be one of {SWEEP_AXES}")
        if self.ppo.optimizer not in ("sgd", "adam"):
            raise ConfigError("ppo.optimizer must be 'sgd' or 'adam'")
        if self.ppo.buffer_size < 1 or self.ppo.minibatch < 1 or self.ppo.hidden < 1:
            raise ConfigError("ppo sizes must be positive")
        for name in ("bs", "ris", "ehs", "es", "user_center", "ris_axis", "ehs_axis"):
            if len(getattr(self.geometry, name)) != 3:
                raise ConfigError(f"geometry.{name} must have 3 coordinates")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        try:
            env_config(self)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self


# ---------------------------------------------------------------- (de)serialization

def _coerce(tp, value, path):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        return _from_dict(tp, value, path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise ConfigError(f"{path}: expected an integer")
        return int(value)
    if tp is float:
        if isinstance(value, bool):
            raise ConfigError(f"{path}: expected a number")
        try:
            return float(value)  # also accepts "1e-4", which YAML 1.1 reads as a string
        except (TypeError, ValueError):
            raise ConfigError(f"{path}: expected a number") from None
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        return value
    if tp is list or origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list")
        return [(_coerce(float, v, path) if not isinstance(v, str) else v) for v in value]
    raise ConfigError(f"{path}: unsupported field type {tp}")


def _from_dict(cls, data, path="config"):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    kwargs = {k: _coerce(hints[k], v, f"{path}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def from_dict(data: dict) -> ExperimentConfig:
    cfg = _from_dict(ExperimentConfig, data)
    cfg.seeds = [int(s) for s in cfg.seeds]
    return cfg.validate()


def to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return from_dict(data or {})


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as f:
        f.write(dump_config(cfg))


# ---------------------------------------------------------------- derived objects

def system_params(cfg: ExperimentConfig) -> SystemParams:
    s = cfg.system
    return SystemParams(sigma_b2=dbm_to_w(s.noise_bs_dbm), sigma_f2=dbm_to_w(s.noise_ris_dbm),
                        p_circuit=dbm_to_w(s.p_circuit_dbm), p_amp_dc=dbm_to_w(s.p_amp_dc_dbm),
                        p_rfdc=s.p_rfdc_w, xi=s.xi, eta_eh=s.eta_eh, p_s=dbm_to_w(s.es_power_dbm),
                        frame=s.frame_s, q_min=s.q_min, p_max=dbm_to_w(s.p_max_dbm),
                        rho_max=s.rho_max)


def geometry(cfg: ExperimentConfig) -> Geometry:
    g, s = cfg.geometry, cfg.system
    users = users_on_circle(s.n_users, g.user_radius, g.user_center)
    return Geometry(bs_pos=np.array(g.bs), ris_pos=np.array(g.ris), ehs_pos=np.array(g.ehs),
                    es_pos=np.array(g.es), user_pos=users, n_elements=s.n_elements,
                    ehs_elements=s.ehs_elements, ris_axis=np.array(g.ris_axis),
                    ehs_axis=np.array(g.ehs_axis))


def link_set(cfg: ExperimentConfig) -> LinkSet:
    mk = lambda l: LinkParams(l.ref_loss_db, l.exponent, l.rician_k, l.spacing_ratio)
    L = cfg.links
    return LinkSet(ub=mk(L.ub), ur=mk(L.ur), rb=mk(L.rb), es=mk(L.es))


def env_config(cfg: ExperimentConfig, scheme: str | None = None) -> EnvConfig:
    e = cfg.env
    return EnvConfig(geometry=geometry(cfg), links=link_set(cfg), params=system_params(cfg),
                     e_ref=e.e_ref_j, kappa=e.kappa, scheme=scheme or e.scheme,
                     state_layout=e.state_layout, no_ris_without_ehs=e.no_ris_without_ehs,
                     shared_rho=e.shared_rho)


def ppo_config(cfg: ExperimentConfig) -> PPOConfig:
    return PPOConfig(**dataclasses.asdict(cfg.ppo))


def with_axis_value(cfg: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    """Copy of cfg with one sweep axis set."""
    new = from_dict(to_dict(cfg))
    if axis == "es_power":
        new.system.es_power_dbm = float(value)
    elif axis == "n_elements":
        new.system.n_elements = int(value)
    elif axis == "q_min":
        new.system.q_min = float(value)
    elif axis == "ris_distance":
        # slide RIS and EHS together along x
        new.geometry.ris[0] = float(value)
        new.geometry.ehs[0] = float(value)
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}")
    return new.validate()
