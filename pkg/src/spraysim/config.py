"""Experiment configuration: a YAML file mapped onto dataclasses.

Schema (all times in microseconds, sizes in bytes)::

    scenario:
      kind: model_verification | permutation | incast     # required
      radix_k: 8                                          # required
      flow_size: 2000000
      elephant_count: 0         # permutation only
      tracked_fraction: 0.01    # permutation only
      start_jitter_us: 0        # permutation only
      fan_in: 20                # incast only
      delay_factor: 2.0         # model_verification only
    topology:
      link_speed: 100000000000
      queue_capacity: null      # null = unbounded
      base_rtt_us: 14.0
    routing:
      variant: random_spray     # single_path | round_robin | random_spray | adaptive
      adaptive_quantum_bytes: null
    cca:
      name: mswift              # swift | lswift | mswift
      history: {kind: bounded_window, m: 1, alpha: 0.5, K: 10}
      swift: {ai: 1.0, max_mdf: 0.5, ...}   # any SwiftConfig field; times in us
    elephant_rate: 0.5
    max_time_ms: 1000
    runs: 20                    # 100 is used for model verification when omitted
    seed_base: 0
    output_dir: out

Unknown keys are rejected so that typos never fall back to defaults silently.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import yaml

from .engine import MS, US
from .fabric import DEFAULT_LINK_SPEED, ConfigError, Routing, RoutingPolicy
from .scenarios import Scenario, gen_incast, gen_model_verification, gen_permutation
from .simulation import RunSettings
from .transport import CCA, HistoryKind, HistoryPolicy, SwiftConfig

SCENARIO_KINDS = ("model_verification", "permutation", "incast")
_SWIFT_TIME_FIELDS = ("base_target", "hop_scaling", "fs_range", "rto")


@dataclass
class ScenarioConfig:
    kind: str
    radix_k: int
    flow_size: int = 2_000_000
    elephant_count: int = 0
    tracked_fraction: float = 0.01
    start_jitter_us: float = 0.0
    fan_in: int = 20
    delay_factor: float = 2.0


@dataclass
class TopologyConfig:
    link_speed: int = DEFAULT_LINK_SPEED
    queue_capacity: int | None = None
    base_rtt_us: float = 14.0


@dataclass
class RoutingConfig:
    variant: str = Routing.RANDOM_SPRAY.value
    adaptive_quantum_bytes: int | None = None


@dataclass
class HistoryConfig:
    kind: str = HistoryKind.LATEST_ONLY.value
    m: int = 1
    alpha: float = 0.5
    K: int = 10


@dataclass
class CcaConfig:
    name: str = CCA.SWIFT.value
    history: HistoryConfig = field(default_factory=HistoryConfig)
    # SwiftConfig overrides; time fields in us
    swift: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    routing: RoutingConfig = field(default_factory=RoutingConfig)
    cca: CcaConfig = field(default_factory=CcaConfig)
    elephant_rate: float = 0.5
    max_time_ms: float = 1000.0
    runs: int | None = None
    seed_base: int = 0
    output_dir: str = "out"

    def __post_init__(self):
        if self.runs is None:
            self.runs = 100 if self.scenario.kind == "model_verification" else 20
        self.validate()

    # -- validation / conversion -------------------------------------------------
    def validate(self) -> None:
        s = self.scenario
        if s.kind not in SCENARIO_KINDS:
            raise ConfigError(f"scenario.kind must be one of {SCENARIO_KINDS}")
        if s.radix_k < 4 or s.radix_k % 2:
            raise ConfigError("scenario.radix_k must be an even integer >= 4")
        if s.flow_size <= 0:
            raise ConfigError("scenario.flow_size must be positive")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        try:
            Routing(self.routing.variant)
            CCA(self.cca.name)
            self.swift_config()
            self.history_policy()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.topology.queue_capacity is not None and self.topology.queue_capacity <= 0:
            raise ConfigError("topology.queue_capacity must be positive or null")

    def swift_config(self) -> SwiftConfig:
        kw = dict(self.cca.swift)
        known = {f.name for f in fields(SwiftConfig)}
        bad = set(kw) - known
        if bad:
            raise ConfigError(f"unknown cca.swift keys: {sorted(bad)}")
        for k in _SWIFT_TIME_FIELDS:
            if k in kw:
                kw[k] = round(kw[k] * US)
        return SwiftConfig(**kw)

    def history_policy(self) -> HistoryPolicy:
        h = self.cca.history
        return HistoryPolicy(HistoryKind(h.kind), m=h.m, alpha=h.alpha, K=h.K)

    def settings(self) -> RunSettings:
        return RunSettings(
            cca=CCA(self.cca.name),
            history=self.history_policy(),
            swift=self.swift_config(),
            routing=RoutingPolicy(Routing(self.routing.variant),
                                  self.routing.adaptive_quantum_bytes),
            queue_capacity=self.topology.queue_capacity,
            link_speed=self.topology.link_speed,
            elephant_rate=self.elephant_rate,
            max_time=round(self.max_time_ms * MS),
        )

    def build_scenario(self, seed: int) -> Scenario:
        s = self.scenario
        base_rtt = round(self.topology.base_rtt_us * US)
        if s.kind == "model_verification":
            sc = gen_model_verification(s.radix_k, seed, base_rtt, s.delay_factor, s.flow_size,
                                        self.topology.link_speed)
        elif s.kind == "permutation":
            sc = gen_permutation(s.radix_k, s.elephant_count, seed, s.flow_size,
                                 s.tracked_fraction, round(s.start_jitter_us * US))
        else:
            sc = gen_incast(s.radix_k, s.fan_in, seed, s.flow_size)
        sc.base_rtt = base_rtt
        return sc

    def seeds(self) -> list[int]:
        return list(range(self.seed_base, self.seed_base + self.runs))

    # -- serialization -----------------------------------------------------------
    def to_dict(self) -> dict:
        return asdict(self)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def effective(self) -> dict:
        """Every parameter value a run actually uses, for the manifest."""
        d = self.to_dict()
        d["effective_swift"] = asdict(self.swift_config())
        d["effective_history"] = {k: (v.value if hasattr(v, "value") else v)
                                  for k, v in asdict(self.history_policy()).items()}
        return d


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys in {where or 'config'}: {sorted(unknown)}")
    nested = {"scenario": ScenarioConfig, "topology": TopologyConfig, "routing": RoutingConfig,
              "cca": CcaConfig, "history": HistoryConfig}
    kw = {}
    for name, value in data.items():
        sub = nested.get(name)
        if sub is not None and name != "swift":
            kw[name] = _build(sub, value, f"{where}.{name}".lstrip("."))
        else:
            kw[name] = value
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from exc


def from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict) or "scenario" not in data:
        raise ConfigError("missing required field: scenario")
    return _build(ExperimentConfig, data, "")


def loads(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    return from_dict(data)


def load(path) -> ExperimentConfig:
    with open(path) as fh:
        return loads(fh.read())
