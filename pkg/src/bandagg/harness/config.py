"""Experiment configuration and its plain-text file format.

The format is a sectioned key/value file::

    # comments start with '#' or ';'
    [experiment]
    name = custom
    schedulers = all            ; or a comma list of scheduler names
    runs = 15
    seed = 0
    duration = 60               ; seconds
    mode = detect               ; detect | connection | packet
    out = results.csv

    [topology]                  ; bandwidths in Mbps, losses in percent
    l1_bandwidth = 6
    if1_bandwidth = 2
    if2_bandwidth = 1
    if2_loss = 0
    prop_delay_ms = 10
    queue_packets = 64
    mtu = 1500
    dest_supports_dbas = true

    [workload]
    beta_small = 13
    beta_large = 1
    long_lived = false

    [sweep]
    var = if2_bandwidth
    values = 0.25, 0.5, 1.0

    [policy]                    ; app pattern = interface index, first match wins
    skype = 0
    class:realtime = 0

    [classify]                  ; app pattern = realtime | bandwidth | unknown
    myvoip* = realtime

    [events]                    ; repeated keys allowed: fail/restore = <time> <iface>
    fail = 30 1
    restore = 45 1

Unknown sections and keys are errors reported with their line number.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Optional

from ..core import InterfaceEvent, PolicyRule, QualClass
from ..scheduling import SchedulerKind
from ..netsim.engine import Topology
from ..netsim.link import LinkSpec
from ..netsim.workload import LAMBDA_LARGE, LAMBDA_SMALL, WorkloadSpec


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


# nominal parameter bounds: (low, high) in the units used by the config file
PARAM_RANGES = {
    "l1_bandwidth": (6.0, 6.0),
    "l1_loss": (0.0, 0.0),
    "if1_bandwidth": (2.0, 2.0),
    "if1_loss": (0.0, 0.0),
    "if2_bandwidth": (0.25, 2.0),
    "if2_loss": (0.0, 10.0),
    "beta_small": (13.0, 13.0),
    "beta_large": (0.0, 5.0),
}

TOPOLOGY_KEYS = {
    "l1_bandwidth", "l1_loss", "if1_bandwidth", "if1_loss", "if2_bandwidth", "if2_loss",
    "prop_delay_ms", "queue_packets", "mtu", "dest_supports_dbas", "primary_iface",
}
WORKLOAD_KEYS = {"beta_small", "beta_large", "lambda_small", "lambda_large", "long_lived"}
EXPERIMENT_KEYS = {"name", "schedulers", "runs", "seed", "duration", "mode", "out"}
SWEEP_KEYS = {"var", "values"}
SWEEPABLE = (PARAM_RANGES.keys() | {"lambda_small", "lambda_large"})


@dataclass
class ExperimentConfig:
    name: str = "custom"
    # nominal parameter vector; bandwidths in Mbps, losses in percent
    l1_bandwidth: float = 6.0
    l1_loss: float = 0.0
    if1_bandwidth: float = 2.0
    if1_loss: float = 0.0
    if2_bandwidth: float = 1.0
    if2_loss: float = 0.0
    beta_small: float = 13.0
    beta_large: float = 1.0
    lambda_small: float = LAMBDA_SMALL
    lambda_large: float = LAMBDA_LARGE
    long_lived: bool = False
    prop_delay_ms: float = 10.0
    queue_packets: int = 64
    mtu: int = 1500
    dest_supports_dbas: bool = True
    primary_iface: int = 0
    sweep_var: Optional[str] = None
    sweep_values: tuple = ()
    schedulers: tuple = tuple(SchedulerKind)
    runs: int = 15
    seed: int = 0
    duration: float = 60.0
    mode: str = "detect"
    out: Optional[str] = None
    policy: tuple = ()
    class_rules: tuple = ()
    events: tuple = ()

    def points(self) -> list:
        """(sweep value, config at that value) pairs; a single point when nothing is swept."""
        if not self.sweep_var:
            return [(None, self)]
        return [(v, replace(self, **{self.sweep_var: v})) for v in self.sweep_values]

    def topology(self) -> Topology:
        d = self.prop_delay_ms / 1000.0
        mk = lambda bw, loss: LinkSpec(bw * 1e6, loss / 100.0, d, self.queue_packets, self.mtu)  # noqa: E731
        return Topology(
            (mk(self.if1_bandwidth, self.if1_loss), mk(self.if2_bandwidth, self.if2_loss)),
            mk(self.l1_bandwidth, self.l1_loss),
            server_runs_service=self.dest_supports_dbas,
        )

    def workload(self, seed: int) -> WorkloadSpec:
        return WorkloadSpec(self.beta_small, self.beta_large, self.lambda_small, self.lambda_large,
                            self.duration, seed, self.long_lived)

    def validate(self, force_range: bool = False) -> "ExperimentConfig":
        if self.runs < 1:
            raise ConfigError("runs must be at least 1")
        if self.duration <= 0:
            raise ConfigError("duration must be positive")
        if self.mode not in ("detect", "connection", "packet"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not self.schedulers:
            raise ConfigError("no schedulers selected")
        if self.sweep_var is not None:
            if self.sweep_var not in SWEEPABLE:
                raise ConfigError(f"cannot sweep {self.sweep_var!r}")
            if not self.sweep_values:
                raise ConfigError("sweep has no values")
        for ev in self.events:
            if ev.iface_id not in (0, 1):
                raise ConfigError(f"event names unknown interface {ev.iface_id}")
        for rule in self.policy:
            if rule.pinned_iface not in (0, 1):
                raise ConfigError(f"policy pins unknown interface {rule.pinned_iface}")
        if not force_range:
            for _, cfg in self.points():
                for key, (lo, hi) in PARAM_RANGES.items():
                    v = getattr(cfg, key)
                    if not lo <= v <= hi:
                        raise ConfigError(
                            f"{key}={v:g} outside the supported range [{lo:g}, {hi:g}] (use --force-range)"
                        )
        return self


def _bool(v: str) -> bool:
    s = v.lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key: str, raw: str):
    t = _TYPES[key]
    if t == "bool":
        return _bool(raw)
    if t == "int":
        return int(raw)
    if t == "float":
        return float(raw)
    return raw


def parse_config(text: str) -> ExperimentConfig:
    cfg: dict = {}
    policy: list = []
    class_rules: list = []
    events: list = []
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw
        for mark in ("#", ";"):
            if mark in line:
                line = line[: line.index(mark)]
        line = line.strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno)
            section = line[1:-1].strip().lower()
            if section not in ("experiment", "topology", "workload", "sweep", "policy", "classify", "events"):
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if section is None:
            raise ConfigError("key outside any section", lineno)
        if not key or not value:
            raise ConfigError("empty key or value", lineno)
        try:
            if section == "policy":
                policy.append(PolicyRule(key, int(value)))
            elif section == "classify":
                class_rules.append((key, QualClass(value.lower())))
            elif section == "events":
                if key not in ("fail", "restore"):
                    raise ConfigError(f"unknown event {key!r}; use fail or restore", lineno)
                t, iface = value.split()
                events.append(InterfaceEvent(float(t), int(iface), key == "restore"))
            else:
                if section == "sweep":
                    if key not in SWEEP_KEYS:
                        raise ConfigError(f"unknown key {key!r} in [sweep]", lineno)
                    if key == "var":
                        if value not in SWEEPABLE:
                            raise ConfigError(f"cannot sweep {value!r}", lineno)
                        cfg["sweep_var"] = value
                    else:
                        cfg["sweep_values"] = tuple(float(v) for v in value.split(","))
                    continue
                allowed = {"experiment": EXPERIMENT_KEYS, "topology": TOPOLOGY_KEYS, "workload": WORKLOAD_KEYS}
                if key not in allowed[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]", lineno)
                if key == "schedulers":
                    cfg[key] = parse_schedulers(value)
                else:
                    cfg[key] = _coerce(key, value)
        except ConfigError as e:
            if e.line is None:
                raise ConfigError(str(e), lineno) from None
            raise
        except ValueError as e:
            raise ConfigError(f"bad value for {key!r}: {e}", lineno) from None
    return ExperimentConfig(**cfg, policy=tuple(policy), class_rules=tuple(class_rules), events=tuple(events))


def parse_schedulers(value: str) -> tuple:
    if value.strip().lower() == "all":
        return tuple(SchedulerKind)
    return tuple(SchedulerKind.parse(v.strip()) for v in value.split(",") if v.strip())
