"""Application demand and interface characteristic estimators."""
from __future__ import annotations

import fnmatch
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

from .core import (
    ALPHA,
    AppKey,
    AppProfile,
    InterfaceState,
    OperationMode,
    QualClass,
)

DEFAULT_PROBE_BYTES = 16 * 1024
DEFAULT_PROBE_PERIOD = 5.0
DEFAULT_SAMPLE_WINDOW = 1.0


def update_app_demand(profile: AppProfile, cc_demand: float, alpha: float = ALPHA) -> AppProfile:
    """Fold the byte count of a just-terminated connection into the app's demand EWMA."""
    if cc_demand < 0:
        raise ValueError(f"negative connection demand {cc_demand}")
    c = (1.0 - alpha) * profile.c_demand + alpha * cc_demand
    return replace(profile, c_demand=c, completed_connections=profile.completed_connections + 1)


# (pattern, class) pairs; patterns are process-name globs or "port:<n>".
DEFAULT_CLASS_RULES: tuple[tuple[str, QualClass], ...] = (
    ("skype*", QualClass.REALTIME),
    ("*voip*", QualClass.REALTIME),
    ("zoom*", QualClass.REALTIME),
    ("port:5060", QualClass.REALTIME),
    ("*ftp*", QualClass.BANDWIDTH_INTENSIVE),
    ("*torrent*", QualClass.BANDWIDTH_INTENSIVE),
    ("port:20", QualClass.BANDWIDTH_INTENSIVE),
    ("port:21", QualClass.BANDWIDTH_INTENSIVE),
)


@dataclass
class Classifier:
    """First-match rule table mapping application keys to a qualitative class."""

    rules: list = field(default_factory=lambda: list(DEFAULT_CLASS_RULES))

    def classify(self, app_key: AppKey) -> QualClass:
        if not app_key.name and app_key.port is None:
            raise ValueError("empty application key")
        name = app_key.name.lower()
        # name rules first, port rules as the fallback signal
        for pattern, cls in self.rules:
            if not pattern.startswith("port:") and name and fnmatch.fnmatchcase(name, pattern.lower()):
                return cls
        if app_key.port is not None:
            for pattern, cls in self.rules:
                if pattern.startswith("port:") and pattern[5:] == str(app_key.port):
                    return cls
        return QualClass.UNKNOWN


def classify_app(app_key: AppKey, classifier: Optional[Classifier] = None) -> QualClass:
    return (classifier or Classifier()).classify(app_key)


class ProfileStore:
    """Per-application demand profiles; unknown keys read as fresh profiles."""

    def __init__(self, classifier: Optional[Classifier] = None):
        self.classifier = classifier or Classifier()
        self._profiles: dict[AppKey, AppProfile] = {}

    def get(self, app_key: AppKey) -> AppProfile:
        prof = self._profiles.get(app_key)
        if prof is None:
            # not stored: lookups stay side-effect free
            return AppProfile(app_key, self.classifier.classify(app_key))
        return prof

    def c_demand(self, app_key: AppKey) -> float:
        prof = self._profiles.get(app_key)
        return prof.c_demand if prof is not None else 0.0

    def record_completion(self, app_key: AppKey, cc_demand: float) -> AppProfile:
        prof = update_app_demand(self.get(app_key), cc_demand)
        self._profiles[app_key] = prof
        return prof

    def __contains__(self, app_key: AppKey) -> bool:
        return app_key in self._profiles

    def __len__(self) -> int:
        return len(self._profiles)


@dataclass(frozen=True)
class BandwidthSample:
    iface_id: int
    bytes_delivered: float
    window: float
    losses_observed: int = 0
    packets_sent: int = 0
    # "probe" (active transfer), "passive" (own traffic) or "peer" (receiver reports)
    source: str = "passive"

    def __post_init__(self) -> None:
        if not self.window > 0:
            raise ValueError("sample window must be positive")
        if self.bytes_delivered < 0:
            raise ValueError("negative byte count")
        if not self.packets_sent >= self.losses_observed >= 0:
            raise ValueError("need packets_sent >= losses_observed >= 0")


def update_interface_estimate(
    iface: InterfaceState, sample: BandwidthSample, alpha: float = ALPHA
) -> InterfaceState:
    """EWMA update of bandwidth and loss estimates, in place; returns ``iface``."""
    if sample.iface_id != iface.iface_id:
        raise ValueError(f"sample for interface {sample.iface_id} applied to {iface.iface_id}")
    rate = 8.0 * sample.bytes_delivered / sample.window
    loss = sample.losses_observed / max(sample.packets_sent, 1)
    iface.est_bandwidth = (1.0 - alpha) * iface.est_bandwidth + alpha * rate
    iface.est_loss_ratio = (1.0 - alpha) * iface.est_loss_ratio + alpha * loss
    return iface


def plan_probes(ifaces: Iterable[InterfaceState], mode: OperationMode) -> list[int]:
    """Interfaces that need an active probe transfer this period."""
    if mode is OperationMode.PACKET_ORIENTED:
        return []
    return [i.iface_id for i in ifaces if i.is_up]


def probe_packet_count(probe_bytes: int, payload_per_packet: int) -> int:
    return max(2, math.ceil(probe_bytes / payload_per_packet))


def probe_interfaces(
    ifaces: Iterable[InterfaceState],
    mode: OperationMode,
    measure: Callable[[int], Optional[BandwidthSample]],
) -> list[BandwidthSample]:
    """Run one probe round with a synchronous ``measure(iface_id)`` transfer.

    Packet-oriented mode sends nothing: its samples come from the peer's
    per-interface delivery reports (see :func:`peer_sample`).
    """
    out = []
    for iface_id in plan_probes(ifaces, mode):
        s = measure(iface_id)
        if s is not None:
            out.append(s)
    return out


def peer_sample(iface_id: int, acked_bytes: float, window: float, losses: int, sent: int) -> BandwidthSample:
    return BandwidthSample(iface_id, acked_bytes, window, losses, sent, source="peer")
