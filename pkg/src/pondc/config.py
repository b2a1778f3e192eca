"""Run parameters shared by the topology loader, the engine and the probes."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import InvalidArgument


class JitterKind(str, Enum):
    NONE = "None"
    UNIFORM = "Uniform"


@dataclass(frozen=True)
class JitterModel:
    """Per-forwarding-decision delay noise.

    ``Uniform`` adds a draw from [-half_width_us, +half_width_us] to each
    processing delay of a routing node. Draws only come from the
    engine's seeded generator.
    """

    kind: JitterKind = JitterKind.NONE
    half_width_us: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", JitterKind(self.kind))
        if self.half_width_us < 0:
            raise InvalidArgument("jitter half_width_us must be >= 0")
        if self.kind is JitterKind.NONE and self.half_width_us != 0:
            raise InvalidArgument("jitter kind None requires half_width_us == 0")

    @classmethod
    def none(cls) -> JitterModel:
        return cls(JitterKind.NONE, 0.0)

    @classmethod
    def uniform(cls, half_width_us: float) -> JitterModel:
        return cls(JitterKind.UNIFORM, half_width_us)


DEFAULT_JITTER = JitterModel.uniform(30.0)


@dataclass(frozen=True)
class DelayConstants:
    fibre_us_per_km: float = 4.9
    copper_us_per_km: float = 5.4

    def __post_init__(self) -> None:
        if self.fibre_us_per_km <= 0 or self.copper_us_per_km <= 0:
            raise InvalidArgument("propagation constants must be > 0")


@dataclass(frozen=True)
class ProbeConfig:
    iterations: int = 10
    probes_per_run: int = 150
    probe_size_bytes: int = 64
    inter_probe_gap_us: float = 1000.0

    def __post_init__(self) -> None:
        for name in ("iterations", "probes_per_run", "probe_size_bytes", "inter_probe_gap_us"):
            if getattr(self, name) <= 0:
                raise InvalidArgument(f"ProbeConfig.{name} must be positive")
