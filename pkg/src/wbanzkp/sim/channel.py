"""Radio parameters and the per-transmission shadowing channel."""
from __future__ import annotations

import random
from dataclasses import dataclass

from .traces import LinkTrace


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RadioParams:
    tx_power_dbm: float = -60.0
    sensitivity_dbm: float = -100.0
    bitrate_bps: float = 250_000.0
    header_bytes: int = 17

    def __post_init__(self):
        if self.tx_power_dbm <= self.sensitivity_dbm:
            raise ConfigError("tx power must exceed receiver sensitivity")
        if self.bitrate_bps <= 0 or self.header_bytes < 0:
            raise ConfigError("bitrate must be positive and header non-negative")

    @property
    def link_budget_db(self) -> float:
        return self.tx_power_dbm - self.sensitivity_dbm

    def airtime_ms(self, payload_bytes: int) -> float:
        return (payload_bytes + self.header_bytes) * 8000.0 / self.bitrate_bps


def received_power(trace: LinkTrace, link: tuple[int, int], now: float, rng: random.Random,
                   radio: RadioParams) -> float:
    mean, std = trace.link(link[0], link[1], now)
    shadow = rng.gauss(0.0, std) if std > 0 else 0.0
    return radio.tx_power_dbm - (mean + shadow)


def step_channel(trace: LinkTrace, link: tuple[int, int], now: float, rng: random.Random,
                 radio: RadioParams | None = None) -> bool:
    """One independent shadowing draw; collisions are the MAC's business."""
    radio = radio or RadioParams()
    return received_power(trace, link, now, rng, radio) >= radio.sensitivity_dbm
