"""Simulated unreliable link: delay, jitter, loss, and the reordering they cause.

Each direction of the operator-vehicle connection is an independent channel
instance.  Packets are dropped with fixed probability or delayed by a
truncated-normal latency; delivery order follows delivery time, so sequence
numbers can arrive out of order and receivers must reason by timestamp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInput


@dataclass(frozen=True)
class ChannelConfig:
    """Impairment parameters for one direction of the link."""

    base_delay: float = 0.0
    delay_jitter: float = 0.0
    drop_probability: float = 0.0
    direction: str = "uplink"
    seed: int = 0

    def __post_init__(self):
        if self.base_delay < 0:
            raise InvalidInput(f"base_delay must be >= 0, got {self.base_delay}")
        if self.delay_jitter < 0:
            raise InvalidInput(f"delay_jitter must be >= 0, got {self.delay_jitter}")
        if not 0.0 <= self.drop_probability <= 1.0:
            raise InvalidInput(f"drop_probability must be in [0, 1], got {self.drop_probability}")
        if self.direction not in ("uplink", "downlink"):
            raise InvalidInput(f"direction must be uplink or downlink, got {self.direction!r}")


@dataclass(frozen=True)
class PacketEvent:
    """One transmission outcome; ``delivery_time`` is None when dropped."""

    payload: object
    send_time: float
    delivery_time: float | None
    sequence: int

    @property
    def dropped(self) -> bool:
        return self.delivery_time is None


def transmit(payload: object, send_time: float, config: ChannelConfig,
             rng: np.random.Generator, sequence: int) -> PacketEvent:
    """Submit one packet; total function, deterministic given the rng state."""
    if send_time < 0:
        raise InvalidInput(f"send_time must be >= 0, got {send_time}")
    dropped = rng.random() < config.drop_probability
    jitter = config.delay_jitter * rng.standard_normal() if config.delay_jitter > 0 else 0.0
    if dropped:
        return PacketEvent(payload, float(send_time), None, sequence)
    delay = max(0.0, config.base_delay + jitter)
    return PacketEvent(payload, float(send_time), float(send_time) + delay, sequence)


def deliverable(events: Sequence[PacketEvent], now: float,
                released: set | None = None) -> list[PacketEvent]:
    """Packets due by ``now`` and not yet released, in delivery-time order.

    Delivery order may disagree with sequence order; that reordering is the
    point, and downstream consumers must go by timestamps.  ``released`` is
    updated in place when given.
    """
    due = [e for e in events
           if not e.dropped and e.delivery_time <= now
           and (released is None or e.sequence not in released)]
    due.sort(key=lambda e: (e.delivery_time, e.sequence))
    if released is not None:
        released.update(e.sequence for e in due)
    return due


class Channel:
    """Stateful single-direction link: transmit enqueues, poll releases once."""

    def __init__(self, config: ChannelConfig):
        self.config = config
        self._rng = np.random.default_rng(
            np.random.SeedSequence((config.seed, 0xC4A2 if config.direction == "uplink" else 0xD04E)))
        self._pending: list[PacketEvent] = []
        self._history: list[PacketEvent] = []
        self._next_seq = 0

    @property
    def events(self) -> tuple:
        return tuple(self._history)

    def send(self, payload: object, send_time: float) -> PacketEvent:
        event = transmit(payload, send_time, self.config, self._rng, self._next_seq)
        self._next_seq += 1
        self._history.append(event)
        if not event.dropped:
            self._pending.append(event)
        return event

    def poll(self, now: float) -> list[PacketEvent]:
        """Release every packet due by ``now``; each is released at most once."""
        due = [e for e in self._pending if e.delivery_time <= now]
        due.sort(key=lambda e: (e.delivery_time, e.sequence))
        released = {id(e) for e in due}
        self._pending = [e for e in self._pending if id(e) not in released]
        return due
