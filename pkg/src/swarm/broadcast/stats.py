"""Relay throughput estimation and probabilistic selection.

Clients weight each relay by success_rate * bandwidth, both tracked as
exponential moving averages, and sample relays in proportion. A
probability floor keeps every relay explorable, and relays that have
gone unprobed are periodically pulled toward the fleet-mean bandwidth
so a stale bad estimate can recover ("healing").
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..prng import SplitMix64


@dataclass
class RelayStats:
    bandwidth_ema: float = 0.0      # bytes/s
    success_rate_ema: float = 1.0   # in [0, 1]
    last_probe: float = 0.0

    def weight(self) -> float:
        return max(self.success_rate_ema, 0.0) * max(self.bandwidth_ema, 0.0)


@dataclass
class StatsBook:
    beta: float = 0.3
    heal_after: float = 10.0   # seconds without a probe before healing applies
    heal_pull: float = 0.1     # fraction pulled toward the fleet mean per tick
    relays: dict[str, RelayStats] = field(default_factory=dict)

    def ensure(self, relay_id: str) -> RelayStats:
        return self.relays.setdefault(relay_id, RelayStats())

    def update(self, relay_id: str, bytes_per_s: float, success: bool,
               now: float) -> None:
        s = self.ensure(relay_id)
        if s.last_probe == 0.0:
            s.bandwidth_ema = bytes_per_s if success else 0.0
            s.success_rate_ema = 1.0 if success else 0.0
        else:
            s.bandwidth_ema = (1 - self.beta) * s.bandwidth_ema + self.beta * bytes_per_s
            s.success_rate_ema = ((1 - self.beta) * s.success_rate_ema
                                  + self.beta * (1.0 if success else 0.0))
        s.last_probe = now

    def healing_tick(self, now: float) -> None:
        if not self.relays:
            return
        fleet_mean = sum(s.bandwidth_ema for s in self.relays.values()) / len(self.relays)
        for s in self.relays.values():
            if now - s.last_probe > self.heal_after:
                s.bandwidth_ema += self.heal_pull * (fleet_mean - s.bandwidth_ema)


def selection_probs(stats: dict[str, RelayStats], p_min: float = 0.05,
                    ) -> dict[str, float]:
    """Pick probabilities proportional to the weights, with every relay
    floored at p_min of the total. Floored relays get exactly p_min and
    the rest share the remainder proportionally (the fixed point of
    w_s -> max(w_s, p_min * sum(w)))."""
    ids = sorted(stats)
    if not ids:
        raise ValueError("no relays")
    if p_min * len(ids) > 1.0 + 1e-12:
        raise ValueError("p_min too large for relay count")
    weights = {r: stats[r].weight() for r in ids}
    if sum(weights.values()) <= 0.0:
        return {r: 1.0 / len(ids) for r in ids}
    floored: set[str] = set()
    while True:
        remainder = 1.0 - p_min * len(floored)
        total = sum(weights[r] for r in ids if r not in floored)
        if total <= 0.0:
            # every positive-weight relay floored: spread the remainder
            free = [r for r in ids if r not in floored]
            probs = {r: p_min for r in floored}
            probs.update({r: remainder / len(free) for r in free} if free else {})
            return probs
        probs = {r: p_min if r in floored else weights[r] / total * remainder
                 for r in ids}
        newly = {r for r in ids if probs[r] < p_min}
        if newly <= floored:
            return probs
        floored |= newly


def select_relay(stats: dict[str, RelayStats], rng: SplitMix64,
                 p_min: float = 0.05) -> str:
    probs = selection_probs(stats, p_min)
    u = rng.next_float()
    acc = 0.0
    ids = sorted(probs)
    for r in ids:
        acc += probs[r]
        if u < acc:
            return r
    return ids[-1]
