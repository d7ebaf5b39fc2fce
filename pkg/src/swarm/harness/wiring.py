"""Run wiring: everything a child process needs to join an experiment.

The harness writes one JSON wiring file per run; every service process
receives its path plus a role. All keys derive from the master seed at
fixed indices, so addresses are stable across reruns of the same seed.
"""

from __future__ import annotations

import json
from pathlib import Path

from ..config import ModelConfig, TrainConfig
from ..keys import SigningKey

KEY_TRAINER = 0
KEY_POOL_OWNER = 1
KEY_WORKER_BASE = 10
KEY_VALIDATOR_BASE = 100


class Wiring:
    def __init__(self, data: dict):
        self.data = data

    @classmethod
    def load(cls, path: str | Path) -> "Wiring":
        return cls(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.data, indent=2, sort_keys=True))

    def __getitem__(self, key: str):
        return self.data[key]

    def get(self, key: str, default=None):
        return self.data.get(key, default)

    @property
    def run_dir(self) -> Path:
        return Path(self.data["run_dir"])

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    def model_config(self) -> ModelConfig:
        return ModelConfig(**self.data["model"])

    def train_config(self) -> TrainConfig:
        return TrainConfig(**self.data["train"])

    @property
    def budgets(self) -> tuple[int, ...]:
        return tuple(self.data["budgets"])

    def key(self, index: int) -> SigningKey:
        return SigningKey.from_seed(self.seed, index)

    def trainer_key(self) -> SigningKey:
        return self.key(KEY_TRAINER)

    def pool_key(self) -> SigningKey:
        return self.key(KEY_POOL_OWNER)

    def worker_key(self, i: int) -> SigningKey:
        return self.key(KEY_WORKER_BASE + i)

    def validator_key(self, i: int) -> SigningKey:
        return self.key(KEY_VALIDATOR_BASE + i)

    def worker_addresses(self) -> list[str]:
        return [self.worker_key(i).address
                for i in range(int(self.data["num_workers"]))]

    def link(self, name: str) -> dict:
        """Shaping spec {'rate': bytes/s|None, 'latency': s} for a link."""
        links = self.data.get("links", {})
        spec = links.get(name, {})
        return {"rate": spec.get("rate"), "latency": spec.get("latency", 0.0)}
