"""Run configuration with lossless JSON round-tripping."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .agent import PPOConfig
from .autosched import SearchConstraints
from .cost import CostConfig
from .features import EnvLimits


@dataclass
class RunConfig:
    limits: EnvLimits = field(default_factory=EnvLimits)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    cost: CostConfig = field(default_factory=CostConfig)
    search: SearchConstraints = field(default_factory=SearchConstraints)
    reward_mode: str = "final"      # "immediate" | "final"
    action_space: str = "hier"      # "hier" | "simple"
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "limits": asdict(self.limits),
            "ppo": self.ppo.to_dict(),
            "cost": self.cost.to_dict(),
            "search": asdict(self.search),
            "reward_mode": self.reward_mode,
            "action_space": self.action_space,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        out = cls()
        if "limits" in d:
            out.limits = EnvLimits(**d["limits"])
        if "ppo" in d:
            out.ppo = PPOConfig.from_dict(d["ppo"])
        if "cost" in d:
            out.cost = CostConfig.from_dict(d["cost"])
        if "search" in d:
            out.search = SearchConstraints.from_dict(d["search"])
        out.reward_mode = d.get("reward_mode", out.reward_mode)
        out.action_space = d.get("action_space", out.action_space)
        out.seed = int(d.get("seed", out.seed))
        return out

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))
