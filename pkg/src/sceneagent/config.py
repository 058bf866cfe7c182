"""Run configuration shared by the turn loop, perception, and the harness."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Mapping

from .errors import ConfigError
from .memory import MemoryConfig
from .world import DEFAULT_MARGIN


@dataclass(frozen=True)
class AblationFlags:
    """Switches that disable one stage of the cycle at a time.

    disable_memory: every phase sees an empty memory and no updates happen.
    disable_perception: the focus list is the full id-sorted visible dump
    with no attention scoring and no relation facts.
    disable_planner: instructions pass through as a single raw sub-task.
    disable_tools: no detector calls, and no detection confirmation.
    """

    disable_memory: bool = False
    disable_perception: bool = False
    disable_planner: bool = False
    disable_tools: bool = False

    def to_dict(self) -> dict[str, bool]:
        return {
            "disable_memory": self.disable_memory,
            "disable_perception": self.disable_perception,
            "disable_planner": self.disable_planner,
            "disable_tools": self.disable_tools,
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "AblationFlags":
        known = {f for f in cls.__dataclass_fields__}
        bad = set(raw) - known
        if bad:
            raise ConfigError(f"unknown ablation flags: {sorted(bad)}")
        return cls(**{k: bool(v) for k, v in raw.items()})


@dataclass(frozen=True)
class AgentConfig:
    flags: AblationFlags = field(default_factory=AblationFlags)
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    margin: float = DEFAULT_MARGIN
    n_focus: int = 5
    max_retries: int = 2
    seed: int = 0
    parser_mode: str = "grammar"  # "grammar" or "backend"

    def __post_init__(self) -> None:
        if self.parser_mode not in ("grammar", "backend"):
            raise ConfigError(f"parser_mode must be grammar or backend, got {self.parser_mode!r}")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.n_focus < 1:
            raise ConfigError("n_focus must be >= 1")

    def with_flags(self, **kwargs: bool) -> "AgentConfig":
        return replace(self, flags=replace(self.flags, **kwargs))

    def to_dict(self) -> dict[str, Any]:
        return {
            "flags": self.flags.to_dict(),
            "memory": {
                "k_turns": self.memory.k_turns,
                "promote_mentions": self.memory.promote_mentions,
                "recency_weight": self.memory.recency_weight,
                "mention_weight": self.memory.mention_weight,
                "decay": self.memory.decay,
                "retrieval_budget": self.memory.retrieval_budget,
            },
            "margin": self.margin,
            "n_focus": self.n_focus,
            "max_retries": self.max_retries,
            "seed": self.seed,
            "parser_mode": self.parser_mode,
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "AgentConfig":
        try:
            flags = AblationFlags.from_dict(raw.get("flags", {}))
            memory = MemoryConfig(**raw.get("memory", {}))
            return cls(
                flags=flags,
                memory=memory,
                margin=float(raw.get("margin", DEFAULT_MARGIN)),
                n_focus=int(raw.get("n_focus", 5)),
                max_retries=int(raw.get("max_retries", 2)),
                seed=int(raw.get("seed", 0)),
                parser_mode=str(raw.get("parser_mode", "grammar")),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad agent config: {exc}") from exc
