"""Language-model backends: prompt bundles, a scripted double, and HTTP.

The agent never talks to a model directly; it builds a PromptBundle per
phase and asks a backend for a completion. The scripted backend makes whole
dialogues deterministic and is what the benchmark runs on.
"""

from __future__ import annotations

import fnmatch
import os
import re
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Mapping, Sequence

from .errors import BackendFailure, ConfigError


class Phase(str, Enum):
    PARSE = "parse"
    REASON = "reason"
    EXECUTE = "execute"
    CORRECT = "correct"


SYSTEM_TEMPLATES: dict[Phase, str] = {
    Phase.PARSE: (
        "You translate one user instruction into canonical command lines, "
        "one per line, and output nothing else."
    ),
    Phase.REASON: (
        "You answer questions about the scene using only the given percept "
        "and memory. Reply with the bare answer."
    ),
    Phase.EXECUTE: (
        "You carry out one sub-task against the scene. Reply with a single "
        "action directive: ACT POINT <id> | ACT MOVE <id> <x> <y> <w> <h> | "
        "ACT SAY <text> | ACT ASK <text>."
    ),
    Phase.CORRECT: (
        "Your previous attempt at this sub-task failed verification; the "
        "failure note is at the end of the memory section. Reply with a "
        "corrected action directive."
    ),
}


@dataclass(frozen=True)
class PromptBundle:
    system: str
    context: str
    percept: str
    instruction: str
    phase: Phase

    def render(self) -> str:
        """Single deterministic prompt string (byte-stable across runs)."""
        return (
            f"{self.system}\n\n"
            f"## Memory\n{self.context}\n\n"
            f"## Percept\n{self.percept}\n\n"
            f"## Instruction\n{self.instruction}\n"
        )

    def focus_ids(self) -> list[str]:
        for line in self.percept.splitlines():
            if line.startswith("FOCUS"):
                return line.split()[1:]
        return []


@dataclass(frozen=True)
class CompletionParams:
    max_tokens: int = 256
    temperature: float = 0.0
    seed: int = 0


class ModelBackend(ABC):
    @abstractmethod
    def complete(self, bundle: PromptBundle, params: CompletionParams) -> str:
        """Return the raw completion text for one prompt bundle."""


FALLBACK_REPLY = "ACT ASK unable"

_TEMPLATE_RE = re.compile(r"\{(id|focus\d+)\}")


@dataclass
class ScriptedRule:
    """First-match-wins reply rule.

    `pattern` is a shell-style glob matched case-insensitively against the
    bundle's instruction text; `phase` of None matches any phase. A
    consume_once rule stops matching after its first hit, which is how
    wrong-then-right correction sequences are scripted.
    """

    pattern: str
    reply: str
    phase: Phase | None = None
    consume_once: bool = False

    def matches(self, bundle: PromptBundle) -> bool:
        if self.phase is not None and self.phase is not bundle.phase:
            return False
        return fnmatch.fnmatchcase(bundle.instruction.lower(), self.pattern.lower())

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"pattern": self.pattern, "reply": self.reply}
        if self.phase is not None:
            out["phase"] = self.phase.value
        if self.consume_once:
            out["consume_once"] = True
        return out

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "ScriptedRule":
        return cls(
            pattern=str(raw["pattern"]),
            reply=str(raw["reply"]),
            phase=Phase(raw["phase"]) if "phase" in raw else None,
            consume_once=bool(raw.get("consume_once", False)),
        )


class ScriptedBackend(ModelBackend):
    """Deterministic backend that replays an ordered rule list.

    Replies may use {id} (alias for {focus0}) and {focusN} placeholders,
    substituted from the bundle's FOCUS line. A reply whose placeholders
    cannot be filled, or no matching rule at all, yields the fallback ask.
    """

    def __init__(self, rules: Sequence[ScriptedRule] = ()) -> None:
        self.rules = list(rules)
        self._consumed: set[int] = set()

    def reset(self) -> None:
        self._consumed.clear()

    def complete(self, bundle: PromptBundle, params: CompletionParams) -> str:
        for idx, rule in enumerate(self.rules):
            if idx in self._consumed:
                continue
            if not rule.matches(bundle):
                continue
            if rule.consume_once:
                self._consumed.add(idx)
            reply = _substitute(rule.reply, bundle.focus_ids())
            return reply if reply is not None else FALLBACK_REPLY
        return FALLBACK_REPLY

    def to_json(self) -> list[dict[str, Any]]:
        return [rule.to_dict() for rule in self.rules]

    @classmethod
    def from_json(cls, raw: Sequence[Mapping[str, Any]]) -> "ScriptedBackend":
        return cls([ScriptedRule.from_dict(r) for r in raw])


def _substitute(reply: str, focus: list[str]) -> str | None:
    def repl(match: re.Match[str]) -> str:
        name = match.group(1)
        index = 0 if name == "id" else int(name[len("focus") :])
        if index >= len(focus):
            raise IndexError(name)
        return focus[index]

    try:
        return _TEMPLATE_RE.sub(repl, reply)
    except IndexError:
        return None


@dataclass
class RemoteBackendConfig:
    endpoint: str
    model: str = "default"
    api_key_env: str = "SCENEAGENT_API_KEY"
    timeout_ms: int = 30000
    max_attempts: int = 3
    backoff_base_s: float = 0.5


class RemoteBackend(ModelBackend):
    """Chat-completion HTTP backend.

    Credentials come only from the configured environment variable. Transport
    errors and 5xx responses retry with exponential backoff; anything else
    fails fast. Exhausted retries raise BackendFailure.
    """

    def __init__(
        self,
        config: RemoteBackendConfig,
        *,
        sleeper: Callable[[float], None] = time.sleep,
        session: Any = None,
    ) -> None:
        if not config.endpoint:
            raise ConfigError("remote backend requires an endpoint")
        key = os.environ.get(config.api_key_env, "")
        if not key:
            raise ConfigError(
                f"remote backend credential env var {config.api_key_env!r} is not set"
            )
        self.config = config
        self._api_key = key
        self._sleep = sleeper
        if session is None:
            import requests

            session = requests.Session()
        self._session = session

    def complete(self, bundle: PromptBundle, params: CompletionParams) -> str:
        payload = {
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": bundle.system},
                {
                    "role": "user",
                    "content": (
                        f"## Memory\n{bundle.context}\n\n"
                        f"## Percept\n{bundle.percept}\n\n"
                        f"## Instruction\n{bundle.instruction}"
                    ),
                },
            ],
            "max_tokens": params.max_tokens,
            "temperature": params.temperature,
            "seed": params.seed,
        }
        headers = {"Authorization": f"Bearer {self._api_key}"}
        timeout = self.config.timeout_ms / 1000.0
        last_error = "no attempt made"
        for attempt in range(self.config.max_attempts):
            if attempt > 0:
                self._sleep(self.config.backoff_base_s * (2 ** (attempt - 1)))
            try:
                response = self._session.post(
                    self.config.endpoint, json=payload, headers=headers, timeout=timeout
                )
            except Exception as exc:  # transport-level failure, retryable
                last_error = f"transport error: {exc}"
                continue
            status = getattr(response, "status_code", 0)
            if 500 <= status < 600:
                last_error = f"server error {status}"
                continue
            if status != 200:
                raise BackendFailure(f"backend returned status {status}")
            try:
                body = response.json()
                return str(body["choices"][0]["message"]["content"])
            except Exception as exc:
                raise BackendFailure(f"malformed backend response: {exc}") from exc
        raise BackendFailure(f"backend unreachable after {self.config.max_attempts} attempts: {last_error}")
