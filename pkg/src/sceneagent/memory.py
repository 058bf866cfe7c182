"""Two-tier dialogue memory with salience-weighted retrieval.

The short tier is a rolling buffer of recent turns; the long tier holds
entries that earned promotion (repeated mentions) or are durable by nature
(spatial facts). Salience blends recency and mention frequency:

    salience = w_r * exp(-decay * age) + w_m * min(1, mentions / 3)

where age counts turns since the entry was last accessed. `update_memory`
never mutates its input; `retrieve` touches last-access stamps in place.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, Iterable, Mapping, Sequence

from .world import SceneWorld, category_matches

if TYPE_CHECKING:  # pragma: no cover - annotations only
    from .executor import AgentAction
    from .planner import Instruction


class EntryKind(str, Enum):
    UTTERANCE = "utterance"
    AGENT_RESPONSE = "agent-response"
    ENTITY_MENTION = "entity-mention"
    SPATIAL_FACT = "spatial-fact"
    SUBTASK_STATE = "subtask-state"
    REFLECTION = "reflection"


class Tier(str, Enum):
    SHORT = "short"
    LONG = "long"


@dataclass(frozen=True)
class MemoryConfig:
    k_turns: int = 4
    promote_mentions: int = 2
    recency_weight: float = 0.5
    mention_weight: float = 0.5
    decay: float = 0.3
    retrieval_budget: int = 12


@dataclass
class MemoryEntry:
    id: str
    kind: EntryKind
    content: str
    entity_refs: tuple[str, ...]
    turn_created: int
    last_accessed: int
    mention_count: int = 1
    salience: float = 0.0
    tier: Tier = Tier.SHORT

    def copy(self) -> "MemoryEntry":
        return MemoryEntry(
            id=self.id,
            kind=self.kind,
            content=self.content,
            entity_refs=self.entity_refs,
            turn_created=self.turn_created,
            last_accessed=self.last_accessed,
            mention_count=self.mention_count,
            salience=self.salience,
            tier=self.tier,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "content": self.content,
            "entity_refs": list(self.entity_refs),
            "turn_created": self.turn_created,
            "last_accessed": self.last_accessed,
            "mention_count": self.mention_count,
            "salience": round(self.salience, 6),
            "tier": self.tier.value,
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "MemoryEntry":
        return cls(
            id=str(raw["id"]),
            kind=EntryKind(raw["kind"]),
            content=str(raw["content"]),
            entity_refs=tuple(raw.get("entity_refs", [])),
            turn_created=int(raw["turn_created"]),
            last_accessed=int(raw["last_accessed"]),
            mention_count=int(raw.get("mention_count", 1)),
            salience=float(raw.get("salience", 0.0)),
            tier=Tier(raw.get("tier", "short")),
        )


def salience_of(entry: MemoryEntry, current_turn: int, config: MemoryConfig) -> float:
    age = max(0, current_turn - entry.last_accessed)
    recency = math.exp(-config.decay * age)
    frequency = min(1.0, entry.mention_count / 3.0)
    return config.recency_weight * recency + config.mention_weight * frequency


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def extract_mentions(text: str, scene: SceneWorld | None) -> list[str]:
    """Ids of visible entities the text plausibly refers to.

    A category counts as mentioned when one of its tokens (singular or plural)
    appears; among same-category entities, only those with the highest number
    of attribute-value hits are kept, so "the red ball" picks out red balls
    while "the balls" keeps them all.
    """
    if scene is None:
        return []
    tokens = set(tokenize(text))
    by_category: dict[str, list[Any]] = {}
    for ent in scene.visible_entities():
        by_category.setdefault(ent.category, []).append(ent)
    mentioned: list[str] = []
    for cat in sorted(by_category):
        if not any(category_matches(tok, cat) for tok in tokens):
            continue
        ents = by_category[cat]
        hits = {e.id: sum(1 for v in e.attributes.values() if v.lower() in tokens) for e in ents}
        best = max(hits.values())
        mentioned.extend(sorted(e.id for e in ents if hits[e.id] == best))
    return mentioned


class MemoryState:
    """Snapshot of both tiers plus the turn counter."""

    def __init__(self, config: MemoryConfig | None = None) -> None:
        self.config = config or MemoryConfig()
        self.short: list[MemoryEntry] = []
        self.long: dict[str, MemoryEntry] = {}
        self.current_turn = 0
        self._next_id = 1

    def clone(self) -> "MemoryState":
        dup = MemoryState(self.config)
        dup.short = [e.copy() for e in self.short]
        dup.long = {k: v.copy() for k, v in self.long.items()}
        dup.current_turn = self.current_turn
        dup._next_id = self._next_id
        return dup

    def new_entry_id(self) -> str:
        eid = f"m{self._next_id:06d}"
        self._next_id += 1
        return eid

    def entries(self) -> list[MemoryEntry]:
        return list(self.short) + [self.long[k] for k in sorted(self.long)]

    def entries_for(self, entity_id: str) -> list[MemoryEntry]:
        return [e for e in self.entries() if entity_id in e.entity_refs]

    def long_refs(self) -> set[str]:
        refs: set[str] = set()
        for entry in self.long.values():
            refs.update(entry.entity_refs)
        return refs

    def snapshot(self) -> dict[str, Any]:
        return {
            "current_turn": self.current_turn,
            "short": [e.to_dict() for e in self.short],
            "long": {k: self.long[k].to_dict() for k in sorted(self.long)},
        }

    @classmethod
    def from_snapshot(cls, raw: Mapping[str, Any], config: MemoryConfig | None = None) -> "MemoryState":
        state = cls(config)
        state.current_turn = int(raw.get("current_turn", 0))
        state.short = [MemoryEntry.from_dict(e) for e in raw.get("short", [])]
        state.long = {k: MemoryEntry.from_dict(v) for k, v in raw.get("long", {}).items()}
        top = 0
        for entry in state.entries():
            try:
                top = max(top, int(entry.id.lstrip("m")))
            except ValueError:
                pass
        state._next_id = top + 1
        return state


def _long_key(entry: MemoryEntry) -> str:
    if entry.kind is EntryKind.ENTITY_MENTION and entry.entity_refs:
        return f"entity:{entry.entity_refs[0]}"
    if entry.kind is EntryKind.SPATIAL_FACT:
        return f"fact:{entry.content}"
    return f"entry:{entry.id}"


def _qualifies_for_long(entry: MemoryEntry, config: MemoryConfig) -> bool:
    return entry.kind is EntryKind.SPATIAL_FACT or entry.mention_count >= config.promote_mentions


def _action_mention_ids(action: Any) -> list[str]:
    ids: list[str] = []
    for ref in getattr(action, "entity_refs", ()) or ():
        ids.append(ref)
    ent = getattr(action, "entity_id", None)
    if ent:
        ids.append(ent)
    for ent in getattr(action, "entity_ids", ()) or ():
        ids.append(ent)
    event = getattr(action, "event", None)
    if event is not None and getattr(event, "entity_id", None):
        ids.append(event.entity_id)
    return ids


def _action_summary(action: Any) -> str:
    summary = getattr(action, "summary", None)
    if callable(summary):
        return str(summary())
    return str(action)


def update_memory(
    prev: MemoryState,
    instruction: "Instruction",
    actions: Sequence["AgentAction"],
    thoughts: Sequence[str] = (),
    *,
    scene: SceneWorld | None = None,
) -> MemoryState:
    """Fold one completed turn into memory, returning a new state.

    Appends the utterance and a response summary, files thoughts by prefix
    ("REL " lines are spatial facts, "SUBTASK " lines are sub-task status,
    the rest reflections), bumps mention counters, then runs promotion,
    eviction, and a salience refresh.
    """
    state = prev.clone()
    turn = instruction.turn
    state.current_turn = turn
    config = state.config

    instr_ids = extract_mentions(instruction.raw, scene)
    action_ids: list[str] = []
    for action in actions:
        action_ids.extend(_action_mention_ids(action))
    mentioned: list[str] = []
    for eid in instr_ids + action_ids:
        if eid not in mentioned:
            mentioned.append(eid)

    def add_short(kind: EntryKind, content: str, refs: Iterable[str] = ()) -> MemoryEntry:
        entry = MemoryEntry(
            id=state.new_entry_id(),
            kind=kind,
            content=content,
            entity_refs=tuple(refs),
            turn_created=turn,
            last_accessed=turn,
        )
        state.short.append(entry)
        return entry

    add_short(EntryKind.UTTERANCE, instruction.raw, instr_ids)
    response_text = "; ".join(_action_summary(a) for a in actions) or "(no action)"
    add_short(EntryKind.AGENT_RESPONSE, response_text, sorted(set(action_ids)))

    for thought in thoughts:
        if thought.startswith("REL "):
            key = f"fact:{thought}"
            existing = state.long.get(key)
            if existing is not None:
                existing.mention_count += 1
                existing.last_accessed = turn
                continue
            parts = thought.split()
            refs = tuple(parts[2:4]) if len(parts) >= 4 else ()
            entry = MemoryEntry(
                id=state.new_entry_id(),
                kind=EntryKind.SPATIAL_FACT,
                content=thought,
                entity_refs=refs,
                turn_created=turn,
                last_accessed=turn,
                tier=Tier.LONG,
            )
            state.long[key] = entry
        elif thought.startswith("SUBTASK "):
            add_short(EntryKind.SUBTASK_STATE, thought)
        else:
            add_short(EntryKind.REFLECTION, thought)

    for eid in mentioned:
        entry = _find_mention_entry(state, eid)
        if entry is None:
            content = _mention_content(eid, scene)
            add_short(EntryKind.ENTITY_MENTION, content, (eid,))
        else:
            entry.mention_count += 1
            entry.last_accessed = turn
            refreshed = _mention_content(eid, scene)
            if refreshed != entry.content and scene is not None and scene.get(eid) is not None:
                entry.content = refreshed

    # Promotion: qualifying entries move to the long tier immediately.
    remaining: list[MemoryEntry] = []
    for entry in state.short:
        if _qualifies_for_long(entry, config):
            _promote(state, entry)
        else:
            remaining.append(entry)
    state.short = remaining

    # Eviction: entries that have sat in the short buffer for k_turns either
    # promote (if they qualify by then) or drop.
    kept: list[MemoryEntry] = []
    for entry in state.short:
        if turn - entry.turn_created >= config.k_turns:
            if _qualifies_for_long(entry, config):
                _promote(state, entry)
        else:
            kept.append(entry)
    state.short = kept

    for entry in state.short:
        entry.salience = salience_of(entry, turn, config)
    for entry in state.long.values():
        entry.salience = salience_of(entry, turn, config)
    return state


def _find_mention_entry(state: MemoryState, entity_id: str) -> MemoryEntry | None:
    key = f"entity:{entity_id}"
    if key in state.long:
        return state.long[key]
    for entry in state.short:
        if entry.kind is EntryKind.ENTITY_MENTION and entry.entity_refs == (entity_id,):
            return entry
    return None


def _mention_content(entity_id: str, scene: SceneWorld | None) -> str:
    if scene is not None:
        ent = scene.get(entity_id)
        if ent is not None:
            attrs = " ".join(ent.attributes[k] for k in sorted(ent.attributes))
            desc = f"{attrs} {ent.category}".strip()
            return f"{entity_id} is a {desc}"
    return f"{entity_id} mentioned"


def _promote(state: MemoryState, entry: MemoryEntry) -> None:
    entry.tier = Tier.LONG
    key = _long_key(entry)
    existing = state.long.get(key)
    if existing is not None and existing.id != entry.id:
        # Merge duplicate subjects rather than keeping both.
        existing.mention_count = max(existing.mention_count, entry.mention_count)
        existing.last_accessed = max(existing.last_accessed, entry.last_accessed)
        return
    state.long[key] = entry


def retrieve(
    memory: MemoryState,
    query_text: str,
    entity_hints: Iterable[str] = (),
    budget: int | None = None,
) -> list[MemoryEntry]:
    """Top entries for a query, scored by id match, overlap, and salience.

    score = 2 * [entry references a hinted entity] + token-overlap ratio
          + salience. Ties break by newer turn_created, then entry id.
    Returned entries get their last-access stamp refreshed in place.
    """
    if budget is None:
        budget = memory.config.retrieval_budget
    hints = set(entity_hints)
    qtok = set(tokenize(query_text))

    def score(entry: MemoryEntry) -> float:
        id_match = 2.0 if hints and any(r in hints for r in entry.entity_refs) else 0.0
        etok = set(tokenize(entry.content)) | set(entry.entity_refs)
        overlap = len(qtok & etok) / max(1, len(qtok))
        return id_match + overlap + entry.salience

    ranked = sorted(memory.entries(), key=lambda e: (-score(e), -e.turn_created, e.id))
    chosen = ranked[: max(0, budget)]
    for entry in chosen:
        entry.last_accessed = max(entry.last_accessed, memory.current_turn)
    return chosen


def render_context(entries: Sequence[MemoryEntry]) -> str:
    """Deterministic text block for prompt assembly."""
    return "\n".join(f"[turn {e.turn_created}][{e.kind.value}] {e.content}" for e in entries)
