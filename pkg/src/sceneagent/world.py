"""Scene state: entities, bounding boxes, spatial relations, and events.

Coordinates are normalized to [0, 1] with the origin at the top-left corner,
so "above" means a smaller center y. Scenes are immutable; applying an event
returns a fresh scene with the revision bumped by one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping

from .errors import DuplicateId, InvalidBBox, SelfRelation, UnknownEntity

# Margin for the directional relations; centers closer than this along the
# relevant axis count as neither left/right nor above/below.
DEFAULT_MARGIN = 0.05

_EPS = 1e-9


class SpatialRelation(str, Enum):
    LEFT_OF = "left_of"
    RIGHT_OF = "right_of"
    ABOVE = "above"
    BELOW = "below"
    CONTAINS = "contains"
    OVERLAPS = "overlaps"


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box (x, y, w, h), normalized, top-left origin."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0):
            raise InvalidBBox(f"origin out of range: ({self.x}, {self.y})")
        if self.w <= 0.0 or self.h <= 0.0:
            raise InvalidBBox(f"non-positive extent: ({self.w}, {self.h})")
        if self.x + self.w > 1.0 + _EPS or self.y + self.h > 1.0 + _EPS:
            raise InvalidBBox(
                f"box exceeds unit square: ({self.x}, {self.y}, {self.w}, {self.h})"
            )

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def intersection_area(self, other: "BBox") -> float:
        dx = min(self.x + self.w, other.x + other.w) - max(self.x, other.x)
        dy = min(self.y + self.h, other.y + other.h) - max(self.y, other.y)
        if dx <= 0.0 or dy <= 0.0:
            return 0.0
        return dx * dy

    def contains_box(self, other: "BBox") -> bool:
        """Full inclusion, boundaries allowed."""
        return (
            other.x >= self.x - _EPS
            and other.y >= self.y - _EPS
            and other.x + other.w <= self.x + self.w + _EPS
            and other.y + other.h <= self.y + self.h + _EPS
        )

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    @classmethod
    def from_list(cls, raw: Iterable[float]) -> "BBox":
        vals = list(raw)
        if len(vals) != 4:
            raise InvalidBBox(f"expected 4 numbers, got {len(vals)}")
        return cls(*(float(v) for v in vals))


@dataclass(frozen=True)
class Entity:
    id: str
    category: str
    bbox: BBox
    attributes: Mapping[str, str] = field(default_factory=dict)
    state: Mapping[str, Any] = field(default_factory=dict)
    visible: bool = True

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "category": self.category,
            "attributes": dict(self.attributes),
            "bbox": self.bbox.as_list(),
            "state": dict(self.state),
            "visible": self.visible,
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "Entity":
        return cls(
            id=str(raw["id"]),
            category=str(raw["category"]),
            bbox=BBox.from_list(raw["bbox"]),
            attributes={str(k): str(v) for k, v in raw.get("attributes", {}).items()},
            state=dict(raw.get("state", {})),
            visible=bool(raw.get("visible", True)),
        )


def category_matches(token: str, category: str) -> bool:
    """True when a query token names the category, plural forms included."""
    return token == category or token == category + "s" or token == category + "es"


@dataclass(frozen=True)
class EntityQuery:
    """Predicate over entities.

    `attributes` are keyed constraints (color=red); `values` are bare attribute
    values as they appear in instructions ("red"), matched against any key.
    """

    category: str | None = None
    attributes: Mapping[str, str] = field(default_factory=dict)
    values: tuple[str, ...] = ()

    def matches(self, entity: Entity) -> bool:
        if self.category is not None and not category_matches(self.category, entity.category):
            return False
        for key, val in self.attributes.items():
            if entity.attributes.get(key) != val:
                return False
        attr_values = set(entity.attributes.values())
        return all(v in attr_values for v in self.values)


@dataclass(frozen=True)
class SceneWorld:
    entities: tuple[Entity, ...] = ()
    image_ref: str | None = None
    revision: int = 0

    def get(self, entity_id: str) -> Entity | None:
        for ent in self.entities:
            if ent.id == entity_id:
                return ent
        return None

    def require(self, entity_id: str) -> Entity:
        ent = self.get(entity_id)
        if ent is None:
            raise UnknownEntity(f"no entity with id '{entity_id}'")
        return ent

    def visible_entities(self) -> list[Entity]:
        return [e for e in self.entities if e.visible]

    def ids(self) -> list[str]:
        return [e.id for e in self.entities]

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"entities": [e.to_dict() for e in self.entities]}
        if self.image_ref is not None:
            out["image_ref"] = self.image_ref
        return out

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any], revision: int = 0) -> "SceneWorld":
        entities = tuple(Entity.from_dict(e) for e in raw.get("entities", []))
        seen: set[str] = set()
        for ent in entities:
            if ent.id in seen:
                raise DuplicateId(f"duplicate entity id '{ent.id}' in scene")
            seen.add(ent.id)
        return cls(entities=entities, image_ref=raw.get("image_ref"), revision=revision)


class EventKind(str, Enum):
    MOVE = "move"
    SET_STATE = "set_state"
    SET_ATTRIBUTE = "set_attribute"
    APPEAR = "appear"
    DISAPPEAR = "disappear"


_EVENT_REQUIRES: dict[EventKind, tuple[str, ...]] = {
    EventKind.MOVE: ("entity_id", "bbox"),
    EventKind.SET_STATE: ("entity_id", "key", "value"),
    EventKind.SET_ATTRIBUTE: ("entity_id", "key", "value"),
    EventKind.APPEAR: ("entity",),
    EventKind.DISAPPEAR: ("entity_id",),
}


@dataclass(frozen=True)
class WorldEvent:
    kind: EventKind
    entity_id: str | None = None
    bbox: BBox | None = None
    key: str | None = None
    value: Any = None
    entity: Entity | None = None

    @classmethod
    def move(cls, entity_id: str, bbox: BBox) -> "WorldEvent":
        return cls(kind=EventKind.MOVE, entity_id=entity_id, bbox=bbox)

    @classmethod
    def set_state(cls, entity_id: str, key: str, value: Any) -> "WorldEvent":
        return cls(kind=EventKind.SET_STATE, entity_id=entity_id, key=key, value=value)

    @classmethod
    def set_attribute(cls, entity_id: str, key: str, value: str) -> "WorldEvent":
        return cls(kind=EventKind.SET_ATTRIBUTE, entity_id=entity_id, key=key, value=value)

    @classmethod
    def appear(cls, entity: Entity) -> "WorldEvent":
        return cls(kind=EventKind.APPEAR, entity=entity)

    @classmethod
    def disappear(cls, entity_id: str) -> "WorldEvent":
        return cls(kind=EventKind.DISAPPEAR, entity_id=entity_id)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind.value}
        if self.entity_id is not None:
            out["entity_id"] = self.entity_id
        if self.bbox is not None:
            out["bbox"] = self.bbox.as_list()
        if self.key is not None:
            out["key"] = self.key
        if self.value is not None:
            out["value"] = self.value
        if self.entity is not None:
            out["entity"] = self.entity.to_dict()
        return out

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "WorldEvent":
        kind = EventKind(raw["kind"])
        event = cls(
            kind=kind,
            entity_id=raw.get("entity_id"),
            bbox=BBox.from_list(raw["bbox"]) if "bbox" in raw else None,
            key=raw.get("key"),
            value=raw.get("value"),
            entity=Entity.from_dict(raw["entity"]) if "entity" in raw else None,
        )
        missing = [f for f in _EVENT_REQUIRES[kind] if getattr(event, f) is None]
        if missing:
            raise ValueError(f"{kind.value} event missing {', '.join(missing)}")
        return event


def _require_present(scene: SceneWorld, entity_id: str) -> Entity:
    ent = scene.get(entity_id)
    if ent is None:
        raise UnknownEntity(f"no entity with id '{entity_id}'")
    if not ent.visible:
        raise UnknownEntity(f"entity '{entity_id}' is not visible")
    return ent


def relation_holds(
    rel: SpatialRelation,
    a: str,
    b: str,
    scene: SceneWorld,
    *,
    margin: float = DEFAULT_MARGIN,
) -> bool:
    if a == b:
        raise SelfRelation(f"relation {rel.value} queried with '{a}' on both sides")
    ent_a = _require_present(scene, a)
    ent_b = _require_present(scene, b)
    ax, ay = ent_a.bbox.center
    bx, by = ent_b.bbox.center
    if rel is SpatialRelation.LEFT_OF:
        return ax < bx - margin
    if rel is SpatialRelation.RIGHT_OF:
        return ax > bx + margin
    if rel is SpatialRelation.ABOVE:
        return ay < by - margin
    if rel is SpatialRelation.BELOW:
        return ay > by + margin
    if rel is SpatialRelation.CONTAINS:
        return ent_a.bbox.contains_box(ent_b.bbox)
    if rel is SpatialRelation.OVERLAPS:
        return ent_a.bbox.intersection_area(ent_b.bbox) > 0.0
    raise ValueError(f"unhandled relation {rel!r}")


def apply_event(scene: SceneWorld, event: WorldEvent) -> SceneWorld:
    """Return a new scene with the event applied and revision + 1.

    Entities untouched by the event are shared with the input scene.
    """
    if event.kind is EventKind.APPEAR:
        assert event.entity is not None
        if scene.get(event.entity.id) is not None:
            raise DuplicateId(f"entity '{event.entity.id}' already present")
        entities = scene.entities + (event.entity,)
        return SceneWorld(entities, scene.image_ref, scene.revision + 1)

    assert event.entity_id is not None
    target = scene.require(event.entity_id)

    if event.kind is EventKind.DISAPPEAR:
        entities = tuple(e for e in scene.entities if e.id != event.entity_id)
        return SceneWorld(entities, scene.image_ref, scene.revision + 1)

    if event.kind is EventKind.MOVE:
        assert event.bbox is not None
        replacement = Entity(
            id=target.id,
            category=target.category,
            bbox=event.bbox,
            attributes=dict(target.attributes),
            state=dict(target.state),
            visible=target.visible,
        )
    elif event.kind is EventKind.SET_STATE:
        assert event.key is not None
        new_state = dict(target.state)
        new_state[event.key] = event.value
        replacement = Entity(
            id=target.id,
            category=target.category,
            bbox=target.bbox,
            attributes=dict(target.attributes),
            state=new_state,
            visible=target.visible,
        )
    elif event.kind is EventKind.SET_ATTRIBUTE:
        assert event.key is not None
        new_attrs = dict(target.attributes)
        new_attrs[event.key] = str(event.value)
        replacement = Entity(
            id=target.id,
            category=target.category,
            bbox=target.bbox,
            attributes=new_attrs,
            state=dict(target.state),
            visible=target.visible,
        )
    else:
        raise ValueError(f"unhandled event kind {event.kind!r}")

    entities = tuple(replacement if e.id == target.id else e for e in scene.entities)
    return SceneWorld(entities, scene.image_ref, scene.revision + 1)


def find_entities(scene: SceneWorld, query: EntityQuery) -> list[str]:
    """Ids of visible entities matching the query, ordered by id."""
    return sorted(e.id for e in scene.visible_entities() if query.matches(e))
