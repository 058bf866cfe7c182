"""Shared scene builders and fixtures."""

from __future__ import annotations

import random

import pytest

from sceneagent.world import BBox, Entity, SceneWorld


def make_entity(
    eid: str,
    category: str = "ball",
    box: tuple[float, float, float, float] = (0.1, 0.1, 0.1, 0.1),
    color: str | None = None,
    visible: bool = True,
    **attrs: str,
) -> Entity:
    attributes = dict(attrs)
    if color is not None:
        attributes["color"] = color
    return Entity(
        id=eid,
        category=category,
        bbox=BBox(*box),
        attributes=attributes,
        state={},
        visible=visible,
    )


def make_scene(*entities: Entity, revision: int = 0) -> SceneWorld:
    return SceneWorld(entities=tuple(entities), image_ref=None, revision=revision)


@pytest.fixture
def basic_scene() -> SceneWorld:
    """Five entities on a loose grid; distinct colors within each category."""
    return make_scene(
        make_entity("e1", "ball", (0.10, 0.10, 0.10, 0.10), color="red"),
        make_entity("e2", "ball", (0.70, 0.10, 0.10, 0.10), color="blue"),
        make_entity("e3", "cup", (0.40, 0.40, 0.12, 0.12), color="green"),
        make_entity("e4", "box", (0.10, 0.60, 0.30, 0.30), color="yellow"),
        make_entity("e5", "book", (0.15, 0.65, 0.10, 0.08), color="white"),
    )


def grid_boxes(rng: random.Random, count: int) -> list[BBox]:
    """Random boxes with coordinates snapped to a 0.05 grid.

    Snapping makes exact-margin ties and shared centers common, which is
    where the directional comparisons earn their keep.
    """
    boxes = []
    for _ in range(count):
        w = rng.choice([0.05, 0.10, 0.15, 0.20, 0.30])
        h = rng.choice([0.05, 0.10, 0.15, 0.20, 0.30])
        x = rng.randrange(0, int(round((1.0 - w) / 0.05)) + 1) * 0.05
        y = rng.randrange(0, int(round((1.0 - h) / 0.05)) + 1) * 0.05
        boxes.append(BBox(round(x, 4), round(y, 4), w, h))
    return boxes


def random_scene(rng: random.Random, n_min: int = 2, n_max: int = 6) -> SceneWorld:
    count = rng.randint(n_min, n_max)
    cats = ["ball", "cup", "box", "book", "lamp", "chair"]
    entities = []
    for i, box in enumerate(grid_boxes(rng, count)):
        entities.append(
            Entity(
                id=f"e{i + 1}",
                category=rng.choice(cats),
                bbox=box,
                attributes={"color": rng.choice(["red", "blue", "green"])},
                state={},
                visible=True,
            )
        )
    # Occasionally nest one box inside another so containment fires.
    if count >= 2 and rng.random() < 0.5:
        outer = entities[0].bbox
        inner = BBox(
            round(outer.x + outer.w * 0.25, 4),
            round(outer.y + outer.h * 0.25, 4),
            round(outer.w * 0.5, 4),
            round(outer.h * 0.5, 4),
        )
        entities[1] = Entity(
            id=entities[1].id,
            category=entities[1].category,
            bbox=inner,
            attributes=entities[1].attributes,
            state={},
            visible=True,
        )
    return SceneWorld(entities=tuple(entities), image_ref=None, revision=0)
