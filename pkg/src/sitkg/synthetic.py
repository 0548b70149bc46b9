"""Deterministic synthetic recordings for desk-scale runs.

Each task owns a fixed per-hand grammar: an ordered list of steps
``(action, object, optional)``. A seed only drives the noise: optional
steps, idle insertions, segment durations, box jitter and hand-box flicker.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ingest import HAND_BODIES, RecordingAnnotation, Segment
from .kg_core import PARENT_ACTIONS


@dataclass(frozen=True)
class Step:
    action: str
    obj: str | None = None
    optional: bool = False


def _s(action: str, obj: str | None = None, optional: bool = False) -> Step:
    return Step(action, obj, optional)


# task -> (left hand grammar, right hand grammar)
TEMPLATES: dict[str, tuple[list[Step], list[Step]]] = {
    "cooking": (
        [_s("approach", "banana"), _s("hold", "banana"), _s("retreat")],
        [
            _s("approach", "knife"), _s("lift", "knife"), _s("cut", "banana"), _s("place", "knife"),
            _s("approach", "whisk", True), _s("stir", "bowl"), _s("retreat"),
        ],
    ),
    "cooking_with_bowls": (
        [_s("approach", "bowl"), _s("hold", "bowl"), _s("idle", None, True), _s("retreat")],
        [
            _s("approach", "bowl"), _s("lift", "bowl"), _s("pour", "bowl"), _s("place", "bowl"),
            _s("approach", "whisk"), _s("stir", "whisk"), _s("retreat"),
        ],
    ),
    "pouring": (
        [_s("approach", "cup"), _s("hold", "cup"), _s("drink", "cup", True), _s("retreat")],
        [_s("approach", "bottle"), _s("lift", "bottle"), _s("pour", "bottle"), _s("place", "bottle"), _s("retreat")],
    ),
    "wiping": (
        [_s("approach", "cutting_board"), _s("hold", "cutting_board"), _s("retreat")],
        [_s("approach", "sponge"), _s("lift", "sponge"), _s("wipe", "sponge"), _s("place", "sponge"), _s("retreat")],
    ),
    "cereals": (
        [_s("approach", "bowl"), _s("hold", "bowl"), _s("retreat")],
        [
            _s("approach", "cereals"), _s("lift", "cereals"), _s("pour", "cereals"), _s("place", "cereals"),
            _s("approach", "bottle", True), _s("retreat"),
        ],
    ),
    "hard_drive": (
        [_s("approach", "hard_drive"), _s("hold", "hard_drive"), _s("retreat")],
        [
            _s("approach", "screwdriver"), _s("lift", "screwdriver"), _s("screw", "screwdriver"),
            _s("place", "screwdriver"), _s("retreat"),
        ],
    ),
    "free_hard_drive": (
        [_s("approach", "hard_drive"), _s("hold", "hard_drive"), _s("idle", None, True), _s("retreat")],
        [
            _s("approach", "screwdriver"), _s("lift", "screwdriver"), _s("screw", "screwdriver"),
            _s("place", "screwdriver"), _s("approach", "hard_drive"), _s("lift", "hard_drive"),
            _s("place", "hard_drive"), _s("retreat"),
        ],
    ),
    "hammering": (
        [_s("approach", "wood"), _s("hold", "wood"), _s("retreat")],
        [_s("approach", "hammer"), _s("lift", "hammer"), _s("hammer", "hammer"), _s("place", "hammer"), _s("retreat")],
    ),
    "sawing": (
        [_s("approach", "wood"), _s("hold", "wood"), _s("retreat")],
        [_s("approach", "saw"), _s("lift", "saw"), _s("saw", "saw"), _s("place", "saw"), _s("retreat")],
    ),
}

OBJECTS = (
    "banana", "bottle", "bowl", "cereals", "cup", "cutting_board", "hammer",
    "hard_drive", "knife", "saw", "screwdriver", "sponge", "whisk", "wood",
)

_BOX_HALF = 0.1
_REST = {"left": (-3.0, 0.0, 0.0), "right": (-2.0, 0.0, 0.0)}


def _box(center: Sequence[float], half: float) -> list[float]:
    return [round(c - half, 6) for c in center] + [round(c + half, 6) for c in center]


def _plan(steps: list[Step], rng: np.random.Generator, idle_rate: float) -> list[Step]:
    out: list[Step] = []
    for step in steps:
        if step.optional and rng.random() < 0.5:
            continue
        if out and idle_rate > 0 and rng.random() < idle_rate:
            out.append(Step("idle"))
        out.append(step)
    return out


def generate_recording(
    task: str,
    subject: str,
    take: int,
    grammar: tuple[list[Step], list[Step]],
    rng: np.random.Generator,
    idle_rate: float = 0.1,
    flicker_rate: float = 0.1,
) -> RecordingAnnotation:
    plans = {"left": _plan(grammar[0], rng, idle_rate), "right": _plan(grammar[1], rng, idle_rate)}
    used = sorted({s.obj for p in plans.values() for s in p if s.obj})
    spare = [o for o in OBJECTS if o not in used]
    distractor = spare[int(rng.integers(len(spare)))] if spare else None
    bodies = used + ([distractor] if distractor else [])
    position = {
        obj: (1.0 * i + rng.uniform(-0.02, 0.02), 0.0, 0.0) for i, obj in enumerate(bodies)
    }

    hands: dict[str, list[Segment]] = {}
    target: dict[str, dict[int, str | None]] = {}
    for hand, plan in plans.items():
        frame = 0
        segs = []
        target[hand] = {}
        for step in plan:
            dur = int(rng.integers(4, 12))
            segs.append(Segment(step.action, frame, frame + dur - 1))
            for f in range(frame, frame + dur):
                target[hand][f] = step.obj
            frame += dur
        hands[hand] = segs
    n_frames = max(max(target["left"], default=0), max(target["right"], default=0)) + 1

    boxes: dict[str, list[tuple[int, tuple]]] = {}
    for obj in bodies:
        b = tuple(_box(position[obj], _BOX_HALF))
        boxes[obj] = [(f, b) for f in range(n_frames)]
    for hand in ("left", "right"):
        entries = []
        for f in range(n_frames):
            obj = target[hand].get(f)
            if obj is not None and rng.random() >= flicker_rate:
                jitter = rng.uniform(-0.05, 0.05, size=3)
                center = tuple(np.add(position[obj], jitter))
            else:
                center = _REST[hand]
            entries.append((f, tuple(_box(center, 0.075))))
        boxes[HAND_BODIES[hand]] = entries
    return RecordingAnnotation(task, subject, take, hands, boxes)


def generate_synthetic(
    tasks: int | Sequence[str] = 9,
    subjects: int = 6,
    takes: int = 10,
    seed: int = 1,
    templates: dict[str, tuple[list[Step], list[Step]]] | None = None,
    idle_rate: float = 0.1,
    flicker_rate: float = 0.1,
) -> list[RecordingAnnotation]:
    """Recordings for every (task, subject, take), ordered by that key."""
    templates = templates or TEMPLATES
    if isinstance(tasks, int):
        if not 1 <= tasks <= len(templates):
            raise ValueError(f"tasks must be in 1..{len(templates)}")
        order = [t for t in PARENT_ACTIONS if t in templates] + [t for t in templates if t not in PARENT_ACTIONS]
        task_names = order[:tasks]
    else:
        task_names = list(tasks)
    if subjects < 1 or takes < 1:
        raise ValueError("subjects and takes must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for task in task_names:
        for s in range(1, subjects + 1):
            for take in range(1, takes + 1):
                out.append(
                    generate_recording(task, f"subject_{s}", take, templates[task], rng, idle_rate, flicker_rate)
                )
    return out


def deterministic_grammar() -> dict[str, tuple[list[Step], list[Step]]]:
    """Single-task grammar where every sub-action has exactly one successor."""
    return {
        "pouring": (
            [],
            [_s("approach", "bottle"), _s("lift", "bottle"), _s("pour", "bottle"), _s("place", "bottle"), _s("retreat")],
        )
    }
