"""Prompt text for task instances.

Phrasing is a pure function of the bound graphs so identical tasks always
carry identical prompts. Objects are referred to by label, with the color
prepended whenever the generator bound one (it does so when the label alone
is ambiguous in the scene).
"""

from __future__ import annotations

from .errors import UnboundSlot
from .taskmodel import Task, TaskType, UNBOUND


def describe_object(slots: dict) -> str:
    label = slots.get("label")
    color = slots.get("color")
    if label is None or label is UNBOUND:
        if slots.get("image") not in (None, UNBOUND):
            return "the object shown in the picture"
        raise UnboundSlot("object has neither label nor picture to refer to")
    if color is not None and color is not UNBOUND:
        return f"the {color} {label}"
    return f"the {label}"


def render_prompt(task: Task) -> str:
    t = task.task_type
    init = task.initial
    if t is TaskType.CLASSIFICATION:
        return "What kind of object is shown in the picture? Answer with a single word."
    if t is TaskType.LOCALIZATION:
        ref = describe_object(init.vertex("obj").slots)
        return (f"Look at your current view. Give the pixel bounding box of {ref} "
                "as four integers x0 y0 x1 y1.")
    if t is TaskType.DEPTH_ESTIMATION:
        ref = describe_object(init.vertex("obj").slots)
        return (f"Look at your current view. How far away is {ref}, "
                "in meters along the line of sight?")
    if t is TaskType.EMBODIED_COUNTING:
        label = init.vertex("obj").slots["label"]
        return (f"Look at your current view. How many objects of type "
                f"'{label}' can you see directly? Ignore reflections.")
    if t is TaskType.MIRROR_COUNTING:
        label = init.vertex("target").slots["label"]
        return (f"Look at the mirror in your current view. How many objects of "
                f"type '{label}' appear inside the mirror?")
    if t is TaskType.PATTERN_COUNTING:
        color = init.vertex("obj").slots["color"]
        return (f"Look at your current view. How many {color} objects can you "
                "see directly? Ignore reflections.")
    if t is TaskType.RELATIONSHIP_DETECTION:
        ra = describe_object(init.vertex("a").slots)
        rb = describe_object(init.vertex("b").slots)
        return (f"In your current view, where is {ra} relative to {rb}? "
                "Answer with one of: left_of, right_of, in_front_of, behind, "
                "on_top_of, below.")
    if t is TaskType.IN_VIEW_CHECK:
        ref = describe_object(init.vertex("obj").slots)
        return f"Is {ref} anywhere in your current view? Answer yes or no."
    if t is TaskType.NAVIGATION_LABEL:
        ref = describe_object(init.vertex("target").slots)
        return (f"Navigate to {ref}. Stop within one meter of it while "
                "keeping it in view.")
    if t is TaskType.NAVIGATION_PICTURE:
        return ("Navigate to the object shown in the picture. Stop within one "
                "meter of it while keeping it in view.")
    raise ValueError(t)  # pragma: no cover - enum is closed
