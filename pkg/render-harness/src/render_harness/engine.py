"""Headless scene engine with deterministic time.

Implements the scene-scripting surface that generated visualization code
targets: mobjects, animations, and a ``Scene`` whose ``play``/``wait`` calls
advance a simulated clock.  Nothing is rasterized — the engine's native
output is a scene trace (the ordered call list plus the final clock), which
is what makes clip durations identical across machines.

Cosmetic operations (positioning, coloring, scaling) are accepted and
recorded but have no geometric effect; they exist so that well-formed
generated code runs to completion instead of tripping over attribute
errors.
"""

from __future__ import annotations

DEFAULT_RUN_TIME_S = 1.0
DEFAULT_WAIT_S = 1.0

# Direction/position constants, as plain tuples.
ORIGIN = (0.0, 0.0, 0.0)
UP = (0.0, 1.0, 0.0)
DOWN = (0.0, -1.0, 0.0)
LEFT = (-1.0, 0.0, 0.0)
RIGHT = (1.0, 0.0, 0.0)
UL = (-1.0, 1.0, 0.0)
UR = (1.0, 1.0, 0.0)
DL = (-1.0, -1.0, 0.0)
DR = (1.0, -1.0, 0.0)

# Colors are opaque labels here.
WHITE = "#ffffff"
BLACK = "#000000"
RED = "#fc6255"
GREEN = "#83c167"
BLUE = "#58c4dd"
YELLOW = "#ffff00"
ORANGE = "#ff862f"
PURPLE = "#9a72ac"
GREY = "#888888"
GRAY = GREY
PI = 3.141592653589793
TAU = 2 * PI


class Mobject:
    """A displayable object; only identity and grouping matter headlessly."""

    def __init__(self, *args, **kwargs):
        self.args = args
        self.kwargs = kwargs

    # Cosmetic, chainable no-ops.
    def _chain(self, *args, **kwargs):
        return self

    shift = _chain
    scale = _chain
    rotate = _chain
    move_to = _chain
    next_to = _chain
    to_edge = _chain
    to_corner = _chain
    center = _chain
    align_to = _chain
    arrange = _chain
    arrange_in_grid = _chain
    set_color = _chain
    set_fill = _chain
    set_stroke = _chain
    set_opacity = _chain
    flip = _chain

    def copy(self):
        return type(self)(*self.args, **self.kwargs)

    def get_center(self):
        return ORIGIN

    def describe(self) -> str:
        return type(self).__name__


class Tex(Mobject):
    def __init__(self, *parts, **kwargs):
        super().__init__(*parts, **kwargs)
        self.tex_string = " ".join(str(p) for p in parts)


class MathTex(Tex):
    pass


class Text(Mobject):
    def __init__(self, text="", **kwargs):
        super().__init__(text, **kwargs)
        self.text = str(text)


class Circle(Mobject):
    pass


class Square(Mobject):
    pass


class Rectangle(Mobject):
    pass


class Line(Mobject):
    pass


class Arrow(Mobject):
    pass


class Dot(Mobject):
    pass


class VGroup(Mobject):
    def __init__(self, *members, **kwargs):
        super().__init__(*members, **kwargs)
        self.members = list(members)

    def add(self, *members):
        self.members.extend(members)
        return self

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)

    def describe(self) -> str:
        return f"VGroup[{len(self.members)}]"


class Animation:
    """Base animation: wraps one mobject and a run time in seconds."""

    def __init__(self, mobject: Mobject, run_time: float = DEFAULT_RUN_TIME_S, **kwargs):
        if not isinstance(mobject, Mobject):
            raise TypeError(
                f"{type(self).__name__} animates mobjects, got {type(mobject).__name__}"
            )
        self.mobject = mobject
        self.run_time = float(run_time)
        if self.run_time < 0:
            raise ValueError("run_time must be >= 0")
        self.kwargs = kwargs

    def describe(self) -> str:
        return f"{type(self).__name__}({self.mobject.describe()})"

    def apply(self, scene: "Scene"):
        """Default effect: the target ends up on screen."""
        scene._show(self.mobject)


class Write(Animation):
    pass


class Create(Animation):
    pass


class FadeIn(Animation):
    pass


class DrawBorderThenFill(Animation):
    pass


class FadeOut(Animation):
    def apply(self, scene: "Scene"):
        scene._hide(self.mobject)


class Uncreate(FadeOut):
    pass


class Transform(Animation):
    def __init__(self, mobject: Mobject, target: Mobject, run_time: float = DEFAULT_RUN_TIME_S, **kwargs):
        super().__init__(mobject, run_time=run_time, **kwargs)
        if not isinstance(target, Mobject):
            raise TypeError(f"Transform target must be a mobject, got {type(target).__name__}")
        self.target = target

    def describe(self) -> str:
        return f"Transform({self.mobject.describe()} -> {self.target.describe()})"

    def apply(self, scene: "Scene"):
        scene._hide(self.mobject)
        scene._show(self.target)


class ReplacementTransform(Transform):
    pass


class Scene:
    """Scene base class: user code subclasses this and defines construct().

    ``play`` advances the clock by the longest animation in the call (or an
    explicit ``run_time``); ``wait`` advances it directly.  ``time`` after
    ``construct`` returns is the clip duration.
    """

    def __init__(self):
        self.time = 0.0
        self.mobjects: list[Mobject] = []
        self.calls: list[str] = []

    # -- engine bookkeeping ------------------------------------------------
    def _show(self, mobject: Mobject):
        if mobject not in self.mobjects:
            self.mobjects.append(mobject)

    def _hide(self, mobject: Mobject):
        if mobject in self.mobjects:
            self.mobjects.remove(mobject)

    # -- the scripting surface ----------------------------------------------
    def construct(self):
        raise NotImplementedError("scenes must define construct()")

    def play(self, *animations, run_time: float | None = None, **_style):
        if not animations:
            raise ValueError("play() needs at least one animation")
        for a in animations:
            if not isinstance(a, Animation):
                raise TypeError(f"play() expects animations, got {type(a).__name__}")
        duration = float(run_time) if run_time is not None else max(a.run_time for a in animations)
        if duration < 0:
            raise ValueError("run_time must be >= 0")
        for a in animations:
            a.apply(self)
            self.calls.append(a.describe())
        self.time += duration
        return self

    def wait(self, duration: float = DEFAULT_WAIT_S):
        duration = float(duration)
        if duration < 0:
            raise ValueError("wait() duration must be >= 0")
        self.time += duration
        self.calls.append(f"wait({duration:g})")
        return self

    def add(self, *mobjects):
        for m in mobjects:
            if not isinstance(m, Mobject):
                raise TypeError(f"add() expects mobjects, got {type(m).__name__}")
            self._show(m)
            self.calls.append(f"add({m.describe()})")
        return self

    def remove(self, *mobjects):
        for m in mobjects:
            self._hide(m)
            self.calls.append(f"remove({m.describe()})")
        return self


__all__ = [
    "Animation",
    "Arrow",
    "BLACK",
    "BLUE",
    "Circle",
    "Create",
    "DEFAULT_RUN_TIME_S",
    "DL",
    "DOWN",
    "DR",
    "Dot",
    "DrawBorderThenFill",
    "FadeIn",
    "FadeOut",
    "GRAY",
    "GREEN",
    "GREY",
    "LEFT",
    "Line",
    "MathTex",
    "Mobject",
    "ORANGE",
    "ORIGIN",
    "PI",
    "PURPLE",
    "RED",
    "Rectangle",
    "ReplacementTransform",
    "RIGHT",
    "Scene",
    "Square",
    "TAU",
    "Tex",
    "Text",
    "Transform",
    "UL",
    "UP",
    "UR",
    "Uncreate",
    "VGroup",
    "WHITE",
    "Write",
    "YELLOW",
]
