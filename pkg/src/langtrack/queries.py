"""Template query grammar: lexicon, parser, renderer, and constraint matching.

Grammar (case-insensitive):

    [the] [size] [color] <shape> [<spatial>] [<relation> the [color] <shape>]

where <spatial> is one of "on the left", "on the right", "at the top",
"at the bottom", "in the center" and <relation> is one of "left of",
"right of", "above", "below". See docs/grammar.md.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .geometry import Box, FrameBounds


class Shape(str, Enum):
    RECTANGLE = "rectangle"
    ELLIPSE = "ellipse"
    TRIANGLE = "triangle"


class Color(str, Enum):
    RED = "red"
    GREEN = "green"
    BLUE = "blue"
    YELLOW = "yellow"
    ORANGE = "orange"
    PURPLE = "purple"
    CYAN = "cyan"
    PINK = "pink"


# Paint colors for rasterization; chosen to stay distinct from the gray
# background (128) and the dark occluder bar (40).
COLOR_RGB: dict[Color, tuple[int, int, int]] = {
    Color.RED: (220, 40, 40),
    Color.GREEN: (40, 180, 60),
    Color.BLUE: (50, 80, 220),
    Color.YELLOW: (230, 210, 50),
    Color.ORANGE: (240, 140, 30),
    Color.PURPLE: (150, 60, 200),
    Color.CYAN: (60, 200, 210),
    Color.PINK: (240, 130, 180),
}


class SizeQualifier(str, Enum):
    SMALL = "small"
    LARGE = "large"


class SpatialQualifier(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    TOP = "top"
    BOTTOM = "bottom"
    CENTER = "center"


class RelationPredicate(str, Enum):
    LEFT_OF = "left of"
    RIGHT_OF = "right of"
    ABOVE = "above"
    BELOW = "below"


_SPATIAL_PHRASE = {
    SpatialQualifier.LEFT: "on the left",
    SpatialQualifier.RIGHT: "on the right",
    SpatialQualifier.TOP: "at the top",
    SpatialQualifier.BOTTOM: "at the bottom",
    SpatialQualifier.CENTER: "in the center",
}

_SHAPES = {s.value for s in Shape}
_COLORS = {c.value for c in Color}
_SIZES = {s.value for s in SizeQualifier}
# Full token lexicon, used for UnknownToken detection.
LEXICON = (
    _SHAPES
    | _COLORS
    | _SIZES
    | {"the", "on", "at", "in", "left", "right", "top", "bottom", "center", "of", "above", "below"}
)


class QueryError(ValueError):
    pass


class UnknownTokenError(QueryError):
    """A token outside the grammar lexicon."""


class EmptyConstraintError(QueryError):
    """Query parses to no usable constraint (missing head noun)."""


@dataclass(frozen=True)
class Query:
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("query text must be non-empty")


@dataclass(frozen=True)
class ConstraintSet:
    """Attribute constraints extracted from a query.

    ``relation`` pairs a predicate with a reference constraint set that may
    only carry color/shape (depth is capped at one level).
    """

    shape: Optional[Shape] = None
    color: Optional[Color] = None
    size_qualifier: Optional[SizeQualifier] = None
    spatial_qualifier: Optional[SpatialQualifier] = None
    relation: Optional[tuple[RelationPredicate, "ConstraintSet"]] = None

    def __post_init__(self):
        if not any((self.shape, self.color, self.size_qualifier, self.spatial_qualifier, self.relation)):
            raise ValueError("constraint set must have at least one field")
        if self.relation is not None and self.relation[1].relation is not None:
            raise ValueError("relation references cannot nest")

    def n_constraints(self) -> int:
        return sum(
            1
            for v in (self.shape, self.color, self.size_qualifier, self.spatial_qualifier, self.relation)
            if v is not None
        )


def parse(q: Query) -> ConstraintSet:
    """Parse query text into a ConstraintSet per the template grammar."""
    tokens = q.text.lower().split()
    for tok in tokens:
        if tok not in LEXICON:
            raise UnknownTokenError(f"token {tok!r} is not in the grammar lexicon")
    pos = 0

    def peek(k: int = 0) -> Optional[str]:
        return tokens[pos + k] if pos + k < len(tokens) else None

    def take() -> str:
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        return tok

    def parse_noun(allow_size: bool) -> tuple[Optional[SizeQualifier], Optional[Color], Shape]:
        nonlocal pos
        if peek() == "the":
            take()
        size = None
        if allow_size and peek() in _SIZES:
            size = SizeQualifier(take())
        color = None
        if peek() in _COLORS:
            color = Color(take())
        if peek() not in _SHAPES:
            raise EmptyConstraintError(f"expected a shape noun in {q.text!r}")
        shape = Shape(take())
        return size, color, shape

    size, color, shape = parse_noun(allow_size=True)

    spatial = None
    if peek() in ("on", "at", "in"):
        prep = take()
        if take() != "the":
            raise EmptyConstraintError(f"malformed spatial phrase in {q.text!r}")
        word = take()
        expected = {"on": ("left", "right"), "at": ("top", "bottom"), "in": ("center",)}[prep]
        if word not in expected:
            raise EmptyConstraintError(f"malformed spatial phrase in {q.text!r}")
        spatial = SpatialQualifier(word)

    relation = None
    if peek() is not None:
        word = take()
        if word in ("left", "right"):
            if peek() != "of":
                raise EmptyConstraintError(f"malformed relation phrase in {q.text!r}")
            take()
            pred = RelationPredicate.LEFT_OF if word == "left" else RelationPredicate.RIGHT_OF
        elif word == "above":
            pred = RelationPredicate.ABOVE
        elif word == "below":
            pred = RelationPredicate.BELOW
        else:
            raise EmptyConstraintError(f"unexpected trailing token {word!r} in {q.text!r}")
        _, ref_color, ref_shape = parse_noun(allow_size=False)
        relation = (pred, ConstraintSet(shape=ref_shape, color=ref_color))

    if pos != len(tokens):
        raise EmptyConstraintError(f"trailing tokens in {q.text!r}")
    return ConstraintSet(
        shape=shape, color=color, size_qualifier=size, spatial_qualifier=spatial, relation=relation
    )


def render(c: ConstraintSet) -> Query:
    """Render a ConstraintSet back to query text (inverse of parse)."""
    if c.shape is None:
        raise ValueError("cannot render a constraint set without a shape")
    parts = ["the"]
    if c.size_qualifier:
        parts.append(c.size_qualifier.value)
    if c.color:
        parts.append(c.color.value)
    parts.append(c.shape.value)
    if c.spatial_qualifier:
        parts.append(_SPATIAL_PHRASE[c.spatial_qualifier])
    if c.relation:
        pred, ref = c.relation
        parts.append(pred.value)
        parts.append("the")
        if ref.color:
            parts.append(ref.color.value)
        parts.append(ref.shape.value)
    return Query(" ".join(parts))


@dataclass(frozen=True)
class ObjectView:
    """The attribute/geometry view of one object that constraints see."""

    color: Color
    shape: Shape
    size: float
    box: Box


@dataclass(frozen=True)
class MatchContext:
    """Frame-level context needed to evaluate spatial/size/relation constraints."""

    bounds: FrameBounds
    objects: Sequence[ObjectView]

    def median_size(self) -> float:
        sizes = sorted(o.size for o in self.objects)
        n = len(sizes)
        if n == 0:
            return 0.0
        mid = n // 2
        return sizes[mid] if n % 2 else 0.5 * (sizes[mid - 1] + sizes[mid])


def _in_third(value: float, extent: float, which: str) -> bool:
    third = extent / 3.0
    if which == "low":
        return value < third
    if which == "high":
        return value >= 2.0 * third
    return third <= value < 2.0 * third


def _spatial_holds(q: SpatialQualifier, obj: ObjectView, bounds: FrameBounds) -> bool:
    cx, cy = obj.box.center
    if q is SpatialQualifier.LEFT:
        return _in_third(cx, bounds.width, "low")
    if q is SpatialQualifier.RIGHT:
        return _in_third(cx, bounds.width, "high")
    if q is SpatialQualifier.TOP:
        return _in_third(cy, bounds.height, "low")
    if q is SpatialQualifier.BOTTOM:
        return _in_third(cy, bounds.height, "high")
    return _in_third(cx, bounds.width, "mid") and _in_third(cy, bounds.height, "mid")


def _attribute_strength(c: ConstraintSet, obj: ObjectView) -> float:
    """Fraction of the color/shape constraints that hold (reference matching)."""
    checks = []
    if c.shape is not None:
        checks.append(obj.shape == c.shape)
    if c.color is not None:
        checks.append(obj.color == c.color)
    if not checks:
        return 0.0
    return sum(checks) / len(checks)


def _relation_holds(
    pred: RelationPredicate, ref: ConstraintSet, obj: ObjectView, ctx: MatchContext
) -> bool:
    # Reference resolves to the best-matching *other* object; ties keep the
    # earliest in context order.
    best = None
    best_strength = 0.0
    for other in ctx.objects:
        if other is obj:
            continue
        s = _attribute_strength(ref, other)
        if s > best_strength:
            best, best_strength = other, s
    if best is None or best_strength < 1.0:
        return False
    ox, oy = obj.box.center
    rx, ry = best.box.center
    if pred is RelationPredicate.LEFT_OF:
        return ox < rx
    if pred is RelationPredicate.RIGHT_OF:
        return ox > rx
    if pred is RelationPredicate.ABOVE:
        return oy < ry
    return oy > ry


def satisfies(c: ConstraintSet, obj: ObjectView, ctx: MatchContext) -> tuple[bool, float]:
    """Evaluate constraints against one object.

    Returns (flag, match_strength): flag is True iff every set constraint
    holds; match_strength is the fraction of set constraints that hold.
    """
    results = []
    if c.shape is not None:
        results.append(obj.shape == c.shape)
    if c.color is not None:
        results.append(obj.color == c.color)
    if c.size_qualifier is not None:
        med = ctx.median_size()
        if c.size_qualifier is SizeQualifier.SMALL:
            results.append(obj.size < med)
        else:
            results.append(obj.size > med)
    if c.spatial_qualifier is not None:
        results.append(_spatial_holds(c.spatial_qualifier, obj, ctx.bounds))
    if c.relation is not None:
        results.append(_relation_holds(c.relation[0], c.relation[1], obj, ctx))
    strength = sum(results) / len(results)
    return all(results), strength
