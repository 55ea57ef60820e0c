"""Grammar parse/render round trips and constraint satisfaction logic."""

import itertools

import pytest

from langtrack.geometry import Box, FrameBounds
from langtrack.queries import (
    Color,
    ConstraintSet,
    EmptyConstraintError,
    MatchContext,
    ObjectView,
    Query,
    RelationPredicate,
    Shape,
    SizeQualifier,
    SpatialQualifier,
    UnknownTokenError,
    parse,
    render,
    satisfies,
)


def view(color=Color.RED, shape=Shape.RECTANGLE, size=20.0, x=10.0, y=10.0):
    return ObjectView(color=color, shape=shape, size=size, box=Box(x, y, size, size))


def ctx_of(*views, width=90, height=90):
    return MatchContext(bounds=FrameBounds(width, height), objects=list(views))


def test_parse_color_shape():
    c = parse(Query("the red rectangle"))
    assert c == ConstraintSet(shape=Shape.RECTANGLE, color=Color.RED)


def test_parse_full_prefix_and_spatial():
    c = parse(Query("the small blue ellipse on the left"))
    assert c.size_qualifier is SizeQualifier.SMALL
    assert c.color is Color.BLUE
    assert c.shape is Shape.ELLIPSE
    assert c.spatial_qualifier is SpatialQualifier.LEFT


def test_parse_relation():
    c = parse(Query("the green triangle above the purple rectangle"))
    assert c.relation is not None
    pred, ref = c.relation
    assert pred is RelationPredicate.ABOVE
    assert ref == ConstraintSet(shape=Shape.RECTANGLE, color=Color.PURPLE)


def test_parse_is_case_insensitive():
    assert parse(Query("THE Red RECTANGLE")) == parse(Query("the red rectangle"))


def test_parse_unknown_token():
    with pytest.raises(UnknownTokenError):
        parse(Query("the frobnicating cube"))


def test_parse_requires_head_noun():
    with pytest.raises(EmptyConstraintError):
        parse(Query("the small red"))


def test_parse_rejects_empty_text():
    with pytest.raises(ValueError):
        Query("")


def test_constraint_set_requires_a_field():
    with pytest.raises(ValueError):
        ConstraintSet()


def test_constraint_set_relation_depth_capped():
    inner = ConstraintSet(shape=Shape.ELLIPSE, relation=(RelationPredicate.ABOVE, ConstraintSet(shape=Shape.TRIANGLE)))
    with pytest.raises(ValueError):
        ConstraintSet(shape=Shape.RECTANGLE, relation=(RelationPredicate.BELOW, inner))


def all_generator_constraint_sets():
    """Everything the query generator can emit: color+shape plus one optional qualifier."""
    base = [ConstraintSet(shape=s, color=c) for s, c in itertools.product(Shape, Color)]
    out = list(base)
    for b in base[:6]:
        for sq in SizeQualifier:
            out.append(ConstraintSet(shape=b.shape, color=b.color, size_qualifier=sq))
        for sp in SpatialQualifier:
            out.append(ConstraintSet(shape=b.shape, color=b.color, spatial_qualifier=sp))
        for pred in RelationPredicate:
            ref = ConstraintSet(shape=Shape.ELLIPSE, color=Color.CYAN)
            out.append(ConstraintSet(shape=b.shape, color=b.color, relation=(pred, ref)))
    return out


def test_parse_render_round_trip():
    for c in all_generator_constraint_sets():
        assert parse(render(c)) == c


def test_satisfies_exact_match():
    obj = view()
    flag, strength = satisfies(ConstraintSet(shape=Shape.RECTANGLE, color=Color.RED), obj, ctx_of(obj))
    assert flag and strength == 1.0


def test_satisfies_partial_match_strength():
    obj = view()
    flag, strength = satisfies(ConstraintSet(shape=Shape.RECTANGLE, color=Color.BLUE), obj, ctx_of(obj))
    assert not flag
    assert strength == pytest.approx(0.5)


def test_strength_one_iff_flag():
    objs = [view(), view(color=Color.BLUE, x=40), view(shape=Shape.ELLIPSE, x=70)]
    ctx = ctx_of(*objs)
    for c in all_generator_constraint_sets()[:40]:
        for o in objs:
            flag, strength = satisfies(c, o, ctx)
            assert (strength == 1.0) == flag
            assert 0.0 <= strength <= 1.0


def test_spatial_thirds():
    # 90-wide frame: thirds split at 30 and 60
    left = view(x=5, y=40, size=20)       # center x = 15
    middle = view(x=35, y=40, size=20)    # center x = 45
    right = view(x=65, y=40, size=20)     # center x = 75
    ctx = ctx_of(left, middle, right)
    c = ConstraintSet(shape=Shape.RECTANGLE, spatial_qualifier=SpatialQualifier.LEFT)
    assert satisfies(c, left, ctx)[0]
    assert not satisfies(c, middle, ctx)[0]
    assert not satisfies(c, right, ctx)[0]
    c_center = ConstraintSet(shape=Shape.RECTANGLE, spatial_qualifier=SpatialQualifier.CENTER)
    assert satisfies(c_center, middle, ctx)[0]
    assert not satisfies(c_center, left, ctx)[0]


def test_spatial_center_requires_both_axes():
    corner = view(x=35, y=2, size=20)  # center third in x, top third in y
    ctx = ctx_of(corner)
    c = ConstraintSet(shape=Shape.RECTANGLE, spatial_qualifier=SpatialQualifier.CENTER)
    assert not satisfies(c, corner, ctx)[0]
    assert satisfies(ConstraintSet(shape=Shape.RECTANGLE, spatial_qualifier=SpatialQualifier.TOP), corner, ctx)[0]


def test_size_qualifier_uses_scene_median():
    small = view(size=10)
    mid = view(size=20, x=40)
    big = view(size=40, x=65)
    ctx = ctx_of(small, mid, big)
    c_small = ConstraintSet(shape=Shape.RECTANGLE, size_qualifier=SizeQualifier.SMALL)
    c_large = ConstraintSet(shape=Shape.RECTANGLE, size_qualifier=SizeQualifier.LARGE)
    assert satisfies(c_small, small, ctx)[0]
    assert not satisfies(c_small, big, ctx)[0]
    assert satisfies(c_large, big, ctx)[0]
    assert not satisfies(c_large, mid, ctx)[0]  # equal to median is neither


def test_relation_uses_best_matching_reference():
    target = view(x=10, y=40)
    ref = view(color=Color.BLUE, shape=Shape.ELLIPSE, x=60, y=40)
    ctx = ctx_of(target, ref)
    c = parse(Query("the red rectangle left of the blue ellipse"))
    flag, strength = satisfies(c, target, ctx)
    assert flag and strength == 1.0
    c_wrong = parse(Query("the red rectangle right of the blue ellipse"))
    assert not satisfies(c_wrong, target, ctx)[0]


def test_relation_missing_reference_fails():
    target = view(x=10, y=40)
    ctx = ctx_of(target)
    c = parse(Query("the red rectangle left of the blue ellipse"))
    flag, strength = satisfies(c, target, ctx)
    assert not flag
    assert strength < 1.0
