import math

import pytest
from hypothesis import given, settings, strategies as st

from cineflight.errors import ShotSyntaxError, ValidationError
from cineflight.grammar import (DollyToward, Hold, Orbit, Reveal, ShotPlan, parse,
                                plan_from_dict, plan_to_dict, serialize)
from strategies import fuzz_inputs, plans


def test_orbit_prompt():
    plan = parse("target(0,0,1); orbit(radius=3, speed=15deg/s, dir=ccw) for 12s")
    assert len(plan.segments) == 1
    seg = plan.segments[0]
    assert isinstance(seg.primitive, Orbit)
    assert seg.duration == 12.0
    assert seg.primitive.radius == 3.0
    assert seg.primitive.angular_speed == math.radians(15)
    assert seg.primitive.direction == "ccw"
    assert plan.target == (0.0, 0.0, 1.0)
    assert plan.blend_duration == 0.5


def test_hold_prompt():
    plan = parse("target(0,0,1); hold for 5s")
    assert [type(s.primitive) for s in plan.segments] == [Hold]
    assert plan.total_duration == 5.0


def test_negative_radius_names_field():
    with pytest.raises(ValidationError) as exc:
        parse("target(0,0,1); orbit(radius=-1, speed=10deg/s, dir=cw) for 8s")
    assert exc.value.field == "radius"


@pytest.mark.parametrize("text, field", [
    ("target(0,0,1); orbit(radius=0.4, speed=1, dir=cw) for 1s", "radius"),
    ("target(0,0,1); orbit(radius=1, speed=0, dir=cw) for 1s", "angular_speed"),
    ("target(0,0,1); orbit(radius=1, speed=1, dir=up) for 1s", "direction"),
    ("target(0,0,1); dolly(speed=1, stop=0.2) for 1s", "stop_distance"),
    ("target(0,0,1); reveal(speed=1, climb=-1) for 1s", "climb_rate"),
    ("target(0,0,1); panorbit(radius=1, speed=1, dir=cw, pan=181deg) for 1s", "pan_offset"),
    ("target(0,0,1); hold for 0s", "duration"),
    ("target(0,0,1); blend(3s); hold for 4s", "blend_duration"),
    ("target(0,0,1); orbit(radius=3, spd=1, dir=cw) for 1s", "spd"),
    ("target(0,0,1); orbit(radius=3m/s, speed=1, dir=cw) for 1s", "radius"),
    ("target(0,0,1); orbit(speed=1, dir=cw) for 1s", "radius"),
    ("target(0,0,1); orbit(radius=1e999, speed=1, dir=cw) for 1s", "radius"),
])
def test_validation_errors(text, field):
    with pytest.raises(ValidationError) as exc:
        parse(text)
    assert exc.value.field == field


@pytest.mark.parametrize("text, position", [
    ("", 0),
    ("   ", 0),
    ("orbit radius=3 for 1s", 6),
    ("target(0,0,1) hold for 1s", 14),
    ("target(0,0,1); fly for 1s", 15),
    ("target(0,0,1); hold for", 23),
    ("target(0,0,1); hold for 1s; ;)", 29),
])
def test_syntax_error_positions(text, position):
    with pytest.raises(ShotSyntaxError) as exc:
        parse(text)
    assert exc.value.position == position
    assert exc.value.expected


def test_lexer_error_position():
    with pytest.raises(ShotSyntaxError) as exc:
        parse("target(0,0,1); hold for 1s $")
    assert exc.value.position == 27


def test_missing_target_and_trailing_semicolon():
    with pytest.raises(ValidationError) as exc:
        parse("orbit(radius=3, speed=1, dir=cw) for 1s")
    assert exc.value.field == "target"
    assert parse("target(0,0,1); hold for 1s;") == parse("target(0,0,1); hold for 1s")


def test_syntax_error_names_token():
    with pytest.raises(ShotSyntaxError) as exc:
        parse("target(0,0,1); fly for 1s")
    assert "'fly'" in str(exc.value)


def test_units_normalize():
    a = parse("target(0,0,1); orbit(radius=3, speed=180deg/s, dir=cw) for 1s")
    b = parse(f"target(0,0,1); orbit(radius=3m, speed={math.pi!r}rad/s, dir=cw) for 1s")
    assert a == b


def test_round_trip_examples():
    orbit = parse("target(0,0,1); orbit(radius=3, speed=15deg/s, dir=ccw) for 12s")
    three = parse("target(0,0,1); dolly(speed=1, stop=2) for 4s; "
                  "orbit(radius=2, speed=0.4, dir=cw, climb=0.1) for 6s; "
                  "reveal(speed=1.5, climb=0.5) for 5s")
    for plan in (orbit, three):
        text = serialize(plan)
        assert parse(text) == plan
        assert serialize(plan) == text


def test_bytes_input():
    assert parse(b"target(0,0,1); hold for 5s") == parse("target(0,0,1); hold for 5s")
    with pytest.raises(ShotSyntaxError):
        parse(b"\xff\xfe")


def test_plan_dict_round_trip():
    plan = parse("target(1,2,3); blend(0.25s); dolly(speed=1) for 3s; "
                 "panorbit(radius=2, speed=10deg/s, dir=ccw, pan=-30deg) for 6s; hold for 1s")
    assert plan_from_dict(plan_to_dict(plan)) == plan


@pytest.mark.parametrize("doc", [
    [],
    {"target": [0, 0, 1]},
    {"target": [0, 0, 1], "segments": [], "extra": 1},
    {"target": [0, 0, 1], "segments": [{"primitive": "fly", "duration": 1}]},
    {"target": [0, 0, 1], "segments": [{"primitive": "hold"}]},
    {"target": [0, 0, 1], "segments": [{"primitive": "hold", "duration": 1, "radius": 2}]},
    {"target": [0, 0, 1], "segments": [{"primitive": "orbit", "duration": 1}]},
    {"target": "origin", "segments": [{"primitive": "hold", "duration": 1}]},
    {"target": [0, 0, 1], "segments": []},
])
def test_plan_from_dict_rejects(doc):
    with pytest.raises(ValidationError):
        plan_from_dict(doc)


def test_plan_type_invariants():
    with pytest.raises(ValidationError):
        ShotPlan((), (0, 0, 0))
    with pytest.raises(ValidationError):
        DollyToward(speed=-1)
    with pytest.raises(ValidationError):
        Reveal(retreat_speed=float("nan"))


@given(plans())
@settings(max_examples=300)
def test_round_trip_property(plan):
    assert parse(serialize(plan)) == plan
    assert plan_from_dict(plan_to_dict(plan)) == plan


@given(st.one_of(st.text(max_size=80), st.binary(max_size=80)))
@settings(max_examples=500)
def test_parse_is_total(data):
    try:
        parse(data)
    except (ShotSyntaxError, ValidationError):
        pass


def test_fuzz_smoke():
    for data in fuzz_inputs(5000, seed=1):
        try:
            parse(data)
        except (ShotSyntaxError, ValidationError):
            pass
