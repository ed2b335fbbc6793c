"""Shot-description language.

A shot description is a ``;``-separated list of statements::

    target(0, 0, 1); blend(0.5s);
    dolly(speed=1m/s, stop=3m) for 4s;
    orbit(radius=3, speed=15deg/s, dir=ccw) for 12s;
    reveal(speed=0.8, climb=0.3) for 6s

``target`` is required once, ``blend`` is optional (default 0.5 s) and at
least one timed segment must follow.  Keyword arguments accept an optional
unit suffix glued to the number; angles default to radians.  Unknown keys,
repeated keys and wrong units are errors.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, fields
from typing import Union

from .errors import ShotSyntaxError, ValidationError

DEFAULT_BLEND = 0.5
MIN_STANDOFF = 0.5


# --------------------------------------------------------------------------
# plan types


def _finite(name, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(name, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ValidationError(name, "must be finite")
    return float(value)


def _direction(name, value):
    if value not in ("cw", "ccw"):
        raise ValidationError(name, f"must be 'cw' or 'ccw', got {value!r}")
    return value


@dataclass(frozen=True)
class Orbit:
    radius: float
    angular_speed: float  # rad/s
    direction: str
    climb_rate: float = 0.0

    def __post_init__(self):
        r = _finite("radius", self.radius)
        if r < MIN_STANDOFF:
            raise ValidationError("radius", f"must be >= {MIN_STANDOFF} m, got {r}")
        w = _finite("angular_speed", self.angular_speed)
        if w <= 0:
            raise ValidationError("angular_speed", f"must be > 0, got {w}")
        _direction("direction", self.direction)
        c = _finite("climb_rate", self.climb_rate)
        object.__setattr__(self, "radius", r)
        object.__setattr__(self, "angular_speed", w)
        object.__setattr__(self, "climb_rate", c)

    @property
    def sign(self) -> float:
        return 1.0 if self.direction == "ccw" else -1.0


@dataclass(frozen=True)
class PanOrbit:
    radius: float
    angular_speed: float
    direction: str
    pan_offset: float  # rad, reached at segment end

    def __post_init__(self):
        r = _finite("radius", self.radius)
        if r < MIN_STANDOFF:
            raise ValidationError("radius", f"must be >= {MIN_STANDOFF} m, got {r}")
        w = _finite("angular_speed", self.angular_speed)
        if w <= 0:
            raise ValidationError("angular_speed", f"must be > 0, got {w}")
        _direction("direction", self.direction)
        p = _finite("pan_offset", self.pan_offset)
        if abs(p) > math.pi:
            raise ValidationError("pan_offset", f"|pan_offset| must be <= pi, got {p}")
        object.__setattr__(self, "radius", r)
        object.__setattr__(self, "angular_speed", w)
        object.__setattr__(self, "pan_offset", p)

    @property
    def sign(self) -> float:
        return 1.0 if self.direction == "ccw" else -1.0


@dataclass(frozen=True)
class DollyToward:
    speed: float
    stop_distance: float = 1.0

    def __post_init__(self):
        v = _finite("speed", self.speed)
        if v <= 0:
            raise ValidationError("speed", f"must be > 0, got {v}")
        d = _finite("stop_distance", self.stop_distance)
        if d < MIN_STANDOFF:
            raise ValidationError("stop_distance", f"must be >= {MIN_STANDOFF} m, got {d}")
        object.__setattr__(self, "speed", v)
        object.__setattr__(self, "stop_distance", d)


@dataclass(frozen=True)
class Reveal:
    retreat_speed: float
    climb_rate: float = 0.0

    def __post_init__(self):
        v = _finite("retreat_speed", self.retreat_speed)
        if v <= 0:
            raise ValidationError("retreat_speed", f"must be > 0, got {v}")
        c = _finite("climb_rate", self.climb_rate)
        if c < 0:
            raise ValidationError("climb_rate", f"must be >= 0, got {c}")
        object.__setattr__(self, "retreat_speed", v)
        object.__setattr__(self, "climb_rate", c)


@dataclass(frozen=True)
class Hold:
    pass


Primitive = Union[Orbit, PanOrbit, DollyToward, Reveal, Hold]


@dataclass(frozen=True)
class Segment:
    primitive: Primitive
    duration: float

    def __post_init__(self):
        d = _finite("duration", self.duration)
        if d <= 0:
            raise ValidationError("duration", f"must be > 0, got {d}")
        object.__setattr__(self, "duration", d)


@dataclass(frozen=True)
class ShotPlan:
    segments: tuple[Segment, ...]
    target: tuple[float, float, float]
    blend_duration: float = DEFAULT_BLEND

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValidationError("segments", "at least one segment is required")
        if len(self.target) != 3:
            raise ValidationError("target", "needs three coordinates")
        tgt = tuple(_finite("target", c) for c in self.target)
        b = _finite("blend_duration", self.blend_duration)
        if b < 0:
            raise ValidationError("blend_duration", f"must be >= 0, got {b}")
        shortest = min(s.duration for s in segs)
        if b > shortest / 2:
            raise ValidationError(
                "blend_duration",
                f"{b} s exceeds half the shortest segment ({shortest} s)")
        total = sum(s.duration for s in segs)
        if not math.isfinite(total):
            raise ValidationError("duration", "total duration overflows")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "target", tgt)
        object.__setattr__(self, "blend_duration", b)

    @property
    def total_duration(self) -> float:
        return sum(s.duration for s in self.segments)


# --------------------------------------------------------------------------
# keyword tables: keyword -> (dataclass field, unit kind, default)

_REQUIRED = object()

_KEYWORDS = {
    "orbit": (Orbit, {
        "radius": ("radius", "length", _REQUIRED),
        "speed": ("angular_speed", "angular_speed", _REQUIRED),
        "dir": ("direction", "direction", _REQUIRED),
        "climb": ("climb_rate", "speed", 0.0),
    }),
    "panorbit": (PanOrbit, {
        "radius": ("radius", "length", _REQUIRED),
        "speed": ("angular_speed", "angular_speed", _REQUIRED),
        "dir": ("direction", "direction", _REQUIRED),
        "pan": ("pan_offset", "angle", _REQUIRED),
    }),
    "dolly": (DollyToward, {
        "speed": ("speed", "speed", _REQUIRED),
        "stop": ("stop_distance", "length", 1.0),
    }),
    "reveal": (Reveal, {
        "speed": ("retreat_speed", "speed", _REQUIRED),
        "climb": ("climb_rate", "speed", 0.0),
    }),
    "hold": (Hold, {}),
}
_NAME_OF = {cls: name for name, (cls, _) in _KEYWORDS.items()}

# unit kind -> {suffix: factor to canonical}; None is a bare number
_UNITS = {
    "length": {None: 1.0, "m": 1.0},
    "speed": {None: 1.0, "m/s": 1.0},
    "angular_speed": {None: 1.0, "rad/s": 1.0, "deg/s": "deg"},
    "angle": {None: 1.0, "rad": 1.0, "deg": "deg"},
    "duration": {None: 1.0, "s": 1.0},
}
_CANONICAL_UNIT = {"length": "m", "speed": "m/s", "angular_speed": "rad/s",
                   "angle": "rad", "duration": "s"}


# --------------------------------------------------------------------------
# lexer

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
      (?P<unit>deg/s|rad/s|m/s|deg|rad|m|s)?(?![A-Za-z0-9_./])
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[();,=])
""", re.VERBOSE)


@dataclass
class _Token:
    kind: str  # number, ident, punct, end
    text: str
    pos: int
    value: float | None = None
    unit: str | None = None


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ShotSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup if m.lastgroup != "unit" else "number"
        if m.group("number") is not None:
            tokens.append(_Token("number", m.group(0), pos,
                                 float(m.group("number")), m.group("unit")))
        elif kind == "ident":
            tokens.append(_Token("ident", m.group(0), pos))
        elif kind == "punct":
            tokens.append(_Token("punct", m.group(0), pos))
        pos = m.end()
    tokens.append(_Token("end", "", n))
    return tokens


# --------------------------------------------------------------------------
# recursive-descent parser


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def fail(self, expected):
        t = self.tok
        found = "end of input" if t.kind == "end" else repr(t.text)
        raise ShotSyntaxError(f"unexpected {found}", t.pos, expected)

    def punct(self, ch):
        if self.tok.kind == "punct" and self.tok.text == ch:
            self.i += 1
            return
        self.fail([repr(ch)])

    def at_punct(self, ch):
        return self.tok.kind == "punct" and self.tok.text == ch

    def number(self, field_name, kind):
        t = self.tok
        if t.kind != "number":
            self.fail(["number"])
        self.i += 1
        return _convert(field_name, kind, t.value, t.unit)

    def program(self) -> ShotPlan:
        target = None
        blend = None
        segments = []
        while True:
            while self.at_punct(";"):
                self.i += 1
            if self.tok.kind == "end":
                break
            t = self.tok
            if t.kind != "ident":
                self.fail(["'target'", "'blend'", "primitive name"])
            if t.text == "target":
                if target is not None:
                    raise ValidationError("target", "given more than once")
                target = self.target()
            elif t.text == "blend":
                if blend is not None:
                    raise ValidationError("blend_duration", "given more than once")
                self.i += 1
                self.punct("(")
                blend = self.number("blend_duration", "duration")
                self.punct(")")
            elif t.text in _KEYWORDS:
                segments.append(self.segment())
            else:
                self.fail(["'target'", "'blend'"] + [repr(k) for k in _KEYWORDS])
            if self.tok.kind != "end":
                self.punct(";")
        if not segments and target is None and blend is None:
            raise ShotSyntaxError("empty shot description", self.tok.pos,
                                  ["'target'", "primitive name"])
        if target is None:
            raise ValidationError("target", "missing target(x, y, z) statement")
        if not segments:
            raise ValidationError("segments", "at least one segment is required")
        return ShotPlan(tuple(segments), target,
                        DEFAULT_BLEND if blend is None else blend)

    def target(self):
        self.i += 1
        self.punct("(")
        xyz = [self.number("target", "length")]
        for _ in range(2):
            self.punct(",")
            xyz.append(self.number("target", "length"))
        self.punct(")")
        return tuple(xyz)

    def segment(self) -> Segment:
        name = self.tok.text
        cls, table = _KEYWORDS[name]
        self.i += 1
        given = {}
        if self.at_punct("("):
            self.i += 1
            if not self.at_punct(")"):
                self.kwarg(name, table, given)
                while self.at_punct(","):
                    self.i += 1
                    self.kwarg(name, table, given)
            self.punct(")")
        if not (self.tok.kind == "ident" and self.tok.text == "for"):
            self.fail(["'for'"] + (["'('"] if not given else []))
        self.i += 1
        duration = self.number("duration", "duration")
        kwargs = {}
        for key, (attr, _kind, default) in table.items():
            if key in given:
                kwargs[attr] = given[key]
            elif default is _REQUIRED:
                raise ValidationError(attr, f"{name} requires '{key}='")
            else:
                kwargs[attr] = default
        return Segment(cls(**kwargs), duration)

    def kwarg(self, name, table, given):
        t = self.tok
        if t.kind != "ident":
            self.fail(["keyword"])
        if t.text not in table:
            raise ValidationError(
                t.text, f"unknown key for {name} (allowed: {', '.join(table) or 'none'})")
        if t.text in given:
            raise ValidationError(table[t.text][0], f"'{t.text}' given more than once")
        key = t.text
        attr, kind, _ = table[key]
        self.i += 1
        self.punct("=")
        if kind == "direction":
            v = self.tok
            if v.kind != "ident":
                self.fail(["'cw'", "'ccw'"])
            self.i += 1
            given[key] = _direction(attr, v.text)
        else:
            given[key] = self.number(attr, kind)


def _convert(field_name, kind, value, unit):
    table = _UNITS[kind]
    if unit not in table:
        allowed = ", ".join(u for u in table if u)
        raise ValidationError(field_name, f"unit '{unit}' not allowed (use {allowed})")
    value = _finite(field_name, value)
    factor = table[unit]
    return math.radians(value) if factor == "deg" else value * factor


def parse(text: str | bytes) -> ShotPlan:
    """Parse a shot description into a validated :class:`ShotPlan`.

    Raises :class:`ShotSyntaxError` for malformed input and
    :class:`ValidationError` when a value breaks a plan invariant.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ShotSyntaxError("input is not valid UTF-8", exc.start) from None
    if not isinstance(text, str):
        raise TypeError(f"expected str or bytes, got {type(text).__name__}")
    if not text.strip():
        raise ShotSyntaxError("empty shot description", 0, ["'target'"])
    return _Parser(text).program()


# --------------------------------------------------------------------------
# serialization


def _num(value, unit=None):
    s = repr(float(value))
    return s + unit if unit else s


def serialize(plan: ShotPlan) -> str:
    """Canonical text form; ``parse(serialize(p)) == p`` exactly."""
    tx, ty, tz = plan.target
    parts = [f"target({_num(tx)}, {_num(ty)}, {_num(tz)})",
             f"blend({_num(plan.blend_duration, 's')})"]
    for seg in plan.segments:
        name = _NAME_OF[type(seg.primitive)]
        _, table = _KEYWORDS[name]
        args = []
        for key, (attr, kind, _) in table.items():
            v = getattr(seg.primitive, attr)
            args.append(f"{key}={v}" if kind == "direction"
                        else f"{key}={_num(v, _CANONICAL_UNIT[kind])}")
        head = f"{name}({', '.join(args)})" if args else name
        parts.append(f"{head} for {_num(seg.duration, 's')}")
    return "; ".join(parts)


def plan_to_dict(plan: ShotPlan) -> dict:
    """JSON document used for ``plan.json``."""
    segs = []
    for seg in plan.segments:
        d = {"primitive": _NAME_OF[type(seg.primitive)], "duration": seg.duration}
        for f in fields(seg.primitive):
            d[f.name] = getattr(seg.primitive, f.name)
        segs.append(d)
    return {"target": list(plan.target), "blend_duration": plan.blend_duration,
            "segments": segs}


def plan_from_dict(doc: dict) -> ShotPlan:
    if not isinstance(doc, dict):
        raise ValidationError("plan", "expected a JSON object")
    unknown = set(doc) - {"target", "blend_duration", "segments"}
    if unknown:
        raise ValidationError(sorted(unknown)[0], "unknown key in plan document")
    if "target" not in doc or "segments" not in doc:
        raise ValidationError("plan", "needs 'target' and 'segments'")
    segs = []
    for i, s in enumerate(doc["segments"]):
        if not isinstance(s, dict) or s.get("primitive") not in _KEYWORDS:
            raise ValidationError(f"segments[{i}].primitive", "unknown primitive")
        cls, _ = _KEYWORDS[s["primitive"]]
        allowed = {f.name for f in fields(cls)}
        extra = set(s) - allowed - {"primitive", "duration"}
        if extra:
            raise ValidationError(f"segments[{i}].{sorted(extra)[0]}", "unknown key")
        if "duration" not in s:
            raise ValidationError(f"segments[{i}].duration", "missing")
        try:
            prim = cls(**{k: v for k, v in s.items() if k in allowed})
        except TypeError as exc:
            raise ValidationError(f"segments[{i}]", str(exc)) from None
        segs.append(Segment(prim, s["duration"]))
    target = doc["target"]
    if not isinstance(target, (list, tuple)):
        raise ValidationError("target", "expected [x, y, z]")
    return ShotPlan(tuple(segs), tuple(target),
                    doc.get("blend_duration", DEFAULT_BLEND))
