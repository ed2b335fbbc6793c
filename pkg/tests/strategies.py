"""Hypothesis strategies and a plain fuzz-input generator shared by tests."""
import math

import numpy as np
from hypothesis import strategies as st

from cineflight.grammar import (DollyToward, Hold, Orbit, PanOrbit, Reveal, Segment,
                                ShotPlan)

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)
positive = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)
radius = st.floats(min_value=0.5, max_value=1e3, allow_nan=False)
direction = st.sampled_from(["cw", "ccw"])

primitives = st.one_of(
    st.builds(Orbit, radius, positive, direction, finite),
    st.builds(PanOrbit, radius, positive, direction,
              st.floats(min_value=-math.pi, max_value=math.pi)),
    st.builds(DollyToward, positive, st.floats(min_value=0.5, max_value=1e3)),
    st.builds(Reveal, positive, st.floats(min_value=0.0, max_value=1e3)),
    st.just(Hold()),
)


@st.composite
def plans(draw, max_segments=5):
    segs = draw(st.lists(st.builds(Segment, primitives, st.floats(min_value=0.01, max_value=1e4)),
                         min_size=1, max_size=max_segments))
    shortest = min(s.duration for s in segs)
    blend = draw(st.floats(min_value=0.0, max_value=shortest / 2))
    target = draw(st.tuples(finite, finite, finite))
    return ShotPlan(tuple(segs), target, blend)


VOCAB = ["target", "orbit", "panorbit", "dolly", "reveal", "hold", "blend", "for",
         "radius", "speed", "dir", "climb", "pan", "stop", "cw", "ccw",
         "(", ")", ";", ",", "=", " ", "3", "-1", "0.5", "1e309", "nan", "12s", "30deg/s",
         "2rad/s", "1m", "4m/s", "90deg", ".", "e", "\x00", "é", "\n"]
SEEDS = [
    "target(0,0,1); orbit(radius=3, speed=15deg/s, dir=ccw) for 12s",
    "target(0,0,1); hold for 5s",
    "target(1,2,3); blend(0.2s); dolly(speed=1, stop=2) for 4s; reveal(speed=1m/s) for 3s",
    "target(0,0,0); panorbit(radius=2, speed=0.3rad/s, dir=cw, pan=45deg) for 6s",
]


def fuzz_inputs(n, seed=0):
    """``n`` strings / byte strings: token soup, mutated seeds and random bytes."""
    rng = np.random.default_rng(seed)
    for i in range(n):
        kind = i % 3
        if kind == 0:
            k = int(rng.integers(0, 25))
            yield "".join(VOCAB[j] for j in rng.integers(0, len(VOCAB), k))
        elif kind == 1:
            s = list(SEEDS[int(rng.integers(0, len(SEEDS)))])
            for _ in range(int(rng.integers(1, 4))):
                op = int(rng.integers(0, 3))
                pos = int(rng.integers(0, len(s) + 1))
                if op == 0 and s:
                    del s[min(pos, len(s) - 1)]
                elif op == 1:
                    s.insert(pos, VOCAB[int(rng.integers(0, len(VOCAB)))])
                elif s:
                    s[min(pos, len(s) - 1)] = chr(int(rng.integers(0, 128)))
            yield "".join(s)
        else:
            yield rng.integers(0, 256, int(rng.integers(0, 40)), dtype=np.uint8).tobytes()
