import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from cineflight.errors import EmptyInput
from cineflight.figures import plot_control, plot_overlay, plot_tracking_error
from cineflight.overlay import nice_step, render_overlay, write_overlay
from cineflight.sim import simulate_tracking
from cineflight.trajectory import Trajectory

NS = "{http://www.w3.org/2000/svg}"


def _square():
    pos = np.array([[0.0, 0.0, 1.0], [2.0, 0.0, 1.0], [2.0, 2.0, 1.0], [0.0, 2.0, 1.0]])
    return Trajectory.from_samples(np.arange(4.0), pos, np.zeros(4))


def test_square_polyline():
    svg = render_overlay(_square(), width=400, height=400, margin=50)
    root = ET.fromstring(svg)
    lines = root.findall(f".//{NS}polyline")
    assert len(lines) == 1 and lines[0].get("id") == "reference"
    pts = [tuple(map(float, p.split(","))) for p in lines[0].get("points").split()]
    assert len(pts) == 4
    # span 2 m over a 300 px plot: 150 px per metre, y flipped
    x0, y0 = pts[0]
    assert pts[1] == pytest.approx((x0 + 300, y0))
    assert pts[2] == pytest.approx((x0 + 300, y0 - 300))
    assert pts[3] == pytest.approx((x0, y0 - 300))
    assert not root.findall(f".//{NS}circle")


def test_overlay_deterministic_and_complete(orbit_ref):
    ex, _ = simulate_tracking(orbit_ref)
    a = render_overlay(orbit_ref, orbit_ref, ex, (0.0, 0.0, 1.0))
    assert a == render_overlay(orbit_ref, orbit_ref, ex, (0.0, 0.0, 1.0))
    root = ET.fromstring(a)
    assert [p.get("id") for p in root.findall(f".//{NS}polyline")] == \
        ["reference", "estimated", "executed"]
    assert len(root.findall(f".//{NS}circle")) == 1
    labels = [t.text for t in root.findall(f".//{NS}text")]
    assert "x [m]" in labels and "y [m]" in labels
    assert any(re.fullmatch(r"-?\d+(\.\d+)?", lbl or "") for lbl in labels)


def test_overlay_empty():
    with pytest.raises(EmptyInput):
        render_overlay()


def test_write_overlay(tmp_path):
    svg = render_overlay(_square(), target=(1, 1))
    write_overlay(tmp_path / "o.svg", svg)
    assert (tmp_path / "o.svg").read_bytes() == svg.encode()


@pytest.mark.parametrize("span, step", [(1.0, 0.2), (6.0, 2.0), (5.0, 1.0), (0.03, 0.01), (45.0, 10.0)])
def test_nice_step(span, step):
    assert nice_step(span) == pytest.approx(step)


def test_figures_deterministic(tmp_path, orbit_ref):
    ex, log = simulate_tracking(orbit_ref)
    for sub in ("a", "b"):
        d = tmp_path / sub
        d.mkdir()
        plot_overlay(d / "overlay.png", orbit_ref, orbit_ref, ex, (0, 0, 1))
        plot_tracking_error(d / "err.png", orbit_ref, None, ex)
        plot_control(d / "control.png", log)
    for name in ("overlay.png", "err.png", "control.png"):
        a = (tmp_path / "a" / name).read_bytes()
        assert a[:8] == b"\x89PNG\r\n\x1a\n"
        assert a == (tmp_path / "b" / name).read_bytes()
        assert b"matplotlib" not in a
