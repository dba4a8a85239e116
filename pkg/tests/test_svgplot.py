import xml.etree.ElementTree as ET

import pytest

from conftest import worked_example
from hypersep.engine import SeparationConfig, SeparationState, separate
from hypersep.errors import DimensionError
from hypersep.geometry import Hyperplane, Point
from hypersep.svgplot import clip_line, plot_state, render

NS = "{http://www.w3.org/2000/svg}"


def test_clip_line():
    seg = clip_line(1.0, [-0.5, 0.0], (0, 0, 10, 10))
    assert sorted(seg) == [(2.0, 0), (2.0, 10)]
    assert clip_line(1.0, [-0.05, 0.0], (0, 0, 10, 10)) is None


def test_worked_example_structure(tmp_path):
    state = separate(worked_example(), SeparationConfig(seed=0))
    path = tmp_path / "p.svg"
    plot_state(state, path, title="N=29")
    root = ET.parse(path).getroot()
    circles = root.findall(f"{NS}circle")
    lines = [e for e in root.findall(f"{NS}line") if e.get("class") == "plane"]
    normals = [e for e in root.findall(f"{NS}line") if e.get("class") == "normal"]
    assert len(circles) == 29
    assert sorted(int(c.get("data-id")) for c in circles) == list(range(1, 30))
    # every plane crosses the padded bounding box of the data it separates
    assert len(lines) == state.q == len(normals)


def test_points_only():
    svg = render([Point(1, [0.0, 0.0], "a"), Point(2, [1.0, 2.0], "b")], [])
    root = ET.fromstring(svg)
    assert len(root.findall(f"{NS}circle")) == 2
    assert not root.findall(f"{NS}line")


def test_three_d_refused(tmp_path):
    with pytest.raises(DimensionError):
        render([Point(1, [0.0, 0.0, 0.0])], [])
    state = SeparationState(3)
    with pytest.raises(DimensionError):
        plot_state(state, tmp_path / "x.svg")


def test_title_escaped():
    svg = render([Point(1, [0.0, 0.0])], [Hyperplane(1.0, [-1.0, 1.0])], title="a<b")
    assert "a&lt;b" in svg
