import xml.etree.ElementTree as ET

import numpy as np
import pytest

from weightedsums.exceptions import InvalidArgumentError
from weightedsums.experiments import ExponentFit, RateRow, RateTable
from weightedsums.svg import emit_svg, render_svg

NS = "{http://www.w3.org/2000/svg}"


def _table(ns):
    return RateTable([RateRow(n, 0.3 / n, 0.01 / n, 0.2 / n, 0.005 / n, 2.0, 0.0, 1.0 / n, 0.01)
                      for n in ns])


def test_two_rows_parse():
    root = ET.fromstring(render_svg(_table([4, 8])))
    assert root.tag == NS + "svg"
    assert len(root.findall(NS + "circle")) == 2
    assert len(root.findall(NS + "polyline")) == 1


def test_fit_curve_and_legend():
    fit = ExponentFit(-1.0, 0.3, 1.0, "power_times_log")
    root = ET.fromstring(render_svg(_table([4, 8, 16]), fit))
    assert len(root.findall(NS + "polyline")) == 2
    texts = [t.text for t in root.findall(NS + "text")]
    assert any("power_times_log" in t and "alpha=-1.000" in t for t in texts)


def test_byte_identical(tmp_path):
    t = _table([6, 8, 10, 12])
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    emit_svg(t, a, fit=ExponentFit(-1.0, 0.3, 1.0, "power"))
    emit_svg(t, b, fit=ExponentFit(-1.0, 0.3, 1.0, "power"))
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("ns", [[], [4]])
def test_too_few_rows(ns):
    with pytest.raises(InvalidArgumentError):
        render_svg(_table(ns))


def test_nonpositive_values_rejected():
    rows = _table([4, 8]).rows
    rows[0] = RateRow(4, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 1.0, 0.0)
    with pytest.raises(InvalidArgumentError):
        render_svg(RateTable(rows))


def test_write_failure(tmp_path):
    with pytest.raises(OSError):
        emit_svg(_table([4, 8]), tmp_path / "missing" / "x.svg")


def test_points_monotone_in_n():
    root = ET.fromstring(render_svg(_table([4, 8, 16, 32])))
    xs = [float(c.get("cx")) for c in root.findall(NS + "circle")]
    ys = [float(c.get("cy")) for c in root.findall(NS + "circle")]
    assert np.all(np.diff(xs) > 0)
    # decreasing values are drawn lower, i.e. increasing svg y
    assert np.all(np.diff(ys) > 0)
