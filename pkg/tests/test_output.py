import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hambvp.output import (Table, count_svg_points, csv_text, emit, format_value, gnuplot_text,
                           parse_value, read_csv, read_json, svg_text)

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


def test_one_row_table_gives_two_csv_lines():
    text = csv_text(Table("t", ("a", "b"), [(1.5, "x")]))
    assert text.split("\r\n")[:-1] == ["a,b", "1.5,x"]


@given(st.lists(st.tuples(finite, st.sampled_from(["A2", "A3", "with,comma", 'q"uote'])),
                min_size=1, max_size=30))
def test_csv_is_deterministic_and_order_free(rows):
    t1 = Table("t", ("v", "cls"), list(rows))
    t2 = Table("t", ("v", "cls"), list(reversed(rows)))
    assert csv_text(t1) == csv_text(t2)
    assert csv_text(t1) == csv_text(Table("t", ("v", "cls"), list(rows)))


@given(finite)
def test_seventeen_digits_round_trip(v):
    assert float(format_value(v)) == v


def test_special_values():
    assert format_value(float("nan")) == "nan"
    assert format_value(-math.inf) == "-inf"
    assert format_value(None) == ""
    assert parse_value("") is None
    assert parse_value("A4") == "A4"
    assert parse_value("3") == 3


def test_emit_round_trip(tmp_path):
    rows = [(0, i, -7.0 + 0.1 * i, math.sin(i), "regular") for i in range(20)]
    rows.append((1, 0, -6.5, 0.25, "fold"))
    t = Table("diag", ("branch", "index", "mu", "x0", "tag"), rows, meta={"N": 14},
              plot=("mu", "x0", "branch"))
    files = emit(t, tmp_path, ("csv", "json", "svg", "gnuplot"))
    assert sorted(f.suffix for f in files) == [".csv", ".gp", ".json", ".svg"]
    back = read_csv(tmp_path / "diag.csv")
    assert back.columns == t.columns
    assert sorted(back.rows) == sorted(t.rows)
    js = read_json(tmp_path / "diag.json")
    assert js.meta == {"N": 14}
    assert sorted(map(tuple, js.rows)) == sorted(t.rows)
    assert count_svg_points(tmp_path / "diag.svg") == len(rows)
    assert "diag.csv" in (tmp_path / "diag.gp").read_text()


def test_svg_counts_non_finite_rows():
    t = Table("t", ("x", "y"), [(0.0, 1.0), (1.0, float("nan")), (2.0, 3.0)], plot=("x", "y"))
    assert svg_text(t).count('class="point"') == 3


def test_emit_refuses_empty_tables(tmp_path):
    with pytest.raises(ValueError):
        emit(Table("t", ("a",), []), tmp_path)
    with pytest.raises(ValueError):
        Table("t", ("a", "b"), [(1,)])


def test_plotless_tables_skip_svg(tmp_path):
    files = emit(Table("t", ("a",), [(1.0,)]), tmp_path, ("csv", "svg"))
    assert [f.name for f in files] == ["t.csv"]


def test_gnuplot_groups():
    t = Table("t", ("x", "y", "cls"), [(0.0, 1.0, "A2"), (1.0, 2.0, "A3")], plot=("x", "y", "cls"))
    text = gnuplot_text(t, "t.csv")
    assert "cls=A2" in text and "cls=A3" in text
