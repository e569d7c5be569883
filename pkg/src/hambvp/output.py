"""Tables and their emission as CSV, JSON, SVG and gnuplot scripts."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

FORMATS = ("csv", "json", "svg", "gnuplot")

# marker shapes cycled over classes / groups
_MARKERS = ("circle", "square", "triangle", "diamond", "cross")
_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


@dataclass
class Table:
    """Named columns and rows of plain values (floats, ints, strings)."""

    name: str
    columns: tuple
    rows: list
    meta: dict = field(default_factory=dict)
    # plot hints: x column, y column, optional grouping column
    plot: tuple | None = None

    def __post_init__(self):
        self.columns = tuple(self.columns)
        for r in self.rows:
            if len(r) != len(self.columns):
                raise ValueError(f"row of length {len(r)} in a table with {len(self.columns)} columns")

    def column(self, name):
        k = self.columns.index(name)
        return [r[k] for r in self.rows]

    def sorted_rows(self):
        return sorted(self.rows, key=_row_key)


def _row_key(row):
    key = []
    for v in row:
        if isinstance(v, str):
            key.append((1, 0.0, v))
        elif v is None or (isinstance(v, float) and math.isnan(v)):
            key.append((2, 0.0, ""))
        else:
            key.append((0, float(v), ""))
    return tuple(key)


def format_value(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float) or hasattr(v, "dtype"):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    return str(v)


def parse_value(s):
    if s == "":
        return None
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def csv_text(table: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(table.columns)
    for r in table.sorted_rows():
        w.writerow([format_value(v) for v in r])
    return buf.getvalue()


def write_csv(table: Table, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(csv_text(table))
    return path


def read_csv(path, name=None) -> Table:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    return Table(name or Path(path).stem, tuple(rows[0]),
                 [tuple(parse_value(v) for v in r) for r in rows[1:]])


def _json_value(v):
    if isinstance(v, (str, bool, int)) or v is None:
        return v
    v = float(v)
    return v if math.isfinite(v) else None


def write_json(table: Table, path) -> Path:
    path = Path(path)
    doc = {"meta": {k: _json_value(v) if not isinstance(v, (dict, list, tuple)) else v
                    for k, v in table.meta.items()},
           "columns": list(table.columns),
           "rows": [[_json_value(v) for v in r] for r in table.sorted_rows()]}
    path.write_text(json.dumps(doc, indent=1, sort_keys=True, default=_json_value) + "\n",
                    encoding="utf-8")
    return path


def read_json(path) -> Table:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return Table(Path(path).stem, tuple(doc["columns"]), [tuple(r) for r in doc["rows"]], doc["meta"])


# ---------------------------------------------------------------------------
# SVG

def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * step:
        out.append(round(v, 12))
        v += step
    return out


def _marker(shape, x, y, colour, r=2.2):
    attrs = f'class="point" fill="{colour}"'
    if shape == "circle":
        return f'<circle {attrs} cx="{x:.2f}" cy="{y:.2f}" r="{r}"/>'
    if shape == "square":
        return f'<rect {attrs} x="{x - r:.2f}" y="{y - r:.2f}" width="{2 * r}" height="{2 * r}"/>'
    if shape == "triangle":
        return (f'<polygon {attrs} points="{x:.2f},{y - r:.2f} {x - r:.2f},{y + r:.2f} '
                f'{x + r:.2f},{y + r:.2f}"/>')
    if shape == "diamond":
        return (f'<polygon {attrs} points="{x:.2f},{y - r:.2f} {x + r:.2f},{y:.2f} '
                f'{x:.2f},{y + r:.2f} {x - r:.2f},{y:.2f}"/>')
    return (f'<path {attrs} stroke="{colour}" d="M{x - r:.2f},{y - r:.2f}L{x + r:.2f},{y + r:.2f}'
            f'M{x - r:.2f},{y + r:.2f}L{x + r:.2f},{y - r:.2f}"/>')


def svg_text(table: Table, x=None, y=None, group=None, lines=True, width=640, height=480) -> str:
    """Scatter plot with one marker per row; rows sharing ``group`` are joined by a polyline."""
    if table.plot and x is None:
        x, y, *rest = table.plot
        group = rest[0] if rest and group is None else group
    if x is None or y is None:
        raise ValueError(f"table {table.name!r} has no plot columns")
    rows = table.sorted_rows()
    xi, yi = table.columns.index(x), table.columns.index(y)
    gi = table.columns.index(group) if group else None
    pts = []
    for r in rows:
        try:
            px, py = float(r[xi]), float(r[yi])
        except (TypeError, ValueError):
            px = py = math.nan
        pts.append((px, py, r[gi] if gi is not None else ""))
    finite = [(a, b) for a, b, _ in pts if math.isfinite(a) and math.isfinite(b)]
    if finite:
        xs, ys = zip(*finite)
        x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    else:
        x0 = y0 = 0.0
        x1 = y1 = 1.0
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    ml, mr, mt, mb = 70, 20, 30, 50
    W, H = width - ml - mr, height - mt - mb

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * W

    def sy(v):
        return mt + H - (v - y0) / (y1 - y0) * H

    groups = sorted({g for _, _, g in pts}, key=lambda g: _row_key((g,)))
    style = {g: (_MARKERS[k % len(_MARKERS)], _COLOURS[k % len(_COLOURS)]) for k, g in enumerate(groups)}
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<title>{table.name}</title>',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<g class="axes" stroke="black" fill="none">'
           f'<line x1="{ml}" y1="{mt + H}" x2="{ml + W}" y2="{mt + H}"/>'
           f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + H}"/></g>']
    out.append('<g class="ticks" font-family="sans-serif" font-size="10">')
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{sx(t):.2f}" y1="{mt + H}" x2="{sx(t):.2f}" y2="{mt + H + 4}" stroke="black"/>'
                   f'<text x="{sx(t):.2f}" y="{mt + H + 16}" text-anchor="middle">{t:g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{ml - 4}" y1="{sy(t):.2f}" x2="{ml}" y2="{sy(t):.2f}" stroke="black"/>'
                   f'<text x="{ml - 6}" y="{sy(t) + 3:.2f}" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{ml + W / 2}" y="{height - 10}" text-anchor="middle">{x}</text>')
    out.append(f'<text x="14" y="{mt + H / 2}" text-anchor="middle" '
               f'transform="rotate(-90 14 {mt + H / 2})">{y}</text></g>')
    if lines and gi is not None:
        for g in groups:
            seg = [(a, b) for a, b, gg in pts if gg == g and math.isfinite(a) and math.isfinite(b)]
            if len(seg) > 1:
                d = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in seg)
                out.append(f'<polyline class="curve" fill="none" stroke="{style[g][1]}" '
                           f'stroke-width="0.8" points="{d}"/>')
    out.append('<g class="points">')
    for a, b, g in pts:
        if not (math.isfinite(a) and math.isfinite(b)):
            # keep one marker per row; non-finite rows sit off-canvas
            out.append('<circle class="point" cx="-10" cy="-10" r="0"/>')
            continue
        shape, colour = style[g]
        out.append(_marker(shape, sx(a), sy(b), colour))
    out.append("</g>")
    if gi is not None and len(groups) <= 12:
        out.append('<g class="legend" font-family="sans-serif" font-size="10">')
        for k, g in enumerate(groups):
            shape, colour = style[g]
            out.append(_marker(shape, ml + W - 80, mt + 10 + 14 * k, colour).replace('class="point"',
                                                                                      'class="key"'))
            out.append(f'<text x="{ml + W - 72}" y="{mt + 13 + 14 * k}">{group}={g}</text>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(table: Table, path, **kw) -> Path:
    path = Path(path)
    path.write_text(svg_text(table, **kw), encoding="utf-8")
    return path


def count_svg_points(path) -> int:
    return Path(path).read_text(encoding="utf-8").count('class="point"')


def gnuplot_text(table: Table, csv_name, x=None, y=None, group=None) -> str:
    if table.plot and x is None:
        x, y, *rest = table.plot
        group = rest[0] if rest and group is None else group
    xi, yi = table.columns.index(x) + 1, table.columns.index(y) + 1
    lines = ["set datafile separator ','",
             f"set xlabel '{x}'",
             f"set ylabel '{y}'",
             "set key outside",
             f"set title '{table.name}'"]
    if group:
        gi = table.columns.index(group) + 1
        groups = sorted({r[gi - 1] for r in table.rows}, key=lambda g: _row_key((g,)))
        parts = [f"'{csv_name}' every ::1 using {xi}:(strcol({gi}) eq '{format_value(g)}' ? ${yi} : 1/0) "
                 f"with points title '{group}={g}'" for g in groups]
        lines.append("plot " + ", \\\n     ".join(parts))
    else:
        lines.append(f"plot '{csv_name}' every ::1 using {xi}:{yi} with points notitle")
    return "\n".join(lines) + "\n"


def emit(table: Table, out_dir, formats=("csv",), stem=None) -> list:
    """Write ``table`` in each requested format; returns the written paths.

    SVG and gnuplot outputs are skipped for tables without plot hints.
    """
    if not table.rows:
        raise ValueError(f"table {table.name!r} is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = stem or table.name
    written = []
    for fmt in formats:
        if fmt not in FORMATS:
            raise ValueError(f"unknown format {fmt!r}")
        if fmt in ("svg", "gnuplot") and not table.plot:
            continue
        if fmt == "csv":
            written.append(write_csv(table, out_dir / f"{stem}.csv"))
        elif fmt == "json":
            written.append(write_json(table, out_dir / f"{stem}.json"))
        elif fmt == "svg":
            written.append(write_svg(table, out_dir / f"{stem}.svg"))
        else:
            csv_path = out_dir / f"{stem}.csv"
            if not csv_path.exists():
                written.append(write_csv(table, csv_path))
            p = out_dir / f"{stem}.gp"
            p.write_text(gnuplot_text(table, csv_path.name), encoding="utf-8")
            written.append(p)
    return written
