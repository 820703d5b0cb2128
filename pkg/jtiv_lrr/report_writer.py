"""Result tables: CSV and JSON files, run metadata, optional Excel workbook."""

from __future__ import annotations

import csv
import io
import json
import math
import zipfile
from datetime import datetime
from pathlib import Path
from typing import NamedTuple

from openpyxl import Workbook
from openpyxl.chart import BarChart, Reference, ScatterChart
from openpyxl.chart.marker import Marker
from openpyxl.chart.series_factory import SeriesFactory
from openpyxl.chart.shapes import GraphicalProperties
from openpyxl.drawing.line import LineProperties
from openpyxl.formatting.rule import CellIsRule
from openpyxl.styles import Font, PatternFill
from openpyxl.utils import get_column_letter
from openpyxl.xml.functions import tostring

from .config import RunConfig, config_hash


# workbook metadata and archive entry times, fixed so equal tables give equal bytes
WORKBOOK_TIMESTAMP = datetime(2000, 1, 1)


class ChartSpec(NamedTuple):
    kind: str  # "bar" or "scatter"
    sheet: str
    title: str
    x_col: str
    y_cols: tuple
    x_title: str = ""
    y_title: str = ""


def write_csv(path, fieldnames, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=list(fieldnames), extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
    return path


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2)
    return path


def write_run_meta(out_dir, config: RunConfig, extra: dict | None = None) -> Path:
    """run.json: the merged config, its hash, and result facts (status, files)."""
    meta = config.as_dict()
    meta["run_hash"] = config_hash(config.as_dict())
    if extra:
        meta.update(extra)
    return write_json(Path(out_dir) / "run.json", meta)


def set_basic_column_widths(ws, widths):
    for col, w in widths.items():
        ws.column_dimensions[col].width = w


def _style_axis(axis):
    # Excel hides tick labels on axes it considers unused.
    axis.delete = False
    axis.tickLblPos = "nextTo"
    axis.majorTickMark = "out"
    axis.minorTickMark = "none"


def _cell_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _add_chart(wb, spec: ChartSpec, anchor: str):
    ws = wb[spec.sheet]
    header = [c.value for c in ws[1]]
    try:
        x_idx = header.index(spec.x_col) + 1
        y_idx = [header.index(c) + 1 for c in spec.y_cols]
    except ValueError as exc:
        raise ValueError(f"chart {spec.title!r}: column not found in sheet {spec.sheet!r}") from exc
    last = ws.max_row
    if last < 2:
        return None

    if spec.kind == "bar":
        ch = BarChart()
        ch.type = "col"
        for col in y_idx:
            ch.add_data(Reference(ws, min_col=col, min_row=1, max_row=last), titles_from_data=True)
        ch.set_categories(Reference(ws, min_col=x_idx, min_row=2, max_row=last))
    elif spec.kind == "scatter":
        ch = ScatterChart()
        ch.style = 13
        xvalues = Reference(ws, min_col=x_idx, min_row=2, max_row=last)
        for col in y_idx:
            yvalues = Reference(ws, min_col=col, min_row=2, max_row=last)
            s = SeriesFactory(yvalues, xvalues=xvalues, title=None, title_from_data=False)
            s.marker = Marker(symbol="circle")
            s.graphicalProperties = GraphicalProperties(ln=LineProperties(noFill=True))
            ch.series.append(s)
    else:
        raise ValueError(f"unknown chart kind {spec.kind!r}")

    ch.title = spec.title
    ch.x_axis.title = spec.x_title or spec.x_col
    ch.y_axis.title = spec.y_title
    _style_axis(ch.x_axis)
    _style_axis(ch.y_axis)
    ch.height = 8
    ch.width = 16
    wb["Charts"].add_chart(ch, anchor)
    return ch


def write_xlsx(path, sheets: dict, charts=(), highlight: dict | None = None) -> Path:
    """One data sheet per table plus a Charts sheet.

    ``sheets`` maps sheet name -> (fieldnames, rows). ``highlight`` maps a
    column name to a threshold; cells above it are filled red.
    """
    wb = Workbook()
    wb.remove(wb.active)
    bold = Font(bold=True)
    red_fill = PatternFill(start_color="FFC7CE", end_color="FFC7CE", fill_type="solid")

    for name, (fieldnames, rows) in sheets.items():
        ws = wb.create_sheet(name)
        ws.append(list(fieldnames))
        for c in ws[1]:
            c.font = bold
        for r in rows:
            ws.append([_cell_value(r.get(k)) for k in fieldnames])
        ws.freeze_panes = "A2"
        set_basic_column_widths(ws, {get_column_letter(i + 1): max(10, len(str(k)) + 2) for i, k in enumerate(fieldnames)})
        for col_name, threshold in (highlight or {}).items():
            if col_name in fieldnames and ws.max_row > 1:
                letter = get_column_letter(list(fieldnames).index(col_name) + 1)
                ws.conditional_formatting.add(
                    f"{letter}2:{letter}{ws.max_row}",
                    CellIsRule(operator="greaterThan", formula=[str(float(threshold))], fill=red_fill),
                )

    wb.create_sheet("Charts", 0)
    for i, spec in enumerate(charts):
        _add_chart(wb, spec, f"A{1 + 18 * i}")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _save_reproducible(wb, path)
    return path


def _save_reproducible(wb: Workbook, path: Path):
    buf = io.BytesIO()
    wb.save(buf)
    # save() stamps the modified time; rewrite core.xml afterwards
    wb.properties.created = WORKBOOK_TIMESTAMP
    wb.properties.modified = WORKBOOK_TIMESTAMP
    core = tostring(wb.properties.to_tree())
    stamp = WORKBOOK_TIMESTAMP.timetuple()[:6]
    with zipfile.ZipFile(buf) as src, zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as dst:
        for item in src.infolist():
            data = core if item.filename == "docProps/core.xml" else src.read(item.filename)
            info = zipfile.ZipInfo(item.filename, date_time=stamp)
            info.compress_type = zipfile.ZIP_DEFLATED
            dst.writestr(info, data)
