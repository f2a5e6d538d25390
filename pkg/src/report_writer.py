"""
Report Writer Module for the CosDefense simulator

This module writes run and sweep results:
- Per-round trace CSV (fixed column order)
- Run summary and manifest as sorted-key JSON
- Sweep summary as CSV and as a formatted Excel workbook
- Layer-similarity curves as CSV
"""

import json
import logging
import math
import os
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd
from openpyxl import Workbook
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side
from openpyxl.utils import get_column_letter

from . import config
from .metrics import RoundRecord, records_to_frame
from .utils import log_analysis_step

logger = logging.getLogger(__name__)


def _jsonable(value):
    """Convert numpy scalars and NaN to plain JSON values."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        items = sorted(value) if isinstance(value, (set, frozenset)) else value
        return [_jsonable(v) for v in items]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and (math.isnan(value) or math.isinf(value)):
        return None
    return value


def write_json(data: Dict, path: str) -> str:
    """
    Write a dictionary as deterministic JSON (sorted keys, NaN as null).

    Returns:
        The path written
    """
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(_jsonable(data), handle, sort_keys=True, indent=2)
        handle.write("\n")
    return path


def read_json(path: str) -> Dict:
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def write_round_csv(records: Sequence[RoundRecord], path: str) -> str:
    """
    Write the per-round trace.

    Columns: round, test_accuracy, mean_abs_cos_all,
    mean_abs_cos_benign_truth, mean_abs_cos_malicious_truth, n_filtered,
    filtered_ids (semicolon-joined), attack_active (0/1). Undefined means
    are left empty.

    Returns:
        The path written
    """
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    frame = records_to_frame(records)
    frame.to_csv(path, index=False, lineterminator="\n")
    log_analysis_step("ReportWriter", f"Wrote {len(frame)} rounds to {path}")
    return path


def write_similarity_csv(curves: pd.DataFrame, path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    curves.to_csv(path, index=False, lineterminator="\n")
    log_analysis_step("ReportWriter", f"Wrote layer similarity curves to {path}")
    return path


class SweepWorkbook:
    """
    Excel workbook for sweep summaries.

    Styling:
        - Header: Bold, white text on dark blue (#366092), frozen row
        - Accuracy columns formatted as percentages
        - Thin borders around all cells
    """

    def __init__(self, output_path: str) -> None:
        """
        Args:
            output_path: Path where the workbook will be saved
        """
        self.wb = Workbook()
        self.output_path = output_path
        self.wb.remove(self.wb.active)

    def _create_header_style(self) -> Dict:
        border = Side(style="thin")
        return {
            "font": Font(name="Calibri", size=12, bold=True, color="FFFFFF"),
            "fill": PatternFill(start_color="366092", end_color="366092", fill_type="solid"),
            "border": Border(left=border, right=border, top=border, bottom=border),
            "alignment": Alignment(horizontal="center", vertical="center"),
        }

    def _apply_cell_style(
        self,
        cell,
        font: Optional[Font] = None,
        fill: Optional[PatternFill] = None,
        border: Optional[Border] = None,
        alignment: Optional[Alignment] = None,
        number_format: Optional[str] = None,
    ) -> None:
        if font is not None:
            cell.font = font
        if fill is not None:
            cell.fill = fill
        if border is not None:
            cell.border = border
        if alignment is not None:
            cell.alignment = alignment
        if number_format is not None:
            cell.number_format = number_format

    def _set_column_widths(self, worksheet, widths: Dict[str, float]) -> None:
        for letter, width in widths.items():
            worksheet.column_dimensions[letter].width = width

    def create_sweep_sheet(self, summary: pd.DataFrame, sheet_name: str = config.SWEEP_SHEET) -> None:
        """
        Write the sweep table with header styling and number formats.

        Args:
            summary: One row per (axis value, defense) cell
            sheet_name: Worksheet name
        """
        log_analysis_step("ReportWriter", f"Creating sheet {sheet_name}")
        ws = self.wb.create_sheet(sheet_name)
        header_style = self._create_header_style()

        ws.append(list(summary.columns))
        for col_idx in range(1, len(summary.columns) + 1):
            self._apply_cell_style(ws.cell(row=1, column=col_idx), **header_style)

        for row in summary.itertuples(index=False):
            ws.append([_jsonable(v) for v in row])

        for row_idx in range(2, len(summary) + 2):
            for col_idx, column in enumerate(summary.columns, start=1):
                number_format = config.NUMBER_FORMATS["accuracy"] if "accuracy" in column else None
                self._apply_cell_style(
                    ws.cell(row=row_idx, column=col_idx),
                    border=header_style["border"],
                    number_format=number_format,
                )

        widths = {
            get_column_letter(col_idx): config.COLUMN_WIDTHS.get(column, 12)
            for col_idx, column in enumerate(summary.columns, start=1)
        }
        self._set_column_widths(ws, widths)
        ws.freeze_panes = "A2"

    def add_metadata_sheet(self, metadata: Dict) -> None:
        """
        Key/value sheet describing the sweep (base config, version).
        """
        ws = self.wb.create_sheet("Metadata")
        header_style = self._create_header_style()
        ws.append(["Key", "Value"])
        for col_idx in (1, 2):
            self._apply_cell_style(ws.cell(row=1, column=col_idx), **header_style)
        for key, value in sorted(metadata.items()):
            value = _jsonable(value)
            if isinstance(value, (dict, list)):
                value = json.dumps(value, sort_keys=True)
            ws.append([key, value])
        self._set_column_widths(ws, {"A": 25, "B": 60})

    def save(self) -> None:
        try:
            os.makedirs(os.path.dirname(self.output_path) or ".", exist_ok=True)
            self.wb.save(self.output_path)
            log_analysis_step("ReportWriter", f"Saved workbook to {self.output_path}")
        except OSError as e:
            logger.error(f"Failed to save workbook to {self.output_path}: {str(e)}")
            raise


def write_sweep_outputs(summary: pd.DataFrame, out_dir: str, metadata: Optional[Dict] = None) -> Dict[str, str]:
    """
    Write the sweep summary as CSV and Excel.

    Returns:
        {'csv': path, 'xlsx': path}
    """
    csv_path = os.path.join(out_dir, config.SWEEP_CSV)
    xlsx_path = os.path.join(out_dir, config.SWEEP_XLSX)
    os.makedirs(out_dir, exist_ok=True)
    summary.to_csv(csv_path, index=False, lineterminator="\n")

    workbook = SweepWorkbook(xlsx_path)
    workbook.create_sweep_sheet(summary)
    workbook.add_metadata_sheet({**config.METADATA, **(metadata or {})})
    workbook.save()
    return {"csv": csv_path, "xlsx": xlsx_path}
