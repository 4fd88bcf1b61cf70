"""Output formatters for metrics tables, coverage reports and run manifests."""

import csv
import io
import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List

try:
    from reportlab.lib import colors
    from reportlab.lib.pagesizes import landscape, letter
    from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
    from reportlab.lib.units import inch
    from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

    REPORTLAB_AVAILABLE = True
except ImportError:
    REPORTLAB_AVAILABLE = False

from crowd_safety_navigator import __version__
from crowd_safety_navigator.config import RunManifest
from crowd_safety_navigator.metrics.bench import METRIC_NAMES, MetricsTable
from crowd_safety_navigator.uncertainty.dtaci import CoverageTrace

METRIC_COLUMNS = ["variant", *METRIC_NAMES, *[f"std_{name}" for name in METRIC_NAMES], "episodes"]
COVERAGE_COLUMNS = ["horizon", "coverage", "samples"]
ACI_ERROR_COLUMNS = ["step", "human", "horizon", "error"]

# Rendered as "n/a" in tables; None in JSON, empty cell in CSV.
UNDEFINED = "n/a"


def _cell(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def _percent(value: float | None) -> str:
    return UNDEFINED if value is None else f"{100.0 * value:.2f}"


def _number(value: float | None) -> str:
    return UNDEFINED if value is None else f"{value:.2f}"


class OutputFormatter:
    """Formats evaluation and calibration results into multiple output formats."""

    @staticmethod
    def metrics_rows(tables: Dict[str, MetricsTable]) -> List[Dict[str, Any]]:
        """One row per variant with metric means, their spreads and the episode count.

        Args:
            tables: MetricsTable per variant name

        Returns:
            Rows keyed by METRIC_COLUMNS
        """
        rows = []
        for variant, table in tables.items():
            row: Dict[str, Any] = {"variant": variant}
            for name in METRIC_NAMES:
                row[name] = table.value(name)
            for name in METRIC_NAMES:
                row[f"std_{name}"] = table.std.get(name)
            row["episodes"] = table.episodes
            rows.append(row)
        return rows

    @staticmethod
    def to_csv(tables: Dict[str, MetricsTable]) -> str:
        """Convert metrics tables to CSV, one row per variant: means, then spreads, then episodes."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(METRIC_COLUMNS)
        for row in OutputFormatter.metrics_rows(tables):
            writer.writerow(
                [row["variant"]]
                + [_cell(row[column]) for column in METRIC_COLUMNS[1:-1]]
                + [row["episodes"]]
            )
        return buffer.getvalue()

    @staticmethod
    def to_json(tables: Dict[str, MetricsTable]) -> str:
        """Convert metrics tables to JSON format.

        Returns:
            Pretty-printed JSON string
        """
        return json.dumps(OutputFormatter.metrics_rows(tables), indent=2, ensure_ascii=False)

    @staticmethod
    def to_pdf(tables: Dict[str, MetricsTable], title: str = "Crowd Navigation Evaluation") -> bytes:
        """Convert metrics tables to a one-page PDF report.

        Args:
            tables: MetricsTable per variant name
            title: Report title

        Returns:
            PDF file as bytes

        Raises:
            ImportError: If reportlab is not installed
        """
        if not REPORTLAB_AVAILABLE:
            raise ImportError("reportlab is required for PDF output. Install with: pip install reportlab")

        buffer = io.BytesIO()
        doc = SimpleDocTemplate(buffer, pagesize=landscape(letter), topMargin=0.75 * inch, bottomMargin=0.75 * inch)
        story = []
        styles = getSampleStyleSheet()

        title_style = ParagraphStyle(
            "ReportTitle",
            parent=styles["Heading1"],
            fontSize=20,
            textColor=colors.HexColor("#1a1a1a"),
            spaceAfter=20,
            alignment=1,
        )
        story.append(Paragraph(title, title_style))
        story.append(Spacer(1, 0.2 * inch))

        header = ["Variant", "SR (%)", "CR (%)", "TR (%)", "NT (s)", "PL (m)", "ITR (%)", "SD (m)", "Episodes"]
        data = [header]
        for variant, table in tables.items():
            data.append(
                [
                    variant,
                    f"{_percent(table.SR)} ± {_percent(table.std.get('SR'))}",
                    f"{_percent(table.CR)} ± {_percent(table.std.get('CR'))}",
                    f"{_percent(table.TR)} ± {_percent(table.std.get('TR'))}",
                    f"{_number(table.NT)} ± {_number(table.std.get('NT'))}",
                    f"{_number(table.PL)} ± {_number(table.std.get('PL'))}",
                    f"{_percent(table.ITR)} ± {_percent(table.std.get('ITR'))}",
                    f"{_number(table.SD)} ± {_number(table.std.get('SD'))}",
                    str(table.episodes),
                ]
            )

        summary_table = Table(data)
        summary_table.setStyle(
            TableStyle(
                [
                    ("BACKGROUND", (0, 0), (-1, 0), colors.HexColor("#34495e")),
                    ("TEXTCOLOR", (0, 0), (-1, 0), colors.whitesmoke),
                    ("FONTNAME", (0, 0), (-1, 0), "Helvetica-Bold"),
                    ("FONTSIZE", (0, 0), (-1, -1), 9),
                    ("BOTTOMPADDING", (0, 0), (-1, 0), 10),
                    ("BACKGROUND", (0, 1), (-1, -1), colors.HexColor("#ecf0f1")),
                    ("GRID", (0, 0), (-1, -1), 1, colors.grey),
                    ("VALIGN", (0, 0), (-1, -1), "MIDDLE"),
                ]
            )
        )
        story.append(summary_table)

        story.append(Spacer(1, 0.3 * inch))
        timestamp = datetime.now().strftime("%Y-%m-%d %H:%M:%S")
        footer_style = ParagraphStyle(
            "Footer", parent=styles["Normal"], fontSize=8, textColor=colors.grey, alignment=1
        )
        story.append(Paragraph(f"Generated by Crowd Safety Navigator v{__version__} on {timestamp}", footer_style))

        doc.build(story)
        buffer.seek(0)
        return buffer.getvalue()

    @staticmethod
    def save_to_file(tables: Dict[str, MetricsTable], format: str, output_path: Path | str) -> None:
        """Save metrics tables to file in specified format.

        Args:
            tables: MetricsTable per variant name
            format: Output format ('csv', 'json', 'pdf')
            output_path: Path to output file
        """
        output_path = Path(output_path)

        formatter = OutputFormatter()
        if format == "csv":
            output_path.parent.mkdir(parents=True, exist_ok=True)
            output_path.write_text(formatter.to_csv(tables), encoding="utf-8")
        elif format == "json":
            output_path.parent.mkdir(parents=True, exist_ok=True)
            output_path.write_text(formatter.to_json(tables), encoding="utf-8")
        elif format == "pdf":
            pdf_content = formatter.to_pdf(tables)
            output_path.parent.mkdir(parents=True, exist_ok=True)
            output_path.write_bytes(pdf_content)
        else:
            raise ValueError(f"Unsupported format: {format}. Supported: csv, json, pdf")

    @staticmethod
    def coverage_to_csv(report: Dict[int, float], samples: Dict[int, int]) -> str:
        """Per-horizon coverage as ``horizon,coverage,samples``."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(COVERAGE_COLUMNS)
        for k in sorted(report):
            writer.writerow([k, repr(report[k]), samples.get(k, 0)])
        return buffer.getvalue()

    @staticmethod
    def aci_errors_to_csv(traces: List[CoverageTrace]) -> str:
        """Signed (radius minus realized error) series, one row per (step, human, horizon).

        Rows of several traces are concatenated in trace order.
        """
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(ACI_ERROR_COLUMNS)
        for trace in traces:
            for step, human, k, error in trace.aci_errors:
                writer.writerow([step, human, k, repr(error)])
        return buffer.getvalue()

    @staticmethod
    def write_manifest(manifest: RunManifest, out_dir: Path | str) -> Path:
        """Write ``manifest.json``; an output directory holds exactly one."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "manifest.json"
        path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
        return path
