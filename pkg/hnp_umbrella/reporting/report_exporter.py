"""
Report Exporter
Writes versioned JSON reports and draws per-rep error charts
"""

import json
import logging
import math
import os
from pathlib import Path
from typing import Dict, Any, List, Optional

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

from ..utilities.config import OUTPUT_CONFIG, REPORT_CONFIG, REPORT_SCHEMA_VERSION
from ..utilities.errors import ReportIOError

logger = logging.getLogger(__name__)


def to_jsonable(value: Any) -> Any:
    """
    Convert report content into plain JSON types.

    Objects with to_dict() are expanded, numpy scalars and arrays become Python numbers
    and lists, and non-finite floats become the strings "inf", "-inf" and "nan".
    """
    if hasattr(value, "to_dict"):
        return to_jsonable(value.to_dict())
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    return value


def _float_text(value: float, allow_nan: bool) -> str:
    """17 significant digits; integral values keep a trailing .0 so they reload as floats."""
    if math.isfinite(value):
        text = format(value, ".17g")
        return text if ("." in text or "e" in text) else text + ".0"
    if not allow_nan:
        raise ValueError(f"Out of range float values are not JSON compliant: {value!r}")
    return "NaN" if math.isnan(value) else ("Infinity" if value > 0 else "-Infinity")


class FullPrecisionEncoder(json.JSONEncoder):
    """JSON encoder writing every float with 17 significant digits."""

    def iterencode(self, o, _one_shot=False):
        encoder = json.encoder.encode_basestring_ascii if self.ensure_ascii else json.encoder.encode_basestring
        iterencode = json.encoder._make_iterencode(
            {} if self.check_circular else None, self.default, encoder, self.indent,
            lambda value: _float_text(value, self.allow_nan), self.key_separator, self.item_separator,
            self.sort_keys, self.skipkeys, _one_shot)
        return iterencode(o, 0)


def emit_report(report_type: str, payload: Any, path: str) -> Dict[str, Any]:
    """
    Write a JSON report with a schema version and a fixed key order.

    Floats are written with 17 significant digits, so a reload gives back the
    exact values. No timestamps are recorded; equal inputs give byte-identical files.

    Args:
        report_type: simulate, fit, evaluate, sweep, featurize or predict
        payload: Dict or object with to_dict()
        path: Output file

    Returns:
        The document written
    """
    document = {"schema_version": REPORT_SCHEMA_VERSION, "report_type": report_type}
    document.update(to_jsonable(payload))
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(document, f, indent=REPORT_CONFIG["indent"], allow_nan=False, cls=FullPrecisionEncoder)
            f.write("\n")
    except OSError as e:
        raise ReportIOError(f"Could not write report: {e}", path=path)
    logger.info(f"{report_type} report saved to: {path}")
    return document


def load_report(path: str) -> Dict[str, Any]:
    """Read a report written by emit_report."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except FileNotFoundError:
        raise ReportIOError(f"Report not found: {path}", path=path)
    except (OSError, json.JSONDecodeError) as e:
        raise ReportIOError(f"Could not read report: {e}", path=path)
    if "schema_version" not in document:
        raise ReportIOError("Not a versioned report (schema_version missing)", path=path)
    return document


class ReportExporter:
    """Plot-ready tables and box plots of per-rep errors."""

    def __init__(self, charts_dir: Optional[str] = None):
        self.charts_dir = charts_dir or OUTPUT_CONFIG["charts_dir"]
        self.dpi = REPORT_CONFIG["chart_dpi"]

    def summary_table(self, document: Dict[str, Any]) -> pd.DataFrame:
        """
        Long table (group, rep, error, value) from a simulate or sweep report.

        For simulate reports the group is the method name, for sweep reports "rank k".
        """
        rows = []
        if "ranks" in document:
            for rank in document["ranks"]:
                for rep, errors in enumerate(rank["per_rep"]):
                    rows.extend(self._rows(f"rank {rank['rank']}", rep, errors))
        else:
            for record in document.get("per_rep", []):
                if record.get("excluded"):
                    continue
                for method, errors in record["errors"].items():
                    rows.extend(self._rows(method, record["rep"], errors))
        return pd.DataFrame(rows, columns=["group", "rep", "error", "value"])

    @staticmethod
    def _rows(group: str, rep: int, errors: Dict[str, Any]) -> List[Dict[str, Any]]:
        return [{"group": group, "rep": rep, "error": name, "value": value}
                for name, value in errors.items() if isinstance(value, (int, float))]

    def create_error_charts(self, document: Dict[str, Any], prefix: str = "errors") -> List[str]:
        """
        One box plot per error, groups side by side, with the alpha line on controlled errors.

        Returns:
            Paths of the written PNG files
        """
        table = self.summary_table(document)
        if table.empty:
            logger.warning("No per-rep errors to chart")
            return []
        os.makedirs(self.charts_dir, exist_ok=True)

        config = document.get("config", {})
        alphas = config.get("spec", {}).get("alphas", [])
        controlled = {"error1": 0, "error23": 1}
        controlled.update({f"under_{i + 1}": i for i in range(len(alphas))})

        plt.style.use("default")
        sns.set_palette("husl")
        paths = []
        for error in table["error"].unique():
            subset = table[table["error"] == error]
            fig, ax = plt.subplots(figsize=(8, 5))
            sns.boxplot(data=subset, x="group", y="value", ax=ax)
            if error in controlled and controlled[error] < len(alphas):
                ax.axhline(alphas[controlled[error]], color="red", linestyle="--", label="alpha")
                ax.legend()
            ax.set_title(f"Approximate {error} over reps", fontsize=14, fontweight="bold")
            ax.set_xlabel("")
            ax.set_ylabel(error)
            ax.grid(True, alpha=0.3)
            plt.tight_layout()
            path = os.path.join(self.charts_dir, f"{prefix}_{error}.png")
            plt.savefig(path, dpi=self.dpi, bbox_inches="tight")
            plt.close(fig)
            paths.append(path)
        logger.info(f"{len(paths)} charts saved to: {self.charts_dir}")
        return paths
