"""
Human-Readable Report Formatter
Renders JSON reports as plain-text summaries for the terminal
"""

from typing import Dict, Any, List

REPORT_WIDTH = 72


class ReportFormatter:
    """
    Formats simulate, sweep, fit, evaluate and featurize reports.
    """

    def __init__(self, width: int = REPORT_WIDTH):
        self.report_width = width
        self.section_separator = "=" * self.report_width
        self.subsection_separator = "-" * self.report_width

    def format_summary(self, document: Dict[str, Any]) -> str:
        """
        Format a report document.

        Args:
            document: Report as written by emit_report

        Returns:
            Formatted report as string
        """
        report_type = document.get("report_type", "report")
        lines = self._format_header(report_type)
        formatter = {
            "simulate": self._format_simulation,
            "sweep": self._format_sweep,
            "fit": self._format_fit,
            "evaluate": self._format_errors,
            "featurize": self._format_featurize,
        }.get(report_type)
        if formatter:
            lines.extend(formatter(document))
        lines.append(self.section_separator)
        return "\n".join(lines)

    def _format_header(self, report_type: str) -> List[str]:
        return [
            self.section_separator,
            f"H-NP {report_type.upper()} REPORT",
            self.section_separator,
        ]

    @staticmethod
    def _number(value: Any) -> str:
        return f"{value:.4f}" if isinstance(value, (int, float)) else str(value)

    def _format_simulation(self, document: Dict[str, Any]) -> List[str]:
        config = document.get("config", {})
        lines = [
            f"Setting:  {config.get('setting', {}).get('id')}",
            f"Base:     {config.get('base')}",
            f"Reps:     {document.get('reps_used')} used of {document.get('reps_requested')} "
            f"(seed {document.get('master_seed')})",
            "",
        ]
        for method, summary in document.get("summary", {}).items():
            lines.extend([f"{method}", self.subsection_separator])
            lines.append(f"{'error':<16} {'mean':>10} {'quantile':>10} {'violation':>10}")
            for error, mean in summary.get("means", {}).items():
                quantile = summary.get("quantiles", {}).get(error, "")
                violation = summary.get("violation_rates", {}).get(error, "")
                lines.append(f"{error:<16} {self._number(mean):>10} {self._number(quantile):>10} "
                             f"{self._number(violation):>10}")
            lines.append("")
        for warning in document.get("warnings", []):
            lines.append(f"WARNING: {warning}")
        return lines

    def _format_sweep(self, document: Dict[str, Any]) -> List[str]:
        lines = [f"{'rank':<6} {'reps':>6} {'R1* q':>10} {'R2* q':>10} {'mean Rc':>10}", self.subsection_separator]
        for rank in document.get("ranks", []):
            summary = rank["summary"]
            quantiles = list(summary.get("quantiles", {}).values())
            lines.append(
                f"{rank['rank']:<6} {rank['reps']:>6} "
                + " ".join(f"{self._number(q):>10}" for q in (quantiles + ["", ""])[:2])
                + f" {self._number(summary['means'].get('remaining_risk')):>10}")
        for note in document.get("notes", []):
            lines.append(f"NOTE: {note}")
        return lines

    def _format_fit(self, document: Dict[str, Any]) -> List[str]:
        classifier = document.get("classifier", {})
        diagnostics = classifier.get("diagnostics") or {}
        lines = [
            f"Base classifier: {classifier.get('model', {}).get('kind')}",
            f"Thresholds:      {[self._number(t) for t in classifier.get('thresholds', [])]}",
        ]
        if diagnostics:
            lines.extend([
                f"Upper bounds:    {[self._number(t) for t in diagnostics.get('upper_bounds', [])]}",
                f"Branches:        {diagnostics.get('branches')}",
                f"Empirical R~c:   {self._number(diagnostics.get('remaining_risk'))}",
                f"Grid points:     {diagnostics.get('grid_points')}",
            ])
        for warning in classifier.get("model", {}).get("warnings", []):
            lines.append(f"WARNING: {warning}")
        return lines

    def _format_errors(self, document: Dict[str, Any]) -> List[str]:
        errors = document.get("errors", {})
        return [f"{name:<16} {self._number(value)}" for name, value in errors.items()
                if isinstance(value, (int, float))]

    def _format_featurize(self, document: Dict[str, Any]) -> List[str]:
        return [
            f"Method:    {document.get('method')}",
            f"Patients:  {document.get('patients')}",
            f"Dimension: {document.get('dimension')}",
        ] + [f"WARNING: {w}" for w in document.get("warnings", [])]


def format_summary(document: Dict[str, Any]) -> str:
    return ReportFormatter().format_summary(document)
