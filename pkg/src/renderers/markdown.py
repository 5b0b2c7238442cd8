"""
Markdown renderer - Generates a Markdown summary of a convergence study.
"""

from typing import Optional
from pathlib import Path
import logging

from jinja2 import Environment, FileSystemLoader, TemplateError

from ..orchestration.state import ConvergenceReport


logger = logging.getLogger(__name__)

TEMPLATE_NAME = "study_report.md.j2"


def _fmt(value: Optional[float], spec: str = ".3e") -> str:
    return "" if value is None else format(value, spec)


class MarkdownRenderer:
    """
    Renders study reports as Markdown using Jinja2 templates.
    """

    def __init__(self, template_dir: Optional[Path] = None):
        """
        Initialize the markdown renderer.

        Args:
            template_dir: Path to template directory
        """
        if template_dir is None:
            template_dir = Path(__file__).parent.parent.parent / "config" / "templates"

        self.template_dir = Path(template_dir)

        # Setup Jinja2 environment
        self.env = Environment(
            loader=FileSystemLoader(str(self.template_dir)),
            autoescape=False,
            trim_blocks=True,
            lstrip_blocks=True
        )
        self.env.filters["fmt"] = _fmt

        logger.debug(f"MarkdownRenderer initialized with templates from {template_dir}")

    def render(self, report: ConvergenceReport, output_path: Optional[Path] = None) -> str:
        """
        Render a report to Markdown.

        Args:
            report: Study report
            output_path: Optional path to save the output

        Returns:
            Rendered markdown content
        """
        try:
            template = self.env.get_template(TEMPLATE_NAME)
            content = template.render(report=report)
        except TemplateError as e:
            logger.warning(f"Template {TEMPLATE_NAME} unusable ({e}); using the plain layout")
            content = self._render_simple(report)

        if output_path:
            output_path = Path(output_path)
            output_path.parent.mkdir(parents=True, exist_ok=True)
            output_path.write_text(content, encoding="utf-8")
            logger.info(f"Markdown summary saved to {output_path}")

        return content

    def _render_simple(self, report: ConvergenceReport) -> str:
        """Plain layout used when no template is available."""
        lines = [
            f"# Convergence study: {report.study}",
            "",
            f"Reference level {report.reference_level} (h = {report.reference_h:.4g})",
            "",
        ]
        if report.sosc_verified is False:
            lines += [
                "> **Unverified:** the second-order check failed at the reference, "
                "so the control rates below are not validated.",
                "",
            ]
        elif report.sosc_verified:
            lines += ["Second-order condition verified at the reference.", ""]
        lines += [
            "| level | h | " + " | ".join(report.quantities) + " |",
            "|---|---|" + "---|" * len(report.quantities),
        ]
        for record in report.levels:
            cells = [_fmt(record.errors.get(q)) for q in report.quantities]
            lines.append(f"| {record.level} | {record.h:.4g} | " + " | ".join(cells) + " |")
        rates_note = " (unverified)" if report.sosc_verified is False else ""
        lines += ["", f"Rates{rates_note}:", "", "| quantity | rate | r2 | log-corrected rate |", "|---|---|---|---|"]
        for q in report.quantities:
            rate = report.rates.get(q)
            corrected = report.log_corrected_rates.get(q)
            lines.append(
                f"| {q} | {_fmt(rate and rate.slope, '.3f')} | {_fmt(rate and rate.r2, '.4f')} "
                f"| {_fmt(corrected and corrected.slope, '.3f')} |"
            )
        if report.sosc is not None:
            verdict = "positive" if report.sosc.get("verdict") else "negative"
            lines += ["", f"Second-order check at the reference: {verdict} (lambda_min = {report.sosc.get('lambda_min')})"]
        return "\n".join(lines) + "\n"
