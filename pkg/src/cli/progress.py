"""
Rich UI components for console summaries.
"""

import sys
from typing import Any, Dict, Optional

from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from ..orchestration.state import ConvergenceReport


def _fmt(value: Optional[float], spec: str = ".3e") -> str:
    return "-" if value is None else format(value, spec)


class ProgressUI:
    """
    Rich UI components for result summaries.
    """

    def __init__(self, use_rich: bool = True, console: Optional[Console] = None):
        """
        Initialize the progress UI.

        Args:
            use_rich: Whether to use Rich formatting
            console: Console to print to (a new stdout console by default)
        """
        self.use_rich = use_rich
        self.console = console or (Console() if use_rich else None)
        self.err_console = Console(stderr=True) if use_rich else None

    def show_banner(self, command: str):
        """Display a one-line banner for the subcommand."""
        if not self.use_rich:
            print(f"=== dirac-ocp {command} ===")
            return
        self.console.print(Panel(f"dirac-ocp [bold]{command}[/bold]", style="bold blue", expand=False))

    def show_config_summary(self, config_info: Dict[str, Any]):
        """
        Display configuration summary.

        Args:
            config_info: Configuration information
        """
        if not self.use_rich:
            print("Configuration:")
            for key, value in config_info.items():
                print(f"  {key}: {value}")
            print()
            return

        table = Table(title="Configuration", show_header=True)
        table.add_column("Setting", style="cyan")
        table.add_column("Value", style="green")

        for key, value in config_info.items():
            table.add_row(key, str(value))

        self.console.print(table)

    def show_state_summary(self, level: int, h: float, report: Dict[str, Any], max_value: float):
        """Newton outcome of a single state solve."""
        rows = {
            "Level": level,
            "h": f"{h:.4g}",
            "Newton iterations": report["iterations"],
            "Damping steps": report["damping_steps"],
            "Final residual": _fmt(report["residual"]),
            "max |y_h|": _fmt(max_value),
        }
        if not self.use_rich:
            for key, value in rows.items():
                print(f"  {key}: {value}")
            return
        self._key_value_table("State solve", rows)

    def show_ocp_summary(self, level: int, solution: Dict[str, Any], sosc: Optional[Dict[str, Any]] = None):
        """Optimizer outcome with the per-point KKT information."""
        diagnostics = solution["diagnostics"]
        if not self.use_rich:
            print(f"Level {level}: j = {solution['objective']:.6e}, iterations = {solution['iterations']}, "
                  f"projection residual = {diagnostics['projection_residual']:.2e}")
            for index, (u, psi, tag) in enumerate(
                zip(solution["control"], diagnostics["psi"], diagnostics["active_set"])
            ):
                print(f"  z{index}: u = {u:.8g}, psi = {psi:.3e}, {tag}")
            if sosc is not None:
                print(f"SOSC: {'positive' if sosc['verdict'] else 'negative'} (lambda_min = {sosc['lambda_min']})")
            return

        table = Table(title=f"Optimal control at level {level}", show_header=True)
        table.add_column("Point", style="cyan")
        table.add_column("u", justify="right")
        table.add_column("psi", justify="right")
        table.add_column("Active", style="magenta")
        for index, (u, psi, tag) in enumerate(
            zip(solution["control"], diagnostics["psi"], diagnostics["active_set"])
        ):
            table.add_row(f"z{index}", f"{u:.8g}", _fmt(psi), tag)
        self.console.print(table)
        self.console.print(
            f"j = [bold]{solution['objective']:.6e}[/bold], iterations = {solution['iterations']}, "
            f"projection residual = {diagnostics['projection_residual']:.2e}"
        )
        if sosc is not None:
            style = "green" if sosc["verdict"] else "red"
            verdict = "positive" if sosc["verdict"] else "negative"
            self.console.print(
                f"SOSC: [{style}]{verdict}[/{style}] on {len(sosc['critical_set'])} critical point(s), "
                f"lambda_min = {sosc['lambda_min']}"
            )

    def show_study_report(self, report: ConvergenceReport):
        """Per-level errors followed by fitted rates."""
        unverified = report.sosc_verified is False
        if not self.use_rich:
            print(f"Study {report.study} (reference level {report.reference_level})")
            for record in report.levels:
                cells = "  ".join(f"{q}={_fmt(record.errors.get(q))}" for q in report.quantities)
                print(f"  level {record.level}  h={record.h:.4g}  {cells}")
            for q in report.quantities:
                rate = report.rates.get(q)
                print(f"  rate {q}: {_fmt(rate and rate.slope, '.3f')}")
            if unverified:
                print("  rates unverified: second-order check failed at the reference")
            return

        table = Table(title=f"Study: {report.study}", show_header=True)
        table.add_column("Level", style="cyan", justify="right")
        table.add_column("h", justify="right")
        for q in report.quantities:
            table.add_column(q, justify="right")
        for record in report.levels:
            table.add_row(
                str(record.level), f"{record.h:.4g}", *[_fmt(record.errors.get(q)) for q in report.quantities]
            )
        self.console.print(table)

        title = "Fitted rates (unverified: second-order check failed)" if unverified else "Fitted rates"
        rates = Table(title=title, show_header=True)
        rates.add_column("Quantity", style="cyan")
        rates.add_column("Rate", justify="right")
        rates.add_column("r2", justify="right")
        rates.add_column("Log-corrected", justify="right")
        rates.add_column("Monotone", justify="center")
        for q in report.quantities:
            rate = report.rates.get(q)
            corrected = report.log_corrected_rates.get(q)
            rates.add_row(
                q,
                _fmt(rate and rate.slope, ".3f"),
                _fmt(rate and rate.r2, ".4f"),
                _fmt(corrected and corrected.slope, ".3f"),
                "yes" if report.monotone.get(q) else "no",
            )
        self.console.print(rates)

    def _key_value_table(self, title: str, rows: Dict[str, Any]):
        table = Table(title=title, show_header=False)
        table.add_column("Key", style="cyan")
        table.add_column("Value", style="green")
        for key, value in rows.items():
            table.add_row(key, str(value))
        self.console.print(table)

    def show_outputs(self, paths: Dict[str, Any]):
        for kind, path in paths.items():
            if self.use_rich:
                self.console.print(f"[bold cyan]{kind}:[/bold cyan] {path}")
            else:
                print(f"{kind}: {path}")

    def show_error(self, message: str):
        """
        Display an error message.

        Args:
            message: Error message
        """
        if not self.use_rich:
            print(f"ERROR: {message}", file=sys.stderr)
            return

        self.err_console.print(f"\n[bold red][X] Error:[/bold red] {message}")

    def show_warning(self, message: str):
        """
        Display a warning message.

        Args:
            message: Warning message
        """
        if not self.use_rich:
            print(f"WARNING: {message}", file=sys.stderr)
            return

        self.err_console.print(f"[bold yellow][!] Warning:[/bold yellow] {message}")
