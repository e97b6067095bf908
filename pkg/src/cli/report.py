"""
Rendering of run reports: one verdict line followed by a key-value block
"""
from typing import Any, Dict, Optional

import click
from rich.console import Console
from rich.table import Table
from rich.text import Text

from src.core.config import settings
from src.core.results import (
    ComplexityReport,
    DeepeningOutcome,
    DeepeningResult,
    LyapunovOutcome,
    LyapunovVerdict,
    RunReport,
    SolverOutcome,
    SolverStats,
    SolverVerdict,
    StabilityOutcome,
    StabilityVerdict,
)

# verdicts on the "holds" side exit with 0, the refuting side with 1
_FAILING = {
    SolverOutcome.EXACT_FALSE.value,
    StabilityOutcome.DELTA_UNSTABLE.value,
    LyapunovOutcome.DELTA_FAIL.value,
    DeepeningOutcome.DELTA_UNSTABLE_AT.value,
}


def _statistics(stats: SolverStats) -> Dict[str, Any]:
    return {
        "boxes_explored": stats.boxes_explored,
        "max_depth": stats.max_depth,
        "wall_time": round(stats.wall_time, 6),
    }


def _label(complexity: Optional[ComplexityReport]) -> Optional[str]:
    return complexity.label if complexity is not None else None


def solver_report(verdict: SolverVerdict, delta: float, complexity: Optional[ComplexityReport] = None, **parameters: Any) -> RunReport:
    return RunReport(
        verdict=verdict.outcome.value,
        delta=delta,
        parameters=parameters,
        complexity=_label(complexity),
        witness=verdict.witness,
        statistics=_statistics(verdict.stats),
        version=settings.app_version,
    )


def stability_report(verdict: StabilityVerdict, delta: float, parameters: Dict[str, Any]) -> RunReport:
    return RunReport(
        verdict=verdict.outcome.value,
        delta=delta,
        parameters={"kind": verdict.kind.value, **parameters},
        complexity=_label(verdict.complexity),
        witness=verdict.witness,
        statistics=_statistics(verdict.stats),
        version=settings.app_version,
    )


def lyapunov_report(verdict: LyapunovVerdict, delta: float, parameters: Dict[str, Any]) -> RunReport:
    return RunReport(
        verdict=verdict.outcome.value,
        delta=delta,
        parameters=parameters,
        complexity=_label(verdict.complexity),
        witness=verdict.witness,
        statistics=_statistics(verdict.stats),
        version=settings.app_version,
    )


def _entry_text(parameters: Dict[str, float]) -> str:
    return ", ".join(f"{name}={value:g}" for name, value in parameters.items())


def deepening_report(result: DeepeningResult, delta: float, parameters: Dict[str, Any]) -> RunReport:
    """One entry line per executed schedule step"""
    verdict = result.outcome.value
    if result.outcome != DeepeningOutcome.EXHAUSTED:
        verdict = f"{verdict} {_entry_text(result.parameters)}"
    entries = [f"{_entry_text(step.parameters)}: {step.verdict}" for step in result.steps]
    return RunReport(
        verdict=verdict,
        delta=delta,
        parameters=parameters,
        witness=result.witness,
        statistics={
            "checks": len(result.steps),
            "wall_time": round(sum(step.wall_time for step in result.steps), 6),
        },
        entries=entries,
        version=settings.app_version,
    )


def exit_code(report: RunReport) -> int:
    return 1 if report.verdict.split(" ")[0] in _FAILING else 0


def _format(value: Any) -> str:
    if isinstance(value, (list, tuple)) and len(value) == 2 and all(isinstance(v, (int, float)) for v in value):
        return f"[{value[0]:.6g}, {value[1]:.6g}]"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def render(report: RunReport, console: Optional[Console] = None, as_json: bool = False) -> None:
    """Print the report, as a rich key-value block or as JSON"""
    if as_json:
        click.echo(report.model_dump_json(indent=2))
        return
    console = console or Console()
    console.print(Text(report.verdict, style="bold"))

    table = Table(show_header=False, box=None, pad_edge=False)
    table.add_column("key", style="cyan", no_wrap=True)
    table.add_column("value")
    table.add_row("delta", Text(_format(report.delta)))
    if report.complexity is not None:
        table.add_row("complexity", Text(report.complexity))
    for name, value in report.parameters.items():
        table.add_row(name, Text(_format(value)))
    for name, value in report.witness.items():
        table.add_row(f"witness.{name}", Text(_format(value)))
    for name, value in report.statistics.items():
        table.add_row(f"stats.{name}", Text(_format(value)))
    for i, entry in enumerate(report.entries, 1):
        table.add_row(f"step.{i}", Text(entry))
    table.add_row("version", Text(report.version))
    console.print(table)
