"""
Command line interface of the delta stability analyzer
"""
import functools
import logging
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import click
from pydantic import ValidationError
from rich.console import Console

from src.cli.report import (
    deepening_report,
    exit_code,
    lyapunov_report,
    render,
    solver_report,
    stability_report,
)
from src.core.config import settings
from src.core.errors import StabilityError
from src.core.results import RunReport, StabilityKind
from src.hybrid.automaton import HybridAutomaton, build_automaton
from src.hybrid.library import bouncing_ball
from src.hybrid.reach import HybridTrajectories, check_hybrid_stability, query_reach
from src.logic.formula import TRUE, classify
from src.logic.parser import ParsedDocument, parse_document, parse_formula, parse_sentence, parse_term
from src.numerics.interval import Box
from src.numerics.ode import OdeSystem
from src.solver.engine import SolverConfig, decide
from src.solver.trace import TraceWriter
from src.stability.checks import check_stability
from src.stability.encoders import ENCODERS, StabilityParams, trajectories_of
from src.stability.lyapunov import lyapunov_test
from src.workflows.deepening import (
    deepen_asymptotic,
    deepen_asymptotic_in_large,
    deepen_lyapunov,
)

logger = logging.getLogger(__name__)

console = Console()
error_console = Console(stderr=True)

BUILTIN_AUTOMATA: Dict[str, Callable[[], HybridAutomaton]] = {
    "bouncingball": bouncing_ball,
}

KINDS = click.Choice([k.value for k in StabilityKind])


class CliState:
    """Options of the command group shared by every sub-command"""

    def __init__(self, workers: Optional[int], deterministic: Optional[bool], trace: Optional[str], as_json: bool):
        self.workers = workers
        self.deterministic = deterministic
        self.trace_path = trace
        self.as_json = as_json

    def config(self, delta: Optional[float] = None, precision: Optional[int] = None) -> SolverConfig:
        overrides: Dict[str, Any] = {}
        if delta is not None:
            overrides["delta"] = delta
        if precision is not None:
            overrides["precision"] = precision
        if self.workers is not None:
            overrides["workers"] = self.workers
        if self.deterministic is not None:
            overrides["deterministic"] = self.deterministic
        return SolverConfig(**overrides)

    def trace(self) -> Optional[TraceWriter]:
        return TraceWriter(self.trace_path) if self.trace_path else None

    def emit(self, report: RunReport) -> None:
        render(report, console, self.as_json)
        raise click.exceptions.Exit(exit_code(report))


def handle_errors(command: Callable) -> Callable:
    """Map analyzer errors to exit codes: 2 for usage and input errors, 3 for internal ones"""

    @functools.wraps(command)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return command(*args, **kwargs)
        except StabilityError as e:
            if e.exit_code == 2:
                logger.error(f"{type(e).__name__}: {e}")
            else:
                logger.error(f"{type(e).__name__}: {e}", exc_info=True)
            error_console.print(f"error: {e}", markup=False, highlight=False)
            raise click.exceptions.Exit(e.exit_code)
        except ValidationError as e:
            logger.error(f"Invalid parameters: {e}")
            error_console.print(f"error: {e}", markup=False, highlight=False)
            raise click.exceptions.Exit(2)
        except (click.exceptions.Exit, click.ClickException):
            raise
        except Exception as e:
            logger.error(f"Internal error: {e}", exc_info=True)
            error_console.print(f"internal error: {e}", markup=False, highlight=False)
            raise click.exceptions.Exit(3)

    return wrapper


def stability_options(command: Callable) -> Callable:
    """Bounds of the stability encodings; omitted values come from settings"""
    options = [
        click.option("--kind", type=KINDS, default=StabilityKind.LYAPUNOV.value, show_default=True),
        click.option("--delta", type=float, help="Perturbation bound"),
        click.option("--eps-min", type=float),
        click.option("--eps-max", type=float),
        click.option("--delta-floor", type=float),
        click.option("--time-bound", type=float, help="Horizon T of the Lyapunov conjunct"),
        click.option("--conv-time", type=float, help="Horizon T' of the convergence conjunct"),
        click.option("--conv-radius", type=float, help="Radius d of the convergence neighborhood"),
        click.option("--exclusion", type=float, help="Exclusion radius r around the origin"),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def _params(**values: Optional[float]) -> StabilityParams:
    names = {
        "delta": "delta",
        "eps_min": "eps_min",
        "eps_max": "eps_max",
        "delta_floor": "delta_floor",
        "time_bound": "time_bound",
        "conv_time": "conv_time",
        "conv_radius": "conv_radius",
        "exclusion": "exclusion_radius",
    }
    given = {names[k]: v for k, v in values.items() if k in names and v is not None}
    return StabilityParams(**given)


def _read(path: str) -> ParsedDocument:
    return parse_document(Path(path).read_text(encoding="utf-8"))


def _pick(table: Dict[str, Any], name: Optional[str], what: str) -> Any:
    if name is not None:
        if name not in table:
            raise click.UsageError(f"no {what} named {name!r}; found {sorted(table)}")
        return table[name]
    if len(table) != 1:
        raise click.UsageError(f"expected exactly one {what}, found {len(table)}; choose one by name")
    return next(iter(table.values()))


def _automaton(target: str, name: Optional[str]) -> HybridAutomaton:
    if target in BUILTIN_AUTOMATA:
        return BUILTIN_AUTOMATA[target]()
    doc = _read(target)
    if not doc.automata and doc.systems:
        # a plain system is a one-mode automaton without jumps
        system = _pick(doc.systems, name, "system")
        return build_automaton(system.name, system.bounds, {"run": system}, inits={"run": TRUE})
    return _pick(doc.automata, name, "automaton")


@click.group()
@click.option("--log-level", type=str, default=None, help="Overrides STABILITY_LOG_LEVEL")
@click.option("--workers", type=click.IntRange(min=1), default=None)
@click.option("--deterministic/--nondeterministic", default=None)
@click.option("--trace", type=click.Path(dir_okay=False), default=None, help="Write solver trace records to FILE")
@click.option("--json", "as_json", is_flag=True, help="Print the report block as JSON")
@click.version_option(settings.app_version, prog_name=settings.app_name)
@click.pass_context
def cli(
    ctx: click.Context,
    log_level: Optional[str],
    workers: Optional[int],
    deterministic: Optional[bool],
    trace: Optional[str],
    as_json: bool,
) -> None:
    """Delta-complete stability analysis of continuous and hybrid systems."""
    level = (log_level or settings.log_level).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    ctx.obj = CliState(workers, deterministic, trace, as_json)


@cli.command("decide")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--delta", type=float, default=None, help="Perturbation bound")
@click.option("--precision", type=int, default=None, help="Working precision of transcendental kernels in bits")
@click.pass_obj
@handle_errors
def decide_command(state: CliState, file: str, delta: Optional[float], precision: Optional[int]) -> None:
    """Decide the bounded sentence in FILE up to delta."""
    phi = parse_sentence(Path(file).read_text(encoding="utf-8"))
    config = state.config(delta, precision)
    verdict = decide(phi, config, state.trace())
    state.emit(solver_report(verdict, config.delta, classify(phi), precision=config.precision))


@cli.command("check-stability")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--system", "system_name", default=None, help="System to check when FILE has several")
@stability_options
@click.pass_obj
@handle_errors
def check_stability_command(state: CliState, file: str, system_name: Optional[str], kind: str, **values: Any) -> None:
    """Check delta-stability of the system declared in FILE."""
    system: OdeSystem = _pick(_read(file).systems, system_name, "system")
    params = _params(**values)
    verdict = check_stability(system, StabilityKind(kind), params, state.config(), state.trace())
    state.emit(stability_report(verdict, params.delta, {"system": system.name, **params.echo(StabilityKind(kind))}))


@cli.command("lyap")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--template", required=True, help="Template V over parameters and state, e.g. 'p*x^2'")
@click.option(
    "--param", "param_box", type=(str, float, float), multiple=True, required=True, help="Parameter range NAME LO HI"
)
@click.option("--state", "state_box", type=(str, float, float), multiple=True, help="State range NAME LO HI; system bounds by default")
@click.option("--system", "system_name", default=None)
@click.option("--exclusion", type=float, default=None, help="Exclusion radius r around the origin")
@click.option("--strict", is_flag=True, help="Require strict decrease")
@click.option("--delta", type=float, default=None)
@click.pass_obj
@handle_errors
def lyap_command(
    state: CliState,
    file: str,
    template: str,
    param_box: Tuple[Tuple[str, float, float], ...],
    state_box: Tuple[Tuple[str, float, float], ...],
    system_name: Optional[str],
    exclusion: Optional[float],
    strict: bool,
    delta: Optional[float],
) -> None:
    """Run the delta-complete Lyapunov template test on the system in FILE."""
    system: OdeSystem = _pick(_read(file).systems, system_name, "system")
    V = parse_term(template)
    D = Box.from_bounds({name: (lo, hi) for name, lo, hi in param_box})
    X = Box.from_bounds({name: (lo, hi) for name, lo, hi in state_box}) if state_box else system.bounds
    r = settings.exclusion_radius if exclusion is None else exclusion
    delta = settings.delta if delta is None else delta
    verdict = lyapunov_test(system, V, D, X, r, strict=strict, delta=delta, config=state.config(), trace=state.trace())
    parameters = {"system": system.name, "template": str(V), "exclusion_radius": r, "strict": strict}
    state.emit(lyapunov_report(verdict, delta, parameters))


@cli.command("hybrid")
@click.argument("target")
@click.option("--automaton", "automaton_name", default=None, help="Automaton to check when TARGET has several")
@click.option("--k-steps", type=click.IntRange(min=0), default=None, help="Jump bound k")
@click.option("--goal", default=None, help="Reachability goal over the state variables instead of a stability check")
@stability_options
@click.pass_obj
@handle_errors
def hybrid_command(
    state: CliState,
    target: str,
    automaton_name: Optional[str],
    k_steps: Optional[int],
    goal: Optional[str],
    kind: str,
    **values: Any,
) -> None:
    """Check a hybrid automaton from FILE, or the built-in `bouncingball`."""
    h = _automaton(target, automaton_name)
    k = settings.k_steps if k_steps is None else k_steps
    params = _params(**values)
    if goal is not None:
        reached = query_reach(h, k, parse_formula(goal), params.time_bound, state.config(params.delta), state.trace())
        state.emit(solver_report(reached, params.delta, automaton=h.name, k_steps=k, goal=goal, time_bound=params.time_bound))
        return
    verdict = check_hybrid_stability(h, StabilityKind(kind), k, params, state.config(), state.trace())
    parameters = {"automaton": h.name, "k_steps": k, **params.echo(StabilityKind(kind))}
    state.emit(stability_report(verdict, params.delta, parameters))


def _schedule(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise click.BadParameter(f"schedule must be comma-separated numbers: {text}") from e


@cli.command("deepen")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--schedule", required=True, help="Increasing time bounds, e.g. 1,2,4,8")
@click.option("--radius-schedule", default=None, help="Increasing convergence radii (asymptotic only)")
@click.option("--budget", type=click.IntRange(min=0), default=None, help="Maximum number of bounded checks")
@click.option("--time-limit", type=float, default=None, help="Wall-time limit in seconds")
@click.option("--system", "system_name", default=None)
@stability_options
@click.pass_obj
@handle_errors
def deepen_command(
    state: CliState,
    file: str,
    schedule: str,
    radius_schedule: Optional[str],
    budget: Optional[int],
    time_limit: Optional[float],
    system_name: Optional[str],
    kind: str,
    **values: Any,
) -> None:
    """Iterative deepening over growing time bounds for the system in FILE."""
    system: OdeSystem = _pick(_read(file).systems, system_name, "system")
    params = _params(**values)
    times = _schedule(schedule)
    common: Dict[str, Any] = dict(params=params, budget=budget, time_limit=time_limit, config=state.config(), trace=state.trace())
    kind_ = StabilityKind(kind)
    if kind_ == StabilityKind.LYAPUNOV:
        result = deepen_lyapunov(system, times, **common)
    elif kind_ == StabilityKind.ASYMPTOTIC:
        radii = _schedule(radius_schedule) if radius_schedule else [params.conv_radius]
        result = deepen_asymptotic(system, radii, times, **common)
    else:
        result = deepen_asymptotic_in_large(system, times, **common)
    parameters = {"system": system.name, "kind": kind_.value, "schedule": schedule}
    state.emit(deepening_report(result, params.delta, parameters))


@cli.command("classify")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--kind", type=KINDS, default=None, help="Classify the stability encoding of the system in FILE")
@click.option("--system", "system_name", default=None)
@click.option("--k-steps", type=click.IntRange(min=0), default=None, help="Classify the encoding of an automaton unrolled k times")
@click.pass_obj
@handle_errors
def classify_command(state: CliState, file: str, kind: Optional[str], system_name: Optional[str], k_steps: Optional[int]) -> None:
    """Print the quantifier-prefix class of a sentence or of a stability encoding."""
    doc = _read(file)
    params = StabilityParams()
    if kind is None:
        phi = _pick({str(i): s for i, s in enumerate(doc.sentences)}, None, "sentence")
        name = "sentence"
    elif k_steps is not None:
        h = _pick(doc.automata, system_name, "automaton")
        phi = ENCODERS[StabilityKind(kind)](HybridTrajectories(h, k_steps), params)
        name = h.name
    else:
        system = _pick(doc.systems, system_name, "system")
        phi = ENCODERS[StabilityKind(kind)](trajectories_of(system, params), params)
        name = system.name
    complexity = classify(phi)
    report = RunReport(
        verdict=complexity.label,
        delta=params.delta,
        parameters={"target": name, "alternations": complexity.alternations, "signature": complexity.signature, "oracle_class": complexity.oracle_class},
        complexity=complexity.label,
        version=settings.app_version,
    )
    render(report, console, state.as_json)


def main() -> None:
    cli(prog_name="delta-stability")


if __name__ == "__main__":
    main()
