"""
Unit tests for the command line interface
"""
import json

import pytest
from click.testing import CliRunner

from src.cli.main import cli
from src.core.results import SolverOutcome, SolverVerdict, StabilityKind, StabilityOutcome, StabilityVerdict
from src.solver import engine
from src.solver.trace import read_trace


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def run(runner, fixtures_dir):
    """Invoke the CLI with fixture names expanded to paths"""

    def invoke(*args: str):
        expanded = [str(fixtures_dir / a) if a.endswith(".stab") else a for a in args]
        return runner.invoke(cli, expanded)

    return invoke


def report(result) -> dict:
    return json.loads(result.stdout)


class TestDecideCommand:
    """decide FILE"""

    def test_delta_true_exits_zero(self, run):
        """A delta-true sentence exits with 0"""
        result = run("decide", "unit_square.stab", "--delta", "0.01")
        assert result.exit_code == 0
        assert "delta-true" in result.stdout

    def test_false_exits_one(self, run):
        """A false sentence exits with 1"""
        result = run("decide", "sqrt_two.stab", "--delta", "0.5")
        assert result.exit_code == 1
        assert result.stdout.splitlines()[0] == "false"

    def test_json_report(self, run):
        """--json prints the report block as JSON"""
        result = run("--json", "decide", "unit_square.stab", "--delta", "0.01")
        data = report(result)
        assert data["verdict"] == "delta-true"
        assert data["delta"] == 0.01
        assert data["complexity"] == "Pi1"
        assert data["version"] == "1.0.0"
        assert data["statistics"]["boxes_explored"] >= 1

    def test_malformed_input_exits_two(self, run):
        """Syntax errors are input errors"""
        result = run("decide", "malformed.stab")
        assert result.exit_code == 2

    def test_unbounded_quantifier_exits_two(self, run):
        """Unbounded quantifiers are input errors"""
        result = run("decide", "unbounded.stab")
        assert result.exit_code == 2

    def test_nonpositive_delta_exits_two(self, run):
        """An invalid solver configuration is a usage error"""
        result = run("decide", "unit_square.stab", "--delta", "0")
        assert result.exit_code == 2

    def test_precision_reaches_the_solver(self, run, mocker):
        """--precision sets the working precision of the decide run and is echoed"""
        spy = mocker.spy(engine, "working_precision")
        result = run("--json", "decide", "unit_square.stab", "--delta", "0.01", "--precision", "120")
        assert result.exit_code == 0
        assert spy.call_args.args == (120,)
        assert report(result)["parameters"]["precision"] == 120

    def test_precision_too_low_exits_two(self, run):
        """Fewer than 24 bits is a usage error"""
        result = run("decide", "unit_square.stab", "--precision", "8")
        assert result.exit_code == 2

    def test_trace_file(self, run, tmp_path):
        """--trace writes one record per visited piece"""
        path = tmp_path / "trace.jsonl"
        result = run("--trace", str(path), "decide", "unit_square.stab", "--delta", "0.01")
        assert result.exit_code == 0
        assert read_trace(path)

    def test_version(self, runner):
        """--version prints the package version"""
        result = runner.invoke(cli, ["--version"])
        assert result.exit_code == 0
        assert "1.0.0" in result.stdout


class TestStabilityCommands:
    """check-stability, lyap and hybrid"""

    def test_check_stability_report(self, run, mocker):
        """The verdict, kind and echoed parameters are reported"""
        mocker.patch(
            "src.cli.main.check_stability",
            return_value=StabilityVerdict(
                outcome=StabilityOutcome.DELTA_UNSTABLE, kind=StabilityKind.LYAPUNOV, witness={"eps": (0.5, 0.6)}
            ),
        )
        result = run("--json", "check-stability", "growth.stab", "--time-bound", "2")
        assert result.exit_code == 1
        data = report(result)
        assert data["verdict"] == "delta-unstable"
        assert data["parameters"]["kind"] == "lyapunov"
        assert data["parameters"]["system"] == "growth"
        assert data["parameters"]["time_bound"] == 2.0
        assert data["witness"]["eps"] == [0.5, 0.6]

    def test_check_stability_passes_parameters(self, run, mocker):
        """Command-line bounds reach the stability parameters"""
        check = mocker.patch(
            "src.cli.main.check_stability",
            return_value=StabilityVerdict(outcome=StabilityOutcome.STABLE, kind=StabilityKind.ASYMPTOTIC),
        )
        result = run("check-stability", "decay.stab", "--kind", "asymptotic", "--conv-radius", "0.25")
        assert result.exit_code == 0
        system, kind, params = check.call_args.args[:3]
        assert system.name == "decay"
        assert kind == StabilityKind.ASYMPTOTIC
        assert params.conv_radius == 0.25

    def test_invalid_parameters_exit_two(self, run):
        """eps_min below delta is a parameter error"""
        result = run("check-stability", "decay.stab", "--eps-min", "0.001")
        assert result.exit_code == 2

    def test_unknown_system_name(self, run):
        """Naming a system the file lacks is a usage error"""
        result = run("check-stability", "decay.stab", "--system", "other")
        assert result.exit_code == 2

    def test_lyapunov_success(self, run):
        """p x^2 certifies x' = -x^3"""
        result = run(
            "lyap", "cubic.stab", "--template", "p*x^2", "--param", "p", "0.5", "1", "--exclusion", "0.1"
        )
        assert result.exit_code == 0
        assert result.stdout.splitlines()[0] == "success"

    def test_lyapunov_failure(self, run):
        """p x^2 cannot certify x' = x"""
        result = run(
            "lyap",
            "growth.stab",
            "--template",
            "p*x^2",
            "--param",
            "p",
            "0.5",
            "1",
            "--state",
            "x",
            "-1",
            "1",
            "--exclusion",
            "0.1",
        )
        assert result.exit_code == 1
        assert result.stdout.splitlines()[0] == "delta-fail"

    def test_hybrid_reachability(self, runner, mocker):
        """--goal runs a reachability query on the built-in ball"""
        reach = mocker.patch("src.cli.main.query_reach", return_value=SolverVerdict(outcome=SolverOutcome.EXACT_FALSE))
        result = runner.invoke(cli, ["--json", "hybrid", "bouncingball", "--k-steps", "1", "--goal", "x > 12"])
        assert result.exit_code == 1
        data = report(result)
        assert data["verdict"] == "false"
        assert data["parameters"]["automaton"] == "bouncingball"
        assert reach.call_args.args[1] == 1

    def test_hybrid_stability_of_a_plain_system(self, run, mocker):
        """A file with only a system is checked as a one-mode automaton"""
        check = mocker.patch(
            "src.cli.main.check_hybrid_stability",
            return_value=StabilityVerdict(outcome=StabilityOutcome.STABLE, kind=StabilityKind.LYAPUNOV),
        )
        result = run("hybrid", "decay.stab", "--k-steps", "0")
        assert result.exit_code == 0
        h = check.call_args.args[0]
        assert h.modes == ("run",)


class TestDeepenCommand:
    """deepen FILE --schedule"""

    def test_unstable_at_entry(self, run, mocker):
        """The first unstable entry is reported with exit code 1"""
        mocker.patch(
            "src.workflows.deepening.check_stability",
            side_effect=[
                StabilityVerdict(outcome=StabilityOutcome.STABLE, kind=StabilityKind.LYAPUNOV),
                StabilityVerdict(outcome=StabilityOutcome.DELTA_UNSTABLE, kind=StabilityKind.LYAPUNOV),
            ],
        )
        result = run("--json", "deepen", "growth.stab", "--schedule", "1,2,4")
        assert result.exit_code == 1
        data = report(result)
        assert data["verdict"] == "delta-unstable-at time_bound=2"
        assert data["entries"] == ["time_bound=1: stable", "time_bound=2: delta-unstable"]
        assert data["statistics"]["checks"] == 2

    def test_exhausted_exits_zero(self, run, mocker):
        """Exhausting the schedule is not a failure"""
        mocker.patch(
            "src.workflows.deepening.check_stability",
            return_value=StabilityVerdict(outcome=StabilityOutcome.STABLE, kind=StabilityKind.LYAPUNOV),
        )
        result = run("deepen", "decay.stab", "--schedule", "1,2")
        assert result.exit_code == 0
        assert result.stdout.splitlines()[0] == "exhausted"

    def test_bad_schedule(self, run):
        """Schedules are comma-separated numbers"""
        result = run("deepen", "decay.stab", "--schedule", "1,a")
        assert result.exit_code == 2

    def test_decreasing_schedule(self, run):
        """Schedules must increase"""
        result = run("deepen", "decay.stab", "--schedule", "4,2")
        assert result.exit_code == 2


class TestClassifyCommand:
    """classify FILE"""

    def test_sentence(self, run):
        """forall-exists is Pi2"""
        result = run("--json", "classify", "nested.stab")
        assert result.exit_code == 0
        assert report(result)["verdict"] == "Pi2"

    def test_stability_encodings(self, run):
        """The three encodings classify as Pi3, Sigma4 and Pi3"""
        labels = [
            report(run("--json", "classify", "decay.stab", "--kind", kind))["verdict"]
            for kind in ("lyapunov", "asymptotic", "asymptotic_in_large")
        ]
        assert labels == ["Pi3", "Sigma4", "Pi3"]

    def test_hybrid_encoding(self, run):
        """Negated invariant conjuncts add an existential block to the Lyapunov prefix"""
        data = report(run("--json", "classify", "ball.stab", "--kind", "lyapunov", "--k-steps", "1"))
        assert data["verdict"] == "Pi4"
        assert data["parameters"]["signature"] == "ode"
