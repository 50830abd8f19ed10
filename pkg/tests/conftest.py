import json
from pathlib import Path

import pytest

from symvi import harness

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

_verdicts = {}
_results = {}


class Verdicts:
    """Collects one PASS/FAIL line per acceptance criterion."""

    def record(self, number, passed, detail):
        _verdicts[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def verdicts():
    return Verdicts()


def run_config(name):
    """Run a shipped config once per session and cache the result."""
    if name not in _results:
        _results[name] = harness.run(harness.ExperimentConfig.load(CONFIGS / f"{name}.json"))
    return _results[name]


def emitted_bytes(result, out_dir):
    """All emitted files as bytes, with the wall-clock field dropped from result.json."""
    harness.emit(result, out_dir, "csv")
    out = {}
    for path in sorted(Path(out_dir).iterdir()):
        data = path.read_bytes()
        if path.name == "result.json":
            raw = json.loads(data)
            raw.pop(harness.WALL_CLOCK_KEY)
            data = json.dumps(raw, indent=2).encode()
        out[path.name] = data
    return out


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_verdicts):
        passed, detail = _verdicts[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
