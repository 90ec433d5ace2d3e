import json
from pathlib import Path

import pytest
from hypothesis import settings

HERE = Path(__file__).parent
DESK = HERE / "desk.toml"

settings.register_profile("default", max_examples=150, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def oracles():
    return json.loads((HERE / "fixtures" / "oracles.json").read_text())


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in mod.LINES:
            terminalreporter.write_line(line)
