import os
import sys

import pytest

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "fixtures")


@pytest.fixture(scope="session")
def fixtures_dir() -> str:
    return os.path.abspath(FIXTURES)


@pytest.fixture()
def run_cli(tmp_path, capsys):
    """Invoke the CLI main() in-process and return (exit_code, stdout, stderr)."""
    from logitgraph.cli import main

    def run(*argv: str):
        code = main(list(argv))
        captured = capsys.readouterr()
        return code, captured.out, captured.err

    return run
