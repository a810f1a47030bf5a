from __future__ import annotations

from pathlib import Path

import pytest

from dam.bytecode import compile
from dam.syntax import parse_program

PROGRAMS = Path(__file__).resolve().parent.parent / "src" / "dam" / "programs"

CODE_EXAMPLE = "(fn x. x) (fn x. fn y. x)"

Z = "let z = fn f. (fn x. f (fn v. x x v)) (fn x. f (fn v. x x v)) in "
FACT_BODY = "(fn self. fn n. if0 n then 1 else n * self (n - 1))"
FACTORIAL_LOCAL = Z + f"let fact = z {FACT_BODY} in fact 5"
FACTORIAL_AT_B = Z + f"let fact = z ({FACT_BODY} @ B) in fact 5"


# filled by test_acceptance, printed at the end of the session
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


def table_of(src: str):
    return compile(parse_program(src))


@pytest.fixture
def code_example():
    return table_of(CODE_EXAMPLE)


@pytest.fixture
def factorial_at_b():
    return table_of(FACTORIAL_AT_B)
