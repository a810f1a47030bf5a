from __future__ import annotations

from dam.bytecode import compile
from dam.ces import Clos, enumerate_ces_successors, initial, run_ces, step_ces
from dam.machine import Halt, Nat, Stuck
from dam.syntax import Lit, gen_term

from conftest import FACTORIAL_AT_B, FACTORIAL_LOCAL, table_of


def test_code_example_trace(code_example):
    r = run_ces(code_example, 100)
    assert r.verdict == "halted" and r.steps == 5
    assert r.trace == ["CLOS", "CLOS", "APPL", "VAR", "RET"]
    assert r.value == Clos(2, ())
    assert code_example[2].body[0].code == 3  # the second closure is fn y. x


def test_literal():
    r = run_ces(compile(Lit(3)), 10)
    assert r.value == Nat(3) and r.steps == 1


def test_arithmetic_and_monus():
    assert run_ces(table_of("2 * 3 + 1"), 100).value == Nat(7)
    assert run_ces(table_of("2 - 5"), 100).value == Nat(0)
    assert run_ces(table_of("if0 3 - 3 then 10 else 20"), 100).value == Nat(10)
    assert run_ces(table_of("if0 4 then 10 else 20"), 100).value == Nat(20)


def test_factorial():
    assert run_ces(table_of(FACTORIAL_LOCAL), 10**5).value == Nat(120)


def test_remote_is_erased():
    r = run_ces(table_of(FACTORIAL_AT_B), 10**5)
    assert r.value == Nat(120) and "REMOTE" in r.trace


def test_overflow_gets_stuck():
    big = 2**64 - 1
    r = run_ces(table_of(f"{big} + 1"), 100)
    assert r.verdict == "stuck" and "overflow" in r.reason


def test_fuel():
    loop = "(fn x. x x) (fn x. x x)"
    r = run_ces(table_of(loop), 50)
    assert r.verdict == "fuel" and r.steps == 50


def test_halt_and_stuck_have_no_successors(code_example):
    r = run_ces(code_example, 100)
    assert isinstance(step_ces(r.final, code_example), Halt)
    assert enumerate_ces_successors(r.final, code_example) == []
    from dam.bytecode import deserialize
    t = deserialize("(code (var 0) end)")
    assert isinstance(step_ces(initial(t), t), Stuck)
    assert enumerate_ces_successors(initial(t), t) == []


def test_deterministic_on_corpus():
    for s in range(40):
        t = compile(gen_term(s, 30, ("A", "B")))
        cfg = initial(t)
        for _ in range(2000):
            succ = enumerate_ces_successors(cfg, t)
            assert len(succ) <= 1
            if not succ:
                break
            cfg = succ[0][1]


def test_apply_non_function_is_stuck():
    r = run_ces(table_of("3 4"), 100)
    assert r.verdict == "stuck" and "closure" in r.reason
