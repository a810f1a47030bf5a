from __future__ import annotations

import pytest

from dam.bytecode import compile
from dam.ces import run_ces
from dam.cesh import ClosPtr
from dam.dcesh1 import (Appl, CompileTargetError, D1Machine, Ret, Thread, initial, run_dcesh1,
                        step_dcesh1)
from dam.heap import empty
from dam.machine import Nat
from dam.network import random_policy
from dam.syntax import Lit, gen_term

from conftest import FACTORIAL_LOCAL, table_of


def test_code_example_trace(code_example):
    r = run_dcesh1(code_example, 100)
    rules = [ev.rule for ev, _ in r.trace]
    assert rules == ["CLOS", "CLOS", "APPL-send", "APPL-receive", "VAR", "RET-send", "RET-receive"]
    assert r.verdict == "halted" and r.steps == 7
    end = r.final
    assert end.msgs == ()
    m = end.nodes["A"]
    assert m.thread == Thread((0, 3), (), (ClosPtr(1),), None)
    # the continuation saved by APPL-send is (END, []) with an empty stack
    assert list(m.cont_heap) == [(((0, 3), ()), (), None)]
    assert r.value == ClosPtr(1)


def test_code_example_messages(code_example):
    r = run_dcesh1(code_example, 100)
    msgs = [ev.msg for ev, _ in r.trace if ev.msg is not None]
    assert msgs == [Appl(0, ClosPtr(1), 0)] * 2 + [Ret(0, ClosPtr(1))] * 2
    assert str(msgs[0]) == "APPL(0,clos:1,0)"


def test_thread_absent_between_send_and_receive(code_example):
    r = run_dcesh1(code_example, 100)
    for ev, net in r.trace:
        if ev.kind == "async-send":
            assert net.nodes["A"].thread is None and len(net.msgs) == 1


def test_literal():
    r = run_dcesh1(compile(Lit(3)), 10)
    assert r.value == Nat(3)


def test_factorial():
    r = run_dcesh1(table_of(FACTORIAL_LOCAL), 10**5)
    assert r.value == Nat(120)
    sends = [ev.msg for ev, _ in r.trace if ev.kind == "async-send"]
    recvs = [ev.msg for ev, _ in r.trace if ev.kind == "async-recv"]
    assert sorted(map(str, sends)) == sorted(map(str, recvs))


def test_remote_is_rejected():
    with pytest.raises(CompileTargetError):
        run_dcesh1(table_of("(1 @ B)"), 10)


def test_idle_machine_has_no_step(code_example):
    m = D1Machine(None, empty(), empty())
    assert step_dcesh1(m, code_example) == []


def test_receive_while_running_is_refused(code_example):
    assert step_dcesh1(initial(code_example), code_example, Ret(0, Nat(1))) == []


def test_dangling_continuation(code_example):
    m = D1Machine(None, empty(), empty())
    assert step_dcesh1(m, code_example, Ret(5, Nat(1))) == []


def test_agrees_with_ces():
    for s in range(60):
        t = compile(gen_term(s, 30))
        a, b = run_ces(t, 10**4), run_dcesh1(t, 4 * 10**4, random_policy(s))
        assert a.verdict == b.verdict
        if isinstance(a.value, Nat):
            assert a.value == b.value
