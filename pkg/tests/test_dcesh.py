from __future__ import annotations

import itertools

import pytest

from dam.bytecode import compile
from dam.ces import run_ces
from dam.dcesh import (INACTIVE, ApplMsg, DMachine, DStack, DThread, NetworkConfigError, RClos,
                       RemoteMsg, RemotePtr, RetMsg, initial_network, route, run_dcesh_async,
                       run_dcesh_sync, step_dcesh)
from dam.heap import empty, is_prefix
from dam.machine import Nat
from dam.syntax import App, At, If0, Lam, Op, children, gen_term, nodes_of

from conftest import FACTORIAL_LOCAL, table_of


def test_route():
    assert route(RemoteMsg(0, "B", RemotePtr(3, "A"))) == "B"
    assert route(ApplMsg(RemotePtr(1, "A"), Nat(0), RemotePtr(2, "B"))) == "A"
    assert route(RetMsg(RemotePtr(2, "B"), Nat(0))) == "B"


def test_initial_network(code_example):
    net = initial_network(code_example, "A", ["A", "B"])
    assert net["A"].thread == DThread((0, 0), (), DStack())
    assert net["B"] == INACTIVE and len(net["B"].clos_heap) == 0
    with pytest.raises(NetworkConfigError):
        initial_network(code_example, "C", ["A", "B"])


def test_undeclared_node_is_rejected():
    with pytest.raises(NetworkConfigError, match="undeclared"):
        initial_network(table_of("(1 @ C)"), "A", ["A", "B"])


def test_remote_identity():
    r = run_dcesh_sync(table_of("((fn x. x) @ B) 4"), "A", ["A", "B"], 100)
    assert r.value == Nat(4)
    assert [",".join(ev.rules) for ev, _ in r.trace] == [
        "REMOTE-send,REMOTE-receive", "CLOS", "RET-send,RET-receive", "LIT",
        "APPL-send,APPL-receive", "VAR", "RET-send,RET-receive"]
    assert [ev.node for ev, _ in r.trace][:3] == ["A", "B", "B"]


def test_local_application_is_silent(code_example):
    r = run_dcesh_sync(code_example, "A", ["A"], 100)
    assert [ev.rules[0] for ev, _ in r.trace] == ["CLOS", "CLOS", "APPL", "VAR", "RET"]
    assert r.stats["comm"] == 0 and r.value == RClos(RemotePtr(1, "A"))


def test_self_remote_still_sends():
    r = run_dcesh_sync(table_of("(1 @ A) + 2"), "A", ["A"], 100)
    assert r.value == Nat(3)
    (ev, _), = [(ev, n) for ev, n in r.trace if ev.kind == "comm"][:1]
    assert ev.node == ev.receiver == "A"


def test_factorial_local():
    r = run_dcesh_sync(table_of(FACTORIAL_LOCAL), "A", ["A"], 10**5)
    assert r.value == Nat(120) and r.stats["comm"] == 0


def test_factorial_distributed(factorial_at_b):
    s = run_dcesh_sync(factorial_at_b, "A", ["A", "B"], 10**5)
    a = run_dcesh_async(factorial_at_b, "A", ["A", "B"], 10**5)
    assert s.value == a.value == Nat(120)
    assert s.stats["comm"] >= 2
    assert a.steps == s.stats["silent"] + 2 * s.stats["comm"]
    assert s.stats["heaps"]["B"][0] > 0


def test_fuel(factorial_at_b):
    r = run_dcesh_sync(factorial_at_b, "A", ["A", "B"], 10)
    assert r.verdict == "fuel" and r.steps == 10


def test_dangling_closure_on_receive(code_example):
    m = DMachine(None, empty(), empty())
    msg = ApplMsg(RemotePtr(7, "B"), Nat(1), RemotePtr(0, "A"))
    assert step_dcesh("B", m, code_example, msg) == []


def test_misrouted_message_is_ignored(code_example):
    m = DMachine(None, empty(), empty())
    assert step_dcesh("A", m, code_example, RemoteMsg(0, "B", RemotePtr(0, "A"))) == []
    assert len(step_dcesh("B", m, code_example, RemoteMsg(0, "B", RemotePtr(0, "A")))) == 1


def test_stuck_with_dangling_message():
    t = table_of("(fn x. x) @ B")
    nodes = {"A": DMachine(None, empty(), empty()), "B": DMachine(None, empty(), empty())}
    from dam.network import AsyncNet, async_step
    from dam.dcesh import diagnose, local
    net = AsyncNet(nodes, (RetMsg(RemotePtr(4, "A"), Nat(0)),))
    assert async_step(net, local(t)) is None
    assert "dangling" in diagnose(net.nodes, net.msgs, t)


def _relocate(t, names):
    """Rename the At annotations of ``t`` in preorder using ``names``."""
    it = iter(names)

    def go(u):
        if isinstance(u, At):
            return At(go(u.body), next(it))
        if isinstance(u, Lam):
            return Lam(go(u.body))
        if isinstance(u, App):
            return App(go(u.fn), go(u.arg))
        if isinstance(u, Op):
            return Op(u.op, go(u.lhs), go(u.rhs))
        if isinstance(u, If0):
            return If0(go(u.cond), go(u.then), go(u.else_))
        return u

    return go(t)


def test_relocate():
    t = gen_term(5, 30, ("A", "B"))
    names = "C" * _count_at(t)
    assert nodes_of(_relocate(t, names)) == ({"C"} if names else set())


def _count_at(t):
    return int(isinstance(t, At)) + sum(_count_at(c) for c in children(t))


def test_placement_transparency():
    for s in range(30):
        t = gen_term(s, 30, ("A", "B"))
        ref = run_ces(compile(t), 10**4)
        n = _count_at(t)
        for names in itertools.islice(itertools.product("ABC", repeat=n), 6):
            r = run_dcesh_sync(compile(_relocate(t, names)), "A", ["A", "B", "C"], 10**5)
            assert r.verdict == ref.verdict
            if isinstance(ref.value, Nat):
                assert r.value == ref.value


def test_all_local_placement_sends_no_appl():
    for s in range(40):
        t = gen_term(s, 30, ("A",))
        r = run_dcesh_sync(compile(t), "A", ["A"], 10**5)
        rules = {ev.rules[0] for ev, _ in r.trace}
        assert "APPL-send" not in rules
        if _count_at(t) == 0:
            assert r.stats["comm"] == 0


def test_heaps_only_grow(factorial_at_b):
    r = run_dcesh_sync(factorial_at_b, "A", ["A", "B"], 10**5)
    prev = initial_network(factorial_at_b, "A", ["A", "B"])
    for _, nodes in r.trace:
        for i in nodes:
            assert is_prefix(prev[i].clos_heap, nodes[i].clos_heap)
            assert is_prefix(prev[i].cont_heap, nodes[i].cont_heap)
        prev = nodes
