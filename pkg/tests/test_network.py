"""The network engine, exercised with a tiny ping-pong machine and with DCESH."""
from __future__ import annotations

import pytest

from dam import dcesh
from dam.network import (SILENT, AmbiguousSchedule, AsyncNet, InvalidTrace, Receive, Send,
                         Trace, Transition, Undeliverable, async_step, async_trace_to_sync,
                         detag, enumerate_async_steps, format_async_event, format_sync_event,
                         random_policy, replay_async, sync_step, sync_trace_to_async)

from conftest import table_of


def test_detag():
    assert detag(SILENT) == ((), ())
    assert detag(Send("m")) == ((), ("m",))
    assert detag(Receive("m")) == (("m",), ())


# A node state is (holding_token, count).  A token holder may tick silently
# until count hits 2, then it passes the token to the other node.
OTHER = {"A": "B", "B": "A"}


def ping(i, m, msg=None):
    has, n = m
    if msg is not None:
        return [Transition("recv", Receive(msg), (True, n))] if not has and msg == OTHER[i] else []
    if not has:
        return []
    if n < 2:
        return [Transition("tick", SILENT, (True, n + 1))]
    return [Transition("pass", Send(i), (False, 0))]


def route(msg):
    return OTHER[msg]


def run_sync(nodes, k):
    tr = Trace(nodes)
    for _ in range(k):
        ev, nodes = sync_step(nodes, ping, route)
        tr.steps.append((ev, nodes))
    return tr


def test_sync_silent_and_comm():
    tr = run_sync({"A": (True, 0), "B": (False, 0)}, 3)
    kinds = [ev.kind for ev, _ in tr.steps]
    assert kinds == ["silent", "silent", "comm"]
    ev, end = tr.steps[-1]
    assert (ev.node, ev.receiver, ev.rules) == ("A", "B", ("pass", "recv"))
    assert ev.mid == {"A": (False, 0), "B": (False, 0)}  # sender updated first
    assert end == {"A": (False, 0), "B": (True, 0)}


def test_sync_nothing_enabled():
    assert sync_step({"A": (False, 0), "B": (False, 0)}, ping, route) is None


def test_sync_ambiguous():
    with pytest.raises(AmbiguousSchedule):
        sync_step({"A": (True, 0), "B": (True, 0)}, ping, route)


def test_sync_undeliverable():
    with pytest.raises(Undeliverable):
        sync_step({"A": (True, 2), "B": (True, 0)}, lambda i, m, msg=None: ping(i, m, msg) if i == "A" else [], route)


def test_async_send_then_receive():
    net = AsyncNet({"A": (True, 2), "B": (False, 0)}, ())
    ev, net = async_step(net, ping)
    assert ev.kind == "async-send" and net.msgs == ("A",)
    ev, net = async_step(net, ping)
    assert ev.kind == "async-recv" and net.msgs == () and net.nodes["B"] == (True, 0)


def test_async_receive_only_with_empty_msgs_is_stuck():
    assert enumerate_async_steps(AsyncNet({"A": (False, 0), "B": (False, 0)}, ()), ping) == []


def test_async_takes_message_from_the_middle():
    net = AsyncNet({"A": (False, 0), "B": (False, 0)}, ("x", "B", "y"))
    (ev, nxt), = enumerate_async_steps(net, ping)
    assert ev.node == "A" and nxt.msgs == ("x", "y")


def test_embedding_round_trip():
    tr = run_sync({"A": (True, 0), "B": (False, 0)}, 7)
    emb = sync_trace_to_async(tr)
    silent = sum(ev.kind == "silent" for ev, _ in tr.steps)
    assert len(emb) == silent + 2 * (len(tr) - silent)
    assert replay_async(emb, ping)
    assert emb.end == AsyncNet(tr.end, ())
    back = async_trace_to_sync(emb, lambda m: m[0])
    assert back.end == tr.end and len(back) == len(tr)


def test_empty_trace_embeds_to_empty():
    tr = Trace({"A": (True, 0)})
    assert len(sync_trace_to_async(tr)) == 0


def test_compression_preconditions():
    tr = Trace(AsyncNet({"A": (True, 2), "B": (False, 0)}, ()))
    ev, net = async_step(tr.start, ping)
    tr.steps.append((ev, net))
    with pytest.raises(InvalidTrace):
        async_trace_to_sync(tr, lambda m: m[0])


def test_replay_rejects_forged_step():
    tr = run_sync({"A": (True, 0), "B": (False, 0)}, 1)
    emb = sync_trace_to_async(tr)
    ev, _ = emb.steps[0]
    emb.steps[0] = (ev, AsyncNet({"A": (True, 9), "B": (False, 0)}, ()))
    with pytest.raises(InvalidTrace):
        replay_async(emb, ping)


def test_policies_coincide_with_one_message():
    net0 = AsyncNet({"A": (True, 0), "B": (False, 0)}, ())
    runs = []
    for pol in (None, random_policy(1), random_policy(2)):
        net, evs = net0, []
        for _ in range(12):
            ev, net = async_step(net, ping, pol) if pol else async_step(net, ping)
            evs.append(ev)
        runs.append(evs)
    assert runs[0] == runs[1] == runs[2]


def test_trace_lines():
    t = table_of("((fn x. x) @ B) 4")
    out = dcesh.run_dcesh_sync(t, "A", ["A", "B"], 100)
    ev, _ = out.trace[0]
    assert format_sync_event(1, ev) == \
        "t=1 kind=comm node=A->recv=B msg=REMOTE(1,B,(0,A)) inflight=0 rule=REMOTE-send,REMOTE-receive"
    a = dcesh.run_dcesh_async(t, "A", ["A", "B"], 100)
    ev, st = a.trace[0]
    assert format_async_event(1, ev, len(st.msgs)) == \
        "t=1 kind=async-send node=A msg=REMOTE(1,B,(0,A)) inflight=1 rule=REMOTE-send"
