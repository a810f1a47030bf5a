"""Synchronous and asynchronous networks over a labelled local transition.

The engine is generic in the machine.  A *local step function* has the shape
``local(node, machine, msg=None) -> list[Transition]``: with ``msg=None`` it
lists the node's silent and send transitions, with a message it lists the
transitions that receive exactly that message.

A synchronous network is a ``dict`` from node name to machine, never
mutated in place.  An asynchronous one adds the tuple of messages in
transit.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Callable, Optional


@dataclass(frozen=True)
class Silent:
    pass


@dataclass(frozen=True)
class Send:
    msg: Any


@dataclass(frozen=True)
class Receive:
    msg: Any


SILENT = Silent()


def detag(t) -> tuple[tuple, tuple]:
    """Messages consumed and produced by a tagged transition."""
    if isinstance(t, Silent):
        return (), ()
    if isinstance(t, Send):
        return (), (t.msg,)
    if isinstance(t, Receive):
        return (t.msg,), ()
    raise TypeError(f"not a tagged message: {t!r}")


@dataclass(frozen=True)
class Transition:
    rule: str
    tag: Any
    machine: Any


class NetworkError(RuntimeError):
    pass


class AmbiguousSchedule(NetworkError):
    """More than one node (or transition) is enabled."""


class Undeliverable(NetworkError):
    """The routed receiver cannot take the message."""


class InvalidTrace(ValueError):
    pass


def update(nodes: dict, i, m) -> dict:
    out = dict(nodes)
    out[i] = m
    return out


@dataclass(frozen=True)
class AsyncNet:
    nodes: dict
    msgs: tuple = ()


@dataclass(frozen=True)
class SyncEvent:
    kind: str  # silent | comm
    node: Any
    rules: tuple
    receiver: Any = None
    msg: Any = None
    mid: Optional[dict] = field(default=None, repr=False)  # family after the send


@dataclass(frozen=True)
class AsyncEvent:
    kind: str  # silent | async-send | async-recv
    node: Any
    rule: str
    msg: Any = None


@dataclass
class Trace:
    start: Any
    steps: list = field(default_factory=list)  # [(event, state)]

    @property
    def end(self):
        return self.steps[-1][1] if self.steps else self.start

    def __len__(self) -> int:
        return len(self.steps)


# -- synchronous ------------------------------------------------------------

def enumerate_sync_steps(nodes: dict, local: Callable) -> list:
    """All synchronous steps; any node may act as the receiver of a comm-step."""
    out = []
    for i, m in nodes.items():
        for tr in local(i, m):
            if isinstance(tr.tag, Silent):
                ev = SyncEvent("silent", i, (tr.rule,))
                out.append((ev, update(nodes, i, tr.machine)))
            elif isinstance(tr.tag, Send):
                mid = update(nodes, i, tr.machine)
                for r, rm in mid.items():
                    for tr2 in local(r, rm, tr.tag.msg):
                        ev = SyncEvent("comm", i, (tr.rule, tr2.rule), r, tr.tag.msg, mid)
                        out.append((ev, update(mid, r, tr2.machine)))
    return out


def sync_step(nodes: dict, local: Callable, route: Callable):
    """One synchronous step, or None when no node can move."""
    enabled = [(i, local(i, m)) for i, m in nodes.items()]
    enabled = [(i, trs) for i, trs in enabled if trs]
    if not enabled:
        return None
    if len(enabled) > 1 or len(enabled[0][1]) > 1:
        names = ", ".join(str(i) for i, _ in enabled)
        raise AmbiguousSchedule(f"more than one enabled transition (nodes: {names})")
    i, (tr,) = enabled[0]
    if isinstance(tr.tag, Silent):
        return SyncEvent("silent", i, (tr.rule,)), update(nodes, i, tr.machine)
    if not isinstance(tr.tag, Send):
        raise NetworkError(f"node {i} offered a receive without a message")
    msg = tr.tag.msg
    mid = update(nodes, i, tr.machine)
    r = route(msg)
    if r not in mid:
        raise Undeliverable(f"{msg} is routed to unknown node {r}")
    recv = local(r, mid[r], msg)
    if not recv:
        raise Undeliverable(f"node {r} cannot receive {msg}")
    if len(recv) > 1:
        raise AmbiguousSchedule(f"node {r} can receive {msg} in more than one way")
    ev = SyncEvent("comm", i, (tr.rule, recv[0].rule), r, msg, mid)
    return ev, update(mid, r, recv[0].machine)


# -- asynchronous -----------------------------------------------------------

def enumerate_async_steps(net: AsyncNet, local: Callable) -> list:
    """All asynchronous steps: receives (oldest message first), then the rest.

    A send appends its message to the end of the in-transit list.
    """
    out = []
    seen = set()
    for j, msg in enumerate(net.msgs):
        if msg in seen:
            continue
        seen.add(msg)
        rest = net.msgs[:j] + net.msgs[j + 1:]
        for i, m in net.nodes.items():
            for tr in local(i, m, msg):
                ev = AsyncEvent("async-recv", i, tr.rule, msg)
                out.append((ev, AsyncNet(update(net.nodes, i, tr.machine), rest)))
    for i, m in net.nodes.items():
        for tr in local(i, m):
            consumed, produced = detag(tr.tag)
            kind = "silent" if isinstance(tr.tag, Silent) else "async-send"
            ev = AsyncEvent(kind, i, tr.rule, produced[0] if produced else None)
            out.append((ev, AsyncNet(update(net.nodes, i, tr.machine), net.msgs + produced)))
    return out


def fifo_policy(candidates: list) -> int:
    return 0


def random_policy(seed: int) -> Callable:
    rng = random.Random(seed)
    return lambda candidates: rng.randrange(len(candidates))


def async_step(net: AsyncNet, local: Callable, policy: Callable = fifo_policy):
    candidates = enumerate_async_steps(net, local)
    if not candidates:
        return None
    return candidates[policy(candidates)]


# -- trace embeddings -------------------------------------------------------

def sync_trace_to_async(trace: Trace) -> Trace:
    """Silent steps map to one async step, comm-steps to a send and a receive."""
    out = Trace(AsyncNet(trace.start, ()))
    for ev, nodes in trace.steps:
        if ev.kind == "silent":
            out.steps.append((AsyncEvent("silent", ev.node, ev.rules[0]), AsyncNet(nodes, ())))
        else:
            out.steps.append((AsyncEvent("async-send", ev.node, ev.rules[0], ev.msg),
                              AsyncNet(ev.mid, (ev.msg,))))
            out.steps.append((AsyncEvent("async-recv", ev.receiver, ev.rules[1], ev.msg),
                              AsyncNet(nodes, ())))
    return out


def replay_async(trace: Trace, local: Callable) -> bool:
    """Check that every step of an async trace is an enabled async transition."""
    state = trace.start
    for n, (ev, nxt) in enumerate(trace.steps):
        if not any(e == ev and s == nxt for e, s in enumerate_async_steps(state, local)):
            raise InvalidTrace(f"step {n + 1} ({ev.kind} at {ev.node}) is not enabled")
        state = nxt
    return True


def async_trace_to_sync(trace: Trace, is_active: Callable) -> Trace:
    """Fuse send/receive pairs of a single-threaded async trace into comm-steps.

    The trace must start and end with no messages in transit, and at most one
    node of the start state may be active.
    """
    if trace.start.msgs or trace.end.msgs:
        raise InvalidTrace("trace must start and end with no messages in transit")
    active = [i for i, m in trace.start.nodes.items() if is_active(m)]
    if len(active) > 1:
        raise InvalidTrace(f"more than one active node at the start: {active}")
    out = Trace(trace.start.nodes)
    steps = trace.steps
    k = 0
    while k < len(steps):
        ev, net = steps[k]
        if ev.kind == "silent":
            out.steps.append((SyncEvent("silent", ev.node, (ev.rule,)), net.nodes))
            k += 1
        elif ev.kind == "async-send":
            if k + 1 >= len(steps):
                raise InvalidTrace(f"send at step {k + 1} is never received")
            ev2, net2 = steps[k + 1]
            if ev2.kind != "async-recv" or ev2.msg != ev.msg:
                raise InvalidTrace(f"send at step {k + 1} is not followed by its receive")
            out.steps.append((SyncEvent("comm", ev.node, (ev.rule, ev2.rule), ev2.node,
                                        ev.msg, net.nodes), net2.nodes))
            k += 2
        else:
            raise InvalidTrace(f"receive at step {k + 1} without a preceding send")
    return out


# -- trace lines ------------------------------------------------------------

def format_sync_event(t: int, ev: SyncEvent) -> str:
    node = f"{ev.node}->recv={ev.receiver}" if ev.kind == "comm" else f"{ev.node}"
    msg = "-" if ev.msg is None else str(ev.msg)
    return f"t={t} kind={ev.kind} node={node} msg={msg} inflight=0 rule={','.join(ev.rules)}"


def format_async_event(t: int, ev: AsyncEvent, inflight: int) -> str:
    msg = "-" if ev.msg is None else str(ev.msg)
    return f"t={t} kind={ev.kind} node={ev.node} msg={msg} inflight={inflight} rule={ev.rule}"
