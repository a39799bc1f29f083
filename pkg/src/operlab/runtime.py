"""Event-driven automaton contract and hierarchical composition.

Every protocol is a deterministic Automaton: step(event) -> list of actions.
A Composite hosts a core automaton plus tagged children; inbound messages
carry an instance path (tuple of string segments) that routes them to exactly
one automaton. Child indications surface to the core as Request events whose
args are prefixed with the child's tag.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .core import Payload

# -- events -----------------------------------------------------------------


@dataclass(frozen=True)
class MessageArrival:
    sender: int
    payload: Payload
    path: tuple = ()


@dataclass(frozen=True)
class TimerFired:
    timer_id: tuple


@dataclass(frozen=True)
class Request:
    name: str
    args: tuple = ()


# -- actions ----------------------------------------------------------------


@dataclass(frozen=True)
class Send:
    to: int
    payload: Payload
    path: tuple = ()


@dataclass(frozen=True)
class Broadcast:
    payload: Payload
    path: tuple = ()


@dataclass(frozen=True)
class SetTimer:
    duration: int
    timer_id: tuple


@dataclass(frozen=True)
class CancelTimer:
    timer_id: tuple


@dataclass(frozen=True)
class Indicate:
    name: str
    args: tuple = ()


@dataclass(frozen=True)
class Halt:
    pass


@dataclass(frozen=True)
class ToChild:
    """Core-internal action: deliver an event to the named child."""

    tag: str
    event: object


class Automaton:
    """Deterministic event-driven state machine. Halt is absorbing."""

    def __init__(self):
        self.halted = False
        self.abandoned = False
        self._timer_seq = 0

    def step(self, event) -> list:
        if self.halted:
            return []
        actions = list(self.on_event(event) or ())
        out = []
        for a in actions:
            out.append(a)
            if isinstance(a, Halt):
                self.halted = True
                break
        return out

    def on_event(self, event):  # pragma: no cover - abstract
        raise NotImplementedError

    def new_timer(self, duration: int):
        """Returns (SetTimer action, timer id). Ids are local (int,) tuples."""
        self._timer_seq += 1
        tid = (self._timer_seq,)
        return SetTimer(duration, tid), tid


class Composite(Automaton):
    """Core automaton plus routed children.

    factory(tag) may return a fresh automaton to spawn on first use of an
    unknown tag; buffer_tags(tag) marks tags whose early messages are buffered
    (bounded, oldest dropped) until an explicit spawn. Anything else is
    dropped and counted as misrouted.
    """

    def __init__(self, core: Automaton, children=None, factory=None,
                 buffer_tags=None, buffer_cap=64):
        super().__init__()
        self.core = core
        self.children: dict[str, Automaton] = dict(children or {})
        self.factory = factory
        self.buffer_tags = buffer_tags
        self.buffer_cap = buffer_cap
        self.pending: dict[str, deque] = {}
        self.misrouted = 0
        self.buffer_dropped = 0

    # -- public --------------------------------------------------------

    def spawn(self, tag: str, child: Automaton) -> list:
        """Register a child and replay its buffered messages in arrival order."""
        if tag in self.children:
            raise ValueError(f"duplicate child tag {tag!r}")
        self.children[tag] = child
        out = []
        for event in self.pending.pop(tag, ()):
            out.extend(self._step_child(tag, event))
        return out

    def on_event(self, event):
        if isinstance(event, MessageArrival) and event.path:
            tag, rest = event.path[0], event.path[1:]
            stripped = MessageArrival(event.sender, event.payload, rest)
            if tag not in self.children and self.factory is not None:
                child = self.factory(tag)
                if child is not None:
                    self.children[tag] = child
            if tag in self.children:
                return self._step_child(tag, stripped)
            if self.buffer_tags is not None and self.buffer_tags(tag):
                buf = self.pending.setdefault(tag, deque(maxlen=self.buffer_cap))
                if len(buf) == self.buffer_cap:
                    self.buffer_dropped += 1
                buf.append(stripped)
                return []
            self.misrouted += 1
            return []
        if isinstance(event, TimerFired) and event.timer_id and \
                isinstance(event.timer_id[0], str):
            tag = event.timer_id[0]
            if tag in self.children:
                return self._step_child(tag, TimerFired(event.timer_id[1:]))
            self.misrouted += 1
            return []
        return self._step_core(event)

    # -- internals -----------------------------------------------------

    def _step_core(self, event) -> list:
        return self._absorb_core(self.core.step(event))

    def _absorb_core(self, actions) -> list:
        out = []
        for a in actions:
            if self.halted:
                break
            if isinstance(a, ToChild):
                out.extend(self._deliver_to_child(a.tag, a.event))
            elif isinstance(a, Halt):
                self.halted = True
                out.append(a)
            else:
                out.append(a)
        return out

    def _deliver_to_child(self, tag: str, event) -> list:
        if tag not in self.children:
            if self.factory is not None:
                child = self.factory(tag)
                if child is not None:
                    self.children[tag] = child
                    out = []
                    for buffered in self.pending.pop(tag, ()):
                        out.extend(self._step_child(tag, buffered))
                    out.extend(self._step_child(tag, event))
                    return out
            self.misrouted += 1
            return []
        return self._step_child(tag, event)

    def _step_child(self, tag: str, event) -> list:
        out = []
        for a in self.children[tag].step(event):
            if self.halted:
                break
            if isinstance(a, Send):
                out.append(Send(a.to, a.payload, (tag,) + a.path))
            elif isinstance(a, Broadcast):
                out.append(Broadcast(a.payload, (tag,) + a.path))
            elif isinstance(a, SetTimer):
                out.append(SetTimer(a.duration, (tag,) + a.timer_id))
            elif isinstance(a, CancelTimer):
                out.append(CancelTimer((tag,) + a.timer_id))
            elif isinstance(a, Indicate):
                out.extend(self._absorb_core(
                    self.core.step(Request(a.name, (tag,) + a.args))))
            elif isinstance(a, Halt):
                pass  # child-local; the child's own flag absorbs it
            elif isinstance(a, ToChild):  # pragma: no cover - cores only
                raise TypeError("ToChild emitted by a non-core automaton")
            else:  # pragma: no cover
                raise TypeError(f"unknown action {a!r}")
        return out
