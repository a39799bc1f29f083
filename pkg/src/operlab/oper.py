"""View-based partially synchronous agreement built from per-view agreement
cores and a finisher.

Each view V runs its own agreement core (child tag "crux@V", spawned lazily,
with messages buffered until this process has proposed). Completing a view
broadcasts START-VIEW for the next one; t+1 matching START-VIEW messages are
amplified once per view; a 2t+1 quorum for a higher view triggers the move —
but only after a value from the preceding view has been validated, which is
what that value is then proposed with. A decision from the current view's
core feeds the finisher; the finisher's finish indication is the protocol
decision, after which the process halts.
"""

from __future__ import annotations

from .core import DEFAULT_VALUE_WIDTH, Payload, ValidityPredicate
from .crux import CruxParams, make_crux
from .finisher import Finisher
from .runtime import (Automaton, Broadcast, Composite, Halt, Indicate,
                      MessageArrival, Request, ToChild)

CRUX_TAG_PREFIX = "crux@"


def crux_tag(view: int) -> str:
    return CRUX_TAG_PREFIX + str(view)


def _tag_view(tag: str):
    if tag.startswith(CRUX_TAG_PREFIX):
        try:
            v = int(tag[len(CRUX_TAG_PREFIX):])
        except ValueError:
            return None
        return v if v >= 1 else None
    return None


class OperCore(Automaton):
    def __init__(self, n: int, t: int):
        super().__init__()
        self.n = n
        self.t = t
        self.own = None
        self.view = 1
        self.entered = False
        self.helped: set = set()
        self.start_view_from: dict = {}   # view -> {sender}
        self.validated: dict = {}         # view -> first validated value
        self.pending_target = None        # highest quorum view above view_i
        self.decided = False

    def on_event(self, event):
        if isinstance(event, Request):
            return self._request(event)
        if isinstance(event, MessageArrival):
            p = event.payload
            if p.kind == "START-VIEW":
                return self._start_view(event.sender, p.view)
        return []

    def _request(self, event):
        name, args = event.name, event.args
        if name == "propose":
            if self.entered or self.abandoned:
                return []
            self.own = args[0]
            self.entered = True
            return [Indicate("enter-view", (1,)),
                    ToChild(crux_tag(1), Request("propose", (args[0],)))]
        if name == "abandon":
            self.abandoned = True
            return [ToChild(crux_tag(self.view), Request("abandon")),
                    ToChild("fin", Request("abandon"))]
        if name == "completed":
            if args and args[0] == crux_tag(self.view) and not self.abandoned:
                return [Broadcast(Payload("START-VIEW", view=self.view + 1))]
            return []
        if name == "validate":
            w = _tag_view(args[0]) if args else None
            if w is not None and w not in self.validated:
                self.validated[w] = args[1]
                return self._try_advance()
            return []
        if name == "decide":
            if args and args[0] == crux_tag(self.view) and not self.abandoned:
                return [ToChild("fin", Request("to_finish", (args[1],)))]
            return []
        if name == "finish" and args and args[0] == "fin":
            if self.decided or self.abandoned:
                return []
            self.decided = True
            return [Indicate("decide", (args[1],)),
                    ToChild(crux_tag(self.view), Request("abandon")),
                    Halt()]
        return []

    def _start_view(self, sender, v):
        if v < 2:
            return []
        senders = self.start_view_from.setdefault(v, set())
        if sender in senders:
            return []
        senders.add(sender)
        out = []
        if len(senders) >= self.t + 1 and v not in self.helped:
            self.helped.add(v)
            if not self.abandoned:
                out.append(Broadcast(Payload("START-VIEW", view=v)))
        if len(senders) >= 2 * self.t + 1 and v > self.view:
            if self.pending_target is None or v > self.pending_target:
                self.pending_target = v
            out.extend(self._try_advance())
        return out

    def _try_advance(self):
        out = []
        while (self.pending_target is not None
               and self.pending_target > self.view
               and self.pending_target - 1 in self.validated
               and self.entered and not self.abandoned):
            target = self.pending_target
            value = self.validated[target - 1]
            out.append(ToChild(crux_tag(self.view), Request("abandon")))
            self.view = target
            out.append(Indicate("enter-view", (target,)))
            out.append(ToChild(crux_tag(target), Request("propose", (value,))))
        return out


class Oper(Composite):
    """Top-level composite: finisher plus lazily spawned per-view cores."""

    def __init__(self, n: int, t: int, delta: int,
                 value_width: int = DEFAULT_VALUE_WIDTH,
                 pred: ValidityPredicate | None = None, pid: int = 0,
                 buffer_cap: int = 256):
        self.params = CruxParams(n=n, t=t, delta=delta,
                                 delta_shift=2 * delta,
                                 value_width=value_width)
        self.pred = pred or ValidityPredicate.always_true()
        self.pid = pid
        core = OperCore(n, t)
        super().__init__(core, children={"fin": Finisher(n, t)},
                         factory=self._make_view,
                         buffer_tags=lambda tag: _tag_view(tag) is not None,
                         buffer_cap=buffer_cap)

    def _make_view(self, tag: str):
        if _tag_view(tag) is None:
            return None
        if self.core.own is None:
            return None   # buffer until this process proposes
        return make_crux(self.params, self.pid, default=self.core.own,
                         pred=self.pred)

    def on_event(self, event):
        out = super().on_event(event)
        # a proposal unlocks the view factory: replay anything buffered
        if isinstance(event, Request) and event.name == "propose" \
                and self.core.own is not None and self.pending:
            for tag in sorted(self.pending, key=_tag_view):
                if tag not in self.children:
                    child = self._make_view(tag)
                    if child is not None:
                        self.children[tag] = child
                        for buffered in self.pending.pop(tag, ()):
                            out.extend(self._step_child(tag, buffered))
        return out


def make_oper(n: int, t: int, delta: int, pid: int,
              value_width: int = DEFAULT_VALUE_WIDTH,
              pred: ValidityPredicate | None = None) -> Oper:
    return Oper(n, t, delta, value_width=value_width, pred=pred, pid=pid)
