"""Halting primitive: one correct decision becomes all-correct decisions.

to_finish broadcasts FINISH once; t+1 matching FINISH messages from others
trigger an adopt-and-broadcast (unless already started); 2t+1 trigger the
finish indication.
"""

from __future__ import annotations

from .core import BOT, Payload
from .runtime import Automaton, Broadcast, Indicate, MessageArrival, Request


class Finisher(Automaton):
    def __init__(self, n: int, t: int):
        super().__init__()
        self.n = n
        self.t = t
        self.started = False
        self.finished = False
        self.finish_from: dict = {}   # value -> {sender}

    def on_event(self, event):
        if isinstance(event, Request):
            if event.name == "to_finish":
                return self._to_finish(event.args[0])
            if event.name == "abandon":
                self.abandoned = True
            return []
        if isinstance(event, MessageArrival):
            p = event.payload
            if p.kind != "FINISH" or p.value is BOT:
                return []
            self.finish_from.setdefault(p.value, set()).add(event.sender)
            return self._evaluate()
        return []

    def _to_finish(self, v):
        if self.started or self.abandoned:
            return []
        self.started = True
        return [Broadcast(Payload("FINISH", value=v))] + self._evaluate()

    def _evaluate(self):
        out = []
        for v in sorted(self.finish_from):
            senders = self.finish_from[v]
            if not self.started and len(senders) >= self.t + 1:
                self.started = True
                if not self.abandoned:
                    out.append(Broadcast(Payload("FINISH", value=v)))
            if not self.finished and len(senders) >= 2 * self.t + 1:
                self.finished = True
                if not self.abandoned:
                    out.append(Indicate("finish", (v,)))
        return out
