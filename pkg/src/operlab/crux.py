"""Single-view agreement core combining both safety guards with a
round-simulated synchronous agreement in the middle.

Seven sequential steps per proposal: (1) first graded consensus, gated on
both a delta_shift + delta1 timer and an actual decision; (2) the recursive
synchronous agreement simulated for exactly R rounds of delta_sync each
under a bit cap; (3) the estimate rule; (4) second graded consensus, gated
the same way; (5) decide iff the second grade is 1; (6) broadcast the second
value through the validation broadcast; (7) completed once that broadcast
completes. Validations are relayed outward unconditionally, even after an
abandon.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import BOT, DEFAULT_VALUE_WIDTH, ValidityPredicate, valid
from .graded_consensus import GradedConsensus
from .runtime import (Automaton, Composite, Indicate, Request, TimerFired,
                      ToChild)
from .sync_ba import GC_ROUNDS, RoundSimAdapter, SyncMachine, budget, rounds
from .validation_broadcast import make_validation_broadcast


@dataclass(frozen=True)
class CruxParams:
    n: int
    t: int
    delta: int
    delta_shift: int
    value_width: int = DEFAULT_VALUE_WIDTH

    @property
    def delta1(self) -> int:
        return GC_ROUNDS * self.delta

    @property
    def delta2(self) -> int:
        return GC_ROUNDS * self.delta

    @property
    def delta_sync(self) -> int:
        return self.delta_shift + self.delta

    @property
    def R(self) -> int:
        return rounds(self.n)

    @property
    def B(self) -> int:
        return budget(self.n, self.value_width)

    @property
    def bit_cap(self) -> int:
        return 2 * self.B

    @property
    def delta_total(self) -> int:
        return ((self.delta_shift + self.delta1)
                + self.R * self.delta_sync
                + (self.delta_shift + self.delta2))


def est_rule(own, v1, g1, v_a, pred: ValidityPredicate):
    """Pick the estimate for the second guard."""
    if g1 == 1:
        return v1
    if v_a is not BOT and valid(pred, v_a):
        return v_a
    return own


class CruxCore(Automaton):
    def __init__(self, params: CruxParams, pred: ValidityPredicate):
        super().__init__()
        self.params = params
        self.pred = pred
        self.own = None
        self.gc1_out = None       # (v1, g1)
        self.v_a = None           # synchronous decision, BOT if none in time
        self.gc2_out = None       # (v2, g2)
        self.timer1_done = False
        self.timer2_done = False
        self.sync_started = False
        self.gc2_started = False
        self.vb_started = False
        self.decided = False
        self.completed = False
        self._timer1 = None
        self._timer2 = None

    def on_event(self, event):
        if isinstance(event, Request):
            return self._request(event)
        if isinstance(event, TimerFired):
            if event.timer_id == self._timer1:
                self.timer1_done = True
                return self._after_gc1()
            if event.timer_id == self._timer2:
                self.timer2_done = True
                return self._after_gc2()
        return []

    def _request(self, event):
        name, args = event.name, event.args
        if name == "propose":
            return self._propose(args[0])
        if name == "abandon":
            self.abandoned = True
            return [ToChild("gc1", Request("abandon")),
                    ToChild("gc2", Request("abandon")),
                    ToChild("as", Request("abandon")),
                    ToChild("vb", Request("abandon"))]
        # child indications, tag-prefixed
        if name == "decide" and args and args[0] == "gc1":
            if self.gc1_out is None:
                self.gc1_out = (args[1], args[2])
                return self._after_gc1()
            return []
        if name == "sync-done" and args and args[0] == "as":
            if self.v_a is None:
                self.v_a = args[1]
                return self._after_sync()
            return []
        if name == "decide" and args and args[0] == "gc2":
            if self.gc2_out is None:
                self.gc2_out = (args[1], args[2])
                return self._after_gc2()
            return []
        if name == "validate" and args and args[0] == "vb":
            # relayed unconditionally, even after abandon
            return [Indicate("validate", (args[1],))]
        if name == "completed" and args and args[0] == "vb":
            if not self.completed and not self.abandoned:
                self.completed = True
                return [Indicate("completed")]
            return []
        return []

    def _propose(self, v):
        if self.own is not None or self.abandoned:
            return []
        self.own = v
        timer, self._timer1 = self.new_timer(
            self.params.delta_shift + self.params.delta1)
        return [ToChild("gc1", Request("propose", (v,))), timer]

    def _after_gc1(self):
        if not (self.timer1_done and self.gc1_out is not None):
            return []
        if self.sync_started or self.abandoned:
            return []
        self.sync_started = True
        v1, _ = self.gc1_out
        return [ToChild("as", Request("start", (v1,)))]

    def _after_sync(self):
        if self.gc2_started or self.abandoned:
            return []
        self.gc2_started = True
        v1, g1 = self.gc1_out
        est = est_rule(self.own, v1, g1, self.v_a, self.pred)
        timer, self._timer2 = self.new_timer(
            self.params.delta_shift + self.params.delta2)
        return [ToChild("gc2", Request("propose", (est,))), timer]

    def _after_gc2(self):
        if not (self.timer2_done and self.gc2_out is not None):
            return []
        if self.vb_started or self.abandoned:
            return []
        self.vb_started = True
        v2, g2 = self.gc2_out
        out = []
        if g2 == 1 and not self.decided:
            self.decided = True
            out.append(Indicate("decide", (v2,)))
        out.append(ToChild("vb", Request("broadcast", (v2,))))
        return out


def make_crux(params: CruxParams, pid: int, default,
              pred: ValidityPredicate | None = None) -> Composite:
    """Assemble one view's agreement instance for process pid.

    default is the value substituted for BOT validations (the process's own
    proposal when embedded in the view-based protocol).
    """
    pred = pred or ValidityPredicate.always_true()
    members = list(range(params.n))

    def machine_factory(proposal):
        return SyncMachine(pid, members, proposal)

    children = {
        "gc1": GradedConsensus(params.n, params.t),
        "gc2": GradedConsensus(params.n, params.t),
        "as": RoundSimAdapter(machine_factory, params.R, params.delta_sync,
                              params.bit_cap, params.value_width),
        "vb": make_validation_broadcast(params.n, params.t, default),
    }
    return Composite(CruxCore(params, pred), children=children)
