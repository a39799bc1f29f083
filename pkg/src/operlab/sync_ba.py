"""Recursive synchronous Byzantine agreement and its partially synchronous
round-simulation adapter.

The lock-step machine halves the member set recursively: graded consensus
over S, the first half recursing and reporting, a majority update gated on
grade 0, then the same with the second half. Round and per-process message
budgets follow the recurrences rounds(1)=0, rounds(n)=2*GC_ROUNDS+2+both
halves, and mc(1)=0, mc(n)=13n+mc(larger half).

The adapter stretches each lock-step round to delta_sync virtual time, tags
wire messages with the round parity bit, and refuses to exceed a cumulative
bit cap.
"""

from __future__ import annotations

from .core import BOT, Payload, payload_bits, value_sort_key
from .runtime import (Automaton, CancelTimer, Indicate, MessageArrival,
                      Request, Send)
from .graded_consensus import GradedConsensus

# Lock-step round budget for one graded-consensus stage: five echo stages of
# message depth plus one amplification round, measured by the lock-step
# latency test before being frozen here.
GC_ROUNDS = 7


def rounds(n: int) -> int:
    """Total lock-step rounds of the recursive agreement among n processes."""
    if n < 1:
        raise ValueError("n >= 1")
    if n == 1:
        return 0
    half1 = (n + 1) // 2
    half2 = n // 2
    return 2 * GC_ROUNDS + 2 + rounds(half1) + rounds(half2)


def mc(n: int) -> int:
    """Per-process message budget: 13n per level along the deeper half."""
    if n < 1:
        raise ValueError("n >= 1")
    if n == 1:
        return 0
    return 13 * n + mc((n + 1) // 2)


def budget(n: int, value_width: int) -> int:
    """Per-process bit budget: every message is an 8-bit tag plus a value."""
    return mc(n) * (8 + value_width)


def _sub_t(m: int) -> int:
    return (m - 1) // 3


def _batch_key(item):
    """Canonical in-round ordering; lock-step state must not depend on
    arrival order within a round."""
    sender, p = item
    has_value = p.value is not None
    return (sender, p.kind, has_value,
            value_sort_key(p.value) if has_value else (0, 0))


class LockstepGC:
    """Drives the event-driven graded consensus in lock-step rounds.

    Messages produced while absorbing round r are sent in round r+1 and
    delivered (to every member, including self) at the end of that round.
    """

    def __init__(self, members, pid, proposal):
        self.members = list(members)
        self.pid = pid
        self.auto = GradedConsensus(len(self.members), _sub_t(len(self.members)))
        self.proposal = proposal
        self.outbox = None   # payloads queued for the next outbound call
        self.decision = None

    def _collect(self, actions):
        from .runtime import Broadcast
        for a in actions:
            if isinstance(a, Broadcast):
                self.outbox.append(a.payload)
            elif isinstance(a, Indicate) and a.name == "decide":
                self.decision = a.args

    def outbound(self, r):
        if r == 0:
            self.outbox = []
            self._collect(self.auto.step(Request("propose", (self.proposal,))))
        batch, self.outbox = self.outbox, []
        return [(m, p) for p in batch for m in self.members]

    def absorb(self, r, received):
        for sender, payload in received:
            self._collect(self.auto.step(MessageArrival(sender, payload)))

    def state_digest(self):
        return self.auto.state_digest()


class SyncMachine:
    """One process's view of the recursive agreement over an ordered member set."""

    def __init__(self, pid, members, proposal):
        self.pid = pid
        self.members = list(members)
        self.b = proposal
        self.total_rounds = rounds(len(self.members))
        self.messages_sent = 0
        self.gc = None
        self.gc_grade = None
        self.child = None
        self.reports: dict = {}
        self.stages = []
        n = len(self.members)
        if n > 1:
            half1 = self.members[:(n + 1) // 2]
            half2 = self.members[(n + 1) // 2:]
            r = 0
            for idx, half in ((1, half1), (2, half2)):
                self.stages.append(("gc", r, GC_ROUNDS, idx))
                r += GC_ROUNDS
                self.stages.append(("half", r, rounds(len(half)), half))
                r += rounds(len(half))
                self.stages.append(("report", r, 1, half))
                r += 1
            assert r == self.total_rounds

    def _stage_at(self, r):
        for stage in self.stages:
            if stage[1] <= r < stage[1] + stage[2]:
                return stage, r - stage[1]
        return None, None

    def outbound(self, r):
        stage, local = self._stage_at(r)
        if stage is None:
            return []
        kind = stage[0]
        out = []
        if kind == "gc":
            if local == 0:
                self.gc = LockstepGC(self.members, self.pid, self.b)
                self.gc_grade = None
            out = self.gc.outbound(local)
        elif kind == "half":
            half = stage[3]
            if self.pid in half:
                if local == 0:
                    self.child = SyncMachine(self.pid, half, self.b)
                out = self.child.outbound(local)
        elif kind == "report":
            half = stage[3]
            if self.pid in half:
                v = self.child.decision() if self.child else self.b
                out = [(m, Payload("HALF-REPORT", value=v)) for m in self.members]
        self.messages_sent += len(out)
        return out

    def absorb(self, r, received):
        stage, local = self._stage_at(r)
        if stage is None:
            return
        received = sorted(received, key=_batch_key)
        kind = stage[0]
        if kind == "gc":
            self.gc.absorb(local, received)
            if local == GC_ROUNDS - 1:
                if self.gc.decision is not None:
                    v, g = self.gc.decision
                else:
                    v, g = self.b, 0   # timed out: keep current value, grade 0
                self.b = v
                self.gc_grade = g
        elif kind == "half":
            half = stage[3]
            if self.pid in half:
                self.child.absorb(local, received)
        elif kind == "report":
            half = stage[3]
            self.reports = {}
            for sender, payload in received:
                if payload.kind == "HALF-REPORT" and sender in half \
                        and sender not in self.reports:
                    self.reports[sender] = payload.value
            tally: dict = {}
            for v in self.reports.values():
                tally[v] = tally.get(v, 0) + 1
            if tally:
                best = min((v for v, c in tally.items()
                            if c == max(tally.values())),
                           key=lambda v: (v is BOT, v if v is not BOT else 0))
                if tally[best] > len(half) / 2 and self.gc_grade == 0 \
                        and best is not BOT:
                    self.b = best

    def decision(self):
        return self.b

    def state_digest(self):
        return (
            self.b,
            self.gc_grade,
            self.gc.state_digest() if self.gc else None,
            self.child.state_digest() if self.child else None,
        )


class RoundSimAdapter(Automaton):
    """Runs a lock-step round machine over the partially synchronous network.

    Per simulated round: send the machine's outbound messages tagged with the
    round parity, wait delta_sync, then feed back every buffered arrival whose
    parity matches. Sends stop silently once the cumulative inner-message bit
    count would exceed the cap.
    """

    def __init__(self, machine_factory, total_rounds, delta_sync, bit_cap,
                 value_width, parity_flip=False):
        super().__init__()
        self.machine_factory = machine_factory
        self.total_rounds = total_rounds
        self.delta_sync = delta_sync
        self.bit_cap = bit_cap
        self.value_width = value_width
        self.parity_flip = 1 if parity_flip else 0
        self.machine = None
        self.round = 0
        self.sent_bits = 0
        self.received: list = []     # (sender, parity, inner payload)
        self.absorbed_log: list = [] # per round: [(sender, inner payload)]
        self.digests: list = []      # machine digest after each absorbed round
        self.done = False
        self._timer = None

    def on_event(self, event):
        if isinstance(event, Request):
            if event.name in ("start", "propose"):
                return self._start(event.args[0])
            if event.name == "abandon":
                self.abandoned = True
                if self._timer is not None:
                    tid, self._timer = self._timer, None
                    return [CancelTimer(tid)]
            return []
        if isinstance(event, MessageArrival):
            p = event.payload
            if p.kind == "SYNC-ROUND" and not self.done:
                self.received.append((event.sender, p.parity, p.inner))
            return []
        # timer: close out the current round
        if self.machine is None or self.done or self.abandoned:
            return []
        return self._finish_round()

    def _start(self, proposal):
        if self.machine is not None or self.abandoned:
            return []
        self.machine = self.machine_factory(proposal)
        if self.total_rounds == 0:
            self.done = True
            return [Indicate("sync-done", (self._decision(),))]
        out = self._send_round()
        timer, self._timer = self.new_timer(self.delta_sync)
        return out + [timer]

    def _send_round(self):
        out = []
        parity = (self.round ^ self.parity_flip) & 1
        for dest, inner in self.machine.outbound(self.round):
            inner_bits = payload_bits(inner, "payload-only", self.value_width)
            if self.sent_bits + inner_bits > self.bit_cap:
                continue  # budget exhausted: suppress silently
            self.sent_bits += inner_bits
            out.append(Send(dest, Payload("SYNC-ROUND", parity=parity, inner=inner)))
        return out

    def _finish_round(self):
        want = (self.round ^ self.parity_flip) & 1
        current = [(s, inner) for s, par, inner in self.received if par == want]
        self.received = [(s, par, inner) for s, par, inner in self.received
                         if par != want]
        self.machine.absorb(self.round, current)
        self.absorbed_log.append(current)
        self.digests.append(self.machine.state_digest())
        self.round += 1
        if self.round >= self.total_rounds:
            self.done = True
            self._timer = None
            return [Indicate("sync-done", (self._decision(),))]
        out = self._send_round()
        timer, self._timer = self.new_timer(self.delta_sync)
        return out + [timer]

    def _decision(self):
        d = self.machine.decision()
        return BOT if d is None else d


def lockstep_run(machines: dict, total_rounds: int, inject=None):
    """Reference lock-step execution of round machines.

    machines: pid -> RoundMachine for the correct processes. inject maps
    (round, receiver_pid) -> [(sender, payload)] for Byzantine round inputs.
    Returns pid -> [digest per round].
    """
    inject = inject or {}
    digests = {pid: [] for pid in machines}
    for r in range(total_rounds):
        outs = {pid: m.outbound(r) for pid, m in machines.items()}
        inboxes = {pid: [] for pid in machines}
        for sender, batch in outs.items():
            for dest, payload in batch:
                if dest in inboxes:
                    inboxes[dest].append((sender, payload))
        for pid, m in machines.items():
            m.absorb(r, inboxes[pid] + list(inject.get((r, pid), ())))
            digests[pid].append(m.state_digest())
    return digests
