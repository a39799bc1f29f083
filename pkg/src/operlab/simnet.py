"""Deterministic discrete-event simulator of the partially synchronous model.

Virtual time is integer ticks. Messages sent at time s are delivered by
max(s, gst) + delta; timers set at s >= gst fire at exactly s + d, while
timers set before gst may drift anywhere in (s, max(s, gst) + d]. The
adversary picks delivery times and drift within those envelopes, and drives
the faulty processes through pluggable strategies. One run is a pure
function of (config, adversary, seed).
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction

from .core import (BOT, DEFAULT_VALUE_WIDTH, Payload, ValidityPredicate,
                   path_bits, payload_bits, valid)
from .runtime import (Automaton, Broadcast, CancelTimer, Halt, Indicate,
                      MessageArrival, Request, Send, SetTimer, TimerFired)


@dataclass(frozen=True)
class SimConfig:
    n: int
    t: int
    faulty: frozenset = frozenset()
    delta: int = 10
    gst: int = 0
    seed: int = 0
    accounting: str = "payload-only"
    value_width: int = DEFAULT_VALUE_WIDTH
    validity: ValidityPredicate = field(default_factory=ValidityPredicate.always_true)
    proposals: dict = field(default_factory=dict)
    propose_at: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 3 * self.t + 1:
            raise ValueError("need n >= 3t + 1")
        if len(self.faulty) > self.t:
            raise ValueError("more faulty processes than the fault budget")
        if self.delta <= 0:
            raise ValueError("delta must be a positive tick count")
        if self.gst < 0:
            raise ValueError("gst must be >= 0")
        if self.accounting not in ("payload-only", "full"):
            raise ValueError(f"unknown accounting policy {self.accounting!r}")
        for pid, v in self.proposals.items():
            if pid not in self.faulty and not valid(self.validity, v):
                raise ValueError(f"correct process {pid} proposes invalid {v!r}")

    @property
    def correct(self):
        return [p for p in range(self.n) if p not in self.faulty]


@dataclass(frozen=True)
class AdversarySpec:
    pre_gst_delay: tuple = ("uniform",)   # ("uniform",) | ("max",) | ("exact", d)
    drift: tuple = ("none",)              # ("none",) | ("uniform",) | ("max",)
    strategies: dict = field(default_factory=dict)  # pid -> strategy spec tuple


def schedule_delivery(now, gst, delta, rule, rng):
    """Delivery time for a message sent at `now`, within the model envelope."""
    bound = max(now, gst) + delta
    kind = rule[0]
    if kind == "max":
        raw = bound
    elif kind == "exact":
        raw = now + rule[1]
    elif kind == "uniform":
        raw = now if now >= gst else rng.randint(now, bound)
        if now >= gst:
            raw = now + rng.randint(0, delta)
    else:
        raise ValueError(f"unknown delay rule {kind!r}")
    return min(max(raw, now), bound)


def schedule_timer(now, gst, d, rule, rng):
    """Fire time for a timer of duration d set at `now`."""
    if now >= gst:
        return now + d
    bound = max(now, gst) + d
    kind = rule[0]
    if kind == "none":
        raw = now + d
    elif kind == "max":
        raw = bound
    elif kind == "uniform":
        raw = rng.randint(now + 1, bound)
    else:
        raise ValueError(f"unknown drift rule {kind!r}")
    return min(max(raw, now + 1), bound)


# -- Byzantine strategies ---------------------------------------------------


class Strategy(Automaton):
    """Driver for a faulty process. The simulator sets `now` and `rng`
    before each step; subclasses rewrite the wrapped automaton's actions."""

    delay_outputs = False

    def __init__(self, inner=None):
        super().__init__()
        self.inner = inner
        self.now = 0
        self.rng = None

    def on_event(self, event):
        if self.inner is None:
            return []
        return self.rewrite(self.inner.step(event))

    def rewrite(self, actions):
        return actions


class SilentStrategy(Strategy):
    def on_event(self, event):
        return []


class CrashStrategy(Strategy):
    def __init__(self, inner, at):
        super().__init__(inner)
        self.at = at

    def rewrite(self, actions):
        if self.now >= self.at:
            return [a for a in actions
                    if not isinstance(a, (Send, Broadcast, Indicate))]
        return actions


class EquivocateStrategy(Strategy):
    """Splits every value-carrying broadcast by receiver parity."""

    def __init__(self, inner, n, value_width):
        super().__init__(inner)
        self.n = n
        self.mask = (1 << value_width) - 1

    def rewrite(self, actions):
        out = []
        for a in actions:
            if isinstance(a, Broadcast) and isinstance(a.payload.value, int):
                alt = replace(a.payload, value=(a.payload.value + 1) & self.mask)
                for dest in range(self.n):
                    out.append(Send(dest, a.payload if dest % 2 == 0 else alt,
                                    a.path))
            else:
                out.append(a)
        return out


class DelayerStrategy(Strategy):
    """Behaves correctly but its messages always take the maximal delay."""

    delay_outputs = True


class FloodStrategy(Strategy):
    """Broadcasts random well-formed payloads every `interval` ticks pre-GST."""

    def __init__(self, inner, n, gst, interval, value_width):
        super().__init__(inner)
        self.gst = gst
        self.interval = max(1, interval)
        self.max_value = (1 << value_width) - 1

    def on_event(self, event):
        actions = list(self.inner.step(event)) if self.inner else []
        if isinstance(event, TimerFired) and event.timer_id == ("flood",):
            actions = actions + self._flood()
        if isinstance(event, Request) and event.name == "propose":
            actions = actions + [SetTimer(self.interval, ("flood",))]
        return self.rewrite(actions)

    def _flood(self):
        if self.now >= self.gst:
            return []
        kind = self.rng.choice(("INIT", "ECHO", "ECHO3", "FINISH"))
        value = self.rng.randint(0, self.max_value)
        return [Broadcast(Payload(kind, value=value),
                          path=self.rng.choice(((), ("fin",)))),
                SetTimer(self.interval, ("flood",))]


class RandomStrategy(Strategy):
    """Keeps, drops, duplicates, or value-mutates each outgoing action."""

    def __init__(self, inner, value_width):
        super().__init__(inner)
        self.mask = (1 << value_width) - 1

    def rewrite(self, actions):
        out = []
        for a in actions:
            if not isinstance(a, (Send, Broadcast)):
                out.append(a)
                continue
            roll = self.rng.random()
            if roll < 0.2:
                continue  # drop
            if roll < 0.3 and isinstance(a.payload.value, int):
                mutated = replace(a.payload,
                                  value=self.rng.randint(0, self.mask))
                a = replace(a, payload=mutated)
            out.append(a)
            if roll > 0.9:
                out.append(a)  # duplicate
        return out


STRATEGY_KINDS = ("silent", "crash", "equivocate", "delayer", "flood", "random")


def make_strategy(spec, inner, config):
    kind = spec[0]
    if kind == "silent":
        return SilentStrategy()
    if kind == "crash":
        return CrashStrategy(inner, at=spec[1])
    if kind == "equivocate":
        return EquivocateStrategy(inner, config.n, config.value_width)
    if kind == "delayer":
        return DelayerStrategy(inner)
    if kind == "flood":
        interval = spec[1] if len(spec) > 1 else config.delta
        return FloodStrategy(inner, config.n, config.gst, interval,
                             config.value_width)
    if kind == "random":
        return RandomStrategy(inner, config.value_width)
    raise ValueError(f"unknown strategy kind {kind!r}")


# -- trace ------------------------------------------------------------------


@dataclass
class Trace:
    config: SimConfig
    rows: list = field(default_factory=list)   # (time, pid, kind, path, pkind, bits)
    decisions: dict = field(default_factory=dict)      # pid -> (value, time)
    enters: list = field(default_factory=list)         # (time, pid, view)
    indications: list = field(default_factory=list)    # (time, pid, name, args)
    sv_counts: dict = field(default_factory=dict)      # (pid, view) -> broadcasts
    pbit: dict = field(default_factory=dict)           # pid -> bits sent >= gst
    envelope_violations: int = 0
    sends_after_halt: int = 0
    timed_out: bool = False
    end_time: int = 0

    @property
    def terminated(self) -> bool:
        return not self.timed_out

    def views_entered(self, pid):
        return [v for (_, p, v) in self.enters if p == pid]


def pbit_post_gst(trace: Trace, pid: int) -> int:
    return trace.pbit.get(pid, 0)


def latency(trace: Trace) -> Fraction:
    times = [t for (_, t) in
             (trace.decisions[p] for p in trace.config.correct
              if p in trace.decisions)]
    if len(times) < len(trace.config.correct):
        raise ValueError("latency undefined: NON-TERMINATED trace")
    return max(Fraction(max(times) - trace.config.gst, trace.config.delta),
               Fraction(0))


# -- event loop -------------------------------------------------------------


def default_max_time(config: SimConfig, delta_total=None) -> int:
    if delta_total is None:
        delta_total = 100 * config.delta
    return config.gst + 100 * delta_total


def run(config: SimConfig, adversary: AdversarySpec, root_factory,
        max_time=None, collect_rows=False) -> Trace:
    """Execute one deterministic simulation.

    root_factory(pid) builds the protocol automaton for each process; faulty
    processes get theirs wrapped in (or replaced by) their strategy.
    """
    if max_time is None:
        max_time = default_max_time(config)
    rng = random.Random(config.seed)
    trace = Trace(config)

    autos = {}
    for pid in range(config.n):
        inner = root_factory(pid)
        if pid in config.faulty:
            spec = adversary.strategies.get(pid, ("silent",))
            autos[pid] = make_strategy(spec, inner, config)
        else:
            autos[pid] = inner

    queue: list = []
    seq = 0
    active_timers: set = set()
    halted_sends: set = set()

    def push(fire_at, pid, event):
        nonlocal seq
        seq += 1
        heapq.heappush(queue, (fire_at, seq, pid, event))

    def log(now, pid, kind, path, pkind, bits):
        if collect_rows:
            trace.rows.append((now, pid, kind, path, pkind, bits))

    def absorb(now, pid, actions):
        auto = autos[pid]
        delay_all = getattr(auto, "delay_outputs", False)
        correct = pid not in config.faulty
        for a in actions:
            if isinstance(a, (Send, Broadcast)):
                if correct and auto.halted and pid in halted_sends:
                    trace.sends_after_halt += 1
                bits = payload_bits(a.payload, config.accounting,
                                    config.value_width) \
                    + path_bits(a.path, config.accounting)
                if isinstance(a, Broadcast):
                    dests = range(config.n)
                    total = bits * config.n
                    if correct and a.payload.kind == "START-VIEW":
                        key = (pid, a.payload.view)
                        trace.sv_counts[key] = trace.sv_counts.get(key, 0) + 1
                else:
                    dests = (a.to,)
                    total = bits
                if correct and now >= config.gst:
                    trace.pbit[pid] = trace.pbit.get(pid, 0) + total
                log(now, pid,
                    "broadcast" if isinstance(a, Broadcast) else "send",
                    a.path, a.payload.kind, total)
                for dest in dests:
                    if not 0 <= dest < config.n:
                        continue
                    if delay_all:
                        at = max(now, config.gst) + config.delta
                    else:
                        at = schedule_delivery(now, config.gst, config.delta,
                                               adversary.pre_gst_delay, rng)
                    if at > max(now, config.gst) + config.delta or at < now:
                        trace.envelope_violations += 1
                    push(at, dest, MessageArrival(pid, a.payload, a.path))
            elif isinstance(a, SetTimer):
                at = schedule_timer(now, config.gst, a.duration,
                                    adversary.drift, rng)
                active_timers.add((pid, a.timer_id))
                push(at, pid, TimerFired(a.timer_id))
            elif isinstance(a, CancelTimer):
                active_timers.discard((pid, a.timer_id))
            elif isinstance(a, Indicate):
                trace.indications.append((now, pid, a.name, a.args))
                log(now, pid, "indicate:" + a.name, (), "-", 0)
                if a.name == "decide" and pid not in trace.decisions:
                    trace.decisions[pid] = (a.args[0], now)
                elif a.name == "enter-view":
                    trace.enters.append((now, pid, a.args[0]))
            elif isinstance(a, Halt):
                halted_sends.add(pid)
                log(now, pid, "halt", (), "-", 0)

    # kick off every process with its proposal
    starts = sorted(range(config.n),
                    key=lambda p: (config.propose_at.get(p, 0), p))
    for pid in starts:
        at = config.propose_at.get(pid, 0)
        v = config.proposals.get(pid, 0)
        push(at, pid, Request("propose", (v,)))

    now = 0
    while queue:
        if all(autos[p].halted for p in config.correct):
            break
        fire_at, _, pid, event = heapq.heappop(queue)
        now = fire_at
        if now > max_time:
            trace.timed_out = any(p not in trace.decisions
                                  for p in config.correct)
            break
        if isinstance(event, TimerFired):
            if (pid, event.timer_id) not in active_timers:
                continue
            active_timers.discard((pid, event.timer_id))
            log(now, pid, "timer-fire", event.timer_id, "-", 0)
        elif isinstance(event, MessageArrival):
            log(now, pid, "deliver", event.path, event.payload.kind,
                payload_bits(event.payload, config.accounting,
                             config.value_width))
        auto = autos[pid]
        auto.now = now
        auto.rng = rng
        absorb(now, pid, auto.step(event))
    trace.end_time = now
    return trace


# -- exports ----------------------------------------------------------------


def trace_lines(trace: Trace):
    """Line-oriented export: time, process, event-kind, path, payload-kind, bits."""
    for (time, pid, kind, path, pkind, bits) in trace.rows:
        path_txt = "/".join(str(s) for s in path) or "-"
        yield f"{time}\t{pid}\t{kind}\t{path_txt}\t{pkind}\t{bits}"


CSV_HEADER = "seed,n,t,gst,delta,pbit_max,pbit_mean,latency,views_max,terminated"


def csv_row(trace: Trace) -> str:
    c = trace.config
    bits = [pbit_post_gst(trace, p) for p in c.correct]
    pbit_max = max(bits, default=0)
    pbit_mean = Fraction(sum(bits), len(bits)) if bits else Fraction(0)
    try:
        lat = latency(trace)
    except ValueError:
        lat = ""
    views_max = max((v for (_, _, v) in trace.enters), default=0)
    return ",".join(str(x) for x in (
        c.seed, c.n, c.t, c.gst, c.delta, pbit_max,
        float(pbit_mean), lat if lat == "" else float(lat),
        views_max, int(trace.terminated)))
