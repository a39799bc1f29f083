import random

from hypothesis import given, settings, strategies as st

from operlab.core import BOT, Payload
from operlab.graded_consensus import GradedConsensus, map_decision
from operlab.runtime import Broadcast, Indicate, MessageArrival, Request

from lockstep import lockstep_network


def run_network(n, t, proposals, byzantine=None, seed=0):
    """Fully exchange messages among n-|byzantine| correct cascades.

    byzantine: {pid: fn(rng) -> [(dest, Payload)]} invoked once per round.
    Returns ({pid: module decision}, {pid: raw cascade outcome}).
    """
    byzantine = byzantine or {}
    rng = random.Random(seed)
    autos = {p: GradedConsensus(n, t) for p in range(n) if p not in byzantine}
    pending = []
    for p, a in autos.items():
        for act in a.step(Request("propose", (proposals[p],))):
            if isinstance(act, Broadcast):
                pending.append((p, act.payload))
    decisions = {}
    for _ in range(40):
        if not pending and not byzantine:
            break
        batch, pending = pending, []
        for bp, fn in byzantine.items():
            for dest, payload in fn(rng):
                if dest in autos:
                    for act in autos[dest].step(MessageArrival(bp, payload)):
                        if isinstance(act, Broadcast):
                            pending.append((dest, act.payload))
                        elif isinstance(act, Indicate):
                            decisions[dest] = act.args
        rng.shuffle(batch)
        for sender, payload in batch:
            for p, a in autos.items():
                for act in a.step(MessageArrival(sender, payload)):
                    if isinstance(act, Broadcast):
                        pending.append((p, act.payload))
                    elif isinstance(act, Indicate):
                        decisions[p] = act.args
        if not pending:
            break
    raw = {p: a.gbca_outcome for p, a in autos.items()}
    return decisions, raw


def test_unanimous_gives_grade_one():
    decisions, raw = run_network(4, 1, {p: 7 for p in range(4)})
    assert decisions == {p: (7, 1) for p in range(4)}
    assert raw == {p: (7, 2) for p in range(4)}


def test_dispersed_inputs_terminate():
    decisions, _ = run_network(7, 2, {p: p + 1 for p in range(7)})
    assert set(decisions) == set(range(7))
    grades = {g for (_, g) in decisions.values()}
    assert grades <= {0, 1}


def test_majority_value_wins():
    decisions, _ = run_network(4, 1, {0: 5, 1: 5, 2: 5, 3: 9})
    values = {v for (v, _) in decisions.values()}
    assert 9 not in values


def test_duplicate_stage_messages_ignored():
    gc = GradedConsensus(4, 1)
    gc.step(Request("propose", (7,)))
    gc.step(MessageArrival(1, Payload("ECHO3", value=7)))
    gc.step(MessageArrival(1, Payload("ECHO3", value=9)))
    assert len(gc.senders[3]) == 1
    assert 9 not in gc.counts[3]


def test_stage_one_counts_per_sender_value_pair():
    gc = GradedConsensus(4, 1)
    gc.step(Request("propose", (7,)))
    gc.step(MessageArrival(1, Payload("ECHO", value=5)))
    gc.step(MessageArrival(1, Payload("ECHO", value=5)))
    gc.step(MessageArrival(1, Payload("ECHO", value=6)))
    assert len(gc.counts[1][5]) == 1
    assert len(gc.counts[1][6]) == 1


def test_map_decision_table():
    assert map_decision((7, 2), own=5) == (7, 1)
    assert map_decision((7, 1), own=5) == (7, 0)
    assert map_decision((BOT, 0), own=5) == (5, 0)
    assert map_decision((BOT, 0), own=None) is None


def test_propose_twice_ignored():
    gc = GradedConsensus(4, 1)
    first = gc.step(Request("propose", (7,)))
    assert first == [Broadcast(Payload("ECHO", value=7))]
    assert gc.step(Request("propose", (9,))) == []


def test_abandon_mutes_but_retains_state():
    gc = GradedConsensus(4, 1)
    gc.step(Request("propose", (7,)))
    gc.step(Request("abandon"))
    out = []
    for s in (1, 2, 3):
        out += gc.step(MessageArrival(s, Payload("ECHO", value=7)))
    assert out == []
    assert 7 in gc.approved   # state still tracked


def _equivocator(values):
    def fn(rng):
        out = []
        for dest in range(4):
            kind = rng.choice(["ECHO", "ECHO2", "ECHO3", "ECHO4", "ECHO5"])
            out.append((dest, Payload(kind, value=rng.choice(values))))
        return out
    return fn


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(min_value=1, max_value=3), min_size=3, max_size=3),
       st.integers(min_value=0, max_value=10_000))
def test_consistency_under_byzantine_noise(props, seed):
    proposals = {p: props[p] for p in range(3)}
    decisions, raw = run_network(
        4, 1, proposals, byzantine={3: _equivocator([1, 2, 3, 9])}, seed=seed)
    assert set(decisions) == {0, 1, 2}, "all correct must decide"
    # a grade-1 decision forces every decision to that value and rules
    # out any bottom outcome among correct processes
    strong = {v for (v, g) in decisions.values() if g == 1}
    assert len(strong) <= 1
    if strong:
        assert {v for (v, _) in decisions.values()} == strong
        assert all(o != (BOT, 0) for o in raw.values())
    # decided values were proposed by correct processes
    for v, g in decisions.values():
        assert v in proposals.values()


def test_lockstep_latency_within_seven_rounds():
    for proposals in ({p: 7 for p in range(4)},
                      {0: 5, 1: 5, 2: 9, 3: 9},
                      {p: p + 1 for p in range(4)}):
        autos = {p: GradedConsensus(4, 1) for p in range(4)}
        starts = [(p, Request("propose", (proposals[p],))) for p in range(4)]
        inds = lockstep_network(autos, starts, max_rounds=10)
        for p, events in inds.items():
            rounds_to_decide = [r for (r, name, _) in events
                                if name == "decide"]
            assert rounds_to_decide and rounds_to_decide[0] <= 7
