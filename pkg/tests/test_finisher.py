from operlab.core import BOT, Payload
from operlab.finisher import Finisher
from operlab.runtime import Broadcast, Indicate, MessageArrival, Request


def finish_msg(sender, value):
    return MessageArrival(sender, Payload("FINISH", value=value))


def test_to_finish_broadcasts_once():
    f = Finisher(4, 1)
    out = f.step(Request("to_finish", (7,)))
    assert out == [Broadcast(Payload("FINISH", value=7))]
    assert f.step(Request("to_finish", (9,))) == []


def test_quorum_triggers_finish():
    f = Finisher(4, 1)
    f.step(Request("to_finish", (7,)))
    out = []
    for s in (1, 2, 3):
        out += f.step(finish_msg(s, 7))
    assert Indicate("finish", (7,)) in out


def test_adopt_and_rebroadcast_without_own_start():
    f = Finisher(4, 1)
    out = []
    out += f.step(finish_msg(1, 7))
    assert out == []
    out += f.step(finish_msg(2, 7))   # t+1 support: adopt
    assert Broadcast(Payload("FINISH", value=7)) in out
    out = f.step(finish_msg(3, 7))    # 2t+1: finish
    assert Indicate("finish", (7,)) in out


def test_finishes_at_most_once():
    f = Finisher(4, 1)
    f.step(Request("to_finish", (7,)))
    finishes = []
    for s in (0, 1, 2, 3):
        finishes += [a for a in f.step(finish_msg(s, 7))
                     if isinstance(a, Indicate)]
    assert len(finishes) == 1


def test_bot_finish_ignored():
    f = Finisher(4, 1)
    for s in (0, 1, 2, 3):
        assert f.step(finish_msg(s, BOT)) == []


def test_abandon_mutes():
    f = Finisher(4, 1)
    f.step(Request("abandon"))
    assert f.step(Request("to_finish", (7,))) == []
    out = []
    for s in (0, 1, 2, 3):
        out += f.step(finish_msg(s, 7))
    assert out == []
