"""Shared protocol vocabulary: values, validity predicates, payloads, bit accounting.

Values are plain ints constrained to a configurable bit width L (default 32).
The distinguished "no value" symbol used by the reducer and the echo cascades
is the module-level sentinel BOT, which is never a member of the value domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

DEFAULT_VALUE_WIDTH = 32

# Widths used by the "full" accounting policy for fields that the default
# ("payload-only") policy excludes.
KIND_TAG_BITS = 8
VIEW_FIELD_BITS = 16
PATH_SEGMENT_BITS = 16


class _Bot:
    """Singleton sentinel for the out-of-band default symbol (not a Value)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "BOT"


BOT = _Bot()


def value_sort_key(v):
    """Deterministic ordering over Value ∪ {BOT}; BOT sorts last."""
    if v is BOT:
        return (1, 0)
    return (0, v)


class PayloadError(ValueError):
    """Raised when decoding a malformed payload byte string."""


# Message kinds. ECHO..ECHO5 serve both the graded-consensus cascade and the
# reducer / validation broadcast (instance paths disambiguate).
KINDS = (
    "INIT",
    "ECHO",
    "ECHO2",
    "ECHO3",
    "ECHO4",
    "ECHO5",
    "START-VIEW",
    "FINISH",
    "SYNC-ROUND",
    "HALF-REPORT",
)
_KIND_INDEX = {k: i for i, k in enumerate(KINDS)}

# Which optional fields each kind carries.
_VALUE_KINDS = frozenset(
    {"INIT", "ECHO", "ECHO2", "ECHO3", "ECHO4", "ECHO5", "FINISH", "HALF-REPORT"}
)
_VIEW_KINDS = frozenset({"START-VIEW"})


@dataclass(frozen=True)
class Payload:
    """A typed wire message. `value` may be an int, BOT, or None (absent)."""

    kind: str
    value: object = None
    view: int | None = None
    parity: int | None = None
    inner: "Payload | None" = None

    def __post_init__(self):
        if self.kind not in _KIND_INDEX:
            raise PayloadError(f"unknown payload kind {self.kind!r}")
        if self.kind == "SYNC-ROUND":
            if self.parity not in (0, 1) or self.inner is None:
                raise PayloadError("SYNC-ROUND needs a parity bit and an inner payload")
        elif self.kind in _VIEW_KINDS:
            if self.view is None or self.view < 1:
                raise PayloadError(f"{self.kind} needs a view >= 1")
        elif self.kind in _VALUE_KINDS:
            if self.value is None:
                raise PayloadError(f"{self.kind} needs a value (or BOT)")


@dataclass(frozen=True)
class ValidityPredicate:
    """Pure predicate over values: always-true, membership, or modulo."""

    kind: str = "always-true"
    members: frozenset = field(default_factory=frozenset)
    divisor: int = 0
    residue: int = 0

    @classmethod
    def always_true(cls):
        return cls("always-true")

    @classmethod
    def membership(cls, values):
        return cls("membership", members=frozenset(values))

    @classmethod
    def modulo(cls, divisor, residue):
        return cls("modulo", divisor=divisor, residue=residue)

    def check(self, v) -> bool:
        if self.kind == "always-true":
            return True
        if self.kind == "membership":
            return v in self.members
        if self.kind == "modulo":
            return v % self.divisor == self.residue
        raise ValueError(f"unknown predicate kind {self.kind!r}")


def valid(pred: ValidityPredicate, v) -> bool:
    return pred.check(v)


def payload_bits(p: Payload, policy: str = "payload-only",
                 value_width: int = DEFAULT_VALUE_WIDTH) -> int:
    """Declared-width bit size of a payload.

    payload-only: 8-bit kind tag + value fields at L bits + parity bits;
    view numbers excluded. full: view numbers also counted, at 16 bits.
    """
    if policy not in ("payload-only", "full"):
        raise ValueError(f"unknown accounting policy {policy!r}")
    bits = KIND_TAG_BITS
    if p.value is not None:
        bits += value_width  # BOT occupies the same declared field width
    if p.parity is not None:
        bits += 1
    if p.inner is not None:
        bits += payload_bits(p.inner, policy, value_width)
    if p.view is not None and policy == "full":
        bits += VIEW_FIELD_BITS
    return bits


def path_bits(path: tuple, policy: str) -> int:
    """Routing-header charge; zero under the default policy."""
    if policy == "full":
        return PATH_SEGMENT_BITS * len(path)
    return 0


# -- canonical byte encoding ------------------------------------------------

_VALUE_ABSENT, _VALUE_PRESENT, _VALUE_BOT = 0, 1, 2


def _value_bytes(value_width: int) -> int:
    return (value_width + 7) // 8


def encode(p: Payload, value_width: int = DEFAULT_VALUE_WIDTH) -> bytes:
    out = bytearray()
    out.append(_KIND_INDEX[p.kind])
    if p.value is None:
        out.append(_VALUE_ABSENT)
    elif p.value is BOT:
        out.append(_VALUE_BOT)
    else:
        out.append(_VALUE_PRESENT)
        out += int(p.value).to_bytes(_value_bytes(value_width), "big")
    if p.view is not None:
        out.append(1)
        out += p.view.to_bytes(4, "big")
    else:
        out.append(0)
    if p.parity is not None:
        out.append(1)
        out.append(p.parity)
    else:
        out.append(0)
    if p.inner is not None:
        out.append(1)
        out += encode(p.inner, value_width)
    else:
        out.append(0)
    return bytes(out)


def decode(data: bytes, value_width: int = DEFAULT_VALUE_WIDTH) -> Payload:
    p, rest = _decode_prefix(data, value_width)
    if rest:
        raise PayloadError(f"{len(rest)} trailing bytes after payload")
    return p


def _decode_prefix(data: bytes, value_width: int):
    if len(data) < 1:
        raise PayloadError("empty payload")
    kind_idx = data[0]
    if kind_idx >= len(KINDS):
        raise PayloadError(f"unknown kind byte {kind_idx}")
    kind = KINDS[kind_idx]
    pos = 1

    def take(k):
        nonlocal pos
        if pos + k > len(data):
            raise PayloadError("truncated payload")
        chunk = data[pos:pos + k]
        pos += k
        return chunk

    flag = take(1)[0]
    if flag == _VALUE_ABSENT:
        value = None
    elif flag == _VALUE_BOT:
        value = BOT
    elif flag == _VALUE_PRESENT:
        value = int.from_bytes(take(_value_bytes(value_width)), "big")
    else:
        raise PayloadError(f"bad value flag {flag}")
    view = None
    if take(1)[0]:
        view = int.from_bytes(take(4), "big")
    parity = None
    if take(1)[0]:
        parity = take(1)[0]
        if parity not in (0, 1):
            raise PayloadError(f"bad parity byte {parity}")
    inner = None
    if take(1)[0]:
        inner, tail = _decode_prefix(data[pos:], value_width)
        pos = len(data) - len(tail)
    try:
        return Payload(kind, value=value, view=view, parity=parity, inner=inner), data[pos:]
    except PayloadError:
        raise
