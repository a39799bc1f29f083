"""Batch experiment layer: scenario files, theorem checks over traces,
seed sweeps, and the lock-step equivalence oracle.

A scenario is a JSON object with a closed key set; unknown keys are a hard
error. The default check bundle evaluates agreement, strong validity,
external validity, the termination deadline, the view ceiling, per-view
START-VIEW budgets, post-halt silence, and the delivery-time envelope on
every run.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from fractions import Fraction

from .core import ValidityPredicate, valid
from .crux import CruxParams
from .oper import make_oper
from .simnet import (AdversarySpec, SimConfig, STRATEGY_KINDS, Trace,
                     latency, pbit_post_gst, run)
from .sync_ba import RoundSimAdapter, SyncMachine, budget, lockstep_run, rounds


class ScenarioError(ValueError):
    """Malformed scenario file (fails closed on anything unrecognized)."""


_SCENARIO_KEYS = {
    "n", "t", "delta", "gst", "seed", "seeds", "value_width", "accounting",
    "proposal", "proposals", "propose_at", "faulty", "strategies",
    "pre_gst_delay", "drift", "validity",
}

_DELAY_RULES = {"uniform", "max", "exact"}
_DRIFT_RULES = {"none", "uniform", "max"}


def load_scenario(path: str) -> dict:
    try:
        with open(path) as f:
            scn = json.load(f)
    except OSError as e:
        raise ScenarioError(f"cannot read scenario: {e}")
    except json.JSONDecodeError as e:
        raise ScenarioError(f"invalid JSON in {path}: {e}")
    if not isinstance(scn, dict):
        raise ScenarioError("scenario must be a JSON object")
    for key in scn:
        if key not in _SCENARIO_KEYS:
            raise ScenarioError(f"unknown scenario key {key!r}")
    for key in ("n", "delta"):
        if key not in scn:
            raise ScenarioError(f"missing required scenario key {key!r}")
    if "proposal" in scn and "proposals" in scn:
        raise ScenarioError("give either 'proposal' or 'proposals', not both")
    for spec in scn.get("strategies", {}).values():
        if not isinstance(spec, list) or not spec or spec[0] not in STRATEGY_KINDS:
            raise ScenarioError(f"bad strategy spec {spec!r}")
    for name, allowed in (("pre_gst_delay", _DELAY_RULES),
                          ("drift", _DRIFT_RULES)):
        rule = scn.get(name)
        if rule is not None and (not isinstance(rule, list) or not rule
                                 or rule[0] not in allowed):
            raise ScenarioError(f"bad {name} rule {rule!r}")
    v = scn.get("validity")
    if v is not None:
        _build_validity(v)  # raises on malformed input
    return scn


def _build_validity(spec) -> ValidityPredicate:
    if spec is None:
        return ValidityPredicate.always_true()
    if not isinstance(spec, dict):
        raise ScenarioError(f"bad validity spec {spec!r}")
    kind = spec.get("kind")
    if kind == "always-true":
        return ValidityPredicate.always_true()
    if kind == "membership":
        return ValidityPredicate.membership(spec["members"])
    if kind == "modulo":
        return ValidityPredicate.modulo(spec["divisor"], spec["residue"])
    raise ScenarioError(f"unknown validity kind {kind!r}")


def _int_key_map(m) -> dict:
    return {int(k): v for k, v in (m or {}).items()}


def scenario_config(scn: dict, seed=None, accounting=None) -> SimConfig:
    n = scn["n"]
    t = scn.get("t", (n - 1) // 3)
    proposals = _int_key_map(scn.get("proposals"))
    if "proposal" in scn:
        proposals = {p: scn["proposal"] for p in range(n)}
    try:
        return SimConfig(
            n=n, t=t,
            faulty=frozenset(scn.get("faulty", ())),
            delta=scn["delta"],
            gst=scn.get("gst", 0),
            seed=scn.get("seed", 0) if seed is None else seed,
            accounting=accounting or scn.get("accounting", "payload-only"),
            value_width=scn.get("value_width", 32),
            validity=_build_validity(scn.get("validity")),
            proposals=proposals,
            propose_at=_int_key_map(scn.get("propose_at")),
        )
    except ValueError as e:
        raise ScenarioError(str(e))


def scenario_adversary(scn: dict) -> AdversarySpec:
    return AdversarySpec(
        pre_gst_delay=tuple(scn.get("pre_gst_delay", ["uniform"])),
        drift=tuple(scn.get("drift", ["none"])),
        strategies={int(k): tuple(v)
                    for k, v in scn.get("strategies", {}).items()},
    )


# -- full-protocol runs -----------------------------------------------------


def oper_params(config: SimConfig) -> CruxParams:
    return CruxParams(n=config.n, t=config.t, delta=config.delta,
                      delta_shift=2 * config.delta,
                      value_width=config.value_width)


def max_virtual_time(config: SimConfig) -> int:
    env = os.environ.get("OPERLAB_MAXTIME")
    if env:
        return int(env)
    return config.gst + 100 * oper_params(config).delta_total


def run_oper(config: SimConfig, adversary: AdversarySpec,
             collect_rows=False) -> Trace:
    def factory(pid):
        return make_oper(config.n, config.t, config.delta, pid,
                         value_width=config.value_width, pred=config.validity)
    return run(config, adversary, factory,
               max_time=max_virtual_time(config), collect_rows=collect_rows)


# -- theorem checks ---------------------------------------------------------


def first_entry_times(trace: Trace) -> dict:
    """view -> earliest time any correct process entered it."""
    out: dict = {}
    for (time, pid, view) in trace.enters:
        if pid in trace.config.faulty:
            continue
        if view not in out or time < out[view]:
            out[view] = time
    return out


def final_view(trace: Trace):
    """Smallest view first entered at or after GST, with its entry time.

    When every entry precedes GST, the view in progress spans GST and its
    synchronized portion starts there, so the deadline clock is GST itself.
    """
    entries = first_entry_times(trace)
    if not entries:
        return None
    post = [v for v, tm in entries.items() if tm >= trace.config.gst]
    if not post:
        return max(entries), trace.config.gst
    v = min(post)
    return v, entries[v]


def check_trace(trace: Trace, params: CruxParams) -> list:
    """Default theorem bundle; returns human-readable violation strings."""
    cfg = trace.config
    out = []
    decided = {p: trace.decisions[p] for p in cfg.correct
               if p in trace.decisions}
    if trace.timed_out or len(decided) < len(cfg.correct):
        missing = sorted(set(cfg.correct) - set(decided))
        out.append(f"termination: NON-TERMINATED, undecided {missing}")
    values = sorted({v for (v, _) in decided.values()},
                    key=lambda x: (x is None, repr(x)))
    if len(values) > 1:
        out.append(f"agreement: distinct decisions {values}")
    proposals = {cfg.proposals.get(p, 0) for p in cfg.correct}
    if len(proposals) == 1 and values:
        (unanimous,) = proposals
        if values != [unanimous]:
            out.append(f"strong-validity: proposed {unanimous}, "
                       f"decided {values}")
    for v in values:
        if not valid(cfg.validity, v):
            out.append(f"external-validity: decided invalid {v!r}")
    fv = final_view(trace)
    if fv is not None and len(decided) == len(cfg.correct):
        view, tau = fv
        deadline = tau + params.delta_total + 2 * cfg.delta
        for p, (_, tm) in sorted(decided.items()):
            if tm > deadline:
                out.append(f"termination-deadline: process {p} decided at "
                           f"{tm} > {deadline} (V_final={view}, tau={tau})")
        ceiling = view + 1
        worst = max((v for (_, p, v) in trace.enters
                     if p not in cfg.faulty), default=0)
        if worst > ceiling:
            out.append(f"view-ceiling: entered view {worst} > "
                       f"V_final+1 = {ceiling}")
    for (pid, view), count in sorted(trace.sv_counts.items()):
        if count > 2:
            out.append(f"start-view-count: process {pid} broadcast "
                       f"START-VIEW({view}) {count} times")
    if trace.sends_after_halt:
        out.append(f"post-halt-silence: {trace.sends_after_halt} sends "
                   f"after halt")
    if trace.envelope_violations:
        out.append(f"delivery-bound: {trace.envelope_violations} envelopes "
                   f"outside max(send, GST) + delta")
    return out


@dataclass
class RunReport:
    config: SimConfig
    trace: Trace
    violations: list = field(default_factory=list)


def run_and_check(config: SimConfig, adversary: AdversarySpec,
                  collect_rows=False) -> RunReport:
    trace = run_oper(config, adversary, collect_rows=collect_rows)
    return RunReport(config, trace, check_trace(trace, oper_params(config)))


# -- complexity sweep -------------------------------------------------------


def sweep(scn: dict, n_list, seeds: int):
    """Per-n complexity table rows: (n, t, pbit_max, ratio)."""
    rows = []
    if seeds <= 0:
        return rows
    base_seed = scn.get("seed", 0)
    for n in n_list:
        t = (n - 1) // 3
        faulty = list(range(n - t, n))
        kinds = [list(v) for v in scn.get("strategies", {}).values()] \
            or [["delayer"], ["equivocate"], ["silent"]]
        sub = dict(scn)
        sub["n"] = n
        sub["t"] = t
        sub["faulty"] = faulty
        sub["strategies"] = {str(p): kinds[i % len(kinds)]
                             for i, p in enumerate(faulty)}
        sub.pop("proposals", None)
        sub.setdefault("proposal", 7)
        pbit_max = 0
        for k in range(seeds):
            config = scenario_config(sub, seed=base_seed + k)
            report = run_and_check(config, scenario_adversary(sub))
            pbit_max = max(pbit_max, *(pbit_post_gst(report.trace, p)
                                       for p in config.correct))
        width = scn.get("value_width", 32)
        ratio = Fraction(pbit_max, n * (8 + width))
        rows.append((n, t, pbit_max, ratio))
    return rows


# -- lock-step equivalence oracle -------------------------------------------


def oracle_sim(scn: dict, seed=None, parity_flip_pid=None):
    """Compare one adapter-simulated run against the lock-step reference.

    Returns (ok, detail). With parity_flip_pid set, that process's adapter
    mis-tags its round parity -- the negative control, expected to diverge.
    """
    config = scenario_config(scn, seed=seed)
    adversary = scenario_adversary(scn)
    starts = [config.propose_at.get(p, 0) for p in config.correct]
    for p in config.correct:
        at = config.propose_at.get(p, 0)
        if at < config.gst:
            raise ScenarioError(
                f"oracle scenario: process {p} starts at {at} before GST")
    if starts and max(starts) - min(starts) > 2 * config.delta:
        raise ScenarioError("oracle scenario: start spread exceeds 2*delta")

    members = list(range(config.n))
    total = rounds(config.n)
    cap = 2 * budget(config.n, config.value_width)
    delta_sync = 3 * config.delta  # delta_shift = 2*delta plus delta
    adapters: dict = {}

    def factory(pid):
        def machine_factory(proposal):
            return SyncMachine(pid, members, proposal)
        a = RoundSimAdapter(machine_factory, total, delta_sync, cap,
                            config.value_width,
                            parity_flip=(pid == parity_flip_pid))
        adapters[pid] = a
        return a

    trace = run(config, adversary, factory,
                max_time=max(starts, default=0) + (total + 2) * delta_sync
                + config.gst)

    # reference: identical machines in perfect lock-step, with the Byzantine
    # round inputs observed by each correct process injected verbatim
    inject: dict = {}
    for pid in config.correct:
        for r, batch in enumerate(adapters[pid].absorbed_log):
            bad = [(s, p) for (s, p) in batch if s in config.faulty]
            if bad:
                inject[(r, pid)] = bad
    machines = {pid: SyncMachine(pid, members, config.proposals.get(pid, 0))
                for pid in config.correct}
    ref = lockstep_run(machines, total, inject=inject)

    for pid in config.correct:
        got = adapters[pid].digests
        want = ref[pid]
        if len(got) != len(want):
            return False, (f"process {pid}: {len(got)} simulated rounds vs "
                           f"{len(want)} reference rounds")
        for r, (g, w) in enumerate(zip(got, want)):
            if g != w:
                return False, f"process {pid}: state diverges at round {r}"
    _ = trace
    return True, f"{len(config.correct)} processes, {total} rounds bit-exact"
