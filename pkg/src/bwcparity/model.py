"""Model layer: finite MDPs with a player partition, exact rational transition
probabilities, and two priority functions.

The document format is JSON:

    {"states": [{"id": "a", "owner": "P1", "p1": 1, "p2": 0}, ...],
     "edges": [["a", "b"], ...],
     "dist": {"b": {"a": "1/2", "c": "1/2"}},
     "init": "a"}

``dist`` entries are optional per stochastic state; omitted ones default to
the uniform distribution over successors.  Probabilities are exact fractions
written as "num/den" strings; no floating point is accepted anywhere.
Canonical serialization sorts states and edges by id and writes every
distribution explicitly.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

Rational = Fraction

P1 = "P1"
P2 = "P2"

_RAT_RE = re.compile(r"^(-?\d+)\s*/\s*(\d+)$")
_INT_RE = re.compile(r"^-?\d+$")


class ModelError(ValueError):
    """A model document or operation violates the MDP invariants."""


@dataclass(frozen=True)
class State:
    id: str
    owner: str
    p1: int
    p2: int


@dataclass(frozen=True)
class Diagnostic:
    code: str
    detail: str

    def __str__(self) -> str:
        return f"{self.code}: {self.detail}"


@dataclass(frozen=True)
class PriorityView:
    """A named priority function, addressed by state id.

    Ids survive sub-MDP restriction, so a view built on a model remains valid
    on any of its restrictions.
    """

    name: str
    mapping: Mapping[str, int]

    def __getitem__(self, state_id: str) -> int:
        return self.mapping[state_id]

    def of(self, state_id: str) -> int:
        return self.mapping[state_id]


def parse_rational(value) -> Fraction:
    """Parse an exact rational from "num/den" / integer text / int."""
    if isinstance(value, bool):
        raise ModelError(f"not a rational: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        s = value.strip()
        m = _RAT_RE.match(s)
        if m:
            num, den = int(m.group(1)), int(m.group(2))
            if den == 0:
                raise ModelError(f"zero denominator in {value!r}")
            return Fraction(num, den)
        if _INT_RE.match(s):
            return Fraction(int(s))
    raise ModelError(f"not a rational (use num/den, no decimals): {value!r}")


def format_rational(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


def max_priority_states(view: PriorityView, states: Iterable[str],
                        parity: str) -> frozenset[str]:
    """States of the set whose priority has the requested parity and exceeds
    every priority of the opposite parity in the set.

    ``parity`` is "even" or "odd".
    """
    states = list(states)
    want = 0 if parity == "even" else 1
    other = [view[s] for s in states if view[s] % 2 != want]
    bound = max(other) if other else -1
    return frozenset(s for s in states
                     if view[s] % 2 == want and view[s] > bound)


class Mdp:
    """Finite MDP: a non-blocking game graph with P1 (controllable) and P2
    (stochastic) states, exact distributions on P2 states, and per-state
    priorities p1 and p2.

    Immutable after construction.  States keep their construction order and
    are also addressed by dense integer indices in that order.
    """

    __slots__ = ("states", "index", "succ", "pred", "dist", "init", "n")

    def __init__(self, states, edges, dist=None, init=None):
        sts = []
        for s in states:
            if isinstance(s, State):
                sts.append(s)
            else:
                sid, owner, p1, p2 = s
                sts.append(State(str(sid), owner, int(p1), int(p2)))
        self.states = tuple(sts)
        self.n = len(sts)
        if self.n == 0:
            raise ModelError("model has no states")
        self.index = {s.id: i for i, s in enumerate(sts)}
        if len(self.index) != self.n:
            seen = set()
            for s in sts:
                if s.id in seen:
                    raise ModelError(f"duplicate state id {s.id!r}")
                seen.add(s.id)
        for s in sts:
            if s.owner not in (P1, P2):
                raise ModelError(f"state {s.id!r}: bad owner {s.owner!r}")
            if s.p1 < 0 or s.p2 < 0:
                raise ModelError(f"state {s.id!r}: negative priority")

        succ: list[list[int]] = [[] for _ in range(self.n)]
        seen_edges = set()
        for a, b in edges:
            if a not in self.index or b not in self.index:
                raise ModelError(f"edge ({a!r}, {b!r}) uses unknown state")
            e = (self.index[a], self.index[b])
            if e in seen_edges:
                raise ModelError(f"duplicate edge ({a!r}, {b!r})")
            seen_edges.add(e)
            succ[e[0]].append(e[1])
        self.succ = tuple(tuple(v) for v in succ)
        pred: list[list[int]] = [[] for _ in range(self.n)]
        for i, vs in enumerate(self.succ):
            for j in vs:
                pred[j].append(i)
        self.pred = tuple(tuple(v) for v in pred)

        for i, s in enumerate(sts):
            if not self.succ[i]:
                raise ModelError(f"blocking state {s.id!r} (no successor)")

        dist = dict(dist or {})
        table: list[dict[int, Fraction] | None] = [None] * self.n
        for sid, d in dist.items():
            if sid not in self.index:
                raise ModelError(f"dist for unknown state {sid!r}")
            i = self.index[sid]
            if sts[i].owner != P2:
                raise ModelError(f"dist given for P1 state {sid!r}")
            entry = {}
            for tid, q in d.items():
                if tid not in self.index:
                    raise ModelError(f"dist of {sid!r} names unknown state {tid!r}")
                q = q if isinstance(q, Fraction) else parse_rational(q)
                entry[self.index[tid]] = q
            sup = set(entry)
            if sup != set(self.succ[i]) or any(q <= 0 for q in entry.values()):
                raise ModelError(
                    f"dist of {sid!r}: support mismatch with successor set")
            total = sum(entry.values())
            if total != 1:
                raise ModelError(
                    f"dist of {sid!r}: distribution sums to {format_rational(total)}")
            table[i] = entry
        for i, s in enumerate(sts):
            if s.owner == P2 and table[i] is None:
                k = len(self.succ[i])
                table[i] = {j: Fraction(1, k) for j in self.succ[i]}
        self.dist = tuple(table)

        if init is not None and init not in self.index:
            raise ModelError(f"unknown initial state {init!r}")
        self.init = init

    # -- id/index helpers -------------------------------------------------

    def ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.states)

    def owner_of(self, sid: str) -> str:
        return self.states[self.index[sid]].owner

    def successors(self, sid: str) -> tuple[str, ...]:
        return tuple(self.states[j].id for j in self.succ[self.index[sid]])

    def dist_of(self, sid: str) -> dict[str, Fraction]:
        d = self.dist[self.index[sid]]
        if d is None:
            raise ModelError(f"{sid!r} is not a stochastic state")
        return {self.states[j].id: q for j, q in d.items()}

    def idx(self, ids: Iterable[str]) -> set[int]:
        return {self.index[s] for s in ids}

    def ids_of(self, idxs: Iterable[int]) -> frozenset[str]:
        return frozenset(self.states[i].id for i in idxs)

    def state_set(self) -> frozenset[str]:
        return frozenset(self.index)

    def p1_view(self) -> PriorityView:
        return PriorityView("p1", {s.id: s.p1 for s in self.states})

    def p2_view(self) -> PriorityView:
        return PriorityView("p2", {s.id: s.p2 for s in self.states})

    # -- serialization ----------------------------------------------------

    def to_document(self) -> dict:
        states = sorted(self.states, key=lambda s: s.id)
        edges = sorted((self.states[i].id, self.states[j].id)
                       for i in range(self.n) for j in self.succ[i])
        dist = {}
        for i, s in enumerate(self.states):
            if s.owner == P2:
                dist[s.id] = {self.states[j].id: format_rational(q)
                              for j, q in sorted(self.dist[i].items(),
                                                 key=lambda kv: self.states[kv[0]].id)}
        doc = {
            "states": [{"id": s.id, "owner": s.owner, "p1": s.p1, "p2": s.p2}
                       for s in states],
            "edges": [list(e) for e in edges],
            "dist": {k: dist[k] for k in sorted(dist)},
        }
        if self.init is not None:
            doc["init"] = self.init
        return doc

    def __eq__(self, other) -> bool:
        return isinstance(other, Mdp) and self.to_document() == other.to_document()

    def __hash__(self):
        return hash(json.dumps(self.to_document(), sort_keys=True))

    def __repr__(self) -> str:
        return f"Mdp({self.n} states, init={self.init!r})"


def parse_mdp(text) -> Mdp:
    """Parse and validate a model document (JSON text or an already-loaded
    dict).  Raises ModelError with a diagnostic message on any violation.
    """
    if isinstance(text, str):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ModelError(f"syntax error: {e}") from e
    else:
        doc = text
    if not isinstance(doc, dict) or "states" not in doc:
        raise ModelError("document must be an object with a 'states' list")
    states = []
    for s in doc["states"]:
        try:
            states.append((s["id"], s["owner"], s.get("p1", 0), s.get("p2", 0)))
        except (TypeError, KeyError) as e:
            raise ModelError(f"malformed state entry {s!r}") from e
        for key in ("p1", "p2"):
            v = s.get(key, 0)
            if not isinstance(v, int) or isinstance(v, bool):
                raise ModelError(f"state {s.get('id')!r}: {key} must be an integer")
    edges = [tuple(e) for e in doc.get("edges", [])]
    m = Mdp(states, edges, doc.get("dist"), doc.get("init"))
    bound = m.n + 1
    for s in m.states:
        if s.p1 > bound or s.p2 > bound:
            raise ModelError(
                f"state {s.id!r}: priority exceeds |S|+1 = {bound}")
    return m


def serialize_mdp(m: Mdp) -> str:
    """Canonical JSON serialization (sorted states and edges, explicit dists)."""
    return json.dumps(m.to_document(), indent=2, sort_keys=False) + "\n"


def validate(obj) -> list[Diagnostic]:
    """Re-check the model invariants; returns diagnostics, never raises.

    Accepts an Mdp, a document dict, or JSON text.  An empty list means ok.
    """
    if isinstance(obj, Mdp):
        obj = obj.to_document()
    try:
        parse_mdp(obj)
    except ModelError as e:
        msg = str(e)
        code = "invalid"
        for key, c in (("blocking", "blocking-state"),
                       ("sums to", "distribution-sum"),
                       ("support mismatch", "support-mismatch"),
                       ("duplicate state", "duplicate-state"),
                       ("duplicate edge", "duplicate-edge"),
                       ("unknown", "unknown-state"),
                       ("priority", "bad-priority"),
                       ("owner", "bad-owner"),
                       ("syntax", "syntax-error")):
            if key in msg:
                code = c
                break
        return [Diagnostic(code, msg)]
    return []


def _sub_states_edges(m: Mdp, keep: set[int]):
    states = [m.states[i] for i in range(m.n) if i in keep]
    edges = [(m.states[i].id, m.states[j].id)
             for i in range(m.n) if i in keep
             for j in m.succ[i] if j in keep]
    dist = {}
    for i in keep:
        if m.states[i].owner == P2:
            dist[m.states[i].id] = {m.states[j].id: q
                                    for j, q in m.dist[i].items()}
    return states, edges, dist


def restrict_to_trap(m: Mdp, region: Iterable[str]) -> Mdp:
    """Sub-MDP on a P2 trap (P2 states keep all successors, P1 states keep
    at least one).  Raises ModelError if the region is not a P2 trap.
    """
    keep = m.idx(region)
    if not keep:
        raise ModelError("empty restriction region")
    for i in sorted(keep):
        s = m.states[i]
        inside = [j for j in m.succ[i] if j in keep]
        if s.owner == P2 and len(inside) != len(m.succ[i]):
            out = next(j for j in m.succ[i] if j not in keep)
            raise ModelError(
                f"not a P2 trap: {s.id} -> {m.states[out].id} leaves the set")
        if s.owner == P1 and not inside:
            raise ModelError(
                f"not a P2 trap: P1 state {s.id} has no successor inside")
    states, edges, dist = _sub_states_edges(m, keep)
    init = m.init if m.init in {m.states[i].id for i in keep} else None
    return Mdp(states, edges, dist, init)


def restrict(m: Mdp, component: Iterable[str]) -> Mdp:
    """Sub-MDP on an end-component.  Rejects sets that are not ECs, naming
    the failed condition (trap or strong connectivity).
    """
    keep = m.idx(component)
    sub = restrict_to_trap(m, component)
    # strong connectivity inside the set
    ids = [m.states[i].id for i in sorted(keep)]
    adj = {s: [t for t in sub.successors(s)] for s in ids}
    start = ids[0]
    seen = _closure(adj, start)
    if seen != set(ids):
        missing = sorted(set(ids) - seen)[0]
        raise ModelError(
            f"not strongly connected: no path from {start} to {missing} inside the set")
    radj = {s: [] for s in ids}
    for s, ts in adj.items():
        for t in ts:
            radj[t].append(s)
    seen = _closure(radj, start)
    if seen != set(ids):
        missing = sorted(set(ids) - seen)[0]
        raise ModelError(
            f"not strongly connected: no path from {missing} to {start} inside the set")
    return sub


def _closure(adj, start):
    seen = {start}
    stack = [start]
    while stack:
        for t in adj[stack.pop()]:
            if t not in seen:
                seen.add(t)
                stack.append(t)
    return seen
