"""Two-player zero-sum game solving.

Plain parity games (max-even winning) are solved with Zielonka's recursive
attractor algorithm, which yields uniform pure memoryless strategies for both
players on their winning regions.

The conjunction of a Buechi objective with a parity objective is solved by
encoding it as a Streett condition (one pair per odd priority plus one pair
for the Buechi set), reducing to a single parity game with index-appearance
records as memory, solving that with Zielonka, and folding the record memory
into the returned Moore strategy.
"""

from __future__ import annotations

import itertools
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

from .model import Mdp, ModelError, P1, P2, PriorityView
from .strategies import MooreStrategy


@dataclass(frozen=True)
class Game:
    """Finite game arena with one priority function (no probabilities)."""

    ids: tuple[str, ...]
    owner: tuple[str, ...]
    succ: tuple[tuple[int, ...], ...]
    priority: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.ids)

    def index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.ids)}

    @staticmethod
    def from_mdp(m: Mdp, view: PriorityView) -> "Game":
        """The MDP as a game: forget the transition function, let P2 choose."""
        return Game(tuple(s.id for s in m.states),
                    tuple(s.owner for s in m.states),
                    m.succ,
                    tuple(view[s.id] for s in m.states))

    def to_document(self, buchi: Iterable[str] | None = None) -> dict:
        order = sorted(range(self.n), key=lambda i: self.ids[i])
        doc = {
            "states": [{"id": self.ids[i], "owner": self.owner[i],
                        "p1": self.priority[i], "p2": 0} for i in order],
            "edges": sorted([self.ids[i], self.ids[j]]
                            for i in range(self.n) for j in self.succ[i]),
        }
        if buchi is not None:
            doc["buchi"] = sorted(buchi)
        return doc

    @staticmethod
    def from_document(doc: dict) -> tuple["Game", frozenset[str] | None]:
        ids = tuple(s["id"] for s in doc["states"])
        idx = {s: i for i, s in enumerate(ids)}
        succ: list[list[int]] = [[] for _ in ids]
        for a, b in doc["edges"]:
            succ[idx[a]].append(idx[b])
        g = Game(ids,
                 tuple(s["owner"] for s in doc["states"]),
                 tuple(tuple(v) for v in succ),
                 tuple(int(s.get("p1", 0)) for s in doc["states"]))
        buchi = frozenset(doc["buchi"]) if "buchi" in doc else None
        return g, buchi


@dataclass(frozen=True)
class BuchiParityGame:
    """Arena plus a Buechi set; for gadget games a provenance map records
    where each state came from (original, square copy, circle copy, or
    absorbing target).
    """

    game: Game
    buchi: frozenset[str]
    provenance: dict[str, tuple[str, str]] = field(default_factory=dict)


@dataclass(frozen=True)
class Regions:
    """Winning regions and memoryless winning strategies of a parity game."""

    w1: frozenset[str]
    w2: frozenset[str]
    strat1: dict[str, str]
    strat2: dict[str, str]


def _attract(owner1, succ, pred, targets, alive, player):
    """Attractor of ``targets`` for ``player`` inside ``alive``; also the
    attracting move for the player's new states (toward the target).
    """
    mine = (player == 1)
    attr = set(targets)
    strat: dict[int, int] = {}
    cnt: dict[int, int] = {}
    queue = sorted(attr)
    while queue:
        nxt = []
        for v in queue:
            for u in pred[v]:
                if u not in alive or u in attr:
                    continue
                if owner1[u] == mine:
                    attr.add(u)
                    strat[u] = v
                    nxt.append(u)
                else:
                    if u not in cnt:
                        cnt[u] = sum(1 for w in succ[u] if w in alive)
                    cnt[u] -= 1
                    if cnt[u] == 0:
                        attr.add(u)
                        nxt.append(u)
        queue = sorted(nxt)
    return attr, strat


def _zielonka(owner1, succ, pred, prio, alive: frozenset):
    if not alive:
        return set(), set(), {}, {}
    d = max(prio[v] for v in alive)
    player = 1 if d % 2 == 0 else 2
    tops = {v for v in alive if prio[v] == d}
    a, astrat = _attract(owner1, succ, pred, tops, alive, player)
    w1, w2, s1, s2 = _zielonka(owner1, succ, pred, prio, alive - frozenset(a))
    wme, wop = (w1, w2) if player == 1 else (w2, w1)
    sme, sop = (s1, s2) if player == 1 else (s2, s1)
    if not wop:
        mine = (player == 1)
        for v in sorted(tops):
            if owner1[v] == mine:
                sme[v] = next(w for w in succ[v] if w in alive)
        sme.update(astrat)
        wme = set(alive)
        wop = set()
    else:
        b, bstrat = _attract(owner1, succ, pred, wop, alive, 3 - player)
        w1b, w2b, s1b, s2b = _zielonka(owner1, succ, pred, prio,
                                       alive - frozenset(b))
        wme_b, wop_b = (w1b, w2b) if player == 1 else (w2b, w1b)
        sme_b, sop_b = (s1b, s2b) if player == 1 else (s2b, s1b)
        merged = dict(sop)          # winning on the old opponent region
        merged.update(bstrat)       # attracting toward it
        merged.update(sop_b)
        wme, wop = wme_b, wop_b | set(b)
        sme, sop = sme_b, merged
    return (wme, wop, sme, sop) if player == 1 else (wop, wme, sop, sme)


def _solve_parity_idx(owner1, succ, prio):
    n = len(succ)
    pred: list[list[int]] = [[] for _ in range(n)]
    for i, vs in enumerate(succ):
        for j in vs:
            pred[j].append(i)
    depth = 2 * n + 200
    if sys.getrecursionlimit() < depth:
        sys.setrecursionlimit(depth)
    return _zielonka(owner1, tuple(map(tuple, succ)), tuple(map(tuple, pred)),
                     prio, frozenset(range(n)))


def solve_parity(g: Game) -> Regions:
    """Exact winning regions and uniform pure memoryless strategies."""
    owner1 = tuple(o == P1 for o in g.owner)
    w1, w2, s1, s2 = _solve_parity_idx(owner1, g.succ, g.priority)
    return Regions(frozenset(g.ids[v] for v in w1),
                   frozenset(g.ids[v] for v in w2),
                   {g.ids[k]: g.ids[v] for k, v in sorted(s1.items())},
                   {g.ids[k]: g.ids[v] for k, v in sorted(s2.items())})


# ---------------------------------------------------------------------------
# the reachability gadget


def build_buchi_parity_game(m: Mdp, target: Iterable[str],
                            view: PriorityView) -> BuchiParityGame:
    """Arena for almost-sure reachability of ``target`` under a sure parity
    constraint: target states become absorbing with priority 0; every
    stochastic state outside the target is split into the original plus a
    square copy (P2, Buechi) and a circle copy (P1), both with priority 0 and
    the original's successors.  The Buechi set is the target plus all square
    copies.  Copy edges use the original successor lists, so the construction
    does not need P1/P2 alternation.
    """
    tgt = frozenset(target)
    unknown = tgt - set(m.index)
    if unknown:
        raise ModelError(f"target names unknown states {sorted(unknown)}")
    ids: list[str] = []
    owner: list[str] = []
    prio: list[int] = []
    prov: dict[str, tuple[str, str]] = {}
    for s in m.states:
        ids.append(s.id)
        owner.append(s.owner)
        prio.append(0 if s.id in tgt else view[s.id])
        prov[s.id] = (s.id, "target" if s.id in tgt else "original")
    copies: dict[tuple[str, str], str] = {}
    for s in m.states:
        if s.owner == P2 and s.id not in tgt:
            for tag, own in (("sq", P2), ("ci", P1)):
                cid = f"{s.id}#{tag}"
                if cid in m.index:
                    raise ModelError(f"state id {cid!r} collides with a copy id")
                copies[(s.id, tag)] = cid
                ids.append(cid)
                owner.append(own)
                prio.append(0)
                prov[cid] = (s.id, "square" if tag == "sq" else "circle")
    index = {x: i for i, x in enumerate(ids)}
    succ: list[list[int]] = [[] for _ in ids]
    for s in m.states:
        i = index[s.id]
        if s.id in tgt:
            succ[i] = [i]
        elif s.owner == P1:
            succ[i] = [index[t] for t in m.successors(s.id)]
        else:
            succ[i] = [index[copies[(s.id, "sq")]], index[copies[(s.id, "ci")]]]
            for tag in ("sq", "ci"):
                j = index[copies[(s.id, tag)]]
                succ[j] = [index[t] for t in m.successors(s.id)]
    game = Game(tuple(ids), tuple(owner), tuple(tuple(v) for v in succ),
                tuple(prio))
    buchi = tgt | {copies[(s, "sq")] for (s, tag) in copies if tag == "sq"}
    return BuchiParityGame(game, frozenset(buchi), prov)


# ---------------------------------------------------------------------------
# Streett pairs + index appearance records


def _streett_pairs(g: Game, buchi: frozenset[str]):
    """One (request, grant) pair per odd priority, plus (everything, buchi)."""
    idx = g.index()
    pairs = []
    odds = sorted({p for p in g.priority if p % 2 == 1})
    for o in odds:
        req = frozenset(i for i in range(g.n) if g.priority[i] == o)
        grant = frozenset(i for i in range(g.n) if g.priority[i] > o)
        pairs.append((req, grant))
    pairs.append((frozenset(range(g.n)), frozenset(idx[s] for s in buchi)))
    return pairs


def _iar_solve(g: Game, buchi: frozenset[str]):
    """Solve the Streett game via records; returns (winning product set,
    product strategy, permutation list, update function memo).
    """
    pairs = _streett_pairs(g, buchi)
    k = len(pairs)
    req_of = [frozenset(j for j, (r, _gr) in enumerate(pairs) if i in r)
              for i in range(g.n)]
    grant_of = [frozenset(j for j, (_r, gr) in enumerate(pairs) if i in gr)
                for i in range(g.n)]
    perms = list(itertools.permutations(range(k)))
    perm_id = {p: i for i, p in enumerate(perms)}

    upd_memo: dict[tuple[int, int], int] = {}

    def upd(pi: int, state: int) -> int:
        key = (pi, state)
        got = upd_memo.get(key)
        if got is not None:
            return got
        perm = perms[pi]
        hits = grant_of[state]
        moved = tuple(j for j in perm if j in hits) + \
            tuple(j for j in perm if j not in hits)
        out = perm_id[moved]
        upd_memo[key] = out
        return out

    def emit(pi: int, state: int) -> int:
        perm = perms[pi]
        e = f = 0
        for pos, j in enumerate(perm, start=1):
            if j in req_of[state]:
                e = pos
            if j in grant_of[state]:
                f = pos
        return 2 * f if f >= e else 2 * e - 1

    np = len(perms)
    n_prod = g.n * np
    owner1 = [False] * n_prod
    prio = [0] * n_prod
    succ: list[list[int]] = [[] for _ in range(n_prod)]
    for s in range(g.n):
        mine = g.owner[s] == P1
        for pi in range(np):
            node = s * np + pi
            owner1[node] = mine
            prio[node] = emit(pi, s)
            pi2 = upd(pi, s)
            succ[node] = [t * np + pi2 for t in g.succ[s]]
    w1, _w2, s1, _s2 = _solve_parity_idx(tuple(owner1), succ, tuple(prio))
    return w1, s1, perms, upd, np


def _prefer_absorbing(g: Game, buchi: frozenset[str], w1prod, s1, np):
    """Redirect P1 product choices to an absorbing even Buechi successor when
    one exists: such a sink is winning outright, so this is sound, and it
    gives canonical witnesses that enter the target as soon as possible.
    """
    bidx = {i for i, s in enumerate(g.ids) if s in buchi}
    sink = [len(g.succ[i]) == 1 and g.succ[i][0] == i and i in bidx
            and g.priority[i] % 2 == 0 for i in range(g.n)]
    for node in list(s1):
        s, pi = divmod(node, np)
        for t in g.succ[s]:
            if sink[t]:
                s1[node] = t * np + ((s1[node]) % np)
                break
    return s1


def solve_buchi_parity(bpg: BuchiParityGame, source: str):
    """Decide the conjunction Buechi(B) and Parity(p) for P1 from ``source``;
    on a win, also return a finite-memory Moore strategy (memory: index
    appearance records) winning uniformly on the whole winning region.
    """
    w1, moore = solve_buchi_parity_region(bpg)
    win = source in w1
    return win, (moore if win else None)


def solve_buchi_parity_region(bpg: BuchiParityGame):
    """Winning states (w.r.t. the initial record) and the folded strategy."""
    g = bpg.game
    w1prod, s1, perms, upd, np = _iar_solve(g, bpg.buchi)
    s1 = _prefer_absorbing(g, bpg.buchi, w1prod, s1, np)
    pi0 = perms.index(tuple(range(len(perms[0]))))
    winning = frozenset(g.ids[s] for s in range(g.n)
                        if s * np + pi0 in w1prod)
    update = {}
    moves = {}
    for s in range(g.n):
        for pi in range(np):
            update[(perms[pi], g.ids[s])] = perms[upd(pi, s)]
    for node in w1prod:
        s, pi = divmod(node, np)
        if g.owner[s] == P1:
            choice = s1.get(node)
            if choice is None:
                continue
            t = choice // np
            moves[(perms[pi], g.ids[s])] = {g.ids[t]: Fraction(1)}
    machine = MooreStrategy(perms[pi0], update, moves, "buchi-parity")
    return winning, machine


# ---------------------------------------------------------------------------
# mapping a gadget strategy back onto the MDP


def mdp_strategy_from_game(bpg: BuchiParityGame, machine: MooreStrategy,
                           m: Mdp, starts: Iterable[str]) -> MooreStrategy:
    """Turn a winning gadget strategy into an MDP Moore strategy for the
    pre-target phase.

    The play is simulated in the gadget: a stochastic step u -> t is read as
    P2 choosing the circle copy when t matches the strategy's circle promise,
    and the square copy otherwise.  Every simulated play is then consistent
    with the winning strategy, which forces sure parity, and the circle
    promise gives a positive-probability route to the target from every
    reachable configuration, hence almost-sure reachability.

    Memory elements are (record, previous state); tables cover every state
    reachable from ``starts`` before the target is entered (the surrounding
    composition switches there).
    """
    tgt = frozenset(s for s, (src, tag) in bpg.provenance.items()
                    if tag == "target")

    def advance(record, prev, now):
        if prev is None:
            return record
        if m.owner_of(prev) == P1:
            return machine.update[(record, prev)]
        r1 = machine.update[(record, prev)]
        circle = f"{prev}#ci"
        promise = next(iter(machine.moves[(r1, circle)]))
        tag = circle if now == promise else f"{prev}#sq"
        return machine.update[(r1, tag)]

    m0 = (machine.m0, None)
    update: dict = {}
    moves: dict = {}
    work = [(m0, s) for s in sorted(set(starts)) if s not in tgt]
    seen = set(work)
    while work:
        mem, s = work.pop()
        record, prev = mem
        here = advance(record, prev, s)
        if m.owner_of(s) == P1:
            d = machine.moves[(here, s)]
            moves[(mem, s)] = dict(d)
            succs = sorted(d)
        else:
            succs = m.successors(s)
        update[(mem, s)] = (here, s)
        for t in succs:
            if t in tgt:
                continue
            node = ((here, s), t)
            if node not in seen:
                seen.add(node)
                work.append(node)
    return MooreStrategy(m0, update, moves, "gadget-mapped")


def strategy_restriction_violation(g: Game, machine: MooreStrategy,
                                   source: str,
                                   buchi: frozenset[str] | None = None):
    """Check a P1 Moore strategy on an arena by lasso analysis of the
    strategy-restricted product (P2 branches fully): returns a reachable bad
    cycle as (stem, cycle) lists of arena states, or None if every reachable
    cycle has an even maximal priority (and intersects the Buechi set, when
    one is given).
    """
    from .graph import tarjan  # local import to keep module deps one-way

    idx = g.index()
    start = (machine.m0, idx[source])
    nodes = [start]
    seen = {start}
    succ_map: dict = {}
    k = 0
    while k < len(nodes):
        mem, s = nodes[k]
        k += 1
        if g.owner[s] == P1:
            targets = [idx[t] for t in machine.moves[(mem, g.ids[s])]]
        else:
            targets = list(g.succ[s])
        nmem = machine.update[(mem, g.ids[s])]
        outs = []
        for t in targets:
            node = (nmem, t)
            outs.append(node)
            if node not in seen:
                seen.add(node)
                nodes.append(node)
        succ_map[(mem, s)] = outs

    # a reachable cycle with odd maximal priority o exists iff the product
    # restricted to priorities <= o has a reachable cyclic SCC through a
    # priority-o node
    found = None
    odds = sorted({p for p in g.priority if p % 2 == 1}, reverse=True)
    for o in odds:
        sub = [v for v in nodes if g.priority[v[1]] <= o]
        subset = set(sub)
        for comp in tarjan(sub, lambda v: (w for w in succ_map[v] if w in subset)):
            cyclic = len(comp) > 1 or comp[0] in succ_map[comp[0]]
            anchors = {v for v in comp if g.priority[v[1]] == o}
            if cyclic and anchors:
                found = (set(comp), anchors)
                break
        if found:
            break
    if found is None and buchi is not None:
        # a cycle entirely outside the Buechi set violates sure Buechi
        nb = [v for v in nodes if g.ids[v[1]] not in buchi]
        nbset = set(nb)
        for comp in tarjan(nb, lambda v: (w for w in succ_map[v] if w in nbset)):
            cyclic = len(comp) > 1 or \
                comp[0] in [w for w in succ_map[comp[0]] if w in nbset]
            if cyclic:
                found = (set(comp) & nbset, set(comp))
                break
    if found is None:
        return None
    compset, anchors = found
    stem = _bfs_path(start, lambda v: succ_map[v], anchors)
    anchor = stem[-1]
    cycle = _bfs_cycle(anchor, lambda v: [w for w in succ_map[v] if w in compset])
    return ([g.ids[s] for _mem, s in stem], [g.ids[s] for _mem, s in cycle])


def _bfs_path(start, succ, goal_set):
    from collections import deque
    prev = {start: None}
    q = deque([start])
    while q:
        v = q.popleft()
        if v in goal_set:
            path = []
            while v is not None:
                path.append(v)
                v = prev[v]
            return path[::-1]
        for w in succ(v):
            if w not in prev:
                prev[w] = v
                q.append(w)
    raise RuntimeError("goal unreachable")


def _bfs_cycle(anchor, succ):
    from collections import deque
    prev = {}
    q = deque()
    for w in succ(anchor):
        if w not in prev:
            prev[w] = anchor
            q.append(w)
        if w == anchor:
            return [anchor]
    while q:
        v = q.popleft()
        if v == anchor:
            path = [v]
            u = prev[v]
            while u != anchor:
                path.append(u)
                u = prev[u]
            path.append(anchor)
            return path[::-1][:-1]
        for w in succ(v):
            if w not in prev:
                prev[w] = v
                q.append(w)
    raise RuntimeError("anchor not on a cycle")
