"""Qualitative graph algorithms on MDPs: attractors, traps, strongly
connected components, and maximal end-component decomposition.

All functions are pure.  Sets of states are frozensets of state ids; an
optional ``domain`` argument restricts the algorithm to a sub-arena without
building a sub-MDP.
"""

from __future__ import annotations

from typing import Callable, Hashable, Iterable

from .model import Mdp, P1, P2


def tarjan(nodes: list, succ: Callable[[Hashable], Iterable]) -> list[list]:
    """Strongly connected components of an explicit graph, iteratively.

    Components are emitted in reverse topological order (successors first).
    """
    index: dict = {}
    low: dict = {}
    on_stack: set = set()
    stack: list = []
    sccs_out: list[list] = []
    counter = 0

    for root in nodes:
        if root in index:
            continue
        work = [(root, iter(succ(root)))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ(w))))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                pv = work[-1][0]
                low[pv] = min(low[pv], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                sccs_out.append(comp)
    return sccs_out


def _dom(m: Mdp, domain) -> set[int]:
    return set(range(m.n)) if domain is None else m.idx(domain)


def _attr_idx(m: Mdp, player: int, target: set[int], dom: set[int]) -> set[int]:
    """Least fixpoint of the attractor recurrence inside ``dom``."""
    own = P1 if player == 1 else P2
    attr = set(target) & dom
    # count successors inside dom for opponent states
    cnt = {}
    queue = list(attr)
    while queue:
        v = queue.pop()
        for u in m.pred[v]:
            if u not in dom or u in attr:
                continue
            if m.states[u].owner == own:
                attr.add(u)
                queue.append(u)
            else:
                if u not in cnt:
                    cnt[u] = sum(1 for w in m.succ[u] if w in dom)
                cnt[u] -= 1
                if cnt[u] == 0:
                    attr.add(u)
                    queue.append(u)
    return attr


def attractor(m: Mdp, player: int, target: Iterable[str],
              domain: Iterable[str] | None = None) -> frozenset[str]:
    """States from which the player can force a visit of the target set.

    Player 2 is interpreted antagonistically (choice of edges, not chance).
    """
    dom = _dom(m, domain)
    tgt = m.idx(target) & dom
    return m.ids_of(_attr_idx(m, player, tgt, dom))


def sccs(m: Mdp, domain: Iterable[str] | None = None) -> list[frozenset[str]]:
    """SCC partition of the (sub-)graph, in reverse topological order."""
    dom = _dom(m, domain)
    nodes = sorted(dom)
    comps = tarjan(nodes, lambda v: (w for w in m.succ[v] if w in dom))
    return [m.ids_of(c) for c in comps]


def _mecs_idx(m: Mdp, dom: set[int]) -> list[set[int]]:
    result: list[set[int]] = []
    work = [dom]
    while work:
        d = work.pop()
        if not d:
            continue
        comps = tarjan(sorted(d), lambda v: (w for w in m.succ[v] if w in d))
        for comp in comps:
            cset = set(comp)
            bad = {v for v in cset
                   if m.states[v].owner == P2
                   and any(w not in cset for w in m.succ[v])}
            if bad:
                work.append(cset - _attr_idx(m, 2, bad, cset))
                continue
            if len(cset) == 1:
                v = next(iter(cset))
                if v not in m.succ[v]:
                    continue
            result.append(cset)
    return result


def mec_decomposition(m: Mdp, domain: Iterable[str] | None = None) -> list[frozenset[str]]:
    """All maximal end-components, by iterative SCC refinement."""
    dom = _dom(m, domain)
    out = [m.ids_of(c) for c in _mecs_idx(m, dom)]
    return sorted(out, key=lambda c: sorted(c))


def is_trap(m: Mdp, player: int, region: Iterable[str]) -> bool:
    """True iff the player cannot leave the region."""
    reg = m.idx(region)
    if not reg:
        raise ValueError("empty region")
    own = P1 if player == 1 else P2
    for v in reg:
        inside = [w for w in m.succ[v] if w in reg]
        if m.states[v].owner == own:
            if len(inside) != len(m.succ[v]):
                return False
        else:
            if not inside:
                return False
    return True


def reachable_from(m: Mdp, start: str,
                   domain: Iterable[str] | None = None) -> frozenset[str]:
    """Forward closure in the underlying graph."""
    dom = _dom(m, domain)
    s0 = m.index[start]
    if s0 not in dom:
        return frozenset()
    seen = {s0}
    stack = [s0]
    while stack:
        for w in m.succ[stack.pop()]:
            if w in dom and w not in seen:
                seen.add(w)
                stack.append(w)
    return m.ids_of(seen)


def can_reach(m: Mdp, target: Iterable[str],
              domain: Iterable[str] | None = None,
              edge_ok=None) -> frozenset[str]:
    """States with a path to the target set (backward closure).

    ``edge_ok(i, j)`` optionally filters edges by state index.
    """
    dom = _dom(m, domain)
    seen = m.idx(target) & dom
    stack = list(seen)
    while stack:
        v = stack.pop()
        for u in m.pred[v]:
            if u in dom and u not in seen and (edge_ok is None or edge_ok(u, v)):
                seen.add(u)
                stack.append(u)
    return m.ids_of(seen)
