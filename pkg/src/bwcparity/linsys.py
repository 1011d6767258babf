"""Exact linear algebra for finite Markov chains: Gaussian elimination over
rationals, reachability probabilities via SCC condensation, and bottom SCC
detection.

Chains are given as ``trans``: a list indexed by node, each entry a list of
``(successor, probability)`` pairs with exact Fraction probabilities.
"""

from __future__ import annotations

from fractions import Fraction

from .graph import tarjan


def solve_linear(a: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    """Solve a x = b exactly; raises on singular systems."""
    n = len(b)
    m = [row[:] + [b[i]] for i, row in enumerate(a)]
    for col in range(n):
        piv = next((r for r in range(col, n) if m[r][col] != 0), None)
        if piv is None:
            raise ArithmeticError("singular linear system")
        m[col], m[piv] = m[piv], m[col]
        inv = Fraction(1) / m[col][col]
        m[col] = [x * inv for x in m[col]]
        for r in range(n):
            if r != col and m[r][col] != 0:
                f = m[r][col]
                m[r] = [x - f * y for x, y in zip(m[r], m[col])]
    return [m[i][n] for i in range(n)]


def mc_reach(n: int, trans, targets: set[int]) -> list[Fraction]:
    """Probability of ever reaching ``targets`` from each node.

    Targets are absorbed; nodes with no path to a target get exactly 0.
    Solved one condensation component at a time, so only genuinely recurrent
    blocks need elimination.
    """
    zero, one = Fraction(0), Fraction(1)
    values = [zero] * n
    pred = [[] for _ in range(n)]
    for i in range(n):
        if i in targets:
            continue
        for j, _q in trans[i]:
            pred[j].append(i)
    # backward closure: which nodes can reach a target
    reach = set(targets)
    stack = list(targets)
    while stack:
        v = stack.pop()
        for u in pred[v]:
            if u not in reach:
                reach.add(u)
                stack.append(u)
    for t in targets:
        values[t] = one
    inner = sorted(reach - targets)
    if not inner:
        return values
    comps = tarjan(inner, lambda v: (j for j, _q in trans[v]
                                     if j in reach and j not in targets))
    # reverse topological order: successors of each SCC are already solved
    for comp in comps:
        cset = set(comp)
        if len(comp) == 1 and all(j != comp[0] for j, _ in trans[comp[0]]):
            v = comp[0]
            values[v] = sum((q * values[j] for j, q in trans[v]), zero)
            continue
        idx = {v: k for k, v in enumerate(comp)}
        k = len(comp)
        a = [[one if r == c else zero for c in range(k)] for r in range(k)]
        b = [zero] * k
        for v in comp:
            r = idx[v]
            for j, q in trans[v]:
                if j in cset:
                    a[r][idx[j]] -= q
                else:
                    b[r] += q * values[j]
        sol = solve_linear(a, b)
        for v in comp:
            values[v] = sol[idx[v]]
    return values


def bsccs(n: int, trans) -> list[set[int]]:
    """Bottom strongly connected components of the chain."""
    comps = tarjan(list(range(n)), lambda v: (j for j, _q in trans[v]))
    out = []
    for comp in comps:
        cset = set(comp)
        if all(j in cset for v in comp for j, _q in trans[v]):
            out.append(cset)
    return out


def mc_step(trans, vec: list[Fraction], absorbing: set[int]) -> list[Fraction]:
    """One backward step of finite-horizon hitting probabilities."""
    out = []
    one = Fraction(1)
    for i in range(len(vec)):
        if i in absorbing:
            out.append(one)
        else:
            out.append(sum((q * vec[j] for j, q in trans[i]), Fraction(0)))
    return out
