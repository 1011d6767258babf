"""Strategy representations and constructions.

Three layers:

* executable strategies: stateful objects driven by ``observe(state)`` on
  every arrival (the initial state first) and ``move(state)`` at P1 states,
  returning an exact distribution over successors;
* serializable recipes ("specs"): plain dicts naming a construction and
  embedding its tables, replayable deterministically via ``instantiate``;
* Moore tables: finite-memory strategies flattened to explicit update/move
  tables by ``as_moore`` so they can be checked exactly.

The two counter strategies play rounds of a randomized memoryless strategy
with growing horizons; their schedules are computed lazily per round by
exact finite-horizon iteration and memoized.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Hashable, Iterable

from . import sampling
from .model import (Mdp, P1, P2, PriorityView, format_rational,
                    max_priority_states, parse_rational)


class StrategyError(ValueError):
    pass


# ---------------------------------------------------------------------------
# executable strategies


class Strategy:
    """Base: single-owner stateful executor."""

    def __init__(self, m: Mdp):
        self._mdp = m
        self._monitor: Callable | None = None

    def set_monitor(self, fn: Callable | None) -> None:
        self._monitor = fn

    def _emit(self, *event) -> None:
        if self._monitor is not None:
            self._monitor(event)

    def observe(self, state: str) -> None:
        raise NotImplementedError

    def move(self, state: str) -> dict[str, Fraction]:
        raise NotImplementedError

    def clone(self) -> "Strategy":
        raise NotImplementedError

    def _check_p1(self, state: str) -> None:
        if self._mdp.owner_of(state) != P1:
            raise StrategyError(f"next_move consulted on P2 state {state!r}")


class TableStrategy(Strategy):
    """Memoryless strategy from a table state -> distribution."""

    def __init__(self, m, table: dict[str, dict[str, Fraction]], spec=None):
        super().__init__(m)
        self.table = table
        self.spec = spec if spec is not None else memoryless_spec(table)

    def observe(self, state):
        pass

    def move(self, state):
        self._check_p1(state)
        return self.table[state]

    def clone(self):
        return TableStrategy(self._mdp, self.table, self.spec)


@dataclass
class MooreStrategy:
    """Finite Moore machine: deterministic memory updates on every state left,
    possibly randomized moves at P1 states.
    """

    m0: Hashable
    update: dict  # (mem, state) -> mem
    moves: dict   # (mem, state) -> {successor: probability}
    name: str = ""

    def is_pure(self) -> bool:
        return all(len(d) == 1 for d in self.moves.values())

    def memory_after(self, prefix: Iterable[str]) -> Hashable:
        mem = self.m0
        for s in prefix:
            mem = self.update[(mem, s)]
        return mem


class MooreRunner(Strategy):
    def __init__(self, m, machine: MooreStrategy, spec=None):
        super().__init__(m)
        self.machine = machine
        self.spec = spec if spec is not None else moore_spec(machine)
        self._mem = machine.m0
        self._prev = None

    def observe(self, state):
        if self._prev is not None:
            self._mem = self.machine.update[(self._mem, self._prev)]
        self._prev = state

    def move(self, state):
        self._check_p1(state)
        return self.machine.moves[(self._mem, state)]

    def clone(self):
        return MooreRunner(self._mdp, self.machine, self.spec)


class CompositeStrategy(Strategy):
    """Switch-on-trigger composition: play the outer strategy until the play
    enters a trigger region or a step budget elapses, then play the selected
    inner strategy forever.  At most one switch; region triggers take
    precedence when both fire on the same arrival.
    """

    def __init__(self, m, outer_factory, regions, steps, spec):
        super().__init__(m)
        self._outer_factory = outer_factory
        self._regions = regions          # list of (frozenset, factory, label)
        self._steps = steps              # (k, factory, label) or None
        self.spec = spec
        self._outer = outer_factory()
        self._inner: Strategy | None = None
        self._t = 0

    def set_monitor(self, fn):
        super().set_monitor(fn)
        self._outer.set_monitor(fn)
        if self._inner is not None:
            self._inner.set_monitor(fn)

    def observe(self, state):
        if self._inner is None:
            hit = None
            for region, factory, label in self._regions:
                if state in region:
                    hit = (factory, label)
                    break
            if hit is None and self._steps is not None and self._t >= self._steps[0]:
                hit = (self._steps[1], self._steps[2])
            if hit is not None:
                self._inner = hit[0]()
                self._inner.set_monitor(self._monitor)
                self._emit("composite_switch", hit[1], state)
                self._inner.observe(state)
            else:
                self._outer.observe(state)
        else:
            self._inner.observe(state)
        self._t += 1

    def move(self, state):
        self._check_p1(state)
        if self._inner is not None:
            return self._inner.move(state)
        return self._outer.move(state)

    def clone(self):
        return CompositeStrategy(self._mdp, self._outer_factory,
                                 self._regions, self._steps, self.spec)


class HittingSchedule:
    """Exact minimal horizons for hitting a target inside a component under a
    fixed memoryless strategy: smallest n with min over the component of the
    n-step hitting probability at least the requested bound.
    """

    _CAP = 100000

    def __init__(self, m: Mdp, component: frozenset[str],
                 lam2: dict[str, dict[str, Fraction]], target: frozenset[str]):
        comp = sorted(component)
        self._idx = {s: i for i, s in enumerate(comp)}
        self._absorbing = {self._idx[s] for s in target if s in self._idx}
        trans = []
        for s in comp:
            if m.owner_of(s) == P1:
                d = lam2[s]
            else:
                d = m.dist_of(s)
            row = [(self._idx[t], q) for t, q in sorted(d.items())]
            if any(t not in self._idx for t in d):
                raise StrategyError(f"strategy leaves the component at {s!r}")
            trans.append(row)
        self._trans = trans
        h0 = [Fraction(1) if i in self._absorbing else Fraction(0)
              for i in range(len(comp))]
        self._h = [h0]
        self._mins = [min(h0)]

    def _extend(self):
        prev = self._h[-1]
        one = Fraction(1)
        nxt = [one if i in self._absorbing
               else sum((q * prev[j] for j, q in self._trans[i]), Fraction(0))
               for i in range(len(prev))]
        self._h.append(nxt)
        self._mins.append(min(nxt))

    def horizon(self, bound: Fraction) -> int:
        n = 0
        while True:
            if n < len(self._mins) and self._mins[n] >= bound:
                return n
            if n >= len(self._mins):
                if n > self._CAP:
                    raise RuntimeError("hitting horizon did not converge")
                self._extend()
            else:
                n += 1

    def hit_probability(self, n: int) -> dict[str, Fraction]:
        while len(self._h) <= n:
            self._extend()
        return {s: self._h[n][i] for s, i in self._idx.items()}


class CounterUgecStrategy(Strategy):
    """Round-scheduled infinite-memory strategy inside an ultra-good EC.

    Round i plays the randomized memoryless strategy for n_i steps, where n_i
    is the minimal exact horizon reaching the sub-EC's dominant even states
    with probability at least 1 - 2^-i from every component state.  A missed
    round triggers a recovery phase that plays the sure witness until the
    component's dominant even states are reached, then the next round starts.
    """

    def __init__(self, m, spec, schedule=None):
        super().__init__(m)
        self.spec = spec
        self._component = frozenset(spec["component"])
        self._dmax1 = frozenset(spec["dmax1"])
        self._cmax1 = frozenset(spec["cmax1"])
        self._lam2 = _table_from_spec(spec["lambda2"])
        self._lam1c_spec = spec["lambda1c"]
        self._schedule = schedule or HittingSchedule(
            m, self._component, self._lam2, self._dmax1)
        self._pure_lam2 = self._component <= self._dmax1
        self._started = False
        self._i = 0
        self._phase = "A"
        self._left = 0
        self._hit = False
        self._lam1: Strategy | None = None

    def observe(self, state):
        if self._pure_lam2:
            return
        if not self._started:
            self._started = True
            self._enter_round(state)
            return
        if self._phase == "A":
            self._left -= 1
            if state in self._dmax1:
                self._hit = True
            if self._left == 0:
                self._end_phase_a(state)
        else:
            self._lam1.observe(state)
            if state in self._cmax1:
                self._emit("recovery_end", self._i, state)
                self._enter_round(state)

    def _enter_round(self, state):
        n = self._schedule.horizon(Fraction(2 ** self._i - 1, 2 ** self._i))
        self._emit("round_start", self._i, n)
        self._phase = "A"
        self._hit = state in self._dmax1
        self._left = n
        if n == 0:
            self._end_phase_a(state)

    def _end_phase_a(self, state):
        done = self._i
        self._i += 1
        self._emit("phase_a_end", done, self._hit)
        if self._hit:
            self._enter_round(state)
        else:
            self._emit("phase_b_else", done)
            self._phase = "B"
            self._lam1 = instantiate(self._lam1c_spec, self._mdp)
            self._lam1.set_monitor(None)
            self._lam1.observe(state)
            if state in self._cmax1:
                self._emit("recovery_end", self._i, state)
                self._enter_round(state)

    def move(self, state):
        self._check_p1(state)
        if self._pure_lam2 or self._phase == "A":
            return self._lam2[state]
        return self._lam1.move(state)

    def clone(self):
        return CounterUgecStrategy(self._mdp, self.spec, self._schedule)


class LimitSureStrategy(Strategy):
    """Round-scheduled strategy inside a very-good EC for the limit-sure
    threshold.  Round i plays the randomized memoryless strategy for g(i)
    steps, with g(i) the minimal exact horizon reaching the sub-EC's dominant
    even states with probability at least f(i) = 1 - eps * 2^-(i+2); if the
    round misses, the strategy switches to the global sure-parity strategy
    forever.  The product of the f(i) exceeds 1 - eps.
    """

    def __init__(self, m, spec, schedule=None):
        super().__init__(m)
        self.spec = spec
        self._component = frozenset(spec["component"])
        self._dmax1 = frozenset(spec["dmax1"])
        self._lam2 = _table_from_spec(spec["lambda2"])
        self._lam1_spec = spec["lambda1"]
        self._eps = parse_rational(spec["epsilon"])
        if not (0 < self._eps <= 1):
            raise StrategyError("epsilon must be in (0, 1]")
        self._schedule = schedule or HittingSchedule(
            m, self._component, self._lam2, self._dmax1)
        self._pure_lam2 = self._component <= self._dmax1
        self._started = False
        self._i = 0
        self._left = 0
        self._hit = False
        self._lam1: Strategy | None = None

    def _bound(self, i: int) -> Fraction:
        return 1 - self._eps / (2 ** (i + 2))

    def observe(self, state):
        if self._pure_lam2:
            return
        if self._lam1 is not None:
            self._lam1.observe(state)
            return
        if not self._started:
            self._started = True
            self._enter_round(state)
            return
        self._left -= 1
        if state in self._dmax1:
            self._hit = True
        if self._left == 0:
            done = self._i
            self._i += 1
            self._emit("phase_a_end", done, self._hit)
            if self._hit:
                self._enter_round(state)
            else:
                self._emit("switch_lambda1", done)
                self._lam1 = instantiate(self._lam1_spec, self._mdp)
                self._lam1.observe(state)

    def _enter_round(self, state):
        g = self._schedule.horizon(self._bound(self._i))
        self._emit("round_start", self._i, g)
        self._hit = state in self._dmax1
        self._left = g
        if g == 0:
            raise RuntimeError("limit-sure round with zero horizon")

    def move(self, state):
        self._check_p1(state)
        if self._lam1 is not None:
            return self._lam1.move(state)
        return self._lam2[state]

    def clone(self):
        return LimitSureStrategy(self._mdp, self.spec, self._schedule)


class InitializedStrategy(Strategy):
    """The initialized strategy: behaves like the base strategy after the
    given prefix when the actual play is a consistent continuation of it,
    and like the base strategy from scratch otherwise.
    """

    def __init__(self, m, base_factory, prefix: list[str]):
        super().__init__(m)
        for a, b in zip(prefix, prefix[1:]):
            if b not in m.successors(a):
                raise StrategyError(f"prefix uses missing edge {a!r} -> {b!r}")
        self._base_factory = base_factory
        self._prefix = list(prefix)
        self._active: Strategy | None = None

    def observe(self, state):
        if self._active is None:
            base = self._base_factory()
            if self._prefix and state in self._mdp.successors(self._prefix[-1]):
                for s in self._prefix:
                    base.observe(s)
            self._active = base
        self._active.observe(state)

    def move(self, state):
        self._check_p1(state)
        if self._active is None:
            raise StrategyError("move before first observe")
        return self._active.move(state)

    def clone(self):
        return InitializedStrategy(self._mdp, self._base_factory, self._prefix)


# ---------------------------------------------------------------------------
# spec dicts


def _table_to_spec(table: dict[str, dict[str, Fraction]]) -> dict:
    return {s: {t: format_rational(Fraction(q)) for t, q in sorted(d.items())}
            for s, d in sorted(table.items())}


def _table_from_spec(spec: dict) -> dict[str, dict[str, Fraction]]:
    return {s: {t: parse_rational(q) for t, q in d.items()}
            for s, d in spec.items()}


def memoryless_spec(table, name: str = "memoryless") -> dict:
    return {"kind": "memoryless", "name": name, "table": _table_to_spec(table)}


def pure_spec(choices: dict[str, str], name: str = "memoryless") -> dict:
    return memoryless_spec({s: {t: Fraction(1)} for s, t in choices.items()},
                           name)


def moore_spec(machine: MooreStrategy, name: str | None = None) -> dict:
    mems = [machine.m0]
    seen = {machine.m0}
    for (mem, _s), nxt in sorted(machine.update.items(), key=lambda kv: repr(kv[0])):
        for x in (mem, nxt):
            if x not in seen:
                seen.add(x)
                mems.append(x)
    label = {mem: f"m{i}" for i, mem in enumerate(mems)}
    upd: dict = {}
    for (mem, s), nxt in machine.update.items():
        upd.setdefault(label[mem], {})[s] = label[nxt]
    mov: dict = {}
    for (mem, s), d in machine.moves.items():
        mov.setdefault(label[mem], {})[s] = {t: format_rational(Fraction(q))
                                             for t, q in sorted(d.items())}
    return {"kind": "moore", "name": name or machine.name or "moore",
            "m0": label[machine.m0],
            "update": {k: dict(sorted(v.items())) for k, v in sorted(upd.items())},
            "moves": {k: dict(sorted(v.items())) for k, v in sorted(mov.items())}}


def _moore_from_spec(spec: dict) -> MooreStrategy:
    update = {(mem, s): nxt for mem, row in spec["update"].items()
              for s, nxt in row.items()}
    moves = {(mem, s): {t: parse_rational(q) for t, q in d.items()}
             for mem, row in spec["moves"].items() for s, d in row.items()}
    return MooreStrategy(spec["m0"], update, moves, spec.get("name", ""))


def composite_spec(outer: dict, regions, steps=None,
                   name: str = "composite") -> dict:
    """regions: list of (state set, inner spec); steps: (k, inner spec) or None."""
    inners = []
    reg_out = []
    for states, inner in regions:
        reg_out.append({"states": sorted(states), "inner": len(inners)})
        inners.append(inner)
    steps_out = None
    if steps is not None:
        steps_out = {"k": int(steps[0]), "inner": len(inners)}
        inners.append(steps[1])
    return {"kind": "composite", "name": name, "outer": outer,
            "regions": reg_out, "steps": steps_out, "inners": inners}


def counter_ugec_spec(component, sub_ec, dmax1, cmax1, lambda2, lambda1c,
                      name: str = "ugec-counter") -> dict:
    return {"kind": "counter_ugec", "name": name,
            "component": sorted(component), "sub_ec": sorted(sub_ec),
            "dmax1": sorted(dmax1), "cmax1": sorted(cmax1),
            "lambda2": _table_to_spec(lambda2), "lambda1c": lambda1c}


def limit_sure_spec(component, sub_ec, dmax1, lambda2, lambda1, eps,
                    name: str = "vgec-limit-sure") -> dict:
    return {"kind": "counter_limit_sure", "name": name,
            "component": sorted(component), "sub_ec": sorted(sub_ec),
            "dmax1": sorted(dmax1), "lambda2": _table_to_spec(lambda2),
            "lambda1": lambda1, "epsilon": format_rational(Fraction(eps))}


def spec_to_json(spec: dict) -> str:
    return json.dumps({"format": "bwc-strategy", "body": spec}, indent=2) + "\n"


def spec_from_json(text: str) -> dict:
    doc = json.loads(text)
    if not isinstance(doc, dict) or doc.get("format") != "bwc-strategy":
        raise StrategyError("not a strategy document")
    return doc["body"]


def instantiate(spec: dict, m: Mdp) -> Strategy:
    """Build an executable strategy from a spec.  Deterministic: the same
    spec on the same model always yields the same behavior for a fixed seed.
    """
    kind = spec["kind"]
    if kind == "memoryless":
        return TableStrategy(m, _table_from_spec(spec["table"]), spec)
    if kind == "moore":
        return MooreRunner(m, _moore_from_spec(spec), spec)
    if kind == "composite":
        inners = spec["inners"]
        regions = [(frozenset(r["states"]),
                    _factory(inners[r["inner"]], m),
                    inners[r["inner"]].get("name", f"inner{r['inner']}"))
                   for r in spec["regions"]]
        steps = None
        if spec.get("steps") is not None:
            k = spec["steps"]["k"]
            inner = inners[spec["steps"]["inner"]]
            steps = (k, _factory(inner, m), inner.get("name", "steps-inner"))
        return CompositeStrategy(m, _factory(spec["outer"], m), regions,
                                 steps, spec)
    if kind == "counter_ugec":
        return CounterUgecStrategy(m, spec)
    if kind == "counter_limit_sure":
        return LimitSureStrategy(m, spec)
    raise StrategyError(f"unknown strategy kind {kind!r}")


def _factory(spec: dict, m: Mdp):
    proto = instantiate(spec, m)
    return proto.clone


def is_finite_memory(spec: dict) -> bool:
    kind = spec["kind"]
    if kind in ("memoryless", "moore"):
        return True
    if kind == "composite":
        return is_finite_memory(spec["outer"]) and \
            all(is_finite_memory(i) for i in spec["inners"])
    return False


# ---------------------------------------------------------------------------
# flattening finite specs to Moore tables


def as_moore(spec: dict, m: Mdp, starts: Iterable[str]) -> MooreStrategy | None:
    """Flatten a finite-memory spec into one Moore machine whose tables cover
    every product state reachable from the given start states (with P2
    branching over all successors).  Returns None for infinite-memory specs.
    """
    if not is_finite_memory(spec):
        return None
    machine = _build_machine(spec, m)
    update: dict = {}
    moves: dict = {}
    work = [(machine.m0, s) for s in sorted(set(starts))]
    seen = set(work)
    while work:
        mem, s = work.pop()
        nxt_mem = machine.update[(mem, s)]
        update[(mem, s)] = nxt_mem
        if m.owner_of(s) == P1:
            d = machine.moves[(mem, s)]
            moves[(mem, s)] = d
            succs = sorted(d)
        else:
            succs = m.successors(s)
        for t in succs:
            node = (nxt_mem, t)
            if node not in seen:
                seen.add(node)
                work.append(node)
    return MooreStrategy(machine.m0, update, moves, spec.get("name", ""))


class _LazyMachine:
    """Moore tables computed on demand (used only while flattening)."""

    def __init__(self, m0, update_fn, moves_fn):
        self.m0 = m0
        self.update = _FnDict(update_fn)
        self.moves = _FnDict(moves_fn)


class _FnDict:
    def __init__(self, fn):
        self._fn = fn

    def __getitem__(self, key):
        return self._fn(*key)


def _build_machine(spec: dict, m: Mdp):
    kind = spec["kind"]
    if kind == "memoryless":
        table = _table_from_spec(spec["table"])
        return _LazyMachine(".", lambda mem, s: ".",
                            lambda mem, s: table[s])
    if kind == "moore":
        return _moore_from_spec(spec)
    if kind == "composite":
        outer = _build_machine(spec["outer"], m)
        inners = [_build_machine(sp, m) for sp in spec["inners"]]
        regions = [(frozenset(r["states"]), r["inner"]) for r in spec["regions"]]
        steps = spec.get("steps")
        k = steps["k"] if steps else None
        step_inner = steps["inner"] if steps else None

        def pick(mem, s):
            """Inner index if the trigger fires at arrival s, else None."""
            tag = mem[0]
            if tag == "i":
                return mem[1]
            st = mem[2]
            for region, j in regions:
                if s in region:
                    return j
            if k is not None and st >= k:
                return step_inner
            return None

        def upd(mem, s):
            j = pick(mem, s)
            if j is None:
                st = mem[2]
                return ("o", outer.update[(mem[1], s)],
                        min(st + 1, k) if k is not None else 0)
            if mem[0] == "i":
                return ("i", j, inners[j].update[(mem[2], s)])
            return ("i", j, inners[j].update[(inners[j].m0, s)])

        def mov(mem, s):
            j = pick(mem, s)
            if j is None:
                return outer.moves[(mem[1], s)]
            im = mem[2] if mem[0] == "i" else inners[j].m0
            return inners[j].moves[(im, s)]

        return _LazyMachine(("o", outer.m0, 0), upd, mov)
    raise StrategyError(f"cannot flatten {kind!r}")


# ---------------------------------------------------------------------------
# constructions


def build_ugec_strategy(m: Mdp, component, lam1c_spec: dict,
                        lam2: dict[str, dict[str, Fraction]], sub_ec,
                        view: PriorityView | None = None) -> CounterUgecStrategy:
    """The round-scheduled witness inside an ultra-good EC (phase a plays the
    randomized strategy for n_i steps, phase b recovers via the sure witness).
    """
    view = view or m.p1_view()
    dmax1 = max_priority_states(view, sub_ec, "even")
    cmax1 = max_priority_states(view, component, "even")
    if not dmax1 or not cmax1:
        raise StrategyError("component lacks dominant even states")
    spec = counter_ugec_spec(component, sub_ec, dmax1, cmax1, lam2, lam1c_spec)
    return CounterUgecStrategy(m, spec)


def build_limit_sure_strategy(m: Mdp, component, lam2, sub_ec,
                              lam1_spec: dict, eps: Fraction,
                              view: PriorityView | None = None) -> LimitSureStrategy:
    """The round-scheduled witness inside a very-good EC for thresholds
    arbitrarily close to one (switches to the global sure strategy on a miss).
    """
    if not (0 < Fraction(eps) <= 1):
        raise StrategyError("epsilon must be in (0, 1]")
    view = view or m.p1_view()
    dmax1 = max_priority_states(view, sub_ec, "even")
    if not dmax1:
        raise StrategyError("sub-EC lacks dominant even states")
    spec = limit_sure_spec(component, sub_ec, dmax1, lam2, lam1_spec, eps)
    return LimitSureStrategy(m, spec)


def compose_switch(m: Mdp, outer: dict, regions=(), steps=None,
                   name: str = "composite") -> CompositeStrategy:
    """Deterministic switch composition; see CompositeStrategy."""
    spec = composite_spec(outer, list(regions), steps, name)
    return instantiate(spec, m)


def initialize(m: Mdp, spec_or_factory, prefix) -> InitializedStrategy:
    """The initialized strategy for the given prefix."""
    if isinstance(spec_or_factory, dict):
        factory = _factory(spec_or_factory, m)
    else:
        factory = spec_or_factory
    return InitializedStrategy(m, factory, list(prefix))


def next_move(strategy: Strategy, state: str) -> dict[str, Fraction]:
    """Distribution chosen at a P1 state; contract error on P2 states."""
    return strategy.move(state)


def decide_on_prefix(m: Mdp, strategy: Strategy, prefix: list[str]) -> dict[str, Fraction]:
    """Replay a fresh clone through the prefix and return the move at its
    last state (the strategy as a function of prefixes).
    """
    run = strategy.clone()
    for s in prefix:
        run.observe(s)
    return run.move(prefix[-1])
