"""Strategies over game arenas: enumeration, application, outcome subgraphs.

An *arena* is any object with the small protocol used below (ModuleArena in
`compose`, GameArena in `mcprob`): agents, reachable states, labeled steps
with per-agent visible move tokens, observation keys, per-observation menus
of choices, and an `allows(choice, token)` test.  Everything in this module
is generic over that protocol.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Mapping, Optional

from .errors import ValidationError


@dataclass(frozen=True)
class Step:
    """One labeled global step; `visible` maps agents to local move tokens."""

    label: object
    dst: object
    visible: tuple

    def visible_map(self) -> dict:
        return dict(self.visible)


@dataclass(frozen=True, eq=False)
class IrStrategy:
    """Memoryless uniform strategy: one legitimate choice per observation key."""

    agent: str
    choice: Mapping[object, object]

    def at(self, obs_key):
        return self.choice[obs_key]


@dataclass(frozen=True, eq=False)
class BoundedRecallStrategy:
    """Bounded-memory strategy over stutter-collapsed observation windows.

    The memory is the window of the last `memory` distinct observations
    (current one included), which makes the update stuttering-invariant by
    construction.  Any such strategy is a valid perfect-recall strategy, so a
    witness found here is sound for existential claims.
    """

    agent: str
    memory: int
    table: Mapping[tuple, object]

    def at(self, window: tuple):
        return self.table[window]


@dataclass(frozen=True, eq=False)
class JointStrategy:
    parts: Mapping[str, IrStrategy]

    @property
    def members(self) -> tuple[str, ...]:
        return tuple(sorted(self.parts))

    def __contains__(self, agent) -> bool:
        return agent in self.parts

    def __getitem__(self, agent) -> IrStrategy:
        return self.parts[agent]


def complies(arena, q, step: Step, js: JointStrategy) -> bool:
    """Does a step respect every coalition member's choice at q?"""
    for agent, token in step.visible:
        strat = js.parts.get(agent)
        if strat is None:
            continue
        if not arena.allows(strat.at(arena.obs(agent, q)), token):
            return False
    return True


def strategy_count(arena, coalition) -> int:
    """Number of uniform memoryless joint strategies for the coalition."""
    total = 1
    for agent in sorted(coalition):
        keys = sorted({arena.obs(agent, q) for q in arena.states}, key=repr)
        for key in keys:
            total *= len(arena.menu(agent, key))
    return total


def enumerate_ir(arena, coalition) -> Iterator[JointStrategy]:
    """Exhaustive, duplicate-free stream of uniform memoryless joint strategies."""
    coalition = tuple(sorted(coalition))
    per_agent = []
    for agent in coalition:
        keys = sorted({arena.obs(agent, q) for q in arena.states}, key=repr)
        menus = [arena.menu(agent, key) for key in keys]
        combos = itertools.product(*menus) if keys else iter([()])
        per_agent.append([IrStrategy(agent, dict(zip(keys, combo))) for combo in combos])
    for picks in itertools.product(*per_agent):
        yield JointStrategy(dict(zip(coalition, picks)))


class RestrictedArena:
    """View of an arena with non-compliant steps removed (pure, reusable)."""

    def __init__(self, base, js: JointStrategy):
        self.base = base
        self.js = js

    @property
    def agents(self):
        return self.base.agents

    @property
    def states(self):
        return self.base.states

    @property
    def initial(self):
        return self.base.initial

    @property
    def acceptance(self):
        return self.base.acceptance

    @property
    def has_next_ok(self):
        return self.base.has_next_ok

    def steps(self, q):
        return tuple(s for s in self.base.steps(q) if complies(self.base, q, s, self.js))

    def obs(self, agent, q):
        return self.base.obs(agent, q)

    def menu(self, agent, key):
        return self.base.menu(agent, key)

    def allows(self, choice, token):
        return self.base.allows(choice, token)

    def atom_true(self, atom, q):
        return self.base.atom_true(atom, q)

    def indistinguishable(self, agent, q):
        return self.base.indistinguishable(agent, q)


def apply(arena, js: JointStrategy) -> RestrictedArena:
    """Prune every step whose coalition-visible component disagrees with js."""
    if isinstance(arena, RestrictedArena):
        merged = dict(arena.js.parts)
        merged.update(js.parts)
        return RestrictedArena(arena.base, JointStrategy(merged))
    return RestrictedArena(arena, js)


@dataclass(frozen=True, eq=False)
class OutcomeSet:
    """Outcome as a sub-transition-system rooted at `root`.

    `edges` holds (state, step-label, destination) triples; at "path" level
    comparisons project the label away.
    """

    root: object
    level: str  # "trace" | "path"
    states: frozenset
    edges: frozenset

    def edge_view(self) -> frozenset:
        if self.level == "path":
            return frozenset((q, d) for q, _, d in self.edges)
        return self.edges


def outcome(
    arena,
    q,
    js: JointStrategy,
    level: str = "trace",
    opponents: Optional[JointStrategy] = None,
) -> OutcomeSet:
    """Reachable compliant subgraph from q (opponents free unless fixed)."""
    if level not in ("trace", "path"):
        raise ValidationError(f"unknown outcome level {level!r}")
    combined = dict(js.parts)
    if opponents is not None:
        combined.update(opponents.parts)
    full = JointStrategy(combined)
    seen = {q}
    edges = set()
    frontier = [q]
    while frontier:
        s = frontier.pop()
        for step in arena.steps(s):
            if not complies(arena, s, step, full):
                continue
            edges.add((s, step.label, step.dst))
            if step.dst not in seen:
                seen.add(step.dst)
                frontier.append(step.dst)
    return OutcomeSet(root=q, level=level, states=frozenset(seen), edges=frozenset(edges))


# ---------------------------------------------------------------------------
# Bounded-recall support: expand an arena so that coalition observations
# carry a stutter-collapsed window of past observations, then reuse all the
# memoryless machinery above.


class RecallArena:
    def __init__(self, base, coalition, memory: int):
        if memory < 1:
            raise ValidationError("memory bound must be >= 1")
        self.base = base
        self.coalition = tuple(sorted(coalition))
        self.memory = memory
        self._states = None

    def _window_init(self, q):
        return tuple((a, (self.base.obs(a, q),)) for a in self.coalition)

    @property
    def initial(self):
        return (self.base.initial, self._window_init(self.base.initial))

    def lift(self, q):
        """Entry point with fresh memory at q (used when checking from q)."""
        return (q, self._window_init(q))

    @property
    def agents(self):
        return self.base.agents

    @property
    def acceptance(self):
        out = []
        for acc in self.base.acceptance:
            out.append(frozenset(s for s in self.states if s[0] in acc))
        return tuple(out)

    @property
    def has_next_ok(self):
        return self.base.has_next_ok

    @property
    def states(self):
        if self._states is None:
            seen = {self.initial}
            frontier = [self.initial]
            while frontier:
                s = frontier.pop()
                for step in self.steps(s):
                    if step.dst not in seen:
                        seen.add(step.dst)
                        frontier.append(step.dst)
            self._states = tuple(sorted(seen, key=repr))
        return self._states

    def steps(self, s):
        q, windows = s
        wmap = dict(windows)
        out = []
        for step in self.base.steps(q):
            new_windows = []
            for a in self.coalition:
                w = wmap[a]
                o2 = self.base.obs(a, step.dst)
                if o2 != w[-1]:
                    w = (w + (o2,))[-self.memory:]
                new_windows.append((a, w))
            out.append(Step(step.label, (step.dst, tuple(new_windows)), step.visible))
        return tuple(out)

    def obs(self, agent, s):
        q, windows = s
        if agent in self.coalition:
            return dict(windows)[agent]
        return self.base.obs(agent, q)

    def menu(self, agent, key):
        if agent in self.coalition:
            return self.base.menu(agent, key[-1])
        return self.base.menu(agent, key)

    def allows(self, choice, token):
        return self.base.allows(choice, token)

    def atom_true(self, atom, s):
        return self.base.atom_true(atom, s[0])

    def indistinguishable(self, agent, s):
        return frozenset(t for t in self.states if self.obs(agent, t) == self.obs(agent, s))


def expand_recall(arena, coalition, memory: int) -> RecallArena:
    return RecallArena(arena, coalition, memory)


def recall_strategy(js: JointStrategy, memory: int) -> dict[str, BoundedRecallStrategy]:
    """Repackage a memoryless strategy on a RecallArena as window tables."""
    out = {}
    for agent, strat in js.parts.items():
        out[agent] = BoundedRecallStrategy(agent, memory, dict(strat.choice))
    return out
