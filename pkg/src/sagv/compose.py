"""Composition of reactive modules, MAS assembly, neighborhoods, MDP compilation.

The binary composition follows the three rules (one side steps, the other
side steps, both step) with self-loop pruning.  For total modules the rules
collapse to a convenient form: fix a global state and a global input; every
agent's local input is then determined (internal inputs read the current
labels, free inputs come from the global input), and the composed successors
are exactly "each non-empty subset of agents moves to local successors".
The module arena and the MDP compiler use that form directly, which also
extends smoothly to strategy-restricted (partial) modules: a non-moving
agent needs no witness transition.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .core import (
    Assumption,
    Dist,
    Domain,
    EMPTY_VALUATION,
    Module,
    ProbModule,
    ProbTransition,
    Repertoire,
    Transition,
    Valuation,
    all_valuations,
    as_prob,
    full_repertoire,
    merge,
    support_module,
    validate_repertoire,
)
from .errors import (
    DeadlockState,
    NotAsynchronous,
    UnknownAgent,
    UnsupportedFormula,
    ValidationError,
)
from .logic import PropAtom, VarAtom
from .mcprob import MDP, MdpAction
from .strategy import IrStrategy, Step


def _flat(q) -> tuple:
    return q if isinstance(q, tuple) else (q,)


def _arity(m) -> int:
    return len(_flat(m.init))


def asynchronous(m1, m2) -> bool:
    return not (m1.state_vars & m2.state_vars)


def unit_module(domain: Domain, name: str = "unit") -> Module:
    """One state, no variables; neutral element of composition up to isomorphism."""
    t = Transition("u", EMPTY_VALUATION, "u")
    return Module(
        name=name,
        state_vars=frozenset(),
        input_vars=frozenset(),
        domain=domain,
        states=("u",),
        init="u",
        label={"u": EMPTY_VALUATION},
        trans=frozenset([t]),
    )


def compose2(m1: Module, m2: Module) -> Module:
    """Binary composition with rule tags (ASYN_L/ASYN_R/SYN) and pruning."""
    if not asynchronous(m1, m2):
        raise NotAsynchronous(
            f"{m1.name} and {m2.name} share state variables "
            f"{sorted(m1.state_vars & m2.state_vars)}"
        )
    if m1.domain.values != m2.domain.values:
        raise ValidationError("composed modules must share one domain")
    xvars = m1.state_vars | m2.state_vars
    ivars = (m1.input_vars | m2.input_vars) - xvars
    domain = m1.domain

    states = []
    label = {}
    for q1 in m1.states:
        for q2 in m2.states:
            s = _flat(q1) + _flat(q2)
            states.append(s)
            label[s] = merge(m1.label[q1], m2.label[q2])
    init = _flat(m1.init) + _flat(m2.init)
    n1 = _arity(m1)
    unflat1 = {_flat(q): q for q in m1.states}
    unflat2 = {_flat(q): q for q in m2.states}

    tags: dict[Transition, set[str]] = {}
    for s in states:
        q1 = unflat1[s[:n1]]
        q2 = unflat2[s[n1:]]
        for alpha in all_valuations(ivars, domain):
            g = merge(label[s], alpha)
            a1 = g.restrict(m1.input_vars)
            a2 = g.restrict(m2.input_vars)
            succ1 = m1.successors(q1, a1)
            succ2 = m2.successors(q2, a2)
            generated: dict[tuple, set[str]] = {}
            if succ1 and succ2:
                for d1 in succ1:
                    generated.setdefault(_flat(d1) + _flat(q2), set()).add("ASYN_L")
                for d2 in succ2:
                    generated.setdefault(_flat(q1) + _flat(d2), set()).add("ASYN_R")
                for d1 in succ1:
                    for d2 in succ2:
                        generated.setdefault(_flat(d1) + _flat(d2), set()).add("SYN")
            if len(generated) > 1 and s in generated:
                del generated[s]  # Def. 1(b): drop the self-loop next to proper moves
            if not generated:
                generated[s] = {"implicit"}
            for dst, ruleset in generated.items():
                t = Transition(s, alpha, dst)
                tags.setdefault(t, set()).update(ruleset)

    return Module(
        name=f"{m1.name}|{m2.name}",
        state_vars=frozenset(xvars),
        input_vars=frozenset(ivars),
        domain=domain,
        states=tuple(states),
        init=init,
        label=label,
        trans=frozenset(tags),
        rule_tags={t: frozenset(r) for t, r in tags.items()},
    )


def compose_all(mods: Sequence[Module]) -> Module:
    """Left fold of compose2; a singleton list is returned unchanged."""
    if not mods:
        raise ValidationError("cannot compose an empty module list")
    out = mods[0]
    for m in mods[1:]:
        out = compose2(out, m)
    return out


def compose_with_assumption(m: Module, a: Assumption) -> Assumption:
    """Extended composite module: accepting states lift through the product."""
    composed = compose2(m, a.module)
    n1 = _arity(m)
    accepting_flat = {_flat(f) for f in a.accepting}
    accepting = frozenset(s for s in composed.states if s[n1:] in accepting_flat)
    return Assumption(module=composed, accepting=accepting)


# ---------------------------------------------------------------------------
# Multi-agent systems


@dataclass(frozen=True, eq=False)
class AgentSpec:
    name: str
    module: Module | ProbModule
    repertoire: Repertoire


def agent(name: str, module, repertoire: Optional[Repertoire] = None) -> AgentSpec:
    rep = repertoire if repertoire is not None else full_repertoire(module)
    validate_repertoire(rep, module)
    return AgentSpec(name, module, rep)


@dataclass(frozen=True, eq=False)
class MAS:
    agents: tuple[AgentSpec, ...]

    def __post_init__(self):
        names = [a.name for a in self.agents]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate agent names: {names}")
        for a, b in itertools.combinations(self.agents, 2):
            if not asynchronous(a.module, b.module):
                raise NotAsynchronous(f"{a.name} and {b.name} share state variables")
            if a.module.domain.values != b.module.domain.values:
                raise ValidationError("all modules must share one domain")
        for a in self.agents:
            validate_repertoire(a.repertoire, a.module)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.agents)

    def by_name(self, name: str) -> AgentSpec:
        for a in self.agents:
            if a.name == name:
                return a
        raise UnknownAgent(f"unknown agent {name!r}")

    def index_of(self, name: str) -> int:
        for i, a in enumerate(self.agents):
            if a.name == name:
                return i
        raise UnknownAgent(f"unknown agent {name!r}")

    @property
    def domain(self) -> Domain:
        return self.agents[0].module.domain

    def composed(self) -> Module:
        return compose_all([_qual_module(a.module) for a in self.agents])


def _qual_module(m) -> Module:
    return support_module(m) if isinstance(m, ProbModule) else m


def neighborhood(mas: MAS, seed, k: int) -> frozenset[str]:
    """Agents reachable from the seed through shared variables in <= k hops."""
    if k < 1:
        raise ValidationError("neighborhood radius must be >= 1")
    seed_set = {seed} if isinstance(seed, str) else set(seed)
    if not seed_set:
        raise ValidationError("neighborhood seed must be non-empty")
    for s in seed_set:
        mas.by_name(s)

    def direct(name: str) -> set[str]:
        me = mas.by_name(name).module
        out = set()
        for other in mas.agents:
            if other.name == name:
                continue
            om = other.module
            if (me.input_vars & om.state_vars) or (om.input_vars & me.state_vars):
                out.add(other.name)
        return out

    current = set().union(*(direct(s) for s in seed_set)) - seed_set
    for _ in range(k - 1):
        if not current:
            break
        grown = current | set().union(*(direct(j) for j in current))
        current = grown - seed_set
    return frozenset(current)


def neighborhood_composition(mas: MAS, seed, k: int) -> Module:
    """C^seed_k: the composition of all modules in the k-neighborhood."""
    members = [a.name for a in mas.agents if a.name in neighborhood(mas, seed, k)]
    if not members:
        return unit_module(mas.domain)
    return compose_all([_qual_module(mas.by_name(n).module) for n in members])


# ---------------------------------------------------------------------------
# The module-layer arena (qualitative semantics over a MAS)


class ModuleArena:
    """Global game graph of a MAS; states are tuples of local states.

    Step labels are the global input valuations, so a recorded edge
    (q, label, q') is exactly a trace transition.  `acceptance_preds` lift
    assumption Büchi sets; `extra_labels` lets nested checking attach fresh
    propositions to global states.
    """

    has_next_ok = False

    def __init__(self, mas: MAS, acceptance_preds=(), extra_labels=None):
        self.mas = mas
        self.agents = mas.names
        self._support = {a.name: _qual_module(a.module) for a in mas.agents}
        self._agent_index = {a.name: i for i, a in enumerate(mas.agents)}
        xvars = set().union(*(a.module.state_vars for a in mas.agents))
        ivars = set().union(*(a.module.input_vars for a in mas.agents)) - xvars
        self.free_inputs = frozenset(ivars)
        self._free_vals = all_valuations(ivars, mas.domain)
        self.initial = tuple(a.module.init for a in mas.agents)
        self._acc_preds = tuple(acceptance_preds)
        self.extra = dict(extra_labels or {})
        self._steps_cache: dict = {}
        self._label_cache: dict = {}
        self._states: Optional[tuple] = None

    def label_of(self, q) -> Valuation:
        if q not in self._label_cache:
            v = EMPTY_VALUATION
            for i, name in enumerate(self.agents):
                v = merge(v, self._support[name].label[q[i]])
            self._label_cache[q] = v
        return self._label_cache[q]

    def steps(self, q) -> tuple[Step, ...]:
        if q in self._steps_cache:
            return self._steps_cache[q]
        out = []
        base = self.label_of(q)
        for alpha in self._free_vals:
            g = merge(base, alpha)
            locs = []
            for i, name in enumerate(self.agents):
                mod = self._support[name]
                a_i = g.restrict(mod.input_vars)
                locs.append((a_i, mod.successors(q[i], a_i)))
            options = [sorted(set(sc) | {q[i]}, key=repr) for i, (_, sc) in enumerate(locs)]
            legit_self = any(q[i] in sc for i, (_, sc) in enumerate(locs))
            cands = set()
            for combo in itertools.product(*options):
                q2 = tuple(combo)
                if q2 == q and not legit_self:
                    continue
                cands.add(q2)
            if len(cands) > 1:
                cands.discard(q)
            for q2 in sorted(cands, key=repr):
                visible = tuple(
                    sorted(
                        (self.agents[i], Transition(q[i], locs[i][0], q2[i]))
                        for i in range(len(q))
                        if q2[i] != q[i]
                    )
                )
                out.append(Step(label=alpha, dst=q2, visible=visible))
        self._steps_cache[q] = tuple(out)
        return self._steps_cache[q]

    @property
    def states(self) -> tuple:
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

    @property
    def acceptance(self) -> tuple[frozenset, ...]:
        return tuple(
            frozenset(q for q in self.states if pred(q)) for pred in self._acc_preds
        )

    def obs(self, agent_name, q):
        try:
            return q[self._agent_index[agent_name]]
        except KeyError:
            raise UnknownAgent(f"unknown agent {agent_name!r}") from None

    def menu(self, agent_name, local_state):
        return self.mas.by_name(agent_name).repertoire.at(local_state)

    def allows(self, choice, token: Transition) -> bool:
        for t in choice:
            if isinstance(t, ProbTransition):
                if (
                    t.src == token.src
                    and t.input == token.input
                    and token.dst in t.dist.support
                ):
                    return True
            elif t == token:
                return True
        return False

    def atom_true(self, atom, q) -> bool:
        if isinstance(atom, VarAtom):
            val = self.label_of(q).get(atom.var)
            if val is None:
                raise UnsupportedFormula(
                    f"variable {atom.var!r} is not a state variable of the system"
                )
            return val == atom.value
        if isinstance(atom, PropAtom):
            return atom.name in self.extra.get(q, frozenset())
        raise UnsupportedFormula(f"not an atom: {atom!r}")

    def indistinguishable(self, agent_name, q) -> frozenset:
        i = self._agent_index[agent_name]
        return frozenset(s for s in self.states if s[i] == q[i])


# ---------------------------------------------------------------------------
# Assumption-extended systems


@dataclass(frozen=True, eq=False)
class ExtendedSystem:
    """A MAS together with an uncontrolled environment agent and Büchi states."""

    mas: MAS
    env: str
    accepting_local: frozenset

    def arena(self) -> ModuleArena:
        idx = self.mas.index_of(self.env)
        acc = self.accepting_local
        return ModuleArena(self.mas, acceptance_preds=(lambda q: q[idx] in acc,))


def extend_with_assumption(agents: Iterable[AgentSpec], assumption: Assumption) -> ExtendedSystem:
    agents = list(agents)
    taken = {a.name for a in agents}
    env_name = assumption.module.name
    while env_name in taken:
        env_name += "_env"
    env_mod = assumption.module
    if env_mod.name != env_name:
        env_mod = Module(
            name=env_name,
            state_vars=env_mod.state_vars,
            input_vars=env_mod.input_vars,
            domain=env_mod.domain,
            states=env_mod.states,
            init=env_mod.init,
            label=dict(env_mod.label),
            trans=env_mod.trans,
            rule_tags=dict(env_mod.rule_tags),
        )
    mas = MAS(tuple(agents) + (agent(env_name, env_mod),))
    return ExtendedSystem(mas=mas, env=env_name, accepting_local=assumption.accepting)


# ---------------------------------------------------------------------------
# Strategy restriction (strategy-module composition)


def restrict_agent(spec: AgentSpec, strat: IrStrategy) -> AgentSpec:
    """Replace an agent by the module induced by its synthesized strategy."""
    mod = spec.module
    chosen = set()
    for q in mod.states:
        chosen.update(strat.at(q))
    if isinstance(mod, ProbModule):
        new_mod = ProbModule(
            name=mod.name,
            state_vars=mod.state_vars,
            input_vars=mod.input_vars,
            domain=mod.domain,
            states=mod.states,
            init=mod.init,
            label=dict(mod.label),
            trans=frozenset(t for t in mod.trans if t in chosen),
        )
    else:
        new_mod = Module(
            name=mod.name,
            state_vars=mod.state_vars,
            input_vars=mod.input_vars,
            domain=mod.domain,
            states=mod.states,
            init=mod.init,
            label=dict(mod.label),
            trans=frozenset(t for t in mod.trans if t in chosen),
        )
    rep = Repertoire({q: (frozenset(strat.at(q)),) for q in mod.states})
    return AgentSpec(spec.name, new_mod, rep)


def restricted_mas(mas: MAS, strategies: Mapping[str, IrStrategy]) -> MAS:
    out = []
    for spec in mas.agents:
        if spec.name in strategies:
            out.append(restrict_agent(spec, strategies[spec.name]))
        else:
            out.append(spec)
    return MAS(tuple(out))


# ---------------------------------------------------------------------------
# MDP compilation


def _choice_allows_triple(choice, triple: ProbTransition) -> bool:
    for t in choice:
        if isinstance(t, ProbTransition):
            if t == triple:
                return True
        elif (
            isinstance(t, Transition)
            and triple.dist.is_point
            and t.src == triple.src
            and t.input == triple.input
            and triple.dist.support == (t.dst,)
        ):
            return True
    return False


def compile_mdp(mas: MAS, restrict: Optional[Mapping[str, IrStrategy]] = None) -> MDP:
    """Compile a (Prob)Module MAS into an MDP over reachable global states.

    Actions combine a scheduler pick (global input, moving subset, one
    enabled distribution per mover) and record which agents' visible choices
    they expose; duplicates with equal exposure and distribution collapse.
    A pure-stutter action appears only where no mover is enabled, mirroring
    the self-loop pruning of the composition rules.
    """
    restrict = dict(restrict or {})
    prob = {a.name: (a.module if isinstance(a.module, ProbModule) else as_prob(a.module)) for a in mas.agents}
    names = mas.names
    xvars = set().union(*(a.module.state_vars for a in mas.agents))
    ivars = set().union(*(a.module.input_vars for a in mas.agents)) - xvars
    free_vals = all_valuations(ivars, mas.domain)

    label_cache: dict = {}

    def label_of(q) -> Valuation:
        if q not in label_cache:
            v = EMPTY_VALUATION
            for i, name in enumerate(names):
                v = merge(v, prob[name].label[q[i]])
            label_cache[q] = v
        return label_cache[q]

    def actions_of(q) -> tuple[MdpAction, ...]:
        acc: dict = {}
        base = label_of(q)
        for alpha in free_vals:
            g = merge(base, alpha)
            movers: list[tuple[int, list[ProbTransition]]] = []
            can_stutter = False
            for i, name in enumerate(names):
                mod = prob[name]
                a_i = g.restrict(mod.input_vars)
                triples = mod.triples(q[i], a_i)
                moving = []
                for t in triples:
                    if t.dist.is_point and t.dist.support == (q[i],):
                        can_stutter = True
                        continue
                    if name in restrict and not _choice_allows_triple(
                        restrict[name].at(q[i]), t
                    ):
                        continue
                    moving.append(t)
                if moving:
                    movers.append((i, moving))
            produced = False
            idxs = [i for i, _ in movers]
            pools = {i: ts for i, ts in movers}
            for r in range(1, len(idxs) + 1):
                for subset in itertools.combinations(idxs, r):
                    for combo in itertools.product(*(pools[i] for i in subset)):
                        branches: dict = {}
                        for outs in itertools.product(
                            *(t.dist.weights for t in combo)
                        ):
                            dst = list(q)
                            w = Fraction(1)
                            for (local_dst, wi), i in zip(outs, subset):
                                dst[i] = local_dst
                                w *= wi
                            key = tuple(dst)
                            branches[key] = branches.get(key, Fraction(0)) + w
                        dist = Dist.of(branches)
                        exposed = tuple(
                            sorted((names[i], t) for i, t in zip(subset, combo))
                        )
                        acc[(exposed, dist)] = MdpAction(
                            name=(alpha, tuple(names[i] for i in subset)),
                            dist=dist,
                            exposed=exposed,
                        )
                        produced = True
            if not produced and can_stutter:
                dist = Dist.point(q)
                acc[((), dist)] = MdpAction(name=(alpha, ()), dist=dist, exposed=())
        return tuple(acc[k] for k in sorted(acc, key=repr))

    init = tuple(a.module.init for a in mas.agents)
    states = []
    seen = {init}
    frontier = [init]
    actions: dict = {}
    while frontier:
        s = frontier.pop()
        states.append(s)
        acts = actions_of(s)
        if not acts:
            raise DeadlockState(f"global state {s!r} has no enabled composed transition")
        actions[s] = acts
        for a in acts:
            for dst in a.dist.support:
                if dst not in seen:
                    seen.add(dst)
                    frontier.append(dst)
    labels = {s: label_of(s) for s in states}
    return MDP(states=tuple(sorted(states, key=repr)), actions=actions, initial=init, labels=labels)


# ---------------------------------------------------------------------------
# Isomorphism checking (for order-independence of composition)


def isomorphic(m1: Module, m2: Module, mapping: Mapping) -> bool:
    """Is `mapping` a transition-respecting bijection m1 -> m2?"""
    if set(mapping) != set(m1.states):
        return False
    if set(mapping.values()) != set(m2.states):
        return False
    if mapping[m1.init] != m2.init:
        return False
    for q in m1.states:
        if m1.label[q] != m2.label[mapping[q]]:
            return False
    mapped = {Transition(mapping[t.src], t.input, mapping[t.dst]) for t in m1.trans}
    return mapped == set(m2.trans)


def reorder_witness(perm: Sequence[int], arities: Sequence[int]):
    """State bijection induced by permuting composition order.

    `perm[i]` is the original index of the module at position i in the new
    order; `arities` are the flat widths of the original modules.
    """
    offsets = []
    pos = 0
    for w in arities:
        offsets.append((pos, pos + w))
        pos += w

    def fn(state: tuple) -> tuple:
        parts = [state[a:b] for a, b in offsets]
        out: list = []
        for i in perm:
            out.extend(parts[i])
        return tuple(out)

    return fn


def to_dot_module(m: Module) -> str:
    ids = {q: f"s{i}" for i, q in enumerate(m.states)}
    lines = ["digraph composed {", "  rankdir=LR;"]
    for q in m.states:
        shape = "doublecircle" if q == m.init else "circle"
        lines.append(f'  {ids[q]} [label="{q} {m.label[q]}", shape={shape}];')
    for t in sorted(m.trans, key=repr):
        tag = ",".join(sorted(m.tags(t))) or "-"
        lines.append(f'  {ids[t.src]} -> {ids[t.dst]} [label="{t.input} {tag}"];')
    lines.append("}")
    return "\n".join(lines)
