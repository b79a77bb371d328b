"""Quantitative checking: Markov chains, MDPs, iCGSs and PATL/PATL*.

All default computations are exact (Fraction arithmetic, Gaussian
elimination); value iteration is an opt-in approximation that reports its
residual.  The quantitative path fragment is the one accepted by
`automata.monitor_for`: positive boolean combinations of F/G/U over state
predicates.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional

from .automata import DetMonitor, monitor_for
from .core import Dist, Valuation
from .errors import (
    BoundExceeded,
    EmptyList,
    IllegalAction,
    UnknownAgent,
    UnsupportedFormula,
    ValidationError,
)
from .logic import Coop, Flavor, PropAtom, VarAtom, atom_nodes
from .strategy import JointStrategy, Step, enumerate_ir

# re-exported: Dist is a core type but belongs to this module's contract
__all__ = [
    "Dist",
    "ICGS",
    "MarkovChain",
    "MDP",
    "MdpAction",
    "GameArena",
    "product_dist",
    "induce_mc",
    "mc_probability",
    "mdp_probability",
    "check_patl",
    "project_qualitative",
]


def product_dist(ds: list[Dist]) -> Dist:
    """Product distribution over outcome tuples."""
    if not ds:
        raise EmptyList("product of zero distributions")
    out: dict[tuple, Fraction] = {}
    for combo in itertools.product(*(d.weights for d in ds)):
        key = tuple(k for k, _ in combo)
        w = Fraction(1)
        for _, wi in combo:
            w *= wi
        out[key] = out.get(key, Fraction(0)) + w
    return Dist.of(out)


# ---------------------------------------------------------------------------
# Stochastic concurrent game structures


@dataclass(frozen=True, eq=False)
class ICGS:
    """Stochastic concurrent game structure with imperfect information."""

    agents: tuple[str, ...]
    states: tuple
    initial: object
    legal: Mapping[tuple, tuple[str, ...]]  # (state, agent) -> actions
    trans: Mapping[tuple, Dist]  # (state, joint move) -> Dist over states
    labeling: Mapping[object, frozenset]
    obs: Mapping[str, tuple[frozenset, ...]] = field(default_factory=dict)

    def __post_init__(self):
        classes: dict[tuple, frozenset] = {}
        for agent in self.agents:
            partition = list(self.obs.get(agent, ()))
            covered = set().union(*partition) if partition else set()
            for q in self.states:
                if q not in covered:
                    partition.append(frozenset([q]))
            seen: set = set()
            for block in partition:
                if block & seen:
                    raise ValidationError(f"obs blocks of {agent} overlap")
                seen.update(block)
                for q in block:
                    classes[(agent, q)] = block
        object.__setattr__(self, "_classes", classes)
        if self.initial not in self.states:
            raise ValidationError(f"initial state {self.initial!r} not declared")
        for q in self.states:
            if q not in self.labeling:
                raise ValidationError(f"state {q!r} has no labeling")
            for agent in self.agents:
                if not self.legal.get((q, agent)):
                    raise ValidationError(f"no legal action for {agent} at {q!r}")
        for agent in self.agents:
            for q in self.states:
                for q2 in self.obs_class(agent, q):
                    if tuple(self.legal[(q, agent)]) != tuple(self.legal[(q2, agent)]):
                        raise ValidationError(
                            f"uniformity violated: {agent} at {q!r} ~ {q2!r}"
                        )
        for q in self.states:
            for mov in self.legal_moves(q):
                if (q, mov) not in self.trans:
                    raise ValidationError(f"no transition for {q!r} under {mov}")
        for (q, mov), d in self.trans.items():
            if mov not in set(self.legal_moves(q)):
                raise ValidationError(f"transition at {q!r} uses illegal move {mov}")
            for dst in d.support:
                if dst not in self.states:
                    raise ValidationError(f"transition target {dst!r} not declared")

    def legal_moves(self, q) -> tuple:
        menus = [self.legal[(q, a)] for a in self.agents]
        return tuple(itertools.product(*menus))

    def obs_class(self, agent, q) -> frozenset:
        try:
            return self._classes[(agent, q)]
        except KeyError:
            raise UnknownAgent(f"unknown agent {agent!r}") from None

    def dist(self, q, mov) -> Dist:
        return self.trans[(q, mov)]


def deterministic_icgs(g: ICGS) -> bool:
    return all(d.is_point for d in g.trans.values())


# ---------------------------------------------------------------------------
# Qualitative view of an iCGS (the arena protocol)


class GameArena:
    def __init__(self, g: ICGS, extra_labels: Optional[Mapping] = None):
        self.g = g
        self.extra = dict(extra_labels or {})
        self._steps: dict = {}

    @property
    def agents(self):
        return self.g.agents

    @property
    def states(self):
        return self.g.states

    @property
    def initial(self):
        return self.g.initial

    acceptance: tuple = ()
    has_next_ok = True

    def steps(self, q):
        if q not in self._steps:
            out = []
            for mov in self.g.legal_moves(q):
                visible = tuple(sorted(zip(self.g.agents, mov)))
                for dst in self.g.dist(q, mov).support:
                    out.append(Step(label=mov, dst=dst, visible=visible))
            self._steps[q] = tuple(out)
        return self._steps[q]

    def obs(self, agent, q):
        return self.g.obs_class(agent, q)

    def menu(self, agent, key):
        rep = min(key, key=repr)
        return tuple(self.g.legal[(rep, agent)])

    def allows(self, choice, token):
        return choice == token

    def atom_true(self, atom, q) -> bool:
        if isinstance(atom, PropAtom):
            props = self.g.labeling[q] | self.extra.get(q, frozenset())
            return atom.name in props
        if isinstance(atom, VarAtom):
            raise UnsupportedFormula(
                f"variable atom {atom} has no meaning on an iCGS; use propositions"
            )
        raise UnsupportedFormula(f"not an atom: {atom!r}")

    def indistinguishable(self, agent, q):
        return self.g.obs_class(agent, q)


def project_qualitative(g: ICGS, extra_labels: Optional[Mapping] = None) -> GameArena:
    """Support projection: standard ATL* formulas are evaluated on this."""
    return GameArena(g, extra_labels)


# ---------------------------------------------------------------------------
# Markov chains


@dataclass(frozen=True, eq=False)
class MarkovChain:
    states: tuple
    trans: Mapping[object, Dist]
    initial: object
    labels: Mapping[object, object]  # frozenset of props, or a Valuation

    def __post_init__(self):
        for q in self.states:
            if q not in self.trans:
                raise ValidationError(f"chain state {q!r} has no distribution")


def make_letter(raw, atoms: Iterable) -> frozenset:
    """Atoms (VarAtom/PropAtom nodes) satisfied by a raw state label."""
    out = set()
    for atom in atoms:
        if isinstance(atom, PropAtom):
            if not isinstance(raw, Valuation) and atom.name in raw:
                out.add(atom)
        elif isinstance(atom, VarAtom):
            if isinstance(raw, Valuation) and raw.get(atom.var) == atom.value:
                out.add(atom)
    return frozenset(out)


def _solve_reach(nodes, trans_of, init, accept_of) -> Fraction:
    """Exact probability of reaching an accepting BSCC from init.

    `trans_of(n)` yields (successor, weight) pairs; `accept_of(n)` is the
    frozen verdict used when n lies in a bottom SCC.
    """
    order = sorted(nodes, key=repr)
    index = {n: i for i, n in enumerate(order)}
    succs = {n: list(trans_of(n)) for n in order}

    # Tarjan over the chain graph
    low: dict = {}
    num: dict = {}
    stack: list = []
    on_stack: set = set()
    comp_of: dict = {}
    comps: list[list] = []
    counter = itertools.count()
    for root in order:
        if root in num:
            continue
        work = [(root, iter(succs[root]))]
        num[root] = low[root] = next(counter)
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for child, _ in it:
                if child not in num:
                    num[child] = low[child] = next(counter)
                    stack.append(child)
                    on_stack.add(child)
                    work.append((child, iter(succs[child])))
                    advanced = True
                    break
                if child in on_stack:
                    low[node] = min(low[node], num[child])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == num[node]:
                comp = []
                while True:
                    x = stack.pop()
                    on_stack.discard(x)
                    comp.append(x)
                    comp_of[x] = len(comps)
                    if x == node:
                        break
                comps.append(comp)

    values: dict = {}
    transient: list = []
    for ci, comp in enumerate(comps):
        bottom = all(comp_of[d] == ci for n in comp for d, _ in succs[n])
        if bottom:
            v = Fraction(1) if accept_of(comp[0]) else Fraction(0)
            for n in comp:
                values[n] = v
        else:
            transient.extend(comp)
    if init in values:
        return values[init]

    # solve (I - P_tt) x = P_ta * 1_accept over the transient block
    t_index = {n: i for i, n in enumerate(transient)}
    n_t = len(transient)
    mat = [[Fraction(0)] * n_t for _ in range(n_t)]
    rhs = [Fraction(0)] * n_t
    for n in transient:
        i = t_index[n]
        mat[i][i] += Fraction(1)
        for d, w in succs[n]:
            if d in t_index:
                mat[i][t_index[d]] -= w
            else:
                rhs[i] += w * values[d]
    sol = _gauss(mat, rhs)
    for n, i in t_index.items():
        values[n] = sol[i]
    return values[init]


def _gauss(mat: list[list[Fraction]], rhs: list[Fraction]) -> list[Fraction]:
    n = len(mat)
    a = [row[:] + [rhs[i]] for i, row in enumerate(mat)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if a[r][col] != 0), None)
        if pivot is None:
            raise ValidationError("singular linear system in reachability solve")
        a[col], a[pivot] = a[pivot], a[col]
        pv = a[col][col]
        a[col] = [x / pv for x in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    return [a[i][n] for i in range(n)]


def mc_probability(mc: MarkovChain, psi) -> Fraction:
    """Exact probability of the psi-satisfying path set from the initial state."""
    monitor = monitor_for(psi)
    atoms = atom_nodes(psi)
    letters = {q: make_letter(mc.labels[q], atoms) for q in mc.states}

    init = (mc.initial, monitor.step(monitor.initial, letters[mc.initial]))
    nodes = {init}
    frontier = [init]
    edges: dict = {}
    while frontier:
        node = frontier.pop()
        s, m = node
        out = []
        for dst, w in mc.trans[s].weights:
            node2 = (dst, monitor.step(m, letters[dst]))
            out.append((node2, w))
            if node2 not in nodes:
                nodes.add(node2)
                frontier.append(node2)
        edges[node] = out
    return _solve_reach(nodes, lambda n: edges[n], init, lambda n: monitor.verdict(n[1]))


# ---------------------------------------------------------------------------
# MDPs


@dataclass(frozen=True)
class MdpAction:
    name: object
    dist: Dist
    exposed: tuple = ()


@dataclass(frozen=True, eq=False)
class MDP:
    states: tuple
    actions: Mapping[object, tuple[MdpAction, ...]]
    initial: object
    labels: Mapping[object, object]

    def __post_init__(self):
        for q in self.states:
            if not self.actions.get(q):
                raise ValidationError(f"MDP state {q!r} has no action")


def _mdp_product(mdp: MDP, monitor: DetMonitor, atoms, init_state):
    letters = {q: make_letter(mdp.labels[q], atoms) for q in mdp.states}
    init = (init_state, monitor.step(monitor.initial, letters[init_state]))
    nodes = {init}
    frontier = [init]
    acts: dict = {}
    while frontier:
        node = frontier.pop()
        s, m = node
        lifted = []
        for action in mdp.actions[s]:
            out: dict = {}
            for dst, w in action.dist.weights:
                node2 = (dst, monitor.step(m, letters[dst]))
                out[node2] = out.get(node2, Fraction(0)) + w
                if node2 not in nodes:
                    nodes.add(node2)
                    frontier.append(node2)
            lifted.append((action, tuple(sorted(out.items(), key=repr))))
        acts[node] = lifted
    return nodes, acts, init


def _policy_values(nodes, acts, init, verdict, mode, cap):
    """Exact optimum over memoryless product policies by exhaustive search."""
    best = None
    count = 0

    node_order = sorted(nodes, key=repr)
    rank = {n: i for i, n in enumerate(node_order)}

    def rec(assign: dict, frontier: list):
        nonlocal best, count
        todo = None
        for n in frontier:
            if n not in assign:
                todo = n
                break
        if todo is None:
            count += 1
            if count > cap:
                raise BoundExceeded(
                    f"policy enumeration exceeded {cap} policies; use method='vi'"
                )
            val = _solve_reach(
                set(assign), lambda n: assign[n][1], init, lambda n: verdict(n[1])
            )
            best_local = val
            if best is None:
                best = best_local
            elif mode == "min":
                best = min(best, best_local)
            else:
                best = max(best, best_local)
            return
        for action, out in acts[todo]:
            assign[todo] = (action, out)
            extra = [d for d, _ in out if d not in assign]
            rec(assign, frontier + sorted(extra, key=lambda n: rank[n]))
            del assign[todo]

    rec({}, [init])
    return best


def _mecs(nodes, acts):
    """Maximal end components of a product MDP; returns list of state sets."""
    # iteratively refine SCCs keeping only actions that stay inside a block
    blocks = [set(nodes)]
    out = []
    while blocks:
        block = blocks.pop()
        # adjacency with only inside-staying actions
        adj: dict = {}
        any_action: dict = {}
        for n in block:
            kept = []
            for action, dist in acts[n]:
                if all(d in block for d, _ in dist):
                    kept.append((action, dist))
            any_action[n] = kept
            adj[n] = sorted({d for _, dist in kept for d, _ in dist}, key=repr)
        # SCC decomposition of the kept graph
        comps = _scc_sets(sorted(block, key=repr), adj)
        stable = len(comps) == 1 and all(any_action[n] for n in block)
        if stable:
            comp = comps[0]
            if len(comp) > 1 or any(n in adj[n] for n in comp):
                out.append(frozenset(comp))
            continue
        for comp in comps:
            trimmed = {
                n
                for n in comp
                if any(all(d in comp for d, _ in dist) for _, dist in acts[n])
            }
            if trimmed:
                if trimmed == block:
                    # no progress: accept as an end component if closed
                    out.append(frozenset(trimmed))
                else:
                    blocks.append(trimmed)
    return out


def _scc_sets(order, adj):
    low: dict = {}
    num: dict = {}
    stack: list = []
    on_stack: set = set()
    comps: list = []
    counter = itertools.count()
    for root in order:
        if root in num:
            continue
        work = [(root, iter(adj.get(root, ())))]
        num[root] = low[root] = next(counter)
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for child in it:
                if child not in num:
                    num[child] = low[child] = next(counter)
                    stack.append(child)
                    on_stack.add(child)
                    work.append((child, iter(adj.get(child, ()))))
                    advanced = True
                    break
                if child in on_stack:
                    low[node] = min(low[node], num[child])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == num[node]:
                comp = set()
                while True:
                    x = stack.pop()
                    on_stack.discard(x)
                    comp.add(x)
                    if x == node:
                        break
                comps.append(comp)
    return comps


def _vi_max_reach(nodes, acts, target: set, tol: float):
    vals = {n: (1.0 if n in target else 0.0) for n in nodes}
    residual = 1.0
    for _ in range(1_000_000):
        residual = 0.0
        for n in nodes:
            if n in target:
                continue
            best = 0.0
            for _, dist in acts[n]:
                v = sum(float(w) * vals[d] for d, w in dist)
                best = max(best, v)
            residual = max(residual, abs(best - vals[n]))
            vals[n] = best
        if residual < tol:
            break
    return vals, residual


def mdp_probability(
    mdp: MDP,
    psi,
    mode: str,
    method: str = "enumerate",
    policy_cap: int = 100_000,
    tol: float = 1e-9,
    init=None,
):
    """Optimal probability of psi under demonic (min) or angelic (max) resolution.

    method="enumerate": exact Fraction over all memoryless product policies
    (raises BoundExceeded past `policy_cap`).  method="vi": value iteration on
    winning maximal end components; returns (value, residual).
    """
    if mode not in ("min", "max"):
        raise ValidationError(f"mode must be min or max, got {mode!r}")
    monitor = monitor_for(psi)
    atoms = atom_nodes(psi)
    start = mdp.initial if init is None else init
    nodes, acts, init_node = _mdp_product(mdp, monitor, atoms, start)
    if method == "enumerate":
        return _policy_values(nodes, acts, init_node, monitor.verdict, mode, policy_cap)
    if method != "vi":
        raise ValidationError(f"unknown method {method!r}")
    mecs = _mecs(nodes, acts)
    if mode == "max":
        target = {n for comp in mecs for n in comp if monitor.verdict(n[1])}
        vals, residual = _vi_max_reach(nodes, acts, target, tol)
        return vals[init_node], residual
    target = {n for comp in mecs for n in comp if not monitor.verdict(n[1])}
    vals, residual = _vi_max_reach(nodes, acts, target, tol)
    return 1.0 - vals[init_node], residual


# ---------------------------------------------------------------------------
# Induced chains and PATL checking on iCGSs


def induce_mc(g: ICGS, profile: Mapping[str, Mapping], q) -> MarkovChain:
    """Markov chain induced by a deterministic memoryless profile of all agents."""
    missing = set(g.agents) - set(profile)
    if missing:
        raise IllegalAction(f"profile misses agents {sorted(missing)}")

    def move_at(state) -> tuple:
        mov = []
        for agent in g.agents:
            table = profile[agent]
            act = table[state] if state in table else table.get(g.obs_class(agent, state))
            if act is None:
                raise IllegalAction(f"profile of {agent} undefined at {state!r}")
            if act not in g.legal[(state, agent)]:
                raise IllegalAction(f"{agent} plays illegal {act!r} at {state!r}")
            mov.append(act)
        return tuple(mov)

    states = []
    seen = {q}
    frontier = [q]
    trans = {}
    while frontier:
        s = frontier.pop()
        states.append(s)
        d = g.dist(s, move_at(s))
        trans[s] = d
        for dst in d.support:
            if dst not in seen:
                seen.add(dst)
                frontier.append(dst)
    labels = {s: g.labeling[s] for s in states}
    return MarkovChain(tuple(sorted(states, key=repr)), trans, q, labels)


def _resolved_mdp(g: ICGS, js: JointStrategy) -> MDP:
    """MDP over g's states where coalition moves are fixed by js."""
    actions: dict = {}
    for q in g.states:
        row = []
        for mov in g.legal_moves(q):
            ok = True
            for agent, strat in js.parts.items():
                idx = g.agents.index(agent)
                if mov[idx] != strat.at(g.obs_class(agent, q)):
                    ok = False
                    break
            if ok:
                row.append(MdpAction(name=mov, dist=g.dist(q, mov), exposed=tuple(zip(g.agents, mov))))
        actions[q] = tuple(row)
    return MDP(states=g.states, actions=actions, initial=g.initial, labels=dict(g.labeling))


_BOUND_MODE = {">=": "min", ">": "min", "<=": "max", "<": "max"}


def _bound_holds(value: Fraction, op: str, d: Fraction) -> bool:
    return {
        ">=": value >= d,
        ">": value > d,
        "<=": value <= d,
        "<": value < d,
    }[op]


def check_patl(g: ICGS, q, f: Coop, view: str = "objective"):
    """Does a bounded strategic modality hold at q?  Returns (bool, witness).

    Coalition strategies are deterministic memoryless uniform; opponents are
    resolved demonically/angelically (per the bound direction) over the
    monitor product, which is exact for the quantitative fragment.  The empty
    coalition (and the P operator) is evaluated objectively: the subjective
    union over coalition members' equivalence classes is empty for it.
    """
    if not isinstance(f, Coop) or f.bound is None:
        raise UnsupportedFormula("check_patl expects a probability-bounded modality")
    for agent in f.coalition:
        if agent not in g.agents:
            raise UnknownAgent(f"unknown agent {agent!r}")
    op, d = f.bound
    mode = _BOUND_MODE[op]
    coalition = () if f.flavor is Flavor.PROB else f.coalition
    if view == "subjective" and coalition:
        starts = sorted(
            set().union(*(g.obs_class(a, q) for a in coalition)), key=repr
        )
    else:
        starts = [q]
    arena = GameArena(g)
    for js in enumerate_ir(arena, coalition):
        mdp = _resolved_mdp(g, js)
        ok = True
        for start in starts:
            value = mdp_probability(mdp, f.path, mode, init=start)
            if not _bound_holds(value, op, d):
                ok = False
                break
        if ok:
            return True, js
    return False, None
