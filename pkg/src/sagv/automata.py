"""Büchi automata: LTL tableau translation, products, emptiness, complement.

Letters are arbitrary hashable objects; an automaton carries its alphabet
explicitly.  For formula automata a letter is the frozenset of atoms that
hold at a position.  Acceptance is generalized Büchi (a list of state sets).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Optional

from .errors import AlphabetMismatch, BudgetExceeded, UnsupportedFormula
from .logic import (
    And,
    Coop,
    FALSE,
    Next,
    Not,
    Or,
    PropAtom,
    TRUE,
    TrueConst,
    Until,
    VarAtom,
    _g_pattern,
    atom_nodes,
    is_state_formula,
    subformulas,
)

Letter = Hashable


@dataclass(frozen=True, eq=False)
class NBA:
    alphabet: frozenset
    states: frozenset
    initial: frozenset
    delta: Mapping[tuple[object, Letter], frozenset]
    accepting: tuple[frozenset, ...]

    def __post_init__(self):
        if not self.accepting:
            object.__setattr__(self, "accepting", (frozenset(self.states),))

    def succ(self, q, letter) -> frozenset:
        return self.delta.get((q, letter), frozenset())


def letters_over(atoms: Iterable) -> frozenset:
    """All subsets of an atom universe, as frozensets."""
    atoms = sorted(atoms, key=repr)
    out = []
    for k in range(len(atoms) + 1):
        out.extend(frozenset(c) for c in itertools.combinations(atoms, k))
    return frozenset(out)


def holds_at(pred, letter: frozenset) -> bool:
    """Evaluate a temporal-free state predicate against an atom letter."""
    if isinstance(pred, TrueConst):
        return True
    if isinstance(pred, (VarAtom, PropAtom)):
        return pred in letter
    if isinstance(pred, Not):
        return not holds_at(pred.sub, letter)
    if isinstance(pred, And):
        return holds_at(pred.left, letter) and holds_at(pred.right, letter)
    if isinstance(pred, Or):
        return holds_at(pred.left, letter) or holds_at(pred.right, letter)
    raise UnsupportedFormula(f"not a state predicate: {pred!r}")


# ---------------------------------------------------------------------------
# Direct LTL evaluation on lasso words (independent oracle for the tableau)


def eval_ltl_lasso(f, prefix: tuple, cycle: tuple) -> bool:
    """Evaluate an LTL formula on the ultimately periodic word prefix.cycle^w.

    Positions are the quotient 0..P+C-1; Until is solved as a least fixpoint
    over the cycle.  Used as the ground-truth oracle for automata tests.
    """
    p_len, c_len = len(prefix), len(cycle)
    n = p_len + c_len

    def nxt(i: int) -> int:
        return i + 1 if i + 1 < n else p_len

    def letter(i: int) -> frozenset:
        return prefix[i] if i < p_len else cycle[i - p_len]

    table: dict[object, list[bool]] = {}

    def tab(g) -> list[bool]:
        key = g
        if key in table:
            return table[key]
        if isinstance(g, TrueConst):
            row = [True] * n
        elif isinstance(g, (VarAtom, PropAtom)):
            row = [g in letter(i) for i in range(n)]
        elif isinstance(g, Not):
            sub = tab(g.sub)
            row = [not v for v in sub]
        elif isinstance(g, And):
            a, b = tab(g.left), tab(g.right)
            row = [x and y for x, y in zip(a, b)]
        elif isinstance(g, Or):
            a, b = tab(g.left), tab(g.right)
            row = [x or y for x, y in zip(a, b)]
        elif isinstance(g, Next):
            sub = tab(g.sub)
            row = [sub[nxt(i)] for i in range(n)]
        elif isinstance(g, Until):
            a, b = tab(g.left), tab(g.right)
            row = [False] * n
            for _ in range(n + 1):
                row = [b[i] or (a[i] and row[nxt(i)]) for i in range(n)]
        else:
            raise UnsupportedFormula(f"not an LTL formula: {g!r}")
        table[key] = row
        return row

    return tab(f)[0]


# ---------------------------------------------------------------------------
# LTL -> NBA (closure tableau)

_MAX_CLOSURE = 22


def ltl_to_nba(f, atoms: Optional[Iterable] = None) -> NBA:
    """Translate an LTL path formula (X allowed) into a generalized NBA.

    `atoms` may widen the alphabet to a superset of the formula's own atoms
    so that automata for different formulas share an alphabet.
    """
    if any(isinstance(g, Coop) for g in subformulas(f)):
        raise UnsupportedFormula("strategic modalities must be labeled away first")
    own_atoms = atom_nodes(f)
    universe = frozenset(atoms) if atoms is not None else own_atoms
    if not own_atoms <= universe:
        raise AlphabetMismatch("atom universe does not cover the formula")

    cl = list(dict.fromkeys(subformulas(f)))
    if TRUE not in cl:
        cl.append(TRUE)
    if len(cl) > _MAX_CLOSURE:
        raise UnsupportedFormula(f"closure of size {len(cl)} exceeds the explicit tableau cap")
    untils = [g for g in cl if isinstance(g, Until)]
    nexts = [g for g in cl if isinstance(g, Next)]
    free = [g for g in cl if isinstance(g, (VarAtom, PropAtom, Next, Until))]

    def consistent(b: frozenset) -> bool:
        for g in cl:
            if isinstance(g, TrueConst):
                if g not in b:
                    return False
            elif isinstance(g, Not):
                if (g in b) == (g.sub in b):
                    return False
            elif isinstance(g, And):
                if (g in b) != (g.left in b and g.right in b):
                    return False
            elif isinstance(g, Or):
                if (g in b) != (g.left in b or g.right in b):
                    return False
            elif isinstance(g, Until):
                if g.right in b and g not in b:
                    return False
                if g in b and g.right not in b and g.left not in b:
                    return False
        return True

    # Membership of boolean-composed formulas is determined by the free part;
    # enumerate free subsets and close upward.
    closed_by_bool = [g for g in cl if isinstance(g, (TrueConst, Not, And, Or))]

    def close(base: set) -> Optional[frozenset]:
        b = set(base)
        b.add(TRUE)
        changed = True
        while changed:
            changed = False
            for g in closed_by_bool:
                want = None
                if isinstance(g, TrueConst):
                    want = True
                elif isinstance(g, Not):
                    want = g.sub not in b
                elif isinstance(g, And):
                    want = g.left in b and g.right in b
                elif isinstance(g, Or):
                    want = g.left in b or g.right in b
                if want and g not in b:
                    b.add(g)
                    changed = True
                elif not want and g in b:
                    return None  # contradiction against chosen base
        out = frozenset(b)
        return out if consistent(out) else None

    states = []
    seen = set()
    for combo in itertools.product((False, True), repeat=len(free)):
        base = {g for g, pick in zip(free, combo) if pick}
        b = close(base)
        if b is not None and b not in seen:
            seen.add(b)
            states.append(b)

    def may_follow(b: frozenset, b2: frozenset) -> bool:
        for g in nexts:
            if (g in b) != (g.sub in b2):
                return False
        for g in untils:
            holds = g.right in b or (g.left in b and g in b2)
            if (g in b) != holds:
                return False
        return True

    delta: dict[tuple[object, Letter], set] = {}
    for b in states:
        fixed = frozenset(a for a in own_atoms if a in b)
        succs = [b2 for b2 in states if may_follow(b, b2)]
        if not succs:
            continue
        for letter in letters_over(universe):
            if letter & own_atoms == fixed:
                delta.setdefault((b, letter), set()).update(succs)

    accepting = tuple(
        frozenset(b for b in states if g not in b or g.right in b) for g in untils
    ) or (frozenset(states),)
    return NBA(
        alphabet=letters_over(universe),
        states=frozenset(states),
        initial=frozenset(b for b in states if f in b),
        delta={k: frozenset(v) for k, v in delta.items()},
        accepting=accepting,
    )


def universal_nba(alphabet: frozenset) -> NBA:
    q = "u"
    return NBA(
        alphabet=alphabet,
        states=frozenset([q]),
        initial=frozenset([q]),
        delta={(q, letter): frozenset([q]) for letter in alphabet},
        accepting=(frozenset([q]),),
    )


def empty_nba(alphabet: frozenset) -> NBA:
    q = "e"
    return NBA(
        alphabet=alphabet,
        states=frozenset([q]),
        initial=frozenset([q]),
        delta={(q, letter): frozenset([q]) for letter in alphabet},
        accepting=(frozenset(),),
    )


# ---------------------------------------------------------------------------
# Products


def product(a: NBA, b: NBA) -> NBA:
    """Language intersection; generalized acceptance sets are concatenated."""
    if a.alphabet != b.alphabet:
        raise AlphabetMismatch("automata read different alphabets")
    delta: dict[tuple[object, Letter], frozenset] = {}
    states = set()
    frontier = [(qa, qb) for qa in a.initial for qb in b.initial]
    states.update(frontier)
    while frontier:
        qa, qb = frontier.pop()
        for letter in a.alphabet:
            sa = a.succ(qa, letter)
            sb = b.succ(qb, letter)
            if not sa or not sb:
                continue
            succs = frozenset((x, y) for x in sa for y in sb)
            delta[((qa, qb), letter)] = succs
            for s in succs:
                if s not in states:
                    states.add(s)
                    frontier.append(s)
    accepting = tuple(
        frozenset(s for s in states if s[0] in acc) for acc in a.accepting
    ) + tuple(frozenset(s for s in states if s[1] in acc) for acc in b.accepting)
    return NBA(
        alphabet=a.alphabet,
        states=frozenset(states),
        initial=frozenset((qa, qb) for qa in a.initial for qb in b.initial),
        delta=delta,
        accepting=accepting,
    )


@dataclass(frozen=True, eq=False)
class SysGraph:
    """State-labeled transition graph, the system side of automaton products."""

    states: tuple
    initial: object
    edges: Mapping[object, tuple]
    letter: Mapping[object, frozenset]


def intersect_system(sys: SysGraph, a: NBA) -> NBA:
    """NBA for (words generated by sys) intersected with L(a)."""
    states = set()
    delta: dict[tuple[object, Letter], set] = {}
    init = [(sys.initial, b) for b in a.initial]
    frontier = list(init)
    states.update(frontier)
    while frontier:
        q, b = frontier.pop()
        letter = sys.letter[q]
        if letter not in a.alphabet:
            raise AlphabetMismatch(f"system letter {letter!r} outside automaton alphabet")
        for b2 in a.succ(b, letter):
            for q2 in sys.edges.get(q, ()):
                s = (q2, b2)
                delta.setdefault(((q, b), letter), set()).add(s)
                if s not in states:
                    states.add(s)
                    frontier.append(s)
    accepting = tuple(frozenset(s for s in states if s[1] in acc) for acc in a.accepting)
    return NBA(
        alphabet=a.alphabet,
        states=frozenset(states),
        initial=frozenset(init),
        delta={k: frozenset(v) for k, v in delta.items()},
        accepting=accepting,
    )


# ---------------------------------------------------------------------------
# Emptiness (SCC-based, generalized acceptance) with lasso witnesses


@dataclass(frozen=True)
class LassoWitness:
    run_prefix: tuple
    run_cycle: tuple
    word_prefix: tuple
    word_cycle: tuple

    def replay(self, a: NBA) -> bool:
        return nba_accepts_lasso(a, self.word_prefix, self.word_cycle)


def _reachable_edges(a: NBA):
    """BFS the reachable part; returns (order, adjacency with letters)."""
    adj: dict[object, list[tuple[Letter, object]]] = {}
    seen = set(a.initial)
    order = list(sorted(a.initial, key=repr))
    queue = list(order)
    while queue:
        q = queue.pop(0)
        out = []
        for (src, letter), dsts in a.delta.items():
            if src != q:
                continue
            for d in sorted(dsts, key=repr):
                out.append((letter, d))
                if d not in seen:
                    seen.add(d)
                    order.append(d)
                    queue.append(d)
        out.sort(key=repr)
        adj[q] = out
    return order, adj


def _sccs(order, adj):
    """Iterative Tarjan; returns list of state sets in reverse topological order."""
    index = {}
    low = {}
    on_stack = set()
    stack = []
    sccs = []
    counter = itertools.count()
    for root in order:
        if root in index:
            continue
        work = [(root, iter(adj.get(root, ())))]
        index[root] = low[root] = next(counter)
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for _, child in it:
                if child not in index:
                    index[child] = low[child] = next(counter)
                    stack.append(child)
                    on_stack.add(child)
                    work.append((child, iter(adj.get(child, ()))))
                    advanced = True
                    break
                if child in on_stack:
                    low[node] = min(low[node], index[child])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = set()
                while True:
                    x = stack.pop()
                    on_stack.discard(x)
                    comp.add(x)
                    if x == node:
                        break
                sccs.append(comp)
    return sccs


def _bfs_path(adj, start, goal_set, allowed=None):
    """Shortest path (list of (letter, state) steps) from start into goal_set."""
    if start in goal_set:
        return []
    seen = {start}
    back: dict[object, tuple[object, Letter]] = {}
    queue = [start]
    while queue:
        q = queue.pop(0)
        for letter, d in adj.get(q, ()):
            if allowed is not None and d not in allowed:
                continue
            if d in seen:
                continue
            seen.add(d)
            back[d] = (q, letter)
            if d in goal_set:
                path = []
                cur = d
                while cur != start:
                    prev, letter2 = back[cur]
                    path.append((letter2, cur))
                    cur = prev
                path.reverse()
                return path
            queue.append(d)
    return None


def is_empty(a: NBA):
    """True iff L(a) is empty, otherwise a LassoWitness (replayable)."""
    order, adj = _reachable_edges(a)
    sccs = _sccs(order, adj)
    for comp in sccs:
        has_edge = any(d in comp for q in comp for _, d in adj.get(q, ()))
        if not has_edge:
            continue
        if not all(comp & acc for acc in a.accepting):
            continue
        anchor = min(comp, key=repr)
        prefix = _bfs_path(adj, min(a.initial, key=repr), {anchor})
        if prefix is None:
            inits = sorted(a.initial, key=repr)
            for q0 in inits:
                prefix = _bfs_path(adj, q0, {anchor})
                if prefix is not None:
                    start = q0
                    break
            else:
                continue
        else:
            start = min(a.initial, key=repr)
        # cycle inside comp visiting one member of every accepting set
        cycle: list[tuple[Letter, object]] = []
        cur = anchor
        for acc in a.accepting:
            seg = _bfs_path(adj, cur, comp & acc, allowed=comp)
            if seg:
                cycle.extend(seg)
                cur = seg[-1][1]
        back_home = _bfs_path(adj, cur, {anchor}, allowed=comp)
        if back_home is None:
            continue
        cycle.extend(back_home)
        if not cycle:
            # anchor alone covers all sets; use any self-returning edge
            loop = _bfs_path(adj, anchor, {anchor}, allowed=comp)
            selfstep = next(
                ((letter, d) for letter, d in adj.get(anchor, ()) if d == anchor), None
            )
            if selfstep is not None:
                cycle = [selfstep]
            elif loop:
                cycle = loop
            else:
                first = next(
                    ((letter, d) for letter, d in adj.get(anchor, ()) if d in comp), None
                )
                if first is None:
                    continue
                rest = _bfs_path(adj, first[1], {anchor}, allowed=comp)
                if rest is None:
                    continue
                cycle = [first] + rest
        run_prefix = (start,) + tuple(s for _, s in prefix)
        word_prefix = tuple(letter for letter, _ in prefix)
        run_cycle = tuple(s for _, s in cycle)
        word_cycle = tuple(letter for letter, _ in cycle)
        return LassoWitness(run_prefix, run_cycle, word_prefix, word_cycle)
    return True


def nba_accepts_lasso(a: NBA, prefix: tuple, cycle: tuple) -> bool:
    """Membership of the ultimately periodic word prefix.cycle^w in L(a)."""
    p_len, c_len = len(prefix), len(cycle)
    n = p_len + c_len

    def nxt(i: int) -> int:
        return i + 1 if i + 1 < n else p_len

    def letter(i: int):
        return prefix[i] if i < p_len else cycle[i - p_len]

    nodes = set()
    adj: dict[object, list[tuple[Letter, object]]] = {}
    frontier = [(q, 0) for q in a.initial]
    nodes.update(frontier)
    while frontier:
        q, i = frontier.pop()
        out = []
        for q2 in a.succ(q, letter(i)):
            node = (q2, nxt(i))
            out.append((letter(i), node))
            if node not in nodes:
                nodes.add(node)
                frontier.append(node)
        adj[(q, i)] = sorted(out, key=repr)
    order = sorted(nodes, key=repr)
    for comp in _sccs(order, adj):
        has_edge = any(d in comp for q in comp for _, d in adj.get(q, ()))
        if not has_edge:
            continue
        if all(any(q in acc for q, _ in comp) for acc in a.accepting):
            # reachability from an initial node is guaranteed by construction
            return True
    return False


def buchi_graph_empty(nodes, adj: Mapping, acc_sets) -> bool:
    """Generalized Büchi emptiness on a plain graph (adj: node -> successors)."""
    order = sorted(nodes, key=repr)
    wrapped = {n: [(None, d) for d in adj.get(n, ())] for n in order}
    for comp in _sccs(order, wrapped):
        has_edge = any(d in comp for n in comp for _, d in wrapped.get(n, ()))
        if not has_edge:
            continue
        if all(comp & acc for acc in acc_sets):
            return False
    return True


# ---------------------------------------------------------------------------
# Complementation


def degeneralize(a: NBA) -> NBA:
    if len(a.accepting) == 1:
        return a
    k = len(a.accepting)
    delta: dict[tuple[object, Letter], frozenset] = {}
    states = set()
    init = frozenset((q, 0) for q in a.initial)
    frontier = list(init)
    states.update(frontier)
    while frontier:
        q, i = frontier.pop()
        for letter in a.alphabet:
            succs = a.succ(q, letter)
            if not succs:
                continue
            j = (i + 1) % k if q in a.accepting[i] else i
            out = frozenset((q2, j) for q2 in succs)
            delta[((q, i), letter)] = out
            for s in out:
                if s not in states:
                    states.add(s)
                    frontier.append(s)
    accepting = frozenset(s for s in states if s[1] == 0 and s[0] in a.accepting[0])
    return NBA(a.alphabet, frozenset(states), init, delta, (accepting,))


_TRAP = ("__trap__",)


def _complete(a: NBA) -> NBA:
    delta = dict(a.delta)
    states = set(a.states)
    needs_trap = _TRAP in states or not a.initial
    for q in a.states:
        for letter in a.alphabet:
            if not a.succ(q, letter):
                delta[(q, letter)] = frozenset([_TRAP])
                needs_trap = True
    if needs_trap:
        states.add(_TRAP)
        for letter in a.alphabet:
            delta[(_TRAP, letter)] = frozenset([_TRAP])
    initial = a.initial if a.initial else frozenset([_TRAP])
    return NBA(a.alphabet, frozenset(states), initial, delta, a.accepting)


def _restrict_reachable(a: NBA) -> NBA:
    order, _ = _reachable_edges(a)
    keep = set(order)
    delta = {
        (q, letter): frozenset(d for d in dsts if d in keep)
        for (q, letter), dsts in a.delta.items()
        if q in keep
    }
    return NBA(
        a.alphabet,
        frozenset(keep),
        a.initial & keep,
        delta,
        tuple(acc & keep for acc in a.accepting),
    )


def _is_weak(a: NBA) -> bool:
    order, adj = _reachable_edges(a)
    acc = a.accepting[0]
    for comp in _sccs(order, adj):
        has_edge = any(d in comp for q in comp for _, d in adj.get(q, ()))
        if not has_edge:
            continue
        if comp & acc and comp - acc:
            return False
    return True


def _complement_weak(a: NBA) -> NBA:
    """Breakpoint complement for weak automata (Büchi == co-Büchi there)."""
    bad = a.states - a.accepting[0]

    def post(ss: frozenset, letter) -> frozenset:
        out = set()
        for q in ss:
            out.update(a.succ(q, letter))
        return frozenset(out)

    init = (frozenset(a.initial), frozenset(a.initial) - bad)
    states = {init}
    delta: dict[tuple[object, Letter], frozenset] = {}
    frontier = [init]
    while frontier:
        s, o = frontier.pop()
        for letter in a.alphabet:
            s2 = post(s, letter)
            o2 = (post(o, letter) - bad) if o else (s2 - bad)
            node = (s2, o2)
            delta[((s, o), letter)] = frozenset([node])
            if node not in states:
                states.add(node)
                frontier.append(node)
    accepting = frozenset(n for n in states if not n[1])
    return NBA(a.alphabet, frozenset(states), frozenset([init]), delta, (accepting,))


def _is_deterministic(a: NBA) -> bool:
    if len(a.initial) != 1:
        return False
    return all(len(d) <= 1 for d in a.delta.values())


def _complement_det(a: NBA) -> NBA:
    """Complement of a complete deterministic Büchi automaton (2n states)."""
    acc = a.accepting[0]
    states = set()
    delta: dict[tuple[object, Letter], set] = {}
    init = next(iter(a.initial))
    frontier = [("w", init)]
    states.update(frontier)
    while frontier:
        phase, q = frontier.pop()
        for letter in a.alphabet:
            (q2,) = a.succ(q, letter)
            targets = [("w", q2)] if phase == "w" else []
            if q2 not in acc:
                targets.append(("a", q2))
            if phase == "a" and q2 in acc:
                targets = []
            delta[((phase, q), letter)] = set(targets)
            for t in targets:
                if t not in states:
                    states.add(t)
                    frontier.append(t)
    accepting = frozenset(s for s in states if s[0] == "a")
    return NBA(
        a.alphabet,
        frozenset(states),
        frozenset([("w", init)]),
        {k: frozenset(v) for k, v in delta.items()},
        (accepting,),
    )


def _tight_rankings(slots: tuple[tuple[object, int, bool], ...]) -> list[tuple[tuple[object, int], ...]]:
    """All tight rankings: (state, cap, is_accepting) -> assignments.

    Tight means: the maximum rank r is odd and every odd rank 1..r occurs.
    Accepting states receive even ranks only.
    """
    if not slots:
        return []
    maxcap = max(cap for _, cap, _ in slots)
    results = []
    names = [q for q, _, _ in slots]
    for r in range(1, maxcap + 1, 2):
        allowed = []
        for _, cap, fin in slots:
            top = min(cap, r)
            ranks = [x for x in range(top + 1) if not (fin and x % 2 == 1)]
            if not ranks:
                allowed = None
                break
            allowed.append(ranks)
        if allowed is None:
            continue
        need = set(range(1, r + 1, 2))

        def rec(i: int, chosen: list, missing: set):
            if len(missing) > len(slots) - i:
                return
            if i == len(slots):
                if not missing:
                    results.append(tuple(zip(names, chosen)))
                return
            for x in allowed[i]:
                rec(i + 1, chosen + [x], missing - {x})

        rec(0, [], need)
    return results


_RANK_MEMO: dict = {}


def _tight_rankings_memo(slots):
    key = slots
    if key not in _RANK_MEMO:
        _RANK_MEMO[key] = _tight_rankings(slots)
        if len(_RANK_MEMO) > 4096:
            _RANK_MEMO.clear()
            _RANK_MEMO[key] = _tight_rankings(slots)
    return _RANK_MEMO[key]


def _complement_rank(a: NBA, budget: int) -> NBA:
    """Rank-based complement restricted to tight rankings (FKV)."""
    acc = a.accepting[0]
    n = len(a.states)
    two_n = 2 * n

    states: set = set()
    delta: dict[tuple[object, Letter], set] = {}
    init = ("s", frozenset(a.initial))
    states.add(init)
    frontier = [init]

    def add(node):
        if node not in states:
            if len(states) >= budget:
                raise BudgetExceeded(
                    f"complement exceeded the {budget}-state budget; "
                    "supply a smaller or deterministic assumption"
                )
            states.add(node)
            frontier.append(node)

    while frontier:
        node = frontier.pop()
        kind = node[0]
        for letter in a.alphabet:
            targets: list = []
            if kind == "s":
                s = node[1]
                s2 = frozenset().union(*(a.succ(q, letter) for q in s)) if s else frozenset()
                targets.append(("s", s2))
                if s2:
                    slots = tuple(
                        sorted(((q, two_n, q in acc) for q in s2), key=lambda t: repr(t[0]))
                    )
                    for g in _tight_rankings_memo(slots):
                        gd = dict(g)
                        o = frozenset(q for q in s2 if gd[q] % 2 == 0)
                        targets.append(("r", g, o))
            else:
                _, g, o = node
                gd = dict(g)
                dom = frozenset(gd)
                caps: dict[object, int] = {}
                for q in dom:
                    for q2 in a.succ(q, letter):
                        caps[q2] = min(caps.get(q2, two_n), gd[q])
                if not caps:
                    targets.append(("s", frozenset()))
                else:
                    o_post = frozenset().union(*(a.succ(q, letter) for q in o)) if o else frozenset()
                    slots = tuple(
                        sorted(
                            ((q, cap, q in acc) for q, cap in caps.items()),
                            key=lambda t: repr(t[0]),
                        )
                    )
                    for g2 in _tight_rankings_memo(slots):
                        g2d = dict(g2)
                        even = frozenset(q for q in g2d if g2d[q] % 2 == 0)
                        o2 = (o_post & even) if o else even
                        targets.append(("r", g2, o2))
            delta.setdefault((node, letter), set())
            for t in targets:
                add(t)
                delta[(node, letter)].add(t)

    accepting = frozenset(
        s
        for s in states
        if (s[0] == "s" and not s[1]) or (s[0] == "r" and not s[2])
    )
    return NBA(
        a.alphabet,
        frozenset(states),
        frozenset([init]),
        {k: frozenset(v) for k, v in delta.items()},
        (accepting,),
    )


def complement(a: NBA, state_budget: int = 100_000) -> NBA:
    """NBA for the complement language; rank-based with cheaper shortcuts.

    Weak automata go through the breakpoint construction, deterministic ones
    through the two-phase trick; everything else uses tight rankings.  Aborts
    with BudgetExceeded when the construction grows past `state_budget`.
    """
    a = _restrict_reachable(_complete(degeneralize(a)))
    a = _complete(a)  # completion again in case restriction dropped the trap
    if _is_weak(a):
        return _complement_weak(a)
    if _is_deterministic(a):
        return _complement_det(a)
    return _complement_rank(a, state_budget)


# ---------------------------------------------------------------------------
# Deterministic monitors for the quantitative fragment


@dataclass(frozen=True, eq=False)
class DetMonitor:
    """Deterministic status-tracking monitor for positive F/G/U combinations.

    A monitor state is a tuple of per-leaf statuses ("p" pending, "s" success,
    "f" fail).  Statuses change monotonically, so inside any BSCC (or end
    component) of a product they are frozen and `verdict` decides the run.
    """

    formula: object
    leaves: tuple
    skeleton: object
    kind: str

    @property
    def initial(self) -> tuple:
        return ("p",) * len(self.leaves)

    def step(self, mstate: tuple, letter: frozenset) -> tuple:
        out = []
        for status, leaf in zip(mstate, self.leaves):
            if status != "p":
                out.append(status)
                continue
            op = leaf[0]
            if op == "F":
                out.append("s" if holds_at(leaf[1], letter) else "p")
            elif op == "G":
                out.append("f" if not holds_at(leaf[1], letter) else "p")
            elif op == "U":
                if holds_at(leaf[2], letter):
                    out.append("s")
                elif not holds_at(leaf[1], letter):
                    out.append("f")
                else:
                    out.append("p")
            else:  # NOW: truth of a state predicate at the first position
                out.append("s" if holds_at(leaf[1], letter) else "f")
        return tuple(out)

    def verdict(self, mstate: tuple) -> bool:
        """Truth of the formula on runs whose statuses stay frozen at mstate."""

        def leaf_truth(i: int) -> bool:
            status = mstate[i]
            op = self.leaves[i][0]
            if op == "G":
                return status != "f"
            return status == "s"

        def ev(node) -> bool:
            if node[0] == "leaf":
                return leaf_truth(node[1])
            if node[0] == "and":
                return ev(node[1]) and ev(node[2])
            return ev(node[1]) or ev(node[2])

        return ev(self.skeleton)


def monitor_for(f) -> DetMonitor:
    """Build the deterministic monitor; UnsupportedFormula outside the fragment."""
    leaves: list = []

    def build(node):
        if isinstance(node, And):
            return ("and", build(node.left), build(node.right))
        if isinstance(node, Or):
            return ("or", build(node.left), build(node.right))
        g = _g_pattern(node)
        if g is not None and is_state_formula(g):
            leaves.append(("G", g))
            return ("leaf", len(leaves) - 1)
        if isinstance(node, Until) and node.left == TRUE and is_state_formula(node.right):
            leaves.append(("F", node.right))
            return ("leaf", len(leaves) - 1)
        if (
            isinstance(node, Until)
            and is_state_formula(node.left)
            and is_state_formula(node.right)
        ):
            leaves.append(("U", node.left, node.right))
            return ("leaf", len(leaves) - 1)
        if is_state_formula(node):
            leaves.append(("NOW", node))
            return ("leaf", len(leaves) - 1)
        raise UnsupportedFormula(
            f"outside the quantitative fragment (positive F/G/U combinations): {node!r}"
        )

    skeleton = build(f)
    ops = {leaf[0] for leaf in leaves}
    if ops <= {"F", "U", "NOW"}:
        kind = "reach"
    elif ops <= {"G", "NOW"}:
        kind = "safe"
    else:
        kind = "buchi"
    return DetMonitor(formula=f, leaves=tuple(leaves), skeleton=skeleton, kind=kind)


# ---------------------------------------------------------------------------
# Debug export


def to_dot(a: NBA, name: str = "nba") -> str:
    ids = {q: f"q{i}" for i, q in enumerate(sorted(a.states, key=repr))}
    lines = [f"digraph {name} {{", "  rankdir=LR;"]
    for q in sorted(a.states, key=repr):
        shape = "doublecircle" if any(q in acc for acc in a.accepting) else "circle"
        lines.append(f'  {ids[q]} [label="{q}", shape={shape}];')
    for q in sorted(a.initial, key=repr):
        lines.append(f'  init_{ids[q]} [style=invis]; init_{ids[q]} -> {ids[q]};')
    for (q, letter), dsts in sorted(a.delta.items(), key=repr):
        for d in sorted(dsts, key=repr):
            lines.append(f'  {ids[q]} -> {ids[d]} [label="{letter}"];')
    lines.append("}")
    return "\n".join(lines)
