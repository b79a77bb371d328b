"""Brute-force global baselines, used by tests and the --oracle CLI flag.

The strategy enumeration, product construction, path-status tracking and
linear solving here are deliberately written from scratch (naive nested
loops and dictionaries) so oracle agreement cross-checks the engine rather
than re-running it.  Only validated infrastructure is shared: the LTL
tableau, the graph emptiness primitive, and the MDP compiler.
"""
from __future__ import annotations

import itertools
import math
import random
from fractions import Fraction
from typing import Mapping, Optional

from .automata import buchi_graph_empty, ltl_to_nba
from .compose import MAS, compile_mdp
from .core import Dist
from .errors import (
    CapExceeded,
    HorizonInsufficient,
    UnsupportedFormula,
    ValidationError,
)
from .logic import (
    And,
    Coop,
    FALSE,
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
)
from .mcprob import ICGS, MarkovChain
from .mcqual import as_arena
from .strategy import JointStrategy


# ---------------------------------------------------------------------------
# Qualitative oracle


def _own_enumerate(arena, coalition, cap: int):
    """Naive exhaustive enumeration of uniform memoryless joint strategies."""
    coalition = tuple(sorted(coalition))
    keys = {}
    menus = {}
    total = 1
    for a in coalition:
        ks = sorted({arena.obs(a, q) for q in arena.states}, key=repr)
        keys[a] = ks
        menus[a] = [arena.menu(a, k) for k in ks]
        for m in menus[a]:
            total *= len(m)
    if total > cap:
        raise CapExceeded(f"{total} strategies exceed the oracle cap {cap}")
    spaces = []
    for a in coalition:
        spaces.append(list(itertools.product(*menus[a])))
    for combo in itertools.product(*spaces):
        table = {}
        for a, picks in zip(coalition, combo):
            table[a] = dict(zip(keys[a], picks))
        yield table

def _own_complies(arena, q, step, table) -> bool:
    for agent_name, token in step.visible:
        if agent_name in table:
            choice = table[agent_name][arena.obs(agent_name, q)]
            if not arena.allows(choice, token):
                return False
    return True


def brute_force_atl(sys, q=None, formula=None, sem="ir", view="objective", cap=200_000):
    """Exhaustive check of one qualitative strategic modality on the global system."""
    arena = as_arena(sys)
    if q is None:
        q = arena.initial
    if isinstance(formula, Coop):
        if formula.bound is not None or formula.flavor.value != "standard":
            raise UnsupportedFormula("brute_force_atl handles qualitative <<C>> only")
        coalition, psi = formula.coalition, formula.path
    else:
        coalition, psi = (), formula
    nba = ltl_to_nba(Not(psi))
    atoms = atom_nodes(psi)
    letters = {}

    def letter_of(s):
        if s not in letters:
            letters[s] = frozenset(a for a in atoms if arena.atom_true(a, s))
        return letters[s]

    if view == "subjective" and coalition:
        starts = sorted(
            set().union(*(arena.indistinguishable(a, q) for a in coalition)), key=repr
        )
    else:
        starts = [q]

    for table in _own_enumerate(arena, coalition, cap):
        good = True
        for start in starts:
            nodes = set()
            adj = {}
            roots = [(start, b) for b in sorted(nba.initial, key=repr)]
            nodes.update(roots)
            stack = list(roots)
            while stack:
                node = stack.pop()
                s, b = node
                out = []
                for b2 in nba.succ(b, letter_of(s)):
                    for step in arena.steps(s):
                        if _own_complies(arena, s, step, table):
                            child = (step.dst, b2)
                            out.append(child)
                            if child not in nodes:
                                nodes.add(child)
                                stack.append(child)
                adj[node] = out
            acc = [frozenset(n for n in nodes if n[1] in f) for f in nba.accepting]
            for arena_acc in arena.acceptance:
                acc.append(frozenset(n for n in nodes if n[0] in arena_acc))
            if not buchi_graph_empty(nodes, adj, acc):
                good = False
                break
        if good:
            return True
    return False


# ---------------------------------------------------------------------------
# Independent path-status tracking (re-implements the monitor idea naively)


def _pred_true(pred, label) -> bool:
    if isinstance(pred, TrueConst):
        return True
    if pred == FALSE:
        return False
    if isinstance(pred, PropAtom):
        return not isinstance(label, dict) and pred.name in label
    if isinstance(pred, VarAtom):
        if hasattr(label, "get"):
            return label.get(pred.var) == pred.value
        return False
    if isinstance(pred, Not):
        return not _pred_true(pred.sub, label)
    if isinstance(pred, And):
        return _pred_true(pred.left, label) and _pred_true(pred.right, label)
    if isinstance(pred, Or):
        return _pred_true(pred.left, label) or _pred_true(pred.right, label)
    raise UnsupportedFormula(f"not a state predicate: {pred!r}")


def _split_leaves(psi):
    """(skeleton, leaves) where leaves are ("F", a) / ("G", a) / ("U", a, b) / ("NOW", a)."""
    leaves = []

    def walk(node):
        if isinstance(node, And):
            return ("and", walk(node.left), walk(node.right))
        if isinstance(node, Or):
            return ("or", walk(node.left), walk(node.right))
        g = _g_pattern(node)
        if g is not None and is_state_formula(g):
            leaves.append(("G", g))
            return ("leaf", len(leaves) - 1)
        if isinstance(node, Until) and node.left == TRUE and is_state_formula(node.right):
            leaves.append(("F", node.right))
            return ("leaf", len(leaves) - 1)
        if isinstance(node, Until) and is_state_formula(node.left) and is_state_formula(node.right):
            leaves.append(("U", node.left, node.right))
            return ("leaf", len(leaves) - 1)
        if is_state_formula(node):
            leaves.append(("NOW", node))
            return ("leaf", len(leaves) - 1)
        raise UnsupportedFormula(f"outside the quantitative fragment: {node!r}")

    return walk(psi), tuple(leaves)


def _advance_statuses(statuses, leaves, label):
    out = []
    for st, leaf in zip(statuses, leaves):
        if st != "?":
            out.append(st)
            continue
        kind = leaf[0]
        if kind == "F":
            out.append("y" if _pred_true(leaf[1], label) else "?")
        elif kind == "G":
            out.append("n" if not _pred_true(leaf[1], label) else "?")
        elif kind == "U":
            if _pred_true(leaf[2], label):
                out.append("y")
            elif not _pred_true(leaf[1], label):
                out.append("n")
            else:
                out.append("?")
        else:
            out.append("y" if _pred_true(leaf[1], label) else "n")
    return tuple(out)


def _frozen_truth(skeleton, leaves, statuses) -> bool:
    def ev(node):
        if node[0] == "leaf":
            st = statuses[node[1]]
            if leaves[node[1]][0] == "G":
                return st != "n"
            return st == "y"
        if node[0] == "and":
            return ev(node[1]) and ev(node[2])
        return ev(node[1]) or ev(node[2])

    return ev(skeleton)


def _decided_truth(skeleton, leaves, statuses):
    """Truth if already forced regardless of pending leaves, else None."""

    def ev(node, pending_as):
        if node[0] == "leaf":
            st = statuses[node[1]]
            if st == "?":
                return pending_as
            if leaves[node[1]][0] == "G":
                return st != "n"
            return st == "y"
        if node[0] == "and":
            return ev(node[1], pending_as) and ev(node[2], pending_as)
        return ev(node[1], pending_as) or ev(node[2], pending_as)

    opt, pes = ev(skeleton, True), ev(skeleton, False)
    return opt if opt == pes else None


def _own_solve(rows: list[list[Fraction]], rhs: list[Fraction]) -> list[Fraction]:
    n = len(rows)
    m = [rows[i][:] + [rhs[i]] for i in range(n)]
    for c in range(n):
        p = next(r for r in range(c, n) if m[r][c] != 0)
        m[c], m[p] = m[p], m[c]
        inv = m[c][c]
        m[c] = [x / inv for x in m[c]]
        for r in range(n):
            if r != c and m[r][c] != 0:
                f = m[r][c]
                m[r] = [x - f * y for x, y in zip(m[r], m[c])]
    return [m[i][n] for i in range(n)]


def _bottoms(nodes, succ):
    """Bottom SCCs by brute reachability (fine at oracle scale)."""
    reach = {n: {n} for n in nodes}
    changed = True
    while changed:
        changed = False
        for n in nodes:
            add = set()
            for d in succ[n]:
                add |= reach[d]
            if not add <= reach[n]:
                reach[n] |= add
                changed = True
    out = []
    seen = set()
    for n in nodes:
        if n in seen:
            continue
        comp = {x for x in reach[n] if n in reach[x]}
        if all(d in comp for x in comp for d in succ[x]):
            out.append(frozenset(comp))
            seen |= comp
    return out


def _oracle_chain_value(nodes, trans, init, accept) -> Fraction:
    succ = {n: [d for d, _ in trans[n]] for n in nodes}
    bottom = _bottoms(sorted(nodes, key=repr), succ)
    fixed = {}
    for comp in bottom:
        v = Fraction(1) if accept(next(iter(comp))) else Fraction(0)
        for n in comp:
            fixed[n] = v
    free = [n for n in sorted(nodes, key=repr) if n not in fixed]
    if init in fixed:
        return fixed[init]
    idx = {n: i for i, n in enumerate(free)}
    rows = [[Fraction(0)] * len(free) for _ in free]
    rhs = [Fraction(0)] * len(free)
    for n in free:
        i = idx[n]
        rows[i][i] += 1
        for d, w in trans[n]:
            if d in idx:
                rows[i][idx[d]] -= w
            else:
                rhs[i] += w * fixed[d]
    sol = _own_solve(rows, rhs)
    return sol[idx[init]]


def _worst_case_value(states, actions_of, labels, init, psi, minimize: bool, cap: int):
    """Optimal value over memoryless policies of the status-tracked product."""
    skeleton, leaves = _split_leaves(psi)
    start = (init, _advance_statuses(("?",) * len(leaves), leaves, labels[init]))

    def node_actions(node):
        s, st = node
        out = []
        for act in actions_of(s):
            branch: dict = {}
            for dst, w in act:
                child = (dst, _advance_statuses(st, leaves, labels[dst]))
                branch[child] = branch.get(child, Fraction(0)) + w
            out.append(tuple(sorted(branch.items(), key=repr)))
        return out

    best = [None]
    count = [0]

    def rec(assign, frontier):
        todo = next((n for n in frontier if n not in assign), None)
        if todo is None:
            count[0] += 1
            if count[0] > cap:
                raise CapExceeded(f"oracle policy enumeration exceeded {cap}")
            trans = {n: assign[n] for n in assign}
            val = _oracle_chain_value(
                set(assign),
                trans,
                start,
                lambda n: _frozen_truth(skeleton, leaves, n[1]),
            )
            if best[0] is None:
                best[0] = val
            else:
                best[0] = min(best[0], val) if minimize else max(best[0], val)
            return
        for branch in node_actions(todo):
            assign[todo] = branch
            rec(assign, frontier + [d for d, _ in branch if d not in assign])
            del assign[todo]

    rec({}, [start])
    return best[0]


def brute_force_patl(sys, q=None, formula: Coop = None, view="objective", cap=200_000):
    """Full enumeration of coalition strategies x exact worst-case opponent value.

    Returns (verdict, optimum) where optimum is the coalition's best
    worst-case probability (for upper bounds, the best best-case).
    """
    if not isinstance(formula, Coop) or formula.bound is None:
        raise UnsupportedFormula("brute_force_patl handles bounded modalities only")
    op, d = formula.bound
    minimize = op in (">=", ">")
    coalition = () if formula.flavor.value == "prob" else tuple(sorted(formula.coalition))

    if isinstance(sys, MAS):
        mdp = compile_mdp(sys)
        if q is None:
            q = mdp.initial
        arena = as_arena(sys)
        labels = dict(mdp.labels)

        def make_actions(table):
            def actions_of(s):
                out = []
                for act in mdp.actions[s]:
                    ok = True
                    for agent_name, triple in act.exposed:
                        if agent_name in table:
                            choice = table[agent_name][triple.src]
                            if not _own_triple_allowed(choice, triple):
                                ok = False
                                break
                    if ok:
                        out.append(tuple(act.dist.weights))
                if not out:
                    raise ValidationError("strategy deadlocks the compiled system")
                return out

            return actions_of

        starts = [q]
        if view == "subjective" and coalition:
            starts = sorted(
                set().union(*(arena.indistinguishable(a, q) for a in coalition)), key=repr
            )
        best_overall = None
        verdict = False
        for table in _own_enumerate(arena, coalition, cap):
            try:
                actions_of = make_actions(table)
                vals = [
                    _worst_case_value(mdp.states, actions_of, labels, s, formula.path, minimize, cap)
                    for s in starts
                ]
            except ValidationError:
                continue
            value = min(vals) if minimize else max(vals)
            if best_overall is None or (value > best_overall if minimize else value < best_overall):
                best_overall = value
            if all(_cmp(v, op, d) for v in vals):
                verdict = True
        if best_overall is None:
            best_overall = Fraction(0)
        return verdict, best_overall

    if isinstance(sys, ICGS):
        g = sys
        if q is None:
            q = g.initial
        arena = as_arena(g)
        labels = {s: g.labeling[s] for s in g.states}
        starts = [q]
        if view == "subjective" and coalition:
            starts = sorted(set().union(*(g.obs_class(a, q) for a in coalition)), key=repr)
        best_overall = None
        verdict = False
        for table in _own_enumerate(arena, coalition, cap):
            def actions_of(s):
                out = []
                for mov in g.legal_moves(s):
                    ok = True
                    for a in coalition:
                        if mov[g.agents.index(a)] != table[a][g.obs_class(a, s)]:
                            ok = False
                            break
                    if ok:
                        out.append(tuple(g.dist(s, mov).weights))
                return out

            vals = [
                _worst_case_value(g.states, actions_of, labels, s, formula.path, minimize, cap)
                for s in starts
            ]
            value = min(vals) if minimize else max(vals)
            if best_overall is None or (value > best_overall if minimize else value < best_overall):
                best_overall = value
            if all(_cmp(v, op, d) for v in vals):
                verdict = True
        return verdict, best_overall

    raise ValidationError("brute_force_patl takes a MAS or an ICGS")


def _cmp(value, op, d) -> bool:
    return {"<=": value <= d, "<": value < d, ">": value > d, ">=": value >= d}[op]


def _own_triple_allowed(choice, triple) -> bool:
    for t in choice:
        if t == triple:
            return True
        if (
            hasattr(t, "dst")
            and hasattr(triple, "dist")
            and triple.dist.is_point
            and t.src == triple.src
            and t.input == triple.input
            and triple.dist.support == (t.dst,)
        ):
            return True
    return False


# ---------------------------------------------------------------------------
# Statistical cross-check


def monte_carlo(mc: MarkovChain, psi, n: int = 100_000, horizon: int = 200, seed: int = 0):
    """Empirical frequency of psi over n sampled paths, with standard error.

    Raises HorizonInsufficient when the path status is undecided at the
    horizon on more than 1% of the samples.
    """
    skeleton, leaves = _split_leaves(psi)
    rng = random.Random(seed)
    cumulative = {}
    for s, d in mc.trans.items():
        acc = []
        total = 0.0
        for dst, w in d.weights:
            total += float(w)
            acc.append((total, dst))
        cumulative[s] = acc

    def step(s):
        r = rng.random()
        for bound, dst in cumulative[s]:
            if r <= bound:
                return dst
        return cumulative[s][-1][1]

    successes = 0
    undecided = 0
    for _ in range(n):
        s = mc.initial
        st = _advance_statuses(("?",) * len(leaves), leaves, mc.labels[s])
        verdict = _decided_truth(skeleton, leaves, st)
        for _ in range(horizon):
            if verdict is not None:
                break
            s = step(s)
            st = _advance_statuses(st, leaves, mc.labels[s])
            verdict = _decided_truth(skeleton, leaves, st)
        if verdict is None:
            undecided += 1
        elif verdict:
            successes += 1
    if undecided > n // 100:
        raise HorizonInsufficient(
            f"{undecided}/{n} samples undecided at horizon {horizon}"
        )
    p = successes / n
    stderr = math.sqrt(max(p * (1 - p), 1e-12) / n)
    return p, stderr
