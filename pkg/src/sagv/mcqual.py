"""Qualitative model checking: standard and only-achieving strategic modalities.

`check_coop` decides <<C>> psi by strategy enumeration plus emptiness of the
(outcome subgraph x NBA(!psi)) product; `check_only` decides the
only-achieving modality <<C>>only psi through the pruned-edge flag product:
a candidate strategy is refuted exactly when some psi-trace of the full
system traverses at least one transition the strategy removed.
"""
from __future__ import annotations

import itertools
from typing import Optional

from .automata import buchi_graph_empty, ltl_to_nba
from .compose import ExtendedSystem, MAS, ModuleArena
from .errors import (
    NotPerfectInformation,
    UnknownAgent,
    UnsupportedFormula,
    UnsupportedNext,
    ValidationError,
)
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
    coop_nodes,
    has_next,
)
from .mcprob import GameArena, ICGS
from .strategy import (
    JointStrategy,
    RecallArena,
    RestrictedArena,
    complies,
    enumerate_ir,
    expand_recall,
)


def as_arena(sys):
    if isinstance(sys, MAS):
        return ModuleArena(sys)
    if isinstance(sys, ICGS):
        return GameArena(sys)
    if isinstance(sys, ExtendedSystem):
        return sys.arena()
    if hasattr(sys, "steps") and hasattr(sys, "obs"):
        return sys
    raise ValidationError(f"cannot interpret {type(sys).__name__} as a game arena")


def _letters(arena, atoms):
    cache: dict = {}

    def of(q):
        if q not in cache:
            cache[q] = frozenset(a for a in atoms if arena.atom_true(a, q))
        return cache[q]

    return of


def _check_coalition(arena, coalition):
    for a in coalition:
        if a not in arena.agents:
            raise UnknownAgent(f"unknown agent {a!r}")


def _gate_path_formula(arena, psi):
    if coop_nodes(psi):
        raise UnsupportedFormula(
            "nested strategic modalities must be labeled away first (see verify_nested)"
        )
    if has_next(psi) and not arena.has_next_ok:
        raise UnsupportedNext("X is rejected on asynchronous module systems")


def _normalize_sem(sem):
    """Returns (kind, memory): ("ir", 1) or ("iR", m)."""
    if sem == "ir":
        return ("ir", 1)
    if isinstance(sem, tuple) and len(sem) == 2 and sem[0] == "iR":
        return ("iR", int(sem[1]))
    if isinstance(sem, str) and sem.startswith("iR"):
        m = sem[2:].lstrip(":(").rstrip(")")
        return ("iR", int(m) if m else 2)
    raise ValidationError(f"unknown strategy semantics {sem!r}")


def _strategy_refuted(arena, start, js: JointStrategy, nba, letter_of) -> bool:
    """Does some compliant infinite word from `start` hit the NBA's language?"""
    nodes = set()
    adj: dict = {}
    init_nodes = [(start, b) for b in sorted(nba.initial, key=repr)]
    nodes.update(init_nodes)
    frontier = list(init_nodes)
    while frontier:
        node = frontier.pop()
        q, b = node
        out = []
        succs_b = nba.succ(b, letter_of(q))
        if succs_b:
            for step in arena.steps(q):
                if not complies(arena, q, step, js):
                    continue
                for b2 in succs_b:
                    node2 = (step.dst, b2)
                    out.append(node2)
                    if node2 not in nodes:
                        nodes.add(node2)
                        frontier.append(node2)
        adj[node] = out
    acc = [frozenset(n for n in nodes if n[1] in f) for f in nba.accepting]
    for arena_acc in arena.acceptance:
        acc.append(frozenset(n for n in nodes if n[0] in arena_acc))
    return not buchi_graph_empty(nodes, adj, acc)


def _starts(arena, q, coalition, view):
    if view == "subjective" and coalition:
        out = set()
        for a in coalition:
            out |= arena.indistinguishable(a, q)
        return sorted(out, key=repr)
    if view not in ("objective", "subjective"):
        raise ValidationError(f"unknown view {view!r}")
    return [q]


def check_coop(sys, q=None, coalition=(), psi=None, sem="ir", view="objective"):
    """Decide <<coalition>> psi at q; returns (verdict, witness strategy).

    Subjective view demands success from every state some coalition member
    cannot distinguish from q; for the empty coalition that union is empty
    and evaluation stays objective.
    """
    arena = as_arena(sys)
    if q is None:
        q = arena.initial
    coalition = tuple(sorted(coalition))
    _check_coalition(arena, coalition)
    _gate_path_formula(arena, psi)
    kind, memory = _normalize_sem(sem)
    base_starts = _starts(arena, q, coalition, view)
    if kind == "iR":
        recall = expand_recall(arena, coalition, memory)
        starts = [recall.lift(s) for s in base_starts]
        work = recall
    else:
        starts = base_starts
        work = arena
    nba = ltl_to_nba(Not(psi))
    letter_of = _letters(work, atom_nodes(psi))
    for js in enumerate_ir(work, coalition):
        if all(not _strategy_refuted(work, s, js, nba, letter_of) for s in starts):
            return True, js
    return False, None


def check_coop_under_assumption(ext, q=None, coalition=(), psi=None, sem="ir", view="objective"):
    """<<coalition>> psi where only assumption-accepted words count."""
    if isinstance(ext, ExtendedSystem):
        arena = ext.arena()
    else:
        arena = as_arena(ext)
    if not arena.acceptance:
        raise ValidationError("system carries no assumption acceptance set")
    return check_coop(arena, q, coalition, psi, sem=sem, view=view)


def check_only(sys, q=None, coalition=(), psi=None, sem="ir"):
    """Decide the only-achieving modality; returns (verdict, witness).

    A candidate strategy survives iff no trace from q that satisfies psi
    (and is assumption-accepted, when the system is extended) traverses a
    transition the strategy prunes.
    """
    arena = as_arena(sys)
    if q is None:
        q = arena.initial
    coalition = tuple(sorted(coalition))
    _check_coalition(arena, coalition)
    _gate_path_formula(arena, psi)
    kind, memory = _normalize_sem(sem)
    if kind == "iR":
        work = expand_recall(arena, coalition, memory)
        q = work.lift(q)
    else:
        work = arena
    nba = ltl_to_nba(psi)
    letter_of = _letters(work, atom_nodes(psi))
    for js in enumerate_ir(work, coalition):
        if not _only_refuted(work, q, js, nba, letter_of):
            return True, js
    return False, None


def _only_refuted(arena, start, js: JointStrategy, nba, letter_of) -> bool:
    """Accepting run over (full system x NBA(psi)) that uses a pruned edge?"""
    nodes = set()
    adj: dict = {}
    init_nodes = [(start, b, False) for b in sorted(nba.initial, key=repr)]
    nodes.update(init_nodes)
    frontier = list(init_nodes)
    while frontier:
        node = frontier.pop()
        q, b, flag = node
        out = []
        succs_b = nba.succ(b, letter_of(q))
        if succs_b:
            for step in arena.steps(q):
                flag2 = flag or not complies(arena, q, step, js)
                for b2 in succs_b:
                    node2 = (step.dst, b2, flag2)
                    out.append(node2)
                    if node2 not in nodes:
                        nodes.add(node2)
                        frontier.append(node2)
        adj[node] = out
    acc = [frozenset(n for n in nodes if n[1] in f) for f in nba.accepting]
    for arena_acc in arena.acceptance:
        acc.append(frozenset(n for n in nodes if n[0] in arena_acc))
    acc.append(frozenset(n for n in nodes if n[2]))
    return not buchi_graph_empty(nodes, adj, acc)


def synth(sys, q=None, coalition=(), psi=None, flavor="standard", sem="ir", view="objective"):
    """Witness strategy for the requested modality, or None when none exists."""
    if flavor == "only":
        ok, js = check_only(sys, q, coalition, psi, sem=sem)
    else:
        arena = as_arena(sys)
        if arena.acceptance:
            ok, js = check_coop_under_assumption(arena, q, coalition, psi, sem=sem, view=view)
        else:
            ok, js = check_coop(arena, q, coalition, psi, sem=sem, view=view)
    return js if ok else None


# ---------------------------------------------------------------------------
# Polynomial fixpoint algorithm for vanilla onlyATL under perfect information


def _sat_states(g: ICGS, arena: GameArena, sf) -> set:
    out = set()
    for q in g.states:
        if _sat_at(arena, sf, q):
            out.add(q)
    return out


def _sat_at(arena, sf, q) -> bool:
    if isinstance(sf, TrueConst):
        return True
    if sf == FALSE:
        return False
    if isinstance(sf, (VarAtom, PropAtom)):
        return arena.atom_true(sf, q)
    if isinstance(sf, Not):
        return not _sat_at(arena, sf.sub, q)
    if isinstance(sf, And):
        return _sat_at(arena, sf.left, q) and _sat_at(arena, sf.right, q)
    if isinstance(sf, Or):
        return _sat_at(arena, sf.left, q) or _sat_at(arena, sf.right, q)
    raise UnsupportedFormula(f"not a state formula over atoms: {sf!r}")


def _closure_all_moves(g: ICGS, seeds: set) -> set:
    seen = set(seeds)
    frontier = list(seeds)
    while frontier:
        q = frontier.pop()
        for mov in g.legal_moves(q):
            for dst in g.dist(q, mov).support:
                if dst not in seen:
                    seen.add(dst)
                    frontier.append(dst)
    return seen


def _active_moves_until(g: ICGS, arena, q0, sat1: set, sat2: set) -> set:
    # E = states with some trace satisfying sat1 U sat2
    e = set(sat2)
    changed = True
    while changed:
        changed = False
        for q in g.states:
            if q in e or q not in sat1:
                continue
            if any(
                dst in e
                for mov in g.legal_moves(q)
                for dst in g.dist(q, mov).support
            ):
                e.add(q)
                changed = True
    active: set = set()
    if q0 not in e:
        return active
    pending = {q0}
    frontier = [q0]
    witnesses = set()
    while frontier:
        q = frontier.pop()
        if q in sat2:
            witnesses.add(q)
        if q in sat1:
            for mov in g.legal_moves(q):
                hits = [dst for dst in g.dist(q, mov).support if dst in e]
                if hits:
                    active.add((q, mov))
                    for dst in hits:
                        if dst not in pending:
                            pending.add(dst)
                            frontier.append(dst)
    post_seeds = set()
    for q in witnesses:
        for mov in g.legal_moves(q):
            active.add((q, mov))
            post_seeds.update(g.dist(q, mov).support)
    for q in _closure_all_moves(g, post_seeds):
        for mov in g.legal_moves(q):
            active.add((q, mov))
    return active


def _active_moves_next(g: ICGS, arena, q0, sat: set) -> set:
    active: set = set()
    cont = set()
    for mov in g.legal_moves(q0):
        hits = [dst for dst in g.dist(q0, mov).support if dst in sat]
        if hits:
            active.add((q0, mov))
            cont.update(hits)
    for q in _closure_all_moves(g, cont):
        for mov in g.legal_moves(q):
            active.add((q, mov))
    return active


def _active_moves_globally(g: ICGS, arena, q0, sat: set) -> set:
    eg = set(sat)
    changed = True
    while changed:
        changed = False
        for q in list(eg):
            if not any(
                dst in eg
                for mov in g.legal_moves(q)
                for dst in g.dist(q, mov).support
            ):
                eg.discard(q)
                changed = True
    active: set = set()
    if q0 not in eg:
        return active
    pending = {q0}
    frontier = [q0]
    while frontier:
        q = frontier.pop()
        for mov in g.legal_moves(q):
            hits = [dst for dst in g.dist(q, mov).support if dst in eg]
            if hits:
                active.add((q, mov))
                for dst in hits:
                    if dst not in pending:
                        pending.add(dst)
                        frontier.append(dst)
    return active


def check_only_fixpoint(sys, q=None, coalition=(), phi=None) -> bool:
    """Vanilla onlyATL under perfect information, in polynomial time.

    Collects the set of (state, move) pairs that lie on some phi-trace from
    q; the modality holds iff at every state the active moves agree on each
    coalition member's component, so one positional choice covers them all.
    Agrees with check_only wherever both apply.
    """
    if isinstance(sys, GameArena):
        g, arena = sys.g, sys
    elif isinstance(sys, ICGS):
        g, arena = sys, GameArena(sys)
    else:
        raise NotPerfectInformation(
            "the fixpoint algorithm runs on (projections of) game structures"
        )
    for agent in g.agents:
        for s in g.states:
            if len(g.obs_class(agent, s)) != 1:
                raise NotPerfectInformation(f"agent {agent} cannot distinguish states")
    if q is None:
        q = g.initial
    coalition = tuple(sorted(coalition))
    _check_coalition(arena, coalition)

    gpat = _g_pattern(phi)
    if gpat is not None:
        active = _active_moves_globally(g, arena, q, _sat_states(g, arena, gpat))
    elif isinstance(phi, Next):
        active = _active_moves_next(g, arena, q, _sat_states(g, arena, phi.sub))
    elif isinstance(phi, Until):
        active = _active_moves_until(
            g, arena, q, _sat_states(g, arena, phi.left), _sat_states(g, arena, phi.right)
        )
    else:
        raise UnsupportedFormula(f"not a vanilla onlyATL path formula: {phi!r}")

    per_state: dict = {}
    for state, mov in active:
        per_state.setdefault(state, []).append(mov)
    for agent in coalition:
        idx = g.agents.index(agent)
        for state, movs in per_state.items():
            if len({m[idx] for m in movs}) > 1:
                return False
    return True
