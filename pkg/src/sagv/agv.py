"""Guarantee checking and the assume-guarantee inference rules.

Each rule application returns a Verdict with one report per machine-checked
premise; a rule concludes only if every premise (and side-check) holds, and
premise-level errors are recorded, never dropped.  Probability premises are
evaluated with the soundness-preserving polarity: lower-bounded P premises
demonically (min over schedulers and counterstrategies), upper-bounded ones
angelically (max).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from .automata import NBA, buchi_graph_empty, complement, ltl_to_nba, monitor_for
from .compose import (
    ExtendedSystem,
    MAS,
    ModuleArena,
    compile_mdp,
    extend_with_assumption,
    neighborhood,
    neighborhood_composition,
    restricted_mas,
)
from .core import Assumption, Module, Valuation, merge
from .errors import (
    InconsistentBounds,
    SagvError,
    SynthesisFailed,
    UnsupportedFormula,
    ValidationError,
    ZeroDenominator,
)
from .logic import And, Coop, Flavor, PropAtom, coop_nodes, local_to, pretty, subformulas
from .mcprob import GameArena, ICGS, MDP, MdpAction, check_patl, mdp_probability
from .mcqual import (
    as_arena,
    check_coop,
    check_coop_under_assumption,
    check_only,
    synth,
)
from .strategy import enumerate_ir


# ---------------------------------------------------------------------------
# Guarantee checking: M |= A via stutter-tracking inclusion


def _assumption_nba(a: Assumption, alphabet: frozenset) -> NBA:
    """Stutter-tracking expansion of an assumption.

    Letters are (state-projection, input-projection) pairs of one module
    step.  The automaton may idle while the projection stutters or advance
    through an assumption transition consuming the input seen one step
    earlier; acceptance marks advances into accepting states, so accepted
    runs advance infinitely often and hit F infinitely often.
    """
    mod = a.module
    init = (mod.init, None, False)
    states = {init}
    delta: dict = {}
    frontier = [init]
    while frontier:
        node = frontier.pop()
        s, last, _ = node
        for letter in alphabet:
            x, i = letter
            targets = []
            if mod.label[s] == x:
                targets.append((s, i, False))
            if last is not None:
                for dst in mod.successors(s, last):
                    if mod.label[dst] == x:
                        targets.append((dst, i, dst in a.accepting))
            if targets:
                delta[(node, letter)] = frozenset(targets)
                for t in targets:
                    if t not in states:
                        states.add(t)
                        frontier.append(t)
    accepting = frozenset(s for s in states if s[2])
    return NBA(alphabet, frozenset(states), frozenset([init]), delta, (accepting,))


def _stream_letter(m: Module, q, alpha: Valuation, xa, ia):
    lab = m.label[q]
    return (lab.restrict(xa), merge(lab, alpha).restrict(ia))


def check_guarantee(m: Module, a: Assumption, state_budget: int = 100_000) -> bool:
    """Does every trace of m have a curtailment accepted by the assumption?

    Decided as language inclusion of m's step stream in the stutter-tracking
    expansion of a, via the budgeted complement.  Assumption inputs that are
    internal to m are read off the state labels.
    """
    xa = a.module.state_vars
    ia = a.module.input_vars
    if not xa <= m.state_vars:
        raise ValidationError(
            f"assumption state variables {sorted(xa - m.state_vars)} not written by the system"
        )
    if not ia <= (m.state_vars | m.input_vars):
        raise ValidationError(
            f"assumption input variables {sorted(ia - m.state_vars - m.input_vars)} unknown"
        )

    edge_letters: dict = {}
    for t in m.trans:
        edge_letters[(t.src, t.input)] = _stream_letter(m, t.src, t.input, xa, ia)
    alphabet = frozenset(edge_letters.values())
    ahat = _assumption_nba(a, alphabet)
    comp = complement(ahat, state_budget)

    nodes = set()
    adj: dict = {}
    init_nodes = [(m.init, c) for c in sorted(comp.initial, key=repr)]
    nodes.update(init_nodes)
    frontier = list(init_nodes)
    while frontier:
        node = frontier.pop()
        q, c = node
        out = []
        for t in sorted(m.transitions_from(q), key=repr):
            letter = edge_letters[(t.src, t.input)]
            for c2 in comp.succ(c, letter):
                node2 = (t.dst, c2)
                out.append(node2)
                if node2 not in nodes:
                    nodes.add(node2)
                    frontier.append(node2)
        adj[node] = out
    acc = [frozenset(n for n in nodes if n[1] in f) for f in comp.accepting]
    return buchi_graph_empty(nodes, adj, acc)


# ---------------------------------------------------------------------------
# Configurations and verdicts


@dataclass(frozen=True, eq=False)
class UnitConfig:
    """Premise unit: one coalition member (or one partition block)."""

    members: tuple[str, ...]
    assumption: Assumption
    k: int = 1


@dataclass(frozen=True, eq=False)
class AGConfig:
    coalition: tuple[str, ...]
    units: tuple[UnitConfig, ...]
    local: Mapping[str, object]  # agent name -> local path formula psi_i
    global_formula: object = None
    p1: Optional[Fraction] = None
    p2: Optional[Fraction] = None
    p: Optional[Fraction] = None
    sem: str = "ir"
    view: str = "objective"

    def validate(self, mas: MAS) -> None:
        cov: list[str] = []
        for u in self.units:
            if u.k < 1:
                raise ValidationError("unit radius k must be >= 1")
            cov.extend(u.members)
        if sorted(cov) != sorted(self.coalition):
            raise ValidationError(
                f"units cover {sorted(cov)}, expected the coalition {sorted(self.coalition)}"
            )
        if len(set(cov)) != len(cov):
            raise ValidationError("partition blocks overlap")
        for name in self.coalition:
            psi = self.local.get(name)
            if psi is None:
                raise ValidationError(f"no local formula for {name}")
            if not local_to(psi, mas.by_name(name).module):
                raise ValidationError(
                    f"local formula for {name} uses non-local atoms: {pretty(psi)}"
                )


@dataclass(frozen=True)
class PremiseReport:
    name: str
    holds: Optional[bool]
    detail: str = ""
    error: str = ""

    def line(self) -> str:
        mark = "ok" if self.holds else ("ERROR" if self.error else "fail")
        tail = f" [{self.error}]" if self.error else ""
        return f"  premise {self.name}: {mark} {self.detail}{tail}"


@dataclass(frozen=True, eq=False)
class Verdict:
    rule: str
    status: str  # "Concluded" | "Inapplicable"
    formula: object = None
    premises: tuple[PremiseReport, ...] = ()
    witnesses: Mapping[str, object] = field(default_factory=dict)

    @property
    def concluded(self) -> bool:
        return self.status == "Concluded"

    def render(self) -> str:
        lines = [f"rule {self.rule}: {self.status}"]
        if self.formula is not None and self.concluded:
            lines.append(f"  concluded: {pretty(self.formula)}")
        lines.extend(p.line() for p in self.premises)
        return "\n".join(lines)


def _conjunction(formulas: Sequence) -> object:
    out = None
    for f in formulas:
        out = f if out is None else And(out, f)
    return out


def _local_conjunction(cfg: AGConfig) -> object:
    return _conjunction([cfg.local[n] for n in sorted(cfg.coalition)])


def _verdict(rule, reports, formula, witnesses=None) -> Verdict:
    ok = all(r.holds for r in reports)
    return Verdict(
        rule=rule,
        status="Concluded" if ok else "Inapplicable",
        formula=formula if ok else None,
        premises=tuple(reports),
        witnesses=dict(witnesses or {}),
    )


def _premise_ability(mas: MAS, unit: UnitConfig, psi, cfg: AGConfig, flavor: str):
    """Premise 1: the unit with its assumption achieves (or only-achieves) psi."""
    specs = [mas.by_name(n) for n in unit.members]
    ext = extend_with_assumption(specs, unit.assumption)
    name = f"ability[{','.join(unit.members)}]"
    try:
        if flavor == "only":
            ok, witness = check_only(ext.arena(), None, unit.members, psi, sem=cfg.sem)
        else:
            ok, witness = check_coop_under_assumption(
                ext, None, unit.members, psi, sem=cfg.sem, view=cfg.view
            )
        detail = f"({'|'.join(unit.members)} | {unit.assumption.module.name}) vs {pretty(psi)}"
        return PremiseReport(name, ok, detail), witness
    except SagvError as e:
        return PremiseReport(name, False, error=str(e)), None


def _premise_guarantee(mas: MAS, unit: UnitConfig):
    name = f"guarantee[{','.join(unit.members)}]"
    try:
        hood = neighborhood(mas, set(unit.members), unit.k)
        comp = neighborhood_composition(mas, set(unit.members), unit.k)
        ok = check_guarantee(comp, unit.assumption)
        detail = f"N_{unit.k} = {{{','.join(sorted(hood))}}} |= {unit.assumption.module.name}"
        return PremiseReport(name, ok, detail)
    except SagvError as e:
        return PremiseReport(name, False, error=str(e))


def _premise_probability(mdp: MDP, psi, mode: str, op: str, bound: Fraction, name: str):
    try:
        value = mdp_probability(mdp, psi, mode)
        ok = value >= bound if op == ">=" else value <= bound
        cmp = ">=" if op == ">=" else "<="
        return PremiseReport(
            name, ok, detail=f"{mode} P({pretty(psi)}) = {value} {cmp} {bound}?"
        )
    except SagvError as e:
        return PremiseReport(name, False, error=str(e))


# ---------------------------------------------------------------------------
# Qualitative rules


def apply_rk(mas: MAS, cfg: AGConfig) -> Verdict:
    """Per-agent rule: local abilities under assumptions + guarantees."""
    cfg.validate(mas)
    reports = []
    witnesses = {}
    for unit in cfg.units:
        if len(unit.members) != 1:
            raise ValidationError("rule Rk takes singleton units; use Part for blocks")
        (i,) = unit.members
        rep, witness = _premise_ability(mas, unit, cfg.local[i], cfg, "standard")
        reports.append(rep)
        witnesses[i] = witness
        reports.append(_premise_guarantee(mas, unit))
    formula = Coop(tuple(sorted(cfg.coalition)), None, _local_conjunction(cfg))
    return _verdict("Rk", reports, formula, witnesses)


def apply_part(mas: MAS, cfg: AGConfig) -> Verdict:
    """Partitioned rule: joint abilities of blocks + block guarantees."""
    cfg.validate(mas)
    reports = []
    witnesses = {}
    for unit in cfg.units:
        psi = _conjunction([cfg.local[n] for n in sorted(unit.members)])
        rep, witness = _premise_ability(mas, unit, psi, cfg, "standard")
        reports.append(rep)
        witnesses[",".join(unit.members)] = witness
        reports.append(_premise_guarantee(mas, unit))
    formula = Coop(tuple(sorted(cfg.coalition)), None, _local_conjunction(cfg))
    return _verdict("Part", reports, formula, witnesses)


# ---------------------------------------------------------------------------
# Probabilistic rules


def _check_bounds_pr(cfg: AGConfig) -> None:
    if cfg.p1 is None or cfg.p2 is None:
        raise ValidationError("rule PRk needs bounds p1 and p2")
    if cfg.p2 == 0:
        raise ZeroDenominator("premise bound p2 must be positive")
    if cfg.p1 > cfg.p2:
        raise InconsistentBounds(f"p1 = {cfg.p1} exceeds p2 = {cfg.p2}")


def apply_prk(mas: MAS, cfg: AGConfig) -> Verdict:
    """Probabilistic per-agent rule with the conditional-probability bound."""
    cfg.validate(mas)
    _check_bounds_pr(cfg)
    reports = []
    witnesses = {}
    for unit in cfg.units:
        if len(unit.members) != 1:
            raise ValidationError("rule PRk takes singleton units")
        (i,) = unit.members
        rep, witness = _premise_ability(mas, unit, cfg.local[i], cfg, "standard")
        reports.append(rep)
        witnesses[i] = witness
        reports.append(_premise_guarantee(mas, unit))
    conj = _local_conjunction(cfg)
    both = And(cfg.global_formula, conj)
    try:
        mdp = compile_mdp(mas)
        reports.append(_premise_probability(mdp, both, "min", ">=", cfg.p1, "P>=p1"))
        reports.append(_premise_probability(mdp, conj, "max", "<=", cfg.p2, "P<=p2"))
    except SagvError as e:
        reports.append(PremiseReport("compile", False, error=str(e)))
    bound = min(Fraction(1), cfg.p1 / cfg.p2)
    formula = Coop(tuple(sorted(cfg.coalition)), (">=", bound), cfg.global_formula)
    return _verdict("PRk", reports, formula, witnesses)


def _synthesize_units(mas: MAS, cfg: AGConfig, flavor: str):
    """Premise-1 synthesis: per-unit witness strategies (None reports failure)."""
    reports = []
    strategies = {}
    for unit in cfg.units:
        psi = _conjunction([cfg.local[n] for n in sorted(unit.members)])
        specs = [mas.by_name(n) for n in unit.members]
        ext = extend_with_assumption(specs, unit.assumption)
        name = f"synthesis[{','.join(unit.members)}]"
        try:
            witness = synth(
                ext.arena(), None, unit.members, psi, flavor=flavor, sem=cfg.sem, view=cfg.view
            )
            if witness is None:
                reports.append(
                    PremiseReport(
                        name, False, error=str(SynthesisFailed(unit.members))
                    )
                )
            else:
                reports.append(PremiseReport(name, True, detail=f"sigma for {pretty(psi)}"))
                for member, strat in witness.parts.items():
                    strategies[member] = strat
        except SagvError as e:
            reports.append(PremiseReport(name, False, error=str(e)))
        reports.append(_premise_guarantee(mas, unit))
    return reports, strategies


def _restricted_reports(mas, cfg, strategies, psi_main, conj):
    """Premise 3 on the strategy-restricted system, plus the mu side-checks."""
    reports = []
    try:
        rmas = restricted_mas(mas, strategies)
        rmdp = compile_mdp(rmas)
        reports.append(_premise_probability(rmdp, psi_main, "min", ">=", cfg.p, "P>=p"))
        one = mdp_probability(rmdp, conj, "min")
        reports.append(
            PremiseReport(
                "side:mu(conj)=1", one == 1, detail=f"min P({pretty(conj)}) = {one}"
            )
        )
        both = And(cfg.global_formula, conj)
        lo_b, lo_g = mdp_probability(rmdp, both, "min"), mdp_probability(rmdp, psi_main, "min")
        hi_b, hi_g = mdp_probability(rmdp, both, "max"), mdp_probability(rmdp, psi_main, "max")
        reports.append(
            PremiseReport(
                "side:mu(psi&conj)=mu(psi)",
                lo_b == lo_g and hi_b == hi_g,
                detail=f"min {lo_b}={lo_g}, max {hi_b}={hi_g}",
            )
        )
    except SagvError as e:
        reports.append(PremiseReport("restricted", False, error=str(e)))
    return reports


def apply_prsynt(mas: MAS, cfg: AGConfig) -> Verdict:
    """Synthesis variant: premise 3 runs on the strategy-restricted system."""
    cfg.validate(mas)
    if cfg.p is None:
        raise ValidationError("rule PRsynt needs the bound p")
    for unit in cfg.units:
        if len(unit.members) != 1:
            raise ValidationError("rule PRsynt takes singleton units; use PPart for blocks")
    reports, strategies = _synthesize_units(mas, cfg, "standard")
    if all(r.holds for r in reports):
        reports.extend(
            _restricted_reports(mas, cfg, strategies, cfg.global_formula, _local_conjunction(cfg))
        )
    formula = Coop(tuple(sorted(cfg.coalition)), (">=", cfg.p), cfg.global_formula)
    return _verdict("PRsynt", reports, formula, strategies)


def apply_ppart(mas: MAS, cfg: AGConfig) -> Verdict:
    """Partitioned synthesis rule (sound and, with the right partition, complete)."""
    cfg.validate(mas)
    if cfg.p is None:
        raise ValidationError("rule PPart needs the bound p")
    reports, strategies = _synthesize_units(mas, cfg, "standard")
    if all(r.holds for r in reports):
        reports.extend(
            _restricted_reports(mas, cfg, strategies, cfg.global_formula, _local_conjunction(cfg))
        )
    formula = Coop(tuple(sorted(cfg.coalition)), (">=", cfg.p), cfg.global_formula)
    return _verdict("PPart", reports, formula, strategies)


def apply_pronly(mas: MAS, cfg: AGConfig) -> Verdict:
    """Lower-approximation rule: premise 1 uses only-achieving abilities."""
    cfg.validate(mas)
    if cfg.p is None:
        raise ValidationError("rule PRonly needs the bound p")
    reports = []
    witnesses = {}
    for unit in cfg.units:
        if len(unit.members) != 1:
            raise ValidationError("rule PRonly takes singleton units")
        (i,) = unit.members
        rep, witness = _premise_ability(mas, unit, cfg.local[i], cfg, "only")
        reports.append(rep)
        witnesses[i] = witness
        reports.append(_premise_guarantee(mas, unit))
    conj = _local_conjunction(cfg)
    both = And(cfg.global_formula, conj)
    try:
        mdp = compile_mdp(mas)
        reports.append(_premise_probability(mdp, both, "min", ">=", cfg.p, "P>=p"))
    except SagvError as e:
        reports.append(PremiseReport("compile", False, error=str(e)))
    formula = Coop(tuple(sorted(cfg.coalition)), (">=", cfg.p), cfg.global_formula)
    return _verdict("PRonly", reports, formula, witnesses)


def apply_prso(mas: MAS, cfg: AGConfig) -> Verdict:
    """Only-achieving synthesis rule; the synthesized strategies must exist
    (a bottom cannot restrict the system), and premise 3 runs restricted."""
    cfg.validate(mas)
    if cfg.p is None:
        raise ValidationError("rule PRso needs the bound p")
    for unit in cfg.units:
        if len(unit.members) != 1:
            raise ValidationError("rule PRso takes singleton units")
    reports, strategies = _synthesize_units(mas, cfg, "only")
    conj = _local_conjunction(cfg)
    both = And(cfg.global_formula, conj)
    if all(r.holds for r in reports):
        try:
            rmas = restricted_mas(mas, strategies)
            rmdp = compile_mdp(rmas)
            reports.append(_premise_probability(rmdp, both, "min", ">=", cfg.p, "P>=p"))
        except SagvError as e:
            reports.append(PremiseReport("restricted", False, error=str(e)))
    formula = Coop(tuple(sorted(cfg.coalition)), (">=", cfg.p), cfg.global_formula)
    return _verdict("PRso", reports, formula, strategies)


RULES = {
    "Rk": apply_rk,
    "Part": apply_part,
    "PRk": apply_prk,
    "PRsynt": apply_prsynt,
    "PPart": apply_ppart,
    "PRonly": apply_pronly,
    "PRso": apply_prso,
}


# ---------------------------------------------------------------------------
# Nested strategic operators: bottom-up labeling


def _innermost_coops(f) -> list[Coop]:
    out = []
    for g in subformulas(f):
        if isinstance(g, Coop) and not coop_nodes(g.path):
            out.append(g)
    seen = []
    for g in out:
        if g not in seen:
            seen.append(g)
    return seen


def _substitute(f, target, replacement):
    if f == target:
        return replacement
    if isinstance(f, Coop):
        return Coop(f.coalition, f.bound, _substitute(f.path, target, replacement), f.flavor)
    if isinstance(f, And):
        return And(_substitute(f.left, target, replacement), _substitute(f.right, target, replacement))
    from .logic import Or as _Or, Not as _Not, Next as _Next, Until as _Until

    if isinstance(f, _Or):
        return _Or(_substitute(f.left, target, replacement), _substitute(f.right, target, replacement))
    if isinstance(f, _Not):
        return _Not(_substitute(f.sub, target, replacement))
    if isinstance(f, _Next):
        return _Next(_substitute(f.sub, target, replacement))
    if isinstance(f, _Until):
        return _Until(_substitute(f.left, target, replacement), _substitute(f.right, target, replacement))
    return f


def _icgs_with_extra(g: ICGS, extra: Mapping) -> ICGS:
    labeling = {q: g.labeling[q] | frozenset(extra.get(q, ())) for q in g.states}
    return ICGS(
        agents=g.agents,
        states=g.states,
        initial=g.initial,
        legal=dict(g.legal),
        trans=dict(g.trans),
        labeling=labeling,
        obs=dict(g.obs),
    )


def _eval_coop_everywhere(sys, extra: Mapping, node: Coop, sem, view) -> set:
    """States where one strategic subformula holds (direct checking)."""
    holds = set()
    if isinstance(sys, ICGS):
        g = _icgs_with_extra(sys, extra)
        if node.bound is not None:
            for q in g.states:
                ok, _ = check_patl(g, q, node, view=view)
                if ok:
                    holds.add(q)
        else:
            arena = GameArena(g)
            for q in g.states:
                if node.flavor is Flavor.ONLY:
                    ok, _ = check_only(arena, q, node.coalition, node.path, sem=sem)
                else:
                    ok, _ = check_coop(arena, q, node.coalition, node.path, sem=sem, view=view)
                if ok:
                    holds.add(q)
        return holds
    if isinstance(sys, MAS):
        arena = ModuleArena(sys, extra_labels=extra)
        if node.bound is not None:
            for q in arena.states:
                if _direct_patl_mas(sys, extra, q, node):
                    holds.add(q)
        else:
            for q in arena.states:
                if node.flavor is Flavor.ONLY:
                    ok, _ = check_only(arena, q, node.coalition, node.path, sem=sem)
                else:
                    ok, _ = check_coop(arena, q, node.coalition, node.path, sem=sem, view=view)
                if ok:
                    holds.add(q)
        return holds
    raise ValidationError("verify_nested works on an ICGS or a MAS")


def _direct_patl_mas(mas: MAS, extra: Mapping, q, node: Coop) -> bool:
    """Bounded modality on a compiled MAS MDP by local strategy enumeration.

    Deadlocks introduced by a candidate restriction count against that
    candidate (conservative for lower bounds).
    """
    op, d = node.bound
    mode = "min" if op in (">=", ">") else "max"
    coalition = () if node.flavor is Flavor.PROB else node.coalition
    mdp = compile_mdp(mas)
    arena = ModuleArena(mas, extra_labels=extra)
    psi = node.path
    for js in enumerate_ir(arena, coalition):
        try:
            filtered = _filter_mdp(mdp, js, q)
            value = mdp_probability(filtered, psi, mode, init=q)
        except SagvError:
            continue
        ok = {
            ">=": value >= d,
            ">": value > d,
            "<=": value <= d,
            "<": value < d,
        }[op]
        if ok:
            return True
    return False


def _filter_mdp(mdp: MDP, js, start) -> MDP:
    from .compose import _choice_allows_triple

    def allowed(action: MdpAction) -> bool:
        for agent_name, triple in action.exposed:
            strat = js.parts.get(agent_name)
            if strat is None:
                continue
            local = triple.src
            if not _choice_allows_triple(strat.at(local), triple):
                return False
        return True

    actions = {}
    reachable = set()
    frontier = [start]
    reachable.add(start)
    while frontier:
        s = frontier.pop()
        keep = tuple(a for a in mdp.actions[s] if allowed(a))
        if not keep:
            from .errors import DeadlockState

            raise DeadlockState(f"strategy blocks every action at {s!r}")
        actions[s] = keep
        for a in keep:
            for dst in a.dist.support:
                if dst not in reachable:
                    reachable.add(dst)
                    frontier.append(dst)
    states = tuple(sorted(reachable, key=repr))
    return MDP(states=states, actions=actions, initial=start, labels={s: mdp.labels[s] for s in states})


def verify_nested(sys, phi, cfg_library: Optional[Mapping] = None, sem="ir", view="objective"):
    """Bottom-up verification of nested strategic operators.

    Innermost strategic subformulas are checked at every state (through an
    AG rule from `cfg_library` when the whole remaining formula matches one,
    directly otherwise), their truth sets become fresh propositions, and the
    formula shrinks until no modality remains.  Returns (verdict, labeling).
    """
    cfg_library = dict(cfg_library or {})
    extra: dict = {}
    labeling_trace = []
    counter = itertools.count()
    current = phi
    mas = sys if isinstance(sys, MAS) else None

    while True:
        key = pretty(current)
        if mas is not None and key in cfg_library:
            rule_name, cfg = cfg_library[key]
            verdict = RULES[rule_name](mas, cfg)
            labeling_trace.append((key, f"rule {rule_name}: {verdict.status}"))
            return verdict.concluded, labeling_trace
        inner = _innermost_coops(current)
        if not inner:
            break
        node = inner[0]
        holds = _eval_coop_everywhere(sys, extra, node, sem, view)
        prop = f"__p{next(counter)}"
        for q in holds:
            extra.setdefault(q, set()).add(prop)
        extra = {q: set(v) for q, v in extra.items()}
        labeling_trace.append((pretty(node), sorted(holds, key=repr)))
        current = _substitute(current, node, PropAtom(prop))

    # no strategic operators left: evaluate as a universal path property
    if isinstance(sys, ICGS):
        arena = GameArena(_icgs_with_extra(sys, extra))
    else:
        arena = ModuleArena(sys, extra_labels=extra)
    ok, _ = check_coop(arena, arena.initial, (), current, sem="ir")
    labeling_trace.append((pretty(current), "universal evaluation"))
    return ok, labeling_trace
