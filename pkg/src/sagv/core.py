"""Core domain types: valuations, modules, repertoires, traces and curtailments.

All objects are immutable after construction and all operations are pure, so
everything here is safe to share across threads.  Probabilities are exact
`fractions.Fraction` values throughout.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import (
    ForbiddenSelfLoop,
    IncompatibleValuations,
    MissingTransition,
    NotATrace,
    ValidationError,
    VariableClash,
    VariableNotInScope,
)

# Global states are tuples of local state names; local states are strings.
StateName = object


@dataclass(frozen=True)
class Domain:
    """Finite ordered set of symbolic constants shared by all variables."""

    values: tuple[str, ...]

    def __post_init__(self):
        if not self.values:
            raise ValidationError("domain must be non-empty")
        if len(set(self.values)) != len(self.values):
            raise ValidationError("domain values must be unique")

    def __contains__(self, v) -> bool:
        return v in self.values

    def __iter__(self) -> Iterator[str]:
        return iter(self.values)


@dataclass(frozen=True, order=True)
class Valuation:
    """Immutable assignment of values to a finite set of variables."""

    items: tuple[tuple[str, str], ...]

    @staticmethod
    def of(assignments: Mapping[str, str] | Iterable[tuple[str, str]]) -> "Valuation":
        pairs = dict(assignments)
        return Valuation(tuple(sorted(pairs.items())))

    @property
    def vars(self) -> frozenset[str]:
        return frozenset(k for k, _ in self.items)

    def value(self, var: str) -> str:
        for k, v in self.items:
            if k == var:
                return v
        raise KeyError(var)

    def get(self, var: str, default=None):
        for k, v in self.items:
            if k == var:
                return v
        return default

    def restrict(self, ys: Iterable[str]) -> "Valuation":
        ys = set(ys)
        return Valuation(tuple((k, v) for k, v in self.items if k in ys))

    def as_dict(self) -> dict[str, str]:
        return dict(self.items)

    def __str__(self) -> str:
        return "[" + ",".join(f"{k}={v}" for k, v in self.items) + "]"


EMPTY_VALUATION = Valuation(())


def compatible(r1: Valuation, r2: Valuation) -> bool:
    """True iff the two valuations agree on every shared variable."""
    d2 = dict(r2.items)
    return all(k not in d2 or d2[k] == v for k, v in r1.items)


def merge(r1: Valuation, r2: Valuation) -> Valuation:
    """Union of two compatible valuations; r1 wins on its own variables."""
    if not compatible(r1, r2):
        raise IncompatibleValuations(f"cannot merge {r1} with {r2}")
    out = dict(r2.items)
    out.update(r1.items)
    return Valuation.of(out)


def all_valuations(variables: Iterable[str], domain: Domain) -> tuple[Valuation, ...]:
    """Every valuation of `variables` over `domain`, in a stable order."""
    vs = sorted(set(variables))
    if not vs:
        return (EMPTY_VALUATION,)
    combos = itertools.product(domain.values, repeat=len(vs))
    return tuple(Valuation(tuple(zip(vs, combo))) for combo in combos)


@dataclass(frozen=True)
class Dist:
    """Probability distribution with positive Fraction weights summing to 1."""

    weights: tuple[tuple[object, Fraction], ...]

    @staticmethod
    def of(mapping: Mapping[object, Fraction | int | str]) -> "Dist":
        items = []
        for k, w in mapping.items():
            f = Fraction(w)
            if f < 0:
                raise ValidationError(f"negative weight {f} for {k!r}")
            if f > 0:
                items.append((k, f))
        items.sort(key=lambda kv: repr(kv[0]))
        d = Dist(tuple(items))
        if sum(f for _, f in items) != 1:
            raise ValidationError(f"weights sum to {sum(f for _, f in items)}, not 1")
        return d

    @staticmethod
    def point(outcome) -> "Dist":
        return Dist(((outcome, Fraction(1)),))

    @property
    def support(self) -> tuple:
        return tuple(k for k, _ in self.weights)

    def __getitem__(self, outcome) -> Fraction:
        for k, w in self.weights:
            if k == outcome:
                return w
        return Fraction(0)

    @property
    def is_point(self) -> bool:
        return len(self.weights) == 1

    def map(self, fn) -> "Dist":
        out: dict = {}
        for k, w in self.weights:
            k2 = fn(k)
            out[k2] = out.get(k2, Fraction(0)) + w
        return Dist.of(out)


@dataclass(frozen=True)
class Transition:
    src: StateName
    input: Valuation
    dst: StateName

    def __str__(self) -> str:
        return f"{self.src} -> {self.dst} on {self.input}"


@dataclass(frozen=True)
class ProbTransition:
    src: StateName
    input: Valuation
    dist: Dist

    def __str__(self) -> str:
        branches = ", ".join(f"{w}: {d}" for d, w in self.dist.weights)
        return f"{self.src} on {self.input} -> {{{branches}}}"

    def support_edges(self) -> tuple[Transition, ...]:
        return tuple(Transition(self.src, self.input, d) for d in self.dist.support)


@dataclass(frozen=True, eq=False)
class Module:
    """Reactive module: labeled states plus input-guarded transitions.

    `rule_tags` carries provenance tags (composition rule names, "auto" for
    totality-completing self-loops); it never takes part in semantics.
    """

    name: str
    state_vars: frozenset[str]
    input_vars: frozenset[str]
    domain: Domain
    states: tuple[StateName, ...]
    init: StateName
    label: Mapping[StateName, Valuation]
    trans: frozenset[Transition]
    rule_tags: Mapping[Transition, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self):
        index: dict[tuple[StateName, Valuation], list[StateName]] = {}
        for t in self.trans:
            index.setdefault((t.src, t.input), []).append(t.dst)
        for key in index:
            index[key].sort(key=repr)
        object.__setattr__(self, "_succ", index)

    def successors(self, q, alpha: Valuation) -> tuple[StateName, ...]:
        return tuple(self._succ.get((q, alpha), ()))

    def transitions_from(self, q) -> tuple[Transition, ...]:
        return tuple(sorted((t for t in self.trans if t.src == q), key=repr))

    def input_valuations(self) -> tuple[Valuation, ...]:
        return all_valuations(self.input_vars, self.domain)

    def tags(self, t: Transition) -> frozenset[str]:
        return self.rule_tags.get(t, frozenset())


@dataclass(frozen=True, eq=False)
class ProbModule:
    """Module whose transitions carry distributions over successor states."""

    name: str
    state_vars: frozenset[str]
    input_vars: frozenset[str]
    domain: Domain
    states: tuple[StateName, ...]
    init: StateName
    label: Mapping[StateName, Valuation]
    trans: frozenset[ProbTransition]

    def __post_init__(self):
        index: dict[tuple[StateName, Valuation], list[ProbTransition]] = {}
        for t in self.trans:
            index.setdefault((t.src, t.input), []).append(t)
        for key in index:
            index[key].sort(key=repr)
        object.__setattr__(self, "_choices", index)

    def triples(self, q, alpha: Valuation) -> tuple[ProbTransition, ...]:
        return tuple(self._choices.get((q, alpha), ()))

    def transitions_from(self, q) -> tuple[ProbTransition, ...]:
        return tuple(sorted((t for t in self.trans if t.src == q), key=repr))

    def input_valuations(self) -> tuple[Valuation, ...]:
        return all_valuations(self.input_vars, self.domain)


def as_prob(m: Module) -> ProbModule:
    """Lift a plain module to point distributions."""
    return ProbModule(
        name=m.name,
        state_vars=m.state_vars,
        input_vars=m.input_vars,
        domain=m.domain,
        states=m.states,
        init=m.init,
        label=dict(m.label),
        trans=frozenset(ProbTransition(t.src, t.input, Dist.point(t.dst)) for t in m.trans),
    )


def support_module(pm: ProbModule) -> Module:
    """Project a probabilistic module to its support edges.

    Within each (state, input) pair, a self-edge next to proper edges is
    dropped: a distribution may mix self-mass with progress, but the
    qualitative skeleton keeps the no-redundant-self-loop shape.
    """
    by_pair: dict[tuple, set] = {}
    for t in pm.trans:
        by_pair.setdefault((t.src, t.input), set()).update(t.support_edges())
    edges = set()
    for (src, _), group in by_pair.items():
        proper = {e for e in group if e.dst != src}
        edges.update(proper if proper else group)
    return Module(
        name=pm.name,
        state_vars=pm.state_vars,
        input_vars=pm.input_vars,
        domain=pm.domain,
        states=pm.states,
        init=pm.init,
        label=dict(pm.label),
        trans=frozenset(edges),
    )


def validate(m: Module | ProbModule) -> None:
    """Check all structural module invariants; raise on the first violation."""
    if m.state_vars & m.input_vars:
        raise VariableClash(
            f"module {m.name}: state/input variables clash: {sorted(m.state_vars & m.input_vars)}"
        )
    if m.init not in m.states:
        raise ValidationError(f"module {m.name}: init state {m.init!r} not declared")
    if len(set(m.states)) != len(m.states):
        raise ValidationError(f"module {m.name}: duplicate states")
    for q in m.states:
        if q not in m.label:
            raise ValidationError(f"module {m.name}: state {q!r} has no label")
        lab = m.label[q]
        if lab.vars != m.state_vars:
            raise ValidationError(
                f"module {m.name}: label of {q!r} covers {sorted(lab.vars)}, "
                f"expected {sorted(m.state_vars)}"
            )
        for _, v in lab.items:
            if v not in m.domain:
                raise ValidationError(f"module {m.name}: value {v!r} outside domain")
    if isinstance(m, ProbModule):
        # a point self-loop is legal only as the sole choice for its pair
        for q in m.states:
            for alpha in m.input_valuations():
                triples = m.triples(q, alpha)
                selfish = [
                    t for t in triples if t.dist.is_point and t.dist.support == (q,)
                ]
                if selfish and len(triples) > 1:
                    raise ForbiddenSelfLoop(
                        f"module {m.name}: point self-loop at {q!r} on {alpha} "
                        "next to another choice"
                    )
        support = support_module(m)
    else:
        support = m
    for t in support.trans:
        if t.src not in m.states or t.dst not in m.states:
            raise ValidationError(f"module {m.name}: transition {t} uses undeclared state")
        if t.input.vars != m.input_vars:
            raise ValidationError(
                f"module {m.name}: transition {t} input covers {sorted(t.input.vars)}, "
                f"expected {sorted(m.input_vars)}"
            )
    for q in m.states:
        for alpha in m.input_valuations():
            succ = support.successors(q, alpha)
            if not succ:
                raise MissingTransition(f"module {m.name}: no transition from {q!r} on {alpha}")
            if q in succ and any(d != q for d in succ):
                raise ForbiddenSelfLoop(
                    f"module {m.name}: self-loop at {q!r} on {alpha} next to a proper transition"
                )


@dataclass(frozen=True, eq=False)
class Repertoire:
    """Per-state menu of transition sets an agent may commit to."""

    choices: Mapping[StateName, tuple[frozenset, ...]]

    def at(self, q) -> tuple[frozenset, ...]:
        return self.choices[q]


def full_repertoire(m: Module | ProbModule) -> Repertoire:
    """Single-choice repertoire: at each state, everything the module offers."""
    return Repertoire({q: (frozenset(m.transitions_from(q)),) for q in m.states})


def validate_repertoire(rep: Repertoire, m: Module | ProbModule) -> None:
    for q in m.states:
        if q not in rep.choices:
            raise ValidationError(f"repertoire of {m.name}: state {q!r} missing")
        menu = rep.choices[q]
        if not menu:
            raise ValidationError(f"repertoire of {m.name}: empty menu at {q!r}")
        allowed = set(m.transitions_from(q))
        for choice in menu:
            if not choice:
                raise ValidationError(f"repertoire of {m.name}: empty choice at {q!r}")
            for t in choice:
                if t not in allowed:
                    raise ValidationError(
                        f"repertoire of {m.name}: choice at {q!r} uses foreign transition {t}"
                    )


@dataclass(frozen=True, eq=False)
class Assumption:
    """A module augmented with a set of Büchi-accepting states."""

    module: Module
    accepting: frozenset[StateName]

    def __post_init__(self):
        extra = self.accepting - set(self.module.states)
        if extra:
            raise ValidationError(f"accepting states {sorted(map(repr, extra))} not in module")


# ---------------------------------------------------------------------------
# Lassos: finite representations of ultimately periodic infinite sequences.


@dataclass(frozen=True)
class Lasso:
    """prefix . cycle^omega — all infinite objects in sagv take this shape."""

    prefix: tuple
    cycle: tuple

    def __post_init__(self):
        if not self.cycle:
            raise ValidationError("lasso cycle must be non-empty")

    def at(self, k: int):
        if k < len(self.prefix):
            return self.prefix[k]
        return self.cycle[(k - len(self.prefix)) % len(self.cycle)]

    def __len__(self) -> int:
        return len(self.prefix) + len(self.cycle)

    def unroll(self, n: int) -> tuple:
        return tuple(self.at(k) for k in range(n))

    def map(self, fn) -> "Lasso":
        return Lasso(tuple(fn(x) for x in self.prefix), tuple(fn(x) for x in self.cycle))

    def normalize(self) -> "Lasso":
        """Canonical form: minimal cycle period, prefix folded into the cycle."""
        cyc = list(self.cycle)
        n = len(cyc)
        for p in range(1, n + 1):
            if n % p == 0 and cyc == (cyc[:p] * (n // p)):
                cyc = cyc[:p]
                break
        pre = list(self.prefix)
        while pre and pre[-1] == cyc[-1]:
            pre.pop()
            cyc = [cyc[-1]] + cyc[:-1]
        return Lasso(tuple(pre), tuple(cyc))


def same_word(a: Lasso, b: Lasso) -> bool:
    """Do two lassos denote the same infinite sequence?"""
    return a.normalize() == b.normalize()


@dataclass(frozen=True)
class Trace:
    """Ultimately periodic module trace: lasso of (state, input) pairs."""

    steps: Lasso

    @property
    def states(self) -> Lasso:
        return self.steps.map(lambda si: si[0])

    @property
    def inputs(self) -> Lasso:
        return self.steps.map(lambda si: si[1])


def validate_trace(m: Module, t: Trace) -> None:
    steps = t.steps
    if steps.at(0)[0] != m.init:
        raise NotATrace(f"trace does not start at init {m.init!r}")
    horizon = len(steps) + 1
    for k in range(horizon):
        q, alpha = steps.at(k)
        q2, _ = steps.at(k + 1)
        if q2 not in m.successors(q, alpha):
            raise NotATrace(f"step {k}: ({q!r}, {alpha}, {q2!r}) is not a transition")


def derived_word(m: Module, t: Trace) -> Lasso:
    """State-label projection of a trace."""
    validate_trace(m, t)
    return t.steps.map(lambda si: m.label[si[0]])


def admitted_word(m: Module, t: Trace) -> Lasso:
    """Input projection of a trace."""
    validate_trace(m, t)
    return t.steps.map(lambda si: si[1])


def curtail(w: Lasso, ys: Iterable[str]) -> tuple[Lasso, tuple[int, ...]]:
    """Canonical maximal-compression curtailment of a valuation lasso.

    Returns the stutter-compressed projection onto `ys` together with the
    change indices (c_0 = 0, then the position where each emitted block
    starts).  An eventually-constant projection ends in a length-1 cycle.
    """
    ys = set(ys)
    scope = w.at(0).vars
    if not ys <= scope:
        raise VariableNotInScope(f"{sorted(ys - scope)} not among {sorted(scope)}")
    p_len, c_len = len(w.prefix), len(w.cycle)

    def val(k: int) -> Valuation:
        return w.at(k).restrict(ys)

    out_vals = [val(0)]
    out_idx = [0]
    seen: dict[tuple[int, Valuation], int] = {}
    if p_len == 0:
        seen[(0, out_vals[0])] = 0
    k = 0
    current = out_vals[0]
    while True:
        j = k + 1
        scan_end = max(j, p_len) + c_len
        found = None
        while j < scan_end:
            if val(j) != current:
                found = j
                break
            j += 1
        if found is None:
            # constant tail: close with a one-element cycle
            return Lasso(tuple(out_vals[:-1]), (current,)), tuple(out_idx)
        k = found
        current = val(k)
        if k >= p_len:
            key = ((k - p_len) % c_len, current)
            if key in seen:
                i0 = seen[key]
                return Lasso(tuple(out_vals[:i0]), tuple(out_vals[i0:])), tuple(out_idx)
            seen[key] = len(out_vals)
        out_vals.append(current)
        out_idx.append(k)
