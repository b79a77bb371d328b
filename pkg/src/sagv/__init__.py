"""sagv: compositional verification of strategic abilities in stochastic MAS."""

from .core import (
    Assumption,
    Dist,
    Domain,
    Lasso,
    Module,
    ProbModule,
    ProbTransition,
    Repertoire,
    Trace,
    Transition,
    Valuation,
    admitted_word,
    compatible,
    curtail,
    derived_word,
    merge,
    validate,
)
from .compose import (
    MAS,
    agent,
    compile_mdp,
    compose2,
    compose_all,
    compose_with_assumption,
    neighborhood,
)
from .logic import classify, parse_formula, pretty
from .mcprob import ICGS, MarkovChain, MDP, check_patl, induce_mc, mc_probability, mdp_probability
from .mcqual import check_coop, check_coop_under_assumption, check_only, check_only_fixpoint, synth
from .agv import AGConfig, UnitConfig, Verdict, check_guarantee, verify_nested
from .oracle import brute_force_atl, brute_force_patl, monte_carlo

__version__ = "0.1.0"
