"""Split-circuit power flow with Monte Carlo contingency risk studies.

The power-flow core models the network as coupled real/imaginary
sub-circuits with current-mismatch equations, solved by Newton-Raphson with
per-variable voltage limiting and a conductance-relaxation continuation
fallback for hard cases.  On top of it, a reproducible simple-random-
sampling Monte Carlo engine estimates the probabilities of voltage
collapse, angular instability, band violations, and overloads under load
uncertainty, for the base network and for screened N-1/N-2 outages.
"""

__version__ = "0.1.0"

from .circuit import CaseIndex, SplitCircuitState, load_current
from .contingency import (ContingencyResult, ContingencySpec,
                          enumerate_outages, rank_branches, rank_generators,
                          run_contingency_study)
from .matpower import CaseFormatError, parse_matpower, serialize_matpower
from .montecarlo import (CITarget, ConfigError, ProbeSpec, SampleResult,
                         StudyConfig, StudyReport, UncertaintySpec,
                         run_study, sample_loads)
from .network import (Branch, BranchOutage, Bus, BusKind, GeneratorOutage,
                      Generator, GridError, IslandSplitError, Load,
                      NetworkCase, Outage, OutageError, Violation,
                      apply_outage, validate)
from .rng import Mt64Stream, bulk_uniforms, derive_seed, rng_for_sample
from .solver import (Classification, LimitSpec, OperatingClass, PFSolution,
                     SolverOptions, classify, enforce_q_limits, newton_solve,
                     robust_solve, solve_linear, tx_stepping_solve)
from .stats import (BinaryEstimate, ConfInterval, Histogram, ci_binary,
                    ci_boundary_triplet, histogram)

__all__ = [
    "Branch", "BranchOutage", "Bus", "BusKind", "CITarget", "CaseFormatError",
    "CaseIndex", "Classification", "ConfInterval", "ConfigError",
    "ContingencyResult", "ContingencySpec", "BinaryEstimate", "Generator",
    "GeneratorOutage", "GridError", "Histogram", "IslandSplitError",
    "LimitSpec", "Load", "Mt64Stream", "NetworkCase", "OperatingClass",
    "Outage", "OutageError", "PFSolution", "ProbeSpec", "SampleResult",
    "SolverOptions", "SplitCircuitState", "StudyConfig", "StudyReport",
    "UncertaintySpec", "Violation", "apply_outage", "bulk_uniforms",
    "ci_binary", "ci_boundary_triplet", "classify", "derive_seed",
    "enforce_q_limits", "histogram", "load_current", "newton_solve",
    "parse_matpower", "rank_branches", "rank_generators", "rng_for_sample",
    "robust_solve", "run_contingency_study", "run_study", "sample_loads",
    "serialize_matpower", "solve_linear", "tx_stepping_solve", "validate",
]
