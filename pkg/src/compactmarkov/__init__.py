"""Recurrence, tightness and hitting-time analysis for countable-state Markov chains."""

from .chain import (
    DEFAULT_POLICY,
    BoundedFunction,
    Kernel,
    MassVector,
    TruncationPolicy,
    apply_operator,
    birth_death,
    evolve_distribution,
    finite,
    funnel,
    lazy,
    load_chain,
    make_chain,
    n_step,
    paper_bd,
    paper_bd_truncated,
    swap,
)
from .classify import ClassificationReport, Verdict, classify, mean_return_time, stationary_measure_finite
from .errors import ChainSpecError, DomainError, MarkovError, PreconditionError
from .passage import closed_form_F00, f_series_from_g, first_return_probs, green_resolvent, green_series
from .series import TruncatedSeries, abelian_limit
from .tightness import TightnessCertificate, compactness_verdict, find_tight_set, n_step_tail_check, tail_sup

__version__ = "0.1.0"
