"""Risk measures, rearrangement-invariant norms and risk sharing on finite probability spaces."""
from .errors import (
    ContractViolation,
    EvaluationError,
    InstanceTooLarge,
    InvalidArgument,
    NonConvergence,
    PreconditionError,
    RiskConvError,
    ScenarioError,
    UnboundedBelow,
    UnsupportedOperation,
)
from .probspace import (
    Distribution,
    FiniteSpace,
    Partition,
    RandomVariable,
    cond_expect,
    distribution,
    neg_part,
    pos_part,
    quantile,
    quantile_partition,
    read_scenarios,
    rv,
    same_distribution,
    uniform_space,
)
from .norms import (
    LpNorm,
    OrliczFunction,
    OrliczNorm,
    RiNorm,
    exp_orlicz,
    fundamental_function,
    property_star_probe,
    verify_contraction,
)
from .measures import (
    AcceptanceSet,
    Budget,
    RiskMeasure,
    check_flags,
    entropic,
    es_alpha,
    from_acceptance,
    neg_expectation,
    surplus_transform,
    var_alpha,
)
from .approx import equidistributed_average, localization_limit, refine_scheme
from .infconv import (
    certify_exactness,
    infconv_bruteforce,
    infconv_law_invariant,
    infconv_surplus,
    sum_acceptance,
)
from .fatou import SequenceFamily, gallery_bigexamp1, gallery_bigexamp2, probe

__all__ = [name for name in dir() if not name.startswith("_")]

__version__ = "0.1.0"
