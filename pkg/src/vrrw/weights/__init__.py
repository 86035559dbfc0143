"""Weight sequences, the scale function W and critical-parameter numerics."""

from .cache import OutOfRange, ResourceError, WCache, big_w, big_w_inv, get_cache, shift_u
from .critical import (
    AlphaCEstimate,
    LiminfProbe,
    SeriesBudget,
    SumClassification,
    estimate_alpha_c,
    estimate_I_alpha,
    liminf_ratio_probe,
    tail_sum_lemaa,
    tail_sum_teclem,
)
from .functions import (
    Constant,
    FactorialStep,
    Linear,
    NLogLogN,
    NLogN,
    ParseError,
    Poly,
    Table,
    WeightFunction,
    eval_w,
    format_weight_spec,
    parse_weight_spec,
)
