"""Catalog of similar-order preserving fitness maps."""

from .maps import (
    COMBINATORS,
    FitnessMap,
    GradientMap,
    combine,
    evaluate,
    from_dict,
    from_json,
    grad_complete_symmetric,
    grad_composition,
    grad_gamma_product,
    grad_gauge,
    grad_log_sum_exp,
    grad_separable,
    grad_symmetric_composite,
    identity,
    normalize,
    swap,
)
from .scalar import Constant, Exponential, Power, ScalarField, ScalarFunctionSpec, SumPower, Tabulated
from .special import digamma
from .verify import bound_estimate, gradient_check, verify_sop

__all__ = [
    "COMBINATORS",
    "FitnessMap",
    "GradientMap",
    "combine",
    "evaluate",
    "from_dict",
    "from_json",
    "grad_complete_symmetric",
    "grad_composition",
    "grad_gamma_product",
    "grad_gauge",
    "grad_log_sum_exp",
    "grad_separable",
    "grad_symmetric_composite",
    "identity",
    "normalize",
    "swap",
    "Constant",
    "Exponential",
    "Power",
    "ScalarField",
    "ScalarFunctionSpec",
    "SumPower",
    "Tabulated",
    "digamma",
    "bound_estimate",
    "gradient_check",
    "verify_sop",
]
