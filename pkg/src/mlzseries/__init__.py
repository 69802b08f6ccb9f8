"""Transition probabilities of one-crossing multistate Landau-Zener models.

Closed-form perturbative series through fourth order in the couplings, an
independent numerical propagator, and the tools that cross-check them.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .model import (  # noqa: E402
    LambdaMatrix,
    MlzModel,
    lambda_matrix,
    load_model,
    new_model,
    parse_model_file,
    reorder_descending,
    serialize_model,
)
from .propagator import TransitionMatrix, ResidualScan, probabilities, propagate, residual_scan  # noqa: E402
from .series import (  # noqa: E402
    SeriesCoefficients,
    be_formula,
    evaluate_at,
    lz_exact,
    series_coefficients,
    series_matrix,
)
from .specfun import QTriple, principal_arctan, q_closed_form, q_quadrature, resonant_r  # noqa: E402
