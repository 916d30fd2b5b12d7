"""Numerics and Monte Carlo for the Lambda-Wright-Fisher process with selection."""

from .errors import (DivergentIntegral, InvalidConfig, InvalidIntegrand, InvalidMeasure,
                     KingmanUnsupported, LambdaWFError, ZeroMass)
from .measure import (AtomList, Beta, EstimateWithError, GridDensity, LambdaMeasure, Mixture,
                      beta, dirac, integrate_nu, kingman, laplace_exponent, measure_from_dict,
                      measure_to_dict, parse_measure, sample_weighted, total_mass)
from .rates import (RateTable, alpha_star, cdi_classify, check_functionf, check_transience_g,
                    et_bound, generator_apply, lyapunov_f, mu_pardoux, y_law)
from .forward import (ForwardConfig, ForwardPath, estimate_fixation, forward_endpoints,
                      logistic_flow, simulate_forward)
from .dual import (DualConfig, DualPath, absorption_time_stats, next_event, recurrence_probe,
                   simulate_dual)
from .duality import (DualityReport, duality_check, fixation_scan, transience_consistency,
                      uniformized_moment)

__version__ = "0.1.0"

__all__ = [
    "DivergentIntegral", "InvalidConfig", "InvalidIntegrand", "InvalidMeasure",
    "KingmanUnsupported", "LambdaWFError", "ZeroMass", "AtomList", "Beta", "EstimateWithError",
    "GridDensity", "LambdaMeasure", "Mixture", "beta", "dirac", "integrate_nu", "kingman",
    "laplace_exponent", "measure_from_dict", "measure_to_dict", "parse_measure",
    "sample_weighted", "total_mass", "RateTable", "alpha_star", "cdi_classify",
    "check_functionf", "check_transience_g", "et_bound", "generator_apply", "lyapunov_f",
    "mu_pardoux", "y_law", "ForwardConfig", "ForwardPath", "estimate_fixation",
    "forward_endpoints", "logistic_flow", "simulate_forward", "DualConfig", "DualPath",
    "absorption_time_stats", "next_event", "recurrence_probe", "simulate_dual",
    "DualityReport", "duality_check", "fixation_scan", "transience_consistency",
    "uniformized_moment",
]
