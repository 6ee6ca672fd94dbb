"""Mismatched decoding over discrete memoryless channels.

Achievable rates, random-coding error exponents, exact finite-length
random-coding union bounds and their saddlepoint approximations.
"""

__version__ = "0.1.0"

from .dmc_core import ChannelTriple, assumption_report, load_config, triple_from_config, validate
from .exponents import er_cc, er_cost, er_cost_prime, er_iid, exponent_chain
from .finite_bounds import montecarlo_pe, mu_n, rcu_exact, rcus_exact, rcuss_exact
from .rates import gmi, lm_rate, mutual_information
from .saddlepoint import exact_asymptotics_prefactor, normal_approx_rate, rate_for_epsilon, rcus_hat, rcuss_hat
from .tilted import detect_lattice, make_family, rho_hat

__all__ = [
    "ChannelTriple",
    "assumption_report",
    "detect_lattice",
    "er_cc",
    "er_cost",
    "er_cost_prime",
    "er_iid",
    "exact_asymptotics_prefactor",
    "exponent_chain",
    "gmi",
    "lm_rate",
    "load_config",
    "make_family",
    "montecarlo_pe",
    "mu_n",
    "mutual_information",
    "normal_approx_rate",
    "rate_for_epsilon",
    "rcu_exact",
    "rcus_exact",
    "rcus_hat",
    "rcuss_exact",
    "rcuss_hat",
    "rho_hat",
    "triple_from_config",
    "validate",
]
