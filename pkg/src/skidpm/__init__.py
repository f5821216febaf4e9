"""Learning-augmented ski rental and multi-state power management."""
from .distribution import BuyDistribution, CostPair, RhoMu, bounded_variant, cdf_eval, expected_cost, sample_buy_time, scale
from .dpm import IBM_HDD, TWO_STATE, PeriodPolicy, PowerStateSystem, build_policy, offline_opt, prune_states, run_period
from .skirental import RHO_MAX, build_cdf, mu_of_rho, mu_tau, rho_tilde, solve_T, t_of_tau_mu

__all__ = [
    "BuyDistribution", "CostPair", "RhoMu", "bounded_variant", "cdf_eval", "expected_cost",
    "sample_buy_time", "scale", "IBM_HDD", "TWO_STATE", "PeriodPolicy", "PowerStateSystem",
    "build_policy", "offline_opt", "prune_states", "run_period", "RHO_MAX", "build_cdf",
    "mu_of_rho", "mu_tau", "rho_tilde", "solve_T", "t_of_tau_mu",
]
