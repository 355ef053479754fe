"""Built-in experiment presets and their catalog."""
from __future__ import annotations

import copy


def _binary(p0, p2):
    return {"lifetimes": [1.0], "offspring": [[[[0], p0], [[2], p2]]], "immigrant": [[[1], 1.0]]}


SUBCRITICAL = _binary(0.75, 0.25)  # rho = -0.5
CRITICAL = _binary(0.5, 0.5)
SUPERCRITICAL = _binary(0.25, 0.75)  # rho = 0.5
GROWTH_03 = _binary(0.35, 0.65)  # rho = 0.3

_PRESETS = {
    "subcritical_moments": {
        "description": "Mean and covariance of Z(t) for a subcritical model with Poisson immigration.",
        "checks": "moments of the process under determinantal immigration",
        "operation": "moments.moment_report",
        "doc": {
            "seed": 1,
            "model": SUBCRITICAL,
            "immigration": {"family": "poisson", "rate": 1.0},
            "experiment": {"kind": "moments", "t_grid": [2.0, 4.0, 6.0]},
        },
    },
    "ginibre_moments": {
        "description": "Same subcritical model with Ginibre immigration (variance reduction by repulsion).",
        "checks": "moments of the process under determinantal immigration",
        "operation": "moments.moment_report",
        "doc": {
            "seed": 1,
            "model": SUBCRITICAL,
            "immigration": {"family": "dpp", "kernel": "ginibre", "scale": 1.0},
            "experiment": {"kind": "moments", "t_grid": [2.0, 4.0, 6.0]},
        },
    },
    "supercritical_rescaled": {
        "description": "Laplace transform of Z(t) e^(-rho t) stabilizes and matches the limit functional.",
        "checks": "distributional limit of the rescaled supercritical process",
        "operation": "experiments.experiment_rescaled_limit",
        "doc": {
            "seed": 7,
            "model": SUPERCRITICAL,
            "immigration": {"family": "poisson", "rate": 1.0},
            "experiment": {"kind": "rescaled_limit", "t_grid": [9.0, 12.0], "s_grid": [1.0],
                           "n_rep": 4000},
        },
    },
    "l2_delta_dominant": {
        "description": "Immigration growing faster than the clans: Z(t) e^(-delta t) converges in L2.",
        "checks": "L2 limit when delta > max(rho, 0)",
        "operation": "experiments.experiment_l2_rates",
        "doc": {
            "seed": 11,
            "model": SUBCRITICAL,
            "immigration": {"family": "dpp", "kernel": "identity", "rate_inf": 1.0, "delta": 0.2},
            "experiment": {"kind": "l2_rates", "regime": "delta_dominant",
                           "t_grid": [5.0, 10.0, 15.0, 20.0, 25.0], "n_rep": 2000},
        },
    },
    "l2_delta_equals_rho": {
        "description": "Immigration growth matching a supercritical rho: Z(t)/(t e^(rho t)) converges in L2.",
        "checks": "L2 limit when delta = rho > 0",
        "operation": "experiments.experiment_l2_rates",
        "doc": {
            "seed": 13,
            "model": GROWTH_03,
            "immigration": {"family": "dpp", "kernel": "identity", "rate_inf": 1.0, "delta": 0.3},
            "experiment": {"kind": "l2_rates", "regime": "delta_equals_rho_super",
                           "t_grid": [5.0, 10.0, 15.0, 20.0], "n_rep": 2000},
        },
    },
    "critical_gamma": {
        "description": "Critical binary splitting with Poisson immigration: Z(t)/t is approximately Gamma.",
        "checks": "Gamma limit of the critical process",
        "operation": "experiments.experiment_gamma_limit",
        "doc": {
            "seed": 42,
            "model": CRITICAL,
            "immigration": {"family": "poisson", "rate": 1.0},
            "experiment": {"kind": "gamma_limit", "t": 300.0, "n_rep": 2000},
        },
    },
    "subcritical_stationary": {
        "description": "Subcritical process with stationary immigration settles into a limit law.",
        "checks": "stationary limit of the subcritical process",
        "operation": "experiments.experiment_subcritical_limit",
        "doc": {
            "seed": 5,
            "model": SUBCRITICAL,
            "immigration": {"family": "poisson", "rate": 1.0},
            "experiment": {"kind": "subcritical_limit", "t_pair": [40.0, 80.0],
                           "s_grid": [0.25, 0.5, 1.0, 2.0], "n_rep": 5000},
        },
    },
    "convolution_exp": {
        "description": "Convolution of e^(0.3t) with e^(-0.2t) against its asymptotic predictor.",
        "checks": "convolution asymptotics",
        "operation": "moments.conv_asymptote",
        "doc": {"seed": 0, "experiment": {"kind": "conv_asymptote", "case": "exp_decay",
                                          "t_grid": [10.0, 20.0, 40.0]}},
    },
    "convolution_linear_exp": {
        "description": "Convolution of e^(0.3t) with t e^(-0.1t) against its asymptotic predictor.",
        "checks": "convolution asymptotics",
        "operation": "moments.conv_asymptote",
        "doc": {"seed": 0, "experiment": {"kind": "conv_asymptote", "case": "linear_exp",
                                          "t_grid": [20.0, 40.0, 60.0]}},
    },
}


def list_experiments():
    """Catalog entries ``{name, description, checks, operation, defaults}`` sorted by name."""
    return [
        {
            "name": name,
            "description": entry["description"],
            "checks": entry["checks"],
            "operation": entry["operation"],
            "defaults": copy.deepcopy(entry["doc"]),
        }
        for name, entry in sorted(_PRESETS.items())
    ]


def preset_document(name):
    if name not in _PRESETS:
        raise KeyError(name)
    return copy.deepcopy(_PRESETS[name]["doc"])
