"""End-to-end verification suite behind the ``verify`` subcommand.

Six independent checks at desk scale: achievability of the closed form,
the optimizer gap, agreement of adjacent capacity branches at breakpoints,
relu large-bias convergence, the entropy-ordering inequality, and bijective
invariance.  Everything derives from one seed, so reports are byte-stable.
"""

from __future__ import annotations

import numpy as np

from .mc import (
    MCConfig,
    bijective_channel,
    estimate_mi,
    linear_channel,
    relu_channel,
    verify_entropy_ordering,
    verify_relu_theorem,
)
from .mmi import ChannelParams, mmi_fc, mmi_formula
from .oracle import (
    OptimizerConfig,
    WeightMatrix,
    build_optimal_weights,
    exact_linear_mi,
    maximize_mi,
)
from .spectrum import CovarianceMatrix, decompose_covariance, model_spectrum
from .waterfill import breakpoints


def _random_covariance(rng: np.random.Generator, dim: int,
                       log_range=(-1.5, 1.5)) -> CovarianceMatrix:
    eigvals = np.sort(np.exp(rng.uniform(*log_range, size=dim)))[::-1]
    basis, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    return CovarianceMatrix(basis @ np.diag(eigvals) @ basis.T)


def _check_achievability(seed: int, mmi_offset: float, instances: int = 40) -> dict:
    """Constructed optimal weights must reproduce the closed form to 1e-9."""
    rng = np.random.default_rng([seed, 1])
    worst = 0.0
    noise_vars = (0.1, 1.0, 10.0)
    for i in range(instances):
        input_dim = int(rng.integers(1, 5))
        hidden_dim = int(rng.integers(1, 5))
        noise_var = noise_vars[i % 3]
        cov = _random_covariance(rng, input_dim)
        decomposition = decompose_covariance(cov)
        spectrum = decomposition.spectrum
        n_tilde = min(input_dim, hidden_dim)
        bp = breakpoints(spectrum, noise_var, n_tilde).values
        budgets = list(bp) + list(0.5 * (bp[:-1] + bp[1:])) + [bp[-1] * 1.5 + 1.0]
        for budget in budgets:
            closed = mmi_fc(ChannelParams(noise_var, budget), spectrum,
                            input_dim, hidden_dim).nats + mmi_offset
            achieved = exact_linear_mi(
                build_optimal_weights(budget, decomposition, noise_var, hidden_dim),
                cov, noise_var)
            worst = max(worst, abs(achieved - closed))
    return {"name": "achievability", "instances": instances,
            "max_abs_gap": worst, "tolerance": 1e-9, "pass": bool(worst <= 1e-9)}


def _check_optimizer(seed: int, instances: int = 3) -> dict:
    """Projected gradient ascent must land within 1e-4 nats of the closed form."""
    rng = np.random.default_rng([seed, 2])
    worst = 0.0
    sound = True
    for i in range(instances):
        cov = _random_covariance(rng, 3)
        spectrum = decompose_covariance(cov).spectrum
        budget = float(rng.uniform(0.5, 4.0))
        closed = mmi_fc(ChannelParams(1.0, budget), spectrum, 3, 2).nats
        result = maximize_mi(budget, cov, 1.0, 2,
                             OptimizerConfig(seed=seed * 31 + i, restarts=3))
        worst = max(worst, closed - result.nats)
        sound = sound and result.nats <= closed + 1e-9
    return {"name": "optimizer-gap", "instances": instances,
            "max_gap": worst, "tolerance": 1e-4, "sound": sound,
            "pass": bool(worst <= 1e-4 and sound)}


def _check_breakpoint_agreement(seed: int, instances: int = 100) -> dict:
    """Adjacent capacity branches must agree at every breakpoint."""
    rng = np.random.default_rng([seed, 3])
    worst = 0.0
    for _ in range(instances):
        dim = int(rng.integers(2, 9))
        spectrum = model_spectrum(
            "explicit", values=np.exp(rng.uniform(-3, 3, size=dim)))
        noise_var = float(rng.choice([0.1, 1.0, 10.0]))
        bp = breakpoints(spectrum, noise_var, dim).values
        for k in range(2, dim + 1):
            budget = float(bp[k - 1])
            low = mmi_formula(spectrum, noise_var, budget, k - 1)
            high = mmi_formula(spectrum, noise_var, budget, k)
            worst = max(worst, abs(high - low))
    return {"name": "breakpoint-agreement", "instances": instances,
            "max_abs_gap": worst, "tolerance": 1e-10, "pass": bool(worst <= 1e-10)}


def _check_relu_large_bias(seed: int) -> dict:
    """Relu MI approaches the linear closed form as the bias grows."""
    cov = CovarianceMatrix(np.diag(model_spectrum("exp_decay", 3, rate=0.5).values))
    report = verify_relu_theorem(
        budget=2.0, cov=cov, noise_var=1.0, hidden_dim=2,
        bias_scales=[2.0, 4.0, 8.0],
        mc=MCConfig(n_outer=2000, n_inner=2000, seed=seed * 7 + 1))
    return {"name": "relu-large-bias", "report": report, "pass": report["pass"]}


def _check_entropy_ordering(seed: int, instances: int = 8) -> dict:
    """Relu output entropy never exceeds the linear channel's."""
    rng = np.random.default_rng([seed, 4])
    reports = []
    for i in range(instances):
        cov = _random_covariance(rng, 3)
        weights = WeightMatrix(rng.standard_normal((2, 3)))
        bias = rng.uniform(-2.0, 2.0, size=2)
        model = relu_channel(weights, bias, 1.0)
        report = verify_entropy_ordering(
            model, cov, MCConfig(2000, 2000, seed * 13 + i))
        reports.append({
            "difference": report["rows"][0]["difference"],
            "se_difference": report["rows"][0]["se_difference"],
            "pass": report["pass"],
        })
    return {"name": "entropy-ordering", "instances": instances,
            "rows": reports, "pass": all(r["pass"] for r in reports)}


def _check_bijective_invariance(seed: int, instances: int = 3) -> dict:
    """Tanh post-composition leaves the MI estimate unchanged within noise."""
    rng = np.random.default_rng([seed, 5])
    rows = []
    for i in range(instances):
        cov = _random_covariance(rng, 3)
        weights = WeightMatrix(rng.standard_normal((2, 3)))
        bias = rng.uniform(-1.0, 1.0, size=2)
        linear = estimate_mi(
            linear_channel(weights, bias, 1.0), cov, MCConfig(2000, 2000, seed * 17 + i))
        bijective = estimate_mi(
            bijective_channel(weights, bias, 1.0), cov,
            MCConfig(2000, 2000, seed * 17 + 1000 + i))
        gap = abs(linear.value - bijective.value)
        spread = 3.0 * float(np.hypot(linear.std_error, bijective.std_error))
        rows.append({"mi_linear": linear.value, "mi_bijective": bijective.value,
                     "gap": gap, "allowed": spread, "pass": bool(gap <= spread)})
    return {"name": "bijective-invariance", "instances": instances,
            "rows": rows, "pass": all(r["pass"] for r in rows)}


def run_verification(seed: int = 0, mmi_offset: float = 0.0) -> dict:
    """Run every check and aggregate into one report document."""
    checks = [
        _check_achievability(seed, mmi_offset),
        _check_optimizer(seed),
        _check_breakpoint_agreement(seed),
        _check_relu_large_bias(seed),
        _check_entropy_ordering(seed),
        _check_bijective_invariance(seed),
    ]
    return {"seed": seed, "checks": checks,
            "pass": all(check["pass"] for check in checks)}
