"""Probabilistic bound layer.

Covers:
  - analytic kernel Lipschitz constant and its sampled-domain cross-check
  - local variance bound: closed-form limit, property fuzz against the
    exact posterior variance, edge cases
  - posterior Lipschitz constants: formula agreement, linearity in rho,
    gradient-norm envelope
  - confidence parameters and the frozen certificate record
  - uniform error bound Monte Carlo on functions drawn from the prior
  - covering radius conventions
  - steady-state certificate and its noise floor
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from gpregul.bounds import (
    BoundReport,
    confidence_parameters,
    covering_radius,
    kernel_lipschitz_constant,
    local_variance_bound,
    posterior_lipschitz_constants,
    regulation_error_bound,
    uniform_error_bound,
)
from gpregul.gp import (
    KernelHyperparams,
    SampleSet,
    fit,
    posterior_mean_gradient,
    posterior_predict,
)

_HYPER = KernelHyperparams(amplitude=1.0, length_scales=[1.0, 1.0], noise_variance=0.01)


def _fitted(rng, n, d, spread=3.0):
    hyper = KernelHyperparams(
        amplitude=float(rng.uniform(0.5, 2.0)),
        length_scales=rng.uniform(0.4, 3.0, size=d),
        noise_variance=float(rng.uniform(1e-3, 0.1)),
    )
    samples = SampleSet(capacity=n, input_dim=d)
    for _ in range(n):
        samples.insert(rng.uniform(-spread, spread, size=d), [float(rng.normal())])
    return fit(samples, hyper), hyper


# ---------------------------------------------------------------------------
# kernel Lipschitz constant


def test_kernel_lipschitz_analytic_value():
    hyper = KernelHyperparams(amplitude=1.0, length_scales=[0.4, 2.0], noise_variance=0.01)
    # max ||grad k|| = amp / (l_min sqrt(e))
    assert kernel_lipschitz_constant(hyper) == pytest.approx(
        1.0 / (0.4 * math.sqrt(math.e)), rel=1e-14
    )


def test_kernel_lipschitz_domain_estimate_below_analytic():
    rng = np.random.default_rng(2)
    for _ in range(5):
        d = int(rng.integers(1, 4))
        hyper = KernelHyperparams(
            amplitude=float(rng.uniform(0.5, 2.0)),
            length_scales=rng.uniform(0.3, 2.0, size=d),
            noise_variance=0.01,
        )
        lo = -np.ones(d)
        hi = np.ones(d)
        est = kernel_lipschitz_constant(hyper, domain=(lo, hi), grid=500, seed=1)
        assert 0.0 < est <= kernel_lipschitz_constant(hyper) + 1e-12


def test_kernel_lipschitz_domain_validation():
    with pytest.raises(ValueError):
        kernel_lipschitz_constant(_HYPER, domain=(np.ones(2), np.zeros(2)))


# ---------------------------------------------------------------------------
# local variance bound


def test_local_variance_bound_single_sample_limit():
    # one sample exactly at the query, rho -> 0: bound tends to
    # noise/(amp+noise) which is 0.01/1.01 here
    samples = SampleSet(capacity=4, input_dim=2)
    samples.insert([0.0, 0.0], [1.0])
    model = fit(samples, _HYPER)
    bound = local_variance_bound(model, [0.0, 0.0], 0.0)
    assert bound == pytest.approx(0.00990099009900991, rel=1e-12)
    # the exact posterior variance at the sample agrees with the limit here
    _, var = posterior_predict(model, [0.0, 0.0])
    assert var <= bound + 1e-12


def test_local_variance_bound_edge_cases():
    model, hyper = _fitted(np.random.default_rng(3), 10, 2)
    with pytest.raises(ValueError):
        local_variance_bound(model, [0.0, 0.0], -0.1)
    # queries with an empty ball give the vacuous prior bound
    assert local_variance_bound(model, [50.0, 50.0], 0.5) == hyper.amplitude
    empty = fit(SampleSet(capacity=3, input_dim=2), _HYPER)
    assert local_variance_bound(empty, [0.0, 0.0], 1.0) == _HYPER.amplitude


def test_local_variance_bound_tightens_with_occupancy():
    # the bound is decreasing in the in-ball count m
    hyper = _HYPER
    samples = SampleSet(capacity=8, input_dim=2)
    samples.insert([0.05, 0.0], [0.3])
    model1 = fit(samples, hyper)
    b1 = local_variance_bound(model1, [0.0, 0.0], 0.2)
    for _ in range(4):
        samples.insert([0.0, 0.05], [0.1])
    model5 = fit(samples, hyper)
    b5 = local_variance_bound(model5, [0.0, 0.0], 0.2)
    assert b5 < b1 < hyper.amplitude


def test_local_variance_bound_never_violated():
    # seeded fuzz over (dataset, query, rho) triples; the acceptance suite
    # runs the full-size version of this sweep
    rng = np.random.default_rng(12)
    triples = 0
    for _ in range(30):
        d = int(rng.integers(1, 5))
        n = int(rng.integers(1, 40))
        model, hyper = _fitted(rng, n, d)
        for _ in range(20):
            x = rng.uniform(-3.5, 3.5, size=d)
            rho = float(rng.uniform(0.0, 4.0))
            bound = local_variance_bound(model, x, rho)
            _, var = posterior_predict(model, x)
            assert var <= bound + 1e-12
            triples += 1
    assert triples == 600


# ---------------------------------------------------------------------------
# posterior Lipschitz constants


def test_posterior_lipschitz_formula():
    rng = np.random.default_rng(8)
    model, hyper = _fitted(rng, 15, 2)
    rho = 0.7
    l_mean, l_var = posterior_lipschitz_constants(model, rho)
    lk = kernel_lipschitz_constant(hyper)
    n = model.count
    wnorm = float(np.linalg.norm(model.weights))
    smin = float(np.linalg.svd(model.chol, compute_uv=False)[-1])
    assert l_mean == pytest.approx(lk * math.sqrt(n) * wnorm, rel=1e-12)
    assert l_var == pytest.approx(
        2.0 * rho * lk * (1.0 + n * hyper.amplitude / smin**2), rel=1e-12
    )


def test_posterior_lipschitz_linear_in_rho():
    model, _ = _fitted(np.random.default_rng(21), 12, 3)
    _, lv1 = posterior_lipschitz_constants(model, 0.4)
    _, lv2 = posterior_lipschitz_constants(model, 0.8)
    assert lv2 == pytest.approx(2.0 * lv1, rel=1e-14)


def test_posterior_lipschitz_requires_data():
    empty = fit(SampleSet(capacity=3, input_dim=2), _HYPER)
    with pytest.raises(ValueError):
        posterior_lipschitz_constants(empty, 0.5)
    model, _ = _fitted(np.random.default_rng(1), 5, 2)
    with pytest.raises(ValueError):
        posterior_lipschitz_constants(model, -1.0)


def test_mean_gradient_norm_within_lipschitz_envelope():
    rng = np.random.default_rng(33)
    model, _ = _fitted(rng, 25, 2)
    l_mean, _ = posterior_lipschitz_constants(model, 1.0)
    for _ in range(100):
        x = rng.uniform(-4.0, 4.0, size=2)
        g = float(np.linalg.norm(posterior_mean_gradient(model, x)))
        assert g <= l_mean + 1e-9


# ---------------------------------------------------------------------------
# confidence parameters and report


def test_confidence_parameters_formula():
    beta, alpha = confidence_parameters(
        rho=0.5, delta=0.01, covering_count=200, l_f=2.0, l_mean=3.0, l_var=4.0
    )
    assert beta == pytest.approx(19.806975105072254, rel=1e-14)
    assert alpha == pytest.approx((2.0 + 3.0) * 0.5 + math.sqrt(beta * 4.0 * 0.5), rel=1e-14)


def test_confidence_parameters_degenerate_count():
    beta, alpha = confidence_parameters(
        rho=0.0, delta=0.9999999999, covering_count=1, l_f=0.0, l_mean=0.0, l_var=0.0
    )
    assert beta == pytest.approx(0.0, abs=1e-9)
    assert alpha == 0.0


def test_confidence_parameters_validation():
    with pytest.raises(ValueError):
        confidence_parameters(0.5, 0.0, 10, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        confidence_parameters(0.5, 1.0, 10, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        confidence_parameters(0.5, 0.05, 0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        confidence_parameters(-0.5, 0.05, 10, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        confidence_parameters(0.5, 0.05, 10, -1.0, 1.0, 1.0)


def test_bound_report_build_and_text():
    report = BoundReport.build(
        rho=0.5, delta=0.01, covering_count=200, l_f=2.0, l_mean=3.0, l_var=4.0, hyper=_HYPER
    )
    assert report.beta == pytest.approx(19.806975105072254, rel=1e-14)
    assert report.noise_floor == pytest.approx(
        math.sqrt(report.beta) * 0.01 / 1.01, rel=1e-14
    )
    text = report.as_text(extra={"note": "x"})
    assert text.startswith("rho_star=")
    assert "beta=19.806975" in text
    assert "note=x" in text
    assert text.endswith("\n")


def test_noise_floor_matches_reference_point():
    # (amp, noise, delta, N) = (1, 0.01, 0.01, 200) is the pinned
    # reference: floor = sqrt(beta) * 0.01 / 1.01
    report = BoundReport.build(
        rho=0.1, delta=0.01, covering_count=200, l_f=0.0, l_mean=0.0, l_var=0.0, hyper=_HYPER
    )
    assert report.noise_floor == pytest.approx(0.04406438408307049, abs=1e-10)
    assert abs(report.noise_floor - 0.04406) < 1e-5


# ---------------------------------------------------------------------------
# uniform error bound: agreement and Monte Carlo coverage


def test_uniform_error_bound_is_the_printed_formula():
    rng = np.random.default_rng(14)
    model, hyper = _fitted(rng, 10, 2)
    report = BoundReport.build(
        rho=0.3, delta=0.05, covering_count=50, l_f=1.0, l_mean=2.0, l_var=3.0, hyper=hyper
    )
    x = [0.2, -0.4]
    _, var = posterior_predict(model, x)
    assert uniform_error_bound(model, x, report) == pytest.approx(
        math.sqrt(report.beta) * var + report.alpha, rel=1e-14
    )
    assert uniform_error_bound(model, x, report, use_std=True) == pytest.approx(
        math.sqrt(report.beta) * math.sqrt(var) + report.alpha, rel=1e-14
    )


def _prior_draw_trial(seed, grid, K_chol, hyper, n_train, delta):
    """One coverage experiment: draw f ~ prior, fit on a noisy subset,
    return per-grid-point violation flags of the uniform bound."""
    rng = np.random.default_rng(seed)
    f = K_chol @ rng.normal(size=grid.shape[0])
    idx = rng.choice(grid.shape[0], size=n_train, replace=False)
    samples = SampleSet(capacity=n_train, input_dim=1)
    for i in idx:
        y = f[i] + math.sqrt(hyper.noise_variance) * rng.normal()
        samples.insert(grid[i], [y])
    model = fit(samples, hyper)

    rho = covering_radius(samples, grid)
    l_mean, l_var = posterior_lipschitz_constants(model, rho)
    l_f = float(np.max(np.abs(np.diff(f)) / np.diff(grid[:, 0])))
    report = BoundReport.build(
        rho=rho,
        delta=delta,
        covering_count=grid.shape[0],
        l_f=l_f,
        l_mean=l_mean,
        l_var=l_var,
        hyper=hyper,
    )
    flags = []
    for i in range(grid.shape[0]):
        mean, _ = posterior_predict(model, grid[i])
        bound = uniform_error_bound(model, grid[i], report)
        flags.append(abs(f[i] - mean) > bound)
    return np.array(flags)


def test_uniform_bound_monte_carlo_coverage():
    # functions drawn from the prior itself; both the per-function and the
    # per-point violation rates must stay within delta plus slack.  The
    # acceptance suite repeats this at the full 200-trial size.
    hyper = KernelHyperparams(amplitude=1.0, length_scales=[0.6], noise_variance=0.01)
    grid = np.linspace(0.0, 4.0, 120).reshape(-1, 1)
    d2 = (grid - grid.T) ** 2
    K = np.exp(-d2 / (2 * 0.6**2))
    K_chol = np.linalg.cholesky(K + 1e-10 * np.eye(grid.shape[0]))

    delta = 0.05
    trials = 40
    func_viol = 0
    point_viol = 0
    points = 0
    for seed in range(trials):
        flags = _prior_draw_trial(seed, grid, K_chol, hyper, n_train=25, delta=delta)
        func_viol += bool(flags.any())
        point_viol += int(flags.sum())
        points += flags.size
    assert func_viol / trials <= delta + 0.02
    assert point_viol / points <= delta


# ---------------------------------------------------------------------------
# covering radius


def test_covering_radius_small_example():
    samples = SampleSet(capacity=4, input_dim=1)
    samples.insert([0.0], [0.0])
    samples.insert([1.0], [0.0])
    refs = [[0.4], [2.0]]
    assert covering_radius(samples, refs) == pytest.approx(1.0, rel=1e-15)


def test_covering_radius_accepts_raw_arrays():
    X = np.array([[0.0, 0.0], [2.0, 0.0]])
    refs = np.array([[1.0, 0.0]])
    assert covering_radius(X, refs) == pytest.approx(1.0, rel=1e-15)


def test_covering_radius_zero_when_refs_are_samples():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(10, 3))
    assert covering_radius(X, X) == 0.0


def test_covering_radius_empty_cases():
    empty = SampleSet(capacity=3, input_dim=1)
    with pytest.warns(RuntimeWarning):
        assert covering_radius(empty, [[0.0]]) == math.inf
    with pytest.raises(ValueError):
        covering_radius(np.zeros((2, 1)), np.empty((0, 1)))


# ---------------------------------------------------------------------------
# steady-state certificate


def test_regulation_error_bound_formula():
    report = BoundReport.build(
        rho=0.5, delta=0.01, covering_count=200, l_f=2.0, l_mean=3.0, l_var=4.0, hyper=_HYPER
    )
    bound, floor = regulation_error_bound(_HYPER, 0.5, report)
    lmin = float(np.min(_HYPER.length_scales))
    krho = math.exp(-0.25 / (2 * lmin**2))
    bracket = 1.0 - krho**2 / 1.01
    assert bound == pytest.approx(math.sqrt(report.beta) * bracket + report.alpha, rel=1e-13)
    assert floor == report.noise_floor
    assert bound > floor


def test_regulation_error_bound_reaches_floor_at_zero_radius():
    # rho* = 0 kills alpha and the bracket collapses onto the noise floor
    # (amplitude 1 makes the two expressions coincide exactly)
    report = BoundReport.build(
        rho=0.0, delta=0.01, covering_count=200, l_f=2.0, l_mean=3.0, l_var=4.0, hyper=_HYPER
    )
    bound, floor = regulation_error_bound(_HYPER, 0.0, report)
    assert bound == pytest.approx(floor, rel=1e-12)


def test_regulation_error_bound_radius_mismatch():
    report = BoundReport.build(
        rho=0.5, delta=0.01, covering_count=200, l_f=2.0, l_mean=3.0, l_var=4.0, hyper=_HYPER
    )
    with pytest.raises(ValueError):
        regulation_error_bound(_HYPER, 0.6, report)
    with pytest.raises(ValueError):
        regulation_error_bound(_HYPER, -0.1, report)
