"""Probabilistic error bounds for the fitted GP.

Local variance bounds from data density, Lipschitz constants of the
posterior, confidence parameters for a uniform error bound on compact
sets, and the resulting steady-state regulation-error certificate.

All distance-based quantities treat the anisotropic kernel through the
conservative isotropic minorant obtained with the smallest length scale,
so every bound stays valid for points within the stated radius.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .gp import GpPosteriorModel, KernelHyperparams, SampleSet, kernel_gradient, posterior_predict

__all__ = [
    "BoundReport",
    "kernel_lipschitz_constant",
    "local_variance_bound",
    "posterior_lipschitz_constants",
    "confidence_parameters",
    "uniform_error_bound",
    "covering_radius",
    "regulation_error_bound",
]


def _kappa_iso(hyper: KernelHyperparams, rho: float) -> float:
    """Lower envelope of the kernel over pairs at Euclidean distance rho."""
    lmin = float(np.min(hyper.length_scales))
    return hyper.amplitude * math.exp(-(rho * rho) / (2.0 * lmin * lmin))


def kernel_lipschitz_constant(
    hyper: KernelHyperparams,
    domain: tuple[np.ndarray, np.ndarray] | None = None,
    grid: int = 4000,
    seed: int = 0,
) -> float:
    """Lipschitz constant of the kernel in its first argument.

    The analytic maximum of ||grad k|| for the squared-exponential kernel
    is amplitude / (l_min * sqrt(e)).  When a box ``domain = (lo, hi)`` is
    given, the constant is instead estimated by maximizing the gradient
    norm over seeded random pairs inside the box, which is never larger
    than the analytic value (useful as a cross-check).
    """
    if domain is None:
        lmin = float(np.min(hyper.length_scales))
        return hyper.amplitude / (lmin * math.sqrt(math.e))
    lo = np.asarray(domain[0], dtype=float)
    hi = np.asarray(domain[1], dtype=float)
    if lo.shape != hi.shape or np.any(hi < lo):
        raise ValueError("domain must be a box (lo, hi) with hi >= lo")
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(grid):
        a = rng.uniform(lo, hi)
        b = rng.uniform(lo, hi)
        g = float(np.linalg.norm(kernel_gradient(a, b, hyper)))
        if g > best:
            best = g
    return best


def local_variance_bound(model: GpPosteriorModel, x, rho: float) -> float:
    """Upper bound on the posterior variance at x from samples within rho.

    With m training inputs inside the Euclidean ball B_rho(x) the posterior
    variance cannot exceed

        k(0) - k(rho)^2 / (k(0) + sigma_n^2 / m),

    where k(rho) is the isotropic kernel minorant.  An empty ball gives the
    vacuous bound k(0).
    """
    if rho < 0.0:
        raise ValueError("rho must be nonnegative")
    hyper = model.hyper
    x = np.asarray(x, dtype=float).reshape(-1)
    k0 = hyper.amplitude
    if model.count == 0:
        return k0
    dist = np.linalg.norm(model.inputs - x, axis=1)
    m = int(np.sum(dist <= rho))
    if m == 0:
        return k0
    krho = _kappa_iso(hyper, rho)
    return k0 - krho * krho / (k0 + hyper.noise_variance / m)


def posterior_lipschitz_constants(
    model: GpPosteriorModel,
    rho: float,
    domain: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[float, float]:
    """Lipschitz constants of the posterior mean and variance.

    L_mean = L_k sqrt(N) ||weights||, and
    L_var  = 2 rho L_k (1 + N ||(K + sigma_n^2 I)^-1|| max k),
    with the spectral norm taken from the stored factorization and max k
    equal to the amplitude.  Requires a nonempty model.
    """
    if model.count == 0:
        raise ValueError("Lipschitz constants need a fitted, nonempty model")
    if rho < 0.0:
        raise ValueError("rho must be nonnegative")
    hyper = model.hyper
    lk = kernel_lipschitz_constant(hyper, domain)
    n = model.count
    wnorm = float(np.linalg.norm(model.weights))
    smin = float(np.linalg.svd(model.chol, compute_uv=False)[-1])
    inv_norm = 1.0 / (smin * smin)
    l_mean = lk * math.sqrt(n) * wnorm
    l_var = 2.0 * rho * lk * (1.0 + n * inv_norm * hyper.amplitude)
    return l_mean, l_var


def confidence_parameters(
    rho: float,
    delta: float,
    covering_count: int,
    l_f: float,
    l_mean: float,
    l_var: float,
) -> tuple[float, float]:
    """Confidence pair (beta, alpha) for the uniform error bound.

    beta = 2 log(covering_count / delta) and
    alpha = (L_f + L_mean) rho + sqrt(beta L_var rho).
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if covering_count < 1:
        raise ValueError("covering_count must be at least 1")
    if rho < 0.0:
        raise ValueError("rho must be nonnegative")
    if min(l_f, l_mean, l_var) < 0.0:
        raise ValueError("Lipschitz constants must be nonnegative")
    beta = 2.0 * math.log(covering_count / delta)
    alpha = (l_f + l_mean) * rho + math.sqrt(beta * l_var * rho)
    return beta, alpha


@dataclass(frozen=True)
class BoundReport:
    """Frozen certificate inputs; beta and alpha are derived on build."""

    rho: float
    delta: float
    covering_count: int
    l_f: float
    l_mean: float
    l_var: float
    beta: float
    alpha: float
    noise_floor: float

    @classmethod
    def build(
        cls,
        rho: float,
        delta: float,
        covering_count: int,
        l_f: float,
        l_mean: float,
        l_var: float,
        hyper: KernelHyperparams,
    ) -> "BoundReport":
        beta, alpha = confidence_parameters(rho, delta, covering_count, l_f, l_mean, l_var)
        floor = math.sqrt(beta) * hyper.noise_variance / (hyper.amplitude + hyper.noise_variance)
        return cls(rho, delta, covering_count, l_f, l_mean, l_var, beta, alpha, floor)

    def as_text(self, extra: dict | None = None) -> str:
        """Flat key=value block, one entry per line."""
        items = {
            "rho_star": self.rho,
            "delta": self.delta,
            "covering_count": self.covering_count,
            "beta": self.beta,
            "alpha": self.alpha,
            "L_f": self.l_f,
            "L_mean": self.l_mean,
            "L_var": self.l_var,
            "noise_floor": self.noise_floor,
        }
        if extra:
            items.update(extra)
        return "\n".join(f"{k}={_fmt(v)}" for k, v in items.items()) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".9g")
    return str(v)


def uniform_error_bound(
    model: GpPosteriorModel, x, report: BoundReport, use_std: bool = False
) -> float:
    """Pointwise uniform bound sqrt(beta) * var(x) + alpha.

    The variance enters directly; pass ``use_std=True`` to scale by the
    standard deviation instead (tighter near zero variance, but not the
    form the certificate is stated in).
    """
    _, var = posterior_predict(model, x)
    term = math.sqrt(var) if use_std else var
    return math.sqrt(report.beta) * term + report.alpha


def covering_radius(dataset, reference_points) -> float:
    """Smallest rho such that every reference point has a sample within rho.

    Computed as max over reference points of the min distance to the
    dataset inputs.  An empty dataset covers nothing: returns +inf with a
    warning.
    """
    if isinstance(dataset, SampleSet):
        X = dataset.inputs()
    else:
        X = np.atleast_2d(np.asarray(dataset, dtype=float))
    R = np.atleast_2d(np.asarray(reference_points, dtype=float))
    if R.shape[0] == 0:
        raise ValueError("reference_points must be nonempty")
    if X.shape[0] == 0:
        warnings.warn("empty dataset has no covering radius", RuntimeWarning)
        return math.inf
    return float(cdist(R, X).min(axis=1).max())


def regulation_error_bound(
    hyper: KernelHyperparams, rho_star: float, report: BoundReport
) -> tuple[float, float]:
    """Steady-state regulation-error certificate and its noise floor.

    bound = sqrt(beta) [k(0) - k(rho*)^2 / (k(0) + sigma_n^2)] + alpha(rho*)
    with alpha taken from ``report`` (built at the same rho*).  The floor
    sqrt(beta) sigma_n^2 / (k(0) + sigma_n^2) is what remains as rho* -> 0;
    neither includes the process-dependent offset of the closed loop, so
    these certify the learning error, not the full output error.
    """
    if rho_star < 0.0:
        raise ValueError("rho_star must be nonnegative")
    if not math.isclose(report.rho, rho_star, rel_tol=1e-12, abs_tol=1e-12):
        raise ValueError("report must be built at the same rho_star")
    k0 = hyper.amplitude
    krho = _kappa_iso(hyper, rho_star)
    bracket = k0 - krho * krho / (k0 + hyper.noise_variance)
    bound = math.sqrt(report.beta) * bracket + report.alpha
    return bound, report.noise_floor
