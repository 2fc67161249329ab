"""Gaussian-process regression core.

Squared-exponential kernel, exact posterior fitting on a FIFO-bounded
sample buffer, predictions with gradients, marginal likelihood and a
deterministic hyperparameter search.  Everything is free of global state;
fitted models are immutable snapshots and safe to share.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist

from .errors import NumericalError

__all__ = [
    "KernelHyperparams",
    "SampleSet",
    "GpPosteriorModel",
    "kernel_eval",
    "kernel_gradient",
    "fit",
    "posterior_predict",
    "posterior_mean_gradient",
    "log_marginal_likelihood",
    "optimize_hyperparams",
    "rkhs_norm",
]

_LOG_2PI = float(np.log(2.0 * np.pi))

# Escalating diagonal jitter tried when (K + sigma_n^2 I) fails to factor,
# as multiples of the amplitude: 1e-10, then x10 per retry, three retries.
_JITTER_START = 1e-10
_JITTER_RETRIES = 3


@dataclass(frozen=True)
class KernelHyperparams:
    """Squared-exponential kernel parameters.

    ``amplitude`` is the prior variance (output units squared),
    ``length_scales`` holds one positive scale per input dimension and
    ``noise_variance`` the assumed observation-noise power.  The kernel is

        k(x, x') = amplitude * exp(-sum_i (x_i - x'_i)^2 / (2 l_i^2))

    i.e. the metric matrix diag(2 l_i^2) is implied, never stored.
    """

    amplitude: float
    length_scales: np.ndarray
    noise_variance: float

    def __post_init__(self):
        ls = np.array(self.length_scales, dtype=float, copy=True).reshape(-1)
        if not (np.isfinite(self.amplitude) and self.amplitude > 0.0):
            raise ValueError("amplitude must be a positive real")
        if not (np.isfinite(self.noise_variance) and self.noise_variance > 0.0):
            raise ValueError("noise_variance must be a positive real")
        if ls.size == 0 or not np.all(np.isfinite(ls) & (ls > 0.0)):
            raise ValueError("length_scales must be positive reals")
        ls.setflags(write=False)
        object.__setattr__(self, "amplitude", float(self.amplitude))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))
        object.__setattr__(self, "length_scales", ls)

    @property
    def input_dim(self) -> int:
        return self.length_scales.size


class SampleSet:
    """FIFO-bounded training set of (input, output) pairs.

    Inserting past ``capacity`` evicts the oldest pair, matching the
    shift-register update applied by the sampling regulator at jumps.
    """

    def __init__(self, capacity: int, input_dim: int, output_dim: int = 1):
        capacity = int(capacity)
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        if input_dim < 1 or output_dim < 1:
            raise ValueError("input_dim and output_dim must be at least 1")
        self.capacity = capacity
        self.input_dim = int(input_dim)
        self.output_dim = int(output_dim)
        self._inputs: deque = deque(maxlen=capacity)
        self._outputs: deque = deque(maxlen=capacity)

    @property
    def count(self) -> int:
        return len(self._inputs)

    def __len__(self) -> int:
        return len(self._inputs)

    def insert(self, x, u) -> None:
        """Append a pair, evicting the oldest one when full."""
        x = np.asarray(x, dtype=float).reshape(-1)
        u = np.asarray(u, dtype=float).reshape(-1)
        if x.size != self.input_dim:
            raise ValueError(f"input has size {x.size}, expected {self.input_dim}")
        if u.size != self.output_dim:
            raise ValueError(f"output has size {u.size}, expected {self.output_dim}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
            raise ValueError("samples must be finite")
        self._inputs.append(x.copy())
        self._outputs.append(u.copy())

    def inputs(self) -> np.ndarray:
        """Stacked inputs, oldest first, shape (count, input_dim)."""
        if not self._inputs:
            return np.empty((0, self.input_dim))
        return np.vstack(self._inputs)

    def outputs(self) -> np.ndarray:
        """Stacked outputs, oldest first, shape (count, output_dim)."""
        if not self._outputs:
            return np.empty((0, self.output_dim))
        return np.vstack(self._outputs)

    def copy(self) -> "SampleSet":
        dup = SampleSet(self.capacity, self.input_dim, self.output_dim)
        dup._inputs.extend(v.copy() for v in self._inputs)
        dup._outputs.extend(v.copy() for v in self._outputs)
        return dup


@dataclass(frozen=True)
class GpPosteriorModel:
    """Immutable posterior snapshot: training data, factorization, weights.

    ``chol`` is the lower Cholesky factor of (K + sigma_n^2 I) including any
    jitter that was needed, ``weights`` solves (K + sigma_n^2 I) w = outputs
    (one column per output channel).
    """

    hyper: KernelHyperparams
    inputs: np.ndarray
    outputs: np.ndarray
    chol: np.ndarray | None
    weights: np.ndarray
    output_1d: bool = True
    jitter: float = 0.0

    @property
    def count(self) -> int:
        return self.inputs.shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights.shape[1]


def _check_input(hyper: KernelHyperparams, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != hyper.input_dim:
        raise ValueError(
            f"input has dimension {x.size}, kernel expects {hyper.input_dim}"
        )
    return x


def kernel_eval(x, x2, hyper: KernelHyperparams) -> float:
    """Squared-exponential kernel value k(x, x2)."""
    x = _check_input(hyper, x)
    x2 = _check_input(hyper, x2)
    d = x - x2
    z = np.sum(d * d / (2.0 * hyper.length_scales**2))
    return float(hyper.amplitude * np.exp(-z))


def kernel_gradient(x, x2, hyper: KernelHyperparams) -> np.ndarray:
    """Gradient of k(x, x2) with respect to the first argument.

    For the squared-exponential kernel this is -(x - x2)/l^2 * k(x, x2).
    """
    x = _check_input(hyper, x)
    x2 = _check_input(hyper, x2)
    d = x - x2
    k = hyper.amplitude * np.exp(-np.sum(d * d / (2.0 * hyper.length_scales**2)))
    return -(d / hyper.length_scales**2) * k


def _scaled(hyper: KernelHyperparams, X: np.ndarray) -> np.ndarray:
    return X / (np.sqrt(2.0) * hyper.length_scales)


def _kernel_matrix(hyper: KernelHyperparams, X: np.ndarray) -> np.ndarray:
    S = _scaled(hyper, X)
    return hyper.amplitude * np.exp(-cdist(S, S, "sqeuclidean"))


def _kernel_vector(hyper: KernelHyperparams, X: np.ndarray, x: np.ndarray) -> np.ndarray:
    D = X - x
    z = np.sum(D * D / (2.0 * hyper.length_scales**2), axis=1)
    return hyper.amplitude * np.exp(-z)


def _factorize(K: np.ndarray, hyper: KernelHyperparams) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of K + sigma_n^2 I with escalating jitter."""
    n = K.shape[0]
    A = K + hyper.noise_variance * np.eye(n)
    jitter = 0.0
    for attempt in range(1 + _JITTER_RETRIES):
        try:
            L = cholesky(A + jitter * np.eye(n), lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            jitter = _JITTER_START * hyper.amplitude * (10.0**attempt)
    raise NumericalError(
        "Cholesky factorization failed despite jitter",
        size=n,
        max_jitter=jitter / 10.0,
        diag_range=(float(A.diagonal().min()), float(A.diagonal().max())),
    )


def fit(samples: SampleSet, hyper: KernelHyperparams) -> GpPosteriorModel:
    """Fit the exact GP posterior to the buffer contents.

    An empty buffer yields the prior: zero mean and variance equal to the
    amplitude everywhere, which keeps the initial sampling condition of the
    regulator trivially true.
    """
    if samples.input_dim != hyper.input_dim:
        raise ValueError("buffer input_dim does not match kernel length scales")
    X = samples.inputs()
    Y = samples.outputs()
    output_1d = samples.output_dim == 1
    if samples.count == 0:
        return GpPosteriorModel(
            hyper, X, Y, None, np.empty((0, samples.output_dim)), output_1d
        )
    K = _kernel_matrix(hyper, X)
    L, jitter = _factorize(K, hyper)
    W = cho_solve((L, True), Y, check_finite=False)
    for arr in (X, Y, L, W):
        arr.setflags(write=False)
    return GpPosteriorModel(hyper, X, Y, L, W, output_1d, jitter)


def posterior_predict(model: GpPosteriorModel, x) -> tuple[float | np.ndarray, float]:
    """Posterior mean and variance at a query point.

    The variance is the noiseless posterior variance, clamped to
    [0, k(x, x)] to absorb roundoff.  For single-output models the mean is
    returned as a plain float.
    """
    hyper = model.hyper
    x = _check_input(hyper, x)
    kxx = hyper.amplitude
    if model.count == 0:
        mean = np.zeros(model.weights.shape[1] if model.weights.ndim == 2 else 1)
        return (0.0 if model.output_1d else mean), kxx
    kv = _kernel_vector(hyper, model.inputs, x)
    mean = kv @ model.weights
    v = solve_triangular(model.chol, kv, lower=True, check_finite=False)
    var = float(min(max(kxx - float(v @ v), 0.0), kxx))
    return (float(mean[0]) if model.output_1d else mean), var


def posterior_mean_gradient(model: GpPosteriorModel, x) -> np.ndarray:
    """Gradient of the posterior mean at x.

    Returns shape (input_dim,) for single-output models, otherwise the
    Jacobian with shape (output_dim, input_dim).
    """
    hyper = model.hyper
    x = _check_input(hyper, x)
    if model.count == 0:
        d = hyper.input_dim
        return np.zeros(d) if model.output_1d else np.zeros((model.output_dim, d))
    kv = _kernel_vector(hyper, model.inputs, x)
    G = ((model.inputs - x) / hyper.length_scales**2) * kv[:, None]
    J = G.T @ model.weights
    return J[:, 0] if model.output_1d else J.T


def log_marginal_likelihood(samples: SampleSet, hyper: KernelHyperparams) -> float:
    """Log marginal likelihood of the buffer under the kernel.

    Independent output channels share one factorization; their likelihoods
    add.  Requires at least one sample.
    """
    if samples.count < 1:
        raise ValueError("log marginal likelihood needs at least one sample")
    if samples.input_dim != hyper.input_dim:
        raise ValueError("buffer input_dim does not match kernel length scales")
    X = samples.inputs()
    Y = samples.outputs()
    K = _kernel_matrix(hyper, X)
    L, _ = _factorize(K, hyper)
    alpha = cho_solve((L, True), Y, check_finite=False)
    logdet_half = float(np.sum(np.log(L.diagonal())))
    n = samples.count
    total = 0.0
    for c in range(Y.shape[1]):
        total += -0.5 * float(Y[:, c] @ alpha[:, c]) - logdet_half - 0.5 * n * _LOG_2PI
    return total


def optimize_hyperparams(
    samples: SampleSet,
    init: KernelHyperparams,
    budget: int = 300,
    optimize_amplitude: bool = False,
    optimize_noise: bool = False,
    n_starts: int = 3,
    seed: int = 0,
) -> KernelHyperparams:
    """Maximize the log marginal likelihood over kernel parameters.

    Deterministic multistart coordinate search in log-space.  By default
    only the length scales move; amplitude and noise can be opted in.
    ``budget`` caps the number of likelihood evaluations across all starts;
    the returned parameters are never worse than ``init``.
    """
    if samples.count < 2:
        raise ValueError("hyperparameter search needs at least two samples")
    X = samples.inputs()
    if float(np.max(np.ptp(X, axis=0))) == 0.0:
        warnings.warn(
            "all sample inputs identical; hyperparameter search skipped",
            RuntimeWarning,
        )
        return init

    d = init.input_dim
    tail = []
    if optimize_amplitude:
        tail.append(np.log(init.amplitude))
    if optimize_noise:
        tail.append(np.log(init.noise_variance))
    theta0 = np.concatenate([np.log(init.length_scales), np.asarray(tail)])

    def make(theta: np.ndarray) -> KernelHyperparams:
        ls = np.exp(theta[:d])
        amp = np.exp(theta[d]) if optimize_amplitude else init.amplitude
        noise_idx = d + (1 if optimize_amplitude else 0)
        noise = np.exp(theta[noise_idx]) if optimize_noise else init.noise_variance
        return KernelHyperparams(amp, ls, noise)

    evals = 0

    def objective(theta: np.ndarray) -> float:
        nonlocal evals
        evals += 1
        try:
            return log_marginal_likelihood(samples, make(theta))
        except NumericalError:
            return -np.inf

    best_theta = theta0.copy()
    best_val = objective(theta0)

    rng = np.random.default_rng(seed)
    starts = [theta0]
    for _ in range(max(0, n_starts - 1)):
        starts.append(theta0 + rng.uniform(-1.0, 1.0, size=theta0.size))

    for start in starts:
        if evals >= budget:
            break
        theta = start.copy()
        val = objective(theta) if not np.array_equal(theta, best_theta) else best_val
        step = 0.5
        while step >= 0.02 and evals < budget:
            improved = False
            for i in range(theta.size):
                for sgn in (1.0, -1.0):
                    if evals >= budget:
                        break
                    cand = theta.copy()
                    cand[i] += sgn * step
                    cval = objective(cand)
                    if cval > val:
                        theta, val = cand, cval
                        improved = True
                        break
            if not improved:
                step *= 0.5
        if val > best_val:
            best_val, best_theta = val, theta

    return make(best_theta)


def rkhs_norm(model: GpPosteriorModel) -> float:
    """Squared kernel-space norm of the posterior mean, weights' K weights."""
    if model.count == 0:
        return 0.0
    K = _kernel_matrix(model.hyper, model.inputs)
    return float(np.sum(model.weights * (K @ model.weights)))
