"""Benchmark generative models behind a uniform interface.

Each model provides prior sampling, forward simulation of a dataset at a
design, and exact (log) likelihood evaluation, all vectorised over parameter
draws. ``log_density_matrix`` returns the full cross table
``ll[l, m] = log p(data_l | params_m, design)`` needed by the nested
Monte-Carlo utility estimator.
"""

from __future__ import annotations

import numpy as np
from scipy import stats
from scipy.special import expit, gammaln


class Model:
    """Interface shared by all generative models."""

    param_dim: int

    def sample_params(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Prior draws, shape (size, param_dim)."""
        raise NotImplementedError

    def simulate(self, params: np.ndarray, design: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One dataset per parameter row, shape (size, data_dim)."""
        raise NotImplementedError

    def log_density_matrix(self, data: np.ndarray, params: np.ndarray, design: np.ndarray) -> np.ndarray:
        """Cross log-likelihood table, shape (len(data), len(params))."""
        raise NotImplementedError

    def log_density_paired(self, data: np.ndarray, params: np.ndarray, design: np.ndarray) -> np.ndarray:
        """log p(data_i | params_i, design) row by row, shape (len(data),)."""
        out = np.empty(len(data))
        for i in range(len(data)):
            out[i] = self.log_density_matrix(data[i : i + 1], params[i : i + 1], design)[0, 0]
        return out

    def log_likelihood(self, params: np.ndarray, design: np.ndarray, data: np.ndarray) -> float:
        params = np.atleast_2d(np.asarray(params, dtype=float))
        data = np.atleast_2d(np.asarray(data))
        return float(self.log_density_matrix(data, params, design)[0, 0])


def death_transition_prob(N: int, i: int, j: int, b1: float, dt: float) -> float:
    """Probability the pure-death (infection) chain moves from count i to j in dt.

    Individuals transition independently at rate b1, so the increment over dt
    is Binomial(N - i, 1 - exp(-b1 * dt)).
    """
    if not (0 <= i <= N and 0 <= j <= N):
        raise ValueError("state indices must lie in [0, N]")
    if j < i:
        return 0.0
    p = -np.expm1(-b1 * dt)
    return float(stats.binom.pmf(j - i, N - i, p))


class DeathModel(Model):
    """Markovian death process: N individuals each become infectious at rate b1.

    Observations are the infection counts at the design's (sorted) times.
    Prior: b1 lognormal with the given mean/variance on the log scale.
    """

    param_dim = 1

    def __init__(self, population: int = 50, log_mean: float = -0.005, log_var: float = 0.01):
        if population < 1:
            raise ValueError("population must be >= 1")
        self.population = population
        self.log_mean = log_mean
        self.log_sd = float(np.sqrt(log_var))

    def sample_params(self, rng, size):
        return np.exp(self.log_mean + self.log_sd * rng.standard_normal((size, 1)))

    def prior_logpdf(self, b1):
        return stats.norm.logpdf(np.log(b1), self.log_mean, self.log_sd) - np.log(b1)

    def prior_density(self, b1):
        return np.exp(self.prior_logpdf(b1))

    def prior_quantile(self, q):
        return float(np.exp(self.log_mean + self.log_sd * stats.norm.ppf(q)))

    def simulate(self, params, design, rng):
        b1 = np.atleast_2d(params)[:, 0]
        times = np.asarray(design, dtype=float)
        m = b1.size
        counts = np.zeros(m, dtype=np.int64)
        out = np.empty((m, times.size), dtype=np.int64)
        prev_t = 0.0
        for k, t in enumerate(times):
            p = -np.expm1(-b1 * (t - prev_t))
            counts = counts + rng.binomial(self.population - counts, p)
            out[:, k] = counts
            prev_t = t
        return out

    def simulate_quantile(self, params, design, uniforms):
        """Quantile-transform simulation: each draw maps a fixed (draws, times)
        block of uniforms through the binomial-increment inverse CDF. Reusing
        one block across designs gives common random numbers, so the estimated
        utility varies smoothly with the observation times."""
        b1 = np.atleast_2d(params)[:, 0]
        times = np.asarray(design, dtype=float)
        u = np.asarray(uniforms)
        counts = np.zeros(b1.size, dtype=np.int64)
        out = np.empty((b1.size, times.size), dtype=np.int64)
        prev_t = 0.0
        for k, t in enumerate(times):
            p = -np.expm1(-b1 * (t - prev_t))
            counts = counts + stats.binom.ppf(u[:, k], self.population - counts, p).astype(np.int64)
            out[:, k] = counts
            prev_t = t
        return out

    def log_density_matrix(self, data, params, design):
        data = np.atleast_2d(np.asarray(data))
        b1 = np.atleast_2d(params)[:, 0]
        times = np.asarray(design, dtype=float)
        N = self.population
        ll = np.zeros((data.shape[0], b1.size))
        prev = np.zeros(data.shape[0], dtype=np.int64)
        prev_t = 0.0
        for k, t in enumerate(times):
            cur = data[:, k]
            inc = cur - prev
            avail = N - prev
            bad = (inc < 0) | (cur > N)
            logp = np.log(-np.expm1(-b1 * (t - prev_t)))  # (m,)
            log1mp = -b1 * (t - prev_t)
            with np.errstate(invalid="ignore"):
                comb = gammaln(avail + 1) - gammaln(np.maximum(inc, 0) + 1) - gammaln(
                    np.maximum(avail - inc, 0) + 1
                )
            term = comb[:, None] + np.maximum(inc, 0)[:, None] * logp[None, :] + (
                avail - inc
            )[:, None] * log1mp[None, :]
            term[bad] = -np.inf
            ll += term
            prev = np.maximum(cur, 0)
            prev_t = t
        return ll


def pk_mean(theta, t):
    """Mean drug concentration of the one-compartment model at time t.

    theta columns: elimination rate, absorption rate, volume of distribution.
    Near-coincident rates switch to the analytic limit to avoid cancellation.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    t = np.asarray(t, dtype=float)
    th1 = theta[:, 0][:, None]
    th2 = theta[:, 1][:, None]
    th3 = theta[:, 2][:, None]
    tt = t[None, :]
    diff = th2 - th1
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = 400.0 * th2 / (th3 * diff) * (np.exp(-th1 * tt) - np.exp(-th2 * tt))
    limit = 400.0 * th2 * tt * np.exp(-th2 * tt) / th3
    mu = np.where(np.abs(diff) < 1e-8, limit, mu)
    if np.isscalar(t) or t.ndim == 0:
        return mu[:, 0] if theta.shape[0] > 1 else float(mu[0, 0])
    return mu if theta.shape[0] > 1 else mu[0]


class PKModel(Model):
    """One-compartment pharmacokinetic model with combined error.

    y_t ~ Normal(mu(t), sigma2_add + sigma2_prop * mu(t)^2); independent
    lognormal priors on the three kinetic parameters.
    """

    param_dim = 3

    def __init__(
        self,
        sigma2_prop: float = 0.01,
        sigma2_add: float = 0.1,
        log_means=(np.log(0.1), np.log(1.0), np.log(20.0)),
        log_var: float = 0.05,
    ):
        if sigma2_prop <= 0 or sigma2_add <= 0:
            raise ValueError("error variances must be positive")
        self.sigma2_prop = sigma2_prop
        self.sigma2_add = sigma2_add
        self.log_means = np.asarray(log_means, dtype=float)
        self.log_sd = float(np.sqrt(log_var))

    def sample_params(self, rng, size):
        z = rng.standard_normal((size, 3))
        return np.exp(self.log_means + self.log_sd * z)

    def _moments(self, params, design):
        mu = pk_mean(np.atleast_2d(params), np.asarray(design, dtype=float))
        mu = np.atleast_2d(mu)
        var = self.sigma2_add + self.sigma2_prop * mu**2
        return mu, var

    def simulate(self, params, design, rng):
        mu, var = self._moments(params, design)
        return mu + np.sqrt(var) * rng.standard_normal(mu.shape)

    def log_density_matrix(self, data, params, design):
        data = np.atleast_2d(np.asarray(data, dtype=float))
        mu, var = self._moments(params, design)  # (M, n)
        inv = 1.0 / var
        # Expand the squared residual so the cross table reduces to matmuls.
        const = -0.5 * np.sum(np.log(2.0 * np.pi * var) + mu**2 * inv, axis=1)  # (M,)
        cross = data @ (mu * inv).T  # (L, M)
        quad = -0.5 * (data**2 @ inv.T)  # (L, M)
        return const[None, :] + cross + quad

    def log_density_paired(self, data, params, design):
        data = np.atleast_2d(np.asarray(data, dtype=float))
        mu, var = self._moments(params, design)
        return -0.5 * np.sum(np.log(2.0 * np.pi * var) + (data - mu) ** 2 / var, axis=1)


def logistic_prob(beta, x_row):
    """Response probability for one factor row under the logit link."""
    beta = np.asarray(beta, dtype=float)
    x_row = np.asarray(x_row, dtype=float)
    return float(expit(beta[0] + np.dot(beta[1:], x_row)))


class LogisticModel(Model):
    """Four-factor logistic regression with independent uniform priors.

    A design is the n x 4 factor matrix flattened row-major; responses are
    Bernoulli with logit beta0 + x . beta.
    """

    param_dim = 5

    def __init__(self, n_rows: int, lower=(-3, 4, 5, -6, -2.5), upper=(3, 10, 11, 0, 3.5)):
        self.n_rows = n_rows
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if np.any(self.lower >= self.upper):
            raise ValueError("prior lower bounds must lie below upper bounds")

    def sample_params(self, rng, size):
        return rng.uniform(self.lower, self.upper, size=(size, 5))

    def _logits(self, params, design):
        X = np.asarray(design, dtype=float).reshape(self.n_rows, 4)
        beta = np.atleast_2d(params)
        return beta[:, 0][:, None] + beta[:, 1:] @ X.T  # (M, n)

    def simulate(self, params, design, rng):
        rho = expit(self._logits(params, design))
        return (rng.random(rho.shape) < rho).astype(np.int8)

    def log_density_matrix(self, data, params, design):
        data = np.atleast_2d(np.asarray(data, dtype=float))
        eta = self._logits(params, design)  # (M, n)
        # log p = y*eta - log(1 + e^eta), with the softplus computed stably
        softplus = np.logaddexp(0.0, eta)
        return data @ eta.T - np.sum(softplus, axis=1)[None, :]

    def log_density_paired(self, data, params, design):
        data = np.atleast_2d(np.asarray(data, dtype=float))
        eta = self._logits(params, design)
        return np.sum(data * eta - np.logaddexp(0.0, eta), axis=1)


class NormalNormalModel(Model):
    """Conjugate validation model: theta ~ N(0, tau2), y | theta ~ N(theta, sigma2).

    The expected information gain of a single observation is known in closed
    form, which makes this the reference case for the nested estimator.
    """

    param_dim = 1

    def __init__(self, tau2: float = 1.0, sigma2: float = 1.0, n_obs: int = 1):
        self.tau2 = tau2
        self.sigma2 = sigma2
        self.n_obs = n_obs

    def analytic_information(self) -> float:
        return 0.5 * np.log(1.0 + self.n_obs * self.tau2 / self.sigma2)

    def sample_params(self, rng, size):
        return np.sqrt(self.tau2) * rng.standard_normal((size, 1))

    def simulate(self, params, design, rng):
        theta = np.atleast_2d(params)[:, 0]
        return theta[:, None] + np.sqrt(self.sigma2) * rng.standard_normal(
            (theta.size, self.n_obs)
        )

    def log_density_matrix(self, data, params, design):
        data = np.atleast_2d(np.asarray(data, dtype=float))
        theta = np.atleast_2d(params)[:, 0]
        const = -0.5 * self.n_obs * np.log(2.0 * np.pi * self.sigma2)
        resid = data[:, None, :] - theta[None, :, None]
        return const - 0.5 * np.sum(resid**2, axis=2) / self.sigma2

    def log_density_paired(self, data, params, design):
        data = np.atleast_2d(np.asarray(data, dtype=float))
        theta = np.atleast_2d(params)[:, 0]
        const = -0.5 * self.n_obs * np.log(2.0 * np.pi * self.sigma2)
        return const - 0.5 * np.sum((data - theta[:, None]) ** 2, axis=1) / self.sigma2
