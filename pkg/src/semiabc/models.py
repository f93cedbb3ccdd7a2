"""Built-in simulators with exact or grid-based posterior oracles.

Every fixture couples a vectorized simulator with an oracle that is
computed without any ABC machinery (closed forms or grid integration
only), so pipeline accuracy claims can be checked against an independent
answer at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .engine import PriorSpec, SimulatorContract, lognormal, normal, uniform
from .errors import ConfigError

# Below this |xi| the exponential-limit branch of the GPD quantile/density
# is used; the two branches agree to ~1e-6 relative at the threshold.
GPD_SMALL_XI = 1e-6

# Raw statistic ladder for the GPD fixture: empirical quantiles plus mean
# and standard deviation (13 statistics).
GPD_QUANTILE_LADDER = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99)

_OBS_TAG = 7  # stream tag for fixture observed-data generation


def gpd_quantile(u, sigma, xi):
    """Inverse CDF of the generalized Pareto distribution.

    (sigma/xi) ((1-u)^(-xi) - 1), with the exponential limit
    -sigma log(1-u) when |xi| < 1e-6. Vectorized over any broadcastable
    combination of arguments.
    """
    u = np.asarray(u, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    small = np.abs(xi) < GPD_SMALL_XI
    xi_safe = np.where(small, 1.0, xi)
    log1mu = np.log1p(-u)
    general = (sigma / xi_safe) * np.expm1(-xi_safe * log1mu)
    limit = -sigma * log1mu
    return np.where(small, limit, general)


def gpd_logpdf(x, sigma, xi):
    """Log density of GPD(sigma, xi); -inf outside the support."""
    x = np.asarray(x, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    small = np.abs(xi) < GPD_SMALL_XI
    xi_safe = np.where(small, 1.0, xi)
    z = x / sigma
    arg = 1.0 + xi_safe * z
    inside = (x >= 0.0) & (np.where(small, True, arg > 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        general = -np.log(sigma) - (1.0 / xi_safe + 1.0) * np.log(np.where(arg > 0, arg, 1.0))
    limit = -np.log(sigma) - z
    out = np.where(small, limit, general)
    return np.where(inside, out, -np.inf)


def gpd_mean(sigma: float, xi: float) -> float:
    """Mean sigma/(1-xi), defined for xi < 1."""
    if xi >= 1.0:
        raise ValueError("GPD mean requires xi < 1")
    return sigma / (1.0 - xi)


@dataclass(frozen=True)
class ModelFixture:
    """A named simulator, its prior, observed statistics, and an oracle."""

    name: str
    simulator: SimulatorContract
    prior: PriorSpec
    observed_data: np.ndarray
    s_obs: np.ndarray
    oracle: object
    params: dict = field(default_factory=dict, compare=False)


class ConjugateNormalOracle:
    """Exact normal posterior for the Gaussian location fixture."""

    def __init__(self, post_mean: float, post_sd: float):
        self.post_mean = float(post_mean)
        self.post_sd = float(post_sd)

    def coordinate_mean(self, i: int) -> float:
        if i != 0:
            raise IndexError("Gaussian location model has a single parameter")
        return self.post_mean

    def target_mean(self, target) -> float:
        if target.kind == "coordinate":
            return self.coordinate_mean(target.coordinate)
        # Gauss-Hermite quadrature handles arbitrary smooth functionals.
        nodes, weights = np.polynomial.hermite_e.hermegauss(101)
        thetas = (self.post_mean + self.post_sd * nodes).reshape(-1, 1)
        values = target.fn(thetas)
        return float((weights @ values) / math.sqrt(2.0 * math.pi))

    def marginal_cdf(self, i: int, x) -> np.ndarray:
        if i != 0:
            raise IndexError("Gaussian location model has a single parameter")
        return ndtr((np.asarray(x, dtype=np.float64) - self.post_mean) / self.post_sd)

    def marginal_quantile(self, i: int, q) -> np.ndarray:
        if i != 0:
            raise IndexError("Gaussian location model has a single parameter")
        return self.post_mean + self.post_sd * ndtri(np.asarray(q, dtype=np.float64))


class LinearGaussianOracle:
    """Exact Gaussian posterior from the conditioning formulas."""

    def __init__(self, mean: np.ndarray, cov: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.cov = np.asarray(cov, dtype=np.float64)

    def coordinate_mean(self, i: int) -> float:
        return float(self.mean[i])

    def target_mean(self, target) -> float:
        if target.kind != "coordinate":
            raise NotImplementedError(
                "linear-Gaussian oracle evaluates coordinate targets only"
            )
        return self.coordinate_mean(target.coordinate)

    def marginal_cdf(self, i: int, x) -> np.ndarray:
        sd = math.sqrt(float(self.cov[i, i]))
        return ndtr((np.asarray(x, dtype=np.float64) - self.mean[i]) / sd)


class GpdGridOracle:
    """Grid posterior over (sigma, xi) for observed GPD exceedances.

    sigma is gridded log-uniformly and xi uniformly over the prior's
    0.1%-99.9% quantile box; normalization and functional means use
    trapezoidal weights (with the log-sigma Jacobian folded in). No ABC
    machinery is involved anywhere.
    """

    def __init__(self, observed, n_sigma: int = 200, n_xi: int = 200,
                 xi_lo: float = -0.4, xi_hi: float = 0.9):
        x = np.asarray(observed, dtype=np.float64)
        # prior box: lognormal(0,1) for sigma, uniform(xi_lo, xi_hi) for xi
        q = ndtri(0.001)
        log_sigma = np.linspace(q, -q, n_sigma)
        self.sigma_grid = np.exp(log_sigma)
        span = xi_hi - xi_lo
        self.xi_grid = np.linspace(xi_lo + 0.001 * span, xi_hi - 0.001 * span, n_xi)

        log_post = np.empty((n_sigma, n_xi))
        log_prior_sigma = -0.5 * log_sigma**2 - log_sigma  # lognormal(0,1) log-pdf + const
        for i, sigma in enumerate(self.sigma_grid):
            ll = gpd_logpdf(x[None, :], sigma, self.xi_grid[:, None]).sum(axis=1)
            log_post[i] = ll + log_prior_sigma[i]
        log_post -= log_post.max()
        density = np.exp(log_post)

        w_sigma = _trapezoid_weights(log_sigma) * self.sigma_grid  # d sigma = sigma d log sigma
        w_xi = _trapezoid_weights(self.xi_grid)
        weights = density * np.outer(w_sigma, w_xi)
        total = float(weights.sum())
        if not (np.isfinite(total) and total > 0):
            raise ValueError("grid posterior is degenerate; check the observed data")
        self.weights = weights / total

    def grid_points(self) -> np.ndarray:
        ss, xx = np.meshgrid(self.sigma_grid, self.xi_grid, indexing="ij")
        return np.column_stack([ss.ravel(), xx.ravel()])

    def target_mean(self, target) -> float:
        values = target.fn(self.grid_points())
        return float(self.weights.ravel() @ values)

    def coordinate_mean(self, i: int) -> float:
        return float(self.weights.ravel() @ self.grid_points()[:, i])


def _trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    w = np.zeros_like(grid)
    w[:-1] += 0.5 * np.diff(grid)
    w[1:] += 0.5 * np.diff(grid)
    return w


def gaussian_location_fixture(
    mu0: float = 0.0,
    tau0: float = 1.0,
    sigma: float = 1.0,
    n: int = 4,
    xbar_obs: float = 1.0,
    n_noise_stats: int = 0,
) -> ModelFixture:
    """Conjugate normal-location testbed.

    The simulator draws n observations N(theta, sigma^2) and reports their
    sample mean, sample standard deviation, and `n_noise_stats` pure-noise
    N(0,1) statistics. Only the mean is informative about theta; the rest
    exist to stress statistic selection. The observed dataset is a fixed
    pattern with sample mean exactly `xbar_obs` and sample sd `sigma`;
    observed noise statistics are set to their prior mean 0.
    """
    if tau0 <= 0 or sigma <= 0:
        raise ConfigError("tau0 and sigma must be positive")
    if n < 1 or n_noise_stats < 0:
        raise ConfigError("need n >= 1 and n_noise_stats >= 0")

    def simulate(thetas: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        rows = thetas.shape[0]
        data = thetas[:, [0]] + sigma * rng.standard_normal((rows, n))
        mean = data.mean(axis=1)
        sd = data.std(axis=1, ddof=1) if n > 1 else np.zeros(rows)
        cols = [mean, sd]
        if n_noise_stats:
            cols.append(rng.standard_normal((rows, n_noise_stats)))
        return np.column_stack(cols)

    simulator = SimulatorContract(
        name="gaussian_location",
        param_dim=1,
        stat_dim=2 + n_noise_stats,
        simulate=simulate,
    )
    prior = PriorSpec((normal(mu0, tau0),))

    if n > 1:
        pattern = np.linspace(-1.0, 1.0, n)
        pattern = (pattern - pattern.mean()) / pattern.std(ddof=1)
        observed = xbar_obs + sigma * pattern
        obs_sd = float(observed.std(ddof=1))
    else:
        observed = np.array([float(xbar_obs)])
        obs_sd = 0.0
    s_obs = np.concatenate(
        [[float(observed.mean()), obs_sd], np.zeros(n_noise_stats)]
    )

    post_var = 1.0 / (1.0 / tau0**2 + n / sigma**2)
    post_mean = post_var * (mu0 / tau0**2 + n * xbar_obs / sigma**2)
    oracle = ConjugateNormalOracle(post_mean, math.sqrt(post_var))
    return ModelFixture(
        name="gaussian_location",
        simulator=simulator,
        prior=prior,
        observed_data=observed,
        s_obs=s_obs,
        oracle=oracle,
        params={
            "mu0": mu0, "tau0": tau0, "sigma": sigma, "n": n,
            "xbar_obs": xbar_obs, "n_noise_stats": n_noise_stats,
        },
    )


def linear_gaussian_fixture(
    p: int = 2,
    d: int = 2,
    coeffs=None,
    noise_sd: float = 1.0,
    prior_mean=None,
    prior_sd=None,
    s_obs=None,
) -> ModelFixture:
    """Jointly Gaussian model s = C theta + noise with a closed-form posterior.

    The prior is independent normal per coordinate (prior_sd is a vector of
    standard deviations); rows of zeros in the coefficient matrix yield
    pure-noise statistics. Default observation: one prior-predictive
    standard deviation away from the prior-predictive mean per statistic.
    """
    if noise_sd <= 0:
        raise ConfigError("noise_sd must be positive")
    c = np.asarray(coeffs, dtype=np.float64) if coeffs is not None else np.eye(d, p)
    if c.shape != (d, p):
        raise ConfigError(f"coefficient matrix must be {d}x{p}, got {c.shape}")
    m0 = np.asarray(prior_mean, dtype=np.float64) if prior_mean is not None else np.zeros(p)
    sd0 = np.asarray(prior_sd, dtype=np.float64) if prior_sd is not None else np.ones(p)
    if m0.shape != (p,) or sd0.shape != (p,) or np.any(sd0 <= 0):
        raise ConfigError("prior_mean and prior_sd must be length-p with positive sds")

    prior_cov = np.diag(sd0**2)
    mean_s = c @ m0
    cov_theta_s = prior_cov @ c.T
    var_s = c @ prior_cov @ c.T + noise_sd**2 * np.eye(d)

    if s_obs is None:
        s_obs_arr = mean_s + np.sqrt(np.diag(var_s))
    else:
        s_obs_arr = np.asarray(s_obs, dtype=np.float64)
        if s_obs_arr.shape != (d,):
            raise ConfigError(f"s_obs must have length {d}")

    gain = np.linalg.solve(var_s, cov_theta_s.T).T  # p x d
    post_mean = m0 + gain @ (s_obs_arr - mean_s)
    post_cov = prior_cov - gain @ cov_theta_s.T
    oracle = LinearGaussianOracle(post_mean, post_cov)

    def simulate(thetas: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        noise = rng.standard_normal((thetas.shape[0], d))
        return thetas @ c.T + noise_sd * noise

    simulator = SimulatorContract(
        name="linear_gaussian", param_dim=p, stat_dim=d, simulate=simulate
    )
    prior = PriorSpec(tuple(normal(m0[i], sd0[i]) for i in range(p)))
    fixture = ModelFixture(
        name="linear_gaussian",
        simulator=simulator,
        prior=prior,
        observed_data=s_obs_arr,
        s_obs=s_obs_arr,
        oracle=oracle,
        params={
            "p": p, "d": d, "coeffs": c.tolist(), "noise_sd": noise_sd,
            "prior_mean": m0.tolist(), "prior_sd": sd0.tolist(),
            "s_obs": s_obs_arr.tolist(),
        },
    )
    return fixture


def linear_gaussian_moments(fixture: ModelFixture) -> dict:
    """Analytic joint moments of (theta, s) for a linear-Gaussian fixture."""
    if fixture.name != "linear_gaussian":
        raise ValueError("analytic moments are defined for the linear_gaussian fixture")
    prm = fixture.params
    c = np.asarray(prm["coeffs"])
    m0 = np.asarray(prm["prior_mean"])
    sd0 = np.asarray(prm["prior_sd"])
    prior_cov = np.diag(sd0**2)
    return {
        "mean_theta": m0,
        "mean_s": c @ m0,
        "var_theta": prior_cov,
        "var_s": c @ prior_cov @ c.T + prm["noise_sd"] ** 2 * np.eye(c.shape[0]),
        "cov_theta_s": prior_cov @ c.T,
    }


def _gpd_stat_matrix(samples: np.ndarray) -> np.ndarray:
    """Quantile ladder plus mean and sd, rowwise over an (n, k) sample block."""
    quantiles = np.quantile(samples, GPD_QUANTILE_LADDER, axis=1, method="linear").T
    mean = samples.mean(axis=1)
    sd = samples.std(axis=1, ddof=1)
    return np.column_stack([quantiles, mean, sd])


def gpd_fixture(
    sigma_true: float = 1.0,
    xi_true: float = 0.2,
    n_exceedances: int = 100,
    tau_grid=(0.9,),
    obs_seed: int = 20260101,
    grid_shape=(200, 200),
) -> ModelFixture:
    """Generalized Pareto exceedance model with a grid-posterior oracle.

    Simulates n exceedances by inverse CDF, reports the fixed quantile
    ladder plus mean and sd (13 statistics). Targets of interest are the
    posterior means of the distribution quantiles at `tau_grid`. Prior:
    sigma ~ lognormal(0,1), xi ~ uniform(-0.4, 0.9).
    """
    if sigma_true <= 0:
        raise ConfigError("sigma_true must be positive")
    if xi_true <= -0.5:
        raise ConfigError("xi_true must exceed -0.5")
    if n_exceedances < 3:
        raise ConfigError("need at least 3 exceedances for the statistic ladder")
    taus = tuple(float(t) for t in tau_grid)
    if any(not 0.0 < t < 1.0 for t in taus):
        raise ConfigError("tau values must lie in (0, 1)")

    def simulate(thetas: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        u = rng.random((thetas.shape[0], n_exceedances))
        x = gpd_quantile(u, thetas[:, [0]], thetas[:, [1]])
        return _gpd_stat_matrix(x)

    simulator = SimulatorContract(
        name="gpd", param_dim=2, stat_dim=len(GPD_QUANTILE_LADDER) + 2, simulate=simulate
    )
    # Proper default prior covering both heavy and bounded tails while
    # keeping the grid oracle well posed.
    prior = PriorSpec((lognormal(0.0, 1.0), uniform(-0.4, 0.9)))

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((int(obs_seed), _OBS_TAG))))
    observed = gpd_quantile(rng.random(n_exceedances), sigma_true, xi_true)
    s_obs = _gpd_stat_matrix(observed[None, :])[0]

    oracle = GpdGridOracle(observed, n_sigma=int(grid_shape[0]), n_xi=int(grid_shape[1]))
    return ModelFixture(
        name="gpd",
        simulator=simulator,
        prior=prior,
        observed_data=observed,
        s_obs=s_obs,
        oracle=oracle,
        params={
            "sigma_true": sigma_true, "xi_true": xi_true,
            "n_exceedances": n_exceedances, "tau_grid": list(taus),
            "obs_seed": int(obs_seed), "grid_shape": list(grid_shape),
        },
    )


FIXTURES = {
    "gaussian_location": gaussian_location_fixture,
    "linear_gaussian": linear_gaussian_fixture,
    "gpd": gpd_fixture,
}


def make_fixture(name: str, params: dict | None = None) -> ModelFixture:
    """Build a fixture by registry name, e.g. from CLI configuration."""
    try:
        builder = FIXTURES[name]
    except KeyError:
        raise ConfigError(
            f"unknown model {name!r}; available: {sorted(FIXTURES)}"
        ) from None
    try:
        return builder(**(params or {}))
    except TypeError as exc:
        raise ConfigError(f"bad parameters for model {name!r}: {exc}") from None


def apply_prior_overrides(fixture: ModelFixture, overrides: dict) -> ModelFixture:
    """Replace selected per-coordinate prior marginals.

    `overrides` maps coordinate index (as int or str) to a dict
    {"kind": ..., "a": ..., "b": ...}.
    """
    from .engine import MarginalPrior

    margs = list(fixture.prior.marginals)
    for key, spec in overrides.items():
        i = int(key)
        if not 0 <= i < len(margs):
            raise ConfigError(f"prior override coordinate {i} out of range")
        margs[i] = MarginalPrior(spec["kind"], float(spec["a"]), float(spec["b"]))
    new_prior = PriorSpec(tuple(margs), truncation_box=fixture.prior.truncation_box)
    return ModelFixture(
        name=fixture.name,
        simulator=fixture.simulator,
        prior=new_prior,
        observed_data=fixture.observed_data,
        s_obs=fixture.s_obs,
        oracle=fixture.oracle,
        params=fixture.params,
    )
