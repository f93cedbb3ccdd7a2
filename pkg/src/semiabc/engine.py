"""Prior sampling, batch simulation, rejection ABC, and adjustments.

Reproducibility contract: every random value consumed for draw m is taken
from a counter-based (Philox) stream keyed only by the batch seed, a fixed
purpose tag, and m's fixed-size chunk. Identical (seed, draw index) give
identical output for any batch size and any worker-thread count; the
suite asserts byte equality at 1 vs 8 threads.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.special import ndtri

from .errors import ConfigError, NumericalError
from .linalg import as_matrix, as_vector
from .regression import fit_linear

# Draws are simulated in fixed-size chunks; each chunk has its own RNG
# streams. The constant is part of the reproducibility contract: changing
# it changes every batch.
CHUNK = 4096

# Stream purpose tags (second element of the SeedSequence key).
_TAG_PRIOR = 0
_TAG_SIM = 1
_TAG_PROBE = 2
_TAG_RESAMPLE = 5

# simulate_batch probes with this many prior proposals before rejecting
# against a truncation region; below the rate threshold it gives up.
PROBE_SIZE = 10_000
MIN_TRUNCATION_ACCEPT_RATE = 1e-4
_MAX_REJECTION_ROUNDS = 100_000

PRIOR_KINDS = ("uniform", "normal", "lognormal")


def _generator(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def derive_seed(seed: int, *tags: int) -> int:
    """A child seed that is a pure function of (seed, tags)."""
    ss = np.random.SeedSequence((int(seed), *map(int, tags)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class TruncationRegion:
    """Axis-aligned box of per-coordinate [lo, hi] intervals."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = as_vector(self.lo, "lo")
        hi = as_vector(self.hi, "hi")
        if lo.shape != hi.shape:
            raise ValueError("lo and hi must have the same length")
        if np.any(lo > hi):
            raise ValueError("truncation region has lo > hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask over the rows of an (n, p) array."""
        return np.all((points >= self.lo) & (points <= self.hi), axis=1)

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @staticmethod
    def from_dict(data: dict) -> "TruncationRegion":
        return TruncationRegion(
            lo=np.asarray(data["lo"], dtype=np.float64),
            hi=np.asarray(data["hi"], dtype=np.float64),
        )


@dataclass(frozen=True)
class MarginalPrior:
    """One coordinate's prior: uniform(lo, hi), normal(mean, sd), or
    lognormal(mu, sigma) of the underlying normal."""

    kind: str
    a: float
    b: float

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ConfigError(f"unknown prior kind {self.kind!r}")
        if self.kind == "uniform" and not self.a < self.b:
            raise ConfigError(f"uniform prior needs lo < hi, got [{self.a}, {self.b}]")
        if self.kind in ("normal", "lognormal") and not self.b > 0:
            raise ConfigError(f"{self.kind} prior needs positive scale, got {self.b}")

    def ppf(self, u: np.ndarray) -> np.ndarray:
        u = np.clip(u, 1e-300, 1.0 - 1e-16)
        if self.kind == "uniform":
            return self.a + u * (self.b - self.a)
        z = ndtri(u)
        if self.kind == "normal":
            return self.a + self.b * z
        return np.exp(self.a + self.b * z)

    def mean(self) -> float:
        if self.kind == "uniform":
            return 0.5 * (self.a + self.b)
        if self.kind == "normal":
            return self.a
        return math.exp(self.a + 0.5 * self.b**2)


def uniform(lo: float, hi: float) -> MarginalPrior:
    return MarginalPrior("uniform", float(lo), float(hi))


def normal(mean: float, sd: float) -> MarginalPrior:
    return MarginalPrior("normal", float(mean), float(sd))


def lognormal(mu: float, sigma: float) -> MarginalPrior:
    return MarginalPrior("lognormal", float(mu), float(sigma))


@dataclass(frozen=True)
class PriorSpec:
    """Independent per-coordinate prior, optionally truncated to a box."""

    marginals: tuple[MarginalPrior, ...]
    truncation_box: TruncationRegion | None = None

    def __post_init__(self):
        if not self.marginals:
            raise ConfigError("prior needs at least one coordinate")
        box = self.truncation_box
        if box is not None:
            if box.dim != len(self.marginals):
                raise ConfigError("truncation box dimension mismatch")
            if not np.all(box.lo < box.hi):
                raise ConfigError("truncation box must have positive volume")

    @property
    def dim(self) -> int:
        return len(self.marginals)

    def sample_untruncated(self, u: np.ndarray) -> np.ndarray:
        """Map an (n, p) uniform matrix through the per-coordinate inverse CDFs."""
        out = np.empty_like(u)
        for i, marg in enumerate(self.marginals):
            out[:, i] = marg.ppf(u[:, i])
        return out

    def truncated(self, box: TruncationRegion) -> "PriorSpec":
        return PriorSpec(marginals=self.marginals, truncation_box=box)

    def to_dict(self) -> dict:
        d = {
            "marginals": [
                {"kind": m.kind, "a": m.a, "b": m.b} for m in self.marginals
            ]
        }
        if self.truncation_box is not None:
            d["truncation_box"] = self.truncation_box.to_dict()
        return d

    def spec_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    @staticmethod
    def from_dict(data: dict) -> "PriorSpec":
        margs = tuple(
            MarginalPrior(m["kind"], float(m["a"]), float(m["b"]))
            for m in data["marginals"]
        )
        box = data.get("truncation_box")
        return PriorSpec(
            marginals=margs,
            truncation_box=TruncationRegion.from_dict(box) if box else None,
        )


@dataclass(frozen=True)
class SimulatorContract:
    """Deterministic vectorized simulator.

    `simulate(thetas, rng)` maps an (n, p) parameter block plus a dedicated
    Generator to an (n, d) statistic block. To honor the reproducibility
    contract the simulator must consume randomness only through vectorized
    row-major draws sized by the number of input rows (the engine always
    presents full fixed-size chunks, so multiple draw calls are fine).
    """

    name: str
    param_dim: int
    stat_dim: int
    simulate: Callable[[np.ndarray, np.random.Generator], np.ndarray]


@dataclass(frozen=True)
class SimulationBatch:
    """M paired (theta, s) draws plus the provenance that produced them."""

    thetas: np.ndarray  # (M, p)
    stats: np.ndarray  # (M, d)
    seed: int
    model_name: str
    prior_hash: str
    region: TruncationRegion | None = None

    def __post_init__(self):
        t = as_matrix(self.thetas, "thetas")
        s = as_matrix(self.stats, "stats")
        if t.shape[0] != s.shape[0]:
            raise ValueError("thetas and stats row counts differ")
        object.__setattr__(self, "thetas", t)
        object.__setattr__(self, "stats", s)

    @property
    def m(self) -> int:
        return self.thetas.shape[0]

    @property
    def param_dim(self) -> int:
        return self.thetas.shape[1]

    @property
    def stat_dim(self) -> int:
        return self.stats.shape[1]


@dataclass(frozen=True)
class WeightedPosterior:
    """Accepted parameter draws with normalized weights and acceptance info."""

    thetas: np.ndarray  # (N, p)
    weights: np.ndarray  # (N,)
    epsilon: float  # largest accepted distance
    distances: np.ndarray  # (N,) distances of accepted draws
    accepted_indices: np.ndarray  # (N,) indices into the source batch
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = as_matrix(self.thetas, "thetas")
        w = as_vector(self.weights, "weights")
        if t.shape[0] < 1:
            raise ValueError("posterior needs at least one draw")
        if w.shape[0] != t.shape[0]:
            raise ValueError("weights length mismatch")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1 within 1e-12")
        object.__setattr__(self, "thetas", t)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.thetas.shape[0]

    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def posterior_mean(self) -> np.ndarray:
        return self.weights @ self.thetas


def _sample_thetas_chunk(prior: PriorSpec, seed: int, chunk_index: int) -> np.ndarray:
    """Draw one full chunk of thetas; rejection against the truncation box."""
    p = prior.dim
    box = prior.truncation_box
    thetas = np.empty((CHUNK, p))
    unfilled = np.ones(CHUNK, dtype=bool)
    for round_index in range(_MAX_REJECTION_ROUNDS):
        rng = _generator(seed, _TAG_PRIOR, chunk_index, round_index)
        candidates = prior.sample_untruncated(rng.random((CHUNK, p)))
        ok = box.contains(candidates) if box is not None else np.ones(CHUNK, dtype=bool)
        take = ok & unfilled
        thetas[take] = candidates[take]
        unfilled &= ~take
        if not unfilled.any():
            return thetas
    raise NumericalError("truncation region too small for prior")


def _simulate_chunk(
    prior: PriorSpec, sim: SimulatorContract, seed: int, chunk_index: int, n_keep: int
) -> tuple[np.ndarray, np.ndarray]:
    thetas = _sample_thetas_chunk(prior, seed, chunk_index)
    rng = _generator(seed, _TAG_SIM, chunk_index)
    stats = np.asarray(sim.simulate(thetas, rng), dtype=np.float64)
    if stats.shape != (CHUNK, sim.stat_dim):
        raise NumericalError(
            f"simulator {sim.name!r} returned shape {stats.shape}, "
            f"expected {(CHUNK, sim.stat_dim)}"
        )
    return thetas[:n_keep], stats[:n_keep]


def _probe_truncation(prior: PriorSpec, seed: int) -> None:
    box = prior.truncation_box
    if box is None:
        return
    rng = _generator(seed, _TAG_PROBE)
    proposals = prior.sample_untruncated(rng.random((PROBE_SIZE, prior.dim)))
    rate = float(np.mean(box.contains(proposals)))
    if rate < MIN_TRUNCATION_ACCEPT_RATE:
        raise NumericalError(
            f"truncation region too small for prior "
            f"(probe acceptance rate {rate:.2e} < {MIN_TRUNCATION_ACCEPT_RATE:.0e})"
        )


def simulate_batch(
    prior: PriorSpec,
    sim: SimulatorContract,
    m: int,
    seed: int,
    *,
    threads: int = 1,
) -> SimulationBatch:
    """Simulate M paired (theta, s) draws from p(s|theta) p(theta).

    Output is a pure function of (prior, sim, m, seed); `threads` only
    distributes chunks across workers and never changes any value.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if sim.param_dim != prior.dim:
        raise ValueError(
            f"simulator expects {sim.param_dim} parameters, prior has {prior.dim}"
        )
    _probe_truncation(prior, seed)

    n_chunks = (m + CHUNK - 1) // CHUNK
    thetas = np.empty((m, prior.dim))
    stats = np.empty((m, sim.stat_dim))

    def run(chunk_index: int):
        start = chunk_index * CHUNK
        n_keep = min(CHUNK, m - start)
        t, s = _simulate_chunk(prior, sim, seed, chunk_index, n_keep)
        thetas[start : start + n_keep] = t
        stats[start : start + n_keep] = s

    if threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, range(n_chunks)))
    else:
        for c in range(n_chunks):
            run(c)

    if not (np.all(np.isfinite(thetas)) and np.all(np.isfinite(stats))):
        raise NumericalError(f"simulator {sim.name!r} produced non-finite values")
    return SimulationBatch(
        thetas=thetas,
        stats=stats,
        seed=int(seed),
        model_name=sim.name,
        prior_hash=prior.spec_hash(),
        region=prior.truncation_box,
    )


def abc_distance(s, s_obs, scales) -> float:
    """Scaled Euclidean distance sqrt(sum_j ((s_j - s_obs_j)/scale_j)^2)."""
    sv = as_vector(s, "s")
    ov = as_vector(s_obs, "s_obs")
    cv = as_vector(scales, "scales")
    if not (sv.shape == ov.shape == cv.shape):
        raise ValueError("s, s_obs, and scales must have equal length")
    if np.any(cv <= 0):
        raise ValueError("scales must be strictly positive")
    z = (sv - ov) / cv
    return float(np.sqrt(z @ z))


def _distance_matrix(stats: np.ndarray, s_obs: np.ndarray, scales: np.ndarray) -> np.ndarray:
    z = (stats - s_obs) / scales
    return np.sqrt(np.einsum("ij,ij->i", z, z))


def scales_from_matrix(stats: np.ndarray) -> np.ndarray:
    """Per-column robust scale: 1.4826 * MAD, falling back to the standard
    deviation, then to 1.0 (with a warning) for fully degenerate columns."""
    x = as_matrix(stats, "stats")
    med = np.median(x, axis=0)
    scales = 1.4826 * np.median(np.abs(x - med), axis=0)
    zero = scales == 0.0
    if zero.any():
        scales = np.where(zero, x.std(axis=0, ddof=1) if x.shape[0] > 1 else 0.0, scales)
        still_zero = scales == 0.0
        if still_zero.any():
            warnings.warn(
                f"{int(still_zero.sum())} constant statistic column(s); "
                "using scale 1.0 for them",
                stacklevel=2,
            )
            scales = np.where(still_zero, 1.0, scales)
    return scales


def compute_scales(batch: SimulationBatch) -> np.ndarray:
    """Robust per-statistic distance scales from a simulation batch."""
    if batch.m < 10:
        raise ValueError("need at least 10 draws to estimate scales")
    return scales_from_matrix(batch.stats)


def rejection_abc(
    batch: SimulationBatch,
    s_obs,
    *,
    epsilon: float | None = None,
    fraction: float | None = None,
    scales=None,
    kernel: str = "uniform",
    provenance: dict | None = None,
) -> WeightedPosterior:
    """Keep the draws whose statistics are closest to the observed ones.

    Exactly one of `epsilon` (absolute distance threshold) or `fraction`
    (keep the ceil(fraction*M) smallest distances, ties broken by draw
    index) must be given. Scales default to compute_scales(batch).
    kernel="epanechnikov" weights accepted draws by 1 - (d/eps)^2 instead
    of uniformly; the default stays uniform so exact oracles stay simple.
    """
    if (epsilon is None) == (fraction is None):
        raise ValueError("give exactly one of epsilon or fraction")
    s_obs = as_vector(s_obs, "s_obs")
    if s_obs.shape[0] != batch.stat_dim:
        raise ValueError(
            f"s_obs has length {s_obs.shape[0]}, batch statistics have {batch.stat_dim}"
        )
    sc = as_vector(scales, "scales") if scales is not None else compute_scales(batch)
    if np.any(sc <= 0):
        raise ValueError("scales must be strictly positive")
    distances = _distance_matrix(batch.stats, s_obs, sc)

    if fraction is not None:
        if not 0.0 < fraction <= 1.0:
            raise ValueError("fraction must be in (0, 1]")
        n_keep = math.ceil(fraction * batch.m)
        order = np.argsort(distances, kind="stable")
        accepted = np.sort(order[:n_keep])
    else:
        mask = distances <= epsilon
        if not mask.any():
            raise NumericalError(
                f"no draws within epsilon={epsilon}; "
                f"minimum observed distance {float(distances.min()):.6g}"
            )
        accepted = np.nonzero(mask)[0]

    n = accepted.shape[0]
    realized = float(distances[accepted].max())
    if kernel == "uniform":
        weights = np.full(n, 1.0 / n)
    elif kernel == "epanechnikov":
        raw = 1.0 - (distances[accepted] / realized) ** 2 if realized > 0 else np.ones(n)
        total = float(raw.sum())
        weights = raw / total if total > 0 else np.full(n, 1.0 / n)
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    info = {
        "seed": batch.seed,
        "model": batch.model_name,
        "prior_hash": batch.prior_hash,
        "mode": "fraction" if fraction is not None else "epsilon",
        "requested": fraction if fraction is not None else epsilon,
        "kernel": kernel,
        "n_simulated": batch.m,
    }
    if provenance:
        info.update(provenance)
    return WeightedPosterior(
        thetas=batch.thetas[accepted],
        weights=weights,
        epsilon=realized,
        distances=distances[accepted],
        accepted_indices=accepted,
        provenance=info,
    )


def truncation_from_pilot(accepted: WeightedPosterior, expand: float = 0.0) -> TruncationRegion:
    """Bounding box of accepted draws, widened by `expand` times the range.

    Zero-range coordinates are widened to a tiny but valid interval so the
    region always has positive volume.
    """
    if accepted.n < 2:
        raise ValueError("need at least 2 accepted draws")
    if expand < 0:
        raise ValueError("expand must be >= 0")
    lo = accepted.thetas.min(axis=0)
    hi = accepted.thetas.max(axis=0)
    span = hi - lo
    lo = lo - expand * span
    hi = hi + expand * span
    degenerate = span == 0.0
    if degenerate.any():
        pad = 1e-8 * np.maximum(1.0, np.abs(lo))
        lo = np.where(degenerate, lo - pad, lo)
        hi = np.where(degenerate, hi + pad, hi)
    return TruncationRegion(lo=lo, hi=hi)


def regression_adjust(
    posterior: WeightedPosterior,
    stats_of_accepted,
    s_obs,
    ridge_lambda: float = 0.0,
) -> WeightedPosterior:
    """Linear post-hoc correction theta - B_hat (s - s_obs) of accepted draws.

    Fits theta on s by weighted least squares under the posterior weights.
    The fit's condition number and VIFs are attached to provenance so
    over-adjustment risk under collinear or uninformative statistics stays
    visible to downstream reports.
    """
    stats = as_matrix(stats_of_accepted, "stats_of_accepted")
    s_obs = as_vector(s_obs, "s_obs")
    if stats.shape[0] != posterior.n:
        raise ValueError("stats_of_accepted rows must match the posterior draw count")
    if stats.shape[1] != s_obs.shape[0]:
        raise ValueError("s_obs length must match the statistic dimension")
    if posterior.n < stats.shape[1] + 2:
        raise ValueError(
            f"need at least {stats.shape[1] + 2} accepted draws to adjust, got {posterior.n}"
        )
    if np.max(np.abs(stats - s_obs)) == 0.0:
        # every accepted statistic equals the observation: zero innovation,
        # nothing to fit and nothing to correct
        return posterior_with_provenance(
            posterior, adjustment={"kind": "linear_regression", "trivial": True}
        )
    fit = fit_linear(stats, posterior.thetas, ridge_lambda, weights=posterior.weights)
    adjusted = posterior.thetas - (stats - s_obs) @ fit.coef.T
    info = dict(posterior.provenance)
    info["adjustment"] = {
        "kind": "linear_regression",
        "ridge_lambda": float(ridge_lambda),
        "condition_number": fit.condition_number,
        "vifs": fit.vifs.tolist(),
    }
    return WeightedPosterior(
        thetas=adjusted,
        weights=posterior.weights,
        epsilon=posterior.epsilon,
        distances=posterior.distances,
        accepted_indices=posterior.accepted_indices,
        provenance=info,
    )


def systematic_resample(posterior: WeightedPosterior, seed: int) -> WeightedPosterior:
    """Deterministic (given seed) systematic resampling to uniform weights."""
    n = posterior.n
    rng = _generator(seed, _TAG_RESAMPLE)
    positions = (np.arange(n) + rng.random()) / n
    cumulative = np.cumsum(posterior.weights)
    cumulative[-1] = 1.0
    idx = np.searchsorted(cumulative, positions, side="left")
    info = dict(posterior.provenance)
    info["resampled"] = {"seed": int(seed), "method": "systematic"}
    return WeightedPosterior(
        thetas=posterior.thetas[idx],
        weights=np.full(n, 1.0 / n),
        epsilon=posterior.epsilon,
        distances=posterior.distances[idx],
        accepted_indices=posterior.accepted_indices[idx],
        provenance=info,
    )


def posterior_with_provenance(posterior: WeightedPosterior, **extra) -> WeightedPosterior:
    info = dict(posterior.provenance)
    info.update(extra)
    return replace(posterior, provenance=info)
