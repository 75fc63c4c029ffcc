"""
Cell-free uplink evaluation: single-user SNR with MR combining over random
AP subsets, and multi-user SINR under optimum and MR combining.

All SINR arithmetic is carried out with powers normalized by the noise
power, i.e. with rho = p / sigma^2, which keeps the interference-plus-noise
matrix at unit scale whatever the absolute channel gains are.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .channel import SoundingDataset, average_gains, linear_to_db
from .errors import (
    DegenerateChannelError,
    IncompatibleDatasetError,
    InfeasibleSubsetError,
    InvalidCombinerError,
    InvalidInputError,
    NumericalError,
)

DEFAULT_COUNTS = tuple(2 ** i for i in range(1, 11))
PERCENTILES = (1, 5, 10, 25, 50, 75, 90, 95, 99)
METHODS = ("optimum", "mr")
FREQUENCY_MODES = ("per_realization", "averaged")

_SUBSET_STREAM = 0x5B5E


@dataclass(frozen=True)
class LinkBudget:
    """UE transmit power and per-AP uplink noise power, both in dBm."""

    p_dbm: float = 0.0
    noise_dbm: float = -90.0

    def __post_init__(self):
        if not (math.isfinite(self.p_dbm) and math.isfinite(self.noise_dbm)):
            raise InvalidInputError("link budget values must be finite")
        if not self.noise_dbm < self.p_dbm + 200.0:
            raise InvalidInputError("noise power is implausibly far above the transmit power")

    @property
    def rho(self) -> float:
        """Transmit-power-to-noise ratio p / sigma^2 (linear)."""
        return 10.0 ** ((self.p_dbm - self.noise_dbm) / 10.0)


class Ratio(NamedTuple):
    linear: float
    db: float


def _ratio(x) -> Ratio:
    x = float(x)
    return Ratio(x, linear_to_db(x))


def uplink_snr(gains, budget: LinkBudget = LinkBudget()) -> Ratio:
    """Uplink SNR of one UE after MR combining over APs with the given average gains."""
    g = np.asarray(gains, dtype=float).reshape(-1)
    if g.size == 0:
        raise InvalidInputError("need at least one AP gain")
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise InvalidInputError("gains must be finite and nonnegative")
    return _ratio(budget.rho * g.sum())


def _vector(x, name) -> np.ndarray:
    v = np.asarray(x, dtype=complex).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return v


def _interferer_matrix(interferers, m: int) -> np.ndarray:
    if interferers is None:
        return np.zeros((m, 0), dtype=complex)
    a = np.asarray(interferers, dtype=complex)
    if a.ndim == 1:
        a = a[:, None]
    if a.shape[0] != m:
        raise InvalidInputError(f"interferer matrix has {a.shape[0]} rows, channel has {m}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("interferer matrix has non-finite entries")
    return a


def mr_vector(h_k) -> np.ndarray:
    h = _vector(h_k, "channel")
    if not np.any(h):
        raise DegenerateChannelError("MR combining needs a nonzero channel")
    return h.copy()


def interference_plus_noise(interferers, budget: LinkBudget, m: Optional[int] = None) -> np.ndarray:
    """rho * sum_i h_i h_i^H + I, i.e. the interference-plus-noise matrix divided by sigma^2."""
    if m is None:
        m = np.asarray(interferers).shape[0]
    a = _interferer_matrix(interferers, m)
    r = budget.rho * (a @ a.conj().T)
    # matmul rounding leaves tiny anti-Hermitian residue; remove it
    r = 0.5 * (r + r.conj().T)
    return r + np.eye(m)


def optimum_vector(h_k, interferers, budget: LinkBudget = LinkBudget()) -> np.ndarray:
    """
    SINR-maximizing combiner (p sum h_i h_i^H + sigma^2 I)^{-1} h_k.

    Computed with a Cholesky solve. The result is returned up to a positive
    scale (the noise normalization), which does not affect the SINR.
    """
    h = _vector(h_k, "channel")
    if not np.any(h):
        raise DegenerateChannelError("optimum combining needs a nonzero channel")
    r = interference_plus_noise(interferers, budget, h.size)
    try:
        return cho_solve(cho_factor(r, lower=True), h)
    except LinAlgError as exc:
        raise NumericalError(f"Cholesky solve failed: {exc}") from exc


def sinr(v, h_k, interferers, budget: LinkBudget = LinkBudget()) -> Ratio:
    """SINR of UE k at the output of combiner v."""
    v = _vector(v, "combiner")
    h = _vector(h_k, "channel")
    if not np.any(v):
        raise InvalidCombinerError("combining vector is zero")
    if v.size != h.size:
        raise InvalidInputError("combiner and channel lengths differ")
    a = _interferer_matrix(interferers, h.size)
    rho = budget.rho
    signal = abs(np.vdot(v, h)) ** 2
    interference = float(np.sum(np.abs(a.conj().T @ v) ** 2))
    noise = float(np.vdot(v, v).real)
    return _ratio(rho * signal / (rho * interference + noise))


def sinr_upper_bound(h_k, interferers, budget: LinkBudget = LinkBudget()) -> Ratio:
    """p h_k^H (p sum h_i h_i^H + sigma^2 I)^{-1} h_k, the SINR attained by optimum combining."""
    h = _vector(h_k, "channel")
    v = optimum_vector(h, interferers, budget)
    return _ratio(budget.rho * np.vdot(h, v).real)


# --- batched evaluation in the span of the channel vectors -----------------

def _gram(h: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(h, -1, -2)) @ h


def _sinr_from_gram(gram: np.ndarray, w: np.ndarray, k: int, rho: float) -> np.ndarray:
    """
    SINR of UE k for combiners v = H w, given the Gram matrix G = H^H H.

    gram: (..., K, K); w: (..., K).
    """
    c = np.einsum("...j,...ji->...i", np.conj(w), gram)       # c_i = v^H h_i
    power = np.abs(c) ** 2
    signal = power[..., k]
    interference = power.sum(axis=-1) - signal
    noise = np.einsum("...i,...i->...", np.conj(w), np.einsum("...ij,...j->...i", gram, w)).real
    den = rho * interference + noise
    return np.divide(rho * signal, den, out=np.zeros_like(signal), where=den > 0)


def _combiner_weights(gram: np.ndarray, k: int, rho: float, method: str) -> np.ndarray:
    K = gram.shape[-1]
    w = np.zeros(gram.shape[:-1], dtype=complex)
    w[..., k] = 1.0
    if method == "mr" or K == 1:
        return w
    # (rho A A^H + I)^{-1} h_k = h_k - rho A (I + rho A^H A)^{-1} A^H h_k, A = other UEs' channels
    others = [i for i in range(K) if i != k]
    g_oo = gram[..., others, :][..., :, others]
    g_ok = gram[..., others, k]
    system = np.eye(K - 1) + rho * g_oo
    c = np.linalg.solve(system, g_ok[..., None])[..., 0]
    w[..., others] = -rho * c
    return w


def multiuser_sinr(h: np.ndarray, budget: LinkBudget, method: str) -> np.ndarray:
    """
    Per-UE SINR for a batch of channel matrices.

    Args:
        h: (..., M, K) channel matrices, one column per UE.
        method: "optimum" or "mr".

    Returns:
        (..., K) linear SINR values.
    """
    if method not in METHODS:
        raise InvalidInputError(f"unknown combining method {method!r}")
    h = np.asarray(h, dtype=complex)
    gram = _gram(h)
    rho = budget.rho
    K = h.shape[-1]
    out = np.empty(h.shape[:-2] + (K,))
    for k in range(K):
        w = _combiner_weights(gram, k, rho, method)
        out[..., k] = _sinr_from_gram(gram, w, k, rho)
    return out


# --- distribution statistics ------------------------------------------------

@dataclass(frozen=True)
class DistributionStats:
    median_db: float
    std_db: float
    percentiles: dict
    cdf_grid_db: np.ndarray
    cdf: np.ndarray
    n_samples: int


def distribution_stats(samples_db, cdf_step_db: float = 0.5) -> DistributionStats:
    """
    Median, population std, percentiles and empirical CDF of dB samples.

    Percentiles interpolate linearly between order statistics. The CDF is
    evaluated on a uniform grid of `cdf_step_db` covering the finite samples;
    no-signal samples (-inf dB) count towards every grid point.
    """
    x = np.asarray(samples_db, dtype=float).reshape(-1)
    if x.size == 0:
        raise InvalidInputError("need at least one sample")
    if np.any(np.isnan(x)):
        raise InvalidInputError("samples contain NaN")
    finite = x[np.isfinite(x)]
    with np.errstate(invalid="ignore"):
        pct = np.percentile(x, PERCENTILES, method="linear")
    if finite.size < x.size:
        # numpy's lerp turns -inf into nan; between -inf and anything the answer is -inf
        xs = np.sort(x)
        lower = xs[np.floor(np.asarray(PERCENTILES) / 100.0 * (x.size - 1)).astype(int)]
        pct = np.where(np.isneginf(lower), -np.inf, pct)
    if finite.size:
        lo = math.floor(finite.min() / cdf_step_db) * cdf_step_db
        hi = math.ceil(finite.max() / cdf_step_db) * cdf_step_db
        grid = lo + cdf_step_db * np.arange(int(round((hi - lo) / cdf_step_db)) + 1)
    else:
        grid = np.zeros(0)
    cdf = np.searchsorted(np.sort(x), grid, side="right") / x.size
    return DistributionStats(
        median_db=float(pct[PERCENTILES.index(50)]),
        # the spread is unbounded once a no-signal sample is present
        std_db=float(np.std(x)) if finite.size == x.size else float("inf"),
        percentiles={p: float(v) for p, v in zip(PERCENTILES, pct)},
        cdf_grid_db=grid,
        cdf=cdf,
        n_samples=int(x.size),
    )


@dataclass
class SinrReport:
    """Distribution statistics keyed by (ue_id, ap_count, method)."""

    mode: str
    entries: dict = field(default_factory=dict)
    samples: dict = field(default_factory=dict)

    def __getitem__(self, key) -> DistributionStats:
        return self.entries[key]

    def keys(self):
        return sorted(self.entries)

    def merge(self, other: "SinrReport"):
        self.entries.update(other.entries)
        self.samples.update(other.samples)


# --- random AP subsets ------------------------------------------------------

def random_subsets(n_total: int, count: int, n_subsets: int, rng: np.random.Generator) -> np.ndarray:
    """(n_subsets, count) AP indices; uniform without replacement within each subset."""
    if count < 1 or count > n_total:
        raise InfeasibleSubsetError(f"cannot pick {count} APs out of {n_total}")
    if count == n_total:
        return np.tile(np.arange(n_total), (n_subsets, 1))
    out = np.empty((n_subsets, count), dtype=np.intp)
    for s in range(n_subsets):
        out[s] = rng.choice(n_total, size=count, replace=False)
    return out


def _subset_rng(seed: int, count: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) % (1 << 64), stream, int(count)])


def snr_subset_samples(gains, count: int, n_subsets: int, seed: int,
                       budget: LinkBudget = LinkBudget()) -> np.ndarray:
    """Linear uplink SNR of `n_subsets` random AP subsets of size `count`."""
    g = np.asarray(gains, dtype=float)
    subsets = random_subsets(g.size, count, n_subsets, _subset_rng(seed, count, _SUBSET_STREAM))
    return budget.rho * g[subsets].sum(axis=1)


def ap_subset_sweep(dataset: SoundingDataset, ue_id: int, counts: Sequence[int] = DEFAULT_COUNTS,
                    n_subsets: int = 10000, seed: int = 0, budget: LinkBudget = LinkBudget(),
                    trial: Optional[int] = None, workers: int = 1, keep_samples: bool = False) -> SinrReport:
    """
    Uplink SNR distribution versus the number of randomly selected APs.

    Each count gets its own random stream derived from (seed, count), so a
    count's result does not depend on which other counts are requested or on
    the worker count.
    """
    if ue_id not in dataset.ue_ids():
        raise IncompatibleDatasetError(f"dataset has no UE {ue_id}")
    gains = average_gains(dataset.channel_matrix(ue_id, trial))
    counts = [int(c) for c in counts]
    for c in counts:
        if c > gains.size:
            raise InfeasibleSubsetError(f"count {c} exceeds the {gains.size} available AP positions")
        if c < 1:
            raise InfeasibleSubsetError(f"count must be >= 1, got {c}")

    def run(count):
        return snr_subset_samples(gains, count, n_subsets, seed, budget)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, counts))
    else:
        results = [run(c) for c in counts]

    report = SinrReport(mode="snr")
    for count, snr in zip(counts, results):
        snr_db = linear_to_db(snr)
        report.entries[(ue_id, count, "mr")] = distribution_stats(snr_db)
        if keep_samples:
            report.samples[(ue_id, count, "mr")] = snr_db
    return report


def _flight_channels(dataset: SoundingDataset, ue_ids, trials) -> list:
    chans = []
    for uid in ue_ids:
        if uid not in dataset.ue_ids():
            raise IncompatibleDatasetError(f"dataset has no UE {uid}")
        trial = None if trials is None else trials.get(uid)
        chans.append(dataset.channel_matrix(uid, trial))
    lengths = {c.shape for c in chans}
    if len(lengths) != 1:
        raise IncompatibleDatasetError(
            f"UEs have different trajectory lengths or F: {sorted(lengths)}")
    return chans


def multi_user_sinr_samples(dataset: SoundingDataset, ue_ids: Sequence[int], ap_count: int,
                            n_subsets: int = 200, seed: int = 0, budget: LinkBudget = LinkBudget(),
                            methods: Sequence[str] = METHODS, trials: Optional[dict] = None,
                            frequency_mode: str = "per_realization", chunk: int = 16) -> dict:
    """
    Linear SINR samples for K UEs served jointly by random AP subsets.

    For every subset and every frequency realization the M x K channel matrix
    is built from the subset rows and each UE's own flight (`trials` maps
    ue_id -> trial, default the lowest trial of each UE). The same subsets
    are used for every method.

    Returns:
        dict method -> array of shape (n_subsets, F, K) for
        frequency_mode "per_realization", or (n_subsets, K) with the linear
        SINR averaged over realizations for "averaged".
    """
    ue_ids = [int(u) for u in ue_ids]
    if len(ue_ids) < 2:
        raise InvalidInputError("multi-user evaluation needs at least two UEs")
    if len(set(ue_ids)) != len(ue_ids):
        raise InvalidInputError("duplicate UE ids")
    if frequency_mode not in FREQUENCY_MODES:
        raise InvalidInputError(f"unknown frequency mode {frequency_mode!r}")
    for m in methods:
        if m not in METHODS:
            raise InvalidInputError(f"unknown combining method {m!r}")
    chans = np.stack(_flight_channels(dataset, ue_ids, trials), axis=-1)   # (L, F, K)
    n_ap = chans.shape[0]
    subsets = random_subsets(n_ap, int(ap_count), n_subsets, _subset_rng(seed, ap_count, _SUBSET_STREAM + 1))

    out = {m: np.empty((n_subsets, chans.shape[1], len(ue_ids))) for m in methods}
    for start in range(0, n_subsets, chunk):
        idx = subsets[start:start + chunk]
        h = np.swapaxes(chans[idx], 1, 2)          # (S, F, M, K)
        for m in methods:
            out[m][start:start + chunk] = multiuser_sinr(h, budget, m)
    if frequency_mode == "averaged":
        out = {m: v.mean(axis=1) for m, v in out.items()}
    return out


def multi_user_sinr_eval(dataset: SoundingDataset, ue_ids: Sequence[int], ap_count: int,
                         method: str = "optimum", n_subsets: int = 200, seed: int = 0,
                         budget: LinkBudget = LinkBudget(), trials: Optional[dict] = None,
                         frequency_mode: str = "per_realization", keep_samples: bool = False) -> SinrReport:
    """Per-UE SINR distribution (pooled over subsets and realizations) for one combining method."""
    samples = multi_user_sinr_samples(dataset, ue_ids, ap_count, n_subsets, seed, budget,
                                      methods=(method,), trials=trials, frequency_mode=frequency_mode)[method]
    report = SinrReport(mode="sinr")
    for j, uid in enumerate(ue_ids):
        db = linear_to_db(samples[..., j].reshape(-1))
        report.entries[(int(uid), int(ap_count), method)] = distribution_stats(db)
        if keep_samples:
            report.samples[(int(uid), int(ap_count), method)] = db
    return report
