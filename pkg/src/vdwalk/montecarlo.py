"""Seeded path sampling and the empirical tightness statistics.

Each path owns a counter-based RNG stream keyed by (master seed, path
index), so results are independent of batching and thread count.  Every
path draws one block of exponential gaps and one block of uniforms; the
block is sized so that overflow has probability below 1e-20 and is
treated as a hard error rather than silently re-drawn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from . import backend
from .errors import ParameterError
from .kernel import JumpKernel
from .lattice import VdLattice, Vertex

CHUNK = 4096


@dataclass
class PathSample:
    """One realized trajectory up to the horizon.

    events are (jump_time, vertex) pairs with strictly increasing times
    at most T; next_jump_time is the first jump past the horizon, kept
    so that every recorded holding time is a complete exponential draw.
    """

    start: Vertex
    events: list
    horizon: float
    seed: int
    path_index: int
    next_jump_time: float
    truncated: bool = False

    def holding_times(self) -> np.ndarray:
        times = [t for t, _ in self.events] + [self.next_jump_time]
        return np.diff(np.concatenate([[0.0], times]))

    def n_events(self) -> int:
        return len(self.events)


@dataclass
class EstimateWithCI:
    value: float
    half_width: float
    n_samples: int
    warnings: list = field(default_factory=list)


def _block_size(lam: float, T: float) -> int:
    m = lam * T
    return int(m + 12.0 * math.sqrt(m) + 50.0)


def _draw_block(seed: int, path_index: int, block: int, lam: float):
    rng = np.random.Generator(np.random.Philox(key=(seed, path_index)))
    gaps = rng.standard_exponential(block) / lam
    u = rng.random(block)
    return gaps, u


def _simulate_chunk(lat: VdLattice, kern: JumpKernel, x0_idx: int, T: float,
                    seed: int, lo: int, hi: int):
    """Times, event counts and state sequences for paths lo..hi-1."""
    lam = kern.speed
    block = _block_size(lam, T)
    n = hi - lo
    gaps = np.empty((n, block))
    us = np.empty((n, block))
    for p in range(n):
        g, u = _draw_block(seed, lo + p, block, lam)
        gaps[p] = g
        us[p] = u
    times = np.cumsum(gaps, axis=1)
    n_events = (times <= T).sum(axis=1).astype(np.int64)
    if (n_events >= block).any():
        raise RuntimeError(
            "event count reached the preallocated block; "
            "this has probability < 1e-20 under the correct rate")
    states = backend.fill_states(lat.indptr, lat.indices, lat.degree,
                                 kern.darning_cum, lat.absorbing.view(np.uint8),
                                 x0_idx, us, n_events)
    return times, gaps, n_events, states


def _chunks(n: int):
    for lo in range(0, n, CHUNK):
        yield lo, min(lo + CHUNK, n)


def sample_path(lat: VdLattice, kern: JumpKernel, x0: Vertex, T: float,
                seed: int, path_index: int = 0) -> PathSample:
    if T < 0:
        raise ParameterError("horizon must be nonnegative")
    x0_idx = lat.index_of(x0)
    if T == 0:
        return PathSample(start=x0, events=[], horizon=T, seed=seed,
                          path_index=path_index, next_jump_time=math.inf)
    times, gaps, n_events, states = _simulate_chunk(
        lat, kern, x0_idx, T, seed, path_index, path_index + 1)
    ne = int(n_events[0])
    events = [(float(times[0, i]), lat.vertex(int(states[0, i])))
              for i in range(ne)]
    truncated = bool(lat.absorbing.any()
                     and ne > 0 and lat.absorbing[states[0, ne - 1]])
    return PathSample(start=x0, events=events, horizon=T, seed=seed,
                      path_index=path_index,
                      next_jump_time=float(times[0, ne]), truncated=truncated)


def sample_paths(lat: VdLattice, kern: JumpKernel, x0: Vertex, T: float,
                 n: int, seed: int) -> list[PathSample]:
    return [sample_path(lat, kern, x0, T, seed, p) for p in range(n)]


# -- batch statistics ----------------------------------------------------

def final_state_counts(lat: VdLattice, kern: JumpKernel, x0: Vertex, T: float,
                       n: int, seed: int) -> np.ndarray:
    """Histogram of X_T over n independent paths."""
    x0_idx = lat.index_of(x0)
    counts = np.zeros(lat.n_vertices, dtype=np.int64)
    for lo, hi in _chunks(n):
        times, gaps, n_events, states = _simulate_chunk(
            lat, kern, x0_idx, T, seed, lo, hi)
        last = np.take_along_axis(
            states, np.maximum(n_events - 1, 0)[:, None], axis=1)[:, 0]
        final = np.where(n_events > 0, last, x0_idx)
        counts += np.bincount(final, minlength=lat.n_vertices)
    return counts


@dataclass
class McSummary:
    """Streaming summary of a large batch: final-state histogram,
    pooled holding-time moments (complete holding times only, including
    the draw that crosses the horizon), and the event-count histogram."""

    counts: np.ndarray
    n_paths: int
    gap_sum: float
    gap_sumsq: float
    n_gaps: int
    event_count_hist: np.ndarray

    @property
    def gap_mean(self) -> float:
        return self.gap_sum / self.n_gaps

    @property
    def gap_var(self) -> float:
        return self.gap_sumsq / self.n_gaps - self.gap_mean ** 2


def mc_summary(lat: VdLattice, kern: JumpKernel, x0: Vertex, T: float,
               n: int, seed: int) -> McSummary:
    x0_idx = lat.index_of(x0)
    counts = np.zeros(lat.n_vertices, dtype=np.int64)
    gap_sum = gap_sumsq = 0.0
    n_gaps = 0
    hist = np.zeros(1, dtype=np.int64)
    for lo, hi in _chunks(n):
        times, gaps, n_events, states = _simulate_chunk(
            lat, kern, x0_idx, T, seed, lo, hi)
        last = np.take_along_axis(
            states, np.maximum(n_events - 1, 0)[:, None], axis=1)[:, 0]
        final = np.where(n_events > 0, last, x0_idx)
        counts += np.bincount(final, minlength=lat.n_vertices)
        # complete holding times: the first n_events gaps plus the straddler
        cols = np.arange(gaps.shape[1])
        mask = cols[None, :] <= n_events[:, None]
        g = gaps[mask]
        gap_sum += float(g.sum())
        gap_sumsq += float((g * g).sum())
        n_gaps += int(mask.sum())
        cmax = int(n_events.max()) + 1
        if cmax > len(hist):
            hist = np.concatenate([hist, np.zeros(cmax - len(hist), dtype=np.int64)])
        hist += np.bincount(n_events, minlength=len(hist))
    return McSummary(counts=counts, n_paths=n, gap_sum=gap_sum,
                     gap_sumsq=gap_sumsq, n_gaps=n_gaps, event_count_hist=hist)


def sup_rho_samples(lat: VdLattice, kern: JumpKernel, x0: Vertex, T: float,
                    n: int, seed: int) -> np.ndarray:
    """Per-path sup of |X_t|_rho over [0, T] (visited states, exact)."""
    x0_idx = lat.index_of(x0)
    _, _, rho = lat.embed_all()
    out = np.empty(n)
    for lo, hi in _chunks(n):
        times, gaps, n_events, states = _simulate_chunk(
            lat, kern, x0_idx, T, seed, lo, hi)
        vals = rho[states]
        cols = np.arange(states.shape[1])
        vals[cols[None, :] >= n_events[:, None]] = -np.inf
        sup = vals.max(axis=1, initial=rho[x0_idx])
        out[lo:hi] = sup
    return out


def estimate_sup_exceedance(lat: VdLattice, kern: JumpKernel, x0: Vertex,
                            T: float, M: float, n: int, seed: int,
                            _samples: np.ndarray | None = None) -> EstimateWithCI:
    """Monte Carlo estimate of P[sup_{t<=T} |X_t|_rho > M]."""
    if M <= 0:
        raise ParameterError("threshold M must be positive")
    if n < 1000:
        raise ParameterError("need at least 1000 paths")
    sams = _samples if _samples is not None else sup_rho_samples(
        lat, kern, x0, T, n, seed)
    p = float((sams > M).mean())
    half = 1.96 * math.sqrt(p * (1 - p) / n)
    warns = []
    if float(lat.params.window_radius) <= M + 4.0 * math.sqrt(T):
        warns.append("censored-estimate: window_radius <= M + 4*sqrt(T)")
    return EstimateWithCI(value=p, half_width=half, n_samples=n, warnings=warns)


@dataclass
class ModulusReport:
    """Per-path coarse moduli m(delta) (fixed-partition upper bound for
    the partition-infimum modulus) and threshold exceedance estimates."""

    delta: float
    samples: np.ndarray
    thresholds: np.ndarray
    estimates: list


def estimate_modulus(lat: VdLattice, kern: JumpKernel, x0: Vertex, T: float,
                     delta: float, n: int, seed: int,
                     thresholds=(0.1, 0.2, 0.3, 0.5)) -> ModulusReport:
    """Coarse modulus over the fixed partition {[i*delta, (i+1)*delta]}."""
    if not 0 < delta:
        raise ParameterError("delta must be positive")
    x0_idx = lat.index_of(x0)
    px, py, rho = lat.embed_all()
    kind = lat.kind
    n_blocks = max(1, math.ceil(T / delta - 1e-12))
    out = np.empty(n)
    for lo, hi in _chunks(n):
        times, gaps, n_events, states = _simulate_chunk(
            lat, kern, x0_idx, T, seed, lo, hi)
        for p in range(hi - lo):
            ne = int(n_events[p])
            t = times[p, :ne]
            full = np.concatenate([[x0_idx], states[p, :ne]])
            best = 0.0
            for i in range(n_blocks):
                a = np.searchsorted(t, i * delta, side="right")
                b = np.searchsorted(t, min((i + 1) * delta, T), side="right")
                if b > a:
                    uniq = np.unique(full[a:b + 1])
                    best = max(best, backend.pairwise_rho_max(
                        px, py, rho, kind, uniq))
            out[lo + p] = best
    thresholds = np.asarray(thresholds, dtype=float)
    ests = []
    for d1 in thresholds:
        pr = float((out > d1).mean())
        ests.append(EstimateWithCI(value=pr,
                                   half_width=1.96 * math.sqrt(pr * (1 - pr) / n),
                                   n_samples=n))
    return ModulusReport(delta=delta, samples=out, thresholds=thresholds,
                         estimates=ests)


# -- goodness of fit -----------------------------------------------------

@dataclass
class HoldingTimeReport:
    mean: float
    variance: float
    expected_mean: float
    n_gaps: int
    mean_z: float
    chi2_stat: float
    chi2_dof: int
    p_value: float


def _poisson_chi2(hist: np.ndarray, mu: float, n_paths: int):
    """Chi-square of observed event counts against Poisson(mu)."""
    from scipy.stats import poisson
    kmax = len(hist) - 1
    expected = poisson.pmf(np.arange(kmax + 1), mu) * n_paths
    expected[-1] += poisson.sf(kmax, mu) * n_paths
    # merge bins until every expected count is at least 5
    obs_bins, exp_bins = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(hist, expected):
        o_acc += o
        e_acc += e
        if e_acc >= 5.0:
            obs_bins.append(o_acc)
            exp_bins.append(e_acc)
            o_acc = e_acc = 0.0
    if obs_bins:
        obs_bins[-1] += o_acc
        exp_bins[-1] += e_acc
    obs = np.array(obs_bins)
    exp = np.array(exp_bins)
    stat = float(((obs - exp) ** 2 / exp).sum())
    dof = max(1, len(obs) - 1)
    return stat, dof, float(chi2.sf(stat, dof))


def holding_time_report(paths: list[PathSample], lam: float) -> HoldingTimeReport:
    """Fit of the realized holding times against Exponential(lam) and of
    the event counts against Poisson(lam * horizon)."""
    if len(paths) < 1000:
        raise ParameterError("need at least 1000 paths")
    gaps = np.concatenate([p.holding_times() for p in paths])
    gaps = gaps[np.isfinite(gaps)]
    counts = np.array([p.n_events() for p in paths])
    sample_mean = gaps.mean()
    expected_mean = 1.0 / lam
    T = paths[0].horizon
    hist = np.bincount(counts)
    stat, dof, pval = _poisson_chi2(hist, lam * T, len(paths))
    z = (sample_mean - expected_mean) / (gaps.std(ddof=1) / math.sqrt(len(gaps)))
    return HoldingTimeReport(mean=float(sample_mean), variance=float(gaps.var(ddof=1)),
                             expected_mean=float(expected_mean),
                             n_gaps=len(gaps), mean_z=float(z),
                             chi2_stat=stat, chi2_dof=dof, p_value=pval)


def holding_time_report_exact(summary: McSummary, lam: float, T: float) -> HoldingTimeReport:
    """Report against the nominal rate lam (streaming-summary variant)."""
    mean = summary.gap_mean
    var = summary.gap_var
    expected = 1.0 / lam
    z = (mean - expected) / (math.sqrt(var) / math.sqrt(summary.n_gaps))
    stat, dof, pval = _poisson_chi2(summary.event_count_hist, lam * T,
                                    summary.n_paths)
    return HoldingTimeReport(mean=mean, variance=var, expected_mean=expected,
                             n_gaps=summary.n_gaps, mean_z=float(z),
                             chi2_stat=stat, chi2_dof=dof, p_value=pval)


# -- empirical laws ------------------------------------------------------

@dataclass
class EmpiricalLaw:
    """Sorted sample of rho(X_T, darning point)."""

    sample: np.ndarray

    def cdf(self, x) -> np.ndarray:
        return np.searchsorted(self.sample, x, side="right") / len(self.sample)


def empirical_law(lat: VdLattice, kern: JumpKernel, x0: Vertex, T: float,
                  n: int, seed: int) -> EmpiricalLaw:
    if n < 1000:
        raise ParameterError("need at least 1000 paths")
    x0_idx = lat.index_of(x0)
    _, _, rho = lat.embed_all()
    vals = np.empty(n)
    for lo, hi in _chunks(n):
        times, gaps, n_events, states = _simulate_chunk(
            lat, kern, x0_idx, T, seed, lo, hi)
        last = np.take_along_axis(
            states, np.maximum(n_events - 1, 0)[:, None], axis=1)[:, 0]
        final = np.where(n_events > 0, last, x0_idx)
        vals[lo:hi] = rho[final]
    return EmpiricalLaw(sample=np.sort(vals))


def ks_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov distance (deterministic)."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / len(a)
    fb = np.searchsorted(b, grid, side="right") / len(b)
    return float(np.abs(fa - fb).max())


def ks_noise_floor(n: int, m: int) -> float:
    """Scale of the KS statistic under equal laws (null fluctuation size)."""
    return math.sqrt((n + m) / (n * m))
