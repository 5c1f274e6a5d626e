"""Weighted multi-objective design of MTSFM waveform families.

Each member's ACF integrated sidelobe ratio and every pairwise CCF area are
normalized by their values at the initial point and combined with weights
that sum to one, so the objective ``F`` starts at exactly 1. The squared RMS
bandwidth of each member is held within ``[(1 - delta), (1 + delta)]`` times
its initial value.

The solver is a BFGS quasi-Newton method with backtracking line search and
central finite-difference gradients. After every trial step each member is
radially rescaled back into its bandwidth shell. ``beta^2`` is a positive
quadratic form in the indices, so this rescale restores feasibility exactly,
and a step is only accepted if it lowers ``F``.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .analysis import (ccf_area, ccf_numeric, find_first_null, isr_exact, metrics_report,
                       rms_bandwidth_sq, NULL_THRESHOLD_DB)
from .core import (MetricsReport, SamplingGrid, Symmetry, TaperSpec, WaveformError,
                   WaveformParams, make_grid, next_pow2)
from .synthesis import random_waveform, swept_bandwidth, synthesize, taper_window

log = logging.getLogger(__name__)

WEIGHT_CASES = {
    "equal": (1.0, 1.0),
    "ccf-heavy": (1.0, 10.0),
    "acf-heavy": (10.0, 1.0),
}


@dataclass(frozen=True)
class OptimizerSettings:
    max_iter: int = 500
    ftol: float = 1e-6
    stall_iters: int = 5
    fd_step: float = 1e-4
    oversample: float = 16.0
    restarts: int = 1
    restart_scale: float = 0.05
    constraint_tol: float = 1e-6
    max_backtracks: int = 30
    threads: int = 1
    null_threshold_db: float = NULL_THRESHOLD_DB


def pair_list(num_members: int) -> List[Tuple[int, int]]:
    return list(combinations(range(num_members), 2))


def case_weights(case: str, num_members: int) -> Tuple[np.ndarray, np.ndarray]:
    """Raw ISR and CCF weights of a named weighting case."""
    try:
        w_isr, w_ccf = WEIGHT_CASES[case]
    except KeyError:
        raise WaveformError(f"unknown weight case {case!r}") from None
    n_pairs = num_members * (num_members - 1) // 2
    return np.full(num_members, w_isr), np.full(n_pairs, w_ccf)


@dataclass(frozen=True, eq=False)
class FamilyDesignProblem:
    """Family of ``P`` waveforms sharing ``T``, ``K``, symmetry and taper.

    ``weights_isr`` (one per member) and ``weights_ccf`` (one per pair, in
    ``itertools.combinations`` order) are normalized jointly to sum to one.
    """

    members: Tuple[WaveformParams, ...]
    weights_isr: np.ndarray
    weights_ccf: np.ndarray
    delta: float = 0.2
    seed: int = 0
    settings: OptimizerSettings = field(default_factory=OptimizerSettings)

    def __post_init__(self):
        members = tuple(self.members)
        if len(members) < 2:
            raise WaveformError("a family needs at least two members")
        first = members[0]
        for m in members[1:]:
            if (m.duration != first.duration or m.num_harmonics != first.num_harmonics
                    or m.symmetry is not first.symmetry or m.taper != first.taper):
                raise WaveformError("family members must share T, K, symmetry and taper")
        if any(m.a0 != 0.0 for m in members):
            raise WaveformError("family design assumes a0 = 0")
        if not 0.0 < self.delta <= 1.0:
            raise WaveformError(f"delta must lie in (0, 1], got {self.delta}")
        w_isr = np.asarray(self.weights_isr, dtype=float).reshape(-1)
        w_ccf = np.asarray(self.weights_ccf, dtype=float).reshape(-1)
        p = len(members)
        if w_isr.size != p or w_ccf.size != p * (p - 1) // 2:
            raise WaveformError("weight vector sizes do not match the family size")
        if np.any(w_isr < 0) or np.any(w_ccf < 0):
            raise WaveformError("weights must be nonnegative")
        total = w_isr.sum() + w_ccf.sum()
        if total <= 0:
            raise WaveformError("at least one weight must be positive")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "weights_isr", w_isr / total)
        object.__setattr__(self, "weights_ccf", w_ccf / total)

    @property
    def num_members(self) -> int:
        return len(self.members)

    @property
    def num_harmonics(self) -> int:
        return self.members[0].num_harmonics

    @property
    def pairs(self) -> List[Tuple[int, int]]:
        return pair_list(self.num_members)

    @property
    def initial_indices(self) -> np.ndarray:
        return np.stack([m.indices for m in self.members])

    def with_weights(self, weights_isr, weights_ccf) -> "FamilyDesignProblem":
        return replace(self, weights_isr=weights_isr, weights_ccf=weights_ccf)


def init_family(num_members: int, num_harmonics: int, duration: float, target_tbp: float,
                seed: int, *, delta: float = 0.2, taper: Optional[TaperSpec] = None,
                symmetry: Symmetry | str = Symmetry.EVEN, weights: str = "equal",
                init_weighting: str = "one_over_k",
                settings: Optional[OptimizerSettings] = None) -> FamilyDesignProblem:
    """Seeded random family, every member scaled to ``target_tbp``."""
    if num_members < 2 or num_harmonics < 1:
        raise WaveformError("need P >= 2 members and K >= 1 harmonics")
    rng = np.random.default_rng(seed)
    members = tuple(random_waveform(rng, num_harmonics, duration, target_tbp, symmetry,
                                    taper, init_weighting) for _ in range(num_members))
    w_isr, w_ccf = case_weights(weights, num_members)
    return FamilyDesignProblem(members, w_isr, w_ccf, delta, seed,
                               settings or OptimizerSettings())


# ---------------------------------------------------------------- evaluation

def _trapz_weights(lags: np.ndarray, start: float, stop: float) -> np.ndarray:
    """Weights ``w`` with ``w @ y == trapz`` of the linear interpolant of ``y``
    over ``[start, stop]`` on the uniform lag grid."""
    w = np.zeros(lags.size)
    step = lags[1] - lags[0]
    for i in range(lags.size - 1):
        a, b = max(lags[i], start), min(lags[i + 1], stop)
        if b <= a:
            continue
        # integral of the hat pieces on [a, b]
        ua, ub = (a - lags[i]) / step, (b - lags[i]) / step
        w[i] += step * ((ub - ua) - 0.5 * (ub ** 2 - ua ** 2))
        w[i + 1] += step * 0.5 * (ub ** 2 - ua ** 2)
    return w


class FamilyEvaluator:
    """Fast numeric objective for a fixed problem.

    Precomputes the sampling grid, harmonic phase basis, taper and the
    quadrature weights for the frozen mainlobe split of each member.
    """

    def __init__(self, problem: FamilyDesignProblem):
        self.problem = problem
        settings = problem.settings
        first = problem.members[0]
        bw = max(swept_bandwidth(m) for m in problem.members)
        # room for the bandwidth to grow by (1 + delta)
        bw *= math.sqrt(1.0 + problem.delta)
        self.grid: SamplingGrid = make_grid(first, settings.oversample, bandwidth=bw)
        n = self.grid.num_samples
        self.n = n
        self.fft_size = next_pow2(2 * n)
        t = self.grid.times
        arg = 2.0 * np.pi * np.outer(first.harmonics, t) / first.duration
        self.basis = np.sin(arg) if first.symmetry is Symmetry.EVEN else -np.cos(arg)
        amp = taper_window(first, t)
        self.amplitude = amp / math.sqrt(np.sum(amp ** 2) * self.grid.dt)
        self.lags = np.arange(n + 1) * self.grid.dt
        self.full_weights = 2.0 * _trapz_weights(self.lags, 0.0, self.lags[-1])
        self.pairs = problem.pairs
        x0 = problem.initial_indices
        self.beta0_sq = np.array([rms_bandwidth_sq(m) for m in problem.members])
        spectra = self._spectra(x0)
        acf0 = self._acf_power(spectra)
        self.tau_m = np.empty(problem.num_members)
        self.main_w, self.side_w = [], []
        for p in range(problem.num_members):
            self.tau_m[p] = self._detect_null(acf0[p])
            self.main_w.append(_trapz_weights(self.lags, 0.0, self.tau_m[p]))
            self.side_w.append(_trapz_weights(self.lags, self.tau_m[p], self.lags[-1]))
        self.main_w = np.array(self.main_w)
        self.side_w = np.array(self.side_w)
        self.isr0 = self._isr(acf0)
        self.area0 = self._areas(spectra)
        if np.any(self.isr0 <= 0) or np.any(self.area0 <= 0):
            raise WaveformError("an initial objective value is zero; cannot normalize")

    def _detect_null(self, power: np.ndarray) -> float:
        from .analysis import CorrelationKind, CorrelationResult
        delays = np.concatenate([-self.lags[:0:-1], self.lags])
        vals = np.sqrt(np.concatenate([power[:0:-1], power]))
        r = CorrelationResult(delays, vals, CorrelationKind.AUTO, self.grid.duration)
        return find_first_null(r, self.problem.settings.null_threshold_db)[0]

    # signals and correlations
    def signals(self, x: np.ndarray) -> np.ndarray:
        return self.amplitude * np.exp(1j * (np.atleast_2d(x) @ self.basis))

    def _spectra(self, x: np.ndarray) -> np.ndarray:
        return np.fft.fft(self.signals(x), self.fft_size, axis=-1)

    def _lag_power(self, cross: np.ndarray) -> np.ndarray:
        # cross = X1 * conj(X2); lag k >= 0 of sum s1[n] s2*[n+k] sits at r[-k]
        r = np.fft.ifft(cross, axis=-1)
        idx = (-np.arange(self.n + 1)) % self.fft_size
        return np.abs(r[..., idx] * self.grid.dt) ** 2

    def _acf_power(self, spectra: np.ndarray) -> np.ndarray:
        return self._lag_power(np.abs(spectra) ** 2)

    def _isr(self, acf_power: np.ndarray) -> np.ndarray:
        side = np.sum(self.side_w * acf_power, axis=-1)
        main = np.sum(self.main_w * acf_power, axis=-1)
        return side / main

    def _pair_area(self, xa: np.ndarray, xb: np.ndarray) -> np.ndarray:
        # |R_ab(-k)| = |R_ba(k)|, so the two-sided area needs both halves
        fwd = self._lag_power(xa * np.conj(xb))
        bwd = self._lag_power(xb * np.conj(xa))
        half = 0.5 * self.full_weights
        return np.sum(half * fwd, axis=-1) + np.sum(half * bwd, axis=-1)

    def _areas(self, spectra: np.ndarray) -> np.ndarray:
        return np.array([self._pair_area(spectra[a], spectra[b]) for a, b in self.pairs])

    # objectives
    def components(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Normalized ISRs (per member) and CCF areas (per pair)."""
        spectra = self._spectra(x)
        isr = self._isr(self._acf_power(spectra)) / self.isr0
        area = self._areas(spectra) / self.area0
        return isr, area

    def objective(self, x: np.ndarray) -> float:
        isr, area = self.components(x)
        return self._combine(isr, area)

    def _combine(self, isr: np.ndarray, area: np.ndarray) -> float:
        pr = self.problem
        # fixed summation order keeps results reproducible
        total = 0.0
        for w, v in zip(pr.weights_isr, isr):
            total += float(w) * float(v)
        for w, v in zip(pr.weights_ccf, area):
            total += float(w) * float(v)
        return total

    def _member_batch(self, x: np.ndarray, spectra: np.ndarray, p: int,
                      delta_phase: np.ndarray) -> np.ndarray:
        """Objective for member ``p`` perturbed by each row of ``delta_phase``."""
        base = self.signals(x[p])[0]
        pert = np.fft.fft(base[None, :] * np.exp(1j * delta_phase), self.fft_size, axis=-1)
        isr = np.empty((pert.shape[0], self.problem.num_members))
        isr_all = self._isr(self._acf_power(spectra)) / self.isr0
        isr[:] = isr_all
        isr[:, p] = self._isr_member(p, self._acf_power(pert)) / self.isr0[p]
        areas = np.empty((pert.shape[0], len(self.pairs)))
        base_areas = self._areas(spectra) / self.area0
        for j, (a, b) in enumerate(self.pairs):
            if a == p:
                areas[:, j] = self._pair_area(pert, spectra[b][None, :]) / self.area0[j]
            elif b == p:
                areas[:, j] = self._pair_area(spectra[a][None, :], pert) / self.area0[j]
            else:
                areas[:, j] = base_areas[j]
        return np.array([self._combine(isr[i], areas[i]) for i in range(pert.shape[0])])

    def _isr_member(self, p: int, acf_power: np.ndarray) -> np.ndarray:
        side = acf_power @ self.side_w[p]
        main = acf_power @ self.main_w[p]
        return side / main

    def gradient(self, x: np.ndarray, pool: Optional[ThreadPoolExecutor] = None) -> np.ndarray:
        """Central finite-difference gradient, shape ``(P, K)``."""
        h = self.problem.settings.fd_step
        spectra = self._spectra(x)
        K = x.shape[1]
        steps = h * self.basis

        def one(p: int) -> np.ndarray:
            vals = self._member_batch(x, spectra, p, np.concatenate([steps, -steps]))
            return (vals[:K] - vals[K:]) / (2.0 * h)

        members = range(x.shape[0])
        rows = list(pool.map(one, members)) if pool is not None else [one(p) for p in members]
        return np.stack(rows)

    # constraints
    def beta_sq(self, x: np.ndarray) -> np.ndarray:
        first = self.problem.members[0]
        k = first.harmonics
        return 2.0 * np.pi ** 2 / first.duration ** 2 * np.sum((k * x) ** 2, axis=-1)

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """``(P, 2)`` residuals ``[(1-d) b0 - b, b - (1+d) b0]``; ``<= 0`` is feasible."""
        b = self.beta_sq(x)
        d = self.problem.delta
        return np.stack([(1.0 - d) * self.beta0_sq - b, b - (1.0 + d) * self.beta0_sq], axis=1)

    def project_gradient(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Drop the outward normal part of ``g`` for members on a bandwidth bound."""
        b = self.beta_sq(x)
        d = self.problem.delta
        lo, hi = (1.0 - d) * self.beta0_sq, (1.0 + d) * self.beta0_sq
        k = self.problem.members[0].harmonics
        out = g.copy()
        for p in range(x.shape[0]):
            normal = k ** 2 * x[p]
            nn = float(normal @ normal)
            if nn == 0.0:
                continue
            along = float(g[p] @ normal)
            # descent (-g) leaves through the upper bound when g.n < 0
            at_hi = b[p] >= hi[p] * (1.0 - 1e-9) and along < 0.0
            at_lo = b[p] <= lo[p] * (1.0 + 1e-9) and along > 0.0
            if at_hi or at_lo:
                out[p] = g[p] - along / nn * normal
        return out

    def retract(self, x: np.ndarray) -> np.ndarray:
        """Rescale each member radially into its feasible bandwidth shell."""
        b = self.beta_sq(x)
        d = self.problem.delta
        lo, hi = (1.0 - d) * self.beta0_sq, (1.0 + d) * self.beta0_sq
        target = np.clip(b, lo, hi)
        return x * np.sqrt(target / b)[:, None]


def constraint_residuals(problem: FamilyDesignProblem, candidate: np.ndarray) -> np.ndarray:
    """Per-member ``(lower, upper)`` RMS-bandwidth residuals; ``<= 0`` is feasible."""
    x = np.atleast_2d(np.asarray(candidate, dtype=float))
    beta0 = np.array([rms_bandwidth_sq(m) for m in problem.members])
    beta = np.array([rms_bandwidth_sq(m.with_indices(row))
                     for m, row in zip(problem.members, x)])
    d = problem.delta
    return np.stack([(1.0 - d) * beta0 - beta, beta - (1.0 + d) * beta0], axis=1)


def family_objective(problem: FamilyDesignProblem, candidate: np.ndarray,
                     evaluator: Optional[FamilyEvaluator] = None) -> float:
    ev = evaluator or FamilyEvaluator(problem)
    return ev.objective(np.atleast_2d(np.asarray(candidate, dtype=float)))


# ---------------------------------------------------------------- solver

@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    objective: float
    isr_normalized: Tuple[float, ...]
    ccf_normalized: Tuple[float, ...]
    residuals: Tuple[Tuple[float, float], ...]
    step_norm: float
    line_search: Tuple[float, ...]


@dataclass(eq=False)
class OptimizationTrace:
    problem: FamilyDesignProblem
    records: List[IterationRecord]
    initial_indices: np.ndarray
    final_indices: np.ndarray
    converged: bool
    evaluations: int
    restart: int = 0
    initial_metrics: List[MetricsReport] = field(default_factory=list)
    final_metrics: List[MetricsReport] = field(default_factory=list)

    @property
    def final_objective(self) -> float:
        return self.records[-1].objective

    @property
    def final_members(self) -> Tuple[WaveformParams, ...]:
        return tuple(m.with_indices(x) for m, x in zip(self.problem.members, self.final_indices))


def _record(ev: FamilyEvaluator, it: int, x: np.ndarray, step: float,
            trials: Sequence[float]) -> IterationRecord:
    isr, area = ev.components(x)
    res = ev.residuals(x)
    return IterationRecord(it, ev._combine(isr, area), tuple(map(float, isr)),
                           tuple(map(float, area)),
                           tuple((float(a), float(b)) for a, b in res), float(step),
                           tuple(map(float, trials)))


def _solve(ev: FamilyEvaluator, x0: np.ndarray, pool) -> Tuple[np.ndarray, List[IterationRecord], bool, int]:
    s = ev.problem.settings
    shape = x0.shape
    x = ev.retract(x0)
    f = ev.objective(x)
    evals = 1
    records = [_record(ev, 0, x, 0.0, ())]
    g = ev.project_gradient(x, ev.gradient(x, pool)).ravel()
    evals += 2 * x.size
    # initial inverse-Hessian scale: first step moves indices by ~1% of their rms
    scale = 0.01 * float(np.sqrt(np.mean(x ** 2))) / max(float(np.linalg.norm(g)), 1e-300)
    h_inv = np.eye(x.size) * scale
    history = [f]
    converged = False
    for it in range(1, s.max_iter + 1):
        d = -h_inv @ g
        if g @ d >= 0.0:
            h_inv = np.eye(x.size) * scale
            d = -h_inv @ g
        t = 1.0
        trials = []
        accepted = False
        for _ in range(s.max_backtracks):
            x_new = ev.retract((x.ravel() + t * d).reshape(shape))
            f_new = ev.objective(x_new)
            evals += 1
            trials.append(f_new)
            step = x_new.ravel() - x.ravel()
            if np.isfinite(f_new) and f_new <= f + 1e-4 * float(g @ step) and f_new < f:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if not np.allclose(h_inv, np.eye(x.size) * scale):
                # stale curvature: retry from steepest descent
                h_inv = np.eye(x.size) * scale
                continue
            converged = True
            records.append(_record(ev, it, x, 0.0, trials))
            break
        g_new = ev.project_gradient(x_new, ev.gradient(x_new, pool)).ravel()
        evals += 2 * x.size
        y = g_new - g
        sy = float(step @ y)
        if sy > 1e-12 * float(np.linalg.norm(step) * np.linalg.norm(y)):
            rho = 1.0 / sy
            hy = h_inv @ y
            h_inv = (h_inv - rho * (np.outer(step, hy) + np.outer(hy, step))
                     + (rho * rho * float(y @ hy) + rho) * np.outer(step, step))
        x, f, g = x_new, f_new, g_new
        records.append(_record(ev, it, x, float(np.linalg.norm(step)), trials))
        history.append(f)
        if len(history) > s.stall_iters:
            old = history[-1 - s.stall_iters]
            if old - f <= s.ftol * abs(old):
                converged = True
                break
    return x, records, converged, evals


def optimize_family(problem: FamilyDesignProblem) -> OptimizationTrace:
    """Minimize the weighted family objective under the bandwidth constraints.

    Returns the best run over ``settings.restarts`` starts. Restart 0 begins at
    the problem's initial point; later restarts perturb it with seeded noise.
    The ``converged`` flag is False when the iteration cap was hit.
    """
    s = problem.settings
    ev = FamilyEvaluator(problem)
    x_init = problem.initial_indices
    best: Optional[OptimizationTrace] = None
    pool = ThreadPoolExecutor(max_workers=s.threads) if s.threads > 1 else None
    try:
        for r in range(max(1, s.restarts)):
            start = x_init
            if r > 0:
                rng = np.random.default_rng([problem.seed, r])
                rms = np.sqrt(np.mean(x_init ** 2, axis=1, keepdims=True))
                start = x_init + s.restart_scale * rms * rng.standard_normal(x_init.shape)
            x, records, converged, evals = _solve(ev, start, pool)
            log.info("restart %d: F=%.6f after %d iterations", r, records[-1].objective,
                     records[-1].iteration)
            trace = OptimizationTrace(problem, records, x_init.copy(), x, converged, evals, r)
            if best is None or trace.final_objective < best.final_objective:
                best = trace
    finally:
        if pool is not None:
            pool.shutdown()
    assert best is not None
    best.initial_metrics = family_metrics(problem.members, ev.grid)
    best.final_metrics = family_metrics(best.final_members, ev.grid)
    return best


def family_metrics(members: Sequence[WaveformParams], grid: SamplingGrid) -> List[MetricsReport]:
    """Per-member reports; ``ccf_area`` is against the next member (cyclically)."""
    waves = [synthesize(m, grid) for m in members]
    return [metrics_report(w, waves[(i + 1) % len(waves)]) for i, w in enumerate(waves)]
