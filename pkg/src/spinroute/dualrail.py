"""Conclusive transfer over two disordered chains (dual-rail encoding).

The logical qubit a|0> + b|1> is written as a|1,0> + b|0,1> on the first
sites of two chains.  The b-branch lives on chain 1 and the a-branch on
chain 2.  At a time where both branches have the same amplitude magnitude on
the last site, the receiver checks whether the excitation has arrived.  On
success the qubit is recovered up to a known relative phase; on failure both
branches lose their last-site amplitude and evolution continues.

The receiver's CNOT plus single-qubit measurement is modelled as the
projective measurement of "excitation on site N of either chain", which is
what it implements on the single-excitation space.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .network import Coupling, SpinNetwork, build_uniform_chain
from .sector import SectorHamiltonian, sector_hamiltonian

MAX_EPSILON = 0.2


@dataclass(frozen=True)
class DualRailSystem:
    n: int
    epsilon: float
    seed: int
    delta1: tuple[float, ...]
    delta2: tuple[float, ...]
    chain1: SpinNetwork = field(repr=False)
    chain2: SpinNetwork = field(repr=False)
    h1: SectorHamiltonian = field(repr=False, compare=False)
    h2: SectorHamiltonian = field(repr=False, compare=False)

    def endpoint_amplitudes(self, t: float) -> tuple[complex, complex]:
        return endpoint_amplitudes(self, t)


def _disordered_chain(n: int, delta: np.ndarray) -> SpinNetwork:
    base = build_uniform_chain(n)
    couplings = tuple(Coupling(k, k + 1, 1.0 + float(d)) for k, d in enumerate(delta))
    return replace(base, couplings=couplings)


def build_dual_rail(n: int, epsilon: float, seed: int = 0, chain: SpinNetwork | None = None) -> DualRailSystem:
    """Two chains with couplings 1 + delta, delta uniform on [-epsilon, epsilon].

    Both draws come from one ``numpy.random.default_rng(seed)`` stream (chain 1
    first).  The realized deltas are kept on the system and written into run
    documents, so a document pins the disorder even if the generator changes.
    ``chain`` replaces the uniform base chain for the noiseless case.
    """
    if n < 2:
        raise ValueError(f"chain length must be >= 2, got {n}")
    if not 0 <= epsilon <= MAX_EPSILON:
        raise ValueError(f"epsilon must be in [0, {MAX_EPSILON}], got {epsilon}")
    rng = np.random.default_rng(seed)
    d1 = rng.uniform(-epsilon, epsilon, n - 1)
    d2 = rng.uniform(-epsilon, epsilon, n - 1)
    if epsilon == 0:
        d1 = d2 = np.zeros(n - 1)
    if chain is not None:
        if epsilon != 0 or chain.n_sites != n:
            raise ValueError("a custom chain is only used noiselessly and must have n sites")
        c1 = c2 = chain
    else:
        c1, c2 = _disordered_chain(n, d1), _disordered_chain(n, d2)
    h1 = sector_hamiltonian(c1)
    h2 = h1 if c2 is c1 else sector_hamiltonian(c2)
    return DualRailSystem(n, float(epsilon), int(seed), tuple(map(float, d1)), tuple(map(float, d2)), c1, c2, h1, h2)


class _EndSignal:
    """t -> (e^{-iH(t - t0)} vec)_N with the spectral weights computed once."""

    def __init__(self, h: SectorHamiltonian, vec: np.ndarray, t0: float = 0.0):
        v = h.eigenvectors
        self.w = h.eigenvalues
        self.weights = v[-1, :] * (v.conj().T @ vec)
        self.t0 = t0
        self.speed = float(np.sum(np.abs(self.w * self.weights)))

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float) - self.t0
        if t_arr.ndim == 0:
            return complex(np.dot(self.weights, np.exp(-1j * self.w * float(t_arr))))
        return np.exp(-1j * np.outer(t_arr, self.w)) @ self.weights


def endpoint_amplitudes(sys: DualRailSystem, t: float) -> tuple[complex, complex]:
    """(f_N(t), g_N(t)) = (<N|e^{-iH1 t}|1>, <N|e^{-iH2 t}|1>)."""
    e1 = np.zeros(sys.n, dtype=complex)
    e1[0] = 1.0
    return _EndSignal(sys.h1, e1)(t), _EndSignal(sys.h2, e1)(t)


@dataclass(frozen=True)
class DualRailState:
    """Unnormalized branch vectors at ``time``; weights already lost to failed checks are gone."""

    alpha: complex
    beta: complex
    fvec: np.ndarray  # b-branch on chain 1
    gvec: np.ndarray  # a-branch on chain 2
    time: float = 0.0

    @property
    def survival(self) -> float:
        return abs(self.alpha) ** 2 * _norm2(self.gvec) + abs(self.beta) ** 2 * _norm2(self.fvec)


def _norm2(v: np.ndarray) -> float:
    return float(np.vdot(v, v).real)


def initial_state(sys: DualRailSystem, alpha: complex = 1 / math.sqrt(2), beta: complex = 1 / math.sqrt(2)) -> DualRailState:
    if abs(abs(alpha) ** 2 + abs(beta) ** 2 - 1) > 1e-12:
        raise ValueError("input qubit must be normalized")
    e1 = np.zeros(sys.n, dtype=complex)
    e1[0] = 1.0
    return DualRailState(complex(alpha), complex(beta), e1, e1.copy(), 0.0)


@dataclass(frozen=True)
class DecodeTime:
    t: float
    abs_f: float
    abs_g: float
    phase: float  # g_N = e^{i phase} f_N


def find_decode_times(
    sys: DualRailSystem,
    window: tuple[float, float],
    grid: int = 2000,
    state: DualRailState | None = None,
    limit: int | None = None,
) -> list[DecodeTime]:
    """Times in ``window`` where both branches have equal end-site magnitude.

    Sign changes of |f_N| - |g_N| on the grid are refined with Brent's method.
    Where the difference vanishes on the grid itself (identical chains) every
    point qualifies, so only local peaks of the common magnitude are kept,
    each refined to the nearby maximum.  Results are ordered by
    min(|f_N|, |g_N|), largest first.

    With ``limit`` only the best ``limit`` times are returned.  Crossings are
    then refined in order of a Lipschitz upper bound on the common magnitude
    and the search stops once no unrefined interval can beat them, so the
    result equals the head of the full list.
    """
    if state is None:
        state = initial_state(sys)
    lo, hi = map(float, window)
    if not hi > lo:
        raise ValueError(f"empty window ({lo}, {hi})")
    f_end = _EndSignal(sys.h1, state.fvec, state.time)
    g_end = _EndSignal(sys.h2, state.gvec, state.time)

    def gap(t):
        return abs(f_end(t)) - abs(g_end(t))

    def neg_common(t):
        return -min(abs(f_end(t)), abs(g_end(t)))

    ts = np.linspace(lo, hi, grid)
    f, g = f_end(ts), g_end(ts)
    diff = np.abs(f) - np.abs(g)
    common = np.minimum(np.abs(f), np.abs(g))
    exact = np.abs(diff) <= 1e-13
    found = []

    # equal magnitudes on the grid itself (identical chains): keep the refined local peaks
    for i in np.nonzero(exact)[0]:
        left, right = max(i - 1, 0), min(i + 1, grid - 1)
        if common[i] < common[left] or common[i] < common[right]:
            continue
        res = minimize_scalar(neg_common, bounds=(ts[left], ts[right]), method="bounded", options={"xatol": 1e-12})
        t_peak = float(res.x)
        if abs(gap(t_peak)) > 1e-13 or -res.fun < common[i]:
            t_peak = float(ts[i])
        found.append(t_peak)

    def decode(t: float) -> DecodeTime:
        fn, gn = f_end(t), g_end(t)
        phase = float(np.angle(gn / fn)) if abs(fn) > 0 else 0.0
        return DecodeTime(t, abs(fn), abs(gn), phase)

    def rank(d: DecodeTime):
        return (-min(d.abs_f, d.abs_g), d.t)

    out = [decode(t) for t in found]
    crossing = np.nonzero((np.sign(diff[:-1]) != np.sign(diff[1:])) & ~exact[:-1] & ~exact[1:])[0]
    if limit is None:
        order, bound = crossing, None
    else:
        # |d/dt A| <= sum |w_k a_k| bounds how far min(|f|, |g|) can rise inside a grid cell
        slope = max(f_end.speed, g_end.speed)
        step = ts[1] - ts[0]
        bound = 0.5 * (common[crossing] + common[crossing + 1] + slope * step)
        order = crossing[np.argsort(-bound, kind="stable")]
        bound = np.sort(bound)[::-1]
    for k, i in enumerate(order):
        if bound is not None and len(out) >= limit:
            out.sort(key=rank)
            if min(out[limit - 1].abs_f, out[limit - 1].abs_g) > bound[k]:
                break
        t = float(brentq(gap, ts[i], ts[i + 1], xtol=1e-13, rtol=4 * np.finfo(float).eps))
        out.append(decode(t))
    out.sort(key=rank)
    return out if limit is None else out[:limit]


@dataclass(frozen=True)
class Attempt:
    t: float
    p_success: float  # for the run's input qubit
    p_average: float  # averaged over the Bloch sphere
    p_worst: float  # worst case over inputs
    cumulative: float
    phase: float
    ratio_error: float  # | |g_N|/|f_N| - 1 | at the attempt


def measure_attempt(state: DualRailState, sys: DualRailSystem, t: float) -> tuple[Attempt, DualRailState]:
    """Evolve both branches to ``t`` and check for the excitation on site N.

    Returns the attempt record (probabilities are unconditional, i.e. for this
    attempt given all previous ones may have failed) and the failure branch.
    """
    if t < state.time:
        raise ValueError(f"attempt time {t} precedes the current time {state.time}")
    dt = t - state.time
    w1, v1 = sys.h1.eigenvalues, sys.h1.eigenvectors
    w2, v2 = sys.h2.eigenvalues, sys.h2.eigenvectors
    f = v1 @ (np.exp(-1j * w1 * dt) * (v1.conj().T @ state.fvec))
    g = v2 @ (np.exp(-1j * w2 * dt) * (v2.conj().T @ state.gvec))
    fn, gn = f[-1], g[-1]
    a2, b2 = abs(state.alpha) ** 2, abs(state.beta) ** 2
    p = a2 * abs(gn) ** 2 + b2 * abs(fn) ** 2
    p_avg = 0.5 * (abs(gn) ** 2 + abs(fn) ** 2)
    p_worst = min(abs(gn), abs(fn)) ** 2
    f = f.copy()
    g = g.copy()
    f[-1] = 0.0
    g[-1] = 0.0
    posterior = DualRailState(state.alpha, state.beta, f, g, float(t))
    ratio_error = abs(abs(gn) / abs(fn) - 1) if abs(fn) > 0 else math.inf
    attempt = Attempt(
        t=float(t),
        p_success=float(p),
        p_average=float(p_avg),
        p_worst=float(p_worst),
        cumulative=float(1.0 - posterior.survival),
        phase=float(np.angle(gn / fn)) if abs(fn) > 0 else 0.0,
        ratio_error=float(ratio_error),
    )
    return attempt, posterior


@dataclass
class AttemptLog:
    attempts: list[Attempt]
    outcome: str  # "success" or "exhausted"
    success_time: float | None
    max_bookkeeping_error: float

    @property
    def cumulative(self) -> float:
        return self.attempts[-1].cumulative if self.attempts else 0.0


def run_protocol(
    sys: DualRailSystem,
    max_attempts: int = 500,
    target_cumulative: float = 0.99,
    window_length: float | None = None,
    grid: int = 2000,
    alpha: complex = 1 / math.sqrt(2),
    beta: complex = 1 / math.sqrt(2),
) -> AttemptLog:
    """Measure at the best decode time of each successive window until the target is met.

    The window after each attempt starts one grid step later and spans
    ``window_length`` (10 n by default); windows without a decode time are
    skipped.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    if not 0 < target_cumulative < 1:
        raise ValueError("target_cumulative must be in (0, 1)")
    if window_length is None:
        window_length = 10.0 * sys.n
    step = window_length / (grid - 1)
    state = initial_state(sys, alpha, beta)
    attempts: list[Attempt] = []
    worst = 0.0
    start = 0.0
    empty_windows = 0
    while len(attempts) < max_attempts:
        candidates = find_decode_times(sys, (start + step, start + step + window_length), grid, state, limit=1)
        candidates = [c for c in candidates if min(c.abs_f, c.abs_g) > 1e-12]
        if not candidates:
            empty_windows += 1
            start += window_length
            if empty_windows > 1000:
                break
            continue
        best = candidates[0]
        before = state.survival
        attempt, state = measure_attempt(state, sys, best.t)
        worst = max(worst, abs(attempt.p_success + state.survival - before))
        attempts.append(attempt)
        start = best.t
        if attempt.cumulative >= target_cumulative:
            return AttemptLog(attempts, "success", attempt.t, worst)
    return AttemptLog(attempts, "exhausted", None, worst)


def run_document(sys: DualRailSystem, log: AttemptLog) -> dict:
    return {
        "n": sys.n,
        "epsilon": sys.epsilon,
        "seed": sys.seed,
        "delta1": list(sys.delta1),
        "delta2": list(sys.delta2),
        "attempts": [
            {
                "t": a.t,
                "p": a.p_success,
                "p_average": a.p_average,
                "p_worst": a.p_worst,
                "cumulative": a.cumulative,
                "phase": a.phase,
            }
            for a in log.attempts
        ],
        "outcome": log.outcome,
        "success_time": log.success_time,
        "attempt_count": len(log.attempts),
        "max_bookkeeping_error": log.max_bookkeeping_error,
    }


def _one_seed(args) -> dict:
    n, epsilon, seed, max_attempts, target = args
    sys = build_dual_rail(n, epsilon, seed)
    return run_document(sys, run_protocol(sys, max_attempts, target))


def run_ensemble(
    n: int,
    epsilon: float,
    seeds,
    max_attempts: int = 500,
    target_cumulative: float = 0.99,
    workers: int | None = None,
) -> dict:
    """Independent protocol runs over ``seeds``, results in seed order, plus count quantiles."""
    seeds = sorted(int(s) for s in seeds)
    jobs = [(n, epsilon, s, max_attempts, target_cumulative) for s in seeds]
    if workers is None:
        workers = int(os.environ.get("SPINROUTE_WORKERS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_one_seed, jobs))
    else:
        runs = [_one_seed(j) for j in jobs]
    counts = np.array([r["attempt_count"] for r in runs])
    reached = [r["outcome"] == "success" for r in runs]
    return {
        "n": n,
        "epsilon": epsilon,
        "target": target_cumulative,
        "max_attempts": max_attempts,
        "seeds": seeds,
        "attempt_counts": counts.tolist(),
        "all_reached_target": all(reached),
        "quantiles": {
            key: float(np.quantile(counts, q)) for key, q in (("q05", 0.05), ("median", 0.5), ("q95", 0.95))
        },
        "histogram": {str(k): int(v) for k, v in zip(*np.unique(counts, return_counts=True))},
        "runs": runs,
    }


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1, sort_keys=False) + "\n"
