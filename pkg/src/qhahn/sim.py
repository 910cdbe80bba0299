"""Event-driven continuous-time simulation of the q-Hahn exclusion process
(step or product-measure initial data) and the finite-particle zero-range
process, with trial-level parallelism and counter-based reproducibility.

One trial is strictly single-threaded; trials are independent Philox streams
keyed by (master seed, trial index) so results are bitwise reproducible under
any thread count.  The event loop lives in _kernels (numba).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .model import (
    ModelParams,
    phi_left,
    phi_right,
    total_rate_left,
    total_rate_right,
)
from .qspecial import INFINITY, DomainError, q_pochhammer

FRONTIER_MARGIN = 25
GAP_CACHE = 64


class FrontierMarginError(RuntimeError):
    """The packed-tail safety margin was violated; rerun with doubled N."""


@dataclass
class ExclusionState:
    """Ordered particle positions x_1 > x_2 > ... (positions[0] is x_1).

    The lead particle's right gap is +infinity; below positions[-1] the
    configuration is implicitly packed (a frozen step tail), which the
    frontier margin certifies as unfelt.
    """

    positions: np.ndarray
    params: ModelParams
    time: float = 0.0
    frontier_index: int = 0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.int64)
        d = np.diff(self.positions)
        if len(d) and d.max() >= 0:
            raise DomainError("exclusion state needs strictly decreasing positions")

    @property
    def n_particles(self) -> int:
        return len(self.positions)

    def gaps(self) -> np.ndarray:
        """Gaps below each particle: x_i - x_{i+1} - 1, length N-1."""
        return self.positions[:-1] - self.positions[1:] - 1


@dataclass
class ZrpState:
    """Zero-range occupations by site; site 0 never emits."""

    occupation: np.ndarray
    params: ModelParams
    time: float = 0.0

    def __post_init__(self):
        self.occupation = np.asarray(self.occupation, dtype=np.int64)
        if (self.occupation < 0).any():
            raise DomainError("occupation numbers must be >= 0")

    @property
    def n_particles(self) -> int:
        return int(self.occupation.sum())

    def ordered_coordinates(self) -> tuple:
        """Weyl-chamber coordinates n_1 >= ... >= n_k of the occupations."""
        out = []
        for site in range(len(self.occupation) - 1, -1, -1):
            out.extend([site] * int(self.occupation[site]))
        return tuple(out)

    @classmethod
    def from_coordinates(cls, coords, params: ModelParams, n_sites: int | None = None):
        coords = tuple(int(c) for c in coords)
        if any(c < 0 for c in coords):
            raise DomainError("Weyl coordinates must be >= 0")
        size = (max(coords) + 1) if coords else 1
        if n_sites is not None:
            size = max(size, n_sites)
        occ = np.zeros(size, dtype=np.int64)
        for c in coords:
            occ[c] += 1
        return cls(occupation=occ, params=params)


@dataclass(frozen=True)
class Observers:
    """Observation request: sample at `times` the positions of `tracked`
    particles (1-based indices) and optionally the full configuration."""

    times: tuple = ()
    tracked: tuple = ()
    full: bool = False

    def sorted_times(self) -> np.ndarray:
        t = np.asarray(self.times, dtype=float)
        if len(t) and (np.diff(t) <= 0).any():
            raise DomainError("observation times must be strictly increasing")
        return t


@dataclass
class TrajectoryRecord:
    """Sampled observations plus end-state bookkeeping for audits."""

    times: np.ndarray
    tracked: tuple
    positions: np.ndarray          # (n_obs, n_tracked)
    full_configs: np.ndarray | None
    n_events: int
    final_state: ExclusionState | ZrpState
    rate_right: np.ndarray | None = None
    rate_left: np.ndarray | None = None
    rate_site: np.ndarray | None = None

    def q_observable(self, column: int = 0) -> np.ndarray:
        """q^{x_n + n} for the tracked particle in the given column."""
        n = self.tracked[column]
        q = self.final_state.params.q
        return q ** (self.positions[:, column].astype(float) + n)


@dataclass(frozen=True)
class RateTables:
    """Cumulative jump-size menus per gap (<= GAP_CACHE) plus the infinite
    right menu of the lead particle, all derived from the model rates."""

    cumR: np.ndarray
    totR: np.ndarray
    cumL: np.ndarray
    totL: np.ndarray
    cumRinf: np.ndarray
    totRinf: float


_TABLE_CACHE: dict = {}


def rate_tables(p: ModelParams, left_rate_scale: float = 1.0) -> RateTables:
    key = (p.q, p.nu, p.R, p.L, left_rate_scale)
    hit = _TABLE_CACHE.get(key)
    if hit is not None:
        return hit
    gc = GAP_CACHE
    cumR = np.zeros((gc + 1, gc))
    cumL = np.zeros((gc + 1, gc))
    totR = np.zeros(gc + 1)
    totL = np.zeros(gc + 1)
    for m in range(1, gc + 1):
        accR = accL = 0.0
        for j in range(1, m + 1):
            accR += phi_right(p, j, m)
            accL += phi_left(p, j, m) * left_rate_scale
            cumR[m, j - 1] = accR
            cumL[m, j - 1] = accL
        cumR[m, m:] = accR
        cumL[m, m:] = accL
        totR[m] = accR
        totL[m] = accL
    # infinite right menu: truncate when the remaining mass is < 1e-16 of total
    tot_inf = total_rate_right(p, INFINITY)
    menu = []
    acc = 0.0
    j = 1
    while True:
        acc += phi_right(p, j, INFINITY)
        menu.append(acc)
        if p.nu == 0.0 or tot_inf - acc < 1e-16 * tot_inf:
            break
        j += 1
        if j > 100_000:
            raise DomainError("infinite right menu did not truncate")
    tables = RateTables(cumR=cumR, totR=totR, cumL=cumL, totL=totL,
                        cumRinf=np.array(menu), totRinf=tot_inf)
    _TABLE_CACHE[key] = tables
    return tables


def trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    """Counter-based per-trial stream: Philox keyed by (master seed, trial)."""
    key = np.array([np.uint64(master_seed & (2**64 - 1)), np.uint64(trial)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def step_initial(p: ModelParams, N: int) -> ExclusionState:
    """Step initial data x_n(0) = -n for the first N particles."""
    if N < 1:
        raise DomainError("need at least one particle")
    return ExclusionState(positions=-np.arange(1, N + 1, dtype=np.int64), params=p)


def stationary_gap_pmf(p: ModelParams, alpha: float, tail: float = 1e-12) -> np.ndarray:
    """P(gap = m) = alpha^m (nu;q)_m/(q;q)_m * (alpha;q)_inf/(alpha nu;q)_inf,
    truncated once the remaining geometric mass is below `tail`."""
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0,1), got {alpha}")
    norm = (q_pochhammer(alpha, p.q).real
            / q_pochhammer(alpha * p.nu, p.q).real)
    w = []
    coef = 1.0  # (nu;q)_m / (q;q)_m, built multiplicatively
    m = 0
    am = 1.0
    while True:
        w.append(am * coef * norm)
        # tail: remaining mass <= C * alpha^{m+1}/(1-alpha) with C bounded
        bound = am * alpha / (1.0 - alpha) * coef * norm * 2.0
        if bound < tail and m >= 2:
            break
        coef *= (1.0 - p.nu * p.q**m) / (1.0 - p.q ** (m + 1))
        am *= alpha
        m += 1
        if m > 1_000_000:
            raise DomainError("gap pmf did not truncate")
    return np.array(w)


def stationary_initial(p: ModelParams, alpha: float, N: int,
                       seed: int | np.random.Generator = 0) -> ExclusionState:
    """Product-measure initial data: i.i.d. gaps from the stationary law,
    first particle at the origin."""
    rng = seed if isinstance(seed, np.random.Generator) else trial_rng(seed, 0)
    pmf = stationary_gap_pmf(p, alpha)
    cdf = np.cumsum(pmf)
    cdf /= cdf[-1]
    gaps = np.searchsorted(cdf, rng.random(N - 1), side="right")
    pos = np.empty(N, dtype=np.int64)
    pos[0] = 0
    np.cumsum(-(gaps + 1), out=pos[1:])
    return ExclusionState(positions=pos, params=p)


def default_particle_count(p: ModelParams, t_end: float) -> int:
    return int(math.ceil(2.0 * (p.R - p.L + 1.0) * t_end)) + 100


def evolve_aep(state: ExclusionState, p: ModelParams, t_end: float,
               observers: Observers | None = None, *,
               rng: np.random.Generator | None = None, seed: int = 0,
               margin: int | None = FRONTIER_MARGIN,
               left_rate_scale: float = 1.0,
               rebuild_every: int = 1 << 20) -> TrajectoryRecord:
    """Exact-in-law Gillespie evolution of the exclusion state to t_end.

    Mutates `state` (positions, time, frontier_index) and returns the
    observation record.  margin=None disables the packed-tail abort (for
    product-measure data, which has no packed tail); a violated margin
    raises FrontierMarginError and the runner reruns with doubled N.
    """
    if t_end < state.time:
        raise DomainError("t_end must be >= state.time")
    obs = observers or Observers()
    obs_times = obs.sorted_times()
    tracked = np.array([i - 1 for i in obs.tracked], dtype=np.int64)
    if len(tracked) and (tracked.min() < 0 or tracked.max() >= state.n_particles):
        raise DomainError("tracked particle index outside the simulated range")
    out_tracked = np.zeros((len(obs_times), len(tracked)), dtype=np.int64)
    out_full = np.zeros((len(obs_times), state.n_particles if obs.full else 0),
                        dtype=np.int64)
    tab = rate_tables(p, left_rate_scale)
    rng = rng or trial_rng(seed, 0)
    N = state.n_particles
    rate_r = np.zeros(N)
    rate_l = np.zeros(N)
    tree = np.zeros(N + 1)
    scratch = np.zeros(K.SCRATCH_CAP)

    status, t_fin, frontier, n_events = K.aep_run(
        state.positions, state.time, float(t_end), state.frontier_index,
        -1 if margin is None else int(margin), rng,
        tab.cumR, tab.totR, tab.cumL, tab.totL, tab.cumRinf, tab.totRinf,
        p.q, p.nu, p.R, p.L * left_rate_scale,
        obs_times, tracked, out_tracked, bool(obs.full), out_full,
        rate_r, rate_l, tree, scratch, rebuild_every,
    )
    state.time = t_fin
    state.frontier_index = int(frontier)
    if status == K.STATUS_MARGIN:
        raise FrontierMarginError(
            f"frontier reached particle {frontier + 1} of {N} at t={t_fin:.4g} "
            f"(margin {margin}); rerun with doubled N"
        )
    if status == K.STATUS_SCRATCH:
        raise DomainError(f"a gap exceeded the menu cap {K.SCRATCH_CAP}")
    return TrajectoryRecord(
        times=obs_times, tracked=obs.tracked, positions=out_tracked,
        full_configs=out_full if obs.full else None,
        n_events=int(n_events), final_state=state,
        rate_right=rate_r, rate_left=rate_l,
    )


def evolve_azrp(state: ZrpState, p: ModelParams, t_end: float,
                observers: Observers | None = None, *,
                rng: np.random.Generator | None = None, seed: int = 0,
                rebuild_every: int = 1 << 20) -> TrajectoryRecord:
    """Exact-in-law evolution of the zero-range occupations to t_end.

    Observation records store full occupation vectors (sites are few); the
    `tracked`/positions fields of the record hold site occupancies for
    tracked site indices (0-based sites here, matching occupation indexing).
    """
    if t_end < state.time:
        raise DomainError("t_end must be >= state.time")
    obs = observers or Observers()
    obs_times = obs.sorted_times()
    S = len(state.occupation)
    out_occ = np.zeros((len(obs_times), S), dtype=np.int64)
    tab = rate_tables(p)
    rng = rng or trial_rng(seed, 0)
    rate_site = np.zeros(S)
    tree = np.zeros(S + 1)
    scratch = np.zeros(K.SCRATCH_CAP)

    status, t_fin, n_events = K.azrp_run(
        state.occupation, state.time, float(t_end), rng,
        tab.cumR, tab.totR, tab.cumL, tab.totL,
        p.q, p.nu, p.R, p.L,
        obs_times, out_occ,
        rate_site, tree, scratch, rebuild_every,
    )
    state.time = t_fin
    if status == K.STATUS_WINDOW:
        raise DomainError("zero-range site window exceeded; enlarge n_sites")
    if status == K.STATUS_SCRATCH:
        raise DomainError(f"an occupancy exceeded the menu cap {K.SCRATCH_CAP}")
    tracked_sites = tuple(obs.tracked)
    positions = (out_occ[:, list(tracked_sites)]
                 if tracked_sites else np.zeros((len(obs_times), 0), dtype=np.int64))
    return TrajectoryRecord(
        times=obs_times, tracked=tracked_sites, positions=positions,
        full_configs=out_occ, n_events=int(n_events), final_state=state,
        rate_site=rate_site,
    )


def audit_rates(record: TrajectoryRecord, left_rate_scale: float = 1.0) -> float:
    """Max relative deviation between the kernel-maintained exit rates and a
    full Python rebuild from the model definitions."""
    st = record.final_state
    p = st.params
    if isinstance(st, ExclusionState):
        pos = st.positions
        N = len(pos)
        worst = 0.0
        for i in range(N):
            rr = (total_rate_right(p, INFINITY) if i == 0
                  else total_rate_right(p, int(pos[i - 1] - pos[i] - 1)))
            rl = (total_rate_left(p, int(pos[i] - pos[i + 1] - 1)) * left_rate_scale
                  if i < N - 1 else 0.0)
            for got, ref in ((record.rate_right[i], rr), (record.rate_left[i], rl)):
                scale = max(abs(ref), 1e-12)
                worst = max(worst, abs(got - ref) / scale)
        return worst
    occ = st.occupation
    worst = 0.0
    for i, y in enumerate(occ):
        ref = 0.0 if (i == 0 or y == 0) else (
            total_rate_right(p, int(y)) + total_rate_left(p, int(y)))
        scale = max(abs(ref), 1e-12)
        worst = max(worst, abs(record.rate_site[i] - ref) / scale)
    return worst


def eq_laplace_observable(state: ExclusionState, zeta: complex, n: int) -> complex:
    """1/(zeta q^{x_n + n}; q)_inf for particle n of the state."""
    if not (1 <= n <= state.n_particles):
        raise DomainError(f"particle {n} not simulated (N={state.n_particles})")
    q = state.params.q
    x = int(state.positions[n - 1])
    arg = zeta * q ** (x + n)
    poch = q_pochhammer(arg, q, INFINITY)
    if abs(poch) < 1e-300:
        raise DomainError("e_q-Laplace observable hit a lattice zero")
    return 1.0 / poch


def run_step_trials(p: ModelParams, t_end: float, trials: int, seed: int,
                    reducer, *, N: int | None = None, threads: int = 1,
                    observers: Observers | None = None,
                    left_rate_scale: float = 1.0,
                    margin: int = FRONTIER_MARGIN):
    """Run `trials` independent step-data trials and collect
    reducer(trial_index, record) results in trial order.

    The frontier-margin abort reruns the trial with doubled N (same stream),
    per the truncation-certificate policy.
    """
    n0 = N or default_particle_count(p, t_end)

    def one(trial: int):
        n_try = n0
        while True:
            st = step_initial(p, n_try)
            try:
                rec = evolve_aep(st, p, t_end, observers,
                                 rng=trial_rng(seed, trial), margin=margin,
                                 left_rate_scale=left_rate_scale)
                return reducer(trial, rec)
            except FrontierMarginError:
                n_try *= 2
                if n_try > 4_000_000:
                    raise

    if threads <= 1:
        return [one(tr) for tr in range(trials)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(one, range(trials)))


def estimate_duality_functional(p: ModelParams, n, t: float, trials: int,
                                seed: int, *, left_rate_scale: float = 1.0,
                                threads: int = 1):
    """Monte Carlo mean and standard error of H(x(t), n) from step data."""
    n = tuple(int(v) for v in n)
    if min(n) < 0:
        raise DomainError("dual coordinates must be >= 0")
    if min(n) == 0:
        return 0.0, 0.0
    N = max(default_particle_count(p, t), max(n) + FRONTIER_MARGIN + 10)

    def reducer(trial, rec):
        pos = rec.final_state.positions
        expo = sum(int(pos[ni - 1]) + ni for ni in n)
        return p.q**expo

    vals = np.array(run_step_trials(p, t, trials, seed, reducer, N=N,
                                    threads=threads,
                                    left_rate_scale=left_rate_scale))
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(len(vals)))
    return mean, se


def estimate_eq_laplace(p: ModelParams, n: int, t: float, zeta: complex,
                        trials: int, seed: int, *, threads: int = 1):
    """Monte Carlo mean and standard error of 1/(zeta q^{x_n(t)+n}; q)_inf."""
    N = max(default_particle_count(p, t), n + FRONTIER_MARGIN + 10)
    cache: dict = {}

    def value_of(xn: int):
        got = cache.get(xn)
        if got is None:
            got = 1.0 / q_pochhammer(zeta * p.q ** (xn + n), p.q, INFINITY)
            cache[xn] = got
        return got

    def reducer(trial, rec):
        return value_of(int(rec.final_state.positions[n - 1]))

    vals = np.array(run_step_trials(p, t, trials, seed, reducer, N=N,
                                    threads=threads))
    mean = complex(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(len(vals)))
    if abs(mean.imag) < 1e-14:
        return mean.real, se
    return mean, se
