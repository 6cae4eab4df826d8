"""Monte-Carlo simulation of the buffer recursion and of uplink outage events.

The recursion is sequential, so a single chain runs in one compiled loop fed
by chunks of harvest draws.  Harvest and fading use separate generators
spawned from one seed, so turning the outage count on or off does not change
the stored-energy path.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .eh_model import ConfigError, GammaEHModel, Policy, PolicySpec, spawn_rngs

CHUNK = 1 << 20
PILOT_SLOTS = 10 ** 6
INFINITE_QUANTILE = 0.9999

_BE, _OO = 0, 1


def _policy_code(kind: Policy) -> int:
    return _OO if kind is Policy.ON_OFF else _BE


@numba.njit(cache=True, nogil=True)
def _step(b, x, code, m_eff, k, m_des, rho, p_c):
    if b >= m_eff:
        return min(b - m_eff + x, k), m_des
    if code == _OO:
        return min(b + x, k), 0.0
    p = (b - p_c) / rho if b > p_c else 0.0
    return min(x, k), p


@numba.njit(cache=True, nogil=True)
def _advance(b, xs, code, m_eff, k, m_des, rho, p_c, skip, hist_hi, counts, p_out, tally):
    """Run the chain over one chunk of scaled harvests.

    The first ``skip`` slots are burn-in.  ``tally`` accumulates
    [slots, atom hits, full-power slots, sum of P_UL, overflow].
    """
    nbins = counts.shape[0]
    width = hist_hi / nbins
    for i in range(xs.shape[0]):
        nb, p = _step(b, xs[i], code, m_eff, k, m_des, rho, p_c)
        p_out[i] = p
        if i >= skip:
            tally[0] += 1.0
            tally[3] += p
            if p == m_des:
                tally[2] += 1.0
            if b == k:
                tally[1] += 1.0
            elif b >= hist_hi:
                tally[4] += 1.0
            else:
                j = int(b / width)
                if j >= nbins:
                    j = nbins - 1
                counts[j] += 1.0
        b = nb
    return b


@numba.njit(cache=True, nogil=True)
def _path(b, xs, code, m_eff, k, m_des, rho, p_c, levels, powers):
    for i in range(xs.shape[0]):
        levels[i] = b
        b, powers[i] = _step(b, xs[i], code, m_eff, k, m_des, rho, p_c)
    return b


def step(b: float, x: float, spec: PolicySpec) -> tuple[float, float]:
    """One slot: next buffer level and this slot's UL power for level ``b`` and harvest ``x``.

    ``x`` is the energy that reaches the buffer, i.e. already scaled by the storage
    efficiency.
    """
    imp = spec.imperfections
    nb, p = _step(float(b), float(x), _policy_code(spec.kind), spec.M_eff, float(spec.K),
                  spec.M, imp.rho, imp.p_c)
    return float(nb), float(p)


@dataclass(frozen=True)
class UplinkChannel:
    """Nakagami UL channel with integer shape ``m_ul``, mean gain ``omega_ul`` and rate ``rate``."""

    m_ul: int
    omega_ul: float
    sigma2: float
    rate: float

    def __post_init__(self):
        if int(self.m_ul) != self.m_ul or self.m_ul < 1:
            raise ConfigError(f"m_ul must be a positive integer, got {self.m_ul}")
        for name in ("omega_ul", "sigma2", "rate"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be positive and finite, got {v}")
        object.__setattr__(self, "m_ul", int(self.m_ul))

    @property
    def gamma_thr(self) -> float:
        return 2.0 ** self.rate - 1.0

    @property
    def Gamma_thr(self) -> float:
        return self.m_ul * self.gamma_thr * self.sigma2 / self.omega_ul

    def with_rate(self, rate: float) -> "UplinkChannel":
        return replace(self, rate=rate)


@dataclass(frozen=True)
class SimConfig:
    spec: PolicySpec
    eh: GammaEHModel
    slots: int
    burn_in: int | None = None
    seed: int = 0
    histogram_bins: int = 400
    initial_energy: float = 0.0
    hist_max: float | None = None

    def __post_init__(self):
        if int(self.slots) != self.slots or self.slots < 1:
            raise ConfigError(f"slots must be a positive integer, got {self.slots}")
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", default_burn_in(self.slots))
        if not 0 <= self.burn_in < self.slots:
            raise ConfigError(f"burn_in must lie in [0, slots), got {self.burn_in}")
        if self.histogram_bins < 1:
            raise ConfigError("histogram_bins must be positive")
        if not self.initial_energy >= 0:
            raise ConfigError("initial_energy must be nonnegative")
        if self.spec.finite and self.initial_energy > self.spec.K:
            raise ConfigError("initial_energy exceeds the capacity")

    @property
    def kept(self) -> int:
        return self.slots - self.burn_in


def default_burn_in(slots: int) -> int:
    """1% of the run with a floor of 10^4 slots, capped to leave half the run."""
    return min(max(slots // 100, 10 ** 4), slots // 2)


@dataclass
class SimSummary:
    bin_edges: np.ndarray
    bin_counts: np.ndarray
    slots: int
    atom_count: int
    full_power_count: int
    sum_p_ul: float
    overflow_count: int
    seed: int
    outage_count: int | None = None
    final_energy: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def bin_masses(self) -> np.ndarray:
        return self.bin_counts / self.slots

    @property
    def empirical_pdf(self) -> np.ndarray:
        return self.bin_masses / np.diff(self.bin_edges)

    @property
    def empirical_atom(self) -> float:
        return self.atom_count / self.slots

    @property
    def overflow_mass(self) -> float:
        """Mass above the last bin edge (infinite buffer only)."""
        return self.overflow_count / self.slots

    @property
    def p_M_hat(self) -> float:
        return self.full_power_count / self.slots

    @property
    def mean_p_ul(self) -> float:
        return self.sum_p_ul / self.slots

    @property
    def outage_rate(self) -> float | None:
        return None if self.outage_count is None else self.outage_count / self.slots

    def mass_balance(self) -> float:
        return (float(self.bin_counts.sum()) + self.atom_count + self.overflow_count) / self.slots


def binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def _scaled_harvest(rng: np.random.Generator, eh: GammaEHModel, beta: float, n: int) -> np.ndarray:
    return rng.gamma(eh.m, beta / eh.rate, size=n)


def _chain_args(cfg: SimConfig):
    spec = cfg.spec
    imp = spec.imperfections
    return (_policy_code(spec.kind), spec.M_eff, float(spec.K), spec.M, imp.rho, imp.p_c)


def _histogram_top(cfg: SimConfig) -> float:
    if cfg.spec.finite:
        return float(cfg.spec.K)
    if cfg.hist_max is not None:
        return float(cfg.hist_max)
    # pilot pass on the same harvest stream: estimate a far quantile of the kept states
    args = _chain_args(cfg)
    rng = spawn_rngs(cfg.seed, 2)[0]
    n = min(cfg.slots, cfg.burn_in + PILOT_SLOTS)
    xs = _scaled_harvest(rng, cfg.eh, cfg.spec.imperfections.beta, n)
    levels = np.empty(n)
    powers = np.empty(n)
    _path(float(cfg.initial_energy), xs, *args, levels, powers)
    kept = levels[cfg.burn_in:]
    top = float(np.quantile(kept, INFINITE_QUANTILE))
    return top if top > 0 else max(float(kept.max()), cfg.spec.M_eff)


def run(cfg: SimConfig, ul: UplinkChannel | None = None) -> SimSummary:
    """Simulate ``cfg.slots`` slots and summarise the slots after burn-in.

    With ``ul`` given, each slot also draws a Nakagami gain and counts an outage
    when the received SNR falls short of the threshold; silent slots count as outages.
    """
    args = _chain_args(cfg)
    harvest_rng, fading_rng = spawn_rngs(cfg.seed, 2)
    top = _histogram_top(cfg)
    counts = np.zeros(cfg.histogram_bins)
    tally = np.zeros(5)
    b = float(cfg.initial_energy)
    outages = 0 if ul is not None else None
    beta = cfg.spec.imperfections.beta
    if ul is not None:
        # outage iff P h / sigma^2 < gamma_thr; with h = (omega/m) G, G ~ Gamma(m, 1)
        g_scale = ul.omega_ul / ul.m_ul
        power_thr = ul.gamma_thr * ul.sigma2
    done = 0
    while done < cfg.slots:
        n = min(CHUNK, cfg.slots - done)
        xs = _scaled_harvest(harvest_rng, cfg.eh, beta, n)
        powers = np.empty(n)
        skip = max(cfg.burn_in - done, 0)
        b = _advance(b, xs, *args, skip, top, counts, powers, tally)
        if ul is not None:
            gains = fading_rng.gamma(ul.m_ul, g_scale, size=n)
            if skip < n:
                outages += int(np.count_nonzero(powers[skip:] * gains[skip:] < power_thr))
        done += n
    edges = np.linspace(0.0, top, cfg.histogram_bins + 1)
    return SimSummary(
        bin_edges=edges, bin_counts=counts, slots=int(tally[0]), atom_count=int(tally[1]),
        full_power_count=int(tally[2]), sum_p_ul=float(tally[3]), overflow_count=int(tally[4]),
        seed=cfg.seed, outage_count=outages, final_energy=b)


def outage_sim(cfg: SimConfig, ul: UplinkChannel) -> float:
    return run(cfg, ul).outage_rate


def merge(summaries: list[SimSummary]) -> SimSummary:
    """Pool independent replicas that share the same histogram edges."""
    first = summaries[0]
    for s in summaries[1:]:
        if not np.array_equal(s.bin_edges, first.bin_edges):
            raise ValueError("replicas must share histogram edges")
    outage = None
    if all(s.outage_count is not None for s in summaries):
        outage = sum(s.outage_count for s in summaries)
    return SimSummary(
        bin_edges=first.bin_edges,
        bin_counts=np.sum([s.bin_counts for s in summaries], axis=0),
        slots=sum(s.slots for s in summaries),
        atom_count=sum(s.atom_count for s in summaries),
        full_power_count=sum(s.full_power_count for s in summaries),
        sum_p_ul=math.fsum(s.sum_p_ul for s in summaries),
        overflow_count=sum(s.overflow_count for s in summaries),
        seed=first.seed, outage_count=outage, final_energy=first.final_energy,
        extra={"replica_seeds": [s.seed for s in summaries]})


def run_replicas(cfg: SimConfig, replicas: int, ul: UplinkChannel | None = None,
                 workers: int = 1) -> SimSummary:
    """Independent chains with seeds derived from ``cfg.seed``, merged into one summary."""
    seeds = np.random.SeedSequence(cfg.seed).generate_state(replicas).tolist()
    top = _histogram_top(cfg)
    cfgs = [replace(cfg, seed=int(s), hist_max=top) for s in seeds]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda c: run(c, ul), cfgs))
    else:
        parts = [run(c, ul) for c in cfgs]
    out = merge(parts)
    out.seed = cfg.seed
    return out


def simulate_path(spec: PolicySpec, harvest: np.ndarray, initial_energy: float = 0.0):
    """Buffer levels B(i) and powers P_UL(i) driven by the given (scaled) harvest sequence."""
    xs = np.ascontiguousarray(harvest, dtype=float)
    levels = np.empty(xs.shape[0])
    powers = np.empty(xs.shape[0])
    imp = spec.imperfections
    _path(float(initial_energy), xs, _policy_code(spec.kind), spec.M_eff, float(spec.K), spec.M,
          imp.rho, imp.p_c, levels, powers)
    return levels, powers


def coupled_paths(eh: GammaEHModel, M: float, K: float, slots: int, seed: int,
                  initial_energy: float = 0.0):
    """Best-effort and on-off paths driven by one harvest sequence."""
    rng = spawn_rngs(seed, 2)[0]
    xs = rng.gamma(eh.m, 1.0 / eh.rate, size=slots)
    be, _ = simulate_path(PolicySpec(Policy.BEST_EFFORT, M, K), xs, initial_energy)
    oo, _ = simulate_path(PolicySpec(Policy.ON_OFF, M, K), xs, initial_energy)
    return be, oo
