"""Outage probability and throughput of the buffered uplink, plus delta and rate searches."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dist_finite, dist_infinite
from .dist_finite import StripeDist
from .dist_infinite import ExpMixtureDist
from .eh_model import (
    ConfigError,
    EffectiveParams,
    GammaEHModel,
    IDEAL,
    Imperfections,
    Policy,
    PolicySpec,
    effective_params,
    harvest_pdf,
)
from .simulator import UplinkChannel
from .special_fn import (
    NumericError,
    QuadratureError,
    bessel_k_int,
    integrate,
    log_factorial,
    n_kernel,
    regularized_lower_gamma,
    regularized_upper_gamma,
)

ROW_DETERMINISTIC = "deterministic_infinite"
ROW_BE_INFINITE = "best_effort_infinite"
ROW_OO_INFINITE = "on_off_infinite"
ROW_BE_FINITE = "best_effort_finite"
ROW_OO_FINITE = "on_off_finite"

# relative digits the closed-form sigma sum may lose before the quadrature value is used
SIGMA_CANCELLATION_LIMIT = 1e5
# just above delta = 1 the unbounded-buffer roots sit at the Lambert W branch point
# and the root-moment series no longer converges in reach; searches skip this band
BOUNDARY_BAND = 1e-3


class DomainError(ValueError):
    pass


def p_out_given_M(ul: UplinkChannel, M: float, imp: Imperfections = IDEAL) -> float:
    """Outage probability when transmitting at UL power M (desired, not effective)."""
    if not M > 0:
        raise DomainError(f"UL power must be positive (effective power must exceed P_C), got M={M}")
    return float(regularized_lower_gamma(ul.m_ul, ul.Gamma_thr / M))


def _success_given_energy(ul: UplinkChannel, imp: Imperfections, x: np.ndarray) -> np.ndarray:
    """Q(m_UL, Gamma_thr rho / (x - P_C)) for stored energy x > P_C, else 0."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    on = x > imp.p_c
    y = ul.Gamma_thr * imp.rho / (x[on] - imp.p_c)
    acc = np.ones_like(y)
    term = np.ones_like(y)
    for k in range(1, ul.m_ul):
        term = term * y / k
        acc = acc + term
    out[on] = np.exp(-y) * acc
    return out


@dataclass
class OutageReport:
    p_M: float
    p_out: float
    p_out_given_M: float
    throughput: float
    case_tag: str
    sigma_term: float = 0.0
    delta: float = math.nan
    flags: dict = field(default_factory=dict)

    def decomposition_error(self) -> float:
        return abs(self.p_out - (self.p_M * self.p_out_given_M + (1.0 - self.p_M) - self.sigma_term))

    def as_dict(self) -> dict:
        return {"delta": self.delta, "case": self.case_tag, "p_M": self.p_M, "p_out": self.p_out,
                "p_out_given_M": self.p_out_given_M, "sigma": self.sigma_term,
                "throughput": self.throughput, **{f"flag_{k}": v for k, v in self.flags.items()}}


# ---------------------------------------------------------------------------
# the sigma term: closed forms through the N-kernel, and direct quadrature


def sigma_quadrature(dist, ul: UplinkChannel, imp: Imperfections) -> float:
    """Integral of Q(m_UL, Gamma_thr rho/(x - P_C)) g(x) over (P_C, M~)."""
    lo, hi = imp.p_c, dist.M
    if hi <= lo:
        return 0.0
    pts = []
    if isinstance(dist, StripeDist):
        pts = [e for e in dist.stripe_edges() if lo < e < hi]
    f = lambda x: _success_given_energy(ul, imp, x) * dist.pdf(x)
    scale = float(np.max(np.abs(dist.pdf(np.linspace(lo, hi, 33)[1:-1]))) * (hi - lo))
    try:
        val, _ = integrate(f, lo, hi, points=pts, abs_tol=1e-14 * max(scale, 1e-300),
                           rel_tol=1e-11)
    except QuadratureError as exc:
        val = exc.details.get("value", math.nan)
    return float(val)


def _n_kernel_complex(t: int, a: float, b: complex) -> complex:
    """N(t, a, b, 0, 0) for complex b with positive real part."""
    if b.imag == 0.0:
        return complex(n_kernel(t, a, b.real, 0.0, 0))
    lo = 0.0
    if a > 0:
        lo = 1.0
        while lo > 1e-300 and (-a / lo - t * math.log(lo)) > -45.0:
            lo *= 0.5
        lo = lo if lo < 1.0 else 0.0

    def part(fn):
        def integrand(x):
            x = np.asarray(x, dtype=float)
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                v = np.exp(-a / x - t * np.log(x)) * fn(np.exp(-b * x))
            return np.where(x > 0, v, 0.0)
        return integrate(integrand, lo, 1.0, abs_tol=1e-15, rel_tol=1e-13)[0]

    return complex(part(np.real), part(np.imag))


def sigma_infinite_closed(dist: ExpMixtureDist, ul: UplinkChannel, imp: Imperfections):
    """Best-effort unbounded buffer: the sum over roots with complex coefficients.

    Returns ``(value, magnitude)`` where ``magnitude`` is the sum of the term
    moduli, which bounds the cancellation.
    """
    width = dist.M - imp.p_c
    a = ul.Gamma_thr * imp.rho / width
    total = 0j
    magnitude = 0.0
    for ln, cn in zip(dist.roots.roots, dist.coeffs):
        inner = 0j
        for t in range(ul.m_ul):
            inner += math.exp(t * math.log(a) - log_factorial(t)) * _n_kernel_complex(t, a, ln * width)
        term = width * ln * cn * np.exp(-ln * imp.p_c) * inner
        total += term
        magnitude += abs(term)
    return float(total.real), magnitude


def sigma_finite_closed(dist: StripeDist, ul: UplinkChannel, imp: Imperfections):
    """Best-effort finite buffer: sum over t of (Gamma_thr rho)^t / t! I_t via the N-kernel."""
    lam, M, K, m, l = dist.lam, dist.M, dist.K, dist.m, dist.l
    pc = imp.p_c
    delta = dist.Delta
    top = l if (delta > 0.0 and delta >= pc) else l - 1
    g_rho = ul.Gamma_thr * imp.rho
    coef = [float(a) / math.factorial(r) for r, a in enumerate(dist.alpha)]
    total = 0.0
    magnitude = 0.0
    for t in range(ul.m_ul):
        weight = g_rho ** t / math.factorial(t)
        for q in range(top + 1):
            D = M if q < l else delta
            w = D - pc
            if w <= 0.0:
                continue
            a = g_rho / w
            c = (K - (q * M + pc)) / w
            lw = lam * w
            damp = -lam * (q * M + pc)
            for r in range(m):
                d = (q + 1) * m - r - 1
                val = coef[r] * math.exp(damp + (d + 1) * math.log(lw) - t * math.log(w)) \
                    * n_kernel(t, a, lw, c, d)
                total += weight * val
                magnitude += abs(weight * val)
            if q >= 1:
                d = q * m - 1
                val = sum(coef) * math.exp(damp + q * m * math.log(lw) - t * math.log(w)) \
                    * n_kernel(t, a, lw, c, d)
                total -= weight * val
                magnitude += abs(weight * val)
    return total, magnitude


def _sigma(dist, ul: UplinkChannel, imp: Imperfections, flags: dict) -> float:
    quad = sigma_quadrature(dist, ul, imp)
    try:
        if isinstance(dist, StripeDist):
            closed, mag = sigma_finite_closed(dist, ul, imp)
        else:
            closed, mag = sigma_infinite_closed(dist, ul, imp)
            if not dist.coeffs_reliable:
                mag = math.inf
    except (NumericError, OverflowError, ValueError):
        closed, mag = math.nan, math.inf
    flags["sigma_quadrature"] = quad
    flags["sigma_closed"] = closed
    scale = max(abs(closed), abs(quad), 1e-300)
    if math.isfinite(mag) and mag <= SIGMA_CANCELLATION_LIMIT * scale:
        flags["sigma_route"] = "closed"
        return closed
    flags["sigma_route"] = "quadrature"
    return quad


# ---------------------------------------------------------------------------
# outage by policy and capacity


def _finish(p_M, pg, sigma, tag, ul, params, flags) -> OutageReport:
    p_out = p_M * pg + (1.0 - p_M) - sigma
    flags = dict(flags)
    if not -1e-9 <= p_out <= 1.0 + 1e-9:
        flags["out_of_range"] = p_out
    return OutageReport(p_M, p_out, pg, ul.rate * (1.0 - p_out), tag, sigma,
                        params.delta_eff, flags)


def p_out_analytic(dist, ul: UplinkChannel, params: EffectiveParams,
                   imp: Imperfections = IDEAL, policy=None) -> OutageReport:
    """Outage report from a solved distribution; ``dist`` may be None for delta <= 1, K infinite."""
    M_des = (params.M_eff - imp.p_c) / imp.rho
    pg = p_out_given_M(ul, M_des, imp)
    flags: dict = {}
    if dist is None:
        if math.isfinite(params.K) or params.delta_eff > 1.0:
            raise ConfigError("a distribution is required unless K is infinite and delta <= 1")
        return _finish(1.0, pg, 0.0, ROW_DETERMINISTIC, ul, params, flags)
    if isinstance(dist, ExpMixtureDist):
        p_M = dist.p_transmit()
        if dist.policy is Policy.ON_OFF:
            return _finish(p_M, pg, 0.0, ROW_OO_INFINITE, ul, params, flags)
        sigma = _sigma(dist, ul, imp, flags)
        return _finish(p_M, pg, sigma, ROW_BE_INFINITE, ul, params, flags)
    p_M = dist.p_full_power()
    if dist.approx_l:
        flags["approx_l"] = True
    if dist.policy is Policy.ON_OFF:
        return _finish(p_M, pg, 0.0, ROW_OO_FINITE, ul, params, flags)
    flags["l_prime"] = dist.l if (dist.Delta > 0.0 and dist.Delta >= imp.p_c) else dist.l - 1
    if dist.Delta > 0.0 and dist.Delta == imp.p_c:
        flags["delta_equals_pc"] = True
    sigma = _sigma(dist, ul, imp, flags)
    return _finish(p_M, pg, sigma, ROW_BE_FINITE, ul, params, flags)


def solve_distribution(spec: PolicySpec, eh: GammaEHModel, approx_l: bool = True):
    """Distribution for the effective system, or None when delta <= 1 with K infinite."""
    params = effective_params(spec, eh)
    eh_eff = params.eh_eff()
    if not spec.finite:
        if params.delta_eff <= 1.0:
            return None, params
        return dist_infinite.solve_infinite(spec.kind, eh_eff, params.M_eff), params
    return dist_finite.solve_finite(spec.kind, eh_eff, params.M_eff, spec.K, approx_l=approx_l), params


def evaluate(spec: PolicySpec, eh: GammaEHModel, ul: UplinkChannel,
             approx_l: bool = True) -> OutageReport:
    dist, params = solve_distribution(spec, eh, approx_l)
    return p_out_analytic(dist, ul, params, spec.imperfections, spec.kind)


def spec_for_delta(kind, delta: float, eh: GammaEHModel, K: float,
                   imp: Imperfections = IDEAL) -> PolicySpec:
    """Policy whose effective power is delta times the effective mean harvest."""
    m_eff = delta * imp.beta * eh.mean_x
    M = (m_eff - imp.p_c) / imp.rho
    if not M > 0:
        raise DomainError(f"delta={delta} leaves no power above the circuit consumption")
    return PolicySpec(kind, M, K, imp)


# ---------------------------------------------------------------------------
# baseline without storage


def p_out_bufferless(eh: GammaEHModel, ul: UplinkChannel, imp: Imperfections = IDEAL) -> float:
    """Each slot spends the previous harvest; storage is lossless here."""
    lam, m = eh.rate, eh.m
    pc = imp.p_c
    g = ul.Gamma_thr * imp.rho
    if g == 0.0:
        return 0.0
    z = 2.0 * math.sqrt(g * lam)
    total = 0.0
    for t in range(ul.m_ul):
        for j in range(m):
            if pc == 0.0 and j != m - 1:
                continue
            log_w = (m * math.log(lam) - log_factorial(m - 1) - lam * pc
                     + t * math.log(g) - log_factorial(t)
                     + math.lgamma(m) - math.lgamma(j + 1) - math.lgamma(m - j)
                     + 0.5 * (j - t + 1) * (math.log(g) - math.log(lam)))
            if pc > 0.0:
                log_w += (m - 1 - j) * math.log(pc)
            total += math.exp(log_w) * bessel_k_int(j - t + 1, z)
    return 1.0 - 2.0 * total


def p_out_bufferless_quadrature(eh: GammaEHModel, ul: UplinkChannel,
                                imp: Imperfections = IDEAL) -> float:
    pc = imp.p_c
    top = pc + (eh.m + 60.0 + 12.0 * math.sqrt(eh.m)) / eh.rate
    f = lambda x: _success_given_energy(ul, imp, x) * harvest_pdf(eh, x)
    val, _ = integrate(f, pc, top, abs_tol=1e-15, rel_tol=1e-13)
    return 1.0 - val


# ---------------------------------------------------------------------------
# comparison of the two policies


@dataclass(frozen=True)
class SuperiorityInputs:
    b: float
    delta_b: float
    G: float
    G_delta_b: float
    Sigma: float

    @classmethod
    def build(cls, ul: UplinkChannel, eh: GammaEHModel, imp: Imperfections, M_eff: float,
              sigma: float = 0.0) -> "SuperiorityInputs":
        x_eff = imp.beta * eh.mean_x
        if not x_eff > imp.p_c:
            raise DomainError("mean effective harvest must exceed the circuit power")
        b = ul.gamma_thr * ul.sigma2 * imp.rho / (ul.omega_ul * (x_eff - imp.p_c))
        delta_b = (M_eff - imp.p_c) / (x_eff - imp.p_c)
        G = float(regularized_upper_gamma(ul.m_ul, ul.m_ul * b))
        G_db = float(regularized_upper_gamma(ul.m_ul, ul.m_ul * b / delta_b))
        return cls(b, delta_b, G, G_db, sigma)


@dataclass
class SuperiorityVerdict:
    on_off_superior: bool
    best_success_on_off: float
    best_success_best_effort: float
    margin: float
    pointwise_any: bool
    necessary_condition: bool | None
    G: float


def superiority_test(be_reports: list[OutageReport], oo_reports: list[OutageReport],
                     inputs: list[SuperiorityInputs] | None = None,
                     infinite: bool = False) -> SuperiorityVerdict:
    """Compare the best success probabilities of the two policies over a shared delta grid.

    With ``inputs`` (one per grid point) the pointwise form
    P_M,oo G_db > P_M,be G_db + Sigma is also evaluated, and for an unbounded buffer
    the necessary condition P_M,oo G_db > G at the on-off optimum.
    """
    if len(be_reports) != len(oo_reports):
        raise ValueError("reports must share the delta grid")
    s_be = np.array([1.0 - r.p_out for r in be_reports])
    s_oo = np.array([1.0 - r.p_out for r in oo_reports])
    best_be, best_oo = float(s_be.max()), float(s_oo.max())
    pointwise = False
    necessary = None
    G = math.nan
    if inputs is not None:
        lhs = np.array([o.p_M * i.G_delta_b for o, i in zip(oo_reports, inputs)])
        rhs = np.array([b.p_M * i.G_delta_b + i.Sigma for b, i in zip(be_reports, inputs)])
        pointwise = bool(np.any(lhs > rhs))
        G = inputs[0].G
        if infinite:
            k = int(np.argmax(s_oo))
            necessary = bool(lhs[k] > G)
    return SuperiorityVerdict(best_oo > best_be, best_oo, best_be, best_oo - best_be,
                              pointwise, necessary, G)


# ---------------------------------------------------------------------------
# one-dimensional searches


@dataclass(frozen=True)
class Problem:
    """Outage of one policy and buffer as a function of delta."""

    kind: Policy
    eh: GammaEHModel
    ul: UplinkChannel
    K: float = math.inf
    imp: Imperfections = IDEAL
    approx_l: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kind", Policy.parse(self.kind))

    def report(self, delta: float) -> OutageReport:
        spec = spec_for_delta(self.kind, delta, self.eh, self.K, self.imp)
        rep = evaluate(spec, self.eh, self.ul, self.approx_l)
        rep.delta = delta
        return rep

    def feasible_range(self, lo: float | None = None, hi: float | None = None) -> tuple[float, float]:
        """Largest sub-interval of [lo, hi] where the analytical rows apply."""
        x_eff = self.imp.beta * self.eh.mean_x
        lo_ok = self.imp.p_c / x_eff * (1.0 + 1e-9) if self.imp.p_c > 0 else 0.0
        hi_ok = math.inf
        if math.isfinite(self.K):
            ratio = self.K / x_eff
            # at least one stripe above M, at most the supported stripe order
            hi_ok = ratio / 1.05
            lo_ok = max(lo_ok, ratio * self.eh.m / dist_finite.MAX_STRIPE_ORDER * 1.0001)
            if self.kind is Policy.ON_OFF:
                hi_ok = min(hi_ok, ratio / 2.5 * (1 - 1e-9))
        lo = max(lo if lo is not None else 0.05, lo_ok, 1e-6)
        hi = min(hi if hi is not None else 10.0, hi_ok)
        if not hi > lo:
            raise DomainError(f"empty feasible delta range for {self.kind.value}, K={self.K}")
        return lo, hi


GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(f, a: float, b: float, tol: float = 1e-6, max_iter: int = 200):
    """Minimum of a unimodal f on [a, b]; returns (x, f(x))."""
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


@dataclass
class OptimumResult:
    delta_opt: float
    report: OutageReport
    grid: np.ndarray
    grid_p_out: np.ndarray
    grid_reports: list = field(default_factory=list, repr=False)


def _search_grid(problem: Problem, lo: float, hi: float, points: int) -> np.ndarray:
    grid = np.linspace(lo, hi, points)
    if math.isfinite(problem.K):
        return grid
    # the objective is kinked at delta = 1; keep that point and drop the unreachable band
    grid = grid[(grid <= 1.0) | (grid >= 1.0 + BOUNDARY_BAND)]
    if lo <= 1.0 <= hi:
        grid = np.union1d(grid, [1.0])
    return grid


def _bracket(problem: Problem, grid: np.ndarray, k: int) -> tuple[float, float]:
    a, b = float(grid[max(k - 1, 0)]), float(grid[min(k + 1, grid.size - 1)])
    if not math.isfinite(problem.K):
        d = float(grid[k])
        if d <= 1.0:
            b = min(b, 1.0)
        else:
            a = max(a, 1.0 + BOUNDARY_BAND)
    return a, b


def optimize_delta(problem: Problem, lo: float | None = None, hi: float | None = None,
                   points: int = 200, refine: bool = True, tol: float = 1e-5) -> OptimumResult:
    """Grid search then golden-section refinement on the bracket around the best grid point."""
    lo, hi = problem.feasible_range(lo, hi)
    grid = _search_grid(problem, lo, hi, points)
    reports = [problem.report(float(d)) for d in grid]
    vals = np.array([r.p_out for r in reports])
    k = int(np.argmin(vals))  # first minimum, i.e. the smallest delta on ties
    best_delta, best = float(grid[k]), reports[k]
    if refine and grid.size >= 3:
        a, b = _bracket(problem, grid, k)
        cache: dict[float, OutageReport] = {}

        def objective(d):
            cache[d] = problem.report(d)
            return cache[d].p_out

        if b > a:
            d_star, v_star = golden_section(objective, a, b, tol=tol)
            if v_star < best.p_out:
                best_delta, best = d_star, cache[d_star]
    return OptimumResult(best_delta, best, grid, vals, reports)


@dataclass
class ThroughputRow:
    rate: float
    delta_opt: float
    p_out: float
    throughput: float


def throughput_sweep(rates, problem: Problem, lo: float | None = None, hi: float | None = None,
                     points: int = 200) -> tuple[list[ThroughputRow], float]:
    """Throughput at the outage-optimal delta for each rate; also returns the best rate."""
    rows = []
    for R in rates:
        if not R > 0:
            raise ConfigError(f"rates must be positive, got {R}")
        sub = Problem(problem.kind, problem.eh, problem.ul.with_rate(float(R)), problem.K,
                      problem.imp, problem.approx_l)
        opt = optimize_delta(sub, lo, hi, points)
        rows.append(ThroughputRow(float(R), opt.delta_opt, opt.report.p_out,
                                  float(R) * (1.0 - opt.report.p_out)))
    best = max(rows, key=lambda r: r.throughput).rate if rows else math.nan
    return rows, best


def bufferless_throughput(rates, eh: GammaEHModel, ul: UplinkChannel,
                          imp: Imperfections = IDEAL) -> list[ThroughputRow]:
    out = []
    for R in rates:
        p = p_out_bufferless(eh, ul.with_rate(float(R)), imp)
        out.append(ThroughputRow(float(R), math.inf, p, float(R) * (1.0 - p)))
    return out
