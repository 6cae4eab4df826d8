"""Limiting stored-energy distribution for an unbounded buffer.

Both policies share the tail ``g(x) = sum_n lam_n c_n exp(-lam_n x)`` above
``M``; the exponents come from the principal Lambert W branch.  Under the
on-off policy the density on ``[0, M)`` is the resolvent solution of a Volterra
equation and the coefficients come from a different linear system.

Two evaluation routes are kept side by side.  The closed forms in terms of the
complex ``c_n`` are computed literally (``pdf_complex``).  The scaled roots
``eps_n = (lam - lam_n)/lam`` crowd into a disc of radius about
``exp(-delta)``, so the ``c_n`` grow like the entries of an inverse Vandermonde
matrix and the literal sums cancel badly once ``delta * m`` is large.  The
default route (``pdf``, ``cdf``, ``tail_mass``) works with m real moments
``mu_i = sum_n w_n eps_n^i`` instead and reduces every sum over the roots
modulo ``prod_n (eps - eps_n)``; see :class:`RootReduction`.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .eh_model import GammaEHModel, Policy, harvest_pdf
from .special_fn import (
    NumericError,
    RegimeError,
    SingularMatrixError,
    exp_section,
    integrate,
    lambert_w0,
    log_factorials,
    lower_inc_gamma_int,
    poisson_terms,
    regularized_lower_gamma,
    solve_linear,
)


def unit_root(k: int, m: int, sign: int = 1) -> complex:
    """exp(sign * 2j*pi*k/m), exact at the quarter turns."""
    k %= m
    if k == 0:
        return 1.0 + 0j
    if 2 * k == m:
        return -1.0 + 0j
    if 4 * k == m:
        return complex(0.0, sign)
    if 4 * k == 3 * m:
        return complex(0.0, -sign)
    return cmath.exp(sign * 2j * math.pi * k / m)


@dataclass(frozen=True)
class RootSet:
    m: int
    lam: float
    M: float
    roots: np.ndarray
    eps: np.ndarray

    @property
    def delta(self) -> float:
        return self.lam * self.M / self.m

    def residuals(self) -> np.ndarray:
        """|(lam/(lam - lam_n))^m exp(-lam_n M) - 1| for every root."""
        out = []
        for ln in self.roots:
            val = cmath.exp(self.m * cmath.log(self.lam / (self.lam - ln)) - ln * self.M)
            out.append(abs(val - 1.0))
        return np.array(out)

    def pairing_error(self) -> float:
        """max |lam_n - conj(lam_{m-n})| relative to lam."""
        m = self.m
        gap = max(abs(self.roots[n] - np.conj(self.roots[(m - n) % m])) for n in range(m))
        return float(gap / self.lam)


def lambda_roots(m: int, lam: float, M: float, allow_boundary: bool = False) -> RootSet:
    delta = lam * M / m
    if delta < 1.0 or (delta == 1.0 and not allow_boundary):
        raise RegimeError(
            f"no stationary distribution: need desired power above mean harvest (delta={delta:.6g} <= 1)")
    base = -delta * math.exp(-delta)
    w = np.array([lambert_w0(base * unit_root(n, m, -1)) for n in range(m)], dtype=complex)
    return RootSet(m, lam, M, lam + (m / M) * w, -w / delta)


class RootReduction:
    """Turns sums over the roots into m-term real dot products.

    For an entire function ``phi`` with Taylor coefficients ``phi_j``,
    ``sum_n w_n phi(eps_n) = sum_j phi_j (E_j . mu)`` where row ``E_j`` holds the
    coefficients of ``eps^j`` modulo ``prod_n (eps - eps_n)``.  The companion
    recurrence that builds ``E`` keeps every entry at its natural size
    (about ``radius**(j-i)``), so nothing large ever has to cancel.
    """

    def __init__(self, eps):
        eps = np.asarray(eps, dtype=complex)
        self.m = eps.size
        self.q = np.real(np.poly(eps)[1:][::-1]).copy()
        self.radius = float(np.max(np.abs(eps)))
        self._table = np.eye(self.m)

    def table(self, count: int) -> np.ndarray:
        count = max(count, self.m)
        have = self._table.shape[0]
        if have < count:
            rows = np.empty((count, self.m))
            rows[:have] = self._table
            prev = rows[have - 1]
            for j in range(have, count):
                new = np.empty(self.m)
                new[0] = 0.0
                new[1:] = prev[:-1]
                new -= prev[-1] * self.q
                rows[j] = new
                prev = new
            self._table = rows
        return self._table[:count]

    def terms(self, y_max: float = 0.0) -> int:
        """Series length covering both Poisson(y) weights and geometric decay."""
        r = self.radius
        n = self.m + 60 + int(math.e * r * y_max)
        if 0 < r < 1:
            n = max(n, self.m + 12 + int(45.0 / -math.log(r)))
        if n > 40000:
            raise NumericError("root-moment series too long", terms=n, y=y_max)
        return n

    def coefficients(self, moments, count: int) -> np.ndarray:
        return self.table(count) @ np.asarray(moments, dtype=float)

    def moments_of(self, weights, eps) -> np.ndarray:
        """sum_n w_n eps_n^i for i < m."""
        return np.array([np.sum(weights * eps ** i) for i in range(self.m)])


@dataclass(frozen=True)
class OnOffLowSegment:
    eta: np.ndarray
    theta: np.ndarray
    a: np.ndarray
    b: np.ndarray


def _section_sums(p: np.ndarray, m: int, count: int) -> np.ndarray:
    """out[:, j] = sum_{k >= 1} p[:, k*m + j] for j < count."""
    out = np.zeros((p.shape[0], count))
    k = 1
    while k * m < p.shape[1]:
        hi = min(count, p.shape[1] - k * m)
        out[:, :hi] += p[:, k * m:k * m + hi]
        k += 1
    return out


def _poisson_span(y_max: float, count: int, m: int) -> int:
    return count + m * (2 + int((y_max + 12.0 * math.sqrt(y_max) + 40.0) / m))


@dataclass
class ExpMixtureDist:
    roots: RootSet
    coeffs: np.ndarray
    policy: Policy
    moments: np.ndarray
    low_segment: OnOffLowSegment | None = None
    system: np.ndarray | None = None
    condition: float = float("nan")
    moment_residual: float = 0.0
    coeffs_reliable: bool = True
    reduction: RootReduction = field(init=False, repr=False)

    def __post_init__(self):
        self.reduction = RootReduction(self.roots.eps)

    @property
    def m(self) -> int:
        return self.roots.m

    @property
    def lam(self) -> float:
        return self.roots.lam

    @property
    def M(self) -> float:
        return self.roots.M

    @property
    def anchor(self) -> float:
        """Left end of the pure exponential-mixture part of the density."""
        return self.M if self.policy is Policy.ON_OFF else 0.0

    # -- stable evaluation ---------------------------------------------------
    def _mixture_pdf(self, v: np.ndarray) -> np.ndarray:
        y = self.lam * v
        count = self.reduction.terms(float(y.max(initial=0.0)))
        coef = self.reduction.coefficients(self.moments, count)
        return self.lam * (poisson_terms(y, count) @ coef)

    def _mixture_ccdf(self, v: np.ndarray) -> np.ndarray:
        y = self.lam * v
        count = self.reduction.terms(float(y.max(initial=0.0)))
        coef = self.reduction.coefficients(self.moments, count)
        upper = np.cumsum(poisson_terms(y, count), axis=1)
        return upper @ coef

    def _low_matrices(self, x: np.ndarray):
        y = self.lam * x
        y_max = float(y.max(initial=0.0))
        count = self.reduction.terms(y_max)
        span = _poisson_span(y_max, count, self.m)
        return poisson_terms(y, span), count, self.reduction.coefficients(self.moments, count)

    def _low_pdf(self, x: np.ndarray) -> np.ndarray:
        p, count, coef = self._low_matrices(x)
        return self.lam * (_section_sums(p, self.m, count) @ coef)

    def _low_cdf(self, x: np.ndarray) -> np.ndarray:
        p, count, coef = self._low_matrices(x)
        # column N becomes sum_{a > N} p[:, a], the regularised lower gamma P(N + 1, y)
        above = np.flip(np.cumsum(np.flip(p, axis=1), axis=1), axis=1)
        above = np.concatenate([above[:, 1:], np.zeros((p.shape[0], 1))], axis=1)
        return _section_sums(above, self.m, count) @ coef

    def _split(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x < 0):
            raise ValueError("stored energy is nonnegative")
        return x, x >= self.anchor

    def pdf(self, x):
        scalar = np.ndim(x) == 0
        x, upper = self._split(x)
        out = np.empty(x.shape)
        if np.any(upper):
            out[upper] = self._mixture_pdf(x[upper] - self.anchor)
        if np.any(~upper):
            out[~upper] = self._low_pdf(x[~upper])
        return float(out[0]) if scalar else out

    def tail_mass(self, x):
        """P(B > x)."""
        x, upper = self._split(x)
        out = np.empty(x.shape)
        if np.any(upper):
            out[upper] = self._mixture_ccdf(x[upper] - self.anchor)
        if np.any(~upper):
            out[~upper] = 1.0 - self._low_cdf(x[~upper])
        return out

    def cdf(self, x):
        x, upper = self._split(x)
        out = np.empty(x.shape)
        if np.any(upper):
            out[upper] = 1.0 - self._mixture_ccdf(x[upper] - self.anchor)
        if np.any(~upper):
            out[~upper] = self._low_cdf(x[~upper])
        return out

    def p_transmit(self, m_eff: float | None = None) -> float:
        """P(B >= M), the probability of transmitting at full power."""
        x = self.M if m_eff is None else m_eff
        return float(self.tail_mass(x)[0])

    def support_max(self, mass: float = 1e-12) -> float:
        """A point beyond which the remaining probability is below ``mass``."""
        slowest = float(np.min(self.roots.roots.real))
        x = self.M + math.log(1.0 / mass) / slowest
        for _ in range(200):
            if self.tail_mass(x)[0] <= mass:
                break
            x += 2.0 / slowest
        return max(x, 2 * self.M)

    # -- literal closed forms in the complex coefficients ----------------------
    def _tail_density_complex(self, x: np.ndarray) -> np.ndarray:
        ln = self.roots.roots
        return np.exp(-np.outer(x, ln)) @ (ln * self.coeffs)

    def _low_density_complex(self, x: np.ndarray) -> np.ndarray:
        seg = self.low_segment
        lam, m = self.lam, self.m
        ln = self.roots.roots
        out = np.zeros(x.shape, dtype=complex)
        sections = [np.exp(-lam * x) * exp_section(lam * x, m, t) for t in range(m)]
        for n in range(m):
            e_n = np.exp(-ln[n] * x)
            acc = e_n.copy()
            res = np.zeros(x.shape, dtype=complex)
            for k in range(m):
                res += (seg.a[n, k] * np.exp(-seg.theta[k] * x)
                        + seg.b[n, k] * np.exp(-np.conj(seg.theta[k]) * x)
                        - (seg.a[n, k] + seg.b[n, k]) * e_n)
            acc += lam / m * res
            for t in range(m):
                acc -= self.roots.eps[n] ** t * sections[t]
            out += ln[n] * self.coeffs[n] * acc
        return out

    def pdf_complex(self, x) -> np.ndarray:
        """Density from the complex coefficients, before taking the real part."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x < 0):
            raise ValueError("stored energy is nonnegative")
        out = np.empty(x.shape, dtype=complex)
        if self.policy is Policy.ON_OFF:
            low = x < self.M
            out[low] = self._low_density_complex(x[low])
            out[~low] = self._tail_density_complex(x[~low])
        else:
            out[:] = self._tail_density_complex(x)
        return out

    def tail_mass_complex(self, x) -> np.ndarray:
        """sum_n c_n exp(-lam_n x), the tail probability for x >= anchor."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.exp(-np.outer(x, self.roots.roots)) @ self.coeffs

    def imag_residue(self, x) -> float:
        """max |Im g| / max |g| of the complex closed form on ``x``."""
        vals = self.pdf_complex(x)
        return float(np.max(np.abs(vals.imag)) / max(np.max(np.abs(vals.real)), 1e-300))

    def coefficient_pairing_error(self) -> float:
        m = self.m
        c = self.coeffs
        scale = max(float(np.max(np.abs(c))), 1e-300)
        return float(max(abs(c[n] - np.conj(c[(m - n) % m])) for n in range(m)) / scale)

    def system_residual(self) -> float:
        """||A c - 1|| / ||1|| for the closed-form coefficient system."""
        r = self.system @ self.coeffs - 1.0
        return float(np.linalg.norm(r) / math.sqrt(self.m))

    def moments_from_coeffs(self) -> np.ndarray:
        """Moments implied by the complex coefficients, for comparing the two routes."""
        eps = self.roots.eps
        weights = (1.0 - eps) * self.coeffs
        if self.policy is Policy.ON_OFF:
            weights = weights * np.exp(-self.roots.roots * self.M)
        return self.reduction.moments_of(weights, eps)


# ---------------------------------------------------------------------------
# solvers


def _solve_coefficients(A: np.ndarray):
    """Solve A c = 1; past the condition limit keep the answer but flag it."""
    try:
        c, cond = solve_linear(A, np.ones(A.shape[0]), return_condition=True)
        return c, cond, True
    except SingularMatrixError:
        c, cond = solve_linear(A, np.ones(A.shape[0]), max_condition=math.inf,
                               return_condition=True)
        return c, cond, False


def be_infinite_system(rs: RootSet) -> np.ndarray:
    return np.array([[e ** s for e in rs.eps] for s in range(rs.m)], dtype=complex)


def be_infinite_solve(eh: GammaEHModel, M: float) -> ExpMixtureDist:
    rs = lambda_roots(eh.m, eh.rate, M)
    A = be_infinite_system(rs)
    c, cond, ok = _solve_coefficients(A)
    # with w_n = (1 - eps_n) c_n and sum_n c_n eps_n^s = 1 for s < m every
    # moment vanishes except the last, 1 - sum_n c_n eps_n^m
    red = RootReduction(rs.eps)
    moments = np.zeros(eh.m)
    moments[-1] = 1.0 - float(np.sum(red.table(eh.m + 1)[eh.m]))
    return ExpMixtureDist(rs, c, Policy.BEST_EFFORT, moments, system=A, condition=cond,
                          coeffs_reliable=ok)


def low_segment_params(rs: RootSet) -> OnOffLowSegment:
    m, lam = rs.m, rs.lam
    eta = 2 * np.pi * np.arange(m) / m
    omega = np.array([unit_root(k, m) for k in range(m)])
    theta = lam * (1.0 - omega)
    theta[0] = 0.0
    a = np.empty((m, m), dtype=complex)
    b = np.empty((m, m), dtype=complex)
    for n, ln in enumerate(rs.roots):
        for k in range(m):
            a[n, k] = 1.0 / (2.0 * (ln * np.conj(omega[k]) + np.conj(theta[k])))
            b[n, k] = 1.0 / (2.0 * (ln * omega[k] + theta[k]))
    return OnOffLowSegment(eta, theta, a, b)


def power_exp_integral(n: int, beta: complex, M: float) -> complex:
    """Integral over [0, M] of u**(n-1) exp(-beta u); equals beta^-n gamma(n, beta M)."""
    beta = complex(beta)
    if beta == 0:
        return M ** n / n
    return lower_inc_gamma_int(n, beta * M) / beta ** n


def _section_moment(m: int, t: int, s: int, lam: float, M: float) -> float:
    """Integral over [0, M] of u^(m-1-s) lam^-t S_t(lam u), S_t being the exponential m-section."""
    y = lam * M
    n = m - s
    if y <= 0:
        return 0.0
    top = int(y + 12 * math.sqrt(y) + 60)
    j = np.arange(t, top, m)
    terms = np.exp(j * math.log(y) - log_factorials(top)[j]) / (j + n)
    return M ** n * lam ** (-t) * math.fsum(terms)


def oo_infinite_system(rs: RootSet, seg: OnOffLowSegment) -> np.ndarray:
    """Closed-form matrix A = D_n + B_sn of the on-off coefficient system."""
    m, lam, M = rs.m, rs.lam, rs.M
    theta = seg.theta
    zeta = np.array([M if k == 0 else (1.0 - cmath.exp(-theta[k] * M)) / theta[k]
                     for k in range(m)])
    # integral of exp(-lam x) S_t(lam x) / lam^t over [0, M]
    y = lam * M
    n_terms = int(y + 12 * math.sqrt(y) + 60) // m + 2
    sec_mass = [lam ** (-t - 1) * sum(regularized_lower_gamma(p * m + t + 1, y) for p in range(n_terms))
                for t in range(m)]
    A = np.empty((m, m), dtype=complex)
    for n, ln in enumerate(rs.roots):
        ratio = lam * rs.eps[n]
        d = 1.0 + 0j
        lowpart = 0j
        for k in range(m):
            lowpart += (seg.a[n, k] * zeta[k] + seg.b[n, k] * np.conj(zeta[k])
                        - (seg.a[n, k] + seg.b[n, k]) * (1.0 - cmath.exp(-ln * M)) / ln)
        d += ln * lam / m * lowpart
        for t in range(m):
            d -= ln * ratio ** t * sec_mass[t]
        for s in range(m):
            n_pow = m - s
            bracket = power_exp_integral(n_pow, ln - lam, M)
            res = 0j
            for k in range(m):
                res += (seg.a[n, k] * power_exp_integral(n_pow, theta[k] - lam, M)
                        + seg.b[n, k] * power_exp_integral(n_pow, np.conj(theta[k]) - lam, M)
                        - (seg.a[n, k] + seg.b[n, k]) * power_exp_integral(n_pow, ln - lam, M))
            bracket += lam / m * res
            for t in range(m):
                bracket -= ratio ** t * _section_moment(m, t, s, lam, M)
            pref = lam ** m * (-1) ** (m - 1 - s) * ln / (lam ** (s + 1) * math.factorial(m - 1 - s))
            b_sn = -ln * ratio ** s / lam ** (s + 1) + pref * bracket
            A[s, n] = d + b_sn
    return A


def oo_moment_system(rs: RootSet, red: RootReduction):
    """Real (m+1) x m system for the tail moments of the on-off chain.

    Rows 0..m-1 say that the part of the density equation above M not already
    reproduced by the roots vanishes (one of them follows from the others);
    the last row is unit total mass.  Units have lam = 1.  Returns the
    matrix, the right-hand side and a per-row magnitude for equilibration.
    """
    m = rs.m
    M = rs.lam * rs.M
    count = red.terms(M)
    span = _poisson_span(M, count, m)
    pois = poisson_terms(M, span)[0]
    lf = log_factorials(max(count, m))
    j = np.arange(count)
    rows = np.zeros((m + 1, count))
    for i in range(m):
        weight = 1.0 / (np.arange(span) + (m - i))
        sect = _section_sums((pois * weight)[None, :], m, count)[0]
        rows[i] = (-1) ** (m - 1 - i) * math.exp((m - i) * math.log(M) - lf[m - 1 - i]) * sect
        k = j[i:] - i
        rows[i, i:] -= np.where(k % 2 == 0, 1.0, -1.0) * np.exp(k * math.log(M) - lf[k])
    above = np.flip(np.cumsum(np.flip(pois)))
    above = np.concatenate([above[1:], [0.0]])
    rows[m] = 1.0 + _section_sums(above[None, :], m, count)[0]
    rhs = np.zeros(m + 1)
    rhs[m] = 1.0
    table = red.table(count)
    # size of the terms that make up each entry, so rows that vanish up to
    # rounding (m = 1 has nothing but such a row) stay small after scaling
    scale = np.abs(rows) @ np.max(np.abs(table), axis=1)
    return rows @ table, rhs, scale


def oo_moments(rs: RootSet, red: RootReduction) -> tuple[np.ndarray, float]:
    Q, rhs, scale = oo_moment_system(rs, red)
    mu = np.linalg.lstsq(Q / scale[:, None], rhs / scale, rcond=None)[0]
    return mu, float(np.max(np.abs(Q @ mu - rhs)))


def oo_infinite_solve(eh: GammaEHModel, M: float) -> ExpMixtureDist:
    rs = lambda_roots(eh.m, eh.rate, M)
    seg = low_segment_params(rs)
    A = oo_infinite_system(rs, seg)
    c, cond, ok = _solve_coefficients(A)
    mu, resid = oo_moments(rs, RootReduction(rs.eps))
    return ExpMixtureDist(rs, c, Policy.ON_OFF, mu, low_segment=seg, system=A, condition=cond,
                          moment_residual=resid, coeffs_reliable=ok)


def solve_infinite(policy, eh: GammaEHModel, M: float) -> ExpMixtureDist:
    policy = Policy.parse(policy)
    return be_infinite_solve(eh, M) if policy is Policy.BEST_EFFORT else oo_infinite_solve(eh, M)


# ---------------------------------------------------------------------------
# printed complex-gamma form of the low segment, kept as a cross-check


def low_density_gamma_form(dist: ExpMixtureDist, x: float) -> complex:
    seg = dist.low_segment
    lam, m = dist.lam, dist.m
    total = 0j
    for n, ln in enumerate(dist.roots.roots):
        acc = cmath.exp(-ln * x)
        res = 0j
        for k in range(m):
            res += (seg.a[n, k] * cmath.exp(-seg.theta[k] * x)
                    + seg.b[n, k] * cmath.exp(-np.conj(seg.theta[k]) * x)
                    - (seg.a[n, k] + seg.b[n, k]) * cmath.exp(-ln * x))
        acc += lam / m * res
        for t in range(m):
            braces = x ** t
            for k in range(m):
                z = lam * x * unit_root(k, m)
                val = (lam * unit_root(k, m)) ** (-t) * cmath.exp(z) * lower_inc_gamma_int(t + 1, z) \
                    if x > 0 else 0j
                braces += val.real / m
            acc -= (lam - ln) ** t / math.factorial(t) * math.exp(-lam * x) * braces
        total += ln * dist.coeffs[n] * acc
    return total


# ---------------------------------------------------------------------------
# integral-equation residuals


def default_grid(dist: ExpMixtureDist, points: int = 50) -> np.ndarray:
    x_hi = min(dist.support_max(1e-8), 12 * dist.M)
    grid = np.linspace(0.0, x_hi, points)
    # keep grid points off the on-off seam, where the density may jump
    return np.where(np.isclose(grid, dist.M), grid + 1e-3 * dist.M, grid)


_RESIDUAL_TOL = dict(abs_tol=1e-13, rel_tol=1e-11)


def integral_equation_rhs(dist: ExpMixtureDist, eh: GammaEHModel, x: float,
                          mass_low: float | None = None) -> float:
    """Right-hand side of the stationary density equation at ``x``, by quadrature."""
    M = dist.M
    f = lambda u: harvest_pdf(eh, np.maximum(u, 0.0))
    g = dist.pdf
    shifted = integrate(lambda u: f(x - u + M) * g(u), M, M + x, **_RESIDUAL_TOL)[0] if x > 0 else 0.0
    if dist.policy is Policy.BEST_EFFORT:
        if mass_low is None:
            mass_low = integrate(g, 0.0, M, **_RESIDUAL_TOL)[0]
        return float(f(x)) * mass_low + shifted
    upper = min(x, M)
    direct = integrate(lambda u: f(x - u) * g(u), 0.0, upper, **_RESIDUAL_TOL)[0] if upper > 0 else 0.0
    return direct + shifted


def integral_residual_infinite(dist: ExpMixtureDist, eh: GammaEHModel, grid=None) -> float:
    grid = default_grid(dist) if grid is None else np.asarray(grid, dtype=float)
    mass_low = None
    if dist.policy is Policy.BEST_EFFORT:
        mass_low = integrate(dist.pdf, 0.0, dist.M, **_RESIDUAL_TOL)[0]
    lhs = dist.pdf(grid)
    rhs = np.array([integral_equation_rhs(dist, eh, x, mass_low) for x in grid])
    return float(np.max(np.abs(lhs - rhs)))


def lindley_cdf_residual(dist: ExpMixtureDist, eh: GammaEHModel, grid=None) -> float:
    if dist.policy is not Policy.BEST_EFFORT:
        raise ValueError("the Lindley form applies to the best-effort chain only")
    grid = default_grid(dist) if grid is None else np.asarray(grid, dtype=float)
    worst = 0.0
    for x in grid:
        lhs = float(dist.cdf(x)[0])
        if x > 0:
            rhs = integrate(lambda u: dist.cdf(x - u + dist.M) * harvest_pdf(eh, u), 0.0, x,
                            **_RESIDUAL_TOL)[0]
        else:
            rhs = 0.0
        worst = max(worst, abs(lhs - rhs))
    return worst


def total_mass(dist: ExpMixtureDist) -> float:
    """Integral of the density over [0, inf) by quadrature."""
    top = dist.support_max(1e-16)
    pts = [dist.M] if dist.policy is Policy.ON_OFF else None
    return integrate(dist.pdf, 0.0, top, points=pts, abs_tol=1e-13, rel_tol=1e-12)[0]


def mean_drain(dist: ExpMixtureDist) -> float:
    """Expected energy removed per slot: E[min(B, M)] (best-effort) or M P(B >= M) (on-off)."""
    M = dist.M
    if dist.policy is Policy.ON_OFF:
        return M * dist.p_transmit()
    # E[min(B, M)] = integral of P(B > u) over [0, M]
    return integrate(dist.tail_mass, 0.0, M, abs_tol=1e-15, rel_tol=1e-13)[0]
