"""Limiting stored-energy distribution for a buffer of finite capacity ``K``.

The density is piecewise: counting down from ``K`` in stripes of width ``M``
each stripe is ``exp(-lam x)`` times a polynomial, and under the on-off policy
the bottom stripe ``[0, M)`` is a resolvent solution built from exponential
m-sections.  The m coefficients ``alpha_r`` come from ``(I + A) alpha = 1``
and the buffer-full atom is ``exp(-lam K) sum_r alpha_r / r!``.

The closed forms are expansions around ``K``: the coefficients grow like
``exp(lam K)`` while the density is of order one, so every alternating stripe
sum and the matrix itself lose about ``lam K / ln 10`` digits.  They are
therefore evaluated in decimal arithmetic with enough guard digits, and each
stripe is handed to double precision once, as a Chebyshev interpolant built
from those exact node values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal, getcontext, localcontext

import numpy as np
from numpy.polynomial import Chebyshev

from .dist_infinite import unit_root
from .eh_model import ConfigError, GammaEHModel, Policy, harvest_ccdf, harvest_pdf, split_capacity
from .special_fn import NumericError, SingularMatrixError, integrate, lower_inc_gamma_int

MAX_STRIPE_ORDER = 120
"""Largest supported l*m (number of polynomial stripes times the shape)."""


class DomainError(ValueError):
    """Density queried outside ``[0, K)``."""


def working_digits(lam_k: float, order: int) -> int:
    """Decimal digits that leave about 30 significant ones after the cancellation."""
    return 34 + int(math.ceil(1.25 * lam_k / math.log(10.0))) + order // 4


# ---------------------------------------------------------------------------
# decimal building blocks; these run inside the caller's decimal context


class _Factorials:
    def __init__(self):
        self._vals = [Decimal(1)]

    def __getitem__(self, k: int) -> Decimal:
        while len(self._vals) <= k:
            self._vals.append(self._vals[-1] * len(self._vals))
        return self._vals[k]


def _pow_fact(z: Decimal, p: int, fact: _Factorials) -> Decimal:
    """z**p / p! with 0**0 = 1."""
    if p == 0:
        return Decimal(1)
    if z == 0:
        return Decimal(0)
    return z ** p / fact[p]


def _poisson_row(y: Decimal, min_count: int) -> list[Decimal]:
    """exp(-y) y^j / j! for j = 0, 1, ... until the tail drops below working precision."""
    tiny = Decimal(10) ** (-(getcontext().prec + 5))
    base = (-y).exp()
    row = [base]
    term = Decimal(1)
    yf = float(y)
    j = 0
    while True:
        j += 1
        term = term * y / j
        row.append(base * term)
        if j >= min_count and j > yf and term < tiny:
            return row
        if j > 100000:
            raise NumericError("Poisson row did not converge", y=yf)


def section_terms(y: Decimal, m: int, t_count: int) -> list[Decimal]:
    """exp(-y) S_{m, m+t}(y) for t < t_count, S being the exponential m-section."""
    row = _poisson_row(y, m + t_count + 1)
    return [sum(row[m + t::m], Decimal(0)) for t in range(t_count)]


def h_scaled(m: int, t: int, y: Decimal) -> Decimal:
    """lam^(m+t+1) H(t) = sum_{p>=0} P((p+1) m + t + 1, lam M) with y = lam M."""
    row = _poisson_row(y, m + t + 2)
    # each P(n, y) is a Poisson tail from n, so index j is counted once for
    # every p with (p+1) m + t + 1 <= j
    return sum((((j - t - 1) // m) * row[j] for j in range(m + t + 1, len(row))), Decimal(0))


def f_scaled(m: int, t: int, s: int, y: Decimal, z: Decimal, fact: _Factorials) -> Decimal:
    """lam^(m+t+1+s) F(t, s) with y = lam M and z = lam (K - M)."""
    row = _poisson_row(y, m + t + s + 2)
    ey = y.exp()
    total = Decimal(0)
    for b in range(s + 1):
        sec = sum(row[m + t + b + 1::m], Decimal(0)) * ey
        total += math.comb(s, b) * fact[b] * _pow_fact(z, s - b, fact) * fact[s - b] * sec
    return total


# ---------------------------------------------------------------------------
# root-of-unity forms in double precision, kept as cross-checks of the above


def c_function_printed(x: float, m: int, t: int, lam: float) -> float:
    """C(x, t) from its root-of-unity form with complex lower incomplete gammas."""
    acc = 0.0
    for k in range(m):
        w = unit_root(k, m)
        z = lam * x * w
        acc += ((lam * w) ** (-(m + t)) * np.exp(z) * lower_inc_gamma_int(m + t + 1, z)).real
    return x ** (m + t) + acc / m


def c_function(x: float, m: int, t: int, lam: float) -> float:
    """C(x, t) = (m+t)! lam^-(m+t) S_{m, m+t}(lam x), evaluated in decimal."""
    with localcontext() as ctx:
        ctx.prec = 40
        y = Decimal(lam) * Decimal(x)
        sec = section_terms(y, m, t + 1)[t] * y.exp()
        return float(_Factorials()[m + t] / Decimal(lam) ** (m + t) * sec)


def rho_constant(k: int, m: int, t: int, lam: float, M: float) -> complex:
    if k == 0:
        return complex(lam * M)
    w = unit_root(k, m)
    return w ** (-(m + t)) / (1.0 - w) * (1.0 - np.exp(-lam * M * (1.0 - w)))


def h_printed(m: int, t: int, lam: float, M: float) -> float:
    """H(t) from the root-of-unity form with the rho_k constants."""
    y = lam * M
    total = lower_inc_gamma_int(m + t + 1, y).real / math.factorial(m + t)
    acc = 0.0
    for k in range(m):
        w = unit_root(k, m)
        val = rho_constant(k, m, t, lam, M)
        for j in range(m + t + 1):
            val -= w ** (j - (m + t)) / math.factorial(j) * lower_inc_gamma_int(j + 1, y)
        acc += val.real
    return lam ** (-(m + t + 1)) * (total + acc / m)


def f_printed(m: int, t: int, s: int, lam: float, M: float, K: float) -> float:
    """F(t, s) from its root-of-unity form."""
    total = 0.0
    for b in range(s + 1):
        part = math.factorial(b) * M ** (m + t + b + 1) / math.factorial(m + t + b + 1)
        acc = 0.0
        for k in range(m):
            w = unit_root(k, m)
            beta = lam * w
            val = np.exp(lam * M * w) * beta ** (-(m + t + b + 1)) * lower_inc_gamma_int(b + 1, lam * M * w)
            for j in range(m + t + 1):
                val -= math.factorial(b) * beta ** (j - (m + t)) * M ** (j + b + 1) / math.factorial(j + b + 1)
            acc += val.real
        total += math.comb(s, b) * (K - M) ** (s - b) * (part + acc / m)
    return total


# ---------------------------------------------------------------------------
# coefficient systems


@dataclass
class FiniteSystem:
    """(I + A) alpha = 1 with the tables it came from, rounded to double.

    ``unit_area[r]`` and ``full_power[r]`` are the coefficients of alpha_r in
    the total mass and in P(B >= M).  ``F_table[t, s]`` and ``H_table[t]``
    hold the dimensionless lam^(m+t+1+s) F(t, s) and lam^(m+t+1) H(t).
    """

    A: np.ndarray
    unit_area: np.ndarray
    full_power: np.ndarray
    digits: int
    F_table: np.ndarray | None = None
    H_table: np.ndarray | None = None
    rho_k: np.ndarray | None = None
    exact: dict = field(default_factory=dict, repr=False)

    @property
    def matrix(self) -> np.ndarray:
        return np.eye(self.A.shape[0]) + self.A


class _Params:
    """Decimal copies of lam, M, K and the damping powers exp(-lam M q)."""

    def __init__(self, m: int, lam: float, M: float, K: float, q_count: int):
        self.m = m
        self.lam = Decimal(lam)
        self.M = Decimal(M)
        self.K = Decimal(K)
        self.lm = self.lam * self.M
        self.lk = self.lam * self.K
        step = (-self.lm).exp()
        self.damp = [Decimal(1)]
        for _ in range(q_count):
            self.damp.append(self.damp[-1] * step)
        self.fact = _Factorials()


def _partial_exp(p: _Params, r: int, q_range, shift: int) -> Decimal:
    """sum_q e^{-lam M (q+shift)} sum_{t=qm}^{(q+1)m-r-1} (lam((q+shift)M - K))^t / t!, over r!."""
    m = p.m
    total = Decimal(0)
    for q in q_range:
        z = p.lam * ((q + shift) * p.M - p.K)
        inner = sum((_pow_fact(z, t, p.fact) for t in range(q * m, (q + 1) * m - r)), Decimal(0))
        total += p.damp[q + shift] * inner
    return total / p.fact[r]


def _tail_block(p: _Params, r: int, s: int, q_max: int) -> Decimal:
    """sum_t C(s,t) t! (lam K)^(s-t) sum_q e^{-lam M(q+1)} [(lam Y)^a/a! - (lam Y)^b/b!], over r!."""
    m = p.m
    total = Decimal(0)
    for t in range(s + 1):
        pref = math.comb(s, t) * p.fact[t] * p.lk ** (s - t)
        inner = Decimal(0)
        for q in range(q_max + 1):
            z = p.lam * ((q + 1) * p.M - p.K)
            inner += p.damp[q + 1] * (_pow_fact(z, (q + 1) * m - r + t, p.fact)
                                      - _pow_fact(z, q * m + t, p.fact))
        total += pref * inner
    return total / p.fact[r]


def _be_matrix(p: _Params, l: int):
    m = p.m
    unit = [_partial_exp(p, r, range(l + 1), 0) for r in range(m)]
    full = [_partial_exp(p, r, range(l), 1) for r in range(m)]
    A = [[(1 - p.lk ** s) * unit[r] + p.lk ** s * full[r] + _tail_block(p, r, s, l - 1)
          for r in range(m)] for s in range(m)]
    return A, unit, full, {}


def _oo_matrix(p: _Params, l: int):
    m = p.m
    t_count = (l - 1) * m
    H = [h_scaled(m, t, p.lm) for t in range(t_count)]
    z_top = p.lam * (p.K - p.M)
    F = [[f_scaled(m, t, s, p.lm, z_top, p.fact) for s in range(m)] for t in range(t_count)]

    def low_part(r: int, vals) -> Decimal:
        # bottom-stripe bracket paired with a table indexed by t
        total = Decimal(0)
        for q in range(l - 1):
            z = p.lam * ((q + 1) * p.M - p.K)
            acc = sum((_pow_fact(z, (q + 1) * m - r - 1 - t, p.fact) * vals[t]
                       for t in range((q + 1) * m - r)), Decimal(0))
            if q >= 1:
                acc -= sum((_pow_fact(z, q * m - 1 - t, p.fact) * vals[t] for t in range(q * m)),
                           Decimal(0))
            total += p.damp[q + 1] * acc
        return total / p.fact[r]

    low_mass = [low_part(r, H) for r in range(m)]
    low_moment = [[low_part(r, [row[s] for row in F]) for r in range(m)] for s in range(m)]
    full = [_partial_exp(p, r, range(l - 1), 1) for r in range(m)]
    unit = [low_mass[r] + full[r] for r in range(m)]
    A = [[low_mass[r] - low_moment[s][r] + full[r] + _tail_block(p, r, s, l - 2)
          for r in range(m)] for s in range(m)]
    return A, unit, full, {"H": H, "F": F}


def _solve_decimal(A: list[list[Decimal]], b: list[Decimal]):
    """Gauss-Jordan elimination with partial pivoting; returns (x, 1-norm condition)."""
    n = len(A)
    aug = [row[:] + [b[i]] + [Decimal(int(i == j)) for j in range(n)] for i, row in enumerate(A)]
    for col in range(n):
        piv = max(range(col, n), key=lambda i: abs(aug[i][col]))
        if aug[piv][col] == 0:
            raise SingularMatrixError("stripe coefficient matrix is singular", condition=math.inf)
        aug[col], aug[piv] = aug[piv], aug[col]
        lead = aug[col][col]
        aug[col] = [a / lead for a in aug[col]]
        for i in range(n):
            f = aug[i][col]
            if i != col and f:
                aug[i] = [a - f * c for a, c in zip(aug[i], aug[col])]
    x = [row[n] for row in aug]
    inv = [row[n + 1:] for row in aug]
    norm_a = max(sum(abs(A[i][j]) for i in range(n)) for j in range(n))
    norm_inv = max(sum(abs(inv[i][j]) for i in range(n)) for j in range(n))
    return x, float(norm_a * norm_inv)


# ---------------------------------------------------------------------------
# the distribution


@dataclass
class StripeDist:
    policy: Policy
    m: int
    lam: float
    M: float
    K: float
    l: int
    Delta: float
    alpha: np.ndarray
    atom: float
    system: FiniteSystem
    condition: float = math.nan
    approx_l: bool = False
    residual: float = math.nan
    _alpha_exact: list = field(default_factory=list, repr=False)
    _pieces: dict = field(default_factory=dict, repr=False)

    @property
    def top_stripe(self) -> int:
        """Largest index of an upper stripe: l' for best-effort, l-2 for on-off."""
        if self.policy is Policy.ON_OFF:
            return self.l - 2
        return self.l - 1 if self.Delta == 0.0 else self.l

    @property
    def stripe_ids(self) -> list[int]:
        ids = list(range(self.top_stripe + 1))
        return ids + [self.l - 1] if self.policy is Policy.ON_OFF else ids

    def _is_low(self, n: int) -> bool:
        return self.policy is Policy.ON_OFF and n == self.l - 1

    def stripe_bounds(self, n: int) -> tuple[float, float]:
        if self._is_low(n):
            return 0.0, self.M
        lo = max(self.K - (n + 1) * self.M, 0.0)
        if n == self.top_stripe:
            lo = self.M if self.policy is Policy.ON_OFF else 0.0
        return lo, self.K - n * self.M

    def stripe_edges(self) -> np.ndarray:
        """Increasing seams inside (0, K) plus both endpoints."""
        pts = {0.0, self.K}
        for n in self.stripe_ids:
            pts.update(self.stripe_bounds(n))
        return np.array(sorted(pts))

    def stripe_index(self, x) -> np.ndarray:
        """Stripe holding each x; the on-off bottom stripe is index l - 1."""
        x = np.asarray(x, dtype=float)
        # stripes are [K-(n+1)M, K-nM): a point on a seam belongs to the stripe above it
        n = np.ceil((self.K - x) / self.M - 1e-12).astype(int) - 1
        n = np.clip(n, 0, self.top_stripe)
        if self.policy is Policy.ON_OFF:
            n = np.where(x < self.M, self.l - 1, n)
        return n

    # exact evaluation ------------------------------------------------------

    @property
    def _params(self) -> _Params:
        return self.system.exact["params"]

    @property
    def _coef(self) -> list[Decimal]:
        return self.system.exact["coef"]

    def exact_value(self, x: float, n: int | None = None) -> float:
        """Closed form of stripe n (default: the stripe holding x) in decimal arithmetic."""
        if n is None:
            n = int(self.stripe_index(x))
        with localcontext() as ctx:
            ctx.prec = self.system.digits
            xd = Decimal(float(x))
            return float(self._low_exact(xd) if self._is_low(n) else self._upper_exact(xd, n))

    def _upper_exact(self, x: Decimal, n: int) -> Decimal:
        m = self.m
        p = self._params
        a = self._coef
        a_sum = sum(a, Decimal(0))
        total = Decimal(0)
        for q in range(n + 1):
            z = p.lam * (x + q * p.M - p.K)
            top = (q + 1) * m
            pw = [Decimal(1)]
            for d in range(1, top):
                pw.append(pw[-1] * z / d)
            acc = sum((a[r] * pw[top - r - 1] for r in range(m)), Decimal(0))
            if q >= 1:
                acc -= a_sum * pw[q * m - 1]
            total += p.damp[q] * acc
        return p.lam * (-p.lam * x).exp() * total

    def _low_exact(self, x: Decimal) -> Decimal:
        m, l = self.m, self.l
        p = self._params
        a = self._coef
        a_sum = sum(a, Decimal(0))
        sec = section_terms(p.lam * x, m, (l - 1) * m)
        total = Decimal(0)
        for q in range(l - 1):
            z = p.lam * ((q + 1) * p.M - p.K)
            top = (q + 1) * m
            pw = [Decimal(1)]
            for d in range(1, top):
                pw.append(pw[-1] * z / d)
            acc = Decimal(0)
            for r in range(m):
                acc += a[r] * sum((pw[top - r - 1 - t] * sec[t] for t in range(top - r)), Decimal(0))
            if q >= 1:
                acc -= a_sum * sum((pw[q * m - 1 - t] * sec[t] for t in range(q * m)), Decimal(0))
            total += p.damp[q + 1] * acc
        return p.lam * total

    # double-precision evaluation -------------------------------------------

    def _piece(self, n: int) -> Chebyshev:
        if n in self._pieces:
            return self._pieces[n]
        lo, hi = self.stripe_bounds(n)
        # a degree-D polynomial times exp(-lam x) over width w needs about
        # D + e lam w / 2 Chebyshev terms
        degree = (n + 1) * self.m + 16 + int(math.ceil(0.5 * math.e * self.lam * (hi - lo)))
        if self._is_low(n):
            degree += (self.l - 1) * self.m
        with localcontext() as ctx:
            ctx.prec = self.system.digits
            if self._is_low(n):
                exact = self._low_exact
            else:
                exact = lambda xd: self._upper_exact(xd, n)
            f = lambda xs: np.array([float(exact(Decimal(float(v)))) for v in np.atleast_1d(xs)])
            while True:
                cheb = Chebyshev.interpolate(f, degree, domain=[lo, hi])
                c = np.abs(cheb.coef)
                # rounded node values leave a noise floor near 1e-15 of the peak
                if c[-3:].max() <= 1e-14 * c.max() or degree > 400:
                    break
                degree *= 2
        self._pieces[n] = cheb
        return cheb

    def pdf(self, x):
        """Density on [0, K); the atom at K is separate."""
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(~np.isfinite(x_arr)) or np.any(x_arr < 0) or np.any(x_arr >= self.K):
            raise DomainError(f"density is defined on [0, {self.K}); the atom at K is separate")
        out = np.empty_like(x_arr)
        idx = self.stripe_index(x_arr)
        for n in np.unique(idx):
            sel = idx == n
            out[sel] = self._piece(int(n))(x_arr[sel])
        return out if np.ndim(x) else float(out[0])

    stripe_pdf = pdf

    def stripe_value(self, x, n: int):
        """Stripe n's interpolant at x, wherever x lies (used for seam checks)."""
        return self._piece(n)(np.asarray(x, dtype=float))

    def _stripe_masses(self) -> list[tuple[float, float, int, float]]:
        if "masses" not in self._pieces:
            rows = []
            for n in self.stripe_ids:
                lo, hi = self.stripe_bounds(n)
                rows.append((lo, hi, n, float(self._piece(n).integ(lbnd=lo)(hi))))
            rows.sort()
            self._pieces["masses"] = rows
        return self._pieces["masses"]

    def cdf(self, x):
        """P(B <= x); for x >= K this includes the atom."""
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        rows = self._stripe_masses()
        out = np.empty_like(xs)
        for i, xi in enumerate(xs):
            if xi >= self.K:
                out[i] = 1.0
                continue
            parts = []
            for lo, hi, n, mass in rows:
                if xi >= hi:
                    parts.append(mass)
                elif xi > lo:
                    parts.append(float(self._piece(n).integ(lbnd=lo)(xi)))
            out[i] = math.fsum(parts) if xi >= 0 else 0.0
        return out if np.ndim(x) else float(out[0])

    def bin_masses(self, edges) -> np.ndarray:
        """Probability of each bin [e_i, e_{i+1}) of the continuous part."""
        edges = np.asarray(edges, dtype=float)
        return np.diff(self.cdf(np.minimum(edges, np.nextafter(self.K, 0.0))))

    def atom_from_alpha(self) -> float:
        """exp(-lam K) sum_r alpha_r / r! recomputed from the rounded alpha."""
        lk = self.lam * self.K
        return math.fsum(a * math.exp(-lk - math.lgamma(r + 1.0)) for r, a in enumerate(self.alpha))

    def p_full_power(self) -> float:
        """P(B >= M) from its closed form in alpha."""
        with localcontext() as ctx:
            ctx.prec = self.system.digits
            return float(sum((a * b for a, b in zip(self._alpha_exact, self.system.exact["full"])),
                             Decimal(0)))

    def unit_area_closed(self) -> float:
        """Total mass, atom included, from its closed form in alpha."""
        with localcontext() as ctx:
            ctx.prec = self.system.digits
            return float(sum((a * b for a, b in zip(self._alpha_exact, self.system.exact["unit"])),
                             Decimal(0)))

    def system_residual(self) -> float:
        """max |(I + A) alpha - 1| in the working precision."""
        return self.residual

    def mean(self) -> float:
        g = _density_on(self)
        return _quad(self, lambda u: u * g(u), 0.0, self.K, self.K) + self.K * self.atom


def _check_order(l: int, m: int):
    if l * m > MAX_STRIPE_ORDER:
        raise NumericError(f"l*m = {l * m} exceeds the supported stripe order {MAX_STRIPE_ORDER}",
                           l=l, m=m)


def _build(policy: Policy, eh: GammaEHModel, M: float, K: float, l: int, delta: float,
           approx: bool) -> StripeDist:
    m, lam = eh.m, eh.rate
    digits = working_digits(lam * K, l * m)
    with localcontext() as ctx:
        ctx.prec = digits
        p = _Params(m, lam, M, K, l + 2)
        builder = _be_matrix if policy is Policy.BEST_EFFORT else _oo_matrix
        A, unit, full, tables = builder(p, l)
        big = [[A[s][r] + int(s == r) for r in range(m)] for s in range(m)]
        alpha, cond = _solve_decimal(big, [Decimal(1)] * m)
        resid = max(abs(sum((big[s][r] * alpha[r] for r in range(m)), Decimal(0)) - 1)
                    for s in range(m))
        coef = [alpha[r] / p.fact[r] for r in range(m)]
        atom = float((-p.lk).exp() * sum(coef, Decimal(0)))
        system = FiniteSystem(
            np.array([[float(v) for v in row] for row in A]),
            np.array([float(v) for v in unit]), np.array([float(v) for v in full]), digits,
            exact={"params": p, "coef": coef, "unit": unit, "full": full})
        if tables:
            system.H_table = np.array([float(v) for v in tables["H"]])
            system.F_table = np.array([[float(v) for v in row] for row in tables["F"]])
            system.rho_k = np.array([[rho_constant(k, m, t, lam, M) for k in range(m)]
                                     for t in range(len(tables["H"]))])
    if not 0.0 < atom < 1.0:
        raise NumericError("buffer-full probability outside (0, 1)", atom=atom)
    return StripeDist(policy, m, lam, M, K, l, delta, np.array([float(a) for a in alpha]),
                      atom, system, cond, approx_l=approx, residual=float(resid),
                      _alpha_exact=alpha)


def be_finite_solve(eh: GammaEHModel, M: float, K: float) -> StripeDist:
    if not (math.isfinite(K) and K > M):
        raise ConfigError(f"finite capacity K must exceed M (K={K}, M={M})")
    l, delta = split_capacity(K, M)
    _check_order(l + (delta != 0.0), eh.m)
    return _build(Policy.BEST_EFFORT, eh, M, K, l, delta, False)


def oo_finite_solve(eh: GammaEHModel, M: float, K: float, approx_l: bool = False) -> StripeDist:
    """On-off solution; exact for K = l M with l >= 3.

    With ``approx_l`` a capacity that is not a whole multiple of M uses
    l = round(K / M) in the summation limits and the true K everywhere else.
    """
    if not (math.isfinite(K) and K > M):
        raise ConfigError(f"finite capacity K must exceed M (K={K}, M={M})")
    l, delta = split_capacity(K, M)
    if delta != 0.0:
        if not approx_l:
            raise ConfigError(f"on-off needs K to be a whole multiple of M (K/M = {K / M:.6g}); "
                              "set approx_l to round the stripe count")
        l = int(round(K / M))
    if l < 3:
        raise ConfigError(f"on-off needs K >= 3 M, got K/M = {K / M:.6g}")
    _check_order(l, eh.m)
    return _build(Policy.ON_OFF, eh, M, K, l, delta, delta != 0.0)


def solve_finite(policy, eh: GammaEHModel, M: float, K: float, approx_l: bool = False) -> StripeDist:
    if Policy.parse(policy) is Policy.BEST_EFFORT:
        return be_finite_solve(eh, M, K)
    return oo_finite_solve(eh, M, K, approx_l=approx_l)


# ---------------------------------------------------------------------------
# integral-equation residuals


def _quad(dist: StripeDist, f, a: float, b: float, scale: float = 1.0, extra=()) -> float:
    """Adaptive quadrature split at the stripe seams."""
    if b <= a:
        return 0.0
    pad = 1e-12 * dist.K
    pts = [t for t in list(dist.stripe_edges()[1:-1]) + list(extra) if a + pad < t < b - pad]
    return integrate(f, a, b, points=pts, abs_tol=1e-13 * scale, rel_tol=1e-12)[0]


def _density_on(dist: StripeDist):
    top = np.nextafter(dist.K, 0.0)
    return lambda u: dist.pdf(np.clip(u, 0.0, top))


def finite_equation_rhs(dist: StripeDist, eh: GammaEHModel, x: float, mass_low: float) -> float:
    """Right-hand side of the stationary density equation at x < K."""
    M, K = dist.M, dist.K
    g = _density_on(dist)
    f = lambda v: harvest_pdf(eh, np.maximum(v, 0.0))
    lam = dist.lam
    shifted = _quad(dist, lambda u: f(x - u + M) * g(u), M, min(M + x, K), lam, (x + M,))
    overflow = dist.atom * float(f(x - K + M)) if x >= K - M else 0.0
    if dist.policy is Policy.BEST_EFFORT:
        return float(f(x)) * mass_low + shifted + overflow
    direct = _quad(dist, lambda u: f(x - u) * g(u), 0.0, min(x, M), lam, (x,))
    return direct + shifted + overflow


def atom_equation_value(dist: StripeDist, eh: GammaEHModel) -> float:
    """Atom implied by the overflow balance, computed from the density alone."""
    M, K = dist.M, dist.K
    g = _density_on(dist)
    ccdf = lambda v: harvest_ccdf(eh, np.maximum(v, 0.0))
    upper = _quad(dist, lambda u: ccdf(K - u + M) * g(u), M, K)
    if dist.policy is Policy.BEST_EFFORT:
        low = float(ccdf(K)) * _quad(dist, g, 0.0, M)
    else:
        low = _quad(dist, lambda u: ccdf(K - u) * g(u), 0.0, M)
    return (low + upper) / (1.0 - float(ccdf(M)))


def finite_grid(dist: StripeDist, points: int = 50) -> np.ndarray:
    """``points`` stripe-interior points spread over [0, K)."""
    grid = (np.arange(points) + 0.5) * dist.K / points
    for s in dist.stripe_edges()[1:-1]:
        grid = np.where(np.abs(grid - s) < 1e-9 * dist.K, grid + 1e-4 * dist.M, grid)
    return grid


def integral_residual_finite(dist: StripeDist, eh: GammaEHModel, grid=None) -> dict:
    """Largest density-equation residual on ``grid``, the density scale, and the atom gap."""
    grid = finite_grid(dist) if grid is None else np.asarray(grid, dtype=float)
    g = _density_on(dist)
    mass_low = _quad(dist, g, 0.0, dist.M)
    lhs = dist.pdf(grid)
    rhs = np.array([finite_equation_rhs(dist, eh, float(x), mass_low) for x in grid])
    return {"density": float(np.max(np.abs(lhs - rhs))),
            "scale": float(np.max(np.abs(lhs))),
            "atom": abs(atom_equation_value(dist, eh) - dist.atom)}


def total_mass(dist: StripeDist) -> float:
    """Density integral over [0, K) plus the atom, by adaptive quadrature."""
    g = _density_on(dist)
    return _quad(dist, g, 0.0, dist.K) + dist.atom
