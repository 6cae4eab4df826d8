"""Special functions, quadrature and a small dense solver.

Everything here works in double precision. Complex arguments are plain Python
``complex`` values; real-valued helpers accept floats or numpy arrays where
noted.
"""

from __future__ import annotations

import cmath
import heapq
import math

import numpy as np

MAX_FACTORIAL_INDEX = 170
LOG_FACT = np.array([math.lgamma(k + 1.0) for k in range(MAX_FACTORIAL_INDEX + 1)])
FACT = np.array([math.factorial(k) for k in range(MAX_FACTORIAL_INDEX + 1)], dtype=float)


class NumericError(ArithmeticError):
    """A numerical routine failed to produce a trustworthy value."""

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


class SingularMatrixError(NumericError):
    pass


class QuadratureError(NumericError):
    pass


class RegimeError(ValueError):
    """Requested quantity does not exist for the given parameters."""


def factorial(k: int) -> float:
    if k < 0 or k > MAX_FACTORIAL_INDEX:
        raise NumericError(f"factorial index {k} outside supported range", index=k)
    return FACT[k]


def log_factorial(k: int) -> float:
    """log(k!); unlike :func:`factorial` this never overflows."""
    if k < 0:
        raise NumericError(f"factorial index {k} is negative", index=k)
    return LOG_FACT[k] if k <= MAX_FACTORIAL_INDEX else math.lgamma(k + 1.0)


# ---------------------------------------------------------------------------
# Lambert W, principal branch

_INV_E = math.exp(-1.0)


def _w0_seed(z: complex) -> complex:
    if abs(z + _INV_E) < 0.5:
        p = cmath.sqrt(2.0 * (math.e * z + 1.0))
        return -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    if abs(z) < 0.3:
        return z - z * z + 1.5 * z ** 3
    if abs(z) < 3.0:
        return cmath.log(1.0 + z)
    l1 = cmath.log(z)
    l2 = cmath.log(l1)
    return l1 - l2 + l2 / l1


def lambert_w0(z, max_iter: int = 100, tol: float = 1e-14) -> complex:
    """Principal branch W0 via Halley iteration.

    Real inputs at or above -1/e give a result whose imaginary part is exactly
    zero.
    """
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise NumericError("non-finite Lambert W argument", z=z)
    real_input = z.imag == 0.0 and z.real >= -_INV_E
    if z == 0:
        return 0j
    if abs(z + _INV_E) <= 1e-15:
        return complex(-1.0, 0.0)
    w = _w0_seed(z)
    if real_input:
        w = complex(w.real, 0.0)
    for _ in range(max_iter):
        ew = cmath.exp(w)
        f = w * ew - z
        wp1 = w + 1.0
        if wp1 == 0:
            break
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        if denom == 0:
            break
        step = f / denom
        w = w - step
        if abs(step) <= tol * (1.0 + abs(w)):
            break
    else:
        raise NumericError("Lambert W iteration did not converge", z=z, last=w)
    if abs(w * cmath.exp(w) - z) > 1e-12 * (1.0 + abs(z)) and abs(z + _INV_E) > 1e-6:
        raise NumericError("Lambert W residual too large", z=z, last=w)
    if real_input:
        w = complex(w.real, 0.0)
    return w


# ---------------------------------------------------------------------------
# Incomplete gamma functions for integer order


def exp_tail(n: int, z: complex) -> complex:
    """Sum over k >= n of z**k / k!, summed directly (intended for |z| < n + 20)."""
    if z == 0:
        return complex(1.0 if n == 0 else 0.0)
    term = cmath.exp(n * cmath.log(z) - log_factorial(n)) if n > 0 else 1.0 + 0j
    total = term
    k = n
    while True:
        k += 1
        term = term * z / k
        total += term
        if abs(term) <= 1e-17 * abs(total) and k > abs(z):
            break
        if k > n + 2000:
            raise NumericError("exponential tail series did not converge", n=n, z=z)
    return total


def _check_exp_range(z: complex, n: int):
    if -z.real > 700.0 or abs(z) > 1e300:
        raise NumericError("incomplete gamma argument overflows", n=n, z=z)


def lower_inc_gamma_int(n: int, z) -> complex:
    """gamma(n, z) = (n-1)! * (1 - exp(-z) * sum_{k<n} z^k/k!)."""
    if n < 1:
        raise ValueError("order must be a positive integer")
    z = complex(z)
    if z == 0:
        return 0j
    _check_exp_range(z, n)
    if abs(z) < n:
        # 1 - e^{-z} * partial sum equals e^{-z} times the exponential tail
        return factorial(n - 1) * cmath.exp(-z) * exp_tail(n, z)
    partial = 0j
    term = 1.0 + 0j
    for k in range(n):
        partial += term
        term = term * z / (k + 1)
    return factorial(n - 1) * (1.0 - cmath.exp(-z) * partial)


def upper_inc_gamma_int(n: int, z) -> complex:
    """Gamma(n, z) = (n-1)! * exp(-z) * sum_{k<n} z^k/k!."""
    if n < 1:
        raise ValueError("order must be a positive integer")
    z = complex(z)
    _check_exp_range(z, n)
    partial = 0j
    term = 1.0 + 0j
    for k in range(n):
        partial += term
        term = term * z / (k + 1)
    return factorial(n - 1) * cmath.exp(-z) * partial


def regularized_lower_gamma(n: int, y):
    """P(n, y) = gamma(n, y)/(n-1)! for real y >= 0, vectorised over y."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    flat_y = y.ravel()
    flat = out.ravel()
    for i, yi in enumerate(flat_y):
        if yi <= 0.0:
            flat[i] = 0.0
        elif yi < n:
            # tail series, every term positive
            log_term = n * math.log(yi) - log_factorial(n) - yi
            term = math.exp(log_term)
            total = term
            k = n
            while term > 1e-18 * total:
                k += 1
                term *= yi / k
                total += term
            flat[i] = min(total, 1.0)
        else:
            total = 0.0
            for k in range(n):
                total += math.exp(k * math.log(yi) - log_factorial(k) - yi)
            flat[i] = max(1.0 - total, 0.0) if total < 1.0 else 0.0
    return out if out.shape else float(out)


def regularized_upper_gamma(n: int, y):
    """Q(n, y) = Gamma(n, y)/(n-1)! for real y >= 0."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    for i, yi in enumerate(y.ravel()):
        if yi <= 0.0:
            out.ravel()[i] = 1.0
        elif yi < n:
            out.ravel()[i] = 1.0 - regularized_lower_gamma(n, yi)
        else:
            out.ravel()[i] = math.fsum(
                math.exp(k * math.log(yi) - log_factorial(k) - yi) for k in range(n))
    return out if out.shape else float(out)


def exp_section(y, m: int, t: int):
    """Sum over p >= 0 of y**(p*m + t) / (p*m + t)!  for real y >= 0.

    This is the m-section of the exponential series starting at index t.  It
    is what averaging exp(y * w) over the m-th roots of unity w collapses to,
    so it replaces expressions of the form x^t + mean_k Re{... e^{z_k} gamma(...)}
    without their cancellation.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    total = np.zeros_like(y)
    pos = y > 0
    if t == 0:
        total[~pos] = 1.0
    if not np.any(pos):
        return total
    yp = y[pos]
    logy = np.log(yp)
    acc = np.zeros_like(yp)
    j = t
    ymax = float(yp.max())
    while True:
        term = np.exp(j * logy - log_factorial(j))
        acc += term
        if j > ymax and np.all(term <= 1e-17 * acc):
            break
        j += m
    total[pos] = acc
    return total


def log_factorials(count: int) -> np.ndarray:
    """log(j!) for j = 0..count-1."""
    if count <= MAX_FACTORIAL_INDEX + 1:
        return LOG_FACT[:count].copy()
    extra = np.cumsum(np.log(np.arange(MAX_FACTORIAL_INDEX + 1, count, dtype=float)))
    return np.concatenate([LOG_FACT, LOG_FACT[-1] + extra])


def poisson_terms(y, count: int) -> np.ndarray:
    """Matrix of exp(-y) y^j / j! with one row per entry of ``y`` and j < count."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    j = np.arange(count, dtype=float)
    out = np.zeros((y.size, count))
    pos = y > 0
    if np.any(pos):
        yp = y[pos][:, None]
        out[pos] = np.exp(j[None, :] * np.log(yp) - yp - log_factorials(count)[None, :])
    out[~pos, 0] = 1.0
    return out


# ---------------------------------------------------------------------------
# Adaptive Gauss-Kronrod (7/15) quadrature

_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_WK = np.concatenate([_WGK[:-1], _WGK[::-1]])
_WG_FULL = np.zeros(15)
_WG_FULL[[1, 3, 5, 13, 11, 9]] = np.concatenate([_WG[:3], _WG[:3]])
_WG_FULL[7] = _WG[3]


def _gk_many(f, a: np.ndarray, b: np.ndarray):
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    x = mid[:, None] + half[:, None] * _NODES[None, :]
    fx = np.asarray(f(x.ravel())).reshape(x.shape)
    kron = half * (fx @ _WK)
    gauss = half * (fx @ _WG_FULL)
    return kron, np.abs(kron - gauss)


def integrate(f, a: float, b: float, points=None, abs_tol: float = 1e-12,
              rel_tol: float = 1e-12, max_intervals: int = 20000):
    """Adaptive G7/K15 quadrature of a vectorised integrand on [a, b].

    ``points`` are interior breakpoints (kinks, seams).  Returns
    ``(value, error_estimate)``; raises QuadratureError when the budget runs
    out before the tolerance is met.
    """
    if b == a:
        return 0.0, 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    edges = [a]
    if points is not None:
        edges += sorted(p for p in points if a < p < b)
    edges.append(b)
    lo = np.array(edges[:-1], dtype=float)
    hi = np.array(edges[1:], dtype=float)
    vals, errs = _gk_many(f, lo, hi)
    heap = [(-e, l, h, v) for e, l, h, v in zip(errs, lo, hi, vals)]
    heapq.heapify(heap)
    total = float(np.sum(vals))
    err_total = float(np.sum(errs))
    count = len(heap)
    while err_total > max(abs_tol, rel_tol * abs(total)):
        if count >= max_intervals:
            raise QuadratureError("adaptive quadrature budget exhausted",
                                  value=total, error=err_total)
        # split the worst handful of intervals at once to amortise numpy overhead
        batch = [heapq.heappop(heap) for _ in range(min(len(heap), 16))]
        worst_lo = np.array([item[1] for item in batch])
        worst_hi = np.array([item[2] for item in batch])
        mids = 0.5 * (worst_lo + worst_hi)
        new_lo = np.concatenate([worst_lo, mids])
        new_hi = np.concatenate([mids, worst_hi])
        new_vals, new_errs = _gk_many(f, new_lo, new_hi)
        for item in batch:
            total -= item[3]
            err_total += item[0]
        for e, l, h, v in zip(new_errs, new_lo, new_hi, new_vals):
            heapq.heappush(heap, (-e, l, h, v))
            total += v
            err_total += e
        count += len(batch)
        widths = new_hi - new_lo
        if np.any(widths <= 1e-14 * np.maximum(np.abs(new_lo), np.abs(new_hi))):
            raise QuadratureError("adaptive quadrature reached machine resolution",
                                  value=total, error=err_total)
    # recompute the sum from the leaves to shed accumulated rounding
    total = math.fsum(item[3] for item in heap)
    return sign * total, err_total


# ---------------------------------------------------------------------------
# Modified Bessel function of the second kind, integer order


def bessel_k_int(n: int, x: float) -> float:
    """K_n(x) from the integral of exp(-x cosh t) cosh(n t) over t >= 0."""
    if not x > 0:
        raise ValueError("bessel_k_int requires x > 0")
    n = abs(int(n))

    def log_integrand(t):
        return -x * (np.cosh(t) - 1.0) + n * t

    # locate the peak of the scaled integrand, then where it has decayed by e^-45
    t_peak = math.asinh(n / x) if n > 0 else 0.0
    log_peak = float(log_integrand(t_peak))
    t_end = max(t_peak, 1.0)
    while float(log_integrand(t_end)) > log_peak - 45.0:
        t_end *= 1.5

    def integrand(t):
        # cosh(n t) e^{-x(cosh t - 1)} scaled by the peak value
        return 0.5 * (np.exp(log_integrand(t) - log_peak)
                      + np.exp(-x * (np.cosh(t) - 1.0) - n * t - log_peak))

    pts = [t_peak] if 0 < t_peak < t_end else None
    val, _ = integrate(integrand, 0.0, t_end, points=pts, abs_tol=1e-300, rel_tol=1e-13)
    return math.exp(log_peak - x) * val


# ---------------------------------------------------------------------------
# The N-kernel used by the outage expressions


def n_kernel(t: int, a: float, b: float, c: float, d: int) -> float:
    """Integral over (0, 1] of exp(-a/x - b x) x^-t (x - c)^d / d!."""
    if a < 0 or b < 0 or t < 0 or d < 0:
        raise ValueError("n_kernel requires a, b, t, d >= 0")
    if not all(math.isfinite(v) for v in (a, b, c)):
        raise ValueError("n_kernel parameters must be finite")
    lowest_power = 0 if c != 0 else d
    if a == 0 and t >= lowest_power + 1:
        raise ValueError(f"n_kernel diverges at 0 for a=0, t={t}, c={c}, d={d}")
    log_dfact = log_factorial(d)

    def integrand(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            expo = -a / x - b * x - t * np.log(x) - log_dfact
            val = np.exp(expo) * (x - c) ** d
        return np.where(x > 0, val, 0.0)

    lo = 0.0
    if a > 0:
        # below eps the integrand is e^{-a/x} x^{-t} times a bounded factor; cut it off
        eps = 1.0
        while eps > 1e-300 and (-a / eps - t * math.log(eps)) > -45.0:
            eps *= 0.5
        if eps <= 1e-300 and t > 0:
            raise NumericError("n_kernel argument a too small to resolve the singular end",
                               t=t, a=a)
        lo = eps if 1e-300 < eps < 1.0 else 0.0
    scale = max(abs(1.0 - c), abs(c), 1.0) ** d / math.exp(log_dfact)
    with np.errstate(over="ignore", invalid="ignore"):
        val, _ = integrate(integrand, lo, 1.0, abs_tol=1e-14 * min(scale, 1e300),
                           rel_tol=1e-13)
    if not math.isfinite(val):
        raise NumericError("n_kernel overflowed", t=t, a=a, b=b, c=c, d=d)
    return val


# ---------------------------------------------------------------------------
# Dense linear solver


def _lu_factor(a: np.ndarray):
    a = a.copy()
    n = a.shape[0]
    perm = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if a[p, k] == 0:
            raise SingularMatrixError("matrix is exactly singular", condition=math.inf)
        if p != k:
            a[[k, p]] = a[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        a[k + 1:, k] /= a[k, k]
        a[k + 1:, k + 1:] -= np.outer(a[k + 1:, k], a[k, k + 1:])
    return a, perm


def _lu_solve(lu: np.ndarray, perm: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = lu.shape[0]
    y = b[perm].astype(complex)
    for i in range(n):
        y[i] -= lu[i, :i] @ y[:i]
    for i in range(n - 1, -1, -1):
        y[i] = (y[i] - lu[i, i + 1:] @ y[i + 1:]) / lu[i, i]
    return y


def solve_linear(a, b, max_condition: float = 1e12, return_condition: bool = False):
    """Solve A x = b by LU with partial pivoting plus one refinement step.

    Columns are equilibrated first; the 1-norm condition number of the
    equilibrated matrix is checked against ``max_condition``.
    """
    a = np.array(a, dtype=complex)
    b = np.array(b, dtype=complex).ravel()
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] != b.size:
        raise ValueError("solve_linear needs a square matrix and matching vector")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise NumericError("non-finite entries in linear system")
    col_scale = np.max(np.abs(a), axis=0)
    if np.any(col_scale == 0):
        raise SingularMatrixError("matrix has a zero column", condition=math.inf)
    scaled = a / col_scale
    lu, perm = _lu_factor(scaled)
    n = a.shape[0]
    inv = np.column_stack([_lu_solve(lu, perm, col) for col in np.eye(n)])
    cond = float(np.max(np.sum(np.abs(scaled), axis=0)) * np.max(np.sum(np.abs(inv), axis=0)))
    if not math.isfinite(cond) or cond > max_condition:
        raise SingularMatrixError("linear system is ill-conditioned", condition=cond)
    y = _lu_solve(lu, perm, b)
    y = y + _lu_solve(lu, perm, b - scaled @ y)
    x = y / col_scale
    return (x, cond) if return_condition else x
