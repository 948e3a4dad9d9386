"""Numerical kernels: Halton draws, inverse normal CDF, BFGS, finite differences.

Everything in this module is deterministic given its inputs; nothing reads
global RNG state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import erfc

from .errors import EstimationError

__all__ = [
    "HaltonConfig",
    "OptimizerOptions",
    "OptimResult",
    "halton",
    "halton_matrix",
    "normal_draws",
    "inv_normal_cdf",
    "bfgs_minimize",
    "finite_diff_grad",
    "hessian_from_grad",
]


# ---------------------------------------------------------------------------
# Halton sequences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HaltonConfig:
    """Low-discrepancy draw settings.

    primes: one base per mixing dimension, in order.
    drop: leading sequence points discarded once, ahead of every individual's slice.
    n_draws: points per individual per dimension.
    scramble: apply a seeded digit permutation per base (digit 0 stays fixed).
    seed: permutation seed; unused when scramble is False.
    """

    primes: tuple[int, ...] = (2, 3)
    drop: int = 10
    n_draws: int = 500
    scramble: bool = False
    seed: int = 0

    def __post_init__(self):
        if len(self.primes) == 0:
            raise ValueError("primes must be non-empty")
        if len(set(self.primes)) != len(self.primes):
            raise ValueError("primes must be distinct")
        for p in self.primes:
            if p < 2:
                raise ValueError(f"invalid base {p}")
        if self.drop < 0:
            raise ValueError("drop must be >= 0")
        if self.n_draws < 1:
            raise ValueError("n_draws must be >= 1")


def _radical_inverse(indices: np.ndarray, base: int, perm: np.ndarray | None = None) -> np.ndarray:
    """Base-b radical inverse of non-negative integer indices (vectorized)."""
    rem = np.asarray(indices, dtype=np.int64).copy()
    out = np.zeros(rem.shape, dtype=np.float64)
    scale = np.float64(1.0)
    while np.any(rem > 0):
        scale /= base
        digit = rem % base
        if perm is not None:
            digit = perm[digit]
        out += digit * scale
        rem //= base
    return out


def _digit_permutation(base: int, seed: int, dim: int) -> np.ndarray:
    # digit 0 stays fixed so finite expansions keep their trailing zeros
    rng = np.random.default_rng([seed, base, dim])
    perm = np.arange(base)
    perm[1:] = rng.permutation(perm[1:])
    return perm


def halton(n_points: int, base: int, start: int = 1) -> np.ndarray:
    """First ``n_points`` of the base-``base`` Halton sequence from index ``start``."""
    if n_points < 0:
        raise ValueError("n_points must be >= 0")
    if start < 0:
        raise ValueError("start must be >= 0")
    if base < 2:
        raise ValueError(f"invalid base {base}")
    return _radical_inverse(np.arange(start, start + n_points), base)


def halton_matrix(config: HaltonConfig, n_individuals: int) -> np.ndarray:
    """Uniform draws shaped (n_individuals, n_draws, n_dims).

    A single global sequence per dimension; individual ``i`` takes the
    contiguous index slice ``[drop + i*n_draws + 1, drop + (i+1)*n_draws]``.
    Growing the individual count therefore never changes earlier
    individuals' draws.
    """
    if n_individuals < 0:
        raise ValueError("n_individuals must be >= 0")
    total = n_individuals * config.n_draws
    idx = config.drop + 1 + np.arange(total)
    dims = []
    for d, p in enumerate(config.primes):
        perm = _digit_permutation(p, config.seed, d) if config.scramble else None
        dims.append(_radical_inverse(idx, p, perm))
    stacked = np.stack(dims, axis=-1)  # (total, n_dims)
    return stacked.reshape(n_individuals, config.n_draws, len(config.primes))


def normal_draws(config: HaltonConfig, n_individuals: int) -> np.ndarray:
    """Standard-normal draws (n_individuals, n_draws, n_dims) via the inverse CDF."""
    return inv_normal_cdf(halton_matrix(config, n_individuals))


# ---------------------------------------------------------------------------
# Inverse normal CDF
# ---------------------------------------------------------------------------

# Rational approximation coefficients (central region and tails), then one
# Halley refinement against erfc. The raw approximation is good to ~1e-9;
# the refined result is accurate to a few ulp over (1e-12, 1-1e-12).
_ICDF_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
           1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_ICDF_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
           6.680131188771972e+01, -1.328068155288572e+01)
_ICDF_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
           -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_ICDF_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
           3.754408661907416e+00)
_ICDF_SPLIT = 0.02425


def _icdf_lower(u: np.ndarray) -> np.ndarray:
    """Quantile for u in (0, 0.5]: rational approximation plus one Halley step.

    Restricting to the lower half keeps the refinement's erfc call in its
    fully accurate regime (no cancellation against 1).
    """
    a, b, c, d = _ICDF_A, _ICDF_B, _ICDF_C, _ICDF_D
    x = np.empty_like(u)

    lo = u < _ICDF_SPLIT
    mid = ~lo
    if np.any(mid):
        q = u[mid] - 0.5
        r = q * q
        num = ((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]
        den = ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
        x[mid] = num * q / den
    if np.any(lo):
        q = np.sqrt(-2.0 * np.log(u[lo]))
        num = ((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]
        den = (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        x[lo] = num / den

    # Halley refinement; x <= 0 here so erfc sees a non-negative argument
    e = 0.5 * erfc(-x / np.sqrt(2.0)) - u
    expo = np.minimum(x * x / 2.0, 700.0)
    t = e * np.sqrt(2.0 * np.pi) * np.exp(expo)
    return x - t / (1.0 + x * t / 2.0)


def inv_normal_cdf(u):
    """Standard normal quantile function.

    Accepts a scalar or array with every element in the open interval (0, 1);
    absolute error is a few ulp over (1e-12, 1 - 1e-12), far inside the 1e-9
    contract. Values outside (0, 1) raise ValueError. For u > 0.5 the
    complement 1 - u is formed first (exact in floating point for u >= 0.5),
    so tail accuracy is symmetric.
    """
    arr = np.asarray(u, dtype=np.float64)
    if arr.size and (np.any(arr <= 0.0) | np.any(arr >= 1.0) | np.any(~np.isfinite(arr))):
        raise ValueError("inv_normal_cdf requires u in the open interval (0, 1)")
    flat = np.atleast_1d(arr).astype(np.float64, copy=True)
    upper = flat > 0.5
    flat[upper] = 1.0 - flat[upper]
    x = _icdf_lower(flat)
    x[upper] = -x[upper]
    if np.isscalar(u) or np.ndim(u) == 0:
        return float(x[0])
    return x.reshape(arr.shape)


# ---------------------------------------------------------------------------
# BFGS with a strong Wolfe line search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OptimizerOptions:
    """Settings for bfgs_minimize.

    gradient_tolerance: infinity-norm convergence threshold on the gradient.
    step_tolerance: infinity-norm threshold on the accepted step.
    max_iterations: outer iteration cap.
    sufficient_decrease / curvature: strong Wolfe constants, with
        0 < sufficient_decrease < curvature < 1.
    """

    gradient_tolerance: float = 1e-5
    step_tolerance: float = 1e-10
    max_iterations: int = 200
    sufficient_decrease: float = 1e-4
    curvature: float = 0.9

    def __post_init__(self):
        if not (0.0 < self.sufficient_decrease < self.curvature < 1.0):
            raise ValueError("need 0 < sufficient_decrease < curvature < 1")
        if self.gradient_tolerance <= 0 or self.step_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class OptimResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    status: str  # gradient_converged | step_converged | max_iterations | line_search_failed | non_finite
    iterations: int
    n_evals: int

    @property
    def converged(self) -> bool:
        return self.status == "gradient_converged"


def _norm_inf(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


_FINITE_RETRIES = 60  # halvings allowed when a trial point is non-finite


def _wolfe_search(fun, x, p, f0, g0, opts):
    """Strong Wolfe line search (bracket then zoom).

    Returns (alpha, f, g, evals, ok). Non-finite trial values trigger step
    backtracking; persistent non-finite values fail the search.
    """
    c1, c2 = opts.sufficient_decrease, opts.curvature
    dphi0 = float(g0 @ p)
    evals = 0

    def trial(a):
        nonlocal evals
        fa, ga = fun(x + a * p)
        evals += 1
        ok = np.isfinite(fa) and np.all(np.isfinite(ga))
        return (float(fa), ga, float(ga @ p)) if ok else (np.inf, None, np.nan)

    def interp(a_lo, a_hi):
        # plain bisection; robust and steps are cheap relative to fun
        return 0.5 * (a_lo + a_hi)

    def zoom(a_lo, f_lo, d_lo, g_lo, a_hi, f_hi):
        nonlocal evals
        for _ in range(40):
            if abs(a_hi - a_lo) <= 1e-14 * max(1.0, abs(a_lo)):
                break
            a = interp(a_lo, a_hi)
            fa, ga, da = trial(a)
            if ga is None:
                a_hi = a  # non-finite region sits past a, shrink toward lo
                continue
            if fa > f0 + c1 * a * dphi0 or fa >= f_lo:
                a_hi, f_hi = a, fa
            else:
                if abs(da) <= -c2 * dphi0:
                    return a, fa, ga, True
                if da * (a_hi - a_lo) >= 0:
                    a_hi, f_hi = a_lo, f_lo
                a_lo, f_lo, d_lo, g_lo = a, fa, da, ga
        # interval exhausted: accept the best sufficient-decrease point if any
        if g_lo is not None and f_lo <= f0 + c1 * a_lo * dphi0 and a_lo > 0:
            return a_lo, f_lo, g_lo, True
        return 0.0, f0, g0, False

    alpha_prev, f_prev, d_prev, g_prev = 0.0, f0, dphi0, g0
    alpha = 1.0
    shrink = 0
    first = True
    for _ in range(30):
        fa, ga, da = trial(alpha)
        if ga is None:
            shrink += 1
            if shrink > _FINITE_RETRIES:
                return 0.0, f0, g0, evals, False
            alpha = alpha_prev + 0.5 * (alpha - alpha_prev)
            continue
        if fa > f0 + c1 * alpha * dphi0 or (not first and fa >= f_prev):
            a, f, g, ok = zoom(alpha_prev, f_prev, d_prev, g_prev, alpha, fa)
            return a, f, g, evals, ok
        if abs(da) <= -c2 * dphi0:
            return alpha, fa, ga, evals, True
        if da >= 0:
            a, f, g, ok = zoom(alpha, fa, da, ga, alpha_prev, f_prev)
            return a, f, g, evals, ok
        alpha_prev, f_prev, d_prev, g_prev = alpha, fa, da, ga
        alpha *= 2.0
        first = False
    return 0.0, f0, g0, evals, False


def bfgs_minimize(fun: Callable, x0, options: OptimizerOptions | None = None,
                  callback: Callable | None = None) -> OptimResult:
    """Minimize fun(x) -> (value, gradient) by BFGS with a strong Wolfe search.

    Deterministic given (fun, x0, options). The inverse Hessian approximation
    is rescaled after the first accepted step; updates that would lose
    positive definiteness are skipped. ``callback(iteration, x, f)`` fires
    once for the start point and once per accepted step.
    """
    opts = options or OptimizerOptions()
    x = np.array(x0, dtype=np.float64, copy=True)
    f, g = fun(x)
    f = float(f)
    g = np.asarray(g, dtype=np.float64)
    n_evals = 1
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        return OptimResult(x, f, g, "non_finite", 0, n_evals)
    if callback is not None:
        callback(0, x, f)

    H = np.eye(x.size)
    first_update = True
    for it in range(1, opts.max_iterations + 1):
        if _norm_inf(g) <= opts.gradient_tolerance:
            return OptimResult(x, f, g, "gradient_converged", it - 1, n_evals)
        p = -(H @ g)
        if float(g @ p) >= 0.0:
            # curvature model broke down; restart from steepest descent
            H = np.eye(x.size)
            first_update = True
            p = -g
        alpha, f_new, g_new, evals, ok = _wolfe_search(fun, x, p, f, g, opts)
        n_evals += evals
        if not ok:
            return OptimResult(x, f, g, "line_search_failed", it, n_evals)
        s = alpha * p
        y = g_new - g
        x, f, g = x + s, f_new, g_new
        if callback is not None:
            callback(it, x, f)
        if _norm_inf(s) <= opts.step_tolerance:
            status = ("gradient_converged" if _norm_inf(g) <= opts.gradient_tolerance
                      else "step_converged")
            return OptimResult(x, f, g, status, it, n_evals)
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if first_update:
                H *= sy / float(y @ y)
                first_update = False
            rho = 1.0 / sy
            Hy = H @ y
            H -= rho * (np.outer(s, Hy) + np.outer(Hy, s))
            H += rho * (rho * float(y @ Hy) + 1.0) * np.outer(s, s)

    status = ("gradient_converged" if _norm_inf(g) <= opts.gradient_tolerance
              else "max_iterations")
    return OptimResult(x, f, g, status, opts.max_iterations, n_evals)


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------

def finite_diff_grad(fun: Callable, x, step: float | None = None) -> np.ndarray:
    """Central-difference gradient of a scalar function.

    Per-coordinate step is ``step`` when given, else 1e-5 * (|x_i| + 1).
    """
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        h = step if step is not None else 1e-5 * (abs(x[i]) + 1.0)
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2.0 * h)
    return g


def hessian_from_grad(grad_fun: Callable, x, step: float = 1e-5) -> np.ndarray:
    """Hessian by central finite differences of an analytic gradient.

    Column i uses step 1e-5 * (|x_i| + 1) by default; the result is
    symmetrized. Non-finite entries raise EstimationError.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    H = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        h = step * (abs(x[i]) + 1.0)
        e = np.zeros_like(x)
        e[i] = h
        H[:, i] = (grad_fun(x + e) - grad_fun(x - e)) / (2.0 * h)
    if not np.all(np.isfinite(H)):
        raise EstimationError("hessian_non_finite",
                              "finite-difference Hessian contains non-finite entries")
    return 0.5 * (H + H.T)
