r"""Quasi-periodic Laplace Green function of the unit-period strip.

The kernel is the lattice sum of the free-space Laplace Green function
``ln|x| / (2 pi)`` with Bloch phase ``exp(i alpha m)`` over the horizontal
lattice ``m v1``.  Poisson summation turns it into the spectral series

.. math::

    G^{\alpha}(x) = -\sum_{k} \frac{e^{i\beta_k x_1} e^{-|\beta_k||x_2|}}{2|\beta_k|},
    \qquad \beta_k = 2\pi k + \alpha,

which converges geometrically away from ``x2 = 0`` and only conditionally
on that line.  Three evaluators are provided:

* :func:`eval_series` sums the truncated series ``|k| <= M`` term by term;
* :func:`series_matrix` evaluates the same truncated series between two
  vertically separated point sets as a factorized (low-rank) product;
* :func:`eval_nearfield_split` splits off the logarithmic singularity in
  closed form and returns a finite remainder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import zeta

__all__ = [
    "GreenParams",
    "InvalidParameterError",
    "NearFieldRangeError",
    "NearFieldSplit",
    "LOG_COEFFICIENT",
    "eval_series",
    "eval_periodic0",
    "eval_nearfield_split",
    "nearfield_remainder",
    "NearFieldGeometry",
    "remainder_from_geometry",
    "polylog_tails",
    "series_matrix",
    "green",
]

TWO_PI = 2.0 * math.pi
LOG_COEFFICIENT = 1.0 / TWO_PI

# exp(-45) ~ 3e-20: spectral terms damped below this contribute nothing to a double.
DEFAULT_DAMPING_CUTOFF = 45.0


class InvalidParameterError(ValueError):
    """Kernel requested at a parameter where it is undefined (alpha = 0)."""


class NearFieldRangeError(ValueError):
    """Split form requested outside its near-field regime."""


@dataclass(frozen=True)
class GreenParams:
    alpha: float
    fourier_terms: int = 200

    def __post_init__(self):
        if not abs(self.alpha) <= math.pi:
            raise InvalidParameterError(f"|alpha| must be <= pi, got {self.alpha!r}")
        if int(self.fourier_terms) < 1:
            raise InvalidParameterError("fourier_terms must be >= 1")

    def require_nonzero(self) -> None:
        if self.alpha == 0.0:
            raise InvalidParameterError("alpha = 0: the k = 0 mode divides by |alpha|")


class NearFieldSplit(NamedTuple):
    log_coefficient: float
    remainder: complex | np.ndarray


def _split_xy(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise ValueError("points must have a trailing dimension of size 2")
    return x[..., 0], x[..., 1]


def _scalar_or_array(v: np.ndarray):
    return complex(v) if v.ndim == 0 else v


def _frac(x1: np.ndarray) -> np.ndarray:
    return x1 - np.floor(x1)


def _kahan_add(total, comp, term):
    y = term - comp
    t = total + y
    comp = (t - total) - y
    return t, comp


def eval_series(params: GreenParams, x) -> complex | np.ndarray:
    """Truncated spectral series ``|k| <= M``, summed in ascending ``k``.

    ``x`` may be a single point or an array of points with trailing size 2.
    The sum is Kahan-compensated; the phase ``exp(2 pi i k x1)`` uses the
    fractional part of ``x1`` so that unit shifts act exactly.
    """
    params.require_nonzero()
    x1, x2 = _split_xy(x)
    a = params.alpha
    ax2 = np.abs(x2)
    f = _frac(x1)
    total = np.zeros(np.shape(x1), dtype=complex)
    comp = np.zeros_like(total)
    m = int(params.fourier_terms)
    for k in range(-m, m + 1):
        beta = TWO_PI * k + a
        ab = abs(beta)
        term = np.exp(1j * (a * x1 + TWO_PI * k * f) - ab * ax2) / (-2.0 * ab)
        total, comp = _kahan_add(total, comp, term)
    return _scalar_or_array(total)


def eval_periodic0(fourier_terms: int, x) -> complex | np.ndarray:
    """Truncated series of the periodic (alpha = 0) kernel.

    ``|x2| / 2 - sum_{0 < |k| <= M} exp(2 pi i k x1 - 2 pi |k x2|) / (4 pi |k|)``.
    Diagnostics only; the solver never runs at alpha = 0.
    """
    x1, x2 = _split_xy(x)
    ax2 = np.abs(x2)
    f = _frac(x1)
    total = np.asarray(ax2 / 2.0, dtype=complex).copy()
    comp = np.zeros_like(total)
    m = int(fourier_terms)
    for k in range(-m, m + 1):
        if k == 0:
            continue
        term = np.exp(1j * TWO_PI * k * f - TWO_PI * abs(k) * ax2) / (-4.0 * math.pi * abs(k))
        total, comp = _kahan_add(total, comp, term)
    return _scalar_or_array(total)


# Correction series of the split form: terms k = 1..CORRECTION_DIRECT_TERMS
# are summed directly, the rest through polylogarithm tails in powers of
# alpha / 2 pi (ratio <= 1 / (2 (K + 1)), so 14 orders reach roundoff).
CORRECTION_DIRECT_TERMS = 8
CORRECTION_ORDERS = 14
_LI_TERMS = 64


@lru_cache(maxsize=4)
def _log_series_table(orders: int, n_terms: int) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients of ``Li_s(e^mu) = sum_k c[s, k] mu^k + mu^(s-1) / (s-1)! (H_{s-1} - ln(-mu))``."""
    s_vals = np.arange(2, orders + 2)
    k = np.arange(n_terms)
    fact = np.array([math.factorial(int(i)) for i in k], dtype=float)
    c = np.zeros((len(s_vals), n_terms))
    special = np.zeros(len(s_vals))
    for row, s_ in enumerate(s_vals):
        for kk in k:
            m = s_ - kk
            if m == 1:
                continue
            c[row, kk] = (-0.5 if m == 0 else float(zeta(float(m)))) / fact[kk]
        special[row] = sum(1.0 / i for i in range(1, s_)) / fact[s_ - 1]
    c.setflags(write=False)
    special.setflags(write=False)
    return c, special


def polylog_tails(w, mu, orders: int = CORRECTION_ORDERS, start: int = CORRECTION_DIRECT_TERMS) -> np.ndarray:
    """``T[s - 2] = sum_{k > start} w^k / k^s`` for ``s = 2..orders + 1``.

    ``mu = ln w`` with ``Re mu <= 0`` and ``|Im mu| <= pi`` (so
    ``|mu| < 2 pi`` whenever ``|w| > 1/2``).  Small ``|w|`` uses the power
    series, the rest the expansion of ``Li_s`` in powers of ``mu``.
    """
    w = np.asarray(w, dtype=complex)
    mu = np.asarray(mu, dtype=complex)
    shape = w.shape
    w = w.ravel()
    mu = mu.ravel()
    s_vals = np.arange(2, orders + 2)
    out = np.empty((orders, w.size), dtype=complex)
    k = np.arange(1, _LI_TERMS + 1)
    small = np.abs(w) <= 0.5
    if np.any(small):
        pw = w[small][None, :] ** k[:, None]
        coef = np.where(k[None, :] > start, k[None, :] ** (-s_vals[:, None].astype(float)), 0.0)
        out[:, small] = coef @ pw
    big = ~small
    if np.any(big):
        m = mu[big]
        c, special = _log_series_table(orders, _LI_TERMS)
        pw = m[None, :] ** np.arange(_LI_TERMS)[:, None]
        li = c @ pw
        li += special[:, None] * m[None, :] ** (s_vals[:, None] - 1) - (
            m[None, :] ** (s_vals[:, None] - 1)
        ) / np.array([math.factorial(int(v) - 1) for v in s_vals])[:, None] * np.log(-m)[None, :]
        kk = np.arange(1, start + 1)
        head = (kk[None, :] ** (-s_vals[:, None].astype(float))) @ (w[big][None, :] ** kk[:, None])
        out[:, big] = li - head
    return out.reshape((orders,) + shape)


@dataclass(frozen=True)
class NearFieldGeometry:
    """alpha-independent data of the split form at a fixed set of offsets.

    Precomputing it once per geometry makes each further alpha cost a few
    vector operations.
    """

    x1: np.ndarray
    x2: np.ndarray
    shift: np.ndarray  # lattice shift n with x1 - n in [-1/2, 1/2]
    rho: np.ndarray  # |x|
    rho_reduced: np.ndarray  # |x - (n, 0)|
    w_up: np.ndarray
    w_dn: np.ndarray
    l_up: np.ndarray  # ln(1 - w) - ln|x_reduced|
    l_dn: np.ndarray
    tails_up: np.ndarray
    tails_dn: np.ndarray

    @classmethod
    def build(cls, x1, x2) -> "NearFieldGeometry":
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        x1, x2 = np.broadcast_arrays(x1, x2)
        n = np.round(x1)
        r1 = x1 - n
        ax2 = np.abs(x2)
        rho_red = np.hypot(r1, x2)
        z_up = TWO_PI * (1j * r1 - ax2)  # w = exp(z_up), from k >= 1
        z_dn = TWO_PI * (-1j * r1 - ax2)  # w' = exp(z_dn), from k <= -1
        return cls(
            x1=r1,
            x2=ax2,
            shift=n,
            rho=np.hypot(x1, x2),
            rho_reduced=rho_red,
            w_up=np.exp(z_up),
            w_dn=np.exp(z_dn),
            # ln(1 - w) - ln|x| without cancellation as x -> 0
            l_up=np.log(-np.expm1(z_up) / rho_red),
            l_dn=np.log(-np.expm1(z_dn) / rho_red),
            tails_up=polylog_tails(np.exp(z_up), z_up),
            tails_dn=polylog_tails(np.exp(z_dn), z_dn),
        )


def _correction(w, tails, a):
    """``sum_{k >= 1} w^k (1 / (k + a) - 1 / k)``, to roundoff, for ``|a| <= 1/2``."""
    total = np.zeros(w.shape, dtype=complex)
    pw = np.ones_like(total)
    for k in range(1, CORRECTION_DIRECT_TERMS + 1):
        pw = pw * w
        total += pw * (-a / (k * (k + a)))
    # Horner in (-a) over the tails
    acc = np.zeros_like(total)
    for j in range(len(tails), 0, -1):
        acc = (acc + tails[j - 1]) * (-a)
    return total + acc


def remainder_from_geometry(alpha: float, geom: NearFieldGeometry) -> np.ndarray:
    """Smooth part ``R`` at precomputed offsets (see :func:`nearfield_remainder`)."""
    a = float(alpha)
    ha = a / TWO_PI
    x1, ax2 = geom.x1, geom.x2
    phase = np.exp(1j * a * x1)
    p_up = phase * np.exp(-a * ax2)
    p_dn = phase * np.exp(a * ax2)
    # p_up + p_dn - 2, accurate near the origin
    excess = 2.0 * (phase * 2.0 * np.sinh(0.5 * a * ax2) ** 2 + np.expm1(1j * a * x1))
    log_red = np.log(geom.rho_reduced)
    out = excess * log_red / (4.0 * math.pi) + (p_up * geom.l_up + p_dn * geom.l_dn) / (4.0 * math.pi)
    out = out - np.exp(1j * a * x1 - abs(a) * ax2) / (2.0 * abs(a))
    out = out - (p_up * _correction(geom.w_up, geom.tails_up, ha) + p_dn * _correction(geom.w_dn, geom.tails_dn, -ha)) / (
        4.0 * math.pi
    )
    shifted = geom.shift != 0
    if np.any(shifted):
        # back from the nearest image: G(x) = exp(i alpha n) G(x - n v1)
        g = out[shifted] + LOG_COEFFICIENT * log_red[shifted]
        out[shifted] = np.exp(1j * a * geom.shift[shifted]) * g - LOG_COEFFICIENT * np.log(geom.rho[shifted])
    return out


def nearfield_remainder(alpha: float, fourier_terms: int, x1, x2) -> np.ndarray:
    """Smooth part ``R`` of ``G = ln|x| / (2 pi) + R`` (vectorized, unchecked).

    Both halves of the series are written as their ``1 / (4 pi |k|)``
    asymptote, summed in closed form as ``ln(1 - w)``, plus an absolutely
    convergent correction.  The correction is summed to roundoff (a few
    direct terms, then polylogarithm tails), so the result is the untruncated
    kernel and does not depend on ``fourier_terms``; truncating it instead
    would make the kernel discontinuous in alpha at ``+-pi``.  Points are
    first reduced to the nearest image ``|x1| <= 1/2``.  Intended for
    ``|x2|`` below about 1 (the ``exp(alpha |x2|)`` factors cancel beyond);
    callers must exclude horizontal lattice points.
    """
    del fourier_terms  # kept for a uniform kernel signature
    return remainder_from_geometry(alpha, NearFieldGeometry.build(x1, x2))


def eval_nearfield_split(params: GreenParams, x, max_norm: float = 0.5) -> NearFieldSplit:
    """Return ``(1 / (2 pi), R)`` with ``G(x) = ln|x| / (2 pi) + R(x)``.

    Raises :class:`NearFieldRangeError` unless ``0 < |x| < max_norm``.
    """
    params.require_nonzero()
    x1, x2 = _split_xy(x)
    rho = np.hypot(x1, x2)
    if np.any(rho >= max_norm) or np.any(rho == 0.0):
        raise NearFieldRangeError(f"split form needs 0 < |x| < {max_norm}")
    r = nearfield_remainder(params.alpha, params.fourier_terms, x1, x2)
    return NearFieldSplit(LOG_COEFFICIENT, _scalar_or_array(np.asarray(r)))


def series_matrix(
    params: GreenParams,
    targets,
    sources,
    weights=None,
    damping_cutoff: float = DEFAULT_DAMPING_CUTOFF,
) -> np.ndarray:
    """Kernel matrix ``sum_q w[j, q] G(t_i - s[j, q])`` for separated sets.

    All targets must lie strictly above (or strictly below) all sources.
    Then every series term factorizes into a target factor, a source factor
    and a scalar, and the truncated series becomes a small matrix product.
    Modes damped by more than ``exp(-damping_cutoff)`` across the vertical
    gap are dropped.

    ``sources`` has shape ``(S, 2)`` or ``(S, Q, 2)``; ``weights`` matches
    its leading dimensions (defaults to ones).
    """
    params.require_nonzero()
    t = np.asarray(targets, dtype=float).reshape(-1, 2)
    s = np.asarray(sources, dtype=float)
    if s.ndim == 2:
        s = s[:, None, :]
    w = np.ones(s.shape[:2]) if weights is None else np.asarray(weights, dtype=float).reshape(s.shape[:2])

    t1, t2 = t[:, 0], t[:, 1]
    s1, s2 = s[..., 0], s[..., 1]
    if t2.min() > s2.max():
        t_ref, s_ref = t2.min(), s2.max()
        gap = t_ref - s_ref
        t_off, s_off = t2 - t_ref, s_ref - s2
    elif t2.max() < s2.min():
        t_ref, s_ref = t2.max(), s2.min()
        gap = s_ref - t_ref
        t_off, s_off = t_ref - t2, s2 - s_ref
    else:
        raise ValueError("series_matrix needs vertically separated targets and sources")

    a = params.alpha
    m = int(params.fourier_terms)
    k = np.arange(-m, m + 1)
    beta = np.abs(TWO_PI * k + a)
    k = k[beta * gap <= damping_cutoff]
    beta = np.abs(TWO_PI * k + a)

    a_fac = np.exp(
        1j * (a * t1[:, None] + TWO_PI * k[None, :] * _frac(t1)[:, None]) - beta[None, :] * t_off[:, None]
    )
    b_fac = np.exp(
        -1j * (a * s1[..., None] + TWO_PI * k * _frac(s1)[..., None]) - beta * s_off[..., None]
    )
    b_fac = np.einsum("sq,sqk->sk", w, b_fac)
    scale = np.exp(-beta * gap) / (-2.0 * beta)
    return (a_fac * scale) @ b_fac.T


def green(params: GreenParams, x, switch_height: float = 0.25) -> np.ndarray:
    """Kernel value anywhere off the horizontal lattice points.

    Uses the split form where ``|x2| < switch_height`` (the series is slow
    there) and the damped series elsewhere (the split form cancels badly at
    large ``|x2|``).  Vectorized over points.
    """
    params.require_nonzero()
    x1, x2 = _split_xy(x)
    x1 = np.asarray(x1, dtype=float)
    ax2 = np.abs(np.asarray(x2, dtype=float))
    out = np.empty(np.broadcast(x1, ax2).shape, dtype=complex)
    near = ax2 < switch_height
    if np.any(near):
        n1, n2 = x1[near], ax2[near]
        out[near] = LOG_COEFFICIENT * np.log(np.hypot(n1, n2)) + nearfield_remainder(
            params.alpha, params.fourier_terms, n1, n2
        )
    far = ~near
    if np.any(far):
        f1, f2 = x1[far], ax2[far]
        a = params.alpha
        m = int(params.fourier_terms)
        f = _frac(f1)
        acc = np.zeros(f1.shape, dtype=complex)
        comp = np.zeros_like(acc)
        for k in range(-m, m + 1):
            beta = abs(TWO_PI * k + a)
            if beta * switch_height > DEFAULT_DAMPING_CUTOFF:
                continue
            term = np.exp(1j * (a * f1 + TWO_PI * k * f) - beta * f2) / (-2.0 * beta)
            acc, comp = _kahan_add(acc, comp, term)
        out[far] = acc
    return out
