"""Standard and weighted Airy functions.

The weighted family is the contour integral

    Ai_k(s) = (1/2 pi i) int_C T^k exp(T^3/3 - T s) dT,

with C running from e^{-i pi/3} inf to e^{+i pi/3} inf inside the right half
plane, so T^k takes its principal branch throughout.  Ai_0 is the classical
Airy function, positive integer weights are derivatives up to sign, and
negative weights are repeated antiderivatives:

    Ai_{-kappa}(s) = (1/Gamma(kappa)) int_0^inf Ai(s + rho) rho^(kappa-1) drho.

Evaluation routes:
  * contour      - quadrature on a half-contour exploiting conjugate symmetry;
                   for s < -2 the path is rerouted through the oscillatory
                   saddles at +-i sqrt(|s|) so double precision keeps ~1e-12
                   relative accuracy down to s = -40 and beyond.
  * gamma_integral - adaptive quadrature of the antiderivative form (k < 0).
  * asymptotic   - large-|s| expansions (see ai_k_asymptotic).

The classical Ai itself is delegated to scipy.special.airy; ai_series below
is an independent Maclaurin evaluation used as a cross-check oracle.
"""

from __future__ import annotations

import math
import threading

import numpy as np
from scipy import special as _sp
from scipy.integrate import quad as _quad

_SQRT_PI = math.sqrt(math.pi)

#: Ai(0) = 3^(-2/3) / Gamma(2/3)
AI_ZERO = 3.0 ** (-2.0 / 3.0) / math.gamma(2.0 / 3.0)
#: Ai'(0) = -3^(-1/3) / Gamma(1/3)
AI_PRIME_ZERO = -(3.0 ** (-1.0 / 3.0)) / math.gamma(1.0 / 3.0)

#: below this the saddle-following contour replaces the vertex contour
_SADDLE_SWITCH = -2.0
#: |s| >= this is required before the asymptotic expansions are trusted
ASYMPTOTIC_CROSSOVER = 8.0

_GL_CACHE = {}


def _gl(n):
    try:
        return _GL_CACHE[n]
    except KeyError:
        x, w = np.polynomial.legendre.leggauss(n)
        _GL_CACHE[n] = (x, w)
        return x, w


def _gl_panel(a, b, n=16):
    x, w = _gl(n)
    return 0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a) * w


def ai(s):
    """Standard Airy function Ai(s) (vectorized, double precision)."""
    with np.errstate(over="ignore"):
        out = _sp.airy(s)[0]
    if np.isscalar(s) or np.ndim(s) == 0:
        return float(out)
    return out


def ai_series(s, max_terms=260):
    """Maclaurin-series Airy oracle, reliable for |s| <= ~6 in doubles.

    Ai = Ai(0) f(s) + Ai'(0) g(s) with f, g the two entire solutions of the
    Airy equation.  Independent of scipy; used by the tests as a cross-check.
    """
    s = float(s)
    f_term = 1.0
    g_term = s
    f_sum = f_term
    g_sum = g_term
    s3 = s * s * s
    for k in range(max_terms):
        f_term *= s3 / ((3 * k + 2) * (3 * k + 3))
        g_term *= s3 / ((3 * k + 3) * (3 * k + 4))
        f_sum += f_term
        g_sum += g_term
        if abs(f_term) < 1e-20 * abs(f_sum) and abs(g_term) < 1e-20 * max(abs(g_sum), 1e-30):
            break
    return AI_ZERO * f_sum + AI_PRIME_ZERO * g_sum


def _upper_path(s_ref):
    """Nodes/weights of the upper half of the Airy contour, anchored at s_ref.

    The full contour is path + conjugate mirror, so for any integrand f with
    f(conj T) = conj f(T):  (1/2 pi i) int_C f dT = Im( sum w f(T) ) / pi.

    For s_ref >= -2 the path is the classical vertex contour: start at
    t0 = max(1, sqrt(max(s_ref,0))) on the real axis and leave along
    e^{i pi/3}.  For s_ref < -2 the saddles sit at +-i sqrt(|s_ref|) and a
    vertex contour suffers exp(c|s|^{3/2}) cancellation, so the path runs up
    the vertical line Re T = a = min(1, 1/sqrt(|s|)) through the upper saddle
    and then leaves along e^{i pi/3}; the integrand magnitude on that line
    stays within ~exp(sqrt(|s|)) of the result.
    """
    nodes = []
    weights = []
    direc = complex(math.cos(math.pi / 3.0), math.sin(math.pi / 3.0))

    def _extend_ray(base, s_anchor):
        peak = (base ** 3 / 3.0 - base * s_anchor).real
        r = 0.0
        for _ in range(120):
            x, w = _gl_panel(r, r + 1.0, 24)
            t = base + x * direc
            nodes.append(t)
            weights.append(w * direc)
            r += 1.0
            t_end = base + r * direc
            if (t_end ** 3 / 3.0 - t_end * s_anchor).real < peak - 46.0:
                break
            peak = max(peak, np.max((t ** 3 / 3.0 - t * s_anchor).real))

    if s_ref >= _SADDLE_SWITCH:
        t0 = max(1.0, math.sqrt(max(s_ref, 0.0)))
        _extend_ray(complex(t0, 0.0), s_ref)
    else:
        mag = abs(s_ref)
        a = min(1.0, 1.0 / math.sqrt(mag))
        y_top = math.sqrt(mag)
        n_panels = max(4, int(math.ceil((2.0 / 3.0) * mag ** 1.5 / 2.5)))
        edges = np.linspace(0.0, y_top, n_panels + 1)
        for lo, hi in zip(edges[:-1], edges[1:]):
            y, w = _gl_panel(lo, hi, 16)
            nodes.append(a + 1j * y)
            weights.append(1j * w)
        _extend_ray(complex(a, y_top), s_ref)
    return np.concatenate(nodes), np.concatenate(weights)


def contour_integral(k, s, extra=None, s_ref=None):
    """(1/2 pi i) int_C T^k exp(T^3/3 - T s) extra(T) dT for real s.

    `s` may be a scalar or an array sharing one contour: pass s_ref (defaults
    to min(s)) to anchor the path.  `extra` must satisfy
    extra(conj T) = conj extra(T) and stay bounded on Re T > 0.
    """
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    if s_ref is None:
        s_ref = float(np.min(s_arr))
    t, w = _upper_path(s_ref)
    vals = w * t ** complex(k)
    if extra is not None:
        vals = vals * extra(t)
    phase = t ** 3 / 3.0
    expo = phase[:, None] - t[:, None] * s_arr[None, :]
    # the path construction keeps Re(expo) modest; clip as a belt and braces
    out = np.imag(vals @ np.exp(np.clip(expo.real, None, 500.0) + 1j * expo.imag)) / math.pi
    if np.isscalar(s) or np.ndim(s) == 0:
        return float(out[0])
    return out


def _ai_k_contour(k, s):
    """Contour evaluation, banding array arguments so each band shares a path."""
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.empty_like(s_arr, dtype=float)
    order = np.argsort(s_arr)
    sorted_s = s_arr[order]
    start = 0
    while start < sorted_s.size:
        anchor = sorted_s[start]
        stop = start
        while stop < sorted_s.size and sorted_s[stop] <= anchor + 3.0 and \
                (sorted_s[stop] < _SADDLE_SWITCH) == (anchor < _SADDLE_SWITCH):
            stop += 1
        band = sorted_s[start:stop]
        out[order[start:stop]] = contour_integral(k, band, s_ref=anchor)
        start = stop
    if np.isscalar(s) or np.ndim(s) == 0:
        return float(out[0])
    return out


def _ai_k_gamma(k, s):
    """Antiderivative form for k < 0, by adaptive quadrature.

    The endpoint singularity rho^(kappa-1) for kappa < 1 is removed by the
    substitution rho = tau^(1/kappa).
    """
    if k >= 0:
        raise ValueError("gamma_integral route requires k < 0")
    kappa = -float(k)
    s = float(s)
    if kappa < 1.0:
        head, _ = _quad(lambda tau: ai(s + tau ** (1.0 / kappa)), 0.0, 1.0, limit=200)
        head /= kappa
    else:
        head, _ = _quad(lambda rho: ai(s + rho) * rho ** (kappa - 1.0), 0.0, 1.0, limit=200)
    upper = max(2.0, 14.0 - s) + 40.0
    tail, _ = _quad(lambda rho: ai(s + rho) * rho ** (kappa - 1.0), 1.0, upper, limit=800)
    return (head + tail) / math.gamma(kappa)


_memo_lock = threading.Lock()
_memo = {}


def ai_k(k, s, method="auto"):
    """Weighted Airy function Ai_k(s); k is the subscript as printed.

    method: one of "auto", "contour", "gamma_integral", "asymptotic".
    auto uses the contour for |s| <= 200 and the asymptotic expansion beyond.
    Scalar results are memoized (thread-safe; values never depend on
    interleaving since every route is deterministic).
    """
    if method not in ("auto", "contour", "gamma_integral", "asymptotic"):
        raise ValueError(f"unknown method {method!r}")
    scalar = np.isscalar(s) or np.ndim(s) == 0
    if method == "gamma_integral":
        if not scalar:
            return np.array([_ai_k_gamma(k, v) for v in np.asarray(s, float)])
        return _ai_k_gamma(k, s)
    if method == "asymptotic":
        return ai_k_asymptotic(k, s)
    if method == "auto" and scalar and abs(float(s)) > 200.0:
        return ai_k_asymptotic(k, s)
    if scalar:
        key = (float(k), float(s))
        with _memo_lock:
            hit = _memo.get(key)
        if hit is not None:
            return hit
        val = _ai_k_contour(k, float(s))
        with _memo_lock:
            if len(_memo) > 100000:
                _memo.clear()
            _memo[key] = val
        return val
    return _ai_k_contour(k, s)


def ai_k_asymptotic(k, s):
    """Large-|s| expansions of Ai_k; refuses |s| below the crossover radius.

    For s >> 0 (kappa = -k):

        Ai_k(s) ~ exp(-(2/3) s^(3/2)) / (2 sqrt(pi)) * s^(-(2 kappa+1)/4)
                  * [1 - ((kappa^2 + 2 kappa)/4 + 5/48) s^(-3/2)
                       + C4(kappa) s^(-3)],

    from the saddle-point expansion at T = sqrt(s).  The 5/48 is the
    weight-independent piece familiar from Ai itself (dropping it stalls the
    error at O(s^(-3/2))), and C4 is the next even order; at kappa = 0 it
    reduces to the classical 385/10368 * (3/2)^2.  Residual error O(s^(-9/2)).

    For s << 0:

        Ai_k(s) ~ sum_j |s|^(kappa-3j-1) / (3^j Gamma(kappa-3j))
                  + sin((2/3)|s|^(3/2) - (2 kappa - 1) pi/4) / (sqrt(pi) |s|^((2 kappa+1)/4)),

    terms whose Gamma argument sits at a pole are dropped.  The oscillatory
    phase grows like |s|^(3/2); the relative error of the oscillatory part is
    O(1/|s|).
    """
    s = float(s)
    if abs(s) < ASYMPTOTIC_CROSSOVER:
        raise ValueError(
            f"asymptotic expansion needs |s| >= {ASYMPTOTIC_CROSSOVER}, got {s}")
    kappa = -float(k)
    if s > 0:
        c2 = (kappa * kappa + 2.0 * kappa) / 4.0 + 5.0 / 48.0
        c4 = 10395.0 / 124416.0 + 945.0 * kappa / 5184.0 \
            + 105.0 * kappa * (kappa + 1.0) / 576.0 \
            + 15.0 * kappa * (kappa + 1.0) * (kappa + 2.0) / 144.0 \
            + kappa * (kappa + 1.0) * (kappa + 2.0) * (kappa + 3.0) / 32.0
        corr = 1.0 - c2 / s ** 1.5 + c4 / s ** 3
        return math.exp(-2.0 / 3.0 * s ** 1.5) / (2.0 * _SQRT_PI) \
            * s ** (-(2.0 * kappa + 1.0) / 4.0) * corr
    x = -s
    series = 0.0
    for j in range(0, 40):
        power = kappa - 3 * j - 1.0
        if power < -55:
            break
        arg = kappa - 3.0 * j
        near = round(arg)
        if abs(arg - near) < 1e-12 and near <= 0:
            continue  # Gamma pole: the term vanishes
        series += x ** power / (3.0 ** j * math.gamma(arg))
    osc = math.sin(2.0 / 3.0 * x ** 1.5 - (2.0 * kappa - 1.0) * math.pi / 4.0) \
        / (_SQRT_PI * x ** ((2.0 * kappa + 1.0) / 4.0))
    return series + osc


def airy_product_contour(x, y):
    """Ai(x) Ai(y) through the single-contour product identity.

    Substituting T -> 2^(-1/3) T in the double-saddle form gives

        Ai(x) Ai(y) = 2^(-1/6) (2 pi)^(-1/2) *
            (1/2 pi i) int_C T^(-1/2) exp(T^3/3 - sT - c/T) dT,

    with s = 2^(-1/3) (x+y) and c = 2^(1/3) (x-y)^2 / 8.  At x = y this is
    the closed form Ai(x)^2 = 2^(-1/6) (2 pi)^(-1/2) Ai_{-1/2}(2^(2/3) x).
    """
    s = 2.0 ** (-1.0 / 3.0) * (x + y)
    c = 2.0 ** (1.0 / 3.0) * (x - y) ** 2 / 8.0
    val = contour_integral(-0.5, s, extra=lambda t: np.exp(-c / t))
    return 2.0 ** (-1.0 / 6.0) / math.sqrt(2.0 * math.pi) * val
