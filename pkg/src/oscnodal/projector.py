"""Exact eigenspace projection kernels and their diagonal jets.

Two independent evaluation routes cross-validate each other:

  * pi_exact - the Hermite-basis sum  Pi(x,y) = sum_{|beta|=N} phi_beta(x)
    phi_beta(y), folded coordinate by coordinate as a truncated convolution
    (cost O(N^(d-1))), exponent tracked throughout so forbidden-region values
    of size exp(-c/hbar) survive.  This is the global oracle.

  * pi_mehler - trapezoid quadrature of the propagator residue integral

        Pi(x,y) = (1/2 pi i) oint (z/(pi hbar (1-z^2)))^(d/2)
                  exp(-(1/hbar)[ (1+z^2)/(1-z^2) (x^2+y^2)/2
                                 - 2z/(1-z^2) x.y + E log z ]) dz / z

    over a circle |z| = r < 1.  With K nodes the rule extracts the z^N
    coefficient exactly up to upward aliases weighted by r^(jK); K >= N+1
    eliminates downward aliases entirely.  Valid for |x|,|y| <= 1.3, beyond
    which cancellation swamps double precision.

Derivative kernels on the diagonal (the Kac-Rice input) are assembled from
the basis derivative ladder, never by differentiating the residue integrand.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .semiclassical import (
    DEFAULT_DIM_BUDGET,
    ResourceLimitError,
    TrackedReal,
    _mantexp_to_tracked,
    _phi_deriv_mantexp,
    _phi_mantexp,
)

#: |x| cap for the residue-integral route; beyond this the circle integrand
#: reaches exp(c(|x|^2-1)/hbar) above the result and the rule is uncertified
MEHLER_RADIUS_LIMIT = 1.3


@dataclass(frozen=True)
class CovarianceJet:
    """Pi(x,x), grad_x Pi and the mixed Hessian d_x d_y Pi on the diagonal.

    pi is strictly positive (a sum of squares), hess is a Gram matrix and the
    matrix pi*hess - grad grad^T is positive semidefinite (Cauchy-Schwarz).
    """

    point: np.ndarray
    pi: TrackedReal
    grad: list
    hess: list


def _conv_last(ma, ea, mb, eb, n, dtype):
    """Coefficient n of the product of two tracked coefficient arrays."""
    s = ea[: n + 1] + eb[n::-1]
    m = int(s.max())
    tot = np.sum(ma[: n + 1] * mb[n::-1] * np.exp2((s - m).astype(dtype)))
    return tot, m


def _conv_full(ma, ea, mb, eb, n, dtype):
    """Coefficients 0..n of the product, each renormalized to its own exponent."""
    mout = np.empty(n + 1, dtype=dtype)
    eout = np.empty(n + 1, dtype=np.int64)
    for j in range(n + 1):
        mout[j], eout[j] = _conv_last(ma, ea, mb, eb, j, dtype)
    # renormalize mantissas (base 2, exact)
    mm, sh = np.frexp(mout)
    return mm, eout + sh.astype(np.int64)


def _fold(arrays, n, dtype):
    """Fold per-coordinate arrays left to right; returns coefficient n."""
    if len(arrays) == 1:
        ma, ea = arrays[0]
        return float(ma[n]), int(ea[n])
    ma, ea = arrays[0]
    for mb, eb in arrays[1:-1]:
        ma, ea = _conv_full(ma, ea, mb, eb, n, dtype)
    mb, eb = arrays[-1]
    tot, e = _conv_last(ma, ea, mb, eb, n, dtype)
    return float(tot), e


def _check_budget(level, budget):
    work = level.d * (level.N + 1) ** max(level.d - 1, 1)
    if work > budget:
        raise ResourceLimitError(
            f"d*N^(d-1) = {work} exceeds budget {budget}; "
            "raise the budget explicitly if this is intentional")


def pi_exact(level, x, y=None, budget=DEFAULT_DIM_BUDGET):
    """Exact projection kernel Pi(x,y) as a TrackedReal (y defaults to x).

    Separable accumulation: per coordinate j the array
    A_j[k] = phi_k(x_j) phi_k(y_j), folded by truncated convolution and read
    off at degree N.  Internally extended precision; the points are tiny
    arrays so this is cheap even at N ~ several thousand.
    """
    _check_budget(level, budget)
    dtype = np.longdouble
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = x if y is None else np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != (level.d,) or y.shape != (level.d,):
        raise ValueError(f"points must be {level.d}-vectors")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("points must be finite")
    n = level.N
    arrays = []
    for j in range(level.d):
        mx, ex = _phi_mantexp(level.hbar, n, [x[j]], dtype=dtype)
        my, ey = _phi_mantexp(level.hbar, n, [y[j]], dtype=dtype)
        arrays.append((mx[:, 0] * my[:, 0], ex[:, 0] + ey[:, 0]))
    m, e = _fold(arrays, n, dtype)
    return _mantexp_to_tracked(m, e)


def covariance_jet(level, x, budget=DEFAULT_DIM_BUDGET):
    """Pi, grad Pi and the mixed Hessian at the diagonal point x.

    grad_i = d_{x_i} Pi(x,y)|_{y=x} and hess_ij = d_{x_i} d_{y_j} Pi(x,y)|_{y=x};
    both come from the same separable accumulation with the derivative arrays
    phi_k phi_k' and phi_k' phi_k' substituted in slots i (and j).
    """
    _check_budget(level, budget)
    dtype = np.longdouble
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (level.d,):
        raise ValueError(f"point must be a {level.d}-vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("point must be finite")
    d, n = level.d, level.N
    val = []   # phi phi
    mix = []   # phi phi'
    der = []   # phi' phi'
    for j in range(d):
        m, e, dm, de = _phi_deriv_mantexp(level.hbar, n, [x[j]], dtype=dtype)
        m, e, dm, de = m[:, 0], e[:, 0], dm[:, 0], de[:, 0]
        val.append((m * m, 2 * e))
        mix.append((m * dm, e + de))
        der.append((dm * dm, 2 * de))
    pi_m, pi_e = _fold(val, n, dtype)
    grad = []
    for i in range(d):
        arrays = [mix[j] if j == i else val[j] for j in range(d)]
        grad.append(_mantexp_to_tracked(*_fold(arrays, n, dtype)))
    hess = [[None] * d for _ in range(d)]
    for i in range(d):
        for j in range(i, d):
            arrays = []
            for l in range(d):
                if l == i and l == j:
                    arrays.append(der[l])
                elif l in (i, j):
                    arrays.append(mix[l])
                else:
                    arrays.append(val[l])
            h = _mantexp_to_tracked(*_fold(arrays, n, dtype))
            hess[i][j] = h
            hess[j][i] = h
    return CovarianceJet(point=x, pi=_mantexp_to_tracked(pi_m, pi_e),
                         grad=grad, hess=hess)


def _circle_log_max(level, x, y, r, n_theta=256):
    """max over the circle |z| = r of log|integrand| (amplitude included)."""
    hb = level.hbar
    theta = np.linspace(0.0, math.pi, n_theta)
    z = r * np.exp(1j * theta)
    ss = ((1 + z * z) * (x @ x + y @ y) / 2 - 2 * z * (x @ y)) / (1 - z * z)
    lf = -ss.real / hb - level.N * math.log(r) \
        - (level.d / 2.0) * np.log(np.abs(math.pi * hb * (1 - z * z)))
    return float(np.max(lf))


def _best_radius(level, x, y, lo=0.15, hi=0.93):
    """Radius minimizing the circle's max log-integrand (saddle radius).

    Keeping the circle's maximum as close as possible to log|Pi| minimizes
    the cancellation the trapezoid sum has to absorb.
    """
    rs = np.linspace(lo, hi, 40)
    vals = [_circle_log_max(level, x, y, r) for r in rs]
    i = int(np.argmin(vals))
    a = rs[max(0, i - 1)]
    b = rs[min(len(rs) - 1, i + 1)]
    for _ in range(25):
        m1 = a + 0.382 * (b - a)
        m2 = a + 0.618 * (b - a)
        if _circle_log_max(level, x, y, m1) < _circle_log_max(level, x, y, m2):
            b = m2
        else:
            a = m1
    return 0.5 * (a + b)


def pi_mehler(level, x, y, num_nodes=None, radius=None):
    """Residue-integral evaluation of Pi(x,y) on the circle |z| = radius.

    radius=None picks the saddle radius per point pair (far-separated pairs
    near the caustic otherwise lose ~e^20 to cancellation); pass an explicit
    radius to pin the contour.  num_nodes defaults to max(4(N+1), 512) and
    must be at least 4(N+1).  Points with x.y < 0 are reduced by parity,
    Pi(x,y) = (-1)^N Pi(x,-y), which recenters the dominant saddle at z > 0.
    """
    d, n = level.d, level.N
    hb = level.hbar
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if np.linalg.norm(x) > MEHLER_RADIUS_LIMIT or np.linalg.norm(y) > MEHLER_RADIUS_LIMIT:
        raise ValueError(
            f"pi_mehler is certified only for |x|,|y| <= {MEHLER_RADIUS_LIMIT}; "
            "use pi_exact in the deep forbidden region")
    k_min = 4 * (n + 1)
    if num_nodes is None:
        num_nodes = max(k_min, 512)
    elif num_nodes < k_min:
        raise ValueError(f"num_nodes must be >= 4(N+1) = {k_min}")
    sign = 1.0
    if x @ y < 0:
        y = -y
        sign = -1.0 if n % 2 else 1.0
    if radius is None:
        radius = _best_radius(level, x, y)
    elif not 0.0 < radius < 1.0:
        raise ValueError("radius must lie in (0, 1)")

    ld = np.longdouble

    def trapezoid(k_nodes):
        r = ld(radius)
        theta = (ld(2) * np.pi) * np.arange(k_nodes).astype(ld) / k_nodes
        z = r * np.exp(1j * theta.astype(np.clongdouble))
        xx = ld(x @ x + y @ y)
        xy = ld(x @ y)
        ss = ((1 + z * z) * xx / 2 - 2 * z * xy) / (1 - z * z)
        logf = -ss / ld(hb) - ld(n) * (np.log(r) + 1j * theta) \
            - (ld(d) / 2) * np.log(np.pi * ld(hb) * (1 - z * z))
        m = float(np.max(np.real(logf)))
        if m > 11000.0:  # exp() of the longdouble max exponent
            raise RuntimeError("pi_mehler integrand overflows; use pi_exact")
        vals = np.exp(logf - ld(m))
        mean = np.real(np.sum(vals)) / k_nodes
        return float(mean), m

    mean, m = trapezoid(num_nodes)
    result = sign * mean * math.exp(m)
    # measured alias/cancellation estimate: a rule with num_nodes + (N+1)
    # nodes keeps the no-downward-alias property but samples a different
    # upward alias set, so the difference bounds both error sources
    mean_alt, m_alt = trapezoid(num_nodes + n + 1)
    disagreement = abs(mean * math.exp(m) - mean_alt * math.exp(m_alt))
    noise_floor = 1e-13 * math.exp(max(m, m_alt))  # absolute floor of the rule
    if disagreement > 1e-8 * abs(result) and \
            max(abs(result), abs(mean_alt) * math.exp(m_alt)) > noise_floor:
        warnings.warn(
            f"pi_mehler alias/cancellation estimate {disagreement:.2e} exceeds "
            "1e-8 of the result", RuntimeWarning, stacklevel=2)
    return result


def jet_grid(level, xs, ys):
    """Diagonal jets on a d = 2 tensor grid (ys x xs), in plain floats.

    Returns a dict with arrays Pi, G1, G2, H11, H12, H22 of shape
    (len(ys), len(xs)).  The exact bulk density oscillates on scale hbar, so
    averages of Kac-Rice predictions over regions must resolve that scale;
    this GEMM path makes such grids cheap.  Valid while the collapsed basis
    magnitudes stay inside double range (grids within |x| <~ 1.6 at moderate
    N), which is checked.
    """
    if level.d != 2:
        raise ValueError("jet_grid is d = 2 only")
    n = level.N
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    out = {}
    factors = []
    for coords, reverse in ((xs, False), (ys, True)):
        m, e, dm, de = _phi_deriv_mantexp(level.hbar, n, coords)
        if e.min() < -500 or de.min() < -500:
            raise ResourceLimitError(
                "jet_grid would underflow; use covariance_jet point by point")
        phi = np.ldexp(m, e)
        dphi = np.ldexp(dm, de)
        if reverse:
            phi = phi[::-1]
            dphi = dphi[::-1]
        factors.append((phi * phi, phi * dphi, dphi * dphi))
    (p1, d1, q1), (p2, d2, q2) = factors
    out["Pi"] = p2.T @ p1
    out["G1"] = p2.T @ d1
    out["G2"] = d2.T @ p1
    out["H11"] = p2.T @ q1
    out["H22"] = q2.T @ p1
    out["H12"] = d2.T @ d1
    return out


def pi_exact_batch(level, points_x, points_y, budget=DEFAULT_DIM_BUDGET, max_workers=None):
    """pi_exact over a list of point pairs; positionally ordered, independent.

    Pure per-pair evaluations, mapped over a thread pool when max_workers is
    given (or the OSCNODAL_THREADS environment variable is set; see the CLI).
    """
    points_x = [np.asarray(p, dtype=float) for p in points_x]
    points_y = [np.asarray(p, dtype=float) for p in points_y]
    if len(points_x) != len(points_y):
        raise ValueError("point lists must have equal length")
    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(lambda p: pi_exact(level, p[0], p[1], budget=budget),
                                 zip(points_x, points_y)))
    return [pi_exact(level, xi, yi, budget=budget) for xi, yi in zip(points_x, points_y)]


def write_batch_csv(path, points_x, points_y, values):
    """Write batch results with the flat schema x1..xd,y1..yd,pi_mantissa,pi_exponent."""
    d = len(points_x[0])
    header = [f"x{j+1}" for j in range(d)] + [f"y{j+1}" for j in range(d)] \
        + ["pi_mantissa", "pi_exponent"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for xi, yi, v in zip(points_x, points_y, values):
            writer.writerow([repr(float(c)) for c in xi]
                            + [repr(float(c)) for c in yi]
                            + [repr(v.mantissa), v.exponent])


def read_batch_csv(path):
    """Inverse of write_batch_csv; returns (points_x, points_y, values).

    Accepts coordinate-only files (no pi columns); values are then None.
    """
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
    header, rows = rows[0], rows[1:]
    d = sum(1 for name in header if name.startswith("x"))
    has_values = len(header) >= 2 * d + 2
    xs, ys, vals = [], [], []
    for row in rows:
        xs.append(np.array([float(v) for v in row[:d]]))
        ys.append(np.array([float(v) for v in row[d:2 * d]]))
        if has_values:
            vals.append(TrackedReal(float(row[2 * d]), int(row[2 * d + 1])))
    return xs, ys, (vals if has_values else None)
