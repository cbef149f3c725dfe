"""Semiclassical parameter bookkeeping and stable scaled Hermite evaluation.

The isotropic oscillator (-hbar^2/2) Laplacian + |x|^2/2 at energy E = 1/2
quantizes the Planck parameter to hbar = 1/(2N+d).  Everything downstream
(projection kernels, nodal densities) is built from the 1D orthonormal
oscillator eigenfunctions

    psi_0(xi) = pi^(-1/4) exp(-xi^2/2),
    psi_{k+1}(xi) = sqrt(2/(k+1)) xi psi_k(xi) - sqrt(k/(k+1)) psi_{k-1}(xi),

scaled as phi_k(x) = hbar^(-1/4) psi_k(x / sqrt(hbar)).  The recurrence runs
on the functions themselves (Gaussian weight folded in from the start), which
follows the dominant solution and therefore stays relatively accurate for all
real arguments.  In the classically forbidden region the values decay like
exp(-c/hbar), far below float underflow, so every value is carried as a
(mantissa, exponent) pair; see TrackedReal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_LOG2 = math.log(2.0)
_LOG2E = 1.0 / _LOG2
_PI_M14 = math.pi ** -0.25

DEFAULT_DIM_BUDGET = 10**8


class ResourceLimitError(RuntimeError):
    """An operation would exceed its configured work/memory budget."""


@dataclass(frozen=True)
class TrackedReal:
    """A real number stored as mantissa * e**exponent with integer exponent.

    Freshly encoded doubles keep exponent 0, so encode/decode round-trips are
    exact.  Arithmetic renormalizes the mantissa into [1, e) (up to sign),
    which costs at most one ulp per renormalization.
    """

    mantissa: float
    exponent: int = 0

    @staticmethod
    def from_float(value):
        return TrackedReal(float(value), 0)

    @staticmethod
    def from_log(log_abs, sign=1.0):
        """Build from log|value| and a sign; mantissa lands in [1, e)."""
        if sign == 0.0:
            return TrackedReal(0.0, 0)
        e = math.floor(log_abs)
        return TrackedReal(math.copysign(math.exp(log_abs - e), sign), int(e))

    def normalized(self):
        if self.mantissa == 0.0:
            return TrackedReal(0.0, 0)
        shift = math.floor(math.log(abs(self.mantissa)))
        if shift == 0:
            return self
        if abs(shift) <= 700:
            m = self.mantissa * math.exp(-shift)
        else:  # subnormal-scale mantissas: split the rescaling
            half = shift // 2
            m = (self.mantissa * math.exp(-half)) * math.exp(-(shift - half))
        # log/exp rounding can leave m a hair outside [1, e)
        if abs(m) < 1.0:
            m *= math.e
            shift -= 1
        elif abs(m) >= math.e:
            m /= math.e
            shift += 1
        return TrackedReal(m, self.exponent + shift)

    def to_float(self):
        """Collapse to a plain float; overflows to inf for huge exponents."""
        if self.mantissa == 0.0:
            return 0.0
        if self.exponent > 700:
            return math.copysign(math.inf, self.mantissa)
        if self.exponent < -760:
            return math.copysign(0.0, self.mantissa)
        return self.mantissa * math.exp(self.exponent)

    def log_abs(self):
        if self.mantissa == 0.0:
            raise ValueError("log of zero")
        return math.log(abs(self.mantissa)) + self.exponent

    @property
    def sign(self):
        return math.copysign(1.0, self.mantissa) if self.mantissa != 0.0 else 0.0

    def __float__(self):
        return self.to_float()

    def __neg__(self):
        return TrackedReal(-self.mantissa, self.exponent)

    def __abs__(self):
        return TrackedReal(abs(self.mantissa), self.exponent)

    def __mul__(self, other):
        if isinstance(other, TrackedReal):
            return TrackedReal(self.mantissa * other.mantissa,
                               self.exponent + other.exponent).normalized()
        return TrackedReal(self.mantissa * float(other), self.exponent).normalized()

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, TrackedReal):
            if other.mantissa == 0.0:
                raise ZeroDivisionError("TrackedReal division by zero")
            return TrackedReal(self.mantissa / other.mantissa,
                               self.exponent - other.exponent).normalized()
        return TrackedReal(self.mantissa / float(other), self.exponent).normalized()

    def __add__(self, other):
        if not isinstance(other, TrackedReal):
            other = TrackedReal.from_float(other)
        if self.mantissa == 0.0:
            return other
        if other.mantissa == 0.0:
            return self
        hi, lo = (self, other) if self.exponent >= other.exponent else (other, self)
        de = lo.exponent - hi.exponent
        if de < -745:
            return hi
        return TrackedReal(hi.mantissa + lo.mantissa * math.exp(de),
                           hi.exponent).normalized()

    __radd__ = __add__

    def __sub__(self, other):
        if not isinstance(other, TrackedReal):
            other = TrackedReal.from_float(other)
        return self + (-other)


@dataclass(frozen=True)
class SemiclassicalLevel:
    """The quadruple (d, N, hbar, E) with E = 1/2 and hbar = 1/(2N+d)."""

    d: int
    N: int

    def __post_init__(self):
        if not isinstance(self.d, int) or self.d < 1:
            raise ValueError(f"dimension d must be an integer >= 1, got {self.d}")
        if not isinstance(self.N, int) or self.N < 0:
            raise ValueError(f"degree N must be an integer >= 0, got {self.N}")

    @property
    def hbar(self):
        return 1.0 / (2 * self.N + self.d)

    @property
    def energy(self):
        return 0.5


def level_new(d, N):
    """Validated constructor for a semiclassical level."""
    return SemiclassicalLevel(int(d), int(N))


def eigenspace_dim(level):
    """Dimension binom(N+d-1, d-1) of the degree-N eigenspace."""
    dim = math.comb(level.N + level.d - 1, level.d - 1)
    if dim > 2**62:
        raise OverflowError(f"eigenspace dimension {dim} exceeds integer budget")
    return dim


def multi_indices(d, N):
    """All beta in Z_{>=0}^d with |beta| = N, in lexicographic order."""
    if d == 1:
        yield (N,)
        return
    for b0 in range(N + 1):
        for rest in multi_indices(d - 1, N - b0):
            yield (b0,) + rest


@dataclass(frozen=True)
class RescaleRule:
    """Mapping of a general-energy configuration to the E = 1/2 normalization.

    Kernels, Kac-Rice matrices and zero densities transport as
    Pi_{hbar,E}(x,y) = (2E)^(-d/2) Pi_{hbar'}(x',y'),
    Omega_{hbar,E}(x) = (2E)^(-1) Omega_{hbar'}(x'),
    F_{hbar,E}(x) = (2E)^(-1/2) F_{hbar'}(x').
    """

    x_prime: np.ndarray
    energy: float

    @property
    def hbar_factor(self):
        """hbar' = hbar_factor * hbar."""
        return 1.0 / (2.0 * self.energy)

    def kernel_factor(self, d):
        return (2.0 * self.energy) ** (-d / 2.0)

    @property
    def omega_factor(self):
        return 1.0 / (2.0 * self.energy)

    @property
    def density_factor(self):
        return (2.0 * self.energy) ** -0.5


def rescale_to_unit(x, E_general):
    """Rescale a point to the E = 1/2 normalization: x' = x / sqrt(2E)."""
    if E_general <= 0:
        raise ValueError(f"energy must be positive, got {E_general}")
    x = np.asarray(x, dtype=float)
    return RescaleRule(x_prime=x / math.sqrt(2.0 * E_general), energy=float(E_general))


def _psi_mantexp(nmax, xi, dtype=np.float64):
    """psi_0..psi_nmax at the points xi, exponent tracked in base 2.

    Returns (m, e) with value = m * 2**e elementwise, shapes (nmax+1, len(xi)).
    The running pair is renormalized every 8 steps; the per-step growth factor
    is at most ~sqrt(2)|xi| + 1, which keeps mantissas inside float range for
    |xi| up to several hundred.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=dtype))
    npts = xi.size
    m = np.empty((nmax + 1, npts), dtype=dtype)
    e = np.empty((nmax + 1, npts), dtype=np.int64)
    t = -xi * xi * dtype(0.5) * dtype(_LOG2E)
    ecur = np.floor(t).astype(np.int64)
    cur = dtype(_PI_M14) * np.exp2(t - ecur)
    prev = np.zeros(npts, dtype=dtype)
    m[0] = cur
    e[0] = ecur
    for k in range(nmax):
        a = np.sqrt(dtype(2.0) / dtype(k + 1))
        b = np.sqrt(dtype(k) / dtype(k + 1))
        cur, prev = a * xi * cur - b * prev, cur
        if (k + 1) % 8 == 0:
            mag = np.maximum(np.abs(cur), np.abs(prev))
            _, sh = np.frexp(mag)
            sh = sh.astype(np.int64)
            cur = np.ldexp(cur, -sh)
            prev = np.ldexp(prev, -sh)
            ecur = ecur + sh
        m[k + 1] = cur
        e[k + 1] = ecur
    return m, e


def _psi_deriv_mantexp(nmax, xi, dtype=np.float64):
    """(psi_k, psi_k') for k <= nmax via the ladder relation.

    psi_k' = sqrt(k/2) psi_{k-1} - sqrt((k+1)/2) psi_{k+1}; runs the recurrence
    one degree past nmax and realigns the per-degree exponents exactly (powers
    of two).  Returns (m, e, dm, de).
    """
    m1, e1 = _psi_mantexp(nmax + 1, xi, dtype=dtype)
    m = m1[: nmax + 1]
    e = e1[: nmax + 1]
    dm = np.empty_like(m)
    de = np.empty_like(e)
    k = np.arange(nmax + 1, dtype=dtype)
    lo = np.sqrt(k / dtype(2.0))
    hi = np.sqrt((k + 1) / dtype(2.0))
    # k = 0: psi' = -sqrt(1/2) psi_1
    dm[0] = -hi[0] * m1[1]
    de[0] = e1[1]
    for kk in range(1, nmax + 1):
        ea = e1[kk - 1]
        eb = e1[kk + 1]
        eo = np.maximum(ea, eb)
        dm[kk] = lo[kk] * np.ldexp(m1[kk - 1], (ea - eo).astype(np.int64)) - \
            hi[kk] * np.ldexp(m1[kk + 1], (eb - eo).astype(np.int64))
        de[kk] = eo
    return m, e, dm, de


def _phi_mantexp(hbar, nmax, xs, dtype=np.float64):
    """Scaled eigenfunctions phi_k(x) = hbar^(-1/4) psi_k(x/sqrt(hbar))."""
    hb = dtype(hbar)
    xi = np.asarray(xs, dtype=dtype) / np.sqrt(hb)
    m, e = _psi_mantexp(nmax, xi, dtype=dtype)
    return m * hb ** dtype(-0.25), e


def _phi_deriv_mantexp(hbar, nmax, xs, dtype=np.float64):
    """phi_k and phi_k' = hbar^(-3/4) psi_k'(x/sqrt(hbar)), tracked."""
    hb = dtype(hbar)
    xi = np.asarray(xs, dtype=dtype) / np.sqrt(hb)
    m, e, dm, de = _psi_deriv_mantexp(nmax, xi, dtype=dtype)
    return m * hb ** dtype(-0.25), e, dm * hb ** dtype(-0.75), de


def _mantexp_to_tracked(m, e2):
    """Convert a base-2 (mantissa, exponent) pair to a normalized TrackedReal."""
    m = float(m)
    if m == 0.0:
        return TrackedReal(0.0, 0)
    log_abs = int(e2) * _LOG2 + math.log(abs(m))
    return TrackedReal.from_log(log_abs, math.copysign(1.0, m))


def hermite_all(level, x):
    """[phi_0(x), ..., phi_N(x)] for the 1D scaled basis, as TrackedReal.

    The Gaussian factor is folded in from step zero; values deep in the
    forbidden region come out with large negative exponents instead of
    underflowing.
    """
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("coordinate must be finite")
    m, e = _phi_mantexp(level.hbar, level.N, [x], dtype=np.longdouble)
    return [_mantexp_to_tracked(m[k, 0], e[k, 0]) for k in range(level.N + 1)]


def hermite_deriv_all(level, x):
    """[phi_0'(x), ..., phi_N'(x)] via the ladder relation."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("coordinate must be finite")
    _, _, dm, de = _phi_deriv_mantexp(level.hbar, level.N, [x], dtype=np.longdouble)
    return [_mantexp_to_tracked(dm[k, 0], de[k, 0]) for k in range(level.N + 1)]
