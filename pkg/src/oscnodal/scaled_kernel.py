"""The universal caustic scaling limit of the projection kernel.

Around a caustic point x0 (|x0| = 1) the kernels obey

    Pi(x0 + hbar^(2/3) u, x0 + hbar^(2/3) v)
        = hbar^(-2d/3+1/3) Pi0(u, v) (1 + O(hbar^(1/3))),

with the limit kernel available in two independent representations:

  * pi0_airy - the Airy-mode superposition over tangential frequencies p,

        Pi0(u,v) = 2^(2/3) (2 pi)^(1-d) int_{R^(d-1)} e^{i<u'-v', p>}
                   Ai(2^(1/3)(u1 + p^2/2)) Ai(2^(1/3)(v1 + p^2/2)) dp,

    where u1 = <x0, u> is the normal component and u' the tangential part;

  * pi0_contour - the single-contour form obtained by resumming the modes,

        Pi0(u,v) = (2 pi)^(-d/2) (1/2 pi i) int_C T^(-d/2)
                   exp(T^3/24 - (u1+v1) T/2 - |u-v|^2/(2T)) dT.

On the diagonal both reduce to 2^(1-d) pi^(-d/2) Ai_{-d/2}(2 u1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import airy
from .semiclassical import ResourceLimitError

#: Ai(arg) < 1e-14 beyond this argument; sets the tangential frequency cutoff
_AIRY_NEGLIGIBLE_ARG = 13.6

#: tensor p-quadrature is capped at d <= 4 (quadrature dimension d-1)
P_QUADRATURE_MAX_DIM = 4


@dataclass(frozen=True)
class CausticFrame:
    """A caustic point with an orthonormal frame (normal first, then tangents)."""

    x0: np.ndarray
    basis: np.ndarray  # rows: basis[0] = x0, basis[1:] spans the tangent plane

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float)
        basis = np.asarray(self.basis, dtype=float)
        if abs(np.linalg.norm(x0) - 1.0) > 1e-12:
            raise ValueError("caustic point must have |x0| = 1")
        if np.max(np.abs(basis @ basis.T - np.eye(len(x0)))) > 1e-12:
            raise ValueError("frame must be orthonormal")
        if np.max(np.abs(basis[0] - x0)) > 1e-12:
            raise ValueError("first frame vector must be the normal x0")

    @staticmethod
    def from_point(x0):
        x0 = np.asarray(x0, dtype=float)
        norm = np.linalg.norm(x0)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError("caustic point must have |x0| = 1")
        d = x0.size
        # complete x0 to an orthonormal basis by QR of [x0 | I]
        q, _ = np.linalg.qr(np.column_stack([x0, np.eye(d)]))
        basis = q.T[:d]
        if basis[0] @ x0 < 0:
            basis = -basis
        basis[0] = x0
        return CausticFrame(x0=x0, basis=basis)

    @property
    def d(self):
        return self.x0.size

    def normal_component(self, u):
        return float(np.asarray(u, dtype=float) @ self.x0)

    def tangential_component(self, u):
        u = np.asarray(u, dtype=float)
        return u - (u @ self.x0) * self.x0


def _p_nodes(p_max, freq, dim):
    """Tensor Gauss-Legendre grid on [-p_max, p_max]^dim resolving e^{i freq p}."""
    width = max(0.25, 2.0 / (1.0 + freq))
    n_panels = int(math.ceil(2.0 * p_max / width))
    nodes, weights = [], []
    edges = np.linspace(-p_max, p_max, n_panels + 1)
    gx, gw = np.polynomial.legendre.leggauss(12)
    for lo, hi in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (lo + hi) + 0.5 * (hi - lo) * gx)
        weights.append(0.5 * (hi - lo) * gw)
    p1 = np.concatenate(nodes)
    w1 = np.concatenate(weights)
    if dim == 1:
        return p1[:, None], w1
    grids = np.meshgrid(*([p1] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    w = w1
    for _ in range(dim - 1):
        w = np.multiply.outer(w, w1)
    return pts, w.ravel()


def pi0_airy(frame, u, v, warn_imag=1e-10):
    """Pi0(u,v) by tensor quadrature over the tangential frequencies.

    The p-range is chosen so the Airy factors are below 1e-14 at the cutoff;
    the result is real up to quadrature noise, and an imaginary residue above
    warn_imag (relative) raises a warning.
    """
    d = frame.d
    if d < 2:
        raise ValueError("the scaling limit needs d >= 2")
    if d > P_QUADRATURE_MAX_DIM:
        raise ResourceLimitError(
            f"p-quadrature dimension {d-1} exceeds the cap; use pi0_contour")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    u1 = frame.normal_component(u)
    v1 = frame.normal_component(v)
    dt = frame.tangential_component(u) - frame.tangential_component(v)
    # tangential separation in frame coordinates
    delta = frame.basis[1:] @ dt
    m = min(u1, v1)
    p_max = math.sqrt(2.0 * max(1.0, _AIRY_NEGLIGIBLE_ARG * 2.0 ** (-1.0 / 3.0) - m))
    freq = float(np.max(np.abs(delta))) + 2.2 * p_max
    pts, w = _p_nodes(p_max, freq, d - 1)
    if pts.shape[0] > 2 * 10**7:
        raise ResourceLimitError("p-quadrature grid too large")
    p_sq = np.sum(pts * pts, axis=1)
    au = airy.ai(2.0 ** (1.0 / 3.0) * (u1 + p_sq / 2.0))
    av = airy.ai(2.0 ** (1.0 / 3.0) * (v1 + p_sq / 2.0))
    phase = np.exp(1j * (pts @ delta))
    total = np.sum(w * phase * au * av)
    pref = 2.0 ** (2.0 / 3.0) * (2.0 * math.pi) ** (1 - d)
    value = pref * total
    scale = max(abs(value.real), pref * float(np.sum(np.abs(w * au * av))) * 1e-4)
    if abs(value.imag) > warn_imag * max(scale, 1e-300):
        import warnings
        warnings.warn(f"pi0_airy imaginary residue {value.imag:.2e}",
                      RuntimeWarning, stacklevel=2)
    return float(value.real)


def pi0_contour(frame, u, v):
    """Pi0(u,v) by contour quadrature of the resummed representation.

    Rescaling T -> 2T maps the T^3/24 cubic onto the standard Airy phase:
    Pi0 = 2^(1-d/2) (2 pi)^(-d/2) * (1/2 pi i) int_C T^(-d/2)
          exp(T^3/3 - (u1+v1)T) exp(-|u-v|^2/(4T)) dT.
    The extra factor is bounded by 1 on Re T > 0, so the weighted-Airy path
    machinery applies unchanged.
    """
    d = frame.d
    if d < 2:
        raise ValueError("the scaling limit needs d >= 2")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    s = frame.normal_component(u) + frame.normal_component(v)
    c = float(np.sum((u - v) ** 2)) / 4.0
    val = airy.contour_integral(-d / 2.0, s, extra=lambda t: np.exp(-c / t))
    return 2.0 ** (1.0 - d / 2.0) * (2.0 * math.pi) ** (-d / 2.0) * val


def pi0(frame, u, v):
    """Scaling-limit kernel; Airy-mode quadrature for d <= 3, contour beyond."""
    if frame.d <= 3:
        return pi0_airy(frame, u, v)
    return pi0_contour(frame, u, v)


def pi0_diagonal(frame, u1):
    """Closed-form diagonal 2^(1-d) pi^(-d/2) Ai_{-d/2}(2 u1)."""
    d = frame.d
    return 2.0 ** (1 - d) * math.pi ** (-d / 2.0) * airy.ai_k(-d / 2.0, 2.0 * u1)


def _pi0_grid(frame, point, w1, w2, p, wp):
    """Pi0(point, w) on a tensor grid of w = (w1, w2) for d = 2, via one GEMM.

    Factorizes the p-integral: Pi0(point, w) = Re sum_m c_m A[m, i] E[m, j]
    with c_m the point-side weights, A the Airy factor on the w1 grid and E
    the tangential phases on the w2 grid.
    """
    u1 = frame.normal_component(point)
    u2 = float(frame.basis[1] @ point)
    p_sq = p * p
    c = wp * airy.ai(2.0 ** (1.0 / 3.0) * (u1 + p_sq / 2.0)) * np.exp(1j * p * u2)
    a = airy.ai(2.0 ** (1.0 / 3.0) * (w1[None, :] + p_sq[:, None] / 2.0))
    e = np.exp(-1j * p[:, None] * w2[None, :])
    pref = 2.0 ** (2.0 / 3.0) / (2.0 * math.pi)
    return pref * np.real((c[:, None] * a).T @ e)


def _panel_grid(lo, hi, max_freq, nodes_per_panel=12):
    width = max(0.1, 2.0 / (1.0 + max_freq / 6.0))
    n_panels = int(math.ceil((hi - lo) / width))
    gx, gw = np.polynomial.legendre.leggauss(nodes_per_panel)
    edges = np.linspace(lo, hi, n_panels + 1)
    xs = np.concatenate([0.5 * (a + b) + 0.5 * (b - a) * gx
                         for a, b in zip(edges[:-1], edges[1:])])
    ws = np.concatenate([0.5 * (b - a) * gw
                         for a, b in zip(edges[:-1], edges[1:])])
    return xs, ws


def compose_pi0(frame, u, v, window=25.0, w1_upper=8.0):
    """Numerically compose Pi0 with itself over a truncated window (d = 2).

    Returns (composed, direct) where composed = int Pi0(u,w) Pi0(w,v) dw over
    w1 in [-window, w1_upper], w2 in [-window, window].  Idempotency makes
    composed -> direct as the window grows; the positive-w1 side decays
    superexponentially (hence the asymmetric cut at +8) while the negative
    side only carries an oscillatory |w1|^(-1/2) envelope, so convergence in
    the window is slow and measured, not assumed.
    """
    if frame.d != 2:
        raise ValueError("the composition check is implemented for d = 2")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    m = -window
    p_max = math.sqrt(2.0 * max(1.0, _AIRY_NEGLIGIBLE_ARG * 2.0 ** (-1.0 / 3.0) - m))
    p, wp = _panel_grid(-p_max, p_max, 2.0 * window + 2.2 * p_max)
    osc = math.sqrt(2.0 * window)  # largest Airy oscillation rate on the grid
    w1, ww1 = _panel_grid(-window, w1_upper, osc + 2.0)
    w2, ww2 = _panel_grid(-window, window, p_max)
    gu = _pi0_grid(frame, u, w1, w2, p, wp)
    gv = _pi0_grid(frame, v, w1, w2, p, wp)
    composed = float(np.einsum("ij,ij,i,j->", gu, gv, ww1, ww2))
    direct = pi0_airy(frame, u, v)
    return composed, direct
