"""Vector spherical harmonics and the gradient-field reconstruction chain.

The gradient of a harmonic potential restricted to a sphere splits into a
radial pattern (type 1, xi times a scalar harmonic) and a tangential
surface-gradient pattern (type 2). This module provides that basis, the
coefficient container and transforms mirroring the scalar ones, the
tensor-kernel convolutions built from the same symbol sets as the scalar
case, and the diagnostics (tensor kernel values, Frobenius-profile moments)
the localization analysis needs.

Pole handling: all tangential formulas are written in terms of the reduced
functions B_n^m = A_n^m / sin(theta), which satisfy the same recurrences as
the associated Legendre functions A_n^m and stay finite at the poles, so
basis values at |xi_3| = 1 are the correct limits without a special branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .harmonics import (
    CapGrid,
    SphereGrid,
    _alf_column,
    _alf_next_diagonal,
    _alf_start,
    _direction_angles,
    analyze,
    cap_grid,
    sphere_grid,
)
from .kernels import Geometry, KernelPair, PenaltyWeights, SymbolSet, optimize
from .legendre import legendre_all
from .transforms import RegionSpec

__all__ = [
    "VectorCoefficients",
    "TensorKernelPair",
    "VectorFieldSamples",
    "vsh",
    "vector_synthesize",
    "vector_analyze",
    "vector_field_samples",
    "vector_upward_continue",
    "vector_optimize",
    "vector_scaling_transform",
    "vector_wavelet_transform_local",
    "vector_approximate",
    "vector_approximate_coefficients",
    "vector_relative_error",
    "tensor_kernel_eval",
    "tensor_first_moment",
    "save_vector_coefficients",
    "load_vector_coefficients",
]

_SQRT2 = math.sqrt(2.0)

# The coupled symbols behave identically for scalar and tensor kernels; the
# tensor structure enters only through evaluation, so the pair type is shared.
TensorKernelPair = KernelPair


# ---------------------------------------------------------------------------
# coefficient container


@dataclass
class VectorCoefficients:
    """Flat real coefficient store for a two-type vector field on a sphere.

    Type 1 (radial pattern) occupies data[n^2 + k - 1] for n = 0..n_max;
    type 2 (surface-gradient pattern) starts at degree 1 and occupies
    data[(n_max+1)^2 + n^2 + k - 2]. The Euclidean norm of data equals the
    L2 surface norm of the synthesized field.
    """

    radius: float
    n_max: int
    data: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.n_max < 0:
            raise ValueError("n_max must be >= 0")
        size = 2 * (self.n_max + 1) ** 2 - 1
        if self.data is None:
            self.data = np.zeros(size)
        else:
            self.data = np.asarray(self.data, dtype=float)
            if self.data.shape != (size,):
                raise ValueError(
                    f"data must have shape ({size},) for n_max={self.n_max}"
                )

    def _index(self, i: int, n: int, k: int) -> int:
        if i not in (1, 2):
            raise ValueError("type i must be 1 or 2")
        lo = 0 if i == 1 else 1
        if not (lo <= n <= self.n_max):
            raise ValueError(f"degree n={n} outside {lo}..{self.n_max} for type {i}")
        if not (1 <= k <= 2 * n + 1):
            raise ValueError(f"order k={k} outside 1..{2 * n + 1} for n={n}")
        if i == 1:
            return n * n + k - 1
        return (self.n_max + 1) ** 2 + n * n + k - 2

    def coeff(self, i: int, n: int, k: int) -> float:
        return float(self.data[self._index(i, n, k)])

    def set_coeff(self, i: int, n: int, k: int, value: float) -> None:
        self.data[self._index(i, n, k)] = value

    def l2_norm(self) -> float:
        """L2(sphere) norm of the represented field."""
        return float(np.linalg.norm(self.data))

    def copy(self) -> "VectorCoefficients":
        return VectorCoefficients(self.radius, self.n_max, self.data.copy())

    def channel(self, i: int) -> np.ndarray:
        """Copy of one type's coefficients in the scalar flat layout.

        Degree-0 of the returned array is zero for type 2 (that slot does
        not exist in the vector basis).
        """
        size = (self.n_max + 1) ** 2
        if i == 1:
            return self.data[:size].copy()
        if i == 2:
            out = np.zeros(size)
            out[1:] = self.data[size:]
            return out
        raise ValueError("type i must be 1 or 2")

    def scaled_by_degree(self, factors: np.ndarray,
                         radius: float | None = None) -> "VectorCoefficients":
        """New container with degree n of both types multiplied by factors[n]."""
        factors = np.asarray(factors, dtype=float)
        if factors.shape[0] < self.n_max + 1:
            raise ValueError("need one factor per degree")
        out = np.empty_like(self.data)
        off = (self.n_max + 1) ** 2
        for n in range(self.n_max + 1):
            out[n * n : (n + 1) * (n + 1)] = factors[n] * self.data[n * n : (n + 1) * (n + 1)]
            if n >= 1:
                lo, hi = off + n * n - 1, off + (n + 1) * (n + 1) - 1
                out[lo:hi] = factors[n] * self.data[lo:hi]
        return VectorCoefficients(
            self.radius if radius is None else radius, self.n_max, out
        )


@dataclass
class VectorFieldSamples:
    """Vector point samples of a bandlimited field on a full-sphere rule.

    degree declares the bandlimit of the sampled field; the caller is the
    authority on it.
    """

    grid: SphereGrid
    values: np.ndarray
    degree: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_nodes, 3):
            raise ValueError("values must have one 3-vector per grid node")
        if self.degree < 0:
            raise ValueError("degree must be >= 0")


def vector_field_samples(coeffs: VectorCoefficients,
                         exact_degree: int) -> VectorFieldSamples:
    """Sample a coefficient field on a fresh grid of the stated exactness."""
    grid = sphere_grid(coeffs.radius, exact_degree)
    return VectorFieldSamples(grid, vector_synthesize(coeffs, grid), coeffs.n_max)


# ---------------------------------------------------------------------------
# reduced Legendre engine for the tangential basis

# B_1^1 = A_1^1 / sin(theta) is constant; the diagonal and column recurrences
# for B coincide with those for A because dividing by sin(theta) commutes
# with both.
_B11 = math.sqrt(1.5) * _alf_start()


def _b_columns(n_max: int, m: int, ct: np.ndarray, st: np.ndarray) -> np.ndarray:
    """Rows B_n^m for n = m..n_max at the points (ct, st), m >= 1."""
    bmm = np.full(np.shape(ct), _B11)
    for mm in range(1, m):
        bmm = _alf_next_diagonal(mm, st, bmm)
    return _alf_column(n_max, m, ct, bmm)


def _theta_derivative_from_b(n_max: int, m: int, ct: np.ndarray,
                             brows: np.ndarray) -> np.ndarray:
    """d/dtheta of A_n^m from the reduced rows, finite at the poles.

    sin(theta) dA/dtheta = n t A_n - e_nm A_{n-1} divided by sin(theta)
    turns into n t B_n - e_nm B_{n-1}.
    """
    out = np.empty_like(brows)
    out[0] = m * ct * brows[0]
    for n in range(m + 1, n_max + 1):
        e = math.sqrt((n * n - m * m) * (2 * n + 1) / (2 * n - 1))
        out[n - m] = n * ct * brows[n - m] - e * brows[n - m - 1]
    return out


def _m0_theta_rows(n_max: int, ct: np.ndarray, st: np.ndarray) -> np.ndarray:
    """d/dtheta of A_n^0 = -sin(theta) sqrt((2n+1)/4pi) P_n'(t), all degrees."""
    _, dp, _ = legendre_all(n_max, ct)
    norm = np.sqrt(np.arange(1, 2 * n_max + 2, 2) / (4.0 * math.pi))
    return -st * norm[:, None] * dp


def _m0_value_rows(n_max: int, ct: np.ndarray) -> np.ndarray:
    """A_n^0 = sqrt((2n+1)/4pi) P_n(t), all degrees."""
    p, _, _ = legendre_all(n_max, ct)
    norm = np.sqrt(np.arange(1, 2 * n_max + 2, 2) / (4.0 * math.pi))
    return norm[:, None] * p


# ---------------------------------------------------------------------------
# basis functions


def vsh(i: int, n: int, k: int, xi) -> np.ndarray:
    """Vector spherical harmonic y^(i)_{n,k} at unit direction(s) xi.

    Type 1 is xi Y_{n,k}(xi); type 2 is the surface gradient of Y_{n,k}
    divided by sqrt(n(n+1)) and exists only for n >= 1. The toroidal third
    type carries no gradient-field content and is not provided.
    """
    if i not in (1, 2):
        raise ValueError("type i must be 1 or 2")
    if i == 2 and n == 0:
        raise ValueError("type 2 starts at degree 1")
    if n < 0:
        raise ValueError("degree n must be >= 0")
    if not (1 <= k <= 2 * n + 1):
        raise ValueError(f"order k={k} outside 1..{2 * n + 1}")
    xi = np.asarray(xi, dtype=float)
    scalar_input = xi.ndim == 1
    single = VectorCoefficients(1.0, n)
    single.set_coeff(i, n, k, 1.0)
    pts = xi[None, :] if scalar_input else xi
    out = _vector_synthesize_points(single, pts)
    return out[0] if scalar_input else out


# ---------------------------------------------------------------------------
# synthesis and analysis


def vector_synthesize(coeffs: VectorCoefficients, points) -> np.ndarray:
    """Cartesian field values at unit directions, a SphereGrid, or a CapGrid.

    Returns one 3-vector per point (shape (3,) for a single direction).
    Product grids in the global frame use the separated path.
    """
    if isinstance(points, SphereGrid):
        return _vector_synthesize_product(coeffs, points.ct, points.phis)
    if isinstance(points, CapGrid):
        if np.allclose(points.rotation, np.eye(3), atol=1e-14):
            return _vector_synthesize_product(coeffs, points.t_nodes, points.phis)
        return _vector_synthesize_points(coeffs, points.nodes)
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        return _vector_synthesize_points(coeffs, pts[None, :])[0]
    return _vector_synthesize_points(coeffs, pts)


def _channel_views(coeffs: VectorCoefficients) -> tuple[np.ndarray, np.ndarray]:
    """(c1, c2n) with c2n the type-2 data rescaled by 1/sqrt(n(n+1)).

    Both come back in the scalar flat layout (degree-0 slot of c2n is zero)
    so the synthesis loops can index them uniformly.
    """
    n_max = coeffs.n_max
    size = (n_max + 1) ** 2
    c1 = coeffs.data[:size]
    c2n = np.zeros(size)
    c2n[1:] = coeffs.data[size:]
    for n in range(1, n_max + 1):
        c2n[n * n : (n + 1) * (n + 1)] /= math.sqrt(n * (n + 1.0))
    return c1, c2n


def _vector_synthesize_product(coeffs: VectorCoefficients, ct: np.ndarray,
                               phis: np.ndarray) -> np.ndarray:
    """Values on the product grid, flattened colatitude-major, shape (n, 3)."""
    n_max = coeffs.n_max
    inv_r = 1.0 / coeffs.radius
    ct = np.asarray(ct, dtype=float)
    st = np.sqrt(np.maximum(0.0, 1.0 - ct * ct))
    c1, c2n = _channel_views(coeffs)

    f_r = np.zeros((ct.size, phis.size))
    f_t = np.zeros_like(f_r)
    f_p = np.zeros_like(f_r)

    rows0 = _m0_value_rows(n_max, ct)
    drows0 = _m0_theta_rows(n_max, ct, st)
    g_r = np.zeros(ct.size)
    g_t = np.zeros(ct.size)
    for n in range(n_max + 1):
        g_r += c1[n * n] * rows0[n]
        g_t += c2n[n * n] * drows0[n]
    f_r += g_r[:, None]
    f_t += g_t[:, None]

    for m in range(1, n_max + 1):
        brows = _b_columns(n_max, m, ct, st)
        drows = _theta_derivative_from_b(n_max, m, ct, brows)
        gr_c = np.zeros(ct.size)
        gr_s = np.zeros(ct.size)
        gt_c = np.zeros(ct.size)
        gt_s = np.zeros(ct.size)
        gp_c = np.zeros(ct.size)
        gp_s = np.zeros(ct.size)
        for n in range(m, n_max + 1):
            base = n * n
            arow = st * brows[n - m]
            gr_c += c1[base + m] * arow
            gr_s += c1[base + n + m] * arow
            gt_c += c2n[base + m] * drows[n - m]
            gt_s += c2n[base + n + m] * drows[n - m]
            gp_c += c2n[base + m] * m * brows[n - m]
            gp_s += c2n[base + n + m] * m * brows[n - m]
        cos_m = np.cos(m * phis)
        sin_m = np.sin(m * phis)
        f_r += _SQRT2 * (np.outer(gr_c, cos_m) + np.outer(gr_s, sin_m))
        f_t += _SQRT2 * (np.outer(gt_c, cos_m) + np.outer(gt_s, sin_m))
        # d/dphi swaps the azimuth factors: cos-type picks -sin, sin-type +cos
        f_p += _SQRT2 * (np.outer(gp_s, cos_m) - np.outer(gp_c, sin_m))

    cp = np.cos(phis)
    sp = np.sin(phis)
    horiz = f_r * st[:, None] + f_t * ct[:, None]
    out = np.empty((ct.size * phis.size, 3))
    out[:, 0] = (horiz * cp[None, :] - f_p * sp[None, :]).ravel()
    out[:, 1] = (horiz * sp[None, :] + f_p * cp[None, :]).ravel()
    out[:, 2] = (f_r * ct[:, None] - f_t * st[:, None]).ravel()
    return inv_r * out


def _vector_synthesize_points(coeffs: VectorCoefficients,
                              points: np.ndarray) -> np.ndarray:
    """Direct evaluation at arbitrary unit directions, shape (n, 3)."""
    pts = points.reshape(-1, 3)
    ct, st, cp, sp = _direction_angles(pts)
    n_max = coeffs.n_max
    c1, c2n = _channel_views(coeffs)

    f_r = np.zeros(ct.shape)
    f_t = np.zeros(ct.shape)
    f_p = np.zeros(ct.shape)

    rows0 = _m0_value_rows(n_max, ct)
    drows0 = _m0_theta_rows(n_max, ct, st)
    for n in range(n_max + 1):
        f_r += c1[n * n] * rows0[n]
        f_t += c2n[n * n] * drows0[n]

    cos_m = cp.copy()
    sin_m = sp.copy()
    bmm = np.full(ct.shape, _B11)
    for m in range(1, n_max + 1):
        brows = _alf_column(n_max, m, ct, bmm)
        drows = _theta_derivative_from_b(n_max, m, ct, brows)
        gr_c = np.zeros_like(ct)
        gr_s = np.zeros_like(ct)
        gt_c = np.zeros_like(ct)
        gt_s = np.zeros_like(ct)
        gp_c = np.zeros_like(ct)
        gp_s = np.zeros_like(ct)
        for n in range(m, n_max + 1):
            base = n * n
            arow = st * brows[n - m]
            gr_c += c1[base + m] * arow
            gr_s += c1[base + n + m] * arow
            gt_c += c2n[base + m] * drows[n - m]
            gt_s += c2n[base + n + m] * drows[n - m]
            gp_c += c2n[base + m] * m * brows[n - m]
            gp_s += c2n[base + n + m] * m * brows[n - m]
        f_r += _SQRT2 * (gr_c * cos_m + gr_s * sin_m)
        f_t += _SQRT2 * (gt_c * cos_m + gt_s * sin_m)
        f_p += _SQRT2 * (gp_s * cos_m - gp_c * sin_m)
        if m < n_max:
            bmm = _alf_next_diagonal(m, st, bmm)
            cos_m, sin_m = cos_m * cp - sin_m * sp, sin_m * cp + cos_m * sp

    horiz = f_r * st + f_t * ct
    out = np.empty((ct.size, 3))
    out[:, 0] = horiz * cp - f_p * sp
    out[:, 1] = horiz * sp + f_p * cp
    out[:, 2] = f_r * ct - f_t * st
    out /= coeffs.radius
    return out.reshape(points.shape[:-1] + (3,)) if points.ndim > 2 else out


def vector_analyze(samples: np.ndarray, grid: SphereGrid,
                   n_max: int) -> VectorCoefficients:
    """Vector coefficients of sampled Cartesian values by exact quadrature.

    Requires grid.exact_degree >= 2 n_max + 2: basis components carry one
    polynomial degree more than the scalar harmonics, so products of a
    degree-n_max field with any basis function reach degree 2 n_max + 2.
    """
    if not isinstance(grid, SphereGrid):
        raise TypeError("vector_analyze needs samples on a SphereGrid")
    if grid.exact_degree < 2 * n_max + 2:
        raise ValueError(
            f"grid exact_degree {grid.exact_degree} < 2*n_max+2 = {2 * n_max + 2}"
        )
    values = np.asarray(samples, dtype=float)
    if values.shape != (grid.n_nodes, 3):
        raise ValueError("samples must be one 3-vector per grid node")
    n_theta = grid.ct.size
    n_phi = grid.phis.size
    ct = grid.ct
    st = np.sqrt(np.maximum(0.0, 1.0 - ct * ct))
    cp = np.cos(grid.phis)
    sp = np.sin(grid.phis)

    vx = values[:, 0].reshape(n_theta, n_phi)
    vy = values[:, 1].reshape(n_theta, n_phi)
    vz = values[:, 2].reshape(n_theta, n_phi)
    f_r = vx * np.outer(st, cp) + vy * np.outer(st, sp) + vz * ct[:, None]
    f_t = vx * np.outer(ct, cp) + vy * np.outer(ct, sp) - vz * st[:, None]
    f_p = -vx * sp[None, :] + vy * cp[None, :]

    out = VectorCoefficients(grid.radius, n_max)
    out.data[: (n_max + 1) ** 2] = analyze(f_r.ravel(), grid, n_max).data

    mphi = np.outer(np.arange(n_max + 1), grid.phis)
    cosT = np.cos(mphi).T
    sinT = np.sin(mphi).T
    tc_th = f_t @ cosT
    ts_th = f_t @ sinT
    tc_ph = f_p @ cosT
    ts_ph = f_p @ sinT

    azw = 2.0 * np.pi / n_phi
    wt = grid.ct_weights * azw * grid.radius

    drows0 = _m0_theta_rows(n_max, ct, st)
    for n in range(1, n_max + 1):
        scale = 1.0 / math.sqrt(n * (n + 1.0))
        out.set_coeff(2, n, 1, scale * float((wt * drows0[n]) @ tc_th[:, 0]))

    for m in range(1, n_max + 1):
        brows = _b_columns(n_max, m, ct, st)
        drows = _theta_derivative_from_b(n_max, m, ct, brows)
        for n in range(max(m, 1), n_max + 1):
            scale = _SQRT2 / math.sqrt(n * (n + 1.0))
            wd = wt * drows[n - m]
            wb = wt * m * brows[n - m]
            out.set_coeff(2, n, 1 + m, scale * float(wd @ tc_th[:, m] - wb @ ts_ph[:, m]))
            out.set_coeff(2, n, 1 + n + m, scale * float(wd @ ts_th[:, m] + wb @ tc_ph[:, m]))
    return out


# ---------------------------------------------------------------------------
# continuation and the optimizer front end


def vector_upward_continue(b_plus: VectorCoefficients, R: float) -> VectorCoefficients:
    """Gradient-field coefficients on the sphere of radius R > r.

    Degree n of both types is damped by sigma_n = (r/R)^(n+1); the extra
    power relative to the scalar case comes from differentiating the
    potential before restricting.
    """
    r = b_plus.radius
    if R <= r:
        raise ValueError("upward continuation needs R > r")
    n = np.arange(b_plus.n_max + 1, dtype=float)
    return b_plus.scaled_by_degree((r / R) ** (n + 1.0), radius=R)


def vector_optimize(geometry: Geometry, w: PenaltyWeights,
                    targets: SymbolSet | None = None,
                    gram=None) -> TensorKernelPair:
    """Unique minimizer of the tensor-kernel functional.

    The quadratic structure is identical to the scalar optimizer; the vector
    case enters through the derivative-weighted Gram matrix and the shifted
    damping exponent, both selected by geometry.case.
    """
    if geometry.case != "vector":
        raise ValueError("vector_optimize needs geometry.case == 'vector'")
    return optimize(geometry, w, targets, gram)


# ---------------------------------------------------------------------------
# tensor-kernel application


def _require_vector(pair: KernelPair) -> Geometry:
    g = pair.geometry
    if g.case != "vector":
        raise ValueError("tensor transforms need geometry.case == 'vector'")
    return g


def _tensor_apply(symbols: SymbolSet, xi: np.ndarray, nodes: np.ndarray,
                  weighted: np.ndarray, scale: float) -> np.ndarray:
    """sum_j K(xi_p, eta_j) w_j f_j for the tensor kernel with given symbols.

    weighted holds the rows w_j f_j; scale is the product of the two radius
    factors of the kernel. The degree-n tensor block applied to a vector is
    written out in closed form: the radial channel contributes
    P_n(t) xi (eta.f) and the tangential channel
    [P''(t) (b.f)(eta - t xi) + P'(t)(f - eta (eta.f) - xi (b.f))]/(n(n+1))
    with b = xi - t eta, so nothing larger than per-degree Legendre rows is
    ever materialized.
    """
    n_hi = symbols.n_max
    vals = symbols.values
    deg = np.arange(n_hi + 1, dtype=float)
    c1 = (2.0 * deg + 1.0) * vals / (4.0 * math.pi * scale)
    c2 = np.zeros(n_hi + 1)
    c2[1:] = c1[1:] / (deg[1:] * (deg[1:] + 1.0))
    d = np.einsum("ij,ij->i", nodes, weighted)

    out = np.empty((xi.shape[0], 3))
    for idx in range(xi.shape[0]):
        x = xi[idx]
        t = np.clip(nodes @ x, -1.0, 1.0)
        e = weighted @ x - t * d
        p, dp, d2p = legendre_all(n_hi, t)
        s_rad = c1 @ (p @ d)
        s_tang = c2 @ (d2p @ (e * t) + dp @ e)
        vec = c2 @ ((d2p * e) @ nodes + dp @ weighted - (dp * d) @ nodes)
        out[idx] = x * (s_rad - s_tang) + vec
    return out


def tensor_kernel_eval(symbols: SymbolSet, xi, eta) -> np.ndarray:
    """3x3 tensor kernel value at one direction pair, radius factors excluded.

    Sums sym(n) times the degree-n reproducing tensor of both types; the
    closed form uses only Legendre values and derivatives at t = xi.eta.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    t = float(np.clip(xi @ eta, -1.0, 1.0))
    p, dp, d2p = legendre_all(symbols.n_max, np.asarray(t))
    a = eta - t * xi
    b = xi - t * eta
    radial = np.outer(xi, eta)
    tang = np.eye(3) - np.outer(eta, eta) - np.outer(xi, b)
    out = symbols.values[0] / (4.0 * math.pi) * radial
    for n in range(1, symbols.n_max + 1):
        v = symbols.values[n]
        if v == 0.0:
            continue
        c = (2.0 * n + 1.0) * v / (4.0 * math.pi)
        out = out + c * (
            float(p[n]) * radial
            + (float(d2p[n]) * np.outer(a, b) + float(dp[n]) * tang)
            / (n * (n + 1.0))
        )
    return out


def tensor_first_moment(symbols: SymbolSet) -> float:
    """8 pi^2 r^4 times the first moment of the tensor Frobenius profile.

    The integral of t |K(t)|_F^2 over [-1, 1] reduces to neighbouring-degree
    products: only |n - m| = 1 pairs survive, each weighted by the channel
    overlap 1/2 for the radial-only degree 0 and
    1/2 + (n(n+1) + m(m+1) - 2)^2 / (8 n(n+1) m(m+1)) otherwise, times the
    Legendre moment 2(n+1) / ((2n+1)(2n+3)).
    """
    v = symbols.values
    total = 0.0
    for n in range(symbols.n_max):
        m = n + 1
        if n == 0:
            weight = 0.5
        else:
            a = n * (n + 1.0)
            b = m * (m + 1.0)
            weight = 0.5 + (a + b - 2.0) ** 2 / (8.0 * a * b)
        moment = 2.0 * (n + 1.0) / ((2.0 * n + 1.0) * (2.0 * n + 3.0))
        total += 2.0 * v[n] * v[m] * (2 * n + 1) * (2 * m + 1) * weight * moment
    return total


# ---------------------------------------------------------------------------
# transforms

_NO_SPECTRAL_CAP = (
    "the cap-restricted tensor convolution has no degree-wise spectral form "
    "for kernel_rho < 2; use the quadrature path"
)


def vector_scaling_transform(pair: TensorKernelPair, f1, points, *,
                             method: str = "quadrature") -> np.ndarray:
    """Regularized downward continuation of outer-sphere gradient data.

    f1 is either VectorFieldSamples on a grid at radius R or
    VectorCoefficients at R. The spectral path multiplies both types by the
    scaling symbols degree-wise; the quadrature path applies the tensor
    kernel node-wise and needs grid exactness >= N + degree + 2.
    """
    g = _require_vector(pair)
    if method not in ("quadrature", "spectral"):
        raise ValueError("method must be 'quadrature' or 'spectral'")

    if isinstance(f1, VectorCoefficients):
        coeffs = f1
        samples = None
    elif isinstance(f1, VectorFieldSamples):
        coeffs = None
        samples = f1
    else:
        raise TypeError("f1 must be VectorFieldSamples or VectorCoefficients")

    if method == "spectral":
        if coeffs is None:
            if samples.grid.exact_degree < 2 * samples.degree + 2:
                raise ValueError(
                    "spectral path needs grid exactness >= 2*degree+2 "
                    f"({samples.grid.exact_degree} < {2 * samples.degree + 2})"
                )
            coeffs = vector_analyze(samples.values, samples.grid, samples.degree)
        out = _scaling_spectral(pair, coeffs)
        return vector_synthesize(out, points)

    if samples is None:
        samples = vector_field_samples(coeffs, g.N + coeffs.n_max + 2)
    if samples.grid.exact_degree < g.N + samples.degree + 2:
        raise ValueError(
            "tensor scaling transform needs grid exactness >= N + degree + 2 "
            f"({samples.grid.exact_degree} < {g.N + samples.degree + 2})"
        )
    pts = _as_directions(points)
    weighted = samples.grid.weights[:, None] * samples.values
    return _tensor_apply(pair.phi, pts, samples.grid.nodes, weighted, g.r * g.R)


def _scaling_spectral(pair: TensorKernelPair,
                      f1: VectorCoefficients) -> VectorCoefficients:
    """Coefficient-space action of the tensor scaling transform, at radius r."""
    g = pair.geometry
    n_keep = min(g.N, f1.n_max)
    factors = np.zeros(f1.n_max + 1)
    factors[: n_keep + 1] = pair.phi.values[: n_keep + 1]
    return f1.scaled_by_degree(factors, radius=g.r)


def _as_directions(points) -> np.ndarray:
    if isinstance(points, (CapGrid, SphereGrid)):
        return points.nodes
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    return pts


def vector_wavelet_transform_local(pair: TensorKernelPair,
                                   f2: VectorCoefficients, x,
                                   region: RegionSpec, *,
                                   method: str = "quadrature") -> np.ndarray:
    """Wavelet refinement 3-vector at one point from cap-local ground data.

    Integrates the tensor wavelet kernel against the field over the cap of
    radius region.kernel_rho around x. Unlike the scalar case there is no
    degree-wise multiplier for a true cap: the truncated tensor kernel
    couples types and degrees, so the spectral path exists only for the
    degenerate full-sphere cap kernel_rho = 2.
    """
    g = _require_vector(pair)
    x = np.asarray(x, dtype=float)
    x = x / np.linalg.norm(x)
    if not region.contains(x):
        raise ValueError("evaluation point lies outside the evaluation region")
    if method not in ("quadrature", "spectral"):
        raise ValueError("method must be 'quadrature' or 'spectral'")
    if method == "spectral":
        if region.kernel_rho < 2.0:
            raise ValueError(_NO_SPECTRAL_CAP)
        out = _wavelet_spectral(pair, f2)
        return vector_synthesize(out, x)
    cap = cap_grid(g.r, x, region.kernel_rho, g.kN + f2.n_max + 2)
    vals = vector_synthesize(f2, cap)
    weighted = cap.weights[:, None] * vals
    return _tensor_apply(pair.psi_tilde, x[None, :], cap.nodes, weighted,
                         g.r * g.r)[0]


def _wavelet_spectral(pair: TensorKernelPair,
                      f2: VectorCoefficients) -> VectorCoefficients:
    """Full-sphere wavelet action: psi_tilde symbols degree-wise."""
    g = pair.geometry
    n_keep = min(g.kN, f2.n_max)
    factors = np.zeros(f2.n_max + 1)
    factors[: n_keep + 1] = pair.psi_tilde.values[: n_keep + 1]
    return f2.scaled_by_degree(factors)


def vector_approximate_coefficients(pair: TensorKernelPair, f1,
                                    f2: VectorCoefficients,
                                    region: RegionSpec) -> VectorCoefficients:
    """Coefficient field of the combined vector approximation.

    Only available for the degenerate cap kernel_rho = 2, where the wavelet
    convolution acts degree-wise; a true cap has no spectral form in the
    tensor case. f1 may be VectorFieldSamples (analyzed first) or
    VectorCoefficients at R.
    """
    if region.kernel_rho < 2.0:
        raise ValueError(_NO_SPECTRAL_CAP)
    if isinstance(f1, VectorFieldSamples):
        if f1.grid.exact_degree < 2 * f1.degree + 2:
            raise ValueError(
                "spectral path needs grid exactness >= 2*degree+2 "
                f"({f1.grid.exact_degree} < {2 * f1.degree + 2})"
            )
        f1 = vector_analyze(f1.values, f1.grid, f1.degree)
    elif not isinstance(f1, VectorCoefficients):
        raise TypeError("f1 must be VectorFieldSamples or VectorCoefficients")
    g = _require_vector(pair)
    t_part = _scaling_spectral(pair, f1)
    w_part = _wavelet_spectral(pair, f2)
    n_out = max(t_part.n_max, w_part.n_max)
    out = VectorCoefficients(g.r, n_out)
    for part in (t_part, w_part):
        head = (part.n_max + 1) ** 2
        off = (n_out + 1) ** 2
        out.data[:head] += part.data[:head]
        out.data[off : off + part.data.size - head] += part.data[head:]
    return out


def vector_approximate(pair: TensorKernelPair, f1, f2: VectorCoefficients,
                       region: RegionSpec, points, *,
                       method: str = "quadrature") -> np.ndarray:
    """Combined two-step vector approximation at the given points.

    Sum of the regularized downward continuation of outer-sphere gradient
    data and the cap-local tensor wavelet refinement of ground data. The
    quadrature path (default) works for any cap; the spectral path requires
    kernel_rho = 2.
    """
    if region.kernel_rho > pair.geometry.rho + 1e-12:
        raise ValueError("region.kernel_rho exceeds the geometry's cap radius")
    pts = _as_directions(points)
    if region.eval_rho < 2.0:
        dist = 1.0 - pts @ region.center_direction
        if np.any(dist > region.eval_rho + 1e-9):
            raise ValueError("an evaluation point lies outside the evaluation region")
    if method == "spectral":
        out = vector_approximate_coefficients(pair, f1, f2, region)
        return vector_synthesize(out, points)
    t_part = vector_scaling_transform(pair, f1, points, method=method)
    w_part = np.empty_like(t_part)
    for i, p in enumerate(pts):
        w_part[i] = vector_wavelet_transform_local(pair, f2, p, region)
    return t_part + w_part


def vector_relative_error(b_ref: VectorCoefficients,
                          b_approx: VectorCoefficients,
                          region: RegionSpec) -> float:
    """L2 error over the evaluation region, relative to the reference norm.

    Pointwise Euclidean norms of the Cartesian difference field, integrated
    with a rule exact for both squared fields.
    """
    if b_ref.radius != b_approx.radius:
        raise ValueError("fields must live on the same sphere")
    degree = max(b_ref.n_max, b_approx.n_max)
    grid = region.eval_grid(b_ref.radius, 2 * degree + 2)
    ref_vals = vector_synthesize(b_ref, grid)
    diff = vector_synthesize(b_approx, grid) - ref_vals
    den = grid.integrate(np.einsum("ij,ij->i", ref_vals, ref_vals))
    if den <= 0.0 or not np.isfinite(den):
        raise ValueError("reference field is zero on the evaluation region")
    num = grid.integrate(np.einsum("ij,ij->i", diff, diff))
    return math.sqrt(num / den)


# ---------------------------------------------------------------------------
# text file format


def save_vector_coefficients(coeffs: VectorCoefficients, path) -> None:
    """Write `i n k value` lines under a channels=2 header."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(
            f"# radius_km={coeffs.radius:.17g} n_max={coeffs.n_max} channels=2\n"
        )
        for i in (1, 2):
            for n in range(0 if i == 1 else 1, coeffs.n_max + 1):
                for k in range(1, 2 * n + 2):
                    fh.write(f"{i} {n} {k} {coeffs.coeff(i, n, k):.17g}\n")


def load_vector_coefficients(path) -> VectorCoefficients:
    """Read the text format written by save_vector_coefficients.

    Missing (i, n, k) entries default to zero; malformed lines are reported
    with their line number.
    """
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.readlines()
    if not lines:
        raise ValueError(f"{path}: empty coefficient file")
    header = lines[0].strip()
    fields = dict()
    if not header.startswith("#"):
        raise ValueError(
            f"{path}: line 1: missing `# radius_km=... n_max=... channels=2` header"
        )
    for token in header[1:].split():
        if "=" not in token:
            raise ValueError(f"{path}: line 1: bad header token {token!r}")
        key, _, val = token.partition("=")
        fields[key] = val
    try:
        radius = float(fields["radius_km"])
        n_max = int(fields["n_max"])
        channels = int(fields["channels"])
    except (KeyError, ValueError) as exc:
        raise ValueError(
            f"{path}: line 1: header needs radius_km, n_max and channels"
        ) from exc
    if channels != 2:
        raise ValueError(f"{path}: line 1: expected channels=2, got {channels}")

    out = VectorCoefficients(radius, n_max)
    for idx, line in enumerate(lines[1:], start=2):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split()
        if len(parts) != 4:
            raise ValueError(f"{path}: line {idx}: expected `i n k value`")
        try:
            i = int(parts[0])
            n = int(parts[1])
            k = int(parts[2])
            value = float(parts[3])
        except ValueError as exc:
            raise ValueError(f"{path}: line {idx}: unparsable entry") from exc
        try:
            out.set_coeff(i, n, k, value)
        except ValueError as exc:
            raise ValueError(f"{path}: line {idx}: {exc}") from exc
    return out
