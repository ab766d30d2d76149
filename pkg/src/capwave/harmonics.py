"""Real spherical harmonics, coefficient containers, and exact quadrature grids.

Conventions used throughout the package:

- Fully normalized real harmonics Y_{n,k} without the Condon-Shortley phase.
- The order index k runs 1..2n+1 and enumerates m = 0 first, then the
  cos(m phi) functions for m = 1..n, then the sin(m phi) functions.
- A field F on the sphere of radius ``rad`` is expanded in the orthonormal
  basis (1/rad) Y_{n,k}(x/|x|), so coefficients are
  c(n,k) = integral of F * (1/rad) Y_{n,k} d omega, and the Euclidean norm of
  the flat coefficient vector equals the L2 surface norm of F.
- Grids store unit node directions; quadrature weights carry the radius^2
  surface factor, so ``weights @ values`` is the surface integral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .legendre import gauss_rule

__all__ = [
    "HarmonicCoefficients",
    "SphereGrid",
    "CapGrid",
    "ynk",
    "sphere_grid",
    "cap_grid",
    "synthesize",
    "analyze",
    "sobolev_norm",
    "save_coefficients",
    "load_coefficients",
]

_INV_SQRT_4PI = 1.0 / math.sqrt(4.0 * math.pi)
_SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# coefficient container


@dataclass
class HarmonicCoefficients:
    """Flat real coefficient store for a scalar field on a sphere.

    data[n^2 + k - 1] holds c(n,k). The layout keeps whole degrees
    contiguous so degree-wise multipliers are cheap slices.
    """

    radius: float
    n_max: int
    data: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.n_max < 0:
            raise ValueError("n_max must be >= 0")
        size = (self.n_max + 1) ** 2
        if self.data is None:
            self.data = np.zeros(size)
        else:
            self.data = np.asarray(self.data, dtype=float)
            if self.data.shape != (size,):
                raise ValueError(
                    f"data must have shape ({size},) for n_max={self.n_max}"
                )

    def coeff(self, n: int, k: int) -> float:
        self._check_index(n, k)
        return float(self.data[n * n + k - 1])

    def set_coeff(self, n: int, k: int, value: float) -> None:
        self._check_index(n, k)
        self.data[n * n + k - 1] = value

    def _check_index(self, n: int, k: int) -> None:
        if not (0 <= n <= self.n_max):
            raise ValueError(f"degree n={n} outside 0..{self.n_max}")
        if not (1 <= k <= 2 * n + 1):
            raise ValueError(f"order k={k} outside 1..{2 * n + 1} for n={n}")

    def degree_slice(self, n: int) -> np.ndarray:
        """View of the 2n+1 coefficients of degree n."""
        return self.data[n * n : (n + 1) * (n + 1)]

    def l2_norm(self) -> float:
        """L2(sphere) norm of the represented field."""
        return float(np.linalg.norm(self.data))

    def copy(self) -> "HarmonicCoefficients":
        return HarmonicCoefficients(self.radius, self.n_max, self.data.copy())

    def scaled_by_degree(self, factors: np.ndarray, radius: float | None = None) -> "HarmonicCoefficients":
        """New container with degree n multiplied by factors[n]."""
        factors = np.asarray(factors, dtype=float)
        if factors.shape[0] < self.n_max + 1:
            raise ValueError("need one factor per degree")
        out = np.empty_like(self.data)
        for n in range(self.n_max + 1):
            out[n * n : (n + 1) * (n + 1)] = factors[n] * self.degree_slice(n)
        return HarmonicCoefficients(
            self.radius if radius is None else radius, self.n_max, out
        )


def sobolev_norm(coeffs: HarmonicCoefficients, s: float) -> float:
    """Norm with degree weights (n + 1/2)^(2s) on squared coefficients."""
    if s < 0:
        raise ValueError("s must be >= 0")
    total = 0.0
    for n in range(coeffs.n_max + 1):
        block = coeffs.degree_slice(n)
        total += (n + 0.5) ** (2 * s) * float(block @ block)
    return math.sqrt(total)


# ---------------------------------------------------------------------------
# quadrature grids


@dataclass
class SphereGrid:
    """Gauss-colatitude x uniform-longitude product rule on a full sphere.

    Exact for spherical polynomials of degree <= exact_degree. Nodes are
    unit directions ordered colatitude-major; weights include radius^2.
    """

    radius: float
    exact_degree: int
    nodes: np.ndarray
    weights: np.ndarray
    ct: np.ndarray       # Gauss nodes in t = cos(theta), ascending
    ct_weights: np.ndarray
    phis: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def integrate(self, values: np.ndarray) -> float:
        return float(self.weights @ np.asarray(values, dtype=float))


@dataclass
class CapGrid:
    """Rotated product rule on the spherical cap 1 - center.xi <= cap_rho.

    Exact for restrictions of spherical polynomials of degree <=
    exact_degree. Weights include radius^2 and sum to the cap area
    2 pi cap_rho radius^2.
    """

    radius: float
    center: np.ndarray
    cap_rho: float
    exact_degree: int
    nodes: np.ndarray
    weights: np.ndarray
    t_nodes: np.ndarray       # Gauss nodes in t = center.xi, ascending
    t_weights: np.ndarray
    phis: np.ndarray
    rotation: np.ndarray      # maps the north-pole rule onto the cap

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def integrate(self, values: np.ndarray) -> float:
        return float(self.weights @ np.asarray(values, dtype=float))


def sphere_grid(radius: float, exact_degree: int) -> SphereGrid:
    """Full-sphere rule with (L+1) x (2L+1) nodes, L = ceil(exact_degree/2)."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    if exact_degree < 0:
        raise ValueError("exact_degree must be >= 0")
    L = (exact_degree + 1) // 2
    ct, cw = gauss_rule(L + 1, -1.0, 1.0)
    n_phi = 2 * L + 1
    phis = 2.0 * np.pi * np.arange(n_phi) / n_phi

    st = np.sqrt(np.maximum(0.0, 1.0 - ct * ct))
    cos_p, sin_p = np.cos(phis), np.sin(phis)
    nodes = np.empty((ct.size * n_phi, 3))
    nodes[:, 0] = np.outer(st, cos_p).ravel()
    nodes[:, 1] = np.outer(st, sin_p).ravel()
    nodes[:, 2] = np.repeat(ct, n_phi)
    weights = np.repeat(cw, n_phi) * (2.0 * np.pi / n_phi) * radius * radius
    return SphereGrid(radius, exact_degree, nodes, weights, ct, cw, phis)


def _rotation_from_north(center: np.ndarray) -> np.ndarray:
    """Rotation matrix taking e3 to the unit vector center."""
    c = np.asarray(center, dtype=float)
    norm = np.linalg.norm(c)
    if norm == 0:
        raise ValueError("center must be a nonzero direction")
    c = c / norm
    cz = c[2]
    if cz > 1.0 - 1e-14:
        return np.eye(3)
    if cz < -1.0 + 1e-14:
        # half turn about the x-axis
        return np.diag([1.0, -1.0, -1.0])
    axis = np.array([-c[1], c[0], 0.0])
    s = np.linalg.norm(axis)
    axis = axis / s
    K = np.array([
        [0.0, -axis[2], axis[1]],
        [axis[2], 0.0, -axis[0]],
        [-axis[1], axis[0], 0.0],
    ])
    return np.eye(3) + s * K + (1.0 - cz) * (K @ K)


def cap_grid(radius: float, center, cap_rho: float, exact_degree: int) -> CapGrid:
    """Cap rule: Gauss in t on [1-cap_rho, 1] x uniform azimuth, rotated to center.

    cap_rho may equal 2, in which case the rule covers the full sphere
    (the degenerate cap).
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if not (0.0 < cap_rho <= 2.0):
        raise ValueError("cap_rho must lie in (0, 2]")
    if exact_degree < 0:
        raise ValueError("exact_degree must be >= 0")
    m_t = (exact_degree + 2) // 2
    t, tw = gauss_rule(max(m_t, 1), 1.0 - cap_rho, 1.0)
    n_phi = 2 * exact_degree + 1
    phis = 2.0 * np.pi * np.arange(n_phi) / n_phi

    rot = _rotation_from_north(center)
    center = rot @ np.array([0.0, 0.0, 1.0])

    st = np.sqrt(np.maximum(0.0, 1.0 - t * t))
    cos_p, sin_p = np.cos(phis), np.sin(phis)
    local = np.empty((t.size * n_phi, 3))
    local[:, 0] = np.outer(st, cos_p).ravel()
    local[:, 1] = np.outer(st, sin_p).ravel()
    local[:, 2] = np.repeat(t, n_phi)
    nodes = local @ rot.T
    weights = np.repeat(tw, n_phi) * (2.0 * np.pi / n_phi) * radius * radius
    return CapGrid(radius, center, cap_rho, exact_degree, nodes, weights,
                   t, tw, phis, rot)


# ---------------------------------------------------------------------------
# associated Legendre engine (orthonormal, no Condon-Shortley)


def _alf_start() -> float:
    return _INV_SQRT_4PI


def _alf_next_diagonal(m: int, st: np.ndarray, amm: np.ndarray) -> np.ndarray:
    """A_{m+1}^{m+1} from A_m^m."""
    return math.sqrt((2 * m + 3) / (2 * m + 2)) * st * amm


def _alf_column(n_max: int, m: int, ct: np.ndarray, amm: np.ndarray) -> np.ndarray:
    """Rows A_n^m for n = m..n_max, shape (n_max - m + 1,) + ct.shape.

    amm is A_m^m at the same points; the upward three-term recurrence in n
    is stable for these normalized functions.
    """
    rows = np.empty((n_max - m + 1,) + np.shape(ct))
    rows[0] = amm
    if n_max == m:
        return rows
    rows[1] = math.sqrt(2 * m + 3) * ct * amm
    for n in range(m + 2, n_max + 1):
        a = math.sqrt((2 * n + 1) * (2 * n - 1) / ((n - m) * (n + m)))
        b = math.sqrt(
            (2 * n + 1) * (n - 1 - m) * (n - 1 + m)
            / ((2 * n - 3) * (n - m) * (n + m))
        )
        rows[n - m] = a * ct * rows[n - m - 1] - b * rows[n - m - 2]
    return rows


def _alf_theta_derivative(n_max: int, m: int, ct: np.ndarray, st: np.ndarray,
                          rows: np.ndarray) -> np.ndarray:
    """d/dtheta of A_n^m for n = m..n_max given the value rows.

    Uses sin(theta) dA_n^m/dtheta = n t A_n^m - e_nm A_{n-1}^m with
    e_nm = sqrt((n^2 - m^2)(2n+1)/(2n-1)); valid away from the poles
    (callers handle |t| = 1 separately).
    """
    out = np.empty_like(rows)
    inv_st = np.where(st > 0, 1.0 / np.where(st > 0, st, 1.0), 0.0)
    out[0] = m * ct * rows[0] * inv_st  # e_mm = 0
    for n in range(m + 1, n_max + 1):
        e = math.sqrt((n * n - m * m) * (2 * n + 1) / (2 * n - 1))
        out[n - m] = (n * ct * rows[n - m] - e * rows[n - m - 1]) * inv_st
    return out


def _direction_angles(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(ct, st, cos phi, sin phi) for unit directions, safe at the poles."""
    pts = np.asarray(points, dtype=float)
    ct = np.clip(pts[..., 2], -1.0, 1.0)
    st = np.hypot(pts[..., 0], pts[..., 1])
    safe = np.where(st > 0, st, 1.0)
    cp = np.where(st > 0, pts[..., 0] / safe, 1.0)
    sp = np.where(st > 0, pts[..., 1] / safe, 0.0)
    return ct, st, cp, sp


def ynk(n: int, k: int, xi) -> float | np.ndarray:
    """Real orthonormal spherical harmonic Y_{n,k} at unit direction(s) xi."""
    if n < 0:
        raise ValueError("degree n must be >= 0")
    if not (1 <= k <= 2 * n + 1):
        raise ValueError(f"order k={k} outside 1..{2 * n + 1}")
    xi = np.asarray(xi, dtype=float)
    scalar_input = xi.ndim == 1
    pts = xi[None, :] if scalar_input else xi
    ct, st, cp, sp = _direction_angles(pts)

    if k == 1:
        m = 0
    elif k <= n + 1:
        m = k - 1
    else:
        m = k - n - 1

    amm = np.full(ct.shape, _alf_start())
    for mm in range(m):
        amm = _alf_next_diagonal(mm, st, amm)
    rows = _alf_column(n, m, ct, amm)
    a = rows[n - m]

    if m == 0:
        vals = a
    else:
        cos_m, sin_m = _azimuth_harmonics(m, cp, sp)
        vals = _SQRT2 * a * (cos_m if k <= n + 1 else sin_m)
    return float(vals[0]) if scalar_input else vals


def _azimuth_harmonics(m: int, cp: np.ndarray, sp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """cos(m phi), sin(m phi) from cos phi, sin phi by angle addition."""
    cos_m = np.ones_like(cp)
    sin_m = np.zeros_like(sp)
    for _ in range(m):
        cos_m, sin_m = cos_m * cp - sin_m * sp, sin_m * cp + cos_m * sp
    return cos_m, sin_m


# ---------------------------------------------------------------------------
# synthesis and analysis


def synthesize(coeffs: HarmonicCoefficients, points) -> np.ndarray:
    """Evaluate the field at unit directions, a SphereGrid, or a CapGrid.

    Grid arguments with product structure in the global frame use the
    separated colatitude/azimuth path; anything else falls back to direct
    pointwise accumulation over orders m.
    """
    if isinstance(points, SphereGrid):
        return _synthesize_product(coeffs, points.ct, points.phis).ravel()
    if isinstance(points, CapGrid):
        if np.allclose(points.rotation, np.eye(3), atol=1e-14):
            return _synthesize_product(coeffs, points.t_nodes, points.phis).ravel()
        return _synthesize_points(coeffs, points.nodes)
    return _synthesize_points(coeffs, np.asarray(points, dtype=float))


def _synthesize_product(coeffs: HarmonicCoefficients, ct: np.ndarray,
                        phis: np.ndarray) -> np.ndarray:
    """Values on the product grid (len(ct), len(phis))."""
    n_max = coeffs.n_max
    inv_r = 1.0 / coeffs.radius
    st = np.sqrt(np.maximum(0.0, 1.0 - ct * ct))
    out = np.zeros((ct.size, phis.size))
    amm = np.full(ct.shape, _alf_start())
    for m in range(n_max + 1):
        rows = _alf_column(n_max, m, ct, amm)
        if m == 0:
            g = np.zeros(ct.size)
            for n in range(n_max + 1):
                g += coeffs.data[n * n] * rows[n]
            out += g[:, None]
        else:
            gc = np.zeros(ct.size)
            gs = np.zeros(ct.size)
            for n in range(m, n_max + 1):
                base = n * n
                gc += coeffs.data[base + m] * rows[n - m]
                gs += coeffs.data[base + n + m] * rows[n - m]
            out += _SQRT2 * (
                np.outer(gc, np.cos(m * phis)) + np.outer(gs, np.sin(m * phis))
            )
        if m < n_max:
            amm = _alf_next_diagonal(m, st, amm)
    return inv_r * out


def _synthesize_points(coeffs: HarmonicCoefficients, points: np.ndarray) -> np.ndarray:
    """Direct evaluation at arbitrary unit directions (last axis = 3)."""
    scalar_input = points.ndim == 1
    pts = points[None, :] if scalar_input else points.reshape(-1, 3)
    ct, st, cp, sp = _direction_angles(pts)
    n_max = coeffs.n_max
    out = np.zeros(ct.shape)
    amm = np.full(ct.shape, _alf_start())
    cos_m = np.ones_like(ct)
    sin_m = np.zeros_like(ct)
    for m in range(n_max + 1):
        rows = _alf_column(n_max, m, ct, amm)
        if m == 0:
            g = np.zeros_like(ct)
            for n in range(n_max + 1):
                g += coeffs.data[n * n] * rows[n]
            out += g
        else:
            gc = np.zeros_like(ct)
            gs = np.zeros_like(ct)
            for n in range(m, n_max + 1):
                base = n * n
                gc += coeffs.data[base + m] * rows[n - m]
                gs += coeffs.data[base + n + m] * rows[n - m]
            out += _SQRT2 * (gc * cos_m + gs * sin_m)
        if m < n_max:
            amm = _alf_next_diagonal(m, st, amm)
            cos_m, sin_m = cos_m * cp - sin_m * sp, sin_m * cp + cos_m * sp
    out /= coeffs.radius
    if scalar_input:
        return float(out[0])
    return out.reshape(points.shape[:-1])


def analyze(samples: np.ndarray, grid: SphereGrid, n_max: int) -> HarmonicCoefficients:
    """Coefficients of a sampled field by exact quadrature.

    Requires grid.exact_degree >= 2 * n_max so products of the field with any
    basis function of degree <= n_max integrate exactly when the field itself
    is bandlimited to n_max.
    """
    if not isinstance(grid, SphereGrid):
        raise TypeError("analyze needs samples on a SphereGrid")
    if grid.exact_degree < 2 * n_max:
        raise ValueError(
            f"grid exact_degree {grid.exact_degree} < 2*n_max = {2 * n_max}"
        )
    values = np.asarray(samples, dtype=float)
    if values.shape != (grid.n_nodes,):
        raise ValueError("samples must match the grid node count")
    n_theta = grid.ct.size
    n_phi = grid.phis.size
    vals = values.reshape(n_theta, n_phi)

    # azimuth sums for every order at once
    mphi = np.outer(np.arange(n_max + 1), grid.phis)
    tc = vals @ np.cos(mphi).T        # (n_theta, n_max+1)
    ts = vals @ np.sin(mphi).T

    r = grid.radius
    azw = 2.0 * np.pi / n_phi
    wt = grid.ct_weights * azw * r * r / r   # one 1/r for the basis factor

    st = np.sqrt(np.maximum(0.0, 1.0 - grid.ct * grid.ct))
    out = HarmonicCoefficients(r, n_max)
    amm = np.full(grid.ct.shape, _alf_start())
    for m in range(n_max + 1):
        rows = _alf_column(n_max, m, grid.ct, amm)
        if m == 0:
            for n in range(n_max + 1):
                out.data[n * n] = (wt * rows[n]) @ tc[:, 0]
        else:
            for n in range(m, n_max + 1):
                base = n * n
                wrow = wt * rows[n - m] * _SQRT2
                out.data[base + m] = wrow @ tc[:, m]
                out.data[base + n + m] = wrow @ ts[:, m]
        if m < n_max:
            amm = _alf_next_diagonal(m, st, amm)
    return out


# ---------------------------------------------------------------------------
# text file format


def save_coefficients(coeffs: HarmonicCoefficients, path) -> None:
    """Write `n k value` lines under a `# radius_km=... n_max=...` header."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# radius_km={coeffs.radius:.17g} n_max={coeffs.n_max}\n")
        for n in range(coeffs.n_max + 1):
            for k in range(1, 2 * n + 2):
                fh.write(f"{n} {k} {coeffs.data[n * n + k - 1]:.17g}\n")


def load_coefficients(path) -> HarmonicCoefficients:
    """Read the text format written by save_coefficients.

    Missing (n, k) entries default to zero; malformed lines are reported
    with their line number.
    """
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.readlines()
    if not lines:
        raise ValueError(f"{path}: empty coefficient file")
    header = lines[0].strip()
    fields = dict()
    if not header.startswith("#"):
        raise ValueError(f"{path}: line 1: missing `# radius_km=... n_max=...` header")
    for token in header[1:].split():
        if "=" not in token:
            raise ValueError(f"{path}: line 1: bad header token {token!r}")
        key, _, val = token.partition("=")
        fields[key] = val
    try:
        radius = float(fields["radius_km"])
        n_max = int(fields["n_max"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: line 1: header needs radius_km and n_max") from exc

    out = HarmonicCoefficients(radius, n_max)
    for idx, line in enumerate(lines[1:], start=2):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split()
        if len(parts) != 3:
            raise ValueError(f"{path}: line {idx}: expected `n k value`")
        try:
            n = int(parts[0])
            k = int(parts[1])
            value = float(parts[2])
        except ValueError as exc:
            raise ValueError(f"{path}: line {idx}: unparsable entry") from exc
        if not (0 <= n <= n_max) or not (1 <= k <= 2 * n + 1):
            raise ValueError(f"{path}: line {idx}: index (n={n}, k={k}) out of range")
        out.data[n * n + k - 1] = value
    return out
