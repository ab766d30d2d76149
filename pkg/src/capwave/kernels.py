"""Kernel symbols, truncated-interval Gram matrices, and the pair optimizer.

A zonal kernel on the sphere is determined by its degree-wise symbols. The
reconstruction method needs two of them: a scaling kernel applied to
outer-sphere data and a wavelet kernel applied to inner-sphere cap data,
coupled so that their spectral responses telescope. This module builds the
quadratic functional that scores a candidate pair (fidelity on both spheres,
regularization of the downward continuation, energy of the wavelet outside
its cap) and returns its unique minimizer as the solution of one symmetric
positive-definite linear system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .legendre import gauss_rule, legendre_all

__all__ = [
    "Geometry",
    "SymbolSet",
    "KernelPair",
    "PenaltyWeights",
    "GramMatrix",
    "NumericalFailure",
    "gram_scalar",
    "gram_vector",
    "functional_value",
    "stationarity_residual",
    "optimize",
    "shannon_pair",
    "tsvd_symbols",
    "kernel_eval",
    "localization_ratio",
    "shannon_bound",
    "raised_cosine_targets",
    "full_interval_energy",
    "save_pair_csv",
]


class NumericalFailure(RuntimeError):
    """A linear solve failed; the weight configuration is pathological."""


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class Geometry:
    """Radii, truncation degrees, wavelet cap radius, and field type.

    sigma(n) is the degree-n damping factor of upward continuation:
    (r/R)^n for potential values, (r/R)^(n+1) for gradient fields.
    rho = 2 denotes the degenerate full-sphere cap; Gram construction
    requires rho < 2, the transforms do not.
    """

    r: float
    R: float
    N: int
    kappa: float = 1.25
    rho: float = 0.5
    case: str = "scalar"

    def __post_init__(self):
        if not (0 < self.r < self.R):
            raise ValueError("need 0 < r < R")
        if self.N < 0:
            raise ValueError("N must be >= 0")
        if self.kN <= self.N:
            raise ValueError("kappa must give kN = floor(kappa N) > N")
        if not (0.0 < self.rho <= 2.0):
            raise ValueError("rho must lie in (0, 2]")
        if self.case not in ("scalar", "vector"):
            raise ValueError("case must be 'scalar' or 'vector'")

    @property
    def kN(self) -> int:
        return int(math.floor(self.kappa * self.N))

    def sigma(self, n: int) -> float:
        e = n if self.case == "scalar" else n + 1
        return (self.r / self.R) ** e

    def sigmas(self, n_hi: int) -> np.ndarray:
        n = np.arange(n_hi + 1, dtype=float)
        e = n if self.case == "scalar" else n + 1.0
        return (self.r / self.R) ** e


@dataclass
class SymbolSet:
    """Degree-indexed multipliers value(0..n_max) of a zonal kernel."""

    n_max: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.n_max + 1,):
            raise ValueError(f"values must have shape ({self.n_max + 1},)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("symbols must be finite")

    def value(self, n: int) -> float:
        if not (0 <= n <= self.n_max):
            raise ValueError(f"degree {n} outside 0..{self.n_max}")
        return float(self.values[n])

    @classmethod
    def zeros(cls, n_max: int) -> "SymbolSet":
        return cls(n_max, np.zeros(n_max + 1))

    @classmethod
    def ones(cls, n_max: int) -> "SymbolSet":
        return cls(n_max, np.ones(n_max + 1))


@dataclass
class KernelPair:
    """Coupled scaling/wavelet symbols for one geometry.

    The wavelet symbols are derived, never set directly:
    psi_tilde(n) = phi_tilde(n) - phi(n) sigma(n) for n <= N, and
    psi_tilde(n) = phi_tilde(n) for N < n <= kN.
    """

    geometry: Geometry
    phi: SymbolSet
    phi_tilde: SymbolSet
    psi_tilde: SymbolSet = field(init=False)

    def __post_init__(self):
        g = self.geometry
        if self.phi.n_max != g.N:
            raise ValueError(f"phi must have n_max = N = {g.N}")
        if self.phi_tilde.n_max != g.kN:
            raise ValueError(f"phi_tilde must have n_max = kN = {g.kN}")
        psi = self.phi_tilde.values.copy()
        psi[: g.N + 1] -= self.phi.values * g.sigmas(g.N)
        self.psi_tilde = SymbolSet(g.kN, psi)


@dataclass
class PenaltyWeights:
    """Strictly positive weights of the minimization functional."""

    alpha: np.ndarray        # length N+1, outer-sphere fidelity
    alpha_tilde: np.ndarray  # length kN+1, inner-sphere fidelity
    beta: float              # downward-continuation regularization

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.alpha_tilde = np.asarray(self.alpha_tilde, dtype=float)
        if np.any(self.alpha <= 0) or np.any(self.alpha_tilde <= 0) or self.beta <= 0:
            raise ValueError("all weights must be strictly positive")

    @classmethod
    def uniform(cls, geometry: Geometry, alpha: float, alpha_tilde: float,
                beta: float) -> "PenaltyWeights":
        return cls(
            np.full(geometry.N + 1, float(alpha)),
            np.full(geometry.kN + 1, float(alpha_tilde)),
            float(beta),
        )

    @classmethod
    def localization_pattern(cls, geometry: Geometry, beta: float,
                             delta: float = 0.5) -> "PenaltyWeights":
        """Fidelity weights N^(2(1+delta)) times the Shannon energy bound.

        This scaling grows the fidelity terms fast enough with N that the
        optimizer is forced to spend its freedom on localization, which is
        what the monotone-localization property exercises.
        """
        level = geometry.N ** (2.0 * (1.0 + delta)) * shannon_bound(geometry, beta)
        return cls.uniform(geometry, level, level, beta)


@dataclass
class GramMatrix:
    """Gram matrix of kernel profiles over t in [-1, 1-rho]."""

    n_max: int
    rho: float
    case: str
    entries: np.ndarray

    def quadratic_form(self, coeffs: np.ndarray) -> float:
        c = np.asarray(coeffs, dtype=float)
        return float(c @ self.entries @ c)


# ---------------------------------------------------------------------------
# Gram construction


def _truncated_rule(n_points: int, rho: float):
    if not (0.0 < rho < 2.0):
        raise ValueError("rho must lie in (0, 2)")
    return gauss_rule(n_points, -1.0, 1.0 - rho)


def gram_scalar(n_max: int, rho: float) -> GramMatrix:
    """Entries (2n+1)(2m+1)/2 * integral of P_n P_m over [-1, 1-rho].

    The quadratic form of the wavelet symbols in this matrix equals
    8 pi^2 r^4 times the squared L2 norm of the wavelet profile outside
    the cap (both 1/r^2 kernel factors included).
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    t, w = _truncated_rule(n_max + 1, rho)
    p, _, _ = legendre_all(n_max, t)
    scale = np.arange(1, 2 * n_max + 2, 2, dtype=float)  # 2n+1
    g = (p * w) @ p.T
    g *= np.outer(scale, scale) / 2.0
    g = 0.5 * (g + g.T)
    return GramMatrix(n_max, rho, "scalar", g)


def gram_vector(n_max: int, rho: float) -> GramMatrix:
    """Tensor-kernel analogue of gram_scalar with derivative-weighted terms.

    For n, m >= 1 the integrand adds, on top of P_n P_m, the combination
    [(1+t^2) P_n'P_m' + (1-t^2)^2 P_n''P_m'' - t(1-t^2)(P_n''P_m' + P_n'P_m'')]
    divided by n(n+1)m(m+1); rows with n = 0 or m = 0 keep only P_n P_m
    (the radial channel is the only contributor there). The prefactor
    (2n+1)(2m+1)/2 matches the scalar convention, so the quadratic form
    again equals 8 pi^2 r^4 times the squared cap-exterior L2 norm of the
    tensor kernel's Frobenius profile; this is the convention the
    surface-integration oracle confirms.
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    t, w = _truncated_rule(n_max + 3, rho)
    p, dp, d2p = legendre_all(n_max, t)

    base = (p * w) @ p.T
    one_plus = w * (1.0 + t * t)
    sq = w * (1.0 - t * t) ** 2
    cross = w * t * (1.0 - t * t)
    c1 = (dp * one_plus) @ dp.T
    c2 = (d2p * sq) @ d2p.T
    c3 = (d2p * cross) @ dp.T

    n = np.arange(n_max + 1, dtype=float)
    inv = np.zeros(n_max + 1)
    inv[1:] = 1.0 / (n[1:] * (n[1:] + 1.0))
    extra = (c1 + c2 - c3 - c3.T) * np.outer(inv, inv)
    g = base + extra
    g[0, :] = base[0, :]
    g[:, 0] = base[:, 0]

    scale = np.arange(1, 2 * n_max + 2, 2, dtype=float)
    g *= np.outer(scale, scale) / 2.0
    g = 0.5 * (g + g.T)
    return GramMatrix(n_max, rho, "vector", g)


def _gram_for(geometry: Geometry) -> GramMatrix:
    builder = gram_scalar if geometry.case == "scalar" else gram_vector
    return builder(geometry.kN, geometry.rho)


# ---------------------------------------------------------------------------
# functional, gradient, optimizer


def _channel_factors(case: str, n_max: int) -> np.ndarray:
    """Per-degree channel multiplicity in full-interval kernel energy."""
    c = np.ones(n_max + 1)
    if case == "vector":
        c[1:] = 2.0
    return c


def full_interval_energy(symbols: SymbolSet, case: str = "scalar") -> float:
    """8 pi^2 r^4 ||kernel||^2 over the whole interval [-1, 1].

    Equals sum (2n+1) c_n value(n)^2 with c_n = 1 for scalar kernels and
    c_0 = 1, c_n = 2 (n >= 1) for tensor kernels (two channels per degree).
    """
    scale = np.arange(1, 2 * symbols.n_max + 2, 2, dtype=float)
    c = _channel_factors(case, symbols.n_max)
    return float(np.sum(scale * c * symbols.values**2))


def _check_dimensions(pair: KernelPair, w: PenaltyWeights, gram: GramMatrix) -> None:
    g = pair.geometry
    if w.alpha.shape != (g.N + 1,):
        raise ValueError(f"alpha must have length N+1 = {g.N + 1}")
    if w.alpha_tilde.shape != (g.kN + 1,):
        raise ValueError(f"alpha_tilde must have length kN+1 = {g.kN + 1}")
    if gram.n_max != g.kN:
        raise ValueError(f"gram must have n_max = kN = {g.kN}")
    if gram.case != g.case:
        raise ValueError(f"gram case {gram.case!r} does not match geometry {g.case!r}")


def _resolve_targets(geometry: Geometry, targets: SymbolSet | None) -> np.ndarray:
    if targets is None:
        return np.ones(geometry.kN + 1)
    if targets.n_max != geometry.kN:
        raise ValueError(f"targets must have n_max = kN = {geometry.kN}")
    return targets.values


def functional_value(pair: KernelPair, w: PenaltyWeights, gram: GramMatrix,
                     targets: SymbolSet | None = None) -> float:
    """Value of the minimized functional at the given pair.

    Fidelity terms measure the distance of the effective spectral responses
    (phi sigma on the outer sphere, phi_tilde on the inner sphere) from the
    targets (all ones unless a filtered target set is supplied); the beta
    term penalizes the raw scaling symbols; the Gram quadratic form is the
    wavelet energy outside the cap.
    """
    _check_dimensions(pair, w, gram)
    g = pair.geometry
    tgt = _resolve_targets(g, targets)
    x = pair.phi.values * g.sigmas(g.N)
    y = pair.phi_tilde.values
    value = float(
        w.alpha_tilde @ (tgt - y) ** 2
        + w.alpha @ (tgt[: g.N + 1] - x) ** 2
        + w.beta * pair.phi.values @ pair.phi.values
        + gram.quadratic_form(pair.psi_tilde.values)
    )
    return value


def stationarity_residual(pair: KernelPair, w: PenaltyWeights, gram: GramMatrix,
                          targets: SymbolSet | None = None) -> float:
    """Max-norm of the analytic gradient of the functional at the pair.

    The gradient is taken with respect to the solver unknowns
    x_n = phi(n) sigma(n) and y_n = phi_tilde(n).
    """
    _check_dimensions(pair, w, gram)
    g = pair.geometry
    tgt = _resolve_targets(g, targets)
    sig = g.sigmas(g.N)
    x = pair.phi.values * sig
    y = pair.phi_tilde.values
    psi = pair.psi_tilde.values
    gpsi = gram.entries @ psi
    grad_x = -2.0 * w.alpha * (tgt[: g.N + 1] - x) \
        + 2.0 * w.beta * x / sig**2 - 2.0 * gpsi[: g.N + 1]
    grad_y = -2.0 * w.alpha_tilde * (tgt - y) + 2.0 * gpsi
    return float(max(np.max(np.abs(grad_x)), np.max(np.abs(grad_y))))


def optimize(geometry: Geometry, w: PenaltyWeights,
             targets: SymbolSet | None = None,
             gram: GramMatrix | None = None) -> KernelPair:
    """Unique minimizer of the functional for the given weights.

    Unknowns are x_n = phi(n) sigma(n) (n = 0..N) and y_n = phi_tilde(n)
    (n = 0..kN); this keeps the system's dynamic range flat where phi itself
    grows like (R/r)^n. The system matrix

        [[D1 + P1, -P2], [-P2^T, D2 + P4]]

    with D1 = diag(alpha_n + beta/sigma_n^2), D2 = diag(alpha_tilde_n) and
    P* the Gram blocks, is symmetric positive definite, so a Cholesky solve
    applies. A factorization failure is raised as NumericalFailure, never
    silently regularized.
    """
    if gram is None:
        gram = _gram_for(geometry)
    n_x = geometry.N + 1
    n_y = geometry.kN + 1
    probe = KernelPair(geometry, SymbolSet.zeros(geometry.N),
                       SymbolSet.zeros(geometry.kN))
    _check_dimensions(probe, w, gram)
    tgt = _resolve_targets(geometry, targets)
    sig = geometry.sigmas(geometry.N)

    G = gram.entries
    M = np.empty((n_x + n_y, n_x + n_y))
    M[:n_x, :n_x] = G[:n_x, :n_x]
    M[:n_x, :n_x][np.diag_indices(n_x)] += w.alpha + w.beta / sig**2
    M[:n_x, n_x:] = -G[:n_x, :]
    M[n_x:, :n_x] = -G[:, :n_x]
    M[n_x:, n_x:] = G
    M[n_x:, n_x:][np.diag_indices(n_y)] += w.alpha_tilde

    rhs = np.concatenate([w.alpha * tgt[:n_x], w.alpha_tilde * tgt])
    try:
        factor = cho_factor(M, lower=True, check_finite=False)
        sol = cho_solve(factor, rhs, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(
            "kernel optimizer system is numerically singular; "
            "the weight configuration is pathological"
        ) from exc
    x = sol[:n_x]
    y = sol[n_x:]
    return KernelPair(geometry, SymbolSet(geometry.N, x / sig),
                      SymbolSet(geometry.kN, y))


# ---------------------------------------------------------------------------
# reference kernels


def shannon_pair(geometry: Geometry) -> KernelPair:
    """Sharp-cutoff pair: phi = 1/sigma up to N, phi_tilde = 1 up to kN.

    The coupled wavelet symbols come out as the indicator of N+1..kN.
    """
    phi = SymbolSet(geometry.N, 1.0 / geometry.sigmas(geometry.N))
    phi_tilde = SymbolSet.ones(geometry.kN)
    return KernelPair(geometry, phi, phi_tilde)


def tsvd_symbols(geometry: Geometry, M: int) -> SymbolSet:
    """Hard-truncation inversion symbols 1/sigma_n for n <= M."""
    if M < 0:
        raise ValueError("M must be >= 0")
    n = np.arange(M + 1, dtype=float)
    e = n if geometry.case == "scalar" else n + 1.0
    return SymbolSet(M, (geometry.R / geometry.r) ** e)


def shannon_bound(geometry: Geometry, beta: float) -> float:
    """Closed-form upper bound for the functional at the Shannon pair.

    Scalar: beta (1 - q^(2(N+1)))/(1 - q^2) + (kN+1)^2 with q = R/r.
    Vector: the regularization sum gains a q^2 factor (sigma exponent n+1)
    and the energy term counts both channels, 2 (kN+1)^2 - 1.
    """
    q2 = (geometry.R / geometry.r) ** 2
    geo_sum = (1.0 - q2 ** (geometry.N + 1)) / (1.0 - q2)
    if geometry.case == "scalar":
        return beta * geo_sum + (geometry.kN + 1) ** 2
    return beta * q2 * geo_sum + 2.0 * (geometry.kN + 1) ** 2 - 1.0


def raised_cosine_targets(geometry: Geometry) -> SymbolSet:
    """Default filtered target symbols cos^2(pi n / (2 (kN+1))).

    A smooth taper from 1 at degree 0 to near 0 at degree kN; any other
    target SymbolSet of length kN+1 is equally accepted by optimize.
    """
    n = np.arange(geometry.kN + 1, dtype=float)
    return SymbolSet(geometry.kN, np.cos(np.pi * n / (2.0 * (geometry.kN + 1))) ** 2)


# ---------------------------------------------------------------------------
# evaluation and diagnostics


def kernel_eval(symbols: SymbolSet, t) -> float | np.ndarray:
    """Zonal profile sum (2n+1)/(4 pi) value(n) P_n(t), radius factors excluded."""
    t_arr = np.asarray(t, dtype=float)
    scalar_input = t_arr.ndim == 0
    tt = np.atleast_1d(t_arr)
    acc = np.full(tt.shape, symbols.values[0] / (4.0 * math.pi))
    if symbols.n_max >= 1:
        p_prev = np.ones_like(tt)
        p = tt.copy()
        acc += 3.0 * symbols.values[1] / (4.0 * math.pi) * p
        for n in range(2, symbols.n_max + 1):
            p_prev, p = p, ((2.0 * n - 1.0) * tt * p - (n - 1.0) * p_prev) / n
            acc += (2.0 * n + 1.0) * symbols.values[n] / (4.0 * math.pi) * p
    return float(acc[0]) if scalar_input else acc


def localization_ratio(psi_tilde: SymbolSet, rho: float, geometry: Geometry) -> float:
    """Fraction of the wavelet kernel's energy lying outside the cap.

    Ratio of the squared L2 norm of the kernel profile over [-1, 1-rho] to
    the squared norm over the whole interval; near 0 for a well-localized
    kernel, near 1 as rho shrinks to nothing.
    """
    if not np.any(psi_tilde.values):
        raise ValueError("localization ratio of an all-zero symbol set is undefined")
    if rho >= 2.0:
        return 0.0
    builder = gram_scalar if geometry.case == "scalar" else gram_vector
    gram = builder(psi_tilde.n_max, rho)
    num = gram.quadratic_form(psi_tilde.values)
    den = full_interval_energy(psi_tilde, geometry.case)
    return float(min(max(num / den, 0.0), 1.0))


def save_pair_csv(pair: KernelPair, path) -> None:
    """Raw symbols as CSV rows `n,phi,phi_tilde,psi_tilde` (phi zero past N)."""
    g = pair.geometry
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write("n,phi,phi_tilde,psi_tilde\n")
        for n in range(g.kN + 1):
            phi_n = pair.phi.values[n] if n <= g.N else 0.0
            fh.write(
                f"{n},{phi_n:.17g},{pair.phi_tilde.values[n]:.17g},"
                f"{pair.psi_tilde.values[n]:.17g}\n"
            )
