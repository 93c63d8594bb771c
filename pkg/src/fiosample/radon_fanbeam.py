"""Fan-beam parameterization of the Radon transform.

A line is given by its source ``R omega(alpha)`` on the circle of radius R and
the angle ``beta`` its direction ``omega(alpha + beta)`` makes with the inward
radius; it is ``x . omega(alpha + beta - pi/2) = R sin beta``, i.e.
``phi = alpha + beta - pi/2`` and ``p = R sin beta`` in parallel coordinates.

The dual variables follow from the cotangent lift of that change of
coordinates: ``alpha_hat = phi_hat = -x.xi_perp`` and
``beta_hat = alpha_hat + p_hat R cos beta``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .grid_core import FrequencyRegion, Grid2D, centered_grid, make_grid, read_grid_bin, write_grid_bin
from .lattice_sampling import WindowSpec, lattice_from_translations, lattice_point_count, rectangular_lattice, window_interpolate
from .radon_parallel import (
    SIGNS,
    TWO_PI,
    ParallelCotangent,
    ParallelGeometry,
    ParallelSinogram,
    WeightFn,
    fbp_invert,
    gaussian_psi,
    line_integrals,
    omega,
    parallel_counts,
    perp,
)

FAN_MAGIC = b"MTF1"


def fan_to_parallel(alpha, beta, R: float):
    """(phi, p) = (alpha + beta - pi/2 mod 2pi, R sin beta)."""
    alpha = np.asarray(alpha, float)
    beta = np.asarray(beta, float)
    if np.any(np.abs(beta) > np.pi / 2):
        raise ValueError("beta must lie in [-pi/2, pi/2]")
    return np.mod(alpha + beta - np.pi / 2, TWO_PI), R * np.sin(beta)


def parallel_to_fan(phi, p, R: float):
    """(alpha, beta) = (phi - beta + pi/2 mod 2pi, asin(p/R))."""
    p = np.asarray(p, float)
    if np.any(np.abs(p) > R):
        raise ValueError("|p| must not exceed R")
    beta = np.arcsin(p / R)
    return np.mod(np.asarray(phi, float) - beta + np.pi / 2, TWO_PI), beta


# --------------------------------------------------------------------------
# Canonical relation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FanCotangent:
    alpha: np.ndarray
    beta: np.ndarray
    alpha_hat: np.ndarray
    beta_hat: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.stack(np.broadcast_arrays(self.alpha, self.beta, self.alpha_hat, self.beta_hat), axis=-1)

    @classmethod
    def from_array(cls, q) -> "FanCotangent":
        q = np.asarray(q, float)
        return cls(q[..., 0], q[..., 1], q[..., 2], q[..., 3])


def fan_symmetry(q: FanCotangent) -> FanCotangent:
    """(alpha, beta, a_hat, b_hat) -> (alpha + 2 beta - pi, -beta, a_hat, 2 a_hat - b_hat)."""
    return FanCotangent(np.mod(q.alpha + 2 * q.beta - np.pi, TWO_PI), -q.beta, q.alpha_hat, 2 * q.alpha_hat - q.beta_hat)


def canonical_forward_fan(x, xi, R: float, sign: int = +1) -> FanCotangent:
    if sign not in SIGNS:
        raise ValueError("sign must be +1 or -1")
    x = np.asarray(x, float)
    xi = np.asarray(xi, float)
    n = np.linalg.norm(xi, axis=-1)
    if np.any(n == 0):
        raise ValueError("xi must be nonzero")
    u = np.sum(x * xi, axis=-1) / n
    if np.any(np.abs(u) > R):
        raise ValueError("line misses the source circle: |x.xi| > R|xi|")
    beta = sign * np.arcsin(u / R)
    alpha = np.mod(np.arctan2(xi[..., 1], xi[..., 0]) - beta + sign * np.pi / 2, TWO_PI)
    a_hat = -np.sum(x * perp(xi), axis=-1)
    b_hat = sign * n * np.sqrt(R * R - u * u) + a_hat
    return FanCotangent(alpha, beta, a_hat, b_hat)


def canonical_inverse_fan(q: FanCotangent, R: float) -> tuple[np.ndarray, np.ndarray]:
    """x = R sin(b) w(a+b-pi/2) - a_hat/(b_hat-a_hat) R cos(b) w(a+b), xi = (b_hat-a_hat)/(R cos b) w(a+b-pi/2)."""
    d = np.asarray(q.beta_hat, float) - np.asarray(q.alpha_hat, float)
    cb = np.cos(q.beta)
    if np.any(d == 0):
        raise ValueError("beta_hat = alpha_hat lies over the zero section")
    if np.any(np.abs(cb) < 1e-12):
        raise ValueError("cos(beta) = 0: tangent line")
    e = omega(q.alpha + q.beta - np.pi / 2)
    e_perp = omega(q.alpha + q.beta)
    x = (R * np.sin(q.beta))[..., None] * e - (np.asarray(q.alpha_hat) / d * R * cb)[..., None] * e_perp
    return x, (d / (R * cb))[..., None] * e


def lift_parallel_to_fan(q: ParallelCotangent, R: float) -> FanCotangent:
    """Cotangent lift of the coordinate change (alpha, beta) -> (phi, p)."""
    alpha, beta = parallel_to_fan(q.phi, q.p, R)
    return FanCotangent(alpha, beta, np.asarray(q.phi_hat, float), q.phi_hat + q.p_hat * R * np.cos(beta))


# --------------------------------------------------------------------------
# Sampling
# --------------------------------------------------------------------------


def nyquist_rates_fan(R: float, B: float) -> tuple[float, float]:
    """(s_alpha, s_beta) = (pi/(R B), pi/(2 R B))."""
    if R <= 0 or B <= 0:
        raise ValueError("R and B must be positive")
    return (np.pi / (R * B), np.pi / (2 * R * B))


def fan_bounding_box(R: float, B: float) -> FrequencyRegion:
    return FrequencyRegion("box", {"B": (R * B, 2 * R * B)})


def range_triangle(beta: float, R: float, B: float) -> FrequencyRegion:
    """|alpha_hat| <= |beta_hat - alpha_hat| <= R B cos(beta) in (alpha_hat, beta_hat)."""
    if abs(beta) > np.pi / 2:
        raise ValueError("beta must lie in [-pi/2, pi/2]")
    return FrequencyRegion("double_triangle_fan", {"R": float(R), "B": float(B), "beta": float(beta)})


def efficient_fan_lattice(R: float, B: float, h: float, s: float = 1.0):
    """Translations (RB, 0), (0, 2RB): W = pi/(R B) diag(2, 1)."""
    return lattice_from_translations(np.diag([R * B, 2 * R * B]), s, h)


def fan_counts(R: float, B: float, h: float, s: float = 1.0) -> dict:
    """Enumerated fan-beam counts over [0, 2pi) x [-pi/2, pi/2) next to the parallel ones."""
    par = parallel_counts(R, B, h, s)
    dom = ((0.0, TWO_PI), (-np.pi / 2, np.pi / 2))
    rect = lattice_point_count(rectangular_lattice(nyquist_rates_fan(R, B), s, h), dom)
    eff = lattice_point_count(efficient_fan_lattice(R, B, h, s), dom)
    return {
        "rectangular": rect,
        "efficient": eff,
        "rectangular_over_parallel": rect / par["rectangular"],
        "efficient_over_N_f": eff / par["N_f"],
    }


# --------------------------------------------------------------------------
# Resolution and blur
# --------------------------------------------------------------------------


def _branch_coefficients(x, theta, R: float):
    """Per unit direction theta: |x.theta_perp| and |beta_hat_+-| / |xi| for both signs."""
    x = np.asarray(x, float)
    th = omega(theta)
    u = th @ x
    v = perp(th) @ x
    root = np.sqrt(np.maximum(R * R - u * u, 0.0))
    return np.abs(v), np.abs(root - v), np.abs(-root - v)


def resolution_diagram(x, s_alpha: float, s_beta: float, R: float, mode: str = "intersection", theta=None) -> np.ndarray:
    """Largest resolvable |xi| per direction theta (default 360 directions).

    ``intersection`` requires the Nyquist limits on both branches (full data);
    ``union`` keeps the better branch.
    """
    if mode not in ("intersection", "union"):
        raise ValueError("mode must be 'intersection' or 'union'")
    if np.linalg.norm(x) >= R:
        raise ValueError("x must lie inside the source circle")
    theta = np.linspace(0, TWO_PI, 360, endpoint=False) if theta is None else np.asarray(theta, float)
    ca, cp, cm = _branch_coefficients(x, theta, R)

    def bound(c, s):
        with np.errstate(divide="ignore"):
            return np.where(c > 0, np.pi / (s * np.where(c > 0, c, 1.0)), np.inf)

    lim_a = bound(ca, s_alpha)
    lim_p = np.minimum(lim_a, bound(cp, s_beta))
    lim_m = np.minimum(lim_a, bound(cm, s_beta))
    return np.minimum(lim_p, lim_m) if mode == "intersection" else np.maximum(lim_p, lim_m)


def fan_data_symbol(a: float, b: float, psi: Callable = gaussian_psi) -> Callable:
    def q0(q: FanCotangent):
        return psi(a * np.asarray(q.alpha_hat) ** 2 + b * np.asarray(q.beta_hat) ** 2)

    return q0


def blur_symbol_fan(a: float, b: float, psi: Callable = gaussian_psi, *, R: float, branches: Sequence[int] = SIGNS) -> Callable:
    """p0(x, xi): mean over ``branches`` of psi(a alpha_hat^2 + b beta_hat^2) on C+-."""
    if a < 0 or b < 0:
        raise ValueError("averaging strengths must be nonnegative")

    def p0(x, xi):
        x = np.asarray(x, float)
        xi = np.asarray(xi, float)
        v = np.sum(x * perp(xi), axis=-1)
        root = np.sqrt(np.maximum(R * R * np.sum(xi * xi, axis=-1) - np.sum(x * xi, axis=-1) ** 2, 0.0))
        terms = [psi(a * v * v + b * (sg * root - v) ** 2) for sg in branches]
        return sum(terms) / len(terms)

    return p0


def predicted_kernel(symbol: Callable, x, grid: Grid2D) -> Grid2D:
    """Inverse h-transform of xi -> symbol(x, xi) at frozen x, centred on the grid."""
    n1, n2 = grid.n
    d1, d2 = grid.spacing
    h = grid.h
    k1 = np.fft.fftfreq(n1, d=d1) * TWO_PI * h
    k2 = np.fft.fftfreq(n2, d=d2) * TWO_PI * h
    K1, K2 = np.meshgrid(k1, k2, indexing="ij")
    xi = np.stack([K1, K2], axis=-1)
    sym = symbol(np.broadcast_to(np.asarray(x, float), xi.shape), xi)
    ker = np.fft.fftshift(np.real(np.fft.ifft2(sym))) / (d1 * d2)
    return grid.with_values(ker)


# --------------------------------------------------------------------------
# Sinograms, forward map and inversion
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FanGeometry:
    """``n_alpha`` sources on [0, 2pi), ``n_beta`` fan angles on [-pi/2, pi/2)."""

    n_alpha: int
    n_beta: int
    R: float

    def __post_init__(self):
        if self.n_alpha < 2 or self.n_beta < 2:
            raise ValueError("need at least 2 samples per axis")
        if not self.R > 0:
            raise ValueError("R must be positive")

    def grid(self, h: float) -> Grid2D:
        return make_grid((0.0, -np.pi / 2), (TWO_PI, np.pi), (self.n_alpha, self.n_beta), h)


@dataclass(frozen=True)
class FanSinogram:
    grid: Grid2D
    R: float
    unit_weight: bool = True

    @property
    def values(self) -> np.ndarray:
        return self.grid.values

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def alpha(self) -> np.ndarray:
        return self.grid.axes()[0]

    @property
    def beta(self) -> np.ndarray:
        return self.grid.axes()[1]

    def with_values(self, values) -> "FanSinogram":
        return FanSinogram(self.grid.with_values(values), self.R, self.unit_weight)


def fan_forward(f: Grid2D, geometry: FanGeometry, weight: WeightFn | None = None) -> FanSinogram:
    """Line integrals over x.omega(alpha + beta - pi/2) = R sin(beta); zero at beta = -pi/2."""
    g = geometry.grid(f.h)
    alpha, beta = g.axes()
    phi, p = fan_to_parallel(alpha[:, None], beta[None, :], geometry.R)
    vals = line_integrals(f, phi, p, geometry.R, weight)
    vals[:, np.isclose(np.abs(beta), np.pi / 2)] = 0.0
    return FanSinogram(g.with_values(vals), geometry.R, unit_weight=weight is None)


def symmetry_defect(sino: FanSinogram) -> float:
    """max |Rf(alpha, beta) - Rf(alpha + 2 beta - pi, -beta)| / max |Rf| on nodes with a mirror node."""
    n_a, n_b = sino.grid.n
    if n_a % n_b:
        raise ValueError("symmetry check needs n_alpha to be a multiple of n_beta")
    m = n_a // n_b
    v = sino.values
    peak = np.abs(v).max()
    if peak == 0:
        return 0.0
    # beta_j = -pi/2 + j pi/n_b; 2 beta_j - pi = 2 j pi/n_b - 2 pi is j*m alpha steps.
    worst = 0.0
    for j in range(1, n_b):
        mirror = np.roll(v[:, n_b - j], -m * j)
        worst = max(worst, float(np.abs(v[:, j] - mirror).max()))
    return worst / peak


def rebin_to_parallel(sino: FanSinogram, geometry: ParallelGeometry, window: WindowSpec | None = None, weights=None) -> ParallelSinogram:
    """Resample fan data onto a parallel grid through (phi, p) -> (alpha, beta).

    Lanczos-3 with normalized taps by default; periodic in alpha.  Offsets with |p| >= R are zero.
    ``weights`` optionally multiplies the fan samples before resampling.
    """
    window = WindowSpec("lanczos", a=3) if window is None else window
    g = geometry.grid(sino.h)
    phi, p = g.mesh()
    inside = np.abs(p) < sino.R
    alpha, beta = parallel_to_fan(phi[inside], p[inside], sino.R)
    da, db = sino.grid.spacing
    data = sino.values if weights is None else sino.values * weights
    vals = np.zeros(g.n)
    vals[inside] = window_interpolate(data, alpha / da, (beta + np.pi / 2) / db, window, wrap=(True, False), normalize=True)
    return ParallelSinogram(g.with_values(vals), sino.R, sino.unit_weight)


def source_taper(alpha, alpha_range: tuple[float, float], taper: float) -> np.ndarray:
    """1 inside the source arc, raised-cosine roll-off of width ``taper`` inside each end, 0 outside."""
    lo, hi = alpha_range
    span = hi - lo
    u = np.mod(np.asarray(alpha, float) - lo, TWO_PI)
    out = np.zeros(u.shape)
    inside = u <= span
    d = np.minimum(u, span - u)
    ramp = 0.5 - 0.5 * np.cos(np.pi * np.clip(d / taper, 0, 1))
    out[inside] = ramp[inside]
    return out


def half_data_weights(sino: FanSinogram, alpha_range: tuple[float, float], taper: float = np.deg2rad(5.0)) -> np.ndarray:
    """Weights on the fan grid for a restricted source arc.

    Each line has two samples (alpha, beta) and (alpha + 2 beta - pi, -beta);
    with tapers w1, w2 the first gets 2 w1 / max(w1 + w2, 1) so that a line seen
    from one end keeps full weight and one seen from both ends is not doubled.
    """
    A, Bt = sino.grid.mesh()
    w1 = source_taper(A, alpha_range, taper)
    w2 = source_taper(A + 2 * Bt - np.pi, alpha_range, taper)
    return 2 * w1 / np.maximum(w1 + w2, 1.0)


def fan_fbp(
    sino: FanSinogram,
    target: Grid2D | None = None,
    geometry: ParallelGeometry | None = None,
    alpha_range: tuple[float, float] | None = None,
    taper: float = np.deg2rad(5.0),
    window: WindowSpec | None = None,
) -> Grid2D:
    """Rebin to parallel coordinates and apply the parallel FBP."""
    if not sino.unit_weight:
        raise ValueError("exact inversion is only available for unit weight")
    if geometry is None:
        n_b = sino.grid.n[1]
        geometry = ParallelGeometry(sino.grid.n[0], 2 * n_b, sino.R)
    weights = None if alpha_range is None else half_data_weights(sino, alpha_range, taper)
    par = rebin_to_parallel(sino, geometry, weights=weights)
    return fbp_invert(par, window=window, target=target)


def fan_forward_and_fbp(
    f: Grid2D, geometry: FanGeometry, alpha_range: tuple[float, float] | None = None, target: Grid2D | None = None
) -> tuple[FanSinogram, Grid2D]:
    """Fan sinogram of ``f`` and its reconstruction; ``alpha_range`` restricts the source arc."""
    sino = fan_forward(f, geometry)
    if alpha_range is not None and np.isclose(alpha_range[1] - alpha_range[0], TWO_PI):
        alpha_range = None
    return sino, fan_fbp(sino, target=target if target is not None else f.with_values(np.zeros(f.n)), alpha_range=alpha_range)


def blur_fan_sinogram(sino: FanSinogram, a: float = 0.0, b: float = 0.0, psi: Callable = gaussian_psi) -> FanSinogram:
    """Fourier multiplier psi(a alpha_hat^2 + b beta_hat^2); alpha periodic, beta zero padded."""
    v = sino.values
    n_a, n_b = v.shape
    da, db = sino.grid.spacing
    m = 2 * n_b
    h = sino.h
    a_hat = h * TWO_PI * np.fft.fftfreq(n_a, d=da)
    b_hat = h * TWO_PI * np.fft.fftfreq(m, d=db)
    mult = psi(a * a_hat[:, None] ** 2 + b * b_hat[None, :] ** 2)
    out = np.fft.ifft2(np.fft.fft2(v, s=(n_a, m)) * mult).real[:, :n_b]
    return sino.with_values(out)


def write_fan_sinogram(path: str | Path, sino: FanSinogram) -> None:
    g = sino.grid
    write_grid_bin(path, g, magic=FAN_MAGIC, meta={"alpha_count": g.n[0], "beta_count": g.n[1], "R": sino.R, "unit_weight": sino.unit_weight})


def read_fan_sinogram(path: str | Path) -> FanSinogram:
    g = read_grid_bin(path, magic=FAN_MAGIC)
    meta_path = Path(str(path) + ".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    if "R" not in meta:
        raise ValueError("fan sinogram metadata must record R")
    return FanSinogram(g, float(meta["R"]), bool(meta.get("unit_weight", True)))
