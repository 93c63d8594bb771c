"""Weighted Radon transform in parallel coordinates.

Lines are ``x . omega(phi) = p`` with ``omega(phi) = (cos phi, sin phi)``.  The
canonical relation is the union of two graphs

    C+-: (x, xi) -> (arg(+-xi), +-x.xi/|xi|, -x.xi_perp, +-|xi|)

with ``xi_perp`` the rotation of ``xi`` by +pi/2.  Every phase-space query in
this module reports images under both branches.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .grid_core import FrequencyRegion, Grid2D, centered_grid, make_grid, read_grid_bin, write_grid_bin
from .lattice_sampling import (
    Lattice2D,
    SampleSet,
    WindowSpec,
    lattice_from_translations,
    lattice_point_count,
    rectangular_lattice,
    reconstruct,
    weyl_count,
)

TWO_PI = 2 * np.pi
SINOGRAM_MAGIC = b"MTS1"
SIGNS = (+1, -1)

WeightFn = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


class MissedSupportWarning(UserWarning):
    """Some lines through the support disk are not sampled."""


def omega(phi) -> np.ndarray:
    phi = np.asarray(phi, float)
    return np.stack([np.cos(phi), np.sin(phi)], axis=-1)


def perp(v) -> np.ndarray:
    v = np.asarray(v, float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


# --------------------------------------------------------------------------
# Sinograms
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ParallelGeometry:
    """Sinogram axes: ``n_phi`` angles on [0, 2pi), ``n_p`` offsets on [-p_max, p_max)."""

    n_phi: int
    n_p: int
    p_max: float

    def __post_init__(self):
        if self.n_phi < 2 or self.n_p < 2:
            raise ValueError("need at least 2 samples per sinogram axis")
        if not self.p_max > 0:
            raise ValueError("p_max must be positive")

    def grid(self, h: float) -> Grid2D:
        return make_grid((0.0, -self.p_max), (TWO_PI, 2 * self.p_max), (self.n_phi, self.n_p), h)


@dataclass(frozen=True)
class ParallelSinogram:
    grid: Grid2D
    R: float
    unit_weight: bool = True

    def __post_init__(self):
        g = self.grid
        if not np.isclose(g.origin[0], 0.0) or not np.isclose(g.extent[0], TWO_PI):
            raise ValueError("angular axis must cover [0, 2pi)")
        if not np.isclose(g.origin[1], -0.5 * g.extent[1]):
            raise ValueError("p axis must be symmetric about 0")
        if not self.R > 0:
            raise ValueError("support radius must be positive")

    @property
    def values(self) -> np.ndarray:
        return self.grid.values

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def phi(self) -> np.ndarray:
        return self.grid.axes()[0]

    @property
    def p(self) -> np.ndarray:
        return self.grid.axes()[1]

    @property
    def p_max(self) -> float:
        return 0.5 * self.grid.extent[1]

    @property
    def geometry(self) -> ParallelGeometry:
        return ParallelGeometry(self.grid.n[0], self.grid.n[1], self.p_max)

    def with_values(self, values: np.ndarray) -> "ParallelSinogram":
        return ParallelSinogram(self.grid.with_values(values), self.R, self.unit_weight)


def _default_radius(f: Grid2D) -> float:
    """Radius of the largest origin-centred disk inside the grid box."""
    (o1, o2), (e1, e2) = f.origin, f.extent
    r = min(-o1, o1 + e1, -o2, o2 + e2)
    if r <= 0:
        raise ValueError("grid does not contain the origin; pass R explicitly")
    return float(r)


def line_integrals(
    f: Grid2D,
    phi,
    p,
    R: float,
    weight: WeightFn | None = None,
    max_points: int = 4_000_000,
) -> np.ndarray:
    """Integrals of ``kappa f`` over the lines ``x.omega(phi) = p`` (broadcast arrays).

    Each line is integrated over ``|t| <= R`` by the trapezoid rule with step at
    most half the grid spacing; ``f`` is evaluated by bilinear interpolation and
    taken as zero off the grid.
    """
    phi, p = np.broadcast_arrays(np.asarray(phi, float), np.asarray(p, float))
    shape = phi.shape
    phi, p = phi.ravel(), p.ravel()
    dt = min(f.spacing) / 2
    n_t = int(np.ceil(2 * R / dt)) + 1
    t = np.linspace(-R, R, n_t)
    wt = np.full(n_t, t[1] - t[0])
    wt[[0, -1]] *= 0.5
    (o1, o2), (d1, d2) = f.origin, f.spacing
    vals = np.asarray(f.values)
    out = np.empty(phi.size)
    chunk = max(1, max_points // n_t)
    for lo in range(0, phi.size, chunk):
        c = np.cos(phi[lo : lo + chunk])[:, None]
        s = np.sin(phi[lo : lo + chunk])[:, None]
        pp = p[lo : lo + chunk, None]
        x1 = pp * c - t * s
        x2 = pp * s + t * c
        fv = ndimage.map_coordinates(vals, [((x1 - o1) / d1).ravel(), ((x2 - o2) / d2).ravel()], order=1, mode="constant", cval=0.0)
        fv = fv.reshape(x1.shape)
        if weight is not None:
            fv = fv * weight(x1, x2, np.broadcast_to(c, x1.shape), np.broadcast_to(s, x1.shape))
        out[lo : lo + chunk] = fv @ wt
    return out.reshape(shape)


def forward(
    f: Grid2D,
    geometry: ParallelGeometry,
    weight: WeightFn | None = None,
    R: float | None = None,
) -> ParallelSinogram:
    """Sinogram of ``kappa f`` on ``geometry``; see ``line_integrals`` for the quadrature."""
    R = _default_radius(f) if R is None else float(R)
    if geometry.p_max < R:
        warnings.warn(f"p_max={geometry.p_max} < R={R}: lines through the support are missed", MissedSupportWarning, stacklevel=2)
    out_grid = geometry.grid(f.h)
    phi, p = out_grid.axes()
    vals = line_integrals(f, phi[:, None], p[None, :], R, weight)
    return ParallelSinogram(out_grid.with_values(vals), R, unit_weight=weight is None)


def evenness_defect(sino: ParallelSinogram) -> float:
    """max |Rf(phi, p) - Rf(phi + pi, -p)| / max |Rf| over nodes having a mirror node."""
    n_phi, n_p = sino.grid.n
    if n_phi % 2:
        raise ValueError("evenness check needs an even number of angles")
    v = sino.values
    peak = np.abs(v).max()
    if peak == 0:
        return 0.0
    # p_j = -p_max + j dp mirrors to index n_p - j; j = 0 has no partner.
    a = v[:, 1:]
    b = np.roll(v, -n_phi // 2, axis=0)[:, 1:][:, ::-1]
    return float(np.abs(a - b).max() / peak)


def write_sinogram(path: str | Path, sino: ParallelSinogram) -> None:
    g = sino.grid
    meta = {
        "phi_min": 0.0,
        "phi_count": g.n[0],
        "p_min": -sino.p_max,
        "p_max": sino.p_max,
        "p_count": g.n[1],
        "R": sino.R,
        "unit_weight": sino.unit_weight,
    }
    write_grid_bin(path, g, magic=SINOGRAM_MAGIC, meta=meta)


def read_sinogram(path: str | Path) -> ParallelSinogram:
    import json

    g = read_grid_bin(path, magic=SINOGRAM_MAGIC)
    meta_path = Path(str(path) + ".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return ParallelSinogram(g, float(meta.get("R", 0.5 * g.extent[1])), bool(meta.get("unit_weight", True)))


# --------------------------------------------------------------------------
# Canonical relation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ParallelCotangent:
    """Point (phi, p; phi_hat, p_hat) of the sinogram cotangent space; fields may be arrays."""

    phi: np.ndarray
    p: np.ndarray
    phi_hat: np.ndarray
    p_hat: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.stack(np.broadcast_arrays(self.phi, self.p, self.phi_hat, self.p_hat), axis=-1)

    @classmethod
    def from_array(cls, q) -> "ParallelCotangent":
        q = np.asarray(q, float)
        return cls(q[..., 0], q[..., 1], q[..., 2], q[..., 3])

    def inside_support(self, R: float) -> np.ndarray:
        return (np.asarray(self.p_hat) != 0) & (self.p**2 + (self.phi_hat / np.where(self.p_hat == 0, 1, self.p_hat)) ** 2 < R * R)


def _check_sign(sign: int) -> int:
    if sign not in SIGNS:
        raise ValueError("sign must be +1 or -1")
    return sign


def canonical_forward(x, xi, sign: int = +1) -> ParallelCotangent:
    sign = _check_sign(sign)
    x = np.asarray(x, float)
    xi = np.asarray(xi, float)
    n = np.linalg.norm(xi, axis=-1)
    if np.any(n == 0):
        raise ValueError("xi must be nonzero")
    phi = np.mod(np.arctan2(sign * xi[..., 1], sign * xi[..., 0]), TWO_PI)
    p = sign * np.sum(x * xi, axis=-1) / n
    phi_hat = -np.sum(x * perp(xi), axis=-1)
    return ParallelCotangent(phi, p, phi_hat, sign * n)


def canonical_inverse(q: ParallelCotangent) -> tuple[np.ndarray, np.ndarray]:
    """C+-^{-1}: x = p omega - (phi_hat/p_hat) omega_perp, xi = p_hat omega."""
    p_hat = np.asarray(q.p_hat, float)
    if np.any(p_hat == 0):
        raise ValueError("p_hat = 0 lies over the zero section")
    w = omega(q.phi)
    wp = perp(w)
    x = np.asarray(q.p)[..., None] * w - (np.asarray(q.phi_hat) / p_hat)[..., None] * wp
    return x, p_hat[..., None] * w


def tau_lift(q: ParallelCotangent) -> ParallelCotangent:
    """(phi, p, phi_hat, p_hat) -> (phi + pi, -p, phi_hat, -p_hat); exchanges C+ and C-."""
    return ParallelCotangent(np.mod(q.phi + np.pi, TWO_PI), -q.p, q.phi_hat, -q.p_hat)


def phase_jacobian_det(fn: Callable[[np.ndarray], np.ndarray], z, eps: float = 1e-6, angles: Sequence[int] = ()):
    """Determinant of d fn / dz by central differences.

    ``z`` may carry leading batch axes, in which case ``fn`` must map
    (..., n) to (..., n) and an array of determinants is returned.  Output
    components listed in ``angles`` are differenced modulo 2pi.
    """
    z = np.asarray(z, float)
    n = z.shape[-1]
    J = np.empty(z.shape + (n,))
    for j in range(n):
        e = np.zeros(n)
        e[j] = eps
        d = np.asarray(fn(z + e), float) - np.asarray(fn(z - e), float)
        for a in angles:
            d[..., a] = (d[..., a] + np.pi) % TWO_PI - np.pi
        J[..., j] = d / (2 * eps)
    det = np.linalg.det(J)
    return float(det) if z.ndim == 1 else det


# --------------------------------------------------------------------------
# Frequency sets, Nyquist rates and lattices
# --------------------------------------------------------------------------


def frequency_cone(R: float, B: float) -> FrequencyRegion:
    """|phi_hat| <= R |p_hat|, |p_hat| <= B in (phi_hat, p_hat) coordinates."""
    if R <= 0 or B <= 0:
        raise ValueError("R and B must be positive")
    return FrequencyRegion("cone_parallel", {"R": float(R), "B": float(B)})


def local_triangle(p: float, R: float, B: float) -> FrequencyRegion:
    """Frequency set of the sinogram localized at offset p: slope sqrt(R^2 - p^2)."""
    if abs(p) > R:
        raise ValueError("|p| must not exceed R")
    return FrequencyRegion("cone_parallel", {"R": float(np.sqrt(R * R - p * p)), "B": float(B)})


def nyquist_rates(R: float, B: float) -> tuple[float, float]:
    """Largest relative steps (s_phi, s_p) = (pi/(R B), pi/B)."""
    if R <= 0 or B <= 0:
        raise ValueError("R and B must be positive")
    return (np.pi / (R * B), np.pi / B)


def rectangular_sinogram_lattice(R: float, B: float, h: float, s: float = 1.0) -> Lattice2D:
    return rectangular_lattice(nyquist_rates(R, B), s, h)


def cone_lattice(rho: float, B: float, h: float, s: float = 1.0, offset=(0.0, 0.0)) -> Lattice2D:
    """Lattice whose dual tiles the cone of slope rho by (rho B, B) and (0, 2B)."""
    V = np.array([[rho * B, 0.0], [B, 2 * B]])
    return lattice_from_translations(V, s, h, offset)


def efficient_lattice(R: float, B: float, h: float, s: float = 1.0) -> Lattice2D:
    """W = pi/(R B) [[2, -1], [0, R]]."""
    return cone_lattice(R, B, h, s)


@dataclass(frozen=True)
class Strip:
    interval: tuple[float, float]
    slope: float
    lattice: Lattice2D

    def count(self) -> int:
        return lattice_point_count(self.lattice, ((0.0, TWO_PI), self.interval))


def strip_sampling_plan(R: float, B: float, k: int, *, h: float, s: float = 1.0) -> list[Strip]:
    """Split [-R, R] into 2k strips, each sampled for its own cone.

    Strip j covers +-[(j-1)R/k, jR/k) and uses the largest slope on it,
    sqrt(R^2 - ((j-1)R/k)^2), attained at the inner edge.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    plan = []
    for j in range(1, k + 1):
        inner, outer = (j - 1) * R / k, j * R / k
        rho = float(np.sqrt(R * R - inner * inner))
        plan.append(Strip((inner, outer), rho, cone_lattice(rho, B, h, s, offset=(0.0, inner))))
        # anchor at the closed edge so both halves hold the same number of rows
        plan.append(Strip((-outer, -inner), rho, cone_lattice(rho, B, h, s, offset=(0.0, -outer))))
    return plan


def plan_point_count(plan: Sequence[Strip]) -> int:
    return int(sum(st.count() for st in plan))


def parallel_counts(R: float, B: float, h: float, s: float = 1.0) -> dict:
    """Enumerated sample counts over [0, 2pi) x [-R, R) against the minimum 2 N_f."""
    n_f = weyl_count(np.pi * R * R * np.pi * B * B, h)
    dom = ((0.0, TWO_PI), (-R, R))
    rect = lattice_point_count(rectangular_sinogram_lattice(R, B, h, s), dom)
    eff = lattice_point_count(efficient_lattice(R, B, h, s), dom)
    return {
        "N_f": n_f,
        "min_data": 2 * n_f,
        "rectangular": rect,
        "efficient": eff,
        "rectangular_ratio": rect / (2 * n_f),
        "efficient_ratio": eff / (2 * n_f),
    }


# --------------------------------------------------------------------------
# Resolution and aliasing
# --------------------------------------------------------------------------


def resolution_limit(x, s_phi: float, s_p: float, theta=None) -> np.ndarray:
    """Largest resolvable |xi| in each direction theta at the point x.

    ``min(pi/s_p, pi/(s_phi |x.theta_perp|))``; ``theta`` defaults to 360
    equispaced directions.
    """
    x = np.asarray(x, float)
    theta = np.linspace(0, TWO_PI, 360, endpoint=False) if theta is None else np.asarray(theta, float)
    lever = np.abs(np.sum(x * perp(omega(theta)), axis=-1))
    with np.errstate(divide="ignore"):
        angular = np.where(lever > 0, np.pi / (s_phi * np.where(lever > 0, lever, 1.0)), np.inf)
    return np.minimum(np.pi / s_p, angular)


@dataclass(frozen=True)
class AliasImage:
    x: np.ndarray
    xi: np.ndarray
    admissible: bool


def alias_artifact_map(x, xi, s_phi: float, s_p: float, k: int, which: str, sign: int) -> AliasImage | None:
    """C^{-1} o S_k o C on one branch, with its admissibility flag.

    Returns None only when the shifted p_hat vanishes.
    """
    if which not in ("angular", "radial"):
        raise ValueError("which must be 'angular' or 'radial'")
    q = canonical_forward(x, xi, sign)
    if which == "angular":
        step = TWO_PI / s_phi
        shifted = ParallelCotangent(q.phi, q.p, q.phi_hat + k * step, q.p_hat)
        ok = abs(shifted.phi_hat) <= np.pi / s_phi
    else:
        step = TWO_PI / s_p
        shifted = ParallelCotangent(q.phi, q.p, q.phi_hat, q.p_hat + k * step)
        if shifted.p_hat == 0:
            return None
        ok = abs(shifted.p_hat) <= np.pi / s_p
    xs, xis = canonical_inverse(shifted)
    return AliasImage(np.asarray(xs), np.asarray(xis), bool(ok))


def alias_artifact_predict(x, xi, s_phi: float, s_p: float, k: int, which: str) -> dict[int, AliasImage | None]:
    """Admissible alias images keyed by branch sign; None where inadmissible."""
    out = {}
    for sign in SIGNS:
        img = alias_artifact_map(x, xi, s_phi, s_p, k, which, sign)
        out[sign] = img if img is not None and img.admissible else None
    return out


def angular_shift_closed_form(x, xi, s_phi: float, k: int) -> np.ndarray:
    """x - (2 pi k / s_phi) xi_perp / |xi|^2, shared by both branches."""
    xi = np.asarray(xi, float)
    return np.asarray(x, float) - (TWO_PI * k / s_phi) * perp(xi) / np.dot(xi, xi)


def radial_shift_closed_form(x, xi, s_p: float, k: int, sign: int = +1) -> tuple[np.ndarray, np.ndarray]:
    """Image of (x, xi) after the shift p_hat -> p_hat + 2 pi k / s_p on branch ``sign``."""
    x = np.asarray(x, float)
    xi = np.asarray(xi, float)
    n = np.linalg.norm(xi)
    m = n + sign * TWO_PI * k / s_p
    xp = perp(xi)
    return x + np.dot(x, xp) * (1 / m - 1 / n) * xp / n, xi * m / n


# --------------------------------------------------------------------------
# Averaged data and blur symbols
# --------------------------------------------------------------------------


def gaussian_psi(r):
    return np.exp(-np.asarray(r, float))


def data_symbol(a: float, b: float, psi: Callable = gaussian_psi) -> Callable:
    """q0(phi, p, phi_hat, p_hat) = psi(a p_hat^2 + b phi_hat^2); a weights p, b weights phi."""

    def q0(q: ParallelCotangent):
        return psi(a * np.asarray(q.p_hat) ** 2 + b * np.asarray(q.phi_hat) ** 2)

    return q0


def averaged_symbol(a: float, b: float, psi: Callable = gaussian_psi) -> Callable:
    """Image-side symbol p0(x, xi) = psi(a |xi|^2 + b |x.xi_perp|^2).

    ``a`` is the strength of averaging in p, ``b`` in phi.
    """
    if a < 0 or b < 0:
        raise ValueError("averaging strengths must be nonnegative")

    def p0(x, xi):
        x = np.asarray(x, float)
        xi = np.asarray(xi, float)
        return psi(a * np.sum(xi * xi, axis=-1) + b * np.sum(x * perp(xi), axis=-1) ** 2)

    return p0


def pulled_back_symbol(q0: Callable, x, xi) -> np.ndarray:
    """(q0 o C+ + q0 o C-) / 2."""
    return 0.5 * (q0(canonical_forward(x, xi, +1)) + q0(canonical_forward(x, xi, -1)))


def blur_sinogram(sino: ParallelSinogram, a: float = 0.0, b: float = 0.0, psi: Callable = gaussian_psi) -> ParallelSinogram:
    """Apply the Fourier multiplier psi(a p_hat^2 + b phi_hat^2) in semiclassical units.

    The angular axis is periodic; the p axis is zero padded to twice its length.
    """
    v = sino.values
    n_phi, n_p = v.shape
    dphi, dp = sino.grid.spacing
    m = 2 * n_p
    h = sino.h
    phi_hat = h * TWO_PI * np.fft.fftfreq(n_phi, d=dphi)
    p_hat = h * TWO_PI * np.fft.fftfreq(m, d=dp)
    mult = psi(a * p_hat[None, :] ** 2 + b * phi_hat[:, None] ** 2)
    F = np.fft.fft2(v, s=(n_phi, m))
    out = np.fft.ifft2(F * mult).real[:, :n_p]
    return sino.with_values(out)


# --------------------------------------------------------------------------
# Resampling and inversion
# --------------------------------------------------------------------------


def _fourier_upsample(coarse: np.ndarray, m: int, axis: int) -> np.ndarray:
    """Band-limited periodic interpolation by zero filling; the Nyquist bin is split."""
    if m == 1:
        return np.array(coarse, float)
    n = coarse.shape[axis]
    F = np.fft.fft(coarse, axis=axis)
    F = np.moveaxis(F, axis, 0)
    G = np.zeros((n * m,) + F.shape[1:], complex)
    k = np.fft.fftfreq(n, d=1.0 / n).astype(int)
    if n % 2 == 0:
        nyq = k == -(n // 2)
        G[k[~nyq] % (n * m)] = F[~nyq]
        G[n // 2] = 0.5 * F[nyq][0]
        G[-(n // 2)] = 0.5 * F[nyq][0]
    else:
        G[k % (n * m)] = F
    out = np.fft.ifft(G, axis=0).real * m
    return np.moveaxis(out, 0, axis)


def undersample(sino: ParallelSinogram, m_phi: int = 1, m_p: int = 1, window: WindowSpec | str = "fourier") -> ParallelSinogram:
    """Keep every m-th sample per axis and interpolate back to the original grid.

    ``window="fourier"`` interpolates with the band-limited periodic kernel of
    the coarse grid (the p axis is treated as periodic, so the data should
    vanish near +-p_max).  A WindowSpec instead uses the lattice reconstruction
    with the angular axis extended periodically and the p axis by zeros.
    """
    n_phi, n_p = sino.grid.n
    if m_phi < 1 or m_p < 1 or n_phi % m_phi:
        raise ValueError("m_phi must divide the number of angles and both factors must be positive")
    coarse = sino.values[::m_phi, ::m_p]
    if isinstance(window, str):
        if window != "fourier":
            raise ValueError(f"unknown interpolation {window!r}")
        if n_p % m_p:
            raise ValueError("fourier interpolation needs m_p to divide the number of offsets")
        return sino.with_values(_fourier_upsample(_fourier_upsample(coarse, m_phi, 0), m_p, 1))
    dphi, dp = sino.grid.spacing
    h = sino.h
    nc1, nc2 = coarse.shape
    pad = window.radius(0) + 1
    k1 = np.arange(-pad, nc1 + pad)
    k2 = np.arange(nc2)
    K1, K2 = np.meshgrid(k1, k2, indexing="ij")
    vals = coarse[np.mod(K1, nc1), K2]
    lat = Lattice2D(np.diag([m_phi * dphi / h, m_p * dp / h]), 1.0, h, offset=sino.grid.origin)
    samples = SampleSet(lat, np.column_stack([K1.ravel(), K2.ravel()]), vals.ravel())
    return sino.with_values(reconstruct(samples, window, sino.grid).values)


def ramp_filter(n: int, dp: float, window: WindowSpec) -> np.ndarray:
    """Frequency response of the band-limited ramp on ``n`` bins, apodized by ``window``.

    The spatial Ram-Lak kernel is transformed directly so the DC term is exact.
    Units: the response approximates |sigma| with sigma in radians per unit p.
    """
    j = np.arange(n)
    j = np.where(j > n // 2, j - n, j)
    kern = np.zeros(n)
    kern[j == 0] = 1 / (4 * dp * dp)
    odd = j % 2 == 1
    kern[odd] = -1 / (np.pi * j[odd] * dp) ** 2
    H = TWO_PI * np.real(np.fft.fft(kern)) * dp
    eta = np.abs(np.fft.fftfreq(n)) * 2  # |sigma| / sigma_nyquist
    return H * window.profile(eta)


def fbp_invert(sino: ParallelSinogram, window: WindowSpec | None = None, target: Grid2D | None = None, upsample: int = 4) -> Grid2D:
    """Filtered back-projection for unit weight over the full angular range.

    f(x) = 1/(4 pi) int_0^{2pi} q(phi, x.omega(phi)) dphi with q the ramp-filtered
    projection, evaluated by linear interpolation on an ``upsample``-times finer
    p grid.
    """
    if not sino.unit_weight:
        raise ValueError("exact inversion is only available for unit weight")
    window = WindowSpec("trapezoid", 0.8) if window is None else window
    target = centered_grid(sino.R, 256, sino.h) if target is None else target
    n_phi, n_p = sino.grid.n
    dphi, dp = sino.grid.spacing
    n = 1 << int(np.ceil(np.log2(2 * n_p)))
    H = ramp_filter(n, dp, window)
    F = np.fft.rfft(sino.values, n=n, axis=1) * H[: n // 2 + 1]
    fine = np.fft.irfft(F, n=upsample * n, axis=1) * upsample
    p0 = sino.grid.origin[1]
    dq = dp / upsample
    x1, x2 = target.mesh()
    acc = np.zeros(target.n)
    size = fine.shape[1]
    for i, ph in enumerate(sino.phi):
        u = (x1 * np.cos(ph) + x2 * np.sin(ph) - p0) / dq
        i0 = np.floor(u).astype(int)
        fr = u - i0
        # The padded filtered row is circular: negative offsets wrap to the tail.
        row = fine[i]
        acc += (1 - fr) * row[i0 % size] + fr * row[(i0 + 1) % size]
    return target.with_values(acc * dphi / (4 * np.pi))


# --------------------------------------------------------------------------
# Pattern localisation
# --------------------------------------------------------------------------


def directional_envelope(grid: Grid2D, direction) -> np.ndarray:
    """Modulus of the analytic signal taken along ``direction`` in frequency.

    Frequencies with xi.direction > 0 are doubled, those < 0 removed.
    """
    d = np.asarray(direction, float)
    F = np.fft.fft2(grid.values)
    k1 = np.fft.fftfreq(grid.n[0])[:, None]
    k2 = np.fft.fftfreq(grid.n[1])[None, :]
    proj = k1 * d[0] + k2 * d[1]
    mask = np.where(proj > 0, 2.0, np.where(proj < 0, 0.0, 1.0))
    return np.abs(np.fft.ifft2(F * mask))


def envelope_centroid(grid: Grid2D, env: np.ndarray) -> np.ndarray:
    x1, x2 = grid.mesh()
    w = env**2
    tot = w.sum()
    if tot == 0:
        raise ValueError("empty envelope")
    return np.array([(w * x1).sum() / tot, (w * x2).sum() / tot])


def envelope_spread(grid: Grid2D, env: np.ndarray) -> float:
    """RMS radius of env^2 about its centroid."""
    c = envelope_centroid(grid, env)
    x1, x2 = grid.mesh()
    w = env**2
    return float(np.sqrt((w * ((x1 - c[0]) ** 2 + (x2 - c[1]) ** 2)).sum() / w.sum()))


def artifact_displacement(recon: Grid2D, reference: Grid2D, direction, footprint: float = 4.0, floor: float = 0.05) -> tuple[np.ndarray, float]:
    """Displacement of a pattern in ``recon`` relative to ``reference``.

    The difference image is enveloped along ``direction`` and a disk of
    ``footprint`` RMS radii about the reference centroid is masked.  When the
    remaining energy is below ``floor`` of the reference energy the pattern is
    reported undisplaced.  Returns (displacement, energy ratio).
    """
    ref_env = directional_envelope(reference, direction)
    c_ref = envelope_centroid(reference, ref_env)
    r_mask = footprint * envelope_spread(reference, ref_env)
    diff = recon.with_values(recon.values - reference.values)
    d_env = directional_envelope(diff, direction)
    x1, x2 = recon.mesh()
    d_env = np.where((x1 - c_ref[0]) ** 2 + (x2 - c_ref[1]) ** 2 < r_mask**2, 0.0, d_env)
    ratio = float((d_env**2).sum() / (ref_env**2).sum())
    if ratio < floor:
        return np.zeros(2), ratio
    return envelope_centroid(recon, d_env) - c_ref, ratio
