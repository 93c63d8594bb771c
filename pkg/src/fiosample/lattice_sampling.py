"""Sampling lattices, interpolation windows, Shannon-type reconstruction,
spectral folding and sample-count calculators.

Lattice points are ``offset + s*h*W @ k`` for integer ``k``.  Reconstruction
uses a product window in lattice coordinates ``y = (s h W)^-1 (x - offset)``:

    f(x) = sum_k f(x_k) chi(pi (y1 - k1)) chi(pi (y2 - k2)),

which for ``W = I`` is the familiar ``sum_k f(shk) chi(pi (x - shk)/(sh))``.
The 1D window has transform ``chi_hat = pi * w`` with ``w`` supported in
[-1, 1]; ``w`` equals 1 on the passband.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import ndimage

from .grid_core import FrequencyRegion, Grid2D, PhantomSpec, Spectrum2D

Rect = tuple[tuple[float, float], tuple[float, float]]

SINC_RADIUS = 64
TAIL_TOL = 1e-9


# --------------------------------------------------------------------------
# Lattices
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Lattice2D:
    W: np.ndarray
    s: float
    h: float
    offset: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        W = np.array(self.W, dtype=float).reshape(2, 2)
        if abs(np.linalg.det(W)) < 1e-300:
            raise ValueError("lattice generator W is singular")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)
        if not 0 < self.s:
            raise ValueError("s must be positive")
        if not self.h > 0:
            raise ValueError("h must be positive")
        object.__setattr__(self, "offset", tuple(float(v) for v in self.offset))

    @property
    def generator(self) -> np.ndarray:
        """Physical step matrix s*h*W."""
        return self.s * self.h * self.W

    @property
    def det_W(self) -> float:
        return float(abs(np.linalg.det(self.W)))

    @property
    def cell_area(self) -> float:
        return (self.s * self.h) ** 2 * self.det_W

    def points(self, k: np.ndarray) -> np.ndarray:
        k = np.asarray(k, float).reshape(-1, 2)
        return np.asarray(self.offset) + k @ self.generator.T

    def coordinates(self, x: np.ndarray) -> np.ndarray:
        """Lattice coordinates y with x = offset + generator @ y."""
        x = np.asarray(x, float).reshape(-1, 2)
        return np.linalg.solve(self.generator, (x - np.asarray(self.offset)).T).T

    def indices_in(self, domain: Rect) -> np.ndarray:
        """All k with points in the half-open rectangle, sorted lexicographically."""
        (a1, b1), (a2, b2) = domain
        if not (b1 > a1 and b2 > a2):
            return np.zeros((0, 2), int)
        corners = np.array([[a1, a2], [a1, b2], [b1, a2], [b1, b2]])
        y = self.coordinates(corners)
        lo = np.floor(y.min(axis=0)).astype(int) - 1
        hi = np.ceil(y.max(axis=0)).astype(int) + 1
        out = []
        g = self.generator
        off = np.asarray(self.offset)
        k2 = np.arange(lo[1], hi[1] + 1)
        # One row of k1 at a time keeps memory linear in the count.
        for k1 in range(lo[0], hi[0] + 1):
            pts = off + np.outer(np.full_like(k2, k1), g[:, 0]) + np.outer(k2, g[:, 1])
            ok = (pts[:, 0] >= a1) & (pts[:, 0] < b1) & (pts[:, 1] >= a2) & (pts[:, 1] < b2)
            if ok.any():
                out.append(np.column_stack([np.full(ok.sum(), k1), k2[ok]]))
        if not out:
            return np.zeros((0, 2), int)
        return np.concatenate(out)

    def to_json(self) -> dict:
        return {"W": self.W.tolist(), "s": self.s, "h": self.h, "offset": list(self.offset)}

    @classmethod
    def from_json(cls, d: dict) -> "Lattice2D":
        return cls(np.asarray(d["W"], float), float(d["s"]), float(d["h"]), tuple(d.get("offset", (0.0, 0.0))))


def nyquist_steps(B: Sequence[float]) -> tuple[float, ...]:
    """Largest relative steps pi/B_j per axis."""
    B = np.atleast_1d(np.asarray(B, float))
    if np.any(B <= 0):
        raise ValueError("band limits must be positive")
    return tuple(float(np.pi / b) for b in B)


def lattice_from_translations(V: np.ndarray, s: float, h: float, offset=(0.0, 0.0)) -> Lattice2D:
    """Generator W = 2 pi (V^*)^-1 for spectral translations by the columns of V."""
    V = np.asarray(V, float).reshape(2, 2)
    if abs(np.linalg.det(V)) < 1e-300:
        raise ValueError("translation matrix V is singular")
    W = 2 * np.pi * np.linalg.inv(V.conj().T)
    return Lattice2D(W, s, h, offset)


def rectangular_lattice(steps: Sequence[float], s: float, h: float, offset=(0.0, 0.0)) -> Lattice2D:
    """Diagonal lattice with relative steps ``s * steps_j`` per axis."""
    return Lattice2D(np.diag(np.asarray(steps, float)), s, h, offset)


def tiling_disjoint(region: FrequencyRegion, V: np.ndarray, resolution: int = 401, reach: int = 3) -> bool:
    """True when no translate region + V k (0 < |k|_inf <= reach) overlaps the
    region in a set with interior, judged on a dense membership grid."""
    bbox = region.bounding_box()
    if bbox is None:
        raise ValueError("tiling test needs a bounded region")
    V = np.asarray(V, float).reshape(2, 2)
    (l1, h1), (l2, h2) = bbox
    pad1 = 1e-3 * max(h1 - l1, 1e-12)
    pad2 = 1e-3 * max(h2 - l2, 1e-12)
    # Cell centres, so grid nodes avoid landing on straight region edges.
    e1 = np.linspace(l1 - pad1, h1 + pad1, resolution + 1)
    e2 = np.linspace(l2 - pad2, h2 + pad2, resolution + 1)
    c1 = 0.5 * (e1[1:] + e1[:-1])
    c2 = 0.5 * (e2[1:] + e2[:-1])
    g1, g2 = np.meshgrid(c1, c2, indexing="ij")
    base = region.contains(g1, g2)
    if not base.any():
        return True
    structure = np.ones((3, 3), bool)
    for k1 in range(-reach, reach + 1):
        for k2 in range(-reach, reach + 1):
            if k1 == 0 and k2 == 0:
                continue
            v = V @ np.array([k1, k2], float)
            if abs(v[0]) >= (h1 - l1) + 2 * pad1 or abs(v[1]) >= (h2 - l2) + 2 * pad2:
                continue
            both = base & region.contains(g1 - v[0], g2 - v[1])
            if not both.any():
                continue
            interior = ndimage.binary_erosion(both, structure=structure, border_value=0)
            if interior.any():
                return False
    return True


# --------------------------------------------------------------------------
# Windows
# --------------------------------------------------------------------------

WINDOW_KINDS = ("sinc", "trapezoid", "lanczos", "tabulated")


@dataclass(frozen=True, eq=False)
class WindowSpec:
    """1D interpolation window, used as a product in 2D.

    ``band`` rescales the window per axis: w_j(eta) = w(eta / band_j), so the
    kernel becomes band_j * chi(band_j * y).  ``table`` holds samples of w on
    an equispaced grid of [0, 1] (even extension, zero beyond 1).
    """

    kind: str = "trapezoid"
    delta: float = 0.8
    a: int = 3
    table: np.ndarray | None = None
    band: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if self.kind not in WINDOW_KINDS:
            raise ValueError(f"unknown window kind {self.kind!r}")
        if self.kind == "trapezoid" and not 0 < self.delta < 1:
            raise ValueError("trapezoid delta must lie strictly inside (0, 1)")
        if self.kind == "lanczos" and (int(self.a) != self.a or self.a < 1):
            raise ValueError("lanczos order must be a positive integer")
        if self.kind == "tabulated":
            t = np.asarray(self.table, float)
            if t.ndim != 1 or t.size < 2:
                raise ValueError("tabulated window needs at least two samples on [0, 1]")
            if abs(t[-1]) > 1e-12:
                raise ValueError("tabulated window must vanish at the support edge")
            object.__setattr__(self, "table", t)
        b = np.broadcast_to(np.asarray(self.band, float), (2,))
        if np.any(b <= 0):
            raise ValueError("window band must be positive")
        object.__setattr__(self, "band", (float(b[0]), float(b[1])))

    # unit-band 1D profiles -------------------------------------------------

    def profile(self, eta) -> np.ndarray:
        """w(eta) = chi_hat(eta)/pi for the unit band."""
        e = np.abs(np.asarray(eta, float))
        if self.kind == "sinc":
            return (e <= 1).astype(float)
        if self.kind == "trapezoid":
            d = self.delta
            return np.clip((1 - e) / (1 - d), 0, 1)
        if self.kind == "tabulated":
            t = self.table
            return np.interp(e, np.linspace(0, 1, t.size), t, right=0.0)
        return _lanczos_profile(e, int(self.a))

    def kernel(self, y) -> np.ndarray:
        """chi(y) for the unit band."""
        y = np.asarray(y, float)
        if self.kind == "sinc":
            return np.sinc(y / np.pi)
        if self.kind == "trapezoid":
            return trapezoid_kernel(y, self.delta)
        if self.kind == "lanczos":
            a = int(self.a)
            t = y / np.pi
            return np.where(np.abs(t) < a, np.sinc(t) * np.sinc(t / a), 0.0)
        return _tabulated_kernel(y, self.table)

    def kernel_axis(self, y, axis: int) -> np.ndarray:
        b = self.band[axis]
        return b * self.kernel(b * np.asarray(y, float))

    def profile_axis(self, eta, axis: int) -> np.ndarray:
        return self.profile(np.asarray(eta, float) / self.band[axis])

    def radius(self, axis: int = 0) -> int:
        """Truncation radius in lattice steps."""
        b = self.band[axis]
        if self.kind == "sinc":
            return SINC_RADIUS
        if self.kind == "lanczos":
            return int(np.ceil(self.a / b))
        if self.kind == "trapezoid":
            # |chi(pi m)| <= 2/((1-d) pi^2 m^2) and the l1 mass is at least chi(0).
            d = self.delta
            return int(np.ceil(8.0 / ((1 - d) * (1 + d) * np.pi**2 * TAIL_TOL * b)))
        return _tabulated_radius(self)


def trapezoid_kernel(y, delta: float) -> np.ndarray:
    """Inverse transform of the trapezoid pi*w, w = 1 on [-delta, delta]:
    (cos(delta y) - cos y) / ((1 - delta) y^2), value (1 + delta)/2 at 0."""
    y = np.asarray(y, float)
    small = np.abs(y) < 1e-4
    ys = np.where(small, 1.0, y)
    out = (np.cos(delta * ys) - np.cos(ys)) / ((1 - delta) * ys * ys)
    # Taylor expansion near 0 avoids cancellation.
    series = (1 + delta) / 2 - y * y * (1 + delta) * (1 + delta * delta) / 24
    return np.where(small, series, out)


def _lanczos_profile(e: np.ndarray, a: int, n: int = 4096) -> np.ndarray:
    t = np.linspace(0, a, n * a + 1)
    k = np.sinc(t) * np.sinc(t / a)
    wts = np.full(t.size, 1.0)
    wts[0] = wts[-1] = 0.5
    dt = t[1] - t[0]
    # chi_hat(eta)/pi with y = pi t: (2/pi) * int chi(y) cos(eta y) dy, y >= 0.
    flat = np.atleast_1d(e).ravel()
    vals = 2 * dt * (np.cos(np.pi * np.outer(flat, t)) @ (k * wts))
    return vals.reshape(np.shape(e))


def _tabulated_kernel(y: np.ndarray, table: np.ndarray, n: int = 2048) -> np.ndarray:
    eta = np.linspace(0, 1, n + 1)
    w = np.interp(eta, np.linspace(0, 1, table.size), table)
    wts = np.full(eta.size, 1.0 / n)
    wts[0] = wts[-1] = 0.5 / n
    flat = np.atleast_1d(y).ravel()
    out = np.empty(flat.size)
    for i in range(0, flat.size, 4096):
        out[i : i + 4096] = np.cos(np.outer(flat[i : i + 4096], eta)) @ (w * wts)
    return out.reshape(np.shape(y))


def _tabulated_radius(win: WindowSpec) -> int:
    m = np.arange(1, 2049)
    k = np.abs(win.kernel(np.pi * m))
    mass = abs(win.kernel(0.0)) + 2 * k.sum()
    c = (k[-512:] * m[-512:] ** 2).max()
    # Tail beyond K bounded by 2 c / K for an O(m^-2) kernel.
    return int(min(max(np.ceil(2 * c / (TAIL_TOL * max(mass, 1e-300))), 1), 10**9))


# --------------------------------------------------------------------------
# Samples and reconstruction
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SampleSet:
    lattice: Lattice2D
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.indices, dtype=int).reshape(-1, 2)
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if k.shape[0] != v.shape[0]:
            raise ValueError("indices and values differ in length")
        if k.shape[0] and np.unique(k, axis=0).shape[0] != k.shape[0]:
            raise ValueError("sample indices must be unique")
        object.__setattr__(self, "indices", k)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def points(self) -> np.ndarray:
        return self.lattice.points(self.indices)

    def to_csv(self, path: str | Path) -> None:
        pts = self.points
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k1", "k2", "x1", "x2", "value"])
            for (k1, k2), (x1, x2), v in zip(self.indices, pts, self.values):
                w.writerow([int(k1), int(k2), repr(float(x1)), repr(float(x2)), repr(float(v))])

    @classmethod
    def from_csv(cls, path: str | Path, lattice: Lattice2D) -> "SampleSet":
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(lattice, rows[:, :2].astype(int), rows[:, 4])


def sample(source, lattice: Lattice2D, domain: Rect) -> SampleSet:
    """Sample a Grid2D (bilinear, periodic grid), a PhantomSpec (closed form,
    evaluated with the lattice h) or a callable f(x1, x2) on the lattice."""
    k = lattice.indices_in(domain)
    if k.shape[0] == 0:
        return SampleSet(lattice, k, np.zeros(0))
    x = lattice.points(k)
    if isinstance(source, Grid2D):
        vals = bilinear(source, x[:, 0], x[:, 1])
    elif isinstance(source, PhantomSpec):
        vals = source.evaluate(x[:, 0], x[:, 1], lattice.h)
    elif callable(source):
        vals = np.broadcast_to(np.asarray(source(x[:, 0], x[:, 1]), float), (x.shape[0],))
    else:
        raise TypeError("source must be a Grid2D, PhantomSpec or callable")
    return SampleSet(lattice, k, vals)


def bilinear(grid: Grid2D, x1, x2, mode: str = "grid-wrap") -> np.ndarray:
    d1, d2 = grid.spacing
    c1 = (np.asarray(x1, float) - grid.origin[0]) / d1
    c2 = (np.asarray(x2, float) - grid.origin[1]) / d2
    return ndimage.map_coordinates(grid.values, [c1, c2], order=1, mode=mode)


def _axis_matrix(win: WindowSpec, y: np.ndarray, ks: np.ndarray, axis: int) -> np.ndarray:
    diff = y[:, None] - ks[None, :]
    out = win.kernel_axis(np.pi * diff, axis)
    out[np.abs(diff) > win.radius(axis)] = 0.0
    return out


def reconstruct(samples: SampleSet, window: WindowSpec, target: Grid2D, chunk: int = 8192) -> Grid2D:
    """Windowed interpolation sum evaluated on the target grid nodes."""
    if len(samples) == 0:
        return target.with_values(np.zeros(target.n))
    lat = samples.lattice
    k = samples.indices
    lo = k.min(axis=0)
    hi = k.max(axis=0)
    dense = np.zeros(tuple(hi - lo + 1))
    dense[k[:, 0] - lo[0], k[:, 1] - lo[1]] = samples.values
    ks1 = np.arange(lo[0], hi[0] + 1, dtype=float)
    ks2 = np.arange(lo[1], hi[1] + 1, dtype=float)
    a1, a2 = target.axes()
    G = lat.generator
    if abs(G[0, 1]) == 0 and abs(G[1, 0]) == 0:
        y1 = (a1 - lat.offset[0]) / G[0, 0]
        y2 = (a2 - lat.offset[1]) / G[1, 1]
        A1 = _axis_matrix(window, y1, ks1, 0)
        A2 = _axis_matrix(window, y2, ks2, 1)
        return target.with_values(A1 @ dense @ A2.T)
    x1, x2 = target.mesh()
    pts = np.column_stack([x1.ravel(), x2.ravel()])
    out = np.empty(pts.shape[0])
    for i in range(0, pts.shape[0], chunk):
        y = lat.coordinates(pts[i : i + chunk])
        A1 = _axis_matrix(window, y[:, 0], ks1, 0)
        A2 = _axis_matrix(window, y[:, 1], ks2, 1)
        out[i : i + chunk] = np.einsum("ti,ti->t", A1 @ dense, A2)
    return target.with_values(out.reshape(target.n))


def window_interpolate(
    values: np.ndarray, u1, u2, window: WindowSpec, wrap: tuple[bool, bool] = (False, False), normalize: bool = False
) -> np.ndarray:
    """Windowed interpolation of uniform samples at fractional indices (u1, u2).

    ``values[i, j]`` sits at index (i, j).  Needs a compactly supported window.
    Axes flagged in ``wrap`` are periodic; elsewhere samples off the array are zero.
    ``normalize`` rescales the taps of each axis to sum to one, which removes the
    grid-rate ripple truncated windows put on constants.
    """
    r1, r2 = window.radius(0), window.radius(1)
    if max(r1, r2) > 64:
        raise ValueError("window_interpolate needs a compactly supported window")
    values = np.asarray(values, float)
    u1, u2 = np.broadcast_arrays(np.asarray(u1, float), np.asarray(u2, float))

    def taps(u, r, axis, n, periodic):
        base = np.floor(u).astype(int)
        idx, wts = [], []
        for m in range(-r + 1, r + 1):
            k = base + m
            idx.append(k)
            wts.append(window.kernel_axis(np.pi * (u - k), axis))
        if normalize:
            total = sum(wts)
            wts = [w / total for w in wts]
        out = []
        for k, w in zip(idx, wts):
            if periodic:
                out.append((k % n, w))
            else:
                ok = (k >= 0) & (k < n)
                out.append((np.clip(k, 0, n - 1), np.where(ok, w, 0.0)))
        return out

    t1 = taps(u1, r1, 0, values.shape[0], wrap[0])
    t2 = taps(u2, r2, 1, values.shape[1], wrap[1])
    out = np.zeros(u1.shape)
    for i, w1 in t1:
        for j, w2 in t2:
            out += w1 * w2 * values[i, j]
    return out


def parseval_residual(samples: SampleSet, reference_norm: float) -> float:
    """|‖f‖² - |det W| (sh)² Σ|f(x_k)|²| / ‖f‖²."""
    rhs = samples.lattice.cell_area * float(np.sum(samples.values**2))
    if reference_norm == 0:
        if rhs == 0:
            return 0.0
        raise ValueError("reference norm is zero")
    lhs = reference_norm**2
    return abs(lhs - rhs) / lhs


# --------------------------------------------------------------------------
# Folding
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AliasShift:
    """S_k: xi -> xi + 2 pi k / s (componentwise); x is untouched."""

    k: tuple[int, int]
    s: tuple[float, float]

    @property
    def vector(self) -> np.ndarray:
        return 2 * np.pi * np.asarray(self.k, float) / np.asarray(self.s, float)

    def __call__(self, xi):
        return np.asarray(xi, float) + self.vector

    def then(self, other: "AliasShift") -> "AliasShift":
        if tuple(other.s) != tuple(self.s):
            raise ValueError("composition needs equal steps")
        return AliasShift((self.k[0] + other.k[0], self.k[1] + other.k[1]), self.s)


def alias_shift(k: Sequence[int], s: Sequence[float] | float) -> AliasShift:
    s_ = np.broadcast_to(np.asarray(s, float), (2,))
    return AliasShift((int(k[0]), int(k[1])), (float(s_[0]), float(s_[1])))


def fold_spectrum(spec: Spectrum2D, s: Sequence[float] | float, window: WindowSpec) -> Spectrum2D:
    """w(s xi/pi) * sum_k F(xi + 2 pi k / s), on the nodes of ``spec``.

    The period 2 pi/s_j is rounded to a whole number of frequency bins.
    """
    s_ = np.broadcast_to(np.asarray(s, float), (2,))
    if np.any(s_ <= 0):
        raise ValueError("steps must be positive")
    c = spec.coefficients
    n1, n2 = c.shape
    m1 = int(round(2 * np.pi / s_[0] / spec.xi_step[0]))
    m2 = int(round(2 * np.pi / s_[1] / spec.xi_step[1]))
    if m1 < 1 or m2 < 1:
        raise ValueError("folding period is below one frequency bin")
    ext = np.zeros_like(c)
    for k1 in range(-(n1 // m1) - 1, n1 // m1 + 2):
        src1 = np.arange(n1) + k1 * m1
        ok1 = (src1 >= 0) & (src1 < n1)
        if not ok1.any():
            continue
        for k2 in range(-(n2 // m2) - 1, n2 // m2 + 2):
            src2 = np.arange(n2) + k2 * m2
            ok2 = (src2 >= 0) & (src2 < n2)
            if not ok2.any():
                continue
            ext[np.ix_(ok1, ok2)] += c[np.ix_(src1[ok1], src2[ok2])]
    xi1, xi2 = spec.axes()
    w1 = window.profile_axis(s_[0] * xi1 / np.pi, 0)
    w2 = window.profile_axis(s_[1] * xi2 / np.pi, 1)
    return spec.with_coefficients(ext * np.outer(w1, w2))


# --------------------------------------------------------------------------
# Counts
# --------------------------------------------------------------------------


def weyl_count(volume_phase: float, h: float) -> float:
    """(2 pi h)^-2 times the phase-space volume."""
    if volume_phase < 0 or not h > 0:
        raise ValueError("need volume >= 0 and h > 0")
    return volume_phase / (2 * np.pi * h) ** 2


def lattice_point_count(lattice: Lattice2D, domain: Rect) -> int:
    """Exact number of lattice points in the half-open rectangle."""
    return int(lattice.indices_in(domain).shape[0])


def rect_area(domain: Rect) -> float:
    (a1, b1), (a2, b2) = domain
    return max(b1 - a1, 0.0) * max(b2 - a2, 0.0)


def lattice_json_dump(lattice: Lattice2D) -> str:
    return json.dumps(lattice.to_json(), sort_keys=True)
