"""Uniform 2D grids, phantoms, the h-scaled Fourier transform and grid file I/O.

A grid stores samples ``values[i, j] = f(origin + (i*d1, j*d2))`` with spacing
``d = extent / n``.  The first array axis runs along x1, the second along x2.
The discrete transform treats the grid as periodic, so phantoms are expected to
vanish near the grid boundary.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

Pair = tuple[float, float]

GRID_MAGIC = b"MTG1"
_HEADER = "<4sII5d"


class BoundaryMassWarning(UserWarning):
    """Phantom mass close to the grid edge; DFT periodicity may leak."""


def _pair(v, dtype=float) -> tuple:
    arr = np.broadcast_to(np.asarray(v, dtype=dtype), (2,))
    return tuple(dtype(a) for a in arr)


@dataclass(frozen=True, eq=False)
class Grid2D:
    """Real samples on a uniform rectangular grid with a semiclassical parameter."""

    origin: Pair
    extent: Pair
    n: tuple[int, int]
    values: np.ndarray
    h: float

    def __post_init__(self):
        object.__setattr__(self, "origin", _pair(self.origin))
        object.__setattr__(self, "extent", _pair(self.extent))
        object.__setattr__(self, "n", _pair(self.n, int))
        if min(self.n) < 2:
            raise ValueError(f"need at least 2 nodes per axis, got {self.n}")
        if min(self.extent) <= 0:
            raise ValueError(f"extent must be positive, got {self.extent}")
        if not self.h > 0:
            raise ValueError(f"h must be positive, got {self.h}")
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.n:
            raise ValueError(f"values shape {vals.shape} does not match n={self.n}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid values must be finite")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "h", float(self.h))

    @property
    def spacing(self) -> Pair:
        return (self.extent[0] / self.n[0], self.extent[1] / self.n[1])

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        d1, d2 = self.spacing
        return (
            self.origin[0] + d1 * np.arange(self.n[0]),
            self.origin[1] + d2 * np.arange(self.n[1]),
        )

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        a1, a2 = self.axes()
        return np.meshgrid(a1, a2, indexing="ij")

    def with_values(self, values: np.ndarray) -> "Grid2D":
        return replace(self, values=values)

    def l2_norm(self) -> float:
        d1, d2 = self.spacing
        return float(np.sqrt(np.sum(self.values**2) * d1 * d2))


def make_grid(origin: Sequence[float], extent: Sequence[float], n: Sequence[int], h: float) -> Grid2D:
    """Zero-initialized grid with the stated geometry."""
    n_ = _pair(n, int)
    return Grid2D(origin=origin, extent=extent, n=n_, values=np.zeros(n_), h=h)


def centered_grid(half_width: float, n: int, h: float) -> Grid2D:
    """Square grid on [-half_width, half_width)^2."""
    return make_grid((-half_width, -half_width), (2 * half_width, 2 * half_width), (n, n), h)


# --------------------------------------------------------------------------
# Phantoms
# --------------------------------------------------------------------------

PHANTOM_KINDS = ("coherent_state", "gaussian_sum", "oscillatory_gaussian", "doughnut_array")


@dataclass(frozen=True)
class PhantomSpec:
    """Closed-form phantom.

    Parameters by kind:

    - ``coherent_state``: ``x0``, ``xi0``; optional ``h`` overriding the grid's.
    - ``gaussian_sum``: ``centers`` (m, 2), ``widths`` (m,), ``amplitudes`` (m,).
    - ``oscillatory_gaussian``: ``center``, ``direction``, ``wavelength``,
      ``width`` (default 0.5) and ``phase`` (default 0).  The carrier is
      ``sin(2*pi*(x - center).direction/wavelength + phase)``.
    - ``doughnut_array``: ``rows``, ``cols``, ``radius`` (ring radius),
      optional ``thickness`` (default sqrt(h)) and ``span`` (half-width of
      the square holding the ring centers, default 0.6*support_radius).
    """

    kind: str
    params: dict = field(default_factory=dict)
    support_radius: float = 1.0

    def __post_init__(self):
        if self.kind not in PHANTOM_KINDS:
            raise ValueError(f"unknown phantom kind {self.kind!r}")
        if not self.support_radius > 0:
            raise ValueError("support radius must be positive")
        for c in self.centers():
            if np.hypot(*c) >= self.support_radius:
                raise ValueError(f"center {tuple(c)} not strictly inside radius {self.support_radius}")

    def centers(self) -> np.ndarray:
        p = self.params
        if self.kind == "coherent_state":
            return np.atleast_2d(np.asarray(p["x0"], float))
        if self.kind == "gaussian_sum":
            return np.asarray(p["centers"], float).reshape(-1, 2)
        if self.kind == "oscillatory_gaussian":
            return np.atleast_2d(np.asarray(p["center"], float))
        return _doughnut_centers(p, self.support_radius)

    def evaluate(self, x1: np.ndarray, x2: np.ndarray, h: float) -> np.ndarray:
        """Closed-form values at points (x1, x2)."""
        p = self.params
        x1 = np.asarray(x1, float)
        x2 = np.asarray(x2, float)
        if self.kind == "coherent_state":
            hh = float(p.get("h", h))
            return coherent_state(x1, x2, p["x0"], p["xi0"], hh).real
        if self.kind == "gaussian_sum":
            out = np.zeros(np.broadcast(x1, x2).shape)
            centers = np.asarray(p["centers"], float).reshape(-1, 2)
            widths = np.broadcast_to(np.asarray(p["widths"], float), (len(centers),))
            amps = np.broadcast_to(np.asarray(p["amplitudes"], float), (len(centers),))
            for (c1, c2), w, a in zip(centers, widths, amps):
                if a != 0.0:
                    out = out + a * np.exp(-((x1 - c1) ** 2 + (x2 - c2) ** 2) / (2 * w * w))
            return out
        if self.kind == "oscillatory_gaussian":
            c1, c2 = p["center"]
            d = np.asarray(p["direction"], float)
            d = d / np.linalg.norm(d)
            w = float(p.get("width", 0.5))
            carrier = np.sin(2 * np.pi * ((x1 - c1) * d[0] + (x2 - c2) * d[1]) / p["wavelength"] + p.get("phase", 0.0))
            return np.exp(-((x1 - c1) ** 2 + (x2 - c2) ** 2) / (2 * w * w)) * carrier
        # doughnut_array
        radius = float(p["radius"])
        thick = float(p.get("thickness", np.sqrt(h)))
        out = np.zeros(np.broadcast(x1, x2).shape)
        for c1, c2 in self.centers():
            r = np.hypot(x1 - c1, x2 - c2)
            out = out + np.exp(-((r - radius) ** 2) / (2 * thick * thick))
        return out


def _doughnut_centers(p: dict, support_radius: float) -> np.ndarray:
    rows, cols = int(p["rows"]), int(p["cols"])
    span = float(p.get("span", 0.6 * support_radius))
    c1 = np.linspace(-span, span, rows) if rows > 1 else np.zeros(1)
    c2 = np.linspace(-span, span, cols) if cols > 1 else np.zeros(1)
    g1, g2 = np.meshgrid(c1, c2, indexing="ij")
    return np.column_stack([g1.ravel(), g2.ravel()])


def coherent_state(x1, x2, x0: Sequence[float], xi0: Sequence[float], h: float, normalized: bool = False):
    """Complex coherent state exp(i x.xi0/h - |x-x0|^2/(2h)).

    The carrier phase is referenced to the origin, so the real part is
    cos(x.xi0/h) * exp(-|x-x0|^2/(2h)).
    """
    x1 = np.asarray(x1, float)
    x2 = np.asarray(x2, float)
    phase = (x1 * xi0[0] + x2 * xi0[1]) / h
    amp = np.exp(-((x1 - x0[0]) ** 2 + (x2 - x0[1]) ** 2) / (2 * h))
    scale = (np.pi * h) ** -0.5 if normalized else 1.0
    return scale * amp * np.exp(1j * phase)


def render_phantom(spec: PhantomSpec, grid: Grid2D, edge_cells: int = 3, edge_tol: float = 1e-9) -> Grid2D:
    """Evaluate the phantom on the grid nodes.

    Raises if the support disk is not covered by the grid; warns when the
    mass within ``edge_cells`` spacings of the boundary exceeds ``edge_tol``
    of the total.
    """
    a1, a2 = grid.axes()
    lo = np.array(grid.origin)
    hi = lo + np.array(grid.extent)
    r = spec.support_radius
    if np.any(lo > -r) or np.any(hi < r):
        raise ValueError(f"support radius {r} exceeds grid [{lo}, {hi})")
    x1, x2 = np.meshgrid(a1, a2, indexing="ij")
    vals = spec.evaluate(x1, x2, grid.h)
    out = grid.with_values(vals)
    frac = boundary_mass_fraction(out, edge_cells)
    if frac > edge_tol:
        warnings.warn(
            f"phantom mass fraction {frac:.2e} within {edge_cells} cells of the boundary",
            BoundaryMassWarning,
            stacklevel=2,
        )
    return out


def boundary_mass_fraction(grid: Grid2D, cells: int = 3) -> float:
    v2 = grid.values**2
    total = v2.sum()
    if total == 0:
        return 0.0
    inner = v2[cells:-cells, cells:-cells].sum()
    return float((total - inner) / total)


# --------------------------------------------------------------------------
# Semiclassical Fourier transform
# --------------------------------------------------------------------------


def _signed_index(n: int) -> np.ndarray:
    return np.fft.fftshift(np.fft.fftfreq(n) * n).round().astype(int)


@dataclass(frozen=True, eq=False)
class Spectrum2D:
    """Discrete F_h f on nodes xi = xi_step * k, k in [-n/2, n/2), increasing.

    ``origin`` records the spatial origin of the source grid so the inverse
    can undo the reference phase.
    """

    coefficients: np.ndarray
    xi_step: Pair
    h: float
    origin: Pair = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "xi_step", _pair(self.xi_step))
        object.__setattr__(self, "origin", _pair(self.origin))
        c = np.asarray(self.coefficients, dtype=complex).copy()
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def n(self) -> tuple[int, int]:
        return self.coefficients.shape  # type: ignore[return-value]

    def indices(self) -> tuple[np.ndarray, np.ndarray]:
        return _signed_index(self.n[0]), _signed_index(self.n[1])

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        k1, k2 = self.indices()
        return k1 * self.xi_step[0], k2 * self.xi_step[1]

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        a1, a2 = self.axes()
        return np.meshgrid(a1, a2, indexing="ij")

    def with_coefficients(self, c: np.ndarray) -> "Spectrum2D":
        return replace(self, coefficients=c)

    def spatial_extent(self) -> Pair:
        return (2 * np.pi * self.h / self.xi_step[0], 2 * np.pi * self.h / self.xi_step[1])

    def mirrored(self) -> tuple[np.ndarray, np.ndarray]:
        """(values at -xi, mask of nodes whose mirror is also a node)."""
        k1, k2 = self.indices()
        ok1 = np.isin(-k1, k1)
        ok2 = np.isin(-k2, k2)
        pos1 = {k: i for i, k in enumerate(k1)}
        pos2 = {k: i for i, k in enumerate(k2)}
        i1 = np.array([pos1.get(-k, 0) for k in k1])
        i2 = np.array([pos2.get(-k, 0) for k in k2])
        mirrored = self.coefficients[np.ix_(i1, i2)]
        return mirrored, np.outer(ok1, ok2)


def _origin_phase(origin: Pair, xi1: np.ndarray, xi2: np.ndarray, h: float) -> np.ndarray:
    return np.exp(-1j * np.add.outer(origin[0] * xi1, origin[1] * xi2) / h)


def sc_fourier(grid: Grid2D) -> Spectrum2D:
    """Riemann-sum approximation of F_h f(xi) = int exp(-i x.xi/h) f(x) dx."""
    d1, d2 = grid.spacing
    xi_step = (2 * np.pi * grid.h / grid.extent[0], 2 * np.pi * grid.h / grid.extent[1])
    raw = np.fft.fftshift(np.fft.fft2(grid.values)) * (d1 * d2)
    spec = Spectrum2D(raw, xi_step, grid.h, grid.origin)
    xi1, xi2 = spec.axes()
    return spec.with_coefficients(raw * _origin_phase(grid.origin, xi1, xi2, grid.h))


def inverse_sc_fourier_complex(spec: Spectrum2D) -> np.ndarray:
    xi1, xi2 = spec.axes()
    raw = spec.coefficients / _origin_phase(spec.origin, xi1, xi2, spec.h)
    L1, L2 = spec.spatial_extent()
    n1, n2 = spec.n
    d = (L1 / n1) * (L2 / n2)
    return np.fft.ifft2(np.fft.ifftshift(raw)) / d


def inverse_sc_fourier(spec: Spectrum2D, imag_tol: float | None = None) -> Grid2D:
    """Inverse transform; the real part is returned as a grid.

    With ``imag_tol`` set, raise if the imaginary part exceeds that fraction
    of the maximum modulus.
    """
    vals = inverse_sc_fourier_complex(spec)
    if imag_tol is not None:
        scale = max(np.abs(vals).max(), 1e-300)
        if np.abs(vals.imag).max() > imag_tol * scale:
            raise ValueError("inverse transform is not real within tolerance")
    L1, L2 = spec.spatial_extent()
    return Grid2D(spec.origin, (L1, L2), spec.n, vals.real, spec.h)


def spectral_l2_norm(spec: Spectrum2D) -> float:
    """(2 pi h)^-1 * sqrt(sum |F|^2 dxi1 dxi2); equals the grid L2 norm."""
    s = np.sum(np.abs(spec.coefficients) ** 2) * spec.xi_step[0] * spec.xi_step[1]
    return float(np.sqrt(s) / (2 * np.pi * spec.h))


# --------------------------------------------------------------------------
# Frequency regions
# --------------------------------------------------------------------------

REGION_KINDS = ("box", "disk", "cone_parallel", "double_triangle_fan", "halfplane_shift", "custom")


@dataclass(frozen=True)
class FrequencyRegion:
    """Closed subset of the (xi1, xi2) plane with a total membership test.

    Parameters by kind:

    - ``box``: ``B`` = (B1, B2); |xi_j| <= B_j.
    - ``disk``: ``B``; |xi| <= B.
    - ``cone_parallel``: ``R``, ``B``; coordinates (phi_hat, p_hat),
      |phi_hat| <= R |p_hat|, |p_hat| <= B.
    - ``double_triangle_fan``: ``R``, ``B``, ``beta``; coordinates
      (alpha_hat, beta_hat), |alpha_hat| <= |beta_hat - alpha_hat| <= R B cos(beta).
    - ``halfplane_shift``: ``normal``, ``offset``; xi . normal <= offset.
    - ``custom``: ``indicator`` callable (xi1, xi2) -> bool array and an
      optional ``bbox`` ((lo1, hi1), (lo2, hi2)).
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in REGION_KINDS:
            raise ValueError(f"unknown region kind {self.kind!r}")

    def contains(self, xi1, xi2) -> np.ndarray:
        a = np.asarray(xi1, float)
        b = np.asarray(xi2, float)
        p = self.params
        if self.kind == "box":
            B1, B2 = _pair(p["B"])
            return (np.abs(a) <= B1) & (np.abs(b) <= B2)
        if self.kind == "disk":
            return a * a + b * b <= p["B"] ** 2
        if self.kind == "cone_parallel":
            return (np.abs(a) <= p["R"] * np.abs(b)) & (np.abs(b) <= p["B"])
        if self.kind == "double_triangle_fan":
            top = p["R"] * p["B"] * np.cos(p["beta"])
            bp = np.abs(b - a)
            return (np.abs(a) <= bp) & (bp <= top)
        if self.kind == "halfplane_shift":
            n1, n2 = p["normal"]
            return a * n1 + b * n2 <= p["offset"]
        return np.asarray(p["indicator"](a, b), dtype=bool)

    def bounding_box(self) -> tuple[Pair, Pair] | None:
        """Axis-aligned bounds, or None when the region is unbounded/unknown."""
        p = self.params
        if self.kind == "box":
            B1, B2 = _pair(p["B"])
            return (-B1, B1), (-B2, B2)
        if self.kind == "disk":
            return (-p["B"], p["B"]), (-p["B"], p["B"])
        if self.kind == "cone_parallel":
            return (-p["R"] * p["B"], p["R"] * p["B"]), (-p["B"], p["B"])
        if self.kind == "double_triangle_fan":
            top = p["R"] * p["B"] * abs(np.cos(p["beta"]))
            return (-top, top), (-2 * top, 2 * top)
        if self.kind == "custom" and p.get("bbox") is not None:
            (l1, h1), (l2, h2) = p["bbox"]
            return (float(l1), float(h1)), (float(l2), float(h2))
        return None


def nodes_region(mask: np.ndarray, xi1: np.ndarray, xi2: np.ndarray) -> FrequencyRegion:
    """Custom region given by a boolean mask on a uniform node lattice.

    Membership of an arbitrary point uses its nearest node; points beyond the
    outermost nodes by more than half a step are outside.
    """
    mask = np.asarray(mask, bool).copy()
    s1 = xi1[1] - xi1[0]
    s2 = xi2[1] - xi2[0]

    def indicator(a, b):
        i = np.rint((np.asarray(a) - xi1[0]) / s1).astype(int)
        j = np.rint((np.asarray(b) - xi2[0]) / s2).astype(int)
        ok = (i >= 0) & (i < len(xi1)) & (j >= 0) & (j < len(xi2))
        out = np.zeros(np.broadcast(i, j).shape, bool)
        out[ok] = mask[i[ok], j[ok]]
        return out

    if mask.any():
        ii, jj = np.nonzero(mask)
        bbox = ((xi1[ii.min()], xi1[ii.max()]), (xi2[jj.min()], xi2[jj.max()]))
    else:
        bbox = ((0.0, 0.0), (0.0, 0.0))
    return FrequencyRegion("custom", {"indicator": indicator, "bbox": bbox, "mask": mask})


def frequency_set_estimate(spec: Spectrum2D, threshold: float) -> FrequencyRegion:
    """Nodes whose modulus exceeds ``threshold`` times the maximum modulus."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    mod = np.abs(spec.coefficients)
    peak = mod.max()
    mask = mod > threshold * peak if peak > 0 else np.zeros(mod.shape, bool)
    xi1, xi2 = spec.axes()
    return nodes_region(mask, xi1, xi2)


def energy_fraction_outside(spec: Spectrum2D, region: FrequencyRegion) -> float:
    e = np.abs(spec.coefficients) ** 2
    total = e.sum()
    if total == 0:
        return 0.0
    xi1, xi2 = spec.mesh()
    inside = region.contains(xi1, xi2)
    return float(e[~inside].sum() / total)


# --------------------------------------------------------------------------
# File I/O
# --------------------------------------------------------------------------


def write_grid_bin(path: str | Path, grid: Grid2D, magic: bytes = GRID_MAGIC, meta: dict | None = None) -> None:
    """Little-endian header then row-major f64 values.

    A non-empty ``meta`` dict is stored in a sidecar ``<path>.json``.
    """
    header = struct.pack(_HEADER, magic, grid.n[0], grid.n[1], *grid.origin, *grid.extent, grid.h)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(grid.values, dtype="<f8").tobytes())
    if meta:
        Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def read_grid_bin(path: str | Path, magic: bytes = GRID_MAGIC) -> Grid2D:
    raw = Path(path).read_bytes()
    size = struct.calcsize(_HEADER)
    got, n1, n2, o1, o2, e1, e2, h = struct.unpack(_HEADER, raw[:size])
    if got != magic:
        raise ValueError(f"bad magic {got!r}, expected {magic!r}")
    vals = np.frombuffer(raw[size:], dtype="<f8")
    if vals.size != n1 * n2:
        raise ValueError("payload size does not match header")
    return Grid2D((o1, o2), (e1, e2), (n1, n2), vals.reshape(n1, n2), h)


def write_grid_png(path: str | Path, grid: Grid2D | np.ndarray) -> dict:
    """16-bit grayscale with linear min-max mapping; min/max in ``<path>.json``.

    Row 0 of the image is the top, i.e. the largest x2.
    """
    from PIL import Image

    vals = grid.values if isinstance(grid, Grid2D) else np.asarray(grid, float)
    vmin = float(vals.min())
    vmax = float(vals.max())
    span = vmax - vmin
    scaled = np.zeros(vals.shape) if span == 0 else (vals - vmin) / span
    img = np.rint(scaled.T[::-1] * 65535).astype(np.uint16)
    Image.fromarray(img).save(str(path))
    side = {"min": vmin, "max": vmax, "shape": list(vals.shape)}
    Path(str(path) + ".json").write_text(json.dumps(side, indent=2, sort_keys=True))
    return side


def read_grid_png(path: str | Path) -> np.ndarray:
    """Inverse of write_grid_png up to 16-bit quantization."""
    from PIL import Image

    side = json.loads(Path(str(path) + ".json").read_text())
    img = np.asarray(Image.open(str(path)), dtype=float) / 65535
    vals = img[::-1].T
    return side["min"] + vals * (side["max"] - side["min"])


def write_grid_csv(path: str | Path, grid: Grid2D | np.ndarray) -> None:
    vals = grid.values if isinstance(grid, Grid2D) else np.asarray(grid, float)
    with open(path, "w", newline="") as fh:
        for row in vals:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def read_grid_csv(path: str | Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_grid(path: str | Path, grid: Grid2D, fmt: str) -> Path:
    """Dispatch on ``fmt`` in {png, csv, bin}; the suffix is appended."""
    path = Path(str(path) + "." + fmt)
    if fmt == "png":
        write_grid_png(path, grid)
    elif fmt == "csv":
        write_grid_csv(path, grid)
    elif fmt == "bin":
        write_grid_bin(path, grid)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return path


def evaluate_on(grid: Grid2D, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> Grid2D:
    x1, x2 = grid.mesh()
    return grid.with_values(fn(x1, x2))
