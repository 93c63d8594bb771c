"""Thermoacoustic forward model on the square [-L, L]^2.

The source ``f`` evolves by ``u_tt = c^2 Lap u`` with ``u(0) = f`` and
``u_t(0) = 0``; the observation is ``u`` restricted to one side of the square
over [0, T).  Two models: waves leave freely through the boundary (an
absorbing layer outside the square) or reflect off it (zero Neumann data).

Rays of the metric ``c^-2 dx^2`` are integrated with Hamiltonian ``c(x)|xi|``
so the flow parameter is travel time and ``c|xi|`` is conserved.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .grid_core import Grid2D, boundary_mass_fraction, make_grid, read_grid_bin, write_grid_bin

TRACE_MAGIC = b"MTT1"
SIDES = ("right", "left", "top", "bottom")


class TrappedRayError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# Speed fields
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SpeedField:
    """Positive sound speed c(x1, x2) with optional analytic gradient.

    ``c_min``/``c_max`` are taken over a ``samples`` x ``samples`` grid on the
    square of half-width ``half_width``.
    """

    evaluate: Callable[[np.ndarray, np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None
    half_width: float = 1.0
    samples: int = 401
    c_min: float = field(init=False)
    c_max: float = field(init=False)

    def __post_init__(self):
        t = np.linspace(-self.half_width, self.half_width, self.samples)
        X1, X2 = np.meshgrid(t, t, indexing="ij")
        c = np.broadcast_to(np.asarray(self.evaluate(X1, X2), float), X1.shape)
        if not np.all(np.isfinite(c)) or c.min() <= 0:
            raise ValueError("speed must be finite and positive")
        object.__setattr__(self, "c_min", float(c.min()))
        object.__setattr__(self, "c_max", float(c.max()))

    @property
    def M(self) -> float:
        """Sharp lower bound of the metric c^-2 |v|^2 on unit vectors: 1/c_max."""
        return 1.0 / self.c_max

    def __call__(self, x1, x2) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.evaluate(np.asarray(x1, float), np.asarray(x2, float)), float), np.broadcast(x1, x2).shape)

    def grad(self, x1, x2, eps: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
        if self.gradient is not None:
            return self.gradient(x1, x2)
        g1 = (self(x1 + eps, x2) - self(x1 - eps, x2)) / (2 * eps)
        g2 = (self(x1, x2 + eps) - self(x1, x2 - eps)) / (2 * eps)
        return g1, g2

    @classmethod
    def constant(cls, c: float = 1.0, half_width: float = 1.0) -> "SpeedField":
        return cls(lambda x1, x2: np.full(np.broadcast(x1, x2).shape, float(c)), lambda x1, x2: (0.0 * x1, 0.0 * x2), half_width)

    @classmethod
    def lens(cls, amplitude: float, rate: float = 2.0, half_width: float = 1.0) -> "SpeedField":
        """c = 1 + amplitude exp(-rate |x|^2): slow lens for amplitude < 0, fast for > 0."""
        if amplitude <= -1:
            raise ValueError("amplitude must exceed -1")

        def c(x1, x2):
            return 1.0 + amplitude * np.exp(-rate * (x1 * x1 + x2 * x2))

        def g(x1, x2):
            e = -2 * rate * amplitude * np.exp(-rate * (x1 * x1 + x2 * x2))
            return e * x1, e * x2

        return cls(c, g, half_width)


def slow_lens(half_width: float = 1.0) -> SpeedField:
    return SpeedField.lens(-0.5, half_width=half_width)


def fast_lens(half_width: float = 1.0) -> SpeedField:
    return SpeedField.lens(0.5, half_width=half_width)


# --------------------------------------------------------------------------
# Grids and traces
# --------------------------------------------------------------------------


def tat_grid(n: int, h: float, half_width: float = 1.0) -> Grid2D:
    """Cell-centred n x n grid filling [-L, L]^2 exactly."""
    d = 2 * half_width / n
    return make_grid((-half_width + d / 2, -half_width + d / 2), (2 * half_width, 2 * half_width), (n, n), h)


@dataclass(frozen=True)
class BoundaryTrace:
    """u on one side of the square; grid axes (t, y) with y the coordinate along the side."""

    grid: Grid2D
    side: str
    T: float
    segment: tuple[tuple[float, float], tuple[float, float]]

    @property
    def values(self) -> np.ndarray:
        return self.grid.values

    @property
    def t(self) -> np.ndarray:
        return self.grid.axes()[0]

    @property
    def y(self) -> np.ndarray:
        return self.grid.axes()[1]

    def with_values(self, values) -> "BoundaryTrace":
        return BoundaryTrace(self.grid.with_values(values), self.side, self.T, self.segment)


def write_trace(path: str | Path, trace: BoundaryTrace) -> None:
    g = trace.grid
    meta = {"t_count": g.n[0], "y_count": g.n[1], "T": trace.T, "segment": [list(p) for p in trace.segment], "side": trace.side}
    write_grid_bin(path, g, magic=TRACE_MAGIC, meta=meta)


def read_trace(path: str | Path) -> BoundaryTrace:
    g = read_grid_bin(path, magic=TRACE_MAGIC)
    meta = json.loads(Path(str(path) + ".json").read_text())
    seg = tuple(tuple(float(v) for v in p) for p in meta["segment"])
    return BoundaryTrace(g, meta["side"], float(meta["T"]), seg)


# --------------------------------------------------------------------------
# Wave solver
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class WaveResult:
    trace: BoundaryTrace
    dt: float
    times: np.ndarray
    energy: np.ndarray
    energy_centered: np.ndarray
    snapshots: tuple[tuple[float, Grid2D], ...]


def _pml_profile(n_inner: int, P: int, d: float, c_ref: float, reflection: float = 1e-6, order: int = 2):
    """Damping at cell centres and at faces for one axis padded by P cells each side."""
    if P == 0:
        return np.zeros(n_inner), np.zeros(n_inner + 1)
    width = P * d
    smax = -(order + 1) * c_ref * np.log(reflection) / (2 * width)
    n = n_inner + 2 * P
    centers = (np.arange(n) + 0.5) * d
    faces = np.arange(n + 1) * d
    lo, hi = P * d, (P + n_inner) * d

    def depth(z):
        return np.clip(np.maximum(lo - z, z - hi) / width, 0, 1)

    return smax * depth(centers) ** order, smax * depth(faces) ** order


def _side_slices(side: str, n: int, P: int, trim: int):
    """Index of the last interior cell row, its outward neighbour, and the tangential range."""
    tang = slice(P + trim, P + n - trim)
    if side == "right":
        return (P + n - 1, tang), (P + n, tang), False
    if side == "left":
        return (P, tang), (P - 1, tang), False
    if side == "top":
        return (tang, P + n - 1), (tang, P + n), True
    if side == "bottom":
        return (tang, P), (tang, P - 1), True
    raise ValueError(f"side must be one of {SIDES}")


def solve_wave(
    f: Grid2D,
    speed: SpeedField,
    model: str = "neumann_reflect",
    T: float = 4.0,
    cfl: float = 0.5,
    side: str = "right",
    pml_cells: int = 20,
    trim: int = 3,
    snapshot_times=(),
) -> WaveResult:
    """Evolve u_tt = c^2 Lap u from (f, 0) and record u on one side of the square.

    Staggered second-order scheme: u at cell centres and integer steps, fluxes
    grad u on faces at half steps.  In the interior this is the standard
    five-point leapfrog.  ``neumann_reflect`` sets the boundary-face fluxes to
    zero (equivalent to mirrored ghost cells); ``free_space`` surrounds the
    square with a split-field perfectly matched layer.
    """
    if model not in ("free_space", "neumann_reflect"):
        raise ValueError("model must be 'free_space' or 'neumann_reflect'")
    if not 0 < cfl <= 0.5:
        raise ValueError("cfl must lie in (0, 0.5]")
    if side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}")
    n1, n2 = f.n
    d1, d2 = f.spacing
    if n1 != n2 or not np.isclose(d1, d2):
        raise ValueError("the wave solver needs a square grid with equal spacing")
    n, d = n1, d1
    L = n * d / 2
    if not np.allclose(f.origin, (-L + d / 2, -L + d / 2)):
        raise ValueError("f must live on a cell-centred grid of the square (see tat_grid)")
    if not speed.half_width >= L - 1e-12:
        raise ValueError("speed field must cover the square")
    P = pml_cells if model == "free_space" else 0
    if model == "free_space":
        if P < 20:
            raise ValueError("the absorbing layer needs at least 20 cells")
        if np.abs(f.values).max() > 0 and boundary_mass_fraction(f, cells=2) > 1e-9:
            raise ValueError("phantom touches the absorbing layer")

    N = n + 2 * P
    centers = -L - P * d + (np.arange(N) + 0.5) * d
    X1, X2 = np.meshgrid(centers, centers, indexing="ij")
    c2 = speed(X1, X2) ** 2
    c_top = float(np.sqrt(c2.max()))
    dt_max = cfl * d / c_top
    steps = int(np.ceil(T / dt_max))
    dt = T / steps

    sc, sf = _pml_profile(n, P, d, c_top)
    ac, bc = (1 - sc * dt / 2) / (1 + sc * dt / 2), dt / (1 + sc * dt / 2)
    af, bf = (1 - sf * dt / 2) / (1 + sf * dt / 2), dt / (1 + sf * dt / 2)

    u0 = np.zeros((N, N))
    u0[P : P + n, P : P + n] = f.values
    ux = u0.copy()
    uy = np.zeros_like(u0)
    v1 = np.zeros((N + 1, N))
    v2 = np.zeros((N, N + 1))
    # Half step from rest: v^{1/2} = (dt/2) grad u^0.
    v1[1:-1] = 0.5 * dt * np.diff(u0, axis=0) / d
    v2[:, 1:-1] = 0.5 * dt * np.diff(u0, axis=1) / d

    inner, outer, transpose = _side_slices(side, n, P, trim)
    tang = centers[P + trim : P + n - trim]
    interior = (slice(P, P + n), slice(P, P + n))
    w = 1.0 / c2[interior]

    def boundary_value(u):
        if model == "neumann_reflect":
            return u[inner]
        return 0.5 * (u[inner] + u[outer])

    def grad_pair(a, b):
        # Inner product of face gradients inside the square only.
        a_in, b_in = a[interior], b[interior]
        g1 = np.diff(a_in, axis=0) * np.diff(b_in, axis=0)
        g2 = np.diff(a_in, axis=1) * np.diff(b_in, axis=1)
        return float(g1.sum() + g2.sum())

    trace = np.empty((steps, tang.size))
    energy = np.empty(steps)
    energy_c = np.empty(steps)
    snaps = []
    snap_steps = {int(round(ts / dt)): ts for ts in snapshot_times}
    u_prev = None
    u = u0
    for k in range(steps):
        trace[k] = boundary_value(u)
        if k in snap_steps:
            snaps.append((k * dt, Grid2D((-L + d / 2,) * 2, (2 * L,) * 2, (n, n), u[interior].copy(), f.h)))
        ux = ac[:, None] * ux + bc[:, None] * c2 * np.diff(v1, axis=0) / d
        uy = ac[None, :] * uy + bc[None, :] * c2 * np.diff(v2, axis=1) / d
        u_next = ux + uy
        v1[1:-1] = af[1:-1, None] * v1[1:-1] + bf[1:-1, None] * np.diff(u_next, axis=0) / d
        v2[:, 1:-1] = af[None, 1:-1] * v2[:, 1:-1] + bf[None, 1:-1] * np.diff(u_next, axis=1) / d
        vel = (u_next[interior] - u[interior]) / dt
        energy[k] = 0.5 * d * d * float(np.sum(w * vel * vel)) + 0.5 * grad_pair(u_next, u)
        if u_prev is None:
            vc = np.zeros((n, n))
        else:
            vc = (u_next[interior] - u_prev[interior]) / (2 * dt)
        energy_c[k] = 0.5 * d * d * float(np.sum(w * vc * vc)) + 0.5 * grad_pair(u, u)
        u_prev, u = u, u_next
        if not np.isfinite(u).all():
            raise FloatingPointError("wave solver diverged")

    if side in ("right", "left"):
        fixed = L if side == "right" else -L
        seg = ((fixed, float(tang[0])), (fixed, float(tang[-1])))
    else:
        fixed = L if side == "top" else -L
        seg = ((float(tang[0]), fixed), (float(tang[-1]), fixed))
    tgrid = Grid2D((0.0, float(tang[0])), (T, tang.size * d), (steps, tang.size), trace, f.h)
    times = (np.arange(steps) + 0.5) * dt
    # the centred energy at step 0 uses the exact rest state
    return WaveResult(BoundaryTrace(tgrid, side, T, seg), dt, times, energy, energy_c, tuple(snaps))


def relative_drift(series: np.ndarray) -> float:
    """max |E - E_0| / E_0."""
    e0 = float(series[0])
    if e0 == 0:
        return 0.0 if np.all(series == 0) else np.inf
    return float(np.abs(series - e0).max() / abs(e0))


def first_return_time(source_center, source_radius: float, side: str, half_width: float = 1.0, y_range=None) -> float:
    """Earliest arrival on the observed side of a wave reflected off any other side.

    Image sources mirrored in the three other sides; ``y_range`` restricts the
    observed points (defaults to the full side).
    """
    x0 = np.asarray(source_center, float)
    L = half_width
    ys = np.linspace(*(y_range or (-L, L)), 201)
    if side == "right":
        pts = np.stack([np.full_like(ys, L), ys], axis=-1)
    elif side == "left":
        pts = np.stack([np.full_like(ys, -L), ys], axis=-1)
    elif side == "top":
        pts = np.stack([ys, np.full_like(ys, L)], axis=-1)
    else:
        pts = np.stack([ys, np.full_like(ys, -L)], axis=-1)
    images = {
        "right": np.array([2 * L - x0[0], x0[1]]),
        "left": np.array([-2 * L - x0[0], x0[1]]),
        "top": np.array([x0[0], 2 * L - x0[1]]),
        "bottom": np.array([x0[0], -2 * L - x0[1]]),
    }
    best = np.inf
    for name, img in images.items():
        if name == side:
            continue
        best = min(best, float(np.linalg.norm(pts - img, axis=-1).min()))
    return best - source_radius


# --------------------------------------------------------------------------
# Frequency analysis of traces
# --------------------------------------------------------------------------


def _tukey(n: int, frac: float) -> np.ndarray:
    if frac <= 0:
        return np.ones(n)
    m = max(1, int(round(frac * n / 2)))
    w = np.ones(n)
    ramp = 0.5 - 0.5 * np.cos(np.pi * (np.arange(m) + 0.5) / m)
    w[:m] = ramp
    w[n - m :] = ramp[::-1]
    return w


def tapered_spectrum(grid: Grid2D, taper: float = 0.1):
    """Semiclassical frequencies (k1, k2) and |F_h|^2 of a Tukey-tapered grid function."""
    v = grid.values * _tukey(grid.n[0], taper)[:, None] * _tukey(grid.n[1], taper)[None, :]
    F = np.fft.fft2(v)
    d1, d2 = grid.spacing
    k1 = grid.h * 2 * np.pi * np.fft.fftfreq(grid.n[0], d=d1)
    k2 = grid.h * 2 * np.pi * np.fft.fftfreq(grid.n[1], d=d2)
    K1, K2 = np.meshgrid(k1, k2, indexing="ij")
    return K1, K2, np.abs(F) ** 2


def cone_check(trace: BoundaryTrace, B: float, M: float, margin: float = 0.1, taper: float = 0.1) -> float:
    """Spectral energy fraction of the trace outside {|eta| <= |tau| <= B/M}, both bounds dilated by ``margin``."""
    tau, eta, E = tapered_spectrum(trace.grid, taper)
    total = E.sum()
    if total == 0:
        return 0.0
    inside = (np.abs(eta) <= (1 + margin) * np.abs(tau)) & (np.abs(tau) <= (1 + margin) * B / M)
    return float(E[~inside].sum() / total)


def max_frequency(grid: Grid2D, eps: float = 1e-3, taper: float = 0.1) -> float:
    """Smallest rho with at most ``eps`` of the spectral energy outside the box max(|k1|, |k2|) <= rho."""
    K1, K2, E = tapered_spectrum(grid, taper)
    total = E.sum()
    if total == 0:
        return 0.0
    r = np.maximum(np.abs(K1), np.abs(K2)).ravel()
    order = np.argsort(r)[::-1]
    tail = np.cumsum(E.ravel()[order]) / total
    # tail[j] = energy at radii >= r[order[j]]
    j = np.searchsorted(tail, eps, side="right")
    return float(r[order[min(j, r.size - 1)]])


def boundary_sampling_plan(B: float, speed: SpeedField, h: float, safety: float = 0.9) -> tuple[float, float]:
    """(dt, dy) = safety * pi h M / B with M = 1/c_max, for a flat side parameterized by arclength."""
    if B <= 0 or h <= 0:
        raise ValueError("B and h must be positive")
    step = safety * np.pi * h * speed.M / B
    return step, step


# --------------------------------------------------------------------------
# Rays
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RayExit:
    time: float
    point: np.ndarray
    xi: np.ndarray
    side: str
    y: float
    tau: float
    eta: float
    hamiltonian_drift: float
    path: np.ndarray | None = None


def _ray_rhs(state: np.ndarray, speed: SpeedField) -> np.ndarray:
    x1, x2, p1, p2 = state
    c = float(speed.evaluate(x1, x2))
    if speed.gradient is not None:
        g1, g2 = speed.gradient(x1, x2)
    else:
        g1, g2 = speed.grad(x1, x2)
    n = np.hypot(p1, p2)
    return np.array([c * p1 / n, c * p2 / n, -n * float(g1), -n * float(g2)])


def _rk4(state, dt, speed):
    k1 = _ray_rhs(state, speed)
    k2 = _ray_rhs(state + 0.5 * dt * k1, speed)
    k3 = _ray_rhs(state + 0.5 * dt * k2, speed)
    k4 = _ray_rhs(state + dt * k3, speed)
    return state + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def trace_ray(
    x0,
    xi0,
    speed: SpeedField,
    half_width: float = 1.0,
    dt: float = 1e-3,
    t_max: float = 50.0,
    tol: float = 1e-10,
    keep_path: bool = False,
) -> RayExit:
    """Integrate the ray from (x0, xi0) until it leaves the square.

    RK4 with fixed step ``dt``; the exit is located by bisecting the last
    step until the distance to the boundary is below ``tol``.  ``tau`` is
    ``-c|xi|`` and ``eta`` the component of xi along the counter-clockwise
    tangent of the exit side.
    """
    state = np.array([*np.asarray(x0, float), *np.asarray(xi0, float)])
    L = half_width
    if np.max(np.abs(state[:2])) >= L:
        raise ValueError("launch point must lie inside the square")
    if np.hypot(state[2], state[3]) == 0:
        raise ValueError("xi0 must be nonzero")
    h0 = float(speed(state[0], state[1]) * np.hypot(state[2], state[3]))

    def gap(s):
        return float(np.max(np.abs(s[:2]))) - L

    t = 0.0
    path = [state[:2].copy()] if keep_path else None
    while True:
        nxt = _rk4(state, dt, speed)
        if gap(nxt) >= 0:
            lo, hi = 0.0, 1.0
            trial = nxt
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                trial = _rk4(state, mid * dt, speed)
                g = gap(trial)
                if abs(g) <= tol:
                    break
                if g > 0:
                    hi = mid
                else:
                    lo = mid
            t += mid * dt
            state = trial
            break
        state = nxt
        t += dt
        if keep_path:
            path.append(state[:2].copy())
        if t > t_max:
            raise TrappedRayError(f"ray did not exit within t_max = {t_max}")

    x, p = state[:2], state[2:]
    i = int(np.argmax(np.abs(x)))
    if i == 0:
        side = "right" if x[0] > 0 else "left"
        tangent = np.array([0.0, 1.0]) if x[0] > 0 else np.array([0.0, -1.0])
        y = float(x[1])
    else:
        side = "top" if x[1] > 0 else "bottom"
        tangent = np.array([-1.0, 0.0]) if x[1] > 0 else np.array([1.0, 0.0])
        y = float(x[0])
    hx = float(speed(x[0], x[1]) * np.hypot(*p))
    if keep_path:
        path.append(x.copy())
    return RayExit(
        time=t,
        point=x.copy(),
        xi=p.copy(),
        side=side,
        y=y,
        tau=-hx,
        eta=float(p @ tangent),
        hamiltonian_drift=abs(hx * hx - h0 * h0) / (h0 * h0),
        path=np.array(path) if keep_path else None,
    )


def tat_canonical(x, xi, speed: SpeedField, sign: int = +1, **kw) -> tuple[float, float, float, float, str]:
    """(t, y, tau, eta, side) of the branch that follows sign * xi."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    ex = trace_ray(x, sign * np.asarray(xi, float), speed, **kw)
    return sign * ex.time, ex.y, sign * ex.tau, sign * ex.eta, ex.side
