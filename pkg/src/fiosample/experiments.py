"""Reproducible numerical experiments shared by the command line, the scripts and the tests.

Each runner returns an ``Experiment``: a JSON-ready report and the images it
measured.  Defaults reproduce the published set-ups.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .grid_core import Grid2D, PhantomSpec, centered_grid, make_grid, render_phantom, sc_fourier
from .lattice_sampling import (
    SampleSet,
    WindowSpec,
    lattice_point_count,
    nyquist_steps,
    parseval_residual,
    rect_area,
    rectangular_lattice,
    reconstruct,
    sample,
)
from .radon_fanbeam import (
    FanGeometry,
    blur_fan_sinogram,
    blur_symbol_fan,
    fan_counts,
    fan_fbp,
    fan_forward,
    predicted_kernel,
)
from .radon_parallel import (
    ParallelGeometry,
    alias_artifact_predict,
    artifact_displacement,
    averaged_symbol,
    blur_sinogram,
    directional_envelope,
    fbp_invert,
    forward,
    parallel_counts,
    plan_point_count,
    strip_sampling_plan,
    undersample,
)
from .tat_sim import SpeedField, cone_check, fast_lens, max_frequency, relative_drift, slow_lens, solve_wave, tat_grid

LANCZOS3 = WindowSpec("lanczos", a=3)


@dataclass
class Experiment:
    report: dict
    images: dict[str, Grid2D] = field(default_factory=dict)


def _f(v) -> float:
    return float(np.round(float(v), 12))


# --------------------------------------------------------------------------
# Counts
# --------------------------------------------------------------------------


def count_table(R: float = 1.0, B: float = 1.0, h: float = 0.01, s: float = 1.0, strips=(1, 2, 4, 8)) -> dict:
    par = parallel_counts(R, B, h, s)
    fan = fan_counts(R, B, h, s)
    row = {
        "R": R,
        "B": B,
        "h": h,
        "s": s,
        "N_f": _f(par["N_f"]),
        "weyl_bound": _f(par["min_data"]),
        "parallel_rectangular": par["rectangular"],
        "parallel_efficient": par["efficient"],
        "fan_rectangular": fan["rectangular"],
        "fan_efficient": fan["efficient"],
        "parallel_rectangular_over_2Nf": _f(par["rectangular_ratio"]),
        "parallel_efficient_over_2Nf": _f(par["efficient_ratio"]),
        "fan_rectangular_over_parallel_rectangular": _f(fan["rectangular_over_parallel"]),
        "fan_efficient_over_Nf": _f(fan["efficient_over_N_f"]),
    }
    for k in strips:
        total = plan_point_count(strip_sampling_plan(R, B, k, h=h, s=s))
        row[f"strips_{k}"] = total
        row[f"strips_{k}_over_2Nf"] = _f(total / par["min_data"])
    return row


def weyl_box(h: float, B: float = 1.0, half_width: float = 1.0, s: float = 1.0) -> dict:
    """Lattice count against the phase volume of [-L, L)^2 x [-B, B]^2 at the Nyquist lattice."""
    lat = rectangular_lattice(nyquist_steps((B, B)), s, h)
    dom = ((-half_width, half_width), (-half_width, half_width))
    count = lattice_point_count(lat, dom)
    ratio = count * lat.cell_area / rect_area(dom)
    return {"h": h, "count": count, "ratio": _f(ratio)}


# --------------------------------------------------------------------------
# Sampling identity
# --------------------------------------------------------------------------


def sampling_identity(
    h: float,
    B: float = 1.5,
    s: float = 0.8,
    delta: float = 0.8,
    x0=(0.1, -0.05),
    xi0=(0.0, 1.0),
    n_target: int = 128,
    n_dense: int = 1024,
) -> dict:
    """Reconstruction error and Parseval residual of a coherent state sampled at s times the Nyquist step."""
    spec = PhantomSpec("coherent_state", {"x0": tuple(x0), "xi0": tuple(xi0)})
    lat = rectangular_lattice(nyquist_steps((B, B)), s, h)
    samples = sample(spec, lat, ((-1, 1), (-1, 1)))
    tgt = make_grid((-1, -1), (2, 2), (n_target, n_target), h)
    ref = spec.evaluate(*tgt.mesh(), h)
    rec = reconstruct(samples, WindowSpec("trapezoid", delta), tgt).values
    dense = spec.evaluate(*make_grid((-1, -1), (2, 2), (n_dense, n_dense), h).mesh(), h)
    norm = float(np.sqrt(np.sum(dense**2) * (2.0 / n_dense) ** 2))
    return {
        "h": h,
        "samples": len(samples),
        "reconstruction_error": float(np.linalg.norm(rec - ref) / np.linalg.norm(ref)),
        "parseval_residual": parseval_residual(samples, norm),
    }


# --------------------------------------------------------------------------
# Classical aliasing with two coherent states
# --------------------------------------------------------------------------


def _local_peaks(mag: np.ndarray, rel: float) -> list[tuple[int, int]]:
    footprint = np.ones((5, 5), bool)
    is_max = (ndimage.maximum_filter(mag, footprint=footprint, mode="wrap") == mag) & (mag >= rel * mag.max())
    return [tuple(int(v) for v in ij) for ij in np.argwhere(is_max)]


def two_state_alias(
    h: float = 0.01,
    n_fine: int = 80,
    n_coarse: int = 40,
    half_width: float = 1.0,
    small=((-0.5, -0.5), (0.0, 1.0), 0.01),
    large=((0.4, 0.4), (1.0, 0.0), 0.04),
    window: WindowSpec | str = LANCZOS3,
) -> Experiment:
    """Two coherent states (x0, xi0, own h) sampled finely and coarsely on the periodic square.

    The coarse image is interpolated back onto the fine grid with ``window``
    (or ``"shannon"``: the periodic band-limited interpolant).  Spectral peaks
    of the fine image outside the coarse Nyquist box are followed to the
    coarse image and their displacement compared with the reciprocal lattice.
    """
    if n_fine % n_coarse:
        raise ValueError("the coarse grid must be a subgrid of the fine one")
    L = 2 * half_width
    fine = centered_grid(half_width, n_fine, h)
    X1, X2 = fine.mesh()

    def state(x0, xi0, hh):
        return np.cos((X1 * xi0[0] + X2 * xi0[1]) / hh) * np.exp(-((X1 - x0[0]) ** 2 + (X2 - x0[1]) ** 2) / (2 * hh))

    f_o = fine.with_values(state(*small) + state(*large))
    m = n_fine // n_coarse
    coarse_vals = f_o.values[::m, ::m]
    step = L / n_coarse
    s = step / h
    if isinstance(window, str):
        if window != "shannon":
            raise ValueError("window must be a WindowSpec or 'shannon'")
        F = np.fft.fft2(coarse_vals)
        G = np.zeros((n_fine, n_fine), complex)
        k = np.fft.fftfreq(n_coarse, 1.0 / n_coarse).astype(int)
        G[np.ix_(k % n_fine, k % n_fine)] = F
        up = np.fft.ifft2(G).real * m * m
    else:
        lat = rectangular_lattice((1.0, 1.0), s, h, offset=fine.origin)
        K1, K2 = np.meshgrid(np.arange(n_coarse), np.arange(n_coarse), indexing="ij")
        S = SampleSet(lat, np.column_stack([K1.ravel(), K2.ravel()]), coarse_vals.ravel())
        up = reconstruct(S, window, fine).values
    f_u = fine.with_values(up)

    spec_o, spec_u = sc_fourier(f_o), sc_fourier(f_u)
    mag_o, mag_u = np.abs(spec_o.coefficients), np.abs(spec_u.coefficients)
    k1, k2 = spec_o.indices()
    bin_xi = spec_o.xi_step[0]
    period = 2 * np.pi / s
    period_bins = period / bin_xi
    nyq_bins = np.pi / s / bin_xi
    peaks = []
    for i, j in _local_peaks(mag_o, 0.1):
        kb = np.array([k1[i], k2[j]])
        outside = np.abs(kb) > nyq_bins
        shift = -np.round(kb / period_bins) * outside
        pred = kb + shift * period_bins
        # argmax of the coarse image's spectrum within +-3 bins of the prediction
        c = np.round(pred).astype(int) - np.array([k1[0], k2[0]])
        win = 3
        i0, j0 = max(c[0] - win, 0), max(c[1] - win, 0)
        patch = mag_u[i0 : c[0] + win + 1, j0 : c[1] + win + 1]
        di, dj = np.unravel_index(int(np.argmax(patch)), patch.shape)
        best = (i0 + di, j0 + dj)
        meas = np.array([k1[best[0]], k2[best[1]]])
        peaks.append(
            {
                "original_bin": kb.tolist(),
                "aliased": bool(outside.any()),
                "reciprocal_shift": (shift * period).tolist(),
                "predicted_bin": np.round(pred).astype(int).tolist(),
                "measured_bin": meas.tolist(),
                "measured_shift": ((meas - kb) * bin_xi).tolist(),
                "bin_error": (meas - np.round(pred)).astype(int).tolist(),
            }
        )
    peaks.sort(key=lambda p: p["original_bin"])
    report = {
        "h": h,
        "fine_points": n_fine + 1,
        "coarse_points": n_coarse + 1,
        "s_coarse": s,
        "reciprocal_vector": period,
        "reciprocal_vector_bins": period_bins,
        "bin_width": bin_xi,
        "nyquist_half_width": np.pi / s,
        "peaks": peaks,
    }
    images = {
        "original": f_o,
        "undersampled": f_u,
        "spectrum_original": _spectrum_grid(spec_o, mag_o, h),
        "spectrum_undersampled": _spectrum_grid(spec_u, mag_u, h),
    }
    return Experiment(report, images)


def _spectrum_grid(spec, mag, h) -> Grid2D:
    a1, a2 = spec.axes()
    step = spec.xi_step
    return Grid2D((a1[0], a2[0]), (step[0] * spec.n[0], step[1] * spec.n[1]), spec.n, mag, h)


# --------------------------------------------------------------------------
# Radon aliasing
# --------------------------------------------------------------------------


def _coherent(x0, xi0, grid: Grid2D, R: float) -> Grid2D:
    return render_phantom(PhantomSpec("coherent_state", {"x0": tuple(x0), "xi0": tuple(xi0)}, support_radius=R), grid)


def radon_angular_alias(
    x0=(0.75, 0.0),
    xi0=(0.0, 1.0),
    h: float = 0.01,
    half_width: float = 1.25,
    n: int = 256,
    n_phi: int = 720,
    m_phi: int = 6,
    interpolation: WindowSpec | str = "fourier",
) -> Experiment:
    """Coherent state reconstructed from angularly undersampled parallel data.

    Returns the measured envelope displacement of the artifact next to the
    admissible predicted images for k = -1, 0, 1.
    """
    g = centered_grid(half_width, n, h)
    f = _coherent(x0, xi0, g, half_width)
    sino = forward(f, ParallelGeometry(n_phi, n, half_width), R=half_width)
    ref = fbp_invert(sino, target=g)
    rec = fbp_invert(undersample(sino, m_phi=m_phi, window=interpolation), target=g)
    s_phi = (2 * np.pi / n_phi * m_phi) / h
    s_p = sino.grid.spacing[1] / h
    disp, ratio = artifact_displacement(rec, ref, xi0)
    predicted = {}
    for k in (-1, 0, 1):
        imgs = alias_artifact_predict(x0, xi0, s_phi, s_p, k, "angular")
        predicted[str(k)] = {str(sg): (None if v is None else v.x.tolist()) for sg, v in imgs.items()}
    pred_disp = None
    for k in (-1, 1):
        for v in predicted[str(k)].values():
            if v is not None and np.max(np.abs(v)) < half_width:
                pred_disp = (np.asarray(v) - np.asarray(x0)).tolist()
    spacing = g.spacing[0]
    err = None if pred_disp is None else float(np.linalg.norm(np.asarray(disp) - np.asarray(pred_disp)) / spacing)
    report = {
        "x0": list(x0),
        "xi0": list(xi0),
        "h": h,
        "angular_step_deg": float(np.rad2deg(2 * np.pi / n_phi * m_phi)),
        "s_phi": s_phi,
        "grid_spacing": spacing,
        "predicted": predicted,
        "predicted_displacement": pred_disp,
        "measured_displacement": np.asarray(disp).tolist(),
        "artifact_energy_ratio": ratio,
        "error_in_spacings": err,
        "interpolation": interpolation if isinstance(interpolation, str) else f"{interpolation.kind}{interpolation.a}",
    }
    return Experiment(report, {"phantom": f, "reference": ref, "undersampled": rec, "sinogram": sino.grid})


def radon_radial_alias(
    centers=((0.1, 0.0), (0.7, 0.0)),
    xi0=(0.0, 1.0),
    h: float = 0.01,
    half_width: float = 1.25,
    n: int = 256,
    n_phi: int = 720,
    m_p: int = 4,
    probe_radius: float = 0.15,
    box: float = 1.0,
) -> Experiment:
    """Sum of coherent states reconstructed from data undersampled in p.

    For each pattern the admissible images are predicted; an image inside the
    square [-box, box]^2 should carry energy, one outside leaves nothing behind.
    """
    g = centered_grid(half_width, n, h)
    f = g.with_values(sum(_coherent(c, xi0, g, half_width).values for c in centers))
    sino = forward(f, ParallelGeometry(n_phi, n, half_width), R=half_width)
    ref = fbp_invert(sino, target=g)
    rec = fbp_invert(undersample(sino, m_p=m_p), target=g)
    s_phi = (2 * np.pi / n_phi) / h
    s_p = m_p * sino.grid.spacing[1] / h
    X1, X2 = g.mesh()
    env = directional_envelope(rec, xi0)
    env_ref = directional_envelope(ref, xi0)
    per_pattern = (env_ref**2).sum() / len(centers)

    def energy(c, env_):
        m = (X1 - c[0]) ** 2 + (X2 - c[1]) ** 2 < probe_radius**2
        return float((env_[m] ** 2).sum() / per_pattern)

    patterns = []
    survivors = []
    for c in centers:
        images = []
        for k in (-1, 1):
            for sg, v in alias_artifact_predict(c, xi0, s_phi, s_p, k, "radial").items():
                if v is not None:
                    inside = bool(np.max(np.abs(v.x)) < box)
                    images.append({"k": k, "branch": sg, "x": v.x.tolist(), "inside": inside})
                    if inside:
                        survivors.append(v.x)
        patterns.append(
            {
                "center": list(c),
                "original_admissible": any(v is not None for v in alias_artifact_predict(c, xi0, s_phi, s_p, 0, "radial").values()),
                "original_energy": energy(c, env),
                "images": images,
                "image_energy": [energy(im["x"], env) if im["inside"] else None for im in images],
            }
        )
    inside_box = (np.abs(X1) < box) & (np.abs(X2) < box)
    keep = inside_box.copy()
    for v in survivors:
        keep &= (X1 - v[0]) ** 2 + (X2 - v[1]) ** 2 >= probe_radius**2
    leftover = float((env[keep] ** 2).sum() / per_pattern)
    report = {
        "h": h,
        "s_p": s_p,
        "p_shift": 2 * np.pi / s_p,
        "patterns": patterns,
        "energy_elsewhere_in_box": leftover,
    }
    return Experiment(report, {"phantom": f, "reference": ref, "undersampled": rec})


# --------------------------------------------------------------------------
# Averaged data
# --------------------------------------------------------------------------


def p_average(
    a: float = 12.5,
    h: float = 0.01,
    x0=(0.3, 0.2),
    width: float = 0.02,
    n: int = 256,
    n_phi: int = 720,
) -> Experiment:
    """Point response of data averaged in p against the predicted isotropic kernel."""
    g = centered_grid(1.0, n, h)
    spec = PhantomSpec("gaussian_sum", {"centers": [tuple(x0)], "widths": [width], "amplitudes": [1.0]})
    f = render_phantom(spec, g)
    sino = forward(f, ParallelGeometry(n_phi, n, 1.0), R=1.0)
    rec = fbp_invert(blur_sinogram(sino, a=a), target=g)
    kernel = predicted_kernel(averaged_symbol(a, 0.0), x0, g)
    pred = g.with_values(
        np.real(np.fft.ifft2(np.fft.fft2(f.values) * np.fft.fft2(np.fft.ifftshift(kernel.values)))) * g.spacing[0] * g.spacing[1]
    )
    X1, X2 = g.mesh()
    w = np.clip(rec.values, 0, None)
    c = np.array([(w * X1).sum(), (w * X2).sum()]) / w.sum()
    m11 = (w * (X1 - c[0]) ** 2).sum() / w.sum()
    m22 = (w * (X2 - c[1]) ** 2).sum() / w.sum()
    m12 = (w * (X1 - c[0]) * (X2 - c[1])).sum() / w.sum()
    ev = np.linalg.eigvalsh(np.array([[m11, m12], [m12, m22]]))
    report = {
        "a": a,
        "h": h,
        "x0": list(x0),
        "l2_discrepancy": float(np.linalg.norm(rec.values - pred.values) / np.linalg.norm(pred.values)),
        "anisotropy": float(ev[1] / ev[0] - 1),
    }
    return Experiment(report, {"measured": rec, "predicted": pred, "kernel": kernel})


def _profile(img: Grid2D, x0, e, offsets):
    pts = np.asarray(x0)[:, None] + np.asarray(e)[:, None] * offsets[None, :]
    idx = [(pts[0] - img.origin[0]) / img.spacing[0], (pts[1] - img.origin[1]) / img.spacing[1]]
    v = ndimage.map_coordinates(img.values, idx, order=3)
    return v / v[0]


def fan_beta_average(
    b: float = 50.0,
    R: float = 1.45,
    h: float = 0.01,
    radius_fraction: float = 0.88,
    width: float = 0.012,
    n: int = 256,
    n_fan: int = 720,
    array: int = 5,
) -> Experiment:
    """Point array averaged in beta; profiles of the corner response along the radial and circular directions.

    The ``array`` x ``array`` points fill the square whose upper-right corner
    sits at ``radius_fraction * R`` on the diagonal.
    """
    er = np.array([1.0, 1.0]) / np.sqrt(2)
    ec = np.array([-er[1], er[0]])
    x0 = radius_fraction * R * er
    g = centered_grid(1.0, n, h)
    ticks = np.linspace(-x0[0], x0[0], array) if array > 1 else np.array([x0[0]])
    centers = [(a, b) for a in ticks for b in ticks]
    params = {"centers": centers, "widths": [width] * len(centers), "amplitudes": [1.0] * len(centers)}
    spec = PhantomSpec("gaussian_sum", params, support_radius=R)
    f = g.with_values(spec.evaluate(*g.mesh(), h))
    sino = fan_forward(f, FanGeometry(n_fan, n_fan, R))
    rec = fan_fbp(blur_fan_sinogram(sino, 0.0, b), target=g)
    rec0 = fan_fbp(sino, target=g)
    offsets = np.arange(0, 40, 4) * (0.6 / 128)
    kgrid = centered_grid(0.3, 128, h)
    # the predicted kernel is rotation covariant: evaluate on the first axis and read the rotated directions
    kernel = predicted_kernel(blur_symbol_fan(0.0, b, R=R), [radius_fraction * R, 0.0], kgrid)
    report = {
        "b": b,
        "R": R,
        "x0": x0.tolist(),
        "points": len(centers),
        "offsets": offsets.tolist(),
        "measured_radial": _profile(rec, x0, er, offsets).tolist(),
        "measured_circular": _profile(rec, x0, ec, offsets).tolist(),
        "unblurred_circular": _profile(rec0, x0, ec, offsets).tolist(),
        "predicted_radial": _profile(kernel, (0.0, 0.0), (1.0, 0.0), offsets).tolist(),
        "predicted_circular": _profile(kernel, (0.0, 0.0), (0.0, 1.0), offsets).tolist(),
    }
    return Experiment(report, {"measured": rec, "unblurred": rec0, "kernel": kernel})


def fan_sign_pattern(report: dict, floor: float = 0.01) -> dict:
    """Radial profile free of negative lobes, circular profile with one deeper than ``floor``, radial wider than circular."""
    rad = np.asarray(report["measured_radial"])
    circ = np.asarray(report["measured_circular"])
    sharp = np.asarray(report["unblurred_circular"])

    def half_width(p):
        below = np.nonzero(p < 0.5)[0]
        return int(below[0]) if below.size else len(p)

    out = {
        "radial_min": float(rad.min()),
        "circular_min": float(circ.min()),
        "unblurred_circular_min": float(sharp.min()),
        "radial_half_width": half_width(rad),
        "circular_half_width": half_width(circ),
    }
    out["ok"] = bool(
        out["radial_min"] > -floor
        and out["circular_min"] < -floor
        and out["unblurred_circular_min"] > -floor
        and out["radial_half_width"] > out["circular_half_width"]
    )
    return out


def _second_moments(img: Grid2D, x0, radius: float) -> np.ndarray:
    X1, X2 = img.mesh()
    d1, d2 = X1 - x0[0], X2 - x0[1]
    w = np.where(d1**2 + d2**2 < radius**2, np.clip(img.values, 0, None), 0.0)
    w = w / w.sum()
    return np.array([[(w * d1 * d1).sum(), (w * d1 * d2).sum()], [(w * d1 * d2).sum(), (w * d2 * d2).sum()]])


def alpha_average(
    a: float = 5.0,
    R: float = 1.45,
    h: float = 0.01,
    points=((0.0, 0.0), (0.85, 0.0)),
    width: float = 0.012,
    n: int = 256,
    n_fan: int = 720,
    probe_radius: float = 0.15,
) -> Experiment:
    """Point responses of fan data averaged in alpha at the centre and near the boundary.

    Reports the radial and tangential second moments of each measured
    response next to the symbol at unit radial and tangential frequency.
    """
    g = centered_grid(1.0, n, h)
    spec = PhantomSpec("gaussian_sum", {"centers": [tuple(p) for p in points], "widths": [width] * len(points), "amplitudes": [1.0] * len(points)}, R)
    f = g.with_values(spec.evaluate(*g.mesh(), h))
    sino = fan_forward(f, FanGeometry(n_fan, n_fan, R))
    rec = fan_fbp(blur_fan_sinogram(sino, a, 0.0), target=g)
    rec0 = fan_fbp(sino, target=g)
    symbol = blur_symbol_fan(a, 0.0, R=R)
    rows = []
    for p in points:
        p = np.asarray(p, float)
        r = np.linalg.norm(p)
        e_r = p / r if r > 0 else np.array([1.0, 0.0])
        e_t = np.array([-e_r[1], e_r[0]])
        M = _second_moments(rec, p, probe_radius)
        M0 = _second_moments(rec0, p, probe_radius)
        rows.append(
            {
                "x": p.tolist(),
                "radial_variance": float(e_r @ M @ e_r),
                "tangential_variance": float(e_t @ M @ e_t),
                "unblurred_variance": float(np.trace(M0) / 2),
                "symbol_radial_detail": float(symbol(p, e_r)),
                "symbol_tangential_detail": float(symbol(p, e_t)),
            }
        )
    return Experiment({"a": a, "R": R, "h": h, "points": rows}, {"measured": rec, "unblurred": rec0})


# --------------------------------------------------------------------------
# Thermoacoustics
# --------------------------------------------------------------------------


def lens_phantom(grid: Grid2D) -> Grid2D:
    X1, X2 = grid.mesh()
    return grid.with_values(np.exp(-2 * (X1**2 + X2**2)) * np.sin((X1 - 0.3) / 0.02))


def tat_lens(which: str = "slow", n: int = 256, h: float = 0.02, T: float = 4.0, phantom: Grid2D | None = None) -> Experiment:
    """Reflecting-model trace on the right side for one lens speed."""
    speed = {"slow": slow_lens, "fast": fast_lens}[which]() if isinstance(which, str) else which
    g = tat_grid(n, h)
    f = lens_phantom(g) if phantom is None else phantom
    res = solve_wave(f, speed, "neumann_reflect", T=T)
    B = max_frequency(f)
    mt = max_frequency(res.trace.grid)
    report = {
        "speed": which if isinstance(which, str) else "custom",
        "c_min": speed.c_min,
        "c_max": speed.c_max,
        "h": h,
        "T": T,
        "dt": res.dt,
        "phantom_max_frequency": B,
        "trace_max_frequency": mt,
        "frequency_ratio": (mt / B) if B > 0 else None,
        "cone_fraction": cone_check(res.trace, B, speed.M) if B > 0 else 0.0,
        "energy_drift": relative_drift(res.energy),
        "energy_drift_centered": relative_drift(res.energy_centered),
    }
    return Experiment(report, {"phantom": f, "trace": res.trace.grid})
