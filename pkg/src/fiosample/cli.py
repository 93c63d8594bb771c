"""Command-line front end: ``fiosample <command> [--config file.json] [--out dir] ...``.

Every command reads an optional JSON config, validates it against the
command's schema (unknown keys are rejected), runs, and writes its images and
a ``report.json`` into the output directory.  Exit codes: 0 success, 2 bad
config, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import jsonschema
import numpy as np

from . import experiments as ex
from .grid_core import Grid2D, PhantomSpec, centered_grid, render_phantom, write_grid
from .lattice_sampling import Lattice2D, SampleSet, WindowSpec, nyquist_steps, rectangular_lattice, reconstruct, sample
from .radon_fanbeam import FanGeometry, fan_fbp, fan_forward, resolution_diagram, write_fan_sinogram
from .radon_parallel import ParallelGeometry, fbp_invert, forward, write_sinogram
from .tat_sim import TrappedRayError, tat_grid

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
RNG_NAME = "numpy.random.default_rng (PCG64)"


class ConfigError(Exception):
    pass


# --------------------------------------------------------------------------
# Schemas
# --------------------------------------------------------------------------

_PAIR = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_POS = {"type": "number", "exclusiveMinimum": 0}
_POS_INT = {"type": "integer", "minimum": 2}

_COMMON = {
    "out": {"type": "string"},
    "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    "h": _POS,
    "format": {"enum": ["png", "csv", "bin"]},
}

_PHANTOM = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["coherent_state", "gaussian_sum", "oscillatory_gaussian", "doughnut_array", "random_gaussians"]},
        "params": {"type": "object"},
        "support_radius": _POS,
        "count": {"type": "integer", "minimum": 1},
        "width": _POS,
    },
}

_WINDOW = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["sinc", "trapezoid", "lanczos"]},
        "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "a": {"type": "integer", "minimum": 1},
    },
}

_GRID = {"n": _POS_INT, "half_width": _POS}


def _schema(props: dict, required=()) -> dict:
    return {"type": "object", "additionalProperties": False, "required": list(required), "properties": {**_COMMON, **props}}


SCHEMAS = {
    "phantom": _schema({"phantom": _PHANTOM, **_GRID}),
    "sample": _schema({"phantom": _PHANTOM, "B": _PAIR, "s": _POS, "offset": _PAIR, "half_width": _POS}),
    "reconstruct": _schema(
        {
            "samples": {"type": "string"},
            "lattice": {
                "type": "object",
                "additionalProperties": False,
                "required": ["W", "s", "h"],
                "properties": {"W": {"type": "array"}, "s": _POS, "h": _POS, "offset": _PAIR},
            },
            "window": _WINDOW,
            **_GRID,
        },
        required=("samples", "lattice"),
    ),
    "radon-parallel": _schema({"phantom": _PHANTOM, "n_phi": _POS_INT, "n_p": _POS_INT, "p_max": _POS, "invert": {"type": "boolean"}, **_GRID}),
    "radon-fan": _schema(
        {
            "phantom": _PHANTOM,
            "n_alpha": _POS_INT,
            "n_beta": _POS_INT,
            "R": _POS,
            "invert": {"type": "boolean"},
            "alpha_range": _PAIR,
            **_GRID,
        }
    ),
    "alias-demo": _schema(
        {
            "mode": {"enum": ["classical", "angular", "radial", "control"]},
            "interpolation": {"enum": ["fourier", "shannon", "lanczos3"]},
            "x0": _PAIR,
            "xi0": _PAIR,
            "m_phi": {"type": "integer", "minimum": 1},
            "m_p": {"type": "integer", "minimum": 1},
            "n_phi": _POS_INT,
            **_GRID,
        }
    ),
    "resolution-diagram": _schema(
        {
            "R": _POS,
            "s_alpha": _POS,
            "s_beta": _POS,
            "points": {"type": "array", "items": _PAIR},
            "directions": _POS_INT,
        }
    ),
    "counts": _schema({"R": _POS, "B": _POS, "s": _POS, "strips": {"type": "array", "items": {"type": "integer", "minimum": 1}}}),
    "average-demo": _schema(
        {
            "variable": {"enum": ["p", "alpha", "beta"]},
            "strength": {"type": "number", "minimum": 0},
            "R": _POS,
            "array": {"type": "integer", "minimum": 1},
            "n_phi": _POS_INT,
            "n": _POS_INT,
        }
    ),
    "weyl": _schema({"hs": {"type": "array", "items": _POS, "minItems": 1}, "B": _POS, "half_width": _POS, "s": _POS}),
    "tat-demo": _schema(
        {
            "speeds": {"type": "array", "items": {"enum": ["slow", "fast"]}, "minItems": 1},
            "n": _POS_INT,
            "T": _POS,
            "zero_phantom": {"type": "boolean"},
        }
    ),
}


def load_config(command: str, path: str | None, overrides: dict) -> dict:
    cfg: dict = {}
    if path is not None:
        try:
            cfg = json.loads(Path(path).read_text())
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    try:
        jsonschema.validate(cfg, SCHEMAS[command])
    except jsonschema.ValidationError as e:
        loc = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{loc}: {e.message}") from e
    return cfg


# --------------------------------------------------------------------------
# Helpers
# --------------------------------------------------------------------------


class Output:
    def __init__(self, cfg: dict):
        self.dir = Path(cfg.get("out", "out"))
        self.dir.mkdir(parents=True, exist_ok=True)
        self.fmt = cfg.get("format", "png")
        self.files: list[str] = []

    def image(self, name: str, grid: Grid2D) -> None:
        self.files.append(write_grid(self.dir / name, grid, self.fmt).name)

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.dir / name

    def report(self, report: dict) -> None:
        report = {**report, "files": sorted(self.files)}
        (self.dir / "report.json").write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def random_gaussians(count: int, width: float, support_radius: float, seed: int) -> PhantomSpec:
    """``count`` unit Gaussians with centres uniform in the disk of radius 0.8*support_radius."""
    rng = np.random.default_rng(seed)
    r = 0.8 * support_radius * np.sqrt(rng.uniform(size=count))
    t = rng.uniform(0, 2 * np.pi, size=count)
    centers = np.column_stack([r * np.cos(t), r * np.sin(t)])
    return PhantomSpec("gaussian_sum", {"centers": centers.tolist(), "widths": [width] * count, "amplitudes": [1.0] * count}, support_radius)


def phantom_spec(cfg: dict) -> PhantomSpec:
    p = cfg.get("phantom", {"kind": "random_gaussians"})
    R = p.get("support_radius", 1.0)
    try:
        if p["kind"] == "random_gaussians":
            return random_gaussians(p.get("count", 6), p.get("width", 0.02), R, cfg.get("seed", 0))
        return PhantomSpec(p["kind"], p.get("params", {}), R)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"phantom: {e!r}") from e


def _window(cfg: dict) -> WindowSpec:
    w = cfg.get("window", {})
    return WindowSpec(w.get("kind", "trapezoid"), delta=w.get("delta", 0.8), a=w.get("a", 3))


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_phantom(cfg: dict, out: Output) -> dict:
    spec = phantom_spec(cfg)
    grid = centered_grid(cfg.get("half_width", spec.support_radius), cfg.get("n", 256), cfg.get("h", 0.01))
    f = render_phantom(spec, grid)
    out.image("phantom", f)
    return {"kind": spec.kind, "params": spec.params, "l2_norm": f.l2_norm(), "generator": RNG_NAME}


def cmd_sample(cfg: dict, out: Output) -> dict:
    spec = phantom_spec(cfg)
    h = cfg.get("h", 0.01)
    L = cfg.get("half_width", spec.support_radius)
    lat = rectangular_lattice(nyquist_steps(cfg.get("B", [1.0, 1.0])), cfg.get("s", 1.0), h, tuple(cfg.get("offset", (0.0, 0.0))))
    samples = sample(spec, lat, ((-L, L), (-L, L)))
    samples.to_csv(out.path("samples.csv"))
    out.path("lattice.json").write_text(json.dumps(lat.to_json(), indent=2, sort_keys=True) + "\n")
    return {"count": len(samples), "lattice": lat.to_json()}


def cmd_reconstruct(cfg: dict, out: Output) -> dict:
    try:
        lat = Lattice2D.from_json(cfg["lattice"])
        samples = SampleSet.from_csv(cfg["samples"], lat)
    except OSError as e:
        raise ConfigError(f"cannot read samples: {e}") from e
    grid = centered_grid(cfg.get("half_width", 1.0), cfg.get("n", 256), lat.h)
    rec = reconstruct(samples, _window(cfg), grid)
    out.image("reconstruction", rec)
    return {"samples": len(samples), "l2_norm": rec.l2_norm()}


def cmd_radon_parallel(cfg: dict, out: Output) -> dict:
    spec = phantom_spec(cfg)
    R = spec.support_radius
    grid = centered_grid(cfg.get("half_width", R), cfg.get("n", 256), cfg.get("h", 0.01))
    f = render_phantom(spec, grid)
    geo = ParallelGeometry(cfg.get("n_phi", 720), cfg.get("n_p", grid.n[0]), cfg.get("p_max", grid.extent[0] / 2))
    sino = forward(f, geo, R=R)
    write_sinogram(out.path("sinogram.mrs"), sino)
    out.path("sinogram.mrs.json")
    out.image("phantom", f)
    out.image("sinogram", sino.grid)
    report = {"R": R, "n_phi": geo.n_phi, "n_p": geo.n_p}
    if cfg.get("invert", True):
        rec = fbp_invert(sino, target=grid)
        out.image("fbp", rec)
        report["fbp_relative_error"] = float(np.linalg.norm(rec.values - f.values) / max(np.linalg.norm(f.values), 1e-300))
    return report


def cmd_radon_fan(cfg: dict, out: Output) -> dict:
    spec = phantom_spec(cfg)
    R = cfg.get("R", 1.45 * spec.support_radius)
    grid = centered_grid(cfg.get("half_width", spec.support_radius), cfg.get("n", 256), cfg.get("h", 0.01))
    f = render_phantom(spec, grid)
    sino = fan_forward(f, FanGeometry(cfg.get("n_alpha", 720), cfg.get("n_beta", 720), R))
    write_fan_sinogram(out.path("sinogram.mfs"), sino)
    out.path("sinogram.mfs.json")
    out.image("phantom", f)
    out.image("sinogram", sino.grid)
    report = {"R": R}
    if cfg.get("invert", True):
        ar = cfg.get("alpha_range")
        rec = fan_fbp(sino, target=grid, alpha_range=None if ar is None else tuple(ar))
        out.image("fbp", rec)
        report["fbp_relative_error"] = float(np.linalg.norm(rec.values - f.values) / max(np.linalg.norm(f.values), 1e-300))
    return report


def _nyquist_overlay(spec_grid: Grid2D, half: float) -> Grid2D:
    # boundary of the coarse Nyquist box drawn at the image maximum
    a1, a2 = spec_grid.axes()
    d = spec_grid.spacing[0]
    X1, X2 = np.meshgrid(a1, a2, indexing="ij")
    edge = np.abs(np.maximum(np.abs(X1), np.abs(X2)) - half) < 0.5 * d
    return spec_grid.with_values(np.where(edge, spec_grid.values.max(), spec_grid.values))


def cmd_alias_demo(cfg: dict, out: Output) -> dict:
    mode = cfg.get("mode", "classical")
    h = cfg.get("h", 0.01)
    interp = cfg.get("interpolation")
    if mode == "classical":
        window = "shannon" if interp in ("shannon", "fourier") else ex.LANCZOS3
        e = ex.two_state_alias(h=h, window=window)
        half = e.report["nyquist_half_width"]
        for k in ("spectrum_original", "spectrum_undersampled"):
            e.images[k] = _nyquist_overlay(e.images[k], half)
    elif mode in ("angular", "control"):
        window = ex.LANCZOS3 if interp == "lanczos3" else "fourier"
        x0 = cfg.get("x0", (0.75, 0.0) if mode == "angular" else (0.2, 0.0))
        m_phi = cfg.get("m_phi", 6 if mode == "angular" else 1)
        e = ex.radon_angular_alias(
            x0=tuple(x0),
            xi0=tuple(cfg.get("xi0", (0.0, 1.0))),
            h=h,
            half_width=cfg.get("half_width", 1.25),
            n=cfg.get("n", 256),
            n_phi=cfg.get("n_phi", 720),
            m_phi=m_phi,
            interpolation=window,
        )
    else:
        e = ex.radon_radial_alias(h=h, half_width=cfg.get("half_width", 1.25), n=cfg.get("n", 256), m_p=cfg.get("m_p", 4))
    for k, g in e.images.items():
        out.image(k, g)
    return {"mode": mode, **e.report}


def cmd_resolution_diagram(cfg: dict, out: Output) -> dict:
    R = cfg.get("R", 1.0)
    s_beta = cfg.get("s_beta", 0.05 / cfg.get("h", 0.01))
    s_alpha = cfg.get("s_alpha", 2 * s_beta)
    ticks = np.linspace(-0.6 * R, 0.6 * R, 5)
    pts = cfg.get("points", [[a, b] for a in ticks for b in ticks])
    theta = np.linspace(0, 2 * np.pi, cfg.get("directions", 360), endpoint=False)
    rows = []
    radius = {}
    for mode in ("intersection", "union"):
        radius[mode] = [resolution_diagram(p, s_alpha, s_beta, R, mode, theta) for p in pts]
    with open(out.path("resolution_diagram.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "theta", "intersection", "union"])
        for i, p in enumerate(pts):
            for j, t in enumerate(theta):
                w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(t)), repr(float(radius["intersection"][i][j])), repr(float(radius["union"][i][j]))])
    # raster: each point's bound curve, scaled to a common maximum, drawn around the point
    g = centered_grid(R, 256, cfg.get("h", 0.01))
    finite = np.concatenate([r[np.isfinite(r)] for m in radius.values() for r in m])
    scale = 0.12 * R / finite.max() if finite.size else 0.0
    for mode, value in (("intersection", 1.0), ("union", 0.5)):
        img = np.zeros(g.n)
        for p, r in zip(pts, radius[mode]):
            rr = np.where(np.isfinite(r), r, finite.max()) * scale
            idx = ((np.asarray(p)[:, None] + rr[None, :] * np.stack([np.cos(theta), np.sin(theta)])) - np.array(g.origin)[:, None]) / g.spacing[0]
            i1, i2 = np.clip(np.rint(idx).astype(int), 0, g.n[0] - 1)
            img[i1, i2] = value
        # horizontal lines through the points mark the alpha sampling direction
        for p in pts:
            j = int(np.clip(np.rint((p[1] - g.origin[1]) / g.spacing[1]), 0, g.n[1] - 1))
            img[:, j] = np.maximum(img[:, j], 0.2)
        out.image(f"resolution_{mode}", g.with_values(img))
    center = [i for i, p in enumerate(pts) if np.allclose(p, 0)]
    report = {"R": R, "s_alpha": s_alpha, "s_beta": s_beta, "points": pts}
    if center:
        r0 = radius["intersection"][center[0]]
        report["center_isotropy"] = float(np.ptp(r0) / np.max(r0))
    return report


def cmd_counts(cfg: dict, out: Output) -> dict:
    row = ex.count_table(cfg.get("R", 1.0), cfg.get("B", 1.0), cfg.get("h", 0.01), cfg.get("s", 1.0), tuple(cfg.get("strips", (1, 2, 4, 8))))
    with open(out.path("counts.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(row))
        w.writerow([repr(v) if isinstance(v, float) else v for v in row.values()])
    return row


def cmd_average_demo(cfg: dict, out: Output) -> dict:
    var = cfg.get("variable", "p")
    h = cfg.get("h", 0.01)
    if var == "p":
        e = ex.p_average(a=cfg.get("strength", 12.5), h=h, n=cfg.get("n", 256), n_phi=cfg.get("n_phi", 720))
    elif var == "beta":
        e = ex.fan_beta_average(b=cfg.get("strength", 50.0), R=cfg.get("R", 1.45), h=h, n=cfg.get("n", 256), array=cfg.get("array", 5))
        e.report["sign_pattern"] = ex.fan_sign_pattern(e.report)
    else:
        e = ex.alpha_average(a=cfg.get("strength", 5.0), R=cfg.get("R", 1.45), h=h, n=cfg.get("n", 256))
    for k, g in e.images.items():
        out.image(k, g)
    return {"variable": var, **e.report}


def cmd_weyl(cfg: dict, out: Output) -> dict:
    rows = [ex.weyl_box(h, cfg.get("B", 1.0), cfg.get("half_width", 1.0), cfg.get("s", 1.0)) for h in cfg.get("hs", [0.04, 0.02, 0.01])]
    with open(out.path("weyl.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["h", "count", "ratio"])
        for r in rows:
            w.writerow([repr(r["h"]), r["count"], repr(r["ratio"])])
    return {"rows": rows}


def cmd_tat_demo(cfg: dict, out: Output) -> dict:
    report = {}
    n = cfg.get("n", 256)
    h = cfg.get("h", 0.02)
    for which in cfg.get("speeds", ["slow", "fast"]):
        phantom = tat_grid(n, h) if cfg.get("zero_phantom", False) else None
        e = ex.tat_lens(which, n=n, h=h, T=cfg.get("T", 4.0), phantom=phantom)
        for k, g in e.images.items():
            out.image(f"{which}_{k}", g)
        report[which] = e.report
    return report


COMMANDS = {
    "phantom": cmd_phantom,
    "sample": cmd_sample,
    "reconstruct": cmd_reconstruct,
    "radon-parallel": cmd_radon_parallel,
    "radon-fan": cmd_radon_fan,
    "alias-demo": cmd_alias_demo,
    "resolution-diagram": cmd_resolution_diagram,
    "counts": cmd_counts,
    "average-demo": cmd_average_demo,
    "weyl": cmd_weyl,
    "tat-demo": cmd_tat_demo,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fiosample", description="Semiclassical sampling experiments for Radon, fan-beam and thermoacoustic data.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="JSON config file")
    ap.add_argument("--out", help="output directory (default ./out)")
    ap.add_argument("--seed", type=int, help="seed for randomized phantoms")
    ap.add_argument("--h", type=float, help="semiclassical parameter")
    ap.add_argument("--format", choices=["png", "csv", "bin"], help="image format (default png)")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"out": args.out, "seed": args.seed, "h": args.h, "format": args.format}
    try:
        cfg = load_config(args.command, args.config, overrides)
        out = Output(cfg)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            report = COMMANDS[args.command](cfg, out)
        notes = sorted({str(w.message) for w in caught})
        for msg in notes:
            print(f"warning: {msg}", file=sys.stderr)
        out.report({"command": args.command, "warnings": notes, **report})
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, FloatingPointError, ArithmeticError, TrappedRayError, np.linalg.LinAlgError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
