"""
Command-line front end: configuration, sweeps and flat-file output.

Subcommands ``spectrum``, ``mode-map``, ``q-scan``, ``purcell`` and ``fit``
read an optional YAML config, apply flag overrides (flags win), write CSV or
JSON results to ``--out`` and a ``manifest.json`` echoing the fully resolved
configuration. Outputs contain no timestamps, so identical configs give
byte-identical files.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from fpcavity import __version__
from fpcavity import designs
from fpcavity import estimation as est
from fpcavity import gaussian_cavity as gc
from fpcavity import purcell_engine as pe
from fpcavity.layered_media import (
    Layer,
    LayerStack,
    OpticalIndex,
    build_quarter_wave_dbr,
    stack_from_dict,
    stack_response,
    stopband_center,
    write_csv,
)
from fpcavity.loss_models import assemble_budget


class ConfigError(ValueError):
    pass


def _mirror_defaults(pairs: int) -> dict:
    return {
        "pairs": pairs,
        "center_nm": designs.STOPBAND_CENTER,
        "n_high": designs.N_HIGH,
        "n_low": designs.N_LOW,
        "substrate_n": designs.N_LOW,
        "thicknesses_nm": None,
    }


DEFAULTS: dict[str, Any] = {
    "assembly": {
        "top_mirror": _mirror_defaults(designs.TOP_PAIRS),
        "bottom_mirror": _mirror_defaults(designs.BOTTOM_PAIRS),
        "membrane": {
            "enabled": True,
            "thickness_nm": designs.MEMBRANE_THICKNESS,
            "n": designs.N_DIAMOND,
            "kappa_ext": 0.0,
            "roughness_nm": 0.0,
        },
        "crater": {"R_cav_um": designs.CRATER_RADIUS, "depth_um": designs.CRATER_DEPTH},
        "tilt_deg": 0.0,
        "extent_um": designs.MIRROR_EXTENT,
    },
    "spectrum": {
        "target": "top_mirror",
        "lambda_min_nm": 450.0,
        "lambda_max_nm": 850.0,
        "points": 801,
        "stack": None,
    },
    "mode_map": {
        "air_gap_min_nm": 500.0,
        "air_gap_max_nm": 3000.0,
        "air_gap_points": 251,
        "lambda_min_nm": 600.0,
        "lambda_max_nm": 660.0,
        "grid_points": 1201,
        "refine": True,
    },
    "q_scan": {
        "wavelength_nm": designs.MEASUREMENT_WAVELENGTH,
        "q_air_min": 1,
        "q_air_max": 12,
        "clipping": True,
        "sigma_sweep_nm": None,
        "kappa_sweep": None,
        "lambda_sweep": {"lambda_min_nm": None, "lambda_max_nm": None, "points": 21, "q_air": 4},
    },
    "purcell": {
        "wavelength_nm": designs.ZPL_WAVELENGTH,
        "q_air": 4,
        "Q_override": None,
        "clipping": True,
        "q_air_min": 1,
        "q_air_max": 8,
        "sigma_values_nm": [0.0, designs.SURFACE_ROUGHNESS],
        "compare_thicknesses_nm": {
            "diamond_confined": designs.DIAMOND_CONFINED_THICKNESS,
            "air_confined": designs.AIR_CONFINED_THICKNESS,
        },
        "emitter": {"tau0_ns": 12.6, "xi0": 0.0255, "dipole_nm": None},
    },
    "fit": {
        "input": None,
        "wavelength_nm": designs.MEASUREMENT_WAVELENGTH,
        "sideband_spacing_GHz": 5.0,
        "q_max_linear": 7,
        "circle_r_max_um": None,
        "D_range_um": {"min": 4.0, "max": 8.0, "points": 41},
        "theta_range_deg": {"min": 0.0, "max": 0.6, "points": 31},
        "fit_offset": True,
        "synthetic": {"delta_nu_GHz": 2.86, "noise": 0.0, "samples": 801},
    },
}

POSITIVE = {
    "center_nm", "n_high", "n_low", "substrate_n", "thickness_nm", "n", "R_cav_um", "depth_um",
    "extent_um", "lambda_min_nm", "lambda_max_nm", "air_gap_min_nm", "air_gap_max_nm", "wavelength_nm",
    "tau0_ns", "xi0", "dipole_nm", "sideband_spacing_GHz", "delta_nu_GHz", "circle_r_max_um",
    "diamond_confined", "air_confined",
}
NON_NEGATIVE = {"kappa_ext", "roughness_nm", "tilt_deg", "noise", "Q_override", "kappa", "front_roughness_nm", "min"}
AT_LEAST_ONE = {"pairs", "points", "air_gap_points", "grid_points", "q_air", "q_air_min", "q_air_max",
                "q_max_linear", "samples"}
CHOICES = {"target": ("top_mirror", "bottom_mirror", "bottom_reflector", "full", "stack")}


# --- config loading and validation ----------------------------------------------------------


def _line_map(node, prefix: str = "", out: dict | None = None) -> dict:
    """Map dotted config paths to 1-based line numbers from a composed YAML tree."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = f"{prefix}.{key.value}" if prefix else str(key.value)
            out[path] = key.start_mark.line + 1
            _line_map(value, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            path = f"{prefix}[{i}]"
            out[path] = item.start_mark.line + 1
            _line_map(item, path, out)
    return out


def _where(path: str, lines: dict) -> str:
    line = lines.get(path)
    return f"line {line}: " if line else ""


def _check_scalar(path: str, key: str, value, lines: dict):
    if value is None:
        return
    if key in CHOICES:
        if value not in CHOICES[key]:
            raise ConfigError(f"{_where(path, lines)}{path} must be one of {', '.join(CHOICES[key])}")
        return
    if isinstance(value, bool):
        return
    if isinstance(value, (int, float)):
        if key in POSITIVE and not value > 0:
            raise ConfigError(f"{_where(path, lines)}{path} must be positive (got {value})")
        if key in NON_NEGATIVE and value < 0:
            raise ConfigError(f"{_where(path, lines)}{path} must be non-negative (got {value})")
        if key in AT_LEAST_ONE and (int(value) != value or value < 1):
            raise ConfigError(f"{_where(path, lines)}{path} must be an integer >= 1 (got {value})")


def _validate_free(doc, path: str, lines: dict):
    """Value checks for free-form sections (custom stacks, lists)."""
    if isinstance(doc, dict):
        for k, v in doc.items():
            _validate_free(v, f"{path}.{k}", lines)
            if not isinstance(v, (dict, list)):
                _check_scalar(f"{path}.{k}", str(k), v, lines)
    elif isinstance(doc, list):
        for i, v in enumerate(doc):
            _validate_free(v, f"{path}[{i}]", lines)
            if isinstance(v, (int, float)) and not isinstance(v, bool):
                leaf = path.rsplit(".", 1)[-1]
                if leaf.endswith("_nm") and v < 0:
                    raise ConfigError(f"{_where(f'{path}[{i}]', lines)}{path}[{i}] must be non-negative (got {v})")


FREE_FORM = {"spectrum.stack", "purcell.compare_thicknesses_nm"}


NULLABLE = {"assembly.extent_um"}


def _merge(defaults, user, path: str, lines: dict):
    if user is None:
        if defaults is None or path in NULLABLE:
            return None
        if isinstance(defaults, dict):
            return copy.deepcopy(defaults)
        raise ConfigError(f"{_where(path, lines)}{path} must not be null")
    if isinstance(defaults, dict) and path not in FREE_FORM:
        if not isinstance(user, dict):
            raise ConfigError(f"{_where(path, lines)}{path} must be a mapping")
        unknown = sorted(set(user) - set(defaults))
        if unknown:
            p = f"{path}.{unknown[0]}" if path else unknown[0]
            raise ConfigError(f"{_where(p, lines)}unknown config key '{p}'")
        return {k: _merge(v, user.get(k), f"{path}.{k}" if path else k, lines) if k in user else copy.deepcopy(v)
                for k, v in defaults.items()}
    if isinstance(user, (dict, list)):
        _validate_free(user, path, lines)
        return copy.deepcopy(user)
    if isinstance(defaults, bool) and not isinstance(user, bool):
        raise ConfigError(f"{_where(path, lines)}{path} must be true or false")
    if isinstance(defaults, (int, float)) and not isinstance(defaults, bool):
        if not isinstance(user, (int, float)) or isinstance(user, bool):
            raise ConfigError(f"{_where(path, lines)}{path} must be a number")
    _check_scalar(path, path.rsplit(".", 1)[-1], user, lines)
    return user


def load_config(path: str | Path | None) -> dict:
    """Resolved configuration: defaults overlaid with the YAML file at ``path``."""
    if path is None:
        return resolve_config({}, {})
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    try:
        node = yaml.compose(text)
        doc = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    lines = _line_map(node) if node is not None else {}
    try:
        return resolve_config(doc, lines)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def resolve_config(doc: dict, lines: dict | None = None) -> dict:
    cfg = _merge(DEFAULTS, doc, "", lines or {})
    _validate_layers(cfg, lines or {})
    return cfg


def _validate_layers(cfg: dict, lines: dict):
    stack = cfg["spectrum"]["stack"]
    if stack is None:
        return
    for i, layer in enumerate(stack.get("layers") or []):
        t = layer.get("thickness_nm")
        path = f"spectrum.stack.layers[{i}].thickness_nm"
        if t is None or not isinstance(t, (int, float)) or t < 0:
            raise ConfigError(f"{_where(path, lines)}{path} must be a non-negative number (got {t})")


def set_path(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node[k]
    node[keys[-1]] = value


# --- building objects from config -----------------------------------------------------------


def build_mirror(spec: dict) -> LayerStack:
    return build_quarter_wave_dbr(
        spec["center_nm"], int(spec["pairs"]), spec["n_high"], spec["n_low"],
        OpticalIndex(spec["substrate_n"]), thicknesses=spec["thicknesses_nm"],
    )


def build_assembly(cfg: dict) -> gc.CavityAssembly:
    a = cfg["assembly"]
    mem = a["membrane"]
    membrane = None
    if mem["enabled"]:
        membrane = Layer(OpticalIndex(mem["n"], mem["kappa_ext"]), mem["thickness_nm"], mem["roughness_nm"])
    return gc.CavityAssembly(
        bottom_mirror=build_mirror(a["bottom_mirror"]),
        top_mirror=build_mirror(a["top_mirror"]),
        membrane=membrane,
        air_gap=1000.0,
        crater=gc.CraterProfile(a["crater"]["R_cav_um"], a["crater"]["depth_um"]),
        tilt=a["tilt_deg"],
        extent=a["extent_um"],
    )


def _emitter(cfg: dict) -> pe.EmitterSpec:
    e = cfg["purcell"]["emitter"]
    return pe.EmitterSpec(tau0=e["tau0_ns"], xi0=e["xi0"], dipole_factor=e["dipole_nm"])


# --- commands -----------------------------------------------------------------------------------


def cmd_spectrum(cfg: dict, out: Path) -> dict:
    s = cfg["spectrum"]
    if s["stack"] is not None:
        stack = stack_from_dict(s["stack"])
    else:
        assembly = build_assembly(cfg)
        stack = {
            "top_mirror": assembly.top_mirror,
            "bottom_mirror": assembly.bottom_mirror,
            "bottom_reflector": assembly.bottom_reflector(),
            "full": assembly.full_stack(),
            "stack": None,
        }[s["target"]]
        if stack is None:
            raise ConfigError("spectrum.target 'stack' requires spectrum.stack")
    grid = np.linspace(s["lambda_min_nm"], s["lambda_max_nm"], int(s["points"]))
    response = stack_response(stack, grid)
    response.to_csv(out / "spectrum.csv")
    summary: dict = {"outputs": ["spectrum.csv"]}
    try:
        summary["stopband_center_nm"] = stopband_center(response)
    except LookupError:
        summary["stopband_center_nm"] = None
    return summary


def cmd_mode_map(cfg: dict, out: Path) -> dict:
    m = cfg["mode_map"]
    assembly = build_assembly(cfg)
    gaps = np.linspace(m["air_gap_min_nm"], m["air_gap_max_nm"], int(m["air_gap_points"]))
    mmap = gc.mode_map(assembly, gaps, (m["lambda_min_nm"], m["lambda_max_nm"]),
                       grid_points=int(m["grid_points"]), refine=bool(m["refine"]))
    mmap.to_csv(out / "mode_map.csv")
    crossings = gc.avoided_crossings(mmap)
    write_csv(out / "avoided_crossings.csv", ["t_a_nm", "lambda_nm", "slope", "splitting_nm"],
              [(c["air_gap"], c["wavelength"], c["slope"], c["splitting"]) for c in crossings])
    return {"outputs": ["mode_map.csv", "avoided_crossings.csv"], "points": len(mmap),
            "avoided_crossings": len(crossings)}


def cmd_q_scan(cfg: dict, out: Path) -> dict:
    s = cfg["q_scan"]
    base = build_assembly(cfg)
    lam = s["wavelength_nm"]
    qs = range(int(s["q_air_min"]), int(s["q_air_max"]) + 1)
    has_membrane = base.membrane is not None
    sigmas = s["sigma_sweep_nm"] if s["sigma_sweep_nm"] is not None else [None]
    kappas = s["kappa_sweep"] if s["kappa_sweep"] is not None else [None]
    rows = []
    for sigma in sigmas:
        for kappa in kappas:
            variant = base
            if has_membrane and (sigma is not None or kappa is not None):
                variant = base.with_membrane(roughness=sigma, kappa=kappa)
            elif sigma is not None or kappa is not None:
                raise ConfigError("sigma/kappa sweeps need a membrane")
            used_sigma = variant.membrane.roughness_rms if has_membrane else 0.0
            used_kappa = variant.membrane.index.kappa_ext if has_membrane else 0.0
            for r in gc.q_vs_mode_number(variant, lam, qs, include_clipping=bool(s["clipping"])):
                rows.append((used_sigma, used_kappa, r.q_air, r.air_gap, r.Q, r.finesse, r.budget.L_clip,
                             int(r.accessible)))
    write_csv(out / "q_scan.csv", ["sigma_q_nm", "kappa_ext", "q_air", "air_gap_nm", "Q", "finesse",
                                   "L_clip", "accessible"], rows)
    outputs = ["q_scan.csv"]
    ls = s["lambda_sweep"]
    if ls["lambda_min_nm"] is not None and ls["lambda_max_nm"] is not None:
        q = int(ls["q_air"])
        lam_rows = []
        for wl in np.linspace(ls["lambda_min_nm"], ls["lambda_max_nm"], int(ls["points"])):
            tuned = base.tuned(wl, q)
            b = assemble_budget(tuned, wl, q, include_clipping=bool(s["clipping"]))
            lam_rows.append((wl, q, b.Q_sim, b.finesse))
        write_csv(out / "q_vs_lambda.csv", ["lambda_nm", "q_air", "Q", "finesse"], lam_rows)
        outputs.append("q_vs_lambda.csv")
    return {"outputs": outputs, "rows": len(rows)}


def cmd_purcell(cfg: dict, out: Path) -> dict:
    p = cfg["purcell"]
    assembly = build_assembly(cfg)
    if assembly.membrane is None:
        raise ConfigError("purcell needs assembly.membrane.enabled = true")
    report = pe.predict(assembly, p["wavelength_nm"], int(p["q_air"]), _emitter(cfg), Q=p["Q_override"],
                        include_clipping=bool(p["clipping"]))
    report.to_json(out / "purcell_report.json")
    variants = {label: assembly.with_membrane(thickness=t) for label, t in sorted(p["compare_thicknesses_nm"].items())}
    rows = pe.purcell_vs_mode_number(variants, p["wavelength_nm"], range(int(p["q_air_min"]), int(p["q_air_max"]) + 1),
                                     p["sigma_values_nm"], include_clipping=bool(p["clipping"]))
    pe.write_purcell_table(out / "purcell_vs_q.csv", rows)
    return {"outputs": ["purcell_report.json", "purcell_vs_q.csv"], "F_P": report.F_P,
            "free_space_limit": report.free_space_limit}


def cmd_fit(cfg: dict, out: Path, kind: str, seed: int) -> dict:
    f = cfg["fit"]
    src = f["input"]
    if kind == "linewidth" and src is None:
        syn = f["synthetic"]
        rng = np.random.default_rng(seed)
        trace = est.synthetic_scan(syn["delta_nu_GHz"], f["sideband_spacing_GHz"], int(syn["samples"]),
                                   noise=syn["noise"], rng=rng)
        write_csv(out / "synthetic_trace.csv", ["abscissa", "signal"], zip(trace.abscissa, trace.signal))
        result = est.fit_linewidth(trace, f["wavelength_nm"])
        result.metadata["source"] = "synthetic"
    elif src is None:
        raise ConfigError(f"fit {kind} needs an input file (--input or fit.input)")
    elif kind == "crater":
        r, z = est.load_crater(src)
        result = est.fit_crater(r, z)
        if f["circle_r_max_um"] is not None:
            circle = est.fit_circle(r, z, f["circle_r_max_um"])
            result.metadata["circle_R_cav"] = circle.params["R"]
    elif kind == "linewidth":
        result = est.fit_linewidth(est.load_trace(src, f["sideband_spacing_GHz"]), f["wavelength_nm"])
    elif kind == "finesse":
        result = est.fit_finesse(est.load_series(src), int(f["q_max_linear"]))
    elif kind == "clipping":
        series = est.load_series(src)
        sim = est.clipping_simulator(build_assembly(cfg), f["wavelength_nm"])
        D = f["D_range_um"]
        th = f["theta_range_deg"]
        result = est.fit_clipping(series, sim, np.linspace(D["min"], D["max"], int(D["points"])),
                                  np.linspace(th["min"], th["max"], int(th["points"])), fit_offset=bool(f["fit_offset"]))
        result.metadata.pop("mse_surface")
        result.metadata.pop("region")
    else:  # pragma: no cover - argparse restricts the choices
        raise ConfigError(f"unknown fit kind {kind}")
    name = f"fit_{kind}.json"
    result.to_json(out / name)
    return {"outputs": [name] + (["synthetic_trace.csv"] if kind == "linewidth" and src is None else []),
            "converged": result.converged}


# --- argument parsing ------------------------------------------------------------------------------

FLAG_PATHS = {
    "spectrum": {"target": "spectrum.target", "lambda_min": "spectrum.lambda_min_nm",
                 "lambda_max": "spectrum.lambda_max_nm", "points": "spectrum.points"},
    "mode-map": {"gap_min": "mode_map.air_gap_min_nm", "gap_max": "mode_map.air_gap_max_nm",
                 "gap_points": "mode_map.air_gap_points", "lambda_min": "mode_map.lambda_min_nm",
                 "lambda_max": "mode_map.lambda_max_nm"},
    "q-scan": {"wavelength": "q_scan.wavelength_nm", "q_min": "q_scan.q_air_min", "q_max": "q_scan.q_air_max"},
    "purcell": {"wavelength": "purcell.wavelength_nm", "q_air": "purcell.q_air", "Q": "purcell.Q_override"},
    "fit": {"input": "fit.input", "wavelength": "fit.wavelength_nm", "q_max_linear": "fit.q_max_linear"},
}
COMMON_FLAGS = {"thickness": "assembly.membrane.thickness_nm", "roughness": "assembly.membrane.roughness_nm",
                "kappa": "assembly.membrane.kappa_ext", "tilt": "assembly.tilt_deg"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fpcavity", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, default=0, help="seed for synthetic noise (default: 0)")
        p.add_argument("--thickness", type=float, help="membrane thickness, nm")
        p.add_argument("--roughness", type=float, help="membrane surface roughness, nm RMS")
        p.add_argument("--kappa", type=float, help="membrane extinction coefficient")
        p.add_argument("--tilt", type=float, help="mirror tilt, degrees")
        p.add_argument("--no-membrane", action="store_true", help="bare cavity")
        return p

    p = common(sub.add_parser("spectrum", help="R, T, A spectrum of a mirror or stack"))
    p.add_argument("--target", choices=CHOICES["target"])
    p.add_argument("--lambda-min", type=float)
    p.add_argument("--lambda-max", type=float)
    p.add_argument("--points", type=int)

    p = common(sub.add_parser("mode-map", help="resonance map over air gap and wavelength"))
    p.add_argument("--gap-min", type=float)
    p.add_argument("--gap-max", type=float)
    p.add_argument("--gap-points", type=int)
    p.add_argument("--lambda-min", type=float)
    p.add_argument("--lambda-max", type=float)

    p = common(sub.add_parser("q-scan", help="Q and finesse versus air mode number"))
    p.add_argument("--wavelength", type=float)
    p.add_argument("--q-min", type=int)
    p.add_argument("--q-max", type=int)

    p = common(sub.add_parser("purcell", help="vacuum field, Purcell factor and emitter report"))
    p.add_argument("--wavelength", type=float)
    p.add_argument("--q-air", type=int)
    p.add_argument("--Q", type=float, help="override the simulated Q")

    p = common(sub.add_parser("fit", help="fit measured data"))
    p.add_argument("kind", choices=["crater", "linewidth", "finesse", "clipping"])
    p.add_argument("--input", help="input CSV")
    p.add_argument("--wavelength", type=float)
    p.add_argument("--q-max-linear", type=int)
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        overrides = {}
        for flag, path in {**COMMON_FLAGS, **FLAG_PATHS[args.command]}.items():
            value = getattr(args, flag, None)
            if value is not None:
                overrides[path] = value
        if args.no_membrane:
            overrides["assembly.membrane.enabled"] = False
        for path, value in overrides.items():
            set_path(cfg, path, value)
        cfg = resolve_config(cfg)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "spectrum":
            summary = cmd_spectrum(cfg, out)
        elif args.command == "mode-map":
            summary = cmd_mode_map(cfg, out)
        elif args.command == "q-scan":
            summary = cmd_q_scan(cfg, out)
        elif args.command == "purcell":
            summary = cmd_purcell(cfg, out)
        else:
            summary = cmd_fit(cfg, out, args.kind, args.seed)
    except (ConfigError, FileNotFoundError, ValueError, LookupError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    command = args.command if args.command != "fit" else f"fit {args.kind}"
    manifest = {
        "command": command,
        "version": __version__,
        "seed": args.seed,
        "config_file": args.config,
        "overrides": overrides,
        "config": cfg,
        "summary": summary,
    }
    (out / "manifest.json").write_text(json.dumps(est._plain(manifest), indent=2, sort_keys=True) + "\n")
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
