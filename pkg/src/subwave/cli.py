"""Configuration files and experiment drivers.

Config files are YAML::

    scenario: two_defect
    geometry:
      bulk_radius: 0.35
      defect_radius: 0.2
      half_width: 14
      defect_separation: 1
    discretization:
      alpha_points: 80
      fourier_terms: 200
      panels_per_disk: 64
      band_truncation_width: 1
    output_dir: out/two_defect

Every key except ``scenario`` is optional.  Command line::

    subwave two_defect --config cfg.yaml --out out/ --l 3 --threads 2
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .capmat import (
    alpha_dft,
    fit_decay,
    log_linear_fit,
    midpoint_alpha_grid,
    write_capacitance_csv,
    write_decay_csv,
    write_dft_csv,
)
from .geometry import GeometryError, Scenario, ScenarioConfig, build_scenario, discretize, two_defect_cells
from .spectra import (
    BandStructure,
    DefectCountError,
    capacitance_sweep,
    classify_defects,
    spectra_from_capacitance,
    write_band_csv,
)

__all__ = [
    "ConfigError",
    "ExperimentResult",
    "EXPERIMENTS",
    "parse_config",
    "load_config",
    "emit_config",
    "run_experiment",
    "main",
]

log = logging.getLogger(__name__)

EXPERIMENTS = ("decay", "defect", "two_defect", "ssh", "band")
DECAY_OFFSETS = 5

# (section, key, type); section None = top level
_LAYOUT = [
    (None, "scenario", str),
    ("geometry", "bulk_radius", float),
    ("geometry", "defect_radius", float),
    ("geometry", "half_width", int),
    ("geometry", "defect_separation", int),
    ("geometry", "ssh_radius", float),
    ("geometry", "ssh_cells", int),
    ("geometry", "chain_file", str),
    ("discretization", "alpha_points", int),
    ("discretization", "fourier_terms", int),
    ("discretization", "panels_per_disk", int),
    ("discretization", "band_truncation_width", int),
    (None, "output_dir", str),
]

_RANGES = {
    "bulk_radius": lambda v: 0 < v < 0.5,
    "defect_radius": lambda v: 0 < v < 0.5,
    "ssh_radius": lambda v: 0 < v < 0.35,
    "half_width": lambda v: v >= 0,
    "defect_separation": lambda v: v >= 1,
    "ssh_cells": lambda v: v >= 1,
    "alpha_points": lambda v: v >= 2,
    "fourier_terms": lambda v: v >= 1,
    "panels_per_disk": lambda v: v >= 8 and v % 2 == 0,
    "band_truncation_width": lambda v: v >= 0,
}


class ConfigError(ValueError):
    """Bad configuration; ``code`` distinguishes the failure kind."""

    EXIT_CODES = {
        "malformed": 3,
        "unknown_scenario": 4,
        "out_of_range": 5,
        "missing_key": 6,
        "unknown_key": 7,
    }

    def __init__(self, code: str, key: str | None, message: str):
        super().__init__(f"[{code}] {key + ': ' if key else ''}{message}")
        self.code = code
        self.key = key

    @property
    def exit_code(self) -> int:
        return self.EXIT_CODES[self.code]


@dataclass
class ExperimentResult:
    scenario_name: str
    outputs: list[Path] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    wall_time: float = 0.0


def _coerce(key, typ, value):
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError("malformed", key, f"expected an integer, got {value!r}")
        return int(value)
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError("malformed", key, f"expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError("malformed", key, f"expected text, got {value!r}")
    return value


def config_from_mapping(data, overrides: dict | None = None) -> ScenarioConfig:
    """Validate a nested mapping (as read from YAML) into a ScenarioConfig."""
    if not isinstance(data, dict):
        raise ConfigError("malformed", None, "top level must be a mapping")
    known = {}
    sections = {s for s, _, _ in _LAYOUT if s}
    for k, v in data.items():
        if k in sections:
            if not isinstance(v, dict):
                raise ConfigError("malformed", k, "section must be a mapping")
            for kk, vv in v.items():
                spec = [(s, n, t) for s, n, t in _LAYOUT if s == k and n == kk]
                if not spec:
                    raise ConfigError("unknown_key", f"{k}.{kk}", "not a recognised setting")
                known[kk] = _coerce(kk, spec[0][2], vv)
        else:
            spec = [(s, n, t) for s, n, t in _LAYOUT if s is None and n == k]
            if not spec:
                raise ConfigError("unknown_key", k, "not a recognised setting")
            known[k] = _coerce(k, spec[0][2], v)
    known.update({k: v for k, v in (overrides or {}).items() if v is not None})

    if "scenario" not in known:
        raise ConfigError("missing_key", "scenario", "required")
    try:
        scenario = Scenario(known["scenario"])
    except ValueError:
        raise ConfigError(
            "unknown_scenario", "scenario", f"{known['scenario']!r} is not one of {[s.value for s in Scenario]}"
        ) from None
    for k, ok in _RANGES.items():
        if k in known and not ok(known[k]):
            raise ConfigError("out_of_range", k, f"value {known[k]!r} out of range")
    if scenario is Scenario.two_defect:
        if "defect_separation" not in known:
            raise ConfigError("missing_key", "defect_separation", "required for scenario two_defect")
        lo, hi = two_defect_cells(known["defect_separation"])
        if max(-lo, hi) > known.get("half_width", 14):
            raise ConfigError("out_of_range", "defect_separation", "defects would fall outside the chain")
    if scenario is Scenario.custom and "chain_file" not in known:
        raise ConfigError("missing_key", "chain_file", "required for scenario custom")
    known["scenario"] = scenario
    try:
        return ScenarioConfig(**known)
    except GeometryError as exc:
        raise ConfigError("out_of_range", None, str(exc)) from exc


def parse_config(text: str, overrides: dict | None = None) -> ScenarioConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("malformed", None, f"not valid YAML: {exc}") from exc
    return config_from_mapping(data if data is not None else {}, overrides)


def load_config(path, overrides: dict | None = None) -> ScenarioConfig:
    return parse_config(Path(path).read_text(), overrides)


def emit_config(config: ScenarioConfig) -> str:
    out: dict = {}
    values = dataclasses.asdict(config)
    for section, key, _ in _LAYOUT:
        v = values[key]
        if v is None:
            continue
        if isinstance(v, Scenario):
            v = v.value
        elif isinstance(v, Path):
            v = str(v)
        if section:
            out.setdefault(section, {})[key] = v
        else:
            out[key] = v
    return yaml.safe_dump(out, sort_keys=False)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def _sweep(config: ScenarioConfig, chain, threads):
    grid = midpoint_alpha_grid(config.alpha_points)
    mesh = discretize(chain, config.panels_per_disk)
    return capacitance_sweep(mesh, grid, config.fourier_terms, threads)


def _reference(config: ScenarioConfig, threads):
    ref_cfg = dataclasses.replace(config, scenario=Scenario.uniform, defect_separation=None)
    chain = build_scenario(ref_cfg)
    return spectra_from_capacitance(_sweep(ref_cfg, chain, threads), chain)


def _meta(config):
    return {
        "fourier_terms": config.fourier_terms,
        "panels_per_disk": config.panels_per_disk,
        "alpha_points": config.alpha_points,
    }


def _decay(config, out, threads):
    chain = build_scenario(config)
    if len(chain) // 2 + DECAY_OFFSETS >= len(chain):
        raise ConfigError(
            "out_of_range", "half_width", f"decay fit needs {DECAY_OFFSETS} disks above the centre disk"
        )
    Cs = _sweep(config, chain, threads)
    fits = [fit_decay(C, DECAY_OFFSETS) for C in Cs]
    files = [out / "decay.csv", out / "capacitance.csv"]
    write_decay_csv(files[0], [C.alpha for C in Cs], fits)
    write_capacitance_csv(files[1], Cs)
    summary = {
        "decay_rho_by_alpha": {f"{C.alpha:.17g}": f.rho for C, f in zip(Cs, fits)},
        "decay_r2_by_alpha": {f"{C.alpha:.17g}": f.log_linear_r2 for C, f in zip(Cs, fits)},
        "max_rho": max(f.rho for f in fits),
        "min_r2": min(f.log_linear_r2 for f in fits),
    }
    p_max = min(6, len(Cs) // 4)
    if p_max >= 2:
        center = len(chain) // 2
        slices = [alpha_dft(Cs, center + n, center, p_max) for n in range(0, 3)]
        files.append(out / "dft.csv")
        write_dft_csv(files[-1], slices)
        s0 = slices[0]
        pos = s0.p_offsets > 0
        _, _, r2 = log_linear_fit(s0.p_offsets[pos], np.abs(s0.entries[pos]))
        summary["full_matrix_p_decay_r2"] = r2
        summary["full_matrix_imag_residue"] = max(s.imag_residue for s in slices)
    return files, summary


def _defect(config, out, threads):
    if config.scenario is not Scenario.single_defect:
        config = dataclasses.replace(config, scenario=Scenario.single_defect)
    chain = build_scenario(config)
    Cs = _sweep(config, chain, threads)
    full = spectra_from_capacitance(Cs, chain, None, metadata=_meta(config))
    trunc = spectra_from_capacitance(Cs, chain, config.band_truncation_width, metadata=_meta(config))
    ref = _reference(config, threads)
    rf = classify_defects(full, ref, expected=1)
    rt = classify_defects(trunc, ref, expected=1)
    files = [out / "band_full.csv", out / "band_truncated.csv"]
    write_band_csv(files[0], full, rf)
    write_band_csv(files[1], trunc, rt)
    errs = [abs(a[0][0] - b[0][0]) for a, b in zip(rf.defect_bands, rt.defect_bands)]
    return files, {"defect_error": max(errs), "defect_error_by_alpha": errs}


def _two_defect(config, out, threads):
    if config.scenario is not Scenario.two_defect:
        raise ConfigError("unknown_scenario", "scenario", "two_defect experiment needs scenario two_defect")
    chain = build_scenario(config)
    Cs = _sweep(config, chain, threads)
    ref = _reference(config, threads)
    summary = {"defect_separation": config.defect_separation}
    files = []
    for tag, width in (("full", None), ("truncated", config.band_truncation_width)):
        band = spectra_from_capacitance(Cs, chain, width, metadata=_meta(config))
        rep = classify_defects(band, ref, expected=2)
        f = out / f"band_{tag}.csv"
        write_band_csv(f, band, rep)
        files.append(f)
        suffix = "" if width is None else "_truncated"
        summary["max_gap" + suffix] = rep.max_gap
        summary["max_rd" + suffix] = rep.max_relative_difference
    return files, summary


def _ssh(config, out, threads):
    if config.scenario is not Scenario.ssh:
        config = dataclasses.replace(config, scenario=Scenario.ssh)
    chain = build_scenario(config)
    Cs = _sweep(config, chain, threads)
    band = spectra_from_capacitance(Cs, chain, config.band_truncation_width, metadata=_meta(config))
    rep = classify_interface(band, chain)
    f = out / "band.csv"
    write_band_csv(f, band, rep)
    lam = [b[0][0] for b in rep.defect_bands if b]
    return [f], {
        "interface_points": sum(1 for b in rep.defect_bands if b),
        "alpha_points": len(band.spectra),
        "interface_band_min": min(lam) if lam else math.nan,
        "interface_band_max": max(lam) if lam else math.nan,
        "notes": rep.notes,
    }


def classify_interface(band: BandStructure, chain, ipr_threshold: float = 0.2, window: int = 2):
    """Interface modes of the two-phase chain: localized within ``window``
    disks of the domain wall at ``y = 0`` (IPR criterion only; the interface
    band sits inside the bulk band range)."""
    rep = classify_defects(band, None, ipr_threshold=ipr_threshold)
    ys = chain.centers[:, 1]
    wall = float(np.interp(0.0, ys, np.arange(len(ys))))
    for k, spec in enumerate(band.spectra):
        keep = [
            j for j in rep.defect_indices[k]
            if abs(int(np.argmax(np.abs(spec.eigenvectors[:, j]))) - wall) <= window
        ]
        rep.defect_indices[k] = keep
        rep.defect_bands[k] = [(float(spec.eigenvalues[j]), float(spec.iprs[j])) for j in keep]
    lam = [l for b in rep.defect_bands for l, _ in b]
    if lam:
        n_low = len(chain) // 2
        lowest = []
        for spec, ix in zip(band.spectra, rep.defect_indices):
            rest = [spec.eigenvalues[j] for j in range(len(spec.eigenvalues)) if j not in ix]
            lowest.extend(rest[:n_low])
        lo, hi = min(lowest), max(lowest)
        if min(lam) <= hi and max(lam) >= lo:
            rep.notes.append(
                f"interface band [{min(lam):.6g}, {max(lam):.6g}] overlaps the lowest passing band [{lo:.6g}, {hi:.6g}]"
            )
    return rep


def _band(config, out, threads):
    chain = build_scenario(config)
    Cs = _sweep(config, chain, threads)
    band = spectra_from_capacitance(Cs, chain, None, metadata=_meta(config))
    files = [out / "band.csv", out / "capacitance.csv"]
    write_band_csv(files[0], band)
    write_capacitance_csv(files[1], Cs)
    ev = band.eigenvalues
    return files, {"lambda_min": float(ev.min()), "lambda_max": float(ev.max())}


_DRIVERS = {
    "decay": _decay,
    "defect": _defect,
    "two_defect": _two_defect,
    "ssh": _ssh,
    "band": _band,
}


def run_experiment(name: str, config: ScenarioConfig, threads: int | None = None) -> ExperimentResult:
    if name not in _DRIVERS:
        raise ValueError(f"unknown experiment {name!r}; choose from {EXPERIMENTS}")
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    files, summary = _DRIVERS[name](config, out, threads)
    wall = time.perf_counter() - t0
    chain_name = summary.pop("scenario", None) or (
        config.scenario.value if name not in ("defect", "ssh") else {"defect": "single_defect", "ssh": "ssh"}[name]
    )
    record = {"experiment": name, "scenario": chain_name, **summary}
    spath = out / "summary.json"
    spath.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    files.append(spath)
    for f in files:
        if not f.exists() or f.stat().st_size == 0:
            raise RuntimeError(f"declared output {f} missing or empty")
    return ExperimentResult(chain_name, files, record, wall)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="subwave", description="Quasi-periodic capacitance experiments")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", type=Path, help="YAML configuration file")
    p.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    p.add_argument("--scenario", help="scenario name when no config file is given")
    p.add_argument("--alpha-points", type=int)
    p.add_argument("--fourier-terms", type=int)
    p.add_argument("--panels", type=int)
    p.add_argument("--l", type=int, dest="l")
    p.add_argument("--truncation-width", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


_DEFAULT_SCENARIO = {
    "decay": "uniform",
    "defect": "single_defect",
    "two_defect": "two_defect",
    "ssh": "ssh",
    "band": "uniform",
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {
        "alpha_points": args.alpha_points,
        "fourier_terms": args.fourier_terms,
        "panels_per_disk": args.panels,
        "defect_separation": args.l,
        "band_truncation_width": args.truncation_width,
        "output_dir": str(args.out) if args.out else None,
    }
    try:
        if args.config:
            text = args.config.read_text()
            if args.scenario:
                overrides["scenario"] = args.scenario
            config = parse_config(text, overrides)
        else:
            overrides["scenario"] = args.scenario or _DEFAULT_SCENARIO[args.experiment]
            config = config_from_mapping({}, overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    threads = args.threads
    try:
        result = run_experiment(args.experiment, config, threads)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (DefectCountError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"outputs": [str(p) for p in result.outputs], "wall_time": round(result.wall_time, 3)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
