"""Config-driven runs: scene -> Green's functions -> CSM -> steering -> maps -> criteria.

A run is described by a mapping (usually a YAML file)::

    scene: scene.yaml            # path, inline scene mapping, or {preset: reference, spacing: 0.05}
    gf: {ism: {max_order: 3}}    # or {freefield: {}} or {import: {path: gf.bin}}
    csm:
      synthetic: {amplitude: 1.0, gf: {ism: {}}}   # gf defaults to the steering gf
      # or wav: {path: rec.wav, block_len: 4096, overlap: 0.5, window: hann}
    steering: {preset: I}        # or {alpha: 1.0, beta: 2.0}
    frequencies: [480, 1080]     # or {start: 120, stop: 2040, step: 120, dense: {...}}
    mask: grid                   # grid | none | {box_min: [...], box_max: [...]}
    diagonal_removal: false
    output: out/

Relative paths are resolved against the directory of the config file.

Outputs, all deterministic for identical inputs:

``maps/src<k>_<f>Hz.map``
    one ``MAP1`` file per source position and frequency (plus ``.csv`` when
    ``map_csv: true``).
``criteria.json`` / ``criteria.csv``
    per-position criteria and their per-frequency means.
``manifest.json``
    config hash, library versions, provenance tags and output checksums.

The number of worker threads comes from ``GFBEAM_WORKERS`` (default 1).
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import os
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .beamform import dirty_map, export_map_binary, export_map_csv
from .csm import WelchParams, read_record, remove_diagonal, synthetic_csm, welch_csm
from .errors import GfBeamError
from .greens import DEFAULT_MAX_ORDER, FreeFieldProvider, IsmProvider, evaluate_gf_tensor, import_gf_file
from .metrics import CRITERIA, aggregate, criteria_to_csv, criteria_to_json, evaluate_map
from .scene import load_scene, reference_scene, scene_from_dict
from .steering import SteeringParams, steering_set

WORKERS_ENV = "GFBEAM_WORKERS"
DEFAULT_FREQUENCIES = {"start": 120.0, "stop": 2040.0, "step": 120.0}

_GF_KINDS = ("freefield", "ism", "import")
_CSM_KINDS = ("synthetic", "wav")


def _config_error(msg):
    return GfBeamError("CONFIG", msg)


def _one_of(section, name, kinds):
    if not isinstance(section, dict) or not section:
        raise _config_error(f"'{name}' must be a mapping with one of {kinds}")
    keys = [k for k in section if k in kinds]
    extra = [k for k in section if k not in kinds]
    if extra:
        raise _config_error(f"'{name}': unknown key(s) {extra}; expected one of {kinds}")
    if len(keys) != 1:
        raise _config_error(f"'{name}' needs exactly one of {kinds}, got {keys}")
    body = section[keys[0]]
    return keys[0], dict(body or {})


def frequency_list(spec):
    """Expand a frequency list or a ``{start, stop, step[, dense]}`` range.

    ``dense`` adds a second range (same keys) merged into the first; the
    result is sorted and unique.
    """
    if spec is None:
        spec = DEFAULT_FREQUENCIES
    if isinstance(spec, dict):
        try:
            start, stop, step = float(spec["start"]), float(spec["stop"]), float(spec["step"])
        except KeyError as exc:
            raise _config_error(f"frequency range is missing {exc}") from None
        if step <= 0 or stop < start:
            raise _config_error("frequency range needs step > 0 and stop >= start")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        freqs = list(start + step * np.arange(n))
        if spec.get("dense"):
            freqs += frequency_list({k: v for k, v in spec["dense"].items() if k != "dense"})
    else:
        freqs = [float(f) for f in spec]
    freqs = sorted(set(round(f, 9) for f in freqs))
    if not freqs or any(f <= 0 for f in freqs):
        raise _config_error("frequencies must be a nonempty list of positive values")
    return freqs


@dataclass
class RunConfig:
    """Validated run description; see the module docstring for the layout."""

    scene: object
    gf: tuple
    csm: tuple
    steering: SteeringParams
    frequencies: list
    output: Path
    mask: object = "grid"
    diagonal_removal: bool = False
    map_csv: bool = False
    base_dir: Path = field(default_factory=Path.cwd)
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, cfg, base_dir=None):
        if not isinstance(cfg, dict):
            raise _config_error("run config must be a mapping")
        known = {"scene", "gf", "csm", "steering", "frequencies", "output", "mask",
                 "diagonal_removal", "map_csv"}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise _config_error(f"unknown config key(s) {unknown}")
        for key in ("scene", "gf", "csm", "steering"):
            if key not in cfg:
                raise _config_error(f"missing '{key}'")
        gf = _one_of(cfg["gf"], "gf", _GF_KINDS)
        csm = _one_of(cfg["csm"], "csm", _CSM_KINDS)
        if csm[0] == "synthetic" and "gf" in csm[1]:
            _one_of(csm[1]["gf"], "csm.synthetic.gf", _GF_KINDS)
        st = cfg["steering"]
        if not isinstance(st, dict):
            raise _config_error("'steering' must be a mapping")
        if "preset" in st:
            if "alpha" in st or "beta" in st:
                raise _config_error("steering: give a preset or alpha/beta, not both")
            steering = SteeringParams.from_preset(str(st["preset"]))
        elif "alpha" in st and "beta" in st:
            steering = SteeringParams(float(st["alpha"]), float(st["beta"]))
        else:
            raise _config_error("steering needs 'preset' or both 'alpha' and 'beta'")
        mask = cfg.get("mask", "grid")
        if not (mask in ("grid", "none") or (isinstance(mask, dict) and {"box_min", "box_max"} <= set(mask))):
            raise _config_error("mask must be 'grid', 'none' or {box_min, box_max}")
        base = Path(base_dir) if base_dir is not None else Path.cwd()
        return cls(
            scene=cfg["scene"],
            gf=gf,
            csm=csm,
            steering=steering,
            frequencies=frequency_list(cfg.get("frequencies")),
            output=base / cfg.get("output", "out"),
            mask=mask,
            diagonal_removal=bool(cfg.get("diagonal_removal", False)),
            map_csv=bool(cfg.get("map_csv", False)),
            base_dir=base,
            raw=copy.deepcopy(cfg),
        )

    @classmethod
    def load(cls, path, overrides=None):
        path = Path(path)
        with open(path) as fh:
            cfg = yaml.safe_load(fh) or {}
        cfg.update(overrides or {})
        return cls.from_dict(cfg, path.parent)

    def config_hash(self):
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canon.encode()).hexdigest()


def build_scene(spec, base_dir):
    if isinstance(spec, str):
        return load_scene(Path(base_dir) / spec)
    if isinstance(spec, dict) and "preset" in spec:
        opts = {k: v for k, v in spec.items() if k != "preset"}
        if spec["preset"] != "reference":
            raise _config_error(f"unknown scene preset {spec['preset']!r}")
        try:
            return reference_scene(**opts)
        except TypeError as exc:
            raise _config_error(f"scene preset options: {exc}") from None
    if isinstance(spec, dict):
        return scene_from_dict(spec)
    raise _config_error("'scene' must be a path, a scene mapping or {preset: reference}")


def build_gf(gf, scene, frequencies, base_dir):
    kind, opts = gf
    if kind == "freefield":
        return evaluate_gf_tensor(FreeFieldProvider(scene.c), scene, frequencies)
    if kind == "ism":
        order = int(opts.get("max_order", DEFAULT_MAX_ORDER))
        return evaluate_gf_tensor(IsmProvider(scene.reflectors, scene.c, order), scene, frequencies)
    if "path" not in opts:
        raise _config_error("gf.import needs 'path'")
    return import_gf_file(Path(base_dir) / opts["path"], scene, frequencies)


def _stage(name, fn, *args, **kwargs):
    """Run one pipeline stage, tagging errors with the stage name."""
    try:
        return fn(*args, **kwargs)
    except GfBeamError as exc:
        if exc.context.get("stage"):
            raise
        raise GfBeamError(exc.code, f"[{name}] {exc}", {**exc.context, "stage": name}) from exc


def workers():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise _config_error(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def _freq_tag(f):
    return f"{f:.2f}".replace(".", "p")


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run(config):
    """Execute a run and write its artifacts.

    Returns
    -------
    dict
        The manifest written to ``manifest.json``.
    """
    if not isinstance(config, RunConfig):
        config = RunConfig.from_dict(config)
    scene = _stage("scene", build_scene, config.scene, config.base_dir)
    if not scene.sources:
        raise GfBeamError("CONFIG", "[scene] the scene defines no source positions")
    freqs = config.frequencies
    gf = _stage("greens", build_gf, config.gf, scene, freqs, config.base_dir)
    steer = _stage("steering", steering_set, gf, config.steering)
    source_idx = _stage("scene", scene.source_indices)

    kind, opts = config.csm
    if kind == "synthetic":
        csm_gf = gf
        if "gf" in opts:
            csm_gf = _stage("greens", build_gf, _one_of(opts["gf"], "csm.synthetic.gf", _GF_KINDS),
                            scene, freqs, config.base_dir)
        amplitudes = [complex(opts["amplitude"]) if "amplitude" in opts else s.amplitude
                      for s in scene.sources]
        csms = [_stage("csm", synthetic_csm, csm_gf, n, a) for n, a in zip(source_idx, amplitudes)]
        csm_provenance = f"synthetic/{csm_gf.provenance}"
    else:
        if "path" not in opts:
            raise _config_error("csm.wav needs 'path'")
        record = _stage("csm", read_record, Path(config.base_dir) / opts["path"],
                        **({"calibration": float(opts["calibration"])} if "calibration" in opts else {}))
        params = _stage("csm", WelchParams, int(opts.get("block_len", 4096)), float(opts.get("overlap", 0.5)),
                        opts.get("window", "hann"), opts.get("normalization", "amplitude"))
        measured = _stage("csm", welch_csm, record, params, freqs)
        csms = [measured] * len(scene.sources)
        amplitudes = [s.amplitude for s in scene.sources]
        csm_provenance = f"wav/{Path(opts['path']).name}"
    if config.diagonal_removal:
        csms = [remove_diagonal(c) for c in csms]

    if config.mask == "grid":
        mask = scene.grid.active_mask()
    elif config.mask == "none":
        mask = None
    else:
        mask = scene.grid.box_mask(config.mask["box_min"], config.mask["box_max"])

    def job(q):
        f = freqs[q]
        out = []
        for k, (csm, n) in enumerate(zip(csms, source_idx)):
            mp = _stage("beamform", dirty_map, csm, steer, f, scene.grid)
            crit = _stage("metrics", evaluate_map, mp, n, abs(amplitudes[k]) ** 2, mask)
            out.append((mp, crit))
        return out

    n_workers = workers()
    if n_workers == 1:
        results = [job(q) for q in range(len(freqs))]
    else:
        with ThreadPoolExecutor(n_workers) as pool:
            results = list(pool.map(job, range(len(freqs))))

    out_dir = Path(config.output)
    (out_dir / "maps").mkdir(parents=True, exist_ok=True)
    files = []
    for q, f in enumerate(freqs):
        for k, (mp, _) in enumerate(results[q]):
            stem = out_dir / "maps" / f"src{k}_{_freq_tag(f)}Hz"
            export_map_binary(mp, stem.with_suffix(".map"))
            files.append(stem.with_suffix(".map"))
            if config.map_csv:
                export_map_csv(mp, stem.with_suffix(".csv"))
                files.append(stem.with_suffix(".csv"))

    per_position = [[results[q][k][1] for q in range(len(freqs))] for k in range(len(csms))]
    agg = aggregate(per_position)
    labels = [f"src{k}" for k in range(len(csms))]
    criteria_to_json(per_position, agg, out_dir / "criteria.json", labels)
    criteria_to_csv(per_position, out_dir / "criteria.csv", labels)
    files += [out_dir / "criteria.json", out_dir / "criteria.csv"]

    manifest = {
        "config_hash": config.config_hash(),
        "versions": {
            "gfbeam": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "provenance": {
            "steering_gf": gf.provenance,
            "csm": csm_provenance,
            "steering": config.steering.label,
            "diagonal_removal": config.diagonal_removal,
        },
        "speed_of_sound": scene.c,
        "frequencies": freqs,
        "sources": [s.position.tolist() for s in scene.sources],
        "source_indices": [int(n) for n in source_idx],
        "n_maps": len(freqs) * len(csms),
        "files": {str(p.relative_to(out_dir)): _sha256(p) for p in files},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _load_run(run_dir):
    run_dir = Path(run_dir)
    try:
        crit = json.loads((run_dir / "criteria.json").read_text())
        manifest = json.loads((run_dir / "manifest.json").read_text())
    except FileNotFoundError as exc:
        raise GfBeamError("NOT_A_RUN", f"{run_dir}: {exc.filename} not found") from None
    return crit, manifest


def _delta(a, b):
    if a is None or b is None:
        return None
    return b - a


def compare(run_a, run_b, output=None):
    """Per-criterion, per-frequency differences ``b - a`` between two runs.

    The resolution is also reported divided by the wavelength ``c / f``.

    Returns
    -------
    dict
        ``{"frequencies", "aggregate": {criterion: [delta, ...]},
        "positions": [{criterion: [delta, ...]}, ...]}``.
    """
    crit_a, man_a = _load_run(run_a)
    crit_b, man_b = _load_run(run_b)
    freqs = crit_a["aggregate"]["frequencies"]
    if freqs != crit_b["aggregate"]["frequencies"]:
        raise GfBeamError("AXIS_MISMATCH", "runs do not share a frequency axis")
    if man_a["sources"] != man_b["sources"]:
        raise GfBeamError("AXIS_MISMATCH", "runs do not share source positions")
    c = man_a["speed_of_sound"]
    lam = [c / f for f in freqs]

    def table(get_a, get_b):
        rows = {}
        for name in CRITERIA:
            rows[name] = [_delta(x, y) for x, y in zip(get_a(name), get_b(name))]
        rows["resolution_per_wavelength"] = [
            None if d is None else d / l for d, l in zip(rows["resolution"], lam)
        ]
        return rows

    agg = table(lambda n: crit_a["aggregate"]["means"][n], lambda n: crit_b["aggregate"]["means"][n])
    positions = []
    for pa, pb in zip(crit_a["positions"], crit_b["positions"]):
        positions.append(table(lambda n: [c_[n] for c_ in pa["criteria"]],
                               lambda n: [c_[n] for c_ in pb["criteria"]]))
    report = {
        "run_a": str(run_a),
        "run_b": str(run_b),
        "frequencies": freqs,
        "wavelengths": lam,
        "aggregate": agg,
        "positions": positions,
    }
    if output is not None:
        output = Path(output)
        output.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        _compare_csv(report, output.with_suffix(".csv"))
    return report


def _compare_csv(report, path):
    import csv

    cols = [*CRITERIA, "resolution_per_wavelength"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frequency", "wavelength", *("delta_" + c for c in cols)])
        for q, f in enumerate(report["frequencies"]):
            w.writerow([repr(f), repr(report["wavelengths"][q]),
                        *("" if report["aggregate"][c][q] is None else repr(report["aggregate"][c][q])
                          for c in cols)])


def format_report(report):
    """Plain-text table of the aggregate deltas."""
    cols = [("spatial_deviation", "d|dy| m"), ("level_error", "dL dB"), ("resolution", "db m"),
            ("resolution_per_wavelength", "db/lam"), ("msr", "dMSR dB"), ("spr", "dSPR dB")]
    lines = ["f Hz".rjust(9) + "".join(h.rjust(11) for _, h in cols)]
    for q, f in enumerate(report["frequencies"]):
        cells = []
        for key, _ in cols:
            v = report["aggregate"][key][q]
            cells.append("n/a".rjust(11) if v is None else f"{v:11.4g}")
        lines.append(f"{f:9.1f}" + "".join(cells))
    return "\n".join(lines)

