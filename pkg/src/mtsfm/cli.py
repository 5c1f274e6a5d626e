"""Command-line front end: synthesize, analyze and optimize MTSFM waveforms.

Every run is described by one JSON config (or a built-in recipe). Outputs are
plain files: CSV curves (a ``#`` provenance line, a header row, independent
variable first), JSON reports, and row-major text matrices with a one-line
header. Each file carries the config hash and the seed and nothing that
depends on wall-clock time or thread count, so equal hashes mean equal bytes.

Exit codes: 0 success, 2 config error, 3 optimizer did not converge,
4 I/O error.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import jsonschema
import numpy as np

from .analysis import (acf_closed_form, ambiguity_numeric, ccf_area, ccf_numeric,
                       default_dopplers, isr_exact, metrics_report, rms_bandwidth_sq,
                       rms_bandwidth_sq_numeric)
from .core import (RECT, Symmetry, TaperSpec, WaveformError, WaveformParams, make_grid,
                   to_db)
from .gbf import gbf_via_fft
from .optimizer import (FamilyDesignProblem, OptimizerSettings, case_weights,
                        init_family, optimize_family)
from .synthesis import (modulation_function, random_waveform, spectrogram, spectrum_numeric,
                        swept_bandwidth, synthesize)

log = logging.getLogger("mtsfm")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3
EXIT_IO = 4

MODES = ("Synth", "Analyze", "OptimizeFamily")
WEIGHT_CHOICES = ("equal", "ccf-heavy", "acf-heavy", "custom")

_TAPER = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["rect", "tukey"]},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    },
    "required": ["kind"],
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["mode"],
    "properties": {
        "mode": {"enum": list(MODES)},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "out": {"type": "string"},
        "oversample": {"type": "number", "minimum": 2},
        "threads": {"type": "integer", "minimum": 1},
        "waveform": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "duration": {"type": "number", "exclusiveMinimum": 0},
                "symmetry": {"enum": ["Even", "Odd"]},
                "a0": {"type": "number"},
                "indices": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "num_harmonics": {"type": "integer", "minimum": 1},
                "tbp": {"type": "number", "exclusiveMinimum": 0},
                "init_weighting": {"enum": ["flat", "one_over_k"]},
                "taper": _TAPER,
            },
        },
        "family": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "members": {"type": "integer", "minimum": 2},
                "delta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "weights": {"enum": list(WEIGHT_CHOICES)},
                "weights_isr": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "weights_ccf": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "max_iter": {"type": "integer", "minimum": 1},
                "restarts": {"type": "integer", "minimum": 1},
            },
        },
        "analysis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "closed_form": {"type": "boolean"},
                "doppler_span": {"type": "number", "exclusiveMinimum": 0},
                "doppler_step": {"type": "number", "exclusiveMinimum": 0},
                "af_delay_stride": {"type": "integer", "minimum": 1},
            },
        },
        "export": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"db_floor": {"type": "number", "maximum": 0}},
        },
    },
}

_WAVEFORM_DEFAULTS = {"duration": 1.0, "symmetry": "Even", "a0": 0.0,
                      "init_weighting": "one_over_k", "taper": {"kind": "rect"}}
_FAMILY_DEFAULTS = {"members": 2, "delta": 0.2, "weights": "equal", "max_iter": 500,
                    "restarts": 1}
_ANALYSIS_DEFAULTS = {"closed_form": True, "doppler_span": 20.0, "doppler_step": 0.25,
                      "af_delay_stride": 4}

# Fixed seeds, listed in the README. Reproduction is statistical in kind.
_SECTION3 = {"duration": 1.0, "num_harmonics": 64, "tbp": 100.0,
             "taper": {"kind": "tukey", "alpha": 0.05}}
RECIPES: Dict[str, dict] = {
    "fig1": {"mode": "Synth", "seed": 1,
             "waveform": {"duration": 1.0, "num_harmonics": 16, "tbp": 100.0,
                          "taper": {"kind": "tukey", "alpha": 0.05}}},
    "fig2": {"mode": "OptimizeFamily", "seed": 1, "waveform": _SECTION3,
             "family": {"members": 2, "delta": 0.2, "weights": "equal"}},
    "fig3": {"mode": "OptimizeFamily", "seed": 1, "waveform": _SECTION3,
             "family": {"members": 2, "delta": 0.2, "weights": "ccf-heavy"}},
    "fig4": {"mode": "OptimizeFamily", "seed": 1, "waveform": _SECTION3,
             "family": {"members": 2, "delta": 0.2, "weights": "acf-heavy"}},
}


class ConfigError(Exception):
    """Invalid run configuration."""


# ---------------------------------------------------------------- config

def _path_str(parts: Sequence) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def validate_config(cfg: dict) -> None:
    """Raise :class:`ConfigError` naming the offending key and schema path."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (list(e.absolute_path),
                                                               list(e.schema_path)))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ConfigError(f"{_path_str(err.absolute_path)}: {err.message} "
                          f"(schema path: {'/'.join(map(str, err.schema_path))})")


def resolve_config(cfg: dict) -> dict:
    """Validate ``cfg`` and fill defaults. The result fully determines a run."""
    validate_config(cfg)
    out = copy.deepcopy(cfg)
    out.setdefault("seed", 0)
    out.setdefault("oversample", 16)
    out.setdefault("threads", 1)
    wf = {**_WAVEFORM_DEFAULTS, **out.get("waveform", {})}
    if wf["taper"]["kind"] == "tukey" and "alpha" not in wf["taper"]:
        raise ConfigError("$.waveform.taper.alpha: required for a tukey taper")
    has_idx = "indices" in wf
    has_draw = "num_harmonics" in wf and "tbp" in wf
    if has_idx == has_draw:
        raise ConfigError("$.waveform: give either indices or num_harmonics with tbp")
    out["waveform"] = wf
    out["export"] = {"db_floor": -100.0, **out.get("export", {})}
    out["analysis"] = {**_ANALYSIS_DEFAULTS, **out.get("analysis", {})}
    if out["mode"] == "OptimizeFamily" or "family" in out:
        fam = {**_FAMILY_DEFAULTS, **out.get("family", {})}
        if has_idx:
            raise ConfigError("$.waveform.indices: families are drawn from num_harmonics and tbp")
        if wf["a0"] != 0.0:
            raise ConfigError("$.waveform.a0: family design needs a0 = 0")
        n_pairs = fam["members"] * (fam["members"] - 1) // 2
        if fam["weights"] == "custom":
            if len(fam.get("weights_isr", [])) != fam["members"] or \
                    len(fam.get("weights_ccf", [])) != n_pairs:
                raise ConfigError("$.family: custom weights need weights_isr per member "
                                  "and weights_ccf per pair")
        out["family"] = fam
    return out


def config_hash(cfg: dict) -> str:
    """SHA-256 of the resolved config minus settings that cannot change results."""
    keep = {k: v for k, v in cfg.items() if k not in ("out", "threads")}
    blob = json.dumps(keep, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def build_config(args: argparse.Namespace) -> dict:
    if args.recipe:
        cfg = copy.deepcopy(RECIPES[args.recipe])
    else:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"$: not valid JSON ({exc})") from None
        if not isinstance(cfg, dict):
            raise ConfigError("$: config must be a JSON object")
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.oversample is not None:
        cfg["oversample"] = args.oversample
    if args.threads is not None:
        cfg["threads"] = args.threads
    if args.weights is not None:
        cfg.setdefault("family", {})["weights"] = args.weights
    return resolve_config(cfg)


# ---------------------------------------------------------------- model setup

def _taper(cfg: dict) -> TaperSpec:
    t = cfg["waveform"]["taper"]
    return TaperSpec.tukey(t["alpha"]) if t["kind"] == "tukey" else RECT


def _symmetry(cfg: dict) -> Symmetry:
    return Symmetry.EVEN if cfg["waveform"]["symmetry"] == "Even" else Symmetry.ODD


def waveforms_from_config(cfg: dict) -> List[WaveformParams]:
    """One waveform, or a seeded family when the config has a ``family`` block."""
    wf = cfg["waveform"]
    if "indices" in wf:
        return [WaveformParams(wf["duration"], wf["indices"], _symmetry(cfg), wf["a0"],
                               _taper(cfg))]
    count = cfg["family"]["members"] if "family" in cfg else 1
    rng = np.random.default_rng(cfg["seed"])
    out = []
    for _ in range(count):
        p = random_waveform(rng, wf["num_harmonics"], wf["duration"], wf["tbp"],
                            _symmetry(cfg), _taper(cfg), wf["init_weighting"])
        out.append(p.replace(a0=wf["a0"]) if wf["a0"] else p)
    return out


def problem_from_config(cfg: dict) -> FamilyDesignProblem:
    wf, fam = cfg["waveform"], cfg["family"]
    settings = OptimizerSettings(max_iter=fam["max_iter"], restarts=fam["restarts"],
                                 oversample=float(cfg["oversample"]),
                                 threads=cfg["threads"])
    case = fam["weights"]
    pr = init_family(fam["members"], wf["num_harmonics"], wf["duration"], wf["tbp"],
                     cfg["seed"], delta=fam["delta"], taper=_taper(cfg),
                     symmetry=_symmetry(cfg),
                     weights="equal" if case == "custom" else case,
                     init_weighting=wf["init_weighting"], settings=settings)
    if case == "custom":
        pr = pr.with_weights(fam["weights_isr"], fam["weights_ccf"])
    return pr


# ---------------------------------------------------------------- writers

def _fmt(x) -> str:
    x = float(x)
    return repr(x) if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))


class Exporter:
    """Writes provenance-stamped files into one output directory."""

    def __init__(self, out_dir: Path, cfg: dict):
        self.out_dir = Path(out_dir)
        self.hash = config_hash(cfg)
        self.seed = cfg["seed"]
        self.floor = cfg["export"]["db_floor"]
        self.written: List[Path] = []

    @property
    def stamp(self) -> str:
        return f"# config_hash={self.hash} seed={self.seed}"

    def _write(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        self.written.append(path)
        return path

    def db(self, power) -> np.ndarray:
        return to_db(np.asarray(power, dtype=float), floor_db=self.floor)

    def csv(self, name: str, header: Sequence[str], columns: Sequence[np.ndarray]) -> Path:
        buf = io.StringIO()
        buf.write(self.stamp + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_fmt(v) for v in row])
        return self._write(name, buf.getvalue())

    def matrix(self, name: str, values: np.ndarray, **axes) -> Path:
        """Row-major matrix; the header line records the axes as start/step/count."""
        desc = " ".join(f"{k}={v}" for k, v in axes.items())
        rows, cols = values.shape
        lines = [f"{self.stamp} rows={rows} cols={cols} {desc}".rstrip()]
        lines += [" ".join(_fmt(v) for v in row) for row in values]
        return self._write(name, "\n".join(lines) + "\n")

    def json(self, name: str, payload: dict) -> Path:
        doc = {"config_hash": self.hash, "seed": self.seed, **payload}
        return self._write(name, json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, Symmetry):
        return x.value
    return x


def _axis(values: np.ndarray) -> str:
    step = float(values[1] - values[0]) if values.size > 1 else 0.0
    return f"{_fmt(values[0])}:{_fmt(step)}:{values.size}"


def _params_dict(p: WaveformParams) -> dict:
    return {"duration": p.duration, "symmetry": p.symmetry.value, "a0": p.a0,
            "indices": p.indices.tolist(), "taper": p.taper.kind.value,
            "tukey_alpha": p.taper.tukey_alpha}


# ---------------------------------------------------------------- commands

def _export_af(ex: Exporter, cfg: dict, w1, w2, name: str) -> None:
    a = cfg["analysis"]
    T = w1.grid.duration
    nu = default_dopplers(T, a["doppler_span"], a["doppler_step"])
    af = ambiguity_numeric(w1, w2, dopplers=nu)
    stride = a["af_delay_stride"]
    n = w1.grid.num_samples
    keep = np.arange(n % stride, 2 * n + 1, stride)
    delays = af.delays[keep]
    ex.matrix(name, ex.db(af.power[:, keep]), rows_doppler_hz=_axis(nu),
              cols_delay_s=_axis(delays), unit="dB")


def cmd_synth(cfg: dict, out_dir: Path) -> int:
    """Samples, spectrogram, EDS, ACF, AF surface and metrics for one waveform."""
    params = waveforms_from_config(cfg)[0]
    grid = make_grid(params, cfg["oversample"])
    w = synthesize(params, grid)
    ex = Exporter(out_dir, cfg)
    t = grid.times
    ex.csv("samples.csv", ["t_s", "real", "imag", "inst_freq_hz"],
           [t, w.samples.real, w.samples.imag, modulation_function(params, t)])
    st, sf, sp = spectrogram(w)
    ex.matrix("spectrogram.txt", ex.db(sp / np.max(sp)), rows_freq_hz=_axis(sf),
              cols_time_s=_axis(st), unit="dB")
    spec = spectrum_numeric(w)
    eds = spec.eds
    ex.csv("eds.csv", ["freq_hz", "eds_db"], [spec.freqs, ex.db(eds / np.max(eds))])
    acf = ccf_numeric(w, w)
    ex.csv("acf.csv", ["tau_s", "tau_over_T", "acf_db"],
           [acf.delays, acf.delays / params.duration, ex.db(acf.power)])
    _export_af(ex, cfg, w, w, "af.txt")
    report = metrics_report(w)
    ex.json("metrics.json", {"mode": "Synth", "params": _params_dict(params),
                             "num_samples": grid.num_samples, "dt": grid.dt,
                             "metrics": report.as_dict(), "isr_db": report.isr_db,
                             "papr_db": report.papr_db})
    return EXIT_OK


def cmd_analyze(cfg: dict, out_dir: Path) -> int:
    """ACF/CCF curves, AF surface and a metrics report for one waveform or a family."""
    members = waveforms_from_config(cfg)
    first = members[0]
    if "family" in cfg:
        bw = max(_swept_plus_offset(m) for m in members)
        grid = make_grid(first, cfg["oversample"], bandwidth=bw)
    else:
        grid = make_grid(first, cfg["oversample"])
    waves = [synthesize(m, grid) for m in members]
    ex = Exporter(out_dir, cfg)
    T = first.duration
    closed = cfg["analysis"]["closed_form"]
    report: dict = {"mode": "Analyze", "members": [], "pairs": []}
    for i, (p, w) in enumerate(zip(members, waves)):
        acf = ccf_numeric(w, w)
        cols = [acf.delays, acf.delays / T, ex.db(acf.power)]
        header = ["tau_s", "tau_over_T", "acf_db"]
        entry = {"index": i + 1, "params": _params_dict(p)}
        if closed and p.taper.is_rectangular:
            cf = acf_closed_form(gbf_via_fft(p), p, acf.delays)
            cols.append(ex.db(cf.power))
            header.append("acf_closed_db")
            entry["closed_form_max_diff"] = float(np.max(np.abs(cf.values - acf.values)))
        else:
            entry["closed_form_max_diff"] = None
        ex.csv(f"acf_{i + 1}.csv", header, cols)
        isr = isr_exact(acf)
        entry.update({"isr": isr.value, "isr_db": isr.db, "tau_m": isr.tau_m,
                      "null_found": isr.null_found,
                      "beta_sq_rms": rms_bandwidth_sq(p) if p.a0 == 0.0 else
                      rms_bandwidth_sq_numeric(w),
                      "metrics": metrics_report(w).as_dict()})
        report["members"].append(entry)
    for i in range(len(waves)):
        for j in range(i + 1, len(waves)):
            r = ccf_numeric(waves[i], waves[j])
            ex.csv(f"ccf_{i + 1}{j + 1}.csv", ["tau_s", "tau_over_T", "ccf_db"],
                   [r.delays, r.delays / T, ex.db(r.power)])
            report["pairs"].append({"pair": [i + 1, j + 1], "ccf_area": ccf_area(r),
                                    "peak_db": float(np.max(ex.db(r.power)))})
    _export_af(ex, cfg, waves[0], waves[0], "af.txt")
    diffs = [m["closed_form_max_diff"] for m in report["members"]
             if m["closed_form_max_diff"] is not None]
    report["closed_form_max_diff"] = max(diffs) if diffs else None
    ex.json("metrics.json", report)
    return EXIT_OK


def _swept_plus_offset(p: WaveformParams) -> float:
    return swept_bandwidth(p) + abs(p.a0)


def _curves(ex: Exporter, name: str, waves, T: float) -> None:
    header = ["tau_s", "tau_over_T"]
    cols: List[np.ndarray] = []
    delays = None
    for i, w in enumerate(waves):
        r = ccf_numeric(w, w)
        delays = r.delays
        header.append(f"acf_{i + 1}_db")
        cols.append(ex.db(r.power))
    for i in range(len(waves)):
        for j in range(i + 1, len(waves)):
            header.append(f"ccf_{i + 1}{j + 1}_db")
            cols.append(ex.db(ccf_numeric(waves[i], waves[j]).power))
    ex.csv(name, header, [delays, delays / T, *cols])


def _coefficients(ex: Exporter, name: str, x: np.ndarray) -> None:
    k = np.arange(1, x.shape[1] + 1)
    ex.csv(name, ["k"] + [f"index_{p + 1}" for p in range(x.shape[0])], [k, *x])


def cmd_optimize_family(cfg: dict, out_dir: Path) -> int:
    """Run the family design and export coefficients, trace, curves and summary."""
    problem = problem_from_config(cfg)
    trace = optimize_family(problem)
    ex = Exporter(out_dir, cfg)
    _coefficients(ex, "coefficients_initial.csv", trace.initial_indices)
    _coefficients(ex, "coefficients_final.csv", trace.final_indices)
    P = problem.num_members
    pairs = problem.pairs
    header = (["iteration", "objective"] + [f"isr_{p + 1}_norm" for p in range(P)]
              + [f"ccf_{a + 1}{b + 1}_norm" for a, b in pairs]
              + ["max_residual", "step_norm", "line_search_trials"])
    recs = trace.records
    ex.csv("trace.csv", header,
           [[r.iteration for r in recs], [r.objective for r in recs],
            *[[r.isr_normalized[p] for r in recs] for p in range(P)],
            *[[r.ccf_normalized[j] for r in recs] for j in range(len(pairs))],
            [max(max(pair) for pair in r.residuals) for r in recs],
            [r.step_norm for r in recs], [len(r.line_search) for r in recs]])
    grid = make_grid(problem.members[0], cfg["oversample"],
                     bandwidth=max(_swept_plus_offset(m) for m in problem.members
                                   + trace.final_members))
    T = problem.members[0].duration
    before = [synthesize(m, grid) for m in problem.members]
    after = [synthesize(m, grid) for m in trace.final_members]
    _curves(ex, "curves_initial.csv", before, T)
    _curves(ex, "curves_final.csv", after, T)
    last = recs[-1]
    beta0 = np.array([rms_bandwidth_sq(m) for m in problem.members])
    summary = {
        "mode": "OptimizeFamily",
        "weight_case": cfg["family"]["weights"],
        "weights_isr": problem.weights_isr, "weights_ccf": problem.weights_ccf,
        "delta": problem.delta,
        "converged": trace.converged,
        "iterations": last.iteration,
        "evaluations": trace.evaluations,
        "restart": trace.restart,
        "objective_initial": recs[0].objective,
        "objective_final": last.objective,
        "isr_normalized": last.isr_normalized,
        "ccf_normalized": last.ccf_normalized,
        "isr_change_db": [10 * math.log10(v) for v in last.isr_normalized],
        "ccf_change_db": [10 * math.log10(v) for v in last.ccf_normalized],
        "max_residual_over_beta0_sq": float(np.max(np.array(last.residuals)
                                                   / beta0[:, None])),
        "initial_metrics": [m.as_dict() for m in trace.initial_metrics],
        "final_metrics": [m.as_dict() for m in trace.final_metrics],
    }
    ex.json("summary.json", summary)
    return EXIT_OK if trace.converged else EXIT_NOT_CONVERGED


COMMANDS = {"Synth": cmd_synth, "Analyze": cmd_analyze, "OptimizeFamily": cmd_optimize_family}


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mtsfm", description=__doc__.split("\n")[0])
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="JSON run configuration")
    src.add_argument("--recipe", choices=sorted(RECIPES), help="built-in figure recipe")
    ap.add_argument("--out", default="mtsfm_out", help="output directory")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--weights", choices=WEIGHT_CHOICES, help="family weighting case")
    ap.add_argument("--oversample", type=float, help="samples per Hz of swept bandwidth")
    ap.add_argument("--threads", type=int, help="worker threads for gradients")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    out_dir = Path(args.out)
    try:
        return COMMANDS[cfg["mode"]](cfg, out_dir)
    except WaveformError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
