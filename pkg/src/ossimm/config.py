"""Run configuration: a JSON document validated against a strict schema.

Every section is optional in the file; missing keys take the defaults in
:data:`DEFAULTS`. Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from . import phantom as _phantom
from .analysis import AnalysisConfig
from .manifold import DictionaryGrid, default_f0_grid, uniform_grid, window
from .physics import SequenceParams
from .recon import LowRankConfig, OssimmConfig
from .study import StudyConfig


class ConfigError(ValueError):
    pass


METHODS = ("ossimm", "lr", "cgsense")

DEFAULTS = {
    "sequence": {"tr_s": 0.015, "te_s": 0.0027, "flip_deg": 10.0, "n_c": 10, "n_warmup_tr": 670},
    "phantom": {"n_frames": None, "n_coils": 4},
    "sampling": {"kind": "cartesian", "accel": 12.0, "center_radius": 2.0, "power": 5.0,
                 "scale": 8.0, "jitter": 0.5},
    "dictionary": {"t2_ms": [92.6], "t2_range_ms": None, "r2star_hz": [12.0, 38.0, 0.1],
                   "f0_window_hz": [-3.5, 4.5], "t1_s": 1.4, "reference_t2_ms": None,
                   "cauchy_k": _phantom.LATTICE_CAUCHY_K, "f_max_hz": _phantom.LATTICE_F_MAX_HZ},
    "recon": {"methods": list(METHODS), "init": "datashared", "window": 10,
              "ossimm": {"beta": None, "n_outer": 4, "n_cg": 2, "kappa": 15.0},
              "lr": {"alpha": None, "n_pogm": 15, "rank_target": 4},
              "cgsense": {"lambda": None, "n_iters": 19}},
    "analysis": {"corr_threshold": 0.45, "n_dct": 4, "te_eff_s": 0.0175,
                 "signal_mask_frac": 0.10, "r2s_mask_max_hz": 50.0, "r2s_range_hz": [12.0, 38.0],
                 "discard_first_block": True, "quantify_stride": 1},
    "seeds": {"phantom": 0, "sampling": 0, "noise": 0},
    "output_dir": "out",
    "signal": {"t1_ms": [1400.0], "t2_ms": [92.6], "f0_hz": [0.0, 2.0, 5.0], "n_periods": 1},
    "study": {},
}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int1 = {"type": "integer", "minimum": 1}
_triple = {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}
_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_numlist = {"type": "array", "items": _num, "minItems": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "additionalProperties": False,
            "required": list(required)}


_shape = {"type": "object"}
_region = _obj({"shape": _shape, "r2star_hz": _pos, "f0_hz": _num,
                "m0": {"oneOf": [_num, _pair]}, "t2_s": _pos, "t1_s": _pos},
               required=("shape", "r2star_hz"))
_task = _obj({"rest_s": _pos, "block_s": _pos, "n_cycles": _int1, "frame_period_s": _pos})
_hrf = _obj({k: _pos for k in ("peak_delay_s", "undershoot_delay_s", "peak_disp_s",
                               "undershoot_disp_s", "undershoot_ratio", "length_s")})

SCHEMA = _obj({
    "sequence": _obj({"tr_s": _pos, "te_s": _pos, "flip_deg": _num, "n_c": {"type": "integer"},
                      "n_warmup_tr": {"type": "integer"}}),
    "phantom": _obj({
        "ny": _int1, "nx": _int1, "regions": {"type": "array", "items": _region, "minItems": 1},
        "activation_roi": _shape, "delta_t2p_s": _num, "task": _task, "hrf": _hrf,
        "base_f0_hz": _num, "drift_hz_per_min": _num, "resp_amp_hz": _num,
        "resp_period_s": _pos, "tsnr_db": _num, "seed": {"type": "integer"},
        "n_frames": {"oneOf": [{"type": "null"}, _int1]}, "n_coils": _int1}),
    "sampling": _obj({"kind": {"enum": ["cartesian", "nonuniform"]}, "accel": _pos,
                      "center_radius": {"type": "number", "minimum": 0}, "power": _num,
                      "scale": _pos, "jitter": {"type": "number", "minimum": 0, "maximum": 0.5}}),
    "dictionary": _obj({"t2_ms": _numlist, "t2_range_ms": {"oneOf": [{"type": "null"}, _triple]},
                        "r2star_hz": _triple,
                        "f0_window_hz": {"oneOf": [{"type": "null"}, _pair]},
                        "t1_s": _pos, "reference_t2_ms": {"oneOf": [{"type": "null"}, _pos]},
                        "cauchy_k": {"type": "integer", "minimum": 2}, "f_max_hz": _pos}),
    "recon": _obj({
        "methods": {"type": "array", "items": {"enum": list(METHODS)}, "minItems": 1,
                    "uniqueItems": True},
        "init": {"enum": ["zero", "adjoint", "datashared"]}, "window": _int1,
        "ossimm": _obj({"beta": {"oneOf": [{"type": "null"}, _num]}, "n_outer": _int1,
                        "n_cg": _int1, "kappa": _num}),
        "lr": _obj({"alpha": {"oneOf": [{"type": "null"}, _num]}, "n_pogm": _int1,
                    "rank_target": _int1}),
        "cgsense": _obj({"lambda": {"oneOf": [{"type": "null"}, _num]}, "n_iters": _int1})}),
    "analysis": _obj({"corr_threshold": _num, "n_dct": _int1, "te_eff_s": _pos,
                      "signal_mask_frac": _num, "r2s_mask_max_hz": _num, "r2s_range_hz": _pair,
                      "discard_first_block": {"type": "boolean"}, "quantify_stride": _int1}),
    "seeds": _obj({"phantom": {"type": "integer"}, "sampling": {"type": "integer"},
                   "noise": {"type": "integer"}}),
    "output_dir": {"type": "string", "minLength": 1},
    "signal": _obj({"t1_ms": _numlist, "t2_ms": _numlist, "f0_hz": _numlist,
                    "n_periods": _int1}),
    "study": _obj({
        "t1_s": _pos, "t2_s": _pos, "baseline_r2star_hz": _pos, "delta_t2p_s": _num,
        "biased_r2star_hz": _pos, "biased_t2_s": _pos, "t2_grid_ms": _triple,
        "r2star_grid_hz": _triple, "f0_window_hz": _pair, "task": _task,
        "drift_hz_per_min": _num, "resp_amp_hz": _num, "resp_period_s": _pos, "tsnr_db": _num,
        "seed": {"type": "integer"}, "cauchy_k": {"type": "integer", "minimum": 2},
        "f_max_hz": _pos}),
})


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class RunConfig:
    """Validated, defaults-merged configuration."""

    data: dict
    base_dir: Path = Path(".")

    @classmethod
    def from_dict(cls, doc: dict, base_dir=".") -> "RunConfig":
        try:
            jsonschema.validate(doc, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"invalid config at {where}: {exc.message}") from None
        data = _merge(DEFAULTS, doc)
        cfg = cls(data, Path(base_dir))
        cfg._check()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(doc, path.parent)

    def _check(self):
        # build every typed view once so semantic errors surface as config errors
        try:
            self.sequence()
            self.phantom_spec()
            self.analysis()
            self.ossimm()
            self.lowrank()
            self.study()
            self.dictionary_grid()
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None

    # -- typed views --------------------------------------------------------

    def __getitem__(self, key):
        return self.data[key]

    @property
    def output_dir(self) -> Path:
        p = Path(self.data["output_dir"])
        return p if p.is_absolute() else self.base_dir / p

    def sequence(self) -> SequenceParams:
        return SequenceParams.from_dict(self.data["sequence"])

    def phantom_spec(self) -> _phantom.PhantomSpec:
        d = {k: v for k, v in self.data["phantom"].items() if k not in ("n_frames", "n_coils")}
        d.setdefault("seed", self.data["seeds"]["phantom"])
        return _phantom.PhantomSpec.from_dict(d)

    @property
    def n_frames(self) -> int | None:
        return self.data["phantom"]["n_frames"]

    @property
    def n_coils(self) -> int:
        return self.data["phantom"]["n_coils"]

    def dictionary_grid(self) -> DictionaryGrid:
        d = self.data["dictionary"]
        if d["t2_range_ms"] is not None:
            t2 = uniform_grid(*d["t2_range_ms"]) / 1000.0
        else:
            t2 = np.asarray(d["t2_ms"], dtype=np.float64) / 1000.0
        f0 = default_f0_grid()
        if d["f0_window_hz"] is not None:
            f0 = window(f0, *d["f0_window_hz"])
        ref = None if d["reference_t2_ms"] is None else d["reference_t2_ms"] / 1000.0
        return DictionaryGrid(t2, uniform_grid(*d["r2star_hz"]), f0, d["t1_s"], ref)

    @property
    def cauchy(self) -> tuple[int, float]:
        d = self.data["dictionary"]
        return int(d["cauchy_k"]), float(d["f_max_hz"])

    def ossimm(self) -> OssimmConfig:
        o = self.data["recon"]["ossimm"]
        return OssimmConfig(o["beta"], o["n_outer"], o["n_cg"], o["kappa"])

    def lowrank(self) -> LowRankConfig:
        o = self.data["recon"]["lr"]
        return LowRankConfig(o["alpha"], o["n_pogm"], o["rank_target"])

    def analysis(self) -> AnalysisConfig:
        a = {k: v for k, v in self.data["analysis"].items() if k != "quantify_stride"}
        return AnalysisConfig(**a)

    def study(self) -> StudyConfig:
        return StudyConfig.from_dict(self.data["study"])

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2)

