"""JSON model description files.

Two forms are accepted::

    {"template": "buck_pvmc", "params": {"v_s": 25.0}}

    {"matrices": {"A1": [[...]], "A2": ..., "B1": ..., "B2": ..., "C": [...],
                  "D": [...], "E1": [...], "E2": [...]},
     "ramp": {"V_l": 0.0, "V_h": 1.0, "T": 1e-5},
     "input": [12.0, 5.0],
     "scheme": {"kind": "fixed_frequency", "switch_sense": "y_above", "on_time": null},
     "state_names": [...], "input_names": [...], "label": "..."}

Template files may also carry ``ramp``/``input``/``scheme``; these are ignored
on load (the template derives them) and written only for reference. Floats
are written with Python's shortest round-trip repr, so save/load is lossless.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ModelFormatError
from .model import ControlScheme, ConverterModel, RampSpec, SwitchedSystem
from .topologies import build_model

FORMAT = "bifscope-model"
VERSION = 1
_MATRIX_KEYS = ("A1", "A2", "B1", "B2", "C", "D", "E1", "E2")


def model_to_dict(model: ConverterModel) -> dict:
    sys = model.system
    out = {
        "format": FORMAT,
        "version": VERSION,
        "label": model.label,
        "ramp": {"V_l": model.ramp.V_l, "V_h": model.ramp.V_h, "T": model.ramp.T},
        "input": [float(v) for v in model.u],
        "scheme": {"kind": model.scheme.kind, "switch_sense": model.scheme.switch_sense,
                   "on_time": model.scheme.on_time},
    }
    if model.template is not None:
        out["template"] = model.template
        out["params"] = {k: v for k, v in model.params.items()}
    else:
        out["matrices"] = {k: np.asarray(getattr(sys, k)).tolist() for k in _MATRIX_KEYS}
        out["state_names"] = list(sys.state_names)
        out["input_names"] = list(sys.input_names)
    return out


def model_from_dict(data: dict) -> ConverterModel:
    if not isinstance(data, dict):
        raise ModelFormatError("model description must be a JSON object")
    fmt = data.get("format", FORMAT)
    if fmt != FORMAT:
        raise ModelFormatError(f"unknown format {fmt!r}")
    try:
        if "template" in data:
            model = build_model(data["template"], data.get("params") or {})
            return ConverterModel(model.system, model.ramp, model.u, model.scheme, model.template,
                                  model.params, data.get("label", ""))
        if "matrices" not in data:
            raise ModelFormatError("model needs either 'template' or 'matrices'")
        mats = data["matrices"]
        missing = [k for k in _MATRIX_KEYS if k not in mats]
        if missing:
            raise ModelFormatError(f"missing matrices: {missing}")
        kwargs = {k: np.asarray(mats[k], dtype=float) for k in _MATRIX_KEYS}
        if data.get("state_names"):
            kwargs["state_names"] = tuple(data["state_names"])
        if data.get("input_names"):
            kwargs["input_names"] = tuple(data["input_names"])
        sys = SwitchedSystem(**kwargs)
        r = data["ramp"]
        ramp = RampSpec(float(r["V_l"]), float(r["V_h"]), float(r["T"]))
        s = data.get("scheme") or {}
        scheme = ControlScheme(**{k: v for k, v in s.items() if v is not None})
        return ConverterModel(sys, ramp, np.asarray(data["input"], dtype=float), scheme, label=data.get("label", ""))
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"invalid model description: {exc}") from exc


def dumps(model: ConverterModel) -> str:
    return json.dumps(model_to_dict(model), indent=2, sort_keys=True)


def loads(text: str) -> ConverterModel:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"malformed JSON: {exc}") from exc
    return model_from_dict(data)


def save_model(model: ConverterModel, path) -> None:
    Path(path).write_text(dumps(model) + "\n")


def load_model(path) -> ConverterModel:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from exc
    return loads(text)
