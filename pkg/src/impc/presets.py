"""
Named experiment presets and their JSON representation.

A configuration document looks like::

    {
      "plant": {"A_c": [[...]], "B_c": [[...]]},
      "reference": [...],
      "problem": {"N": 30, "dt": 0.1, "input_weight": 1.0,
                  "state_weight": 1000.0, "terminal_weight": null},
      "cases": ["mpc", "impc:10,10", "impc:10,1000"],
      "certificate": {"Q_c": [[...]], "S_c": [[...]], "R_c": [[...]],
                      "rho": 2.0, "delta": 1.0},
      "sim": {"T": 5.0, "h": 0.001, "log_stride": 10, "x0": [0, 0]}
    }

Only ``plant`` is required; everything else has defaults.
"""

import copy
import json

import numpy as np

from .errors import ConfigError
from .problem import LinearPlant, QSRTriple, build_problem, shift_to_regulation

__all__ = ["PRESETS", "get_preset", "load_config", "Experiment"]

DC_MOTOR = {
    "name": "dc-motor",
    "plant": {"A_c": [[-4.0, -0.03], [0.75, -10.0]], "B_c": [[2.0], [0.0]]},
    "reference": [200.0 / 3.0, 5.0],
    "problem": {"N": 30, "dt": 0.1, "input_weight": 1.0, "state_weight": 1000.0,
                "terminal_weight": None},
    "cases": ["mpc", "impc:10,10", "impc:10,1000"],
    "certificate": {"Q_c": [[-4.0, -0.03], [0.75, -10.0]], "S_c": [[1.0], [0.0]],
                    "R_c": [[0.0]], "rho": 2.0, "delta": 1.0},
    "sim": {"T": 5.0, "h": 1e-3, "log_stride": 10, "x0": [0.0, 0.0]},
}

PRESETS = {"dc-motor": DC_MOTOR}


def get_preset(name):
    try:
        return copy.deepcopy(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None


def load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or "plant" not in doc:
        raise ConfigError(f"config {path} has no 'plant' section")
    return doc


class Experiment:
    """Plant, problem, reference and certificate data built from a config document."""

    def __init__(self, doc):
        self.doc = doc
        try:
            self.plant = LinearPlant(doc["plant"]["A_c"], doc["plant"]["B_c"])
            p = {"N": 10, "dt": 0.1, "input_weight": 1.0, "state_weight": 1.0,
                 "terminal_weight": None, **doc.get("problem", {})}
            self.prob = build_problem(self.plant, int(p["N"]), float(p["dt"]),
                                      p["input_weight"], p["state_weight"], p["terminal_weight"])
            self.shift = shift_to_regulation(self.plant, doc.get("reference", np.zeros(self.plant.n)))
            cert = doc.get("certificate", {})
            if "Q_c" in cert:
                self.qsr = QSRTriple(cert["Q_c"], cert["S_c"], cert["R_c"])
            else:
                self.qsr = QSRTriple.from_plant(self.plant)
            self.rho = float(cert.get("rho", self.prob.rho))
            self.delta = float(cert.get("delta", 1.0))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.cases = list(doc.get("cases", []))
        self.sim = dict(doc.get("sim", {}))
        self.name = doc.get("name", "custom")
