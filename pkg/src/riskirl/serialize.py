"""JSON / CSV file formats for envelopes, demonstrations, datasets, models.

Modes and library indices are 0-based everywhere, including on disk.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from .envelopes import RiskEnvelope, SemiParametricCrm
from .likelihood import TrajectorySegment
from .planning import ActionLibrary, ScenarioConfig
from .static_inference import Demonstration


def save_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def save_envelope(env, path):
    save_json(env.to_dict(), path)


def load_envelope(path):
    return RiskEnvelope.from_dict(load_json(path))


def save_demos(demos, path):
    save_json([d.to_dict() for d in demos], path)


def load_demos(path):
    return [Demonstration.from_dict(d) for d in load_json(path)]


def save_segments(segments, path):
    save_json([s.to_dict() for s in segments], path)


def load_segments(path):
    return [TrajectorySegment.from_dict(d) for d in load_json(path)]


def save_library(lib, path):
    save_json(
        {
            "first_stage": np.asarray(lib.first_stage).tolist(),
            "later_stage": np.asarray(lib.later_stage).tolist(),
        },
        path,
    )


def load_library(path):
    d = load_json(path)
    return ActionLibrary(
        first_stage=np.asarray(d["first_stage"], dtype=float),
        later_stage=np.asarray(d["later_stage"], dtype=float),
    )


@dataclass(frozen=True, eq=False)
class FittedModel:
    """Semi-parametric CRM offsets + cost weights + Boltzmann temperature."""

    normals: np.ndarray
    offsets: np.ndarray
    weights: np.ndarray
    beta: float
    config: ScenarioConfig

    def crm(self):
        return SemiParametricCrm(normals=self.normals, offsets=self.offsets)

    def to_dict(self):
        return {
            "normals": np.asarray(self.normals).tolist(),
            "offsets": np.asarray(self.offsets).tolist(),
            "weights": np.asarray(self.weights).tolist(),
            "beta": float(self.beta),
            "config": self.config.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            normals=np.asarray(d["normals"], dtype=float),
            offsets=np.asarray(d["offsets"], dtype=float),
            weights=np.asarray(d["weights"], dtype=float),
            beta=float(d["beta"]),
            config=ScenarioConfig.from_dict(d["config"]),
        )


def save_model(model, path):
    save_json(model.to_dict(), path)


def load_model(path):
    return FittedModel.from_dict(load_json(path))


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)
