"""Run configuration: every tunable with its default."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path


@dataclass
class RunConfig:
    # documents
    cube_base: int = 20
    step: int = 4
    fragment_len: int = 8
    mag_threshold: float = 1.0
    vote_threshold: float = 0.10
    # retrieval
    rho: float = 0.1
    max_iterations: int = 16
    # warping and suppression
    alpha: float = 2000.0
    n_bins: int = 16
    batches: int = 10
    iou_threshold: float = 0.5
    min_density: float = 0.0
    containment: float = 0.7
    # association
    beta: float = 2.5
    gate_distance: float = 50.0
    half_window: int = 2
    # built-in optical flow
    flow_smoothness: float = 0.1
    flow_iterations: int = 200
    seed: int = 0

    def validate(self) -> "RunConfig":
        checks = [
            (self.cube_base > 0 and self.cube_base % 4 == 0, "cube_base must be a positive multiple of 4"),
            (self.step >= 1, "step must be >= 1"),
            (self.fragment_len >= 1, "fragment_len must be >= 1"),
            (self.mag_threshold > 0, "mag_threshold must be > 0"),
            (self.vote_threshold > 0, "vote_threshold must be > 0"),
            (0 <= self.rho < 1, "rho must be in [0, 1)"),
            (self.max_iterations >= 1, "max_iterations must be >= 1"),
            (self.alpha > 0, "alpha must be > 0"),
            (self.n_bins >= 2, "n_bins must be >= 2"),
            (self.batches >= 1, "batches must be >= 1"),
            (0 <= self.iou_threshold <= 1, "iou_threshold must be in [0, 1]"),
            (0 <= self.containment <= 1, "containment must be in [0, 1]"),
            (self.beta >= 0, "beta must be >= 0"),
            (self.gate_distance > 0, "gate_distance must be > 0"),
            (self.half_window >= 0, "half_window must be >= 0"),
            (self.flow_smoothness > 0, "flow_smoothness must be > 0"),
            (self.flow_iterations >= 1, "flow_iterations must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)
        return self

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        data = json.loads(Path(path).read_text())
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data).validate()

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
