"""Run configuration: domain source, fine grid, source term, schedules."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .geometry import PerforatedDomainSpec, TriMesh, generate_perforations, triangulate
from .mshio import import_msh

# four unit-valued squares, zero elsewhere
CASE1_RECTANGLES = [
    {"x0": 0.1, "x1": 0.3, "y0": 0.1, "y1": 0.3, "value": 1.0},
    {"x0": 0.7, "x1": 0.9, "y0": 0.1, "y1": 0.3, "value": 1.0},
    {"x0": 0.1, "x1": 0.3, "y0": 0.7, "y1": 0.9, "value": 1.0},
    {"x0": 0.7, "x1": 0.9, "y0": 0.7, "y1": 0.9, "value": 1.0},
]

DEFAULT_DOMAIN = {
    "generate": {"count": 50, "radius_range": [0.01, 0.04], "min_gap": 0.005, "seed": 42}
}


def _default_schedule():
    return [[1 / 8, 2], [1 / 16, 3], [1 / 32, 4]]


@dataclass
class RunConfig:
    domain: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_DOMAIN))
    fine_n: int = 128
    drop_islands: bool = False
    source: dict = field(
        default_factory=lambda: {"rectangles": copy.deepcopy(CASE1_RECTANGLES), "default": 0.0}
    )
    H: float = 1 / 16
    layers: object = 3  # int, "log", or per-block list
    schedule: list = field(default_factory=_default_schedule)
    m_list: list = field(default_factory=lambda: [1, 2, 3, 4])
    eigs: int = 3
    variants: list = field(default_factory=lambda: ["constraint"])
    threads: int = 1
    timing: bool = False
    with_global: bool = True
    basis_block: int = 0
    basis_eig: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]  # a run manifest
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}", str(path)) from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}", str(path)) from exc
        return cls.from_dict(data)

    def validate(self) -> None:
        if self.fine_n < 2:
            raise ConfigError("fine_n must be at least 2")
        if self.eigs < 1:
            raise ConfigError("eigs must be at least 1")
        for v in self.variants:
            if v not in ("constraint", "relaxed"):
                raise ConfigError(f"unknown variant {v!r}")
        for r in self.source.get("rectangles", []):
            if not all(math.isfinite(float(r[k])) for k in ("x0", "x1", "y0", "y1", "value")):
                raise ConfigError("source rectangle values must be finite")
        if not math.isfinite(float(self.source.get("default", 0.0))):
            raise ConfigError("source default must be finite")
        if "msh_path" not in self.domain:
            hs = [self.H] + [h for h, _ in self.schedule]
            for h in hs:
                nb = round(1 / h)
                if abs(nb * h - 1) > 1e-9 or self.fine_n % nb:
                    raise ConfigError(f"H={h} does not nest in a {self.fine_n}-cell fine grid")


def load_domain(cfg: RunConfig) -> tuple[PerforatedDomainSpec | None, TriMesh]:
    """Build the domain spec and fine mesh named by the config."""
    dom = cfg.domain
    if "msh_path" in dom:
        path = Path(dom["msh_path"])
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise ConfigError(f"cannot read mesh {path}: {exc.strerror}", str(path)) from exc
        return None, import_msh(data)
    if "spec_path" in dom:
        path = Path(dom["spec_path"])
        try:
            spec = PerforatedDomainSpec.from_json(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read domain spec {path}: {exc.strerror}", str(path)) from exc
    elif "spec" in dom:
        spec = PerforatedDomainSpec.from_dict(dom["spec"])
    elif "generate" in dom:
        g = dom["generate"]
        spec = generate_perforations(
            int(g.get("count", 50)),
            tuple(g.get("radius_range", (0.01, 0.04))),
            float(g.get("min_gap", 0.005)),
            int(g.get("seed", 0)),
        )
    else:
        raise ConfigError("domain needs one of: generate, spec, spec_path, msh_path")
    return spec, triangulate(spec, cfg.fine_n, cfg.drop_islands)


def source_on_mesh(mesh: TriMesh, source: dict) -> np.ndarray:
    """Per-triangle source from axis-aligned rectangles (later ones win)."""
    c = mesh.centroids
    f = np.full(mesh.n_triangles, float(source.get("default", 0.0)))
    for r in source.get("rectangles", []):
        inside = (
            (c[:, 0] >= r["x0"]) & (c[:, 0] <= r["x1"]) & (c[:, 1] >= r["y0"]) & (c[:, 1] <= r["y1"])
        )
        f[inside] = float(r["value"])
    return f
