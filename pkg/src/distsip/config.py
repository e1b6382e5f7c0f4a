"""Experiment configuration: a JSON document with problem/graph/solver/baseline/analysis blocks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .graph import KINDS

TIMING_MODES = ("wall", "none")
REFERENCE_MODES = ("grid", "algorithm", "both")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _type_name(t) -> str:
    return getattr(t, "__name__", str(t))


class _Block:
    """Typed accessor over one JSON object that remembers its path for error messages."""

    def __init__(self, data: Any, path: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
        self.data, self.path, self.used = data, path, set()

    def get(self, key, kind, default=None, *, required=False, check=None, msg=""):
        self.used.add(key)
        where = f"{self.path}.{key}"
        if key not in self.data or self.data[key] is None:
            if required:
                raise ConfigError(f"{where}: required field is missing")
            return default
        val = self.data[key]
        if kind is float and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        if kind is int and isinstance(val, float) and val.is_integer():
            val = int(val)
        if not isinstance(val, kind) or (kind in (int, float) and isinstance(val, bool)):
            raise ConfigError(f"{where}: expected {_type_name(kind)}, got {json.dumps(val)}")
        if kind is float and not math.isfinite(val):
            raise ConfigError(f"{where}: must be finite")
        if check is not None and not check(val):
            raise ConfigError(f"{where}: {msg} (got {json.dumps(val)})")
        return val

    def block(self, key, required=False) -> "_Block | None":
        self.used.add(key)
        if key not in self.data or self.data[key] is None:
            if required:
                raise ConfigError(f"{self.path}.{key}: required block is missing")
            return None
        return _Block(self.data[key], f"{self.path}.{key}")

    def finish(self, allow_extra=False):
        extra = set(self.data) - self.used
        if extra and not allow_extra:
            raise ConfigError(f"{self.path}: unknown field(s) {sorted(extra)}")


@dataclass
class GraphSpec:
    kind: str
    V: int
    eta: float | None = None
    B: int | None = None
    self_weight: float = 0.5
    seed: int = 0
    matrices: list | None = None


@dataclass
class BaselineSpec:
    N: list[int]
    seed: int = 0


@dataclass
class AnalysisSpec:
    validate_horizon: int = 200
    check_samples: int = 200
    g0_samples: int = 200
    certify_samples: int = 1000
    certify_seed: int = 0
    certify_tolerance: float | None = None   # None -> feasibility bound at solver K
    reference_mode: str = "grid"
    reference_resolution: int = 2001
    reference_iterations: int = 200_000


@dataclass
class ExperimentConfig:
    run_id: str
    problem_name: str
    problem_params: dict
    graph: GraphSpec
    solver: dict
    baseline: BaselineSpec | None
    analysis: AnalysisSpec
    out_dir: str = "out"
    timing: str = "wall"
    source: str | None = field(default=None, repr=False)


def _pos(v):
    return v > 0


def parse_config(data: Any, source: str | None = None) -> ExperimentConfig:
    root = _Block(data, "config")
    run_id = root.get("run_id", str, "run", check=lambda s: s and "," not in s,
                      msg="must be non-empty and contain no commas")

    out = root.block("output")
    out_dir, timing = "out", "wall"
    if out is not None:
        out_dir = out.get("dir", str, "out")
        timing = out.get("timing", str, "wall", check=lambda s: s in TIMING_MODES,
                         msg=f"must be one of {TIMING_MODES}")
        out.finish()

    pb = root.block("problem", required=True)
    name = pb.get("name", str, required=True)
    params = {k: v for k, v in pb.data.items() if k != "name"}
    for k, v in params.items():
        if isinstance(v, bool) or not isinstance(v, (int, float, str)):
            raise ConfigError(f"config.problem.{k}: expected a number or string, got {json.dumps(v)}")

    gb = root.block("graph", required=True)
    kind = gb.get("kind", str, required=True,
                  check=lambda s: s in KINDS + ("custom",), msg=f"must be one of {KINDS + ('custom',)}")
    matrices = None
    if kind == "custom":
        gb.used.add("matrices")
        matrices = gb.data.get("matrices")
        if not (isinstance(matrices, list) and matrices and all(isinstance(m, list) for m in matrices)):
            raise ConfigError("config.graph.matrices: custom graphs need a non-empty list of matrices")
        V = len(matrices[0])
        for a, m in enumerate(matrices):
            if len(m) != V or any(not isinstance(r, list) or len(r) != V for r in m):
                raise ConfigError(f"config.graph.matrices[{a}]: must be a {V}x{V} array")
            for r in m:
                for x in r:
                    if isinstance(x, bool) or not isinstance(x, (int, float)):
                        raise ConfigError(f"config.graph.matrices[{a}]: entries must be numbers")
        gb.used.add("V")
    else:
        V = gb.get("V", int, required=True, check=lambda v: v >= 1, msg="must be >= 1")
    eta = gb.get("eta", float, None, check=lambda e: 0 < e < 1, msg="must lie in (0, 1)")
    if kind == "custom" and eta is None:
        raise ConfigError("config.graph.eta: custom graphs must declare eta")
    graph = GraphSpec(
        kind, V, eta,
        gb.get("B", int, None, check=lambda b: b >= 1, msg="must be >= 1"),
        gb.get("self_weight", float, 0.5, check=lambda w: 0 < w < 1, msg="must lie in (0, 1)"),
        gb.get("seed", int, 0),
        matrices,
    )
    gb.finish()

    sb = root.block("solver", required=True)
    solver = dict(
        K=sb.get("K", int, required=True, check=lambda k: k >= 2, msg="must be an integer >= 2"),
        c_gamma=sb.get("c_gamma", float, 1.0, check=_pos, msg="must be positive"),
        c_eps=sb.get("c_eps", float, 1.0, check=_pos, msg="must be positive"),
        cap_factor=sb.get("cap_factor", float, 10.0, check=lambda c: c >= 1, msg="must be >= 1"),
        initial_repair=sb.get("initial_repair", bool, True),
        init=sb.get("init", str, "zeros", check=lambda s: s in ("zeros", "uniform", "explicit"),
                    msg="must be zeros, uniform or explicit"),
        seed=sb.get("seed", int, 0),
        workers=sb.get("workers", int, 1, check=lambda w: w >= 1, msg="must be >= 1"),
    )
    x_init = sb.get("x_init", list, None)
    if solver["init"] == "explicit" and x_init is None:
        raise ConfigError("config.solver.x_init: required when init is 'explicit'")
    solver["x_init"] = x_init
    sb.finish()

    bb = root.block("baseline")
    baseline = None
    if bb is not None:
        Ns = bb.get("N", list, required=True)
        if not Ns or any(isinstance(n, bool) or not isinstance(n, int) or n < 1 for n in Ns):
            raise ConfigError("config.baseline.N: expected a non-empty list of positive integers")
        baseline = BaselineSpec(Ns, bb.get("seed", int, 0))
        bb.finish()

    ab = root.block("analysis")
    analysis = AnalysisSpec()
    if ab is not None:
        pos_int = dict(check=lambda v: v >= 1, msg="must be >= 1")
        analysis = AnalysisSpec(
            ab.get("validate_horizon", int, 200, **pos_int),
            ab.get("check_samples", int, 200, **pos_int),
            ab.get("g0_samples", int, 200, **pos_int),
            ab.get("certify_samples", int, 1000, check=lambda v: v >= 0, msg="must be >= 0"),
            ab.get("certify_seed", int, 0),
            ab.get("certify_tolerance", float, None, check=lambda v: v >= 0, msg="must be >= 0"),
            ab.get("reference_mode", str, "grid", check=lambda s: s in REFERENCE_MODES,
                   msg=f"must be one of {REFERENCE_MODES}"),
            ab.get("reference_resolution", int, 2001, check=lambda v: v >= 2, msg="must be >= 2"),
            ab.get("reference_iterations", int, 200_000, check=lambda v: v >= 2, msg="must be >= 2"),
        )
        ab.finish()
    root.finish()
    return ExperimentConfig(run_id, name, params, graph, solver, baseline, analysis, out_dir, timing,
                            source)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config ({e.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from None
    return parse_config(data, str(path))
