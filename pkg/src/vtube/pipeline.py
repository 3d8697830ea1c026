"""Scenario files and the end-to-end planning pipeline.

A scenario is a JSON document::

    {
      "name": "desk",
      "map": {"bounds": [[0, 0, 0], [30, 12, 6]],
              "obstacles": [{"type": "box", "lo": [...], "hi": [...], "known": true},
                            {"type": "sphere", "center": [...], "radius": 1.0}]},
      "terminals": {"c0": [[...], ...], "c1": [[...], ...]},
      "planner": {"k_c": 3, "p": 5, "d": 3, "v_max": 2.0, "v_nominal": 0.5,
                  "epsilon": 0.8, "rho": 0.8, "lambda_min": 1.0, "seed": 0,
                  "corridor": {"spacing": 1.2, "r_max": 3.0, "margin": 0.8}},
      "sim": {"robots": 3, "r_s": 0.4, "r_a": 1.0, "k_b": 1.5, "k_a": 2.0,
              "dt": 0.01, "seed": 0}
    }

Missing planner and sim entries take the defaults below.
"""
from __future__ import annotations

import copy
import json
import time
from dataclasses import dataclass, field, fields, replace
from importlib import resources

import numpy as np

from .corridor import (
    BoxObstacle,
    CorridorConfig,
    ObstacleMap,
    SphereObstacle,
    Terminals,
    init_time_allocation,
    plan_corridor,
    select_boundary_terminals,
)
from .errors import ConfigurationError, ScenarioError, VTubeError
from .partition import partition
from .spatial import SpatialProblem, solve_all
from .temporal import parametric_from_spatial
from .tube import VirtualTube, build_tube

PLANNER_DEFAULTS = {
    "k_c": 3,
    "p": 5,
    "d": 3,
    "v_max": 2.0,
    "v_nominal": 0.5,
    "epsilon": 0.8,
    "rho": 0.8,
    "lambda_min": 1.0,
    "seed": 0,
    "max_depth": 20,
    "corridor": {},
}

SIM_DEFAULTS = {
    "robots": 3,
    "r_s": 0.4,
    "r_a": 1.0,
    "k_b": 1.5,
    "k_a": 2.0,
    "dt": 0.01,
    "seed": 0,
    "v_sat": None,
    "sensing_radius": 6.0,
    "commit_fraction": 0.8,
    "handover": 2.0,
    "max_time": 300.0,
}


@dataclass(frozen=True)
class Scenario:
    name: str
    obstacle_map: ObstacleMap
    terminals: Terminals
    planner: dict
    sim: dict
    source: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def corridor_config(self):
        return CorridorConfig(**{"lambda_min": self.planner["lambda_min"],
                                 **self.planner["corridor"]})

    def with_planner(self, **kw):
        return replace(self, planner={**self.planner, **kw})

    def with_sim(self, **kw):
        return replace(self, sim={**self.sim, **kw})


def _require(d, key, where):
    if not isinstance(d, dict) or key not in d:
        raise ScenarioError(f"missing field '{where}{key}'", field=f"{where}{key}")
    return d[key]


def _vec(x, name, dim=None):
    try:
        v = np.asarray(x, float)
    except (TypeError, ValueError):
        raise ScenarioError(f"field '{name}' must be numeric", field=name) from None
    if v.ndim != 1 or (dim is not None and v.size != dim) or not np.all(np.isfinite(v)):
        raise ScenarioError(f"field '{name}' must be a finite vector of length {dim}", field=name)
    return tuple(v.tolist())


def _positive(d, key, where, allow_none=False):
    v = d[key]
    if v is None and allow_none:
        return
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
        raise ScenarioError(f"field '{where}{key}' must be positive", field=f"{where}{key}")


def parse_scenario(doc: dict) -> Scenario:
    """Validate a scenario document and build the domain objects."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object", field="")
    mp = _require(doc, "map", "")
    bounds = _require(mp, "bounds", "map.")
    if not isinstance(bounds, list) or len(bounds) != 2:
        raise ScenarioError("field 'map.bounds' must be [lo, hi]", field="map.bounds")
    lo = _vec(bounds[0], "map.bounds")
    hi = _vec(bounds[1], "map.bounds", len(lo))
    dim = len(lo)
    if dim not in (2, 3) or any(a >= b for a, b in zip(lo, hi)):
        raise ScenarioError("field 'map.bounds' needs lo < hi in 2 or 3 dimensions",
                            field="map.bounds")
    obstacles = []
    for i, ob in enumerate(mp.get("obstacles", [])):
        where = f"map.obstacles[{i}]."
        kind = _require(ob, "type", where)
        known = bool(ob.get("known", True))
        if kind == "box":
            blo = _vec(_require(ob, "lo", where), where + "lo", dim)
            bhi = _vec(_require(ob, "hi", where), where + "hi", dim)
            if any(a >= b for a, b in zip(blo, bhi)):
                raise ScenarioError(f"field '{where}hi' must exceed lo", field=where + "hi")
            obstacles.append(BoxObstacle(blo, bhi, known))
        elif kind == "sphere":
            c = _vec(_require(ob, "center", where), where + "center", dim)
            r = _require(ob, "radius", where)
            if not isinstance(r, (int, float)) or not r > 0:
                raise ScenarioError(f"field '{where}radius' must be positive",
                                    field=where + "radius")
            obstacles.append(SphereObstacle(c, float(r), known))
        else:
            raise ScenarioError(f"field '{where}type' must be 'box' or 'sphere'",
                                field=where + "type")
    try:
        omap = ObstacleMap(lo, hi, tuple(obstacles))
    except ConfigurationError as exc:
        raise ScenarioError(str(exc), field="map.bounds") from None

    term = _require(doc, "terminals", "")
    c0 = np.array([_vec(v, "terminals.c0", dim) for v in _require(term, "c0", "terminals.")])
    c1 = np.array([_vec(v, "terminals.c1", dim) for v in _require(term, "c1", "terminals.")])
    if len(c0) != len(c1):
        raise ScenarioError("terminals.c0 and terminals.c1 need equal vertex counts",
                            field="terminals.c1")
    if len(c0) < 2:
        raise ScenarioError("terminals.c0 needs at least two vertices", field="terminals.c0")
    try:
        terminals = Terminals.from_vertices(c0, c1)
    except ConfigurationError as exc:
        raise ScenarioError(str(exc), field="terminals") from None

    planner = copy.deepcopy(PLANNER_DEFAULTS)
    planner.update(doc.get("planner", {}))
    for key in ("v_max", "v_nominal", "epsilon", "lambda_min"):
        _positive(planner, key, "planner.")
    for key in ("k_c", "p", "d", "max_depth"):
        v = planner[key]
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ScenarioError(f"field 'planner.{key}' must be a positive integer",
                                field=f"planner.{key}")
    if not 0 < planner["rho"] < 1:
        raise ScenarioError("field 'planner.rho' must lie in (0, 1)", field="planner.rho")
    if planner["k_c"] > len(c0):
        raise ScenarioError("field 'planner.k_c' exceeds the vertex count of C0",
                            field="planner.k_c")
    known = {f.name for f in fields(CorridorConfig)}
    for key in planner["corridor"]:
        if key not in known:
            raise ScenarioError(f"unknown field 'planner.corridor.{key}'",
                                field=f"planner.corridor.{key}")

    sim = copy.deepcopy(SIM_DEFAULTS)
    sim.update(doc.get("sim", {}))
    for key in ("r_s", "r_a", "k_b", "k_a", "dt", "sensing_radius", "commit_fraction",
                "handover", "max_time"):
        _positive(sim, key, "sim.")
    _positive(sim, "v_sat", "sim.", allow_none=True)
    if not isinstance(sim["robots"], int) or sim["robots"] < 1:
        raise ScenarioError("field 'sim.robots' must be a positive integer", field="sim.robots")
    if sim["r_a"] <= sim["r_s"]:
        raise ScenarioError("field 'sim.r_a' must exceed sim.r_s", field="sim.r_a")
    if sim["dt"] > 0.02:
        raise ScenarioError("field 'sim.dt' must be at most 0.02 s", field="sim.dt")
    return Scenario(str(doc.get("name", "scenario")), omap, terminals, planner, sim, doc)


def load_scenario(path) -> Scenario:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})", field="") from None
    return parse_scenario(doc)


def bundled_scenario_names():
    return sorted(p.name[:-5] for p in resources.files("vtube.data").iterdir()
                  if p.name.endswith(".json"))


def bundled_scenario(name: str) -> Scenario:
    """Load one of the scenarios shipped with the package."""
    try:
        text = resources.files("vtube.data").joinpath(f"{name}.json").read_text()
    except FileNotFoundError:
        raise ScenarioError(f"no bundled scenario '{name}'", field="name") from None
    return parse_scenario(json.loads(text))


def random_desk(seed: int) -> Scenario:
    """Seeded desk variant: one full-height block with a random position, width and side.

    The free passage beside the block is kept at least 5.6 m wide so a
    corridor with the default margin always exists.
    """
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(7.5, 10.5)
    width = rng.uniform(2.0, 3.5)
    gap = rng.uniform(5.6, 6.6)
    y_lo, y_hi = (0.0, 12.0 - gap) if rng.integers(2) == 0 else (gap, 12.0)
    base = json.loads(resources.files("vtube.data").joinpath("desk.json").read_text())
    base["name"] = f"random_desk_{seed}"
    base["map"]["obstacles"] = [
        {"type": "box", "lo": [x0, y_lo, 0.0], "hi": [x0 + width, y_hi, 6.0]}
    ]
    base["planner"]["seed"] = int(seed)
    base["sim"]["seed"] = int(seed)
    return parse_scenario(base)


@dataclass
class PlanReport:
    stage_times: dict
    n_spheres: int
    n_leaves: int
    boundary_times: list
    initial_total_time: float
    lp_solves: int

    def summary(self):
        lines = [
            f"spheres / segments : {self.n_spheres}",
            f"critical regions   : {self.n_leaves}",
            f"boundary V* (s)    : " + ", ".join(f"{v:.4f}" for v in self.boundary_times),
            f"V* range (s)       : [{min(self.boundary_times):.4f}, "
            f"{max(self.boundary_times):.4f}] at vertices",
            f"initial total (s)  : {self.initial_total_time:.4f}",
            f"LP solves          : {self.lp_solves}",
        ]
        lines += [f"time {k:<13}: {v:.3f} s" for k, v in self.stage_times.items()]
        return "\n".join(lines)


def plan_tube(obstacle_map: ObstacleMap, terminals: Terminals, planner: dict,
              corridor_config: CorridorConfig | None = None, start_sphere=None,
              eps=None):
    """Corridor, boundary QPs, parametric LP and partition in one call.

    Errors carry the failing stage in ``exc.stage``.
    """
    cfg = corridor_config or CorridorConfig(lambda_min=planner.get("lambda_min", 1.0),
                                            **planner.get("corridor", {}))
    eps = planner["epsilon"] if eps is None else eps
    times = {}

    def stage(name, fn, *a, **kw):
        t0 = time.perf_counter()
        try:
            out = fn(*a, **kw)
        except VTubeError as exc:
            exc.stage = name
            raise
        times[name] = time.perf_counter() - t0
        return out

    corr = stage("corridor", plan_corridor, obstacle_map, terminals, planner.get("seed", 0),
                 cfg, start_sphere)
    paths = stage("corridor", select_boundary_terminals, corr, terminals, planner["k_c"],
                  planner.get("rho", 0.8))
    dts = stage("corridor", init_time_allocation, paths, planner["v_nominal"])
    bounds = derivative_bounds(planner["v_nominal"], dts, planner["d"])
    prob = stage("spatial", SpatialProblem, corr, paths, dts, planner["p"], planner["d"], bounds)
    spatial = stage("spatial", solve_all, prob)
    plp = stage("temporal", parametric_from_spatial, spatial, planner["v_max"])
    tree = stage("partition", partition, plp, eps, planner.get("max_depth", 20))
    tube = stage("tube", build_tube, corr, spatial, tree, terminals, planner["v_max"])
    report = PlanReport(times, corr.n_spheres, tree.n_leaves,
                        [float(v) for v in tree.root.values], float(dts.sum()), tree.lp_solves)
    return tube, report


def derivative_bounds(v_nominal, durations, d):
    """Loose per-order bounds for orders ``1..d-1``.

    Velocity is capped at ``10 v_nominal``; each higher order gains a factor
    ``2 / dt_min``, so the acceleration cap is ``20 v_nominal / dt_min``.
    """
    dt_min = float(np.min(durations))
    return tuple(10.0 * v_nominal * (2.0 / dt_min) ** (r - 1) for r in range(1, d))


def plan_scenario(scenario: Scenario, eps=None):
    return plan_tube(scenario.obstacle_map, scenario.terminals, scenario.planner,
                     scenario.corridor_config, eps=eps)


def start_positions(tube: VirtualTube, count: int, min_sep: float, seed: int = 0):
    """Robot starts in ``C0``: boundary vertices first, then farthest-point fill.

    Candidates are barycentric lattice points of the start simplex (with a
    seeded jitter). Raises :class:`ConfigurationError` when ``count`` robots
    cannot be separated by ``min_sep``.
    """
    P = tube.boundary_starts
    k = len(P)
    rng = np.random.default_rng(seed)
    res = 24
    lattice = [np.array(c) / res for c in _compositions(res, k)]
    W = np.array(lattice)
    W = np.clip(W + rng.uniform(-0.2, 0.2, W.shape) / res * (W > 0), 0.0, None)
    W /= W.sum(axis=1, keepdims=True)
    chosen = [np.eye(k)[i] for i in range(min(count, k))]
    pts = [w @ P for w in chosen]
    cand = W @ P
    while len(chosen) < count:
        d = np.min(np.linalg.norm(cand[:, None] - np.array(pts)[None], axis=2), axis=1)
        j = int(np.argmax(d))
        if d[j] < min_sep:
            raise ConfigurationError(
                f"cannot place {count} robots {min_sep} m apart in the start region"
            )
        chosen.append(W[j])
        pts.append(cand[j])
    pts = np.array(pts)
    sep = np.linalg.norm(pts[:, None] - pts[None], axis=2) + np.eye(len(pts)) * 1e9
    if sep.min() < min_sep:
        raise ConfigurationError(f"start region too small for {count} robots")
    return pts, [np.asarray(w, float) for w in chosen]


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for i in range(total + 1):
        for rest in _compositions(total - i, parts - 1):
            yield (i,) + rest
