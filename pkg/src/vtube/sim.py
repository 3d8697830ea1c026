"""Fixed-step swarm simulation with tube tracking and committed-tube replanning.

Robots are first-order point masses ``p' = v_c`` with the composite command

    v_c = v_t + k_b sat(h(t) - p) + sum_j k_a (r_a + r_s - d_ij) (p_i - p_j) / d_ij

(the sum runs over neighbors with ``d_ij < r_a + r_s``), saturated in norm to
``v_sat``. Commands for all robots are computed from one snapshot and then
applied, so the update is synchronous and deterministic.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .bezier import PiecewiseBezier, sample
from .corridor import ObstacleMap, Terminals
from .errors import ConfigurationError, ReplanError, VTubeError
from .temporal import parametric_from_spatial, solve_lp
from .tube import VirtualTube, assign_parameters, trajectory

GOAL_TOL = 1e-2
REPLAN_ATTEMPTS = 4


@dataclass
class RobotState:
    position: np.ndarray
    theta: np.ndarray
    clock: float = 0.0
    role: str = "follower"
    r_s: float = 0.4
    r_a: float = 1.0
    index: int = 0

    def __post_init__(self):
        self.position = np.asarray(self.position, float)
        self.theta = np.asarray(self.theta, float)
        if not self.r_a > self.r_s > 0:
            raise ConfigurationError("need r_a > r_s > 0")
        if self.role not in ("leader", "follower"):
            raise ConfigurationError(f"unknown role {self.role!r}")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.01
    k_b: float = 1.5
    k_a: float = 2.0
    v_sat: float | None = None
    error_sat: float = 1.0
    sensing_radius: float = 6.0
    commit_fraction: float = 0.8
    handover: float = 2.0
    seed: int = 0
    max_time: float = 300.0

    def __post_init__(self):
        if not 0 < self.dt <= 0.02:
            raise ConfigurationError("dt must lie in (0, 0.02] s")
        if self.k_b <= 0 or self.k_a < 0:
            raise ConfigurationError("gains must be positive")
        if self.v_sat is not None and self.v_sat <= 0:
            raise ConfigurationError("v_sat must be positive")
        if not 0 < self.commit_fraction <= 1:
            raise ConfigurationError("commit_fraction must lie in (0, 1]")

    @classmethod
    def from_scenario(cls, sim: dict):
        return cls(dt=sim["dt"], k_b=sim["k_b"], k_a=sim["k_a"], v_sat=sim["v_sat"],
                   sensing_radius=sim["sensing_radius"],
                   commit_fraction=sim["commit_fraction"], handover=sim["handover"],
                   seed=sim["seed"], max_time=sim["max_time"])


@dataclass
class SimLog:
    times: np.ndarray
    positions: np.ndarray  # (steps, N, n)
    commands: np.ndarray  # (steps, N, n)
    min_pair_distance: np.ndarray  # (steps,)
    min_obstacle_distance: np.ndarray  # (steps,)
    completion_times: np.ndarray  # (N,), nan when not reached
    goals: np.ndarray
    events: list = field(default_factory=list)
    timed_out: bool = False
    v_sat: float = float("nan")

    @property
    def n_steps(self):
        return len(self.times)

    @property
    def replan_count(self):
        return sum(1 for e in self.events if e["kind"] == "replan")

    @property
    def flight_time(self):
        return float(np.max(self.completion_times))

    @property
    def path_lengths(self):
        return np.linalg.norm(np.diff(self.positions, axis=0), axis=2).sum(axis=0)

    @property
    def mean_speed(self):
        """Mean over robots of path length divided by completion time."""
        return float(np.mean(self.path_lengths / self.completion_times))

    def summary(self):
        return {
            "flight_time": self.flight_time,
            "mean_speed": self.mean_speed,
            "min_inter_robot_distance": float(self.min_pair_distance.min(initial=np.inf)),
            "min_obstacle_distance": float(self.min_obstacle_distance.min(initial=np.inf)),
            "replan_count": self.replan_count,
            "completed": bool(np.all(np.isfinite(self.completion_times))),
            "timed_out": self.timed_out,
            "steps": self.n_steps,
            "robots": int(self.positions.shape[1]),
            "v_sat": self.v_sat,
        }

    def write_csv(self, path):
        """One row per step per robot: ``t, robot, x, y, z, vx, vy, vz, min_dist``."""
        n = self.positions.shape[2]
        pad = 3 - n
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "robot", "x", "y", "z", "vx", "vy", "vz", "min_dist"])
            for s, t in enumerate(self.times):
                for i in range(self.positions.shape[1]):
                    p = list(self.positions[s, i]) + [0.0] * pad
                    v = list(self.commands[s, i]) + [0.0] * pad
                    w.writerow([repr(float(t)), i, *map(repr, map(float, p)),
                                *map(repr, map(float, v)), repr(float(self.min_pair_distance[s]))])

    def write_summary(self, path):
        with open(path, "w") as fh:
            json.dump({**self.summary(), "events": self.events}, fh, indent=2, default=float)

    def digest(self):
        h = hashlib.sha256()
        for a in (self.times, self.positions, self.commands):
            h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
        return h.hexdigest()


def _sat(vec, limit):
    norm = np.linalg.norm(vec, axis=-1, keepdims=True)
    scale = np.minimum(1.0, limit / np.maximum(norm, 1e-300))
    return vec * scale


def _pair_direction(seed, i, j, dim):
    """Deterministic unit vector for a coincident pair, antisymmetric in (i, j)."""
    a, b = (i, j) if i < j else (j, i)
    u = np.random.default_rng([seed, a, b]).normal(size=dim)
    u /= np.linalg.norm(u)
    return u if i < j else -u


def swarm_commands(positions, refs, ff, config: SimConfig, r_s, r_a, v_sat, ids=None,
                   events=None):
    """Commands for all robots from one snapshot (vectorized control law).

    ``ids`` are the global robot indices used to derive the direction for
    coincident pairs; they default to ``0 .. N-1``.
    """
    P = np.asarray(positions, float)
    N, dim = P.shape
    ids = list(range(N)) if ids is None else list(ids)
    v = ff + config.k_b * _sat(refs - P, config.error_sat)
    if N > 1 and config.k_a > 0:
        diff = P[:, None, :] - P[None, :, :]
        dist = np.linalg.norm(diff, axis=2)
        reach = r_a + r_s
        mask = (dist < reach) & ~np.eye(N, dtype=bool)
        coincident = mask & (dist <= 1e-12)
        if coincident.any():
            for i, j in zip(*np.nonzero(coincident)):
                diff[i, j] = _pair_direction(config.seed, ids[i], ids[j], dim)
                dist[i, j] = 1.0
                if events is not None and i < j:
                    events.append({"kind": "coincident", "robots": [ids[i], ids[j]]})
        pen = np.where(coincident, reach, reach - dist)
        gain = np.where(mask, config.k_a * pen / np.maximum(dist, 1e-300), 0.0)
        v = v + np.einsum("ij,ijn->in", gain, diff)
    return _sat(v, v_sat)


def control_step(state: RobotState, traj: PiecewiseBezier, neighbors, config: SimConfig,
                 v_sat=np.inf):
    """Velocity command for one robot given its reference and its neighbors."""
    T = traj.total_time
    t = min(max(state.clock, 0.0), T)
    ff = traj(t, order=1) if state.clock < T else np.zeros(traj.dim)
    P = np.vstack([state.position] + [nb.position for nb in neighbors])
    refs = P.copy()
    refs[0] = traj(t)
    ffs = np.zeros_like(P)
    ffs[0] = ff
    ids = [state.index] + [nb.index for nb in neighbors]
    return swarm_commands(P, refs, ffs, config, state.r_s, state.r_a, v_sat, ids)[0]


# --------------------------------------------------------------------------
# reference schedules


class _Piece:
    def __init__(self, traj: PiecewiseBezier, t0: float, dt: float, stop=None):
        self.traj = traj
        self.t0 = t0
        self.stop = traj.total_time if stop is None else stop
        self.k0 = int(np.ceil(t0 / dt - 1e-9))
        k1 = int(np.floor((t0 + self.stop) / dt + 1e-9))
        ks = np.arange(self.k0, max(k1, self.k0) + 1)
        ts = np.clip(ks * dt - t0, 0.0, traj.total_time)
        self.pos = sample(traj, ts)
        self.vel = sample(traj, ts, order=1)
        self.vel[ts >= traj.total_time] = 0.0

    @property
    def k_end(self):
        return self.k0 + len(self.pos)


class Schedule:
    """A robot's reference: trajectory pieces laid end to end in global time."""

    def __init__(self, dt):
        self.dt = dt
        self.pieces = []

    def append(self, traj: PiecewiseBezier):
        t0 = self.pieces[-1].t0 + self.pieces[-1].stop if self.pieces else 0.0
        self.pieces.append(_Piece(traj, t0, self.dt))

    def truncate_last(self, stop):
        last = self.pieces[-1]
        self.pieces[-1] = _Piece(last.traj, last.t0, self.dt, stop)

    def at(self, k):
        for pc in reversed(self.pieces):
            if k >= pc.k0:
                if k < pc.k_end:
                    return pc.pos[k - pc.k0], pc.vel[k - pc.k0]
                return pc.pos[-1], np.zeros_like(pc.vel[-1])
        return self.pieces[0].pos[0], np.zeros_like(self.pieces[0].vel[0])

    def finished(self, k):
        return k >= self.pieces[-1].k_end - 1

    def local_clock(self, piece, k):
        t = k * self.dt - self.pieces[piece].t0
        return t if t >= 0 else None

    @property
    def peak_speed(self):
        return max(float(np.linalg.norm(pc.vel, axis=1).max()) for pc in self.pieces)


def _obstacle_distance(omap: ObstacleMap, P):
    if not omap.obstacles:
        return np.inf
    return float(omap.obstacle_distance(P, known_only=False).min())


def _run(schedules, starts, goals, config: SimConfig, omap, r_s, r_a, v_sat, hooks=None,
         events=None):
    """Shared fixed-step loop; ``hooks(step, positions)`` may change schedules."""
    N, dim = starts.shape
    P = starts.copy()
    max_steps = int(np.ceil(config.max_time / config.dt))
    times, pos_log, cmd_log, dmin, omin = [], [], [], [], []
    done = np.full(N, np.nan)
    events = [] if events is None else events
    for k in range(max_steps):
        if hooks is not None:
            hooks(k, P)
        R = np.empty((N, dim))
        F = np.empty((N, dim))
        finished = np.empty(N, bool)
        for i, sch in enumerate(schedules):
            R[i], F[i] = sch.at(k)
            finished[i] = sch.finished(k)
        t = k * config.dt
        arrived = finished & (np.linalg.norm(P - goals, axis=1) <= GOAL_TOL)
        done[arrived & np.isnan(done)] = t
        if np.all(np.isfinite(done)):
            break
        V = swarm_commands(P, R, F, config, r_s, r_a, v_sat, events=events)
        times.append(t)
        pos_log.append(P.copy())
        cmd_log.append(V)
        if N > 1:
            D = np.linalg.norm(P[:, None] - P[None], axis=2) + np.diag(np.full(N, np.inf))
            dmin.append(float(D.min()))
        else:
            dmin.append(np.inf)
        omin.append(_obstacle_distance(omap, P))
        P = P + config.dt * V
    timed_out = not np.all(np.isfinite(done))
    if timed_out:
        events.append({"kind": "timeout",
                       "remaining": np.linalg.norm(P - goals, axis=1).tolist()})
    return SimLog(np.array(times), np.array(pos_log).reshape(-1, N, dim),
                  np.array(cmd_log).reshape(-1, N, dim), np.array(dmin), np.array(omin),
                  done, goals, events, timed_out, float(v_sat))


def default_v_sat(schedules, config: SimConfig, v_nominal=None):
    """At least the peak feedforward speed plus the tracking authority."""
    peak = max(s.peak_speed for s in schedules)
    base = 1.25 * peak + config.k_b * config.error_sat
    if v_nominal is not None:
        base = max(base, 2.0 * v_nominal)
    return base


def robot_trajectories(tube: VirtualTube, thetas, allocation="approx"):
    """Reference trajectories for the given weights.

    ``allocation`` is ``"approx"`` (critical-region interpolation),
    ``"initial"`` (the shared chord-length durations) or ``"exact"`` (a fresh
    LP solve per robot).
    """
    if allocation not in ("approx", "initial", "exact"):
        raise ConfigurationError(f"unknown allocation {allocation!r}")
    plp = None
    if allocation == "exact":
        plp = parametric_from_spatial(tube.spatial, tube.v_max)
    out = []
    for th in thetas:
        if allocation == "approx":
            out.append(trajectory(tube, th))
            continue
        cps = np.tensordot(th, tube.spatial.control_points, axes=1)
        dts = tube.spatial.durations if allocation == "initial" else solve_lp(plp.at(th)).x
        out.append(PiecewiseBezier(cps, dts))
    return out


def make_robots(tube: VirtualTube, starts, r_s=0.4, r_a=1.0):
    starts = np.atleast_2d(np.asarray(starts, float))
    thetas = assign_parameters(tube, starts)
    robots = [RobotState(s, th, 0.0, "follower", r_s, r_a, i)
              for i, (s, th) in enumerate(zip(starts, thetas))]
    robots[0].role = "leader"
    return robots


def _check_starts(starts, r_s):
    if len(starts) > 1:
        D = np.linalg.norm(starts[:, None] - starts[None], axis=2) + np.eye(len(starts)) * 1e9
        if D.min() < 2 * r_s - 1e-9:
            raise ConfigurationError("robot starts must be at least 2 r_s apart")


def simulate(tube: VirtualTube, robots, config: SimConfig, obstacle_map: ObstacleMap,
             allocation="approx") -> SimLog:
    """Track tube trajectories from the robots' start positions to their goals."""
    starts = np.array([r.position for r in robots])
    _check_starts(starts, robots[0].r_s)
    schedules = []
    for tr in robot_trajectories(tube, [r.theta for r in robots], allocation):
        sch = Schedule(config.dt)
        sch.append(tr)
        schedules.append(sch)
    goals = np.array([sch.pieces[-1].traj.control_points[-1, -1] for sch in schedules])
    v_sat = config.v_sat or default_v_sat(schedules, config)
    return _run(schedules, starts, goals, config, obstacle_map, robots[0].r_s, robots[0].r_a,
                v_sat)


# --------------------------------------------------------------------------
# replanning


@dataclass
class Stage:
    """One planned tube and how many of its leading segments are committed."""

    tube: VirtualTube
    committed: int
    start_step: int
    known_count: int

    def prefix_hash(self, thetas):
        h = hashlib.sha256()
        cps = self.tube.spatial.control_points[:, :self.committed]
        h.update(np.ascontiguousarray(cps, dtype="<f8").tobytes())
        for th in thetas:
            d = self.tube.durations(th)[:self.committed]
            h.update(np.ascontiguousarray(d, dtype="<f8").tobytes())
        return h.hexdigest()


@dataclass
class ReplanResult:
    log: SimLog
    stages: list
    revealed_map: ObstacleMap
    prefix_hashes: list  # recorded when each stage was superseded
    thetas: list

    def verify_prefixes(self):
        """Recompute committed-prefix hashes; True when none changed."""
        return all(st.prefix_hash(self.thetas) == h
                   for st, h in zip(self.stages[:-1], self.prefix_hashes))


def _sphere_clear(omap: ObstacleMap, center, radius):
    return float(omap.clearance(np.asarray(center)[None])[0]) >= radius - 1e-9


class _Replanner:
    """State of the committed-tube replanning loop (see :func:`replan_loop`)."""

    def __init__(self, scenario, config, planner, n_rob):
        from .pipeline import plan_tube, start_positions

        self.plan_tube = plan_tube
        self.sc = scenario
        self.config = config
        self.planner = planner
        self.cfg = scenario.corridor_config
        self.world = scenario.obstacle_map
        self.known = ObstacleMap(self.world.lo, self.world.hi, self.world.known())
        self.hidden = [o for o in self.world.obstacles if not o.known]
        self.revealed = set()
        self.events = []
        tube, _ = plan_tube(self.known, scenario.terminals, planner, self.cfg)
        r_s = scenario.sim["r_s"]
        self.starts, _ = start_positions(tube, n_rob, 2 * r_s + 0.2, config.seed)
        self.robots = make_robots(tube, self.starts, r_s, scenario.sim["r_a"])
        self.thetas = [r.theta for r in self.robots]
        self.goals = scenario.terminals.f(self.starts)
        self.leader = 0
        self.stages = [Stage(tube, 0, 0, len(self.known.obstacles))]
        self.hashes = []
        self.schedules = []
        for th in self.thetas:
            sch = Schedule(config.dt)
            sch.append(trajectory(tube, th))
            self.schedules.append(sch)
        self.events.append({"kind": "plan", "step": 0, "segments": tube.n_segments})
        self.commit_more(self.starts[self.leader], 0)

    @property
    def current(self):
        return self.stages[-1]

    def commit_more(self, lead_pos, step):
        st = self.current
        reach = self.config.commit_fraction * self.config.sensing_radius
        while st.committed < st.tube.n_segments:
            m = st.committed
            c, r = st.tube.corridor.centers[m], st.tube.corridor.radii[m]
            if np.linalg.norm(c - lead_pos) + r > reach or not _sphere_clear(self.known, c, r):
                break
            st.committed += 1

    def conflict(self):
        st = self.current
        for m in range(st.committed, st.tube.n_segments):
            if not _sphere_clear(self.known, st.tube.corridor.centers[m],
                                 st.tube.corridor.radii[m]):
                return m
        return None

    def sense(self, lead_pos, step):
        new = [i for i, o in enumerate(self.hidden) if i not in self.revealed
               and float(o.distance(lead_pos[None])[0]) <= self.config.sensing_radius]
        if not new:
            return False
        self.revealed.update(new)
        obs = self.known.obstacles + tuple(replace(self.hidden[i], known=True) for i in new)
        self.known = ObstacleMap(self.world.lo, self.world.hi, obs)
        self.events.append({"kind": "sense", "step": step, "count": len(new)})
        return True

    def replan(self, step, reason, lead_pos):
        st = self.current
        tb = st.tube
        mc = st.committed
        if mc == 0:
            raise ReplanError(f"step {step}: replan needed before any segment was committed")
        joints = tb.spatial.control_points[:, mc - 1, -1, :]
        goals = tb.spatial.control_points[:, -1, -1, :]
        terms = Terminals.from_vertices(joints, goals)
        start = None
        if mc < tb.n_segments and _sphere_clear(self.known, tb.corridor.centers[mc],
                                                tb.corridor.radii[mc] + self.cfg.margin):
            start = (tb.corridor.centers[mc], tb.corridor.radii[mc])
        else:
            start = (tb.corridor.centers[mc - 1], tb.corridor.radii[mc - 1])
        # the candidate grid is jittered, so a failed search is retried with fresh seeds
        base = self.planner.get("seed", 0) + REPLAN_ATTEMPTS * len(self.stages)
        for attempt in range(REPLAN_ATTEMPTS):
            planner = {**self.planner, "seed": base + attempt}
            try:
                tube, _ = self.plan_tube(self.known, terms, planner, self.cfg,
                                         start_sphere=start)
                break
            except VTubeError as exc:
                if attempt == REPLAN_ATTEMPTS - 1:
                    raise ReplanError(f"replanning at step {step} failed: {exc}") from exc
        self.hashes.append(st.prefix_hash(self.thetas))
        for sch, th in zip(self.schedules, self.thetas):
            sch.truncate_last(float(sch.pieces[-1].traj.breaks[mc]))
            sch.append(trajectory(tube, th))
        self.stages.append(Stage(tube, 0, step, len(self.known.obstacles)))
        self.events.append({"kind": "replan", "step": step, "reason": reason,
                            "from_segment": mc, "segments": tube.n_segments})
        self.commit_more(lead_pos, step)

    def __call__(self, step, P):
        lead_pos = P[self.leader]
        changed = self.sense(lead_pos, step)
        self.commit_more(lead_pos, step)
        if changed and self.conflict() is not None:
            self.replan(step, "conflict", lead_pos)
        st = self.current
        piece = len(self.stages) - 1
        if st.committed < st.tube.n_segments:
            for sch in self.schedules:
                local = sch.local_clock(piece, step)
                if local is None:
                    continue
                if local >= float(sch.pieces[piece].traj.breaks[max(st.committed - 1, 0)]):
                    m = st.committed
                    c, r = st.tube.corridor.centers[m], st.tube.corridor.radii[m]
                    if len(self.known.obstacles) == st.known_count and \
                            _sphere_clear(self.known, c, r):
                        st.committed += 1
                        self.events.append({"kind": "forced_commit", "step": step,
                                            "segment": m})
                    else:
                        self.replan(step, "horizon", lead_pos)
                    break
        st = self.current
        if st.committed > 0:
            front = st.tube.spatial.control_points[:, st.committed - 1, -1, :].mean(axis=0)
            d = np.linalg.norm(P - front, axis=1)
            foremost = int(np.argmin(d))
            if d[foremost] < self.config.handover and foremost != self.leader:
                self.events.append({"kind": "handover", "step": step,
                                    "from": self.leader, "to": foremost})
                self.robots[self.leader].role = "follower"
                self.robots[foremost].role = "leader"
                self.leader = foremost


def replan_loop(scenario, config: SimConfig | None = None, robots: int | None = None,
                planner_overrides=None) -> ReplanResult:
    """Plan on the known map, commit what is in sensing range, replan on conflicts.

    Each step the leader senses unknown obstacles within ``sensing_radius``.
    Leading segments whose spheres lie inside ``commit_fraction *
    sensing_radius`` of the leader and are clear of known obstacles become
    committed and are never changed. A replan starts from rest at the joint
    triangle that ends the committed prefix, so every robot keeps its weights
    and its reference stays continuous in position. Replans happen when a
    sensed obstacle blocks an uncommitted sphere, or when a robot enters the
    last committed segment after the map changed; with an unchanged map the
    next segment is committed instead. The leader role passes to the robot
    nearest the committed front once it is within ``handover`` of it.
    """
    config = config or SimConfig.from_scenario(scenario.sim)
    planner = {**scenario.planner, **(planner_overrides or {})}
    n_rob = robots or scenario.sim["robots"]
    rp = _Replanner(scenario, config, planner, n_rob)
    v_sat = config.v_sat or default_v_sat(rp.schedules, config, planner["v_nominal"])
    log = _run(rp.schedules, rp.starts, rp.goals, config, scenario.obstacle_map,
               scenario.sim["r_s"], scenario.sim["r_a"], v_sat, hooks=rp, events=rp.events)
    return ReplanResult(log, rp.stages, rp.known, rp.hashes, rp.thetas)
