"""Experiment orchestration: configs, runs, schedule comparison, barrier sweep."""

import dataclasses
import inspect
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .estimator import StackelbergSeeker
from .followers import barrier_inner_solve, best_response_exact, strictly_feasible_start
from .game import Unconstrained
from .network import LeaderGraph, consensus_contraction_factor, midpoint_gains
from .oracle import solve_se_lq
from .scenarios import ScenarioError, build_cellular, build_lq, build_microgrid, load_lq_file
from .theory import Budgets, theory_report

log = logging.getLogger(__name__)

MICROGRID_TOPOLOGY = [[4, 1], [1, 2], [2, 3], [2, 4]]


class ConfigError(ValueError):
    pass


def _strict(section, data, allowed):
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {section}: {sorted(unknown)}")


@dataclass
class ScheduleConfig:
    kind: str = "diminishing"
    beta: float = None
    scale: float = 1.0
    decay: float = 1.0


@dataclass
class BarrierConfig:
    theta0: float = 1.0
    chi: float = 10.0
    eps: float = 1e-3
    mode: str = "fixed"
    inner_tol: float = 1e-6


@dataclass
class CompareConfig:
    constant_beta: float = None
    diminishing_scale: float = None
    diminishing_decay: float = 0.6
    thresholds: list = field(default_factory=lambda: [1e-1, 1e-2])
    metric: str = "rel_psi_err"


@dataclass
class RunConfig:
    """Everything a run needs; mirrors the JSON config field for field."""

    scenario: str = "lq"
    scenario_params: dict = field(default_factory=dict)
    scenario_file: str = None
    edges: list = None
    T: int = 50
    D: int = 50
    B: int = 100
    alpha: float = None
    gamma: object = "auto"
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    xi_fraction: float = None
    barrier: BarrierConfig = field(default_factory=BarrierConfig)
    compare: CompareConfig = field(default_factory=CompareConfig)
    sweep_thetas: list = field(default_factory=lambda: [1e1, 1e2, 1e3])
    sweep_x: list = None
    max_iter: int = 1000
    tol: float = 1e-10
    seed: int = 0
    out_dir: str = None
    oracle: bool = True
    timing: bool = False
    beta_M: float = 1.0
    pi: float = 2.0

    _nested = {"schedule": ScheduleConfig, "barrier": BarrierConfig, "compare": CompareConfig}

    @classmethod
    def from_dict(cls, data):
        names = [f.name for f in dataclasses.fields(cls)]
        _strict("config", data, names)
        kwargs = {}
        for key, value in data.items():
            sub = cls._nested.get(key)
            if sub is not None:
                if not isinstance(value, dict):
                    raise ConfigError(f"{key} must be an object")
                _strict(key, value, [f.name for f in dataclasses.fields(sub)])
                value = sub(**value)
            kwargs[key] = value
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path):
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)

    def to_dict(self):
        return dataclasses.asdict(self)

    def validate(self):
        if self.scenario not in ("lq", "microgrid", "cellular", "file"):
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.scenario == "file" and not self.scenario_file:
            raise ConfigError("scenario 'file' needs scenario_file")
        for name in ("T", "D", "B", "max_iter"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.schedule.kind not in ("constant", "diminishing"):
            raise ConfigError("schedule.kind must be 'constant' or 'diminishing'")
        if self.xi_fraction is not None and not 0 < self.xi_fraction < 1:
            raise ConfigError("xi_fraction must lie in (0, 1)")


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------


def build_spec(cfg):
    params = dict(cfg.scenario_params)
    if cfg.scenario == "lq":
        allowed = set(inspect.signature(build_lq).parameters) - {"rng_seed"}
        _strict("scenario_params", params, allowed)
        return build_lq(rng_seed=cfg.seed, **params)
    try:
        if cfg.scenario == "microgrid":
            return build_microgrid(params, rng_seed=cfg.seed)
        if cfg.scenario == "cellular":
            return build_cellular(params, rng_seed=cfg.seed)
    except ScenarioError as exc:
        raise ConfigError(str(exc)) from exc
    return load_lq_file(cfg.scenario_file)


def build_graph(cfg, m):
    if cfg.edges is not None:
        edges = cfg.edges
    elif cfg.scenario == "microgrid" and m == 4:
        edges = MICROGRID_TOPOLOGY
    else:
        edges = [[a, a + 1] for a in range(1, m)]
    graph = LeaderGraph.from_one_based(m, edges)
    if cfg.xi_fraction is not None:
        graph = LeaderGraph.from_one_based(m, edges, 2 * cfg.xi_fraction * midpoint_gains(graph.W))
    return graph


def make_seeker(cfg, schedule=None, oracle=None):
    sc = cfg.schedule if schedule is None else schedule
    return StackelbergSeeker(
        T=cfg.T, D=cfg.D, B=cfg.B, alpha=cfg.alpha, gamma=cfg.gamma, step=sc.kind, beta=sc.beta,
        step_scale=sc.scale, step_decay=sc.decay, max_iter=cfg.max_iter, tol=cfg.tol,
        theta0=cfg.barrier.theta0, chi=cfg.barrier.chi, barrier_eps=cfg.barrier.eps,
        barrier=cfg.barrier.mode, inner_tol=cfg.barrier.inner_tol, oracle=oracle, timing=cfg.timing)


def oracle_for(cfg, spec):
    if not cfg.oracle:
        return None
    if not spec.is_linear_quadratic:
        log.warning("oracle requested but %s is not linear-quadratic; error metrics disabled", spec.name)
        return None
    return solve_se_lq(spec)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


@dataclass
class RunResult:
    seeker: StackelbergSeeker
    trajectory: object
    theory: object
    manifest: dict


def _theory(cfg, spec, graph, seeker):
    gamma = min(seeker.gammas_) if cfg.gamma == "auto" else float(cfg.gamma)
    beta = cfg.schedule.beta if cfg.schedule.kind == "constant" else None
    return theory_report(spec, seeker.alpha_, gamma, consensus_contraction_factor(graph),
                         Budgets(cfg.T, cfg.D, cfg.B), beta=beta, beta_M=min(1.0, cfg.beta_M), pi=cfg.pi)


def run(cfg, out_dir=None):
    """Build the scenario, run the seeker and write the three output files."""
    spec = build_spec(cfg)
    graph = build_graph(cfg, spec.m)
    oracle = oracle_for(cfg, spec)
    seeker = make_seeker(cfg, oracle=oracle).fit(spec, graph)
    report = _theory(cfg, spec, graph, seeker)
    for note in report.notes:
        log.warning("theory: %s", note)
    manifest = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "scenario": spec.name,
        "generated": spec.metadata,
        "graph": {"W": graph.W, "xi": graph.xi, "edges_zero_based": sorted(graph.edges)},
        "oracle_x": None if oracle is None else oracle.x,
        "n_iter": seeker.n_iter_,
        "converged": seeker.converged_,
        "diverged": seeker.diverged_,
        "x_final": seeker.x_,
    }
    out_dir = out_dir or cfg.out_dir
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        seeker.trajectory_.to_csv(out / "trajectory.csv")
        write_json(out / "theory.json", report.to_dict())
        write_json(out / "manifest.json", manifest)
    return RunResult(seeker, seeker.trajectory_, report, manifest)


def compare_schedules(cfg):
    """Run the constant and the diminishing schedule on one instance.

    Returns a dict with both trajectories, the first iteration each
    reaches every threshold (``None`` if never) and divergence flags.
    """
    cc = cfg.compare
    if cc.constant_beta is None or cc.diminishing_scale is None:
        raise ConfigError("compare needs constant_beta and diminishing_scale")
    spec = build_spec(cfg)
    graph = build_graph(cfg, spec.m)
    oracle = oracle_for(cfg, spec)
    runs = {
        "constant": ScheduleConfig("constant", beta=cc.constant_beta),
        "diminishing": ScheduleConfig("diminishing", scale=cc.diminishing_scale, decay=cc.diminishing_decay),
    }
    out = {"trajectories": {}, "hits": {}, "diverged": {}, "n_iter": {}}
    for name, sc in runs.items():
        seeker = make_seeker(cfg, sc, oracle).fit(spec, graph)
        traj = seeker.trajectory_
        out["trajectories"][name] = traj
        out["hits"][name] = {thr: traj.first_below(cc.metric, thr) for thr in cc.thresholds}
        out["diverged"][name] = seeker.diverged_
        out["n_iter"][name] = seeker.n_iter_
    return out


def barrier_gap_sweep(spec, thetas, x=None):
    """Leader-cost gap between barrier and exact follower responses.

    For each ``theta`` returns the gap ``sum_j |theta^j(x, y_theta) -
    theta^j(x, y*)|``, the response error ``||y_theta - y*||`` and their
    bounds ``l_theta0 sqrt(sum_i 2 s_i / (mu theta))`` and
    ``sqrt(sum_i 2 s_i / (mu theta))``.
    """
    x = spec.initial_x() if x is None else np.asarray(x, dtype=float)
    c = spec.constants
    y_star = np.concatenate([best_response_exact(cost, x, S)
                             for cost, S in zip(spec.follower_costs, spec.follower_sets)])
    s_tot = sum(S.num_inequalities for S in spec.follower_sets)
    rows = []
    for th in thetas:
        ys = []
        for cost, S in zip(spec.follower_costs, spec.follower_sets):
            if isinstance(S, Unconstrained):
                ys.append(best_response_exact(cost, x))
            else:
                ys.append(barrier_inner_solve(cost, S, x, th, strictly_feasible_start(S, x), tol=1e-12))
        y = np.concatenate(ys)
        gap = sum(abs(L.value(x, y) - L.value(x, y_star)) for L in spec.leader_costs)
        y_bound = math.sqrt(2 * s_tot / (c.mu * th))
        rows.append({"theta": float(th), "gap": float(gap), "gap_bound": c.l_theta0 * y_bound,
                     "y_err": float(np.linalg.norm(y - y_star)), "y_bound": y_bound})
    return rows
