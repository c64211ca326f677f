"""The distributed equilibrium seeker as a scikit-learn style estimator.

One outer iteration runs four synchronous stages, each finished for every
agent before the next one starts:

1. followers update ``y`` (gradient steps or a barrier solve), warm started;
2. each leader runs J-H-I descent on its own cluster, warm started;
3. the leaders run ``B`` consensus rounds on the cluster blocks;
4. each leader forms its hypergradient estimate and takes a projected step.
"""

import dataclasses
import math
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .consensus import EstimatorBank, MessageAudit, extract_blocks, run_consensus
from .followers import barrier_inner_solve, default_step, inner_gd, strictly_feasible_start, sumt, FollowerState
from .game import Unconstrained
from .leaders import StepSchedule, follower_solution, hypergradient_estimate, projected_step, pseudo_gradient, step_at
from .sensitivity import assemble_cluster_blocks, auto_gamma, exact_cluster_jhi, jhi_descent

CSV_COLUMNS = ("k", "beta", "rel_x_err", "psi_norm", "rel_psi_err", "br_err", "jhi_err", "cons_err", "wall_ms")


# ---------------------------------------------------------------------------
# instrumentation
# ---------------------------------------------------------------------------


class _CallContext:
    leader = None


class _AuditedCost:
    """Follower-oracle proxy that records which leader (if any) asks."""

    def __init__(self, cost, i, ctx, calls):
        self._cost, self._i, self._ctx, self._calls = cost, i, ctx, calls
        self.dim, self.leader_dim, self.is_quadratic = cost.dim, cost.leader_dim, cost.is_quadratic

    def _wrap(name):
        def call(self, *args):
            if self._ctx.leader is not None:
                self._calls[(self._ctx.leader, self._i)] += 1
            return getattr(self._cost, name)(*args)
        return call

    value = _wrap("value")
    grad = _wrap("grad")
    hess = _wrap("hess")
    cross = _wrap("cross")
    del _wrap

    def cross_block(self, j_slice, y, x):
        return self.cross(y, x)[j_slice]

    def best_response(self, x):
        return self._cost.best_response(x)


@dataclass
class AuditLog:
    oracle_calls: Counter = field(default_factory=Counter)
    messages: MessageAudit = field(default_factory=MessageAudit)

    def out_of_cluster_calls(self, spec):
        return sum(n for (j, i), n in self.oracle_calls.items() if spec.cluster_of[i] != j)

    def summary(self, spec, graph):
        return {
            "oracle_calls": sum(self.oracle_calls.values()),
            "out_of_cluster_calls": self.out_of_cluster_calls(spec),
            "estimate_reads": sum(self.messages.reads.values()),
            "truth_reads": sum(self.messages.truth_reads.values()),
            "non_neighbor_reads": len(self.messages.non_neighbor_reads(graph)),
        }


# ---------------------------------------------------------------------------
# trajectory
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Per-iteration metrics. Oracle-dependent entries are ``None`` when off."""

    rows: list = field(default_factory=list)
    xs: list = field(default_factory=list)
    delta: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return np.array([np.nan if r[name] is None else r[name] for r in self.rows], dtype=float)

    def first_below(self, name, threshold):
        """First ``k`` with ``column(name) <= threshold``, or ``None``."""
        for r in self.rows:
            if r[name] is not None and r[name] <= threshold:
                return r["k"]
        return None

    def to_csv(self, path):
        def fmt(v):
            if v is None:
                return "NA"
            if isinstance(v, (int, np.integer)):
                return str(v)
            return repr(float(v))
        lines = [",".join(CSV_COLUMNS)]
        lines += [",".join(fmt(r[c]) for c in CSV_COLUMNS) for r in self.rows]
        with open(path, "w", newline="") as fh:
            fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def follower_stage(spec, x, ys, T, alpha, theta=None, barrier="fixed", inner_tol=1e-6, states=None):
    """Stage 1: new follower decisions from warm starts ``ys``."""
    out = []
    for i, (cost, S, y0) in enumerate(zip(spec.follower_costs, spec.follower_sets, ys)):
        if isinstance(S, Unconstrained):
            out.append(inner_gd(cost, x, y0, T, alpha))
        elif barrier == "sumt":
            out.append(sumt(cost, S, x, states[i], tol=inner_tol).y)
        else:
            out.append(barrier_inner_solve(cost, S, x, theta, y0, tol=inner_tol))
    return out


def sensitivity_stage(spec, x, ys, Zs, D, gamma, theta=None, ctx=None):
    """Stage 2: per-cluster J-H-I descent. Returns ``(Zs, sens_list, gammas)``."""
    Zs_new, sens_list, gammas = [], [], []
    for h in range(spec.m):
        if ctx is not None:
            ctx.leader = h
        sens = assemble_cluster_blocks(spec, h, [ys[i] for i in spec.clusters[h]], x, theta)
        if ctx is not None:
            ctx.leader = None
        g = auto_gamma(sens) if gamma == "auto" else float(gamma)
        Zs_new.append(jhi_descent(sens, g, D, Z0=Zs[h]))
        sens_list.append(sens)
        gammas.append(g)
    return Zs_new, sens_list, gammas


def leader_stage(spec, x, y, bank):
    """Stage 4 (estimate part): stacked hypergradient estimates at ``(x, y)``."""
    return np.concatenate([hypergradient_estimate(j, x, y, extract_blocks(bank, j, spec), spec)
                           for j in range(spec.m)])


def estimate_pseudo_gradient(spec, graph, x, T, D, B, alpha=None, gamma="auto", theta=None):
    """Cold-start estimate of ``Psi(x)`` with one pass of the four stages."""
    c = spec.constants
    alpha = default_step(c.mu, c.l_s1) if alpha is None else alpha
    ys = [np.zeros(d) if isinstance(S, Unconstrained) else strictly_feasible_start(S, x)
          for d, S in zip(spec.follower_dims, spec.follower_sets)]
    ys = follower_stage(spec, x, ys, T, alpha, theta)
    Zs = [np.zeros((spec.q, spec.cluster_dim(h))) for h in range(spec.m)]
    Zs, _, _ = sensitivity_stage(spec, x, ys, Zs, D, gamma, theta)
    bank = run_consensus(EstimatorBank.for_spec(spec), graph, Zs, B)
    return leader_stage(spec, x, np.concatenate(ys), bank)


# ---------------------------------------------------------------------------
# estimator
# ---------------------------------------------------------------------------


class StackelbergSeeker(BaseEstimator):
    """Distributed Stackelberg-equilibrium seeker for clustered games.

    Parameters
    ----------
    T, D, B : int
        Follower gradient steps, J-H-I descent steps and consensus rounds
        per outer iteration.
    alpha : float, optional
        Follower step; defaults to ``2 / (mu + l_s1)``.
    gamma : float or "auto"
        J-H-I step; ``"auto"`` uses ``1 / lambda_max`` of each cluster's
        Hessian.
    step : {"diminishing", "constant"}
    beta : float, optional
        Constant step (required when ``step="constant"``).
    step_scale, step_decay : float
        Diminishing schedule ``step_scale * (k + 1) ** -step_decay``.
    max_iter : int
        Outer iteration cap ``K``.
    tol : float
        Early stop when ``||x_{k+1} - x_k|| <= tol``.
    theta0, chi, barrier_eps : float
        Barrier weight, its growth factor and tolerance (constrained games).
    barrier : {"fixed", "sumt"}
        Solve each outer iteration at ``theta0`` or run the full SUMT loop.
    inner_tol : float
        Reduced-gradient tolerance of barrier solves.
    oracle : object, optional
        Anything with an ``x`` attribute (the equilibrium); enables the
        error metrics that need ground truth.
    track : bool
        Record per-iteration metrics.
    audit : bool
        Count follower-oracle calls and consensus reads.
    timing : bool
        Record wall-clock times (off by default so output is reproducible).
    growth_guard : float
        Stop and flag divergence when ``||x_k - x_0||`` exceeds
        ``growth_guard * (1 + ||x_0||)``.
    x0 : array-like, optional
        Initial leader decision; defaults to the centres of the sets.

    Attributes
    ----------
    x_, y_ : ndarray
        Final leader and follower decisions.
    trajectory_ : Trajectory
    n_iter_ : int
    converged_, diverged_ : bool
    audit_ : dict or None
    """

    def __init__(self, T=50, D=50, B=100, alpha=None, gamma="auto", step="diminishing", beta=None,
                 step_scale=1.0, step_decay=1.0, max_iter=1000, tol=1e-10, theta0=1.0, chi=10.0,
                 barrier_eps=1e-3, barrier="fixed", inner_tol=1e-6, oracle=None, track=True,
                 audit=False, timing=False, growth_guard=1e6, x0=None):
        self.T = T
        self.D = D
        self.B = B
        self.alpha = alpha
        self.gamma = gamma
        self.step = step
        self.beta = beta
        self.step_scale = step_scale
        self.step_decay = step_decay
        self.max_iter = max_iter
        self.tol = tol
        self.theta0 = theta0
        self.chi = chi
        self.barrier_eps = barrier_eps
        self.barrier = barrier
        self.inner_tol = inner_tol
        self.oracle = oracle
        self.track = track
        self.audit = audit
        self.timing = timing
        self.growth_guard = growth_guard
        self.x0 = x0

    def schedule(self):
        if self.step == "constant":
            return StepSchedule.constant(self.beta)
        return StepSchedule.diminishing(self.step_scale, self.step_decay)

    def _check_params(self):
        for name in ("T", "D", "B"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.barrier not in ("fixed", "sumt"):
            raise ValueError("barrier must be 'fixed' or 'sumt'")

    def fit(self, game, graph):
        """Run the outer loop on ``game`` over the leader ``graph``."""
        self._check_params()
        if graph.m != game.m:
            raise ValueError(f"graph has {graph.m} leaders, game has {game.m}")
        schedule = self.schedule()
        c = game.constants
        alpha = default_step(c.mu, c.l_s1) if self.alpha is None else float(self.alpha)
        theta = self.theta0 if game.is_constrained else None

        ctx, log = None, None
        spec = game
        if self.audit:
            ctx, log = _CallContext(), AuditLog()
            wrapped = [_AuditedCost(cst, i, ctx, log.oracle_calls) for i, cst in enumerate(game.follower_costs)]
            spec = dataclasses.replace(game, follower_costs=wrapped)

        x = game.project_x(game.initial_x() if self.x0 is None else np.asarray(self.x0, dtype=float))
        x_init = x.copy()
        ys = [np.zeros(d) if isinstance(S, Unconstrained) else strictly_feasible_start(S, x)
              for d, S in zip(game.follower_dims, game.follower_sets)]
        states = [FollowerState(y, self.theta0, self.chi, self.barrier_eps) for y in ys] \
            if self.barrier == "sumt" else None
        Zs = [np.zeros((game.q, game.cluster_dim(h))) for h in range(game.m)]
        bank = EstimatorBank.for_spec(game)

        x_star = psi_star = None
        if self.oracle is not None:
            x_star = np.asarray(self.oracle.x, dtype=float)
            psi_star = pseudo_gradient(x_star, game, theta)
        traj = Trajectory()
        x_den = psi_den = None
        self.converged_ = self.diverged_ = False
        self.gammas_ = None

        k = 0
        for k in range(int(self.max_iter)):
            t0 = time.perf_counter() if self.timing else None
            beta = step_at(schedule, k)
            y_start = [y.copy() for y in ys]
            Z_start = [Z.copy() for Z in Zs]
            bank_start = bank
            try:
                ys = follower_stage(spec, x, ys, int(self.T), alpha, theta, self.barrier, self.inner_tol, states)
                if states is not None:
                    for st, y in zip(states, ys):
                        st.y = y
                Zs, sens, self.gammas_ = sensitivity_stage(spec, x, ys, Zs, int(self.D), self.gamma, theta, ctx)
                bank = run_consensus(bank, graph, Zs, int(self.B), audit=None if log is None else log.messages)
                y = np.concatenate(ys)
                psi_hat = leader_stage(game, x, y, bank)
            except (np.linalg.LinAlgError, FloatingPointError, ValueError, RuntimeError) as exc:
                raise type(exc)(f"outer iteration {k}: {exc}") from exc
            x_new = np.concatenate([projected_step(x[sl], psi_hat[sl], beta, S)
                                    for sl, S in zip(game.x_slices, game.leader_sets)])

            if self.track:
                row = {"k": k, "beta": beta, "rel_x_err": None, "psi_norm": float(np.linalg.norm(psi_hat)),
                       "rel_psi_err": None, "br_err": None, "jhi_err": None, "cons_err": bank.error(Zs),
                       "wall_ms": None}
                Z_exact = [exact_cluster_jhi(s) for s in sens]
                row["jhi_err"] = float(np.sqrt(sum(np.sum((Z - Ze) ** 2) for Z, Ze in zip(Zs, Z_exact))))
                if x_star is not None:
                    if x_den is None:
                        x_den = float(np.linalg.norm(x_init - x_star)) or 1.0
                        psi_den = float(np.linalg.norm(psi_hat - psi_star)) or 1.0
                    row["rel_x_err"] = float(np.linalg.norm(x - x_star)) / x_den
                    row["rel_psi_err"] = float(np.linalg.norm(psi_hat - psi_star)) / psi_den
                    y_star = follower_solution(game, x, theta)
                    row["br_err"] = float(np.linalg.norm(y - np.concatenate(y_star)))
                    traj.delta.append(self._delta(game, x, y_start, y_star, Z_start, Z_exact, bank_start, Zs))
                if self.timing:
                    row["wall_ms"] = 1e3 * (time.perf_counter() - t0)
                traj.rows.append(row)
                traj.xs.append(x.copy())

            step_norm = float(np.linalg.norm(x_new - x))
            x = x_new
            if not np.all(np.isfinite(x)) or np.linalg.norm(x - x_init) > self.growth_guard * (1 + np.linalg.norm(x_init)):
                self.diverged_ = True
                break
            if step_norm <= self.tol:
                self.converged_ = True
                break

        self.x_ = x
        self.y_ = np.concatenate(ys)
        self.Z_ = Zs
        self.bank_ = bank
        self.hypergradient_ = psi_hat
        self.trajectory_ = traj
        self.n_iter_ = k + 1
        self.alpha_ = alpha
        self.audit_ = None if log is None else log.summary(game, graph)
        self.audit_log_ = log
        return self

    @staticmethod
    def _delta(game, x, y_start, y_star, Z_start, Z_exact, bank_start, Zs):
        dy = sum(float(np.sum((a - b) ** 2)) for a, b in zip(y_start, y_star))
        dz = sum(float(np.sum((a - b) ** 2)) for a, b in zip(Z_start, Z_exact))
        return dy + dz + bank_start.error(Zs) ** 2

    def rel_error_at(self, threshold, column="rel_x_err"):
        """First outer iteration whose ``column`` is at most ``threshold``."""
        return self.trajectory_.first_below(column, threshold)
