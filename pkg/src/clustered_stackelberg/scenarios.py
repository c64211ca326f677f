"""Scenario builders producing :class:`~clustered_stackelberg.game.GameSpec`.

All builders are deterministic given ``rng_seed`` and record the generated
parameters in ``spec.metadata`` so that a run manifest can reproduce them.
"""

import dataclasses
import json
from pathlib import Path

import numpy as np

from ._validation import check_random_state
from .game import (
    Box,
    FollowerCostFunctions,
    GameSpec,
    LeaderCostFunctions,
    QuadraticFollowerCost,
    QuadraticLeaderCost,
    Rectangle,
    SmoothnessConstants,
    Unconstrained,
    WholeSpace,
)
from .leaders import affine_pseudo_gradient, monotonicity_constants


class ScenarioError(ValueError):
    pass


def _spd(rng, n, lo, hi):
    """Random SPD matrix with eigenvalues drawn from ``[lo, hi]`` (both ends hit)."""
    Qm, _ = np.linalg.qr(rng.normal(size=(n, n)))
    eig = rng.uniform(lo, hi, size=n)
    eig[0] = lo
    if n > 1:
        eig[-1] = hi
    return (Qm * eig) @ Qm.T


def _cluster_of(sizes):
    return [h for h, n in enumerate(sizes) for _ in range(n)]


def _joint_norm(M, C):
    """Spectral norm of ``[[M, C], [C', 0]]``: Lipschitz constant of ``(y, x) -> (grad_y, grad_x)``."""
    p, q = C.shape
    K = np.block([[M, C], [C.T, np.zeros((q, q))]])
    return float(np.linalg.norm(K, 2))


def lq_constants(follower_costs, leader_costs, region_radius):
    """Constants of a linear-quadratic game, exact except the region-bounded ones.

    ``l_theta0`` and ``l_s0`` bound gradient norms on the ball of radius
    ``region_radius``; ``l_s2`` is exactly zero (constant Hessians).
    """
    mu = min(float(np.linalg.eigvalsh(c.M)[0]) for c in follower_costs)
    l_s1 = max(_joint_norm(c.M, c.C) for c in follower_costs)
    l_s0 = max(l_s1 * region_radius + np.linalg.norm(c.g) + np.linalg.norm(c.c) for c in follower_costs)
    l_t1 = max(float(np.linalg.norm(c.Q, 2)) for c in leader_costs)
    l_t0 = max(float(np.linalg.norm(c.Q, 2)) * region_radius + np.linalg.norm(c.c) for c in leader_costs)
    return SmoothnessConstants(mu=mu, l_theta0=l_t0, l_theta1=l_t1, l_s0=l_s0, l_s1=l_s1, l_s2=0.0)


def with_monotonicity(spec):
    """Return ``spec`` with ``m_theta`` and ``l_phi`` filled from the affine ``Psi``."""
    G, _ = affine_pseudo_gradient(spec)
    m_theta, l_phi = monotonicity_constants(G)
    meta = dict(spec.metadata, m_theta=m_theta, l_phi=l_phi)
    if m_theta <= 0:
        return dataclasses.replace(spec, metadata=meta)
    return dataclasses.replace(spec, constants=spec.constants.replace(m_theta=m_theta, l_phi=l_phi),
                               metadata=meta)


def _leader_quadratic(q, p, j, own, R, F, E, lin):
    """Leader quadratic ``1/2 x_j'R x_j + x_j'E x + x_j'F y + lin'x_j`` on ``z = (x, y)``."""
    n = q + p
    Q = np.zeros((n, n))
    Q[own, own] += R
    K = np.zeros((q, q))
    K[own, :] = E
    Q[:q, :q] += K + K.T
    Q[own, q:] += F
    Q[q:, own] += F.T
    c = np.zeros(n)
    c[own] = lin
    return QuadraticLeaderCost(Q, c, own, q)


def build_lq(cluster_sizes=(1, 2), leader_dims=None, follower_dims=None, rng_seed=0,
             mu=1.0, spread=1.1, coupling=0.3, leader_strength=4.0, leader_coupling=0.3,
             peer_coupling=0.2, region_radius=10.0, name="lq"):
    """Random strongly monotone linear-quadratic game.

    Follower ``i``: ``s = 1/2 y'My - g'y + (Cx)'y`` with ``eig(M)`` in
    ``[mu, spread * mu]``. Leader ``j``: own quadratic with eigenvalues in
    ``[leader_strength, 1.5 leader_strength]`` plus bilinear couplings of
    relative size ``peer_coupling`` (other leaders) and ``leader_coupling``
    (followers).
    """
    rng = check_random_state(rng_seed)
    m = len(cluster_sizes)
    N = sum(cluster_sizes)
    leader_dims = [1] * m if leader_dims is None else list(leader_dims)
    follower_dims = [1] * N if follower_dims is None else list(follower_dims)
    q, p = sum(leader_dims), sum(follower_dims)
    fcosts = []
    for pi in follower_dims:
        M = _spd(rng, pi, mu, spread * mu)
        C = coupling * mu * rng.normal(size=(pi, q)) / np.sqrt(q)
        fcosts.append(QuadraticFollowerCost(M, rng.normal(size=pi), C))
    lcosts = []
    offs = np.cumsum([0] + leader_dims)
    for j in range(m):
        own = slice(offs[j], offs[j + 1])
        R = _spd(rng, leader_dims[j], leader_strength, 1.5 * leader_strength)
        E = peer_coupling * leader_strength * rng.normal(size=(leader_dims[j], q)) / np.sqrt(q)
        E[:, own] = 0.0
        F = leader_coupling * leader_strength * rng.normal(size=(leader_dims[j], p)) / np.sqrt(p)
        lcosts.append(_leader_quadratic(q, p, j, own, R, F, E, leader_strength * rng.normal(size=leader_dims[j])))
    spec = GameSpec(leader_dims, follower_dims, _cluster_of(cluster_sizes), lcosts, fcosts,
                    [WholeSpace(d) for d in leader_dims], [Unconstrained(d) for d in follower_dims],
                    lq_constants(fcosts, lcosts, region_radius), name=name,
                    metadata={"scenario": "lq", "rng_seed": rng_seed, "cluster_sizes": list(cluster_sizes)})
    return with_monotonicity(spec)


# ---------------------------------------------------------------------------
# microgrid market
# ---------------------------------------------------------------------------


MICROGRID_DEFAULTS = {
    "cluster_sizes": [5, 6, 7, 8],
    "markets": 3,
    "leader_dim": 2,
    "follower_dim": 2,
    "q_range": [8.0, 12.0],
    "m_range": [1.0, 1.1],
    "price_range": [0.05, 0.1],
    "base_price": [1.0, 2.0],
    "r_bar": 0.01,
    "region_radius": 10.0,
    "max_retries": 20,
}


def _selector(rng, rows, cols):
    """0/1 matrix whose every column has exactly one unit entry."""
    S = np.zeros((rows, cols))
    S[rng.integers(rows, size=cols), np.arange(cols)] = 1.0
    return S


def _microgrid_once(p, rng):
    m = len(p["cluster_sizes"])
    N = sum(p["cluster_sizes"])
    v = p["markets"]
    qd, pd = [p["leader_dim"]] * m, [p["follower_dim"]] * N
    q, pt = sum(qd), sum(pd)
    A_blocks = [_selector(rng, v, d) for d in qd]
    B_blocks = [_selector(rng, v, d) for d in pd]
    A, Bm = np.hstack(A_blocks), np.hstack(B_blocks)
    P = np.diag(rng.uniform(*p["price_range"], size=v))
    e = rng.uniform(*p["base_price"], size=v)
    fcosts = []
    for Bi, pi in zip(B_blocks, pd):
        M = _spd(rng, pi, *p["m_range"])
        g = rng.uniform(0.5, 1.5, size=pi)
        fcosts.append(QuadraticFollowerCost(M, g, -Bi.T @ P @ A, c=Bi.T @ e))
    lcosts = []
    offs = np.cumsum([0] + qd)
    AB = np.hstack([A, -Bm])
    for j in range(m):
        own = slice(offs[j], offs[j + 1])
        S = np.zeros((qd[j], q))
        S[:, own] = np.eye(qd[j])
        Qj = _spd(rng, qd[j], *p["q_range"])
        Q = np.zeros((q + pt, q + pt))
        Q[:q, :q] += S.T @ Qj @ S
        K = A.T @ P.T @ A_blocks[j] @ S
        Q[:q, :q] += K + K.T
        Q += 2.0 * p["r_bar"] * AB.T @ AB
        d = rng.uniform(-1.0, 1.0, size=qd[j])
        c = np.zeros(q + pt)
        c[:q] = S.T @ (d - A_blocks[j].T @ e)
        lcosts.append(QuadraticLeaderCost(Q, c, own, q, const=float(rng.uniform(0, 1))))
    meta = {"A": A.tolist(), "B": Bm.tolist(), "P": np.diag(P).tolist(), "e": e.tolist()}
    return qd, pd, fcosts, lcosts, meta


def build_microgrid(params=None, rng_seed=0, edges=((4, 1), (1, 2), (2, 3), (2, 4))):
    """Energy-trading microgrid game with quadratic costs.

    Leaders are microgrid operators, followers their users. Follower
    ``i`` pays ``1/2 y'My - g'y + (e - PAx)'B_i y``; leader ``j`` pays its
    own quadratic cost, the market cost ``-(e - PAx)'A_j x_j`` and a
    mismatch penalty ``r_bar ||Ax - By||^2``. Parameters are regenerated
    (new sub-seed) until the pseudo-gradient is strongly monotone.
    """
    p = dict(MICROGRID_DEFAULTS)
    if params:
        unknown = set(params) - set(p)
        if unknown:
            raise ScenarioError(f"unknown microgrid parameters: {sorted(unknown)}")
        p.update(params)
    rng = check_random_state(rng_seed)
    for attempt in range(p["max_retries"]):
        qd, pd, fcosts, lcosts, meta = _microgrid_once(p, rng)
        spec = GameSpec(qd, pd, _cluster_of(p["cluster_sizes"]), lcosts, fcosts,
                        [WholeSpace(d) for d in qd], [Unconstrained(d) for d in pd],
                        lq_constants(fcosts, lcosts, p["region_radius"]), name="microgrid",
                        metadata={"scenario": "microgrid", "rng_seed": rng_seed, "attempt": attempt,
                                  "params": p, "edges_one_based": [list(e) for e in edges], **meta})
        spec = with_monotonicity(spec)
        if spec.constants.m_theta is not None:
            return spec
    raise ScenarioError("could not generate a strongly monotone microgrid instance")


# ---------------------------------------------------------------------------
# cellular network
# ---------------------------------------------------------------------------


CELLULAR_DEFAULTS = {
    "cluster_sizes": [2, 2],
    "bandwidth": 1.0,
    "lambda_range": [0.5, 1.0],
    "rate_range": [1.0, 2.0],
    "a_range": [0.5, 1.0],
    "z_range": [0.5, 1.0],
    "gain_range": [0.1, 1.0],
    "y_bounds": [0.1, 2.0],
    "price_bounds": [0.5, 2.0],
}


def _cellular_follower(i, lam, r, Bu, a, z, h_col):
    def value(y, x):
        return lam * (h_col @ x * y[0] - r * Bu * np.log(a + z * y[0]))

    def grad(y, x):
        return np.array([lam * (h_col @ x - r * Bu * z / (a + z * y[0]))])

    def hess(y, x):
        return np.array([[lam * r * Bu * z**2 / (a + z * y[0]) ** 2]])

    def cross(y, x):
        return (lam * h_col).reshape(-1, 1)

    return FollowerCostFunctions(1, h_col.shape[0], value, grad, hess, cross)


def _cellular_leader(j, h_row, lam):
    w = h_row * lam

    def value(x, y):
        return -x[j] * (w @ y)

    def grad_x(x, y):
        return np.array([-(w @ y)])

    def grad_y(x, y):
        return -x[j] * w

    return LeaderCostFunctions(value, grad_x, grad_y)


def build_cellular(params=None, rng_seed=0):
    """Spectrum-pricing game with scalar decisions and box-constrained followers.

    Follower ``i`` buys ``y_i`` in ``[l_i, u_i]`` at cost
    ``lambda_i (sum_j h_ji x_j y_i - r_i B_u log(a_i + z_i y_i))``; leader
    ``j`` earns ``x_j sum_i h_ji lambda_i y_i``. The strong-convexity
    modulus is certified on the box, where the log term has curvature at
    least ``lambda r B_u z^2 / (a + z u)^2``.
    """
    p = dict(CELLULAR_DEFAULTS)
    if params:
        unknown = set(params) - set(p)
        if unknown:
            raise ScenarioError(f"unknown cellular parameters: {sorted(unknown)}")
        p.update(params)
    lo, hi = p["y_bounds"]
    xlo, xhi = p["price_bounds"]
    if lo >= hi or xlo >= xhi:
        raise ScenarioError("bounds need lower < upper")
    if lo < 0:
        raise ScenarioError("follower lower bound must be >= 0")
    rng = check_random_state(rng_seed)
    m = len(p["cluster_sizes"])
    N = sum(p["cluster_sizes"])
    lam = rng.uniform(*p["lambda_range"], size=N)
    r = rng.uniform(*p["rate_range"], size=N)
    a = rng.uniform(*p["a_range"], size=N)
    z = rng.uniform(*p["z_range"], size=N)
    Hg = rng.uniform(*p["gain_range"], size=(m, N))
    Bu = p["bandwidth"]
    fcosts = [_cellular_follower(i, lam[i], r[i], Bu, a[i], z[i], Hg[:, i]) for i in range(N)]
    lcosts = [_cellular_leader(j, Hg[j], lam) for j in range(m)]
    mu = float(np.min(lam * r * Bu * z**2 / (a + z * hi) ** 2))
    curv_max = float(np.max(lam * r * Bu * z**2 / (a + z * lo) ** 2))
    cross_max = float(np.max(np.linalg.norm(Hg * lam, axis=0)))
    w = Hg * lam
    lt0 = float(max(np.hypot(np.sum(w[j]) * hi, xhi * np.linalg.norm(w[j])) for j in range(m)))
    lt1 = float(np.max(np.linalg.norm(w, axis=1)))
    ls0 = float(np.max(lam * (np.sum(Hg, axis=0) * xhi + r * Bu * z / (a + z * lo))))
    ls2 = float(np.max(2 * lam * r * Bu * z**3 / (a + z * lo) ** 3))
    consts = SmoothnessConstants(mu=mu, l_theta0=lt0, l_theta1=lt1, l_s0=ls0,
                                 l_s1=float(np.hypot(curv_max, cross_max)), l_s2=ls2)
    meta = {"scenario": "cellular", "rng_seed": rng_seed, "params": p, "lambda": lam.tolist(),
            "r": r.tolist(), "a": a.tolist(), "z": z.tolist(), "gains": Hg.tolist()}
    return GameSpec([1] * m, [1] * N, _cluster_of(p["cluster_sizes"]), lcosts, fcosts,
                    [Box([xlo], [xhi]) for _ in range(m)],
                    [Rectangle([lo], [hi]) for _ in range(N)], consts, name="cellular", metadata=meta)


def cellular_unconstrained_response(spec, x, i):
    """Closed-form minimizer of follower ``i`` ignoring the box."""
    md = spec.metadata
    Hx = float(np.asarray(md["gains"])[:, i] @ x)
    return md["r"][i] * spec.metadata["params"]["bandwidth"] / Hx - md["a"][i] / md["z"][i]


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------


def load_lq_file(path, region_radius=10.0):
    """Linear-quadratic game from a JSON document.

    Expected keys: ``leader_dims``, ``follower_dims``, ``cluster_of``
    (0-based), ``followers`` (list of ``{"M", "g", "C", "c"?}``) and
    ``leaders`` (list of ``{"Q", "c", "const"?}`` on ``z = (x, y)``).
    """
    doc = json.loads(Path(path).read_text())
    allowed = {"leader_dims", "follower_dims", "cluster_of", "followers", "leaders", "name"}
    unknown = set(doc) - allowed
    if unknown:
        raise ScenarioError(f"unknown keys in scenario file: {sorted(unknown)}")
    qd, pd = doc["leader_dims"], doc["follower_dims"]
    q = sum(qd)
    offs = np.cumsum([0] + list(qd))
    fcosts = [QuadraticFollowerCost(f["M"], f["g"], f["C"], f.get("c")) for f in doc["followers"]]
    lcosts = [QuadraticLeaderCost(l["Q"], l["c"], slice(offs[j], offs[j + 1]), q, l.get("const", 0.0))
              for j, l in enumerate(doc["leaders"])]
    spec = GameSpec(qd, pd, doc["cluster_of"], lcosts, fcosts, [WholeSpace(d) for d in qd],
                    [Unconstrained(d) for d in pd], lq_constants(fcosts, lcosts, region_radius),
                    name=doc.get("name", Path(path).stem), metadata={"scenario": "file", "path": str(path)})
    return with_monotonicity(spec)
