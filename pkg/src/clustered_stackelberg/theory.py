"""Closed-form convergence diagnostics.

Everything here is a pure function of declared constants and budgets:
the constants ``Xi_1..Xi_8``, the contraction factors of the three inner
loops, the minimal inner budgets, the 4x4 coupling matrix ``M(beta)`` and
its admissible step bound ``beta_s``.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

DEFAULT_PI = 2.0


class TheoryError(ValueError):
    pass


@dataclass(frozen=True)
class Budgets:
    T: int
    D: int
    B: int


@dataclass(frozen=True)
class ProblemSize:
    """Sizes entering the constants: ``m``, ``N``, total ``p`` and ``p_M``."""

    m: int
    N: int
    p: int
    p_M: int

    @classmethod
    def from_spec(cls, spec):
        return cls(spec.m, spec.N, spec.p, max(spec.cluster_dim(h) for h in range(spec.m)))


def xi_constants(size, c):
    """``Xi_1 .. Xi_8`` as a tuple."""
    m, N, p = size.m, size.N, size.p
    mu, ls1, ls2 = c.mu, c.l_s1, c.l_s2
    lt0, lt1 = c.l_theta0, c.l_theta1
    kap2 = c.kappa ** 2
    x1 = 6 * m**2 * p**2 * N * ls1**2 * ls2**2 / mu**4 + 6 * m * p * ls2**2 / mu**2
    x2 = x1 * N * kap2 + x1 * N
    x3 = 3 * m * lt1**2 + 3 * m**3 * N**2 * p * ls1**2 * lt1**2 / mu**2
    x4 = 3 * N**2 * lt0**2 * x2 + x3
    x5 = x3 + 3 * N**2 * lt0**2 * x1
    x6 = 2 * m * lt0**2 + 2 * m**2 * N**3 * p * ls1**2 * lt0**2 / mu**2
    x7 = 16 * x1 * N * kap2 / (3 * m) + 2 * x1 * N / (3 * m)
    x8 = 2 * N * kap2 + x7 + 8 * m * x7
    return (x1, x2, x3, x4, x5, x6, x7, x8)


def gamma_const(c):
    return c.mu * c.l_s1 / (c.mu + c.l_s1)


def _required(c, names):
    missing = [n for n in names if getattr(c, n, None) is None]
    if missing:
        raise TheoryError("missing constants: " + ", ".join(missing))


def compute_constants(spec):
    """``(Xi_1..Xi_8, Gamma)`` for a game specification."""
    _required(spec.constants, ("mu", "l_theta0", "l_theta1", "l_s1", "l_s2"))
    return xi_constants(ProblemSize.from_spec(spec), spec.constants), gamma_const(spec.constants)


# ---------------------------------------------------------------------------
# contraction bases and factors
# ---------------------------------------------------------------------------


def base_T(alpha, c):
    return 1.0 - 2.0 * alpha * gamma_const(c)


def base_D(gamma, size, c):
    return size.m * math.sqrt(size.p_M) * (1.0 - gamma * c.mu)


def conservative_rz(size, q):
    """Upper bound ``min(rows, cols)`` on the rank of the stacked estimate error."""
    return min(size.m * size.N * q, size.m * size.p)


def contraction_factors(alpha, gamma, sigma2, r_z, budgets, size, c):
    """``(C_T, C_D, C_B)``."""
    C_T = base_T(alpha, c) ** budgets.T
    C_D = base_D(gamma, size, c) ** (2 * budgets.D)
    C_B = r_z * sigma2 ** (2 * budgets.B)
    return C_T, C_D, C_B


def _log_den(base, what):
    if base == 0:
        return math.inf  # exact after one step
    if not 0 < base < 1:
        raise TheoryError(f"{what} gives a non-contractive base {base:.6g}; the bound is infeasible")
    return math.log(1.0 / base)


def iteration_bounds(size, c, alpha, gamma, sigma2, r_z, beta_M, pi=DEFAULT_PI):
    """Smallest ``(T, D, B)`` meeting the warm-start contraction condition.

    Raises :class:`TheoryError` naming ``alpha``, ``gamma`` or ``sigma2``
    when the corresponding base does not contract.
    """
    if not pi > 1:
        raise ValueError("pi must be > 1")
    if not 0 < beta_M <= 1:
        raise ValueError("beta_M must lie in (0, 1]")
    x1, _, x3, _, x5, _, _, x8 = xi_constants(size, c)
    m, N, lt0 = size.m, size.N, c.l_theta0
    bm2 = beta_M ** 2
    num_T = 2 * pi + 16 * pi * x3 / m + 128 * pi * x1 / 3 + 2 * bm2 * pi * x5 * x8
    num_D = 2 * pi + 16 * m * pi + 36 * m * N**2 * pi * bm2 * lt0**2 * x8
    num_B = 2 * pi + 36 * N**2 * pi * bm2 * lt0**2 * x8
    T = math.log(num_T) / _log_den(base_T(alpha, c), "alpha")
    D = math.log(num_D) / (2 * _log_den(base_D(gamma, size, c), "gamma"))
    B = math.log(num_B) / (2 * _log_den(r_z * sigma2, "sigma2"))
    return Budgets(*(max(1, math.ceil(v)) for v in (T, D, B)))


# ---------------------------------------------------------------------------
# coupling matrix
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CouplingData:
    """Everything ``M(beta)`` depends on besides ``beta``."""

    m: int
    N: int
    kappa: float
    m_theta: float
    l_phi: float
    l_theta0: float
    xi: tuple
    C_T: float
    C_D: float
    C_B: float

    @property
    def beta_limit(self):
        return 2.0 * self.m_theta / self.l_phi ** 2


def coupling_data(size, c, alpha, gamma, sigma2, r_z, budgets):
    _required(c, ("m_theta", "l_phi"))
    C_T, C_D, C_B = contraction_factors(alpha, gamma, sigma2, r_z, budgets, size, c)
    return CouplingData(size.m, size.N, c.kappa, c.m_theta, c.l_phi, c.l_theta0,
                        xi_constants(size, c), C_T, C_D, C_B)


def G_of(beta, data):
    val = 1.0 - 2.0 * data.m_theta * beta + data.l_phi ** 2 * beta ** 2
    if val < -1e-12:
        raise TheoryError(f"G(beta) is not real at beta = {beta:.6g}")
    return math.sqrt(max(val, 0.0))


def build_M(beta, data):
    """The 4x4 nonnegative coupling matrix ``M(beta)``."""
    if beta < 0:
        raise TheoryError("beta must be >= 0")
    _, _, x3, x4, x5, _, x7, _ = data.xi
    m, N, kap, lt0 = data.m, data.N, data.kappa, data.l_theta0
    C_T, C_D, C_B = data.C_T, data.C_D, data.C_B
    tT = math.sqrt(x5 * C_T)
    tD = math.sqrt(18 * m * N**2 * lt0**2 * C_D)
    tB = math.sqrt(18 * N**2 * lt0**2 * C_B)
    k2N = kap * math.sqrt(2 * N)
    s7 = math.sqrt(x7)
    r4 = 2 * math.sqrt(2 * m * x7)
    b = beta
    return np.array([
        [G_of(b, data), b * tT, b * tD, b * tB],
        [kap * math.sqrt(2 * N * x4) * b, math.sqrt(2 * C_T) + k2N * tT * b, k2N * b * tD, k2N * b * tB],
        [math.sqrt(x4 * x7) * b, s7 * tT * b + 4 * math.sqrt(x3 * C_T / m),
         s7 * tD * b + math.sqrt(2 * C_D), s7 * b * tB],
        [2 * math.sqrt(2 * m * x4 * x7) * b, 8 * math.sqrt(2 * x3 * C_T) + r4 * b * tT,
         4 * math.sqrt(m * C_D) + r4 * b * tD, math.sqrt(2 * C_B) + r4 * b * tB],
    ])


def spectral_radius(M):
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def det_I_minus_M(beta, data):
    d = float(np.linalg.det(np.eye(4) - build_M(beta, data)))
    if not math.isfinite(d):
        raise TheoryError(f"det(I - M) is not finite at beta = {beta:.6g}")
    return d


def beta_star(data, grid=400, xtol=1e-10):
    """Smallest positive root of ``det(I - M(beta))`` below ``2 m_theta / l_phi^2``.

    ``beta = 0`` is always a root (``G(0) = 1``), so the scan starts just
    above zero on a geometric grid that ends at the limit itself (the root
    can sit within round-off of it when the coupling terms are tiny); the
    first sign change is refined with Brent's method. Returns ``inf`` when
    no root is found.
    """
    hi = data.beta_limit
    grid_pts = np.geomspace(hi * 1e-12, hi, grid)
    prev_b, prev_d = grid_pts[0], det_I_minus_M(grid_pts[0], data)
    for b in grid_pts[1:]:
        d = det_I_minus_M(b, data)
        if prev_d == 0.0:
            return float(prev_b)
        if np.sign(d) != np.sign(prev_d):
            return float(brentq(det_I_minus_M, prev_b, b, args=(data,), xtol=xtol * prev_b, rtol=1e-14))
        prev_b, prev_d = b, d
    return math.inf


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


@dataclass
class TheoryReport:
    xi: tuple
    Gamma: float
    alpha: float
    gamma: float
    sigma2: float
    r_z: float
    p_M: int
    pi: float
    budgets: dict
    C_T: float
    C_D: float
    C_B: float
    C_tilde: tuple
    gamma_interval: tuple
    min_budgets: object = None
    beta_limit: float = None
    beta_s: float = None
    rho_M: float = None
    beta: float = None
    notes: list = field(default_factory=list)

    def to_dict(self):
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return str(v)
            if isinstance(v, (list, tuple)):
                return [clean(u) for u in v]
            if isinstance(v, dict):
                return {k: clean(u) for k, u in v.items()}
            return v
        return {k: clean(v) for k, v in asdict(self).items()}


def theory_report(spec, alpha, gamma, sigma2, budgets, beta=None, beta_M=1.0, pi=DEFAULT_PI, r_z=None):
    """Evaluate every diagnostic that the declared constants allow.

    Infeasible pieces are recorded in ``notes`` rather than raised.
    """
    from .sensitivity import gamma_interval

    c = spec.constants
    size = ProblemSize.from_spec(spec)
    xi, Gamma = compute_constants(spec)
    r_z = conservative_rz(size, spec.q) if r_z is None else r_z
    C_T, C_D, C_B = contraction_factors(alpha, gamma, sigma2, r_z, budgets, size, c)
    lt0 = c.l_theta0
    C_tilde = (math.sqrt(xi[4] * C_T), math.sqrt(18 * size.m * size.N**2 * lt0**2 * C_D),
               math.sqrt(18 * size.N**2 * lt0**2 * C_B))
    lo, hi, ok = gamma_interval(size.m, size.p_M, c.mu, c.l_s2)
    rep = TheoryReport(xi, Gamma, alpha, gamma, sigma2, r_z, size.p_M, pi, asdict(budgets),
                       C_T, C_D, C_B, C_tilde, (lo, hi, ok), beta=beta)
    if not ok:
        rep.notes.append("J-H-I step interval is empty; contraction is monitored empirically")
    try:
        mins = iteration_bounds(size, c, alpha, gamma, sigma2, r_z, beta_M, pi)
        rep.min_budgets = asdict(mins)
        for name in ("T", "D", "B"):
            if getattr(budgets, name) < getattr(mins, name):
                rep.notes.append(f"budget {name}={getattr(budgets, name)} below the bound {getattr(mins, name)}")
    except TheoryError as exc:
        rep.min_budgets = "infeasible"
        rep.notes.append(str(exc))
    if c.m_theta is not None and c.l_phi is not None:
        data = coupling_data(size, c, alpha, gamma, sigma2, r_z, budgets)
        rep.beta_limit = data.beta_limit
        rep.beta_s = beta_star(data)
        if beta is not None and beta <= data.beta_limit:
            rep.rho_M = spectral_radius(build_M(beta, data))
    return rep
