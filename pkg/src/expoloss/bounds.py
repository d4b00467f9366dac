"""Uniform-convergence confidence calculators and the estimators feeding them.

Two bounds on ``P(sup_w |R(w) - R_hat(w)| <= eps_eff)`` over the weight ball
``{||w|| <= M}`` with features in the unit ball:

* :func:`risk_lipschitz_confidence` uses the Lipschitz-in-the-small constant
  of the expected risk, ``L_R(eps)``, in the covering radius;
* :func:`loss_lipschitz_confidence` uses the worst-case Lipschitz constant of
  the loss, ``L_l``.

Covering numbers are handled in log space so ``d`` in the millions is fine.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .losses import Base, LossSpec, binary_loss_batch, hinge_kink, loss_lipschitz
from .transform import sigma

LipschitzFn = Callable[[float], float]


def constant(value: float) -> LipschitzFn:
    """``L_R_of`` that ignores its argument; keeps the value for reporting."""
    fn = lambda _eps: value
    fn.description = f"constant {value!r}"
    return fn


@dataclass
class BoundQuery:
    N: int
    d: int
    M: float
    epsilon: float
    L_l: float
    C_l: float
    L_R_of: LipschitzFn | None = None
    L_R_source: str = "user"

    def __post_init__(self):
        if self.N < 1 or self.d < 1:
            raise ValueError("N and d must be positive")
        if self.M < 1.0:
            raise ValueError("weight radius M must be >= 1")
        if not (self.epsilon > 0 and self.L_l > 0 and self.C_l > 0):
            raise ValueError("epsilon, L_l and C_l must be positive")

    def echo(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "L_R_of"}
        if self.L_R_of is not None:
            out["L_R_of"] = getattr(self.L_R_of, "description", repr(self.L_R_of))
            out["L_R_at_M"] = float(self.L_R_of(self.M))
        return out


@dataclass
class BoundReport:
    calculator: str
    epsilon_effective: float
    confidence: float
    log_failure: float
    B: float
    covering_radius: float
    log_covering_count: float
    eps_prime: float | None
    L_used: float
    query: dict = field(default_factory=dict)

    @property
    def vacuous(self) -> bool:
        return self.confidence <= 0.0

    @property
    def covering_count(self) -> float:
        return math.exp(self.log_covering_count) if self.log_covering_count < 709 else math.inf

    def to_dict(self) -> dict:
        out = asdict(self)
        out["vacuous"] = self.vacuous
        return out


def covering_number_ball(M: float, r: float, d: int) -> float:
    """Log of the volumetric bound ``(1 + 2M/r)**d`` on covering an l2 ball.

    A radius beyond ``M`` needs a single ball (log count 0).
    """
    if not (M > 0 and r > 0 and d > 0):
        raise ValueError("M, r and d must be positive")
    # at r == M the formula is kept (3**d), so the count stays a plain upper bound
    if r > M:
        return 0.0
    return d * math.log1p(2.0 * M / r)


def _confidence(log_mult: float, N: int, eps: float, B: float):
    log_fail = log_mult - N * eps * eps / (8.0 * B * B)
    conf = -math.inf if log_fail > 709.0 else 1.0 - math.exp(log_fail)
    return conf, log_fail


def eps_prime_fixed_point(L_R_of: LipschitzFn, epsilon: float, factor: float = 1.05,
                          lower: float = 1e-8) -> float:
    """Smallest ``t`` with ``t >= min(eps, eps / (4 L_R(t)))``.

    Scans a geometric grid from ``lower * eps`` to ``eps``; the first passing
    grid cell is refined by bisection. ``t = eps`` always passes, so it is the
    fallback.
    """
    def ok(t):
        return t >= min(epsilon, epsilon / (4.0 * L_R_of(t)))

    n = math.ceil(math.log(1.0 / lower) / math.log(factor))
    grid = epsilon * lower * factor ** np.arange(n + 1)
    grid = np.append(grid[grid < epsilon], epsilon)
    prev = None
    for t in grid:
        t = float(t)
        if ok(t):
            if prev is None:
                return t
            lo, hi = prev, t
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if mid in (lo, hi):
                    break
                if ok(mid):
                    hi = mid
                else:
                    lo = mid
            return hi
        prev = t
    return epsilon


def risk_lipschitz_confidence(q: BoundQuery) -> BoundReport:
    """Confidence that the deviation stays below ``eps + L_l eps^2 / (2B)``.

    ``B = L_R(M) M + C_l``, covering radius ``eps / (4 L_R(eps'))`` with eps'
    from :func:`eps_prime_fixed_point`, confidence
    ``1 - 2 (C + 1) exp(-N eps^2 / (8 B^2))``. Negative confidences are
    returned unchanged and flagged as vacuous by the report.
    """
    if q.L_R_of is None:
        raise ValueError("query needs an L_R_of function")
    eps = q.epsilon
    B = q.L_R_of(q.M) * q.M + q.C_l
    eps_p = eps_prime_fixed_point(q.L_R_of, eps)
    L_used = float(q.L_R_of(eps_p))
    radius = eps / (4.0 * L_used)
    log_c = covering_number_ball(q.M, radius, q.d)
    # log(2 (C + 1))
    log_mult = math.log(2.0) + np.logaddexp(log_c, 0.0)
    conf, log_fail = _confidence(float(log_mult), q.N, eps, B)
    return BoundReport("risk_lipschitz", eps + q.L_l * eps * eps / (2.0 * B), conf, log_fail,
                       B, radius, log_c, eps_p, L_used, q.echo())


def loss_lipschitz_confidence(q: BoundQuery) -> BoundReport:
    """Worst-case variant: ``B = L_l M + C_l``, radius ``eps / (4 L_l)``."""
    eps = q.epsilon
    B = q.L_l * q.M + q.C_l
    radius = eps / (4.0 * q.L_l)
    log_c = covering_number_ball(q.M, radius, q.d)
    conf, log_fail = _confidence(math.log(2.0) + log_c, q.N, eps, B)
    return BoundReport("loss_lipschitz", eps, conf, log_fail, B, radius, log_c, None,
                       q.L_l, q.echo())


theorem2_confidence = risk_lipschitz_confidence
theorem3_confidence = loss_lipschitz_confidence


def _margin_breakpoints(spec: LossSpec, M: float) -> list[float]:
    pts = {-M, M}
    c = spec.transform.c
    if not spec.transform.is_identity and 0.0 < c < M:
        pts |= {-c, c}
    if not spec.transform.is_identity and c == 0.0:
        pts.add(0.0)
    if spec.base is Base.HINGE and spec.transform.e > 0:
        k = hinge_kink(1, spec.transform)
        if -M < k < M:
            pts.add(k)
    return sorted(pts)


_GRADING = 4.0
_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def lipschitz_small_uniform(loss: LossSpec, M: float, points: int = 100_001) -> float:
    """``|E[d/dδ l(sigma(δ), +1)]|`` for a margin δ uniform on [-M, M].

    Composite trapezoid rule with panels split at every non-smooth point so no
    panel straddles a kink. Nodes are distributed over panels in proportion
    to their length, with at least 1001 per panel, and graded toward the end
    nearer the origin where the slope of sigma is steepest.
    """
    if not loss.binary:
        raise ValueError("uniform-margin estimate is defined for binary margin losses")
    if M <= 0:
        raise ValueError("M must be positive")
    edges = _margin_breakpoints(loss, M)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        n = max(1001, int(points * (b - a) / (2.0 * M)))
        t = np.linspace(0.0, 1.0, n)
        if a < 0.0 < b:
            delta = a + (b - a) * t
        elif abs(a) <= abs(b):
            # power-law slopes blow up toward the origin: grade nodes toward it
            delta = a + (b - a) * t ** _GRADING
        else:
            delta = b - (b - a) * t[::-1] ** _GRADING
        # evaluate one-sided so the kink convention at a panel end never leaks in
        inner = delta.copy()
        shrink = 1e-12 * max(1.0, abs(a), abs(b))
        inner[0] = min(a + shrink, b)
        inner[-1] = max(b - shrink, a)
        _, grad = binary_loss_batch(loss, inner, np.ones(n, dtype=int))
        total += _trapezoid(grad, delta)
    return abs(total) / (2.0 * M)


def lipschitz_uniform_closed_form(loss: LossSpec, M: float) -> float:
    """Same quantity via the fundamental theorem of calculus:
    ``(l(sigma(-M), +1) - l(sigma(M), +1)) / (2M)``."""
    s = sigma(np.array([-M, M]), loss.transform)
    if loss.base is Base.LOGISTIC:
        vals = np.logaddexp(0.0, -s)
    elif loss.base is Base.HINGE:
        vals = np.maximum(0.0, 1.0 - s)
    else:
        raise ValueError("closed form only for binary margin losses")
    return float(abs(vals[0] - vals[1]) / (2.0 * M))


def _uniform_ball(rng: np.random.Generator, d: int, M: float) -> np.ndarray:
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    return u * M * rng.random() ** (1.0 / d)


def _project(w: np.ndarray, M: float) -> np.ndarray:
    n = np.linalg.norm(w)
    return w if n <= M else w * (M / n)


def sample_pair(seed: int, index: int, d: int, epsilon: float, M: float):
    """Pair ``(w1, w2)`` in the M-ball with ``||w1 - w2|| <= epsilon``."""
    rng = np.random.default_rng([seed, index])
    w1 = _uniform_ball(rng, d, M)
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    w2 = _project(w1 + epsilon * rng.uniform(0.0, 1.0) * u, M)
    return w1, w2


def lipschitz_small_mc(risk, epsilon: float, M: float, n_pairs: int, seed: int, d: int) -> float:
    """Max of ``|R(w1) - R(w2)| / ||w1 - w2||`` over sampled close pairs.

    A lower estimate of the supremum defining ``L_R(epsilon)``. Pair ``i`` is
    drawn from its own stream ``(seed, i)``, so a larger ``n_pairs`` always
    extends the same sample.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    best = 0.0
    for i in range(n_pairs):
        w1, w2 = sample_pair(seed, i, d, epsilon, M)
        gap = np.linalg.norm(w1 - w2)
        if gap == 0.0:
            continue
        best = max(best, abs(risk(w1) - risk(w2)) / gap)
    return float(best)


@dataclass(frozen=True)
class TwoGaussians:
    """Labels +-1 equiprobable, x ~ N(y * (separation/2) e1, std^2 I),
    then radially clipped into the unit ball so ``||x|| <= 1`` holds."""

    d: int = 2
    separation: float = 1.0
    std: float = 0.3

    def __post_init__(self):
        if self.d < 1 or self.separation < 0 or self.std <= 0:
            raise ValueError("invalid two-Gaussian distribution")

    def sample(self, rng: np.random.Generator, n: int):
        y = np.where(rng.random(n) < 0.5, 1, -1)
        X = self.std * rng.standard_normal((n, self.d))
        X[:, 0] += y * (self.separation / 2.0)
        norms = np.linalg.norm(X, axis=1)
        X /= np.maximum(norms, 1.0)[:, None]
        return X, y


class MonteCarloRisk:
    """Expected risk ``R(w)`` estimated on one fixed large sample."""

    def __init__(self, loss: LossSpec, dist: TwoGaussians, n_samples: int = 10**6, seed: int = 0):
        self.loss = loss
        self.X, self.y = dist.sample(np.random.default_rng(seed), n_samples)

    def values(self, w) -> np.ndarray:
        v, _ = binary_loss_batch(self.loss, self.X @ np.asarray(w, dtype=float), self.y)
        return v

    def __call__(self, w) -> float:
        return float(np.mean(self.values(w)))


@dataclass
class DeviationReport:
    N: int
    epsilon: float
    rho: float
    trials: int
    L_l: float
    frequency: float
    hoeffding_bound: float
    slack: float
    reference_gap: float
    reference_stderr: float
    reference_samples: int
    max_abs_increment: float

    @property
    def passed(self) -> bool:
        return self.frequency <= self.hoeffding_bound + self.slack

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def _reference_gap(loss, dist, w1, w2, n_ref, seed, chunk=10**6):
    # streamed so 1e7 samples never sit in memory at once
    rng = np.random.default_rng([seed, 2**31])
    total = total_sq = 0.0
    done = 0
    while done < n_ref:
        n = min(chunk, n_ref - done)
        X, y = dist.sample(rng, n)
        z = binary_loss_batch(loss, X @ w1, y)[0] - binary_loss_batch(loss, X @ w2, y)[0]
        total += float(z.sum())
        total_sq += float(np.dot(z, z))
        done += n
    mean = total / n_ref
    var = max(total_sq / n_ref - mean * mean, 0.0)
    return mean, math.sqrt(var / n_ref)


def deviation_mc_check(loss: LossSpec, dist: TwoGaussians, w1, w2, N: int, rho: float,
                    trials: int = 2000, seed: int = 0, epsilon: float | None = None,
                    L_l: float | None = None, n_reference: int = 10**7) -> DeviationReport:
    """Empirical frequency of a large risk-difference deviation vs Hoeffding.

    For each trial a fresh sample of size ``N`` is drawn and the event
    ``|(R(w1) - R(w2)) - (R_hat(w1) - R_hat(w2))| >= rho`` is counted. The
    bound is ``2 exp(-N rho^2 / (2 L_l^2 eps^2))`` plus a binomial slack
    ``4 sqrt(0.25 / trials)``.
    """
    if trials < 1000:
        raise ValueError("need at least 1000 trials")
    if not loss.binary:
        raise ValueError("deviation check is implemented for binary margin losses")
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    if w1.shape != (dist.d,) or w2.shape != (dist.d,):
        raise ValueError(f"weights must have dimension {dist.d}")
    gap = float(np.linalg.norm(w1 - w2))
    eps = gap if epsilon is None else float(epsilon)
    if gap > eps * (1 + 1e-12):
        raise ValueError(f"||w1 - w2|| = {gap} exceeds declared epsilon {eps}")
    L_l = loss_lipschitz(loss) if L_l is None else float(L_l)

    if gap == 0.0:
        ref, ref_se = 0.0, 0.0
    else:
        ref, ref_se = _reference_gap(loss, dist, w1, w2, n_reference, seed)
    hits = 0
    max_inc = 0.0
    for t in range(trials):
        X, y = dist.sample(np.random.default_rng([seed, t]), N)
        z = binary_loss_batch(loss, X @ w1, y)[0] - binary_loss_batch(loss, X @ w2, y)[0]
        max_inc = max(max_inc, float(np.max(np.abs(z))))
        if abs(ref - float(np.mean(z))) >= rho:
            hits += 1
    if eps == 0.0:
        bound = 0.0
    else:
        bound = 2.0 * math.exp(-N * rho * rho / (2.0 * L_l * L_l * eps * eps))
    return DeviationReport(N, eps, rho, trials, L_l, hits / trials, bound,
                        4.0 * math.sqrt(0.25 / trials), ref, ref_se, n_reference, max_inc)


def compare_bounds(N: int, d: int, M: float, epsilon: float, L_l: float, C_l: float,
                   L_R: float) -> dict:
    """Both confidences for one parameter set with a constant ``L_R``."""
    q = BoundQuery(N, d, M, epsilon, L_l, C_l, constant(L_R), "constant")
    t2 = risk_lipschitz_confidence(q)
    t3 = loss_lipschitz_confidence(q)
    return {"query": q.echo(), "risk_lipschitz": t2.to_dict(), "loss_lipschitz": t3.to_dict(),
            "risk_lipschitz_better": t2.confidence > t3.confidence}


lemma2_mc_check = deviation_mc_check
