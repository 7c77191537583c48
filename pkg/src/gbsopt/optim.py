"""Cost functions and training drivers for the variational loop.

Three interchangeable objectives over the trainable matrix:

* sampled CVaR — draw K click patterns, score them through the QUBO and
  average the ceil(alpha K) lowest energies;
* exact CVaR — the alpha-tail expectation of the enumerated energy
  distribution, with the boundary atom included fractionally;
* analytic expectation — <Q> written in closed form from one- and
  two-mode vacuum marginals (the alpha = 1 cost), polynomial in N.

Training touches only a masked subset of the parameter matrix entries,
chosen from the smallest QUBO coefficients; everything else stays frozen
at its random initialization.
"""

import math
import time
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from .errors import CapacityError, InvalidStateError, TrainingFailedError
from .gaussian import ThetaMatrix, state_from_theta, upper_triangle_indices
from .problems import brute_force_solve
from .torontonian import (
    DEFAULT_ENUMERATION_CAP,
    full_distribution,
    pattern_probability,
    sample,
)

__all__ = [
    "TrainConfig",
    "ParameterMask",
    "TrainRecord",
    "build_mask",
    "cvar_from_samples",
    "cvar_exact",
    "expected_energy_analytic",
    "train",
    "DEFAULT_THRESHOLDS",
]

OPTIMIZERS = ("cobyla", "adam")
MASK_RULES = ("algebraic", "absolute")
DEFAULT_THRESHOLDS = (0.1, 0.01)

#: central finite-difference step for gradients of the analytic cost
FD_STEP = 1e-5


@dataclass(frozen=True)
class TrainConfig:
    """Resolved knobs for one training run.

    ``shots_k = 0`` selects exact-distribution mode; ``mask_size`` and
    ``max_evals`` default to 3N and 50N once the problem size is known.
    ``optimizer`` is "cobyla" (derivative-free linear-approximation trust
    region) or "adam" (first-order on the analytic alpha = 1 cost).
    """

    seed: int
    alpha: float = 1.0
    shots_k: int = 0
    mask_size: int | None = None
    max_evals: int | None = None
    optimizer: str = "cobyla"
    adam_lr: float = 0.05
    adam_steps: int = 500
    init_scale: float = 0.1
    mask_rule: str = "algebraic"
    max_seconds: float | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.shots_k < 0:
            raise ValueError("shots_k must be >= 0")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.mask_rule not in MASK_RULES:
            raise ValueError(f"mask_rule must be one of {MASK_RULES}")
        if self.adam_lr <= 0 or self.init_scale <= 0:
            raise ValueError("adam_lr and init_scale must be positive")
        if self.adam_steps < 1:
            raise ValueError("adam_steps must be >= 1")
        if self.max_evals is not None and self.max_evals < 1:
            raise ValueError("max_evals must be >= 1")

    def resolved(self, n):
        """Fill size-dependent defaults for an N-variable problem."""
        n_upper = n * (n + 1) // 2
        mask_size = self.mask_size if self.mask_size is not None else min(3 * n, n_upper)
        if mask_size > n_upper:
            raise ValueError(f"mask_size {mask_size} exceeds {n_upper} parameters")
        max_evals = self.max_evals if self.max_evals is not None else 50 * n
        return replace(self, mask_size=mask_size, max_evals=max_evals)


@dataclass(frozen=True)
class ParameterMask:
    """Trainable (i, j) positions, i <= j, into the parameter matrix."""

    indices: tuple

    def __post_init__(self):
        seen = set()
        for i, j in self.indices:
            if i > j:
                raise ValueError("mask indices must satisfy i <= j")
            if (i, j) in seen:
                raise ValueError("duplicate mask index")
            seen.add((i, j))
        object.__setattr__(self, "indices", tuple((int(i), int(j)) for i, j in self.indices))

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True)
class TrainRecord:
    """Outcome of one training run.

    ``cost_trace`` holds (evaluation index, cost) pairs in evaluation
    order; ``best_theta`` attains the minimum recorded cost.  Fidelity is
    the exact probability mass the trained state puts on the set of
    ground-truth minimizers, and ``success`` maps each threshold t to
    fidelity > t.
    """

    best_theta: ThetaMatrix
    cost_trace: tuple
    n_evals: int
    final_fidelity: float
    success: dict
    timed_out: bool = False


def build_mask(qubo, mask_size, rule="algebraic"):
    """Positions of the ``mask_size`` smallest QUBO coefficients.

    Candidates are the upper-triangle (i, j), i <= j; "algebraic" ranks by
    signed value (most favorable couplings first), "absolute" by |q_ij|.
    Ties break lexicographically, so the mask is deterministic.
    """
    if rule not in MASK_RULES:
        raise ValueError(f"rule must be one of {MASK_RULES}")
    pairs = upper_triangle_indices(qubo.n)
    if mask_size > len(pairs):
        raise ValueError(f"mask_size {mask_size} exceeds {len(pairs)} candidates")
    key = (lambda ij: (qubo.q[ij], ij)) if rule == "algebraic" else (
        lambda ij: (abs(qubo.q[ij]), ij)
    )
    ranked = sorted(pairs, key=key)
    return ParameterMask(indices=tuple(ranked[:mask_size]))


def cvar_from_samples(energies, alpha):
    """Mean of the ceil(alpha K) lowest values; alpha = 1 is the plain mean."""
    energies = np.asarray(energies, dtype=float)
    if energies.ndim != 1 or energies.size == 0:
        raise ValueError("need a nonempty 1-D energy list")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    m = math.ceil(alpha * energies.size)
    if m >= energies.size:
        return float(energies.mean())
    return float(np.partition(energies, m - 1)[:m].mean())


def cvar_exact(qubo, dist, alpha):
    """Exact alpha-tail expectation of the discrete energy distribution.

    Patterns are sorted by energy; probability mass is accumulated up to
    alpha with the boundary atom included fractionally, so the averaged
    mass is exactly alpha.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    energies = qubo.pattern_energies()
    if energies.shape != dist.probs.shape:
        raise ValueError("QUBO size does not match the distribution")
    if alpha == 1.0:
        return float(np.dot(dist.probs, energies))
    order = np.argsort(energies, kind="stable")
    e = energies[order]
    p = dist.probs[order]
    cum = np.cumsum(p)
    boundary = int(np.searchsorted(cum, alpha, side="left"))
    boundary = min(boundary, e.size - 1)
    below = cum[boundary - 1] if boundary > 0 else 0.0
    acc = float(np.dot(p[:boundary], e[:boundary]))
    acc += (alpha - below) * e[boundary]
    return acc / alpha


def _vacuum_marginals_from_sigmas(sigmas):
    """Single- and pair-mode vacuum probabilities for a stack of covariances.

    Returns (pv1, pv2) with pv1[..., i] = P(no photons on mode i) and
    pv2[..., k] over pairs in upper-triangle order (i < j).
    """
    n = sigmas.shape[-1] // 2
    idx = np.arange(n)
    # 2 x 2 blocks (i, i+n)
    rows = np.stack([idx, idx + n], axis=-1)
    sub1 = sigmas[..., rows[:, :, None], rows[:, None, :]]
    det1 = np.linalg.det(sub1).real
    pairs = np.array([(i, j) for i in range(n) for j in range(i + 1, n)], dtype=int)
    if len(pairs):
        gather = np.concatenate([pairs, pairs + n], axis=1)  # (M, 4): i, j, i+n, j+n
        sub2 = sigmas[..., gather[:, :, None], gather[:, None, :]]
        det2 = np.linalg.det(sub2).real
    else:
        det2 = np.ones(sigmas.shape[:-2] + (0,))
    if det1.min() <= 0 or (len(pairs) and det2.min() <= 0):
        raise InvalidStateError("vacuum-marginal determinant not positive")
    return 1.0 / np.sqrt(det1), 1.0 / np.sqrt(det2)


def _sigma_batch(thetas):
    """Husimi covariances for a (B, N, N) stack of symmetric matrices."""
    lam, vec = np.linalg.eigh(thetas)
    r = np.abs(lam)
    phases = np.where(lam >= 0, 1.0 + 0.0j, 1.0j)
    u = vec.astype(complex) * phases[:, np.newaxis, :]
    ucu = (u * np.cosh(2.0 * r)[:, np.newaxis, :]) @ np.conj(np.swapaxes(u, 1, 2))
    usu = (u * np.sinh(2.0 * r)[:, np.newaxis, :]) @ np.swapaxes(u, 1, 2)
    b, n, _ = thetas.shape
    sigmas = np.empty((b, 2 * n, 2 * n), dtype=complex)
    sigmas[:, :n, :n] = ucu
    sigmas[:, :n, n:] = usu
    sigmas[:, n:, :n] = usu.conj()
    sigmas[:, n:, n:] = ucu.conj()
    sigmas *= 0.5
    sigmas[:, np.arange(2 * n), np.arange(2 * n)] += 0.5
    return sigmas


def _analytic_energies(thetas, qubo):
    """Batched <Q> for a (B, N, N) stack of parameter matrices.

    Uses inclusion-exclusion on vacuum marginals:
      <P1_i>      = 1 - pv(i)
      <P1_i P1_j> = 1 - pv(i) - pv(j) + pv(ij)
    so the whole expectation costs O(N^2) small determinants per matrix.
    """
    n = qubo.n
    pv1, pv2 = _vacuum_marginals_from_sigmas(_sigma_batch(thetas))
    diag = np.diag(qubo.q)
    out = pv1 @ (-diag) + diag.sum()
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if pairs:
        w = np.array([2.0 * qubo.q[i, j] for i, j in pairs])
        ii = np.array([p[0] for p in pairs])
        jj = np.array([p[1] for p in pairs])
        joint = 1.0 - pv1[..., ii] - pv1[..., jj] + pv2
        out = out + joint @ w
    return out + qubo.offset


def expected_energy_analytic(qubo, state):
    """Closed-form <Q> in a Gaussian state (the alpha = 1 cost).

    Agrees with the enumeration expectation to 1e-8 but needs only one-
    and two-mode vacuum marginals, i.e. determinants of at most 4 x 4
    submatrices of the covariance.
    """
    if state.n_modes != qubo.n:
        raise ValueError("state and QUBO dimensions differ")
    pv1, pv2 = _vacuum_marginals_from_sigmas(state.sigma[np.newaxis])
    pv1, pv2 = pv1[0], pv2[0]
    n = qubo.n
    total = float(qubo.offset)
    for i in range(n):
        total += qubo.q[i, i] * (1.0 - pv1[i])
    k = 0
    for i in range(n):
        for j in range(i + 1, n):
            total += 2.0 * qubo.q[i, j] * (1.0 - pv1[i] - pv1[j] + pv2[k])
            k += 1
    return total


class _EvalBudget(Exception):
    """Internal signal: evaluation or wall-clock budget exhausted."""


class _Objective:
    """Masked-parameter objective with tracing, budget and best tracking."""

    def __init__(self, qubo, cfg, theta_init_upper, mask):
        self.qubo = qubo
        self.cfg = cfg
        self.n = qubo.n
        self.upper = np.array(theta_init_upper)
        self.pair_pos = {p: k for k, p in enumerate(upper_triangle_indices(self.n))}
        self.mask_slots = np.array([self.pair_pos[p] for p in mask.indices], dtype=int)
        self._triu = np.triu_indices(self.n)  # row-major, matches upper order
        self.trace = []
        self.n_evals = 0
        self.best_cost = np.inf
        self.best_params = np.array([self.upper[k] for k in self.mask_slots])
        self.started = time.monotonic()
        self.timed_out = False

    def theta_for(self, params):
        upper = np.array(self.upper)
        upper[self.mask_slots] = params
        return ThetaMatrix.from_upper(self.n, upper)

    def theta_matrix_for(self, params):
        # plain ndarray fast path for batched evaluation
        upper = np.array(self.upper)
        upper[self.mask_slots] = params
        theta = np.zeros((self.n, self.n))
        theta[self._triu] = upper
        theta[(self._triu[1], self._triu[0])] = upper
        return theta

    def _check_budget(self):
        if self.n_evals == 0:
            return  # every run gets at least one evaluation
        # the evaluation cap governs the derivative-free path; adam stops
        # at adam_steps instead (its probe evaluations are only counted)
        if self.cfg.optimizer != "adam" and self.n_evals >= self.cfg.max_evals:
            raise _EvalBudget
        if self.cfg.max_seconds is not None and (
            time.monotonic() - self.started > self.cfg.max_seconds
        ):
            self.timed_out = True
            raise _EvalBudget

    def _cost(self, params):
        cfg = self.cfg
        theta = self.theta_for(params)
        if cfg.shots_k > 0:
            state = state_from_theta(theta)
            shot_seed = np.random.SeedSequence(
                entropy=cfg.seed, spawn_key=(1, self.n_evals)
            )
            patterns = sample(state, cfg.shots_k, shot_seed)
            return cvar_from_samples(self.qubo.values(patterns), cfg.alpha)
        if cfg.alpha < 1.0:
            state = state_from_theta(theta)
            return cvar_exact(self.qubo, full_distribution(state), cfg.alpha)
        return float(_analytic_energies(theta.entries[np.newaxis], self.qubo)[0])

    def __call__(self, params):
        self._check_budget()
        cost = self._cost(params)
        self.n_evals += 1
        self.trace.append((self.n_evals, float(cost)))
        if not np.isfinite(cost):
            raise TrainingFailedError("non-finite training cost", trace=self.trace)
        if cost < self.best_cost:
            self.best_cost = cost
            self.best_params = np.array(params)
        return cost


def _run_cobyla(objective, x0):
    try:
        minimize(
            objective,
            x0,
            method="COBYLA",
            options={
                "maxiter": objective.cfg.max_evals,
                "rhobeg": 0.5 * objective.cfg.init_scale,
                "tol": 1e-6,
            },
        )
    except _EvalBudget:
        pass


def _run_adam(objective, x0):
    """ADAM on the analytic cost; gradients by central differences.

    The 2m probe evaluations per step go through the batched analytic
    evaluator and are counted against ``n_evals``; the trace records one
    entry per step (the cost at the current iterate).
    """
    cfg = objective.cfg
    params = np.array(x0)
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    dim = params.size
    for step in range(1, cfg.adam_steps + 1):
        try:
            objective(params)
        except _EvalBudget:
            break
        thetas = np.empty((2 * dim, objective.n, objective.n))
        for k in range(dim):
            for s, shift in enumerate((FD_STEP, -FD_STEP)):
                probe = np.array(params)
                probe[k] += shift
                thetas[2 * k + s] = objective.theta_matrix_for(probe)
        costs = _analytic_energies(thetas, objective.qubo)
        objective.n_evals += 2 * dim
        if not np.all(np.isfinite(costs)):
            raise TrainingFailedError("non-finite training cost", trace=objective.trace)
        grad = (costs[0::2] - costs[1::2]) / (2.0 * FD_STEP)
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad**2
        m_hat = m / (1.0 - beta1**step)
        v_hat = v / (1.0 - beta2**step)
        params = params - cfg.adam_lr * m_hat / (np.sqrt(v_hat) + eps)
        if cfg.max_seconds is not None and (
            time.monotonic() - objective.started > cfg.max_seconds
        ):
            objective.timed_out = True
            break
    else:
        # record the cost at the final iterate so best_theta can claim it
        try:
            objective(params)
        except _EvalBudget:
            pass


def state_fidelity(theta, ground_truth):
    """Probability mass the state puts on the ground-truth minimizers."""
    state = state_from_theta(theta)
    return float(
        sum(pattern_probability(state, row) for row in ground_truth.minimizers)
    )


def train(qubo, cfg, thresholds=DEFAULT_THRESHOLDS):
    """One training run: masked initialization, optimization, fidelity.

    The parameter matrix starts with all upper-triangle entries i.i.d.
    uniform on [-init_scale, init_scale]; only masked entries move.
    Exact-distribution mode requires N within the enumeration cap.  The
    returned record is a pure function of (qubo, cfg, thresholds).
    """
    cfg = cfg.resolved(qubo.n)
    if cfg.optimizer == "adam" and (cfg.alpha != 1.0 or cfg.shots_k != 0):
        raise ValueError("the adam path trains the analytic alpha=1 cost in exact mode")
    if cfg.shots_k == 0 and cfg.alpha < 1.0 and qubo.n > DEFAULT_ENUMERATION_CAP:
        raise CapacityError("exact-distribution training exceeds the enumeration cap")

    ground_truth = brute_force_solve(qubo)
    mask = build_mask(qubo, cfg.mask_size, cfg.mask_rule)
    init_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0,))
    )
    n_upper = qubo.n * (qubo.n + 1) // 2
    theta_init_upper = init_rng.uniform(-cfg.init_scale, cfg.init_scale, n_upper)

    objective = _Objective(qubo, cfg, theta_init_upper, mask)
    x0 = np.array(objective.best_params)
    if cfg.optimizer == "adam":
        _run_adam(objective, x0)
    else:
        _run_cobyla(objective, x0)
    if not objective.trace:
        raise TrainingFailedError("no successful cost evaluation", trace=())

    best_theta = objective.theta_for(objective.best_params)
    fidelity = state_fidelity(best_theta, ground_truth)
    return TrainRecord(
        best_theta=best_theta,
        cost_trace=tuple(objective.trace),
        n_evals=objective.n_evals,
        final_fidelity=fidelity,
        success={float(t): fidelity > t for t in thresholds},
        timed_out=objective.timed_out,
    )
