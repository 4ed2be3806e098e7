"""Estimation and verification of the convergence guarantees.

Given replicated trajectories this module estimates d_n, the mean squared
distance to the optimum at step n, and compares it against the one-step
envelope

    b_0 = d_0,    b_{n+1} = (1 - rate_n * mu) * b_n + rate_n^2 * B,

where mu and B come from a hypothesis certificate.  For a constant rate rho
with rho * mu < 1 the envelope has the fixed point rho * B / mu, which is the
asymptotic neighborhood the constant-rate guarantee promises; for decaying
rates whose series diverges the envelope drops to zero, which the product
lemma below quantifies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import Trajectory
from .errors import DomainError, UsageError
from .objective import HypothesisCertificate, StochasticProblem, row_dot, sq_norm
from .schedule import ConstantSchedule, Schedule


@dataclass(frozen=True, eq=False)
class DnSeries:
    """Monte Carlo estimate of d_n for n = 0..steps.

    ``stderr`` is the sample standard deviation over replications divided by
    sqrt(replications); ``in_region_fraction`` is the share of replications
    whose iterate was still inside the certified ball at each step.
    """

    replications: int
    mean: np.ndarray
    stderr: np.ndarray
    in_region_fraction: np.ndarray

    @property
    def steps(self) -> int:
        return self.mean.shape[0] - 1


@dataclass(frozen=True, eq=False)
class BoundSequence:
    """Envelope values b_0..b_steps together with the constants that built them."""

    values: np.ndarray
    d0: float
    strong_convexity: float
    grad_sq_bound: float


@dataclass(frozen=True)
class Verdict:
    """Outcome of one check.

    ``worst_margin`` is the most negative slack observed (positive when the
    check passes with room to spare); ``first_violation_index`` is the step
    of the first violation and is None exactly when the check passes.
    """

    passed: bool
    first_violation_index: int | None
    worst_margin: float
    context: str


@dataclass(frozen=True)
class ProductDecay:
    """Contraction product over a step range and its analytic majorant."""

    product: float
    majorant: float
    log_product: float
    log_majorant: float


def _column_stats(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and standard error, independent of row order.

    Columns are sorted before aggregation so any permutation of the rows
    yields bit-identical results; constant columns get an exact mean and a
    standard error of exactly zero.
    """
    rows = matrix.shape[0]
    ordered = np.sort(matrix, axis=0)
    mean = ordered.mean(axis=0)
    constant = ordered[0] == ordered[-1]
    mean = np.where(constant, ordered[0], mean)
    deviations = ordered - mean
    variance = np.einsum("ij,ij->j", deviations, deviations) / (rows - 1)
    stderr = np.sqrt(variance / rows)
    stderr = np.where(constant, 0.0, stderr)
    return mean, stderr


def estimate_dn(trajectories: list[Trajectory]) -> DnSeries:
    """Aggregate replications into a d_n estimate with standard errors.

    Needs at least two replications of a common horizon.  Aggregation is
    independent of the order of the list.
    """
    count = len(trajectories)
    if count < 2:
        raise UsageError("estimating d_n needs at least two replications")
    steps = trajectories[0].steps
    if any(t.steps != steps for t in trajectories):
        raise UsageError("all replications must share the same horizon")
    sq = np.stack([t.sq_dist for t in trajectories])
    mean, stderr = _column_stats(sq)
    flags = np.stack([t.in_region for t in trajectories])
    fraction = flags.sum(axis=0) / count
    mean.flags.writeable = False
    stderr.flags.writeable = False
    fraction.flags.writeable = False
    return DnSeries(replications=count, mean=mean, stderr=stderr, in_region_fraction=fraction)


def bound_sequence(
    d0: float,
    schedule: Schedule,
    cert: HypothesisCertificate,
    steps: int,
) -> BoundSequence:
    """Evaluate the one-step envelope for ``steps`` updates.

    Each update is computed in deviation form around the per-step fixed point
    rate * B / mu, so a sequence started exactly at the constant-rate fixed
    point stays there exactly and the distance to it contracts by precisely
    (1 - rate * mu) per step.
    """
    d0 = float(d0)
    if not math.isfinite(d0) or d0 < 0.0:
        raise UsageError("d0 must be a finite real >= 0")
    if isinstance(steps, bool) or not isinstance(steps, (int, np.integer)) or steps < 1:
        raise UsageError("steps must be an integer >= 1")
    steps = int(steps)
    mu = cert.strong_convexity
    grad_bound = cert.grad_sq_bound
    rates = schedule.rates(0, steps)
    values = np.empty(steps + 1)
    values[0] = d0
    for n in range(steps):
        rate = rates[n]
        pivot = rate * grad_bound / mu
        values[n + 1] = (1.0 - rate * mu) * (values[n] - pivot) + pivot
    values.flags.writeable = False
    return BoundSequence(values=values, d0=d0, strong_convexity=mu, grad_sq_bound=grad_bound)


def check_recurrence(dn: DnSeries, bounds: BoundSequence, z: float = 3.0) -> Verdict:
    """Check that the estimated d_n never exceeds the envelope significantly.

    A step violates when mean_n > b_n + z * stderr_n.  Steps where any
    replication left the certified region are excluded from the comparison
    and reported in the context, because the certificate does not cover them.
    """
    z = float(z)
    if not math.isfinite(z) or z <= 0.0:
        raise UsageError("z must be a finite positive real")
    if bounds.values.shape != dn.mean.shape:
        raise UsageError("bound sequence and d_n series cover different horizons")
    checked = dn.in_region_fraction == 1.0
    slack = bounds.values + z * dn.stderr - dn.mean
    excluded = int(np.count_nonzero(~checked))
    if not checked.any():
        return Verdict(
            passed=True,
            first_violation_index=None,
            worst_margin=float("nan"),
            context=f"no step had all replications in region ({excluded} steps excluded)",
        )
    violations = checked & (slack < 0.0)
    n_violations = int(np.count_nonzero(violations))
    worst = float(np.min(slack[checked]))
    first = int(np.flatnonzero(violations)[0]) if n_violations else None
    context = (
        f"checked {int(np.count_nonzero(checked))}/{slack.shape[0]} steps at z={z:g}, "
        f"{excluded} excluded by region exits, {n_violations} violations"
    )
    return Verdict(
        passed=n_violations == 0,
        first_violation_index=first,
        worst_margin=worst,
        context=context,
    )


def check_neighborhood(
    dn: DnSeries,
    cert: HypothesisCertificate,
    schedule: Schedule,
    window: int,
    tol_rel: float,
) -> Verdict:
    """Check the constant-rate neighborhood claim on the final window.

    The claim bounds the limit superior of d_n by theta = rho * B / mu, so on
    the last ``window`` steps the estimate must satisfy
    mean_n <= theta * (1 + tol_rel) + 3 * stderr_n.
    """
    if not isinstance(schedule, ConstantSchedule):
        raise UsageError("the neighborhood check applies to constant schedules only")
    rho = schedule.rho
    mu = cert.strong_convexity
    if rho * mu >= 1.0:
        raise UsageError("the neighborhood claim needs rho * mu < 1")
    if isinstance(window, bool) or not isinstance(window, (int, np.integer)) or window < 1:
        raise UsageError("window must be an integer >= 1")
    window = int(window)
    horizon = dn.steps
    if window > horizon + 1:
        raise UsageError(f"window {window} exceeds the horizon of {horizon} steps")
    tol_rel = float(tol_rel)
    if not math.isfinite(tol_rel) or tol_rel < 0.0:
        raise UsageError("tol_rel must be a finite real >= 0")
    theta = rho * cert.grad_sq_bound / mu
    threshold = theta * (1.0 + tol_rel)
    tail = slice(horizon + 1 - window, horizon + 1)
    slack = threshold + 3.0 * dn.stderr[tail] - dn.mean[tail]
    bad = slack < 0.0
    n_bad = int(np.count_nonzero(bad))
    first = int(horizon + 1 - window + np.flatnonzero(bad)[0]) if n_bad else None
    context = (
        f"theta={theta:.6g}, threshold={threshold:.6g}, window={window}, "
        f"{n_bad} violations"
    )
    return Verdict(
        passed=n_bad == 0,
        first_violation_index=first,
        worst_margin=float(np.min(slack)),
        context=context,
    )


def check_convergence(dn: DnSeries, checkpoints) -> Verdict:
    """Check d_n estimates against (step, threshold) checkpoints.

    Checkpoints must be sorted by step, lie inside the horizon, and carry
    positive thresholds; each one passes when
    mean_step <= threshold + 3 * stderr_step.
    """
    points = list(checkpoints)
    if not points:
        raise UsageError("at least one checkpoint is required")
    horizon = dn.steps
    previous = -1
    cleaned = []
    for item in points:
        try:
            n, threshold = item
        except (TypeError, ValueError):
            raise UsageError("checkpoints must be (step, threshold) pairs") from None
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 0:
            raise UsageError("checkpoint steps must be integers >= 0")
        n = int(n)
        if n > horizon:
            raise UsageError(f"checkpoint step {n} is beyond the horizon of {horizon} steps")
        if n <= previous:
            raise UsageError("checkpoints must be strictly increasing in step")
        previous = n
        threshold = float(threshold)
        if not math.isfinite(threshold) or threshold <= 0.0:
            raise UsageError("checkpoint thresholds must be finite positive reals")
        cleaned.append((n, threshold))
    worst = math.inf
    first = None
    failures = 0
    for n, threshold in cleaned:
        slack = threshold + 3.0 * float(dn.stderr[n]) - float(dn.mean[n])
        worst = min(worst, slack)
        if slack < 0.0:
            failures += 1
            if first is None:
                first = n
    context = f"{len(cleaned)} checkpoints, {failures} violations"
    return Verdict(
        passed=failures == 0,
        first_violation_index=first,
        worst_margin=worst,
        context=context,
    )


def product_decay(schedule: Schedule, mu: float, n: int, k: int) -> ProductDecay:
    """Product of (1 - rate_l * mu) for l = n..n+k, against its majorant.

    The product is evaluated in the log domain, exp of the sum of
    log1p(-rate_l * mu), and paired with the analytic majorant
    exp(-sum of rate_l * mu), which dominates it because log(1 - t) <= -t.
    Any factor with rate_l * mu >= 1 leaves the domain of the lemma.
    """
    mu = float(mu)
    if not math.isfinite(mu) or mu <= 0.0:
        raise UsageError("mu must be a finite positive real")
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 0:
        raise UsageError("n must be an integer >= 0")
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 0:
        raise UsageError("k must be an integer >= 0")
    n = int(n)
    k = int(k)
    terms = schedule.rates(n, k + 1) * mu
    if np.any(terms >= 1.0):
        bad = n + int(np.flatnonzero(terms >= 1.0)[0])
        raise DomainError(
            f"rate({bad}) * mu >= 1; every factor must stay positive"
        )
    log_product = float(np.sum(np.log1p(-terms)))
    log_majorant = float(-np.sum(terms))
    return ProductDecay(
        product=math.exp(log_product),
        majorant=math.exp(log_majorant),
        log_product=log_product,
        log_majorant=log_majorant,
    )


def _mean_and_stderr(values: np.ndarray) -> tuple[float, float]:
    ordered = np.sort(values)
    if ordered[0] == ordered[-1]:
        return float(ordered[0]), 0.0
    mean = float(ordered.mean())
    deviations = ordered - mean
    variance = float(deviations @ deviations) / (ordered.shape[0] - 1)
    return mean, math.sqrt(variance / ordered.shape[0])


def check_descent_inequality(
    problem: StochasticProblem,
    cert: HypothesisCertificate,
    x,
    samples: int,
    rng,
) -> Verdict:
    """Check the expected descent alignment at one in-region point.

    Estimates E<x - x*, pointwise_gradient(noise, x)> by Monte Carlo and
    requires it to reach (mu / 2) * ||x - x*||^2 minus three standard errors,
    which is what strong convexity promises for the mean gradient.  The
    estimate must also agree with the closed form
    <x - x*, mean_gradient(x)> within five standard errors.
    """
    if isinstance(samples, bool) or not isinstance(samples, (int, np.integer)) or samples < 100:
        raise UsageError("the descent check needs at least 100 samples")
    samples = int(samples)
    x = np.asarray(x, dtype=float)
    gap = x - cert.region_center
    gap_sq = float(sq_norm(gap))
    if gap_sq > cert.region_radius * cert.region_radius:
        raise UsageError("x lies outside the certified region")
    noise = problem.noise_block(rng, samples)
    grads = problem.pointwise_gradient(noise, x)
    values = np.asarray(row_dot(gap, grads))
    estimate, stderr = _mean_and_stderr(values)
    required = 0.5 * cert.strong_convexity * gap_sq
    closed_form = float(row_dot(gap, problem.mean_gradient(x)))
    descent_margin = estimate - (required - 3.0 * stderr)
    agreement_margin = 5.0 * stderr - abs(estimate - closed_form)
    passed = descent_margin >= 0.0 and agreement_margin >= 0.0
    context = (
        f"estimate={estimate:.6g}, required={required:.6g}, stderr={stderr:.3g}, "
        f"closed_form={closed_form:.6g}, samples={samples}"
    )
    return Verdict(
        passed=passed,
        first_violation_index=None if passed else 0,
        worst_margin=min(descent_margin, agreement_margin),
        context=context,
    )
