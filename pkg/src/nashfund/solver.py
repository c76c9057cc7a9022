"""Nash product solver via the proportional response dynamic.

The rule picks the distribution of the pool maximizing
F(delta) = sum_i C_i * log u_i(delta). Instead of a convex-programming
backend, we iterate the proportional response map

    (f(delta))(x) = delta(x) * s(x),    s(x) = sum_i C_i * u_i(x) / u_i(delta),

whose fixed points are exactly the maximizers (s(x) = 1 on the support,
s(x) <= 1 elsewhere), and certify progress with the gap bound

    F(delta*) - F(delta) <= max_x log s(x),

which is computable from the same s(x) used by the step. Iteration stops once
the bound drops below the configured epsilon, so the returned distribution
carries a certificate, not just a hope of convergence.

Two practical additions around the plain dynamic:

* Support rounding. When the optimum sits on a face of the simplex (some
  delta*(x) = 0 with the stationarity value s(x) exactly 1), the dynamic's
  tail decays like 1/k and the dying coordinate pollutes utility readings
  with sqrt(gap)-sized residue. Periodically, and at termination, the solver
  zeroes coordinates below a small threshold and keeps the rounded point iff
  its own gap certificate is at least as good (and, mid-run, already at the
  target). A rejected rounding changes nothing; an accepted one is an exact
  jump onto the optimal face, after which convergence is geometric again.

* Newton finisher. A cousin of the same problem: an optimum with a genuinely
  tiny positive coordinate d makes the multiplicative update contract at rate
  1 - O(d). Periodically the solver solves the stationarity system
  s(x) = 1 on the current support by a small active-set Newton iteration and
  keeps the polished point under the same rule: only if its full gap
  certificate already meets the target. Wrong support guesses fail the
  certificate and change nothing.

  Both jumps are restarts, not steps of the dynamic, so they are excluded
  from the per-step margin accounting below and disabled while a trace is
  being recorded.

* Online step-quality margins. Each proportional response step must not
  decrease F (slack 1e-12 * (1 + |F|)) and must gain at least
  ||delta' - delta||_1^2 / (2 |C|) (Pinsker's inequality in nats, slack
  1e-10). The solver tracks the smallest observed slack-inclusive margin so
  property suites can assert both bounds over millions of steps without
  storing traces.

A vectorized multi-profile variant (`solve_profiles_batch`) runs many
contribution profiles over a shared utility matrix at once; the axiom
harness leans on it for incentive grids and restart checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .model import (
    Distribution,
    Instance,
    ProjectMismatch,
)

__all__ = [
    "SolverConfig",
    "SolveResult",
    "KKTReport",
    "TraceRow",
    "SolverError",
    "ZeroUtilityAgent",
    "MaxItersExceeded",
    "proportional_response_step",
    "cover_gap_bound",
    "solve_nash",
    "kkt_check",
    "default_support_threshold",
    "trace_to_csv",
    "BatchResult",
    "solve_profiles_batch",
]

MONOTONE_SLACK = 1e-12
PINSKER_SLACK = 1e-10

# Support rounding: coordinates below ROUND_TAU * pool are candidates for
# zeroing; mid-run attempts happen every ROUND_PERIOD iterations.
ROUND_TAU = 1e-4
ROUND_PERIOD = 1024


class SolverError(RuntimeError):
    pass


class ZeroUtilityAgent(SolverError):
    """The dynamic is undefined: a contributing agent has zero utility here."""


class MaxItersExceeded(SolverError):
    """Iteration budget exhausted before the gap bound reached epsilon.

    Carries the best-so-far result on ``.result``.
    """

    def __init__(self, message: str, result: "SolveResult"):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 1e-9
    max_iters: int = 1_000_000
    record_trace: bool = False

    def __post_init__(self):
        if not (self.epsilon > 0.0):
            raise ValueError("epsilon must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


class TraceRow(NamedTuple):
    iteration: int
    log_nash: float
    gap_bound: float
    step_l1: float


@dataclass(frozen=True)
class KKTReport:
    """First-order optimality report at a distribution.

    ``stationarity`` holds s(x) = sum_i C_i u_i(x) / u_i(delta) per project.
    At an optimum s(x) = 1 wherever delta(x) > 0 and s(x) <= 1 elsewhere;
    ``residuals`` measure the violation: |s - 1| on the support,
    max(0, s - 1) off it.
    """

    lambda_estimate: float
    stationarity: dict[str, float]
    residuals: dict[str, float]
    max_residual: float
    support_threshold: float


@dataclass(frozen=True)
class SolveResult:
    distribution: Distribution
    iterations: int
    gap_bound: float
    kkt: KKTReport
    trace: Optional[list[TraceRow]] = field(default=None, compare=False)
    # Smallest observed slack-inclusive margins of the two per-step bounds
    # (monotone F; Pinsker step gain) over the whole run; nonnegative values
    # mean every step satisfied them. inf when no step was taken.
    min_monotone_margin: float = math.inf
    min_pinsker_margin: float = math.inf


def default_support_threshold(instance_pool: float) -> float:
    """delta(x) above this counts as support for KKT purposes (1e-7 * |C|)."""
    return 1e-7 * instance_pool


# ---------------------------------------------------------------------------
# Array plumbing


def _active_arrays(instance: Instance):
    """Utility matrix and contribution vector restricted to contributing agents."""
    idx = instance.contributing_indices()
    m = instance.m
    U = np.empty((len(idx), m))
    for row, i in enumerate(idx):
        a = instance.agents[i]
        for col, x in enumerate(instance.projects):
            U[row, col] = a.utilities[x]
    C = np.array([instance.agents[i].contribution for i in idx])
    names = [instance.agents[i].name for i in idx]
    return U, C, names


def _delta_vector(instance: Instance, delta: Distribution) -> np.ndarray:
    extra = set(delta.spend.keys()) - set(instance.projects)
    if extra:
        raise ProjectMismatch(f"distribution spends on unknown projects {sorted(extra)}")
    return np.array([delta[x] for x in instance.projects])


def _stationarity(U: np.ndarray, C: np.ndarray, d: np.ndarray, names) -> np.ndarray:
    """s(x) for one distribution; raises if a contributing agent gets nothing."""
    u = U @ d
    bad = np.nonzero(u <= 0.0)[0]
    if bad.size:
        raise ZeroUtilityAgent(
            f"agent {names[bad[0]]!r} has zero utility under this distribution; "
            "the proportional response map is undefined here"
        )
    return (C / u) @ U


# ---------------------------------------------------------------------------
# Public single-distribution operations


def proportional_response_step(instance: Instance, delta: Distribution) -> Distribution:
    """One application of the proportional response map f.

    Each agent redistributes her contribution over projects in proportion to
    the utility delta(x)*u_i(x) she currently derives from each; the returned
    spend is the sum of those individual plans. Projects at zero stay at zero,
    and the total is renormalized to the pool to cancel float drift.
    """
    U, C, names = _active_arrays(instance)
    if C.size == 0:
        return Distribution.zero(instance.projects)
    d = _delta_vector(instance, delta)
    s = _stationarity(U, C, d, names)
    new = d * s
    total = float(C.sum())
    new *= total / new.sum()
    return Distribution(total=total, spend={x: float(v) for x, v in zip(instance.projects, new)})


def cover_gap_bound(instance: Instance, delta: Distribution) -> float:
    """Certified optimality gap: F(delta*) - F(delta) <= max_x log s(x).

    The maximum runs over every project, on or off the support. Never
    negative; tiny negatives from float noise are clamped to 0.
    """
    U, C, names = _active_arrays(instance)
    if C.size == 0:
        return 0.0
    d = _delta_vector(instance, delta)
    s = _stationarity(U, C, d, names)
    return max(0.0, math.log(float(s.max())))


def kkt_check(
    instance: Instance,
    delta: Distribution,
    support_threshold: Optional[float] = None,
) -> KKTReport:
    """Evaluate the first-order conditions at ``delta``.

    Residual per project: |s(x) - 1| where delta(x) > support_threshold,
    max(0, s(x) - 1) elsewhere. ``lambda_estimate`` is the mean of s over the
    support (the duality multiplier; exactly 1 at an optimum).
    """
    U, C, names = _active_arrays(instance)
    if support_threshold is None:
        support_threshold = default_support_threshold(float(C.sum()))
    projects = instance.projects
    if C.size == 0:
        zeros = {x: 0.0 for x in projects}
        return KKTReport(0.0, dict(zeros), dict(zeros), 0.0, support_threshold)
    d = _delta_vector(instance, delta)
    s = _stationarity(U, C, d, names)
    on_support = d > support_threshold
    resid = np.where(on_support, np.abs(s - 1.0), np.maximum(0.0, s - 1.0))
    lam = float(s[on_support].mean()) if on_support.any() else 0.0
    return KKTReport(
        lambda_estimate=lam,
        stationarity={x: float(v) for x, v in zip(projects, s)},
        residuals={x: float(v) for x, v in zip(projects, resid)},
        max_residual=float(resid.max()),
        support_threshold=support_threshold,
    )


def _gap_of(U, C, d) -> float:
    """Gap certificate at d, or +inf if some contributing agent gets nothing."""
    u = U @ d
    if not np.all(u > 0.0):
        return math.inf
    s = (C / u) @ U
    return max(0.0, math.log(float(s.max())))


def _rounded_candidate(d: np.ndarray, total: float) -> Optional[np.ndarray]:
    """Zero the near-dead coordinates and renormalize, or None if d has no
    small-but-positive coordinates (or nothing would remain)."""
    small = (d < ROUND_TAU * total) & (d > 0.0)
    if not small.any() or small.all():
        return None
    d2 = np.where(small, 0.0, d)
    d2 *= total / d2.sum()
    return d2


def _newton_polish(U: np.ndarray, C: np.ndarray, total: float, d0: np.ndarray) -> Optional[np.ndarray]:
    """Solve s(x) = 1 on the support of d0 by Newton, or None.

    The Jacobian of s restricted to the support is -(U_S^T diag(C/u^2) U_S).
    If the converged point has a clearly negative coordinate the support
    guess was too big: drop that coordinate and retry (at most m times).
    The sum constraint needs no handling: sum_x d(x) s(x) = |C| identically,
    so s = 1 on the support forces the right total. The caller must validate
    the result with a full gap certificate — ties make the system singular
    and a wrong support makes it wrong, and both cases return None or a
    rejectable point rather than an error.
    """
    m = d0.size
    contributing = C > 0.0
    if not contributing.any():
        return None
    U = U[contributing]
    C = C[contributing]
    support = d0 > 0.0
    for _ in range(m):
        if not support.any():
            return None
        idx = np.nonzero(support)[0]
        dS = np.maximum(d0[idx], 1e-12 * total)
        US = U[:, idx]
        converged = False
        for _ in range(60):
            u = US @ dS
            if np.any(u <= 0.0):
                break
            w = C / u
            G = w @ US - 1.0
            if np.max(np.abs(G)) <= 1e-13:
                converged = True
                break
            J = -(US.T * (C / u**2)) @ US
            try:
                step = np.linalg.solve(J, -G)
            except np.linalg.LinAlgError:
                break
            dS = dS + step
            if np.abs(dS).max() > 4.0 * total:
                # a dead coordinate in the guess makes the system
                # inconsistent and the iterates explode along it
                break
        if not converged:
            if dS.min() < 0.0 and support.sum() > 1:
                support[idx[np.argmin(dS)]] = False
                continue
            return None
        if dS.min() < -1e-9 * total:
            support[idx[np.argmin(dS)]] = False
            continue
        out = np.zeros(m)
        out[idx] = np.maximum(dS, 0.0)
        ssum = out.sum()
        if ssum <= 0.0:
            return None
        out *= total / ssum
        return out
    return None


def solve_nash(instance: Instance, config: SolverConfig = SolverConfig()) -> SolveResult:
    """Run the proportional response dynamic from the uniform distribution.

    Starts at delta0(x) = |C|/m (full support), iterates until the gap bound
    drops to config.epsilon, and returns the final distribution with its KKT
    report. Zero-contribution agents are dropped first; if nobody contributes
    the empty distribution is returned immediately. Unless a trace is being
    recorded, the certified support-rounding jump described in the module
    docstring may replace the iterate when it lands on the optimal face.

    Raises MaxItersExceeded (carrying the best-so-far result) if the budget
    runs out.
    """
    U, C, names = _active_arrays(instance)
    projects = instance.projects
    m = len(projects)
    if C.size == 0 or C.sum() <= 0.0:
        empty = Distribution.zero(projects)
        return SolveResult(
            distribution=empty,
            iterations=0,
            gap_bound=0.0,
            kkt=kkt_check(instance, empty),
            trace=[] if config.record_trace else None,
        )
    total = float(C.sum())
    d = np.full(m, total / m)
    trace: Optional[list[TraceRow]] = [] if config.record_trace else None
    rounding_allowed = not config.record_trace

    iterations = 0
    gap = math.inf
    min_mono = math.inf
    min_pinsker = math.inf
    prev_F: Optional[float] = None
    prev_l1 = 0.0
    for it in range(config.max_iters + 1):
        u = U @ d
        if not np.all(u > 0.0):
            bad = int(np.nonzero(u <= 0.0)[0][0])
            raise ZeroUtilityAgent(f"agent {names[bad]!r} hit zero utility mid-iteration")
        w = C / u
        s = w @ U
        gap = max(0.0, math.log(float(s.max())))
        F = float(C @ np.log(u))
        if prev_F is not None:
            gain = F - prev_F
            min_mono = min(min_mono, gain + MONOTONE_SLACK * (1.0 + abs(prev_F)))
            min_pinsker = min(min_pinsker, gain - prev_l1**2 / (2.0 * total) + PINSKER_SLACK)
        if trace is not None:
            trace.append(TraceRow(it, F, gap, 0.0))
        if gap <= config.epsilon:
            iterations = it
            break
        if it == config.max_iters:
            iterations = it
            break
        if rounding_allowed and it > 0 and it % ROUND_PERIOD == 0:
            jumped = None
            d2 = _rounded_candidate(d, total)
            if d2 is not None and _gap_of(U, C, d2) <= min(gap, config.epsilon):
                jumped = d2
            if jumped is None:
                d3 = _newton_polish(U, C, total, d)
                if d3 is not None and _gap_of(U, C, d3) <= min(gap, config.epsilon):
                    jumped = d3
            if jumped is not None:
                # certified jump onto the (rounded or polished) optimum; not a
                # step of the dynamic, so it ends the run directly
                d = jumped
                iterations = it
                gap = _gap_of(U, C, jumped)
                break
        new = d * s
        new *= total / new.sum()
        prev_l1 = float(np.abs(new - d).sum())
        prev_F = F
        if trace is not None:
            trace[-1] = trace[-1]._replace(step_l1=prev_l1)
        d = new

    if rounding_allowed:
        d2 = _rounded_candidate(d, total)
        if d2 is not None:
            gap2 = _gap_of(U, C, d2)
            if gap2 <= gap:
                d, gap = d2, gap2

    dist = Distribution(total=total, spend={x: float(v) for x, v in zip(projects, d)})
    result = SolveResult(
        distribution=dist,
        iterations=iterations,
        gap_bound=gap,
        kkt=kkt_check(instance, dist),
        trace=trace,
        min_monotone_margin=min_mono,
        min_pinsker_margin=min_pinsker,
    )
    if gap > config.epsilon:
        raise MaxItersExceeded(
            f"gap bound {gap:.3e} still above epsilon {config.epsilon:.3e} "
            f"after {config.max_iters} iterations",
            result,
        )
    return result


def trace_to_csv(trace: Sequence[TraceRow]) -> str:
    """Render a solver trace as CSV (17 significant digits)."""
    lines = ["iter,log_nash,gap_bound,step_l1"]
    for row in trace:
        lines.append(
            f"{row.iteration},{row.log_nash:.17g},{row.gap_bound:.17g},{row.step_l1:.17g}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Batched solver
#
# Many solves share a utility matrix: incentive grids vary one agent's
# contribution, restart validation varies the start point. Running them as
# rows of one iteration keeps the property suites fast. Rows that reach the
# gap target are frozen and compacted away so one slow row does not drag a
# full-width iteration along.


@dataclass
class BatchResult:
    deltas: np.ndarray        # B x m final iterates
    log_nash: np.ndarray      # B
    gap_bound: np.ndarray     # B
    iterations: np.ndarray    # B
    converged: np.ndarray     # B bool
    min_monotone_margin: float = math.inf
    min_pinsker_margin: float = math.inf


def solve_profiles_batch(
    U: np.ndarray,
    C_rows: np.ndarray,
    epsilon: float = 1e-9,
    max_iters: int = 1_000_000,
    starts: Optional[np.ndarray] = None,
) -> BatchResult:
    """Solve one Nash problem per row of ``C_rows`` over a shared utility matrix.

    U is (n x m) with every row min-positive-normalized; C_rows is (B x n)
    with nonnegative entries (zeros = agent sits this profile out) and at
    least one positive entry per row. ``starts`` optionally overrides the
    uniform start with full-support rows summing to each row's pool.
    Certified support rounding (see module docstring) is always enabled here.
    """
    U = np.asarray(U, dtype=float)
    C_rows = np.atleast_2d(np.asarray(C_rows, dtype=float))
    B, n = C_rows.shape
    m = U.shape[1]
    pools = C_rows.sum(axis=1)
    if np.any(pools <= 0.0):
        raise ValueError("every profile row needs a positive pool")

    if starts is None:
        d = np.repeat((pools / m)[:, None], m, axis=1)
    else:
        d = np.array(starts, dtype=float)
        if d.shape != (B, m):
            raise ValueError(f"starts must be shape {(B, m)}")
        if np.any(d <= 0.0):
            raise ValueError("starts must have full support")
        d *= (pools / d.sum(axis=1))[:, None]

    out_d = np.empty((B, m))
    out_F = np.empty(B)
    out_gap = np.full(B, np.inf)
    out_iter = np.zeros(B, dtype=np.int64)
    out_conv = np.zeros(B, dtype=bool)

    active = np.arange(B)
    C_act = C_rows
    pool_act = pools
    min_mono = math.inf
    min_pinsker = math.inf
    prev_F = None
    prev_l1 = None
    prev_ok = None  # rows whose previous transition was a genuine step

    for it in range(max_iters + 1):
        u = d @ U.T                                        # B' x n
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.divide(C_act, u, out=np.zeros_like(C_act), where=C_act > 0.0)
        if not np.all(np.isfinite(w)):
            raise ZeroUtilityAgent("a contributing agent hit zero utility mid-iteration")
        s = w @ U                                          # B' x m
        gap = np.maximum(0.0, np.log(s.max(axis=1)))
        # u > 0 wherever C > 0 (checked above); other entries contribute 0.
        logu = np.log(u, where=u > 0.0, out=np.zeros_like(u))
        F = (C_act * logu).sum(axis=1)

        if prev_F is not None and prev_ok.any():
            gain = F[prev_ok] - prev_F[prev_ok]
            pf = np.abs(prev_F[prev_ok])
            min_mono = min(min_mono, float((gain + MONOTONE_SLACK * (1.0 + pf)).min()))
            min_pinsker = min(
                min_pinsker,
                float(
                    (gain - prev_l1[prev_ok] ** 2 / (2.0 * pool_act[prev_ok]) + PINSKER_SLACK).min()
                ),
            )

        done = gap <= epsilon
        if done.any() or it == max_iters:
            finish = done if it < max_iters else np.ones_like(done)
            if finish.any():
                rows = active[finish]
                d_fin, gap_fin, F_fin = _round_finished(
                    U, C_act[finish], pool_act[finish], d[finish], gap[finish], F[finish]
                )
                out_d[rows] = d_fin
                out_F[rows] = F_fin
                out_gap[rows] = gap_fin
                out_iter[rows] = it
                out_conv[rows] = done[finish]
            if finish.all():
                break
            keep = ~finish
            active = active[keep]
            d, C_act, pool_act = d[keep], C_act[keep], pool_act[keep]
            s, F, gap = s[keep], F[keep], gap[keep]

        stepped = np.ones(len(active), dtype=bool)
        if it > 0 and it % ROUND_PERIOD == 0:
            jumped = _round_active(U, C_act, pool_act, d, gap, epsilon)
            jumped |= _polish_active(U, C_act, pool_act, d, gap, epsilon, skip=jumped)
            stepped &= ~jumped

        new = d * s
        new *= (pool_act / new.sum(axis=1))[:, None]
        prev_l1 = np.abs(new - d).sum(axis=1)
        prev_F = F
        prev_ok = stepped
        d = np.where(stepped[:, None], new, d)

    return BatchResult(
        deltas=out_d,
        log_nash=out_F,
        gap_bound=out_gap,
        iterations=out_iter,
        converged=out_conv,
        min_monotone_margin=min_mono,
        min_pinsker_margin=min_pinsker,
    )


def _batch_gaps(U, C_rows, d_rows):
    """Gap certificates for several (profile, iterate) rows; inf where a
    contributing agent gets zero utility."""
    u = d_rows @ U.T
    bad = ((C_rows > 0.0) & (u <= 0.0)).any(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.divide(C_rows, u, out=np.zeros_like(C_rows), where=(C_rows > 0.0) & (u > 0.0))
    s = w @ U
    gaps = np.maximum(0.0, np.log(s.max(axis=1)))
    gaps[bad] = np.inf
    return gaps


def _round_active(U, C_act, pool_act, d, gap, epsilon) -> np.ndarray:
    """Try the certified rounding jump on active rows, in place.

    Mid-run acceptance needs the rounded gap to already meet the target, so a
    jump can never strand a row above epsilon. Returns the jumped-row mask.
    """
    small = (d < ROUND_TAU * pool_act[:, None]) & (d > 0.0)
    cand = small.any(axis=1) & ~small.all(axis=1)
    jumped = np.zeros(len(d), dtype=bool)
    if not cand.any():
        return jumped
    d2 = np.where(small[cand], 0.0, d[cand])
    d2 *= (pool_act[cand] / d2.sum(axis=1))[:, None]
    gap2 = _batch_gaps(U, C_act[cand], d2)
    accept = gap2 <= np.minimum(gap[cand], epsilon)
    if accept.any():
        rows = np.nonzero(cand)[0][accept]
        d[rows] = d2[accept]
        jumped[rows] = True
    return jumped


def _polish_active(U, C_act, pool_act, d, gap, epsilon, skip) -> np.ndarray:
    """Try the certified Newton jump on the rows the rounding pass left, in
    place. Same acceptance rule as rounding: the polished point's full gap
    certificate must already meet the target. Returns the jumped-row mask."""
    jumped = np.zeros(len(d), dtype=bool)
    for r in range(len(d)):
        if skip[r] or gap[r] <= epsilon:
            continue
        cand = _newton_polish(U, C_act[r], pool_act[r], d[r])
        if cand is None:
            continue
        g2 = float(_batch_gaps(U, C_act[r][None, :], cand[None, :])[0])
        if g2 <= min(gap[r], epsilon):
            d[r] = cand
            jumped[r] = True
    return jumped


def _round_finished(U, C_fin, pool_fin, d, gap, F):
    """Certified rounding for rows that just reached the target: keep the
    rounded point wherever its certificate is at least as good."""
    small = (d < ROUND_TAU * pool_fin[:, None]) & (d > 0.0)
    cand = small.any(axis=1) & ~small.all(axis=1)
    if not cand.any():
        return d, gap, F
    d2 = np.where(small[cand], 0.0, d[cand])
    d2 *= (pool_fin[cand] / d2.sum(axis=1))[:, None]
    gap2 = _batch_gaps(U, C_fin[cand], d2)
    accept = gap2 <= gap[cand]
    if accept.any():
        rows = np.nonzero(cand)[0][accept]
        d = d.copy()
        gap = gap.copy()
        F = F.copy()
        d[rows] = d2[accept]
        gap[rows] = gap2[accept]
        u = d[rows] @ U.T
        logu = np.log(u, where=u > 0.0, out=np.zeros_like(u))
        F[rows] = (C_fin[rows] * logu).sum(axis=1)
    return d, gap, F
