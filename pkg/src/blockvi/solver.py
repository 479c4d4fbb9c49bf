"""Block-iterative fixed-point solver with pluggable activation schedules.

Each iteration refreshes the auxiliary points of the activated arms only,

    t_i = x_n - (gamma / b_i) L_i*(F_i(L_i x_n) - p_i),   i in I_n,

keeps the others stale, and projects an average of the t_i back onto the
constraint set.  Convergence requires gamma in (0, 2), per-arm step bounds
b_i >= ||L_i||^2, and a covering schedule: every window of K consecutive
active sets must touch every arm.

The averaging uses weights v_i proportional to w_i * b_i.  Dividing each
arm's update by b_i makes the arm operators 1-cocoercive (which is what the
gamma in (0, 2) guarantee needs), and multiplying the weights by b_i puts
the cancelled factor back, so fixed points satisfy

    -sum_i w_i L_i*(F_i(L_i x) - p_i)  in  N_C(x)

with the *problem's own* weights w_i -- the condition ``vi_residual``
measures.  Averaging with the raw w_i instead would steer the iteration to
a solution of a differently-weighted inequality whenever the ||L_i|| differ.
"""

from __future__ import annotations

import csv
import enum
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import Problem, vi_residual
from .errors import CoverageError, EmptyBlock, InvalidParameter, ShapeMismatch
from .space import SpacePoint

__all__ = [
    "ActivationSchedule",
    "make_schedule",
    "validate_schedule",
    "SolverConfig",
    "SolverState",
    "TraceRecord",
    "SolverTrace",
    "SolveStatus",
    "SolveResult",
    "step",
    "solve",
    "arm_gammas",
    "averaging_weights",
]


# ---------------------------------------------------------------------------
# activation schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ActivationSchedule:
    """Periodic sequence of nonempty index sets with certified covering constant K."""

    kind: str
    sets: tuple            # one period of active sets, each a sorted tuple
    K: int
    index_count: int

    def active_set(self, n: int) -> tuple:
        return self.sets[n % len(self.sets)]


def validate_schedule(sets: Sequence[Sequence[int]], index_count: int) -> int:
    """Check the covering condition over one period and return the minimal K.

    K is the smallest window length such that every K consecutive active sets
    (starting anywhere) jointly touch every index.
    """
    period = [tuple(sorted(set(int(i) for i in s))) for s in sets]
    if not period:
        raise InvalidParameter("schedule must contain at least one index set")
    full = frozenset(range(index_count))
    for s in period:
        if not s:
            raise EmptyBlock("activation sets must be nonempty")
        if not frozenset(s) <= full:
            raise InvalidParameter(f"activation set {s} outside 0..{index_count - 1}")
    union = frozenset().union(*map(frozenset, period))
    if union != full:
        missing = sorted(full - union)
        raise CoverageError(f"indices {missing} are never activated")
    worst = 1
    m = len(period)
    for start in range(m):
        seen: set = set()
        k = 0
        while seen != full:
            seen |= set(period[(start + k) % m])
            k += 1
        worst = max(worst, k)
    return worst


def make_schedule(kind: str, index_count: int, *, blocks=None,
                  always_active: Sequence[int] = (), expensive: Sequence[int] = (),
                  period: Optional[int] = None,
                  sets: Optional[Sequence[Sequence[int]]] = None) -> ActivationSchedule:
    """Build one of the stock schedules and certify its covering constant.

    * ``full``: every arm at every iteration (K = 1).
    * ``cyclic_partition``: the arms outside ``always_active`` are split into
      ``blocks`` consecutive cells (or explicit cells), one cell per
      iteration plus the always-active arms (K = number of cells).
    * ``mod_skip``: all arms when n is a multiple of ``period``, all but the
      ``expensive`` arms otherwise (K = period).
    * ``explicit``: caller-provided period of index sets; K is measured.
    """
    if index_count < 1:
        raise InvalidParameter("index_count must be >= 1")
    all_idx = tuple(range(index_count))

    if kind == "full":
        period_sets = [all_idx]
    elif kind == "cyclic_partition":
        always = tuple(sorted(set(int(i) for i in always_active)))
        rest = [i for i in all_idx if i not in always]
        if isinstance(blocks, int):
            if blocks < 1 or (rest and blocks > len(rest)):
                raise InvalidParameter("block count must be in [1, #rotating arms]")
            cells = [list(c) for c in np.array_split(np.array(rest, dtype=int), blocks)]
        else:
            cells = [list(int(i) for i in c) for c in (blocks or [])]
            covered = set(i for c in cells for i in c)
            if covered != set(rest):
                raise CoverageError("explicit cells must partition the rotating arms")
        if any(len(c) == 0 for c in cells):
            raise EmptyBlock("cyclic partition contains an empty cell")
        period_sets = [tuple(sorted(always + tuple(c))) for c in cells]
    elif kind == "mod_skip":
        if period is None or period < 1:
            raise InvalidParameter("mod_skip needs a period >= 1")
        exp = tuple(sorted(set(int(i) for i in expensive)))
        cheap = tuple(i for i in all_idx if i not in exp)
        if not cheap and period > 1:
            raise EmptyBlock("skipping every arm would leave empty iterations")
        period_sets = [all_idx] + [cheap] * (period - 1)
    elif kind == "explicit":
        if not sets:
            raise InvalidParameter("explicit schedule needs index sets")
        period_sets = [tuple(sorted(set(int(i) for i in s))) for s in sets]
    else:
        raise InvalidParameter(f"unknown schedule kind {kind!r}")

    k = validate_schedule(period_sets, index_count)
    return ActivationSchedule(kind=kind, sets=tuple(tuple(s) for s in period_sets),
                              K=k, index_count=index_count)


# ---------------------------------------------------------------------------
# configuration, state, trace
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    gamma: float
    max_iters: int
    tol: float
    x0: SpacePoint
    trace_every: int = 1
    t_init_policy: str = "copy_x0"   # or "one_step"
    residual_theta: float = 1.0
    keep_snapshots: bool = False
    record_arm_gaps: bool = False

    def validate(self):
        if not 0.0 < self.gamma < 2.0:
            raise InvalidParameter(
                f"gamma = {self.gamma!r} rejected; the relaxation parameter "
                "must lie strictly inside (0, 2)")
        if self.max_iters < 1:
            raise InvalidParameter("max_iters must be >= 1")
        if self.tol < 0:
            raise InvalidParameter("tol must be nonnegative")
        if self.trace_every < 1:
            raise InvalidParameter("trace_every must be >= 1")
        if self.t_init_policy not in ("copy_x0", "one_step"):
            raise InvalidParameter("t_init_policy must be copy_x0 or one_step")
        if self.residual_theta <= 0:
            raise InvalidParameter("residual_theta must be positive")


@dataclass(frozen=True)
class SolverState:
    """Iterate x_n together with the auxiliary points t_{i, n-1}."""

    n: int
    x: SpacePoint
    t: tuple


@dataclass(frozen=True)
class TraceRecord:
    n: int
    seconds: float
    residual: float
    step_norm: float
    active_set_id: int
    arm_gaps: Optional[tuple] = None


@dataclass
class SolverTrace:
    """Per-iteration records plus optional iterate snapshots.

    ``active_sets`` registers each distinct activated set once; records refer
    to it by position.  ``iterates`` holds (k, seconds, x_k) with k = 0 the
    starting point, retained only when snapshots are requested.
    """

    records: list = field(default_factory=list)
    active_sets: list = field(default_factory=list)
    iterates: list = field(default_factory=list)

    def _set_id(self, active: tuple) -> int:
        try:
            return self.active_sets.index(active)
        except ValueError:
            self.active_sets.append(active)
            return len(self.active_sets) - 1

    def add(self, n: int, seconds: float, residual: float, step_norm: float,
            active: tuple, arm_gaps: Optional[tuple] = None):
        if self.records and n <= self.records[-1].n:
            raise InvalidParameter("trace records must be strictly increasing in n")
        self.records.append(TraceRecord(n, seconds, residual, step_norm,
                                        self._set_id(active), arm_gaps))

    def add_iterate(self, k: int, seconds: float, x: SpacePoint):
        self.iterates.append((k, seconds, x))

    @property
    def final_residual(self) -> float:
        return self.records[-1].residual if self.records else float("nan")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["n", "seconds", "residual", "step_norm", "active_set_id"])
            for r in self.records:
                writer.writerow([r.n, f"{r.seconds:.17g}", f"{r.residual:.17g}",
                                 f"{r.step_norm:.17g}", r.active_set_id])


class SolveStatus(enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"


@dataclass(frozen=True)
class SolveResult:
    solution: SpacePoint
    trace: SolverTrace
    status: SolveStatus


# ---------------------------------------------------------------------------
# iteration
# ---------------------------------------------------------------------------

def arm_gammas(problem: Problem, gamma: float) -> tuple:
    return tuple(gamma / p.norm_sq_bound for p in problem.prescriptions)


def averaging_weights(problem: Problem) -> tuple:
    """Weights v_i = w_i b_i / sum_j w_j b_j used in the averaging step; they
    cancel the per-arm step scaling so fixed points solve the stated problem."""
    raw = [p.weight * p.norm_sq_bound for p in problem.prescriptions]
    z = sum(raw)
    return tuple(r / z for r in raw)


def _arm_update_array(prescription, x: np.ndarray, gamma_i: float) -> np.ndarray:
    fy = prescription.fne._apply(prescription.linop._apply(x))
    return x - gamma_i * prescription.linop._adjoint(fy - prescription.target.data)


def _iterate_arrays(problem: Problem, gammas, vweights, x: np.ndarray,
                    t_matrix: np.ndarray, active: Sequence[int]) -> np.ndarray:
    """One iteration on flat storage: rows of ``t_matrix`` are the auxiliary
    points and are updated in place; returns the projected new iterate."""
    for i in active:
        t_matrix[i] = _arm_update_array(problem.prescriptions[i], x, gammas[i])
    acc = vweights @ t_matrix
    return problem.constraint.project_array(acc, problem.domain_shape)


def step(state: SolverState, problem: Problem, active: Sequence[int],
         config: SolverConfig) -> SolverState:
    """One exact iteration: refresh t_i for active arms, keep the rest stale,
    project the weighted average.  Pure function of (state, active); stale
    auxiliary points are carried over unchanged (bitwise)."""
    gammas = arm_gammas(problem, config.gamma)
    vweights = np.asarray(averaging_weights(problem))
    t_matrix = np.stack([ti.data for ti in state.t])
    x_next = _iterate_arrays(problem, gammas, vweights, state.x.data,
                             t_matrix, active)
    active_set = set(active)
    t_next = tuple(
        SpacePoint(t_matrix[i], problem.prescriptions[i].linop.input_shape)
        if i in active_set else state.t[i]
        for i in range(problem.arm_count))
    return SolverState(n=state.n + 1, x=SpacePoint(x_next, problem.domain_shape),
                       t=t_next)


def solve(problem: Problem, schedule: ActivationSchedule,
          config: SolverConfig) -> SolveResult:
    """Run the block iteration until the fixed-point residual drops below
    ``config.tol`` (checked every ``trace_every`` iterations) or ``max_iters``
    is reached.  Deterministic given (problem, schedule, config)."""
    config.validate()
    if schedule.index_count != problem.arm_count:
        raise InvalidParameter("schedule was built for a different arm count")
    validate_schedule(schedule.sets, problem.arm_count)
    if config.x0.shape != problem.domain_shape:
        raise ShapeMismatch("x0 lives outside the problem domain")

    gammas = arm_gammas(problem, config.gamma)
    vweights = np.asarray(averaging_weights(problem))
    if config.t_init_policy == "copy_x0":
        t = np.tile(config.x0.data, (problem.arm_count, 1))
    else:
        t = np.stack([_arm_update_array(p, config.x0.data, g)
                      for p, g in zip(problem.prescriptions, gammas)])

    trace = SolverTrace()
    started = time.perf_counter()
    if config.keep_snapshots:
        trace.add_iterate(0, 0.0, config.x0)

    x = config.x0.data
    status = SolveStatus.MAX_ITERS
    for n in range(config.max_iters):
        active = schedule.active_set(n)
        prev_x = x
        x = _iterate_arrays(problem, gammas, vweights, x, t, active)
        if n % config.trace_every == 0 or n == config.max_iters - 1:
            x_point = SpacePoint(x, problem.domain_shape)
            residual = vi_residual(problem, x_point, config.residual_theta)
            seconds = time.perf_counter() - started
            gaps = None
            if config.record_arm_gaps:
                gaps = tuple(p.gap(x_point) for p in problem.prescriptions)
            trace.add(n, seconds, residual,
                      float(np.linalg.norm(x - prev_x)), active, gaps)
            if config.keep_snapshots:
                trace.add_iterate(n + 1, seconds, x_point)
            if residual <= config.tol:
                status = SolveStatus.CONVERGED
                break
    return SolveResult(solution=SpacePoint(x, problem.domain_shape),
                       trace=trace, status=status)
