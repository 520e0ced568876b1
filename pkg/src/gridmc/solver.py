"""Power-flow solution drivers and operating-state classification.

newton_solve iterates the split-circuit linearization with per-variable
voltage limiting.  tx_stepping_solve wraps it in a continuation schedule that
first shorts every branch with a large parallel conductance (making the
network trivially solvable from the slack voltage) and relaxes the
conductance to zero.  robust_solve chains plain NR, the continuation
fallback, and generator reactive-limit enforcement; classify maps a solution
to one operating class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .circuit import CaseIndex, SplitCircuitState
from .network import GridError, NetworkCase


class SingularSystemError(GridError):
    """The assembled linear system could not be solved."""


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8               # residual infinity-norm threshold, pu
    max_iter: int = 50
    v_limit_delta: float = 0.1      # per-iteration cap on voltage updates, pu
    tx_steps: int = 20              # nonzero continuation steps
    tx_g_init: float = 1e3          # initial shorting conductance, pu
    tx_schedule: str = "geometric"  # or "linear"
    use_tx_stepping: bool = True
    q_limit_rounds: int = 10        # PV/PQ toggle cap


@dataclass(frozen=True)
class QLimitSwitch:
    bus: int
    side: str                       # "q_min" or "q_max"


@dataclass
class PFSolution:
    state: SplitCircuitState
    converged: bool
    iterations: int
    used_tx_stepping: bool = False
    q_limit_switches: tuple[QLimitSwitch, ...] = ()
    residual_norm: float = math.inf
    diagnostic: str = ""


class OperatingClass(Enum):
    NORMAL = "normal"
    VOLTAGE_COLLAPSE = "voltage_collapse"
    ANGULAR_UNSTABLE = "angular_unstable"
    VOLTAGE_BAND_VIOLATION = "voltage_band_violation"
    BRANCH_OVERLOAD = "branch_overload"


@dataclass(frozen=True)
class LimitSpec:
    angle_max: float = math.pi / 2      # max |angle difference| per branch, rad
    enforce_v_band: bool = True
    enforce_branch_rating: bool = True


@dataclass(frozen=True)
class Classification:
    label: OperatingClass
    angular_branches: tuple[tuple[int, int], ...] = ()
    band_buses: tuple[int, ...] = ()
    overloaded_branches: tuple[tuple[int, int], ...] = ()


def solve_linear(system, rhs: np.ndarray) -> np.ndarray:
    """Sparse LU solve (partial pivoting, fill-reducing column ordering).

    `system` is either a scipy sparse matrix or a (rows, cols, values)
    triplet tuple.  The returned x satisfies |Ax - b|_inf <= 1e-9 |b|_inf;
    a structurally or numerically singular matrix raises
    SingularSystemError naming the offending rows when they are detectable.
    """
    b = np.asarray(rhs, dtype=float)
    if isinstance(system, tuple):
        rows, cols, vals = system
        n = len(b)
        A = sp.csc_matrix((vals, (rows, cols)), shape=(n, n))
    else:
        A = system.tocsc()
    if A.shape[0] != A.shape[1] or A.shape[0] != len(b):
        raise SingularSystemError(
            f"system shape {A.shape} does not match rhs of {len(b)}")
    try:
        lu = spla.splu(A)
        x = lu.solve(b)
    except RuntimeError as exc:
        raise SingularSystemError(_singular_detail(A, str(exc))) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError(_singular_detail(A, "non-finite solution"))
    err = np.abs(A @ x - b).max()
    if err > 1e-9 * max(np.abs(b).max(), 1.0e-30):
        raise SingularSystemError(
            f"solution residual {err:.3e} exceeds 1e-9 * |b|_inf")
    return x


def _singular_detail(A: sp.csc_matrix, base: str) -> str:
    csr = A.tocsr()
    empty_rows = np.nonzero(np.diff(csr.indptr) == 0)[0]
    empty_cols = np.nonzero(np.diff(A.indptr) == 0)[0]
    msg = f"singular system: {base}"
    if len(empty_rows):
        msg += f"; structurally empty rows {empty_rows.tolist()[:8]}"
    if len(empty_cols):
        msg += f"; structurally empty columns {empty_cols.tolist()[:8]}"
    return msg


def _as_index(case) -> CaseIndex:
    return case if isinstance(case, CaseIndex) else CaseIndex(case)


def newton_solve(case, init: SplitCircuitState, opts: SolverOptions | None = None,
                 *, clamps: dict[int, float] | None = None,
                 extra_branch_g: float = 0.0,
                 trace: list[str] | None = None) -> PFSolution:
    """Newton-Raphson with per-variable voltage limiting.

    Each iteration stamps the linearized system, solves it, and applies the
    update with every voltage variable's step clipped to +/- v_limit_delta;
    Q and slack-current variables take full steps.  Stops when the residual
    infinity-norm falls to tol or below, or max_iter updates have been taken.
    """
    opts = opts or SolverOptions()
    index = _as_index(case)
    x = index.state_to_vector(init, clamps)
    nv = 2 * index.n

    for updates in range(opts.max_iter + 1):
        state = index.vector_to_state(x, updates)
        try:
            f = index.residual(state, clamps, extra_branch_g)
        except GridError as exc:
            return PFSolution(state, False, updates,
                              diagnostic=f"residual evaluation failed: {exc}")
        norm = float(np.abs(f).max())
        if trace is not None:
            trace.append(f"iter={updates} residual={norm:.3e} "
                         f"g={extra_branch_g:g}")
        if norm <= opts.tol:
            return PFSolution(state, True, updates, residual_norm=norm)
        if updates == opts.max_iter:
            return PFSolution(state, False, updates, residual_norm=norm,
                              diagnostic=f"no convergence in {opts.max_iter} "
                                         f"iterations (residual {norm:.3e})")
        try:
            A, b = index.assemble(state, clamps, extra_branch_g)
            x_next = solve_linear(A, b)
        except (SingularSystemError, GridError) as exc:
            return PFSolution(state, False, updates, residual_norm=norm,
                              diagnostic=str(exc))
        dx = x_next - x
        dv = dx[:nv]
        limited = int(np.count_nonzero(np.abs(dv) > opts.v_limit_delta))
        if limited and trace is not None:
            trace[-1] += f" limited={limited}"
        np.clip(dv, -opts.v_limit_delta, opts.v_limit_delta, out=dv)
        x = x + dx
        if not np.all(np.isfinite(x)):
            return PFSolution(index.vector_to_state(x, updates + 1), False,
                              updates + 1, diagnostic="iteration diverged")
    raise AssertionError("unreachable")


def tx_schedule(opts: SolverOptions) -> list[float]:
    """Strictly decreasing shorting-conductance levels ending at exactly 0."""
    g0, steps = opts.tx_g_init, max(opts.tx_steps, 1)
    if opts.tx_schedule == "linear":
        return [g0 * (steps - i) / steps for i in range(steps)] + [0.0]
    if opts.tx_schedule != "geometric":
        raise GridError(f"unknown tx schedule '{opts.tx_schedule}'")
    # last nonzero level is g0 * 1e-6 (1e-3 pu at the default 1e3 start)
    if steps == 1:
        return [g0, 0.0]
    ratio = (1e-6) ** (1.0 / (steps - 1))
    return [g0 * ratio ** i for i in range(steps)] + [0.0]


def tx_stepping_solve(case, opts: SolverOptions | None = None,
                      *, clamps: dict[int, float] | None = None,
                      trace: list[str] | None = None) -> PFSolution:
    """Continuation solve: short every branch with a parallel conductance,
    solve from the slack-voltage-everywhere start, then relax the
    conductance along the schedule, warm-starting each step.  The final
    step has zero added conductance, so its solution solves the original
    case."""
    opts = opts or SolverOptions()
    index = _as_index(case)

    state = index.flat_start()
    state.v_real[:] = index.slack_vr
    state.v_imag[:] = index.slack_vi

    total_iters = 0
    sol: PFSolution | None = None
    for step, g in enumerate(tx_schedule(opts)):
        sol = newton_solve(index, state, opts, clamps=clamps,
                           extra_branch_g=g, trace=trace)
        total_iters += sol.iterations
        if not sol.converged:
            return replace(sol, used_tx_stepping=True, iterations=total_iters,
                           diagnostic=f"continuation step {step} "
                                      f"(conductance {g:g} pu) failed: "
                                      f"{sol.diagnostic}")
        state = sol.state
    assert sol is not None
    return replace(sol, used_tx_stepping=True, iterations=total_iters)


def enforce_q_limits(case, solution: PFSolution,
                     opts: SolverOptions | None = None) -> PFSolution:
    """PV->PQ switching against aggregate generator reactive limits.

    A PV bus whose solved Q violates its limits is clamped at the violated
    limit (its magnitude constraint row becomes a Q pin) and the case is
    re-solved warm; clamped buses whose voltage recovers past the setpoint
    in the releasing direction are switched back.  Exceeding the toggle cap
    or a failed re-solve declares the sample non-convergent.
    """
    opts = opts or SolverOptions()
    index = _as_index(case)
    if not solution.converged:
        return solution
    if not index.npv:
        return solution

    clamps: dict[int, float] = {}
    sides: dict[int, str] = {}
    for sw in solution.q_limit_switches:
        sides[sw.bus] = sw.side
        k = [kk for kk, p in enumerate(index.pv)
             if index.buses[int(p)].id == sw.bus]
        if k:
            clamps[sw.bus] = (index.pv_qmin[k[0]] if sw.side == "q_min"
                              else index.pv_qmax[k[0]])

    sol = solution
    for _ in range(opts.q_limit_rounds):
        state = sol.state
        changed = False
        for k, p in enumerate(index.pv):
            bus_id = index.buses[int(p)].id
            vm = math.hypot(state.v_real[p], state.v_imag[p])
            if bus_id in clamps:
                side = sides[bus_id]
                if side == "q_max" and vm > index.pv_vset[k] + 1e-9:
                    del clamps[bus_id], sides[bus_id]
                    changed = True
                elif side == "q_min" and vm < index.pv_vset[k] - 1e-9:
                    del clamps[bus_id], sides[bus_id]
                    changed = True
            else:
                q = state.q_gen[k]
                if q > index.pv_qmax[k] + 1e-9:
                    clamps[bus_id] = float(index.pv_qmax[k])
                    sides[bus_id] = "q_max"
                    changed = True
                elif q < index.pv_qmin[k] - 1e-9:
                    clamps[bus_id] = float(index.pv_qmin[k])
                    sides[bus_id] = "q_min"
                    changed = True
        if not changed:
            switches = tuple(QLimitSwitch(b, sides[b]) for b in sorted(sides))
            return replace(sol, q_limit_switches=switches)
        resolved = newton_solve(index, sol.state, opts, clamps=clamps)
        if not resolved.converged:
            return replace(resolved, used_tx_stepping=sol.used_tx_stepping,
                           diagnostic="reactive-limit re-solve failed: "
                                      + resolved.diagnostic)
        sol = replace(resolved, used_tx_stepping=sol.used_tx_stepping,
                      iterations=sol.iterations + resolved.iterations)
    return replace(sol, converged=False,
                   diagnostic=f"reactive-limit switching exceeded "
                              f"{opts.q_limit_rounds} rounds")


def robust_solve(case, warm_start: SplitCircuitState | None = None,
                 opts: SolverOptions | None = None,
                 *, trace: list[str] | None = None) -> PFSolution:
    """Plain NR from the warm start (flat start if absent), continuation
    fallback on failure, then reactive-limit enforcement on whichever
    converged.  Failure is reported through converged=False, never raised."""
    opts = opts or SolverOptions()
    index = _as_index(case)
    init = warm_start if warm_start is not None else index.flat_start()
    sol = newton_solve(index, init, opts, trace=trace)
    if not sol.converged and opts.use_tx_stepping:
        sol = tx_stepping_solve(index, opts, trace=trace)
    if sol.converged:
        sol = enforce_q_limits(index, sol, opts)
    return sol


def _wrap_angle(a: np.ndarray) -> np.ndarray:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def classify(case, pf_result: PFSolution,
             limits: LimitSpec | None = None) -> Classification:
    """Map a solve outcome to its operating class.

    Non-convergence is voltage collapse.  Converged solutions are checked,
    in headline priority order, for branch angle separation at or above the
    limit, bus voltages outside their band, and branch loading above rating;
    the payload reports every violating element of all three kinds.
    """
    limits = limits or LimitSpec()
    if not pf_result.converged:
        return Classification(OperatingClass.VOLTAGE_COLLAPSE)
    index = _as_index(case)
    state = pf_result.state

    angles = np.arctan2(state.v_imag, state.v_real)
    diff = _wrap_angle(angles[index.br_f] - angles[index.br_t])
    ang_hits = np.nonzero(np.abs(diff) >= limits.angle_max)[0]
    angular = tuple((index.branches[i].from_bus, index.branches[i].to_bus)
                    for i in ang_hits)

    band: tuple[int, ...] = ()
    if limits.enforce_v_band:
        vm = np.hypot(state.v_real, state.v_imag)
        bad = np.nonzero((vm < index.v_min) | (vm > index.v_max))[0]
        band = tuple(index.buses[int(i)].id for i in bad)

    overload: tuple[tuple[int, int], ...] = ()
    if limits.enforce_branch_rating and len(index.br_f):
        sf, st = index.branch_flows(state)
        loading = np.maximum(np.abs(sf), np.abs(st))
        bad = np.nonzero((index.rate_a > 0) & (loading > index.rate_a))[0]
        overload = tuple((index.branches[int(i)].from_bus,
                          index.branches[int(i)].to_bus) for i in bad)

    if angular:
        label = OperatingClass.ANGULAR_UNSTABLE
    elif band:
        label = OperatingClass.VOLTAGE_BAND_VIOLATION
    elif overload:
        label = OperatingClass.BRANCH_OVERLOAD
    else:
        label = OperatingClass.NORMAL
    return Classification(label, angular, band, overload)
