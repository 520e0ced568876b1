"""Split-circuit formulation of the power-flow equations.

Bus voltages are carried as separate real and imaginary parts, generator
reactive powers are extra unknowns, and every device contributes linearized
"stamps" to a nodal matrix the way a circuit simulator assembles modified
nodal analysis.  One linearization step produces A @ x_next = b where A is
the Jacobian of the current-mismatch residual at the present iterate and b
collects the independent (history) current sources.

Unknown ordering: (V_R, V_I) pairs for every bus in ascending bus-id order,
then one Q per PV bus, then the two slack source currents.  Row ordering
matches: per-bus KCL pairs, per-PV-bus magnitude constraint, slack voltage
pins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .network import Bus, BusKind, GridError, Generator, Load, NetworkCase


class SingularPointError(GridError):
    """Device evaluation at a zero-voltage point."""


@dataclass
class SplitCircuitState:
    """Newton-Raphson state: per-bus V_R/V_I, per-PV-bus Q, iteration count.

    Arrays are ordered by ascending bus id (PV subset likewise).  i_slack
    holds the slack source currents when known; left None it is computed so
    the slack KCL rows balance exactly.
    """
    v_real: np.ndarray
    v_imag: np.ndarray
    q_gen: np.ndarray
    iteration: int = 0
    i_slack: np.ndarray | None = None

    def copy(self) -> "SplitCircuitState":
        return SplitCircuitState(
            self.v_real.copy(), self.v_imag.copy(), self.q_gen.copy(),
            self.iteration,
            None if self.i_slack is None else self.i_slack.copy())

    def voltage(self) -> np.ndarray:
        return self.v_real + 1j * self.v_imag


class CaseIndex:
    """Array view of a NetworkCase plus the unknown/row index maps.

    Generators at one PV bus are aggregated into a single injection with one
    Q unknown (summed P and Q limits, bus v_set as the magnitude target).
    Generators at the slack bus are absorbed by the slack source; out-of-
    service devices are dropped.
    """

    def __init__(self, case: NetworkCase):
        self.case = case
        buses = sorted(case.buses, key=lambda b: b.id)
        self.buses = buses
        self.n = len(buses)
        self.pos = {b.id: i for i, b in enumerate(buses)}

        slack = [i for i, b in enumerate(buses) if b.kind is BusKind.SLACK]
        if len(slack) != 1:
            raise GridError(f"expected exactly one slack bus, found {len(slack)}")
        self.slack = slack[0]
        self.slack_vr = buses[self.slack].v_set * math.cos(buses[self.slack].angle_set)
        self.slack_vi = buses[self.slack].v_set * math.sin(buses[self.slack].angle_set)

        self.pv = np.array([i for i, b in enumerate(buses) if b.kind is BusKind.PV],
                           dtype=np.intp)
        self.npv = len(self.pv)
        self.nx = 2 * self.n + self.npv + 2
        self._q_col = {int(p): 2 * self.n + k for k, p in enumerate(self.pv)}

        # loads in deterministic order: (bus id, record ordinal)
        loads = sorted(enumerate(case.loads), key=lambda t: (t[1].bus, t[0]))
        self.load_bus = np.array([self.pos[ld.bus] for _, ld in loads], dtype=np.intp)
        self.load_p = np.array([ld.p_nom for _, ld in loads])
        self.load_q = np.array([ld.q_nom for _, ld in loads])

        # aggregate in-service generation per PV bus
        p_sum = {int(p): 0.0 for p in self.pv}
        q_lo = {int(p): 0.0 for p in self.pv}
        q_hi = {int(p): 0.0 for p in self.pv}
        for g in case.generators:
            if not g.status or g.bus not in self.pos:
                continue
            p = self.pos[g.bus]
            if p in p_sum:
                p_sum[p] += g.p_set
                q_lo[p] += g.q_min
                q_hi[p] += g.q_max
        self.pv_p = np.array([p_sum[int(p)] for p in self.pv])
        self.pv_qmin = np.array([q_lo[int(p)] for p in self.pv])
        self.pv_qmax = np.array([q_hi[int(p)] for p in self.pv])
        self.pv_vset = np.array([buses[int(p)].v_set for p in self.pv])

        # pi-model branch admittances, MATPOWER conventions (tap on from side)
        live = [br for br in case.branches if br.status]
        self.branches = live
        self.br_f = np.array([self.pos[br.from_bus] for br in live], dtype=np.intp)
        self.br_t = np.array([self.pos[br.to_bus] for br in live], dtype=np.intp)
        z = np.array([complex(br.r, br.x) for br in live], dtype=complex)
        if np.any(z == 0):
            raise GridError("in-service branch with zero series impedance")
        ys = 1.0 / z
        bc = np.array([br.b for br in live])
        tap = np.array([br.tap for br in live])
        shift = np.array([br.shift for br in live])
        t = tap * np.exp(1j * shift)
        self.yff = (ys + 0.5j * bc) / (tap * tap)
        self.yft = -ys / np.conj(t)
        self.ytf = -ys / t
        self.ytt = ys + 0.5j * bc
        self.rate_a = np.array([br.rate_a for br in live])

        self.ysh = np.array([complex(b.gs, b.bs) for b in buses], dtype=complex)

        n = self.n
        if live:
            rows = np.concatenate([self.br_f, self.br_f, self.br_t, self.br_t,
                                   np.arange(n)])
            cols = np.concatenate([self.br_f, self.br_t, self.br_f, self.br_t,
                                   np.arange(n)])
            vals = np.concatenate([self.yff, self.yft, self.ytf, self.ytt, self.ysh])
        else:
            rows = cols = np.arange(n)
            vals = self.ysh
        self.ybus = sp.csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=complex)

        self._lin = self._linear_triplets()
        self.v_min = np.array([b.v_min for b in buses])
        self.v_max = np.array([b.v_max for b in buses])

    # ---- index maps ------------------------------------------------------

    def col_vr(self, bus_pos: int) -> int:
        return 2 * bus_pos

    def col_vi(self, bus_pos: int) -> int:
        return 2 * bus_pos + 1

    def col_q(self, bus_pos: int) -> int:
        return self._q_col[bus_pos]

    @property
    def col_slack_ir(self) -> int:
        return 2 * self.n + self.npv

    @property
    def col_slack_ii(self) -> int:
        return 2 * self.n + self.npv + 1

    def index_map(self) -> dict[tuple, int]:
        """(bus id, 'vr'|'vi'|'q') and ('slack','ir'|'ii') to matrix index."""
        out: dict[tuple, int] = {}
        for b, i in self.pos.items():
            out[(b, "vr")] = 2 * i
            out[(b, "vi")] = 2 * i + 1
        for p, c in self._q_col.items():
            out[(self.buses[p].id, "q")] = c
        out[("slack", "ir")] = self.col_slack_ir
        out[("slack", "ii")] = self.col_slack_ii
        return out

    # ---- state <-> solution vector --------------------------------------

    def flat_start(self) -> SplitCircuitState:
        vr = np.ones(self.n)
        vi = np.zeros(self.n)
        for k, p in enumerate(self.pv):
            vr[p] = self.pv_vset[k]
        vr[self.slack] = self.slack_vr
        vi[self.slack] = self.slack_vi
        q0 = 0.5 * (self.pv_qmin + self.pv_qmax)
        q0[~np.isfinite(q0)] = 0.0
        return SplitCircuitState(vr, vi, q0)

    def file_start(self) -> SplitCircuitState:
        """Start from the operating point recorded in the source file."""
        vm = np.array([b.vm_init for b in self.buses])
        va = np.array([b.va_init for b in self.buses])
        q0 = 0.5 * (self.pv_qmin + self.pv_qmax)
        q0[~np.isfinite(q0)] = 0.0
        return SplitCircuitState(vm * np.cos(va), vm * np.sin(va), q0)

    def state_to_vector(self, state: SplitCircuitState,
                        clamps: dict[int, float] | None = None) -> np.ndarray:
        x = np.empty(self.nx)
        x[0:2 * self.n:2] = state.v_real
        x[1:2 * self.n:2] = state.v_imag
        x[2 * self.n:2 * self.n + self.npv] = state.q_gen
        if state.i_slack is not None:
            x[self.col_slack_ir:] = state.i_slack
        else:
            x[self.col_slack_ir:] = self._consistent_slack_current(state, clamps)
        return x

    def vector_to_state(self, x: np.ndarray, iteration: int = 0) -> SplitCircuitState:
        return SplitCircuitState(
            x[0:2 * self.n:2].copy(), x[1:2 * self.n:2].copy(),
            x[2 * self.n:2 * self.n + self.npv].copy(), iteration,
            x[self.col_slack_ir:].copy())

    def _consistent_slack_current(self, state: SplitCircuitState,
                                  clamps: dict[int, float] | None) -> np.ndarray:
        f = self._mismatch_rows(state, clamps, 0.0)
        return np.array([f[2 * self.slack], f[2 * self.slack + 1]])

    # ---- residual --------------------------------------------------------

    def _injections(self, state: SplitCircuitState,
                    clamps: dict[int, float] | None,
                    extra_branch_g: float) -> np.ndarray:
        """Complex device + branch current leaving each bus.

        extra_branch_g > 0 adds a stiff line-like element (admittance -j*g,
        a series reactance of 1/g) in parallel with every in-service branch;
        an inductive tie lets PV buses balance through their free Q, which a
        resistive tie cannot.
        """
        v = state.voltage()
        i = self.ybus @ v
        if extra_branch_g:
            d = (-1j * extra_branch_g) * (v[self.br_f] - v[self.br_t])
            np.add.at(i, self.br_f, d)
            np.add.at(i, self.br_t, -d)
        if len(self.load_bus):
            vl = v[self.load_bus]
            d2 = vl.real ** 2 + vl.imag ** 2
            if np.any(d2 == 0.0):
                raise SingularPointError("load bus at zero voltage")
            il = ((self.load_p * vl.real + self.load_q * vl.imag)
                  + 1j * (self.load_p * vl.imag - self.load_q * vl.real)) / d2
            np.add.at(i, self.load_bus, il)
        if self.npv:
            vg = v[self.pv]
            d2 = vg.real ** 2 + vg.imag ** 2
            if np.any(d2 == 0.0):
                raise SingularPointError("generator bus at zero voltage")
            p, q = -self.pv_p, -np.asarray(state.q_gen)
            ig = ((p * vg.real + q * vg.imag)
                  + 1j * (p * vg.imag - q * vg.real)) / d2
            np.add.at(i, self.pv, ig)
        return i

    def _mismatch_rows(self, state: SplitCircuitState,
                       clamps: dict[int, float] | None,
                       extra_branch_g: float) -> np.ndarray:
        """Residual with slack source currents taken as zero."""
        f = np.zeros(self.nx)
        i = self._injections(state, clamps, extra_branch_g)
        f[0:2 * self.n:2] = i.real
        f[1:2 * self.n:2] = i.imag
        for k, p in enumerate(self.pv):
            row = 2 * self.n + k
            bus_id = self.buses[int(p)].id
            if clamps and bus_id in clamps:
                f[row] = state.q_gen[k] - clamps[bus_id]
            else:
                f[row] = (state.v_real[p] ** 2 + state.v_imag[p] ** 2
                          - self.pv_vset[k] ** 2)
        f[self.col_slack_ir] = state.v_real[self.slack] - self.slack_vr
        f[self.col_slack_ii] = state.v_imag[self.slack] - self.slack_vi
        return f

    def residual(self, state: SplitCircuitState,
                 clamps: dict[int, float] | None = None,
                 extra_branch_g: float = 0.0) -> np.ndarray:
        """KCL current mismatch per bus (real, imag), magnitude-constraint
        mismatch per PV bus, and slack pin mismatch.  Zero iff the state
        solves the power flow."""
        f = self._mismatch_rows(state, clamps, extra_branch_g)
        if state.i_slack is None:
            isl = np.array([f[2 * self.slack], f[2 * self.slack + 1]])
        else:
            isl = state.i_slack
        f[2 * self.slack] -= isl[0]
        f[2 * self.slack + 1] -= isl[1]
        return f

    # ---- stamping --------------------------------------------------------

    def _linear_triplets(self):
        """State-independent entries: branches, shunts, slack pins/currents."""
        n = self.n
        rows: list[np.ndarray] = []
        cols: list[np.ndarray] = []
        vals: list[np.ndarray] = []

        def block(rb, cb, y):
            g, b = y.real, y.imag
            rows.extend([2 * rb, 2 * rb, 2 * rb + 1, 2 * rb + 1])
            cols.extend([2 * cb, 2 * cb + 1, 2 * cb, 2 * cb + 1])
            vals.extend([g, -b, b, g])

        if len(self.br_f):
            block(self.br_f, self.br_f, self.yff)
            block(self.br_f, self.br_t, self.yft)
            block(self.br_t, self.br_f, self.ytf)
            block(self.br_t, self.br_t, self.ytt)
        diag = np.arange(n)
        block(diag, diag, self.ysh)

        r = np.concatenate([np.atleast_1d(a) for a in rows])
        c = np.concatenate([np.atleast_1d(a) for a in cols])
        v = np.concatenate([np.atleast_1d(a) for a in vals])

        extra_r = np.array([2 * self.slack, 2 * self.slack + 1,
                            self.col_slack_ir, self.col_slack_ii])
        extra_c = np.array([self.col_slack_ir, self.col_slack_ii,
                            self.col_vr(self.slack), self.col_vi(self.slack)])
        extra_v = np.array([-1.0, -1.0, 1.0, 1.0])
        return (np.concatenate([r, extra_r]).astype(np.intp),
                np.concatenate([c, extra_c]).astype(np.intp),
                np.concatenate([v, extra_v]))

    def assemble(self, state: SplitCircuitState,
                 clamps: dict[int, float] | None = None,
                 extra_branch_g: float = 0.0) -> tuple[sp.csc_matrix, np.ndarray]:
        """Build A @ x_next = b for one linearization step.

        A equals the Jacobian of residual() at the given state; b carries the
        slack pins, magnitude-row history, and the devices' independent
        current sources.
        """
        n = self.n
        lr, lc, lv = self._lin
        rows = [lr]
        cols = [lc]
        vals = [lv]
        b = np.zeros(self.nx)
        b[self.col_slack_ir] = self.slack_vr
        b[self.col_slack_ii] = self.slack_vi

        if extra_branch_g and len(self.br_f):
            # real 2x2 blocks of admittance -j*g between the terminals
            g = extra_branch_g
            fr, to = self.br_f, self.br_t
            rows.append(np.concatenate([2 * fr, 2 * fr + 1, 2 * fr, 2 * fr + 1,
                                        2 * to, 2 * to + 1, 2 * to, 2 * to + 1]))
            cols.append(np.concatenate([2 * fr + 1, 2 * fr, 2 * to + 1, 2 * to,
                                        2 * to + 1, 2 * to, 2 * fr + 1, 2 * fr]))
            m = len(fr)
            pattern = np.concatenate([np.full(m, g), np.full(m, -g),
                                      np.full(m, -g), np.full(m, g)])
            vals.append(np.concatenate([pattern, pattern]))

        if len(self.load_bus):
            p, q = self.load_p, self.load_q
            lb = self.load_bus
            vr, vi = state.v_real[lb], state.v_imag[lb]
            ir, ii, dr_vr, dr_vi, di_vr, di_vi = _pq_partials(vr, vi, p, q)
            rows.append(np.concatenate([2 * lb, 2 * lb, 2 * lb + 1, 2 * lb + 1]))
            cols.append(np.concatenate([2 * lb, 2 * lb + 1, 2 * lb, 2 * lb + 1]))
            vals.append(np.concatenate([dr_vr, dr_vi, di_vr, di_vi]))
            np.add.at(b, 2 * lb, -(ir - dr_vr * vr - dr_vi * vi))
            np.add.at(b, 2 * lb + 1, -(ii - di_vr * vr - di_vi * vi))

        if self.npv:
            pv = self.pv
            qcols = np.array([self._q_col[int(p)] for p in pv], dtype=np.intp)
            vr, vi = state.v_real[pv], state.v_imag[pv]
            qk = np.asarray(state.q_gen)
            p, q = -self.pv_p, -qk
            ir, ii, dr_vr, dr_vi, di_vr, di_vi = _pq_partials(vr, vi, p, q)
            d2 = vr ** 2 + vi ** 2
            dr_dq = -vi / d2
            di_dq = vr / d2
            rows.append(np.concatenate([2 * pv, 2 * pv, 2 * pv + 1, 2 * pv + 1,
                                        2 * pv, 2 * pv + 1]))
            cols.append(np.concatenate([2 * pv, 2 * pv + 1, 2 * pv, 2 * pv + 1,
                                        qcols, qcols]))
            vals.append(np.concatenate([dr_vr, dr_vi, di_vr, di_vi, dr_dq, di_dq]))
            np.add.at(b, 2 * pv, -(ir - dr_vr * vr - dr_vi * vi - dr_dq * qk))
            np.add.at(b, 2 * pv + 1, -(ii - di_vr * vr - di_vi * vi - di_dq * qk))

            mrow = 2 * self.n + np.arange(self.npv)
            clamped = np.zeros(self.npv, dtype=bool)
            if clamps:
                for k, pp in enumerate(pv):
                    bus_id = self.buses[int(pp)].id
                    if bus_id in clamps:
                        clamped[k] = True
                        rows.append(np.array([mrow[k]]))
                        cols.append(np.array([qcols[k]]))
                        vals.append(np.array([1.0]))
                        b[mrow[k]] = clamps[bus_id]
            free = ~clamped
            if np.any(free):
                rows.append(np.concatenate([mrow[free], mrow[free]]))
                cols.append(np.concatenate([2 * pv[free], 2 * pv[free] + 1]))
                vals.append(np.concatenate([2 * vr[free], 2 * vi[free]]))
                b[mrow[free]] = self.pv_vset[free] ** 2 + vr[free] ** 2 + vi[free] ** 2

        A = sp.csc_matrix(
            (np.concatenate(vals),
             (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.nx, self.nx))
        return A, b

    # ---- derived quantities ---------------------------------------------

    def branch_flows(self, state: SplitCircuitState) -> tuple[np.ndarray, np.ndarray]:
        """Complex apparent power entering each in-service branch from its
        two terminals (pu)."""
        v = state.voltage()
        vf, vt = v[self.br_f], v[self.br_t]
        i_f = self.yff * vf + self.yft * vt
        i_t = self.ytf * vf + self.ytt * vt
        return vf * np.conj(i_f), vt * np.conj(i_t)

    def slack_power(self, state: SplitCircuitState) -> complex:
        """Net complex power injected by the slack source."""
        if state.i_slack is None:
            isl = self._consistent_slack_current(state, None)
        else:
            isl = state.i_slack
        v = complex(state.v_real[self.slack], state.v_imag[self.slack])
        return v * complex(isl[0], -isl[1])


# ---- element-level operations (reference path, exercised by the tests) ----


def load_current(v_real: float, v_imag: float, p: float, q: float
                 ) -> tuple[float, float]:
    """Real/imaginary current drawn by a constant-PQ device at the given
    bus voltage; equals the split form of conj((p + jq) / V)."""
    d2 = v_real * v_real + v_imag * v_imag
    if d2 == 0.0:
        raise SingularPointError("zero bus voltage")
    return ((p * v_real + q * v_imag) / d2,
            (p * v_imag - q * v_real) / d2)


def _pq_partials(vr, vi, p, q):
    """Currents and their voltage partials for constant-PQ injection."""
    d2 = vr * vr + vi * vi
    if np.any(d2 == 0.0):
        raise SingularPointError("zero bus voltage")
    d4 = d2 * d2
    ir = (p * vr + q * vi) / d2
    ii = (p * vi - q * vr) / d2
    diff = vr * vr - vi * vi
    cross = 2.0 * vr * vi
    dr_vr = -(p * diff + q * cross) / d4
    dr_vi = (q * diff - p * cross) / d4
    di_vr = dr_vi
    di_vi = -dr_vr
    return ir, ii, dr_vr, dr_vi, di_vr, di_vi


@dataclass
class StampAccumulator:
    """Explicit triplet/right-hand-side accumulator for element stamps.

    The vectorized CaseIndex.assemble() is the fast path; this accumulator
    plus the stamp_* functions below build the identical system one element
    at a time and back the element-level tests.
    """
    index: CaseIndex
    rows: list = field(default_factory=list)
    cols: list = field(default_factory=list)
    vals: list = field(default_factory=list)
    rhs: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.rhs is None:
            self.rhs = np.zeros(self.index.nx)

    def add(self, row: int, col: int, val: float) -> None:
        if not (0 <= row < self.index.nx and 0 <= col < self.index.nx):
            raise GridError(f"stamp ({row},{col}) outside system of {self.index.nx}")
        self.rows.append(row)
        self.cols.append(col)
        self.vals.append(val)

    def add_rhs(self, row: int, val: float) -> None:
        self.rhs[row] += val

    def to_system(self) -> tuple[sp.csc_matrix, np.ndarray]:
        A = sp.csc_matrix((self.vals, (self.rows, self.cols)),
                          shape=(self.index.nx, self.index.nx))
        return A, self.rhs.copy()


def stamp_pq_load(acc: StampAccumulator, load: Load, state: SplitCircuitState) -> None:
    """Linearized constant-PQ load: four conductance/coupling partials plus
    the two history current sources."""
    idx = acc.index
    i = idx.pos[load.bus]
    vr, vi = state.v_real[i], state.v_imag[i]
    ir, ii, dr_vr, dr_vi, di_vr, di_vi = _pq_partials(
        np.float64(vr), np.float64(vi), load.p_nom, load.q_nom)
    r_r, r_i = 2 * i, 2 * i + 1
    acc.add(r_r, idx.col_vr(i), float(dr_vr))
    acc.add(r_r, idx.col_vi(i), float(dr_vi))
    acc.add(r_i, idx.col_vr(i), float(di_vr))
    acc.add(r_i, idx.col_vi(i), float(di_vi))
    acc.add_rhs(r_r, float(-(ir - dr_vr * vr - dr_vi * vi)))
    acc.add_rhs(r_i, float(-(ii - di_vr * vr - di_vi * vi)))


def _stamp_pv_injection(acc: StampAccumulator, gen: Generator,
                        state: SplitCircuitState) -> None:
    """KCL-row part of the PV stamp: linearized injection with Q partials."""
    idx = acc.index
    i = idx.pos[gen.bus]
    k = int(np.nonzero(idx.pv == i)[0][0])
    vr, vi = state.v_real[i], state.v_imag[i]
    qk = state.q_gen[k]
    ir, ii, dr_vr, dr_vi, di_vr, di_vi = _pq_partials(
        np.float64(vr), np.float64(vi), -gen.p_set, -qk)
    d2 = vr * vr + vi * vi
    dr_dq = -vi / d2
    di_dq = vr / d2
    r_r, r_i = 2 * i, 2 * i + 1
    qcol = idx.col_q(i)
    acc.add(r_r, idx.col_vr(i), float(dr_vr))
    acc.add(r_r, idx.col_vi(i), float(dr_vi))
    acc.add(r_i, idx.col_vr(i), float(di_vr))
    acc.add(r_i, idx.col_vi(i), float(di_vi))
    acc.add(r_r, qcol, dr_dq)
    acc.add(r_i, qcol, di_dq)
    acc.add_rhs(r_r, float(-(ir - dr_vr * vr - dr_vi * vi - dr_dq * qk)))
    acc.add_rhs(r_i, float(-(ii - di_vr * vr - di_vi * vi - di_dq * qk)))


def stamp_pv_generator(acc: StampAccumulator, gen: Generator,
                       state: SplitCircuitState) -> None:
    """Linearized PV-bus injection (generation enters the bus) with Q as an
    unknown, plus the linearized voltage-magnitude constraint row.

    Expects the bus's aggregate generator record; the magnitude target is the
    bus v_set.
    """
    idx = acc.index
    i = idx.pos[gen.bus]
    k = int(np.nonzero(idx.pv == i)[0][0])
    _stamp_pv_injection(acc, gen, state)
    vr, vi = state.v_real[i], state.v_imag[i]
    vset = idx.pv_vset[k]
    mrow = 2 * idx.n + k
    acc.add(mrow, idx.col_vr(i), 2.0 * vr)
    acc.add(mrow, idx.col_vi(i), 2.0 * vi)
    acc.add_rhs(mrow, vset * vset + vr * vr + vi * vi)


def stamp_branch(acc: StampAccumulator, branch) -> None:
    """Linear pi-model stamp: the split real/imaginary conductance blocks of
    the branch's 2x2 complex admittance.  Out-of-service branches stamp
    nothing."""
    if not branch.status:
        return
    idx = acc.index
    if branch.r == 0.0 and branch.x == 0.0:
        raise GridError(f"branch {branch.from_bus}-{branch.to_bus} "
                        "has zero series impedance")
    f, t = idx.pos[branch.from_bus], idx.pos[branch.to_bus]
    ys = 1.0 / complex(branch.r, branch.x)
    tp = branch.tap * np.exp(1j * branch.shift)
    yff = (ys + 0.5j * branch.b) / (branch.tap ** 2)
    yft = -ys / np.conj(tp)
    ytf = -ys / tp
    ytt = ys + 0.5j * branch.b

    for rb, cb, y in ((f, f, yff), (f, t, yft), (t, f, ytf), (t, t, ytt)):
        acc.add(2 * rb, 2 * cb, y.real)
        acc.add(2 * rb, 2 * cb + 1, -y.imag)
        acc.add(2 * rb + 1, 2 * cb, y.imag)
        acc.add(2 * rb + 1, 2 * cb + 1, y.real)


def stamp_shunt(acc: StampAccumulator, bus: Bus) -> None:
    """Fixed-admittance bus shunt as linear conductance/susceptance blocks."""
    if bus.gs == 0.0 and bus.bs == 0.0:
        return
    i = acc.index.pos[bus.id]
    acc.add(2 * i, 2 * i, bus.gs)
    acc.add(2 * i, 2 * i + 1, -bus.bs)
    acc.add(2 * i + 1, 2 * i, bus.bs)
    acc.add(2 * i + 1, 2 * i + 1, bus.gs)


def stamp_slack(acc: StampAccumulator, bus: Bus) -> None:
    """Pin the slack voltage through two constraint rows and expose the
    source currents as auxiliary unknowns entering the slack KCL rows."""
    if bus.kind is not BusKind.SLACK:
        raise GridError(f"bus {bus.id} is not the slack bus")
    idx = acc.index
    s = idx.pos[bus.id]
    acc.add(2 * s, idx.col_slack_ir, -1.0)
    acc.add(2 * s + 1, idx.col_slack_ii, -1.0)
    pin_r, pin_i = idx.col_slack_ir, idx.col_slack_ii
    acc.add(pin_r, idx.col_vr(s), 1.0)
    acc.add(pin_i, idx.col_vi(s), 1.0)
    acc.add_rhs(pin_r, bus.v_set * math.cos(bus.angle_set))
    acc.add_rhs(pin_i, bus.v_set * math.sin(bus.angle_set))


def assemble_by_elements(index: CaseIndex, state: SplitCircuitState,
                         clamps: dict[int, float] | None = None
                         ) -> tuple[sp.csc_matrix, np.ndarray]:
    """Build the full system through the element-level stamps; the slow
    reference path used to cross-check CaseIndex.assemble()."""
    acc = StampAccumulator(index)
    case = index.case
    for br in case.branches:
        stamp_branch(acc, br)
    for b in index.buses:
        stamp_shunt(acc, b)
        if b.kind is BusKind.SLACK:
            stamp_slack(acc, b)
    for i, ld in sorted(enumerate(case.loads), key=lambda t: (t[1].bus, t[0])):
        stamp_pq_load(acc, ld, state)
    for k, p in enumerate(index.pv):
        bus = index.buses[int(p)]
        agg = Generator(bus=bus.id, p_set=index.pv_p[k], v_set=index.pv_vset[k],
                        q_min=index.pv_qmin[k], q_max=index.pv_qmax[k])
        if clamps and bus.id in clamps:
            # injection rows keep Q as a variable; the magnitude row pins it
            _stamp_pv_injection(acc, agg, state)
            acc.add(2 * index.n + k, index.col_q(int(p)), 1.0)
            acc.add_rhs(2 * index.n + k, clamps[bus.id])
        else:
            stamp_pv_generator(acc, agg, state)
    return acc.to_system()


def residual(case: NetworkCase, state: SplitCircuitState,
             clamps: dict[int, float] | None = None) -> np.ndarray:
    """Convenience wrapper over CaseIndex.residual for one-shot calls."""
    return CaseIndex(case).residual(state, clamps)


def remap_state(src: CaseIndex, state: SplitCircuitState,
                dst: CaseIndex) -> SplitCircuitState:
    """Carry a solved state onto a modified topology, matching buses by id.

    Voltages copy over wherever the bus still exists; Q unknowns copy for
    buses that stay PV and fall back to the flat-start midpoint otherwise.
    Slack currents are left to be recomputed.
    """
    out = dst.flat_start()
    for bid, i in dst.pos.items():
        j = src.pos.get(bid)
        if j is not None:
            out.v_real[i] = state.v_real[j]
            out.v_imag[i] = state.v_imag[j]
    src_q = {src.buses[int(p)].id: k for k, p in enumerate(src.pv)}
    for k, p in enumerate(dst.pv):
        j = src_q.get(dst.buses[int(p)].id)
        if j is not None:
            out.q_gen[k] = state.q_gen[j]
    return out


def write_matrix_market(path, A: sp.spmatrix, comment: str = "") -> None:
    """Debug dump of an assembled system in Matrix Market coordinate form."""
    from scipy.io import mmwrite
    mmwrite(path, A.tocoo(), comment=comment)
