"""Independent reference computations backing the test suite.

Everything here deliberately avoids the library's own formulation: the power
flow oracle works in polar coordinates on power mismatches (textbook
formulation, dense linear algebra), the admittance matrix is rebuilt from
scratch, and Jacobians come from central finite differences.  Agreement
between these routes and the package is the point of the tests.
"""

from __future__ import annotations

import cmath
import math

import numpy as np

from gridmc.network import BusKind, NetworkCase


def complex_ybus(case: NetworkCase) -> tuple[np.ndarray, list[int]]:
    """Dense complex nodal admittance matrix, MATPOWER branch conventions.

    Returns (Y, bus_ids) with rows ordered by ascending bus id.
    """
    ids = sorted(b.id for b in case.buses)
    pos = {bid: i for i, bid in enumerate(ids)}
    n = len(ids)
    y = np.zeros((n, n), dtype=complex)
    for br in case.branches:
        if not br.status:
            continue
        ys = 1.0 / complex(br.r, br.x)
        t = br.tap * cmath.exp(1j * br.shift)
        f, to = pos[br.from_bus], pos[br.to_bus]
        y[f, f] += (ys + 0.5j * br.b) / (br.tap ** 2)
        y[f, to] += -ys / t.conjugate()
        y[to, f] += -ys / t
        y[to, to] += ys + 0.5j * br.b
    for b in case.buses:
        y[pos[b.id], pos[b.id]] += complex(b.gs, b.bs)
    return y, ids


def real_decomposition(y: np.ndarray) -> np.ndarray:
    """2n x 2n real form of complex I = Y V with (VR, VI) interleaved."""
    n = y.shape[0]
    out = np.zeros((2 * n, 2 * n))
    out[0::2, 0::2] = y.real
    out[0::2, 1::2] = -y.imag
    out[1::2, 0::2] = y.imag
    out[1::2, 1::2] = y.real
    return out


def conj_power_current(v: complex, p: float, q: float) -> tuple[float, float]:
    """Current drawn by a constant-power device, via complex arithmetic."""
    i = (complex(p, q) / v).conjugate()
    return i.real, i.imag


def polar_newton_pf(case: NetworkCase, tol: float = 1e-10, max_iter: int = 40
                    ) -> tuple[np.ndarray, np.ndarray, list[int], bool]:
    """Conventional polar-coordinate Newton power flow on power mismatches.

    No reactive limits, PV magnitudes pinned, dense Jacobian.  Returns
    (vm, va, bus_ids, converged) ordered by ascending bus id.
    """
    y, ids = complex_ybus(case)
    pos = {bid: i for i, bid in enumerate(ids)}
    n = len(ids)
    buses = sorted(case.buses, key=lambda b: b.id)

    p_spec = np.zeros(n)
    q_spec = np.zeros(n)
    for ld in case.loads:
        p_spec[pos[ld.bus]] -= ld.p_nom
        q_spec[pos[ld.bus]] -= ld.q_nom
    for g in case.generators:
        if g.status:
            p_spec[pos[g.bus]] += g.p_set

    slack = next(i for i, b in enumerate(buses) if b.kind is BusKind.SLACK)
    pv = [i for i, b in enumerate(buses) if b.kind is BusKind.PV]
    pq = [i for i, b in enumerate(buses) if b.kind is BusKind.PQ]

    vm = np.ones(n)
    va = np.zeros(n)
    vm[slack] = buses[slack].v_set
    va[slack] = buses[slack].angle_set
    for i in pv:
        vm[i] = buses[i].v_set

    ang_idx = pv + pq          # unknown angles
    mag_idx = pq               # unknown magnitudes

    for _ in range(max_iter):
        v = vm * np.exp(1j * va)
        s = v * np.conj(y @ v)
        dp = p_spec - s.real
        dq = q_spec - s.imag
        mis = np.concatenate([dp[ang_idx], dq[mag_idx]])
        if np.abs(mis).max() < tol:
            return vm, va, ids, True

        # standard polar Jacobian blocks
        dsdva = 1j * np.diag(v) @ (np.diag(np.conj(y @ v)) - np.conj(y) @ np.diag(np.conj(v)))
        dsdvm = (np.diag(v / vm) @ np.diag(np.conj(y @ v))
                 + np.diag(v) @ np.conj(y) @ np.diag(np.conj(v) / vm))
        j11 = dsdva.real[np.ix_(ang_idx, ang_idx)]
        j12 = dsdvm.real[np.ix_(ang_idx, mag_idx)]
        j21 = dsdva.imag[np.ix_(mag_idx, ang_idx)]
        j22 = dsdvm.imag[np.ix_(mag_idx, mag_idx)]
        jac = np.block([[j11, j12], [j21, j22]])
        try:
            dx = np.linalg.solve(jac, mis)
        except np.linalg.LinAlgError:
            return vm, va, ids, False
        va[ang_idx] += dx[:len(ang_idx)]
        vm[mag_idx] += dx[len(ang_idx):]
    return vm, va, ids, False


def fd_jacobian(fun, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian of fun at x."""
    f0 = np.asarray(fun(x))
    jac = np.zeros((len(f0), len(x)))
    for j in range(len(x)):
        xp = x.copy()
        xm = x.copy()
        xp[j] += step
        xm[j] -= step
        jac[:, j] = (np.asarray(fun(xp)) - np.asarray(fun(xm))) / (2.0 * step)
    return jac
