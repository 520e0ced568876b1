"""Simple random sampling Monte Carlo engine over the power-flow pipeline.

A study solves the deterministic base case once, then evaluates samples:
perturb the loads, solve robustly warm-started from the base solution,
enforce reactive limits, classify.  Per-sample random streams are derived
from (seed, sample index), so reports are bit-identical for any worker
count.  The study stops at the sample cap or when the tracked outcome's
confidence interval is tight enough, checked every `check_every` samples.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtri

from . import rng as _rng
from .circuit import CaseIndex, SplitCircuitState
from .network import GridError, Load, NetworkCase, validate
from .solver import (Classification, LimitSpec, OperatingClass, PFSolution,
                     SolverOptions, classify, robust_solve)
from .stats import SMALL_SAMPLE_N, ConfInterval, Histogram, ci_binary, histogram

CLASS_ORDER = (OperatingClass.NORMAL, OperatingClass.VOLTAGE_COLLAPSE,
               OperatingClass.ANGULAR_UNSTABLE,
               OperatingClass.VOLTAGE_BAND_VIOLATION,
               OperatingClass.BRANCH_OVERLOAD)


class ConfigError(GridError):
    """Invalid study configuration or base case."""


@dataclass(frozen=True)
class UncertaintySpec:
    """How load P and Q are perturbed around their nominals.

    distribution "normal": independent draws with sigma = pct% of |nominal|;
    "uniform": draws on nominal * (1 +/- pct%).  buses=None perturbs every
    load, otherwise only loads at the listed buses.
    """
    distribution: str
    pct: float
    buses: tuple[int, ...] | None = None


@dataclass(frozen=True)
class ProbeSpec:
    """A recorded per-sample quantity: branch angle difference (radians)
    or bus voltage magnitude (pu)."""
    kind: str                   # "branch_angle" | "bus_voltage"
    bus_a: int
    bus_b: int = 0

    @property
    def label(self) -> str:
        if self.kind == "branch_angle":
            return f"angle:{self.bus_a}-{self.bus_b}"
        return f"voltage:{self.bus_a}"


@dataclass(frozen=True)
class CITarget:
    outcome: OperatingClass
    level: int                  # 95 or 99
    half_width: float


@dataclass(frozen=True)
class StudyConfig:
    max_samples: int
    seed: int
    workers: int = 1
    ci_target: CITarget | None = None
    probes: tuple[ProbeSpec, ...] = ()
    check_every: int = 100


@dataclass(frozen=True)
class SampleResult:
    index: int
    outcome: OperatingClass
    used_tx_stepping: bool
    iterations: int
    probe_values: tuple[float, ...] | None   # None iff not converged


@dataclass
class StudyReport:
    name: str
    n: int
    stop_reason: str            # "max_samples" | "ci_target" | "base_infeasible"
    counts: dict[OperatingClass, int]
    base: PFSolution | None
    samples: list[SampleResult]
    histograms: list[tuple[ProbeSpec, Histogram]]
    config: StudyConfig
    uncertainty: UncertaintySpec
    solver_options: SolverOptions
    limits: LimitSpec
    base_feasible: bool = True
    target_met_n: int | None = None
    diagnostic: str = ""

    def p_hat(self, outcome: OperatingClass) -> float:
        if self.n == 0:
            return 1.0 if outcome is OperatingClass.VOLTAGE_COLLAPSE else 0.0
        return self.counts[outcome] / self.n

    def ci(self, outcome: OperatingClass, level: int) -> ConfInterval:
        if self.n == 0:
            # no samples carry no information; vacuous zero-event-style bound
            return ConfInterval(0.0, 1.0, level, "zero_event")
        return ci_binary(self.counts[outcome], self.n, level)

    # ---- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        classes = {}
        for oc in CLASS_ORDER:
            c95, c99 = self.ci(oc, 95), self.ci(oc, 99)
            classes[oc.value] = {
                "count": int(self.counts[oc]),
                "p_hat": float(self.p_hat(oc)),
                "ci95": {"lower": float(c95.lower), "upper": float(c95.upper),
                         "kind": c95.kind},
                "ci99": {"lower": float(c99.lower), "upper": float(c99.upper),
                         "kind": c99.kind},
            }
        hists = []
        for probe, h in self.histograms:
            hists.append({
                "probe": probe.label,
                "edges": [float(e) for e in h.edges],
                "counts": {lab: [int(c) for c in arr]
                           for lab, arr in sorted(h.counts.items())},
                "n_total": int(h.n_total),
            })
        base = None
        if self.base is not None:
            base = {
                "converged": bool(self.base.converged),
                "iterations": int(self.base.iterations),
                "used_tx_stepping": bool(self.base.used_tx_stepping),
                "q_limit_switches": [{"bus": s.bus, "side": s.side}
                                     for s in self.base.q_limit_switches],
            }
        tgt = None
        if self.config.ci_target is not None:
            t = self.config.ci_target
            tgt = {"outcome": t.outcome.value, "level": t.level,
                   "half_width": float(t.half_width)}
        return {
            "name": self.name,
            "n": int(self.n),
            "stop_reason": self.stop_reason,
            "base_feasible": bool(self.base_feasible),
            "target_met_n": self.target_met_n,
            "small_sample_warning": bool(0 < self.n < SMALL_SAMPLE_N),
            "diagnostic": self.diagnostic,
            "classes": classes,
            "histograms": hists,
            "base": base,
            "config": {
                "seed": int(self.config.seed),
                "max_samples": int(self.config.max_samples),
                "check_every": int(self.config.check_every),
                "ci_target": tgt,
                "probes": [p.label for p in self.config.probes],
                "uncertainty": {
                    "distribution": self.uncertainty.distribution,
                    "pct": float(self.uncertainty.pct),
                    "buses": (None if self.uncertainty.buses is None
                              else [int(b) for b in self.uncertainty.buses]),
                },
                "solver": {
                    "tol": self.solver_options.tol,
                    "max_iter": self.solver_options.max_iter,
                    "v_limit_delta": self.solver_options.v_limit_delta,
                    "tx_steps": self.solver_options.tx_steps,
                    "tx_g_init": self.solver_options.tx_g_init,
                    "tx_schedule": self.solver_options.tx_schedule,
                    "use_tx_stepping": self.solver_options.use_tx_stepping,
                    "q_limit_rounds": self.solver_options.q_limit_rounds,
                },
                "limits": {
                    "angle_max": self.limits.angle_max,
                    "enforce_v_band": self.limits.enforce_v_band,
                    "enforce_branch_rating": self.limits.enforce_branch_rating,
                },
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_text(self) -> str:
        out = [f"study: {self.name}  n={self.n}  stop={self.stop_reason}"]
        if not self.base_feasible:
            out.append(f"BASE CASE INFEASIBLE: {self.diagnostic}")
        if 0 < self.n < SMALL_SAMPLE_N:
            out.append(f"warning: n < {SMALL_SAMPLE_N}, zero-event bounds "
                       "are asymptotic")
        hdr = (f"{'class':<24}{'count':>8}{'p_hat %':>10}"
               f"{'ci95 %':>20}{'ci99 %':>20}")
        out.append(hdr)
        for oc in CLASS_ORDER:
            c95, c99 = self.ci(oc, 95), self.ci(oc, 99)
            out.append(
                f"{oc.value:<24}{self.counts[oc]:>8}"
                f"{100 * self.p_hat(oc):>10.3f}"
                f"{f'[{100 * c95.lower:.3f}, {100 * c95.upper:.3f}]':>20}"
                f"{f'[{100 * c99.lower:.3f}, {100 * c99.upper:.3f}]':>20}")
        return "\n".join(out) + "\n"

    def ledger_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        probe_cols = [p.label for p in self.config.probes]
        w.writerow(["index", "outcome", "used_tx_stepping", "iterations",
                    *probe_cols])
        for s in self.samples:
            probes = (["" for _ in probe_cols] if s.probe_values is None
                      else [format(v, ".17g") for v in s.probe_values])
            w.writerow([s.index, s.outcome.value, int(s.used_tx_stepping),
                        s.iterations, *probes])
        return buf.getvalue()

    def histograms_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        labels = [oc.value for oc in CLASS_ORDER]
        w.writerow(["probe", "bin_left", "bin_right",
                    *[f"count_{lab}" for lab in labels]])
        for probe, h in self.histograms:
            for i in range(len(h.edges) - 1):
                row = [probe.label, format(h.edges[i], ".17g"),
                       format(h.edges[i + 1], ".17g")]
                for lab in labels:
                    arr = h.counts.get(lab)
                    row.append(int(arr[i]) if arr is not None else 0)
                w.writerow(row)
        return buf.getvalue()


def validate_uncertainty(case: NetworkCase, spec: UncertaintySpec) -> None:
    if spec.distribution not in ("normal", "uniform"):
        raise ConfigError(f"unknown distribution '{spec.distribution}'")
    if not spec.pct > 0:
        raise ConfigError(f"perturbation width must be positive, got {spec.pct}")
    if spec.buses is not None:
        if len(spec.buses) == 0:
            raise ConfigError("bus scope list is empty")
        have = {ld.bus for ld in case.loads}
        missing = sorted(set(spec.buses) - have)
        if missing:
            raise ConfigError(f"scope buses without loads: {missing}")


def sample_loads(case: NetworkCase, spec: UncertaintySpec, rng) -> NetworkCase:
    """One perturbed copy of the case.

    Draws are consumed in fixed case order (ascending bus id, then load
    record ordinal; P before Q for each load), so a sample's loads depend
    only on its stream, never on scheduling.
    """
    order = sorted(range(len(case.loads)),
                   key=lambda i: (case.loads[i].bus, i))
    scope = None if spec.buses is None else set(spec.buses)
    targets = [i for i in order if scope is None or case.loads[i].bus in scope]
    if not targets:
        return case
    if spec.distribution == "normal":
        draws = rng.normals(2 * len(targets))
    else:
        draws = 2.0 * rng.uniforms(2 * len(targets)) - 1.0
    width = spec.pct / 100.0

    new_loads = list(case.loads)
    for j, i in enumerate(targets):
        ld = case.loads[i]
        dp, dq = draws[2 * j], draws[2 * j + 1]
        if spec.distribution == "normal":
            p = ld.p_nom + width * abs(ld.p_nom) * dp
            q = ld.q_nom + width * abs(ld.q_nom) * dq
        else:
            p = ld.p_nom * (1.0 + width * dp)
            q = ld.q_nom * (1.0 + width * dq)
        new_loads[i] = Load(bus=ld.bus, p_nom=p, q_nom=q)
    return replace(case, loads=tuple(new_loads))


class _ArrayStream:
    """Random stream view backed by a pre-generated block of uniforms, with
    a transparent hand-off to the real generator if a consumer overdraws."""

    __slots__ = ("_u", "_pos", "_seed", "_index", "_tail")

    def __init__(self, seed: int, index: int, uniforms_row: np.ndarray):
        self._u = uniforms_row
        self._pos = 0
        self._seed = seed
        self._index = index
        self._tail = None

    def uniforms(self, count: int) -> np.ndarray:
        take = min(count, len(self._u) - self._pos)
        head = self._u[self._pos:self._pos + take]
        self._pos += take
        if take == count:
            return head
        if self._tail is None:
            self._tail = _rng.rng_for_sample(self._seed, self._index)
            self._tail.skip(len(self._u))
        return np.concatenate([head, self._tail.uniforms(count - take)])

    def normals(self, count: int) -> np.ndarray:
        return ndtri(self.uniforms(count))


def _scope_size(case: NetworkCase, spec: UncertaintySpec) -> int:
    scope = None if spec.buses is None else set(spec.buses)
    return sum(1 for ld in case.loads if scope is None or ld.bus in scope)


def _probe_extractor(index: CaseIndex, probes: tuple[ProbeSpec, ...]):
    plans = []
    for p in probes:
        if p.kind == "branch_angle":
            if p.bus_a not in index.pos or p.bus_b not in index.pos:
                raise ConfigError(f"probe references unknown bus: {p.label}")
            plans.append(("a", index.pos[p.bus_a], index.pos[p.bus_b]))
        elif p.kind == "bus_voltage":
            if p.bus_a not in index.pos:
                raise ConfigError(f"probe references unknown bus: {p.label}")
            plans.append(("v", index.pos[p.bus_a], 0))
        else:
            raise ConfigError(f"unknown probe kind '{p.kind}'")

    def extract(state: SplitCircuitState) -> tuple[float, ...]:
        out = []
        for kind, a, b in plans:
            if kind == "a":
                da = (np.arctan2(state.v_imag[a], state.v_real[a])
                      - np.arctan2(state.v_imag[b], state.v_real[b]))
                da = (da + np.pi) % (2.0 * np.pi) - np.pi
                out.append(float(da))
            else:
                out.append(float(np.hypot(state.v_real[a], state.v_imag[a])))
        return tuple(out)

    return extract


def run_study(case: NetworkCase, spec: UncertaintySpec, config: StudyConfig,
              opts: SolverOptions | None = None,
              limits: LimitSpec | None = None,
              *, evaluate=None,
              base_warm_start: SplitCircuitState | None = None) -> StudyReport:
    """Run one Monte Carlo study and aggregate the report.

    `evaluate` substitutes the per-sample pipeline (called as
    evaluate(sample_index, stream) -> SampleResult); the default perturbs,
    solves, and classifies.  The report depends only on (case, spec, config,
    solver options, limits), not on worker count.
    """
    opts = opts or SolverOptions()
    limits = limits or LimitSpec()
    problems = validate(case)
    if problems:
        raise ConfigError("invalid base case: "
                          + "; ".join(str(p) for p in problems))
    validate_uncertainty(case, spec)
    if config.max_samples < 1:
        raise ConfigError("max_samples must be at least 1")
    if config.ci_target is not None and not config.ci_target.half_width > 0:
        raise ConfigError("ci_target half-width must be positive")

    index = CaseIndex(case)
    base = robust_solve(index, base_warm_start, opts)
    if not base.converged:
        counts = {oc: 0 for oc in CLASS_ORDER}
        return StudyReport(
            name=case.name, n=0, stop_reason="base_infeasible", counts=counts,
            base=base, samples=[], histograms=[], config=config,
            uncertainty=spec, solver_options=opts, limits=limits,
            base_feasible=False,
            diagnostic=f"base case did not converge: {base.diagnostic}")

    extract = _probe_extractor(index, config.probes)
    draws = max(2 * _scope_size(case, spec), 1)

    if evaluate is None:
        base_state = base.state

        def evaluate(i: int, stream) -> SampleResult:
            perturbed = sample_loads(case, spec, stream)
            pidx = CaseIndex(perturbed)
            sol = robust_solve(pidx, base_state, opts)
            cls = classify(pidx, sol, limits)
            vals = extract(sol.state) if sol.converged else None
            return SampleResult(i, cls.label, sol.used_tx_stepping,
                                sol.iterations, vals)

    counts = {oc: 0 for oc in CLASS_ORDER}
    samples: list[SampleResult] = []
    stop_reason = "max_samples"
    target_met_n: int | None = None
    pool = (ThreadPoolExecutor(max_workers=config.workers)
            if config.workers > 1 else None)
    # Without a CI target there is nothing to check between chunks, so take
    # the whole run in one batch; cap the pre-generated draw block at ~32 MB.
    if config.ci_target is None:
        chunk_cap = config.max_samples
    else:
        chunk_cap = config.check_every
    chunk_cap = max(1, min(chunk_cap, (4 << 20) // max(draws, 1)))

    try:
        done = 0
        while done < config.max_samples:
            chunk = min(chunk_cap, config.max_samples - done)
            idxs = range(done, done + chunk)
            block = _rng.bulk_uniforms(config.seed, idxs, draws)
            streams = [_ArrayStream(config.seed, i, block[j])
                       for j, i in enumerate(idxs)]
            if pool is not None:
                results = list(pool.map(evaluate, idxs, streams))
            else:
                results = [evaluate(i, s) for i, s in zip(idxs, streams)]
            for r in results:
                counts[r.outcome] += 1
            samples.extend(results)
            done += chunk
            if config.ci_target is not None and target_met_n is None:
                t = config.ci_target
                ci = ci_binary(counts[t.outcome], done, t.level)
                if ci.half_width <= t.half_width:
                    target_met_n = done
                    stop_reason = "ci_target"
                    break
    finally:
        if pool is not None:
            pool.shutdown()

    samples.sort(key=lambda s: s.index)
    hists: list[tuple[ProbeSpec, Histogram]] = []
    if config.probes:
        feasible = [s for s in samples if s.probe_values is not None]
        for k, probe in enumerate(config.probes):
            vals = [s.probe_values[k] for s in feasible]
            labels = [s.outcome.value for s in feasible]
            hists.append((probe, histogram(vals, labels)))

    return StudyReport(
        name=case.name, n=len(samples), stop_reason=stop_reason,
        counts=counts, base=base, samples=samples, histograms=hists,
        config=config, uncertainty=spec, solver_options=opts, limits=limits,
        target_met_n=target_met_n)
