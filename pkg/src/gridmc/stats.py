"""Confidence intervals for binary outcome probabilities and empirical PDFs.

The interval half-width for an estimated probability p_hat over n samples is
z * sqrt(p_hat (1 - p_hat) / n) with z fixed at 1.96 (95%) or 2.58 (99%).
When the event was never observed the central-limit interval degenerates, so
the upper bound switches to 3/n (95%) or 4.605/n (99%); an always-observed
event mirrors that bound around 1.  Interval ends are clamped to [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .network import GridError

Z_VALUE = {95: 1.96, 99: 2.58}
ZERO_EVENT_BOUND = {95: 3.0, 99: 4.605}

# below this sample count the zero-event bound's large-n derivation is shaky
SMALL_SAMPLE_N = 100


@dataclass(frozen=True)
class BinaryEstimate:
    p_hat: float
    n: int
    sigma_hat: float

    @classmethod
    def from_counts(cls, successes: int, n: int) -> "BinaryEstimate":
        p = successes / n
        return cls(p, n, math.sqrt(p * (1.0 - p) / n))


@dataclass(frozen=True)
class ConfInterval:
    lower: float
    upper: float
    level: int                  # 95 or 99
    kind: str                   # "clt" or "zero_event"

    @property
    def half_width(self) -> float:
        return 0.5 * (self.upper - self.lower)


def ci_binary(successes: int, n: int, level: int = 99) -> ConfInterval:
    """Confidence interval for a binary outcome probability.

    successes == 0 and successes == n use the zero-event bound (mirrored in
    the latter case); anything else is the central-limit interval.
    """
    if not 0 <= successes <= n:
        raise GridError(f"successes {successes} outside [0, {n}]")
    if n < 1:
        raise GridError("need at least one sample")
    if level not in Z_VALUE:
        raise GridError(f"confidence level must be one of {sorted(Z_VALUE)}")
    if successes == 0:
        return ConfInterval(0.0, min(ZERO_EVENT_BOUND[level] / n, 1.0),
                            level, "zero_event")
    if successes == n:
        return ConfInterval(max(1.0 - ZERO_EVENT_BOUND[level] / n, 0.0), 1.0,
                            level, "zero_event")
    est = BinaryEstimate.from_counts(successes, n)
    hw = Z_VALUE[level] * est.sigma_hat
    return ConfInterval(max(est.p_hat - hw, 0.0), min(est.p_hat + hw, 1.0),
                        level, "clt")


def ci_boundary_triplet(successes: int, n: int, level: int = 99
                        ) -> tuple[float, float, float]:
    """(lower, point estimate, upper) with the lower end clamped at zero,
    the three-number form used to report near-boundary probabilities."""
    ci = ci_binary(successes, n, level)
    return ci.lower, successes / n, ci.upper


@dataclass(frozen=True)
class Histogram:
    """Shared-bin empirical densities split by class label.

    Each class density integrates to that class's fraction of the pooled
    sample, so the per-class curves stack to the accumulated density, which
    integrates to one.
    """
    edges: np.ndarray
    counts: dict[str, np.ndarray]
    n_total: int

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def density(self, label: str) -> np.ndarray:
        return self.counts[label] / (self.n_total * self.widths)

    def total_counts(self) -> np.ndarray:
        out = np.zeros(len(self.edges) - 1)
        for c in self.counts.values():
            out = out + c
        return out

    def total_density(self) -> np.ndarray:
        return self.total_counts() / (self.n_total * self.widths)


def histogram(values, class_labels, bins=None) -> Histogram:
    """Bin `values` with edges shared across classes.

    `bins` may be an explicit edge array or a count; left None the
    Freedman-Diaconis rule over the pooled values picks the width.
    """
    vals = np.asarray(values, dtype=float)
    labels = list(class_labels)
    if len(vals) != len(labels):
        raise GridError(f"{len(vals)} values vs {len(labels)} labels")
    if len(vals) == 0:
        return Histogram(np.empty(0), {}, 0)
    if bins is None:
        edges = np.histogram_bin_edges(vals, bins="fd")
    elif np.isscalar(bins):
        edges = np.histogram_bin_edges(vals, bins=int(bins))
    else:
        edges = np.asarray(bins, dtype=float)
    counts: dict[str, np.ndarray] = {}
    uniq = sorted(set(labels))
    arr_labels = np.asarray(labels)
    for lab in uniq:
        sel = vals[arr_labels == lab]
        counts[lab], _ = np.histogram(sel, bins=edges)
    return Histogram(edges, counts, len(vals))
