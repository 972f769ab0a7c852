"""One-sided Wilcoxon signed-rank tests and pairwise monitor comparison matrices.

The one-sided p-value answers "is a systematically larger than b across
scenarios". Zero differences are dropped (classic zero-handling), |d| is
ranked with average ranks on ties, and the statistic is the rank sum of
the positive differences. Up to n = 25 the p-value is exact, from a
subset-sum count over all sign assignments (ranks are doubled first so
tied average ranks stay integral); beyond that a normal approximation
with tie-corrected variance and 0.5 continuity correction takes over.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .evaluation import EvalReport, EvalSetting

EXACT_MAX_N = 25
SIGNIFICANCE_LEVEL = 0.05
COMPARISON_METRICS = ("recall", "precision")


def _signed_ranks(diffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Average ranks of |d| plus the tie-group sizes."""
    abs_d = np.abs(diffs)
    order = np.argsort(abs_d, kind="stable")
    ranks = np.empty(len(diffs))
    tie_sizes = []
    i = 0
    while i < len(diffs):
        j = i
        while j + 1 < len(diffs) and abs_d[order[j + 1]] == abs_d[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # 1-based average rank
        tie_sizes.append(j - i + 1)
        i = j + 1
    return ranks, np.asarray(tie_sizes)


def _exact_p_at_least(w_plus: float, ranks: np.ndarray) -> float:
    """P(W >= w_plus) under the null, by counting subset rank-sums exactly."""
    doubled = np.rint(2.0 * ranks).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled:
        counts[r:] = counts[r:] + counts[:-r]
    target = int(math.ceil(round(2.0 * w_plus, 6)))
    favorable = int(counts[target:].sum())
    return favorable / float(2 ** len(ranks))


def _approx_p_at_least(w_plus: float, n: int, tie_sizes: np.ndarray) -> float:
    mean = n * (n + 1) / 4.0
    tie_term = float(((tie_sizes**3) - tie_sizes).sum()) / 48.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    if var <= 0:
        return math.nan
    z = (w_plus - 0.5 - mean) / math.sqrt(var)
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def wilcoxon_one_sided(values_a, values_b) -> float:
    """One-sided p-value for "a > b" over paired samples; NaN when every pair ties."""
    a = np.asarray(values_a, dtype=np.float64)
    b = np.asarray(values_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise UsageError("paired samples must be equal-length 1-D vectors")
    if a.size == 0:
        raise UsageError("paired samples must contain at least one pair")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise UsageError("paired samples must be finite")

    diffs = a - b
    diffs = diffs[diffs != 0.0]
    n = diffs.size
    if n == 0:
        return math.nan
    ranks, tie_sizes = _signed_ranks(diffs)
    w_plus = float(ranks[diffs > 0].sum())
    if n <= EXACT_MAX_N:
        return _exact_p_at_least(w_plus, ranks)
    return _approx_p_at_least(w_plus, n, tie_sizes)


# ----------------------------------------------------------------- comparison


@dataclass(frozen=True, eq=False)
class ComparisonMatrix:
    """Pairwise one-sided p-values: cell (i, j) tests "monitor i > monitor j"."""

    monitors: tuple[str, ...]
    metric: str
    setting: EvalSetting
    p_values: np.ndarray
    alpha: float = SIGNIFICANCE_LEVEL

    def color(self, i: int, j: int) -> str:
        if i == j:
            return "white"
        if self.p_values[i, j] <= self.alpha:
            return "green"
        if self.p_values[j, i] <= self.alpha:
            return "red"
        return "white"

    def to_csv(self) -> str:
        lines = ["monitor," + ",".join(self.monitors)]
        for i, row_name in enumerate(self.monitors):
            cells = []
            for j in range(len(self.monitors)):
                p = self.p_values[i, j]
                cells.append("" if math.isnan(p) else repr(float(p)))
            lines.append(row_name + "," + ",".join(cells))
        return "\n".join(lines) + "\n"

    def to_markdown(self) -> str:
        head = f"Pairwise Wilcoxon ({self.setting.value} {self.metric}): row > column, alpha = {self.alpha}"
        lines = [
            head,
            "",
            "| | " + " | ".join(self.monitors) + " |",
            "|" + "---|" * (len(self.monitors) + 1),
        ]
        for i, row_name in enumerate(self.monitors):
            cells = []
            for j in range(len(self.monitors)):
                p = self.p_values[i, j]
                if math.isnan(p):
                    cells.append("-")
                else:
                    marker = {"green": " (G)", "red": " (R)", "white": ""}[self.color(i, j)]
                    cells.append(f"{p:.4g}{marker}")
            lines.append("| " + row_name + " | " + " | ".join(cells) + " |")
        lines.append("")
        lines.append("(G) row significantly better than column, (R) column better than row.")
        return "\n".join(lines) + "\n"


def comparison_matrix(
    reports: list[EvalReport], metric: str, setting: EvalSetting
) -> ComparisonMatrix:
    """Build the pairwise matrix from per-(scenario, monitor) reports.

    Every monitor must have exactly one report per scenario for the given
    setting. Scenario pairs where either metric is undefined are excluded
    from that cell's test.
    """
    if metric not in COMPARISON_METRICS:
        raise UsageError(f"metric must be one of {COMPARISON_METRICS}")
    selected = [r for r in reports if r.setting is setting]
    monitors = tuple(sorted({r.monitor for r in selected}))
    scenarios = tuple(sorted({r.scenario for r in selected}))
    if not monitors or not scenarios:
        raise UsageError(f"no reports for setting {setting.value}")

    table: dict[tuple[str, str], float] = {}
    for r in selected:
        key = (r.monitor, r.scenario)
        if key in table:
            raise UsageError(f"duplicate report for monitor {r.monitor!r}, scenario {r.scenario!r}")
        table[key] = r.metric(metric)
    for m in monitors:
        for s in scenarios:
            if (m, s) not in table:
                raise UsageError(f"monitor {m!r} has no report for scenario {s!r}")

    values = {m: np.array([table[(m, s)] for s in scenarios]) for m in monitors}
    size = len(monitors)
    p = np.full((size, size), math.nan)
    for i, mi in enumerate(monitors):
        for j, mj in enumerate(monitors):
            if i == j:
                continue
            ok = np.isfinite(values[mi]) & np.isfinite(values[mj])
            p[i, j] = wilcoxon_one_sided(values[mi][ok], values[mj][ok]) if ok.any() else math.nan
    return ComparisonMatrix(monitors=monitors, metric=metric, setting=setting, p_values=p)
