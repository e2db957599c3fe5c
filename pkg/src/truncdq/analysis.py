"""Bias decomposition, bound-scaling diagnostics and sweep summaries."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from truncdq import truth as gt
from truncdq.mdp import ConfigurationError, NonstationaryMdp, dobrushin_coefficient, kernel_deviation

SLOPE_FLOOR = 1e-14
SUMMARY_HEADER = ["estimator", "param_k", "mean", "bias", "mae", "mae_pct", "std", "reps"]
MAE_PCT_NOTE = "mae_pct = 100 * mean_i |estimate_i - tau_i| / |mean_i tau_i| (per-trial truth)"


@dataclass
class BiasDecomposition:
    k: int
    taylor_error: float
    mixing_bias: float
    total_bias: float
    delta: float
    gamma_hat: float

    @property
    def residual(self) -> float:
        return self.total_bias - (self.taylor_error + self.mixing_bias)


def decompose_bias(env: NonstationaryMdp, k: int, gamma_hat: float | None = None) -> BiasDecomposition:
    """Split grad J_k(1/2) - tau into the Taylor error and the mixing bias."""
    grad_k = gt.exact_truncated_gradient(env, k)
    jk1, jk0 = gt.exact_truncated_value(env, 1.0, k), gt.exact_truncated_value(env, 0.0, k)
    j1, j0 = gt.exact_value(env, 1.0), gt.exact_value(env, 0.0)
    if k == env.horizon - 1:
        jk1, jk0 = j1, j0
    return BiasDecomposition(
        k=k,
        taylor_error=grad_k - (jk1 - jk0),
        mixing_bias=(jk1 - j1) + (j0 - jk0),
        total_bias=grad_k - (j1 - j0),
        delta=kernel_deviation(env),
        gamma_hat=dobrushin_coefficient(env) if gamma_hat is None else gamma_hat,
    )


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """OLS slope of log|y| on log x; zero values are floored at 1e-14."""
    x = np.asarray(x, dtype=float)
    y = np.maximum(np.abs(np.asarray(y, dtype=float)), SLOPE_FLOOR)
    if len(x) < 3:
        raise ConfigurationError("slope fit needs at least 3 grid points")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def theorem_bound(k: int, delta: float, gamma: float, M: float) -> float:
    """k^2 delta^2 M + gamma^k delta M / (1 - gamma), without constants."""
    if gamma >= 1.0:
        return math.inf
    return k * k * delta * delta * M + gamma**k * delta * M / (1.0 - gamma)


@dataclass
class ScalingRow:
    k: int
    delta: float
    gamma_hat: float
    M: float
    total_bias: float
    taylor_error: float
    mixing_bias: float
    bound: float
    ratio: float  # |total_bias| / bound


@dataclass
class ScalingReport:
    rows: list
    taylor_slope: dict  # k -> slope of |taylor_error| vs delta
    mixing_slope: dict  # k -> slope of |mixing_bias| vs gamma_hat^k, across delta
    constant_spread: float  # max/min of fitted |bias| / bound over nonzero cells

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        fields = list(ScalingRow.__dataclass_fields__)
        w.writerow(fields)
        for r in self.rows:
            w.writerow([getattr(r, f) for f in fields])
        return buf.getvalue()


def bound_scaling_report(
    family: Callable[[float], NonstationaryMdp] | Mapping[float, NonstationaryMdp],
    k_grid: Sequence[int],
    delta_grid: Sequence[float],
    gamma_hat: float | None = None,
) -> ScalingReport:
    """Exact bias terms over a (k, delta) grid of one environment family.

    ``family`` maps a kernel deviation to an environment built from the same
    seeds. ``gamma_hat`` overrides the per-environment Dobrushin coefficient
    (useful when noisy kernels make the worst-step coefficient uninformative).
    """
    if len(delta_grid) < 3:
        raise ConfigurationError("bound_scaling_report needs at least 3 delta values")
    get = family.__getitem__ if isinstance(family, Mapping) else family
    rows = []
    for delta in delta_grid:
        env = get(delta)
        M, _ = env.reward_bound()
        g = dobrushin_coefficient(env) if gamma_hat is None else gamma_hat
        for k in k_grid:
            dec = decompose_bias(env, k, gamma_hat=g)
            bound = theorem_bound(k, dec.delta, g, M)
            ratio = abs(dec.total_bias) / bound if bound and math.isfinite(bound) else math.nan
            rows.append(
                ScalingRow(k, dec.delta, g, M, dec.total_bias, dec.taylor_error, dec.mixing_bias, bound, ratio)
            )
    taylor_slope, mixing_slope = {}, {}
    for k in k_grid:
        sel = [r for r in rows if r.k == k]
        taylor_slope[k] = loglog_slope([r.delta for r in sel], [r.taylor_error for r in sel])
        xs = [r.gamma_hat**k * r.delta for r in sel]
        mixing_slope[k] = loglog_slope(xs, [r.mixing_bias for r in sel]) if k > 0 and min(xs) > 0 else math.nan
    ratios = [r.ratio for r in rows if np.isfinite(r.ratio) and r.ratio > 0]
    spread = max(ratios) / min(ratios) if ratios else math.nan
    return ScalingReport(rows, taylor_slope, mixing_slope, spread)


# --------------------------------------------------------------------------
# sweep summaries


@dataclass
class SummaryRow:
    estimator: str
    param_k: int | str
    mean: float
    bias: float
    mae: float
    mae_pct: float
    std: float
    reps: int
    truth_used: str = "exact"
    std_flag: str = ""


@dataclass
class SweepSummary:
    rows: list
    tau_mean: float
    note: str = MAE_PCT_NOTE

    def row(self, estimator_id: str) -> SummaryRow:
        for r in self.rows:
            if r.estimator == estimator_id:
                return r
        raise KeyError(estimator_id)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for r in self.rows:
            w.writerow([r.estimator, r.param_k, repr(r.mean), repr(r.bias), repr(r.mae), repr(r.mae_pct), repr(r.std), r.reps])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"tau_mean": self.tau_mean, "note": self.note, "rows": [asdict(r) for r in self.rows]}


def _natural_key(report) -> tuple:
    k = report.params.get("k", -1)
    return (report.estimator, math.inf if k == "T" else k, report.estimator_id)


def summarize_sweep(reports, truth, truth_used: str = "exact") -> SweepSummary:
    """Per-estimator mean, bias, MAE, MAE% and estimate std across replications.

    ``truth`` maps replication -> tau (per-trial truth), or is a single float /
    TruthBundle shared by all replications. Rows come out sorted by estimator
    name then k, so the summary does not depend on report order.
    """
    if isinstance(truth, gt.TruthBundle):
        truth = truth.tau
    shared = isinstance(truth, (int, float))
    groups: dict[str, list] = defaultdict(list)
    for rep in reports:
        groups[rep.estimator_id].append(rep)
    if not groups:
        raise ConfigurationError("no reports to summarise")
    taus_all = {}
    for reps in groups.values():
        for rep in reps:
            if shared:
                taus_all[rep.replication] = float(truth)
            elif rep.replication not in truth:
                raise ConfigurationError(f"missing truth for replication {rep.replication}")
            else:
                taus_all[rep.replication] = float(truth[rep.replication])
    tau_bar = float(np.mean([taus_all[r] for r in sorted(taus_all)]))
    rows = []
    for eid in sorted(groups, key=lambda e: _natural_key(groups[e][0])):
        reps = sorted(groups[eid], key=lambda r: (r.replication is None, r.replication))
        est = np.array([r.estimate for r in reps])
        tau = np.array([taus_all[r.replication] for r in reps])
        err = est - tau
        n = len(est)
        std = float(est.std(ddof=1)) if n > 1 else 0.0
        mae = float(np.abs(err).mean())
        rows.append(
            SummaryRow(
                estimator=eid,
                param_k=reps[0].params.get("k", ""),
                mean=float(est.mean()),
                bias=float(err.mean()),
                mae=mae,
                mae_pct=100.0 * mae / abs(tau_bar) if tau_bar != 0 else math.inf,
                std=std,
                reps=n,
                truth_used=truth_used,
                std_flag="" if n > 1 else "single replication: std set to 0",
            )
        )
    return SweepSummary(rows, tau_bar)
