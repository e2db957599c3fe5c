"""Trajectory-only GATE estimators.

``dm``, ``truncated_dq`` and ``untruncated_dq`` see only assignments and
rewards; they never receive states. Window sums are accumulated left to
right and the outer sum is exactly rounded (``math.fsum``), so results are
bit-identical to a naive double loop that uses the same final reduction.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from truncdq.mdp import ConfigurationError, EstimationError, Trajectory


@dataclass
class EstimateReport:
    estimator: str
    params: dict
    estimate: float
    seed: int | None = None
    horizon: int | None = None
    replication: int | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.estimate):
            raise EstimationError(f"{self.estimator} produced a non-finite estimate")

    @property
    def estimator_id(self) -> str:
        if not self.params:
            return self.estimator
        inner = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.estimator}({inner})"

    def csv_row(self) -> list:
        params = ";".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return [self.estimator_id, params, repr(self.estimate), self.seed, self.horizon]

    def to_csv(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow(self.csv_row())
        return buf.getvalue()


CSV_HEADER = ["estimator_id", "params", "estimate", "seed", "T"]


def _weights(actions: np.ndarray, theta: float) -> np.ndarray:
    if not 0.0 < theta < 1.0:
        raise ConfigurationError(f"theta must lie strictly inside (0, 1), got {theta}")
    z = np.asarray(actions)
    return np.where(z == 1, 1.0 / theta, -1.0 / (1.0 - theta))


def _window_sums(rewards: np.ndarray, k: int) -> np.ndarray:
    """S_u = Y_u + Y_{u+1} + ... + Y_{min(u+k, T-1)}, accumulated left to right along the last axis."""
    y = np.asarray(rewards, dtype=float)
    out = y.copy()
    T = y.shape[-1]
    for j in range(1, min(k, T - 1) + 1):
        out[..., : T - j] += y[..., j:]
    return out


def _ht_mean(weights: np.ndarray, windows: np.ndarray) -> np.ndarray | float:
    prod = weights * windows
    if prod.ndim == 1:
        return math.fsum(prod) / prod.shape[0]
    return np.array([math.fsum(row) for row in prod]) / prod.shape[-1]


def _unpack(traj) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(traj, tuple):
        z, y = traj
    else:
        z, y = traj.actions, traj.rewards
    z, y = np.asarray(z), np.asarray(y, dtype=float)
    if z.shape != y.shape or z.shape[-1] == 0:
        raise EstimationError("assignments and rewards must be nonempty and aligned")
    return z, y


def dm(traj, theta: float = 0.5):
    """Horvitz-Thompson difference in means: (1/T) sum_u w_u Y_u."""
    z, y = _unpack(traj)
    return _ht_mean(_weights(z, theta), y)


def truncated_dq(traj, k: int, theta: float = 0.5):
    """(1/T) sum_u w_u (Y_u + ... + Y_{min(u+k, T)}).

    ``traj`` may be a Trajectory, a TrajectoryBatch or an ``(actions, rewards)``
    pair; batched input (2-D arrays) returns one estimate per row.
    """
    z, y = _unpack(traj)
    T = z.shape[-1]
    if not 0 <= k <= T - 1:
        raise ConfigurationError(f"truncation k={k} outside [0, {T - 1}]")
    return _ht_mean(_weights(z, theta), _window_sums(y, k))


def untruncated_dq(traj, theta: float = 0.5):
    """Truncated DQ with the full remaining trajectory (k = T - 1)."""
    z, _ = _unpack(traj)
    return truncated_dq(traj, z.shape[-1] - 1, theta)


def k_scan(traj, ks: Sequence[int], theta: float = 0.5) -> dict[int, np.ndarray | float]:
    """Truncated DQ for a grid of k over one dataset, extending a single running window."""
    z, y = _unpack(traj)
    T = z.shape[-1]
    ks = sorted(set(int(k) for k in ks))
    if ks and not (0 <= ks[0] and ks[-1] <= T - 1):
        raise ConfigurationError(f"k grid must lie in [0, {T - 1}]")
    w = _weights(z, theta)
    out = {}
    window = y.copy()
    done = 0
    for k in ks:
        for j in range(done + 1, k + 1):
            window[..., : T - j] += y[..., j:]
        done = max(done, k)
        out[k] = _ht_mean(w, window)
    return out


# --------------------------------------------------------------------------
# switchback designs


def _block_ids(traj, blocks) -> np.ndarray:
    b = blocks if blocks is not None else getattr(traj, "blocks", None)
    if b is None:
        raise ConfigurationError("switchback estimators need block ids (trajectory has none)")
    b = np.asarray(b)
    if np.any(np.diff(b) < 0):
        raise ConfigurationError("block ids must be nondecreasing in time")
    return b


def block_aggregate(actions, rewards, blocks):
    """Per-block (assignment, reward sum, step count) for block ids in time order."""
    z, y, b = np.asarray(actions), np.asarray(rewards, dtype=float), np.asarray(blocks)
    starts = np.flatnonzero(np.r_[True, b[1:] != b[:-1]])
    zb = z[starts]
    sums = np.add.reduceat(y, starts)
    counts = np.diff(np.r_[starts, len(y)])
    for s, e in zip(starts, np.r_[starts[1:], len(y)]):
        if np.any(z[s:e] != z[s]):
            raise EstimationError("assignment varies within a switchback block")
    return zb, sums, counts


def truncated_dq_blocks(traj, k: int, theta: float = 0.5, blocks=None) -> float:
    """Truncated DQ with switchback blocks as units.

    Each block b carries weight w_b and the summed reward of blocks b..b+k;
    dividing by the number of steps makes k = 0 coincide with ``dm`` on the
    per-step data.
    """
    z, y = _unpack(traj)
    b = _block_ids(traj, blocks)
    zb, sums, _ = block_aggregate(z, y, b)
    nb = len(zb)
    if not 0 <= k <= nb - 1:
        raise ConfigurationError(f"block truncation k={k} outside [0, {nb - 1}]")
    return math.fsum(_weights(zb, theta) * _window_sums(sums, k)) / len(y)


def switchback_bc(traj, block_len: float, burn_in: float, blocks=None, times=None) -> float:
    """Switchback estimator discarding the first ``burn_in`` of every block.

    Burn-in is measured in steps, or in the units of ``times`` when event
    times are available (block starts are then ``block * block_len``).
    """
    if not 0 <= burn_in < block_len:
        raise ConfigurationError("burn_in must satisfy 0 <= burn_in < block_len")
    z, y = _unpack(traj)
    b = _block_ids(traj, blocks)
    times = times if times is not None else getattr(traj, "times", None)
    if times is not None:
        offset = np.asarray(times, dtype=float) - b * block_len
    else:
        starts = np.flatnonzero(np.r_[True, b[1:] != b[:-1]])
        first = np.repeat(starts, np.diff(np.r_[starts, len(b)]))
        offset = np.arange(len(b)) - first
    keep = offset >= burn_in
    means = {0: [], 1: []}
    for blk in np.unique(b):
        sel = (b == blk) & keep
        if sel.any():
            means[int(z[b == blk][0])].append(y[sel].mean())
    if not means[0] or not means[1]:
        raise EstimationError("switchback_bc needs at least one treated and one control block")
    return float(np.mean(means[1]) - np.mean(means[0]))


# --------------------------------------------------------------------------
# tabular stationary baselines


@dataclass
class TabularModel:
    states: np.ndarray  # observed state labels, sorted
    P: np.ndarray  # (2, S, S)
    r: np.ndarray  # (S, 2)
    visits: np.ndarray  # (S, 2)
    unvisited: list


def fit_tabular(states, actions, rewards) -> TabularModel:
    """Time-homogeneous transition counts and reward means per (x, z)."""
    x = np.asarray(states)
    z = np.asarray(actions)
    y = np.asarray(rewards, dtype=float)
    labels, idx = np.unique(x, return_inverse=True)
    S = len(labels)
    counts = np.zeros((2, S, S))
    np.add.at(counts, (z[:-1], idx[:-1], idx[1:]), 1.0)
    rsum = np.zeros((S, 2))
    visits = np.zeros((S, 2))
    np.add.at(rsum, (idx, z), y)
    np.add.at(visits, (idx, z), 1.0)
    P = np.empty_like(counts)
    unvisited = []
    for zz in (0, 1):
        for s in range(S):
            n = counts[zz, s].sum()
            if n > 0:
                P[zz, s] = counts[zz, s] / n
            else:
                P[zz, s] = 1.0 / S
                unvisited.append((int(labels[s]), zz))
    r = np.divide(rsum, visits, out=np.zeros_like(rsum), where=visits > 0)
    return TabularModel(labels, P, r, visits, unvisited)


def _stationary(P: np.ndarray) -> np.ndarray:
    S = P.shape[0]
    graph = csr_matrix(P > 0)
    n, lab = connected_components(graph, directed=True, connection="strong")
    closed = [c for c in range(n) if not np.any(P[np.ix_(lab == c, lab != c)] > 0)]
    if len(closed) != 1:
        raise EstimationError(f"fitted chain is not unichain ({len(closed)} closed classes)")
    A = np.vstack([P.T - np.eye(S), np.ones(S)])
    b = np.r_[np.zeros(S), 1.0]
    pi = np.linalg.lstsq(A, b, rcond=None)[0]
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def stationary_model_baseline(traj: Trajectory, mode: str = "model_ope", horizon: int | None = None):
    """Stationary tabular baselines fitted on one trajectory.

    ``model_ope`` rolls the fitted always-treat and always-control chains
    forward for the horizon from the observed first state and returns the
    difference of average rewards. ``stationary_dq`` solves the average-reward
    Bellman equations of the fitted 50/50 chain and returns
    sum_x pi(x) (Q(x, 1) - Q(x, 0)).

    Returns (estimate, diagnostics).
    """
    model = fit_tabular(traj.states, traj.actions, traj.rewards)
    S = len(model.states)
    diag = {"num_states": S, "unvisited": model.unvisited}
    if mode == "model_ope":
        T = horizon or len(traj.actions)
        start = np.zeros(S)
        start[np.searchsorted(model.states, np.asarray(traj.states)[0])] = 1.0
        vals = []
        for zz in (1, 0):
            d, tot = start.copy(), 0.0
            for _ in range(T):
                tot += d @ model.r[:, zz]
                d = d @ model.P[zz]
            vals.append(tot / T)
        return vals[0] - vals[1], diag
    if mode == "stationary_dq":
        P = 0.5 * (model.P[0] + model.P[1])
        r = 0.5 * (model.r[:, 0] + model.r[:, 1])
        pi = _stationary(P)
        lam = pi @ r
        # (I - P + 1 pi^T) h = r - lam, normalised so pi . h = 0
        h = np.linalg.solve(np.eye(S) - P + np.outer(np.ones(S), pi), r - lam)
        Q = np.stack([model.r[:, zz] - lam + model.P[zz] @ h for zz in (0, 1)], axis=1)
        diag["lambda"] = float(lam)
        return float(pi @ (Q[:, 1] - Q[:, 0])), diag
    raise ConfigurationError(f"unknown baseline mode {mode!r}")
