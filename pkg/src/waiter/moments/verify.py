"""Pointwise verification of a trajectory against every realizable object.

At each sample time the worst case of ``h_i^T Y(xi, eta) theta`` over the
order-``r`` moment relaxation is bounded for every row ``h_i`` of the contact
wrench cone. A non-positive global maximum certifies that no object with CoM
in ``C`` and mass supported in ``K`` can start to slip or tip.

With ``prune=True`` every (time, row) pair is first bounded by the cheap
order-1 relaxation, which upper-bounds the order-``r`` value. Rows are then
solved at order ``r`` in decreasing order of that bound until the best
order-``r`` value at the time instant dominates all remaining order-1 bounds.
Per-time maxima and the global maximum are unchanged by pruning; skipped
entries keep their order-1 upper bound and are marked as such.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..contact import ComBox, ContactSet
from ..errors import SolverFailure
from ..rigidbody import GRAVITY, regressor
from ..solvers.lp import OPTIMAL
from ..trajopt import parse_meta_value
from .relaxation import Relaxation
from .shape import BoundingShape


@dataclass
class VerificationReport:
    times: np.ndarray            # (n_t,)
    bounds: np.ndarray           # (n_t, n_h)
    order: np.ndarray            # (n_t, n_h) relaxation order behind each entry
    wall_time: float
    n_solves: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)       # free-form labels, e.g. method and height

    @property
    def per_time_max(self):
        if self.bounds.shape[1] == 0:
            return np.full(self.times.shape, -np.inf)
        return self.bounds.max(axis=1)

    @property
    def max_bound(self):
        return float(np.max(self.per_time_max, initial=-np.inf))

    @property
    def argmax(self):
        k, i = np.unravel_index(np.argmax(self.bounds), self.bounds.shape)
        return float(self.times[k]), int(i)

    @property
    def verified(self):
        return self.max_bound <= 0.0

    @property
    def time_per_instant(self):
        return self.wall_time / max(len(self.times), 1)

    def summary(self):
        t, i = self.argmax if self.bounds.size else (float("nan"), -1)
        return (f"max_bound={self.max_bound:.6g} at t={t:.3f} row={i} "
                f"verified={'yes' if self.verified else 'no'} instants={len(self.times)} "
                f"rows={self.bounds.shape[1]} wall={self.wall_time:.2f}s "
                f"({1e3 * self.time_per_instant:.1f} ms/instant)")

    def write_csv(self, path):
        with open(path, "w") as f:
            for k, v in self.meta.items():
                f.write(f"# meta {k}={v}\n")
            f.write("t,row,bound,order\n")
            for k, t in enumerate(self.times):
                for i in range(self.bounds.shape[1]):
                    f.write(f"{t:.6f},{i},{self.bounds[k, i]:.10g},{int(self.order[k, i])}\n")
            f.write(f"# {self.summary()}\n")

    @classmethod
    def read_csv(cls, path):
        rows, meta = [], {}
        with open(path) as f:
            for line in f:
                if line.startswith("# meta "):
                    k, _, v = line[7:].strip().partition("=")
                    meta[k] = parse_meta_value(v)
                    continue
                if line.startswith("#") or line.startswith("t,"):
                    continue
                t, i, b, o = line.strip().split(",")
                rows.append((float(t), int(i), float(b), int(o)))
        times = np.unique([r[0] for r in rows])
        n_h = max(r[1] for r in rows) + 1 if rows else 0
        B = np.full((len(times), n_h), np.nan)
        O = np.zeros((len(times), n_h), dtype=int)
        index = {t: k for k, t in enumerate(times)}
        for t, i, b, o in rows:
            B[index[t], i] = b
            O[index[t], i] = o
        return cls(times, B, O, float("nan"), meta=meta)


def _solve(relax: Relaxation, g, com_set):
    b, _, st = relax.max_violation(g, com_set)
    if np.any(st != OPTIMAL):
        bad = np.flatnonzero(st != OPTIMAL)
        raise SolverFailure(f"{bad.size} worst-case SDPs did not converge (first: {st[bad[0]]})", st[bad[0]])
    return b


def verify_motion(times, xi, eta, H, shape: BoundingShape, com_set: ComBox | None,
                  r=2, prune=True) -> VerificationReport:
    """Bounds for sampled motion ``(xi, eta)`` of shape ``(n_t, 6)``."""
    t0 = time.perf_counter()
    H = np.asarray(H, dtype=float)
    n_t, n_h = len(times), H.shape[0]
    bounds = np.full((n_t, n_h), -np.inf)
    order = np.full((n_t, n_h), r, dtype=int)
    if n_h == 0 or n_t == 0:
        return VerificationReport(np.asarray(times), bounds, order, time.perf_counter() - t0)
    g = np.stack([H @ regressor(a, b) for a, b in zip(xi, eta)])       # (n_t, n_h, 10)
    relax = Relaxation(shape, r)
    counts = {}
    if not prune or r <= 1:
        bounds = _solve(relax, g.reshape(-1, 10), com_set).reshape(n_t, n_h)
        counts[r] = n_t * n_h
        return VerificationReport(np.asarray(times), bounds, order, time.perf_counter() - t0, counts)

    upper = _solve(Relaxation(shape, 1), g.reshape(-1, 10), com_set).reshape(n_t, n_h)
    counts[1] = n_t * n_h
    counts[r] = 0
    bounds = upper.copy()
    order[:] = 1
    best = np.full(n_t, -np.inf)
    rank = np.argsort(-upper, axis=1)
    pos = np.zeros(n_t, dtype=int)       # next candidate per time instant
    while True:
        # next row for every instant whose remaining upper bounds can still beat the best
        k = np.flatnonzero(pos < n_h)
        if k.size:
            nxt = rank[k, pos[k]]
            open_ = upper[k, nxt] > best[k]
            k, nxt = k[open_], nxt[open_]
        if k.size == 0:
            break
        vals = _solve(relax, g[k, nxt], com_set)
        counts[r] += k.size
        bounds[k, nxt] = vals
        order[k, nxt] = r
        best[k] = np.maximum(best[k], vals)
        pos[k] += 1
    return VerificationReport(np.asarray(times), bounds, order, time.perf_counter() - t0, counts)


def verify_trajectory(traj, contacts: ContactSet | np.ndarray, shape: BoundingShape, com_set: ComBox | None,
                      interval=0.01, r=2, prune=True, gravity=GRAVITY) -> VerificationReport:
    """Verify ``traj`` resampled every ``interval`` seconds against the CWC of ``contacts``.

    ``contacts`` may also be a face matrix ``H`` directly.
    """
    if interval <= 0:
        raise ValueError("interval must be positive")
    H = contacts.H if isinstance(contacts, ContactSet) else np.asarray(contacts, dtype=float)
    times = traj.sample_times(interval)
    xi, eta = traj.ee_motion_at(times, gravity)
    rep = verify_motion(times, xi, eta, H, shape, com_set, r=r, prune=prune)
    rep.meta = dict(traj.meta)
    return rep
