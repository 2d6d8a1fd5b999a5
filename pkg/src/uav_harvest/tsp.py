"""Open-path travelling salesman with fixed start and end points.

Small instances (up to ``EXACT_MAX`` points) are solved exactly by
Held-Karp dynamic programming over visited subsets. Larger ones use local
search from three constructions (nearest neighbour from either end,
cheapest insertion), alternating 2-opt segment reversals with Or-opt
segment moves until neither shortens the path, and keep the best. Moves
never touch the fixed endpoints, which is the same neighbourhood as the
dummy-node reduction of the path problem to a cycle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EXACT_MAX = 12


@dataclass
class TourPlan:
    order: np.ndarray        # visiting order as indices into the input points
    points: np.ndarray       # (n, 2) points in visiting order
    start: np.ndarray
    end: np.ndarray
    legs: np.ndarray         # (n + 1,) leg lengths, start -> ... -> end
    v_h: float
    dwell: np.ndarray = field(default_factory=lambda: np.zeros(0))   # s per point, in order

    @property
    def length(self) -> float:
        return float(self.legs.sum())

    @property
    def T_tsp(self) -> float:
        """Flight time of the path at full speed, s."""
        return self.length / self.v_h

    def waypoints(self) -> np.ndarray:
        return np.vstack([self.start, self.points, self.end])

    def with_dwell(self, tau, T: float) -> "TourPlan":
        """Split the spare time ``T - T_tsp`` in proportion to ``tau`` (given in input order)."""
        tau = np.asarray(tau, dtype=float)[self.order]
        spare = max(T - self.T_tsp, 0.0)
        dwell = spare * tau / tau.sum() if tau.sum() > 0 else np.zeros_like(tau)
        return TourPlan(self.order, self.points, self.start, self.end, self.legs, self.v_h, dwell)


def path_length(start, points, end) -> float:
    w = np.vstack([start, points, end])
    return float(np.linalg.norm(np.diff(w, axis=0), axis=1).sum())


def _held_karp(D0, Dend, D) -> list[int]:
    """Exact order: D0[j] start->j, Dend[j] j->end, D pairwise."""
    n = D.shape[0]
    full = 1 << n
    cost = np.full((full, n), np.inf)
    parent = np.full((full, n), -1, dtype=np.int64)
    for j in range(n):
        cost[1 << j, j] = D0[j]
    bits = 1 << np.arange(n)
    for S in range(1, full):
        row = cost[S]
        if not np.isfinite(row).any():
            continue
        # extend every end point in S to every point outside S
        inside = (S & bits) != 0
        ends = np.flatnonzero(inside & np.isfinite(row))
        for k in np.flatnonzero(~inside):
            cand = row[ends] + D[ends, k]
            i = int(np.argmin(cand))
            T = S | (1 << k)
            if cand[i] < cost[T, k]:
                cost[T, k] = cand[i]
                parent[T, k] = ends[i]
    last = int(np.argmin(cost[full - 1] + Dend))
    order = []
    S = full - 1
    while last >= 0:
        order.append(last)
        prev = int(parent[S, last])
        S &= ~(1 << last)
        last = prev
    return order[::-1]


def _nearest_neighbour(start, pts) -> list[int]:
    left = list(range(len(pts)))
    cur = np.asarray(start, dtype=float)
    order = []
    while left:
        d = np.linalg.norm(pts[left] - cur, axis=1)
        i = left.pop(int(np.argmin(d)))
        order.append(i)
        cur = pts[i]
    return order


def _cheapest_insertion(start, pts, end) -> list[int]:
    seq: list[int] = []
    left = list(range(len(pts)))
    while left:
        best = None
        for k in left:
            w = np.vstack([start, pts[seq], end]) if seq else np.vstack([start, end])
            add = (np.linalg.norm(w[:-1] - pts[k], axis=1) + np.linalg.norm(w[1:] - pts[k], axis=1)
                   - np.linalg.norm(w[1:] - w[:-1], axis=1))
            j = int(np.argmin(add))
            if best is None or add[j] < best[0] - 1e-12:
                best = (add[j], k, j)
        _, k, j = best
        seq.insert(j, k)
        left.remove(k)
    return seq


def two_opt(start, pts, end, order) -> list[int]:
    """Improve ``order`` by segment reversals until no reversal helps."""
    seq = list(order)
    n = len(seq)
    improved = True
    while improved:
        improved = False
        for i in range(n - 1):
            for k in range(i + 1, n):
                w = np.vstack([start, pts[seq], end])
                # reversing seq[i..k] swaps edges (i, i+1) and (k+1, k+2) in waypoint indices
                a, b = w[i], w[i + 1]
                c, d = w[k + 1], w[k + 2]
                delta = (np.linalg.norm(a - c) + np.linalg.norm(b - d)
                         - np.linalg.norm(a - b) - np.linalg.norm(c - d))
                if delta < -1e-9:
                    seq[i:k + 1] = seq[i:k + 1][::-1]
                    improved = True
    return seq


def or_opt(start, pts, end, order) -> tuple[list[int], bool]:
    """One pass of Or-opt: relocate segments of 1 to 3 points, first improvement."""
    seq = list(order)
    n = len(seq)
    base = path_length(start, pts[seq], end)
    for L in (1, 2, 3):
        for i in range(n - L + 1):
            seg = seq[i:i + L]
            rest = seq[:i] + seq[i + L:]
            for j in range(len(rest) + 1):
                if j == i:
                    continue
                for piece in (seg, seg[::-1]):
                    cand = rest[:j] + piece + rest[j:]
                    if path_length(start, pts[cand], end) < base - 1e-9:
                        return cand, True
    return seq, False


def local_search(start, pts, end, order) -> list[int]:
    seq = two_opt(start, pts, end, order)
    moved = True
    while moved:
        seq, moved = or_opt(start, pts, end, seq)
        if moved:
            seq = two_opt(start, pts, end, seq)
    return seq


def tsp_order(points, q_I, q_F, v_h: float, *, method: str = "auto") -> TourPlan:
    """Shortest open path ``q_I -> all points -> q_F``.

    ``method`` is "auto" (exact up to 12 points), "exact" or "2opt".
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 1 or pts.shape[1] != 2:
        raise ValueError(f"need at least one 2D point, got shape {pts.shape}")
    start = np.asarray(q_I, dtype=float)
    end = np.asarray(q_F, dtype=float)
    n = pts.shape[0]
    if method == "auto":
        method = "exact" if n <= EXACT_MAX else "2opt"
    if method == "exact":
        D = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        order = _held_karp(np.linalg.norm(pts - start, axis=1),
                           np.linalg.norm(pts - end, axis=1), D)
    elif method == "2opt":
        starts = [_nearest_neighbour(start, pts), _nearest_neighbour(end, pts)[::-1],
                  _cheapest_insertion(start, pts, end)]
        tours = [local_search(start, pts, end, o) for o in starts]
        order = min(tours, key=lambda o: path_length(start, pts[o], end))
    else:
        raise ValueError(f"unknown method {method!r}")
    order = np.asarray(order, dtype=int)
    w = np.vstack([start, pts[order], end])
    legs = np.linalg.norm(np.diff(w, axis=0), axis=1)
    return TourPlan(order, pts[order], start, end, legs, float(v_h))
