"""Multi-restart k-means over day profiles with WCSS scoring and elbow selection.

Lloyd iteration with Forgy initialization: each restart draws k distinct
profiles uniformly without replacement from its own splitmix64 stream, assigns
profiles to the nearest centroid by squared Euclidean distance (ties to the
lowest cluster index), recomputes centroids as member means, and stops when
assignments no longer change. Empty clusters are re-seeded with the profile
farthest from its current centroid. Restart seeds are derived from the base
seed xor the restart index through a fixed splitmix64 mix, so parallel and
serial execution produce bit-identical results.

brute_force_optimum enumerates every partition of the profiles into k
nonempty clusters and is the test oracle for small instances.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from loadshape.errors import InstanceTooLargeError
from loadshape.profiles import DayProfile, to_matrix

logger = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# relative slack for the per-iteration WCSS monotonicity assertion
_MONOTONE_RTOL = 1e-9

BRUTE_FORCE_LIMIT = 10_000_000


@dataclass(frozen=True)
class KMeansConfig:
    """Parameters for a multi-restart clustering run.

    Convergence is fixed to assignments-unchanged (capped at max_iterations).
    """

    k: int
    restarts: int = 1000
    max_iterations: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not 0 <= self.seed <= _MASK64:
            raise ValueError("seed must fit in 64 unsigned bits")


@dataclass(frozen=True)
class ClusteringResult:
    """Assignments plus the representative (centroid) profile of each cluster.

    Cluster labels are canonical: clusters are ordered by centroid value
    (first hour, then lexicographically), so results are comparable across
    input permutations. winning_restart is 0 for a single run and -1 for the
    brute-force oracle.
    """

    assignments: tuple[int, ...]
    centroids: tuple[DayProfile, ...]
    per_cluster_wcss: tuple[float, ...]
    total_wcss: float
    winning_restart: int
    iterations_used: int

    @property
    def k(self) -> int:
        return len(self.centroids)


@dataclass(frozen=True)
class ElbowReport:
    """WCSS-vs-k curve with the automatic second-difference elbow suggestion."""

    entries: tuple[tuple[int, float], ...]
    second_differences: tuple[tuple[int, float], ...]
    suggested_k: int
    degenerate: bool


@numba.njit(numba.uint64(numba.uint64), cache=True, nogil=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def derive_restart_seed(seed: int, index: int) -> int:
    """Per-restart seed: splitmix64 finalizer applied to seed xor restart index."""
    z = (seed ^ index) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@numba.njit(cache=True, nogil=True)
def _lloyd_single(X, U, k, seed, max_iter, perm, C, assign, sums, counts, wcss_hist):
    """One seeded Lloyd run. Returns (iterations, final wcss, monotonicity violations).

    Centroid init: partial Fisher-Yates over the distinct profiles U driven by
    a splitmix64 stream starting at `seed` (bias-free bounded draws via
    rejection sampling).
    """
    n, d = X.shape
    m = U.shape[0]
    state = seed
    for i in range(m):
        perm[i] = i
    for j in range(k):
        bound = np.uint64(m - j)
        threshold = (np.uint64(0) - bound) % bound
        while True:
            state = state + _GOLDEN
            z = _mix64(state)
            if z >= threshold:
                break
        pick = j + np.int64(z % bound)
        tmp = perm[j]
        perm[j] = perm[pick]
        perm[pick] = tmp
        for t in range(d):
            C[j, t] = U[perm[j], t]
    for i in range(n):
        assign[i] = -1
    iters = 0
    prev_w = np.inf
    violations = 0
    for it in range(max_iter):
        changed = False
        for i in range(n):
            best_j = 0
            best_d = np.inf
            for j in range(k):
                dist = 0.0
                for t in range(d):
                    diff = X[i, t] - C[j, t]
                    dist += diff * diff
                if dist < best_d:
                    best_d = dist
                    best_j = j
            if assign[i] != best_j:
                changed = True
                assign[i] = best_j
        if not changed:
            break
        iters = it + 1
        for j in range(k):
            counts[j] = 0
            for t in range(d):
                sums[j, t] = 0.0
        for i in range(n):
            a = assign[i]
            counts[a] += 1
            for t in range(d):
                sums[a, t] += X[i, t]
        for j in range(k):
            if counts[j] == 0:
                # re-seed with the profile farthest from its current centroid,
                # never emptying a singleton cluster
                far_i = -1
                far_d = -1.0
                for i in range(n):
                    a = assign[i]
                    if counts[a] < 2:
                        continue
                    dist = 0.0
                    for t in range(d):
                        diff = X[i, t] - C[a, t]
                        dist += diff * diff
                    if dist > far_d:
                        far_d = dist
                        far_i = i
                a_old = assign[far_i]
                counts[a_old] -= 1
                counts[j] = 1
                for t in range(d):
                    sums[a_old, t] -= X[far_i, t]
                    sums[j, t] = X[far_i, t]
                assign[far_i] = j
        for j in range(k):
            for t in range(d):
                C[j, t] = sums[j, t] / counts[j]
        w = 0.0
        for i in range(n):
            a = assign[i]
            for t in range(d):
                diff = X[i, t] - C[a, t]
                w += diff * diff
        if w > prev_w + _MONOTONE_RTOL * max(1.0, prev_w):
            violations += 1
        prev_w = w
        wcss_hist[it] = w
    w = 0.0
    for i in range(n):
        a = assign[i]
        for t in range(d):
            diff = X[i, t] - C[a, t]
            w += diff * diff
    return iters, w, violations


@numba.njit(cache=True, nogil=True)
def _run_single(X, U, k, seed, max_iter):
    n, d = X.shape
    m = U.shape[0]
    perm = np.empty(m, dtype=np.int64)
    C = np.empty((k, d))
    assign = np.empty(n, dtype=np.int64)
    sums = np.empty((k, d))
    counts = np.empty(k, dtype=np.int64)
    wcss_hist = np.empty(max_iter)
    iters, w, violations = _lloyd_single(
        X, U, k, seed, max_iter, perm, C, assign, sums, counts, wcss_hist
    )
    return assign, C, iters, w, violations, wcss_hist[:iters].copy()


@numba.njit(cache=True, nogil=True)
def _run_range(X, U, k, base_seed, r_start, r_count, max_iter):
    """Run restarts [r_start, r_start + r_count); keep the lowest-WCSS result.

    Exact ties keep the lowest restart index, so any chunking of the restart
    range reduces to the same winner.
    """
    n, d = X.shape
    m = U.shape[0]
    perm = np.empty(m, dtype=np.int64)
    C = np.empty((k, d))
    assign = np.empty(n, dtype=np.int64)
    sums = np.empty((k, d))
    counts = np.empty(k, dtype=np.int64)
    wcss_hist = np.empty(max_iter)
    best_w = np.inf
    best_r = -1
    best_iters = 0
    best_assign = np.empty(n, dtype=np.int64)
    best_C = np.empty((k, d))
    violations = 0
    for r in range(r_start, r_start + r_count):
        derived = _mix64(np.uint64(base_seed) ^ np.uint64(r))
        iters, w, viol = _lloyd_single(
            X, U, k, derived, max_iter, perm, C, assign, sums, counts, wcss_hist
        )
        violations += viol
        if w < best_w:
            best_w = w
            best_r = r
            best_iters = iters
            best_assign[:] = assign
            best_C[:] = C
    return best_assign, best_C, best_w, best_r, best_iters, violations


def _as_matrix(profiles):
    """Accept DayProfile sequences or raw arrays; return (X, units)."""
    if isinstance(profiles, np.ndarray):
        X = np.ascontiguousarray(profiles, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError(f"profile array must be 2-d, got shape {X.shape}")
        return X, "kwh"
    profiles = list(profiles)
    if not profiles:
        raise ValueError("no profiles to cluster")
    units = {p.units for p in profiles}
    if len(units) > 1:
        raise ValueError(f"profiles mix units: {sorted(units)}")
    return to_matrix(profiles), units.pop()


def _validate_k(X, k):
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    U = np.unique(X, axis=0)
    if k > U.shape[0]:
        raise ValueError(f"k={k} exceeds the {U.shape[0]} distinct profiles")
    return np.ascontiguousarray(U)


def _wcss_arrays(X, assign, C):
    diffs = X - C[assign]
    sq = (diffs * diffs).sum(axis=1)
    per_cluster = np.zeros(C.shape[0])
    np.add.at(per_cluster, assign, sq)
    return per_cluster, float(per_cluster.sum())


def _canonical_order(C):
    """Cluster relabeling: sort centroids by first-hour value, then lexicographically."""
    return sorted(range(C.shape[0]), key=lambda j: tuple(C[j]))


def _build_result(X, assign, C, units, winning_restart, iterations_used):
    order = _canonical_order(C)
    relabel = np.empty(len(order), dtype=np.int64)
    for new, old in enumerate(order):
        relabel[old] = new
    assign = relabel[assign]
    C = C[order]
    per_cluster, total = _wcss_arrays(X, assign, C)
    centroids = tuple(
        DayProfile(tuple(float(v) for v in C[j]), units, f"cluster{j}", "centroid")
        for j in range(C.shape[0])
    )
    return ClusteringResult(
        assignments=tuple(int(a) for a in assign),
        centroids=centroids,
        per_cluster_wcss=tuple(float(w) for w in per_cluster),
        total_wcss=total,
        winning_restart=winning_restart,
        iterations_used=iterations_used,
    )


def kmeans_once(profiles, k: int, seed: int, max_iterations: int = 100) -> ClusteringResult:
    """One seeded Lloyd run (no restarts)."""
    X, units = _as_matrix(profiles)
    U = _validate_k(X, k)
    assign, C, iters, _, violations, _ = _run_single(
        X, U, k, np.uint64(seed & _MASK64), max_iterations
    )
    if violations:
        raise AssertionError(f"WCSS increased across {violations} Lloyd iteration(s)")
    return _build_result(X, assign, C, units, winning_restart=0, iterations_used=iters)


def lloyd_trace(profiles, k: int, seed: int, max_iterations: int = 100) -> list[float]:
    """Per-iteration total WCSS of one seeded run (diagnostic/test hook)."""
    X, _ = _as_matrix(profiles)
    U = _validate_k(X, k)
    _, _, _, _, _, hist = _run_single(X, U, k, np.uint64(seed & _MASK64), max_iterations)
    return [float(w) for w in hist]


def kmeans_best(profiles, config: KMeansConfig, threads: int = 1) -> ClusteringResult:
    """Best of config.restarts independent runs (lowest total WCSS, ties to
    the lowest restart index). The result does not depend on threads."""
    X, units = _as_matrix(profiles)
    U = _validate_k(X, config.k)
    seed = np.uint64(config.seed & _MASK64)
    if threads <= 1 or config.restarts < 2:
        chunks = [(0, config.restarts)]
    else:
        per = max(1, -(-config.restarts // (threads * 4)))
        chunks = [(start, min(per, config.restarts - start)) for start in range(0, config.restarts, per)]

    def run(chunk):
        start, count = chunk
        return _run_range(X, U, config.k, seed, start, count, config.max_iterations)

    if len(chunks) == 1:
        outputs = [run(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(run, chunks))
    violations = sum(out[5] for out in outputs)
    if violations:
        raise AssertionError(f"WCSS increased across {violations} Lloyd iteration(s)")
    best = min(outputs, key=lambda out: (out[2], out[3]))
    assign, C, _, best_r, best_iters, _ = best
    return _build_result(X, assign, C, units, winning_restart=int(best_r), iterations_used=int(best_iters))


def wcss(profiles, assignments, centroids):
    """Recompute (per-cluster, total) within-cluster sums of squares.

    centroids may be DayProfiles or a raw (k, 24) array; assignments must
    reference existing centroids.
    """
    X, _ = _as_matrix(profiles)
    if isinstance(centroids, np.ndarray):
        C = np.asarray(centroids, dtype=np.float64)
    else:
        C = to_matrix(centroids)
    assign = np.asarray(assignments, dtype=np.int64)
    if assign.shape[0] != X.shape[0]:
        raise ValueError(f"{assign.shape[0]} assignments for {X.shape[0]} profiles")
    if assign.min() < 0 or assign.max() >= C.shape[0]:
        raise ValueError(f"assignment references cluster outside 0..{C.shape[0] - 1}")
    per_cluster, total = _wcss_arrays(X, assign, C)
    return tuple(float(w) for w in per_cluster), total


def elbow_scan(profiles, k_min: int, k_max: int, config: KMeansConfig, threads: int = 1) -> ElbowReport:
    """kmeans_best for every k in [k_min, k_max]; suggest the elbow k.

    The suggestion maximizes the second difference
    wcss(k-1) - 2*wcss(k) + wcss(k+1) over interior k (ties to the lowest k).
    The full curve is always reported for human inspection; a flat curve sets
    the degenerate flag.
    """
    X, _ = _as_matrix(profiles)
    distinct = np.unique(X, axis=0).shape[0]
    if k_min < 1 or k_max < k_min:
        raise ValueError(f"invalid k range [{k_min}, {k_max}]")
    if k_max - k_min < 2:
        raise ValueError(f"k range [{k_min}, {k_max}] needs at least 3 values for an elbow")
    if k_max > distinct:
        raise ValueError(f"k_max={k_max} exceeds the {distinct} distinct profiles")
    entries = []
    for k in range(k_min, k_max + 1):
        result = kmeans_best(
            X, KMeansConfig(k, config.restarts, config.max_iterations, config.seed), threads=threads
        )
        entries.append((k, result.total_wcss))
    for (k1, w1), (k2, w2) in zip(entries, entries[1:]):
        if w2 > w1:
            logger.warning("best WCSS increased from k=%d (%.6g) to k=%d (%.6g)", k1, w1, k2, w2)
    second = tuple(
        (entries[i][0], entries[i - 1][1] - 2.0 * entries[i][1] + entries[i + 1][1])
        for i in range(1, len(entries) - 1)
    )
    suggested_k = max(second, key=lambda kv: (kv[1], -kv[0]))[0]
    values = [w for _, w in entries]
    degenerate = (max(values) - min(values)) <= 1e-12 * max(1.0, max(values))
    return ElbowReport(tuple(entries), second, suggested_k, degenerate)


def _stirling2(n: int, k: int) -> int:
    """Number of partitions of n items into exactly k nonempty blocks."""
    row = [1] + [0] * k
    for _ in range(n):
        new = [0] * (k + 1)
        for j in range(1, k + 1):
            new[j] = row[j - 1] + j * row[j]
        row = new
        row[0] = 0
    return row[k]


def _partition_chunks(n: int, k: int, chunk_size: int = 200_000):
    """Yield (chunk, n) arrays of restricted-growth labelings with exactly k blocks.

    Depth-first over label choices in increasing order, so the enumeration
    (and therefore tie-breaking downstream) is deterministic.
    """
    labels = np.zeros(n, dtype=np.int64)
    batch: list[np.ndarray] = []
    stack = [(0, 0, 0)]  # (item index, blocks used so far, label to try)
    while stack:
        i, used, j = stack.pop()
        if i == n:
            if used == k:
                batch.append(labels.copy())
                if len(batch) >= chunk_size:
                    yield np.array(batch)
                    batch.clear()
            continue
        if n - i < k - used:  # not enough items left to fill k blocks
            continue
        if j + 1 < min(used + 1, k):
            stack.append((i, used, j + 1))
        labels[i] = j
        stack.append((i + 1, used + 1 if j == used else used, 0))
    if batch:
        yield np.array(batch)


def brute_force_optimum(profiles, k: int) -> ClusteringResult:
    """Exact minimum-WCSS clustering by exhaustive partition enumeration.

    Raises InstanceTooLargeError when the number of partitions into k
    nonempty clusters exceeds BRUTE_FORCE_LIMIT.
    """
    X, units = _as_matrix(profiles)
    n = X.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k={k} invalid for {n} profiles")
    count = _stirling2(n, k)
    if count > BRUTE_FORCE_LIMIT:
        raise InstanceTooLargeError(f"{count} partitions of {n} items into {k} blocks exceeds {BRUTE_FORCE_LIMIT}")
    total_sq = float((X * X).sum())
    best_w = np.inf
    best_labels = None
    for P in _partition_chunks(n, k):
        B = P.shape[0]
        onehot = np.zeros((B, n, k))
        onehot[np.repeat(np.arange(B), n), np.tile(np.arange(n), B), P.ravel()] = 1.0
        counts = onehot.sum(axis=1)
        sums = np.einsum("bnk,nd->bkd", onehot, X)
        w = total_sq - ((sums**2).sum(axis=2) / counts).sum(axis=1)
        idx = int(np.argmin(w))
        if w[idx] < best_w:
            best_w = float(w[idx])
            best_labels = P[idx].copy()
    assign = best_labels
    C = np.stack([X[assign == j].mean(axis=0) for j in range(k)])
    return _build_result(X, assign, C, units, winning_restart=-1, iterations_used=0)


def write_result_json(result: ClusteringResult, config: KMeansConfig | None, path, profile_refs=None) -> Path:
    """Serialize a ClusteringResult (plus optional profile id/label refs) as JSON."""
    doc = {
        "config": None
        if config is None
        else {
            "k": config.k,
            "restarts": config.restarts,
            "max_iterations": config.max_iterations,
            "seed": config.seed,
        },
        "assignments": list(result.assignments),
        "centroids": [list(c.values) for c in result.centroids],
        "units": result.centroids[0].units,
        "per_cluster_wcss": list(result.per_cluster_wcss),
        "total_wcss": result.total_wcss,
        "winning_restart": result.winning_restart,
        "iterations_used": result.iterations_used,
        "profiles": None if profile_refs is None else [[p.property_id, p.day_set] for p in profile_refs],
    }
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_elbow_csv(report: ElbowReport, path) -> Path:
    """Write the elbow curve CSV: k,wcss,second_difference plus a suggested_k line."""
    second = dict(report.second_differences)
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "wcss", "second_difference"])
        for k, w in report.entries:
            writer.writerow([k, repr(w), repr(second[k]) if k in second else ""])
        fh.write(f"# suggested_k={report.suggested_k}\n")
        if report.degenerate:
            fh.write("# degenerate=true\n")
    return path


def read_elbow_csv(path) -> ElbowReport:
    """Reload an elbow report written by write_elbow_csv."""
    entries = []
    second = []
    suggested_k = None
    degenerate = False
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            if row[0].startswith("#"):
                text = row[0].lstrip("# ")
                if text.startswith("suggested_k="):
                    suggested_k = int(text.split("=", 1)[1])
                elif text.startswith("degenerate="):
                    degenerate = text.split("=", 1)[1] == "true"
                continue
            if row[0] == "k":
                continue
            entries.append((int(row[0]), float(row[1])))
            if row[2] != "":
                second.append((int(row[0]), float(row[2])))
    if suggested_k is None:
        raise ValueError(f"{path}: missing suggested_k line")
    return ElbowReport(tuple(entries), tuple(second), suggested_k, degenerate)
