"""Timing harness comparing the numba kernels against the numpy fallbacks."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass
class BenchRow:
    kernel: str
    workload: str
    numpy_ms: float
    numba_ms: float | None

    @property
    def speedup(self) -> float | None:
        if self.numba_ms is None or self.numba_ms == 0:
            return None
        return self.numpy_ms / self.numba_ms


def _time(fn, repeats: int) -> float:
    fn()  # warm-up (compilation for the numba flavour)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def run_benchmarks(scale: float = 1.0, repeats: int = 5) -> list[BenchRow]:
    rng = np.random.default_rng(0)
    n_pts = int(4096 * scale)
    pts = rng.normal(size=(n_pts, 3))
    queries = rng.normal(size=(int(512 * scale), 3))
    rows = []

    workloads = [
        (
            "fps",
            f"{n_pts} -> {n_pts // 8} points",
            lambda f: f(pts, n_pts // 8, 0),
            kernels.fps_indices_numpy,
            kernels.fps_indices_numba,
        ),
        (
            "knn",
            f"{queries.shape[0]} queries x {n_pts} refs, k=16",
            lambda f: f(queries, pts, 16),
            kernels.knn_indices_numpy,
            kernels.knn_indices_numba,
        ),
        (
            "points_in_box",
            f"{n_pts * 8} points",
            lambda f, big=rng.normal(size=(n_pts * 8, 3)): f(
                big, 0.0, 0.0, 0.0, 1.0, 2.0, 0.8, 0.4
            ),
            kernels.points_in_box_numpy,
            kernels.points_in_box_numba,
        ),
    ]
    for name, workload, call, np_fn, nb_fn in workloads:
        numpy_ms = _time(lambda: call(np_fn), repeats)
        numba_ms = _time(lambda: call(nb_fn), repeats) if nb_fn is not None else None
        rows.append(BenchRow(name, workload, numpy_ms, numba_ms))

    n_pairs = int(2000 * scale)
    rects = []
    for _ in range(2 * n_pairs):
        theta = rng.uniform(-np.pi, np.pi)
        c, s = np.cos(theta), np.sin(theta)
        half = rng.uniform(0.4, 2.0, size=2)
        corners = np.array(
            [
                [half[0], -half[1]],
                [half[0], half[1]],
                [-half[0], half[1]],
                [-half[0], -half[1]],
            ]
        )
        rects.append(corners @ np.array([[c, -s], [s, c]]).T + rng.uniform(-1, 1, 2))

    def clip_all(fn):
        return [fn(rects[2 * i], rects[2 * i + 1]) for i in range(n_pairs)]

    numpy_ms = _time(lambda: clip_all(kernels.polygon_intersection_area_numpy), repeats)
    numba_ms = (
        _time(lambda: clip_all(kernels.polygon_intersection_area_numba), repeats)
        if kernels.polygon_intersection_area_numba is not None
        else None
    )
    rows.append(BenchRow("polygon_clip", f"{n_pairs} rectangle pairs", numpy_ms, numba_ms))
    return rows


def format_rows(rows: list[BenchRow]) -> str:
    header = (
        f"{'kernel':<14} {'workload':<28} {'numpy ms':>10} {'numba ms':>10} "
        f"{'speedup':>8}"
    )
    lines = [header, "-" * len(header)]
    for row in rows:
        numba = f"{row.numba_ms:.3f}" if row.numba_ms is not None else "n/a"
        speed = f"{row.speedup:.1f}x" if row.speedup is not None else "n/a"
        lines.append(
            f"{row.kernel:<14} {row.workload:<28} {row.numpy_ms:>10.3f} "
            f"{numba:>10} {speed:>8}"
        )
    return "\n".join(lines)
