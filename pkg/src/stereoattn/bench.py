"""Wall-clock and operation-count sweep of 4-D versus stereo attention."""
from __future__ import annotations

import csv
import io
import itertools
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .attention import AttentionParams, TokenGrid, layer_forward
from .flops import ShapeSpec, empirical_count, flops_decomposed
from .kernels import make_rng
from .rope import RopeConfig

BENCH_COLUMNS = ("b", "f", "h", "w", "d", "analytic_full4d", "analytic_stereo_total", "analytic_ratio",
                 "analytic_row_grouped", "empirical_full4d", "empirical_stereo_total", "empirical_ratio",
                 "full4d_ms", "stereo_ms", "speedup")


def default_sweep() -> List[ShapeSpec]:
    """Twenty shapes with f*h >= 180, where the w-token row term is within 1% of the grouped count."""
    fh = [(13, 15), (14, 14), (15, 12), (12, 16), (20, 9)]
    return [ShapeSpec(1, f, h, w, d) for (f, h), w, d in itertools.product(fh, (3, 6), (16, 32))]


def worker_count() -> int:
    """Worker cap from SW_THREADS (default 1)."""
    raw = os.environ.get("SW_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"SW_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError("SW_THREADS must be a positive integer")
    return n


@dataclass
class BenchRow:
    shape: ShapeSpec
    analytic_full4d: int
    analytic_stereo_total: int
    analytic_ratio: float
    analytic_row_grouped: int
    empirical_full4d: int
    empirical_stereo_total: int
    full4d_ms: float
    stereo_ms: float

    @property
    def empirical_ratio(self) -> float:
        return self.empirical_full4d / self.empirical_stereo_total

    @property
    def speedup(self) -> float:
        return self.full4d_ms / self.stereo_ms

    def as_row(self) -> dict:
        s = self.shape
        return {"b": s.b, "f": s.f, "h": s.h, "w": s.w, "d": s.d,
                "analytic_full4d": self.analytic_full4d, "analytic_stereo_total": self.analytic_stereo_total,
                "analytic_ratio": repr(self.analytic_ratio), "analytic_row_grouped": self.analytic_row_grouped,
                "empirical_full4d": self.empirical_full4d, "empirical_stereo_total": self.empirical_stereo_total,
                "empirical_ratio": repr(self.empirical_ratio), "full4d_ms": f"{self.full4d_ms:.3f}",
                "stereo_ms": f"{self.stereo_ms:.3f}", "speedup": f"{self.speedup:.3f}"}


def time_forward(s: ShapeSpec, mode: str, repeats: int = 3, seed: int = 0) -> float:
    """Best-of-``repeats`` milliseconds for one single-head forward pass over ``b`` grids."""
    rng = make_rng(seed)
    cfg = RopeConfig(d=s.d)
    params = AttentionParams.init(rng, s.d, 1, cfg, dtype=np.float32)
    cams = np.broadcast_to(np.eye(4), (2, s.f, 4, 4)).copy()
    grids = [TokenGrid(rng.standard_normal((2, s.f, s.h, s.w, s.d)).astype(np.float32), cams) for _ in range(s.b)]
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for g in grids:
            layer_forward(g.flat(), g, params, cfg, mode)
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def _counts(s: ShapeSpec):
    return empirical_count(s, "full4d"), empirical_count(s, "stereo")


def run_bench(shapes: Optional[Sequence[ShapeSpec]] = None, repeats: int = 3, seed: int = 0,
              workers: Optional[int] = None) -> List[BenchRow]:
    """Sorted sweep rows.  Counting runs in parallel; timing always runs serially."""
    shapes = sorted(set(shapes if shapes is not None else default_sweep()),
                    key=lambda s: (s.b, s.f, s.h, s.w, s.d))
    workers = worker_count() if workers is None else workers
    with ThreadPoolExecutor(max_workers=workers) as pool:
        counts = list(pool.map(_counts, shapes))
    rows = []
    for s, (emp_full, emp_stereo) in zip(shapes, counts):
        rep = flops_decomposed(s)
        rows.append(BenchRow(s, rep.analytic_full4d, rep.analytic_stereo_total, rep.ratio,
                             rep.analytic_row_grouped, emp_full, emp_stereo,
                             time_forward(s, "full4d", repeats, seed), time_forward(s, "stereo", repeats, seed)))
    return rows


def bench_csv(rows: Iterable[BenchRow]) -> str:
    buf = io.StringIO()
    wr = csv.DictWriter(buf, fieldnames=BENCH_COLUMNS, lineterminator="\n")
    wr.writeheader()
    for r in rows:
        wr.writerow(r.as_row())
    return buf.getvalue()
