"""Analytic attention cost model and its empirical cross-check.

Convention: only the score (Q K^T) and value (A V) products are counted,
2 FLOPs per multiply-accumulate, so a full attention head over ``L`` tokens
of head dimension ``d`` costs ``4 L^2 d``.  Projections are excluded.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

import numpy as np

from .attention import AttentionParams, TokenGrid, layer_forward
from .kernels import FlopCounter, make_rng
from .rope import RopeConfig

CSV_COLUMNS = ("b", "f", "h", "w", "d", "full4d", "attn3d", "row", "stereo_total", "ratio")


@dataclass(frozen=True)
class ShapeSpec:
    b: int
    f: int
    h: int
    w: int
    d: int

    def __post_init__(self):
        for name in ("b", "f", "h", "w", "d"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")

    @property
    def tokens(self) -> int:
        """Tokens of the joint two-view sequence."""
        return 2 * self.f * self.h * self.w


def flops_full_head(L: int, d: int) -> int:
    if L < 1 or d < 1:
        raise ValueError("L and d must be positive")
    return 4 * int(L) ** 2 * int(d)


@dataclass
class FlopsReport:
    shape: ShapeSpec
    analytic_full4d: int
    analytic_3d: int
    analytic_row: int
    analytic_stereo_total: int
    ratio: float
    analytic_row_grouped: int
    d_c: int = 0
    adjusted_full4d: Optional[int] = None
    adjusted_stereo_total: Optional[int] = None
    empirical_full4d: Optional[int] = None
    empirical_3d: Optional[int] = None
    empirical_row: Optional[int] = None
    empirical_stereo_total: Optional[int] = None

    @property
    def empirical_ratio(self) -> Optional[float]:
        if self.empirical_full4d is None or not self.empirical_stereo_total:
            return None
        return self.empirical_full4d / self.empirical_stereo_total

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["shape"] = asdict(self.shape)
        doc["empirical_ratio"] = self.empirical_ratio
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def csv_row(self) -> dict:
        s = self.shape
        return {"b": s.b, "f": s.f, "h": s.h, "w": s.w, "d": s.d,
                "full4d": self.analytic_full4d, "attn3d": self.analytic_3d,
                "row": self.analytic_row, "stereo_total": self.analytic_stereo_total,
                "ratio": repr(self.ratio)}


def reports_to_csv(reports: Iterable[FlopsReport]) -> str:
    buf = io.StringIO()
    wr = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    wr.writeheader()
    for r in reports:
        wr.writerow(r.csv_row())
    return buf.getvalue()


def flops_decomposed(s: ShapeSpec, d_c: int = 0) -> FlopsReport:
    """Closed-form costs of 4-D versus intra-view + row attention.

    ``analytic_row`` keeps the ``4 b f h w^2 d`` term, which sizes a row group
    as ``w`` tokens.  A row group actually holds ``2w`` tokens and costs
    ``4 (2w)^2 d``; that count is ``analytic_row_grouped`` and is what a
    row-attention run does.
    """
    b, f, h, w, d = s.b, s.f, s.h, s.w, s.d
    full = 16 * b * f**2 * h**2 * w**2 * d
    a3d = 8 * b * f**2 * h**2 * w**2 * d
    row = 4 * b * f * h * w**2 * d
    grouped = b * f * h * flops_full_head(2 * w, d)
    total = a3d + row
    rep = FlopsReport(s, full, a3d, row, total, full / total, grouped, d_c)
    if d_c:
        # score product runs over d + d_c dims, value product over d
        def adj(L, groups):
            return groups * 2 * L * L * (2 * d + d_c)
        rep.adjusted_full4d = b * adj(2 * f * h * w, 1)
        rep.adjusted_stereo_total = b * (adj(f * h * w, 2) + adj(2 * w, f * h))
    return rep


def _instrumented_run(s: ShapeSpec, mode: str, d_c: int = 0, dtype=np.float32, seed: int = 0) -> int:
    rng = make_rng(seed)
    cfg = RopeConfig(d=s.d, d_c=d_c)
    params = AttentionParams.init(rng, s.d, 1, cfg, dtype=dtype)
    cams = np.broadcast_to(np.eye(4), (2, s.f, 4, 4)).copy()
    total = 0
    for _ in range(s.b):
        grid = TokenGrid(rng.standard_normal((2, s.f, s.h, s.w, s.d)).astype(dtype), cams)
        counter = FlopCounter()
        layer_forward(grid.flat(), grid, params, cfg, mode, counter=counter)
        total += counter.total
    return total


def empirical_count(s: ShapeSpec, mode: str, d_c: int = 0, dtype=np.float32, seed: int = 0) -> int:
    """Multiply-adds recorded while actually running one head of ``mode`` attention.

    The run goes through the rotary layer, whose pairwise rotations need an
    even head dimension.
    """
    if s.d % 2:
        raise ValueError("empirical counting needs an even head dimension d")
    return _instrumented_run(s, mode, d_c, dtype, seed)


def with_empirical(rep: FlopsReport, dtype=np.float32) -> FlopsReport:
    s = rep.shape
    rep.empirical_full4d = empirical_count(s, "full4d", dtype=dtype)
    rep.empirical_3d = empirical_count(s, "intra", dtype=dtype)
    rep.empirical_row = empirical_count(s, "row", dtype=dtype)
    rep.empirical_stereo_total = empirical_count(s, "stereo", dtype=dtype)
    return rep
