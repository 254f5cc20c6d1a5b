"""
Attention cost: full 4-D versus stereo
======================================

Counting 2 FLOPs per multiply-add over the score and value products, one head
over L tokens costs 4 L^2 d.  The table compares the closed forms with counts
recorded while running the kernels.

To plot a sweep written by ``stereoattn bench --out bench.csv``::

    import csv, matplotlib.pyplot as plt
    rows = list(csv.DictReader(open("bench.csv")))
    tokens = [2 * int(r["f"]) * int(r["h"]) * int(r["w"]) for r in rows]
    plt.loglog(tokens, [float(r["full4d_ms"]) for r in rows], "o", label="full 4-D")
    plt.loglog(tokens, [float(r["stereo_ms"]) for r in rows], "s", label="stereo")
    plt.xlabel("tokens"); plt.ylabel("ms"); plt.legend(); plt.show()
"""
from stereoattn.flops import ShapeSpec, flops_decomposed, reports_to_csv, with_empirical

ref = flops_decomposed(ShapeSpec(b=1, f=13, h=15, w=20, d=128))
print(f"reference shape: full {ref.analytic_full4d:,}  stereo {ref.analytic_stereo_total:,}  "
      f"ratio {ref.ratio:.4f}")

# %%
# The closed-form row term 4 b f h w^2 d sizes a row group as w tokens.  It
# holds 2w, so the kernels do 4 b f h (2w)^2 d; the gap shrinks as f*h grows.
shapes = [ShapeSpec(1, f, h, w, 16) for f, h, w in [(1, 2, 4), (2, 4, 4), (4, 8, 4), (12, 16, 3)]]
reports = [with_empirical(flops_decomposed(s)) for s in shapes]
print(f"{'f h w':>8} {'full4d':>12} {'measured':>12} {'stereo':>12} {'measured':>12}")
for r in reports:
    s = r.shape
    print(f"{s.f:2d} {s.h:2d} {s.w:2d} {r.analytic_full4d:12,} {r.empirical_full4d:12,} "
          f"{r.analytic_stereo_total:12,} {r.empirical_stereo_total:12,}")

print()
print(reports_to_csv(reports))
