"""Storage overhead of the four schemes as group size and item count grow.

Writes two CSV files next to this script and, when matplotlib is around,
the matching plots.
"""
from pathlib import Path

from icnshare.overhead import ALL_SCHEMES, DEFAULT_SCENARIO, group_size_sweep, item_count_sweep, \
    storage_overhead, sweep_csv

out = Path(__file__).with_name("output")
out.mkdir(exist_ok=True)

print("default scenario", DEFAULT_SCENARIO)
for scheme in ALL_SCHEMES:
    bits = storage_overhead(scheme)
    print(f"  {scheme.value:<14} {bits:>9} bits  ({bits / 8 / 1024:.1f} KiB)")

(out / "overhead_vs_group_size.csv").write_text(sweep_csv(ALL_SCHEMES, "U_G", range(1, 51)))
(out / "overhead_vs_items.csv").write_text(sweep_csv(ALL_SCHEMES, "F", range(1, 101)))

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt:
    for rows, label, name in ((group_size_sweep(), "subscribers per policy", "group_size"),
                              (item_count_sweep(), "content items", "items")):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for scheme in ALL_SCHEMES:
            pts = [(r["value"], r["bits"] / 8 / 1024) for r in rows if r["scheme"] == scheme.value]
            ax.plot(*zip(*pts), label=scheme.value)
        ax.set_xlabel(label)
        ax.set_ylabel("storage (KiB)")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / f"overhead_vs_{name}.png", dpi=120)
print("wrote", ", ".join(sorted(p.name for p in out.iterdir())))
