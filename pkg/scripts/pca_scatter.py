"""First three PCA components of every trace, as CSV and (if matplotlib is present) a 3-D plot.

    python3 scripts/pca_scatter.py --out results/pca_scatter.csv
"""

import argparse
import csv
from pathlib import Path

from dataflow_sca import io as sio
from dataflow_sca.pipeline import GridSearchSpace, prepare
from dataflow_sca.preprocess import PreprocessConfig
from dataflow_sca.victim import default_models, generate_dataset


def plot(csv_path, png_path):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping the plot")
        return
    rows = list(csv.DictReader(open(csv_path, newline="")))
    fig = plt.figure(figsize=(7, 6))
    ax = fig.add_subplot(projection="3d")
    for key in sorted({(r["folding"], r["quantization"]) for r in rows}, key=lambda k: tuple(map(int, k))):
        pts = [r for r in rows if (r["folding"], r["quantization"]) == key]
        ax.scatter(*[[float(r[c]) for r in pts] for c in ("pc1", "pc2", "pc3")], s=6,
                   label=f"F{key[0]} Q{key[1]}")
    ax.set_xlabel("PC1")
    ax.set_ylabel("PC2")
    ax.set_zlabel("PC3")
    ax.legend(markerscale=3, fontsize=8)
    fig.savefig(png_path, dpi=120, bbox_inches="tight")
    print(f"wrote {png_path}")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--traces-per-config", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-average", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("pca_scatter.csv"))
    args = p.parse_args()

    models = default_models(args.seed)
    ds = generate_dataset(models, args.traces_per_config)
    cfg = PreprocessConfig(models[0].window_samples, models[0].loading_len_base, args.n_average)
    trained = prepare(ds, GridSearchSpace(n_comp_range=(3, 12), knn_k_values=(13,)), cfg)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    sio.export_pca_scatter(trained, ds, args.out)
    print(f"wrote {args.out}")
    plot(args.out, args.out.with_suffix(".png"))


if __name__ == "__main__":
    main()
