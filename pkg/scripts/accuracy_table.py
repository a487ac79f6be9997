"""Per-configuration accuracy of RF and k-NN on PCA features, with and without averaging.

Prints one block per (classifier, n_average) with folding and quantization
accuracy per configuration and the overall average, and optionally writes
the same rows as CSV.

    python3 scripts/accuracy_table.py --traces-per-config 200 --out results/
"""

import argparse
import logging
import time
from pathlib import Path

from dataflow_sca import io as sio
from dataflow_sca.pipeline import GridSearchSpace, evaluate, prepare
from dataflow_sca.preprocess import PreprocessConfig
from dataflow_sca.victim import default_models, generate_dataset

# full RF grid is 50 x 9 combinations; the reduced one keeps a 1-core run to a minute
RF_REDUCED = dict(n_comp_values=(4, 8, 12, 20, 40), rf_estimators=(100,), rf_min_split=(5,))


def run(ds, kind, n_average, window, loading, full_rf, jobs):
    extra = {} if kind == "knn" or full_rf else RF_REDUCED
    space = GridSearchSpace(classifier_kind=kind, **extra)
    t0 = time.perf_counter()
    trained = prepare(ds, space, PreprocessConfig(window, loading, n_average), n_jobs=jobs)
    report = evaluate(trained, ds)
    return trained, report, time.perf_counter() - t0


def print_block(name, trained, report, secs):
    print(f"\n{name}  (n_comp={trained.n_comp}, {secs:.1f}s)")
    print(f"{'config':>8} {'folding':>8} {'quant':>8}")
    for c in report.configs:
        print(f"{str(c):>8} {report.folding_accuracy[c]:8.4f} {report.quantization_accuracy[c]:8.4f}")
    print(f"{'average':>8} {report.folding_overall:8.4f} {report.quantization_overall:8.4f}"
          f"   overall {report.overall:.4f}")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--traces-per-config", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classifiers", default="rf,knn")
    p.add_argument("--full-rf-grid", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", type=Path, help="directory for per-run CSV reports")
    args = p.parse_args()
    logging.basicConfig(level=logging.WARNING)

    models = default_models(args.seed)
    window, loading = models[0].window_samples, models[0].loading_len_base
    ds = generate_dataset(models, args.traces_per_config)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
    for kind in args.classifiers.split(","):
        for n in (1, 4):
            trained, report, secs = run(ds, kind, n, window, loading, args.full_rf_grid, args.jobs)
            name = f"{kind.upper()}(PCA{'-A4' if n == 4 else ''})"
            print_block(name, trained, report, secs)
            if args.out:
                sio.write_report_csv(report, args.out / f"{kind}_a{n}.csv", trained, timing=False)


if __name__ == "__main__":
    main()
