"""Stage timings of preparation, evaluation and a one-trace attack, PCA vs baseline features.

With ``--full-scale`` captures are 387k samples (129k window after a 258k
loading phase), so the attack row is comparable in size to a real capture.

    python3 scripts/timing_table.py --full-scale
"""

import argparse
import statistics

from dataflow_sca.core import TEST
from dataflow_sca.pipeline import STAGES, GridSearchSpace, attack, evaluate, prepare
from dataflow_sca.preprocess import PreprocessConfig
from dataflow_sca.victim import default_models, generate_dataset


def attack_timing(trained, trace, repeats):
    runs = [attack(trained, [trace] * trained.preprocess_cfg.n_average).timing for _ in range(repeats)]
    return {k: statistics.median(r[k] for r in runs) for k in STAGES}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--traces-per-config", type=int)
    p.add_argument("--full-scale", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=5)
    args = p.parse_args()

    if args.full_scale:
        overrides = dict(window_samples=129_000, loading_len_base=258_000)
        n_traces = args.traces_per_config or 8
    else:
        overrides = {}
        n_traces = args.traces_per_config or 200
    models = default_models(args.seed, **overrides)
    window, loading = models[0].window_samples, models[0].loading_len_base
    ds = generate_dataset(models, n_traces)
    cfg = PreprocessConfig(window, loading, 1)
    probe = next(lt.trace for lt, s in zip(ds.traces, ds.split) if s == TEST)

    runs = {
        "kNN(PCA)": GridSearchSpace(n_comp_range=(12, 12), knn_k_values=(13,)),
        "RF(PCA)": GridSearchSpace(classifier_kind="rf", n_comp_values=(40,), rf_estimators=(400,),
                                   rf_min_split=(5,)),
        "kNN(features)": GridSearchSpace(feature_path="baseline", n_comp_range=(10, 10),
                                         knn_k_values=(13,)),
    }
    rows = {}
    for name, space in runs.items():
        trained = prepare(ds, space, cfg)
        rows[name] = (trained.timing, evaluate(trained, ds).timing,
                      attack_timing(trained, probe, args.repeats))

    print(f"{len(ds)} traces of {len(probe)} samples, window {window}")
    for i, phase in enumerate(("preparation", "evaluation", "attack (1 trace)")):
        print(f"\n{phase}")
        print(f"{'stage':>12}" + "".join(f"{n:>15}" for n in rows))
        for stage in STAGES:
            print(f"{stage:>12}" + "".join(f"{rows[n][i][stage]:15.4f}" for n in rows))


if __name__ == "__main__":
    main()
