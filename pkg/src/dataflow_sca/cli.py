"""Command-line entry point: generate, prepare, attack, evaluate, export-pca.

Exit codes: 0 success, 2 invalid arguments, 3 data-format error,
4 contract violation.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import io as sio
from .core import TEST, ConfigSpace
from .errors import ContractViolation, DataFormatError, InvalidArgument, UnsupportedOperation
from .pipeline import GridSearchSpace, attack, evaluate, prepare
from .preprocess import PreprocessConfig
from .victim import default_models, generate_dataset

log = logging.getLogger("dataflow_sca")

EXIT_OK, EXIT_ARGS, EXIT_FORMAT, EXIT_CONTRACT = 0, 2, 3, 4


def _int_list(text):
    return tuple(int(v) for v in text.split(",") if v)


def _values(text):
    if ":" in text:
        lo, hi = (int(v) for v in text.split(":"))
        return tuple(range(lo, hi + 1))
    return _int_list(text)


def parse_grid(items):
    """``--grid n_comp=1:50 --grid k=3,5,7`` -> GridSearchSpace keyword arguments."""
    keys = {"n_comp": "n_comp_values", "k": "knn_k_values", "n_estimators": "rf_estimators",
            "min_samples_split": "rf_min_split", "cv_folds": "cv_folds", "top_k": "top_k_features"}
    out = {}
    for item in items or []:
        key, _, val = item.partition("=")
        if key not in keys or not val:
            raise InvalidArgument(f"bad --grid entry {item!r}; keys: {', '.join(keys)}")
        vals = _values(val)
        out[keys[key]] = vals[0] if key in ("cv_folds", "top_k") else vals
    return out


def cmd_generate(args):
    overrides = {"base_period_samples": args.period, "noise_sigma": args.noise,
                 "base_amplitude": args.amplitude, "quant_amplitude_gain": args.quant_gain,
                 "cpu_burst_rate": args.burst_rate, "calib_offset_sigma": args.calib_sigma,
                 "window_samples": args.window, "loading_len_base": args.loading}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    space = ConfigSpace(args.foldings, args.quantizations)
    ds = generate_dataset(default_models(args.seed, space, **overrides), args.traces_per_config,
                          args.split_ratio, n_jobs=args.jobs)
    sio.write_dataset(ds, args.out)
    print(f"wrote {len(ds)} traces ({len(space)} configs) to {args.out}")


def _window_from(ds, args):
    sim = ds.metadata.get("simulator")
    window = args.window if args.window is not None else (sim[0]["window_samples"] if sim else None)
    loading = args.loading if args.loading is not None else (sim[0]["loading_len_base"] if sim else None)
    if window is None or loading is None:
        raise InvalidArgument("--window and --loading are required for non-synthetic datasets")
    return window, loading


def cmd_prepare(args):
    ds = sio.read_dataset(args.db)
    window, loading = _window_from(ds, args)
    cfg = PreprocessConfig(window, loading, args.n_average)
    space = GridSearchSpace(classifier_kind=args.classifier, feature_path=args.features,
                            seed=args.seed, **parse_grid(args.grid))
    trained = prepare(ds, space, cfg, n_jobs=args.jobs)
    sio.save_model(trained, args.out)
    c = trained.chosen
    print(f"n_comp={c['n_comp']} folding={c['folding']} quantization={c['quantization']}")
    if trained.validation:
        print("validation " + " ".join(f"{k}={v:.4f}" for k, v in trained.validation.items()))
    print(f"wrote model to {args.out}")


def cmd_attack(args):
    trained = sio.load_model(args.model)
    traces = []
    for path in [args.trace, *(args.traces or [])]:
        traces.extend(lt.trace for lt in sio.read_dataset(path).traces)
    res = attack(trained, traces, n_average=args.n_average)
    print(f"folding={res.config.folding} confidence={res.confidence['folding']:.3f}")
    print(f"quantization={res.config.quantization} confidence={res.confidence['quantization']:.3f}")
    for stage, secs in res.timing.items():
        print(f"time.{stage}={secs:.6f}")


def cmd_evaluate(args):
    trained = sio.load_model(args.model)
    ds = sio.read_dataset(args.db)
    report = evaluate(trained, ds)
    if args.no_timing:
        sio.write_report_csv(report, args.out, trained, timing=False)
    else:
        test = [lt.trace for lt, s in zip(ds.traces, ds.split) if s == TEST]
        one = attack(trained, test[:trained.preprocess_cfg.n_average]).timing
        sio.write_report_csv(report, args.out, trained, one)
    print(f"overall={report.overall:.4f} folding={report.folding_overall:.4f} "
          f"quantization={report.quantization_overall:.4f}")
    print(f"wrote report to {args.out}")


def cmd_export_pca(args):
    trained = sio.load_model(args.model)
    ds = sio.read_dataset(args.db)
    sio.export_pca_scatter(trained, ds, args.out)
    print(f"wrote PCA scatter to {args.out}")


def build_parser():
    p = argparse.ArgumentParser(prog="dataflow-sca", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a labeled trace database")
    g.add_argument("--out", required=True)
    g.add_argument("--traces-per-config", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--period", type=float)
    g.add_argument("--noise", type=float)
    g.add_argument("--amplitude", type=float)
    g.add_argument("--quant-gain", type=float)
    g.add_argument("--burst-rate", type=float)
    g.add_argument("--calib-sigma", type=float)
    g.add_argument("--window", type=int, help="post-loading capture length (samples)")
    g.add_argument("--loading", type=int, help="loading length at folding 1 (samples)")
    g.add_argument("--split-ratio", type=float, default=0.8)
    g.add_argument("--foldings", type=_int_list, default=(1, 2, 4, 8))
    g.add_argument("--quantizations", type=_int_list, default=(4, 6))
    g.add_argument("--jobs", type=int, default=1)
    g.set_defaults(func=cmd_generate)

    q = sub.add_parser("prepare", help="offline phase: tune and validate classifiers")
    q.add_argument("--db", required=True)
    q.add_argument("--classifier", choices=("knn", "rf"), required=True)
    q.add_argument("--features", choices=("pca", "baseline"), default="pca")
    q.add_argument("--n-average", type=int, default=1)
    q.add_argument("--out", required=True)
    q.add_argument("--grid", action="append", metavar="KEY=VALUES",
                   help="override a grid axis, e.g. n_comp=1:50, k=3,5, n_estimators=100")
    q.add_argument("--window", type=int)
    q.add_argument("--loading", type=int)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--jobs", type=int, default=1)
    q.set_defaults(func=cmd_prepare)

    a = sub.add_parser("attack", help="online phase: classify fresh traces")
    a.add_argument("--model", required=True)
    a.add_argument("--trace", required=True)
    a.add_argument("--traces", nargs="*")
    a.add_argument("--n-average", type=int)
    a.set_defaults(func=cmd_attack)

    e = sub.add_parser("evaluate", help="per-configuration accuracy and timing report")
    e.add_argument("--model", required=True)
    e.add_argument("--db", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--no-timing", action="store_true",
                   help="omit wall-clock rows so the CSV is byte-reproducible")
    e.set_defaults(func=cmd_evaluate)

    x = sub.add_parser("export-pca", help="first three PCA components per trace as CSV")
    x.add_argument("--model", required=True)
    x.add_argument("--db", required=True)
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_export_pca)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (InvalidArgument, UnsupportedOperation) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ARGS
    except (DataFormatError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except ContractViolation as e:
        print(f"contract violation: {e}", file=sys.stderr)
        return EXIT_CONTRACT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
