"""Offline preparation (tuning + validation) and the online attack.

Tuning only ever reads the training split: PCA (or the feature bank) is fit
on it and every grid combination is scored by stratified k-fold
cross-validation inside it. The test split is read once, for the final
validation of the winning combination.
"""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import features as feat
from .classifiers import TARGETS, ParameterClassifier, encode, fit_parameter_classifier
from .core import TEST, TRAIN, AcceleratorConfig, ConfigSpace, Trace, TraceDataset
from .errors import ContractViolation, FoldConstructionError, InvalidArgument
from .forest import rf_fit, rf_predict_proba
from .knn import knn_predict_many_k
from .pca import PcaModel
from .pca import fit as pca_fit
from .preprocess import PreprocessConfig, average, average_dataset, normalize, trim

STAGES = ("db_build", "normalize", "extraction", "folding_clf", "quant_clf", "total")
_CLF_STAGE = {"folding": "folding_clf", "quantization": "quant_clf"}


# --------------------------------------------------------------------------- timing

def time_stage(stage, work, timer=None):
    """Run ``work()`` and return (result, wall seconds); optionally accumulate into ``timer``."""
    t0 = time.perf_counter()
    result = work()
    dt = time.perf_counter() - t0
    if timer is not None:
        timer.add(stage, dt)
    return result, dt


class StageTimer:
    def __init__(self):
        self.seconds = {s: 0.0 for s in STAGES}

    def add(self, stage, dt):
        self.seconds[stage] = self.seconds.get(stage, 0.0) + dt

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.add(name, time.perf_counter() - t0)

    def as_dict(self):
        return dict(self.seconds)


# --------------------------------------------------------------------------- types

@dataclass(frozen=True)
class GridSearchSpace:
    n_comp_range: tuple[int, int] = (1, 50)
    knn_k_values: tuple[int, ...] = tuple(range(3, 20, 2))
    rf_estimators: tuple[int, ...] = (100, 200, 400)
    rf_min_split: tuple[int, ...] = (2, 5, 10)
    classifier_kind: str = "knn"
    feature_path: str = "pca"
    n_comp_values: tuple[int, ...] | None = None
    cv_folds: int = 5
    top_k_features: int = 10
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.n_comp_range
        if not 1 <= lo <= hi:
            raise InvalidArgument(f"invalid n_comp range {self.n_comp_range}")
        if self.n_comp_values is not None and (not self.n_comp_values or min(self.n_comp_values) < 1):
            raise InvalidArgument("n_comp_values must be non-empty positive integers")
        if self.classifier_kind not in ("knn", "rf"):
            raise InvalidArgument(f"classifier_kind must be knn or rf, got {self.classifier_kind!r}")
        if self.feature_path not in ("pca", "baseline"):
            raise InvalidArgument(f"feature_path must be pca or baseline, got {self.feature_path!r}")
        if self.classifier_kind == "knn" and (not self.knn_k_values or min(self.knn_k_values) < 1):
            raise InvalidArgument("knn_k_values must be non-empty positive integers")
        if self.classifier_kind == "rf" and (not self.rf_estimators or not self.rf_min_split
                                             or min(self.rf_estimators) < 1
                                             or min(self.rf_min_split) < 2):
            raise InvalidArgument("rf grid needs n_estimators >= 1 and min_samples_split >= 2")
        if self.cv_folds < 2:
            raise InvalidArgument("cv_folds must be >= 2")

    @property
    def n_comps(self) -> tuple[int, ...]:
        if self.n_comp_values is not None:
            return tuple(sorted(set(int(v) for v in self.n_comp_values)))
        lo, hi = self.n_comp_range
        return tuple(range(lo, hi + 1))

    def classifier_grid(self) -> list[dict]:
        if self.classifier_kind == "knn":
            return [{"k": int(k)} for k in self.knn_k_values]
        return [{"n_estimators": int(n), "min_samples_split": int(m)}
                for n in self.rf_estimators for m in self.rf_min_split]


@dataclass(frozen=True, eq=False)
class TrainedAttack:
    extractor: PcaModel | feat.FeatureBank
    feature_path: str
    folding_clf: ParameterClassifier
    quant_clf: ParameterClassifier
    chosen: dict
    preprocess_cfg: PreprocessConfig
    config_space: ConfigSpace
    tuning_report: list = field(default_factory=list)
    validation: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    audit: dict = field(default_factory=dict)

    @property
    def n_comp(self) -> int:
        return int(self.chosen["n_comp"])

    @property
    def classifier_kind(self):
        return self.folding_clf.kind

    def classifier(self, target):
        return self.folding_clf if target == "folding" else self.quant_clf

    def features(self, processed) -> np.ndarray:
        """Feature matrix (n_comp columns) for preprocessed traces."""
        if self.feature_path == "pca":
            X = np.stack([np.asarray(t.samples, dtype=np.float64) for t in processed])
            return self.extractor.transform(X, self.n_comp)
        return self.extractor.transform(list(processed), self.n_comp)


@dataclass
class AttackResult:
    config: AcceleratorConfig
    confidence: dict
    timing: dict

    def __iter__(self):
        yield self.config
        yield self.confidence


@dataclass
class AttackReport:
    configs: list
    counts: dict
    folding_accuracy: dict
    quantization_accuracy: dict
    joint_accuracy: dict
    timing: dict

    @property
    def overall(self) -> float:
        """Mean over (config, parameter) cells weighted by trace counts."""
        n = sum(self.counts.values())
        if n == 0:
            return float("nan")
        hits = sum(self.counts[c] * (self.folding_accuracy[c] + self.quantization_accuracy[c])
                   for c in self.configs)
        return hits / (2 * n)

    def _agg(self, table):
        n = sum(self.counts.values())
        return sum(self.counts[c] * table[c] for c in self.configs) / n

    @property
    def folding_overall(self):
        return self._agg(self.folding_accuracy)

    @property
    def quantization_overall(self):
        return self._agg(self.quantization_accuracy)

    @property
    def joint_overall(self):
        return self._agg(self.joint_accuracy)


# --------------------------------------------------------------------------- helpers

def stratified_folds(labels, n_folds, seed=0):
    """Fold id per sample; each class is shuffled then dealt round-robin."""
    labels = np.asarray(labels)
    folds = np.empty(labels.size, dtype=np.int64)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7919]))
    for c in np.unique(labels):
        idx = np.nonzero(labels == c)[0]
        if idx.size < n_folds:
            raise FoldConstructionError(
                f"class {c} has {idx.size} samples, fewer than the {n_folds} folds requested")
        idx = idx[rng.permutation(idx.size)]
        folds[idx] = np.arange(idx.size) % n_folds
    return folds


def _seed_for(seed, target):
    return int(np.random.SeedSequence([int(seed), TARGETS.index(target)]).generate_state(1)[0])


def _preprocess_traces(traces, cfg, timer):
    with timer.stage("db_build"):
        trimmed = [trim(t, cfg, trace_id=i) for i, t in enumerate(traces)]
    with timer.stage("normalize"):
        normed = [normalize(t) for t in trimmed]
    return normed


def _preprocess_split(ds, cfg, timer):
    normed = _preprocess_traces([lt.trace for lt in ds.traces], cfg, timer)
    out = TraceDataset(tuple(type(lt)(t, lt.label, lt.input_id) for lt, t in zip(ds.traces, normed)),
                       ds.config_space, ds.split, dict(ds.metadata))
    with timer.stage("db_build"):
        out = average_dataset(out, cfg.n_average)
    return out


def _cv_scores(kind, X, y, n_classes, folds, n_comps, grid, seed, n_jobs):
    """Mean CV accuracy for every (n_comp, params) combination, keyed by combination."""
    n_folds = int(folds.max()) + 1
    hits = {}
    for f in range(n_folds):
        tr, va = folds != f, folds == f
        for nc in n_comps:
            Xtr, Xva = X[tr, :nc], X[va, :nc]
            if kind == "knn":
                ks = [p["k"] for p in grid]
                if max(ks) > Xtr.shape[0]:
                    raise FoldConstructionError(
                        f"k={max(ks)} exceeds the {Xtr.shape[0]} training points of a fold")
                preds = knn_predict_many_k(Xtr, y[tr], n_classes, Xva, ks)
                for i, p in enumerate(grid):
                    hits[(nc, i)] = hits.get((nc, i), 0) + int(np.sum(preds[p["k"]] == y[va]))
            else:
                # trees use per-index RNG streams, so a smaller forest is a prefix of a larger one
                for ms in sorted({p["min_samples_split"] for p in grid}):
                    n_max = max(p["n_estimators"] for p in grid if p["min_samples_split"] == ms)
                    model = rf_fit(Xtr, y[tr], n_max, ms, rng_seed=seed, n_classes=n_classes,
                                   n_jobs=n_jobs)
                    for i, p in enumerate(grid):
                        if p["min_samples_split"] != ms:
                            continue
                        sub = type(model)(model.trees[:p["n_estimators"]], p["n_estimators"], ms,
                                          model.rng_seed, n_classes, model.n_features)
                        pred = rf_predict_proba(sub, Xva).argmax(axis=1)
                        hits[(nc, i)] = hits.get((nc, i), 0) + int(np.sum(pred == y[va]))
    return {key: h / y.size for key, h in hits.items()}


# --------------------------------------------------------------------------- prepare

def prepare(ds: TraceDataset, space: GridSearchSpace, cfg: PreprocessConfig,
            n_jobs: int = 1) -> TrainedAttack:
    """Offline phase: preprocess, fit the extractor, grid-search, validate."""
    timer = StageTimer()
    t_start = time.perf_counter()
    reads_before = ds.audit[TEST]

    train = ds.subset(TRAIN)
    if not train.traces:
        raise InvalidArgument("dataset has no training traces")
    train = _preprocess_split(train, cfg, timer)
    space_cfg = ds.config_space
    n_comps = space.n_comps

    with timer.stage("extraction"):
        if space.feature_path == "pca":
            upper = max(n_comps)
            X_all = train.matrix()
            if upper > X_all.shape[0] - 1:
                raise InvalidArgument(
                    f"grid asks for {upper} components but {X_all.shape[0]} training traces "
                    f"support at most {X_all.shape[0] - 1}")
            extractor = pca_fit(X_all, upper)
            X = extractor.transform(X_all, upper)
            del X_all
        else:
            raw = feat.extract_matrix([lt.trace for lt in train.traces])
            joint = encode([space_cfg.configs.index(lt.label) for lt in train.traces],
                           range(len(space_cfg)))
            extractor = feat.select_features(raw, joint, space.top_k_features, standardize=True)
            X = extractor.transform_matrix(raw)
            if max(n_comps) > X.shape[1]:
                raise InvalidArgument(
                    f"grid asks for {max(n_comps)} features but only {X.shape[1]} were selected")

    joint_labels = np.array([space_cfg.configs.index(lt.label) for lt in train.traces])
    folds = stratified_folds(joint_labels, space.cv_folds, space.seed)
    grid = space.classifier_grid()

    tuning, winners = [], {}
    for target in TARGETS:
        classes = space_cfg.values(target)
        y = encode(train.labels(target), classes)
        with timer.stage(_CLF_STAGE[target]):
            scores = _cv_scores(space.classifier_kind, X, y, len(classes), folds, n_comps, grid,
                                _seed_for(space.seed, target), n_jobs)
        best_key, best_acc = None, -1.0
        for nc in n_comps:
            for i, params in enumerate(grid):
                acc = scores[(nc, i)]
                tuning.append({"target": target, "n_comp": nc, **params, "cv_accuracy": acc})
                if acc > best_acc:
                    best_key, best_acc = (nc, i), acc
        winners[target] = {"n_comp": best_key[0], **grid[best_key[1]], "cv_accuracy": best_acc}

    n_comp = max(w["n_comp"] for w in winners.values())
    clfs = {}
    for target in TARGETS:
        classes = space_cfg.values(target)
        params = {k: v for k, v in winners[target].items() if k not in ("n_comp", "cv_accuracy")}
        with timer.stage(_CLF_STAGE[target]):
            clfs[target] = fit_parameter_classifier(
                target, classes, space.classifier_kind, X[:, :n_comp], train.labels(target),
                params, rng_seed=_seed_for(space.seed, target), n_jobs=n_jobs)
    reads_during_tuning = ds.audit[TEST] - reads_before

    chosen = {"n_comp": n_comp, "classifier": space.classifier_kind,
              "feature_path": space.feature_path, **winners}
    trained = TrainedAttack(extractor, space.feature_path, clfs["folding"], clfs["quantization"],
                            chosen, cfg, space_cfg, tuning,
                            audit={"test_reads_during_tuning": reads_during_tuning})

    # final validation on the held-out split
    if TEST in ds.split:
        test = _preprocess_split(ds.subset(TEST), cfg, StageTimer())
        if test.traces:
            Xt = trained.features([lt.trace for lt in test.traces])
            for target in TARGETS:
                pred = trained.classifier(target).predict(Xt)
                trained.validation[target] = float(np.mean(pred == test.labels(target)))
        trained.audit["test_reads_total"] = ds.audit[TEST] - reads_before
    timer.seconds["total"] = time.perf_counter() - t_start
    trained.timing.update(timer.as_dict())
    return trained


# --------------------------------------------------------------------------- online

def attack(trained: TrainedAttack, traces: list[Trace], n_average: int | None = None) -> AttackResult:
    """Classify one victim from ``n_average`` fresh captures (extra captures are ignored)."""
    cfg = trained.preprocess_cfg
    if n_average is not None and n_average != cfg.n_average:
        raise ContractViolation(
            f"attack n_average={n_average} differs from the training-time value {cfg.n_average}")
    traces = [getattr(t, "trace", t) for t in traces]
    if len(traces) < cfg.n_average:
        raise InvalidArgument(f"need {cfg.n_average} traces for averaging, got {len(traces)}")
    timer = StageTimer()
    t0 = time.perf_counter()
    with timer.stage("normalize"):
        processed = [normalize(trim(t, cfg, trace_id=i)) for i, t in enumerate(traces[:cfg.n_average])]
        processed = average(processed, cfg.n_average)
    with timer.stage("extraction"):
        x = trained.features(processed)
    values, conf = {}, {}
    for target in TARGETS:
        clf = trained.classifier(target)
        with timer.stage(_CLF_STAGE[target]):
            ids, c = clf.predict_with_confidence(x)
        values[target] = clf.classes[int(ids[0])]
        conf[target] = float(c[0])
    timer.seconds["total"] = time.perf_counter() - t0
    return AttackResult(AcceleratorConfig(values["folding"], values["quantization"]), conf,
                        timer.as_dict())


def evaluate(trained: TrainedAttack, test: TraceDataset) -> AttackReport:
    """Per-configuration accuracy of both parameter classifiers on the test split."""
    if TEST not in test.split:
        raise InvalidArgument("evaluation dataset has no test traces")
    timer = StageTimer()
    t0 = time.perf_counter()
    ds = _preprocess_split(test.subset(TEST), trained.preprocess_cfg, timer)
    if not ds.traces:
        raise InvalidArgument("too few test traces for the configured averaging")
    with timer.stage("extraction"):
        X = trained.features([lt.trace for lt in ds.traces])
    preds = {}
    for target in TARGETS:
        with timer.stage(_CLF_STAGE[target]):
            preds[target] = trained.classifier(target).predict(X)
    timer.seconds["total"] = time.perf_counter() - t0

    labels = [lt.label for lt in ds.traces]
    fold_ok = preds["folding"] == ds.labels("folding")
    quant_ok = preds["quantization"] == ds.labels("quantization")
    configs = [c for c in test.config_space.configs if c in set(labels)]
    counts, fa, qa, ja = {}, {}, {}, {}
    for c in configs:
        m = np.array([lab == c for lab in labels])
        counts[c] = int(m.sum())
        fa[c] = float(fold_ok[m].mean())
        qa[c] = float(quant_ok[m].mean())
        ja[c] = float((fold_ok & quant_ok)[m].mean())
    return AttackReport(configs, counts, fa, qa, ja, timer.as_dict())
