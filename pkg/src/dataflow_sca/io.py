"""On-disk formats: trace containers (.scatrc), trained attacks (.scam), CSV reports.

Trace container layout (all integers little-endian)::

    b"SCADSET1" | u32 version | u64 manifest length | manifest JSON (utf-8)
    then one record per trace:
    b"SCATRC01" | u32 version | u64 sample_count | f64 sensor_freq_hz
    | u8 has_label | u32 folding | u32 quantization | u64 input_id
    | u8 encoding (0 = f32 LE) | u64 raw_len | sample_count * f32

Model layout::

    b"SCAMODL1" | u32 version | u64 header length | header JSON | array blob

The header lists every array by name with dtype, shape and byte offset into
the blob; fitted matrices are stored as f64 little-endian.
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .classifiers import ParameterClassifier
from .core import (AcceleratorConfig, ConfigSpace, LabeledTrace, Trace, TraceDataset)
from .errors import (CorruptionError, DataFormatError, UnsupportedOperation, UnsupportedVersion)
from .features import FeatureBank
from .forest import DecisionTree, RandomForestModel
from .knn import KnnModel
from .pca import PcaModel
from .preprocess import PreprocessConfig, preprocess_dataset

DATASET_MAGIC = b"SCADSET1"
TRACE_MAGIC = b"SCATRC01"
MODEL_MAGIC = b"SCAMODL1"
VERSION = 1
ENCODING_F32LE = 0

_PREFIX = struct.Struct("<8sIQ")
TRACE_HEADER = struct.Struct("<8sIQdBIIQBQ")


def atomic_write(path, data: bytes):
    """Write to a temporary file next to ``path`` and rename it into place."""
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_bytes(path):
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise OSError(f"cannot read {path}: {e}") from e


def _read_prefix(buf, magic, what):
    if len(buf) < _PREFIX.size:
        raise CorruptionError(f"{what} file truncated in its header", _PREFIX.size, len(buf))
    tag, version, length = _PREFIX.unpack_from(buf, 0)
    if tag != magic:
        raise DataFormatError(f"not a {what} file (magic {tag!r}, expected {magic!r})")
    if version != VERSION:
        raise UnsupportedVersion(version, [VERSION])
    end = _PREFIX.size + length
    if end > len(buf):
        raise CorruptionError(f"{what} header truncated", end, len(buf))
    try:
        header = json.loads(buf[_PREFIX.size:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptionError(f"{what} header is not valid JSON: {e}") from e
    return header, end


# --------------------------------------------------------------------------- datasets

def encode_trace(lt: LabeledTrace) -> bytes:
    samples = np.asarray(lt.trace.samples, dtype="<f4")
    label = lt.label
    head = TRACE_HEADER.pack(TRACE_MAGIC, VERSION, samples.size, lt.trace.sensor_freq_hz,
                             1 if label is not None else 0,
                             label.folding if label else 0, label.quantization if label else 0,
                             int(lt.input_id), ENCODING_F32LE, int(lt.trace.raw_len))
    return head + samples.tobytes()


def decode_trace(buf, pos):
    if pos + TRACE_HEADER.size > len(buf):
        raise CorruptionError("trace record truncated in its header", pos + TRACE_HEADER.size, len(buf))
    (magic, version, n, freq, has_label, fold, quant, input_id, encoding,
     raw_len) = TRACE_HEADER.unpack_from(buf, pos)
    if magic != TRACE_MAGIC:
        raise CorruptionError(f"bad trace record magic {magic!r} at byte {pos}")
    if version != VERSION:
        raise UnsupportedVersion(version, [VERSION])
    if encoding != ENCODING_F32LE:
        raise DataFormatError(f"unknown sample encoding {encoding}")
    start = pos + TRACE_HEADER.size
    end = start + 4 * n
    if end > len(buf):
        raise CorruptionError(f"trace payload truncated: header declares {n} samples, "
                              f"{(len(buf) - start) // 4} present", n, (len(buf) - start) // 4)
    samples = np.frombuffer(buf, dtype="<f4", count=n, offset=start).astype(np.float32)
    label = AcceleratorConfig(fold, quant) if has_label else None
    return LabeledTrace(Trace(samples, freq, raw_len), label, input_id), end


def dataset_bytes(ds: TraceDataset) -> bytes:
    manifest = {
        "n_traces": len(ds),
        "config_space": {"foldings": list(ds.config_space.foldings),
                         "quantizations": list(ds.config_space.quantizations)},
        "counts": {s: sum(1 for x in ds.split if x == s) for s in ("train", "test")},
        "split": list(ds.split),
        "metadata": ds.metadata,
    }
    head = json.dumps(manifest, sort_keys=True).encode("utf-8")
    parts = [_PREFIX.pack(DATASET_MAGIC, VERSION, len(head)), head]
    parts.extend(encode_trace(lt) for lt in ds.traces)
    return b"".join(parts)


def write_dataset(ds: TraceDataset, path):
    atomic_write(path, dataset_bytes(ds))


def dataset_from_bytes(buf) -> TraceDataset:
    manifest, pos = _read_prefix(buf, DATASET_MAGIC, "trace container")
    try:
        expected = int(manifest["n_traces"])
        space = ConfigSpace(tuple(manifest["config_space"]["foldings"]),
                            tuple(manifest["config_space"]["quantizations"]))
        split = tuple(manifest["split"])
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptionError(f"manifest is missing fields: {e}") from e
    traces = []
    while pos < len(buf):
        lt, pos = decode_trace(buf, pos)
        traces.append(lt)
    if len(traces) != expected or len(split) != expected:
        raise CorruptionError(
            f"manifest declares {expected} traces but the file holds {len(traces)} records",
            expected, len(traces))
    return TraceDataset(tuple(traces), space, split, manifest.get("metadata", {}))


def read_dataset(path) -> TraceDataset:
    return dataset_from_bytes(_read_bytes(path))


# --------------------------------------------------------------------------- models

class _Blob:
    def __init__(self):
        self.index = []
        self.chunks = []
        self.offset = 0

    def add(self, name, arr, dtype):
        a = np.ascontiguousarray(arr, dtype=dtype)
        self.index.append({"name": name, "dtype": np.dtype(dtype).str, "shape": list(a.shape),
                           "offset": self.offset, "nbytes": a.nbytes})
        self.chunks.append(a.tobytes())
        self.offset += a.nbytes
        return name


def _clf_meta(clf: ParameterClassifier, blob, prefix):
    meta = {"target": clf.target, "classes": list(clf.classes), "kind": clf.kind}
    m = clf.model
    if isinstance(m, KnnModel):
        meta.update(k=m.k, n_classes=m.n_classes)
        blob.add(f"{prefix}.points", m.points, "<f8")
        blob.add(f"{prefix}.labels", m.labels, "<i8")
    else:
        meta.update(n_estimators=m.n_estimators, min_samples_split=m.min_samples_split,
                    rng_seed=m.rng_seed, n_classes=m.n_classes, n_features=m.n_features)
        blob.add(f"{prefix}.node_counts", [t.n_nodes for t in m.trees], "<i8")
        blob.add(f"{prefix}.feature", np.concatenate([t.feature for t in m.trees]), "<i4")
        blob.add(f"{prefix}.threshold", np.concatenate([t.threshold for t in m.trees]), "<f8")
        blob.add(f"{prefix}.left", np.concatenate([t.left for t in m.trees]), "<i4")
        blob.add(f"{prefix}.right", np.concatenate([t.right for t in m.trees]), "<i4")
        blob.add(f"{prefix}.value", np.concatenate([t.value for t in m.trees]), "<f8")
    return meta


def model_bytes(trained) -> bytes:
    blob = _Blob()
    ex = trained.extractor
    if isinstance(ex, PcaModel):
        extractor = {"kind": "pca"}
        blob.add("pca.mean", ex.mean, "<f8")
        blob.add("pca.components", ex.components, "<f8")
        blob.add("pca.explained_variance", ex.explained_variance, "<f8")
    else:
        extractor = {"kind": "baseline", "feature_names": list(ex.feature_names),
                     "selected_indices": list(ex.selected_indices)}
        for name in ("scores", "center", "scale"):
            if getattr(ex, name) is not None:
                blob.add(f"bank.{name}", getattr(ex, name), "<f8")
    cfg = trained.preprocess_cfg
    header = {
        "feature_path": trained.feature_path,
        "extractor": extractor,
        "classifiers": {"folding": _clf_meta(trained.folding_clf, blob, "folding"),
                        "quantization": _clf_meta(trained.quant_clf, blob, "quantization")},
        "chosen": trained.chosen,
        "preprocess": {"window_samples": cfg.window_samples, "loading_samples": cfg.loading_samples,
                       "n_average": cfg.n_average},
        "config_space": {"foldings": list(trained.config_space.foldings),
                         "quantizations": list(trained.config_space.quantizations)},
        "tuning_report": trained.tuning_report,
        "validation": trained.validation,
        "timing": trained.timing,
        "audit": trained.audit,
        "arrays": blob.index,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    return b"".join([_PREFIX.pack(MODEL_MAGIC, VERSION, len(head)), head, *blob.chunks])


def save_model(trained, path):
    atomic_write(path, model_bytes(trained))


def _arrays(header, buf, base):
    out = {}
    for entry in header.get("arrays", []):
        start = base + entry["offset"]
        end = start + entry["nbytes"]
        if end > len(buf):
            raise CorruptionError(f"model array {entry['name']} truncated", end, len(buf))
        dt = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        if count * dt.itemsize != entry["nbytes"]:
            raise CorruptionError(f"model array {entry['name']} has inconsistent shape",
                                  count * dt.itemsize, entry["nbytes"])
        a = np.frombuffer(buf, dtype=dt, count=count, offset=start).reshape(entry["shape"])
        out[entry["name"]] = a.astype(dt.newbyteorder("="))
    return out


def _load_clf(meta, arrays, prefix, n_comp):
    classes = tuple(meta["classes"])
    if meta["kind"] == "knn":
        pts = arrays[f"{prefix}.points"]
        if pts.shape[1] != n_comp:
            raise CorruptionError(f"{prefix} k-NN points have dimension {pts.shape[1]}, "
                                  f"model uses {n_comp}", n_comp, pts.shape[1])
        pts.flags.writeable = False
        model = KnnModel(int(meta["k"]), pts, arrays[f"{prefix}.labels"], int(meta["n_classes"]))
    else:
        counts = arrays[f"{prefix}.node_counts"]
        bounds = np.concatenate([[0], np.cumsum(counts)])
        trees = []
        for i in range(counts.size):
            s = slice(bounds[i], bounds[i + 1])
            trees.append(DecisionTree(arrays[f"{prefix}.feature"][s].astype(np.int64),
                                      arrays[f"{prefix}.threshold"][s],
                                      arrays[f"{prefix}.left"][s].astype(np.int64),
                                      arrays[f"{prefix}.right"][s].astype(np.int64),
                                      arrays[f"{prefix}.value"][s]))
        if len(trees) != meta["n_estimators"]:
            raise CorruptionError(f"{prefix} forest declares {meta['n_estimators']} trees, "
                                  f"found {len(trees)}", meta["n_estimators"], len(trees))
        if meta["n_features"] != n_comp:
            raise CorruptionError(f"{prefix} forest expects {meta['n_features']} features, "
                                  f"model uses {n_comp}", n_comp, meta["n_features"])
        model = RandomForestModel(tuple(trees), int(meta["n_estimators"]),
                                  int(meta["min_samples_split"]), int(meta["rng_seed"]),
                                  int(meta["n_classes"]), int(meta["n_features"]))
    return ParameterClassifier(meta["target"], classes, model)


def model_from_bytes(buf):
    from .pipeline import TrainedAttack

    header, base = _read_prefix(buf, MODEL_MAGIC, "model")
    try:
        arrays = _arrays(header, buf, base)
        n_comp = int(header["chosen"]["n_comp"])
        ex = header["extractor"]
        if ex["kind"] == "pca":
            comps = arrays["pca.components"]
            mean = arrays["pca.mean"]
            if comps.ndim != 2 or comps.shape[1] != mean.shape[0]:
                raise CorruptionError("PCA components do not match the mean vector length",
                                      mean.shape[0], comps.shape[-1])
            extractor = PcaModel(mean, comps, arrays["pca.explained_variance"])
        else:
            extractor = FeatureBank(tuple(ex["feature_names"]), tuple(ex["selected_indices"]),
                                    arrays.get("bank.scores"), arrays.get("bank.center"),
                                    arrays.get("bank.scale"))
        clfs = {t: _load_clf(header["classifiers"][t], arrays, t, n_comp)
                for t in ("folding", "quantization")}
        p = header["preprocess"]
        cs = header["config_space"]
        return TrainedAttack(extractor, header["feature_path"], clfs["folding"],
                             clfs["quantization"], header["chosen"],
                             PreprocessConfig(p["window_samples"], p["loading_samples"],
                                              p["n_average"]),
                             ConfigSpace(tuple(cs["foldings"]), tuple(cs["quantizations"])),
                             header.get("tuning_report", []), header.get("validation", {}),
                             header.get("timing", {}), header.get("audit", {}))
    except KeyError as e:
        raise CorruptionError(f"model file is missing entry {e}") from e


def load_model(path):
    return model_from_bytes(_read_bytes(path))


# --------------------------------------------------------------------------- CSV

def _csv_bytes(header, rows) -> bytes:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue().encode("utf-8")


def pca_scatter_rows(trained, ds: TraceDataset):
    if trained.feature_path != "pca":
        raise UnsupportedOperation("PCA scatter export needs a model trained on the PCA path")
    if trained.extractor.n_comp_max < 3:
        raise UnsupportedOperation("PCA scatter export needs at least 3 fitted components")
    if not ds.traces:
        return []
    processed = preprocess_dataset(ds, trained.preprocess_cfg)
    if not processed.traces:
        return []
    pcs = trained.extractor.transform(processed.matrix(), 3)
    return [[repr(float(p[0])), repr(float(p[1])), repr(float(p[2])),
             lt.label.folding, lt.label.quantization, s]
            for p, lt, s in zip(pcs, processed.traces, processed.split)]


def export_pca_scatter(trained, ds: TraceDataset, path):
    rows = pca_scatter_rows(trained, ds)
    header = ["pc1", "pc2", "pc3", "folding", "quantization", "split"]
    atomic_write(path, _csv_bytes(header, rows))


def report_rows(report, trained=None, attack_timing=None, timing=True):
    """Accuracy matrix rows, then wall-clock rows unless ``timing`` is False."""
    rows = []
    if trained is not None:
        rows.append(["meta", "classifier", "", "", "", trained.classifier_kind])
        rows.append(["meta", "features", "", "", "", trained.feature_path])
        rows.append(["meta", "n_average", "", "", "", trained.preprocess_cfg.n_average])
        rows.append(["meta", "n_comp", "", "", "", trained.n_comp])
    for target, table in (("quantization", report.quantization_accuracy),
                          ("folding", report.folding_accuracy),
                          ("joint", report.joint_accuracy)):
        for c in report.configs:
            rows.append(["accuracy", target, c.folding, c.quantization, report.counts[c],
                         f"{table[c]:.6f}"])
    n = sum(report.counts.values())
    rows.append(["accuracy", "overall", "", "", n, f"{report.overall:.6f}"])
    if not timing:
        return rows
    timings = []
    if trained is not None and trained.timing:
        timings.append(("timing_preparation", trained.timing))
    timings.append(("timing_evaluation", report.timing))
    if attack_timing is not None:
        timings.append(("timing_attack_1trace", attack_timing))
    for section, t in timings:
        for stage, secs in t.items():
            rows.append([section, stage, "", "", "", f"{secs:.6f}"])
    return rows


def write_report_csv(report, path, trained=None, attack_timing=None, timing=True):
    header = ["section", "key", "folding", "quantization", "count", "value"]
    atomic_write(path, _csv_bytes(header, report_rows(report, trained, attack_timing, timing)))
