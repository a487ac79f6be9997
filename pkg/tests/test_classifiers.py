import numpy as np
import pytest

from dataflow_sca.classifiers import encode, fit_parameter_classifier
from dataflow_sca.errors import InvalidArgument


@pytest.mark.parametrize("kind,params", [("knn", {"k": 3}),
                                          ("rf", {"n_estimators": 10, "min_samples_split": 2})])
def test_emits_only_target_values(kind, params):
    rng = np.random.default_rng(0)
    values = np.tile([1, 2, 4, 8], 10)
    X = rng.normal(size=(40, 3)) + values[:, None]
    clf = fit_parameter_classifier("folding", (1, 2, 4, 8), kind, X, values, params)
    pred = clf.predict(rng.normal(size=(50, 3)) * 5)
    assert set(pred) <= {1, 2, 4, 8}
    ids, conf = clf.predict_with_confidence(X)
    assert np.all((conf > 0) & (conf <= 1))
    assert clf.predict(X[0]) in (1, 2, 4, 8)
    assert clf.kind == kind


def test_encode_and_errors():
    assert list(encode([6, 4, 6], (4, 6))) == [1, 0, 1]
    with pytest.raises(InvalidArgument):
        encode([5], (4, 6))
    with pytest.raises(InvalidArgument):
        fit_parameter_classifier("bits", (4, 6), "knn", np.zeros((2, 1)), [4, 6], {"k": 1})
    with pytest.raises(InvalidArgument):
        fit_parameter_classifier("quantization", (4, 6), "svm", np.zeros((2, 1)), [4, 6], {})
