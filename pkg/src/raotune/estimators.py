"""scikit-learn compatible wrappers.

``MatrixFeaturizer`` turns matrices into feature rows, ``FuzzyOrderingSelector``
maps feature rows to ordering parameters, and ``TunedLUSolver`` runs the whole
pipeline on one matrix. They compose with ``sklearn.pipeline.Pipeline``::

    pipe = make_pipeline(MatrixFeaturizer(), FuzzyOrderingSelector())
    pipe.fit(matrices, best_params)
    pipe.predict(new_matrices)
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import as_sparse_matrix, check_matrices, check_square
from .fuzzy import DEFAULT_RULES, decide, fit_rule_base, grade_all, load_rule_base
from .lu import lu_factorize, solve
from .ordering import OrderingParam, order
from .sparse import extract_features

__all__ = ["MatrixFeaturizer", "FuzzyOrderingSelector", "TunedLUSolver"]

FEATURE_NAMES = ("density_percent", "n", "nnz", "avg_diag_distance")


class MatrixFeaturizer(TransformerMixin, BaseEstimator):
    """Feature rows ``[density_percent, n, nnz, avg_diag_distance]`` for square matrices.

    Accepts a sequence of ``SparseMatrix``, scipy sparse or dense arrays.
    The last column is NaN when ``with_diag_distance`` is False.
    """

    def __init__(self, with_diag_distance=True):
        self.with_diag_distance = with_diag_distance

    def fit(self, X, y=None):
        check_matrices(X)
        self.n_features_out_ = len(FEATURE_NAMES)
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_out_")
        rows = []
        for m in check_matrices(X):
            f = extract_features(m, self.with_diag_distance)
            rows.append([f.density_percent, f.n, f.nnz,
                         np.nan if f.avg_diag_distance is None else f.avg_diag_distance])
        return np.asarray(rows, dtype=np.float64).reshape(-1, len(FEATURE_NAMES))

    def get_feature_names_out(self, input_features=None):
        return np.asarray(FEATURE_NAMES, dtype=object)


class FuzzyOrderingSelector(ClassifierMixin, BaseEstimator):
    """Pick an ordering parameter from the density in column 0 of ``X``.

    Parameters
    ----------
    rules : str or None
        Rule-base config text used when ``fit`` is called without labels.
        None means the shipped default rule base.
    n_buckets : int or None
        Density buckets used when fitting from labels; None gives one bucket
        per distinct density.
    overlap : float
        Trapezoid overlap into neighbouring runs, as a fraction of their width.

    With labels, ``fit`` builds a rule base whose runs minimise the number
    of misclassified samples.
    """

    def __init__(self, rules=None, n_buckets=6, overlap=0.2):
        self.rules = rules
        self.n_buckets = n_buckets
        self.overlap = overlap

    def _densities(self, X):
        X = check_array(X, ensure_all_finite="allow-nan")
        d = X[:, 0]
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValueError("density column must be finite and non-negative")
        return d

    def fit(self, X, y=None):
        d = self._densities(X)
        self.n_features_in_ = np.asarray(X).shape[1]
        if y is None:
            self.rule_base_ = load_rule_base(DEFAULT_RULES if self.rules is None else self.rules)
        else:
            labels = [OrderingParam.parse(str(v)) for v in np.asarray(y).ravel()]
            if len(labels) != d.size:
                raise ValueError("X and y have different lengths")
            costs = [{p: 0.0 if p is lab else 1.0 for p in OrderingParam} for lab in labels]
            self.rule_base_ = fit_rule_base(d.tolist(), costs, self.n_buckets, self.overlap)
        self.classes_ = np.asarray([p.value for p in OrderingParam], dtype=object)
        return self

    def decision_function(self, X):
        """Membership grades, one column per entry of ``classes_``."""
        check_is_fitted(self, "rule_base_")
        d = self._densities(X)
        return np.asarray([[grade_all(self.rule_base_, x)[p] for p in OrderingParam]
                           for x in d.tolist()]).reshape(-1, len(OrderingParam))

    def predict(self, X):
        check_is_fitted(self, "rule_base_")
        d = self._densities(X)
        return np.asarray([decide(self.rule_base_, x).chosen.value for x in d.tolist()],
                          dtype=object)


class TunedLUSolver(BaseEstimator):
    """Sparse LU whose ordering is chosen per matrix.

    ``ordering="auto"`` asks the fuzzy rule base (``rules`` text, default
    rules when None); any ordering parameter name fixes it instead.
    ``fit`` factors the matrix, ``solve`` (alias ``predict``) solves for a
    right-hand side.
    """

    def __init__(self, ordering="auto", rules=None, pivot_threshold=1.0):
        self.ordering = ordering
        self.rules = rules
        self.pivot_threshold = pivot_threshold

    def fit(self, A, y=None):
        A = check_square(as_sparse_matrix(A))
        if self.ordering == "auto":
            rb = load_rule_base(DEFAULT_RULES if self.rules is None else self.rules)
            self.decision_ = decide(rb, extract_features(A))
            param = self.decision_.chosen
        else:
            param = OrderingParam.parse(self.ordering)
            self.decision_ = None
        self.ordering_ = param
        self.factors_, self.stats_ = lu_factorize(A, order(A, param), self.pivot_threshold)
        return self

    def solve(self, b):
        check_is_fitted(self, "factors_")
        return solve(self.factors_, b)

    predict = solve
