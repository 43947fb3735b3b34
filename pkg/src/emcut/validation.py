"""Input validation helpers shared by the estimators."""

import numpy as np
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted


def check_dataset(data):
    from .tomography import ConditionalDataset, TomographyError

    if not isinstance(data, ConditionalDataset):
        raise TypeError(f"expected a ConditionalDataset, got {type(data).__name__}")
    if not data.mask.any():
        raise TomographyError("dataset has no included settings")
    if not data.exact:
        totals = data.counts.sum(axis=(2, 3))[data.mask]
        if not np.allclose(totals, data.shots):
            raise TomographyError("counts of an included setting do not sum to the shot count")
    return data


def check_fitted(estimator, attributes=("result_",)):
    try:
        check_is_fitted(estimator, list(attributes))
    except NotFittedError:
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first"
        ) from None


def check_probability_vector(p, name="probabilities"):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{name} contains non-finite entries")
    return p
