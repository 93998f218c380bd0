"""Classifier and regressor banks with uniform fit/predict operations."""

from .classifiers import (
    CLASSIFIER_KINDS,
    ClassifierModel,
    ClassifierSpec,
    fit_classifier,
    predict_classifier,
)
from .regressors import (
    REGRESSOR_KINDS,
    RegressorModel,
    RegressorSpec,
    coefficients,
    fit_regressor,
    intercept,
    predict_regressor,
)

__all__ = [
    "CLASSIFIER_KINDS",
    "REGRESSOR_KINDS",
    "ClassifierSpec",
    "ClassifierModel",
    "RegressorSpec",
    "RegressorModel",
    "fit_classifier",
    "predict_classifier",
    "fit_regressor",
    "predict_regressor",
    "coefficients",
    "intercept",
]
