"""Early-warning models for at-risk students from course event logs.

The package turns raw LMS clickstreams into weekly engagement and
performance features, trains regularized linear and tree-ensemble
classifiers under cross-validated hyperparameter search, recalibrates
their probabilities, and evaluates how models carry over to other
courses.  A deterministic synthetic-cohort generator and a CLI wrap the
whole pipeline.  Submodules:

* ``trace``       — event log parsing, sessions, weeks, deadline windows
* ``features``    — weekly feature matrices and collinearity screening
* ``aggregate``   — progressive and early-reset week aggregation
* ``learners``    — elastic net, probability forest, gradient boosting
* ``metrics``     — AUC, thresholds, confusion metrics, fold plans
* ``tuning``      — cross-validated grid search
* ``calibration`` — logistic recalibration and reliability curves
* ``synthgen``    — synthetic cohort generator
* ``transfer``    — experiment orchestration and result tables
* ``cli``         — the ``earlywarn`` command
"""

__version__ = "0.1.0"

__all__ = ["__version__"]
