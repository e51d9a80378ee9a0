"""Threshold-based ascent-descent training objectives and their tooling.

The package implements flooding, per-example flooding, and a smoothed
ascent-descent objective for small classifiers, together with
sharpness-aware update rules, the stochastic optimizers used to analyse
them, synthetic dataset generators, an experiment harness, and a
verification command that re-derives the package's numerical claims.
"""

__version__ = "0.1.0"

from .datasets import SyntheticSpec
from .objectives import ObjectiveSpec

__all__ = ["AscentDescentClassifier", "ObjectiveSpec", "SyntheticSpec"]


def __getattr__(name):
    # the estimator pulls in scikit-learn; import it on first use so the
    # command line stays quick to start
    if name == "AscentDescentClassifier":
        from .estimator import AscentDescentClassifier

        return AscentDescentClassifier
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
