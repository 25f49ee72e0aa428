"""TCFA classification of IVUS frames from plaque-region intensity histograms.

Subpackages cover image I/O and segmentation (:mod:`tcfa.imaging`), feature
extraction and chi-square ranking, three feature-based classifiers, a small
numpy CNN, ROC evaluation, and a synthetic phantom generator.
"""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
