"""Quality-aware curation of segmentation training data.

Two gates decide which new samples enter a retraining pool: a BRISQUE
quality threshold and an SVM over spatially pooled bottleneck features.
"""

__version__ = "0.1.0"
