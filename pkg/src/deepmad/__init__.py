"""Deep morph detection with handcrafted features.

LBP histograms and radial Fourier spectra feed a two-class LDA; detectors
are evaluated with AUC/EER under intra- and cross-dataset protocols and can
be combined by logistic score-level fusion.
"""

from deepmad.image import GrayImage, load_image, resize_bilinear
from deepmad.lbp import LbpConfig, enumerate_configs, lbp_histogram
from deepmad.spectral import fourier_features, magnitude_spectrum, radial_profile
from deepmad.models import (
    FusionModel,
    LdaModel,
    fuse_score,
    lda_score,
    lda_train,
    logreg_train,
)
from deepmad.metrics import ScoreSet, auc, eer, roc_points

__version__ = "0.1.0"

__all__ = [
    "GrayImage",
    "load_image",
    "resize_bilinear",
    "LbpConfig",
    "enumerate_configs",
    "lbp_histogram",
    "fourier_features",
    "magnitude_spectrum",
    "radial_profile",
    "LdaModel",
    "FusionModel",
    "lda_train",
    "lda_score",
    "logreg_train",
    "fuse_score",
    "ScoreSet",
    "auc",
    "eer",
    "roc_points",
]
