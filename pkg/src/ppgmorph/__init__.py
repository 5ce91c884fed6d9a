"""PPG morphology toolkit: preprocessing, beat templates, fiducial points,
features and shallow age models, with a synthetic cohort for ground truth."""

__version__ = "0.1.0"
