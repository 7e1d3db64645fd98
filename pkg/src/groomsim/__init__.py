"""Social grooming simulation under strength-dependent costs, with the
estimators used to analyse tie-strength logs and to calibrate the model."""

__version__ = "0.1.0"
