"""Universal-imputation forecasting with fully conditional specification."""

__version__ = "0.1.0"
