"""Two-stage SAR/optical land-cover classification and template VQA toolkit."""

__version__ = "0.1.0"
