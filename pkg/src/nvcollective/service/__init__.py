"""HTTP service exposing validation, runs and the quick analytic endpoints."""

from .app import create_app

__all__ = ["create_app"]
