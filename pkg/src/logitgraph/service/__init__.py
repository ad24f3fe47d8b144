"""HTTP service wrapping the core package (see app.py for routes)."""

from .app import app, create_app

__all__ = ["app", "create_app"]
