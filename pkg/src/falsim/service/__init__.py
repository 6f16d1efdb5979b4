"""HTTP service wrapping the simulation library.

All request payloads are self-contained: referenced files travel inline in
a path -> text map, so the service never touches server-side storage.
"""

from .app import app, create_app

__all__ = ["app", "create_app"]
