"""Runner shim: executes generated pycsp3 constraint models under a
wall-clock limit and reports a normalized verdict over a one-shot
JSON-on-stdin / JSON-on-stdout protocol."""

from .shim import DEFAULT_TIME_CAP_S, execute, handle_request

__version__ = "0.1.0"

__all__ = ["DEFAULT_TIME_CAP_S", "execute", "handle_request"]
