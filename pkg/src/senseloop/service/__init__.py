"""HTTP session service: FastAPI app, durable event store, session manager."""

from .app import create_app, load_service_config

__all__ = ["create_app", "load_service_config"]
