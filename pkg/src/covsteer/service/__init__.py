"""HTTP service layer: pydantic schemas, handlers, FastAPI app factory."""

from . import handlers, schemas  # noqa: F401
