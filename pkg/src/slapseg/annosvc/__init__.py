"""Two-stage human annotation-correction service."""

from .app import create_app
from .store import (
    AnnotationStore,
    BoxEdit,
    ConflictError,
    Correction,
    NotFoundError,
    Proposal,
    StoreError,
    TaskState,
    ValidationError,
)

__all__ = [
    "AnnotationStore",
    "BoxEdit",
    "ConflictError",
    "Correction",
    "NotFoundError",
    "Proposal",
    "StoreError",
    "TaskState",
    "ValidationError",
    "create_app",
]
