"""FastAPI service layer."""

from .app import app, create_app
from .runner import run_eval, run_explain

__all__ = ["app", "create_app", "run_eval", "run_explain"]
