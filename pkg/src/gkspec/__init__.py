"""Executable models of untrusted OS services: validator, mock and fuzzer from one spec."""

from .errors import GkError, IagoViolation, ModelUnsat
from .model import Model, load_bundled, load_model, load_model_file, resolve_model
from .validator import ValidatorSession, init_session, invoke, replay
from .mock import MockSession, mock_invoke
from .fuzz import FuzzPlan, generate_malicious, run_campaign
from .harness import load_script, load_suite, run_suite

__version__ = "0.1.0"

__all__ = [
    "GkError", "IagoViolation", "ModelUnsat", "Model", "load_bundled", "load_model",
    "load_model_file", "resolve_model", "ValidatorSession", "init_session", "invoke", "replay",
    "MockSession", "mock_invoke", "FuzzPlan", "generate_malicious", "run_campaign",
    "load_script", "load_suite", "run_suite",
]
