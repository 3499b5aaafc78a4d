"""Prompting, model backends and structured-reply parsing."""

from .backends import GenerationRequest, OllamaBackend, TextBackend, TranscriptBackend, backend_from_url
from .gateway import InferredEnvironment, ModelGateway, StructuredReply
from .stubs import DeterministicStub, ScriptedStub, StochasticStub
from .templates import TEMPLATES, PromptTemplate, render

__all__ = [
    "GenerationRequest", "OllamaBackend", "TextBackend", "TranscriptBackend", "backend_from_url",
    "InferredEnvironment", "ModelGateway", "StructuredReply",
    "DeterministicStub", "ScriptedStub", "StochasticStub",
    "TEMPLATES", "PromptTemplate", "render",
]
