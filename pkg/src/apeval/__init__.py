"""Evaluation harness for authorship obfuscation, mimicking and verification."""

from .corpus import Context, Corpus, Document, build_context, load_corpus
from .providers import GenerationCache, ProviderHandle, generate, make_mock_provider
from .stylometrics import MetricEngine, MetricReport

__all__ = [
    "Context", "Corpus", "Document", "GenerationCache", "MetricEngine", "MetricReport",
    "ProviderHandle", "build_context", "generate", "load_corpus", "make_mock_provider",
]
__version__ = "0.1.0"
