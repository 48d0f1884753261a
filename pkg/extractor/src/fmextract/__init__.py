"""Batch producer of KLDF feature files from frozen foundation models."""
from .backends import ImagePreprocessor, TextBackend, VisionBackend, load_backend
from .kldf import encode_kldf, write_kldf, write_manifest
from .runner import ExtractionResult, extract
from .spec import ExtractionError, ExtractionSpec, load_spec

__version__ = "0.1.0"

__all__ = [
    "ExtractionSpec",
    "ExtractionError",
    "ExtractionResult",
    "load_spec",
    "extract",
    "load_backend",
    "TextBackend",
    "VisionBackend",
    "ImagePreprocessor",
    "encode_kldf",
    "write_kldf",
    "write_manifest",
    "__version__",
]
