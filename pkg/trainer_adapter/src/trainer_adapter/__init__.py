"""Trainer-side bridge for segment-selective SFT.

Exports per-token integrated-gradient dumps from real causal LMs and
turns mask files into training-ready datasets. Everything speaks the
toolkit's NDJSON file formats; nothing here recomputes segment selection.
"""

__version__ = "0.1.0"

from .export import ExportJob, export_igs
from .dataset import emit_masked_dataset, verify_masked_dataset
from .tokenizers import ByteVocabTokenizer, load_tokenizer

__all__ = [
    "ExportJob",
    "export_igs",
    "emit_masked_dataset",
    "verify_masked_dataset",
    "ByteVocabTokenizer",
    "load_tokenizer",
    "__version__",
]
