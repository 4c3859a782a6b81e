"""Bimanual hand-motion modeling: data generation and curation, a
part/modality-decomposed motion tokenizer, an interleaved token codec,
a small sequence-to-sequence model for text<->motion, and evaluation."""

__version__ = "0.1.0"
