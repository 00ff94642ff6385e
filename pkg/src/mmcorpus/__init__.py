"""Batch pipeline turning raw web-crawl archives into a filtered,
deduplicated, decontaminated corpus of interleaved text-image documents
sharded per language, with built-in corpus metrology."""

__version__ = "0.1.0"
