"""Class-aware dense object descriptors.

Self-contained pipeline: synthetic multi-view capture, pixel correspondence
supervision, a dense descriptor network with contrastive losses, a sequence
similarity graph with random-walker sampling, hard/soft class-aware training
variants, evaluation metrics, a CLI, and a read-only inference service.
"""

__version__ = "0.1.0"
