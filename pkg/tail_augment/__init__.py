"""
tail-augment: Pairwise relation augmentation for long-tailed multi-label text classification.
"""
__version__ = "0.1.0"
