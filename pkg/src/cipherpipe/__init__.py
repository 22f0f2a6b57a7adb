"""Unsupervised decipherment of substitution-cipher manuscript images.

The pipeline turns a scanned page into plaintext in three stages:
segmentation (pages -> character cells), transcription (cells -> cluster
IDs via feature extraction and GMM clustering), and decipherment
(cluster IDs -> plaintext via a noisy-channel model trained with EM).
A joint two-stage variant (LM-GMM) skips the hard transcription step.
"""

__version__ = "0.1.0"
