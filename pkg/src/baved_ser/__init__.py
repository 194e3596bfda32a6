"""Emotion-level recognition on the BAVED Arabic speech corpus.

Frozen self-supervised speech backbones (wav2vec2 / HuBERT) act as feature
extractors; small trainable heads (MLP, Bi-LSTM) predict the 3-level emotion
label; metrics and plots are emitted as machine-readable artifacts.
"""

__version__ = "0.1.0"
