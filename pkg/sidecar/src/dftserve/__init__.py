"""dftserve: HTTP sidecar exposing causal and masked LMs for token scoring,
next-token distributions, candidate probabilities, embeddings and generation."""

__version__ = "0.1.0"
